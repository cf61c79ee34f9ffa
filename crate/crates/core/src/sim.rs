//! The deterministic event loop tying the pipeline, placement, devices, and
//! DMA together, and the report it emits at quiescence.
//!
//! One simulation is one strictly single-threaded loop over a queue ordered
//! by (time, insertion sequence). Arrivals tie-break ahead of same-cycle
//! internal events. Data effects bind at device service-start instants;
//! block exchanges land atomically at their completion instants.

use crate::allocator::{AllocError, FramePool};
use crate::config::SimConfig;
use crate::dma::{self, BlockStart, DmaEngine, JobId, SwapError};
use crate::mem::HybridMemory;
use crate::model::{synth_payload, Cycles, Device, Op, Response, SubRequest, Tag};
use crate::pipeline::{Pipeline, PipelineFault};
use crate::placement::{PlacementError, PolicyEngine, RedirectionTable};
use crate::report::{DmaReport, LatencySummary, PlacementReport, Report, RunSummary};
use crate::telemetry::{energy, CounterSet, TelemetryEvent};
use crate::timing::TimingModel;
use crate::trace::{AllocDirective, SyntheticSpec, SyntheticTrace, TraceRecord};
use crate::util::{hex, SeqHashMap};
use sha2::{Digest, Sha256};
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("trace record {index}: {message}")]
    Record { index: u64, message: String },
    #[error(transparent)]
    Synthetic(#[from] crate::trace::SynthError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    /// An internal invariant broke; the run is aborted and not trustworthy.
    #[error("simulation fault: {0}")]
    Fault(String),
}

impl From<PipelineFault> for SimError {
    fn from(f: PipelineFault) -> SimError {
        SimError::Fault(f.to_string())
    }
}

impl From<SwapError> for SimError {
    fn from(f: SwapError) -> SimError {
        SimError::Fault(format!("dma: {f}"))
    }
}

impl From<PlacementError> for SimError {
    fn from(f: PlacementError) -> SimError {
        SimError::Fault(format!("placement: {f}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EvKind {
    ServiceStart(u64),
    Complete(u64),
    DmaBlockDone(JobId),
}

#[derive(Debug, PartialEq, Eq)]
struct Ev {
    time: Cycles,
    seq: u64,
    kind: EvKind,
}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct Binding {
    device: Device,
    offset: u64,
}

#[derive(Debug)]
struct SubInFlight {
    sub: SubRequest,
    /// Physical binding; set when the access is dispatched to a device.
    bound: Option<Binding>,
    /// Whether the access ever stalled on a swap (counted once).
    stalled: bool,
    payload: Option<Vec<u8>>,
    read_data: Option<Vec<u8>>,
    completion: Cycles,
}

/// Result of one run: the report plus, when requested, every released
/// response in order.
#[derive(Debug)]
pub struct SimOutput {
    pub report: Report,
    pub responses: Vec<Response>,
}

pub struct Simulator {
    cfg: SimConfig,
    table: RedirectionTable,
    policy: PolicyEngine,
    pipeline: Pipeline,
    timing: TimingModel,
    dma: DmaEngine,
    mem: HybridMemory,
    pool: FramePool,
    counters: CounterSet,
    events: BinaryHeap<Reverse<Ev>>,
    seq: u64,
    now: Cycles,
    subs: SeqHashMap<u64, SubInFlight>,
    next_sub: u64,
    arrivals: SeqHashMap<Tag, Cycles>,
    touched: BTreeSet<u64>,
    response_hash: Sha256,
    collected: Vec<Response>,
    collect_responses: bool,
    released: u64,
    next_release_tag: Tag,
    read_requests: u64,
    write_requests: u64,
    max_assembled_tag: Option<Tag>,
    completion_order_inversions: u64,
    record_index: u64,
    alloc_spilled_frames: u64,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Simulator {
        Simulator {
            table: RedirectionTable::new(&cfg),
            policy: PolicyEngine::new(&cfg),
            pipeline: Pipeline::new(cfg.page_size, cfg.posted_writes),
            timing: TimingModel::from_config(&cfg),
            dma: DmaEngine::new(cfg.page_size, cfg.dma_block, cfg.dma_buffer_blocks, cfg.dma_max_jobs),
            mem: HybridMemory::new(cfg.page_size),
            pool: FramePool::new(&cfg),
            counters: CounterSet::default(),
            events: BinaryHeap::new(),
            seq: 0,
            now: 0,
            subs: SeqHashMap::default(),
            next_sub: 0,
            arrivals: SeqHashMap::default(),
            touched: BTreeSet::new(),
            response_hash: Sha256::new(),
            collected: Vec::new(),
            collect_responses: false,
            released: 0,
            next_release_tag: 0,
            read_requests: 0,
            write_requests: 0,
            max_assembled_tag: None,
            completion_order_inversions: 0,
            record_index: 0,
            alloc_spilled_frames: 0,
            cfg,
        }
    }

    pub fn collect_responses(&mut self, yes: bool) {
        self.collect_responses = yes;
    }

    /// Applies workload alloc directives, seeding the redirection table, and
    /// returns the allocated host frames in allocation order.
    pub fn apply_allocs(&mut self, allocs: &[AllocDirective]) -> Result<Vec<u64>, SimError> {
        let mut frames = Vec::new();
        for d in allocs {
            let alloc = self.pool.alloc(d.bytes, d.hint, &mut self.table)?;
            self.alloc_spilled_frames += alloc.spilled_frames;
            frames.extend_from_slice(&alloc.frames);
        }
        Ok(frames)
    }

    fn push(&mut self, time: Cycles, kind: EvKind) {
        let seq = self.seq;
        self.seq += 1;
        self.events.push(Reverse(Ev { time, seq, kind }));
    }

    /// Drives the whole record stream to quiescence.
    pub fn run(&mut self, records: impl IntoIterator<Item = TraceRecord>) -> Result<(), SimError> {
        let mut records = records.into_iter();
        let mut next_arrival: Option<(TraceRecord, Cycles)> = records.next().map(|r| (r, 0));
        loop {
            let due_event = self.events.peek().map(|Reverse(e)| e.time);
            match (next_arrival, due_event) {
                (Some((rec, at)), Some(te)) if at <= te => {
                    self.advance(at)?;
                    self.ingest_record(rec, at)?;
                    next_arrival = records.next().map(|r| (r, at + rec.gap));
                }
                (Some((rec, at)), None) => {
                    self.advance(at)?;
                    self.ingest_record(rec, at)?;
                    next_arrival = records.next().map(|r| (r, at + rec.gap));
                }
                (_, Some(_)) => {
                    let Reverse(ev) = self.events.pop().unwrap();
                    self.advance(ev.time)?;
                    self.handle(ev)?;
                }
                (None, None) => break,
            }
        }
        self.check_quiescent()
    }

    fn advance(&mut self, to: Cycles) -> Result<(), SimError> {
        if to < self.now {
            return Err(SimError::Fault(format!(
                "clock moved backwards: {} -> {to}",
                self.now
            )));
        }
        self.now = to;
        Ok(())
    }

    fn ingest_record(&mut self, rec: TraceRecord, arrival: Cycles) -> Result<(), SimError> {
        let index = self.record_index;
        self.record_index += 1;
        let window_end = self.cfg.window_base + self.cfg.window_size();
        if rec.size == 0 || rec.addr < self.cfg.window_base || rec.addr + u64::from(rec.size) > window_end {
            return Err(SimError::Record {
                index,
                message: format!("address {:#x} size {} outside the window", rec.addr, rec.size),
            });
        }
        if u64::from(rec.size) > self.cfg.page_size {
            return Err(SimError::Record {
                index,
                message: format!("size {} exceeds the page size {}", rec.size, self.cfg.page_size),
            });
        }
        match rec.op {
            Op::Read => self.read_requests += 1,
            Op::Write => self.write_requests += 1,
        }
        let ingest = self.pipeline.ingest(rec.op, rec.addr, rec.size, arrival);
        self.arrivals.insert(ingest.tag, arrival);
        let mut payload = match rec.op {
            Op::Write => Some(synth_payload(self.cfg.seed, ingest.tag, rec.size)),
            Op::Read => None,
        };
        let single = ingest.subs.len() == 1;
        for sub in ingest.subs {
            let sub_payload = if single {
                payload.take()
            } else {
                payload.as_ref().map(|full| {
                    let at = sub.parent_offset as usize;
                    full[at..at + sub.size as usize].to_vec()
                })
            };
            self.route_sub(sub, sub_payload, arrival)?;
        }
        self.drain_released()?;
        Ok(())
    }

    fn route_sub(&mut self, sub: SubRequest, payload: Option<Vec<u8>>, now: Cycles) -> Result<(), SimError> {
        let host_page = self.cfg.host_page(sub.addr);
        self.touched.insert(host_page);
        let dma_ref = &self.dma;
        let busy = |p: u64| dma_ref.is_busy(p);
        let action = self.policy.on_access(&sub, &mut self.table, &busy, now)?;

        if let Some((hot, victim)) = action.migrate {
            self.counters.record(TelemetryEvent::SwapStarted);
            let started = self
                .dma
                .request_swap(hot, victim, &self.table, &mut self.timing, now)?;
            if let Some(BlockStart { job, done_at }) = started {
                self.push(done_at, EvKind::DmaBlockDone(job));
            }
        }

        let id = self.next_sub;
        self.next_sub += 1;
        self.subs.insert(
            id,
            SubInFlight {
                sub,
                bound: None,
                stalled: false,
                payload,
                read_data: None,
                completion: 0,
            },
        );
        self.dispatch_sub(id, now);
        Ok(())
    }

    /// Binds an access to its physical location and schedules device
    /// service, or parks it on the swap covering its page. Parked accesses
    /// come back here after every block exchange.
    fn dispatch_sub(&mut self, id: u64, now: Cycles) {
        let rec = &self.subs[&id];
        let addr = rec.sub.addr;
        let len = u64::from(rec.sub.size);
        let host_page = self.cfg.host_page(addr);
        let offset_in_page = (addr.0 - self.cfg.window_base) % self.cfg.page_size;

        let binding = match self.dma.job_for_page(host_page) {
            Some(job) => {
                // preserve same-page ordering behind anything already parked
                let decision = if job.has_parked(host_page) {
                    dma::ConflictDecision::StallUntilBlockDone
                } else {
                    dma::resolve_conflict(offset_in_page, len, self.dma.block_bytes(), job)
                };
                match decision {
                    dma::ConflictDecision::Source => Some(job.source_location(host_page)),
                    dma::ConflictDecision::Destination => Some(job.dest_location(host_page)),
                    dma::ConflictDecision::StallUntilBlockDone => None,
                }
            }
            None => {
                let route = self.table.lookup(addr).expect("routed pages are mapped");
                Some((route.device, route.offset / self.cfg.page_size))
            }
        };

        match binding {
            Some((device, device_page)) => {
                let bound = Binding {
                    device,
                    offset: device_page * self.cfg.page_size + offset_in_page,
                };
                self.subs.get_mut(&id).unwrap().bound = Some(bound);
                self.schedule_service(id, now);
            }
            None => {
                let rec = self.subs.get_mut(&id).unwrap();
                if !rec.stalled {
                    rec.stalled = true;
                    self.counters.record(TelemetryEvent::ConflictStall);
                }
                self.dma.park(host_page, id);
            }
        }
    }

    fn schedule_service(&mut self, id: u64, now: Cycles) {
        let rec = self.subs.get_mut(&id).expect("scheduling a live sub");
        let bound = rec.bound.expect("scheduled subs are bound");
        let issued = now + self.cfg.control_delay;
        let times = self.timing.device_mut(bound.device).service(rec.sub.op, issued);
        rec.completion = times.completion;
        self.push(times.start, EvKind::ServiceStart(id));
        self.push(times.completion, EvKind::Complete(id));
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev.kind {
            EvKind::ServiceStart(id) => self.on_service_start(id),
            EvKind::Complete(id) => self.on_complete(id),
            EvKind::DmaBlockDone(job) => self.on_block_done(job),
        }
    }

    fn on_service_start(&mut self, id: u64) -> Result<(), SimError> {
        let rec = self.subs.get_mut(&id).ok_or_else(|| SimError::Fault("service for unknown sub".into()))?;
        let size = rec.sub.size;
        let bound = rec.bound.expect("serviced subs are bound");
        match rec.sub.op {
            Op::Read => {
                let mut buf = vec![0u8; size as usize];
                self.mem.device(bound.device).read(bound.offset, &mut buf);
                rec.read_data = Some(buf);
            }
            Op::Write => {
                let payload = rec.payload.as_deref().expect("writes carry payload");
                self.mem.device_mut(bound.device).write(bound.offset, payload);
            }
        }
        self.counters.record(TelemetryEvent::DemandAccess {
            device: bound.device,
            op: rec.sub.op,
            bytes: u64::from(size),
        });
        Ok(())
    }

    fn on_complete(&mut self, id: u64) -> Result<(), SimError> {
        let mut rec = self
            .subs
            .remove(&id)
            .ok_or_else(|| SimError::Fault("completion for unknown sub".into()))?;
        self.counters.record(TelemetryEvent::DeviceCompletion {
            device: rec.bound.expect("completed subs are bound").device,
            latency: rec.completion - rec.sub.arrival,
        });
        let assembled = self.pipeline.complete(
            rec.sub.tag,
            rec.sub.index,
            rec.sub.parent_offset,
            rec.read_data.take(),
            rec.completion,
        )?;
        if assembled {
            if self.max_assembled_tag.is_some_and(|m| rec.sub.tag < m) {
                self.completion_order_inversions += 1;
            } else {
                self.max_assembled_tag = Some(rec.sub.tag);
            }
            self.counters.record(TelemetryEvent::ReorderDepth {
                depth: self.pipeline.reorder_len() as u64,
            });
        }
        self.drain_released()?;
        Ok(())
    }

    fn on_block_done(&mut self, job: JobId) -> Result<(), SimError> {
        let out = self
            .dma
            .step_block(job, self.now, &mut self.mem, &mut self.table, &mut self.timing);
        self.counters.record(TelemetryEvent::BlocksMoved { count: u64::from(out.blocks_moved) });
        for (device, read, _written) in out.device_traffic {
            self.counters.record(TelemetryEvent::DmaBlockExchange { device, bytes: read });
        }
        if out.committed.is_some() {
            self.counters.record(TelemetryEvent::SwapCompleted);
        }
        for token in out.released {
            if !self.subs.contains_key(&token) {
                return Err(SimError::Fault("parked sub vanished".into()));
            }
            self.dispatch_sub(token, self.now);
        }
        for BlockStart { job, done_at } in out.started {
            self.push(done_at, EvKind::DmaBlockDone(job));
        }
        Ok(())
    }

    fn drain_released(&mut self) -> Result<(), SimError> {
        for resp in self.pipeline.drain() {
            if resp.tag != self.next_release_tag {
                return Err(SimError::Fault(format!(
                    "release order broke: tag {} after {}",
                    resp.tag, self.next_release_tag
                )));
            }
            self.next_release_tag = resp.tag + 1;
            self.released += 1;
            let arrival = self.arrivals.remove(&resp.tag).expect("released tag was ingested");
            self.counters.record(TelemetryEvent::Released { latency: self.now - arrival });
            self.response_hash.update(resp.tag.to_le_bytes());
            self.response_hash.update([matches!(resp.op, Op::Write) as u8]);
            self.response_hash.update(resp.completion.to_le_bytes());
            match &resp.data {
                Some(d) => {
                    self.response_hash.update((d.len() as u64).to_le_bytes());
                    self.response_hash.update(d);
                }
                None => self.response_hash.update(0u64.to_le_bytes()),
            }
            if self.collect_responses {
                self.collected.push(resp);
            }
        }
        Ok(())
    }

    fn check_quiescent(&self) -> Result<(), SimError> {
        if self.pipeline.in_flight() != 0 {
            return Err(SimError::Fault(format!(
                "{} requests still in flight at end of run",
                self.pipeline.in_flight()
            )));
        }
        if self.dma.open_jobs() != 0 {
            return Err(SimError::Fault(format!(
                "{} swap jobs still open at end of run",
                self.dma.open_jobs()
            )));
        }
        if !self.subs.is_empty() {
            return Err(SimError::Fault(format!(
                "{} sub-requests never completed",
                self.subs.len()
            )));
        }
        Ok(())
    }

    /// Digest over every touched host page's final contents, in ascending
    /// host page order, resolved through the redirection table.
    fn final_memory_checksum(&self) -> String {
        let mut hash = Sha256::new();
        for &page in &self.touched {
            let (device, device_page) = self
                .table
                .entry(page)
                .expect("touched pages are mapped");
            hash.update(page.to_le_bytes());
            hash.update(self.mem.device(device).page_copy(device_page));
        }
        hex(&hash.finalize())
    }

    pub fn into_output(mut self) -> SimOutput {
        self.counters.reorder_buffer_highwater = self
            .counters
            .reorder_buffer_highwater
            .max(self.pipeline.reorder_highwater() as u64);
        let final_memory_sha256 = self.final_memory_checksum();
        let response_stream_sha256 = hex(&self.response_hash.clone().finalize());
        let energy_report = self
            .cfg
            .energy
            .as_ref()
            .map(|coeffs| crate::report::EnergyReport::from_estimate(&energy(&self.counters, coeffs)));
        let report = Report {
            run: RunSummary {
                cycles: self.now,
                simulated_ns: self.now as f64 * self.cfg.ns_per_cycle,
                requests: self.pipeline.issued(),
                responses: self.released,
                read_requests: self.read_requests,
                write_requests: self.write_requests,
                completion_order_inversions: self.completion_order_inversions,
            },
            dram: Report::device_report(&self.counters, Device::Dram),
            nvm: Report::device_report(&self.counters, Device::Nvm),
            release_latency: LatencySummary::from_histogram(&self.counters.release_latency),
            placement: PlacementReport {
                pages_mapped_dram: self.table.mapped_pages(Device::Dram),
                pages_mapped_nvm: self.table.mapped_pages(Device::Nvm),
                first_touch_dram: self.policy.first_touch[Device::Dram.index()],
                first_touch_nvm: self.policy.first_touch[Device::Nvm.index()],
                migrations_triggered: self.policy.migrations_triggered,
                swaps_started: self.counters.swaps_started,
                swaps_completed: self.counters.swaps_completed,
                alloc_spilled_frames: self.alloc_spilled_frames,
            },
            dma: DmaReport {
                blocks_moved: self.counters.dma_blocks_moved,
                stall_events: self.counters.stall_events,
                reorder_buffer_highwater: self.counters.reorder_buffer_highwater,
            },
            energy: energy_report,
            final_memory_sha256,
            response_stream_sha256,
            config: self.cfg,
        };
        SimOutput {
            report,
            responses: self.collected,
        }
    }

    pub fn counters(&self) -> &CounterSet {
        &self.counters
    }
}

fn validated(cfg: &SimConfig) -> Result<SimConfig, SimError> {
    crate::config::validate_config(cfg.clone()).map_err(|violations| {
        SimError::Config(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        )
    })
}

/// Runs a record stream against the config.
pub fn run_records(
    cfg: &SimConfig,
    records: impl IntoIterator<Item = TraceRecord>,
    collect_responses: bool,
) -> Result<SimOutput, SimError> {
    let mut sim = Simulator::new(validated(cfg)?);
    sim.collect_responses(collect_responses);
    sim.run(records)?;
    Ok(sim.into_output())
}

/// Runs a synthetic workload: alloc directives seed the frame pool and the
/// generated stream covers either the allocated frames or the requested
/// footprint from the window base.
pub fn run_synthetic(
    cfg: &SimConfig,
    spec: &SyntheticSpec,
    collect_responses: bool,
) -> Result<SimOutput, SimError> {
    let mut sim = Simulator::new(validated(cfg)?);
    sim.collect_responses(collect_responses);
    let gen = if spec.allocs.is_empty() {
        SyntheticTrace::new(cfg, spec, cfg.seed)?
    } else {
        if spec.footprint.is_some() {
            return Err(crate::trace::SynthError::BadParameter(
                "footprint is derived from alloc directives; drop the explicit key".into(),
            )
            .into());
        }
        let frames = sim.apply_allocs(&spec.allocs)?;
        SyntheticTrace::over_pages(cfg, spec, frames, cfg.seed)?
    };
    sim.run(gen)?;
    Ok(sim.into_output())
}
