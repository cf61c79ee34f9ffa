//! Block-granular page-swap engine with mid-swap conflict redirection.
//!
//! A swap moves both pages in fixed-size blocks, one block exchange in
//! flight at a time per job, and keeps a progress cursor. Requests that
//! target a swapping page are redirected by that cursor: blocks behind it
//! live at the destination, blocks ahead of it still live at the source, and
//! a request for the block being exchanged right now waits for it.
//!
//! Each block exchange claims a service slot on both devices, exactly like
//! the demand requests it contends with. Because slot starts are FIFO in
//! call order, an exchange can never overtake a demand access that was
//! already routed to the source side of its block — the ordering a shared
//! memory-controller queue gives in hardware. Every request therefore
//! observes memory as if each block exchange were one atomic event at its
//! completion time.

use crate::mem::HybridMemory;
use crate::model::{Cycles, Device, Op};
use crate::placement::{DevicePage, RedirectionTable};
use crate::timing::TimingModel;
use crate::util::SeqHashMap;
use std::collections::VecDeque;
use thiserror::Error;

pub type JobId = u64;

/// Opaque handle for a parked (stalled) access; the caller maps it back to
/// its own in-flight bookkeeping when the block completes.
pub type ParkToken = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwapError {
    #[error("host page {0} already has a swap in progress")]
    SwapInProgress(u64),
    #[error("cannot swap host page {0} with itself")]
    SamePage(u64),
    #[error("host pages {0} and {1} are on the same device")]
    SameDevice(u64, u64),
    #[error("host page {0} is unmapped")]
    Unmapped(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapState {
    /// Registered but waiting for an engine slot.
    Queued,
    /// Owns an engine slot; blocks are being exchanged.
    Active,
    Done,
}

/// Where to send a request that conflicts with an in-flight swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictDecision {
    Source,
    Destination,
    StallUntilBlockDone,
}

/// An in-flight page exchange between the two devices.
#[derive(Debug)]
pub struct SwapJob {
    pub id: JobId,
    pub page_a: u64,
    pub page_b: u64,
    /// Device locations at job start; the commit exchanges the table entries.
    pub loc_a: DevicePage,
    pub loc_b: DevicePage,
    pub blocks: u32,
    /// Fully exchanged blocks. Blocks below the cursor are at their
    /// destination, blocks above are still at their source.
    pub progress: u32,
    pub state: SwapState,
    /// True while block `progress` is being exchanged.
    exchanging: bool,
    /// Accesses stalled on the swap, in arrival order, with the host page
    /// each belongs to.
    parked: VecDeque<(ParkToken, u64)>,
    parked_per_page: [u32; 2],
}

impl SwapJob {
    pub fn other_page(&self, host_page: u64) -> u64 {
        if host_page == self.page_a {
            self.page_b
        } else {
            self.page_a
        }
    }

    /// Current physical home of `host_page`'s not-yet-moved blocks.
    pub fn source_location(&self, host_page: u64) -> DevicePage {
        if host_page == self.page_a {
            self.loc_a
        } else {
            self.loc_b
        }
    }

    /// Physical location `host_page`'s blocks are moving to.
    pub fn dest_location(&self, host_page: u64) -> DevicePage {
        if host_page == self.page_a {
            self.loc_b
        } else {
            self.loc_a
        }
    }

    pub fn is_exchanging(&self) -> bool {
        self.exchanging
    }

    fn page_slot(&self, host_page: u64) -> usize {
        usize::from(host_page != self.page_a)
    }

    /// Whether any access on `host_page` is currently parked. Later accesses
    /// to the page must park behind it to keep same-address ordering.
    pub fn has_parked(&self, host_page: u64) -> bool {
        self.parked_per_page[self.page_slot(host_page)] > 0
    }
}

/// Routes a page-local access of `len` bytes against the job's progress
/// cursor. The whole range must be on one side to proceed: ranges entirely
/// behind the cursor live at the destination, ranges entirely ahead of the
/// in-flight block still live at the source, and anything touching the
/// in-flight block or straddling the cursor waits.
pub fn resolve_conflict(
    offset_in_page: u64,
    len: u64,
    block_bytes: u64,
    job: &SwapJob,
) -> ConflictDecision {
    debug_assert!(len >= 1);
    let first = (offset_in_page / block_bytes) as u32;
    let last = ((offset_in_page + len - 1) / block_bytes) as u32;
    debug_assert!(last < job.blocks);
    if last < job.progress {
        ConflictDecision::Destination
    } else if first > job.progress || (first == job.progress && !job.exchanging) {
        ConflictDecision::Source
    } else {
        ConflictDecision::StallUntilBlockDone
    }
}

/// A block exchange whose completion the caller must schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockStart {
    pub job: JobId,
    pub done_at: Cycles,
}

/// Result of completing one block exchange.
#[derive(Debug)]
pub struct StepOutcome {
    /// Parked accesses to dispatch to the destination device now, in order.
    pub released: Vec<ParkToken>,
    /// The next block exchange (this job's, or a dequeued job's first).
    pub started: Vec<BlockStart>,
    /// Set when the job finished and the table entries were exchanged.
    pub committed: Option<(u64, u64)>,
    /// Blocks leaving their source pages in this step: one out of each page.
    pub blocks_moved: u32,
    /// Per-device DMA port traffic for this step, read and written bytes.
    pub device_traffic: [(Device, u64, u64); 2],
}

#[derive(Debug)]
pub struct DmaEngine {
    block_bytes: u64,
    page_size: u64,
    /// At least two staging blocks let the two transfer directions overlap.
    double_buffered: bool,
    max_jobs: usize,
    jobs: SeqHashMap<JobId, SwapJob>,
    by_page: SeqHashMap<u64, JobId>,
    run_queue: VecDeque<JobId>,
    active: usize,
    next_id: JobId,
}

impl DmaEngine {
    pub fn new(page_size: u64, block_bytes: u64, buffer_blocks: u32, max_jobs: u32) -> DmaEngine {
        debug_assert!(page_size.is_multiple_of(block_bytes));
        DmaEngine {
            block_bytes,
            page_size,
            double_buffered: buffer_blocks >= 2,
            max_jobs: max_jobs.max(1) as usize,
            jobs: SeqHashMap::default(),
            by_page: SeqHashMap::default(),
            run_queue: VecDeque::new(),
            active: 0,
            next_id: 0,
        }
    }

    pub fn block_bytes(&self) -> u64 {
        self.block_bytes
    }

    pub fn is_busy(&self, host_page: u64) -> bool {
        self.by_page.contains_key(&host_page)
    }

    pub fn job_for_page(&self, host_page: u64) -> Option<&SwapJob> {
        self.by_page.get(&host_page).and_then(|id| self.jobs.get(id))
    }

    /// Jobs registered and not yet committed, including queued ones.
    pub fn open_jobs(&self) -> usize {
        self.jobs.len()
    }

    /// Registers a swap of two mapped host pages on different devices and
    /// begins its first block when an engine slot is free.
    pub fn request_swap(
        &mut self,
        page_a: u64,
        page_b: u64,
        table: &RedirectionTable,
        timing: &mut TimingModel,
        now: Cycles,
    ) -> Result<Option<BlockStart>, SwapError> {
        if page_a == page_b {
            return Err(SwapError::SamePage(page_a));
        }
        for p in [page_a, page_b] {
            if self.by_page.contains_key(&p) {
                return Err(SwapError::SwapInProgress(p));
            }
        }
        let loc_a = table.entry(page_a).ok_or(SwapError::Unmapped(page_a))?;
        let loc_b = table.entry(page_b).ok_or(SwapError::Unmapped(page_b))?;
        if loc_a.0 == loc_b.0 {
            return Err(SwapError::SameDevice(page_a, page_b));
        }
        let blocks = (self.page_size / self.block_bytes) as u32;
        let id = self.next_id;
        self.next_id += 1;
        self.jobs.insert(
            id,
            SwapJob {
                id,
                page_a,
                page_b,
                loc_a,
                loc_b,
                blocks,
                progress: 0,
                state: SwapState::Queued,
                exchanging: false,
                parked: VecDeque::new(),
                parked_per_page: [0, 0],
            },
        );
        self.by_page.insert(page_a, id);
        self.by_page.insert(page_b, id);
        if self.active < self.max_jobs {
            self.active += 1;
            Ok(Some(self.begin_block(id, now, timing)))
        } else {
            self.run_queue.push_back(id);
            Ok(None)
        }
    }

    /// Parks an access until the current block exchange completes. Every
    /// decision about it is re-made at that point.
    pub fn park(&mut self, host_page: u64, token: ParkToken) {
        let id = self.by_page[&host_page];
        let job = self.jobs.get_mut(&id).expect("job alive while page busy");
        debug_assert!(job.exchanging);
        let slot = job.page_slot(host_page);
        job.parked_per_page[slot] += 1;
        job.parked.push_back((token, host_page));
    }

    /// Claims a slot on both devices for the next block exchange. The
    /// exchange completes when the slower side finishes; both directions
    /// overlap through the staging buffer when it holds two blocks.
    fn begin_block(&mut self, job_id: JobId, now: Cycles, timing: &mut TimingModel) -> BlockStart {
        let job = self.jobs.get_mut(&job_id).unwrap();
        debug_assert!(!job.exchanging && job.progress < job.blocks);
        job.state = SwapState::Active;
        job.exchanging = true;
        let mut done_at = now;
        for dev in [job.loc_a.0, job.loc_b.0] {
            let state = timing.device_mut(dev);
            let lat = if self.double_buffered {
                state.latency(Op::Read).max(state.latency(Op::Write))
            } else {
                state.latency(Op::Read) + state.latency(Op::Write)
            };
            let busy_end = state.occupy(now, lat);
            done_at = done_at.max(busy_end);
        }
        BlockStart { job: job_id, done_at }
    }

    /// Completes the in-flight block exchange: block `progress` of both
    /// pages swaps through the staging buffer, the cursor advances, and on
    /// the final block the redirection entries are exchanged before any
    /// later-timestamped event can run.
    pub fn step_block(
        &mut self,
        job_id: JobId,
        now: Cycles,
        mem: &mut HybridMemory,
        table: &mut RedirectionTable,
        timing: &mut TimingModel,
    ) -> StepOutcome {
        let job = self.jobs.get_mut(&job_id).expect("step_block on live job");
        debug_assert!(job.exchanging);
        job.exchanging = false;
        let block = job.progress;
        let off = u64::from(block) * self.block_bytes;
        let a = (job.loc_a.0, job.loc_a.1 * self.page_size + off);
        let b = (job.loc_b.0, job.loc_b.1 * self.page_size + off);
        mem.exchange(a, b, self.block_bytes as usize);
        job.progress += 1;

        job.parked_per_page = [0, 0];
        let mut outcome = StepOutcome {
            released: job.parked.drain(..).map(|(token, _)| token).collect(),
            started: Vec::new(),
            committed: None,
            blocks_moved: 2,
            device_traffic: [
                (job.loc_a.0, self.block_bytes, self.block_bytes),
                (job.loc_b.0, self.block_bytes, self.block_bytes),
            ],
        };

        if job.progress == job.blocks {
            job.state = SwapState::Done;
            let (pa, pb) = (job.page_a, job.page_b);
            table.commit_swap(pa, pb).expect("swap pages stay mapped while busy");
            outcome.committed = Some((pa, pb));
            self.by_page.remove(&pa);
            self.by_page.remove(&pb);
            self.jobs.remove(&job_id);
            self.active -= 1;
            if let Some(next) = self.run_queue.pop_front() {
                self.active += 1;
                outcome.started.push(self.begin_block(next, now, timing));
            }
        } else {
            outcome.started.push(self.begin_block(job_id, now, timing));
        }
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::model::Device;

    fn setup(page_size: u64, block: u64) -> (RedirectionTable, HybridMemory, DmaEngine, TimingModel) {
        let cfg = SimConfig {
            window_base: 0,
            dram_capacity: 4 * page_size,
            nvm_capacity: 4 * page_size,
            page_size,
            dma_block: block,
            base_read_cycles: 20,
            base_write_cycles: 20,
            link_latency: 0,
            control_delay: 0,
            outstanding_slots: 1,
            dram_read_ns: 50,
            dram_write_ns: 50,
            nvm_read_ns: 50,
            nvm_write_ns: 50,
            ..SimConfig::default()
        };
        let table = RedirectionTable::new(&cfg);
        let mem = HybridMemory::new(page_size);
        let dma = DmaEngine::new(page_size, block, 2, 1);
        let timing = TimingModel::from_config(&cfg);
        (table, mem, dma, timing)
    }

    #[test]
    fn four_kb_pages_with_512b_blocks_give_eight_blocks() {
        let (mut table, _, mut dma, mut timing) = setup(4096, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Nvm);
        dma.request_swap(0, 1, &table, &mut timing, 0).unwrap();
        assert_eq!(dma.job_for_page(0).unwrap().blocks, 8);
    }

    #[test]
    fn swap_with_self_is_rejected() {
        let (mut table, _, mut dma, mut timing) = setup(4096, 512);
        table.map_first_touch(0, Device::Dram);
        assert_eq!(
            dma.request_swap(0, 0, &table, &mut timing, 0),
            Err(SwapError::SamePage(0))
        );
    }

    #[test]
    fn second_swap_on_same_page_is_rejected() {
        let (mut table, _, mut dma, mut timing) = setup(4096, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Nvm);
        table.map_first_touch(2, Device::Nvm);
        dma.request_swap(0, 1, &table, &mut timing, 0).unwrap();
        assert_eq!(
            dma.request_swap(0, 2, &table, &mut timing, 0),
            Err(SwapError::SwapInProgress(0))
        );
    }

    #[test]
    fn same_device_pages_are_rejected() {
        let (mut table, _, mut dma, mut timing) = setup(4096, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Dram);
        assert_eq!(
            dma.request_swap(0, 1, &table, &mut timing, 0),
            Err(SwapError::SameDevice(0, 1))
        );
    }

    #[test]
    fn progress_advances_and_commits_after_final_block() {
        let (mut table, mut mem, mut dma, mut timing) = setup(4096, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Nvm);
        let fill_a: Vec<u8> = (0..4096).map(|i| (i % 251) as u8).collect();
        let fill_b: Vec<u8> = (0..4096).map(|i| ((i % 241) + 7) as u8).collect();
        for blk in 0..8usize {
            mem.device_mut(Device::Dram).write(blk as u64 * 512, &fill_a[blk * 512..(blk + 1) * 512]);
            mem.device_mut(Device::Nvm).write(blk as u64 * 512, &fill_b[blk * 512..(blk + 1) * 512]);
        }
        let mut next = dma.request_swap(0, 1, &table, &mut timing, 0).unwrap();
        let mut steps = 0;
        while let Some(BlockStart { job, done_at }) = next {
            let out = dma.step_block(job, done_at, &mut mem, &mut table, &mut timing);
            steps += 1;
            if let Some(j) = dma.job_for_page(0) {
                // blocks below the cursor hold the other page's original data
                for k in 0..j.progress as usize {
                    let mut buf = vec![0u8; 512];
                    mem.device(Device::Dram).read(k as u64 * 512, &mut buf);
                    assert_eq!(buf, &fill_b[k * 512..(k + 1) * 512]);
                    mem.device(Device::Nvm).read(k as u64 * 512, &mut buf);
                    assert_eq!(buf, &fill_a[k * 512..(k + 1) * 512]);
                }
            }
            if out.committed.is_some() {
                assert_eq!(steps, 8);
                break;
            }
            next = out.started.first().copied();
        }
        assert_eq!(table.entry(0), Some((Device::Nvm, 0)));
        assert_eq!(table.entry(1), Some((Device::Dram, 0)));
        assert!(!dma.is_busy(0) && !dma.is_busy(1));
        // final images equal an atomic whole-page swap
        assert_eq!(mem.device(Device::Nvm).page_copy(0), fill_a);
        assert_eq!(mem.device(Device::Dram).page_copy(0), fill_b);
    }

    #[test]
    fn conflict_routing_follows_the_cursor() {
        let (mut table, mut mem, mut dma, mut timing) = setup(4096, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Nvm);
        let mut next = dma.request_swap(0, 1, &table, &mut timing, 0).unwrap().unwrap();
        // run three exchanges so progress = 3 with block 3 in flight
        for _ in 0..3 {
            let out = dma.step_block(next.job, next.done_at, &mut mem, &mut table, &mut timing);
            next = out.started[0];
        }
        let job = dma.job_for_page(0).unwrap();
        assert_eq!(job.progress, 3);
        assert!(job.is_exchanging());
        // block 0 (offset 0x100) already moved
        assert_eq!(resolve_conflict(0x100, 64, 512, job), ConflictDecision::Destination);
        // block 7 (offset 0xE00) untouched, block 3 in flight
        assert_eq!(resolve_conflict(0xE00, 64, 512, job), ConflictDecision::Source);
        // block 3 (offset 0x600) mid-exchange
        assert_eq!(
            resolve_conflict(0x600, 64, 512, job),
            ConflictDecision::StallUntilBlockDone
        );
        // ranges: entirely behind, entirely ahead, straddling the cursor
        assert_eq!(resolve_conflict(0, 1024, 512, job), ConflictDecision::Destination);
        assert_eq!(resolve_conflict(0x800, 2048, 512, job), ConflictDecision::Source);
        assert_eq!(
            resolve_conflict(0x400, 1024, 512, job),
            ConflictDecision::StallUntilBlockDone,
            "range covering moved and in-flight blocks must wait"
        );
        assert_eq!(
            resolve_conflict(0, 4096, 512, job),
            ConflictDecision::StallUntilBlockDone
        );
    }

    #[test]
    fn queued_job_starts_after_running_job_commits() {
        let (mut table, mut mem, mut dma, mut timing) = setup(1024, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Nvm);
        table.map_first_touch(2, Device::Dram);
        table.map_first_touch(3, Device::Nvm);
        let s0 = dma.request_swap(0, 1, &table, &mut timing, 0).unwrap().unwrap();
        assert_eq!(dma.request_swap(2, 3, &table, &mut timing, 0).unwrap(), None);
        assert!(dma.is_busy(2), "queued pages count as busy");
        assert_eq!(dma.job_for_page(2).unwrap().state, SwapState::Queued);
        let o1 = dma.step_block(s0.job, s0.done_at, &mut mem, &mut table, &mut timing);
        let o2 = dma.step_block(o1.started[0].job, o1.started[0].done_at, &mut mem, &mut table, &mut timing);
        assert!(o2.committed.is_some());
        assert_eq!(o2.started.len(), 1, "queued job begins when the slot frees");
        assert_eq!(o2.started[0].job, 1);
    }

    #[test]
    fn parked_accesses_release_in_arrival_order() {
        let (mut table, mut mem, mut dma, mut timing) = setup(1024, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Nvm);
        let s = dma.request_swap(0, 1, &table, &mut timing, 0).unwrap().unwrap();
        dma.park(0, 101);
        dma.park(1, 102);
        dma.park(0, 103);
        let out = dma.step_block(s.job, s.done_at, &mut mem, &mut table, &mut timing);
        assert_eq!(out.released, vec![101, 102, 103]);
    }

    #[test]
    fn exchange_occupies_both_device_slots() {
        let (mut table, _, mut dma, mut timing) = setup(1024, 512);
        table.map_first_touch(0, Device::Dram);
        table.map_first_touch(1, Device::Nvm);
        let s = dma.request_swap(0, 1, &table, &mut timing, 100).unwrap().unwrap();
        // single slot, 20-cycle latencies, double buffered: done at 100+20
        assert_eq!(s.done_at, 120);
        // a demand access issued later must queue behind the exchange
        let t = timing.device_mut(Device::Dram).service(Op::Read, 105);
        assert_eq!(t.start, 120);
    }
}
