//! Performance counters and the derived dynamic-energy estimate.
//!
//! Demand traffic (application requests) and DMA traffic (migration) are
//! tallied separately; device-port byte totals are the sum of both, which is
//! what a hardware counter at the memory controller would see.

use crate::config::EnergyCoeffs;
use crate::model::{Cycles, Device, Op};
use serde::Serialize;

pub const HISTOGRAM_BUCKETS: usize = 48;

/// Latency histogram over fixed log2 buckets: bucket `i` counts samples in
/// `[2^i, 2^(i+1))`, with bucket 0 also taking zero-cycle samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LatencyHistogram {
    pub buckets: Vec<u64>,
    pub count: u64,
    pub sum_cycles: u64,
    pub max_cycles: u64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        LatencyHistogram {
            buckets: vec![0; HISTOGRAM_BUCKETS],
            count: 0,
            sum_cycles: 0,
            max_cycles: 0,
        }
    }
}

impl LatencyHistogram {
    pub fn record(&mut self, latency: Cycles) {
        let bucket = if latency <= 1 {
            0
        } else {
            (63 - latency.leading_zeros()) as usize
        };
        self.buckets[bucket.min(HISTOGRAM_BUCKETS - 1)] += 1;
        self.count += 1;
        self.sum_cycles += latency;
        self.max_cycles = self.max_cycles.max(latency);
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_cycles as f64 / self.count as f64
        }
    }

    /// Upper bound of the bucket holding the q-quantile sample, clamped to
    /// the observed maximum.
    pub fn percentile(&self, q: f64) -> u64 {
        if self.count == 0 {
            return 0;
        }
        let rank = ((q * self.count as f64).ceil() as u64).clamp(1, self.count);
        let mut seen = 0;
        for (i, &n) in self.buckets.iter().enumerate() {
            seen += n;
            if seen >= rank {
                return (1u64 << (i + 1)).min(self.max_cycles);
            }
        }
        self.max_cycles
    }
}

/// Per-device transaction and byte counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DeviceCounters {
    pub read_txns: u64,
    pub write_txns: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
    /// Migration traffic through this device's port, kept apart from the
    /// demand columns above.
    pub dma_read_bytes: u64,
    pub dma_write_bytes: u64,
}

/// Every counter in the run. All fields are monotonically non-decreasing
/// while the simulation runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CounterSet {
    pub dram: DeviceCounters,
    pub nvm: DeviceCounters,
    pub dma_blocks_moved: u64,
    pub swaps_started: u64,
    pub swaps_completed: u64,
    pub stall_events: u64,
    pub reorder_buffer_highwater: u64,
    /// Release latency (arrival to in-order release) across all requests.
    pub release_latency: LatencyHistogram,
    /// Device-path latency (arrival to device completion) per device.
    pub device_latency: [LatencyHistogram; 2],
}

/// One countable occurrence.
#[derive(Debug, Clone, Copy)]
pub enum TelemetryEvent {
    /// A demand access serviced by a device.
    DemandAccess { device: Device, op: Op, bytes: u64 },
    /// One block leaving its source page during a swap step, counted per
    /// device port: the port both reads and writes `bytes` in an exchange.
    DmaBlockExchange { device: Device, bytes: u64 },
    BlocksMoved { count: u64 },
    SwapStarted,
    SwapCompleted,
    /// A request stalled on the block being exchanged.
    ConflictStall,
    ReorderDepth { depth: u64 },
    Released { latency: Cycles },
    DeviceCompletion { device: Device, latency: Cycles },
}

impl CounterSet {
    fn device_mut(&mut self, d: Device) -> &mut DeviceCounters {
        match d {
            Device::Dram => &mut self.dram,
            Device::Nvm => &mut self.nvm,
        }
    }

    pub fn device(&self, d: Device) -> &DeviceCounters {
        match d {
            Device::Dram => &self.dram,
            Device::Nvm => &self.nvm,
        }
    }

    /// Applies exactly the counters matching the event.
    pub fn record(&mut self, event: TelemetryEvent) {
        match event {
            TelemetryEvent::DemandAccess { device, op, bytes } => {
                let dev = self.device_mut(device);
                match op {
                    Op::Read => {
                        dev.read_txns += 1;
                        dev.read_bytes += bytes;
                    }
                    Op::Write => {
                        dev.write_txns += 1;
                        dev.write_bytes += bytes;
                    }
                }
            }
            TelemetryEvent::DmaBlockExchange { device, bytes } => {
                let dev = self.device_mut(device);
                dev.dma_read_bytes += bytes;
                dev.dma_write_bytes += bytes;
            }
            TelemetryEvent::BlocksMoved { count } => self.dma_blocks_moved += count,
            TelemetryEvent::SwapStarted => self.swaps_started += 1,
            TelemetryEvent::SwapCompleted => self.swaps_completed += 1,
            TelemetryEvent::ConflictStall => self.stall_events += 1,
            TelemetryEvent::ReorderDepth { depth } => {
                self.reorder_buffer_highwater = self.reorder_buffer_highwater.max(depth);
            }
            TelemetryEvent::Released { latency } => self.release_latency.record(latency),
            TelemetryEvent::DeviceCompletion { device, latency } => {
                self.device_latency[device.index()].record(latency);
            }
        }
    }

    /// Immutable value copy; later mutation of the live set cannot reach it.
    pub fn snapshot(&self) -> CounterSet {
        self.clone()
    }

    pub fn demand_read_bytes(&self) -> u64 {
        self.dram.read_bytes + self.nvm.read_bytes
    }

    pub fn demand_write_bytes(&self) -> u64 {
        self.dram.write_bytes + self.nvm.write_bytes
    }
}

/// Linear dynamic-energy model over byte counters, exact in integer pJ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnergyEstimate {
    pub dram_read_pj: u128,
    pub dram_write_pj: u128,
    pub nvm_read_pj: u128,
    pub nvm_write_pj: u128,
    pub total_pj: u128,
}

impl EnergyEstimate {
    pub fn total_nj(&self) -> f64 {
        self.total_pj as f64 / 1000.0
    }
}

/// total = Σ over devices of read_bytes × e_rd + write_bytes × e_wr, where
/// device-port bytes include DMA traffic. No rounding until display.
pub fn energy(counters: &CounterSet, coeffs: &EnergyCoeffs) -> EnergyEstimate {
    let port_bytes = |d: &DeviceCounters| {
        (
            u128::from(d.read_bytes) + u128::from(d.dma_read_bytes),
            u128::from(d.write_bytes) + u128::from(d.dma_write_bytes),
        )
    };
    let (dram_r, dram_w) = port_bytes(&counters.dram);
    let (nvm_r, nvm_w) = port_bytes(&counters.nvm);
    let dram_read_pj = dram_r * u128::from(coeffs.dram_read_pj_per_byte);
    let dram_write_pj = dram_w * u128::from(coeffs.dram_write_pj_per_byte);
    let nvm_read_pj = nvm_r * u128::from(coeffs.nvm_read_pj_per_byte);
    let nvm_write_pj = nvm_w * u128::from(coeffs.nvm_write_pj_per_byte);
    EnergyEstimate {
        dram_read_pj,
        dram_write_pj,
        nvm_read_pj,
        nvm_write_pj,
        total_pj: dram_read_pj + dram_write_pj + nvm_read_pj + nvm_write_pj,
    }
}

/// 1024-based human rendering, e.g. 4803395584 → "4.47 GiB".
pub fn human_bytes(bytes: u64) -> String {
    const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];
    if bytes < 1024 {
        return format!("{bytes} B");
    }
    let mut value = bytes as f64;
    let mut unit = 0;
    while value >= 1024.0 && unit < UNITS.len() - 1 {
        value /= 1024.0;
        unit += 1;
    }
    format!("{value:.2} {}", UNITS[unit])
}
