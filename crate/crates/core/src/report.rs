//! The structured run report: stable field order, byte-identical across
//! reruns of the same (config, trace, seed).

use crate::config::SimConfig;
use crate::model::Device;
use crate::telemetry::{human_bytes, CounterSet, EnergyEstimate, LatencyHistogram};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_cycles: f64,
    pub p50_cycles: u64,
    pub p95_cycles: u64,
    pub p99_cycles: u64,
    pub max_cycles: u64,
}

impl LatencySummary {
    pub fn from_histogram(h: &LatencyHistogram) -> LatencySummary {
        LatencySummary {
            count: h.count,
            mean_cycles: h.mean(),
            p50_cycles: h.percentile(0.50),
            p95_cycles: h.percentile(0.95),
            p99_cycles: h.percentile(0.99),
            max_cycles: h.max_cycles,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviceReport {
    pub read_txns: u64,
    pub write_txns: u64,
    pub read_bytes: u64,
    pub read_bytes_human: String,
    pub write_bytes: u64,
    pub write_bytes_human: String,
    pub dma_read_bytes: u64,
    pub dma_write_bytes: u64,
    pub latency: LatencySummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub cycles: u64,
    pub simulated_ns: f64,
    pub requests: u64,
    pub responses: u64,
    pub read_requests: u64,
    pub write_requests: u64,
    /// Full-request completions that finished out of tag order at the
    /// devices (delivery stays in tag order regardless).
    pub completion_order_inversions: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlacementReport {
    pub pages_mapped_dram: u64,
    pub pages_mapped_nvm: u64,
    pub first_touch_dram: u64,
    pub first_touch_nvm: u64,
    pub migrations_triggered: u64,
    pub swaps_started: u64,
    pub swaps_completed: u64,
    /// Hinted allocations that could not be satisfied from their hinted
    /// region.
    pub alloc_spilled_frames: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DmaReport {
    pub blocks_moved: u64,
    pub stall_events: u64,
    pub reorder_buffer_highwater: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub dram_read_nj: f64,
    pub dram_write_nj: f64,
    pub nvm_read_nj: f64,
    pub nvm_write_nj: f64,
    pub total_pj: u128,
    pub total_nj: f64,
}

impl EnergyReport {
    pub fn from_estimate(e: &EnergyEstimate) -> EnergyReport {
        EnergyReport {
            dram_read_nj: e.dram_read_pj as f64 / 1000.0,
            dram_write_nj: e.dram_write_pj as f64 / 1000.0,
            nvm_read_nj: e.nvm_read_pj as f64 / 1000.0,
            nvm_write_nj: e.nvm_write_pj as f64 / 1000.0,
            total_pj: e.total_pj,
            total_nj: e.total_nj(),
        }
    }
}

/// Everything a run emits. Serialized with stable key order (declaration
/// order) so identical runs produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: SimConfig,
    pub run: RunSummary,
    pub dram: DeviceReport,
    pub nvm: DeviceReport,
    pub release_latency: LatencySummary,
    pub placement: PlacementReport,
    pub dma: DmaReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyReport>,
    pub final_memory_sha256: String,
    pub response_stream_sha256: String,
}

impl Report {
    pub fn device_report(counters: &CounterSet, device: Device) -> DeviceReport {
        let c = counters.device(device);
        DeviceReport {
            read_txns: c.read_txns,
            write_txns: c.write_txns,
            read_bytes: c.read_bytes,
            read_bytes_human: human_bytes(c.read_bytes),
            write_bytes: c.write_bytes,
            write_bytes_human: human_bytes(c.write_bytes),
            dma_read_bytes: c.dma_read_bytes,
            dma_write_bytes: c.dma_write_bytes,
            latency: LatencySummary::from_histogram(&counters.device_latency[device.index()]),
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}
