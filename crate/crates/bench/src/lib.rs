//! Benchmark workload builders shared by the criterion targets.

use hmemsim_core::config::PolicyKind;
use hmemsim_core::trace::{Locality, SyntheticSpec};
use hmemsim_core::SimConfig;

/// Static-policy machine with a footprint spanning both devices.
pub fn static_cfg() -> SimConfig {
    SimConfig {
        window_base: 0x1_0000,
        dram_capacity: 64 * 4096,
        nvm_capacity: 256 * 4096,
        page_size: 4096,
        policy: PolicyKind::Static,
        ..SimConfig::default()
    }
}

/// Hotness-policy machine tuned to migrate frequently.
pub fn migrating_cfg() -> SimConfig {
    SimConfig {
        policy: PolicyKind::Hotness,
        promote_threshold: 16,
        dram_watermark: 1.0,
        epoch_cycles: 1_000_000,
        ..static_cfg()
    }
}

/// Steady-state uniform workload: arrivals the devices can absorb.
pub fn steady_spec(requests: u64) -> SyntheticSpec {
    SyntheticSpec {
        footprint: Some(128 * 4096),
        requests,
        read_fraction: 0.7,
        locality: Locality::Uniform,
        request_bytes: 64,
        gap: 48,
        ..SyntheticSpec::default()
    }
}

/// Skewed workload that keeps a few pages hot.
pub fn zipf_spec(requests: u64) -> SyntheticSpec {
    SyntheticSpec {
        locality: Locality::Zipfian,
        zipf_s: 1.1,
        ..steady_spec(requests)
    }
}
