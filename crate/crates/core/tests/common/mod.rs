#![allow(dead_code)] // each test target uses a different subset

//! Shared test support: the flat-memory replay oracle and random trace
//! generation. The oracle is a sequential model with no devices, no queues,
//! and no migration machinery, kept independent of the simulator path it
//! checks.

pub mod oracle;

use hmemsim_core::config::PolicyKind;
use hmemsim_core::trace::TraceRecord;
use hmemsim_core::{Op, SimConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// A small window that fills quickly: 8 DRAM pages, 16 NVM pages.
pub fn small_cfg() -> SimConfig {
    SimConfig {
        window_base: 0x1_0000,
        dram_capacity: 8 * 4096,
        nvm_capacity: 16 * 4096,
        page_size: 4096,
        ..SimConfig::default()
    }
}

/// Migration-heavy variant: full DRAM fill, hair-trigger promotion.
pub fn migration_cfg() -> SimConfig {
    SimConfig {
        policy: PolicyKind::Hotness,
        dram_watermark: 1.0,
        promote_threshold: 4,
        epoch_cycles: 1_000_000,
        ..small_cfg()
    }
}

/// Uniform random records over the window: mixed sizes (including
/// page-crossing, unaligned ones), mixed ops, random small gaps.
pub fn random_trace(cfg: &SimConfig, count: usize, seed: u64) -> Vec<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = cfg.window_size();
    (0..count)
        .map(|_| {
            let size = *[1u32, 8, 64, 64, 64, 256, 4096].choose(&mut rng).unwrap();
            let size = size.min(cfg.page_size as u32);
            let addr = cfg.window_base + rng.gen_range(0..window - u64::from(size));
            let op = if rng.gen_bool(0.5) { Op::Read } else { Op::Write };
            TraceRecord {
                op,
                addr,
                size,
                gap: rng.gen_range(0..4),
            }
        })
        .collect()
}
