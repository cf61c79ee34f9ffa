//! Property tests over the core invariants.

mod common;

use common::oracle;
use common::{migration_cfg, random_trace};
use hmemsim_core::config::PolicyKind;
use hmemsim_core::model::{split_request, HostAddress, MemoryRequest};
use hmemsim_core::sim::run_records;
use hmemsim_core::trace::TraceRecord;
use hmemsim_core::{Op, SimConfig};
use proptest::prelude::*;

proptest! {
    /// split_request partitions the byte range: disjoint, ordered, complete,
    /// page-local.
    #[test]
    fn split_is_partition(
        addr in 0u64..1 << 40,
        size in 1u32..=4096,
        page_shift in 6u32..=13,
    ) {
        let page_size = 1u64 << page_shift;
        let req = MemoryRequest {
            op: Op::Read,
            addr: HostAddress(addr),
            size,
            arrival: 0,
            tag: 1,
            payload: None,
        };
        let subs = split_request(&req, page_size);
        let mut cursor = addr;
        for (i, s) in subs.iter().enumerate() {
            prop_assert_eq!(s.addr.0, cursor);
            prop_assert_eq!(s.index as usize, i);
            prop_assert_eq!(u64::from(s.parent_offset), s.addr.0 - addr);
            prop_assert!(s.size >= 1);
            let first_page = s.addr.0 / page_size;
            let last_page = (s.addr.0 + u64::from(s.size) - 1) / page_size;
            prop_assert_eq!(first_page, last_page, "sub crosses a page");
            cursor += u64::from(s.size);
        }
        prop_assert_eq!(cursor, addr + u64::from(size));
    }

    /// Tags release as a dense ascending sequence and every run matches the
    /// flat-memory oracle, across random machine shapes.
    #[test]
    fn ordered_delivery_and_oracle_equivalence(seed in 0u64..256) {
        let cfg = SimConfig {
            window_base: 0x1_0000,
            dram_capacity: (2 + seed % 5) * 4096,
            nvm_capacity: (4 + seed % 7) * 4096,
            page_size: 4096,
            dma_block: 512,
            outstanding_slots: 1 + (seed % 4) as u32,
            dma_max_jobs: 1 + (seed % 2) as u32,
            policy: PolicyKind::Hotness,
            promote_threshold: 2 + (seed % 4) as u32,
            dram_watermark: 1.0,
            posted_writes: seed % 5 == 0,
            seed,
            ..SimConfig::default()
        };
        let records = random_trace(&cfg, 120, seed ^ 0x5eed);
        let out = run_records(&cfg, records.clone(), true).unwrap();
        let tags: Vec<u64> = out.responses.iter().map(|r| r.tag).collect();
        prop_assert_eq!(&tags, &(0..records.len() as u64).collect::<Vec<_>>());
        let expected = oracle::replay(&cfg, &records);
        let got: Vec<Vec<u8>> = out
            .responses
            .iter()
            .filter(|r| r.op == Op::Read)
            .map(|r| r.data.clone().unwrap())
            .collect();
        prop_assert_eq!(got, expected.reads);
        prop_assert_eq!(out.report.final_memory_sha256, expected.final_memory_sha256);
    }

    /// Demand byte counters equal the trace sums exactly, with or without
    /// migration traffic in flight.
    #[test]
    fn demand_counters_equal_trace_sums(seed in 0u64..64) {
        let cfg = migration_cfg();
        let records = random_trace(&cfg, 200, seed);
        let out = run_records(&cfg, records.clone(), false).unwrap();
        let reads: u64 = records.iter().filter(|r| r.op == Op::Read).map(|r| u64::from(r.size)).sum();
        let writes: u64 = records.iter().filter(|r| r.op == Op::Write).map(|r| u64::from(r.size)).sum();
        prop_assert_eq!(out.report.dram.read_bytes + out.report.nvm.read_bytes, reads);
        prop_assert_eq!(out.report.dram.write_bytes + out.report.nvm.write_bytes, writes);
        let txns: u64 = out.report.dram.read_txns
            + out.report.nvm.read_txns
            + out.report.dram.write_txns
            + out.report.nvm.write_txns;
        prop_assert!(txns >= records.len() as u64);
    }
}

#[test]
fn release_histogram_population_equals_responses() {
    let cfg = migration_cfg();
    let records = random_trace(&cfg, 333, 9);
    let out = run_records(&cfg, records, false).unwrap();
    assert_eq!(out.report.release_latency.count, 333);
    assert_eq!(out.report.run.responses, 333);
}

#[test]
fn header_fifo_tracks_in_flight_requests() {
    // Indirect check: quiescence at end plus dense release already pin the
    // FIFO length; here a mid-run fault would trip the run's own asserts.
    let cfg = migration_cfg();
    for n in [1usize, 10, 100] {
        let records = random_trace(&cfg, n, n as u64);
        let out = run_records(&cfg, records, false).unwrap();
        assert_eq!(out.report.run.requests, n as u64);
        assert_eq!(out.report.run.responses, n as u64);
    }
}

#[test]
fn out_of_order_completion_happens_but_release_stays_ordered() {
    // With NVM stalls and mixed routing, device completion order must
    // diverge from tag order in at least some runs while releases never do.
    let mut runs_with_inversions = 0;
    for seed in 0..40u64 {
        let cfg = SimConfig {
            window_base: 0x1_0000,
            dram_capacity: 4 * 4096,
            nvm_capacity: 8 * 4096,
            page_size: 4096,
            policy: PolicyKind::Static,
            dram_watermark: 0.5,
            seed,
            ..SimConfig::default()
        };
        let records = random_trace(&cfg, 200, seed * 7 + 1);
        let out = run_records(&cfg, records, true).unwrap();
        let tags: Vec<u64> = out.responses.iter().map(|r| r.tag).collect();
        assert_eq!(tags, (0..200).collect::<Vec<_>>());
        if out.report.run.completion_order_inversions > 0 {
            runs_with_inversions += 1;
        }
    }
    assert!(
        runs_with_inversions >= 12,
        "only {runs_with_inversions}/40 runs saw out-of-order completion"
    );
}

#[test]
fn swap_conservation_and_block_counts() {
    // Drive a hot page until it swaps; the DMA must move exactly
    // 2 * blocks_per_page blocks per swap and conserve memory contents.
    let cfg = SimConfig {
        window_base: 0,
        dram_capacity: 2 * 4096,
        nvm_capacity: 2 * 4096,
        page_size: 4096,
        dma_block: 512,
        policy: PolicyKind::Hotness,
        promote_threshold: 4,
        dram_watermark: 1.0,
        epoch_cycles: 1_000_000,
        ..SimConfig::default()
    };
    let mut records = Vec::new();
    // fill both DRAM pages, then hammer an NVM page
    records.push(TraceRecord { op: Op::Write, addr: 0, size: 4096, gap: 1 });
    records.push(TraceRecord { op: Op::Write, addr: 4096, size: 4096, gap: 1 });
    records.push(TraceRecord { op: Op::Write, addr: 2 * 4096, size: 4096, gap: 1 });
    for i in 0..8 {
        records.push(TraceRecord { op: Op::Read, addr: 2 * 4096 + i * 64, size: 64, gap: 200 });
    }
    let out = run_records(&cfg, records.clone(), true).unwrap();
    assert_eq!(out.report.placement.swaps_completed, 1);
    assert_eq!(out.report.dma.blocks_moved, 16);
    assert_eq!(out.report.dram.dma_read_bytes, 4096);
    assert_eq!(out.report.nvm.dma_write_bytes, 4096);
    let expected = oracle::replay(&cfg, &records);
    assert_eq!(out.report.final_memory_sha256, expected.final_memory_sha256);
}
