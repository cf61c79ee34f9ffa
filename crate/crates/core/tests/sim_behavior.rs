//! End-to-end simulator scenarios against the flat-memory oracle.

mod common;

use common::oracle;
use common::{migration_cfg, random_trace, small_cfg};
use hmemsim_core::config::PolicyKind;
use hmemsim_core::sim::{run_records, run_synthetic, SimError};
use hmemsim_core::trace::{Locality, SyntheticSpec, TraceRecord};
use hmemsim_core::{Op, SimConfig};

fn rec(op: Op, addr: u64, size: u32) -> TraceRecord {
    TraceRecord { op, addr, size, gap: 1 }
}

#[test]
fn empty_trace_reports_zero_everything() {
    let cfg = small_cfg();
    let out = run_records(&cfg, Vec::new(), true).unwrap();
    assert_eq!(out.report.run.cycles, 0);
    assert_eq!(out.report.run.requests, 0);
    assert_eq!(out.report.dram.read_txns + out.report.nvm.read_txns, 0);
    assert!(out.responses.is_empty());
}

#[test]
fn write_then_read_returns_written_payload() {
    let cfg = small_cfg();
    let base = cfg.window_base;
    let records = vec![rec(Op::Write, base + 64, 64), rec(Op::Read, base + 64, 64)];
    let out = run_records(&cfg, records.clone(), true).unwrap();
    assert_eq!(out.responses.len(), 2);
    let expected = oracle::replay(&cfg, &records);
    assert_eq!(out.responses[1].data.as_ref().unwrap(), &expected.reads[0]);
    assert_eq!(out.report.final_memory_sha256, expected.final_memory_sha256);
    let demand_reads = out.report.dram.read_txns + out.report.nvm.read_txns;
    let demand_writes = out.report.dram.write_txns + out.report.nvm.write_txns;
    assert_eq!((demand_reads, demand_writes), (1, 1));
}

#[test]
fn read_of_untouched_memory_is_zeros() {
    let cfg = small_cfg();
    let out = run_records(&cfg, vec![rec(Op::Read, cfg.window_base + 4096, 64)], true).unwrap();
    assert!(out.responses[0].data.as_ref().unwrap().iter().all(|&b| b == 0));
}

#[test]
fn released_tags_are_dense_ascending_with_mixed_devices() {
    let cfg = small_cfg();
    let records = random_trace(&cfg, 500, 42);
    let out = run_records(&cfg, records, true).unwrap();
    let tags: Vec<u64> = out.responses.iter().map(|r| r.tag).collect();
    assert_eq!(tags, (0..500).collect::<Vec<_>>());
}

#[test]
fn random_traces_match_flat_oracle_without_migration() {
    let mut cfg = small_cfg();
    cfg.policy = PolicyKind::Static;
    for seed in 0..10 {
        let records = random_trace(&cfg, 300, seed);
        let out = run_records(&cfg, records.clone(), true).unwrap();
        let expected = oracle::replay(&cfg, &records);
        let got_reads: Vec<&Vec<u8>> = out
            .responses
            .iter()
            .filter(|r| r.op == Op::Read)
            .map(|r| r.data.as_ref().unwrap())
            .collect();
        assert_eq!(got_reads.len(), expected.reads.len());
        for (i, (got, want)) in got_reads.iter().zip(&expected.reads).enumerate() {
            assert_eq!(got, &want, "read {i} diverged from the oracle (seed {seed})");
        }
        assert_eq!(out.report.final_memory_sha256, expected.final_memory_sha256);
    }
}

#[test]
fn random_traces_match_flat_oracle_with_migration() {
    let cfg = migration_cfg();
    let mut swaps_seen = 0;
    for seed in 100..120 {
        let records = random_trace(&cfg, 400, seed);
        let out = run_records(&cfg, records.clone(), true).unwrap();
        swaps_seen += out.report.placement.swaps_completed;
        let expected = oracle::replay(&cfg, &records);
        let got_reads: Vec<&Vec<u8>> = out
            .responses
            .iter()
            .filter(|r| r.op == Op::Read)
            .map(|r| r.data.as_ref().unwrap())
            .collect();
        for (i, (got, want)) in got_reads.iter().zip(&expected.reads).enumerate() {
            assert_eq!(got, &want, "read {i} diverged from the oracle (seed {seed})");
        }
        assert_eq!(out.report.final_memory_sha256, expected.final_memory_sha256);
    }
    assert!(swaps_seen > 0, "migration runs must actually swap pages");
}

#[test]
fn transparency_read_data_is_policy_invariant() {
    // Same trace under static vs hotness placement: byte-identical reads.
    let hot = migration_cfg();
    let mut cold = migration_cfg();
    cold.policy = PolicyKind::Static;
    for seed in [7u64, 8, 9] {
        let records = random_trace(&hot, 400, seed);
        let with = run_records(&hot, records.clone(), true).unwrap();
        let without = run_records(&cold, records.clone(), true).unwrap();
        assert!(with.report.placement.swaps_completed > 0, "seed {seed} exercised no swap");
        let reads = |o: &hmemsim_core::sim::SimOutput| -> Vec<Vec<u8>> {
            o.responses
                .iter()
                .filter(|r| r.op == Op::Read)
                .map(|r| r.data.clone().unwrap())
                .collect()
        };
        assert_eq!(reads(&with), reads(&without));
        assert_eq!(with.report.final_memory_sha256, without.report.final_memory_sha256);
    }
}

#[test]
fn split_read_across_two_devices_concatenates() {
    // Map two adjacent host pages to different devices via the watermark,
    // then read across the boundary.
    let mut cfg = small_cfg();
    cfg.dram_capacity = 4096; // one DRAM page
    cfg.policy = PolicyKind::Static;
    let base = cfg.window_base;
    let records = vec![
        rec(Op::Write, base, 4096),          // page 0 -> DRAM (first touch)
        rec(Op::Write, base + 4096, 4096),   // page 1 -> NVM (DRAM full)
        rec(Op::Read, base + 4096 - 64, 128), // crosses the boundary
    ];
    let out = run_records(&cfg, records.clone(), true).unwrap();
    assert_eq!(out.report.placement.pages_mapped_dram, 1);
    assert_eq!(out.report.placement.pages_mapped_nvm, 1);
    let expected = oracle::replay(&cfg, &records);
    assert_eq!(out.responses[2].data.as_ref().unwrap(), &expected.reads[0]);
}

#[test]
fn posted_writes_keep_ordering_and_data() {
    let mut cfg = migration_cfg();
    cfg.posted_writes = true;
    let records = random_trace(&cfg, 300, 5);
    let out = run_records(&cfg, records.clone(), true).unwrap();
    let tags: Vec<u64> = out.responses.iter().map(|r| r.tag).collect();
    assert_eq!(tags, (0..300).collect::<Vec<_>>());
    let expected = oracle::replay(&cfg, &records);
    let got_reads: Vec<&Vec<u8>> = out
        .responses
        .iter()
        .filter(|r| r.op == Op::Read)
        .map(|r| r.data.as_ref().unwrap())
        .collect();
    for (got, want) in got_reads.iter().zip(&expected.reads) {
        assert_eq!(got, &want);
    }
}

#[test]
fn demand_byte_counters_equal_trace_sums() {
    let cfg = migration_cfg();
    let records = random_trace(&cfg, 600, 11);
    let out = run_records(&cfg, records.clone(), false).unwrap();
    let trace_reads: u64 = records.iter().filter(|r| r.op == Op::Read).map(|r| u64::from(r.size)).sum();
    let trace_writes: u64 = records.iter().filter(|r| r.op == Op::Write).map(|r| u64::from(r.size)).sum();
    assert_eq!(out.report.dram.read_bytes + out.report.nvm.read_bytes, trace_reads);
    assert_eq!(out.report.dram.write_bytes + out.report.nvm.write_bytes, trace_writes);
}

#[test]
fn out_of_window_record_is_a_record_error() {
    let cfg = small_cfg();
    let err = run_records(&cfg, vec![rec(Op::Read, cfg.window_base - 64, 64)], false).unwrap_err();
    match err {
        SimError::Record { index: 0, .. } => {}
        other => panic!("unexpected: {other}"),
    }
    // crossing the window end is also rejected
    let end = cfg.window_base + cfg.window_size();
    let err = run_records(&cfg, vec![rec(Op::Read, end - 32, 64)], false).unwrap_err();
    assert!(matches!(err, SimError::Record { .. }));
}

#[test]
fn identical_runs_produce_identical_reports() {
    let cfg = migration_cfg();
    let records = random_trace(&cfg, 400, 77);
    let a = run_records(&cfg, records.clone(), false).unwrap();
    let b = run_records(&cfg, records, false).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
}

#[test]
fn synthetic_run_reaches_quiescence_and_covers_footprint() {
    let cfg = SimConfig {
        window_base: 0x1_0000,
        dram_capacity: 16 * 4096,
        nvm_capacity: 64 * 4096,
        page_size: 4096,
        ..SimConfig::default()
    };
    let spec = SyntheticSpec {
        footprint: Some(40 * 4096),
        requests: 2000,
        read_fraction: 0.7,
        locality: Locality::Zipfian,
        ..SyntheticSpec::default()
    };
    let out = run_synthetic(&cfg, &spec, false).unwrap();
    assert_eq!(out.report.run.requests, 2000);
    assert_eq!(out.report.run.responses, 2000);
    let mapped = out.report.placement.pages_mapped_dram + out.report.placement.pages_mapped_nvm;
    assert_eq!(mapped, 40);
}

#[test]
fn synthetic_with_allocs_draws_from_hinted_regions() {
    let cfg = SimConfig {
        window_base: 0x1_0000,
        dram_capacity: 8 * 4096,
        nvm_capacity: 8 * 4096,
        page_size: 4096,
        policy: PolicyKind::Static,
        ..SimConfig::default()
    };
    let spec_text = "\
requests = 200
read_fraction = 1.0
alloc hot 8K dram
alloc cold 8K nvm
";
    let spec = SyntheticSpec::from_str_spec(spec_text).unwrap();
    let out = run_synthetic(&cfg, &spec, false).unwrap();
    assert_eq!(out.report.placement.pages_mapped_dram, 2);
    assert_eq!(out.report.placement.pages_mapped_nvm, 2);
    assert_eq!(out.report.placement.alloc_spilled_frames, 0);
    assert!(out.report.nvm.read_txns > 0 && out.report.dram.read_txns > 0);

    // a DRAM hint larger than DRAM spills the excess into NVM
    let spill_spec = SyntheticSpec::from_str_spec("requests = 100\nalloc big 40K dram\n").unwrap();
    let out = run_synthetic(&cfg, &spill_spec, false).unwrap();
    assert_eq!(out.report.placement.alloc_spilled_frames, 2);
    assert_eq!(out.report.placement.pages_mapped_dram, 8);
    assert_eq!(out.report.placement.pages_mapped_nvm, 2);
}

#[test]
fn energy_report_present_iff_coefficients_configured() {
    let mut cfg = small_cfg();
    let records = vec![rec(Op::Write, cfg.window_base, 64), rec(Op::Read, cfg.window_base, 64)];
    let out = run_records(&cfg, records.clone(), false).unwrap();
    assert!(out.report.energy.is_none());
    cfg.energy = Some(hmemsim_core::config::EnergyCoeffs {
        dram_read_pj_per_byte: 1000,
        dram_write_pj_per_byte: 2000,
        nvm_read_pj_per_byte: 3000,
        nvm_write_pj_per_byte: 4000,
    });
    let out = run_records(&cfg, records, false).unwrap();
    let e = out.report.energy.unwrap();
    // 64B write at 2 nJ/B + 64B read at 1 nJ/B, all on DRAM
    assert_eq!(e.total_pj, 64 * 2000 + 64 * 1000);
}

#[test]
fn nvm_latency_exceeds_dram_latency_in_reports() {
    // Same request count to each device; NVM mean must be ~3x DRAM mean.
    let mut cfg = small_cfg();
    cfg.policy = PolicyKind::Static;
    cfg.dram_capacity = 4096;
    let base = cfg.window_base;
    let mut records = vec![rec(Op::Write, base, 64), rec(Op::Write, base + 4096, 64)];
    for _ in 0..200 {
        records.push(TraceRecord { op: Op::Read, addr: base, size: 64, gap: 600 });
        records.push(TraceRecord { op: Op::Read, addr: base + 4096, size: 64, gap: 600 });
    }
    let out = run_records(&cfg, records, false).unwrap();
    let dram_mean = out.report.dram.latency.mean_cycles;
    let nvm_mean = out.report.nvm.latency.mean_cycles;
    let ratio = nvm_mean / dram_mean;
    assert!((ratio - 3.0).abs() < 0.1, "nvm/dram mean ratio {ratio}");
}
