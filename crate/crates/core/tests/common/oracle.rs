//! Sequential flat-memory replay: one byte array view of the host window,
//! requests applied strictly in trace order. Whatever the simulator does
//! with placement, migration, queueing, and reordering, its released read
//! data and final memory image must match this model byte for byte.

use hmemsim_core::model::synth_payload;
use hmemsim_core::trace::TraceRecord;
use hmemsim_core::{Op, SimConfig};
use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, HashMap};

pub struct FlatReplay {
    /// Read data per read record, in trace order.
    pub reads: Vec<Vec<u8>>,
    /// Digest over every touched host page, ascending, zeros where never
    /// written.
    pub final_memory_sha256: String,
}

pub fn replay(cfg: &SimConfig, records: &[TraceRecord]) -> FlatReplay {
    let page = cfg.page_size as usize;
    let mut pages: HashMap<u64, Vec<u8>> = HashMap::new();
    let mut touched: BTreeSet<u64> = BTreeSet::new();
    let mut reads = Vec::new();
    for (tag, rec) in records.iter().enumerate() {
        let start = rec.addr - cfg.window_base;
        for p in start / cfg.page_size..=(start + u64::from(rec.size) - 1) / cfg.page_size {
            touched.insert(p);
        }
        match rec.op {
            Op::Write => {
                let payload = synth_payload(cfg.seed, tag as u64, rec.size);
                let mut done = 0usize;
                while done < payload.len() {
                    let at = start + done as u64;
                    let within = (at % cfg.page_size) as usize;
                    let n = (page - within).min(payload.len() - done);
                    let buf = pages
                        .entry(at / cfg.page_size)
                        .or_insert_with(|| vec![0u8; page]);
                    buf[within..within + n].copy_from_slice(&payload[done..done + n]);
                    done += n;
                }
            }
            Op::Read => {
                let mut data = vec![0u8; rec.size as usize];
                let mut done = 0usize;
                while done < data.len() {
                    let at = start + done as u64;
                    let within = (at % cfg.page_size) as usize;
                    let n = (page - within).min(data.len() - done);
                    if let Some(buf) = pages.get(&(at / cfg.page_size)) {
                        data[done..done + n].copy_from_slice(&buf[within..within + n]);
                    }
                    done += n;
                }
                reads.push(data);
            }
        }
    }
    let zero = vec![0u8; page];
    let mut hash = Sha256::new();
    for p in touched {
        hash.update(p.to_le_bytes());
        hash.update(pages.get(&p).unwrap_or(&zero));
    }
    let digest = hash.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    FlatReplay {
        reads,
        final_memory_sha256: hex,
    }
}
