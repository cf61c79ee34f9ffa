//! Trace input: the line-oriented trace format, per-line validation, and the
//! deterministic synthetic workload generator.
//!
//! Trace lines are `R|W <hex addr> <size> [+gap]`; `#` starts a comment.
//! Traces carry no payload data: write payloads are derived from the run
//! seed and the record's issue order, so any replay of the same trace
//! materializes identical bytes.

use crate::allocator::AllocationHint;
use crate::config::SimConfig;
use crate::model::{Cycles, Op};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::Serialize;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// One trace line: a request plus the gap to the next arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub op: Op,
    pub addr: u64,
    pub size: u32,
    /// Cycles between this arrival and the next one.
    pub gap: Cycles,
}

pub const DEFAULT_GAP: Cycles = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for TraceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(String),
    #[error("{}", format_issues(.0))]
    Invalid(Vec<TraceIssue>),
}

fn format_issues(issues: &[TraceIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")
}

fn parse_line(line: &str, cfg: &SimConfig) -> Result<Option<TraceRecord>, String> {
    let body = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let mut tokens = body.split_whitespace();
    let Some(op_tok) = tokens.next() else {
        return Ok(None);
    };
    let op = match op_tok {
        "R" | "r" => Op::Read,
        "W" | "w" => Op::Write,
        other => return Err(format!("expected R or W, got `{other}`")),
    };
    let addr_tok = tokens.next().ok_or("missing address")?;
    let digits = addr_tok
        .strip_prefix("0x")
        .or_else(|| addr_tok.strip_prefix("0X"))
        .unwrap_or(addr_tok);
    let addr = u64::from_str_radix(digits, 16).map_err(|e| format!("bad hex address `{addr_tok}`: {e}"))?;
    let size_tok = tokens.next().ok_or("missing size")?;
    let size: u32 = size_tok.parse().map_err(|e| format!("bad size `{size_tok}`: {e}"))?;
    let gap = match tokens.next() {
        Some(tok) => {
            let digits = tok.strip_prefix('+').ok_or(format!("expected `+gap`, got `{tok}`"))?;
            digits.parse::<u64>().map_err(|e| format!("bad gap `{tok}`: {e}"))?
        }
        None => DEFAULT_GAP,
    };
    if tokens.next().is_some() {
        return Err("trailing tokens".into());
    }
    if size == 0 || !size.is_power_of_two() {
        return Err(format!("size {size} is not a power of two"));
    }
    if u64::from(size) > cfg.page_size {
        return Err(format!("size {size} exceeds the page size {}", cfg.page_size));
    }
    let window_end = cfg.window_base + cfg.window_size();
    if addr < cfg.window_base || addr + u64::from(size) > window_end {
        return Err(format!(
            "access [{addr:#x}, {:#x}) outside window [{:#x}, {window_end:#x})",
            addr + u64::from(size),
            cfg.window_base,
        ));
    }
    Ok(Some(TraceRecord { op, addr, size, gap }))
}

/// Parses a whole trace, failing with every offending line collected.
pub fn parse_trace(text: &str, cfg: &SimConfig) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        match parse_line(line, cfg) {
            Ok(Some(rec)) => records.push(rec),
            Ok(None) => {}
            Err(message) => issues.push(TraceIssue { line: idx + 1, message }),
        }
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(TraceError::Invalid(issues))
    }
}

pub fn parse_trace_file(path: &Path, cfg: &SimConfig) -> Result<Vec<TraceRecord>, TraceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(&text, cfg)
}

/// Checks every record against the trace invariants without running a
/// simulation; reports all issues rather than stopping at the first.
pub fn validate_trace(text: &str, cfg: &SimConfig) -> Vec<TraceIssue> {
    match parse_trace(text, cfg) {
        Ok(_) => Vec::new(),
        Err(TraceError::Invalid(issues)) => issues,
        Err(TraceError::Io(m)) => vec![TraceIssue { line: 0, message: m }],
    }
}

/// Address locality model for synthetic workloads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Locality {
    Uniform,
    Zipfian,
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocDirective {
    pub name: String,
    pub bytes: u64,
    pub hint: AllocationHint,
}

/// Parameters for [`SyntheticTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Bytes of unique pages to touch. Derived from the alloc directives
    /// when they are present.
    pub footprint: Option<u64>,
    pub requests: u64,
    pub read_fraction: f64,
    pub locality: Locality,
    pub zipf_s: f64,
    pub request_bytes: u32,
    pub gap: Cycles,
    pub allocs: Vec<AllocDirective>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            footprint: None,
            requests: 0,
            read_fraction: 0.5,
            locality: Locality::Uniform,
            zipf_s: 0.99,
            request_bytes: 64,
            gap: DEFAULT_GAP,
            allocs: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("footprint {footprint} exceeds window size {window}")]
    FootprintTooLarge { footprint: u64, window: u64 },
    #[error("{0} requests cannot touch {1} pages; raise `requests` or shrink `footprint`")]
    InsufficientRequests(u64, u64),
    #[error("synthetic spec: {0}")]
    BadParameter(String),
    #[error("synthetic spec line {0}: {1}")]
    Parse(usize, String),
}

impl SyntheticSpec {
    pub fn from_str_spec(text: &str) -> Result<SyntheticSpec, SynthError> {
        let mut spec = SyntheticSpec::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("alloc ") {
                let mut tok = rest.split_whitespace();
                let name = tok.next().ok_or(SynthError::Parse(lineno, "alloc needs a name".into()))?;
                let bytes_tok = tok.next().ok_or(SynthError::Parse(lineno, "alloc needs a size".into()))?;
                let bytes = parse_size(bytes_tok).map_err(|e| SynthError::Parse(lineno, e))?;
                let hint = match tok.next() {
                    None => AllocationHint::NoPreference,
                    Some("dram") => AllocationHint::PreferDram,
                    Some("nvm") => AllocationHint::PreferNvm,
                    Some(other) => {
                        return Err(SynthError::Parse(lineno, format!("unknown hint `{other}`")))
                    }
                };
                spec.allocs.push(AllocDirective { name: name.to_string(), bytes, hint });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SynthError::Parse(lineno, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            let err = |e: String| SynthError::Parse(lineno, format!("{key}: {e}"));
            match key {
                "footprint" => spec.footprint = Some(parse_size(value).map_err(err)?),
                "requests" => spec.requests = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "read_fraction" => spec.read_fraction = value.parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
                "locality" => {
                    spec.locality = match value {
                        "uniform" => Locality::Uniform,
                        "zipfian" => Locality::Zipfian,
                        "sequential" => Locality::Sequential,
                        other => return Err(err(format!("unknown locality `{other}`"))),
                    }
                }
                "zipf_s" => spec.zipf_s = value.parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
                "request_bytes" => spec.request_bytes = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                "gap" => spec.gap = value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                unknown => return Err(SynthError::Parse(lineno, format!("unknown key `{unknown}`"))),
            }
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<SyntheticSpec, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::BadParameter(format!("{}: {e}", path.display())))?;
        Self::from_str_spec(&text)
    }
}

fn parse_size(value: &str) -> Result<u64, String> {
    // reuse the config-file size grammar
    crate::config::parse_size_value(value)
}

/// Deterministic synthetic request stream.
///
/// Guarantees for a valid spec: the set of unique pages touched equals the
/// requested footprint exactly (a coverage tail touches any stragglers once
/// only as many requests remain as untouched pages), the read count equals
/// round(requests × read_fraction), and identical seeds yield identical
/// streams.
pub struct SyntheticTrace {
    pages: Vec<u64>,
    page_size: u64,
    window_base: u64,
    request_bytes: u32,
    gap: Cycles,
    locality: Locality,
    zipf: Option<Zipf<f64>>,
    rank_to_page: Vec<u32>,
    stride: u64,
    rng: ChaCha8Rng,
    remaining: u64,
    remaining_reads: u64,
    touched: Vec<bool>,
    untouched: u64,
    coverage_cursor: usize,
    seq_cursor: u64,
}

impl SyntheticTrace {
    /// Builds a generator over an explicit host-page pool (ascending page
    /// numbers relative to the window).
    pub fn over_pages(
        cfg: &SimConfig,
        spec: &SyntheticSpec,
        pages: Vec<u64>,
        seed: u64,
    ) -> Result<SyntheticTrace, SynthError> {
        if pages.is_empty() {
            return Err(SynthError::BadParameter("empty page pool".into()));
        }
        if spec.requests < pages.len() as u64 {
            return Err(SynthError::InsufficientRequests(spec.requests, pages.len() as u64));
        }
        if !(0.0..=1.0).contains(&spec.read_fraction) {
            return Err(SynthError::BadParameter(format!(
                "read_fraction {} outside [0, 1]",
                spec.read_fraction
            )));
        }
        if spec.request_bytes == 0
            || !spec.request_bytes.is_power_of_two()
            || u64::from(spec.request_bytes) > cfg.page_size
        {
            return Err(SynthError::BadParameter(format!(
                "request_bytes {} must be a power of two within one page",
                spec.request_bytes
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = pages.len();
        let (zipf, rank_to_page) = if spec.locality == Locality::Zipfian {
            if spec.zipf_s.is_nan() || spec.zipf_s <= 0.0 {
                return Err(SynthError::BadParameter(format!("zipf_s {} must be positive", spec.zipf_s)));
            }
            let zipf = Zipf::new(n as u64, spec.zipf_s)
                .map_err(|e| SynthError::BadParameter(format!("zipf: {e}")))?;
            // spread the hot ranks across the pool
            let mut perm: Vec<u32> = (0..n as u32).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            (Some(zipf), perm)
        } else {
            (None, Vec::new())
        };
        let footprint_bytes = n as u64 * cfg.page_size;
        let stride = if spec.locality == Locality::Sequential {
            // sampled streaming: cover the footprint within the request budget
            let raw = footprint_bytes.div_ceil(spec.requests).max(u64::from(spec.request_bytes));
            raw.div_ceil(u64::from(spec.request_bytes)) * u64::from(spec.request_bytes)
        } else {
            0
        };
        let reads = (spec.requests as f64 * spec.read_fraction).round() as u64;
        Ok(SyntheticTrace {
            untouched: n as u64,
            touched: vec![false; n],
            pages,
            page_size: cfg.page_size,
            window_base: cfg.window_base,
            request_bytes: spec.request_bytes,
            gap: spec.gap,
            locality: spec.locality,
            zipf,
            rank_to_page,
            stride,
            rng,
            remaining: spec.requests,
            remaining_reads: reads.min(spec.requests),
            coverage_cursor: 0,
            seq_cursor: 0,
        })
    }

    /// Builds a generator over the first `footprint` bytes of the window.
    pub fn new(cfg: &SimConfig, spec: &SyntheticSpec, seed: u64) -> Result<SyntheticTrace, SynthError> {
        let footprint = spec
            .footprint
            .ok_or_else(|| SynthError::BadParameter("missing footprint".into()))?;
        if footprint > cfg.window_size() {
            return Err(SynthError::FootprintTooLarge {
                footprint,
                window: cfg.window_size(),
            });
        }
        if footprint == 0 {
            return Err(SynthError::BadParameter("footprint must be positive".into()));
        }
        let pages: Vec<u64> = (0..footprint.div_ceil(cfg.page_size)).collect();
        Self::over_pages(cfg, spec, pages, seed)
    }

    fn slots_per_page(&self) -> u64 {
        self.page_size / u64::from(self.request_bytes)
    }

    fn emit(&mut self, page_idx: usize, offset_in_page: u64) -> TraceRecord {
        if !self.touched[page_idx] {
            self.touched[page_idx] = true;
            self.untouched -= 1;
        }
        let op = {
            // exact quota: P(read) = remaining_reads / remaining
            let draw = self.rng.gen_range(0..self.remaining);
            if draw < self.remaining_reads {
                self.remaining_reads -= 1;
                Op::Read
            } else {
                Op::Write
            }
        };
        self.remaining -= 1;
        TraceRecord {
            op,
            addr: self.window_base + self.pages[page_idx] * self.page_size + offset_in_page,
            size: self.request_bytes,
            gap: self.gap,
        }
    }
}

impl Iterator for SyntheticTrace {
    type Item = TraceRecord;

    fn next(&mut self) -> Option<TraceRecord> {
        if self.remaining == 0 {
            return None;
        }
        // Once the remaining budget equals the untouched page count, finish
        // the footprint deterministically.
        if self.untouched >= self.remaining {
            while self.touched[self.coverage_cursor] {
                self.coverage_cursor += 1;
            }
            let idx = self.coverage_cursor;
            let slot = self.rng.gen_range(0..self.slots_per_page());
            return Some(self.emit(idx, slot * u64::from(self.request_bytes)));
        }
        let (idx, offset) = match self.locality {
            Locality::Uniform => {
                let idx = self.rng.gen_range(0..self.pages.len());
                let slot = self.rng.gen_range(0..self.slots_per_page());
                (idx, slot * u64::from(self.request_bytes))
            }
            Locality::Zipfian => {
                let rank = self.zipf.as_ref().unwrap().sample(&mut self.rng) as usize - 1;
                let idx = self.rank_to_page[rank.min(self.rank_to_page.len() - 1)] as usize;
                let slot = self.rng.gen_range(0..self.slots_per_page());
                (idx, slot * u64::from(self.request_bytes))
            }
            Locality::Sequential => {
                let footprint = self.pages.len() as u64 * self.page_size;
                let virt = self.seq_cursor % footprint;
                self.seq_cursor += self.stride;
                ((virt / self.page_size) as usize, virt % self.page_size)
            }
        };
        Some(self.emit(idx, offset))
    }
}
