//! Global simulation configuration: defaults, validation, and the
//! line-oriented `key = value` config file format.

use crate::model::HostAddress;
use serde::Serialize;
use std::fmt;
use std::path::Path;

pub const DEFAULT_WINDOW_BASE: u64 = 0x12_4000_0000;
pub const DEFAULT_DRAM_CAPACITY: u64 = 128 * 1024 * 1024;
pub const DEFAULT_NVM_CAPACITY: u64 = 1024 * 1024 * 1024;
pub const DEFAULT_PAGE_SIZE: u64 = 4096;
pub const DEFAULT_DMA_BLOCK: u64 = 512;

/// Which data-placement/migration policy drives routing decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Route by the current table mapping; never migrate.
    Static,
    /// Epoch-based access counting; promote hot NVM pages by swapping them
    /// with the coldest DRAM page.
    Hotness,
}

/// Dynamic-energy coefficients in integer picojoules per byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnergyCoeffs {
    pub dram_read_pj_per_byte: u64,
    pub dram_write_pj_per_byte: u64,
    pub nvm_read_pj_per_byte: u64,
    pub nvm_write_pj_per_byte: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Base of the memory-mapped hybrid window.
    pub window_base: u64,
    pub dram_capacity: u64,
    pub nvm_capacity: u64,
    pub page_size: u64,
    /// DMA transfer unit within a page swap.
    pub dma_block: u64,
    pub dma_buffer_blocks: u32,
    pub dma_max_jobs: u32,
    /// Display/scaling factor only; latency emulation works on ratios.
    pub ns_per_cycle: f64,
    /// Round-trip cycles of the baseline DIMM, device portion only.
    pub base_read_cycles: u64,
    pub base_write_cycles: u64,
    pub outstanding_slots: u32,
    /// Host-to-controller transport cost folded into one constant.
    pub link_latency: u64,
    pub dram_read_ns: u64,
    pub dram_write_ns: u64,
    pub nvm_read_ns: u64,
    pub nvm_write_ns: u64,
    pub control_delay: u64,
    /// When true, writes are acknowledged at issue instead of at device
    /// completion. Ordering of released responses is unchanged.
    pub posted_writes: bool,
    pub policy: PolicyKind,
    pub epoch_cycles: u64,
    pub promote_threshold: u32,
    pub dram_watermark: f64,
    pub energy: Option<EnergyCoeffs>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            window_base: DEFAULT_WINDOW_BASE,
            dram_capacity: DEFAULT_DRAM_CAPACITY,
            nvm_capacity: DEFAULT_NVM_CAPACITY,
            page_size: DEFAULT_PAGE_SIZE,
            dma_block: DEFAULT_DMA_BLOCK,
            dma_buffer_blocks: 2,
            dma_max_jobs: 1,
            ns_per_cycle: 4.0,
            base_read_cycles: 13,
            base_write_cycles: 13,
            outstanding_slots: 4,
            link_latency: 30,
            dram_read_ns: 50,
            dram_write_ns: 50,
            nvm_read_ns: 150,
            nvm_write_ns: 500,
            control_delay: 2,
            posted_writes: false,
            policy: PolicyKind::Hotness,
            epoch_cycles: 100_000,
            promote_threshold: 32,
            dram_watermark: 0.9,
            energy: None,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn window_size(&self) -> u64 {
        self.dram_capacity + self.nvm_capacity
    }

    pub fn window_base_addr(&self) -> HostAddress {
        HostAddress(self.window_base)
    }

    pub fn window_pages(&self) -> u64 {
        self.window_size() / self.page_size
    }

    pub fn dram_pages(&self) -> u64 {
        self.dram_capacity / self.page_size
    }

    pub fn nvm_pages(&self) -> u64 {
        self.nvm_capacity / self.page_size
    }

    pub fn blocks_per_page(&self) -> u32 {
        (self.page_size / self.dma_block) as u32
    }

    pub fn contains(&self, addr: HostAddress) -> bool {
        addr.0 >= self.window_base && addr.0 < self.window_base + self.window_size()
    }

    pub fn host_page(&self, addr: HostAddress) -> u64 {
        (addr.0 - self.window_base) / self.page_size
    }

    /// Parses a config file over the defaults, then validates.
    pub fn from_file(path: &Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_str_overlay(&text)
    }

    /// Parses config text over the defaults, then validates.
    pub fn from_str_overlay(text: &str) -> Result<SimConfig, ConfigError> {
        let mut cfg = SimConfig::default();
        let mut energy: PartialEnergy = PartialEnergy::default();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse(lineno, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            apply_key(&mut cfg, &mut energy, key, value)
                .map_err(|msg| ConfigError::Parse(lineno, format!("{key}: {msg}")))?;
        }
        cfg.energy = energy.finish().map_err(ConfigError::Invalid)?;
        validate_config(cfg).map_err(ConfigError::Invalid)
    }
}

/// Checks every type invariant and returns the config unchanged iff all
/// hold; otherwise reports every violated constraint by name.
pub fn validate_config(cfg: SimConfig) -> Result<SimConfig, Vec<ConstraintViolation>> {
    let mut errors = Vec::new();
    let mut fail = |constraint: Constraint, field: &str, detail: String| {
        errors.push(ConstraintViolation {
            constraint,
            field: field.to_string(),
            detail,
        });
    };

    if cfg.page_size == 0 || !cfg.page_size.is_power_of_two() {
        fail(
            Constraint::NotPowerOfTwo,
            "page_size",
            format!("page_size {} must be a nonzero power of two", cfg.page_size),
        );
    }
    if cfg.dma_block == 0 {
        fail(Constraint::ZeroValue, "dma.block_bytes", "dma block must be nonzero".into());
    } else if !cfg.page_size.is_multiple_of(cfg.dma_block) {
        fail(
            Constraint::BlockNotDividingPage,
            "dma.block_bytes",
            format!("dma block {} does not divide page size {}", cfg.dma_block, cfg.page_size),
        );
    }
    for (field, cap) in [("dram.capacity", cfg.dram_capacity), ("nvm.capacity", cfg.nvm_capacity)] {
        if cap == 0 {
            fail(Constraint::ZeroCapacity, field, "capacity must be nonzero".into());
        } else if cfg.page_size != 0 && cap % cfg.page_size != 0 {
            fail(
                Constraint::CapacityNotPageMultiple,
                field,
                format!("capacity {cap} is not a multiple of page size {}", cfg.page_size),
            );
        }
    }
    if cfg.page_size != 0 && !cfg.window_base.is_multiple_of(cfg.page_size) {
        fail(
            Constraint::Misaligned,
            "window_base",
            format!("window base {:#x} is not page aligned", cfg.window_base),
        );
    }
    for (field, v) in [
        ("device.base_read_cycles", cfg.base_read_cycles),
        ("device.base_write_cycles", cfg.base_write_cycles),
        ("dram.read_ns", cfg.dram_read_ns),
        ("dram.write_ns", cfg.dram_write_ns),
        ("nvm.read_ns", cfg.nvm_read_ns),
        ("nvm.write_ns", cfg.nvm_write_ns),
        ("policy.epoch_cycles", cfg.epoch_cycles),
    ] {
        if v == 0 {
            fail(Constraint::ZeroValue, field, "must be strictly positive".into());
        }
    }
    for (field, v) in [
        ("device.outstanding_slots", u64::from(cfg.outstanding_slots)),
        ("dma.buffer_blocks", u64::from(cfg.dma_buffer_blocks)),
        ("dma.max_jobs", u64::from(cfg.dma_max_jobs)),
        ("policy.threshold", u64::from(cfg.promote_threshold)),
    ] {
        if v == 0 {
            fail(Constraint::ZeroValue, field, "must be at least 1".into());
        }
    }
    if cfg.ns_per_cycle.is_nan() || cfg.ns_per_cycle <= 0.0 {
        fail(Constraint::OutOfRange, "ns_per_cycle", "must be positive".into());
    }
    if !(0.0..=1.0).contains(&cfg.dram_watermark) {
        fail(
            Constraint::OutOfRange,
            "policy.dram_watermark",
            format!("watermark {} outside [0, 1]", cfg.dram_watermark),
        );
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Named constraint classes reported by [`validate_config`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    CapacityNotPageMultiple,
    BlockNotDividingPage,
    ZeroCapacity,
    NotPowerOfTwo,
    ZeroValue,
    OutOfRange,
    Misaligned,
    EnergyCoefficientsIncomplete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintViolation {
    pub constraint: Constraint,
    pub field: String,
    pub detail: String,
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} ({}): {}", self.constraint, self.field, self.detail)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("config line {0}: {1}")]
    Parse(usize, String),
    #[error("invalid config: {}", format_violations(.0))]
    Invalid(Vec<ConstraintViolation>),
}

fn format_violations(v: &[ConstraintViolation]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Default)]
struct PartialEnergy {
    dram_read: Option<u64>,
    dram_write: Option<u64>,
    nvm_read: Option<u64>,
    nvm_write: Option<u64>,
}

impl PartialEnergy {
    fn finish(self) -> Result<Option<EnergyCoeffs>, Vec<ConstraintViolation>> {
        let fields = [
            ("energy.dram.read_nj_per_byte", &self.dram_read),
            ("energy.dram.write_nj_per_byte", &self.dram_write),
            ("energy.nvm.read_nj_per_byte", &self.nvm_read),
            ("energy.nvm.write_nj_per_byte", &self.nvm_write),
        ];
        let present = fields.iter().filter(|(_, v)| v.is_some()).count();
        if present == 0 {
            return Ok(None);
        }
        if present < fields.len() {
            let missing: Vec<_> = fields
                .iter()
                .filter(|(_, v)| v.is_none())
                .map(|(name, _)| ConstraintViolation {
                    constraint: Constraint::EnergyCoefficientsIncomplete,
                    field: name.to_string(),
                    detail: "all four energy coefficients must be set together".into(),
                })
                .collect();
            return Err(missing);
        }
        Ok(Some(EnergyCoeffs {
            dram_read_pj_per_byte: self.dram_read.unwrap(),
            dram_write_pj_per_byte: self.dram_write.unwrap(),
            nvm_read_pj_per_byte: self.nvm_read.unwrap(),
            nvm_write_pj_per_byte: self.nvm_write.unwrap(),
        }))
    }
}

fn apply_key(
    cfg: &mut SimConfig,
    energy: &mut PartialEnergy,
    key: &str,
    value: &str,
) -> Result<(), String> {
    match key {
        "window_base" => cfg.window_base = parse_u64(value)?,
        "dram.capacity" => cfg.dram_capacity = parse_size(value)?,
        "nvm.capacity" => cfg.nvm_capacity = parse_size(value)?,
        "page_size" => cfg.page_size = parse_size(value)?,
        "dma.block_bytes" => cfg.dma_block = parse_size(value)?,
        "dma.buffer_blocks" => cfg.dma_buffer_blocks = parse_u64(value)? as u32,
        "dma.max_jobs" => cfg.dma_max_jobs = parse_u64(value)? as u32,
        "ns_per_cycle" => cfg.ns_per_cycle = parse_f64(value)?,
        "device.base_read_cycles" => cfg.base_read_cycles = parse_u64(value)?,
        "device.base_write_cycles" => cfg.base_write_cycles = parse_u64(value)?,
        "device.outstanding_slots" => cfg.outstanding_slots = parse_u64(value)? as u32,
        "link.latency_cycles" => cfg.link_latency = parse_u64(value)?,
        "dram.read_ns" => cfg.dram_read_ns = parse_u64(value)?,
        "dram.write_ns" => cfg.dram_write_ns = parse_u64(value)?,
        "nvm.read_ns" => cfg.nvm_read_ns = parse_u64(value)?,
        "nvm.write_ns" => cfg.nvm_write_ns = parse_u64(value)?,
        "control.delay_cycles" => cfg.control_delay = parse_u64(value)?,
        "posted_writes" => cfg.posted_writes = parse_bool(value)?,
        "policy" => {
            cfg.policy = match value {
                "static" => PolicyKind::Static,
                "hotness" => PolicyKind::Hotness,
                other => return Err(format!("unknown policy `{other}` (expected static|hotness)")),
            }
        }
        "policy.epoch_cycles" => cfg.epoch_cycles = parse_u64(value)?,
        "policy.threshold" => cfg.promote_threshold = parse_u64(value)? as u32,
        "policy.dram_watermark" => cfg.dram_watermark = parse_f64(value)?,
        "energy.dram.read_nj_per_byte" => energy.dram_read = Some(parse_nj_to_pj(value)?),
        "energy.dram.write_nj_per_byte" => energy.dram_write = Some(parse_nj_to_pj(value)?),
        "energy.nvm.read_nj_per_byte" => energy.nvm_read = Some(parse_nj_to_pj(value)?),
        "energy.nvm.write_nj_per_byte" => energy.nvm_write = Some(parse_nj_to_pj(value)?),
        "seed" => cfg.seed = parse_u64(value)?,
        unknown => return Err(format!("unknown key `{unknown}`")),
    }
    Ok(())
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_u64(value: &str) -> Result<u64, String> {
    let v = value.replace('_', "");
    if let Some(hex) = v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).map_err(|e| e.to_string())
    } else {
        v.parse::<u64>().map_err(|e| e.to_string())
    }
}

/// Byte sizes accept K/M/G (and KiB/MiB/GiB) binary suffixes.
pub fn parse_size_value(value: &str) -> Result<u64, String> {
    parse_size(value)
}

fn parse_size(value: &str) -> Result<u64, String> {
    let v = value.trim();
    let (digits, mult) = if let Some(d) = strip_suffix_ci(v, &["kib", "kb", "k"]) {
        (d, 1024u64)
    } else if let Some(d) = strip_suffix_ci(v, &["mib", "mb", "m"]) {
        (d, 1024 * 1024)
    } else if let Some(d) = strip_suffix_ci(v, &["gib", "gb", "g"]) {
        (d, 1024 * 1024 * 1024)
    } else {
        (v, 1)
    };
    let n = parse_u64(digits.trim())?;
    n.checked_mul(mult).ok_or_else(|| "size overflows u64".to_string())
}

fn strip_suffix_ci<'a>(v: &'a str, suffixes: &[&str]) -> Option<&'a str> {
    let lower = v.to_ascii_lowercase();
    for s in suffixes {
        if lower.ends_with(s) {
            return Some(&v[..v.len() - s.len()]);
        }
    }
    None
}

fn parse_f64(value: &str) -> Result<f64, String> {
    value.parse::<f64>().map_err(|e| e.to_string())
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

/// Energy coefficients are given in nJ/byte with up to three decimal places
/// and stored as exact integer pJ/byte.
fn parse_nj_to_pj(value: &str) -> Result<u64, String> {
    let (int_part, frac_part) = match value.split_once('.') {
        Some((i, f)) => (i, f),
        None => (value, ""),
    };
    if frac_part.len() > 3 {
        return Err("at most 3 decimal places (pJ resolution)".into());
    }
    let int: u64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|e: std::num::ParseIntError| e.to_string())?
    };
    let mut frac: u64 = 0;
    if !frac_part.is_empty() {
        frac = frac_part.parse().map_err(|e: std::num::ParseIntError| e.to_string())?;
        for _ in frac_part.len()..3 {
            frac *= 10;
        }
    }
    int.checked_mul(1000)
        .and_then(|v| v.checked_add(frac))
        .ok_or_else(|| "coefficient overflows".to_string())
}
