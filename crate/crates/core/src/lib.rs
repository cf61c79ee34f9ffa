//! Deterministic, trace-driven simulator of a hybrid DRAM/NVM memory
//! system: a hybrid memory management unit with pluggable placement and
//! migration policies, ordered-response delivery via tag matching, a
//! block-granular DMA page-swap engine with mid-swap conflict redirection,
//! and stall-cycle-scaled latency emulation with per-device counters and an
//! energy estimator.

pub mod allocator;
pub mod config;
pub mod dma;
pub mod mem;
pub mod model;
pub mod pipeline;
pub mod placement;
pub mod report;
pub mod sim;
pub mod telemetry;
pub mod timing;
pub mod trace;
pub mod util;

pub use config::{validate_config, PolicyKind, SimConfig};
pub use model::{Cycles, Device, DeviceAddress, HostAddress, MemoryRequest, Op, Response, Tag};
pub use report::Report;
pub use sim::{run_records, run_synthetic, SimError, SimOutput, Simulator};
pub use trace::{parse_trace, parse_trace_file, validate_trace, SyntheticSpec, TraceRecord};
