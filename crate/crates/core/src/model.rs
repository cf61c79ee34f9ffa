//! Shared domain types: addresses, requests, responses, the cycle clock.

use serde::Serialize;

/// Simulation time in cycles. The ns-per-cycle scale lives in the config;
/// only ratios matter for latency emulation.
pub type Cycles = u64;

/// Issue-order tag. Assigned densely from zero by the pipeline at ingestion.
pub type Tag = u64;

/// The two memory devices behind the hybrid window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Dram,
    Nvm,
}

impl Device {
    pub const ALL: [Device; 2] = [Device::Dram, Device::Nvm];

    pub fn index(self) -> usize {
        match self {
            Device::Dram => 0,
            Device::Nvm => 1,
        }
    }

    pub fn other(self) -> Device {
        match self {
            Device::Dram => Device::Nvm,
            Device::Nvm => Device::Dram,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Device::Dram => "dram",
            Device::Nvm => "nvm",
        }
    }
}

/// Byte address within the hybrid window as seen by the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct HostAddress(pub u64);

impl HostAddress {
    pub fn value(self) -> u64 {
        self.0
    }
}

/// Byte address within one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DeviceAddress {
    pub device: Device,
    pub offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Read,
    Write,
}

impl Op {
    pub fn is_read(self) -> bool {
        matches!(self, Op::Read)
    }
}

/// One post-cache memory request as ingested from a trace.
///
/// `payload` is present iff `op == Write` and its length equals `size`.
#[derive(Debug, Clone)]
pub struct MemoryRequest {
    pub op: Op,
    pub addr: HostAddress,
    pub size: u32,
    pub arrival: Cycles,
    pub tag: Tag,
    pub payload: Option<Vec<u8>>,
}

/// A page-local slice of a request after splitting. Ordering within the
/// parent is preserved by `index`.
#[derive(Debug, Clone)]
pub struct SubRequest {
    pub tag: Tag,
    pub index: u32,
    pub op: Op,
    pub addr: HostAddress,
    /// Byte offset of this slice within the parent request.
    pub parent_offset: u32,
    pub size: u32,
    pub arrival: Cycles,
}

/// Response released to the host, strictly in tag order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub tag: Tag,
    pub op: Op,
    /// Present iff `op == Read`; length equals the request size.
    pub data: Option<Vec<u8>>,
    pub completion: Cycles,
}

/// Splits a request at page boundaries. The slices cover the request's byte
/// range exactly and none crosses a page boundary; concatenating read data by
/// `parent_offset` reconstructs the original range.
pub fn split_request(req: &MemoryRequest, page_size: u64) -> Vec<SubRequest> {
    debug_assert!(req.size >= 1);
    debug_assert!(page_size.is_power_of_two());
    let mut subs = Vec::with_capacity(1);
    let mut addr = req.addr.0;
    let end = req.addr.0 + u64::from(req.size);
    let mut index = 0u32;
    while addr < end {
        let page_end = (addr & !(page_size - 1)) + page_size;
        let len = page_end.min(end) - addr;
        subs.push(SubRequest {
            tag: req.tag,
            index,
            op: req.op,
            addr: HostAddress(addr),
            parent_offset: (addr - req.addr.0) as u32,
            size: len as u32,
            arrival: req.arrival,
        });
        addr += len;
        index += 1;
    }
    subs
}

/// Deterministic payload bytes for a write, derived from the run seed and the
/// request identity. Traces carry no data; the simulator and any replay of
/// the same trace materialize identical payloads from this function.
pub fn synth_payload(seed: u64, tag: Tag, size: u32) -> Vec<u8> {
    let mut state = splitmix64(seed ^ tag.wrapping_mul(0x9e3779b97f4a7c15));
    let mut out = Vec::with_capacity(size as usize);
    while out.len() < size as usize {
        state = splitmix64(state);
        let chunk = state.to_le_bytes();
        let take = (size as usize - out.len()).min(8);
        out.extend_from_slice(&chunk[..take]);
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
