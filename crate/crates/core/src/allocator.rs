//! Simulated middleware: a physical-frame pool over the hybrid window plus
//! an allocation front end honoring device-preference hints.
//!
//! The window is split by capacity into a DRAM-backed region and an
//! NVM-backed region of host frames. Hinted allocations draw from the hinted
//! region first and spill to the other; the redirection table is seeded with
//! the matching device page, and migration policies are free to move pages
//! afterwards.

use crate::config::SimConfig;
use crate::model::Device;
use crate::placement::RedirectionTable;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocError {
    #[error("allocation of {requested} bytes exceeds the {free} bytes free")]
    OutOfMemory { requested: u64, free: u64 },
    #[error("unknown allocation id {0}")]
    UnknownAllocation(u64),
    #[error("allocation size must be positive")]
    ZeroSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllocationHint {
    #[default]
    NoPreference,
    PreferDram,
    PreferNvm,
}

pub type AllocationId = u64;

/// A contiguous run of host addresses handed to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostRange {
    pub base: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct Allocation {
    pub id: AllocationId,
    pub frames: Vec<u64>,
    pub ranges: Vec<HostRange>,
    /// Frames that could not be satisfied from the hinted region.
    pub spilled_frames: u64,
}

/// Free/allocated frame accounting over the host window.
#[derive(Debug)]
pub struct FramePool {
    window_base: u64,
    page_size: u64,
    dram_frames: u64,
    total_frames: u64,
    free: [BTreeSet<u64>; 2],
    allocated: BTreeMap<AllocationId, Allocation>,
    next_id: AllocationId,
}

impl FramePool {
    pub fn new(cfg: &SimConfig) -> FramePool {
        let dram_frames = cfg.dram_pages();
        let total_frames = cfg.window_pages();
        FramePool {
            window_base: cfg.window_base,
            page_size: cfg.page_size,
            dram_frames,
            total_frames,
            free: [
                (0..dram_frames).collect(),
                (dram_frames..total_frames).collect(),
            ],
            allocated: BTreeMap::new(),
            next_id: 0,
        }
    }

    fn region(&self, frame: u64) -> Device {
        if frame < self.dram_frames {
            Device::Dram
        } else {
            Device::Nvm
        }
    }

    pub fn free_frames(&self) -> u64 {
        (self.free[0].len() + self.free[1].len()) as u64
    }

    pub fn allocated_frames(&self) -> u64 {
        self.allocated.values().map(|a| a.frames.len() as u64).sum()
    }

    pub fn total_frames(&self) -> u64 {
        self.total_frames
    }

    pub fn frame_address(&self, frame: u64) -> u64 {
        self.window_base + frame * self.page_size
    }

    /// Allocates page-granular frames, lowest address first, from the hinted
    /// region and then the other. Seeds the redirection table so each frame
    /// initially lives on its region's device.
    pub fn alloc(
        &mut self,
        bytes: u64,
        hint: AllocationHint,
        table: &mut RedirectionTable,
    ) -> Result<&Allocation, AllocError> {
        if bytes == 0 {
            return Err(AllocError::ZeroSize);
        }
        let needed = bytes.div_ceil(self.page_size);
        let free = self.free_frames();
        if needed > free {
            return Err(AllocError::OutOfMemory {
                requested: bytes,
                free: free * self.page_size,
            });
        }
        let order: [Device; 2] = match hint {
            AllocationHint::PreferDram | AllocationHint::NoPreference => [Device::Dram, Device::Nvm],
            AllocationHint::PreferNvm => [Device::Nvm, Device::Dram],
        };
        let mut frames = Vec::with_capacity(needed as usize);
        let mut spilled = 0u64;
        for (i, region) in order.iter().enumerate() {
            while frames.len() < needed as usize {
                let set = &mut self.free[region.index()];
                match set.iter().next().copied() {
                    Some(frame) => {
                        set.remove(&frame);
                        if i == 1 && hint != AllocationHint::NoPreference {
                            spilled += 1;
                        }
                        frames.push(frame);
                    }
                    None => break,
                }
            }
        }
        debug_assert_eq!(frames.len() as u64, needed);
        for &frame in &frames {
            if table.entry(frame).is_none() {
                table.map_first_touch(frame, self.region(frame));
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let ranges = coalesce(&frames, self.window_base, self.page_size);
        self.allocated.insert(
            id,
            Allocation {
                id,
                frames,
                ranges,
                spilled_frames: spilled,
            },
        );
        Ok(self.allocated.get(&id).unwrap())
    }

    /// Returns the allocation's frames to the free lists.
    pub fn free(&mut self, id: AllocationId) -> Result<(), AllocError> {
        let alloc = self
            .allocated
            .remove(&id)
            .ok_or(AllocError::UnknownAllocation(id))?;
        for frame in alloc.frames {
            let inserted = self.free[self.region(frame).index()].insert(frame);
            debug_assert!(inserted, "frame {frame} double-freed");
        }
        Ok(())
    }

    pub fn allocation(&self, id: AllocationId) -> Option<&Allocation> {
        self.allocated.get(&id)
    }

    /// Free and allocated frame sets must partition the window.
    pub fn check_conservation(&self) -> bool {
        let mut seen = BTreeSet::new();
        for set in &self.free {
            for &f in set {
                if !seen.insert(f) {
                    return false;
                }
            }
        }
        for alloc in self.allocated.values() {
            for &f in &alloc.frames {
                if !seen.insert(f) {
                    return false;
                }
            }
        }
        seen.len() as u64 == self.total_frames
    }
}

fn coalesce(frames: &[u64], window_base: u64, page_size: u64) -> Vec<HostRange> {
    let mut sorted = frames.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<HostRange> = Vec::new();
    for f in sorted {
        let base = window_base + f * page_size;
        match out.last_mut() {
            Some(last) if last.base + last.bytes == base => last.bytes += page_size,
            _ => out.push(HostRange { base, bytes: page_size }),
        }
    }
    out
}
