//! The address redirection layer that presents one flat memory space over
//! the two devices, plus the pluggable routing/migration policies.

use crate::config::{PolicyKind, SimConfig};
use crate::model::{Cycles, Device, DeviceAddress, HostAddress, SubRequest};
use crate::util::SeqHashMap;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlacementError {
    #[error("address {0:#x} is outside the hybrid window")]
    OutOfWindow(u64),
    #[error("host page {0} has no mapping and first-touch is disabled")]
    UnmappedPage(u64),
    #[error("cannot swap host page {0} with itself")]
    SwapPagesIdentical(u64),
    #[error("host page {0} is not mapped")]
    SwapPageUnmapped(u64),
}

/// Page-granular location of a host page on a device.
pub type DevicePage = (Device, u64);

/// Host-page-indexed map to device pages. Injective by construction: device
/// pages are handed out from per-device free lists and returned only on
/// swaps (which exchange, never duplicate).
#[derive(Debug)]
pub struct RedirectionTable {
    window_base: u64,
    page_size: u64,
    window_pages: u64,
    entries: Vec<Option<DevicePage>>,
    free: [BTreeSet<u64>; 2],
    mapped: [u64; 2],
    device_pages: [u64; 2],
}

impl RedirectionTable {
    pub fn new(cfg: &SimConfig) -> RedirectionTable {
        let window_pages = cfg.window_pages();
        let dram_pages = cfg.dram_pages();
        let nvm_pages = cfg.nvm_pages();
        RedirectionTable {
            window_base: cfg.window_base,
            page_size: cfg.page_size,
            window_pages,
            entries: vec![None; window_pages as usize],
            free: [(0..dram_pages).collect(), (0..nvm_pages).collect()],
            mapped: [0, 0],
            device_pages: [dram_pages, nvm_pages],
        }
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    pub fn window_pages(&self) -> u64 {
        self.window_pages
    }

    pub fn host_page(&self, addr: HostAddress) -> Result<u64, PlacementError> {
        if addr.0 < self.window_base {
            return Err(PlacementError::OutOfWindow(addr.0));
        }
        let page = (addr.0 - self.window_base) / self.page_size;
        if page >= self.window_pages {
            return Err(PlacementError::OutOfWindow(addr.0));
        }
        Ok(page)
    }

    pub fn entry(&self, host_page: u64) -> Option<DevicePage> {
        self.entries.get(host_page as usize).copied().flatten()
    }

    /// Translates a host address to its device address, preserving the
    /// offset within the page. Fails if the page has never been mapped.
    pub fn lookup(&self, addr: HostAddress) -> Result<DeviceAddress, PlacementError> {
        let page = self.host_page(addr)?;
        let (device, device_page) = self
            .entry(page)
            .ok_or(PlacementError::UnmappedPage(page))?;
        let within = (addr.0 - self.window_base) % self.page_size;
        Ok(DeviceAddress {
            device,
            offset: device_page * self.page_size + within,
        })
    }

    /// Installs a first-touch mapping on `device`, taking the lowest free
    /// device page. Falls back to the other device when full.
    pub fn map_first_touch(&mut self, host_page: u64, preferred: Device) -> DevicePage {
        debug_assert!(self.entry(host_page).is_none());
        let device = if self.free[preferred.index()].is_empty() {
            preferred.other()
        } else {
            preferred
        };
        let set = &mut self.free[device.index()];
        let page = *set.iter().next().expect("window pages never exceed device pages");
        set.remove(&page);
        self.mapped[device.index()] += 1;
        self.entries[host_page as usize] = Some((device, page));
        (device, page)
    }

    /// Exchanges the mappings of two host pages. All other entries are
    /// untouched and injectivity is preserved.
    pub fn commit_swap(&mut self, page_a: u64, page_b: u64) -> Result<(), PlacementError> {
        if page_a == page_b {
            return Err(PlacementError::SwapPagesIdentical(page_a));
        }
        let a = self.entry(page_a).ok_or(PlacementError::SwapPageUnmapped(page_a))?;
        let b = self.entry(page_b).ok_or(PlacementError::SwapPageUnmapped(page_b))?;
        // per-device residency totals are invariant under an exchange
        self.entries[page_a as usize] = Some(b);
        self.entries[page_b as usize] = Some(a);
        Ok(())
    }

    pub fn mapped_pages(&self, device: Device) -> u64 {
        // commit_swap exchanges devices pairwise, so track by scanning-free
        // counters kept at map time plus swap symmetry: a swap moves one page
        // to each device, leaving the totals unchanged only when devices
        // differ, which start_swap guarantees.
        self.mapped[device.index()]
    }

    pub fn free_pages(&self, device: Device) -> u64 {
        self.free[device.index()].len() as u64
    }

    pub fn device_pages(&self, device: Device) -> u64 {
        self.device_pages[device.index()]
    }

    pub fn occupancy(&self, device: Device) -> f64 {
        self.mapped[device.index()] as f64 / self.device_pages[device.index()].max(1) as f64
    }

    /// Host pages currently resident on `device`, ascending.
    pub fn pages_on_device(&self, device: Device) -> impl Iterator<Item = u64> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| matches!(e, Some((d, _)) if *d == device))
            .map(|(i, _)| i as u64)
    }

    /// Mapped host pages in ascending order with their device locations.
    pub fn iter_mapped(&self) -> impl Iterator<Item = (u64, DevicePage)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|dp| (i as u64, dp)))
    }
}

/// Per-page access counters over fixed epochs.
#[derive(Debug)]
pub struct HotnessState {
    epoch_cycles: Cycles,
    current_epoch: u64,
    counters: SeqHashMap<u64, u32>,
}

impl HotnessState {
    pub fn new(epoch_cycles: Cycles) -> HotnessState {
        HotnessState {
            epoch_cycles: epoch_cycles.max(1),
            current_epoch: 0,
            counters: SeqHashMap::default(),
        }
    }

    fn roll(&mut self, now: Cycles) {
        let epoch = now / self.epoch_cycles;
        if epoch != self.current_epoch {
            self.counters.clear();
            self.current_epoch = epoch;
        }
    }

    /// Counts one access and returns the page's counter in this epoch.
    pub fn observe(&mut self, host_page: u64, now: Cycles) -> u32 {
        self.roll(now);
        let c = self.counters.entry(host_page).or_insert(0);
        *c += 1;
        *c
    }

    pub fn count(&self, host_page: u64) -> u32 {
        self.counters.get(&host_page).copied().unwrap_or(0)
    }
}

/// Routing outcome for one page-local request: where it goes, and an
/// optional swap directive the DMA should pick up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyAction {
    pub route: DeviceAddress,
    pub migrate: Option<(u64, u64)>,
}

/// Policy state: selection plus the hotness bookkeeping used by the
/// hotness policy. Policies observe the table and emit intents; the table
/// mutations (first touch, swap commits) stay with the mechanics here and
/// in the DMA engine.
#[derive(Debug)]
pub struct PolicyEngine {
    kind: PolicyKind,
    pub hotness: HotnessState,
    threshold: u32,
    watermark: f64,
    pub first_touch: [u64; 2],
    pub migrations_triggered: u64,
}

impl PolicyEngine {
    pub fn new(cfg: &SimConfig) -> PolicyEngine {
        PolicyEngine {
            kind: cfg.policy,
            hotness: HotnessState::new(cfg.epoch_cycles),
            threshold: cfg.promote_threshold.max(1),
            watermark: cfg.dram_watermark,
            first_touch: [0, 0],
            migrations_triggered: 0,
        }
    }

    /// First-touch device preference: DRAM until the occupancy watermark,
    /// then NVM.
    fn first_touch_device(&self, table: &RedirectionTable) -> Device {
        if table.free_pages(Device::Dram) > 0 && table.occupancy(Device::Dram) < self.watermark {
            Device::Dram
        } else if table.free_pages(Device::Nvm) > 0 {
            Device::Nvm
        } else {
            Device::Dram
        }
    }

    /// Routes one page-local request, installing a first-touch mapping if
    /// needed, and fires a migrate directive when the policy's trigger
    /// crosses and neither page is already part of an in-flight swap.
    pub fn on_access(
        &mut self,
        req: &SubRequest,
        table: &mut RedirectionTable,
        swap_busy: &dyn Fn(u64) -> bool,
        now: Cycles,
    ) -> Result<PolicyAction, PlacementError> {
        let host_page = table.host_page(req.addr)?;
        if table.entry(host_page).is_none() {
            let device = self.first_touch_device(table);
            let (placed, _) = table.map_first_touch(host_page, device);
            self.first_touch[placed.index()] += 1;
        }
        let route = table.lookup(req.addr)?;

        let migrate = match self.kind {
            PolicyKind::Static => None,
            PolicyKind::Hotness => {
                let count = self.hotness.observe(host_page, now);
                if route.device == Device::Nvm && count == self.threshold && !swap_busy(host_page) {
                    match select_victim(&self.hotness, table) {
                        Some(victim) if !swap_busy(victim) => {
                            self.migrations_triggered += 1;
                            Some((host_page, victim))
                        }
                        _ => None,
                    }
                } else {
                    None
                }
            }
        };
        Ok(PolicyAction { route, migrate })
    }
}

/// The DRAM-resident host page with the lowest current-epoch counter, ties
/// broken by lowest page number. None while DRAM still has a free page
/// (free frames are preferred over eviction) or when nothing is resident.
pub fn select_victim(hotness: &HotnessState, table: &RedirectionTable) -> Option<u64> {
    if table.free_pages(Device::Dram) > 0 {
        return None;
    }
    table
        .pages_on_device(Device::Dram)
        .map(|page| (hotness.count(page), page))
        .min()
        .map(|(_, page)| page)
}
