//! Per-device service latency and the stall-cycle scaling that turns a DRAM
//! baseline into an emulated slower technology.
//!
//! Calibration mirrors the hardware procedure: measure the round-trip time of
//! the baseline device in cycles first, then scale the stall cycles by the
//! speed ratio between the baseline and the emulated technology. Because the
//! measured round trip includes the control and link terms, the emulated vs
//! baseline latency ratio lands exactly on target_ns/base_ns.

use crate::config::SimConfig;
use crate::model::{Cycles, Device, Op};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Timing description for one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceTimingConfig {
    /// Device-portion cycles of the baseline DIMM round trip.
    pub base_read_cycles: Cycles,
    pub base_write_cycles: Cycles,
    /// Baseline technology latency (DRAM) in ns.
    pub base_read_ns: u64,
    pub base_write_ns: u64,
    /// Emulated technology latency in ns. Equal to base for a native device.
    pub target_read_ns: u64,
    pub target_write_ns: u64,
    pub outstanding_slots: u32,
}

impl DeviceTimingConfig {
    pub fn for_device(cfg: &SimConfig, device: Device) -> DeviceTimingConfig {
        let (target_read_ns, target_write_ns) = match device {
            Device::Dram => (cfg.dram_read_ns, cfg.dram_write_ns),
            Device::Nvm => (cfg.nvm_read_ns, cfg.nvm_write_ns),
        };
        DeviceTimingConfig {
            base_read_cycles: cfg.base_read_cycles,
            base_write_cycles: cfg.base_write_cycles,
            base_read_ns: cfg.dram_read_ns,
            base_write_ns: cfg.dram_write_ns,
            target_read_ns,
            target_write_ns,
            outstanding_slots: cfg.outstanding_slots,
        }
    }
}

/// Extra cycles to insert so that a baseline taking `base_cycles` exhibits
/// `target_ns` instead of `base_ns`. Rounded to the nearest cycle; zero
/// exactly when the target is not slower than the baseline, so a strictly
/// slower target always stalls at least one cycle.
pub fn derive_stall_cycles(base_cycles: Cycles, base_ns: u64, target_ns: u64) -> Cycles {
    debug_assert!(base_cycles >= 1 && base_ns > 0 && target_ns > 0);
    if target_ns <= base_ns {
        return 0;
    }
    let num = (base_cycles as u128) * ((target_ns - base_ns) as u128);
    let den = base_ns as u128;
    // round half up
    (((2 * num + den) / (2 * den)) as u64).max(1)
}

/// One live device: a bank of service slots plus the constant latency terms.
/// Slot accounting is enough to realize FIFO service order; requests are
/// offered in arrival order and `service` assigns the earliest free slot.
#[derive(Debug, Clone)]
pub struct DeviceState {
    slot_free: BinaryHeap<Reverse<Cycles>>,
    read_latency: Cycles,
    write_latency: Cycles,
    link_latency: Cycles,
}

/// Outcome of scheduling one request on a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceTimes {
    /// Instant the device starts the access; the data effect binds here.
    pub start: Cycles,
    /// Instant the response is available back at the host.
    pub completion: Cycles,
}

impl DeviceState {
    pub fn new(
        base_read: Cycles,
        base_write: Cycles,
        stall_read: Cycles,
        stall_write: Cycles,
        slots: u32,
        link_latency: Cycles,
    ) -> DeviceState {
        let mut slot_free = BinaryHeap::with_capacity(slots as usize);
        for _ in 0..slots.max(1) {
            slot_free.push(Reverse(0));
        }
        DeviceState {
            slot_free,
            read_latency: base_read + stall_read,
            write_latency: base_write + stall_write,
            link_latency,
        }
    }

    pub fn latency(&self, op: Op) -> Cycles {
        match op {
            Op::Read => self.read_latency,
            Op::Write => self.write_latency,
        }
    }

    /// Schedules one access: seize the earliest free slot no sooner than
    /// `now`, hold it for the device latency, and complete after the link.
    /// Calls must be made in arrival order; start times are then
    /// non-decreasing, which keeps the data-effect order FIFO per device.
    pub fn service(&mut self, op: Op, now: Cycles) -> ServiceTimes {
        let start = self.seize(now);
        let busy_until = start + self.latency(op);
        self.slot_free.push(Reverse(busy_until));
        ServiceTimes {
            start,
            completion: busy_until + self.link_latency,
        }
    }

    /// Claims a slot for `busy` cycles without the link term; used by the
    /// DMA, whose transfers share the device port with demand traffic.
    /// Returns the busy-end time.
    pub fn occupy(&mut self, now: Cycles, busy: Cycles) -> Cycles {
        let start = self.seize(now);
        let busy_until = start + busy;
        self.slot_free.push(Reverse(busy_until));
        busy_until
    }

    fn seize(&mut self, now: Cycles) -> Cycles {
        let Reverse(free) = self.slot_free.pop().expect("device has at least one slot");
        now.max(free)
    }
}

/// Round-trip means per op class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    pub read_mean: f64,
    pub write_mean: f64,
}

/// Stall-calibrated per-device states for a run, plus the measured baseline.
pub struct TimingModel {
    devices: [DeviceState; 2],
    pub baseline_round_trip: RoundTrip,
    pub nvm_stall_read: Cycles,
    pub nvm_stall_write: Cycles,
}

impl TimingModel {
    /// Builds both devices. The DRAM round trip (control + device + link) is
    /// probed first and the NVM stalls are scaled from it, so the end-to-end
    /// latency ratio equals the configured ns ratio.
    pub fn from_config(cfg: &SimConfig) -> TimingModel {
        let baseline_dev = DeviceState::new(
            cfg.base_read_cycles,
            cfg.base_write_cycles,
            0,
            0,
            1,
            cfg.link_latency,
        );
        let baseline = closed_loop_probe(&baseline_dev, cfg.control_delay, 64);
        let rt_read = baseline.read_mean.round() as u64;
        let rt_write = baseline.write_mean.round() as u64;
        let build = |device: Device| -> (DeviceState, Cycles, Cycles) {
            let timing = DeviceTimingConfig::for_device(cfg, device);
            let stall_read = derive_stall_cycles(rt_read, timing.base_read_ns, timing.target_read_ns);
            let stall_write =
                derive_stall_cycles(rt_write, timing.base_write_ns, timing.target_write_ns);
            let state = DeviceState::new(
                timing.base_read_cycles,
                timing.base_write_cycles,
                stall_read,
                stall_write,
                timing.outstanding_slots,
                cfg.link_latency,
            );
            (state, stall_read, stall_write)
        };
        let (dram, _, _) = build(Device::Dram);
        let (nvm, nvm_stall_read, nvm_stall_write) = build(Device::Nvm);
        TimingModel {
            devices: [dram, nvm],
            baseline_round_trip: baseline,
            nvm_stall_read,
            nvm_stall_write,
        }
    }

    pub fn device_mut(&mut self, device: Device) -> &mut DeviceState {
        &mut self.devices[device.index()]
    }

    pub fn device(&self, device: Device) -> &DeviceState {
        &self.devices[device.index()]
    }
}

/// Runs a closed-loop probe stream through an idle simulated device from the
/// calibrated model and reports the mean request-to-response cycles per op
/// class. Deterministic, so one sample equals any number of samples.
pub fn measure_round_trip(cfg: &SimConfig, device: Device, samples: u64) -> RoundTrip {
    assert!(samples >= 1);
    let model = TimingModel::from_config(cfg);
    closed_loop_probe(model.device(device), cfg.control_delay, samples)
}

fn closed_loop_probe(device: &DeviceState, control_delay: Cycles, samples: u64) -> RoundTrip {
    let probe = |op: Op| -> f64 {
        let mut state = device.clone();
        let mut now = 0u64;
        let mut total = 0u128;
        for _ in 0..samples {
            let issued = now + control_delay;
            let times = state.service(op, issued);
            total += u128::from(times.completion - now);
            now = times.completion;
        }
        total as f64 / samples as f64
    };
    RoundTrip {
        read_mean: probe(Op::Read),
        write_mean: probe(Op::Write),
    }
}
