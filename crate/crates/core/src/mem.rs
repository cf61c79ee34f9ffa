//! Byte-accurate device contents, materialized lazily per page.

use crate::model::Device;
use crate::util::SeqHashMap;

/// One device's backing store. Pages are materialized on first write; reads
/// of untouched ranges observe zeros without allocating.
#[derive(Debug)]
pub struct DeviceMemory {
    page_size: u64,
    pages: SeqHashMap<u64, Box<[u8]>>,
}

impl DeviceMemory {
    pub fn new(page_size: u64) -> DeviceMemory {
        DeviceMemory {
            page_size,
            pages: SeqHashMap::default(),
        }
    }

    /// Reads `buf.len()` bytes at a page-local range. `offset` and the range
    /// end must fall within one page.
    pub fn read(&self, offset: u64, buf: &mut [u8]) {
        let (page, within) = self.locate(offset, buf.len());
        match self.pages.get(&page) {
            Some(bytes) => buf.copy_from_slice(&bytes[within..within + buf.len()]),
            None => buf.fill(0),
        }
    }

    pub fn write(&mut self, offset: u64, data: &[u8]) {
        let (page, within) = self.locate(offset, data.len());
        let page_size = self.page_size as usize;
        let bytes = self
            .pages
            .entry(page)
            .or_insert_with(|| vec![0u8; page_size].into_boxed_slice());
        bytes[within..within + data.len()].copy_from_slice(data);
    }

    /// Copy of one full page, zeros if never written.
    pub fn page_copy(&self, page: u64) -> Vec<u8> {
        match self.pages.get(&page) {
            Some(bytes) => bytes.to_vec(),
            None => vec![0u8; self.page_size as usize],
        }
    }

    pub fn total_bytes_nonzero(&self) -> u64 {
        self.pages
            .values()
            .map(|p| p.iter().filter(|&&b| b != 0).count() as u64)
            .sum()
    }

    fn locate(&self, offset: u64, len: usize) -> (u64, usize) {
        let page = offset / self.page_size;
        let within = (offset % self.page_size) as usize;
        debug_assert!(
            within + len <= self.page_size as usize,
            "access crosses a device page boundary"
        );
        (page, within)
    }
}

/// Both devices' contents.
#[derive(Debug)]
pub struct HybridMemory {
    dram: DeviceMemory,
    nvm: DeviceMemory,
}

impl HybridMemory {
    pub fn new(page_size: u64) -> HybridMemory {
        HybridMemory {
            dram: DeviceMemory::new(page_size),
            nvm: DeviceMemory::new(page_size),
        }
    }

    pub fn device(&self, d: Device) -> &DeviceMemory {
        match d {
            Device::Dram => &self.dram,
            Device::Nvm => &self.nvm,
        }
    }

    pub fn device_mut(&mut self, d: Device) -> &mut DeviceMemory {
        match d {
            Device::Dram => &mut self.dram,
            Device::Nvm => &mut self.nvm,
        }
    }

    /// Exchanges `len` bytes between two device locations through a staging
    /// copy, as one atomic step.
    pub fn exchange(&mut self, a: (Device, u64), b: (Device, u64), len: usize) {
        let mut buf_a = vec![0u8; len];
        let mut buf_b = vec![0u8; len];
        self.device(a.0).read(a.1, &mut buf_a);
        self.device(b.0).read(b.1, &mut buf_b);
        self.device_mut(a.0).write(a.1, &buf_b);
        self.device_mut(b.0).write(b.1, &buf_a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwritten_reads_are_zero() {
        let mem = DeviceMemory::new(4096);
        let mut buf = [0xffu8; 16];
        mem.read(123, &mut buf);
        assert!(buf.iter().all(|&b| b == 0));
    }

    #[test]
    fn write_then_read_roundtrip() {
        let mut mem = DeviceMemory::new(4096);
        mem.write(4096 + 100, &[1, 2, 3, 4]);
        let mut buf = [0u8; 4];
        mem.read(4096 + 100, &mut buf);
        assert_eq!(buf, [1, 2, 3, 4]);
    }

    #[test]
    fn exchange_swaps_and_conserves_bytes() {
        let mut mem = HybridMemory::new(4096);
        mem.device_mut(Device::Dram).write(0, &[7u8; 8]);
        mem.device_mut(Device::Nvm).write(512, &[9u8; 8]);
        let before = mem.device(Device::Dram).total_bytes_nonzero()
            + mem.device(Device::Nvm).total_bytes_nonzero();
        mem.exchange((Device::Dram, 0), (Device::Nvm, 512), 8);
        let mut buf = [0u8; 8];
        mem.device(Device::Dram).read(0, &mut buf);
        assert_eq!(buf, [9u8; 8]);
        mem.device(Device::Nvm).read(512, &mut buf);
        assert_eq!(buf, [7u8; 8]);
        let after = mem.device(Device::Dram).total_bytes_nonzero()
            + mem.device(Device::Nvm).total_bytes_nonzero();
        assert_eq!(before, after);
    }
}
