/// Flat little-endian device memory with a bump allocator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceMemory {
    bytes: Vec<u8>,
    next: u32,
    high_water: u32,
}

pub const DEFAULT_DEVICE_BYTES: usize = 64 << 20;
const ALLOC_ALIGN: u32 = 256;

impl Default for DeviceMemory {
    fn default() -> Self {
        DeviceMemory::new(DEFAULT_DEVICE_BYTES)
    }
}

impl DeviceMemory {
    pub fn new(size: usize) -> Self {
        assert!(size <= u32::MAX as usize, "device memory is 32-bit addressed");
        DeviceMemory {
            bytes: vec![0; size],
            next: 0,
            high_water: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Reserves `size` zeroed bytes and returns their address, or `None` when
    /// memory is exhausted.
    pub fn alloc(&mut self, size: u32) -> Option<u32> {
        let start = self.next;
        let end = start.checked_add(size)?;
        if end as usize > self.bytes.len() {
            return None;
        }
        self.next = end.div_ceil(ALLOC_ALIGN).saturating_mul(ALLOC_ALIGN);
        self.high_water = self.high_water.max(end);
        Some(start)
    }

    /// One past the highest byte allocated or written.
    pub fn high_water(&self) -> u32 {
        self.high_water
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn in_bounds(&self, addr: u64, size: u64) -> bool {
        addr + size <= self.bytes.len() as u64
    }

    pub fn write_bytes(&mut self, addr: u32, data: &[u8]) {
        let a = addr as usize;
        self.bytes[a..a + data.len()].copy_from_slice(data);
        self.high_water = self.high_water.max(addr + data.len() as u32);
    }

    pub fn read_bytes(&self, addr: u32, len: usize) -> &[u8] {
        &self.bytes[addr as usize..addr as usize + len]
    }

    pub fn write_u32s(&mut self, addr: u32, words: &[u32]) {
        let data: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        self.write_bytes(addr, &data);
    }

    pub fn write_f32s(&mut self, addr: u32, values: &[f32]) {
        let data: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.write_bytes(addr, &data);
    }

    pub fn read_u32s(&self, addr: u32, count: usize) -> Vec<u32> {
        self.read_bytes(addr, count * 4)
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    pub fn read_f32s(&self, addr: u32, count: usize) -> Vec<f32> {
        self.read_u32s(addr, count).into_iter().map(f32::from_bits).collect()
    }

    pub fn load(&self, addr: u32, size: u32) -> u32 {
        let mut buf = [0u8; 4];
        buf[..size as usize].copy_from_slice(self.read_bytes(addr, size as usize));
        u32::from_le_bytes(buf)
    }

    pub fn store(&mut self, addr: u32, size: u32, value: u32) {
        let bytes = value.to_le_bytes();
        self.write_bytes(addr, &bytes[..size as usize]);
    }
}
