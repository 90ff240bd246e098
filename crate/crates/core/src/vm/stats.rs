use serde::Serialize;

use crate::isa::Instruction;

/// Dynamic wave-instruction counts by category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InstructionCounts {
    pub arith: u64,
    pub convert: u64,
    pub compare: u64,
    pub load: u64,
    pub store: u64,
    pub atomic: u64,
    pub shuffle: u64,
    pub barrier: u64,
    pub fence: u64,
    pub async_copy: u64,
    pub special: u64,
    pub control: u64,
    pub call: u64,
    pub matrix: u64,
    pub halt: u64,
}

impl InstructionCounts {
    pub fn record(&mut self, instr: &Instruction) {
        let slot = match instr {
            Instruction::Arith { .. } => &mut self.arith,
            Instruction::Cvt { .. } => &mut self.convert,
            Instruction::Cmp { .. } => &mut self.compare,
            Instruction::Ld { .. } => &mut self.load,
            Instruction::St { .. } => &mut self.store,
            Instruction::Atomic { .. } => &mut self.atomic,
            Instruction::Shfl { .. } => &mut self.shuffle,
            Instruction::Bar { .. } => &mut self.barrier,
            Instruction::Fence { .. } => &mut self.fence,
            Instruction::AsyncCopy { .. } | Instruction::WaitAsync { .. } => &mut self.async_copy,
            Instruction::ReadSpecial { .. } => &mut self.special,
            Instruction::If { .. }
            | Instruction::Else
            | Instruction::EndIf
            | Instruction::Loop
            | Instruction::Break { .. }
            | Instruction::EndLoop => &mut self.control,
            Instruction::Call { .. } | Instruction::Ret => &mut self.call,
            Instruction::Mma { .. } => &mut self.matrix,
            Instruction::Halt => &mut self.halt,
        };
        *slot += 1;
    }

    pub fn total(&self) -> u64 {
        self.arith
            + self.convert
            + self.compare
            + self.load
            + self.store
            + self.atomic
            + self.shuffle
            + self.barrier
            + self.fence
            + self.async_copy
            + self.special
            + self.control
            + self.call
            + self.matrix
            + self.halt
    }
}

/// Counters gathered over one launch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecStats {
    pub instructions: InstructionCounts,
    /// Barrier releases, summed over workgroups.
    pub barrier_rounds: u64,
    /// Executed wave-wide shuffle instructions.
    pub shuffle_steps: u64,
    pub bank_conflict_extra_cycles: u64,
    pub atomic_serializations: u64,
    pub scratch_bytes: u64,
    pub device_bytes: u64,
    pub scheduler_steps: u64,
    pub peak_resident_waves: u32,
    pub workgroups: u64,
    pub waves: u64,
    pub trace_hash: u64,
}

impl ExecStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// One scheduler step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub step: u64,
    pub workgroup: u32,
    pub wave: u32,
    pub pc: usize,
    pub mnemonic: String,
    pub mask: u64,
}

impl TraceRecord {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:x}",
            self.step, self.workgroup, self.wave, self.pc, self.mnemonic, self.mask
        )
    }
}

pub const TRACE_HEADER: &str = "step,wg,wave,pc,mnemonic,mask";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(FNV_OFFSET)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}
