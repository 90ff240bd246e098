//! Deterministic SIMT simulator.
//!
//! A launch runs a validated [`Program`] over a grid of workgroups. Each
//! workgroup is split into waves of `W` lanes that execute in lockstep under
//! an active mask. Waves are interleaved by a seeded scheduler, so the same
//! seed always replays the same schedule.

mod atomic;
mod banks;
mod control;
mod exec;
mod memory;
mod numeric;
mod race;
mod shuffle;
mod stats;

use std::fmt;

use serde::Serialize;

use crate::isa::{Program, ValidationDiagnostic};
use crate::machcfg::MachineDescriptor;

pub use atomic::{eval_atomic, serializations};
pub use banks::count_bank_conflicts;
pub use control::{apply_control, flatten, ControlState, ControlTable, DivergenceEntry, Targets};
pub use memory::{DeviceMemory, DEFAULT_DEVICE_BYTES};
pub use numeric::{arith, compare, convert, DivisionByZero};
pub use race::{RaceDetector, RaceKind, RaceReport, Site};
pub use shuffle::{eval_shuffle, source_lane};
pub use stats::{ExecStats, Fnv1a, InstructionCounts, TraceRecord, TRACE_HEADER};

/// One bit per lane.
pub type LaneMask = u64;

pub const MAX_DIVERGENCE_DEPTH: usize = 32;
pub const MAX_CALL_DEPTH: usize = 64;
pub const DEFAULT_MAX_STEPS: u64 = 200_000_000;

pub fn full_mask(lanes: u32) -> LaneMask {
    if lanes >= 64 {
        u64::MAX
    } else {
        (1u64 << lanes) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dim3 {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Dim3 {
    pub const fn new(x: u32, y: u32, z: u32) -> Self {
        Dim3 { x, y, z }
    }

    pub const fn linear(x: u32) -> Self {
        Dim3 { x, y: 1, z: 1 }
    }

    pub fn count(self) -> u64 {
        u64::from(self.x) * u64::from(self.y) * u64::from(self.z)
    }
}

impl fmt::Display for Dim3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

impl std::str::FromStr for Dim3 {
    type Err = String;

    /// Accepts `X`, `XxY` or `XxYxZ`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
        if parts.is_empty() || parts.len() > 3 {
            return Err(format!("bad dimensions '{s}'"));
        }
        let mut dims = [1u32; 3];
        for (slot, p) in dims.iter_mut().zip(&parts) {
            *slot = p.trim().parse().map_err(|_| format!("bad dimensions '{s}'"))?;
            if *slot == 0 {
                return Err(format!("dimensions must be positive: '{s}'"));
            }
        }
        Ok(Dim3::new(dims[0], dims[1], dims[2]))
    }
}

#[derive(Debug, Clone)]
pub struct LaunchConfig {
    pub machine: MachineDescriptor,
    pub grid: Dim3,
    pub workgroup: Dim3,
    /// Words readable through the `arg` space.
    pub args: Vec<u32>,
    pub seed: u64,
    /// Keep as many workgroups resident as occupancy allows instead of
    /// running them one after another.
    pub interleave_workgroups: bool,
    pub check_races: bool,
    pub trace: bool,
    pub max_steps: u64,
}

impl LaunchConfig {
    pub fn new(machine: MachineDescriptor, grid: Dim3, workgroup: Dim3) -> Self {
        LaunchConfig {
            machine,
            grid,
            workgroup,
            args: Vec::new(),
            seed: 0,
            interleave_workgroups: false,
            check_races: false,
            trace: false,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_args(mut self, args: Vec<u32>) -> Self {
        self.args = args;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn waves_per_workgroup(&self) -> u32 {
        (self.workgroup.count() as u32).div_ceil(self.machine.wave_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    BarrierDivergence,
    BarrierId,
    OutOfBounds,
    Misaligned,
    DivisionByZero,
    ShuffleOperand,
    CallStackOverflow,
    DivergenceStackOverflow,
    DivergenceStackUnderflow,
    MaskRestoration,
    Deadlock,
    StepLimit,
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrapKind::BarrierDivergence => "barrier under divergence",
            TrapKind::BarrierId => "barrier id out of range",
            TrapKind::OutOfBounds => "memory access out of bounds",
            TrapKind::Misaligned => "misaligned memory access",
            TrapKind::DivisionByZero => "integer division by zero",
            TrapKind::ShuffleOperand => "shuffle lane operand outside the wave",
            TrapKind::CallStackOverflow => "call stack overflow",
            TrapKind::DivergenceStackOverflow => "divergence stack overflow",
            TrapKind::DivergenceStackUnderflow => "divergence stack underflow",
            TrapKind::MaskRestoration => "active mask not restored at reconvergence",
            TrapKind::Deadlock => "deadlock: waves wait at different barriers",
            TrapKind::StepLimit => "step limit exceeded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trap {
    pub kind: TrapKind,
    pub workgroup: u32,
    /// Wave index within the workgroup.
    pub wave: u32,
    pub pc: usize,
    pub detail: String,
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trap: {} (workgroup {}, wave {}, pc {})",
            self.kind, self.workgroup, self.wave, self.pc
        )?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Trapped(Trap),
}

#[derive(Debug, Clone)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub memory: DeviceMemory,
    pub stats: ExecStats,
    pub races: Vec<RaceReport>,
    /// Filled only when tracing was requested.
    pub trace: Vec<TraceRecord>,
}

impl ExecResult {
    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn trap(&self) -> Option<&Trap> {
        match &self.outcome {
            Outcome::Trapped(t) => Some(t),
            Outcome::Completed => None,
        }
    }
}

/// Reasons a launch is refused before any instruction runs.
#[derive(Debug, Clone, PartialEq)]
pub enum LaunchError {
    Invalid(Vec<ValidationDiagnostic>),
    Config(String),
}

impl fmt::Display for LaunchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LaunchError::Invalid(diags) => {
                write!(f, "program failed validation")?;
                for d in diags {
                    write!(f, "\n  {d}")?;
                }
                Ok(())
            }
            LaunchError::Config(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for LaunchError {}

/// Validates `program` against the machine and runs it to completion or to
/// the first trap.
pub fn launch(program: &Program, cfg: &LaunchConfig, memory: DeviceMemory) -> Result<ExecResult, LaunchError> {
    crate::isa::validate_program(program, &cfg.machine).map_err(LaunchError::Invalid)?;
    let threads = cfg.workgroup.count();
    if threads == 0 || cfg.grid.count() == 0 {
        return Err(LaunchError::Config(
            "grid and workgroup dimensions must be positive".into(),
        ));
    }
    if threads > u64::from(cfg.machine.max_workgroup) {
        return Err(LaunchError::Config(format!(
            "workgroup of {threads} threads exceeds the machine limit of {}",
            cfg.machine.max_workgroup
        )));
    }
    if cfg.grid.count() > u64::from(u32::MAX) {
        return Err(LaunchError::Config("grid too large".into()));
    }
    exec::run(program, cfg, memory)
}

#[cfg(test)]
mod tests;
