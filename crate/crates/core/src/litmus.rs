//! Message-passing litmus test: one workgroup writes data and raises a flag,
//! another spins on the flag and reads the data. The fenced form orders the
//! two with a device-scope release/acquire pair; the unfenced form leaves
//! the data accesses unordered, which the race detector must report.

use rayon::prelude::*;

use crate::asm::parse_program;
use crate::isa::Program;
use crate::machcfg::MachineDescriptor;
use crate::vm::{launch, DeviceMemory, Dim3, LaunchConfig, LaunchError, RaceReport, Trap};

pub const VALUE: u32 = 42;

/// args: data address, flag address, result address
pub fn message_passing_source(fenced: bool) -> String {
    let release = if fenced { "    fence.release.device\n" } else { "" };
    let acquire = if fenced { "    fence.acquire.device\n" } else { "" };
    format!(
        "\
.regs 8
.kernel message_passing
  ld.arg.b32 r1, [0]
  ld.arg.b32 r2, [4]
  sreg r0, %wgid_x
  cmp.eq.u32 r3, r0, 0
  if r3
    mov.u32 r4, {VALUE}
    st.device.b32 [r1], r4
{release}    atom.device.exch.u32 r5, [r2], 1
  else
    loop
      atom.device.or.u32 r5, [r2], 0
      cmp.ne.u32 r6, r5, 0
      break r6
    endloop
{acquire}    ld.device.b32 r7, [r1]
    ld.arg.b32 r2, [8]
    st.device.b32 [r2], r7
  endif
  halt
"
    )
}

pub fn message_passing(fenced: bool) -> Program {
    parse_program(&message_passing_source(fenced)).expect("litmus program assembles")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub races: Vec<RaceReport>,
    /// Value the consumer read.
    pub observed: u32,
    pub trap: Option<Trap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LitmusSummary {
    pub fenced: bool,
    pub seeds: u64,
    /// Seeds on which at least one race was reported.
    pub racy_seeds: u64,
    pub total_races: u64,
    pub first_race: Option<RaceReport>,
    pub first_trap: Option<Trap>,
}

impl LitmusSummary {
    /// Fenced runs must be race-free; unfenced runs must expose a race.
    pub fn as_expected(&self) -> bool {
        self.first_trap.is_none() && (self.racy_seeds == 0) == self.fenced
    }
}

pub fn run_seed(program: &Program, machine: &MachineDescriptor, seed: u64) -> Result<SeedOutcome, LaunchError> {
    let mut mem = DeviceMemory::new(1024);
    let data = mem.alloc(4).expect("fits");
    let flag = mem.alloc(4).expect("fits");
    let result = mem.alloc(4).expect("fits");
    let mut cfg = LaunchConfig::new(machine.clone(), Dim3::linear(2), Dim3::linear(1))
        .with_args(vec![data, flag, result])
        .with_seed(seed);
    cfg.interleave_workgroups = true;
    cfg.check_races = true;
    let r = launch(program, &cfg, mem)?;
    Ok(SeedOutcome {
        seed,
        observed: r.memory.read_u32s(result, 1)[0],
        trap: r.trap().cloned(),
        races: r.races,
    })
}

/// Runs seeds `0..seeds` in parallel and summarizes them in seed order.
pub fn run_litmus(machine: &MachineDescriptor, seeds: u64, fenced: bool) -> Result<LitmusSummary, LaunchError> {
    let program = message_passing(fenced);
    let outcomes: Vec<SeedOutcome> = (0..seeds)
        .into_par_iter()
        .map(|s| run_seed(&program, machine, s))
        .collect::<Result<_, _>>()?;
    Ok(LitmusSummary {
        fenced,
        seeds,
        racy_seeds: outcomes.iter().filter(|o| !o.races.is_empty()).count() as u64,
        total_races: outcomes.iter().map(|o| o.races.len() as u64).sum(),
        first_race: outcomes.iter().find_map(|o| o.races.first().cloned()),
        first_trap: outcomes.iter().find_map(|o| o.trap.clone()),
    })
}
