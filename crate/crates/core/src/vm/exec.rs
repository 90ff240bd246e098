use std::collections::{HashMap, VecDeque};

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::asm::mnemonic;
use crate::isa::{Address, Instruction, Operand, Program, RegPart, RegRef, ScalarType, Space, Special};
use crate::machcfg::occupancy;

use super::control::{apply_control, flatten, ControlState, ControlTable};
use super::stats::{ExecStats, Fnv1a, TraceRecord};
use super::{
    atomic, banks, numeric, shuffle, DeviceMemory, ExecResult, LaneMask, LaunchConfig, LaunchError, Outcome,
    RaceDetector, Trap, TrapKind, MAX_CALL_DEPTH, MAX_DIVERGENCE_DEPTH,
};

/// Longest run of steps one wave gets before the scheduler picks again.
const MAX_QUANTUM: u64 = 8;

struct Linked {
    code: std::sync::Arc<[Instruction]>,
    call_targets: Vec<usize>,
    table: ControlTable,
    entry: usize,
    mnemonics: Vec<String>,
}

impl Linked {
    fn new(program: &Program, with_mnemonics: bool) -> Self {
        let (code, spans) = flatten(&program.functions);
        let starts: HashMap<&str, usize> = program
            .functions
            .iter()
            .zip(&spans)
            .map(|(f, s)| (f.name.as_str(), s.0))
            .collect();
        let call_targets = code
            .iter()
            .map(|i| match i {
                Instruction::Call { target } => starts[target.as_str()],
                _ => 0,
            })
            .collect();
        let table = ControlTable::build(&code, &spans);
        let mnemonics = if with_mnemonics {
            code.iter().map(mnemonic).collect()
        } else {
            Vec::new()
        };
        Linked {
            entry: starts[program.entry.as_str()],
            code: code.into(),
            call_targets,
            table,
            mnemonics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ready,
    Barrier(u32),
    Halted,
}

struct Copy {
    id: u64,
    scratch: u32,
    device: u32,
    bytes: u32,
}

struct Wave {
    ctl: ControlState,
    launch_mask: LaneMask,
    calls: Vec<usize>,
    regs: Vec<u32>,
    status: Status,
    global: u32,
    local: u32,
    copies: VecDeque<Vec<Copy>>,
}

struct Group {
    linear: u32,
    id: [u32; 3],
    waves: Vec<Wave>,
    scratch: Vec<u8>,
}

struct Engine<'a> {
    linked: Linked,
    cfg: &'a LaunchConfig,
    width: usize,
    device: DeviceMemory,
    arg_bytes: Vec<u8>,
    stats: ExecStats,
    hash: Fnv1a,
    trace: Vec<TraceRecord>,
    race: Option<RaceDetector>,
    next_copy: u64,
}

/// Per-step context that stays fixed while one wave executes.
struct Here {
    group: u32,
    wave: u32,
    pc: usize,
}

impl Here {
    fn trap(&self, kind: TrapKind, detail: impl Into<String>) -> Trap {
        Trap {
            kind,
            workgroup: self.group,
            wave: self.wave,
            pc: self.pc,
            detail: detail.into(),
        }
    }
}

fn lanes(mask: LaneMask) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let lane = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(lane)
        }
    })
}

impl Wave {
    fn raw(&self, r: RegRef, lane: usize, width: usize) -> u32 {
        let v = self.regs[r.index as usize * width + lane];
        match r.part {
            RegPart::Full => v,
            RegPart::Low => v & 0xffff,
            RegPart::High => v >> 16,
        }
    }

    fn set_raw(&mut self, r: RegRef, lane: usize, width: usize, v: u32) {
        let slot = &mut self.regs[r.index as usize * width + lane];
        *slot = match r.part {
            RegPart::Full => v,
            RegPart::Low => (*slot & 0xffff_0000) | (v & 0xffff),
            RegPart::High => (*slot & 0xffff) | (v << 16),
        };
    }

    fn typed(&self, op: &Operand, ty: ScalarType, lane: usize, width: usize) -> u64 {
        match *op {
            Operand::Imm(i) => match ty {
                ScalarType::F64 => f64::from(f32::from_bits(i)).to_bits(),
                ScalarType::F16 | ScalarType::BF16 => u64::from(i & 0xffff),
                _ => u64::from(i),
            },
            Operand::Reg(r) => match ty {
                ScalarType::F64 => {
                    let lo = self.regs[r.index as usize * width + lane];
                    let hi = self.regs[(r.index as usize + 1) * width + lane];
                    (u64::from(hi) << 32) | u64::from(lo)
                }
                ScalarType::I32 if r.part != RegPart::Full => {
                    u64::from(self.raw(r, lane, width) as u16 as i16 as i32 as u32)
                }
                ScalarType::F16 | ScalarType::BF16 => u64::from(self.raw(r, lane, width) & 0xffff),
                _ => u64::from(self.raw(r, lane, width)),
            },
        }
    }

    fn set_typed(&mut self, r: RegRef, ty: ScalarType, lane: usize, width: usize, v: u64) {
        if ty == ScalarType::F64 {
            self.regs[r.index as usize * width + lane] = v as u32;
            self.regs[(r.index as usize + 1) * width + lane] = (v >> 32) as u32;
        } else {
            self.set_raw(r, lane, width, v as u32);
        }
    }

    fn operand(&self, op: &Operand, lane: usize, width: usize) -> u32 {
        match *op {
            Operand::Imm(i) => i,
            Operand::Reg(r) => self.raw(r, lane, width),
        }
    }

    fn lanes_set(&self, r: RegRef, width: usize) -> LaneMask {
        lanes(self.ctl.active_mask)
            .filter(|&l| self.raw(r, l, width) != 0)
            .fold(0, |m, l| m | 1 << l)
    }
}

pub(super) fn run(program: &Program, cfg: &LaunchConfig, memory: DeviceMemory) -> Result<ExecResult, LaunchError> {
    let machine = &cfg.machine;
    let waves_per_group = cfg.waves_per_workgroup();
    let capacity = if cfg.interleave_workgroups {
        let occ = occupancy(
            machine,
            program.regs_used,
            program.scratch_used,
            cfg.workgroup.count() as u32,
        )
        .map_err(|e| LaunchError::Config(e.to_string()))?;
        let groups = occ.resident_waves / waves_per_group;
        if groups == 0 {
            return Err(LaunchError::Config(format!(
                "not even one workgroup fits: {} resident waves, {} needed",
                occ.resident_waves, waves_per_group
            )));
        }
        groups as usize
    } else {
        1
    };
    let mut engine = Engine {
        linked: Linked::new(program, cfg.trace),
        cfg,
        width: machine.wave_width as usize,
        device: memory,
        arg_bytes: cfg.args.iter().flat_map(|a| a.to_le_bytes()).collect(),
        stats: ExecStats::default(),
        hash: Fnv1a::default(),
        trace: Vec::new(),
        race: cfg.check_races.then(RaceDetector::new),
        next_copy: 0,
    };
    let outcome = match engine.schedule(program, capacity) {
        Ok(()) => Outcome::Completed,
        Err(trap) => Outcome::Trapped(trap),
    };
    engine.stats.trace_hash = engine.hash.finish();
    Ok(ExecResult {
        outcome,
        memory: engine.device,
        stats: engine.stats,
        races: engine.race.map(RaceDetector::into_reports).unwrap_or_default(),
        trace: engine.trace,
    })
}

impl Engine<'_> {
    fn admit(&mut self, program: &Program, linear: u32) -> Group {
        let cfg = self.cfg;
        let (gx, gy) = (cfg.grid.x, cfg.grid.y);
        let id = [linear % gx, (linear / gx) % gy, linear / (gx * gy)];
        let threads = cfg.workgroup.count() as u32;
        let width = self.width as u32;
        let n = cfg.waves_per_workgroup();
        let waves = (0..n)
            .map(|w| {
                let global = linear * n + w;
                if let Some(r) = self.race.as_mut() {
                    r.add_wave(global, linear, w);
                }
                let mask = super::full_mask((threads - w * width).min(width));
                Wave {
                    ctl: ControlState::new(self.linked.entry, mask, MAX_DIVERGENCE_DEPTH),
                    launch_mask: mask,
                    calls: Vec::new(),
                    regs: vec![0; program.regs_used as usize * self.width],
                    status: Status::Ready,
                    global,
                    local: w,
                    copies: VecDeque::new(),
                }
            })
            .collect();
        self.stats.workgroups += 1;
        self.stats.waves += u64::from(n);
        Group {
            linear,
            id,
            waves,
            scratch: vec![0; program.scratch_used as usize],
        }
    }

    fn schedule(&mut self, program: &Program, capacity: usize) -> Result<(), Trap> {
        let total = self.cfg.grid.count() as u32;
        let mut rng = SplitMix64::seed_from_u64(self.cfg.seed);
        let mut resident: Vec<Group> = Vec::new();
        let mut next = 0u32;
        let mut ready: Vec<(usize, usize)> = Vec::new();
        loop {
            while resident.len() < capacity && next < total {
                let g = self.admit(program, next);
                resident.push(g);
                next += 1;
            }
            if resident.is_empty() {
                return Ok(());
            }
            let live: u32 = resident.iter().map(|g| g.waves.len() as u32).sum();
            self.stats.peak_resident_waves = self.stats.peak_resident_waves.max(live);

            ready.clear();
            for (gi, g) in resident.iter().enumerate() {
                for (wi, w) in g.waves.iter().enumerate() {
                    if w.status == Status::Ready {
                        ready.push((gi, wi));
                    }
                }
            }
            if ready.is_empty() {
                let g = &resident[0];
                let w = g.waves.iter().find(|w| w.status != Status::Halted).expect("live wave");
                let here = Here {
                    group: g.linear,
                    wave: w.local,
                    pc: w.ctl.pc,
                };
                return Err(here.trap(TrapKind::Deadlock, "no wave can make progress"));
            }
            let (gi, wi) = ready[(rng.next_u64() % ready.len() as u64) as usize];
            let quantum = 1 + rng.next_u64() % MAX_QUANTUM;
            for _ in 0..quantum {
                self.step(&mut resident[gi], wi)?;
                if resident[gi].waves[wi].status != Status::Ready {
                    break;
                }
            }
            if self.settle(&mut resident[gi])? {
                resident.remove(gi);
            }
        }
    }

    /// Releases a completed barrier; returns whether the group has finished.
    fn settle(&mut self, group: &mut Group) -> Result<bool, Trap> {
        let mut live = group.waves.iter().filter(|w| w.status != Status::Halted);
        let Some(first) = live.next() else {
            return Ok(true);
        };
        let Status::Barrier(id) = first.status else {
            return Ok(false);
        };
        let mut all_same = true;
        for w in live {
            match w.status {
                Status::Ready => return Ok(false),
                Status::Barrier(other) if other != id => all_same = false,
                _ => {}
            }
        }
        if !all_same {
            let here = Here {
                group: group.linear,
                wave: first.local,
                pc: first.ctl.pc,
            };
            return Err(here.trap(TrapKind::Deadlock, "waves wait at different barrier ids"));
        }
        let mut members = Vec::new();
        for w in group.waves.iter_mut().filter(|w| w.status != Status::Halted) {
            w.status = Status::Ready;
            members.push(w.global);
        }
        if let Some(r) = self.race.as_mut() {
            r.barrier(&members);
        }
        self.stats.barrier_rounds += 1;
        Ok(false)
    }

    fn address(&self, wave: &Wave, addr: &Address, lane: usize, here: &Here) -> Result<u32, Trap> {
        let base = addr.base.map_or(0, |b| wave.raw(b, lane, self.width));
        let a = i64::from(base) + i64::from(addr.offset);
        u32::try_from(a).map_err(|_| here.trap(TrapKind::OutOfBounds, format!("lane {lane}: address {a}")))
    }

    fn check_access(
        &self,
        space: Space,
        scratch_len: usize,
        addr: u32,
        size: u32,
        lane: usize,
        here: &Here,
    ) -> Result<(), Trap> {
        if !addr.is_multiple_of(size) {
            return Err(here.trap(
                TrapKind::Misaligned,
                format!("lane {lane}: {} address {addr:#x} for {size}-byte access", space.name()),
            ));
        }
        let limit = match space {
            Space::Scratch => scratch_len as u64,
            Space::Device => self.device.len() as u64,
            Space::Arg => self.arg_bytes.len() as u64,
        };
        if u64::from(addr) + u64::from(size) > limit {
            return Err(here.trap(
                TrapKind::OutOfBounds,
                format!("lane {lane}: {} address {addr:#x} (size {limit})", space.name()),
            ));
        }
        Ok(())
    }

    fn load(&self, space: Space, scratch: &[u8], addr: u32, size: u32) -> u32 {
        let bytes = match space {
            Space::Scratch => &scratch[addr as usize..(addr + size) as usize],
            Space::Device => self.device.read_bytes(addr, size as usize),
            Space::Arg => &self.arg_bytes[addr as usize..(addr + size) as usize],
        };
        let mut buf = [0u8; 4];
        buf[..size as usize].copy_from_slice(bytes);
        u32::from_le_bytes(buf)
    }

    fn store(&mut self, space: Space, scratch: &mut [u8], addr: u32, size: u32, value: u32) {
        let bytes = &value.to_le_bytes()[..size as usize];
        match space {
            Space::Scratch => scratch[addr as usize..(addr + size) as usize].copy_from_slice(bytes),
            Space::Device => self.device.write_bytes(addr, bytes),
            Space::Arg => unreachable!("validated: arg space is read-only"),
        }
    }

    fn count_traffic(&mut self, space: Space, bytes: u64) {
        match space {
            Space::Scratch => self.stats.scratch_bytes += bytes,
            Space::Device => self.stats.device_bytes += bytes,
            Space::Arg => {}
        }
    }

    fn scratch_conflicts(&mut self, space: Space, addrs: &[u32], mask: LaneMask) {
        if space == Space::Scratch {
            let m = &self.cfg.machine;
            self.stats.bank_conflict_extra_cycles +=
                banks::count_bank_conflicts(addrs, mask, m.bank_count, m.bank_width);
        }
    }

    fn special(&self, group_id: [u32; 3], wave: u32, which: Special, lane: usize) -> u32 {
        let wg = self.cfg.workgroup;
        let t = wave * self.width as u32 + lane as u32;
        match which {
            Special::LaneId => lane as u32,
            Special::WaveId => wave,
            Special::TidX => t % wg.x,
            Special::TidY => (t / wg.x) % wg.y,
            Special::TidZ => t / (wg.x * wg.y),
            Special::WgIdX => group_id[0],
            Special::WgIdY => group_id[1],
            Special::WgIdZ => group_id[2],
            Special::WgDimX => wg.x,
            Special::WgDimY => wg.y,
            Special::WgDimZ => wg.z,
            Special::GridDimX => self.cfg.grid.x,
            Special::GridDimY => self.cfg.grid.y,
            Special::GridDimZ => self.cfg.grid.z,
            Special::WaveWidth => self.width as u32,
        }
    }

    fn step(&mut self, group: &mut Group, wi: usize) -> Result<(), Trap> {
        let width = self.width;
        let pc = group.waves[wi].ctl.pc;
        let mask = group.waves[wi].ctl.active_mask;
        let global = group.waves[wi].global;
        let here = Here {
            group: group.linear,
            wave: group.waves[wi].local,
            pc,
        };
        if self.stats.scheduler_steps >= self.cfg.max_steps {
            return Err(here.trap(TrapKind::StepLimit, format!("{} steps", self.cfg.max_steps)));
        }
        let step = self.stats.scheduler_steps;
        self.stats.scheduler_steps += 1;
        self.hash.write(&global.to_le_bytes());
        self.hash.write(&(pc as u32).to_le_bytes());
        if self.cfg.trace {
            self.trace.push(TraceRecord {
                step,
                workgroup: group.linear,
                wave: here.wave,
                pc,
                mnemonic: self.linked.mnemonics[pc].clone(),
                mask,
            });
        }
        let code = std::sync::Arc::clone(&self.linked.code);
        let instr = &code[pc];
        self.stats.instructions.record(instr);

        let group_id = group.id;
        let Group { waves, scratch, .. } = group;
        let wave = &mut waves[wi];
        let mut next_pc = pc + 1;
        match instr {
            Instruction::Arith { op, ty, dst, srcs } => {
                let zero = Operand::Imm(0);
                for lane in lanes(mask) {
                    let get = |i: usize| wave.typed(srcs.get(i).unwrap_or(&zero), *ty, lane, width);
                    let (a, b, c) = (get(0), get(1), get(2));
                    let v = numeric::arith(*op, *ty, a, b, c)
                        .map_err(|_| here.trap(TrapKind::DivisionByZero, format!("lane {lane}")))?;
                    wave.set_typed(*dst, *ty, lane, width, v);
                }
            }
            Instruction::Cvt { from, to, dst, src } => {
                for lane in lanes(mask) {
                    let v = numeric::convert(*from, *to, wave.typed(src, *from, lane, width));
                    wave.set_typed(*dst, *to, lane, width, v);
                }
            }
            Instruction::Cmp { rel, ty, dst, a, b } => {
                for lane in lanes(mask) {
                    let r = numeric::compare(
                        *rel,
                        *ty,
                        wave.typed(a, *ty, lane, width),
                        wave.typed(b, *ty, lane, width),
                    );
                    wave.set_raw(*dst, lane, width, u32::from(r));
                }
            }
            Instruction::Ld {
                space,
                width: w,
                dst,
                addr,
            } => {
                let size = w.bytes();
                let mut addrs = [0u32; 64];
                for lane in lanes(mask) {
                    let a = self.address(wave, addr, lane, &here)?;
                    self.check_access(*space, scratch.len(), a, size, lane, &here)?;
                    addrs[lane] = a;
                }
                for lane in lanes(mask) {
                    let v = self.load(*space, scratch, addrs[lane], size);
                    wave.set_raw(*dst, lane, width, v);
                    if let Some(r) = self.race.as_mut() {
                        r.access(global, *space, addrs[lane], false, false, pc);
                    }
                }
                self.count_traffic(*space, u64::from(size) * u64::from(mask.count_ones()));
                self.scratch_conflicts(*space, &addrs[..width], mask);
            }
            Instruction::St {
                space,
                width: w,
                src,
                addr,
            } => {
                let size = w.bytes();
                let mut addrs = [0u32; 64];
                for lane in lanes(mask) {
                    let a = self.address(wave, addr, lane, &here)?;
                    self.check_access(*space, scratch.len(), a, size, lane, &here)?;
                    addrs[lane] = a;
                }
                for lane in lanes(mask) {
                    let v = wave.raw(*src, lane, width);
                    self.store(*space, scratch, addrs[lane], size, v);
                    if let Some(r) = self.race.as_mut() {
                        r.access(global, *space, addrs[lane], true, false, pc);
                    }
                }
                self.count_traffic(*space, u64::from(size) * u64::from(mask.count_ones()));
                self.scratch_conflicts(*space, &addrs[..width], mask);
            }
            Instruction::Atomic {
                op,
                space,
                ty,
                dst,
                addr,
                value,
                compare,
            } => {
                let mut addrs = [0u32; 64];
                for lane in lanes(mask) {
                    let a = self.address(wave, addr, lane, &here)?;
                    self.check_access(*space, scratch.len(), a, 4, lane, &here)?;
                    addrs[lane] = a;
                }
                let mut targeted = Vec::new();
                for lane in lanes(mask) {
                    let a = addrs[lane];
                    let old = self.load(*space, scratch, a, 4);
                    let v = wave.operand(value, lane, width);
                    let cmp = compare.as_ref().map_or(0, |c| wave.operand(c, lane, width));
                    let (new, old) = atomic::eval_atomic(*op, *ty, old, v, cmp);
                    self.store(*space, scratch, a, 4, new);
                    wave.set_raw(*dst, lane, width, old);
                    if let Some(r) = self.race.as_mut() {
                        r.atomic_sync(global, *space, a);
                        r.access(global, *space, a, true, true, pc);
                    }
                    targeted.push(u64::from(a));
                }
                self.stats.atomic_serializations += atomic::serializations(&targeted);
                self.count_traffic(*space, 4 * u64::from(mask.count_ones()));
                self.scratch_conflicts(*space, &addrs[..width], mask);
            }
            Instruction::Shfl {
                mode,
                dst,
                src,
                lane: sel,
            } => {
                let values: Vec<u32> = (0..width).map(|l| wave.raw(*src, l, width)).collect();
                let operands: Vec<u32> = (0..width).map(|l| wave.operand(sel, l, width)).collect();
                let out = shuffle::eval_shuffle(*mode, &values, &operands, mask).map_err(|lane| {
                    here.trap(
                        TrapKind::ShuffleOperand,
                        format!("lane {lane} selects {} with W={width}", operands[lane as usize]),
                    )
                })?;
                for lane in lanes(mask) {
                    wave.set_raw(*dst, lane, width, out[lane]);
                }
                self.stats.shuffle_steps += 1;
            }
            Instruction::Bar { id } => {
                if *id >= self.cfg.machine.named_barriers {
                    return Err(here.trap(
                        TrapKind::BarrierId,
                        format!("id {id} with {} named barriers", self.cfg.machine.named_barriers),
                    ));
                }
                if mask != wave.launch_mask {
                    return Err(here.trap(
                        TrapKind::BarrierDivergence,
                        format!("active mask {mask:#x} of {:#x}", wave.launch_mask),
                    ));
                }
                wave.status = Status::Barrier(*id);
            }
            Instruction::Fence { scope, order } => {
                if let Some(r) = self.race.as_mut() {
                    r.fence(global, *scope, *order);
                }
            }
            Instruction::AsyncCopy { dst, src, bytes } => {
                let mut batch = Vec::new();
                for lane in lanes(mask) {
                    let s = wave.raw(*dst, lane, width);
                    let d = wave.raw(*src, lane, width);
                    self.check_access(Space::Scratch, scratch.len(), s, 4, lane, &here)?;
                    self.check_access(Space::Device, 0, d, 4, lane, &here)?;
                    if u64::from(s) + u64::from(*bytes) > scratch.len() as u64 {
                        return Err(here.trap(
                            TrapKind::OutOfBounds,
                            format!("lane {lane}: async copy into scratch {s:#x}"),
                        ));
                    }
                    if !self.device.in_bounds(u64::from(d), u64::from(*bytes)) {
                        return Err(here.trap(
                            TrapKind::OutOfBounds,
                            format!("lane {lane}: async copy from device {d:#x}"),
                        ));
                    }
                    let id = self.next_copy;
                    self.next_copy += 1;
                    if let Some(r) = self.race.as_mut() {
                        r.async_issue(id, global, pc, s, *bytes);
                    }
                    batch.push(Copy {
                        id,
                        scratch: s,
                        device: d,
                        bytes: *bytes,
                    });
                }
                wave.copies.push_back(batch);
            }
            Instruction::WaitAsync { max_outstanding } => {
                while wave.copies.len() > *max_outstanding as usize {
                    let batch = wave.copies.pop_front().expect("non-empty");
                    for c in batch {
                        let data = self.device.read_bytes(c.device, c.bytes as usize).to_vec();
                        scratch[c.scratch as usize..(c.scratch + c.bytes) as usize].copy_from_slice(&data);
                        self.stats.device_bytes += u64::from(c.bytes);
                        self.stats.scratch_bytes += u64::from(c.bytes);
                        if let Some(r) = self.race.as_mut() {
                            r.async_complete(c.id);
                        }
                    }
                }
            }
            Instruction::ReadSpecial { dst, which } => {
                for lane in lanes(mask) {
                    let v = self.special(group_id, wave.local, *which, lane);
                    wave.set_raw(*dst, lane, width, v);
                }
            }
            Instruction::If { cond } => {
                let set = wave.lanes_set(*cond, width);
                apply_control(&mut wave.ctl, instr, set, &self.linked.table).map_err(|k| here.trap(k, ""))?;
                return Ok(());
            }
            Instruction::Break { cond } => {
                let set = cond.map_or(0, |c| wave.lanes_set(c, width));
                apply_control(&mut wave.ctl, instr, set, &self.linked.table).map_err(|k| here.trap(k, ""))?;
                return Ok(());
            }
            Instruction::Else | Instruction::EndIf | Instruction::Loop | Instruction::EndLoop => {
                apply_control(&mut wave.ctl, instr, 0, &self.linked.table).map_err(|k| here.trap(k, ""))?;
                return Ok(());
            }
            Instruction::Call { .. } => {
                if wave.calls.len() >= MAX_CALL_DEPTH {
                    return Err(here.trap(TrapKind::CallStackOverflow, format!("depth {MAX_CALL_DEPTH}")));
                }
                wave.calls.push(pc + 1);
                next_pc = self.linked.call_targets[pc];
            }
            Instruction::Ret => {
                next_pc = wave
                    .calls
                    .pop()
                    .ok_or_else(|| here.trap(TrapKind::DivergenceStackUnderflow, "return with empty call stack"))?;
            }
            Instruction::Mma { tile, dst, a, b, c } => {
                let frag = |base: RegRef, e: u32| {
                    let lane = (e as usize) % width;
                    let reg = base.index as usize + e as usize / width;
                    f32::from_bits(wave.regs[reg * width + lane])
                };
                let (m, n, k) = (tile.m, tile.n, tile.k);
                let mut out = Vec::with_capacity((m * n) as usize);
                for i in 0..m {
                    for j in 0..n {
                        let mut acc = frag(*c, i * n + j);
                        for kk in 0..k {
                            acc = frag(*a, i * k + kk).mul_add(frag(*b, kk * n + j), acc);
                        }
                        out.push(acc);
                    }
                }
                for (e, v) in out.into_iter().enumerate() {
                    let lane = e % width;
                    if mask >> lane & 1 == 1 {
                        let reg = dst.index as usize + e / width;
                        wave.regs[reg * width + lane] = v.to_bits();
                    }
                }
            }
            Instruction::Halt => {
                wave.status = Status::Halted;
            }
        }
        wave.ctl.pc = next_pc;
        Ok(())
    }
}
