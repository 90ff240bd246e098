#![allow(dead_code)]

use std::collections::HashMap;

use proptest::prelude::*;
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use uvgpu::isa::{
    Address, ArithOp, AtomicOp, CmpRel, Function, Instruction, MemOrder, Operand, Program, RegPart, RegRef, ScalarType,
    Scope, ShuffleMode, Space, Special, Width,
};
use uvgpu::machcfg::MatrixTile;

// ---------------------------------------------------------------------------
// Arbitrary programs for the assembler round trip

fn reg() -> impl Strategy<Value = RegRef> {
    (
        0u16..300,
        prop_oneof![Just(RegPart::Full), Just(RegPart::Low), Just(RegPart::High)],
    )
        .prop_map(|(index, part)| RegRef { index, part })
}

fn operand() -> impl Strategy<Value = Operand> {
    prop_oneof![reg().prop_map(Operand::Reg), any::<u32>().prop_map(Operand::Imm)]
}

fn address() -> impl Strategy<Value = Address> {
    (proptest::option::of(reg()), any::<i32>()).prop_map(|(base, offset)| Address { base, offset })
}

fn scalar() -> impl Strategy<Value = ScalarType> {
    prop::sample::select(ScalarType::ALL.to_vec())
}

fn space() -> impl Strategy<Value = Space> {
    prop::sample::select(vec![Space::Scratch, Space::Device, Space::Arg])
}

fn width() -> impl Strategy<Value = Width> {
    prop::sample::select(vec![Width::B8, Width::B16, Width::B32])
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,8}"
}

fn arith() -> impl Strategy<Value = Instruction> {
    prop::sample::select(ArithOp::ALL.to_vec()).prop_flat_map(|op| {
        (scalar(), reg(), prop::collection::vec(operand(), op.arity()))
            .prop_map(move |(ty, dst, srcs)| Instruction::Arith { op, ty, dst, srcs })
    })
}

fn memory() -> impl Strategy<Value = Instruction> {
    prop_oneof![
        (space(), width(), reg(), address()).prop_map(|(space, width, dst, addr)| Instruction::Ld {
            space,
            width,
            dst,
            addr
        }),
        (space(), width(), reg(), address()).prop_map(|(space, width, src, addr)| Instruction::St {
            space,
            width,
            src,
            addr
        }),
        (
            prop::sample::select(AtomicOp::ALL.to_vec()),
            space(),
            scalar(),
            reg(),
            address(),
            operand(),
            operand()
        )
            .prop_map(|(op, space, ty, dst, addr, value, c)| Instruction::Atomic {
                op,
                space,
                ty,
                dst,
                addr,
                value,
                compare: (op == AtomicOp::CmpXchg).then_some(c),
            }),
        (reg(), reg(), any::<u32>()).prop_map(|(dst, src, bytes)| Instruction::AsyncCopy { dst, src, bytes }),
        any::<u32>().prop_map(|max_outstanding| Instruction::WaitAsync { max_outstanding }),
    ]
}

fn other() -> impl Strategy<Value = Instruction> {
    prop_oneof![
        (scalar(), scalar(), reg(), operand()).prop_map(|(from, to, dst, src)| Instruction::Cvt { from, to, dst, src }),
        (
            prop::sample::select(CmpRel::ALL.to_vec()),
            scalar(),
            reg(),
            operand(),
            operand()
        )
            .prop_map(|(rel, ty, dst, a, b)| Instruction::Cmp { rel, ty, dst, a, b }),
        (prop::sample::select(ShuffleMode::ALL.to_vec()), reg(), reg(), operand())
            .prop_map(|(mode, dst, src, lane)| Instruction::Shfl { mode, dst, src, lane }),
        any::<u32>().prop_map(|id| Instruction::Bar { id }),
        (
            prop::sample::select(Scope::ALL.to_vec()),
            prop::sample::select(vec![MemOrder::Acquire, MemOrder::Release, MemOrder::AcqRel])
        )
            .prop_map(|(scope, order)| Instruction::Fence { scope, order }),
        (reg(), prop::sample::select(Special::ALL.to_vec()))
            .prop_map(|(dst, which)| Instruction::ReadSpecial { dst, which }),
        ident().prop_map(|target| Instruction::Call { target }),
        (1u32..64, 1u32..64, 1u32..64, reg(), reg(), reg(), reg()).prop_map(|(m, n, k, dst, a, b, c)| {
            Instruction::Mma {
                tile: MatrixTile::new(m, n, k),
                dst,
                a,
                b,
                c,
            }
        }),
    ]
}

fn control() -> impl Strategy<Value = Instruction> {
    prop_oneof![
        reg().prop_map(|cond| Instruction::If { cond }),
        Just(Instruction::Else),
        Just(Instruction::EndIf),
        Just(Instruction::Loop),
        proptest::option::of(reg()).prop_map(|cond| Instruction::Break { cond }),
        Just(Instruction::EndLoop),
        Just(Instruction::Ret),
        Just(Instruction::Halt),
    ]
}

pub fn instruction() -> impl Strategy<Value = Instruction> {
    prop_oneof![3 => arith(), 3 => memory(), 3 => other(), 2 => control()]
}

/// Programs the assembler must accept: any instruction mix, unique function
/// names, one of them the entry.
pub fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec((ident(), prop::collection::vec(instruction(), 0..12)), 1..4).prop_flat_map(|fns| {
        let n = fns.len();
        (Just(fns), 0..n, any::<u32>(), any::<u32>()).prop_map(|(fns, entry, regs_used, scratch_used)| {
            let functions: Vec<Function> = fns
                .into_iter()
                .enumerate()
                .map(|(i, (name, body))| Function {
                    name: format!("{name}_{i}"),
                    body,
                })
                .collect();
            Program {
                entry: functions[entry].name.clone(),
                functions,
                regs_used,
                scratch_used,
            }
        })
    })
}

/// Ways to break one instruction line. Each must be rejected on that line.
pub const CORRUPTIONS: [&str; 8] = [
    "frobnicate r1, r2",
    "add.u32 r1 r2, r3",
    "add.u32 x1, r2, r3",
    "add.q32 r1, r2, r3",
    "ld.device.b32 r1, r2",
    "cmp.lt r1, r2, r3",
    "sreg r1, %nonsense",
    "st.device.b32 [r1, r2",
];

// ---------------------------------------------------------------------------
// Well-nested divergent programs and a per-lane reference

#[derive(Debug, Clone, Copy)]
pub enum Cond {
    LaneBit(u32),
    LaneLt(u32),
    AccBit(u32),
    /// Innermost loop counter equals k.
    CounterEq(u32),
}

#[derive(Debug, Clone)]
pub enum Stmt {
    Update(u32, u32),
    Mark(u32),
    If {
        cond: Cond,
        then: Vec<Stmt>,
        els: Option<Vec<Stmt>>,
    },
    Loop {
        extra_trips: u32,
        body: Vec<Stmt>,
    },
    Break(Cond),
}

const ACC: u32 = 1;
const COND: u32 = 2;
const HASH: u32 = 3;
const COUNTER: u32 = 8;
const LIMIT: u32 = 16;
pub const MASK_REGS: u32 = 24;

struct Gen {
    rng: Xoshiro256PlusPlus,
    width: u32,
    budget: u32,
}

impl Gen {
    fn below(&mut self, n: u32) -> u32 {
        (self.rng.next_u64() % u64::from(n)) as u32
    }

    fn cond(&mut self, loop_depth: u32) -> Cond {
        let lane_bits = self.width.trailing_zeros();
        match self.below(if loop_depth > 0 { 4 } else { 3 }) {
            0 => Cond::LaneBit(self.below(lane_bits)),
            1 => Cond::LaneLt(self.below(self.width + 1)),
            2 => Cond::AccBit(self.below(8)),
            _ => Cond::CounterEq(self.below(4)),
        }
    }

    fn block(&mut self, nest: u32, loop_depth: u32) -> Vec<Stmt> {
        let len = 1 + self.below(4);
        let mut out = Vec::new();
        for _ in 0..len {
            if self.budget == 0 {
                break;
            }
            self.budget -= 1;
            let roll = self.below(10);
            let s = if roll < 2 {
                Stmt::Update(self.below(3), self.below(1000))
            } else if roll < 4 {
                Stmt::Mark(self.below(1000))
            } else if roll < 7 && nest < 5 {
                let cond = self.cond(loop_depth);
                let then = self.block(nest + 1, loop_depth);
                let els = (self.below(2) == 0).then(|| self.block(nest + 1, loop_depth));
                Stmt::If { cond, then, els }
            } else if roll < 9 && nest < 5 && loop_depth < 3 {
                let extra_trips = self.below(3);
                let body = self.block(nest + 1, loop_depth + 1);
                Stmt::Loop { extra_trips, body }
            } else if loop_depth > 0 {
                Stmt::Break(self.cond(loop_depth))
            } else {
                Stmt::Update(self.below(3), self.below(1000))
            };
            out.push(s);
        }
        out
    }
}

/// A random well-nested program for wave width `width`.
pub fn random_mask_program(seed: u64, width: u32) -> Vec<Stmt> {
    let mut g = Gen {
        rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        width,
        budget: 24,
    };
    g.block(0, 0)
}

/// Emitted source plus, for every If and Loop opener pc, the pc right after
/// its closing marker.
pub struct Emitted {
    pub source: String,
    pub closes: HashMap<usize, usize>,
}

struct Emitter {
    lines: Vec<String>,
    closes: HashMap<usize, usize>,
}

impl Emitter {
    fn op(&mut self, s: String) {
        self.lines.push(format!("  {s}"));
    }

    fn pc(&self) -> usize {
        self.lines.len()
    }

    fn cond(&mut self, c: Cond, loop_depth: u32) {
        match c {
            Cond::LaneBit(b) => {
                self.op(format!("shr.u32 r{COND}, r0, {b}"));
                self.op(format!("and.u32 r{COND}, r{COND}, 1"));
            }
            Cond::LaneLt(k) => self.op(format!("cmp.lt.u32 r{COND}, r0, {k}")),
            Cond::AccBit(b) => {
                self.op(format!("shr.u32 r{COND}, r{ACC}, {b}"));
                self.op(format!("and.u32 r{COND}, r{COND}, 1"));
            }
            Cond::CounterEq(k) => self.op(format!("cmp.eq.u32 r{COND}, r{}, {k}", COUNTER + loop_depth - 1)),
        }
    }

    fn block(&mut self, stmts: &[Stmt], loop_depth: u32) {
        for s in stmts {
            match s {
                Stmt::Update(kind, k) => match kind {
                    0 => {
                        self.op(format!("mul.u32 r{ACC}, r{ACC}, 3"));
                        self.op(format!("add.u32 r{ACC}, r{ACC}, {k}"));
                    }
                    1 => {
                        self.op(format!("xor.u32 r{ACC}, r{ACC}, r0"));
                        self.op(format!("add.u32 r{ACC}, r{ACC}, {k}"));
                    }
                    _ => self.op(format!("add.u32 r{ACC}, r{ACC}, r0")),
                },
                Stmt::Mark(k) => {
                    self.op(format!("mul.u32 r{HASH}, r{HASH}, 31"));
                    self.op(format!("add.u32 r{HASH}, r{HASH}, r{ACC}"));
                    self.op(format!("add.u32 r{HASH}, r{HASH}, {k}"));
                }
                Stmt::If { cond, then, els } => {
                    self.cond(*cond, loop_depth);
                    let open = self.pc();
                    self.op(format!("if r{COND}"));
                    self.block(then, loop_depth);
                    if let Some(els) = els {
                        self.op("else".into());
                        self.block(els, loop_depth);
                    }
                    self.op("endif".into());
                    self.closes.insert(open, self.pc());
                }
                Stmt::Loop { extra_trips, body } => {
                    let (ctr, lim) = (COUNTER + loop_depth, LIMIT + loop_depth);
                    self.op(format!("mov.u32 r{ctr}, 0"));
                    self.op(format!("and.u32 r{lim}, r0, 3"));
                    self.op(format!("add.u32 r{lim}, r{lim}, {extra_trips}"));
                    let open = self.pc();
                    self.op("loop".into());
                    self.op(format!("cmp.ge.u32 r{COND}, r{ctr}, r{lim}"));
                    self.op(format!("break r{COND}"));
                    self.op(format!("add.u32 r{ctr}, r{ctr}, 1"));
                    self.block(body, loop_depth + 1);
                    self.op("endloop".into());
                    self.closes.insert(open, self.pc());
                }
                Stmt::Break(cond) => {
                    self.cond(*cond, loop_depth);
                    self.op(format!("break r{COND}"));
                }
            }
        }
    }
}

/// Each thread ends by storing `(acc, hash)` at device byte `8 * tid`.
pub fn emit(stmts: &[Stmt]) -> Emitted {
    let mut e = Emitter {
        lines: Vec::new(),
        closes: HashMap::new(),
    };
    e.op("sreg r0, %lane_id".into());
    e.op(format!("mov.u32 r{ACC}, r0"));
    e.op(format!("mov.u32 r{HASH}, 7"));
    e.block(stmts, 0);
    e.op("sreg r5, %tid_x".into());
    e.op("shl.u32 r6, r5, 3".into());
    e.op(format!("st.device.b32 [r6], r{ACC}"));
    e.op(format!("st.device.b32 [r6+4], r{HASH}"));
    e.op("halt".into());
    let source = format!(".regs {MASK_REGS}\n.kernel masks\n{}\n", e.lines.join("\n"));
    Emitted {
        source,
        closes: e.closes,
    }
}

/// Result of running one lane on its own.
#[derive(Debug, Default)]
pub struct LaneRun {
    pub acc: u32,
    pub hash: u32,
    /// For each opener pc, one entry per visit: did the lane reach the
    /// instruction after the closing marker?
    pub reached: HashMap<usize, Vec<bool>>,
}

struct Scalar {
    lane: u32,
    acc: u32,
    hash: u32,
    counters: Vec<u32>,
    limits: Vec<u32>,
    reached: HashMap<usize, Vec<bool>>,
}

enum Flow {
    Normal,
    Break,
}

impl Scalar {
    fn cond(&self, c: Cond) -> bool {
        match c {
            Cond::LaneBit(b) => (self.lane >> b) & 1 == 1,
            Cond::LaneLt(k) => self.lane < k,
            Cond::AccBit(b) => (self.acc >> b) & 1 == 1,
            Cond::CounterEq(k) => *self.counters.last().unwrap() == k,
        }
    }

    fn visit(&mut self, pc: usize) -> usize {
        let v = self.reached.entry(pc).or_default();
        v.push(false);
        v.len() - 1
    }

    /// Mirrors the instruction counts emitted for each statement so opener
    /// pcs line up with the assembled program.
    fn block(&mut self, stmts: &[Stmt], pc: &mut usize) -> Flow {
        let mut flow = Flow::Normal;
        for s in stmts {
            if matches!(flow, Flow::Break) {
                *pc += stmt_len(s);
                continue;
            }
            match s {
                Stmt::Update(kind, k) => {
                    match kind {
                        0 => self.acc = self.acc.wrapping_mul(3).wrapping_add(*k),
                        1 => self.acc = (self.acc ^ self.lane).wrapping_add(*k),
                        _ => self.acc = self.acc.wrapping_add(self.lane),
                    }
                    *pc += stmt_len(s);
                }
                Stmt::Mark(k) => {
                    self.hash = self.hash.wrapping_mul(31).wrapping_add(self.acc).wrapping_add(*k);
                    *pc += stmt_len(s);
                }
                Stmt::If { cond, then, els } => {
                    *pc += cond_len(*cond);
                    let open = *pc;
                    let visit = self.visit(open);
                    *pc += 1;
                    let take = self.cond(*cond);
                    let mut then_pc = *pc;
                    let f_then = if take {
                        Some(self.block(then, &mut then_pc))
                    } else {
                        None
                    };
                    if !take {
                        then_pc += block_len(then);
                    }
                    *pc = then_pc;
                    let mut f = f_then.unwrap_or(Flow::Normal);
                    if let Some(els) = els {
                        *pc += 1;
                        let mut else_pc = *pc;
                        if !take {
                            f = self.block(els, &mut else_pc);
                        } else {
                            else_pc += block_len(els);
                        }
                        *pc = else_pc;
                    }
                    *pc += 1;
                    if matches!(f, Flow::Normal) {
                        self.reached.get_mut(&open).unwrap()[visit] = true;
                    } else {
                        flow = Flow::Break;
                    }
                }
                Stmt::Loop { extra_trips, body } => {
                    *pc += 3;
                    let open = *pc;
                    let visit = self.visit(open);
                    self.counters.push(0);
                    self.limits.push((self.lane & 3) + extra_trips);
                    let body_pc = *pc + 4;
                    loop {
                        if self.counters.last() >= self.limits.last() {
                            break;
                        }
                        *self.counters.last_mut().unwrap() += 1;
                        let mut p = body_pc;
                        if let Flow::Break = self.block(body, &mut p) {
                            break;
                        }
                    }
                    self.counters.pop();
                    self.limits.pop();
                    *pc = body_pc + block_len(body) + 1;
                    self.reached.get_mut(&open).unwrap()[visit] = true;
                }
                Stmt::Break(cond) => {
                    *pc += stmt_len(s);
                    if self.cond(*cond) {
                        flow = Flow::Break;
                    }
                }
            }
        }
        flow
    }
}

fn cond_len(c: Cond) -> usize {
    match c {
        Cond::LaneBit(_) | Cond::AccBit(_) => 2,
        Cond::LaneLt(_) | Cond::CounterEq(_) => 1,
    }
}

fn stmt_len(s: &Stmt) -> usize {
    match s {
        Stmt::Update(0 | 1, _) => 2,
        Stmt::Update(..) => 1,
        Stmt::Mark(_) => 3,
        Stmt::If { cond, then, els } => {
            cond_len(*cond) + 2 + block_len(then) + els.as_ref().map_or(0, |e| 1 + block_len(e))
        }
        Stmt::Loop { body, .. } => 3 + 5 + block_len(body),
        Stmt::Break(c) => cond_len(*c) + 1,
    }
}

fn block_len(stmts: &[Stmt]) -> usize {
    stmts.iter().map(stmt_len).sum()
}

/// Runs the program for one lane in isolation.
pub fn run_lane(stmts: &[Stmt], lane: u32) -> LaneRun {
    let mut s = Scalar {
        lane,
        acc: lane,
        hash: 7,
        counters: Vec::new(),
        limits: Vec::new(),
        reached: HashMap::new(),
    };
    let mut pc = 3;
    s.block(stmts, &mut pc);
    LaneRun {
        acc: s.acc,
        hash: s.hash,
        reached: s.reached,
    }
}

/// Assembles and runs one generated program on a single workgroup of `wg`
/// threads, then checks per-lane results against [`run_lane`] and the active
/// mask after every If/Loop construct against the lanes the reference says
/// reach that point.
pub fn check_mask_program(seed: u64, width: u32, wg: u32) -> Result<(), String> {
    use uvgpu::machcfg::MachineDescriptor;
    use uvgpu::vm::{launch, DeviceMemory, Dim3, LaunchConfig};

    let stmts = random_mask_program(seed, width);
    let emitted = emit(&stmts);
    let program = uvgpu::asm::parse_program(&emitted.source).map_err(|d| format!("{d:?}"))?;
    let machine = MachineDescriptor::custom("masks", width).unwrap();
    let mut cfg = LaunchConfig::new(machine, Dim3::linear(1), Dim3::linear(wg)).with_seed(seed);
    cfg.trace = true;
    let r = launch(&program, &cfg, DeviceMemory::new(8 * wg as usize)).map_err(|e| e.to_string())?;
    if let Some(t) = r.trap() {
        return Err(format!("{t}\n{}", emitted.source));
    }

    let lanes: Vec<LaneRun> = (0..width).map(|l| run_lane(&stmts, l)).collect();
    let words = r.memory.read_u32s(0, 2 * wg as usize);
    for tid in 0..wg as usize {
        let want = &lanes[tid % width as usize];
        if (words[2 * tid], words[2 * tid + 1]) != (want.acc, want.hash) {
            return Err(format!(
                "thread {tid}: vm (acc {}, hash {}) vs reference (acc {}, hash {})",
                words[2 * tid],
                words[2 * tid + 1],
                want.acc,
                want.hash
            ));
        }
    }

    let close_of: HashMap<usize, usize> = emitted.closes.clone();
    let waves = wg.div_ceil(width);
    for wave in 0..waves {
        let mut visits: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut pending: HashMap<usize, u64> = HashMap::new();
        for t in r.trace.iter().filter(|t| t.wave == wave) {
            for (&open, &close) in &close_of {
                if t.pc == close {
                    if let Some(expect) = pending.remove(&open) {
                        if t.mask != expect {
                            return Err(format!(
                                "wave {wave}: mask {:#x} after construct at pc {open}, expected {expect:#x}",
                                t.mask
                            ));
                        }
                    }
                }
            }
            if let Some(&_close) = close_of.get(&t.pc) {
                if let Some(stale) = pending.get(&t.pc) {
                    if *stale != 0 {
                        return Err(format!("wave {wave}: construct at pc {} never closed", t.pc));
                    }
                }
                let counts = visits.entry(t.pc).or_insert_with(|| vec![0; width as usize]);
                let mut expect = 0u64;
                for lane in 0..width as usize {
                    if t.mask >> lane & 1 == 1 {
                        let k = counts[lane];
                        counts[lane] += 1;
                        let reached = lanes[lane].reached.get(&t.pc).and_then(|v| v.get(k)).copied();
                        match reached {
                            Some(true) => expect |= 1 << lane,
                            Some(false) => {}
                            None => return Err(format!("wave {wave}: lane {lane} entered pc {} too often", t.pc)),
                        }
                    }
                }
                pending.insert(t.pc, expect);
            }
        }
        if let Some((open, m)) = pending.iter().find(|(_, &m)| m != 0) {
            return Err(format!(
                "wave {wave}: construct at pc {open} never closed (expected mask {m:#x})"
            ));
        }
    }
    Ok(())
}
