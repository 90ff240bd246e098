//! Instruction set data model and static program validation.
//!
//! The instruction set covers the eleven mandatory primitives (lockstep
//! waves, masked divergence through structured control flow, registers,
//! scratchpad, wave scheduling, hierarchical memory, atomics, barriers,
//! identity registers, async copies, and intra-wave shuffle) plus the
//! optional FP64/BF16 types and opaque matrix tiles.

use std::collections::HashSet;
use std::fmt;

use crate::machcfg::{MachineDescriptor, MatrixTile};

/// Which bits of a 32-bit register an operand names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegPart {
    Full,
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegRef {
    pub index: u16,
    pub part: RegPart,
}

impl RegRef {
    pub const fn full(index: u16) -> Self {
        RegRef {
            index,
            part: RegPart::Full,
        }
    }

    pub const fn low(index: u16) -> Self {
        RegRef {
            index,
            part: RegPart::Low,
        }
    }

    pub const fn high(index: u16) -> Self {
        RegRef {
            index,
            part: RegPart::High,
        }
    }

    pub fn is_full(self) -> bool {
        self.part == RegPart::Full
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    I32,
    U32,
    F16,
    F32,
    F64,
    BF16,
}

impl ScalarType {
    pub const ALL: [ScalarType; 6] = [
        ScalarType::I32,
        ScalarType::U32,
        ScalarType::F16,
        ScalarType::F32,
        ScalarType::F64,
        ScalarType::BF16,
    ];

    pub fn is_integer(self) -> bool {
        matches!(self, ScalarType::I32 | ScalarType::U32)
    }

    pub fn is_float(self) -> bool {
        !self.is_integer()
    }

    pub fn suffix(self) -> &'static str {
        match self {
            ScalarType::I32 => "i32",
            ScalarType::U32 => "u32",
            ScalarType::F16 => "f16",
            ScalarType::F32 => "f32",
            ScalarType::F64 => "f64",
            ScalarType::BF16 => "bf16",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Reg(RegRef),
    Imm(u32),
}

impl Operand {
    pub fn reg(self) -> Option<RegRef> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Imm(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Fma,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Not,
    Neg,
}

impl ArithOp {
    pub const ALL: [ArithOp; 14] = [
        ArithOp::Add,
        ArithOp::Sub,
        ArithOp::Mul,
        ArithOp::Div,
        ArithOp::Min,
        ArithOp::Max,
        ArithOp::Fma,
        ArithOp::And,
        ArithOp::Or,
        ArithOp::Xor,
        ArithOp::Shl,
        ArithOp::Shr,
        ArithOp::Not,
        ArithOp::Neg,
    ];

    pub fn arity(self) -> usize {
        match self {
            ArithOp::Not | ArithOp::Neg => 1,
            ArithOp::Fma => 3,
            _ => 2,
        }
    }

    /// Bitwise and shift operations are defined on integer types only.
    pub fn integer_only(self) -> bool {
        matches!(
            self,
            ArithOp::And | ArithOp::Or | ArithOp::Xor | ArithOp::Shl | ArithOp::Shr | ArithOp::Not
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
            ArithOp::Div => "div",
            ArithOp::Min => "min",
            ArithOp::Max => "max",
            ArithOp::Fma => "fma",
            ArithOp::And => "and",
            ArithOp::Or => "or",
            ArithOp::Xor => "xor",
            ArithOp::Shl => "shl",
            ArithOp::Shr => "shr",
            ArithOp::Not => "not",
            ArithOp::Neg => "neg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpRel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpRel {
    pub const ALL: [CmpRel; 6] = [CmpRel::Eq, CmpRel::Ne, CmpRel::Lt, CmpRel::Le, CmpRel::Gt, CmpRel::Ge];

    pub fn name(self) -> &'static str {
        match self {
            CmpRel::Eq => "eq",
            CmpRel::Ne => "ne",
            CmpRel::Lt => "lt",
            CmpRel::Le => "le",
            CmpRel::Gt => "gt",
            CmpRel::Ge => "ge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Scratch,
    Device,
    /// Read-only launch arguments.
    Arg,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Scratch => "scratch",
            Space::Device => "device",
            Space::Arg => "arg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Width {
    B8,
    B16,
    B32,
}

impl Width {
    pub fn bytes(self) -> u32 {
        match self {
            Width::B8 => 1,
            Width::B16 => 2,
            Width::B32 => 4,
        }
    }

    pub fn bits(self) -> u32 {
        self.bytes() * 8
    }
}

/// `[base + offset]` byte address. A missing base reads as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Address {
    pub base: Option<RegRef>,
    pub offset: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomicOp {
    Add,
    Sub,
    Min,
    Max,
    And,
    Or,
    Xor,
    Exch,
    CmpXchg,
}

impl AtomicOp {
    pub const ALL: [AtomicOp; 9] = [
        AtomicOp::Add,
        AtomicOp::Sub,
        AtomicOp::Min,
        AtomicOp::Max,
        AtomicOp::And,
        AtomicOp::Or,
        AtomicOp::Xor,
        AtomicOp::Exch,
        AtomicOp::CmpXchg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AtomicOp::Add => "add",
            AtomicOp::Sub => "sub",
            AtomicOp::Min => "min",
            AtomicOp::Max => "max",
            AtomicOp::And => "and",
            AtomicOp::Or => "or",
            AtomicOp::Xor => "xor",
            AtomicOp::Exch => "exch",
            AtomicOp::CmpXchg => "cmpxch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShuffleMode {
    Idx,
    Up,
    Down,
    Xor,
}

impl ShuffleMode {
    pub const ALL: [ShuffleMode; 4] = [ShuffleMode::Idx, ShuffleMode::Up, ShuffleMode::Down, ShuffleMode::Xor];

    pub fn name(self) -> &'static str {
        match self {
            ShuffleMode::Idx => "idx",
            ShuffleMode::Up => "up",
            ShuffleMode::Down => "down",
            ShuffleMode::Xor => "xor",
        }
    }
}

/// Set of observers a fence orders against, narrowest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Wave,
    Workgroup,
    Device,
    System,
}

impl Scope {
    pub const ALL: [Scope; 4] = [Scope::Wave, Scope::Workgroup, Scope::Device, Scope::System];

    pub fn name(self) -> &'static str {
        match self {
            Scope::Wave => "wave",
            Scope::Workgroup => "workgroup",
            Scope::Device => "device",
            Scope::System => "system",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemOrder {
    Acquire,
    Release,
    AcqRel,
}

impl MemOrder {
    pub fn name(self) -> &'static str {
        match self {
            MemOrder::Acquire => "acquire",
            MemOrder::Release => "release",
            MemOrder::AcqRel => "acqrel",
        }
    }

    pub fn acquires(self) -> bool {
        matches!(self, MemOrder::Acquire | MemOrder::AcqRel)
    }

    pub fn releases(self) -> bool {
        matches!(self, MemOrder::Release | MemOrder::AcqRel)
    }
}

/// Identity registers readable with `sreg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    LaneId,
    WaveId,
    TidX,
    TidY,
    TidZ,
    WgIdX,
    WgIdY,
    WgIdZ,
    WgDimX,
    WgDimY,
    WgDimZ,
    GridDimX,
    GridDimY,
    GridDimZ,
    WaveWidth,
}

impl Special {
    pub const ALL: [Special; 15] = [
        Special::LaneId,
        Special::WaveId,
        Special::TidX,
        Special::TidY,
        Special::TidZ,
        Special::WgIdX,
        Special::WgIdY,
        Special::WgIdZ,
        Special::WgDimX,
        Special::WgDimY,
        Special::WgDimZ,
        Special::GridDimX,
        Special::GridDimY,
        Special::GridDimZ,
        Special::WaveWidth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Special::LaneId => "lane_id",
            Special::WaveId => "wave_id",
            Special::TidX => "tid_x",
            Special::TidY => "tid_y",
            Special::TidZ => "tid_z",
            Special::WgIdX => "wgid_x",
            Special::WgIdY => "wgid_y",
            Special::WgIdZ => "wgid_z",
            Special::WgDimX => "wgdim_x",
            Special::WgDimY => "wgdim_y",
            Special::WgDimZ => "wgdim_z",
            Special::GridDimX => "griddim_x",
            Special::GridDimY => "griddim_y",
            Special::GridDimZ => "griddim_z",
            Special::WaveWidth => "wave_width",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Arith {
        op: ArithOp,
        ty: ScalarType,
        dst: RegRef,
        srcs: Vec<Operand>,
    },
    Cvt {
        from: ScalarType,
        to: ScalarType,
        dst: RegRef,
        src: Operand,
    },
    /// Writes 1 or 0 into `dst`.
    Cmp {
        rel: CmpRel,
        ty: ScalarType,
        dst: RegRef,
        a: Operand,
        b: Operand,
    },
    Ld {
        space: Space,
        width: Width,
        dst: RegRef,
        addr: Address,
    },
    St {
        space: Space,
        width: Width,
        src: RegRef,
        addr: Address,
    },
    Atomic {
        op: AtomicOp,
        space: Space,
        ty: ScalarType,
        dst: RegRef,
        addr: Address,
        value: Operand,
        compare: Option<Operand>,
    },
    Shfl {
        mode: ShuffleMode,
        dst: RegRef,
        src: RegRef,
        lane: Operand,
    },
    Bar {
        id: u32,
    },
    Fence {
        scope: Scope,
        order: MemOrder,
    },
    AsyncCopy {
        dst: RegRef,
        src: RegRef,
        bytes: u32,
    },
    WaitAsync {
        max_outstanding: u32,
    },
    ReadSpecial {
        dst: RegRef,
        which: Special,
    },
    If {
        cond: RegRef,
    },
    Else,
    EndIf,
    Loop,
    Break {
        cond: Option<RegRef>,
    },
    EndLoop,
    Call {
        target: String,
    },
    Ret,
    /// Opaque wave-collective `D = A x B + C` on one matrix tile.
    Mma {
        tile: MatrixTile,
        dst: RegRef,
        a: RegRef,
        b: RegRef,
        c: RegRef,
    },
    Halt,
}

impl Instruction {
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            Instruction::If { .. }
                | Instruction::Else
                | Instruction::EndIf
                | Instruction::Loop
                | Instruction::Break { .. }
                | Instruction::EndLoop
        )
    }

    /// Every register slot the instruction touches, as `(first index, count)`
    /// spans. FP64 values occupy register pairs; MMA fragments occupy
    /// consecutive registers sized by the wave width.
    pub fn register_spans(&self, wave_width: u32) -> Vec<(RegRef, u32)> {
        let mut spans = Vec::new();
        let op_span = |spans: &mut Vec<(RegRef, u32)>, o: &Operand, n: u32| {
            if let Operand::Reg(r) = o {
                spans.push((*r, n));
            }
        };
        let slots = |ty: ScalarType| if ty == ScalarType::F64 { 2 } else { 1 };
        match self {
            Instruction::Arith { ty, dst, srcs, .. } => {
                spans.push((*dst, slots(*ty)));
                for s in srcs {
                    op_span(&mut spans, s, slots(*ty));
                }
            }
            Instruction::Cvt { from, to, dst, src } => {
                spans.push((*dst, slots(*to)));
                op_span(&mut spans, src, slots(*from));
            }
            Instruction::Cmp { ty, dst, a, b, .. } => {
                spans.push((*dst, 1));
                op_span(&mut spans, a, slots(*ty));
                op_span(&mut spans, b, slots(*ty));
            }
            Instruction::Ld { dst, addr, .. } => {
                spans.push((*dst, 1));
                if let Some(b) = addr.base {
                    spans.push((b, 1));
                }
            }
            Instruction::St { src, addr, .. } => {
                spans.push((*src, 1));
                if let Some(b) = addr.base {
                    spans.push((b, 1));
                }
            }
            Instruction::Atomic {
                dst,
                addr,
                value,
                compare,
                ..
            } => {
                spans.push((*dst, 1));
                if let Some(b) = addr.base {
                    spans.push((b, 1));
                }
                op_span(&mut spans, value, 1);
                if let Some(c) = compare {
                    op_span(&mut spans, c, 1);
                }
            }
            Instruction::Shfl { dst, src, lane, .. } => {
                spans.push((*dst, 1));
                spans.push((*src, 1));
                op_span(&mut spans, lane, 1);
            }
            Instruction::AsyncCopy { dst, src, .. } => {
                spans.push((*dst, 1));
                spans.push((*src, 1));
            }
            Instruction::ReadSpecial { dst, .. } => spans.push((*dst, 1)),
            Instruction::If { cond } => spans.push((*cond, 1)),
            Instruction::Break { cond: Some(c) } => spans.push((*c, 1)),
            Instruction::Mma { tile, dst, a, b, c } => {
                let frag = |rows: u32, cols: u32| mma_fragment_regs(rows, cols, wave_width);
                spans.push((*dst, frag(tile.m, tile.n)));
                spans.push((*a, frag(tile.m, tile.k)));
                spans.push((*b, frag(tile.k, tile.n)));
                spans.push((*c, frag(tile.m, tile.n)));
            }
            Instruction::Bar { .. }
            | Instruction::Fence { .. }
            | Instruction::WaitAsync { .. }
            | Instruction::Else
            | Instruction::EndIf
            | Instruction::Loop
            | Instruction::Break { cond: None }
            | Instruction::EndLoop
            | Instruction::Call { .. }
            | Instruction::Ret
            | Instruction::Halt => {}
        }
        spans
    }
}

/// Registers per lane holding a `rows x cols` matrix fragment: element `e`
/// lives in lane `e % W`, register `base + e / W`.
pub fn mma_fragment_regs(rows: u32, cols: u32, wave_width: u32) -> u32 {
    (rows * cols).div_ceil(wave_width)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub body: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub functions: Vec<Function>,
    /// Name of the kernel function launched by the grid.
    pub entry: String,
    /// Registers per thread the kernel declares.
    pub regs_used: u32,
    /// Scratchpad bytes per workgroup the kernel declares.
    pub scratch_used: u32,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn instruction_count(&self) -> usize {
        self.functions.iter().map(|f| f.body.len()).sum()
    }

    /// One past the highest register index any instruction touches, assuming
    /// wave width `wave_width` for MMA fragment sizes.
    pub fn static_register_demand(&self, wave_width: u32) -> u32 {
        self.functions
            .iter()
            .flat_map(|f| f.body.iter())
            .flat_map(|i| i.register_spans(wave_width))
            .map(|(r, n)| u32::from(r.index) + n)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Entry,
    Nesting,
    Placement,
    Terminator,
    CallTarget,
    RegisterBound,
    DeclaredRegisters,
    RegisterBudget,
    ScratchBudget,
    BarrierId,
    Capability,
    MatrixTile,
    ShuffleOperand,
    Operands,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::Entry => "entry",
            Rule::Nesting => "nesting",
            Rule::Placement => "placement",
            Rule::Terminator => "terminator",
            Rule::CallTarget => "call-target",
            Rule::RegisterBound => "register-bound",
            Rule::DeclaredRegisters => "declared-registers",
            Rule::RegisterBudget => "register-budget",
            Rule::ScratchBudget => "scratch-budget",
            Rule::BarrierId => "barrier-id",
            Rule::Capability => "capability",
            Rule::MatrixTile => "matrix-tile",
            Rule::ShuffleOperand => "shuffle-operand",
            Rule::Operands => "operands",
        }
    }
}

/// One validation failure, located by function and instruction index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationDiagnostic {
    pub function: String,
    pub index: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for ValidationDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {} ({})", self.function, i, self.message, self.rule.id()),
            None => write!(f, "{}: {} ({})", self.function, self.message, self.rule.id()),
        }
    }
}

/// Checks `program` against the limits and capabilities of `machine`.
///
/// Returns every violation found; validation never stops at the first one.
pub fn validate_program(program: &Program, machine: &MachineDescriptor) -> Result<(), Vec<ValidationDiagnostic>> {
    let mut v = Validator {
        machine,
        program,
        diags: Vec::new(),
    };
    v.run();
    if v.diags.is_empty() {
        Ok(())
    } else {
        Err(v.diags)
    }
}

struct Validator<'a> {
    machine: &'a MachineDescriptor,
    program: &'a Program,
    diags: Vec<ValidationDiagnostic>,
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Then,
    Else,
    Loop,
}

impl Validator<'_> {
    fn push(&mut self, function: &str, index: Option<usize>, rule: Rule, message: String) {
        self.diags.push(ValidationDiagnostic {
            function: function.to_string(),
            index,
            rule,
            message,
        });
    }

    fn run(&mut self) {
        let program = self.program;
        let m = self.machine;
        let entry_name = program.entry.as_str();
        if program.function(entry_name).is_none() {
            self.push(
                entry_name,
                None,
                Rule::Entry,
                format!("entry kernel '{}' is not defined", entry_name),
            );
        }
        let mut seen = HashSet::new();
        for f in &program.functions {
            if !seen.insert(f.name.as_str()) {
                self.push(&f.name, None, Rule::Entry, "function defined twice".into());
            }
        }
        if program.regs_used == 0 {
            self.push(
                entry_name,
                None,
                Rule::RegisterBudget,
                "declared .regs must be at least 1".into(),
            );
        }
        if program.regs_used > m.max_regs {
            self.push(
                entry_name,
                None,
                Rule::RegisterBudget,
                format!("declared .regs {} exceeds R={}", program.regs_used, m.max_regs),
            );
        }
        if program.scratch_used > m.scratchpad {
            self.push(
                entry_name,
                None,
                Rule::ScratchBudget,
                format!("declared .scratch {} exceeds S={}", program.scratch_used, m.scratchpad),
            );
        }
        for f in &program.functions {
            self.check_structure(f, f.name == entry_name);
            for (idx, instr) in f.body.iter().enumerate() {
                self.check_instruction(f, idx, instr);
            }
        }
    }

    fn check_structure(&mut self, f: &Function, is_entry: bool) {
        let mut stack: Vec<(Block, usize)> = Vec::new();
        for (idx, instr) in f.body.iter().enumerate() {
            let at = Some(idx);
            match instr {
                Instruction::If { .. } => stack.push((Block::Then, idx)),
                Instruction::Else => match stack.last_mut() {
                    Some((kind @ Block::Then, _)) => *kind = Block::Else,
                    _ => self.push(&f.name, at, Rule::Nesting, "else without matching if".into()),
                },
                Instruction::EndIf => match stack.last() {
                    Some((Block::Then | Block::Else, _)) => {
                        stack.pop();
                    }
                    _ => self.push(&f.name, at, Rule::Nesting, "endif without matching if".into()),
                },
                Instruction::Loop => stack.push((Block::Loop, idx)),
                Instruction::EndLoop => match stack.last() {
                    Some((Block::Loop, _)) => {
                        stack.pop();
                    }
                    _ => self.push(&f.name, at, Rule::Nesting, "endloop without matching loop".into()),
                },
                Instruction::Break { .. } => {
                    if !stack.iter().any(|(b, _)| *b == Block::Loop) {
                        self.push(&f.name, at, Rule::Nesting, "break outside of a loop".into());
                    }
                }
                Instruction::Halt => {
                    if !is_entry {
                        self.push(
                            &f.name,
                            at,
                            Rule::Placement,
                            "halt is only allowed in the kernel".into(),
                        );
                    } else if !stack.is_empty() {
                        self.push(
                            &f.name,
                            at,
                            Rule::Placement,
                            "halt must appear outside structured blocks".into(),
                        );
                    }
                }
                Instruction::Ret => {
                    if is_entry {
                        self.push(
                            &f.name,
                            at,
                            Rule::Placement,
                            "ret is not allowed in the kernel; use halt".into(),
                        );
                    } else if !stack.is_empty() {
                        self.push(
                            &f.name,
                            at,
                            Rule::Placement,
                            "ret must appear outside structured blocks".into(),
                        );
                    }
                }
                _ => {}
            }
        }
        if let Some((_, opened)) = stack.first() {
            self.push(
                &f.name,
                Some(*opened),
                Rule::Nesting,
                "unclosed structured block".into(),
            );
        }
        let expected = if is_entry { "halt" } else { "ret" };
        let ends_ok = match f.body.last() {
            Some(Instruction::Halt) => is_entry,
            Some(Instruction::Ret) => !is_entry,
            _ => false,
        };
        if !ends_ok {
            self.push(
                &f.name,
                f.body.len().checked_sub(1),
                Rule::Terminator,
                format!("function must end with {}", expected),
            );
        }
    }

    fn check_reg(&mut self, f: &Function, idx: usize, r: RegRef, span: u32) {
        let last = u32::from(r.index) + span - 1;
        if last >= self.machine.max_regs {
            self.push(
                &f.name,
                Some(idx),
                Rule::RegisterBound,
                format!("register index {} exceeds R={}", last, self.machine.max_regs),
            );
        } else if last >= self.program.regs_used {
            self.push(
                &f.name,
                Some(idx),
                Rule::DeclaredRegisters,
                format!(
                    "register index {} exceeds declared .regs {}",
                    last, self.program.regs_used
                ),
            );
        }
    }

    fn check_type(&mut self, f: &Function, idx: usize, ty: ScalarType) {
        let m = self.machine;
        if ty == ScalarType::F64 && !m.has_fp64 {
            self.push(&f.name, Some(idx), Rule::Capability, "fp64 capability absent".into());
        }
        if ty == ScalarType::BF16 && !m.has_bf16 {
            self.push(&f.name, Some(idx), Rule::Capability, "bf16 capability absent".into());
        }
    }

    fn operands(&mut self, f: &Function, idx: usize, msg: &str) {
        self.push(&f.name, Some(idx), Rule::Operands, msg.to_string());
    }

    fn check_instruction(&mut self, f: &Function, idx: usize, instr: &Instruction) {
        let w = self.machine.wave_width;
        for (r, span) in instr.register_spans(w) {
            self.check_reg(f, idx, r, span);
        }
        let f64_full = |ty: ScalarType, regs: &[Option<RegRef>]| {
            ty != ScalarType::F64 || regs.iter().flatten().all(|r| r.is_full())
        };
        match instr {
            Instruction::Arith { op, ty, dst, srcs } => {
                self.check_type(f, idx, *ty);
                if srcs.len() != op.arity() {
                    self.operands(f, idx, "wrong number of source operands");
                }
                if op.integer_only() && !ty.is_integer() {
                    self.operands(f, idx, "bitwise and shift operations need an integer type");
                }
                let mut regs: Vec<Option<RegRef>> = srcs.iter().map(|s| s.reg()).collect();
                regs.push(Some(*dst));
                if !f64_full(*ty, &regs) {
                    self.operands(f, idx, "f64 operands must name full registers");
                }
            }
            Instruction::Cvt { from, to, dst, src } => {
                self.check_type(f, idx, *from);
                self.check_type(f, idx, *to);
                if !f64_full(*to, &[Some(*dst)]) || !f64_full(*from, &[src.reg()]) {
                    self.operands(f, idx, "f64 operands must name full registers");
                }
            }
            Instruction::Cmp { ty, a, b, .. } => {
                self.check_type(f, idx, *ty);
                if !f64_full(*ty, &[a.reg(), b.reg()]) {
                    self.operands(f, idx, "f64 operands must name full registers");
                }
            }
            Instruction::Ld { width, dst, addr, .. } => {
                if *width == Width::B32 && !dst.is_full() {
                    self.operands(f, idx, "32-bit load into a register half");
                }
                self.check_base(f, idx, addr);
            }
            Instruction::St {
                space,
                width,
                src,
                addr,
            } => {
                if *space == Space::Arg {
                    self.operands(f, idx, "arg space is read-only");
                }
                if *width == Width::B32 && !src.is_full() {
                    self.operands(f, idx, "32-bit store from a register half");
                }
                self.check_base(f, idx, addr);
            }
            Instruction::Atomic {
                op,
                space,
                ty,
                dst,
                addr,
                compare,
                ..
            } => {
                if *space == Space::Arg {
                    self.operands(f, idx, "atomics need scratch or device space");
                }
                if !ty.is_integer() {
                    self.operands(f, idx, "atomics operate on i32 or u32");
                }
                if (*op == AtomicOp::CmpXchg) != compare.is_some() {
                    self.operands(f, idx, "compare operand is required by cmpxch only");
                }
                if !dst.is_full() {
                    self.operands(f, idx, "atomic destination must be a full register");
                }
                self.check_base(f, idx, addr);
            }
            Instruction::Shfl {
                lane: Operand::Imm(v), ..
            } if *v >= w => {
                self.push(
                    &f.name,
                    Some(idx),
                    Rule::ShuffleOperand,
                    format!("shuffle operand {} outside [0, W={})", v, w),
                );
            }
            Instruction::Bar { id } => {
                let named = self.machine.named_barriers;
                if *id >= named {
                    self.push(
                        &f.name,
                        Some(idx),
                        Rule::BarrierId,
                        format!("barrier id {} exceeds named barriers ({})", id, named),
                    );
                }
            }
            Instruction::AsyncCopy { dst, src, bytes } => {
                if *bytes == 0 || bytes % 4 != 0 {
                    self.operands(f, idx, "async copy size must be a positive multiple of 4");
                }
                if !dst.is_full() || !src.is_full() {
                    self.operands(f, idx, "async copy addresses must be full registers");
                }
            }
            Instruction::Call { target } => {
                if target == &self.program.entry {
                    self.push(
                        &f.name,
                        Some(idx),
                        Rule::CallTarget,
                        "the kernel cannot be called".into(),
                    );
                } else if self.program.function(target).is_none() {
                    self.push(
                        &f.name,
                        Some(idx),
                        Rule::CallTarget,
                        format!("call to undefined function '{}'", target),
                    );
                }
            }
            Instruction::Mma { tile, dst, a, b, c, .. } => {
                if self.machine.matrix_tiles.is_empty() {
                    self.push(&f.name, Some(idx), Rule::Capability, "matrix capability absent".into());
                } else if !self.machine.supports_tile(*tile) {
                    self.push(
                        &f.name,
                        Some(idx),
                        Rule::MatrixTile,
                        format!("matrix tile {} not offered by this machine", tile),
                    );
                }
                if [dst, a, b, c].iter().any(|r| !r.is_full()) {
                    self.operands(f, idx, "matrix fragments must start at full registers");
                }
            }
            _ => {}
        }
    }

    fn check_base(&mut self, f: &Function, idx: usize, addr: &Address) {
        if let Some(b) = addr.base {
            if !b.is_full() {
                self.operands(f, idx, "address base must be a full register");
            }
        }
    }
}
