//! Text assembly for [`Program`]s (`.uva` files).
//!
//! ```text
//! .regs 4
//! .scratch 0
//!
//! .kernel ids
//! sreg r0, %tid_x
//! shl.u32 r1, r0, 2
//! st.device.b32 [r1], r0
//! halt
//! ```
//!
//! Mnemonics are `name[.mode][.type]`, registers `rN` with halves `rN.l` and
//! `rN.h`, immediates decimal or `0x` hex, comments run from `;` to the end
//! of the line. Structured control flow needs no labels; the only names are
//! function names used by `call`.

use std::fmt::{self, Write as _};

use crate::isa::{
    Address, ArithOp, AtomicOp, CmpRel, Function, Instruction, MemOrder, Operand, Program, RegPart, RegRef, ScalarType,
    Scope, ShuffleMode, Space, Special, Width,
};
use crate::machcfg::MatrixTile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.column, sev, self.message)
    }
}

/// Parses `source` into a program, or returns every error found.
pub fn parse_program(source: &str) -> Result<Program, Vec<Diagnostic>> {
    let (program, diags) = parse_with_warnings(source);
    match program {
        Some(p) => Ok(p),
        None => Err(diags.into_iter().filter(|d| d.severity == Severity::Error).collect()),
    }
}

/// Like [`parse_program`] but also reports warnings (e.g. unreachable code)
/// alongside a successful parse.
pub fn parse_with_warnings(source: &str) -> (Option<Program>, Vec<Diagnostic>) {
    let mut asm = Assembler::default();
    for (idx, line) in source.lines().enumerate() {
        asm.line(idx + 1, line);
    }
    asm.finish(source.lines().count().max(1))
}

#[derive(Default)]
struct Assembler {
    functions: Vec<Function>,
    entry: Option<(String, usize)>,
    regs: Option<u32>,
    scratch: Option<u32>,
    diags: Vec<Diagnostic>,
    /// Set once a top-level halt or ret ends the current function body.
    terminated_at: Option<usize>,
    depth: usize,
    warned_unreachable: bool,
}

impl Assembler {
    fn error(&mut self, line: usize, column: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            line,
            column,
            message: message.into(),
            severity: Severity::Error,
        });
    }

    fn line(&mut self, line_no: usize, raw: &str) {
        let text = match raw.find(';') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens = match lex(text) {
            Ok(t) => t,
            Err((col, msg)) => return self.error(line_no, col, msg),
        };
        if tokens.is_empty() {
            return;
        }
        let mut cur = Cursor {
            tokens: &tokens,
            pos: 0,
            line_len: text.chars().count(),
        };
        let head = cur.peek().cloned();
        let result = match head {
            Some(Token {
                kind: TokKind::Word(ref w),
                ..
            }) if w.starts_with('.') => self.directive(&mut cur, line_no),
            _ => self.instruction(&mut cur, line_no),
        };
        if let Err((col, msg)) = result {
            self.error(line_no, col, msg);
        }
    }

    fn directive(&mut self, cur: &mut Cursor, line_no: usize) -> Result<(), (usize, String)> {
        let (name, col) = cur.word()?;
        match name.as_str() {
            ".kernel" | ".func" => {
                let (fname, fcol) = cur.word()?;
                cur.end()?;
                if !is_identifier(&fname) {
                    return Err((fcol, format!("invalid function name '{}'", fname)));
                }
                if self.functions.iter().any(|f| f.name == fname) {
                    return Err((fcol, format!("function '{}' defined twice", fname)));
                }
                if name == ".kernel" {
                    if let Some((prev, line)) = &self.entry {
                        return Err((
                            col,
                            format!("second .kernel '{}' (kernel '{}' at line {})", fname, prev, line),
                        ));
                    }
                    self.entry = Some((fname.clone(), line_no));
                }
                self.functions.push(Function {
                    name: fname,
                    body: Vec::new(),
                });
                self.terminated_at = None;
                self.depth = 0;
                self.warned_unreachable = false;
                Ok(())
            }
            ".regs" | ".scratch" => {
                let (value, vcol) = cur.number()?;
                cur.end()?;
                let value = u32::try_from(value)
                    .map_err(|_| (vcol, format!("{} expects a non-negative 32-bit count", name)))?;
                let slot = if name == ".regs" {
                    &mut self.regs
                } else {
                    &mut self.scratch
                };
                if slot.is_some() {
                    return Err((col, format!("duplicate {} directive", name)));
                }
                *slot = Some(value);
                Ok(())
            }
            other => Err((col, format!("unknown directive '{}'", other))),
        }
    }

    fn instruction(&mut self, cur: &mut Cursor, line_no: usize) -> Result<(), (usize, String)> {
        let (mnemonic, col) = cur.word()?;
        let instr = parse_instruction(&mnemonic, col, cur)?;
        cur.end()?;
        if self.functions.is_empty() {
            return Err((col, "instruction outside of a function".into()));
        }
        match instr {
            Instruction::If { .. } | Instruction::Loop => self.depth += 1,
            Instruction::EndIf | Instruction::EndLoop => self.depth = self.depth.saturating_sub(1),
            _ => {}
        }
        if self.terminated_at.is_some() && !self.warned_unreachable {
            self.warned_unreachable = true;
            self.diags.push(Diagnostic {
                line: line_no,
                column: col,
                message: "unreachable instruction after halt/ret".into(),
                severity: Severity::Warning,
            });
        }
        if matches!(instr, Instruction::Halt | Instruction::Ret) && self.depth == 0 {
            self.terminated_at.get_or_insert(line_no);
        }
        self.functions.last_mut().expect("checked above").body.push(instr);
        Ok(())
    }

    fn finish(mut self, last_line: usize) -> (Option<Program>, Vec<Diagnostic>) {
        if self.entry.is_none() && !self.diags.iter().any(|d| d.severity == Severity::Error) {
            self.error(last_line, 1, "no .kernel directive");
        }
        if self.diags.iter().any(|d| d.severity == Severity::Error) {
            return (None, self.diags);
        }
        let (entry, _) = self.entry.take().expect("checked above");
        let mut program = Program {
            functions: self.functions,
            entry,
            regs_used: 0,
            scratch_used: self.scratch.unwrap_or(0),
        };
        program.regs_used = self.regs.unwrap_or_else(|| program.static_register_demand(8).max(1));
        (Some(program), self.diags)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Word(String),
    Number(i64),
    Comma,
    LBracket,
    RBracket,
    Plus,
    Minus,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, (usize, String)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let single = match c {
            ',' => Some(TokKind::Comma),
            '[' => Some(TokKind::LBracket),
            ']' => Some(TokKind::RBracket),
            '+' => Some(TokKind::Plus),
            _ => None,
        };
        if let Some(kind) = single {
            out.push(Token { kind, col });
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' || c.is_ascii_digit() {
            let negative = c == '-';
            let start = if negative { i + 1 } else { i };
            if negative && !chars.get(start).is_some_and(|d| d.is_ascii_digit()) {
                out.push(Token {
                    kind: TokKind::Minus,
                    col,
                });
                i += 1;
                continue;
            }
            let mut end = start;
            while end < chars.len() && chars[end].is_ascii_alphanumeric() {
                end += 1;
            }
            let digits: String = chars[start..end].iter().collect();
            let magnitude = parse_number(&digits).ok_or_else(|| (col, format!("malformed number '{}'", digits)))?;
            out.push(Token {
                kind: TokKind::Number(if negative { -magnitude } else { magnitude }),
                col,
            });
            i = end;
        } else if c.is_ascii_alphabetic() || c == '_' || c == '.' || c == '%' {
            let mut end = i;
            while end < chars.len() && (chars[end].is_ascii_alphanumeric() || matches!(chars[end], '_' | '.' | '%')) {
                end += 1;
            }
            out.push(Token {
                kind: TokKind::Word(chars[i..end].iter().collect()),
                col,
            });
            i = end;
        } else {
            return Err((col, format!("unexpected character '{}'", c)));
        }
    }
    Ok(out)
}

fn parse_number(digits: &str) -> Option<i64> {
    let value = match digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
        Some(hex) if !hex.is_empty() => i64::from_str_radix(hex, 16).ok()?,
        Some(_) => return None,
        None => digits.parse().ok()?,
    };
    (value <= i64::from(u32::MAX)).then_some(value)
}

struct Cursor<'a> {
    tokens: &'a [Token],
    pos: usize,
    line_len: usize,
}

type PResult<T> = Result<T, (usize, String)>;

impl Cursor<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    /// Column just past the last token, for errors at end of line.
    fn eol_col(&self) -> usize {
        self.line_len + 1
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.eol_col(), |t| t.col)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end(&mut self) -> PResult<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err((t.col, "unexpected trailing input".into())),
        }
    }

    fn word(&mut self) -> PResult<(String, usize)> {
        let col = self.here();
        match self.next() {
            Some(Token {
                kind: TokKind::Word(w),
                col,
            }) => Ok((w, col)),
            _ => Err((col, "expected a name".into())),
        }
    }

    fn number(&mut self) -> PResult<(i64, usize)> {
        let col = self.here();
        match self.next() {
            Some(Token {
                kind: TokKind::Number(n),
                col,
            }) => Ok((n, col)),
            _ => Err((col, "expected a number".into())),
        }
    }

    fn expect(&mut self, kind: TokKind, what: &str) -> PResult<()> {
        let col = self.here();
        match self.next() {
            Some(t) if t.kind == kind => Ok(()),
            _ => Err((col, format!("expected '{}'", what))),
        }
    }

    fn comma(&mut self) -> PResult<()> {
        self.expect(TokKind::Comma, ",")
    }

    fn at_end(&self) -> bool {
        self.peek().is_none()
    }

    fn reg(&mut self) -> PResult<RegRef> {
        let col = self.here();
        match self.next() {
            Some(Token {
                kind: TokKind::Word(w),
                col,
            }) => parse_reg(&w).ok_or((col, format!("bad register syntax '{}'", w))),
            _ => Err((col, "expected a register".into())),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        let col = self.here();
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokKind::Number(n)) => {
                self.next();
                imm32(n, col).map(Operand::Imm)
            }
            Some(TokKind::Word(_)) => self.reg().map(Operand::Reg),
            _ => Err((col, "expected a register or immediate".into())),
        }
    }

    fn imm(&mut self) -> PResult<u32> {
        let (n, col) = self.number()?;
        u32::try_from(n).map_err(|_| (col, "expected a non-negative immediate".into()))
    }

    fn address(&mut self) -> PResult<Address> {
        self.expect(TokKind::LBracket, "[")?;
        let col = self.here();
        let mut addr = Address { base: None, offset: 0 };
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokKind::Word(_)) => {
                addr.base = Some(self.reg()?);
                match self.peek().map(|t| t.kind.clone()) {
                    Some(TokKind::Plus) => {
                        self.next();
                        let (n, c) = self.number()?;
                        addr.offset = offset32(n, c)?;
                    }
                    Some(TokKind::Number(n)) if n < 0 => {
                        let c = self.here();
                        self.next();
                        addr.offset = offset32(n, c)?;
                    }
                    _ => {}
                }
            }
            Some(TokKind::Number(n)) => {
                self.next();
                addr.offset = offset32(n, col)?;
            }
            _ => return Err((col, "malformed address".into())),
        }
        self.expect(TokKind::RBracket, "]")?;
        Ok(addr)
    }
}

fn imm32(n: i64, col: usize) -> PResult<u32> {
    if n < i64::from(i32::MIN) {
        return Err((col, "immediate does not fit in 32 bits".into()));
    }
    Ok(n as u32)
}

fn offset32(n: i64, col: usize) -> PResult<i32> {
    i32::try_from(n).map_err(|_| (col, "address offset does not fit in 32 bits".into()))
}

fn parse_reg(word: &str) -> Option<RegRef> {
    let rest = word.strip_prefix('r')?;
    let (digits, part) = match rest.split_once('.') {
        Some((d, "l")) => (d, RegPart::Low),
        Some((d, "h")) => (d, RegPart::High),
        Some(_) => return None,
        None => (rest, RegPart::Full),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    Some(RegRef {
        index: digits.parse().ok()?,
        part,
    })
}

fn scalar_type(s: &str) -> Option<ScalarType> {
    ScalarType::ALL.into_iter().find(|t| t.suffix() == s)
}

fn width(s: &str) -> Option<Width> {
    match s {
        "b8" => Some(Width::B8),
        "b16" => Some(Width::B16),
        "b32" => Some(Width::B32),
        _ => None,
    }
}

fn space(s: &str) -> Option<Space> {
    [Space::Scratch, Space::Device, Space::Arg]
        .into_iter()
        .find(|sp| sp.name() == s)
}

fn scope(s: &str) -> Option<Scope> {
    Scope::ALL.into_iter().find(|sc| sc.name() == s)
}

fn order(s: &str) -> Option<MemOrder> {
    [MemOrder::Acquire, MemOrder::Release, MemOrder::AcqRel]
        .into_iter()
        .find(|o| o.name() == s)
}

fn special(s: &str) -> Option<Special> {
    let name = s.strip_prefix('%')?;
    Special::ALL.into_iter().find(|sp| sp.name() == name)
}

fn tile(s: &str) -> Option<MatrixTile> {
    let rest = s.strip_prefix('m')?;
    let (m, rest) = rest.split_once('n')?;
    let (n, k) = rest.split_once('k')?;
    let parsed = MatrixTile::new(m.parse().ok()?, n.parse().ok()?, k.parse().ok()?);
    (parsed.m > 0 && parsed.n > 0 && parsed.k > 0).then_some(parsed)
}

fn parse_instruction(mnemonic: &str, col: usize, cur: &mut Cursor) -> PResult<Instruction> {
    let parts: Vec<&str> = mnemonic.split('.').collect();
    let bad = |what: &str| (col, format!("{} in '{}'", what, mnemonic));
    let suffixes = |n: usize| -> PResult<()> {
        if parts.len() == n + 1 {
            Ok(())
        } else {
            Err(bad(&format!("expected {} suffix(es)", n)))
        }
    };

    if let Some(op) = ArithOp::ALL.into_iter().find(|o| o.name() == parts[0]) {
        suffixes(1)?;
        let ty = scalar_type(parts[1]).ok_or_else(|| bad("unknown type"))?;
        let dst = cur.reg()?;
        let mut srcs = Vec::with_capacity(op.arity());
        for _ in 0..op.arity() {
            cur.comma()?;
            srcs.push(cur.operand()?);
        }
        return Ok(Instruction::Arith { op, ty, dst, srcs });
    }

    let instr = match parts[0] {
        "mov" => {
            suffixes(1)?;
            let ty = match parts[1] {
                "b32" | "u32" => ScalarType::U32,
                "i32" => ScalarType::I32,
                _ => return Err(bad("mov takes .b32, .u32 or .i32")),
            };
            let dst = cur.reg()?;
            cur.comma()?;
            let src = cur.operand()?;
            Instruction::Arith {
                op: ArithOp::Or,
                ty,
                dst,
                srcs: vec![src, Operand::Imm(0)],
            }
        }
        "cvt" => {
            suffixes(2)?;
            let to = scalar_type(parts[1]).ok_or_else(|| bad("unknown type"))?;
            let from = scalar_type(parts[2]).ok_or_else(|| bad("unknown type"))?;
            let dst = cur.reg()?;
            cur.comma()?;
            let src = cur.operand()?;
            Instruction::Cvt { from, to, dst, src }
        }
        "cmp" => {
            suffixes(2)?;
            let rel = CmpRel::ALL
                .into_iter()
                .find(|r| r.name() == parts[1])
                .ok_or_else(|| bad("unknown comparison"))?;
            let ty = scalar_type(parts[2]).ok_or_else(|| bad("unknown type"))?;
            let dst = cur.reg()?;
            cur.comma()?;
            let a = cur.operand()?;
            cur.comma()?;
            let b = cur.operand()?;
            Instruction::Cmp { rel, ty, dst, a, b }
        }
        "ld" | "st" => {
            suffixes(2)?;
            let sp = space(parts[1]).ok_or_else(|| bad("unknown memory space"))?;
            let w = width(parts[2]).ok_or_else(|| bad("unknown width"))?;
            if parts[0] == "ld" {
                let dst = cur.reg()?;
                cur.comma()?;
                let addr = cur.address()?;
                Instruction::Ld {
                    space: sp,
                    width: w,
                    dst,
                    addr,
                }
            } else {
                let addr = cur.address()?;
                cur.comma()?;
                let src = cur.reg()?;
                Instruction::St {
                    space: sp,
                    width: w,
                    src,
                    addr,
                }
            }
        }
        "atom" => {
            suffixes(3)?;
            let sp = space(parts[1]).ok_or_else(|| bad("unknown memory space"))?;
            let op = AtomicOp::ALL
                .into_iter()
                .find(|o| o.name() == parts[2])
                .ok_or_else(|| bad("unknown atomic operation"))?;
            let ty = scalar_type(parts[3]).ok_or_else(|| bad("unknown type"))?;
            let dst = cur.reg()?;
            cur.comma()?;
            let addr = cur.address()?;
            cur.comma()?;
            let value = cur.operand()?;
            let compare = if op == AtomicOp::CmpXchg {
                cur.comma()?;
                Some(cur.operand()?)
            } else {
                None
            };
            Instruction::Atomic {
                op,
                space: sp,
                ty,
                dst,
                addr,
                value,
                compare,
            }
        }
        "shfl" => {
            suffixes(2)?;
            let mode = ShuffleMode::ALL
                .into_iter()
                .find(|m| m.name() == parts[1])
                .ok_or_else(|| bad("unknown shuffle mode"))?;
            if parts[2] != "b32" {
                return Err(bad("shuffle moves .b32 values"));
            }
            let dst = cur.reg()?;
            cur.comma()?;
            let src = cur.reg()?;
            cur.comma()?;
            let lane = cur.operand()?;
            Instruction::Shfl { mode, dst, src, lane }
        }
        "bar" => {
            suffixes(0)?;
            let id = if cur.at_end() { 0 } else { cur.imm()? };
            Instruction::Bar { id }
        }
        "fence" => {
            suffixes(2)?;
            let order = order(parts[1]).ok_or_else(|| bad("unknown memory order"))?;
            let scope = scope(parts[2]).ok_or_else(|| bad("unknown scope"))?;
            Instruction::Fence { scope, order }
        }
        "async" => {
            suffixes(1)?;
            match parts[1] {
                "copy" => {
                    let dst = cur.reg()?;
                    cur.comma()?;
                    let src = cur.reg()?;
                    cur.comma()?;
                    let bytes = cur.imm()?;
                    Instruction::AsyncCopy { dst, src, bytes }
                }
                "wait" => Instruction::WaitAsync {
                    max_outstanding: cur.imm()?,
                },
                _ => return Err(bad("unknown async operation")),
            }
        }
        "sreg" => {
            suffixes(0)?;
            let dst = cur.reg()?;
            cur.comma()?;
            let (name, ncol) = cur.word()?;
            let which = special(&name).ok_or((ncol, format!("unknown special register '{}'", name)))?;
            Instruction::ReadSpecial { dst, which }
        }
        "if" => {
            suffixes(0)?;
            Instruction::If { cond: cur.reg()? }
        }
        "break" => {
            suffixes(0)?;
            let cond = if cur.at_end() { None } else { Some(cur.reg()?) };
            Instruction::Break { cond }
        }
        "call" => {
            suffixes(0)?;
            let (target, tcol) = cur.word()?;
            if !is_identifier(&target) {
                return Err((tcol, format!("invalid function name '{}'", target)));
            }
            Instruction::Call { target }
        }
        "mma" => {
            suffixes(2)?;
            let t = tile(parts[1]).ok_or_else(|| bad("malformed tile shape"))?;
            if parts[2] != "f32" {
                return Err(bad("matrix tiles accumulate in .f32"));
            }
            let dst = cur.reg()?;
            cur.comma()?;
            let a = cur.reg()?;
            cur.comma()?;
            let b = cur.reg()?;
            cur.comma()?;
            let c = cur.reg()?;
            Instruction::Mma { tile: t, dst, a, b, c }
        }
        "else" | "endif" | "loop" | "endloop" | "ret" | "halt" => {
            suffixes(0)?;
            match parts[0] {
                "else" => Instruction::Else,
                "endif" => Instruction::EndIf,
                "loop" => Instruction::Loop,
                "endloop" => Instruction::EndLoop,
                "ret" => Instruction::Ret,
                _ => Instruction::Halt,
            }
        }
        _ => return Err((col, format!("unknown mnemonic '{}'", mnemonic))),
    };
    Ok(instr)
}

/// The dotted mnemonic of an instruction, e.g. `add.f32` or `shfl.down.b32`.
pub fn mnemonic(instr: &Instruction) -> String {
    match instr {
        Instruction::Arith { op, ty, .. } => format!("{}.{}", op.name(), ty.suffix()),
        Instruction::Cvt { from, to, .. } => format!("cvt.{}.{}", to.suffix(), from.suffix()),
        Instruction::Cmp { rel, ty, .. } => format!("cmp.{}.{}", rel.name(), ty.suffix()),
        Instruction::Ld { space, width, .. } => format!("ld.{}.b{}", space.name(), width.bits()),
        Instruction::St { space, width, .. } => format!("st.{}.b{}", space.name(), width.bits()),
        Instruction::Atomic { op, space, ty, .. } => {
            format!("atom.{}.{}.{}", space.name(), op.name(), ty.suffix())
        }
        Instruction::Shfl { mode, .. } => format!("shfl.{}.b32", mode.name()),
        Instruction::Bar { .. } => "bar".into(),
        Instruction::Fence { scope, order } => format!("fence.{}.{}", order.name(), scope.name()),
        Instruction::AsyncCopy { .. } => "async.copy".into(),
        Instruction::WaitAsync { .. } => "async.wait".into(),
        Instruction::ReadSpecial { .. } => "sreg".into(),
        Instruction::If { .. } => "if".into(),
        Instruction::Else => "else".into(),
        Instruction::EndIf => "endif".into(),
        Instruction::Loop => "loop".into(),
        Instruction::Break { .. } => "break".into(),
        Instruction::EndLoop => "endloop".into(),
        Instruction::Call { .. } => "call".into(),
        Instruction::Ret => "ret".into(),
        Instruction::Mma { tile, .. } => format!("mma.m{}n{}k{}.f32", tile.m, tile.n, tile.k),
        Instruction::Halt => "halt".into(),
    }
}

fn fmt_reg(r: RegRef) -> String {
    match r.part {
        RegPart::Full => format!("r{}", r.index),
        RegPart::Low => format!("r{}.l", r.index),
        RegPart::High => format!("r{}.h", r.index),
    }
}

fn fmt_imm(v: u32) -> String {
    let signed = v as i32;
    if (-65536..=65536).contains(&signed) {
        signed.to_string()
    } else {
        format!("0x{:08x}", v)
    }
}

fn fmt_operand(o: &Operand) -> String {
    match o {
        Operand::Reg(r) => fmt_reg(*r),
        Operand::Imm(v) => fmt_imm(*v),
    }
}

fn fmt_addr(a: &Address) -> String {
    match (a.base, a.offset) {
        (None, off) => format!("[{}]", off),
        (Some(b), 0) => format!("[{}]", fmt_reg(b)),
        (Some(b), off) if off < 0 => format!("[{}{}]", fmt_reg(b), off),
        (Some(b), off) => format!("[{}+{}]", fmt_reg(b), off),
    }
}

/// Operand text of an instruction (everything after the mnemonic).
pub fn operands(instr: &Instruction) -> String {
    let list = |items: Vec<String>| items.join(", ");
    match instr {
        Instruction::Arith { dst, srcs, .. } => {
            let mut items = vec![fmt_reg(*dst)];
            items.extend(srcs.iter().map(fmt_operand));
            list(items)
        }
        Instruction::Cvt { dst, src, .. } => list(vec![fmt_reg(*dst), fmt_operand(src)]),
        Instruction::Cmp { dst, a, b, .. } => list(vec![fmt_reg(*dst), fmt_operand(a), fmt_operand(b)]),
        Instruction::Ld { dst, addr, .. } => list(vec![fmt_reg(*dst), fmt_addr(addr)]),
        Instruction::St { src, addr, .. } => list(vec![fmt_addr(addr), fmt_reg(*src)]),
        Instruction::Atomic {
            dst,
            addr,
            value,
            compare,
            ..
        } => {
            let mut items = vec![fmt_reg(*dst), fmt_addr(addr), fmt_operand(value)];
            items.extend(compare.iter().map(fmt_operand));
            list(items)
        }
        Instruction::Shfl { dst, src, lane, .. } => list(vec![fmt_reg(*dst), fmt_reg(*src), fmt_operand(lane)]),
        Instruction::Bar { id } => id.to_string(),
        Instruction::AsyncCopy { dst, src, bytes } => list(vec![fmt_reg(*dst), fmt_reg(*src), bytes.to_string()]),
        Instruction::WaitAsync { max_outstanding } => max_outstanding.to_string(),
        Instruction::ReadSpecial { dst, which } => format!("{}, %{}", fmt_reg(*dst), which.name()),
        Instruction::If { cond } => fmt_reg(*cond),
        Instruction::Break { cond } => cond.map(fmt_reg).unwrap_or_default(),
        Instruction::Call { target } => target.clone(),
        Instruction::Mma { dst, a, b, c, .. } => list(vec![fmt_reg(*dst), fmt_reg(*a), fmt_reg(*b), fmt_reg(*c)]),
        Instruction::Fence { .. }
        | Instruction::Else
        | Instruction::EndIf
        | Instruction::Loop
        | Instruction::EndLoop
        | Instruction::Ret
        | Instruction::Halt => String::new(),
    }
}

/// One instruction in canonical form, without indentation.
pub fn format_instruction(instr: &Instruction) -> String {
    let ops = operands(instr);
    if ops.is_empty() {
        mnemonic(instr)
    } else {
        format!("{} {}", mnemonic(instr), ops)
    }
}

/// Canonical source text for `program`.
pub fn format_program(program: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, ".regs {}", program.regs_used);
    let _ = writeln!(out, ".scratch {}", program.scratch_used);
    for f in &program.functions {
        out.push('\n');
        let directive = if f.name == program.entry { ".kernel" } else { ".func" };
        let _ = writeln!(out, "{} {}", directive, f.name);
        let mut depth = 0usize;
        for instr in &f.body {
            let indent = match instr {
                Instruction::EndIf | Instruction::EndLoop => {
                    depth = depth.saturating_sub(1);
                    depth
                }
                Instruction::Else => depth.saturating_sub(1),
                _ => depth,
            };
            for _ in 0..indent {
                out.push_str("  ");
            }
            out.push_str(&format_instruction(instr));
            out.push('\n');
            if matches!(instr, Instruction::If { .. } | Instruction::Loop) {
                depth += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(src: &str) -> Instruction {
        let p = parse_program(&format!(".kernel main\n{}\nhalt\n", src)).unwrap();
        p.functions[0].body[0].clone()
    }

    fn first_error(src: &str) -> Diagnostic {
        parse_program(src).unwrap_err().remove(0)
    }

    #[test]
    fn arith_mapping() {
        assert_eq!(
            single("add.f32 r1, r2, r3"),
            Instruction::Arith {
                op: ArithOp::Add,
                ty: ScalarType::F32,
                dst: RegRef::full(1),
                srcs: vec![Operand::Reg(RegRef::full(2)), Operand::Reg(RegRef::full(3))],
            }
        );
    }

    #[test]
    fn shuffle_mapping() {
        assert_eq!(
            single("shfl.down.b32 r4, r4, 1"),
            Instruction::Shfl {
                mode: ShuffleMode::Down,
                dst: RegRef::full(4),
                src: RegRef::full(4),
                lane: Operand::Imm(1),
            }
        );
    }

    #[test]
    fn missing_comma_is_positioned() {
        let d = first_error(".kernel main\nadd.f32 r1 r2\nhalt\n");
        assert_eq!(d.line, 2);
        assert_eq!(d.column, 12);
        assert_eq!(d.message, "expected ','");
    }

    #[test]
    fn halt_only_program_formats_canonically() {
        let p = Program {
            functions: vec![Function {
                name: "main".into(),
                body: vec![Instruction::Halt],
            }],
            entry: "main".into(),
            regs_used: 1,
            scratch_used: 0,
        };
        let text = format_program(&p);
        assert!(text.ends_with(".kernel main\nhalt\n"), "{text}");
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn addresses_halves_and_immediates() {
        assert_eq!(
            single("ld.scratch.b16 r3.h, [r2-4]"),
            Instruction::Ld {
                space: Space::Scratch,
                width: Width::B16,
                dst: RegRef::high(3),
                addr: Address {
                    base: Some(RegRef::full(2)),
                    offset: -4
                },
            }
        );
        assert_eq!(
            single("st.device.b32 [0x10], r1"),
            Instruction::St {
                space: Space::Device,
                width: Width::B32,
                src: RegRef::full(1),
                addr: Address { base: None, offset: 16 },
            }
        );
        match single("add.i32 r0, r0, -1") {
            Instruction::Arith { srcs, .. } => assert_eq!(srcs[1], Operand::Imm(u32::MAX)),
            other => panic!("{other:?}"),
        }
        match single("mov.b32 r0, 0x3f800000") {
            Instruction::Arith { op, srcs, .. } => {
                assert_eq!(op, ArithOp::Or);
                assert_eq!(srcs, vec![Operand::Imm(0x3f80_0000), Operand::Imm(0)]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_form_round_trips() {
        let src = "\
.regs 32
.scratch 256

.kernel k
sreg r0, %lane_id
cvt.f32.i32 r1, r0
cmp.lt.u32 r2, r0, 16
if r2
  atom.scratch.cmpxch.u32 r3, [r0+4], r1, 7
else
  atom.device.add.i32 r3, [r0], 1
endif
loop
  break r2
  shfl.xor.b32 r4, r4, r0
  break
endloop
bar 0
fence.acqrel.device
async.copy r5, r6, 64
async.wait 0
mma.m8n8k8.f32 r8, r10, r12, r14
fma.f16 r7.l, r7.h, r7.l, 15360
call helper
halt

.func helper
neg.f64 r20, r22
ret
";
        let p = parse_program(src).unwrap();
        assert_eq!(format_program(&p), src);
        assert_eq!(parse_program(&format_program(&p)).unwrap(), p);
    }

    #[test]
    fn error_cases() {
        assert!(first_error(".kernel m\nfoo r1\nhalt\n")
            .message
            .contains("unknown mnemonic"));
        assert!(first_error(".kernel m\nadd.f32 x1, r2, r3\nhalt\n")
            .message
            .contains("bad register"));
        assert!(first_error(".bogus 3\n").message.contains("unknown directive"));
        assert!(first_error("halt\n").message.contains("outside of a function"));
        assert!(first_error(".func f\nret\n").message.contains("no .kernel"));
        assert!(first_error(".kernel m\nld.device.b32 r1, r2\nhalt\n")
            .message
            .contains("expected '['"));
        let d = first_error(".kernel m\nadd.u32 r1, r2, 99999999999\nhalt\n");
        assert_eq!((d.line, d.column), (2, 17));
    }

    #[test]
    fn regs_inferred_when_undeclared() {
        let p = parse_program(".kernel m\nadd.u32 r9, r1, r2\nhalt\n").unwrap();
        assert_eq!(p.regs_used, 10);
    }

    #[test]
    fn unreachable_code_warns() {
        let (p, diags) = parse_with_warnings(".kernel m\nhalt\nhalt\n");
        assert!(p.is_some());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
    }
}
