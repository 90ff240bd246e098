//! Structured control flow over lane masks.
//!
//! `if`/`else`/`endif` and `loop`/`break`/`endloop` are executed by the wave
//! as a whole; lanes that do not take a path are masked off and wait at the
//! matching closing marker. A divergence stack keeps the mask to restore.

use crate::isa::{Function, Instruction};

use super::{LaneMask, TrapKind};

/// Jump targets of one control marker, as absolute instruction indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Targets {
    /// `else` of an `if`, when present.
    pub else_pc: Option<usize>,
    /// `endif` of an `if`/`else`, `endloop` of a `loop`/`break`, `loop` of an `endloop`.
    pub end_pc: usize,
}

/// Matching markers for every control instruction of a flattened program.
#[derive(Debug, Clone, Default)]
pub struct ControlTable {
    targets: Vec<Targets>,
}

impl ControlTable {
    /// Builds the table for `code`, where `functions` gives each function's
    /// start offset and length. Assumes validated nesting.
    pub fn build(code: &[Instruction], functions: &[(usize, usize)]) -> Self {
        let mut targets = vec![Targets::default(); code.len()];
        for &(start, len) in functions {
            let mut ifs: Vec<usize> = Vec::new();
            let mut loops: Vec<(usize, Vec<usize>)> = Vec::new();
            for pc in start..start + len {
                match code[pc] {
                    Instruction::If { .. } => ifs.push(pc),
                    Instruction::Else => {
                        if let Some(&open) = ifs.last() {
                            targets[open].else_pc = Some(pc);
                        }
                    }
                    Instruction::EndIf => {
                        if let Some(open) = ifs.pop() {
                            targets[open].end_pc = pc;
                            if let Some(e) = targets[open].else_pc {
                                targets[e].end_pc = pc;
                            }
                        }
                    }
                    Instruction::Loop => loops.push((pc, Vec::new())),
                    Instruction::Break { .. } => {
                        if let Some((_, breaks)) = loops.last_mut() {
                            breaks.push(pc);
                        }
                    }
                    Instruction::EndLoop => {
                        if let Some((open, breaks)) = loops.pop() {
                            targets[open].end_pc = pc;
                            targets[pc].end_pc = open;
                            for b in breaks {
                                targets[b].end_pc = pc;
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        ControlTable { targets }
    }

    pub fn get(&self, pc: usize) -> Targets {
        self.targets[pc]
    }
}

/// One divergence stack entry. `marker_pc` is the opening `if`/`loop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceEntry {
    /// Executing the then-branch; `else_mask` lanes wait for the else-branch.
    If {
        saved: LaneMask,
        else_mask: LaneMask,
        marker_pc: usize,
    },
    Else {
        saved: LaneMask,
        marker_pc: usize,
    },
    Loop {
        saved: LaneMask,
        marker_pc: usize,
    },
}

impl DivergenceEntry {
    pub fn saved(&self) -> LaneMask {
        match *self {
            DivergenceEntry::If { saved, .. }
            | DivergenceEntry::Else { saved, .. }
            | DivergenceEntry::Loop { saved, .. } => saved,
        }
    }
}

/// The control-relevant part of a wave: program counter, active mask and
/// divergence stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlState {
    pub pc: usize,
    pub active_mask: LaneMask,
    pub stack: Vec<DivergenceEntry>,
    pub max_depth: usize,
}

impl ControlState {
    pub fn new(pc: usize, mask: LaneMask, max_depth: usize) -> Self {
        ControlState {
            pc,
            active_mask: mask,
            stack: Vec::new(),
            max_depth,
        }
    }

    fn push(&mut self, entry: DivergenceEntry) -> Result<(), TrapKind> {
        if self.stack.len() >= self.max_depth {
            return Err(TrapKind::DivergenceStackOverflow);
        }
        self.stack.push(entry);
        Ok(())
    }

    /// Closes the innermost `if` block, restoring its saved mask.
    fn close_if(&mut self, end_pc: usize) -> Result<(), TrapKind> {
        match self.stack.pop() {
            Some(entry @ (DivergenceEntry::If { .. } | DivergenceEntry::Else { .. })) => {
                let saved = entry.saved();
                if self.active_mask & !saved != 0 {
                    return Err(TrapKind::MaskRestoration);
                }
                self.active_mask = saved;
                self.pc = end_pc + 1;
                Ok(())
            }
            _ => Err(TrapKind::DivergenceStackUnderflow),
        }
    }

    /// Called when every lane has left the current path: moves to the next
    /// point where some waiting lanes resume.
    fn unwind_empty(&mut self, table: &ControlTable) -> Result<(), TrapKind> {
        loop {
            match self.stack.last().copied() {
                Some(DivergenceEntry::If {
                    saved,
                    else_mask,
                    marker_pc,
                }) => {
                    let t = table.get(marker_pc);
                    match t.else_pc {
                        Some(else_pc) if else_mask != 0 => {
                            *self.stack.last_mut().expect("non-empty") = DivergenceEntry::Else { saved, marker_pc };
                            self.active_mask = else_mask;
                            self.pc = else_pc + 1;
                            return Ok(());
                        }
                        _ => {
                            self.close_if(t.end_pc)?;
                            if self.active_mask != 0 {
                                return Ok(());
                            }
                        }
                    }
                }
                Some(DivergenceEntry::Else { marker_pc, .. }) => {
                    self.close_if(table.get(marker_pc).end_pc)?;
                    if self.active_mask != 0 {
                        return Ok(());
                    }
                }
                Some(DivergenceEntry::Loop { marker_pc, .. }) => {
                    // The endloop marker sees an empty mask and exits the loop.
                    self.pc = table.get(marker_pc).end_pc;
                    return Ok(());
                }
                None => return Err(TrapKind::DivergenceStackUnderflow),
            }
        }
    }
}

/// Executes one control marker at `state.pc`.
///
/// `cond_lanes` holds the lanes whose condition register is nonzero (for
/// `if` and conditional `break`); it is masked by the active mask here.
pub fn apply_control(
    state: &mut ControlState,
    instr: &Instruction,
    cond_lanes: LaneMask,
    table: &ControlTable,
) -> Result<(), TrapKind> {
    let pc = state.pc;
    let mask = state.active_mask;
    match instr {
        Instruction::If { .. } => {
            let taken = mask & cond_lanes;
            let not_taken = mask & !cond_lanes;
            state.push(DivergenceEntry::If {
                saved: mask,
                else_mask: not_taken,
                marker_pc: pc,
            })?;
            state.active_mask = taken;
            state.pc = pc + 1;
            if taken == 0 {
                state.unwind_empty(table)?;
            }
        }
        Instruction::Else => match state.stack.last().copied() {
            Some(DivergenceEntry::If {
                saved,
                else_mask,
                marker_pc,
            }) => {
                if else_mask == 0 {
                    state.close_if(table.get(pc).end_pc)?;
                } else {
                    *state.stack.last_mut().expect("non-empty") = DivergenceEntry::Else { saved, marker_pc };
                    state.active_mask = else_mask;
                    state.pc = pc + 1;
                }
            }
            _ => return Err(TrapKind::DivergenceStackUnderflow),
        },
        Instruction::EndIf => state.close_if(pc)?,
        Instruction::Loop => {
            state.push(DivergenceEntry::Loop {
                saved: mask,
                marker_pc: pc,
            })?;
            state.pc = pc + 1;
        }
        Instruction::Break { cond } => {
            let leaving = if cond.is_some() { mask & cond_lanes } else { mask };
            state.active_mask = mask & !leaving;
            // Lanes leaving the loop must not be revived by enclosing ifs.
            for entry in state.stack.iter_mut().rev() {
                match entry {
                    DivergenceEntry::If { saved, else_mask, .. } => {
                        *saved &= !leaving;
                        *else_mask &= !leaving;
                    }
                    DivergenceEntry::Else { saved, .. } => *saved &= !leaving,
                    DivergenceEntry::Loop { .. } => break,
                }
            }
            state.pc = pc + 1;
            if state.active_mask == 0 {
                state.unwind_empty(table)?;
            }
        }
        Instruction::EndLoop => match state.stack.last().copied() {
            Some(DivergenceEntry::Loop { saved, marker_pc }) => {
                if mask != 0 {
                    state.pc = marker_pc + 1;
                } else {
                    state.stack.pop();
                    state.active_mask = saved;
                    state.pc = pc + 1;
                }
            }
            _ => return Err(TrapKind::DivergenceStackUnderflow),
        },
        _ => unreachable!("apply_control called on a non-control instruction"),
    }
    Ok(())
}

/// Flattens `functions` into one instruction vector and returns each
/// function's `(start, len)`.
pub fn flatten(functions: &[Function]) -> (Vec<Instruction>, Vec<(usize, usize)>) {
    let mut code = Vec::new();
    let mut spans = Vec::new();
    for f in functions {
        spans.push((code.len(), f.body.len()));
        code.extend(f.body.iter().cloned());
    }
    (code, spans)
}
