//! Scalar semantics of arithmetic, comparison and conversion.
//!
//! Values travel as raw bits in a `u64`: 32-bit types in the low word, 16-bit
//! floats in the low half-word, FP64 as a full `u64`.

use half::{bf16, f16};

use crate::isa::{ArithOp, CmpRel, ScalarType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivisionByZero;

fn float_in(ty: ScalarType, bits: u64) -> f64 {
    match ty {
        ScalarType::F16 => f16::from_bits(bits as u16).to_f64(),
        ScalarType::BF16 => bf16::from_bits(bits as u16).to_f64(),
        ScalarType::F32 => f64::from(f32::from_bits(bits as u32)),
        ScalarType::F64 => f64::from_bits(bits),
        ScalarType::I32 | ScalarType::U32 => unreachable!("integer type"),
    }
}

fn float_out(ty: ScalarType, v: f64) -> u64 {
    match ty {
        ScalarType::F16 => u64::from(f16::from_f64(v).to_bits()),
        ScalarType::BF16 => u64::from(bf16::from_f64(v).to_bits()),
        ScalarType::F32 => u64::from((v as f32).to_bits()),
        ScalarType::F64 => v.to_bits(),
        ScalarType::I32 | ScalarType::U32 => unreachable!("integer type"),
    }
}

fn int_op(op: ArithOp, signed: bool, a: u32, b: u32, c: u32) -> Result<u32, DivisionByZero> {
    Ok(match op {
        ArithOp::Add => a.wrapping_add(b),
        ArithOp::Sub => a.wrapping_sub(b),
        ArithOp::Mul => a.wrapping_mul(b),
        ArithOp::Div if b == 0 => return Err(DivisionByZero),
        ArithOp::Div if signed => (a as i32).wrapping_div(b as i32) as u32,
        ArithOp::Div => a / b,
        ArithOp::Min if signed => (a as i32).min(b as i32) as u32,
        ArithOp::Max if signed => (a as i32).max(b as i32) as u32,
        ArithOp::Min => a.min(b),
        ArithOp::Max => a.max(b),
        ArithOp::Fma => a.wrapping_mul(b).wrapping_add(c),
        ArithOp::And => a & b,
        ArithOp::Or => a | b,
        ArithOp::Xor => a ^ b,
        ArithOp::Shl => a << (b & 31),
        ArithOp::Shr if signed => ((a as i32) >> (b & 31)) as u32,
        ArithOp::Shr => a >> (b & 31),
        ArithOp::Not => !a,
        ArithOp::Neg => a.wrapping_neg(),
    })
}

fn f32_op(op: ArithOp, a: f32, b: f32, c: f32) -> f32 {
    match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => a / b,
        ArithOp::Min => a.min(b),
        ArithOp::Max => a.max(b),
        ArithOp::Fma => a.mul_add(b, c),
        ArithOp::Neg => -a,
        _ => unreachable!("bitwise op on float"),
    }
}

fn f64_op(op: ArithOp, a: f64, b: f64, c: f64) -> f64 {
    match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => a / b,
        ArithOp::Min => a.min(b),
        ArithOp::Max => a.max(b),
        ArithOp::Fma => a.mul_add(b, c),
        ArithOp::Neg => -a,
        _ => unreachable!("bitwise op on float"),
    }
}

/// Evaluates `op` on up to three operands of type `ty`. 16-bit floats are
/// computed in single precision and rounded once to the result type.
pub fn arith(op: ArithOp, ty: ScalarType, a: u64, b: u64, c: u64) -> Result<u64, DivisionByZero> {
    match ty {
        ScalarType::I32 | ScalarType::U32 => {
            int_op(op, ty == ScalarType::I32, a as u32, b as u32, c as u32).map(u64::from)
        }
        ScalarType::F32 => {
            let r = f32_op(
                op,
                f32::from_bits(a as u32),
                f32::from_bits(b as u32),
                f32::from_bits(c as u32),
            );
            Ok(u64::from(r.to_bits()))
        }
        ScalarType::F64 => Ok(f64_op(op, f64::from_bits(a), f64::from_bits(b), f64::from_bits(c)).to_bits()),
        ScalarType::F16 | ScalarType::BF16 => {
            let f = |x| float_in(ty, x) as f32;
            let r = f32_op(op, f(a), f(b), f(c));
            Ok(float_out(ty, f64::from(r)))
        }
    }
}

pub fn compare(rel: CmpRel, ty: ScalarType, a: u64, b: u64) -> bool {
    use std::cmp::Ordering;
    let ord = match ty {
        ScalarType::I32 => Some((a as u32 as i32).cmp(&(b as u32 as i32))),
        ScalarType::U32 => Some((a as u32).cmp(&(b as u32))),
        _ => float_in(ty, a).partial_cmp(&float_in(ty, b)),
    };
    match (rel, ord) {
        (CmpRel::Ne, None) => true,
        (_, None) => false,
        (CmpRel::Eq, Some(o)) => o == Ordering::Equal,
        (CmpRel::Ne, Some(o)) => o != Ordering::Equal,
        (CmpRel::Lt, Some(o)) => o == Ordering::Less,
        (CmpRel::Le, Some(o)) => o != Ordering::Greater,
        (CmpRel::Gt, Some(o)) => o == Ordering::Greater,
        (CmpRel::Ge, Some(o)) => o != Ordering::Less,
    }
}

/// Converts between types. Integer to integer reinterprets the bits; float to
/// integer truncates toward zero and saturates, with NaN becoming zero.
pub fn convert(from: ScalarType, to: ScalarType, v: u64) -> u64 {
    match (from.is_integer(), to.is_integer()) {
        (true, true) => v & 0xffff_ffff,
        (true, false) => {
            let x = if from == ScalarType::I32 {
                f64::from(v as u32 as i32)
            } else {
                f64::from(v as u32)
            };
            // Exact in f64, so only the final narrowing rounds.
            float_out(to, x)
        }
        (false, true) => {
            let x = float_in(from, v);
            if to == ScalarType::I32 {
                u64::from(x as i32 as u32)
            } else {
                u64::from(x as u32)
            }
        }
        (false, false) => float_out(to, float_in(from, v)),
    }
}
