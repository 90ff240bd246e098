use crate::isa::{AtomicOp, ScalarType};

/// Read-modify-write of one 32-bit word. Returns `(new, old)`.
///
/// `compare` is only consulted by `cmpxch`, which stores `value` when the
/// word equals `compare`.
pub fn eval_atomic(op: AtomicOp, ty: ScalarType, old: u32, value: u32, compare: u32) -> (u32, u32) {
    let signed = ty == ScalarType::I32;
    let new = match op {
        AtomicOp::Add => old.wrapping_add(value),
        AtomicOp::Sub => old.wrapping_sub(value),
        AtomicOp::Min if signed => (old as i32).min(value as i32) as u32,
        AtomicOp::Max if signed => (old as i32).max(value as i32) as u32,
        AtomicOp::Min => old.min(value),
        AtomicOp::Max => old.max(value),
        AtomicOp::And => old & value,
        AtomicOp::Or => old | value,
        AtomicOp::Xor => old ^ value,
        AtomicOp::Exch => value,
        AtomicOp::CmpXchg => {
            if old == compare {
                value
            } else {
                old
            }
        }
    };
    (new, old)
}

/// Extra serialization steps for one wave-wide atomic: every lane beyond the
/// first that targets an already-targeted address costs one.
pub fn serializations(addresses: &[u64]) -> u64 {
    let mut sorted = addresses.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    (addresses.len() - sorted.len()) as u64
}
