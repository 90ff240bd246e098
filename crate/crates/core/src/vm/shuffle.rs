use crate::isa::ShuffleMode;

use super::LaneMask;

/// Source lane for `lane` under `mode` with operand `operand`, for a wave of
/// `width` lanes. Out-of-range `up`/`down` sources read the lane itself.
pub fn source_lane(mode: ShuffleMode, lane: u32, operand: u32, width: u32) -> u32 {
    match mode {
        ShuffleMode::Idx => operand,
        ShuffleMode::Up => lane.checked_sub(operand).unwrap_or(lane),
        ShuffleMode::Down => match lane.checked_add(operand) {
            Some(src) if src < width => src,
            _ => lane,
        },
        ShuffleMode::Xor => lane ^ operand,
    }
}

/// Applies one shuffle to the per-lane values `values`. Sources are read from
/// every lane whether active or not; inactive lanes keep their own value.
///
/// `operands` gives each lane's operand. Returns the offending lane when an
/// operand selects a lane outside the wave.
pub fn eval_shuffle(mode: ShuffleMode, values: &[u32], operands: &[u32], active: LaneMask) -> Result<Vec<u32>, u32> {
    let width = values.len() as u32;
    let mut out = values.to_vec();
    for lane in 0..width {
        if active >> lane & 1 == 0 {
            continue;
        }
        let operand = operands[lane as usize];
        if operand >= width {
            return Err(lane);
        }
        let src = source_lane(mode, lane, operand, width);
        out[lane as usize] = values[src as usize];
    }
    Ok(out)
}
