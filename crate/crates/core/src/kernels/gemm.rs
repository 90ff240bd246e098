//! Tiled scratchpad GEMM, `C = A x B` for square row-major FP32 matrices.
//!
//! One workgroup of `T x T` threads computes one `T x T` tile of `C`. Thread
//! `(tid_x, tid_y)` owns row `tid_x` and column `tid_y` of the tile, so lanes
//! of a wave walk down a column of the A tile. With a row pitch of `T` words
//! those reads all land in one bank; padding the pitch to `T + 1` spreads
//! them over every bank.

use std::fmt::Write;

use super::{KernelSpec, Variant};

pub fn pitch(tile: u32, variant: Variant) -> u32 {
    match variant {
        Variant::Abstract => tile,
        Variant::NativeStyle => tile + 1,
    }
}

/// args: A, B, C, N
pub fn source(spec: &KernelSpec, scratch: u32) -> String {
    let t = spec.tile;
    let p = pitch(t, spec.variant);
    let b_tile = t * p * 4;
    let row_bytes = p * 4;
    let mut s = format!(
        "\
.regs 16
.scratch {scratch}
.kernel gemm_{variant}
  sreg r0, %tid_x
  sreg r1, %tid_y
  sreg r2, %wgid_x
  sreg r3, %wgid_y
  ld.arg.b32 r4, [12]
  mul.u32 r5, r2, {t}
  add.u32 r5, r5, r0
  mul.u32 r6, r3, {t}
  add.u32 r6, r6, r1
  mul.u32 r7, r0, {p}
  add.u32 r7, r7, r1
  shl.u32 r7, r7, 2
  mul.u32 r13, r0, {row_bytes}
  shl.u32 r14, r1, 2
  add.u32 r14, r14, {b_tile}
  mov.u32 r8, 0
  mov.u32 r9, 0
  loop
    cmp.ge.u32 r10, r9, r4
    break r10
    mul.u32 r10, r5, r4
    add.u32 r10, r10, r9
    add.u32 r10, r10, r1
    shl.u32 r10, r10, 2
    ld.arg.b32 r11, [0]
    add.u32 r10, r10, r11
    ld.device.b32 r12, [r10]
    st.scratch.b32 [r7], r12
    add.u32 r10, r9, r0
    mul.u32 r10, r10, r4
    add.u32 r10, r10, r6
    shl.u32 r10, r10, 2
    ld.arg.b32 r11, [4]
    add.u32 r10, r10, r11
    ld.device.b32 r12, [r10]
    st.scratch.b32 [r7+{b_tile}], r12
    bar
",
        variant = spec.variant.name(),
    );
    for k in 0..t {
        let _ = writeln!(s, "    ld.scratch.b32 r11, [r13+{}]", k * 4);
        let _ = writeln!(s, "    ld.scratch.b32 r12, [r14+{}]", k * row_bytes);
        let _ = writeln!(s, "    fma.f32 r8, r11, r12, r8");
    }
    s.push_str(&format!(
        "\
    bar
    add.u32 r9, r9, {t}
  endloop
  mul.u32 r10, r5, r4
  add.u32 r10, r10, r6
  shl.u32 r10, r10, 2
  ld.arg.b32 r11, [8]
  add.u32 r10, r10, r11
  st.device.b32 [r10], r8
  halt
"
    ));
    s
}
