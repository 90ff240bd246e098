//! 256-bin byte histogram: count into scratchpad bins, then merge into the
//! device histogram with atomics.
//!
//! The abstract variant shares one set of bins per workgroup. The
//! native-style variant gives every wave its own bins at
//! `wave_id * 1024`, and the merge sums the `ceil(wgdim / W)` copies.

use super::{KernelSpec, Variant, HISTOGRAM_BINS};

/// args: input, bins, n
pub fn source(spec: &KernelSpec, scratch: u32) -> String {
    let bins = HISTOGRAM_BINS;
    let bin_bytes = bins * 4;
    let body = match spec.variant {
        Variant::Abstract => format!(
            "\
  mov.u32 r4, r0
  mov.u32 r11, 0
  loop
    cmp.ge.u32 r9, r4, {bins}
    break r9
    shl.u32 r10, r4, 2
    st.scratch.b32 [r10], r11
    add.u32 r4, r4, r2
  endloop
  bar
  mov.u32 r6, 0
"
        ),
        Variant::NativeStyle => format!(
            "\
  sreg r6, %wave_id
  mul.u32 r6, r6, {bin_bytes}
  sreg r4, %lane_id
  sreg r12, %wave_width
  mov.u32 r11, 0
  loop
    cmp.ge.u32 r9, r4, {bins}
    break r9
    shl.u32 r10, r4, 2
    add.u32 r10, r10, r6
    st.scratch.b32 [r10], r11
    add.u32 r4, r4, r12
  endloop
"
        ),
    };
    let merge_sum = match spec.variant {
        Variant::Abstract => "    ld.scratch.b32 r11, [r10]\n".to_string(),
        Variant::NativeStyle => format!(
            "\
    add.u32 r13, r2, r12
    sub.u32 r13, r13, 1
    div.u32 r13, r13, r12
    mov.u32 r11, 0
    mov.u32 r7, r10
    loop
      cmp.eq.u32 r9, r13, 0
      break r9
      ld.scratch.b32 r9, [r7]
      add.u32 r11, r11, r9
      add.u32 r7, r7, {bin_bytes}
      sub.u32 r13, r13, 1
    endloop
"
        ),
    };
    format!(
        "\
.regs 14
.scratch {scratch}
.kernel histogram_{variant}
  sreg r0, %tid_x
  sreg r1, %wgid_x
  sreg r2, %wgdim_x
  sreg r3, %griddim_x
{body}  mul.u32 r4, r1, r2
  add.u32 r4, r4, r0
  mul.u32 r5, r3, r2
  ld.arg.b32 r7, [8]
  ld.arg.b32 r8, [0]
  mov.u32 r11, 1
  loop
    cmp.ge.u32 r9, r4, r7
    break r9
    add.u32 r10, r4, r8
    ld.device.b8 r10, [r10]
    shl.u32 r10, r10, 2
    add.u32 r10, r10, r6
    atom.scratch.add.u32 r9, [r10], r11
    add.u32 r4, r4, r5
  endloop
  bar
  ld.arg.b32 r8, [4]
  mov.u32 r4, r0
  loop
    cmp.ge.u32 r9, r4, {bins}
    break r9
    shl.u32 r10, r4, 2
{merge_sum}    add.u32 r10, r10, r8
    atom.device.add.u32 r9, [r10], r11
    add.u32 r4, r4, r2
  endloop
  halt
",
        variant = spec.variant.name(),
    )
}
