//! Workgroup tree reduction with a grid-stride prologue.
//!
//! Each thread sums its grid-stride elements, then the workgroup halves the
//! active range in scratchpad with a barrier per halving. The native-style
//! variant stops halving once `W` values remain and finishes inside wave 0
//! with `log2(W)` shuffle-down steps. Thread 0 stores the workgroup's partial
//! and, for I32, adds it to the grand total atomically.

use crate::isa::ScalarType;

use super::{KernelSpec, Variant};

/// args: input, partials, total, n
pub fn source(spec: &KernelSpec, scratch: u32) -> String {
    let ty = spec.elem.suffix();
    let (stop, tail) = match spec.variant {
        Variant::Abstract => ("    cmp.eq.u32 r11, r9, 0\n", String::new()),
        Variant::NativeStyle => (
            "    cmp.lt.u32 r11, r9, r12\n",
            format!(
                "\
  cmp.lt.u32 r11, r0, r12
  if r11
    loop
      shr.u32 r12, r12, 1
      cmp.eq.u32 r11, r12, 0
      break r11
      shfl.down.b32 r11, r6, r12
      add.{ty} r6, r6, r11
    endloop
  endif
"
            ),
        ),
    };
    let total = if spec.elem == ScalarType::I32 {
        "    ld.arg.b32 r4, [8]\n    atom.device.add.i32 r5, [r4], r6\n"
    } else {
        ""
    };
    format!(
        "\
.regs 13
.scratch {scratch}
.kernel reduction_{variant}
  sreg r0, %tid_x
  sreg r1, %wgid_x
  sreg r2, %wgdim_x
  sreg r3, %griddim_x
  sreg r12, %wave_width
  mul.u32 r4, r1, r2
  add.u32 r4, r4, r0
  mul.u32 r5, r3, r2
  ld.arg.b32 r7, [12]
  ld.arg.b32 r8, [0]
  mov.u32 r6, 0
  loop
    cmp.ge.u32 r9, r4, r7
    break r9
    shl.u32 r10, r4, 2
    add.u32 r10, r10, r8
    ld.device.b32 r11, [r10]
    add.{ty} r6, r6, r11
    add.u32 r4, r4, r5
  endloop
  shl.u32 r10, r0, 2
  st.scratch.b32 [r10], r6
  shr.u32 r9, r2, 1
  loop
{stop}    break r11
    bar
    cmp.lt.u32 r11, r0, r9
    if r11
      shl.u32 r4, r9, 2
      add.u32 r4, r4, r10
      ld.scratch.b32 r11, [r4]
      add.{ty} r6, r6, r11
      st.scratch.b32 [r10], r6
    endif
    shr.u32 r9, r9, 1
  endloop
{tail}  cmp.eq.u32 r11, r0, 0
  if r11
    ld.arg.b32 r4, [4]
    shl.u32 r5, r1, 2
    add.u32 r4, r4, r5
    st.device.b32 [r4], r6
{total}  endif
  halt
",
        variant = spec.variant.name(),
    )
}
