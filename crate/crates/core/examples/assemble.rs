//! Assemble a kernel, validate it for a machine and print it back in
//! canonical form. A broken line shows the diagnostic format.

use uvgpu::asm::{format_program, parse_program};
use uvgpu::isa::validate_program;
use uvgpu::machcfg::preset;

const SOURCE: &str = "
.regs 5
.kernel scale       ; out[i] = 3 * in[i]
  sreg r0, %tid_x
  sreg r1, %wgid_x
  sreg r2, %wgdim_x
  fma.u32 r0, r1, r2, r0
  shl.u32 r1, r0, 2
  ld.arg.b32 r2, [0]
  ld.arg.b32 r3, [4]
  add.u32 r2, r2, r1
  add.u32 r3, r3, r1
  ld.device.b32 r4, [r2]
  mul.u32 r4, r4, 3
  st.device.b32 [r3], r4
  halt
";

fn main() {
    let program = parse_program(SOURCE).expect("assembles");
    let machine = preset("amd-rdna").unwrap();
    match validate_program(&program, &machine) {
        Ok(()) => println!("valid on {}", machine.name),
        Err(diags) => diags.iter().for_each(|d| println!("{d}")),
    }
    print!("{}", format_program(&program));

    let broken = SOURCE.replace("mul.u32 r4, r4, 3", "mul.u32 r4, r4");
    if let Err(diags) = parse_program(&broken) {
        println!();
        for d in diags {
            println!("scale.uva:{d}");
        }
    }
}
