//! Nested if/else and a loop with a per-lane trip count. The trace shows the
//! active mask shrinking and being restored at each reconvergence point.

use uvgpu::asm::parse_program;
use uvgpu::machcfg::MachineDescriptor;
use uvgpu::vm::{launch, DeviceMemory, Dim3, LaunchConfig};

const SOURCE: &str = "
.regs 7
.kernel diverge
  sreg r0, %lane_id
  mov.u32 r1, 0
  and.u32 r2, r0, 1
  if r2
    add.u32 r1, r1, 100
  else
    cmp.lt.u32 r3, r0, 4
    if r3
      add.u32 r1, r1, 10
    endif
  endif
  mov.u32 r4, 0
  loop
    cmp.ge.u32 r5, r4, r0
    break r5
    add.u32 r1, r1, 1
    add.u32 r4, r4, 1
  endloop
  shl.u32 r6, r0, 2
  st.device.b32 [r6], r1
  halt
";

fn main() {
    let machine = MachineDescriptor::custom("w8", 8).unwrap();
    let program = parse_program(SOURCE).unwrap();
    let mut cfg = LaunchConfig::new(machine, Dim3::linear(1), Dim3::linear(8));
    cfg.trace = true;
    let r = launch(&program, &cfg, DeviceMemory::new(256)).unwrap();
    for t in &r.trace {
        println!("{:>3} {:<10} {:08b}", t.pc, t.mnemonic, t.mask);
    }
    println!("per-lane result: {:?}", r.memory.read_u32s(0, 8));
}
