//! Reduction with a scratchpad tree versus a shuffle tail. The shuffle tail
//! drops log2(W) barrier rounds per workgroup on every wave width.

use uvgpu::kernels::{gen_inputs, oracle, run_kernel, KernelSpec, Variant};
use uvgpu::machcfg::{all_presets, MachineDescriptor};

fn main() {
    let mut machines = all_presets();
    machines.push(MachineDescriptor::custom("w8", 8).unwrap());
    for m in &machines {
        let mut row = Vec::new();
        for v in Variant::ALL {
            let spec = KernelSpec::reduction(v);
            let inputs = gen_inputs(&spec, 1);
            let run = run_kernel(&spec, m, &inputs, 1).unwrap();
            assert_eq!(run.output, Some(oracle(&inputs)));
            let s = &run.exec.stats;
            row.push((s.barrier_rounds / s.workgroups, s.shuffle_steps / s.workgroups));
        }
        println!(
            "{:<12} W={:<2} barriers/wg {} -> {}  shuffles/wg {}",
            m.name, m.wave_width, row[0].0, row[1].0, row[1].1
        );
    }
}
