//! Describe a machine in the text format, load it back and run the kernels
//! on it.

use uvgpu::kernels::{run_benchmark, KernelName, KernelSpec, Variant};
use uvgpu::machcfg::{load_descriptor, occupancy, MachineDescriptor};

fn main() {
    let mut m = MachineDescriptor::custom("tiny16", 16).unwrap();
    m.regfile = 64 * 1024;
    m.scratchpad = 32 * 1024;
    let text = m.to_mcfg();
    println!("{text}");

    let loaded = load_descriptor(&text).unwrap();
    assert_eq!(loaded, m);
    let o = occupancy(&loaded, 64, 0, 256).unwrap();
    println!("O at 64 regs: {} ({})", o.resident_waves, o.limiting);

    for k in KernelName::ALL {
        for v in Variant::ALL {
            let r = run_benchmark(&KernelSpec::new(k, v), &loaded, 7);
            println!(
                "{:<10} {:<12} pass={} err={}",
                k.name(),
                v.name(),
                r.pass,
                r.max_rel_err
            );
        }
    }
}
