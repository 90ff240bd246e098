//! Every thread writes its global id; the memory image is the same on all
//! presets even though the wave widths differ.

use uvgpu::asm::parse_program;
use uvgpu::machcfg::all_presets;
use uvgpu::vm::{launch, DeviceMemory, Dim3, LaunchConfig};

fn main() {
    let program = parse_program(include_str!("../programs/ids.uva")).unwrap();
    for m in all_presets() {
        let cfg = LaunchConfig::new(m.clone(), Dim3::linear(4), Dim3::linear(96));
        let r = launch(&program, &cfg, DeviceMemory::new(4096)).unwrap();
        let ids = r.memory.read_u32s(0, 384);
        let ok = ids.iter().enumerate().all(|(i, &v)| v as usize == i);
        println!(
            "{:<12} W={:<2} waves={:<3} instructions={:<5} ids ok: {ok}",
            m.name,
            m.wave_width,
            r.stats.waves,
            r.stats.instructions.total()
        );
    }
}
