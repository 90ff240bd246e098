//! Resident waves per core on every preset for a few register footprints.
//!
//! ```text
//! cargo run --example occupancy
//! ```

use uvgpu::machcfg::{all_presets, occupancy};

fn main() {
    let footprints = [32, 64, 128, 255];
    print!("{:<12} {:>3}", "preset", "W");
    for r in footprints {
        print!(" {:>8}", format!("r={r}"));
    }
    println!();
    for m in all_presets() {
        print!("{:<12} {:>3}", m.name, m.wave_width);
        for r in footprints {
            let cell = match occupancy(&m, r, 0, 256) {
                Ok(o) => o.resident_waves.to_string(),
                Err(_) => "-".to_string(),
            };
            print!(" {cell:>8}");
        }
        println!();
    }

    // Scratchpad can be the tighter bound.
    let m = uvgpu::machcfg::preset("nvidia").unwrap();
    let o = occupancy(&m, 32, 48 * 1024, 256).unwrap();
    println!(
        "\nnvidia, 32 regs, 48 KiB scratch per 256-thread workgroup: O={} ({})",
        o.resident_waves, o.limiting
    );
}
