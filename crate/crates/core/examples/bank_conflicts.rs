//! Column reads from a 32-wide scratch tile: a row pitch of 32 words puts
//! every lane in one bank, a pitch of 33 spreads them over all banks.

use uvgpu::kernels::{run_benchmark, KernelSpec, Variant};
use uvgpu::machcfg::preset;
use uvgpu::vm::{count_bank_conflicts, full_mask};

fn main() {
    let m = preset("nvidia").unwrap();
    for pitch in [32u32, 33] {
        let addrs: Vec<u32> = (0..32).map(|lane| lane * pitch * 4).collect();
        let extra = count_bank_conflicts(&addrs, full_mask(32), m.bank_count, m.bank_width);
        println!("pitch {pitch}: {extra} extra cycles per access");
    }

    for v in Variant::ALL {
        let r = run_benchmark(&KernelSpec::gemm(v), &m, 0);
        println!(
            "gemm {:<12} pass={} bank_conflicts={}",
            v.name(),
            r.pass,
            r.bank_conflicts
        );
    }
}
