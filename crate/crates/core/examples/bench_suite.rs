//! The full benchmark matrix on every preset, as CSV, followed by the
//! variant identity checks.

use uvgpu::kernels::{check_identities, run_suite, KernelName, CSV_HEADER};
use uvgpu::machcfg::all_presets;

fn main() {
    let reports = run_suite(&KernelName::ALL, &all_presets(), &[0, 1]);
    println!("{CSV_HEADER}");
    for r in &reports {
        println!("{}", r.to_csv());
    }
    let checks = check_identities(&reports);
    let held = checks.iter().filter(|c| c.holds).count();
    println!("\n{held}/{} identity checks hold", checks.len());
    for c in checks.iter().filter(|c| !c.holds) {
        println!("broken: {} {} seed {}: {}", c.kernel, c.preset, c.seed, c.detail);
    }
}
