//! Message passing between two workgroups under many schedules, with and
//! without release/acquire fences.

use uvgpu::litmus::{message_passing_source, run_litmus};
use uvgpu::machcfg::preset;

fn main() {
    let m = preset("nvidia").unwrap();
    println!("{}", message_passing_source(false));
    for fenced in [false, true] {
        let s = run_litmus(&m, 200, fenced).unwrap();
        println!(
            "fenced={fenced}: {} of {} seeds racy, as expected: {}",
            s.racy_seeds,
            s.seeds,
            s.as_expected()
        );
        if let Some(r) = s.first_race {
            println!("  {r}");
        }
    }
}
