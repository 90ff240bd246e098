mod common;

use proptest::prelude::*;

use uvgpu::asm::{format_program, parse_program, parse_with_warnings};
use uvgpu::isa::validate_program;
use uvgpu::kernels::{kernel_source, KernelName, KernelSpec, Variant};
use uvgpu::machcfg::{all_presets, load_descriptor, occupancy, MachineDescriptor};
use uvgpu::vm::{count_bank_conflicts, eval_shuffle, launch, DeviceMemory, Dim3, LaunchConfig};

fn wave_width() -> impl Strategy<Value = u32> {
    prop::sample::select(vec![8u32, 16, 32, 64])
}

fn machine(w: u32, regfile: u32) -> MachineDescriptor {
    let mut m = MachineDescriptor::custom("prop", w).unwrap();
    m.regfile = regfile;
    m
}

proptest! {
    #[test]
    fn occupancy_is_non_increasing_in_registers(w in wave_width(), f in 1u32..1 << 22, r in 1u32..255) {
        let m = machine(w, f);
        let lo = occupancy(&m, r, 0, 256).unwrap().resident_waves;
        let hi = occupancy(&m, r + 1, 0, 256).unwrap().resident_waves;
        prop_assert!(hi <= lo);
    }

    #[test]
    fn occupancy_never_oversubscribes(w in wave_width(), f in 1u32..1 << 22, r in 1u32..=255) {
        let m = machine(w, f);
        let o = occupancy(&m, r, 0, 256).unwrap().resident_waves;
        prop_assert!(u64::from(o) * u64::from(r) * u64::from(w) * 4 <= u64::from(f));
    }

    #[test]
    fn descriptors_survive_the_text_format(
        w in wave_width(),
        regs in 1u32..=255,
        scratch in 0u32..1 << 20,
        barriers in 1u32..=32,
        fp64: bool,
        bf16: bool,
    ) {
        let mut m = MachineDescriptor::custom("prop", w).unwrap();
        m.max_regs = regs;
        m.scratchpad = scratch;
        m.named_barriers = barriers;
        m.has_fp64 = fp64;
        m.has_bf16 = bf16;
        prop_assert_eq!(load_descriptor(&m.to_mcfg()).unwrap(), m);
    }

    #[test]
    fn assembler_never_panics(src in "(\\PC|\n){0,200}") {
        let (program, diags) = parse_with_warnings(&src);
        prop_assert!(program.is_some() || !diags.is_empty());
        prop_assert!(diags.iter().all(|d| d.line >= 1 && d.column >= 1));
    }

    #[test]
    fn format_is_idempotent(p in common::program()) {
        let once = format_program(&p);
        let twice = format_program(&parse_program(&once).unwrap());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn validation_is_monotone_in_machine_parameters(
        w in wave_width(),
        kernel in prop::sample::select(KernelName::ALL.to_vec()),
        variant in prop::sample::select(Variant::ALL.to_vec()),
        extra_regs in 0u32..64,
        extra_scratch in 0u32..1 << 16,
        extra_barriers in 0u32..16,
    ) {
        let a = MachineDescriptor::custom("a", w).unwrap();
        let spec = KernelSpec::new(kernel, variant);
        let Ok(src) = kernel_source(&spec, &a) else { return Ok(()) };
        let program = parse_program(&src).unwrap();
        prop_assume!(validate_program(&program, &a).is_ok());
        let mut b = a.clone();
        b.max_regs = (a.max_regs + extra_regs).min(255);
        b.scratchpad = a.scratchpad + extra_scratch;
        b.named_barriers = a.named_barriers + extra_barriers;
        prop_assert!(validate_program(&program, &b).is_ok());
    }

    #[test]
    fn interleaved_launches_respect_occupancy(
        w in wave_width(),
        regs in 4u32..=255,
        threads in 1u32..=256,
        groups in 1u32..6,
        seed: u64,
    ) {
        let mut m = MachineDescriptor::custom("occ", w).unwrap();
        m.regfile = 64 * 1024;
        let src = format!(
            ".regs {regs}\n.kernel k\n  sreg r0, %tid_x\n  add.u32 r1, r0, 1\n  bar\n  add.u32 r1, r1, r0\n  halt\n"
        );
        let p = parse_program(&src).unwrap();
        let mut cfg = LaunchConfig::new(m.clone(), Dim3::linear(groups), Dim3::linear(threads)).with_seed(seed);
        cfg.interleave_workgroups = true;
        let o = occupancy(&m, regs, 0, threads).unwrap().resident_waves;
        match launch(&p, &cfg, DeviceMemory::new(64)) {
            Ok(r) => {
                prop_assert!(r.completed());
                prop_assert!(r.stats.peak_resident_waves <= o);
            }
            Err(_) => prop_assert!(o < threads.div_ceil(w)),
        }
    }

    #[test]
    fn xor_shuffle_is_an_involution(w in wave_width(), mask in 0u32..64, values in prop::collection::vec(any::<u32>(), 64)) {
        let w = w as usize;
        let vals = &values[..w];
        let ops = vec![mask % w as u32; w];
        let all = uvgpu::vm::full_mask(w as u32);
        let once = eval_shuffle(uvgpu::isa::ShuffleMode::Xor, vals, &ops, all).unwrap();
        let twice = eval_shuffle(uvgpu::isa::ShuffleMode::Xor, &once, &ops, all).unwrap();
        prop_assert_eq!(twice, vals.to_vec());
    }

    #[test]
    fn bank_conflicts_are_bounded_by_active_lanes(addrs in prop::collection::vec(0u32..1 << 16, 32), active: u32) {
        let active = u64::from(active);
        let extra = count_bank_conflicts(&addrs, active, 32, 4);
        prop_assert!(extra <= u64::from(active.count_ones().saturating_sub(1)));
    }

    #[test]
    fn divergent_programs_match_the_reference(seed in 10_000u64.., w in wave_width()) {
        common::check_mask_program(seed, w, w).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn presets_have_full_workgroups_and_round_trip() {
    for m in all_presets() {
        assert_eq!(m.max_workgroup, 1024);
        assert_eq!(load_descriptor(&m.to_mcfg()).unwrap(), m);
    }
}
