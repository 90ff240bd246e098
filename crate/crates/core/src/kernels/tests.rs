use super::*;
use crate::machcfg::{all_presets, preset, MachineDescriptor};

fn nvidia() -> MachineDescriptor {
    preset("nvidia").unwrap()
}

#[test]
fn oracle_examples() {
    let n = 4;
    let eye: Vec<f32> = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect();
    let a: Vec<f32> = (0..n * n).map(|i| i as f32 * 0.25 - 1.0).collect();
    assert_eq!(oracle(&Inputs::Gemm { a: eye, b: a.clone() }), Output::F32(a));
    assert_eq!(
        oracle(&Inputs::ReductionI32((1..=100).collect())),
        Output::I32(vec![5050])
    );
    let Output::Bins(bins) = oracle(&Inputs::Histogram(vec![0; 4096])) else {
        panic!()
    };
    assert_eq!(bins[0], 4096);
    assert!(bins[1..].iter().all(|&b| b == 0));
}

#[test]
fn inputs_are_deterministic_and_in_range() {
    let spec = KernelSpec::reduction(Variant::Abstract).with_n(8);
    assert_eq!(gen_inputs(&spec, 1), gen_inputs(&spec, 1));
    assert_ne!(gen_inputs(&spec, 1), gen_inputs(&spec, 2));
    let Inputs::ReductionI32(v) = gen_inputs(&KernelSpec::reduction(Variant::Abstract), 42) else {
        panic!()
    };
    assert!(v.iter().all(|&x| (0..1 << 15).contains(&x)));
    let Inputs::Gemm { a, b } = gen_inputs(&KernelSpec::gemm(Variant::Abstract), 3) else {
        panic!()
    };
    assert!(a.iter().chain(&b).all(|x| (-1.0..1.0).contains(x)));
    let Inputs::ReductionF32(f) = gen_inputs(
        &KernelSpec::reduction(Variant::Abstract).with_elem(crate::isa::ScalarType::F32),
        3,
    ) else {
        panic!()
    };
    assert!(f.iter().all(|x| (0.0..1.0).contains(x)));
}

#[test]
fn scratch_footprints() {
    for m in all_presets() {
        let gemm = build_kernel(&KernelSpec::gemm(Variant::Abstract), &m).unwrap();
        assert_eq!(gemm.scratch_used, 8192);
        let hist = build_kernel(&KernelSpec::histogram(Variant::NativeStyle), &m).unwrap();
        assert_eq!(hist.scratch_used, 256u32.div_ceil(m.wave_width) * 256 * 4);
    }
}

#[test]
fn native_reduction_has_one_shuffle_in_its_tail() {
    let src = kernel_source(&KernelSpec::reduction(Variant::NativeStyle), &nvidia()).unwrap();
    assert_eq!(
        src.matches("shfl.down").count(),
        1,
        "a single shuffle inside the tail loop"
    );
    let src = kernel_source(&KernelSpec::reduction(Variant::Abstract), &nvidia()).unwrap();
    assert!(!src.contains("shfl"));
}

#[test]
fn reduction_counters_on_nvidia() {
    let a = run_benchmark(&KernelSpec::reduction(Variant::Abstract), &nvidia(), 1);
    let n = run_benchmark(&KernelSpec::reduction(Variant::NativeStyle), &nvidia(), 1);
    assert!(a.pass && n.pass, "{a:?} {n:?}");
    assert_eq!((a.barriers, a.shuffles), (8, 0));
    assert_eq!((n.barriers, n.shuffles), (3, 5));
}

#[test]
fn fp32_reduction_within_tolerance() {
    for v in Variant::ALL {
        let spec = KernelSpec::reduction(v).with_elem(crate::isa::ScalarType::F32);
        let r = run_benchmark(&spec, &nvidia(), 5);
        assert!(r.pass, "{r:?}");
        assert!(r.max_rel_err <= FP_TOLERANCE);
    }
}

#[test]
fn histogram_variants_agree() {
    let a = run_benchmark(&KernelSpec::histogram(Variant::Abstract), &nvidia(), 9);
    let n = run_benchmark(&KernelSpec::histogram(Variant::NativeStyle), &nvidia(), 9);
    assert!(a.pass && n.pass);
    assert_eq!(a.output_digest, n.output_digest);
}

#[test]
fn gemm_padding_removes_bank_conflicts() {
    let a = run_benchmark(&KernelSpec::gemm(Variant::Abstract), &nvidia(), 2);
    let n = run_benchmark(&KernelSpec::gemm(Variant::NativeStyle), &nvidia(), 2);
    assert!(a.pass && n.pass, "{a:?} {n:?}");
    assert_eq!(a.max_rel_err, 0.0);
    assert_eq!(n.bank_conflicts, 0);
    assert!(a.bank_conflicts > 0);
}

#[test]
fn specs_that_do_not_fit_are_rejected() {
    let mut tiny = MachineDescriptor::custom("tiny", 32).unwrap();
    tiny.scratchpad = 4096;
    assert!(matches!(
        build_kernel(&KernelSpec::gemm(Variant::Abstract), &tiny),
        Err(KernelError::DoesNotFit(_))
    ));
    assert!(matches!(
        build_kernel(&KernelSpec::gemm(Variant::Abstract).with_n(100), &nvidia()),
        Err(KernelError::InvalidSpec(_))
    ));
    assert!(matches!(
        build_kernel(
            &KernelSpec::reduction(Variant::Abstract).with_workgroup_size(96),
            &nvidia()
        ),
        Err(KernelError::InvalidSpec(_))
    ));
}
