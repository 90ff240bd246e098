use super::*;
use crate::asm::parse_program;
use crate::machcfg::preset;

fn program(src: &str) -> Program {
    parse_program(src).unwrap_or_else(|d| panic!("{d:?}"))
}

fn nvidia() -> MachineDescriptor {
    preset("nvidia").unwrap()
}

#[test]
fn identity_kernel_writes_global_ids() {
    let p = program(include_str!("../../programs/ids.uva"));
    let mut mem = DeviceMemory::new(1 << 16);
    let out = mem.alloc(64 * 4).unwrap();
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(2), Dim3::linear(32));
    let r = launch(&p, &cfg, mem).unwrap();
    assert!(r.completed(), "{:?}", r.outcome);
    assert_eq!(out, 0);
    assert_eq!(r.memory.read_u32s(out, 64), (0..64).collect::<Vec<_>>());
    assert_eq!(r.stats.workgroups, 2);
    assert_eq!(r.stats.instructions.halt, 2);
}

#[test]
fn partial_wave_masks_tail_lanes() {
    let p = program(include_str!("../../programs/ids.uva"));
    let mut mem = DeviceMemory::new(1 << 16);
    let out = mem.alloc(64 * 4).unwrap();
    mem.write_u32s(out, &[u32::MAX; 64]);
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(40));
    let r = launch(&p, &cfg, mem).unwrap();
    let words = r.memory.read_u32s(out, 64);
    assert_eq!(&words[..40], (0..40).collect::<Vec<_>>().as_slice());
    assert!(words[40..].iter().all(|&w| w == u32::MAX));
}

#[test]
fn divergent_barrier_traps() {
    let p = program(include_str!("../../programs/bar_div.uva"));
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(64));
    let r = launch(&p, &cfg, DeviceMemory::new(256)).unwrap();
    let trap = r.trap().expect("trap");
    assert_eq!(trap.kind, TrapKind::BarrierDivergence);
    assert_eq!(trap.kind.to_string(), "barrier under divergence");
}

#[test]
fn shuffle_tree_sums_a_wave() {
    let p = program(include_str!("../../programs/wave_sum.uva"));
    for m in crate::machcfg::all_presets() {
        let w = m.wave_width;
        let mut mem = DeviceMemory::new(1 << 12);
        let input = mem.alloc(w * 4).unwrap();
        let output = mem.alloc(4).unwrap();
        mem.write_u32s(input, &(1..=w).collect::<Vec<_>>());
        let cfg = LaunchConfig::new(m.clone(), Dim3::linear(1), Dim3::linear(w)).with_args(vec![input, output]);
        let r = launch(&p, &cfg, mem).unwrap();
        assert!(r.completed());
        assert_eq!(r.memory.read_u32s(output, 1)[0], w * (w + 1) / 2, "{}", m.name);
        assert_eq!(r.stats.shuffle_steps, u64::from(w.trailing_zeros()));
    }
}

#[test]
fn barrier_rounds_and_scratch_exchange() {
    // Each thread writes scratch[tid], then reads its neighbour's slot.
    let src = "
.regs 6
.scratch 256
.kernel k
  sreg r0, %tid_x
  shl.u32 r1, r0, 2
  st.scratch.b32 [r1], r0
  bar
  add.u32 r2, r0, 1
  and.u32 r2, r2, 63
  shl.u32 r2, r2, 2
  ld.scratch.b32 r3, [r2]
  ld.arg.b32 r4, [0]
  add.u32 r4, r4, r1
  st.device.b32 [r4], r3
  halt
";
    let p = program(src);
    let mut mem = DeviceMemory::new(4096);
    let out = mem.alloc(256).unwrap();
    let mut cfg = LaunchConfig::new(nvidia(), Dim3::linear(3), Dim3::linear(64)).with_args(vec![out]);
    cfg.check_races = true;
    for seed in 0..5 {
        cfg.seed = seed;
        let r = launch(&p, &cfg, mem.clone()).unwrap();
        assert!(r.completed());
        let expect: Vec<u32> = (0..64).map(|t| (t + 1) % 64).collect();
        assert_eq!(r.memory.read_u32s(out, 64), expect);
        assert_eq!(r.stats.barrier_rounds, 3);
        // Each workgroup writes the same output words: those races are real.
        assert!(r.races.iter().all(|x| x.space == crate::isa::Space::Device));
    }
}

#[test]
fn missing_barrier_is_a_scratch_race() {
    let src = "
.regs 4
.scratch 256
.kernel k
  sreg r0, %tid_x
  shl.u32 r1, r0, 2
  st.scratch.b32 [r1], r0
  xor.u32 r1, r1, 128
  ld.scratch.b32 r2, [r1]
  halt
";
    let mut cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(64));
    cfg.check_races = true;
    let r = launch(&program(src), &cfg, DeviceMemory::new(64)).unwrap();
    assert!(!r.races.is_empty());
    assert!(r.races.iter().all(|x| x.kind
        == RaceKind::Unordered {
            fix: crate::isa::Scope::Workgroup
        }));
}

#[test]
fn message_passing_needs_fences() {
    for (fenced, expect_race) in [(true, false), (false, true)] {
        let p = crate::litmus::message_passing(fenced);
        for seed in 0..8 {
            let mut mem = DeviceMemory::new(1024);
            let data = mem.alloc(4).unwrap();
            let flag = mem.alloc(4).unwrap();
            let out = mem.alloc(4).unwrap();
            let mut cfg =
                LaunchConfig::new(nvidia(), Dim3::linear(2), Dim3::linear(1)).with_args(vec![data, flag, out]);
            cfg.interleave_workgroups = true;
            cfg.check_races = true;
            cfg.seed = seed;
            let r = launch(&p, &cfg, mem).unwrap();
            assert!(r.completed());
            assert_eq!(r.memory.read_u32s(out, 1)[0], 42);
            assert_eq!(!r.races.is_empty(), expect_race, "seed {seed}: {:?}", r.races);
        }
    }
}

#[test]
fn same_seed_same_trace() {
    let p = program(include_str!("../../programs/ids.uva"));
    let mut mem = DeviceMemory::new(1 << 16);
    let out = mem.alloc(1024 * 4).unwrap();
    assert_eq!(out, 0);
    let mut cfg = LaunchConfig::new(nvidia(), Dim3::linear(8), Dim3::linear(128));
    cfg.interleave_workgroups = true;
    cfg.trace = true;
    cfg.seed = 11;
    let a = launch(&p, &cfg, mem.clone()).unwrap();
    let b = launch(&p, &cfg, mem.clone()).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.stats, b.stats);
    cfg.seed = 12;
    let c = launch(&p, &cfg, mem).unwrap();
    assert_ne!(a.stats.trace_hash, c.stats.trace_hash);
    assert_eq!(a.memory, c.memory);
    assert!(a.stats.peak_resident_waves > 4);
}

#[test]
fn traps_report_location() {
    let src = ".regs 2\n.kernel k\n  mov.u32 r0, 3\n  ld.device.b32 r1, [r0]\n  halt\n";
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(1));
    let r = launch(&program(src), &cfg, DeviceMemory::new(64)).unwrap();
    let t = r.trap().unwrap();
    assert_eq!((t.kind, t.pc), (TrapKind::Misaligned, 1));

    let src = ".regs 2\n.kernel k\n  mov.u32 r0, 64\n  ld.device.b32 r1, [r0]\n  halt\n";
    let r = launch(&program(src), &cfg, DeviceMemory::new(64)).unwrap();
    assert_eq!(r.trap().unwrap().kind, TrapKind::OutOfBounds);

    let src = ".regs 2\n.kernel k\n  div.u32 r0, r1, r1\n  halt\n";
    let r = launch(&program(src), &cfg, DeviceMemory::new(64)).unwrap();
    assert_eq!(r.trap().unwrap().kind, TrapKind::DivisionByZero);

    let src = ".regs 2\n.kernel k\n  mov.u32 r0, 40\n  shfl.idx.b32 r1, r1, r0\n  halt\n";
    let r = launch(&program(src), &cfg, DeviceMemory::new(64)).unwrap();
    assert_eq!(r.trap().unwrap().kind, TrapKind::ShuffleOperand);

    let src = ".regs 1\n.kernel k\n  loop\n  endloop\n  halt\n";
    let mut cfg = cfg.clone();
    cfg.max_steps = 1000;
    let r = launch(&program(src), &cfg, DeviceMemory::new(64)).unwrap();
    assert_eq!(r.trap().unwrap().kind, TrapKind::StepLimit);
}

#[test]
fn recursion_overflows_call_stack() {
    let src = ".regs 1\n.kernel k\n  call f\n  halt\n.func f\n  call f\n  ret\n";
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(1));
    let r = launch(&program(src), &cfg, DeviceMemory::new(64)).unwrap();
    assert_eq!(r.trap().unwrap().kind, TrapKind::CallStackOverflow);
}

#[test]
fn deep_nesting_overflows_divergence_stack() {
    let mut src = String::from(".regs 1\n.kernel k\n");
    for _ in 0..=MAX_DIVERGENCE_DEPTH {
        src.push_str("loop\n");
    }
    for _ in 0..=MAX_DIVERGENCE_DEPTH {
        src.push_str("break\nendloop\n");
    }
    src.push_str("halt\n");
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(1));
    let r = launch(&program(&src), &cfg, DeviceMemory::new(64)).unwrap();
    assert_eq!(r.trap().unwrap().kind, TrapKind::DivergenceStackOverflow);
}

#[test]
fn async_copy_lands_at_wait() {
    let src = "
.regs 4
.scratch 64
.kernel k
  sreg r0, %lane_id
  shl.u32 r0, r0, 2
  ld.arg.b32 r1, [0]
  add.u32 r1, r1, r0
  async.copy r0, r1, 4
  async.wait 0
  ld.scratch.b32 r2, [r0]
  ld.arg.b32 r1, [4]
  add.u32 r1, r1, r0
  st.device.b32 [r1], r2
  halt
";
    let mut mem = DeviceMemory::new(1024);
    let input = mem.alloc(64).unwrap();
    let output = mem.alloc(64).unwrap();
    mem.write_u32s(input, &(100..116).collect::<Vec<_>>());
    let mut cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(16)).with_args(vec![input, output]);
    cfg.check_races = true;
    let r = launch(&program(src), &cfg, mem.clone()).unwrap();
    assert!(r.completed(), "{:?}", r.outcome);
    assert_eq!(r.memory.read_u32s(output, 16), (100..116).collect::<Vec<_>>());
    assert!(r.races.is_empty(), "{:?}", r.races);

    let early = src.replace(
        "  async.wait 0\n  ld.scratch.b32 r2, [r0]\n",
        "  ld.scratch.b32 r2, [r0]\n  async.wait 0\n",
    );
    let r = launch(&program(&early), &cfg, mem).unwrap();
    assert!(r.races.iter().any(|x| x.kind == RaceKind::PendingAsyncCopy));
}

#[test]
fn half_registers_and_fp64_pairs() {
    let src = "
.regs 8
.kernel k
  mov.u32 r0.l, 0x1234
  mov.u32 r0.h, 0xabcd
  add.i32 r1, r0.h, 0
  cvt.f64.i32 r2, r1
  add.f64 r4, r2, r2
  cvt.i32.f64 r6, r4
  ld.arg.b32 r7, [0]
  st.device.b32 [r7], r0
  st.device.b32 [r7+4], r1
  st.device.b32 [r7+8], r6
  halt
";
    let mut mem = DeviceMemory::new(256);
    let out = mem.alloc(12).unwrap();
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(1)).with_args(vec![out]);
    let r = launch(&program(src), &cfg, mem).unwrap();
    assert!(r.completed(), "{:?}", r.outcome);
    let w = r.memory.read_u32s(out, 3);
    assert_eq!(w[0], 0xabcd_1234);
    let high = 0xabcdu16 as i16 as i32;
    assert_eq!(w[1] as i32, high);
    assert_eq!(w[2] as i32, high * 2);
}

#[test]
fn mma_matches_reference_product() {
    let src = "
.regs 12
.kernel k
  sreg r0, %lane_id
  shl.u32 r1, r0, 2
  ld.arg.b32 r2, [0]
  add.u32 r2, r2, r1
  ld.device.b32 r3, [r2]
  ld.device.b32 r4, [r2+128]
  ld.device.b32 r5, [r2+256]
  ld.device.b32 r6, [r2+384]
  ld.device.b32 r7, [r2+512]
  ld.device.b32 r8, [r2+640]
  mma.m8n8k8.f32 r9, r3, r5, r7
  ld.arg.b32 r2, [4]
  add.u32 r2, r2, r1
  st.device.b32 [r2], r9
  st.device.b32 [r2+128], r10
  halt
";
    let a: Vec<f32> = (0..64).map(|i| (i % 7) as f32 - 3.0).collect();
    let b: Vec<f32> = (0..64).map(|i| (i % 5) as f32 * 0.5).collect();
    let c: Vec<f32> = (0..64).map(|i| i as f32).collect();
    let mut mem = DeviceMemory::new(4096);
    let input = mem.alloc(768).unwrap();
    let output = mem.alloc(256).unwrap();
    mem.write_f32s(input, &a);
    mem.write_f32s(input + 256, &b);
    mem.write_f32s(input + 512, &c);
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(32)).with_args(vec![input, output]);
    let r = launch(&program(src), &cfg, mem).unwrap();
    assert!(r.completed(), "{:?}", r.outcome);
    let d = r.memory.read_f32s(output, 64);
    for i in 0..8 {
        for j in 0..8 {
            let want: f32 = c[i * 8 + j] + (0..8).map(|k| a[i * 8 + k] * b[k * 8 + j]).sum::<f32>();
            assert_eq!(d[i * 8 + j], want, "({i},{j})");
        }
    }
}

#[test]
fn launch_rejects_invalid_programs_and_shapes() {
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(2048));
    let p = program(include_str!("../../programs/ids.uva"));
    assert!(matches!(
        launch(&p, &cfg, DeviceMemory::new(64)),
        Err(LaunchError::Config(_))
    ));
    let bad = program(".regs 300\n.kernel k\n  halt\n");
    let cfg = LaunchConfig::new(nvidia(), Dim3::linear(1), Dim3::linear(1));
    assert!(matches!(
        launch(&bad, &cfg, DeviceMemory::new(64)),
        Err(LaunchError::Invalid(_))
    ));
}
