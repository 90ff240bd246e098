//! Benchmark kernels written against the universal ISA, their input
//! generators and independent host-side oracles.
//!
//! Every kernel comes in two variants. `abstract` uses only scratchpad and
//! barriers. `native_style` applies the tricks vendor-tuned code relies on,
//! expressed with portable primitives: padded scratch tiles (gemm), a shuffle
//! tail (reduction) and per-wave privatized bins (histogram). Kernels query
//! the wave width at run time, so one program runs on any machine.

mod bench;
mod gemm;
mod histogram;
mod reduction;

use std::fmt;
use std::str::FromStr;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::asm::parse_program;
use crate::isa::{validate_program, Program, ScalarType};
use crate::machcfg::MachineDescriptor;
use crate::vm::{launch, DeviceMemory, Dim3, ExecResult, LaunchConfig, LaunchError};

pub use bench::{check_identities, run_benchmark, run_suite, BenchReport, IdentityCheck, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Gemm,
    Reduction,
    Histogram,
}

impl KernelName {
    pub const ALL: [KernelName; 3] = [KernelName::Gemm, KernelName::Reduction, KernelName::Histogram];

    pub fn name(self) -> &'static str {
        match self {
            KernelName::Gemm => "gemm",
            KernelName::Reduction => "reduction",
            KernelName::Histogram => "histogram",
        }
    }
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        KernelName::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kernel '{s}' (expected gemm, reduction or histogram)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Abstract,
    NativeStyle,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Abstract, Variant::NativeStyle];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Abstract => "abstract",
            Variant::NativeStyle => "native_style",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A kernel instance. `n` is the matrix order for gemm and the element count
/// otherwise; `tile` only applies to gemm and `elem` only to reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelSpec {
    pub kernel: KernelName,
    pub variant: Variant,
    pub n: u32,
    pub tile: u32,
    pub workgroup_size: u32,
    pub grid: u32,
    pub elem: ScalarType,
}

pub const HISTOGRAM_BINS: u32 = 256;

impl KernelSpec {
    /// 128x128 FP32 product with 32x32 tiles.
    pub fn gemm(variant: Variant) -> Self {
        KernelSpec {
            kernel: KernelName::Gemm,
            variant,
            n: 128,
            tile: 32,
            workgroup_size: 32 * 32,
            grid: 16,
            elem: ScalarType::F32,
        }
    }

    /// Sum of 2^16 I32 values, 64 workgroups of 256 threads.
    pub fn reduction(variant: Variant) -> Self {
        KernelSpec {
            kernel: KernelName::Reduction,
            variant,
            n: 1 << 16,
            tile: 0,
            workgroup_size: 256,
            grid: 64,
            elem: ScalarType::I32,
        }
    }

    /// 256-bin histogram of 2^16 bytes, 16 workgroups of 256 threads.
    pub fn histogram(variant: Variant) -> Self {
        KernelSpec {
            kernel: KernelName::Histogram,
            variant,
            n: 1 << 16,
            tile: 0,
            workgroup_size: 256,
            grid: 16,
            elem: ScalarType::U32,
        }
    }

    pub fn new(kernel: KernelName, variant: Variant) -> Self {
        match kernel {
            KernelName::Gemm => KernelSpec::gemm(variant),
            KernelName::Reduction => KernelSpec::reduction(variant),
            KernelName::Histogram => KernelSpec::histogram(variant),
        }
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        if self.kernel == KernelName::Gemm {
            self.grid = (n / self.tile.max(1)).pow(2);
        }
        self
    }

    pub fn with_elem(mut self, elem: ScalarType) -> Self {
        self.elem = elem;
        self
    }

    pub fn with_workgroup_size(mut self, wg: u32) -> Self {
        self.workgroup_size = wg;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn grid_dims(&self) -> Dim3 {
        match self.kernel {
            KernelName::Gemm => {
                let blocks = self.n / self.tile;
                Dim3::new(blocks, blocks, 1)
            }
            _ => Dim3::linear(self.grid),
        }
    }

    pub fn workgroup_dims(&self) -> Dim3 {
        match self.kernel {
            KernelName::Gemm => Dim3::new(self.tile, self.tile, 1),
            _ => Dim3::linear(self.workgroup_size),
        }
    }

    /// Scratchpad bytes per workgroup the kernel declares on `m`.
    pub fn scratch_bytes(&self, m: &MachineDescriptor) -> u32 {
        match self.kernel {
            KernelName::Gemm => 2 * self.tile * gemm::pitch(self.tile, self.variant) * 4,
            KernelName::Reduction => self.workgroup_size * 4,
            KernelName::Histogram => {
                let copies = match self.variant {
                    Variant::Abstract => 1,
                    Variant::NativeStyle => self.workgroup_size.div_ceil(m.wave_width),
                };
                copies * HISTOGRAM_BINS * 4
            }
        }
    }

    fn check(&self, m: &MachineDescriptor) -> Result<(), KernelError> {
        let bad = |msg: String| Err(KernelError::InvalidSpec(msg));
        match self.kernel {
            KernelName::Gemm => {
                if self.tile == 0 || self.n == 0 || !self.n.is_multiple_of(self.tile) {
                    return bad(format!("tile {} must divide N={}", self.tile, self.n));
                }
                if self.elem != ScalarType::F32 {
                    return bad("gemm is FP32 only".into());
                }
            }
            KernelName::Reduction => {
                if !self.workgroup_size.is_power_of_two() {
                    return bad(format!(
                        "reduction workgroup size {} must be a power of two",
                        self.workgroup_size
                    ));
                }
                if !matches!(self.elem, ScalarType::I32 | ScalarType::F32) {
                    return bad("reduction supports i32 and f32".into());
                }
            }
            KernelName::Histogram => {}
        }
        if self.grid == 0 || self.workgroup_size == 0 {
            return bad("grid and workgroup size must be positive".into());
        }
        let threads = self.workgroup_dims().count();
        if threads > u64::from(m.max_workgroup) {
            return Err(KernelError::DoesNotFit(format!(
                "{threads} threads per workgroup exceed {} on {}",
                m.max_workgroup, m.name
            )));
        }
        let scratch = self.scratch_bytes(m);
        if scratch > m.scratchpad {
            return Err(KernelError::DoesNotFit(format!(
                "{scratch} scratch bytes exceed S={} on {}",
                m.scratchpad, m.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    InvalidSpec(String),
    DoesNotFit(String),
    Assemble(String),
    Launch(LaunchError),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::InvalidSpec(m) => write!(f, "invalid kernel spec: {m}"),
            KernelError::DoesNotFit(m) => write!(f, "kernel does not fit: {m}"),
            KernelError::Assemble(m) => write!(f, "kernel failed to assemble: {m}"),
            KernelError::Launch(e) => write!(f, "launch refused: {e}"),
        }
    }
}

impl std::error::Error for KernelError {}

/// Assembly source of the kernel as it would be built for `m`.
pub fn kernel_source(spec: &KernelSpec, m: &MachineDescriptor) -> Result<String, KernelError> {
    spec.check(m)?;
    let scratch = spec.scratch_bytes(m);
    Ok(match spec.kernel {
        KernelName::Gemm => gemm::source(spec, scratch),
        KernelName::Reduction => reduction::source(spec, scratch),
        KernelName::Histogram => histogram::source(spec, scratch),
    })
}

pub fn build_kernel(spec: &KernelSpec, m: &MachineDescriptor) -> Result<Program, KernelError> {
    let src = kernel_source(spec, m)?;
    let program = parse_program(&src)
        .map_err(|diags| KernelError::Assemble(diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))?;
    validate_program(&program, m)
        .map_err(|diags| KernelError::Assemble(diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))?;
    Ok(program)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Gemm { a: Vec<f32>, b: Vec<f32> },
    ReductionI32(Vec<i32>),
    ReductionF32(Vec<f32>),
    Histogram(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    F32(Vec<f32>),
    I32(Vec<i32>),
    Bins(Vec<u32>),
}

impl Output {
    pub fn len(&self) -> usize {
        match self {
            Output::F32(v) => v.len(),
            Output::I32(v) => v.len(),
            Output::Bins(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Little-endian bytes of the output values.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Output::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Output::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Output::Bins(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

/// Largest relative error of `got` against `want`; `None` when the shapes or
/// kinds differ. Integer outputs must match exactly, so any difference is
/// reported as infinite error.
pub fn max_rel_err(got: &Output, want: &Output) -> Option<f64> {
    match (got, want) {
        (Output::F32(g), Output::F32(w)) if g.len() == w.len() => Some(
            g.iter()
                .zip(w)
                .map(|(&g, &w)| {
                    let (g, w) = (f64::from(g), f64::from(w));
                    if g == w {
                        0.0
                    } else if w == 0.0 {
                        f64::INFINITY
                    } else {
                        ((g - w) / w).abs()
                    }
                })
                .fold(0.0, f64::max),
        ),
        (Output::I32(g), Output::I32(w)) if g.len() == w.len() => Some(if g == w { 0.0 } else { f64::INFINITY }),
        (Output::Bins(g), Output::Bins(w)) if g.len() == w.len() => Some(if g == w { 0.0 } else { f64::INFINITY }),
        _ => None,
    }
}

pub const FP_TOLERANCE: f64 = 1e-4;

/// Deterministic inputs for `spec` from a SplitMix64 stream seeded with
/// `seed`. Reduction integers stay below 2^15 so 2^16 of them cannot
/// overflow an I32 sum.
pub fn gen_inputs(spec: &KernelSpec, seed: u64) -> Inputs {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let n = spec.n as usize;
    let unit = |rng: &mut SplitMix64| (rng.next_u64() >> 40) as f32 / (1u32 << 24) as f32;
    match spec.kernel {
        KernelName::Gemm => {
            let mut signed = || unit(&mut rng) * 2.0 - 1.0;
            let a = (0..n * n).map(|_| signed()).collect();
            let b = (0..n * n).map(|_| signed()).collect();
            Inputs::Gemm { a, b }
        }
        KernelName::Reduction if spec.elem == ScalarType::F32 => {
            Inputs::ReductionF32((0..n).map(|_| unit(&mut rng)).collect())
        }
        KernelName::Reduction => Inputs::ReductionI32((0..n).map(|_| (rng.next_u64() >> 49) as i32).collect()),
        KernelName::Histogram => Inputs::Histogram((0..n).map(|_| (rng.next_u64() >> 56) as u8).collect()),
    }
}

/// Brute-force host reference.
///
/// gemm accumulates `a[i][k] * b[k][j]` with fused multiply-adds in
/// ascending `k`; reduction sums exactly (I32) or in f64 (F32); histogram
/// counts bytes one by one.
pub fn oracle(inputs: &Inputs) -> Output {
    match inputs {
        Inputs::Gemm { a, b } => {
            let n = (a.len() as f64).sqrt() as usize;
            let mut c = vec![0f32; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0f32;
                    for k in 0..n {
                        acc = a[i * n + k].mul_add(b[k * n + j], acc);
                    }
                    c[i * n + j] = acc;
                }
            }
            Output::F32(c)
        }
        Inputs::ReductionI32(v) => Output::I32(vec![v.iter().map(|&x| i64::from(x)).sum::<i64>() as i32]),
        Inputs::ReductionF32(v) => Output::F32(vec![v.iter().map(|&x| f64::from(x)).sum::<f64>() as f32]),
        Inputs::Histogram(bytes) => {
            let mut bins = vec![0u32; HISTOGRAM_BINS as usize];
            for &b in bytes {
                bins[b as usize] += 1;
            }
            Output::Bins(bins)
        }
    }
}

/// One kernel launch with its decoded output.
#[derive(Debug, Clone)]
pub struct KernelRun {
    pub output: Option<Output>,
    pub exec: ExecResult,
}

/// Places `inputs` in device memory, launches the kernel on `m` with
/// scheduler seed `seed` and reads the output back. `output` is `None` when
/// the launch trapped.
pub fn run_kernel(
    spec: &KernelSpec,
    m: &MachineDescriptor,
    inputs: &Inputs,
    seed: u64,
) -> Result<KernelRun, KernelError> {
    run_kernel_with(spec, m, inputs, seed, false)
}

/// [`run_kernel`] with workgroups optionally co-scheduled up to occupancy.
pub fn run_kernel_with(
    spec: &KernelSpec,
    m: &MachineDescriptor,
    inputs: &Inputs,
    seed: u64,
    interleave: bool,
) -> Result<KernelRun, KernelError> {
    let program = build_kernel(spec, m)?;
    let n = spec.n;
    let (bytes_in, bytes_out) = match spec.kernel {
        KernelName::Gemm => (2 * n * n * 4, n * n * 4),
        KernelName::Reduction => (n * 4, spec.grid * 4 + 4),
        KernelName::Histogram => (n, HISTOGRAM_BINS * 4),
    };
    let mut mem = DeviceMemory::new((bytes_in + bytes_out) as usize + 1024);
    let args = match inputs {
        Inputs::Gemm { a, b } => {
            let pa = mem.alloc(n * n * 4).expect("sized");
            let pb = mem.alloc(n * n * 4).expect("sized");
            let pc = mem.alloc(n * n * 4).expect("sized");
            mem.write_f32s(pa, a);
            mem.write_f32s(pb, b);
            vec![pa, pb, pc, n]
        }
        Inputs::ReductionI32(_) | Inputs::ReductionF32(_) => {
            let pin = mem.alloc(n * 4).expect("sized");
            let partials = mem.alloc(spec.grid * 4).expect("sized");
            let total = mem.alloc(4).expect("sized");
            match inputs {
                Inputs::ReductionI32(v) => mem.write_u32s(pin, &v.iter().map(|&x| x as u32).collect::<Vec<_>>()),
                Inputs::ReductionF32(v) => mem.write_f32s(pin, v),
                _ => unreachable!(),
            }
            vec![pin, partials, total, n]
        }
        Inputs::Histogram(bytes) => {
            let pin = mem.alloc(n).expect("sized");
            let out = mem.alloc(HISTOGRAM_BINS * 4).expect("sized");
            mem.write_bytes(pin, bytes);
            vec![pin, out, n]
        }
    };
    let mut cfg = LaunchConfig::new(m.clone(), spec.grid_dims(), spec.workgroup_dims())
        .with_args(args.clone())
        .with_seed(seed);
    cfg.interleave_workgroups = interleave;
    let exec = launch(&program, &cfg, mem).map_err(KernelError::Launch)?;
    let output = exec.completed().then(|| {
        let mem = &exec.memory;
        match spec.kernel {
            KernelName::Gemm => Output::F32(mem.read_f32s(args[2], (n * n) as usize)),
            KernelName::Reduction if spec.elem == ScalarType::F32 => {
                // No float atomics: partials are combined on the host in
                // workgroup order.
                let partials = mem.read_f32s(args[1], spec.grid as usize);
                Output::F32(vec![partials.iter().map(|&p| f64::from(p)).sum::<f64>() as f32])
            }
            KernelName::Reduction => Output::I32(vec![mem.read_u32s(args[2], 1)[0] as i32]),
            KernelName::Histogram => Output::Bins(mem.read_u32s(args[1], HISTOGRAM_BINS as usize)),
        }
    });
    Ok(KernelRun { output, exec })
}

#[cfg(test)]
mod tests;
