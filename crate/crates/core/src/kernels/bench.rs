use rayon::prelude::*;
use serde::Serialize;

use crate::machcfg::MachineDescriptor;
use crate::vm::{ExecStats, Fnv1a};

use super::{gen_inputs, max_rel_err, oracle, run_kernel, KernelName, KernelSpec, Variant, FP_TOLERANCE};

pub const CSV_HEADER: &str =
    "kernel,variant,preset,pass,max_rel_err,barriers,shuffles,bank_conflicts,atomics,instructions";

/// Outcome of one (kernel, variant, machine, seed) run. `barriers` and
/// `shuffles` are per workgroup; the other counters are launch totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub kernel: KernelName,
    pub variant: Variant,
    pub preset: String,
    pub wave_width: u32,
    pub seed: u64,
    pub pass: bool,
    pub max_rel_err: f64,
    pub barriers: u64,
    pub shuffles: u64,
    pub bank_conflicts: u64,
    pub atomics: u64,
    pub instructions: u64,
    /// FNV-1a of the output bytes, for comparing variants.
    pub output_digest: u64,
    pub error: Option<String>,
    pub stats: Option<ExecStats>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.kernel,
            self.variant,
            self.preset,
            self.pass,
            self.max_rel_err,
            self.barriers,
            self.shuffles,
            self.bank_conflicts,
            self.atomics,
            self.instructions
        )
    }

    fn failed(spec: &KernelSpec, m: &MachineDescriptor, seed: u64, error: String) -> Self {
        BenchReport {
            kernel: spec.kernel,
            variant: spec.variant,
            preset: m.name.clone(),
            wave_width: m.wave_width,
            seed,
            pass: false,
            max_rel_err: f64::INFINITY,
            barriers: 0,
            shuffles: 0,
            bank_conflicts: 0,
            atomics: 0,
            instructions: 0,
            output_digest: 0,
            error: Some(error),
            stats: None,
        }
    }
}

/// Generates inputs from `seed`, runs the kernel with the same scheduler
/// seed and checks it against the oracle. Integer outputs must match
/// exactly; FP32 within [`FP_TOLERANCE`] relative error.
pub fn run_benchmark(spec: &KernelSpec, m: &MachineDescriptor, seed: u64) -> BenchReport {
    let inputs = gen_inputs(spec, seed);
    let run = match run_kernel(spec, m, &inputs, seed) {
        Ok(run) => run,
        Err(e) => return BenchReport::failed(spec, m, seed, e.to_string()),
    };
    let stats = run.exec.stats.clone();
    let Some(output) = run.output else {
        let trap = run.exec.trap().map(ToString::to_string).unwrap_or_default();
        let mut r = BenchReport::failed(spec, m, seed, trap);
        r.stats = Some(stats);
        return r;
    };
    let err = max_rel_err(&output, &oracle(&inputs)).unwrap_or(f64::INFINITY);
    let mut digest = Fnv1a::default();
    digest.write(&output.to_bytes());
    let groups = stats.workgroups.max(1);
    BenchReport {
        kernel: spec.kernel,
        variant: spec.variant,
        preset: m.name.clone(),
        wave_width: m.wave_width,
        seed,
        pass: err <= FP_TOLERANCE,
        max_rel_err: err,
        barriers: stats.barrier_rounds / groups,
        shuffles: stats.shuffle_steps / groups,
        bank_conflicts: stats.bank_conflict_extra_cycles,
        atomics: stats.atomic_serializations,
        instructions: stats.instructions.total(),
        output_digest: digest.finish(),
        error: None,
        stats: Some(stats),
    }
}

/// Runs every (kernel, variant, machine, seed) combination in parallel.
/// Reports come back in that nesting order regardless of completion order.
pub fn run_suite(kernels: &[KernelName], machines: &[MachineDescriptor], seeds: &[u64]) -> Vec<BenchReport> {
    let mut jobs = Vec::new();
    for &k in kernels {
        for v in Variant::ALL {
            for m in machines {
                for &seed in seeds {
                    jobs.push((KernelSpec::new(k, v), m, seed));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|(spec, m, seed)| run_benchmark(spec, m, *seed))
        .collect()
}

/// One relation between the two variants of a kernel on one machine and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentityCheck {
    pub kernel: KernelName,
    pub preset: String,
    pub seed: u64,
    pub holds: bool,
    pub detail: String,
}

/// Pairs abstract and native-style reports and checks:
/// reduction saves `log2(W)` barriers per workgroup and runs `log2(W)`
/// shuffles; histogram variants produce identical bins; the padded gemm
/// sees fewer bank conflicts than the flat one.
pub fn check_identities(reports: &[BenchReport]) -> Vec<IdentityCheck> {
    let mut checks = Vec::new();
    for a in reports.iter().filter(|r| r.variant == Variant::Abstract) {
        let Some(n) = reports.iter().find(|r| {
            r.variant == Variant::NativeStyle && r.kernel == a.kernel && r.preset == a.preset && r.seed == a.seed
        }) else {
            continue;
        };
        let log_w = u64::from(a.wave_width.trailing_zeros());
        let (holds, detail) = match a.kernel {
            KernelName::Reduction => {
                let saved = a.barriers as i64 - n.barriers as i64;
                (
                    a.pass && n.pass && saved == log_w as i64 && n.shuffles == log_w,
                    format!(
                        "barriers {} - {} = {saved}, shuffles {}, log2(W) = {log_w}",
                        a.barriers, n.barriers, n.shuffles
                    ),
                )
            }
            KernelName::Histogram => (
                a.pass && n.pass && a.output_digest == n.output_digest,
                format!("digests {:016x} / {:016x}", a.output_digest, n.output_digest),
            ),
            KernelName::Gemm => (
                a.pass && n.pass && n.bank_conflicts < a.bank_conflicts,
                format!(
                    "bank conflicts {} (padded) < {} (flat)",
                    n.bank_conflicts, a.bank_conflicts
                ),
            ),
        };
        checks.push(IdentityCheck {
            kernel: a.kernel,
            preset: a.preset.clone(),
            seed: a.seed,
            holds,
            detail,
        });
    }
    checks
}
