//! The `uvgpu` command line.
//!
//! Exit codes: 0 success, 1 usage, parse or validation error (or a failed
//! check), 2 simulator trap.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::asm::{format_program, parse_with_warnings};
use crate::isa::{validate_program, Program};
use crate::kernels::{check_identities, run_suite, KernelName, CSV_HEADER};
use crate::litmus::run_litmus;
use crate::machcfg::{all_presets, load_descriptor, occupancy, preset, MachineDescriptor, PRESET_NAMES};
use crate::vm::{launch, DeviceMemory, Dim3, LaunchConfig, Outcome, DEFAULT_DEVICE_BYTES, TRACE_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_TRAP: i32 = 2;

/// Environment variable naming the default machine.
pub const MACHINE_ENV: &str = "UVGPU_MACHINE";

#[derive(Debug, Parser)]
#[command(
    name = "uvgpu",
    version,
    about = "Universal GPU ISA assembler, simulator and benchmark harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble and run a kernel.
    Run(RunArgs),
    /// Assemble and validate a kernel against a machine.
    Validate(ValidateArgs),
    /// Resident waves for a register and scratchpad footprint.
    Occupancy(OccupancyArgs),
    /// Run the benchmark kernels against their oracles.
    Bench(BenchArgs),
    /// Run the message-passing litmus test under many schedules.
    Litmus(LitmusArgs),
    /// Print a source file in canonical form.
    Fmt(FmtArgs),
}

#[derive(Debug, Args)]
pub struct MachineArg {
    /// Preset name or .mcfg file [default: $UVGPU_MACHINE, else nvidia]
    #[arg(long)]
    pub machine: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DumpFormat {
    Raw,
    Hex,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub source: PathBuf,
    #[command(flatten)]
    pub machine: MachineArg,
    /// Workgroup size, X or XxY or XxYxZ [default: one wave]
    #[arg(long)]
    pub wg: Option<Dim3>,
    /// Grid size in workgroups
    #[arg(long, default_value = "1")]
    pub grid: Dim3,
    /// Launch argument: a number, buf:BYTES (zeroed buffer) or file:PATH
    /// (buffer loaded from a file). Buffers pass their device address.
    #[arg(long = "arg")]
    pub args: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the per-step trace to this file
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write counters as JSON to this file, or - for stdout
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Write device memory up to its high-water mark to this file
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "raw")]
    pub dump_format: DumpFormat,
    /// Co-schedule as many workgroups as occupancy allows
    #[arg(long)]
    pub interleave: bool,
    /// Report data races
    #[arg(long)]
    pub check_races: bool,
    /// Device memory size in bytes
    #[arg(long, default_value_t = DEFAULT_DEVICE_BYTES)]
    pub memory: usize,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub source: PathBuf,
    #[command(flatten)]
    pub machine: MachineArg,
}

#[derive(Debug, Args)]
pub struct OccupancyArgs {
    #[command(flatten)]
    pub machine: MachineArg,
    /// Registers per thread
    #[arg(long, required_unless_present = "sweep")]
    pub regs: Option<u32>,
    /// Scratchpad bytes per workgroup
    #[arg(long, default_value_t = 0)]
    pub scratch: u32,
    /// Threads per workgroup
    #[arg(long, default_value_t = 256)]
    pub wg: u32,
    /// Sweep registers over a range, e.g. regs=32..255
    #[arg(long, conflicts_with = "regs")]
    pub sweep: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated presets or .mcfg files, or all
    #[arg(long, default_value = "all")]
    pub machines: String,
    /// Comma-separated kernels, or all
    #[arg(long, default_value = "all")]
    pub kernels: String,
    /// Number of input/scheduler seeds, starting at 0
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub out: ReportFormat,
}

#[derive(Debug, Args)]
pub struct LitmusArgs {
    #[command(flatten)]
    pub machine: MachineArg,
    #[arg(long, default_value_t = 1000)]
    pub seeds: u64,
    /// Order the accesses with release/acquire fences (default)
    #[arg(long, conflicts_with = "unfenced")]
    pub fenced: bool,
    /// Leave the accesses unordered
    #[arg(long)]
    pub unfenced: bool,
}

#[derive(Debug, Args)]
pub struct FmtArgs {
    pub source: PathBuf,
    /// Rewrite the file in place
    #[arg(long, short)]
    pub write: bool,
    /// Exit 1 if the file is not already formatted
    #[arg(long, conflicts_with = "write")]
    pub check: bool,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn fail<T>(message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        code: EXIT_ERROR,
        message: message.into(),
    })
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("{}", f.message);
            }
            f.code
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Run(a) => cmd_run(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Occupancy(a) => cmd_occupancy(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Litmus(a) => cmd_litmus(&a),
        Command::Fmt(a) => cmd_fmt(&a),
    }
}

/// Resolves a preset name or a path to a `.mcfg` file.
pub fn resolve_machine(spec: &str) -> Result<MachineDescriptor, String> {
    if PRESET_NAMES.contains(&spec) {
        return preset(spec).map_err(|e| e.to_string());
    }
    let path = Path::new(spec);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| format!("{spec}: {e}"))?;
        return load_descriptor(&text).map_err(|e| format!("{spec}: {e}"));
    }
    Err(format!(
        "unknown machine '{spec}': not a preset ({}) or a readable .mcfg file",
        PRESET_NAMES.join(", ")
    ))
}

fn machine_of(arg: &MachineArg) -> Result<MachineDescriptor, Failure> {
    let spec = arg
        .machine
        .clone()
        .or_else(|| std::env::var(MACHINE_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| "nvidia".to_string());
    resolve_machine(&spec).or_else(fail)
}

/// Reads, assembles and validates a source file, printing warnings and
/// diagnostics prefixed with the file name.
fn load_program(path: &Path, machine: &MachineDescriptor) -> Result<Program, Failure> {
    let text = fs::read_to_string(path).or_else(|e| fail(format!("{}: {e}", path.display())))?;
    let (program, diags) = parse_with_warnings(&text);
    for d in &diags {
        eprintln!("{}:{d}", path.display());
    }
    let Some(program) = program else {
        return fail("");
    };
    if let Err(diags) = validate_program(&program, machine) {
        for d in diags {
            eprintln!("{}: {d}", path.display());
        }
        return fail("");
    }
    Ok(program)
}

fn parse_number(s: &str) -> Option<u32> {
    if let Some(hex) = s.strip_prefix("0x") {
        u32::from_str_radix(hex, 16).ok()
    } else if let Some(neg) = s.strip_prefix('-') {
        neg.parse::<i32>().ok().map(|v| (-v) as u32)
    } else {
        s.parse().ok()
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if path.as_os_str() == "-" {
        std::io::stdout().write_all(bytes).or_else(|e| fail(e.to_string()))
    } else {
        fs::write(path, bytes).or_else(|e| fail(format!("{}: {e}", path.display())))
    }
}

fn hex_dump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (i, chunk) in bytes.chunks(16).enumerate() {
        out.push_str(&format!("{:08x}:", i * 16));
        for b in chunk {
            out.push_str(&format!(" {b:02x}"));
        }
        out.push('\n');
    }
    out
}

fn cmd_run(a: &RunArgs) -> Result<i32, Failure> {
    let machine = machine_of(&a.machine)?;
    let program = load_program(&a.source, &machine)?;
    let mut mem = DeviceMemory::new(a.memory);
    let mut words = Vec::new();
    for arg in &a.args {
        let word = if let Some(size) = arg.strip_prefix("buf:") {
            let size = parse_number(size).ok_or_else(|| Failure {
                code: EXIT_ERROR,
                message: format!("bad buffer size in --arg {arg}"),
            })?;
            mem.alloc(size).ok_or_else(|| Failure {
                code: EXIT_ERROR,
                message: format!("--arg {arg}: device memory exhausted"),
            })?
        } else if let Some(path) = arg.strip_prefix("file:") {
            let data = fs::read(path).or_else(|e| fail(format!("{path}: {e}")))?;
            let addr = mem.alloc(data.len() as u32).ok_or_else(|| Failure {
                code: EXIT_ERROR,
                message: format!("--arg {arg}: device memory exhausted"),
            })?;
            mem.write_bytes(addr, &data);
            addr
        } else {
            parse_number(arg).ok_or_else(|| Failure {
                code: EXIT_ERROR,
                message: format!("bad --arg '{arg}': expected a number, buf:BYTES or file:PATH"),
            })?
        };
        words.push(word);
    }
    let wg = a.wg.unwrap_or(Dim3::linear(machine.wave_width));
    let mut cfg = LaunchConfig::new(machine, a.grid, wg)
        .with_args(words)
        .with_seed(a.seed);
    cfg.interleave_workgroups = a.interleave;
    cfg.check_races = a.check_races;
    cfg.trace = a.trace.is_some();
    let result = launch(&program, &cfg, mem).or_else(|e| fail(e.to_string()))?;

    if let Some(path) = &a.trace {
        let mut text = String::from(TRACE_HEADER);
        text.push('\n');
        for r in &result.trace {
            text.push_str(&r.to_csv());
            text.push('\n');
        }
        write_output(path, text.as_bytes())?;
    }
    if let Some(path) = &a.stats {
        let mut json = result.stats.to_json();
        json.push('\n');
        write_output(path, json.as_bytes())?;
    }
    if let Some(path) = &a.dump {
        let image = &result.memory.as_bytes()[..result.memory.high_water() as usize];
        match a.dump_format {
            DumpFormat::Raw => write_output(path, image)?,
            DumpFormat::Hex => write_output(path, hex_dump(image).as_bytes())?,
        }
    }
    for race in &result.races {
        eprintln!("{race}");
    }
    match &result.outcome {
        Outcome::Completed => Ok(EXIT_OK),
        Outcome::Trapped(trap) => {
            eprintln!("{trap}");
            Ok(EXIT_TRAP)
        }
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<i32, Failure> {
    let machine = machine_of(&a.machine)?;
    let program = load_program(&a.source, &machine)?;
    let occ = occupancy(&machine, program.regs_used, program.scratch_used, machine.wave_width)
        .or_else(|e| fail(e.to_string()))?;
    println!(
        "{}: ok on {} ({} instructions, {} registers, {} scratch bytes, O={})",
        a.source.display(),
        machine.name,
        program.instruction_count(),
        program.regs_used,
        program.scratch_used,
        occ.resident_waves
    );
    Ok(EXIT_OK)
}

fn parse_sweep(s: &str) -> Result<(u32, u32), String> {
    let bad = || format!("bad sweep '{s}': expected regs=A..B");
    let range = s.strip_prefix("regs=").ok_or_else(bad)?;
    let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: u32 = lo.parse().map_err(|_| bad())?;
    let hi: u32 = hi.parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn cmd_occupancy(a: &OccupancyArgs) -> Result<i32, Failure> {
    let machine = machine_of(&a.machine)?;
    if let Some(sweep) = &a.sweep {
        let (lo, hi) = parse_sweep(sweep).or_else(fail)?;
        println!("regs,resident_waves,limiting");
        for regs in lo..=hi {
            let occ = occupancy(&machine, regs, a.scratch, a.wg).or_else(|e| fail(e.to_string()))?;
            println!("{regs},{},{}", occ.resident_waves, occ.limiting);
        }
        return Ok(EXIT_OK);
    }
    let regs = a.regs.expect("clap enforces --regs or --sweep");
    let occ = occupancy(&machine, regs, a.scratch, a.wg).or_else(|e| fail(e.to_string()))?;
    println!("O={} ({})", occ.resident_waves, occ.limiting);
    let scratch = occ.scratch_bound.map_or_else(|| "-".to_string(), |s| s.to_string());
    println!(
        "machine {}: W={} R={} F={} bytes; register bound {}, scratchpad bound {}",
        machine.name, machine.wave_width, machine.max_regs, machine.regfile, occ.register_bound, scratch
    );
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs) -> Result<i32, Failure> {
    if a.seeds == 0 {
        return fail("seeds must be ≥ 1");
    }
    let machines = if a.machines == "all" {
        all_presets()
    } else {
        a.machines
            .split(',')
            .map(|m| resolve_machine(m.trim()))
            .collect::<Result<Vec<_>, _>>()
            .or_else(fail)?
    };
    let kernels = if a.kernels == "all" {
        KernelName::ALL.to_vec()
    } else {
        a.kernels
            .split(',')
            .map(|k| k.trim().parse())
            .collect::<Result<Vec<KernelName>, _>>()
            .or_else(fail)?
    };
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let reports = run_suite(&kernels, &machines, &seeds);
    let identities = check_identities(&reports);

    match a.out {
        ReportFormat::Csv => {
            println!("{CSV_HEADER}");
            for r in &reports {
                println!("{}", r.to_csv());
            }
        }
        ReportFormat::Json => {
            let doc = serde_json::json!({ "rows": reports, "identities": identities });
            println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
        }
    }

    let failed = reports.iter().filter(|r| !r.pass).count();
    let broken = identities.iter().filter(|c| !c.holds).count();
    eprintln!("-- aggregate --");
    for r in reports.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "FAIL {} {} {} seed {}: {}",
            r.kernel,
            r.variant,
            r.preset,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    for c in &identities {
        let verdict = if c.holds { "ok  " } else { "FAIL" };
        eprintln!("{verdict} {} {} seed {}: {}", c.kernel, c.preset, c.seed, c.detail);
    }
    eprintln!(
        "{} rows, {} failed; {} identities, {} broken",
        reports.len(),
        failed,
        identities.len(),
        broken
    );
    let trapped = reports
        .iter()
        .any(|r| r.error.as_deref().is_some_and(|e| e.starts_with("trap")));
    Ok(if trapped {
        EXIT_TRAP
    } else if failed > 0 || broken > 0 {
        EXIT_ERROR
    } else {
        EXIT_OK
    })
}

fn cmd_litmus(a: &LitmusArgs) -> Result<i32, Failure> {
    if a.seeds == 0 {
        return fail("seeds must be ≥ 1");
    }
    let machine = machine_of(&a.machine)?;
    let fenced = !a.unfenced;
    let summary = run_litmus(&machine, a.seeds, fenced).or_else(|e| fail(e.to_string()))?;
    let form = if fenced { "fenced" } else { "unfenced" };
    if let Some(trap) = &summary.first_trap {
        eprintln!("{trap}");
        return Ok(EXIT_TRAP);
    }
    if summary.racy_seeds == 0 {
        println!(
            "{form} message passing on {}: 0 races in {} seeds",
            machine.name, summary.seeds
        );
    } else {
        println!(
            "{form} message passing on {}: races detected in {} of {} seeds ({} reports)",
            machine.name, summary.racy_seeds, summary.seeds, summary.total_races
        );
        if let Some(r) = &summary.first_race {
            println!("first: {r}");
        }
    }
    Ok(if summary.as_expected() { EXIT_OK } else { EXIT_ERROR })
}

fn cmd_fmt(a: &FmtArgs) -> Result<i32, Failure> {
    let text = fs::read_to_string(&a.source).or_else(|e| fail(format!("{}: {e}", a.source.display())))?;
    let (program, diags) = parse_with_warnings(&text);
    for d in &diags {
        eprintln!("{}:{d}", a.source.display());
    }
    let Some(program) = program else {
        return fail("");
    };
    let formatted = format_program(&program);
    if a.check {
        if formatted != text {
            eprintln!("{}: not formatted", a.source.display());
            return Ok(EXIT_ERROR);
        }
        return Ok(EXIT_OK);
    }
    if a.write {
        fs::write(&a.source, &formatted).or_else(|e| fail(format!("{}: {e}", a.source.display())))?;
    } else {
        print!("{formatted}");
    }
    Ok(EXIT_OK)
}
