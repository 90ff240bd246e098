//! Machine descriptors: the queryable dialect parameters of one target.
//!
//! A [`MachineDescriptor`] fixes the wave width `W`, the per-thread register
//! budget `R`, the scratchpad size `S`, the register file size `F` and the
//! register width `w`, plus the optional capabilities (FP64, BF16, matrix
//! tiles, clusters). Six vendor presets are built in; custom machines are read
//! from flat `key=value` files (`.mcfg`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 6] = ["nvidia", "amd-rdna", "amd-cdna", "intel-xehpg", "intel-xehpc", "apple"];

/// Register width in bytes. Every machine uses 32-bit registers.
pub const REG_WIDTH: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MachError {
    UnknownPreset(String),
    Parse { line: usize, message: String },
    Invariant(String),
    RegisterBudget { used: u32, max: u32 },
    InvalidArgument(String),
}

impl fmt::Display for MachError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MachError::UnknownPreset(name) => write!(
                f,
                "unknown machine preset '{}' (valid presets: {})",
                name,
                PRESET_NAMES.join(", ")
            ),
            MachError::Parse { line, message } => write!(f, "line {}: {}", line, message),
            MachError::Invariant(msg) => f.write_str(msg),
            MachError::RegisterBudget { used, max } => write!(
                f,
                "kernel exceeds register budget: {} registers per thread requested, R={}",
                used, max
            ),
            MachError::InvalidArgument(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for MachError {}

/// An `M x N x K` matrix tile shape supported by the opaque MMA operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatrixTile {
    pub m: u32,
    pub n: u32,
    pub k: u32,
}

impl MatrixTile {
    pub const fn new(m: u32, n: u32, k: u32) -> Self {
        MatrixTile { m, n, k }
    }
}

impl fmt::Display for MatrixTile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.n, self.k)
    }
}

impl FromStr for MatrixTile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dims: Vec<&str> = s.trim().split('x').collect();
        if dims.len() != 3 {
            return Err(format!("matrix tile '{}' must have the form MxNxK", s.trim()));
        }
        let mut parsed = [0u32; 3];
        for (slot, text) in parsed.iter_mut().zip(&dims) {
            *slot = text
                .trim()
                .parse()
                .map_err(|_| format!("matrix tile dimension '{}' is not a number", text))?;
            if *slot == 0 {
                return Err("matrix tile dimensions must be positive".to_string());
            }
        }
        Ok(MatrixTile::new(parsed[0], parsed[1], parsed[2]))
    }
}

/// Queryable parameters of one target machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineDescriptor {
    pub name: String,
    /// `W`: threads per lockstep wave.
    pub wave_width: u32,
    /// `R`: maximum 32-bit registers per thread.
    pub max_regs: u32,
    /// `S`: scratchpad bytes per core.
    pub scratchpad: u32,
    /// `F`: register file bytes per core.
    pub regfile: u32,
    /// `w`: register width in bytes.
    pub reg_width: u32,
    pub max_workgroup: u32,
    pub named_barriers: u32,
    pub has_fp64: bool,
    pub has_bf16: bool,
    pub matrix_tiles: Vec<MatrixTile>,
    /// Queryable only; clusters are never executed.
    pub has_cluster: bool,
    pub bank_count: u32,
    pub bank_width: u32,
}

const REFERENCE_TILE: MatrixTile = MatrixTile::new(8, 8, 8);

/// Returns the built-in descriptor for `name`.
pub fn preset(name: &str) -> Result<MachineDescriptor, MachError> {
    let kib = 1024;
    let desc = match name {
        "nvidia" => MachineDescriptor {
            name: "nvidia".into(),
            wave_width: 32,
            max_regs: 255,
            scratchpad: 228 * kib,
            regfile: 256 * kib,
            reg_width: REG_WIDTH,
            max_workgroup: 1024,
            named_barriers: 16,
            has_fp64: true,
            has_bf16: true,
            matrix_tiles: vec![REFERENCE_TILE],
            has_cluster: true,
            bank_count: 32,
            bank_width: REG_WIDTH,
        },
        "amd-rdna" => MachineDescriptor {
            name: "amd-rdna".into(),
            wave_width: 32,
            max_regs: 256,
            scratchpad: 128 * kib,
            regfile: 256 * kib,
            reg_width: REG_WIDTH,
            max_workgroup: 1024,
            named_barriers: 1,
            has_fp64: true,
            has_bf16: true,
            matrix_tiles: vec![REFERENCE_TILE],
            has_cluster: false,
            bank_count: 32,
            bank_width: REG_WIDTH,
        },
        "amd-cdna" => MachineDescriptor {
            name: "amd-cdna".into(),
            wave_width: 64,
            max_regs: 256,
            scratchpad: 128 * kib,
            regfile: 512 * kib,
            reg_width: REG_WIDTH,
            max_workgroup: 1024,
            named_barriers: 32,
            has_fp64: true,
            has_bf16: true,
            matrix_tiles: vec![REFERENCE_TILE],
            has_cluster: false,
            bank_count: 64,
            bank_width: REG_WIDTH,
        },
        "intel-xehpg" => MachineDescriptor {
            name: "intel-xehpg".into(),
            wave_width: 16,
            max_regs: 128,
            scratchpad: 512 * kib,
            regfile: 512 * kib,
            reg_width: REG_WIDTH,
            max_workgroup: 1024,
            named_barriers: 1,
            has_fp64: false,
            has_bf16: true,
            matrix_tiles: vec![REFERENCE_TILE],
            has_cluster: false,
            bank_count: 16,
            bank_width: REG_WIDTH,
        },
        "intel-xehpc" => MachineDescriptor {
            name: "intel-xehpc".into(),
            wave_width: 16,
            max_regs: 256,
            scratchpad: 512 * kib,
            regfile: 512 * kib,
            reg_width: REG_WIDTH,
            max_workgroup: 1024,
            named_barriers: 1,
            has_fp64: true,
            has_bf16: true,
            matrix_tiles: vec![REFERENCE_TILE],
            has_cluster: false,
            bank_count: 16,
            bank_width: REG_WIDTH,
        },
        "apple" => MachineDescriptor {
            name: "apple".into(),
            wave_width: 32,
            max_regs: 128,
            scratchpad: 61440,
            regfile: 208 * kib,
            reg_width: REG_WIDTH,
            max_workgroup: 1024,
            named_barriers: 1,
            has_fp64: false,
            has_bf16: false,
            matrix_tiles: Vec::new(),
            has_cluster: false,
            bank_count: 32,
            bank_width: REG_WIDTH,
        },
        other => return Err(MachError::UnknownPreset(other.to_string())),
    };
    debug_assert!(desc.check().is_ok());
    Ok(desc)
}

/// All six presets in [`PRESET_NAMES`] order.
pub fn all_presets() -> Vec<MachineDescriptor> {
    PRESET_NAMES
        .iter()
        .map(|name| preset(name).expect("built-in preset"))
        .collect()
}

impl MachineDescriptor {
    /// A generic machine with wave width `w` and generous resources. Used for
    /// portability sweeps over wave widths that no preset covers (e.g. 8).
    pub fn custom(name: &str, wave_width: u32) -> Result<Self, MachError> {
        let desc = MachineDescriptor {
            name: name.to_string(),
            wave_width,
            max_regs: 255,
            scratchpad: 64 * 1024,
            regfile: 256 * 1024,
            reg_width: REG_WIDTH,
            max_workgroup: 1024,
            named_barriers: 16,
            has_fp64: true,
            has_bf16: true,
            matrix_tiles: vec![REFERENCE_TILE],
            has_cluster: false,
            bank_count: wave_width,
            bank_width: REG_WIDTH,
        };
        desc.check()?;
        Ok(desc)
    }

    /// Checks every descriptor invariant and names the first one violated.
    pub fn check(&self) -> Result<(), MachError> {
        let fail = |msg: String| Err(MachError::Invariant(msg));
        let w = self.wave_width;
        if !(8..=64).contains(&w) || !w.is_power_of_two() {
            return fail("wave width must be a power of two in [8,64]".into());
        }
        if self.reg_width != REG_WIDTH {
            return fail(format!("register width must be {} bytes", REG_WIDTH));
        }
        if self.max_regs == 0 {
            return fail("max_regs must be at least 1".into());
        }
        if self.max_workgroup < w || self.max_workgroup > 1024 {
            return fail("max workgroup must be in [wave width, 1024]".into());
        }
        if self.named_barriers == 0 {
            return fail("named barriers must be at least 1".into());
        }
        if self.bank_count != w {
            return fail("bank count must equal the wave width".into());
        }
        if self.bank_width != self.reg_width {
            return fail("bank width must equal the register width".into());
        }
        if self.name.trim().is_empty() || self.name.chars().any(|c| c.is_whitespace()) {
            return fail("machine name must be a non-empty identifier".into());
        }
        Ok(())
    }

    pub fn supports_tile(&self, tile: MatrixTile) -> bool {
        self.matrix_tiles.contains(&tile)
    }

    /// Serializes to the `.mcfg` key=value format accepted by [`load_descriptor`].
    pub fn to_mcfg(&self) -> String {
        let tiles: Vec<String> = self.matrix_tiles.iter().map(|t| t.to_string()).collect();
        format!(
            "name={}\nwave_width={}\nmax_regs={}\nscratchpad={}\nregfile={}\nreg_width={}\n\
             max_workgroup={}\nnamed_barriers={}\nhas_fp64={}\nhas_bf16={}\nmatrix_tiles={}\n\
             has_cluster={}\nbank_count={}\nbank_width={}\n",
            self.name,
            self.wave_width,
            self.max_regs,
            self.scratchpad,
            self.regfile,
            self.reg_width,
            self.max_workgroup,
            self.named_barriers,
            self.has_fp64,
            self.has_bf16,
            tiles.join(","),
            self.has_cluster,
            self.bank_count,
            self.bank_width,
        )
    }
}

const KNOWN_KEYS: [&str; 14] = [
    "name",
    "wave_width",
    "max_regs",
    "scratchpad",
    "regfile",
    "reg_width",
    "max_workgroup",
    "named_barriers",
    "has_fp64",
    "has_bf16",
    "matrix_tiles",
    "has_cluster",
    "bank_count",
    "bank_width",
];

/// Parses and validates a machine descriptor file.
///
/// `name`, `wave_width`, `max_regs`, `scratchpad` and `regfile` are required.
/// Omitted keys default to: `reg_width=4`, `max_workgroup=1024`,
/// `named_barriers=1`, capabilities off, no matrix tiles, `bank_count=W`,
/// `bank_width=4`.
pub fn load_descriptor(source: &str) -> Result<MachineDescriptor, MachError> {
    let mut values: Vec<(&'static str, String, usize)> = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(MachError::Parse {
                line: line_no,
                message: format!("expected key=value, found '{}'", line),
            });
        };
        let key = key.trim();
        let Some(known) = KNOWN_KEYS.iter().find(|k| **k == key) else {
            return Err(MachError::Parse {
                line: line_no,
                message: format!("unknown key '{}'", key),
            });
        };
        if values.iter().any(|(k, _, _)| k == known) {
            return Err(MachError::Parse {
                line: line_no,
                message: format!("duplicate key '{}'", key),
            });
        }
        values.push((known, value.trim().to_string(), line_no));
    }

    let lookup = |key: &str| values.iter().find(|(k, _, _)| *k == key);
    let required = |key: &str| {
        lookup(key).ok_or_else(|| MachError::Parse {
            line: source.lines().count().max(1),
            message: format!("missing required key '{}'", key),
        })
    };
    let number = |key: &str, default: Option<u32>| -> Result<u32, MachError> {
        let entry = match (lookup(key), default) {
            (Some(entry), _) => entry,
            (None, Some(d)) => return Ok(d),
            (None, None) => required(key)?,
        };
        parse_u32(&entry.1).ok_or_else(|| MachError::Parse {
            line: entry.2,
            message: format!("'{}' must be a non-negative integer, found '{}'", key, entry.1),
        })
    };
    let flag = |key: &str| -> Result<bool, MachError> {
        match lookup(key) {
            None => Ok(false),
            Some((_, v, line)) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(MachError::Parse {
                    line: *line,
                    message: format!("'{}' must be true or false, found '{}'", key, v),
                }),
            },
        }
    };

    let name = required("name")?.1.clone();
    let wave_width = number("wave_width", None)?;
    let mut matrix_tiles = Vec::new();
    if let Some((_, v, line)) = lookup("matrix_tiles") {
        for part in v.split(',').filter(|p| !p.trim().is_empty()) {
            let tile = part
                .parse()
                .map_err(|message| MachError::Parse { line: *line, message })?;
            matrix_tiles.push(tile);
        }
    }
    let desc = MachineDescriptor {
        name,
        wave_width,
        max_regs: number("max_regs", None)?,
        scratchpad: number("scratchpad", None)?,
        regfile: number("regfile", None)?,
        reg_width: number("reg_width", Some(REG_WIDTH))?,
        max_workgroup: number("max_workgroup", Some(1024))?,
        named_barriers: number("named_barriers", Some(1))?,
        has_fp64: flag("has_fp64")?,
        has_bf16: flag("has_bf16")?,
        matrix_tiles,
        has_cluster: flag("has_cluster")?,
        bank_count: number("bank_count", Some(wave_width))?,
        bank_width: number("bank_width", Some(REG_WIDTH))?,
    };
    desc.check()?;
    Ok(desc)
}

fn parse_u32(text: &str) -> Option<u32> {
    match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16).ok(),
        None => text.parse().ok(),
    }
}

/// Which resource bounds the resident wave count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitingResource {
    Registers,
    Scratchpad,
    /// Both bounds coincide, so neither resource alone is binding.
    None,
}

impl fmt::Display for LimitingResource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitingResource::Registers => "registers",
            LimitingResource::Scratchpad => "scratchpad",
            LimitingResource::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyResult {
    /// `O`: waves co-resident per core.
    pub resident_waves: u32,
    pub limiting: LimitingResource,
    /// `floor(F / (r * W * w))`.
    pub register_bound: u32,
    /// Waves admitted by scratchpad capacity; `None` when no scratch is used.
    pub scratch_bound: Option<u32>,
}

/// Resident waves per core for a kernel using `regs_per_thread` registers and
/// `scratch_per_workgroup` bytes of scratchpad per workgroup.
///
/// The register bound is `floor(F / (r * W * w))`. When scratch is used, the
/// scratchpad admits `floor(S / scratch)` workgroups, each contributing
/// `ceil(workgroup_size / W)` waves, and the smaller bound wins.
pub fn occupancy(
    desc: &MachineDescriptor,
    regs_per_thread: u32,
    scratch_per_workgroup: u32,
    workgroup_size: u32,
) -> Result<OccupancyResult, MachError> {
    if regs_per_thread == 0 {
        return Err(MachError::InvalidArgument(
            "registers per thread must be at least 1".into(),
        ));
    }
    if workgroup_size == 0 {
        return Err(MachError::InvalidArgument("workgroup size must be at least 1".into()));
    }
    if regs_per_thread > desc.max_regs {
        return Err(MachError::RegisterBudget {
            used: regs_per_thread,
            max: desc.max_regs,
        });
    }
    let wave_bytes = u64::from(regs_per_thread) * u64::from(desc.wave_width) * u64::from(desc.reg_width);
    let register_bound = (u64::from(desc.regfile) / wave_bytes) as u32;

    let scratch_bound = (scratch_per_workgroup > 0).then(|| {
        let waves_per_wg = u64::from(workgroup_size.div_ceil(desc.wave_width));
        let groups = u64::from(desc.scratchpad / scratch_per_workgroup);
        (groups * waves_per_wg).min(u64::from(u32::MAX)) as u32
    });

    let (resident_waves, limiting) = match scratch_bound {
        None => (register_bound, LimitingResource::Registers),
        Some(s) if s < register_bound => (s, LimitingResource::Scratchpad),
        Some(s) if s == register_bound => (s, LimitingResource::None),
        Some(_) => (register_bound, LimitingResource::Registers),
    };
    Ok(OccupancyResult {
        resident_waves,
        limiting,
        register_bound,
        scratch_bound,
    })
}
