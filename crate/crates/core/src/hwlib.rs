//! Characterized primitive modules that kernels are stitched from.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::op::{eval, Eval, EvalError, Op, OpLabel, Word, WIDTHS};

/// FPGA resource counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resources {
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
    pub bram: u64,
}

impl Resources {
    pub fn new(lut: u64, ff: u64, dsp: u64, bram: u64) -> Self {
        Resources { lut, ff, dsp, bram }
    }
}

impl Add for Resources {
    type Output = Resources;
    fn add(self, o: Resources) -> Resources {
        Resources {
            lut: self.lut + o.lut,
            ff: self.ff + o.ff,
            dsp: self.dsp + o.dsp,
            bram: self.bram + o.bram,
        }
    }
}

impl AddAssign for Resources {
    fn add_assign(&mut self, o: Resources) {
        *self = *self + o;
    }
}

impl Mul<u64> for Resources {
    type Output = Resources;
    fn mul(self, k: u64) -> Resources {
        Resources {
            lut: self.lut * k,
            ff: self.ff * k,
            dsp: self.dsp * k,
            bram: self.bram * k,
        }
    }
}

impl std::iter::Sum for Resources {
    fn sum<I: Iterator<Item = Resources>>(it: I) -> Resources {
        it.fold(Resources::default(), Add::add)
    }
}

impl fmt::Display for Resources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lut={} ff={} dsp={} bram={}",
            self.lut, self.ff, self.dsp, self.bram
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub width: u8,
}

/// One characterized module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Primitive {
    /// Library opcode name (`add`, `icmp`, `register`, ...).
    pub opcode: String,
    pub width: u8,
    pub latency: u32,
    pub initiation_interval: u32,
    pub resources: Resources,
    pub ports: Vec<Port>,
}

impl Primitive {
    /// Computes the primitive's function; `label` selects predicates and
    /// demux fan-out.
    pub fn behavior(&self, label: OpLabel, args: &[Word]) -> Result<Eval, EvalError> {
        eval(label, args)
    }
}

fn ports_for(opcode: &str, width: u8) -> Vec<Port> {
    let p = |name: &str, direction, width| Port {
        name: name.to_string(),
        direction,
        width,
    };
    match opcode {
        "register" => vec![p("d", Direction::In, width), p("q", Direction::Out, width)],
        "select" => vec![
            p("c", Direction::In, 1),
            p("a", Direction::In, width),
            p("b", Direction::In, width),
            p("y", Direction::Out, width),
        ],
        "demux" => vec![
            p("c", Direction::In, 1),
            p("d", Direction::In, width),
            p("t", Direction::Out, width),
            p("f", Direction::Out, width),
        ],
        "icmp" => vec![
            p("a", Direction::In, width),
            p("b", Direction::In, width),
            p("y", Direction::Out, 1),
        ],
        _ => vec![
            p("a", Direction::In, width),
            p("b", Direction::In, width),
            p("y", Direction::Out, width),
        ],
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HwlibError {
    #[error("cannot read library: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed library: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("duplicate primitive {opcode}{width}")]
    Duplicate { opcode: String, width: u8 },
    #[error("primitive {opcode}{width} has negative latency {latency}")]
    NegativeLatency {
        opcode: String,
        width: u8,
        latency: i64,
    },
    #[error("primitive {opcode}{width} has initiation interval {ii}, expected at least 1")]
    InitiationInterval { opcode: String, width: u8, ii: i64 },
    #[error("register primitive at width {width} must have latency 1, found {latency}")]
    RegisterLatency { width: u8, latency: i64 },
    #[error("primitive {opcode}{width} uses an unsupported width")]
    Width { opcode: String, width: u8 },
    #[error("unknown primitive opcode `{0}`")]
    UnknownOpcode(String),
    #[error("library is missing mandatory primitives: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("no primitive for {opcode} at width {width}")]
    Unsupported { opcode: String, width: u8 },
}

/// On-disk entry. Latency and interval are signed so that bad values
/// are reported rather than rejected by the parser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Entry {
    opcode: String,
    width: u8,
    latency: i64,
    ii: i64,
    resources: Resources,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LibraryFile {
    name: String,
    version: String,
    primitives: Vec<Entry>,
}

/// Validated primitive library, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveLibrary {
    pub name: String,
    pub version: String,
    primitives: Vec<Primitive>,
    index: HashMap<(String, u8), usize>,
}

/// Default latency in cycles of a library opcode.
pub fn default_latency(opcode: &str) -> u32 {
    match opcode {
        "mul" => 6,
        "div" => 12,
        _ => 1,
    }
}

/// Default resource estimate of a library opcode at a width.
pub fn default_resources(opcode: &str, width: u8) -> Resources {
    let w = width as u64;
    match opcode {
        "mul" => {
            let dsp = match width {
                8 | 16 => 1,
                32 => 4,
                _ => 16,
            };
            Resources::new(w / 2, 2 * w, dsp, 0)
        }
        "div" => Resources::new(w * w / 4, w * default_latency("div") as u64, 0, 0),
        "shl" | "shr" => Resources::new(2 * w, 0, 0, 0),
        "icmp" => Resources::new(w / 2 + 1, 0, 0, 0),
        "demux" => Resources::new(2 * w, 0, 0, 0),
        "register" => Resources::new(0, w, 0, 0),
        _ => Resources::new(w, 0, 0, 0),
    }
}

impl PrimitiveLibrary {
    /// The shipped library: every mandatory opcode at every width with
    /// the default latencies and resources.
    pub fn builtin() -> Self {
        let mut entries = Vec::new();
        for opcode in Op::LIBRARY_OPCODES {
            for width in WIDTHS {
                entries.push(Entry {
                    opcode: opcode.to_string(),
                    width,
                    latency: default_latency(opcode) as i64,
                    ii: 1,
                    resources: default_resources(opcode, width),
                });
            }
        }
        Self::from_file(LibraryFile {
            name: "default".into(),
            version: "1.0".into(),
            primitives: entries,
        })
        .expect("builtin library is valid")
    }

    fn from_file(f: LibraryFile) -> Result<Self, HwlibError> {
        let mut primitives = Vec::new();
        let mut index = HashMap::new();
        for e in f.primitives {
            if !Op::LIBRARY_OPCODES.contains(&e.opcode.as_str()) {
                return Err(HwlibError::UnknownOpcode(e.opcode));
            }
            if !WIDTHS.contains(&e.width) {
                return Err(HwlibError::Width {
                    opcode: e.opcode,
                    width: e.width,
                });
            }
            if e.latency < 0 {
                return Err(HwlibError::NegativeLatency {
                    opcode: e.opcode,
                    width: e.width,
                    latency: e.latency,
                });
            }
            if e.ii < 1 {
                return Err(HwlibError::InitiationInterval {
                    opcode: e.opcode,
                    width: e.width,
                    ii: e.ii,
                });
            }
            if e.opcode == "register" && e.latency != 1 {
                return Err(HwlibError::RegisterLatency {
                    width: e.width,
                    latency: e.latency,
                });
            }
            let key = (e.opcode.clone(), e.width);
            if index.contains_key(&key) {
                return Err(HwlibError::Duplicate {
                    opcode: e.opcode,
                    width: e.width,
                });
            }
            index.insert(key, primitives.len());
            primitives.push(Primitive {
                ports: ports_for(&e.opcode, e.width),
                opcode: e.opcode,
                width: e.width,
                latency: e.latency as u32,
                initiation_interval: e.ii as u32,
                resources: e.resources,
            });
        }
        let missing: Vec<String> = Op::LIBRARY_OPCODES
            .iter()
            .flat_map(|o| WIDTHS.iter().map(move |w| (o.to_string(), *w)))
            .filter(|k| !index.contains_key(k))
            .map(|(o, w)| format!("{o}{w}"))
            .collect();
        if !missing.is_empty() {
            return Err(HwlibError::Missing(missing));
        }
        Ok(PrimitiveLibrary {
            name: f.name,
            version: f.version,
            primitives,
            index,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, HwlibError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let f = LibraryFile {
            name: self.name.clone(),
            version: self.version.clone(),
            primitives: self
                .primitives
                .iter()
                .map(|p| Entry {
                    opcode: p.opcode.clone(),
                    width: p.width,
                    latency: p.latency as i64,
                    ii: p.initiation_interval as i64,
                    resources: p.resources,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&f).expect("library serializes");
        s.push('\n');
        s
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// Primitive by library opcode name.
    pub fn get(&self, opcode: &str, width: u8) -> Result<&Primitive, HwlibError> {
        self.index
            .get(&(opcode.to_string(), width))
            .map(|&k| &self.primitives[k])
            .ok_or_else(|| HwlibError::Unsupported {
                opcode: opcode.to_string(),
                width,
            })
    }

    /// Replaces the latency of every width of `opcode` (registers keep
    /// their single cycle).
    pub fn set_latency(&mut self, opcode: &str, latency: u32) {
        if opcode == "register" {
            return;
        }
        for p in self.primitives.iter_mut().filter(|p| p.opcode == opcode) {
            p.latency = latency;
        }
    }
}

impl Default for PrimitiveLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

pub fn load_library(path: &Path) -> Result<PrimitiveLibrary, HwlibError> {
    PrimitiveLibrary::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_library(lib: &PrimitiveLibrary, path: &Path) -> Result<(), HwlibError> {
    std::fs::write(path, lib.to_json())?;
    Ok(())
}

/// Primitive implementing an operation. Conversions, memory operations
/// and phis have none.
pub fn lookup(lib: &PrimitiveLibrary, op: Op, width: u8) -> Result<&Primitive, HwlibError> {
    if !op.is_mappable() {
        return Err(HwlibError::Unsupported {
            opcode: op.mnemonic().to_string(),
            width,
        });
    }
    lib.get(op.library_name(), width)
}

/// Cycles from operands to result of a vertex: register chains count
/// their length.
pub fn vertex_latency(lib: &PrimitiveLibrary, label: OpLabel) -> Result<u32, HwlibError> {
    let p = lookup(lib, label.op, label.width)?;
    Ok(match label.op {
        Op::Reg(d) => d,
        _ => p.latency,
    })
}

/// Resources of a vertex: register chains count one register per stage.
pub fn vertex_resources(lib: &PrimitiveLibrary, label: OpLabel) -> Result<Resources, HwlibError> {
    let p = lookup(lib, label.op, label.width)?;
    Ok(match label.op {
        Op::Reg(d) => p.resources * d as u64,
        _ => p.resources,
    })
}
