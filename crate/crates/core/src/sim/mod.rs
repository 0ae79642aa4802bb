//! Reference interpreters and cycle-level simulation.

mod cycle;
mod interp;
mod workload;

pub use cycle::{
    alu_cycles_per_vector, simulate_alu, simulate_netlist, simulate_overlay, simulate_pe, AluRun,
    OverlayReport, PeRun, SimResult,
};
pub use interp::{
    interpret_dfg, interpret_ir, interpret_netlist, DfgEval, IrOutcome, Memory, DEFAULT_STEP_LIMIT,
};

use crate::op::EvalError;

pub use workload::Workload;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("expected {expected} inputs, got {found}")]
    InputCount { expected: usize, found: usize },
    #[error("graph contains a cycle")]
    Cyclic,
    #[error("vertex {vertex} port {port} is not driven")]
    Undriven { vertex: usize, port: u16 },
    #[error(transparent)]
    Eval(EvalError),
    #[error("no function named `{0}`")]
    NoFunction(String),
    #[error("value `{0}` read before definition")]
    Undefined(String),
    #[error("phi in block `{0}` reached without a predecessor")]
    PhiInEntry(String),
    #[error("phi in block `{0}` has no entry for predecessor `{1}`")]
    PhiMissingEdge(String, String),
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error("no kernel registered for hwcall k{0}")]
    UnknownKernel(u32),
    #[error("hwcall k{0} does not match the kernel interface")]
    KernelInterface(u32),
    #[error("workload has {found} streams for {expected} input ports")]
    StreamCount { expected: usize, found: usize },
    #[error("workload streams differ in length")]
    UnequalStreams,
    #[error("malformed workload: {0}")]
    Workload(String),
    #[error("invalid netlist: {0}")]
    Netlist(String),
    #[error("workload given for unassigned slot ({row}, {col})")]
    UnassignedSlot { row: usize, col: usize },
}
