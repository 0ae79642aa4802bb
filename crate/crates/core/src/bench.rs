//! The benchmark programs shipped with the toolchain.

use crate::ir::{parse_ir_named, IrError, IrModule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Benchmark {
    pub name: &'static str,
    /// Entry function.
    pub function: &'static str,
    pub source: &'static str,
}

impl Benchmark {
    pub fn module(&self) -> Result<IrModule, IrError> {
        parse_ir_named(self.name, self.source)
    }
}

pub const MATMUL: Benchmark = Benchmark {
    name: "matmul",
    function: "matmul",
    source: include_str!("../../../benchmarks/matmul.ir"),
};
pub const OUTER: Benchmark = Benchmark {
    name: "outer",
    function: "outer",
    source: include_str!("../../../benchmarks/outer.ir"),
};
pub const ROBERT: Benchmark = Benchmark {
    name: "robert",
    function: "robert",
    source: include_str!("../../../benchmarks/robert.ir"),
};
pub const SMOOTH: Benchmark = Benchmark {
    name: "smooth",
    function: "smooth",
    source: include_str!("../../../benchmarks/smooth.ir"),
};

/// Matrix multiplication, outer product, Robert cross, 3x3 smoothing.
pub const SUITE: [Benchmark; 4] = [MATMUL, OUTER, ROBERT, SMOOTH];

/// Three dependent blocks: the entry block computes `a0` and `b0` and
/// branches; each successor consumes one of them.
pub const BRANCHY: Benchmark = Benchmark {
    name: "branchy",
    function: "branchy",
    source: "\
fn branchy(x, y, z, s) {
bb0:
  a0 = mul x, y;
  b0 = add x, z;
  c = icmp sgt x, s;
  condbr c, bb1, bb2;
bb1:
  r1 = sub b0, y;
  ret r1;
bb2:
  r2 = mul a0, z;
  ret r2;
}
",
};

pub fn by_name(name: &str) -> Option<Benchmark> {
    SUITE
        .iter()
        .chain(std::iter::once(&BRANCHY))
        .find(|b| b.name == name)
        .copied()
}
