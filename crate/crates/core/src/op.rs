//! Opcode table and the single integer semantics shared by the IR
//! interpreter, the DFG interpreter, the primitive library and the
//! netlist simulator.

use std::fmt;
use std::str::FromStr;

/// Bit widths an instruction may carry.
pub const WIDTHS: [u8; 4] = [8, 16, 32, 64];
pub const DEFAULT_WIDTH: u8 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
    Ult,
    Ule,
    Ugt,
    Uge,
}

impl Pred {
    pub const ALL: [Pred; 10] = [
        Pred::Eq,
        Pred::Ne,
        Pred::Slt,
        Pred::Sle,
        Pred::Sgt,
        Pred::Sge,
        Pred::Ult,
        Pred::Ule,
        Pred::Ugt,
        Pred::Uge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Slt => "slt",
            Pred::Sle => "sle",
            Pred::Sgt => "sgt",
            Pred::Sge => "sge",
            Pred::Ult => "ult",
            Pred::Ule => "ule",
            Pred::Ugt => "ugt",
            Pred::Uge => "uge",
        }
    }

    pub fn from_name(s: &str) -> Option<Pred> {
        Pred::ALL.into_iter().find(|p| p.name() == s)
    }

    fn holds(self, a: Word, b: Word, width: u8) -> bool {
        let (ua, ub) = (mask(a.bits, width), mask(b.bits, width));
        let (sa, sb) = (sign_extend(ua, width), sign_extend(ub, width));
        match self {
            Pred::Eq => ua == ub,
            Pred::Ne => ua != ub,
            Pred::Slt => sa < sb,
            Pred::Sle => sa <= sb,
            Pred::Sgt => sa > sb,
            Pred::Sge => sa >= sb,
            Pred::Ult => ua < ub,
            Pred::Ule => ua <= ub,
            Pred::Ugt => ua > ub,
            Pred::Uge => ua >= ub,
        }
    }
}

/// Operation kinds. Declaration order is the collation order used for
/// canonical codes outside of frequency relabeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Icmp(Pred),
    Select,
    Load,
    Store,
    Zext,
    Sext,
    Trunc,
    Phi,
    Const,
    /// Conditional router inserted by kernel merging. Port 0 is the
    /// condition, ports 1..=n carry data; output `2k` is data `k` when the
    /// condition holds and output `2k + 1` when it does not.
    Demux,
    /// Pure delay of the given number of cycles.
    Reg(u32),
}

impl Op {
    /// Position in the opcode table. Terminators (br, condbr, ret) occupy
    /// 16..=18 in the table and never appear as vertices.
    pub fn table_index(self) -> u32 {
        match self {
            Op::Add => 0,
            Op::Sub => 1,
            Op::Mul => 2,
            Op::Div => 3,
            Op::And => 4,
            Op::Or => 5,
            Op::Xor => 6,
            Op::Shl => 7,
            Op::Shr => 8,
            Op::Icmp(_) => 9,
            Op::Select => 10,
            Op::Load => 11,
            Op::Store => 12,
            Op::Zext => 13,
            Op::Sext => 14,
            Op::Trunc => 15,
            Op::Phi => 19,
            Op::Const => 20,
            Op::Demux => 21,
            Op::Reg(_) => 22,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::And => "and",
            Op::Or => "or",
            Op::Xor => "xor",
            Op::Shl => "shl",
            Op::Shr => "shr",
            Op::Icmp(_) => "icmp",
            Op::Select => "select",
            Op::Load => "load",
            Op::Store => "store",
            Op::Zext => "zext",
            Op::Sext => "sext",
            Op::Trunc => "trunc",
            Op::Phi => "phi",
            Op::Const => "const",
            Op::Demux => "demux",
            Op::Reg(_) => "reg",
        }
    }

    /// Fixed operand count, `None` for variadic ops (phi, demux).
    pub fn arity(self) -> Option<usize> {
        match self {
            Op::Add
            | Op::Sub
            | Op::Mul
            | Op::Div
            | Op::And
            | Op::Or
            | Op::Xor
            | Op::Shl
            | Op::Shr
            | Op::Icmp(_)
            | Op::Store => Some(2),
            Op::Select => Some(3),
            Op::Load | Op::Zext | Op::Sext | Op::Trunc | Op::Const | Op::Reg(_) => Some(1),
            Op::Phi | Op::Demux => None,
        }
    }

    pub fn is_memory(self) -> bool {
        matches!(self, Op::Load | Op::Store)
    }

    /// Casts and phis: removed from kernels by bypassing.
    pub fn is_conversion(self) -> bool {
        matches!(self, Op::Zext | Op::Sext | Op::Trunc | Op::Phi)
    }

    /// Operations that can be realized as a hardware primitive.
    pub fn is_mappable(self) -> bool {
        !matches!(
            self,
            Op::Load | Op::Store | Op::Zext | Op::Sext | Op::Trunc | Op::Phi | Op::Const
        )
    }

    pub fn has_result(self) -> bool {
        !matches!(self, Op::Store)
    }

    /// Operations the generic ALU flavor can issue, in selector order.
    pub const ALU_OPS: [Op; 11] = [
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::And,
        Op::Or,
        Op::Xor,
        Op::Shl,
        Op::Shr,
        Op::Icmp(Pred::Eq),
        Op::Select,
    ];

    /// Opcode names (as used in primitive libraries) that every library
    /// must provide at every width.
    pub const LIBRARY_OPCODES: [&'static str; 13] = [
        "add", "sub", "mul", "div", "and", "or", "xor", "shl", "shr", "icmp", "select", "demux",
        "register",
    ];

    /// Name of the primitive implementing this op in a library.
    pub fn library_name(self) -> &'static str {
        match self {
            Op::Reg(_) => "register",
            other => other.mnemonic(),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Icmp(p) => write!(f, "icmp.{}", p.name()),
            Op::Reg(1) => write!(f, "reg"),
            Op::Reg(d) => write!(f, "reg{d}"),
            other => f.write_str(other.mnemonic()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown opcode `{0}`")]
pub struct UnknownOp(pub String);

impl FromStr for Op {
    type Err = UnknownOp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let op = match s {
            "add" => Op::Add,
            "sub" => Op::Sub,
            "mul" => Op::Mul,
            "div" => Op::Div,
            "and" => Op::And,
            "or" => Op::Or,
            "xor" => Op::Xor,
            "shl" => Op::Shl,
            "shr" => Op::Shr,
            "select" => Op::Select,
            "load" => Op::Load,
            "store" => Op::Store,
            "zext" => Op::Zext,
            "sext" => Op::Sext,
            "trunc" => Op::Trunc,
            "phi" => Op::Phi,
            "const" => Op::Const,
            "demux" => Op::Demux,
            "reg" => Op::Reg(1),
            _ => {
                if let Some(p) = s.strip_prefix("icmp.") {
                    return Pred::from_name(p)
                        .map(Op::Icmp)
                        .ok_or_else(|| UnknownOp(s.to_string()));
                }
                if let Some(d) = s.strip_prefix("reg") {
                    return d
                        .parse::<u32>()
                        .ok()
                        .filter(|d| *d >= 1)
                        .map(Op::Reg)
                        .ok_or_else(|| UnknownOp(s.to_string()));
                }
                return Err(UnknownOp(s.to_string()));
            }
        };
        Ok(op)
    }
}

/// Vertex label: operation plus datapath width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpLabel {
    pub op: Op,
    pub width: u8,
}

impl OpLabel {
    pub fn new(op: Op, width: u8) -> Self {
        OpLabel { op, width }
    }

    /// Injective integer key ordered by opcode table index first.
    pub fn collation_key(self) -> u32 {
        let pred = match self.op {
            Op::Icmp(p) => p as u32,
            _ => 0,
        };
        let depth = match self.op {
            Op::Reg(d) => d.min(0xfff),
            _ => 0,
        };
        (self.op.table_index() << 24) | (pred << 20) | (depth << 8) | self.width as u32
    }

    /// Width of the value produced on output pins.
    pub fn result_width(self) -> u8 {
        match self.op {
            Op::Icmp(_) => 1,
            _ => self.width,
        }
    }

    /// Width expected on an operand port.
    pub fn port_width(self, port: usize) -> u8 {
        match (self.op, port) {
            (Op::Select, 0) | (Op::Demux, 0) => 1,
            _ => self.width,
        }
    }

    /// Number of output pins.
    pub fn outputs(self, inputs: usize) -> usize {
        match self.op {
            Op::Demux => 2 * inputs.saturating_sub(1),
            Op::Store => 0,
            _ => 1,
        }
    }
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width == DEFAULT_WIDTH {
            write!(f, "{}", self.op)
        } else {
            write!(f, "{}:{}", self.op, self.width)
        }
    }
}

impl FromStr for OpLabel {
    type Err = UnknownOp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (op, width) = match s.split_once(':') {
            Some((op, w)) => {
                let w: u8 = w.parse().map_err(|_| UnknownOp(s.to_string()))?;
                if !WIDTHS.contains(&w) {
                    return Err(UnknownOp(s.to_string()));
                }
                (op, w)
            }
            None => (s, DEFAULT_WIDTH),
        };
        Ok(OpLabel::new(op.parse()?, width))
    }
}

/// A fixed-width integer value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word {
    pub bits: u64,
    pub width: u8,
}

impl Word {
    pub fn new(bits: u64, width: u8) -> Self {
        Word {
            bits: mask(bits, width),
            width,
        }
    }

    pub fn signed(self) -> i64 {
        sign_extend(self.bits, self.width)
    }
}

pub fn mask(bits: u64, width: u8) -> u64 {
    if width >= 64 {
        bits
    } else {
        bits & ((1u64 << width) - 1)
    }
}

pub fn sign_extend(bits: u64, width: u8) -> i64 {
    if width >= 64 {
        bits as i64
    } else {
        let shift = 64 - width as u32;
        ((bits << shift) as i64) >> shift
    }
}

/// Result of evaluating one operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eval {
    pub outputs: Vec<Word>,
    pub div_by_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("`{0}` has no pure dataflow semantics")]
    NotPure(Op),
    #[error("`{op}` expects {expected} operands, got {found}")]
    Arity {
        op: Op,
        expected: usize,
        found: usize,
    },
}

/// Evaluates `label` on `args` with two's-complement wraparound at the
/// label width. Operands are masked to the port width on entry, so a
/// narrower or wider producer behaves like an implicit zext/trunc.
/// Division by zero yields 0 and raises the flag.
pub fn eval(label: OpLabel, args: &[Word]) -> Result<Eval, EvalError> {
    let w = label.width;
    if let Some(n) = label.op.arity() {
        if n != args.len() {
            return Err(EvalError::Arity {
                op: label.op,
                expected: n,
                found: args.len(),
            });
        }
    }
    let arg = |k: usize| mask(args[k].bits, label.port_width(k));
    let one = |bits: u64| {
        Ok(Eval {
            outputs: vec![Word::new(bits, label.result_width())],
            div_by_zero: false,
        })
    };
    match label.op {
        Op::Add => one(arg(0).wrapping_add(arg(1))),
        Op::Sub => one(arg(0).wrapping_sub(arg(1))),
        Op::Mul => one(arg(0).wrapping_mul(arg(1))),
        Op::Div => match arg(0).checked_div(arg(1)) {
            Some(q) => one(q),
            None => Ok(Eval {
                outputs: vec![Word::new(0, w)],
                div_by_zero: true,
            }),
        },
        Op::And => one(arg(0) & arg(1)),
        Op::Or => one(arg(0) | arg(1)),
        Op::Xor => one(arg(0) ^ arg(1)),
        Op::Shl => {
            let s = arg(1);
            one(if s >= w as u64 { 0 } else { arg(0) << s })
        }
        Op::Shr => {
            let s = arg(1);
            one(if s >= w as u64 { 0 } else { arg(0) >> s })
        }
        Op::Icmp(p) => one(p.holds(args[0], args[1], w) as u64),
        Op::Select => one(if arg(0) != 0 { arg(1) } else { arg(2) }),
        Op::Zext | Op::Trunc => one(args[0].bits),
        Op::Sext => one(args[0].signed() as u64),
        Op::Const => one(args[0].bits),
        // A narrower value keeps its own width through wider storage.
        Op::Reg(_) => Ok(Eval {
            outputs: vec![Word::new(arg(0), args[0].width.min(w))],
            div_by_zero: false,
        }),
        Op::Demux => {
            if args.is_empty() {
                return Err(EvalError::Arity {
                    op: Op::Demux,
                    expected: 1,
                    found: 0,
                });
            }
            let taken = arg(0) != 0;
            let mut outputs = Vec::with_capacity(2 * (args.len() - 1));
            for k in 1..args.len() {
                let v = arg(k);
                outputs.push(Word::new(if taken { v } else { 0 }, w));
                outputs.push(Word::new(if taken { 0 } else { v }, w));
            }
            Ok(Eval {
                outputs,
                div_by_zero: false,
            })
        }
        Op::Load | Op::Store | Op::Phi => Err(EvalError::NotPure(label.op)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w32(v: u64) -> Word {
        Word::new(v, 32)
    }

    #[test]
    fn wraparound_add() {
        let e = eval(OpLabel::new(Op::Add, 32), &[w32(u32::MAX as u64), w32(2)]).unwrap();
        assert_eq!(e.outputs[0].bits, 1);
    }

    #[test]
    fn division_by_zero_is_flagged() {
        let e = eval(OpLabel::new(Op::Div, 32), &[w32(7), w32(0)]).unwrap();
        assert_eq!(e.outputs[0].bits, 0);
        assert!(e.div_by_zero);
    }

    #[test]
    fn signed_compare() {
        let lt = OpLabel::new(Op::Icmp(Pred::Slt), 8);
        let e = eval(lt, &[Word::new(0xff, 8), Word::new(1, 8)]).unwrap();
        assert_eq!(e.outputs[0], Word::new(1, 1));
        let ult = OpLabel::new(Op::Icmp(Pred::Ult), 8);
        let e = eval(ult, &[Word::new(0xff, 8), Word::new(1, 8)]).unwrap();
        assert_eq!(e.outputs[0].bits, 0);
    }

    #[test]
    fn sext_and_trunc() {
        let s = eval(OpLabel::new(Op::Sext, 32), &[Word::new(0x80, 8)]).unwrap();
        assert_eq!(s.outputs[0].bits, 0xffff_ff80);
        let t = eval(OpLabel::new(Op::Trunc, 8), &[w32(0x1234)]).unwrap();
        assert_eq!(t.outputs[0].bits, 0x34);
    }

    #[test]
    fn demux_routes_and_zeroes() {
        let d = OpLabel::new(Op::Demux, 32);
        let e = eval(d, &[Word::new(1, 1), w32(5), w32(9)]).unwrap();
        let bits: Vec<u64> = e.outputs.iter().map(|w| w.bits).collect();
        assert_eq!(bits, vec![5, 0, 9, 0]);
        let e = eval(d, &[Word::new(0, 1), w32(5), w32(9)]).unwrap();
        let bits: Vec<u64> = e.outputs.iter().map(|w| w.bits).collect();
        assert_eq!(bits, vec![0, 5, 0, 9]);
    }

    #[test]
    fn label_text_round_trips() {
        for s in [
            "add",
            "mul:16",
            "icmp.sgt",
            "icmp.eq:8",
            "reg",
            "reg7:64",
            "demux",
        ] {
            let l: OpLabel = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert!("fadd".parse::<OpLabel>().is_err());
        assert!("add:12".parse::<OpLabel>().is_err());
    }

    #[test]
    fn collation_follows_table_order() {
        let add = OpLabel::new(Op::Add, 32).collation_key();
        let mul = OpLabel::new(Op::Mul, 32).collation_key();
        let load = OpLabel::new(Op::Load, 8).collation_key();
        assert!(add < mul && mul < load);
    }
}
