//! Textual SSA IR and per-block dataflow graph construction.
//!
//! ```text
//! fn dot(a, b, n:16) {
//! entry:
//!   x = load a;
//!   y = mul x, 3 !line 4;
//!   s = icmp slt y, n;
//!   condbr s, done, entry;
//! done:
//!   ret y;
//! }
//! ```
//!
//! Widths are written as a `:W` suffix on parameters and opcodes. A
//! `hwcall k<id>(args) -> (results)` pseudo-instruction stands for an
//! offloaded kernel.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::graph::{Dfg, ExtInput, ExtOutput, InputTag};
use crate::op::{Op, OpLabel, Pred, DEFAULT_WIDTH, WIDTHS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrModule {
    pub name: String,
    pub functions: Vec<IrFunction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<Param>,
    pub blocks: Vec<BasicBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub instructions: Vec<Instruction>,
    pub terminator: Terminator,
    pub term_lines: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Value(String),
    Int(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstKind {
    Op(Op),
    HwCall(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    /// Defined values: none for store, one for ordinary ops, any number
    /// for hwcalls.
    pub results: Vec<String>,
    pub kind: InstKind,
    pub operands: Vec<Operand>,
    /// Predecessor labels paired with phi operands.
    pub phi_blocks: Vec<String>,
    pub width: u8,
    pub lines: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Br(String),
    CondBr(Operand, String, String),
    Ret(Option<Operand>),
}

impl Terminator {
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Terminator::Br(l) => vec![l],
            Terminator::CondBr(_, t, f) => vec![t, f],
            Terminator::Ret(_) => vec![],
        }
    }

    pub fn operand(&self) -> Option<&Operand> {
        match self {
            Terminator::CondBr(c, _, _) => Some(c),
            Terminator::Ret(v) => v.as_ref(),
            Terminator::Br(_) => None,
        }
    }
}

impl Instruction {
    pub fn op(&self) -> Option<Op> {
        match self.kind {
            InstKind::Op(op) => Some(op),
            InstKind::HwCall(_) => None,
        }
    }

    pub fn result(&self) -> Option<&str> {
        self.results.first().map(String::as_str)
    }

    pub fn label(&self) -> Option<OpLabel> {
        self.op().map(|op| OpLabel::new(op, self.width))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: `{name}` is already defined")]
    Redefinition {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: `{opcode}` expects {expected} operands, got {found}")]
    Arity {
        opcode: String,
        expected: String,
        found: usize,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: unknown opcode `{name}`")]
    UnknownOpcode {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: use of undefined value `{name}`")]
    UndefinedValue {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: unknown block label `{label}`")]
    UnknownLabel {
        label: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: duplicate function `{name}`")]
    DuplicateFunction {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: duplicate block label `{label}`")]
    DuplicateLabel {
        label: String,
        line: usize,
        col: usize,
    },
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, IrError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                col: tc,
            });
        } else if c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse().map_err(|_| IrError::Syntax {
                line: tl,
                col: tc,
                message: format!("integer `{s}` out of range"),
            })?;
            out.push(Token {
                tok: Tok::Int(v),
                line: tl,
                col: tc,
            });
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            i += 2;
            out.push(Token {
                tok: Tok::Punct("->"),
                line: tl,
                col: tc,
            });
        } else {
            let p = match c {
                '(' => "(",
                ')' => ")",
                '{' => "{",
                '}' => "}",
                ',' => ",",
                ';' => ";",
                ':' => ":",
                '=' => "=",
                '!' => "!",
                _ => {
                    return Err(IrError::Syntax {
                        line: tl,
                        col: tc,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            i += 1;
            out.push(Token {
                tok: Tok::Punct(p),
                line: tl,
                col: tc,
            });
        }
        col += i - start;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Source position of each instruction and terminator, used for
/// diagnostics raised after a whole function is read.
#[derive(Default)]
struct Positions {
    insts: Vec<Vec<(usize, usize)>>,
    terms: Vec<(usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, IrError> {
        let t = self.peek();
        Err(IrError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), IrError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`"))
        }
    }

    fn ident(&mut self) -> Result<String, IrError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn int(&mut self) -> Result<i64, IrError> {
        match self.peek().tok {
            Tok::Int(v) => {
                self.next();
                Ok(v)
            }
            _ => self.err("expected integer"),
        }
    }

    fn width_suffix(&mut self) -> Result<u8, IrError> {
        if !self.eat(":") {
            return Ok(DEFAULT_WIDTH);
        }
        let t = self.peek().clone();
        let w = self.int()?;
        match u8::try_from(w) {
            Ok(w) if WIDTHS.contains(&w) => Ok(w),
            _ => Err(IrError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("unsupported width {w}"),
            }),
        }
    }

    fn operand(&mut self) -> Result<Operand, IrError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(Operand::Value(s))
            }
            Tok::Int(v) => {
                let v = *v;
                self.next();
                Ok(Operand::Int(v))
            }
            _ => self.err("expected operand"),
        }
    }

    fn metas(&mut self) -> Result<Vec<u32>, IrError> {
        let mut lines = Vec::new();
        while self.eat("!") {
            let t = self.peek().clone();
            if self.ident()? != "line" {
                return Err(IrError::Syntax {
                    line: t.line,
                    col: t.col,
                    message: "expected `line`".into(),
                });
            }
            let t = self.peek().clone();
            let v = self.int()?;
            lines.push(u32::try_from(v).map_err(|_| IrError::Syntax {
                line: t.line,
                col: t.col,
                message: "line annotation must be nonnegative".into(),
            })?);
        }
        Ok(lines)
    }

    fn module(&mut self, name: &str) -> Result<(IrModule, Vec<Positions>), IrError> {
        let mut functions: Vec<IrFunction> = Vec::new();
        let mut positions = Vec::new();
        while self.peek().tok != Tok::Eof {
            let t = self.peek().clone();
            let (f, p) = self.function()?;
            if functions.iter().any(|g| g.name == f.name) {
                return Err(IrError::DuplicateFunction {
                    name: f.name,
                    line: t.line,
                    col: t.col,
                });
            }
            functions.push(f);
            positions.push(p);
        }
        Ok((
            IrModule {
                name: name.to_string(),
                functions,
            },
            positions,
        ))
    }

    fn function(&mut self) -> Result<(IrFunction, Positions), IrError> {
        if self.peek().tok != Tok::Ident("fn".into()) {
            return self.err("expected `fn`");
        }
        self.next();
        let name = self.ident()?;
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let name = self.ident()?;
                let width = self.width_suffix()?;
                params.push(Param { name, width });
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        self.expect("{")?;
        let mut blocks = Vec::new();
        let mut pos = Positions::default();
        let mut labels = HashSet::new();
        while !self.is_punct("}") {
            let t = self.peek().clone();
            let label = self.ident()?;
            self.expect(":")?;
            if !labels.insert(label.clone()) {
                return Err(IrError::DuplicateLabel {
                    label,
                    line: t.line,
                    col: t.col,
                });
            }
            let (b, ip, tp) = self.block(label)?;
            blocks.push(b);
            pos.insts.push(ip);
            pos.terms.push(tp);
        }
        self.expect("}")?;
        if blocks.is_empty() {
            return self.err(format!("function `{name}` has no blocks"));
        }
        Ok((
            IrFunction {
                name,
                params,
                blocks,
            },
            pos,
        ))
    }

    #[allow(clippy::type_complexity)]
    fn block(
        &mut self,
        label: String,
    ) -> Result<(BasicBlock, Vec<(usize, usize)>, (usize, usize)), IrError> {
        let mut instructions = Vec::new();
        let mut ipos = Vec::new();
        loop {
            let t = self.peek().clone();
            let head = match &t.tok {
                Tok::Ident(s) => s.clone(),
                _ => return self.err("expected instruction or terminator"),
            };
            match head.as_str() {
                "br" | "condbr" | "ret" => {
                    self.next();
                    let terminator = match head.as_str() {
                        "br" => Terminator::Br(self.ident()?),
                        "condbr" => {
                            let c = self.operand()?;
                            self.expect(",")?;
                            let a = self.ident()?;
                            self.expect(",")?;
                            Terminator::CondBr(c, a, self.ident()?)
                        }
                        _ => {
                            let ends = self.is_punct(";")
                                || self.is_punct("}")
                                || self.is_punct("!")
                                || matches!(self.peek_at(1), Tok::Punct(":"));
                            Terminator::Ret(if ends { None } else { Some(self.operand()?) })
                        }
                    };
                    let term_lines = self.metas()?;
                    self.eat(";");
                    let block = BasicBlock {
                        label,
                        instructions,
                        terminator,
                        term_lines,
                    };
                    return Ok((block, ipos, (t.line, t.col)));
                }
                _ => {
                    instructions.push(self.instruction()?);
                    ipos.push((t.line, t.col));
                    self.expect(";")?;
                }
            }
        }
    }

    fn opcode(&mut self) -> Result<(Op, u8), IrError> {
        let t = self.peek().clone();
        let name = self.ident()?;
        let op = match name.as_str() {
            "icmp" => {
                let pt = self.peek().clone();
                let p = self.ident()?;
                Op::Icmp(Pred::from_name(&p).ok_or(IrError::Syntax {
                    line: pt.line,
                    col: pt.col,
                    message: format!("unknown predicate `{p}`"),
                })?)
            }
            "demux" | "reg" | "store" | "br" | "condbr" | "ret" | "hwcall" => {
                return Err(IrError::UnknownOpcode {
                    name,
                    line: t.line,
                    col: t.col,
                })
            }
            _ => name.parse::<Op>().map_err(|_| IrError::UnknownOpcode {
                name: name.clone(),
                line: t.line,
                col: t.col,
            })?,
        };
        Ok((op, self.width_suffix()?))
    }

    fn instruction(&mut self) -> Result<Instruction, IrError> {
        let t = self.peek().clone();
        let head = self.ident()?;
        if head == "store" {
            let width = self.width_suffix()?;
            let operands = self.operand_list()?;
            return Ok(Instruction {
                results: vec![],
                kind: InstKind::Op(Op::Store),
                operands,
                phi_blocks: vec![],
                width,
                lines: self.metas()?,
            });
        }
        if head == "hwcall" {
            let kt = self.peek().clone();
            let k = self.ident()?;
            let id = k
                .strip_prefix('k')
                .and_then(|d| d.parse::<u32>().ok())
                .ok_or(IrError::Syntax {
                    line: kt.line,
                    col: kt.col,
                    message: "expected `k<id>`".into(),
                })?;
            self.expect("(")?;
            let operands = if self.is_punct(")") {
                vec![]
            } else {
                self.operand_list()?
            };
            self.expect(")")?;
            self.expect("->")?;
            self.expect("(")?;
            let mut results = Vec::new();
            if !self.is_punct(")") {
                loop {
                    results.push(self.ident()?);
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect(")")?;
            return Ok(Instruction {
                results,
                kind: InstKind::HwCall(id),
                operands,
                phi_blocks: vec![],
                width: DEFAULT_WIDTH,
                lines: self.metas()?,
            });
        }
        if !self.eat("=") {
            if matches!(self.peek().tok, Tok::Ident(_) | Tok::Int(_)) {
                return Err(IrError::UnknownOpcode {
                    name: head,
                    line: t.line,
                    col: t.col,
                });
            }
            return self.err("expected `=`");
        }
        let (op, width) = self.opcode()?;
        let mut operands = Vec::new();
        let mut phi_blocks = Vec::new();
        if op == Op::Phi {
            loop {
                operands.push(self.operand()?);
                self.expect(",")?;
                phi_blocks.push(self.ident()?);
                if !self.eat(",") {
                    break;
                }
            }
        } else {
            operands = self.operand_list()?;
        }
        Ok(Instruction {
            results: vec![head],
            kind: InstKind::Op(op),
            operands,
            phi_blocks,
            width,
            lines: self.metas()?,
        })
    }

    fn operand_list(&mut self) -> Result<Vec<Operand>, IrError> {
        let mut v = vec![self.operand()?];
        while self.eat(",") {
            v.push(self.operand()?);
        }
        Ok(v)
    }
}

/// Parses a module. The module name is `main`; use [`parse_ir_named`] to
/// set it.
pub fn parse_ir(text: &str) -> Result<IrModule, IrError> {
    parse_ir_named("main", text)
}

pub fn parse_ir_named(name: &str, text: &str) -> Result<IrModule, IrError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let (m, positions) = p.module(name)?;
    for (f, pos) in m.functions.iter().zip(&positions) {
        check_function(f, Some(pos))?;
    }
    Ok(m)
}

impl IrModule {
    /// Semantic checks (SSA, arity, labels, definitions). Positions in
    /// errors are 0 for modules that were not parsed from text.
    pub fn validate(&self) -> Result<(), IrError> {
        let mut names = HashSet::new();
        for f in &self.functions {
            if !names.insert(&f.name) {
                return Err(IrError::DuplicateFunction {
                    name: f.name.clone(),
                    line: 0,
                    col: 0,
                });
            }
            check_function(f, None)?;
        }
        Ok(())
    }

    pub fn function(&self, name: &str) -> Option<&IrFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

fn check_function(f: &IrFunction, pos: Option<&Positions>) -> Result<(), IrError> {
    let at = |b: usize, i: Option<usize>| match (pos, i) {
        (Some(p), Some(i)) => p.insts[b][i],
        (Some(p), None) => p.terms[b],
        (None, _) => (0, 0),
    };
    let mut labels = HashSet::new();
    for (b, blk) in f.blocks.iter().enumerate() {
        if !labels.insert(blk.label.as_str()) {
            let (line, col) = at(b, None);
            return Err(IrError::DuplicateLabel {
                label: blk.label.clone(),
                line,
                col,
            });
        }
    }
    let mut defined: HashSet<&str> = HashSet::new();
    for p in &f.params {
        if !defined.insert(&p.name) {
            return Err(IrError::Redefinition {
                name: p.name.clone(),
                line: 0,
                col: 0,
            });
        }
    }
    for (b, blk) in f.blocks.iter().enumerate() {
        for (i, inst) in blk.instructions.iter().enumerate() {
            let (line, col) = at(b, Some(i));
            for r in &inst.results {
                if !defined.insert(r) {
                    return Err(IrError::Redefinition {
                        name: r.clone(),
                        line,
                        col,
                    });
                }
            }
            if let InstKind::Op(op) = inst.kind {
                check_arity(op, inst, line, col)?;
            }
        }
    }
    let label_ok = |l: &str, line, col| {
        if labels.contains(l) {
            Ok(())
        } else {
            Err(IrError::UnknownLabel {
                label: l.to_string(),
                line,
                col,
            })
        }
    };
    let use_ok = |o: &Operand, line, col| match o {
        Operand::Value(v) if !defined.contains(v.as_str()) => Err(IrError::UndefinedValue {
            name: v.clone(),
            line,
            col,
        }),
        _ => Ok(()),
    };
    for (b, blk) in f.blocks.iter().enumerate() {
        for (i, inst) in blk.instructions.iter().enumerate() {
            let (line, col) = at(b, Some(i));
            for o in &inst.operands {
                use_ok(o, line, col)?;
            }
            for l in &inst.phi_blocks {
                label_ok(l, line, col)?;
            }
        }
        let (line, col) = at(b, None);
        if let Some(o) = blk.terminator.operand() {
            use_ok(o, line, col)?;
        }
        for l in blk.terminator.successors() {
            label_ok(l, line, col)?;
        }
    }
    Ok(())
}

fn check_arity(op: Op, inst: &Instruction, line: usize, col: usize) -> Result<(), IrError> {
    let found = inst.operands.len();
    let bad = |expected: &str| {
        Err(IrError::Arity {
            opcode: op.mnemonic().to_string(),
            expected: expected.to_string(),
            found,
            line,
            col,
        })
    };
    match op {
        Op::Phi => {
            if found == 0 || inst.phi_blocks.len() != found {
                return bad("one or more value/label pairs of");
            }
        }
        Op::Const => {
            if found != 1 || !matches!(inst.operands[0], Operand::Int(_)) {
                return bad("1 integer");
            }
        }
        _ => {
            let n = op.arity().unwrap_or(found);
            if n != found {
                return bad(&n.to_string());
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Printer

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Value(v) => f.write_str(v),
            Operand::Int(i) => write!(f, "{i}"),
        }
    }
}

fn width_text(w: u8) -> String {
    if w == DEFAULT_WIDTH {
        String::new()
    } else {
        format!(":{w}")
    }
}

fn join(ops: &[Operand]) -> String {
    ops.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn meta_text(lines: &[u32]) -> String {
    lines.iter().map(|l| format!(" !line {l}")).collect()
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = width_text(self.width);
        match self.kind {
            InstKind::HwCall(id) => write!(
                f,
                "hwcall k{id}({}) -> ({})",
                join(&self.operands),
                self.results.join(", ")
            )?,
            InstKind::Op(Op::Store) => write!(f, "store{w} {}", join(&self.operands))?,
            InstKind::Op(op) => {
                write!(f, "{} = ", self.results[0])?;
                match op {
                    Op::Icmp(p) => write!(f, "icmp {}{w} {}", p.name(), join(&self.operands))?,
                    Op::Phi => {
                        let pairs: Vec<String> = self
                            .operands
                            .iter()
                            .zip(&self.phi_blocks)
                            .map(|(o, l)| format!("{o}, {l}"))
                            .collect();
                        write!(f, "phi{w} {}", pairs.join(", "))?
                    }
                    _ => write!(f, "{}{w} {}", op.mnemonic(), join(&self.operands))?,
                }
            }
        }
        f.write_str(&meta_text(&self.lines))
    }
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Br(l) => write!(f, "br {l}"),
            Terminator::CondBr(c, t, e) => write!(f, "condbr {c}, {t}, {e}"),
            Terminator::Ret(None) => write!(f, "ret"),
            Terminator::Ret(Some(v)) => write!(f, "ret {v}"),
        }
    }
}

/// Normalized text: one instruction per line, two-space indent.
pub fn print_ir(m: &IrModule) -> String {
    let mut s = String::new();
    for (k, f) in m.functions.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let params: Vec<String> = f
            .params
            .iter()
            .map(|p| format!("{}{}", p.name, width_text(p.width)))
            .collect();
        s.push_str(&format!("fn {}({}) {{\n", f.name, params.join(", ")));
        for b in &f.blocks {
            s.push_str(&format!("{}:\n", b.label));
            for i in &b.instructions {
                s.push_str(&format!("  {i};\n"));
            }
            s.push_str(&format!(
                "  {}{};\n",
                b.terminator,
                meta_text(&b.term_lines)
            ));
        }
        s.push_str("}\n");
    }
    s
}

impl fmt::Display for IrModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_ir(self))
    }
}

// ---------------------------------------------------------------------------
// CDFG construction

/// Dataflow graph of one block plus its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockGraph {
    pub function: usize,
    pub block: usize,
    pub dfg: Dfg,
    /// Instruction index of each vertex.
    pub vertex_inst: Vec<usize>,
}

/// Width of every named value in a function.
pub fn value_widths(f: &IrFunction) -> HashMap<&str, u8> {
    let mut w: HashMap<&str, u8> = f
        .params
        .iter()
        .map(|p| (p.name.as_str(), p.width))
        .collect();
    for b in &f.blocks {
        for i in &b.instructions {
            match i.label() {
                Some(l) => {
                    if let Some(r) = i.result() {
                        w.insert(r, l.result_width());
                    }
                }
                None => {
                    for r in &i.results {
                        w.insert(r, DEFAULT_WIDTH);
                    }
                }
            }
        }
    }
    w
}

/// Names used outside the defining instruction's block, by phis, or by
/// terminators and hwcalls.
fn escaping_uses(f: &IrFunction) -> HashSet<(usize, &str)> {
    let mut def_block: HashMap<&str, usize> = HashMap::new();
    for (b, blk) in f.blocks.iter().enumerate() {
        for i in &blk.instructions {
            for r in &i.results {
                def_block.insert(r, b);
            }
        }
    }
    let mut out = HashSet::new();
    let mut mark = |o: &Operand, b: usize, force: bool| {
        if let Operand::Value(v) = o {
            if let Some((&name, &d)) = def_block.get_key_value(v.as_str()) {
                if force || d != b {
                    out.insert((d, name));
                }
            }
        }
    };
    for (b, blk) in f.blocks.iter().enumerate() {
        for i in &blk.instructions {
            let force = matches!(i.kind, InstKind::HwCall(_) | InstKind::Op(Op::Phi));
            for o in &i.operands {
                mark(o, b, force);
            }
        }
        if let Some(o) = blk.terminator.operand() {
            mark(o, b, true);
        }
    }
    out
}

/// One graph per basic block, in function then block order.
pub fn build_block_graphs(m: &IrModule) -> Vec<BlockGraph> {
    let mut out = Vec::new();
    for (fi, f) in m.functions.iter().enumerate() {
        let escaping = escaping_uses(f);
        let consts: HashMap<&str, i64> = f
            .blocks
            .iter()
            .flat_map(|b| &b.instructions)
            .filter_map(|i| match (i.op(), i.operands.first()) {
                (Some(Op::Const), Some(Operand::Int(v))) => Some((i.results[0].as_str(), *v)),
                _ => None,
            })
            .collect();
        for (bi, blk) in f.blocks.iter().enumerate() {
            let mut g = Dfg::new();
            let mut vertex_inst = Vec::new();
            let mut local: HashMap<&str, usize> = HashMap::new();
            for (ii, inst) in blk.instructions.iter().enumerate() {
                let label = match inst.label() {
                    Some(l) if l.op != Op::Const => l,
                    _ => continue,
                };
                let v = g.add_vertex(label);
                vertex_inst.push(ii);
                for (port, o) in inst.operands.iter().enumerate() {
                    let port = port as u16;
                    let internal = match o {
                        Operand::Value(name) if label.op != Op::Phi => {
                            local.get(name.as_str()).copied()
                        }
                        _ => None,
                    };
                    match internal {
                        Some(src) => {
                            g.add_edge(src, v, port);
                        }
                        None => {
                            let tag = match o {
                                Operand::Int(c) => InputTag::Const(*c),
                                Operand::Value(name) => match consts.get(name.as_str()) {
                                    Some(c) => InputTag::Const(*c),
                                    None => InputTag::Value(name.clone()),
                                },
                            };
                            g.inputs.push(ExtInput {
                                dst: v,
                                port,
                                width: label.port_width(port as usize),
                                tag,
                            });
                        }
                    }
                }
                if let Some(r) = inst.result() {
                    local.insert(r, v);
                    if escaping.contains(&(bi, r)) {
                        g.outputs.push(ExtOutput {
                            src: v,
                            src_out: 0,
                            tag: r.to_string(),
                        });
                    }
                }
            }
            out.push(BlockGraph {
                function: fi,
                block: bi,
                dfg: g,
                vertex_inst,
            });
        }
    }
    out
}

/// One dataflow graph per basic block.
pub fn build_cdfgs(m: &IrModule) -> Vec<Dfg> {
    build_block_graphs(m).into_iter().map(|b| b.dfg).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let m = parse_ir("fn f(a,b){ bb0: c = add a, b; ret c }").unwrap();
        assert_eq!(m.functions.len(), 1);
        assert_eq!(m.functions[0].blocks.len(), 1);
        assert_eq!(m.functions[0].blocks[0].instructions.len(), 1);
    }

    #[test]
    fn parameter_redefinition_is_rejected() {
        let e = parse_ir("fn f(a){ bb0: a = add a, a; ret a }").unwrap_err();
        assert!(
            matches!(e, IrError::Redefinition { ref name, line: 1, .. } if name == "a"),
            "{e}"
        );
    }

    #[test]
    fn distinct_diagnostics() {
        assert!(matches!(
            parse_ir("fn f(a){ bb0: c = add a; ret c }"),
            Err(IrError::Arity { .. })
        ));
        assert!(matches!(
            parse_ir("fn f(a){ bb0: c = fadd a, a; ret c }"),
            Err(IrError::UnknownOpcode { .. })
        ));
        assert!(matches!(
            parse_ir("fn f(a){ bb0: c = add a, , a; ret c }"),
            Err(IrError::Syntax { .. })
        ));
        assert!(matches!(
            parse_ir("fn f(a){ bb0: c = add a, z; ret c }"),
            Err(IrError::UndefinedValue { .. })
        ));
        assert!(matches!(
            parse_ir("fn f(a){ bb0: br nowhere }"),
            Err(IrError::UnknownLabel { .. })
        ));
        let e = parse_ir("fn f(a) {\nbb0:\n  c = add a @ a;\n  ret c\n}").unwrap_err();
        assert_eq!(
            e,
            IrError::Syntax {
                line: 3,
                col: 13,
                message: "unexpected character `@`".into()
            }
        );
    }

    #[test]
    fn print_round_trip() {
        let src = "# comment\nfn g(p, n:16) {\nentry:\n  x = load:8 p !line 3;\n  y = zext x;\n  \
                   k = const 4;\n  z = mul y, k;\n  c = icmp slt:16 n, 7 !line 5 !line 6;\n  \
                   condbr c, a, b;\na:\n  store p, z;\n  br b;\nb:\n  q = phi z, entry, 0, a;\n  \
                   hwcall k2(q, z) -> (u, v) !line 9;\n  ret\n}\n";
        let m = parse_ir(src).unwrap();
        let text = print_ir(&m);
        let again = parse_ir(&text).unwrap();
        assert_eq!(again, m);
        assert_eq!(print_ir(&again), text);
        assert!(text.contains("x = load:8 p !line 3;"));
        assert!(text.contains("hwcall k2(q, z) -> (u, v) !line 9;"));
    }

    #[test]
    fn single_add_block_graph() {
        let m = parse_ir("fn f(a,b){ bb0: c = add a, b; ret c }").unwrap();
        let gs = build_cdfgs(&m);
        assert_eq!(gs.len(), 1);
        let g = &gs[0];
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.vertices[0].to_string(), "add");
        let ports: Vec<u16> = g.inputs.iter().map(|i| i.port).collect();
        assert_eq!(ports, vec![0, 1]);
        assert_eq!(g.outputs.len(), 1);
    }

    #[test]
    fn independent_ops_share_one_graph() {
        let m =
            parse_ir("fn f(a,b){ bb0: c = add a, b; d = add b, a; e = mul c, d; ret e }").unwrap();
        let m2 = parse_ir("fn f(a,b){ bb0: c = add a, b; d = add b, a; ret c }").unwrap();
        assert_eq!(build_cdfgs(&m)[0].components().len(), 1);
        let g = &build_cdfgs(&m2)[0];
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.components().len(), 2);
    }

    #[test]
    fn constants_become_tagged_inputs() {
        let m = parse_ir("fn f(a){ bb0: k = const 9; c = div a, k; d = add c, 1; ret d }").unwrap();
        let g = &build_cdfgs(&m)[0];
        assert_eq!(g.vertex_count(), 2);
        let tags: Vec<_> = g.inputs.iter().map(|i| i.tag.clone()).collect();
        assert_eq!(
            tags,
            vec![
                InputTag::Value("a".into()),
                InputTag::Const(9),
                InputTag::Const(1)
            ]
        );
    }

    #[test]
    fn phi_operands_stay_external() {
        let m = parse_ir(
            "fn f(n){ e: br l; l: i = phi 0, e, j, l; j = add i, 1; c = icmp slt j, n; condbr c, l, x; x: ret j }",
        )
        .unwrap();
        let g = &build_cdfgs(&m)[1];
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(g.validate().is_ok());
        let outs: Vec<&str> = g.outputs.iter().map(|o| o.tag.as_str()).collect();
        assert_eq!(outs, vec!["j", "c"]);
    }
}
