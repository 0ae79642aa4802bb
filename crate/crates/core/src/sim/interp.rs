use std::collections::{BTreeMap, HashMap};

use crate::graph::Dfg;
use crate::ir::{InstKind, IrModule, Operand, Terminator};
use crate::op::{eval, Op, Word};
use crate::stitch::Netlist;

use super::SimError;

/// Result of evaluating a dataflow graph once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfgEval {
    pub outputs: Vec<Word>,
    pub div_by_zero: bool,
    /// Output pins of every vertex.
    pub values: Vec<Vec<Word>>,
}

/// Evaluates `g` with `inputs` bound to its external inputs in order.
pub fn interpret_dfg(g: &Dfg, inputs: &[Word]) -> Result<DfgEval, SimError> {
    if inputs.len() != g.inputs.len() {
        return Err(SimError::InputCount {
            expected: g.inputs.len(),
            found: inputs.len(),
        });
    }
    let order = g.topo_order().map_err(|_| SimError::Cyclic)?;
    let n = g.vertex_count();
    let mut values: Vec<Vec<Word>> = vec![Vec::new(); n];
    let mut div_by_zero = false;
    let mut args_of: Vec<Vec<Option<Word>>> = (0..n).map(|v| vec![None; g.arity(v)]).collect();
    for (k, i) in g.inputs.iter().enumerate() {
        set_arg(
            &mut args_of[i.dst],
            i.port,
            Word::new(inputs[k].bits, i.width),
        );
    }
    for v in order {
        let args: Vec<Word> = args_of[v]
            .iter()
            .enumerate()
            .map(|(p, a)| {
                a.ok_or(SimError::Undriven {
                    vertex: v,
                    port: p as u16,
                })
            })
            .collect::<Result<_, _>>()?;
        let r = eval(g.vertices[v], &args).map_err(SimError::Eval)?;
        div_by_zero |= r.div_by_zero;
        values[v] = r.outputs;
        for e in g.edges.iter().filter(|e| e.src == v) {
            let w = values[v][e.src_out as usize];
            set_arg(&mut args_of[e.dst], e.port, w);
        }
    }
    let outputs = g
        .outputs
        .iter()
        .map(|o| values[o.src][o.src_out as usize])
        .collect();
    Ok(DfgEval {
        outputs,
        div_by_zero,
        values,
    })
}

fn set_arg(args: &mut Vec<Option<Word>>, port: u16, w: Word) {
    let p = port as usize;
    if args.len() <= p {
        args.resize(p + 1, None);
    }
    args[p] = Some(w);
}

/// Word-addressed memory; unwritten cells read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memory {
    pub cells: BTreeMap<u64, u64>,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&self, addr: u64) -> u64 {
        self.cells.get(&addr).copied().unwrap_or(0)
    }

    pub fn store(&mut self, addr: u64, value: u64) {
        self.cells.insert(addr, value);
    }

    pub fn write_slice(&mut self, base: u64, values: &[u64]) {
        for (k, &v) in values.iter().enumerate() {
            self.store(base + k as u64, v);
        }
    }

    pub fn read_slice(&self, base: u64, len: usize) -> Vec<u64> {
        (0..len as u64).map(|k| self.load(base + k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrOutcome {
    pub ret: Option<Word>,
    pub steps: u64,
    pub div_by_zero: bool,
}

pub const DEFAULT_STEP_LIMIT: u64 = 10_000_000;

/// Runs function `func` of `m`. Hardware calls are evaluated by
/// interpreting the kernel graph registered under their id.
pub fn interpret_ir(
    m: &IrModule,
    func: &str,
    args: &[Word],
    mem: &mut Memory,
    kernels: &HashMap<u32, Dfg>,
    step_limit: u64,
) -> Result<IrOutcome, SimError> {
    let f = m
        .function(func)
        .ok_or_else(|| SimError::NoFunction(func.to_string()))?;
    if args.len() != f.params.len() {
        return Err(SimError::InputCount {
            expected: f.params.len(),
            found: args.len(),
        });
    }
    let block_index: HashMap<&str, usize> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(k, b)| (b.label.as_str(), k))
        .collect();
    let mut env: HashMap<&str, Word> = HashMap::new();
    for (p, a) in f.params.iter().zip(args) {
        env.insert(&p.name, Word::new(a.bits, p.width));
    }
    let mut steps = 0u64;
    let mut div_by_zero = false;
    let mut prev: Option<&str> = None;
    let mut b = 0usize;
    loop {
        let blk = &f.blocks[b];
        let value = |env: &HashMap<&str, Word>, o: &Operand, width: u8| -> Result<Word, SimError> {
            match o {
                Operand::Int(v) => Ok(Word::new(*v as u64, width)),
                Operand::Value(n) => env
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| SimError::Undefined(n.clone())),
            }
        };
        // Phis read the values live on the incoming edge, all at once.
        let mut phis = Vec::new();
        for inst in blk.instructions.iter().filter(|i| i.op() == Some(Op::Phi)) {
            let from = prev.ok_or_else(|| SimError::PhiInEntry(blk.label.clone()))?;
            let k = inst
                .phi_blocks
                .iter()
                .position(|l| l == from)
                .ok_or_else(|| SimError::PhiMissingEdge(blk.label.clone(), from.to_string()))?;
            let w = value(&env, &inst.operands[k], inst.width)?;
            phis.push((inst.results[0].as_str(), Word::new(w.bits, inst.width)));
        }
        for (n, w) in phis {
            env.insert(n, w);
        }
        for inst in &blk.instructions {
            steps += 1;
            if steps > step_limit {
                return Err(SimError::StepLimit(step_limit));
            }
            match inst.kind {
                InstKind::Op(Op::Phi) => {}
                InstKind::Op(Op::Load) => {
                    let a = value(&env, &inst.operands[0], 64)?;
                    env.insert(&inst.results[0], Word::new(mem.load(a.bits), inst.width));
                }
                InstKind::Op(Op::Store) => {
                    let a = value(&env, &inst.operands[0], 64)?;
                    let v = value(&env, &inst.operands[1], inst.width)?;
                    mem.store(a.bits, Word::new(v.bits, inst.width).bits);
                }
                InstKind::Op(_) => {
                    let label = inst.label().unwrap();
                    let args: Vec<Word> = inst
                        .operands
                        .iter()
                        .enumerate()
                        .map(|(p, o)| value(&env, o, label.port_width(p)))
                        .collect::<Result<_, _>>()?;
                    let r = eval(label, &args).map_err(SimError::Eval)?;
                    div_by_zero |= r.div_by_zero;
                    env.insert(&inst.results[0], r.outputs[0]);
                }
                InstKind::HwCall(id) => {
                    let k = kernels.get(&id).ok_or(SimError::UnknownKernel(id))?;
                    if inst.operands.len() != k.inputs.len()
                        || inst.results.len() != k.outputs.len()
                    {
                        return Err(SimError::KernelInterface(id));
                    }
                    let args: Vec<Word> = inst
                        .operands
                        .iter()
                        .zip(&k.inputs)
                        .map(|(o, i)| value(&env, o, i.width))
                        .collect::<Result<_, _>>()?;
                    let r = interpret_dfg(k, &args)?;
                    div_by_zero |= r.div_by_zero;
                    for (n, w) in inst.results.iter().zip(r.outputs) {
                        env.insert(n, w);
                    }
                }
            }
        }
        steps += 1;
        if steps > step_limit {
            return Err(SimError::StepLimit(step_limit));
        }
        let next = match &blk.terminator {
            Terminator::Ret(v) => {
                let ret = match v {
                    Some(o) => Some(value(&env, o, 64)?),
                    None => None,
                };
                return Ok(IrOutcome {
                    ret,
                    steps,
                    div_by_zero,
                });
            }
            Terminator::Br(l) => l,
            Terminator::CondBr(c, t, e) => {
                if value(&env, c, 1)?.bits != 0 {
                    t
                } else {
                    e
                }
            }
        };
        prev = Some(&blk.label);
        b = block_index[next.as_str()];
    }
}

/// Evaluates a netlist combinationally on one input vector, one value
/// per input port.
pub fn interpret_netlist(n: &Netlist, inputs: &[u64]) -> Result<Vec<u64>, SimError> {
    let (g, feeds) = n.to_dfg().map_err(|e| SimError::Netlist(e.to_string()))?;
    if inputs.len() != n.input_count() {
        return Err(SimError::InputCount {
            expected: n.input_count(),
            found: inputs.len(),
        });
    }
    let args: Vec<Word> = g
        .inputs
        .iter()
        .zip(&feeds)
        .map(|(i, &k)| Word::new(inputs[k], i.width))
        .collect();
    Ok(interpret_dfg(&g, &args)?
        .outputs
        .iter()
        .map(|w| w.bits)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_ir;

    fn run(src: &str, args: &[u64]) -> IrOutcome {
        let m = parse_ir(src).unwrap();
        let args: Vec<Word> = args.iter().map(|&a| Word::new(a, 32)).collect();
        interpret_ir(
            &m,
            &m.functions[0].name,
            &args,
            &mut Memory::new(),
            &HashMap::new(),
            1000,
        )
        .unwrap()
    }

    #[test]
    fn adds() {
        assert_eq!(
            run("fn f(a,b){ bb0: c = add a, b; ret c }", &[2, 3])
                .ret
                .unwrap()
                .bits,
            5
        );
    }

    #[test]
    fn loop_sums_and_flags_division() {
        let src = "fn f(n) { e: br h; h: i = phi 0, e, i1, h; s = phi 0, e, s1, h; \
                   s1 = add s, i; i1 = add i, 1; c = icmp slt i1, n; condbr c, h, x; \
                   x: q = div s1, 0; r = add q, s1; ret r }";
        let o = run(src, &[5]);
        assert_eq!(o.ret.unwrap().bits, 10);
        assert!(o.div_by_zero);
    }

    #[test]
    fn step_limit_stops_infinite_loops() {
        let m = parse_ir("fn f() { a: br a }").unwrap();
        let e = interpret_ir(&m, "f", &[], &mut Memory::new(), &HashMap::new(), 50).unwrap_err();
        assert_eq!(e, SimError::StepLimit(50));
    }

    #[test]
    fn dfg_evaluation_follows_ports() {
        let m = parse_ir("fn f(a,b,c){ bb0: p = mul a, b; s = sub c, p; ret s }").unwrap();
        let g = &crate::ir::build_cdfgs(&m)[0];
        let r = interpret_dfg(g, &[Word::new(3, 32), Word::new(4, 32), Word::new(20, 32)]).unwrap();
        assert_eq!(r.outputs, vec![Word::new(8, 32)]);
    }
}
