use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

use crate::ir::{
    build_block_graphs, BlockGraph, InstKind, Instruction, IrFunction, IrModule, Operand,
};
use crate::op::{Op, DEFAULT_WIDTH};

use super::kernel::Kernel;

/// One kernel embedding replaced by a hardware call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injected {
    pub kernel: u32,
    pub embedding: usize,
    pub function: usize,
    pub block: usize,
    /// Instruction indices (in the original block) replaced by the call.
    pub covered: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub module: IrModule,
    pub calls: Vec<Injected>,
    pub warnings: Vec<String>,
}

struct Candidate {
    kernel: usize,
    embedding: usize,
    function: usize,
    block: usize,
    covered: BTreeSet<usize>,
    /// Position of the call: the last covered instruction.
    at: usize,
    operands: Vec<Operand>,
    results: Vec<String>,
    lines: Vec<u32>,
}

fn plan(
    k: &Kernel,
    ki: usize,
    ei: usize,
    bg: &BlockGraph,
    f: &IrFunction,
) -> Result<Candidate, String> {
    let e = &k.embeddings[ei];
    let blk = &f.blocks[bg.block];
    let host = |pv: usize| -> Result<usize, String> {
        e.vmap
            .get(pv)
            .and_then(|&h| bg.vertex_inst.get(h).copied())
            .ok_or_else(|| "embedding does not match the block".to_string())
    };
    let mut covered = BTreeSet::new();
    let mut bypassed = Vec::new();
    for (pv, m) in k.vertex_map.iter().enumerate() {
        let ii = host(pv)?;
        match m {
            Some(_) => {
                covered.insert(ii);
            }
            None => {
                let op = k.pattern.vertices[pv].op;
                if op == Op::Sext {
                    return Err("sign extension inside the kernel".into());
                }
                if matches!(op, Op::Zext | Op::Trunc) {
                    bypassed.push(ii);
                }
            }
        }
    }
    if covered.is_empty() {
        return Err("nothing to replace".into());
    }

    let mut uses: HashMap<&str, Vec<(usize, Option<usize>)>> = HashMap::new();
    for (b, bb) in f.blocks.iter().enumerate() {
        for (ii, inst) in bb.instructions.iter().enumerate() {
            for o in &inst.operands {
                if let Operand::Value(v) = o {
                    uses.entry(v).or_default().push((b, Some(ii)));
                }
            }
        }
        if let Some(Operand::Value(v)) = bb.terminator.operand() {
            uses.entry(v).or_default().push((b, None));
        }
    }
    let used_only_by = |name: &str, set: &BTreeSet<usize>| {
        uses.get(name).is_none_or(|u| {
            u.iter()
                .all(|&(b, i)| b == bg.block && i.is_some_and(|i| set.contains(&i)))
        })
    };
    // Casts whose value never leaves the kernel disappear with it.
    for &ii in &bypassed {
        if let Some(r) = blk.instructions[ii].result() {
            if used_only_by(r, &covered) {
                covered.insert(ii);
            }
        }
    }

    let mut results = Vec::new();
    for o in &k.dfg.outputs {
        let ii = host(k.pattern_vertex(o.src))?;
        let r = blk.instructions[ii]
            .results
            .get(o.src_out as usize)
            .ok_or_else(|| "kernel output without a result".to_string())?;
        results.push(r.clone());
    }
    for &ii in &covered {
        if let Some(r) = blk.instructions[ii].result() {
            if !results.iter().any(|x| x == r) && !used_only_by(r, &covered) {
                return Err(format!("interior value `{r}` is used outside the kernel"));
            }
        }
    }

    let at = *covered.iter().next_back().unwrap();
    let defined_at: HashMap<&str, usize> = blk
        .instructions
        .iter()
        .enumerate()
        .flat_map(|(ii, inst)| inst.results.iter().map(move |r| (r.as_str(), ii)))
        .collect();
    for r in &results {
        if let Some(u) = uses.get(r.as_str()) {
            if u.iter()
                .any(|&(b, i)| b == bg.block && i.is_some_and(|i| i < at && !covered.contains(&i)))
            {
                return Err(format!("`{r}` is used before the kernel completes"));
            }
        }
    }

    let mut operands = Vec::new();
    for i in &k.dfg.inputs {
        let mut ii = host(k.pattern_vertex(i.dst))?;
        let mut o = blk.instructions[ii]
            .operands
            .get(i.port as usize)
            .cloned()
            .ok_or_else(|| "kernel input without an operand".to_string())?;
        while let Operand::Value(v) = &o {
            match defined_at.get(v.as_str()) {
                Some(&d) if covered.contains(&d) => {
                    if !matches!(blk.instructions[d].op(), Some(Op::Zext | Op::Trunc)) {
                        return Err(format!("input `{v}` is computed inside the kernel"));
                    }
                    ii = d;
                    o = blk.instructions[ii].operands[0].clone();
                }
                Some(&d) if d > at => {
                    return Err(format!("input `{v}` is defined after the kernel"))
                }
                _ => break,
            }
        }
        operands.push(o);
    }

    let mut lines = Vec::new();
    for &ii in &covered {
        for &l in &blk.instructions[ii].lines {
            if !lines.contains(&l) {
                lines.push(l);
            }
        }
    }
    Ok(Candidate {
        kernel: ki,
        embedding: ei,
        function: bg.function,
        block: bg.block,
        covered,
        at,
        operands,
        results,
        lines,
    })
}

/// Replaces kernel embeddings by `hwcall` instructions.
///
/// Embeddings are taken greedily, larger kernels first and then earlier
/// program position; an embedding overlapping one already taken, or
/// whose replacement would break a use of an interior value, is skipped
/// with a warning. The call reads the kernel inputs in declared order,
/// defines the kernel outputs under their original names and keeps the
/// `!line` annotations of the instructions it replaces.
pub fn inject_hwcalls_traced(module: &IrModule, kernels: &[Kernel]) -> Injection {
    let bgs = build_block_graphs(module);
    let mut warnings = Vec::new();
    let mut cands = Vec::new();
    for (ki, k) in kernels.iter().enumerate() {
        for ei in 0..k.embeddings.len() {
            let Some(bg) = bgs.get(k.embeddings[ei].graph_index) else {
                warnings.push(format!("kernel {} embedding {ei}: no such block", k.id));
                continue;
            };
            match plan(k, ki, ei, bg, &module.functions[bg.function]) {
                Ok(c) => cands.push(c),
                Err(why) => warnings.push(format!("kernel {} embedding {ei} skipped: {why}", k.id)),
            }
        }
    }
    cands.sort_by_key(|c| {
        let first = *c.covered.iter().next().unwrap();
        (
            Reverse(kernels[c.kernel].dfg.vertex_count()),
            c.function,
            c.block,
            first,
            c.kernel,
            c.embedding,
        )
    });

    let mut taken: HashSet<(usize, usize, usize)> = HashSet::new();
    let mut chosen: Vec<Candidate> = Vec::new();
    for c in cands {
        if c.covered
            .iter()
            .any(|&i| taken.contains(&(c.function, c.block, i)))
        {
            continue;
        }
        taken.extend(c.covered.iter().map(|&i| (c.function, c.block, i)));
        chosen.push(c);
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut out = module.clone();
    let mut calls = Vec::new();
    for c in &chosen {
        calls.push(Injected {
            kernel: kernels[c.kernel].id,
            embedding: c.embedding,
            function: c.function,
            block: c.block,
            covered: c.covered.iter().copied().collect(),
        });
    }
    for (fi, f) in out.functions.iter_mut().enumerate() {
        for (bi, blk) in f.blocks.iter_mut().enumerate() {
            let here: Vec<&Candidate> = chosen
                .iter()
                .filter(|c| c.function == fi && c.block == bi)
                .collect();
            if here.is_empty() {
                continue;
            }
            let old = std::mem::take(&mut blk.instructions);
            for (ii, inst) in old.into_iter().enumerate() {
                match here.iter().find(|c| c.covered.contains(&ii)) {
                    None => blk.instructions.push(inst),
                    Some(c) if c.at == ii => blk.instructions.push(Instruction {
                        results: c.results.clone(),
                        kind: InstKind::HwCall(kernels[c.kernel].id),
                        operands: c.operands.clone(),
                        phi_blocks: Vec::new(),
                        width: DEFAULT_WIDTH,
                        lines: c.lines.clone(),
                    }),
                    Some(_) => {}
                }
            }
        }
    }
    calls.sort_by_key(|c| (c.function, c.block, c.covered[0]));
    Injection {
        module: out,
        calls,
        warnings,
    }
}

pub fn inject_hwcalls(module: &IrModule, kernels: &[Kernel]) -> IrModule {
    inject_hwcalls_traced(module, kernels).module
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::MATMUL;
    use crate::ir::{build_cdfgs, parse_ir};
    use crate::miner::{mine_kernels, MiningConfig};
    use crate::op::Word;
    use crate::sim::{interpret_ir, Memory};

    #[test]
    fn no_kernels_leaves_module_alone() {
        let m = MATMUL.module().unwrap();
        assert_eq!(inject_hwcalls(&m, &[]), m);
    }

    #[test]
    fn matmul_body_becomes_one_call() {
        let m = MATMUL.module().unwrap();
        let ks = mine_kernels(&build_cdfgs(&m), &MiningConfig::default()).unwrap();
        let out = inject_hwcalls(&m, &ks);
        out.validate().unwrap();
        let body = out.functions[0]
            .blocks
            .iter()
            .find(|b| b.label == "body")
            .unwrap();
        let kinds: Vec<String> = body
            .instructions
            .iter()
            .map(|i| match i.kind {
                InstKind::HwCall(_) => "hwcall".to_string(),
                InstKind::Op(op) => op.to_string(),
            })
            .collect();
        assert_eq!(kinds, vec!["load", "load", "load", "hwcall", "store"]);
        let call = &body.instructions[3];
        assert_eq!(call.lines, vec![10]);
        assert_eq!(call.results, vec!["s".to_string()]);
    }

    #[test]
    fn two_disjoint_embeddings_give_two_calls() {
        let src = "fn f(a,b,c,d){ x: p = mul a, b; q = add p, c; r = mul c, d; s = add r, a; t = xor q, s; ret t }
                   fn g(a,b,c){ x: p = mul a, b; q = add p, c; ret q }";
        let m = parse_ir(src).unwrap();
        let ks = mine_kernels(&build_cdfgs(&m), &MiningConfig::default()).unwrap();
        assert_eq!(ks.len(), 1);
        let inj = inject_hwcalls_traced(&m, &ks);
        let f = &inj.module.functions[0].blocks[0];
        let calls = f
            .instructions
            .iter()
            .filter(|i| matches!(i.kind, InstKind::HwCall(0)))
            .count();
        assert_eq!(calls, 2);
        let kmap: HashMap<u32, crate::graph::Dfg> =
            ks.iter().map(|k| (k.id, k.dfg.clone())).collect();
        for s in 0..20u64 {
            let args: Vec<Word> = (0..4).map(|k| Word::new(s * 31 + k * 7 + 1, 32)).collect();
            let run = |m: &IrModule| {
                interpret_ir(m, "f", &args, &mut Memory::new(), &kmap, 1000)
                    .unwrap()
                    .ret
            };
            assert_eq!(run(&m), run(&inj.module));
        }
    }

    #[test]
    fn escaping_interior_value_is_skipped() {
        let src = "fn f(a,b,c){ x: p = mul a, b; q = add p, c; br y; y: r = add p, q; ret r }
                   fn g(a,b,c){ x: p = mul a, b; q = add p, c; ret q }";
        let m = parse_ir(src).unwrap();
        let ks = mine_kernels(&build_cdfgs(&m), &MiningConfig::default()).unwrap();
        let inj = inject_hwcalls_traced(&m, &ks);
        assert!(inj
            .warnings
            .iter()
            .any(|w| w.contains("interior value `p`")));
        assert_eq!(inj.calls.len(), 1);
        assert_eq!(inj.calls[0].function, 1);
    }
}
