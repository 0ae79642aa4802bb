use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::graph::{Dfg, Edge, ExtInput, ExtOutput, InputTag};
use crate::ir::{
    build_block_graphs, value_widths, BlockGraph, IrFunction, IrModule, Operand, Terminator,
};
use crate::op::{Op, OpLabel};

use super::kernel::Kernel;

/// Block whose terminator drives a demux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermRef {
    pub function: usize,
    pub block: usize,
}

/// Kernels joined across basic blocks, or a single kernel passed through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedKernel {
    pub id: u32,
    pub kernel_ids: Vec<u32>,
    /// Kernel instances joined, as (kernel id, embedding index).
    pub instances: Vec<(u32, usize)>,
    /// Interface inputs carry the IR value (or literal) they read;
    /// outputs are tagged with the IR value they produce.
    pub dfg: Dfg,
    pub condition_sources: Vec<TermRef>,
}

impl MergedKernel {
    /// Passes a kernel through unchanged.
    pub fn wrap(k: &Kernel) -> Self {
        MergedKernel {
            id: k.id,
            kernel_ids: vec![k.id],
            instances: Vec::new(),
            dfg: k.dfg.clone(),
            condition_sources: Vec::new(),
        }
    }

    pub fn is_merged(&self) -> bool {
        !self.instances.is_empty()
    }

    pub fn demux_count(&self) -> usize {
        self.dfg.count_op(|o| o == Op::Demux)
    }

    pub fn register_count(&self) -> usize {
        self.dfg.count_op(|o| matches!(o, Op::Reg(_)))
    }
}

/// Placement of one kernel embedding in the module.
struct Instance<'a> {
    kernel: &'a Kernel,
    emb: usize,
    function: usize,
    block: usize,
    /// IR operand read by each kernel input, with its use site.
    reads: Vec<(Operand, Site)>,
    /// IR value written by each kernel output.
    writes: Vec<Option<String>>,
}

/// An operand slot: instruction index and port, or the terminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Site {
    block: usize,
    inst: Option<usize>,
    port: u16,
}

fn locate<'a>(k: &'a Kernel, emb: usize, bg: &BlockGraph, f: &IrFunction) -> Option<Instance<'a>> {
    let e = &k.embeddings[emb];
    let blk = &f.blocks[bg.block];
    let host = |pv: usize| -> Option<usize> {
        let pattern_vertex = k.pattern_vertex(pv);
        let h = *e.vmap.get(pattern_vertex)?;
        bg.vertex_inst.get(h).copied()
    };
    let mut reads = Vec::new();
    for i in &k.dfg.inputs {
        let ii = host(i.dst)?;
        let o = blk.instructions[ii].operands.get(i.port as usize)?.clone();
        reads.push((
            o,
            Site {
                block: bg.block,
                inst: Some(ii),
                port: i.port,
            },
        ));
    }
    let mut writes = Vec::new();
    for o in &k.dfg.outputs {
        let ii = host(o.src)?;
        writes.push(
            blk.instructions[ii]
                .results
                .get(o.src_out as usize)
                .cloned(),
        );
    }
    Some(Instance {
        kernel: k,
        emb,
        function: bg.function,
        block: bg.block,
        reads,
        writes,
    })
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut x = x;
    while parent[x] != r {
        let next = parent[x];
        parent[x] = r;
        x = next;
    }
    r
}

/// A cross-block value flow between two instances.
#[derive(Debug, Clone, Copy)]
struct Flow {
    from: usize,
    out: usize,
    to: usize,
    input: usize,
}

/// [`merge_kernels`], also returning the diagnostics it emitted.
pub fn merge_kernels_with_diagnostics(
    kernels: &[Kernel],
    module: &IrModule,
) -> (Vec<MergedKernel>, Vec<String>) {
    let mut diagnostics = Vec::new();
    let bgs = build_block_graphs(module);
    let mut insts: Vec<Instance> = Vec::new();
    for k in kernels {
        for emb in 0..k.embeddings.len() {
            let located = bgs
                .get(k.embeddings[emb].graph_index)
                .and_then(|bg| locate(k, emb, bg, &module.functions[bg.function]));
            match located {
                Some(i) => insts.push(i),
                None => diagnostics.push(format!(
                    "kernel {} embedding {emb} does not match the module",
                    k.id
                )),
            }
        }
    }

    // Producer of every value written by some instance (first one wins).
    let mut producer: HashMap<(usize, &str), (usize, usize)> = HashMap::new();
    for (n, inst) in insts.iter().enumerate() {
        for (o, w) in inst.writes.iter().enumerate() {
            if let Some(w) = w {
                producer
                    .entry((inst.function, w.as_str()))
                    .or_insert((n, o));
            }
        }
    }
    let flows: Vec<Flow> = insts
        .iter()
        .enumerate()
        .flat_map(|(to, inst)| {
            let producer = &producer;
            let insts = &insts;
            inst.reads
                .iter()
                .enumerate()
                .filter_map(move |(input, (o, _))| match o {
                    Operand::Value(v) => {
                        let &(from, out) = producer.get(&(inst.function, v.as_str()))?;
                        (insts[from].block != inst.block).then_some(Flow {
                            from,
                            out,
                            to,
                            input,
                        })
                    }
                    Operand::Int(_) => None,
                })
        })
        .collect();

    // Condition of the branch a flow passes through, if any.
    let branch_of = |fl: &Flow| -> Option<(&Operand, bool)> {
        let a = &insts[fl.from];
        let f = &module.functions[a.function];
        match &f.blocks[a.block].terminator {
            Terminator::CondBr(c, t, e) => {
                let target = &f.blocks[insts[fl.to].block].label;
                if target == t {
                    Some((c, true))
                } else if target == e {
                    Some((c, false))
                } else {
                    None
                }
            }
            _ => None,
        }
    };
    let cond_producer = |fl: &Flow| -> Option<(usize, usize)> {
        match branch_of(fl)?.0 {
            Operand::Value(c) => {
                let p = *producer.get(&(insts[fl.from].function, c.as_str()))?;
                (insts[p.0].block == insts[fl.from].block).then_some(p)
            }
            Operand::Int(_) => None,
        }
    };

    let mut parent: Vec<usize> = (0..insts.len()).collect();
    for fl in &flows {
        let (a, b) = (find(&mut parent, fl.from), find(&mut parent, fl.to));
        parent[a] = b;
        if let Some((p, _)) = cond_producer(fl) {
            let (a, b) = (find(&mut parent, p), find(&mut parent, fl.to));
            parent[a] = b;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for fl in &flows {
        let r = find(&mut parent, fl.from);
        groups.entry(r).or_default();
    }
    for n in 0..insts.len() {
        let r = find(&mut parent, n);
        if let Some(g) = groups.get_mut(&r) {
            g.push(n);
        }
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.sort();

    let mut next_id = kernels.iter().map(|k| k.id + 1).max().unwrap_or(0);
    let mut merged = Vec::new();
    let mut absorbed = vec![false; insts.len()];
    for members in groups {
        let group_flows: Vec<Flow> = flows
            .iter()
            .filter(|f| members.contains(&f.to))
            .copied()
            .collect();
        let mut deps: Vec<(usize, usize)> = group_flows.iter().map(|f| (f.from, f.to)).collect();
        deps.extend(
            group_flows
                .iter()
                .filter_map(|f| cond_producer(f).map(|(p, _)| (p, f.to))),
        );
        if has_cycle(&members, &deps) {
            let msg = format!(
                "kernel instances {:?} depend on each other cyclically; not merged",
                members
                    .iter()
                    .map(|&n| (insts[n].kernel.id, insts[n].emb))
                    .collect::<Vec<_>>()
            );
            log::warn!("{msg}");
            diagnostics.push(msg);
            continue;
        }
        let func = &module.functions[insts[members[0]].function];
        let widths = value_widths(func);
        let mk = build_merged(
            next_id,
            &members,
            &insts,
            &group_flows,
            func,
            &widths,
            &branch_of,
            &cond_producer,
        );
        next_id += 1;
        for &n in &members {
            absorbed[n] = true;
        }
        merged.push(mk);
    }

    for k in kernels {
        let standalone = k.embeddings.is_empty()
            || insts
                .iter()
                .enumerate()
                .any(|(n, i)| std::ptr::eq(i.kernel, k) && !absorbed[n]);
        if standalone {
            merged.push(MergedKernel::wrap(k));
        }
    }
    (merged, diagnostics)
}

/// Joins kernels whose instances exchange values across basic blocks.
///
/// Every cross-block value passes through a one-cycle register; values
/// entering a successor of a conditional branch additionally pass a demux
/// driven by the branch condition. Kernels with an instance outside every
/// merged group are also returned unchanged. Cyclic groups are left
/// unmerged with a warning.
pub fn merge_kernels(kernels: &[Kernel], module: &IrModule) -> Vec<MergedKernel> {
    merge_kernels_with_diagnostics(kernels, module).0
}

fn has_cycle(members: &[usize], deps: &[(usize, usize)]) -> bool {
    let mut indeg: HashMap<usize, usize> = members.iter().map(|&m| (m, 0)).collect();
    let deps: BTreeSet<(usize, usize)> = deps.iter().copied().filter(|(a, b)| a != b).collect();
    for &(_, b) in &deps {
        *indeg.get_mut(&b).unwrap() += 1;
    }
    let mut ready: Vec<usize> = members.iter().copied().filter(|m| indeg[m] == 0).collect();
    let mut seen = 0;
    while let Some(n) = ready.pop() {
        seen += 1;
        for &(_, b) in deps.iter().filter(|(a, _)| *a == n) {
            let d = indeg.get_mut(&b).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(b);
            }
        }
    }
    seen < members.len()
}

#[allow(clippy::too_many_arguments)]
fn build_merged<'a>(
    id: u32,
    members: &[usize],
    insts: &[Instance],
    flows: &[Flow],
    func: &IrFunction,
    widths: &HashMap<&str, u8>,
    branch_of: &dyn Fn(&Flow) -> Option<(&'a Operand, bool)>,
    cond_producer: &dyn Fn(&Flow) -> Option<(usize, usize)>,
) -> MergedKernel {
    let mut g = Dfg::new();
    let mut base: HashMap<usize, usize> = HashMap::new();
    for &n in members {
        let k = &insts[n].kernel.dfg;
        let off = g.vertex_count();
        base.insert(n, off);
        for &l in &k.vertices {
            g.add_vertex(l);
        }
        for e in &k.edges {
            g.edges.push(Edge {
                src: e.src + off,
                dst: e.dst + off,
                ..*e
            });
        }
    }
    let out_pin = |n: usize, o: usize| {
        let out = &insts[n].kernel.dfg.outputs[o];
        (base[&n] + out.src, out.src_out)
    };
    let in_pin = |n: usize, i: usize| {
        let inp = &insts[n].kernel.dfg.inputs[i];
        (base[&n] + inp.dst, inp.port)
    };

    let mut covered: BTreeSet<Site> = BTreeSet::new();
    let mut fed: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut regs: HashMap<(usize, usize), usize> = HashMap::new();
    // (source block, width) -> demux vertex; (demux, register) -> data port
    let mut demuxes: BTreeMap<(usize, u8), usize> = BTreeMap::new();
    let mut demux_ports: HashMap<(usize, usize), u16> = HashMap::new();
    let mut conditions = BTreeSet::new();
    for fl in flows {
        let a = &insts[fl.from];
        let (src, src_out) = out_pin(fl.from, fl.out);
        let width = a.writes[fl.out]
            .as_deref()
            .and_then(|v| widths.get(v).copied())
            .unwrap_or(32);
        let reg = *regs.entry((fl.from, fl.out)).or_insert_with(|| {
            let r = g.add_vertex(OpLabel::new(Op::Reg(1), width));
            g.edges.push(Edge {
                src,
                src_out,
                dst: r,
                port: 0,
            });
            r
        });
        let (dst, port) = in_pin(fl.to, fl.input);
        covered.insert(insts[fl.to].reads[fl.input].1);
        fed.insert((fl.to, fl.input));
        match branch_of(fl) {
            None => g.edges.push(Edge {
                src: reg,
                src_out: 0,
                dst,
                port,
            }),
            Some((cond, taken)) => {
                let dm = match demuxes.get(&(a.block, width)) {
                    Some(&d) => d,
                    None => {
                        let d = g.add_vertex(OpLabel::new(Op::Demux, width));
                        demuxes.insert((a.block, width), d);
                        conditions.insert(TermRef {
                            function: a.function,
                            block: a.block,
                        });
                        covered.insert(Site {
                            block: a.block,
                            inst: None,
                            port: 0,
                        });
                        match cond_producer(fl) {
                            Some((p, o)) => {
                                let (csrc, cout) = out_pin(p, o);
                                g.edges.push(Edge {
                                    src: csrc,
                                    src_out: cout,
                                    dst: d,
                                    port: 0,
                                });
                            }
                            None => g.inputs.push(ExtInput {
                                dst: d,
                                port: 0,
                                width: 1,
                                tag: tag_of(cond),
                            }),
                        }
                        d
                    }
                };
                let next_port = 1 + demux_ports.keys().filter(|(d, _)| *d == dm).count() as u16;
                let data = *demux_ports.entry((dm, reg)).or_insert_with(|| {
                    g.edges.push(Edge {
                        src: reg,
                        src_out: 0,
                        dst: dm,
                        port: next_port,
                    });
                    next_port
                });
                let out = 2 * (data - 1) + if taken { 0 } else { 1 };
                g.edges.push(Edge {
                    src: dm,
                    src_out: out,
                    dst,
                    port,
                });
            }
        }
    }

    for &n in members {
        let inst = &insts[n];
        for (i, (o, _)) in inst.reads.iter().enumerate() {
            if fed.contains(&(n, i)) {
                continue;
            }
            let (dst, port) = in_pin(n, i);
            let width = inst.kernel.dfg.inputs[i].width;
            g.inputs.push(ExtInput {
                dst,
                port,
                width,
                tag: tag_of(o),
            });
        }
    }

    let uses = use_sites(func);
    for &n in members {
        for (o, w) in insts[n].writes.iter().enumerate() {
            let (src, src_out) = out_pin(n, o);
            if g.outputs
                .iter()
                .any(|x| x.src == src && x.src_out == src_out)
            {
                continue;
            }
            let keep = match w {
                Some(v) => uses.get(v.as_str()).is_none_or(|s| !s.is_subset(&covered)),
                None => true,
            };
            if keep {
                let tag = w.clone().unwrap_or_else(|| format!("v{src}"));
                g.outputs.push(ExtOutput { src, src_out, tag });
            }
        }
    }
    g.edges.sort_by_key(|e| (e.dst, e.port));
    g.inputs.sort_by_key(|i| (i.dst, i.port));
    g.outputs.sort_by_key(|o| (o.src, o.src_out));
    debug_assert!(g.validate().is_ok());

    let mut kernel_ids: Vec<u32> = members.iter().map(|&n| insts[n].kernel.id).collect();
    kernel_ids.sort_unstable();
    kernel_ids.dedup();
    MergedKernel {
        id,
        kernel_ids,
        instances: members
            .iter()
            .map(|&n| (insts[n].kernel.id, insts[n].emb))
            .collect(),
        dfg: g,
        condition_sources: conditions.into_iter().collect(),
    }
}

fn tag_of(o: &Operand) -> InputTag {
    match o {
        Operand::Value(v) => InputTag::Value(v.clone()),
        Operand::Int(c) => InputTag::Const(*c),
    }
}

/// Every operand slot reading each value.
fn use_sites(f: &IrFunction) -> HashMap<&str, BTreeSet<Site>> {
    let mut uses: HashMap<&str, BTreeSet<Site>> = HashMap::new();
    for (b, blk) in f.blocks.iter().enumerate() {
        for (ii, inst) in blk.instructions.iter().enumerate() {
            for (p, o) in inst.operands.iter().enumerate() {
                if let Operand::Value(v) = o {
                    uses.entry(v).or_default().insert(Site {
                        block: b,
                        inst: Some(ii),
                        port: p as u16,
                    });
                }
            }
        }
        if let Some(Operand::Value(v)) = blk.terminator.operand() {
            uses.entry(v).or_default().insert(Site {
                block: b,
                inst: None,
                port: 0,
            });
        }
    }
    uses
}
