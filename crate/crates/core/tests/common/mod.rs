#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use overlayforge::graph::oracle::oracle_isomorphic;
use overlayforge::graph::{Dfg, Edge, ExtInput, ExtOutput, InputTag};
use overlayforge::op::{OpLabel, Word};
use overlayforge::sim::Memory;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const LABELS: [&str; 3] = ["add", "mul", "sub"];

/// Random DAG: every operand port of every vertex is driven by an
/// earlier vertex with probability `p_edge`.
pub fn random_dag(rng: &mut ChaCha8Rng, max_vertices: usize, labels: usize, p_edge: f64) -> Dfg {
    let n = rng.gen_range(1..=max_vertices);
    let mut g = Dfg::new();
    for _ in 0..n {
        g.add_vertex(LABELS[rng.gen_range(0..labels)].parse().unwrap());
    }
    for v in 1..n {
        for port in 0..2u16 {
            if rng.gen_bool(p_edge) {
                let src = rng.gen_range(0..v);
                g.add_edge(src, v, port);
            }
        }
    }
    g
}

/// Random connected DAG with at least one edge.
pub fn random_connected(rng: &mut ChaCha8Rng, max_vertices: usize, labels: usize) -> Dfg {
    loop {
        let g = random_dag(rng, max_vertices, labels, 0.6);
        if g.edge_count() > 0 && g.components().len() == 1 {
            return g;
        }
    }
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

const KERNEL_OPS: [&str; 12] = [
    "add", "sub", "mul", "div", "and", "or", "xor", "shl", "shr", "icmp.slt", "icmp.eq", "select",
];

/// Random kernel-shaped graph: undriven ports become inputs and sinks
/// become outputs.
pub fn random_kernel(rng: &mut ChaCha8Rng, max_vertices: usize) -> Dfg {
    let n = rng.gen_range(1..=max_vertices);
    let mut g = Dfg::new();
    for _ in 0..n {
        let l: OpLabel = KERNEL_OPS[rng.gen_range(0..KERNEL_OPS.len())]
            .parse()
            .unwrap();
        g.add_vertex(l);
    }
    for v in 1..n {
        for port in 0..g.vertices[v].op.arity().unwrap() as u16 {
            let sink = g.vertices[v].port_width(port as usize);
            let srcs: Vec<usize> = (0..v)
                .filter(|&s| g.vertices[s].result_width() <= sink)
                .collect();
            if !srcs.is_empty() && rng.gen_bool(0.6) {
                let src = *srcs.choose(rng).unwrap();
                g.add_edge(src, v, port);
            }
        }
    }
    for v in 0..n {
        let l = g.vertices[v];
        for port in 0..l.op.arity().unwrap() as u16 {
            if !g.edges.iter().any(|e| e.dst == v && e.port == port) {
                g.inputs.push(ExtInput {
                    dst: v,
                    port,
                    width: l.port_width(port as usize),
                    tag: InputTag::Port,
                });
            }
        }
        if !g.edges.iter().any(|e| e.src == v) {
            g.outputs.push(ExtOutput {
                src: v,
                src_out: 0,
                tag: format!("v{v}"),
            });
        }
    }
    g.inputs.sort_by_key(|i| (i.dst, i.port));
    g
}

/// Random arguments and memory for a benchmark entry function. Arrays
/// live at fixed, disjoint word addresses.
pub fn bench_inputs(name: &str, rng: &mut ChaCha8Rng) -> (Vec<Word>, Memory) {
    let mut mem = Memory::new();
    let fill = |mem: &mut Memory, base: u64, len: u64, rng: &mut ChaCha8Rng| {
        let vals: Vec<u64> = (0..len).map(|_| rng.gen::<u32>() as u64).collect();
        mem.write_slice(base, &vals);
    };
    let w = |v: u64| Word::new(v, 32);
    let args = match name {
        "matmul" => {
            let n = rng.gen_range(0..=4u64);
            for base in [1000, 2000, 3000] {
                fill(&mut mem, base, n * n, rng);
            }
            vec![w(1000), w(2000), w(3000), w(n)]
        }
        "outer" => {
            let (m, n) = (rng.gen_range(0..=5u64), rng.gen_range(0..=5u64));
            fill(&mut mem, 1000, m, rng);
            fill(&mut mem, 2000, n, rng);
            vec![w(1000), w(2000), w(3000), w(m), w(n)]
        }
        "robert" | "smooth" => {
            let (cols, rows) = (rng.gen_range(0..=6u64), rng.gen_range(0..=6u64));
            fill(&mut mem, 1000, cols * rows, rng);
            vec![w(1000), w(5000), w(cols), w(rows)]
        }
        other => panic!("no input generator for {other}"),
    };
    (args, mem)
}

/// Subgraph of `g` made of the edges in `mask`, with vertices renumbered
/// in order of first appearance.
fn edge_subgraph(g: &Dfg, mask: u64) -> Dfg {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut sub = Dfg::new();
    for (k, e) in g.edges.iter().enumerate() {
        if mask >> k & 1 == 1 {
            for v in [e.src, e.dst] {
                ids.entry(v)
                    .or_insert_with(|| sub.add_vertex(g.vertices[v]));
            }
            sub.edges.push(Edge {
                src: ids[&e.src],
                dst: ids[&e.dst],
                ..*e
            });
        }
    }
    sub
}

/// All connected edge subsets of `g`, grown edge by edge from single
/// edges.
fn connected_subgraphs(g: &Dfg) -> Vec<Dfg> {
    assert!(g.edge_count() <= 64);
    let touches = |mask: u64, e: &Edge| {
        g.edges.iter().enumerate().any(|(k, f)| {
            mask >> k & 1 == 1 && [f.src, f.dst].iter().any(|v| *v == e.src || *v == e.dst)
        })
    };
    let mut seen: HashSet<u64> = HashSet::new();
    let mut frontier: Vec<u64> = (0..g.edge_count()).map(|k| 1u64 << k).collect();
    while let Some(mask) = frontier.pop() {
        if !seen.insert(mask) {
            continue;
        }
        for (k, e) in g.edges.iter().enumerate() {
            if mask >> k & 1 == 0 && touches(mask, e) {
                frontier.push(mask | 1 << k);
            }
        }
    }
    let mut masks: Vec<u64> = seen.into_iter().collect();
    masks.sort_unstable();
    masks.into_iter().map(|m| edge_subgraph(g, m)).collect()
}

/// Brute-force frequent connected patterns: every connected edge subset
/// of every graph, grouped into isomorphism classes by exhaustive
/// bijection search, with transaction support.
pub fn brute_force_frequent(gs: &[Dfg], min_support: usize) -> Vec<(Dfg, usize)> {
    type Key = (usize, usize, Vec<String>);
    let mut classes: HashMap<Key, Vec<(Dfg, HashSet<usize>)>> = HashMap::new();
    for (gi, g) in gs.iter().enumerate() {
        for sub in connected_subgraphs(g) {
            let mut labels: Vec<String> = sub.vertices.iter().map(|l| l.to_string()).collect();
            labels.sort();
            let bucket = classes
                .entry((sub.vertex_count(), sub.edge_count(), labels))
                .or_default();
            match bucket
                .iter_mut()
                .find(|(rep, _)| oracle_isomorphic(rep, &sub))
            {
                Some((_, txs)) => {
                    txs.insert(gi);
                }
                None => bucket.push((sub, HashSet::from([gi]))),
            }
        }
    }
    classes
        .into_values()
        .flatten()
        .filter(|(_, txs)| txs.len() >= min_support)
        .map(|(rep, txs)| (rep, txs.len()))
        .collect()
}
