//! Frequent connected subgraph search over a set of block graphs.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;

use crate::graph::{
    is_min_code, min_dfs_code, CodeGraph, Dfg, DfsCode, Dir, EdgeCode, EdgeLabel, Embedding,
};
use crate::op::OpLabel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiningConfig {
    pub min_support: usize,
    pub max_kernel_edges: usize,
    pub report_maximal_only: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            min_support: 2,
            max_kernel_edges: 64,
            report_maximal_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MiningError {
    #[error("min_support must be at least 1")]
    ZeroSupport,
    #[error("max_kernel_edges must be at least 1")]
    ZeroEdgeCap,
    #[error("graph set is empty")]
    NoGraphs,
}

/// A frequent connected pattern. `dfg` vertex ids are discovery indices of
/// the mined code; `code` is its minimum DFS code under opcode-table
/// collation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub dfg: Dfg,
    pub code: DfsCode,
    pub support: usize,
    pub embeddings: Vec<Embedding>,
}

/// Side information collected during one search.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MiningTrace {
    /// (parent support, child support) for every frequent child explored.
    pub parent_child_support: Vec<(usize, usize)>,
    /// Number of candidate codes rejected as non-minimal.
    pub non_minimal: usize,
    pub warnings: Vec<String>,
    /// Frequent patterns before the maximality filter.
    pub frequent: usize,
}

struct Tx {
    labels: Vec<u32>,
    edges: Vec<(usize, u16, usize, u16)>,
    adj: Vec<Vec<(usize, usize, EdgeLabel)>>,
    alive: Vec<bool>,
}

impl Tx {
    fn has_edges(&self) -> bool {
        self.alive.iter().any(|&a| a)
    }
}

#[derive(Clone)]
struct Proj {
    g: usize,
    vmap: Vec<usize>,
    edges: Vec<usize>,
}

fn support(projs: &[Proj]) -> usize {
    let mut gs: Vec<usize> = projs.iter().map(|p| p.g).collect();
    gs.sort_unstable();
    gs.dedup();
    gs.len()
}

struct Search<'a> {
    txs: Vec<Tx>,
    cfg: &'a MiningConfig,
    rank_label: Vec<OpLabel>,
    found: Vec<(DfsCode, Vec<Proj>)>,
    children: Vec<bool>,
    trace: MiningTrace,
    capped: bool,
}

fn el_triple(labels: &[u32], e: (usize, u16, usize, u16)) -> (u32, u16, u16, u32) {
    (labels[e.0], e.1, e.3, labels[e.2])
}

/// Runs the search and returns every frequent pattern (or only maximal
/// ones) in discovery order, together with the search trace.
pub fn mine_patterns(
    gs: &[Dfg],
    cfg: &MiningConfig,
) -> Result<(Vec<Pattern>, MiningTrace), MiningError> {
    if cfg.min_support == 0 {
        return Err(MiningError::ZeroSupport);
    }
    if cfg.max_kernel_edges == 0 {
        return Err(MiningError::ZeroEdgeCap);
    }
    if gs.is_empty() {
        return Err(MiningError::NoGraphs);
    }
    let ms = cfg.min_support;

    // Label and edge-triple frequencies, counted per transaction.
    let mut vfreq: HashMap<OpLabel, (usize, usize)> = HashMap::new();
    for g in gs {
        let distinct: HashSet<OpLabel> = g.vertices.iter().copied().collect();
        for l in distinct {
            vfreq.entry(l).or_default().0 += 1;
        }
        for &l in &g.vertices {
            vfreq.entry(l).or_default().1 += 1;
        }
    }
    let mut ranked: Vec<(OpLabel, (usize, usize))> =
        vfreq.into_iter().filter(|(_, (tx, _))| *tx >= ms).collect();
    ranked.sort_by(|a, b| {
        (b.1 .0, b.1 .1)
            .cmp(&(a.1 .0, a.1 .1))
            .then(a.0.collation_key().cmp(&b.0.collation_key()))
    });
    let rank_label: Vec<OpLabel> = ranked.iter().map(|r| r.0).collect();
    let rank: HashMap<OpLabel, u32> = rank_label
        .iter()
        .enumerate()
        .map(|(k, &l)| (l, k as u32))
        .collect();

    let mut txs: Vec<Tx> = gs
        .iter()
        .map(|g| {
            let labels = g
                .vertices
                .iter()
                .map(|l| rank.get(l).copied().unwrap_or(u32::MAX))
                .collect();
            let edges: Vec<_> = g
                .edges
                .iter()
                .map(|e| (e.src, e.src_out, e.dst, e.port))
                .collect();
            Tx {
                labels,
                alive: vec![true; edges.len()],
                edges,
                adj: Vec::new(),
            }
        })
        .collect();
    let mut efreq: HashMap<(u32, u16, u16, u32), usize> = HashMap::new();
    for t in &txs {
        let distinct: HashSet<_> = t
            .edges
            .iter()
            .map(|&e| el_triple(&t.labels, e))
            .filter(|tr| tr.0 != u32::MAX && tr.3 != u32::MAX)
            .collect();
        for tr in distinct {
            *efreq.entry(tr).or_default() += 1;
        }
    }
    for t in &mut txs {
        let mut adj = vec![Vec::new(); t.labels.len()];
        for (id, &e) in t.edges.iter().enumerate() {
            let tr = el_triple(&t.labels, e);
            if tr.0 == u32::MAX || tr.3 == u32::MAX || efreq.get(&tr).copied().unwrap_or(0) < ms {
                t.alive[id] = false;
                continue;
            }
            let (s, out, d, port) = e;
            adj[s].push((
                id,
                d,
                EdgeLabel {
                    dir: Dir::Fwd,
                    port,
                    out,
                },
            ));
            adj[d].push((
                id,
                s,
                EdgeLabel {
                    dir: Dir::Rev,
                    port,
                    out,
                },
            ));
        }
        t.adj = adj;
    }

    let mut search = Search {
        txs,
        cfg,
        rank_label,
        found: Vec::new(),
        children: Vec::new(),
        trace: MiningTrace::default(),
        capped: false,
    };

    // Frequent one-edge codes in DFS lexicographic order.
    let mut s1: BTreeMap<EdgeCode, Vec<Proj>> = BTreeMap::new();
    for (gi, t) in search.txs.iter().enumerate() {
        for (id, &(s, out, d, port)) in t.edges.iter().enumerate() {
            if !t.alive[id] {
                continue;
            }
            for (a, b, dir) in [(s, d, Dir::Fwd), (d, s, Dir::Rev)] {
                let c = EdgeCode {
                    from: 0,
                    to: 1,
                    from_label: t.labels[a],
                    edge: EdgeLabel { dir, port, out },
                    to_label: t.labels[b],
                };
                if is_min_code(&DfsCode(vec![c])) {
                    s1.entry(c).or_default().push(Proj {
                        g: gi,
                        vmap: vec![a, b],
                        edges: vec![id],
                    });
                }
            }
        }
    }
    for (c, projs) in s1 {
        if support(&projs) < ms {
            continue;
        }
        let code = DfsCode(vec![c]);
        search.grow(code, projs);
        // Remove this edge kind from every transaction.
        for t in &mut search.txs {
            for id in 0..t.edges.len() {
                if t.alive[id] {
                    let (s, out, d, port) = t.edges[id];
                    let (ls, ld) = (t.labels[s], t.labels[d]);
                    let fwd = (
                        ls,
                        EdgeLabel {
                            dir: Dir::Fwd,
                            port,
                            out,
                        },
                        ld,
                    );
                    let rev = (
                        ld,
                        EdgeLabel {
                            dir: Dir::Rev,
                            port,
                            out,
                        },
                        ls,
                    );
                    if fwd == (c.from_label, c.edge, c.to_label)
                        || rev == (c.from_label, c.edge, c.to_label)
                    {
                        t.alive[id] = false;
                    }
                }
            }
        }
        if search.txs.iter().filter(|t| t.has_edges()).count() < ms {
            break;
        }
    }

    if search.capped {
        let msg = format!(
            "pattern growth stopped at the {}-edge cap",
            cfg.max_kernel_edges
        );
        warn!("{msg}");
        search.trace.warnings.push(msg);
    }
    search.trace.frequent = search.found.len();
    let patterns = search.finish(gs);
    Ok((patterns, search.trace))
}

impl Search<'_> {
    fn grow(&mut self, code: DfsCode, projs: Vec<Proj>) {
        let idx = self.found.len();
        let sup = support(&projs);
        self.found.push((code.clone(), Vec::new()));
        self.children.push(false);
        if code.len() >= self.cfg.max_kernel_edges {
            self.capped = true;
            self.found[idx].1 = projs;
            return;
        }
        let exts = self.extensions(&code, &projs);
        self.found[idx].1 = projs;
        for (e, child_projs) in exts {
            let child_sup = support(&child_projs);
            if child_sup < self.cfg.min_support {
                continue;
            }
            let mut child = code.clone();
            child.0.push(e);
            if !is_min_code(&child) {
                self.trace.non_minimal += 1;
                continue;
            }
            self.trace.parent_child_support.push((sup, child_sup));
            self.children[idx] = true;
            self.grow(child, child_projs);
        }
    }

    /// Rightmost-path extensions of every projection, grouped by code.
    fn extensions(&self, code: &DfsCode, projs: &[Proj]) -> BTreeMap<EdgeCode, Vec<Proj>> {
        let rmp = code.rightmost_path();
        let labels = code.vertex_labels();
        let r = *rmp.last().unwrap() as usize;
        let next = code.vertex_count() as u32;
        let mut out: BTreeMap<EdgeCode, Vec<Proj>> = BTreeMap::new();
        for p in projs {
            let t = &self.txs[p.g];
            let inv = |h: usize| p.vmap.iter().position(|&x| x == h);
            // Backward edges from the rightmost vertex to the rightmost path.
            for &(e, w, el) in &t.adj[p.vmap[r]] {
                if !t.alive[e] || p.edges.contains(&e) {
                    continue;
                }
                if let Some(j) = inv(w) {
                    if j != r && rmp.contains(&(j as u32)) {
                        let c = EdgeCode {
                            from: r as u32,
                            to: j as u32,
                            from_label: labels[r],
                            edge: el,
                            to_label: labels[j],
                        };
                        let mut np = p.clone();
                        np.edges.push(e);
                        out.entry(c).or_default().push(np);
                    }
                }
            }
            // Forward edges from any rightmost-path vertex to a new vertex.
            for &i in &rmp {
                let i = i as usize;
                for &(e, w, el) in &t.adj[p.vmap[i]] {
                    if !t.alive[e] || t.labels[w] == u32::MAX || inv(w).is_some() {
                        continue;
                    }
                    let c = EdgeCode {
                        from: i as u32,
                        to: next,
                        from_label: labels[i],
                        edge: el,
                        to_label: t.labels[w],
                    };
                    let mut np = p.clone();
                    np.vmap.push(w);
                    np.edges.push(e);
                    out.entry(c).or_default().push(np);
                }
            }
        }
        for v in out.values_mut() {
            v.sort_by(|a, b| (a.g, &a.vmap, &a.edges).cmp(&(b.g, &b.vmap, &b.edges)));
            v.dedup_by(|a, b| a.g == b.g && a.vmap == b.vmap && a.edges == b.edges);
        }
        out
    }

    fn to_dfg(&self, code: &DfsCode) -> Dfg {
        let cg = CodeGraph::from_code(code);
        let mut g = Dfg::new();
        for &l in &cg.labels {
            g.add_vertex(self.rank_label[l as usize]);
        }
        for &(s, out, d, port) in &cg.edges {
            g.edges.push(crate::graph::Edge {
                src: s,
                src_out: out,
                dst: d,
                port,
            });
        }
        g
    }

    fn finish(&mut self, gs: &[Dfg]) -> Vec<Pattern> {
        let mut patterns: Vec<Pattern> = Vec::with_capacity(self.found.len());
        for (code, projs) in &self.found {
            let dfg = self.to_dfg(code);
            let mut embeddings: Vec<Embedding> = projs
                .iter()
                .map(|p| Embedding {
                    graph_index: p.g,
                    vmap: p.vmap.clone(),
                })
                .collect();
            embeddings.sort();
            embeddings.dedup();
            let canon = min_dfs_code(&dfg).expect("patterns are connected with at least one edge");
            patterns.push(Pattern {
                dfg,
                code: canon,
                support: support(projs),
                embeddings,
            });
        }
        if !self.cfg.report_maximal_only {
            return patterns;
        }
        let codes: HashSet<&DfsCode> = patterns.iter().map(|p| &p.code).collect();
        let keep: Vec<bool> = patterns
            .iter()
            .zip(&self.children)
            .map(|(p, &has_child)| !has_child && !has_frequent_extension(p, gs, &codes))
            .collect();
        patterns
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(p, _)| p)
            .collect()
    }
}

/// True when adding one host edge to some embedding of `p` yields a
/// pattern whose code is in `frequent`.
fn has_frequent_extension(p: &Pattern, gs: &[Dfg], frequent: &HashSet<&DfsCode>) -> bool {
    for emb in &p.embeddings {
        let host = &gs[emb.graph_index];
        let mut used: HashSet<(usize, u16, usize, u16)> = HashSet::new();
        for e in &p.dfg.edges {
            used.insert((emb.vmap[e.src], e.src_out, emb.vmap[e.dst], e.port));
        }
        for he in &host.edges {
            if used.contains(&(he.src, he.src_out, he.dst, he.port)) {
                continue;
            }
            let si = emb.vmap.iter().position(|&x| x == he.src);
            let di = emb.vmap.iter().position(|&x| x == he.dst);
            let mut g = p.dfg.clone();
            let (s, d) = match (si, di) {
                (None, None) => continue,
                (Some(s), Some(d)) => (s, d),
                (Some(s), None) => (s, g.add_vertex(host.vertices[he.dst])),
                (None, Some(d)) => (g.add_vertex(host.vertices[he.src]), d),
            };
            g.edges.push(crate::graph::Edge {
                src: s,
                src_out: he.src_out,
                dst: d,
                port: he.port,
            });
            let code = min_dfs_code(&g).expect("extension stays connected");
            if frequent.contains(&code) {
                return true;
            }
        }
    }
    false
}
