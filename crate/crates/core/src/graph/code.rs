use std::cmp::{Ordering, Reverse};
use std::fmt;

use super::{Dfg, GraphError};
use crate::op::OpLabel;

/// Orientation of a traversed edge relative to dataflow: `Fwd` when the
/// traversal goes from the producer to the consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    Fwd,
    Rev,
}

/// Edge label as seen from the tail of a traversal step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeLabel {
    pub dir: Dir,
    pub port: u16,
    pub out: u16,
}

/// One DFS code entry `(i, j, l_i, l_e, l_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeCode {
    pub from: u32,
    pub to: u32,
    pub from_label: u32,
    pub edge: EdgeLabel,
    pub to_label: u32,
}

impl EdgeCode {
    pub fn is_forward(&self) -> bool {
        self.to > self.from
    }

    // Backward edges sort before forward ones; among backward edges the
    // smaller target wins, among forward edges the deeper source wins.
    fn structure_key(&self) -> (u8, u32, Reverse<u32>, u32) {
        if self.is_forward() {
            (1, self.to, Reverse(self.from), 0)
        } else {
            (0, self.from, Reverse(0), self.to)
        }
    }
}

impl Ord for EdgeCode {
    fn cmp(&self, other: &Self) -> Ordering {
        self.structure_key()
            .cmp(&other.structure_key())
            .then(self.from_label.cmp(&other.from_label))
            .then(self.edge.cmp(&other.edge))
            .then(self.to_label.cmp(&other.to_label))
    }
}

impl PartialOrd for EdgeCode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EdgeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.edge.dir {
            Dir::Fwd => "f",
            Dir::Rev => "r",
        };
        write!(
            f,
            "({},{},{},{}{}",
            self.from, self.to, self.from_label, d, self.edge.port
        )?;
        if self.edge.out != 0 {
            write!(f, ".{}", self.edge.out)?;
        }
        write!(f, ",{})", self.to_label)
    }
}

/// A DFS code. The derived order is the DFS lexicographic order: entries
/// compared pairwise, a strict prefix sorting first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DfsCode(pub Vec<EdgeCode>);

impl DfsCode {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.0
            .iter()
            .map(|c| c.from.max(c.to) as usize + 1)
            .max()
            .unwrap_or(0)
    }

    /// Vertex labels by discovery index.
    pub fn vertex_labels(&self) -> Vec<u32> {
        let mut labels = vec![0; self.vertex_count()];
        for c in &self.0 {
            labels[c.from as usize] = c.from_label;
            labels[c.to as usize] = c.to_label;
        }
        labels
    }

    /// Discovery indices on the path from the root to the rightmost vertex.
    pub fn rightmost_path(&self) -> Vec<u32> {
        let n = self.vertex_count();
        if n == 0 {
            return Vec::new();
        }
        let mut parent = vec![None; n];
        for c in &self.0 {
            if c.is_forward() {
                parent[c.to as usize] = Some(c.from);
            }
        }
        let mut path = vec![n as u32 - 1];
        while let Some(p) = parent[*path.last().unwrap() as usize] {
            path.push(p);
        }
        path.reverse();
        path
    }
}

impl fmt::Display for DfsCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Total order on DFS codes.
pub fn code_less(a: &DfsCode, b: &DfsCode) -> Ordering {
    a.cmp(b)
}

/// Integer-labeled view of a graph with undirected adjacency, the input
/// of all code computations.
#[derive(Debug, Clone)]
pub struct CodeGraph {
    pub labels: Vec<u32>,
    /// (src, src_out, dst, port)
    pub edges: Vec<(usize, u16, usize, u16)>,
    adj: Vec<Vec<(usize, usize, EdgeLabel)>>,
}

impl CodeGraph {
    pub fn new(labels: Vec<u32>, edges: Vec<(usize, u16, usize, u16)>) -> Self {
        let mut adj = vec![Vec::new(); labels.len()];
        for (id, &(s, out, d, port)) in edges.iter().enumerate() {
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
        CodeGraph { labels, edges, adj }
    }

    pub fn from_dfg(g: &Dfg, label: impl Fn(OpLabel) -> u32) -> Self {
        CodeGraph::new(
            g.vertices.iter().map(|&l| label(l)).collect(),
            g.edges
                .iter()
                .map(|e| (e.src, e.src_out, e.dst, e.port))
                .collect(),
        )
    }

    /// Rebuilds the graph a code describes; vertex ids are discovery indices.
    pub fn from_code(code: &DfsCode) -> Self {
        let labels = code.vertex_labels();
        let edges = code
            .0
            .iter()
            .map(|c| {
                let (s, d) = match c.edge.dir {
                    Dir::Fwd => (c.from, c.to),
                    Dir::Rev => (c.to, c.from),
                };
                (s as usize, c.edge.out, d as usize, c.edge.port)
            })
            .collect();
        CodeGraph::new(labels, edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize, EdgeLabel)] {
        &self.adj[v]
    }

    fn is_connected(&self) -> bool {
        let n = self.labels.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(_, w, _) in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn check_codeable(&self) -> Result<(), GraphError> {
        if self.edges.is_empty() {
            Err(GraphError::Edgeless)
        } else if !self.is_connected() {
            Err(GraphError::Disconnected)
        } else {
            Ok(())
        }
    }

    /// Minimum DFS code via best-first extension of all traversals that
    /// share the current minimum prefix.
    pub fn min_code(&self) -> Result<DfsCode, GraphError> {
        self.check_codeable()?;
        Ok(search_min(self, None).expect("unbounded search always completes"))
    }

    /// All DFS codes of this graph (exponential; test use only).
    pub fn all_codes(&self) -> Result<Vec<DfsCode>, GraphError> {
        self.check_codeable()?;
        let mut out = Vec::new();
        for r in 0..self.vertex_count() {
            enumerate(self, Walk::rooted(self, r), &mut out);
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Partial depth-first traversal.
#[derive(Debug, Clone)]
struct Walk {
    disc: Vec<Option<u32>>,
    order: Vec<usize>,
    used: Vec<bool>,
    stack: Vec<usize>,
    last_child: Vec<Option<(EdgeLabel, u32)>>,
    code: Vec<EdgeCode>,
}

struct Move {
    edge: usize,
    from: usize,
    to: usize,
    code: EdgeCode,
}

impl Walk {
    fn rooted(g: &CodeGraph, root: usize) -> Self {
        let n = g.vertex_count();
        let mut disc = vec![None; n];
        disc[root] = Some(0);
        Walk {
            disc,
            order: vec![root],
            used: vec![false; g.edges.len()],
            stack: vec![root],
            last_child: vec![None; n],
            code: Vec::new(),
        }
    }

    fn complete(&self) -> bool {
        self.code.len() == self.used.len()
    }

    /// Legal next steps of a true depth-first traversal: pending backward
    /// edges of the newest vertex first (in target order), then forward
    /// edges of the deepest vertex that still has undiscovered neighbors,
    /// visiting siblings in non-decreasing (edge label, label) order.
    fn moves(&mut self, g: &CodeGraph) -> Vec<Move> {
        let v = *self.order.last().unwrap();
        let vi = self.disc[v].unwrap();
        let mut back: Option<Move> = None;
        for &(e, w, el) in g.neighbors(v) {
            if self.used[e] {
                continue;
            }
            if let Some(wi) = self.disc[w] {
                let code = EdgeCode {
                    from: vi,
                    to: wi,
                    from_label: g.labels[v],
                    edge: el,
                    to_label: g.labels[w],
                };
                if back.as_ref().is_none_or(|b| code < b.code) {
                    back = Some(Move {
                        edge: e,
                        from: v,
                        to: w,
                        code,
                    });
                }
            }
        }
        if let Some(b) = back {
            return vec![b];
        }
        while let Some(&u) = self.stack.last() {
            let pending: Vec<_> = g
                .neighbors(u)
                .iter()
                .filter(|&&(e, w, _)| !self.used[e] && self.disc[w].is_none())
                .copied()
                .collect();
            if pending.is_empty() {
                self.stack.pop();
                continue;
            }
            let ui = self.disc[u].unwrap();
            let next = self.order.len() as u32;
            return pending
                .into_iter()
                .filter(|&(_, w, el)| self.last_child[u].is_none_or(|lc| (el, g.labels[w]) >= lc))
                .map(|(e, w, el)| Move {
                    edge: e,
                    from: u,
                    to: w,
                    code: EdgeCode {
                        from: ui,
                        to: next,
                        from_label: g.labels[u],
                        edge: el,
                        to_label: g.labels[w],
                    },
                })
                .collect();
        }
        Vec::new()
    }

    fn apply(&self, g: &CodeGraph, m: &Move) -> Walk {
        let mut w = self.clone();
        w.used[m.edge] = true;
        w.code.push(m.code);
        if m.code.is_forward() {
            w.disc[m.to] = Some(m.code.to);
            w.order.push(m.to);
            w.last_child[m.from] = Some((m.code.edge, g.labels[m.to]));
            let pos = w.stack.iter().position(|&s| s == m.from).unwrap();
            w.stack.truncate(pos + 1);
            w.stack.push(m.to);
        }
        w
    }
}

fn enumerate(g: &CodeGraph, mut walk: Walk, out: &mut Vec<DfsCode>) {
    if walk.complete() {
        out.push(DfsCode(walk.code));
        return;
    }
    let moves = walk.moves(g);
    for m in &moves {
        enumerate(g, walk.apply(g, m), out);
    }
}

/// Greedy minimum search. With `target`, stops as soon as the minimum
/// departs from it and returns `None`.
fn search_min(g: &CodeGraph, target: Option<&DfsCode>) -> Option<DfsCode> {
    let min_label = *g.labels.iter().min()?;
    let mut states: Vec<Walk> = (0..g.vertex_count())
        .filter(|&r| g.labels[r] == min_label)
        .map(|r| Walk::rooted(g, r))
        .collect();
    let mut code = Vec::with_capacity(g.edges.len());
    while code.len() < g.edges.len() {
        let mut best: Option<EdgeCode> = None;
        let mut next: Vec<Walk> = Vec::new();
        for mut s in states {
            for m in s.moves(g) {
                match best.map(|b| m.code.cmp(&b)) {
                    Some(Ordering::Greater) => {}
                    Some(Ordering::Equal) => next.push(s.apply(g, &m)),
                    _ => {
                        best = Some(m.code);
                        next.clear();
                        next.push(s.apply(g, &m));
                    }
                }
            }
        }
        let best = best?;
        if let Some(t) = target {
            if t.0.get(code.len()) != Some(&best) {
                return None;
            }
        }
        code.push(best);
        next.sort_by(|a, b| a.order.cmp(&b.order));
        next.dedup_by(|a, b| a.order == b.order && a.used == b.used);
        states = next;
    }
    Some(DfsCode(code))
}

/// True when `code` is the minimum DFS code of the graph it describes.
pub fn is_min_code(code: &DfsCode) -> bool {
    if code.is_empty() {
        return true;
    }
    let g = CodeGraph::from_code(code);
    search_min(&g, Some(code)).is_some()
}

/// All DFS codes of a connected graph with at least one edge.
pub fn dfs_codes(g: &Dfg) -> Result<Vec<DfsCode>, GraphError> {
    g.code_graph().all_codes()
}

/// Minimum DFS code of a connected graph with at least one edge, labels
/// collated by opcode table order.
pub fn min_dfs_code(g: &Dfg) -> Result<DfsCode, GraphError> {
    g.code_graph().min_code()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentForm {
    /// Isolated vertex.
    Vertex(u32),
    Code(DfsCode),
}

/// Canonical form of an arbitrary graph: the sorted multiset of its
/// connected components' forms. An edgeless graph reduces to its sorted
/// vertex-label multiset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm(pub Vec<ComponentForm>);

pub fn canonical_form(g: &Dfg) -> CanonicalForm {
    let cg = g.code_graph();
    let mut forms = Vec::new();
    for comp in g.components() {
        if comp.len() == 1 {
            forms.push(ComponentForm::Vertex(cg.labels[comp[0]]));
            continue;
        }
        let mut index = vec![usize::MAX; cg.vertex_count()];
        for (k, &v) in comp.iter().enumerate() {
            index[v] = k;
        }
        let sub = CodeGraph::new(
            comp.iter().map(|&v| cg.labels[v]).collect(),
            cg.edges
                .iter()
                .filter(|e| index[e.0] != usize::MAX)
                .map(|&(s, o, d, p)| (index[s], o, index[d], p))
                .collect(),
        );
        forms.push(ComponentForm::Code(
            sub.min_code().expect("component is connected"),
        ));
    }
    forms.sort();
    CanonicalForm(forms)
}

pub fn is_isomorphic(g: &Dfg, h: &Dfg) -> bool {
    g.vertex_count() == h.vertex_count()
        && g.edge_count() == h.edge_count()
        && canonical_form(g) == canonical_form(h)
}
