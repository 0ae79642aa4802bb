//! Labeled dataflow multigraphs, DFS codes and canonical forms.

mod code;
mod format;
mod matcher;
pub mod oracle;

pub use code::{
    canonical_form, code_less, dfs_codes, is_isomorphic, is_min_code, min_dfs_code, CanonicalForm,
    CodeGraph, ComponentForm, DfsCode, Dir, EdgeCode, EdgeLabel,
};
pub use format::{parse_dfg, print_dfg};
pub use matcher::find_embeddings;

use crate::op::{Op, OpLabel};

/// Operand edge between two vertices: `dst`'s operand `port` is output
/// `src_out` of `src`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub src_out: u16,
    pub dst: usize,
    pub port: u16,
}

impl Edge {
    pub fn new(src: usize, dst: usize, port: u16) -> Self {
        Edge {
            src,
            src_out: 0,
            dst,
            port,
        }
    }
}

/// Where an external value originates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InputTag {
    /// Named value defined outside the graph.
    Value(String),
    /// Integer literal.
    Const(i64),
    /// Unbound pattern port.
    Port,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtInput {
    pub dst: usize,
    pub port: u16,
    pub width: u8,
    pub tag: InputTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtOutput {
    pub src: usize,
    pub src_out: u16,
    pub tag: String,
}

/// Dataflow graph of one basic block or kernel. Vertex ids are dense
/// indices into `vertices`; edge ids index `edges`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dfg {
    pub vertices: Vec<OpLabel>,
    pub edges: Vec<Edge>,
    pub inputs: Vec<ExtInput>,
    pub outputs: Vec<ExtOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("edge {edge} references missing vertex {vertex}")]
    DanglingEdge { edge: usize, vertex: usize },
    #[error("vertex {vertex} port {port} has more than one driver")]
    MultipleDrivers { vertex: usize, port: u16 },
    #[error("graph contains a cycle")]
    Cyclic,
    #[error("graph has no edges")]
    Edgeless,
    #[error("graph is not connected")]
    Disconnected,
    #[error("pattern or host exceeds the oracle size cap of {cap} vertices")]
    OracleCapExceeded { cap: usize },
}

impl Dfg {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, label: OpLabel) -> usize {
        self.vertices.push(label);
        self.vertices.len() - 1
    }

    pub fn add_edge(&mut self, src: usize, dst: usize, port: u16) -> usize {
        self.edges.push(Edge::new(src, dst, port));
        self.edges.len() - 1
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of operand ports of `v` that are driven (internally or externally).
    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.dst == v).count()
            + self.inputs.iter().filter(|i| i.dst == v).count()
    }

    /// Checks endpoint validity, single driver per port and acyclicity.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.vertices.len();
        let mut driven = std::collections::HashSet::new();
        for (id, e) in self.edges.iter().enumerate() {
            for v in [e.src, e.dst] {
                if v >= n {
                    return Err(GraphError::DanglingEdge {
                        edge: id,
                        vertex: v,
                    });
                }
            }
            if !driven.insert((e.dst, e.port)) {
                return Err(GraphError::MultipleDrivers {
                    vertex: e.dst,
                    port: e.port,
                });
            }
        }
        for i in &self.inputs {
            if i.dst >= n {
                return Err(GraphError::DanglingEdge {
                    edge: usize::MAX,
                    vertex: i.dst,
                });
            }
            if !driven.insert((i.dst, i.port)) {
                return Err(GraphError::MultipleDrivers {
                    vertex: i.dst,
                    port: i.port,
                });
            }
        }
        self.topo_order().map(|_| ())
    }

    /// Kahn order over internal edges; ties broken by vertex id.
    pub fn topo_order(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.vertices.len();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for e in &self.edges {
            indeg[e.dst] += 1;
            succ[e.src].push(e.dst);
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &s in &succ[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(GraphError::Cyclic)
        }
    }

    /// Operand count of `v`: fixed arity, or the number of driven ports
    /// for variadic ops.
    pub fn arity(&self, v: usize) -> usize {
        match self.vertices[v].op.arity() {
            Some(a) => a,
            None => self.in_degree(v),
        }
    }

    /// Vertices reachable from each other ignoring direction.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..n {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        groups.into_values().collect()
    }

    /// Applies a vertex permutation: vertex `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Dfg {
        let n = self.vertices.len();
        let mut vertices = self.vertices.clone();
        for v in 0..n {
            vertices[perm[v]] = self.vertices[v];
        }
        Dfg {
            vertices,
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    src: perm[e.src],
                    dst: perm[e.dst],
                    ..*e
                })
                .collect(),
            inputs: self
                .inputs
                .iter()
                .map(|i| ExtInput {
                    dst: perm[i.dst],
                    ..i.clone()
                })
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|o| ExtOutput {
                    src: perm[o.src],
                    ..o.clone()
                })
                .collect(),
        }
    }

    /// Labels of all vertices as canonical-code integers.
    pub fn code_graph(&self) -> CodeGraph {
        CodeGraph::from_dfg(self, |l| l.collation_key())
    }

    pub fn count_op(&self, pred: impl Fn(Op) -> bool) -> usize {
        self.vertices.iter().filter(|l| pred(l.op)).count()
    }
}

/// Subgraph-isomorphism witness of a pattern inside graph `graph_index`
/// of some graph set. `vmap[p]` is the host vertex of pattern vertex `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Embedding {
    pub graph_index: usize,
    pub vmap: Vec<usize>,
}
