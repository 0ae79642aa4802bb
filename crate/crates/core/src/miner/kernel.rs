use crate::graph::{canonical_form, CanonicalForm, Dfg, Embedding, ExtInput, ExtOutput, InputTag};

use super::mine::{mine_patterns, MiningConfig, MiningError, MiningTrace, Pattern};
use super::prune::prune_graph_mapped;

/// A frequent pattern ready for hardware generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    pub id: u32,
    /// Pruned graph; its `inputs` and `outputs` are the kernel interface
    /// in declaration order.
    pub dfg: Dfg,
    /// Unpruned pattern the embeddings refer to.
    pub pattern: Dfg,
    /// Pruned vertex of each pattern vertex.
    pub vertex_map: Vec<Option<usize>>,
    pub canonical: CanonicalForm,
    pub support: usize,
    pub embeddings: Vec<Embedding>,
    /// Pipeline latency once stitched.
    pub latency: Option<u32>,
}

impl Kernel {
    pub fn input_count(&self) -> usize {
        self.dfg.inputs.len()
    }

    pub fn output_count(&self) -> usize {
        self.dfg.outputs.len()
    }

    /// Pattern vertex behind pruned vertex `k`.
    pub fn pattern_vertex(&self, k: usize) -> usize {
        self.vertex_map
            .iter()
            .position(|&m| m == Some(k))
            .expect("pruned vertex has a source")
    }

    /// Builds a kernel from a pattern: unconnected operand ports become
    /// inputs and result-producing sinks become outputs before pruning.
    /// Returns `None` when nothing mappable remains or the interface is
    /// empty.
    pub fn from_pattern(id: u32, p: &Pattern) -> Option<Kernel> {
        let mut g = p.dfg.clone();
        add_boundary(&mut g);
        let (dfg, vertex_map) = prune_graph_mapped(&g);
        if dfg.is_empty() || dfg.inputs.is_empty() || dfg.outputs.is_empty() {
            return None;
        }
        Some(Kernel {
            id,
            canonical: canonical_form(&dfg),
            dfg,
            pattern: g,
            vertex_map,
            support: p.support,
            embeddings: p.embeddings.clone(),
            latency: None,
        })
    }

    /// Kernel covering a whole block graph (possibly disconnected), with
    /// the block's own inputs and escaping values as interface.
    pub fn from_block(id: u32, graph_index: usize, block: &Dfg) -> Option<Kernel> {
        let (dfg, vertex_map) = prune_graph_mapped(block);
        if dfg.is_empty() || dfg.inputs.is_empty() || dfg.outputs.is_empty() {
            return None;
        }
        Some(Kernel {
            id,
            canonical: canonical_form(&dfg),
            dfg,
            pattern: block.clone(),
            vertex_map,
            support: 1,
            embeddings: vec![Embedding {
                graph_index,
                vmap: (0..block.vertex_count()).collect(),
            }],
            latency: None,
        })
    }

    /// Sort key for the representative kernel of an application: larger
    /// graphs and wider interfaces first.
    pub fn size_key(&self) -> (usize, usize, usize) {
        (
            self.dfg.vertex_count(),
            self.input_count(),
            self.output_count(),
        )
    }
}

fn add_boundary(g: &mut Dfg) {
    for v in 0..g.vertex_count() {
        let label = g.vertices[v];
        let arity = label.op.arity().unwrap_or(0);
        for port in 0..arity as u16 {
            let driven = g.edges.iter().any(|e| e.dst == v && e.port == port)
                || g.inputs.iter().any(|i| i.dst == v && i.port == port);
            if !driven {
                g.inputs.push(ExtInput {
                    dst: v,
                    port,
                    width: label.port_width(port as usize),
                    tag: InputTag::Port,
                });
            }
        }
        if label.op.has_result() && !g.edges.iter().any(|e| e.src == v) {
            g.outputs.push(ExtOutput {
                src: v,
                src_out: 0,
                tag: format!("v{v}"),
            });
        }
    }
    g.inputs.sort_by_key(|i| (i.dst, i.port));
}

/// Mines `gs` and turns the reported patterns into kernels numbered from
/// 0 in discovery order.
pub fn mine_kernels(gs: &[Dfg], cfg: &MiningConfig) -> Result<Vec<Kernel>, MiningError> {
    Ok(mine_kernels_traced(gs, cfg)?.0)
}

pub fn mine_kernels_traced(
    gs: &[Dfg],
    cfg: &MiningConfig,
) -> Result<(Vec<Kernel>, MiningTrace), MiningError> {
    let (patterns, trace) = mine_patterns(gs, cfg)?;
    let mut kernels = Vec::new();
    for p in &patterns {
        if let Some(k) = Kernel::from_pattern(kernels.len() as u32, p) {
            kernels.push(k);
        }
    }
    Ok((kernels, trace))
}

/// The largest kernel by (vertices, inputs, outputs); ties go to the
/// lower id.
pub fn primary_kernel(kernels: &[Kernel]) -> Option<&Kernel> {
    kernels.iter().rev().max_by_key(|k| k.size_key())
}
