use crate::graph::{Dfg, Edge, ExtInput, ExtOutput, InputTag};
use crate::op::Op;

/// Removes memory operations and conversions, leaving only operations
/// that map to hardware primitives.
///
/// Loads become external inputs of their consumers and stores turn their
/// value operand into an external output. Conversions and phis are
/// bypassed: their single driver is wired to every consumer on the same
/// port (a phi, having no single driver, leaves fresh inputs behind).
/// Vertices left without consumers or outputs (address arithmetic) are
/// dropped. Inputs end up sorted by (vertex, port).
pub fn prune_graph(g: &Dfg) -> Dfg {
    prune_graph_mapped(g).0
}

/// [`prune_graph`] plus the new id of every original vertex.
pub fn prune_graph_mapped(g: &Dfg) -> (Dfg, Vec<Option<usize>>) {
    let n = g.vertex_count();
    let mut alive = vec![true; n];
    let mut edges: Vec<Edge> = g.edges.clone();
    let mut inputs: Vec<ExtInput> = g.inputs.clone();
    let mut outputs: Vec<ExtOutput> = g.outputs.clone();
    let port_input = |dst: usize, port: u16| ExtInput {
        dst,
        port,
        width: g.vertices[dst].port_width(port as usize),
        tag: InputTag::Port,
    };

    let order = g.topo_order().expect("pruning needs an acyclic graph");
    for &v in &order {
        let op = g.vertices[v].op;
        if op == Op::Load {
            for e in edges.iter().filter(|e| e.src == v) {
                inputs.push(port_input(e.dst, e.port));
            }
        } else if op == Op::Store {
            if let Some(e) = edges.iter().find(|e| e.dst == v && e.port == 1) {
                let out = ExtOutput {
                    src: e.src,
                    src_out: e.src_out,
                    tag: format!("v{}", e.src),
                };
                if !outputs
                    .iter()
                    .any(|o| o.src == out.src && o.src_out == out.src_out)
                {
                    outputs.push(out);
                }
            }
        } else if op.is_conversion() {
            let in_edges: Vec<Edge> = edges.iter().filter(|e| e.dst == v).copied().collect();
            let in_ext: Vec<ExtInput> = inputs.iter().filter(|i| i.dst == v).cloned().collect();
            let single_edge = if in_edges.len() == 1 && in_ext.is_empty() {
                Some(in_edges[0])
            } else {
                None
            };
            let single_ext = if in_ext.len() == 1 && in_edges.is_empty() {
                Some(&in_ext[0])
            } else {
                None
            };
            let consumers: Vec<Edge> = edges.iter().filter(|e| e.src == v).copied().collect();
            for c in &consumers {
                match (single_edge, single_ext) {
                    (Some(d), _) => edges.push(Edge {
                        src: d.src,
                        src_out: d.src_out,
                        dst: c.dst,
                        port: c.port,
                    }),
                    (None, Some(i)) => inputs.push(ExtInput {
                        dst: c.dst,
                        port: c.port,
                        width: g.vertices[c.dst].port_width(c.port as usize),
                        tag: i.tag.clone(),
                    }),
                    (None, None) => inputs.push(port_input(c.dst, c.port)),
                }
            }
            for o in outputs.iter_mut().filter(|o| o.src == v) {
                if let Some(d) = single_edge {
                    o.src = d.src;
                    o.src_out = d.src_out;
                }
            }
            outputs.retain(|o| o.src != v || single_edge.is_some());
        } else {
            continue;
        }
        alive[v] = false;
        edges.retain(|e| e.src != v && e.dst != v);
        inputs.retain(|i| i.dst != v);
        outputs.retain(|o| o.src != v);
    }

    // Dead code left behind (address computations).
    loop {
        let dead: Vec<usize> = (0..n)
            .filter(|&v| {
                alive[v] && !edges.iter().any(|e| e.src == v) && !outputs.iter().any(|o| o.src == v)
            })
            .collect();
        if dead.is_empty() {
            break;
        }
        for v in dead {
            alive[v] = false;
            edges.retain(|e| e.dst != v);
            inputs.retain(|i| i.dst != v);
        }
    }

    let mut map = vec![None; n];
    let mut out = Dfg::new();
    for v in 0..n {
        if alive[v] {
            map[v] = Some(out.add_vertex(g.vertices[v]));
        }
    }
    let m = |v: usize| map[v].expect("live endpoint");
    out.edges = edges
        .iter()
        .map(|e| Edge {
            src: m(e.src),
            dst: m(e.dst),
            ..*e
        })
        .collect();
    out.edges.sort_by_key(|e| (e.dst, e.port));
    out.inputs = inputs
        .into_iter()
        .map(|i| ExtInput { dst: m(i.dst), ..i })
        .collect();
    out.inputs.sort_by_key(|i| (i.dst, i.port));
    out.outputs = outputs
        .into_iter()
        .map(|o| ExtOutput { src: m(o.src), ..o })
        .collect();
    out.outputs.sort_by_key(|o| (o.src, o.src_out));
    (out, map)
}
