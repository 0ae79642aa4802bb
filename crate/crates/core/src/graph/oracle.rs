//! Exhaustive isomorphism and embedding search, used only to cross-check
//! the canonical-code and mining machinery on small graphs.

use std::collections::HashSet;

use super::{Dfg, Embedding, GraphError};

pub const DEFAULT_CAP: usize = 12;

fn edge_set(g: &Dfg) -> HashSet<(usize, u16, usize, u16)> {
    g.edges
        .iter()
        .map(|e| (e.src, e.src_out, e.dst, e.port))
        .collect()
}

/// All label- and edge-preserving injective maps from `pattern` into
/// `host` (not necessarily induced), for graphs of at most `cap` vertices.
pub fn oracle_embeddings_capped(
    pattern: &Dfg,
    host: &Dfg,
    graph_index: usize,
    cap: usize,
) -> Result<Vec<Embedding>, GraphError> {
    if pattern.vertex_count() > cap || host.vertex_count() > cap {
        return Err(GraphError::OracleCapExceeded { cap });
    }
    let host_edges = edge_set(host);
    let mut out = Vec::new();
    let mut map = Vec::with_capacity(pattern.vertex_count());
    let mut taken = vec![false; host.vertex_count()];
    assign(pattern, host, &host_edges, &mut map, &mut taken, &mut |m| {
        out.push(Embedding {
            graph_index,
            vmap: m.to_vec(),
        })
    });
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn oracle_embeddings(pattern: &Dfg, host: &Dfg) -> Result<Vec<Embedding>, GraphError> {
    oracle_embeddings_capped(pattern, host, 0, DEFAULT_CAP)
}

fn assign(
    pattern: &Dfg,
    host: &Dfg,
    host_edges: &HashSet<(usize, u16, usize, u16)>,
    map: &mut Vec<usize>,
    taken: &mut [bool],
    emit: &mut dyn FnMut(&[usize]),
) {
    let p = map.len();
    if p == pattern.vertex_count() {
        let ok = pattern
            .edges
            .iter()
            .all(|e| host_edges.contains(&(map[e.src], e.src_out, map[e.dst], e.port)));
        if ok {
            emit(map);
        }
        return;
    }
    for h in 0..host.vertex_count() {
        if taken[h] || host.vertices[h] != pattern.vertices[p] {
            continue;
        }
        taken[h] = true;
        map.push(h);
        assign(pattern, host, host_edges, map, taken, emit);
        map.pop();
        taken[h] = false;
    }
}

/// Brute-force bijection search.
pub fn oracle_isomorphic(g: &Dfg, h: &Dfg) -> bool {
    if g.vertex_count() != h.vertex_count() || g.edge_count() != h.edge_count() {
        return false;
    }
    let h_edges = edge_set(h);
    let mut found = false;
    let mut map = Vec::new();
    let mut taken = vec![false; h.vertex_count()];
    // Equal edge counts plus an edge-preserving injection make a bijection
    // on edges as well.
    assign(g, h, &h_edges, &mut map, &mut taken, &mut |_| found = true);
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(labels: &[&str], edges: &[(usize, usize, u16)]) -> Dfg {
        let mut g = Dfg::new();
        for l in labels {
            g.add_vertex(l.parse().unwrap());
        }
        for &(s, d, p) in edges {
            g.add_edge(s, d, p);
        }
        g
    }

    #[test]
    fn single_vertex_pattern_counts_hosts() {
        let pattern = graph(&["mul"], &[]);
        let host = graph(&["mul", "add", "mul", "mul"], &[]);
        assert_eq!(oracle_embeddings(&pattern, &host).unwrap().len(), 3);
    }

    #[test]
    fn identity_is_an_embedding() {
        let g = graph(&["add", "mul", "sub"], &[(0, 1, 0), (1, 2, 1)]);
        let e = oracle_embeddings(&g, &g).unwrap();
        assert!(e.iter().any(|e| e.vmap == vec![0, 1, 2]));
    }

    #[test]
    fn cap_is_enforced() {
        let big = graph(&["add"; 13], &[]);
        assert_eq!(
            oracle_embeddings(&graph(&["add"], &[]), &big),
            Err(GraphError::OracleCapExceeded { cap: DEFAULT_CAP })
        );
    }
}
