use std::collections::HashMap;

use super::Dfg;

/// All subgraph-isomorphism maps of `pattern` into `host`.
///
/// Pattern vertices are matched in an order where each vertex after the
/// first of its component touches an already matched one. Because every
/// operand port has one driver, a matched consumer pins its producer and
/// a matched producer restricts the consumer to its fan-out.
pub fn find_embeddings(pattern: &Dfg, host: &Dfg) -> Vec<Vec<usize>> {
    let n = pattern.vertex_count();
    if n == 0 {
        return Vec::new();
    }
    let driver: HashMap<(usize, u16), (usize, u16)> = host
        .edges
        .iter()
        .map(|e| ((e.dst, e.port), (e.src, e.src_out)))
        .collect();
    let mut fanout: Vec<Vec<(usize, u16, u16)>> = vec![Vec::new(); host.vertex_count()];
    for e in &host.edges {
        fanout[e.src].push((e.dst, e.port, e.src_out));
    }

    let order = match_order(pattern);
    let mut map = vec![usize::MAX; n];
    let mut taken = vec![false; host.vertex_count()];
    let mut out = Vec::new();
    let ctx = Ctx {
        pattern,
        host,
        driver: &driver,
        fanout: &fanout,
        order: &order,
    };
    ctx.extend(0, &mut map, &mut taken, &mut out);
    out
}

fn match_order(pattern: &Dfg) -> Vec<usize> {
    let n = pattern.vertex_count();
    let mut adj = vec![Vec::new(); n];
    for e in &pattern.edges {
        adj[e.src].push(e.dst);
        adj[e.dst].push(e.src);
    }
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order
}

struct Ctx<'a> {
    pattern: &'a Dfg,
    host: &'a Dfg,
    driver: &'a HashMap<(usize, u16), (usize, u16)>,
    fanout: &'a [Vec<(usize, u16, u16)>],
    order: &'a [usize],
}

impl Ctx<'_> {
    fn extend(&self, k: usize, map: &mut [usize], taken: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if k == self.order.len() {
            out.push(map.to_vec());
            return;
        }
        let p = self.order[k];
        let label = self.pattern.vertices[p];
        for h in self.candidates(p, map) {
            if taken[h] || self.host.vertices[h] != label || !self.consistent(p, h, map) {
                continue;
            }
            taken[h] = true;
            map[p] = h;
            self.extend(k + 1, map, taken, out);
            map[p] = usize::MAX;
            taken[h] = false;
        }
    }

    fn candidates(&self, p: usize, map: &[usize]) -> Vec<usize> {
        for e in &self.pattern.edges {
            if e.src == p && map[e.dst] != usize::MAX {
                return match self.driver.get(&(map[e.dst], e.port)) {
                    Some(&(s, out)) if out == e.src_out => vec![s],
                    _ => vec![],
                };
            }
        }
        for e in &self.pattern.edges {
            if e.dst == p && map[e.src] != usize::MAX {
                return self.fanout[map[e.src]]
                    .iter()
                    .filter(|&&(_, port, out)| port == e.port && out == e.src_out)
                    .map(|&(d, _, _)| d)
                    .collect();
            }
        }
        (0..self.host.vertex_count()).collect()
    }

    fn consistent(&self, p: usize, h: usize, map: &[usize]) -> bool {
        self.pattern.edges.iter().all(|e| {
            let (s, d) = (
                if e.src == p { h } else { map[e.src] },
                if e.dst == p { h } else { map[e.dst] },
            );
            if (e.src != p && e.dst != p) || s == usize::MAX || d == usize::MAX {
                return true;
            }
            self.driver.get(&(d, e.port)) == Some(&(s, e.src_out))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::oracle::oracle_embeddings;

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
    fn agrees_with_oracle_on_small_case() {
        let host = graph(
            &["load", "load", "mul", "load", "add", "store", "mul"],
            &[
                (0, 2, 0),
                (1, 2, 1),
                (2, 4, 1),
                (3, 4, 0),
                (4, 5, 1),
                (0, 6, 0),
            ],
        );
        let pattern = graph(&["load", "mul"], &[(0, 1, 0)]);
        let mut fast = find_embeddings(&pattern, &host);
        fast.sort();
        let slow: Vec<_> = oracle_embeddings(&pattern, &host)
            .unwrap()
            .into_iter()
            .map(|e| e.vmap)
            .collect();
        assert_eq!(fast, slow);
        assert_eq!(fast.len(), 2);
    }
}
