//! Line-oriented DFG interchange text.
//!
//! ```text
//! v <id> <label>
//! e <id> <src> <dst> <port>
//! ```
//!
//! Ports print as `L` (operand 0), `R` (operand 1) and `P<k>` beyond.
//! External inputs and outputs are vertices labeled `in` and `out`. An
//! edge leaving a secondary output of a multi-output vertex writes its
//! source as `<id>.<output>`.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Dfg, Edge, ExtInput, ExtOutput, InputTag};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("dfg line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn port_text(port: u16) -> String {
    match port {
        0 => "L".to_string(),
        1 => "R".to_string(),
        k => format!("P{k}"),
    }
}

fn parse_port(s: &str) -> Option<u16> {
    match s {
        "L" => Some(0),
        "R" => Some(1),
        _ => s.strip_prefix('P')?.parse().ok().filter(|k| *k >= 2),
    }
}

pub fn print_dfg(g: &Dfg) -> String {
    let mut s = String::new();
    let n = g.vertex_count();
    for (v, l) in g.vertices.iter().enumerate() {
        writeln!(s, "v {v} {l}").unwrap();
    }
    for k in 0..g.inputs.len() {
        writeln!(s, "v {} in", n + k).unwrap();
    }
    for k in 0..g.outputs.len() {
        writeln!(s, "v {} out", n + g.inputs.len() + k).unwrap();
    }
    let src_text = |v: usize, out: u16| {
        if out == 0 {
            v.to_string()
        } else {
            format!("{v}.{out}")
        }
    };
    let mut id = 0;
    for e in &g.edges {
        writeln!(
            s,
            "e {id} {} {} {}",
            src_text(e.src, e.src_out),
            e.dst,
            port_text(e.port)
        )
        .unwrap();
        id += 1;
    }
    for (k, i) in g.inputs.iter().enumerate() {
        writeln!(s, "e {id} {} {} {}", n + k, i.dst, port_text(i.port)).unwrap();
        id += 1;
    }
    for (k, o) in g.outputs.iter().enumerate() {
        let sink = n + g.inputs.len() + k;
        writeln!(s, "e {id} {} {sink} L", src_text(o.src, o.src_out)).unwrap();
        id += 1;
    }
    s
}

enum Node {
    Inner(usize),
    In(usize),
    Out(usize),
}

pub fn parse_dfg(text: &str) -> Result<Dfg, FormatError> {
    let mut g = Dfg::new();
    let mut nodes: HashMap<usize, Node> = HashMap::new();
    let mut input_slots: Vec<Option<ExtInput>> = Vec::new();
    let mut output_slots: Vec<Option<ExtOutput>> = Vec::new();
    let mut pending_edges = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let err = |m: &str| FormatError {
            line,
            message: m.to_string(),
        };
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            ["v", id, label] => {
                let id: usize = id.parse().map_err(|_| err("bad vertex id"))?;
                let node = match *label {
                    "in" => {
                        input_slots.push(None);
                        Node::In(input_slots.len() - 1)
                    }
                    "out" => {
                        output_slots.push(None);
                        Node::Out(output_slots.len() - 1)
                    }
                    l => Node::Inner(
                        g.add_vertex(
                            l.parse()
                                .map_err(|e: crate::op::UnknownOp| err(&e.to_string()))?,
                        ),
                    ),
                };
                if nodes.insert(id, node).is_some() {
                    return Err(err("duplicate vertex id"));
                }
            }
            ["e", _id, src, dst, port] => {
                let (src, out) = match src.split_once('.') {
                    Some((s, o)) => (
                        s.parse().map_err(|_| err("bad source"))?,
                        o.parse().map_err(|_| err("bad source output"))?,
                    ),
                    None => (src.parse::<usize>().map_err(|_| err("bad source"))?, 0u16),
                };
                let dst: usize = dst.parse().map_err(|_| err("bad destination"))?;
                let port = parse_port(port).ok_or_else(|| err("bad port"))?;
                pending_edges.push((line, src, out, dst, port));
            }
            _ => {
                return Err(err(
                    "expected `v <id> <label>` or `e <id> <src> <dst> <port>`",
                ))
            }
        }
    }
    for (line, src, out, dst, port) in pending_edges {
        let err = |m: &str| FormatError {
            line,
            message: m.to_string(),
        };
        match (nodes.get(&src), nodes.get(&dst)) {
            (Some(Node::Inner(s)), Some(Node::Inner(d))) => g.edges.push(Edge {
                src: *s,
                src_out: out,
                dst: *d,
                port,
            }),
            (Some(Node::In(k)), Some(Node::Inner(d))) => {
                input_slots[*k] = Some(ExtInput {
                    dst: *d,
                    port,
                    width: g.vertices[*d].port_width(port as usize),
                    tag: InputTag::Port,
                })
            }
            (Some(Node::Inner(s)), Some(Node::Out(k))) => {
                output_slots[*k] = Some(ExtOutput {
                    src: *s,
                    src_out: out,
                    tag: format!("out{k}"),
                })
            }
            (None, _) | (_, None) => return Err(err("edge references unknown vertex")),
            _ => return Err(err("edge between two boundary vertices")),
        }
    }
    g.inputs = input_slots
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or(FormatError {
                line: 0,
                message: format!("input {k} is unconnected"),
            })
        })
        .collect::<Result<_, _>>()?;
    g.outputs = output_slots
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or(FormatError {
                line: 0,
                message: format!("output {k} is unconnected"),
            })
        })
        .collect::<Result<_, _>>()?;
    g.validate().map_err(|e| FormatError {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_binary_ports_as_left_right() {
        let mut g = Dfg::new();
        let m = g.add_vertex("mul".parse().unwrap());
        let a = g.add_vertex("add".parse().unwrap());
        g.add_edge(m, a, 1);
        g.inputs.push(ExtInput {
            dst: m,
            port: 0,
            width: 32,
            tag: InputTag::Port,
        });
        g.inputs.push(ExtInput {
            dst: m,
            port: 1,
            width: 32,
            tag: InputTag::Port,
        });
        g.inputs.push(ExtInput {
            dst: a,
            port: 0,
            width: 32,
            tag: InputTag::Port,
        });
        g.outputs.push(ExtOutput {
            src: a,
            src_out: 0,
            tag: "out0".into(),
        });
        let text = print_dfg(&g);
        assert_eq!(
            text,
            "v 0 mul\nv 1 add\nv 2 in\nv 3 in\nv 4 in\nv 5 out\n\
             e 0 0 1 R\ne 1 2 0 L\ne 2 3 0 R\ne 3 4 1 L\ne 4 1 5 L\n"
        );
        let back = parse_dfg(&text).unwrap();
        assert_eq!(back.vertices, g.vertices);
        assert_eq!(back.edges, g.edges);
        assert_eq!(back.inputs.len(), 3);
        assert_eq!(print_dfg(&back), text);
    }

    #[test]
    fn select_third_operand_uses_p2() {
        assert_eq!(port_text(2), "P2");
        assert_eq!(parse_port("P2"), Some(2));
        assert_eq!(parse_port("P1"), None);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_dfg("v 0 fadd\n").is_err());
        assert!(parse_dfg("x 1 2\n").is_err());
        assert!(parse_dfg("v 0 add\ne 0 0 7 L\n").is_err());
    }
}
