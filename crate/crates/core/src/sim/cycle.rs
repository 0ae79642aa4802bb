use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::op::{eval, OpLabel, Word};
use crate::stitch::{Endpoint, Netlist, OverlayModel, PeModel, PE_IO_CYCLES};

use super::{SimError, Workload};

/// Cycle-by-cycle outputs of a simulated netlist or PE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Value of every output port on every cycle; `None` while invalid.
    pub outputs: Vec<Vec<Option<u64>>>,
    pub cycles: u64,
    pub first_valid: Option<u64>,
    /// Results per cycle between the first and last valid output.
    pub throughput: f64,
    pub div_by_zero: bool,
}

impl SimResult {
    /// Valid output vectors in order.
    pub fn results(&self) -> Vec<Vec<u64>> {
        self.outputs
            .iter()
            .filter(|row| !row.is_empty() && row.iter().all(Option::is_some))
            .map(|row| row.iter().map(|v| v.unwrap()).collect())
            .collect()
    }

    fn finish(outputs: Vec<Vec<Option<u64>>>, div_by_zero: bool) -> SimResult {
        let valid: Vec<usize> = outputs
            .iter()
            .enumerate()
            .filter(|(_, row)| !row.is_empty() && row.iter().all(Option::is_some))
            .map(|(t, _)| t)
            .collect();
        let throughput = match (valid.first(), valid.last()) {
            (Some(&a), Some(&b)) => valid.len() as f64 / (b - a + 1) as f64,
            _ => 0.0,
        };
        SimResult {
            cycles: outputs.len() as u64,
            first_valid: valid.first().map(|&t| t as u64),
            outputs,
            throughput,
            div_by_zero,
        }
    }

    /// Per-cycle trace, one column per output; invalid values are blank.
    pub fn trace_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let n = self.outputs.first().map_or(0, Vec::len);
        let mut header = vec!["cycle".to_string()];
        header.extend((0..n).map(|k| format!("out{k}")));
        w.write_record(&header).expect("in-memory write");
        for (t, row) in self.outputs.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(
                row.iter()
                    .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
    }
}

/// Issue interval of a netlist: the slowest cell.
fn interval(n: &Netlist) -> u64 {
    n.cells
        .iter()
        .map(|c| c.params.ii.max(1) as u64)
        .max()
        .unwrap_or(1)
}

/// Runs the workload through the netlist, one input vector every
/// initiation interval. Each cell shows on cycle `t` the result computed
/// from the operands it saw on cycle `t - latency`; operands read on a
/// cycle where any of them is invalid produce a bubble.
pub fn simulate_netlist(n: &Netlist, w: &Workload) -> Result<SimResult, SimError> {
    let bad = |e: crate::stitch::StitchError| SimError::Netlist(e.to_string());
    let inputs: Vec<(usize, u8)> = n.input_ports().map(|(k, p)| (k, p.width)).collect();
    let outputs: Vec<usize> = n.output_ports().map(|(k, _)| k).collect();
    if w.streams.len() != inputs.len() {
        return Err(SimError::StreamCount {
            expected: inputs.len(),
            found: w.streams.len(),
        });
    }
    if w.streams.windows(2).any(|s| s[0].len() != s[1].len()) {
        return Err(SimError::UnequalStreams);
    }
    let order = n.cell_order().map_err(bad)?;
    let drivers = n.drivers().map_err(bad)?;
    let labels: Vec<OpLabel> = n
        .cells
        .iter()
        .map(|c| c.label())
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    let port_stream: BTreeMap<usize, usize> = inputs
        .iter()
        .enumerate()
        .map(|(s, &(k, _))| (k, s))
        .collect();
    let port_width: BTreeMap<usize, u8> = inputs.iter().copied().collect();
    let pins: Vec<Vec<Endpoint>> = n
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            (0..cell.params.inputs)
                .map(|pin| {
                    drivers
                        .get(&Endpoint::Cell { cell: c, pin })
                        .copied()
                        .ok_or_else(|| SimError::Netlist(format!("cell {c} pin {pin} undriven")))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let out_drivers: Vec<Endpoint> = outputs
        .iter()
        .map(|&k| drivers.get(&Endpoint::Port { index: k }).copied())
        .collect::<Option<_>>()
        .ok_or_else(|| SimError::Netlist("undriven output port".into()))?;

    let ii = interval(n);
    let len = w.len() as u64;
    let total = if len == 0 {
        0
    } else {
        (len - 1) * ii + n.latency as u64 + 1
    };
    let mut pipes: Vec<VecDeque<Option<Vec<Word>>>> = n
        .cells
        .iter()
        .map(|c| std::iter::repeat_n(None, c.params.latency as usize).collect())
        .collect();
    let mut visible: Vec<Option<Vec<Word>>> = vec![None; n.cells.len()];
    let mut div_by_zero = false;
    let mut rows = Vec::with_capacity(total as usize);
    for t in 0..total {
        let vector = (t % ii == 0 && t / ii < len).then_some((t / ii) as usize);
        let read = |visible: &[Option<Vec<Word>>], e: &Endpoint| -> Option<Word> {
            match *e {
                Endpoint::Port { index } => {
                    let k = vector?;
                    Some(Word::new(
                        w.streams[port_stream[&index]][k],
                        port_width[&index],
                    ))
                }
                Endpoint::Cell { cell, pin } => visible[cell].as_ref().map(|v| v[pin as usize]),
            }
        };
        for &c in &order {
            let args: Option<Vec<Word>> = pins[c].iter().map(|e| read(&visible, e)).collect();
            let result = match args {
                Some(a) => {
                    let r = eval(labels[c], &a).map_err(SimError::Eval)?;
                    div_by_zero |= r.div_by_zero;
                    Some(r.outputs)
                }
                None => None,
            };
            pipes[c].push_back(result);
            visible[c] = pipes[c].pop_front().unwrap();
        }
        rows.push(
            out_drivers
                .iter()
                .map(|e| read(&visible, e).map(|x| x.bits))
                .collect(),
        );
    }
    Ok(SimResult::finish(rows, div_by_zero))
}

/// Simulates a wrapped kernel: operands pass the PE input register and
/// results the output register, one cycle each.
pub fn simulate_pe(pe: &PeModel, w: &Workload) -> Result<SimResult, SimError> {
    let core = match &pe.core {
        Some(c) => c,
        None => return Err(SimError::Netlist("black-box PE has no kernel".into())),
    };
    let r = simulate_netlist(core, w)?;
    let idle = vec![None; core.output_count()];
    let mut rows: Vec<Vec<Option<u64>>> = Vec::with_capacity(r.outputs.len() + 2);
    if !r.outputs.is_empty() {
        rows.extend(std::iter::repeat_n(idle, PE_IO_CYCLES as usize));
    }
    rows.extend(r.outputs);
    Ok(SimResult::finish(rows, r.div_by_zero))
}

/// Sequential execution on a generic ALU: every operation costs its
/// latency plus one instruction-select cycle; registers are free.
pub fn alu_cycles_per_vector(n: &Netlist) -> u64 {
    n.cells
        .iter()
        .filter(|c| c.kind != "register")
        .map(|c| c.params.latency as u64 + 1)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AluRun {
    pub results: Vec<Vec<u64>>,
    /// Cycles until the last result leaves the PE.
    pub cycles: u64,
    pub div_by_zero: bool,
}

/// Executes the kernel operation by operation on a generic-ALU PE.
pub fn simulate_alu(n: &Netlist, w: &Workload) -> Result<AluRun, SimError> {
    let bad = |e: crate::stitch::StitchError| SimError::Netlist(e.to_string());
    let inputs: Vec<(usize, u8)> = n.input_ports().map(|(k, p)| (k, p.width)).collect();
    if w.streams.len() != inputs.len() {
        return Err(SimError::StreamCount {
            expected: inputs.len(),
            found: w.streams.len(),
        });
    }
    let order = n.cell_order().map_err(bad)?;
    let drivers = n.drivers().map_err(bad)?;
    let labels: Vec<OpLabel> = n
        .cells
        .iter()
        .map(|c| c.label())
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    let stream_of: BTreeMap<usize, (usize, u8)> = inputs
        .iter()
        .enumerate()
        .map(|(s, &(k, width))| (k, (s, width)))
        .collect();
    let mut results = Vec::with_capacity(w.len());
    let mut div_by_zero = false;
    for k in 0..w.len() {
        let mut vals: Vec<Vec<Word>> = vec![Vec::new(); n.cells.len()];
        let read = |vals: &[Vec<Word>], e: Option<&Endpoint>| -> Result<Word, SimError> {
            match e {
                Some(Endpoint::Port { index }) => {
                    let (s, width) = stream_of[index];
                    Ok(Word::new(w.streams[s][k], width))
                }
                Some(Endpoint::Cell { cell, pin }) => Ok(vals[*cell][*pin as usize]),
                None => Err(SimError::Netlist("undriven pin".into())),
            }
        };
        for &c in &order {
            let args = (0..n.cells[c].params.inputs)
                .map(|pin| read(&vals, drivers.get(&Endpoint::Cell { cell: c, pin })))
                .collect::<Result<Vec<_>, _>>()?;
            let r = eval(labels[c], &args).map_err(SimError::Eval)?;
            div_by_zero |= r.div_by_zero;
            vals[c] = r.outputs;
        }
        let row = n
            .output_ports()
            .map(|(p, _)| read(&vals, drivers.get(&Endpoint::Port { index: p })).map(|x| x.bits))
            .collect::<Result<_, _>>()?;
        results.push(row);
    }
    let cycles = if w.is_empty() {
        0
    } else {
        w.len() as u64 * alu_cycles_per_vector(n) + PE_IO_CYCLES as u64
    };
    Ok(AluRun {
        results,
        cycles,
        div_by_zero,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeRun {
    pub row: usize,
    pub col: usize,
    pub kernel: String,
    pub result: SimResult,
    /// Cycles until the last result leaves the PE.
    pub as_cycles: u64,
    pub alu: AluRun,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlayReport {
    pub pes: Vec<PeRun>,
    /// PEs run concurrently: the slowest one bounds the application.
    pub as_cycles: u64,
    pub alu_cycles: u64,
}

/// Runs every scheduled slot of the overlay in both flavors.
pub fn simulate_overlay(
    o: &OverlayModel,
    schedule: &BTreeMap<(usize, usize), Workload>,
) -> Result<OverlayReport, SimError> {
    let mut rep = OverlayReport::default();
    for (&(row, col), w) in schedule {
        let slot = o
            .slot(row, col)
            .ok_or(SimError::UnassignedSlot { row, col })?;
        let core = slot
            .pe
            .core
            .as_ref()
            .ok_or(SimError::UnassignedSlot { row, col })?;
        let result = simulate_pe(&slot.pe, w)?;
        let alu = simulate_alu(core, w)?;
        let as_cycles = result.cycles;
        rep.as_cycles = rep.as_cycles.max(as_cycles);
        rep.alu_cycles = rep.alu_cycles.max(alu.cycles);
        rep.pes.push(PeRun {
            row,
            col,
            kernel: core.name.clone(),
            result,
            as_cycles,
            alu,
        });
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Dfg, ExtInput, ExtOutput, InputTag};
    use crate::hwlib::{Direction, PrimitiveLibrary, Resources};
    use crate::stitch::{stitch_dfg, wrap_pe, Net, TopPort};

    fn binary(op: &str) -> Dfg {
        let mut g = Dfg::new();
        g.add_vertex(op.parse().unwrap());
        for port in 0..2 {
            g.inputs.push(ExtInput {
                dst: 0,
                port,
                width: 32,
                tag: InputTag::Port,
            });
        }
        g.outputs.push(ExtOutput {
            src: 0,
            src_out: 0,
            tag: "y".into(),
        });
        g
    }

    #[test]
    fn multiplier_streams_after_six_cycles() {
        let n = stitch_dfg("k", &binary("mul"), &PrimitiveLibrary::builtin()).unwrap();
        let vecs: Vec<Vec<u64>> = (0..10).map(|k| vec![k, k + 1]).collect();
        let r = simulate_netlist(&n, &Workload::from_vectors(2, &vecs).unwrap()).unwrap();
        assert_eq!(r.first_valid, Some(6));
        assert_eq!(
            r.results(),
            (0..10).map(|k| vec![k * (k + 1)]).collect::<Vec<_>>()
        );
        assert_eq!(r.throughput, 1.0);
        for t in 6..16 {
            assert!(r.outputs[t][0].is_some());
        }
    }

    #[test]
    fn wire_passes_through_on_cycle_zero() {
        let mut n = Netlist::empty("wire");
        n.ports.push(TopPort {
            name: "in0".into(),
            direction: Direction::In,
            width: 32,
            tag: String::new(),
        });
        n.ports.push(TopPort {
            name: "out0".into(),
            direction: Direction::Out,
            width: 32,
            tag: String::new(),
        });
        n.nets.push(Net {
            driver: Endpoint::Port { index: 0 },
            sinks: vec![Endpoint::Port { index: 1 }],
            width: 32,
        });
        n.resources = Resources::default();
        let r = simulate_netlist(&n, &Workload::from_vectors(1, &[vec![42]]).unwrap()).unwrap();
        assert_eq!(r.outputs, vec![vec![Some(42)]]);
        assert_eq!(r.first_valid, Some(0));
    }

    #[test]
    fn pe_adds_io_cycles_and_alu_is_slower() {
        let n = stitch_dfg("k", &binary("mul"), &PrimitiveLibrary::builtin()).unwrap();
        let pe = wrap_pe(&n, 16).unwrap();
        let vecs: Vec<Vec<u64>> = (0..64).map(|k| vec![k, 3]).collect();
        let w = Workload::from_vectors(2, &vecs).unwrap();
        let r = simulate_pe(&pe, &w).unwrap();
        assert_eq!(r.first_valid, Some(8));
        let alu = simulate_alu(&n, &w).unwrap();
        assert_eq!(alu.results, r.results());
        assert!(r.cycles < alu.cycles);
    }

    #[test]
    fn empty_workload_gives_empty_result() {
        let n = stitch_dfg("k", &binary("add"), &PrimitiveLibrary::builtin()).unwrap();
        let w = Workload::from_vectors(2, &[]).unwrap();
        let r = simulate_netlist(&n, &w).unwrap();
        assert_eq!((r.cycles, r.first_valid), (0, None));
        assert!(simulate_netlist(&n, &Workload::from_vectors(1, &[vec![1]]).unwrap()).is_err());
    }
}
