//! Netlist assembly from library primitives, datapath regularization,
//! processing-element wrapping and the overlay model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::{Dfg, Edge, ExtInput, ExtOutput, InputTag};
use crate::hwlib::{
    lookup, vertex_latency, vertex_resources, Direction, HwlibError, PrimitiveLibrary, Resources,
};
use crate::miner::{Kernel, MergedKernel};
use crate::op::{Op, OpLabel, WIDTHS};

#[derive(Debug, thiserror::Error)]
pub enum StitchError {
    #[error("graph is cyclic")]
    Cyclic,
    #[error(transparent)]
    Library(#[from] HwlibError),
    #[error("vertex {dst} port {port} expects {sink} bits but vertex {src} drives {driver}")]
    WidthMismatch {
        src: usize,
        dst: usize,
        port: u16,
        driver: u8,
        sink: u8,
    },
    #[error("queue depth must be at least 1")]
    QueueDepth,
    #[error("overlay grid must be at least 1x1")]
    EmptyGrid,
    #[error("no slot ({row}, {col}) in a {rows}x{cols} grid")]
    NoSlot {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("slot ({row}, {col}) is wired for {wired_in}/{wired_out} channels but the kernel needs {need_in}/{need_out}")]
    ChannelMismatch {
        row: usize,
        col: usize,
        wired_in: usize,
        wired_out: usize,
        need_in: usize,
        need_out: usize,
    },
    #[error("invalid netlist: {0}")]
    Netlist(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Regularization

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayTarget {
    /// Operand `port` of an original vertex.
    Operand { vertex: usize, port: u16 },
    /// An interface output, by index.
    Output(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delay {
    pub target: DelayTarget,
    pub cycles: u32,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regularized {
    /// Input graph with one delay vertex appended per entry of `delays`.
    pub dfg: Dfg,
    pub delays: Vec<Delay>,
    /// Cycles from inputs to outputs.
    pub latency: u32,
    /// Cycle at which the operands of each vertex arrive.
    pub arrival: Vec<u32>,
    /// Latency of each vertex of `dfg`.
    pub vertex_latency: Vec<u32>,
}

impl Regularized {
    pub fn register_ff(&self) -> u64 {
        self.delays
            .iter()
            .map(|d| d.cycles as u64 * d.width as u64)
            .sum()
    }
}

/// Smallest library width holding `w` bits.
pub fn storage_width(w: u8) -> u8 {
    WIDTHS.iter().copied().find(|&x| x >= w).unwrap_or(64)
}

fn arrivals(g: &Dfg, lat: &[u32]) -> Result<Vec<u32>, StitchError> {
    let order = g.topo_order().map_err(|_| StitchError::Cyclic)?;
    let mut arr = vec![0u32; g.vertex_count()];
    for v in order {
        for e in g.edges.iter().filter(|e| e.dst == v) {
            arr[v] = arr[v].max(arr[e.src] + lat[e.src]);
        }
    }
    Ok(arr)
}

/// Delays early operands so that every vertex sees all of its operands
/// on the same cycle, and pads outputs to the kernel latency.
pub fn regularize_datapath(g: &Dfg, lat: &[u32]) -> Result<Regularized, StitchError> {
    assert_eq!(lat.len(), g.vertex_count(), "one latency per vertex");
    let arr = arrivals(g, lat)?;
    let mut out = g.clone();
    let mut lat_out = lat.to_vec();
    let mut delays = Vec::new();
    let mut add_reg = |out: &mut Dfg, cycles: u32, width: u8| {
        lat_out.push(cycles);
        out.add_vertex(OpLabel::new(Op::Reg(cycles), storage_width(width)))
    };
    for k in 0..g.edges.len() {
        let e = g.edges[k];
        let ready = arr[e.src] + lat[e.src];
        assert!(ready <= arr[e.dst], "arrival is a maximum over in-edges");
        if ready < arr[e.dst] {
            let cycles = arr[e.dst] - ready;
            let width = g.vertices[e.src].result_width();
            let r = add_reg(&mut out, cycles, width);
            out.edges[k] = Edge {
                src: r,
                src_out: 0,
                dst: e.dst,
                port: e.port,
            };
            out.edges.push(Edge {
                src: e.src,
                src_out: e.src_out,
                dst: r,
                port: 0,
            });
            delays.push(Delay {
                target: DelayTarget::Operand {
                    vertex: e.dst,
                    port: e.port,
                },
                cycles,
                width,
            });
        }
    }
    for k in 0..g.inputs.len() {
        let i = g.inputs[k].clone();
        if arr[i.dst] > 0 {
            let cycles = arr[i.dst];
            let r = add_reg(&mut out, cycles, i.width);
            out.inputs[k].dst = r;
            out.inputs[k].port = 0;
            out.edges.push(Edge {
                src: r,
                src_out: 0,
                dst: i.dst,
                port: i.port,
            });
            delays.push(Delay {
                target: DelayTarget::Operand {
                    vertex: i.dst,
                    port: i.port,
                },
                cycles,
                width: i.width,
            });
        }
    }
    let ready = |v: usize| arr[v] + lat[v];
    let latency = if g.outputs.is_empty() {
        (0..g.vertex_count()).map(ready).max().unwrap_or(0)
    } else {
        g.outputs.iter().map(|o| ready(o.src)).max().unwrap()
    };
    for k in 0..g.outputs.len() {
        let o = g.outputs[k].clone();
        if ready(o.src) < latency {
            let cycles = latency - ready(o.src);
            let width = g.vertices[o.src].result_width();
            let r = add_reg(&mut out, cycles, width);
            out.edges.push(Edge {
                src: o.src,
                src_out: o.src_out,
                dst: r,
                port: 0,
            });
            out.outputs[k].src = r;
            out.outputs[k].src_out = 0;
            delays.push(Delay {
                target: DelayTarget::Output(k),
                cycles,
                width,
            });
        }
    }
    out.edges.sort_by_key(|e| (e.dst, e.port));
    let arrival = arrivals(&out, &lat_out)?;
    Ok(Regularized {
        dfg: out,
        delays,
        latency,
        arrival,
        vertex_latency: lat_out,
    })
}

/// [`regularize_datapath`] with latencies taken from a library.
pub fn regularize_with_library(
    g: &Dfg,
    lib: &PrimitiveLibrary,
) -> Result<Regularized, StitchError> {
    let lat: Vec<u32> = g
        .vertices
        .iter()
        .map(|&l| vertex_latency(lib, l))
        .collect::<Result<_, _>>()?;
    regularize_datapath(g, &lat)
}

// ---------------------------------------------------------------------------
// Netlists

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellParams {
    /// Operation label (`icmp.slt`, `mul:16`, `reg6`, ...).
    pub op: String,
    pub width: u8,
    /// Number of input pins.
    pub inputs: u16,
    pub latency: u32,
    pub ii: u32,
    pub resources: Resources,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    /// Library primitive instantiated.
    pub kind: String,
    pub params: CellParams,
}

impl Cell {
    pub fn label(&self) -> Result<OpLabel, StitchError> {
        self.params
            .op
            .parse()
            .map_err(|e| StitchError::Netlist(format!("cell {}: {e}", self.id)))
    }
}

/// A net terminal: a top-level port (index into `Netlist::ports`) or a
/// cell pin (output pin for drivers, input pin for sinks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Endpoint {
    Port { index: usize },
    Cell { cell: usize, pin: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub driver: Endpoint,
    pub sinks: Vec<Endpoint>,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopPort {
    pub name: String,
    pub direction: Direction,
    pub width: u8,
    /// IR value or literal bound to the port, if known.
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub name: String,
    pub cells: Vec<Cell>,
    pub nets: Vec<Net>,
    pub ports: Vec<TopPort>,
    pub latency: u32,
    pub resources: Resources,
    pub registers_inserted: usize,
    pub register_ff: u64,
}

impl Netlist {
    pub fn empty(name: &str) -> Self {
        Netlist {
            name: name.to_string(),
            cells: Vec::new(),
            nets: Vec::new(),
            ports: Vec::new(),
            latency: 0,
            resources: Resources::default(),
            registers_inserted: 0,
            register_ff: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.ports.is_empty()
    }

    pub fn input_ports(&self) -> impl Iterator<Item = (usize, &TopPort)> {
        self.ports
            .iter()
            .enumerate()
            .filter(|(_, p)| p.direction == Direction::In)
    }

    pub fn output_ports(&self) -> impl Iterator<Item = (usize, &TopPort)> {
        self.ports
            .iter()
            .enumerate()
            .filter(|(_, p)| p.direction == Direction::Out)
    }

    pub fn input_count(&self) -> usize {
        self.input_ports().count()
    }

    pub fn output_count(&self) -> usize {
        self.output_ports().count()
    }

    /// Driver of every sink terminal.
    pub fn drivers(&self) -> Result<BTreeMap<Endpoint, Endpoint>, StitchError> {
        let mut d = BTreeMap::new();
        for n in &self.nets {
            for &s in &n.sinks {
                if d.insert(s, n.driver).is_some() {
                    return Err(StitchError::Netlist(format!("{s:?} has several drivers")));
                }
            }
        }
        Ok(d)
    }

    /// Graph view of the netlist. The second value gives, for every
    /// external input of the graph, the ordinal of the input port feeding it.
    pub fn to_dfg(&self) -> Result<(Dfg, Vec<usize>), StitchError> {
        let mut g = Dfg::new();
        for c in &self.cells {
            g.add_vertex(c.label()?);
        }
        let ordinal: BTreeMap<usize, usize> = self
            .input_ports()
            .enumerate()
            .map(|(k, (i, _))| (i, k))
            .collect();
        let mut feeds = Vec::new();
        let mut outputs = BTreeMap::new();
        for n in &self.nets {
            for &sink in &n.sinks {
                match (n.driver, sink) {
                    (Endpoint::Cell { cell: a, pin: o }, Endpoint::Cell { cell: b, pin }) => {
                        g.edges.push(Edge {
                            src: a,
                            src_out: o,
                            dst: b,
                            port: pin,
                        });
                    }
                    (Endpoint::Port { index }, Endpoint::Cell { cell, pin }) => {
                        let k = *ordinal.get(&index).ok_or_else(|| {
                            StitchError::Netlist(format!(
                                "port {index} drives a net but is not an input"
                            ))
                        })?;
                        g.inputs.push(ExtInput {
                            dst: cell,
                            port: pin,
                            width: self.ports[index].width,
                            tag: InputTag::Port,
                        });
                        feeds.push(k);
                    }
                    (Endpoint::Cell { cell, pin }, Endpoint::Port { index }) => {
                        outputs.insert(
                            index,
                            ExtOutput {
                                src: cell,
                                src_out: pin,
                                tag: self.ports[index].tag.clone(),
                            },
                        );
                    }
                    (Endpoint::Port { .. }, Endpoint::Port { index }) => {
                        return Err(StitchError::Netlist(format!(
                            "output port {index} is wired straight to an input"
                        )));
                    }
                }
            }
        }
        for (i, _) in self.output_ports() {
            let o = outputs
                .remove(&i)
                .ok_or_else(|| StitchError::Netlist(format!("output port {i} is not driven")))?;
            g.outputs.push(o);
        }
        Ok((g, feeds))
    }

    /// Cells in an order where drivers precede their sinks.
    pub fn cell_order(&self) -> Result<Vec<usize>, StitchError> {
        let n = self.cells.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for net in &self.nets {
            if let Endpoint::Cell { cell: a, .. } = net.driver {
                for s in &net.sinks {
                    if let Endpoint::Cell { cell: b, .. } = *s {
                        succ[a].push(b);
                        indeg[b] += 1;
                    }
                }
            }
        }
        let mut ready: Vec<usize> = (0..n).rev().filter(|&c| indeg[c] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(c) = ready.pop() {
            order.push(c);
            for &s in &succ[c] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(s);
                }
            }
        }
        if order.len() != n {
            return Err(StitchError::Cyclic);
        }
        Ok(order)
    }

    /// Checks single drivers, full connectivity and acyclicity.
    pub fn validate(&self) -> Result<(), StitchError> {
        let drivers = self.drivers()?;
        for (k, c) in self.cells.iter().enumerate() {
            if c.id != k {
                return Err(StitchError::Netlist(format!("cell {k} has id {}", c.id)));
            }
            c.label()?;
            for pin in 0..c.params.inputs {
                if !drivers.contains_key(&Endpoint::Cell { cell: k, pin }) {
                    return Err(StitchError::Netlist(format!(
                        "cell {k} pin {pin} is undriven"
                    )));
                }
            }
        }
        for (k, _) in self.output_ports() {
            if !drivers.contains_key(&Endpoint::Port { index: k }) {
                return Err(StitchError::Netlist(format!("output port {k} is undriven")));
            }
        }
        self.cell_order()?;
        Ok(())
    }

    /// Longest input-to-output path in cycles, recomputed from the cells.
    pub fn critical_path(&self) -> Result<u32, StitchError> {
        let drivers = self.drivers()?;
        let mut ready = vec![0u32; self.cells.len()];
        let at = |ready: &[u32], e: &Endpoint| match e {
            Endpoint::Port { .. } => 0,
            Endpoint::Cell { cell, .. } => ready[*cell],
        };
        for c in self.cell_order()? {
            let arrive = (0..self.cells[c].params.inputs)
                .map(|pin| {
                    drivers
                        .get(&Endpoint::Cell { cell: c, pin })
                        .map_or(0, |d| at(&ready, d))
                })
                .max()
                .unwrap_or(0);
            ready[c] = arrive + self.cells[c].params.latency;
        }
        Ok(self
            .output_ports()
            .map(|(k, _)| {
                drivers
                    .get(&Endpoint::Port { index: k })
                    .map_or(0, |d| at(&ready, d))
            })
            .max()
            .unwrap_or(0))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("netlist serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, StitchError> {
        let n: Netlist = serde_json::from_str(text)?;
        n.validate()?;
        Ok(n)
    }

    pub fn save(&self, path: &Path) -> Result<(), StitchError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StitchError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn tag_text(t: &InputTag) -> String {
    match t {
        InputTag::Value(v) => v.clone(),
        InputTag::Const(c) => c.to_string(),
        InputTag::Port => String::new(),
    }
}

/// Builds the regularized netlist of a kernel graph: one cell per vertex
/// plus one register cell per inserted delay.
pub fn stitch_dfg(name: &str, g: &Dfg, lib: &PrimitiveLibrary) -> Result<Netlist, StitchError> {
    g.validate()
        .map_err(|e| StitchError::Netlist(e.to_string()))?;
    for e in &g.edges {
        let driver = g.vertices[e.src].result_width();
        let sink = g.vertices[e.dst].port_width(e.port as usize);
        if driver > sink {
            return Err(StitchError::WidthMismatch {
                src: e.src,
                dst: e.dst,
                port: e.port,
                driver,
                sink,
            });
        }
    }
    let reg = regularize_with_library(g, lib)?;
    let r = &reg.dfg;

    let mut cells = Vec::with_capacity(r.vertex_count());
    for (v, &label) in r.vertices.iter().enumerate() {
        let prim = lookup(lib, label.op, label.width)?;
        cells.push(Cell {
            id: v,
            kind: prim.opcode.clone(),
            params: CellParams {
                op: label.to_string(),
                width: label.width,
                inputs: r.arity(v) as u16,
                latency: reg.vertex_latency[v],
                ii: prim.initiation_interval,
                resources: vertex_resources(lib, label)?,
            },
        });
    }

    let mut ports = Vec::new();
    let mut nets = Vec::new();
    for (k, i) in r.inputs.iter().enumerate() {
        ports.push(TopPort {
            name: format!("in{k}"),
            direction: Direction::In,
            width: i.width,
            tag: tag_text(&i.tag),
        });
        nets.push(Net {
            driver: Endpoint::Port { index: k },
            sinks: vec![Endpoint::Cell {
                cell: i.dst,
                pin: i.port,
            }],
            width: i.width,
        });
    }
    let n_in = ports.len();
    for (k, o) in r.outputs.iter().enumerate() {
        let width = r.vertices[o.src].result_width();
        ports.push(TopPort {
            name: format!("out{k}"),
            direction: Direction::Out,
            width,
            tag: o.tag.clone(),
        });
    }
    let mut by_driver: BTreeMap<(usize, u16), Vec<Endpoint>> = BTreeMap::new();
    for e in &r.edges {
        by_driver
            .entry((e.src, e.src_out))
            .or_default()
            .push(Endpoint::Cell {
                cell: e.dst,
                pin: e.port,
            });
    }
    for (k, o) in r.outputs.iter().enumerate() {
        by_driver
            .entry((o.src, o.src_out))
            .or_default()
            .push(Endpoint::Port { index: n_in + k });
    }
    for ((src, pin), mut sinks) in by_driver {
        sinks.sort();
        nets.push(Net {
            driver: Endpoint::Cell { cell: src, pin },
            sinks,
            width: r.vertices[src].result_width(),
        });
    }

    let netlist = Netlist {
        name: name.to_string(),
        resources: cells.iter().map(|c| c.params.resources).sum(),
        cells,
        nets,
        ports,
        latency: reg.latency,
        registers_inserted: reg.delays.len(),
        register_ff: reg
            .delays
            .iter()
            .map(|d| d.cycles as u64 * storage_width(d.width) as u64)
            .sum(),
    };
    netlist.validate()?;
    Ok(netlist)
}

pub fn stitch_kernel(k: &Kernel, lib: &PrimitiveLibrary) -> Result<Netlist, StitchError> {
    stitch_dfg(&format!("k{}", k.id), &k.dfg, lib)
}

pub fn stitch_merged(k: &MergedKernel, lib: &PrimitiveLibrary) -> Result<Netlist, StitchError> {
    stitch_dfg(&format!("k{}", k.id), &k.dfg, lib)
}

// ---------------------------------------------------------------------------
// Processing elements

pub const CHANNEL_WIDTH: u8 = 32;
pub const DEFAULT_QUEUE_DEPTH: usize = 16;
/// Cycles added by the input and output registers of a PE.
pub const PE_IO_CYCLES: u32 = 2;
/// LUTs of the latency-configured control module.
pub const PE_CONTROL_LUT: u64 = 32;
/// LUTs of the queue logic of one channel.
pub const PE_CHANNEL_LUT: u64 = 8;

/// Channels needed to carry ports of the given widths.
pub fn channels<'a>(widths: impl Iterator<Item = &'a TopPort>) -> usize {
    widths
        .map(|p| (p.width as usize).div_ceil(CHANNEL_WIDTH as usize).max(1))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeModel {
    pub input_channels: usize,
    pub output_channels: usize,
    pub queue_depth: usize,
    /// Latency the control module waits for.
    pub control_latency: u32,
    /// Kernel netlist; `None` for a black box.
    pub core: Option<Netlist>,
}

impl PeModel {
    pub fn blackbox(input_channels: usize, output_channels: usize, queue_depth: usize) -> Self {
        PeModel {
            input_channels,
            output_channels,
            queue_depth,
            control_latency: 0,
            core: None,
        }
    }

    pub fn is_blackbox(&self) -> bool {
        self.core.is_none()
    }

    /// Queues, channel registers, configuration register and control.
    pub fn overhead(&self) -> Resources {
        let ch = (self.input_channels + self.output_channels) as u64;
        let w = CHANNEL_WIDTH as u64;
        Resources::new(
            PE_CONTROL_LUT + PE_CHANNEL_LUT * ch,
            w * ch + w + self.queue_depth as u64 * w * ch,
            0,
            0,
        )
    }

    pub fn core_resources(&self) -> Resources {
        self.core.as_ref().map(|c| c.resources).unwrap_or_default()
    }

    pub fn resources(&self) -> Resources {
        self.overhead() + self.core_resources()
    }

    /// Cycle of the first result after the first operands enter.
    pub fn latency(&self) -> u32 {
        self.control_latency + PE_IO_CYCLES
    }
}

/// Wraps a kernel netlist into a PE with one 32-bit channel per 32 bits
/// of interface. An empty netlist gives an unassigned black box.
pub fn wrap_pe(core: &Netlist, queue_depth: usize) -> Result<PeModel, StitchError> {
    if queue_depth < 1 {
        return Err(StitchError::QueueDepth);
    }
    if core.is_empty() {
        return Ok(PeModel::blackbox(0, 0, queue_depth));
    }
    Ok(PeModel {
        input_channels: channels(core.input_ports().map(|p| p.1)),
        output_channels: channels(core.output_ports().map(|p| p.1)),
        queue_depth,
        control_latency: core.latency,
        core: Some(core.clone()),
    })
}

// ---------------------------------------------------------------------------
// Overlays

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotWiring {
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub row: usize,
    pub col: usize,
    /// Channels routed to the slot; `None` adapts to the kernel.
    pub wiring: Option<SlotWiring>,
    pub pe: PeModel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayModel {
    pub name: String,
    pub grid: Grid,
    pub queue_depth: usize,
    /// Row-major.
    pub slots: Vec<Slot>,
}

impl OverlayModel {
    /// Grid of black boxes.
    pub fn new(
        name: &str,
        rows: usize,
        cols: usize,
        queue_depth: usize,
    ) -> Result<Self, StitchError> {
        if rows == 0 || cols == 0 {
            return Err(StitchError::EmptyGrid);
        }
        if queue_depth < 1 {
            return Err(StitchError::QueueDepth);
        }
        let slots = (0..rows * cols)
            .map(|k| Slot {
                row: k / cols,
                col: k % cols,
                wiring: None,
                pe: PeModel::blackbox(0, 0, queue_depth),
            })
            .collect();
        Ok(OverlayModel {
            name: name.to_string(),
            grid: Grid { rows, cols },
            queue_depth,
            slots,
        })
    }

    /// Routes a fixed number of channels to every slot.
    pub fn with_wiring(mut self, wiring: SlotWiring) -> Self {
        for s in &mut self.slots {
            s.wiring = Some(wiring);
            s.pe.input_channels = wiring.inputs;
            s.pe.output_channels = wiring.outputs;
        }
        self
    }

    pub fn slot(&self, row: usize, col: usize) -> Option<&Slot> {
        (row < self.grid.rows && col < self.grid.cols)
            .then(|| &self.slots[row * self.grid.cols + col])
    }

    pub fn assigned(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(|s| !s.pe.is_blackbox())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("overlay serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, StitchError> {
        let o: OverlayModel = serde_json::from_str(text)?;
        if o.grid.rows == 0 || o.grid.cols == 0 {
            return Err(StitchError::EmptyGrid);
        }
        if o.slots.len() != o.grid.rows * o.grid.cols {
            return Err(StitchError::Netlist(format!(
                "{} slots for a {}x{} grid",
                o.slots.len(),
                o.grid.rows,
                o.grid.cols
            )));
        }
        for s in &o.slots {
            if let Some(c) = &s.pe.core {
                c.validate()?;
            }
        }
        Ok(o)
    }

    pub fn save(&self, path: &Path) -> Result<(), StitchError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StitchError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Reads kernel netlists into the black boxes of `overlay`.
pub fn fill_blackboxes(
    overlay: &OverlayModel,
    assignments: &BTreeMap<(usize, usize), Netlist>,
) -> Result<OverlayModel, StitchError> {
    let mut out = overlay.clone();
    for (&(row, col), core) in assignments {
        let Grid { rows, cols } = out.grid;
        if row >= rows || col >= cols {
            return Err(StitchError::NoSlot {
                row,
                col,
                rows,
                cols,
            });
        }
        let slot = &mut out.slots[row * cols + col];
        let pe = wrap_pe(core, out.queue_depth)?;
        if let Some(w) = slot.wiring {
            if !pe.is_blackbox()
                && (w.inputs != pe.input_channels || w.outputs != pe.output_channels)
            {
                return Err(StitchError::ChannelMismatch {
                    row,
                    col,
                    wired_in: w.inputs,
                    wired_out: w.outputs,
                    need_in: pe.input_channels,
                    need_out: pe.output_channels,
                });
            }
        }
        slot.pe = match (pe.is_blackbox(), slot.wiring) {
            (true, Some(w)) => PeModel::blackbox(w.inputs, w.outputs, out.queue_depth),
            _ => pe,
        };
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Resource estimation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeResources {
    pub row: usize,
    pub col: usize,
    pub overhead: Resources,
    pub core: Resources,
    pub alu_core: Resources,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    /// Application-specific PEs: overhead plus kernel core.
    pub as_total: Resources,
    /// Same grid with a generic ALU in every PE.
    pub alu_total: Resources,
    /// Kernel cores alone.
    pub bare_total: Resources,
    pub per_pe: Vec<PeResources>,
}

/// Generic ALU core: one 32-bit instance of every ALU operation, a
/// result-select mux tree and an instruction register.
pub fn alu_core_resources(lib: &PrimitiveLibrary) -> Result<Resources, StitchError> {
    let mut r = Resources::default();
    for op in Op::ALU_OPS {
        r += lookup(lib, op, CHANNEL_WIDTH)?.resources;
    }
    let w = CHANNEL_WIDTH as u64;
    r += Resources::new(w * (Op::ALU_OPS.len() as u64 - 1), w, 0, 0);
    Ok(r)
}

pub fn estimate_resources(
    o: &OverlayModel,
    lib: &PrimitiveLibrary,
) -> Result<ResourceReport, StitchError> {
    let alu = alu_core_resources(lib)?;
    let per_pe: Vec<PeResources> = o
        .slots
        .iter()
        .map(|s| PeResources {
            row: s.row,
            col: s.col,
            overhead: s.pe.overhead(),
            core: s.pe.core_resources(),
            alu_core: alu,
        })
        .collect();
    Ok(ResourceReport {
        as_total: per_pe.iter().map(|p| p.overhead + p.core).sum(),
        alu_total: per_pe.iter().map(|p| p.overhead + p.alu_core).sum(),
        bare_total: per_pe.iter().map(|p| p.core).sum(),
        per_pe,
    })
}
