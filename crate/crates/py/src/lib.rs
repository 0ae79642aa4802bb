//! Python bindings.

use std::collections::{BTreeMap, HashMap};

use overlayforge::graph::{parse_dfg, print_dfg, Dfg};
use overlayforge::hwlib::PrimitiveLibrary;
use overlayforge::ir::{build_cdfgs, parse_ir_named, print_ir, IrModule};
use overlayforge::miner::{self, MiningConfig};
use overlayforge::op::Word;
use overlayforge::sim::{self, Memory, Workload, DEFAULT_STEP_LIMIT};
use overlayforge::stitch::{self, OverlayModel};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn resources_dict(r: overlayforge::hwlib::Resources) -> BTreeMap<&'static str, u64> {
    BTreeMap::from([
        ("lut", r.lut),
        ("ff", r.ff),
        ("dsp", r.dsp),
        ("bram", r.bram),
    ])
}

/// Parsed IR module.
#[pyclass(name = "Module", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModuleIr {
    inner: IrModule,
}

#[pymethods]
impl PyModuleIr {
    #[new]
    #[pyo3(signature = (text, name = "module"))]
    fn new(text: &str, name: &str) -> PyResult<Self> {
        Ok(PyModuleIr {
            inner: parse_ir_named(name, text).map_err(err)?,
        })
    }

    #[getter]
    fn functions(&self) -> Vec<String> {
        self.inner
            .functions
            .iter()
            .map(|f| f.name.clone())
            .collect()
    }

    fn __str__(&self) -> String {
        print_ir(&self.inner)
    }

    /// Runs `function`; returns `(ret, memory)`. `kernels` supplies the
    /// graphs behind hardware calls.
    #[pyo3(signature = (function, args, memory = None, kernels = None))]
    fn interpret(
        &self,
        function: &str,
        args: Vec<u64>,
        memory: Option<BTreeMap<u64, u64>>,
        kernels: Option<Vec<PyKernel>>,
    ) -> PyResult<(Option<u64>, BTreeMap<u64, u64>)> {
        let mut mem = Memory {
            cells: memory.unwrap_or_default(),
        };
        let kmap: HashMap<u32, Dfg> = kernels
            .unwrap_or_default()
            .into_iter()
            .map(|k| (k.inner.id, k.inner.dfg))
            .collect();
        let args: Vec<Word> = args.into_iter().map(|a| Word::new(a, 64)).collect();
        let out = sim::interpret_ir(
            &self.inner,
            function,
            &args,
            &mut mem,
            &kmap,
            DEFAULT_STEP_LIMIT,
        )
        .map_err(err)?;
        Ok((out.ret.map(|w| w.bits), mem.cells))
    }
}

#[pyclass(name = "Kernel", frozen, from_py_object)]
#[derive(Clone)]
struct PyKernel {
    inner: miner::Kernel,
}

#[pymethods]
impl PyKernel {
    #[getter]
    fn id(&self) -> u32 {
        self.inner.id
    }

    #[getter]
    fn support(&self) -> usize {
        self.inner.support
    }

    #[getter]
    fn inputs(&self) -> usize {
        self.inner.input_count()
    }

    #[getter]
    fn outputs(&self) -> usize {
        self.inner.output_count()
    }

    /// Kernel graph in the interchange format.
    #[getter]
    fn dfg(&self) -> String {
        print_dfg(&self.inner.dfg)
    }

    /// Evaluates the kernel graph on one input vector.
    fn evaluate(&self, inputs: Vec<u64>) -> PyResult<Vec<u64>> {
        evaluate(&self.inner.dfg, &inputs)
    }

    fn __repr__(&self) -> String {
        format!(
            "Kernel(id={}, support={}, inputs={}, outputs={})",
            self.inner.id,
            self.inner.support,
            self.inner.input_count(),
            self.inner.output_count()
        )
    }
}

fn evaluate(g: &Dfg, inputs: &[u64]) -> PyResult<Vec<u64>> {
    let args: Vec<Word> = g
        .inputs
        .iter()
        .zip(inputs)
        .map(|(i, &v)| Word::new(v, i.width))
        .collect();
    if args.len() != g.inputs.len() {
        return Err(err(format!(
            "expected {} inputs, got {}",
            g.inputs.len(),
            inputs.len()
        )));
    }
    Ok(sim::interpret_dfg(g, &args)
        .map_err(err)?
        .outputs
        .iter()
        .map(|w| w.bits)
        .collect())
}

#[pyclass(name = "Library", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLibrary {
    inner: PrimitiveLibrary,
}

#[pymethods]
impl PyLibrary {
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => PrimitiveLibrary::from_json(text).map_err(err)?,
            None => PrimitiveLibrary::builtin(),
        };
        Ok(PyLibrary { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn latency(&self, opcode: &str, width: u8) -> PyResult<u32> {
        Ok(self.inner.get(opcode, width).map_err(err)?.latency)
    }
}

fn lib_or_builtin(lib: Option<&PyLibrary>) -> PrimitiveLibrary {
    lib.map(|l| l.inner.clone()).unwrap_or_default()
}

#[pyclass(name = "Netlist", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyNetlist {
    inner: stitch::Netlist,
}

#[pymethods]
impl PyNetlist {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyNetlist {
            inner: stitch::Netlist::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn latency(&self) -> u32 {
        self.inner.latency
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.cells.len()
    }

    #[getter]
    fn resources(&self) -> BTreeMap<&'static str, u64> {
        resources_dict(self.inner.resources)
    }

    /// Combinational evaluation of one input vector.
    fn evaluate(&self, inputs: Vec<u64>) -> PyResult<Vec<u64>> {
        sim::interpret_netlist(&self.inner, &inputs).map_err(err)
    }

    /// Cycle-level simulation; returns `(results, cycles, first_valid)`.
    fn simulate(&self, vectors: Vec<Vec<u64>>) -> PyResult<(Vec<Vec<u64>>, u64, Option<u64>)> {
        let w = Workload::from_vectors(self.inner.input_count(), &vectors).map_err(err)?;
        let r = sim::simulate_netlist(&self.inner, &w).map_err(err)?;
        Ok((r.results(), r.cycles, r.first_valid))
    }
}

#[pyclass(name = "Overlay", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOverlay {
    inner: OverlayModel,
}

#[pymethods]
impl PyOverlay {
    #[new]
    #[pyo3(signature = (rows, cols, queue_depth = stitch::DEFAULT_QUEUE_DEPTH, name = "overlay"))]
    fn new(rows: usize, cols: usize, queue_depth: usize, name: &str) -> PyResult<Self> {
        Ok(PyOverlay {
            inner: OverlayModel::new(name, rows, cols, queue_depth).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyOverlay {
            inner: OverlayModel::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn assigned(&self) -> usize {
        self.inner.assigned().count()
    }

    /// New overlay with `netlist` in every slot, or in the given slots.
    #[pyo3(signature = (netlist, slots = None))]
    fn fill(&self, netlist: &PyNetlist, slots: Option<Vec<(usize, usize)>>) -> PyResult<Self> {
        let slots =
            slots.unwrap_or_else(|| self.inner.slots.iter().map(|s| (s.row, s.col)).collect());
        let assign: BTreeMap<_, _> = slots
            .into_iter()
            .map(|s| (s, netlist.inner.clone()))
            .collect();
        Ok(PyOverlay {
            inner: stitch::fill_blackboxes(&self.inner, &assign).map_err(err)?,
        })
    }

    /// Resource totals per flavor: `as`, `alu` and `bare`.
    #[pyo3(signature = (lib = None))]
    fn resources(
        &self,
        lib: Option<&PyLibrary>,
    ) -> PyResult<BTreeMap<&'static str, BTreeMap<&'static str, u64>>> {
        let r = stitch::estimate_resources(&self.inner, &lib_or_builtin(lib)).map_err(err)?;
        Ok(BTreeMap::from([
            ("as", resources_dict(r.as_total)),
            ("alu", resources_dict(r.alu_total)),
            ("bare", resources_dict(r.bare_total)),
        ]))
    }

    /// Runs the same vectors on every assigned PE; returns the aggregate
    /// `(as_cycles, alu_cycles)`.
    fn simulate(&self, vectors: Vec<Vec<u64>>) -> PyResult<(u64, u64)> {
        let mut schedule = BTreeMap::new();
        for s in self.inner.assigned() {
            let core = s.pe.core.as_ref().expect("assigned slots have a core");
            let w = Workload::from_vectors(core.input_count(), &vectors).map_err(err)?;
            schedule.insert((s.row, s.col), w);
        }
        let r = sim::simulate_overlay(&self.inner, &schedule).map_err(err)?;
        Ok((r.as_cycles, r.alu_cycles))
    }
}

/// Mines kernels from every basic block of `module`.
#[pyfunction]
#[pyo3(signature = (module, min_support = 2))]
fn mine(module: &PyModuleIr, min_support: usize) -> PyResult<Vec<PyKernel>> {
    let cfg = MiningConfig {
        min_support,
        ..Default::default()
    };
    let ks = miner::mine_kernels(&build_cdfgs(&module.inner), &cfg).map_err(err)?;
    Ok(ks.into_iter().map(|inner| PyKernel { inner }).collect())
}

#[pyfunction]
fn primary_kernel(kernels: Vec<PyKernel>) -> Option<PyKernel> {
    let ks: Vec<miner::Kernel> = kernels.into_iter().map(|k| k.inner).collect();
    miner::primary_kernel(&ks).map(|k| PyKernel { inner: k.clone() })
}

/// Replaces kernel occurrences in `module` with hardware calls.
#[pyfunction]
fn inject(module: &PyModuleIr, kernels: Vec<PyKernel>) -> PyModuleIr {
    let ks: Vec<miner::Kernel> = kernels.into_iter().map(|k| k.inner).collect();
    PyModuleIr {
        inner: miner::inject_hwcalls(&module.inner, &ks),
    }
}

#[pyfunction]
#[pyo3(signature = (kernel, lib = None))]
fn generate(kernel: &PyKernel, lib: Option<&PyLibrary>) -> PyResult<PyNetlist> {
    Ok(PyNetlist {
        inner: stitch::stitch_kernel(&kernel.inner, &lib_or_builtin(lib)).map_err(err)?,
    })
}

/// Stitches a graph given in the interchange format.
#[pyfunction]
#[pyo3(signature = (dfg, name = "k", lib = None))]
fn generate_dfg(dfg: &str, name: &str, lib: Option<&PyLibrary>) -> PyResult<PyNetlist> {
    let g = parse_dfg(dfg).map_err(err)?;
    Ok(PyNetlist {
        inner: stitch::stitch_dfg(name, &g, &lib_or_builtin(lib)).map_err(err)?,
    })
}

/// `(vertex, port, cycles)`.
type OperandDelay = (usize, u16, u32);

/// Delay placement for a graph with the given per-vertex latencies:
/// `(latency, [(vertex, port, cycles)])` for operand delays.
#[pyfunction]
fn regularize(dfg: &str, latencies: Vec<u32>) -> PyResult<(u32, Vec<OperandDelay>)> {
    let g = parse_dfg(dfg).map_err(err)?;
    if latencies.len() != g.vertex_count() {
        return Err(err(format!(
            "expected {} latencies, got {}",
            g.vertex_count(),
            latencies.len()
        )));
    }
    let r = stitch::regularize_datapath(&g, &latencies).map_err(err)?;
    let delays = r
        .delays
        .iter()
        .filter_map(|d| match d.target {
            stitch::DelayTarget::Operand { vertex, port } => Some((vertex, port, d.cycles)),
            stitch::DelayTarget::Output(_) => None,
        })
        .collect();
    Ok((r.latency, delays))
}

#[pymodule]
fn overlayforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModuleIr>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyLibrary>()?;
    m.add_class::<PyNetlist>()?;
    m.add_class::<PyOverlay>()?;
    m.add_function(wrap_pyfunction!(mine, m)?)?;
    m.add_function(wrap_pyfunction!(primary_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(inject, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dfg, m)?)?;
    m.add_function(wrap_pyfunction!(regularize, m)?)?;
    Ok(())
}
