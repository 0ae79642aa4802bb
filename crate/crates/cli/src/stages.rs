use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use overlayforge::graph::{parse_dfg, print_dfg, Dfg};
use overlayforge::hwlib::{load_library, PrimitiveLibrary};
use overlayforge::ir::{build_block_graphs, parse_ir_named, print_ir, IrModule};
use overlayforge::miner::{
    inject_hwcalls_traced, merge_kernels_with_diagnostics, mine_kernels, primary_kernel, Kernel,
    MiningConfig,
};
use overlayforge::sim::{interpret_netlist, simulate_overlay, OverlayReport, Workload};
use overlayforge::stitch::{
    estimate_resources, fill_blackboxes, stitch_dfg, Netlist, OverlayModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Common, Flavor, GenerateArgs, MineArgs, SimArgs, StitchArgs};

pub const MINING_REPORT: &str = "mining_report.json";
pub const MINING_TIMES: &str = "mining_times.csv";
pub const KERNEL_DIR: &str = "kernels";
pub const NETLIST_DIR: &str = "netlists";
pub const REWRITTEN_DIR: &str = "rewritten";
pub const OVERLAY_FILE: &str = "overlay.json";
pub const SIM_REPORT: &str = "sim_report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelRow {
    pub id: u32,
    pub support: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub vertices: usize,
    pub embeddings: usize,
    /// Operations of the kernel in vertex order.
    pub ops: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedRow {
    pub id: u32,
    pub kernels: Vec<u32>,
    pub inputs: usize,
    pub outputs: usize,
    pub demuxes: usize,
    pub registers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppReport {
    pub name: String,
    pub file: String,
    pub functions: Vec<String>,
    pub primary: Option<u32>,
    pub hwcalls: usize,
    pub kernels: Vec<KernelRow>,
    pub merged: Vec<MergedRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningReport {
    pub min_support: usize,
    pub joint: bool,
    pub applications: Vec<AppReport>,
}

pub fn load_lib(c: &Common) -> Result<PrimitiveLibrary> {
    match &c.lib {
        Some(p) => load_library(p).with_context(|| format!("library {}", p.display())),
        None => Ok(PrimitiveLibrary::builtin()),
    }
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Files under `inputs`, expanding directories to their `*.<ext>` entries.
fn collect_files(inputs: &[PathBuf], ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == ext))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            ensure!(p.exists(), "no such file: {}", p.display());
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

fn kernel_row(k: &Kernel) -> KernelRow {
    KernelRow {
        id: k.id,
        support: k.support,
        inputs: k.input_count(),
        outputs: k.output_count(),
        vertices: k.dfg.vertex_count(),
        embeddings: k.embeddings.len(),
        ops: k
            .dfg
            .vertices
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    }
}

struct App {
    name: String,
    file: PathBuf,
    module: IrModule,
}

/// Mines one transaction set and rewrites its module. Kernel ids start
/// at `first_id`.
fn mine_module(
    module: &IrModule,
    cfg: &MiningConfig,
    blocks: bool,
    first_id: u32,
) -> Result<(Vec<Kernel>, IrModule, usize, f64)> {
    let t = Instant::now();
    let graphs: Vec<Dfg> = build_block_graphs(module)
        .into_iter()
        .map(|b| b.dfg)
        .collect();
    let mut ks = if blocks {
        let mut ks: Vec<Kernel> = Vec::new();
        for (i, g) in graphs.iter().enumerate() {
            ks.extend(Kernel::from_block(ks.len() as u32, i, g));
        }
        ks
    } else {
        mine_kernels(&graphs, cfg).with_context(|| format!("mining {}", module.name))?
    };
    let secs = t.elapsed().as_secs_f64();
    for k in &mut ks {
        k.id += first_id;
    }
    let inj = inject_hwcalls_traced(module, &ks);
    for w in &inj.warnings {
        info!("{}: {w}", module.name);
    }
    Ok((ks, inj.module, inj.calls.len(), secs))
}

pub fn mine(c: &Common, a: &MineArgs) -> Result<()> {
    let files = collect_files(&a.inputs, "ir")?;
    if files.is_empty() {
        bail!("no input");
    }
    let mut apps = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        let name = stem(f);
        let module =
            parse_ir_named(&name, &text).with_context(|| format!("parsing {}", f.display()))?;
        apps.push(App {
            name,
            file: f.clone(),
            module,
        });
    }
    ensure!(
        !(a.joint && a.merge),
        "--merge works on per-file mining only"
    );
    let cfg = MiningConfig {
        min_support: a.min_support as usize,
        ..Default::default()
    };

    // (kernels, rewritten module, hwcall count, seconds) per application.
    let mut results = Vec::new();
    let mut all_kernels = Vec::new();
    if a.joint {
        let mut joint = IrModule {
            name: "joint".into(),
            functions: Vec::new(),
        };
        let mut seen = BTreeSet::new();
        for app in &apps {
            for f in &app.module.functions {
                ensure!(
                    seen.insert(f.name.clone()),
                    "function `{}` is defined in more than one file",
                    f.name
                );
                joint.functions.push(f.clone());
            }
        }
        let (ks, rewritten, _, secs) = mine_module(&joint, &cfg, a.blocks, 0)?;
        let block_fn: Vec<usize> = build_block_graphs(&joint)
            .iter()
            .map(|b| b.function)
            .collect();
        let mut offset = 0;
        for app in &apps {
            let range = offset..offset + app.module.functions.len();
            offset = range.end;
            let own: Vec<Kernel> = ks
                .iter()
                .filter(|k| {
                    k.embeddings
                        .iter()
                        .any(|e| range.contains(&block_fn[e.graph_index]))
                })
                .cloned()
                .collect();
            let module = IrModule {
                name: app.name.clone(),
                functions: rewritten.functions[range.clone()].to_vec(),
            };
            let calls = module
                .functions
                .iter()
                .flat_map(|f| &f.blocks)
                .flat_map(|b| &b.instructions)
                .filter(|i| matches!(i.kind, overlayforge::ir::InstKind::HwCall(_)))
                .count();
            results.push((own, module, calls, secs));
        }
        all_kernels = ks;
    } else {
        let mut next = 0;
        for app in &apps {
            let r = mine_module(&app.module, &cfg, a.blocks, next)?;
            next = r.0.iter().map(|k| k.id + 1).max().unwrap_or(next);
            all_kernels.extend(r.0.iter().cloned());
            results.push(r);
        }
    }

    let kdir = c.out.join(KERNEL_DIR);
    if kdir.exists() {
        for old in collect_files(std::slice::from_ref(&kdir), "dfg")? {
            fs::remove_file(&old).with_context(|| format!("removing {}", old.display()))?;
        }
    }
    for k in &all_kernels {
        write(&kdir.join(format!("k{}.dfg", k.id)), &print_dfg(&k.dfg))?;
    }
    let mut next_id = all_kernels.iter().map(|k| k.id + 1).max().unwrap_or(0);

    let mut report = MiningReport {
        min_support: cfg.min_support,
        joint: a.joint,
        applications: Vec::new(),
    };
    let mut times = String::from("application,seconds\n");
    for (app, (ks, rewritten, calls, secs)) in apps.iter().zip(&results) {
        write(
            &c.out.join(REWRITTEN_DIR).join(format!("{}.ir", app.name)),
            &print_ir(rewritten),
        )?;
        let mut merged = Vec::new();
        if a.merge {
            let (ms, diags) = merge_kernels_with_diagnostics(ks, &app.module);
            for d in diags {
                warn!("{}: {d}", app.name);
            }
            for mut m in ms.into_iter().filter(|m| m.is_merged()) {
                m.id = next_id;
                next_id += 1;
                write(&kdir.join(format!("k{}.dfg", m.id)), &print_dfg(&m.dfg))?;
                merged.push(MergedRow {
                    id: m.id,
                    kernels: m.kernel_ids.clone(),
                    inputs: m.dfg.inputs.len(),
                    outputs: m.dfg.outputs.len(),
                    demuxes: m.demux_count(),
                    registers: m.register_count(),
                });
            }
        }
        let primary = primary_kernel(ks).map(|k| k.id);
        for k in ks {
            let mark = if Some(k.id) == primary {
                " primary"
            } else {
                ""
            };
            println!(
                "{} k{} support={} inputs={} outputs={}{mark}",
                app.name,
                k.id,
                k.support,
                k.input_count(),
                k.output_count()
            );
        }
        if ks.is_empty() {
            println!("{} no kernels", app.name);
        }
        times.push_str(&format!("{},{secs:.6}\n", app.name));
        report.applications.push(AppReport {
            name: app.name.clone(),
            file: app.file.display().to_string(),
            functions: app
                .module
                .functions
                .iter()
                .map(|f| f.name.clone())
                .collect(),
            primary,
            hwcalls: *calls,
            kernels: ks.iter().map(kernel_row).collect(),
            merged,
        });
    }
    write(&c.out.join(MINING_REPORT), &to_json(&report))?;
    write(&c.out.join(MINING_TIMES), &times)?;
    Ok(())
}

/// Kernel id encoded in a `k<id>` file name.
pub fn kernel_id(path: &Path) -> Option<u32> {
    stem(path).strip_prefix('k')?.parse().ok()
}

pub fn generate(c: &Common, a: &GenerateArgs) -> Result<()> {
    let lib = load_lib(c)?;
    let files = if a.kernels.is_empty() {
        let dir = c.out.join(KERNEL_DIR);
        ensure!(dir.is_dir(), "missing kernel directory {}", dir.display());
        collect_files(&[dir], "dfg")?
    } else {
        collect_files(&a.kernels, "dfg")?
    };
    let mut files: Vec<(Option<u32>, PathBuf)> =
        files.into_iter().map(|f| (kernel_id(&f), f)).collect();
    files.sort();
    for (_, f) in files {
        let text = fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        let g = parse_dfg(&text).with_context(|| format!("parsing {}", f.display()))?;
        let name = stem(&f);
        let n = stitch_dfg(&name, &g, &lib).with_context(|| format!("stitching {name}"))?;
        write(
            &c.out.join(NETLIST_DIR).join(format!("{name}.json")),
            &n.to_json(),
        )?;
        println!(
            "{name} latency={} cells={} registers={} {}",
            n.latency,
            n.cells.len(),
            n.registers_inserted,
            n.resources
        );
    }
    Ok(())
}

pub fn load_netlist(p: &Path) -> Result<Netlist> {
    Netlist::load(p).with_context(|| format!("netlist {}", p.display()))
}

/// Row-major slot coordinates of a grid.
pub fn slots(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect()
}

pub fn stitch(c: &Common, a: &StitchArgs) -> Result<()> {
    let lib = load_lib(c)?;
    let base = match &a.layout {
        Some(p) => OverlayModel::load(p).with_context(|| format!("layout {}", p.display()))?,
        None => OverlayModel::new("overlay", c.grid.0, c.grid.1, c.queue_depth)?,
    };
    let cores: Vec<Netlist> = a
        .netlists
        .iter()
        .map(|p| load_netlist(p))
        .collect::<Result<_>>()?;
    let all = slots(base.grid.rows, base.grid.cols);
    ensure!(
        cores.len() <= all.len(),
        "{} netlists do not fit a {}x{} grid",
        cores.len(),
        base.grid.rows,
        base.grid.cols
    );
    let mut assign = BTreeMap::new();
    if !cores.is_empty() {
        let count = if a.no_replicate {
            cores.len()
        } else {
            all.len()
        };
        for (k, &slot) in all.iter().take(count).enumerate() {
            assign.insert(slot, cores[k % cores.len()].clone());
        }
    }
    let overlay = fill_blackboxes(&base, &assign)?;
    let res = estimate_resources(&overlay, &lib)?;
    write(&c.out.join(OVERLAY_FILE), &overlay.to_json())?;
    println!(
        "{}x{} overlay, {} of {} slots assigned",
        overlay.grid.rows,
        overlay.grid.cols,
        overlay.assigned().count(),
        overlay.slots.len()
    );
    println!("as   {}", res.as_total);
    println!("alu  {}", res.alu_total);
    println!("bare {}", res.bare_total);
    Ok(())
}

/// Random 32-bit vectors, one value per input port.
pub fn random_workload(ports: usize, count: usize, rng: &mut ChaCha8Rng) -> Workload {
    let vectors: Vec<Vec<u64>> = (0..count)
        .map(|_| (0..ports).map(|_| rng.gen::<u32>() as u64).collect())
        .collect();
    Workload::from_vectors(ports, &vectors).expect("vectors have one value per port")
}

/// Compares every simulated PE result with the netlist interpreter and
/// names the first divergence.
pub fn check_against_oracle(
    overlay: &OverlayModel,
    schedule: &BTreeMap<(usize, usize), Workload>,
    rep: &OverlayReport,
) -> Result<()> {
    for pe in &rep.pes {
        let core = overlay
            .slot(pe.row, pe.col)
            .and_then(|s| s.pe.core.as_ref())
            .expect("simulated slots have a core");
        let w = &schedule[&(pe.row, pe.col)];
        let got = pe.result.results();
        ensure!(
            got.len() == w.len(),
            "PE ({},{}) produced {} results for {} vectors",
            pe.row,
            pe.col,
            got.len(),
            w.len()
        );
        for (k, (sim_row, alu_row)) in got.iter().zip(&pe.alu.results).enumerate() {
            let want = interpret_netlist(core, &w.vector(k))?;
            for (flavor, row) in [("as", sim_row), ("alu", alu_row)] {
                if let Some(j) = (0..want.len()).find(|&j| row[j] != want[j]) {
                    bail!(
                        "oracle mismatch: PE ({},{}) {flavor} vector {k} output {j}: simulated {}, expected {}",
                        pe.row,
                        pe.col,
                        row[j],
                        want[j]
                    );
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PeSummary {
    row: usize,
    col: usize,
    kernel: String,
    vectors: usize,
    first_valid: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    as_cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alu_cycles: Option<u64>,
}

#[derive(Debug, Serialize)]
struct SimSummary {
    oracle: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    as_cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alu_cycles: Option<u64>,
    pes: Vec<PeSummary>,
}

pub fn sim(c: &Common, a: &SimArgs) -> Result<()> {
    let path = a
        .overlay
        .clone()
        .unwrap_or_else(|| c.out.join(OVERLAY_FILE));
    let overlay =
        OverlayModel::load(&path).with_context(|| format!("overlay {}", path.display()))?;
    let given = match &a.workload {
        Some(p) => Some(
            Workload::from_csv(
                &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            )
            .with_context(|| format!("workload {}", p.display()))?,
        ),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut schedule = BTreeMap::new();
    for s in overlay.assigned() {
        let core = s.pe.core.as_ref().expect("assigned slots have a core");
        let w = match &given {
            Some(w) => {
                ensure!(
                    w.is_empty() || w.streams.len() == core.input_count(),
                    "workload has {} columns, PE ({},{}) has {} inputs",
                    w.streams.len(),
                    s.row,
                    s.col,
                    core.input_count()
                );
                if w.is_empty() {
                    Workload::from_vectors(core.input_count(), &[])?
                } else {
                    w.clone()
                }
            }
            None => random_workload(core.input_count(), a.vectors, &mut rng),
        };
        schedule.insert((s.row, s.col), w);
    }
    let rep = simulate_overlay(&overlay, &schedule)?;
    check_against_oracle(&overlay, &schedule, &rep)?;
    let (show_as, show_alu) = (a.flavor != Flavor::Alu, a.flavor != Flavor::As);
    let pick = |on: bool, v: u64| on.then_some(v);
    let summary = SimSummary {
        oracle: "pass",
        as_cycles: pick(show_as, rep.as_cycles),
        alu_cycles: pick(show_alu, rep.alu_cycles),
        pes: rep
            .pes
            .iter()
            .map(|p| PeSummary {
                row: p.row,
                col: p.col,
                kernel: p.kernel.clone(),
                vectors: schedule[&(p.row, p.col)].len(),
                first_valid: p.result.first_valid,
                as_cycles: pick(show_as, p.as_cycles),
                alu_cycles: pick(show_alu, p.alu.cycles),
            })
            .collect(),
    };
    write(&c.out.join(SIM_REPORT), &to_json(&summary))?;
    println!("{} PEs simulated, oracle pass", rep.pes.len());
    if show_as {
        println!("as cycles  {}", rep.as_cycles);
    }
    if show_alu {
        println!("alu cycles {}", rep.alu_cycles);
    }
    Ok(())
}

pub fn library(path: Option<&Path>) -> Result<()> {
    let text = PrimitiveLibrary::builtin().to_json();
    match path {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
