use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;

use anyhow::{bail, Context, Result};
use overlayforge::sim::simulate_overlay;
use overlayforge::stitch::{estimate_resources, fill_blackboxes, Netlist, OverlayModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::stages::{
    check_against_oracle, load_lib, load_netlist, random_workload, slots, write, MiningReport,
    MINING_REPORT, MINING_TIMES, NETLIST_DIR,
};
use crate::{Common, Flavor, ReportArgs};

fn replicated(
    name: &str,
    rows: usize,
    cols: usize,
    depth: usize,
    core: &Netlist,
) -> Result<OverlayModel> {
    let grid = OverlayModel::new(name, rows, cols, depth)?;
    let assign: BTreeMap<_, _> = slots(rows, cols)
        .into_iter()
        .map(|s| (s, core.clone()))
        .collect();
    Ok(fill_blackboxes(&grid, &assign)?)
}

pub fn report(c: &Common, a: &ReportArgs) -> Result<()> {
    let report_path = c.out.join(MINING_REPORT);
    let times_path = c.out.join(MINING_TIMES);
    let mut missing = Vec::new();
    for p in [&report_path, &times_path] {
        if !p.is_file() {
            missing.push(p.display().to_string());
        }
    }
    if !missing.is_empty() {
        bail!("missing stage outputs: {}", missing.join(", "));
    }
    let mining: MiningReport = serde_json::from_str(&fs::read_to_string(&report_path)?)
        .with_context(|| format!("parsing {}", report_path.display()))?;
    let times: BTreeMap<String, String> = fs::read_to_string(&times_path)?
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .map(|(a, t)| (a.to_string(), t.to_string()))
        .collect();
    let mut cores = Vec::new();
    for app in &mining.applications {
        if let Some(id) = app.primary {
            let p = c.out.join(NETLIST_DIR).join(format!("k{id}.json"));
            if p.is_file() {
                cores.push((app.name.clone(), load_netlist(&p)?));
            } else {
                missing.push(p.display().to_string());
            }
        }
    }
    if !missing.is_empty() {
        bail!("missing stage outputs: {}", missing.join(", "));
    }
    let lib = load_lib(c)?;

    let mut kernel_rows =
        String::from("application,kernel,inputs,outputs,support,mining_seconds\n");
    println!(
        "{:<12} {:>6} {:>6} {:>7} {:>7} {:>10}",
        "application", "kernel", "inputs", "outputs", "support", "mining s"
    );
    for app in &mining.applications {
        let time = times.get(&app.name).cloned().unwrap_or_default();
        match app.kernels.iter().find(|k| Some(k.id) == app.primary) {
            Some(k) => {
                writeln!(
                    kernel_rows,
                    "{},k{},{},{},{},{time}",
                    app.name, k.id, k.inputs, k.outputs, k.support
                )?;
                println!(
                    "{:<12} {:>6} {:>6} {:>7} {:>7} {:>10}",
                    app.name,
                    format!("k{}", k.id),
                    k.inputs,
                    k.outputs,
                    k.support,
                    time
                );
            }
            None => {
                writeln!(kernel_rows, "{},,,,,{time}", app.name)?;
                println!("{:<12} {:>6}", app.name, "-");
            }
        }
    }

    let (show_as, show_alu) = (a.flavor != Flavor::Alu, a.flavor != Flavor::As);
    let (rows, cols) = c.grid;
    let mut cycle_rows = String::from("application,grid,vectors");
    if show_as {
        cycle_rows.push_str(",as_cycles");
    }
    if show_alu {
        cycle_rows.push_str(",alu_cycles");
    }
    cycle_rows.push('\n');
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    for (name, core) in &cores {
        let overlay = replicated(name, rows, cols, c.queue_depth, core)?;
        for &size in &a.sizes {
            let schedule: BTreeMap<_, _> = slots(rows, cols)
                .into_iter()
                .map(|s| (s, random_workload(core.input_count(), size, &mut rng)))
                .collect();
            let rep = simulate_overlay(&overlay, &schedule)?;
            check_against_oracle(&overlay, &schedule, &rep)?;
            write!(cycle_rows, "{name},{rows}x{cols},{size}")?;
            if show_as {
                write!(cycle_rows, ",{}", rep.as_cycles)?;
            }
            if show_alu {
                write!(cycle_rows, ",{}", rep.alu_cycles)?;
            }
            cycle_rows.push('\n');
        }
    }

    let mut resource_rows = String::from(
        "application,grid,pes,as_lut,as_ff,as_dsp,alu_lut,alu_ff,alu_dsp,bare_lut,bare_ff,bare_dsp\n",
    );
    for (name, core) in &cores {
        for n in 2..=a.max_grid.max(2) {
            let r = estimate_resources(&replicated(name, n, n, c.queue_depth, core)?, &lib)?;
            let (s, g, b) = (r.as_total, r.alu_total, r.bare_total);
            writeln!(
                resource_rows,
                "{name},{n}x{n},{},{},{},{},{},{},{},{},{},{}",
                n * n,
                s.lut,
                s.ff,
                s.dsp,
                g.lut,
                g.ff,
                g.dsp,
                b.lut,
                b.ff,
                b.dsp
            )?;
        }
    }

    for (file, text) in [
        ("kernels.csv", &kernel_rows),
        ("cycles.csv", &cycle_rows),
        ("resources.csv", &resource_rows),
    ] {
        write(&c.out.join(file), text)?;
    }
    println!(
        "wrote kernels.csv, cycles.csv, resources.csv to {}",
        c.out.display()
    );
    Ok(())
}
