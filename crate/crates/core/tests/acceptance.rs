//! Acceptance suite: one pass/fail line per criterion.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use overlayforge::bench::{self, BRANCHY, SUITE};
use overlayforge::graph::oracle::oracle_isomorphic;
use overlayforge::graph::{min_dfs_code, parse_dfg, Dfg, InputTag};
use overlayforge::hwlib::PrimitiveLibrary;
use overlayforge::ir::{build_block_graphs, build_cdfgs, IrModule};
use overlayforge::miner::{
    inject_hwcalls_traced, merge_kernels, mine_kernels, mine_patterns, primary_kernel, Kernel,
    MiningConfig,
};
use overlayforge::op::Word;
use overlayforge::sim::{
    interpret_dfg, interpret_ir, simulate_netlist, simulate_overlay, simulate_pe, Workload,
    DEFAULT_STEP_LIMIT,
};
use overlayforge::stitch::{
    estimate_resources, fill_blackboxes, regularize_with_library, stitch_dfg, stitch_kernel,
    wrap_pe, Delay, DelayTarget, OverlayModel, DEFAULT_QUEUE_DEPTH,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mined(b: &bench::Benchmark) -> (IrModule, Vec<Kernel>) {
    let m = b.module().unwrap();
    let ks = mine_kernels(&build_cdfgs(&m), &MiningConfig::default()).unwrap();
    (m, ks)
}

fn random_vectors(rng: &mut ChaCha8Rng, g: &Dfg, count: usize) -> Vec<Vec<u64>> {
    (0..count)
        .map(|_| g.inputs.iter().map(|_| rng.gen::<u64>()).collect())
        .collect()
}

fn regularization_exactness() -> String {
    let text = "v 0 add\nv 1 mul\nv 2 sub\nv 3 in\nv 4 in\nv 5 in\nv 6 in\nv 7 out\n\
                e 0 0 1 L\ne 1 1 2 R\ne 2 3 0 L\ne 3 4 0 R\ne 4 5 1 R\ne 5 6 2 L\ne 6 2 7 L\n";
    let g = parse_dfg(text).unwrap();
    let r = regularize_with_library(&g, &PrimitiveLibrary::builtin()).unwrap();
    let mut delays = r.delays.clone();
    delays.sort_by_key(|d| format!("{:?}", d.target));
    assert_eq!(
        delays,
        vec![
            Delay {
                target: DelayTarget::Operand { vertex: 1, port: 1 },
                cycles: 1,
                width: 32
            },
            Delay {
                target: DelayTarget::Operand { vertex: 2, port: 0 },
                cycles: 7,
                width: 32
            },
        ]
    );
    assert_eq!(r.latency, 8);
    "mul 1 R delayed 1, sub 2 L delayed 7, latency 8".into()
}

fn kernel_io() -> String {
    let expected = [
        ("matmul", (3, 1)),
        ("outer", (2, 1)),
        ("robert", (4, 1)),
        ("smooth", (10, 1)),
    ];
    let t = Instant::now();
    let mut got = Vec::new();
    for (name, io) in expected {
        let (_, ks) = mined(&bench::by_name(name).unwrap());
        let k = primary_kernel(&ks).expect("a kernel");
        assert_eq!((k.input_count(), k.output_count()), io, "{name}");
        got.push(format!("{name} {:?}", io));
    }
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 10.0, "mining took {secs:.1}s");
    format!("{} in {secs:.2}s", got.join(", "))
}

/// Criteria 3 and 5 share the same runs.
fn mining_oracle() -> (usize, usize) {
    let cfg = MiningConfig {
        min_support: 2,
        report_maximal_only: false,
        ..Default::default()
    };
    let (mut patterns, mut pairs) = (0, 0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.gen_range(2..=5);
        let gs: Vec<_> = (0..count)
            .map(|_| common::random_dag(&mut rng, 8, 3, 0.5))
            .collect();
        let (found, trace) = mine_patterns(&gs, &cfg).unwrap();
        let expected = common::brute_force_frequent(&gs, 2);
        assert_eq!(found.len(), expected.len(), "seed {seed}");
        for (rep, support) in &expected {
            let hit: Vec<_> = found
                .iter()
                .filter(|p| oracle_isomorphic(&p.dfg, rep))
                .collect();
            assert_eq!(hit.len(), 1, "seed {seed}");
            assert_eq!(hit[0].support, *support, "seed {seed}");
            assert_eq!(hit[0].code, min_dfs_code(rep).unwrap(), "seed {seed}");
        }
        patterns += expected.len();
        for &(p, c) in &trace.parent_child_support {
            assert!(c <= p, "seed {seed}: child support {c} above parent {p}");
        }
        pairs += trace.parent_child_support.len();
    }
    (patterns, pairs)
}

fn canonical_invariance() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let g = common::random_connected(&mut rng, 10, 3);
        let p = common::random_permutation(&mut rng, g.vertex_count());
        assert_eq!(
            min_dfs_code(&g).unwrap(),
            min_dfs_code(&g.permuted(&p)).unwrap()
        );
    }
    "1000 graphs".into()
}

/// Cycle simulation against interpretation, with the first result at
/// exactly the netlist latency.
fn check_kernel(g: &Dfg, lib: &PrimitiveLibrary, rng: &mut ChaCha8Rng) {
    let n = stitch_dfg("k", g, lib).unwrap();
    assert_eq!(n.latency, n.critical_path().unwrap());
    let vectors = random_vectors(rng, g, 1000);
    let r = simulate_netlist(
        &n,
        &Workload::from_vectors(g.inputs.len(), &vectors).unwrap(),
    )
    .unwrap();
    assert_eq!(r.first_valid, Some(n.latency as u64));
    let got = r.results();
    assert_eq!(got.len(), vectors.len());
    for (v, out) in vectors.iter().zip(&got) {
        let args: Vec<Word> = v.iter().map(|&x| Word::new(x, 64)).collect();
        let want: Vec<u64> = interpret_dfg(g, &args)
            .unwrap()
            .outputs
            .iter()
            .map(|w| w.bits)
            .collect();
        assert_eq!(out, &want);
    }
}

fn simulation_equivalence() -> String {
    let lib = PrimitiveLibrary::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut kernels = 0;
    for b in SUITE {
        for k in mined(&b).1 {
            check_kernel(&k.dfg, &lib, &mut rng);
            kernels += 1;
        }
    }
    for _ in 0..100 {
        let g = common::random_kernel(&mut rng, 10);
        check_kernel(&g, &lib, &mut rng);
    }
    format!("{kernels} benchmark kernels + 100 random kernels x 1000 vectors")
}

fn rewrite_soundness() -> String {
    let mut calls = 0;
    for b in SUITE {
        let (m, ks) = mined(&b);
        let inj = inject_hwcalls_traced(&m, &ks);
        assert!(!inj.calls.is_empty(), "{}: nothing injected", b.name);
        calls += inj.calls.len();
        let kmap: HashMap<u32, Dfg> = ks.iter().map(|k| (k.id, k.dfg.clone())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (args, mem) = common::bench_inputs(b.name, &mut rng);
            let (mut m1, mut m2) = (mem.clone(), mem);
            let a = interpret_ir(
                &m,
                b.function,
                &args,
                &mut m1,
                &HashMap::new(),
                DEFAULT_STEP_LIMIT,
            )
            .unwrap();
            let r = interpret_ir(
                &inj.module,
                b.function,
                &args,
                &mut m2,
                &kmap,
                DEFAULT_STEP_LIMIT,
            )
            .unwrap();
            assert_eq!(a.ret, r.ret, "{}", b.name);
            assert_eq!(m1, m2, "{}", b.name);
        }
    }
    format!("{calls} hwcalls over 4 benchmarks, 1000 inputs each")
}

fn comparative_direction() -> String {
    let lib = PrimitiveLibrary::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut lines = Vec::new();
    for b in SUITE {
        let (_, ks) = mined(&b);
        let k = primary_kernel(&ks).unwrap();
        let n = stitch_kernel(k, &lib).unwrap();
        let grid = OverlayModel::new(b.name, 3, 3, DEFAULT_QUEUE_DEPTH).unwrap();
        let slots: Vec<(usize, usize)> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        let o = fill_blackboxes(&grid, &slots.iter().map(|&s| (s, n.clone())).collect()).unwrap();
        let schedule: BTreeMap<_, _> = slots
            .iter()
            .map(|&s| {
                (
                    s,
                    Workload::from_vectors(k.input_count(), &random_vectors(&mut rng, &k.dfg, 64))
                        .unwrap(),
                )
            })
            .collect();
        let sim = simulate_overlay(&o, &schedule).unwrap();
        assert!(
            sim.as_cycles < sim.alu_cycles,
            "{}: {} vs {}",
            b.name,
            sim.as_cycles,
            sim.alu_cycles
        );
        for pe in &sim.pes {
            assert_eq!(pe.result.results(), pe.alu.results);
        }
        let res = estimate_resources(&o, &lib).unwrap();
        assert!(res.alu_total.lut > res.as_total.lut, "{}", b.name);
        assert!(res.as_total.lut > res.bare_total.lut, "{}", b.name);
        assert!(res.as_total.ff > res.bare_total.ff, "{}", b.name);
        if k.dfg.vertex_count() == 1 && k.dfg.count_op(|o| o == overlayforge::op::Op::Mul) == 1 {
            assert_eq!(res.as_total.dsp, 4 * 9);
            assert_eq!(res.alu_total.dsp, res.as_total.dsp);
            assert_eq!(res.bare_total.dsp, res.as_total.dsp);
            lines.push(format!("{} dsp {}", b.name, res.as_total.dsp));
        }
        lines.push(format!(
            "{} cycles {}<{}",
            b.name, sim.as_cycles, sim.alu_cycles
        ));
    }
    assert!(
        lines.iter().any(|l| l.contains("dsp")),
        "no multiply kernel checked"
    );
    lines.join(", ")
}

fn merged_benefit() -> String {
    let lib = PrimitiveLibrary::builtin();
    let m = BRANCHY.module().unwrap();
    let ks: Vec<Kernel> = build_block_graphs(&m)
        .iter()
        .enumerate()
        .filter_map(|(i, bg)| Kernel::from_block(i as u32, i, &bg.dfg))
        .collect();
    assert_eq!(ks.len(), 3);
    let merged = merge_kernels(&ks, &m);
    assert_eq!(merged.len(), 1);
    let mk = &merged[0];
    assert_eq!((mk.demux_count(), mk.register_count()), (1, 2));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let runs: Vec<HashMap<&str, u64>> = (0..1000)
        .map(|_| {
            let mut env = HashMap::new();
            for p in ["x", "y", "z", "s"] {
                env.insert(p, rng.gen::<u32>() as u64);
            }
            env
        })
        .collect();
    let bind = |g: &Dfg, env: &HashMap<&str, u64>, extra: &HashMap<String, u64>| -> Vec<u64> {
        g.inputs
            .iter()
            .map(|i| match &i.tag {
                InputTag::Value(v) => env
                    .get(v.as_str())
                    .copied()
                    .or_else(|| extra.get(v).copied())
                    .unwrap(),
                InputTag::Const(c) => *c as u64,
                InputTag::Port => panic!("unbound input"),
            })
            .collect()
    };
    let none = HashMap::new();
    let n = stitch_dfg("merged", &mk.dfg, &lib).unwrap();
    let vectors: Vec<Vec<u64>> = runs.iter().map(|env| bind(&mk.dfg, env, &none)).collect();
    let stream = Workload::from_vectors(mk.dfg.inputs.len(), &vectors).unwrap();
    let merged_sim = simulate_netlist(&n, &stream).unwrap();
    assert_eq!(merged_sim.first_valid, Some(n.latency as u64));
    let outs = merged_sim.results();
    let r1 = mk.dfg.outputs.iter().position(|o| o.tag == "r1").unwrap();
    let r2 = mk.dfg.outputs.iter().position(|o| o.tag == "r2").unwrap();
    for (env, out) in runs.iter().zip(&outs) {
        let args: Vec<Word> = ["x", "y", "z", "s"]
            .iter()
            .map(|p| Word::new(env[p], 32))
            .collect();
        let r = interpret_ir(
            &m,
            "branchy",
            &args,
            &mut Default::default(),
            &HashMap::new(),
            100,
        )
        .unwrap();
        let taken = (env["x"] as u32 as i32) > (env["s"] as u32 as i32);
        assert_eq!(r.ret.unwrap().bits, out[if taken { r1 } else { r2 }]);
    }

    // The same stream through three PEs, one kernel after the other.
    let merged_pe = wrap_pe(&n, DEFAULT_QUEUE_DEPTH).unwrap();
    let merged_cycles = simulate_pe(&merged_pe, &stream).unwrap().cycles;
    let k0 = &ks[0];
    let mut chained = 0;
    let mut produced: Vec<HashMap<String, u64>> = vec![HashMap::new(); runs.len()];
    for k in &ks {
        let nk = stitch_kernel(k, &lib).unwrap();
        let vs: Vec<Vec<u64>> = runs
            .iter()
            .zip(&produced)
            .map(|(env, p)| bind(&k.dfg, env, p))
            .collect();
        let r = simulate_pe(
            &wrap_pe(&nk, DEFAULT_QUEUE_DEPTH).unwrap(),
            &Workload::from_vectors(k.input_count(), &vs).unwrap(),
        )
        .unwrap();
        if k.id == k0.id {
            for (p, row) in produced.iter_mut().zip(r.results()) {
                for (o, v) in k.dfg.outputs.iter().zip(row) {
                    p.insert(o.tag.clone(), v);
                }
            }
        }
        chained += r.cycles;
    }
    assert!(merged_cycles <= chained, "{merged_cycles} > {chained}");
    format!("1 PE {merged_cycles} cycles vs 3 chained PEs {chained} cycles, 1000 vectors match")
}

fn main() {
    let mut failed = 0;
    let mut report = |k: usize, what: &str, f: &mut dyn FnMut() -> String| {
        let t = Instant::now();
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(detail) => println!(
                "criterion {k}: PASS  {what}: {detail} ({:.2}s)",
                t.elapsed().as_secs_f64()
            ),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {k}: FAIL  {what}: {msg}");
            }
        }
    };
    let t = Instant::now();
    let oracle = catch_unwind(mining_oracle).ok();
    let oracle_secs = t.elapsed().as_secs_f64();
    report(1, "datapath regularization", &mut regularization_exactness);
    report(2, "kernel I/O per benchmark", &mut kernel_io);
    report(3, "mining matches brute force", &mut || match oracle {
        Some((p, _)) => format!("100 sets, {p} frequent patterns, runs took {oracle_secs:.2}s"),
        None => panic!("oracle mismatch (see panic above)"),
    });
    report(4, "canonical code invariance", &mut canonical_invariance);
    report(5, "anti-monotone support", &mut || match oracle {
        Some((_, pairs)) => format!("{pairs} parent/child pairs"),
        None => panic!("runs aborted"),
    });
    report(
        6,
        "simulation equals interpretation",
        &mut simulation_equivalence,
    );
    report(7, "hwcall rewrite soundness", &mut rewrite_soundness);
    report(8, "overlay flavor comparison", &mut comparative_direction);
    report(9, "merged kernel benefit", &mut merged_benefit);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
