mod common;

use std::collections::{BTreeMap, HashMap};

use overlayforge::bench::{self, SUITE};
use overlayforge::graph::{Dfg, Edge};
use overlayforge::hwlib::{lookup, vertex_latency, PrimitiveLibrary};
use overlayforge::ir::build_cdfgs;
use overlayforge::miner::{inject_hwcalls, mine_kernels, primary_kernel, MiningConfig};
use overlayforge::op::{eval, Op, OpLabel, Word};
use overlayforge::sim::{
    interpret_dfg, interpret_ir, interpret_netlist, Memory, DEFAULT_STEP_LIMIT,
};
use overlayforge::stitch::{
    estimate_resources, fill_blackboxes, regularize_datapath, stitch_dfg, stitch_kernel, Netlist,
    OverlayModel, DEFAULT_QUEUE_DEPTH,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Operand arrival times of every vertex given per-vertex latencies,
/// with external inputs present at cycle 0.
fn operand_times(g: &Dfg, lat: &[u32]) -> Vec<Vec<u32>> {
    let mut times: Vec<Vec<u32>> = vec![Vec::new(); g.vertex_count()];
    let mut ready = vec![None; g.vertex_count()];
    for i in &g.inputs {
        times[i.dst].push(0);
    }
    // Repeated relaxation; fine for the sizes used here.
    for _ in 0..=g.vertex_count() {
        for v in 0..g.vertex_count() {
            let ins: Vec<&Edge> = g.edges.iter().filter(|e| e.dst == v).collect();
            if ins.iter().all(|e| ready[e.src].is_some()) && ready[v].is_none() {
                for e in ins {
                    times[v].push(ready[e.src].unwrap());
                }
                ready[v] = Some(times[v].iter().copied().max().unwrap_or(0) + lat[v]);
            }
        }
    }
    times
}

#[test]
fn regularized_graphs_are_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let g = common::random_kernel(&mut rng, 12);
        let lat: Vec<u32> = (0..g.vertex_count()).map(|_| rng.gen_range(0..8)).collect();
        let r = regularize_datapath(&g, &lat).unwrap();
        let before = operand_times(&g, &lat);
        let after = operand_times(&r.dfg, &r.vertex_latency);
        for v in 0..g.vertex_count() {
            let want = before[v].iter().copied().max().unwrap_or(0);
            assert_eq!(r.arrival[v], want);
            assert!(
                after[v].iter().all(|&t| t == want),
                "vertex {v}: {:?}",
                after[v]
            );
        }
        let longest = g
            .outputs
            .iter()
            .map(|o| r.arrival[o.src] + lat[o.src])
            .max()
            .unwrap();
        assert_eq!(r.latency, longest);
        for o in &r.dfg.outputs {
            let t = after[o.src].iter().copied().max().unwrap_or(0) + r.vertex_latency[o.src];
            assert_eq!(t, r.latency);
        }
    }
}

#[test]
fn regularization_preserves_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let g = common::random_kernel(&mut rng, 10);
        let lat: Vec<u32> = (0..g.vertex_count()).map(|_| rng.gen_range(0..8)).collect();
        let r = regularize_datapath(&g, &lat).unwrap();
        for _ in 0..20 {
            let args: Vec<Word> = g
                .inputs
                .iter()
                .map(|i| Word::new(rng.gen(), i.width))
                .collect();
            assert_eq!(
                interpret_dfg(&g, &args).unwrap().outputs,
                interpret_dfg(&r.dfg, &args).unwrap().outputs
            );
        }
    }
}

#[test]
fn matmul_matches_triple_loop() {
    let m = bench::MATMUL.module().unwrap();
    let ks = mine_kernels(&build_cdfgs(&m), &MiningConfig::default()).unwrap();
    let rewritten = inject_hwcalls(&m, &ks);
    let kmap: HashMap<u32, Dfg> = ks.iter().map(|k| (k.id, k.dfg.clone())).collect();
    let n = 8usize;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a: Vec<u64> = (0..n * n).map(|_| rng.gen::<u32>() as u64).collect();
    let b: Vec<u64> = (0..n * n).map(|_| rng.gen::<u32>() as u64).collect();
    let c0: Vec<u64> = (0..n * n).map(|_| rng.gen::<u32>() as u64).collect();
    let mut want = c0.clone();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = (a[i * n + k] as u32).wrapping_mul(b[k * n + j] as u32);
                want[i * n + j] = (want[i * n + j] as u32).wrapping_add(p) as u64;
            }
        }
    }
    let args: Vec<Word> = [1000, 2000, 3000, n as u64]
        .iter()
        .map(|&v| Word::new(v, 32))
        .collect();
    for (module, kernels) in [(&m, HashMap::new()), (&rewritten, kmap)] {
        let mut mem = Memory::new();
        mem.write_slice(1000, &a);
        mem.write_slice(2000, &b);
        mem.write_slice(3000, &c0);
        interpret_ir(
            module,
            "matmul",
            &args,
            &mut mem,
            &kernels,
            DEFAULT_STEP_LIMIT,
        )
        .unwrap();
        assert_eq!(mem.read_slice(3000, n * n), want);
    }
}

#[test]
fn primitive_behavior_matches_interpreter() {
    let lib = PrimitiveLibrary::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for op in Op::ALU_OPS {
        for width in [8u8, 16, 32, 64] {
            let label = OpLabel::new(op, width);
            let p = lookup(&lib, op, width).unwrap();
            assert_eq!(vertex_latency(&lib, label).unwrap(), p.latency);
            let mut g = Dfg::new();
            let v = g.add_vertex(label);
            let arity = op.arity().unwrap();
            for port in 0..arity {
                g.inputs.push(overlayforge::graph::ExtInput {
                    dst: v,
                    port: port as u16,
                    width: label.port_width(port),
                    tag: overlayforge::graph::InputTag::Port,
                });
            }
            g.outputs.push(overlayforge::graph::ExtOutput {
                src: v,
                src_out: 0,
                tag: "y".into(),
            });
            for _ in 0..50 {
                let args: Vec<Word> = g
                    .inputs
                    .iter()
                    .map(|i| Word::new(rng.gen(), i.width))
                    .collect();
                let direct = p.behavior(label, &args).unwrap();
                assert_eq!(direct, eval(label, &args).unwrap());
                assert_eq!(
                    interpret_dfg(&g, &args).unwrap().outputs[0],
                    direct.outputs[0]
                );
            }
        }
    }
}

#[test]
fn overlay_dsp_scales_with_grid() {
    let lib = PrimitiveLibrary::builtin();
    let m = bench::OUTER.module().unwrap();
    let ks = mine_kernels(&build_cdfgs(&m), &MiningConfig::default()).unwrap();
    let n = stitch_kernel(primary_kernel(&ks).unwrap(), &lib).unwrap();
    let per_pe = n.resources.dsp;
    assert_eq!(per_pe, 4);
    for side in 2..=10usize {
        let grid = OverlayModel::new("outer", side, side, DEFAULT_QUEUE_DEPTH).unwrap();
        let cores: BTreeMap<_, _> = (0..side)
            .flat_map(|r| (0..side).map(move |c| (r, c)))
            .map(|s| (s, n.clone()))
            .collect();
        let res = estimate_resources(&fill_blackboxes(&grid, &cores).unwrap(), &lib).unwrap();
        assert_eq!(res.as_total.dsp, per_pe * (side * side) as u64);
        assert_eq!(res.alu_total.dsp, res.as_total.dsp);
    }
}

#[test]
fn every_benchmark_kernel_stitches() {
    let lib = PrimitiveLibrary::builtin();
    for b in SUITE {
        let m = b.module().unwrap();
        for k in mine_kernels(&build_cdfgs(&m), &MiningConfig::default()).unwrap() {
            let n = stitch_kernel(&k, &lib).unwrap();
            n.validate().unwrap();
            assert_eq!(
                (n.input_count(), n.output_count()),
                (k.input_count(), k.output_count()),
                "{}",
                b.name
            );
        }
    }
}

#[test]
fn loaded_netlists_interpret_like_their_graphs() {
    let lib = PrimitiveLibrary::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let g = common::random_kernel(&mut rng, 10);
        let n = Netlist::from_json(&stitch_dfg("k", &g, &lib).unwrap().to_json()).unwrap();
        for _ in 0..20 {
            let v: Vec<u64> = g.inputs.iter().map(|_| rng.gen()).collect();
            let args: Vec<Word> = g
                .inputs
                .iter()
                .zip(&v)
                .map(|(i, &x)| Word::new(x, i.width))
                .collect();
            let want: Vec<u64> = interpret_dfg(&g, &args)
                .unwrap()
                .outputs
                .iter()
                .map(|w| w.bits)
                .collect();
            assert_eq!(interpret_netlist(&n, &v).unwrap(), want);
        }
    }
}
