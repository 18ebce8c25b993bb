//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! gating criterion fails. Runs without the libtest harness so the lines are
//! always shown.
//!
//! Tolerances are pinned here and nowhere else.

use std::process::ExitCode;
use std::time::Instant;

use emd_core::flow::{apply_incidence, flow_cost, supply_vector};
use emd_core::graph::{canonical_path, path_length};
use emd_core::instance::map_feasible;
use emd_core::oracle::{exact_emd, exact_mincost_on_graph};
use emd_core::pipeline::{run_trial, subdivisions_for, Config, DEFAULT_NET_POINT_BUDGET};
use emd_core::quadtree::{CellTree, GridShift};
use emd_core::rounding::{cancel_vertex, check_nfp, SparseFlow};
use emd_core::sketch::Sketch;
use emd_core::solver::{
    certifies, mwu_feasibility, round_budget, DenseSystem, Feasibility, L1System, PreconditionedSystem,
};
use emd_core::{Graph, Instance, Quadtree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const APPROX_FACTOR: f64 = 1.25;
const SINGLE_TRIAL_RATE: f64 = 0.5;
const NINE_TRIAL_RATE: f64 = 0.95;
const FEASIBILITY_TOL: f64 = 1e-6;
const LOWER_BOUND_REL: f64 = 1e-9;
const DISTORTION_SLACK: f64 = 1.05;
const SEPARATION_SIGMAS: f64 = 3.0;
const SANDWICH_REL: f64 = 1e-9;
const ROUTER_REL: f64 = 1e-9;
const CANCEL_TOL: f64 = 1e-9;
const SCALING_EXPONENT: f64 = 1.3;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
    seconds: f64,
}

/// Integer supplies in `[-bound, bound]`, not all zero, summing to zero.
fn balanced_supplies(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> Vec<i64> {
    loop {
        let mut s: Vec<i64> = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        let mut total: i64 = s.iter().sum();
        while total != 0 {
            let i = rng.gen_range(0..n);
            if total > 0 && s[i] > -bound {
                s[i] -= 1;
                total -= 1;
            } else if total < 0 && s[i] < bound {
                s[i] += 1;
                total += 1;
            }
        }
        if s.iter().any(|&x| x != 0) {
            return s;
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> Instance<f64> {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let sup = balanced_supplies(rng, n, bound);
    Instance::new(2, pts, sup).expect("valid instance")
}

fn approximation() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = Config::default();
    let instances = 200;
    let runs = 9u64;
    let (mut single_ok, mut nine_ok, mut infeasible, mut hits, mut total) = (0, 0, 0, 0, 0);
    let mut worst_rate = 1.0f64;
    for _ in 0..instances {
        let n = rng.gen_range(2..=30);
        let inst = random_instance(&mut rng, n, 20);
        let emd = exact_emd(&inst).expect("oracle").cost;
        let mut ok = 0;
        for seed in 0..runs {
            let out = run_trial(&inst, &cfg, seed).expect("pipeline");
            let map = out.map.expect("map");
            if !map_feasible(&inst, &map, FEASIBILITY_TOL).feasible {
                infeasible += 1;
                continue;
            }
            if out.cost <= APPROX_FACTOR * emd {
                ok += 1;
            }
        }
        hits += ok;
        total += runs as usize;
        let rate = ok as f64 / runs as f64;
        worst_rate = worst_rate.min(rate);
        if rate >= SINGLE_TRIAL_RATE {
            single_ok += 1;
        }
        // --trials 9 keeps the cheapest of these same seeds
        if ok > 0 {
            nine_ok += 1;
        }
    }
    let nine_rate = nine_ok as f64 / instances as f64;
    let pass = single_ok == instances && nine_rate >= NINE_TRIAL_RATE && infeasible == 0;
    Verdict {
        id: 1,
        name: "approximation",
        pass,
        gating: true,
        detail: format!(
            "{single_ok}/{instances} instances with >= {:.0}% single-trial success (worst {:.0}%, pooled {:.1}%); \
             9 trials: {:.1}% of instances (need {:.0}%); infeasible maps {infeasible}",
            100.0 * SINGLE_TRIAL_RATE,
            100.0 * worst_rate,
            100.0 * hits as f64 / total as f64,
            100.0 * nine_rate,
            100.0 * NINE_TRIAL_RATE
        ),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn default_quadtree(inst: &Instance<f64>, seed: u64) -> Quadtree<f64> {
    let cells = CellTree::build(inst, seed).expect("cells");
    let k = subdivisions_for(0.25, cells.depth(), inst.dim(), DEFAULT_NET_POINT_BUDGET);
    Quadtree::new(cells, k).expect("quadtree")
}

fn graph_lower_bound() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut checked, mut violations) = (0, 0);
    let mut tightest = f64::INFINITY;
    for _ in 0..100 {
        let n = rng.gen_range(2..=20);
        let inst = random_instance(&mut rng, n, 20);
        let emd = exact_emd(&inst).expect("oracle").cost;
        for seed in 0..5 {
            let q = default_quadtree(&inst, seed);
            let g = Graph::build(&q, &inst);
            let on_graph = exact_mincost_on_graph(&g, &supply_vector(&inst, &g))
                .expect("graph oracle")
                .cost;
            checked += 1;
            if emd > on_graph * (1.0 + LOWER_BOUND_REL) {
                violations += 1;
            }
            tightest = tightest.min(on_graph / emd);
        }
    }
    Verdict {
        id: 2,
        name: "graph lower bound",
        pass: violations == 0,
        gating: true,
        detail: format!(
            "{violations} violations in {checked} instance/shift pairs; smallest cost(G)/EMD {tightest:.4}"
        ),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn expected_distortion() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20;
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let sup: Vec<i64> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    let inst = Instance::new(2, pts, sup).unwrap();
    let pairs: Vec<(usize, usize)> = (0..20)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n);
            while b == a {
                b = rng.gen_range(0..n);
            }
            (a, b)
        })
        .collect();
    let k = 4u32;
    let eps0 = 1.0 / k as f64;
    let shifts = 1000;
    let mut sums = vec![0.0; pairs.len()];
    let mut max_depth = 0;
    let mut below_euclid = 0;
    for seed in 0..shifts {
        let q = Quadtree::new(CellTree::build(&inst, seed).unwrap(), k).unwrap();
        max_depth = max_depth.max(q.depth());
        let g = Graph::build(&q, &inst);
        for (s, &(a, b)) in sums.iter_mut().zip(&pairs) {
            let d = inst.distance(a, b);
            let len = path_length(&g, &canonical_path(&g, &q, a, b));
            if len < d * (1.0 - 1e-12) {
                below_euclid += 1;
            }
            *s += len / d;
        }
    }
    let worst = sums.iter().map(|s| s / shifts as f64).fold(0.0, f64::max);
    let bound = (1.0 + 3.0 * 2.0 * eps0 * max_depth as f64) * DISTORTION_SLACK;
    Verdict {
        id: 3,
        name: "expected distortion",
        pass: worst <= bound && below_euclid == 0,
        gating: true,
        detail: format!(
            "worst mean stretch {worst:.4} over {} pairs x {shifts} shifts; bound {bound:.3} (eps0 {eps0}, L {max_depth}); paths shorter than the segment: {below_euclid}",
            pairs.len()
        ),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn separation() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shifts = 10_000;
    let levels = 14;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut failures = 0;
    for pair in 0..10 {
        let p = [rng.gen::<f64>(), rng.gen::<f64>()];
        // a mix of far, near and very near pairs
        let scale = [1.0, 0.1, 0.01][pair % 3];
        let q = [
            (p[0] + scale * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0),
            (p[1] + scale * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0),
        ];
        let mut split = vec![0usize; levels];
        for _ in 0..shifts {
            let x = vec![1.0 - rng.gen::<f64>(), 1.0 - rng.gen::<f64>()];
            let origin = x.iter().map(|v| v - 1.0).collect();
            let pts: [&[f64]; 2] = [&p, &q];
            let tree = CellTree::with_shift(&pts, 2, 1.0, GridShift { x, origin }).unwrap();
            for (l, s) in split.iter_mut().enumerate() {
                if tree.cell_of(&p, l).unwrap() != tree.cell_of(&q, l).unwrap() {
                    *s += 1;
                }
            }
        }
        let l1 = (p[0] - q[0]).abs() + (p[1] - q[1]).abs();
        for (l, &s) in split.iter().enumerate() {
            let side = 2.0 / 2f64.powi(l as i32);
            let b = (l1 / side).min(1.0);
            let sigma = (b * (1.0 - b) / shifts as f64).sqrt();
            let freq = s as f64 / shifts as f64;
            let excess = freq - b;
            worst_excess = worst_excess.max(excess);
            if freq > b + SEPARATION_SIGMAS * sigma + 1e-12 {
                failures += 1;
            }
        }
    }
    Verdict {
        id: 4,
        name: "separation probability",
        pass: failures == 0,
        gating: true,
        detail: format!("{failures} of {} (pair, level) frequencies above bound + {SEPARATION_SIGMAS} sigma; largest excess {worst_excess:.4}", 10 * levels),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Criteria 5 and 6 share their graphs and supplies.
fn sandwich_and_router() -> (Verdict, Verdict) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut cases, mut lower_bad, mut upper_bad, mut router_bad, mut router_cost_bad) = (0, 0, 0, 0, 0);
    let (mut min_ratio, mut max_ratio) = (f64::INFINITY, 0.0f64);
    let mut largest = 0;
    while cases < 100 {
        let n = rng.gen_range(2..=10);
        let inst = random_instance(&mut rng, n, 5);
        let k = [2u32, 4][rng.gen_range(0..2)];
        let q = Quadtree::new(CellTree::build(&inst, rng.gen()).unwrap(), k).unwrap();
        let g = Graph::build(&q, &inst);
        if g.vertex_count() > 2000 {
            continue;
        }
        largest = largest.max(g.vertex_count());
        let s = Sketch::build(&q, &g);
        let nv = g.vertex_count();
        for kind in 0..4 {
            let mut b = vec![0.0; nv];
            match kind {
                0 => b = supply_vector(&inst, &g),
                1 => b.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0)),
                2 => {
                    let u = rng.gen_range(0..nv);
                    let mut v = rng.gen_range(0..nv);
                    while v == u {
                        v = rng.gen_range(0..nv);
                    }
                    b[u] = 1.0;
                    b[v] = -1.0;
                }
                _ => {
                    for x in b.iter_mut().skip(g.point_count()) {
                        if rng.gen_bool(0.2) {
                            *x = rng.gen_range(-3.0..3.0);
                        }
                    }
                }
            }
            let mean = b.iter().sum::<f64>() / nv as f64;
            if kind == 1 || kind == 3 {
                b.iter_mut().for_each(|x| *x -= mean);
            }
            let sketch = s.norm(&b);
            if sketch == 0.0 {
                continue;
            }
            let exact = exact_mincost_on_graph(&g, &b).expect("graph oracle").cost;
            cases += 1;
            if sketch > exact * (1.0 + SANDWICH_REL) {
                lower_bad += 1;
            }
            if exact > s.gamma() * sketch * (1.0 + SANDWICH_REL) {
                upper_bad += 1;
            }
            min_ratio = min_ratio.min(exact / sketch);
            max_ratio = max_ratio.max(exact / sketch);

            let f = s.route_flow(&q, &g, &b).expect("router");
            let scale: f64 = b.iter().map(|x| x.abs()).sum();
            let div = apply_incidence(&g, &f);
            if div.iter().zip(&b).any(|(x, y)| (x - y).abs() > ROUTER_REL * scale) {
                router_bad += 1;
            }
            let c = flow_cost(&g, &f);
            if c > s.gamma() * sketch * (1.0 + ROUTER_REL) || c < exact * (1.0 - ROUTER_REL) {
                router_cost_bad += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    (
        Verdict {
            id: 5,
            name: "preconditioner sandwich",
            pass: lower_bad == 0 && upper_bad == 0,
            gating: true,
            detail: format!(
                "{cases} supplies on graphs up to {largest} vertices; lower-bound violations {lower_bad}, upper-bound violations {upper_bad}; cost/||Bb|| in [{min_ratio:.3}, {max_ratio:.3}]"
            ),
            seconds: secs,
        },
        Verdict {
            id: 6,
            name: "router contract",
            pass: router_bad == 0 && router_cost_bad == 0,
            gating: true,
            detail: format!("{cases} routings; divergence mismatches {router_bad}, cost outside [opt, gamma ||Bb||] {router_cost_bad}"),
            seconds: 0.0,
        },
    )
}

fn cancel_vertex_suite() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = 5000;
    let mut bad = [0usize; 6];
    for _ in 0..cases {
        let nv = rng.gen_range(3..16);
        let pos: Vec<Vec<f64>> = (0..nv).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let mut f = SparseFlow::new(nv);
        for _ in 0..rng.gen_range(1..40) {
            let a = rng.gen_range(0..nv);
            let b = rng.gen_range(0..nv);
            if a != b {
                let x = if rng.gen_bool(0.1) {
                    1e-13
                } else {
                    rng.gen_range(0.0..5.0)
                };
                f.add(a, b, x);
            }
        }
        let u = rng.gen_range(0..nv);
        let at = |v: usize| pos[v].clone();
        let cost0 = f.cost(&at);
        let support0 = f.support();
        let div0: Vec<f64> = (0..nv).map(|v| f.divergence(v)).collect();
        let nfp0: Vec<bool> = (0..nv).map(|v| check_nfp(&f, v)).collect();
        let deg0 = f.degree(u);

        let steps = cancel_vertex(&mut f, u, 1e-12);

        if (0..nv).any(|v| (f.divergence(v) - div0[v]).abs() > CANCEL_TOL) {
            bad[0] += 1;
        }
        if f.cost(&at) > cost0 + CANCEL_TOL {
            bad[1] += 1;
        }
        if f.support() > support0 {
            bad[2] += 1;
        }
        // entries at or below the threshold are not flow
        let mixed = f.neighbors(u).any(|(_, x)| x > 1e-12) && f.neighbors(u).any(|(_, x)| x < -1e-12);
        if mixed {
            bad[3] += 1;
        }
        if (0..nv).any(|v| v != u && nfp0[v] && !check_nfp(&f, v)) {
            bad[4] += 1;
        }
        if steps > deg0 {
            bad[5] += 1;
        }
    }
    Verdict {
        id: 7,
        name: "cancel-vertex",
        pass: bad.iter().all(|&b| b == 0),
        gating: true,
        detail: format!(
            "{cases} random flows; failures: divergence {}, cost {}, support {}, nfp at u {}, nfp elsewhere {}, iterations {}",
            bad[0], bad[1], bad[2], bad[3], bad[4], bad[5]
        ),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn residual<S: L1System<f64>>(sys: &S, g: &[f64], target: &[f64], t: f64) -> f64 {
    let mut mg = vec![0.0; sys.rows()];
    let scaled: Vec<f64> = g.iter().map(|x| x / t).collect();
    sys.apply(&scaled, &mut mg);
    mg.iter().zip(target).map(|(a, b)| (a - b / t).abs()).sum()
}

fn mwu_contracts() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let eps = 0.25;
    let (mut planted, mut solved, mut contract_bad, mut certificates, mut bad_certificates) = (0, 0, 0, 0, 0);

    // dense toy: 2 x 3 with columns of l1 norm at most 1 and a planted g*
    let toy = DenseSystem::from_rows(&[vec![0.5, -0.5, 0.2], vec![0.5, 0.5, -0.8]]);
    let star = [0.5, -0.3, 0.2];
    let mut target = vec![0.0; 2];
    toy.apply(&star, &mut target);
    planted += 1;
    if let Feasibility::Solution { g, .. } = mwu_feasibility(&toy, &target, 1.0, 0.1, round_budget(0.1, 3)) {
        solved += 1;
        if g.iter().map(|x: &f64| x.abs()).sum::<f64>() > 1.0 + 1e-9 || residual(&toy, &g, &target, 1.0) > 0.1 {
            contract_bad += 1;
        }
    }

    for _ in 0..12 {
        let n = rng.gen_range(2..=8);
        let inst = random_instance(&mut rng, n, 5);
        let q = Quadtree::new(CellTree::build(&inst, rng.gen()).unwrap(), 2).unwrap();
        let g = Graph::build(&q, &inst);
        let s = Sketch::build(&q, &g);
        let sys = PreconditionedSystem::normalize(&g, &s);
        let m = g.edge_count();

        // planted: b = A f* and t = ||f*||_c, so g* = C f* / t is feasible
        let mut fstar = vec![0.0; m];
        for _ in 0..rng.gen_range(1..=6) {
            fstar[rng.gen_range(0..m)] += rng.gen_range(-2.0..2.0);
        }
        let b = apply_incidence(&g, &fstar);
        let target = sys.target(&b);
        let t = flow_cost(&g, &fstar);
        if t == 0.0 || target.iter().all(|&x| x == 0.0) {
            continue;
        }
        planted += 1;
        match mwu_feasibility(&sys, &target, t, eps, round_budget(eps, m)) {
            Feasibility::Solution { g: sol, .. } => {
                solved += 1;
                let norm: f64 = sol.iter().map(|x| x.abs()).sum();
                if norm > t * (1.0 + 1e-9) || residual(&sys, &sol, &target, t) > eps {
                    contract_bad += 1;
                }
            }
            Feasibility::Certificate { .. } => contract_bad += 1,
            Feasibility::Exhausted { .. } => {}
        }

        // below the sketch lower bound no g exists; certificates must separate
        let low = 0.5 * s.norm(&b);
        match mwu_feasibility(&sys, &target, low, eps, round_budget(eps, m)) {
            Feasibility::Certificate { y, .. } => {
                certificates += 1;
                if !certifies(&sys, &target, low, &y) {
                    bad_certificates += 1;
                }
            }
            Feasibility::Solution { g: sol, .. } => {
                if residual(&sys, &sol, &target, low) > eps {
                    contract_bad += 1;
                }
            }
            Feasibility::Exhausted { .. } => {}
        }
    }
    Verdict {
        id: 8,
        name: "mwu contracts",
        pass: solved == planted && contract_bad == 0 && bad_certificates == 0,
        gating: true,
        detail: format!(
            "planted systems solved {solved}/{planted}; contract violations {contract_bad}; certificates {certificates}, invalid {bad_certificates}"
        ),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn scaling() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = Config {
        epsilon: 0.5,
        ..Config::default()
    };
    let mut samples = Vec::new();
    for &n in &[1000usize, 2000, 4000, 8000] {
        let inst = random_instance(&mut rng, n, 20);
        let start = Instant::now();
        let out = run_trial(&inst, &cfg, 0).expect("pipeline");
        let secs = start.elapsed().as_secs_f64();
        let _ = out.cost;
        samples.push((n as f64, secs));
    }
    // least-squares slope of log time against log n
    let lx: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ly: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = num / den;
    let times: Vec<String> = samples.iter().map(|(n, s)| format!("n={n}: {s:.2}s")).collect();
    Verdict {
        id: 9,
        name: "scaling (informational)",
        pass: slope <= SCALING_EXPONENT,
        gating: false,
        detail: format!(
            "{}; fitted exponent {slope:.2} (target <= {SCALING_EXPONENT})",
            times.join(", ")
        ),
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes arguments through; honor a criterion
    // number filter and ignore libtest flags
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| only.is_empty() || only.contains(&id);
    let mut verdicts = Vec::new();
    let mut report = |v: Verdict| {
        println!(
            "criterion {} [{}]: {}{} ({:.1}s) {}",
            v.id,
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            if v.gating { "" } else { ", not gating" },
            v.seconds,
            v.detail
        );
        verdicts.push(v);
    };
    if wanted(1) {
        report(approximation());
    }
    if wanted(2) {
        report(graph_lower_bound());
    }
    if wanted(3) {
        report(expected_distortion());
    }
    if wanted(4) {
        report(separation());
    }
    if wanted(5) || wanted(6) {
        let (a, b) = sandwich_and_router();
        report(a);
        report(b);
    }
    if wanted(7) {
        report(cancel_vertex_suite());
    }
    if wanted(8) {
        report(mwu_contracts());
    }
    if wanted(9) {
        report(scaling());
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| v.gating && !v.pass).map(|v| v.id).collect();
    if failed.is_empty() {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
