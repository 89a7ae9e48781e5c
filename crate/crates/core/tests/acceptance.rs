//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always shown; exits non-zero on failure.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use hopsched_core::capacity::boundary_search;
use hopsched_core::csma::{product_form_check, DEFAULT_WINDOW};
use hopsched_core::generators::{flow_loop_example, cycle_tree, branching_tree, grid_star, linear10, path_scenario, star};
use hopsched_core::queueing::{Discipline, QueueLayout, QueueMode, ShadowBank};
use hopsched_core::rank::{assign_ranks, decompose_components, enumerate_flow_paths, find_flow_loops};
use hopsched_core::schedule::max_weight_schedule;
use hopsched_core::schedulers::SchedulerKind;
use hopsched_core::sim::{average_delay, run, stability_estimate, Scenario, Stability};

const CENTRALIZED: [SchedulerKind; 4] = [
    SchedulerKind::Bp,
    SchedulerKind::HqMws,
    SchedulerKind::PlqMws,
    SchedulerKind::FlqMws,
];
const HORIZON: u64 = 1_000_000;
const SEED: u64 = 1;
const EPSILON: f64 = 0.005;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: u32, ok: bool, detail: String, started: Instant) {
        if !ok {
            self.failed += 1;
        }
        println!(
            "criterion {n}: {} - {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

struct Outcome {
    status: Stability,
    delay: f64,
    slope: f64,
}

fn simulate(s: Scenario) -> Outcome {
    let t = run(&s).expect("run");
    let v = stability_estimate(&t).expect("verdict");
    Outcome {
        status: v.status,
        delay: average_delay(&t).unwrap_or(f64::NAN),
        slope: v.slope,
    }
}

fn linear_run(kind: SchedulerKind, lambda: f64, reversed: bool) -> Outcome {
    simulate(
        linear10(lambda, reversed)
            .with_scheduler(kind)
            .with_epsilon(EPSILON)
            .with_horizon(HORIZON)
            .with_seed(SEED),
    )
}

fn main() {
    let mut report = Report { failed: 0 };

    // The stability grid (criterion 8) contains the runs of criterion 1.
    let started = Instant::now();
    let forward = linear10(1.0, false);
    let lambda_star = boundary_search(&forward.graph, &forward.flows, &[1.0; 10]).unwrap();
    let factors = [0.8, 0.9, 1.1, 1.2];
    let mut grid: BTreeMap<(usize, usize), Outcome> = BTreeMap::new();
    for (i, kind) in CENTRALIZED.into_iter().enumerate() {
        for (j, f) in factors.into_iter().enumerate() {
            grid.insert((i, j), linear_run(kind, f * lambda_star, false));
        }
    }
    let grid_time = started.elapsed();

    // 1: boundary on linear-10.
    {
        let t0 = Instant::now();
        let mut ok = (lambda_star - 0.5).abs() < 1e-12;
        let mut parts = Vec::new();
        for (i, kind) in CENTRALIZED.into_iter().enumerate() {
            let lo = &grid[&(i, 1)];
            let hi = &grid[&(i, 2)];
            ok &= lo.status == Stability::Stable && hi.status == Stability::Unstable;
            parts.push(format!("{kind} 0.45:{} 0.55:{}", lo.status.name(), hi.status.name()));
        }
        report.line(1, ok, parts.join(", "), t0 - grid_time);
    }

    // 2: capacity oracle numbers.
    {
        let t0 = Instant::now();
        let lin = boundary_search(&forward.graph, &forward.flows, &[1.0; 10]).unwrap();
        let mut parts = vec![format!("linear10 {lin:.9}")];
        let mut ok = (lin - 0.5).abs() <= 1e-6;
        for (name, s) in [("star", star(1.0)), ("grid-star", grid_star(1.0))] {
            let d = vec![1.0; s.flows.len()];
            let b = boundary_search(&s.graph, &s.flows, &d).unwrap();
            ok &= (b - 10.0 / 27.0).abs() <= 1e-6;
            parts.push(format!("{name} {b:.9}"));
        }
        report.line(2, ok, parts.join(", "), t0);
    }

    // 3: rank assignment golden test.
    {
        let t0 = Instant::now();
        let one_based = |v: &[usize]| v.iter().map(|x| x - 1).collect::<Vec<_>>();
        let s = branching_tree();
        let comp = &decompose_components(&s.flows)[0];
        let paths = enumerate_flow_paths(&s.flows, comp).unwrap();
        let named = [
            one_based(&[1, 2, 3, 4, 5, 8, 10]),
            one_based(&[1, 2, 6, 11, 12]),
            one_based(&[7, 8, 10]),
            one_based(&[7, 8, 9, 11, 12]),
            one_based(&[1, 2, 3, 4, 5, 8, 9, 11, 12]),
        ];
        let order: Option<Vec<usize>> = named
            .iter()
            .map(|w| paths.iter().position(|p| &p.links == w))
            .collect();
        let table: [[i64; 12]; 6] = [
            [-1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
            [1, 2, 3, 4, 5, -1, -1, 6, -1, 7, -1, -1],
            [1, 2, 3, 4, 5, 3, -1, 6, -1, 7, 4, 5],
            [1, 2, 3, 4, 5, 3, 1, 6, -1, 7, 4, 5],
            [1, 2, 3, 4, 5, 3, 1, 6, 7, 7, 8, 9],
            [1, 2, 3, 4, 5, 3, 1, 6, 7, 7, 8, 9],
        ];
        let mut ok = paths.len() == 5 && order.is_some();
        let mut rows_ok = 0;
        if let Some(order) = order {
            let a = assign_ranks(&paths, &order).unwrap();
            for (k, want) in table.iter().enumerate() {
                let got: Vec<i64> = (0..12).map(|l| a.snapshots[k][&l]).collect();
                if got == want {
                    rows_ok += 1;
                }
            }
            let fin: Vec<u32> = (0..12).map(|l| a.ranking.get(l).unwrap()).collect();
            ok &= rows_ok == 6 && fin == [1, 2, 3, 4, 5, 3, 1, 6, 7, 7, 8, 9];
        }
        let b = cycle_tree();
        let bc = &decompose_components(&b.flows)[0];
        let bp = enumerate_flow_paths(&b.flows, bc).unwrap();
        let bo: Vec<usize> = (0..bp.len()).collect();
        let br: Vec<u32> = (0..8)
            .map(|l| assign_ranks(&bp, &bo).unwrap().ranking.get(l).unwrap())
            .collect();
        ok &= br == [1, 2, 3, 4, 5, 6, 7, 8];
        let a5 = flow_loop_example();
        let loops = find_flow_loops(&a5.flows, &decompose_components(&a5.flows)[0]);
        let mut loop_links: Vec<usize> = loops.first().map(|l| l.links.iter().map(|x| x + 1).collect()).unwrap_or_default();
        loop_links.sort_unstable();
        ok &= loop_links == [2, 3, 4, 5, 6, 7];
        report.line(
            3,
            ok,
            format!("rank table rows matched {rows_ok}/6, cycle-tree ranking {br:?}, flow-loop witness {loop_links:?}"),
            t0,
        );
    }

    // 4: MaxWeight vs brute force.
    {
        let t0 = Instant::now();
        let mut failures = 0;
        for seed in 0..200u64 {
            let mut rng = common::rng(0xacce_0000 + seed);
            let n = 1 + (seed as usize / 2 % 12);
            let g = if seed % 2 == 0 {
                common::random_pair_graph(&mut rng, n, 0.35)
            } else {
                common::random_node_exclusive_graph(&mut rng, 2 + (seed as usize % 7), n)
            };
            let w: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.0..10.0)).collect();
            let got = max_weight_schedule(&g, &w).unwrap();
            let (bw, _) = common::brute_max_weight(&g, &w);
            if (got.weight - bw).abs() > 1e-9 * bw.max(1.0) {
                failures += 1;
            }
        }
        report.line(4, failures == 0, format!("200 graphs, {failures} failures"), t0);
    }

    // 5: CSMA product form on the 3-link path.
    {
        let t0 = Instant::now();
        let s = path_scenario(3, &[vec![0], vec![1], vec![2]]);
        let r = product_form_check(&s.graph, &[0.5, -0.3, 1.0], DEFAULT_WINDOW, 1_000_000, 7).unwrap();
        report.line(
            5,
            r.total_variation <= 0.02,
            format!("{} schedules, TV {:.5}", r.schedules.len(), r.total_variation),
            t0,
        );
    }

    // 6: shadow dynamics.
    {
        let t0 = Instant::now();
        let s = path_scenario(2, &[vec![0, 1]]);
        let layout = Arc::new(QueueLayout::new(&s.graph, &s.flows, QueueMode::PerLink(Discipline::Fifo)));
        let mut sh = ShadowBank::new(layout.clone(), 0.005);
        let mut ok = true;
        // Hand cases: Q^(t) = Q^(t-1) + (1 + eps) A(t) / t, then (Q^ - c)+.
        let k = 1.0 + 0.005;
        sh.tick(&[7, 3], 3).unwrap();
        ok &= sh.value(0) == k * 7.0 / 3.0 && sh.value(1) == k * 3.0 / 3.0;
        sh.tick(&[9, 4], 4).unwrap();
        ok &= sh.value(0) == k * 7.0 / 3.0 + k * 9.0 / 4.0;
        let mut b = ShadowBank::new(layout, 0.0);
        b.set_value(0, 0.4);
        b.set_value(1, 3.2);
        b.serve(0, 1);
        b.serve(1, 2);
        ok &= b.value(0) == 0.0 && b.value(1) == 3.2 - 2.0;
        let mut violations = 0;
        let mut slots = 0;
        for kind in [SchedulerKind::HqMws, SchedulerKind::PlqMws, SchedulerKind::FlqMws] {
            let c = common::checked_run(&linear10(0.45, true).with_scheduler(kind).with_horizon(10_000).with_seed(3));
            violations += c.failures.len();
            slots += c.shadow_checks;
        }
        ok &= violations == 0 && slots == 30_000;
        report.line(6, ok, format!("hand cases exact, coupling checked over {slots} slots, {violations} violations"), t0);
    }

    // 7: delay ordering on reversed linear-10.
    {
        let t0 = Instant::now();
        let d: Vec<f64> = CENTRALIZED.iter().map(|&k| linear_run(k, 0.45, true).delay).collect();
        let (bp, hq, plq, flq) = (d[0], d[1], d[2], d[3]);
        let close = (plq - flq).abs() <= 0.1 * plq.min(flq);
        let ok = close && plq.max(flq) < bp && bp < hq;
        report.line(
            7,
            ok,
            format!("PLQ {plq:.2}, FLQ {flq:.2}, BP {bp:.2}, HQ {hq:.2}"),
            t0,
        );
    }

    // 8: property suites and the stability grid.
    {
        let t0 = Instant::now();
        let mut problems = Vec::new();
        let mut runs = 0;
        for seed in 0..40u64 {
            let mut rng = common::rng(0x8000 + seed);
            let n = 2 + seed as usize % 7;
            let Some((g, fs)) = common::random_flow_instance(&mut rng, n, 1 + seed as usize % 4, 4, false, seed as usize % 5)
            else {
                continue;
            };
            let base = common::with_random_rates(&mut rng, &Scenario::new(g, fs), 0.6);
            for kind in SchedulerKind::ALL {
                let c = common::checked_run(&base.clone().with_scheduler(kind).with_horizon(2_000).with_seed(seed));
                runs += 1;
                problems.extend(c.failures);
            }
        }
        let mut rank_cases = 0;
        let mut rank_mismatch = 0;
        for seed in 0..400u64 {
            let mut rng = common::rng(0x9000 + seed);
            let Some((_, fs)) =
                common::random_flow_instance(&mut rng, 2 + seed as usize % 5, seed as usize % 4, 4, false, seed as usize % 7)
            else {
                continue;
            };
            if fs.is_empty() {
                continue;
            }
            rank_cases += 1;
            if common::has_flow_loop(&fs) == common::brute_ranking_exists(&fs) {
                rank_mismatch += 1;
            }
        }
        let mut grid_bad = Vec::new();
        let mut cells = Vec::new();
        for (i, kind) in CENTRALIZED.into_iter().enumerate() {
            for (j, f) in factors.into_iter().enumerate() {
                let o = &grid[&(i, j)];
                let want = if f < 1.0 { Stability::Stable } else { Stability::Unstable };
                cells.push(format!("{kind}@{f}:{}", o.status.name()));
                if o.status != want {
                    grid_bad.push(format!("{kind}@{f} {} slope {:.3e}", o.status.name(), o.slope));
                }
            }
        }
        let ok = problems.is_empty() && rank_mismatch == 0 && rank_cases > 100 && grid_bad.is_empty();
        report.line(
            8,
            ok,
            format!(
                "{runs} checked runs ({} invariant failures), ranking oracle {rank_cases} cases ({rank_mismatch} mismatches), grid [{}] in {:.0}s{}",
                problems.len(),
                cells.join(" "),
                grid_time.as_secs_f64(),
                if grid_bad.is_empty() { String::new() } else { format!(", wrong: {}", grid_bad.join("; ")) }
            ),
            t0,
        );
        for p in problems.iter().take(5) {
            println!("  {p}");
        }
    }

    if report.failed > 0 {
        println!("{} criteria failed", report.failed);
        std::process::exit(1);
    }
}
