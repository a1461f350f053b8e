/*
Copyright 2026 The cdfplan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Acceptance checks 1 to 9. Prints one PASS/FAIL line per check and exits
//! nonzero if any fails.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use cdfplan::arm::{ArmModel, JointVector, Vec2};
use cdfplan::cdf::{build_cdf_field, cdf_oracle, contact_tolerance, CdfField, PointCloud};
use cdfplan::config::ScenarioFile;
use cdfplan::filter::{discard_scenarios, sample_constraints, solve_filter_qp, ConstraintRow, FilterParams, FilterStatus};
use cdfplan::planner::{plan_bubbles, PlannerConfig};
use cdfplan::sim::{bench_planners, median, run_episode, Frame, Motion};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn stock(name: &str) -> ScenarioFile {
    ScenarioFile::load(&repo_root().join("scenarios").join(format!("{name}.toml"))).unwrap()
}

fn random_q(rng: &mut ChaCha8Rng) -> JointVector {
    JointVector::new(vec![rng.random_range(-PI..PI), rng.random_range(-PI..PI)]).unwrap()
}

/// Point in the annulus the 2-link arm can reach.
fn reachable_point(rng: &mut ChaCha8Rng, arm: &ArmModel) -> Vec2 {
    let r = rng.random_range(0.05..arm.reach() + arm.link_inflation());
    let a = rng.random_range(-PI..PI);
    arm.base() + Vec2::new(r * a.cos(), r * a.sin())
}

/// Point within `max` meters of the arm body at `q`.
fn point_near_arm(rng: &mut ChaCha8Rng, arm: &ArmModel, q: &JointVector, max: f64) -> Vec2 {
    let (segments, _) = arm.forward_kinematics(q).unwrap();
    let s = &segments[rng.random_range(0..segments.len())];
    let t = rng.random_range(0.0..1.0);
    let a = rng.random_range(-PI..PI);
    let r = arm.link_inflation() + rng.random_range(0.0..max);
    s.start + (s.end - s.start).scale(t) + Vec2::new(r * a.cos(), r * a.sin())
}

fn oracle_lipschitz(arm: &ArmModel, search: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let diag = 2.0 * PI / search as f64 * 2f64.sqrt();
    let (mut worst, mut count) = (f64::NEG_INFINITY, 0);
    while count < 500 {
        let p = reachable_point(&mut rng, arm);
        let q = random_q(&mut rng);
        // half the pairs are close, where the bound is tight
        let q2 = if count % 2 == 0 {
            random_q(&mut rng)
        } else {
            q.offset(&[rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)])
        };
        let a = cdf_oracle(arm, &q, p, search).unwrap();
        let b = cdf_oracle(arm, &q2, p, search).unwrap();
        if !a.reachable {
            continue;
        }
        count += 1;
        worst = worst.max((a.distance - b.distance).abs() - q.distance(&q2) - 2.0 * diag);
    }
    outcome(worst <= 0.0, format!("500 triples, max(|Δd| − ‖Δq‖ − 2·diag) = {worst:.4} rad"))
}

fn field_accuracy(arm: &ArmModel, field: &CdfField, search: usize, build_seconds: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (lq, lp) = field.certified_lipschitz();
    let tau_slack = 0.5 * 2.0 * PI / search as f64 * 2f64.sqrt();
    let bound = 0.5 * (lq * field.q_cell_diagonal() + lp * field.p_cell_diagonal()) + tau_slack;
    let (lo, hi) = field.p_box();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = random_q(&mut rng);
        let p = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        let d_hat = field.eval(&q, p).unwrap().value;
        let d = cdf_oracle(arm, &q, p, search).unwrap().distance;
        worst = worst.max((d_hat - d).abs());
    }
    outcome(worst <= bound, format!("1000 pairs, max |d̂ − d| = {worst:.4} rad, bound {bound:.3} rad, build {build_seconds:.1} s"))
}

fn gradient_check(arm: &ArmModel, field: &CdfField) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let step = 1e-5;
    let spacing = field.q_spacing();
    let (lo, hi) = field.p_box();
    let (mut worst, mut count) = (0f64, 0);
    while count < 200 {
        let q = random_q(&mut rng);
        let n = rng.random_range(1..=3);
        let points: Vec<Vec2> = (0..n)
            .map(|_| {
                let p = point_near_arm(&mut rng, arm, &q, 0.6);
                Vec2::new(p.x.clamp(lo.x + 1e-3, hi.x - 1e-3), p.y.clamp(lo.y + 1e-3, hi.y - 1e-3))
            })
            .collect();
        // interior of a q cell, away from argmin switches
        let interior = q.as_slice().iter().all(|&x| {
            let f = (x + PI).rem_euclid(spacing);
            f > 2.0 * step && f < spacing - 2.0 * step
        });
        let mut values: Vec<f64> = points.iter().map(|&p| field.eval(&q, p).unwrap().value).collect();
        values.sort_by(f64::total_cmp);
        if !interior || (values.len() > 1 && values[1] - values[0] < 1e-3) {
            continue;
        }
        count += 1;
        let cloud = PointCloud::stationary(points).unwrap();
        let grad = field.ncsb(&q, &cloud).unwrap().grad_q;
        for (i, g) in grad.iter().enumerate() {
            let mut e = vec![0.0; 2];
            e[i] = step;
            let plus = field.ncsb_value(&q.offset(&e), &cloud).unwrap().0;
            e[i] = -step;
            let minus = field.ncsb_value(&q.offset(&e), &cloud).unwrap().0;
            worst = worst.max((g - (plus - minus) / (2.0 * step)).abs());
        }
    }
    outcome(worst <= 1e-6, format!("200 states, max |∂h/∂q − central difference| = {worst:.2e}"))
}

const SUITE: [&str; 5] = ["pillar", "two", "gate", "ring", "quad"];

fn bubble_certificate(field: &Arc<CdfField>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut samples, mut violations, mut bubbles) = (0, 0, 0);
    for name in SUITE {
        let sc = stock(&format!("suite/{name}")).to_scenario().unwrap();
        let frame = Frame::capture(&sc.obstacles, 0.0);
        let cloud = PointCloud::stationary(frame.points.clone()).unwrap();
        for k in 0..4 {
            let cfg = PlannerConfig { rng_seed: sc.seed + k, ..sc.planner.clone() };
            let graph = match plan_bubbles(&sc.arm, field, &cloud, &sc.q_start, sc.target_ee, &cfg) {
                Ok((_, g)) => g,
                Err(f) => *f.graph.expect("bubble planner keeps its cover"),
            };
            bubbles += graph.bubbles.len();
            for _ in 0..500 {
                let b = &graph.bubbles[rng.random_range(0..graph.bubbles.len())];
                let r = b.radius * rng.random_range(0.0f64..1.0).sqrt();
                let a = rng.random_range(-PI..PI);
                let q = b.center.offset(&[r * a.cos(), r * a.sin()]);
                samples += 1;
                if frame.points.iter().any(|&p| sc.arm.workspace_distance(&q, p).unwrap() <= 0.0) {
                    violations += 1;
                }
            }
        }
    }
    outcome(violations == 0, format!("{samples} samples in {bubbles} bubbles, {violations} in collision"))
}

fn check_reduction(field: &Arc<CdfField>) -> Outcome {
    let suite: Vec<_> =
        SUITE.iter().map(|n| (stock(&format!("suite/{n}")).to_scenario().unwrap(), field.clone())).collect();
    let table = bench_planners(&suite, 20).unwrap();
    let pairs = table.paired_ratios();
    let (checks, lens) = table.median_ratios();
    let per: Vec<String> = SUITE
        .iter()
        .map(|n| {
            let v: Vec<f64> = table
                .runs
                .iter()
                .filter(|r| r.scenario == *n)
                .filter_map(|r| Some(r.baseline?.0 as f64 / r.bubble?.0 as f64))
                .collect();
            format!("{n} {:.1}", median(&v))
        })
        .collect();
    outcome(
        checks >= 3.0 && lens <= 1.2,
        format!(
            "{} paired runs, median check ratio {checks:.2}, median path ratio {lens:.3} ({})",
            pairs.len(),
            per.join(", ")
        ),
    )
}

/// Exhaustive search over the 1e-3 grid on the box. For each column the
/// feasible rows cut an interval in the second coordinate, so each column
/// costs O(rows).
fn grid_optimum(u_nom: &[f64], rows: &[ConstraintRow], u_max: f64) -> Option<f64> {
    let res = 1e-3;
    let n = (2.0 * u_max / res).round() as i64;
    let mut best: Option<f64> = None;
    for i in 0..=n {
        let x = -u_max + i as f64 * res;
        let (mut lo, mut hi) = (-u_max, u_max);
        let mut empty = false;
        for r in rows {
            // a0·x + a1·y ≥ b
            let rest = r.b - r.a[0] * x;
            if r.a[1].abs() < 1e-15 {
                empty |= rest > 1e-12;
            } else if r.a[1] > 0.0 {
                lo = lo.max(rest / r.a[1]);
            } else {
                hi = hi.min(rest / r.a[1]);
            }
        }
        if empty || lo > hi + 1e-12 {
            continue;
        }
        let j_lo = ((lo + u_max) / res - 1e-9).ceil() as i64;
        let j_hi = ((hi + u_max) / res + 1e-9).floor() as i64;
        if j_lo > j_hi {
            continue;
        }
        let j = (((u_nom[1] + u_max) / res).round() as i64).clamp(j_lo, j_hi);
        let y = -u_max + j as f64 * res;
        let f = ((x - u_nom[0]).powi(2) + (y - u_nom[1]).powi(2)).sqrt();
        best = Some(best.map_or(f, |b: f64| b.min(f)));
    }
    best
}

fn qp_instances(field: &CdfField, arm: &ArmModel) -> Vec<(Vec<f64>, Vec<ConstraintRow>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut out = Vec::new();
    // synthetic rows around a known interior point
    for _ in 0..100 {
        let u0 = [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)];
        let rows = (0..rng.random_range(1..=8))
            .map(|_| {
                let a = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let b = a[0] * u0[0] + a[1] * u0[1] - rng.random_range(0.02..0.5);
                ConstraintRow { a, b }
            })
            .collect();
        out.push((vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)], rows));
    }
    // rows from the filter pipeline near the arm
    while out.len() < 200 {
        let q = random_q(&mut rng);
        let points: Vec<Vec2> = (0..rng.random_range(1..=3)).map(|_| point_near_arm(&mut rng, arm, &q, 0.4)).collect();
        let vels: Vec<Vec2> =
            points.iter().map(|_| Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))).collect();
        let cloud = PointCloud::new(points, vels, 0.0).unwrap();
        let params = FilterParams { num_samples: 8, ..FilterParams::default() }.with_seed(rng.random());
        let u_nom = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let rows = sample_constraints(field, &q, &cloud, &params).unwrap();
        out.push((u_nom, rows));
    }
    out
}

fn qp_correctness(field: &CdfField, arm: &ArmModel) -> Outcome {
    let u_max = arm.joint_velocity_limit();
    // The grid optimum can only overestimate the true one, by up to the grid
    // resolution near acute vertices, so only the solver side is bounded.
    // (agreed, solver excess over grid, grid excess over solver, KKT residual)
    let results: Vec<(bool, f64, f64, f64)> = qp_instances(field, arm)
        .par_iter()
        .map(|(u_nom, rows)| {
            let sol = solve_filter_qp(u_nom, rows, u_max);
            match (sol.status, grid_optimum(u_nom, rows, u_max)) {
                (FilterStatus::Infeasible, None) => (true, 0.0, 0.0, 0.0),
                (FilterStatus::Infeasible, Some(_)) | (_, None) => (false, f64::INFINITY, 0.0, sol.kkt_residual),
                (_, Some(g)) => {
                    let f = u_nom.iter().zip(&sol.u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let feasible = sol.u.iter().all(|v| v.abs() <= u_max + 1e-9)
                        && rows.iter().all(|r| r.slack(&sol.u) >= -1e-6);
                    let ok = feasible && f <= g + 1e-3 && sol.kkt_residual <= 1e-6;
                    (ok, (f - g).max(0.0), (g - f).max(0.0), sol.kkt_residual)
                }
            }
        })
        .collect();
    let worst = |k: fn(&(bool, f64, f64, f64)) -> f64| results.iter().map(k).fold(0.0, f64::max);
    let agreed_infeasible = results.iter().filter(|r| r.0 && r.3 == 0.0 && r.1 == 0.0 && r.2 == 0.0).count();
    outcome(
        results.iter().all(|r| r.0),
        format!(
            "200 instances ({agreed_infeasible} infeasible for both), solver above grid optimum by ≤ {:.2e}, \
             grid above solver by ≤ {:.2e}, max KKT residual {:.2e}",
            worst(|r| r.1),
            worst(|r| r.2),
            worst(|r| r.3)
        ),
    )
}

fn safety_invariance(field: &Arc<CdfField>) -> Outcome {
    let base = stock("crossing").to_scenario().unwrap();
    let runs: Vec<(u64, f64, bool, u64)> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let y: f64 = rng.random_range(0.6..1.6);
            let speed: f64 = rng.random_range(0.15..0.3);
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let t1 = 4.8 / speed;
            let mut sc = base.clone();
            sc.seed = s;
            sc.filter.point_noise_sigma = 0.0;
            sc.filter.wasserstein_radius = 0.0;
            sc.filter.epsilon = 0.0;
            sc.filter.alpha = 2.0;
            sc.dt = 0.02;
            sc.duration = t1 + 1.0;
            sc.obstacles[0].motion = Motion::Waypoints { knots: vec![(0.0, [-2.4 * dir, y]), (t1, [2.4 * dir, y])] };
            let (_, on) = run_episode(&sc, field.clone()).unwrap();
            sc.filter_enabled = false;
            let (_, off) = run_episode(&sc, field.clone()).unwrap();
            (on.collisions, on.min_h, off.collisions > 0, on.infeasible_ticks)
        })
        .collect();
    let collisions: u64 = runs.iter().map(|r| r.0).sum();
    let min_h = runs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let off = runs.iter().filter(|r| r.2).count();
    let infeasible: u64 = runs.iter().map(|r| r.3).sum();
    outcome(
        collisions == 0 && min_h >= -0.02 && off >= 1,
        format!(
            "100 episodes: filter on {collisions} collision ticks, min h {min_h:.4}, {infeasible} infeasible ticks; \
             filter off {off} episodes with a collision"
        ),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let sc = scenario(dir, "crossing", |_| {});
    let mut traces = Vec::new();
    for k in 0..2 {
        let trace = dir.join(format!("t{k}.jsonl"));
        let metrics = dir.join(format!("m{k}.json"));
        let o = cdfplan(&["run", "--scenario", path_arg(&sc), "--trace", path_arg(&trace), "--metrics", path_arg(&metrics)]);
        if !o.status.success() {
            return outcome(false, format!("run failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        traces.push(std::fs::read(&trace).unwrap());
    }
    outcome(traces[0] == traces[1], format!("two runs of crossing, {} bytes each", traces[0].len()))
}

fn monotone_tightening(field: &CdfField, arm: &ArmModel) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u_max = arm.joint_velocity_limit();
    let (mut b_drops, mut lost, mut worse, mut feasible) = (0, 0, 0, 0);
    for _ in 0..50 {
        let q = random_q(&mut rng);
        let points: Vec<Vec2> = (0..rng.random_range(1..=4)).map(|_| point_near_arm(&mut rng, arm, &q, 0.4)).collect();
        let vels: Vec<Vec2> =
            points.iter().map(|_| Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))).collect();
        let cloud = PointCloud::new(points, vels, 0.0).unwrap();
        let u_nom = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let seed = rng.random();

        let loose = FilterParams { wasserstein_radius: 0.0, ..FilterParams::default() }.with_seed(seed);
        let tight = FilterParams { wasserstein_radius: 0.05, ..loose.clone() }.with_seed(seed);
        let a = sample_constraints(field, &q, &cloud, &loose).unwrap();
        let b = sample_constraints(field, &q, &cloud, &tight).unwrap();
        b_drops += a.iter().zip(&b).filter(|(x, y)| y.b < x.b).count();

        let all = discard_scenarios(&a, &u_nom, 0.0);
        let sol = solve_filter_qp(&u_nom, &all, u_max);
        let kept = discard_scenarios(&a, &u_nom, 0.25);
        if sol.status == FilterStatus::Infeasible {
            continue;
        }
        feasible += 1;
        lost += kept.iter().filter(|r| r.slack(&sol.u) < -1e-9).count();
        let relaxed = solve_filter_qp(&u_nom, &kept, u_max);
        let dist = |u: &[f64]| u.iter().zip(&u_nom).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if relaxed.status == FilterStatus::Infeasible || dist(&relaxed.u) > dist(&sol.u) + 1e-9 {
            worse += 1;
        }
    }
    outcome(
        b_drops == 0 && lost == 0 && worse == 0,
        format!(
            "50 states: {b_drops} rows with smaller b at larger r_w; {feasible} feasible, {lost} kept rows violated \
             at the previous u, {worse} relaxed solutions farther from nominal"
        ),
    )
}

fn main() {
    let clock = Instant::now();
    let file = stock("empty");
    let arm = file.arm().unwrap();
    let spec = file.grid_spec(&arm);
    let search = spec.search_cells();
    let build = Instant::now();
    let field: CdfField = build_cdf_field(&arm, &spec).unwrap();
    let build_seconds = build.elapsed().as_secs_f64();
    let field = Arc::new(field);
    let dir = tempfile::tempdir().unwrap();
    println!(
        "field {}x{} cells, search {search}, contact tolerance {:.4} m",
        spec.q_cells,
        spec.p_cells,
        contact_tolerance(&arm, search)
    );

    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        ("oracle Lipschitz", Box::new(|| oracle_lipschitz(&arm, search))),
        ("field accuracy", Box::new(|| field_accuracy(&arm, &field, search, build_seconds))),
        ("gradient", Box::new(|| gradient_check(&arm, &field))),
        ("bubble certificate", Box::new(|| bubble_certificate(&field))),
        ("collision-check reduction", Box::new(|| check_reduction(&field))),
        ("QP correctness", Box::new(|| qp_correctness(&field, &arm))),
        ("safety invariance", Box::new(|| safety_invariance(&field))),
        ("determinism", Box::new(|| determinism(dir.path()))),
        ("monotone tightening", Box::new(|| monotone_tightening(&field, &arm))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} [{name}]: {} ({}; {:.1} s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} passed in {:.1} s", checks.len() - failed, checks.len(), clock.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
