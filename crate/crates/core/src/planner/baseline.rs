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
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::bubble::UnionFind;
use super::path::path_length;
use super::{goal_candidates, Barrier, FailureReason, Plan, PlanFailure, PlanStats, PlannerConfig, Sampler};
use crate::arm::{ArmModel, JointVector, Vec2};
use crate::cdf::{CdfField, PointCloud};

/// Barrier evaluations for one edge of wrapped length `length`, endpoints
/// included.
pub fn edge_check_count(length: f64, resolution: f64) -> usize {
    ((length / resolution) - 1e-9).ceil().max(0.0) as usize + 1
}

/// Dense check of the geodesic `a → b`; stops at the first unsafe sample.
fn edge_is_safe(barrier: &Barrier<'_>, a: &JointVector, b: &JointVector, cfg: &PlannerConfig) -> bool {
    let m = edge_check_count(a.distance(b), cfg.edge_resolution);
    (0..m).all(|k| {
        let t = if m > 1 { k as f64 / (m - 1) as f64 } else { 0.0 };
        barrier.h(&a.geodesic_lerp(b, t)) > cfg.safety_margin
    })
}

#[derive(PartialEq)]
struct Open(f64, usize);

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Roadmap planner with explicit checking: every node costs one evaluation and
/// every candidate edge is sampled at `edge_resolution`. Same sample stream
/// and goal handling as the bubble planner.
pub fn baseline_planner(
    arm: &ArmModel,
    field: &CdfField,
    cloud: &PointCloud,
    start: &JointVector,
    target_ee: Vec2,
    cfg: &PlannerConfig,
) -> Result<Plan, PlanFailure> {
    let clock = Instant::now();
    let barrier = Barrier::new(field, cloud);
    let fail = |reason, samples| PlanFailure {
        reason,
        stats: PlanStats {
            h_evaluations: barrier.evaluations(),
            samples_drawn: samples,
            planning_time: clock.elapsed().as_secs_f64(),
            ..Default::default()
        },
        graph: None,
    };

    if barrier.h(start) <= cfg.safety_margin {
        return Err(fail(FailureReason::StartUnsafe, 0));
    }
    let start_ee = arm.end_effector(start).map_err(|_| fail(FailureReason::StartUnsafe, 0))?;
    if (start_ee - target_ee).norm() <= cfg.goal_ee_tolerance {
        let stats = PlanStats {
            h_evaluations: barrier.evaluations(),
            planning_time: clock.elapsed().as_secs_f64(),
            ..Default::default()
        };
        return Ok(Plan { waypoints: vec![start.clone()], stats });
    }
    let goals: Vec<JointVector> = goal_candidates(arm, &barrier, target_ee, cfg).into_iter().map(|(q, _)| q).collect();
    if goals.is_empty() {
        return Err(fail(FailureReason::GoalUnreachable, 0));
    }

    let mut nodes: Vec<JointVector> = Vec::new();
    let mut adj: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut uf = UnionFind::new();
    let add_node = |q: JointVector, nodes: &mut Vec<JointVector>, adj: &mut Vec<Vec<(usize, f64)>>, uf: &mut UnionFind| {
        let idx = nodes.len();
        let mut near: Vec<(f64, usize)> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.distance(&q), i))
            .filter(|&(d, _)| d <= cfg.connect_radius)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        nodes.push(q);
        adj.push(Vec::new());
        uf.push();
        for &(d, j) in near.iter().take(cfg.connect_neighbors) {
            // an edge inside one component cannot help connectivity
            if uf.find(j) == uf.find(idx) {
                continue;
            }
            if edge_is_safe(&barrier, &nodes[j], &nodes[idx], cfg) {
                adj[idx].push((j, d));
                adj[j].push((idx, d));
                uf.union(j, idx);
            }
        }
        idx
    };

    let start_idx = add_node(start.clone(), &mut nodes, &mut adj, &mut uf);
    let goal_idx: Vec<usize> = goals.iter().map(|g| add_node(g.clone(), &mut nodes, &mut adj, &mut uf)).collect();
    let connected = |uf: &mut UnionFind| {
        let root = uf.find(start_idx);
        goal_idx.iter().any(|&g| uf.find(g) == root)
    };

    let mut sampler = Sampler::new(cfg.rng_seed, cfg.goal_bias);
    let mut samples = 0u64;
    while !connected(&mut uf) {
        if samples as usize >= cfg.sample_budget {
            return Err(fail(FailureReason::NoPath, samples));
        }
        samples += 1;
        let x = sampler.next(arm, &goals);
        if barrier.h(&x) <= cfg.safety_margin {
            continue;
        }
        add_node(x, &mut nodes, &mut adj, &mut uf);
    }

    // Dijkstra to the closest goal node
    let mut cost = vec![f64::INFINITY; nodes.len()];
    let mut prev = vec![usize::MAX; nodes.len()];
    let mut heap = BinaryHeap::new();
    cost[start_idx] = 0.0;
    heap.push(Open(0.0, start_idx));
    let mut reached = None;
    while let Some(Open(c, u)) = heap.pop() {
        if c > cost[u] {
            continue;
        }
        if goal_idx.contains(&u) {
            reached = Some(u);
            break;
        }
        for &(v, w) in &adj[u] {
            if c + w < cost[v] {
                cost[v] = c + w;
                prev[v] = u;
                heap.push(Open(c + w, v));
            }
        }
    }
    let mut at = reached.ok_or_else(|| fail(FailureReason::NoPath, samples))?;
    let mut route = vec![nodes[at].clone()];
    while prev[at] != usize::MAX {
        at = prev[at];
        route.push(nodes[at].clone());
    }
    route.reverse();

    // greedy shortcutting, every attempt densely checked
    let mut waypoints = vec![route[0].clone()];
    let mut i = 0;
    let last = route.len() - 1;
    while i < last {
        let mut j = last;
        while j > i + 1 && !edge_is_safe(&barrier, &route[i], &route[j], cfg) {
            j -= 1;
        }
        waypoints.push(route[j].clone());
        i = j;
    }

    let stats = PlanStats {
        h_evaluations: barrier.evaluations(),
        path_length: path_length(&waypoints),
        samples_drawn: samples,
        planning_time: clock.elapsed().as_secs_f64(),
    };
    Ok(Plan { waypoints, stats })
}
