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
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::path::{path_length, query_path, shortcut_in_cover};
use super::{goal_candidates, Barrier, FailureReason, Plan, PlanFailure, PlanStats, PlannerConfig, Sampler};
use crate::arm::{ArmModel, JointVector, Vec2};
use crate::cdf::{CdfField, PointCloud};

/// Radius cap keeping geodesic segments between interior points inside the
/// ball on the torus.
pub(crate) const MAX_RADIUS: f64 = std::f64::consts::FRAC_PI_2;

/// Certified safe ball in joint space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub center: JointVector,
    pub radius: f64,
}

impl Bubble {
    pub fn contains(&self, q: &JointVector) -> bool {
        self.center.distance(q) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleEdge {
    pub a: usize,
    pub b: usize,
    /// Point on the center geodesic lying in both bubbles.
    pub witness: JointVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleGraph {
    pub bubbles: Vec<Bubble>,
    pub edges: Vec<BubbleEdge>,
    pub start_index: usize,
    pub goal_indices: Vec<usize>,
    pub stats: PlanStats,
}

impl BubbleGraph {
    fn add(&mut self, bubble: Bubble, uf: &mut UnionFind) -> usize {
        let idx = self.bubbles.len();
        uf.push();
        for (j, other) in self.bubbles.iter().enumerate() {
            let d = other.center.distance(&bubble.center);
            if d <= other.radius + bubble.radius {
                let t = if other.radius + bubble.radius > 0.0 { other.radius / (other.radius + bubble.radius) } else { 0.5 };
                let witness = other.center.geodesic_lerp(&bubble.center, t);
                self.edges.push(BubbleEdge { a: j, b: idx, witness });
                uf.union(j, idx);
            }
        }
        self.bubbles.push(bubble);
        idx
    }

    pub fn covers(&self, q: &JointVector) -> bool {
        self.bubbles.iter().any(|b| b.contains(q))
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new() -> Self {
        Self { parent: Vec::new() }
    }

    pub(crate) fn push(&mut self) {
        self.parent.push(self.parent.len());
    }

    pub(crate) fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn bubble_from_h(center: JointVector, h: f64, margin: f64, lipschitz_q: f64, min_radius: f64) -> Option<Bubble> {
    let radius = if lipschitz_q > 0.0 { ((h - margin) / lipschitz_q).max(0.0) } else { MAX_RADIUS };
    let radius = radius.min(MAX_RADIUS);
    (radius >= min_radius).then_some(Bubble { center, radius })
}

/// One barrier evaluation at `q`; the ball of radius `(h − μ)/L_q` (capped at
/// π/2) is safe by the Lipschitz bound. `None` when below `min_radius`.
pub fn grow_bubble(
    field: &CdfField,
    cloud: &PointCloud,
    q: &JointVector,
    margin: f64,
    min_radius: f64,
) -> Option<Bubble> {
    let barrier = Barrier::new(field, cloud);
    grow(&barrier, q, margin, min_radius)
}

fn grow(barrier: &Barrier<'_>, q: &JointVector, margin: f64, min_radius: f64) -> Option<Bubble> {
    let h = barrier.h(q);
    bubble_from_h(q.clone(), h, margin, barrier.lipschitz_q(), min_radius)
}

/// Grows a bubble cover from `start` until it connects to a goal bubble or the
/// sample budget runs out.
///
/// Samples landing inside an existing bubble are skipped without a check.
/// Other samples are pulled back onto the boundary of the nearest bubble
/// before growing, so new bubbles always touch the cover.
pub fn build_cover(
    arm: &ArmModel,
    field: &CdfField,
    cloud: &PointCloud,
    start: &JointVector,
    target_ee: Vec2,
    cfg: &PlannerConfig,
) -> Result<BubbleGraph, PlanFailure> {
    let barrier = Barrier::new(field, cloud);
    let mut graph = BubbleGraph {
        bubbles: Vec::new(),
        edges: Vec::new(),
        start_index: 0,
        goal_indices: Vec::new(),
        stats: PlanStats::default(),
    };
    let fail = |reason, graph: Option<BubbleGraph>, barrier: &Barrier<'_>, samples| PlanFailure {
        reason,
        stats: PlanStats { h_evaluations: barrier.evaluations(), samples_drawn: samples, ..Default::default() },
        graph: graph.map(Box::new),
    };

    let lq = barrier.lipschitz_q();
    let mut uf = UnionFind::new();
    let h_start = barrier.h(start);
    let Some(start_bubble) = bubble_from_h(start.clone(), h_start, cfg.safety_margin, lq, 0.0)
        .filter(|_| h_start > cfg.safety_margin)
    else {
        return Err(fail(FailureReason::StartUnsafe, None, &barrier, 0));
    };
    graph.start_index = graph.add(start_bubble, &mut uf);

    let start_ee = arm.end_effector(start).map_err(|_| fail(FailureReason::StartUnsafe, None, &barrier, 0))?;
    if (start_ee - target_ee).norm() <= cfg.goal_ee_tolerance {
        graph.goal_indices.push(graph.start_index);
        graph.stats.h_evaluations = barrier.evaluations();
        return Ok(graph);
    }

    let goals = goal_candidates(arm, &barrier, target_ee, cfg);
    if goals.is_empty() {
        return Err(fail(FailureReason::GoalUnreachable, Some(graph), &barrier, 0));
    }
    let goal_configs: Vec<JointVector> = goals.iter().map(|(q, _)| q.clone()).collect();
    for (q, h) in goals {
        if let Some(b) = bubble_from_h(q, h, cfg.safety_margin, lq, cfg.min_radius) {
            let idx = graph.add(b, &mut uf);
            graph.goal_indices.push(idx);
        }
    }
    if graph.goal_indices.is_empty() {
        return Err(fail(FailureReason::GoalUnreachable, Some(graph), &barrier, 0));
    }

    let connected = |graph: &BubbleGraph, uf: &mut UnionFind| {
        let root = uf.find(graph.start_index);
        graph.goal_indices.iter().any(|&g| uf.find(g) == root)
    };

    let mut sampler = Sampler::new(cfg.rng_seed, cfg.goal_bias);
    let mut samples = 0u64;
    while !connected(&graph, &mut uf) {
        if samples as usize >= cfg.sample_budget {
            return Err(fail(FailureReason::NoPath, Some(graph), &barrier, samples));
        }
        samples += 1;
        let x = sampler.next(arm, &goal_configs);
        let mut nearest = 0;
        let mut gap = f64::INFINITY;
        for (i, b) in graph.bubbles.iter().enumerate() {
            let g = b.center.distance(&x) - b.radius;
            if g < gap {
                gap = g;
                nearest = i;
            }
        }
        if gap <= 0.0 {
            continue;
        }
        let anchor = &graph.bubbles[nearest];
        let d = anchor.center.distance(&x);
        let boundary = anchor.center.geodesic_lerp(&x, anchor.radius / d);
        let inside_other = graph
            .bubbles
            .iter()
            .enumerate()
            .any(|(i, b)| i != nearest && b.center.distance(&boundary) < b.radius);
        let center = if inside_other { x } else { boundary };
        if let Some(b) = grow(&barrier, &center, cfg.safety_margin, cfg.min_radius) {
            graph.add(b, &mut uf);
        }
    }
    graph.stats.h_evaluations = barrier.evaluations();
    graph.stats.samples_drawn = samples;
    Ok(graph)
}

/// Cover, path extraction and in-cover shortcutting.
pub fn plan_bubbles(
    arm: &ArmModel,
    field: &CdfField,
    cloud: &PointCloud,
    start: &JointVector,
    target_ee: Vec2,
    cfg: &PlannerConfig,
) -> Result<(Plan, BubbleGraph), PlanFailure> {
    let clock = Instant::now();
    let mut graph = build_cover(arm, field, cloud, start, target_ee, cfg).map_err(|mut f| {
        f.stats.planning_time = clock.elapsed().as_secs_f64();
        f
    })?;
    let mut plan = query_path(&graph).map_err(|f| PlanFailure { graph: Some(Box::new(graph.clone())), ..f })?;
    plan.waypoints = shortcut_in_cover(&plan.waypoints, &graph.bubbles);
    plan.stats.path_length = path_length(&plan.waypoints);
    plan.stats.planning_time = clock.elapsed().as_secs_f64();
    graph.stats = plan.stats.clone();
    Ok((plan, graph))
}
