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
//! Sampling-based planning on the barrier field.
//!
//! The bubble planner grows configuration-space balls whose radius follows
//! from the certified Lipschitz constant, so nothing inside a ball is ever
//! checked again. The baseline is a roadmap planner that checks every node and
//! densely samples every edge. Both count barrier evaluations the same way.

mod baseline;
mod bubble;
mod path;

pub use baseline::{baseline_planner, edge_check_count};
pub use bubble::{build_cover, grow_bubble, plan_bubbles, Bubble, BubbleEdge, BubbleGraph};
pub use path::{path_length, query_path, segment_covered, shortcut_in_cover};

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmModel, JointVector, Vec2};
use crate::cdf::{CdfField, PointCloud};

/// Planner knobs shared by both planners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub sample_budget: usize,
    /// meters
    pub goal_ee_tolerance: f64,
    pub goal_bias: f64,
    /// radians
    pub min_radius: f64,
    /// μ, radians
    pub safety_margin: f64,
    /// Set by the caller, not read from files.
    #[serde(skip)]
    pub rng_seed: u64,
    /// Goal configurations requested from the goal sampler.
    pub goal_count: usize,
    /// IK-refined seeds tried by the goal sampler.
    pub goal_attempts: usize,
    /// Baseline edge sampling resolution, radians.
    pub edge_resolution: f64,
    /// Baseline connection radius, radians.
    pub connect_radius: f64,
    /// Baseline nearest-neighbor cap per new node.
    pub connect_neighbors: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            sample_budget: 2000,
            goal_ee_tolerance: 0.02,
            goal_bias: 0.1,
            min_radius: 0.02,
            safety_margin: 0.05,
            rng_seed: 0,
            goal_count: 4,
            goal_attempts: 64,
            edge_resolution: 0.05,
            connect_radius: 1.5,
            connect_neighbors: 8,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.sample_budget < 1 {
            return Err("sample_budget must be ≥ 1".into());
        }
        if !(self.safety_margin >= 0.0) {
            return Err("safety_margin must be ≥ 0".into());
        }
        if !(self.min_radius > 0.0) {
            return Err("min_radius must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err("goal_bias must lie in [0, 1]".into());
        }
        if !(self.goal_ee_tolerance > 0.0) || !(self.edge_resolution > 0.0) || !(self.connect_radius > 0.0) {
            return Err("tolerances and resolutions must be positive".into());
        }
        if self.goal_count < 1 || self.goal_attempts < 1 {
            return Err("goal_count and goal_attempts must be ≥ 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    /// Barrier evaluations, the collision-check currency.
    pub h_evaluations: u64,
    /// radians, wrapped metric
    pub path_length: f64,
    pub samples_drawn: u64,
    /// seconds; wall clock, excluded from determinism checks
    pub planning_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub waypoints: Vec<JointVector>,
    pub stats: PlanStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    GoalUnreachable,
    NoPath,
    StartUnsafe,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GoalUnreachable => "goal-unreachable",
            Self::NoPath => "no-path",
            Self::StartUnsafe => "start-unsafe",
        })
    }
}

#[derive(Debug, Clone, Error)]
#[error("{reason} after {} barrier evaluations", stats.h_evaluations)]
pub struct PlanFailure {
    pub reason: FailureReason,
    pub stats: PlanStats,
    /// Partial cover, for the bubble planner.
    pub graph: Option<Box<BubbleGraph>>,
}

/// Counts barrier evaluations against one frozen cloud snapshot.
pub struct Barrier<'a> {
    field: &'a CdfField,
    cloud: &'a PointCloud,
    count: Cell<u64>,
}

impl<'a> Barrier<'a> {
    pub fn new(field: &'a CdfField, cloud: &'a PointCloud) -> Self {
        Self { field, cloud, count: Cell::new(0) }
    }

    pub fn h(&self, q: &JointVector) -> f64 {
        self.count.set(self.count.get() + 1);
        self.field
            .ncsb_offsets(q.as_slice(), self.cloud.points().iter().map(|&p| (p, 0.0)))
            .h
    }

    pub fn evaluations(&self) -> u64 {
        self.count.get()
    }

    pub fn lipschitz_q(&self) -> f64 {
        self.field.certified_lipschitz().0
    }
}

const GOAL_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub(crate) fn uniform_config(arm: &ArmModel, rng: &mut ChaCha8Rng) -> JointVector {
    let angles = match arm.joint_limits() {
        Some(limits) => limits.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect(),
        None => (0..arm.dof()).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect(),
    };
    JointVector::new(angles).expect("finite sample")
}

/// Damped least-squares IK on the end-effector position.
pub(crate) fn refine_ik(arm: &ArmModel, seed: JointVector, target: Vec2, iterations: usize) -> JointVector {
    let damping = 0.05f64;
    let mut q = seed;
    for _ in 0..iterations {
        let ee = arm.end_effector(&q).expect("dimension checked");
        let e = target - ee;
        if e.norm() < 1e-10 {
            break;
        }
        let jac = arm.ee_jacobian(&q).expect("dimension checked");
        // (J Jᵀ + λ²I)⁻¹ e, then Jᵀ·that
        let (mut a, mut b, mut d) = (damping * damping, 0.0, damping * damping);
        for c in &jac {
            a += c[0] * c[0];
            b += c[0] * c[1];
            d += c[1] * c[1];
        }
        let det = a * d - b * b;
        let y0 = (d * e.x - b * e.y) / det;
        let y1 = (a * e.y - b * e.x) / det;
        let step: Vec<f64> = jac.iter().map(|c| c[0] * y0 + c[1] * y1).collect();
        q = q.offset(&step);
    }
    q
}

/// Configurations whose end effector lies within tolerance of `target` and
/// whose barrier exceeds the margin, with their barrier values.
pub(crate) fn goal_candidates(
    arm: &ArmModel,
    barrier: &Barrier<'_>,
    target: Vec2,
    cfg: &PlannerConfig,
) -> Vec<(JointVector, f64)> {
    let dist = (target - arm.base()).norm();
    if dist > arm.reach() + cfg.goal_ee_tolerance {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ GOAL_STREAM);
    let mut found: Vec<(JointVector, f64)> = Vec::new();
    let mut rejected: Vec<JointVector> = Vec::new();
    for _ in 0..cfg.goal_attempts {
        if found.len() >= cfg.goal_count {
            break;
        }
        let q = refine_ik(arm, uniform_config(arm, &mut rng), target, 100);
        let err = (arm.end_effector(&q).expect("dim") - target).norm();
        if err > cfg.goal_ee_tolerance {
            continue;
        }
        if let Some(limits) = arm.joint_limits() {
            if q.as_slice().iter().zip(limits).any(|(&a, &(lo, hi))| a < lo || a > hi) {
                continue;
            }
        }
        // IK seeds collapse onto a few solutions; skip repeats without spending a check
        let dup = |o: &JointVector| o.distance(&q) < cfg.min_radius;
        if found.iter().any(|(g, _)| dup(g)) || rejected.iter().any(dup) {
            continue;
        }
        let h = barrier.h(&q);
        if h > cfg.safety_margin {
            found.push((q, h));
        } else {
            rejected.push(q);
        }
    }
    found
}

/// Goal configurations for `target`; each accepted or rejected candidate costs
/// one barrier evaluation.
pub fn sample_goal_configs(
    arm: &ArmModel,
    field: &CdfField,
    cloud: &PointCloud,
    target: Vec2,
    cfg: &PlannerConfig,
) -> Vec<JointVector> {
    let barrier = Barrier::new(field, cloud);
    goal_candidates(arm, &barrier, target, cfg).into_iter().map(|(q, _)| q).collect()
}

/// Sample stream shared by both planners: uniform over the joint space, or a
/// perturbed goal configuration with probability `goal_bias`.
pub(crate) struct Sampler {
    rng: ChaCha8Rng,
    goal_bias: f64,
}

impl Sampler {
    pub(crate) fn new(seed: u64, goal_bias: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), goal_bias }
    }

    pub(crate) fn next(&mut self, arm: &ArmModel, goals: &[JointVector]) -> JointVector {
        // draw the same number of variates on every branch so streams stay aligned
        let u: f64 = self.rng.random();
        let uniform = uniform_config(arm, &mut self.rng);
        let pick = self.rng.random_range(0..goals.len().max(1));
        let jitter: Vec<f64> = (0..arm.dof()).map(|_| self.rng.random_range(-0.25..0.25)).collect();
        if u < self.goal_bias && !goals.is_empty() {
            goals[pick].offset(&jitter)
        } else {
            uniform
        }
    }
}
