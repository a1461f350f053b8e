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
//! Sampled distributionally-robust CBF safety filter.
//!
//! The chance constraint `P(∂h/∂q·u + ∂h/∂t + α·h ≥ 0) ≥ 1 − ε` over
//! perturbed clouds and field parameters becomes `K` sampled half-spaces
//! `a_k·u ≥ b_k`. The `⌊εK⌋` most restrictive ones are discarded, the rest are
//! tightened by `α·L_p·r_w` for the Wasserstein ball, and the command closest
//! to the nominal one is found by a small QP.

mod qp;

pub use qp::{kkt_residual, solve_filter_qp, QpSolution, FEASIBILITY_TOL};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::arm::{JointVector, Vec2};
use crate::cdf::{CdfField, PointCloud};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Filter parameters. The defaults are repository choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams<T = f64> {
    /// α, 1/s
    pub alpha: T,
    /// ε in [0, 1)
    pub epsilon: T,
    /// r_w, meters
    pub wasserstein_radius: T,
    /// K
    pub num_samples: usize,
    /// σ_p, meters
    pub point_noise_sigma: T,
    /// σ_θ, radians
    pub theta_noise_sigma: T,
    /// δt for ∂h/∂t, seconds
    pub dt_horizon: T,
    /// c: the barrier condition is imposed on `h − c`, radians
    pub barrier_offset: T,
    /// Set by the caller, not read from files.
    #[serde(skip)]
    pub rng_seed: u64,
}

impl<T: Scalar> Default for FilterParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(2.0),
            epsilon: T::lit(0.05),
            wasserstein_radius: T::lit(0.01),
            num_samples: 16,
            point_noise_sigma: T::lit(0.01),
            theta_noise_sigma: T::lit(0.01),
            dt_horizon: T::lit(0.05),
            barrier_offset: T::zero(),
            rng_seed: 0,
        }
    }
}

impl<T: Scalar> FilterParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.alpha >= T::zero()) {
            return bad("alpha must be ≥ 0");
        }
        if !(self.epsilon >= T::zero() && self.epsilon < T::one()) {
            return bad("epsilon must lie in [0, 1)");
        }
        if !(self.wasserstein_radius >= T::zero()) {
            return bad("wasserstein_radius must be ≥ 0");
        }
        if self.num_samples < 1 {
            return bad("num_samples must be ≥ 1");
        }
        if !(self.point_noise_sigma >= T::zero() && self.theta_noise_sigma >= T::zero()) {
            return bad("noise sigmas must be ≥ 0");
        }
        if !(self.dt_horizon > T::zero()) {
            return bad("dt_horizon must be > 0");
        }
        if !(self.barrier_offset >= T::zero() && self.barrier_offset.is_finite()) {
            return bad("barrier_offset must be ≥ 0");
        }
        Ok(())
    }

    /// Same parameters with the sampler reseeded; used per control tick.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { rng_seed: seed, ..self.clone() }
    }
}

/// Half-space `a·u ≥ b` in joint-velocity space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow<T = f64> {
    pub a: Vec<T>,
    pub b: T,
}

impl<T: Scalar> ConstraintRow<T> {
    pub fn slack(&self, u: &[T]) -> T {
        dot(&self.a, u) - self.b
    }
}

/// Joint velocities, rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlCommand<T = f64> {
    pub u: Vec<T>,
}

impl<T: Scalar> ControlCommand<T> {
    pub fn new(u: Vec<T>) -> Self {
        Self { u }
    }

    pub fn zeros(n: usize) -> Self {
        Self { u: vec![T::zero(); n] }
    }

    pub fn within(&self, u_max: T) -> bool {
        self.u.iter().all(|v| v.abs() <= u_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    /// The nominal command was already safe.
    Inactive,
    Active,
    /// No command in the box satisfies the kept rows; the arm is stopped.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterDiagnostics<T = f64> {
    pub h: T,
    pub dhdt: T,
    pub argmin: Option<usize>,
    pub rows_kept: usize,
    pub status: FilterStatus,
    pub correction_norm: T,
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `K` sampled constraint rows at `q`.
///
/// Each sample jitters every point by isotropic noise `σ_p` and every per-point
/// field value by `σ_θ`, then linearizes the barrier condition. `∂h/∂t` uses
/// the unperturbed velocity estimates.
pub fn sample_constraints<T: Scalar>(
    field: &CdfField<T>,
    q: &JointVector<T>,
    cloud: &PointCloud<T>,
    params: &FilterParams<T>,
) -> Result<Vec<ConstraintRow<T>>> {
    params.validate()?;
    if q.len() != field.dof() {
        return Err(Error::DimensionMismatch { expected: field.dof(), actual: q.len() });
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let (_, lp) = field.certified_lipschitz();
    let tighten = params.wasserstein_radius * lp * params.alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut perturbed: Vec<(Vec2<T>, T)> = Vec::with_capacity(cloud.len());
    let mut rows = Vec::with_capacity(params.num_samples);
    for _ in 0..params.num_samples {
        perturbed.clear();
        for &p in cloud.points() {
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            let nt: f64 = StandardNormal.sample(&mut rng);
            let jitter = Vec2::new(T::lit(nx), T::lit(ny)).scale(params.point_noise_sigma);
            perturbed.push((p + jitter, T::lit(nt) * params.theta_noise_sigma));
        }
        let now = field.ncsb_offsets(q.as_slice(), perturbed.iter().copied());
        let later = field.ncsb_offsets(
            q.as_slice(),
            perturbed
                .iter()
                .zip(cloud.velocities())
                .map(|(&(p, off), &v)| (p + v.scale(params.dt_horizon), off)),
        );
        let dhdt = (later.h - now.h) / params.dt_horizon;
        rows.push(ConstraintRow {
            a: now.grad_q,
            b: -(dhdt + params.alpha * (now.h - params.barrier_offset)) + tighten,
        });
    }
    Ok(rows)
}

/// Drops the `⌊ε·K⌋` rows with the smallest slack at `u_nom`; ties go by row
/// index. Kept rows stay in their original order.
pub fn discard_scenarios<T: Scalar>(rows: &[ConstraintRow<T>], u_nom: &[T], epsilon: T) -> Vec<ConstraintRow<T>> {
    let drop = (epsilon * T::from_usize_lossy(rows.len())).floor().to_usize().unwrap_or(0).min(rows.len());
    let mut order: Vec<(T, usize)> = rows.iter().enumerate().map(|(i, r)| (r.slack(u_nom), i)).collect();
    order.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));
    let mut keep = vec![true; rows.len()];
    for &(_, i) in order.iter().take(drop) {
        keep[i] = false;
    }
    rows.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r.clone()).collect()
}

/// Sample, discard, solve.
pub fn filter_command<T: Scalar>(
    field: &CdfField<T>,
    q: &JointVector<T>,
    cloud: &PointCloud<T>,
    u_nom: &ControlCommand<T>,
    params: &FilterParams<T>,
    u_max: T,
) -> Result<(ControlCommand<T>, FilterDiagnostics<T>)> {
    if u_nom.u.len() != field.dof() {
        return Err(Error::DimensionMismatch { expected: field.dof(), actual: u_nom.u.len() });
    }
    if u_nom.u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("nominal command must be finite".into()));
    }
    let nominal = field.ncsb(q, cloud)?;
    let dhdt = if cloud.is_empty() { T::zero() } else { field.ncsb_time_derivative(q, cloud, params.dt_horizon)? };
    let rows = sample_constraints(field, q, cloud, params)?;
    let kept = discard_scenarios(&rows, &u_nom.u, params.epsilon);
    let sol = solve_filter_qp(&u_nom.u, &kept, u_max);
    let correction_norm = u_nom.u.iter().zip(&sol.u).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
    let diag = FilterDiagnostics {
        h: nominal.h,
        dhdt,
        argmin: nominal.argmin,
        rows_kept: kept.len(),
        status: sol.status,
        correction_norm,
    };
    Ok((ControlCommand::new(sol.u), diag))
}
