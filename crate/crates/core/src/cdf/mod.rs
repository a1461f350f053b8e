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
//! Configuration-space distance fields.
//!
//! `oracle` evaluates the exact distance to the contact set by brute force over a
//! search grid, `build` tabulates it on a regular `(q, p)` grid with an exact
//! periodic distance transform, and [`CdfField`] interpolates the table
//! multilinearly together with certified Lipschitz constants. The barrier
//! `h(q, P)` is the minimum of the field over a point cloud.

mod build;
mod io;
mod oracle;

pub use build::{build_cdf_field, GridSpec};
pub use io::{read_field, write_field, FIELD_MAGIC};
pub use oracle::{cdf_oracle, contact_tolerance, OracleValue};

use serde::{Deserialize, Serialize};

use crate::arm::{JointVector, Vec2, WorkPoint};
use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Scalar};

/// Obstacle points with per-point velocity estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud<T = f64> {
    points: Vec<WorkPoint<T>>,
    velocities: Vec<Vec2<T>>,
    timestamp: T,
}

impl<T: Scalar> PointCloud<T> {
    pub fn new(points: Vec<WorkPoint<T>>, velocities: Vec<Vec2<T>>, timestamp: T) -> Result<Self> {
        if points.len() != velocities.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), actual: velocities.len() });
        }
        if points.iter().chain(&velocities).any(|v| !v.is_finite()) || !timestamp.is_finite() {
            return Err(Error::InvalidInput("point cloud entries must be finite".into()));
        }
        Ok(Self { points, velocities, timestamp })
    }

    /// Cloud with zero velocities.
    pub fn stationary(points: Vec<WorkPoint<T>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![Vec2::default(); n], T::zero())
    }

    pub fn empty() -> Self {
        Self { points: Vec::new(), velocities: Vec::new(), timestamp: T::zero() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[WorkPoint<T>] {
        &self.points
    }

    pub fn velocities(&self) -> &[Vec2<T>] {
        &self.velocities
    }

    pub fn timestamp(&self) -> T {
        self.timestamp
    }

    /// Every point moved by `velocity · dt`.
    pub fn advected(&self, dt: T) -> Self {
        let points = self.points.iter().zip(&self.velocities).map(|(&p, &v)| p + v.scale(dt)).collect();
        Self { points, velocities: self.velocities.clone(), timestamp: self.timestamp + dt }
    }
}

/// Result of a field query.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval<T = f64> {
    pub value: T,
    /// ∂d̂/∂q, one entry per joint.
    pub grad_q: Vec<T>,
    /// The workspace point was outside the field's box and got clamped.
    pub clamped: bool,
}

/// Barrier value over a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Ncsb<T = f64> {
    pub h: T,
    /// Index of the minimizing point, `None` for an empty cloud.
    pub argmin: Option<usize>,
    pub grad_q: Vec<T>,
}

/// Tabulated distance field over `(q, p)` with multilinear interpolation.
///
/// Values are laid out row-major over `(q_0, …, q_{N-1}, p_x, p_y)` with `p_y`
/// varying fastest. Joint axes are periodic with `q_cells` nodes at
/// `-π + i·2π/q_cells`; workspace axes have `p_cells` nodes spanning the box
/// inclusively.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfField<T = f64> {
    dof: usize,
    q_cells: usize,
    p_cells: usize,
    p_min: Vec2<T>,
    p_max: Vec2<T>,
    values: Vec<f32>,
    lipschitz_q: T,
    lipschitz_p: T,
    d_max: T,
}

impl<T: Scalar> CdfField<T> {
    /// Wraps a value table, computing the Lipschitz certificates from it.
    pub fn from_values(
        dof: usize,
        q_cells: usize,
        p_cells: usize,
        p_min: Vec2<T>,
        p_max: Vec2<T>,
        values: Vec<f32>,
        d_max: T,
    ) -> Result<Self> {
        let mut field = Self::from_parts(dof, q_cells, p_cells, p_min, p_max, values, T::zero(), T::zero(), d_max)?;
        let (lq, lp) = build::grid_lipschitz(&field);
        field.lipschitz_q = lq;
        field.lipschitz_p = lp;
        Ok(field)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        dof: usize,
        q_cells: usize,
        p_cells: usize,
        p_min: Vec2<T>,
        p_max: Vec2<T>,
        values: Vec<f32>,
        lipschitz_q: T,
        lipschitz_p: T,
        d_max: T,
    ) -> Result<Self> {
        if dof == 0 || q_cells < 2 || p_cells < 2 {
            return Err(Error::InvalidInput("field needs N ≥ 1, C_q ≥ 2, C_p ≥ 2".into()));
        }
        if !(p_min.x < p_max.x && p_min.y < p_max.y) {
            return Err(Error::InvalidInput("workspace box must have positive extent".into()));
        }
        let expected = table_len(dof, q_cells, p_cells)
            .ok_or_else(|| Error::InvalidInput("field table size overflows".into()))?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: values.len() });
        }
        Ok(Self { dof, q_cells, p_cells, p_min, p_max, values, lipschitz_q, lipschitz_p, d_max })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn q_cells(&self) -> usize {
        self.q_cells
    }

    pub fn p_cells(&self) -> usize {
        self.p_cells
    }

    pub fn p_box(&self) -> (Vec2<T>, Vec2<T>) {
        (self.p_min, self.p_max)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn unreachable_sentinel(&self) -> T {
        self.d_max
    }

    pub fn q_spacing(&self) -> T {
        (T::PI() + T::PI()) / T::from_usize_lossy(self.q_cells)
    }

    pub fn p_spacing(&self) -> Vec2<T> {
        let n = T::from_usize_lossy(self.p_cells - 1);
        Vec2::new((self.p_max.x - self.p_min.x) / n, (self.p_max.y - self.p_min.y) / n)
    }

    /// Diagonal of one joint-space cell.
    pub fn q_cell_diagonal(&self) -> T {
        self.q_spacing() * T::from_usize_lossy(self.dof).sqrt()
    }

    pub fn p_cell_diagonal(&self) -> T {
        self.p_spacing().norm()
    }

    pub fn q_node(&self, i: usize) -> T {
        -T::PI() + T::from_usize_lossy(i) * self.q_spacing()
    }

    pub fn p_node(&self, ix: usize, iy: usize) -> Vec2<T> {
        let s = self.p_spacing();
        Vec2::new(
            self.p_min.x + T::from_usize_lossy(ix) * s.x,
            self.p_min.y + T::from_usize_lossy(iy) * s.y,
        )
    }

    /// Flat index of the node `(q_idx…, px, py)`.
    pub fn index(&self, q_idx: &[usize], px: usize, py: usize) -> usize {
        debug_assert_eq!(q_idx.len(), self.dof);
        let mut idx = 0;
        for &i in q_idx {
            idx = idx * self.q_cells + i;
        }
        (idx * self.p_cells + px) * self.p_cells + py
    }

    pub fn node_value(&self, q_idx: &[usize], px: usize, py: usize) -> T {
        T::lit(self.values[self.index(q_idx, px, py)] as f64)
    }

    /// Interpolated distance `d̂(q, p)` and its joint-space gradient.
    pub fn eval(&self, q: &JointVector<T>, p: WorkPoint<T>) -> Result<FieldEval<T>> {
        if q.len() != self.dof {
            return Err(Error::DimensionMismatch { expected: self.dof, actual: q.len() });
        }
        Ok(self.eval_unchecked(q.as_slice(), p))
    }

    pub(crate) fn eval_unchecked(&self, q: &[T], p: WorkPoint<T>) -> FieldEval<T> {
        let n = self.dof;
        let dims = n + 2;
        let mut lo = [0usize; MAX_DIMS];
        let mut hi = [0usize; MAX_DIMS];
        let mut frac = [T::zero(); MAX_DIMS];
        assert!(dims <= MAX_DIMS, "field supports up to {} joints", MAX_DIMS - 2);

        let wq = self.q_spacing();
        for i in 0..n {
            let u = (wrap_angle(q[i]) + T::PI()) / wq;
            let mut i0 = u.floor().to_usize().unwrap_or(0);
            let mut t = u - u.floor();
            if i0 >= self.q_cells {
                i0 %= self.q_cells;
                t = T::zero();
            }
            lo[i] = i0;
            hi[i] = (i0 + 1) % self.q_cells;
            frac[i] = t;
        }

        let mut clamped = false;
        let ws = self.p_spacing();
        let coords = [(p.x, self.p_min.x, self.p_max.x, ws.x), (p.y, self.p_min.y, self.p_max.y, ws.y)];
        for (k, &(v, min, max, w)) in coords.iter().enumerate() {
            let c = if v < min || v > max || v.is_nan() {
                clamped = true;
                v.max(min).min(max)
            } else {
                v
            };
            let u = (c - min) / w;
            let i0 = u.floor().to_usize().unwrap_or(0).min(self.p_cells - 2);
            let t = (u - T::from_usize_lossy(i0)).max(T::zero()).min(T::one());
            lo[n + k] = i0;
            hi[n + k] = i0 + 1;
            frac[n + k] = t;
        }

        let mut value = T::zero();
        let mut grad = vec![T::zero(); n];
        let mut idx = [0usize; MAX_DIMS];
        for corner in 0..(1usize << dims) {
            let mut weight = T::one();
            for d in 0..dims {
                let up = corner >> (dims - 1 - d) & 1 == 1;
                idx[d] = if up { hi[d] } else { lo[d] };
                weight = weight * if up { frac[d] } else { T::one() - frac[d] };
            }
            let v = self.node_value(&idx[..n], idx[n], idx[n + 1]);
            value = value + weight * v;
            for (i, g) in grad.iter_mut().enumerate() {
                // ∂weight/∂q_i: replace the i-th factor by ±1/wq
                let up = corner >> (dims - 1 - i) & 1 == 1;
                let mut w = if up { T::one() } else { -T::one() } / wq;
                for d in 0..dims {
                    if d != i {
                        let upd = corner >> (dims - 1 - d) & 1 == 1;
                        w = w * if upd { frac[d] } else { T::one() - frac[d] };
                    }
                }
                *g = *g + w * v;
            }
        }
        FieldEval { value, grad_q: grad, clamped }
    }

    /// `(L_q, L_p)` valid for the interpolated field under the Euclidean
    /// (torus) metric in each argument.
    pub fn certified_lipschitz(&self) -> (T, T) {
        (self.lipschitz_q, self.lipschitz_p)
    }

    /// Barrier `h(q, P) = min_p d̂(q, p)`; ties go to the lowest index.
    pub fn ncsb(&self, q: &JointVector<T>, cloud: &PointCloud<T>) -> Result<Ncsb<T>> {
        if q.len() != self.dof {
            return Err(Error::DimensionMismatch { expected: self.dof, actual: q.len() });
        }
        Ok(self.ncsb_offsets(q.as_slice(), cloud.points().iter().map(|&p| (p, T::zero()))))
    }

    /// Minimum over `(point, additive offset)` pairs; offsets model perturbed
    /// field parameters.
    pub(crate) fn ncsb_offsets(&self, q: &[T], points: impl Iterator<Item = (WorkPoint<T>, T)>) -> Ncsb<T> {
        let mut best: Option<(T, usize, Vec<T>)> = None;
        for (i, (p, off)) in points.enumerate() {
            let e = self.eval_unchecked(q, p);
            let v = e.value + off;
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, i, e.grad_q));
            }
        }
        match best {
            Some((h, i, g)) => Ncsb { h, argmin: Some(i), grad_q: g },
            None => Ncsb { h: self.d_max, argmin: None, grad_q: vec![T::zero(); self.dof] },
        }
    }

    pub fn ncsb_value(&self, q: &JointVector<T>, cloud: &PointCloud<T>) -> Result<(T, Option<usize>)> {
        self.ncsb(q, cloud).map(|n| (n.h, n.argmin))
    }

    pub fn ncsb_gradient(&self, q: &JointVector<T>, cloud: &PointCloud<T>) -> Result<Vec<T>> {
        self.ncsb(q, cloud).map(|n| n.grad_q)
    }

    /// Forward difference of `h` over the cloud advected by its velocities.
    pub fn ncsb_time_derivative(&self, q: &JointVector<T>, cloud: &PointCloud<T>, horizon: T) -> Result<T> {
        if !(horizon > T::zero()) {
            return Err(Error::InvalidInput("time-derivative horizon must be positive".into()));
        }
        let now = self.ncsb(q, cloud)?.h;
        let later = self.ncsb(q, &cloud.advected(horizon))?.h;
        Ok((later - now) / horizon)
    }
}

pub(crate) const MAX_DIMS: usize = 8;

pub(crate) fn table_len(dof: usize, q_cells: usize, p_cells: usize) -> Option<usize> {
    let mut n = p_cells.checked_mul(p_cells)?;
    for _ in 0..dof {
        n = n.checked_mul(q_cells)?;
    }
    Some(n)
}
