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
//! Planar serial arm: configurations, forward kinematics and capsule clearance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Scalar};

/// A point or free vector in the workspace plane (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Scalar> std::ops::Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> std::ops::Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

/// A workspace point `p` queried against the arm body.
pub type WorkPoint<T = f64> = Vec2<T>;

/// Joint configuration `q`, stored wrapped to `[-π, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector<T = f64> {
    angles: Vec<T>,
}

impl<T: Scalar> JointVector<T> {
    /// Builds a configuration, wrapping every angle. Non-finite angles are rejected.
    pub fn new(angles: Vec<T>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidInput("joint vector must have at least one angle".into()));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("joint angles must be finite".into()));
        }
        Ok(Self { angles: angles.into_iter().map(wrap_angle).collect() })
    }

    pub fn zeros(n: usize) -> Self {
        Self { angles: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.angles
    }

    /// Per-joint wrapped difference `wrap(other - self)`.
    pub fn wrapped_delta(&self, other: &Self) -> Vec<T> {
        wrapped_delta(&self.angles, &other.angles)
    }

    /// Torus metric: Euclidean norm of per-joint wrapped differences.
    pub fn distance(&self, other: &Self) -> T {
        wrapped_distance(&self.angles, &other.angles)
    }

    /// Point at fraction `t` along the wrapped geodesic from `self` to `other`.
    pub fn geodesic_lerp(&self, other: &Self, t: T) -> Self {
        let angles = self
            .angles
            .iter()
            .zip(self.wrapped_delta(other))
            .map(|(&a, d)| wrap_angle(a + d * t))
            .collect();
        Self { angles }
    }

    /// `wrap(self + delta)`.
    pub fn offset(&self, delta: &[T]) -> Self {
        debug_assert_eq!(delta.len(), self.len());
        Self { angles: self.angles.iter().zip(delta).map(|(&a, &d)| wrap_angle(a + d)).collect() }
    }
}

impl<T> std::ops::Index<usize> for JointVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.angles[i]
    }
}

pub fn wrapped_delta<T: Scalar>(from: &[T], to: &[T]) -> Vec<T> {
    from.iter().zip(to).map(|(&a, &b)| wrap_angle(b - a)).collect()
}

pub fn wrapped_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = wrap_angle(y - x);
            d * d
        })
        .sum::<T>()
        .sqrt()
}

/// One link of the body, a capsule around the segment `start → end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSegment<T = f64> {
    pub start: Vec2<T>,
    pub end: Vec2<T>,
    pub inflation: T,
}

impl<T: Scalar> LinkSegment<T> {
    /// Unsigned distance from `p` to the segment axis.
    pub fn axis_distance(&self, p: Vec2<T>) -> T {
        point_segment_distance(p, self.start, self.end)
    }
}

pub(crate) fn point_segment_distance<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> T {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > T::zero() {
        ((p - a).dot(ab) / len2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    (p - (a + ab.scale(t))).norm()
}

/// Planar N-link revolute arm with capsule links.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel<T = f64> {
    link_lengths: Vec<T>,
    base: Vec2<T>,
    link_inflation: T,
    joint_velocity_limit: T,
    joint_limits: Option<Vec<(T, T)>>,
}

impl<T: Scalar> ArmModel<T> {
    pub fn new(link_lengths: Vec<T>, base: Vec2<T>, link_inflation: T, joint_velocity_limit: T) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(Error::InvalidInput("arm needs at least one link".into()));
        }
        if link_lengths.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
            return Err(Error::InvalidInput("link lengths must be positive and finite".into()));
        }
        if !base.is_finite() {
            return Err(Error::InvalidInput("base position must be finite".into()));
        }
        if !(link_inflation >= T::zero() && link_inflation.is_finite()) {
            return Err(Error::InvalidInput("link inflation must be nonnegative".into()));
        }
        if !(joint_velocity_limit > T::zero() && joint_velocity_limit.is_finite()) {
            return Err(Error::InvalidInput("joint velocity limit must be positive".into()));
        }
        Ok(Self { link_lengths, base, link_inflation, joint_velocity_limit, joint_limits: None })
    }

    /// Restricts sampling to `[lo, hi]` per joint. Limits only clip sampling ranges.
    pub fn with_joint_limits(mut self, limits: Vec<(T, T)>) -> Result<Self> {
        if limits.len() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), actual: limits.len() });
        }
        if limits.iter().any(|&(lo, hi)| !(lo < hi && lo >= -T::PI() && hi <= T::PI())) {
            return Err(Error::InvalidInput("joint limits must satisfy -π ≤ lo < hi ≤ π".into()));
        }
        self.joint_limits = Some(limits);
        Ok(self)
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn link_lengths(&self) -> &[T] {
        &self.link_lengths
    }

    pub fn base(&self) -> Vec2<T> {
        self.base
    }

    pub fn link_inflation(&self) -> T {
        self.link_inflation
    }

    pub fn joint_velocity_limit(&self) -> T {
        self.joint_velocity_limit
    }

    pub fn joint_limits(&self) -> Option<&[(T, T)]> {
        self.joint_limits.as_deref()
    }

    pub fn reach(&self) -> T {
        self.link_lengths.iter().copied().sum()
    }

    fn check_dim(&self, q: &JointVector<T>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), actual: q.len() });
        }
        Ok(())
    }

    /// Link capsules chained from the base, and the end-effector position.
    pub fn forward_kinematics(&self, q: &JointVector<T>) -> Result<(Vec<LinkSegment<T>>, Vec2<T>)> {
        self.check_dim(q)?;
        let mut segments = Vec::with_capacity(self.dof());
        let ee = self.chain(q.as_slice(), |s| segments.push(s));
        Ok((segments, ee))
    }

    pub fn end_effector(&self, q: &JointVector<T>) -> Result<Vec2<T>> {
        self.check_dim(q)?;
        Ok(self.chain(q.as_slice(), |_| {}))
    }

    fn chain(&self, angles: &[T], mut visit: impl FnMut(LinkSegment<T>)) -> Vec2<T> {
        let mut heading = T::zero();
        let mut at = self.base;
        for (&len, &a) in self.link_lengths.iter().zip(angles) {
            heading = heading + a;
            let end = at + Vec2::new(heading.cos(), heading.sin()).scale(len);
            visit(LinkSegment { start: at, end, inflation: self.link_inflation });
            at = end;
        }
        at
    }

    /// Signed clearance between `p` and the inflated body; `≤ 0` means inside.
    pub fn workspace_distance(&self, q: &JointVector<T>, p: WorkPoint<T>) -> Result<T> {
        self.check_dim(q)?;
        Ok(self.clearance_unchecked(q.as_slice(), p))
    }

    /// Clearance for raw angle slices of the right length (hot path of the oracle).
    pub(crate) fn clearance_unchecked(&self, angles: &[T], p: WorkPoint<T>) -> T {
        let mut best = T::infinity();
        self.chain(angles, |s| best = best.min(s.axis_distance(p)));
        best - self.link_inflation
    }

    /// Lipschitz constant of the clearance in `q` under the torus metric:
    /// sum over joints of the farthest distal point's lever arm.
    pub fn workspace_lipschitz_bound(&self) -> T {
        let mut distal = T::zero();
        let mut total = T::zero();
        for &l in self.link_lengths.iter().rev() {
            distal = distal + l;
            total = total + distal;
        }
        total
    }

    /// End-effector position Jacobian, row-major `2 × N`.
    pub fn ee_jacobian(&self, q: &JointVector<T>) -> Result<Vec<[T; 2]>> {
        let (segs, ee) = self.forward_kinematics(q)?;
        // column i: z × (ee − joint_i)
        Ok(segs
            .iter()
            .map(|s| {
                let r = ee - s.start;
                [-r.y, r.x]
            })
            .collect())
    }
}
