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
//! Deterministic episode engine.
//!
//! Each tick advances the obstacles, rebuilds the cloud, estimates point
//! velocities, computes the nominal command (plan tracker or a pending jog),
//! filters it and integrates `q ← wrap(q + u·dt)`.

mod bench;
mod episode;

pub use bench::{bench_planners, median, BenchRow, BenchRun, BenchTable, PlannerKind};
pub use episode::{run_episode, Command, Episode, Metrics, Scenario};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::arm::{wrapped_delta, JointVector, Vec2};
use crate::cdf::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static {
        position: [f64; 2],
    },
    /// Piecewise-linear through `(t, position)` knots; holds the end knots
    /// outside the scripted interval.
    Waypoints {
        knots: Vec<(f64, [f64; 2])>,
    },
    /// Counter-clockwise for positive `angular_rate` (rad/s).
    Orbit {
        center: [f64; 2],
        radius: f64,
        angular_rate: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Motion {
    pub fn position(&self, t: f64) -> Vec2 {
        match self {
            Motion::Static { position } => v2(*position),
            Motion::Waypoints { knots } => {
                let first = knots[0];
                if t <= first.0 {
                    return v2(first.1);
                }
                for w in knots.windows(2) {
                    let (t0, p0) = w[0];
                    let (t1, p1) = w[1];
                    if t <= t1 {
                        let s = (t - t0) / (t1 - t0);
                        return Vec2::new(p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1]));
                    }
                }
                v2(knots[knots.len() - 1].1)
            }
            Motion::Orbit { center, radius, angular_rate, phase } => {
                let a = phase + angular_rate * t;
                Vec2::new(center[0] + radius * a.cos(), center[1] + radius * a.sin())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |p: &[f64; 2]| p.iter().all(|v| v.is_finite());
        let ok = match self {
            Motion::Static { position } => finite(position),
            Motion::Waypoints { knots } => {
                !knots.is_empty()
                    && knots.iter().all(|(t, p)| t.is_finite() && finite(p))
                    && knots.windows(2).all(|w| w[1].0 > w[0].0)
            }
            Motion::Orbit { center, radius, angular_rate, phase } => {
                finite(center) && radius.is_finite() && *radius >= 0.0 && angular_rate.is_finite() && phase.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("obstacle motion: knots must be finite with strictly increasing times".into()))
        }
    }
}

/// Ring of `count` points at `radius` around the obstacle origin, plus the
/// origin itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub id: u32,
    /// Offsets from the obstacle origin, meters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc: Option<Disc>,
    pub motion: Motion,
    /// Externally commanded origin; replaces the motion while set.
    #[serde(skip)]
    pub drag_override: Option<Vec2>,
}

impl Obstacle {
    pub fn new(id: u32, points: Vec<[f64; 2]>, motion: Motion) -> Self {
        Self { id, points, disc: None, motion, drag_override: None }
    }

    pub fn disc(id: u32, radius: f64, count: usize, motion: Motion) -> Self {
        Self { id, points: Vec::new(), disc: Some(Disc { radius, count }), motion, drag_override: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.motion.validate()?;
        if self.points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Config(format!("obstacle {}: non-finite point", self.id)));
        }
        if let Some(d) = &self.disc {
            if !(d.radius.is_finite() && d.radius >= 0.0) {
                return Err(Error::Config(format!("obstacle {}: disc radius must be ≥ 0", self.id)));
            }
        }
        if self.local_points().is_empty() {
            return Err(Error::Config(format!("obstacle {}: no points", self.id)));
        }
        Ok(())
    }

    /// Explicit points followed by the disc points.
    pub fn local_points(&self) -> Vec<Vec2> {
        let mut out: Vec<Vec2> = self.points.iter().map(|&p| v2(p)).collect();
        if let Some(d) = &self.disc {
            out.push(Vec2::new(0.0, 0.0));
            for k in 0..d.count {
                let a = k as f64 * std::f64::consts::TAU / d.count as f64;
                out.push(Vec2::new(d.radius * a.cos(), d.radius * a.sin()));
            }
        }
        out
    }

    pub fn origin(&self, t: f64) -> Vec2 {
        self.drag_override.unwrap_or_else(|| self.motion.position(t))
    }

    pub fn world_points(&self, t: f64) -> Vec<Vec2> {
        let o = self.origin(t);
        self.local_points().into_iter().map(|p| p + o).collect()
    }
}

/// Identity of a cloud point across frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointId {
    pub obstacle: u32,
    pub index: u32,
}

/// Obstacle point positions at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub ids: Vec<PointId>,
    pub points: Vec<Vec2>,
}

impl Frame {
    pub fn capture(obstacles: &[Obstacle], t: f64) -> Self {
        let mut ids = Vec::new();
        let mut points = Vec::new();
        for o in obstacles {
            for (i, p) in o.world_points(t).into_iter().enumerate() {
                ids.push(PointId { obstacle: o.id, index: i as u32 });
                points.push(p);
            }
        }
        Self { t, ids, points }
    }
}

fn v2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

/// `(cur − prev)/dt` per matched point. Unmatched points, and every point on
/// the first frame, get zero velocity; the flag is set when a point of
/// `cur` had no match in a given `prev`.
pub fn estimate_velocities(prev: Option<&Frame>, cur: &Frame, dt: f64) -> Result<(PointCloud, bool)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let mut vel = vec![Vec2::default(); cur.points.len()];
    let mut mismatch = false;
    if let Some(prev) = prev {
        if prev.ids == cur.ids {
            for (v, (c, p)) in vel.iter_mut().zip(cur.points.iter().zip(&prev.points)) {
                *v = (*c - *p).scale(1.0 / dt);
            }
        } else {
            let lookup: HashMap<PointId, Vec2> = prev.ids.iter().copied().zip(prev.points.iter().copied()).collect();
            for (v, (id, c)) in vel.iter_mut().zip(cur.ids.iter().zip(&cur.points)) {
                match lookup.get(id) {
                    Some(p) => *v = (*c - *p).scale(1.0 / dt),
                    None => mismatch = true,
                }
            }
        }
    }
    Ok((PointCloud::new(cur.points.clone(), vel, cur.t)?, mismatch))
}

/// Waypoint follower state.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub waypoints: Vec<JointVector>,
    pub index: usize,
}

impl Tracker {
    pub fn new(waypoints: Vec<JointVector>) -> Self {
        Self { waypoints, index: 0 }
    }

    pub fn remaining(&self) -> &[JointVector] {
        &self.waypoints[self.index.min(self.waypoints.len())..]
    }
}

/// Proportional tracking of the current waypoint, clamped per joint to
/// `u_max`. The waypoint index advances while `q` is within `tolerance` of
/// it; at the final waypoint the command is zero.
pub fn nominal_controller(q: &JointVector, tracker: &mut Tracker, k_p: f64, tolerance: f64, u_max: f64) -> Vec<f64> {
    let n = q.len();
    if tracker.waypoints.is_empty() {
        return vec![0.0; n];
    }
    let last = tracker.waypoints.len() - 1;
    while tracker.index < last && q.distance(&tracker.waypoints[tracker.index]) <= tolerance {
        tracker.index += 1;
    }
    let wp = &tracker.waypoints[tracker.index];
    if tracker.index == last && q.distance(wp) <= tolerance {
        return vec![0.0; n];
    }
    wrapped_delta(q.as_slice(), wp.as_slice()).into_iter().map(|d| (k_p * d).clamp(-u_max, u_max)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jv(a: &[f64]) -> JointVector {
        JointVector::new(a.to_vec()).unwrap()
    }

    #[test]
    fn scripted_positions_hit_knots() {
        let m = Motion::Waypoints { knots: vec![(0.0, [0.0, 0.0]), (1.0, [1.0, 0.5]), (3.0, [1.0, -0.5])] };
        for (t, p) in [(0.0, [0.0, 0.0]), (1.0, [1.0, 0.5]), (3.0, [1.0, -0.5])] {
            let q = m.position(t);
            assert!((q.x - p[0]).abs() <= 1e-12 && (q.y - p[1]).abs() <= 1e-12);
        }
        assert_eq!(m.position(-1.0), Vec2::new(0.0, 0.0));
        assert_eq!(m.position(9.0), Vec2::new(1.0, -0.5));
        let mid = m.position(2.0);
        assert!((mid.y - 0.0).abs() < 1e-12);
        let bad = Motion::Waypoints { knots: vec![(0.0, [0.0, 0.0]), (0.0, [1.0, 0.0])] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn static_and_linear_velocities() {
        let s = vec![Obstacle::disc(1, 0.1, 4, Motion::Static { position: [1.0, 1.0] })];
        let f0 = Frame::capture(&s, 0.0);
        let f1 = Frame::capture(&s, 0.02);
        let (c, flag) = estimate_velocities(Some(&f0), &f1, 0.02).unwrap();
        assert!(!flag);
        assert!(c.velocities().iter().all(|v| v.norm() == 0.0));

        let m = vec![Obstacle::new(
            3,
            vec![[0.0, 0.0], [0.1, 0.0]],
            Motion::Waypoints { knots: vec![(0.0, [0.0, 1.0]), (10.0, [2.0, 1.0])] },
        )];
        let (first, _) = estimate_velocities(None, &Frame::capture(&m, 0.0), 0.02).unwrap();
        assert!(first.velocities().iter().all(|v| v.norm() == 0.0));
        let (c, _) =
            estimate_velocities(Some(&Frame::capture(&m, 1.0)), &Frame::capture(&m, 1.02), 0.02).unwrap();
        for v in c.velocities() {
            assert!((v.x - 0.2).abs() < 1e-9 && v.y.abs() < 1e-12);
        }
    }

    #[test]
    fn orbit_speed_matches_parametric_circle() {
        let (r, w) = (0.4, 0.75);
        let o = vec![Obstacle::new(0, vec![[0.0, 0.0]], Motion::Orbit { center: [1.0, 0.0], radius: r, angular_rate: w, phase: 0.3 })];
        let dt = 1e-4;
        let (c, _) = estimate_velocities(Some(&Frame::capture(&o, 2.0)), &Frame::capture(&o, 2.0 + dt), dt).unwrap();
        // chord over arc: 2 sin(wΔt/2)/Δt
        let expect = 2.0 * r * (w * dt / 2.0).sin() / dt;
        assert!((c.velocities()[0].norm() - expect).abs() < 1e-9);
        assert!((expect - r * w).abs() < 1e-6);
    }

    #[test]
    fn unmatched_points_get_zero_velocity() {
        let a = vec![Obstacle::new(1, vec![[0.0, 0.0]], Motion::Static { position: [0.0, 0.0] })];
        let mut b = a.clone();
        b.push(Obstacle::new(2, vec![[0.0, 0.0]], Motion::Static { position: [1.0, 0.0] }));
        b[0].drag_override = Some(Vec2::new(0.02, 0.0));
        let (c, flag) = estimate_velocities(Some(&Frame::capture(&a, 0.0)), &Frame::capture(&b, 0.1), 0.1).unwrap();
        assert!(flag);
        assert!((c.velocities()[0].x - 0.2).abs() < 1e-12);
        assert_eq!(c.velocities()[1], Vec2::new(0.0, 0.0));
    }

    #[test]
    fn tracker_law() {
        let mut t = Tracker::new(vec![jv(&[0.0, 0.0]), jv(&[0.5, 0.0]), jv(&[1.0, 0.0])]);
        let u = nominal_controller(&jv(&[0.0, 0.0]), &mut t, 1.0, 0.01, 1.0);
        assert_eq!(t.index, 1);
        assert!((u[0] - 0.5).abs() < 1e-12 && u[1].abs() < 1e-12);
        // far from the current waypoint: no skipping ahead
        nominal_controller(&jv(&[1.0, 0.0]), &mut t, 1.0, 0.01, 1.0);
        assert_eq!(t.index, 1);
        let u = nominal_controller(&jv(&[0.5, 0.0]), &mut t, 1.0, 0.01, 1.0);
        assert_eq!(t.index, 2);
        assert!((u[0] - 0.5).abs() < 1e-12);
        let u = nominal_controller(&jv(&[1.0, 0.005]), &mut t, 1.0, 0.01, 1.0);
        assert_eq!(u, vec![0.0, 0.0]);
        // saturation per joint
        let mut t = Tracker::new(vec![jv(&[3.0, -0.2])]);
        let u = nominal_controller(&jv(&[0.0, 0.0]), &mut t, 2.0, 0.01, 1.0);
        assert_eq!(u[0], 1.0);
        assert!((u[1] + 0.4).abs() < 1e-12);
        // wrapped error crosses ±π
        let mut t = Tracker::new(vec![jv(&[-3.0, 0.0])]);
        let u = nominal_controller(&jv(&[3.0, 0.0]), &mut t, 0.1, 0.01, 1.0);
        assert!(u[0] > 0.0);
    }
}
