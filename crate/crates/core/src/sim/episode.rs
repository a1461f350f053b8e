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
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{estimate_velocities, nominal_controller, Frame, Obstacle, Tracker};
use crate::arm::{ArmModel, JointVector, Vec2};
use crate::cdf::{CdfField, PointCloud};
use crate::error::{Error, Result};
use crate::filter::{filter_command, ControlCommand, FilterParams, FilterStatus};
use crate::planner::{plan_bubbles, BubbleGraph, PlanStats, PlannerConfig};
use crate::trace::{ArgminPoint, CommandStatus, Event, ObstacleSnapshot, TraceRecord};

/// Ticks to wait after a replan before checking the plan again.
const REPLAN_COOLDOWN: u64 = 10;

/// Everything an episode needs except the distance field.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub arm: ArmModel,
    pub obstacles: Vec<Obstacle>,
    pub q_start: JointVector,
    /// meters
    pub target_ee: Vec2,
    /// `rng_seed` is replaced by values derived from `seed`.
    pub planner: PlannerConfig,
    /// `rng_seed` is replaced by values derived from `seed`.
    pub filter: FilterParams,
    pub filter_enabled: bool,
    /// seconds
    pub duration: f64,
    /// seconds
    pub dt: f64,
    /// k_p, 1/s
    pub tracking_gain: f64,
    /// radians
    pub waypoint_tolerance: f64,
    /// radians
    pub replan_h_threshold: f64,
    /// End-effector distance to the target counted as success, meters.
    pub success_tolerance: f64,
    pub stop_on_goal: bool,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.q_start.len() != self.arm.dof() {
            return bad(format!("q_start has {} joints, arm has {}", self.q_start.len(), self.arm.dof()));
        }
        if !self.target_ee.is_finite() {
            return bad("target must be finite".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("episode.dt must be > 0".into());
        }
        // zero duration runs the initial tick only
        if !(self.duration == 0.0 || self.duration >= self.dt) || !self.duration.is_finite() {
            return bad("episode.duration must be 0 or ≥ dt".into());
        }
        if !(self.tracking_gain > 0.0) || !(self.waypoint_tolerance > 0.0) || !(self.success_tolerance > 0.0) {
            return bad("tracking_gain, waypoint_tolerance and success_tolerance must be > 0".into());
        }
        if !self.replan_h_threshold.is_finite() {
            return bad("replan_h_threshold must be finite".into());
        }
        self.planner.validate().map_err(Error::Config)?;
        self.filter.validate()?;
        let mut ids: Vec<u32> = self.obstacles.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("obstacle ids must be unique".into());
        }
        self.obstacles.iter().try_for_each(Obstacle::validate)
    }

    /// Index of the last tick.
    pub fn last_tick(&self) -> u64 {
        (self.duration / self.dt + 1e-9).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// End effector came within `success_tolerance` of the target.
    pub success: bool,
    pub min_h: f64,
    /// meters; `None` without obstacles
    pub oracle_min_clearance: Option<f64>,
    /// Ticks with oracle clearance ≤ 0.
    pub collisions: u64,
    /// radians
    pub path_length_executed: f64,
    /// Σ‖u − u_nom‖²·dt
    pub correction_energy: f64,
    pub ticks: u64,
    pub infeasible_ticks: u64,
    pub replans: u64,
    /// Initial plan.
    pub planner: Option<PlanStats>,
    pub failure: Option<String>,
}

/// Commands accepted between ticks.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Relative joint move applied over one tick.
    Jog { joint: usize, delta_rad: f64 },
    SetTarget(Vec2),
    ToggleFilter(bool),
    DragObstacle { id: u32, pos: Vec2 },
    Pause,
    Resume,
    Reseed(u64),
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A live episode; drive it with [`Episode::step`].
pub struct Episode {
    sc: Scenario,
    field: Arc<CdfField>,
    tick: u64,
    q: JointVector,
    tracker: Option<Tracker>,
    graph: Option<BubbleGraph>,
    initial_plan: Option<PlanStats>,
    failure: Option<String>,
    prev_frame: Option<Frame>,
    pending_jog: Vec<Option<f64>>,
    force_replan: bool,
    cooldown: u64,
    paused: bool,
    unbounded: bool,
    finished: bool,
    goal_reached: bool,
    m: Metrics,
}

impl Episode {
    /// Validates the scenario and plans on the t = 0 snapshot. A failed
    /// initial plan leaves the arm without a plan; see [`Episode::failure`].
    pub fn new(scenario: Scenario, field: Arc<CdfField>) -> Result<Self> {
        scenario.validate()?;
        if field.dof() != scenario.arm.dof() {
            return Err(Error::DimensionMismatch { expected: scenario.arm.dof(), actual: field.dof() });
        }
        let n = scenario.arm.dof();
        let mut ep = Self {
            q: scenario.q_start.clone(),
            sc: scenario,
            field,
            tick: 0,
            tracker: None,
            graph: None,
            initial_plan: None,
            failure: None,
            prev_frame: None,
            pending_jog: vec![None; n],
            force_replan: false,
            cooldown: 0,
            paused: false,
            unbounded: false,
            finished: false,
            goal_reached: false,
            m: Metrics {
                success: false,
                min_h: f64::INFINITY,
                oracle_min_clearance: None,
                collisions: 0,
                path_length_executed: 0.0,
                correction_energy: 0.0,
                ticks: 0,
                infeasible_ticks: 0,
                replans: 0,
                planner: None,
                failure: None,
            },
        };
        let frame = Frame::capture(&ep.sc.obstacles, 0.0);
        let cloud = PointCloud::stationary(frame.points)?;
        match ep.plan(&cloud) {
            Ok(stats) => ep.initial_plan = Some(stats),
            Err(f) => {
                ep.initial_plan = Some(f.stats.clone());
                ep.failure = Some(f.reason.to_string());
            }
        }
        ep.m.planner = ep.initial_plan.clone();
        ep.m.failure = ep.failure.clone();
        Ok(ep)
    }

    fn plan(&mut self, cloud: &PointCloud) -> std::result::Result<PlanStats, crate::planner::PlanFailure> {
        let cfg = PlannerConfig { rng_seed: mix(self.sc.seed, 1 + self.m.replans), ..self.sc.planner.clone() };
        let (plan, graph) = plan_bubbles(&self.sc.arm, &self.field, cloud, &self.q, self.sc.target_ee, &cfg)?;
        self.tracker = Some(Tracker::new(plan.waypoints));
        self.graph = Some(graph);
        Ok(plan.stats)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn field(&self) -> &CdfField {
        &self.field
    }

    pub fn q(&self) -> &JointVector {
        &self.q
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.sc.dt
    }

    /// Reason the initial plan failed.
    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    pub fn graph(&self) -> Option<&BubbleGraph> {
        self.graph.as_ref()
    }

    pub fn waypoints(&self) -> &[JointVector] {
        self.tracker.as_ref().map_or(&[], |t| &t.waypoints)
    }

    pub fn filter_enabled(&self) -> bool {
        self.sc.filter_enabled
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    /// True once the last tick ran or the goal was reached with
    /// `stop_on_goal`.
    pub fn finished(&self) -> bool {
        self.finished
    }

    /// Ignore the duration and goal stop; used by live sessions.
    pub fn set_unbounded(&mut self) {
        self.unbounded = true;
        self.finished = false;
    }

    pub fn metrics(&self) -> Metrics {
        Metrics { success: self.goal_reached, ..self.m.clone() }
    }

    /// Applies a command at the next tick boundary.
    pub fn apply(&mut self, cmd: Command) -> Result<()> {
        match cmd {
            Command::Jog { joint, delta_rad } => {
                if joint >= self.pending_jog.len() || !delta_rad.is_finite() {
                    return Err(Error::InvalidInput(format!("jog: bad joint {joint} or delta")));
                }
                self.pending_jog[joint] = Some(delta_rad);
            }
            Command::SetTarget(p) => {
                if !p.is_finite() {
                    return Err(Error::InvalidInput("set_target: non-finite target".into()));
                }
                self.sc.target_ee = p;
                self.goal_reached = false;
                self.force_replan = true;
            }
            Command::ToggleFilter(on) => self.sc.filter_enabled = on,
            Command::DragObstacle { id, pos } => {
                if !pos.is_finite() {
                    return Err(Error::InvalidInput("drag_obstacle: non-finite position".into()));
                }
                let o = self
                    .sc
                    .obstacles
                    .iter_mut()
                    .find(|o| o.id == id)
                    .ok_or_else(|| Error::InvalidInput(format!("drag_obstacle: unknown id {id}")))?;
                o.drag_override = Some(pos);
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reseed(seed) => self.sc.seed = seed,
        }
        Ok(())
    }

    fn clearance(&self, cloud: &PointCloud) -> Option<f64> {
        cloud
            .points()
            .iter()
            .map(|&p| self.sc.arm.workspace_distance(&self.q, p).expect("dimension checked"))
            .reduce(f64::min)
    }

    /// Runs one tick and returns its record; `None` once finished.
    pub fn step(&mut self) -> Option<TraceRecord> {
        if self.finished {
            return None;
        }
        let dt = self.sc.dt;
        let t = self.time();
        let n = self.q.len();
        let mut events = Vec::new();

        let frame = Frame::capture(&self.sc.obstacles, t);
        let (cloud, mismatch) = estimate_velocities(self.prev_frame.as_ref(), &frame, dt).expect("dt validated");
        if mismatch {
            events.push(Event::VelocityReset);
        }

        self.maybe_replan(&cloud, &mut events);

        let jogging = self.pending_jog.iter().any(Option::is_some);
        let u_max = self.sc.arm.joint_velocity_limit();
        let u_nom: Vec<f64> = if jogging {
            events.push(Event::Jog);
            self.pending_jog.iter_mut().map(|j| j.take().map_or(0.0, |d| (d / dt).clamp(-u_max, u_max))).collect()
        } else if let Some(tr) = self.tracker.as_mut() {
            nominal_controller(&self.q, tr, self.sc.tracking_gain, self.sc.waypoint_tolerance, u_max)
        } else {
            vec![0.0; n]
        };

        let (u, h, dhdt, argmin, status, rows_kept) = if self.sc.filter_enabled {
            let params = self.sc.filter.with_seed(mix(self.sc.seed, self.tick.wrapping_add(1 << 32)));
            let (u, d) = filter_command(&self.field, &self.q, &cloud, &ControlCommand::new(u_nom.clone()), &params, u_max)
                .expect("inputs validated");
            if d.status == FilterStatus::Infeasible {
                events.push(Event::Infeasible);
                self.m.infeasible_ticks += 1;
            }
            (u.u, d.h, d.dhdt, d.argmin, d.status.into(), d.rows_kept)
        } else {
            let nc = self.field.ncsb(&self.q, &cloud).expect("dimension checked");
            let dhdt = if cloud.is_empty() {
                0.0
            } else {
                self.field.ncsb_time_derivative(&self.q, &cloud, self.sc.filter.dt_horizon).expect("horizon validated")
            };
            (u_nom.clone(), nc.h, dhdt, nc.argmin, CommandStatus::Bypassed, 0)
        };

        let clearance = self.clearance(&cloud);
        if let Some(c) = clearance {
            if c <= 0.0 {
                events.push(Event::Collision);
                self.m.collisions += 1;
            }
            self.m.oracle_min_clearance = Some(self.m.oracle_min_clearance.map_or(c, |m| m.min(c)));
        }
        self.m.min_h = self.m.min_h.min(h);

        let ee = self.sc.arm.end_effector(&self.q).expect("dimension checked");
        let at_goal = (ee - self.sc.target_ee).norm() <= self.sc.success_tolerance;
        if at_goal && !self.goal_reached {
            self.goal_reached = true;
            events.push(Event::GoalReached);
        }

        let record = TraceRecord {
            tick: self.tick,
            t,
            q: self.q.as_slice().to_vec(),
            ee: [ee.x, ee.y],
            u_nom,
            u,
            h,
            dhdt,
            status,
            rows_kept,
            argmin: argmin.map(|i| ArgminPoint {
                obstacle: frame.ids[i].obstacle,
                index: frame.ids[i].index,
                pos: [frame.points[i].x, frame.points[i].y],
            }),
            waypoint: self.tracker.as_ref().map(|tr| tr.index),
            clearance,
            obstacles: self.snapshot_obstacles(t),
            events,
        };

        let corr = record.correction_norm();
        self.m.correction_energy += corr * corr * dt;
        let step: Vec<f64> = record.u.iter().map(|v| v * dt).collect();
        self.m.path_length_executed += step.iter().map(|s| s * s).sum::<f64>().sqrt();
        self.q = self.q.offset(&step);
        self.m.ticks += 1;
        self.prev_frame = Some(frame);
        self.tick += 1;
        if !self.unbounded && (self.tick > self.sc.last_tick() || (self.goal_reached && self.sc.stop_on_goal)) {
            self.finished = true;
        }
        Some(record)
    }

    fn snapshot_obstacles(&self, t: f64) -> Vec<ObstacleSnapshot> {
        self.sc
            .obstacles
            .iter()
            .map(|o| {
                let c = o.origin(t);
                ObstacleSnapshot {
                    id: o.id,
                    pos: [c.x, c.y],
                    points: o.world_points(t).into_iter().map(|p| [p.x, p.y]).collect(),
                }
            })
            .collect()
    }

    fn maybe_replan(&mut self, cloud: &PointCloud, events: &mut Vec<Event>) {
        if self.cooldown > 0 {
            self.cooldown -= 1;
        }
        let due = self.force_replan
            || (self.cooldown == 0
                && self.tracker.as_ref().is_some_and(|tr| {
                    tr.remaining().iter().any(|w| {
                        self.field.ncsb(w, cloud).expect("dimension checked").h < self.sc.replan_h_threshold
                    })
                }));
        if !due {
            return;
        }
        self.force_replan = false;
        self.cooldown = REPLAN_COOLDOWN;
        let frozen = PointCloud::stationary(cloud.points().to_vec()).expect("finite cloud");
        self.m.replans += 1;
        match self.plan(&frozen) {
            Ok(_) => events.push(Event::Replan),
            Err(f) if f.reason == crate::planner::FailureReason::GoalUnreachable => {
                self.tracker = None;
                self.graph = None;
                events.push(Event::GoalUnreachable);
            }
            Err(_) => events.push(Event::ReplanFailed),
        }
    }
}

/// Plans on the t = 0 snapshot and runs to completion. A failed initial
/// plan aborts the episode with failure metrics and an empty trace.
pub fn run_episode(scenario: &Scenario, field: Arc<CdfField>) -> Result<(Vec<TraceRecord>, Metrics)> {
    let mut ep = Episode::new(scenario.clone(), field)?;
    if ep.failure().is_some() {
        let frame = Frame::capture(&scenario.obstacles, 0.0);
        let cloud = PointCloud::stationary(frame.points)?;
        let mut m = ep.metrics();
        m.min_h = ep.field().ncsb(&scenario.q_start, &cloud)?.h;
        m.oracle_min_clearance = ep.clearance(&cloud);
        if m.oracle_min_clearance.is_some_and(|c| c <= 0.0) {
            m.collisions = 1;
        }
        return Ok((Vec::new(), m));
    }
    let mut trace = Vec::with_capacity(scenario.last_tick() as usize + 1);
    while let Some(r) = ep.step() {
        trace.push(r);
    }
    Ok((trace, ep.metrics()))
}
