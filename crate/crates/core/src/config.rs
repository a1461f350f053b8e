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
//! Scenario files (TOML).
//!
//! Sections: top-level `name` and `seed`, then `[arm]`, `[cdf]`, `[planner]`,
//! `[filter]`, `[episode]` and `[[obstacles]]`. Unknown keys are rejected.
//! Field names and units are listed in `docs/SCHEMA.md`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, JointVector, Vec2};
use crate::cdf::{build_cdf_field, read_field, CdfField, GridSpec};
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::planner::PlannerConfig;
use crate::sim::{Obstacle, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSection {
    /// meters
    pub link_lengths: Vec<f64>,
    /// meters
    #[serde(default)]
    pub base: [f64; 2],
    /// capsule radius δ, meters
    pub link_inflation: f64,
    /// u_max, rad/s
    pub joint_velocity_limit: f64,
    /// `[lo, hi]` per joint, radians
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_limits: Option<Vec<[f64; 2]>>,
}

/// Where the field comes from: a prebuilt file, or a build at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdfSection {
    /// Field file, relative to the scenario file. When set it must exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_cells")]
    pub q_cells: usize,
    #[serde(default = "default_cells")]
    pub p_cells: usize,
    #[serde(default = "default_refine")]
    pub search_refine: usize,
}

fn default_cells() -> usize {
    GridSpec::DEFAULT_CELLS
}

fn default_refine() -> usize {
    GridSpec::DEFAULT_REFINE
}

impl Default for CdfSection {
    fn default() -> Self {
        Self { path: None, q_cells: default_cells(), p_cells: default_cells(), search_refine: default_refine() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSection {
    /// radians
    pub q_start: Vec<f64>,
    /// meters
    pub target: [f64; 2],
    /// seconds
    pub duration: f64,
    /// seconds
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// 1/s
    #[serde(default = "default_gain")]
    pub tracking_gain: f64,
    /// radians
    #[serde(default = "default_wp_tol")]
    pub waypoint_tolerance: f64,
    /// radians
    #[serde(default = "default_replan")]
    pub replan_h_threshold: f64,
    /// meters
    #[serde(default = "default_success")]
    pub success_tolerance: f64,
    #[serde(default = "yes")]
    pub stop_on_goal: bool,
    #[serde(default = "yes")]
    pub filter_enabled: bool,
}

fn default_dt() -> f64 {
    0.02
}
fn default_gain() -> f64 {
    2.0
}
fn default_wp_tol() -> f64 {
    0.02
}
fn default_replan() -> f64 {
    0.02
}
fn default_success() -> f64 {
    0.08
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub arm: ArmSection,
    #[serde(default)]
    pub cdf: CdfSection,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub filter: FilterParams,
    pub episode: EpisodeSection,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl ScenarioFile {
    /// Parses and validates; errors carry the line and key from the parser.
    pub fn parse(text: &str) -> Result<Self> {
        let f: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        f.to_scenario()?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn arm(&self) -> Result<ArmModel> {
        let a = &self.arm;
        let arm = ArmModel::new(
            a.link_lengths.clone(),
            Vec2::new(a.base[0], a.base[1]),
            a.link_inflation,
            a.joint_velocity_limit,
        )
        .map_err(|e| Error::Config(format!("arm: {e}")))?;
        match &a.joint_limits {
            Some(l) => arm
                .with_joint_limits(l.iter().map(|p| (p[0], p[1])).collect())
                .map_err(|e| Error::Config(format!("arm.joint_limits: {e}"))),
            None => Ok(arm),
        }
    }

    pub fn grid_spec(&self, arm: &ArmModel) -> GridSpec {
        GridSpec {
            q_cells: self.cdf.q_cells,
            p_cells: self.cdf.p_cells,
            search_refine: self.cdf.search_refine,
            ..GridSpec::for_arm(arm)
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let arm = self.arm()?;
        let e = &self.episode;
        let q_start = JointVector::new(e.q_start.clone()).map_err(|err| Error::Config(format!("episode.q_start: {err}")))?;
        let sc = Scenario {
            name: self.name.clone(),
            arm,
            obstacles: self.obstacles.clone(),
            q_start,
            target_ee: Vec2::new(e.target[0], e.target[1]),
            planner: self.planner.clone(),
            filter: self.filter.clone(),
            filter_enabled: e.filter_enabled,
            duration: e.duration,
            dt: e.dt,
            tracking_gain: e.tracking_gain,
            waypoint_tolerance: e.waypoint_tolerance,
            replan_h_threshold: e.replan_h_threshold,
            success_tolerance: e.success_tolerance,
            stop_on_goal: e.stop_on_goal,
            seed: self.seed,
        };
        sc.validate()?;
        if self.cdf.q_cells < 2 || self.cdf.p_cells < 2 || self.cdf.search_refine < 1 {
            return Err(Error::Config("cdf: q_cells and p_cells must be ≥ 2, search_refine ≥ 1".into()));
        }
        Ok(sc)
    }

    /// Reads the field named by `[cdf].path` (relative to `base_dir`) or
    /// builds one from the grid settings.
    pub fn load_field(&self, base_dir: &Path) -> Result<Arc<CdfField>> {
        let arm = self.arm()?;
        let field = match &self.cdf.path {
            Some(p) => {
                let full = base_dir.join(p);
                let file = std::fs::File::open(&full)
                    .map_err(|e| Error::Config(format!("cdf.path {}: {e}", full.display())))?;
                let f: CdfField = read_field(std::io::BufReader::new(file))?;
                if f.dof() != arm.dof() {
                    return Err(Error::Config(format!(
                        "cdf.path {}: field has {} joints, arm has {}",
                        full.display(),
                        f.dof(),
                        arm.dof()
                    )));
                }
                f
            }
            None => build_cdf_field(&arm, &self.grid_spec(&arm))?,
        };
        Ok(Arc::new(field))
    }
}
