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
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Frame, Scenario};
use crate::cdf::{CdfField, PointCloud};
use crate::error::Result;
use crate::planner::{baseline_planner, plan_bubbles, PlannerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Bubble,
    Baseline,
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bubble => "bubble",
            Self::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub planner: PlannerKind,
    /// Median barrier evaluations over successful seeds; NaN if none.
    pub median_checks: f64,
    /// radians; NaN if no seed succeeded
    pub median_path_len: f64,
    pub success_rate: f64,
    pub failures: usize,
}

/// Per-seed outcome for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub scenario: String,
    pub seed: u64,
    pub bubble: Option<(u64, f64)>,
    pub baseline: Option<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    /// Two rows per scenario, bubble first.
    pub rows: Vec<BenchRow>,
    pub runs: Vec<BenchRun>,
}

impl BenchTable {
    /// `(baseline/bubble evaluations, bubble/baseline path length)` for
    /// seeds where both planners succeeded.
    pub fn paired_ratios(&self) -> Vec<(f64, f64)> {
        self.runs
            .iter()
            .filter_map(|r| match (r.bubble, r.baseline) {
                (Some((cb, lb)), Some((ca, la))) => Some((ca as f64 / cb as f64, lb / la)),
                _ => None,
            })
            .collect()
    }

    /// Medians of the paired ratios over the whole suite.
    pub fn median_ratios(&self) -> (f64, f64) {
        let pairs = self.paired_ratios();
        let checks: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let lens: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        (median(&checks), median(&lens))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,planner,median_checks,median_path_len,success_rate\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.scenario, r.planner, r.median_checks, r.median_path_len, r.success_rate);
        }
        s
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Runs both planners from `q_start` on each scenario's t = 0 snapshot with
/// planner seeds `seed, seed + 1, …`.
pub fn bench_planners(suite: &[(Scenario, Arc<CdfField>)], seeds: usize) -> Result<BenchTable> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (sc, field) in suite {
        sc.validate()?;
        let cloud = PointCloud::stationary(Frame::capture(&sc.obstacles, 0.0).points)?;
        let mut these: Vec<BenchRun> = (0..seeds as u64)
            .into_par_iter()
            .map(|k| {
                let seed = sc.seed.wrapping_add(k);
                let cfg = PlannerConfig { rng_seed: seed, ..sc.planner.clone() };
                let bubble = plan_bubbles(&sc.arm, field, &cloud, &sc.q_start, sc.target_ee, &cfg)
                    .ok()
                    .map(|(p, _)| (p.stats.h_evaluations, p.stats.path_length));
                let baseline = baseline_planner(&sc.arm, field, &cloud, &sc.q_start, sc.target_ee, &cfg)
                    .ok()
                    .map(|p| (p.stats.h_evaluations, p.stats.path_length));
                BenchRun { scenario: sc.name.clone(), seed, bubble, baseline }
            })
            .collect();
        for kind in [PlannerKind::Bubble, PlannerKind::Baseline] {
            let ok: Vec<(u64, f64)> = these
                .iter()
                .filter_map(|r| if kind == PlannerKind::Bubble { r.bubble } else { r.baseline })
                .collect();
            let checks: Vec<f64> = ok.iter().map(|o| o.0 as f64).collect();
            let lens: Vec<f64> = ok.iter().map(|o| o.1).collect();
            rows.push(BenchRow {
                scenario: sc.name.clone(),
                planner: kind,
                median_checks: median(&checks),
                median_path_len: median(&lens),
                success_rate: if seeds == 0 { 0.0 } else { ok.len() as f64 / seeds as f64 },
                failures: seeds - ok.len(),
            });
        }
        runs.append(&mut these);
    }
    Ok(BenchTable { rows, runs })
}
