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
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use cdfplan::arm::{ArmModel, JointVector, Vec2};
use cdfplan::cdf::{build_cdf_field, CdfField, GridSpec};
use cdfplan::config::ScenarioFile;
use cdfplan::sim::Scenario;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn stock_file(name: &str) -> ScenarioFile {
    ScenarioFile::load(&scenarios_dir().join(format!("{name}.toml"))).unwrap()
}

pub fn stock(name: &str) -> Scenario {
    stock_file(name).to_scenario().unwrap()
}

pub const SUITE: [&str; 5] = ["suite/pillar", "suite/two", "suite/gate", "suite/ring", "suite/quad"];

pub fn arm() -> ArmModel {
    ArmModel::new(vec![1.0, 1.0], Vec2::new(0.0, 0.0), 0.05, 1.0).unwrap()
}

/// Stock-resolution field for the 2-link arm, built once per test binary.
pub fn field() -> Arc<CdfField> {
    static FIELD: OnceLock<Arc<CdfField>> = OnceLock::new();
    FIELD
        .get_or_init(|| {
            let arm = arm();
            Arc::new(build_cdf_field(&arm, &GridSpec::for_arm(&arm)).unwrap())
        })
        .clone()
}

pub fn random_q(rng: &mut ChaCha8Rng) -> JointVector {
    JointVector::new(vec![rng.random_range(-PI..PI), rng.random_range(-PI..PI)]).unwrap()
}

/// Point within `max` meters of the body surface at `q`.
pub fn point_near_arm(rng: &mut ChaCha8Rng, arm: &ArmModel, q: &JointVector, max: f64) -> Vec2 {
    let (segments, _) = arm.forward_kinematics(q).unwrap();
    let s = &segments[rng.random_range(0..segments.len())];
    let t = rng.random_range(0.0..1.0);
    let a = rng.random_range(-PI..PI);
    let r = arm.link_inflation() + rng.random_range(-0.05..max);
    s.start + (s.end - s.start).scale(t) + Vec2::new(r * a.cos(), r * a.sin())
}
