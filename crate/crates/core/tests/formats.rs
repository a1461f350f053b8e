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
mod common;

use cdfplan::arm::Vec2;
use cdfplan::cdf::{read_field, write_field, CdfField};
use cdfplan::config::ScenarioFile;
use cdfplan::sim::{Motion, Obstacle};
use cdfplan::trace::{read_trace, write_trace, ArgminPoint, CommandStatus, Event, ObstacleSnapshot, TraceRecord};
use cdfplan::wire::{decode, encode, StateMsg, WireMessage};
use common::*;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

fn motion() -> impl Strategy<Value = Motion> {
    prop_oneof![
        (finite(), finite()).prop_map(|(x, y)| Motion::Static { position: [x, y] }),
        prop::collection::vec((0.0..10.0f64, finite(), finite()), 1..4).prop_map(|ks| {
            let mut t = 0.0;
            Motion::Waypoints {
                knots: ks
                    .into_iter()
                    .map(|(dt, x, y)| {
                        t += dt + 0.125;
                        (t, [x, y])
                    })
                    .collect(),
            }
        }),
        (finite(), finite(), 0.01..2.0f64, finite(), finite())
            .prop_map(|(x, y, radius, angular_rate, phase)| Motion::Orbit { center: [x, y], radius, angular_rate, phase }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scenario_files_round_trip(
        seed in any::<u64>(),
        links in prop::collection::vec(0.1..2.0f64, 1..4),
        inflation in 0.0..0.2f64,
        alpha in 0.0..10.0f64,
        eps in 0.0..0.99f64,
        r_w in 0.0..0.1f64,
        k in 1usize..64,
        target in (finite(), finite()),
        dt in 0.001..0.1f64,
        duration in prop_oneof![Just(0.0), 0.0..100.0f64],
        stop in any::<bool>(),
        motions in prop::collection::vec(motion(), 0..3),
    ) {
        let mut f = stock_file("crossing");
        f.seed = seed;
        f.arm.link_lengths = links.clone();
        f.arm.link_inflation = inflation;
        f.filter.alpha = alpha;
        f.filter.epsilon = eps;
        f.filter.wasserstein_radius = r_w;
        f.filter.num_samples = k;
        f.episode.q_start = vec![0.25; links.len()];
        f.episode.target = [target.0, target.1];
        f.episode.dt = dt;
        f.episode.duration = if duration == 0.0 { 0.0 } else { dt + duration };
        f.episode.stop_on_goal = stop;
        f.obstacles = motions
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let mut o = Obstacle::disc(i as u32, 0.1, 6, m.clone());
                if i % 2 == 1 {
                    o.disc = None;
                    o.points = vec![[0.0, 0.0], [0.5, -0.25]];
                }
                o.motion = m;
                o
            })
            .collect();
        let text = f.to_toml().unwrap();
        let back = ScenarioFile::parse(&text).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn trace_records_round_trip(
        t in finite(), q in prop::collection::vec(finite(), 2), u in prop::collection::vec(finite(), 2),
        h in finite(), clearance in prop::option::of(finite()), argmin in any::<bool>(),
    ) {
        let r = TraceRecord {
            tick: 7,
            t,
            q: q.clone(),
            ee: [q[0], q[1]],
            u_nom: u.clone(),
            u: vec![u[1], u[0]],
            h,
            dhdt: -h,
            status: CommandStatus::Active,
            rows_kept: 15,
            argmin: argmin.then_some(ArgminPoint { obstacle: 1, index: 3, pos: [h, t] }),
            waypoint: Some(2),
            clearance,
            obstacles: vec![ObstacleSnapshot { id: 1, pos: [t, h], points: vec![[u[0], u[1]]] }],
            events: vec![Event::Replan, Event::Infeasible],
        };
        let mut out = Vec::new();
        write_trace(&mut out, std::slice::from_ref(&r)).unwrap();
        let back = read_trace(out.as_slice()).unwrap();
        prop_assert_eq!(&back[0], &r);

        let msg = WireMessage::State(StateMsg::from_record(&r));
        prop_assert_eq!(decode(&encode(&msg).unwrap()).unwrap(), msg);
    }

    #[test]
    fn client_messages_round_trip(x in finite(), y in finite(), joint in 0usize..8, id in any::<u32>(), seed in any::<u64>(), on in any::<bool>()) {
        for m in [
            WireMessage::Jog { joint, delta_rad: x },
            WireMessage::SetTarget { x, y },
            WireMessage::ToggleFilter { on },
            WireMessage::DragObstacle { id, x, y },
            WireMessage::Pause {},
            WireMessage::Resume {},
            WireMessage::Reseed { seed },
            WireMessage::error(format!("{x}")),
        ] {
            let text = encode(&m).unwrap();
            prop_assert!(text.contains(r#""version":"1""#));
            prop_assert_eq!(decode(&text).unwrap(), m);
        }
    }

    #[test]
    fn field_files_round_trip(values in prop::collection::vec(0.0..4.0f32, 4 * 4 * 2 * 2), lo in -3.0..-1.0f64, hi in 1.0..3.0f64) {
        let f: CdfField = CdfField::from_values(2, 4, 2, Vec2::new(lo, lo), Vec2::new(hi, hi), values, 4.0).unwrap();
        let mut out = Vec::new();
        write_field(&f, &mut out).unwrap();
        prop_assert_eq!(&out[..4], b"CDF1");
        let back: CdfField = read_field(out.as_slice()).unwrap();
        prop_assert_eq!(back.values(), f.values());
        prop_assert_eq!(back.certified_lipschitz(), f.certified_lipschitz());
        prop_assert_eq!(back.p_box(), f.p_box());
    }
}

#[test]
fn stock_scenarios_load() {
    let mut names: Vec<String> = SUITE.iter().map(|s| s.to_string()).collect();
    names.extend(["empty", "static_clutter", "crossing"].map(String::from));
    for n in names {
        let f = stock_file(&n);
        let sc = f.to_scenario().unwrap();
        sc.validate().unwrap();
        assert_eq!(ScenarioFile::parse(&f.to_toml().unwrap()).unwrap(), f);
    }
}
