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
//! Serve-mode wire protocol, version "1".
//!
//! Every message is a JSON object with `"version": "1"` and a `"type"` tag.
//! Servers send `state` once per tick and `error` in reply to bad input;
//! clients send the remaining types.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::arm::Vec2;
use crate::sim::{Command, Episode};
use crate::trace::{CommandStatus, Event, ObstacleSnapshot, TraceRecord};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleMsg {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanMsg {
    pub waypoints: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMsg {
    pub tick: u64,
    pub t: f64,
    pub q: Vec<f64>,
    pub ee: [f64; 2],
    pub u_nom: Vec<f64>,
    pub u: Vec<f64>,
    pub h: f64,
    pub dhdt: f64,
    pub status: CommandStatus,
    pub obstacles: Vec<ObstacleSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bubbles: Option<Vec<BubbleMsg>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanMsg>,
    pub events: Vec<Event>,
    pub paused: bool,
    pub filter_enabled: bool,
    /// Unknown when replaying a trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 2]>,
}

impl StateMsg {
    /// State for a recorded tick without planner overlays.
    pub fn from_record(r: &TraceRecord) -> Self {
        Self {
            tick: r.tick,
            t: r.t,
            q: r.q.clone(),
            ee: r.ee,
            u_nom: r.u_nom.clone(),
            u: r.u.clone(),
            h: r.h,
            dhdt: r.dhdt,
            status: r.status,
            obstacles: r.obstacles.clone(),
            bubbles: None,
            plan: None,
            events: r.events.clone(),
            paused: false,
            filter_enabled: r.status != CommandStatus::Bypassed,
            target: None,
        }
    }

    /// Live state: the latest record plus the episode's plan and cover.
    pub fn from_episode(r: &TraceRecord, ep: &Episode) -> Self {
        let target = ep.scenario().target_ee;
        Self {
            bubbles: ep.graph().map(|g| {
                g.bubbles.iter().map(|b| BubbleMsg { center: b.center.as_slice().to_vec(), radius: b.radius }).collect()
            }),
            plan: Some(PlanMsg { waypoints: ep.waypoints().iter().map(|w| w.as_slice().to_vec()).collect() }),
            paused: ep.paused(),
            filter_enabled: ep.filter_enabled(),
            target: Some([target.x, target.y]),
            ..Self::from_record(r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireMessage {
    State(StateMsg),
    Error { message: String },
    Jog { joint: usize, delta_rad: f64 },
    SetTarget { x: f64, y: f64 },
    ToggleFilter { on: bool },
    DragObstacle { id: u32, x: f64, y: f64 },
    Pause {},
    Resume {},
    Reseed { seed: u64 },
}

impl WireMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error { message: message.into() }
    }

    /// Episode command for client messages; `None` for server messages.
    pub fn to_command(&self) -> Option<Command> {
        Some(match *self {
            Self::Jog { joint, delta_rad } => Command::Jog { joint, delta_rad },
            Self::SetTarget { x, y } => Command::SetTarget(Vec2::new(x, y)),
            Self::ToggleFilter { on } => Command::ToggleFilter(on),
            Self::DragObstacle { id, x, y } => Command::DragObstacle { id, pos: Vec2::new(x, y) },
            Self::Pause {} => Command::Pause,
            Self::Resume {} => Command::Resume,
            Self::Reseed { seed } => Command::Reseed(seed),
            Self::State(_) | Self::Error { .. } => return None,
        })
    }
}

fn has_null_number(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::Array(a) => a.iter().any(has_null_number),
        Value::Object(o) => o.values().any(has_null_number),
        _ => false,
    }
}

fn all_finite(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        Value::Array(a) => a.iter().all(all_finite),
        Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

/// JSON text with the version field. Non-finite numbers are refused.
pub fn encode(msg: &WireMessage) -> Result<String, String> {
    let mut v = serde_json::to_value(msg).map_err(|e| e.to_string())?;
    // serde_json writes NaN and infinities as null
    if has_null_number(&v) {
        return Err("message contains non-finite numbers".into());
    }
    let obj = v.as_object_mut().ok_or("message is not an object")?;
    obj.insert("version".into(), Value::String(PROTOCOL_VERSION.into()));
    Ok(v.to_string())
}

/// Parses and validates one message.
pub fn decode(text: &str) -> Result<WireMessage, String> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = v.as_object_mut().ok_or("message must be a JSON object")?;
    match obj.remove("version") {
        Some(Value::String(s)) if s == PROTOCOL_VERSION => {}
        Some(other) => return Err(format!("unsupported protocol version {other}")),
        None => return Err("missing protocol version".into()),
    }
    if !all_finite(&v) {
        return Err("numbers must be finite".into());
    }
    serde_json::from_value(v).map_err(|e| format!("invalid message: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_round_trip() {
        let msgs = [
            WireMessage::Jog { joint: 0, delta_rad: 0.05 },
            WireMessage::SetTarget { x: 1.0, y: -0.5 },
            WireMessage::ToggleFilter { on: false },
            WireMessage::DragObstacle { id: 3, x: 0.1, y: 0.2 },
            WireMessage::Pause {},
            WireMessage::Resume {},
            WireMessage::Reseed { seed: 42 },
            WireMessage::error("nope"),
        ];
        for m in msgs {
            let text = encode(&m).unwrap();
            assert!(text.contains("\"version\":\"1\""), "{text}");
            assert_eq!(decode(&text).unwrap(), m);
        }
        assert_eq!(
            decode(r#"{"version":"1","type":"jog","joint":0,"delta_rad":0.05}"#).unwrap(),
            WireMessage::Jog { joint: 0, delta_rad: 0.05 }
        );
        assert_eq!(decode(r#"{"type":"pause","version":"1"}"#).unwrap(), WireMessage::Pause {});
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "not json",
            "[1,2]",
            r#"{"type":"pause"}"#,
            r#"{"version":"2","type":"pause"}"#,
            r#"{"version":1,"type":"pause"}"#,
            r#"{"version":"1","type":"warp"}"#,
            r#"{"version":"1","type":"jog","joint":0}"#,
            r#"{"version":"1","type":"jog","joint":-1,"delta_rad":0.1}"#,
            r#"{"version":"1","type":"jog","joint":0,"delta_rad":0.1,"extra":true}"#,
            r#"{"version":"1","type":"set_target","x":1e999,"y":0}"#,
        ] {
            assert!(decode(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn state_round_trip_and_commands() {
        let s = StateMsg {
            tick: 3,
            t: 0.06,
            q: vec![0.1, 0.2],
            ee: [1.5, 0.7],
            u_nom: vec![1.0, 0.0],
            u: vec![0.5, 0.1],
            h: 0.3,
            dhdt: -0.1,
            status: CommandStatus::Active,
            obstacles: vec![ObstacleSnapshot { id: 1, pos: [1.0, 1.0], points: vec![[1.0, 1.0]] }],
            bubbles: Some(vec![BubbleMsg { center: vec![0.0, 0.0], radius: 0.2 }]),
            plan: None,
            events: vec![Event::Collision],
            paused: false,
            filter_enabled: true,
            target: Some([-1.2, 1.0]),
        };
        let m = WireMessage::State(s.clone());
        let text = encode(&m).unwrap();
        assert!(!text.contains("\"plan\""));
        assert_eq!(decode(&text).unwrap(), m);
        assert!(m.to_command().is_none());
        assert_eq!(WireMessage::Pause {}.to_command(), Some(Command::Pause));

        let mut nan = s.clone();
        nan.h = f64::NAN;
        assert!(encode(&WireMessage::State(nan)).is_err());
        let mut replayed = s;
        replayed.target = None;
        let m = WireMessage::State(replayed);
        let text = encode(&m).unwrap();
        assert!(!text.contains("target"));
        assert_eq!(decode(&text).unwrap(), m);
    }
}
