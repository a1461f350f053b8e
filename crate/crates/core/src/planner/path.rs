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
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::bubble::{Bubble, BubbleGraph};
use super::{FailureReason, Plan, PlanFailure, PlanStats};
use crate::arm::JointVector;

/// Sum of wrapped segment lengths.
pub fn path_length(waypoints: &[JointVector]) -> f64 {
    waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, ties by lower index
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over bubble centers; waypoints are the start, the overlap witness of
/// every traversed edge, and the reached goal center.
pub fn query_path(graph: &BubbleGraph) -> Result<Plan, PlanFailure> {
    let n = graph.bubbles.len();
    let no_path = || PlanFailure {
        reason: FailureReason::NoPath,
        stats: PlanStats { path_length: 0.0, ..graph.stats.clone() },
        graph: None,
    };
    if n == 0 || graph.start_index >= n {
        return Err(no_path());
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, e) in graph.edges.iter().enumerate() {
        adj[e.a].push((e.b, k));
        adj[e.b].push((e.a, k));
    }
    let center = |i: usize| &graph.bubbles[i].center;
    let heuristic = |i: usize| {
        graph
            .goal_indices
            .iter()
            .map(|&g| center(i).distance(center(g)))
            .fold(f64::INFINITY, f64::min)
    };

    let mut cost = vec![f64::INFINITY; n];
    let mut came: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    cost[graph.start_index] = 0.0;
    heap.push(Open { f: heuristic(graph.start_index), node: graph.start_index });
    let mut reached = None;
    while let Some(Open { node, f }) = heap.pop() {
        if graph.goal_indices.contains(&node) {
            reached = Some(node);
            break;
        }
        if f > cost[node] + heuristic(node) + 1e-12 {
            continue;
        }
        for &(next, edge) in &adj[node] {
            let c = cost[node] + center(node).distance(center(next));
            if c < cost[next] {
                cost[next] = c;
                came.insert(next, (node, edge));
                heap.push(Open { f: c + heuristic(next), node: next });
            }
        }
    }
    let goal = reached.ok_or_else(no_path)?;

    let mut edges = Vec::new();
    let mut at = goal;
    while let Some(&(prev, edge)) = came.get(&at) {
        edges.push(edge);
        at = prev;
    }
    edges.reverse();
    let mut waypoints = vec![graph.bubbles[graph.start_index].center.clone()];
    waypoints.extend(edges.iter().map(|&k| graph.edges[k].witness.clone()));
    if goal != graph.start_index {
        waypoints.push(center(goal).clone());
    }
    let stats = PlanStats { path_length: path_length(&waypoints), ..graph.stats.clone() };
    Ok(Plan { waypoints, stats })
}

/// Whether the wrapped geodesic `a → b` lies inside the union of `bubbles`.
/// Exact interval arithmetic on each lifted ball; radii are assumed ≤ π/2.
pub fn segment_covered(a: &JointVector, b: &JointVector, bubbles: &[Bubble]) -> bool {
    let n = a.len();
    let d = a.wrapped_delta(b);
    let dd: f64 = d.iter().map(|v| v * v).sum();
    let two_pi = 2.0 * std::f64::consts::PI;
    let lifts = 3usize.pow(n as u32);
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut shifted = vec![0.0; n];
    for bubble in bubbles {
        let r = bubble.radius * (1.0 - 1e-9);
        let rel = a.wrapped_delta(&bubble.center);
        for lift in 0..lifts {
            let mut rem = lift;
            for (s, &c) in shifted.iter_mut().zip(&rel) {
                *s = c + two_pi * ((rem % 3) as f64 - 1.0);
                rem /= 3;
            }
            let cc: f64 = shifted.iter().map(|v| v * v).sum();
            if dd == 0.0 {
                if cc <= r * r {
                    return true;
                }
                continue;
            }
            let dc: f64 = shifted.iter().zip(&d).map(|(c, v)| c * v).sum();
            let disc = dc * dc - dd * (cc - r * r);
            if disc < 0.0 {
                continue;
            }
            let s = disc.sqrt();
            let (t0, t1) = ((dc - s) / dd, (dc + s) / dd);
            if t1 >= 0.0 && t0 <= 1.0 {
                intervals.push((t0.max(0.0), t1.min(1.0)));
            }
        }
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut reach = 0.0f64;
    for (lo, hi) in intervals {
        if lo > reach {
            return false;
        }
        reach = reach.max(hi);
        if reach >= 1.0 {
            return true;
        }
    }
    false
}

/// Greedy farthest-visible shortcutting restricted to the bubble union; costs
/// no barrier evaluations.
pub fn shortcut_in_cover(waypoints: &[JointVector], bubbles: &[Bubble]) -> Vec<JointVector> {
    if waypoints.len() <= 2 {
        return waypoints.to_vec();
    }
    let last = waypoints.len() - 1;
    let mut out = vec![waypoints[0].clone()];
    let mut i = 0;
    while i < last {
        let mut j = last;
        while j > i + 1 && !segment_covered(&waypoints[i], &waypoints[j], bubbles) {
            j -= 1;
        }
        out.push(waypoints[j].clone());
        i = j;
    }
    out
}
