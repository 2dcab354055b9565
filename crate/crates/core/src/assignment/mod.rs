//! Multi-class user equilibrium on a labeled multimodal graph.
//!
//! Only taxi road segments are congestible; every other edge has a
//! flow-independent time. Generalized costs are in time units: `t + c / vot`.

mod frank_wolfe;
pub mod oracle;
mod shortest_path;

use serde::{Deserialize, Serialize};

use crate::demand::{UserClass, ValueOfTime};
use crate::network::{EdgeKind, EdgeLabel, MultimodalGraph};

pub use frank_wolfe::{solve_ue, solve_ue_warm, FwIteration, UeParams, UeSolution};
pub use shortest_path::{shortest_path_assignment, AonResult};

/// Per-edge flows, total and split by traveler class (travelers/hour).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub total: Vec<f64>,
    pub by_class: [Vec<f64>; 3],
}

impl FlowState {
    pub fn zeros(num_edges: usize) -> Self {
        Self {
            total: vec![0.0; num_edges],
            by_class: [vec![0.0; num_edges], vec![0.0; num_edges], vec![0.0; num_edges]],
        }
    }

    pub fn num_edges(&self) -> usize {
        self.total.len()
    }

    pub fn class(&self, class: UserClass) -> &[f64] {
        &self.by_class[class.index()]
    }

    /// Adds `volume` of `class` to every edge of `path`.
    pub fn add_path(&mut self, class: UserClass, path: &[usize], volume: f64) {
        for &e in path {
            self.by_class[class.index()][e] += volume;
            self.total[e] += volume;
        }
    }

    /// `self <- (1 - alpha) * self + alpha * target`, class by class.
    pub fn blend(&mut self, target: &FlowState, alpha: f64) {
        for (mine, theirs) in self.by_class.iter_mut().zip(&target.by_class) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += alpha * (b - *a);
            }
        }
        for (e, t) in self.total.iter_mut().enumerate() {
            *t = self.by_class[0][e] + self.by_class[1][e] + self.by_class[2][e];
        }
    }

    /// Total flow summed over `edges`.
    pub fn sum_over(&self, edges: &[usize]) -> f64 {
        edges.iter().map(|&e| self.total[e]).sum()
    }
}

/// Convergence summary of a user-equilibrium solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    /// Total system travel cost (generalized hours x travelers/hour).
    pub tstc: f64,
    /// Cost of sending every request along its current shortest path.
    pub sptc: f64,
    pub rel_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn ratio_pow(ratio: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && (0.0..=16.0).contains(&exponent) {
        ratio.powi(exponent as i32)
    } else {
        ratio.powf(exponent)
    }
}

/// Travel time (hours) of an edge carrying `flow` travelers/hour.
#[inline]
pub fn edge_travel_time(label: &EdgeLabel, kind: EdgeKind, flow: f64) -> f64 {
    if kind.is_taxi_service() {
        label.fixed_time
            + label.freeflow_time * (1.0 + label.bpr_a * ratio_pow(flow / label.capacity, label.bpr_b))
    } else {
        label.fixed_time + label.freeflow_time
    }
}

/// Closed-form integral of the edge time function from 0 to `flow`.
#[inline]
pub fn edge_time_integral(label: &EdgeLabel, kind: EdgeKind, flow: f64) -> f64 {
    if flow == 0.0 {
        return 0.0;
    }
    if kind.is_taxi_service() {
        let b1 = label.bpr_b + 1.0;
        (label.fixed_time + label.freeflow_time) * flow
            + label.freeflow_time * label.bpr_a * label.capacity * ratio_pow(flow / label.capacity, b1) / b1
    } else {
        (label.fixed_time + label.freeflow_time) * flow
    }
}

/// Price converted to time units and added to the travel time.
#[inline]
pub fn generalized_cost(label: &EdgeLabel, time: f64, vot: f64) -> f64 {
    time + label.price / vot
}

/// Current travel time of every edge.
pub fn edge_times(graph: &MultimodalGraph, flows: &FlowState) -> Vec<f64> {
    graph
        .edges()
        .iter()
        .zip(&flows.total)
        .map(|(e, &y)| edge_travel_time(&e.label, e.kind, y))
        .collect()
}

/// Beckmann potential: integrated edge times plus class-weighted prices.
pub fn beckmann_objective(graph: &MultimodalGraph, flows: &FlowState, vot: &ValueOfTime) -> f64 {
    let vot = vot.as_array();
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut v = edge_time_integral(&e.label, e.kind, flows.total[i]);
            if e.label.price != 0.0 {
                for (n, y) in flows.by_class.iter().enumerate() {
                    v += y[i] / vot[n] * e.label.price;
                }
            }
            v
        })
        .sum()
}

/// Total system travel cost in generalized time units.
pub fn total_system_cost(graph: &MultimodalGraph, flows: &FlowState, times: &[f64], vot: &ValueOfTime) -> f64 {
    let vot = vot.as_array();
    let mut total = 0.0;
    for (i, e) in graph.edges().iter().enumerate() {
        for (n, y) in flows.by_class.iter().enumerate() {
            let y = y[i];
            if y != 0.0 {
                total += y * generalized_cost(&e.label, times[i], vot[n]);
            }
        }
    }
    total
}

/// Exact line search on the Beckmann potential along `current -> target`.
///
/// Bisects on the directional derivative and returns the lower end of the
/// final bracket, so the objective never increases.
pub fn find_alpha(
    graph: &MultimodalGraph,
    current: &FlowState,
    target: &FlowState,
    vot: &ValueOfTime,
    tolerance: f64,
) -> f64 {
    let vot = vot.as_array();
    let mut constant = 0.0;
    let mut congestible = Vec::new();
    let mut moves = false;
    for (i, e) in graph.edges().iter().enumerate() {
        let d = target.total[i] - current.total[i];
        let mut money = 0.0;
        for n in 0..3 {
            let dn = target.by_class[n][i] - current.by_class[n][i];
            if dn != 0.0 {
                moves = true;
                money += dn / vot[n];
            }
        }
        if money != 0.0 {
            constant += money * e.label.price;
        }
        if d == 0.0 {
            continue;
        }
        if e.kind.is_taxi_service() {
            congestible.push((i, d));
        } else {
            constant += edge_travel_time(&e.label, e.kind, 0.0) * d;
        }
    }
    if !moves {
        return 0.0;
    }
    let slope = |alpha: f64| {
        let mut s = constant;
        for &(i, d) in &congestible {
            let e = graph.edge(i);
            s += edge_travel_time(&e.label, e.kind, current.total[i] + alpha * d) * d;
        }
        s
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    while lo == 0.0 && hi > f64::MIN_POSITIVE {
        hi *= 0.5;
        if slope(hi) < 0.0 {
            lo = hi;
        }
    }
    lo
}

/// Generalized cost of a path for one class at the given edge times.
pub fn path_cost(graph: &MultimodalGraph, path: &[usize], times: &[f64], vot: f64) -> f64 {
    path.iter()
        .map(|&e| generalized_cost(&graph.edge(e).label, times[e], vot))
        .sum()
}

/// Net outflow residual at every vertex and class against the demand.
/// Zero (up to rounding) means the flows conserve every request's volume.
pub fn conservation_residual(graph: &MultimodalGraph, flows: &FlowState, demand: &crate::demand::Demand) -> f64 {
    let mut worst: f64 = 0.0;
    for class in UserClass::ALL {
        let mut balance = vec![0.0; graph.num_vertices()];
        for (i, e) in graph.edges().iter().enumerate() {
            let y = flows.by_class[class.index()][i];
            balance[e.tail] += y;
            balance[e.head] -= y;
        }
        for r in demand.requests.iter().filter(|r| r.class == class) {
            balance[r.origin] -= r.volume;
            balance[r.destination] += r.volume;
        }
        for b in balance {
            worst = worst.max(b.abs());
        }
    }
    for (i, t) in flows.total.iter().enumerate() {
        let s: f64 = flows.by_class.iter().map(|c| c[i]).sum();
        worst = worst.max((s - t).abs());
    }
    worst
}
