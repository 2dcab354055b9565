//! Public transport (PT) and taxi (TX) operators: strategies, how they price
//! the network, and what they earn and spend at given flows.

use serde::{Deserialize, Serialize};

use crate::assignment::{edge_travel_time, FlowState};
use crate::error::{Error, Result};
use crate::municipality::Policy;
use crate::network::{EdgeId, EdgeKind, MultimodalGraph, Mode};

/// PT decision: service frequency (veh/h) and three fares (CHF, CHF/km).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PtStrategy {
    pub frequency: f64,
    pub base_fare: f64,
    pub distance_fare: f64,
    pub transfer_fare: f64,
}

/// Taxi decision: fleet size (veh) and four fares (CHF, CHF/km, CHF/h).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxStrategy {
    pub fleet: f64,
    pub base_fare: f64,
    pub distance_fare: f64,
    pub time_fare: f64,
    pub transfer_fare: f64,
}

impl PtStrategy {
    pub const DIM: usize = 4;
    pub const NAMES: [&'static str; 4] = ["q", "p_base", "p_d", "p_trans"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.frequency, self.base_fare, self.distance_fare, self.transfer_fare]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            frequency: x[0],
            base_fare: x[1],
            distance_fare: x[2],
            transfer_fare: x[3],
        }
    }
}

impl TxStrategy {
    pub const DIM: usize = 5;
    pub const NAMES: [&'static str; 5] = ["w", "p_base", "p_d", "p_t", "p_trans"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.fleet, self.base_fare, self.distance_fare, self.time_fare, self.transfer_fare]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            fleet: x[0],
            base_fare: x[1],
            distance_fare: x[2],
            time_fare: x[3],
            transfer_fare: x[4],
        }
    }
}

/// Upper bounds of both strategy boxes; lower bounds are zero. The taxi
/// fleet is bounded by the license cap of the policy instead.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyBounds {
    pub pt_frequency: f64,
    pub pt_base_fare: f64,
    pub pt_distance_fare: f64,
    pub pt_transfer_fare: f64,
    pub tx_base_fare: f64,
    pub tx_distance_fare: f64,
    pub tx_time_fare: f64,
    pub tx_transfer_fare: f64,
    /// Fleet size that maps to one unit in the normalized search frame.
    pub tx_fleet_scale: f64,
}

impl Default for StrategyBounds {
    fn default() -> Self {
        Self {
            pt_frequency: 16.0,
            pt_base_fare: 9.2,
            pt_distance_fare: 5.0,
            pt_transfer_fare: 20.0,
            tx_base_fare: 12.0,
            tx_distance_fare: 7.6,
            tx_time_fare: 138.0,
            tx_transfer_fare: 20.0,
            tx_fleet_scale: 1000.0,
        }
    }
}

impl StrategyBounds {
    pub fn pt_upper(&self) -> PtStrategy {
        PtStrategy {
            frequency: self.pt_frequency,
            base_fare: self.pt_base_fare,
            distance_fare: self.pt_distance_fare,
            transfer_fare: self.pt_transfer_fare,
        }
    }

    pub fn tx_upper(&self, license: f64) -> TxStrategy {
        TxStrategy {
            fleet: license,
            base_fare: self.tx_base_fare,
            distance_fare: self.tx_distance_fare,
            time_fare: self.tx_time_fare,
            transfer_fare: self.tx_transfer_fare,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pt_frequency,
            self.pt_base_fare,
            self.pt_distance_fare,
            self.pt_transfer_fare,
            self.tx_base_fare,
            self.tx_distance_fare,
            self.tx_time_fare,
            self.tx_transfer_fare,
            self.tx_fleet_scale,
        ];
        if all.iter().all(|b| b.is_finite() && *b > 0.0) {
            Ok(())
        } else {
            Err(Error::domain("strategy bounds must be finite and > 0"))
        }
    }
}

/// Unit costs of one operator: CHF/km, CHF/h and CHF per vehicle-hour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub distance: f64,
    pub time: f64,
    pub vehicle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorCostParams {
    pub pt: UnitCosts,
    pub tx: UnitCosts,
}

impl Default for OperatorCostParams {
    fn default() -> Self {
        Self {
            pt: UnitCosts {
                distance: 1.3,
                time: 26.0,
                vehicle: 115.0,
            },
            tx: UnitCosts {
                distance: 0.12,
                time: 24.0,
                vehicle: 9.0,
            },
        }
    }
}

impl OperatorCostParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pt.distance,
            self.pt.time,
            self.pt.vehicle,
            self.tx.distance,
            self.tx.time,
            self.tx.vehicle,
        ];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(Error::domain("operator unit costs must be finite and >= 0"))
        }
    }
}

/// How supply levels reach travelers as waiting time on access transfers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccessParams {
    /// Taxi pickup wait is `kappa / fleet` hours.
    pub kappa: f64,
}

impl Default for AccessParams {
    fn default() -> Self {
        Self { kappa: 2.0 }
    }
}

fn clamp(v: f64, hi: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, hi)
    }
}

/// Box clamp, then the transfer fare is capped by the base fare.
pub fn project_pt(x: &PtStrategy, bounds: &StrategyBounds) -> PtStrategy {
    let base_fare = clamp(x.base_fare, bounds.pt_base_fare);
    PtStrategy {
        frequency: clamp(x.frequency, bounds.pt_frequency),
        base_fare,
        distance_fare: clamp(x.distance_fare, bounds.pt_distance_fare),
        transfer_fare: clamp(x.transfer_fare, bounds.pt_transfer_fare).min(base_fare),
    }
}

/// As [`project_pt`], with the fleet clamped to the license cap.
pub fn project_tx(x: &TxStrategy, bounds: &StrategyBounds, license: f64) -> TxStrategy {
    let base_fare = clamp(x.base_fare, bounds.tx_base_fare);
    TxStrategy {
        fleet: clamp(x.fleet, license.max(0.0)),
        base_fare,
        distance_fare: clamp(x.distance_fare, bounds.tx_distance_fare),
        time_fare: clamp(x.time_fare, bounds.tx_time_fare),
        transfer_fare: clamp(x.transfer_fare, bounds.tx_transfer_fare).min(base_fare),
    }
}

pub fn is_feasible_pt(x: &PtStrategy, bounds: &StrategyBounds) -> bool {
    project_pt(x, bounds) == *x
}

pub fn is_feasible_tx(x: &TxStrategy, bounds: &StrategyBounds, license: f64) -> bool {
    project_tx(x, bounds, license) == *x
}

fn wait(rate: f64) -> f64 {
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Labels the template with the operators' fares and waiting times.
/// A zero frequency or fleet closes every transfer into that mode.
pub fn apply_strategies(
    template: &MultimodalGraph,
    pt: &PtStrategy,
    tx: &TxStrategy,
    access: &AccessParams,
) -> MultimodalGraph {
    let pt_wait = 0.5 * wait(pt.frequency);
    let tx_wait = access.kappa * wait(tx.fleet);
    template.map_labels(|e| {
        let mut l = e.label;
        match e.kind {
            EdgeKind::Service(Mode::Pt) => l.price = l.distance * pt.distance_fare,
            EdgeKind::Service(Mode::Taxi) => l.price = l.distance * tx.distance_fare + l.freeflow_time * tx.time_fare,
            EdgeKind::Service(Mode::Walk) => {}
            EdgeKind::Transfer { from, to: Mode::Pt } => {
                l.price = if from == Mode::Walk { pt.base_fare } else { pt.transfer_fare };
                l.fixed_time = pt_wait;
            }
            EdgeKind::Transfer { from, to: Mode::Taxi } => {
                l.price = if from == Mode::Walk { tx.base_fare } else { tx.transfer_fare };
                l.fixed_time = tx_wait;
            }
            EdgeKind::Transfer { to: Mode::Walk, .. } => {
                l.price = 0.0;
                l.fixed_time = 0.0;
            }
        }
        l
    })
}

/// Flow aggregates that operator and municipal objectives depend on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    /// PT passenger-km per hour.
    pub pt_pkm: f64,
    /// Walk -> PT boardings per hour.
    pub e31: f64,
    /// Taxi -> PT transfers per hour.
    pub e21: f64,
    pub tx_pkm: f64,
    /// Passenger-hours per hour spent in taxis at congested times.
    pub tx_hours: f64,
    /// Walk -> taxi boardings per hour.
    pub e32: f64,
    /// PT -> taxi transfers per hour.
    pub e12: f64,
}

impl FlowSummary {
    pub const NAMES: [&'static str; 7] = ["pt_pkm", "e31", "e21", "tx_pkm", "tx_hours", "e32", "e12"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.pt_pkm, self.e31, self.e21, self.tx_pkm, self.tx_hours, self.e32, self.e12]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            pt_pkm: v[0],
            e31: v[1],
            e21: v[2],
            tx_pkm: v[3],
            tx_hours: v[4],
            e32: v[5],
            e12: v[6],
        }
    }
}

fn transfers(graph: &MultimodalGraph, from: Mode, to: Mode) -> &[EdgeId] {
    graph.transfer_edges(from, to).expect("distinct layers")
}

pub fn summarize_flows(graph: &MultimodalGraph, flows: &FlowState) -> FlowSummary {
    let mut s = FlowSummary::default();
    for &e in graph.service_edges(Mode::Pt) {
        s.pt_pkm += flows.total[e] * graph.edge(e).label.distance;
    }
    for &e in graph.service_edges(Mode::Taxi) {
        let edge = graph.edge(e);
        let y = flows.total[e];
        if y != 0.0 {
            s.tx_pkm += y * edge.label.distance;
            s.tx_hours += y * edge_travel_time(&edge.label, edge.kind, y);
        }
    }
    s.e31 = flows.sum_over(transfers(graph, Mode::Walk, Mode::Pt));
    s.e21 = flows.sum_over(transfers(graph, Mode::Taxi, Mode::Pt));
    s.e32 = flows.sum_over(transfers(graph, Mode::Walk, Mode::Taxi));
    s.e12 = flows.sum_over(transfers(graph, Mode::Pt, Mode::Taxi));
    s
}

pub fn revenue_pt_from(x: &PtStrategy, s: &FlowSummary) -> f64 {
    s.pt_pkm * x.distance_fare + s.e31 * x.base_fare + s.e21 * x.transfer_fare
}

pub fn revenue_tx_from(x: &TxStrategy, s: &FlowSummary) -> f64 {
    s.tx_pkm * x.distance_fare + s.tx_hours * x.time_fare + s.e32 * x.base_fare + s.e12 * x.transfer_fare
}

pub fn revenue_pt(x: &PtStrategy, flows: &FlowState, graph: &MultimodalGraph) -> f64 {
    revenue_pt_from(x, &summarize_flows(graph, flows))
}

/// Time fares are charged on congested edge times.
pub fn revenue_tx(x: &TxStrategy, flows: &FlowState, graph: &MultimodalGraph) -> f64 {
    revenue_tx_from(x, &summarize_flows(graph, flows))
}

/// Vehicle-km and vehicle-hours of the PT schedule plus fleet holding cost.
pub fn cost_pt(x: &PtStrategy, graph: &MultimodalGraph, costs: &OperatorCostParams) -> f64 {
    let per_run: f64 = graph
        .service_edges(Mode::Pt)
        .iter()
        .map(|&e| {
            let l = &graph.edge(e).label;
            l.distance * costs.pt.distance + (l.fixed_time + l.freeflow_time) * costs.pt.time
        })
        .sum();
    x.frequency * per_run + costs.pt.vehicle * x.frequency
}

pub fn cost_tx_from(x: &TxStrategy, s: &FlowSummary, costs: &OperatorCostParams) -> f64 {
    s.tx_pkm * costs.tx.distance + s.tx_hours * costs.tx.time + costs.tx.vehicle * x.fleet
}

pub fn cost_tx(x: &TxStrategy, flows: &FlowState, graph: &MultimodalGraph, costs: &OperatorCostParams) -> f64 {
    cost_tx_from(x, &summarize_flows(graph, flows), costs)
}

/// Operator losses; lower is better for the operator.
pub fn objective_pt_from(x: &PtStrategy, s: &FlowSummary, cost: f64, z: &Policy) -> f64 {
    (z.tau_pt - 1.0) * revenue_pt_from(x, s) + cost - z.sigma_pt * s.e21
}

pub fn objective_tx_from(x: &TxStrategy, s: &FlowSummary, costs: &OperatorCostParams, z: &Policy) -> f64 {
    (z.tau_tx - 1.0) * revenue_tx_from(x, s) + cost_tx_from(x, s, costs) - z.sigma_tx * s.e12
}

pub fn objective_pt(
    x: &PtStrategy,
    flows: &FlowState,
    graph: &MultimodalGraph,
    costs: &OperatorCostParams,
    z: &Policy,
) -> f64 {
    objective_pt_from(x, &summarize_flows(graph, flows), cost_pt(x, graph, costs), z)
}

pub fn objective_tx(
    x: &TxStrategy,
    flows: &FlowState,
    graph: &MultimodalGraph,
    costs: &OperatorCostParams,
    z: &Policy,
) -> f64 {
    objective_tx_from(x, &summarize_flows(graph, flows), costs, z)
}
