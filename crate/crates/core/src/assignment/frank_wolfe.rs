use serde::{Deserialize, Serialize};

use super::{
    beckmann_objective, edge_times, edge_travel_time, find_alpha, generalized_cost, shortest_path_assignment,
    total_system_cost, FlowState, GapStats,
};
use crate::demand::Demand;
use crate::error::{Error, Result};
use crate::network::{EdgeId, MultimodalGraph};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UeParams {
    /// Stop once the relative gap drops below this.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub line_search_tolerance: f64,
    /// Pairwise path-flow shifts per request after every step; 0 gives
    /// plain Frank-Wolfe.
    pub equilibration_moves: usize,
}

impl Default for UeParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iterations: 500,
            line_search_tolerance: 1e-6,
            equilibration_moves: 4,
        }
    }
}

/// One gap evaluation of the solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwIteration {
    pub iteration: usize,
    pub beckmann: f64,
    pub tstc: f64,
    pub sptc: f64,
    pub rel_gap: f64,
    /// Step taken after this evaluation; zero on the last row.
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct UeSolution {
    pub flows: FlowState,
    pub gap: GapStats,
    /// Path flows per request: `(edge ids, volume)`.
    pub path_flows: Vec<Vec<(Vec<EdgeId>, f64)>>,
    pub trace: Vec<FwIteration>,
}

impl UeSolution {
    pub fn converged(&self) -> bool {
        self.gap.converged
    }
}

fn relative_gap(tstc: f64, sptc: f64) -> f64 {
    if sptc > 0.0 {
        (tstc / sptc - 1.0).max(0.0)
    } else if tstc <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn blend_paths(paths: &mut [Vec<(Vec<EdgeId>, f64)>], target: &[Vec<EdgeId>], demand: &Demand, alpha: f64) {
    for ((mine, aim), r) in paths.iter_mut().zip(target).zip(&demand.requests) {
        for (_, f) in mine.iter_mut() {
            *f *= 1.0 - alpha;
        }
        match mine.iter_mut().find(|(p, _)| p == aim) {
            Some((_, f)) => *f += alpha * r.volume,
            None => mine.push((aim.clone(), alpha * r.volume)),
        }
        mine.retain(|(_, f)| *f > 0.0);
    }
}

fn path_cost_at(graph: &MultimodalGraph, path: &[EdgeId], flows: &FlowState, vot: f64) -> f64 {
    path.iter()
        .map(|&e| {
            let edge = graph.edge(e);
            generalized_cost(&edge.label, edge_travel_time(&edge.label, edge.kind, flows.total[e]), vot)
        })
        .sum()
}

// Moves flow from a request's dearest used path to its cheapest known path,
// with the shift chosen by exact line search on the Beckmann potential.
fn equilibrate(
    graph: &MultimodalGraph,
    demand: &Demand,
    flows: &mut FlowState,
    paths: &mut [Vec<(Vec<EdgeId>, f64)>],
    params: &UeParams,
) {
    let vot = demand.vot.as_array();
    for (r, set) in demand.requests.iter().zip(paths.iter_mut()) {
        if set.len() < 2 {
            continue;
        }
        let g = vot[r.class.index()];
        let n = r.class.index();
        for _ in 0..params.equilibration_moves {
            let costs: Vec<f64> = set.iter().map(|(p, _)| path_cost_at(graph, p, flows, g)).collect();
            let (lo, hi) = costs.iter().enumerate().fold((0, 0), |(lo, hi), (i, c)| {
                (if *c < costs[lo] { i } else { lo }, if *c > costs[hi] { i } else { hi })
            });
            if lo == hi || costs[hi] - costs[lo] <= 1e-12 * costs[lo].abs() {
                break;
            }
            let only_lo: Vec<EdgeId> = set[lo].0.iter().copied().filter(|e| !set[hi].0.contains(e)).collect();
            let only_hi: Vec<EdgeId> = set[hi].0.iter().copied().filter(|e| !set[lo].0.contains(e)).collect();
            let available = set[hi].1;
            let slope = |s: f64| {
                let side = |edges: &[EdgeId], sign: f64| -> f64 {
                    edges
                        .iter()
                        .map(|&e| {
                            let edge = graph.edge(e);
                            let t = edge_travel_time(&edge.label, edge.kind, flows.total[e] + sign * s);
                            generalized_cost(&edge.label, t, g)
                        })
                        .sum()
                };
                side(&only_lo, 1.0) - side(&only_hi, -1.0)
            };
            let shift = if slope(available) <= 0.0 {
                available
            } else {
                let (mut a, mut b) = (0.0, available);
                while b - a > params.line_search_tolerance * available {
                    let m = 0.5 * (a + b);
                    if slope(m) < 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                a
            };
            if shift <= 0.0 {
                break;
            }
            for &e in &only_lo {
                flows.by_class[n][e] += shift;
                flows.total[e] += shift;
            }
            for &e in &only_hi {
                flows.by_class[n][e] = (flows.by_class[n][e] - shift).max(0.0);
                flows.total[e] = (flows.total[e] - shift).max(0.0);
            }
            set[lo].1 += shift;
            if shift == available {
                set.remove(hi);
            } else {
                set[hi].1 -= shift;
            }
        }
    }
}

/// Frank-Wolfe on the Beckmann program.
pub fn solve_ue(graph: &MultimodalGraph, demand: &Demand, params: &UeParams) -> Result<UeSolution> {
    solve_ue_warm(graph, demand, params, None)
}

/// As [`solve_ue`], starting from a previous solution when one is supplied
/// and it fits the instance.
pub fn solve_ue_warm(
    graph: &MultimodalGraph,
    demand: &Demand,
    params: &UeParams,
    warm: Option<&UeSolution>,
) -> Result<UeSolution> {
    if !(params.epsilon > 0.0) || params.max_iterations == 0 {
        return Err(Error::domain("epsilon must be > 0 and max_iterations >= 1"));
    }
    let vot = &demand.vot;

    let cold = || -> Result<(FlowState, Vec<Vec<(Vec<EdgeId>, f64)>>)> {
        let zero = FlowState::zeros(graph.num_edges());
        let aon = shortest_path_assignment(graph, &edge_times(graph, &zero), demand)?;
        let paths = aon
            .paths
            .into_iter()
            .zip(&demand.requests)
            .map(|(p, r)| if r.volume > 0.0 { vec![(p, r.volume)] } else { Vec::new() })
            .collect();
        Ok((aon.flows, paths))
    };
    let usable = warm.filter(|w| {
        w.flows.num_edges() == graph.num_edges()
            && w.path_flows.len() == demand.requests.len()
            && w.path_flows.iter().zip(&demand.requests).all(|(ps, r)| {
                let total: f64 = ps.iter().map(|(_, f)| f).sum();
                (total - r.volume).abs() <= 1e-9 * r.volume.max(1.0)
                    && ps.iter().all(|(p, _)| p.iter().all(|&e| e < graph.num_edges()))
            })
    });
    let (mut flows, mut paths) = match usable {
        Some(w) if beckmann_objective(graph, &w.flows, vot).is_finite() => (w.flows.clone(), w.path_flows.clone()),
        _ => cold()?,
    };

    let mut trace = Vec::new();
    let mut best: Option<(f64, FlowState, Vec<Vec<(Vec<EdgeId>, f64)>>, f64, f64, usize)> = None;
    for k in 0.. {
        let times = edge_times(graph, &flows);
        let aon = shortest_path_assignment(graph, &times, demand)?;
        let tstc = total_system_cost(graph, &flows, &times, vot);
        let gap = relative_gap(tstc, aon.sptc);
        let beckmann = beckmann_objective(graph, &flows, vot);
        if gap < params.epsilon {
            trace.push(FwIteration {
                iteration: k,
                beckmann,
                tstc,
                sptc: aon.sptc,
                rel_gap: gap,
                alpha: 0.0,
            });
            return Ok(UeSolution {
                flows,
                gap: GapStats {
                    tstc,
                    sptc: aon.sptc,
                    rel_gap: gap,
                    iterations: k + 1,
                    converged: true,
                },
                path_flows: paths,
                trace,
            });
        }
        if best.as_ref().map_or(true, |b| gap < b.0) {
            best = Some((gap, flows.clone(), paths.clone(), tstc, aon.sptc, k));
        }
        if k + 1 >= params.max_iterations {
            trace.push(FwIteration {
                iteration: k,
                beckmann,
                tstc,
                sptc: aon.sptc,
                rel_gap: gap,
                alpha: 0.0,
            });
            break;
        }
        let alpha = find_alpha(graph, &flows, &aon.flows, vot, params.line_search_tolerance);
        trace.push(FwIteration {
            iteration: k,
            beckmann,
            tstc,
            sptc: aon.sptc,
            rel_gap: gap,
            alpha,
        });
        if alpha > 0.0 {
            flows.blend(&aon.flows, alpha);
            blend_paths(&mut paths, &aon.paths, demand, alpha);
        }
        if params.equilibration_moves > 0 {
            equilibrate(graph, demand, &mut flows, &mut paths, params);
        }
    }
    let (gap, flows, path_flows, tstc, sptc, _) = best.expect("at least one iteration ran");
    log::debug!("assignment stopped at gap {gap:.3e} after {} iterations", params.max_iterations);
    Ok(UeSolution {
        flows,
        gap: GapStats {
            tstc,
            sptc,
            rel_gap: gap,
            iterations: params.max_iterations,
            converged: false,
        },
        path_flows,
        trace,
    })
}
