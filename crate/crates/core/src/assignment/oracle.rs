//! Path-enumeration reference solver for small instances.
//!
//! Independent of the Frank-Wolfe code: it works in path space, integrates
//! edge costs numerically and only needs a convex objective to be correct.

use super::{edge_travel_time, path_cost, shortest_path_assignment, FlowState};
use crate::demand::Demand;
use crate::error::{Error, Result};
use crate::network::{EdgeId, EdgeKind, EdgeLabel, MultimodalGraph, VertexId};

pub const DEFAULT_PATH_CAP: usize = 50;

/// Every simple path of every request, in depth-first edge-id order.
pub fn enumerate_paths(graph: &MultimodalGraph, demand: &Demand, cap: usize) -> Result<Vec<Vec<Vec<EdgeId>>>> {
    let mut total = 0;
    let mut out = Vec::with_capacity(demand.requests.len());
    for (i, r) in demand.requests.iter().enumerate() {
        let mut found = Vec::new();
        let mut on_path = vec![false; graph.num_vertices()];
        let mut stack = Vec::new();
        dfs(graph, r.origin, r.destination, &mut on_path, &mut stack, &mut found, cap - total.min(cap))
            .map_err(|e| match e {
                Error::PathCapExceeded { .. } => Error::PathCapExceeded { cap },
                other => other,
            })?;
        if found.is_empty() {
            return Err(Error::Unreachable {
                request: i,
                origin: r.origin,
                destination: r.destination,
            });
        }
        total += found.len();
        out.push(found);
    }
    Ok(out)
}

fn dfs(
    graph: &MultimodalGraph,
    at: VertexId,
    target: VertexId,
    on_path: &mut [bool],
    stack: &mut Vec<EdgeId>,
    found: &mut Vec<Vec<EdgeId>>,
    room: usize,
) -> Result<()> {
    if at == target {
        if found.len() >= room {
            return Err(Error::PathCapExceeded { cap: 0 });
        }
        found.push(stack.clone());
        return Ok(());
    }
    on_path[at] = true;
    for &e in graph.outgoing(at) {
        let edge = graph.edge(e);
        if on_path[edge.head] || !edge.label.fixed_time.is_finite() {
            continue;
        }
        stack.push(e);
        dfs(graph, edge.head, target, on_path, stack, found, room)?;
        stack.pop();
    }
    on_path[at] = false;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BruteForceSolution {
    pub paths: Vec<Vec<Vec<EdgeId>>>,
    /// Flow on each enumerated path, aligned with `paths`.
    pub path_flows: Vec<Vec<f64>>,
    pub flows: FlowState,
    pub objective: f64,
}

const SIMPSON_PANELS: usize = 64;

fn integral(label: &EdgeLabel, kind: EdgeKind, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    if !kind.is_taxi_service() {
        return edge_travel_time(label, kind, 0.0) * y;
    }
    let h = y / SIMPSON_PANELS as f64;
    let mut s = edge_travel_time(label, kind, 0.0) + edge_travel_time(label, kind, y);
    for k in 1..SIMPSON_PANELS {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * edge_travel_time(label, kind, k as f64 * h);
    }
    s * h / 3.0
}

/// Minimizes the Beckmann potential over path flows on a lattice of
/// `grid * volume` per request, by pairwise exchanges with exact line search.
pub fn brute_force_ue(graph: &MultimodalGraph, demand: &Demand, grid: f64, cap: usize) -> Result<BruteForceSolution> {
    if !(grid > 0.0 && grid <= 1.0) {
        return Err(Error::domain("grid must lie in (0, 1]"));
    }
    let units = (1.0 / grid).round() as i64;
    let paths = enumerate_paths(graph, demand, cap)?;
    let vot = demand.vot.as_array();
    let mut counts: Vec<Vec<i64>> = paths
        .iter()
        .map(|ps| {
            let mut c = vec![0; ps.len()];
            c[0] = units;
            c
        })
        .collect();

    let mut total = vec![0.0; graph.num_edges()];
    let place = |total: &mut [f64], path: &[EdgeId], amount: f64| {
        for &e in path {
            total[e] += amount;
        }
    };
    for (r, ps) in demand.requests.iter().zip(&paths) {
        place(&mut total, &ps[0], r.volume);
    }

    // Objective change when `step` volume moves from path a to path b.
    let delta = |total: &[f64], only_a: &[EdgeId], only_b: &[EdgeId], money: f64, step: f64| {
        let mut d = money * step;
        for &e in only_a {
            let edge = graph.edge(e);
            d += integral(&edge.label, edge.kind, total[e] - step) - integral(&edge.label, edge.kind, total[e]);
        }
        for &e in only_b {
            let edge = graph.edge(e);
            d += integral(&edge.label, edge.kind, total[e] + step) - integral(&edge.label, edge.kind, total[e]);
        }
        d
    };

    for _sweep in 0..10_000 {
        let mut moved = false;
        for (ri, r) in demand.requests.iter().enumerate() {
            if r.volume == 0.0 {
                continue;
            }
            let unit = r.volume / units as f64;
            let g = vot[r.class.index()];
            let ps = &paths[ri];
            for a in 0..ps.len() {
                for b in 0..ps.len() {
                    if a == b || counts[ri][a] == 0 {
                        continue;
                    }
                    let only_a: Vec<EdgeId> = ps[a].iter().copied().filter(|e| !ps[b].contains(e)).collect();
                    let only_b: Vec<EdgeId> = ps[b].iter().copied().filter(|e| !ps[a].contains(e)).collect();
                    let price = |p: &[EdgeId]| p.iter().map(|&e| graph.edge(e).label.price).sum::<f64>() / g;
                    let money = price(&only_b) - price(&only_a);
                    let f = |k: i64| delta(&total, &only_a, &only_b, money, k as f64 * unit);
                    // Convex in k: integer ternary search on [0, counts[a]].
                    let (mut lo, mut hi) = (0i64, counts[ri][a]);
                    while hi - lo > 2 {
                        let m1 = lo + (hi - lo) / 3;
                        let m2 = hi - (hi - lo) / 3;
                        if f(m1) <= f(m2) {
                            hi = m2;
                        } else {
                            lo = m1;
                        }
                    }
                    let mut k_best = 0;
                    let mut f_best: f64 = 0.0;
                    for k in lo..=hi {
                        let v = f(k);
                        if v < f_best - 1e-12 * (1.0 + f_best.abs()) {
                            k_best = k;
                            f_best = v;
                        }
                    }
                    if k_best > 0 {
                        let step = k_best as f64 * unit;
                        place(&mut total, &ps[a], -step);
                        place(&mut total, &ps[b], step);
                        counts[ri][a] -= k_best;
                        counts[ri][b] += k_best;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            break;
        }
    }

    let mut flows = FlowState::zeros(graph.num_edges());
    let mut path_flows = Vec::with_capacity(paths.len());
    for ((r, ps), cs) in demand.requests.iter().zip(&paths).zip(&counts) {
        let fs: Vec<f64> = cs.iter().map(|&c| c as f64 * r.volume / units as f64).collect();
        for (p, &f) in ps.iter().zip(&fs) {
            flows.add_path(r.class, p, f);
        }
        path_flows.push(fs);
    }
    let mut objective = 0.0;
    for (i, e) in graph.edges().iter().enumerate() {
        objective += integral(&e.label, e.kind, flows.total[i]);
        for n in 0..3 {
            objective += flows.by_class[n][i] * e.label.price / vot[n];
        }
    }
    Ok(BruteForceSolution {
        paths,
        path_flows,
        flows,
        objective,
    })
}

/// Largest relative excess of a used path's cost over its request's
/// shortest-path cost. Paths carrying at most `min_flow` are ignored.
pub fn wardrop_violation(
    graph: &MultimodalGraph,
    demand: &Demand,
    times: &[f64],
    path_flows: &[Vec<(Vec<EdgeId>, f64)>],
    min_flow: f64,
) -> Result<f64> {
    let aon = shortest_path_assignment(graph, times, demand)?;
    let vot = demand.vot.as_array();
    let mut worst: f64 = 0.0;
    for ((r, ps), &best) in demand.requests.iter().zip(path_flows).zip(&aon.costs) {
        for (p, f) in ps {
            if *f <= min_flow {
                continue;
            }
            let c = path_cost(graph, p, times, vot[r.class.index()]);
            let excess = if best > 0.0 { (c - best) / best } else { c - best };
            worst = worst.max(excess);
        }
    }
    Ok(worst)
}
