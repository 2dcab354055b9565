use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;

use super::{generalized_cost, FlowState};
use crate::demand::Demand;
use crate::error::{Error, Result};
use crate::network::{EdgeId, MultimodalGraph, VertexId};

/// All-or-nothing loading of the demand onto current shortest paths.
#[derive(Clone, Debug)]
pub struct AonResult {
    pub flows: FlowState,
    /// Shortest-path total cost: sum over requests of volume times path cost.
    pub sptc: f64,
    /// Chosen path (edge ids) for every request, in demand order.
    pub paths: Vec<Vec<EdgeId>>,
    /// Generalized cost of each chosen path.
    pub costs: Vec<f64>,
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    vertex: VertexId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Tree {
    dist: Vec<f64>,
    pred: Vec<Option<EdgeId>>,
}

impl Tree {
    fn path_to(&self, graph: &MultimodalGraph, mut v: VertexId) -> Vec<EdgeId> {
        let mut path = Vec::new();
        while let Some(e) = self.pred[v] {
            path.push(e);
            v = graph.edge(e).tail;
        }
        path.reverse();
        path
    }
}

// Exact cost ties are broken towards the lexicographically smaller edge-id
// sequence, which keeps the loading independent of heap order.
fn dijkstra(graph: &MultimodalGraph, weights: &[f64], origin: VertexId) -> Tree {
    let n = graph.num_vertices();
    let mut tree = Tree {
        dist: vec![f64::INFINITY; n],
        pred: vec![None; n],
    };
    tree.dist[origin] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { dist: 0.0, vertex: origin });
    while let Some(Entry { dist, vertex: u }) = heap.pop() {
        if dist > tree.dist[u] {
            continue;
        }
        for &e in graph.outgoing(u) {
            let w = weights[e];
            if !w.is_finite() {
                continue;
            }
            let v = graph.edge(e).head;
            if v == origin {
                continue;
            }
            let nd = dist + w;
            let better = if nd < tree.dist[v] {
                true
            } else if nd == tree.dist[v] && tree.pred[v] != Some(e) {
                let mut candidate = tree.path_to(graph, u);
                if candidate.iter().any(|&x| graph.edge(x).tail == v) {
                    false
                } else {
                    candidate.push(e);
                    candidate < tree.path_to(graph, v)
                }
            } else {
                false
            };
            if better {
                tree.dist[v] = nd;
                tree.pred[v] = Some(e);
                heap.push(Entry { dist: nd, vertex: v });
            }
        }
    }
    tree
}

/// Routes every request on a minimum generalized-cost path at fixed edge
/// times and loads its full volume there.
pub fn shortest_path_assignment(graph: &MultimodalGraph, times: &[f64], demand: &Demand) -> Result<AonResult> {
    let vot = demand.vot.as_array();
    let weights: Vec<Vec<f64>> = vot
        .iter()
        .map(|&g| {
            graph
                .edges()
                .iter()
                .zip(times)
                .map(|(e, &t)| generalized_cost(&e.label, t, g))
                .collect()
        })
        .collect();

    let mut groups: BTreeMap<(usize, VertexId), Vec<usize>> = BTreeMap::new();
    for (i, r) in demand.requests.iter().enumerate() {
        groups.entry((r.class.index(), r.origin)).or_default().push(i);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let solve = |((class, origin), members): &((usize, VertexId), Vec<usize>)| {
        let tree = dijkstra(graph, &weights[*class], *origin);
        members
            .iter()
            .map(|&i| {
                let r = &demand.requests[i];
                let cost = tree.dist[r.destination];
                if !cost.is_finite() {
                    return Err(Error::Unreachable {
                        request: i,
                        origin: r.origin,
                        destination: r.destination,
                    });
                }
                Ok((i, tree.path_to(graph, r.destination), cost))
            })
            .collect::<Result<Vec<_>>>()
    };
    let solved: Vec<Result<Vec<_>>> = if groups.len() > 1 && rayon::current_num_threads() > 1 {
        groups.par_iter().map(solve).collect()
    } else {
        groups.iter().map(solve).collect()
    };

    let m = demand.requests.len();
    let mut paths = vec![Vec::new(); m];
    let mut costs = vec![0.0; m];
    let mut first_error = None;
    for group in solved {
        match group {
            Ok(rows) => {
                for (i, path, cost) in rows {
                    paths[i] = path;
                    costs[i] = cost;
                }
            }
            Err(e) => {
                let request = match &e {
                    Error::Unreachable { request, .. } => *request,
                    _ => usize::MAX,
                };
                if first_error.as_ref().map_or(true, |(r, _)| request < *r) {
                    first_error = Some((request, e));
                }
            }
        }
    }
    if let Some((_, e)) = first_error {
        return Err(e);
    }

    let mut flows = FlowState::zeros(graph.num_edges());
    let mut sptc = 0.0;
    for (i, r) in demand.requests.iter().enumerate() {
        flows.add_path(r.class, &paths[i], r.volume);
        if r.volume != 0.0 {
            sptc += r.volume * costs[i];
        }
    }
    Ok(AonResult { flows, sptc, paths, costs })
}
