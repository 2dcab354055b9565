//! Layered multimodal graphs: one subgraph per mode plus co-located transfer
//! edges between the layers.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};

pub type VertexId = usize;
pub type EdgeId = usize;

pub const DEFAULT_BPR_A: f64 = 0.15;
pub const DEFAULT_BPR_B: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pt,
    Taxi,
    Walk,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Pt, Mode::Taxi, Mode::Walk];

    /// Numeric mode label (PT = 1, taxi = 2, walk = 3).
    pub fn code(self) -> u8 {
        match self {
            Mode::Pt => 1,
            Mode::Taxi => 2,
            Mode::Walk => 3,
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Pt => "pt",
            Mode::Taxi => "taxi",
            Mode::Walk => "walk",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pt" => Ok(Mode::Pt),
            "taxi" => Ok(Mode::Taxi),
            "walk" => Ok(Mode::Walk),
            other => Err(Error::domain(format!("unknown mode `{other}`"))),
        }
    }
}

/// Role of an edge: travel inside one mode layer, or a switch between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EdgeKind {
    Service(Mode),
    Transfer { from: Mode, to: Mode },
}

impl EdgeKind {
    pub fn is_taxi_service(self) -> bool {
        self == EdgeKind::Service(Mode::Taxi)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeKind::Service(m) => write!(f, "service/{m}"),
            EdgeKind::Transfer { from, to } => write!(f, "transfer/{from}/{to}"),
        }
    }
}

impl FromStr for EdgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            ["service", m] => Ok(EdgeKind::Service(m.parse()?)),
            ["transfer", a, b] => Ok(EdgeKind::Transfer {
                from: a.parse()?,
                to: b.parse()?,
            }),
            _ => Err(Error::domain(format!("malformed edge kind `{s}`"))),
        }
    }
}

impl TryFrom<String> for EdgeKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EdgeKind> for String {
    fn from(k: EdgeKind) -> String {
        k.to_string()
    }
}

/// Edge attributes: price (CHF), distance (km), fixed and free-flow time
/// (hours), capacity (travelers/hour) and the two congestion coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeLabel {
    pub price: f64,
    pub distance: f64,
    pub fixed_time: f64,
    pub freeflow_time: f64,
    pub capacity: f64,
    pub bpr_a: f64,
    pub bpr_b: f64,
}

impl Default for EdgeLabel {
    fn default() -> Self {
        Self {
            price: 0.0,
            distance: 0.0,
            fixed_time: 0.0,
            freeflow_time: 0.0,
            capacity: 0.0,
            bpr_a: DEFAULT_BPR_A,
            bpr_b: DEFAULT_BPR_B,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: VertexId,
    pub head: VertexId,
    pub kind: EdgeKind,
    pub label: EdgeLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub mode: Mode,
    pub position: Option<[f64; 2]>,
}

/// Directed labeled graph with per-mode layers.
///
/// Vertex and edge ids are their positions; `validate` reports records whose
/// stored id disagrees with the position.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<EdgeId>>,
    service: [Vec<EdgeId>; 3],
    transfer: [[Vec<EdgeId>; 3]; 3],
}

impl MultimodalGraph {
    pub fn from_parts(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let n = vertices.len();
        let mut outgoing = vec![Vec::new(); n];
        let mut service: [Vec<EdgeId>; 3] = Default::default();
        let mut transfer: [[Vec<EdgeId>; 3]; 3] = Default::default();
        for (pos, e) in edges.iter().enumerate() {
            if e.tail >= n || e.head >= n {
                return Err(Error::domain(format!(
                    "edge {} references a vertex outside 0..{n}",
                    e.id
                )));
            }
            outgoing[e.tail].push(pos);
            match e.kind {
                EdgeKind::Service(m) => service[m.index()].push(pos),
                EdgeKind::Transfer { from, to } => transfer[from.index()][to.index()].push(pos),
            }
        }
        Ok(Self {
            vertices,
            edges,
            outgoing,
            service,
            transfer,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn outgoing(&self, v: VertexId) -> &[EdgeId] {
        &self.outgoing[v]
    }

    /// Service edges of one mode layer, ordered by id.
    pub fn service_edges(&self, mode: Mode) -> &[EdgeId] {
        &self.service[mode.index()]
    }

    /// Transfer edges from layer `from` into layer `to`, ordered by id.
    pub fn transfer_edges(&self, from: Mode, to: Mode) -> Result<&[EdgeId]> {
        if from == to {
            return Err(Error::domain(format!(
                "transfer edges must cross layers, got {from} -> {to}"
            )));
        }
        Ok(&self.transfer[from.index()][to.index()])
    }

    pub fn vertices_in(&self, mode: Mode) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.mode == mode)
            .map(|(i, _)| i)
    }

    /// Replaces every edge label; the topology is untouched.
    pub fn map_labels(&self, mut f: impl FnMut(&Edge) -> EdgeLabel) -> MultimodalGraph {
        let mut out = self.clone();
        for (e, src) in out.edges.iter_mut().zip(&self.edges) {
            e.label = f(src);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile::from(self);
        let value = serde_json::to_value(&file)?;
        let mut s = serde_json::to_string_pretty(&value)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        file.into_graph()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Returns every invariant violation in `graph`; never mutates it.
pub fn validate(graph: &MultimodalGraph) -> ValidationReport {
    let mut report = ValidationReport::new();
    let vertices = graph.vertices();

    for (pos, v) in vertices.iter().enumerate() {
        if v.id != pos {
            report.push(
                format!("vertex {}", v.id),
                format!("id does not match position {pos} (duplicate or unordered id)"),
            );
        }
    }

    for (pos, e) in graph.edges().iter().enumerate() {
        let subject = format!("edge {}", e.id);
        if e.id != pos {
            report.push(
                &subject,
                format!("id does not match position {pos} (duplicate or unordered id)"),
            );
        }
        if e.tail == e.head {
            report.push(&subject, "self-loop");
        }
        let tail_mode = vertices[e.tail].mode;
        let head_mode = vertices[e.head].mode;
        match e.kind {
            EdgeKind::Service(m) => {
                if tail_mode != m || head_mode != m {
                    report.push(
                        &subject,
                        format!(
                            "service/{m} edge joins a {tail_mode} vertex to a {head_mode} vertex"
                        ),
                    );
                }
            }
            EdgeKind::Transfer { from, to } => {
                if from == to {
                    report.push(&subject, format!("transfer must cross layers, got {from} -> {to}"));
                } else if tail_mode != from || head_mode != to {
                    report.push(
                        &subject,
                        format!(
                            "transfer {from} -> {to} joins a {tail_mode} vertex to a {head_mode} vertex"
                        ),
                    );
                }
                if to == Mode::Walk
                    && (e.label.price != 0.0
                        || e.label.fixed_time != 0.0
                        || e.label.freeflow_time != 0.0)
                {
                    report.push(&subject, "transfers into the walk layer must be free and instantaneous");
                }
            }
        }

        let l = &e.label;
        let finite_nonneg = [
            ("price", l.price),
            ("distance", l.distance),
            ("freeflow_time", l.freeflow_time),
            ("capacity", l.capacity),
            ("bpr_a", l.bpr_a),
            ("bpr_b", l.bpr_b),
        ];
        for (name, value) in finite_nonneg {
            if !(value.is_finite() && value >= 0.0) {
                report.push(&subject, format!("{name} must be finite and non-negative, got {value}"));
            }
        }
        // An infinite fixed time marks a closed transfer.
        let fixed_ok = l.fixed_time >= 0.0
            && (l.fixed_time.is_finite() || matches!(e.kind, EdgeKind::Transfer { .. }));
        if !fixed_ok {
            report.push(&subject, format!("fixed_time must be non-negative, got {}", l.fixed_time));
        }
        if e.kind.is_taxi_service() && !(l.capacity > 0.0) {
            report.push(&subject, "congestible taxi edge needs positive capacity");
        }
        if let (Some(a), Some(b)) = (vertices[e.tail].position, vertices[e.head].position) {
            if a == b && l.distance != 0.0 {
                report.push(&subject, "edge between co-located vertices must have zero distance");
            }
        }
    }

    let walk: Vec<VertexId> = graph.vertices_in(Mode::Walk).collect();
    if walk.len() >= 2 {
        let n = graph.num_vertices();
        let mut reverse = vec![Vec::new(); n];
        for e in graph.edges() {
            reverse[e.head].push(e.tail);
        }
        let forward = reachable(n, walk[0], |v| {
            graph.outgoing(v).iter().map(|&e| graph.edge(e).head).collect()
        });
        let backward = reachable(n, walk[0], |v| reverse[v].clone());
        for &w in &walk[1..] {
            if !forward[w] || !backward[w] {
                report.push(
                    format!("vertex {w}"),
                    format!("walk vertex is not mutually reachable with walk vertex {}", walk[0]),
                );
            }
        }
    }

    report
}

fn reachable(n: usize, start: VertexId, next: impl Fn(VertexId) -> Vec<VertexId>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        for u in next(v) {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    seen
}

/// Ordered transfer edge ids from `from` into `to`.
pub fn transfer_edges(graph: &MultimodalGraph, from: Mode, to: Mode) -> Result<Vec<EdgeId>> {
    graph.transfer_edges(from, to).map(<[EdgeId]>::to_vec)
}

/// Generator settings for the grid scenario family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Nominal road segment length (km).
    pub spacing_km: f64,
    /// Segment lengths are drawn from spacing * (1 +/- jitter).
    pub length_jitter: f64,
    pub walk_speed_kmh: f64,
    pub taxi_speed_kmh: f64,
    pub pt_speed_kmh: f64,
    /// Capacity of taxi road segments (travelers/hour).
    pub taxi_capacity: f64,
    pub bpr_a: f64,
    pub bpr_b: f64,
    /// Rows served by a PT line; `None` means the middle row.
    pub pt_rows: Option<Vec<usize>>,
    /// Columns served by a PT line; `None` means the middle column.
    pub pt_cols: Option<Vec<usize>>,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            spacing_km: 1.0,
            length_jitter: 0.1,
            walk_speed_kmh: 5.0,
            taxi_speed_kmh: 25.0,
            pt_speed_kmh: 20.0,
            taxi_capacity: 200.0,
            bpr_a: DEFAULT_BPR_A,
            bpr_b: DEFAULT_BPR_B,
            pt_rows: None,
            pt_cols: None,
        }
    }
}

impl GridParams {
    pub fn validate(&self, rows: usize, cols: usize) -> ValidationReport {
        let mut r = ValidationReport::new();
        if rows == 0 || cols == 0 {
            r.push("grid", format!("rows and cols must be >= 1, got {rows}x{cols}"));
        }
        let positive = [
            ("spacing_km", self.spacing_km),
            ("walk_speed_kmh", self.walk_speed_kmh),
            ("taxi_speed_kmh", self.taxi_speed_kmh),
            ("pt_speed_kmh", self.pt_speed_kmh),
            ("taxi_capacity", self.taxi_capacity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                r.push("grid", format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.length_jitter) {
            r.push("grid", format!("length_jitter must lie in [0, 1), got {}", self.length_jitter));
        }
        for (name, v) in [("bpr_a", self.bpr_a), ("bpr_b", self.bpr_b)] {
            if !(v.is_finite() && v >= 0.0) {
                r.push("grid", format!("{name} must be non-negative, got {v}"));
            }
        }
        for &row in self.pt_rows(rows).iter() {
            if row >= rows {
                r.push("grid", format!("pt row {row} outside 0..{rows}"));
            }
        }
        for &col in self.pt_cols(cols).iter() {
            if col >= cols {
                r.push("grid", format!("pt column {col} outside 0..{cols}"));
            }
        }
        r
    }

    fn pt_rows(&self, rows: usize) -> Vec<usize> {
        self.pt_rows.clone().unwrap_or_else(|| vec![rows / 2])
    }

    fn pt_cols(&self, cols: usize) -> Vec<usize> {
        self.pt_cols.clone().unwrap_or_else(|| vec![cols / 2])
    }
}

/// Builds a `rows x cols` grid city: a walk grid, a taxi layer on the same
/// roads, PT lines along the configured corridors, and co-located transfers
/// between every pair of layers present at a location.
pub fn build_grid_scenario(
    rows: usize,
    cols: usize,
    params: &GridParams,
    seed: u64,
) -> Result<MultimodalGraph> {
    params.validate(rows, cols).into_result()?;

    let n = rows * cols;
    let pt_rows = params.pt_rows(rows);
    let pt_cols = params.pt_cols(cols);
    let on_pt = |r: usize, c: usize| pt_rows.contains(&r) || pt_cols.contains(&c);

    let mut vertices = Vec::new();
    let pos = |r: usize, c: usize| Some([c as f64 * params.spacing_km, r as f64 * params.spacing_km]);
    for mode in [Mode::Walk, Mode::Taxi] {
        for r in 0..rows {
            for c in 0..cols {
                vertices.push(Vertex {
                    id: vertices.len(),
                    mode,
                    position: pos(r, c),
                });
            }
        }
    }
    let mut pt_vertex = vec![None; n];
    for r in 0..rows {
        for c in 0..cols {
            if on_pt(r, c) {
                pt_vertex[r * cols + c] = Some(vertices.len());
                vertices.push(Vertex {
                    id: vertices.len(),
                    mode: Mode::Pt,
                    position: pos(r, c),
                });
            }
        }
    }

    // Road segments: (cell a, cell b, on a PT corridor, length).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            segments.push((r * cols + c, r * cols + c + 1, pt_rows.contains(&r)));
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            segments.push((r * cols + c, (r + 1) * cols + c, pt_cols.contains(&c)));
        }
    }
    let segments: Vec<(usize, usize, bool, f64)> = segments
        .into_iter()
        .map(|(a, b, pt)| {
            let u: f64 = if params.length_jitter > 0.0 {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            };
            (a, b, pt, params.spacing_km * (1.0 + params.length_jitter * u))
        })
        .collect();

    let mut edges = Vec::new();
    let push = |edges: &mut Vec<Edge>, tail, head, kind, label| {
        edges.push(Edge {
            id: edges.len(),
            tail,
            head,
            kind,
            label,
        });
    };
    let zero = EdgeLabel {
        bpr_a: params.bpr_a,
        bpr_b: params.bpr_b,
        ..EdgeLabel::default()
    };

    for &(a, b, _, len) in &segments {
        let label = EdgeLabel {
            distance: len,
            freeflow_time: len / params.walk_speed_kmh,
            ..zero
        };
        push(&mut edges, a, b, EdgeKind::Service(Mode::Walk), label);
        push(&mut edges, b, a, EdgeKind::Service(Mode::Walk), label);
    }
    for &(a, b, _, len) in &segments {
        let label = EdgeLabel {
            distance: len,
            freeflow_time: len / params.taxi_speed_kmh,
            capacity: params.taxi_capacity,
            ..zero
        };
        push(&mut edges, n + a, n + b, EdgeKind::Service(Mode::Taxi), label);
        push(&mut edges, n + b, n + a, EdgeKind::Service(Mode::Taxi), label);
    }
    for &(a, b, corridor, len) in &segments {
        if let (true, Some(pa), Some(pb)) = (corridor, pt_vertex[a], pt_vertex[b]) {
            let label = EdgeLabel {
                distance: len,
                freeflow_time: len / params.pt_speed_kmh,
                ..zero
            };
            push(&mut edges, pa, pb, EdgeKind::Service(Mode::Pt), label);
            push(&mut edges, pb, pa, EdgeKind::Service(Mode::Pt), label);
        }
    }
    for cell in 0..n {
        let walk = cell;
        let taxi = n + cell;
        let transfer = |from, to| EdgeKind::Transfer { from, to };
        push(&mut edges, walk, taxi, transfer(Mode::Walk, Mode::Taxi), zero);
        push(&mut edges, taxi, walk, transfer(Mode::Taxi, Mode::Walk), zero);
        if let Some(pt) = pt_vertex[cell] {
            push(&mut edges, walk, pt, transfer(Mode::Walk, Mode::Pt), zero);
            push(&mut edges, pt, walk, transfer(Mode::Pt, Mode::Walk), zero);
            push(&mut edges, taxi, pt, transfer(Mode::Taxi, Mode::Pt), zero);
            push(&mut edges, pt, taxi, transfer(Mode::Pt, Mode::Taxi), zero);
        }
    }

    MultimodalGraph::from_parts(vertices, edges)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
    #[serde(default)]
    defaults: LabelDefaults,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelDefaults {
    a: f64,
    b: f64,
}

impl Default for LabelDefaults {
    fn default() -> Self {
        Self {
            a: DEFAULT_BPR_A,
            b: DEFAULT_BPR_B,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexRecord {
    id: VertexId,
    mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    id: EdgeId,
    tail: VertexId,
    head: VertexId,
    kind: EdgeKind,
    #[serde(default)]
    c: f64,
    #[serde(default)]
    l: f64,
    /// `null` encodes a closed (infinite-wait) edge.
    #[serde(default, with = "infinite_as_null")]
    t_fc: f64,
    #[serde(default)]
    t0: f64,
    #[serde(rename = "V", default)]
    capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl From<&MultimodalGraph> for GraphFile {
    fn from(g: &MultimodalGraph) -> Self {
        let defaults = LabelDefaults::default();
        GraphFile {
            vertices: g
                .vertices
                .iter()
                .map(|v| VertexRecord {
                    id: v.id,
                    mode: v.mode,
                    x: v.position.map(|p| p[0]),
                    y: v.position.map(|p| p[1]),
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id,
                    tail: e.tail,
                    head: e.head,
                    kind: e.kind,
                    c: e.label.price,
                    l: e.label.distance,
                    t_fc: e.label.fixed_time,
                    t0: e.label.freeflow_time,
                    capacity: e.label.capacity,
                    a: (e.label.bpr_a != defaults.a).then_some(e.label.bpr_a),
                    b: (e.label.bpr_b != defaults.b).then_some(e.label.bpr_b),
                })
                .collect(),
            defaults,
        }
    }
}

impl GraphFile {
    fn into_graph(self) -> Result<MultimodalGraph> {
        let vertices = self
            .vertices
            .into_iter()
            .map(|v| Vertex {
                id: v.id,
                mode: v.mode,
                position: match (v.x, v.y) {
                    (Some(x), Some(y)) => Some([x, y]),
                    _ => None,
                },
            })
            .collect();
        let defaults = self.defaults;
        let edges = self
            .edges
            .into_iter()
            .map(|e| Edge {
                id: e.id,
                tail: e.tail,
                head: e.head,
                kind: e.kind,
                label: EdgeLabel {
                    price: e.c,
                    distance: e.l,
                    fixed_time: e.t_fc,
                    freeflow_time: e.t0,
                    capacity: e.capacity,
                    bpr_a: e.a.unwrap_or(defaults.a),
                    bpr_b: e.b.unwrap_or(defaults.b),
                },
            })
            .collect();
        MultimodalGraph::from_parts(vertices, edges)
    }
}

/// Parses the graph section of a scenario from an already-decoded JSON value.
pub fn graph_from_value(value: serde_json::Value) -> Result<MultimodalGraph> {
    let file: GraphFile = serde_json::from_value(value)?;
    file.into_graph()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, seed: u64) -> MultimodalGraph {
        build_grid_scenario(rows, cols, &GridParams::default(), seed).unwrap()
    }

    fn count_kind(g: &MultimodalGraph, kind: EdgeKind) -> usize {
        g.edges().iter().filter(|e| e.kind == kind).count()
    }

    #[test]
    fn one_by_two_grid_has_taxi_link_and_access_at_both_cells() {
        let g = grid(1, 2, 0);
        assert_eq!(g.vertices_in(Mode::Walk).count(), 2);
        assert_eq!(g.vertices_in(Mode::Taxi).count(), 2);
        assert!(count_kind(&g, EdgeKind::Service(Mode::Taxi)) >= 1);
        let walk_taxi = g.transfer_edges(Mode::Walk, Mode::Taxi).unwrap();
        let taxi_walk = g.transfer_edges(Mode::Taxi, Mode::Walk).unwrap();
        assert_eq!(walk_taxi.len(), 2);
        assert_eq!(taxi_walk.len(), 2);
        assert!(validate(&g).is_empty(), "{}", validate(&g));
    }

    #[test]
    fn one_by_one_grid_is_an_isolated_stack() {
        let g = grid(1, 1, 0);
        for m in Mode::ALL {
            assert!(g.service_edges(m).is_empty());
        }
        assert_eq!(g.vertices_in(Mode::Walk).count(), 1);
        assert!(!g.transfer_edges(Mode::Walk, Mode::Taxi).unwrap().is_empty());
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let a = grid(3, 3, 7).to_json().unwrap();
        let b = grid(3, 3, 7).to_json().unwrap();
        assert_eq!(a, b);
        let c = grid(3, 3, 8).to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn grid_has_all_four_integration_transfer_classes() {
        let g = grid(3, 3, 1);
        for (a, b) in [
            (Mode::Walk, Mode::Pt),
            (Mode::Taxi, Mode::Pt),
            (Mode::Walk, Mode::Taxi),
            (Mode::Pt, Mode::Taxi),
        ] {
            assert!(!g.transfer_edges(a, b).unwrap().is_empty(), "{a}->{b}");
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad = GridParams {
            spacing_km: -1.0,
            ..GridParams::default()
        };
        assert!(matches!(build_grid_scenario(2, 2, &bad, 0), Err(Error::Invalid(_))));
        let bad = GridParams {
            taxi_capacity: 0.0,
            ..GridParams::default()
        };
        let err = build_grid_scenario(2, 2, &bad, 0).unwrap_err();
        assert!(err.to_string().contains("taxi_capacity"));
        assert!(build_grid_scenario(0, 2, &GridParams::default(), 0).is_err());
    }

    #[test]
    fn pt_service_edge_into_walk_vertex_is_reported() {
        let g = grid(2, 2, 0);
        let mut edges = g.edges().to_vec();
        let walk_vertex = g.vertices_in(Mode::Walk).next().unwrap();
        let pt_edge = g.service_edges(Mode::Pt)[0];
        edges[pt_edge].head = walk_vertex;
        let broken = MultimodalGraph::from_parts(g.vertices().to_vec(), edges).unwrap();
        let report = validate(&broken);
        assert_eq!(report.len(), 1, "{report}");
        assert_eq!(report.violations[0].subject, format!("edge {pt_edge}"));
    }

    #[test]
    fn walk_to_walk_transfer_is_reported() {
        let g = grid(1, 2, 0);
        let mut edges = g.edges().to_vec();
        edges.push(Edge {
            id: edges.len(),
            tail: 0,
            head: 1,
            kind: EdgeKind::Transfer {
                from: Mode::Walk,
                to: Mode::Walk,
            },
            label: EdgeLabel::default(),
        });
        let broken = MultimodalGraph::from_parts(g.vertices().to_vec(), edges).unwrap();
        let report = validate(&broken);
        assert_eq!(report.len(), 1, "{report}");
        assert!(report.violations[0].message.contains("cross layers"));
    }

    #[test]
    fn transfer_edge_queries() {
        let g = grid(3, 3, 0);
        let ids = transfer_edges(&g, Mode::Walk, Mode::Taxi).unwrap();
        assert_eq!(ids.len(), 9);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        for id in ids {
            assert_eq!(
                g.edge(id).kind,
                EdgeKind::Transfer {
                    from: Mode::Walk,
                    to: Mode::Taxi
                }
            );
        }
        assert!(matches!(transfer_edges(&g, Mode::Pt, Mode::Pt), Err(Error::Domain(_))));

        let no_pt = GridParams {
            pt_rows: Some(vec![]),
            pt_cols: Some(vec![]),
            ..GridParams::default()
        };
        let g = build_grid_scenario(2, 2, &no_pt, 0).unwrap();
        assert!(transfer_edges(&g, Mode::Taxi, Mode::Pt).unwrap().is_empty());
    }

    #[test]
    fn json_keys_are_sorted_and_round_trip() {
        let g = grid(2, 3, 4);
        let json = g.to_json().unwrap();
        let back = MultimodalGraph::from_json(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json().unwrap(), json);
        let first_edge = json.find("\"V\"").unwrap();
        assert!(json[first_edge..].find("\"c\"").unwrap() > 0);
    }

    #[test]
    fn closed_transfer_round_trips_through_null() {
        let g = grid(1, 2, 0);
        let wt = g.transfer_edges(Mode::Walk, Mode::Taxi).unwrap()[0];
        let closed = g.map_labels(|e| {
            let mut l = e.label;
            if e.id == wt {
                l.fixed_time = f64::INFINITY;
            }
            l
        });
        assert!(validate(&closed).is_empty());
        let back = MultimodalGraph::from_json(&closed.to_json().unwrap()).unwrap();
        assert_eq!(back.edge(wt).label.fixed_time, f64::INFINITY);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = (usize, usize, GridParams, u64)> {
            (
                1usize..5,
                1usize..5,
                0.2f64..3.0,
                0.0f64..0.5,
                1.0f64..50.0,
                1.0f64..500.0,
                any::<u64>(),
            )
                .prop_map(|(rows, cols, spacing, jitter, speed, cap, seed)| {
                    let p = GridParams {
                        spacing_km: spacing,
                        length_jitter: jitter,
                        taxi_speed_kmh: speed,
                        taxi_capacity: cap,
                        ..GridParams::default()
                    };
                    (rows, cols, p, seed)
                })
        }

        proptest! {
            #[test]
            fn generated_grids_validate((rows, cols, p, seed) in params()) {
                let g = build_grid_scenario(rows, cols, &p, seed).unwrap();
                let report = validate(&g);
                prop_assert!(report.is_empty(), "{}", report);
            }

            #[test]
            fn edge_classes_partition_the_edge_set((rows, cols, p, seed) in params()) {
                let g = build_grid_scenario(rows, cols, &p, seed).unwrap();
                let mut seen = vec![0usize; g.num_edges()];
                for m in Mode::ALL {
                    for &e in g.service_edges(m) {
                        seen[e] += 1;
                    }
                    for to in Mode::ALL {
                        if m == to { continue; }
                        for e in transfer_edges(&g, m, to).unwrap() {
                            prop_assert_eq!(g.edge(e).kind, EdgeKind::Transfer { from: m, to });
                            seen[e] += 1;
                        }
                    }
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
            }

            #[test]
            fn save_load_round_trip((rows, cols, p, seed) in params()) {
                let g = build_grid_scenario(rows, cols, &p, seed).unwrap();
                let back = MultimodalGraph::from_json(&g.to_json().unwrap()).unwrap();
                prop_assert_eq!(back, g);
            }
        }
    }
}
