//! Trip requests of heterogeneous traveler classes.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::network::{Mode, MultimodalGraph, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserClass {
    Commuting,
    Business,
    Leisure,
}

impl UserClass {
    pub const ALL: [UserClass; 3] = [UserClass::Commuting, UserClass::Business, UserClass::Leisure];

    pub fn index(self) -> usize {
        match self {
            UserClass::Commuting => 0,
            UserClass::Business => 1,
            UserClass::Leisure => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UserClass::Commuting => "commuting",
            UserClass::Business => "business",
            UserClass::Leisure => "leisure",
        }
    }
}

impl fmt::Display for UserClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UserClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "commuting" | "c" => Ok(UserClass::Commuting),
            "business" | "b" => Ok(UserClass::Business),
            "leisure" | "l" => Ok(UserClass::Leisure),
            other => Err(Error::domain(format!("unknown user class `{other}`"))),
        }
    }
}

/// Value of time per class in CHF/hour, indexed by `UserClass::index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueOfTime {
    pub commuting: f64,
    pub business: f64,
    pub leisure: f64,
}

impl Default for ValueOfTime {
    fn default() -> Self {
        Self {
            commuting: 19.0,
            business: 32.0,
            leisure: 12.0,
        }
    }
}

impl ValueOfTime {
    pub fn get(&self, class: UserClass) -> f64 {
        match class {
            UserClass::Commuting => self.commuting,
            UserClass::Business => self.business,
            UserClass::Leisure => self.leisure,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.commuting, self.business, self.leisure]
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        for c in UserClass::ALL {
            let v = self.get(c);
            if !(v.is_finite() && v > 0.0) {
                r.push(format!("vot {c}"), format!("value of time must be positive, got {v}"));
            }
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub class: UserClass,
    pub origin: VertexId,
    pub destination: VertexId,
    /// Travelers per hour.
    pub volume: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Demand {
    pub requests: Vec<Request>,
    pub vot: ValueOfTime,
}

impl Demand {
    pub fn new(requests: Vec<Request>, vot: ValueOfTime) -> Self {
        Self { requests, vot }
    }

    pub fn total_volume(&self) -> f64 {
        self.requests.iter().map(|r| r.volume).sum()
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(&self.requests)?)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str, vot: ValueOfTime) -> Result<Self> {
        Ok(Self::new(serde_json::from_str(s)?, vot))
    }

    /// Reads `class,origin,destination,volume` rows.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, vot: ValueOfTime) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            class: String,
            origin: VertexId,
            destination: VertexId,
            volume: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut requests = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            requests.push(Request {
                class: row.class.parse()?,
                origin: row.origin,
                destination: row.destination,
                volume: row.volume,
            });
        }
        Ok(Self::new(requests, vot))
    }

    pub fn load_csv(path: impl AsRef<Path>, vot: ValueOfTime) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, vot)
    }
}

/// Settings for synthetic demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandParams {
    pub n_requests: usize,
    /// Probability of (commuting, business, leisure).
    pub class_mix: [f64; 3],
    pub volume_min: f64,
    pub volume_max: f64,
    pub seed: u64,
}

impl Default for DemandParams {
    fn default() -> Self {
        Self {
            n_requests: 10,
            class_mix: [0.5, 0.2, 0.3],
            volume_min: 5.0,
            volume_max: 25.0,
            seed: 0,
        }
    }
}

/// Samples `n_requests` distinct (class, origin, destination) triples over
/// the walk layer with volumes uniform in `[volume_min, volume_max]`.
pub fn generate_demand(graph: &MultimodalGraph, params: &DemandParams, vot: ValueOfTime) -> Result<Demand> {
    let walk: Vec<VertexId> = graph.vertices_in(Mode::Walk).collect();
    if walk.len() < 2 {
        return Err(Error::domain(format!(
            "demand needs at least 2 walk vertices, graph has {}",
            walk.len()
        )));
    }
    let mix = params.class_mix;
    if mix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("class mix must be a probability triple, got {mix:?}")));
    }
    if !(params.volume_min > 0.0 && params.volume_max >= params.volume_min && params.volume_max.is_finite()) {
        return Err(Error::domain(format!(
            "volume range must satisfy 0 < min <= max, got [{}, {}]",
            params.volume_min, params.volume_max
        )));
    }
    let pairs = walk.len() * (walk.len() - 1);
    let open_classes = mix.iter().filter(|&&p| p > 0.0).count();
    if params.n_requests > pairs * open_classes {
        return Err(Error::domain(format!(
            "cannot draw {} distinct requests from {} origin-destination pairs",
            params.n_requests,
            pairs * open_classes
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut used = BTreeSet::new();
    let mut used_per_class = [0usize; 3];
    let mut requests = Vec::with_capacity(params.n_requests);
    while requests.len() < params.n_requests {
        let u: f64 = rng.gen();
        let class = if u < mix[0] {
            UserClass::Commuting
        } else if u < mix[0] + mix[1] {
            UserClass::Business
        } else {
            UserClass::Leisure
        };
        if mix[class.index()] == 0.0 || used_per_class[class.index()] == pairs {
            continue;
        }
        let o = walk[rng.gen_range(0..walk.len())];
        let d = walk[rng.gen_range(0..walk.len())];
        if o == d || !used.insert((class, o, d)) {
            continue;
        }
        used_per_class[class.index()] += 1;
        let volume = if params.volume_max > params.volume_min {
            rng.gen_range(params.volume_min..params.volume_max)
        } else {
            params.volume_min
        };
        requests.push(Request {
            class,
            origin: o,
            destination: d,
            volume,
        });
    }
    Ok(Demand::new(requests, vot))
}

pub fn validate_demand(demand: &Demand, graph: &MultimodalGraph) -> ValidationReport {
    let mut report = demand.vot.validate();
    let mut seen = BTreeSet::new();
    for (i, r) in demand.requests.iter().enumerate() {
        let subject = format!("request {i}");
        for (end, v) in [("origin", r.origin), ("destination", r.destination)] {
            if v >= graph.num_vertices() {
                report.push(&subject, format!("{end} {v} is not a vertex"));
            } else if graph.vertex(v).mode != Mode::Walk {
                report.push(&subject, format!("{end} {v} is not in the walk layer"));
            }
        }
        if r.origin == r.destination {
            report.push(&subject, "origin equals destination");
        }
        if !(r.volume.is_finite() && r.volume >= 0.0) {
            report.push(&subject, format!("volume must be non-negative, got {}", r.volume));
        }
        if !seen.insert((r.class, r.origin, r.destination)) {
            report.push(&subject, "duplicate (class, origin, destination) triple");
        }
    }
    report
}
