//! Municipal policy: taxes, taxi licenses and transfer subsidies, the
//! objective they are judged by and the optimizer that tunes them.

mod evaluator;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::FlowState;
use crate::demand::ValueOfTime;
use crate::equilibrium::zo::zo_step;
use crate::error::{Error, Result};
use crate::network::{MultimodalGraph, Mode};
use crate::operators::{revenue_pt_from, revenue_tx_from, FlowSummary, PtStrategy, TxStrategy};

pub use evaluator::{ExactEvaluator, Outcome, SurrogateEvaluator};

/// Control vector: revenue taxes, taxi license cap and per-transfer subsidies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub tau_pt: f64,
    pub tau_tx: f64,
    /// `null` in files means no cap.
    #[serde(with = "crate::network::infinite_as_null")]
    pub license: f64,
    pub sigma_pt: f64,
    pub sigma_tx: f64,
}

impl Policy {
    pub const DIM: usize = 5;
    pub const NAMES: [&'static str; 5] = ["tau_pt", "tau_tx", "lambda", "sigma_pt", "sigma_tx"];

    /// No taxes, no subsidies, a license cap that never binds.
    pub fn neutral() -> Self {
        Self {
            tau_pt: 0.0,
            tau_tx: 0.0,
            license: f64::INFINITY,
            sigma_pt: 0.0,
            sigma_tx: 0.0,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.tau_pt, self.tau_tx, self.license, self.sigma_pt, self.sigma_tx]
    }

    pub fn from_slice(z: &[f64]) -> Self {
        Self {
            tau_pt: z[0],
            tau_tx: z[1],
            license: z[2],
            sigma_pt: z[3],
            sigma_tx: z[4],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyBounds {
    pub lower: Policy,
    pub upper: Policy,
}

impl Default for PolicyBounds {
    fn default() -> Self {
        Self {
            lower: Policy {
                tau_pt: -1.0,
                tau_tx: 0.0,
                license: 0.0,
                sigma_pt: 0.0,
                sigma_tx: 0.0,
            },
            upper: Policy {
                tau_pt: 0.5,
                tau_tx: 0.5,
                license: 1000.0,
                sigma_pt: 20.0,
                sigma_tx: 20.0,
            },
        }
    }
}

impl PolicyBounds {
    /// A box with the given lower and upper corner in every coordinate.
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            lower: Policy::from_slice(&[lo; 5]),
            upper: Policy::from_slice(&[hi; 5]),
        }
    }

    pub fn widths(&self) -> Vec<f64> {
        self.upper
            .to_vec()
            .iter()
            .zip(self.lower.to_vec())
            .map(|(u, l)| u - l)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self
            .lower
            .to_vec()
            .iter()
            .zip(self.upper.to_vec())
            .all(|(l, u)| l.is_finite() && u.is_finite() && *l <= u);
        if ok {
            Ok(())
        } else {
            Err(Error::domain("policy bounds must be finite with lower <= upper"))
        }
    }

    pub fn contains(&self, z: &Policy) -> bool {
        project_policy(z, self) == *z
    }
}

/// Componentwise clamp onto the policy box.
pub fn project_policy(z: &Policy, bounds: &PolicyBounds) -> Policy {
    let lo = bounds.lower.to_vec();
    let hi = bounds.upper.to_vec();
    let v: Vec<f64> = z
        .to_vec()
        .iter()
        .enumerate()
        .map(|(i, x)| if x.is_nan() { lo[i] } else { x.clamp(lo[i], hi[i]) })
        .collect();
    Policy::from_slice(&v)
}

/// Weights of welfare, emissions and municipal revenue in the objective,
/// plus the monetized taxi emission rate (CHF/km).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MunicipalParams {
    pub weights: [f64; 3],
    pub emission_factor: f64,
}

impl MunicipalParams {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().all(|w| w.is_finite())
            && self.emission_factor.is_finite()
            && self.emission_factor >= 0.0
        {
            Ok(())
        } else {
            Err(Error::domain("weights must be finite and the emission factor >= 0"))
        }
    }
}

/// Money-unit travel cost of all travelers at congested times (CHF/h).
pub fn social_welfare_cost(flows: &FlowState, graph: &MultimodalGraph, vot: &ValueOfTime) -> f64 {
    let times = crate::assignment::edge_times(graph, flows);
    let vot = vot.as_array();
    let mut total = 0.0;
    for (i, e) in graph.edges().iter().enumerate() {
        for n in 0..3 {
            let y = flows.by_class[n][i];
            if y != 0.0 {
                total += y * (e.label.price + times[i] * vot[n]);
            }
        }
    }
    total
}

/// Monetized taxi emissions (CHF/h).
pub fn emissions(flows: &FlowState, graph: &MultimodalGraph, factor: f64) -> f64 {
    graph
        .service_edges(Mode::Taxi)
        .iter()
        .map(|&e| flows.total[e] * graph.edge(e).label.distance * factor)
        .sum()
}

/// Taxes collected minus transfer subsidies paid (CHF/h).
pub fn municipal_revenue(z: &Policy, revenue_pt: f64, revenue_tx: f64, e21: f64, e12: f64) -> f64 {
    z.tau_pt * revenue_pt + z.tau_tx * revenue_tx - z.sigma_pt * e21 - z.sigma_tx * e12
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub welfare: f64,
    pub emissions: f64,
    pub revenue: f64,
}

impl Components {
    /// Welfare cost is taken as given; the rest follows from aggregates.
    pub fn from_summary(
        z: &Policy,
        pt: &PtStrategy,
        tx: &TxStrategy,
        summary: &FlowSummary,
        welfare: f64,
        params: &MunicipalParams,
    ) -> Self {
        Self {
            welfare,
            emissions: summary.tx_pkm * params.emission_factor,
            revenue: municipal_revenue(
                z,
                revenue_pt_from(pt, summary),
                revenue_tx_from(tx, summary),
                summary.e21,
                summary.e12,
            ),
        }
    }

    pub fn objective(&self, params: &MunicipalParams) -> f64 {
        let [w1, w2, w3] = params.weights;
        -w1 * self.welfare + w2 * self.emissions - w3 * self.revenue
    }
}

/// `-w1 * welfare + w2 * emissions - w3 * revenue`; lower is better.
pub fn evaluate_j(welfare: f64, emissions: f64, revenue: f64, params: &MunicipalParams) -> f64 {
    Components {
        welfare,
        emissions,
        revenue,
    }
    .objective(params)
}

/// Anything that maps a feasible policy to its municipal objective.
pub trait PolicyObjective: Sync {
    fn evaluate(&self, z: &Policy) -> Result<f64>;

    fn name(&self) -> &str {
        "custom"
    }
}

impl<F: Fn(&Policy) -> Result<f64> + Sync> PolicyObjective for F {
    fn evaluate(&self, z: &Policy) -> Result<f64> {
        self(z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Feedback,
    Ga,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Feedback => "feedback",
            Method::Ga => "ga",
            Method::Random => "random",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feedback" => Ok(Method::Feedback),
            "ga" => Ok(Method::Ga),
            "random" => Ok(Method::Random),
            other => Err(Error::domain(format!("unknown method `{other}`"))),
        }
    }
}

/// One row of an optimizer trace. Baselines log one row per evaluation and
/// leave `j_minus` empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTraceRow {
    pub method: Method,
    pub iteration: usize,
    /// Evaluator calls made so far, this row included.
    pub evaluations: usize,
    pub z: Policy,
    pub j_plus: Option<f64>,
    pub j_minus: Option<f64>,
    pub j_best: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub best: Policy,
    pub best_j: f64,
    pub last: Policy,
    pub trace: Vec<PolicyTraceRow>,
    pub evaluations: usize,
}

/// Best-so-far bookkeeping shared by all optimizers.
#[derive(Clone, Debug)]
pub(crate) struct Incumbent {
    pub z: Policy,
    pub j: f64,
}

impl Incumbent {
    pub fn new(z: Policy) -> Self {
        Self { z, j: f64::INFINITY }
    }

    pub fn offer(&mut self, z: &Policy, j: f64) {
        if j < self.j {
            self.j = j;
            self.z = *z;
        }
    }
}

/// Projected two-point descent over the policy box, in coordinates
/// normalized by the box widths. Every probe is counted against the budget.
pub fn optimize_policy(
    z0: &Policy,
    objective: &dyn PolicyObjective,
    bounds: &PolicyBounds,
    eta: f64,
    delta: f64,
    iterations: usize,
    seed: u64,
) -> Result<PolicyRun> {
    bounds.validate()?;
    if !(eta > 0.0 && delta > 0.0) {
        return Err(Error::domain("eta and delta must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<f64> = bounds.widths().iter().map(|w| if *w > 0.0 { *w } else { 1.0 }).collect();
    let project = |x: &[f64]| project_policy(&Policy::from_slice(x), bounds).to_vec();
    let mut z = project_policy(z0, bounds);
    let mut best = Incumbent::new(z);
    let mut trace = Vec::with_capacity(iterations);
    let mut evaluations = 0;
    for t in 0..iterations {
        let mut probes = None;
        let step = zo_step(&z.to_vec(), &scale, eta, delta, &mut rng, &project, |plus, minus| {
            let (zp, zm) = (Policy::from_slice(plus), Policy::from_slice(minus));
            let (a, b) = rayon::join(|| objective.evaluate(&zp), || objective.evaluate(&zm));
            probes = Some((zp, zm, a.as_ref().ok().copied(), b.as_ref().ok().copied()));
            match (a, b) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        });
        evaluations += 2;
        let (zp, zm, jp, jm) = probes.expect("probes evaluated");
        if let Some(j) = jp {
            best.offer(&zp, j);
        }
        if let Some(j) = jm {
            best.offer(&zm, j);
        }
        let skipped = match step {
            Ok(s) => {
                z = Policy::from_slice(&s.next);
                false
            }
            Err(e) => {
                log::warn!("policy iteration {t} skipped: {e}");
                true
            }
        };
        trace.push(PolicyTraceRow {
            method: Method::Feedback,
            iteration: t,
            evaluations,
            z,
            j_plus: jp,
            j_minus: jm,
            j_best: best.j,
            skipped,
        });
    }
    Ok(PolicyRun {
        best: best.z,
        best_j: best.j,
        last: z,
        trace,
        evaluations,
    })
}
