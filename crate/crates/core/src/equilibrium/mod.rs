//! Operator-level Nash seeking and a learned approximation of its outcome.

pub mod dataset;
pub mod surrogate;
pub mod zo;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve_ue_warm, UeParams, UeSolution};
use crate::demand::Demand;
use crate::error::{Error, Result};
use crate::municipality::Policy;
use crate::network::MultimodalGraph;
use crate::operators::{
    apply_strategies, cost_pt, objective_pt_from, objective_tx_from, project_pt, project_tx, summarize_flows,
    AccessParams, FlowSummary, OperatorCostParams, PtStrategy, StrategyBounds, TxStrategy,
};

pub use zo::{two_point_gradient, zo_step, ZoParams, ZoStep};

/// Objective value of one player together with whatever the evaluation
/// produced that can warm-start the next one.
#[derive(Clone, Debug)]
pub struct Evaluated<R> {
    pub value: f64,
    pub response: R,
    /// False when the value came from an unconverged inner solve.
    pub exact: bool,
}

/// A game whose players each minimize a black-box objective over a set
/// they can project onto.
pub trait Game: Sync {
    type Response: Clone + Send + Sync;

    fn num_players(&self) -> usize;

    /// Per-coordinate scale of the normalized search frame.
    fn scale(&self, player: usize) -> Vec<f64>;

    fn project(&self, player: usize, x: &[f64]) -> Vec<f64>;

    fn evaluate(
        &self,
        player: usize,
        profile: &[Vec<f64>],
        warm: Option<&Self::Response>,
    ) -> Result<Evaluated<Self::Response>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashTraceRow {
    pub round: usize,
    pub player: usize,
    pub iteration: usize,
    /// The player's strategy after the step.
    pub x: Vec<f64>,
    pub f_plus: f64,
    pub f_minus: f64,
    pub exact: bool,
}

#[derive(Clone, Debug)]
pub struct NashRun<R> {
    pub profile: Vec<Vec<f64>>,
    pub trace: Vec<NashTraceRow>,
    pub converged: bool,
    /// Evaluations that used an unconverged inner solve.
    pub inexact_evaluations: usize,
    /// Warm-start state left by the last evaluation.
    pub last_response: Option<R>,
}

/// Round-robin projected two-point descent: in every round each player in
/// index order takes `iterations` steps against the others' fixed strategies.
pub fn seek_nash<G: Game>(game: &G, x0: &[Vec<f64>], params: &ZoParams) -> Result<NashRun<G::Response>> {
    params.validate()?;
    if x0.len() != game.num_players() {
        return Err(Error::domain("initial profile does not match the number of players"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut profile: Vec<Vec<f64>> = x0.iter().enumerate().map(|(k, x)| game.project(k, x)).collect();
    let scales: Vec<Vec<f64>> = (0..game.num_players()).map(|k| game.scale(k)).collect();
    let mut trace = Vec::new();
    let mut warm: Option<G::Response> = None;
    let mut inexact = 0;
    let mut last_change = f64::INFINITY;

    for round in 0..params.rounds {
        let start = profile.clone();
        for k in 0..game.num_players() {
            let project = |x: &[f64]| game.project(k, x);
            for t in 0..params.iterations {
                let x = profile[k].clone();
                let mut plus_response = None;
                let step = zo_step(&x, &scales[k], params.eta, params.delta, &mut rng, &project, |plus, minus| {
                    let with = |xk: &[f64]| {
                        let mut p = profile.clone();
                        p[k] = xk.to_vec();
                        p
                    };
                    let (pp, pm) = (with(plus), with(minus));
                    let (a, b) = rayon::join(
                        || game.evaluate(k, &pp, warm.as_ref()),
                        || game.evaluate(k, &pm, warm.as_ref()),
                    );
                    let (a, b) = (a?, b?);
                    let exact = a.exact && b.exact;
                    let values = (a.value, b.value);
                    plus_response = Some((a.response, exact));
                    Ok(values)
                })?;
                let (response, exact) = plus_response.expect("evaluated");
                if !exact {
                    inexact += 1;
                }
                warm = Some(response);
                profile[k] = step.next;
                trace.push(NashTraceRow {
                    round,
                    player: k,
                    iteration: t,
                    x: profile[k].clone(),
                    f_plus: step.f_plus,
                    f_minus: step.f_minus,
                    exact,
                });
            }
        }
        last_change = profile
            .iter()
            .zip(&start)
            .zip(&scales)
            .flat_map(|((a, b), s)| a.iter().zip(b).zip(s).map(|((a, b), s)| (a - b).abs() / s))
            .fold(0.0, f64::max);
    }
    Ok(NashRun {
        profile,
        trace,
        converged: last_change < params.tolerance,
        inexact_evaluations: inexact,
        last_response: warm,
    })
}

/// Everything about the transport market that stays fixed while operators
/// and the municipality adjust their decisions.
#[derive(Clone, Debug)]
pub struct Market {
    pub template: MultimodalGraph,
    pub demand: Demand,
    pub bounds: StrategyBounds,
    pub costs: OperatorCostParams,
    pub access: AccessParams,
    pub ue: UeParams,
}

/// Operator outcome at fixed strategies: labeled network, traveler
/// equilibrium and the aggregates objectives are computed from.
#[derive(Clone, Debug)]
pub struct MarketState {
    pub graph: MultimodalGraph,
    pub solution: UeSolution,
    pub summary: FlowSummary,
    pub objective_pt: f64,
    pub objective_tx: f64,
}

impl Market {
    pub fn evaluate(
        &self,
        pt: &PtStrategy,
        tx: &TxStrategy,
        z: &Policy,
        warm: Option<&UeSolution>,
    ) -> Result<MarketState> {
        let graph = apply_strategies(&self.template, pt, tx, &self.access);
        let solution = solve_ue_warm(&graph, &self.demand, &self.ue, warm)?;
        let summary = summarize_flows(&graph, &solution.flows);
        let objective_pt = objective_pt_from(pt, &summary, cost_pt(pt, &graph, &self.costs), z);
        let objective_tx = objective_tx_from(tx, &summary, &self.costs, z);
        Ok(MarketState {
            graph,
            solution,
            summary,
            objective_pt,
            objective_tx,
        })
    }
}

struct MarketGame<'a> {
    market: &'a Market,
    z: &'a Policy,
}

impl Game for MarketGame<'_> {
    type Response = UeSolution;

    fn num_players(&self) -> usize {
        2
    }

    fn scale(&self, player: usize) -> Vec<f64> {
        match player {
            0 => self.market.bounds.pt_upper().to_vec(),
            _ => self.market.bounds.tx_upper(self.market.bounds.tx_fleet_scale).to_vec(),
        }
    }

    fn project(&self, player: usize, x: &[f64]) -> Vec<f64> {
        match player {
            0 => project_pt(&PtStrategy::from_slice(x), &self.market.bounds).to_vec(),
            _ => project_tx(&TxStrategy::from_slice(x), &self.market.bounds, self.z.license).to_vec(),
        }
    }

    fn evaluate(&self, player: usize, profile: &[Vec<f64>], warm: Option<&UeSolution>) -> Result<Evaluated<UeSolution>> {
        let pt = PtStrategy::from_slice(&profile[0]);
        let tx = TxStrategy::from_slice(&profile[1]);
        let s = self.market.evaluate(&pt, &tx, self.z, warm)?;
        Ok(Evaluated {
            value: if player == 0 { s.objective_pt } else { s.objective_tx },
            exact: s.solution.converged(),
            response: s.solution,
        })
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub pt: PtStrategy,
    pub tx: TxStrategy,
    pub state: MarketState,
    pub trace: Vec<NashTraceRow>,
    pub converged: bool,
    pub inexact_evaluations: usize,
}

/// Operator equilibrium under policy `z`, starting from `(pt0, tx0)`.
pub fn seek_mne(
    market: &Market,
    z: &Policy,
    pt0: &PtStrategy,
    tx0: &TxStrategy,
    zo: &ZoParams,
) -> Result<EquilibriumResult> {
    let game = MarketGame { market, z };
    let run = seek_nash(&game, &[pt0.to_vec(), tx0.to_vec()], zo)?;
    let pt = PtStrategy::from_slice(&run.profile[0]);
    let tx = TxStrategy::from_slice(&run.profile[1]);
    let state = market.evaluate(&pt, &tx, z, run.last_response.as_ref())?;
    Ok(EquilibriumResult {
        pt,
        tx,
        state,
        trace: run.trace,
        converged: run.converged,
        inexact_evaluations: run.inexact_evaluations,
    })
}
