use super::{social_welfare_cost, Components, MunicipalParams, Policy, PolicyObjective};
use crate::equilibrium::surrogate::SurrogateModel;
use crate::equilibrium::{seek_mne, Market, ZoParams};
use crate::error::{Error, Result};
use crate::operators::{project_pt, project_tx, FlowSummary, PtStrategy, TxStrategy};

/// Operator response to a policy and what it means for the municipality.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub pt: PtStrategy,
    pub tx: TxStrategy,
    pub summary: FlowSummary,
    pub components: Components,
    pub j: f64,
    pub converged: bool,
}

/// Solves the operator equilibrium for every queried policy, always from
/// the same starting strategies and random stream, so `J` is a
/// deterministic function of the policy.
#[derive(Clone, Debug)]
pub struct ExactEvaluator {
    pub market: Market,
    pub start: (PtStrategy, TxStrategy),
    pub zo: ZoParams,
    pub params: MunicipalParams,
}

impl ExactEvaluator {
    pub fn outcome(&self, z: &Policy) -> Result<Outcome> {
        let eq = seek_mne(&self.market, z, &self.start.0, &self.start.1, &self.zo)?;
        let welfare = social_welfare_cost(&eq.state.solution.flows, &eq.state.graph, &self.market.demand.vot);
        let components = Components::from_summary(z, &eq.pt, &eq.tx, &eq.state.summary, welfare, &self.params);
        let j = components.objective(&self.params);
        if !j.is_finite() {
            return Err(Error::Evaluation(format!("non-finite objective at {z:?}")));
        }
        Ok(Outcome {
            pt: eq.pt,
            tx: eq.tx,
            summary: eq.state.summary,
            components,
            j,
            converged: eq.converged && eq.state.solution.converged(),
        })
    }
}

impl PolicyObjective for ExactEvaluator {
    fn evaluate(&self, z: &Policy) -> Result<f64> {
        self.outcome(z).map(|o| o.j)
    }

    fn name(&self) -> &str {
        "exact"
    }
}

/// Replaces the equilibrium solve by a trained regressor.
#[derive(Clone, Debug)]
pub struct SurrogateEvaluator {
    pub model: SurrogateModel,
    pub bounds: crate::operators::StrategyBounds,
    pub params: MunicipalParams,
}

impl SurrogateEvaluator {
    pub fn new(model: SurrogateModel, bounds: crate::operators::StrategyBounds, params: MunicipalParams) -> Result<Self> {
        if model.inputs != Policy::DIM || model.outputs != PtStrategy::DIM + TxStrategy::DIM + 8 {
            return Err(Error::domain("surrogate shape does not match policy -> equilibrium outputs"));
        }
        Ok(Self { model, bounds, params })
    }

    /// Predicted strategies (projected onto their feasible sets), flow
    /// aggregates (clamped at zero) and welfare cost.
    pub fn predict(&self, z: &Policy) -> (PtStrategy, TxStrategy, FlowSummary, f64) {
        let y = self.model.predict(&z.to_vec());
        let pt = project_pt(&PtStrategy::from_slice(&y[0..4]), &self.bounds);
        let tx = project_tx(&TxStrategy::from_slice(&y[4..9]), &self.bounds, z.license);
        let agg: Vec<f64> = y[9..16].iter().map(|v| v.max(0.0)).collect();
        (pt, tx, FlowSummary::from_slice(&agg), y[16])
    }

    pub fn outcome(&self, z: &Policy) -> Outcome {
        let (pt, tx, summary, welfare) = self.predict(z);
        let components = Components::from_summary(z, &pt, &tx, &summary, welfare, &self.params);
        Outcome {
            pt,
            tx,
            summary,
            j: components.objective(&self.params),
            components,
            converged: true,
        }
    }
}

impl PolicyObjective for SurrogateEvaluator {
    fn evaluate(&self, z: &Policy) -> Result<f64> {
        Ok(self.outcome(z).j)
    }

    fn name(&self) -> &str {
        "surrogate"
    }
}
