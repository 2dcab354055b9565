//! Scenario files: network, demand, operator and policy settings and solver
//! parameters in one JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assignment::UeParams;
use crate::baselines::GaParams;
use crate::demand::{generate_demand, validate_demand, Demand, DemandParams, Request, ValueOfTime};
use crate::equilibrium::dataset::SamplingParams;
use crate::equilibrium::surrogate::TrainParams;
use crate::equilibrium::{Market, ZoParams};
use crate::error::{Error, Result, ValidationReport};
use crate::municipality::{ExactEvaluator, MunicipalParams, Policy, PolicyBounds};
use crate::network::{build_grid_scenario, graph_from_value, validate, GridParams, MultimodalGraph};
use crate::operators::{
    apply_strategies, is_feasible_pt, is_feasible_tx, AccessParams, OperatorCostParams, PtStrategy, StrategyBounds,
    TxStrategy,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkSpec {
    /// Inline graph in the graph file format.
    Graph(serde_json::Value),
    Grid {
        rows: usize,
        cols: usize,
        #[serde(default)]
        params: GridParams,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DemandSpec {
    Requests(Vec<Request>),
    Generate(DemandParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStrategies {
    pub pt: PtStrategy,
    pub tx: TxStrategy,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorsSpec {
    #[serde(default)]
    pub bounds: StrategyBounds,
    #[serde(default)]
    pub costs: OperatorCostParams,
    #[serde(default)]
    pub access: AccessParams,
    pub initial: InitialStrategies,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default)]
    pub bounds: PolicyBounds,
    pub initial: Policy,
    pub municipal: MunicipalParams,
}

/// Step size, smoothing radius and seed of the policy optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySearch {
    pub eta: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Default for PolicySearch {
    fn default() -> Self {
        Self {
            eta: 0.2,
            delta: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub ue: UeParams,
    /// Operator equilibrium seeking.
    pub zo: ZoParams,
    /// Operator equilibrium seeking inside policy evaluations and dataset
    /// sampling; `zo` when absent.
    pub evaluator: Option<ZoParams>,
    pub policy: PolicySearch,
    pub ga: GaParams,
    /// Evaluation budget of a policy search; the two-point method spends
    /// two evaluations per iteration.
    pub budget: Option<usize>,
    pub sampling: SamplingParams,
    pub train: TrainParams,
}

impl SolverSpec {
    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(600)
    }

    pub fn evaluator_zo(&self) -> ZoParams {
        self.evaluator.unwrap_or(self.zo)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkSpec,
    pub demand: DemandSpec,
    #[serde(default)]
    pub vot: ValueOfTime,
    #[serde(default)]
    pub operators: Option<OperatorsSpec>,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub solver: SolverSpec,
}

/// A validated scenario with its network and demand materialized.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioFile,
    pub template: MultimodalGraph,
    pub demand: Demand,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_spec(spec: ScenarioFile) -> Result<Self> {
        let mut report = ValidationReport::new();
        let template = match &spec.network {
            NetworkSpec::Graph(v) => graph_from_value(v.clone())?,
            NetworkSpec::Grid { rows, cols, params, seed } => {
                let r = params.validate(*rows, *cols);
                if !r.is_empty() {
                    return Err(Error::Invalid(r));
                }
                build_grid_scenario(*rows, *cols, params, *seed)?
            }
        };
        report.extend(validate(&template));
        let demand = match &spec.demand {
            DemandSpec::Requests(rs) => Demand::new(rs.clone(), spec.vot),
            DemandSpec::Generate(p) => generate_demand(&template, p, spec.vot)?,
        };
        report.extend(validate_demand(&demand, &template));
        fn check(report: &mut ValidationReport, subject: &str, r: Result<()>) {
            if let Err(e) = r {
                report.push(subject, e.to_string());
            }
        }
        check(&mut report, "solver.zo", spec.solver.zo.validate());
        if let Some(zo) = &spec.solver.evaluator {
            check(&mut report, "solver.evaluator", zo.validate());
        }
        check(&mut report, "solver.ga", spec.solver.ga.validate());
        let ue = spec.solver.ue;
        if !(ue.epsilon > 0.0) || ue.max_iterations == 0 {
            report.push("solver.ue", "epsilon must be > 0 and max_iterations >= 1");
        }
        if let Some(op) = &spec.operators {
            check(&mut report, "operators.bounds", op.bounds.validate());
            check(&mut report, "operators.costs", op.costs.validate());
            if !(op.access.kappa >= 0.0 && op.access.kappa.is_finite()) {
                report.push("operators.access", "kappa must be finite and >= 0");
            }
            let license = spec.policy.as_ref().map_or(f64::INFINITY, |p| p.initial.license);
            if !is_feasible_pt(&op.initial.pt, &op.bounds) {
                report.push("operators.initial.pt", "outside the PT strategy set");
            }
            if !is_feasible_tx(&op.initial.tx, &op.bounds, license) {
                report.push("operators.initial.tx", "outside the taxi strategy set");
            }
        }
        if let Some(p) = &spec.policy {
            check(&mut report, "policy.bounds", p.bounds.validate());
            check(&mut report, "policy.municipal", p.municipal.validate());
            if p.bounds.validate().is_ok() && !p.bounds.contains(&p.initial) {
                report.push("policy.initial", "outside the policy bounds");
            }
            if spec.operators.is_none() {
                report.push("policy", "a policy section needs an operators section");
            }
        }
        report.into_result()?;
        Ok(Self { spec, template, demand })
    }

    pub fn operators(&self) -> Result<&OperatorsSpec> {
        self.spec
            .operators
            .as_ref()
            .ok_or_else(|| Error::domain(format!("scenario `{}` has no operators section", self.spec.name)))
    }

    pub fn policy(&self) -> Result<&PolicySpec> {
        self.spec
            .policy
            .as_ref()
            .ok_or_else(|| Error::domain(format!("scenario `{}` has no policy section", self.spec.name)))
    }

    /// The network travelers see: labeled by the initial strategies when
    /// the scenario has operators, the template as written otherwise.
    pub fn labeled_graph(&self) -> MultimodalGraph {
        match &self.spec.operators {
            Some(op) => apply_strategies(&self.template, &op.initial.pt, &op.initial.tx, &op.access),
            None => self.template.clone(),
        }
    }

    pub fn market(&self) -> Result<Market> {
        let op = self.operators()?;
        Ok(Market {
            template: self.template.clone(),
            demand: self.demand.clone(),
            bounds: op.bounds,
            costs: op.costs,
            access: op.access,
            ue: self.spec.solver.ue,
        })
    }

    pub fn exact_evaluator(&self) -> Result<ExactEvaluator> {
        let op = self.operators()?;
        Ok(ExactEvaluator {
            market: self.market()?,
            start: (op.initial.pt, op.initial.tx),
            zo: self.spec.solver.evaluator_zo(),
            params: self.policy()?.municipal,
        })
    }
}
