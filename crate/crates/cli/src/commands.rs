use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde_json::{json, Value};

use mobgame::assignment::{edge_times, solve_ue, FlowState};
use mobgame::baselines::{genetic_algorithm, random_search};
use mobgame::demand::UserClass;
use mobgame::equilibrium::dataset::{read_dataset, sample_mne_dataset, write_dataset, DatasetRecord, SamplingParams};
use mobgame::equilibrium::surrogate::{fit_surrogate, normalized_rmse, SurrogateModel};
use mobgame::equilibrium::seek_mne;
use mobgame::municipality::{
    optimize_policy, Outcome, Policy, PolicyObjective, PolicyRun, SurrogateEvaluator,
};
use mobgame::network::MultimodalGraph;
use mobgame::operators::{FlowSummary, PtStrategy, TxStrategy};
use mobgame::scenario::{PolicySpec, Scenario};

use crate::output::{num, opt, OutDir, Stamp};
use crate::{Common, EvaluatorKind, Failure, MethodArg};

struct Run {
    scenario: Scenario,
    stamp: Stamp,
    out: OutDir,
    started: Instant,
}

fn setup(common: &Common, command: &'static str) -> Result<Run, Failure> {
    let started = Instant::now();
    let bytes = std::fs::read(&common.scenario)
        .map_err(|e| Failure::input(format!("cannot read scenario {}: {e}", common.scenario.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Failure::input("scenario is not UTF-8"))?;
    let scenario = Scenario::from_json(&text)?;
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Failure::input("--workers must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(e.to_string()))?;
    }
    let seed = common.seed.unwrap_or(scenario.spec.seed);
    Ok(Run {
        stamp: Stamp::new(command, seed, &bytes),
        out: OutDir::create(&common.out)?,
        scenario,
        started,
    })
}

impl Run {
    fn seed(&self) -> u64 {
        self.stamp.seed
    }

    fn wall(&self, common: &Common) -> Value {
        if common.record_time {
            json!({ "wall_time_ms": self.started.elapsed().as_millis() as u64 })
        } else {
            json!({})
        }
    }
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut a, b) {
        a.extend(b);
    }
    a
}

fn write_flows(out: &OutDir, stamp: &Stamp, graph: &MultimodalGraph, flows: &FlowState) -> Result<(), Failure> {
    let times = edge_times(graph, flows);
    let rows = graph.edges().iter().flat_map(|e| {
        let t = times[e.id];
        UserClass::ALL.into_iter().map(move |c| {
            vec![
                e.id.to_string(),
                c.name().to_string(),
                num(flows.by_class[c.index()][e.id]),
                num(t),
                num(e.label.price),
            ]
        })
    });
    out.csv("flows.csv", stamp, &["edge_id", "class", "flow", "time", "price"], rows)
}

pub fn assign(common: &Common, epsilon: Option<f64>, max_iter: Option<usize>) -> Result<(), Failure> {
    let run = setup(common, "assign")?;
    let s = &run.scenario;
    let mut ue = s.spec.solver.ue;
    if let Some(e) = epsilon {
        ue.epsilon = e;
    }
    if let Some(m) = max_iter {
        ue.max_iterations = m;
    }
    let graph = s.labeled_graph();
    let sol = solve_ue(&graph, &s.demand, &ue)?;
    write_flows(&run.out, &run.stamp, &graph, &sol.flows)?;
    let rows = sol.trace.iter().map(|r| {
        vec![
            r.iteration.to_string(),
            num(r.beckmann),
            num(r.tstc),
            num(r.sptc),
            num(r.rel_gap),
            num(r.alpha),
        ]
    });
    run.out.csv(
        "assign_trace.csv",
        &run.stamp,
        &["iteration", "beckmann", "tstc", "sptc", "rel_gap", "alpha"],
        rows,
    )?;
    let g = &sol.gap;
    run.out.json(
        "summary.json",
        &run.stamp,
        merge(
            json!({
                "epsilon": ue.epsilon,
                "max_iterations": ue.max_iterations,
                "gap": g,
                "total_demand": s.demand.total_volume(),
            }),
            run.wall(common),
        ),
    )?;
    println!(
        "assign: {} iterations, rel_gap {:.3e}, tstc {:.6}, converged {}",
        g.iterations, g.rel_gap, g.tstc, g.converged
    );
    if !g.converged {
        return Err(Failure::solver(format!(
            "relative gap {:.3e} above {:.1e} after {} iterations",
            g.rel_gap, ue.epsilon, g.iterations
        )));
    }
    Ok(())
}

fn strategies_json(pt: &PtStrategy, tx: &TxStrategy) -> Value {
    json!({ "pt": pt, "tx": tx })
}

pub fn mne(
    common: &Common,
    eta: Option<f64>,
    delta: Option<f64>,
    iters: Option<usize>,
    rounds: Option<usize>,
) -> Result<(), Failure> {
    let run = setup(common, "mne")?;
    let s = &run.scenario;
    let market = s.market()?;
    let op = s.operators()?;
    let mut zo = s.spec.solver.zo;
    zo.seed = run.seed();
    zo.eta = eta.unwrap_or(zo.eta);
    zo.delta = delta.unwrap_or(zo.delta);
    zo.iterations = iters.unwrap_or(zo.iterations);
    zo.rounds = rounds.unwrap_or(zo.rounds);
    let z = s.spec.policy.as_ref().map_or(Policy::neutral(), |p| p.initial);
    let eq = seek_mne(&market, &z, &op.initial.pt, &op.initial.tx, &zo)?;

    let rows = eq.trace.iter().map(|r| {
        let mut row = vec![
            r.round.to_string(),
            if r.player == 0 { "pt" } else { "tx" }.to_string(),
            r.iteration.to_string(),
        ];
        row.extend((0..TxStrategy::DIM).map(|i| r.x.get(i).map_or(String::new(), |v| num(*v))));
        row.extend([num(r.f_plus), num(r.f_minus), r.exact.to_string()]);
        row
    });
    run.out.csv(
        "mne_trace.csv",
        &run.stamp,
        &["round", "operator", "iteration", "x1", "x2", "x3", "x4", "x5", "f_plus", "f_minus", "exact"],
        rows,
    )?;
    write_flows(&run.out, &run.stamp, &eq.state.graph, &eq.state.solution.flows)?;
    run.out.json(
        "summary.json",
        &run.stamp,
        merge(
            json!({
                "zo": zo,
                "policy": z,
                "strategies": strategies_json(&eq.pt, &eq.tx),
                "flow_summary": eq.state.summary,
                "objective_pt": eq.state.objective_pt,
                "objective_tx": eq.state.objective_tx,
                "gap": eq.state.solution.gap,
                "converged": eq.converged,
                "inexact_evaluations": eq.inexact_evaluations,
            }),
            run.wall(common),
        ),
    )?;
    println!(
        "mne: pt {:?}\n     tx {:?}\n     e12 {:.4}, converged {}",
        eq.pt.to_vec(),
        eq.tx.to_vec(),
        eq.state.summary.e12,
        eq.converged
    );
    if !eq.state.solution.converged() {
        return Err(Failure::solver("traveler equilibrium at the final strategies did not converge"));
    }
    Ok(())
}

fn check_dataset_stamp(path: &Path, stamp: &Stamp) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or_default();
    if format!("{first}\n") != stamp.comment() {
        return Err(Failure::input(format!(
            "{} was written for a different scenario, seed or version; refusing to resume",
            path.display()
        )));
    }
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(read_dataset(file)?)
}

pub fn dataset(common: &Common, n: Option<usize>, resume: bool) -> Result<(), Failure> {
    let run = setup(common, "dataset")?;
    let s = &run.scenario;
    let market = s.market()?;
    let op = s.operators()?;
    let pol = s.policy()?;
    let sampling = SamplingParams {
        n_samples: n.unwrap_or(s.spec.solver.sampling.n_samples),
        seed: run.seed(),
        ..s.spec.solver.sampling
    };
    if sampling.n_samples == 0 {
        return Err(Failure::input("the dataset needs at least one sample"));
    }
    let path = run.out.path("dataset.csv");
    let existing = if resume && path.exists() {
        check_dataset_stamp(&path, &run.stamp)?;
        load_records(&path)?
    } else {
        Vec::new()
    };
    let batch = sample_mne_dataset(
        &market,
        &pol.bounds,
        &pol.municipal,
        (&op.initial.pt, &op.initial.tx),
        &s.spec.solver.evaluator_zo(),
        &sampling,
        &existing,
    )?;
    let mut body = Vec::new();
    write_dataset(&batch.records, &mut body)?;
    run.out.raw("dataset.csv", &run.stamp, &body)?;
    let failures: Vec<Value> = batch
        .failures
        .iter()
        .map(|(i, e)| json!({ "sample_id": i, "error": e }))
        .collect();
    run.out.json(
        "summary.json",
        &run.stamp,
        merge(
            json!({
                "n_samples": sampling.n_samples,
                "random_start": sampling.random_start,
                "records": batch.records.len(),
                "resumed": existing.len(),
                "unconverged": batch.records.iter().filter(|r| !r.converged).count(),
                "failures": failures,
            }),
            run.wall(common),
        ),
    )?;
    println!(
        "dataset: {} records ({} resumed), {} failures",
        batch.records.len(),
        existing.len(),
        batch.failures.len()
    );
    if !batch.failures.is_empty() {
        return Err(Failure::solver(format!("{} samples failed", batch.failures.len())));
    }
    Ok(())
}

pub fn output_names() -> Vec<String> {
    let mut names: Vec<String> = PtStrategy::NAMES.iter().map(|n| format!("pt_{n}")).collect();
    names.extend(TxStrategy::NAMES.iter().map(|n| format!("tx_{n}")));
    names.extend(FlowSummary::NAMES.iter().map(|n| n.to_string()));
    names.push("j_sw".into());
    names
}

pub fn train(common: &Common, dataset: &Path, holdout: f64) -> Result<(), Failure> {
    let run = setup(common, "train")?;
    if !(0.0..1.0).contains(&holdout) {
        return Err(Failure::input("--holdout must lie in [0, 1)"));
    }
    let mut records = load_records(dataset)?;
    records.sort_by_key(|r| r.sample_id);
    let n_train = ((records.len() as f64) * (1.0 - holdout)).round() as usize;
    let (fit, valid) = records.split_at(n_train.min(records.len()));
    let xs: Vec<Vec<f64>> = fit.iter().map(DatasetRecord::input).collect();
    let ys: Vec<Vec<f64>> = fit.iter().map(DatasetRecord::output).collect();
    let params = mobgame::equilibrium::surrogate::TrainParams {
        seed: run.seed(),
        ..run.scenario.spec.solver.train
    };
    let model = fit_surrogate(&xs, &ys, &params)?;

    let validation = if valid.is_empty() {
        Value::Null
    } else {
        let pred: Vec<Vec<f64>> = valid.iter().map(|r| model.predict(&r.input())).collect();
        let truth: Vec<Vec<f64>> = valid.iter().map(DatasetRecord::output).collect();
        let per_column = normalized_rmse(&pred, &truth);
        let strategy: Vec<f64> = per_column[..PtStrategy::DIM + TxStrategy::DIM].iter().flatten().copied().collect();
        let columns: serde_json::Map<String, Value> = output_names()
            .into_iter()
            .zip(&per_column)
            .map(|(n, v)| (n, json!(v)))
            .collect();
        json!({
            "samples": valid.len(),
            "nrmse": columns,
            "strategy_nrmse_mean": if strategy.is_empty() { None } else { Some(strategy.iter().sum::<f64>() / strategy.len() as f64) },
        })
    };
    run.out.json("model.json", &run.stamp, json!({ "model": model }))?;
    run.out.json(
        "summary.json",
        &run.stamp,
        merge(
            json!({
                "dataset": dataset.display().to_string(),
                "train_params": params,
                "training_samples": fit.len(),
                "training_loss": model.training_loss,
                "constant_predictor": model.constant,
                "validation": validation,
            }),
            run.wall(common),
        ),
    )?;
    println!(
        "train: {} samples, loss {:.4e}{}",
        fit.len(),
        model.training_loss,
        if model.constant { " (constant predictor)" } else { "" }
    );
    Ok(())
}

/// Reads a model written by `train`.
pub fn load_model(path: &Path) -> Result<SurrogateModel, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let model = doc
        .get("model")
        .cloned()
        .ok_or_else(|| Failure::input(format!("{} has no `model` entry", path.display())))?;
    serde_json::from_value(model).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub struct OptimizeArgs {
    pub method: MethodArg,
    pub evaluator: EvaluatorKind,
    pub model: Option<PathBuf>,
    pub budget: Option<usize>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub iters: Option<usize>,
}

/// Records when each evaluation finished.
struct Timed<'a> {
    inner: &'a dyn PolicyObjective,
    start: Instant,
    done: Mutex<Vec<u64>>,
}

impl PolicyObjective for Timed<'_> {
    fn evaluate(&self, z: &Policy) -> mobgame::Result<f64> {
        let j = self.inner.evaluate(z);
        self.done.lock().expect("not poisoned").push(self.start.elapsed().as_millis() as u64);
        j
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

fn outcome_json(o: &Outcome) -> Value {
    json!({
        "strategies": strategies_json(&o.pt, &o.tx),
        "flow_summary": o.summary,
        "components": o.components,
        "j": o.j,
        "converged": o.converged,
    })
}

pub fn optimize(common: &Common, args: &OptimizeArgs) -> Result<(), Failure> {
    let run = setup(common, "optimize")?;
    let s = &run.scenario;
    let pol = s.policy()?;
    let op = s.operators()?;
    let solver = &s.spec.solver;
    let budget = match (args.method, args.iters) {
        (MethodArg::Feedback, Some(it)) => 2 * it,
        _ => args.budget.unwrap_or(solver.budget()),
    };
    if budget == 0 || (args.method == MethodArg::Feedback && budget < 2) {
        return Err(Failure::input("the evaluation budget is too small for the chosen method"));
    }

    let exact = match args.evaluator {
        EvaluatorKind::Exact => Some(s.exact_evaluator()?),
        EvaluatorKind::Surrogate => None,
    };
    let surrogate = match args.evaluator {
        EvaluatorKind::Surrogate => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Failure::input("--evaluator surrogate needs --model"))?;
            Some(SurrogateEvaluator::new(load_model(path)?, op.bounds, pol.municipal)?)
        }
        EvaluatorKind::Exact => None,
    };
    let objective: &dyn PolicyObjective = match (&exact, &surrogate) {
        (Some(e), _) => e,
        (_, Some(m)) => m,
        _ => unreachable!("one evaluator is always built"),
    };
    let timed = Timed {
        inner: objective,
        start: Instant::now(),
        done: Mutex::new(Vec::new()),
    };
    let seed = run.seed();
    let z0 = pol.initial;
    let result: PolicyRun = match args.method {
        MethodArg::Feedback => optimize_policy(
            &z0,
            &timed,
            &pol.bounds,
            args.eta.unwrap_or(solver.policy.eta),
            args.delta.unwrap_or(solver.policy.delta),
            budget / 2,
            seed,
        )?,
        MethodArg::Ga => genetic_algorithm(&timed, &pol.bounds, &solver.ga, budget, seed, Some(&z0))?,
        MethodArg::Random => random_search(&timed, &pol.bounds, budget, seed, Some(&z0))?,
    };
    let mut done = timed.done.into_inner().expect("not poisoned");
    done.sort_unstable();

    let evaluator_name = objective.name().to_string();
    let rows = result.trace.iter().map(|r| {
        let wall = if common.record_time {
            done.get(r.evaluations.saturating_sub(1)).copied().unwrap_or(0)
        } else {
            0
        };
        let mut row = vec![r.method.name().to_string(), r.iteration.to_string(), r.evaluations.to_string()];
        row.extend(r.z.to_vec().into_iter().map(num));
        row.extend([
            opt(r.j_plus),
            opt(r.j_minus),
            num(r.j_best),
            r.skipped.to_string(),
            evaluator_name.clone(),
            wall.to_string(),
        ]);
        row
    });
    let mut header = vec!["method", "iteration", "evaluations"];
    header.extend(Policy::NAMES);
    header.extend(["j_plus", "j_minus", "j_best", "skipped", "evaluator", "wallclock_ms"]);
    run.out.csv("policy_trace.csv", &run.stamp, &header, rows)?;

    let best_outcome = match (&exact, &surrogate) {
        (Some(e), _) => e.outcome(&result.best).ok().map(|o| outcome_json(&o)),
        (_, Some(m)) => Some(outcome_json(&m.outcome(&result.best))),
        _ => None,
    };
    run.out.json(
        "summary.json",
        &run.stamp,
        merge(
            json!({
                "method": result.trace.first().map(|r| r.method.name()),
                "evaluator": evaluator_name,
                "budget": budget,
                "evaluations": result.evaluations,
                "skipped": result.trace.iter().filter(|r| r.skipped).count(),
                "best_j": result.best_j,
                "best_outcome": best_outcome,
                "last": result.last,
                "policy": PolicySpec {
                    bounds: pol.bounds,
                    initial: result.best,
                    municipal: pol.municipal,
                },
            }),
            run.wall(common),
        ),
    )?;
    println!(
        "optimize: best J {:.4} after {} evaluations\n          z {:?}",
        result.best_j,
        result.evaluations,
        result.best.to_vec()
    );
    if !result.best_j.is_finite() {
        return Err(Failure::solver("no policy evaluation succeeded"));
    }
    Ok(())
}
