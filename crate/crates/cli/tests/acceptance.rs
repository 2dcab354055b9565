//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mobgame::assignment::oracle::{brute_force_ue, wardrop_violation, DEFAULT_PATH_CAP};
use mobgame::assignment::{edge_times, solve_ue, UeParams};
use mobgame::baselines::{genetic_algorithm, random_search};
use mobgame::demand::{generate_demand, DemandParams, ValueOfTime};
use mobgame::equilibrium::dataset::{sample_mne_dataset, DatasetRecord};
use mobgame::equilibrium::surrogate::{fit_surrogate, normalized_rmse};
use mobgame::equilibrium::zo::gaussian_direction;
use mobgame::equilibrium::{seek_mne, seek_nash, two_point_gradient, zo_step, Evaluated, Game, ZoParams};
use mobgame::municipality::{optimize_policy, Policy, PolicyObjective, SurrogateEvaluator};
use mobgame::network::{build_grid_scenario, EdgeKind, GridParams, Mode};
use mobgame::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pigou() -> Verdict {
    let s = scenario("pigou");
    let g = s.labeled_graph();
    let t = Instant::now();
    let sol = solve_ue(&g, &s.demand, &UeParams::default()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let total = s.demand.total_volume();
    let err = (sol.flows.total[3] - 100.0).abs().max((sol.flows.total[0] - 50.0).abs());
    check(
        err <= 0.01 * total && sol.gap.rel_gap < 1e-4 && elapsed < Duration::from_secs(1),
        format!(
            "y_B {:.4} y_A {:.4} rel_gap {:.2e} in {elapsed:?}",
            sol.flows.total[3], sol.flows.total[0], sol.gap.rel_gap
        ),
    )
}

const ORACLE_INSTANCES: [&str; 3] = ["pigou", "classes", "corridor"];

fn oracle_equivalence() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ORACLE_INSTANCES {
        let s = scenario(name);
        let g = s.labeled_graph();
        let fw = solve_ue(&g, &s.demand, &UeParams::default()).map_err(|e| e.to_string())?;
        let bf = brute_force_ue(&g, &s.demand, 1e-3, DEFAULT_PATH_CAP).map_err(|e| e.to_string())?;
        let total = s.demand.total_volume();
        let worst = fw.flows.total.iter().zip(&bf.flows.total).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ok &= worst <= 0.01 * total;
        parts.push(format!("{name} {:.3}%", 100.0 * worst / total));
    }
    check(ok, format!("max edge-flow deviation: {}", parts.join(", ")))
}

fn wardrop() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ORACLE_INSTANCES {
        let s = scenario(name);
        let g = s.labeled_graph();
        let params = UeParams::default();
        let fw = solve_ue(&g, &s.demand, &params).map_err(|e| e.to_string())?;
        let times = edge_times(&g, &fw.flows);
        let v = wardrop_violation(&g, &s.demand, &times, &fw.path_flows, 1e-6 * s.demand.total_volume())
            .map_err(|e| e.to_string())?;
        ok &= fw.converged() && v <= 10.0 * params.epsilon;
        parts.push(format!("{name} {v:.2e}"));
    }
    check(ok, format!("worst relative excess cost of used paths: {}", parts.join(", ")))
}

fn descent() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_rise: f64 = 0.0;
    for case in 0..100 {
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(2..=4);
        let seed: u64 = rng.gen();
        let n = rng.gen_range(2..=12usize).min(rows * cols * (rows * cols - 1) * 3);
        let params = GridParams {
            taxi_capacity: 40.0,
            ..GridParams::default()
        };
        let g = build_grid_scenario(rows, cols, &params, seed).map_err(|e| e.to_string())?;
        let d = generate_demand(
            &g,
            &DemandParams {
                n_requests: n,
                seed,
                volume_max: 80.0,
                ..DemandParams::default()
            },
            ValueOfTime::default(),
        )
        .map_err(|e| e.to_string())?;
        let g = g.map_labels(|e| {
            let mut l = e.label;
            if let EdgeKind::Service(Mode::Taxi) = e.kind {
                l.price = 2.0 * l.distance;
            }
            l
        });
        let ue = UeParams {
            epsilon: 1e-6,
            max_iterations: 60,
            ..UeParams::default()
        };
        let sol = solve_ue(&g, &d, &ue).map_err(|e| format!("case {case}: {e}"))?;
        for w in sol.trace.windows(2) {
            let rise = (w[1].beckmann - w[0].beckmann) / w[0].beckmann.abs().max(1e-300);
            worst_rise = worst_rise.max(rise);
        }
    }
    check(
        worst_rise <= 1e-12,
        format!("100 random grids, largest relative Beckmann increase {worst_rise:.1e}"),
    )
}

fn estimator() -> Verdict {
    let a = [[3.0, 0.5, 0.2], [0.5, 2.0, -0.3], [0.2, -0.3, 1.5]];
    let b = [1.0, -2.0, 0.5];
    let f = |x: &[f64]| -> f64 {
        (0..3).map(|i| b[i] * x[i] + (0..3).map(|j| x[i] * a[i][j] * x[j]).sum::<f64>()).sum()
    };
    let x = [0.4, -1.0, 2.0];
    let truth: Vec<f64> = (0..3).map(|i| 2.0 * (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() + b[i]).collect();
    let delta = 0.01;
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mean = [0.0; 3];
    let shifted = |v: &[f64], s: f64| -> Vec<f64> { x.iter().zip(v).map(|(x, v)| x + s * v).collect() };
    for _ in 0..n {
        let v = gaussian_direction(&mut rng, 3);
        let g = two_point_gradient(f(&shifted(&v, delta)), f(&shifted(&v, -delta)), &v, delta);
        for (m, g) in mean.iter_mut().zip(g) {
            *m += g / n as f64;
        }
    }
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|t| t * t).sum::<f64>().sqrt();
    let rel = norm(&mut mean.iter().zip(&truth).map(|(m, t)| m - t)) / norm(&mut truth.iter().copied());

    let c = [1.5, -0.25, 4.0];
    let lin = |x: &[f64]| x.iter().zip(&c).map(|(x, c)| x * c).sum::<f64>() + 7.0;
    let mut lin_err: f64 = 0.0;
    for _ in 0..100 {
        let v = gaussian_direction(&mut rng, 3);
        let g = two_point_gradient(lin(&shifted(&v, delta)), lin(&shifted(&v, -delta)), &v, delta);
        let dir: f64 = v.iter().zip(&c).map(|(v, c)| v * c).sum();
        for (gi, vi) in g.iter().zip(&v) {
            lin_err = lin_err.max((gi - vi * dir).abs() / (1.0 + (vi * dir).abs()));
        }
    }
    check(
        rel < 0.05 && lin_err <= 1e-12,
        format!("quadratic mean relative error {:.2}%, linear error {lin_err:.1e}", 100.0 * rel),
    )
}

fn descend(f: &dyn Fn(&[f64]) -> f64, dim: usize, hi: f64, eta: f64, steps: usize, seed: u64) -> (Vec<f64>, f64) {
    let project = |x: &[f64]| x.iter().map(|v| v.clamp(0.0, hi)).collect::<Vec<_>>();
    let scale = vec![1.0; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; dim];
    let mut best = f(&x);
    for _ in 0..steps {
        let s = zo_step(&x, &scale, eta, 0.01, &mut rng, &project, |p, m| Ok((f(p), f(m)))).expect("finite");
        best = best.min(s.f_plus).min(s.f_minus);
        x = s.next;
    }
    (x, best)
}

fn stubs() -> Verdict {
    let one = |x: &[f64]| (x[0] - 3.0).powi(2);
    let d1: f64 = (0..10).map(|s| (descend(&one, 1, 10.0, 0.25, 200, s).0[0] - 3.0).abs()).sum::<f64>() / 10.0;
    let target = [0.2, 0.8, 0.5, 0.35, 0.65];
    let five = |x: &[f64]| x.iter().zip(&target).map(|(x, t)| (x - t).powi(2)).sum::<f64>();
    let d5 = median((0..10).map(|s| descend(&five, 5, 1.0, 0.2, 300, s).1.sqrt()).collect());
    check(
        d1 < 1e-2 && d5 < 0.1,
        format!("1-D mean distance {d1:.2e} after 200 steps, 5-D best-so-far median {d5:.3} after 300 steps"),
    )
}

struct Duopoly;

impl Game for Duopoly {
    type Response = ();

    fn num_players(&self) -> usize {
        2
    }

    fn scale(&self, _: usize) -> Vec<f64> {
        vec![1.0]
    }

    fn project(&self, _: usize, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.clamp(0.0, 5.0)).collect()
    }

    fn evaluate(&self, player: usize, p: &[Vec<f64>], _: Option<&()>) -> mobgame::Result<Evaluated<()>> {
        let (x1, x2) = (p[0][0], p[1][0]);
        let value = match player {
            0 => (x1 - 1.0).powi(2) + 0.1 * x1 * x2,
            _ => (x2 - 2.0).powi(2) + 0.1 * x1 * x2,
        };
        Ok(Evaluated {
            value,
            response: (),
            exact: true,
        })
    }
}

fn nash() -> Verdict {
    let (mut x1, mut x2) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        x1 = (1.0 - 0.05 * x2).clamp(0.0, 5.0);
        x2 = (2.0 - 0.05 * x1).clamp(0.0, 5.0);
    }
    let run = seek_nash(&Duopoly, &[vec![4.0], vec![0.0]], &ZoParams::default()).map_err(|e| e.to_string())?;
    let d = ((run.profile[0][0] - x1).powi(2) + (run.profile[1][0] - x2).powi(2)).sqrt();
    check(
        d < 0.05,
        format!(
            "reached ({:.4}, {:.4}), fixed point ({x1:.4}, {x2:.4}), distance {d:.4}",
            run.profile[0][0], run.profile[1][0]
        ),
    )
}

fn integration_incentive() -> Verdict {
    let s = scenario("grid");
    let market = s.market().map_err(|e| e.to_string())?;
    let op = s.operators().map_err(|e| e.to_string())?;
    let pol = s.policy().map_err(|e| e.to_string())?;
    let total = s.demand.total_volume();
    let top = pol.bounds.upper.sigma_tx;
    let mut gains = Vec::new();
    for seed in 0..6 {
        let zo = ZoParams {
            seed,
            ..s.spec.solver.zo
        };
        let e12 = |sigma_tx: f64| -> Result<f64, String> {
            let z = Policy {
                sigma_tx,
                ..pol.initial
            };
            let eq = seek_mne(&market, &z, &op.initial.pt, &op.initial.tx, &zo).map_err(|e| e.to_string())?;
            Ok(eq.state.summary.e12)
        };
        gains.push((e12(top)? - e12(0.0)?) / total);
    }
    let worst = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let shown: Vec<String> = gains.iter().map(|g| format!("{:+.1}%", 100.0 * g)).collect();
    check(
        worst >= 0.01,
        format!("PT-to-taxi transfer flow change as share of demand, sigma_tx 0 -> {top}: [{}]", shown.join(", ")),
    )
}

fn optimizer_comparison() -> Verdict {
    let s = scenario("grid");
    let pol = s.policy().map_err(|e| e.to_string())?;
    let exact = s.exact_evaluator().map_err(|e| e.to_string())?;
    let budget = s.spec.solver.budget();
    let search = s.spec.solver.policy;
    let t = Instant::now();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..10 {
        let err = |e: mobgame::Error| format!("seed {seed}: {e}");
        let fb = optimize_policy(&pol.initial, &exact, &pol.bounds, search.eta, search.delta, budget / 2, seed).map_err(err)?;
        let ga = genetic_algorithm(&exact, &pol.bounds, &s.spec.solver.ga, budget, seed, Some(&pol.initial)).map_err(err)?;
        let rs = random_search(&exact, &pol.bounds, budget, seed, Some(&pol.initial)).map_err(err)?;
        if fb.best_j <= ga.best_j && fb.best_j <= rs.best_j {
            wins += 1;
        }
        rows.push(format!("{:.0}/{:.0}/{:.0}", fb.best_j, ga.best_j, rs.best_j));
    }
    let elapsed = t.elapsed();
    check(
        wins >= 7 && elapsed < Duration::from_secs(30 * 60),
        format!(
            "feedback best in {wins}/10 seeds at {budget} evaluations each, {elapsed:.0?}; best J feedback/GA/random: {}",
            rows.join(" ")
        ),
    )
}

fn surrogate_fidelity() -> Verdict {
    let s = scenario("grid");
    let market = s.market().map_err(|e| e.to_string())?;
    let op = s.operators().map_err(|e| e.to_string())?;
    let pol = s.policy().map_err(|e| e.to_string())?;
    let zo = s.spec.solver.evaluator_zo();
    let sampling = s.spec.solver.sampling;
    let batch = sample_mne_dataset(
        &market,
        &pol.bounds,
        &pol.municipal,
        (&op.initial.pt, &op.initial.tx),
        &zo,
        &sampling,
        &[],
    )
    .map_err(|e| e.to_string())?;
    let mut records: Vec<DatasetRecord> = batch.records;
    records.sort_by_key(|r| r.sample_id);
    let cut = records.len() - (records.len() as f64 * 0.2).ceil() as usize;
    let (train, test) = records.split_at(cut);
    let xs: Vec<Vec<f64>> = train.iter().map(|r| r.input()).collect();
    let ys: Vec<Vec<f64>> = train.iter().map(|r| r.output()).collect();
    let model = fit_surrogate(&xs, &ys, &s.spec.solver.train).map_err(|e| e.to_string())?;
    let pred: Vec<Vec<f64>> = test.iter().map(|r| model.predict(&r.input())).collect();
    let truth: Vec<Vec<f64>> = test.iter().map(|r| r.output()).collect();
    let per_column = normalized_rmse(&pred, &truth);
    let strategy: Vec<f64> = per_column[..9].iter().flatten().copied().collect();
    let nrmse = strategy.iter().sum::<f64>() / strategy.len() as f64;

    let surrogate = SurrogateEvaluator::new(model, market.bounds, pol.municipal).map_err(|e| e.to_string())?;
    let exact = s.exact_evaluator().map_err(|e| e.to_string())?;
    let (lo, hi) = (pol.bounds.lower.to_vec(), pol.bounds.upper.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut draw = || Policy::from_slice(&lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect::<Vec<_>>());
    let pairs = 100;
    let mut agree = 0;
    for _ in 0..pairs {
        let (za, zb) = (draw(), draw());
        let de = exact.evaluate(&za).map_err(|e| e.to_string())? - exact.evaluate(&zb).map_err(|e| e.to_string())?;
        let ds = surrogate.evaluate(&za).map_err(|e| e.to_string())? - surrogate.evaluate(&zb).map_err(|e| e.to_string())?;
        if de.signum() == ds.signum() {
            agree += 1;
        }
    }
    check(
        nrmse < 0.15 && agree * 100 >= 80 * pairs,
        format!(
            "{} samples ({} failed), held-out strategy NRMSE {:.1}%, sign agreement {agree}/{pairs}",
            records.len(),
            batch.failures.len(),
            100.0 * nrmse
        ),
    )
}

fn mobgame(args: &[&str], scenario: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_mobgame"))
        .args(args)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?
        .status;
    match status.code() {
        Some(0) => Ok(()),
        code => Err(format!("`mobgame {}` exited with {code:?}", args.join(" "))),
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map(|d| {
            d.filter_map(|e| e.ok())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let root = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let grid = scenario_path("grid");
    let model_dir = root.path().join("model");
    mobgame(&["dataset", "--n", "20"], &grid, &model_dir)?;
    let data = model_dir.join("dataset.csv");
    mobgame(&["train", "--dataset", data.to_str().unwrap()], &grid, &model_dir)?;
    let model = model_dir.join("model.json");
    let data = data.to_str().unwrap();
    let model = model.to_str().unwrap();
    let commands: Vec<(&str, PathBuf, Vec<&str>)> = vec![
        ("assign", scenario_path("classes"), vec!["assign"]),
        ("mne", grid.clone(), vec!["mne"]),
        ("dataset", grid.clone(), vec!["dataset", "--n", "12"]),
        ("train", grid.clone(), vec!["train", "--dataset", data]),
        ("optimize", grid.clone(), vec!["optimize", "--budget", "20"]),
        ("optimize-ga", grid.clone(), vec!["optimize", "--method", "ga", "--budget", "20"]),
        ("optimize-random", grid.clone(), vec!["optimize", "--method", "random", "--budget", "20"]),
        (
            "optimize-surrogate",
            grid.clone(),
            vec!["optimize", "--evaluator", "surrogate", "--model", model, "--budget", "40"],
        ),
    ];
    let mut checked = 0;
    for (label, path, args) in &commands {
        let mut outputs = Vec::new();
        for workers in ["1", "1", "3"] {
            let out = root.path().join(format!("{label}-{}", outputs.len()));
            let mut full = args.clone();
            full.extend(["--workers", workers, "--seed", "11"]);
            mobgame(&full, path, &out)?;
            outputs.push(snapshot(&out));
        }
        if outputs[0].is_empty() || outputs.iter().any(|o| o != &outputs[0]) {
            return Err(format!("`{label}` outputs differ between reruns"));
        }
        checked += outputs[0].len();
    }
    Ok(format!(
        "{} commands, {checked} output files byte-identical across reruns and worker counts 1/1/3",
        commands.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("UE correctness on Pigou", pigou),
        ("oracle equivalence", oracle_equivalence),
        ("Wardrop property", wardrop),
        ("Frank-Wolfe descent", descent),
        ("two-point estimator", estimator),
        ("constrained ZO descent", stubs),
        ("Nash seeking on the duopoly", nash),
        ("integration incentive direction", integration_incentive),
        ("optimizer comparison", optimizer_comparison),
        ("surrogate fidelity", surrogate_fidelity),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
