use mobgame::assignment::UeParams;
use mobgame::demand::{generate_demand, Demand, DemandParams, ValueOfTime};
use mobgame::equilibrium::dataset::{read_dataset, sample_mne_dataset, write_dataset, SamplingParams};
use mobgame::equilibrium::zo::gaussian_direction;
use mobgame::equilibrium::{seek_mne, seek_nash, two_point_gradient, zo_step, Evaluated, Game, Market, ZoParams};
use mobgame::error::Result;
use mobgame::municipality::{MunicipalParams, Policy, PolicyBounds};
use mobgame::network::{build_grid_scenario, GridParams};
use mobgame::operators::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clamp_to(lo: f64, hi: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x: &[f64]| x.iter().map(|v| v.clamp(lo, hi)).collect()
}

#[test]
fn estimator_mean_matches_quadratic_gradient() {
    let a = [[3.0, 0.5, 0.2], [0.5, 2.0, -0.3], [0.2, -0.3, 1.5]];
    let b = [1.0, -2.0, 0.5];
    let f = |x: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            s += b[i] * x[i];
            for j in 0..3 {
                s += x[i] * a[i][j] * x[j];
            }
        }
        s
    };
    let x = [0.4, -1.0, 2.0];
    let truth: Vec<f64> = (0..3).map(|i| 2.0 * (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() + b[i]).collect();
    let delta = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let mut mean = [0.0; 3];
    for _ in 0..n {
        let v = gaussian_direction(&mut rng, 3);
        let plus: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + delta * v).collect();
        let minus: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x - delta * v).collect();
        for (m, g) in mean.iter_mut().zip(two_point_gradient(f(&plus), f(&minus), &v, delta)) {
            *m += g / n as f64;
        }
    }
    let err: f64 = mean.iter().zip(&truth).map(|(m, t)| (m - t).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    assert!(err / norm < 0.05, "relative error {}", err / norm);
}

#[test]
fn estimator_is_exact_along_the_direction_for_linear_functions() {
    let b = [1.5, -0.25, 4.0];
    let f = |x: &[f64]| x.iter().zip(&b).map(|(x, b)| x * b).sum::<f64>() + 7.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let v = gaussian_direction(&mut rng, 3);
        let x = [0.1, 0.2, 0.3];
        let plus: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + 0.01 * v).collect();
        let minus: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x - 0.01 * v).collect();
        let g = two_point_gradient(f(&plus), f(&minus), &v, 0.01);
        let dir: f64 = v.iter().zip(&b).map(|(v, b)| v * b).sum();
        for (gi, vi) in g.iter().zip(&v) {
            assert!((gi - vi * dir).abs() <= 1e-12 * (1.0 + (vi * dir).abs()));
        }
    }
}

fn descend(f: &dyn Fn(&[f64]) -> f64, x0: Vec<f64>, lo: f64, hi: f64, eta: f64, steps: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let project = clamp_to(lo, hi);
    let scale = vec![1.0; x0.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0;
    let mut best = (f(&x), x.clone());
    for _ in 0..steps {
        let s = zo_step(&x, &scale, eta, 0.01, &mut rng, &project, |p, m| Ok((f(p), f(m)))).unwrap();
        for (v, p) in [(s.f_plus, &s.plus), (s.f_minus, &s.minus)] {
            if v < best.0 {
                best = (v, p.clone());
            }
        }
        assert!(s.next.iter().all(|v| (lo..=hi).contains(v)));
        x = s.next;
    }
    (x, best.1)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

#[test]
fn constant_objective_leaves_the_iterate_unchanged() {
    let (x, _) = descend(&|_| 4.0, vec![0.3, 0.7], 0.0, 1.0, 0.5, 20, 1);
    assert_eq!(x, vec![0.3, 0.7]);
}

#[test]
fn one_dimensional_quadratic_reaches_interior_minimizer() {
    let f = |x: &[f64]| (x[0] - 3.0).powi(2);
    let mean: f64 = (0..10).map(|s| (descend(&f, vec![0.0], 0.0, 10.0, 0.25, 200, s).0[0] - 3.0).abs()).sum::<f64>() / 10.0;
    assert!(mean < 1e-2, "mean distance {mean}");
}

#[test]
fn one_dimensional_quadratic_stops_at_the_box_face() {
    let f = |x: &[f64]| (x[0] - 3.0).powi(2);
    for s in 0..10 {
        let x = descend(&f, vec![0.0], 0.0, 2.0, 0.25, 200, s).0[0];
        assert!((x - 2.0).abs() < 1e-2, "seed {s}: {x}");
    }
}

#[test]
fn five_dimensional_quadratic_best_so_far() {
    let target = [0.2, 0.8, 0.5, 0.35, 0.65];
    let f = |x: &[f64]| x.iter().zip(&target).map(|(x, t)| (x - t).powi(2)).sum::<f64>();
    let dist: Vec<f64> = (0..10)
        .map(|s| {
            let best = descend(&f, vec![0.0; 5], 0.0, 1.0, 0.2, 300, s).1;
            f(&best).sqrt()
        })
        .collect();
    assert!(median(dist.clone()) < 0.1, "{dist:?}");
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
        clamp_to(0.0, 5.0)(x)
    }

    fn evaluate(&self, player: usize, p: &[Vec<f64>], _: Option<&()>) -> Result<Evaluated<()>> {
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

fn best_response_fixed_point() -> (f64, f64) {
    let (mut x1, mut x2) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        x1 = (1.0 - 0.05 * x2).clamp(0.0, 5.0);
        x2 = (2.0 - 0.05 * x1).clamp(0.0, 5.0);
    }
    (x1, x2)
}

#[test]
fn duopoly_converges_to_the_fixed_point_oracle() {
    let (n1, n2) = best_response_fixed_point();
    assert!((n1 - 0.902256).abs() < 1e-6 && (n2 - 1.954887).abs() < 1e-6);
    let run = seek_nash(&Duopoly, &[vec![4.0], vec![0.0]], &ZoParams::default()).unwrap();
    let d = ((run.profile[0][0] - n1).powi(2) + (run.profile[1][0] - n2).powi(2)).sqrt();
    assert!(d < 0.05, "distance {d}: {:?}", run.profile);
    assert!(run.converged);
    let again = seek_nash(&Duopoly, &[vec![4.0], vec![0.0]], &ZoParams::default()).unwrap();
    assert_eq!(run.trace, again.trace);
}

fn market(demand: Demand) -> Market {
    Market {
        template: build_grid_scenario(2, 3, &GridParams::default(), 2).unwrap(),
        demand,
        bounds: StrategyBounds::default(),
        costs: OperatorCostParams::default(),
        access: AccessParams::default(),
        ue: UeParams::default(),
    }
}

fn small_zo() -> ZoParams {
    ZoParams {
        iterations: 10,
        rounds: 2,
        ..ZoParams::default()
    }
}

fn start() -> (PtStrategy, TxStrategy) {
    (
        PtStrategy {
            frequency: 8.0,
            base_fare: 3.0,
            distance_fare: 1.0,
            transfer_fare: 1.0,
        },
        TxStrategy {
            fleet: 400.0,
            base_fare: 6.0,
            distance_fare: 2.0,
            time_fare: 30.0,
            transfer_fare: 2.0,
        },
    )
}

#[test]
fn zero_demand_shrinks_the_fleet() {
    let m = market(Demand::new(vec![], ValueOfTime::default()));
    let (pt, tx) = start();
    let eq = seek_mne(&m, &Policy::neutral(), &pt, &tx, &small_zo()).unwrap();
    assert_eq!(revenue_tx(&eq.tx, &eq.state.solution.flows, &eq.state.graph), 0.0);
    assert!(eq.tx.fleet < tx.fleet, "{} vs {}", eq.tx.fleet, tx.fleet);
    assert!(eq.pt.frequency < pt.frequency);
}

#[test]
fn mne_iterates_are_feasible_and_deterministic() {
    let m = market(generate_demand(&market(Demand::new(vec![], Default::default())).template, &DemandParams::default(), Default::default()).unwrap());
    let z = Policy {
        license: 250.0,
        ..Policy::neutral()
    };
    let (pt, mut tx) = start();
    tx.fleet = 200.0;
    let a = seek_mne(&m, &z, &pt, &tx, &small_zo()).unwrap();
    let b = seek_mne(&m, &z, &pt, &tx, &small_zo()).unwrap();
    assert_eq!(a.trace, b.trace);
    for row in &a.trace {
        if row.player == 0 {
            assert!(is_feasible_pt(&PtStrategy::from_slice(&row.x), &m.bounds));
        } else {
            assert!(is_feasible_tx(&TxStrategy::from_slice(&row.x), &m.bounds, z.license));
        }
    }
}

fn municipal() -> MunicipalParams {
    MunicipalParams {
        weights: [-1.0, 1.0, 1.0],
        emission_factor: 0.1,
    }
}

#[test]
fn dataset_sampling_is_feasible_resumable_and_deterministic() {
    let tpl = market(Demand::new(vec![], Default::default())).template;
    let m = market(generate_demand(&tpl, &DemandParams::default(), Default::default()).unwrap());
    let (pt, tx) = start();
    let bounds = PolicyBounds::default();
    let sampling = SamplingParams {
        n_samples: 6,
        seed: 9,
        random_start: true,
    };
    let full = sample_mne_dataset(&m, &bounds, &municipal(), (&pt, &tx), &small_zo(), &sampling, &[]).unwrap();
    assert_eq!(full.records.len(), 6);
    assert!(full.failures.is_empty());
    for r in &full.records {
        assert!(bounds.contains(&r.z));
        assert!(is_feasible_pt(&r.pt, &m.bounds));
        assert!(is_feasible_tx(&r.tx, &m.bounds, r.z.license));
    }

    let partial = sample_mne_dataset(
        &m,
        &bounds,
        &municipal(),
        (&pt, &tx),
        &small_zo(),
        &SamplingParams { n_samples: 3, ..sampling },
        &[],
    )
    .unwrap();
    let resumed = sample_mne_dataset(&m, &bounds, &municipal(), (&pt, &tx), &small_zo(), &sampling, &partial.records).unwrap();
    assert_eq!(resumed.records, full.records);

    let mut buf = Vec::new();
    write_dataset(&full.records, &mut buf).unwrap();
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), full.records);
}

#[test]
fn identical_policy_and_start_give_identical_records() {
    let tpl = market(Demand::new(vec![], Default::default())).template;
    let m = market(generate_demand(&tpl, &DemandParams::default(), Default::default()).unwrap());
    let (pt, tx) = start();
    let z = Policy {
        tau_pt: -0.5,
        tau_tx: 0.2,
        license: 300.0,
        sigma_pt: 2.0,
        sigma_tx: 5.0,
    };
    let point = PolicyBounds { lower: z, upper: z };
    let sampling = SamplingParams {
        n_samples: 3,
        seed: 1,
        random_start: false,
    };
    let batch = sample_mne_dataset(&m, &point, &municipal(), (&pt, &tx), &small_zo(), &sampling, &[]).unwrap();
    let strip = |r: &mobgame::equilibrium::dataset::DatasetRecord| {
        let mut r = r.clone();
        r.sample_id = 0;
        r
    };
    assert_eq!(strip(&batch.records[0]), strip(&batch.records[1]));
    assert_eq!(strip(&batch.records[1]), strip(&batch.records[2]));
}
