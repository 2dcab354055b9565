//! Budget-matched policy search baselines: uniform random search and a
//! real-coded genetic algorithm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::municipality::{project_policy, Incumbent, Method, Policy, PolicyBounds, PolicyObjective, PolicyRun, PolicyTraceRow};

fn sample(rng: &mut ChaCha8Rng, bounds: &PolicyBounds) -> Policy {
    let lo = bounds.lower.to_vec();
    let hi = bounds.upper.to_vec();
    let z: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l })
        .collect();
    Policy::from_slice(&z)
}

fn check(bounds: &PolicyBounds, budget: usize) -> Result<()> {
    bounds.validate()?;
    if budget == 0 {
        return Err(Error::domain("budget must be >= 1"));
    }
    Ok(())
}

/// Uniform samples over the box; `start`, when given, is the first sample.
pub fn random_search(
    objective: &dyn PolicyObjective,
    bounds: &PolicyBounds,
    budget: usize,
    seed: u64,
    start: Option<&Policy>,
) -> Result<PolicyRun> {
    check(bounds, budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = Incumbent::new(bounds.lower);
    let mut trace = Vec::with_capacity(budget);
    let mut last = bounds.lower;
    for i in 0..budget {
        let z = match (i, start) {
            (0, Some(s)) => project_policy(s, bounds),
            _ => sample(&mut rng, bounds),
        };
        let j = objective.evaluate(&z);
        if let Ok(j) = j {
            best.offer(&z, j);
        }
        last = z;
        trace.push(PolicyTraceRow {
            method: Method::Random,
            iteration: i,
            evaluations: i + 1,
            z,
            j_plus: j.as_ref().ok().copied(),
            j_minus: None,
            j_best: best.j,
            skipped: j.is_err(),
        });
    }
    Ok(PolicyRun {
        best: best.z,
        best_j: best.j,
        last,
        trace,
        evaluations: budget,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of each box width.
    pub mutation_scale: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 20,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_scale: 0.1,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        if self.population < 2 || !rate(self.crossover_rate) || !rate(self.mutation_rate) || !(self.mutation_scale >= 0.0)
        {
            return Err(Error::domain("population must be >= 2 and rates must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Tournament selection (size 2), uniform crossover, clipped Gaussian
/// mutation and one elite carried over without re-evaluation. Stops when
/// the evaluation budget is spent.
pub fn genetic_algorithm(
    objective: &dyn PolicyObjective,
    bounds: &PolicyBounds,
    ga: &GaParams,
    budget: usize,
    seed: u64,
    start: Option<&Policy>,
) -> Result<PolicyRun> {
    check(bounds, budget)?;
    ga.validate()?;
    let mut initial: Vec<Policy> = Vec::with_capacity(ga.population);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(s) = start {
        initial.push(project_policy(s, bounds));
    }
    while initial.len() < ga.population {
        initial.push(sample(&mut rng, bounds));
    }
    genetic_algorithm_from(objective, bounds, ga, budget, &mut rng, initial)
}

/// As [`genetic_algorithm`] with an explicit initial population.
pub fn genetic_algorithm_from(
    objective: &dyn PolicyObjective,
    bounds: &PolicyBounds,
    ga: &GaParams,
    budget: usize,
    rng: &mut ChaCha8Rng,
    initial: Vec<Policy>,
) -> Result<PolicyRun> {
    check(bounds, budget)?;
    ga.validate()?;
    let widths = bounds.widths();
    let mut best = Incumbent::new(bounds.lower);
    let mut trace = Vec::with_capacity(budget);
    let mut evaluations = 0;
    let mut last = initial[0];

    let mut evaluate = |z: &Policy, generation: usize, trace: &mut Vec<PolicyTraceRow>, best: &mut Incumbent| {
        let j = objective.evaluate(z);
        evaluations += 1;
        let fitness = match &j {
            Ok(v) => *v,
            Err(_) => f64::INFINITY,
        };
        best.offer(z, fitness);
        trace.push(PolicyTraceRow {
            method: Method::Ga,
            iteration: generation,
            evaluations,
            z: *z,
            j_plus: j.as_ref().ok().copied(),
            j_minus: None,
            j_best: best.j,
            skipped: j.is_err(),
        });
        (fitness, evaluations)
    };

    let mut population: Vec<(Policy, f64)> = Vec::with_capacity(ga.population);
    for z in initial.iter().map(|z| project_policy(z, bounds)) {
        let (f, used) = evaluate(&z, 0, &mut trace, &mut best);
        population.push((z, f));
        last = z;
        if used >= budget {
            break;
        }
    }
    let mut generation = 0;
    let mut spent = population.len();
    while spent < budget {
        generation += 1;
        let elite = population
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .copied()
            .expect("non-empty population");
        let tournament = |rng: &mut ChaCha8Rng, pop: &[(Policy, f64)]| {
            let a = &pop[rng.gen_range(0..pop.len())];
            let b = &pop[rng.gen_range(0..pop.len())];
            if b.1 < a.1 {
                b.0
            } else {
                a.0
            }
        };
        let mut next = vec![elite];
        while next.len() < ga.population && spent < budget {
            let p1 = tournament(rng, &population).to_vec();
            let p2 = tournament(rng, &population).to_vec();
            let mut child = if rng.gen::<f64>() < ga.crossover_rate {
                p1.iter().zip(&p2).map(|(a, b)| if rng.gen::<bool>() { *a } else { *b }).collect()
            } else {
                p1
            };
            for (c, w) in child.iter_mut().zip(&widths) {
                if rng.gen::<f64>() < ga.mutation_rate {
                    let n: f64 = rng.sample(StandardNormal);
                    *c += n * ga.mutation_scale * w;
                }
            }
            let z = project_policy(&Policy::from_slice(&child), bounds);
            let (f, used) = evaluate(&z, generation, &mut trace, &mut best);
            spent = used;
            last = z;
            next.push((z, f));
        }
        population = next;
    }
    Ok(PolicyRun {
        best: best.z,
        best_j: best.j,
        last,
        trace,
        evaluations: spent,
    })
}
