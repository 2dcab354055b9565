//! Projected two-point zeroth-order descent.
//!
//! Iterates live in the caller's coordinates; a per-coordinate `scale`
//! maps them to a normalized frame where the Gaussian direction, the
//! smoothing radius and the step size apply.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoParams {
    pub eta: f64,
    pub delta: f64,
    /// Steps per player per round.
    pub iterations: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Largest normalized strategy change over the last round that still
    /// counts as converged.
    pub tolerance: f64,
}

impl Default for ZoParams {
    fn default() -> Self {
        Self {
            eta: 0.1,
            delta: 0.01,
            iterations: 50,
            rounds: 5,
            seed: 0,
            tolerance: 1e-2,
        }
    }
}

impl ZoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite() && self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::domain("eta and delta must be finite and > 0"));
        }
        if self.iterations == 0 || self.rounds == 0 {
            return Err(Error::domain("iterations and rounds must be >= 1"));
        }
        Ok(())
    }
}

/// `v * (f_plus - f_minus) / (2 delta)`.
pub fn two_point_gradient(f_plus: f64, f_minus: f64, v: &[f64], delta: f64) -> Vec<f64> {
    let c = (f_plus - f_minus) / (2.0 * delta);
    v.iter().map(|vi| vi * c).collect()
}

pub fn gaussian_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// The two probe points `proj(x +- delta * scale * v)`.
pub fn probe_points(
    x: &[f64],
    v: &[f64],
    scale: &[f64],
    delta: f64,
    project: &dyn Fn(&[f64]) -> Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let shift = |sign: f64| -> Vec<f64> {
        x.iter()
            .zip(v)
            .zip(scale)
            .map(|((xi, vi), si)| xi + sign * delta * si * vi)
            .collect()
    };
    (project(&shift(1.0)), project(&shift(-1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZoStep {
    pub next: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub f_plus: f64,
    pub f_minus: f64,
}

/// One projected two-point step. `evaluate` receives both probes at once
/// so callers may run them concurrently.
pub fn zo_step<R, F>(
    x: &[f64],
    scale: &[f64],
    eta: f64,
    delta: f64,
    rng: &mut R,
    project: &dyn Fn(&[f64]) -> Vec<f64>,
    evaluate: F,
) -> Result<ZoStep>
where
    R: Rng + ?Sized,
    F: FnOnce(&[f64], &[f64]) -> Result<(f64, f64)>,
{
    let v = gaussian_direction(rng, x.len());
    let (plus, minus) = probe_points(x, &v, scale, delta, project);
    let (f_plus, f_minus) = evaluate(&plus, &minus)?;
    let g = two_point_gradient(f_plus, f_minus, &v, delta);
    let moved: Vec<f64> = x
        .iter()
        .zip(&g)
        .zip(scale)
        .map(|((xi, gi), si)| xi - eta * si * gi)
        .collect();
    Ok(ZoStep {
        next: project(&moved),
        plus,
        minus,
        f_plus,
        f_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_examples() {
        assert_eq!(two_point_gradient(1.5, 1.5, &[0.3, -2.0], 0.1), vec![0.0, 0.0]);
        let f = |x: f64| x * x;
        let g = two_point_gradient(f(1.1), f(0.9), &[1.0], 0.1);
        assert!((g[0] - 2.0).abs() < 1e-12);
        let h = |x: f64| 3.0 * x;
        for d in [1e-3, 0.1, 2.0] {
            let g = two_point_gradient(h(5.0 + d), h(5.0 - d), &[1.0], d);
            assert!((g[0] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_objective_keeps_the_point() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let clamp = |x: &[f64]| x.iter().map(|v| v.clamp(0.0, 1.0)).collect::<Vec<_>>();
        let s = zo_step(&[0.3, 0.7], &[1.0, 1.0], 0.5, 0.01, &mut rng, &clamp, |_, _| Ok((4.0, 4.0))).unwrap();
        assert_eq!(s.next, vec![0.3, 0.7]);
    }
}
