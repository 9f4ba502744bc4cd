//! The long-run criterion `W = K − (θ/4)·varRate + Γ·P` and its maximization
//! over linear strategies.
//!
//! `W` is a quartic in the strategy coordinates `z = (h, vec H)` and is not
//! concave in general, so [`optimize`] scans a grid (or a Latin hypercube in
//! higher dimension) and refines the best cells with Nelder–Mead.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{CriterionParams, FactorModel, Strategy};
use crate::moments::MomentEngine;

/// Criterion value with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: f64,
    pub growth_rate: f64,
    pub variance_rate: f64,
    /// `Γ·P`.
    pub factor_term: f64,
}

/// `W(h, H)` for one strategy.
pub fn evaluate(model: &FactorModel, strategy: &Strategy, params: &CriterionParams) -> Result<f64> {
    Ok(Criterion::new(model, params)?.evaluate(strategy)?.value)
}

/// Criterion bound to a model and parameters, reusing the moment solver.
pub struct Criterion {
    engine: MomentEngine,
    theta: f64,
    gamma: Vector,
}

impl Criterion {
    pub fn new(model: &FactorModel, params: &CriterionParams) -> Result<Self> {
        if params.gamma().len() != model.factor_count() {
            return Err(Error::Dimension(format!(
                "Γ has {} entries, model has {} factors",
                params.gamma().len(),
                model.factor_count()
            )));
        }
        Ok(Criterion {
            engine: MomentEngine::new(model)?,
            theta: params.theta(),
            gamma: params.gamma().clone(),
        })
    }

    pub fn evaluate(&self, strategy: &Strategy) -> Result<Evaluation> {
        let growth_rate = self.engine.growth_rate(strategy)?;
        let (variance_rate, _, _) = self.engine.variance_rate(strategy)?;
        let factor_term = if self.gamma.iter().all(|&g| g == 0.0) {
            0.0
        } else {
            self.gamma.dot(&self.engine.covariance_limit(strategy)?)
        };
        Ok(Evaluation {
            value: growth_rate - self.theta / 4.0 * variance_rate + factor_term,
            growth_rate,
            variance_rate,
            factor_term,
        })
    }

    fn dims(&self) -> (usize, usize) {
        let model = self.engine.model();
        (model.asset_count(), model.factor_count())
    }

    /// `W` at strategy coordinates; non-finite values map to `−∞`.
    fn at(&self, z: &[f64]) -> f64 {
        let (m, n) = self.dims();
        Strategy::from_coordinates(z, m, n)
            .and_then(|s| self.evaluate(&s))
            .map(|e| e.value)
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Central finite-difference gradient with step `1e-5·(1 + |z_i|)`.
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (0..z.len())
            .map(|i| {
                let step = 1e-5 * (1.0 + z[i].abs());
                let mut plus = z.to_vec();
                let mut minus = z.to_vec();
                plus[i] += step;
                minus[i] -= step;
                (self.at(&plus) - self.at(&minus)) / (2.0 * step)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerConfig {
    /// Search box, applied to every strategy coordinate.
    pub grid_bounds: [f64; 2],
    /// Grid points per coordinate.
    pub grid_points: usize,
    /// Largest full grid; beyond this (or above 4 coordinates) a Latin
    /// hypercube of `lhs_samples` points is used.
    pub max_grid_size: usize,
    pub lhs_samples: usize,
    /// Nelder–Mead runs started from the best sample points.
    pub local_restarts: usize,
    /// Convergence threshold on the spread of simplex values, relative to
    /// `1 + |W|`.
    pub simplex_tolerance: f64,
    /// Convergence threshold on the simplex diameter, relative to `1 + ‖z‖`.
    pub step_tolerance: f64,
    /// Iteration cap per Nelder–Mead run.
    pub max_iterations: usize,
    /// First-order check: gradient norm at most this times `1 + |W*|`.
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grid_bounds: [-3.0, 3.0],
            grid_points: 61,
            max_grid_size: 250_000,
            lhs_samples: 4096,
            local_restarts: 8,
            simplex_tolerance: 1e-14,
            step_tolerance: 1e-10,
            max_iterations: 20_000,
            gradient_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.grid_bounds;
        let problems = [
            (
                !(lo.is_finite() && hi.is_finite() && lo < hi),
                "grid bounds must be finite with lower < upper",
            ),
            (self.grid_points < 2, "grid_points must be at least 2"),
            (self.lhs_samples < 2, "lhs_samples must be at least 2"),
            (
                self.local_restarts == 0,
                "local_restarts must be at least 1",
            ),
            (
                !(self.simplex_tolerance > 0.0),
                "simplex_tolerance must be positive",
            ),
            (
                !(self.step_tolerance > 0.0),
                "step_tolerance must be positive",
            ),
            (
                !(self.gradient_tolerance > 0.0),
                "gradient_tolerance must be positive",
            ),
            (self.max_iterations == 0, "max_iterations must be positive"),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(Error::Precondition((*msg).into())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Grid,
    LatinHypercube,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalRun {
    pub start: Vec<f64>,
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub sampling: Sampling,
    pub samples: usize,
    pub sample_best: Vec<f64>,
    pub sample_best_value: f64,
    /// Every local refinement, in start order.
    pub local_runs: Vec<LocalRun>,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    /// First-order check passed.
    pub stationary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub base: Vec<f64>,
    /// Row-major m×n.
    pub tilt: Vec<Vec<f64>>,
    pub evaluation: Evaluation,
    pub diagnostics: Diagnostics,
}

impl Optimum {
    pub fn value(&self) -> f64 {
        self.evaluation.value
    }

    pub fn strategy(&self) -> Strategy {
        let n = self.tilt.first().map_or(0, Vec::len);
        let z: Vec<f64> = self.coordinates();
        Strategy::from_coordinates(&z, self.base.len(), n).expect("optimum has consistent shape")
    }

    /// `(h, vec H)` with `H` row-major.
    pub fn coordinates(&self) -> Vec<f64> {
        self.base
            .iter()
            .chain(self.tilt.iter().flatten())
            .copied()
            .collect()
    }

    /// `H₁₁ / h₁`, the tilt per unit of base position in the first asset
    /// and factor.
    pub fn ratio(&self) -> f64 {
        self.tilt[0][0] / self.base[0]
    }
}

/// Maximizes `W` over linear strategies.
pub fn optimize(
    model: &FactorModel,
    params: &CriterionParams,
    config: &OptimizerConfig,
) -> Result<Optimum> {
    optimize_from(model, params, config, &[])
}

/// As [`optimize`], with extra Nelder–Mead starting points.
pub fn optimize_from(
    model: &FactorModel,
    params: &CriterionParams,
    config: &OptimizerConfig,
    warm_starts: &[Vec<f64>],
) -> Result<Optimum> {
    config.validate()?;
    if params.theta() == 0.0 && params.gamma().iter().all(|&g| g == 0.0) {
        return Err(Error::Precondition(
            "θ = 0 with Γ = 0 leaves the criterion without a risk penalty; it is unbounded for \
             any model with a non-zero drift"
                .into(),
        ));
    }
    let criterion = Criterion::new(model, params)?;
    let (m, n) = criterion.dims();
    let dim = m + m * n;
    if let Some(bad) = warm_starts.iter().find(|s| s.len() != dim) {
        return Err(Error::Dimension(format!(
            "warm start has {} coordinates, expected {dim}",
            bad.len()
        )));
    }

    let (sampling, points) = sample_points(dim, config);
    let values: Vec<f64> = points.par_iter().map(|z| criterion.at(z)).collect();
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&i| values[i].is_finite())
        .collect();
    if order.is_empty() {
        return Err(Error::Numeric(
            "criterion is not finite anywhere on the sample".into(),
        ));
    }
    order.sort_by(|&i, &j| compare_candidates(values[j], &points[j], values[i], &points[i], 0.0));
    let best = order[0];

    let edge = boundary_width(sampling, config);
    if points[best]
        .iter()
        .any(|&c| c <= config.grid_bounds[0] + edge || c >= config.grid_bounds[1] - edge)
    {
        if let Some(direction) = escapes_outward(&criterion, &points[best]) {
            return Err(Error::Unbounded { direction });
        }
    }

    let starts: Vec<Vec<f64>> = order
        .iter()
        .take(config.local_restarts)
        .map(|&i| points[i].clone())
        .chain(warm_starts.iter().cloned())
        .collect();
    let spacing = (config.grid_bounds[1] - config.grid_bounds[0]) / (config.grid_points - 1) as f64;
    let runs: Vec<LocalRun> = starts
        .par_iter()
        .map(|start| nelder_mead(&criterion, start, 0.5 * spacing, config))
        .collect();

    let winner = runs
        .iter()
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| {
            compare_candidates(
                a.value,
                &a.point,
                b.value,
                &b.point,
                config.simplex_tolerance,
            )
        })
        .ok_or_else(|| Error::Numeric("no local refinement produced a finite value".into()))?;
    let z = winner.point.clone();
    let norm = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 1e6 {
        return Err(Error::Unbounded {
            direction: z.iter().map(|c| c / norm).collect(),
        });
    }

    let strategy = Strategy::from_coordinates(&z, m, n)?;
    let evaluation = criterion.evaluate(&strategy)?;
    let gradient = criterion.gradient(&z);
    let gradient_norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    let stationary = gradient_norm <= config.gradient_tolerance * (1.0 + evaluation.value.abs());
    Ok(Optimum {
        base: z[..m].to_vec(),
        tilt: z[m..].chunks(n).map(<[f64]>::to_vec).collect(),
        evaluation,
        diagnostics: Diagnostics {
            sampling,
            samples: points.len(),
            sample_best: points[best].clone(),
            sample_best_value: values[best],
            local_runs: runs,
            gradient,
            gradient_norm,
            stationary,
        },
    })
}

/// Ordering for maximization: higher value first; values within `tol·(1+|W|)`
/// tie and are broken by smaller norm, then lexicographically.
fn compare_candidates(va: f64, za: &[f64], vb: f64, zb: &[f64], tol: f64) -> std::cmp::Ordering {
    let scale = tol * (1.0 + va.abs().max(vb.abs()));
    if (va - vb).abs() > scale {
        return vb.total_cmp(&va);
    }
    let norm = |z: &[f64]| z.iter().map(|c| c * c).sum::<f64>();
    norm(za).total_cmp(&norm(zb)).then_with(|| {
        za.iter()
            .zip(zb)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

fn sample_points(dim: usize, config: &OptimizerConfig) -> (Sampling, Vec<Vec<f64>>) {
    let [lo, hi] = config.grid_bounds;
    let full = (config.grid_points as f64).powi(dim as i32);
    if dim <= 4 && full <= config.max_grid_size as f64 {
        let count = config.grid_points;
        let axis: Vec<f64> = (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect();
        let total = count.pow(dim as u32);
        let points = (0..total)
            .map(|mut index| {
                let mut z = vec![0.0; dim];
                for c in z.iter_mut().rev() {
                    *c = axis[index % count];
                    index /= count;
                }
                z
            })
            .collect();
        return (Sampling::Grid, points);
    }
    let samples = config.lhs_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..samples).collect();
        strata.shuffle(&mut rng);
        columns.push(
            strata
                .into_iter()
                .map(|s| lo + (hi - lo) * (s as f64 + rng.random::<f64>()) / samples as f64)
                .collect(),
        );
    }
    let points = (0..samples)
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect();
    (Sampling::LatinHypercube, points)
}

fn boundary_width(sampling: Sampling, config: &OptimizerConfig) -> f64 {
    let [lo, hi] = config.grid_bounds;
    match sampling {
        Sampling::Grid => 0.0,
        Sampling::LatinHypercube => (hi - lo) / config.lhs_samples as f64,
    }
}

/// Doubles `z` ten times; a strictly increasing criterion along the way is
/// taken as an unbounded direction.
fn escapes_outward(criterion: &Criterion, z: &[f64]) -> Option<Vec<f64>> {
    let mut previous = criterion.at(z);
    for k in 1..=10 {
        let scale = f64::from(1u32 << k);
        let probe: Vec<f64> = z.iter().map(|c| c * scale).collect();
        let value = criterion.at(&probe);
        if !(value > previous) {
            return None;
        }
        previous = value;
    }
    let norm = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    Some(z.iter().map(|c| c / norm).collect())
}

/// Nelder–Mead maximization, restarted from its own best point until a
/// fresh simplex no longer improves.
fn nelder_mead(
    criterion: &Criterion,
    start: &[f64],
    step: f64,
    config: &OptimizerConfig,
) -> LocalRun {
    let mut point = start.to_vec();
    let mut value = criterion.at(&point);
    let mut iterations = 0;
    let mut converged = false;
    let mut scale = step;
    while iterations < config.max_iterations {
        let (next, next_value, used, done) = simplex_search(
            criterion,
            &point,
            scale,
            config,
            config.max_iterations - iterations,
        );
        iterations += used;
        let improved = next_value > value;
        if improved {
            point = next;
            value = next_value;
        }
        if done && !improved {
            converged = true;
            break;
        }
        // Restart with a simplex sized to the remaining uncertainty.
        scale = (scale * 1e-2).max(1e3 * config.step_tolerance * (1.0 + norm(&point)));
    }
    LocalRun {
        start: start.to_vec(),
        point,
        value,
        iterations,
        converged,
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// One Nelder–Mead descent on `−W`. Returns the best vertex, its value, the
/// iterations used and whether the tolerances were met.
fn simplex_search(
    criterion: &Criterion,
    start: &[f64],
    step: f64,
    config: &OptimizerConfig,
    budget: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let dim = start.len();
    let cost = |z: &[f64]| -criterion.at(z);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.to_vec(), cost(start)));
    for i in 0..dim {
        let mut z = start.to_vec();
        z[i] += step;
        let c = cost(&z);
        simplex.push((z, c));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut done = false;
    while iterations < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let spread = worst - best;
        let diameter = simplex[1..]
            .iter()
            .map(|(z, _)| {
                norm(
                    &z.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                )
            })
            .fold(0.0, f64::max);
        if spread <= config.simplex_tolerance * (1.0 + best.abs())
            && diameter <= config.step_tolerance * (1.0 + norm(&simplex[0].0))
        {
            done = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|c| simplex[..dim].iter().map(|(z, _)| z[c]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let reflected = along(alpha);
        let fr = cost(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(gamma);
            let fe = cost(&expanded);
            simplex[dim] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst {
            let z = along(rho);
            let f = cost(&z);
            (z, f)
        } else {
            let z = along(-rho);
            let f = cost(&z);
            (z, f)
        };
        if fc < worst.min(fr) {
            simplex[dim] = (contracted, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for (z, f) in simplex[1..].iter_mut() {
            for (c, a) in z.iter_mut().zip(&anchor) {
                *c = a + sigma * (*c - a);
            }
            *f = cost(z);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (z, c) = simplex.swap_remove(0);
    (z, -c, iterations, done)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub parameter: f64,
    /// `None` when the optimization at this parameter failed.
    pub optimum: Option<Optimum>,
    pub error: Option<String>,
}

impl SweepPoint {
    /// Optimum found and first-order check passed.
    pub fn is_clean(&self) -> bool {
        self.optimum
            .as_ref()
            .is_some_and(|o| o.diagnostics.stationary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn parameter_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.parameter).collect()
    }

    pub fn all_clean(&self) -> bool {
        self.points.iter().all(SweepPoint::is_clean)
    }
}

fn sweep(
    model: &FactorModel,
    parameters: &[f64],
    config: &OptimizerConfig,
    params_at: impl Fn(f64) -> Result<CriterionParams>,
) -> SweepResult {
    let mut warm: Vec<Vec<f64>> = Vec::new();
    let points = parameters
        .iter()
        .map(|&parameter| {
            let outcome =
                params_at(parameter).and_then(|p| optimize_from(model, &p, config, &warm));
            match outcome {
                Ok(optimum) => {
                    warm = vec![optimum.coordinates()];
                    SweepPoint {
                        parameter,
                        optimum: Some(optimum),
                        error: None,
                    }
                }
                Err(err) => SweepPoint {
                    parameter,
                    optimum: None,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();
    SweepResult { points }
}

/// Optimum at each θ in order, warm-starting from the previous optimum.
pub fn sweep_theta(
    model: &FactorModel,
    thetas: &[f64],
    gamma: &Vector,
    config: &OptimizerConfig,
) -> SweepResult {
    sweep(model, thetas, config, |theta| {
        CriterionParams::new(theta, gamma.clone())
    })
}

/// Optimum at `Γ = g·direction` for each `g` in order.
pub fn sweep_gamma(
    model: &FactorModel,
    theta: f64,
    gammas: &[f64],
    direction: &Vector,
    config: &OptimizerConfig,
) -> SweepResult {
    sweep(model, gammas, config, |g| {
        CriterionParams::new(theta, direction * g)
    })
}
