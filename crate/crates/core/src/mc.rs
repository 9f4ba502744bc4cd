//! Monte Carlo simulation of the joint factor / log-wealth system.
//!
//! Log-wealth is stepped directly,
//! `du = (h+HX)′((a+AX)dt + Σ dW) − ½(h+HX)′ΣΣ′(h+HX)dt`,
//! so nothing is exponentiated. Factors use the exact Ornstein–Uhlenbeck
//! transition by default: over a step the factor innovation and the Brownian
//! increment driving `u` are drawn jointly Gaussian with their exact
//! covariance.
//!
//! Path `i` draws its normals from a ChaCha8 stream keyed by `(seed, i)`, so
//! results do not depend on thread scheduling. Per-path values are collected
//! in path order and reduced sequentially.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::TimeSeriesData;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{FactorModel, Strategy};
use crate::moments::{stationary_covariance, AsymptoticMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorScheme {
    Exact,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// `X₀ ~ N(0, Δ)`.
    Stationary,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Step size in months.
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: FactorScheme,
    pub antithetic: bool,
    pub initial: InitialState,
    /// Retain per-path terminal `u` and `X`.
    pub keep_paths: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.1,
            horizon: 1e4,
            paths: 10_000,
            seed: 0,
            scheme: FactorScheme::Exact,
            antithetic: false,
            initial: InitialState::Stationary,
            keep_paths: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Precondition(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Precondition(format!(
                "horizon must be at least one step, got {}",
                self.horizon
            )));
        }
        if self.paths < 2 {
            return Err(Error::Precondition("at least two paths are needed".into()));
        }
        if self.antithetic && self.paths % 2 != 0 {
            return Err(Error::Precondition(
                "antithetic sampling needs an even number of paths".into(),
            ));
        }
        Ok(())
    }

    fn steps_to(&self, time: f64) -> usize {
        (time / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `(value − reference) / stderr`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference) / self.stderr
    }

    fn scaled(self, factor: f64) -> Estimate {
        Estimate {
            value: self.value * factor,
            stderr: self.stderr * factor.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    pub horizon: f64,
    pub paths: usize,
    /// `E u(T)`.
    pub mean_u: Estimate,
    /// `Var u(T)`.
    pub var_u: Estimate,
    /// `Cov(u(T), X(T))`, which equals `E(u X)(T)` since `E X = 0`.
    pub cov_ux: Vec<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_x: Option<Vec<Vec<f64>>>,
}

/// Standardized distances between simulated and closed-form moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZScores {
    pub growth_rate: f64,
    pub variance_rate: f64,
    pub covariance_limit: Vec<f64>,
}

impl ZScores {
    pub fn max_abs(&self) -> f64 {
        self.covariance_limit
            .iter()
            .chain([&self.growth_rate, &self.variance_rate])
            .fold(0.0, |acc, z| acc.max(z.abs()))
    }
}

impl PathStats {
    /// `E u(T) / T`.
    pub fn growth_rate(&self) -> Estimate {
        self.mean_u.scaled(1.0 / self.horizon)
    }

    /// `Var u(T) / T`.
    pub fn variance_rate(&self) -> Estimate {
        self.var_u.scaled(1.0 / self.horizon)
    }

    pub fn z_scores(&self, closed_form: &AsymptoticMoments) -> ZScores {
        ZScores {
            growth_rate: self.growth_rate().z_score(closed_form.growth_rate),
            variance_rate: self.variance_rate().z_score(closed_form.variance_rate),
            covariance_limit: self
                .cov_ux
                .iter()
                .zip(closed_form.covariance_limit.iter())
                .map(|(est, &p)| est.z_score(p))
                .collect(),
        }
    }
}

/// Slopes and intercepts of moment trajectories fitted over a horizon grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticFit {
    pub horizons: Vec<f64>,
    /// Slope of `E u(T)`.
    pub growth_rate: Estimate,
    /// Slope of `Var u(T)`.
    pub variance_rate: Estimate,
    /// Slope of `E(u X X′)(T)`, row-major n×n.
    pub r: Vec<Vec<Estimate>>,
    /// Intercept of `E(u X X′)(T)`, row-major n×n.
    pub s: Vec<Vec<Estimate>>,
    /// Statistics at each horizon.
    pub snapshots: Vec<PathStats>,
}

/// Precomputed per-step coefficients, flattened row-major.
struct Stepper {
    m: usize,
    n: usize,
    k: usize,
    dt: f64,
    sqrt_dt: f64,
    a: Vec<f64>,
    big_a: Vec<f64>,
    h: Vec<f64>,
    tilt: Vec<f64>,
    /// Σ (m×k)
    sigma: Vec<f64>,
    /// X ← transition·X + shock·ε + residual·ζ; ε drives ΔW = √dt ε.
    transition: Vec<f64>,
    shock: Vec<f64>,
    residual: Option<Vec<f64>>,
    initial: Option<Vec<f64>>,
}

impl Stepper {
    fn new(model: &FactorModel, strategy: &Strategy, config: &SimConfig) -> Result<Self> {
        let (m, n) = (model.asset_count(), model.factor_count());
        let k = m + n;
        let dt = config.dt;
        let b = model.mean_reversion();
        let lambda = model.factor_diffusion();
        let delta = stationary_covariance(model)?;

        let (transition, shock, residual) = match config.scheme {
            FactorScheme::Euler => (Matrix::identity(n, n) + b * dt, lambda * dt.sqrt(), None),
            FactorScheme::Exact => {
                let phi = linalg::expm(&(b * dt));
                // Cov(ξ, ΔW) = B⁻¹(Φ − I)Λ
                let cross = linalg::lu_solve(b, &((&phi - Matrix::identity(n, n)) * lambda))?;
                let innovation = &delta - &phi * &delta * phi.transpose();
                let conditional = innovation - &cross * cross.transpose() / dt;
                let residual = linalg::psd_sqrt(&conditional);
                let residual = (residual.norm() > 0.0).then_some(residual);
                (phi, cross / dt.sqrt(), residual)
            }
        };
        let initial = match config.initial {
            InitialState::Stationary => Some(linalg::psd_sqrt(&delta)),
            InitialState::Zero => None,
        };
        let flat = |mat: &Matrix| -> Vec<f64> {
            (0..mat.nrows())
                .flat_map(|i| mat.row(i).iter().copied().collect::<Vec<_>>())
                .collect()
        };
        Ok(Stepper {
            m,
            n,
            k,
            dt,
            sqrt_dt: dt.sqrt(),
            a: model.drift().iter().copied().collect(),
            big_a: flat(model.drift_loading()),
            h: strategy.base().iter().copied().collect(),
            tilt: flat(strategy.tilt()),
            sigma: flat(model.asset_diffusion()),
            transition: flat(&transition),
            shock: flat(&shock),
            residual: residual.as_ref().map(flat),
            initial: initial.as_ref().map(flat),
        })
    }

    /// Runs one path and records `(u, X)` after each step count in `marks`.
    fn run(
        &self,
        rng: &mut ChaCha8Rng,
        sign: f64,
        marks: &[usize],
        path: usize,
        out: &mut [f64],
    ) -> Result<()> {
        let (m, n, k) = (self.m, self.n, self.k);
        let draw = |rng: &mut ChaCha8Rng| -> f64 { sign * rng.sample::<f64, _>(StandardNormal) };

        let mut x = vec![0.0; n];
        let mut x_next = vec![0.0; n];
        if let Some(root) = &self.initial {
            let z: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
            for i in 0..n {
                x[i] = (0..n).map(|j| root[i * n + j] * z[j]).sum();
            }
        }
        let mut eps = vec![0.0; k];
        let mut zeta = vec![0.0; n];
        let mut w = vec![0.0; m];
        let mut g = vec![0.0; k];
        let mut u = 0.0;
        let mut step = 0usize;
        let record = 1 + n;

        for (slot, &mark) in marks.iter().enumerate() {
            while step < mark {
                for e in eps.iter_mut() {
                    *e = draw(rng);
                }
                if self.residual.is_some() {
                    for z in zeta.iter_mut() {
                        *z = draw(rng);
                    }
                }
                // w = h + Hx, drift = w·(a + Ax), g = Σ′w
                let mut drift = 0.0;
                for i in 0..m {
                    let mut wi = self.h[i];
                    let mut mu = self.a[i];
                    for j in 0..n {
                        wi += self.tilt[i * n + j] * x[j];
                        mu += self.big_a[i * n + j] * x[j];
                    }
                    w[i] = wi;
                    drift += wi * mu;
                }
                let mut g2 = 0.0;
                let mut noise = 0.0;
                for (c, gc) in g.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..m {
                        acc += w[i] * self.sigma[i * k + c];
                    }
                    *gc = acc;
                    g2 += acc * acc;
                    noise += acc * eps[c];
                }
                u += (drift - 0.5 * g2) * self.dt + noise * self.sqrt_dt;

                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += self.transition[i * n + j] * x[j];
                    }
                    for c in 0..k {
                        acc += self.shock[i * k + c] * eps[c];
                    }
                    if let Some(res) = &self.residual {
                        for j in 0..n {
                            acc += res[i * n + j] * zeta[j];
                        }
                    }
                    x_next[i] = acc;
                }
                std::mem::swap(&mut x, &mut x_next);
                step += 1;
                if !u.is_finite() || x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinitePath { path, step });
                }
            }
            out[slot * record] = u;
            out[slot * record + 1..(slot + 1) * record].copy_from_slice(&x);
        }
        Ok(())
    }
}

fn path_rng(seed: u64, path: usize, antithetic: bool) -> (ChaCha8Rng, f64) {
    let (stream, sign) = if antithetic {
        ((path / 2) as u64, if path % 2 == 1 { -1.0 } else { 1.0 })
    } else {
        (path as u64, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (rng, sign)
}

/// Per-path `(u, X)` at each requested time: `values[path][slot*(1+n) ..]`.
struct Snapshots {
    times: Vec<f64>,
    n: usize,
    values: Vec<Vec<f64>>,
}

impl Snapshots {
    fn u(&self, path: usize, slot: usize) -> f64 {
        self.values[path][slot * (1 + self.n)]
    }

    fn x(&self, path: usize, slot: usize) -> &[f64] {
        let start = slot * (1 + self.n) + 1;
        &self.values[path][start..start + self.n]
    }
}

fn run_paths(
    model: &FactorModel,
    strategy: &Strategy,
    config: &SimConfig,
    times: &[f64],
) -> Result<Snapshots> {
    config.validate()?;
    strategy.check_compatible(model)?;
    let marks: Vec<usize> = times.iter().map(|&t| config.steps_to(t)).collect();
    if marks.first().is_some_and(|&s| s == 0) || marks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(
            "simulation times must be increasing and at least one step apart".into(),
        ));
    }
    let stepper = Stepper::new(model, strategy, config)?;
    let width = marks.len() * (1 + stepper.n);
    let values = (0..config.paths)
        .into_par_iter()
        .map(|path| {
            let (mut rng, sign) = path_rng(config.seed, path, config.antithetic);
            let mut out = vec![0.0; width];
            stepper.run(&mut rng, sign, &marks, path, &mut out)?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshots {
        times: marks.iter().map(|&s| s as f64 * config.dt).collect(),
        n: stepper.n,
        values,
    })
}

pub fn simulate(model: &FactorModel, strategy: &Strategy, config: &SimConfig) -> Result<PathStats> {
    let snaps = run_paths(model, strategy, config, &[config.horizon])?;
    Ok(path_stats(&snaps, 0, config))
}

/// Statistics at several horizons from one set of paths.
pub fn simulate_horizons(
    model: &FactorModel,
    strategy: &Strategy,
    config: &SimConfig,
    horizons: &[f64],
) -> Result<Vec<PathStats>> {
    let snaps = run_paths(model, strategy, config, horizons)?;
    Ok((0..horizons.len())
        .map(|slot| path_stats(&snaps, slot, config))
        .collect())
}

fn path_stats(snaps: &Snapshots, slot: usize, config: &SimConfig) -> PathStats {
    let paths = snaps.values.len();
    let n = snaps.n;
    let u: Vec<f64> = (0..paths).map(|p| snaps.u(p, slot)).collect();
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..paths).map(|p| snaps.x(p, slot)[j]).collect())
        .collect();

    let (mean_u, var_u, cov_ux) = if config.antithetic {
        // antithetic pairs are dependent: batch means over whole pairs
        let mean_u = batched(paths, |r| mean(&u[r]));
        let var_u = batched(paths, |r| variance(&u[r]));
        let cov_ux = xs
            .iter()
            .map(|x| batched(paths, |r| covariance(&u[r.clone()], &x[r])))
            .collect();
        (mean_u, var_u, cov_ux)
    } else {
        (
            mean_estimate(&u),
            variance_estimate(&u),
            xs.iter().map(|x| covariance_estimate(&u, x)).collect(),
        )
    };

    PathStats {
        horizon: snaps.times[slot],
        paths,
        mean_u,
        var_u,
        cov_ux,
        final_u: config.keep_paths.then(|| u.clone()),
        final_x: config
            .keep_paths
            .then(|| (0..paths).map(|p| snaps.x(p, slot).to_vec()).collect()),
    }
}

const BATCHES: usize = 50;

/// Full-sample statistic with a batch-means standard error. Batch boundaries
/// fall on even path indices so antithetic pairs stay together.
fn batched(paths: usize, stat: impl Fn(std::ops::Range<usize>) -> f64) -> Estimate {
    let ranges = batch_ranges(paths, BATCHES);
    let per_batch: Vec<f64> = ranges.iter().cloned().map(&stat).collect();
    Estimate {
        value: stat(0..paths),
        stderr: (variance(&per_batch) / per_batch.len() as f64).sqrt(),
    }
}

fn batch_ranges(paths: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    let units = paths / 2;
    let batches = batches.min(units).max(1);
    (0..batches)
        .map(|b| {
            let start = 2 * (b * units / batches);
            let end = if b + 1 == batches {
                paths
            } else {
                2 * ((b + 1) * units / batches)
            };
            start..end
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let mu = mean(v);
    v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn covariance(u: &[f64], x: &[f64]) -> f64 {
    let (mu, mx) = (mean(u), mean(x));
    u.iter()
        .zip(x)
        .map(|(a, b)| (a - mu) * (b - mx))
        .sum::<f64>()
        / (u.len() as f64 - 1.0)
}

fn mean_estimate(v: &[f64]) -> Estimate {
    Estimate {
        value: mean(v),
        stderr: (variance(v) / v.len() as f64).sqrt(),
    }
}

/// Sample variance with the standard error from the fourth central moment.
fn variance_estimate(v: &[f64]) -> Estimate {
    let len = v.len() as f64;
    let mu = mean(v);
    let s2 = variance(v);
    let m4 = v.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / len;
    let var_of_s2 = (m4 - s2 * s2 * (len - 3.0) / (len - 1.0)) / len;
    Estimate {
        value: s2,
        stderr: var_of_s2.max(0.0).sqrt(),
    }
}

fn covariance_estimate(u: &[f64], x: &[f64]) -> Estimate {
    let (mu, mx) = (mean(u), mean(x));
    let products: Vec<f64> = u.iter().zip(x).map(|(a, b)| (a - mu) * (b - mx)).collect();
    Estimate {
        value: covariance(u, x),
        stderr: (variance(&products) / u.len() as f64).sqrt(),
    }
}

/// Fits `E u`, `Var u` and `E(u X X′)` linearly in `T` over `horizons` and
/// returns slopes (and the `E(u X X′)` intercept) with batch-means standard
/// errors.
pub fn estimate_asymptotics(
    model: &FactorModel,
    strategy: &Strategy,
    config: &SimConfig,
    horizons: &[f64],
) -> Result<AsymptoticFit> {
    if horizons.len() < 4 {
        return Err(Error::Precondition(format!(
            "need at least 4 horizons for a trend fit, got {}",
            horizons.len()
        )));
    }
    let snaps = run_paths(model, strategy, config, horizons)?;
    let times = snaps.times.clone();
    let n = snaps.n;
    let paths = snaps.values.len();

    // Statistic trajectories over the horizon grid for a subset of paths.
    let trajectories = |range: std::ops::Range<usize>| -> Vec<Vec<f64>> {
        // [mean_u, var_u, uxx_00, uxx_01, ...] per horizon
        times
            .iter()
            .enumerate()
            .map(|(slot, _)| {
                let u: Vec<f64> = range.clone().map(|p| snaps.u(p, slot)).collect();
                let mut row = vec![mean(&u), variance(&u)];
                for i in 0..n {
                    for j in 0..n {
                        let uxx: Vec<f64> = range
                            .clone()
                            .map(|p| {
                                let x = snaps.x(p, slot);
                                snaps.u(p, slot) * x[i] * x[j]
                            })
                            .collect();
                        row.push(mean(&uxx));
                    }
                }
                row
            })
            .collect()
    };

    let width = 2 + n * n;
    let fit_all = |rows: &[Vec<f64>]| -> Result<Vec<(f64, f64)>> {
        (0..width)
            .map(|c| {
                let ys: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                linear_fit(&times, &ys)
            })
            .collect()
    };

    let full = fit_all(&trajectories(0..paths))?;
    let per_batch: Vec<Vec<(f64, f64)>> = batch_ranges(paths, BATCHES)
        .into_iter()
        .map(|r| fit_all(&trajectories(r)))
        .collect::<Result<_>>()?;
    let estimate = |c: usize, intercept: bool| -> Estimate {
        let pick = |fit: &(f64, f64)| if intercept { fit.0 } else { fit.1 };
        let batch: Vec<f64> = per_batch.iter().map(|f| pick(&f[c])).collect();
        Estimate {
            value: pick(&full[c]),
            stderr: (variance(&batch) / batch.len() as f64).sqrt(),
        }
    };
    let matrix = |intercept: bool| -> Vec<Vec<Estimate>> {
        (0..n)
            .map(|i| (0..n).map(|j| estimate(2 + i * n + j, intercept)).collect())
            .collect()
    };

    Ok(AsymptoticFit {
        horizons: times.clone(),
        growth_rate: estimate(0, false),
        variance_rate: estimate(1, false),
        r: matrix(false),
        s: matrix(true),
        snapshots: (0..times.len())
            .map(|slot| path_stats(&snaps, slot, config))
            .collect(),
    })
}

/// Least-squares `(intercept, slope)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Numeric("degenerate trend fit".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Monthly excess returns and factor levels drawn from the model.
///
/// Factors follow the exact one-month transition from a stationary start.
/// The month-`t` return is `a + A X_{t−1} + Σ ΔW_t`, where `ΔW_t` is the
/// Brownian increment that also drives the factor over the month. Dates run
/// from 1970-01.
pub fn simulate_discrete(model: &FactorModel, months: usize, seed: u64) -> Result<TimeSeriesData> {
    if months < 24 {
        return Err(Error::Precondition(format!(
            "need at least 24 months, got {months}"
        )));
    }
    let (m, n) = (model.asset_count(), model.factor_count());
    let config = SimConfig {
        dt: 1.0,
        horizon: 1.0,
        paths: 2,
        seed,
        scheme: FactorScheme::Exact,
        antithetic: false,
        initial: InitialState::Stationary,
        keep_paths: false,
    };
    let zero = Strategy::zero(model);
    let stepper = Stepper::new(model, &zero, &config)?;
    let k = m + n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let mut x = vec![0.0; n];
    if let Some(root) = &stepper.initial {
        let z: Vec<f64> = (0..n).map(|_| normal()).collect();
        for i in 0..n {
            x[i] = (0..n).map(|j| root[i * n + j] * z[j]).sum();
        }
    }
    let mut returns = Vec::with_capacity(months * m);
    let mut factors = Vec::with_capacity(months * n);
    let mut eps = vec![0.0; k];
    let mut zeta = vec![0.0; n];
    for _ in 0..months {
        for e in eps.iter_mut() {
            *e = normal();
        }
        if stepper.residual.is_some() {
            for z in zeta.iter_mut() {
                *z = normal();
            }
        }
        for i in 0..m {
            let mut r = stepper.a[i];
            for j in 0..n {
                r += stepper.big_a[i * n + j] * x[j];
            }
            for c in 0..k {
                r += stepper.sigma[i * k + c] * eps[c];
            }
            returns.push(r);
        }
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += stepper.transition[i * n + j] * x[j];
            }
            for c in 0..k {
                acc += stepper.shock[i * k + c] * eps[c];
            }
            if let Some(res) = &stepper.residual {
                for j in 0..n {
                    acc += res[i * n + j] * zeta[j];
                }
            }
            next[i] = acc;
        }
        x = next;
        factors.extend_from_slice(&x);
    }
    if returns.iter().chain(&factors).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("simulated series is not finite".into()));
    }
    let dates = (0..months)
        .map(|t| format!("{:04}-{:02}", 1970 + t / 12, t % 12 + 1))
        .collect();
    TimeSeriesData::new(
        dates,
        Matrix::from_row_slice(months, m, &returns),
        Matrix::from_row_slice(months, n, &factors),
    )
}

/// Writes `path,T,u,x_1..x_n` rows for retained terminal values.
pub fn write_path_dump<W: std::io::Write>(stats: &PathStats, out: W) -> Result<()> {
    let (Some(us), Some(xs)) = (&stats.final_u, &stats.final_x) else {
        return Err(Error::Precondition(
            "per-path values were not retained (keep_paths is off)".into(),
        ));
    };
    let n = xs.first().map_or(0, Vec::len);
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["path".to_string(), "T".to_string(), "u".to_string()];
    header.extend((1..=n).map(|j| format!("x_{j}")));
    writer.write_record(&header)?;
    for (p, (u, x)) in us.iter().zip(xs).enumerate() {
        let mut row = vec![p.to_string(), stats.horizon.to_string(), u.to_string()];
        row.extend(x.iter().map(f64::to_string));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::model::reference_model;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            dt: 0.5,
            horizon: 50.0,
            paths: 64,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_drift_without_noise() {
        // Σ has a vanishing entry budget: use a tiny Σ and zero Λ so u(T) ≈ h′a T.
        let model = FactorModel::new(
            Vector::from_element(1, 0.01),
            Matrix::from_element(1, 1, 0.5),
            Matrix::from_element(1, 1, -0.1),
            Matrix::from_row_slice(1, 2, &[1e-150, 0.0]),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        let strategy = Strategy::scalar(2.0, 3.0);
        let stats = simulate(&model, &strategy, &small(1)).unwrap();
        assert!((stats.mean_u.value - 0.02 * 50.0).abs() < 1e-12);
        assert!(stats.var_u.value < 1e-24);
    }

    #[test]
    fn same_seed_same_stats() {
        let model = reference_model();
        let strategy = Strategy::scalar(1.0, 0.5);
        let a = simulate(&model, &strategy, &small(7)).unwrap();
        let b = simulate(&model, &strategy, &small(7)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, &strategy, &small(8)).unwrap();
        assert_ne!(a.mean_u, c.mean_u);
    }

    #[test]
    fn antithetic_needs_even_paths() {
        let config = SimConfig {
            antithetic: true,
            paths: 5,
            ..small(1)
        };
        assert!(matches!(config.validate(), Err(Error::Precondition(_))));
    }

    #[test]
    fn batches_respect_pairs() {
        let ranges = batch_ranges(10, 3);
        assert_eq!(ranges, vec![0..2, 2..6, 6..10]);
        assert!(batch_ranges(1000, 50).iter().all(|r| r.start % 2 == 0));
    }

    #[test]
    fn frozen_factors_in_discrete_series() {
        let model = FactorModel::scalar(0.01, -0.02, -0.1, 0.04, 0.0, 0.0).unwrap();
        let data = simulate_discrete(&model, 36, 3).unwrap();
        assert!(data.factor_levels().iter().all(|&x| x == 0.0));
        assert_eq!(data.dates()[0], "1970-01");
        assert_eq!(data.dates()[35], "1972-12");
    }

    #[test]
    fn discrete_series_needs_two_years() {
        assert!(simulate_discrete(&reference_model(), 23, 0).is_err());
    }

    #[test]
    fn path_dump_format() {
        let config = SimConfig {
            keep_paths: true,
            paths: 2,
            ..small(2)
        };
        let stats = simulate(&reference_model(), &Strategy::scalar(1.0, 0.0), &config).unwrap();
        let mut buf = Vec::new();
        write_path_dump(&stats, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "path,T,u,x_1");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,50,"));
    }

    #[test]
    fn trend_fit_needs_four_horizons() {
        let err = estimate_asymptotics(
            &reference_model(),
            &Strategy::scalar(1.0, 0.0),
            &small(1),
            &[10.0, 20.0, 30.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
