//! Calibration of a [`FactorModel`] from monthly excess returns and factor
//! levels.
//!
//! Two stages:
//!
//! 1. [`estimate_discrete`]: OLS of each month's excess return on a constant
//!    and last month's (de-meaned) factors, and a VAR(1) for the factors on
//!    the same regressors. Residual covariance of both equations is the
//!    innovation covariance.
//! 2. [`to_continuous`]: map the discrete estimates to `(a, A, B, Σ, Λ)`.
//!    The default drift map is `B = Φ − I`; the log map `B = log Φ` also
//!    inverts the exact one-month transition for the factor covariances.
//!
//! Σ and Λ are identified only up to a rotation of the Brownian coordinates.
//! The convention here is `Λ = [0 | chol(ΛΛ′)]`, the factor block of Σ from
//! the cross-covariance and the asset block from the Cholesky factor of the
//! remaining return covariance. For one asset and one factor this is
//! `Σ = (σ, η)`, `Λ = (0, λ)`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{FactorModel, ModelFields};

pub const MIN_OBSERVATIONS: usize = 24;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Aligned monthly observations. Row `t` holds the return realized over month
/// `t` and the factor level at the end of month `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    dates: Vec<String>,
    excess_returns: Matrix,
    factor_levels: Matrix,
}

impl TimeSeriesData {
    pub fn new(dates: Vec<String>, excess_returns: Matrix, factor_levels: Matrix) -> Result<Self> {
        let len = dates.len();
        if excess_returns.nrows() != len || factor_levels.nrows() != len {
            return Err(Error::Data(format!(
                "series lengths differ: {len} dates, {} return rows, {} factor rows",
                excess_returns.nrows(),
                factor_levels.nrows()
            )));
        }
        if len < MIN_OBSERVATIONS {
            return Err(Error::Data(format!(
                "need at least {MIN_OBSERVATIONS} observations, got {len}"
            )));
        }
        if excess_returns.ncols() == 0 || factor_levels.ncols() == 0 {
            return Err(Error::Data(
                "need at least one return and one factor series".into(),
            ));
        }
        if let Some(pos) = excess_returns
            .iter()
            .chain(factor_levels.iter())
            .position(|v| !v.is_finite())
        {
            return Err(Error::Data(format!("non-finite value at position {pos}")));
        }
        let mut previous: Option<(u64, u32)> = None;
        for date in &dates {
            let month = parse_month(date)?;
            if previous.is_some_and(|p| p >= month) {
                return Err(Error::Data(format!("dates are not increasing at {date}")));
            }
            previous = Some(month);
        }
        Ok(TimeSeriesData {
            dates,
            excess_returns,
            factor_levels,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    /// Observations × assets.
    pub fn excess_returns(&self) -> &Matrix {
        &self.excess_returns
    }

    /// Observations × factors.
    pub fn factor_levels(&self) -> &Matrix {
        &self.factor_levels
    }

    /// Reads `date,excess_return_1..m,factor_1..n`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let m = count_prefixed(&header, "excess_return_");
        let n = count_prefixed(&header, "factor_");
        let mut expected = vec!["date".to_string()];
        expected.extend((1..=m.max(1)).map(|i| format!("excess_return_{i}")));
        expected.extend((1..=n.max(1)).map(|j| format!("factor_{j}")));
        for name in &expected {
            if !header.contains(name) {
                return Err(Error::Data(format!("missing column `{name}`")));
            }
        }
        if header != expected {
            return Err(Error::Data(format!(
                "columns must be `{}` in that order, got `{}`",
                expected.join(","),
                header.join(",")
            )));
        }

        let mut dates = Vec::new();
        let mut returns = Vec::new();
        let mut factors = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let row = line + 2;
            if record.len() != expected.len() {
                return Err(Error::Data(format!(
                    "row {row}: expected {} fields, got {}",
                    expected.len(),
                    record.len()
                )));
            }
            dates.push(record[0].to_string());
            for (col, field) in record.iter().enumerate().skip(1) {
                if field.is_empty() {
                    return Err(Error::Data(format!(
                        "row {row}: missing value in `{}`",
                        expected[col]
                    )));
                }
                let value: f64 = field.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {row}: `{field}` in `{}` is not a number",
                        expected[col]
                    ))
                })?;
                if col <= m {
                    returns.push(value);
                } else {
                    factors.push(value);
                }
            }
        }
        let len = dates.len();
        TimeSeriesData::new(
            dates,
            Matrix::from_row_slice(len, m, &returns),
            Matrix::from_row_slice(len, n, &factors),
        )
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let (m, n) = (self.excess_returns.ncols(), self.factor_levels.ncols());
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend((1..=m).map(|i| format!("excess_return_{i}")));
        header.extend((1..=n).map(|j| format!("factor_{j}")));
        writer.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.clone()];
            row.extend(self.excess_returns.row(t).iter().map(f64::to_string));
            row.extend(self.factor_levels.row(t).iter().map(f64::to_string));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn parse_month(date: &str) -> Result<(u64, u32)> {
    // Years past 9999 occur in long synthetic series.
    let bad = || Error::Data(format!("date `{date}` is not YYYY-MM"));
    let (year, month) = date.split_once('-').ok_or_else(bad)?;
    if year.len() < 4 || month.len() != 2 || !year.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let year: u64 = year.parse().map_err(|_| bad())?;
    let month: u32 = month.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) {
        return Err(bad());
    }
    Ok((year, month))
}

fn count_prefixed(header: &[String], prefix: &str) -> usize {
    header.iter().filter(|h| h.starts_with(prefix)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub t_ratio: f64,
}

/// Discrete-time regression output, in the units of the regression data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEstimates {
    /// Regression sample size, when known.
    pub observations: Option<usize>,
    /// Per asset: constant of the return equation.
    pub return_intercept: Vec<Coefficient>,
    /// Per asset, per factor: loading of the return on last month's factor.
    pub return_loadings: Vec<Vec<Coefficient>>,
    pub factor_intercept: Vec<Coefficient>,
    /// Factor VAR(1) matrix `Φ`, row `i` is the equation for factor `i`.
    pub persistence: Vec<Vec<Coefficient>>,
    /// Residual covariance, returns first then factors.
    pub innovation_covariance: Vec<Vec<f64>>,
}

impl DiscreteEstimates {
    pub fn asset_count(&self) -> usize {
        self.return_intercept.len()
    }

    pub fn factor_count(&self) -> usize {
        self.factor_intercept.len()
    }

    fn check_shape(&self) -> Result<()> {
        let (m, n) = (self.asset_count(), self.factor_count());
        let rows_ok = |rows: &[Vec<Coefficient>], len, width| {
            rows.len() == len && rows.iter().all(|r| r.len() == width)
        };
        let cov_ok = self.innovation_covariance.len() == m + n
            && self.innovation_covariance.iter().all(|r| r.len() == m + n);
        if m == 0
            || n == 0
            || !rows_ok(&self.return_loadings, m, n)
            || !rows_ok(&self.persistence, n, n)
            || !cov_ok
        {
            return Err(Error::Data(format!(
                "discrete estimates are inconsistent with {m} assets and {n} factors"
            )));
        }
        Ok(())
    }
}

/// Monthly 1970–2000 estimates for the excess S&P 500 return on the lagged
/// 3-month T-bill rate, both in percent.
pub fn reference_tables() -> DiscreteEstimates {
    let c = |estimate, t_ratio| Coefficient { estimate, t_ratio };
    DiscreteEstimates {
        observations: None,
        return_intercept: vec![c(1.993, 3.505)],
        return_loadings: vec![vec![c(-1.177, -14.220)]],
        factor_intercept: vec![c(0.120, 0.911)],
        persistence: vec![vec![c(0.979, 42.885)]],
        innovation_covariance: vec![vec![19.587, 0.0553], vec![0.0553, 0.4006]],
    }
}

/// Units of the regression data relative to the model's conventions
/// (returns as decimal fractions, factors in percentage points).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitConventions {
    /// Returns (and hence return coefficients) are in percent.
    pub returns_in_percent: bool,
    /// Multiplier taking raw factor levels to model units.
    pub factor_scale: f64,
}

impl Default for UnitConventions {
    fn default() -> Self {
        UnitConventions {
            returns_in_percent: false,
            factor_scale: 1.0,
        }
    }
}

impl UnitConventions {
    /// Units of the published tables: everything in percent.
    pub fn tables() -> Self {
        UnitConventions {
            returns_in_percent: true,
            factor_scale: 1.0,
        }
    }

    fn return_scale(&self) -> f64 {
        if self.returns_in_percent {
            0.01
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftMap {
    /// `B = Φ − I`, covariances per month taken as instantaneous rates.
    Euler,
    /// `B = log Φ`, factor covariances from the exact one-month transition.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub units: UnitConventions,
    pub drift_map: DriftMap,
    /// Reject calibrations whose slowest mean reversion is weaker than this
    /// (per month).
    pub min_mean_reversion: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            units: UnitConventions::default(),
            drift_map: DriftMap::Euler,
            min_mean_reversion: 1e-4,
        }
    }
}

/// OLS estimates of the return and factor equations on lagged factors.
///
/// Factor levels are scaled by `units.factor_scale` and de-meaned first; the
/// sample mean is returned alongside the estimates.
pub fn estimate_discrete(
    data: &TimeSeriesData,
    units: &UnitConventions,
) -> Result<(DiscreteEstimates, Vec<f64>)> {
    let (m, n) = (data.excess_returns.ncols(), data.factor_levels.ncols());
    let len = data.len();
    let factors = data.factor_levels.map(|v| v * units.factor_scale);
    let factor_mean: Vec<f64> = (0..n).map(|j| factors.column(j).mean()).collect();
    let demeaned = Matrix::from_fn(len, n, |t, j| factors[(t, j)] - factor_mean[j]);

    let rows = len - 1;
    let k = 1 + n;
    let design = Matrix::from_fn(
        rows,
        k,
        |t, c| if c == 0 { 1.0 } else { demeaned[(t, c - 1)] },
    );
    let targets = Matrix::from_fn(rows, m + n, |t, c| {
        if c < m {
            data.excess_returns[(t + 1, c)]
        } else {
            demeaned[(t + 1, c - m)]
        }
    });

    let mut names = vec!["const".to_string()];
    names.extend((1..=n).map(|j| format!("factor_{j}")));
    check_rank(&design, &names)?;

    let gram = design.transpose() * &design;
    let gram_inv = gram
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient {
            columns: names.clone(),
        })?;
    let beta = &gram_inv * design.transpose() * &targets;
    let residuals = &targets - &design * &beta;
    let dof = rows as f64 - k as f64;
    if dof < 1.0 {
        return Err(Error::Data(
            "too few observations for the regression".into(),
        ));
    }
    let omega = residuals.transpose() * &residuals / dof;

    let coefficient = |row: usize, col: usize| {
        let se = (omega[(col, col)] * gram_inv[(row, row)]).sqrt();
        let estimate = beta[(row, col)];
        Coefficient {
            estimate,
            t_ratio: if se > 0.0 {
                estimate / se
            } else {
                f64::INFINITY.copysign(estimate)
            },
        }
    };

    let estimates = DiscreteEstimates {
        observations: Some(rows),
        return_intercept: (0..m).map(|i| coefficient(0, i)).collect(),
        return_loadings: (0..m)
            .map(|i| (0..n).map(|j| coefficient(1 + j, i)).collect())
            .collect(),
        factor_intercept: (0..n).map(|i| coefficient(0, m + i)).collect(),
        persistence: (0..n)
            .map(|i| (0..n).map(|j| coefficient(1 + j, m + i)).collect())
            .collect(),
        innovation_covariance: (0..m + n)
            .map(|i| (0..m + n).map(|j| omega[(i, j)]).collect())
            .collect(),
    };
    Ok((estimates, factor_mean))
}

fn check_rank(design: &Matrix, names: &[String]) -> Result<()> {
    // Scale columns so the check is unit-free.
    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    let scaled = Matrix::from_fn(design.nrows(), design.ncols(), |t, c| {
        if norms[c] > 0.0 {
            design[(t, c)] / norms[c]
        } else {
            0.0
        }
    });
    // Singular values of the k×k triangular factor equal those of the design.
    let svd = scaled.qr().r().svd(false, true);
    let values = &svd.singular_values;
    let largest = values.max();
    let (smallest_idx, smallest) = values.argmin();
    if largest > 0.0 && smallest > 1e-10 * largest {
        return Ok(());
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let null = v_t.row(smallest_idx);
    let peak = null.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let columns = null
        .iter()
        .zip(names)
        .filter(|(x, _)| x.abs() > 0.1 * peak)
        .map(|(_, name)| name.clone())
        .collect();
    Err(Error::RankDeficient { columns })
}

/// Continuous-time parameters from discrete estimates.
pub fn to_continuous(
    estimates: &DiscreteEstimates,
    options: &CalibrationOptions,
) -> Result<FactorModel> {
    estimates.check_shape()?;
    let (m, n) = (estimates.asset_count(), estimates.factor_count());
    let scale = options.units.return_scale();

    let persistence = Matrix::from_fn(n, n, |i, j| estimates.persistence[i][j].estimate);
    let radius = linalg::eigenvalues(&persistence)?
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.norm()));
    if !(radius < 1.0) {
        return Err(Error::Precondition(format!(
            "factor persistence has spectral radius {radius}, not below 1"
        )));
    }
    let identity = Matrix::identity(n, n);
    let b = match options.drift_map {
        DriftMap::Euler => &persistence - &identity,
        DriftMap::Log => linalg::logm(&persistence)?,
    };
    let margin = linalg::check_stability(&b)?.margin;
    if margin > -options.min_mean_reversion {
        return Err(Error::Precondition(format!(
            "factor mean reversion is too close to a unit root: largest eigenvalue real part {margin:e}, \
             limit {:e}",
            -options.min_mean_reversion
        )));
    }

    let omega = Matrix::from_fn(m + n, m + n, |i, j| estimates.innovation_covariance[i][j]);
    let return_cov = omega.view((0, 0), (m, m)) * (scale * scale);
    let factor_return_cov = omega.view((m, 0), (n, m)) * scale;
    let factor_innovation = omega.view((m, m), (n, n)).into_owned();

    // ΛΛ′ and ΛΣ′
    let (factor_cov, cross_cov) = match options.drift_map {
        DriftMap::Euler => (factor_innovation, factor_return_cov),
        DriftMap::Log => {
            // Stationary Δ from Δ = ΦΔΦ′ + Ω_xx, then ΛΛ′ = −(BΔ + ΔB′).
            let delta = solve_discrete_lyapunov(&persistence, &factor_innovation)?;
            let factor_cov = -(&b * &delta + &delta * b.transpose());
            // Cov(ν, e) = B⁻¹(Φ − I) ΛΣ′
            let cross = linalg::lu_solve(&(&persistence - &identity), &(&b * factor_return_cov))?;
            (linalg::symmetrize(&factor_cov), cross)
        }
    };

    let chol = linalg::cholesky_lower(&factor_cov, "factor innovation covariance")?;
    // L Σ_f′ = ΛΣ′
    let sigma_factor_t = chol
        .solve_lower_triangular(&cross_cov)
        .ok_or_else(|| Error::Numeric("singular factor covariance factor".into()))?;
    let sigma_factor = sigma_factor_t.transpose();
    let remaining = &return_cov - &sigma_factor * &sigma_factor_t;
    let sigma_asset = nalgebra::Cholesky::new(linalg::symmetrize(&remaining))
        .map(|c| c.l())
        .ok_or_else(|| Error::Numeric("cross-correlation too large for factorization".into()))?;

    let mut sigma = Matrix::zeros(m, m + n);
    sigma.view_mut((0, 0), (m, m)).copy_from(&sigma_asset);
    sigma.view_mut((0, m), (m, n)).copy_from(&sigma_factor);
    let mut lambda = Matrix::zeros(n, m + n);
    lambda.view_mut((0, m), (n, n)).copy_from(&chol);

    FactorModel::new(
        nalgebra::DVector::from_iterator(
            m,
            estimates
                .return_intercept
                .iter()
                .map(|c| c.estimate * scale),
        ),
        Matrix::from_fn(m, n, |i, j| {
            estimates.return_loadings[i][j].estimate * scale
        }),
        b,
        sigma,
        lambda,
    )
}

/// Solves `Δ = Φ Δ Φ′ + Q` through the vectorized system.
fn solve_discrete_lyapunov(phi: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = phi.nrows();
    let kron = phi.kronecker(phi);
    let system = Matrix::identity(n * n, n * n) - kron;
    let rhs = Matrix::from_column_slice(n * n, 1, q.as_slice());
    let solution = linalg::lu_solve(&system, &rhs)?;
    Ok(linalg::symmetrize(&Matrix::from_column_slice(
        n,
        n,
        solution.as_slice(),
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub v: u32,
    pub model: ModelFields,
    #[serde(rename = "regression")]
    pub estimates: DiscreteEstimates,
    /// Sample mean of the factors (model units) removed before fitting;
    /// absent when the estimates were supplied directly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor_mean: Option<Vec<f64>>,
    pub unit_conventions: UnitConventions,
    pub drift_map: DriftMap,
}

impl CalibrationReport {
    pub fn model(&self) -> Result<FactorModel> {
        crate::model::validate_model(&self.model)
    }
}

/// Discrete estimation followed by the continuous-time map.
pub fn calibrate(data: &TimeSeriesData, options: &CalibrationOptions) -> Result<CalibrationReport> {
    let (estimates, factor_mean) = estimate_discrete(data, &options.units)?;
    let model = to_continuous(&estimates, options)?;
    Ok(CalibrationReport {
        v: REPORT_SCHEMA_VERSION,
        model: model.to_fields(),
        estimates,
        factor_mean: Some(factor_mean),
        unit_conventions: options.units,
        drift_map: options.drift_map,
    })
}

/// Report for discrete estimates supplied directly, such as published
/// regression tables.
pub fn calibrate_estimates(
    estimates: DiscreteEstimates,
    options: &CalibrationOptions,
) -> Result<CalibrationReport> {
    let model = to_continuous(&estimates, options)?;
    Ok(CalibrationReport {
        v: REPORT_SCHEMA_VERSION,
        model: model.to_fields(),
        estimates,
        factor_mean: None,
        unit_conventions: options.units,
        drift_map: options.drift_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_options() -> CalibrationOptions {
        CalibrationOptions {
            units: UnitConventions::tables(),
            ..CalibrationOptions::default()
        }
    }

    #[test]
    fn reference_tables_map_to_calibrated_parameters() {
        let model = to_continuous(&reference_tables(), &table_options()).unwrap();
        assert_relative_eq!(model.drift()[0], 0.01993, max_relative = 1e-12);
        assert_relative_eq!(
            model.drift_loading()[(0, 0)],
            -0.01177,
            max_relative = 1e-12
        );
        assert_relative_eq!(model.mean_reversion()[(0, 0)], -0.021, max_relative = 1e-12);
        assert_relative_eq!(
            model.factor_diffusion()[(0, 1)],
            0.4006f64.sqrt(),
            max_relative = 1e-14
        );
        assert_eq!(model.factor_diffusion()[(0, 0)], 0.0);
        let eta = 0.000553 / 0.4006f64.sqrt();
        assert_relative_eq!(model.asset_diffusion()[(0, 1)], eta, max_relative = 1e-12);
        assert_relative_eq!(
            model.asset_diffusion()[(0, 0)],
            (0.0019587 - eta * eta).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_cross_covariance() {
        let mut tables = reference_tables();
        tables.innovation_covariance[0][1] = 0.0;
        tables.innovation_covariance[1][0] = 0.0;
        let model = to_continuous(&tables, &table_options()).unwrap();
        assert_eq!(model.asset_diffusion()[(0, 1)], 0.0);
        assert_relative_eq!(
            model.asset_diffusion()[(0, 0)],
            19.587f64.sqrt() / 100.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn near_unit_root_rejected() {
        let mut tables = reference_tables();
        tables.persistence[0][0].estimate = 0.999999;
        let err = to_continuous(&tables, &table_options()).unwrap_err();
        assert!(matches!(err, Error::Precondition(msg) if msg.contains("unit root")));
    }

    #[test]
    fn explosive_persistence_rejected() {
        let mut tables = reference_tables();
        tables.persistence[0][0].estimate = 1.01;
        assert!(matches!(
            to_continuous(&tables, &table_options()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn excessive_cross_correlation_rejected() {
        let mut tables = reference_tables();
        tables.innovation_covariance[0][1] = 3.0;
        tables.innovation_covariance[1][0] = 3.0;
        let err = to_continuous(&tables, &table_options()).unwrap_err();
        assert!(err
            .to_string()
            .contains("cross-correlation too large for factorization"));
    }

    #[test]
    fn log_map_uses_logarithm() {
        let options = CalibrationOptions {
            drift_map: DriftMap::Log,
            ..table_options()
        };
        let model = to_continuous(&reference_tables(), &options).unwrap();
        assert_relative_eq!(
            model.mean_reversion()[(0, 0)],
            0.979f64.ln(),
            max_relative = 1e-12
        );
    }

    fn series(len: usize, factor: impl Fn(usize) -> f64) -> TimeSeriesData {
        let dates = (0..len)
            .map(|t| format!("{:04}-{:02}", 2000 + t / 12, t % 12 + 1))
            .collect();
        TimeSeriesData::new(
            dates,
            Matrix::from_fn(len, 1, |t, _| 0.01 * ((t * 7 % 11) as f64 - 5.0)),
            Matrix::from_fn(len, 1, |t, _| factor(t)),
        )
        .unwrap()
    }

    #[test]
    fn constant_factor_is_rank_deficient() {
        let data = series(40, |_| 5.0);
        match estimate_discrete(&data, &UnitConventions::default()) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["factor_1"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn too_short_series_rejected() {
        let dates = (1..=12).map(|m| format!("2001-{m:02}")).collect();
        let err =
            TimeSeriesData::new(dates, Matrix::zeros(12, 1), Matrix::zeros(12, 1)).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn csv_missing_column_named() {
        let text = "date,excess_return_1\n2000-01,0.01\n";
        let err = TimeSeriesData::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("factor_1"), "{err}");
    }

    #[test]
    fn csv_bad_date_and_missing_value() {
        let mut text = String::from("date,excess_return_1,factor_1\n");
        for t in 0..30 {
            text.push_str(&format!("2000/{:02},0.01,{t}\n", t % 12 + 1));
        }
        assert!(TimeSeriesData::read_csv(text.as_bytes()).is_err());
        let text = "date,excess_return_1,factor_1\n2000-01,,1.0\n";
        let err = TimeSeriesData::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing value"), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let data = series(30, |t| (t as f64 * 0.37).sin() + 5.0);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = TimeSeriesData::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn regression_recovers_exact_linear_relation() {
        // factor AR(1) without noise is degenerate, so use a deterministic
        // oscillation; returns are an exact affine function of lagged factors.
        let len = 60;
        let f = |t: usize| (t as f64 * 0.9).sin() * 2.0 + 4.0;
        let dates = (0..len)
            .map(|t| format!("{:04}-{:02}", 1990 + t / 12, t % 12 + 1))
            .collect();
        let mean: f64 = (0..len).map(f).sum::<f64>() / len as f64;
        let returns = Matrix::from_fn(len, 1, |t, _| {
            if t == 0 {
                0.0
            } else {
                0.02 - 0.5 * (f(t - 1) - mean)
            }
        });
        let data =
            TimeSeriesData::new(dates, returns, Matrix::from_fn(len, 1, |t, _| f(t))).unwrap();
        let (est, factor_mean) = estimate_discrete(&data, &UnitConventions::default()).unwrap();
        assert_relative_eq!(factor_mean[0], mean, max_relative = 1e-14);
        assert_relative_eq!(est.return_intercept[0].estimate, 0.02, epsilon = 1e-12);
        assert_relative_eq!(est.return_loadings[0][0].estimate, -0.5, epsilon = 1e-12);
        assert!(est.innovation_covariance[0][0] < 1e-20);
    }
}
