//! Factor-model dynamics, linear strategies and criterion parameters.
//!
//! Asset returns `dS/S = (a + A X) dt + Σ dW` and factors `dX = B X dt + Λ dW`
//! share one `(m + n)`-dimensional Brownian motion `W`. The first `m` columns
//! of `Σ` and `Λ` load on the asset-specific shocks, the last `n` on the
//! factor shocks.
//!
//! Units: time is measured in months, asset returns in decimal fractions and
//! factors in percentage points. The calibration module owns the conversions.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// One failed invariant of a candidate model.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension {
        field: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    EmptyDimension {
        field: &'static str,
    },
    NonFinite {
        field: &'static str,
    },
    Unstable {
        margin: f64,
    },
    SingularAssetCovariance {
        min_eigenvalue: f64,
        trace: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension {
                field,
                expected,
                found,
            } => write!(
                f,
                "{field} should be {}x{} but is {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Violation::EmptyDimension { field } => write!(f, "{field} must be at least 1"),
            Violation::NonFinite { field } => write!(f, "{field} has non-finite entries"),
            Violation::Unstable { margin } => write!(
                f,
                "B is not stable (largest eigenvalue real part {margin:e})"
            ),
            Violation::SingularAssetCovariance {
                min_eigenvalue,
                trace,
            } => write!(
                f,
                "Sigma Sigma' is singular (min eigenvalue {min_eigenvalue:e}, trace {trace:e})"
            ),
        }
    }
}

/// Unvalidated model fields, as read from JSON or assembled by calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFields {
    #[serde(default = "schema_version")]
    pub v: u32,
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
    #[serde(rename = "A")]
    pub drift_loading: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub mean_reversion: Vec<Vec<f64>>,
    #[serde(rename = "Sigma")]
    pub asset_diffusion: Vec<Vec<f64>>,
    #[serde(rename = "Lambda")]
    pub factor_diffusion: Vec<Vec<f64>>,
}

fn schema_version() -> u32 {
    MODEL_SCHEMA_VERSION
}

/// Validated factor dynamics. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    a: Vector,
    drift_loading: Matrix,
    mean_reversion: Matrix,
    asset_diffusion: Matrix,
    factor_diffusion: Matrix,
}

impl FactorModel {
    pub fn new(
        a: Vector,
        drift_loading: Matrix,
        mean_reversion: Matrix,
        asset_diffusion: Matrix,
        factor_diffusion: Matrix,
    ) -> Result<Self> {
        let m = a.len();
        let n = mean_reversion.nrows();
        let mut violations = Vec::new();
        if m == 0 {
            violations.push(Violation::EmptyDimension { field: "m" });
        }
        if n == 0 {
            violations.push(Violation::EmptyDimension { field: "n" });
        }
        let mut check = |field, mat: &Matrix, rows, cols| {
            if mat.shape() != (rows, cols) {
                violations.push(Violation::Dimension {
                    field,
                    expected: (rows, cols),
                    found: mat.shape(),
                });
            }
        };
        check("A", &drift_loading, m, n);
        check("B", &mean_reversion, n, n);
        check("Sigma", &asset_diffusion, m, m + n);
        check("Lambda", &factor_diffusion, n, m + n);

        let finite = |field, values: &[f64]| {
            (!values.iter().all(|x| x.is_finite())).then_some(Violation::NonFinite { field })
        };
        violations.extend(finite("a", a.as_slice()));
        violations.extend(finite("A", drift_loading.as_slice()));
        violations.extend(finite("B", mean_reversion.as_slice()));
        violations.extend(finite("Sigma", asset_diffusion.as_slice()));
        violations.extend(finite("Lambda", factor_diffusion.as_slice()));

        if violations.is_empty() {
            match linalg::check_stability(&mean_reversion) {
                Ok(report) if report.is_safely_stable() => {}
                Ok(report) => violations.push(Violation::Unstable {
                    margin: report.margin,
                }),
                Err(err) => return Err(err),
            }
            let cov = &asset_diffusion * asset_diffusion.transpose();
            let trace = cov.trace();
            let min_eigenvalue = linalg::min_symmetric_eigenvalue(&cov);
            if !(min_eigenvalue > 1e-12 * trace) {
                violations.push(Violation::SingularAssetCovariance {
                    min_eigenvalue,
                    trace,
                });
            }
        }

        if violations.is_empty() {
            Ok(FactorModel {
                a,
                drift_loading,
                mean_reversion,
                asset_diffusion,
                factor_diffusion,
            })
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    /// One asset, one factor: `Σ = (σ, η)`, `Λ = (0, λ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(a: f64, big_a: f64, b: f64, sigma: f64, eta: f64, lambda: f64) -> Result<Self> {
        FactorModel::new(
            Vector::from_element(1, a),
            Matrix::from_element(1, 1, big_a),
            Matrix::from_element(1, 1, b),
            Matrix::from_row_slice(1, 2, &[sigma, eta]),
            Matrix::from_row_slice(1, 2, &[0.0, lambda]),
        )
    }

    pub fn asset_count(&self) -> usize {
        self.a.len()
    }

    pub fn factor_count(&self) -> usize {
        self.mean_reversion.nrows()
    }

    /// `a`, the return drift intercept.
    pub fn drift(&self) -> &Vector {
        &self.a
    }

    /// `A`, drift loading on factors (m×n).
    pub fn drift_loading(&self) -> &Matrix {
        &self.drift_loading
    }

    /// `B`, factor mean reversion (n×n).
    pub fn mean_reversion(&self) -> &Matrix {
        &self.mean_reversion
    }

    /// `Σ` (m×(m+n)).
    pub fn asset_diffusion(&self) -> &Matrix {
        &self.asset_diffusion
    }

    /// `Λ` (n×(m+n)).
    pub fn factor_diffusion(&self) -> &Matrix {
        &self.factor_diffusion
    }

    /// `ΣΣ′`.
    pub fn asset_covariance(&self) -> Matrix {
        &self.asset_diffusion * self.asset_diffusion.transpose()
    }

    /// `ΛΛ′`.
    pub fn factor_covariance(&self) -> Matrix {
        &self.factor_diffusion * self.factor_diffusion.transpose()
    }

    /// `ΛΣ′` (n×m), instantaneous factor/return covariance.
    pub fn cross_covariance(&self) -> Matrix {
        &self.factor_diffusion * self.asset_diffusion.transpose()
    }

    pub fn to_fields(&self) -> ModelFields {
        ModelFields {
            v: MODEL_SCHEMA_VERSION,
            m: self.asset_count(),
            n: self.factor_count(),
            a: self.a.iter().copied().collect(),
            drift_loading: rows(&self.drift_loading),
            mean_reversion: rows(&self.mean_reversion),
            asset_diffusion: rows(&self.asset_diffusion),
            factor_diffusion: rows(&self.factor_diffusion),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_fields())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fields: ModelFields = serde_json::from_str(text)?;
        validate_model(&fields)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Checks every model invariant and returns either the model or the full
/// list of violations.
pub fn validate_model(fields: &ModelFields) -> Result<FactorModel> {
    if fields.v != MODEL_SCHEMA_VERSION {
        return Err(Error::Data(format!(
            "unsupported model schema version {} (expected {MODEL_SCHEMA_VERSION})",
            fields.v
        )));
    }
    let (m, n) = (fields.m, fields.n);
    let mut violations = Vec::new();
    if fields.a.len() != m {
        violations.push(Violation::Dimension {
            field: "a",
            expected: (m, 1),
            found: (fields.a.len(), 1),
        });
    }
    let mut matrix = |field, values: &[Vec<f64>], nrows, ncols| match from_rows(values, ncols) {
        Some(mat) if mat.shape() == (nrows, ncols) => mat,
        _ => {
            let found = (values.len(), values.first().map_or(0, Vec::len));
            violations.push(Violation::Dimension {
                field,
                expected: (nrows, ncols),
                found,
            });
            Matrix::zeros(nrows, ncols)
        }
    };
    let drift_loading = matrix("A", &fields.drift_loading, m, n);
    let mean_reversion = matrix("B", &fields.mean_reversion, n, n);
    let asset_diffusion = matrix("Sigma", &fields.asset_diffusion, m, m + n);
    let factor_diffusion = matrix("Lambda", &fields.factor_diffusion, n, m + n);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    FactorModel::new(
        Vector::from_vec(fields.a.clone()),
        drift_loading,
        mean_reversion,
        asset_diffusion,
        factor_diffusion,
    )
}

/// The calibrated one-asset, one-factor model: excess stock return on the
/// S&P composite, factor the 3-month T-bill rate, monthly, 1970–2000.
pub fn reference_model() -> FactorModel {
    FactorModel::scalar(0.01993, -0.01177, -0.021, 0.044249, 0.000874, 0.6329)
        .expect("calibrated fixture is a valid model")
}

/// Linear investment rule `I = h + H X`, weights as fractions of wealth.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    base: Vector,
    tilt: Matrix,
}

impl Strategy {
    pub fn new(base: Vector, tilt: Matrix) -> Result<Self> {
        if tilt.nrows() != base.len() {
            return Err(Error::Dimension(format!(
                "strategy: h has {} entries but H has {} rows",
                base.len(),
                tilt.nrows()
            )));
        }
        if base.iter().chain(tilt.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Data("strategy has non-finite entries".into()));
        }
        Ok(Strategy { base, tilt })
    }

    pub fn scalar(h: f64, big_h: f64) -> Self {
        Strategy {
            base: Vector::from_element(1, h),
            tilt: Matrix::from_element(1, 1, big_h),
        }
    }

    pub fn zero(model: &FactorModel) -> Self {
        Strategy {
            base: Vector::zeros(model.asset_count()),
            tilt: Matrix::zeros(model.asset_count(), model.factor_count()),
        }
    }

    /// `h`, the average portfolio weights.
    pub fn base(&self) -> &Vector {
        &self.base
    }

    /// `H`, weight sensitivity to factors (m×n).
    pub fn tilt(&self) -> &Matrix {
        &self.tilt
    }

    pub fn check_compatible(&self, model: &FactorModel) -> Result<()> {
        let expected = (model.asset_count(), model.factor_count());
        if self.base.len() != expected.0 || self.tilt.shape() != expected {
            return Err(Error::Dimension(format!(
                "strategy is for {} assets and {} factors, model has {} and {}",
                self.base.len(),
                self.tilt.ncols(),
                expected.0,
                expected.1
            )));
        }
        Ok(())
    }

    /// Flattened coordinates `(h, vec_rowmajor(H))` used by the optimizer.
    pub fn to_coordinates(&self) -> Vec<f64> {
        let mut z: Vec<f64> = self.base.iter().copied().collect();
        for i in 0..self.tilt.nrows() {
            z.extend(self.tilt.row(i).iter());
        }
        z
    }

    pub fn from_coordinates(z: &[f64], m: usize, n: usize) -> Result<Self> {
        if z.len() != m + m * n {
            return Err(Error::Dimension(format!(
                "expected {} strategy coordinates, got {}",
                m + m * n,
                z.len()
            )));
        }
        Strategy::new(
            Vector::from_column_slice(&z[..m]),
            Matrix::from_row_slice(m, n, &z[m..]),
        )
    }
}

/// Risk sensitivity `θ` and factor sensitivity `Γ` of the criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionParams {
    theta: f64,
    gamma: Vector,
}

impl CriterionParams {
    pub fn new(theta: f64, gamma: Vector) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::Precondition(format!(
                "risk sensitivity must be finite and nonnegative, got {theta}"
            )));
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::Precondition(
                "factor sensitivity must be finite".into(),
            ));
        }
        Ok(CriterionParams { theta, gamma })
    }

    pub fn scalar(theta: f64, gamma: f64) -> Result<Self> {
        Self::new(theta, Vector::from_element(1, gamma))
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `Γ`, one weight per factor.
    pub fn gamma(&self) -> &Vector {
        &self.gamma
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(values: &[Vec<f64>], ncols: usize) -> Option<Matrix> {
    if values.iter().any(|row| row.len() != ncols) {
        return None;
    }
    let flat: Vec<f64> = values.iter().flatten().copied().collect();
    Some(Matrix::from_row_slice(values.len(), ncols, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_fields() -> ModelFields {
        reference_model().to_fields()
    }

    #[test]
    fn fixture_values() {
        let model = reference_model();
        assert_eq!(model.drift()[0], 0.01993);
        assert_eq!(model.drift_loading()[(0, 0)], -0.01177);
        assert_eq!(model.mean_reversion()[(0, 0)], -0.021);
        assert_eq!(model.asset_diffusion().as_slice(), &[0.044249, 0.000874]);
        assert_eq!(model.factor_diffusion()[(0, 1)], 0.6329);
        assert_eq!(model.factor_diffusion()[(0, 0)], 0.0);
    }

    #[test]
    fn fixture_validates() {
        let model = validate_model(&fixture_fields()).unwrap();
        assert_eq!(model, reference_model());
    }

    #[test]
    fn unstable_b_rejected() {
        let mut fields = fixture_fields();
        fields.mean_reversion = vec![vec![0.1]];
        match validate_model(&fields) {
            Err(Error::InvalidModel(v)) => {
                assert!(matches!(v.as_slice(), [Violation::Unstable { .. }]))
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn zero_sigma_row_rejected() {
        let mut fields = fixture_fields();
        fields.asset_diffusion = vec![vec![0.0, 0.0]];
        match validate_model(&fields) {
            Err(Error::InvalidModel(v)) => assert!(matches!(
                v.as_slice(),
                [Violation::SingularAssetCovariance { .. }]
            )),
            other => panic!("expected singular covariance, got {other:?}"),
        }
    }

    #[test]
    fn reports_every_dimension_problem() {
        let mut fields = fixture_fields();
        fields.drift_loading = vec![vec![1.0, 2.0]];
        fields.factor_diffusion = vec![vec![0.0]];
        match validate_model(&fields) {
            Err(Error::InvalidModel(v)) => {
                let names: Vec<_> = v
                    .iter()
                    .map(|x| match x {
                        Violation::Dimension { field, .. } => *field,
                        _ => "",
                    })
                    .collect();
                assert_eq!(names, ["A", "Lambda"]);
            }
            other => panic!("expected dimension errors, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut fields = fixture_fields();
        fields.a = vec![f64::NAN];
        assert!(matches!(
            validate_model(&fields),
            Err(Error::InvalidModel(v)) if v == vec![Violation::NonFinite { field: "a" }]
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let model = reference_model();
        let text = model.to_json().unwrap();
        assert!(text.contains("\"v\": 1"));
        assert!(text.contains("\"Lambda\""));
        assert_eq!(FactorModel::from_json(&text).unwrap(), model);
    }

    #[test]
    fn wrong_schema_version() {
        let mut fields = fixture_fields();
        fields.v = 2;
        assert!(matches!(validate_model(&fields), Err(Error::Data(_))));
    }

    #[test]
    fn strategy_coordinates() {
        let s = Strategy::new(
            Vector::from_vec(vec![1.0, 2.0]),
            Matrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]),
        )
        .unwrap();
        let z = s.to_coordinates();
        assert_eq!(z, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(Strategy::from_coordinates(&z, 2, 2).unwrap(), s);
    }

    #[test]
    fn negative_theta_rejected() {
        assert!(CriterionParams::scalar(-1.0, 0.0).is_err());
        assert!(CriterionParams::scalar(0.0, 0.0).is_ok());
    }
}
