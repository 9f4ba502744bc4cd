//! Asymptotic moments of log-wealth `u(t) = ln U(t) − ln U(0)` for a linear
//! strategy under the factor model.
//!
//! * `E u(t) = K t`
//! * `Var u(t) = varRate · t + const`
//! * `E(u X)(t) → P`
//! * `E(u X X′)(t) = R t + S + o(1)` with `R = K Δ`
//!
//! where `Δ` is the stationary factor covariance. Two independent routes are
//! provided: [`moments`] works with general matrices and [`scalar_moments`]
//! evaluates the one-asset, one-factor closed forms directly.

use crate::error::{Error, Result};
use crate::linalg::{self, LyapunovSolver, Matrix, Vector};
use crate::model::{FactorModel, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticMoments {
    /// `K`, growth rate of `E u`.
    pub growth_rate: f64,
    /// Asymptotic slope of `Var u`.
    pub variance_rate: f64,
    /// `P = lim E(u X)` (n-vector).
    pub covariance_limit: Vector,
    /// `Δ = E(X X′)`, stationary factor covariance.
    pub delta: Matrix,
    /// `Y`, the (m+n)-row vector whose square norm is the linear part of `varRate`.
    pub y: Vector,
    /// Constant term of `E(u X X′)`.
    pub s: Matrix,
    /// Slope of `E(u X X′)`, `K Δ`.
    pub r: Matrix,
}

/// Δ solving `B Δ + Δ B′ + Λ Λ′ = 0`.
pub fn stationary_covariance(model: &FactorModel) -> Result<Matrix> {
    linalg::solve_lyapunov_const(model.mean_reversion(), &model.factor_covariance())
}

/// Model-dependent pieces of the moment formulas, computed once and reused
/// across strategies.
#[derive(Debug, Clone)]
pub struct MomentEngine {
    model: FactorModel,
    delta: Matrix,
    /// ΣΣ′
    asset_cov: Matrix,
    /// ΛΣ′
    cross_cov: Matrix,
    mean_reversion_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    mean_reversion_t_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lyapunov: LyapunovSolver,
}

impl MomentEngine {
    pub fn new(model: &FactorModel) -> Result<Self> {
        let b = model.mean_reversion();
        let lyapunov = LyapunovSolver::new(b)?;
        let delta = lyapunov.solve(&(-model.factor_covariance()))?;
        Ok(MomentEngine {
            model: model.clone(),
            delta,
            asset_cov: model.asset_covariance(),
            cross_cov: model.cross_covariance(),
            mean_reversion_lu: b.clone().lu(),
            mean_reversion_t_lu: b.transpose().lu(),
            lyapunov,
        })
    }

    pub fn model(&self) -> &FactorModel {
        &self.model
    }

    /// Δ
    pub fn stationary_covariance(&self) -> &Matrix {
        &self.delta
    }

    /// `h′a − ½h′ΣΣ′h + tr(Δ(H′A − ½H′ΣΣ′H))`
    pub fn growth_rate(&self, strategy: &Strategy) -> Result<f64> {
        strategy.check_compatible(&self.model)?;
        let (h, tilt) = (strategy.base(), strategy.tilt());
        let quad = tilt.transpose() * self.model.drift_loading()
            - tilt.transpose() * &self.asset_cov * tilt * 0.5;
        Ok(
            h.dot(self.model.drift()) - 0.5 * h.dot(&(&self.asset_cov * h))
                + (&self.delta * quad).trace(),
        )
    }

    /// `H′ΣΣ′h − A′h − H′a`, the factor-space drift sensitivity shared by `P` and `Y`.
    fn drift_slope(&self, strategy: &Strategy) -> Vector {
        let (h, tilt_t) = (strategy.base(), strategy.tilt().transpose());
        &tilt_t * (&self.asset_cov * h)
            - self.model.drift_loading().transpose() * h
            - tilt_t * self.model.drift()
    }

    /// `P = B⁻¹ [Δ (H′ΣΣ′h − A′h − H′a) − ΛΣ′h]`
    pub fn covariance_limit(&self, strategy: &Strategy) -> Result<Vector> {
        strategy.check_compatible(&self.model)?;
        let rhs = &self.delta * self.drift_slope(strategy) - &self.cross_cov * strategy.base();
        self.mean_reversion_lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("B is singular".into()))
    }

    /// `Y′ = Λ′ B′⁻¹ (H′ΣΣ′h − A′h − H′a) + Σ′h`, the transpose of the row
    /// vector `(h′ΣΣ′H − h′A − a′H) B⁻¹ Λ + h′Σ`.
    pub fn y(&self, strategy: &Strategy) -> Result<Vector> {
        strategy.check_compatible(&self.model)?;
        let solved = self
            .mean_reversion_t_lu
            .solve(&self.drift_slope(strategy))
            .ok_or_else(|| Error::Numeric("B is singular".into()))?;
        Ok(self.model.factor_diffusion().transpose() * solved
            + self.model.asset_diffusion().transpose() * strategy.base())
    }

    /// Solves `B S + S B′ = sym(−2ΔH′AΔ + ΔH′ΣΣ′HΔ − 2ΛΣ′HΔ)`.
    ///
    /// The cross-variation terms of `d(uXX′)` contribute `ΛΣ′HΔ + ΔH′ΣΛ′`,
    /// so the right-hand side is taken as its symmetric part and `S` is the
    /// symmetric solution.
    pub fn s(&self, strategy: &Strategy) -> Result<Matrix> {
        strategy.check_compatible(&self.model)?;
        let delta = &self.delta;
        let (tilt, tilt_t) = (strategy.tilt(), strategy.tilt().transpose());
        let rhs = delta * &tilt_t * self.model.drift_loading() * delta * -2.0
            + delta * &tilt_t * &self.asset_cov * tilt * delta
            - &self.cross_cov * tilt * delta * 2.0;
        self.lyapunov.solve(&linalg::symmetrize(&rhs))
    }

    /// Returns `(varRate, Y, S)` with `varRate = YY′ + tr(2SH′A + (Δ − S)H′ΣΣ′H)`.
    pub fn variance_rate(&self, strategy: &Strategy) -> Result<(f64, Vector, Matrix)> {
        let y = self.y(strategy)?;
        let s = self.s(strategy)?;
        let tilt = strategy.tilt();
        let hta = tilt.transpose() * self.model.drift_loading();
        let htsh = tilt.transpose() * &self.asset_cov * tilt;
        let rate = y.dot(&y) + (&s * hta * 2.0 + (&self.delta - &s) * htsh).trace();
        Ok((rate, y, s))
    }

    pub fn moments(&self, strategy: &Strategy) -> Result<AsymptoticMoments> {
        let growth_rate = self.growth_rate(strategy)?;
        let covariance_limit = self.covariance_limit(strategy)?;
        let (variance_rate, y, s) = self.variance_rate(strategy)?;
        Ok(AsymptoticMoments {
            growth_rate,
            variance_rate,
            covariance_limit,
            delta: self.delta.clone(),
            y,
            s,
            r: &self.delta * growth_rate,
        })
    }
}

pub fn growth_rate(model: &FactorModel, strategy: &Strategy) -> Result<f64> {
    MomentEngine::new(model)?.growth_rate(strategy)
}

pub fn covariance_limit(model: &FactorModel, strategy: &Strategy) -> Result<Vector> {
    MomentEngine::new(model)?.covariance_limit(strategy)
}

/// Returns `(varRate, Y, S)`.
pub fn variance_rate(model: &FactorModel, strategy: &Strategy) -> Result<(f64, Vector, Matrix)> {
    MomentEngine::new(model)?.variance_rate(strategy)
}

pub fn moments(model: &FactorModel, strategy: &Strategy) -> Result<AsymptoticMoments> {
    MomentEngine::new(model)?.moments(strategy)
}

/// Parameters of the one-asset, one-factor model: `Σ = (σ, η)`, `Λ = (0, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarModel {
    pub a: f64,
    pub big_a: f64,
    pub b: f64,
    pub sigma: f64,
    pub eta: f64,
    pub lambda: f64,
}

impl ScalarModel {
    /// Reads the scalar parameters of a model with `m = n = 1` and the
    /// `Λ = (0, λ)` layout.
    pub fn from_model(model: &FactorModel) -> Result<Self> {
        if model.asset_count() != 1 || model.factor_count() != 1 {
            return Err(Error::Dimension("scalar moments need m = n = 1".into()));
        }
        let lam = model.factor_diffusion();
        if lam[(0, 0)] != 0.0 {
            return Err(Error::Precondition(
                "scalar moments need Lambda = (0, lambda)".into(),
            ));
        }
        Ok(ScalarModel {
            a: model.drift()[0],
            big_a: model.drift_loading()[(0, 0)],
            b: model.mean_reversion()[(0, 0)],
            sigma: model.asset_diffusion()[(0, 0)],
            eta: model.asset_diffusion()[(0, 1)],
            lambda: lam[(0, 1)],
        })
    }
}

/// One-asset, one-factor closed forms, written out term by term without any
/// matrix machinery. `x_var = λ²/(−2B)` is the stationary factor variance.
pub fn scalar_moments(p: ScalarModel, h: f64, big_h: f64) -> Result<AsymptoticMoments> {
    let ScalarModel {
        a,
        big_a,
        b,
        sigma,
        eta,
        lambda,
    } = p;
    if !(b < 0.0) {
        return Err(Error::Precondition(format!(
            "mean reversion must be negative, got {b}"
        )));
    }
    let s2 = sigma * sigma + eta * eta;
    let x_var = lambda * lambda / (-2.0 * b);

    let k = h * a - 0.5 * s2 * h * h + x_var * (big_h * big_a - 0.5 * big_h * big_h * s2);

    let drift_slope = h * big_h * s2 - big_a * h - big_h * a;
    let cov = x_var / b * drift_slope - lambda * eta * h / b;

    let y = [h * sigma, drift_slope * lambda / b + h * eta];
    let s = x_var / (2.0 * b)
        * (-2.0 * x_var * big_h * big_a + x_var * big_h * big_h * s2 - 2.0 * lambda * eta * big_h);
    let var_rate =
        y[0] * y[0] + y[1] * y[1] + 2.0 * s * big_h * big_a + (x_var - s) * big_h * big_h * s2;

    Ok(AsymptoticMoments {
        growth_rate: k,
        variance_rate: var_rate,
        covariance_limit: Vector::from_element(1, cov),
        delta: Matrix::from_element(1, 1, x_var),
        y: Vector::from_column_slice(&y),
        s: Matrix::from_element(1, 1, s),
        r: Matrix::from_element(1, 1, k * x_var),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_model;
    use approx::assert_relative_eq;

    // Pinned from exact decimal arithmetic on the calibrated constants.
    const FIXTURE_DELTA: f64 = 9.537_200_238_095_238;
    const FIXTURE_K_H1: f64 = 0.018_950_631_061_5;
    const FIXTURE_P_H1: f64 = -5.319_032_962_018_141;
    const FIXTURE_Y2_H1: f64 = -0.353_851_380_952_381;
    const FIXTURE_VAR_H1: f64 = 0.127_168_773_802_907_03;

    #[test]
    fn fixture_stationary_covariance() {
        let delta = stationary_covariance(&reference_model()).unwrap();
        assert_relative_eq!(delta[(0, 0)], FIXTURE_DELTA, max_relative = 1e-13);
    }

    #[test]
    fn frozen_factors_have_zero_covariance() {
        let model = FactorModel::scalar(0.01, 0.0, -0.5, 0.04, 0.0, 0.0).unwrap();
        assert_eq!(stationary_covariance(&model).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn two_factor_identity_covariance() {
        let model = FactorModel::new(
            Vector::from_element(1, 0.0),
            Matrix::zeros(1, 2),
            -Matrix::identity(2, 2),
            Matrix::from_row_slice(1, 3, &[0.1, 0.0, 0.0]),
            Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        let delta = stationary_covariance(&model).unwrap();
        assert_relative_eq!(delta, Matrix::identity(2, 2) * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn zero_strategy_is_all_zero() {
        let model = reference_model();
        let mom = moments(&model, &Strategy::zero(&model)).unwrap();
        assert_eq!(mom.growth_rate, 0.0);
        assert_eq!(mom.variance_rate, 0.0);
        assert_eq!(mom.covariance_limit[0], 0.0);
        assert_eq!(mom.y.norm(), 0.0);
        assert_eq!(mom.s.norm(), 0.0);
        assert_eq!(mom.r.norm(), 0.0);
    }

    #[test]
    fn fixture_unit_stock_no_tilt() {
        let model = reference_model();
        let mom = moments(&model, &Strategy::scalar(1.0, 0.0)).unwrap();
        assert_relative_eq!(mom.growth_rate, FIXTURE_K_H1, max_relative = 1e-12);
        assert_relative_eq!(mom.covariance_limit[0], FIXTURE_P_H1, max_relative = 1e-12);
        assert_relative_eq!(mom.y[0], 0.044249, max_relative = 1e-13);
        assert_relative_eq!(mom.y[1], FIXTURE_Y2_H1, max_relative = 1e-12);
        assert_relative_eq!(mom.variance_rate, FIXTURE_VAR_H1, max_relative = 1e-12);
        assert_eq!(mom.s[(0, 0)], 0.0);
        assert_relative_eq!(mom.r, &mom.delta * mom.growth_rate);
    }

    #[test]
    fn no_tilt_means_zero_s() {
        let model = reference_model();
        for h in [-2.0, 0.3, 5.0] {
            let (var_rate, y, s) = variance_rate(&model, &Strategy::scalar(h, 0.0)).unwrap();
            assert_eq!(s[(0, 0)], 0.0);
            assert_relative_eq!(var_rate, y.dot(&y), max_relative = 1e-15);
        }
    }

    #[test]
    fn scalar_route_matches_pinned_values() {
        let p = ScalarModel::from_model(&reference_model()).unwrap();
        let mom = scalar_moments(p, 1.0, 0.0).unwrap();
        assert_relative_eq!(mom.growth_rate, FIXTURE_K_H1, max_relative = 1e-12);
        assert_relative_eq!(mom.covariance_limit[0], FIXTURE_P_H1, max_relative = 1e-12);
        assert_relative_eq!(mom.variance_rate, FIXTURE_VAR_H1, max_relative = 1e-12);
        let zero = scalar_moments(p, 0.0, 0.0).unwrap();
        assert_eq!(zero.growth_rate, 0.0);
        assert_eq!(zero.variance_rate, 0.0);
        assert_eq!(zero.covariance_limit[0], 0.0);
    }

    #[test]
    fn routes_agree_at_unit_tilt() {
        let model = reference_model();
        let matrix = moments(&model, &Strategy::scalar(1.0, 1.0)).unwrap();
        let scalar = scalar_moments(ScalarModel::from_model(&model).unwrap(), 1.0, 1.0).unwrap();
        assert_relative_eq!(matrix.growth_rate, scalar.growth_rate, max_relative = 1e-10);
        assert_relative_eq!(
            matrix.variance_rate,
            scalar.variance_rate,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            matrix.covariance_limit[0],
            scalar.covariance_limit[0],
            max_relative = 1e-10
        );
        assert_relative_eq!(matrix.s[(0, 0)], scalar.s[(0, 0)], max_relative = 1e-10);
    }

    #[test]
    fn scalar_route_rejects_nonnegative_b() {
        let mut p = ScalarModel::from_model(&reference_model()).unwrap();
        p.b = 0.0;
        assert!(matches!(
            scalar_moments(p, 1.0, 0.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn frozen_factors() {
        // Λ = 0: factors stay at zero, so only the constant weights matter.
        let model = FactorModel::new(
            Vector::from_vec(vec![0.01, 0.02]),
            Matrix::from_row_slice(2, 1, &[0.3, -0.2]),
            Matrix::from_element(1, 1, -0.4),
            Matrix::from_row_slice(2, 3, &[0.05, 0.01, 0.02, 0.0, 0.04, 0.01]),
            Matrix::zeros(1, 3),
        )
        .unwrap();
        let strategy = Strategy::new(
            Vector::from_vec(vec![0.7, 1.2]),
            Matrix::from_row_slice(2, 1, &[2.0, -1.0]),
        )
        .unwrap();
        let mom = moments(&model, &strategy).unwrap();
        let h = strategy.base();
        let cov = model.asset_covariance();
        let hch = h.dot(&(&cov * h));
        assert_relative_eq!(mom.variance_rate, hch, max_relative = 1e-14);
        assert_relative_eq!(
            mom.growth_rate,
            h.dot(model.drift()) - 0.5 * hch,
            max_relative = 1e-14
        );
        assert_eq!(mom.covariance_limit[0], 0.0);
    }

    #[test]
    fn growth_rate_is_quadratic_in_base_weights() {
        // K(t h, 0) is a quadratic in t: three points fix it, a fourth must lie on it.
        let model = reference_model();
        let k = |t: f64| growth_rate(&model, &Strategy::scalar(t, 0.0)).unwrap();
        let (k0, k1, k2) = (k(0.0), k(1.0), k(2.0));
        let c2 = (k2 - 2.0 * k1 + k0) / 2.0;
        let c1 = k1 - k0 - c2;
        let t = 3.7;
        assert_relative_eq!(k(t), k0 + c1 * t + c2 * t * t, max_relative = 1e-12);
        assert_relative_eq!(
            c2,
            -0.5 * (0.044249f64.powi(2) + 0.000874f64.powi(2)),
            max_relative = 1e-12
        );
    }
}
