//! Asymptotic moments of log-wealth for linear strategies under a dynamic
//! factor model, the risk/factor-sensitive criterion built on them, a
//! monthly-data calibration pipeline and a Monte Carlo oracle for the
//! closed forms.

pub mod calibration;
pub mod criterion;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod moments;

pub use error::{Error, Result};
pub use model::{reference_model, CriterionParams, FactorModel, Strategy};
pub use moments::{moments, AsymptoticMoments};
