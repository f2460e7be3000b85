//! Quantile loss, penalized and unpenalized quantile regression, prediction.
//!
//! The penalized estimator minimizes
//!
//! ```text
//! (1/n) Σ ρ_τ(y_i − β₀ − x_iᵀβ) + (λ √(τ(1−τ)) / n) Σ_j σ̂_j |β_j|
//! ```
//!
//! over the centered design; the intercept is never penalized. Every fit is
//! returned together with the largest violation of its subgradient
//! optimality conditions (see [`kkt_residual`]).

mod kkt;
mod simplex;
mod smooth;

use serde::{Deserialize, Serialize};

use crate::data::StandardizedDesign;
use crate::error::QrError;

pub use kkt::{kkt_residual, TIE_REL};

/// Check function `ρ_τ(u) = u (τ − 1{u < 0})`.
#[inline]
pub fn quantile_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

/// Mean check loss of `resid`.
pub fn mean_quantile_loss(resid: impl IntoIterator<Item = f64>, tau: f64) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for r in resid {
        s += quantile_loss(r, tau);
        n += 1;
    }
    s / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Vertex-walking exact solver.
    #[default]
    ExactLp,
    /// Huberized FISTA followed by an exact finish from the nearest vertex.
    SmoothedProximal,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact-lp" => Ok(Self::ExactLp),
            "smoothed-proximal" => Ok(Self::SmoothedProximal),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Bound on the normalized subgradient residual for a certified fit.
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub algorithm: Algorithm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            max_iter: 100_000,
            algorithm: Algorithm::ExactLp,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), QrError> {
        if !(self.tol_kkt > 0.0) {
            return Err(QrError::BadConfig(format!(
                "tol_kkt must be positive, got {}",
                self.tol_kkt
            )));
        }
        if self.max_iter == 0 {
            return Err(QrError::BadConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Coefficients at one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub lambda: f64,
    pub intercept: f64,
    /// One slope per design column, on the centered scale.
    pub slopes: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub n_iter: usize,
    /// Final vertex of the exact solver, reusable as a warm start on the
    /// same design.
    #[serde(skip)]
    pub basis: Vec<usize>,
}

impl QuantileFit {
    /// Fitted quantile at an already centered covariate point.
    pub fn predict_centered(&self, xc: &[f64]) -> f64 {
        self.intercept + xc.iter().zip(&self.slopes).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn nonzero_slopes(&self) -> usize {
        self.slopes.iter().filter(|b| **b != 0.0).count()
    }
}

/// `β₀ + (x − col_means)ᵀ β` for a raw covariate point.
pub fn predict(fit: &QuantileFit, sd: &StandardizedDesign, x: &[f64]) -> Result<f64, QrError> {
    if x.len() != sd.p() || fit.slopes.len() != sd.p() {
        return Err(QrError::LengthMismatch {
            expected: sd.p(),
            got: x.len(),
        });
    }
    Ok(fit.intercept
        + x.iter()
            .zip(sd.col_means())
            .zip(&fit.slopes)
            .map(|((v, m), b)| (v - m) * b)
            .sum::<f64>())
}

/// Penalized objective recomputed from coefficients.
pub fn penalized_objective(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    lambda: f64,
    intercept: f64,
    slopes: &[f64],
) -> f64 {
    let n = sd.n() as f64;
    let loss: f64 = (0..sd.n())
        .map(|i| {
            let fitted = intercept
                + sd.row(i)
                    .iter()
                    .zip(slopes)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            quantile_loss(y[i] - fitted, tau)
        })
        .sum();
    let pen: f64 = slopes
        .iter()
        .zip(sd.sigma_hat())
        .map(|(b, s)| s * b.abs())
        .sum();
    loss / n + lambda * (tau * (1.0 - tau)).sqrt() / n * pen
}

fn check_tau(tau: f64) -> Result<(), QrError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(QrError::BadTau(tau))
    }
}

/// ℓ1-penalized quantile regression at level `tau`.
pub fn fit_penalized(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<QuantileFit, QrError> {
    fit_penalized_warm(sd, y, tau, lambda, cfg, None)
}

/// [`fit_penalized`] starting from the vertex of an earlier fit on the same
/// design (ignored when it does not fit the problem).
pub fn fit_penalized_warm(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&[usize]>,
) -> Result<QuantileFit, QrError> {
    check_tau(tau)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(QrError::BadLambda(lambda));
    }
    cfg.validate()?;
    if y.len() != sd.n() {
        return Err(QrError::LengthMismatch {
            expected: sd.n(),
            got: y.len(),
        });
    }
    solve(sd, y, tau, lambda, cfg, warm)
}

/// Quantile regression without penalty; needs `n > p + 1`.
pub fn fit_unpenalized(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    cfg: &SolverConfig,
) -> Result<QuantileFit, QrError> {
    fit_unpenalized_warm(sd, y, tau, cfg, None)
}

pub fn fit_unpenalized_warm(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    cfg: &SolverConfig,
    warm: Option<&[usize]>,
) -> Result<QuantileFit, QrError> {
    if sd.n() <= sd.p() + 1 {
        return Err(QrError::TooFewObservations {
            n: sd.n(),
            p: sd.p(),
        });
    }
    fit_penalized_warm(sd, y, tau, 0.0, cfg, warm)
}

fn solve(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&[usize]>,
) -> Result<QuantileFit, QrError> {
    let n = sd.n();
    let p = sd.p();
    let active = sd.active_columns();
    let d = active.len() + 1;
    let mut z = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = sd.row(i);
        z.push(1.0);
        z.extend(active.iter().map(|&j| row[j]));
    }
    let scale = lambda * (tau * (1.0 - tau)).sqrt();
    let pen = if scale > 0.0 {
        active.iter().map(|&j| scale * sd.sigma_hat()[j]).collect()
    } else {
        Vec::new()
    };
    let prob = simplex::Reduced {
        z,
        n,
        d,
        y,
        pen,
        tau,
    };

    let mut start = warm.map(<[usize]>::to_vec);
    if cfg.algorithm == Algorithm::SmoothedProximal && start.is_none() {
        let beta = smooth::smoothed_minimizer(&prob, cfg.max_iter);
        start = smooth::crossover_basis(&prob, &beta);
    }
    let sol = simplex::solve(&prob, start.as_deref(), cfg.max_iter)?;

    let mut slopes = vec![0.0; p];
    for (t, &j) in active.iter().enumerate() {
        slopes[j] = sol.beta[t + 1];
    }
    let intercept = sol.beta[0];
    let objective = penalized_objective(sd, y, tau, lambda, intercept, &slopes);
    let kkt = kkt_residual(sd, y, tau, lambda, intercept, &slopes, Some(&sol.psi));
    let fit = QuantileFit {
        tau,
        lambda,
        intercept,
        slopes,
        objective,
        kkt_residual: kkt,
        n_iter: sol.n_iter,
        basis: sol.basis,
    };
    if !sol.converged || !(kkt <= cfg.tol_kkt) {
        return Err(QrError::NotConverged { fit: Box::new(fit) });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, Dataset};

    fn design(x: Vec<f64>, p: usize, y: &[f64]) -> StandardizedDesign {
        standardize(&Dataset::from_rows(y.to_vec(), x, p).unwrap())
    }

    #[test]
    fn check_function_branches() {
        assert_eq!(quantile_loss(0.0, 0.9), 0.0);
        assert!((quantile_loss(1.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((quantile_loss(-1.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn intercept_only_median() {
        let y = [1.0, 2.0, 3.0];
        let sd = design(vec![5.0; 3], 1, &y);
        let fit = fit_penalized(&sd, &y, 0.5, 1.0, &SolverConfig::default()).unwrap();
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert_eq!(fit.slopes, vec![0.0]);
    }

    #[test]
    fn intercept_only_upper_quantile() {
        let y = [1.0, 2.0, 3.0];
        let sd = design(vec![5.0; 3], 1, &y);
        let fit = fit_penalized(&sd, &y, 0.9, 0.0, &SolverConfig::default()).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_line_is_recovered() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let sd = design(x.clone(), 1, &y);
        for tau in [0.1, 0.5, 0.95] {
            let fit = fit_unpenalized(&sd, &y, tau, &SolverConfig::default()).unwrap();
            assert!((fit.slopes[0] - 3.0).abs() < 1e-10);
            for v in [0.0, 1.0, 7.5] {
                assert!((predict(&fit, &sd, &[v]).unwrap() - (2.0 + 3.0 * v)).abs() < 1e-9);
            }
            assert!(fit.objective.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_column_reduces_to_median() {
        let y = [1.0, 2.0, 3.0];
        let sd = design(vec![0.0; 3], 1, &y);
        let fit = fit_unpenalized(&sd, &y, 0.5, &SolverConfig::default()).unwrap();
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert_eq!(fit.slopes, vec![0.0]);
    }

    #[test]
    fn unpenalized_needs_more_rows_than_columns() {
        let y = [1.0, 2.0, 3.0];
        let sd = design(vec![1.0, 2.0, 4.0, 3.0, 5.0, 9.0], 2, &y);
        assert!(matches!(
            fit_unpenalized(&sd, &y, 0.5, &SolverConfig::default()),
            Err(QrError::TooFewObservations { .. })
        ));
    }

    #[test]
    fn argument_validation() {
        let y = [1.0, 2.0, 3.0];
        let sd = design(vec![1.0, 2.0, 4.0], 1, &y);
        let cfg = SolverConfig::default();
        assert!(matches!(
            fit_penalized(&sd, &y, 0.5, -1.0, &cfg),
            Err(QrError::BadLambda(_))
        ));
        assert!(matches!(
            fit_penalized(&sd, &y, 1.0, 1.0, &cfg),
            Err(QrError::BadTau(_))
        ));
        let bad = SolverConfig { max_iter: 0, ..cfg };
        assert!(matches!(
            fit_penalized(&sd, &y, 0.5, 1.0, &bad),
            Err(QrError::BadConfig(_))
        ));
    }

    #[test]
    fn predict_arithmetic() {
        let sd = design(vec![-1.0, 1.0], 1, &[0.0, 0.0]);
        let fit = QuantileFit {
            tau: 0.5,
            lambda: 0.0,
            intercept: 1.0,
            slopes: vec![2.0],
            objective: 0.0,
            kkt_residual: 0.0,
            n_iter: 0,
            basis: vec![],
        };
        assert_eq!(predict(&fit, &sd, &[3.0]).unwrap(), 7.0);
        assert_eq!(predict(&fit, &sd, sd.col_means()).unwrap(), 1.0);
        assert!(matches!(
            predict(&fit, &sd, &[1.0, 2.0]),
            Err(QrError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 7919) % 41) as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 104_729) % 37) as f64).collect();
        let sd = design(x, 1, &y);
        let cfg = SolverConfig {
            max_iter: 1,
            ..Default::default()
        };
        match fit_unpenalized(&sd, &y, 0.7, &cfg) {
            Err(QrError::NotConverged { fit }) => assert_eq!(fit.n_iter, 1),
            Ok(fit) => assert!(fit.n_iter <= 1),
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
