//! Comparison estimators.
//!
//! * EQR-style baseline: unpenalized fits on the dense top-`k` ladder
//!   `τ_i = 1 − i/(n+1)`, `i = k, …, 1`, an unweighted log-ratio Hill
//!   estimate at the prediction point and the shared extrapolation step.
//!   Needs `n > p + 1`.
//! * HQR: a single penalized fit directly at the extreme level, tuned by
//!   cross-validation at that level. No extrapolation.

use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, StandardizedDesign};
use crate::error::{QrError, TailError};
use crate::qr::{fit_penalized, fit_unpenalized_warm, predict, QuantileFit, SolverConfig};
use crate::tail::{extrapolate_value, ExtremeQuantileEstimate};
use crate::tuning::{cross_validate_lambda, CvTable, TuningConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqrConfig {
    pub k_eqr: usize,
    /// Estimate γ at each prediction point instead of the covariate mean.
    #[serde(default)]
    pub per_point_evi: bool,
}

impl EqrConfig {
    /// `k = ⌊4.5 n^{1/3}⌋`, γ at the covariate mean.
    pub fn for_n(n: usize) -> Self {
        Self {
            k_eqr: (4.5 * (n as f64).cbrt()).floor() as usize,
            per_point_evi: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), TailError> {
        if !(5..n).contains(&self.k_eqr) {
            return Err(TailError::Param(format!(
                "k_eqr = {} outside [5, {}]",
                self.k_eqr,
                n.saturating_sub(1)
            )));
        }
        Ok(())
    }
}

/// Level `1 − i/(n+1)`.
pub fn eqr_level(n: usize, i: usize) -> f64 {
    1.0 - i as f64 / (n as f64 + 1.0)
}

/// `k⁻¹ Σ_{i=1}^{k−1} log(q_i / q_k)` with `q` ordered `i = 1, …, k`.
pub fn eqr_hill(q: &[f64]) -> Result<f64, TailError> {
    let k = q.len();
    if k < 2 {
        return Err(TailError::Param(
            "EQR Hill needs at least two levels".into(),
        ));
    }
    if let Some(v) = q.iter().find(|v| !(**v > 0.0)) {
        return Err(TailError::NonPositiveQuantile {
            tau: f64::NAN,
            value: *v,
        });
    }
    let base = q[k - 1];
    Ok(q[..k - 1].iter().map(|v| (v / base).ln()).sum::<f64>() / k as f64)
}

/// Unpenalized fits at levels `1 − i/(n+1)`; `fits[i − 1]` is level `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqrModel {
    pub n: usize,
    pub k_eqr: usize,
    pub per_point_evi: bool,
    pub col_means: Vec<f64>,
    pub fits: Vec<QuantileFit>,
}

impl EqrModel {
    pub fn tau0(&self) -> f64 {
        eqr_level(self.n, self.k_eqr)
    }

    fn values_at(&self, x: &[f64]) -> Vec<f64> {
        self.fits
            .iter()
            .map(|f| {
                f.intercept
                    + x.iter()
                        .zip(&self.col_means)
                        .zip(&f.slopes)
                        .map(|((v, m), b)| (v - m) * b)
                        .sum::<f64>()
            })
            .collect()
    }

    /// γ̂ at `x`, or at the covariate mean if some fitted quantile at `x`
    /// is not positive. Returns the estimate and whether the mean was used.
    pub fn gamma_at(&self, x: &[f64]) -> Result<(f64, bool), TailError> {
        let q = self.values_at(x);
        if q.iter().all(|v| *v > 0.0) {
            return Ok((eqr_hill(&q)?, false));
        }
        let q = self.values_at(&self.col_means);
        Ok((eqr_hill(&q)?, true))
    }

    pub fn predict(&self, x: &[f64], tau_n: f64) -> Result<ExtremeQuantileEstimate, TailError> {
        if x.len() != self.col_means.len() {
            return Err(TailError::Solver(QrError::LengthMismatch {
                expected: self.col_means.len(),
                got: x.len(),
            }));
        }
        let (gamma, _) = if self.per_point_evi {
            self.gamma_at(x)?
        } else {
            (eqr_hill(&self.values_at(&self.col_means))?, false)
        };
        let base = self.values_at(x)[self.k_eqr - 1];
        extrapolate_value(base, gamma, self.tau0(), tau_n)
    }
}

/// Fits the EQR ladder, walking from `i = k` down to `i = 1` with warm
/// starts.
pub fn fit_eqr_model(
    d: &Dataset,
    cfg: &EqrConfig,
    solver: &SolverConfig,
) -> Result<EqrModel, TailError> {
    let (n, p) = (d.n(), d.p());
    if n <= p + 1 {
        return Err(TailError::EqrNotApplicable { n, p });
    }
    cfg.validate(n)?;
    let sd = standardize(d);
    let mut fits: Vec<QuantileFit> = Vec::with_capacity(cfg.k_eqr);
    let mut warm: Option<Vec<usize>> = None;
    for i in (1..=cfg.k_eqr).rev() {
        let fit = fit_unpenalized_warm(&sd, d.y(), eqr_level(n, i), solver, warm.as_deref())?;
        warm = Some(fit.basis.clone());
        fits.push(fit);
    }
    fits.reverse();
    Ok(EqrModel {
        n,
        k_eqr: cfg.k_eqr,
        per_point_evi: cfg.per_point_evi,
        col_means: sd.col_means().to_vec(),
        fits,
    })
}

/// EQR estimate of the `tau_n` quantile at `x`.
pub fn fit_eqr(
    d: &Dataset,
    x: &[f64],
    tau_n: f64,
    cfg: &EqrConfig,
    solver: &SolverConfig,
) -> Result<ExtremeQuantileEstimate, TailError> {
    fit_eqr_model(d, cfg, solver)?.predict(x, tau_n)
}

/// Penalized fit at the extreme level itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HqrModel {
    pub tau_n: f64,
    pub lambda: f64,
    pub col_means: Vec<f64>,
    pub fit: QuantileFit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_table: Option<CvTable>,
}

impl HqrModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, TailError> {
        if x.len() != self.col_means.len() {
            return Err(TailError::Solver(QrError::LengthMismatch {
                expected: self.col_means.len(),
                got: x.len(),
            }));
        }
        Ok(self.fit.intercept
            + x.iter()
                .zip(&self.col_means)
                .zip(&self.fit.slopes)
                .map(|((v, m), b)| (v - m) * b)
                .sum::<f64>())
    }
}

/// Fits HQR at `tau_n`; cross-validates the penalty unless one is given.
pub fn fit_hqr_model(
    sd: &StandardizedDesign,
    y: &[f64],
    tau_n: f64,
    lambda: Option<f64>,
    tuning: &TuningConfig,
    solver: &SolverConfig,
) -> Result<HqrModel, TailError> {
    let (lambda, cv_table) = match lambda {
        Some(l) => (l, None),
        None => {
            let (l, t) = cross_validate_lambda(sd, y, tau_n, tuning, solver)?;
            (l, Some(t))
        }
    };
    let fit = fit_penalized(sd, y, tau_n, lambda, solver)?;
    Ok(HqrModel {
        tau_n,
        lambda,
        col_means: sd.col_means().to_vec(),
        fit,
        cv_table,
    })
}

/// HQR prediction of the `tau_n` quantile at `x`.
pub fn fit_hqr(
    sd: &StandardizedDesign,
    y: &[f64],
    x: &[f64],
    tau_n: f64,
    tuning: &TuningConfig,
    solver: &SolverConfig,
) -> Result<f64, TailError> {
    let model = fit_hqr_model(sd, y, tau_n, None, tuning, solver)?;
    Ok(predict(&model.fit, sd, x)?)
}
