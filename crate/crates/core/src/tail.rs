//! Tail machinery: choice of `k`, the ladder of intermediate levels, the
//! refined Hill estimate of the extreme value index and the extrapolation
//! to extreme levels.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StandardizedDesign};
use crate::error::{QrError, TailError};
use crate::exec::{map_slice, Execution};
use crate::qr::{fit_penalized, QuantileFit, SolverConfig};
use crate::tuning::{cross_validate_lambda, CvTable, TuningConfig};

/// Smallest effective tail sample `l_J k` kept on the ladder.
pub const MIN_TAIL_SAMPLE: f64 = 5.0;
/// Slack allowed when checking that ladder quantiles increase.
pub const MONOTONE_TOL: f64 = 1e-10;

/// `k = ⌊c0 n^{1/2+δ1} (log p)^{1/2+δ2}⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KRule {
    pub c0: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for KRule {
    fn default() -> Self {
        Self {
            c0: 0.8,
            delta1: 0.01,
            delta2: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KChoice {
    pub k: usize,
    /// The raw value fell outside `[5, n − 1]`.
    pub clamped: bool,
}

pub fn select_k(n: usize, p: usize, rule: &KRule) -> Result<KChoice, TailError> {
    if p < 2 {
        return Err(TailError::Param(format!("k rule needs p >= 2, got {p}")));
    }
    if n < 10 {
        return Err(TailError::Param(format!("k rule needs n >= 10, got {n}")));
    }
    if !(rule.c0 > 0.0 && rule.c0.is_finite() && rule.delta1.is_finite() && rule.delta2.is_finite())
    {
        return Err(TailError::Param(
            "c0 must be positive and deltas finite".into(),
        ));
    }
    let raw =
        rule.c0 * (n as f64).powf(0.5 + rule.delta1) * (p as f64).ln().powf(0.5 + rule.delta2);
    let raw = raw.floor();
    let k = raw.clamp(5.0, (n - 1) as f64) as usize;
    let clamped = raw < 5.0 || raw > (n - 1) as f64;
    if clamped {
        log::warn!("k rule gives {raw} for n = {n}, p = {p}; clamped to {k}");
    }
    Ok(KChoice { k, clamped })
}

/// Levels `τ_j = 1 − l_j k / n`, `l_j = s^{j−1}`, weights `φ(l_j) = l_j^a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailLadder {
    pub n: usize,
    pub k: usize,
    pub tau0: f64,
    pub j: usize,
    pub s: f64,
    pub a: f64,
    pub fractions: Vec<f64>,
    pub levels: Vec<f64>,
    pub weights: Vec<f64>,
    /// `j` was lowered from the requested value to keep `l_J k ≥ 5`.
    pub reduced: bool,
}

pub fn build_ladder(n: usize, k: usize, j: usize, s: f64, a: f64) -> Result<TailLadder, TailError> {
    if !(5..n).contains(&k) {
        return Err(TailError::Param(format!(
            "k = {k} outside [5, {}]",
            n.saturating_sub(1)
        )));
    }
    if j < 2 {
        return Err(TailError::Param(format!("ladder needs J >= 2, got {j}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(TailError::Param(format!(
            "ladder ratio s = {s} outside (0, 1)"
        )));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(TailError::Param(format!(
            "weight exponent a = {a} outside (0, 1)"
        )));
    }
    let mut jj = j;
    while jj >= 2 && s.powi(jj as i32 - 1) * (k as f64) < MIN_TAIL_SAMPLE {
        jj -= 1;
    }
    if jj < 2 {
        return Err(TailError::Param(format!(
            "no ladder with J >= 2 keeps s^(J-1) k >= {MIN_TAIL_SAMPLE} (k = {k}, s = {s})"
        )));
    }
    let fractions: Vec<f64> = (0..jj).map(|i| s.powi(i as i32)).collect();
    let levels = fractions
        .iter()
        .map(|l| 1.0 - l * k as f64 / n as f64)
        .collect();
    let weights = fractions.iter().map(|l| l.powf(a)).collect();
    Ok(TailLadder {
        n,
        k,
        tau0: 1.0 - k as f64 / n as f64,
        j: jj,
        s,
        a,
        fractions,
        levels,
        weights,
        reduced: jj < j,
    })
}

/// Weighted log-ratio estimator of γ from fitted ladder quantiles.
pub fn refined_hill(ladder: &TailLadder, quantiles: &[f64]) -> Result<f64, TailError> {
    if quantiles.len() != ladder.j {
        return Err(TailError::Param(format!(
            "expected {} ladder quantiles, got {}",
            ladder.j,
            quantiles.len()
        )));
    }
    if let Some((i, q)) = quantiles.iter().enumerate().find(|(_, q)| !(**q > 0.0)) {
        return Err(TailError::NonPositiveQuantile {
            tau: ladder.levels[i],
            value: *q,
        });
    }
    let q1 = quantiles[0];
    let mut num = 0.0;
    let mut den = 0.0;
    for ((w, l), q) in ladder.weights.iter().zip(&ladder.fractions).zip(quantiles) {
        num += w * (q / q1).ln();
        den += w * (1.0 / l).ln();
    }
    Ok(num / den)
}

/// Where the ladder quantiles are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "x")]
pub enum EvalPoint {
    /// Sample covariate mean.
    Mean,
    /// A given point, falling back to the mean if the ladder misbehaves.
    At(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EviEstimate {
    pub gamma_hat: f64,
    pub eval_point: Vec<f64>,
    pub ladder_quantiles: Vec<f64>,
    pub used_mean_fallback: bool,
}

fn ladder_values(fits: &[QuantileFit], means: &[f64], x: &[f64]) -> Vec<f64> {
    fits.iter()
        .map(|f| {
            f.intercept
                + x.iter()
                    .zip(means)
                    .zip(&f.slopes)
                    .map(|((v, m), b)| (v - m) * b)
                    .sum::<f64>()
        })
        .collect()
}

fn well_behaved(q: &[f64]) -> bool {
    q.iter().all(|v| *v > 0.0)
        && q.windows(2)
            .all(|w| w[1] >= w[0] - MONOTONE_TOL * w[0].abs().max(1.0))
}

/// Refined Hill estimate from ladder fits on one design.
pub fn estimate_evi(
    fits: &[QuantileFit],
    sd: &StandardizedDesign,
    ladder: &TailLadder,
    at: &EvalPoint,
) -> Result<EviEstimate, TailError> {
    estimate_evi_with_means(fits, sd.col_means(), ladder, at)
}

/// [`estimate_evi`] given only the covariate means of the training design.
pub fn estimate_evi_with_means(
    fits: &[QuantileFit],
    means: &[f64],
    ladder: &TailLadder,
    at: &EvalPoint,
) -> Result<EviEstimate, TailError> {
    if fits.len() != ladder.j {
        return Err(TailError::Param(format!(
            "expected {} ladder fits, got {}",
            ladder.j,
            fits.len()
        )));
    }
    if fits.iter().any(|f| f.slopes.len() != means.len()) {
        return Err(TailError::Solver(QrError::LengthMismatch {
            expected: means.len(),
            got: fits
                .iter()
                .map(|f| f.slopes.len())
                .find(|l| *l != means.len())
                .unwrap_or(0),
        }));
    }
    if let EvalPoint::At(x) = at {
        if x.len() != means.len() {
            return Err(TailError::Solver(QrError::LengthMismatch {
                expected: means.len(),
                got: x.len(),
            }));
        }
        let q = ladder_values(fits, means, x);
        if well_behaved(&q) {
            return Ok(EviEstimate {
                gamma_hat: refined_hill(ladder, &q)?,
                eval_point: x.clone(),
                ladder_quantiles: q,
                used_mean_fallback: false,
            });
        }
    }
    let q = ladder_values(fits, means, means);
    let gamma_hat = refined_hill(ladder, &q)?;
    Ok(EviEstimate {
        gamma_hat,
        eval_point: means.to_vec(),
        ladder_quantiles: q,
        used_mean_fallback: matches!(at, EvalPoint::At(_)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeQuantileEstimate {
    pub tau_n: f64,
    pub q_hat: f64,
    pub gamma_hat: f64,
    pub tau0: f64,
    pub base_quantile: f64,
}

/// `base · ((1 − τ0) / (1 − τ_n))^γ̂`.
pub fn extrapolate_value(
    base_quantile: f64,
    gamma_hat: f64,
    tau0: f64,
    tau_n: f64,
) -> Result<ExtremeQuantileEstimate, TailError> {
    if !(tau_n < 1.0 && tau0 > 0.0) {
        return Err(TailError::Param(format!(
            "levels must lie in (0, 1), got {tau0} and {tau_n}"
        )));
    }
    if tau_n < tau0 {
        return Err(TailError::LevelBelowIntermediate { tau_n, tau0 });
    }
    if !(base_quantile > 0.0) {
        return Err(TailError::NonPositiveBase(base_quantile));
    }
    if !gamma_hat.is_finite() {
        return Err(TailError::Param("gamma_hat is not finite".into()));
    }
    let q_hat = if tau_n == tau0 {
        base_quantile
    } else {
        base_quantile * ((1.0 - tau0) / (1.0 - tau_n)).powf(gamma_hat)
    };
    Ok(ExtremeQuantileEstimate {
        tau_n,
        q_hat,
        gamma_hat,
        tau0,
        base_quantile,
    })
}

/// Extrapolates the fit at `τ0` to `tau_n` at the raw point `x`.
pub fn extrapolate(
    base_fit: &QuantileFit,
    gamma_hat: f64,
    sd: &StandardizedDesign,
    x: &[f64],
    tau_n: f64,
) -> Result<ExtremeQuantileEstimate, TailError> {
    let base = crate::qr::predict(base_fit, sd, x)?;
    extrapolate_value(base, gamma_hat, base_fit.tau, tau_n)
}

/// Settings of the full three-step estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeqrConfig {
    pub krule: KRule,
    /// Overrides the rule of thumb.
    pub k: Option<usize>,
    pub ladder_j: usize,
    pub ladder_s: f64,
    pub ladder_a: f64,
    /// Evaluate γ̂ at each prediction point instead of the covariate mean.
    pub per_point_evi: bool,
    pub tuning: TuningConfig,
    pub solver: SolverConfig,
}

impl Default for HeqrConfig {
    fn default() -> Self {
        Self {
            krule: KRule::default(),
            k: None,
            ladder_j: 5,
            ladder_s: 0.8,
            ladder_a: 0.5,
            per_point_evi: false,
            tuning: TuningConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl HeqrConfig {
    /// The `k` choice and ladder for a sample of size `n` with `p` covariates.
    pub fn ladder(&self, n: usize, p: usize) -> Result<(KChoice, TailLadder), TailError> {
        let choice = match self.k {
            Some(k) => {
                if !(5..n).contains(&k) {
                    return Err(TailError::Param(format!("k = {k} outside [5, {}]", n - 1)));
                }
                KChoice { k, clamped: false }
            }
            None => select_k(n, p, &self.krule)?,
        };
        let ladder = build_ladder(n, choice.k, self.ladder_j, self.ladder_s, self.ladder_a)?;
        Ok((choice, ladder))
    }
}

/// Fitted estimator: ladder fits plus the covariate means they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeqrModel {
    pub k: KChoice,
    pub ladder: TailLadder,
    pub col_means: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub fits: Vec<QuantileFit>,
    /// Estimate at the covariate mean.
    pub evi: EviEstimate,
    pub per_point_evi: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cv_tables: Vec<CvTable>,
}

impl HeqrModel {
    /// Extreme quantile at the raw point `x`.
    pub fn predict(&self, x: &[f64], tau_n: f64) -> Result<ExtremeQuantileEstimate, TailError> {
        if x.len() != self.col_means.len() {
            return Err(TailError::Solver(QrError::LengthMismatch {
                expected: self.col_means.len(),
                got: x.len(),
            }));
        }
        let gamma = if self.per_point_evi {
            estimate_evi_with_means(
                &self.fits,
                &self.col_means,
                &self.ladder,
                &EvalPoint::At(x.to_vec()),
            )?
            .gamma_hat
        } else {
            self.evi.gamma_hat
        };
        let base = ladder_values(&self.fits[..1], &self.col_means, x)[0];
        extrapolate_value(base, gamma, self.ladder.tau0, tau_n)
    }
}

/// Selects one penalty per ladder level by cross-validation.
pub fn tune_ladder(
    sd: &StandardizedDesign,
    y: &[f64],
    ladder: &TailLadder,
    cfg: &HeqrConfig,
) -> Result<(Vec<f64>, Vec<CvTable>), TailError> {
    let out = map_slice(cfg.tuning.exec, &ladder.levels, |&tau| {
        cross_validate_lambda(sd, y, tau, &cfg.tuning, &cfg.solver)
    });
    let mut lambdas = Vec::with_capacity(out.len());
    let mut tables = Vec::with_capacity(out.len());
    for r in out {
        let (l, t) = r?;
        lambdas.push(l);
        tables.push(t);
    }
    Ok((lambdas, tables))
}

/// Fits the estimator. With `lambdas` given the cross-validation is skipped.
pub fn fit_heqr(
    d: &Dataset,
    cfg: &HeqrConfig,
    lambdas: Option<&[f64]>,
) -> Result<HeqrModel, TailError> {
    let sd = crate::data::standardize(d);
    let (k, ladder) = cfg.ladder(d.n(), d.p())?;
    let (lambdas, cv_tables) = match lambdas {
        Some(l) if l.len() == ladder.j => (l.to_vec(), Vec::new()),
        Some(l) => {
            return Err(TailError::Param(format!(
                "expected {} penalties, got {}",
                ladder.j,
                l.len()
            )))
        }
        None => tune_ladder(&sd, d.y(), &ladder, cfg)?,
    };
    let fits = fit_ladder(&sd, d.y(), &ladder, &lambdas, &cfg.solver, cfg.tuning.exec)?;
    let evi = estimate_evi(&fits, &sd, &ladder, &EvalPoint::Mean)?;
    Ok(HeqrModel {
        k,
        ladder,
        col_means: sd.col_means().to_vec(),
        sigma_hat: sd.sigma_hat().to_vec(),
        lambdas,
        fits,
        evi,
        per_point_evi: cfg.per_point_evi,
        cv_tables,
    })
}

/// Penalized fits at every ladder level.
pub fn fit_ladder(
    sd: &StandardizedDesign,
    y: &[f64],
    ladder: &TailLadder,
    lambdas: &[f64],
    solver: &SolverConfig,
    exec: Execution,
) -> Result<Vec<QuantileFit>, TailError> {
    map_indices_result(exec, ladder.j, |j| {
        fit_penalized(sd, y, ladder.levels[j], lambdas[j], solver).map_err(TailError::from)
    })
}

fn map_indices_result<T: Send>(
    exec: Execution,
    len: usize,
    f: impl Fn(usize) -> Result<T, TailError> + Sync + Send,
) -> Result<Vec<T>, TailError> {
    crate::exec::map_indices(exec, len, f).into_iter().collect()
}
