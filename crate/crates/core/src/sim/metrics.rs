//! Integrated squared error and the prediction-error metric.

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Mean squared relative error `(1/L) Σ (q̂_l / q_l − 1)²`.
pub fn ise(estimates: &[f64], truths: &[f64]) -> Result<f64, SimError> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(SimError::Config(format!(
            "ise needs equal nonempty lengths, got {} and {}",
            estimates.len(),
            truths.len()
        )));
    }
    let mut acc = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        if *t == 0.0 {
            return Err(SimError::Config("ise: zero true quantile".into()));
        }
        let r = e / t - 1.0;
        acc += r * r;
    }
    Ok(acc / estimates.len() as f64)
}

/// `(n₂ τ (1 − τ))^{-1/2} Σ_j [τ − 1{y_j < q̂_j}]`.
pub fn prediction_error(y_test: &[f64], q_hat: &[f64], tau: f64) -> Result<f64, SimError> {
    if y_test.len() != q_hat.len() || y_test.is_empty() {
        return Err(SimError::Config(format!(
            "prediction_error needs equal nonempty lengths, got {} and {}",
            y_test.len(),
            q_hat.len()
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SimError::Config(format!("level {tau} outside (0, 1)")));
    }
    let n2 = y_test.len() as f64;
    let below = y_test.iter().zip(q_hat).filter(|(y, q)| y < q).count() as f64;
    Ok((n2 * tau - below) / (n2 * tau * (1.0 - tau)).sqrt())
}

/// Sample mean and standard error of the mean (`sd / √m`, `sd` with the
/// `m − 1` divisor).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Per-method summary of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub case_id: u8,
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    /// ISE of each successful replication, in replication order.
    pub ise: Vec<f64>,
    pub mise: f64,
    pub se: f64,
    pub n_reps: usize,
    pub n_failed: usize,
    /// Replication indices that failed, with the error message.
    pub failures: Vec<(usize, String)>,
    /// More than the tolerated share of replications failed.
    pub exceeded_failure_limit: bool,
}

impl MetricsReport {
    pub fn from_ise(
        method: &str,
        case_id: u8,
        n: usize,
        p: usize,
        tau: f64,
        ise: Vec<f64>,
        failures: Vec<(usize, String)>,
    ) -> Self {
        let (mise, se) = mean_and_se(&ise);
        Self {
            method: method.to_string(),
            case_id,
            n,
            p,
            tau,
            n_reps: ise.len() + failures.len(),
            n_failed: failures.len(),
            ise,
            mise,
            se,
            failures,
            exceeded_failure_limit: false,
        }
    }

    pub fn mise_percent(&self) -> f64 {
        100.0 * self.mise
    }

    pub fn se_percent(&self) -> f64 {
        100.0 * self.se
    }
}
