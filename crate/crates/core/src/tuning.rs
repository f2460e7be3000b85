//! Penalty selection by K-fold cross-validation on the check loss.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::StandardizedDesign;
use crate::error::TailError;
use crate::exec::{map_indices, Execution};
use crate::qr::{fit_penalized_warm, mean_quantile_loss, SolverConfig};

/// Losses closer than this (relative) count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub n_folds: usize,
    /// Multipliers of the theoretical scale, strictly increasing.
    pub grid_multipliers: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            n_folds: 10,
            grid_multipliers: log_spaced(0.01, 10.0, 20),
            seed: 1,
            exec: Execution::Parallel,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<(), TailError> {
        if self.n_folds < 2 {
            return Err(TailError::Param("n_folds must be at least 2".into()));
        }
        if self.grid_multipliers.is_empty() {
            return Err(TailError::Param("penalty grid is empty".into()));
        }
        if self
            .grid_multipliers
            .iter()
            .any(|m| !(m.is_finite() && *m > 0.0))
        {
            return Err(TailError::Param("grid multipliers must be positive".into()));
        }
        if self.grid_multipliers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TailError::Param(
                "grid multipliers must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// `count` values from `lo` to `hi`, equally spaced in log scale.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// `√(n log p) / √(1 − τ)`.
pub fn lambda_scale(n: usize, p: usize, tau: f64) -> f64 {
    lambda_scale_log(n, (p as f64).ln(), tau)
}

/// [`lambda_scale`] given `log p` directly.
pub fn lambda_scale_log(n: usize, log_p: f64, tau: f64) -> f64 {
    ((n as f64) * log_p).sqrt() / (1.0 - tau).sqrt()
}

pub fn lambda_grid(
    n: usize,
    p: usize,
    tau: f64,
    cfg: &TuningConfig,
) -> Result<Vec<f64>, TailError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(TailError::Param(format!("level {tau} outside (0, 1)")));
    }
    if p < 2 {
        return Err(TailError::Param("the penalty scale needs p >= 2".into()));
    }
    cfg.validate()?;
    let scale = lambda_scale(n, p, tau);
    Ok(cfg.grid_multipliers.iter().map(|m| m * scale).collect())
}

/// Seeded partition of `0..n` into `k` parts whose sizes differ by at most 1.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub mean_loss: f64,
    pub sd_loss: f64,
    pub n_valid_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub tau: f64,
    pub rows: Vec<CvRow>,
    pub n_folds: usize,
}

impl CvTable {
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::fs::File::create(path)?;
        out.write_all(self.to_csv().as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,mean_loss,sd_loss,n_valid_folds\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{}\n",
                r.lambda, r.mean_loss, r.sd_loss, r.n_valid_folds
            ));
        }
        s
    }
}

/// Largest λ among the valid rows whose loss ties the minimum.
pub fn select_from_table(table: &CvTable) -> Result<f64, TailError> {
    let valid = table
        .rows
        .iter()
        .filter(|r| r.n_valid_folds == table.n_folds);
    let best = valid
        .clone()
        .map(|r| r.mean_loss)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(TailError::AllLambdasFailed);
    }
    let cutoff = best + TIE_TOL * best.abs().max(1.0);
    Ok(valid
        .filter(|r| r.mean_loss <= cutoff)
        .map(|r| r.lambda)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Cross-validated penalty at level `tau`.
///
/// Each fold walks the grid from the largest λ down, warm-starting every
/// fit from the previous vertex. A λ is valid only if every fold fit
/// succeeds; the fold losses are reduced in fold order.
pub fn cross_validate_lambda(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    cfg: &TuningConfig,
    solver: &SolverConfig,
) -> Result<(f64, CvTable), TailError> {
    let grid = lambda_grid(sd.n(), sd.p(), tau, cfg)?;
    cross_validate_grid(sd, y, tau, &grid, cfg, solver)
}

/// [`cross_validate_lambda`] over an explicit penalty grid.
pub fn cross_validate_grid(
    sd: &StandardizedDesign,
    y: &[f64],
    tau: f64,
    grid: &[f64],
    cfg: &TuningConfig,
    solver: &SolverConfig,
) -> Result<(f64, CvTable), TailError> {
    cfg.validate()?;
    let n = sd.n();
    if n < 2 * cfg.n_folds {
        return Err(TailError::Param(format!(
            "cross-validation needs n >= 2 * n_folds (n = {n}, folds = {})",
            cfg.n_folds
        )));
    }
    if y.len() != n {
        return Err(TailError::Param(
            "response length does not match the design".into(),
        ));
    }
    let folds = make_folds(n, cfg.n_folds, cfg.seed);
    let per_fold: Vec<Vec<Option<f64>>> = map_indices(cfg.exec, cfg.n_folds, |f| {
        let held = &folds[f];
        let mut is_held = vec![false; n];
        for &i in held {
            is_held[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
        let sd_train = sd.with_rows(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let mut losses = vec![None; grid.len()];
        let mut warm: Option<Vec<usize>> = None;
        for (g, &lambda) in grid.iter().enumerate().rev() {
            match fit_penalized_warm(&sd_train, &y_train, tau, lambda, solver, warm.as_deref()) {
                Ok(fit) => {
                    let loss = mean_quantile_loss(
                        held.iter().map(|&i| y[i] - fit.predict_centered(sd.row(i))),
                        tau,
                    );
                    losses[g] = Some(loss);
                    warm = Some(fit.basis);
                }
                Err(_) => warm = None,
            }
        }
        losses
    });
    let rows = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let vals: Vec<f64> = per_fold.iter().filter_map(|l| l[g]).collect();
            let (mean_loss, sd_loss) = mean_sd(&vals);
            CvRow {
                lambda,
                mean_loss,
                sd_loss,
                n_valid_folds: vals.len(),
            }
        })
        .collect();
    let table = CvTable {
        tau,
        rows,
        n_folds: cfg.n_folds,
    };
    let lambda = select_from_table(&table)?;
    Ok((lambda, table))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (mean, var.sqrt())
}
