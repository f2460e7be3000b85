//! Location-scale data generator and its exact conditional quantiles.
//!
//! `Y = X₁ + X₂ + (1 + w X₁) ε` with `X_ij ~ U(0, 1)` and `ε ~ t(df)`, so
//! `Q_Y(τ | x) = Q_ε(τ) + x₁ (1 + w Q_ε(τ)) + x₂`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tdist::t_quantile;
use crate::data::Dataset;
use crate::error::SimError;

/// Stream purposes mixed into the per-replication stream id.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Training = 0,
    Evaluation = 1,
    Folds = 2,
    Split = 3,
}

/// Counter-based generator keyed by `(seed, rep, purpose)`. Independent of
/// the order in which replications are processed.
pub fn stream_rng(seed: u64, rep: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep.wrapping_mul(8).wrapping_add(purpose as u64));
    rng
}

/// Uniform on the open interval (0, 1).
pub fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub case_id: u8,
    pub n: usize,
    pub p: usize,
    /// Heteroscedasticity coefficient.
    pub w: f64,
    /// Degrees of freedom of the t errors.
    pub df: f64,
    pub n_reps: usize,
    pub seed: u64,
    /// Extreme levels to evaluate.
    pub taus: Vec<f64>,
    /// Evaluation points per replication.
    pub n_eval: usize,
}

impl SimulationConfig {
    /// Case 1..6 with `p = ⌈√n⌉`, 50 replications, levels 0.995 and 0.999.
    pub fn case(case_id: u8, n: usize) -> Result<Self, SimError> {
        let (w, df) = case_params(case_id)?;
        Ok(Self {
            case_id,
            n,
            p: (n as f64).sqrt().ceil() as usize,
            w,
            df,
            n_reps: 50,
            seed: 20_240_601,
            taus: vec![0.995, 0.999],
            n_eval: 100,
        })
    }

    pub fn with_p(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn with_reps(mut self, n_reps: usize) -> Self {
        self.n_reps = n_reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_taus(mut self, taus: Vec<f64>) -> Self {
        self.taus = taus;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let (w, df) = case_params(self.case_id)?;
        if (w, df) != (self.w, self.df) {
            return Err(SimError::Config(format!(
                "case {} requires w = {w}, df = {df}",
                self.case_id
            )));
        }
        if self.p < 2 {
            return Err(SimError::Config("p must be at least 2".into()));
        }
        if self.n < 10 {
            return Err(SimError::Config("n must be at least 10".into()));
        }
        if self.n_reps == 0 || self.n_eval == 0 {
            return Err(SimError::Config(
                "n_reps and n_eval must be positive".into(),
            ));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(SimError::Config(format!("level {t} outside (0, 1)")));
        }
        Ok(())
    }

    pub fn truth(&self) -> Truth {
        Truth {
            w: self.w,
            df: self.df,
        }
    }

    /// Extreme value index of the error distribution, `1/df`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.df
    }
}

/// `(w, df)` for cases 1..6: odd cases t(5), even cases t(2); w = 0, 0.5, 0.9
/// for cases (1, 2), (3, 4), (5, 6).
pub fn case_params(case_id: u8) -> Result<(f64, f64), SimError> {
    let w = match case_id {
        1 | 2 => 0.0,
        3 | 4 => 0.5,
        5 | 6 => 0.9,
        other => return Err(SimError::Config(format!("unknown case {other}"))),
    };
    let df = if case_id % 2 == 1 { 5.0 } else { 2.0 };
    Ok((w, df))
}

/// Closed-over parameters of the conditional quantile surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub w: f64,
    pub df: f64,
}

impl Truth {
    /// Exact `Q_Y(τ | x)`; only the first two coordinates of `x` matter.
    pub fn quantile(&self, x: &[f64], tau: f64) -> Result<f64, SimError> {
        let q = t_quantile(tau, self.df)?;
        Ok(q + x[0] * (1.0 + self.w * q) + x[1])
    }
}

/// Free-function form of [`Truth::quantile`].
pub fn true_quantile(truth: &Truth, x: &[f64], tau: f64) -> Result<f64, SimError> {
    truth.quantile(x, tau)
}

/// Training sample for replication `rep`; deterministic in `(seed, rep)`.
pub fn generate_case(cfg: &SimulationConfig, rep: usize) -> Result<(Dataset, Truth), SimError> {
    let mut rng = stream_rng(cfg.seed, rep as u64, Stream::Training);
    let (n, p) = (cfg.n, cfg.p);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        for _ in 0..p {
            x.push(rng.random::<f64>());
        }
        let eps = t_quantile(open_uniform(&mut rng), cfg.df)?;
        let (x1, x2) = (x[start], x[start + 1]);
        y.push(x1 + x2 + (1.0 + cfg.w * x1) * eps);
    }
    let d = Dataset::from_rows(y, x, p).map_err(|e| SimError::Config(e.to_string()))?;
    Ok((d, cfg.truth()))
}

/// Fresh covariate points for evaluating replication `rep`, row-major.
pub fn evaluation_points(cfg: &SimulationConfig, rep: usize) -> Vec<f64> {
    let mut rng = stream_rng(cfg.seed, rep as u64, Stream::Evaluation);
    (0..cfg.n_eval * cfg.p)
        .map(|_| rng.random::<f64>())
        .collect()
}
