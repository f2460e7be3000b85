//! Flat key-value run configuration.
//!
//! The same struct is read from a TOML file (`--config`) and from command
//! line flags; flags win. The effective settings, with defaults filled in,
//! are echoed into every run directory and artifact.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tailqr::qr::Algorithm;
use tailqr::sim::bench::{BenchmarkOptions, Method, SweepParameter};
use tailqr::tail::HeqrConfig;
use tailqr::tuning::{log_spaced, TuningConfig};
use tailqr::SolverConfig;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Training CSV (fit, evaluate)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Name of the response column [default: y]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Model bundle written by `fit` (predict)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// CSV with the covariates to predict at (predict)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Parent directory of the run directory [default: runs]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Estimator(s): heqr, eqr, hqr (comma separated)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Vec<Method>>,
    /// Extreme quantile level(s) (comma separated)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,

    /// Fixed number of tail observations; overrides the k rule
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// k rule constant [default: 0.8]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    /// k rule exponent offset on n [default: 0.01]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    /// k rule exponent offset on log p [default: 0.05]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    /// Number of ladder levels [default: 5]
    #[arg(long = "ladder-J")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_j: Option<usize>,
    /// Ladder ratio [default: 0.8]
    #[arg(long = "ladder-s")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_s: Option<f64>,
    /// Ladder weight exponent [default: 0.5]
    #[arg(long = "ladder-a")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_a: Option<f64>,
    /// Estimate the tail index at each prediction point [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_point_evi: Option<bool>,
    /// Tail sample size of the EQR baseline [default: 4.5 n^(1/3)]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_eqr: Option<usize>,

    /// Cross-validation folds [default: 10]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    /// Smallest penalty multiplier [default: 0.01]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_min: Option<f64>,
    /// Largest penalty multiplier [default: 10]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<f64>,
    /// Number of penalties on the grid [default: 20]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_count: Option<usize>,

    /// exact-lp or smoothed-proximal [default: exact-lp]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    /// Optimality certificate tolerance [default: 1e-8]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_kkt: Option<f64>,
    /// Solver iteration cap [default: 100000]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,

    /// Master seed [default: 20240601]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads [default: available parallelism]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,

    /// Simulation case 1-6 [default: 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<u8>,
    /// Simulated sample size [default: 1000]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Simulated dimension [default: ceil(sqrt(n))]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Replications [default: 50]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// Evaluation points per replication [default: 100]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_eval: Option<usize>,
    /// Tune penalties once on replication 0 [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reuse_lambda: Option<bool>,

    /// Swept parameter: c0, delta1 or delta2 [default: c0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<SweepParameter>,
    /// Sweep grid (comma separated)
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,

    /// Random train/test splits (evaluate) [default: 100]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<usize>,
    /// Share of rows used for training (evaluate) [default: 0.2]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Settings {
    /// Reads a flat TOML file.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::validation(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    /// `self` with every field set in `top` replaced.
    pub fn overlay(mut self, top: &Settings) -> Self {
        overlay!(
            self,
            top,
            data,
            response,
            model,
            test,
            out,
            method,
            tau,
            k,
            c0,
            delta1,
            delta2,
            ladder_j,
            ladder_s,
            ladder_a,
            per_point_evi,
            k_eqr,
            folds,
            grid_min,
            grid_max,
            grid_count,
            algorithm,
            tol_kkt,
            max_iter,
            seed,
            workers,
            case,
            n,
            p,
            reps,
            n_eval,
            reuse_lambda,
            param,
            values,
            splits,
            train_fraction,
        );
        self
    }

    /// Fills the defaults shared by every command.
    pub fn with_defaults(mut self) -> Self {
        let d = HeqrConfig::default();
        let t = TuningConfig::default();
        let s = SolverConfig::default();
        self.response.get_or_insert_with(|| "y".into());
        self.out.get_or_insert_with(|| PathBuf::from("runs"));
        self.c0.get_or_insert(d.krule.c0);
        self.delta1.get_or_insert(d.krule.delta1);
        self.delta2.get_or_insert(d.krule.delta2);
        self.ladder_j.get_or_insert(d.ladder_j);
        self.ladder_s.get_or_insert(d.ladder_s);
        self.ladder_a.get_or_insert(d.ladder_a);
        self.per_point_evi.get_or_insert(d.per_point_evi);
        self.folds.get_or_insert(t.n_folds);
        self.grid_min.get_or_insert(0.01);
        self.grid_max.get_or_insert(10.0);
        self.grid_count.get_or_insert(20);
        self.algorithm.get_or_insert(s.algorithm);
        self.tol_kkt.get_or_insert(s.tol_kkt);
        self.max_iter.get_or_insert(s.max_iter);
        self.seed.get_or_insert(DEFAULT_SEED);
        self.workers
            .get_or_insert_with(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat settings serialize")
    }

    pub fn require_path<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
        let p = value
            .as_deref()
            .ok_or_else(|| CliError::validation(format!("`{key}` is required for this command")))?;
        if !p.exists() {
            return Err(CliError::validation(format!(
                "{key} file {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }

    pub fn taus(&self) -> CliResult<Vec<f64>> {
        let taus = self.tau.clone().unwrap_or_default();
        if taus.is_empty() {
            return Err(CliError::validation("at least one level `tau` is required"));
        }
        if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(CliError::validation(format!("tau = {t} outside (0, 1)")));
        }
        Ok(taus)
    }

    pub fn solver(&self) -> CliResult<SolverConfig> {
        let s = SolverConfig {
            tol_kkt: self.tol_kkt.unwrap_or(1e-8),
            max_iter: self.max_iter.unwrap_or(100_000),
            algorithm: self.algorithm.unwrap_or_default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn tuning(&self) -> CliResult<TuningConfig> {
        let (lo, hi) = (self.grid_min.unwrap_or(0.01), self.grid_max.unwrap_or(10.0));
        let count = self.grid_count.unwrap_or(20);
        if !(lo > 0.0 && hi >= lo && count >= 1) || (count > 1 && hi == lo) {
            return Err(CliError::validation(format!(
                "penalty grid needs 0 < grid_min < grid_max and grid_count >= 1 (got {lo}, {hi}, {count})"
            )));
        }
        let t = TuningConfig {
            n_folds: self.folds.unwrap_or(10),
            grid_multipliers: log_spaced(lo, hi, count),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            ..TuningConfig::default()
        };
        t.validate()?;
        Ok(t)
    }

    pub fn heqr(&self) -> CliResult<HeqrConfig> {
        let mut c = HeqrConfig::default();
        if let Some(v) = self.c0 {
            c.krule.c0 = v;
        }
        if let Some(v) = self.delta1 {
            c.krule.delta1 = v;
        }
        if let Some(v) = self.delta2 {
            c.krule.delta2 = v;
        }
        c.k = self.k;
        if let Some(v) = self.ladder_j {
            c.ladder_j = v;
        }
        if let Some(v) = self.ladder_s {
            c.ladder_s = v;
        }
        if let Some(v) = self.ladder_a {
            c.ladder_a = v;
        }
        if let Some(v) = self.per_point_evi {
            c.per_point_evi = v;
        }
        c.tuning = self.tuning()?;
        c.solver = self.solver()?;
        Ok(c)
    }

    pub fn eqr(&self, n: usize) -> tailqr::baselines::EqrConfig {
        let mut c = tailqr::baselines::EqrConfig::for_n(n);
        if let Some(k) = self.k_eqr {
            c.k_eqr = k;
        }
        c.per_point_evi = self.per_point_evi.unwrap_or(false);
        c
    }

    pub fn benchmark_options(&self, methods: Vec<Method>) -> CliResult<BenchmarkOptions> {
        Ok(BenchmarkOptions {
            methods,
            heqr: self.heqr()?,
            eqr: self.k_eqr.map(|k| tailqr::baselines::EqrConfig {
                k_eqr: k,
                per_point_evi: self.per_point_evi.unwrap_or(false),
            }),
            reuse_lambda: self.reuse_lambda.unwrap_or(true),
            ..BenchmarkOptions::default()
        })
    }

    /// Requested methods, or all three with EQR left out when it cannot be
    /// fitted on `n` rows and `p` columns.
    pub fn methods_or_all(&self, n: usize, p: usize) -> Vec<Method> {
        match &self.method {
            Some(m) => m.clone(),
            None if n > p + 1 => vec![Method::Heqr, Method::Eqr, Method::Hqr],
            None => {
                log::info!("EQR left out: n = {n} does not exceed p + 1 = {}", p + 1);
                vec![Method::Heqr, Method::Hqr]
            }
        }
    }
}
