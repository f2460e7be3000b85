//! Fitted model artifact written by `fit` and read by `predict`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tailqr::baselines::{EqrModel, HqrModel};
use tailqr::sim::bench::Method;
use tailqr::tail::HeqrModel;
use tailqr::QuantileFit;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

pub const FORMAT: &str = "tailqr-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "fit", rename_all = "lowercase")]
pub enum Model {
    Heqr(Box<HeqrModel>),
    Eqr(EqrModel),
    /// One model per requested extreme level.
    Hqr(Vec<HqrModel>),
}

impl Model {
    pub fn method(&self) -> Method {
        match self {
            Model::Heqr(_) => Method::Heqr,
            Model::Eqr(_) => Method::Eqr,
            Model::Hqr(_) => Method::Hqr,
        }
    }

    fn fits(&self) -> Vec<&QuantileFit> {
        match self {
            Model::Heqr(m) => m.fits.iter().collect(),
            Model::Eqr(m) => m.fits.iter().collect(),
            Model::Hqr(ms) => ms.iter().map(|m| &m.fit).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub tau: f64,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub n_iter: usize,
    pub nonzero_slopes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub format: String,
    pub config: Settings,
    pub response: String,
    pub columns: Vec<String>,
    pub n_train: usize,
    pub model: Model,
    pub gamma_hat: Option<f64>,
    pub diagnostics: Vec<FitDiagnostics>,
}

impl Bundle {
    pub fn new(
        config: Settings,
        response: String,
        columns: Vec<String>,
        n_train: usize,
        model: Model,
    ) -> Self {
        let gamma_hat = match &model {
            Model::Heqr(m) => Some(m.evi.gamma_hat),
            Model::Eqr(m) => m.gamma_at(&m.col_means).ok().map(|g| g.0),
            Model::Hqr(_) => None,
        };
        let diagnostics = model
            .fits()
            .into_iter()
            .map(|f| FitDiagnostics {
                tau: f.tau,
                lambda: f.lambda,
                objective: f.objective,
                kkt_residual: f.kkt_residual,
                n_iter: f.n_iter,
                nonzero_slopes: f.nonzero_slopes(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            config,
            response,
            columns,
            n_train,
            model,
            gamma_hat,
            diagnostics,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::validation(format!(
                "model bundle {} does not exist",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        let b: Bundle = serde_json::from_str(&text).map_err(|e| {
            CliError::validation(format!("{} is not a model bundle: {e}", path.display()))
        })?;
        if b.format != FORMAT {
            return Err(CliError::validation(format!(
                "unsupported bundle format `{}`",
                b.format
            )));
        }
        Ok(b)
    }

    /// Extreme quantile at the raw covariate point `x`.
    pub fn predict(&self, x: &[f64], tau: f64) -> CliResult<f64> {
        match &self.model {
            Model::Heqr(m) => Ok(m.predict(x, tau)?.q_hat),
            Model::Eqr(m) => Ok(m.predict(x, tau)?.q_hat),
            Model::Hqr(ms) => {
                let m = ms.iter().find(|m| m.tau_n == tau).ok_or_else(|| {
                    let fitted: Vec<String> = ms.iter().map(|m| m.tau_n.to_string()).collect();
                    CliError::validation(format!(
                        "hqr model was fitted at tau in {{{}}}; refit to predict at {tau}",
                        fitted.join(", ")
                    ))
                })?;
                Ok(m.predict(x)?)
            }
        }
    }
}
