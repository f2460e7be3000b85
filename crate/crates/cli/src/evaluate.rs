//! Repeated random train/test splits of a real data set, scored by the
//! standardized coverage error of the predicted extreme quantiles.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::Serialize;
use tailqr::baselines::{fit_eqr_model, fit_hqr_model};
use tailqr::exec::{map_indices, Execution};
use tailqr::sim::bench::{median, Method, MAX_FAILURE_RATE};
use tailqr::sim::dgp::{stream_rng, Stream};
use tailqr::sim::prediction_error;
use tailqr::tail::{estimate_evi_with_means, fit_heqr, EvalPoint};
use tailqr::{load_csv, standardize, Dataset, TailError};

use crate::error::{CliError, CliResult};
use crate::run::RunDir;
use crate::settings::Settings;

/// Column means, with 0/1 columns replaced by their mode.
pub fn central_point(d: &Dataset) -> Vec<f64> {
    let means = d.column_means();
    (0..d.p())
        .map(|j| {
            let col = (0..d.n()).map(|i| d.row(i)[j]);
            if col.clone().all(|v| v == 0.0 || v == 1.0) {
                let ones = col.filter(|v| *v == 1.0).count();
                if 2 * ones > d.n() {
                    1.0
                } else {
                    0.0
                }
            } else {
                means[j]
            }
        })
        .collect()
}

type RowPredictor<'a> = &'a dyn Fn(&[f64], f64) -> Result<f64, CliError>;

/// Predictions at each test row, one vector per level.
fn predict_split(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    taus: &[f64],
    s: &Settings,
    fold_seed: u64,
) -> Result<Vec<Vec<f64>>, CliError> {
    let rows = |f: RowPredictor| -> Result<Vec<Vec<f64>>, CliError> {
        taus.iter()
            .map(|&t| (0..test.n()).map(|i| f(test.row(i), t)).collect())
            .collect()
    };
    match method {
        Method::Heqr => {
            let mut cfg = s.heqr()?;
            cfg.tuning.seed = fold_seed;
            cfg.tuning.exec = Execution::Sequential;
            let mut m = fit_heqr(train, &cfg, None)?;
            if !m.per_point_evi {
                m.evi = estimate_evi_with_means(
                    &m.fits,
                    &m.col_means,
                    &m.ladder,
                    &EvalPoint::At(central_point(train)),
                )?;
            }
            rows(&|x, t| Ok(m.predict(x, t)?.q_hat))
        }
        Method::Eqr => {
            if train.n() <= train.p() + 1 {
                return Err(TailError::EqrNotApplicable {
                    n: train.n(),
                    p: train.p(),
                }
                .into());
            }
            let cfg = s.eqr(train.n());
            cfg.validate(train.n())?;
            let m = fit_eqr_model(train, &cfg, &s.solver()?)?;
            rows(&|x, t| Ok(m.predict(x, t)?.q_hat))
        }
        Method::Hqr => {
            let mut tuning = s.tuning()?;
            tuning.seed = fold_seed;
            tuning.exec = Execution::Sequential;
            let solver = s.solver()?;
            let sd = standardize(train);
            taus.iter()
                .map(|&t| {
                    let m = fit_hqr_model(&sd, train.y(), t, None, &tuning, &solver)?;
                    (0..test.n()).map(|i| Ok(m.predict(test.row(i))?)).collect()
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationRow {
    pub method: String,
    pub tau: f64,
    pub median_abs_pe: f64,
    /// Median absolute deviation of |PE| around its median.
    pub mad: f64,
    pub n_splits: usize,
    pub n_failed: usize,
}

pub fn summarize(method: Method, tau: f64, pe: &[f64], n_splits: usize) -> EvaluationRow {
    let abs: Vec<f64> = pe.iter().map(|v| v.abs()).collect();
    let med = median(&abs);
    let dev: Vec<f64> = abs.iter().map(|v| (v - med).abs()).collect();
    EvaluationRow {
        method: method.label().into(),
        tau,
        median_abs_pe: med,
        mad: median(&dev),
        n_splits,
        n_failed: n_splits - pe.len(),
    }
}

pub fn cmd_evaluate(s: &Settings, run: &mut RunDir) -> CliResult<()> {
    let data = s.require_path(&s.data, "data")?;
    let d = load_csv(data, s.response.as_deref().unwrap_or("y"))?;
    let taus = s.taus()?;
    let splits = s.splits.unwrap_or(100);
    let frac = s.train_fraction.unwrap_or(0.2);
    if splits == 0 {
        return Err(CliError::validation("splits must be positive"));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(CliError::validation(format!(
            "train_fraction = {frac} outside (0, 1)"
        )));
    }
    let n1 = (frac * d.n() as f64).round() as usize;
    if n1 < 2 || d.n() - n1 < 1 {
        return Err(CliError::validation(format!(
            "a {frac} split of {} rows leaves an empty part",
            d.n()
        )));
    }
    let methods = s.methods_or_all(n1, d.p());
    s.heqr()?.ladder(n1, d.p())?;
    let seed = s.seed.unwrap_or(crate::settings::DEFAULT_SEED);
    log::info!(
        "{splits} splits: {n1} training rows, {} test rows",
        d.n() - n1
    );

    // per split: per method: per tau PE, or the error message
    let results: Vec<Vec<Result<Vec<f64>, String>>> =
        map_indices(Execution::Parallel, splits, |sp| {
            let mut idx: Vec<usize> = (0..d.n()).collect();
            idx.shuffle(&mut stream_rng(seed, sp as u64, Stream::Split));
            let fold_seed = stream_rng(seed, sp as u64, Stream::Folds).next_u64();
            let (tr, te) = idx.split_at(n1);
            let (train, test) = match (d.subset(tr), d.subset(te)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return vec![Err("split too small".to_string()); methods.len()],
            };
            methods
                .iter()
                .map(|&m| {
                    let q = predict_split(m, &train, &test, &taus, s, fold_seed)
                        .map_err(|e| e.message)?;
                    taus.iter()
                        .zip(&q)
                        .map(|(&t, qt)| {
                            prediction_error(test.y(), qt, t).map_err(|e| e.to_string())
                        })
                        .collect()
                })
                .collect()
        });

    let mut pe_csv = String::from("split,method,tau,pe\n");
    let mut failures = Vec::new();
    let mut table = Vec::new();
    for (mi, &m) in methods.iter().enumerate() {
        for (ti, &t) in taus.iter().enumerate() {
            let mut pe = Vec::new();
            for (sp, r) in results.iter().enumerate() {
                if let Ok(v) = &r[mi] {
                    pe.push(v[ti]);
                    pe_csv.push_str(&format!("{sp},{m},{t},{:.10e}\n", v[ti]));
                }
            }
            let row = summarize(m, t, &pe, splits);
            log::info!(
                "{m} tau = {t}: median |PE| {:.3} (MAD {:.3})",
                row.median_abs_pe,
                row.mad
            );
            table.push(row);
        }
        for (sp, r) in results.iter().enumerate() {
            if let Err(e) = &r[mi] {
                failures.push(serde_json::json!({ "split": sp, "method": m, "error": e }));
            }
        }
    }
    let mut csv = String::from("method,tau,median_abs_pe,mad,n_splits,n_failed\n");
    for r in &table {
        csv.push_str(&format!(
            "{},{},{:.10e},{:.10e},{},{}\n",
            r.method, r.tau, r.median_abs_pe, r.mad, r.n_splits, r.n_failed
        ));
    }
    run.write("evaluation.csv", &csv)?;
    run.write("pe.csv", &pe_csv)?;
    run.write_json(
        "evaluation.json",
        &serde_json::json!({ "config": s, "result": table }),
    )?;
    if !failures.is_empty() {
        run.write_json("failures.json", &failures)?;
        if table
            .iter()
            .any(|r| r.n_failed as f64 > MAX_FAILURE_RATE * splits as f64)
        {
            return Err(CliError::numerical(
                "more than 5% of splits failed for some method; see failures.json",
            ));
        }
    }
    Ok(())
}
