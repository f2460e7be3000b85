//! Seeded Monte Carlo driver and sensitivity sweeps.
//!
//! Every replication draws its training sample, its evaluation points and
//! (when penalties are tuned per replication) its fold assignment from
//! streams keyed by `(seed, rep)`, and results are gathered in replication
//! order. Reports are therefore identical for any worker count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::dgp::{evaluation_points, generate_case, stream_rng, SimulationConfig, Stream, Truth};
use super::metrics::{ise, mean_and_se, MetricsReport};
use crate::baselines::{fit_eqr_model, fit_hqr_model, EqrConfig};
use crate::data::{standardize, Dataset};
use crate::error::{SimError, TailError};
use crate::exec::{map_indices, Execution};
use crate::tail::{fit_heqr, HeqrConfig};
use crate::tuning::TuningConfig;

/// Largest tolerated share of failed replications per method.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Heqr,
    Eqr,
    Hqr,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Heqr => "heqr",
            Method::Eqr => "eqr",
            Method::Hqr => "hqr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heqr" => Ok(Method::Heqr),
            "eqr" => Ok(Method::Eqr),
            "hqr" => Ok(Method::Hqr),
            other => Err(format!(
                "unknown method `{other}` (expected heqr, eqr or hqr)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub methods: Vec<Method>,
    pub heqr: HeqrConfig,
    /// Defaults to `⌊4.5 n^{1/3}⌋`.
    pub eqr: Option<EqrConfig>,
    /// Tune penalties on replication 0 and reuse them for all replications.
    pub reuse_lambda: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::Heqr, Method::Eqr, Method::Hqr],
            heqr: HeqrConfig::default(),
            eqr: None,
            reuse_lambda: true,
            exec: Execution::Parallel,
        }
    }
}

/// Penalties fixed for the whole run in reuse mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedPenalties {
    pub heqr: Option<Vec<f64>>,
    /// One penalty per extreme level.
    pub hqr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: SimulationConfig,
    pub options: BenchmarkOptions,
    /// One report per (method, level), methods in the requested order.
    pub reports: Vec<MetricsReport>,
    /// γ̂ of HEQR per replication (`None` where the fit failed).
    pub heqr_gamma: Vec<Option<f64>>,
    pub penalties: TunedPenalties,
}

impl BenchmarkResult {
    pub fn report(&self, method: Method, tau: f64) -> Option<&MetricsReport> {
        self.reports
            .iter()
            .find(|r| r.method == method.label() && r.tau == tau)
    }

    pub fn to_csv(&self) -> String {
        reports_csv(&self.reports)
    }

    /// Fails when some method lost more than 5% of its replications.
    pub fn ensure_valid(&self) -> Result<(), SimError> {
        match self.reports.iter().find(|r| r.exceeded_failure_limit) {
            Some(r) => Err(SimError::TooManyFailures {
                failed: r.n_failed,
                total: r.n_reps,
                first: format!("{}: {}", r.method, r.failures[0].1),
            }),
            None => Ok(()),
        }
    }
}

/// `method,case,n,p,tau,mise,se,mise_pct,se_pct,n_reps,n_failed,valid` rows.
pub fn reports_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from("method,case,n,p,tau,mise,se,mise_pct,se_pct,n_reps,n_failed,valid\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{},{:.10e},{:.10e},{:.6},{:.6},{},{},{}\n",
            r.method,
            r.case_id,
            r.n,
            r.p,
            r.tau,
            r.mise,
            r.se,
            r.mise_percent(),
            r.se_percent(),
            r.n_reps,
            r.n_failed,
            !r.exceeded_failure_limit
        ));
    }
    s
}

type RepOutcome = Result<Vec<f64>, String>;

struct Replication {
    /// Per method, ISE per level or the failure message.
    per_method: Vec<RepOutcome>,
    heqr_gamma: Option<f64>,
}

fn fold_seed(cfg: &SimulationConfig, rep: usize) -> u64 {
    stream_rng(cfg.seed, rep as u64, Stream::Folds).next_u64()
}

fn tuning_for_rep(base: &TuningConfig, cfg: &SimulationConfig, rep: usize) -> TuningConfig {
    TuningConfig {
        seed: fold_seed(cfg, rep),
        ..base.clone()
    }
}

fn truths(
    cfg: &SimulationConfig,
    truth: &Truth,
    points: &[f64],
) -> Result<Vec<Vec<f64>>, SimError> {
    cfg.taus
        .iter()
        .map(|&tau| {
            points
                .chunks_exact(cfg.p)
                .map(|x| truth.quantile(x, tau))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect()
}

fn ise_per_level(
    cfg: &SimulationConfig,
    points: &[f64],
    truth: &[Vec<f64>],
    mut estimate: impl FnMut(&[f64], f64) -> Result<f64, TailError>,
) -> RepOutcome {
    cfg.taus
        .iter()
        .zip(truth)
        .map(|(&tau, t)| {
            let est = points
                .chunks_exact(cfg.p)
                .map(|x| estimate(x, tau))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            ise(&est, t).map_err(|e| e.to_string())
        })
        .collect()
}

/// Tunes penalties on replication 0.
fn tune_on_first_rep(
    cfg: &SimulationConfig,
    opts: &BenchmarkOptions,
) -> Result<TunedPenalties, SimError> {
    let (d, _) = generate_case(cfg, 0)?;
    let heqr = if opts.methods.contains(&Method::Heqr) {
        let mut h = opts.heqr.clone();
        h.tuning = tuning_for_rep(&h.tuning, cfg, 0);
        h.tuning.exec = opts.exec;
        let sd = standardize(&d);
        let (_, ladder) = h.ladder(d.n(), d.p())?;
        let (lambdas, _) = crate::tail::tune_ladder(&sd, d.y(), &ladder, &h)?;
        Some(lambdas)
    } else {
        None
    };
    let hqr = if opts.methods.contains(&Method::Hqr) {
        let sd = standardize(&d);
        let mut tuning = tuning_for_rep(&opts.heqr.tuning, cfg, 0);
        tuning.exec = opts.exec;
        let out = map_indices(opts.exec, cfg.taus.len(), |t| {
            crate::tuning::cross_validate_lambda(
                &sd,
                d.y(),
                cfg.taus[t],
                &tuning,
                &opts.heqr.solver,
            )
            .map(|(l, _)| l)
        });
        Some(out.into_iter().collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    Ok(TunedPenalties { heqr, hqr })
}

fn run_replication(
    cfg: &SimulationConfig,
    opts: &BenchmarkOptions,
    penalties: &TunedPenalties,
    rep: usize,
) -> Result<Replication, SimError> {
    let (d, truth) = generate_case(cfg, rep)?;
    let points = evaluation_points(cfg, rep);
    let truth_vals = truths(cfg, &truth, &points)?;
    let mut heqr_gamma = None;
    let per_method = opts
        .methods
        .iter()
        .map(|m| match m {
            Method::Heqr => {
                let mut h = opts.heqr.clone();
                h.tuning = tuning_for_rep(&h.tuning, cfg, rep);
                h.tuning.exec = Execution::Sequential;
                match fit_heqr(&d, &h, penalties.heqr.as_deref()) {
                    Ok(model) => {
                        heqr_gamma = Some(model.evi.gamma_hat);
                        ise_per_level(cfg, &points, &truth_vals, |x, tau| {
                            model.predict(x, tau).map(|e| e.q_hat)
                        })
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            Method::Eqr => {
                let eqr = opts.eqr.unwrap_or_else(|| EqrConfig::for_n(cfg.n));
                match fit_eqr_model(&d, &eqr, &opts.heqr.solver) {
                    Ok(model) => ise_per_level(cfg, &points, &truth_vals, |x, tau| {
                        model.predict(x, tau).map(|e| e.q_hat)
                    }),
                    Err(e) => Err(e.to_string()),
                }
            }
            Method::Hqr => hqr_replication(cfg, opts, penalties, rep, &d, &points, &truth_vals),
        })
        .collect();
    Ok(Replication {
        per_method,
        heqr_gamma,
    })
}

fn hqr_replication(
    cfg: &SimulationConfig,
    opts: &BenchmarkOptions,
    penalties: &TunedPenalties,
    rep: usize,
    d: &Dataset,
    points: &[f64],
    truth_vals: &[Vec<f64>],
) -> RepOutcome {
    let sd = standardize(d);
    let mut tuning = tuning_for_rep(&opts.heqr.tuning, cfg, rep);
    tuning.exec = Execution::Sequential;
    let mut out = Vec::with_capacity(cfg.taus.len());
    for (t, (&tau, truth)) in cfg.taus.iter().zip(truth_vals).enumerate() {
        let lambda = penalties.hqr.as_ref().map(|l| l[t]);
        let model = fit_hqr_model(&sd, d.y(), tau, lambda, &tuning, &opts.heqr.solver)
            .map_err(|e| e.to_string())?;
        let est = points
            .chunks_exact(cfg.p)
            .map(|x| model.predict(x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        out.push(ise(&est, truth).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// Runs every requested method on `cfg.n_reps` seeded replications.
pub fn run_benchmark(
    cfg: &SimulationConfig,
    opts: &BenchmarkOptions,
) -> Result<BenchmarkResult, SimError> {
    cfg.validate()?;
    if opts.methods.is_empty() {
        return Err(SimError::Config("no methods requested".into()));
    }
    if opts.methods.contains(&Method::Eqr) && cfg.n <= cfg.p + 1 {
        return Err(SimError::Tail(TailError::EqrNotApplicable {
            n: cfg.n,
            p: cfg.p,
        }));
    }
    let penalties = if opts.reuse_lambda {
        tune_on_first_rep(cfg, opts)?
    } else {
        TunedPenalties {
            heqr: None,
            hqr: None,
        }
    };
    let reps: Vec<Result<Replication, SimError>> = map_indices(opts.exec, cfg.n_reps, |rep| {
        run_replication(cfg, opts, &penalties, rep)
    });
    let reps: Vec<Replication> = reps.into_iter().collect::<Result<_, _>>()?;

    let mut reports = Vec::new();
    for (mi, m) in opts.methods.iter().enumerate() {
        let failures: Vec<(usize, String)> = reps
            .iter()
            .enumerate()
            .filter_map(|(r, rep)| rep.per_method[mi].as_ref().err().map(|e| (r, e.clone())))
            .collect();
        let exceeded = failures.len() as f64 > MAX_FAILURE_RATE * cfg.n_reps as f64;
        for (r, e) in &failures {
            log::debug!("{} replication {r} failed: {e}", m.label());
        }
        if exceeded {
            log::warn!(
                "{}: {} of {} replications failed; report marked invalid",
                m.label(),
                failures.len(),
                cfg.n_reps
            );
        }
        for (t, &tau) in cfg.taus.iter().enumerate() {
            let ise: Vec<f64> = reps
                .iter()
                .filter_map(|rep| rep.per_method[mi].as_ref().ok().map(|v| v[t]))
                .collect();
            let mut report = MetricsReport::from_ise(
                m.label(),
                cfg.case_id,
                cfg.n,
                cfg.p,
                tau,
                ise,
                failures.clone(),
            );
            report.exceeded_failure_limit = exceeded;
            reports.push(report);
        }
    }
    Ok(BenchmarkResult {
        config: cfg.clone(),
        options: opts.clone(),
        reports,
        heqr_gamma: reps.iter().map(|r| r.heqr_gamma).collect(),
        penalties,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    C0,
    Delta1,
    Delta2,
}

impl FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c0" => Ok(SweepParameter::C0),
            "delta1" => Ok(SweepParameter::Delta1),
            "delta2" => Ok(SweepParameter::Delta2),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::C0 => "c0",
            SweepParameter::Delta1 => "delta1",
            SweepParameter::Delta2 => "delta2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub tau: f64,
    pub k: usize,
    pub mise: f64,
    pub se: f64,
    /// `mise ∓ 1.96 se`.
    pub lo: f64,
    pub hi: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},tau,k,mise,se,lo,hi,n_failed\n", self.parameter);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{}\n",
                r.value, r.tau, r.k, r.mise, r.se, r.lo, r.hi, r.n_failed
            ));
        }
        s
    }

    pub fn row(&self, value: f64, tau: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.tau == tau)
    }
}

/// HEQR MISE across a grid of one k-rule parameter.
pub fn sensitivity_sweep(
    cfg: &SimulationConfig,
    opts: &BenchmarkOptions,
    parameter: SweepParameter,
    grid: &[f64],
) -> Result<SweepTable, SimError> {
    if grid.is_empty() {
        return Err(SimError::Config("sweep grid is empty".into()));
    }
    let mut rows = Vec::new();
    for &value in grid {
        let mut o = opts.clone();
        o.methods = vec![Method::Heqr];
        match parameter {
            SweepParameter::C0 => o.heqr.krule.c0 = value,
            SweepParameter::Delta1 => o.heqr.krule.delta1 = value,
            SweepParameter::Delta2 => o.heqr.krule.delta2 = value,
        }
        o.heqr.k = None;
        let (choice, _) = o.heqr.ladder(cfg.n, cfg.p)?;
        let res = run_benchmark(cfg, &o)?;
        for r in &res.reports {
            rows.push(SweepRow {
                value,
                tau: r.tau,
                k: choice.k,
                mise: r.mise,
                se: r.se,
                lo: r.mise - 1.96 * r.se,
                hi: r.mise + 1.96 * r.se,
                n_failed: r.n_failed,
            });
        }
    }
    Ok(SweepTable { parameter, rows })
}

/// Writes `reports.csv` and `reports.json` into `dir`.
pub fn write_reports(result: &BenchmarkResult, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("reports.csv"), result.to_csv())?;
    let json = serde_json::to_string_pretty(result).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("reports.json"), json + "\n")
}

/// Median of the finite values.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Pooled standard error of a difference of two means.
pub fn pooled_se(a: &MetricsReport, b: &MetricsReport) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

/// Mean and standard error of a sample.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    mean_and_se(values)
}
