use tailqr::sim::bench::{run_benchmark, sensitivity_sweep, BenchmarkResult, SweepParameter};
use tailqr::sim::SimulationConfig;

use crate::error::{CliError, CliResult};
use crate::run::RunDir;
use crate::settings::Settings;

pub const DEFAULT_C0_GRID: [f64; 7] = [0.5, 0.8, 1.1, 1.4, 1.7, 2.0, 2.3];

pub fn simulation_config(s: &Settings) -> CliResult<SimulationConfig> {
    let mut cfg = SimulationConfig::case(s.case.unwrap_or(1), s.n.unwrap_or(1000))?;
    if let Some(p) = s.p {
        cfg = cfg.with_p(p);
    }
    if let Some(r) = s.reps {
        cfg = cfg.with_reps(r);
    }
    if let Some(seed) = s.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(t) = &s.tau {
        cfg = cfg.with_taus(t.clone());
    }
    if let Some(m) = s.n_eval {
        cfg.n_eval = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn failure_manifest(res: &BenchmarkResult) -> Vec<serde_json::Value> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for r in &res.reports {
        for (rep, msg) in &r.failures {
            if seen.insert((r.method.clone(), *rep)) {
                out.push(serde_json::json!({ "method": r.method, "rep": rep, "error": msg }));
            }
        }
    }
    out
}

pub fn cmd_benchmark(s: &Settings, run: &mut RunDir) -> CliResult<()> {
    let cfg = simulation_config(s)?;
    let opts = s.benchmark_options(s.methods_or_all(cfg.n, cfg.p))?;
    opts.heqr.ladder(cfg.n, cfg.p)?;
    log::info!(
        "case {} n = {} p = {}: {} replications of {:?}",
        cfg.case_id,
        cfg.n,
        cfg.p,
        cfg.n_reps,
        opts.methods
    );
    let res = run_benchmark(&cfg, &opts)?;
    for r in &res.reports {
        log::info!(
            "{} tau = {}: MISE {:.3}% (se {:.3}%), {} failed",
            r.method,
            r.tau,
            r.mise_percent(),
            r.se_percent(),
            r.n_failed
        );
    }
    run.write("reports.csv", &res.to_csv())?;
    run.write_json(
        "reports.json",
        &serde_json::json!({ "config": s, "result": res }),
    )?;
    let failures = failure_manifest(&res);
    if !failures.is_empty() {
        run.write_json("failures.json", &failures)?;
    }
    res.ensure_valid()?;
    Ok(())
}

pub fn cmd_sweep(s: &Settings, run: &mut RunDir) -> CliResult<()> {
    let cfg = simulation_config(s)?;
    let param = s.param.unwrap_or(SweepParameter::C0);
    let values = match (&s.values, param) {
        (Some(v), _) => v.clone(),
        (None, SweepParameter::C0) => DEFAULT_C0_GRID.to_vec(),
        (None, _) => {
            return Err(CliError::validation(format!(
                "`values` is required to sweep {param}"
            )))
        }
    };
    let opts = s.benchmark_options(s.method.clone().unwrap_or_default())?;
    log::info!("sweeping {param} over {values:?}");
    let table = sensitivity_sweep(&cfg, &opts, param, &values)?;
    run.write("sweep.csv", &table.to_csv())?;
    run.write_json(
        "sweep.json",
        &serde_json::json!({ "config": s, "result": table }),
    )?;
    let limit = tailqr::sim::bench::MAX_FAILURE_RATE * cfg.n_reps as f64;
    let failed: Vec<_> = table.rows.iter().filter(|r| r.n_failed > 0).collect();
    if !failed.is_empty() {
        let manifest: Vec<_> = failed
            .iter()
            .map(|r| serde_json::json!({ "value": r.value, "tau": r.tau, "n_failed": r.n_failed }))
            .collect();
        run.write_json("failures.json", &manifest)?;
        if failed.iter().any(|r| r.n_failed as f64 > limit) {
            return Err(CliError::numerical(
                "more than 5% of replications failed for some sweep value; see failures.json",
            ));
        }
    }
    Ok(())
}
