use tailqr::baselines::{fit_eqr_model, fit_hqr_model};
use tailqr::data::fmt_f64;
use tailqr::sim::bench::Method;
use tailqr::tail::fit_heqr;
use tailqr::{load_covariates, load_csv, standardize};

use crate::bundle::{Bundle, Model};
use crate::error::{CliError, CliResult};
use crate::run::RunDir;
use crate::settings::Settings;

pub fn cmd_fit(s: &Settings, run: &mut RunDir) -> CliResult<()> {
    let method = match s.method.as_deref() {
        None => Method::Heqr,
        Some([m]) => *m,
        Some(_) => return Err(CliError::validation("fit takes exactly one method")),
    };
    let data = s.require_path(&s.data, "data")?;
    let response = s.response.clone().unwrap_or_else(|| "y".into());
    let d = load_csv(data, &response)?;
    log::info!(
        "loaded {} rows, {} covariates from {}",
        d.n(),
        d.p(),
        data.display()
    );

    let model = match method {
        Method::Heqr => {
            let cfg = s.heqr()?;
            let (k, ladder) = cfg.ladder(d.n(), d.p())?;
            log::info!("k = {}, ladder levels {:?}", k.k, ladder.levels);
            let m = fit_heqr(&d, &cfg, None)?;
            log::info!("gamma_hat = {}", m.evi.gamma_hat);
            Model::Heqr(Box::new(m))
        }
        Method::Eqr => {
            let cfg = s.eqr(d.n());
            if d.n() <= d.p() + 1 {
                return Err(tailqr::TailError::EqrNotApplicable { n: d.n(), p: d.p() }.into());
            }
            cfg.validate(d.n())?;
            Model::Eqr(fit_eqr_model(&d, &cfg, &s.solver()?)?)
        }
        Method::Hqr => {
            let taus = s.taus()?;
            let (tuning, solver) = (s.tuning()?, s.solver()?);
            let sd = standardize(&d);
            let ms = taus
                .iter()
                .map(|&t| fit_hqr_model(&sd, d.y(), t, None, &tuning, &solver))
                .collect::<Result<Vec<_>, _>>()?;
            Model::Hqr(ms)
        }
    };
    let bundle = Bundle::new(s.clone(), response, d.column_names().to_vec(), d.n(), model);
    run.write_json("model.json", &bundle)?;
    Ok(())
}

pub fn cmd_predict(s: &Settings, run: &mut RunDir) -> CliResult<()> {
    let bundle = Bundle::load(s.require_path(&s.model, "model")?)?;
    let test = s.require_path(&s.test, "test")?;
    let taus = s.taus()?;
    let x = load_covariates(test, &bundle.columns)?;
    let p = bundle.columns.len();
    let rows = x.len() / p;
    log::info!(
        "predicting {} rows at {} levels with {}",
        rows,
        taus.len(),
        bundle.model.method()
    );

    let mut out = String::from("row_id,tau,q_hat\n");
    let mut failures = Vec::new();
    for i in 0..rows {
        for &tau in &taus {
            match bundle.predict(&x[i * p..(i + 1) * p], tau) {
                Ok(q) => out.push_str(&format!("{i},{tau},{}\n", fmt_f64(q))),
                Err(e) if e.kind == crate::error::Kind::Validation => return Err(e),
                Err(e) => failures
                    .push(serde_json::json!({ "row_id": i, "tau": tau, "error": e.message })),
            }
        }
    }
    run.write("predictions.csv", &out)?;
    if !failures.is_empty() {
        let n = failures.len();
        run.write_json("failures.json", &failures)?;
        return Err(CliError::numerical(format!(
            "{n} predictions failed; see failures.json"
        )));
    }
    Ok(())
}
