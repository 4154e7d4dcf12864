//! `rfgp tune | fit | predict | calibrate`.

use std::fs;

use rfgp_core::analysis::auce;
use rfgp_core::artifact::{load_model, save_model};
use rfgp_core::dataset::ChunkedDataset;
use rfgp_core::error::{Error, Result};
use rfgp_core::gp::{
    tune_approx_mll, tune_bayes, tune_grid, ApproxNmllOptions, BayesOptions, GPModel, TuneResult,
};

use crate::args::{CalibrateArgs, FitArgs, PredictArgs, TuneArgs};
use crate::exec::{fit_options, open_dataset, spec_from_args};
use crate::output::{fmt, parse_bounds, parse_log10_grid, Report};

pub fn run_tune(args: &TuneArgs, config_json: &str) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let base = spec_from_args(&args.kernel, &dataset, 0.1, 1.0, 1.0)?;
    let lambda_grid = parse_log10_grid(&args.lambda_grid)?;
    let beta_grid = parse_log10_grid(&args.beta_grid)?;
    let sigma_grid = parse_log10_grid(&args.sigma_grid)?;

    let result: TuneResult = match args.strategy.as_str() {
        "grid" => tune_grid(&dataset, &base, &sigma_grid, &lambda_grid, &beta_grid)?,
        "bayes" => {
            let bounds = parse_bounds(&args.sigma_bounds)?;
            let opts = BayesOptions {
                n_init: args.n_init,
                maxiter: args.tune_maxiter,
                n_candidates: args.n_candidates,
                m_samples: args.m_samples,
                tol: args.tune_tol,
                seed: args.tune_seed,
            };
            tune_bayes(&dataset, &base, bounds, &lambda_grid, &beta_grid, &opts)?
        }
        "approx_mll" => {
            let opts = ApproxNmllOptions {
                precond_rank: args.solver.precond_rank,
                variant: args.solver.precond_variant.parse()?,
                n_v: args.n_v,
                tol: args.solver.tol,
                maxiter: args.solver.maxiter,
                seed: args.tune_seed,
            };
            tune_approx_mll(&dataset, &base, &sigma_grid, &lambda_grid, &beta_grid, &opts)?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown tune strategy '{other}' (expected grid, bayes or approx_mll)"
            )))
        }
    };

    let mut report = Report::new("tune", config_json);
    report
        .meta("dataset_hash", dataset.content_hash())
        .meta(
            "best",
            serde_json::to_string(&result.best).expect("serializable"),
        )
        .meta("evaluations", result.trace.len())
        .columns(&["lambda", "beta", "sigma", "nmll"]);
    for e in &result.trace {
        report.row(&[fmt(e.lambda), fmt(e.beta), fmt(e.sigma), fmt(e.nmll)]);
    }
    report.write(&args.out)?;
    println!(
        "best nmll {:.6} at lambda {:.6} beta {:.6} sigma {:.6} ({} evaluations)",
        result.best.nmll, result.best.lambda, result.best.beta, result.best.sigma,
        result.trace.len()
    );
    Ok(())
}

/// Pull the winning hyperparameters back out of a tune report.
fn parse_tune_best(path: &std::path::Path) -> Result<(f64, f64, f64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    for line in text.lines() {
        if let Some(json) = line.strip_prefix("# best = ") {
            let v: serde_json::Value = serde_json::from_str(json)
                .map_err(|e| Error::format(path.display(), e.to_string()))?;
            let get = |k: &str| -> Result<f64> {
                v.get(k)
                    .and_then(|x| x.as_f64())
                    .ok_or_else(|| Error::format(path.display(), format!("missing field {k}")))
            };
            return Ok((get("lambda")?, get("beta")?, get("sigma")?));
        }
    }
    Err(Error::format(
        path.display(),
        "no '# best = ...' line; is this a tune output?",
    ))
}

pub fn run_fit(args: &FitArgs, config_json: &str) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let (lambda, beta, sigma) = match &args.tune_result {
        Some(path) => parse_tune_best(path)?,
        None => (args.lambda, args.beta, args.sigma),
    };
    let spec = spec_from_args(&args.kernel, &dataset, lambda, beta, sigma)?;
    let opts = fit_options(&args.solver)?;
    let model = GPModel::fit(&dataset, &spec, &opts)?;
    save_model(&model, &args.out)?;
    let mut report = Report::new("fit", config_json);
    report
        .meta("dataset_hash", dataset.content_hash())
        .meta("model", args.out.display())
        .meta("iterations", model.report().iterations)
        .meta("converged", model.report().converged);
    if let Some(w) = &model.manifest().fit_warning {
        report.meta("warning", w);
    }
    report.write(args.out.with_extension("fit_report.txt"))?;
    println!(
        "fit complete: {} iterations, converged = {}",
        model.report().iterations,
        model.report().converged
    );
    Ok(())
}

/// Stream a dataset through a model, applying `f` to each chunk's
/// (means, stds) alongside targets and the running row offset.
fn predict_chunks(
    model: &GPModel,
    dataset: &ChunkedDataset,
    f: &mut dyn FnMut(usize, &[f64], &[f64], &[f64]),
) -> Result<()> {
    let mut offset = 0usize;
    dataset.for_each_chunk(|chunk| {
        let (means, vars) = model.predict(&chunk.data)?;
        let stds: Vec<f64> = vars.iter().map(|v| v.max(0.0).sqrt()).collect();
        let targets: Vec<f64> = chunk.targets.to_vec();
        f(offset, means.as_slice().unwrap(), &stds, &targets);
        offset += chunk.data.num_rows();
        Ok(())
    })
}

pub fn run_predict(args: &PredictArgs, config_json: &str) -> Result<()> {
    let model = load_model(&args.model)?;
    let dataset = open_dataset(&args.dataset)?;
    let mut report = Report::new("predict", config_json);
    report
        .meta("model", args.model.display())
        .meta("dataset_hash", dataset.content_hash())
        .columns(&["id", "mean", "std"]);
    predict_chunks(&model, &dataset, &mut |offset, means, stds, _| {
        for (i, (m, s)) in means.iter().zip(stds).enumerate() {
            report.row(&[(offset + i).to_string(), fmt(*m), fmt(*s)]);
        }
    })?;
    report.write(&args.out)?;
    println!("wrote {} predictions to {}", dataset.num_rows(), args.out.display());
    Ok(())
}

pub fn run_calibrate(args: &CalibrateArgs, config_json: &str) -> Result<()> {
    let model = load_model(&args.model)?;
    let dataset = open_dataset(&args.dataset)?;
    let mut means = Vec::with_capacity(dataset.num_rows());
    let mut stds = Vec::with_capacity(dataset.num_rows());
    let mut truths = Vec::with_capacity(dataset.num_rows());
    predict_chunks(&model, &dataset, &mut |_, m, s, t| {
        means.extend_from_slice(m);
        stds.extend_from_slice(s);
        truths.extend_from_slice(t);
    })?;
    let curve = auce(&means, &stds, &truths)?;
    let mut report = Report::new("calibrate", config_json);
    report
        .meta("model", args.model.display())
        .meta("dataset_hash", dataset.content_hash())
        .meta("auce", fmt(curve.auce))
        .columns(&["level", "observed_coverage"]);
    for (l, c) in curve.levels.iter().zip(&curve.observed_coverage) {
        report.row(&[format!("{l:.2}"), fmt(*c)]);
    }
    report.write(&args.out)?;
    println!("auce = {:.6}", curve.auce);
    Ok(())
}
