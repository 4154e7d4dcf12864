//! `rfgp bench`: synthetic performance tables.
//!
//! The `sorf` suite times structured feature generation against a dense
//! matrix multiply producing the same number of features. The `precond`
//! suite counts CG vs PCG iterations across preconditioner ranks and
//! construction variants on an ill-conditioned synthetic system.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng as _;

use rfgp_core::error::{Error, Result};
use rfgp_core::precond::{build_preconditioner, PrecondVariant};
use rfgp_core::rng::{self, StreamDomain};
use rfgp_core::solve::{cg_solve, GramSystem};
use rfgp_core::stream::{feature_target_product, DenseSource};
use rfgp_core::transform::SorfOperator;

use crate::args::BenchArgs;
use crate::output::{fmt, Report};

pub fn run(args: &BenchArgs, config_json: &str) -> Result<()> {
    let mut report = Report::new("bench", config_json);
    match args.suite.as_str() {
        "sorf" => bench_sorf(&mut report, args.bench_seed)?,
        "precond" => bench_precond(&mut report, args.bench_seed)?,
        "all" => {
            bench_sorf(&mut report, args.bench_seed)?;
            report.blank();
            bench_precond(&mut report, args.bench_seed)?;
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown bench suite '{other}' (expected sorf, precond or all)"
            )))
        }
    }
    report.write(&args.out)?;
    println!("bench tables written to {}", args.out.display());
    Ok(())
}

fn time_ms(mut f: impl FnMut()) -> f64 {
    // One warmup, then the median of three runs.
    f();
    let mut times: Vec<f64> = (0..3)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[1]
}

fn bench_sorf(report: &mut Report, seed: u64) -> Result<()> {
    let rows = 2000;
    let d = 1024;
    let mut rng = rng::substream(seed, StreamDomain::Bench, 20);
    let x = Array2::from_shape_fn((rows, d), |_| rng.gen_range(-1.0..1.0f64));

    report.comment("feature generation, 2000 x 1024 input batch");
    report.columns(&["algorithm", "features", "ms"]);
    let mut structured = Vec::new();
    for m in [2048usize, 4096, 8192, 16384] {
        let op = SorfOperator::sample(seed, d, m)?;
        let ms = time_ms(|| {
            let _ = op.apply_batch(x.view()).unwrap();
        });
        structured.push((m, ms));
        report.row(&["sorf".into(), m.to_string(), format!("{ms:.2}")]);
    }
    for m in [2048usize, 4096, 8192, 16384] {
        let w = Array2::from_shape_fn((d, m), |_| rng.gen_range(-1.0..1.0f64));
        let ms = time_ms(|| {
            let _ = x.dot(&w);
        });
        report.row(&["dense_matmul".into(), m.to_string(), format!("{ms:.2}")]);
    }
    let t4096 = structured.iter().find(|&&(m, _)| m == 4096).unwrap().1;
    let t16384 = structured.iter().find(|&&(m, _)| m == 16384).unwrap().1;
    report.meta("sorf_ratio_16384_over_4096", format!("{:.3}", t16384 / t4096));
    Ok(())
}

fn bench_precond(report: &mut Report, seed: u64) -> Result<()> {
    // Geometric spectrum; the noise floor puts the regularized condition
    // number near 1.5e6, hard enough to separate the variants while plain CG
    // still converges within the iteration cap.
    let n = 4096;
    let m = 512;
    let lambda = 0.03;
    let tol = 1e-6;
    let maxiter = 20_000;
    let mut rng = rng::substream(seed, StreamDomain::Bench, 21);
    let z = Array2::from_shape_fn((n, m), |(_, j)| {
        rng.gen_range(-1.0..1.0f64) * 0.974f64.powi(j as i32)
    });
    let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0f64));
    let src = DenseSource::new(z, y)?;
    let sys = GramSystem::new(&src, lambda)?;
    let zty = feature_target_product(&src)?;

    let plain = cg_solve(&sys, zty.view(), tol, maxiter, None)?;
    report.comment("iterations to tol 1e-6 on an ill-conditioned synthetic system");
    report.columns(&["variant", "rank", "iterations", "beta_over_lambda2"]);
    report.row(&[
        "none".into(),
        "0".into(),
        plain.iterations.to_string(),
        "".into(),
    ]);
    let mut best_history: Option<(String, Vec<f64>)> = None;
    for variant in [PrecondVariant::Gauss, PrecondVariant::Srht, PrecondVariant::Srht2] {
        for rank in [64usize, 128, 256, 512] {
            let p = build_preconditioner(&src, rank, lambda, variant, seed + 7)?;
            let solved = cg_solve(&sys, zty.view(), tol, maxiter, Some(&p))?;
            if variant == PrecondVariant::Srht2 && rank == 256 {
                best_history = Some((
                    format!("{variant} rank {rank}"),
                    solved.residual_history.iter().map(|r| r[0]).collect(),
                ));
            }
            report.row(&[
                variant.to_string(),
                rank.to_string(),
                solved.iterations.to_string(),
                fmt(p.estimate_ratio()?),
            ]);
        }
    }

    // Convergence trajectories for external plotting.
    report.blank();
    report.comment("relative residual per iteration");
    report.columns(&["solver", "iteration", "relative_residual"]);
    for (i, r) in plain.residual_history.iter().enumerate() {
        report.row(&["cg".into(), i.to_string(), fmt(r[0])]);
    }
    if let Some((label, history)) = best_history {
        for (i, r) in history.iter().enumerate() {
            report.row(&[label.replace(' ', "_"), i.to_string(), fmt(*r)]);
        }
    }
    Ok(())
}
