//! Batch command-line interface.
//!
//! Exit codes: 0 success, 2 usage/validation error, 3 numerical failure,
//! 4 io/format error. Errors print a machine-readable JSON record on stderr.

mod args;
mod exec;
mod output;

use clap::Parser;

use args::{Cli, Command};
use rfgp_core::error::Error;

fn main() {
    let raw: Vec<String> = std::env::args().collect();
    let expanded = match expand_config_args(raw) {
        Ok(a) => a,
        Err(e) => fail(&e),
    };
    let cli = Cli::parse_from(expanded);

    // Thread cap: flag wins over RFGP_THREADS; results never depend on it.
    let cap = cli.threads.or_else(|| {
        std::env::var("RFGP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = cap {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }

    let config_json = serde_json::to_string(&cli.command).expect("config serializes");
    let result = match &cli.command {
        Command::Ingest(a) => exec::data::run(a, &config_json),
        Command::Tune(a) => exec::model::run_tune(a, &config_json),
        Command::Fit(a) => exec::model::run_fit(a, &config_json),
        Command::Predict(a) => exec::model::run_predict(a, &config_json),
        Command::Calibrate(a) => exec::model::run_calibrate(a, &config_json),
        Command::Cluster(a) => exec::analysis::run_cluster(a, &config_json),
        Command::Kpca(a) => exec::analysis::run_kpca(a, &config_json),
        Command::Retrieve(a) => exec::analysis::run_retrieve(a, &config_json),
        Command::Boloop(a) => exec::analysis::run_boloop(a, &config_json),
        Command::Bench(a) => exec::bench::run(a, &config_json),
    };
    if let Err(e) = result {
        fail(&e);
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Format { .. } => 4,
        Error::NumericalBreakdown(_) | Error::DegenerateSketch(_) => 3,
        _ => 2,
    }
}

fn fail(e: &Error) -> ! {
    let code = exit_code(e);
    let record = serde_json::json!({ "error": e.to_string(), "exit_code": code });
    eprintln!("{record}");
    std::process::exit(code);
}

/// Expand `--config <file>` into `--key value` arguments inserted right after
/// the subcommand, so explicit flags override file values.
fn expand_config_args(raw: Vec<String>) -> Result<Vec<String>, Error> {
    let mut config_path: Option<String> = None;
    let mut rest: Vec<String> = Vec::new();
    let mut it = raw.into_iter();
    let prog = it.next().unwrap_or_else(|| "rfgp".into());
    while let Some(arg) = it.next() {
        if arg == "--config" {
            config_path = it.next();
            if config_path.is_none() {
                return Err(Error::InvalidInput("--config needs a path".into()));
            }
        } else if let Some(v) = arg.strip_prefix("--config=") {
            config_path = Some(v.to_string());
        } else {
            rest.push(arg);
        }
    }
    let mut out = vec![prog];
    let Some(path) = config_path else {
        out.extend(rest);
        return Ok(out);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut file_flags = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::format(
                &path,
                format!("line {}: expected key=value", no + 1),
            ));
        };
        file_flags.push(format!("--{}", k.trim().replace('_', "-")));
        file_flags.push(v.trim().to_string());
    }
    // Subcommand first, then file defaults, then explicit flags.
    let mut rest_iter = rest.into_iter();
    match rest_iter.next() {
        Some(sub) if !sub.starts_with('-') => {
            out.push(sub);
            out.extend(file_flags);
            out.extend(rest_iter);
        }
        Some(other) => {
            out.push(other);
            out.extend(rest_iter);
            out.extend(file_flags);
        }
        None => out.extend(file_flags),
    }
    Ok(out)
}
