//! `rfgp ingest`: text inputs to chunked dataset directories.

use rfgp_core::dataset::{ingest_molecules, ingest_sequences, ingest_tabular};
use rfgp_core::error::{Error, Result};

use crate::args::IngestArgs;
use crate::output::Report;

pub fn run(args: &IngestArgs, config_json: &str) -> Result<()> {
    let ds = match args.format.as_str() {
        "csv" => ingest_tabular(&args.input, &args.target_column, args.chunk_rows, &args.out)?,
        "seq" => ingest_sequences(&args.input, &args.alphabet, args.chunk_rows, &args.out)?,
        "xyz" => {
            let elements: Vec<String> =
                args.elements.split(',').map(|s| s.trim().to_string()).collect();
            ingest_molecules(
                &args.input,
                &elements,
                args.max_neighbors,
                args.chunk_rows,
                &args.out,
            )?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown ingest format '{other}' (expected csv, seq or xyz)"
            )))
        }
    };
    let mut report = Report::new("ingest", config_json);
    report
        .meta("dataset_dir", args.out.display())
        .meta("dataset_hash", ds.content_hash())
        .meta("rows", ds.num_rows())
        .meta("chunks", ds.num_chunks())
        .meta("feature_width", ds.feature_width());
    report.write(args.out.join("ingest_report.txt"))?;
    println!(
        "ingested {} rows into {} ({} chunks)",
        ds.num_rows(),
        args.out.display(),
        ds.num_chunks()
    );
    Ok(())
}
