//! `rfgp cluster | kpca | retrieve | boloop`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use rfgp_core::analysis::{
    kmeans_rf, kpca_rf, retrieve_similar, run_bo_loop, Acquisition, BoConfig, ClusterIndex,
    RetrievalMode,
};
use rfgp_core::artifact::load_model;
use rfgp_core::dataset::{ChunkData, ChunkedDataset};
use rfgp_core::error::{Error, Result};
use rfgp_core::stream::{materialize, MappedDataset};

use crate::args::{BoloopArgs, ClusterArgs, KpcaArgs, RetrieveArgs};
use crate::exec::{open_dataset, spec_from_args};
use crate::output::{fmt, parse_bounds, Report};

/// Serializable form of a cluster index, written next to the model artifact.
#[derive(Serialize, Deserialize)]
struct IndexFile {
    k: usize,
    feature_dim: usize,
    model_dataset_hash: String,
    centroids: Vec<f64>,
    assignments: Vec<usize>,
}

impl IndexFile {
    fn from_index(index: &ClusterIndex, hash: &str) -> Self {
        Self {
            k: index.k,
            feature_dim: index.centroids.ncols(),
            model_dataset_hash: hash.to_string(),
            centroids: index.centroids.iter().copied().collect(),
            assignments: index.assignments.clone(),
        }
    }

    fn into_index(self) -> Result<ClusterIndex> {
        let centroids = Array2::from_shape_vec((self.k, self.feature_dim), self.centroids)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(ClusterIndex {
            k: self.k,
            centroids,
            assignments: self.assignments,
            objective_history: vec![f64::NAN],
        })
    }
}

/// Feature rows of a dataset under the model's map, fully materialized.
fn model_features(
    model_path: &std::path::Path,
    dataset: &ChunkedDataset,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let model = load_model(model_path)?;
    let source = MappedDataset::new(dataset, model.feature_map())?;
    materialize(&source)
}

pub fn run_cluster(args: &ClusterArgs, config_json: &str) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let (features, _) = model_features(&args.model, &dataset)?;
    let (k_lo, k_hi) = parse_bounds(&args.k_range)?;
    let (k_lo, k_hi) = (k_lo as usize, k_hi as usize);
    if k_lo == 0 || k_hi < k_lo {
        return Err(Error::InvalidInput(format!(
            "bad k range {}..{}",
            k_lo, k_hi
        )));
    }

    let mut elbow = Report::new("cluster", config_json);
    elbow
        .meta("dataset_hash", dataset.content_hash())
        .columns(&["k", "objective"]);
    for k in k_lo..=k_hi.min(features.nrows()) {
        let idx = kmeans_rf(features.view(), k, args.max_iter, args.cluster_seed)?;
        elbow.row(&[k.to_string(), fmt(idx.objective())]);
    }
    elbow.write(args.out.with_extension("elbow.txt"))?;

    let index = kmeans_rf(features.view(), args.k, args.max_iter, args.cluster_seed)?;
    let mut assign = Report::new("cluster", config_json);
    assign
        .meta("k", args.k)
        .meta("objective", fmt(index.objective()))
        .columns(&["id", "cluster"]);
    for (i, c) in index.assignments.iter().enumerate() {
        assign.row(&[i.to_string(), c.to_string()]);
    }
    assign.write(args.out.with_extension("assign.txt"))?;

    let file = IndexFile::from_index(&index, dataset.content_hash());
    let json = serde_json::to_string(&file).expect("serializable");
    std::fs::write(args.out.with_extension("index.json"), json)
        .map_err(|e| Error::io(args.out.display(), e))?;
    println!(
        "clustered {} rows into {} clusters (objective {:.6})",
        features.nrows(),
        args.k,
        index.objective()
    );
    Ok(())
}

pub fn run_kpca(args: &KpcaArgs, config_json: &str) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let (features, targets) = model_features(&args.model, &dataset)?;
    let result = kpca_rf(features.view(), args.components)?;
    let mut report = Report::new("kpca", config_json);
    report
        .meta("dataset_hash", dataset.content_hash())
        .meta("components", result.projections.ncols())
        .meta("truncated", result.truncated)
        .meta(
            "explained_variance",
            result
                .explained_variance
                .iter()
                .map(|v| format!("{v:.6e}"))
                .collect::<Vec<_>>()
                .join(","),
        );
    let mut cols = vec!["id".to_string(), "target".to_string()];
    for c in 0..result.projections.ncols() {
        cols.push(format!("pc{}", c + 1));
    }
    report.columns(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    for i in 0..result.projections.nrows() {
        let mut row = vec![i.to_string(), fmt(targets[i])];
        for c in 0..result.projections.ncols() {
            row.push(fmt(result.projections[(i, c)]));
        }
        report.row(&row);
    }
    report.write(&args.out)?;
    println!(
        "kpca: {} components, leading variance {:.6e}",
        result.projections.ncols(),
        result.explained_variance[0]
    );
    Ok(())
}

pub fn run_retrieve(args: &RetrieveArgs, config_json: &str) -> Result<()> {
    let store_ds = open_dataset(&args.dataset)?;
    let query_ds = open_dataset(&args.queries)?;
    let model = load_model(&args.model)?;
    let store_src = MappedDataset::new(&store_ds, model.feature_map())?;
    let (store, _) = materialize(&store_src)?;
    let query_src = MappedDataset::new(&query_ds, model.feature_map())?;
    let (queries, _) = materialize(&query_src)?;

    let text = std::fs::read_to_string(&args.index)
        .map_err(|e| Error::io(args.index.display(), e))?;
    let file: IndexFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(args.index.display(), e.to_string()))?;
    if file.model_dataset_hash != store_ds.content_hash() {
        return Err(Error::InvalidInput(
            "cluster index was built for a different store dataset".into(),
        ));
    }
    let index = file.into_index()?;
    let mode = match args.retrieval_mode.as_str() {
        "full_scan" => RetrievalMode::FullScan,
        "cluster_restricted" => RetrievalMode::ClusterRestricted,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown retrieval mode '{other}'"
            )))
        }
    };

    let mut report = Report::new("retrieve", config_json);
    report
        .meta("store_hash", store_ds.content_hash())
        .meta("query_hash", query_ds.content_hash())
        .columns(&["query_id", "rank", "store_id", "similarity"]);
    for (qi, q) in queries.outer_iter().enumerate() {
        let r = retrieve_similar(&index, store.view(), q, args.top_k, mode, args.clusters_searched)?;
        for (rank, (id, score)) in r.ids.iter().zip(&r.scores).enumerate() {
            report.row(&[
                qi.to_string(),
                (rank + 1).to_string(),
                id.to_string(),
                fmt(*score),
            ]);
        }
        if r.truncated {
            report.comment(&format!(
                "query {qi}: restricted candidate set below top_k"
            ));
        }
    }
    report.write(&args.out)?;
    println!("retrieved top-{} for {} queries", args.top_k, queries.nrows());
    Ok(())
}

pub fn run_boloop(args: &BoloopArgs, config_json: &str) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    if dataset.kind() != rfgp_core::dataset::InputKind::FixedVector {
        return Err(Error::InvalidInput(
            "the active-learning pool must be a fixed_vector dataset".into(),
        ));
    }
    // Pool sizes here are in-memory by design: the loop refits many times.
    let mut pool_x = Array2::zeros((dataset.num_rows(), dataset.feature_width()));
    let mut pool_y = Array1::zeros(dataset.num_rows());
    let mut row = 0;
    dataset.for_each_chunk(|chunk| {
        if let ChunkData::Fixed(x) = &chunk.data {
            pool_x
                .slice_mut(ndarray::s![row..row + x.nrows(), ..])
                .assign(x);
            pool_y
                .slice_mut(ndarray::s![row..row + x.nrows()])
                .assign(&chunk.targets);
            row += x.nrows();
        }
        Ok(())
    })?;

    let spec = spec_from_args(&args.kernel, &dataset, args.lambda, args.beta, args.sigma)?;
    let acquisition = match args.acquisition.as_str() {
        "ucb" => Acquisition::Ucb {
            multiplier: args.multiplier,
        },
        "random" => Acquisition::Random,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown acquisition '{other}' (expected ucb or random)"
            )))
        }
    };

    let mut report = Report::new("boloop", config_json);
    report
        .meta("dataset_hash", dataset.content_hash())
        .columns(&["seed", "round", "evaluations", "best_so_far"]);
    let mut final_best = Vec::new();
    for seed in 0..args.repeats {
        let cfg = BoConfig {
            init_size: args.init_size,
            batch_size: args.batch_size,
            iterations: args.iterations,
            acquisition,
            seed,
        };
        let traj = run_bo_loop(pool_x.view(), pool_y.view(), &spec, &cfg)?;
        for (round, best) in traj.best_so_far.iter().enumerate() {
            let evals = args.init_size + round * args.batch_size;
            report.row(&[
                seed.to_string(),
                round.to_string(),
                evals.to_string(),
                fmt(*best),
            ]);
        }
        final_best.push(*traj.best_so_far.last().unwrap());
    }
    let mean_final = final_best.iter().sum::<f64>() / final_best.len() as f64;
    report.meta("mean_final_best", fmt(mean_final));
    report.write(&args.out)?;
    println!(
        "{} repeats complete; mean final best fitness {:.4}",
        args.repeats, mean_final
    );
    Ok(())
}
