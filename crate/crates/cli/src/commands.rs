use std::collections::HashMap;
use std::fs;
use std::hash::BuildHasher;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use mixclust_core::network::layout_force_directed;
use mixclust_core::ranking::Assignment;
use mixclust_core::synth::{sample_oracle_pairs, Missingness};
use mixclust_core::{
    build_graph, distance_matrix, export_graph, generate, load_dataset, rank_features, select_k,
    sparsity_report, write_dataset, Dataset, ExportFormat, FitConfig, FitResult, GeneratorSpec,
    Hyperparams, ModelDocument, OraclePairs, RankConfig, Schema, SelectionConfig, SparsityReport,
};
use serde::Serialize;

use crate::output::{write_manifest, OutputDir, RunRecord, MANIFEST};
use crate::settings::Settings;
use crate::{CliError, Common, FitArgs, ModelArgs, NetworkArgs, RankArgs, SelectArgs, SimulateArgs};

const DEFAULT_OUT: &str = "mixclust-out";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn at_least_one(flag: &str, v: usize) -> Result<usize, CliError> {
    if v == 0 {
        return Err(usage(format!("--{flag} must be at least 1")));
    }
    Ok(v)
}

fn prepare(common: &Common) -> Result<(Settings, OutputDir), CliError> {
    let settings = Settings::load(common.config.as_deref())?;
    if let Some(jobs) = settings.raw("jobs", common.jobs)? {
        at_least_one("jobs", jobs)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot start {jobs} workers: {e}")))?;
    }
    let out: PathBuf = settings
        .raw("out", common.out.clone())?
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((settings, OutputDir::new(&out)))
}

fn auto_seed() -> u64 {
    std::collections::hash_map::RandomState::new().hash_one(SystemTime::now())
}

/// Seed from flag or config; otherwise a fresh one, announced on stderr.
fn resolve_seed(s: &mut Settings, flag: Option<u64>) -> Result<(u64, &'static str), CliError> {
    let (seed, source) = match flag {
        Some(v) => (v, "flag"),
        None => match s.raw::<u64>("seed", None)? {
            Some(v) => (v, "config"),
            None => {
                let v = auto_seed();
                eprintln!("seed: {v} (none given; rerun with --seed {v} to reproduce)");
                (v, "auto")
            }
        },
    };
    s.record("seed", &seed);
    Ok((seed, source))
}

fn data_path(s: &mut Settings, common: &Common) -> Result<PathBuf, CliError> {
    let p: PathBuf = s.required("data", common.data.clone())?;
    Ok(p)
}

fn load(path: &Path) -> Result<Dataset, CliError> {
    load_dataset(path, &Schema::Infer).map_err(|e| match e {
        mixclust_core::Error::Io { .. } => CliError::Input(e.to_string()),
        other => CliError::Input(format!("{}: {other}", path.display())),
    })
}

fn fit_config(s: &mut Settings, k: usize, m: &ModelArgs, seed: u64) -> Result<FitConfig, CliError> {
    let restarts = at_least_one("restarts", s.value("restarts", m.restarts, 500)?)?;
    let max_iters = s.value("max-iters", m.max_iters, 1000)?;
    let tol = s.value("tol", m.tol, 1e-8)?;
    let a = s.value("a", m.a, 2.0)?;
    let b = s.value("b", m.b, 0.1)?;
    let alpha = s.value("alpha", m.alpha, 0.01)?;
    let hyperparams =
        Hyperparams::new(a, b, alpha).map_err(|e| usage(format!("--a/--b/--alpha: {e}")))?;
    let cfg = FitConfig {
        k,
        restarts,
        max_iters,
        rel_tol: tol,
        seed,
        hyperparams,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn maybe_standardize(d: Dataset, zscore: bool) -> Dataset {
    if zscore {
        d.standardized()
    } else {
        d
    }
}

fn cluster_sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// `id,cluster,p1..pK` (clusters numbered from 1) plus annotation columns.
fn assignments_csv(d: &Dataset, res: &FitResult) -> Result<Vec<u8>, CliError> {
    let k = res.params.k;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "cluster".to_string()];
    header.extend((1..=k).map(|i| format!("p{i}")));
    header.extend(d.annotation_keys().iter().map(|a| format!("meta:{a}")));
    let fail = |e: csv::Error| CliError::Compute(format!("cannot format assignments: {e}"));
    w.write_record(&header).map_err(fail)?;
    for n in 0..d.n_objects() {
        let mut row = vec![d.id(n).to_string(), (res.labels[n] + 1).to_string()];
        row.extend(res.resp.row(n).iter().map(|p| format!("{p:?}")));
        row.extend(d.annotations(n).iter().cloned());
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Compute(e.to_string()))
}

/// Reads cluster labels (1-based `cluster` column) for every object of `d`.
fn read_labels(path: &Path, d: &Dataset) -> Result<Vec<usize>, CliError> {
    let fail = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let headers = r.headers().map_err(|e| fail(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(format!("no `{name}` column")))
    };
    let (id_col, cluster_col) = (col("id")?, col("cluster")?);
    let mut by_id = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| fail(e.to_string()))?;
        let cluster: usize = rec
            .get(cluster_col)
            .and_then(|c| c.trim().parse().ok())
            .filter(|&c| c >= 1)
            .ok_or_else(|| fail(format!("row {}: cluster must be an integer >= 1", i + 2)))?;
        by_id.insert(rec.get(id_col).unwrap_or("").to_string(), cluster - 1);
    }
    d.ids()
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| fail(format!("no label for object `{id}`")))
        })
        .collect()
}

#[derive(Serialize)]
struct FitSummary<'a> {
    #[serde(rename = "K")]
    k: usize,
    seed: u64,
    objective: f64,
    restarts: usize,
    winning_restart: usize,
    iterations: usize,
    cluster_sizes: Vec<usize>,
    objective_trace: &'a [f64],
    per_restart_final: &'a [f64],
    sparsity: SparsityReport,
}

const FIT_OUTPUTS: &[&str] = &[MANIFEST, "model.json", "assignments.csv", "fit.json"];

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let (mut s, out) = prepare(&args.common)?;
    let data = data_path(&mut s, &args.common)?;
    let k = at_least_one("k", s.required("k", args.k)?)?;
    let zscore = s.switch("zscore", args.model.zscore)?;
    let (seed, source) = resolve_seed(&mut s, args.common.seed)?;
    let cfg = fit_config(&mut s, k, &args.model, seed)?;
    let d = maybe_standardize(load(&data)?, zscore);
    write_manifest(
        &out,
        &s,
        &RunRecord {
            command: "fit",
            seed: Some((seed, source)),
            inputs: vec![("data", &data)],
            outputs: FIT_OUTPUTS,
        },
    )?;

    let res = mixclust_core::fit(&d, &cfg)?;
    let sizes = cluster_sizes(&res.labels, k);
    let doc = ModelDocument::new(&d, &res.params, &cfg.hyperparams, seed, res.objective());
    out.write_json("model.json", &doc)?;
    out.write("assignments.csv", &assignments_csv(&d, &res)?)?;
    out.write_json(
        "fit.json",
        &FitSummary {
            k,
            seed,
            objective: res.objective(),
            restarts: cfg.restarts,
            winning_restart: res.winning_restart,
            iterations: res.iterations(),
            cluster_sizes: sizes.clone(),
            objective_trace: &res.objective_trace,
            per_restart_final: &res.per_restart_final,
            sparsity: sparsity_report(&d),
        },
    )?;
    println!(
        "K={k}  objective={:.6}  restart {} of {}  cluster sizes {:?}",
        res.objective(),
        res.winning_restart + 1,
        cfg.restarts,
        sizes
    );
    println!("wrote {}", out.path("model.json").display());
    Ok(())
}

fn parse_ks(list: &str) -> Result<Vec<usize>, CliError> {
    list.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| usage(format!("--ks: `{t}` is not a K >= 1")))
        })
        .collect()
}

const SELECT_OUTPUTS: &[&str] = &[MANIFEST, "selection.json", "selection.txt"];

pub fn select(args: SelectArgs) -> Result<(), CliError> {
    let (mut s, out) = prepare(&args.common)?;
    let data = data_path(&mut s, &args.common)?;
    let ks = match s.raw::<String>("ks", args.ks.clone())? {
        Some(list) => parse_ks(&list)?,
        None => {
            let kmin = at_least_one("kmin", s.raw("kmin", args.kmin)?.unwrap_or(2))?;
            let kmax = s.raw("kmax", args.kmax)?.unwrap_or(6);
            if kmax < kmin {
                return Err(usage(format!("--kmax {kmax} is below --kmin {kmin}")));
            }
            (kmin..=kmax).collect()
        }
    };
    s.record("ks", &ks);
    let oracle: PathBuf = s.required("oracle", args.oracle.clone())?;
    let folds = s.value("folds", args.folds, 5)?;
    let cv_restarts = at_least_one("cv-restarts", s.value("cv-restarts", args.cv_restarts, 50)?)?;
    let zscore = s.switch("zscore", args.model.zscore)?;
    let (seed, source) = resolve_seed(&mut s, args.common.seed)?;
    let fit_cfg = fit_config(&mut s, 1, &args.model, seed)?;
    let d = maybe_standardize(load(&data)?, zscore);
    let pairs = OraclePairs::load(&oracle)?;
    write_manifest(
        &out,
        &s,
        &RunRecord {
            command: "select",
            seed: Some((seed, source)),
            inputs: vec![("data", &data), ("oracle", &oracle)],
            outputs: SELECT_OUTPUTS,
        },
    )?;

    let cfg = SelectionConfig {
        fit: fit_cfg,
        folds,
        cv_restarts,
    };
    let report = select_k(&d, &ks, &pairs, &cfg)?;
    let table = report.to_table();
    out.write_json("selection.json", &report)?;
    out.write("selection.txt", table.as_bytes())?;
    print!("{table}");
    Ok(())
}

const RANK_OUTPUTS: &[&str] = &[MANIFEST, "rank.json", "rank.txt"];

pub fn rank(args: RankArgs) -> Result<(), CliError> {
    let (mut s, out) = prepare(&args.common)?;
    let data = data_path(&mut s, &args.common)?;
    let k = at_least_one("k", s.required("k", args.k)?)?;
    let folds = at_least_one("folds", s.value("folds", args.folds, 5)?)?;
    let bins = s.value("bins", args.bins, 5)?;
    if bins < 2 {
        return Err(usage("--bins must be at least 2"));
    }
    let assignment = match s.value("assign", args.assign.clone(), "training".to_string())?.as_str() {
        "training" => Assignment::Training,
        "all" => Assignment::AllObjects,
        other => return Err(usage(format!("--assign: expected `training` or `all`, got `{other}`"))),
    };
    let missing_as_category = s.switch("missing-as-category", args.missing_as_category)?;
    let zscore = s.switch("zscore", args.model.zscore)?;
    let (seed, source) = resolve_seed(&mut s, args.common.seed)?;
    let fit_cfg = fit_config(&mut s, k, &args.model, seed)?;
    let d = maybe_standardize(load(&data)?, zscore);
    write_manifest(
        &out,
        &s,
        &RunRecord {
            command: "rank",
            seed: Some((seed, source)),
            inputs: vec![("data", &data)],
            outputs: RANK_OUTPUTS,
        },
    )?;

    let cfg = RankConfig {
        fit: fit_cfg,
        folds,
        bins,
        assignment,
        missing_as_category,
    };
    let report = rank_features(&d, &cfg)?;
    let table = report.to_table();
    out.write_json("rank.json", &report)?;
    out.write("rank.txt", table.as_bytes())?;
    print!("{table}");
    Ok(())
}

pub fn network(args: NetworkArgs) -> Result<(), CliError> {
    let (mut s, out) = prepare(&args.common)?;
    let data = data_path(&mut s, &args.common)?;
    let threshold = s.value("threshold", args.threshold, mixclust_core::network::DEFAULT_THRESHOLD)?;
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(usage(format!("--threshold must be a positive number, got {threshold}")));
    }
    let formats_text = s.value("format", args.format.clone(), "json".to_string())?;
    let mut formats: Vec<ExportFormat> = Vec::new();
    for f in formats_text.split(',') {
        let f: ExportFormat = f.trim().parse().map_err(|e: mixclust_core::Error| usage(format!("--format: {e}")))?;
        if !formats.contains(&f) {
            formats.push(f);
        }
    }
    let iterations = s.value("iterations", args.iterations, 500)?;
    let min_shared = s.value("min-shared-features", args.min_shared_features, 0)?;
    let labels_path: Option<PathBuf> = s.optional("labels", args.labels.clone())?;
    let k = if labels_path.is_none() { s.optional("k", args.k)? } else { None };
    let zscore = s.switch("zscore", args.model.zscore)?;
    let (seed, source) = resolve_seed(&mut s, args.common.seed)?;
    let fit_cfg = match k {
        Some(k) => Some(fit_config(&mut s, at_least_one("k", k)?, &args.model, seed)?),
        None => None,
    };
    let d = load(&data)?;
    let labels = match &labels_path {
        Some(p) => Some(read_labels(p, &d)?),
        None => None,
    };
    let names: Vec<String> = formats.iter().map(|f| format!("graph.{}", f.extension())).collect();
    let mut outputs: Vec<&str> = vec![MANIFEST];
    outputs.extend(names.iter().map(String::as_str));
    let mut inputs = vec![("data", data.as_path())];
    if let Some(p) = &labels_path {
        inputs.push(("labels", p.as_path()));
    }
    write_manifest(
        &out,
        &s,
        &RunRecord {
            command: "network",
            seed: Some((seed, source)),
            inputs,
            outputs: &outputs,
        },
    )?;

    let labels = match (labels, fit_cfg) {
        (Some(l), _) => l,
        (None, Some(cfg)) => mixclust_core::fit(&maybe_standardize(d.clone(), zscore), &cfg)?.labels,
        (None, None) => vec![0; d.n_objects()],
    };
    let dm = distance_matrix(&d);
    let mut g = build_graph(&dm, d.ids(), &labels, threshold, min_shared)?;
    if !g.nodes.is_empty() {
        let coords = layout_force_directed(&g, iterations, seed);
        g.set_layout(&coords);
    }
    for (f, name) in formats.iter().zip(&names) {
        out.write(name, export_graph(&g, *f)?.as_bytes())?;
    }
    if g.nodes.is_empty() {
        println!(
            "all {} objects are isolated at threshold {threshold}: the graph is empty",
            d.n_objects()
        );
    } else {
        println!(
            "{} nodes, {} edges, {} isolated objects excluded, {} pairs with no shared feature",
            g.nodes.len(),
            g.edges.len(),
            g.isolated.len(),
            g.no_shared_feature_pairs
        );
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (mut s, out) = prepare(&args.common)?;
    let preset: Option<String> = s.optional("preset", args.preset.clone())?;
    let spec_path: Option<PathBuf> = s.optional("spec", args.spec.clone())?;
    let mut spec = match (&preset, &spec_path) {
        (Some(_), Some(_)) => return Err(usage("give either --preset or --spec, not both")),
        (Some(p), None) if p == "reference" || p == "paper-shape" => GeneratorSpec::reference(0),
        (Some(p), None) => return Err(usage(format!("--preset: unknown preset `{p}` (expected reference)"))),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(usage("--preset or --spec is required")),
    };
    let (seed, source) = match (args.common.seed, s.raw::<u64>("seed", None)?, &spec_path) {
        (None, None, Some(_)) => {
            s.record("seed", &spec.seed);
            (spec.seed, "spec")
        }
        _ => resolve_seed(&mut s, args.common.seed)?,
    };
    spec.seed = seed;
    if let Some(m) = s.optional::<String>("missingness", args.missingness.clone())? {
        spec.missingness = match m.as_str() {
            "mcar" => Missingness::CompletelyAtRandom,
            "fragment" => Missingness::Fragment,
            other => return Err(usage(format!("--missingness: expected `mcar` or `fragment`, got `{other}`"))),
        };
    }
    let n_pairs = s.value("oracle-pairs", args.oracle_pairs, 0usize)?;
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let mut outputs = vec![MANIFEST, "corpus.csv", "truth.json"];
    if n_pairs > 0 {
        outputs.push("pairs.csv");
    }
    let inputs = spec_path.iter().map(|p| ("spec", p.as_path())).collect();
    write_manifest(
        &out,
        &s,
        &RunRecord {
            command: "simulate",
            seed: Some((seed, source)),
            inputs,
            outputs: &outputs,
        },
    )?;

    let syn = generate(&spec)?;
    let mut csv = Vec::new();
    write_dataset(&syn.dataset, &mut csv)?;
    out.write("corpus.csv", &csv)?;
    out.write_json("truth.json", &syn.truth_document(&spec))?;
    if n_pairs > 0 {
        let pairs = sample_oracle_pairs(syn.dataset.ids(), &syn.labels, n_pairs, seed)?;
        out.write("pairs.csv", pairs.to_csv().as_bytes())?;
    }
    println!(
        "{} objects, {} numeric and {} categorical features, K={}, {:.1}% missing",
        syn.dataset.n_objects(),
        syn.dataset.n_numeric(),
        syn.dataset.n_categorical(),
        spec.k,
        100.0 * (1.0 - syn.dataset.observed_cells() as f64 / syn.dataset.total_cells() as f64)
    );
    println!("wrote {}", out.path("corpus.csv").display());
    Ok(())
}
