//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p mixclust-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mixclust_core::corpus::{Cell, DatasetParts};
use mixclust_core::em::{random_responsibilities, run_em, FitConfig};
use mixclust_core::network::{build_graph, distance_matrix, DistanceMatrix};
use mixclust_core::ranking::{entropy, mutual_information, RankConfig};
use mixclust_core::rng::stream_rng;
use mixclust_core::selection::{oracle_agreement, SelectionConfig};
use mixclust_core::synth::{generate, sample_oracle_pairs, GeneratorSpec, Synthetic, TrueParams};
use mixclust_core::{
    adjusted_rand_index, export_graph, fit, rank_features, read_dataset, select_k, Dataset,
    ExportFormat, FeatureSpec, Schema,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/support/mod.rs"]
mod support;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mixed_spec(seed: u64, k: usize, n: usize, separation: f64, sigma: f64) -> GeneratorSpec {
    GeneratorSpec {
        k,
        n,
        n_numeric: 4,
        category_sizes: vec![3; 4],
        truth: TrueParams::Random {
            separation,
            sigma,
            base: 1.0,
            weights: None,
        },
        missing_rate: 0.3,
        missingness: Default::default(),
        seed,
    }
}

fn em_monotonicity() -> Outcome {
    let mut traces = 0;
    let mut worst_drop: f64 = 0.0;
    for seed in 0..100u64 {
        let s = generate(&mixed_spec(seed, 3, 50, 1.5, 1.0)).unwrap();
        let k = 2 + (seed % 3) as usize;
        let cfg = FitConfig::new(k, seed);
        for restart in 0..3 {
            let mut rng = stream_rng(seed, restart);
            let init = random_responsibilities(50, k, &mut rng);
            let out = run_em(&s.dataset, &init, &cfg, &mut rng);
            for w in out.trace.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
            traces += 1;
        }
    }
    outcome(
        worst_drop <= 1e-9,
        format!("{traces} traces, largest decrease {worst_drop:.3e} (limit 1e-9)"),
    )
}

fn brute_force_likelihood() -> Outcome {
    let gap = support::likelihood_enumeration_gap(2024, 20);
    outcome(gap <= 1e-10, format!("20 instances, max gap {gap:.3e} (limit 1e-10)"))
}

fn m_step_optimality() -> Outcome {
    let (excess, _) = support::m_step_search_excess(2025, 20);
    outcome(
        excess <= 1e-6,
        format!("20 instances, best search improvement {excess:.3e} (limit 1e-6)"),
    )
}

fn recovery() -> Outcome {
    let start = Instant::now();
    let mut good = 0;
    let mut worst: f64 = 1.0;
    for seed in 0..20 {
        let s = generate(&GeneratorSpec::reference(seed)).unwrap();
        let res = fit(&s.dataset, &FitConfig::new(4, seed).with_restarts(50)).unwrap();
        let ari = adjusted_rand_index(&res.labels, &s.labels);
        worst = worst.min(ari);
        if ari >= 0.8 {
            good += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        good >= 18 && secs < 300.0,
        format!("ARI >= 0.8 in {good}/20 trials (need 18), min ARI {worst:.3}, {secs:.1} s"),
    )
}

fn model_selection() -> Outcome {
    let mut hits = 0;
    let mut chosen = Vec::new();
    let mut columns_ok = true;
    for seed in 0..20 {
        let s = generate(&GeneratorSpec::reference(seed)).unwrap();
        let pairs = sample_oracle_pairs(s.dataset.ids(), &s.labels, 40, seed).unwrap();
        let cfg = SelectionConfig::new(FitConfig::new(1, seed).with_restarts(50));
        let report = select_k(&s.dataset, &[2, 3, 4, 5, 6], &pairs, &cfg).unwrap();
        let table = report.to_table();
        columns_ok &= report.rows.len() == 5
            && ["K", "log_posterior", "heldout_ll/object", "oracle_agreement"]
                .iter()
                .all(|c| table.lines().next().unwrap_or("").contains(c));
        chosen.push(report.chosen_k);
        if report.chosen_k == 4 {
            hits += 1;
        }
    }
    outcome(
        hits >= 18 && columns_ok,
        format!("chosen K=4 in {hits}/20 trials (need 18), choices {chosen:?}, two-curve columns present: {columns_ok}"),
    )
}

fn oracle_metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = true;
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let pairs: Vec<(usize, usize)> = (0..rng.random_range(1..30))
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
            .filter(|(a, b)| a != b)
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let mut perm: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let a = oracle_agreement(&labels, &pairs).unwrap();
        ok &= a == oracle_agreement(&relabeled, &pairs).unwrap();
        ok &= oracle_agreement(&vec![3; n], &pairs).unwrap() == 1.0;
    }
    outcome(ok, "relabel invariance exact and all-one-cluster = 1.0 on 200 random cases")
}

/// Adds a categorical feature equal to the true cluster of every object.
fn with_planted_feature(s: &Synthetic) -> Dataset {
    let d = &s.dataset;
    let k = s.params.k;
    let mut features = d.features().to_vec();
    features.push(FeatureSpec::categorical(
        "planted",
        (0..k).map(|i| format!("z{i}")).collect::<Vec<_>>(),
    ));
    let rows = (0..d.n_objects())
        .map(|n| {
            let mut row: Vec<Cell> = Vec::new();
            let (mut r, mut c) = (0, 0);
            for f in d.features() {
                if f.kind == mixclust_core::FeatureKind::Numeric {
                    row.push(d.numeric(n, r).map_or(Cell::Missing, Cell::Numeric));
                    r += 1;
                } else {
                    row.push(d.categorical(n, c).map_or(Cell::Missing, Cell::Category));
                    c += 1;
                }
            }
            row.push(Cell::Category(s.labels[n]));
            row
        })
        .collect();
    Dataset::new(DatasetParts {
        ids: d.ids().to_vec(),
        features,
        rows,
        ..Default::default()
    })
    .unwrap()
}

fn mi_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut identities = true;
    for _ in 0..200 {
        let n = rng.random_range(1..80);
        let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let f: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let some = |v: &[usize]| v.iter().map(|&x| Some(x)).collect::<Vec<_>>();
        let zz = mutual_information(&z, &some(&z)).unwrap();
        identities &= (zz - entropy(&z)).abs() <= 1e-12;
        identities &= mutual_information(&z, &vec![Some(2); n]).unwrap() == 0.0;
        let zf = mutual_information(&z, &some(&f)).unwrap();
        let fz = mutual_information(&f, &some(&z)).unwrap();
        identities &= (zf - fz).abs() <= 1e-12;
    }

    let mut top = 0;
    for seed in 0..20 {
        let s = generate(&mixed_spec(seed, 3, 120, 3.0, 1.0)).unwrap();
        let d = with_planted_feature(&s);
        let cfg = RankConfig::new(FitConfig::new(3, seed).with_restarts(20));
        let report = rank_features(&d, &cfg).unwrap();
        let planted = report.features.iter().find(|f| f.name == "planted").unwrap();
        if planted.average_rank == Some(1.0) {
            top += 1;
        }
    }
    outcome(
        identities && top >= 19,
        format!("MI identities hold: {identities}; planted feature average rank 1 in {top}/20 trials (need 19)"),
    )
}

fn distance_and_graph() -> Outcome {
    let csv = "id,x1:num,x2:num,x3:num,y1:cat,y2:cat,y3:cat,y4:cat\n\
               i,1.0,,0.5,a,b,,c\n\
               j,0.2,3.0,,a,c,b,\n";
    let d = read_dataset(csv.as_bytes(), &Schema::Infer).unwrap();
    let mut ok = distance_matrix(&d).get(0, 1) == 0.690_000_000_000_000_2;
    let d = read_dataset("id,x:num,e:cat\na,1.5,u\nb,1.5,v\n".as_bytes(), &Schema::Infer).unwrap();
    ok &= distance_matrix(&d).get(0, 1) == 0.05;
    let ids: Vec<String> = ["a", "b"].map(String::from).to_vec();
    let at_threshold = DistanceMatrix::from_values(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
    ok &= build_graph(&at_threshold, &ids, &[0, 0], 0.5, 0).unwrap().edges.is_empty();
    let hand = ok;

    let mut symmetric = true;
    for seed in 0..10 {
        let s = generate(&mixed_spec(seed, 3, 40, 2.0, 1.0)).unwrap();
        let dm = distance_matrix(&s.dataset);
        for i in 0..dm.len() {
            symmetric &= dm.get(i, i) == 0.0;
            for j in 0..dm.len() {
                symmetric &= dm.get(i, j) == dm.get(j, i) && dm.get(i, j) >= 0.0;
            }
        }
    }

    let s = generate(&GeneratorSpec::reference(1)).unwrap();
    let dm = distance_matrix(&s.dataset);
    let g = build_graph(&dm, s.dataset.ids(), &s.labels, 0.5, 0).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&export_graph(&g, ExportFormat::Json).unwrap()).unwrap();
    let reported = json["isolated_count"].as_u64().unwrap() as usize;
    let recount = (0..dm.len())
        .filter(|&i| (0..dm.len()).all(|j| i == j || dm.get(i, j) >= 0.5))
        .count();
    let nodes = json["nodes"].as_array().unwrap().len();
    let isolation = reported == recount && nodes + reported == s.dataset.n_objects();
    outcome(
        hand && symmetric && isolation,
        format!(
            "hand examples: {hand}; symmetry/zero diagonal on 10 corpora: {symmetric}; isolated reported {reported}, recount {recount}, nodes {nodes}"
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mixclust"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let (sim, fit_out) = (p("sim"), p("fit"));
    let corpus = format!("{sim}/corpus.csv");
    let pairs = format!("{sim}/pairs.csv");
    let labels = format!("{fit_out}/assignments.csv");
    let setup = [
        vec!["simulate", "--preset", "paper-shape", "--seed", "11", "--oracle-pairs", "40", "--out", &sim],
        vec!["fit", "--data", &corpus, "--k", "4", "--restarts", "20", "--seed", "5", "--out", &fit_out],
    ];
    for args in &setup {
        if let Err(e) = run_cli(args) {
            return outcome(false, e);
        }
    }
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--preset", "paper-shape", "--seed", "11", "--oracle-pairs", "40"]),
        ("fit", vec!["fit", "--data", &corpus, "--k", "4", "--restarts", "20", "--seed", "5"]),
        (
            "select",
            vec!["select", "--data", &corpus, "--oracle", &pairs, "--kmin", "2", "--kmax", "5",
                 "--restarts", "10", "--cv-restarts", "5", "--seed", "5"],
        ),
        ("rank", vec!["rank", "--data", &corpus, "--k", "4", "--restarts", "10", "--seed", "5"]),
        (
            "network",
            vec!["network", "--data", &corpus, "--labels", &labels, "--format", "json,dot,svg",
                 "--iterations", "200", "--seed", "5"],
        ),
    ];
    let mut checked = Vec::new();
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for (i, jobs) in ["1", "8", "1"].iter().enumerate() {
            let out = p(&format!("{name}-{i}"));
            let mut full = args.clone();
            full.extend(["--jobs", jobs, "--out", &out]);
            if let Err(e) = run_cli(&full) {
                return outcome(false, e);
            }
            runs.push(dir_files(Path::new(&out)));
        }
        if runs[0] != runs[1] || runs[0] != runs[2] {
            return outcome(false, format!("`{name}` outputs differ between runs"));
        }
        checked.push(format!("{name} ({} files)", runs[0].len()));
    }
    outcome(true, format!("byte-identical at --jobs 1, 8, 1: {}", checked.join(", ")))
}

fn missing_data_neutrality() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut labels_ok = true;
    for seed in 0..5u64 {
        let s = generate(&GeneratorSpec::reference(100 + seed)).unwrap();
        let d = &s.dataset;
        let cfg = FitConfig::new(4, seed).with_restarts(20);
        let base = fit(d, &cfg).unwrap();

        let mut masked = d.clone();
        for n in 0..d.n_objects() {
            for r in 0..d.n_numeric() {
                if d.numeric(n, r).is_none() {
                    masked = masked.with_numeric_masked(n, r);
                }
            }
            for c in 0..d.n_categorical() {
                if d.categorical(n, c).is_none() {
                    masked = masked.with_categorical_masked(n, c);
                }
            }
        }
        let m = fit(&masked, &cfg).unwrap();
        worst = worst.max((m.objective() - base.objective()).abs());
        labels_ok &= m.labels == base.labels;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..d.n_objects()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let p = fit(&d.subset(&perm), &cfg).unwrap();
        worst = worst.max((p.objective() - base.objective()).abs());
        labels_ok &= perm.iter().enumerate().all(|(i, &o)| p.labels[i] == base.labels[o]);
    }
    outcome(
        worst < 1e-9 && labels_ok,
        format!("5 corpora, max objective change {worst:.3e} (limit 1e-9), labels follow the permutation: {labels_ok}"),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 10] = [
        ("EM monotonicity", em_monotonicity),
        ("brute-force likelihood equivalence", brute_force_likelihood),
        ("M-step optimality", m_step_optimality),
        ("recovery on the reference preset", recovery),
        ("model selection", model_selection),
        ("oracle metric properties", oracle_metric_properties),
        ("mutual information suite", mi_suite),
        ("distance and graph", distance_and_graph),
        ("CLI determinism across --jobs", determinism),
        ("missing-data neutrality", missing_data_neutrality),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.1} s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
