//! Choosing the number of clusters: k-fold held-out likelihood and agreement
//! with hand-curated must-link pairs (the "oracle").

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::em::{fit, FitConfig};
use crate::error::{Error, Result};
use crate::model::{log_likelihood, object_log_likelihoods, Hyperparams};
use crate::rng::{derive_seed, stream_rng};

/// Tag mixed into the seed for fold assignment.
const FOLD_TAG: u64 = 0x666f_6c64;

/// Must-link pairs of object ids. Self-pairs are rejected and pairs are
/// deduplicated regardless of order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OraclePairs {
    pairs: Vec<(String, String)>,
}

impl OraclePairs {
    pub fn new<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b) in pairs {
            let (a, b) = (a.into(), b.into());
            if a == b {
                return Err(Error::Schema(format!("oracle pair ({a}, {b}) links an object to itself")));
            }
            let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            if seen.insert(key) {
                out.push((a, b));
            }
        }
        Ok(Self { pairs: out })
    }

    /// Reads an `id_a,id_b` CSV. A first line of exactly `id_a,id_b` is taken
    /// as a header.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            if rec.len() != 2 {
                return Err(Error::Parse {
                    row,
                    message: format!("expected 2 cells, found {}", rec.len()),
                });
            }
            let (a, b) = (rec[0].trim(), rec[1].trim());
            if row == 1 && a == "id_a" && b == "id_b" {
                continue;
            }
            pairs.push((a.to_string(), b.to_string()));
        }
        Self::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    /// Object indices of every pair; unknown ids are an error.
    pub fn resolve(&self, d: &Dataset) -> Result<Vec<(usize, usize)>> {
        let index = d.id_index();
        self.pairs
            .iter()
            .map(|(a, b)| {
                let find = |id: &str| {
                    index.get(id).copied().ok_or_else(|| {
                        Error::Schema(format!("oracle id `{id}` is not in the dataset"))
                    })
                };
                Ok((find(a)?, find(b)?))
            })
            .collect()
    }

    /// Writes the pairs as `id_a,id_b` CSV with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id_a,id_b\n");
        for (a, b) in &self.pairs {
            let _ = writeln!(out, "{a},{b}");
        }
        out
    }
}

/// Fraction of must-link pairs whose objects share a label.
pub fn oracle_agreement(labels: &[usize], pairs: &[(usize, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Oracle("no must-link pairs".into()));
    }
    let hits = pairs.iter().filter(|&&(a, b)| labels[a] == labels[b]).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Random partition of 0..n into `folds` disjoint folds whose sizes differ by
/// at most one. Each fold is sorted.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("folds must be >= 2, got {folds}")));
    }
    if folds > n {
        return Err(Error::Config(format!("{folds} folds exceed {n} objects")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 0));
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Held-out score of one (K, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    #[serde(rename = "K")]
    pub k: usize,
    pub fold: usize,
    /// Sum over held-out objects of log sum_k pi_k p(object | k). Prior terms
    /// are excluded.
    pub heldout_log_likelihood: f64,
    pub n_heldout: usize,
}

fn fold_seed(seed: u64, k: usize, fold: usize) -> u64 {
    derive_seed(seed, &[k as u64, fold as u64 + 1])
}

/// Fits every K on the complement of every fold (with `cfg.restarts`
/// restarts) and scores the held-out objects. Results are ordered by K, then
/// fold.
pub fn cross_validate(
    d: &Dataset,
    ks: &[usize],
    folds: &[Vec<usize>],
    cfg: &FitConfig,
) -> Result<Vec<CvScore>> {
    let jobs: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..folds.len()).map(move |f| (k, f)))
        .collect();
    jobs.par_iter()
        .map(|&(k, f)| {
            let held: HashSet<usize> = folds[f].iter().copied().collect();
            let train_idx: Vec<usize> = (0..d.n_objects()).filter(|i| !held.contains(i)).collect();
            let train = d.subset(&train_idx);
            let test = d.subset(&folds[f]);
            let fold_cfg = FitConfig {
                k,
                seed: fold_seed(cfg.seed, k, f),
                ..cfg.clone()
            };
            let res = fit(&train, &fold_cfg).map_err(|e| Error::Fold {
                k,
                fold: f,
                source: Box::new(e),
            })?;
            Ok(CvScore {
                k,
                fold: f,
                heldout_log_likelihood: object_log_likelihoods(&test, &res.params).iter().sum(),
                n_heldout: test.n_objects(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Full-data fit settings; `fit.k` is ignored.
    pub fit: FitConfig,
    pub folds: usize,
    /// Restarts per (K, fold) cross-validation fit.
    pub cv_restarts: usize,
}

impl SelectionConfig {
    pub fn new(fit: FitConfig) -> Self {
        Self {
            fit,
            folds: 5,
            cv_restarts: 50,
        }
    }
}

/// One K row of the selection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    #[serde(rename = "K")]
    pub k: usize,
    /// Final regularized objective of the full-data fit.
    pub log_posterior: f64,
    /// Likelihood part of `log_posterior`.
    pub log_likelihood: f64,
    pub heldout_per_fold: Vec<f64>,
    /// Total held-out log-likelihood divided by the number of objects.
    pub heldout_per_object: f64,
    pub oracle_agreement: f64,
    pub cluster_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    #[serde(rename = "chosen_K")]
    pub chosen_k: usize,
    /// Whether mean held-out likelihood peaks strictly inside the K range.
    pub heldout_interior_peak: bool,
    /// Object ids of every fold.
    pub folds: Vec<Vec<String>>,
    pub seed: u64,
    pub restarts: usize,
    pub cv_restarts: usize,
    pub n_oracle_pairs: usize,
    pub hyperparams: Hyperparams,
}

impl SelectionReport {
    /// Fixed-width table: K, log posterior, held-out log-likelihood per
    /// object, oracle agreement.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:>16}  {:>18}  {:>16}",
            "K", "log_posterior", "heldout_ll/object", "oracle_agreement"
        );
        for row in &self.rows {
            let mark = if row.k == self.chosen_k { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:>4}  {:>16.4}  {:>18.6}  {:>16.4}{mark}",
                row.k, row.log_posterior, row.heldout_per_object, row.oracle_agreement
            );
        }
        let _ = writeln!(out, "chosen K = {}", self.chosen_k);
        if !self.heldout_interior_peak {
            let _ = writeln!(
                out,
                "note: held-out likelihood shows no interior peak over the K range"
            );
        }
        out
    }
}

/// Index of the preferred row: highest agreement, then highest log
/// posterior, then smallest K. Rows must be sorted by K.
pub fn choose_k(rows: &[SelectionRow]) -> usize {
    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        let better = row.oracle_agreement > b.oracle_agreement
            || (row.oracle_agreement == b.oracle_agreement && row.log_posterior > b.log_posterior);
        if better {
            best = i;
        }
    }
    rows[best].k
}

fn interior_peak(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best > 0 && best < values.len() - 1
}

/// Runs full-data fits and cross-validation for every K and picks one.
pub fn select_k(
    d: &Dataset,
    ks: &[usize],
    pairs: &OraclePairs,
    cfg: &SelectionConfig,
) -> Result<SelectionReport> {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::Config("no K values to compare".into()));
    }
    let resolved = pairs.resolve(d)?;
    if resolved.is_empty() {
        return Err(Error::Oracle("no must-link pairs".into()));
    }
    let folds = kfold_split(d.n_objects(), cfg.folds, derive_seed(cfg.fit.seed, &[FOLD_TAG]))?;
    let cv_cfg = FitConfig {
        restarts: cfg.cv_restarts,
        ..cfg.fit.clone()
    };
    let cv = cross_validate(d, &ks, &folds, &cv_cfg)?;

    let rows: Vec<SelectionRow> = ks
        .par_iter()
        .map(|&k| {
            let res = fit(d, &FitConfig { k, ..cfg.fit.clone() })?;
            let heldout_per_fold: Vec<f64> = cv
                .iter()
                .filter(|s| s.k == k)
                .map(|s| s.heldout_log_likelihood)
                .collect();
            let mut cluster_sizes = vec![0; k];
            for &l in &res.labels {
                cluster_sizes[l] += 1;
            }
            Ok(SelectionRow {
                k,
                log_posterior: res.objective(),
                log_likelihood: log_likelihood(d, &res.params),
                heldout_per_object: heldout_per_fold.iter().sum::<f64>() / d.n_objects() as f64,
                heldout_per_fold,
                oracle_agreement: oracle_agreement(&res.labels, &resolved)?,
                cluster_sizes,
            })
        })
        .collect::<Result<_>>()?;

    let heldout: Vec<f64> = rows.iter().map(|r| r.heldout_per_object).collect();
    Ok(SelectionReport {
        chosen_k: choose_k(&rows),
        heldout_interior_peak: interior_peak(&heldout),
        rows,
        folds: folds
            .iter()
            .map(|f| f.iter().map(|&i| d.id(i).to_string()).collect())
            .collect(),
        seed: cfg.fit.seed,
        restarts: cfg.fit.restarts,
        cv_restarts: cfg.cv_restarts,
        n_oracle_pairs: resolved.len(),
        hyperparams: cfg.fit.hyperparams.clone(),
    })
}
