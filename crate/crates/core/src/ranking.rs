//! Feature predictiveness: mutual information between hard cluster labels
//! and each feature, ranked per fold and averaged with a harmonic mean.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{sparsity_report, Dataset, FeatureKind};
use crate::em::{e_step, fit, hard_assign, FitConfig};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::selection::kfold_split;

const RANK_FOLD_TAG: u64 = 0x7261_6e6b;
/// MI values closer than this share a rank.
pub const MI_TIE_TOL: f64 = 1e-12;

/// Equal-frequency binning of the observed values. A value's bin is
/// floor(bins * below / m), where `below` counts observed values strictly
/// smaller and `m` is the number observed, so equal values always share a
/// bin. Missing stays missing.
pub fn bin_numeric(values: &[Option<f64>], bins: usize) -> Vec<Option<usize>> {
    assert!(bins >= 2, "bins must be >= 2");
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                let below = sorted.partition_point(|&s| s < x);
                below * bins / m
            })
        })
        .collect()
}

/// Empirical entropy in nats.
pub fn entropy(values: &[usize]) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Empirical mutual information (nats) between labels and a feature, over
/// the objects where the feature is observed. `None` when nothing is
/// observed.
pub fn mutual_information(labels: &[usize], feature: &[Option<usize>]) -> Option<f64> {
    assert_eq!(labels.len(), feature.len());
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut by_label: HashMap<usize, usize> = HashMap::new();
    let mut by_value: HashMap<usize, usize> = HashMap::new();
    let mut n = 0usize;
    for (&z, f) in labels.iter().zip(feature) {
        if let Some(f) = *f {
            *joint.entry((z, f)).or_default() += 1;
            *by_label.entry(z).or_default() += 1;
            *by_value.entry(f).or_default() += 1;
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let mut keys: Vec<_> = joint.keys().copied().collect();
    keys.sort_unstable();
    let mi: f64 = keys
        .iter()
        .map(|&(z, f)| {
            let c = joint[&(z, f)] as f64;
            let expected = by_label[&z] as f64 * by_value[&f] as f64;
            c / n * (c * n / expected).ln()
        })
        .sum();
    Some(mi.max(0.0))
}

/// Competition ranks by descending score: a feature's rank is one plus the
/// number of features with a strictly larger score, so ties share the lower
/// rank. Undefined scores get no rank.
pub fn rank_by_score(scores: &[Option<f64>]) -> Vec<Option<usize>> {
    scores
        .iter()
        .map(|s| {
            s.map(|s| {
                1 + scores
                    .iter()
                    .flatten()
                    .filter(|&&o| o > s + MI_TIE_TOL)
                    .count()
            })
        })
        .collect()
}

/// Harmonic mean of the defined ranks; `None` if there are none.
pub fn harmonic_mean_rank(ranks: &[Option<usize>]) -> Option<f64> {
    let defined: Vec<f64> = ranks.iter().flatten().map(|&r| r as f64).collect();
    if defined.is_empty() {
        return None;
    }
    Some(defined.len() as f64 / defined.iter().map(|r| 1.0 / r).sum::<f64>())
}

/// Which objects' labels enter the MI of a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assignment {
    /// The training objects of the fold, labeled by the fold's fit.
    #[default]
    Training,
    /// Every object, labeled by the fold's fit.
    AllObjects,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    /// Per-fold fit settings, including K.
    pub fit: FitConfig,
    /// 1 fits once on all objects.
    pub folds: usize,
    pub bins: usize,
    pub assignment: Assignment,
    /// Treat a missing cell as one more category instead of dropping it.
    pub missing_as_category: bool,
}

impl RankConfig {
    pub fn new(fit: FitConfig) -> Self {
        Self {
            fit,
            folds: 5,
            bins: 5,
            assignment: Assignment::Training,
            missing_as_category: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRank {
    pub name: String,
    pub kind: FeatureKind,
    pub sparsity: f64,
    pub mi_per_fold: Vec<Option<f64>>,
    pub rank_per_fold: Vec<Option<usize>>,
    /// Harmonic mean of the per-fold ranks.
    pub average_rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Sorted by average rank; unrankable features last.
    pub features: Vec<FeatureRank>,
    pub units: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub folds: usize,
    pub bins: usize,
    pub binning: String,
    pub assignment: Assignment,
    pub missing_as_category: bool,
    pub seed: u64,
}

impl RankReport {
    /// Columns: feature, average rank, data type, sparsity.
    pub fn to_table(&self) -> String {
        let width = self
            .features
            .iter()
            .map(|f| f.name.len())
            .max()
            .unwrap_or(0)
            .max("feature".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>12}  {:<11}  {:>8}",
            "feature", "average_rank", "data_type", "sparsity"
        );
        for f in &self.features {
            let rank = f
                .average_rank
                .map_or_else(|| "-".to_string(), |r| format!("{r:.3}"));
            let _ = writeln!(
                out,
                "{:<width$}  {:>12}  {:<11}  {:>8.2}",
                f.name,
                rank,
                f.kind.as_str(),
                f.sparsity
            );
        }
        let _ = writeln!(out, "# mutual information in {}; {} bins; {} folds", self.units, self.bins, self.folds);
        out
    }
}

/// Per-feature MI over the objects `rows` with the given labels.
fn fold_scores(
    d: &Dataset,
    rows: &[usize],
    labels: &[usize],
    bins: usize,
    missing_as_category: bool,
) -> Vec<Option<f64>> {
    let mut numeric_slot = 0;
    let mut categorical_slot = 0;
    d.features()
        .iter()
        .map(|f| {
            let (mut column, extra) = match f.kind {
                FeatureKind::Numeric => {
                    let r = numeric_slot;
                    numeric_slot += 1;
                    let raw: Vec<Option<f64>> = rows.iter().map(|&n| d.numeric(n, r)).collect();
                    (bin_numeric(&raw, bins), bins)
                }
                FeatureKind::Categorical => {
                    let c = categorical_slot;
                    categorical_slot += 1;
                    let col = rows.iter().map(|&n| d.categorical(n, c)).collect();
                    (col, d.category_count(c))
                }
            };
            if missing_as_category {
                for v in &mut column {
                    v.get_or_insert(extra);
                }
            }
            mutual_information(labels, &column)
        })
        .collect()
}

/// Fits on each fold's training split, labels objects, and ranks every
/// feature by mutual information with the labels.
pub fn rank_features(d: &Dataset, cfg: &RankConfig) -> Result<RankReport> {
    if cfg.bins < 2 {
        return Err(Error::Config(format!("bins must be >= 2, got {}", cfg.bins)));
    }
    if cfg.folds == 0 {
        return Err(Error::Config("folds must be >= 1".into()));
    }
    let all: Vec<usize> = (0..d.n_objects()).collect();
    let splits: Vec<Vec<usize>> = if cfg.folds == 1 {
        vec![all.clone()]
    } else {
        let folds = kfold_split(
            d.n_objects(),
            cfg.folds,
            derive_seed(cfg.fit.seed, &[RANK_FOLD_TAG]),
        )?;
        folds
            .iter()
            .map(|held| all.iter().copied().filter(|i| held.binary_search(i).is_err()).collect())
            .collect()
    };

    let f_count = d.features().len();
    let mut mi = vec![Vec::with_capacity(splits.len()); f_count];
    let mut ranks = vec![Vec::with_capacity(splits.len()); f_count];
    for (fold, train_idx) in splits.iter().enumerate() {
        let train = d.subset(train_idx);
        let fold_cfg = FitConfig {
            seed: derive_seed(cfg.fit.seed, &[RANK_FOLD_TAG, fold as u64]),
            ..cfg.fit.clone()
        };
        let res = fit(&train, &fold_cfg).map_err(|e| Error::Fold {
            k: cfg.fit.k,
            fold,
            source: Box::new(e),
        })?;
        let (rows, labels) = match cfg.assignment {
            Assignment::Training => (train_idx.clone(), res.labels.clone()),
            Assignment::AllObjects => {
                let (resp, _) = e_step(d, &res.params);
                (all.clone(), hard_assign(&resp))
            }
        };
        let scores = fold_scores(d, &rows, &labels, cfg.bins, cfg.missing_as_category);
        let fold_ranks = rank_by_score(&scores);
        for f in 0..f_count {
            mi[f].push(scores[f]);
            ranks[f].push(fold_ranks[f]);
        }
    }

    let sparsity = sparsity_report(d);
    let mut features: Vec<FeatureRank> = d
        .features()
        .iter()
        .enumerate()
        .map(|(i, spec)| FeatureRank {
            name: spec.name.clone(),
            kind: spec.kind,
            sparsity: sparsity.per_feature[i].1,
            average_rank: harmonic_mean_rank(&ranks[i]),
            mi_per_fold: std::mem::take(&mut mi[i]),
            rank_per_fold: std::mem::take(&mut ranks[i]),
        })
        .collect();
    features.sort_by(|a, b| match (a.average_rank, b.average_rank) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    Ok(RankReport {
        features,
        units: "nats".into(),
        k: cfg.fit.k,
        folds: cfg.folds,
        bins: cfg.bins,
        binning: "equal-frequency".into(),
        assignment: cfg.assignment,
        missing_as_category: cfg.missing_as_category,
        seed: cfg.fit.seed,
    })
}
