//! Synthetic corpora sampled from the independent-feature mixture model,
//! used as ground truth for recovery, selection and ranking checks.

use std::collections::HashSet;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Cell, Dataset, DatasetParts, FeatureSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::stream_rng;
use crate::selection::OraclePairs;

const PARAM_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;
const PAIR_STREAM: u64 = 3;

/// Where the generating parameters come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueParams {
    Given { params: ModelParams },
    /// Every numeric feature places the K cluster means on a grid with
    /// spacing `separation * sigma` (in a random order per feature, offset by
    /// `base + U(0, 1)`), all with standard deviation `sigma`. Category
    /// probabilities are Dirichlet(1) draws. `weights` default to uniform and
    /// are normalized.
    Random {
        separation: f64,
        sigma: f64,
        #[serde(default = "default_base")]
        base: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

fn default_base() -> f64 {
    1.0
}

/// How cells go missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Missingness {
    /// Every cell independently with probability `missing_rate`.
    #[default]
    CompletelyAtRandom,
    /// Each object loses one contiguous run of round(missing_rate * F)
    /// features at a random (wrapping) offset.
    Fragment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Number of numeric features R.
    #[serde(rename = "R")]
    pub n_numeric: usize,
    /// V_c per categorical feature; C is its length.
    pub category_sizes: Vec<usize>,
    pub truth: TrueParams,
    pub missing_rate: f64,
    #[serde(default)]
    pub missingness: Missingness,
    pub seed: u64,
}

impl GeneratorSpec {
    /// 162 objects, 12 numeric and 21 categorical features, 37% missing,
    /// four clusters with masses proportional to 67/57/19/19 and means five
    /// standard deviations apart per feature.
    pub fn reference(seed: u64) -> Self {
        Self {
            k: 4,
            n: 162,
            n_numeric: 12,
            category_sizes: (0..21).map(|c| [2, 3, 4][c % 3]).collect(),
            truth: TrueParams::Random {
                separation: 5.0,
                sigma: 0.3,
                base: 1.0,
                weights: Some(vec![67.0, 57.0, 19.0, 19.0]),
            },
            missing_rate: 0.37,
            missingness: Missingness::CompletelyAtRandom,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must lie in [0, 1)".into()));
        }
        if self.category_sizes.iter().any(|&v| v < 2) {
            return Err(Error::Config("category sizes must be >= 2".into()));
        }
        match &self.truth {
            TrueParams::Given { params } => {
                if params.k != self.k
                    || params.n_numeric() != self.n_numeric
                    || params.n_categorical() != self.category_sizes.len()
                {
                    return Err(Error::Config("given parameters do not match the generator shape".into()));
                }
                params.validate(None)?;
                for (c, &v) in self.category_sizes.iter().enumerate() {
                    if params.rho.iter().any(|feats| feats[c].len() != v) {
                        return Err(Error::Config(format!("rho for feature {c} needs {v} entries")));
                    }
                }
            }
            TrueParams::Random { separation, sigma, weights, .. } => {
                if !(*sigma > 0.0 && sigma.is_finite()) || !(*separation >= 0.0) {
                    return Err(Error::Config("sigma must be > 0 and separation >= 0".into()));
                }
                if let Some(w) = weights {
                    if w.len() != self.k || w.iter().any(|&x| !(x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                        return Err(Error::Config("weights must be K non-negative values with a positive sum".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub labels: Vec<usize>,
    pub params: ModelParams,
}

/// JSON sidecar with the true labels and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub format: String,
    pub version: u32,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub params: ModelParams,
    pub spec: GeneratorSpec,
}

impl Synthetic {
    pub fn truth_document(&self, spec: &GeneratorSpec) -> TruthDocument {
        TruthDocument {
            format: "mixclust.truth".into(),
            version: 1,
            ids: self.dataset.ids().to_vec(),
            labels: self.labels.clone(),
            params: self.params.clone(),
            spec: spec.clone(),
        }
    }
}

fn dirichlet_one<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / s).collect()
}

fn categorical_draw<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last category with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn random_params(spec: &GeneratorSpec, separation: f64, sigma: f64, base: f64, weights: &Option<Vec<f64>>) -> ModelParams {
    let mut rng = stream_rng(spec.seed, PARAM_STREAM);
    let k = spec.k;
    let pi = match weights {
        Some(w) => {
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        }
        None => vec![1.0 / k as f64; k],
    };
    let mut mu = vec![vec![0.0; spec.n_numeric]; k];
    for r in 0..spec.n_numeric {
        let mut slots: Vec<usize> = (0..k).collect();
        slots.shuffle(&mut rng);
        let offset = base + rng.random::<f64>();
        for kk in 0..k {
            mu[kk][r] = offset + separation * sigma * slots[kk] as f64;
        }
    }
    let lambda = vec![vec![1.0 / (sigma * sigma); spec.n_numeric]; k];
    let rho = (0..k)
        .map(|_| spec.category_sizes.iter().map(|&v| dirichlet_one(v, &mut rng)).collect())
        .collect();
    ModelParams { k, pi, mu, lambda, rho }
}

/// Samples a corpus: z ~ Categorical(pi), numeric cells ~ Normal(mu,
/// 1/lambda), categorical cells ~ Categorical(rho), then masks cells.
pub fn generate(spec: &GeneratorSpec) -> Result<Synthetic> {
    spec.validate()?;
    let params = match &spec.truth {
        TrueParams::Given { params } => params.clone(),
        TrueParams::Random { separation, sigma, base, weights } => {
            random_params(spec, *separation, *sigma, *base, weights)
        }
    };
    let mut rng = stream_rng(spec.seed, DATA_STREAM);
    let r_count = spec.n_numeric;
    let f_count = r_count + spec.category_sizes.len();
    let width = spec.n.max(1).to_string().len();

    let mut ids = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    let mut rows = Vec::with_capacity(spec.n);
    for n in 0..spec.n {
        let z = categorical_draw(&params.pi, &mut rng);
        let mut row = Vec::with_capacity(f_count);
        for r in 0..r_count {
            let sd = params.lambda[z][r].sqrt().recip();
            let normal = Normal::new(params.mu[z][r], sd).expect("finite sd");
            row.push(Cell::Numeric(normal.sample(&mut rng)));
        }
        for c in 0..spec.category_sizes.len() {
            row.push(Cell::Category(categorical_draw(&params.rho[z][c], &mut rng)));
        }
        match spec.missingness {
            Missingness::CompletelyAtRandom => {
                for cell in row.iter_mut() {
                    if rng.random::<f64>() < spec.missing_rate {
                        *cell = Cell::Missing;
                    }
                }
            }
            Missingness::Fragment => {
                let run = (spec.missing_rate * f_count as f64).round() as usize;
                if f_count > 0 {
                    let start = rng.random_range(0..f_count);
                    for j in 0..run {
                        row[(start + j) % f_count] = Cell::Missing;
                    }
                }
            }
        }
        ids.push(format!("obj{:0width$}", n + 1));
        labels.push(z);
        rows.push(row);
    }

    let num_width = r_count.max(1).to_string().len().max(2);
    let cat_width = spec.category_sizes.len().max(1).to_string().len().max(2);
    let mut features: Vec<FeatureSpec> = (0..r_count)
        .map(|r| FeatureSpec::numeric(format!("num{:0num_width$}", r + 1)))
        .collect();
    features.extend(spec.category_sizes.iter().enumerate().map(|(c, &v)| {
        FeatureSpec::categorical(
            format!("cat{:0cat_width$}", c + 1),
            (0..v).map(|i| format!("v{i}")),
        )
    }));

    let dataset = Dataset::new(DatasetParts {
        ids,
        features,
        rows,
        ..Default::default()
    })?;
    Ok(Synthetic { dataset, labels, params })
}

/// Up to `count` distinct must-link pairs drawn from objects that share a
/// true label.
pub fn sample_oracle_pairs(ids: &[String], labels: &[usize], count: usize, seed: u64) -> Result<OraclePairs> {
    let mut rng = stream_rng(seed, PAIR_STREAM);
    let n = ids.len();
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    let possible: usize = {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; k];
        for &l in labels {
            sizes[l] += 1;
        }
        sizes.iter().map(|&s| s * s.saturating_sub(1) / 2).sum()
    };
    let target = count.min(possible);
    while pairs.len() < target {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b || labels[a] != labels[b] {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            pairs.push((ids[key.0].clone(), ids[key.1].clone()));
        }
    }
    OraclePairs::new(pairs)
}
