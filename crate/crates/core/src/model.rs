//! Mixture parameters, priors, per-object log densities and the MAP
//! objective.
//!
//! Features are independent given the cluster: numeric features are
//! Gaussian with per-cluster mean and precision, categorical features are
//! categorical with per-cluster probability tables. A missing cell simply
//! contributes no factor. Each precision carries a shape-rate Gamma(a, b)
//! prior; category probabilities carry an implicit Dirichlet(alpha + 1)
//! prior, which keeps empty categories away from log(0).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Per-(cluster, feature) Gamma prior that replaces the shared one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorOverride {
    pub cluster: usize,
    pub feature: usize,
    pub a: f64,
    pub b: f64,
}

/// Prior hyperparameters.
///
/// `a` and `b` are the shape and rate of the Gamma prior on every numeric
/// precision; its mode is (a - 1) / b. `alpha` is the categorical
/// pseudo-count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<PriorOverride>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            a: 2.0,
            b: 0.1,
            alpha: 0.01,
            overrides: Vec::new(),
        }
    }
}

impl Hyperparams {
    pub fn new(a: f64, b: f64, alpha: f64) -> Result<Self> {
        let h = Self {
            a,
            b,
            alpha,
            overrides: Vec::new(),
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |a: f64, b: f64| {
            if !(a > 1.0 && a.is_finite()) {
                return Err(Error::Config(format!("Gamma shape a must be > 1, got {a}")));
            }
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("Gamma rate b must be > 0, got {b}")));
            }
            Ok(())
        };
        check(self.a, self.b)?;
        for o in &self.overrides {
            check(o.a, o.b)?;
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "categorical pseudo-count alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// (shape, rate) of the prior on the precision of feature `r` in
    /// cluster `k`.
    #[inline]
    pub fn gamma(&self, k: usize, r: usize) -> (f64, f64) {
        if self.overrides.is_empty() {
            return (self.a, self.b);
        }
        self.overrides
            .iter()
            .rev()
            .find(|o| o.cluster == k && o.feature == r)
            .map_or((self.a, self.b), |o| (o.a, o.b))
    }

    /// Mode of the precision prior for (k, r).
    pub fn precision_mode(&self, k: usize, r: usize) -> f64 {
        let (a, b) = self.gamma(k, r);
        (a - 1.0) / b
    }
}

/// Mixture parameters for K clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k: usize,
    /// Mixture weights.
    pub pi: Vec<f64>,
    /// K x R means.
    pub mu: Vec<Vec<f64>>,
    /// K x R precisions.
    pub lambda: Vec<Vec<f64>>,
    /// K x C probability vectors over each feature's categories.
    pub rho: Vec<Vec<Vec<f64>>>,
}

impl ModelParams {
    pub fn n_numeric(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn n_categorical(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    /// Checks the probability-simplex and positivity invariants, and that
    /// shapes match `d` when given.
    pub fn validate(&self, d: Option<&Dataset>) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if self.pi.len() != k || self.mu.len() != k || self.lambda.len() != k || self.rho.len() != k {
            return Err(Error::Config("parameter arrays must have K rows".into()));
        }
        check_simplex(&self.pi, "pi")?;
        let r = self.n_numeric();
        let c = self.n_categorical();
        for kk in 0..k {
            if self.mu[kk].len() != r || self.lambda[kk].len() != r || self.rho[kk].len() != c {
                return Err(Error::Config(format!("ragged parameters in cluster {kk}")));
            }
            if self.mu[kk].iter().any(|m| !m.is_finite()) {
                return Err(Error::Config(format!("non-finite mean in cluster {kk}")));
            }
            if self.lambda[kk].iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                return Err(Error::Config(format!("invalid precision in cluster {kk}")));
            }
            for (cc, rho) in self.rho[kk].iter().enumerate() {
                check_simplex(rho, &format!("rho[{kk}][{cc}]"))?;
            }
        }
        if let Some(d) = d {
            if d.n_numeric() != r || d.n_categorical() != c {
                return Err(Error::Config("parameters do not match dataset shape".into()));
            }
            for cc in 0..c {
                if self.rho[0][cc].len() != d.category_count(cc) {
                    return Err(Error::Config(format!(
                        "rho for feature `{}` has wrong category count",
                        d.categorical_spec(cc).name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies a cluster relabeling: new cluster `i` is old cluster `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ModelParams {
        ModelParams {
            k: self.k,
            pi: perm.iter().map(|&j| self.pi[j]).collect(),
            mu: perm.iter().map(|&j| self.mu[j].clone()).collect(),
            lambda: perm.iter().map(|&j| self.lambda[j].clone()).collect(),
            rho: perm.iter().map(|&j| self.rho[j].clone()).collect(),
        }
    }
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::Config(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::Config(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// N x K posterior membership probabilities, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Config("ragged responsibility rows".into()));
        }
        Ok(Self {
            n,
            k,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub(crate) fn from_flat(n: usize, k: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * k);
        Self { n, k, values }
    }

    pub fn n_objects(&self) -> usize {
        self.n
    }

    pub fn n_clusters(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.k..(n + 1) * self.k]
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.k + k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.k.max(1)).take(self.n)
    }

    /// Soft cluster masses N_k.
    pub fn cluster_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.k];
        for row in self.rows() {
            for (m, &r) in mass.iter_mut().zip(row) {
                *m += r;
            }
        }
        mass
    }
}

/// log N(x | mu, 1/lambda).
#[inline]
pub fn log_normal(x: f64, mu: f64, lambda: f64) -> f64 {
    0.5 * (lambda.ln() - (2.0 * PI).ln()) - 0.5 * lambda * (x - mu) * (x - mu)
}

/// Log density of the shape-rate Gamma(a, b) at `lambda`.
#[inline]
pub fn log_gamma_density(lambda: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - ln_gamma(a) + (a - 1.0) * lambda.ln() - b * lambda
}

/// Numerically stable log(sum(exp(xs))). Returns -inf for an empty slice or
/// all -inf inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// log p(x_n, y_n | cluster k): sum of the Gaussian and categorical log
/// factors of the observed cells of object `n`.
pub fn log_component_density(d: &Dataset, n: usize, k: usize, p: &ModelParams) -> f64 {
    let mut acc = 0.0;
    for (r, x) in d.numeric_row(n).iter().enumerate() {
        if let Some(x) = *x {
            acc += log_normal(x, p.mu[k][r], p.lambda[k][r]);
        }
    }
    for (c, y) in d.categorical_row(n).iter().enumerate() {
        if let Some(v) = *y {
            acc += p.rho[k][c][v].ln();
        }
    }
    acc
}

/// Precomputed logarithms of a parameter set, for evaluating many objects.
pub(crate) struct LogTables {
    k: usize,
    log_pi: Vec<f64>,
    // K x R: 0.5 * ln(lambda / 2pi)
    norm: Vec<Vec<f64>>,
    log_rho: Vec<Vec<Vec<f64>>>,
}

impl LogTables {
    pub(crate) fn new(p: &ModelParams) -> Self {
        let half_ln_2pi = 0.5 * (2.0 * PI).ln();
        Self {
            k: p.k,
            log_pi: p.pi.iter().map(|w| w.ln()).collect(),
            norm: p
                .lambda
                .iter()
                .map(|row| row.iter().map(|l| 0.5 * l.ln() - half_ln_2pi).collect())
                .collect(),
            log_rho: p
                .rho
                .iter()
                .map(|feats| {
                    feats
                        .iter()
                        .map(|probs| probs.iter().map(|q| q.ln()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Fills `out[k]` with log pi_k + log p(object n | k).
    pub(crate) fn joint_row(&self, d: &Dataset, p: &ModelParams, n: usize, out: &mut [f64]) {
        let xs = d.numeric_row(n);
        let ys = d.categorical_row(n);
        for k in 0..self.k {
            let mut acc = 0.0;
            let (mu, lambda, norm) = (&p.mu[k], &p.lambda[k], &self.norm[k]);
            for (r, x) in xs.iter().enumerate() {
                if let Some(x) = *x {
                    let dx = x - mu[r];
                    acc += norm[r] - 0.5 * lambda[r] * dx * dx;
                }
            }
            let log_rho = &self.log_rho[k];
            for (c, y) in ys.iter().enumerate() {
                if let Some(v) = *y {
                    acc += log_rho[c][v];
                }
            }
            out[k] = self.log_pi[k] + acc;
        }
    }
}

/// Per-object log-likelihood log sum_k pi_k p(object n | k).
pub fn object_log_likelihoods(d: &Dataset, p: &ModelParams) -> Vec<f64> {
    let tables = LogTables::new(p);
    let mut buf = vec![0.0; p.k];
    (0..d.n_objects())
        .map(|n| {
            tables.joint_row(d, p, n, &mut buf);
            log_sum_exp(&buf)
        })
        .collect()
}

/// Mixture log-likelihood of the whole dataset.
pub fn log_likelihood(d: &Dataset, p: &ModelParams) -> f64 {
    object_log_likelihoods(d, p).iter().sum()
}

/// Log prior: Gamma terms over every precision plus alpha * log rho over
/// every category probability.
pub fn log_prior(p: &ModelParams, h: &Hyperparams) -> f64 {
    let mut acc = 0.0;
    for k in 0..p.k {
        for (r, &l) in p.lambda[k].iter().enumerate() {
            let (a, b) = h.gamma(k, r);
            acc += log_gamma_density(l, a, b);
        }
    }
    if h.alpha > 0.0 {
        for feats in &p.rho {
            for probs in feats {
                acc += h.alpha * probs.iter().map(|q| q.ln()).sum::<f64>();
            }
        }
    }
    acc
}

/// The regularized objective: log-likelihood plus log prior.
pub fn log_map_objective(d: &Dataset, p: &ModelParams, h: &Hyperparams) -> f64 {
    log_likelihood(d, p) + log_prior(p, h)
}

/// Versioned JSON form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub pi: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub rho: Vec<Vec<Vec<f64>>>,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub objective: f64,
    pub numeric_features: Vec<String>,
    pub categorical_features: Vec<CategoricalFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    pub categories: Vec<String>,
}

impl ModelDocument {
    pub const FORMAT: &'static str = "mixclust.model";
    pub const VERSION: u32 = 1;

    pub fn new(d: &Dataset, p: &ModelParams, h: &Hyperparams, seed: u64, objective: f64) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: Self::VERSION,
            k: p.k,
            pi: p.pi.clone(),
            mu: p.mu.clone(),
            lambda: p.lambda.clone(),
            rho: p.rho.clone(),
            hyperparams: h.clone(),
            seed,
            objective,
            numeric_features: (0..d.n_numeric()).map(|r| d.numeric_spec(r).name.clone()).collect(),
            categorical_features: (0..d.n_categorical())
                .map(|c| CategoricalFeature {
                    name: d.categorical_spec(c).name.clone(),
                    categories: d.categorical_spec(c).categories.clone(),
                })
                .collect(),
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            k: self.k,
            pi: self.pi.clone(),
            mu: self.mu.clone(),
            lambda: self.lambda.clone(),
            rho: self.rho.clone(),
        }
    }
}
