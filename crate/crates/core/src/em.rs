//! MAP-EM inference with random restarts.
//!
//! Each restart draws every object's responsibility row from a symmetric
//! Dirichlet(1), runs one M-step to obtain starting parameters, then
//! alternates E- and M-steps until the relative objective change
//! |dL| / (|L| + 1) falls below `rel_tol` or `max_iters` is reached. The
//! restart with the highest final objective wins; equal objectives go to the
//! lowest restart index.
//!
//! Restart `i` draws from its own stream of `seed`, and objects are
//! processed in ascending id order internally, so a fit is a function of the
//! seed and the set of (id, row) pairs only: neither the thread count nor the
//! input row order changes any bit of the result.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::model::{log_prior, log_sum_exp, Hyperparams, LogTables, ModelParams, Responsibilities};
use crate::rng::stream_rng;

/// Observed weight below which a numeric feature's M-step falls back to the
/// previous mean and the prior-mode precision.
pub const MIN_FEATURE_WEIGHT: f64 = 1e-8;
/// Cluster mass below which a cluster counts as empty and is re-seeded.
pub const MIN_CLUSTER_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub hyperparams: Hyperparams,
}

impl FitConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 500,
            max_iters: 1000,
            rel_tol: 1e-8,
            seed,
            hyperparams: Hyperparams::default(),
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_hyperparams(mut self, h: Hyperparams) -> Self {
        self.hyperparams = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be > 0".into()));
        }
        self.hyperparams.validate()
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub resp: Responsibilities,
    pub labels: Vec<usize>,
    /// Objective after initialization and after every EM iteration of the
    /// winning restart.
    pub objective_trace: Vec<f64>,
    pub winning_restart: usize,
    pub per_restart_final: Vec<f64>,
    pub seed: u64,
    pub hyperparams: Hyperparams,
}

impl FitResult {
    /// Final regularized objective of the winning restart.
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn iterations(&self) -> usize {
        self.objective_trace.len() - 1
    }
}

/// Posterior responsibilities under `p` and the log-likelihood
/// sum_n log sum_k pi_k p(object n | k).
pub fn e_step(d: &Dataset, p: &ModelParams) -> (Responsibilities, f64) {
    let k = p.k;
    let tables = LogTables::new(p);
    let mut values = vec![0.0; d.n_objects() * k];
    let mut ll = 0.0;
    for (n, row) in values.chunks_mut(k).enumerate() {
        let unobserved = d.numeric_row(n).iter().all(Option::is_none)
            && d.categorical_row(n).iter().all(Option::is_none);
        if unobserved {
            row.copy_from_slice(&p.pi);
            ll += log_sum_exp(&p.pi.iter().map(|w| w.ln()).collect::<Vec<_>>());
            continue;
        }
        tables.joint_row(d, p, n, row);
        let lse = log_sum_exp(row);
        ll += lse;
        if lse.is_finite() {
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        } else {
            row.copy_from_slice(&p.pi);
        }
    }
    (Responsibilities::from_flat(d.n_objects(), k, values), ll)
}

/// Parameters maximizing the expected complete-data log posterior given
/// `resp`.
///
/// pi_k = N_k / N; mu is the responsibility-weighted mean of the observed
/// values; lambda = (a - 1 + W/2) / (b + S/2) with W the observed weight and
/// S the weighted scatter; rho(v) = (alpha + count_v) / (alpha V + mass).
/// A numeric feature with observed weight below [`MIN_FEATURE_WEIGHT`] keeps
/// the mean from `prev` and takes the prior-mode precision.
pub fn m_step(
    d: &Dataset,
    resp: &Responsibilities,
    h: &Hyperparams,
    prev: &ModelParams,
) -> ModelParams {
    let k_count = resp.n_clusters();
    let r_count = d.n_numeric();
    let c_count = d.n_categorical();
    let n_count = d.n_objects();

    let mass = resp.cluster_mass();
    let total: f64 = mass.iter().sum();
    let pi: Vec<f64> = mass.iter().map(|m| m / total).collect();

    let mut weight = vec![vec![0.0; r_count]; k_count];
    let mut sum_x = vec![vec![0.0; r_count]; k_count];
    for n in 0..n_count {
        let row = resp.row(n);
        for (r, x) in d.numeric_row(n).iter().enumerate() {
            if let Some(x) = *x {
                for k in 0..k_count {
                    weight[k][r] += row[k];
                    sum_x[k][r] += row[k] * x;
                }
            }
        }
    }
    let mut mu = vec![vec![0.0; r_count]; k_count];
    for k in 0..k_count {
        for r in 0..r_count {
            mu[k][r] = if weight[k][r] < MIN_FEATURE_WEIGHT {
                prev.mu[k][r]
            } else {
                sum_x[k][r] / weight[k][r]
            };
        }
    }
    let mut scatter = vec![vec![0.0; r_count]; k_count];
    for n in 0..n_count {
        let row = resp.row(n);
        for (r, x) in d.numeric_row(n).iter().enumerate() {
            if let Some(x) = *x {
                for k in 0..k_count {
                    let dx = x - mu[k][r];
                    scatter[k][r] += row[k] * dx * dx;
                }
            }
        }
    }
    let mut lambda = vec![vec![0.0; r_count]; k_count];
    for k in 0..k_count {
        for r in 0..r_count {
            let (a, b) = h.gamma(k, r);
            lambda[k][r] = if weight[k][r] < MIN_FEATURE_WEIGHT {
                (a - 1.0) / b
            } else {
                (a - 1.0 + 0.5 * weight[k][r]) / (b + 0.5 * scatter[k][r])
            };
        }
    }

    let mut counts: Vec<Vec<Vec<f64>>> = (0..k_count)
        .map(|_| (0..c_count).map(|c| vec![0.0; d.category_count(c)]).collect())
        .collect();
    for n in 0..n_count {
        let row = resp.row(n);
        for (c, y) in d.categorical_row(n).iter().enumerate() {
            if let Some(v) = *y {
                for k in 0..k_count {
                    counts[k][c][v] += row[k];
                }
            }
        }
    }
    let rho = counts
        .into_iter()
        .map(|feats| {
            feats
                .into_iter()
                .map(|cnt| {
                    let v = cnt.len() as f64;
                    let denom = h.alpha * v + cnt.iter().sum::<f64>();
                    if denom > 0.0 {
                        cnt.iter().map(|&x| (h.alpha + x) / denom).collect()
                    } else {
                        vec![1.0 / v; cnt.len()]
                    }
                })
                .collect()
        })
        .collect();

    ModelParams {
        k: k_count,
        pi,
        mu,
        lambda,
        rho,
    }
}

/// Cluster index with the largest responsibility per object; ties go to the
/// lowest index.
pub fn hard_assign(resp: &Responsibilities) -> Vec<usize> {
    resp.rows()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Uniform weights, global observed means, prior-mode precisions and uniform
/// category probabilities. Used as the fallback source for the first M-step.
pub fn neutral_params(d: &Dataset, k: usize, h: &Hyperparams) -> ModelParams {
    let means = d.numeric_means();
    ModelParams {
        k,
        pi: vec![1.0 / k as f64; k],
        mu: vec![means; k],
        lambda: (0..k)
            .map(|kk| (0..d.n_numeric()).map(|r| h.precision_mode(kk, r)).collect())
            .collect(),
        rho: (0..k)
            .map(|_| {
                (0..d.n_categorical())
                    .map(|c| {
                        let v = d.category_count(c);
                        vec![1.0 / v as f64; v]
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Responsibility rows drawn from a symmetric Dirichlet(1).
pub fn random_responsibilities<R: Rng>(n: usize, k: usize, rng: &mut R) -> Responsibilities {
    let mut values = Vec::with_capacity(n * k);
    for _ in 0..n {
        let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        values.extend(draws.iter().map(|x| x / s));
    }
    Responsibilities::from_flat(n, k, values)
}

/// One EM run from the given responsibilities.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub params: ModelParams,
    pub resp: Responsibilities,
    pub trace: Vec<f64>,
}

impl RestartOutcome {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// Runs EM to convergence starting from `init`. `rng` feeds empty-cluster
/// re-seeding only.
pub fn run_em(
    d: &Dataset,
    init: &Responsibilities,
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> RestartOutcome {
    let h = &cfg.hyperparams;
    let global_means = d.numeric_means();
    let mut params = m_step(d, init, h, &neutral_params(d, cfg.k, h));
    let (mut resp, ll) = e_step(d, &params);
    let mut current = ll + log_prior(&params, h);
    let mut trace = vec![current];

    for _ in 0..cfg.max_iters {
        params = m_step(d, &resp, h, &params);
        let (r, ll) = e_step(d, &params);
        resp = r;
        let mut next = ll + log_prior(&params, h);

        let starved: Vec<usize> = resp
            .cluster_mass()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m < MIN_CLUSTER_MASS)
            .map(|(k, _)| k)
            .collect();
        if !starved.is_empty() {
            let candidate = reseed(d, &params, &starved, &global_means, h, rng);
            let (r2, ll2) = e_step(d, &candidate);
            let obj2 = ll2 + log_prior(&candidate, h);
            // only accepted when it does not lower the objective
            if obj2 >= next {
                params = candidate;
                resp = r2;
                next = obj2;
            }
        }

        trace.push(next);
        let change = (next - current).abs() / (current.abs() + 1.0);
        current = next;
        if !(change >= cfg.rel_tol) {
            break;
        }
    }

    RestartOutcome { params, resp, trace }
}

fn reseed(
    d: &Dataset,
    params: &ModelParams,
    starved: &[usize],
    global_means: &[f64],
    h: &Hyperparams,
    rng: &mut ChaCha8Rng,
) -> ModelParams {
    let mut out = params.clone();
    for &k in starved {
        let n = rng.random_range(0..d.n_objects());
        for (r, x) in d.numeric_row(n).iter().enumerate() {
            out.mu[k][r] = x.unwrap_or(global_means[r]);
            out.lambda[k][r] = h.precision_mode(k, r);
        }
        for (c, probs) in out.rho[k].iter_mut().enumerate() {
            let v = d.category_count(c);
            *probs = vec![1.0 / v as f64; v];
        }
    }
    out
}

/// Fits a K-cluster model with `cfg.restarts` random restarts and keeps the
/// best.
pub fn fit(d: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if d.n_objects() < cfg.k {
        return Err(Error::Fit(format!(
            "{} objects cannot support K={}",
            d.n_objects(),
            cfg.k
        )));
    }
    if d.observed_cells() == 0 {
        return Err(Error::Fit("no evidence: the dataset has no observed cells".into()));
    }

    let order = canonical_order(d);
    let canon = d.subset(&order);

    let outcomes: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            let init = random_responsibilities(canon.n_objects(), cfg.k, &mut rng);
            run_em(&canon, &init, cfg, &mut rng)
        })
        .collect();

    let per_restart_final: Vec<f64> = outcomes.iter().map(RestartOutcome::objective).collect();
    let mut best = 0;
    for (i, &obj) in per_restart_final.iter().enumerate() {
        if obj > per_restart_final[best] || (per_restart_final[best].is_nan() && !obj.is_nan()) {
            best = i;
        }
    }
    let winner = outcomes.into_iter().nth(best).expect("restarts >= 1");

    // back to input row order
    let mut rows = vec![Vec::new(); d.n_objects()];
    for (pos, &n) in order.iter().enumerate() {
        rows[n] = winner.resp.row(pos).to_vec();
    }
    let resp = Responsibilities::from_rows(rows)?;
    let labels = hard_assign(&resp);

    Ok(FitResult {
        params: winner.params,
        resp,
        labels,
        objective_trace: winner.trace,
        winning_restart: best,
        per_restart_final,
        seed: cfg.seed,
        hyperparams: cfg.hyperparams.clone(),
    })
}

/// Fits from a caller-supplied initialization (single run, no restarts).
pub fn fit_from(d: &Dataset, init: &Responsibilities, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if init.n_objects() != d.n_objects() || init.n_clusters() != cfg.k {
        return Err(Error::Config("initial responsibilities have the wrong shape".into()));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let out = run_em(d, init, cfg, &mut rng);
    let labels = hard_assign(&out.resp);
    let objective = out.objective();
    Ok(FitResult {
        params: out.params,
        resp: out.resp,
        labels,
        objective_trace: out.trace,
        winning_restart: 0,
        per_restart_final: vec![objective],
        seed: cfg.seed,
        hyperparams: cfg.hyperparams.clone(),
    })
}

fn canonical_order(d: &Dataset) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.n_objects()).collect();
    order.sort_by(|&a, &b| d.id(a).cmp(d.id(b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_dataset, Schema};
    use crate::model::log_map_objective;

    fn csv(text: &str) -> Dataset {
        read_dataset(text.as_bytes(), &Schema::Infer).unwrap()
    }

    #[test]
    fn single_cluster_responsibilities_are_one() {
        let d = csv("id,x:num,e:cat\na,1,u\nb,,v\nc,3,\n");
        let h = Hyperparams::default();
        let p = neutral_params(&d, 1, &h);
        let (resp, _) = e_step(&d, &p);
        assert!(resp.rows().all(|r| r == [1.0]));
    }

    #[test]
    fn unobserved_object_gets_prior_weights() {
        let d = csv("id,x:num\na,1\nb,\n");
        let p = ModelParams {
            k: 2,
            pi: vec![0.3, 0.7],
            mu: vec![vec![0.0], vec![1.0]],
            lambda: vec![vec![1.0], vec![2.0]],
            rho: vec![vec![], vec![]],
        };
        let (resp, _) = e_step(&d, &p);
        assert_eq!(resp.row(1), &[0.3, 0.7]);
    }

    #[test]
    fn m_step_single_object_closed_form() {
        let d = csv("id,x:num\na,3.0\n");
        let h = Hyperparams::new(2.0, 0.1, 0.01).unwrap();
        let resp = Responsibilities::from_rows(vec![vec![1.0]]).unwrap();
        let p = m_step(&d, &resp, &h, &neutral_params(&d, 1, &h));
        assert_eq!(p.mu[0][0], 3.0);
        assert!((p.lambda[0][0] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn m_step_categorical_pseudo_counts() {
        let d = csv("id,e:cat\na,u\nb,u\nc,u\nd,u\nz,v\n");
        let h = Hyperparams::new(2.0, 0.1, 0.01).unwrap();
        // cluster 0 holds the four `u` objects, cluster 1 the `v` object
        let resp = Responsibilities::from_rows(vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let p = m_step(&d, &resp, &h, &neutral_params(&d, 2, &h));
        assert!((p.rho[0][0][0] - 4.01 / 4.02).abs() < 1e-15);
        assert!((p.rho[0][0][1] - 0.01 / 4.02).abs() < 1e-15);
        assert_eq!(p.pi, vec![0.8, 0.2]);
    }

    #[test]
    fn m_step_unobserved_feature_falls_back_to_prior_mode() {
        let d = csv("id,x:num,y:num\na,1,\nb,2,\n");
        let h = Hyperparams::default();
        let resp = Responsibilities::from_rows(vec![vec![1.0], vec![1.0]]).unwrap();
        let mut prev = neutral_params(&d, 1, &h);
        prev.mu[0][1] = 42.0;
        let p = m_step(&d, &resp, &h, &prev);
        assert_eq!(p.mu[0][1], 42.0);
        assert!((p.lambda[0][1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn hard_assign_ties_go_low() {
        let resp = Responsibilities::from_rows(vec![vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
        assert_eq!(hard_assign(&resp), vec![1, 0]);
    }

    #[test]
    fn k1_converges_to_observed_means() {
        let d = csv("id,x:num,y:num,e:cat\na,1,10,u\nb,,20,v\nc,4,,u\n");
        let cfg = FitConfig::new(1, 3).with_restarts(2);
        let res = fit(&d, &cfg).unwrap();
        assert!(res.iterations() <= 2, "{} iterations", res.iterations());
        assert!((res.params.mu[0][0] - 2.5).abs() < 1e-12);
        assert!((res.params.mu[0][1] - 15.0).abs() < 1e-12);
        let direct = log_map_objective(&d, &res.params, &cfg.hyperparams);
        assert!((direct - res.objective()).abs() < 1e-9);
    }

    #[test]
    fn no_evidence_is_fit_error() {
        let d = csv("id,x:num,e:cat\na,,u\n").with_categorical_masked(0, 0);
        let err = fit(&d, &FitConfig::new(1, 0).with_restarts(1)).unwrap_err();
        assert!(err.is_computation());
        assert!(err.to_string().contains("no evidence"));
    }

    #[test]
    fn too_few_objects() {
        let d = csv("id,x:num\na,1\n");
        assert!(fit(&d, &FitConfig::new(2, 0).with_restarts(1)).is_err());
    }

    #[test]
    fn config_validation() {
        let d = csv("id,x:num\na,1\nb,2\n");
        assert!(matches!(fit(&d, &FitConfig::new(0, 0)), Err(Error::Config(_))));
        assert!(matches!(
            fit(&d, &FitConfig::new(1, 0).with_restarts(0)),
            Err(Error::Config(_))
        ));
    }
}
