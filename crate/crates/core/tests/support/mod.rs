//! Independent oracles shared by the oracle tests and the acceptance suite:
//! brute-force likelihood enumeration and a derivative-free search over the
//! M-step objective. Nothing here calls the library's likelihood code.

#![allow(dead_code)]

use mixclust_core::corpus::{Cell, DatasetParts};
use mixclust_core::em::{m_step, neutral_params};
use mixclust_core::model::log_prior;
use mixclust_core::{log_map_objective, Dataset, FeatureSpec, Hyperparams, ModelParams, Responsibilities};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random dataset with `r` numeric and `c` categorical (3 categories)
/// features and the given missing rate.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, r: usize, c: usize, missing: f64) -> Dataset {
    let mut features: Vec<FeatureSpec> = (0..r).map(|i| FeatureSpec::numeric(format!("x{i}"))).collect();
    features.extend((0..c).map(|i| FeatureSpec::categorical(format!("y{i}"), ["p", "q", "s"])));
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<Cell> = (0..r)
                .map(|_| Cell::Numeric(rng.random_range(-2.0..2.0)))
                .collect();
            row.extend((0..c).map(|_| Cell::Category(rng.random_range(0..3))));
            for cell in &mut row {
                if rng.random::<f64>() < missing {
                    *cell = Cell::Missing;
                }
            }
            row
        })
        .collect();
    Dataset::new(DatasetParts {
        ids: (0..n).map(|i| format!("o{i:03}")).collect(),
        features,
        rows,
        ..Default::default()
    })
    .unwrap()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_params(rng: &mut ChaCha8Rng, d: &Dataset, k: usize) -> ModelParams {
    ModelParams {
        k,
        pi: random_simplex(rng, k),
        mu: (0..k).map(|_| (0..d.n_numeric()).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
        lambda: (0..k).map(|_| (0..d.n_numeric()).map(|_| rng.random_range(0.2..5.0)).collect()).collect(),
        rho: (0..k)
            .map(|_| (0..d.n_categorical()).map(|c| random_simplex(rng, d.category_count(c))).collect())
            .collect(),
    }
}

/// Linear-space likelihood by summing over every joint assignment z.
pub fn brute_force_log_likelihood(d: &Dataset, p: &ModelParams) -> f64 {
    let n = d.n_objects();
    let k = p.k;
    let factor = |obj: usize, cl: usize| -> f64 {
        let mut f = p.pi[cl];
        for r in 0..d.n_numeric() {
            if let Some(x) = d.numeric(obj, r) {
                let lam = p.lambda[cl][r];
                f *= (lam / (2.0 * std::f64::consts::PI)).sqrt()
                    * (-0.5 * lam * (x - p.mu[cl][r]).powi(2)).exp();
            }
        }
        for c in 0..d.n_categorical() {
            if let Some(v) = d.categorical(obj, c) {
                f *= p.rho[cl][c][v];
            }
        }
        f
    };
    let mut total = 0.0;
    for code in 0..k.pow(n as u32) {
        let mut rest = code;
        let mut prod = 1.0;
        for obj in 0..n {
            prod *= factor(obj, rest % k);
            rest /= k;
        }
        total += prod;
    }
    total.ln()
}

/// Expected complete-data log posterior with responsibilities held fixed,
/// written out independently of the library.
pub fn expected_objective(d: &Dataset, resp: &Responsibilities, h: &Hyperparams, p: &ModelParams) -> f64 {
    let mut q = 0.0;
    for n in 0..d.n_objects() {
        for k in 0..p.k {
            let w = resp.get(n, k);
            if w == 0.0 {
                continue;
            }
            let mut lp = p.pi[k].ln();
            for r in 0..d.n_numeric() {
                if let Some(x) = d.numeric(n, r) {
                    let lam = p.lambda[k][r];
                    lp += 0.5 * lam.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                        - 0.5 * lam * (x - p.mu[k][r]).powi(2);
                }
            }
            for c in 0..d.n_categorical() {
                if let Some(v) = d.categorical(n, c) {
                    lp += p.rho[k][c][v].ln();
                }
            }
            q += w * lp;
        }
    }
    q + log_prior(p, h)
}

/// Compass search maximizing `f` from `x0`.
pub fn compass_max(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, step: f64) -> (Vec<f64>, f64) {
    let mut x = x0;
    let mut best = f(&x);
    let mut s = step;
    while s > 1e-11 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += dir * s;
                let v = f(&y);
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            s *= 0.5;
        }
    }
    (x, best)
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Largest |objective likelihood part - enumerated likelihood| over
/// `instances` random problems with N <= 4 and K <= 2.
pub fn likelihood_enumeration_gap(seed: u64, instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=4);
        let k = rng.random_range(1..=2);
        let d = random_dataset(&mut rng, n, 2, 2, 0.3);
        let p = random_params(&mut rng, &d, k);
        let a = if rng.random::<bool>() { 2.0 } else { 3.0 };
        let h = Hyperparams::new(a, rng.random_range(0.1..2.0), 0.0).unwrap();
        // Gamma terms with ln Gamma(2) = 0 and ln Gamma(3) = ln 2
        let ln_gamma_a = if a == 2.0 { 0.0 } else { 2f64.ln() };
        let gamma_terms: f64 = p
            .lambda
            .iter()
            .flatten()
            .map(|&l| a * h.b.ln() - ln_gamma_a + (a - 1.0) * l.ln() - h.b * l)
            .sum();
        let from_objective = log_map_objective(&d, &p, &h) - gamma_terms;
        let brute = brute_force_log_likelihood(&d, &p);
        worst = worst.max((from_objective - brute).abs());
    }
    worst
}

/// Over `instances` random problems with fixed responsibilities: the most
/// a block-wise compass search improves on the m_step output, and the
/// largest absolute difference between the two.
pub fn m_step_search_excess(seed: u64, instances: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut spread: f64 = 0.0;
    for _ in 0..instances {
        let d = random_dataset(&mut rng, 20, 2, 2, 0.3);
        let k = rng.random_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| random_simplex(&mut rng, k)).collect();
        let resp = Responsibilities::from_rows(rows).unwrap();
        let h = Hyperparams::new(rng.random_range(1.5..3.0), rng.random_range(0.05..1.0), 0.01).unwrap();
        let prev = neutral_params(&d, k, &h);
        let best = m_step(&d, &resp, &h, &prev);
        let target = expected_objective(&d, &resp, &h, &best);

        // The objective separates into blocks; search each block from a
        // neutral start, holding the others at the m_step output.
        let mut candidate = best.clone();
        let (z, _) = compass_max(
            |z| {
                let mut p = best.clone();
                p.pi = softmax(z);
                expected_objective(&d, &resp, &h, &p)
            },
            vec![0.0; k],
            1.0,
        );
        candidate.pi = softmax(&z);
        for kk in 0..k {
            for r in 0..d.n_numeric() {
                let (x, _) = compass_max(
                    |v| {
                        let mut p = best.clone();
                        p.mu[kk][r] = v[0];
                        p.lambda[kk][r] = v[1].exp();
                        expected_objective(&d, &resp, &h, &p)
                    },
                    vec![0.0, 0.0],
                    1.0,
                );
                candidate.mu[kk][r] = x[0];
                candidate.lambda[kk][r] = x[1].exp();
            }
            for c in 0..d.n_categorical() {
                let (z, _) = compass_max(
                    |z| {
                        let mut p = best.clone();
                        p.rho[kk][c] = softmax(z);
                        expected_objective(&d, &resp, &h, &p)
                    },
                    vec![0.0; d.category_count(c)],
                    1.0,
                );
                candidate.rho[kk][c] = softmax(&z);
            }
        }
        let found = expected_objective(&d, &resp, &h, &candidate);
        worst = worst.max(found - target);
        spread = spread.max((found - target).abs());
    }
    (worst, spread)
}
