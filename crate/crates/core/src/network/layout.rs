//! Fruchterman-Reingold layout on the unit square.
//!
//! Ideal edge length k = sqrt(area / |V|) with area 1; every pair repels
//! with k^2 / d, every edge attracts with d^2 / k. A node moves along its net
//! force by at most the temperature, which cools linearly from 0.1 to 0 over
//! the iteration budget, and is clamped to the frame.

use rand::Rng;

use super::NetworkGraph;
use crate::rng::stream_rng;

const AREA: f64 = 1.0;
const INITIAL_TEMPERATURE: f64 = 0.1;
const MIN_DISTANCE: f64 = 1e-9;

/// Positions for every node of `g`, deterministic in `seed`.
pub fn layout_force_directed(g: &NetworkGraph, iterations: usize, seed: u64) -> Vec<[f64; 2]> {
    run(g, iterations, seed, None)
}

/// Like [`layout_force_directed`], also returning the layout energy after
/// each iteration.
pub fn layout_force_directed_traced(
    g: &NetworkGraph,
    iterations: usize,
    seed: u64,
) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut trace = Vec::with_capacity(iterations);
    let pos = run(g, iterations, seed, Some(&mut trace));
    (pos, trace)
}

/// FR potential whose negative gradient is the layout force:
/// sum over edges of d^3 / (3k) minus sum over pairs of k^2 ln d.
pub fn layout_energy(g: &NetworkGraph, pos: &[[f64; 2]]) -> f64 {
    let n = pos.len();
    if n == 0 {
        return 0.0;
    }
    let k = (AREA / n as f64).sqrt();
    let mut e = 0.0;
    for &(u, v) in &g.edges {
        let d = dist(pos[u], pos[v]);
        e += d * d * d / (3.0 * k);
    }
    for u in 0..n {
        for v in u + 1..n {
            e -= k * k * dist(pos[u], pos[v]).max(MIN_DISTANCE).ln();
        }
    }
    e
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

// Unit vector from v to u and their distance; coincident nodes get a fixed
// direction derived from their indices.
fn direction(pos: &[[f64; 2]], u: usize, v: usize) -> ([f64; 2], f64) {
    let dx = pos[u][0] - pos[v][0];
    let dy = pos[u][1] - pos[v][1];
    let d = (dx * dx + dy * dy).sqrt();
    if d < MIN_DISTANCE {
        let angle = (u * 7919 + v) as f64 * 2.399_963_229_728_653;
        return ([angle.cos(), angle.sin()], MIN_DISTANCE);
    }
    ([dx / d, dy / d], d)
}

fn run(g: &NetworkGraph, iterations: usize, seed: u64, mut trace: Option<&mut Vec<f64>>) -> Vec<[f64; 2]> {
    let n = g.nodes.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![[0.5, 0.5]];
    }
    let mut rng = stream_rng(seed, 0);
    let mut pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let k = (AREA / n as f64).sqrt();
    let t0 = INITIAL_TEMPERATURE * AREA.sqrt();
    let mut disp = vec![[0.0f64; 2]; n];

    for it in 0..iterations {
        let temperature = t0 * (1.0 - it as f64 / iterations as f64);
        disp.iter_mut().for_each(|d| *d = [0.0, 0.0]);
        for u in 0..n {
            for v in u + 1..n {
                let (dir, d) = direction(&pos, u, v);
                let f = k * k / d;
                disp[u][0] += dir[0] * f;
                disp[u][1] += dir[1] * f;
                disp[v][0] -= dir[0] * f;
                disp[v][1] -= dir[1] * f;
            }
        }
        for &(u, v) in &g.edges {
            let (dir, d) = direction(&pos, u, v);
            let f = d * d / k;
            disp[u][0] -= dir[0] * f;
            disp[u][1] -= dir[1] * f;
            disp[v][0] += dir[0] * f;
            disp[v][1] += dir[1] * f;
        }
        for (p, d) in pos.iter_mut().zip(&disp) {
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if len > 0.0 {
                let step = len.min(temperature) / len;
                p[0] = (p[0] + d[0] * step).clamp(0.0, 1.0);
                p[1] = (p[1] + d[1] * step).clamp(0.0, 1.0);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(layout_energy(g, &pos));
        }
    }
    pos
}
