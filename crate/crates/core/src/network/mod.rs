//! Pairwise distances, threshold adjacency graph, force-directed layout and
//! graph export.
//!
//! The distance between two objects is the sum of squared differences over
//! the numeric features both have observed plus 1/20 for every categorical
//! feature both have observed with different values. Missing cells are
//! skipped, so sparse objects look close to everything; pairs that share no
//! observed feature get distance 0 and are counted in the graph report.

mod export;
mod layout;

pub use export::{export_graph, ExportFormat, PALETTE};
pub use layout::{layout_energy, layout_force_directed, layout_force_directed_traced};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Penalty for a categorical mismatch.
pub const CATEGORY_MISMATCH_PENALTY: f64 = 1.0 / 20.0;
/// Default adjacency threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Symmetric, zero-diagonal, non-negative N x N distances, with the number of
/// features each pair has in common.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    shared: Vec<u32>,
}

impl DistanceMatrix {
    /// Builds from explicit values (row-major). Shared-feature counts are set
    /// to 1 for every off-diagonal pair.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Config(format!("expected {} entries, got {}", n * n, values.len())));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::Config(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(v >= 0.0 && v.is_finite()) || v != values[j * n + i] {
                    return Err(Error::Config(format!(
                        "entry ({i}, {j}) is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        let shared = (0..n * n).map(|x| u32::from(x / n != x % n)).collect();
        Ok(Self { n, values, shared })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Number of features observed in both objects.
    #[inline]
    pub fn shared_features(&self, i: usize, j: usize) -> u32 {
        self.shared[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

fn pair_distance(d: &Dataset, i: usize, j: usize) -> (f64, u32) {
    let mut acc = 0.0;
    let mut shared = 0;
    for (a, b) in d.numeric_row(i).iter().zip(d.numeric_row(j)) {
        if let (Some(a), Some(b)) = (a, b) {
            acc += (a - b) * (a - b);
            shared += 1;
        }
    }
    for (a, b) in d.categorical_row(i).iter().zip(d.categorical_row(j)) {
        if let (Some(a), Some(b)) = (a, b) {
            if a != b {
                acc += CATEGORY_MISMATCH_PENALTY;
            }
            shared += 1;
        }
    }
    (acc, shared)
}

pub fn distance_matrix(d: &Dataset) -> DistanceMatrix {
    let n = d.n_objects();
    let rows: Vec<Vec<(f64, u32)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { (0.0, 0) } else { pair_distance(d, i.min(j), i.max(j)) })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n * n);
    let mut shared = Vec::with_capacity(n * n);
    for row in rows {
        for (v, s) in row {
            values.push(v);
            shared.push(s);
        }
    }
    DistanceMatrix { n, values, shared }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Row of the object in the source dataset.
    pub index: usize,
    pub id: String,
    pub label: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// Adjacency graph over the non-isolated objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub nodes: Vec<Node>,
    /// Undirected edges as (i, j) positions into `nodes`, i < j.
    pub edges: Vec<(usize, usize)>,
    pub threshold: f64,
    pub min_shared_features: u32,
    /// Ids of objects without any neighbour; not part of `nodes`.
    pub isolated: Vec<String>,
    /// Object pairs with no feature observed in both (distance 0).
    pub no_shared_feature_pairs: usize,
}

impl NetworkGraph {
    pub fn has_layout(&self) -> bool {
        !self.nodes.is_empty() && self.nodes.iter().all(|n| n.x.is_some() && n.y.is_some())
    }

    pub fn set_layout(&mut self, coords: &[[f64; 2]]) {
        assert_eq!(coords.len(), self.nodes.len());
        for (node, c) in self.nodes.iter_mut().zip(coords) {
            node.x = Some(c[0]);
            node.y = Some(c[1]);
        }
    }
}

/// Connects i and j when D_ij < threshold (strictly) and, if
/// `min_shared_features` > 0, they share at least that many observed
/// features. Objects left without neighbours are dropped and listed in
/// `isolated`.
pub fn build_graph(
    dm: &DistanceMatrix,
    ids: &[String],
    labels: &[usize],
    threshold: f64,
    min_shared_features: u32,
) -> Result<NetworkGraph> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("threshold must be > 0, got {threshold}")));
    }
    let n = dm.len();
    if ids.len() != n || labels.len() != n {
        return Err(Error::Config("ids and labels must match the distance matrix".into()));
    }
    let mut raw_edges = Vec::new();
    let mut degree = vec![0usize; n];
    let mut no_shared = 0;
    for i in 0..n {
        for j in i + 1..n {
            if dm.shared_features(i, j) == 0 {
                no_shared += 1;
            }
            if dm.get(i, j) < threshold && dm.shared_features(i, j) >= min_shared_features {
                raw_edges.push((i, j));
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    let mut position = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    let mut isolated = Vec::new();
    for i in 0..n {
        if degree[i] == 0 {
            isolated.push(ids[i].clone());
        } else {
            position[i] = nodes.len();
            nodes.push(Node {
                index: i,
                id: ids[i].clone(),
                label: labels[i],
                x: None,
                y: None,
            });
        }
    }
    Ok(NetworkGraph {
        nodes,
        edges: raw_edges
            .into_iter()
            .map(|(i, j)| (position[i], position[j]))
            .collect(),
        threshold,
        min_shared_features,
        isolated,
        no_shared_feature_pairs: no_shared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_dataset, Schema};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("o{i}")).collect()
    }

    #[test]
    fn identical_objects_are_at_zero() {
        let d = read_dataset("id,x:num,e:cat\na,1.5,u\nb,1.5,u\n".as_bytes(), &Schema::Infer).unwrap();
        assert_eq!(distance_matrix(&d).get(0, 1), 0.0);
    }

    #[test]
    fn single_category_mismatch_costs_one_twentieth() {
        let d = read_dataset("id,x:num,e:cat\na,1.5,u\nb,1.5,v\n".as_bytes(), &Schema::Infer).unwrap();
        assert_eq!(distance_matrix(&d).get(0, 1), 0.05);
    }

    #[test]
    fn threshold_is_strict() {
        let dm = DistanceMatrix::from_values(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let g = build_graph(&dm, &ids(2), &[0, 0], 0.5, 0).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.isolated.len(), 2);
        let g = build_graph(&dm, &ids(2), &[0, 0], 0.5 + 1e-12, 0).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn zero_matrix_is_triangle() {
        let dm = DistanceMatrix::from_values(3, vec![0.0; 9]).unwrap();
        let g = build_graph(&dm, &ids(3), &[0, 1, 2], 0.5, 0).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (0, 2), (1, 2)]);
        assert!(g.isolated.is_empty());
    }

    #[test]
    fn isolated_nodes_are_dropped_and_reindexed() {
        #[rustfmt::skip]
        let dm = DistanceMatrix::from_values(3, vec![
            0.0, 9.0, 9.0,
            9.0, 0.0, 0.1,
            9.0, 0.1, 0.0,
        ]).unwrap();
        let g = build_graph(&dm, &ids(3), &[0, 1, 1], 0.5, 0).unwrap();
        assert_eq!(g.isolated, vec!["o0"]);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.nodes[0].index, 1);
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn no_shared_pairs_are_counted_and_filterable() {
        let d = read_dataset("id,x:num,y:num\na,1,\nb,,2\nc,1,\n".as_bytes(), &Schema::Infer).unwrap();
        let dm = distance_matrix(&d);
        assert_eq!(dm.get(0, 1), 0.0);
        let g = build_graph(&dm, d.ids(), &[0; 3], 0.5, 0).unwrap();
        assert_eq!(g.no_shared_feature_pairs, 2);
        assert_eq!(g.edges.len(), 3);
        let g = build_graph(&dm, d.ids(), &[0; 3], 0.5, 1).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        assert_eq!(g.isolated, vec!["b"]);
    }

    #[test]
    fn bad_threshold() {
        let dm = DistanceMatrix::from_values(1, vec![0.0]).unwrap();
        assert!(build_graph(&dm, &ids(1), &[0], 0.0, 0).is_err());
    }

    #[test]
    fn from_values_checks_symmetry() {
        assert!(DistanceMatrix::from_values(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::from_values(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
    }
}
