//! Rank-based separations and the induced communication matrix.
//!
//! The relative separation of agent `j` seen from agent `i` counts how many
//! agents sit strictly closer to `i` than `j` does.  Ranks refine that count
//! deterministically: agents are ordered by the key `(distance to i, index)`,
//! with `i` itself pinned to rank 0, so every row of the rank table is a
//! permutation of `0..n` even when distances tie.  Interaction weights are
//! then looked up by rank (topological modes) or by distance (metric mode).

use crate::ensemble::AgentEnsemble;
use crate::error::{Error, Result};
use crate::math::Fnv1a;
use crate::weights::WeightFunction;

/// Number of agents strictly closer to `i` than `j` is (counting `i` itself
/// whenever `j` does not coincide with it).  Zero exactly when `i` and `j`
/// occupy the same position.
pub fn relative_separation(ensemble: &AgentEnsemble, i: usize, j: usize) -> usize {
    let d_ij = ensemble.distance(i, j);
    (0..ensemble.n_agents())
        .filter(|&k| ensemble.distance(i, k) < d_ij)
        .count()
}

/// Ranks of every agent as seen from `i`: a permutation of `0..n` obtained by
/// stably ordering agents by `(distance to i, index)` with `i` first among
/// zero-distance agents.  Agrees with [`relative_separation`] whenever the
/// distances from `i` are pairwise distinct.
pub fn rank_all(ensemble: &AgentEnsemble, i: usize) -> Vec<usize> {
    let n = ensemble.n_agents();
    let distances: Vec<f64> = (0..n).map(|k| ensemble.distance(i, k)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .partial_cmp(&distances[b])
            .expect("distances are finite")
            .then_with(|| (a != i).cmp(&(b != i)))
            .then_with(|| a.cmp(&b))
    });
    let mut ranks = vec![0; n];
    for (rank, &k) in order.iter().enumerate() {
        ranks[k] = rank;
    }
    ranks
}

/// Rank of `j` seen from `i`, scaled into `[0, 1)` by the agent count.
pub fn normalized_separation(ensemble: &AgentEnsemble, i: usize, j: usize) -> f64 {
    rank_all(ensemble, i)[j] as f64 / ensemble.n_agents() as f64
}

/// Communication pattern at one instant: the rank table, the weight matrix,
/// and a fingerprint of both.
#[derive(Clone, Debug)]
pub struct Topology {
    n: usize,
    rank_table: Vec<usize>,
    weights: Vec<f64>,
    hash: u64,
}

impl Topology {
    /// Number of agents.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self, i: usize, j: usize) -> usize {
        self.rank_table[i * self.n + j]
    }

    pub fn rank_row(&self, i: usize) -> &[usize] {
        &self.rank_table[i * self.n..(i + 1) * self.n]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Fingerprint of the rank table and the zero/nonzero weight pattern;
    /// stable across runs and platforms.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// Dense `I - W` in row-major order.
    pub fn laplacian(&self) -> Vec<f64> {
        let mut l = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                let w = self.weights[i * self.n + j];
                l[i * self.n + j] = if i == j { 1.0 - w } else { -w };
            }
        }
        l
    }

    /// Directed edge `i -> j` exists when `i != j` and the weight is positive.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.weight(i, j) > 0.0
    }

    /// Wraps an externally supplied nonnegative weight matrix (row-major
    /// rows).  Each row must have a positive sum and is divided by it, so the
    /// result is row-stochastic.  The rank table is a synthetic permutation
    /// (external matrices carry no positional ranks); it keeps the diagonal
    /// at rank 0 so the fingerprint machinery stays uniform.
    pub fn from_weight_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let mut weights = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidParameter {
                    name: "weights",
                    reason: "entries must be finite and nonnegative".into(),
                });
            }
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(Error::ZeroNormalizer);
            }
            for (j, w) in row.iter().enumerate() {
                weights[i * n + j] = w / sum;
            }
        }
        let mut rank_table = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                rank_table[i * n + j] = (j + n - i) % n;
            }
        }
        let hash = fingerprint(n, &rank_table, &weights);
        Ok(Topology { n, rank_table, weights, hash })
    }
}

fn fingerprint(n: usize, rank_table: &[usize], weights: &[f64]) -> u64 {
    let mut h = Fnv1a::new();
    h.write_u64(n as u64);
    for &r in rank_table {
        h.write_u64(r as u64);
    }
    // Pack the zero/nonzero pattern 64 entries per word.
    let mut word = 0u64;
    for (idx, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            word |= 1 << (idx % 64);
        }
        if idx % 64 == 63 {
            h.write_u64(word);
            word = 0;
        }
    }
    if n * n % 64 != 0 {
        h.write_u64(word);
    }
    h.finish()
}

/// Builds the communication matrix of `ensemble` under `weights`.
///
/// Topological-discrete mode sets `w[i][j] = g(rank_ij) / gamma_n`; every row
/// then sums to one because each row of the rank table is a permutation.
/// Metric mode sets `w[i][j] = g(|x_i - x_j|) / n` and makes no stochasticity
/// claim.  Normalized kernels belong to the kinetic layer and are rejected.
pub fn communication_matrix(
    ensemble: &AgentEnsemble,
    weights: &WeightFunction,
) -> Result<Topology> {
    let n = ensemble.n_agents();
    let mut rank_table = vec![0; n * n];
    for i in 0..n {
        let ranks = rank_all(ensemble, i);
        rank_table[i * n..(i + 1) * n].copy_from_slice(&ranks);
    }
    let mut matrix = vec![0.0; n * n];
    match weights {
        WeightFunction::TopologicalDiscrete { .. } => {
            let gamma = weights.gamma_n(n)?;
            if gamma <= 0.0 {
                return Err(Error::ZeroNormalizer);
            }
            for i in 0..n {
                for j in 0..n {
                    let g = weights.rank_weight(rank_table[i * n + j], n)?;
                    matrix[i * n + j] = g / gamma;
                }
            }
        }
        WeightFunction::Metric { .. } => {
            for i in 0..n {
                for j in 0..n {
                    let g = weights.metric_weight(ensemble.distance(i, j))?;
                    matrix[i * n + j] = g / n as f64;
                }
            }
        }
        WeightFunction::TopologicalNormalized { .. } => {
            return Err(Error::UnsupportedWeightMode {
                op: "communication_matrix",
                expected: "topological-discrete or metric",
            });
        }
    }
    let hash = fingerprint(n, &rank_table, &matrix);
    Ok(Topology { n, rank_table, weights: matrix, hash })
}
