//! Connectivity analysis of the communication digraph and consensus
//! prediction from the left null vector of its Laplacian.
//!
//! A directed edge `i -> j` exists when agent `i` gives `j` positive weight.
//! For a row-stochastic weight matrix `W` the flow `dv/dt = (W - I) v`
//! preserves `xi . v` for any row vector `xi` with `xi (I - W) = 0`; when the
//! digraph is strongly connected that vector is unique up to scale, strictly
//! positive, and determines the consensus velocity.

use serde::Serialize;

use crate::ensemble::AgentEnsemble;
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Partition into strongly connected components plus connectivity flags.
#[derive(Clone, Debug, Serialize)]
pub struct ConnectivityReport {
    /// Components in reverse topological order of the condensation: every
    /// edge leaving a component points to an earlier entry of the list.
    pub scc_list: Vec<Vec<usize>>,
    pub is_strong: bool,
    /// Connectivity of the undirected shadow graph.
    pub is_weak: bool,
}

/// Left null vector of `I - W`, normalized to unit sum.
#[derive(Clone, Debug, Serialize)]
pub struct ConsensusCertificate {
    pub xi: Vec<f64>,
    /// Dimension of the left kernel: the number of closed communicating
    /// classes (components without outgoing edges).
    pub kernel_dim: usize,
    /// True when the digraph is strongly connected and `xi` is strictly
    /// positive; only then is the consensus prediction meaningful.
    pub valid: bool,
}

struct TarjanState<'a> {
    topo: &'a Topology,
    index: Vec<Option<usize>>,
    lowlink: Vec<usize>,
    on_stack: Vec<bool>,
    stack: Vec<usize>,
    next_index: usize,
    components: Vec<Vec<usize>>,
}

impl<'a> TarjanState<'a> {
    fn strongconnect(&mut self, v: usize) {
        self.index[v] = Some(self.next_index);
        self.lowlink[v] = self.next_index;
        self.next_index += 1;
        self.stack.push(v);
        self.on_stack[v] = true;

        for w in 0..self.topo.n() {
            if !self.topo.has_edge(v, w) {
                continue;
            }
            match self.index[w] {
                None => {
                    self.strongconnect(w);
                    self.lowlink[v] = self.lowlink[v].min(self.lowlink[w]);
                }
                Some(idx) => {
                    if self.on_stack[w] {
                        self.lowlink[v] = self.lowlink[v].min(idx);
                    }
                }
            }
        }

        if self.lowlink[v] == self.index[v].unwrap() {
            let mut component = Vec::new();
            loop {
                let w = self.stack.pop().unwrap();
                self.on_stack[w] = false;
                component.push(w);
                if w == v {
                    break;
                }
            }
            component.sort_unstable();
            self.components.push(component);
        }
    }
}

/// Tarjan's algorithm; components come out in reverse topological order,
/// independent of weight magnitudes (only the zero/nonzero pattern counts).
pub fn strongly_connected_components(topo: &Topology) -> ConnectivityReport {
    let n = topo.n();
    let mut state = TarjanState {
        topo,
        index: vec![None; n],
        lowlink: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next_index: 0,
        components: Vec::new(),
    };
    for v in 0..n {
        if state.index[v].is_none() {
            state.strongconnect(v);
        }
    }
    let components = state.components;

    // Weak connectivity via union-find on the undirected shadow.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..n {
            if topo.has_edge(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let root0 = find(&mut parent, 0);
    let is_weak = (0..n).all(|i| find(&mut parent, i) == root0);

    ConnectivityReport {
        is_strong: components.len() == 1,
        is_weak,
        scc_list: components,
    }
}

fn component_of(scc_list: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut comp = vec![0; n];
    for (c, members) in scc_list.iter().enumerate() {
        for &m in members {
            comp[m] = c;
        }
    }
    comp
}

/// Number of components with no outgoing edges; equals the dimension of the
/// left kernel of `I - W` for row-stochastic `W`.
fn closed_class_count(topo: &Topology, scc_list: &[Vec<usize>]) -> usize {
    let comp = component_of(scc_list, topo.n());
    let mut closed = vec![true; scc_list.len()];
    for i in 0..topo.n() {
        for j in 0..topo.n() {
            if topo.has_edge(i, j) && comp[i] != comp[j] {
                closed[comp[i]] = false;
            }
        }
    }
    closed.iter().filter(|c| **c).count()
}

/// Max-norm of the residual row vector `xi (I - W)`.
pub fn left_residual(topo: &Topology, xi: &[f64]) -> f64 {
    let n = topo.n();
    let mut worst = 0.0_f64;
    for j in 0..n {
        let mut acc = xi[j];
        for i in 0..n {
            acc -= xi[i] * topo.weight(i, j);
        }
        worst = worst.max(acc.abs());
    }
    worst
}

/// LU solve with partial pivoting; `a` is row-major `n x n`, consumed.
/// Returns `None` when a pivot degenerates.
fn lu_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-13 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Solves `xi (I - W) = 0`, `sum xi = 1` densely by replacing the last
/// equation of the transposed system with the normalization row.
fn dense_left_kernel(topo: &Topology) -> Option<Vec<f64>> {
    let n = topo.n();
    let l = topo.laplacian();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = l[j * n + i]; // transpose
        }
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    lu_solve(a, b)
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 100_000;

/// Computes the left null vector of `I - W` by damped power iteration on the
/// transpose (the `(I + W^T)/2` shift keeps periodic topologies convergent
/// without moving the fixed point), falling back to a dense solve when the
/// iteration stagnates or leaves a residual above `1e-13 * n`.
///
/// The certificate is marked invalid when the digraph is not strongly
/// connected; `xi` is then still a unit-sum nonnegative stationary vector,
/// but it is not unique whenever `kernel_dim > 1`.
pub fn left_null_vector(topo: &Topology) -> ConsensusCertificate {
    let n = topo.n();
    let report = strongly_connected_components(topo);
    let kernel_dim = closed_class_count(topo, &report.scc_list);

    let mut xi = vec![1.0 / n as f64; n];
    let mut converged = false;
    for _ in 0..POWER_MAX_ITERS {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let row = topo.weight_row(i);
            let x = xi[i];
            for j in 0..n {
                next[j] += x * row[j];
            }
        }
        let mut delta = 0.0_f64;
        for j in 0..n {
            next[j] = 0.5 * (next[j] + xi[j]);
        }
        let sum: f64 = next.iter().sum();
        if sum > 0.0 {
            for v in next.iter_mut() {
                *v /= sum;
            }
        }
        for j in 0..n {
            delta = delta.max((next[j] - xi[j]).abs());
        }
        xi = next;
        if delta <= POWER_TOL {
            converged = true;
            break;
        }
    }

    if !converged || left_residual(topo, &xi) > 1e-13 * n as f64 {
        if let Some(mut dense) = dense_left_kernel(topo) {
            // Tiny negative round-off is clamped; anything larger means the
            // solve hit a degenerate system and the iterate is kept instead.
            let fixable = dense.iter().all(|v| *v >= -1e-10);
            if fixable {
                for v in dense.iter_mut() {
                    *v = v.max(0.0);
                }
                let sum: f64 = dense.iter().sum();
                if sum > 0.0 {
                    for v in dense.iter_mut() {
                        *v /= sum;
                    }
                    if left_residual(topo, &dense) < left_residual(topo, &xi) {
                        xi = dense;
                    }
                }
            }
        }
    }

    let strictly_positive = xi.iter().all(|v| *v > 0.0);
    ConsensusCertificate {
        valid: report.is_strong && strictly_positive && kernel_dim == 1,
        kernel_dim,
        xi,
    }
}

/// Consensus velocity `sum_i xi_i v_i` predicted by a valid certificate.
pub fn predict_consensus(
    cert: &ConsensusCertificate,
    ensemble: &AgentEnsemble,
) -> Result<Vec<f64>> {
    if !cert.valid {
        return Err(Error::InvalidCertificate { kernel_dim: cert.kernel_dim });
    }
    if cert.xi.len() != ensemble.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.n_agents(),
            got: cert.xi.len(),
        });
    }
    let dim = ensemble.dim();
    let mut v = vec![0.0; dim];
    for i in 0..ensemble.n_agents() {
        for (k, vi) in ensemble.velocity(i).iter().enumerate() {
            v[k] += cert.xi[i] * vi;
        }
    }
    Ok(v)
}
