//! Self-propelled swarm with rank-graded attraction: agents relax onto a
//! preferred speed, push each other apart through a short-range exponential
//! core, and pull together along unit directions with strength set by the
//! neighbor's distance rank rather than the distance itself.
//!
//!   dv_i = (a - b |v_i|^2) v_i
//!        + (1/N) sum_{j != i} (C_R/l_R) e^{-r_ij/l_R} rhat_ij
//!        - (1/N) sum_{j != i} g_A(rank_ij / N) rhat_ij
//!
//! with `rhat_ij = (x_i - x_j)/r_ij` and `g_A(s) = (C_A/l_A) e^{-s/l_A}`.
//! Scaling all positions leaves the attraction term unchanged: only the
//! orderings and the unit directions enter it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{self, SimOptions, SwitchLog, Trajectory};
use crate::ensemble::AgentEnsemble;
use crate::error::{Error, Result};
use crate::math::bisect;
use crate::topology::rank_all;

/// Model constants.  `a`/`b` set the preferred speed `sqrt(a/b)`; the
/// repulsion pair `(c_rep, l_rep)` and attraction pair `(c_att, l_att)`
/// follow the exponential kernel convention `(C/l) exp(-arg/l)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwarmParams {
    pub a: f64,
    pub b: f64,
    pub c_rep: f64,
    pub l_rep: f64,
    pub c_att: f64,
    pub l_att: f64,
}

impl Default for SwarmParams {
    fn default() -> Self {
        SwarmParams { a: 1.0, b: 0.5, c_rep: 1.0, l_rep: 0.5, c_att: 1.0, l_att: 0.1 }
    }
}

impl SwarmParams {
    pub fn validate(&self) -> Result<()> {
        let check_nonneg = |name: &'static str, v: f64| {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite and nonnegative".into(),
                });
            }
            Ok(())
        };
        check_nonneg("a", self.a)?;
        check_nonneg("b", self.b)?;
        check_nonneg("c_rep", self.c_rep)?;
        check_nonneg("c_att", self.c_att)?;
        for (name, v) in [("l_rep", self.l_rep), ("l_att", self.l_att)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "length scale must be finite and positive".into(),
                });
            }
        }
        Ok(())
    }

    /// Rank-graded attraction strength `g_A(s) = (C_A/l_A) exp(-s/l_A)`.
    pub fn g_att(&self, s: f64) -> f64 {
        (self.c_att / self.l_att) * (-s / self.l_att).exp()
    }

    /// Reference pair potential `C_R e^{-r/l_R} - C_A e^{-r/l_A}`; its
    /// repulsive part is the one whose negative gradient drives the model.
    pub fn morse_potential(&self, r: f64) -> f64 {
        self.c_rep * (-r / self.l_rep).exp() - self.c_att * (-r / self.l_att).exp()
    }
}

/// Repulsive force on the agent at `x_i` exerted by one at `x_j`:
/// `(C_R/l_R) e^{-r/l_R} (x_i - x_j)/r`, zero at coincidence.
pub fn repulsion_force(params: &SwarmParams, x_i: &[f64], x_j: &[f64]) -> Vec<f64> {
    let dim = x_i.len();
    let mut out = vec![0.0; dim];
    let mut r2 = 0.0;
    for d in 0..dim {
        let diff = x_i[d] - x_j[d];
        out[d] = diff;
        r2 += diff * diff;
    }
    let r = r2.sqrt();
    if r == 0.0 {
        out.iter_mut().for_each(|x| *x = 0.0);
        return out;
    }
    let mag = (params.c_rep / params.l_rep) * (-r / params.l_rep).exp() / r;
    out.iter_mut().for_each(|x| *x *= mag);
    out
}

fn stage_derivative(
    x: &[f64],
    v: &[f64],
    dim: usize,
    n: usize,
    params: &SwarmParams,
    ranks: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let dx = v.to_vec();
    let mut dv = vec![0.0; n * dim];
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let vi = &v[i * dim..(i + 1) * dim];
        let speed2: f64 = vi.iter().map(|c| c * c).sum();
        let drive = params.a - params.b * speed2;
        for d in 0..dim {
            dv[i * dim + d] = drive * vi[d];
        }
        let xi = &x[i * dim..(i + 1) * dim];
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = &x[j * dim..(j + 1) * dim];
            let mut r2 = 0.0;
            for d in 0..dim {
                let diff = xi[d] - xj[d];
                r2 += diff * diff;
            }
            let r = r2.sqrt();
            if r == 0.0 {
                continue;
            }
            let rep = (params.c_rep / params.l_rep) * (-r / params.l_rep).exp();
            let att = params.g_att(ranks[i * n + j] as f64 / n as f64);
            let mag = (rep - att) * inv_n / r;
            for d in 0..dim {
                dv[i * dim + d] += mag * (xi[d] - xj[d]);
            }
        }
    }
    (dx, dv)
}

fn rank_table(ensemble: &AgentEnsemble) -> Vec<usize> {
    let n = ensemble.n_agents();
    let mut ranks = Vec::with_capacity(n * n);
    for i in 0..n {
        ranks.extend(rank_all(ensemble, i));
    }
    ranks
}

/// Instantaneous derivative with ranks recomputed from the given state.
pub fn rhs_swarm(ensemble: &AgentEnsemble, params: &SwarmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let ranks = rank_table(ensemble);
    Ok(stage_derivative(
        ensemble.positions(),
        ensemble.velocities(),
        ensemble.dim(),
        ensemble.n_agents(),
        params,
        &ranks,
    ))
}

/// RK4 integration with the rank table frozen across each step's stages
/// (distances and directions stay fresh).  The flow has no switching
/// structure to log, so the trajectory carries a single null interval.
pub fn simulate_swarm(
    ensemble0: &AgentEnsemble,
    params: &SwarmParams,
    dt: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    params.validate()?;
    dynamics::validate_grid(dt, t_end)?;
    let dim = ensemble0.dim();
    let n = ensemble0.n_agents();
    let mut state = ensemble0.clone();
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    let sample_every = opts.sample_every.max(1);
    let n_steps = dynamics::steps_for(dt, t_end);
    for k in 0..n_steps {
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        let h = t1 - k as f64 * dt;
        let ranks = rank_table(&state);
        state = rk4_swarm(&state, params, &ranks, dim, n, h);
        if !state.is_finite() {
            return Err(Error::NonFiniteState { t: t1 });
        }
        if (k + 1) % sample_every == 0 || k + 1 == n_steps {
            times.push(t1);
            states.push(state.clone());
        }
    }
    let switch_log = SwitchLog::build(Vec::new(), 0, t_end);
    Ok(Trajectory { times, states, switch_log })
}

fn rk4_swarm(
    state: &AgentEnsemble,
    params: &SwarmParams,
    ranks: &[usize],
    dim: usize,
    n: usize,
    h: f64,
) -> AgentEnsemble {
    let x0 = state.positions();
    let v0 = state.velocities();
    let len = x0.len();

    let (k1x, k1v) = stage_derivative(x0, v0, dim, n, params, ranks);
    let x1: Vec<f64> = (0..len).map(|i| x0[i] + 0.5 * h * k1x[i]).collect();
    let v1: Vec<f64> = (0..len).map(|i| v0[i] + 0.5 * h * k1v[i]).collect();

    let (k2x, k2v) = stage_derivative(&x1, &v1, dim, n, params, ranks);
    let x2: Vec<f64> = (0..len).map(|i| x0[i] + 0.5 * h * k2x[i]).collect();
    let v2: Vec<f64> = (0..len).map(|i| v0[i] + 0.5 * h * k2v[i]).collect();

    let (k3x, k3v) = stage_derivative(&x2, &v2, dim, n, params, ranks);
    let x3: Vec<f64> = (0..len).map(|i| x0[i] + h * k3x[i]).collect();
    let v3: Vec<f64> = (0..len).map(|i| v0[i] + h * k3v[i]).collect();

    let (k4x, k4v) = stage_derivative(&x3, &v3, dim, n, params, ranks);

    let mut next = state.clone();
    {
        let px = next.positions_mut();
        for i in 0..len {
            px[i] = x0[i] + h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        }
    }
    {
        let pv = next.velocities_mut();
        for i in 0..len {
            pv[i] = v0[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
    next
}

/// `n` agents scattered uniformly over the unit square, all at rest.
pub fn unit_box_ensemble(n: usize, seed: u64) -> Result<AgentEnsemble> {
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.0..1.0)).collect();
    AgentEnsemble::new(2, positions, vec![0.0; 2 * n])
}

/// Pair distance at which repulsion balances the rank-1 attraction for two
/// agents (`g_A(1/2)` each way).  Solved by bisection on the radial net
/// force of a resting pair; requires a repulsion-dominated core
/// (`C_R/l_R > g_A(1/2)`) and nonzero attraction.
pub fn equilibrium_separation(params: &SwarmParams) -> Result<f64> {
    params.validate()?;
    let g_half = params.g_att(0.5);
    let core = params.c_rep / params.l_rep;
    if !(g_half > 0.0) || core <= g_half {
        return Err(Error::InvalidParameter {
            name: "params",
            reason: "no crossing: repulsive core must exceed the rank-1 attraction".into(),
        });
    }
    let radial = |r: f64| -> Result<f64> {
        let pair = AgentEnsemble::new(2, vec![0.0, 0.0, r, 0.0], vec![0.0; 4])?;
        let (_, dv) = rhs_swarm(&pair, params)?;
        Ok(dv[2])
    };
    // Expand the bracket until the net force turns attractive.
    let lo = 1e-12;
    let mut hi = params.l_rep;
    for _ in 0..200 {
        if radial(hi)? < 0.0 {
            break;
        }
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::BracketFailure { lo, hi });
        }
    }
    if !(radial(lo)? > 0.0 && radial(hi)? < 0.0) {
        return Err(Error::BracketFailure { lo, hi });
    }
    // Rooting through the full right-hand side keeps the answer tied to the
    // simulated model rather than to a separate force formula.
    bisect(
        |r| {
            let pair = AgentEnsemble::new(2, vec![0.0, 0.0, r, 0.0], vec![0.0; 4])
                .expect("pair state is finite");
            let (_, dv) = rhs_swarm(&pair, params).expect("validated parameters");
            dv[2]
        },
        lo,
        hi,
        1e-12,
    )
}

/// Per-sample order parameters of a planar swarm trajectory.
#[derive(Clone, Debug)]
pub struct PatternSeries {
    pub times: Vec<f64>,
    /// `|sum v_i| / sum |v_i|`, 0 when everything is at rest.
    pub polarization: Vec<f64>,
    /// Scalar angular momentum `sum (x_i - x_c) x v_i` about the position
    /// centroid.
    pub angular_momentum: Vec<f64>,
    /// Single-linkage component count at the given cutoff.
    pub cluster_count: Vec<usize>,
}

/// Computes the planar order parameters for every sampled state.
pub fn pattern_metrics(traj: &Trajectory, cutoff: f64) -> Result<PatternSeries> {
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::InvalidParameter {
            name: "cutoff",
            reason: "cluster cutoff must be positive and finite".into(),
        });
    }
    let mut polarization = Vec::with_capacity(traj.states.len());
    let mut angular_momentum = Vec::with_capacity(traj.states.len());
    let mut cluster_count = Vec::with_capacity(traj.states.len());
    for state in &traj.states {
        if state.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: state.dim() });
        }
        let n = state.n_agents();
        let mut vx = 0.0;
        let mut vy = 0.0;
        let mut speed_sum = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let v = state.velocity(i);
            vx += v[0];
            vy += v[1];
            speed_sum += (v[0] * v[0] + v[1] * v[1]).sqrt();
            let x = state.position(i);
            cx += x[0];
            cy += x[1];
        }
        cx /= n as f64;
        cy /= n as f64;
        let pol = if speed_sum > 0.0 { (vx * vx + vy * vy).sqrt() / speed_sum } else { 0.0 };
        polarization.push(pol);
        let mut ell = 0.0;
        for i in 0..n {
            let x = state.position(i);
            let v = state.velocity(i);
            ell += (x[0] - cx) * v[1] - (x[1] - cy) * v[0];
        }
        angular_momentum.push(ell);
        cluster_count.push(single_linkage_count(state, cutoff));
    }
    Ok(PatternSeries {
        times: traj.times.clone(),
        polarization,
        angular_momentum,
        cluster_count,
    })
}

fn single_linkage_count(state: &AgentEnsemble, cutoff: f64) -> usize {
    let n = state.n_agents();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if state.distance(i, j) <= cutoff {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}
