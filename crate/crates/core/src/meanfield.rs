//! Measure-valued formulation: weighted particle clouds, the mollified rank
//! field they generate, a self-consistent particle integrator, and the
//! transport distance used to compare clouds.
//!
//! The discrete rank of an agent pair generalizes to the mass a measure
//! places inside the ball through the target point.  A sharp indicator makes
//! that mass jump as points cross the shell, so the indicator is replaced by
//! a ramp of width `epsilon`: full weight for points strictly inside, zero
//! beyond the shell by `epsilon`, linear in between.  As `epsilon -> 0` the
//! smoothed separation recovers the (tie-inclusive) count fraction.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::dynamics::{self, SimOptions, SwitchLog, Trajectory};
use crate::ensemble::AgentEnsemble;
use crate::error::{Error, Result};
use crate::math::{dist, KahanSum};
use crate::weights::WeightFunction;

const MASS_SUM_TOL: f64 = 1e-12;

/// Weighted point cloud in position-velocity space.  Masses are strictly
/// positive and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    masses: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        masses: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "dimension must be at least 1".into(),
            });
        }
        if masses.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if positions.len() != masses.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: masses.len() * dim,
                got: positions.len(),
            });
        }
        if velocities.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                got: velocities.len(),
            });
        }
        if positions.iter().chain(&velocities).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "empirical measure state" });
        }
        let mut total = KahanSum::default();
        for &m in &masses {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "masses",
                    reason: "every mass must be positive and finite".into(),
                });
            }
            total.add(m);
        }
        if (total.value() - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InvalidParameter {
                name: "masses",
                reason: format!("masses sum to {}, expected 1", total.value()),
            });
        }
        Ok(EmpiricalMeasure { dim, positions, velocities, masses })
    }

    /// Uniform-mass cloud at the ensemble's points.
    pub fn from_ensemble(ensemble: &AgentEnsemble) -> Self {
        let n = ensemble.n_agents();
        EmpiricalMeasure {
            dim: ensemble.dim(),
            positions: ensemble.positions().to_vec(),
            velocities: ensemble.velocities().to_vec(),
            masses: vec![1.0 / n as f64; n],
        }
    }

    /// Same masses, state replaced by `ensemble` (point counts must agree).
    pub fn with_state(&self, ensemble: &AgentEnsemble) -> Result<Self> {
        if ensemble.n_agents() != self.n_points() || ensemble.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.n_points() * self.dim,
                got: ensemble.n_agents() * ensemble.dim(),
            });
        }
        Ok(EmpiricalMeasure {
            dim: self.dim,
            positions: ensemble.positions().to_vec(),
            velocities: ensemble.velocities().to_vec(),
            masses: self.masses.clone(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.masses.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn velocity(&self, k: usize) -> &[f64] {
        &self.velocities[k * self.dim..(k + 1) * self.dim]
    }

    /// Drops the masses; used to hand the point state to the integrators.
    pub fn to_ensemble(&self) -> AgentEnsemble {
        AgentEnsemble::new(self.dim, self.positions.clone(), self.velocities.clone())
            .expect("measure state is validated on construction")
    }

    /// Splits every point into `k` coincident copies of mass `m/k`.  The
    /// cloud represents the same measure, so any transport distance to a
    /// third cloud is unchanged; useful for comparing clouds of different
    /// sizes with the equal-count matcher.
    pub fn subdivide(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "subdivision factor must be at least 1".into(),
            });
        }
        let n = self.n_points();
        let mut positions = Vec::with_capacity(n * k * self.dim);
        let mut velocities = Vec::with_capacity(n * k * self.dim);
        let mut masses = Vec::with_capacity(n * k);
        for i in 0..n {
            for _ in 0..k {
                positions.extend_from_slice(self.position(i));
                velocities.extend_from_slice(self.velocity(i));
                masses.push(self.masses[i] / k as f64);
            }
        }
        EmpiricalMeasure::new(self.dim, positions, velocities, masses)
    }

    /// Largest pairwise distance between support points.
    pub fn spatial_diameter(&self) -> f64 {
        let n = self.n_points();
        let mut best = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(dist(self.position(i), self.position(j)));
            }
        }
        best
    }
}

/// Ramp cutoff of width `epsilon`: 0 at or below `-epsilon`, linear up to 1
/// at 0, and 1 beyond.  Lipschitz with constant `1/epsilon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    epsilon: f64,
}

impl Mollifier {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "mollifier width must be positive and finite".into(),
            });
        }
        Ok(Mollifier { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s >= 0.0 {
            1.0
        } else if s <= -self.epsilon {
            0.0
        } else {
            s / self.epsilon + 1.0
        }
    }

    /// Width tied to the cloud scale: 5% of the spatial diameter, with a
    /// unit fallback for single-point (zero-diameter) clouds.
    pub fn default_for(measure: &EmpiricalMeasure) -> Self {
        let diam = measure.spatial_diameter();
        let epsilon = if diam > 0.0 { 0.05 * diam } else { 1.0 };
        Mollifier { epsilon }
    }
}

/// Mass the measure places inside the sphere around `x` through `y`,
/// counted with the ramp: points up to `|y - x|` fully, points in the shell
/// `(|y - x|, |y - x| + epsilon)` linearly.  Always in `[0, 1]`.
pub fn smoothed_separation(
    measure: &EmpiricalMeasure,
    x: &[f64],
    y: &[f64],
    moll: &Mollifier,
) -> Result<f64> {
    if x.len() != measure.dim || y.len() != measure.dim {
        return Err(Error::DimensionMismatch {
            expected: measure.dim,
            got: if x.len() != measure.dim { x.len() } else { y.len() },
        });
    }
    let r_y = dist(x, y);
    let mut acc = KahanSum::default();
    for k in 0..measure.n_points() {
        let r_k = dist(x, measure.position(k));
        acc.add(measure.masses[k] * moll.eval(r_y - r_k));
    }
    Ok(acc.value().clamp(0.0, 1.0))
}

/// Alignment field generated by the cloud at phase point `(x, v)`:
/// the mass-weighted average of `g(separation) * (w_k - v)` divided by the
/// kernel's unit-interval integral.  Needs a normalized-kernel weight mode.
pub fn kinetic_field(
    measure: &EmpiricalMeasure,
    weights: &WeightFunction,
    moll: &Mollifier,
    x: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    let kernel = match weights {
        WeightFunction::TopologicalNormalized { kernel } => kernel,
        _ => {
            return Err(Error::UnsupportedWeightMode {
                op: "kinetic_field",
                expected: "normalized-kernel",
            })
        }
    };
    if v.len() != measure.dim {
        return Err(Error::DimensionMismatch { expected: measure.dim, got: v.len() });
    }
    let gamma = kernel.integral();
    if !(gamma > 0.0) {
        return Err(Error::ZeroNormalizer);
    }
    let dim = measure.dim;
    let mut field = vec![0.0; dim];
    for k in 0..measure.n_points() {
        let alpha = smoothed_separation(measure, x, measure.position(k), moll)?;
        let coeff = measure.masses[k] * kernel.eval(alpha);
        let w_k = measure.velocity(k);
        for d in 0..dim {
            field[d] += coeff * (w_k[d] - v[d]);
        }
    }
    for f in &mut field {
        *f /= gamma;
    }
    Ok(field)
}

/// Field at every support point of the cloud itself.  Equivalent to calling
/// `kinetic_field` at each `(x_i, v_i)` but grouped so each point sorts its
/// distance list once: the ramp turns the separation into a prefix mass plus
/// a linear correction over the shell band, both read off prefix sums.
fn field_all(
    measure: &EmpiricalMeasure,
    weights: &WeightFunction,
    moll: &Mollifier,
) -> Result<Vec<f64>> {
    let kernel = match weights {
        WeightFunction::TopologicalNormalized { kernel } => kernel,
        _ => {
            return Err(Error::UnsupportedWeightMode {
                op: "kinetic_field",
                expected: "normalized-kernel",
            })
        }
    };
    let gamma = kernel.integral();
    if !(gamma > 0.0) {
        return Err(Error::ZeroNormalizer);
    }
    let n = measure.n_points();
    let dim = measure.dim;
    let eps = moll.epsilon;
    let mut out = vec![0.0; n * dim];
    let mut radii = vec![0.0_f64; n];
    let mut sorted = vec![0.0_f64; n];
    let mut pref_m = vec![0.0_f64; n + 1];
    let mut pref_mr = vec![0.0_f64; n + 1];
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let x_i = measure.position(i);
        for k in 0..n {
            radii[k] = dist(x_i, measure.position(k));
        }
        order.sort_unstable_by(|&a, &b| radii[a].total_cmp(&radii[b]));
        for (s, &k) in order.iter().enumerate() {
            sorted[s] = radii[k];
            pref_m[s + 1] = pref_m[s] + measure.masses[k];
            pref_mr[s + 1] = pref_mr[s] + measure.masses[k] * radii[k];
        }
        let v_i = measure.velocity(i);
        let mut acc = vec![0.0_f64; dim];
        for k in 0..n {
            let r_k = radii[k];
            // Points with r <= r_k count fully; the band (r_k, r_k + eps)
            // contributes 1 - (r - r_k)/eps each.
            let full = sorted.partition_point(|&r| r <= r_k);
            let band_end = sorted.partition_point(|&r| r < r_k + eps);
            let band_m = pref_m[band_end] - pref_m[full];
            let band_mr = pref_mr[band_end] - pref_mr[full];
            let alpha =
                (pref_m[full] + band_m * (1.0 + r_k / eps) - band_mr / eps).clamp(0.0, 1.0);
            let coeff = measure.masses[k] * kernel.eval(alpha);
            let w_k = measure.velocity(k);
            for d in 0..dim {
                acc[d] += coeff * (w_k[d] - v_i[d]);
            }
        }
        for d in 0..dim {
            out[i * dim + d] = acc[d] / gamma;
        }
    }
    Ok(out)
}

/// Integrates the self-consistent particle system `dx_i = v_i`,
/// `dv_i = field(x_i, v_i)` where the field is generated by the moving cloud
/// itself.  Masses ride along unchanged; the flow is smooth in the state, so
/// the returned log holds a single interval with a null fingerprint.
pub fn simulate_meanfield_particles(
    measure0: &EmpiricalMeasure,
    weights: &WeightFunction,
    moll: &Mollifier,
    dt: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    dynamics::validate_grid(dt, t_end)?;
    let mut measure = measure0.clone();
    let mut times = vec![0.0];
    let mut states = vec![measure.to_ensemble()];
    let sample_every = opts.sample_every.max(1);
    let n_steps = dynamics::steps_for(dt, t_end);
    for k in 0..n_steps {
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        let h = t1 - k as f64 * dt;
        measure = rk4_selfconsistent(&measure, weights, moll, h)?;
        if measure.positions.iter().chain(&measure.velocities).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { t: t1 });
        }
        if (k + 1) % sample_every == 0 || k + 1 == n_steps {
            times.push(t1);
            states.push(measure.to_ensemble());
        }
    }
    let switch_log = SwitchLog::build(Vec::new(), 0, t_end);
    Ok(Trajectory { times, states, switch_log })
}

fn rk4_selfconsistent(
    measure: &EmpiricalMeasure,
    weights: &WeightFunction,
    moll: &Mollifier,
    h: f64,
) -> Result<EmpiricalMeasure> {
    let len = measure.positions.len();
    let stage = |px: &[f64], pv: &[f64]| -> EmpiricalMeasure {
        EmpiricalMeasure {
            dim: measure.dim,
            positions: px.to_vec(),
            velocities: pv.to_vec(),
            masses: measure.masses.clone(),
        }
    };
    let x0 = &measure.positions;
    let v0 = &measure.velocities;

    let k1v = field_all(measure, weights, moll)?;
    let x1: Vec<f64> = (0..len).map(|i| x0[i] + 0.5 * h * v0[i]).collect();
    let v1: Vec<f64> = (0..len).map(|i| v0[i] + 0.5 * h * k1v[i]).collect();

    let k2v = field_all(&stage(&x1, &v1), weights, moll)?;
    let x2: Vec<f64> = (0..len).map(|i| x0[i] + 0.5 * h * v1[i]).collect();
    let v2: Vec<f64> = (0..len).map(|i| v0[i] + 0.5 * h * k2v[i]).collect();

    let k3v = field_all(&stage(&x2, &v2), weights, moll)?;
    let x3: Vec<f64> = (0..len).map(|i| x0[i] + h * v2[i]).collect();
    let v3: Vec<f64> = (0..len).map(|i| v0[i] + h * k3v[i]).collect();

    let k4v = field_all(&stage(&x3, &v3), weights, moll)?;

    let positions: Vec<f64> = (0..len)
        .map(|i| x0[i] + h / 6.0 * (v0[i] + 2.0 * v1[i] + 2.0 * v2[i] + v3[i]))
        .collect();
    let velocities: Vec<f64> = (0..len)
        .map(|i| v0[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]))
        .collect();
    Ok(EmpiricalMeasure {
        dim: measure.dim,
        positions,
        velocities,
        masses: measure.masses.clone(),
    })
}

/// First transport distance between two equal-count uniform-mass clouds
/// under the phase-space metric `|x - x'| + |v - v'|`.  Exact: solved as an
/// assignment problem (shortest augmenting paths with potentials), with a
/// sorted matching shortcut for 1-D clouds whose velocities are internally
/// constant.  Clouds of unequal counts must be `subdivide`d to a common
/// count first.
pub fn wasserstein1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, got: b.dim });
    }
    let n = a.n_points();
    if n != b.n_points() {
        return Err(Error::UnequalClouds { left: n, right: b.n_points() });
    }
    let uniform = 1.0 / n as f64;
    for &m in a.masses.iter().chain(&b.masses) {
        if (m - uniform).abs() > MASS_SUM_TOL {
            return Err(Error::UnequalClouds { left: n, right: b.n_points() });
        }
    }
    if a.dim == 1 {
        let va = a.velocities[0];
        let vb = b.velocities[0];
        if a.velocities.iter().all(|&v| v == va) && b.velocities.iter().all(|&v| v == vb) {
            // Constant velocities add a flat |va - vb| to every pair cost,
            // and 1-D position transport is optimal on sorted order.
            let mut xa = a.positions.clone();
            let mut xb = b.positions.clone();
            xa.sort_unstable_by(f64::total_cmp);
            xb.sort_unstable_by(f64::total_cmp);
            let mut acc = KahanSum::default();
            for (p, q) in xa.iter().zip(&xb) {
                acc.add((p - q).abs());
            }
            return Ok(acc.value() / n as f64 + (va - vb).abs());
        }
    }
    let mut cost = vec![vec![0.0_f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            cost[i][j] = dist(a.position(i), b.position(j)) + dist(a.velocity(i), b.velocity(j));
        }
    }
    Ok(assignment_cost(&cost) / n as f64)
}

/// Minimum-cost perfect matching cost for a square nonnegative matrix.
/// Shortest augmenting paths with row/column potentials; column `n` is the
/// virtual root of each augmenting search.
fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut u = vec![0.0_f64; n];
    let mut v = vec![0.0_f64; n + 1];
    let mut matched = vec![usize::MAX; n + 1];
    let mut min_to = vec![0.0_f64; n + 1];
    let mut prev = vec![n; n + 1];
    let mut used = vec![false; n + 1];
    for i in 0..n {
        matched[n] = i;
        let mut j0 = n;
        min_to.iter_mut().for_each(|x| *x = f64::INFINITY);
        prev.iter_mut().for_each(|x| *x = n);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0][j] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    prev[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == usize::MAX {
                break;
            }
        }
        while j0 != n {
            let j_prev = prev[j0];
            matched[j0] = matched[j_prev];
            j0 = j_prev;
        }
    }
    let mut total = KahanSum::default();
    for j in 0..n {
        total.add(cost[matched[j]][j]);
    }
    total.value()
}

/// Draws `n` uniform-mass points from `sampler`, which receives the shared
/// generator once per point and returns one (position, velocity) pair of
/// length `dim` each.  A single stream seeds all draws, so the first `n`
/// points of a larger sample reproduce the smaller sample exactly.
pub fn sample_measure<F>(n: usize, dim: usize, seed: u64, mut sampler: F) -> Result<EmpiricalMeasure>
where
    F: FnMut(&mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>),
{
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n * dim);
    let mut velocities = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let (x, v) = sampler(&mut rng);
        if x.len() != dim || v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: if x.len() != dim { x.len() } else { v.len() },
            });
        }
        positions.extend_from_slice(&x);
        velocities.extend_from_slice(&v);
    }
    EmpiricalMeasure::new(dim, positions, velocities, vec![1.0 / n as f64; n])
}
