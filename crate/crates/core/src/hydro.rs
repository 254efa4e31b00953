//! One-dimensional parcel discretization of the continuum limit: finitely
//! many mass parcels carry the density, and each parcel relaxes toward a
//! rank-weighted local average of the parcel velocities.
//!
//! The discrete rank generalizes to the mass strictly closer to the
//! observer than the target parcel (`mass_rank_separation`), so the
//! relaxation reads `dU_i = ubar_i - U_i` with
//! `ubar_i = (1/gamma) sum_j g(msr_ij) m_j U_j`.  Row sums of the weights
//! are Riemann sums of the kernel integral, so they miss 1 by at most the
//! kernel's Lipschitz constant times the largest parcel mass; the tests pin
//! that defect down.

use crate::dynamics::{self, SimOptions};
use crate::error::{Error, Result};
use crate::math::KahanSum;
use crate::weights::WeightFunction;

const MASS_SUM_TOL: f64 = 1e-12;

/// Mass parcels on the line: strictly positive masses summing to one, with
/// a position and a velocity per parcel.
#[derive(Clone, Debug, PartialEq)]
pub struct HydroState {
    masses: Vec<f64>,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

impl HydroState {
    pub fn new(masses: Vec<f64>, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if positions.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: masses.len(),
                got: positions.len(),
            });
        }
        if velocities.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: masses.len(),
                got: velocities.len(),
            });
        }
        if positions.iter().chain(&velocities).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "hydro parcel state" });
        }
        let mut total = KahanSum::default();
        for &m in &masses {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "masses",
                    reason: "every parcel mass must be positive and finite".into(),
                });
            }
            total.add(m);
        }
        if (total.value() - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InvalidParameter {
                name: "masses",
                reason: format!("parcel masses sum to {}, expected 1", total.value()),
            });
        }
        Ok(HydroState { masses, positions, velocities })
    }

    /// Equal-mass parcels.
    pub fn uniform(positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        HydroState::new(vec![1.0 / n as f64; n], positions, velocities)
    }

    pub fn n_parcels(&self) -> usize {
        self.masses.len()
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

    /// Total momentum `sum m_i U_i`.
    pub fn momentum(&self) -> f64 {
        let mut acc = KahanSum::default();
        for (m, u) in self.masses.iter().zip(&self.velocities) {
            acc.add(m * u);
        }
        acc.value()
    }

    pub fn velocity_diameter(&self) -> f64 {
        spread(&self.velocities)
    }

    pub fn position_diameter(&self) -> f64 {
        spread(&self.positions)
    }
}

fn spread(xs: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    hi - lo
}

/// Indices sorted by distance from parcel `i`, the observer itself first
/// among ties, then by index.  Mirrors the discrete rank order.
fn order_from(state: &HydroState, i: usize) -> Vec<usize> {
    let x_i = state.positions[i];
    let mut order: Vec<usize> = (0..state.n_parcels()).collect();
    order.sort_by(|&a, &b| {
        let da = (state.positions[a] - x_i).abs();
        let db = (state.positions[b] - x_i).abs();
        (da, a != i, a).partial_cmp(&(db, b != i, b)).expect("positions are finite")
    });
    order
}

/// Mass strictly ahead of parcel `j` in parcel `i`'s distance order: 0 for
/// the observer itself, `1 - m_j` for the farthest parcel.  With equal
/// masses this is exactly (discrete rank)/n.
pub fn mass_rank_separation(state: &HydroState, i: usize, j: usize) -> f64 {
    let order = order_from(state, i);
    let mut acc = KahanSum::default();
    for &k in &order {
        if k == j {
            break;
        }
        acc.add(state.masses[k]);
    }
    acc.value()
}

fn kernel_of(weights: &WeightFunction) -> Result<(&crate::weights::NormalizedKernel, f64)> {
    match weights {
        WeightFunction::TopologicalNormalized { kernel } => {
            let gamma = kernel.integral();
            if !(gamma > 0.0) {
                return Err(Error::ZeroNormalizer);
            }
            Ok((kernel, gamma))
        }
        _ => Err(Error::UnsupportedWeightMode {
            op: "local_average",
            expected: "normalized-kernel",
        }),
    }
}

/// Row-stochastic-up-to-defect weight table `w_ij = g(msr_ij) m_j / gamma`.
fn weight_table(state: &HydroState, weights: &WeightFunction) -> Result<Vec<f64>> {
    let (kernel, gamma) = kernel_of(weights)?;
    let n = state.n_parcels();
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        let order = order_from(state, i);
        let mut before = KahanSum::default();
        for &j in &order {
            table[i * n + j] = kernel.eval(before.value()) * state.masses[j] / gamma;
            before.add(state.masses[j]);
        }
    }
    Ok(table)
}

/// Rank-weighted local velocity average
/// `ubar_i = (1/gamma) sum_j g(msr_ij) m_j U_j`.
pub fn local_average(state: &HydroState, weights: &WeightFunction) -> Result<Vec<f64>> {
    let table = weight_table(state, weights)?;
    Ok(apply_table(&table, &state.velocities))
}

fn apply_table(table: &[f64], u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = &table[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(u) {
            acc += w * v;
        }
        out[i] = acc;
    }
    out
}

/// Sampled parcel trajectory.
#[derive(Clone, Debug)]
pub struct HydroTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<HydroState>,
}

impl HydroTrajectory {
    pub fn final_state(&self) -> &HydroState {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Integrates `dX_i = U_i`, `dU_i = ubar_i - U_i` by RK4 with the weight
/// table rebuilt from the positions once per step and frozen across the
/// stages.  Masses never change.
pub fn simulate_hydro(
    state0: &HydroState,
    weights: &WeightFunction,
    dt: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<HydroTrajectory> {
    dynamics::validate_grid(dt, t_end)?;
    kernel_of(weights)?;
    let mut state = state0.clone();
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    let sample_every = opts.sample_every.max(1);
    let n_steps = dynamics::steps_for(dt, t_end);
    for k in 0..n_steps {
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        let h = t1 - k as f64 * dt;
        let table = weight_table(&state, weights)?;
        state = rk4_hydro(&state, &table, h);
        if state.positions.iter().chain(&state.velocities).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { t: t1 });
        }
        if (k + 1) % sample_every == 0 || k + 1 == n_steps {
            times.push(t1);
            states.push(state.clone());
        }
    }
    Ok(HydroTrajectory { times, states })
}

fn rk4_hydro(state: &HydroState, table: &[f64], h: f64) -> HydroState {
    let n = state.n_parcels();
    let u0 = &state.velocities;
    let relax = |u: &[f64]| -> Vec<f64> {
        let mut out = apply_table(table, u);
        for i in 0..n {
            out[i] -= u[i];
        }
        out
    };

    let k1 = relax(u0);
    let u1: Vec<f64> = (0..n).map(|i| u0[i] + 0.5 * h * k1[i]).collect();
    let k2 = relax(&u1);
    let u2: Vec<f64> = (0..n).map(|i| u0[i] + 0.5 * h * k2[i]).collect();
    let k3 = relax(&u2);
    let u3: Vec<f64> = (0..n).map(|i| u0[i] + h * k3[i]).collect();
    let k4 = relax(&u3);

    let positions: Vec<f64> = (0..n)
        .map(|i| state.positions[i] + h / 6.0 * (u0[i] + 2.0 * u1[i] + 2.0 * u2[i] + u3[i]))
        .collect();
    let velocities: Vec<f64> =
        (0..n).map(|i| u0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    HydroState { masses: state.masses.clone(), positions, velocities }
}

/// Result of testing the velocity spread against the exponential envelope
/// `1.05 * d_u(0) * exp(-g0^2 t)`.
#[derive(Clone, Copy, Debug)]
pub struct DecayCheck {
    pub ok: bool,
    pub worst_ratio: f64,
    pub sup_dx: f64,
}

/// Compares the sampled velocity diameter against the envelope with decay
/// exponent `g0^2` and reports the worst ratio plus the largest position
/// spread seen.
pub fn check_decay_envelope(traj: &HydroTrajectory, g0: f64) -> DecayCheck {
    let d0 = traj.states[0].velocity_diameter();
    let mut sup_dx = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        sup_dx = sup_dx.max(s.position_diameter());
        if d0 > 0.0 {
            let envelope = d0 * (-g0 * g0 * t).exp();
            worst_ratio = worst_ratio.max(s.velocity_diameter() / envelope);
        }
    }
    DecayCheck {
        ok: worst_ratio <= 1.05 && worst_ratio.is_finite() && sup_dx.is_finite(),
        worst_ratio,
        sup_dx,
    }
}
