//! Time integration with per-step topology rebuilds.
//!
//! The velocity field is piecewise linear: on any interval where the rank
//! table is constant, `dv/dt = (W - I) v` with a fixed matrix.  The
//! integrator exploits that structure: classic RK4 steps with the topology
//! frozen across the four stages, a rebuild from the new positions after
//! every step, and a switch event whenever the topology fingerprint changes.
//! With refinement enabled the switch time is located by bisection inside the
//! step (absolute tolerance 1e-13) and the step is split there, so positions
//! stay continuous and the log carries accurate switch times.  The tight
//! tolerance matters beyond bookkeeping: the slice between the true switch
//! and the refined one is integrated with the outgoing matrix, so its length
//! bounds the spurious velocity kick at configurations that start on a tie.

use std::collections::BTreeMap;

use crate::ensemble::AgentEnsemble;
use crate::error::{Error, Result};
use crate::math::KahanSum;
use crate::topology::{communication_matrix, Topology};
use crate::weights::WeightFunction;

/// One fingerprint change, with the instant it was detected (step boundary)
/// or located (bisection refinement).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub old_hash: u64,
    pub new_hash: u64,
}

/// Maximal interval on which one topology was in force.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopologyInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub hash: u64,
}

/// Complete switching record of a run: events in increasing time, the
/// induced tiling of `[0, t_end]`, and total time spent per topology.
#[derive(Clone, Debug, Default)]
pub struct SwitchLog {
    pub events: Vec<SwitchEvent>,
    pub intervals: Vec<TopologyInterval>,
    pub occupancy: BTreeMap<u64, f64>,
}

impl SwitchLog {
    pub(crate) fn build(events: Vec<SwitchEvent>, initial_hash: u64, t_end: f64) -> Self {
        let mut intervals = Vec::with_capacity(events.len() + 1);
        let mut t = 0.0;
        let mut hash = initial_hash;
        for e in &events {
            intervals.push(TopologyInterval { t_start: t, t_end: e.time, hash });
            t = e.time;
            hash = e.new_hash;
        }
        intervals.push(TopologyInterval { t_start: t, t_end, hash });
        let mut acc: BTreeMap<u64, KahanSum> = BTreeMap::new();
        for iv in &intervals {
            acc.entry(iv.hash).or_default().add(iv.t_end - iv.t_start);
        }
        let occupancy = acc.into_iter().map(|(h, k)| (h, k.value())).collect();
        SwitchLog { events, intervals, occupancy }
    }
}

/// Sampled states plus the switching record.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<AgentEnsemble>,
    pub switch_log: SwitchLog,
}

impl Trajectory {
    pub fn final_state(&self) -> &AgentEnsemble {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial state")
    }
}

/// Integration controls.  `sample_every` records every k-th step boundary
/// (the initial and final states are always kept).
#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub sample_every: usize,
    pub refine_switches: bool,
    pub max_switch_events: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            sample_every: 1,
            refine_switches: true,
            max_switch_events: 1_000_000,
        }
    }
}

/// Time derivative of the state under a frozen topology:
/// `dx_i = v_i`, `dv_i = sum_j w_ij (v_j - v_i)`.
pub fn rhs(ensemble: &AgentEnsemble, topology: &Topology) -> Result<(Vec<f64>, Vec<f64>)> {
    if topology.n() != ensemble.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.n_agents(),
            got: topology.n(),
        });
    }
    let dx = ensemble.velocities().to_vec();
    let mut dv = vec![0.0; dx.len()];
    velocity_derivative(ensemble.velocities(), ensemble.dim(), topology, &mut dv);
    Ok((dx, dv))
}

fn velocity_derivative(v: &[f64], dim: usize, topo: &Topology, out: &mut [f64]) {
    let n = topo.n();
    for i in 0..n {
        let row = topo.weight_row(i);
        for k in 0..dim {
            out[i * dim + k] = 0.0;
        }
        // Pairwise form rather than W v - (row sum) v: each term vanishes
        // exactly at consensus, so aligned states are fixed points in floating
        // point and never drift into spurious rank flips.
        for (j, &w) in row.iter().enumerate() {
            if w == 0.0 || j == i {
                continue;
            }
            for k in 0..dim {
                out[i * dim + k] += w * (v[j * dim + k] - v[i * dim + k]);
            }
        }
    }
}

/// One RK4 step of length `h` with `topology` frozen across the stages.
pub fn step(ensemble: &AgentEnsemble, topology: &Topology, h: f64) -> Result<AgentEnsemble> {
    if topology.n() != ensemble.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.n_agents(),
            got: topology.n(),
        });
    }
    Ok(rk4(ensemble, topology, h))
}

fn rk4(state: &AgentEnsemble, topo: &Topology, h: f64) -> AgentEnsemble {
    let dim = state.dim();
    let len = state.positions().len();
    let v0 = state.velocities();

    let mut k1v = vec![0.0; len];
    velocity_derivative(v0, dim, topo, &mut k1v);
    let v1: Vec<f64> = (0..len).map(|i| v0[i] + 0.5 * h * k1v[i]).collect();

    let mut k2v = vec![0.0; len];
    velocity_derivative(&v1, dim, topo, &mut k2v);
    let v2: Vec<f64> = (0..len).map(|i| v0[i] + 0.5 * h * k2v[i]).collect();

    let mut k3v = vec![0.0; len];
    velocity_derivative(&v2, dim, topo, &mut k3v);
    let v3: Vec<f64> = (0..len).map(|i| v0[i] + h * k3v[i]).collect();

    let mut k4v = vec![0.0; len];
    velocity_derivative(&v3, dim, topo, &mut k4v);

    let x0 = state.positions();
    let mut new_state = state.clone();
    {
        // Position stages are the stage velocities themselves (dx/dt = v).
        let px = new_state.positions_mut();
        for i in 0..len {
            px[i] = x0[i] + h / 6.0 * (v0[i] + 2.0 * v1[i] + 2.0 * v2[i] + v3[i]);
        }
    }
    {
        let pv = new_state.velocities_mut();
        for i in 0..len {
            pv[i] = v0[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
    new_state
}

const SWITCH_TIME_TOL: f64 = 1e-13;

struct SwitchRecorder {
    events: Vec<SwitchEvent>,
    limit: usize,
}

impl SwitchRecorder {
    fn push(&mut self, event: SwitchEvent) -> Result<()> {
        if self.events.len() >= self.limit {
            return Err(Error::Chattering { limit: self.limit, t: event.time });
        }
        self.events.push(event);
        Ok(())
    }
}

/// Advances one step of length `h` starting at `t0`, splitting at refined
/// switch times when requested.  Returns the end state and its topology.
fn advance_step(
    state: &AgentEnsemble,
    topo: &Topology,
    weights: &WeightFunction,
    t0: f64,
    h: f64,
    opts: &SimOptions,
    recorder: &mut SwitchRecorder,
) -> Result<(AgentEnsemble, Topology)> {
    let t1 = t0 + h;
    let mut t_cur = t0;
    let mut state_cur = state.clone();
    let mut topo_cur = topo.clone();
    loop {
        let sub_h = t1 - t_cur;
        let trial = rk4(&state_cur, &topo_cur, sub_h);
        if !trial.is_finite() {
            return Err(Error::NonFiniteState { t: t1 });
        }
        let topo_trial = communication_matrix(&trial, weights)?;
        if topo_trial.hash() == topo_cur.hash() {
            return Ok((trial, topo_trial));
        }
        if !opts.refine_switches {
            recorder.push(SwitchEvent {
                time: t1,
                old_hash: topo_cur.hash(),
                new_hash: topo_trial.hash(),
            })?;
            return Ok((trial, topo_trial));
        }
        // Bisect the offset from t_cur: the topology at offset `lo` matches
        // the current one, at offset `hi` it differs.
        let mut lo = 0.0_f64;
        let mut hi = sub_h;
        while hi - lo > SWITCH_TIME_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let probe = rk4(&state_cur, &topo_cur, mid);
            if communication_matrix(&probe, weights)?.hash() == topo_cur.hash() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let state_switch = rk4(&state_cur, &topo_cur, hi);
        if !state_switch.is_finite() {
            return Err(Error::NonFiniteState { t: t_cur + hi });
        }
        let topo_switch = communication_matrix(&state_switch, weights)?;
        let t_switch = t_cur + hi;
        recorder.push(SwitchEvent {
            time: t_switch,
            old_hash: topo_cur.hash(),
            new_hash: topo_switch.hash(),
        })?;
        state_cur = state_switch;
        topo_cur = topo_switch;
        t_cur = t_switch;
        if t_cur >= t1 {
            return Ok((state_cur, topo_cur));
        }
    }
}

/// Integrates the rank-based flow from `ensemble0` to `t_end`, rebuilding the
/// topology from the positions after every step and logging fingerprint
/// changes.  Aborts when the state leaves the finite range or when more than
/// `opts.max_switch_events` switches accumulate.
pub fn simulate(
    ensemble0: &AgentEnsemble,
    weights: &WeightFunction,
    dt: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    validate_grid(dt, t_end)?;
    let topo0 = communication_matrix(ensemble0, weights)?;
    if matches!(weights, WeightFunction::Metric { .. }) {
        // Distance-graded weights vary continuously with the state: there is
        // no switching structure, only a weight matrix refreshed every step.
        return simulate_metric(ensemble0, topo0, weights, dt, t_end, opts);
    }
    let initial_hash = topo0.hash();
    let mut recorder = SwitchRecorder { events: Vec::new(), limit: opts.max_switch_events };

    let mut times = vec![0.0];
    let mut states = vec![ensemble0.clone()];
    let mut state = ensemble0.clone();
    let mut topo = topo0;

    let sample_every = opts.sample_every.max(1);
    let n_steps = steps_for(dt, t_end);
    for k in 0..n_steps {
        let t0 = k as f64 * dt;
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        let (next, next_topo) =
            advance_step(&state, &topo, weights, t0, t1 - t0, opts, &mut recorder)?;
        state = next;
        topo = next_topo;
        if (k + 1) % sample_every == 0 || k + 1 == n_steps {
            times.push(t1);
            states.push(state.clone());
        }
    }

    let switch_log = SwitchLog::build(recorder.events, initial_hash, t_end);
    Ok(Trajectory { times, states, switch_log })
}

fn simulate_metric(
    ensemble0: &AgentEnsemble,
    topo0: Topology,
    weights: &WeightFunction,
    dt: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let initial_hash = topo0.hash();
    let mut times = vec![0.0];
    let mut states = vec![ensemble0.clone()];
    let mut state = ensemble0.clone();
    let mut topo = topo0;
    let sample_every = opts.sample_every.max(1);
    let n_steps = steps_for(dt, t_end);
    for k in 0..n_steps {
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        let h = t1 - k as f64 * dt;
        state = rk4(&state, &topo, h);
        if !state.is_finite() {
            return Err(Error::NonFiniteState { t: t1 });
        }
        topo = communication_matrix(&state, weights)?;
        if (k + 1) % sample_every == 0 || k + 1 == n_steps {
            times.push(t1);
            states.push(state.clone());
        }
    }
    let switch_log = SwitchLog::build(Vec::new(), initial_hash, t_end);
    Ok(Trajectory { times, states, switch_log })
}

/// Integrates `dv/dt = (W - I) v` with `topology` held fixed forever (no
/// rebuilds, no switch events).
pub fn simulate_fixed_topology(
    ensemble0: &AgentEnsemble,
    topology: &Topology,
    dt: f64,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    validate_grid(dt, t_end)?;
    if topology.n() != ensemble0.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: ensemble0.n_agents(),
            got: topology.n(),
        });
    }
    let mut times = vec![0.0];
    let mut states = vec![ensemble0.clone()];
    let mut state = ensemble0.clone();
    let sample_every = opts.sample_every.max(1);
    let n_steps = steps_for(dt, t_end);
    for k in 0..n_steps {
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        let h = t1 - (k as f64 * dt).min(t_end);
        state = rk4(&state, topology, h);
        if !state.is_finite() {
            return Err(Error::NonFiniteState { t: t1 });
        }
        if (k + 1) % sample_every == 0 || k + 1 == n_steps {
            times.push(t1);
            states.push(state.clone());
        }
    }
    let switch_log = SwitchLog::build(Vec::new(), topology.hash(), t_end);
    Ok(Trajectory { times, states, switch_log })
}

pub(crate) fn validate_grid(dt: f64, t_end: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", reason: "must be positive".into() });
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: "must be nonnegative".into(),
        });
    }
    Ok(())
}

pub(crate) fn steps_for(dt: f64, t_end: f64) -> usize {
    if t_end == 0.0 {
        return 0;
    }
    let ratio = t_end / dt;
    // Tolerate t_end that is a near-exact multiple of dt.
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) && rounded > 0.0 {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::communication_matrix;
    use crate::weights::WeightFunction;

    fn mutual_pair() -> Topology {
        Topology::from_weight_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_consensus() {
        let e = AgentEnsemble::new(2, vec![0.0, 0.0, 3.0, 4.0], vec![0.5, -0.25, 0.5, -0.25])
            .unwrap();
        let w = WeightFunction::topological(vec![1.0, 1.0]).unwrap();
        let topo = communication_matrix(&e, &w).unwrap();
        let (dx, dv) = rhs(&e, &topo).unwrap();
        assert_eq!(dx, e.velocities());
        assert!(dv.iter().all(|d| d.abs() == 0.0));
    }

    #[test]
    fn rhs_of_mutual_pair_is_antisymmetric() {
        let e = AgentEnsemble::new_1d(vec![0.0, 1.0], vec![1.0, -0.5]).unwrap();
        let (_, dv) = rhs(&e, &mutual_pair()).unwrap();
        assert!((dv[0] - (-1.5)).abs() < 1e-15);
        assert!((dv[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn metric_rhs_uses_distance_weights() {
        let e = AgentEnsemble::new_1d(vec![0.0, 2.0], vec![0.0, 1.0]).unwrap();
        let w = WeightFunction::metric(1.0, 1.0, 1.0).unwrap();
        let topo = communication_matrix(&e, &w).unwrap();
        let (_, dv) = rhs(&e, &topo).unwrap();
        // w(0 -> 1) = (1 / (1 + 4)) / 2 = 0.1, so dv_0 = 0.1 * (1 - 0).
        assert!((dv[0] - 0.1).abs() < 1e-15);
        assert!((dv[1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn step_is_identity_for_zero_velocities() {
        let e = AgentEnsemble::new(3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0], vec![0.0; 6]).unwrap();
        let w = WeightFunction::topological(vec![1.0, 1.0]).unwrap();
        let topo = communication_matrix(&e, &w).unwrap();
        let next = step(&e, &topo, 0.125).unwrap();
        assert_eq!(next, e);
    }

    // A frozen two-agent topology where agent 1 only listens to itself
    // realizes the linear system dx = v, dv = -1 - v for agent 0 when
    // v_1 = -1.  Its solution through (0, c) is
    // x(t) = (c+1)(1 - exp(-t)) - t, v(t) = (c+1) exp(-t) - 1.
    #[test]
    fn single_step_matches_linear_relaxation_to_fifth_order() {
        let topo = Topology::from_weight_matrix(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let c = 0.5;
        for &h in &[0.1, 0.05, 0.025] {
            let e = AgentEnsemble::new_1d(vec![0.0, -100.0], vec![c, -1.0]).unwrap();
            let next = step(&e, &topo, h).unwrap();
            let x_exact = (c + 1.0) * (-(-h as f64).exp_m1()) - h;
            let v_exact = (c + 1.0) * (-h as f64).exp() - 1.0;
            let ex = (next.position(0)[0] - x_exact).abs();
            let ev = (next.velocity(0)[0] - v_exact).abs();
            assert!(ex <= 2.0 * h.powi(5), "x error {ex} at h={h}");
            assert!(ev <= 2.0 * h.powi(5), "v error {ev} at h={h}");
        }
    }

    /// Dense matrix exponential by scaling and squaring of the Taylor
    /// series; independent oracle for the composed-step check.
    fn expm(a: &[f64], n: usize) -> Vec<f64> {
        let norm: f64 = (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let s = norm.log2().ceil().max(0.0) as u32 + 1;
        let scale = 1.0 / (1u64 << s) as f64;
        let b: Vec<f64> = a.iter().map(|x| x * scale).collect();
        let mut result = vec![0.0; n * n];
        for i in 0..n {
            result[i * n + i] = 1.0;
        }
        let mut term = result.clone();
        for k in 1..=24 {
            let mut next = vec![0.0; n * n];
            for i in 0..n {
                for l in 0..n {
                    let t = term[i * n + l];
                    if t == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        next[i * n + j] += t * b[l * n + j];
                    }
                }
            }
            for v in next.iter_mut() {
                *v /= k as f64;
            }
            for i in 0..n * n {
                result[i] += next[i];
            }
            term = next;
        }
        for _ in 0..s {
            let mut sq = vec![0.0; n * n];
            for i in 0..n {
                for l in 0..n {
                    let t = result[i * n + l];
                    if t == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        sq[i * n + j] += t * result[l * n + j];
                    }
                }
            }
            result = sq;
        }
        result
    }

    #[test]
    fn composed_steps_match_matrix_exponential() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                if i != j {
                    *w = rng.gen_range(0.0..1.0);
                }
            }
        }
        let topo = Topology::from_weight_matrix(&rows).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = AgentEnsemble::new_1d(x0.clone(), v0.clone()).unwrap();

        let dt = 1e-3;
        let t = 1.0;
        let traj = simulate_fixed_topology(&e, &topo, dt, t, &SimOptions {
            sample_every: 1000,
            ..SimOptions::default()
        })
        .unwrap();
        let end = traj.final_state();

        // Augmented generator for z = (x, v): dz = [[0, I], [0, W - I]] z.
        let m = 2 * n;
        let mut gen = vec![0.0; m * m];
        for i in 0..n {
            gen[i * m + n + i] = 1.0;
            for j in 0..n {
                let w = topo.weight(i, j);
                gen[(n + i) * m + n + j] = if i == j { w - 1.0 } else { w };
            }
        }
        let scaled: Vec<f64> = gen.iter().map(|g| g * t).collect();
        let phi = expm(&scaled, m);
        let z0: Vec<f64> = x0.iter().chain(v0.iter()).copied().collect();
        let mut z = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                z[i] += phi[i * m + j] * z0[j];
            }
        }
        for i in 0..n {
            assert!(
                (end.position(i)[0] - z[i]).abs() <= 1e-10,
                "position {i} drifted from the exponential solution"
            );
            assert!(
                (end.velocity(i)[0] - z[n + i]).abs() <= 1e-10,
                "velocity {i} drifted from the exponential solution"
            );
        }
    }

    #[test]
    fn consensus_initial_state_never_switches() {
        // Pairwise distances are well separated, so the rigid translation of
        // the aligned cloud can never reorder any rank row.
        let e = AgentEnsemble::new(
            2,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 3.0],
            vec![0.25, -0.5].repeat(4),
        )
        .unwrap();
        let w = WeightFunction::topological(vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let traj = simulate(&e, &w, 1e-2, 1.0, &SimOptions::default()).unwrap();
        assert!(traj.switch_log.events.is_empty());
        let end = traj.final_state();
        for i in 0..4 {
            // The pairwise velocity relaxation vanishes identically at
            // consensus, so velocities are preserved bit for bit.
            assert_eq!(end.velocity(i)[0], 0.25);
            assert_eq!(end.velocity(i)[1], -0.5);
            assert!((end.position(i)[0] - (e.position(i)[0] + 0.25)).abs() <= 1e-12);
            assert!((end.position(i)[1] - (e.position(i)[1] - 0.5)).abs() <= 1e-12);
        }
    }

    /// Three agents that only listen to themselves move ballistically; the
    /// rightmost agent sees the runner overtake its fixed neighbor at t = 10
    /// exactly, which is the only rank change of the run.
    fn ballistic_crossing() -> (AgentEnsemble, WeightFunction) {
        let e = AgentEnsemble::new_1d(vec![0.0, 10.0, 21.0], vec![1.0, 0.0, 0.0]).unwrap();
        let w = WeightFunction::topological(vec![1.0, 0.0, 0.0]).unwrap();
        (e, w)
    }

    #[test]
    fn refined_switch_time_is_located_to_tolerance() {
        let (e, w) = ballistic_crossing();
        let traj = simulate(&e, &w, 0.25, 12.0, &SimOptions::default()).unwrap();
        assert_eq!(traj.switch_log.events.len(), 1);
        let event = traj.switch_log.events[0];
        assert!((event.time - 10.0).abs() <= 1e-8, "switch at {}", event.time);
        assert_ne!(event.old_hash, event.new_hash);
    }

    #[test]
    fn unrefined_switch_lands_on_step_boundary() {
        let (e, w) = ballistic_crossing();
        let opts = SimOptions { refine_switches: false, ..SimOptions::default() };
        let traj = simulate(&e, &w, 0.25, 12.0, &opts).unwrap();
        assert_eq!(traj.switch_log.events.len(), 1);
        let event = traj.switch_log.events[0];
        assert!((event.time / 0.25).fract().abs() < 1e-12);
        assert!((event.time - 10.0).abs() <= 0.25 + 1e-12);
    }

    #[test]
    fn occupancy_tiles_the_horizon() {
        let (e, w) = ballistic_crossing();
        let traj = simulate(&e, &w, 0.25, 12.0, &SimOptions::default()).unwrap();
        let log = &traj.switch_log;
        let total: f64 = log.occupancy.values().sum();
        assert!((total - 12.0).abs() <= 1e-12, "occupancy sums to {total}");
        assert_eq!(log.intervals.first().unwrap().t_start, 0.0);
        assert_eq!(log.intervals.last().unwrap().t_end, 12.0);
        for pair in log.intervals.windows(2) {
            assert_eq!(pair[0].t_end, pair[1].t_start);
            assert_ne!(pair[0].hash, pair[1].hash);
        }
    }

    #[test]
    fn positions_stay_continuous_across_refined_switches() {
        let (e, w) = ballistic_crossing();
        let opts = SimOptions { sample_every: 1, ..SimOptions::default() };
        let traj = simulate(&e, &w, 0.25, 12.0, &opts).unwrap();
        let omega0 = 1.0;
        for pair in traj.states.windows(2) {
            let dt_pair = 0.25;
            for i in 0..3 {
                let jump = (pair[1].position(i)[0] - pair[0].position(i)[0]).abs();
                assert!(jump <= omega0 * dt_pair * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn chattering_guard_aborts_noisy_runs() {
        let (e, w) = ballistic_crossing();
        let opts = SimOptions { max_switch_events: 0, ..SimOptions::default() };
        assert!(matches!(
            simulate(&e, &w, 0.25, 12.0, &opts),
            Err(Error::Chattering { limit: 0, .. })
        ));
    }

    #[test]
    fn divergent_step_sizes_are_reported_as_non_finite() {
        let e = AgentEnsemble::new_1d(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        let result = simulate_fixed_topology(&e, &mutual_pair(), 50.0, 5000.0, &SimOptions::default());
        assert!(matches!(result, Err(Error::NonFiniteState { .. })));
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (e, w) = ballistic_crossing();
        let a = simulate(&e, &w, 0.25, 12.0, &SimOptions::default()).unwrap();
        let b = simulate(&e, &w, 0.25, 12.0, &SimOptions::default()).unwrap();
        assert_eq!(a.times.len(), b.times.len());
        for (sa, sb) in a.states.iter().zip(&b.states) {
            let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(sa.positions()), bits(sb.positions()));
            assert_eq!(bits(sa.velocities()), bits(sb.velocities()));
        }
    }

    #[test]
    fn velocity_error_decays_at_fourth_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 5;
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                if i != j {
                    *w = rng.gen_range(0.1..1.0);
                }
            }
        }
        let topo = Topology::from_weight_matrix(&rows).unwrap();
        let e = AgentEnsemble::new_1d(
            (0..n).map(|i| i as f64).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let run = |dt: f64| {
            simulate_fixed_topology(&e, &topo, dt, 1.0, &SimOptions {
                sample_every: usize::MAX,
                ..SimOptions::default()
            })
            .unwrap()
            .final_state()
            .velocities()
            .to_vec()
        };
        let coarse = run(0.1);
        let medium = run(0.05);
        let fine = run(0.025);
        let diff = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let order = (diff(&coarse, &medium) / diff(&medium, &fine)).log2();
        assert!(order >= 3.5, "observed order {order}");
    }
}
