//! Observables over sampled trajectories: maximal speed, velocity diameter,
//! position fluctuation, mean velocity, and the checks built on them
//! (flocking detection, hull nonexpansion, the ballistic position bound,
//! momentum drift).

use crate::dynamics::Trajectory;
use crate::ensemble::AgentEnsemble;
use crate::math::norm;

/// Per-sample observables.  `omega` is the maximal agent speed,
/// `argmax_index` the lowest agent index attaining it, `momentum` the mean
/// velocity vector, `pos_fluctuation` the squared spread around the centre
/// of gravity, `max_position` the largest position norm.
#[derive(Clone, Debug)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub omega: Vec<f64>,
    pub argmax_index: Vec<usize>,
    pub vel_diameter: Vec<f64>,
    pub pos_fluctuation: Vec<f64>,
    pub momentum: Vec<Vec<f64>>,
    pub max_position: Vec<f64>,
}

fn max_speed_argmax(state: &AgentEnsemble) -> (f64, usize) {
    let mut best = -1.0;
    let mut idx = 0;
    for i in 0..state.n_agents() {
        let s = norm(state.velocity(i));
        if s > best {
            best = s;
            idx = i;
        }
    }
    (best, idx)
}

/// Largest agent speed.
pub fn max_speed(state: &AgentEnsemble) -> f64 {
    max_speed_argmax(state).0
}

/// Largest pairwise velocity difference.
pub fn velocity_diameter(state: &AgentEnsemble) -> f64 {
    let n = state.n_agents();
    let mut d = 0.0_f64;
    for i in 0..n {
        let vi = state.velocity(i);
        for j in i + 1..n {
            let vj = state.velocity(j);
            let mut s = 0.0;
            for k in 0..vi.len() {
                let e = vi[k] - vj[k];
                s += e * e;
            }
            d = d.max(s);
        }
    }
    d.sqrt()
}

pub fn mean_velocity(state: &AgentEnsemble) -> Vec<f64> {
    let d = state.dim();
    let n = state.n_agents();
    let mut m = vec![0.0; d];
    for i in 0..n {
        for (k, v) in state.velocity(i).iter().enumerate() {
            m[k] += v;
        }
    }
    for v in m.iter_mut() {
        *v /= n as f64;
    }
    m
}

fn centre_of_gravity(state: &AgentEnsemble) -> Vec<f64> {
    let d = state.dim();
    let n = state.n_agents();
    let mut c = vec![0.0; d];
    for i in 0..n {
        for (k, x) in state.position(i).iter().enumerate() {
            c[k] += x;
        }
    }
    for x in c.iter_mut() {
        *x /= n as f64;
    }
    c
}

pub fn compute_series(trajectory: &Trajectory) -> DiagnosticsSeries {
    let m = trajectory.states.len();
    let mut series = DiagnosticsSeries {
        times: trajectory.times.clone(),
        omega: Vec::with_capacity(m),
        argmax_index: Vec::with_capacity(m),
        vel_diameter: Vec::with_capacity(m),
        pos_fluctuation: Vec::with_capacity(m),
        momentum: Vec::with_capacity(m),
        max_position: Vec::with_capacity(m),
    };
    for state in &trajectory.states {
        let (omega, idx) = max_speed_argmax(state);
        series.omega.push(omega);
        series.argmax_index.push(idx);
        series.vel_diameter.push(velocity_diameter(state));
        let c = centre_of_gravity(state);
        let mut fluct = 0.0;
        let mut max_pos: f64 = 0.0;
        for i in 0..state.n_agents() {
            let x = state.position(i);
            let mut r2 = 0.0;
            for (k, xk) in x.iter().enumerate() {
                let e = xk - c[k];
                r2 += e * e;
            }
            fluct += r2;
            max_pos = max_pos.max(norm(x));
        }
        series.pos_fluctuation.push(fluct);
        series.max_position.push(max_pos);
        series.momentum.push(mean_velocity(state));
    }
    series
}

/// How long the velocity diameter must stay below tolerance before a run is
/// declared flocked (clipped to the run length for short runs).
pub const FLOCKING_DWELL: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FlockingReport {
    pub flocked: bool,
    pub t_flock: Option<f64>,
    pub v_consensus: Option<Vec<f64>>,
}

/// Flocked iff the velocity diameter stays below `tol` from some sample
/// onward and that tail spans at least the dwell window.  The consensus
/// vector is the mean velocity at the final sample.
pub fn check_flocking(series: &DiagnosticsSeries, tol: f64) -> FlockingReport {
    assert!(tol > 0.0, "flocking tolerance must be positive");
    let m = series.times.len();
    if m == 0 {
        return FlockingReport { flocked: false, t_flock: None, v_consensus: None };
    }
    let t_last = series.times[m - 1];
    let dwell = FLOCKING_DWELL.min(t_last - series.times[0]);
    // Earliest sample from which the diameter never rises back above tol.
    let mut start = None;
    for k in (0..m).rev() {
        if series.vel_diameter[k] < tol {
            start = Some(k);
        } else {
            break;
        }
    }
    match start {
        Some(k) if t_last - series.times[k] >= dwell => FlockingReport {
            flocked: true,
            t_flock: Some(series.times[k]),
            v_consensus: Some(series.momentum[m - 1].clone()),
        },
        _ => FlockingReport { flocked: false, t_flock: None, v_consensus: None },
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HullReport {
    pub nonexpanding: bool,
    pub max_violation: f64,
}

const HULL_DILATION: f64 = 1.0 + 1e-8;
const DIAMETER_SLACK: f64 = 1e-10;

/// Convex hull of 2-D points by monotone chain; returns the hull in
/// counterclockwise order without the closing point.
fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed amount by which `p` pokes out of the convex hull dilated by
/// `HULL_DILATION` about the centroid of `points` (<= 0 means inside).
fn hull_excess(points: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = points.len() as f64;
    let mut c = [0.0, 0.0];
    for q in points {
        c[0] += q[0];
        c[1] += q[1];
    }
    c[0] /= n;
    c[1] /= n;
    let dilated: Vec<[f64; 2]> = points
        .iter()
        .map(|q| {
            [
                c[0] + HULL_DILATION * (q[0] - c[0]),
                c[1] + HULL_DILATION * (q[1] - c[1]),
            ]
        })
        .collect();
    let hull = convex_hull_2d(&dilated);
    match hull.len() {
        0 => f64::INFINITY,
        1 => ((p[0] - hull[0][0]).powi(2) + (p[1] - hull[0][1]).powi(2)).sqrt(),
        2 => {
            // Distance to the segment.
            let (a, b) = (hull[0], hull[1]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let ap = [p[0] - a[0], p[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len2 == 0.0 { 0.0 } else { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) };
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        }
        _ => {
            let mut worst = f64::NEG_INFINITY;
            let m = hull.len();
            for i in 0..m {
                let a = hull[i];
                let b = hull[(i + 1) % m];
                let ex = [b[0] - a[0], b[1] - a[1]];
                let elen = (ex[0] * ex[0] + ex[1] * ex[1]).sqrt();
                if elen == 0.0 {
                    continue;
                }
                // Outward distance past edge (a,b) for a CCW hull.
                let d = ((p[0] - a[0]) * ex[1] - (p[1] - a[1]) * ex[0]) / elen;
                worst = worst.max(d);
            }
            worst
        }
    }
}

/// Checks that the sampled velocity sets never escape the (slightly dilated)
/// convex hull of the previous sample.  Exact hull geometry in 2-D; in other
/// dimensions the velocity diameter must be nonincreasing, which hull
/// nonexpansion implies.
pub fn check_hull_contraction(trajectory: &Trajectory) -> HullReport {
    let mut report = HullReport { nonexpanding: true, max_violation: 0.0 };
    let states = &trajectory.states;
    if states.len() < 2 {
        return report;
    }
    let dim = states[0].dim();
    for pair in states.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if dim == 2 {
            let prev_pts: Vec<[f64; 2]> = (0..prev.n_agents())
                .map(|i| [prev.velocity(i)[0], prev.velocity(i)[1]])
                .collect();
            for i in 0..cur.n_agents() {
                let p = [cur.velocity(i)[0], cur.velocity(i)[1]];
                let excess = hull_excess(&prev_pts, p);
                if excess > 1e-12 {
                    report.nonexpanding = false;
                    report.max_violation = report.max_violation.max(excess);
                }
            }
        } else {
            let grow = velocity_diameter(cur) - velocity_diameter(prev);
            if grow > DIAMETER_SLACK {
                report.nonexpanding = false;
                report.max_violation = report.max_violation.max(grow);
            }
        }
    }
    report
}

/// Asserts max_i |x_i(t)| <= max_i |x_i(0)| + omega(0) t at every sample,
/// up to a small absolute slack.
pub fn check_position_bound(trajectory: &Trajectory) -> bool {
    let states = &trajectory.states;
    if states.is_empty() {
        return true;
    }
    let omega0 = max_speed(&states[0]);
    let base = (0..states[0].n_agents())
        .map(|i| norm(states[0].position(i)))
        .fold(0.0, f64::max);
    for (t, state) in trajectory.times.iter().zip(states) {
        let mp = (0..state.n_agents()).map(|i| norm(state.position(i))).fold(0.0, f64::max);
        if mp > base + omega0 * t + 1e-9 {
            return false;
        }
    }
    true
}

/// Largest excursion of the mean velocity from its initial value.
pub fn momentum_drift(trajectory: &Trajectory) -> f64 {
    let states = &trajectory.states;
    if states.is_empty() {
        return 0.0;
    }
    let v0 = mean_velocity(&states[0]);
    let mut drift = 0.0_f64;
    for state in states {
        let v = mean_velocity(state);
        let mut d2 = 0.0;
        for k in 0..v.len() {
            let e = v[k] - v0[k];
            d2 += e * e;
        }
        drift = drift.max(d2.sqrt());
    }
    drift
}

/// Membership of `point` in the convex hull of the initial velocities, with
/// absolute slack.  Exact in 1-D (interval) and 2-D (hull); for d >= 3 the
/// componentwise bounding box is checked as a necessary condition.
pub fn velocity_hull_contains(initial: &AgentEnsemble, point: &[f64], slack: f64) -> bool {
    let d = initial.dim();
    assert_eq!(point.len(), d, "point dimension mismatch");
    match d {
        1 => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..initial.n_agents() {
                lo = lo.min(initial.velocity(i)[0]);
                hi = hi.max(initial.velocity(i)[0]);
            }
            point[0] >= lo - slack && point[0] <= hi + slack
        }
        2 => {
            let pts: Vec<[f64; 2]> = (0..initial.n_agents())
                .map(|i| [initial.velocity(i)[0], initial.velocity(i)[1]])
                .collect();
            hull_excess(&pts, [point[0], point[1]]) <= slack
        }
        _ => {
            for k in 0..d {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..initial.n_agents() {
                    lo = lo.min(initial.velocity(i)[k]);
                    hi = hi.max(initial.velocity(i)[k]);
                }
                if point[k] < lo - slack || point[k] > hi + slack {
                    return false;
                }
            }
            true
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, simulate_fixed_topology, SimOptions};
    use crate::topology::Topology;
    use crate::weights::WeightFunction;

    fn two_sample_trajectory(states: Vec<AgentEnsemble>) -> Trajectory {
        let times = (0..states.len()).map(|k| k as f64).collect();
        Trajectory {
            times,
            states,
            switch_log: Default::default(),
        }
    }

    #[test]
    fn consensus_state_has_flat_series() {
        let e = AgentEnsemble::new(2, vec![0.0, 0.0, 1.0, 1.0], vec![0.3, -0.4, 0.3, -0.4])
            .unwrap();
        let traj = two_sample_trajectory(vec![e.clone(), e]);
        let series = compute_series(&traj);
        for k in 0..2 {
            assert!((series.omega[k] - 0.5).abs() < 1e-15);
            assert_eq!(series.vel_diameter[k], 0.0);
            assert_eq!(series.argmax_index[k], 0);
        }
        let report = check_flocking(&series, 1e-6);
        assert!(report.flocked);
        assert_eq!(report.t_flock, Some(0.0));
        let v = report.v_consensus.unwrap();
        assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_break_to_the_lowest_index() {
        let e = AgentEnsemble::new_1d(vec![0.0, 1.0, 2.0], vec![-2.0, 2.0, 1.0]).unwrap();
        let traj = two_sample_trajectory(vec![e]);
        let series = compute_series(&traj);
        assert_eq!(series.argmax_index[0], 0);
    }

    #[test]
    fn fluctuation_and_momentum_match_hand_values() {
        let e = AgentEnsemble::new_1d(vec![-1.0, 1.0], vec![1.0, 0.0]).unwrap();
        let traj = two_sample_trajectory(vec![e]);
        let series = compute_series(&traj);
        assert!((series.pos_fluctuation[0] - 2.0).abs() < 1e-15);
        assert!((series.momentum[0][0] - 0.5).abs() < 1e-15);
        assert!((series.max_position[0] - 1.0).abs() < 1e-15);
        assert!((series.vel_diameter[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flocking_requires_the_dwell_window() {
        // Diameter dips below tolerance only in the final half time unit.
        let mk = |vd: f64| {
            AgentEnsemble::new_1d(vec![0.0, 1.0], vec![0.0, vd]).unwrap()
        };
        let states = vec![mk(1.0), mk(1.0), mk(1e-9)];
        let mut traj = two_sample_trajectory(states);
        traj.times = vec![0.0, 9.5, 10.0];
        let series = compute_series(&traj);
        let report = check_flocking(&series, 1e-6);
        assert!(!report.flocked);

        let states = vec![mk(1.0), mk(1e-9), mk(1e-9)];
        let mut traj = two_sample_trajectory(states);
        traj.times = vec![0.0, 5.0, 10.0];
        let series = compute_series(&traj);
        let report = check_flocking(&series, 1e-6);
        assert!(report.flocked);
        assert_eq!(report.t_flock, Some(5.0));
    }

    #[test]
    fn mutual_pair_decays_inside_its_hull() {
        let e = AgentEnsemble::new_1d(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        let topo = Topology::from_weight_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let traj = simulate_fixed_topology(&e, &topo, 1e-2, 5.0, &SimOptions::default()).unwrap();
        let report = check_hull_contraction(&traj);
        assert!(report.nonexpanding, "violation {}", report.max_violation);
        let series = compute_series(&traj);
        for k in 1..series.omega.len() {
            assert!(series.omega[k] <= series.omega[k - 1] + 1e-12);
        }
    }

    #[test]
    fn two_dimensional_hull_check_accepts_contracting_flows() {
        let e = AgentEnsemble::new(
            2,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, -1.0, 0.5, 0.0, -1.0, 0.5, 0.5],
        )
        .unwrap();
        let w = WeightFunction::topological(vec![1.0; 4]).unwrap();
        let traj = simulate(&e, &w, 1e-2, 5.0, &SimOptions::default()).unwrap();
        let report = check_hull_contraction(&traj);
        assert!(report.nonexpanding, "violation {}", report.max_violation);
    }

    #[test]
    fn hull_check_flags_expanding_velocities() {
        let mk = |s: f64| {
            AgentEnsemble::new(
                2,
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
                vec![s, 0.0, -s, 0.0, 0.0, s],
            )
            .unwrap()
        };
        let traj = two_sample_trajectory(vec![mk(1.0), mk(2.0)]);
        let report = check_hull_contraction(&traj);
        assert!(!report.nonexpanding);
        assert!(report.max_violation > 0.5);
    }

    #[test]
    fn position_bound_is_tight_for_a_single_agent() {
        let e = AgentEnsemble::new_1d(vec![1.0], vec![2.0]).unwrap();
        let topo = Topology::from_weight_matrix(&[vec![1.0]]).unwrap();
        let traj = simulate_fixed_topology(&e, &topo, 0.1, 3.0, &SimOptions::default()).unwrap();
        assert!(check_position_bound(&traj));
        let series = compute_series(&traj);
        let last = series.max_position.last().unwrap();
        assert!((last - 7.0).abs() <= 1e-9);
        assert!(momentum_drift(&traj) == 0.0);
    }

    #[test]
    fn zero_velocities_keep_max_position_constant() {
        let e = AgentEnsemble::new_1d(vec![1.0, -2.0], vec![0.0, 0.0]).unwrap();
        let w = WeightFunction::topological(vec![1.0, 1.0]).unwrap();
        let traj = simulate(&e, &w, 0.1, 2.0, &SimOptions::default()).unwrap();
        assert!(check_position_bound(&traj));
        let series = compute_series(&traj);
        assert!(series.max_position.iter().all(|m| (m - 2.0).abs() < 1e-15));
    }

    #[test]
    fn balanced_topology_conserves_momentum() {
        let e = AgentEnsemble::new_1d(vec![0.0, 3.0, -1.0, 7.0], vec![1.0, -0.5, 0.25, 2.0])
            .unwrap();
        let w = WeightFunction::topological(vec![1.0; 4]).unwrap();
        let traj = simulate(&e, &w, 1e-2, 20.0, &SimOptions::default()).unwrap();
        assert!(momentum_drift(&traj) <= 1e-9);
    }

    #[test]
    fn hull_membership_handles_all_dimensions() {
        let e1 = AgentEnsemble::new_1d(vec![0.0, 1.0], vec![-1.0, 2.0]).unwrap();
        assert!(velocity_hull_contains(&e1, &[0.5], 0.0));
        assert!(!velocity_hull_contains(&e1, &[2.1], 1e-9));

        let e2 = AgentEnsemble::new(
            2,
            vec![0.0; 6],
            vec![0.0, 0.0, 2.0, 0.0, 0.0, 2.0],
        )
        .unwrap();
        assert!(velocity_hull_contains(&e2, &[0.5, 0.5], 1e-12));
        assert!(!velocity_hull_contains(&e2, &[1.5, 1.5], 1e-9));

        let e3 = AgentEnsemble::new(
            3,
            vec![0.0; 6],
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        assert!(velocity_hull_contains(&e3, &[0.5, 0.5, 0.5], 0.0));
        assert!(!velocity_hull_contains(&e3, &[1.5, 0.5, 0.5], 1e-9));
    }
}
