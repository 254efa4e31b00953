//! Canonical initial configurations used across the test and CLI surface.
//!
//! The builders encode three hand-constructed 1-D arrangements:
//!
//! * `oscillator(c)`: two rigid outgoing triplets plus a middle agent that
//!   couples to its second-closest neighbor, so the middle agent oscillates
//!   through the origin forever with strictly decreasing excursions.  The
//!   first excursion has a closed form, and the return map c -> tau(c) - c
//!   is exposed for analysis.
//! * `group_split()`: two triplets that drift apart; each agent follows its
//!   two closest neighbors.  The configuration starts strongly connected and
//!   degrades to weak connectivity around t = 10, after which no global
//!   consensus forms.
//! * `outlier(n)`: a cluster inside [-1, 1] plus one agent at distance 5
//!   that nobody listens to; weakly but not strongly connected at t = 0.
//!
//! Storage order is by initial position, left to right.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::AgentEnsemble;
use crate::error::{Error, Result};
use crate::math::{bisect, KahanSum};
use crate::weights::WeightFunction;

/// Seven agents at (-10, -9, -6, 0, 6, 9, 10); the outer triplets leave at
/// speed 1 and keep their velocities forever, the middle agent launches at
/// speed `c > 0` and is pulled back by its second-closest neighbor.
pub fn oscillator(c: f64) -> Result<(AgentEnsemble, WeightFunction)> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "c",
            reason: "launch speed must be positive and finite".into(),
        });
    }
    let positions = vec![-10.0, -9.0, -6.0, 0.0, 6.0, 9.0, 10.0];
    let velocities = vec![-1.0, -1.0, -1.0, c, 1.0, 1.0, 1.0];
    let ensemble = AgentEnsemble::new_1d(positions, velocities)?;
    // Rank 2 is the second-closest other agent; self-rank weight stays 0.
    let weights = WeightFunction::topological(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])?;
    Ok((ensemble, weights))
}

/// The middle agent stays in the open strip (-1, 1) iff its turning
/// excursion c - ln(1+c) stays below 1; larger launch speeds reach the
/// outer region where the two-triplet structure breaks down.
pub fn oscillator_confined(c: f64) -> bool {
    c > 0.0 && c - c.ln_1p() < 1.0
}

/// Seven agents at (-6, -3, -1, 0, 1, 3, 6), outer triplets at speed 1
/// outward, middle agent at rest; everyone averages its two closest
/// neighbors.
pub fn group_split() -> (AgentEnsemble, WeightFunction) {
    let positions = vec![-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0];
    let velocities = vec![-1.0, -1.0, -1.0, 0.0, 1.0, 1.0, 1.0];
    let ensemble = AgentEnsemble::new_1d(positions, velocities)
        .expect("static scenario data is valid");
    let weights = WeightFunction::topological(vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0])
        .expect("static scenario data is valid");
    (ensemble, weights)
}

/// `n - 1` agents evenly spaced on [-1, 1] plus one agent at 5.  The weight
/// table is 1 for ranks 1..=n-2 and 0 for the farthest rank, so the outlier
/// has no listeners: exactly two strongly connected components.
///
/// Velocities alternate +-1 inside the cluster; the outlier moves away at
/// speed 1 (the connectivity claims are velocity-independent).
pub fn outlier(n: usize) -> Result<(AgentEnsemble, WeightFunction)> {
    if n < 3 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "outlier scenario needs at least 3 agents".into(),
        });
    }
    let inner = n - 1;
    let mut positions = Vec::with_capacity(n);
    for i in 0..inner {
        positions.push(-1.0 + 2.0 * i as f64 / (inner - 1).max(1) as f64);
    }
    positions.push(5.0);
    let mut velocities: Vec<f64> = (0..inner).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    velocities.push(1.0);
    let ensemble = AgentEnsemble::new_1d(positions, velocities)?;
    let mut table = vec![1.0; n];
    table[0] = 0.0;
    table[n - 1] = 0.0;
    let weights = WeightFunction::topological(table)?;
    Ok((ensemble, weights))
}

/// Uniformly random cloud: positions and velocities drawn coordinatewise
/// from symmetric boxes.  Positions are drawn first, so the stream is stable
/// under velocity-range changes.
pub fn random_cloud(
    n: usize,
    dim: usize,
    pos_half_width: f64,
    vel_half_width: f64,
    seed: u64,
) -> Result<AgentEnsemble> {
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<f64> =
        (0..n * dim).map(|_| rng.gen_range(-pos_half_width..=pos_half_width)).collect();
    let velocities: Vec<f64> =
        (0..n * dim).map(|_| rng.gen_range(-vel_half_width..=vel_half_width)).collect();
    AgentEnsemble::new(dim, positions, velocities)
}

/// All-to-all interaction (constant weight table) on a random cloud in the
/// box [-1, 1]^dim with velocities in the same range.
pub fn complete(n: usize, dim: usize, seed: u64) -> Result<(AgentEnsemble, WeightFunction)> {
    let ensemble = random_cloud(n, dim, 1.0, 1.0, seed)?;
    let weights = WeightFunction::topological(vec![1.0; n])?;
    Ok((ensemble, weights))
}

/// First-excursion closed form for the oscillator's middle agent launched
/// at speed c: valid while the agent stays on the positive side,
/// 0 <= t <= return_time(c).
pub fn analytic_oscillator(t: f64, c: f64) -> (f64, f64) {
    // x(t) = (c+1)(1 - e^{-t}) - t, v(t) = (c+1)e^{-t} - 1.
    let em1 = (-t).exp_m1();
    let x = (c + 1.0) * (-em1) - t;
    let v = (c + 1.0) * (em1 + 1.0) - 1.0;
    (x, v)
}

/// First positive root of (c+1)(1 - e^{-tau}) = tau, i.e. the time at which
/// the middle agent re-crosses the origin.  The root lies in (c, 2c); found
/// by bisection to absolute tolerance 1e-12.
pub fn return_time(c: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "c",
            reason: "launch speed must be positive and finite".into(),
        });
    }
    bisect(|tau| (c + 1.0) * (-(-tau).exp_m1()) - tau, c, 2.0 * c, 1e-12)
}

/// One excursion of the return map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnMapRecord {
    /// Launch speed of this excursion.
    pub c: f64,
    /// Time to return to the origin.
    pub tau: f64,
    /// Return speed tau - c; the launch speed of the next excursion.
    pub s: f64,
    /// Turning instant ln(1 + c) within the excursion.
    pub t_turn: f64,
    /// Maximal excursion distance c - ln(1 + c).
    pub x_turn: f64,
}

/// Iterates c_{k+1} = return_time(c_k) - c_k for up to `k_max` excursions,
/// stopping early once the speed underflows below 1e-300.  Returns the
/// excursion records and the running partial sums of the return times.
pub fn return_map_iterate(c0: f64, k_max: usize) -> Result<(Vec<ReturnMapRecord>, Vec<f64>)> {
    if k_max == 0 {
        return Err(Error::InvalidParameter {
            name: "k_max",
            reason: "need at least one excursion".into(),
        });
    }
    let mut records = Vec::new();
    let mut partial_sums = Vec::new();
    let mut acc = KahanSum::default();
    let mut c = c0;
    for _ in 0..k_max {
        if !(c > 1e-300) {
            break;
        }
        let tau = return_time(c)?;
        records.push(ReturnMapRecord {
            c,
            tau,
            s: tau - c,
            t_turn: c.ln_1p(),
            x_turn: c - c.ln_1p(),
        });
        acc.add(tau);
        partial_sums.push(acc.value());
        c = tau - c;
    }
    Ok((records, partial_sums))
}
