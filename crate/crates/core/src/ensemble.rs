//! Agent state container.

use crate::error::{Error, Result};
use crate::math::dist;

/// Positions and velocities of `n` agents in `dim`-dimensional space,
/// stored agent-major (`[x_0[0..dim], x_1[0..dim], ...]`).
#[derive(Clone, Debug, PartialEq)]
pub struct AgentEnsemble {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

impl AgentEnsemble {
    /// Builds an ensemble from flat agent-major coordinate arrays.
    /// Every coordinate must be finite and the arrays must describe the same
    /// number of agents.
    pub fn new(dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: positions.len(),
            });
        }
        if velocities.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                got: velocities.len(),
            });
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "positions" });
        }
        if velocities.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "velocities" });
        }
        Ok(AgentEnsemble { dim, positions, velocities })
    }

    /// Convenience constructor for one-dimensional ensembles.
    pub fn new_1d(positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        Self::new(1, positions, velocities)
    }

    pub fn n_agents(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub(crate) fn velocities_mut(&mut self) -> &mut [f64] {
        &mut self.velocities
    }

    /// Euclidean distance between agents `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(self.position(i), self.position(j))
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|x| x.is_finite())
            && self.velocities.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mismatched_inputs() {
        assert!(AgentEnsemble::new(2, vec![], vec![]).is_err());
        assert!(AgentEnsemble::new(2, vec![0.0; 4], vec![0.0; 2]).is_err());
        assert!(AgentEnsemble::new(2, vec![0.0; 3], vec![0.0; 3]).is_err());
        assert!(AgentEnsemble::new(1, vec![f64::NAN], vec![0.0]).is_err());
        assert!(AgentEnsemble::new(1, vec![0.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn indexes_agent_major() {
        let e = AgentEnsemble::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(e.n_agents(), 2);
        assert_eq!(e.position(1), &[3.0, 4.0]);
        assert_eq!(e.velocity(0), &[5.0, 6.0]);
        assert!((e.distance(0, 1) - 8.0_f64.sqrt()).abs() < 1e-15);
    }
}
