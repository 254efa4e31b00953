//! Turns a resolved configuration into a finished run directory: builds the
//! scenario, integrates under the requested model, computes diagnostics and
//! per-interval connectivity, and writes the four artifact files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use topoflock_core::diagnostics::{check_flocking, compute_series, momentum_drift};
use topoflock_core::diagnostics::DiagnosticsSeries;
use topoflock_core::dynamics::{
    simulate, simulate_fixed_topology, SimOptions, SwitchLog, TopologyInterval, Trajectory,
};
use topoflock_core::graph::{left_null_vector, predict_consensus, strongly_connected_components};
use topoflock_core::hydro::{simulate_hydro, HydroState};
use topoflock_core::meanfield::{simulate_meanfield_particles, EmpiricalMeasure, Mollifier};
use topoflock_core::scenarios::{group_split, oscillator, outlier, random_cloud};
use topoflock_core::swarm::{pattern_metrics, simulate_swarm, unit_box_ensemble, SwarmParams};
use topoflock_core::topology::communication_matrix;
use topoflock_core::weights::NormalizedKernel;
use topoflock_core::{AgentEnsemble, WeightFunction};

use crate::config::{component_seed, Model, RunConfig};
use crate::output::{
    self, diagnostics_csv, switches_doc, trajectory_csv, FlockingDoc, PredictionDoc, Summary,
    SwarmDoc,
};

/// Everything a run produces before any file is written.
pub struct RunProducts {
    pub trajectory: Trajectory,
    pub series: DiagnosticsSeries,
    /// (strong, weak) per switch-log interval; `(None, None)` where the model
    /// has no digraph or no sample landed inside the interval.
    pub connectivity: Vec<(Option<bool>, Option<bool>)>,
    pub prediction: Option<PredictionDoc>,
    pub swarm: Option<SwarmDoc>,
}

fn sim_options(config: &RunConfig) -> SimOptions {
    SimOptions {
        sample_every: config.sample_every.unwrap_or(1),
        refine_switches: config.refine_switches.unwrap_or(true),
        ..SimOptions::default()
    }
}

fn rank_weights(config: &RunConfig) -> Result<WeightFunction> {
    let table = config
        .weight_table
        .clone()
        .ok_or_else(|| anyhow!("resolved configuration is missing weight_table"))?;
    Ok(WeightFunction::topological(table)?)
}

fn metric_weights(config: &RunConfig) -> Result<WeightFunction> {
    Ok(WeightFunction::metric(
        config.lambda.unwrap_or(1.0),
        config.sigma.unwrap_or(1.0),
        config.beta.unwrap_or(0.3),
    )?)
}

fn kernel_weights(config: &RunConfig) -> Result<WeightFunction> {
    let kernel = match config.kernel.as_deref() {
        Some("constant") | None => NormalizedKernel::Constant(config.g0.unwrap_or(1.0)),
        Some("affine") => NormalizedKernel::Affine {
            intercept: config.intercept.unwrap_or(1.0),
            slope: config.slope.unwrap_or(0.0),
        },
        Some("exponential") => NormalizedKernel::Exponential {
            amplitude: config.amplitude.unwrap_or(1.0),
            length: config.length.unwrap_or(1.0),
        },
        Some(other) => bail!("unknown kernel \"{other}\""),
    };
    Ok(WeightFunction::normalized(kernel)?)
}

/// Initial state plus weights for the discrete-agent scenarios.
fn build_agents(config: &RunConfig, model: Model) -> Result<(AgentEnsemble, WeightFunction)> {
    match config.scenario.as_str() {
        "oscillator" => Ok(oscillator(config.c.unwrap_or(0.5))?),
        "group-split" => Ok(group_split()),
        "outlier" => Ok(outlier(config.n_agents.unwrap_or(5))?),
        "random-cloud" => {
            let ensemble = random_cloud(
                config.n_agents.unwrap_or(10),
                config.dim.unwrap_or(2),
                config.pos_half_width.unwrap_or(2.0),
                config.vel_half_width.unwrap_or(1.0),
                component_seed(config.seed.unwrap_or(0), "initial-conditions"),
            )?;
            let weights = if model == Model::Metric {
                metric_weights(config)?
            } else {
                rank_weights(config)?
            };
            Ok((ensemble, weights))
        }
        other => bail!("scenario \"{other}\" is not a discrete-agent scenario"),
    }
}

/// Index of a sample inside the interval, if any.  Intervals are half-open
/// except the last, which owns the final sample.
fn sample_in(times: &[f64], iv: &TopologyInterval, is_last: bool) -> Option<usize> {
    let lo = times.partition_point(|t| *t < iv.t_start);
    if lo >= times.len() {
        return None;
    }
    let t = times[lo];
    if t < iv.t_end || (is_last && t <= iv.t_end) {
        Some(lo)
    } else {
        None
    }
}

/// Recomputes the digraph at one sample inside each interval and reports its
/// connectivity.  Micro-intervals that contain no sample stay unannotated.
fn interval_connectivity(
    traj: &Trajectory,
    weights: &WeightFunction,
) -> Vec<(Option<bool>, Option<bool>)> {
    let last = traj.switch_log.intervals.len().saturating_sub(1);
    traj.switch_log
        .intervals
        .iter()
        .enumerate()
        .map(|(idx, iv)| match sample_in(&traj.times, iv, idx == last) {
            Some(s) => match communication_matrix(&traj.states[s], weights) {
                Ok(topo) => {
                    let report = strongly_connected_components(&topo);
                    (Some(report.is_strong), Some(report.is_weak))
                }
                Err(_) => (None, None),
            },
            None => (None, None),
        })
        .collect()
}

fn no_connectivity(log: &SwitchLog) -> Vec<(Option<bool>, Option<bool>)> {
    vec![(None, None); log.intervals.len()]
}

/// Single smooth-flow interval carrying the null fingerprint, matching the
/// logs the kinetic and swarm integrators emit.
fn smooth_log(t_end: f64) -> SwitchLog {
    let mut occupancy = BTreeMap::new();
    occupancy.insert(0u64, t_end);
    SwitchLog {
        events: Vec::new(),
        intervals: vec![TopologyInterval { t_start: 0.0, t_end, hash: 0 }],
        occupancy,
    }
}

pub fn run_simulation(config: &RunConfig) -> Result<RunProducts> {
    let model = config.model()?;
    let opts = sim_options(config);
    let dt = config.dt.ok_or_else(|| anyhow!("configuration is not resolved (dt unset)"))?;
    let t_end = config.t_end.unwrap();
    let seed = config.seed.unwrap_or(0);

    let mut prediction = None;
    let mut swarm_doc = None;

    let (trajectory, connectivity) = match model {
        Model::Topological | Model::Metric => {
            let (ensemble, weights) = build_agents(config, model)?;
            let traj = simulate(&ensemble, &weights, dt, t_end, &opts)?;
            let conn = interval_connectivity(&traj, &weights);
            (traj, conn)
        }
        Model::FixedTopology => {
            let (ensemble, weights) = build_agents(config, model)?;
            let topo = communication_matrix(&ensemble, &weights)?;
            let report = strongly_connected_components(&topo);
            let cert = left_null_vector(&topo);
            let velocity = if cert.valid {
                Some(predict_consensus(&cert, &ensemble)?)
            } else {
                None
            };
            prediction = Some(PredictionDoc {
                valid: cert.valid,
                kernel_dim: cert.kernel_dim,
                xi: cert.xi.clone(),
                velocity,
            });
            let traj = simulate_fixed_topology(&ensemble, &topo, dt, t_end, &opts)?;
            let conn = vec![
                (Some(report.is_strong), Some(report.is_weak));
                traj.switch_log.intervals.len()
            ];
            (traj, conn)
        }
        Model::Meanfield => {
            let ensemble = random_cloud(
                config.n_agents.unwrap_or(50),
                config.dim.unwrap_or(1),
                config.pos_half_width.unwrap_or(1.0),
                config.vel_half_width.unwrap_or(0.5),
                component_seed(seed, "initial-conditions"),
            )?;
            let measure = EmpiricalMeasure::from_ensemble(&ensemble);
            let weights = kernel_weights(config)?;
            let moll = Mollifier::new(config.epsilon.unwrap_or(0.5))?;
            let traj = simulate_meanfield_particles(&measure, &weights, &moll, dt, t_end, &opts)?;
            let conn = no_connectivity(&traj.switch_log);
            (traj, conn)
        }
        Model::Hydro => {
            let n = config.n_agents.unwrap_or(64);
            let amp = config.vel_half_width.unwrap_or(0.5);
            let positions: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            let velocities: Vec<f64> =
                positions.iter().map(|x| amp * (2.0 * std::f64::consts::PI * x).sin()).collect();
            let state = HydroState::uniform(positions, velocities)?;
            let weights = kernel_weights(config)?;
            let hydro = simulate_hydro(&state, &weights, dt, t_end, &opts)?;
            // Re-express parcels as unit-mass agents so the shared diagnostics
            // apply; the momentum column is then the unweighted parcel mean.
            let states: Vec<AgentEnsemble> = hydro
                .states
                .iter()
                .map(|s| AgentEnsemble::new_1d(s.positions().to_vec(), s.velocities().to_vec()))
                .collect::<topoflock_core::Result<_>>()?;
            let traj =
                Trajectory { times: hydro.times, states, switch_log: smooth_log(t_end) };
            let conn = no_connectivity(&traj.switch_log);
            (traj, conn)
        }
        Model::Swarm => {
            let ensemble =
                unit_box_ensemble(config.n_agents.unwrap_or(100), component_seed(seed, "initial-conditions"))?;
            let params = SwarmParams {
                a: config.a.unwrap_or(1.0),
                b: config.b.unwrap_or(0.5),
                c_rep: config.c_rep.unwrap_or(1.0),
                l_rep: config.l_rep.unwrap_or(0.5),
                c_att: config.c_att.unwrap_or(1.0),
                l_att: config.l_att.unwrap_or(0.1),
            };
            let traj = simulate_swarm(&ensemble, &params, dt, t_end, &opts)?;
            let cutoff = 3.0 * params.l_rep;
            let pattern = pattern_metrics(&traj, cutoff)?;
            let half = pattern.times.partition_point(|t| *t < t_end / 2.0);
            let peak = pattern.angular_momentum[half.min(pattern.times.len() - 1)..]
                .iter()
                .fold(0.0_f64, |m, a| m.max(a.abs()));
            swarm_doc = Some(SwarmDoc {
                final_cluster_count: *pattern.cluster_count.last().unwrap(),
                final_polarization: *pattern.polarization.last().unwrap(),
                peak_angular_momentum: peak,
            });
            let conn = no_connectivity(&traj.switch_log);
            (traj, conn)
        }
    };

    let series = compute_series(&trajectory);
    Ok(RunProducts { trajectory, series, connectivity, prediction, swarm: swarm_doc })
}

/// First switch after the initial tie resolution; for the oscillator this is
/// the middle agent's first return to the origin.
fn first_return_time(traj: &Trajectory) -> Option<f64> {
    traj.switch_log.events.iter().map(|ev| ev.time).find(|t| *t > 1e-6)
}

pub fn build_summary(config: &RunConfig, products: &RunProducts) -> Summary {
    let traj = &products.trajectory;
    let first = &traj.states[0];
    let report = check_flocking(&products.series, 1e-3);
    Summary {
        schema_version: 1,
        config: config.clone(),
        n_agents: first.n_agents(),
        dim: first.dim(),
        final_time: traj.final_time(),
        n_switch_events: traj.switch_log.events.len(),
        flocking: FlockingDoc {
            flocked: report.flocked,
            t_flock: report.t_flock,
            v_consensus: report.v_consensus,
        },
        momentum_drift: momentum_drift(traj),
        first_return_time: if config.scenario == "oscillator" {
            first_return_time(traj)
        } else {
            None
        },
        consensus_prediction: products.prediction.clone(),
        swarm: products.swarm.clone(),
    }
}

pub fn write_outputs(config: &RunConfig, products: &RunProducts, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    output::write_text(&dir.join("trajectory.csv"), &trajectory_csv(&products.trajectory))?;
    let dim = products.trajectory.states[0].dim();
    output::write_text(&dir.join("diagnostics.csv"), &diagnostics_csv(&products.series, dim))?;
    let switches = switches_doc(&products.trajectory.switch_log, &products.connectivity);
    output::write_json(&dir.join("switches.json"), &switches)?;
    output::write_json(&dir.join("summary.json"), &build_summary(config, products))?;
    Ok(())
}

/// Resolves, runs, and writes one configuration; returns the run directory.
pub fn execute(config: &RunConfig, quiet: bool) -> Result<PathBuf> {
    let resolved = config.resolve()?;
    let dir = PathBuf::from(resolved.output_dir.as_deref().unwrap_or("out"));
    let products = run_simulation(&resolved)?;
    write_outputs(&resolved, &products, &dir)?;
    if !quiet {
        let traj = &products.trajectory;
        println!(
            "{}: {} agents, t = {}, {} switch events -> {}",
            resolved.scenario,
            traj.states[0].n_agents(),
            traj.final_time(),
            traj.switch_log.events.len(),
            dir.display()
        );
    }
    Ok(dir)
}
