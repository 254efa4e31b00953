//! Run configuration: a flat TOML document checked against a scenario
//! registry.  Parsing rejects unknown keys outright; resolution fills
//! registry defaults, verifies that every key the user set is actually
//! consumed by the chosen scenario and model, and pins the weight
//! specification down to exactly one of the three families (rank table,
//! normalized kernel, distance-graded).

use std::collections::BTreeSet;
use std::fmt;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Integrator family for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Topological,
    Metric,
    FixedTopology,
    Meanfield,
    Hydro,
    Swarm,
}

impl Model {
    pub fn parse(name: &str) -> Result<Model> {
        match name {
            "topological" => Ok(Model::Topological),
            "metric" => Ok(Model::Metric),
            "fixed-topology" => Ok(Model::FixedTopology),
            "meanfield" => Ok(Model::Meanfield),
            "hydro" => Ok(Model::Hydro),
            "swarm" => Ok(Model::Swarm),
            other => bail!(
                "unknown model \"{other}\"; expected one of topological, metric, \
                 fixed-topology, meanfield, hydro, swarm"
            ),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Topological => "topological",
            Model::Metric => "metric",
            Model::FixedTopology => "fixed-topology",
            Model::Meanfield => "meanfield",
            Model::Hydro => "hydro",
            Model::Swarm => "swarm",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw configuration exactly as written.  Every field except `scenario` is
/// optional; `resolve` fills defaults and validates.  Serialization skips
/// unset fields, so `emit(parse(text))` round-trips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_switches: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,

    // Weight specification: a rank table, a normalized kernel family, or
    // the distance-graded triple.  At most one family may be given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_table: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,

    // Scenario parameters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vel_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_rep: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_rep: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_att: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_att: Option<f64>,
}

/// Parses a TOML run configuration.  Unknown keys are hard errors and the
/// message names the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).context("invalid run configuration")?;
    if config.scenario.is_empty() {
        bail!("scenario must not be empty");
    }
    Ok(config)
}

/// Serializes a configuration back to TOML.  Only set fields appear, so a
/// parse/emit cycle is the identity on the document's meaning.
pub fn emit_config(config: &RunConfig) -> Result<String> {
    toml::to_string(config).context("configuration not serializable")
}

/// One registry entry: name, blurb, models the scenario supports (first is
/// the default), and the parameter keys it consumes beyond the common set.
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub models: &'static [Model],
    pub params: &'static [&'static str],
    pub default_dt: f64,
    pub default_t_end: f64,
}

const WEIGHT_KEYS: &[&str] =
    &["weight_table", "kernel", "g0", "intercept", "slope", "amplitude", "length"];
const METRIC_KEYS: &[&str] = &["lambda", "sigma", "beta"];

pub const REGISTRY: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "oscillator",
        summary: "7 agents on a line; the middle one is launched at speed c and \
                  crosses the origin forever, switching partners each time",
        models: &[Model::Topological, Model::FixedTopology],
        params: &["c"],
        default_dt: 1e-3,
        default_t_end: 20.0,
    },
    ScenarioInfo {
        name: "group-split",
        summary: "two mirrored wings fly apart from a resting middle agent under \
                  two-nearest averaging; the rank tether drains them to rest",
        models: &[Model::Topological, Model::FixedTopology],
        params: &[],
        default_dt: 1e-2,
        default_t_end: 100.0,
    },
    ScenarioInfo {
        name: "outlier",
        summary: "a tight block that ignores one far agent; the digraph is never \
                  strongly connected yet the outlier is dragged to the block",
        models: &[Model::Topological, Model::FixedTopology],
        params: &["n_agents"],
        default_dt: 1e-2,
        default_t_end: 30.0,
    },
    ScenarioInfo {
        name: "random-cloud",
        summary: "seeded uniform cloud; rank table, normalized kernel, or \
                  distance-graded weights",
        models: &[Model::Topological, Model::Metric, Model::FixedTopology],
        params: &["n_agents", "dim", "pos_half_width", "vel_half_width"],
        default_dt: 1e-2,
        default_t_end: 50.0,
    },
    ScenarioInfo {
        name: "meanfield",
        summary: "self-consistent particle cloud driven by the smoothed-rank \
                  kinetic field",
        models: &[Model::Meanfield],
        params: &["n_agents", "dim", "epsilon", "pos_half_width", "vel_half_width"],
        default_dt: 1e-2,
        default_t_end: 5.0,
    },
    ScenarioInfo {
        name: "hydro",
        summary: "1-D Lagrangian parcels with a sinusoidal velocity profile and \
                  mass-rank local averaging",
        models: &[Model::Hydro],
        params: &["n_agents", "vel_half_width"],
        default_dt: 1e-3,
        default_t_end: 20.0,
    },
    ScenarioInfo {
        name: "swarm",
        summary: "self-propelled planar swarm with Morse repulsion and rank-graded \
                  attraction, seeded in the unit box",
        models: &[Model::Swarm],
        params: &["n_agents", "a", "b", "c_rep", "l_rep", "c_att", "l_att"],
        default_dt: 1e-3,
        default_t_end: 10.0,
    },
];

pub fn scenario_info(name: &str) -> Result<&'static ScenarioInfo> {
    REGISTRY.iter().find(|s| s.name == name).ok_or_else(|| {
        let known: Vec<&str> = REGISTRY.iter().map(|s| s.name).collect();
        anyhow!("unknown scenario \"{name}\"; known scenarios: {}", known.join(", "))
    })
}

/// Expands a 64-bit run seed into a stable per-component stream (FNV-1a over
/// the component name, with the seed folded into the offset basis).  Adding
/// components never perturbs existing streams.
pub fn component_seed(seed: u64, component: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325_u64 ^ seed;
    for byte in component.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{name} must be finite and positive, got {v}");
    }
    Ok(())
}

fn require_fixed(scenario: &str, key: &str, given: Option<usize>, fixed: usize) -> Result<()> {
    match given {
        Some(v) if v != fixed => {
            bail!("scenario \"{scenario}\" has {key} fixed at {fixed}, got {v}")
        }
        _ => Ok(()),
    }
}

impl RunConfig {
    fn set_keys(&self) -> BTreeSet<&'static str> {
        let mut keys = BTreeSet::new();
        macro_rules! mark {
            ($($field:ident),*) => {
                $(if self.$field.is_some() { keys.insert(stringify!($field)); })*
            };
        }
        mark!(
            model, n_agents, dim, dt, t_end, sample_every, seed, refine_switches,
            output_dir, weight_table, kernel, g0, intercept, slope, amplitude,
            length, lambda, sigma, beta, c, epsilon, pos_half_width,
            vel_half_width, a, b, c_rep, l_rep, c_att, l_att
        );
        keys
    }

    /// Fills registry defaults and validates the result.  The returned
    /// configuration has every consumed field set and every other field
    /// unset; a set key the scenario/model does not consume is an error.
    pub fn resolve(&self) -> Result<RunConfig> {
        let info = scenario_info(&self.scenario)?;
        let model = match &self.model {
            Some(name) => {
                let m = Model::parse(name)?;
                if !info.models.contains(&m) {
                    bail!(
                        "scenario \"{}\" does not support model \"{m}\"; supported: {}",
                        info.name,
                        info.models.iter().map(Model::name).collect::<Vec<_>>().join(", ")
                    );
                }
                m
            }
            None => info.models[0],
        };

        // Every key the user set must be consumed by this scenario + model.
        // n_agents and dim are always accepted; scenarios with fixed geometry
        // insist they match (so a resolved config re-resolves unchanged).
        let mut allowed: BTreeSet<&str> = [
            "model",
            "n_agents",
            "dim",
            "dt",
            "t_end",
            "sample_every",
            "seed",
            "refine_switches",
            "output_dir",
        ]
        .into();
        allowed.extend(info.params);
        match model {
            Model::Metric => allowed.extend(METRIC_KEYS),
            Model::Meanfield | Model::Hydro => allowed.extend(&WEIGHT_KEYS[1..]),
            Model::Topological | Model::FixedTopology if info.name == "random-cloud" => {
                allowed.extend(WEIGHT_KEYS)
            }
            _ => {}
        }
        for key in self.set_keys() {
            if !allowed.contains(key) {
                bail!(
                    "key \"{key}\" is not used by scenario \"{}\" with model \"{model}\"",
                    info.name
                );
            }
        }

        let mut r = self.clone();
        r.model = Some(model.name().to_string());
        r.dt = Some(self.dt.unwrap_or(info.default_dt));
        r.t_end = Some(self.t_end.unwrap_or(info.default_t_end));
        r.sample_every = Some(self.sample_every.unwrap_or(1));
        r.seed = Some(self.seed.unwrap_or(0));
        r.refine_switches = Some(self.refine_switches.unwrap_or(true));
        r.output_dir = Some(self.output_dir.clone().unwrap_or_else(|| "out".to_string()));

        require_positive("dt", r.dt.unwrap())?;
        require_positive("t_end", r.t_end.unwrap())?;
        if r.sample_every == Some(0) {
            bail!("sample_every must be at least 1");
        }

        match info.name {
            "oscillator" => {
                require_fixed(info.name, "n_agents", self.n_agents, 7)?;
                require_fixed(info.name, "dim", self.dim, 1)?;
                r.n_agents = Some(7);
                r.dim = Some(1);
                r.c = Some(self.c.unwrap_or(0.5));
                require_positive("c", r.c.unwrap())?;
            }
            "group-split" => {
                require_fixed(info.name, "n_agents", self.n_agents, 7)?;
                require_fixed(info.name, "dim", self.dim, 1)?;
                r.n_agents = Some(7);
                r.dim = Some(1);
            }
            "outlier" => {
                require_fixed(info.name, "dim", self.dim, 1)?;
                r.n_agents = Some(self.n_agents.unwrap_or(5));
                r.dim = Some(1);
            }
            "random-cloud" => {
                r.n_agents = Some(self.n_agents.unwrap_or(10));
                r.dim = Some(self.dim.unwrap_or(2));
                r.pos_half_width = Some(self.pos_half_width.unwrap_or(2.0));
                r.vel_half_width = Some(self.vel_half_width.unwrap_or(1.0));
                require_positive("pos_half_width", r.pos_half_width.unwrap())?;
                require_positive("vel_half_width", r.vel_half_width.unwrap())?;
                if model == Model::Metric {
                    r.lambda = Some(self.lambda.unwrap_or(1.0));
                    r.sigma = Some(self.sigma.unwrap_or(1.0));
                    r.beta = Some(self.beta.unwrap_or(0.3));
                } else {
                    let n = r.n_agents.unwrap();
                    resolve_rank_weights(&mut r, self, n)?;
                }
            }
            "meanfield" => {
                r.n_agents = Some(self.n_agents.unwrap_or(50));
                r.dim = Some(self.dim.unwrap_or(1));
                r.epsilon = Some(self.epsilon.unwrap_or(0.5));
                require_positive("epsilon", r.epsilon.unwrap())?;
                r.pos_half_width = Some(self.pos_half_width.unwrap_or(1.0));
                r.vel_half_width = Some(self.vel_half_width.unwrap_or(0.5));
                resolve_kernel(&mut r, self, 1.0)?;
            }
            "hydro" => {
                require_fixed(info.name, "dim", self.dim, 1)?;
                r.n_agents = Some(self.n_agents.unwrap_or(64));
                r.dim = Some(1);
                r.vel_half_width = Some(self.vel_half_width.unwrap_or(0.5));
                resolve_kernel(&mut r, self, 0.5)?;
            }
            "swarm" => {
                require_fixed(info.name, "dim", self.dim, 2)?;
                r.n_agents = Some(self.n_agents.unwrap_or(100));
                r.dim = Some(2);
                r.a = Some(self.a.unwrap_or(1.0));
                r.b = Some(self.b.unwrap_or(0.5));
                r.c_rep = Some(self.c_rep.unwrap_or(1.0));
                r.l_rep = Some(self.l_rep.unwrap_or(0.5));
                r.c_att = Some(self.c_att.unwrap_or(1.0));
                r.l_att = Some(self.l_att.unwrap_or(0.1));
            }
            other => bail!("scenario \"{other}\" has no resolution rule"),
        }
        if let Some(n) = r.n_agents {
            if n == 0 {
                bail!("n_agents must be at least 1");
            }
        }
        Ok(r)
    }

    /// The run's model; only valid on a resolved configuration.
    pub fn model(&self) -> Result<Model> {
        Model::parse(self.model.as_deref().unwrap_or(""))
    }
}

/// Rank-table weights for the discrete topological modes: an explicit table
/// (checked against the agent count) or the all-ones default.
fn resolve_rank_weights(r: &mut RunConfig, raw: &RunConfig, n: usize) -> Result<()> {
    for key in &WEIGHT_KEYS[1..] {
        if raw.set_keys().contains(key) {
            bail!("key \"{key}\" belongs to the kernel family; discrete runs take weight_table");
        }
    }
    let table = match &raw.weight_table {
        Some(t) => {
            if t.len() < n {
                bail!("weight_table has {} entries but {n} agents need ranks 0..{n}", t.len());
            }
            t.clone()
        }
        None => vec![1.0; n],
    };
    r.weight_table = Some(table);
    Ok(())
}

/// Normalized kernel family: constant (value `g0`), affine, or exponential.
fn resolve_kernel(r: &mut RunConfig, raw: &RunConfig, default_g0: f64) -> Result<()> {
    let family = raw.kernel.as_deref().unwrap_or("constant");
    r.kernel = Some(family.to_string());
    match family {
        "constant" => {
            r.g0 = Some(raw.g0.unwrap_or(default_g0));
            require_positive("g0", r.g0.unwrap())?;
        }
        "affine" => {
            let intercept = raw.intercept.ok_or_else(|| anyhow!("affine kernel needs intercept"))?;
            let slope = raw.slope.ok_or_else(|| anyhow!("affine kernel needs slope"))?;
            r.intercept = Some(intercept);
            r.slope = Some(slope);
        }
        "exponential" => {
            let amplitude =
                raw.amplitude.ok_or_else(|| anyhow!("exponential kernel needs amplitude"))?;
            let length = raw.length.ok_or_else(|| anyhow!("exponential kernel needs length"))?;
            require_positive("amplitude", amplitude)?;
            require_positive("length", length)?;
            r.amplitude = Some(amplitude);
            r.length = Some(length);
        }
        other => bail!("unknown kernel \"{other}\"; expected constant, affine, or exponential"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_oscillator_config_fills_defaults() {
        let config = parse_config("scenario = \"oscillator\"\nc = 0.25\n").unwrap();
        let r = config.resolve().unwrap();
        assert_eq!(r.model.as_deref(), Some("topological"));
        assert_eq!(r.dt, Some(1e-3));
        assert_eq!(r.t_end, Some(20.0));
        assert_eq!(r.c, Some(0.25));
        assert_eq!(r.seed, Some(0));
        assert_eq!(r.sample_every, Some(1));
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let err = parse_config("scenario = \"oscillator\"\ndtt = 0.1\n").unwrap_err();
        let text = format!("{err:#}");
        assert!(text.contains("dtt"), "error should name the key: {text}");
    }

    #[test]
    fn unconsumed_key_is_rejected_at_resolution() {
        let config = parse_config("scenario = \"swarm\"\nc = 0.5\n").unwrap();
        let err = config.resolve().unwrap_err();
        assert!(format!("{err}").contains("\"c\""));
    }

    #[test]
    fn conflicting_weight_families_are_rejected() {
        let text = "scenario = \"random-cloud\"\nweight_table = [0.0, 1.0]\ng0 = 1.0\n";
        let err = parse_config(text).unwrap().resolve().unwrap_err();
        assert!(format!("{err}").contains("g0"));
    }

    #[test]
    fn short_weight_table_is_rejected() {
        let text = "scenario = \"random-cloud\"\nn_agents = 6\nweight_table = [0.0, 1.0]\n";
        let err = parse_config(text).unwrap().resolve().unwrap_err();
        assert!(format!("{err}").contains("weight_table"));
    }

    #[test]
    fn metric_model_takes_the_distance_triple() {
        let text =
            "scenario = \"random-cloud\"\nmodel = \"metric\"\nlambda = 2.0\nbeta = 0.4\n";
        let r = parse_config(text).unwrap().resolve().unwrap();
        assert_eq!(r.lambda, Some(2.0));
        assert_eq!(r.sigma, Some(1.0));
        assert_eq!(r.beta, Some(0.4));
        assert!(r.weight_table.is_none());
    }

    #[test]
    fn emit_then_parse_is_identity() {
        let text = "scenario = \"meanfield\"\nn_agents = 20\nepsilon = 0.3\nseed = 7\n";
        let config = parse_config(text).unwrap();
        let emitted = emit_config(&config).unwrap();
        assert_eq!(parse_config(&emitted).unwrap(), config);

        let resolved = config.resolve().unwrap();
        let emitted = emit_config(&resolved).unwrap();
        assert_eq!(parse_config(&emitted).unwrap(), resolved);
    }

    #[test]
    fn component_seeds_are_stable_and_distinct() {
        let a = component_seed(42, "initial-conditions");
        assert_eq!(a, component_seed(42, "initial-conditions"));
        assert_ne!(a, component_seed(43, "initial-conditions"));
        assert_ne!(a, component_seed(42, "other"));
    }

    #[test]
    fn every_registry_default_resolves() {
        for info in REGISTRY {
            let config = parse_config(&format!("scenario = \"{}\"\n", info.name)).unwrap();
            let r = config.resolve().unwrap();
            assert_eq!(r.dt, Some(info.default_dt), "{}", info.name);
            assert_eq!(r.model.as_deref(), Some(info.models[0].name()), "{}", info.name);
        }
    }

    #[test]
    fn resolution_is_idempotent() {
        for info in REGISTRY {
            let config = parse_config(&format!("scenario = \"{}\"\n", info.name)).unwrap();
            let once = config.resolve().unwrap();
            let twice = once.resolve().unwrap();
            assert_eq!(once, twice, "{}", info.name);
        }
    }

    #[test]
    fn fixed_geometry_mismatch_is_rejected() {
        let config = parse_config("scenario = \"oscillator\"\nn_agents = 9\n").unwrap();
        let err = config.resolve().unwrap_err();
        assert!(format!("{err}").contains("n_agents"));
    }
}
