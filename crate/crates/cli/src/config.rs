//! Config-file loading and flag overrides.
//!
//! A run config is a JSON document with an optional `schema` field and the
//! simulator config fields; unknown keys are rejected with the offending key
//! name rather than silently ignored. Flag overrides are applied on top of
//! whatever the file (or the built-in default) provides.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use taiji_core::params::{validate_params, ArrivalMode};
use taiji_core::{SimConfig, StrategyName, TraceLevel};

/// Bumped whenever the config file layout changes shape.
pub const CONFIG_SCHEMA: u32 = 1;

const TOP_KEYS: &[&str] = &[
    "schema",
    "params",
    "strategy",
    "tx_rate",
    "tx_stop_round",
    "seed",
    "trace_level",
    "strict",
];
const PARAM_KEYS: &[&str] = &[
    "m",
    "beta",
    "fp_bar",
    "fv_bar",
    "r_max",
    "kappa",
    "k_min_override",
    "arrival_mode",
    "honest_node_count",
];
const STRATEGY_KEYS: &[&str] = &["name", "script"];

fn reject_unknown(object: &Value, allowed: &[&str], where_: &str) -> Result<()> {
    let Some(map) = object.as_object() else {
        bail!("config: `{where_}` must be a JSON object");
    };
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            bail!(
                "config: unknown key `{key}` in {where_} (allowed: {})",
                allowed.join(", ")
            );
        }
    }
    Ok(())
}

/// Loads a simulator config from `path`, or the built-in default when no
/// path is given. Key vetting happens before deserialization so a typo'd
/// field fails by name instead of silently taking its default.
pub fn load_sim_config(path: Option<&Path>) -> Result<SimConfig> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("config: cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .with_context(|| format!("config: {} is not valid JSON", path.display()))?;

    reject_unknown(&value, TOP_KEYS, "the top level")?;
    if let Some(params) = value.get("params") {
        reject_unknown(params, PARAM_KEYS, "`params`")?;
    }
    if let Some(strategy) = value.get("strategy") {
        reject_unknown(strategy, STRATEGY_KEYS, "`strategy`")?;
    }
    let schema = value.get("schema").and_then(Value::as_u64).unwrap_or(1);
    if schema != u64::from(CONFIG_SCHEMA) {
        bail!("config: schema {schema} not supported (this build reads schema {CONFIG_SCHEMA})");
    }

    serde_json::from_value(value)
        .with_context(|| format!("config: {} does not parse", path.display()))
}

/// Parameter sweep: a base config plus value axes. Each axis defaults to the
/// base value when absent; an explicitly empty axis is a config error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "schema_default")]
    pub schema: u32,
    pub base: SimConfig,
    #[serde(default)]
    pub m: Option<Vec<u32>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub strategies: Option<Vec<StrategyName>>,
    /// Seeds per cell: `seed_start .. seed_start + seeds`.
    pub seeds: u64,
    #[serde(default)]
    pub seed_start: u64,
}

fn schema_default() -> u32 {
    CONFIG_SCHEMA
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("sweep config: cannot read {}", path.display()))?;
    let sweep: SweepConfig = serde_json::from_str(&text)
        .with_context(|| format!("sweep config: {} does not parse", path.display()))?;
    if sweep.schema != CONFIG_SCHEMA {
        bail!(
            "sweep config: schema {} not supported (this build reads schema {CONFIG_SCHEMA})",
            sweep.schema
        );
    }
    if sweep.seeds == 0 {
        bail!("sweep config: `seeds` must be at least 1");
    }
    for (axis, empty) in [
        ("m", sweep.m.as_ref().is_some_and(Vec::is_empty)),
        ("beta", sweep.beta.as_ref().is_some_and(Vec::is_empty)),
        (
            "strategies",
            sweep.strategies.as_ref().is_some_and(Vec::is_empty),
        ),
    ] {
        if empty {
            bail!("sweep config: axis `{axis}` is empty (omit it to pin the base value)");
        }
    }
    Ok(sweep)
}

/// Flag overrides shared by the run-shaped subcommands. Anything set here
/// wins over the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulation horizon in rounds
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Adversary fraction of mining power
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of voter chains
    #[arg(long)]
    pub m: Option<u32>,
    /// Expected proposer-block arrivals per round
    #[arg(long)]
    pub fp: Option<f64>,
    /// Expected voter-block arrivals per round per chain
    #[arg(long)]
    pub fv: Option<f64>,
    /// Minimum vote depth the discounted tally counts
    #[arg(long)]
    pub k_min: Option<u32>,
    /// Adversary strategy: honest_null, hah_displace, ahh_balance,
    /// private_levels, vote_split
    #[arg(long)]
    pub strategy: Option<String>,
    /// Arrival model: poisson or bernoulli
    #[arg(long)]
    pub arrivals: Option<String>,
    /// Number of honest nodes
    #[arg(long)]
    pub honest_nodes: Option<u32>,
    /// Expected transaction arrivals per round
    #[arg(long)]
    pub tx_rate: Option<f64>,
    /// Last round transactions may arrive
    #[arg(long)]
    pub tx_stop: Option<u64>,
    /// Abort on the first model violation instead of counting them
    #[arg(long)]
    pub strict: bool,
    /// Add a per-round state digest to the trace
    #[arg(long)]
    pub state_hash: bool,
}

impl Overrides {
    pub fn apply(&self, sim: &mut SimConfig) -> Result<()> {
        let p = &mut sim.params;
        if let Some(v) = self.seed {
            sim.seed = v;
        }
        if let Some(v) = self.rounds {
            p.r_max = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        if let Some(v) = self.m {
            p.m = v;
        }
        if let Some(v) = self.fp {
            p.fp_bar = v;
        }
        if let Some(v) = self.fv {
            p.fv_bar = v;
        }
        if let Some(v) = self.k_min {
            p.k_min_override = Some(v);
        }
        if let Some(v) = self.honest_nodes {
            p.honest_node_count = v;
        }
        if let Some(ref v) = self.arrivals {
            p.arrival_mode = match v.as_str() {
                "poisson" => ArrivalMode::Poisson,
                "bernoulli" => ArrivalMode::Bernoulli,
                other => bail!("--arrivals must be poisson or bernoulli, got `{other}`"),
            };
        }
        if let Some(ref v) = self.strategy {
            let name: StrategyName = v
                .parse()
                .map_err(|e: String| anyhow!("--strategy: {e}"))?;
            sim.strategy.name = name;
            if name != StrategyName::CustomScript {
                sim.strategy.script = None;
            }
        }
        if let Some(v) = self.tx_rate {
            sim.tx_rate = v;
        }
        if let Some(v) = self.tx_stop {
            sim.tx_stop_round = Some(v);
        }
        if self.strict {
            sim.strict = true;
        }
        if self.state_hash {
            sim.trace_level = TraceLevel::StateHash;
        }
        Ok(())
    }
}

/// Validates the effective parameters: fatal findings become an error (the
/// caller exits 2), non-fatal ones are printed as warnings and the run
/// proceeds (the engine records them as soft flags).
pub fn vet_params(sim: &SimConfig) -> Result<()> {
    let mut fatal = Vec::new();
    for v in validate_params(&sim.params) {
        if v.fatal {
            fatal.push(format!("  {}: {}", v.field, v.message));
        } else {
            eprintln!("warning: {}: {}", v.field, v.message);
        }
    }
    if !fatal.is_empty() {
        bail!("invalid parameters:\n{}", fatal.join("\n"));
    }
    Ok(())
}
