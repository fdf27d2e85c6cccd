//! Batch job configuration: TOML text, optional shipped preset underneath, defaults,
//! and validation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bifurcation::{RegionSpec, SweepSpec};
use crate::complementarity::ComplementaritySpec;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::signaling::TypeSpace;
use crate::simulate::{ShockWindow, SimulationConfig};
use crate::solver::SolverConfig;
use crate::welfare::{CrossoverOptions, LinearMarket, WelfareBridge};

/// Shipped presets as `(name, TOML text)`.
pub const PRESETS: [(&str, &str); 4] = [
    ("calibration", include_str!("../presets/calibration.toml")),
    ("figure2", include_str!("../presets/figure2.toml")),
    ("figure3", include_str!("../presets/figure3.toml")),
    ("figure4", include_str!("../presets/figure4.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Solve,
    Simulate,
    Deviation,
    Sweep,
    Region,
    Welfare,
    Signal,
    Check,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Solve => "solve",
            JobKind::Simulate => "simulate",
            JobKind::Deviation => "deviation",
            JobKind::Sweep => "sweep",
            JobKind::Region => "region",
            JobKind::Welfare => "welfare",
            JobKind::Signal => "signal",
            JobKind::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub horizon: usize,
    pub m0: f64,
    pub seed: u64,
    /// Number of paths; path `k` uses generator stream `k`.
    pub paths: usize,
    pub shock_window: Option<ShockWindow>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        SimulationBlock { horizon: 50, m0: 0.5, seed: 0, paths: 1, shock_window: None }
    }
}

impl SimulationBlock {
    pub fn config(&self) -> SimulationConfig {
        SimulationConfig { horizon: self.horizon, m0: self.m0, seed: self.seed, shock_window: self.shock_window }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelfareBlock {
    pub market: LinearMarket,
    pub n_firms: u32,
    /// Effective (below-cost) price of the involution regime.
    pub effective_price: f64,
    pub bridge: WelfareBridge,
    pub crossover: CrossoverOptions,
    /// Horizon `T` at which the dynamic efficiency loss is reported.
    pub horizon: u64,
    /// Subsidy caps for the comparative static; empty to skip.
    pub caps: Vec<f64>,
}

impl Default for WelfareBlock {
    fn default() -> Self {
        WelfareBlock {
            market: LinearMarket::default(),
            n_firms: 2,
            effective_price: 10.0,
            bridge: WelfareBridge::default(),
            crossover: CrossoverOptions::default(),
            horizon: 20,
            caps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalBlock {
    pub spec_low: ComplementaritySpec,
    pub spec_high: ComplementaritySpec,
    #[serde(default = "half")]
    pub mu0: f64,
    /// Evaluation share; defaults to the low type's steady state.
    #[serde(default)]
    pub m: Option<f64>,
}

fn half() -> f64 {
    0.5
}

impl SignalBlock {
    pub fn types(&self) -> TypeSpace {
        TypeSpace { spec_low: self.spec_low.clone(), spec_high: self.spec_high.clone(), mu0: self.mu0 }
    }
}

fn zero_spec() -> ComplementaritySpec {
    ComplementaritySpec::Zero
}

/// A fully resolved job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub job: JobKind,
    #[serde(default)]
    pub preset: Option<String>,
    /// Write outputs and exit successfully even if an equilibrium solve hits its
    /// iteration cap (the status is still recorded in the manifest).
    #[serde(default)]
    pub allow_non_convergence: bool,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default = "zero_spec")]
    pub spec: ComplementaritySpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub welfare: WelfareBlock,
    #[serde(default)]
    pub signal: Option<SignalBlock>,
}

impl JobConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.spec.validate()?;
        self.solver.validate()?;
        if let Some(p) = &self.preset {
            preset_text(p)?;
        }
        match self.job {
            JobKind::Simulate | JobKind::Deviation => {
                self.simulation.config().validate(&self.params)?;
                if self.simulation.paths == 0 {
                    return Err(Error::param("simulation.paths", "must be >= 1"));
                }
            }
            JobKind::Sweep => self.sweep.as_ref().ok_or_else(|| missing("sweep"))?.validate()?,
            JobKind::Region => {
                self.region.as_ref().ok_or_else(|| missing("region"))?;
            }
            JobKind::Welfare => {
                self.welfare.market.validate()?;
                if self.welfare.n_firms == 0 {
                    return Err(Error::param("welfare.n_firms", "must be >= 1"));
                }
            }
            JobKind::Signal => {
                self.signal.as_ref().ok_or_else(|| missing("signal"))?.types().validate()?;
            }
            JobKind::Solve | JobKind::Check => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key, compact) JSON form, excluding the output
    /// directory.  Invariant under key order and whitespace of the source text.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_value(&c).expect("config serializes").to_string();
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn missing(section: &str) -> Error {
    Error::Config(format!("this job needs a [{section}] section"))
}

/// Keys whose tables replace the preset's table wholesale instead of merging,
/// because their shape depends on a `kind` tag.
const REPLACED: [&str; 4] = ["spec", "spec_low", "spec_high", "inner"];

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !REPLACED.contains(&k.as_str()) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Line (1-based) of the first `key =` assignment or `[..key]` header in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('='))
            || (t.starts_with('[') && t.trim_end_matches(']').rsplit('.').next() == Some(key))
    })
    .map(|i| i + 1)
}

/// Parses configuration text.  `kind` (from the command line) fills in or must agree
/// with the `job` key.
pub fn parse_config_as(text: &str, kind: Option<JobKind>) -> Result<JobConfig> {
    let user = parse_table(text, "config")?;
    let mut table = match user.get("preset") {
        Some(toml::Value::String(name)) => {
            let mut base = parse_table(preset_text(name)?, &format!("preset `{name}`"))?;
            base.remove("job");
            base
        }
        Some(_) => return Err(Error::Config("`preset` must be a string".into())),
        None => toml::Table::new(),
    };
    merge(&mut table, user);
    if let Some(kind) = kind {
        match table.get("job") {
            Some(toml::Value::String(j)) if j != kind.name() => {
                return Err(Error::Config(format!("config declares job `{j}` but `{}` was requested", kind.name())));
            }
            _ => {
                table.insert("job".into(), toml::Value::String(kind.name().into()));
            }
        }
    }
    let config: JobConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().trim().to_string();
        let located = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field"))
            .and_then(|k| key_line(text, k))
            .map(|l| format!(" (line {l})"))
            .unwrap_or_default();
        Error::Config(format!("{msg}{located}"))
    })?;
    config.validate()?;
    Ok(config)
}

/// Parses configuration text that names its own `job`.
pub fn parse_config(text: &str) -> Result<JobConfig> {
    parse_config_as(text, None)
}
