//! Experiment specs: JSON files, command-line flags and per-kind defaults.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cfpower::{ScenarioConfig, SolverOptions, Targets};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Scenario,
    Solve,
    SweepRuntime,
    SweepSavings,
    Sparsity,
    Maxmin,
}

/// A spec as written by the user. Every field is optional; missing fields
/// fall back to the defaults of the experiment kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: Option<Kind>,
    /// Partial scenario configuration, merged key by key over the defaults.
    pub scenario: Option<Map<String, Value>>,
    pub scenario_file: Option<PathBuf>,
    pub statistics_file: Option<PathBuf>,
    /// Partial solver options, merged key by key over the defaults.
    pub solver: Option<Map<String, Value>>,
    pub aps: Option<Vec<usize>>,
    pub fractions: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub se_target: Option<f64>,
    pub sinr_target: Option<f64>,
    pub bisection_tol: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("spec is not valid JSON")?;
        let Value::Object(patch) = value else {
            bail!("spec must be a JSON object");
        };
        overlay(&ExperimentSpec::default(), &patch, "")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read spec file {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in spec file {}", path.display()))
    }

    /// Fields set in `other` replace those of `self`; object sections merge.
    pub fn merge(mut self, other: ExperimentSpec) -> Self {
        fn section(a: &mut Option<Map<String, Value>>, b: Option<Map<String, Value>>) {
            if let Some(b) = b {
                a.get_or_insert_with(Map::new).extend(b);
            }
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(kind, scenario_file, statistics_file, aps, fractions, seeds, se_target, sinr_target, bisection_tol, output_dir);
        section(&mut self.scenario, other.scenario);
        section(&mut self.solver, other.solver);
        self
    }
}

/// Applies `patch` one key at a time so that errors name the offending field.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: &Map<String, Value>, section: &str) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    let Value::Object(fields) = &mut value else {
        bail!("internal: {section} does not serialize to an object");
    };
    for (key, v) in patch {
        let name = if section.is_empty() { key.clone() } else { format!("{section}.{key}") };
        if !fields.contains_key(key) {
            bail!("unknown field `{name}`");
        }
        let mut trial = fields.clone();
        trial.insert(key.clone(), v.clone());
        serde_json::from_value::<T>(Value::Object(trial)).map_err(|e| anyhow!("field `{name}`: {e}"))?;
        fields.insert(key.clone(), v.clone());
    }
    Ok(serde_json::from_value(value)?)
}

/// Everything a command needs, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub kind: Kind,
    pub scenario: ScenarioConfig,
    pub scenario_file: Option<PathBuf>,
    pub statistics_file: Option<PathBuf>,
    pub solver: SolverOptions,
    pub aps: Vec<usize>,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub targets: TargetSpec,
    pub bisection_tol: f64,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    Se(f64),
    Sinr(f64),
}

impl TargetSpec {
    pub fn for_users(self, users: usize) -> Targets {
        match self {
            TargetSpec::Se(v) => Targets::Se(vec![v; users]),
            TargetSpec::Sinr(v) => Targets::Sinr(vec![v; users]),
        }
    }

    pub fn se(self) -> f64 {
        match self {
            TargetSpec::Se(v) => v,
            TargetSpec::Sinr(v) => cfpower::problem::sinr_to_se(v),
        }
    }
}

pub const DEFAULT_OUTPUT_DIR: &str = "out";

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

fn kind_scenario(kind: Kind) -> ScenarioConfig {
    let base = ScenarioConfig::default();
    match kind {
        Kind::SweepRuntime => ScenarioConfig { num_users: 15, ..base },
        Kind::Sparsity => ScenarioConfig {
            num_users: 5,
            num_aps: 15,
            // at the default 1 km side an SE of 6 is out of reach for most drops
            area_side: 200.0,
            ..base
        },
        _ => base,
    }
}

impl Resolved {
    pub fn new(spec: ExperimentSpec) -> Result<Self> {
        let kind = spec.kind.ok_or_else(|| anyhow!("field `kind` is required"))?;
        let scenario = match &spec.scenario {
            Some(patch) => overlay(&kind_scenario(kind), patch, "scenario")?,
            None => kind_scenario(kind),
        };
        scenario.validate().context("in field `scenario`")?;
        let solver = match &spec.solver {
            Some(patch) => overlay(&SolverOptions::default(), patch, "solver")?,
            None => SolverOptions::default(),
        };
        let targets = match (spec.se_target, spec.sinr_target) {
            (Some(_), Some(_)) => bail!("fields `se_target` and `sinr_target` are exclusive"),
            (Some(se), None) => TargetSpec::Se(se),
            (None, Some(sinr)) => TargetSpec::Sinr(sinr),
            (None, None) => TargetSpec::Se(if kind == Kind::Sparsity { 6.0 } else { 1.0 }),
        };
        let (field, value) = match targets {
            TargetSpec::Se(v) => ("se_target", v),
            TargetSpec::Sinr(v) => ("sinr_target", v),
        };
        if !(value > 0.0 && value.is_finite()) {
            bail!("field `{field}` must be positive and finite, got {value}");
        }
        let aps = spec.aps.unwrap_or_else(|| match kind {
            Kind::SweepRuntime => vec![25, 50, 100],
            Kind::SweepSavings => vec![10, 25],
            _ => vec![scenario.num_aps],
        });
        let fractions = spec
            .fractions
            .unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect());
        let seeds = spec.seeds.unwrap_or_else(|| match kind {
            Kind::SweepRuntime | Kind::SweepSavings | Kind::Sparsity => default_seeds(),
            _ => vec![scenario.seed],
        });
        if aps.is_empty() {
            bail!("field `aps` must be non-empty");
        }
        if seeds.is_empty() {
            bail!("field `seeds` must be non-empty");
        }
        if fractions.is_empty() {
            bail!("field `fractions` must be non-empty");
        }
        if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
            bail!("field `fractions`: {f} is outside (0, 1]");
        }
        if kind == Kind::SweepRuntime && aps.windows(2).any(|w| w[0] >= w[1]) {
            bail!("field `aps` must be strictly ascending for sweep-runtime");
        }
        let bisection_tol = spec.bisection_tol.unwrap_or(0.01);
        if !(bisection_tol > 0.0) {
            bail!("field `bisection_tol` must be positive, got {bisection_tol}");
        }
        Ok(Self {
            kind,
            scenario,
            scenario_file: spec.scenario_file,
            statistics_file: spec.statistics_file,
            solver,
            aps,
            fractions,
            seeds,
            targets,
            bisection_tol,
            output_dir: spec.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        })
    }

    /// SHA-256 over the resolved spec and the contents of any input files.
    pub fn config_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        for path in [&self.scenario_file, &self.statistics_file].into_iter().flatten() {
            let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
            h.update(Sha256::digest(&bytes));
        }
        Ok(hex::encode(h.finalize()))
    }
}
