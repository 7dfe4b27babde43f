//! Run configuration: JSON document plus dotted-path overrides.

use axoneme::measure::{ClusterOptions, Engine as MeasureEngine, MeasureOptions, ScanParam};
use axoneme::pde::{Grid, Model};
use axoneme::spectral::DEFAULT_N_MAX;
use axoneme::PhysicalParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Solver selection. `dt` for the PDE defaults to `1e-3 * dx` (s per nm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineConfig {
    Pde {
        cells: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
    },
    Ode {
        dt: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

/// Default PDE time step per cell width (s/nm).
pub const DEFAULT_DT_PER_DX: f64 = 1e-3;

impl EngineConfig {
    pub fn to_measure(&self, ell: f64) -> MeasureEngine {
        match *self {
            EngineConfig::Pde { cells, dt } => MeasureEngine::Pde {
                cells,
                dt_per_dx: dt.map_or(DEFAULT_DT_PER_DX, |dt| dt * cells as f64 / ell),
            },
            EngineConfig::Ode { dt, n_max } => MeasureEngine::Ode { dt, n_max },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub param: String,
    pub rel_range: f64,
    pub points: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            param: "k".into(),
            rel_range: 0.05,
            points: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Trailing window (s) analysed for phases.
    pub window: f64,
    /// Half-width of the initial random filament offsets (nm).
    pub shift_amplitude: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            window: 0.5,
            shift_amplitude: 0.01,
        }
    }
}

/// One experiment, fully specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub engine: EngineConfig,
    pub params: PhysicalParams,
    /// `Omega = Omega0 (1 + delta)`; overrides `params.Omega`.
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub seed: u64,
    pub output: String,
    pub record_stride: usize,
    /// Initial displacement offset (nm) for one- and two-row runs.
    pub x0: f64,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: Model::TwoRow,
            engine: EngineConfig::Pde {
                cells: 200,
                dt: None,
            },
            params: PhysicalParams::reference(),
            delta: 0.1,
            steps: None,
            t_end: Some(1.0),
            seed: 0,
            output: "out/run".into(),
            record_stride: 1,
            x0: 0.01,
            sweep: SweepConfig::default(),
            sensitivity: SensitivityConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parses a config document; a manifest (which embeds its config under
    /// `"config"`) is accepted too.
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| config_err(format!("invalid JSON: {e}")))?;
        Self::from_value(unwrap_manifest(v))
    }

    pub fn from_value(v: Value) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_value(v).map_err(|e| config_err(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn params_at_delta(&self) -> PhysicalParams {
        self.params.at_delta(self.delta)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.delta.is_nan() || self.delta <= -1.0 {
            return Err(config_err(format!(
                "delta must exceed -1, got {}",
                self.delta
            )));
        }
        self.params_at_delta()
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.model
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        match (self.steps, self.t_end) {
            (Some(_), Some(_)) => return Err(config_err("give either steps or t_end, not both")),
            (Some(0), None) => return Err(config_err("steps must be at least 1")),
            (None, Some(t)) if !(t > 0.0 && t.is_finite()) => {
                return Err(config_err(format!("t_end must be positive, got {t}")))
            }
            _ => {}
        }
        if self.record_stride == 0 {
            return Err(config_err("record_stride must be at least 1"));
        }
        match self.engine {
            EngineConfig::Pde { cells, dt } => {
                let dt = dt.unwrap_or(DEFAULT_DT_PER_DX * self.params.ell / cells.max(1) as f64);
                Grid::new(cells, self.params.ell, dt).map_err(|e| config_err(e.to_string()))?;
            }
            EngineConfig::Ode { dt, n_max } => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(config_err(format!("ode dt must be positive, got {dt}")));
                }
                if n_max == 0 {
                    return Err(config_err("n_max must be at least 1"));
                }
            }
        }
        if !self.x0.is_finite() {
            return Err(config_err("x0 must be finite"));
        }
        self.sensitivity
            .param
            .parse::<ScanParam>()
            .map_err(config_err)?;
        Ok(())
    }

    /// Time step of the configured engine.
    pub fn dt(&self) -> f64 {
        self.engine.to_measure(self.params.ell).dt(self.params.ell)
    }

    /// Number of steps to take.
    pub fn step_count(&self) -> usize {
        match (self.steps, self.t_end) {
            (Some(n), _) => n,
            (None, Some(t)) => (t / self.dt() - 1e-9).ceil().max(1.0) as usize,
            (None, None) => (1.0 / self.dt()).ceil() as usize,
        }
    }

    pub fn measure_options(&self) -> MeasureOptions {
        MeasureOptions {
            x0: self.x0,
            ..MeasureOptions::new(self.engine.to_measure(self.params.ell))
        }
    }

    pub fn cluster_options(&self) -> Result<ClusterOptions, CliError> {
        let rows = match self.model {
            Model::NRow(n) => n,
            _ => return Err(config_err("cluster needs model {\"n_row\": N}")),
        };
        let (cells, dt_per_dx) = match self.engine.to_measure(self.params.ell) {
            MeasureEngine::Pde { cells, dt_per_dx } => (cells, dt_per_dx),
            MeasureEngine::Ode { .. } => return Err(config_err("cluster needs the pde engine")),
        };
        let t_end = self.step_count() as f64 * self.dt();
        if self.cluster.window >= t_end {
            return Err(config_err("cluster window must be shorter than the run"));
        }
        Ok(ClusterOptions {
            rows,
            cells,
            dt_per_dx,
            shift_amplitude: self.cluster.shift_amplitude,
            t_end,
            window: self.cluster.window,
        })
    }

    /// Canonical JSON used for hashing and manifests.
    pub fn canonical_json(&self) -> String {
        // serde_json::Value keeps object keys sorted, so this is stable.
        let v = serde_json::to_value(self).expect("config serialises");
        serde_json::to_string(&v).expect("value serialises")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn unwrap_manifest(v: Value) -> Value {
    match v {
        Value::Object(mut m) if m.contains_key("config_hash") && m.contains_key("config") => {
            m.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    }
}

/// Sets `path` (dot separated) in `doc` to `raw`, parsed as JSON when
/// possible and as a string otherwise. Missing intermediate objects are
/// created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
    if path.is_empty() {
        return Err(config_err("empty override key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| config_err(format!("{path}: {key:?} is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one key")
}

/// Loads the base document (file or defaults), applies overrides, a seed
/// and an output prefix, and validates.
pub fn load(
    path: Option<&std::path::Path>,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&str>,
) -> Result<RunConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| config_err(format!("invalid JSON: {e}")))?;
            unwrap_manifest(v)
        }
        None => serde_json::to_value(RunConfig::default()).expect("defaults serialise"),
    };
    // A file may omit fields; fill them from the defaults.
    let defaults = serde_json::to_value(RunConfig::default()).expect("defaults serialise");
    merge_missing(&mut doc, &defaults);
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(s) = seed {
        doc["seed"] = Value::from(s);
    }
    if let Some(o) = out {
        doc["output"] = Value::from(o);
    }
    // A step count given explicitly replaces the default duration.
    if overrides.iter().any(|o| o.starts_with("steps=")) {
        if let Some(m) = doc.as_object_mut() {
            if !overrides.iter().any(|o| o.starts_with("t_end=")) {
                m.remove("t_end");
            }
        }
    }
    RunConfig::from_value(doc)
}

fn merge_missing(doc: &mut Value, defaults: &Value) {
    if let (Value::Object(d), Value::Object(def)) = (doc, defaults) {
        let has_duration = d.contains_key("steps") || d.contains_key("t_end");
        for (k, v) in def {
            if (k == "t_end" || k == "steps") && has_duration {
                continue;
            }
            match d.get_mut(k) {
                Some(existing) if k != "engine" && k != "model" => merge_missing(existing, v),
                Some(_) => {}
                None => {
                    d.insert(k.clone(), v.clone());
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_json_str(&c.canonical_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn overrides() {
        let mut doc = serde_json::to_value(RunConfig::default()).unwrap();
        apply_override(&mut doc, "params.k_spring=2e-4").unwrap();
        apply_override(&mut doc, "delta=-0.1").unwrap();
        apply_override(&mut doc, "model={\"n_row\":8}").unwrap();
        apply_override(&mut doc, "output=foo/bar").unwrap();
        let c = RunConfig::from_value(doc).unwrap();
        assert_eq!(c.params.k_spring, 2e-4);
        assert_eq!(c.delta, -0.1);
        assert_eq!(c.model, Model::NRow(8));
        assert_eq!(c.output, "foo/bar");
        let mut doc = serde_json::to_value(RunConfig::default()).unwrap();
        assert!(apply_override(&mut doc, "novalue").is_err());
        assert!(apply_override(&mut doc, "delta.x=1").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = |o: &str| load(None, &[o.to_string()], None, None).is_err();
        assert!(bad("engine={\"pde\":{\"cells\":0}}"));
        assert!(bad("delta=-1"));
        assert!(bad("model={\"n_row\":1}"));
        assert!(bad("record_stride=0"));
        assert!(bad("engine={\"ode\":{\"dt\":0}}"));
        assert!(bad("sensitivity.param=U"));
        assert!(bad("bogus=1"));
        assert!(!bad("steps=10"));
    }

    #[test]
    fn manifest_documents_are_accepted() {
        let c = RunConfig {
            delta: 0.2,
            ..RunConfig::default()
        };
        let manifest = serde_json::json!({"config": c, "config_hash": c.hash(), "seed": 0});
        let back = RunConfig::from_json_str(&manifest.to_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn step_count_from_duration() {
        let c = RunConfig {
            engine: EngineConfig::Ode { dt: 1e-3, n_max: 1 },
            t_end: Some(0.5),
            ..RunConfig::default()
        };
        assert_eq!(c.step_count(), 500);
        let c = RunConfig {
            steps: Some(7),
            t_end: None,
            ..RunConfig::default()
        };
        assert_eq!(c.step_count(), 7);
    }
}
