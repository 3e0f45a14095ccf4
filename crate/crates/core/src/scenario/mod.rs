//! Configuration-driven runs. A scenario file names a pipeline (`kind`), the
//! trap layout and circuit preset it runs on, and kind-specific `params`.
//! Running it yields a [`RunReport`] plus plot-ready CSV files; both are
//! byte-identical for identical inputs and seed.

mod json;
mod pipelines;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::circuit::CircuitPreset;
use crate::TrapLayout;

pub use json::to_canonical_string;
pub use pipelines::Task;

pub const TOOL_VERSION: &str = concat!("ionmux ", env!("CARGO_PKG_VERSION"));

/// Fixed 12-significant-digit rendering used in every emitted file.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0.00000000000e0".to_string();
    }
    format!("{v:.11e}")
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{file}: {msg}")]
    Validation { file: String, msg: String },
    #[error("{module}: {msg}")]
    Model { module: &'static str, msg: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    /// Process exit code: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } => 2,
            Self::Model { .. } | Self::Output { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

macro_rules! model_error {
    ($ty:ty, $module:literal) => {
        impl From<$ty> for ScenarioError {
            fn from(e: $ty) -> Self {
                ScenarioError::Model { module: $module, msg: e.to_string() }
            }
        }
    };
}
model_error!(crate::trap::TrapError, "trap-model");
model_error!(crate::circuit::CircuitError, "circuit-model");
model_error!(crate::mux::MuxError, "mux-control");
model_error!(crate::waveforms::WaveformError, "waveforms");
model_error!(crate::analysis::AnalysisError, "analysis");
model_error!(csv::Error, "output");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ChargeInjection,
    FloatingDecay,
    CoupledDecay,
    HeatingFit,
    RefreshBudget,
    Transport,
    Shim,
    NoiseInference,
    Calibration,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    id: String,
    kind: ScenarioKind,
    #[serde(default = "default_layout")]
    layout: String,
    #[serde(default)]
    circuit: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "empty_object")]
    params: Value,
}

fn default_layout() -> String {
    "trap1".into()
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

/// A parsed scenario document.
#[derive(Debug, Clone)]
pub struct Scenario {
    doc: Value,
    header: Header,
    base_dir: PathBuf,
    source: String,
}

impl Scenario {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Validation {
            file: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str_in(&text, base, path.display().to_string())
    }

    /// Parse scenario text; relative file references resolve against `base_dir`.
    pub fn from_str_in(text: &str, base_dir: impl Into<PathBuf>, source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        let doc: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Validation {
            file: source.clone(),
            msg: e.to_string(),
        })?;
        Self::from_value(doc, base_dir.into(), source)
    }

    fn from_value(doc: Value, base_dir: PathBuf, source: String) -> Result<Self> {
        let header: Header = serde_json::from_value(doc.clone()).map_err(|e| ScenarioError::Validation {
            file: source.clone(),
            msg: e.to_string(),
        })?;
        if header.id.is_empty() || header.id.contains(['/', '\\']) {
            return Err(ScenarioError::Validation {
                file: source,
                msg: format!("scenario id `{}` must be non-empty and contain no path separators", header.id),
            });
        }
        Ok(Self { doc, header, base_dir, source })
    }

    pub fn id(&self) -> &str {
        &self.header.id
    }

    pub fn kind(&self) -> ScenarioKind {
        self.header.kind
    }

    pub fn seed(&self) -> u64 {
        self.header.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.header.seed = seed;
        self.doc["seed"] = Value::from(seed);
        self
    }

    /// Copy with one field replaced. `param` is a dotted path; paths that do not
    /// start with a top-level key refer into `params`.
    pub fn with_param(&self, param: &str, value: Value) -> Result<Self> {
        let mut doc = self.doc.clone();
        let mut parts: Vec<&str> = param.split('.').collect();
        if !matches!(parts[0], "id" | "kind" | "layout" | "circuit" | "seed" | "params") {
            parts.insert(0, "params");
        }
        let mut cur = &mut doc;
        for (i, p) in parts.iter().enumerate() {
            let obj = cur.as_object_mut().ok_or_else(|| self.invalid(format!("`{param}` does not name an object field")))?;
            if i + 1 == parts.len() {
                obj.insert((*p).to_string(), value.clone());
                break;
            }
            cur = obj.entry((*p).to_string()).or_insert_with(empty_object);
        }
        Self::from_value(doc, self.base_dir.clone(), self.source.clone())
    }

    fn invalid(&self, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Validation { file: self.source.clone(), msg: msg.into() }
    }

    fn resolve(&self, reference: &str) -> PathBuf {
        let p = Path::new(reference);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn is_file_ref(reference: &str) -> bool {
        reference.ends_with(".json") || reference.contains('/') || reference.contains('\\')
    }

    /// Parse the parameters, load every referenced file and check all
    /// voltages against the output range, without running anything.
    pub fn prepare(&self) -> Result<Prepared> {
        let mut inputs = BTreeMap::new();
        inputs.insert("scenario".to_string(), sha256_hex(to_canonical_string(&self.doc).as_bytes()));

        let layout = if Self::is_file_ref(&self.header.layout) {
            let path = self.resolve(&self.header.layout);
            let bytes = fs::read(&path).map_err(|e| self.invalid(format!("layout {}: {e}", path.display())))?;
            inputs.insert("layout".into(), sha256_hex(&bytes));
            let text = String::from_utf8_lossy(&bytes);
            TrapLayout::from_json_str(&text).map_err(|e| self.invalid(format!("layout {}: {e}", path.display())))?
        } else {
            let l = TrapLayout::preset(&self.header.layout).map_err(|e| self.invalid(format!("layout: {e}")))?;
            inputs.insert("layout".into(), sha256_hex(l.to_json().as_bytes()));
            l
        };
        let circuit_ref = self.header.circuit.clone().unwrap_or_else(|| {
            if Self::is_file_ref(&self.header.layout) {
                "trap1".into()
            } else {
                self.header.layout.clone()
            }
        });
        let circuit = if Self::is_file_ref(&circuit_ref) {
            let path = self.resolve(&circuit_ref);
            let bytes = fs::read(&path).map_err(|e| self.invalid(format!("circuit {}: {e}", path.display())))?;
            inputs.insert("circuit".into(), sha256_hex(&bytes));
            CircuitPreset::from_json_str(&String::from_utf8_lossy(&bytes))
                .map_err(|e| self.invalid(format!("circuit {}: {e}", path.display())))?
        } else {
            let c = CircuitPreset::preset(&circuit_ref).map_err(|e| self.invalid(format!("circuit: {e}")))?;
            let canon = serde_json::to_string(&c).unwrap_or_default();
            inputs.insert("circuit".into(), sha256_hex(canon.as_bytes()));
            c
        };

        let mut files = FileLoader { scenario: self, inputs: &mut inputs };
        let task = Task::parse(self.header.kind, &self.header.params, &layout, &mut files)?;
        Ok(Prepared { scenario: self.clone(), layout, circuit, task, inputs })
    }

    pub fn run(&self) -> Result<RunReport> {
        self.prepare()?.run()
    }
}

/// Reads data files referenced by a scenario and records their hashes.
pub(crate) struct FileLoader<'a> {
    scenario: &'a Scenario,
    inputs: &'a mut BTreeMap<String, String>,
}

impl FileLoader<'_> {
    pub(crate) fn read(&mut self, reference: &str) -> Result<String> {
        let path = self.scenario.resolve(reference);
        let bytes = fs::read(&path).map_err(|e| self.invalid(format!("{}: {e}", path.display())))?;
        self.inputs.insert(format!("file:{reference}"), sha256_hex(&bytes));
        String::from_utf8(bytes).map_err(|_| self.invalid(format!("{}: not UTF-8", path.display())))
    }

    pub(crate) fn invalid(&self, msg: impl Into<String>) -> ScenarioError {
        self.scenario.invalid(msg)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A scenario with its inputs loaded and validated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub layout: TrapLayout,
    pub circuit: CircuitPreset,
    pub task: Task,
    inputs: BTreeMap<String, String>,
}

impl Prepared {
    pub fn run(&self) -> Result<RunReport> {
        let out = self.task.execute(self)?;
        Ok(RunReport {
            scenario: self.scenario.id().to_string(),
            kind: self.scenario.kind(),
            summary: out.summary,
            records: out.records,
            warnings: out.warnings,
            provenance: Provenance {
                inputs: self.inputs.clone(),
                tool: TOOL_VERSION.to_string(),
                seed: self.scenario.seed(),
            },
            outputs: out.files.iter().map(|(n, _)| n.clone()).collect(),
            files: out.files,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of every input, keyed by role.
    pub inputs: BTreeMap<String, String>,
    pub tool: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub summary: BTreeMap<String, Value>,
    pub records: Vec<Value>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
    /// Names of the CSV files written next to the report.
    pub outputs: Vec<String>,
    #[serde(skip)]
    pub files: Vec<(String, Vec<u8>)>,
}

pub const REPORT_FILE: &str = "report.json";

impl RunReport {
    pub fn to_json(&self) -> String {
        to_canonical_string(&serde_json::to_value(self).expect("report is plain data"))
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }

    /// Write `report.json` and the CSV series into `dir`.
    pub fn emit(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let err = |path: &Path, source| ScenarioError::Output { path: path.display().to_string(), source };
        fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| err(&p, e))?;
            written.push(p);
        }
        let p = dir.join(REPORT_FILE);
        fs::write(&p, self.to_json()).map_err(|e| err(&p, e))?;
        written.push(p);
        Ok(written)
    }
}

/// One instance per value of `param`, run in parallel. Each report is tagged
/// with the value it ran at; the result order follows `values`.
pub fn run_sweep(base: &Scenario, param: &str, values: &[Value]) -> Result<Vec<(Value, RunReport)>> {
    if values.is_empty() {
        return Err(base.invalid("sweep needs at least one value"));
    }
    let instances = values
        .iter()
        .map(|v| base.with_param(param, v.clone()).map(|s| (v.clone(), s)))
        .collect::<Result<Vec<_>>>()?;
    instances
        .into_par_iter()
        .map(|(v, s)| s.run().map(|r| (v, r)))
        .collect()
}

/// Parse one `--sweep` value: JSON when it parses, a string otherwise.
pub fn parse_sweep_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Directory name for one sweep instance.
pub fn sweep_dir_name(id: &str, param: &str, value: &Value) -> String {
    let v = match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let clean: String = format!("{id}__{param}={v}")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' })
        .collect();
    clean
}
