//! Configuration files: parsing, preset merging and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const EXPERIMENTS: [&str; 7] =
    ["transpose-demo", "build-generator", "evolve", "cp-check", "factorize", "pair-dynamics", "oracle-compare"];

pub const PRESETS: [(&str, &str); 4] = [
    ("two-level-ohmic", include_str!("../presets/two-level-ohmic.toml")),
    ("two-level-exponential", include_str!("../presets/two-level-exponential.toml")),
    ("pair-identical", include_str!("../presets/pair-identical.toml")),
    ("singlet-probe", include_str!("../presets/singlet-probe.toml")),
];

/// One problem found in a configuration, located by field and, when it can
/// be found in the file, by line.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// A real matrix given as rows, or a complex one as separate parts.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Real(Vec<Vec<f64>>),
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub hamiltonian: Option<MatrixSpec>,
    pub couplings: Option<Vec<MatrixSpec>>,
    /// `ground`, `excited`, `plus`, `maximally-mixed`, `gibbs` or `random`.
    pub state: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub kind: Option<String>,
    pub beta: Option<f64>,
    pub amplitude: Option<f64>,
    pub correlation_time: Option<f64>,
    pub coupling: Option<f64>,
    pub cutoff: Option<f64>,
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// `zero`, `full` or `scaled`.
    pub mode: Option<String>,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpSection {
    /// `identity`, `transposition`, `depolarizing`, `random-kraus` or `generator`.
    pub map: Option<String>,
    pub dim: Option<usize>,
    pub kraus_count: Option<usize>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    /// `transpose-mixture`, `davies` or `redfield`.
    pub family: Option<String>,
    /// `singlet` or `product`.
    pub probe: Option<String>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizeSection {
    pub kappas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub modes: Option<usize>,
    pub fock_cutoff: Option<usize>,
    pub fit_window: Option<f64>,
    pub fit_tolerance: Option<f64>,
    pub horizon: Option<f64>,
    pub points: Option<usize>,
    pub allow_poor_fit: Option<bool>,
    pub scaling_probe: Option<bool>,
}

/// The file as written, every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<String>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub order: Option<u8>,
    pub flavor: Option<String>,
    /// Finite Markov time; absent means coefficients integrated to infinity.
    pub memory_time: Option<f64>,
    pub terms: Option<Vec<String>>,
    pub system: Option<SystemSection>,
    /// Second subsystem for pair experiments; defaults to a copy of `system`.
    pub partner: Option<SystemSection>,
    pub bath: Option<BathSection>,
    pub policy: Option<PolicySection>,
    pub time: Option<TimeSection>,
    pub cp_check: Option<CpSection>,
    pub pair: Option<PairSection>,
    pub factorize: Option<FactorizeSection>,
    pub oracle: Option<OracleSection>,
}

/// A parsed configuration with the source text kept for line lookups.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub raw: RawConfig,
    pub source: String,
    pub base_dir: PathBuf,
}

impl Loaded {
    /// Line of `key` inside `[section]` (top level when `section` is empty).
    pub fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        for (n, line) in self.source.lines().enumerate() {
            let t = line.trim();
            if let Some(h) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
                current = h.trim().to_string();
                continue;
            }
            let Some((k, _)) = t.split_once('=') else { continue };
            if current == section && k.trim() == key {
                return Some(n + 1);
            }
        }
        None
    }

    pub fn diagnostic(&self, field: &str, message: impl Into<String>) -> Diagnostic {
        let (section, key) = field.rsplit_once('.').unwrap_or(("", field));
        Diagnostic { field: field.to_string(), line: self.line_of(section, key), message: message.into() }
    }
}

fn line_at(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn parse_error(source: &str, e: &toml::de::Error) -> Diagnostic {
    Diagnostic {
        field: "<file>".into(),
        line: e.span().map(|s| line_at(source, s.start)),
        message: e.message().trim().to_string(),
    }
}

/// Fields of `over` replace those of `base`; tables merge recursively.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses `source`, then layers it over its preset if one is named.
pub fn load_str(source: &str, base_dir: &Path) -> Result<Loaded, Vec<Diagnostic>> {
    let own: toml::Table = toml::from_str(source).map_err(|e| vec![parse_error(source, &e)])?;
    // Structural check against the file alone so line numbers are the user's.
    let raw: RawConfig = toml::from_str(source).map_err(|e| vec![parse_error(source, &e)])?;
    let raw = match raw.preset.clone() {
        None => raw,
        Some(name) => {
            let Some(preset) = preset_source(&name) else {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                let loaded = Loaded { raw, source: source.to_string(), base_dir: base_dir.to_path_buf() };
                return Err(vec![loaded.diagnostic("preset", format!("unknown preset `{name}`; expected one of {}", names.join(", ")))]);
            };
            let mut merged: toml::Table = toml::from_str(preset).expect("presets are valid TOML");
            merge(&mut merged, own);
            merged.try_into().map_err(|e: toml::de::Error| vec![parse_error(source, &e)])?
        }
    };
    Ok(Loaded { raw, source: source.to_string(), base_dir: base_dir.to_path_buf() })
}

pub fn load(path: &Path) -> Result<Loaded, Vec<Diagnostic>> {
    let source = std::fs::read_to_string(path).map_err(|e| {
        vec![Diagnostic { field: "<file>".into(), line: None, message: format!("cannot read {}: {e}", path.display()) }]
    })?;
    load_str(&source, path.parent().unwrap_or(Path::new(".")))
}
