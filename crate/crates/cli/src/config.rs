//! Experiment configuration files: TOML checked against the shipped schema,
//! then decoded into typed settings.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use polycap::grid::Geometry;
use polycap::synthesis::DEFAULT_DELTAS;
use jsonschema::error::ValidationErrorKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const CONFIG_SCHEMA: &str = include_str!("../schema/config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Capacity,
    Poincare,
    Equivalence,
    Synthesis,
    SynthesisCondition,
    Deviation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    /// Defaults to the center of the unit cube.
    pub center: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub label: String,
    pub geometry: Geometry,
}

/// Seeded unions of segments and boxes in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub seed: u64,
    pub members: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityKind {
    Gamma,
    Theta,
    Condenser,
    Sharp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    Partial,
    Full,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    TwoTerm,
    Hedberg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    L2,
    Linf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct Params {
    pub m: usize,
    pub k: usize,
    pub p: f64,
    pub p0: f64,
    pub q: f64,
    pub alpha: f64,
    pub rho: usize,
    /// Defaults to `(n - 1) / 8` cells, a fixed eighth of the side.
    pub sharp_rho: Option<usize>,
    pub c0: f64,
    pub deltas: Vec<f64>,
    pub starts: usize,
    pub capacity: CapacityKind,
    pub class: ClassKind,
    /// Trace order of the partial class; defaults to `m - 1`.
    pub s: Option<usize>,
    pub nonnegative: bool,
    pub mode: ModeKind,
    pub sigma: f64,
    pub width: f64,
    pub pins: usize,
    pub samples: usize,
    pub norm: NormKind,
    pub points: Vec<Vec<f64>>,
    /// Upper bound on accepted interval widths and condition ratios.
    pub max_width: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            m: 1,
            k: 0,
            p: 2.0,
            p0: 2.0,
            q: 2.0,
            alpha: 4.0,
            rho: 1,
            sharp_rho: None,
            c0: 0.1,
            deltas: DEFAULT_DELTAS.to_vec(),
            starts: 32,
            capacity: CapacityKind::Condenser,
            class: ClassKind::Partial,
            s: None,
            nonnegative: false,
            mode: ModeKind::TwoTerm,
            sigma: 1.0,
            width: 0.25,
            pins: 3,
            samples: 64,
            norm: NormKind::L2,
            points: Vec::new(),
            max_width: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub json: Option<String>,
    pub csv: Option<String>,
    /// Regression fixture, relative to the config file.
    pub fixture: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    #[serde(default)]
    pub sets: Vec<SetSpec>,
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub params: Params,
    pub output: Option<OutputSpec>,
}

fn one() -> f64 {
    1.0
}

impl ExperimentConfig {
    /// Parses and validates a config text; errors name the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| anyhow!("{}", e.to_string().trim_end()))?;
        let json = serde_json::to_value(&raw).context("config is not representable as JSON")?;
        schema_errors(text, &json)?;
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| anyhow!("{}", e.to_string().trim_end()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Cross-field rules the schema cannot express.
    fn check(&self) -> Result<()> {
        let p = &self.params;
        if let Some(c) = &self.grid.center {
            if c.len() != self.grid.dim {
                bail!("grid.center has {} coordinates for dim = {}", c.len(), self.grid.dim);
            }
        }
        let needs_sets = !matches!(self.kind, Kind::Deviation);
        if needs_sets && self.sets.is_empty() && self.family.is_none() {
            bail!("{:?} runs need `sets` or a `family`", self.kind);
        }
        if self.kind == Kind::Synthesis && self.sets.len() + self.family.iter().count() != 1 {
            bail!("a synthesis run takes exactly one set");
        }
        if self.kind == Kind::Deviation && p.points.is_empty() {
            bail!("a deviation run needs params.points");
        }
        if p.k >= p.m && !matches!(self.kind, Kind::Deviation) {
            bail!("params.k = {} must be below params.m = {}", p.k, p.m);
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn center(&self) -> Vec<f64> {
        self.grid.center.clone().unwrap_or_else(|| vec![0.5; self.grid.dim])
    }

    pub fn trace_order(&self) -> usize {
        self.params.s.unwrap_or(self.params.m.saturating_sub(1))
    }
}

fn schema_errors(text: &str, instance: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(CONFIG_SCHEMA).expect("shipped schema is JSON");
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("shipped schema compiles");
    let result = compiled.validate(instance);
    if let Err(errors) = result {
        let lines: Vec<String> = errors
            .map(|e| {
                let mut pointer = e.instance_path.to_string();
                if let ValidationErrorKind::AdditionalProperties { unexpected } = &e.kind {
                    if let Some(key) = unexpected.first() {
                        pointer = format!("{pointer}/{key}");
                    }
                }
                match locate(text, &pointer) {
                    Some(line) => format!("line {line}: {pointer}: {e}"),
                    None => format!("{pointer}: {e}"),
                }
            })
            .collect();
        bail!("schema violation\n  {}", lines.join("\n  "));
    }
    Ok(())
}

/// Line (1-based) of the TOML entry behind a JSON pointer such as
/// `/params/m` or `/sets/1/label`; the enclosing table when the key is
/// missing.
pub fn locate(text: &str, pointer: &str) -> Option<usize> {
    let parts: Vec<&str> = pointer.split('/').filter(|s| !s.is_empty()).collect();
    let mut table: Vec<String> = Vec::new();
    let mut counts: std::collections::HashMap<String, usize> = Default::default();
    let mut header_line = None;
    let wanted_table: Vec<String> = parts
        .iter()
        .take(parts.len().saturating_sub(1))
        .map(|s| s.to_string())
        .collect();
    let key = parts.last()?;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")) {
            let name = name.trim().to_string();
            let c = counts.entry(name.clone()).or_insert(0);
            table = vec![name, c.to_string()];
            *c += 1;
        } else if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            table = name.trim().split('.').map(str::to_string).collect();
        } else if let Some((k, _)) = t.split_once('=') {
            if table == wanted_table && k.trim() == *key {
                return Some(i + 1);
            }
            continue;
        } else {
            continue;
        }
        if table == wanted_table || table.iter().map(String::as_str).eq(parts.iter().copied()) {
            header_line = Some(i + 1);
        }
    }
    header_line.or_else(|| if parts.len() <= 1 { Some(1) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "capacity"
[grid]
dim = 1
n = 9
[[sets]]
label = "point"
geometry = { type = "point", at = [0.5] }
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.params.m, 1);
        assert_eq!(cfg.params.capacity, CapacityKind::Condenser);
        assert_eq!(cfg.center(), vec![0.5]);
        assert_eq!(cfg.digest().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = format!("{MINIMAL}[params]\nm = 1\nbogus = 3\n");
        let err = format!("{:#}", ExperimentConfig::parse(&text).unwrap_err());
        assert!(err.contains("line 11"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn wrong_types_name_the_line() {
        let text = MINIMAL.replace("n = 9", "n = \"nine\"");
        let err = format!("{:#}", ExperimentConfig::parse(&text).unwrap_err());
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn pointer_lookup() {
        assert_eq!(locate(MINIMAL, "/grid/n"), Some(5));
        assert_eq!(locate(MINIMAL, "/sets/0/label"), Some(7));
        assert_eq!(locate(MINIMAL, "/kind"), Some(2));
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.seed = 9;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), ExperimentConfig::parse(MINIMAL).unwrap().digest());
    }
}
