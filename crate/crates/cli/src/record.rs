//! Run records and their flat CSV form.

use std::io::Write;

use anyhow::Result;
use polycap::capacities::BoundKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const RECORD_SCHEMA: &str = include_str!("../schema/record.schema.json");

/// Fixed CSV header.
pub const CSV_COLUMNS: [&str; 5] = ["label", "quantity", "value", "bound", "detail"];

/// One computed number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub label: String,
    pub quantity: String,
    #[serde(with = "polycap::extended")]
    pub value: f64,
    pub bound: BoundKind,
    /// Solver diagnostics and secondary values.
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(check: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything a run produces. Wall-clock timing is reported on stderr only,
/// so that equal configs give identical records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub kind: String,
    pub seed: u64,
    pub items: Vec<ItemRecord>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl RunRecord {
    pub fn regressed(&self) -> bool {
        self.verdicts.iter().any(|v| !v.passed)
    }

    /// Checks the record against the shipped schema.
    pub fn validate(&self) -> Result<()> {
        let schema: Value = serde_json::from_str(RECORD_SCHEMA).expect("shipped schema is JSON");
        let compiled = jsonschema::JSONSchema::compile(&schema).expect("shipped schema compiles");
        let value = serde_json::to_value(self)?;
        if let Err(errors) = compiled.validate(&value) {
            let msgs: Vec<String> = errors.map(|e| format!("{}: {e}", e.instance_path)).collect();
            anyhow::bail!("record violates its schema: {}", msgs.join("; "));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes") + "\n"
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for item in &self.items {
            let bound = serde_json::to_value(item.bound)?;
            w.write_record([
                item.label.as_str(),
                item.quantity.as_str(),
                &format_value(item.value),
                bound.as_str().unwrap_or_default(),
                &serde_json::to_string(&item.details)?,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> RunRecord {
        RunRecord {
            config_digest: "ab".repeat(32),
            kind: "capacity".into(),
            seed: 1,
            items: vec![
                ItemRecord {
                    label: "empty".into(),
                    quantity: "condenser".into(),
                    value: 0.0,
                    bound: BoundKind::ExactQp,
                    details: json!({}),
                },
                ItemRecord {
                    label: "a,b".into(),
                    quantity: "poincare".into(),
                    value: f64::INFINITY,
                    bound: BoundKind::ExactEigen,
                    details: json!({"note": "x"}),
                },
            ],
            verdicts: vec![Verdict::new("ok", true, "")],
            notes: vec![],
        }
    }

    #[test]
    fn csv_has_fixed_columns_and_quotes() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "label,quantity,value,bound,detail");
        assert_eq!(lines[1], "empty,condenser,0e0,exact-qp,{}");
        assert!(lines[2].starts_with("\"a,b\",poincare,inf,exact-eigen,"));
    }

    #[test]
    fn json_round_trips_and_matches_the_schema() {
        let r = sample();
        let text = r.to_json();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.items[1].value, f64::INFINITY);
        let schema: Value = serde_json::from_str(RECORD_SCHEMA).unwrap();
        let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
        r.validate().unwrap();
        assert!(compiled.is_valid(&serde_json::from_str(&text).unwrap()));
        assert!(!compiled.is_valid(&json!({"items": []})));
    }
}
