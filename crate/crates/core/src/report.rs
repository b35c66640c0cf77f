//! Experiment reports: one row per case, each row carrying enough to recheck its verdict.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::energy::IntegrandInfo;
use crate::error::Result;
use crate::grid::Field;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub case: String,
    pub inputs_hash: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub tolerance: f64,
    /// `gap <= tolerance`
    pub pass: bool,
    /// Rows with `checked = false` are informational and do not affect the verdict.
    pub checked: bool,
    pub wall_ms: f64,
    pub note: String,
}

impl ReportRow {
    pub fn new(
        case: impl Into<String>,
        inputs_hash: String,
        lhs: f64,
        rhs: f64,
        gap: f64,
        tolerance: f64,
        note: impl Into<String>,
    ) -> Self {
        ReportRow {
            case: case.into(),
            inputs_hash,
            lhs,
            rhs,
            gap,
            tolerance,
            pass: gap <= tolerance,
            checked: true,
            wall_ms: 0.0,
            note: note.into(),
        }
    }

    pub fn with_wall_ms(mut self, ms: f64) -> Self {
        self.wall_ms = ms;
        self
    }

    pub fn unchecked(mut self) -> Self {
        self.checked = false;
        self
    }

    /// Whether the stored verdict agrees with the stored numbers.
    pub fn is_consistent(&self) -> bool {
        self.pass == (self.gap <= self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub transform: String,
    pub integrands: Vec<IntegrandInfo>,
    pub tolerances: BTreeMap<String, f64>,
    pub rows: Vec<ReportRow>,
    pub wall_ms: f64,
}

impl Report {
    pub fn new(experiment: impl Into<String>, transform: impl Into<String>) -> Self {
        Report {
            experiment: experiment.into(),
            transform: transform.into(),
            integrands: Vec::new(),
            tolerances: BTreeMap::new(),
            rows: Vec::new(),
            wall_ms: 0.0,
        }
    }

    pub fn with_integrands(mut self, integrands: Vec<IntegrandInfo>) -> Self {
        self.integrands = integrands;
        self
    }

    pub fn with_tolerance(mut self, name: &str, value: f64) -> Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    /// True when every checked row passes.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().filter(|r| r.checked).all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.checked && !r.pass)
    }

    /// Appends rows of another report, prefixing their case names.
    pub fn absorb(&mut self, other: Report) {
        let prefix = other.experiment.clone();
        for mut row in other.rows {
            row.case = format!("{prefix}/{}", row.case);
            self.rows.push(row);
        }
        for (k, v) in other.tolerances {
            self.tolerances.entry(format!("{prefix}.{k}")).or_insert(v);
        }
        for i in other.integrands {
            if !self.integrands.contains(&i) {
                self.integrands.push(i);
            }
        }
        self.wall_ms += other.wall_ms;
    }

    /// Copy with every wall-clock field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        for row in &mut r.rows {
            row.wall_ms = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per row: case, inputs_hash, lhs, rhs, gap, tolerance, pass, checked, wall_ms, note.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "case,inputs_hash,lhs,rhs,gap,tolerance,pass,checked,wall_ms,note")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},\"{}\"",
                r.case,
                r.inputs_hash,
                r.lhs,
                r.rhs,
                r.gap,
                r.tolerance,
                r.pass,
                r.checked,
                r.wall_ms,
                r.note.replace('"', "'")
            )?;
        }
        Ok(())
    }
}

/// SHA-256 over the JSON form of `descriptor` followed by the bit patterns of the
/// field values, as 16 hex digits.
pub fn inputs_hash(descriptor: &serde_json::Value, fields: &[&Field]) -> String {
    let mut h = Sha256::new();
    h.update(descriptor.to_string().as_bytes());
    for f in fields {
        for v in f.values() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}
