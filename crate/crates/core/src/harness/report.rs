//! Audit reports and their CSV / JSON encodings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::fairness::{Axiom, FairnessVerdict, Verdict};
use crate::model::fmt_float;
use crate::oracles::MomentEstimate;

pub const CSV_HEADER: [&str; 9] = [
    "axiom",
    "verdict_statistical",
    "verdict_analytic",
    "statistic",
    "p_value",
    "analytic_criterion",
    "alpha",
    "n",
    "seed",
];

/// Statistical and analytic verdicts for one axiom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub axiom: Axiom,
    pub statistical: FairnessVerdict,
    pub analytic: FairnessVerdict,
}

impl AxiomReport {
    /// An inconclusive test never counts as a disagreement.
    pub fn agrees(&self) -> bool {
        self.statistical.verdict == Verdict::Inconclusive
            || self.statistical.verdict == self.analytic.verdict
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config_echo: RunConfig,
    pub verdicts: Vec<AxiomReport>,
    pub reproduction_numbers: BTreeMap<String, MomentEstimate>,
    /// RFC 3339, UTC. The only field allowed to differ between identical runs.
    pub timestamp: String,
    pub version: String,
}

impl AuditReport {
    pub fn disagreements(&self) -> Vec<Axiom> {
        self.verdicts
            .iter()
            .filter(|v| !v.agrees())
            .map(|v| v.axiom)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        for r in &self.verdicts {
            let s = &r.statistical;
            w.write_record([
                r.axiom.as_str().to_owned(),
                s.verdict.as_str().to_owned(),
                r.analytic.verdict.as_str().to_owned(),
                fmt_float(s.statistic),
                opt(s.p_value),
                opt(r.analytic.analytic_criterion),
                fmt_float(s.alpha),
                s.n_used.to_string(),
                self.config_echo.seed.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Plain-text summary for the terminal.
    pub fn render(&self) -> String {
        let c = &self.config_echo;
        let mut out = format!(
            "audit of `{}` at rho1 = {}, rho2 = {}, n = {}, seed = {}\n{:<13} {:<13} {:<13} {:>12}\n",
            c.pricing, c.rho1, c.rho2, c.n, c.seed, "axiom", "statistical", "analytic", "p-value"
        );
        for r in &self.verdicts {
            let p = r
                .statistical
                .p_value
                .map(|p| format!("{p:.3e}"))
                .unwrap_or_else(|| "-".into());
            let mark = if r.agrees() { "" } else { "  <- disagreement" };
            out += &format!(
                "{:<13} {:<13} {:<13} {:>12}{mark}\n",
                r.axiom.as_str(),
                r.statistical.verdict.as_str(),
                r.analytic.verdict.as_str(),
                p
            );
        }
        out
    }
}

/// Writes `report` to `path`. Fields appear in declaration order; CSV floats
/// carry 17 significant digits, JSON floats the shortest representation that
/// parses back to the same value.
pub fn emit_report(report: &AuditReport, format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => report.to_csv()?,
        OutputFormat::Json => report.to_json()?,
    };
    write_text(path, &text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::file(path))?);
    w.write_all(text.as_bytes())
        .and_then(|()| w.flush())
        .map_err(Error::file(path))?;
    Ok(())
}
