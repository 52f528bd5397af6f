use std::collections::BTreeMap;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::config::{OutputFormat, RunConfig, MIN_RUN_N};
use super::report::{write_text, AuditReport, AxiomReport};
use crate::error::{Error, Result};
use crate::fairness::{
    Axiom, CheckInput, CheckerRegistry, FairnessVerdict, Source, TestConfig, Verdict,
};
use crate::model::{fmt_float, validate_rho, ClosedForm, PortfolioModel, PricingRegistry};
use crate::oracles::{
    analytic_axiom_verdict_for, conditional_second_moment_x1_given_y0_d0,
    second_moment_x1_given_y0, second_moment_x1_given_y0_d0, Estimator, MomentEstimate,
};
use crate::rng::derive_seed;

pub const QUADRATURE_TOL: f64 = 1e-8;
pub const MIN_REPRODUCTION_N: usize = 1_000_000;

/// Regime representatives, one per row of the conjecture table.
pub const DEFAULT_TABLE_PAIRS: [(f64, f64); 4] = [(0.3, 0.5), (0.3, 0.0), (0.0, 0.5), (0.0, 0.0)];

pub fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn analytic_entry(
    axiom: Axiom,
    rho1: f64,
    rho2: f64,
    price: ClosedForm,
    test: &TestConfig,
) -> Result<FairnessVerdict> {
    let a = analytic_axiom_verdict_for(axiom, rho1, rho2, price)?;
    Ok(FairnessVerdict {
        axiom,
        statistic: a.criterion,
        p_value: None,
        analytic_criterion: Some(a.criterion),
        verdict: a.verdict,
        alpha: test.alpha,
        n_used: 0,
        seed: test.seed,
        source: Source::Analytic,
        tag: a.tag,
    })
}

/// Simulates, prices and tests one model; one entry per axiom.
fn audit_model(
    rho1: f64,
    rho2: f64,
    n: usize,
    seed: u64,
    pricing: &str,
    test: &TestConfig,
) -> Result<Vec<AxiomReport>> {
    let functional = PricingRegistry::default().get(pricing)?;
    let data = PortfolioModel::new(rho1, rho2)?.simulate(n, seed)?;
    let prices = data.prices(functional.as_ref());
    let input = CheckInput {
        prices: &prices,
        d: &data.d,
        y: &data.y,
    };
    let checkers = CheckerRegistry::default();
    let statistical: Vec<Result<FairnessVerdict>> = {
        use rayon::prelude::*;
        Axiom::ALL
            .par_iter()
            .map(|&a| checkers.for_axiom(a).and_then(|c| c.check(&input, test)))
            .collect()
    };
    Axiom::ALL
        .iter()
        .zip(statistical)
        .map(|(&axiom, stat)| {
            Ok(AxiomReport {
                axiom,
                statistical: stat?,
                analytic: analytic_entry(axiom, rho1, rho2, functional.closed_form(), test)?,
            })
        })
        .collect()
}

/// Full audit of `cfg.pricing` at `(cfg.rho1, cfg.rho2)`.
pub fn cmd_audit(cfg: &RunConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let verdicts = audit_model(cfg.rho1, cfg.rho2, cfg.n, cfg.seed, &cfg.pricing, &cfg.test)?;
    let quad = Estimator::Quadrature {
        tol: QUADRATURE_TOL,
    };
    let mut numbers = BTreeMap::new();
    numbers.insert(
        "e_x1_sq_given_y0_d0".to_owned(),
        second_moment_x1_given_y0_d0(cfg.rho1, cfg.rho2, quad)?,
    );
    numbers.insert(
        "e_x1_sq_given_y0_d0_full".to_owned(),
        conditional_second_moment_x1_given_y0_d0(cfg.rho1, cfg.rho2, quad)?,
    );
    numbers.insert(
        "e_x1_sq_given_y0".to_owned(),
        second_moment_x1_given_y0(quad)?,
    );
    Ok(AuditReport {
        config_echo: cfg.clone(),
        verdicts,
        reproduction_numbers: numbers,
        timestamp: timestamp(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
    })
}

/// Monte Carlo and quadrature values of the two second moments behind the
/// separation argument, at `(0.1, 0.9)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReproduction {
    pub rho1: f64,
    pub rho2: f64,
    pub n: usize,
    pub seed: u64,
    /// `E[X1² | Y = 0, D = 0]` as displayed (posterior mean of the variance).
    pub value1: MomentEstimate,
    /// `E[X1² | Y = 0]`.
    pub value2: MomentEstimate,
    pub value1_quadrature: MomentEstimate,
    pub value2_quadrature: MomentEstimate,
    /// `E[X1² | Y = 0, D = 0]` including the squared posterior mean.
    pub value1_full_quadrature: MomentEstimate,
    pub value1_lt_value2: bool,
    pub value2_lt_one: bool,
    /// `(value2 − value1) / combined standard error`.
    pub margin_12_se: f64,
    /// `(1 − value2) / standard error of value2`.
    pub margin_2_one_se: f64,
    pub timestamp: String,
    pub version: String,
}

impl SeparationReproduction {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn emit(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json()?)
    }

    pub fn render(&self) -> String {
        let mc = |e: &MomentEstimate| format!("{:.6} ± {:.6}", e.value, e.std_error);
        format!(
            "Monte Carlo, n = {} per moment, seed = {}\n\
             E[X1^2 | Y=0, D=0] = {}   (quadrature {:.6}; with squared mean {:.6})\n\
             E[X1^2 | Y=0]      = {}   (quadrature {:.6})\n\
             value1 < value2: {} ({:.1} SE)\n\
             value2 < 1:      {} ({:.1} SE)\n",
            self.n,
            self.seed,
            mc(&self.value1),
            self.value1_quadrature.value,
            self.value1_full_quadrature.value,
            mc(&self.value2),
            self.value2_quadrature.value,
            self.value1_lt_value2,
            self.margin_12_se,
            self.value2_lt_one,
            self.margin_2_one_se,
        )
    }
}

pub fn cmd_reproduce_separation(n: usize, seed: u64) -> Result<SeparationReproduction> {
    if n < MIN_REPRODUCTION_N {
        return Err(Error::Config(format!(
            "n = {n} is below the minimum of {MIN_REPRODUCTION_N}"
        )));
    }
    let (rho1, rho2) = (0.1, 0.9);
    let quad = Estimator::Quadrature {
        tol: QUADRATURE_TOL,
    };
    let (value1, value2) = rayon::join(
        || second_moment_x1_given_y0_d0(rho1, rho2, Estimator::MonteCarlo { n, seed }),
        || {
            second_moment_x1_given_y0(Estimator::MonteCarlo {
                n,
                seed: derive_seed(seed, 1),
            })
        },
    );
    let (value1, value2) = (value1?, value2?);
    Ok(SeparationReproduction {
        rho1,
        rho2,
        n,
        seed,
        value1,
        value2,
        value1_quadrature: second_moment_x1_given_y0_d0(rho1, rho2, quad)?,
        value2_quadrature: second_moment_x1_given_y0(quad)?,
        value1_full_quadrature: conditional_second_moment_x1_given_y0_d0(rho1, rho2, quad)?,
        value1_lt_value2: value1.value < value2.value,
        value2_lt_one: value2.value < 1.0,
        margin_12_se: (value2.value - value1.value) / value1.std_error.hypot(value2.std_error),
        margin_2_one_se: (1.0 - value2.value) / value2.std_error,
        timestamp: timestamp(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub axiom: Axiom,
    pub analytic: Verdict,
    pub statistical: Verdict,
    pub analytic_criterion: f64,
    pub statistic: f64,
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub rho1: f64,
    pub rho2: f64,
    /// Data-generation seed of this row.
    pub seed: u64,
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub n: usize,
    pub seed: u64,
    pub test: TestConfig,
    pub rows: Vec<TableRow>,
    pub timestamp: String,
    pub version: String,
}

pub const TABLE_CSV_HEADER: [&str; 11] = [
    "rho1",
    "rho2",
    "axiom",
    "verdict_statistical",
    "verdict_analytic",
    "statistic",
    "p_value",
    "analytic_criterion",
    "tag",
    "n",
    "seed",
];

impl TableReport {
    pub fn analytic_grid(&self) -> Vec<[&'static str; 3]> {
        self.grid(|c| c.analytic)
    }

    pub fn statistical_grid(&self) -> Vec<[&'static str; 3]> {
        self.grid(|c| c.statistical)
    }

    fn grid(&self, pick: impl Fn(&TableCell) -> Verdict) -> Vec<[&'static str; 3]> {
        self.rows
            .iter()
            .map(|r| std::array::from_fn(|i| pick(&r.cells[i]).yes_no()))
            .collect()
    }

    pub fn has_disagreement(&self) -> bool {
        self.rows.iter().flat_map(|r| &r.cells).any(|c| !c.agrees)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_CSV_HEADER)?;
        for r in &self.rows {
            for c in &r.cells {
                w.write_record([
                    fmt_float(r.rho1),
                    fmt_float(r.rho2),
                    c.axiom.as_str().to_owned(),
                    c.statistical.as_str().to_owned(),
                    c.analytic.as_str().to_owned(),
                    fmt_float(c.statistic),
                    c.p_value.map(fmt_float).unwrap_or_default(),
                    fmt_float(c.analytic_criterion),
                    c.tag.clone().unwrap_or_default(),
                    self.n.to_string(),
                    r.seed.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn emit(&self, format: OutputFormat, path: &Path) -> Result<()> {
        let text = match format {
            OutputFormat::Csv => self.to_csv()?,
            OutputFormat::Json => self.to_json()?,
        };
        write_text(path, &text)
    }

    /// Analytic and statistical grids side by side. Tagged cells get a `*`,
    /// disagreeing cells a `!`.
    pub fn render(&self) -> String {
        let head = "indep separ suff";
        let mut out = format!(
            "{:<14}{:<21}statistical (n = {})\n{:<14}{head:<21}{head}\n",
            "", "analytic", self.n, "(rho1, rho2)"
        );
        for r in &self.rows {
            let cells = |pick: fn(&TableCell) -> Verdict| -> String {
                r.cells
                    .iter()
                    .map(|c| {
                        let mark = match (c.agrees, &c.tag) {
                            (false, _) => "!",
                            (true, Some(_)) => "*",
                            _ => "",
                        };
                        format!("{:<6}", format!("{}{mark}", pick(c).yes_no()))
                    })
                    .collect()
            };
            let rho = format!("({}, {})", r.rho1, r.rho2);
            let line = format!(
                "{rho:<14}{:<21}{}",
                cells(|c| c.analytic),
                cells(|c| c.statistical)
            );
            out += line.trim_end();
            out.push('\n');
        }
        out += "* conjecture_numeric   ! statistical and analytic verdicts disagree\n";
        out
    }
}

/// Analytic and statistical verdicts for each `(rho1, rho2)` pair. Row `i`
/// simulates with `derive_seed(seed, i)` and permutes with
/// `derive_seed(test.seed, i)`.
pub fn cmd_table(
    pairs: &[(f64, f64)],
    n: usize,
    seed: u64,
    test: &TestConfig,
) -> Result<TableReport> {
    if n < MIN_RUN_N {
        return Err(Error::Config(format!(
            "n = {n} is below the minimum of {MIN_RUN_N}"
        )));
    }
    test.validate()?;
    for &(r1, r2) in pairs {
        validate_rho(r1, r2)?;
        if r1 < 0.0 || r2 < 0.0 {
            return Err(Error::InvalidRho {
                rho1: r1,
                rho2: r2,
                reason: "the regime table covers nonnegative correlations",
            });
        }
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for (i, &(rho1, rho2)) in pairs.iter().enumerate() {
        let row_seed = derive_seed(seed, i as u64);
        let row_test = TestConfig {
            seed: derive_seed(test.seed, i as u64),
            ..*test
        };
        let reports = audit_model(rho1, rho2, n, row_seed, "best_estimate", &row_test)?;
        let cells = reports
            .iter()
            .map(|r| TableCell {
                axiom: r.axiom,
                analytic: r.analytic.verdict,
                statistical: r.statistical.verdict,
                analytic_criterion: r.analytic.statistic,
                statistic: r.statistical.statistic,
                p_value: r.statistical.p_value,
                tag: r.analytic.tag.clone(),
                agrees: r.agrees(),
            })
            .collect();
        rows.push(TableRow {
            rho1,
            rho2,
            seed: row_seed,
            cells,
        });
    }
    Ok(TableReport {
        n,
        seed,
        test: *test,
        rows,
        timestamp: timestamp(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
    })
}
