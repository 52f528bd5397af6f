//! Statistical checkers for the three group-fairness axioms:
//!
//! * independence (statistical parity): `price ⟂ D`
//! * separation (equalized odds): `price ⟂ D | Y`
//! * sufficiency (predictive parity): `Y ⟂ D | price`
//!
//! Each axiom is an [`AxiomChecker`] strategy registered by name in a
//! [`CheckerRegistry`].

mod checks;
mod dcor;
mod fisher;
mod permutation;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checks::{
    check_independence, check_separation, check_sufficiency, normal_scores, MIN_N_FOR_HOLDS,
};
pub use dcor::{distance_correlation, doubled_midranks, rank_distance_correlation};
pub use fisher::combine_pvalues_fisher;
pub use permutation::{permutation_pvalue, MIN_PERMUTATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    Independence,
    Separation,
    Sufficiency,
}

impl Axiom {
    pub const ALL: [Axiom; 3] = [Axiom::Independence, Axiom::Separation, Axiom::Sufficiency];

    pub fn as_str(self) -> &'static str {
        match self {
            Axiom::Independence => "independence",
            Axiom::Separation => "separation",
            Axiom::Sufficiency => "sufficiency",
        }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axiom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "independence" | "statistical_parity" | "demographic_parity" => Ok(Axiom::Independence),
            "separation" | "equalized_odds" | "disparate_mistreatment" => Ok(Axiom::Separation),
            "sufficiency" | "predictive_parity" => Ok(Axiom::Sufficiency),
            _ => Err(Error::UnknownStrategy {
                kind: "axiom",
                name: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl Verdict {
    /// `VIOLATED` iff `p < alpha`; otherwise `HOLDS` only if the power guard
    /// (`n_used ≥ MIN_N_FOR_HOLDS`) passes.
    pub fn from_p_value(p: f64, alpha: f64, n_used: usize) -> Self {
        if p < alpha {
            Verdict::Violated
        } else if n_used >= MIN_N_FOR_HOLDS {
            Verdict::Holds
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "HOLDS",
            Verdict::Violated => "VIOLATED",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }

    /// The YES/NO reading used in the regime table.
    pub fn yes_no(self) -> &'static str {
        match self {
            Verdict::Holds => "YES",
            Verdict::Violated => "NO",
            Verdict::Inconclusive => "?",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which quantity drove a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Statistical,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessVerdict {
    pub axiom: Axiom,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub analytic_criterion: Option<f64>,
    pub verdict: Verdict,
    pub alpha: f64,
    pub n_used: usize,
    pub seed: u64,
    pub source: Source,
    /// e.g. `conjecture_numeric` for cells settled only numerically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub alpha: f64,
    pub n_permutations: usize,
    pub n_bins_y: usize,
    pub seed: u64,
    /// Rank (copula) pre-processing before distance correlation.
    pub rank_transform: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            n_permutations: 999,
            n_bins_y: 20,
            seed: 0,
            rank_transform: true,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!(
                "alpha = {} must lie in (0, 0.5)",
                self.alpha
            )));
        }
        if self.n_permutations < MIN_PERMUTATIONS {
            return Err(Error::Config(format!(
                "n_permutations = {} must be at least {MIN_PERMUTATIONS}",
                self.n_permutations
            )));
        }
        if self.n_bins_y < 5 {
            return Err(Error::Config(format!(
                "n_bins_y = {} must be at least 5",
                self.n_bins_y
            )));
        }
        Ok(())
    }
}

/// Columns handed to a checker; `y` may be empty for checkers that do not read it.
#[derive(Debug, Clone, Copy)]
pub struct CheckInput<'a> {
    pub prices: &'a [f64],
    pub d: &'a [f64],
    pub y: &'a [f64],
}

pub trait AxiomChecker: Send + Sync {
    fn axiom(&self) -> Axiom;

    fn name(&self) -> &'static str {
        self.axiom().as_str()
    }

    fn check(&self, input: &CheckInput<'_>, cfg: &TestConfig) -> Result<FairnessVerdict>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct IndependenceChecker;

impl AxiomChecker for IndependenceChecker {
    fn axiom(&self) -> Axiom {
        Axiom::Independence
    }

    fn check(&self, input: &CheckInput<'_>, cfg: &TestConfig) -> Result<FairnessVerdict> {
        check_independence(input.prices, input.d, cfg)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SeparationChecker;

impl AxiomChecker for SeparationChecker {
    fn axiom(&self) -> Axiom {
        Axiom::Separation
    }

    fn check(&self, input: &CheckInput<'_>, cfg: &TestConfig) -> Result<FairnessVerdict> {
        check_separation(input.prices, input.d, input.y, cfg)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SufficiencyChecker;

impl AxiomChecker for SufficiencyChecker {
    fn axiom(&self) -> Axiom {
        Axiom::Sufficiency
    }

    fn check(&self, input: &CheckInput<'_>, cfg: &TestConfig) -> Result<FairnessVerdict> {
        check_sufficiency(input.y, input.d, input.prices, cfg)
    }
}

pub struct CheckerRegistry {
    checkers: BTreeMap<Axiom, Arc<dyn AxiomChecker>>,
}

impl CheckerRegistry {
    pub fn empty() -> Self {
        Self {
            checkers: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, checker: Arc<dyn AxiomChecker>) {
        self.checkers.insert(checker.axiom(), checker);
    }

    /// Accepts the axiom names and their common aliases
    /// (`statistical_parity`, `equalized_odds`, `predictive_parity`, ...).
    pub fn get(&self, name: &str) -> Result<Arc<dyn AxiomChecker>> {
        let axiom: Axiom = name.parse()?;
        self.for_axiom(axiom)
    }

    pub fn for_axiom(&self, axiom: Axiom) -> Result<Arc<dyn AxiomChecker>> {
        self.checkers
            .get(&axiom)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "checker",
                name: axiom.to_string(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn AxiomChecker>> {
        self.checkers.values()
    }
}

impl Default for CheckerRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(IndependenceChecker));
        reg.register(Arc::new(SeparationChecker));
        reg.register(Arc::new(SufficiencyChecker));
        reg
    }
}
