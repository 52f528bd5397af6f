//! The Gaussian portfolio example: covariates `(X1, X2, D)` with
//! `Cov = [[1, 0, ρ1], [0, 1, ρ2], [ρ1, ρ2, 1]]` and a heteroskedastic
//! response `Y | (X, D) ~ N(X1, 1 + X2²)` that ignores `D`.
//!
//! Pricing functionals are strategies behind [`PricingFunctional`] and are
//! looked up by name through a [`PricingRegistry`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianDistribution, SAMPLE_BLOCK};
use crate::rng::{self, Domain};

/// Checks `|ρ1| < 1`, `|ρ2| < 1` and `1 − ρ1² − ρ2² > 0`.
pub fn validate_rho(rho1: f64, rho2: f64) -> Result<()> {
    let fail = |reason| Err(Error::InvalidRho { rho1, rho2, reason });
    if !rho1.is_finite() || !rho2.is_finite() {
        return fail("not finite");
    }
    if rho1.abs() >= 1.0 || rho2.abs() >= 1.0 {
        return fail("|rho| must be below 1");
    }
    if 1.0 - rho1 * rho1 - rho2 * rho2 <= 0.0 {
        return fail("1 - rho1^2 - rho2^2 must be positive");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PortfolioModel {
    rho1: f64,
    rho2: f64,
    covariates: GaussianDistribution,
}

impl PortfolioModel {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        let covariates = GaussianDistribution::from_rows(
            &[0.0, 0.0, 0.0],
            &[&[1.0, 0.0, rho1], &[0.0, 1.0, rho2], &[rho1, rho2, 1.0]],
        )?;
        validate_rho(rho1, rho2)?;
        Ok(Self {
            rho1,
            rho2,
            covariates,
        })
    }

    /// The instance analysed throughout: `ρ1 = 0.1`, `ρ2 = 0.9`.
    pub fn worked_example() -> Self {
        Self::new(0.1, 0.9).expect("valid parameters")
    }

    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    pub fn rho2(&self) -> f64 {
        self.rho2
    }

    pub fn covariates(&self) -> &GaussianDistribution {
        &self.covariates
    }

    #[inline]
    pub fn response_mean(&self, x1: f64, _x2: f64) -> f64 {
        x1
    }

    #[inline]
    pub fn response_var(&self, _x1: f64, x2: f64) -> f64 {
        1.0 + x2 * x2
    }

    /// `n` i.i.d. policies. Covariates and response noise come from separate
    /// stream domains, so adding columns never shifts existing ones.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<SimulatedDataset> {
        if n == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let rows = self
            .covariates
            .sample_row_major(n, seed, Domain::Covariates);
        let mut x1 = Vec::with_capacity(n);
        let mut x2 = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for r in rows.chunks_exact(3) {
            x1.push(r[0]);
            x2.push(r[1]);
            d.push(r[2]);
        }
        let mut y = vec![0.0; n];
        y.par_chunks_mut(SAMPLE_BLOCK)
            .enumerate()
            .for_each(|(block, chunk)| {
                let mut rng = rng::stream_rng(seed, Domain::ResponseNoise, block as u64);
                let start = block * SAMPLE_BLOCK;
                for (k, yi) in chunk.iter_mut().enumerate() {
                    let i = start + k;
                    let z = rng::standard_normal(&mut rng);
                    *yi = self.response_mean(x1[i], x2[i])
                        + self.response_var(x1[i], x2[i]).sqrt() * z;
                }
            });
        Ok(SimulatedDataset {
            x1,
            x2,
            d,
            y,
            seed,
            rho1: self.rho1,
            rho2: self.rho2,
        })
    }
}

/// Columnar draws of `(x1, x2, d, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: u64,
    pub rho1: f64,
    pub rho2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub n: usize,
    pub seed: u64,
    pub rho1: f64,
    pub rho2: f64,
}

/// 17 significant digits.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl SimulatedDataset {
    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    pub fn metadata(&self) -> DatasetMetadata {
        DatasetMetadata {
            n: self.len(),
            seed: self.seed,
            rho1: self.rho1,
            rho2: self.rho2,
        }
    }

    pub fn prices(&self, functional: &dyn PricingFunctional) -> Vec<f64> {
        (0..self.len())
            .map(|i| functional.price(self.x1[i], self.x2[i], self.d[i]))
            .collect()
    }

    /// First `n` rows (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            x1: self.x1[..n].to_vec(),
            x2: self.x2[..n].to_vec(),
            d: self.d[..n].to_vec(),
            y: self.y[..n].to_vec(),
            ..*self
        }
    }

    /// Writes `x1,x2,d,y` rows to `csv_path` and `{n, seed, rho1, rho2}` to `meta_path`.
    pub fn write(&self, csv_path: &Path, meta_path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(csv_path)?);
        writeln!(out, "x1,x2,d,y")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_float(self.x1[i]),
                fmt_float(self.x2[i]),
                fmt_float(self.d[i]),
                fmt_float(self.y[i])
            )?;
        }
        out.flush()?;
        let meta = serde_json::to_string_pretty(&self.metadata())?;
        std::fs::write(meta_path, meta + "\n")?;
        Ok(())
    }

    pub fn read(csv_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta: DatasetMetadata = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        let mut reader = csv::Reader::from_path(csv_path)?;
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["x1", "x2", "d", "y"] {
            return Err(Error::Config(format!(
                "unexpected dataset header {header:?}"
            )));
        }
        let (mut x1, mut x2, mut d, mut y) = (vec![], vec![], vec![], vec![]);
        for record in reader.records() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                record[k]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad float `{}`", &record[k])))
            };
            x1.push(parse(0)?);
            x2.push(parse(1)?);
            d.push(parse(2)?);
            y.push(parse(3)?);
        }
        if x1.len() != meta.n {
            return Err(Error::LengthMismatch(meta.n, x1.len()));
        }
        validate_rho(meta.rho1, meta.rho2)?;
        Ok(Self {
            x1,
            x2,
            d,
            y,
            seed: meta.seed,
            rho1: meta.rho1,
            rho2: meta.rho2,
        })
    }
}

/// Non-protected covariates a subset price may condition on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Covariate {
    X1,
    X2,
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Covariate::X1 => "x1",
            Covariate::X2 => "x2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PricingKind {
    BestEstimate,
    Unawareness,
    DiscriminationFree,
    Null,
    Subset(Vec<Covariate>),
}

/// What a price reduces to under the example model. Analytic verdicts are
/// keyed off this rather than off the functional's name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    X1,
    Constant(f64),
}

pub trait PricingFunctional: Send + Sync {
    fn name(&self) -> String;

    fn kind(&self) -> PricingKind;

    fn price(&self, x1: f64, x2: f64, d: f64) -> f64;

    fn closed_form(&self) -> ClosedForm;

    /// Whether the price may read the protected coordinate.
    fn uses_protected(&self) -> bool {
        false
    }
}

/// `E[Y | X, D] = X1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BestEstimate;

impl PricingFunctional for BestEstimate {
    fn name(&self) -> String {
        "best_estimate".into()
    }
    fn kind(&self) -> PricingKind {
        PricingKind::BestEstimate
    }
    fn price(&self, x1: f64, _x2: f64, _d: f64) -> f64 {
        x1
    }
    fn closed_form(&self) -> ClosedForm {
        ClosedForm::X1
    }
    fn uses_protected(&self) -> bool {
        true
    }
}

/// `E[Y | X] = X1`: dropping `D` changes nothing because the best estimate
/// never depended on it.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unawareness;

impl PricingFunctional for Unawareness {
    fn name(&self) -> String {
        "unawareness".into()
    }
    fn kind(&self) -> PricingKind {
        PricingKind::Unawareness
    }
    fn price(&self, x1: f64, _x2: f64, _d: f64) -> f64 {
        x1
    }
    fn closed_form(&self) -> ClosedForm {
        ClosedForm::X1
    }
}

/// Best estimate averaged over the marginal law of `D`; the integrand is
/// constant in `d`, so this is `X1` again.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiscriminationFree;

impl PricingFunctional for DiscriminationFree {
    fn name(&self) -> String {
        "discrimination_free".into()
    }
    fn kind(&self) -> PricingKind {
        PricingKind::DiscriminationFree
    }
    fn price(&self, x1: f64, _x2: f64, _d: f64) -> f64 {
        x1
    }
    fn closed_form(&self) -> ClosedForm {
        ClosedForm::X1
    }
}

/// `E[Y] = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPrice;

impl PricingFunctional for NullPrice {
    fn name(&self) -> String {
        "null".into()
    }
    fn kind(&self) -> PricingKind {
        PricingKind::Null
    }
    fn price(&self, _x1: f64, _x2: f64, _d: f64) -> f64 {
        0.0
    }
    fn closed_form(&self) -> ClosedForm {
        ClosedForm::Constant(0.0)
    }
}

/// `E[Y | U]` for a subset `U` of the non-protected covariates. Since
/// `X1 ⟂ X2`, this is `X1` when `U` contains `X1` and `E[X1] = 0` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPrice {
    covariates: Vec<Covariate>,
}

impl SubsetPrice {
    pub fn new(mut covariates: Vec<Covariate>) -> Self {
        covariates.sort();
        covariates.dedup();
        Self { covariates }
    }

    fn has_x1(&self) -> bool {
        self.covariates.contains(&Covariate::X1)
    }
}

impl PricingFunctional for SubsetPrice {
    fn name(&self) -> String {
        let names: Vec<String> = self.covariates.iter().map(|c| c.to_string()).collect();
        format!("subset:{}", names.join(","))
    }
    fn kind(&self) -> PricingKind {
        PricingKind::Subset(self.covariates.clone())
    }
    fn price(&self, x1: f64, _x2: f64, _d: f64) -> f64 {
        if self.has_x1() {
            x1
        } else {
            0.0
        }
    }
    fn closed_form(&self) -> ClosedForm {
        if self.has_x1() {
            ClosedForm::X1
        } else {
            ClosedForm::Constant(0.0)
        }
    }
}

/// Name → pricing strategy. `subset:<list>` names (e.g. `subset:x1`,
/// `subset:x1,x2`, `subset:`) are built on demand.
pub struct PricingRegistry {
    entries: BTreeMap<String, Arc<dyn PricingFunctional>>,
}

impl PricingRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, functional: Arc<dyn PricingFunctional>) {
        self.entries.insert(functional.name(), functional);
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn PricingFunctional>> {
        if let Some(f) = self.entries.get(name) {
            return Ok(f.clone());
        }
        if let Some(list) = name.strip_prefix("subset:") {
            let mut covariates = Vec::new();
            for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                covariates.push(match part.to_ascii_lowercase().as_str() {
                    "x1" => Covariate::X1,
                    "x2" => Covariate::X2,
                    _ => {
                        return Err(Error::UnknownStrategy {
                            kind: "covariate",
                            name: part.into(),
                        })
                    }
                });
            }
            return Ok(Arc::new(SubsetPrice::new(covariates)));
        }
        Err(Error::UnknownStrategy {
            kind: "pricing functional",
            name: name.into(),
        })
    }
}

impl Default for PricingRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(BestEstimate));
        reg.register(Arc::new(Unawareness));
        reg.register(Arc::new(DiscriminationFree));
        reg.register(Arc::new(NullPrice));
        reg.register(Arc::new(SubsetPrice::new(vec![Covariate::X1])));
        reg.register(Arc::new(SubsetPrice::new(vec![Covariate::X2])));
        reg
    }
}

/// `x ↦ mean over the supplied marginal draws of D of best_estimate(x, d)`.
pub fn discrimination_free_price_general<F>(
    best_estimate: F,
    d_marginal_samples: Vec<f64>,
) -> Result<impl Fn(&[f64]) -> f64>
where
    F: Fn(&[f64], f64) -> f64,
{
    if d_marginal_samples.is_empty() {
        return Err(Error::Empty("marginal samples of D"));
    }
    // running mean: exact whenever the integrand is constant in d
    Ok(move |x: &[f64]| {
        d_marginal_samples
            .iter()
            .enumerate()
            .fold(0.0, |m, (k, &d)| {
                m + (best_estimate(x, d) - m) / (k + 1) as f64
            })
    })
}
