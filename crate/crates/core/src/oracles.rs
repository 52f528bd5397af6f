//! Closed-form conditional laws of the portfolio model and the moment
//! estimators built on them. These are the exact references the statistical
//! checkers and the regime table are validated against.
//!
//! Conditioning on `Y = 0` and `D = 0`, `X1 | (X2 = x)` is Gaussian with
//!
//! ```text
//! A(x) = (2 + x²)(1 − ρ2²) − ρ1²
//! m(x) = −ρ1 ρ2 x (1 + x²) / A(x)
//! v(x) = (1 + x²)(1 − ρ1² − ρ2²) / A(x)
//! ```
//!
//! and `X2` has unnormalized density `w(x) exp(−x²/2)` with
//! `w(x) = (1 + x²)^{−1/2} v(x)^{1/2} exp(−x²(2 + x²)ρ2² / (2A(x)))`.
//! Posterior expectations are ratios `E[w(X) h(X)] / E[w(X)]` over a
//! standard normal `X`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{Axiom, Verdict};
use crate::gaussian::SAMPLE_BLOCK;
use crate::model::{validate_rho, ClosedForm};
use crate::quadrature::adaptive_integrate;
use crate::rng::{self, Domain};

/// Tag for verdicts that rest on a numerical comparison rather than a proof.
pub const CONJECTURE_NUMERIC: &str = "conjecture_numeric";

/// Quadrature tolerance behind the analytic separation verdict.
pub const SEPARATION_TOL: f64 = 1e-10;

/// Integration range `[0, X2_CUTOFF]`, doubled by symmetry. The neglected
/// tail carries less than `exp(−X2_CUTOFF²/2)` of the Gaussian mass.
pub const X2_CUTOFF: f64 = 12.0;

pub const MIN_MONTE_CARLO_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarGaussian {
    pub mean: f64,
    pub variance: f64,
}

impl ScalarGaussian {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
            return Err(Error::OutOfRange(format!("N({mean}, {variance})")));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    MonteCarlo,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    /// Delta-method standard error; zero for quadrature.
    pub std_error: f64,
    /// Draws for Monte Carlo, accepted subintervals for quadrature.
    pub n: usize,
    pub method: MomentMethod,
}

impl MomentEstimate {
    /// `|self − other|` in units of the combined standard error.
    pub fn z_distance(&self, other: &MomentEstimate) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        (self.value - other.value).abs() / se
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    MonteCarlo { n: usize, seed: u64 },
    Quadrature { tol: f64 },
}

/// Law of `X1 | (Y = 0, X2 = x2, D = 0)`.
pub fn x1_given_y0_x2_d0(rho1: f64, rho2: f64, x2: f64) -> Result<ScalarGaussian> {
    validate_rho(rho1, rho2)?;
    let k = Kernel::new(rho1, rho2);
    ScalarGaussian::new(k.mean(x2), k.variance(x2))
}

/// Unnormalized density of `X2 | (Y = 0, D = 0)`; even in `x2`.
pub fn x2_unnormalized_density_y0_d0(rho1: f64, rho2: f64, x2: f64) -> Result<f64> {
    validate_rho(rho1, rho2)?;
    Ok(Kernel::new(rho1, rho2).weight(x2) * (-0.5 * x2 * x2).exp())
}

/// The conditional second moment with the mean term left out: `E[v(X2)]`
/// under the law of `X2 | (Y = 0, D = 0)`. Coincides with
/// `E[X1² | Y = 0, D = 0]` whenever `ρ1 ρ2 = 0`.
pub fn second_moment_x1_given_y0_d0(
    rho1: f64,
    rho2: f64,
    method: Estimator,
) -> Result<MomentEstimate> {
    validate_rho(rho1, rho2)?;
    let k = Kernel::new(rho1, rho2);
    posterior_ratio(&k, |k, x| k.variance(x), Parity::Even, method)
}

/// `E[X1² | Y = 0, D = 0] = E[v(X2) + m(X2)²]`.
pub fn conditional_second_moment_x1_given_y0_d0(
    rho1: f64,
    rho2: f64,
    method: Estimator,
) -> Result<MomentEstimate> {
    validate_rho(rho1, rho2)?;
    let k = Kernel::new(rho1, rho2);
    posterior_ratio(
        &k,
        |k, x| k.variance(x) + k.mean(x).powi(2),
        Parity::Even,
        method,
    )
}

/// `E[X1 | Y = 0, D = 0] = E[m(X2)]`, zero by symmetry.
pub fn posterior_mean_x1_given_y0_d0(
    rho1: f64,
    rho2: f64,
    method: Estimator,
) -> Result<MomentEstimate> {
    validate_rho(rho1, rho2)?;
    let k = Kernel::new(rho1, rho2);
    posterior_ratio(&k, |k, x| k.mean(x), Parity::Odd, method)
}

/// `E[X1² | Y = 0]`. `D` is left free, which is the `ρ1 = ρ2 = 0` case.
pub fn second_moment_x1_given_y0(method: Estimator) -> Result<MomentEstimate> {
    second_moment_x1_given_y0_d0(0.0, 0.0, method)
}

/// `Var(Y | X1) = 1 + E[X2²] = 2`, whatever the correlations.
pub fn var_y_given_price(rho1: f64, rho2: f64) -> Result<f64> {
    validate_rho(rho1, rho2)?;
    Ok(2.0)
}

/// Law of `X2 | (X1 = x1, D = d)`.
pub fn x2_given_x1_d(rho1: f64, rho2: f64, x1: f64, d: f64) -> Result<ScalarGaussian> {
    validate_rho(rho1, rho2)?;
    let s = 1.0 - rho1 * rho1;
    ScalarGaussian::new(rho2 / s * (d - rho1 * x1), (s - rho2 * rho2) / s)
}

/// `Var(Y | X1 = x1, D = d) = 1 + E[X2² | X1, D]`.
pub fn var_y_given_price_and_d(rho1: f64, rho2: f64, x1: f64, d: f64) -> Result<f64> {
    if !x1.is_finite() || !d.is_finite() {
        return Err(Error::OutOfRange(format!("x1 = {x1}, d = {d}")));
    }
    Ok(1.0 + x2_given_x1_d(rho1, rho2, x1, d)?.second_moment())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticVerdict {
    pub axiom: Axiom,
    pub verdict: Verdict,
    /// Population quantity that is zero exactly when the axiom holds.
    pub criterion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

/// Population verdict for the price `X1` (best estimate, unawareness and
/// discrimination-free prices all coincide with it).
///
/// * independence: `Cov(X1, D) = ρ1`, and joint Gaussianity makes zero
///   covariance equivalent to independence.
/// * sufficiency: `Var(Y | X1, D) = 1 + m² + v` varies with `(X1, D)` iff
///   `ρ2 ≠ 0`; the criterion is its variance `2ρ2⁴ / (1 − ρ1²)²`.
/// * separation: gap between the `(0, 0)` second moment and the one at
///   `(ρ1, ρ2)`, by quadrature. A gap beyond `10 · SEPARATION_TOL` refutes
///   `X1 ⟂ D | Y`. When exactly one correlation is zero the verdict is only
///   numerical and carries [`CONJECTURE_NUMERIC`].
pub fn analytic_axiom_verdict(axiom: Axiom, rho1: f64, rho2: f64) -> Result<AnalyticVerdict> {
    analytic_axiom_verdict_for(axiom, rho1, rho2, ClosedForm::X1)
}

/// As [`analytic_axiom_verdict`], for any price with a known closed form.
/// A constant price is independent of everything, so independence and
/// separation hold; sufficiency then reads `Y ⟂ D`, which holds iff `D` is
/// independent of `X` (criterion `R² = ρ1² + ρ2²`).
pub fn analytic_axiom_verdict_for(
    axiom: Axiom,
    rho1: f64,
    rho2: f64,
    price: ClosedForm,
) -> Result<AnalyticVerdict> {
    validate_rho(rho1, rho2)?;
    if rho1 < 0.0 || rho2 < 0.0 {
        return Err(Error::InvalidRho {
            rho1,
            rho2,
            reason: "the regime table covers nonnegative correlations",
        });
    }
    let decided = |criterion: f64, tag: Option<&str>| AnalyticVerdict {
        axiom,
        verdict: if criterion == 0.0 {
            Verdict::Holds
        } else {
            Verdict::Violated
        },
        criterion,
        tag: tag.map(str::to_owned),
    };
    if let ClosedForm::Constant(_) = price {
        return Ok(match axiom {
            Axiom::Independence | Axiom::Separation => decided(0.0, None),
            Axiom::Sufficiency => decided(rho1 * rho1 + rho2 * rho2, None),
        });
    }
    Ok(match axiom {
        Axiom::Independence => decided(rho1, None),
        Axiom::Sufficiency => decided(2.0 * rho2.powi(4) / (1.0 - rho1 * rho1).powi(2), None),
        Axiom::Separation => {
            if rho1 == 0.0 && rho2 == 0.0 {
                return Ok(decided(0.0, None));
            }
            let method = Estimator::Quadrature {
                tol: SEPARATION_TOL,
            };
            let gap = second_moment_x1_given_y0(method)?.value
                - second_moment_x1_given_y0_d0(rho1, rho2, method)?.value;
            let numeric_only = (rho1 == 0.0) != (rho2 == 0.0);
            AnalyticVerdict {
                axiom,
                verdict: if gap.abs() > 10.0 * SEPARATION_TOL {
                    Verdict::Violated
                } else {
                    Verdict::Holds
                },
                criterion: gap,
                tag: numeric_only.then(|| CONJECTURE_NUMERIC.to_owned()),
            }
        }
    })
}

/// The closed forms above for fixed `(ρ1, ρ2)`.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    r1: f64,
    r2: f64,
    c: f64,
}

impl Kernel {
    fn new(rho1: f64, rho2: f64) -> Self {
        Self {
            r1: rho1,
            r2: rho2,
            c: 1.0 - rho1 * rho1 - rho2 * rho2,
        }
    }

    #[inline]
    fn a(&self, x: f64) -> f64 {
        (2.0 + x * x) * (1.0 - self.r2 * self.r2) - self.r1 * self.r1
    }

    #[inline]
    fn mean(&self, x: f64) -> f64 {
        -self.r1 * self.r2 * x * (1.0 + x * x) / self.a(x)
    }

    #[inline]
    fn variance(&self, x: f64) -> f64 {
        (1.0 + x * x) * self.c / self.a(x)
    }

    /// The density of `X2 | (Y = 0, D = 0)` relative to `φ`, up to a constant.
    #[inline]
    fn weight(&self, x: f64) -> f64 {
        let x2 = x * x;
        let a = self.a(x);
        let v = (1.0 + x2) * self.c / a;
        (v / (1.0 + x2)).sqrt() * (-0.5 * x2 * (2.0 + x2) * self.r2 * self.r2 / a).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

/// `E[w(X) h(X)] / E[w(X)]` for standard normal `X`.
fn posterior_ratio(
    k: &Kernel,
    h: impl Fn(&Kernel, f64) -> f64 + Sync,
    parity: Parity,
    method: Estimator,
) -> Result<MomentEstimate> {
    match method {
        Estimator::Quadrature { tol } => {
            let phi = |x: f64| (-0.5 * x * x).exp();
            // w is even, so the half line suffices for the normalizer and
            // for even h; the two halves of an odd h cancel exactly
            let den = adaptive_integrate(|x| k.weight(x) * phi(x), 0.0, X2_CUTOFF, tol)?;
            let (value, intervals) = match parity {
                Parity::Even => {
                    let num = adaptive_integrate(
                        |x| k.weight(x) * h(k, x) * phi(x),
                        0.0,
                        X2_CUTOFF,
                        tol,
                    )?;
                    (num.value / den.value, num.intervals)
                }
                Parity::Odd => {
                    let f = |x: f64| k.weight(x) * h(k, x) * phi(x);
                    let pos = adaptive_integrate(f, 0.0, X2_CUTOFF, tol)?;
                    let neg = adaptive_integrate(f, -X2_CUTOFF, 0.0, tol)?;
                    (
                        (pos.value + neg.value) / (2.0 * den.value),
                        pos.intervals + neg.intervals,
                    )
                }
            };
            Ok(MomentEstimate {
                value,
                std_error: 0.0,
                n: intervals + den.intervals,
                method: MomentMethod::Quadrature,
            })
        }
        Estimator::MonteCarlo { n, seed } => {
            if n < MIN_MONTE_CARLO_SAMPLES {
                return Err(Error::TooFewSamples {
                    needed: MIN_MONTE_CARLO_SAMPLES,
                    got: n,
                });
            }
            let blocks = n.div_ceil(SAMPLE_BLOCK);
            let parts: Vec<Sums> = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut r = rng::stream_rng(seed, Domain::MomentEstimate, b as u64);
                    let len = SAMPLE_BLOCK.min(n - b * SAMPLE_BLOCK);
                    let mut s = Sums::default();
                    for _ in 0..len {
                        let x = rng::standard_normal(&mut r);
                        let w = k.weight(x);
                        s.add(w, w * h(k, x));
                    }
                    s
                })
                .collect();
            // fixed reduction order keeps the result independent of threads
            let s = parts.iter().fold(Sums::default(), |acc, p| acc.merge(p));
            Ok(s.ratio(n))
        }
    }
}

/// Running sums for the ratio estimator `Σf / Σw`.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    w: f64,
    f: f64,
    ww: f64,
    ff: f64,
    wf: f64,
}

impl Sums {
    #[inline]
    fn add(&mut self, w: f64, f: f64) {
        self.w += w;
        self.f += f;
        self.ww += w * w;
        self.ff += f * f;
        self.wf += w * f;
    }

    fn merge(self, o: &Sums) -> Sums {
        Sums {
            w: self.w + o.w,
            f: self.f + o.f,
            ww: self.ww + o.ww,
            ff: self.ff + o.ff,
            wf: self.wf + o.wf,
        }
    }

    /// Ratio with its delta-method standard error.
    fn ratio(&self, n: usize) -> MomentEstimate {
        let nf = n as f64;
        let (mw, mf) = (self.w / nf, self.f / nf);
        let r = mf / mw;
        let var_w = self.ww / nf - mw * mw;
        let var_f = self.ff / nf - mf * mf;
        let cov = self.wf / nf - mw * mf;
        let var_r = (var_f - 2.0 * r * cov + r * r * var_w).max(0.0) / (mw * mw * nf);
        MomentEstimate {
            value: r,
            std_error: var_r.sqrt(),
            n,
            method: MomentMethod::MonteCarlo,
        }
    }
}
