//! The three checkers. Separation and sufficiency share one conditional test
//! that only differs in which column is the target and which is conditioned on.

use rayon::prelude::*;

use super::dcor::{check_pair, doubled_midranks};
use super::fisher::{chi2_even_sf, fisher_statistic};
use super::permutation::{dcor_permutation_test, DcorTest};
use super::{Axiom, FairnessVerdict, Source, TestConfig, Verdict};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, normal_quantile};

/// Power guard: below this many observations a non-rejection is `INCONCLUSIVE`.
pub const MIN_N_FOR_HOLDS: usize = 100_000;

const MIN_N_INDEPENDENCE: usize = 100;
const MIN_PER_BIN_FACTOR: usize = 100;
const MIN_BIN_COUNT: usize = 30;

/// Gaussian copula scores `Φ⁻¹(rank / (n + 1))`, with mid-ranks for ties.
pub fn normal_scores(v: &[f64]) -> Vec<f64> {
    let denom = 2.0 * (v.len() as f64 + 1.0);
    doubled_midranks(v)
        .into_iter()
        .map(|r| normal_quantile(r as f64 / denom))
        .collect()
}

fn dcor_test(
    a: &[f64],
    b: &[f64],
    rank: bool,
    n_permutations: usize,
    seed: u64,
) -> Result<DcorTest> {
    if rank {
        dcor_permutation_test(
            &doubled_midranks(a),
            &doubled_midranks(b),
            n_permutations,
            seed,
        )
    } else {
        dcor_permutation_test(a, b, n_permutations, seed)
    }
}

fn verdict(
    axiom: Axiom,
    statistic: f64,
    p_value: f64,
    n_used: usize,
    cfg: &TestConfig,
) -> FairnessVerdict {
    FairnessVerdict {
        axiom,
        statistic,
        p_value: Some(p_value),
        analytic_criterion: None,
        verdict: Verdict::from_p_value(p_value, cfg.alpha, n_used),
        alpha: cfg.alpha,
        n_used,
        seed: cfg.seed,
        source: Source::Statistical,
        tag: None,
    }
}

/// Tests `prices ⟂ d` with a distance-correlation permutation test.
/// The statistic is the (rank, if enabled) distance correlation.
pub fn check_independence(prices: &[f64], d: &[f64], cfg: &TestConfig) -> Result<FairnessVerdict> {
    cfg.validate()?;
    check_pair(prices, d, MIN_N_INDEPENDENCE)?;
    let test = dcor_test(
        prices,
        d,
        cfg.rank_transform,
        cfg.n_permutations,
        derive_seed(cfg.seed, 0),
    )?;
    Ok(verdict(
        Axiom::Independence,
        test.statistic,
        test.p_value,
        prices.len(),
        cfg,
    ))
}

/// Tests `prices ⟂ d | y`.
pub fn check_separation(
    prices: &[f64],
    d: &[f64],
    y: &[f64],
    cfg: &TestConfig,
) -> Result<FairnessVerdict> {
    check_conditional(Axiom::Separation, prices, d, y, cfg)
}

/// Tests `y ⟂ d | prices`: separation with the response and the price swapped.
pub fn check_sufficiency(
    y: &[f64],
    d: &[f64],
    prices: &[f64],
    cfg: &TestConfig,
) -> Result<FairnessVerdict> {
    check_conditional(Axiom::Sufficiency, y, d, prices, cfg)
}

/// `target ⟂ d | conditioning`. The conditioning column is cut into
/// `n_bins_y` equal-count bins by rank; inside each bin both `target` and `d`
/// are residualized on the conditioning value by least squares, and the
/// residuals go through the permutation test. Per-bin p-values are combined
/// by Fisher's method.
fn check_conditional(
    axiom: Axiom,
    target: &[f64],
    d: &[f64],
    conditioning: &[f64],
    cfg: &TestConfig,
) -> Result<FairnessVerdict> {
    cfg.validate()?;
    let min_len = MIN_PER_BIN_FACTOR * cfg.n_bins_y;
    check_pair(target, d, min_len)?;
    check_pair(target, conditioning, min_len)?;
    let n = target.len();

    let (target, d, conditioning) = if cfg.rank_transform {
        (
            normal_scores(target),
            normal_scores(d),
            normal_scores(conditioning),
        )
    } else {
        (target.to_vec(), d.to_vec(), conditioning.to_vec())
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| conditioning[i].total_cmp(&conditioning[j]));
    let bins = equal_count_bins(n, cfg.n_bins_y);
    for (bin, range) in bins.iter().enumerate() {
        if range.len() < MIN_BIN_COUNT {
            return Err(Error::EmptyBin {
                bin,
                count: range.len(),
                min: MIN_BIN_COUNT,
            });
        }
    }

    let pvals = bins
        .par_iter()
        .enumerate()
        .map(|(bin, range)| {
            let idx = &order[range.clone()];
            let c: Vec<f64> = idx.iter().map(|&i| conditioning[i]).collect();
            let mut t: Vec<f64> = idx.iter().map(|&i| target[i]).collect();
            let mut dd: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
            residualize(&mut t, &c);
            residualize(&mut dd, &c);
            let seed = derive_seed(cfg.seed, bin as u64 + 1);
            dcor_test(&t, &dd, cfg.rank_transform, cfg.n_permutations, seed).map(|r| r.p_value)
        })
        .collect::<Result<Vec<f64>>>()?;

    let statistic = fisher_statistic(&pvals);
    let p_value = chi2_even_sf(statistic, pvals.len());
    Ok(verdict(axiom, statistic, p_value, n, cfg))
}

/// Consecutive index ranges; the first `n % k` bins take one extra point.
fn equal_count_bins(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    // running form keeps constant columns exact
    v.iter()
        .enumerate()
        .fold(0.0, |m, (k, &x)| m + (x - m) / (k + 1) as f64)
}

/// Replaces `v` by its least-squares residual on `c` (intercept included).
fn residualize(v: &mut [f64], c: &[f64]) {
    let (mv, mc) = (mean(v), mean(c));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&y, &x) in v.iter().zip(c) {
        sxy += (x - mc) * (y - mv);
        sxx += (x - mc) * (x - mc);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    for (y, &x) in v.iter_mut().zip(c) {
        *y = (*y - mv) - slope * (x - mc);
    }
}
