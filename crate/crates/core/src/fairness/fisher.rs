use crate::error::{Error, Result};

/// Fisher's method: the upper tail of `−2 Σ ln p_i` under χ² with `2k`
/// degrees of freedom.
pub fn combine_pvalues_fisher(pvals: &[f64]) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::Empty("p-values"));
    }
    if let Some(bad) = pvals.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::OutOfRange(format!("p-value {bad} outside (0, 1]")));
    }
    let statistic = fisher_statistic(pvals);
    Ok(chi2_even_sf(statistic, pvals.len()))
}

pub(crate) fn fisher_statistic(pvals: &[f64]) -> f64 {
    -2.0 * pvals.iter().map(|p| p.ln()).sum::<f64>()
}

/// `P(χ²_{2k} > x) = e^{−x/2} Σ_{i<k} (x/2)^i / i!`, summed in log space.
pub(crate) fn chi2_even_sf(x: f64, k: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let h = 0.5 * x;
    let ln_h = h.ln();
    let mut ln_terms = Vec::with_capacity(k);
    let mut ln_fact = 0.0;
    for i in 0..k {
        if i > 0 {
            ln_fact += (i as f64).ln();
        }
        ln_terms.push(i as f64 * ln_h - ln_fact - h);
    }
    let max = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = ln_terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}
