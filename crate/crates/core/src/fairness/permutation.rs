//! Permutation p-values. Permutation `k` shuffles `b` with the generator of
//! stream `k` under the given seed, so every permutation is fixed in advance
//! and the loop can be split across threads without changing the result.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::dcor::{Coord, DcorPrepared, Scratch};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};

pub const MIN_PERMUTATIONS: usize = 99;

fn check_permutations(n_permutations: usize) -> Result<()> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::OutOfRange(format!(
            "n_permutations = {n_permutations} (minimum {MIN_PERMUTATIONS})"
        )));
    }
    Ok(())
}

fn p_from_count(exceed: usize, n_permutations: usize) -> f64 {
    (1 + exceed) as f64 / (n_permutations + 1) as f64
}

/// `(1 + #{T(a, πb) ≥ T(a, b)}) / (B + 1)` over `B` seeded permutations of `b`.
pub fn permutation_pvalue<F>(
    statistic_fn: F,
    a: &[f64],
    b: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    check_permutations(n_permutations)?;
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let observed = statistic_fn(a, b);
    let exceed = (0..n_permutations)
        .into_par_iter()
        .map_init(
            || b.to_vec(),
            |buf, k| {
                buf.copy_from_slice(b);
                buf.shuffle(&mut stream_rng(seed, Domain::Permutation, k as u64));
                usize::from(statistic_fn(a, buf) >= observed)
            },
        )
        .sum::<usize>();
    Ok(p_from_count(exceed, n_permutations))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DcorTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Distance-correlation permutation test. Permutation `k` shuffles `b`
/// listed in ascending-`a` order (ties in `a` kept in row order) with the
/// generator [`permutation_pvalue`] uses for index `k`, so the two agree on
/// data presented in that order. Only the pairing-dependent part of the
/// statistic is recomputed, and on the integer path it is compared exactly.
pub(crate) fn dcor_permutation_test<T: Coord>(
    a: &[T],
    b: &[T],
    n_permutations: usize,
    seed: u64,
) -> Result<DcorTest> {
    check_permutations(n_permutations)?;
    let prep = DcorPrepared::new(a, b);
    let mut scratch = Scratch::new();
    let observed = prep.observed_pairing(&mut scratch);
    let statistic = prep.correlation_from_pairing(observed);
    if prep.degenerate() {
        // every arrangement gives the same (zero) statistic
        return Ok(DcorTest {
            statistic,
            p_value: 1.0,
        });
    }
    let ids = prep.ids();
    let exceed = (0..n_permutations)
        .into_par_iter()
        .map_init(
            || (ids.to_vec(), Scratch::new()),
            |(perm, scratch), k| {
                perm.copy_from_slice(ids);
                perm.shuffle(&mut stream_rng(seed, Domain::Permutation, k as u64));
                usize::from(prep.pairing_term(perm, scratch) >= observed)
            },
        )
        .sum::<usize>();
    Ok(DcorTest {
        statistic,
        p_value: p_from_count(exceed, n_permutations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::dcor::{distance_correlation, doubled_midranks, naive, sort_order};
    use crate::rng::{self, stream_rng};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut r = stream_rng(seed, Domain::Oracle, 20);
        (0..n).map(|_| rng::standard_normal(&mut r)).collect()
    }

    #[test]
    fn strong_dependence_hits_the_floor() {
        let a = normals(1, 200);
        let p =
            permutation_pvalue(|x, y| distance_correlation(x, y).unwrap(), &a, &a, 999, 5).unwrap();
        assert_eq!(p, 1.0 / 1000.0);
    }

    #[test]
    fn ceiling_when_every_permutation_exceeds() {
        // observed is smaller than anything a shuffle can produce
        let a = normals(2, 50);
        let b = normals(3, 50);
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let stat = |_: &[f64], _: &[f64]| {
            let k = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if k == 0 {
                0.0
            } else {
                1.0
            }
        };
        let p = permutation_pvalue(stat, &a, &b, 99, 0).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 100);
    }

    #[test]
    fn rejects_too_few_permutations() {
        let a = normals(4, 20);
        assert!(permutation_pvalue(|_, _| 0.0, &a, &a, 98, 0).is_err());
        assert!(permutation_pvalue(|_, _| 0.0, &a, &a[..10], 99, 0).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = normals(5, 300);
        let b: Vec<f64> = a
            .iter()
            .zip(normals(6, 300))
            .map(|(x, e)| 0.1 * x + e)
            .collect();
        let f = |x: &[f64], y: &[f64]| distance_correlation(x, y).unwrap();
        let p1 = permutation_pvalue(f, &a, &b, 199, 42).unwrap();
        assert_eq!(p1, permutation_pvalue(f, &a, &b, 199, 42).unwrap());
    }

    #[test]
    fn fast_test_reproduces_generic_path() {
        // same seeds ⇒ same permutations ⇒ identical p-values, against an
        // O(n²) statistic computed from the definition
        let a0 = normals(7, 150);
        let b0: Vec<f64> = a0
            .iter()
            .zip(normals(8, 150))
            .map(|(x, e)| 0.15 * x * x + e)
            .collect();
        let order = sort_order(&a0);
        let a: Vec<f64> = order.iter().map(|&i| a0[i]).collect();
        let b: Vec<f64> = order.iter().map(|&i| b0[i]).collect();
        for seed in [0u64, 1, 2] {
            // input order does not matter to the fast test
            let (t0, t1) = (
                dcor_permutation_test(&a0, &b0, 199, seed).unwrap(),
                dcor_permutation_test(&a, &b, 199, seed).unwrap(),
            );
            assert_eq!(t0.p_value, t1.p_value);
            assert!((t0.statistic - t1.statistic).abs() < 1e-12);
            let generic = permutation_pvalue(naive::dcor, &a, &b, 199, seed).unwrap();
            let fast = dcor_permutation_test(&a, &b, 199, seed).unwrap();
            assert_eq!(generic, fast.p_value);
            assert!((fast.statistic - naive::dcor(&a, &b)).abs() < 1e-12);

            let ra = doubled_midranks(&a);
            let rb = doubled_midranks(&b);
            let fa: Vec<f64> = ra.iter().map(|&v| v as f64).collect();
            let fb: Vec<f64> = rb.iter().map(|&v| v as f64).collect();
            let generic = permutation_pvalue(naive::dcor, &fa, &fb, 199, seed).unwrap();
            assert_eq!(
                generic,
                dcor_permutation_test(&ra, &rb, 199, seed).unwrap().p_value
            );
        }
    }

    #[test]
    fn constant_margin_gives_p_one() {
        let a = vec![3u32; 200];
        let b: Vec<u32> = (0..200).collect();
        let t = dcor_permutation_test(&a, &b, 99, 0).unwrap();
        assert_eq!(
            t,
            DcorTest {
                statistic: 0.0,
                p_value: 1.0
            }
        );
    }
}
