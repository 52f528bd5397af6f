//! Distance covariance and correlation for univariate samples in
//! `O(n log n)`.
//!
//! With `A_i = Σ_j |a_i − a_j|` (and `B_i` likewise) the V-statistic is
//!
//! ```text
//! n⁴ dCov² = n² Σ_ij |a_i − a_j||b_i − b_j| + (Σ A)(Σ B) − 2n Σ_i A_i B_i
//! ```
//!
//! The row sums come from one sort and prefix sums. The cross term is
//! evaluated in `a`-order: the signed part is a prefix-sum identity and the
//! correction over discordant pairs is accumulated during a merge sort on
//! `b`, in the same way inversions are counted.
//!
//! Rank data run through the same code on `u32` coordinates with `i128`
//! accumulation, which makes the permutation statistic exact. While
//! `n · span(a) · span(b)` stays below `2⁶⁴` the per-element merge updates are
//! done in wrapping `u64`; each contribution is a non-negative integer below
//! that bound, so the wrapped value is the true one.

use std::cmp::Ordering;
use std::num::Wrapping;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

pub(crate) trait Coord: Copy + PartialOrd + Send + Sync {
    type Acc: Copy
        + PartialOrd
        + Send
        + Sync
        + Add<Output = Self::Acc>
        + Sub<Output = Self::Acc>
        + Mul<Output = Self::Acc>;

    /// Cheaper arithmetic for the merge updates, see [`Coord::narrow_exact`].
    type Narrow: Copy
        + Add<Output = Self::Narrow>
        + Sub<Output = Self::Narrow>
        + Mul<Output = Self::Narrow>;

    fn zero() -> Self::Acc;
    fn widen(self) -> Self::Acc;
    fn narrow(self) -> Self::Narrow;
    fn narrow_count(n: usize) -> Self::Narrow;
    fn narrow_to_acc(x: Self::Narrow) -> Self::Acc;
    /// Whether merge contributions computed in `Narrow` are exact.
    fn narrow_exact(n: usize, a: &[Self], b: &[Self]) -> bool;

    /// Compact storage for a row sum `Σ_j |v_i − v_j|`.
    type Row: Copy + Send + Sync;
    fn store_row(acc: Self::Acc) -> Self::Row;
    fn row_product(x: Self::Row, y: Self::Row) -> Self::Acc;
    /// Whether `Acc` holds every intermediate for samples like these.
    fn in_range(n: usize, a: &[Self], b: &[Self]) -> bool;
    fn count(n: usize) -> Self::Acc;
    fn to_f64(acc: Self::Acc) -> f64;
    fn cmp(&self, other: &Self) -> Ordering;
}

impl Coord for f64 {
    type Acc = f64;
    type Narrow = f64;
    fn zero() -> f64 {
        0.0
    }
    #[inline]
    fn widen(self) -> f64 {
        self
    }
    #[inline]
    fn narrow(self) -> f64 {
        self
    }
    #[inline]
    fn narrow_count(n: usize) -> f64 {
        n as f64
    }
    #[inline]
    fn narrow_to_acc(x: f64) -> f64 {
        x
    }
    fn narrow_exact(_: usize, _: &[f64], _: &[f64]) -> bool {
        true
    }
    type Row = f64;
    #[inline]
    fn store_row(acc: f64) -> f64 {
        acc
    }
    #[inline]
    fn row_product(x: f64, y: f64) -> f64 {
        x * y
    }
    fn in_range(_: usize, _: &[f64], _: &[f64]) -> bool {
        true
    }
    fn count(n: usize) -> f64 {
        n as f64
    }
    fn to_f64(acc: f64) -> f64 {
        acc
    }
    #[inline]
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

impl Coord for u32 {
    type Acc = i128;
    type Narrow = Wrapping<u64>;
    fn zero() -> i128 {
        0
    }
    #[inline]
    fn widen(self) -> i128 {
        self as i128
    }
    #[inline]
    fn narrow(self) -> Wrapping<u64> {
        Wrapping(self as u64)
    }
    #[inline]
    fn narrow_count(n: usize) -> Wrapping<u64> {
        Wrapping(n as u64)
    }
    #[inline]
    fn narrow_to_acc(x: Wrapping<u64>) -> i128 {
        x.0 as i128
    }
    fn narrow_exact(n: usize, a: &[u32], b: &[u32]) -> bool {
        // a contribution sums fewer than n products of spans
        (n as u128) * (span(a) as u128) * (span(b) as u128) < 1u128 << 64
    }
    fn count(n: usize) -> i128 {
        n as i128
    }
    fn to_f64(acc: i128) -> f64 {
        acc as f64
    }
    #[inline]
    fn cmp(&self, other: &Self) -> Ordering {
        Ord::cmp(self, other)
    }
    type Row = u64;
    #[inline]
    fn store_row(acc: i128) -> u64 {
        // row sums are below n · span < 2⁶³
        acc as u64
    }
    #[inline]
    fn row_product(x: u64, y: u64) -> i128 {
        (x as u128 * y as u128) as i128
    }
    fn in_range(n: usize, a: &[u32], b: &[u32]) -> bool {
        // the pairing term is bounded by 8 n³ span(a) span(b)
        n < 1 << 31
            && 8.0 * (n as f64).powi(3) * f64::from(span(a)) * f64::from(span(b)) < 2f64.powi(126)
    }
}

fn span(v: &[u32]) -> u32 {
    let (lo, hi) = v
        .iter()
        .fold((u32::MAX, 0), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi.saturating_sub(lo)
}

/// `Σ_j |v_i − v_j|` for every `i`.
pub(crate) fn row_sums<T: Coord>(v: &[T]) -> Vec<T::Acc> {
    let n = v.len();
    let order = sort_order(v);
    let total = v.iter().fold(T::zero(), |s, x| s + x.widen());
    let mut out = vec![T::zero(); n];
    let mut before = T::zero();
    for (p, &i) in order.iter().enumerate() {
        let x = v[i].widen();
        let after = total - before - x;
        let below = T::count(p);
        let above = T::count(n - p - 1);
        out[i] = x * below - before + after - x * above;
        before = before + x;
    }
    out
}

#[derive(Clone, Copy)]
struct Pair<T> {
    a: T,
    b: T,
}

/// Scratch space reused across permutations.
pub(crate) struct Scratch<T> {
    left: Vec<Pair<T>>,
    right: Vec<Pair<T>>,
}

impl<T: Coord> Scratch<T> {
    pub(crate) fn new() -> Self {
        Self {
            left: Vec::new(),
            right: Vec::new(),
        }
    }
}

/// Σ over `i < j` with `b_i > b_j` of `(a_j − a_i)(b_i − b_j)`, for the
/// pairs in `scratch.left` listed in ascending `a`. Leaves them sorted by `b`.
fn discordant_sum<T: Coord>(scratch: &mut Scratch<T>, narrow: bool) -> T::Acc {
    if narrow {
        merge_sort_discordant(scratch, T::narrow, T::narrow_count, T::narrow_to_acc)
    } else {
        merge_sort_discordant(scratch, T::widen, T::count, |x| x)
    }
}

/// Runs shorter than this are handled pairwise before merging starts.
const BLOCK: usize = 16;

fn merge_sort_discordant<T: Coord, R>(
    scratch: &mut Scratch<T>,
    lift: impl Fn(T) -> R + Copy,
    count: impl Fn(usize) -> R + Copy,
    to_acc: impl Fn(R) -> T::Acc + Copy,
) -> T::Acc
where
    R: Copy + Add<Output = R> + Sub<Output = R> + Mul<Output = R>,
{
    let src = &mut scratch.left;
    let dst = &mut scratch.right;
    let n = src.len();

    let mut total = T::zero();
    for block in src.chunks_mut(BLOCK) {
        for j in 1..block.len() {
            let (aj, bj) = (lift(block[j].a), lift(block[j].b));
            let mut acc = count(0);
            for p in &block[..j] {
                let hit = count(usize::from(p.b.cmp(&block[j].b) == Ordering::Greater));
                acc = acc + hit * (aj - lift(p.a)) * (lift(p.b) - bj);
            }
            total = total + to_acc(acc);
        }
        block.sort_unstable_by(|x, y| x.b.cmp(&y.b));
    }

    dst.clear();
    dst.extend_from_slice(src);
    let mut width = BLOCK;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            total = total
                + merge_runs(
                    &src[start..mid],
                    &src[mid..end],
                    &mut dst[start..end],
                    lift,
                    count,
                    to_acc,
                );
            start = end;
        }
        std::mem::swap(src, dst);
        width *= 2;
    }
    total
}

/// Merges two `b`-sorted runs (`left` precedes `right` in `a`-order) and
/// returns the discordant-pair contribution between them. Running sums over
/// the unmerged part of `left` are kept in `R`.
#[inline]
fn merge_runs<T: Coord, R>(
    left: &[Pair<T>],
    right: &[Pair<T>],
    out: &mut [Pair<T>],
    lift: impl Fn(T) -> R,
    count: impl Fn(usize) -> R,
    to_acc: impl Fn(R) -> T::Acc,
) -> T::Acc
where
    R: Copy + Add<Output = R> + Sub<Output = R> + Mul<Output = R>,
{
    if right.is_empty() {
        out.copy_from_slice(left);
        return T::zero();
    }
    let mut it = left.iter();
    let first = it.next().expect("runs are non-empty");
    let init = (lift(first.a), lift(first.b), lift(first.a) * lift(first.b));
    let (mut ra, mut rb, mut rab) = it.fold(init, |(sa, sb, sab), p| {
        let (a, b) = (lift(p.a), lift(p.b));
        (sa + a, sb + b, sab + a * b)
    });
    let mut rc = left.len();
    let mut total = T::zero();
    let (mut i, mut j, mut k) = (0, 0, 0);
    // branch-free: both updates are computed and masked by the comparison
    while i < left.len() && j < right.len() {
        let (l, r) = (left[i], right[j]);
        let take_left = l.b.cmp(&r.b) != Ordering::Greater;
        let (la, lb) = (lift(l.a), lift(l.b));
        let (a, b) = (lift(r.a), lift(r.b));
        // every remaining left element has b greater than r's
        let gain = a * rb - a * b * count(rc) - rab + b * ra;
        let (m, nm) = (
            count(usize::from(take_left)),
            count(usize::from(!take_left)),
        );
        rc -= usize::from(take_left);
        ra = ra - m * la;
        rb = rb - m * lb;
        rab = rab - m * (la * lb);
        total = total + to_acc(nm * gain);
        out[k] = if take_left { l } else { r };
        i += usize::from(take_left);
        j += usize::from(!take_left);
        k += 1;
    }
    out[k..k + right.len() - j].copy_from_slice(&right[j..]);
    k += right.len() - j;
    out[k..].copy_from_slice(&left[i..]);
    total
}

/// Everything a distance-correlation permutation test needs that does not
/// change when `b` is permuted. Observations are held in ascending-`a`
/// order and `b` is addressed through ids into its sorted values, so a
/// permutation is just a shuffled id array.
pub(crate) struct DcorPrepared<T: Coord> {
    a_sorted: Vec<T>,
    /// `A_i` in `a`-sorted order.
    row_a_sorted: Vec<T::Row>,
    /// `b` ascending, each with its row sum.
    b_table: Vec<(T, T::Row)>,
    /// Id of the `b` partner of each `a`-sorted observation.
    ids: Vec<u32>,
    sum_a: T::Acc,
    sum_b: T::Acc,
    sum_row_a: T::Acc,
    sum_row_b: T::Acc,
    dvar_a: f64,
    dvar_b: f64,
    narrow: bool,
}

/// Stable ascending sort permutation.
pub(crate) fn sort_order<T: Coord>(v: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].cmp(&v[j]));
    order
}

impl<T: Coord> DcorPrepared<T> {
    pub(crate) fn new(a: &[T], b: &[T]) -> Self {
        let n = a.len();
        assert!(
            u32::try_from(n).is_ok() && T::in_range(n, a, b),
            "sample too large for exact accumulation"
        );
        let order_a = sort_order(a);
        let order_b = sort_order(b);
        let row_a = row_sums(a);
        let row_b = row_sums(b);
        let mut id_of = vec![0u32; n];
        for (id, &i) in order_b.iter().enumerate() {
            id_of[i] = id as u32;
        }
        let sum = |v: &[T::Acc]| v.iter().fold(T::zero(), |s, &x| s + x);
        let sum_row_a = sum(&row_a);
        let sum_row_b = sum(&row_b);
        Self {
            a_sorted: order_a.iter().map(|&i| a[i]).collect(),
            row_a_sorted: order_a.iter().map(|&i| T::store_row(row_a[i])).collect(),
            b_table: order_b
                .iter()
                .map(|&i| (b[i], T::store_row(row_b[i])))
                .collect(),
            ids: order_a.iter().map(|&i| id_of[i]).collect(),
            sum_a: a.iter().fold(T::zero(), |s, x| s + x.widen()),
            sum_b: b.iter().fold(T::zero(), |s, x| s + x.widen()),
            sum_row_a,
            sum_row_b,
            dvar_a: dvar_scaled(a, &row_a, sum_row_a),
            dvar_b: dvar_scaled(b, &row_b, sum_row_b),
            narrow: T::narrow_exact(n, a, b),
        }
    }

    #[cfg(test)]
    pub(crate) fn uses_narrow(&self) -> bool {
        self.narrow
    }

    #[cfg(test)]
    pub(crate) fn force_wide(mut self) -> Self {
        self.narrow = false;
        self
    }

    pub(crate) fn len(&self) -> usize {
        self.a_sorted.len()
    }

    /// The observed pairing as an id array.
    pub(crate) fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Whether either margin is constant (distance correlation is then 0).
    pub(crate) fn degenerate(&self) -> bool {
        !(self.dvar_a > 0.0 && self.dvar_b > 0.0)
    }

    /// `n Σ|Δa||Δb| − 2 Σ A_i B_i` for the pairing that matches the `k`-th
    /// smallest `a` with the `ids[k]`-th smallest `b`. This is `n³ dCov²` up to a
    /// constant that does not depend on the pairing.
    pub(crate) fn pairing_term(&self, ids: &[u32], scratch: &mut Scratch<T>) -> T::Acc {
        debug_assert_eq!(ids.len(), self.len());
        let pairs = &mut scratch.left;
        pairs.clear();
        let (mut dot, mut sab) = (T::zero(), T::zero());
        for ((&a, &ra), &id) in self.a_sorted.iter().zip(&self.row_a_sorted).zip(ids) {
            let (b, rb) = self.b_table[id as usize];
            dot = dot + T::row_product(ra, rb);
            sab = sab + a.widen() * b.widen();
            pairs.push(Pair { a, b });
        }
        let n = T::count(self.len());
        // Σ_{i<j} (a_j − a_i)(b_j − b_i)
        let signed = n * sab - self.sum_a * self.sum_b;
        let discordant = discordant_sum(scratch, self.narrow);
        let two = T::count(2);
        let cross = two * (signed + two * discordant);
        n * cross - two * dot
    }

    pub(crate) fn correlation_from_pairing(&self, pairing: T::Acc) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let n = self.len() as f64;
        // n⁴ dCov² = n (n³ dCov² variable part) + ΣA ΣB
        let dcov = n * T::to_f64(pairing) + T::to_f64(self.sum_row_a) * T::to_f64(self.sum_row_b);
        let dcov = dcov.max(0.0);
        (dcov / (self.dvar_a * self.dvar_b).sqrt()).sqrt().min(1.0)
    }

    pub(crate) fn observed_pairing(&self, scratch: &mut Scratch<T>) -> T::Acc {
        self.pairing_term(&self.ids, scratch)
    }
}

/// `n⁴ dVar²` as a float.
fn dvar_scaled<T: Coord>(v: &[T], rows: &[T::Acc], sum_rows: T::Acc) -> f64 {
    let n = T::count(v.len());
    let (s1, s2) = v.iter().fold((T::zero(), T::zero()), |(s1, s2), x| {
        let w = x.widen();
        (s1 + w, s2 + w * w)
    });
    // Σ_ij (v_i − v_j)² = 2n Σv² − 2(Σv)²
    let sq = T::count(2) * (n * s2 - s1 * s1);
    let dot = rows.iter().fold(T::zero(), |s, &r| s + r * r);
    let nf = v.len() as f64;
    let val = nf * nf * T::to_f64(sq) + T::to_f64(sum_rows) * T::to_f64(sum_rows)
        - 2.0 * nf * T::to_f64(dot);
    val.max(0.0)
}

pub(crate) fn dcor_generic<T: Coord>(a: &[T], b: &[T]) -> f64 {
    let prep = DcorPrepared::new(a, b);
    let mut scratch = Scratch::new();
    let pairing = prep.observed_pairing(&mut scratch);
    prep.correlation_from_pairing(pairing)
}

pub(crate) fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min_len {
        return Err(Error::TooFewSamples {
            needed: min_len,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("non-finite observation".into()));
    }
    Ok(())
}

/// Empirical distance correlation (V-statistic) of two equal-length samples.
/// Returns 0 when either sample is constant.
pub fn distance_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 4)?;
    Ok(dcor_generic(a, b))
}

/// Mid-ranks times two, so ties stay integral: a tie group occupying sorted
/// positions `p..q` (0-based, exclusive) gets `p + q + 1`.
///
/// # Panics
/// If `v` has `2³¹` or more elements.
pub fn doubled_midranks(v: &[f64]) -> Vec<u32> {
    let n = v.len();
    assert!(n < 1 << 31, "too many observations for 32-bit ranks");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0u32; n];
    let mut p = 0;
    while p < n {
        let mut q = p + 1;
        while q < n && v[order[q]] == v[order[p]] {
            q += 1;
        }
        let r = (p + q + 1) as u32;
        for &i in &order[p..q] {
            out[i] = r;
        }
        p = q;
    }
    out
}

/// Distance correlation of the rank-transformed samples.
pub fn rank_distance_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 4)?;
    Ok(dcor_generic(&doubled_midranks(a), &doubled_midranks(b)))
}

#[cfg(test)]
pub(crate) mod naive {
    /// Double-centred O(n²) distance correlation, straight from the definition.
    pub fn dcor(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let centre = |v: &[f64]| {
            let mut m = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = (v[i] - v[j]).abs();
                }
            }
            let row: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let all = row.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                for j in 0..n {
                    m[i][j] += all - row[i] - row[j];
                }
            }
            m
        };
        let (ma, mb) = (centre(a), centre(b));
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..n {
            for j in 0..n {
                cov += ma[i][j] * mb[i][j];
                va += ma[i][j] * ma[i][j];
                vb += mb[i][j] * mb[i][j];
            }
        }
        if va <= 0.0 || vb <= 0.0 {
            return 0.0;
        }
        (cov.max(0.0) / (va * vb).sqrt()).sqrt()
    }
}
