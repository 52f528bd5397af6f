//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library's conditioning code: densities come from an explicit
//! 3x3 inverse and samples from the structural form
//! `D = ρ1 X1 + ρ2 X2 + sqrt(1 − ρ1² − ρ2²) Z` with independent normals.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Seeds of the 20-run panel used by several acceptance criteria.
pub const PANEL_SEEDS: [u64; 20] = [
    11, 23, 37, 41, 53, 67, 79, 83, 97, 101, 113, 127, 131, 149, 157, 163, 173, 181, 191, 199,
];

pub const SLICE_HALF_WIDTH: f64 = 0.025;
pub const MIN_ACCEPTED: usize = 10_000;

/// Inverse of the covariance of `(X1, X2, D)` by cofactors.
pub fn precision(rho1: f64, rho2: f64) -> [[f64; 3]; 3] {
    let det = 1.0 - rho1 * rho1 - rho2 * rho2;
    let c = [
        [1.0 - rho2 * rho2, rho1 * rho2, -rho1],
        [rho1 * rho2, 1.0 - rho1 * rho1, -rho2],
        [-rho1, -rho2, 1.0],
    ];
    c.map(|row| row.map(|v| v / det))
}

/// Unnormalized joint density of `(X1, X2, D)`.
pub fn joint_density(p: &[[f64; 3]; 3], x: [f64; 3]) -> f64 {
    let mut q = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            q += x[i] * p[i][j] * x[j];
        }
    }
    (-0.5 * q).exp()
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct Moments1 {
    pub mean: f64,
    pub var: f64,
}

/// Mean and variance of the density proportional to `f` on `[lo, hi]` by
/// the trapezoid rule, which converges geometrically for Gaussian tails.
pub fn grid_moments(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> Moments1 {
    let h = (hi - lo) / steps as f64;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..=steps {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 } * f(x);
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    let mean = s1 / s0;
    Moments1 {
        mean,
        var: s2 / s0 - mean * mean,
    }
}

/// Means, variances and covariance of a 2-d density on a square grid.
pub fn grid_moments2(
    f: impl Fn(f64, f64) -> f64,
    lim: f64,
    steps: usize,
) -> ([f64; 2], [[f64; 2]; 2]) {
    let h = 2.0 * lim / steps as f64;
    let (mut s0, mut s) = (0.0, [0.0; 5]);
    for i in 0..=steps {
        let a = -lim + i as f64 * h;
        let wa = if i == 0 || i == steps { 0.5 } else { 1.0 };
        for j in 0..=steps {
            let b = -lim + j as f64 * h;
            let wb = if j == 0 || j == steps { 0.5 } else { 1.0 };
            let w = wa * wb * f(a, b);
            s0 += w;
            s[0] += w * a;
            s[1] += w * b;
            s[2] += w * a * a;
            s[3] += w * b * b;
            s[4] += w * a * b;
        }
    }
    let m = [s[0] / s0, s[1] / s0];
    let c01 = s[4] / s0 - m[0] * m[1];
    (
        m,
        [
            [s[2] / s0 - m[0] * m[0], c01],
            [c01, s[3] / s0 - m[1] * m[1]],
        ],
    )
}

/// Weighted sample summary. Standard errors use the Kish effective size.
#[derive(Debug, Clone, Copy)]
pub struct SliceEstimate {
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    pub var_se: f64,
    pub accepted: usize,
}

impl SliceEstimate {
    pub fn from_weighted(xs: &[(f64, f64)]) -> Self {
        let sw: f64 = xs.iter().map(|&(_, w)| w).sum();
        let sww: f64 = xs.iter().map(|&(_, w)| w * w).sum();
        let mean = xs.iter().map(|&(x, w)| w * x).sum::<f64>() / sw;
        let var = xs.iter().map(|&(x, w)| w * (x - mean).powi(2)).sum::<f64>() / sw;
        let m4 = xs.iter().map(|&(x, w)| w * (x - mean).powi(4)).sum::<f64>() / sw;
        let ess = sw * sw / sww;
        SliceEstimate {
            mean,
            var,
            mean_se: (var / ess).sqrt(),
            var_se: ((m4 - var * var) / ess).sqrt(),
            accepted: xs.len(),
        }
    }

    pub fn mean_z(&self, exact: f64) -> f64 {
        (self.mean - exact).abs() / self.mean_se
    }

    pub fn var_z(&self, exact: f64) -> f64 {
        (self.var - exact).abs() / self.var_se
    }
}

/// Structural sampler for `(X1, X2, D)`.
pub struct Sampler {
    rho1: f64,
    rho2: f64,
    s: f64,
    rng: ChaCha20Rng,
    unit: Normal,
}

impl Sampler {
    pub fn new(rho1: f64, rho2: f64, seed: u64) -> Self {
        Sampler {
            rho1,
            rho2,
            s: (1.0 - rho1 * rho1 - rho2 * rho2).sqrt(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            unit: Normal::new(0.0, 1.0).unwrap(),
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// A standard normal restricted to the slice around `c`, by inversion.
    pub fn in_slice(&mut self, c: f64) -> f64 {
        let lo = self.unit.cdf(c - SLICE_HALF_WIDTH);
        let hi = self.unit.cdf(c + SLICE_HALF_WIDTH);
        let u: f64 = self.rng.random();
        self.unit.inverse_cdf(lo + u * (hi - lo))
    }

    pub fn d(&mut self, x1: f64, x2: f64) -> f64 {
        self.rho1 * x1 + self.rho2 * x2 + self.s * self.normal()
    }

    /// Draws from `X2 | X1 ≈ x1, D ≈ d`.
    pub fn x2_given_x1_d(&mut self, x1: f64, d: f64) -> SliceEstimate {
        self.collect(|s| {
            let a = s.in_slice(x1);
            let b = s.normal();
            ((s.d(a, b) - d).abs() < SLICE_HALF_WIDTH).then_some((b, 1.0))
        })
    }

    /// Draws from `X1 | X2 ≈ x2, D ≈ d`.
    pub fn x1_given_x2_d(&mut self, x2: f64, d: f64) -> SliceEstimate {
        self.collect(|s| {
            let a = s.normal();
            let b = s.in_slice(x2);
            ((s.d(a, b) - d).abs() < SLICE_HALF_WIDTH).then_some((a, 1.0))
        })
    }

    /// Draws from `D | X1 ≈ x1, X2 ≈ x2`.
    pub fn d_given_x1_x2(&mut self, x1: f64, x2: f64) -> SliceEstimate {
        self.collect(|s| {
            let a = s.in_slice(x1);
            let b = s.in_slice(x2);
            Some((s.d(a, b), 1.0))
        })
    }

    /// Draws from `X1 | Y = 0, X2 ≈ x2, D ≈ 0`, the event `Y = 0` entering
    /// through the likelihood weight `N(0; X1, 1 + X2²)`.
    pub fn x1_given_y0_x2_d0(&mut self, x2: f64) -> SliceEstimate {
        self.collect(|s| {
            let a = s.normal();
            let b = s.in_slice(x2);
            ((s.d(a, b)).abs() < SLICE_HALF_WIDTH).then(|| (a, normal_pdf(0.0, a, 1.0 + b * b)))
        })
    }

    /// Draws of `(X1, X2)` given `D ≈ d`, by rejection on `D`.
    pub fn x_given_d(&mut self, d: f64) -> [SliceEstimate; 2] {
        let mut pairs = Vec::new();
        while pairs.len() < MIN_ACCEPTED {
            let a = self.normal();
            let b = self.normal();
            if (self.d(a, b) - d).abs() < SLICE_HALF_WIDTH {
                pairs.push((a, b));
            }
        }
        let first: Vec<(f64, f64)> = pairs.iter().map(|&(a, _)| (a, 1.0)).collect();
        let second: Vec<(f64, f64)> = pairs.iter().map(|&(_, b)| (b, 1.0)).collect();
        [
            SliceEstimate::from_weighted(&first),
            SliceEstimate::from_weighted(&second),
        ]
    }

    fn collect(&mut self, mut draw: impl FnMut(&mut Self) -> Option<(f64, f64)>) -> SliceEstimate {
        let mut xs = Vec::with_capacity(MIN_ACCEPTED);
        while xs.len() < MIN_ACCEPTED {
            if let Some(v) = draw(self) {
                xs.push(v);
            }
        }
        SliceEstimate::from_weighted(&xs)
    }
}

/// One point of the random oracle panel.
#[derive(Debug, Clone, Copy)]
pub struct PanelPoint {
    pub rho1: f64,
    pub rho2: f64,
    pub x1: f64,
    pub x2: f64,
    pub d: f64,
}

/// `count` valid parameter sets with `ρ1² + ρ2² ≤ 0.85`. Conditioning
/// values are draws of `(X1, X2, D)` from that model with every coordinate
/// inside `[-2, 2]`, so each slice has a reasonable acceptance rate.
pub fn random_panel(count: usize, seed: u64) -> Vec<PanelPoint> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let rho1: f64 = rng.random_range(-0.9..0.9);
        let rho2: f64 = rng.random_range(-0.9..0.9);
        if rho1 * rho1 + rho2 * rho2 > 0.85 {
            continue;
        }
        let mut s = Sampler::new(rho1, rho2, rng.random());
        loop {
            let (x1, x2) = (s.normal(), s.normal());
            let d = s.d(x1, x2);
            if [x1, x2, d].iter().all(|v| v.abs() <= 2.0) {
                out.push(PanelPoint {
                    rho1,
                    rho2,
                    x1,
                    x2,
                    d,
                });
                break;
            }
        }
    }
    out
}

/// A library moment next to its grid and slice-sampling counterparts.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub label: String,
    pub library: f64,
    pub grid: f64,
    /// Slice estimate and its standard error, when one was drawn.
    pub slice: Option<(f64, f64)>,
}

impl Comparison {
    pub fn grid_error(&self) -> f64 {
        (self.library - self.grid).abs()
    }

    pub fn slice_z(&self) -> f64 {
        self.slice
            .map_or(0.0, |(v, se)| (self.library - v).abs() / se)
    }

    pub fn passes(&self, grid_tol: f64, max_z: f64) -> bool {
        self.grid_error() <= grid_tol && self.slice_z() <= max_z
    }
}

fn pair(label: String, lib: (f64, f64), grid: Moments1, slice: SliceEstimate) -> [Comparison; 2] {
    [
        Comparison {
            label: format!("{label} mean"),
            library: lib.0,
            grid: grid.mean,
            slice: Some((slice.mean, slice.mean_se)),
        },
        Comparison {
            label: format!("{label} var"),
            library: lib.1,
            grid: grid.var,
            slice: Some((slice.var, slice.var_se)),
        },
    ]
}

const GRID_LIM: f64 = 15.0;
const GRID_STEPS: usize = 6000;

/// Checks every closed-form conditional at one panel point: `condition` on
/// each pair of coordinates and on `D` alone, `X1 | Y = 0, X2, D = 0`, and
/// `X2 | X1, D`.
pub fn compare_conditionals(pt: &PanelPoint, seed: u64) -> Vec<Comparison> {
    use fairlens::gaussian::GaussianDistribution;
    use fairlens::oracles::{x1_given_y0_x2_d0, x2_given_x1_d};

    let PanelPoint {
        rho1,
        rho2,
        x1,
        x2,
        d,
    } = *pt;
    let p = precision(rho1, rho2);
    let dist = GaussianDistribution::from_rows(
        &[0.0; 3],
        &[&[1.0, 0.0, rho1], &[0.0, 1.0, rho2], &[rho1, rho2, 1.0]],
    )
    .unwrap();
    let lib1 = |obs: &[usize], vals: &[f64]| {
        let c = dist.condition(obs, vals).unwrap();
        (c.mean()[0], c.cov()[(0, 0)])
    };
    let grid1 = |f: &dyn Fn(f64) -> f64| grid_moments(f, -GRID_LIM, GRID_LIM, GRID_STEPS);
    let mut s = Sampler::new(rho1, rho2, seed);
    let tag = format!("({rho1:.3}, {rho2:.3})");
    let mut out = Vec::new();

    out.extend(pair(
        format!("{tag} X2 | X1 = {x1:.3}, D = {d:.3}"),
        lib1(&[0, 2], &[x1, d]),
        grid1(&|t| joint_density(&p, [x1, t, d])),
        s.x2_given_x1_d(x1, d),
    ));
    let g = x2_given_x1_d(rho1, rho2, x1, d).unwrap();
    out.extend(pair(
        format!("{tag} x2_given_x1_d({x1:.3}, {d:.3})"),
        (g.mean, g.variance),
        grid1(&|t| joint_density(&p, [x1, t, d])),
        s.x2_given_x1_d(x1, d),
    ));
    out.extend(pair(
        format!("{tag} X1 | X2 = {x2:.3}, D = {d:.3}"),
        lib1(&[1, 2], &[x2, d]),
        grid1(&|t| joint_density(&p, [t, x2, d])),
        s.x1_given_x2_d(x2, d),
    ));
    out.extend(pair(
        format!("{tag} D | X1 = {x1:.3}, X2 = {x2:.3}"),
        lib1(&[0, 1], &[x1, x2]),
        grid1(&|t| joint_density(&p, [x1, x2, t])),
        s.d_given_x1_x2(x1, x2),
    ));

    let c = dist.condition(&[2], &[d]).unwrap();
    let (gm, gc) = grid_moments2(|a, b| joint_density(&p, [a, b, d]), 10.0, 1000);
    let sl = s.x_given_d(d);
    for k in 0..2 {
        let grid = Moments1 {
            mean: gm[k],
            var: gc[k][k],
        };
        out.extend(pair(
            format!("{tag} X{} | D = {d:.3}", k + 1),
            (c.mean()[k], c.cov()[(k, k)]),
            grid,
            sl[k],
        ));
    }
    out.push(Comparison {
        label: format!("{tag} Cov(X1, X2 | D = {d:.3})"),
        library: c.cov()[(0, 1)],
        grid: gc[0][1],
        slice: None,
    });

    let k = x1_given_y0_x2_d0(rho1, rho2, x2).unwrap();
    out.extend(pair(
        format!("{tag} X1 | Y = 0, X2 = {x2:.3}, D = 0"),
        (k.mean, k.variance),
        grid1(&|t| joint_density(&p, [t, x2, 0.0]) * normal_pdf(0.0, t, 1.0 + x2 * x2)),
        s.x1_given_y0_x2_d0(x2),
    ));
    out
}
