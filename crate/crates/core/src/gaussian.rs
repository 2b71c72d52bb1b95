//! Gaussian tails: scalar `Q` and its inverse, lower-orthant probabilities in
//! up to three dimensions, the 2-D complementary-CDF region used for
//! dispersion terms, and Berry–Esseen radii.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::prob::CovMatrix2;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Scalar Berry–Esseen constant.
pub const BE_CONSTANT_SCALAR: f64 = 0.56;

/// Default constant for the multivariate radius. Conservative; tunable through
/// [`berry_esseen_radius_with`].
pub const BE_CONSTANT_MULTIVARIATE: f64 = 42.0;

/// Spatial slack (per coordinate) within which a point counts as on the
/// closed region boundary.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Quantile of the corner that boundary rays start from.
pub const ANCHOR_QUANTILE: f64 = 1e-3;

/// Upper tail `P(N(0,1) > x)`.
pub fn std_q(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Lower tail `P(N(0,1) <= x)`.
pub fn std_cdf(x: f64) -> f64 {
    std_q(-x)
}

pub fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

/// Inverse of [`std_q`] on `(0, 1)`.
pub fn std_q_inv(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::OutOfDomain {
            name: "eps",
            value: eps,
        });
    }
    Ok(q_inv_unchecked(eps))
}

fn q_inv_unchecked(eps: f64) -> f64 {
    let mut x = SQRT_2 * erfc_inv(2.0 * eps);
    // Newton polish; erfc_inv alone is not accurate enough near 0 and 2
    for _ in 0..2 {
        let d = std_pdf(x);
        if d < 1e-300 {
            break;
        }
        x += (std_q(x) - eps) / d;
    }
    x
}

/// Standard normal quantile `Phi^{-1}(p)`, accurate in both tails.
fn std_cdf_inv(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -q_inv_unchecked(p)
    }
}

// Gauss–Legendre half-rules (negative nodes) on [-1, 1] for 6, 12, 20 points.
const GL_W: [&[f64]; 3] = [
    &[0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4],
    &[
        0.047_175_336_386_511_77,
        0.106_939_325_995_318_3,
        0.160_078_328_543_346_4,
        0.203_167_426_723_065_9,
        0.233_492_536_538_354_7,
        0.249_147_045_813_402_9,
    ],
    &[
        0.017_614_007_139_152_12,
        0.040_601_429_800_386_94,
        0.062_672_048_334_109_06,
        0.083_276_741_576_704_75,
        0.101_930_119_817_240_4,
        0.118_194_531_961_518_4,
        0.131_688_638_449_176_6,
        0.142_096_109_318_382_1,
        0.149_172_986_472_603_7,
        0.152_753_387_130_725_9,
    ],
];
const GL_X: [&[f64]; 3] = [
    &[-0.932_469_514_203_152_2, -0.661_209_386_466_264_7, -0.238_619_186_083_197],
    &[
        -0.981_560_634_246_719_1,
        -0.904_117_256_370_475,
        -0.769_902_674_194_305,
        -0.587_317_954_286_617_1,
        -0.367_831_498_998_180_2,
        -0.125_233_408_511_469_2,
    ],
    &[
        -0.993_128_599_185_094_9,
        -0.963_971_927_277_913_8,
        -0.912_234_428_251_325_9,
        -0.839_116_971_822_218_8,
        -0.746_331_906_460_150_8,
        -0.636_053_680_726_515,
        -0.510_867_001_950_827_1,
        -0.373_706_088_715_419_6,
        -0.227_785_851_141_645_1,
        -0.076_526_521_133_497_33,
    ],
];

/// `P(X > h, Y > k)` for standard bivariate normal with correlation `r`
/// (Genz's BVND algorithm).
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let ng = if r.abs() < 0.3 {
        0
    } else if r.abs() < 0.75 {
        1
    } else {
        2
    };
    let (gw, gx) = (GL_W[ng], GL_X[ng]);
    let nodes = || {
        gw.iter()
            .zip(gx)
            .flat_map(|(&w, &x)| [(w, 1.0 - x), (w, 1.0 + x)])
    };
    let mut hk = h * k;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        let mut s = 0.0;
        for (w, x) in nodes() {
            let sn = (asr * x).sin();
            s += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return s * asr / TWO_PI + std_cdf(-h) * std_cdf(-k);
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let mut p = 0.0;
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 80.0;
        let asr = -0.5 * (bs / as_ + hk);
        if asr > -100.0 {
            p = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = TWO_PI.sqrt() * std_cdf(-b / a);
            p -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a *= 0.5;
        let mut s = 0.0;
        for (w, x) in nodes() {
            let xs = (a * x) * (a * x);
            let asr = -0.5 * (bs / xs + hk);
            if asr > -100.0 {
                let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                let rs = (1.0 - xs).sqrt();
                let ep = (-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                s += w * asr.exp() * (sp - ep);
            }
        }
        p = (a * s - p) / TWO_PI;
    }
    if r > 0.0 {
        p + std_cdf(-h.max(k))
    } else if h >= k {
        -p
    } else {
        let l = if h < 0.0 {
            std_cdf(k) - std_cdf(h)
        } else {
            std_cdf(-h) - std_cdf(-k)
        };
        l - p
    }
}

/// `P(X <= a, Y <= b)` for standard margins and correlation `r`.
pub fn bvn_lower(a: f64, b: f64, r: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return std_cdf(b);
    }
    if b == f64::INFINITY {
        return std_cdf(a);
    }
    let r = r.clamp(-1.0, 1.0);
    if r >= 1.0 {
        return std_cdf(a.min(b));
    }
    if r <= -1.0 {
        return (std_cdf(a) - std_cdf(-b)).max(0.0);
    }
    bvn_upper(-a, -b, r).clamp(0.0, 1.0)
}

/// A probability with an absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MvnValue {
    pub value: f64,
    pub error: f64,
}

/// Randomised Fibonacci-lattice settings for the 3-D case. The lattice has
/// `F_k` points with generator `(1, F_{k-1})`, where `k = fib_index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmcConfig {
    pub fib_index: u32,
    pub shifts: usize,
    pub seed: u64,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self {
            fib_index: 24,
            shifts: 10,
            seed: 0x5eed,
        }
    }
}

fn fibonacci_pair(k: u32) -> (u64, u64) {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..k {
        let c = a + b;
        a = b;
        b = c;
    }
    (a, b)
}

const DETERMINISTIC_ERROR: f64 = 1e-14;

/// `P(X <= x)` for `X ~ N(mean, cov)` in dimension 1 to 3. Coordinates with
/// zero variance act as deterministic thresholds at their means.
pub fn mvn_lower_orthant(mean: &[f64], cov: &[Vec<f64>], x: &[f64]) -> Result<MvnValue> {
    mvn_lower_orthant_with(mean, cov, x, QmcConfig::default())
}

pub fn mvn_lower_orthant_with(
    mean: &[f64],
    cov: &[Vec<f64>],
    x: &[f64],
    qmc: QmcConfig,
) -> Result<MvnValue> {
    let d = mean.len();
    if d == 0 || d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if x.len() != d || cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch {
            expected: d,
            found: x.len(),
        });
    }
    check_psd(cov)?;
    let scale = (0..d).map(|i| cov[i][i]).fold(0.0, f64::max).max(1e-300);
    let mut keep = Vec::new();
    for i in 0..d {
        if cov[i][i] <= 1e-14 * scale.max(1.0) {
            if x[i] < mean[i] {
                return Ok(MvnValue {
                    value: 0.0,
                    error: 0.0,
                });
            }
        } else {
            keep.push(i);
        }
    }
    let sd: Vec<f64> = keep.iter().map(|&i| cov[i][i].sqrt()).collect();
    let z: Vec<f64> = keep
        .iter()
        .zip(&sd)
        .map(|(&i, s)| (x[i] - mean[i]) / s)
        .collect();
    let corr = |a: usize, b: usize| cov[keep[a]][keep[b]] / (sd[a] * sd[b]);
    match keep.len() {
        0 => Ok(MvnValue {
            value: 1.0,
            error: 0.0,
        }),
        1 => Ok(MvnValue {
            value: std_cdf(z[0]),
            error: DETERMINISTIC_ERROR,
        }),
        2 => Ok(MvnValue {
            value: bvn_lower(z[0], z[1], corr(0, 1)),
            error: DETERMINISTIC_ERROR,
        }),
        _ => {
            let r = [
                [1.0, corr(0, 1), corr(0, 2)],
                [corr(1, 0), 1.0, corr(1, 2)],
                [corr(2, 0), corr(2, 1), 1.0],
            ];
            Ok(trivariate_qmc(&r, &[z[0], z[1], z[2]], qmc))
        }
    }
}

fn check_psd(cov: &[Vec<f64>]) -> Result<()> {
    let d = cov.len();
    for i in 0..d {
        for j in 0..i {
            let s = cov[i][j].abs().max(cov[j][i].abs()).max(1.0);
            if (cov[i][j] - cov[j][i]).abs() > 1e-12 * s {
                return Err(Error::InvalidArgument("covariance is not symmetric".into()));
            }
        }
    }
    // every principal minor non-negative (enough for d <= 3)
    let tol = 1e-10;
    let m = |i: usize, j: usize| cov[i][j];
    for i in 0..d {
        if m(i, i) < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: m(i, i),
            });
        }
        for j in 0..i {
            let det = m(i, i) * m(j, j) - m(i, j) * m(j, i);
            if det < -tol {
                return Err(Error::NotPsd {
                    min_eigenvalue: det,
                });
            }
        }
    }
    if d == 3 {
        let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
            - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
            + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
        if det < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: det,
            });
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor; zero pivots stay zero.
fn cholesky3(r: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (r[i][i] - s).max(0.0).sqrt();
            } else if l[j][j] > 1e-10 {
                l[i][j] = (r[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Genz separation of variables over a randomly shifted Fibonacci lattice
/// with the tent periodisation.
fn trivariate_qmc(r: &[[f64; 3]; 3], b: &[f64; 3], qmc: QmcConfig) -> MvnValue {
    let l = cholesky3(r);
    let step = |lim: f64, piv: f64| -> f64 {
        if piv > 1e-10 {
            std_cdf(lim / piv)
        } else if lim >= 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let e1 = step(b[0], l[0][0]);
    let (gen, points) = fibonacci_pair(qmc.fib_index.clamp(3, 60));
    let mut rng = ChaCha8Rng::seed_from_u64(qmc.seed);
    let mut means = Vec::with_capacity(qmc.shifts);
    for _ in 0..qmc.shifts {
        let shift = [rng.random::<f64>(), rng.random::<f64>()];
        let mut acc = 0.0;
        for i in 0..points {
            let mut w = [0.0; 2];
            let base = [i, (i * gen) % points];
            for k in 0..2 {
                let u = (base[k] as f64 / points as f64 + shift[k]).fract();
                w[k] = 1.0 - (2.0 * u - 1.0).abs();
            }
            let y1 = if l[0][0] > 1e-10 {
                std_cdf_inv(w[0] * e1)
            } else {
                0.0
            };
            let e2 = step(b[1] - l[1][0] * y1, l[1][1]);
            let y2 = if l[1][1] > 1e-10 {
                std_cdf_inv(w[1] * e2)
            } else {
                0.0
            };
            let e3 = step(b[2] - l[2][0] * y1 - l[2][1] * y2, l[2][2]);
            acc += e2 * e3;
        }
        means.push(e1 * acc / points as f64);
    }
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = if means.len() > 1 {
        means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    MvnValue {
        value: mean.clamp(0.0, 1.0),
        error: 3.0 * (var / k).sqrt(),
    }
}

/// `{x : P(X <= x) >= 1 - eps}` for `X ~ N(0, cov)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussRegionSpec {
    cov: CovMatrix2,
    eps: f64,
}

impl GaussRegionSpec {
    pub fn new(cov: CovMatrix2, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::OutOfDomain {
                name: "eps",
                value: eps,
            });
        }
        Ok(Self { cov, eps })
    }

    pub fn cov(&self) -> &CovMatrix2 {
        &self.cov
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: [f64; 2]) -> f64 {
        mvn_lower_orthant(&[0.0, 0.0], &self.cov.as_rows(), &x)
            .map(|v| v.value)
            .expect("2-D covariance already validated")
    }
}

/// Closed membership: `x` counts when it lies within [`BOUNDARY_TOL`] of the
/// region in every coordinate.
pub fn region_membership(spec: &GaussRegionSpec, x: &[f64]) -> Result<bool> {
    if x.len() != 2 {
        return Err(Error::ShapeMismatch {
            expected: 2,
            found: x.len(),
        });
    }
    Ok(spec.cdf([x[0] + BOUNDARY_TOL, x[1] + BOUNDARY_TOL]) >= 1.0 - spec.eps)
}

/// Corner that boundary rays start from: the per-coordinate
/// [`ANCHOR_QUANTILE`] quantiles.
pub fn region_anchor(spec: &GaussRegionSpec) -> [f64; 2] {
    let zq = -q_inv_unchecked(ANCHOR_QUANTILE);
    [
        zq * spec.cov.get(0, 0).sqrt(),
        zq * spec.cov.get(1, 1).sqrt(),
    ]
}

/// For each positive direction `d`, the point `anchor + t d` on the region
/// boundary (member side, `t` to within 1e-9).
pub fn region_boundary(spec: &GaussRegionSpec, directions: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let anchor = region_anchor(spec);
    let target = 1.0 - spec.eps;
    let inside = |t: f64, d: &[f64; 2]| spec.cdf([anchor[0] + t * d[0], anchor[1] + t * d[1]]) >= target;
    let scale = spec.cov.get(0, 0).max(spec.cov.get(1, 1)).sqrt().max(1.0);
    directions
        .iter()
        .map(|d| {
            if !(d[0] > 0.0 && d[1] > 0.0) {
                return Err(Error::InvalidArgument(
                    "boundary directions must be strictly positive".into(),
                ));
            }
            if inside(0.0, d) {
                return Ok(anchor);
            }
            let mut lo = 0.0;
            let mut hi = scale;
            let mut tries = 0;
            while !inside(hi, d) {
                lo = hi;
                hi *= 2.0;
                tries += 1;
                if tries > 60 {
                    return Err(Error::NoBracket { lo: 0.0, hi });
                }
            }
            while hi - lo > 1e-9 * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if inside(mid, d) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok([anchor[0] + hi * d[0], anchor[1] + hi * d[1]])
        })
        .collect()
}

/// `n` unit directions spread over the open positive quadrant.
pub fn quadrant_directions(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let th = std::f64::consts::FRAC_PI_2 * (i as f64 + 0.5) / n as f64;
            [th.cos(), th.sin()]
        })
        .collect()
}

/// Mean, variance and third absolute central moment of one summand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTriple {
    pub mean: f64,
    pub variance: f64,
    pub third_abs_central: f64,
}

impl MomentTriple {
    pub fn new(mean: f64, variance: f64, third_abs_central: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::OutOfDomain {
                name: "variance",
                value: variance,
            });
        }
        if !(third_abs_central >= 0.0) {
            return Err(Error::OutOfDomain {
                name: "third_abs_central",
                value: third_abs_central,
            });
        }
        Ok(Self {
            mean,
            variance,
            third_abs_central,
        })
    }

    /// Moments of a finitely supported variable; zero-weight values are
    /// ignored even when infinite.
    pub fn of_discrete(values: &[f64], weights: &[f64]) -> Result<Self> {
        let live = || values.iter().zip(weights).filter(|(_, &w)| w > 0.0);
        let total: f64 = live().map(|(_, &w)| w).sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("no positive weight".into()));
        }
        let mean = live().map(|(v, w)| v * w).sum::<f64>() / total;
        let variance = live().map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
        let third = live().map(|(v, w)| w * (v - mean).abs().powi(3)).sum::<f64>() / total;
        Self::new(mean, variance, third)
    }
}

/// `C0 rho / (sigma^3 sqrt n)` with the scalar constant.
pub fn berry_esseen_radius(m: &MomentTriple, n: u64) -> Result<f64> {
    berry_esseen_radius_with(m, n, BE_CONSTANT_SCALAR)
}

/// Same functional form with an explicit constant. For the multivariate use,
/// pass the smallest covariance eigenvalue as `variance` and `E|X - mu|^3`
/// (Euclidean norm) as `third_abs_central`.
pub fn berry_esseen_radius_with(m: &MomentTriple, n: u64, constant: f64) -> Result<f64> {
    if m.variance <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    if n == 0 {
        return Err(Error::OutOfDomain {
            name: "n",
            value: 0.0,
        });
    }
    Ok(constant * m.third_abs_central / (m.variance.powf(1.5) * (n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson on [lo, hi] with `m` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> f64 {
        let h = (hi - lo) / m as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    /// `int_{-inf}^{a} phi(x) Phi((b - r x)/sqrt(1-r^2)) dx`.
    fn bvn_oracle(a: f64, b: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        let lo = -12.0;
        if a <= lo {
            return 0.0;
        }
        simpson(|x| std_pdf(x) * std_cdf((b - r * x) / s), lo, a.min(12.0), 20_000)
    }

    #[test]
    fn q_examples() {
        assert_eq!(std_q(0.0), 0.5);
        for x in [0.3, 1.0, 2.5, 7.0] {
            assert!((std_q(x) + std_q(-x) - 1.0).abs() < 1e-15);
        }
        let quad = simpson(std_pdf, 0.0, 1.2816, 2000);
        assert!((std_q(1.2816) - (0.5 - quad)).abs() < 1e-12);
        assert!((std_q(1.2816) - 0.1).abs() < 1e-4);
    }

    #[test]
    fn q_inv_examples() {
        assert!(std_q_inv(0.5).unwrap().abs() < 1e-15);
        for e in [1e-9, 1e-3, 0.05, 0.2, 0.4] {
            let a = std_q_inv(e).unwrap();
            assert!((a + std_q_inv(1.0 - e).unwrap()).abs() < 1e-8);
            assert!((std_q(a) - e).abs() < 1e-10 * e.max(1e-3));
        }
        // bisection against std_q
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid: f64 = 0.5 * (lo + hi);
            if std_q(mid) > 0.1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((std_q_inv(0.1).unwrap() - lo).abs() < 1e-10);
        assert!((std_q_inv(0.1).unwrap() - 1.2816).abs() < 1e-4);
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(std_q_inv(bad).is_err());
        }
    }

    #[test]
    fn gauss_legendre_halves_sum_to_one() {
        for w in GL_W {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bvn_against_integral_oracle() {
        for &r in &[-0.99, -0.95, -0.8, -0.5, -0.1, 0.0, 0.2, 0.5, 0.8, 0.93, 0.99, 0.999] {
            for &(a, b) in &[(0.0, 0.0), (1.0, -0.5), (-2.0, 1.5), (2.5, 2.5), (-1.0, -1.0), (0.3, 3.0)] {
                let got = bvn_lower(a, b, r);
                let want = bvn_oracle(a, b, r);
                assert!((got - want).abs() < 1e-9, "a={a} b={b} r={r}: {got} vs {want}");
            }
        }
        // orthant at the origin: 1/4 + asin(r)/(2 pi)
        for r in [-0.7f64, 0.0, 0.6, 0.95] {
            let want = 0.25 + r.asin() / TWO_PI;
            assert!((bvn_lower(0.0, 0.0, r) - want).abs() < 1e-14);
        }
        assert!((bvn_lower(0.5, 1.0, 1.0) - std_cdf(0.5)).abs() < 1e-15);
        assert!((bvn_lower(0.5, 1.0, -1.0) - (std_cdf(0.5) - std_cdf(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn mvn_examples() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let v = mvn_lower_orthant(&[0.0, 0.0], &id, &[1.2816, 1.2816]).unwrap();
        assert!((v.value - 0.81).abs() < 1e-4);
        let inf = mvn_lower_orthant(&[0.0, 0.0], &id, &[f64::INFINITY; 2]).unwrap();
        assert_eq!(inf.value, 1.0);
        let diag = vec![vec![2.0, 0.0], vec![0.0, 0.5]];
        let v = mvn_lower_orthant(&[1.0, -1.0], &diag, &[0.4, -0.2]).unwrap();
        let want = std_cdf(-0.6 / 2f64.sqrt()) * std_cdf(0.8 / 0.5f64.sqrt());
        assert!((v.value - want).abs() < 1e-12);
        assert!(mvn_lower_orthant(&[0.0; 4], &vec![vec![0.0; 4]; 4], &[0.0; 4]).is_err());
        let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(
            mvn_lower_orthant(&[0.0, 0.0], &bad, &[0.0, 0.0]),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn mvn_singular_coordinates() {
        let cov = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let v = mvn_lower_orthant(&[0.0, 0.0], &cov, &[0.0, 1.0]).unwrap();
        assert!((v.value - std_cdf(1.0)).abs() < 1e-15);
        let v = mvn_lower_orthant(&[0.0, 0.0], &cov, &[-1e-9, 1.0]).unwrap();
        assert_eq!(v.value, 0.0);
    }

    /// Conditioning on the first coordinate turns the 3-D orthant into a 1-D
    /// integral of bivariate values.
    fn trivariate_oracle(r: &[[f64; 3]; 3], b: &[f64; 3]) -> f64 {
        let s1 = (1.0 - r[0][1] * r[0][1]).sqrt();
        let s2 = (1.0 - r[0][2] * r[0][2]).sqrt();
        let rc = (r[1][2] - r[0][1] * r[0][2]) / (s1 * s2);
        simpson(
            |x| std_pdf(x) * bvn_lower((b[1] - r[0][1] * x) / s1, (b[2] - r[0][2] * x) / s2, rc),
            -12.0,
            b[0],
            4000,
        )
    }

    #[test]
    fn trivariate_against_conditional_oracle() {
        let cases = [
            ([[1.0, 0.3, -0.2], [0.3, 1.0, 0.4], [-0.2, 0.4, 1.0]], [0.5, 1.0, -0.3]),
            ([[1.0, 0.8, 0.6], [0.8, 1.0, 0.7], [0.6, 0.7, 1.0]], [1.5, 1.2, 2.0]),
            ([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [1.2816, 1.2816, 1.2816]),
        ];
        for (r, b) in cases {
            let cov: Vec<Vec<f64>> = r.iter().map(|row| row.to_vec()).collect();
            let v = mvn_lower_orthant(&[0.0; 3], &cov, &b).unwrap();
            let want = trivariate_oracle(&r, &b);
            assert!(v.error < 1e-6, "error estimate {}", v.error);
            assert!((v.value - want).abs() < 1e-6, "{} vs {want}", v.value);
        }
    }

    #[test]
    fn region_examples() {
        let id = CovMatrix2::diagonal(1.0, 1.0).unwrap();
        let spec = GaussRegionSpec::new(id, 0.19).unwrap();
        assert!(region_membership(&spec, &[10.0, 10.0]).unwrap());
        assert!(region_membership(&spec, &[1.2816, 1.2816]).unwrap());
        assert!(!region_membership(&spec, &[1.27, 1.27]).unwrap());
        let zero = GaussRegionSpec::new(CovMatrix2::zero(), 0.1).unwrap();
        assert!(region_membership(&zero, &[0.0, 0.0]).unwrap());
        assert!(region_membership(&zero, &[3.0, 0.0]).unwrap());
        assert!(!region_membership(&zero, &[3.0, -0.01]).unwrap());
        assert!(region_membership(&spec, &[1.0]).is_err());
        assert!(GaussRegionSpec::new(id, 1.0).is_err());
    }

    #[test]
    fn boundary_examples() {
        let id = CovMatrix2::diagonal(1.0, 1.0).unwrap();
        let spec = GaussRegionSpec::new(id, 0.19).unwrap();
        let d = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let p = region_boundary(&spec, &[d]).unwrap()[0];
        let exact = std_q_inv(0.1).unwrap();
        assert!((p[0] - exact).abs() < 1e-6 && (p[1] - exact).abs() < 1e-6);
        assert!((p[0] - 1.2816).abs() < 1e-4);

        let cov = CovMatrix2::new([[0.5, 0.3], [0.3, 1.2]]).unwrap();
        let spec = GaussRegionSpec::new(cov, 0.05).unwrap();
        let looser = GaussRegionSpec::new(cov, 0.2).unwrap();
        let dirs = quadrant_directions(32);
        for (p, d) in region_boundary(&spec, &dirs).unwrap().iter().zip(&dirs) {
            assert!(region_membership(&spec, p).unwrap());
            let back = [p[0] - 1e-3 * d[0], p[1] - 1e-3 * d[1]];
            assert!(!region_membership(&spec, &back).unwrap());
            // interior of the looser region
            let inner = [p[0] - 1e-3, p[1] - 1e-3];
            assert!(region_membership(&looser, &inner).unwrap());
        }
        assert!(region_boundary(&spec, &[[1.0, 0.0]]).is_err());
    }

    #[test]
    fn berry_esseen_examples() {
        let m = MomentTriple::of_discrete(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!((m.variance, m.third_abs_central), (1.0, 1.0));
        let r = berry_esseen_radius(&m, 100).unwrap();
        assert!((r - 0.056).abs() < 1e-15);
        assert_eq!(r / berry_esseen_radius(&m, 400).unwrap(), 2.0);
        let flat = MomentTriple::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(berry_esseen_radius(&flat, 10), Err(Error::ZeroVariance));
        assert!(MomentTriple::new(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn berry_esseen_dominates_simulated_sums() {
        use rand::Rng;
        // sums of n fair +-1 steps; exact CDF is binomial, checked by simulation
        let n = 50u64;
        let m = MomentTriple::of_discrete(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let radius = berry_esseen_radius(&m, n).unwrap();
        let draws = 1_000_000usize;
        let mut rng = crate::rng::substream(3, 9, 0);
        let mut hist = vec![0u64; n as usize + 1];
        for _ in 0..draws {
            let ones = (0..n).filter(|_| rng.random::<bool>()).count();
            hist[ones] += 1;
        }
        let mut cum = 0u64;
        let mut worst: f64 = 0.0;
        for (k, h) in hist.iter().enumerate() {
            let s = (2.0 * k as f64 - n as f64) / (n as f64).sqrt();
            // compare on both sides of each jump
            worst = worst.max((cum as f64 / draws as f64 - std_cdf(s)).abs());
            cum += h;
            worst = worst.max((cum as f64 / draws as f64 - std_cdf(s)).abs());
        }
        assert!(worst <= radius, "sup gap {worst} vs radius {radius}");
    }

    proptest! {
        #[test]
        fn q_inv_roundtrip(x in -6.0f64..6.0) {
            prop_assert!((std_q_inv(std_q(x)).unwrap() - x).abs() < 1e-8);
        }

        #[test]
        fn q_inv_monotone(a in 1e-6f64..0.999, b in 1e-6f64..0.999) {
            prop_assume!(a < b);
            prop_assert!(std_q_inv(a).unwrap() > std_q_inv(b).unwrap());
        }

        #[test]
        fn diagonal_is_product(
            v0 in 0.01f64..4.0, v1 in 0.01f64..4.0, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0
        ) {
            let cov = vec![vec![v0, 0.0], vec![0.0, v1]];
            let got = mvn_lower_orthant(&[0.0, 0.0], &cov, &[x0, x1]).unwrap().value;
            let want = std_cdf(x0 / v0.sqrt()) * std_cdf(x1 / v1.sqrt());
            prop_assert!((got - want).abs() < 1e-6);
        }

        #[test]
        fn membership_monotone(
            a in 0.1f64..2.0, c in 0.1f64..2.0, rho in -0.95f64..0.95,
            eps in 0.01f64..0.5, x0 in -4.0f64..4.0, x1 in -4.0f64..4.0, bump in 0.0f64..2.0
        ) {
            let off = rho * (a * c).sqrt();
            let spec = GaussRegionSpec::new(CovMatrix2::new([[a, off], [off, c]]).unwrap(), eps).unwrap();
            if region_membership(&spec, &[x0, x1]).unwrap() {
                prop_assert!(region_membership(&spec, &[x0 + bump, x1]).unwrap());
                prop_assert!(region_membership(&spec, &[x0, x1 + bump]).unwrap());
            }
        }

        #[test]
        fn regions_nest(
            a in 0.1f64..2.0, c in 0.1f64..2.0, rho in -0.95f64..0.95,
            e1 in 0.01f64..0.5, de in 0.0f64..0.4
        ) {
            let off = rho * (a * c).sqrt();
            let cov = CovMatrix2::new([[a, off], [off, c]]).unwrap();
            let tight = GaussRegionSpec::new(cov, e1).unwrap();
            let loose = GaussRegionSpec::new(cov, e1 + de).unwrap();
            for p in region_boundary(&tight, &quadrant_directions(8)).unwrap() {
                prop_assert!(region_membership(&loose, &p).unwrap());
            }
        }
    }
}
