//! Multivariate normal and Student-t rectangle probabilities.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::numeric;
use crate::special::{inc_gamma_p_inv, normal_cdf, normal_quantile, student_t_cdf};

const TWO_PI: f64 = core::f64::consts::TAU;

const GL6_X: [f64; 3] = [
    -0.932_469_514_203_152,
    -0.661_209_386_466_264_5,
    -0.238_619_186_083_196_93,
];
const GL6_W: [f64; 3] = [
    0.171_324_492_379_169_75,
    0.360_761_573_048_138_94,
    0.467_913_934_572_691_37,
];
const GL12_X: [f64; 6] = [
    -0.981_560_634_246_719_2,
    -0.904_117_256_370_474_8,
    -0.769_902_674_194_304_7,
    -0.587_317_954_286_617_5,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_468_9,
];
const GL12_W: [f64; 6] = [
    0.047_175_336_386_512_02,
    0.106_939_325_995_318_88,
    0.160_078_328_543_346_1,
    0.203_167_426_723_065_65,
    0.233_492_536_538_354_64,
    0.249_147_045_813_402_7,
];
const GL20_X: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_325_8,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_55,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_34,
];
const GL20_W: [f64; 10] = [
    0.017_614_007_139_153_273,
    0.040_601_429_800_386_22,
    0.062_672_048_334_109_44,
    0.083_276_741_576_704_67,
    0.101_930_119_817_240_26,
    0.118_194_531_961_518_25,
    0.131_688_638_449_176_53,
    0.142_096_109_318_381_87,
    0.149_172_986_472_603_66,
    0.152_753_387_130_725_78,
];

/// Upper bivariate normal probability P(X > h, Y > k) with correlation `r` (Genz's method).
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let (x, w): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_X, &GL6_W)
    } else if r.abs() < 0.75 {
        (&GL12_X, &GL12_W)
    } else {
        (&GL20_X, &GL20_W)
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for i in 0..x.len() {
            for sgn in [-1.0, 1.0] {
                let sn = (asr * (1.0 + sgn * x[i]) / 2.0).sin();
                bvn += w[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * TWO_PI) + normal_cdf(-h) * normal_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / as_ + hk) / 2.0).exp()
            * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * TWO_PI.sqrt()
                * normal_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for i in 0..x.len() {
            for sgn in [-1.0, 1.0] {
                let xs = (a * (sgn * x[i] + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w[i]
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn += normal_cdf(-h.max(k));
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += normal_cdf(k) - normal_cdf(h);
            } else {
                bvn += normal_cdf(-h) - normal_cdf(-k);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Bivariate normal CDF P(X ≤ h, Y ≤ k).
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return normal_cdf(k);
    }
    if k == f64::INFINITY {
        return normal_cdf(h);
    }
    bvn_upper(-h, -k, r)
}

/// Trivariate normal CDF with correlations `r12, r13, r23`.
///
/// Plackett's reduction: the two correlations touching one coordinate are scaled
/// from zero to their values and the derivative is integrated along the way.
pub fn tvn_cdf(b: [f64; 3], r12: f64, r13: f64, r23: f64) -> f64 {
    if b.iter().any(|&v| v == f64::NEG_INFINITY) {
        return 0.0;
    }
    if b[0] == f64::INFINITY {
        return bvn_cdf(b[1], b[2], r23);
    }
    if b[1] == f64::INFINITY {
        return bvn_cdf(b[0], b[2], r13);
    }
    if b[2] == f64::INFINITY {
        return bvn_cdf(b[0], b[1], r12);
    }
    // keep the largest correlation fixed so the scaled pair stays away from ±1
    let (h, p, q, r) = if r12.abs() >= r13.abs() && r12.abs() >= r23.abs() {
        ([b[2], b[0], b[1]], r13, r23, r12)
    } else if r13.abs() >= r23.abs() {
        ([b[1], b[0], b[2]], r12, r23, r13)
    } else {
        (b, r12, r13, r23)
    };
    let base = normal_cdf(h[0]) * bvn_cdf(h[1], h[2], r);
    if p == 0.0 && q == 0.0 {
        return base;
    }
    let f = |t: f64| {
        let (a, c) = (t * p, t * q);
        plackett_term(h[0], h[1], h[2], a, c, r) * p + plackett_term(h[0], h[2], h[1], c, a, r) * q
    };
    let extra = numeric::integrate(f, 0.0, 1.0, 1e-14, 200).unwrap_or(f64::NAN);
    (base + extra).clamp(0.0, 1.0)
}

// d/dr_ij of the trivariate normal CDF: the (i, j) density times the conditional
// probability of the third coordinate. `rij` joins i and j, `rik` and `rjk` join k.
fn plackett_term(hi: f64, hj: f64, hk: f64, rij: f64, rik: f64, rjk: f64) -> f64 {
    let one = 1.0 - rij * rij;
    if one <= 0.0 {
        return 0.0;
    }
    let dens =
        (-(hi * hi - 2.0 * rij * hi * hj + hj * hj) / (2.0 * one)).exp() / (TWO_PI * one.sqrt());
    if dens == 0.0 {
        return 0.0;
    }
    let bi = (rik - rij * rjk) / one;
    let bj = (rjk - rij * rik) / one;
    let var = 1.0 - rik * bi - rjk * bj;
    let mean = bi * hi + bj * hj;
    let cond = if var <= 1e-300 {
        if hk >= mean {
            1.0
        } else {
            0.0
        }
    } else {
        normal_cdf((hk - mean) / var.sqrt())
    };
    dens * cond
}

// Integrates g(scale) against the chi mixing law, scale = sqrt(W/nu) with W ~ chi^2_nu.
// Trapezoid rule in ln(scale), where the integrand decays exponentially at both ends.
fn t_mixture<G: FnMut(f64) -> f64>(nu: f64, mut g: G) -> f64 {
    // log density of ln(scale), shifted so its maximum (at 0) is 0
    let dens = |t: f64| nu * t - nu * ((2.0 * t).exp() - 1.0) / 2.0;
    const CUT: f64 = -40.0;
    let solve = |mut lo: f64, mut hi: f64| {
        // dens(lo) and dens(hi) straddle CUT
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (dens(mid) > CUT) == (dens(lo) > CUT) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let left = {
        let mut x = -1.0;
        while dens(x) > CUT {
            x *= 2.0;
        }
        solve(x, 0.0)
    };
    let right = {
        let mut x = 1.0;
        while dens(x) > CUT {
            x *= 2.0;
        }
        solve(0.0, x)
    };
    let width = (0.2f64).min(0.5 / (2.0 * nu).sqrt());
    let n = (((right - left) / width).ceil() as usize).max(16);
    let step = (right - left) / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let t = left + i as f64 * step;
        let w = dens(t).exp();
        num += w * g(t.exp());
        den += w;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Bivariate Student-t CDF with correlation `r` and `nu` degrees of freedom.
pub fn bvt_cdf(a: f64, b: f64, r: f64, nu: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a == f64::INFINITY {
        return student_t_cdf(b, nu);
    }
    if b == f64::INFINITY {
        return student_t_cdf(a, nu);
    }
    t_mixture(nu, |s| bvn_cdf(a * s, b * s, r))
}

/// Trivariate Student-t CDF.
pub fn tvt_cdf(b: [f64; 3], r12: f64, r13: f64, r23: f64, nu: f64) -> f64 {
    if b.iter().any(|&v| v == f64::NEG_INFINITY) {
        return 0.0;
    }
    t_mixture(nu, |s| {
        tvn_cdf([b[0] * s, b[1] * s, b[2] * s], r12, r13, r23)
    })
}

/// Settings for the randomized quasi-Monte Carlo rectangle probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcOptions {
    /// Total number of integrand evaluations.
    pub points: usize,
    /// Number of independent random shifts used for the error estimate.
    pub shifts: usize,
    pub seed: u64,
}

impl Default for QmcOptions {
    fn default() -> Self {
        QmcOptions {
            points: 100_000,
            shifts: 10,
            seed: 0x5eed_0f_c0_9a1a,
        }
    }
}

const PRIMES: [f64; 40] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
    59.0, 61.0, 67.0, 71.0, 73.0, 79.0, 83.0, 89.0, 97.0, 101.0, 103.0, 107.0, 109.0, 113.0, 127.0,
    131.0, 137.0, 139.0, 149.0, 151.0, 157.0, 163.0, 167.0, 173.0,
];

// splitmix64, used only to draw the lattice shifts
fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Genz separation-of-variables estimate of P(X ≤ b) for X ~ N(0, LLᵀ) (or the
/// multivariate t with `nu` degrees of freedom), using a shifted Richtmyer lattice.
///
/// `chol` is the lower Cholesky factor in row-major order. Returns the estimate and
/// its standard error.
pub fn sov_cdf(b: &[f64], chol: &[f64], nu: Option<f64>, opts: &QmcOptions) -> (f64, f64) {
    let d = b.len();
    if b.iter().any(|&v| v == f64::NEG_INFINITY) {
        return (0.0, 0.0);
    }
    let extra = usize::from(nu.is_some());
    let dims = d - 1 + extra;
    let mut alpha: Vec<f64> = Vec::with_capacity(dims);
    for j in 0..dims {
        let p = PRIMES[j % PRIMES.len()] + 2.0 * (j / PRIMES.len()) as f64 * 173.0;
        alpha.push(p.sqrt().fract());
    }
    let shifts = opts.shifts.max(2);
    let per = (opts.points / shifts).max(1);
    let mut state = opts.seed;
    let mut means = vec![0.0; shifts];
    let mut shift = vec![0.0; dims];
    let mut w = vec![0.0; dims];
    let mut y = vec![0.0; d];
    for m in means.iter_mut() {
        for s in shift.iter_mut() {
            *s = splitmix(&mut state);
        }
        let mut acc = 0.0;
        for i in 1..=per {
            for j in 0..dims {
                // baker's transform of the shifted lattice point
                let v = (i as f64 * alpha[j] + shift[j]).fract();
                w[j] = 1.0 - (2.0 * v - 1.0).abs();
            }
            let scale = match nu {
                Some(nu) => {
                    let q = w[dims - 1].clamp(1e-300, 1.0 - 1e-16);
                    (2.0 * inc_gamma_p_inv(nu / 2.0, q) / nu).sqrt()
                }
                None => 1.0,
            };
            let mut f = 1.0;
            for k in 0..d {
                let mut s = 0.0;
                for l in 0..k {
                    s += chol[k * d + l] * y[l];
                }
                let e = normal_cdf((b[k] * scale - s) / chol[k * d + k]);
                f *= e;
                if k + 1 < d {
                    let p = (w[k] * e).clamp(1e-300, 1.0 - 1e-16);
                    y[k] = normal_quantile(p);
                }
                if f == 0.0 {
                    break;
                }
            }
            acc += f;
        }
        *m = acc / per as f64;
    }
    let mean = means.iter().sum::<f64>() / shifts as f64;
    let var =
        means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / ((shifts - 1) * shifts) as f64;
    (mean.clamp(0.0, 1.0), var.sqrt())
}
