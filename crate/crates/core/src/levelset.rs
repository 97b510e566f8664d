//! Sampling U given C(U) = z: the conditional inverse and projected methods for
//! Archimedean copulas, and rejection sampling for any copula.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::copulas::{CopulaSpec, QmcOptions};
use crate::error::{domain, Error, Result};
use crate::generators::ArchimedeanGenerator;
use crate::rng::open01;

/// Default cap on rejection attempts.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelSetMethod {
    ConditionalInverse,
    Projected,
    Rejection,
}

/// Acceptance band for rejection sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToleranceRule {
    /// |C(u) − z| < ε₀.
    Absolute(f64),
    /// |C(u) − z| < ε₀·z.
    Relative(f64),
}

impl Default for ToleranceRule {
    fn default() -> Self {
        ToleranceRule::Relative(0.01)
    }
}

impl ToleranceRule {
    /// Half-width of the acceptance band at level `z`.
    pub fn band(&self, z: f64) -> f64 {
        match *self {
            ToleranceRule::Absolute(e) => e,
            ToleranceRule::Relative(e) => e * z,
        }
    }

    pub fn accepts(&self, achieved: f64, z: f64) -> bool {
        (achieved - z).abs() < self.band(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSample {
    pub u: Vec<f64>,
    pub z_target: f64,
    pub z_achieved: f64,
    pub method: LevelSetMethod,
    /// Candidates drawn; one for the exact methods.
    pub attempts: u64,
}

fn check_level(z: f64) -> Result<()> {
    if !(z > 0.0 && z < 1.0) {
        return Err(domain("z", z, "(0, 1)"));
    }
    Ok(())
}

/// Conditional CDF of U_j given U_1..U_{j−1} = `prefix` on the level set C(U) = z.
pub fn conditional_levelset_cdf(
    g: &ArchimedeanGenerator,
    d: usize,
    prefix: &[f64],
    z: f64,
    u: f64,
) -> Result<f64> {
    check_level(z)?;
    let j = prefix.len() + 1;
    if j >= d {
        return Err(Error::DimensionMismatch {
            expected: d - 1,
            got: j,
        });
    }
    let rem = g.phi(z) - prefix.iter().map(|&x| g.phi(x)).sum::<f64>();
    if !(rem > 0.0) {
        return Err(Error::NoSolution {
            z,
            bound: g.phi_inv(rem.max(0.0)),
        });
    }
    if u >= 1.0 {
        return Ok(1.0);
    }
    let lower = g.phi_inv(rem);
    if !(u > lower) {
        return Err(domain("u", u, "(C⁻¹(z), 1]"));
    }
    let ratio = (g.phi(u) / rem).min(1.0);
    Ok((1.0 - ratio).powi((d - j) as i32))
}

/// Algorithm 2 driven by explicit uniforms `v` (length d − 1).
pub fn conditional_inverse_from_uniforms(
    g: &ArchimedeanGenerator,
    d: usize,
    z: f64,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_level(z)?;
    if v.len() + 1 != d {
        return Err(Error::DimensionMismatch {
            expected: d - 1,
            got: v.len(),
        });
    }
    let mut u = vec![0.0; d];
    let mut rem = g.phi(z);
    for j in 1..d {
        // 1 − v^{1/(d−j)} without cancellation for v near one
        let frac = -(v[j - 1].ln() / (d - j) as f64).exp_m1();
        let s = frac * rem;
        u[j - 1] = g.phi_inv(s);
        rem -= s;
    }
    u[d - 1] = g.phi_inv(rem.max(0.0));
    Ok(u)
}

/// Algorithm 3 driven by an explicit point `s` of the unit simplex.
pub fn projected_from_simplex(g: &ArchimedeanGenerator, z: f64, s: &[f64]) -> Result<Vec<f64>> {
    check_level(z)?;
    let r = g.phi(z);
    Ok(s.iter().map(|&w| g.phi_inv(w * r)).collect())
}

fn achieved(g: &ArchimedeanGenerator, u: &[f64]) -> f64 {
    g.phi_inv(u.iter().map(|&x| g.phi(x)).sum())
}

/// Algorithm 2: sequential conditional inversion, consuming d − 1 uniforms.
pub fn sample_levelset_conditional<R: Rng + ?Sized>(
    g: &ArchimedeanGenerator,
    d: usize,
    z: f64,
    rng: &mut R,
) -> Result<LevelSetSample> {
    let v: Vec<f64> = (1..d).map(|_| open01(rng)).collect();
    let u = conditional_inverse_from_uniforms(g, d, z, &v)?;
    Ok(LevelSetSample {
        z_achieved: achieved(g, &u),
        u,
        z_target: z,
        method: LevelSetMethod::ConditionalInverse,
        attempts: 1,
    })
}

/// Uniform point on the unit simplex from normalized standard exponentials.
pub fn simplex_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut e: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    for x in e.iter_mut() {
        *x /= total;
    }
    e
}

/// Algorithm 3: projection of a uniform simplex point onto the level set.
pub fn sample_levelset_projected<R: Rng + ?Sized>(
    g: &ArchimedeanGenerator,
    d: usize,
    z: f64,
    rng: &mut R,
) -> Result<LevelSetSample> {
    let s = simplex_point(d, rng);
    let u = projected_from_simplex(g, z, &s)?;
    Ok(LevelSetSample {
        z_achieved: achieved(g, &u),
        u,
        z_target: z,
        method: LevelSetMethod::Projected,
        attempts: 1,
    })
}

/// Algorithm 4: draw from C until |C(u) − z| falls inside the band of `rule`.
pub fn sample_levelset_rejection<R: Rng + ?Sized>(
    c: &CopulaSpec,
    z: f64,
    rule: ToleranceRule,
    max_attempts: u64,
    rng: &mut R,
) -> Result<LevelSetSample> {
    sample_levelset_rejection_with(c, z, rule, max_attempts, &QmcOptions::default(), rng)
}

/// As [`sample_levelset_rejection`] with an explicit QMC budget for elliptical CDFs.
pub fn sample_levelset_rejection_with<R: Rng + ?Sized>(
    c: &CopulaSpec,
    z: f64,
    rule: ToleranceRule,
    max_attempts: u64,
    qmc: &QmcOptions,
    rng: &mut R,
) -> Result<LevelSetSample> {
    check_level(z)?;
    let mut u = vec![0.0; c.dim()];
    for attempt in 1..=max_attempts {
        c.sample_into(rng, &mut u)?;
        let cz = c.cdf_with_error(&u, qmc)?.0;
        if rule.accepts(cz, z) {
            return Ok(LevelSetSample {
                u,
                z_target: z,
                z_achieved: cz,
                method: LevelSetMethod::Rejection,
                attempts: attempt,
            });
        }
    }
    Err(Error::AttemptsExhausted {
        attempts: max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kendall::KendallFunction;
    use crate::rng::stream;
    use crate::stats::{kendall_tau, ks_two_sample};
    use proptest::prelude::*;

    const U0: f64 = 0.277_350_098_112_614_6;

    fn clayton() -> ArchimedeanGenerator {
        ArchimedeanGenerator::clayton(2.0).unwrap()
    }

    #[test]
    fn conditional_cdf_examples() {
        let g = clayton();
        assert!((conditional_levelset_cdf(&g, 2, &[], 0.2, U0).unwrap() - 0.5).abs() < 1e-12);
        assert!((conditional_levelset_cdf(&g, 3, &[], 0.2, U0).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(
            conditional_levelset_cdf(&g, 3, &[0.5], 0.2, 1.0).unwrap(),
            1.0
        );
        assert!(conditional_levelset_cdf(&g, 2, &[], 0.2, 0.2).is_err());
    }

    #[test]
    fn algorithm_traces() {
        let g = clayton();
        let u = conditional_inverse_from_uniforms(&g, 2, 0.2, &[0.5]).unwrap();
        assert!((u[0] - U0).abs() < 1e-12 && (u[1] - U0).abs() < 1e-12);
        let p = projected_from_simplex(&g, 0.2, &[0.5, 0.5]).unwrap();
        assert!((p[0] - U0).abs() < 1e-12 && (p[1] - U0).abs() < 1e-12);
        let ind = ArchimedeanGenerator::independence();
        let u = conditional_inverse_from_uniforms(&ind, 2, 0.25, &[0.5]).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-12 && (u[1] - 0.5).abs() < 1e-12);
        let edge = conditional_inverse_from_uniforms(&g, 2, 0.2, &[1.0 - 1e-15]).unwrap();
        assert!((edge[0] - 1.0).abs() < 1e-9 && (edge[1] - 0.2).abs() < 1e-9);
        let corner = projected_from_simplex(&g, 0.3, &[1.0, 0.0, 0.0]).unwrap();
        assert!((corner[0] - 0.3).abs() < 1e-14);
        assert_eq!(&corner[1..], &[1.0, 1.0]);
    }

    #[test]
    fn rejection_band() {
        let rule = ToleranceRule::Absolute(0.01);
        assert!(rule.accepts(0.195, 0.2));
        assert!(!rule.accepts(0.25, 0.2));
        let c = crate::copulas::CopulaSpec::archimedean(clayton(), 3).unwrap();
        let rel = ToleranceRule::Relative(0.01);
        let mut rng = stream(1, 2, 3);
        for _ in 0..200 {
            let s =
                sample_levelset_rejection(&c, 0.2, rel, DEFAULT_MAX_ATTEMPTS, &mut rng).unwrap();
            assert!((s.z_achieved - 0.2).abs() / 0.2 <= 0.01);
        }
        let tiny = ToleranceRule::Absolute(1e-300);
        assert!(matches!(
            sample_levelset_rejection(&c, 0.2, tiny, 50, &mut rng),
            Err(Error::AttemptsExhausted { attempts: 50 })
        ));
    }

    #[test]
    fn methods_agree_in_distribution() {
        let g = ArchimedeanGenerator::gumbel(2.0).unwrap();
        let mut rng = stream(9, 0, 0);
        let n = 10_000;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|_| sample_levelset_conditional(&g, 3, 0.3, &mut rng).unwrap().u)
            .collect();
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| sample_levelset_projected(&g, 3, 0.3, &mut rng).unwrap().u)
            .collect();
        for j in 0..3 {
            let ca: Vec<f64> = a.iter().map(|r| r[j]).collect();
            let cb: Vec<f64> = b.iter().map(|r| r[j]).collect();
            assert!(ks_two_sample(&ca, &cb).p_value > 0.001);
        }
    }

    #[test]
    fn composition_recovers_copula() {
        let g = clayton();
        let k = KendallFunction::closed_form(g, 2).unwrap();
        let mut rng = stream(4, 4, 4);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..10_000 {
            let z = k.inverse(crate::rng::open01(&mut rng)).unwrap();
            let s = sample_levelset_conditional(&g, 2, z, &mut rng).unwrap();
            x.push(s.u[0]);
            y.push(s.u[1]);
        }
        assert!((kendall_tau(&x, &y) - 0.5).abs() < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn exact_methods_hit_level(f in 0usize..3, t in 0.1f64..10.0, d in 2usize..6,
                                   z in 0.001f64..0.999, seed in any::<u64>()) {
            let g = match f {
                0 => ArchimedeanGenerator::clayton(t).unwrap(),
                1 => ArchimedeanGenerator::gumbel(1.0 + t).unwrap(),
                _ => ArchimedeanGenerator::frank(t * 3.0).unwrap(),
            };
            let c = crate::copulas::CopulaSpec::archimedean(g, d).unwrap();
            let mut rng = stream(seed, 0, 0);
            let a = sample_levelset_conditional(&g, d, z, &mut rng).unwrap();
            let b = sample_levelset_projected(&g, d, z, &mut rng).unwrap();
            prop_assert!((c.cdf(&a.u).unwrap() - z).abs() < 1e-9);
            prop_assert!((c.cdf(&b.u).unwrap() - z).abs() < 1e-9);
        }
    }
}
