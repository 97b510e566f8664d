//! Concrete copulas: independence, Archimedean, Gaussian and Student-t.

pub mod elliptical;
pub mod mvn;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{domain, Error, Result};
use crate::generators::{ArchimedeanGenerator, Family, MAX_ORDER};
use crate::kendall::KendallFunction;
use crate::levelset;
use crate::matrix::DataMatrix;
use crate::numeric;
use crate::rng::open01;
use crate::special::{
    ln_gamma, normal_cdf, normal_quantile, student_t_cdf, student_t_ln_pdf, student_t_quantile,
};

pub use elliptical::CorrelationMatrix;
pub use mvn::QmcOptions;

/// Interior clamp applied to density and elliptical CDF arguments.
pub const CLAMP: f64 = 1e-12;

/// Largest f64 strictly below one.
pub(crate) const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

pub(crate) fn clamp_unit(u: f64) -> f64 {
    u.clamp(CLAMP, 1.0 - CLAMP)
}

/// A copula of fixed dimension with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum CopulaSpec {
    /// The product copula; dimension one is the identity.
    Independence(usize),
    Archimedean(ArchimedeanGenerator, usize),
    Gaussian(CorrelationMatrix),
    StudentT(CorrelationMatrix, f64),
}

/// The tag of a copula family, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CopulaFamily {
    Independence,
    Clayton,
    Gumbel,
    Frank,
    Gaussian,
    StudentT,
}

impl CopulaFamily {
    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Independence => "independence",
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Frank => "frank",
            CopulaFamily::Gaussian => "gaussian",
            CopulaFamily::StudentT => "student_t",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "independence" => CopulaFamily::Independence,
            "clayton" => CopulaFamily::Clayton,
            "gumbel" => CopulaFamily::Gumbel,
            "frank" => CopulaFamily::Frank,
            "gaussian" | "normal" => CopulaFamily::Gaussian,
            "student_t" | "t" => CopulaFamily::StudentT,
            _ => return Err(Error::Parameter(format!("unknown copula family `{s}`"))),
        })
    }

    pub fn archimedean(self) -> Option<Family> {
        match self {
            CopulaFamily::Clayton => Some(Family::Clayton),
            CopulaFamily::Gumbel => Some(Family::Gumbel),
            CopulaFamily::Frank => Some(Family::Frank),
            _ => None,
        }
    }

    pub fn is_elliptical(self) -> bool {
        matches!(self, CopulaFamily::Gaussian | CopulaFamily::StudentT)
    }
}

impl CopulaSpec {
    pub fn independence(d: usize) -> Self {
        CopulaSpec::Independence(d)
    }

    /// Archimedean copula of dimension `d`; rejects generators that are not d-monotone.
    pub fn archimedean(g: ArchimedeanGenerator, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter(
                "copula dimension must be at least 1".into(),
            ));
        }
        if d > MAX_ORDER {
            return Err(Error::UnsupportedOrder {
                order: d,
                max: MAX_ORDER,
            });
        }
        g.check_dimension(d)?;
        Ok(CopulaSpec::Archimedean(g, d))
    }

    pub fn gaussian(corr: CorrelationMatrix) -> Self {
        CopulaSpec::Gaussian(corr)
    }

    pub fn student_t(corr: CorrelationMatrix, nu: f64) -> Result<Self> {
        if !(nu > 2.0 && nu.is_finite()) {
            return Err(Error::Parameter(format!(
                "degrees of freedom nu = {nu} must exceed 2"
            )));
        }
        Ok(CopulaSpec::StudentT(corr, nu))
    }

    pub fn dim(&self) -> usize {
        match self {
            CopulaSpec::Independence(d) | CopulaSpec::Archimedean(_, d) => *d,
            CopulaSpec::Gaussian(r) | CopulaSpec::StudentT(r, _) => r.dim(),
        }
    }

    pub fn family(&self) -> CopulaFamily {
        match self {
            CopulaSpec::Independence(_) => CopulaFamily::Independence,
            CopulaSpec::Archimedean(g, _) => match g.family() {
                Family::Independence => CopulaFamily::Independence,
                Family::Clayton => CopulaFamily::Clayton,
                Family::Gumbel => CopulaFamily::Gumbel,
                Family::Frank => CopulaFamily::Frank,
            },
            CopulaSpec::Gaussian(_) => CopulaFamily::Gaussian,
            CopulaSpec::StudentT(..) => CopulaFamily::StudentT,
        }
    }

    /// The generator for Archimedean kinds; independence is the generator −ln t.
    pub fn generator(&self) -> Option<ArchimedeanGenerator> {
        match self {
            CopulaSpec::Archimedean(g, _) => Some(*g),
            CopulaSpec::Independence(_) => Some(ArchimedeanGenerator::independence()),
            _ => None,
        }
    }

    /// Whether closed-form Kendall functions and exact level-set sampling are available.
    pub fn has_generator(&self) -> bool {
        self.generator().is_some()
    }

    /// Number of free parameters (correlations count individually).
    pub fn n_params(&self) -> usize {
        match self {
            CopulaSpec::Independence(_) => 0,
            CopulaSpec::Archimedean(g, _) => usize::from(g.family() != Family::Independence),
            CopulaSpec::Gaussian(r) => r.dim() * (r.dim() - 1) / 2,
            CopulaSpec::StudentT(r, _) => r.dim() * (r.dim() - 1) / 2 + 1,
        }
    }

    /// Short human description, e.g. `clayton(theta=2)`.
    pub fn describe(&self) -> String {
        match self {
            CopulaSpec::Independence(d) => format!("independence(d={d})"),
            CopulaSpec::Archimedean(g, d) => format!("{}(theta={}, d={d})", g.family(), g.theta()),
            CopulaSpec::Gaussian(r) => format!("gaussian(d={})", r.dim()),
            CopulaSpec::StudentT(r, nu) => format!("student_t(d={}, nu={nu})", r.dim()),
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// C(u). Elliptical copulas above dimension three use the default QMC budget.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.cdf_with_error(u, &QmcOptions::default())
            .map(|(v, _)| v)
    }

    /// C(u) together with a standard error (zero for deterministic evaluations).
    pub fn cdf_with_error(&self, u: &[f64], qmc: &QmcOptions) -> Result<(f64, f64)> {
        self.check_len(u)?;
        for &x in u {
            if !(0.0..=1.0).contains(&x) {
                return Err(domain("u", x, "[0, 1]"));
            }
        }
        if u.iter().any(|&x| x == 0.0) {
            return Ok((0.0, 0.0));
        }
        match self {
            CopulaSpec::Independence(_) => Ok((u.iter().product(), 0.0)),
            CopulaSpec::Archimedean(g, _) => {
                let s: f64 = u.iter().map(|&x| g.phi(x)).sum();
                Ok((g.phi_inv(s), 0.0))
            }
            CopulaSpec::Gaussian(r) | CopulaSpec::StudentT(r, _) => {
                let nu = match self {
                    CopulaSpec::StudentT(_, nu) => Some(*nu),
                    _ => None,
                };
                let idx: Vec<usize> = (0..u.len()).filter(|&i| u[i] < 1.0).collect();
                let x: Vec<f64> = idx
                    .iter()
                    .map(|&i| {
                        let p = clamp_unit(u[i]);
                        match nu {
                            Some(nu) => student_t_quantile(p, nu),
                            None => normal_quantile(p),
                        }
                    })
                    .collect();
                let v = match idx.len() {
                    0 => (1.0, 0.0),
                    1 => (u[idx[0]], 0.0),
                    2 => {
                        let rho = r.get(idx[0], idx[1]);
                        let p = match nu {
                            Some(nu) => mvn::bvt_cdf(x[0], x[1], rho, nu),
                            None => mvn::bvn_cdf(x[0], x[1], rho),
                        };
                        (p, 0.0)
                    }
                    3 => {
                        let (a, b, c) = (idx[0], idx[1], idx[2]);
                        let b3 = [x[0], x[1], x[2]];
                        let p = match nu {
                            Some(nu) => mvn::tvt_cdf(b3, r.get(a, b), r.get(a, c), r.get(b, c), nu),
                            None => mvn::tvn_cdf(b3, r.get(a, b), r.get(a, c), r.get(b, c)),
                        };
                        (p, 0.0)
                    }
                    _ => {
                        let sub = if idx.len() == r.dim() {
                            r.clone()
                        } else {
                            r.submatrix(&idx)?
                        };
                        mvn::sov_cdf(&x, sub.cholesky(), nu, qmc)
                    }
                };
                Ok(v)
            }
        }
    }

    /// ln c(u), with inputs clamped to the interior.
    pub fn log_pdf(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        let v = match self {
            CopulaSpec::Independence(_) => 0.0,
            CopulaSpec::Archimedean(g, d) => {
                if *d == 1 || g.family() == Family::Independence {
                    return Ok(0.0);
                }
                let mut s = 0.0;
                let mut lp = 0.0;
                for &x in u {
                    let x = clamp_unit(x);
                    s += g.phi(x);
                    lp += g.ln_neg_phi_prime(x);
                }
                let (sign, la) = g.inverse_derivative_ln(s, *d)?;
                // (φ⁻¹)^(d) and Πφ′ both carry the sign (−1)^d
                let expected = if d % 2 == 0 { 1.0 } else { -1.0 };
                if sign != expected && la.is_finite() {
                    return Err(Error::NonFinite("archimedean density"));
                }
                la + lp
            }
            CopulaSpec::Gaussian(r) => {
                let x: Vec<f64> = u.iter().map(|&p| normal_quantile(clamp_unit(p))).collect();
                let q = r.mahalanobis(&x);
                let ss: f64 = x.iter().map(|v| v * v).sum();
                -0.5 * r.log_det() - 0.5 * (q - ss)
            }
            CopulaSpec::StudentT(r, nu) => {
                let d = r.dim() as f64;
                let x: Vec<f64> = u
                    .iter()
                    .map(|&p| student_t_quantile(clamp_unit(p), *nu))
                    .collect();
                let q = r.mahalanobis(&x);
                let joint = ln_gamma((nu + d) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - 0.5 * d * (nu * core::f64::consts::PI).ln()
                    - 0.5 * r.log_det()
                    - 0.5 * (nu + d) * (q / nu).ln_1p();
                let margins: f64 = x.iter().map(|&v| student_t_ln_pdf(v, *nu)).sum();
                joint - margins
            }
        };
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFinite("copula density"));
        }
        Ok(v)
    }

    pub fn pdf(&self, u: &[f64]) -> Result<f64> {
        self.log_pdf(u).map(|v| v.exp())
    }

    /// Draws one observation into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match self {
            CopulaSpec::Independence(_) => {
                for o in out.iter_mut() {
                    *o = open01(rng);
                }
            }
            CopulaSpec::Archimedean(g, d) => {
                let k = KendallFunction::closed_form(*g, *d)?;
                self.sample_archimedean_into(g, &k, rng, out)?;
            }
            CopulaSpec::Gaussian(r) | CopulaSpec::StudentT(r, _) => {
                let d = r.dim();
                let l = r.cholesky();
                let mut z = vec![0.0; d];
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(rng);
                }
                let scale = match self {
                    CopulaSpec::StudentT(_, nu) => {
                        let chi =
                            ChiSquared::new(*nu).map_err(|_| Error::Parameter("nu".into()))?;
                        let w: f64 = chi.sample(rng);
                        Some((*nu, (w / nu).sqrt()))
                    }
                    _ => None,
                };
                for i in 0..d {
                    let mut x = 0.0;
                    for j in 0..=i {
                        x += l[i * d + j] * z[j];
                    }
                    let p = match scale {
                        Some((nu, s)) => student_t_cdf(x / s, nu),
                        None => normal_cdf(x),
                    };
                    out[i] = p.clamp(f64::MIN_POSITIVE, ONE_MINUS);
                }
            }
        }
        Ok(())
    }

    fn sample_archimedean_into<R: Rng + ?Sized>(
        &self,
        g: &ArchimedeanGenerator,
        k: &KendallFunction,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        let d = out.len();
        if d == 1 {
            out[0] = open01(rng);
            return Ok(());
        }
        let z = k.inverse(open01(rng))?;
        let s = levelset::sample_levelset_conditional(g, d, z, rng)?;
        out.copy_from_slice(&s.u);
        Ok(())
    }

    /// `n` independent observations.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DataMatrix> {
        let d = self.dim();
        let mut m = DataMatrix::zeros(n, d);
        if let CopulaSpec::Archimedean(g, _) = self {
            let k = KendallFunction::closed_form(*g, d)?;
            for i in 0..n {
                self.sample_archimedean_into(g, &k, rng, m.row_mut(i))?;
            }
            return Ok(m);
        }
        for i in 0..n {
            self.sample_into(rng, m.row_mut(i))?;
        }
        Ok(m)
    }

    /// `n` draws from the conditional law of U given U_k = `uk`; column `k` of the result is `uk`.
    pub fn sample_given<R: Rng + ?Sized>(
        &self,
        k: usize,
        uk: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<DataMatrix> {
        let d = self.dim();
        if k >= d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: k + 1,
            });
        }
        let uk = clamp_unit(uk);
        let mut out = DataMatrix::zeros(n, d);
        match self {
            CopulaSpec::Independence(_) => {
                for i in 0..n {
                    for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                        *o = if j == k { uk } else { open01(rng) };
                    }
                }
            }
            CopulaSpec::Archimedean(g, _) => {
                let s0 = g.phi(uk);
                for i in 0..n {
                    let row = out.row_mut(i);
                    row[k] = uk;
                    let mut s = s0;
                    let mut fixed = 1;
                    for j in (0..d).filter(|&j| j != k) {
                        let w = open01(rng);
                        let (_, base) = g.inverse_derivative_ln(s, fixed)?;
                        let target = w.ln();
                        let f = |y: f64| {
                            g.inverse_derivative_ln(s + y, fixed)
                                .map(|(_, l)| l - base)
                                .unwrap_or(f64::NEG_INFINITY)
                                - target
                        };
                        let mut hi = 1.0 + s;
                        while f(hi) > 0.0 {
                            hi *= 4.0;
                            if hi > 1e300 {
                                return Err(Error::Bracketing("conditional sample"));
                            }
                        }
                        let y = numeric::brent(f, 0.0, hi, 1e-14 * (1.0 + s), 200)?;
                        row[j] = g.phi_inv(y).clamp(f64::MIN_POSITIVE, ONE_MINUS);
                        s += y;
                        fixed += 1;
                    }
                }
            }
            CopulaSpec::Gaussian(r) | CopulaSpec::StudentT(r, _) => {
                let nu = match self {
                    CopulaSpec::StudentT(_, nu) => Some(*nu),
                    _ => None,
                };
                let xk = match nu {
                    Some(nu) => student_t_quantile(uk, nu),
                    None => normal_quantile(uk),
                };
                let rest: Vec<usize> = (0..d).filter(|&j| j != k).collect();
                let m = rest.len();
                let mut cov = vec![0.0; m * m];
                for (a, &i) in rest.iter().enumerate() {
                    for (b, &j) in rest.iter().enumerate() {
                        cov[a * m + b] = r.get(i, j) - r.get(i, k) * r.get(j, k);
                    }
                }
                let l = if m > 0 {
                    let c = nalgebra::DMatrix::from_row_slice(m, m, &cov)
                        .cholesky()
                        .ok_or_else(|| {
                            Error::Parameter("conditional covariance is singular".into())
                        })?;
                    c.l()
                } else {
                    nalgebra::DMatrix::zeros(0, 0)
                };
                let chi = match nu {
                    Some(nu) => {
                        Some(ChiSquared::new(nu + 1.0).map_err(|_| Error::Parameter("nu".into()))?)
                    }
                    None => None,
                };
                let mut z = vec![0.0; m];
                for i in 0..n {
                    for zi in z.iter_mut() {
                        *zi = StandardNormal.sample(rng);
                    }
                    let scale = match (nu, &chi) {
                        (Some(nu), Some(chi)) => {
                            let w: f64 = chi.sample(rng);
                            ((nu + xk * xk) / w).sqrt()
                        }
                        _ => 1.0,
                    };
                    let row = out.row_mut(i);
                    row[k] = uk;
                    for (a, &j) in rest.iter().enumerate() {
                        let mut x = r.get(j, k) * xk;
                        for b in 0..=a {
                            x += scale * l[(a, b)] * z[b];
                        }
                        let p = match nu {
                            Some(nu) => student_t_cdf(x, nu),
                            None => normal_cdf(x),
                        };
                        row[j] = p.clamp(f64::MIN_POSITIVE, ONE_MINUS);
                    }
                }
            }
        }
        Ok(out)
    }

    /// The copula quantile curve: the last coordinate `u` solving C(prefix, u, 1, …, 1) = z.
    pub fn quantile_curve(&self, prefix: &[f64], z: f64) -> Result<f64> {
        let d = self.dim();
        if prefix.len() >= d {
            return Err(Error::DimensionMismatch {
                expected: d - 1,
                got: prefix.len(),
            });
        }
        if !(z > 0.0 && z < 1.0) {
            return Err(domain("z", z, "(0, 1)"));
        }
        if prefix.is_empty() {
            return Ok(z);
        }
        if let Some(g) = self.generator() {
            let used: f64 = prefix.iter().map(|&x| g.phi(x)).sum();
            let rem = g.phi(z) - used;
            if !(rem > 0.0) {
                return Err(Error::NoSolution {
                    z,
                    bound: g.phi_inv(used),
                });
            }
            return Ok(g.phi_inv(rem));
        }
        let mut full = vec![1.0; d];
        full[..prefix.len()].copy_from_slice(prefix);
        let bound = self.cdf(&full)?;
        if z >= bound {
            return Err(Error::NoSolution { z, bound });
        }
        let j = prefix.len();
        let mut eval = |x: f64| {
            full[j] = x;
            self.cdf(&full).unwrap_or(f64::NAN) - z
        };
        let root = numeric::bisect(&mut eval, 0.0, 1.0, 1e-13, 200)?;
        let resid = eval(root).abs();
        let tol = if d > 4 { 1e-4 } else { 1e-8 };
        if !(resid <= tol) {
            return Err(Error::Tolerance {
                what: "quantile curve",
                tolerance: tol,
                residual: resid,
            });
        }
        Ok(root)
    }
}

/// Kendall's tau implied by a correlation coefficient of an elliptical copula.
pub fn elliptical_tau(rho: f64) -> f64 {
    2.0 / core::f64::consts::PI * rho.asin()
}

/// Correlation coefficient of an elliptical copula with Kendall's tau `tau`.
pub fn elliptical_rho(tau: f64) -> f64 {
    (core::f64::consts::FRAC_PI_2 * tau).sin()
}

pub fn copula_cdf(c: &CopulaSpec, u: &[f64]) -> Result<f64> {
    c.cdf(u)
}

pub fn copula_pdf(c: &CopulaSpec, u: &[f64]) -> Result<f64> {
    c.pdf(u)
}

pub fn copula_sample<R: Rng + ?Sized>(c: &CopulaSpec, n: usize, rng: &mut R) -> Result<DataMatrix> {
    c.sample(n, rng)
}

pub fn quantile_curve(c: &CopulaSpec, prefix: &[f64], z: f64) -> Result<f64> {
    c.quantile_curve(prefix, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{kendall_tau, ks_one_sample};
    use proptest::prelude::*;

    fn clayton2() -> CopulaSpec {
        CopulaSpec::archimedean(ArchimedeanGenerator::clayton(2.0).unwrap(), 2).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let c = clayton2();
        let v = c.cdf(&[0.277_350_1, 0.277_350_1]).unwrap();
        assert!((v - 0.2).abs() < 1e-7);
        assert!((CopulaSpec::independence(3).cdf(&[0.5; 3]).unwrap() - 0.125).abs() < 1e-15);
        let g = CopulaSpec::gaussian(CorrelationMatrix::equicorrelation(5, 0.4).unwrap());
        let t = CopulaSpec::student_t(CorrelationMatrix::bivariate(0.3).unwrap(), 4.0).unwrap();
        for spec in [c.clone(), g.clone(), t.clone()] {
            let ones = vec![1.0; spec.dim()];
            assert_eq!(spec.cdf(&ones).unwrap(), 1.0);
            let mut m = ones.clone();
            m[1] = 0.37;
            assert!((spec.cdf(&m).unwrap() - 0.37).abs() < 1e-12);
            m[0] = 0.0;
            assert_eq!(spec.cdf(&m).unwrap(), 0.0);
        }
        assert!(c.cdf(&[0.5]).is_err());
    }

    #[test]
    fn conditional_draws_follow_partial_derivative() {
        let specs = [
            CopulaSpec::archimedean(ArchimedeanGenerator::clayton(2.0).unwrap(), 3).unwrap(),
            CopulaSpec::archimedean(ArchimedeanGenerator::gumbel(2.5).unwrap(), 2).unwrap(),
            CopulaSpec::archimedean(ArchimedeanGenerator::frank(-4.0).unwrap(), 2).unwrap(),
            CopulaSpec::gaussian(CorrelationMatrix::equicorrelation(3, 0.6).unwrap()),
            CopulaSpec::student_t(CorrelationMatrix::bivariate(-0.4).unwrap(), 4.0).unwrap(),
        ];
        let mut rng = stream(77, 0, 0);
        for c in &specs {
            let (k, uk) = (1, 0.3);
            let draws = c.sample_given(k, uk, 4000, &mut rng).unwrap();
            assert!(draws.column(k).iter().all(|&x| x == uk));
            let h = 1e-5;
            let cond = |v: f64| {
                let mut a = vec![1.0; c.dim()];
                let mut b = vec![1.0; c.dim()];
                a[0] = v;
                b[0] = v;
                a[k] = uk + h;
                b[k] = uk - h;
                (c.cdf(&a).unwrap() - c.cdf(&b).unwrap()) / (2.0 * h)
            };
            let ks = ks_one_sample(&draws.column(0), cond);
            assert!(ks.p_value > 0.001, "{} p {}", c.describe(), ks.p_value);
        }
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(
            CopulaSpec::independence(4)
                .pdf(&[0.1, 0.5, 0.7, 0.9])
                .unwrap(),
            1.0
        );
        let g = CopulaSpec::gaussian(CorrelationMatrix::bivariate(0.0).unwrap());
        assert!((g.pdf(&[0.3, 0.7]).unwrap() - 1.0).abs() < 1e-15);
        // clayton closed form c = (1+θ)(uv)^{-θ-1}(u^{-θ}+v^{-θ}-1)^{-1/θ-2}
        let c = clayton2();
        let (u, v) = (0.5f64, 0.5f64);
        let exact = 3.0 * (u * v).powf(-3.0) * (u.powf(-2.0) + v.powf(-2.0) - 1.0).powf(-2.5);
        assert!((c.pdf(&[u, v]).unwrap() - exact).abs() < 1e-12);
        let h = 1e-4;
        let cdf = |a: f64, b: f64| c.cdf(&[a, b]).unwrap();
        let fd = (cdf(u + h, v + h) - cdf(u + h, v - h) - cdf(u - h, v + h) + cdf(u - h, v - h))
            / (4.0 * h * h);
        assert!((fd - exact).abs() < 1e-4);
    }

    fn mixed_difference(c: &CopulaSpec, u: f64, v: f64) -> f64 {
        let h = 1e-3;
        let cdf = |a: f64, b: f64| c.cdf(&[a, b]).unwrap();
        (cdf(u + h, v + h) - cdf(u + h, v - h) - cdf(u - h, v + h) + cdf(u - h, v - h))
            / (4.0 * h * h)
    }

    #[test]
    fn density_is_mixed_derivative_of_cdf() {
        let specs = [
            CopulaSpec::independence(2),
            clayton2(),
            CopulaSpec::archimedean(ArchimedeanGenerator::gumbel(1.8).unwrap(), 2).unwrap(),
            CopulaSpec::archimedean(ArchimedeanGenerator::frank(5.0).unwrap(), 2).unwrap(),
            CopulaSpec::archimedean(ArchimedeanGenerator::frank(-3.0).unwrap(), 2).unwrap(),
            CopulaSpec::gaussian(CorrelationMatrix::bivariate(0.6).unwrap()),
            CopulaSpec::student_t(CorrelationMatrix::bivariate(-0.4).unwrap(), 4.5).unwrap(),
        ];
        for c in &specs {
            for &u in &[0.2, 0.5, 0.8] {
                for &v in &[0.25, 0.6, 0.85] {
                    let fd = mixed_difference(c, u, v);
                    let pdf = c.pdf(&[u, v]).unwrap();
                    assert!(
                        (fd - pdf).abs() < 1e-3 * pdf.max(1.0),
                        "{}: ({u},{v}) {fd} vs {pdf}",
                        c.describe()
                    );
                }
            }
        }
    }

    #[test]
    fn trivariate_density_integrates_cdf() {
        // third-order mixed difference on a 3-d Gaussian
        let r =
            CorrelationMatrix::new(3, vec![1.0, 0.5, 0.3, 0.5, 1.0, 0.4, 0.3, 0.4, 1.0]).unwrap();
        let c = CopulaSpec::gaussian(r);
        let p = [0.4, 0.5, 0.6];
        let h = 2e-3;
        let mut fd = 0.0;
        for a in [-1.0, 1.0] {
            for b in [-1.0, 1.0] {
                for cc in [-1.0, 1.0] {
                    let v = c.cdf(&[p[0] + a * h, p[1] + b * h, p[2] + cc * h]).unwrap();
                    fd += a * b * cc * v;
                }
            }
        }
        fd /= 8.0 * h * h * h;
        let pdf = c.pdf(&p).unwrap();
        assert!((fd - pdf).abs() < 2e-3, "{fd} vs {pdf}");
    }

    #[test]
    fn sample_dependence() {
        let mut rng = stream(11, 0, 0);
        let ind = CopulaSpec::independence(2)
            .sample(10_000, &mut rng)
            .unwrap();
        assert!(kendall_tau(&ind.column(0), &ind.column(1)).abs() < 0.02);
        let cl = clayton2().sample(10_000, &mut rng).unwrap();
        assert!((kendall_tau(&cl.column(0), &cl.column(1)) - 0.5).abs() < 0.02);
        let t = CopulaSpec::student_t(CorrelationMatrix::bivariate(0.5).unwrap(), 4.0).unwrap();
        let ts = t.sample(10_000, &mut rng).unwrap();
        assert!((kendall_tau(&ts.column(0), &ts.column(1)) - 1.0 / 3.0).abs() < 0.02);
        for c in 0..2 {
            assert!(ks_one_sample(&ts.column(c), |u| u).p_value > 1e-3);
            assert!(ks_one_sample(&cl.column(c), |u| u).p_value > 1e-3);
        }
        let again = clayton2().sample(5, &mut stream(11, 0, 1)).unwrap();
        assert_eq!(again, clayton2().sample(5, &mut stream(11, 0, 1)).unwrap());
    }

    #[test]
    fn margin_uniformity_rate() {
        let specs = [
            CopulaSpec::archimedean(ArchimedeanGenerator::gumbel(2.5).unwrap(), 3).unwrap(),
            CopulaSpec::gaussian(CorrelationMatrix::equicorrelation(3, 0.5).unwrap()),
        ];
        for c in &specs {
            let mut pass = 0;
            for run in 0..100 {
                let s = c.sample(500, &mut stream(3, 7, run)).unwrap();
                if (0..3).all(|j| ks_one_sample(&s.column(j), |u| u).p_value > 0.01) {
                    pass += 1;
                }
            }
            // three columns per run, each rejected with probability 0.01
            assert!(pass >= 92, "{}: {pass}", c.describe());
        }
    }

    #[test]
    fn quantile_curve_examples() {
        let c = clayton2();
        assert!((c.quantile_curve(&[0.277_350_1], 0.2).unwrap() - 0.277_350_1).abs() < 1e-6);
        let g3 = CopulaSpec::archimedean(ArchimedeanGenerator::gumbel(2.0).unwrap(), 3).unwrap();
        assert_eq!(g3.quantile_curve(&[], 0.37).unwrap(), 0.37);
        let g = CopulaSpec::gaussian(CorrelationMatrix::bivariate(0.0).unwrap());
        assert!((g.quantile_curve(&[0.5], 0.25).unwrap() - 0.5).abs() < 1e-9);
        assert!(matches!(
            c.quantile_curve(&[0.3], 0.31),
            Err(Error::NoSolution { .. })
        ));
    }

    fn arch_strategy() -> impl Strategy<Value = CopulaSpec> {
        (0usize..3, 0.2f64..6.0, 2usize..6).prop_map(|(f, t, d)| {
            let g = match f {
                0 => ArchimedeanGenerator::clayton(t).unwrap(),
                1 => ArchimedeanGenerator::gumbel(1.0 + t).unwrap(),
                _ => ArchimedeanGenerator::frank(t).unwrap(),
            };
            CopulaSpec::archimedean(g, d).unwrap()
        })
    }

    proptest! {
        #[test]
        fn frechet_bounds(c in arch_strategy(), u in proptest::collection::vec(0.001f64..0.999, 5)) {
            let u = &u[..c.dim()];
            let v = c.cdf(u).unwrap();
            let lower = (u.iter().sum::<f64>() - c.dim() as f64 + 1.0).max(0.0);
            let upper = u.iter().cloned().fold(1.0, f64::min);
            prop_assert!(v >= lower - 1e-12 && v <= upper + 1e-12);
        }

        #[test]
        fn frechet_bounds_elliptical(rho in -0.9f64..0.9, nu in 2.5f64..20.0, a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let r = CorrelationMatrix::bivariate(rho).unwrap();
            for c in [CopulaSpec::gaussian(r.clone()), CopulaSpec::student_t(r.clone(), nu).unwrap()] {
                let v = c.cdf(&[a, b]).unwrap();
                prop_assert!(v >= (a + b - 1.0).max(0.0) - 1e-10 && v <= a.min(b) + 1e-10);
            }
        }

        #[test]
        fn quantile_curve_round_trip(c in arch_strategy(), frac in 0.01f64..0.99,
                                     pre in proptest::collection::vec(0.05f64..0.999, 4)) {
            let d = c.dim();
            let prefix = &pre[..d - 1];
            let mut full = vec![1.0; d];
            full[..d - 1].copy_from_slice(prefix);
            let bound = c.cdf(&full).unwrap();
            let z = frac * bound;
            prop_assume!(z > 1e-8);
            let u = c.quantile_curve(prefix, z).unwrap();
            full[d - 1] = u;
            prop_assert!((c.cdf(&full).unwrap() - z).abs() < 1e-10);
        }
    }
}
