//! Kendall distribution functions K(t) = P(C(U) ≤ t) and their inverses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::copulas::{CopulaSpec, QmcOptions};
use crate::error::{domain, Error, Result};
use crate::generators::{ArchimedeanGenerator, Family, MAX_ORDER};
use crate::special::ln_factorial;

/// Default Monte Carlo size for empirical Kendall functions.
pub const DEFAULT_MC: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    ClosedForm(ArchimedeanGenerator),
    Empirical(Vec<f64>),
}

/// The distribution function of Z = C(U) for a `dim`-dimensional copula.
#[derive(Debug, Clone, PartialEq)]
pub struct KendallFunction {
    kind: Kind,
    dim: usize,
}

impl KendallFunction {
    /// Closed form for an Archimedean generator in dimension `dim`.
    pub fn closed_form(g: ArchimedeanGenerator, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter(
                "Kendall function dimension must be at least 1".into(),
            ));
        }
        if dim > MAX_ORDER {
            return Err(Error::UnsupportedOrder {
                order: dim,
                max: MAX_ORDER,
            });
        }
        g.check_dimension(dim)?;
        Ok(KendallFunction {
            kind: Kind::ClosedForm(g),
            dim,
        })
    }

    /// K(t) = t, the Kendall function of a single uniform.
    pub fn identity() -> Self {
        KendallFunction {
            kind: Kind::ClosedForm(ArchimedeanGenerator::independence()),
            dim: 1,
        }
    }

    /// Step-function estimate from values of Z; values are sorted and kept inside (0, 1).
    pub fn empirical(mut values: Vec<f64>, dim: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter(
                "empirical Kendall function needs data".into(),
            ));
        }
        if let Some(&bad) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(domain("Kendall sample value", bad, "[0, 1]"));
        }
        for v in values.iter_mut() {
            *v = v.clamp(f64::MIN_POSITIVE, crate::copulas::ONE_MINUS);
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        Ok(KendallFunction {
            kind: Kind::Empirical(values),
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.kind, Kind::ClosedForm(_))
    }

    pub fn generator(&self) -> Option<ArchimedeanGenerator> {
        match &self.kind {
            Kind::ClosedForm(g) => Some(*g),
            Kind::Empirical(_) => None,
        }
    }

    /// Sorted support values of an empirical Kendall function.
    pub fn sorted_values(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Empirical(v) => Some(v),
            Kind::ClosedForm(_) => None,
        }
    }

    /// `closed-form` or `empirical(m)`.
    pub fn provenance(&self) -> String {
        match &self.kind {
            Kind::ClosedForm(_) => "closed-form".into(),
            Kind::Empirical(v) => format!("empirical({})", v.len()),
        }
    }

    /// K(t); values outside (0, 1) saturate.
    pub fn cdf(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        match &self.kind {
            Kind::ClosedForm(g) => {
                if self.dim == 1 {
                    return t;
                }
                let s = g.phi(t);
                let extra = g.kendall_excess(s, self.dim).unwrap_or(f64::NAN);
                (t + extra).min(1.0)
            }
            Kind::Empirical(v) => v.partition_point(|&x| x <= t) as f64 / v.len() as f64,
        }
    }

    /// K′(t) for the closed form; `None` for empirical step functions.
    pub fn density(&self, t: f64) -> Option<f64> {
        match &self.kind {
            Kind::ClosedForm(g) => {
                if self.dim == 1 {
                    return Some(1.0);
                }
                if !(t > 0.0 && t < 1.0) {
                    return Some(0.0);
                }
                Some(self.ln_density_closed(g, t).exp())
            }
            Kind::Empirical(_) => None,
        }
    }

    fn ln_density_closed(&self, g: &ArchimedeanGenerator, t: f64) -> f64 {
        let d = self.dim;
        let s = g.phi(t);
        let Ok((_, la)) = g.inverse_derivative_ln(s, d) else {
            return f64::NAN;
        };
        g.ln_neg_phi_prime(t) + (d - 1) as f64 * s.ln() - ln_factorial(d - 1) + la
    }

    /// K⁻¹(p): safeguarded Newton iteration on ln t for the closed form, the
    /// left-continuous generalized inverse for the empirical kind.
    pub fn inverse(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain("p", p, "[0, 1]"));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        if p == 1.0 {
            return Ok(1.0);
        }
        match &self.kind {
            Kind::Empirical(v) => {
                let n = v.len();
                let mut k = (p * n as f64).ceil() as usize;
                // guard against p·n landing just above an integer through rounding
                if k > 1 && (k - 1) as f64 / n as f64 >= p {
                    k -= 1;
                }
                let k = k.clamp(1, n);
                Ok(v[k - 1])
            }
            Kind::ClosedForm(g) => {
                if self.dim == 1 || g.family() == Family::Independence && self.dim == 1 {
                    return Ok(p);
                }
                self.closed_inverse(g, p)
            }
        }
    }

    fn closed_inverse(&self, g: &ArchimedeanGenerator, p: f64) -> Result<f64> {
        let f = |x: f64| self.cdf(x.exp()) - p;
        // K(t) ≥ t puts the root below ln p
        let mut hi = p.ln();
        let mut f_hi = f(hi);
        if f_hi.abs() < 1e-14 {
            return Ok(hi.exp());
        }
        let floor = f64::MIN_POSITIVE.ln();
        let mut step = 1.0;
        let mut lo = hi - step;
        let mut f_lo = f(lo);
        while f_lo > 0.0 {
            hi = lo;
            f_hi = f_lo;
            step *= 2.0;
            lo = (lo - step).max(floor);
            f_lo = f(lo);
            if lo == floor && f_lo > 0.0 {
                return Ok(f64::MIN_POSITIVE);
            }
        }
        let _ = f_hi;
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let t = x.exp();
            let fx = self.cdf(t) - p;
            if fx.abs() < 1e-12 {
                return Ok(t);
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo < 1e-15 * (1.0 + x.abs()) {
                return Ok(t);
            }
            let slope = (self.ln_density_closed(g, t) + x).exp();
            let newton = x - fx / slope;
            x = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        let t = x.exp();
        let resid = (self.cdf(t) - p).abs();
        if resid < 1e-10 {
            Ok(t)
        } else {
            Err(Error::Tolerance {
                what: "Kendall inverse",
                tolerance: 1e-10,
                residual: resid,
            })
        }
    }
}

pub fn kendall_cdf(k: &KendallFunction, t: f64) -> f64 {
    k.cdf(t)
}

pub fn kendall_inverse(k: &KendallFunction, p: f64) -> Result<f64> {
    k.inverse(p)
}

/// Empirical Kendall function from `m` simulated values C(U), U ~ C.
pub fn empirical_kendall_build<R: Rng + ?Sized>(
    c: &CopulaSpec,
    m: usize,
    rng: &mut R,
) -> Result<KendallFunction> {
    empirical_kendall_build_with(c, m, &QmcOptions::default(), rng)
}

/// As [`empirical_kendall_build`], with an explicit QMC budget for high-dimensional
/// elliptical CDF evaluations.
pub fn empirical_kendall_build_with<R: Rng + ?Sized>(
    c: &CopulaSpec,
    m: usize,
    qmc: &QmcOptions,
    rng: &mut R,
) -> Result<KendallFunction> {
    if m == 0 {
        return Err(Error::Parameter(
            "empirical Kendall build needs m ≥ 1".into(),
        ));
    }
    let d = c.dim();
    let mut row = alloc::vec![0.0; d];
    let mut z = Vec::with_capacity(m);
    for _ in 0..m {
        c.sample_into(rng, &mut row)?;
        z.push(c.cdf_with_error(&row, qmc)?.0);
    }
    KendallFunction::empirical(z, d)
}
