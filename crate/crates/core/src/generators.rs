//! Archimedean generators: values, inverses, inverse derivatives and Kendall's tau.

use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::numeric;
use crate::special::ln_factorial;

/// Highest derivative order of the inverse generator that can be evaluated.
pub const MAX_ORDER: usize = 32;

/// Largest |theta| accepted for the Frank family; `exp(-theta)` underflows beyond it.
pub const FRANK_THETA_MAX: f64 = 745.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Independence,
    Clayton,
    Gumbel,
    Frank,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Frank => "frank",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independence" => Ok(Family::Independence),
            "clayton" => Ok(Family::Clayton),
            "gumbel" => Ok(Family::Gumbel),
            "frank" => Ok(Family::Frank),
            _ => Err(Error::Parameter(alloc::format!(
                "unknown Archimedean family `{s}`"
            ))),
        }
    }
}

/// A generator family together with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchimedeanGenerator {
    family: Family,
    theta: f64,
}

impl ArchimedeanGenerator {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        let ok = match family {
            Family::Independence => true,
            Family::Clayton => theta > 0.0 && theta.is_finite(),
            Family::Gumbel => theta >= 1.0 && theta.is_finite(),
            Family::Frank => theta != 0.0 && theta.abs() <= FRANK_THETA_MAX,
        };
        if !ok {
            return Err(Error::Parameter(alloc::format!(
                "theta = {theta} is outside the {family} domain"
            )));
        }
        let theta = if family == Family::Independence {
            0.0
        } else {
            theta
        };
        Ok(ArchimedeanGenerator { family, theta })
    }

    pub fn independence() -> Self {
        ArchimedeanGenerator {
            family: Family::Independence,
            theta: 0.0,
        }
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        Self::new(Family::Clayton, theta)
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        Self::new(Family::Gumbel, theta)
    }

    pub fn frank(theta: f64) -> Result<Self> {
        Self::new(Family::Frank, theta)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// The dependence parameter; zero for the independence family.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Whether the inverse generator is completely monotone, i.e. valid in every dimension.
    pub fn completely_monotone(&self) -> bool {
        !(self.family == Family::Frank && self.theta < 0.0)
    }

    /// Checks that the generator defines a copula in dimension `d`.
    pub fn check_dimension(&self, d: usize) -> Result<()> {
        if d > 2 && !self.completely_monotone() {
            return Err(Error::Parameter(alloc::format!(
                "frank with negative theta = {} is only a copula for d = 2 (got d = {d})",
                self.theta
            )));
        }
        Ok(())
    }

    /// φ(t) without domain checks. Returns `+inf` at `t = 0`.
    pub fn phi(&self, t: f64) -> f64 {
        if t == 1.0 {
            return 0.0;
        }
        let th = self.theta;
        match self.family {
            Family::Independence => -t.ln(),
            Family::Clayton => (-th * t.ln()).exp_m1(),
            Family::Gumbel => (-t.ln()).powf(th),
            Family::Frank => {
                if th < 0.0 {
                    // ln(e^a - 1) = a + ln(1 - e^{-a}) with a = -θ
                    let a = -th;
                    a * (1.0 - t) + (-(-a).exp_m1()).ln() - (-(-a * t).exp_m1()).ln()
                } else {
                    // ln(1 + (e^{-θt} - e^{-θ}) / (1 - e^{-θt})), all pieces free of cancellation
                    let num = (-th * t).exp() * -(-th * (1.0 - t)).exp_m1();
                    (num / -(-th * t).exp_m1()).ln_1p()
                }
            }
        }
    }

    /// φ⁻¹(s) without domain checks.
    pub fn phi_inv(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 1.0;
        }
        let th = self.theta;
        match self.family {
            Family::Independence => (-s).exp(),
            Family::Clayton => (-s.ln_1p() / th).exp(),
            Family::Gumbel => (-s.powf(1.0 / th)).exp(),
            Family::Frank => {
                if s == f64::INFINITY {
                    return 0.0;
                }
                if th > 0.0 {
                    let x = -(-th).exp_m1() * (-s).exp();
                    if x < 0.5 {
                        return -(-x).ln_1p() / th;
                    }
                    -(-(-s).exp_m1() + (-th - s).exp()).ln() / th
                } else {
                    -((-s).exp() * (-th).exp_m1()).ln_1p() / th
                }
            }
        }
    }

    /// ln φ⁻¹(s), accurate where φ⁻¹(s) underflows.
    pub fn ln_phi_inv(&self, s: f64) -> f64 {
        let th = self.theta;
        match self.family {
            Family::Independence => -s,
            Family::Clayton => -s.ln_1p() / th,
            Family::Gumbel => -s.powf(1.0 / th),
            Family::Frank => {
                let v = self.phi_inv(s);
                if v > 1e-300 || th < 0.0 {
                    v.ln()
                } else {
                    // φ⁻¹(s) ≈ (1 - e^{-θ}) e^{-s} / θ for large s
                    (-(-th).exp_m1()).ln() - s - th.ln()
                }
            }
        }
    }

    /// φ′(t), negative on (0, 1).
    pub fn phi_prime(&self, t: f64) -> f64 {
        -self.ln_neg_phi_prime(t).exp()
    }

    /// ln(−φ′(t)).
    pub fn ln_neg_phi_prime(&self, t: f64) -> f64 {
        let th = self.theta;
        match self.family {
            Family::Independence => -t.ln(),
            Family::Clayton => th.ln() - (th + 1.0) * t.ln(),
            Family::Gumbel => {
                let l = -t.ln();
                if th == 1.0 {
                    -t.ln()
                } else {
                    th.ln() + (th - 1.0) * l.ln() - t.ln()
                }
            }
            Family::Frank => th.abs().ln() - th * t - (-th * t).exp_m1().abs().ln(),
        }
    }

    /// Fills `sign[k]` and `ln_abs[k]` with the sign and log-magnitude of (φ⁻¹)^(k)(s)
    /// for `k = 0..=kmax`.
    ///
    /// A zero derivative is reported with `ln_abs = -inf`, an infinite one with `+inf`.
    pub fn inverse_derivatives(
        &self,
        s: f64,
        kmax: usize,
        sign: &mut [f64],
        ln_abs: &mut [f64],
    ) -> Result<()> {
        if kmax > MAX_ORDER {
            return Err(Error::UnsupportedOrder {
                order: kmax,
                max: MAX_ORDER,
            });
        }
        if !(s >= 0.0) {
            return Err(domain("s", s, "[0, inf)"));
        }
        let alt = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
        let th = self.theta;
        match self.family {
            Family::Independence => {
                for k in 0..=kmax {
                    sign[k] = alt(k);
                    ln_abs[k] = -s;
                }
            }
            Family::Clayton => {
                let a = 1.0 / th;
                let l = s.ln_1p();
                let mut acc = 0.0;
                for k in 0..=kmax {
                    sign[k] = alt(k);
                    ln_abs[k] = acc - (a + k as f64) * l;
                    acc += (a + k as f64).ln();
                }
            }
            Family::Gumbel => {
                sign[0] = 1.0;
                ln_abs[0] = -s.powf(1.0 / th);
                if s == 0.0 {
                    for k in 1..=kmax {
                        sign[k] = alt(k);
                        ln_abs[k] = if th == 1.0 { 0.0 } else { f64::INFINITY };
                    }
                    return Ok(());
                }
                if s == f64::INFINITY {
                    for k in 1..=kmax {
                        sign[k] = alt(k);
                        ln_abs[k] = f64::NEG_INFINITY;
                    }
                    return Ok(());
                }
                let alpha = 1.0 / th;
                let ln_s = s.ln();
                let ln_y = alpha * ln_s;
                let y = ln_y.exp();
                // |coefficients| of Q_k in y; all positive
                let mut c = [0.0f64; MAX_ORDER + 2];
                let mut next = [0.0f64; MAX_ORDER + 2];
                c[0] = 1.0;
                for k in 0..kmax {
                    let kf = k as f64;
                    for m in 0..=k + 1 {
                        let own = if m <= k {
                            (kf - alpha * m as f64) * c[m]
                        } else {
                            0.0
                        };
                        let lower = if m > 0 { alpha * c[m - 1] } else { 0.0 };
                        next[m] = own + lower;
                    }
                    c[..=k + 1].copy_from_slice(&next[..=k + 1]);
                    let poly = log_poly(&c[..=k + 1], ln_y);
                    sign[k + 1] = alt(k + 1);
                    ln_abs[k + 1] = -y - (k + 1) as f64 * ln_s + poly;
                }
            }
            Family::Frank => {
                sign[0] = 1.0;
                ln_abs[0] = self.ln_phi_inv(s);
                if kmax == 0 {
                    return Ok(());
                }
                if th > 0.0 {
                    if s == f64::INFINITY {
                        for k in 1..=kmax {
                            sign[k] = alt(k);
                            ln_abs[k] = f64::NEG_INFINITY;
                        }
                        return Ok(());
                    }
                    let ln_x = (-(-th).exp_m1()).ln() - s;
                    let ln_1mx = (-(-s).exp_m1() + (-th - s).exp()).ln();
                    let ln_w = ln_x - ln_1mx;
                    let ln_th = th.ln();
                    // |coefficients| of P_k in w, index = power
                    let mut c = [0.0f64; MAX_ORDER + 2];
                    let mut next = [0.0f64; MAX_ORDER + 2];
                    c[1] = 1.0;
                    for k in 1..=kmax {
                        if k > 1 {
                            for m in 1..=k {
                                next[m] = (m as f64) * c[m] + (m as f64 - 1.0) * c[m - 1];
                            }
                            c[1..=k].copy_from_slice(&next[1..=k]);
                        }
                        sign[k] = alt(k);
                        ln_abs[k] = log_poly(&c[..=k], ln_w) - ln_th;
                    }
                } else {
                    let x = (-s).exp() * -(-th).exp_m1();
                    let w = x / (1.0 - x);
                    let one_plus_w = 1.0 / (1.0 - x);
                    let mut p = [0.0f64; MAX_ORDER + 2];
                    let mut next = [0.0f64; MAX_ORDER + 2];
                    let mut prev = [0.0f64; MAX_ORDER + 2];
                    p[1] = -1.0;
                    for k in 1..=kmax {
                        if k > 1 {
                            for m in 1..=k {
                                next[m] = -(m as f64) * p[m] - (m as f64 - 1.0) * p[m - 1];
                            }
                            p[1..=k].copy_from_slice(&next[1..=k]);
                        }
                        // P_k = -w(1+w)P'_{k-1}; 1+w is formed directly to avoid cancellation at w ≈ -1
                        let v = if k == 1 {
                            -w / th
                        } else {
                            let mut dp = 0.0;
                            for m in (1..k).rev() {
                                dp = dp * w + m as f64 * prev[m];
                            }
                            -w * one_plus_w * dp / th
                        };
                        prev[..=k].copy_from_slice(&p[..=k]);
                        sign[k] = if v < 0.0 { -1.0 } else { 1.0 };
                        ln_abs[k] = v.abs().ln();
                    }
                }
            }
        }
        Ok(())
    }

    /// (φ⁻¹)^(k)(s).
    pub fn inverse_derivative(&self, s: f64, k: usize) -> Result<f64> {
        let (sg, la) = self.inverse_derivative_ln(s, k)?;
        Ok(sg * la.exp())
    }

    /// Sign and log-magnitude of (φ⁻¹)^(k)(s).
    pub fn inverse_derivative_ln(&self, s: f64, k: usize) -> Result<(f64, f64)> {
        let mut sign = [0.0; MAX_ORDER + 1];
        let mut ln_abs = [0.0; MAX_ORDER + 1];
        self.inverse_derivatives(s, k, &mut sign, &mut ln_abs)?;
        Ok((sign[k], ln_abs[k]))
    }

    /// Sum of the Kendall terms (−s)^i/i!·(φ⁻¹)^(i)(s) for i = 1..d−1.
    pub fn kendall_excess(&self, s: f64, d: usize) -> Result<f64> {
        if d <= 1 || s == 0.0 {
            return Ok(0.0);
        }
        let kmax = d - 1;
        if self.family == Family::Gumbel && s.is_finite() {
            // scaled form avoids s^{-k} cancelling against s^k
            let alpha = 1.0 / self.theta;
            let y = s.powf(alpha);
            let ln_y = y.ln();
            let mut c = [0.0f64; MAX_ORDER + 2];
            let mut next = [0.0f64; MAX_ORDER + 2];
            c[0] = 1.0;
            let mut total = 0.0;
            if kmax > MAX_ORDER {
                return Err(Error::UnsupportedOrder {
                    order: kmax,
                    max: MAX_ORDER,
                });
            }
            for k in 0..kmax {
                let kf = k as f64;
                for m in 0..=k + 1 {
                    let own = if m <= k {
                        (kf - alpha * m as f64) * c[m]
                    } else {
                        0.0
                    };
                    let lower = if m > 0 { alpha * c[m - 1] } else { 0.0 };
                    next[m] = own + lower;
                }
                c[..=k + 1].copy_from_slice(&next[..=k + 1]);
                total += (-y + log_poly(&c[..=k + 1], ln_y) - ln_factorial(k + 1)).exp();
            }
            return Ok(total);
        }
        let mut sign = [0.0; MAX_ORDER + 1];
        let mut ln_abs = [0.0; MAX_ORDER + 1];
        self.inverse_derivatives(s, kmax, &mut sign, &mut ln_abs)?;
        let ln_s = s.ln();
        let mut total = 0.0;
        for i in 1..=kmax {
            let sg = sign[i] * if i % 2 == 0 { 1.0 } else { -1.0 };
            total += sg * (i as f64 * ln_s - ln_factorial(i) + ln_abs[i]).exp();
        }
        Ok(total)
    }

    /// Kendall's tau of the bivariate copula generated by `self`.
    pub fn tau(&self) -> f64 {
        let th = self.theta;
        match self.family {
            Family::Independence => 0.0,
            Family::Clayton => th / (th + 2.0),
            Family::Gumbel => 1.0 - 1.0 / th,
            Family::Frank => 1.0 - 4.0 / th * (1.0 - debye1(th)),
        }
    }

    /// Generator of `family` whose bivariate copula has Kendall's tau `tau`.
    pub fn from_tau(family: Family, tau: f64) -> Result<Self> {
        theta_from_tau(family, tau)
    }
}

// ln Σ_m c[m] e^{m·ln_y} for nonnegative coefficients, skipping zeros.
fn log_poly(c: &[f64], ln_y: f64) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    for (m, &cm) in c.iter().enumerate() {
        if cm > 0.0 {
            hi = hi.max(cm.ln() + m as f64 * ln_y);
        }
    }
    if hi == f64::NEG_INFINITY || !hi.is_finite() {
        return hi;
    }
    let mut acc = 0.0;
    for (m, &cm) in c.iter().enumerate() {
        if cm > 0.0 {
            acc += (cm.ln() + m as f64 * ln_y - hi).exp();
        }
    }
    hi + acc.ln()
}

/// Debye function of order one, (1/x)∫₀ˣ t/(eᵗ−1) dt.
pub fn debye1(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let f = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    let v = numeric::integrate(f, 0.0, x, 1e-14 * x.abs().max(1.0), 200).unwrap_or(f64::NAN);
    v / x
}

/// φ(t) with domain checks.
pub fn generator_value(g: &ArchimedeanGenerator, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain("t", t, "(0, 1]"));
    }
    Ok(g.phi(t))
}

/// φ⁻¹(s) with domain checks.
pub fn generator_inverse(g: &ArchimedeanGenerator, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(domain("s", s, "[0, inf)"));
    }
    Ok(g.phi_inv(s))
}

/// (φ⁻¹)^(k)(s) with domain and order checks.
pub fn generator_inverse_derivative(g: &ArchimedeanGenerator, s: f64, k: usize) -> Result<f64> {
    g.inverse_derivative(s, k)
}

pub fn tau_from_theta(g: &ArchimedeanGenerator) -> f64 {
    g.tau()
}

pub fn theta_from_tau(family: Family, tau: f64) -> Result<ArchimedeanGenerator> {
    let unattainable = || {
        Error::Parameter(alloc::format!(
            "Kendall's tau {tau} is not attainable by the {family} family"
        ))
    };
    match family {
        Family::Independence => {
            if tau == 0.0 {
                Ok(ArchimedeanGenerator::independence())
            } else {
                Err(unattainable())
            }
        }
        Family::Clayton => {
            if tau > 0.0 && tau < 1.0 {
                ArchimedeanGenerator::clayton(2.0 * tau / (1.0 - tau))
            } else {
                Err(unattainable())
            }
        }
        Family::Gumbel => {
            if (0.0..1.0).contains(&tau) {
                ArchimedeanGenerator::gumbel(1.0 / (1.0 - tau))
            } else {
                Err(unattainable())
            }
        }
        Family::Frank => {
            let target = tau.abs();
            let tau_of = |th: f64| 1.0 - 4.0 / th * (1.0 - debye1(th));
            let (lo, hi) = (1e-6, FRANK_THETA_MAX);
            if !(tau != 0.0 && target > tau_of(lo) && target < tau_of(hi)) {
                return Err(unattainable());
            }
            let th = numeric::bisect(|th| tau_of(th) - target, lo, hi, 1e-10, 200)?;
            ArchimedeanGenerator::frank(th.copysign(tau))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn generator_values() {
        let c = ArchimedeanGenerator::clayton(2.0).unwrap();
        assert!(close(generator_value(&c, 0.5).unwrap(), 3.0, 1e-15));
        let g = ArchimedeanGenerator::gumbel(2.0).unwrap();
        assert!(close(
            generator_value(&g, (-1f64).exp()).unwrap(),
            1.0,
            1e-15
        ));
        let f = ArchimedeanGenerator::frank(5.0).unwrap();
        assert_eq!(generator_value(&f, 1.0).unwrap(), 0.0);
        assert!(generator_value(&c, 0.0).is_err());
        assert!(generator_value(&c, 1.5).is_err());
        assert!(ArchimedeanGenerator::clayton(-1.0).is_err());
        assert!(ArchimedeanGenerator::gumbel(0.5).is_err());
        assert!(ArchimedeanGenerator::frank(0.0).is_err());
    }

    #[test]
    fn generator_inverses() {
        let c = ArchimedeanGenerator::clayton(2.0).unwrap();
        assert!(close(generator_inverse(&c, 3.0).unwrap(), 0.5, 1e-15));
        assert!(close(
            generator_inverse(&c, 12.0).unwrap(),
            0.277_350_098_112_615,
            1e-14
        ));
        for g in [
            c,
            ArchimedeanGenerator::independence(),
            ArchimedeanGenerator::gumbel(3.0).unwrap(),
            ArchimedeanGenerator::frank(-4.0).unwrap(),
            ArchimedeanGenerator::frank(4.0).unwrap(),
        ] {
            assert_eq!(generator_inverse(&g, 0.0).unwrap(), 1.0);
        }
        assert!(generator_inverse(&c, -1.0).is_err());
    }

    #[test]
    fn inverse_derivative_examples() {
        let c = ArchimedeanGenerator::clayton(2.0).unwrap();
        assert!(close(c.inverse_derivative(0.0, 1).unwrap(), -0.5, 1e-15));
        let i = ArchimedeanGenerator::independence();
        assert!(close(
            i.inverse_derivative(1.0, 3).unwrap(),
            -(-1f64).exp(),
            1e-15
        ));
        let g = ArchimedeanGenerator::gumbel(2.0).unwrap();
        let h = 1e-4;
        let fd = (g.phi_inv(1.0 + h) - 2.0 * g.phi_inv(1.0) + g.phi_inv(1.0 - h)) / (h * h);
        assert!(close(g.inverse_derivative(1.0, 2).unwrap(), fd, 1e-6));
        assert!(matches!(
            c.inverse_derivative(1.0, MAX_ORDER + 1),
            Err(Error::UnsupportedOrder { .. })
        ));
        assert!(c.inverse_derivative(-0.1, 1).is_err());
    }

    #[test]
    fn gumbel_closed_form_first_derivatives() {
        // d/ds exp(-s^a) = -a s^(a-1) exp(-s^a)
        let g = ArchimedeanGenerator::gumbel(2.5).unwrap();
        let a = 0.4;
        for &s in &[0.01, 0.3, 2.0, 40.0] {
            let exact = -a * s.powf(a - 1.0) * (-s.powf(a)).exp();
            assert!(close(
                g.inverse_derivative(s, 1).unwrap() / exact,
                1.0,
                1e-13
            ));
            let exact2 = (a * a * s.powf(2.0 * a - 2.0) - a * (a - 1.0) * s.powf(a - 2.0))
                * (-s.powf(a)).exp();
            assert!(close(
                g.inverse_derivative(s, 2).unwrap() / exact2,
                1.0,
                1e-12
            ));
        }
    }

    #[test]
    fn frank_first_derivative_closed_form() {
        for &th in &[5.0, -3.0, 40.0] {
            let g = ArchimedeanGenerator::frank(th).unwrap();
            for &s in &[0.0, 0.2, 3.0, 30.0] {
                let x = -(-th).exp_m1() * (-s).exp();
                let one_minus_x = -(-s).exp_m1() + (-th - s).exp();
                let exact = -x / one_minus_x / th;
                let got = g.inverse_derivative(s, 1).unwrap();
                assert!(
                    close(got / exact, 1.0, 1e-12),
                    "theta {th} s {s}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn tau_conversions() {
        assert!(close(
            ArchimedeanGenerator::clayton(2.0).unwrap().tau(),
            0.5,
            1e-15
        ));
        assert!(close(
            ArchimedeanGenerator::gumbel(2.0).unwrap().tau(),
            0.5,
            1e-15
        ));
        let f = ArchimedeanGenerator::frank(5.0).unwrap();
        assert!(close(f.tau(), 0.4567, 1e-4), "{}", f.tau());
        assert!(close(
            ArchimedeanGenerator::frank(-5.0).unwrap().tau(),
            -f.tau(),
            1e-12
        ));
        let back = theta_from_tau(Family::Frank, f.tau()).unwrap();
        assert!(close(back.theta(), 5.0, 1e-8));
        assert!(theta_from_tau(Family::Gumbel, -0.2).is_err());
        assert!(theta_from_tau(Family::Clayton, 1.0).is_err());
        assert!(theta_from_tau(Family::Frank, 0.0).is_err());
    }

    #[test]
    fn kendall_excess_matches_direct_sum() {
        let g = ArchimedeanGenerator::gumbel(1.7).unwrap();
        for &s in &[0.05, 1.0, 7.0] {
            let mut direct = 0.0;
            for i in 1..5 {
                let term = (-s).powi(i as i32) / libm::tgamma(i as f64 + 1.0)
                    * g.inverse_derivative(s, i).unwrap();
                assert!(term >= 0.0);
                direct += term;
            }
            assert!(close(g.kendall_excess(s, 5).unwrap(), direct, 1e-13));
        }
    }

    fn any_generator() -> impl Strategy<Value = ArchimedeanGenerator> {
        prop_oneof![
            Just(ArchimedeanGenerator::independence()),
            (0.05f64..20.0).prop_map(|t| ArchimedeanGenerator::clayton(t).unwrap()),
            (1.0f64..20.0).prop_map(|t| ArchimedeanGenerator::gumbel(t).unwrap()),
            (0.05f64..40.0).prop_map(|t| ArchimedeanGenerator::frank(t).unwrap()),
            (-40.0f64..-0.05).prop_map(|t| ArchimedeanGenerator::frank(t).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip(g in any_generator(), t in 1e-6f64..=1.0) {
            let back = g.phi_inv(g.phi(t));
            prop_assert!((back - t).abs() < 1e-12, "{:?}: t {} back {}", g, t, back);
        }

        #[test]
        fn phi_decreasing(g in any_generator(), a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(g.phi(lo) > g.phi(hi));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn sign_pattern(g in any_generator(), s in 0.0f64..50.0) {
            prop_assume!(g.completely_monotone());
            for k in 0..=10 {
                let v = g.inverse_derivative(s, k).unwrap();
                let signed = if k % 2 == 0 { v } else { -v };
                prop_assert!(signed >= 0.0, "{:?} s {} k {}: {}", g, s, k, v);
            }
        }

        #[test]
        fn derivatives_match_finite_differences(g in any_generator(), s in 0.1f64..20.0) {
            for k in 1..=6 {
                let h = 1e-4 * s.max(1.0);
                let at = |x: f64| g.inverse_derivative(x, k - 1).unwrap();
                let (fp, fm) = (at(s + h), at(s - h));
                let fd = (8.0 * (fp - fm) - at(s + 2.0 * h) + at(s - 2.0 * h)) / (12.0 * h);
                let v = g.inverse_derivative(s, k).unwrap();
                // relative tolerance plus the rounding floor of the difference quotient
                let tol = 1e-5 * v.abs() + 1e-10 * (fp.abs() + fm.abs()) / h;
                prop_assert!((fd - v).abs() <= tol, "{:?} s {} k {}: fd {} exact {}", g, s, k, fd, v);
            }
        }

        #[test]
        fn tau_increasing(fam in prop_oneof![Just(Family::Clayton), Just(Family::Gumbel), Just(Family::Frank)],
                          a in 1.01f64..30.0, b in 1.01f64..30.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let t_lo = ArchimedeanGenerator::new(fam, lo).unwrap().tau();
            let t_hi = ArchimedeanGenerator::new(fam, hi).unwrap().tau();
            prop_assert!(t_lo < t_hi);
        }

        #[test]
        fn tau_round_trip(fam in prop_oneof![Just(Family::Clayton), Just(Family::Gumbel), Just(Family::Frank)],
                          theta in 1.05f64..50.0) {
            let g = ArchimedeanGenerator::new(fam, theta).unwrap();
            let back = theta_from_tau(fam, g.tau()).unwrap();
            prop_assert!((back.theta() - theta).abs() < 1e-8 * theta.max(1.0), "{} vs {}", back.theta(), theta);
        }
    }
}
