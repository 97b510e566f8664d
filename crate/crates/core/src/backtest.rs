//! Portfolio Value-at-Risk by simulation from a fitted model, and exceedance backtests.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::estimation::{fit_two_step, pseudo_observations, FitOptions, Skeleton};
use crate::hierarchical::{HierarchicalModel, SampleMethod};
use crate::matrix::DataMatrix;
use crate::rng::stream;
use crate::special::{chi_square_sf, normal_quantile, student_t_quantile};
use crate::stats::{mean, sorted_quantile, std_dev};

/// Akaike information criterion 2k − 2ℓ.
pub fn aic(loglik: f64, k: usize) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

/// Bayesian information criterion k·ln N − 2ℓ.
pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    k as f64 * (n as f64).ln() - 2.0 * loglik
}

/// Marginal return model used to map copula draws to returns.
#[derive(Debug, Clone, PartialEq)]
pub enum Margin {
    /// Sorted sample; quantiles are order statistics.
    Empirical(Vec<f64>),
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Location-scale Student-t.
    StudentT {
        nu: f64,
        loc: f64,
        scale: f64,
    },
}

impl Margin {
    pub fn empirical(mut x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Parameter("empirical margin needs data".into()));
        }
        if let Some(b) = x.iter().find(|v| !v.is_finite()) {
            return Err(domain("return", *b, "finite reals"));
        }
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Margin::Empirical(x))
    }

    /// Normal margin with the sample mean and standard deviation of `x`.
    pub fn normal_fit(x: &[f64]) -> Self {
        Margin::Normal {
            mean: mean(x),
            sd: std_dev(x),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Margin::Empirical(s) => sorted_quantile(s, p),
            Margin::Normal { mean, sd } => mean + sd * normal_quantile(p),
            Margin::StudentT { nu, loc, scale } => loc + scale * student_t_quantile(p, *nu),
        }
    }
}

/// Which margins the rolling backtest estimates on each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginKind {
    #[default]
    Empirical,
    Normal,
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// Simulated weighted portfolio returns.
pub fn simulate_portfolio<R: Rng + ?Sized>(
    model: &HierarchicalModel,
    margins: &[Margin],
    weights: &[f64],
    mc: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_weights(weights, model.n_vars())?;
    if margins.len() != model.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: model.n_vars(),
            got: margins.len(),
        });
    }
    let u = model.sample(mc, SampleMethod::default(), rng)?;
    Ok(u.rows()
        .map(|row| {
            row.iter()
                .zip(margins)
                .zip(weights)
                .map(|((&p, m), &w)| w * m.quantile(p))
                .sum()
        })
        .collect())
}

/// VaR forecasts (portfolio return quantiles at 1 − level) for several confidence levels from
/// one simulation.
pub fn forecast_var_levels<R: Rng + ?Sized>(
    model: &HierarchicalModel,
    margins: &[Margin],
    weights: &[f64],
    levels: &[f64],
    mc: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if mc < 10_000 {
        return Err(Error::Parameter(format!(
            "mc = {mc} is below the minimum of 10000"
        )));
    }
    for &l in levels {
        if !(l > 0.0 && l < 1.0) {
            return Err(domain("level", l, "(0, 1)"));
        }
    }
    let mut r = simulate_portfolio(model, margins, weights, mc, rng)?;
    r.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    Ok(levels
        .iter()
        .map(|&l| sorted_quantile(&r, 1.0 - l))
        .collect())
}

pub fn forecast_var<R: Rng + ?Sized>(
    model: &HierarchicalModel,
    margins: &[Margin],
    weights: &[f64],
    level: f64,
    mc: usize,
    rng: &mut R,
) -> Result<f64> {
    forecast_var_levels(model, margins, weights, &[level], mc, rng).map(|v| v[0])
}

/// A likelihood-ratio statistic with its chi-square p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrTest {
    pub lr: f64,
    pub p: f64,
}

fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Kupiec's proportion-of-failures test of unconditional coverage.
pub fn kupiec_uc(hits: &[bool], alpha: f64) -> LrTest {
    let t = hits.len() as f64;
    let x = hits.iter().filter(|&&h| h).count() as f64;
    let null = xlny(t - x, 1.0 - alpha) + xlny(x, alpha);
    let alt = if t > 0.0 {
        xlny(t - x, 1.0 - x / t) + xlny(x, x / t)
    } else {
        0.0
    };
    let lr = (2.0 * (alt - null)).max(0.0);
    LrTest {
        lr,
        p: chi_square_sf(lr, 1.0),
    }
}

/// Christoffersen's first-order Markov independence test and the joint conditional coverage test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffersenTests {
    /// `None` when the series has no transitions to test (all hits or no hits).
    pub ind: Option<LrTest>,
    pub cc: Option<LrTest>,
    /// Transition counts n00, n01, n10, n11.
    pub counts: [usize; 4],
}

impl ChristoffersenTests {
    pub fn degenerate(&self) -> bool {
        self.ind.is_none()
    }
}

pub fn christoffersen_tests(hits: &[bool], alpha: f64) -> ChristoffersenTests {
    let mut c = [0usize; 4];
    for w in hits.windows(2) {
        c[(usize::from(w[0]) << 1) | usize::from(w[1])] += 1;
    }
    let [n00, n01, n10, n11] = c.map(|v| v as f64);
    let ones = hits.iter().filter(|&&h| h).count();
    if hits.len() < 2 || ones == 0 || ones == hits.len() {
        return ChristoffersenTests {
            ind: None,
            cc: None,
            counts: c,
        };
    }
    let pi01 = if n00 + n01 > 0.0 {
        n01 / (n00 + n01)
    } else {
        0.0
    };
    let pi11 = if n10 + n11 > 0.0 {
        n11 / (n10 + n11)
    } else {
        0.0
    };
    let pi = (n01 + n11) / (n00 + n01 + n10 + n11);
    let alt = xlny(n00, 1.0 - pi01) + xlny(n01, pi01) + xlny(n10, 1.0 - pi11) + xlny(n11, pi11);
    let null = xlny(n00 + n10, 1.0 - pi) + xlny(n01 + n11, pi);
    let lr_ind = (2.0 * (alt - null)).max(0.0);
    let uc = kupiec_uc(hits, alpha);
    let lr_cc = uc.lr + lr_ind;
    ChristoffersenTests {
        ind: Some(LrTest {
            lr: lr_ind,
            p: chi_square_sf(lr_ind, 1.0),
        }),
        cc: Some(LrTest {
            lr: lr_cc,
            p: chi_square_sf(lr_cc, 2.0),
        }),
        counts: c,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    /// VaR confidence level, e.g. 0.99.
    pub level: f64,
    pub hits: Vec<bool>,
    pub n_exceed: usize,
    pub uc: LrTest,
    pub ind: Option<LrTest>,
    pub cc: Option<LrTest>,
    pub window: usize,
    pub horizon: usize,
    pub forecasts: Vec<f64>,
    pub realized: Vec<f64>,
}

impl BacktestReport {
    /// Tests on a given hit series.
    pub fn from_hits(hits: Vec<bool>, level: f64, window: usize) -> Self {
        let alpha = 1.0 - level;
        let uc = kupiec_uc(&hits, alpha);
        let ch = christoffersen_tests(&hits, alpha);
        BacktestReport {
            level,
            n_exceed: hits.iter().filter(|&&h| h).count(),
            uc,
            ind: ch.ind,
            cc: ch.cc,
            window,
            horizon: hits.len(),
            hits,
            forecasts: Vec::new(),
            realized: Vec::new(),
        }
    }

    pub fn degenerate(&self) -> bool {
        self.ind.is_none()
    }
}

/// Settings for [`rolling_backtest`].
#[derive(Debug, Clone, PartialEq)]
pub struct RollingOptions {
    pub window: usize,
    /// Number of one-day forecasts.
    pub horizon: usize,
    /// Refit the copula every this many days.
    pub refit_every: usize,
    pub mc: usize,
    pub levels: Vec<f64>,
    pub margins: MarginKind,
    pub fit: FitOptions,
    pub seed: u64,
}

impl Default for RollingOptions {
    fn default() -> Self {
        RollingOptions {
            window: 500,
            horizon: 100,
            refit_every: 25,
            mc: 10_000,
            levels: vec![0.95, 0.99],
            margins: MarginKind::Empirical,
            fit: FitOptions::default(),
            seed: 0,
        }
    }
}

/// Rolling one-day VaR forecasts over the last `horizon` rows of `returns`, each day using the
/// preceding `window` rows, followed by the exceedance tests per level.
pub fn rolling_backtest(
    returns: &DataMatrix,
    skel: &Skeleton,
    weights: &[f64],
    opts: &RollingOptions,
) -> Result<Vec<BacktestReport>> {
    let t_total = returns.nrows();
    let n = returns.ncols();
    check_weights(weights, n)?;
    if opts.window < 2 || opts.horizon == 0 || t_total < opts.window + opts.horizon {
        return Err(Error::Parameter(format!(
            "need window + horizon = {} rows, data has {t_total}",
            opts.window + opts.horizon
        )));
    }
    let start = t_total - opts.horizon;
    let refit = opts.refit_every.max(1);
    let mut model: Option<HierarchicalModel> = None;
    let mut forecasts = vec![Vec::with_capacity(opts.horizon); opts.levels.len()];
    let mut realized = Vec::with_capacity(opts.horizon);
    for (day, t) in (start..t_total).enumerate() {
        let win = returns.slice_rows(t - opts.window, t);
        if day % refit == 0 || model.is_none() {
            let u = pseudo_observations(&win)?;
            let fit = FitOptions {
                seed: opts.fit.seed ^ day as u64,
                ..opts.fit
            };
            model = Some(fit_two_step(skel, &u, &fit)?.model);
        }
        let margins: Vec<Margin> = (0..n)
            .map(|j| {
                let col = win.column(j);
                match opts.margins {
                    MarginKind::Empirical => Margin::empirical(col),
                    MarginKind::Normal => Ok(Margin::normal_fit(&col)),
                }
            })
            .collect::<Result<_>>()?;
        let mut rng = stream(opts.seed, day as u32, 1);
        let var = forecast_var_levels(
            model.as_ref().unwrap(),
            &margins,
            weights,
            &opts.levels,
            opts.mc,
            &mut rng,
        )?;
        for (f, v) in forecasts.iter_mut().zip(var) {
            f.push(v);
        }
        realized.push(
            returns
                .row(t)
                .iter()
                .zip(weights)
                .map(|(r, w)| r * w)
                .sum::<f64>(),
        );
    }
    Ok(opts
        .levels
        .iter()
        .zip(forecasts)
        .map(|(&level, f)| {
            let hits = realized.iter().zip(&f).map(|(r, v)| r < v).collect();
            let mut rep = BacktestReport::from_hits(hits, level, opts.window);
            rep.forecasts = f;
            rep.realized = realized.clone();
            rep
        })
        .collect())
}
