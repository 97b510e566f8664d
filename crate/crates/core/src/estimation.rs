//! Rank pseudo-observations, cluster fits, two-step and joint maximum-likelihood
//! estimation, and the Monte Carlo study harness.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::backtest::{aic, bic};
use crate::copulas::{
    clamp_unit, elliptical_rho, CopulaFamily, CopulaSpec, CorrelationMatrix, QmcOptions,
};
use crate::error::{Error, Result};
use crate::generators::{ArchimedeanGenerator, Family};
use crate::hierarchical::{HierarchicalModel, Inputs, LogLik, Node, SampleMethod};
use crate::kendall::{empirical_kendall_build_with, KendallFunction, DEFAULT_MC};
use crate::matrix::DataMatrix;
use crate::numeric::{nelder_mead, SimplexOptions};
use crate::rng::stream;
use crate::stats::kendall_tau;

/// Eigenvalue floor used when repairing τ-inverted correlation matrices.
pub const CORRELATION_FLOOR: f64 = 1e-6;

const FRANK_DEAD_ZONE: f64 = 1e-8;

/// Ranks scaled by 1/(N+1), ties receiving their average rank.
pub fn pseudo_observations(x: &DataMatrix) -> Result<DataMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 rows, got {n}")));
    }
    let mut out = DataMatrix::zeros(n, x.ncols());
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for j in 0..x.ncols() {
        let col = x.column(j);
        if let Some(bad) = col.iter().find(|v| !v.is_finite()) {
            return Err(crate::error::domain("observation", *bad, "finite reals"));
        }
        idx.clear();
        idx.extend(0..n);
        idx.sort_by(|&a, &b| {
            col[a]
                .partial_cmp(&col[b])
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        if col[idx[0]] == col[idx[n - 1]] {
            return Err(Error::ConstantColumn(j));
        }
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && col[idx[end]] == col[idx[start]] {
                end += 1;
            }
            // ranks start+1..=end share their mean
            let rank = (start + end + 1) as f64 / 2.0;
            for &i in &idx[start..end] {
                out.set(i, j, rank / (n + 1) as f64);
            }
            start = end;
        }
    }
    Ok(out)
}

/// Generator parameter from an unconstrained value: exp for Clayton, 1 + exp for Gumbel,
/// identity with a dead zone around zero for Frank.
pub fn theta_from_eta(family: Family, eta: f64) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Clayton => eta.exp(),
        Family::Gumbel => 1.0 + eta.exp(),
        Family::Frank => {
            if eta.abs() < FRANK_DEAD_ZONE {
                FRANK_DEAD_ZONE.copysign(eta)
            } else {
                eta
            }
        }
    }
}

pub fn eta_from_theta(family: Family, theta: f64) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Clayton => theta.ln(),
        Family::Gumbel => (theta - 1.0).ln(),
        Family::Frank => theta,
    }
}

/// Outcome of fitting one copula.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFit {
    pub copula: CopulaSpec,
    /// Σ ln c over the fitted rows.
    pub loglik: f64,
    pub method: &'static str,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

fn mean_pairwise_tau(u: &DataMatrix) -> f64 {
    let d = u.ncols();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| u.column(j)).collect();
    let mut s = 0.0;
    let mut k = 0;
    for a in 0..d {
        for b in 0..a {
            s += kendall_tau(&cols[a], &cols[b]);
            k += 1;
        }
    }
    if k == 0 {
        0.0
    } else {
        s / k as f64
    }
}

fn total_log_pdf(c: &CopulaSpec, u: &DataMatrix) -> f64 {
    let mut s = 0.0;
    for row in u.rows() {
        match c.log_pdf(row) {
            Ok(v) if v.is_finite() => s += v,
            Ok(v) if v == f64::NEG_INFINITY => s += crate::hierarchical::DENSITY_FLOOR.ln(),
            _ => return f64::NAN,
        }
    }
    s
}

/// Starting generator from the mean pairwise Kendall's τ, pulled inside the family's range.
fn start_generator(family: Family, tau: f64, d: usize) -> Result<ArchimedeanGenerator> {
    let t = match family {
        Family::Frank if d == 2 => {
            let t = tau.clamp(-0.9, 0.9);
            if t.abs() < 0.01 {
                0.01
            } else {
                t
            }
        }
        _ => tau.clamp(0.01, 0.9),
    };
    ArchimedeanGenerator::from_tau(family, t)
}

/// Fits a copula of `family` to the rows of `u`: maximum likelihood over the transformed
/// generator parameter for Archimedean families, pairwise τ inversion for correlation
/// matrices and maximum likelihood over ν for Student-t.
pub fn fit_cluster(
    family: CopulaFamily,
    u: &DataMatrix,
    opts: &SimplexOptions,
) -> Result<ClusterFit> {
    let d = u.ncols();
    if d == 1 {
        return Ok(ClusterFit {
            copula: CopulaSpec::independence(1),
            loglik: 0.0,
            method: "identity",
            evaluations: 0,
            iterations: 0,
            converged: true,
        });
    }
    match family {
        CopulaFamily::Independence => Ok(ClusterFit {
            copula: CopulaSpec::independence(d),
            loglik: 0.0,
            method: "none",
            evaluations: 0,
            iterations: 0,
            converged: true,
        }),
        CopulaFamily::Clayton | CopulaFamily::Gumbel | CopulaFamily::Frank => {
            let fam = family.archimedean().unwrap();
            let g0 = start_generator(fam, mean_pairwise_tau(u), d)?;
            let build = |eta: f64| {
                ArchimedeanGenerator::new(fam, theta_from_eta(fam, eta))
                    .and_then(|g| CopulaSpec::archimedean(g, d))
            };
            let objective = |x: &[f64]| match build(x[0]) {
                Ok(c) => -total_log_pdf(&c, u),
                Err(_) => f64::INFINITY,
            };
            let r = nelder_mead(objective, &[eta_from_theta(fam, g0.theta())], opts);
            Ok(ClusterFit {
                copula: build(r.x[0])?,
                loglik: -r.value,
                method: "mle",
                evaluations: r.evaluations,
                iterations: r.iterations,
                converged: r.converged,
            })
        }
        CopulaFamily::Gaussian | CopulaFamily::StudentT => {
            let corr = tau_inverted_correlation(u)?;
            if family == CopulaFamily::Gaussian {
                let c = CopulaSpec::gaussian(corr);
                let loglik = total_log_pdf(&c, u);
                return Ok(ClusterFit {
                    copula: c,
                    loglik,
                    method: "tau-inversion",
                    evaluations: 1,
                    iterations: 0,
                    converged: true,
                });
            }
            let build = |eta: f64| CopulaSpec::student_t(corr.clone(), 2.0 + eta.exp());
            let objective = |x: &[f64]| match build(x[0]) {
                Ok(c) => -total_log_pdf(&c, u),
                Err(_) => f64::INFINITY,
            };
            let r = nelder_mead(objective, &[(6.0f64 - 2.0).ln()], opts);
            Ok(ClusterFit {
                copula: build(r.x[0])?,
                loglik: -r.value,
                method: "tau-inversion+mle(nu)",
                evaluations: r.evaluations,
                iterations: r.iterations,
                converged: r.converged,
            })
        }
    }
}

/// Correlation matrix sin(πτ/2) from pairwise Kendall's τ, repaired to be positive definite.
pub fn tau_inverted_correlation(u: &DataMatrix) -> Result<CorrelationMatrix> {
    let d = u.ncols();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| u.column(j)).collect();
    let mut r = vec![0.0; d * d];
    for a in 0..d {
        r[a * d + a] = 1.0;
        for b in 0..a {
            let rho = elliptical_rho(kendall_tau(&cols[a], &cols[b])).clamp(-0.999, 0.999);
            r[a * d + b] = rho;
            r[b * d + a] = rho;
        }
    }
    CorrelationMatrix::new(d, r.clone())
        .or_else(|_| CorrelationMatrix::nearest(d, &r, CORRELATION_FLOOR))
}

/// Model skeleton: the tree shape with a family per node and optional fixed copulas.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub name: String,
    pub family: CopulaFamily,
    /// Used as is instead of being estimated.
    pub fixed: Option<CopulaSpec>,
    pub inputs: SkeletonInputs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkeletonInputs {
    Columns(Vec<usize>),
    Children(Vec<Skeleton>),
}

impl Skeleton {
    pub fn leaf(name: impl Into<String>, family: CopulaFamily, columns: Vec<usize>) -> Self {
        Skeleton {
            name: name.into(),
            family,
            fixed: None,
            inputs: SkeletonInputs::Columns(columns),
        }
    }

    pub fn internal(
        name: impl Into<String>,
        family: CopulaFamily,
        children: Vec<Skeleton>,
    ) -> Self {
        Skeleton {
            name: name.into(),
            family,
            fixed: None,
            inputs: SkeletonInputs::Children(children),
        }
    }

    pub fn with_fixed(mut self, c: CopulaSpec) -> Self {
        self.fixed = Some(c);
        self
    }

    pub fn width(&self) -> usize {
        match &self.inputs {
            SkeletonInputs::Columns(c) => c.len(),
            SkeletonInputs::Children(c) => c.len(),
        }
    }

    /// Skeleton of an existing model, with every copula left free.
    pub fn from_node(node: &Node) -> Self {
        Skeleton {
            name: node.name.clone(),
            family: node.copula.family(),
            fixed: None,
            inputs: match &node.inputs {
                Inputs::Columns(c) => SkeletonInputs::Columns(c.clone()),
                Inputs::Children(ch) => {
                    SkeletonInputs::Children(ch.iter().map(Skeleton::from_node).collect())
                }
            },
        }
    }

    fn n_vars(&self) -> usize {
        match &self.inputs {
            SkeletonInputs::Columns(c) => c.iter().map(|&j| j + 1).max().unwrap_or(0),
            SkeletonInputs::Children(ch) => ch.iter().map(Skeleton::n_vars).max().unwrap_or(0),
        }
    }
}

/// How Kendall functions of fitted nodes are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KendallMode {
    /// Generator closed forms; elliptical nodes are rejected.
    ClosedForm,
    /// Closed forms where available, model-simulated empirical functions of the given size elsewhere.
    Auto(usize),
    /// Model-simulated empirical Kendall functions of the given size on every node.
    Empirical(usize),
    /// The empirical distribution of the fitted C-values of the data themselves.
    Observed,
}

impl Default for KendallMode {
    fn default() -> Self {
        KendallMode::Auto(DEFAULT_MC)
    }
}

/// Settings shared by the fitting routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub kendall: KendallMode,
    pub simplex: SimplexOptions,
    /// QMC budget for elliptical CDFs inside Kendall builds and PITs.
    pub qmc: QmcOptions,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            kendall: KendallMode::default(),
            simplex: SimplexOptions::default(),
            qmc: QmcOptions {
                points: 2_000,
                shifts: 5,
                seed: 0,
            },
            seed: 0,
        }
    }
}

/// Per-node result inside a [`FitReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    pub path: String,
    pub copula: CopulaSpec,
    pub method: &'static str,
    /// `closed-form`, `empirical(m)`, `observed(N)` or `none` for the root.
    pub kendall: String,
    pub loglik: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Joint maximum-likelihood stage diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub start: LogLik,
    pub loglik: LogLik,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: HierarchicalModel,
    pub nodes: Vec<NodeFit>,
    pub two_step: LogLik,
    pub joint: Option<JointFit>,
    pub n_obs: usize,
}

impl FitReport {
    /// Log-likelihood of the final stage.
    pub fn loglik(&self) -> f64 {
        self.joint
            .as_ref()
            .map_or(self.two_step.value, |j| j.loglik.value)
    }

    pub fn n_params(&self) -> usize {
        self.model.n_params()
    }

    pub fn aic(&self) -> f64 {
        aic(self.loglik(), self.n_params())
    }

    pub fn bic(&self) -> f64 {
        bic(self.loglik(), self.n_params(), self.n_obs)
    }

    pub fn converged(&self) -> bool {
        self.nodes.iter().all(|n| n.converged) && self.joint.as_ref().is_none_or(|j| j.converged)
    }

    pub fn node(&self, name: &str) -> Option<&NodeFit> {
        self.nodes
            .iter()
            .find(|n| n.path == name || n.path.rsplit('/').next() == Some(name))
    }
}

struct Fitted {
    node: Node,
    /// Input values the parent sees from this node, one per row.
    v: Vec<f64>,
}

fn fit_node<R: Rng + ?Sized>(
    skel: &Skeleton,
    path: &str,
    root: bool,
    u: &DataMatrix,
    opts: &FitOptions,
    rng: &mut R,
    report: &mut Vec<NodeFit>,
) -> Result<Fitted> {
    let path = if path.is_empty() {
        skel.name.clone()
    } else {
        format!("{path}/{}", skel.name)
    };
    let n = u.nrows();
    let (inputs, x) = match &skel.inputs {
        SkeletonInputs::Columns(c) => (Inputs::Columns(c.clone()), u.select_columns(c)),
        SkeletonInputs::Children(ch) => {
            let mut nodes = Vec::with_capacity(ch.len());
            let mut cols = Vec::with_capacity(ch.len());
            for c in ch {
                let f = fit_node(c, &path, false, u, opts, rng, report)?;
                nodes.push(f.node);
                cols.push(f.v);
            }
            (Inputs::Children(nodes), DataMatrix::from_columns(&cols)?)
        }
    };
    let d = skel.width();
    let fit = match &skel.fixed {
        Some(c) => {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.dim(),
                });
            }
            ClusterFit {
                copula: c.clone(),
                loglik: if d > 1 { total_log_pdf(c, &x) } else { 0.0 },
                method: "fixed",
                evaluations: 0,
                iterations: 0,
                converged: true,
            }
        }
        None => fit_cluster(skel.family, &x, &opts.simplex)?,
    };
    let copula = fit.copula.clone();
    let mut v = Vec::new();
    let mut provenance = String::from("none");
    let mut kendall = None;
    if !root {
        if d == 1 {
            v = x.column(0);
            kendall = Some(KendallFunction::identity());
            provenance = "identity".into();
        } else {
            let z: Vec<f64> = x
                .rows()
                .map(|row| copula.cdf_with_error(row, &opts.qmc).map(|r| r.0))
                .collect::<Result<_>>()?;
            let k = match opts.kendall {
                KendallMode::ClosedForm => closed_kendall(&copula, &path)?,
                KendallMode::Auto(m) => match copula.generator() {
                    Some(_) => closed_kendall(&copula, &path)?,
                    None => empirical_kendall_build_with(&copula, m, &opts.qmc, rng)?,
                },
                KendallMode::Empirical(m) => {
                    empirical_kendall_build_with(&copula, m, &opts.qmc, rng)?
                }
                KendallMode::Observed => KendallFunction::empirical(z.clone(), d)?,
            };
            provenance = match opts.kendall {
                KendallMode::Observed => format!("observed({n})"),
                _ => k.provenance(),
            };
            v = z
                .iter()
                .map(|&zi| {
                    let p = k.cdf(zi);
                    // the data ECDF reaches one at the sample maximum
                    let p = if opts.kendall == KendallMode::Observed {
                        p * n as f64 / (n + 1) as f64
                    } else {
                        p
                    };
                    clamp_unit(p)
                })
                .collect();
            kendall = Some(k);
        }
    }
    report.push(NodeFit {
        path,
        copula: copula.clone(),
        method: fit.method,
        kendall: provenance,
        loglik: fit.loglik,
        evaluations: fit.evaluations,
        iterations: fit.iterations,
        converged: fit.converged,
    });
    Ok(Fitted {
        node: Node {
            name: skel.name.clone(),
            copula,
            kendall,
            inputs,
        },
        v,
    })
}

fn closed_kendall(c: &CopulaSpec, path: &str) -> Result<KendallFunction> {
    let g = c.generator().ok_or_else(|| {
        Error::Unsupported(format!(
            "{path}: {} has no closed-form Kendall function; use an empirical mode",
            c.family().name()
        ))
    })?;
    KendallFunction::closed_form(g, c.dim())
}

/// Two-step (k-step for deeper trees) estimation: clusters first, then each nesting copula on the
/// Kendall-transformed values of the level below.
pub fn fit_two_step(skel: &Skeleton, u: &DataMatrix, opts: &FitOptions) -> Result<FitReport> {
    let n_vars = skel.n_vars();
    if u.ncols() < n_vars {
        return Err(Error::DimensionMismatch {
            expected: n_vars,
            got: u.ncols(),
        });
    }
    let mut rng = stream(opts.seed, 0, 0);
    let mut nodes = Vec::new();
    let root = fit_node(skel, "", true, u, opts, &mut rng, &mut nodes)?;
    let mut model = HierarchicalModel::new(root.node, u.ncols())?;
    model.set_qmc(opts.qmc);
    let two_step = model.loglik(u)?;
    Ok(FitReport {
        model,
        nodes,
        two_step,
        joint: None,
        n_obs: u.nrows(),
    })
}

/// Where a free Archimedean parameter lives in the tree.
struct Slot {
    path: Vec<usize>,
    family: Family,
    dim: usize,
}

fn collect_slots(
    node: &Node,
    path: &mut Vec<usize>,
    root: bool,
    force_frozen: bool,
    slots: &mut Vec<Slot>,
) -> Result<()> {
    match &node.copula {
        CopulaSpec::Archimedean(g, d) if g.family() != Family::Independence && *d > 1 => slots
            .push(Slot {
                path: path.clone(),
                family: g.family(),
                dim: *d,
            }),
        CopulaSpec::Gaussian(_) | CopulaSpec::StudentT(..) if !root && !force_frozen => {
            return Err(Error::Unsupported(format!(
                "joint MLE with elliptical node `{}` needs frozen Kendall functions",
                node.name
            )));
        }
        _ => {}
    }
    for (i, c) in node.children().iter().enumerate() {
        path.push(i);
        collect_slots(c, path, false, force_frozen, slots)?;
        path.pop();
    }
    Ok(())
}

fn node_at<'a>(root: &'a mut Node, path: &[usize]) -> &'a mut Node {
    let mut n = root;
    for &i in path {
        n = match &mut n.inputs {
            Inputs::Children(ch) => &mut ch[i],
            Inputs::Columns(_) => unreachable!(),
        };
    }
    n
}

/// Closed-form Kendall functions on every Archimedean node; other nodes keep what they have.
fn with_closed_forms(node: &Node, root: bool) -> Node {
    let mut out = node.clone();
    if !root && out.copula.dim() > 1 {
        if let Some(g) = out.copula.generator() {
            out.kendall = KendallFunction::closed_form(g, out.copula.dim()).ok();
        }
    }
    if let Inputs::Children(ch) = &node.inputs {
        out.inputs = Inputs::Children(ch.iter().map(|c| with_closed_forms(c, false)).collect());
    }
    out
}

/// Joint maximum likelihood over all Archimedean parameters, started from the two-step
/// estimates. Correlation matrices and degrees of freedom stay at their two-step values;
/// elliptical nested nodes are refused unless `force_frozen` keeps their Kendall functions fixed.
pub fn fit_joint_mle(
    report: &FitReport,
    u: &DataMatrix,
    opts: &FitOptions,
    force_frozen: bool,
) -> Result<FitReport> {
    let start_root = with_closed_forms(report.model.root(), true);
    let mut slots = Vec::new();
    collect_slots(&start_root, &mut Vec::new(), true, force_frozen, &mut slots)?;
    let n_vars = report.model.n_vars();
    let qmc = *report.model.qmc();
    let mut start_model = HierarchicalModel::new(start_root.clone(), n_vars)?;
    start_model.set_qmc(qmc);
    let start = start_model.loglik(u)?;

    let build = |x: &[f64]| -> Result<HierarchicalModel> {
        let mut root = start_root.clone();
        for (s, &eta) in slots.iter().zip(x) {
            let g = ArchimedeanGenerator::new(s.family, theta_from_eta(s.family, eta))?;
            let node = node_at(&mut root, &s.path);
            node.copula = CopulaSpec::archimedean(g, s.dim)?;
            if !s.path.is_empty() {
                node.kendall = Some(KendallFunction::closed_form(g, s.dim)?);
            }
        }
        let mut m = HierarchicalModel::new(root, n_vars)?;
        m.set_qmc(qmc);
        Ok(m)
    };
    let x0: Vec<f64> = slots
        .iter()
        .map(|s| {
            let mut r = start_root.clone();
            let theta = node_at(&mut r, &s.path)
                .copula
                .generator()
                .map_or(1.0, |g| g.theta());
            eta_from_theta(s.family, theta)
        })
        .collect();
    let objective = |x: &[f64]| match build(x).and_then(|m| m.loglik(u)) {
        Ok(l) => -l.value,
        Err(_) => f64::INFINITY,
    };
    let r = nelder_mead(objective, &x0, &opts.simplex);
    let (model, loglik) = if -r.value >= start.value {
        let m = build(&r.x)?;
        let l = m.loglik(u)?;
        if l.value >= start.value {
            (m, l)
        } else {
            (start_model, start)
        }
    } else {
        (start_model, start)
    };
    let mut nodes = report.nodes.clone();
    model.visit(&mut |node, path, _| {
        if let Some(nf) = nodes.iter_mut().find(|nf| nf.path == path) {
            if nf.copula != node.copula {
                nf.copula = node.copula.clone();
                nf.method = "joint-mle";
            }
            if node.copula.has_generator() && node.copula.dim() > 1 && nf.kendall != "none" {
                nf.kendall = "closed-form".into();
            }
        }
    });
    Ok(FitReport {
        model,
        nodes,
        two_step: report.two_step,
        joint: Some(JointFit {
            start,
            loglik,
            evaluations: r.evaluations,
            iterations: r.iterations,
            converged: r.converged,
        }),
        n_obs: report.n_obs,
    })
}

/// Estimation methods compared by [`simulation_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StudyMethod {
    TwoStepClosed,
    TwoStepEmpirical,
    JointMle,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 3] = [
        StudyMethod::TwoStepClosed,
        StudyMethod::TwoStepEmpirical,
        StudyMethod::JointMle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyMethod::TwoStepClosed => "two-step-closed",
            StudyMethod::TwoStepEmpirical => "two-step-empirical",
            StudyMethod::JointMle => "joint-mle",
        }
    }
}

/// Design of the four-dimensional study: two bivariate clusters under a nesting copula.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub clusters: [(Family, f64); 2],
    pub nesting: Vec<Family>,
    pub tau0: Vec<f64>,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub simplex: SimplexOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            clusters: [(Family::Clayton, 0.4), (Family::Gumbel, 0.7)],
            nesting: vec![Family::Clayton, Family::Gumbel, Family::Frank],
            tau0: vec![0.4, 0.7],
            sizes: vec![250, 500, 1000],
            replications: 100,
            seed: 2012,
            simplex: SimplexOptions::default(),
        }
    }
}

/// One (nesting family, τ₀, N) design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyDesign {
    pub nesting: Family,
    pub tau0: f64,
    pub n: usize,
}

impl StudyConfig {
    pub fn designs(&self) -> Vec<StudyDesign> {
        let mut out = Vec::new();
        for &nesting in &self.nesting {
            for &tau0 in &self.tau0 {
                for &n in &self.sizes {
                    out.push(StudyDesign { nesting, tau0, n });
                }
            }
        }
        out
    }
}

/// Summary of τ̂₀ over the replications of one design and method.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell {
    pub design: StudyDesign,
    pub method: StudyMethod,
    pub mse: f64,
    pub bias: f64,
    pub sd: f64,
    pub successes: usize,
    pub failures: usize,
}

/// The generating model of a study design.
pub fn study_model(cfg: &StudyConfig, d: &StudyDesign) -> Result<HierarchicalModel> {
    let leaf = |name: &str, cols: Vec<usize>, (f, t): (Family, f64)| -> Result<Node> {
        Ok(Node::leaf(
            name,
            cols,
            CopulaSpec::archimedean(ArchimedeanGenerator::from_tau(f, t)?, 2)?,
        ))
    };
    let root = Node::internal(
        "root",
        vec![
            leaf("c1", vec![0, 1], cfg.clusters[0])?,
            leaf("c2", vec![2, 3], cfg.clusters[1])?,
        ],
        CopulaSpec::archimedean(ArchimedeanGenerator::from_tau(d.nesting, d.tau0)?, 2)?,
    );
    HierarchicalModel::new(root, 4)
}

fn root_tau(r: &FitReport) -> f64 {
    r.model.root().copula.generator().map_or(0.0, |g| g.tau())
}

/// Estimates and likelihoods of one study replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOutcome {
    /// τ̂₀ of each method, in [`StudyMethod::ALL`] order.
    pub tau: [f64; 3],
    pub two_step_loglik: f64,
    pub joint_loglik: f64,
}

/// τ̂₀ of each method for one replication, in [`StudyMethod::ALL`] order.
pub fn study_replication(cfg: &StudyConfig, design_index: usize, rep: usize) -> Result<[f64; 3]> {
    study_replication_full(cfg, design_index, rep).map(|o| o.tau)
}

/// One replication on stream (seed, design, rep), with the closed-form two-step and joint
/// log-likelihoods.
pub fn study_replication_full(
    cfg: &StudyConfig,
    design_index: usize,
    rep: usize,
) -> Result<StudyOutcome> {
    let designs = cfg.designs();
    let d = designs
        .get(design_index)
        .ok_or(Error::Parameter(format!("no design {design_index}")))?;
    let model = study_model(cfg, d)?;
    let mut rng = stream(cfg.seed, design_index as u32, rep as u32);
    let u = model.sample(d.n, SampleMethod::Exact, &mut rng)?;
    let skel = Skeleton::from_node(model.root());
    let closed = FitOptions {
        kendall: KendallMode::ClosedForm,
        simplex: cfg.simplex,
        ..FitOptions::default()
    };
    let emp = FitOptions {
        kendall: KendallMode::Observed,
        ..closed
    };
    let a = fit_two_step(&skel, &u, &closed)?;
    let b = fit_two_step(&skel, &u, &emp)?;
    let c = fit_joint_mle(&a, &u, &closed, false)?;
    Ok(StudyOutcome {
        tau: [root_tau(&a), root_tau(&b), root_tau(&c)],
        two_step_loglik: a.two_step.value,
        joint_loglik: c.loglik(),
    })
}

/// Aggregates per-replication estimates into cells; failed replications are `None`.
pub fn summarize_study(cfg: &StudyConfig, results: &[(usize, Option<[f64; 3]>)]) -> Vec<StudyCell> {
    let designs = cfg.designs();
    let mut out = Vec::new();
    for (i, d) in designs.iter().enumerate() {
        for (m, &method) in StudyMethod::ALL.iter().enumerate() {
            let mut est = Vec::new();
            let mut failures = 0;
            for (di, r) in results {
                if *di != i {
                    continue;
                }
                match r {
                    Some(v) if v[m].is_finite() => est.push(v[m]),
                    _ => failures += 1,
                }
            }
            if est.is_empty() && failures == 0 {
                continue;
            }
            let n = est.len() as f64;
            let bias = est.iter().map(|t| t - d.tau0).sum::<f64>() / n;
            let mse = est.iter().map(|t| (t - d.tau0).powi(2)).sum::<f64>() / n;
            let sd = crate::stats::std_dev(&est);
            out.push(StudyCell {
                design: *d,
                method,
                mse,
                bias,
                sd,
                successes: est.len(),
                failures,
            });
        }
    }
    out
}

/// Runs every design and replication sequentially.
pub fn simulation_study(cfg: &StudyConfig) -> Vec<StudyCell> {
    let mut results = Vec::new();
    for i in 0..cfg.designs().len() {
        for rep in 0..cfg.replications {
            results.push((i, study_replication(cfg, i, rep).ok()));
        }
    }
    summarize_study(cfg, &results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn clayton_model(nest: CopulaSpec) -> HierarchicalModel {
        let c = CopulaSpec::archimedean(ArchimedeanGenerator::clayton(2.0).unwrap(), 2).unwrap();
        let g = CopulaSpec::archimedean(ArchimedeanGenerator::gumbel(2.0).unwrap(), 2).unwrap();
        let root = Node::internal(
            "root",
            vec![
                Node::leaf("a", vec![0, 1], c),
                Node::leaf("b", vec![2, 3], g),
            ],
            nest,
        );
        HierarchicalModel::new(root, 4).unwrap()
    }

    #[test]
    fn pseudo_observation_examples() {
        let x = DataMatrix::from_columns(&[vec![3.2, -1.0, 0.5], vec![1.0, 1.0, 2.0]]).unwrap();
        let u = pseudo_observations(&x).unwrap();
        assert_eq!(u.column(0), vec![0.75, 0.25, 0.5]);
        assert_eq!(u.column(1), vec![0.375, 0.375, 0.75]);
        let c = DataMatrix::from_columns(&[vec![1.0, 2.0], vec![4.0, 4.0]]).unwrap();
        assert_eq!(pseudo_observations(&c), Err(Error::ConstantColumn(1)));
    }

    #[test]
    fn transforms_round_trip() {
        for (f, t) in [
            (Family::Clayton, 2.0),
            (Family::Gumbel, 3.5),
            (Family::Frank, -4.0),
        ] {
            assert!((theta_from_eta(f, eta_from_theta(f, t)) - t).abs() < 1e-12);
        }
        assert_eq!(theta_from_eta(Family::Frank, 0.0), FRANK_DEAD_ZONE);
    }

    #[test]
    fn clayton_cluster_recovery() {
        let c = CopulaSpec::archimedean(ArchimedeanGenerator::clayton(2.0).unwrap(), 2).unwrap();
        let mut inside = 0;
        for rep in 0..20 {
            let u = c.sample(1000, &mut stream(40, rep, 0)).unwrap();
            let f = fit_cluster(CopulaFamily::Clayton, &u, &SimplexOptions::default()).unwrap();
            let theta = f.copula.generator().unwrap().theta();
            if (1.7..=2.3).contains(&theta) {
                inside += 1;
            }
            assert!(f.converged);
        }
        assert!(inside >= 17, "{inside}");
        let ind = fit_cluster(
            CopulaFamily::Independence,
            &c.sample(10, &mut stream(1, 1, 1)).unwrap(),
            &SimplexOptions::default(),
        )
        .unwrap();
        assert_eq!(ind.loglik, 0.0);
    }

    #[test]
    fn student_t_cluster_recovery() {
        let t = CopulaSpec::student_t(CorrelationMatrix::bivariate(0.5).unwrap(), 5.0).unwrap();
        let u = t.sample(2000, &mut stream(41, 0, 0)).unwrap();
        let f = fit_cluster(CopulaFamily::StudentT, &u, &SimplexOptions::default()).unwrap();
        let CopulaSpec::StudentT(r, nu) = f.copula else {
            panic!()
        };
        assert!((r.get(0, 1) - 0.5).abs() < 0.05);
        assert!((3.5..=8.0).contains(&nu), "{nu}");
    }

    #[test]
    fn two_step_and_joint() {
        let nest = CopulaSpec::archimedean(
            ArchimedeanGenerator::from_tau(Family::Frank, 0.4).unwrap(),
            2,
        )
        .unwrap();
        let m = clayton_model(nest);
        let u = m
            .sample(1000, SampleMethod::Exact, &mut stream(42, 0, 0))
            .unwrap();
        let skel = Skeleton::from_node(m.root());
        let closed = FitOptions {
            kendall: KendallMode::ClosedForm,
            ..FitOptions::default()
        };
        let a = fit_two_step(&skel, &u, &closed).unwrap();
        assert_eq!(a.nodes.len(), 3);
        assert!((root_tau(&a) - 0.4).abs() < 0.07);
        let b = fit_two_step(
            &skel,
            &u,
            &FitOptions {
                kendall: KendallMode::Empirical(100_000),
                ..closed
            },
        )
        .unwrap();
        assert!((root_tau(&a) - root_tau(&b)).abs() < 0.02);
        assert_eq!(b.node("a").unwrap().kendall, "empirical(100000)");
        let o = fit_two_step(
            &skel,
            &u,
            &FitOptions {
                kendall: KendallMode::Observed,
                ..closed
            },
        )
        .unwrap();
        assert!((root_tau(&a) - root_tau(&o)).abs() < 0.05);
        let j = fit_joint_mle(&a, &u, &closed, false).unwrap();
        let jf = j.joint.as_ref().unwrap();
        assert_eq!(jf.start, a.two_step);
        assert!(jf.loglik.value >= a.two_step.value);
        assert!(j.aic() <= a.aic());
    }

    #[test]
    fn independence_fit_is_trivial() {
        let ind = CopulaSpec::independence(2);
        let root = Node::internal(
            "root",
            vec![
                Node::leaf("a", vec![0, 1], ind.clone()),
                Node::leaf("b", vec![2, 3], ind.clone()),
            ],
            ind,
        );
        let m = HierarchicalModel::new(root, 4).unwrap();
        let u = m
            .sample(300, SampleMethod::Exact, &mut stream(43, 0, 0))
            .unwrap();
        let r = fit_two_step(&Skeleton::from_node(m.root()), &u, &FitOptions::default()).unwrap();
        assert_eq!(r.two_step.value, 0.0);
        let j = fit_joint_mle(&r, &u, &FitOptions::default(), false).unwrap();
        assert_eq!(j.loglik(), 0.0);
        assert_eq!(j.joint.unwrap().evaluations, 1);
    }

    #[test]
    fn elliptical_nodes_need_frozen_flag() {
        let gauss = CopulaSpec::gaussian(CorrelationMatrix::bivariate(0.5).unwrap());
        let skel = Skeleton::internal(
            "root",
            CopulaFamily::Clayton,
            vec![
                Skeleton::leaf("g", CopulaFamily::Gaussian, vec![0, 1]),
                Skeleton::leaf("s", CopulaFamily::Independence, vec![2]),
            ],
        );
        let u = gauss.sample(400, &mut stream(44, 0, 0)).unwrap();
        let third: Vec<f64> = (0..400).map(|i| (i as f64 + 0.5) / 400.0).collect();
        let u = DataMatrix::from_columns(&[u.column(0), u.column(1), third]).unwrap();
        let opts = FitOptions {
            kendall: KendallMode::Auto(5000),
            ..FitOptions::default()
        };
        assert!(fit_two_step(
            &skel,
            &u,
            &FitOptions {
                kendall: KendallMode::ClosedForm,
                ..opts
            }
        )
        .is_err());
        let r = fit_two_step(&skel, &u, &opts).unwrap();
        assert_eq!(r.node("g").unwrap().kendall, "empirical(5000)");
        assert!(fit_joint_mle(&r, &u, &opts, false).is_err());
        let j = fit_joint_mle(&r, &u, &opts, true).unwrap();
        assert!(j.loglik() >= r.two_step.value);
    }

    #[test]
    fn empty_study() {
        let cfg = StudyConfig {
            replications: 0,
            ..StudyConfig::default()
        };
        assert!(simulation_study(&cfg).is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn ranks_ignore_monotone_maps(seed in any::<u64>()) {
            let mut r = stream(seed, 0, 0);
            let x = crate::copulas::CopulaSpec::independence(3).sample(50, &mut r).unwrap();
            let y = DataMatrix::from_columns(&[
                x.column(0).iter().map(|v| v.ln()).collect::<Vec<_>>(),
                x.column(1).iter().map(|v| v.powi(3) * 10.0 - 4.0).collect(),
                x.column(2).iter().map(|v| (v * 7.0).exp()).collect(),
            ]).unwrap();
            prop_assert_eq!(pseudo_observations(&x).unwrap(), pseudo_observations(&y).unwrap());
        }
    }
}
