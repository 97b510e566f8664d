//! Hierarchical Kendall copulas: cluster copulas joined through their Kendall
//! transforms by nesting copulas, on an arbitrary number of levels.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::copulas::{clamp_unit, CopulaSpec, QmcOptions};
use crate::error::{Error, Result, StructureError};
use crate::kendall::{empirical_kendall_build_with, KendallFunction};
use crate::levelset::{self, ToleranceRule, DEFAULT_MAX_ATTEMPTS};
use crate::matrix::DataMatrix;

/// Densities below this floor are clamped inside log-likelihoods.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// What a node joins: data columns (a cluster) or lower-level nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Columns(Vec<usize>),
    Children(Vec<Node>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub copula: CopulaSpec,
    /// Required on every node except the root.
    pub kendall: Option<KendallFunction>,
    pub inputs: Inputs,
}

impl Node {
    /// A cluster over `columns`; Archimedean and independence copulas get their closed-form
    /// Kendall function attached.
    pub fn leaf(name: impl Into<String>, columns: Vec<usize>, copula: CopulaSpec) -> Self {
        let kendall = closed_kendall(&copula);
        Node {
            name: name.into(),
            copula,
            kendall,
            inputs: Inputs::Columns(columns),
        }
    }

    /// A single-variable cluster with the identity copula.
    pub fn singleton(name: impl Into<String>, column: usize) -> Self {
        Node::leaf(name, vec![column], CopulaSpec::independence(1))
    }

    pub fn internal(name: impl Into<String>, children: Vec<Node>, copula: CopulaSpec) -> Self {
        let kendall = closed_kendall(&copula);
        Node {
            name: name.into(),
            copula,
            kendall,
            inputs: Inputs::Children(children),
        }
    }

    pub fn with_kendall(mut self, k: KendallFunction) -> Self {
        self.kendall = Some(k);
        self
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.inputs, Inputs::Columns(_))
    }

    pub fn width(&self) -> usize {
        match &self.inputs {
            Inputs::Columns(c) => c.len(),
            Inputs::Children(c) => c.len(),
        }
    }

    pub fn children(&self) -> &[Node] {
        match &self.inputs {
            Inputs::Children(c) => c,
            Inputs::Columns(_) => &[],
        }
    }

    /// All data columns below this node, in tree order.
    pub fn columns(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns(&self, out: &mut Vec<usize>) {
        match &self.inputs {
            Inputs::Columns(c) => out.extend_from_slice(c),
            Inputs::Children(ch) => ch.iter().for_each(|c| c.collect_columns(out)),
        }
    }

    fn height(&self) -> usize {
        1 + self.children().iter().map(Node::height).max().unwrap_or(0)
    }

    fn kendall_ref(&self) -> Result<&KendallFunction> {
        self.kendall.as_ref().ok_or_else(|| {
            Error::Structure(vec![StructureError::MissingKendall {
                path: self.name.clone(),
            }])
        })
    }

    /// Input values of this node for one data row.
    fn input_values(&self, row: &[f64], qmc: &QmcOptions, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        match &self.inputs {
            Inputs::Columns(c) => out.extend(c.iter().map(|&j| row[j])),
            Inputs::Children(ch) => {
                for child in ch {
                    out.push(child.pit(row, qmc)?);
                }
            }
        }
        Ok(())
    }

    /// V = K(C(inputs)) for this (non-root) node.
    fn pit(&self, row: &[f64], qmc: &QmcOptions) -> Result<f64> {
        if let Inputs::Columns(c) = &self.inputs {
            if c.len() == 1 {
                return Ok(row[c[0]]);
            }
        }
        let mut x = Vec::with_capacity(self.width());
        self.input_values(row, qmc, &mut x)?;
        let z = self.copula.cdf_with_error(&x, qmc)?.0;
        Ok(clamp_unit(self.kendall_ref()?.cdf(z)))
    }

    /// Sum of ln c over this node and everything below it; returns the node's input values in `x`.
    fn log_density(&self, row: &[f64], qmc: &QmcOptions, x: &mut Vec<f64>) -> Result<f64> {
        let mut total = 0.0;
        x.clear();
        match &self.inputs {
            Inputs::Columns(c) => x.extend(c.iter().map(|&j| clamp_unit(row[j]))),
            Inputs::Children(ch) => {
                let mut tmp = Vec::new();
                for child in ch {
                    total += child.log_density(row, qmc, &mut tmp)?;
                    let v = if child.width() == 1 && child.is_leaf() {
                        tmp[0]
                    } else {
                        let z = child.copula.cdf_with_error(&tmp, qmc)?.0;
                        clamp_unit(child.kendall_ref()?.cdf(z))
                    };
                    x.push(v);
                }
            }
        }
        if self.width() > 1 {
            total += self.copula.log_pdf(x)?;
        }
        Ok(total)
    }

    fn for_each<'a>(&'a self, path: &str, f: &mut dyn FnMut(&'a Node, &str, bool)) {
        self.walk(path, true, f);
    }

    fn walk<'a>(&'a self, parent: &str, root: bool, f: &mut dyn FnMut(&'a Node, &str, bool)) {
        let path = if parent.is_empty() {
            self.name.clone()
        } else {
            format!("{parent}/{}", self.name)
        };
        f(self, &path, root);
        for c in self.children() {
            c.walk(&path, false, f);
        }
    }
}

fn closed_kendall(c: &CopulaSpec) -> Option<KendallFunction> {
    if c.dim() == 1 {
        return Some(KendallFunction::identity());
    }
    c.generator()
        .and_then(|g| KendallFunction::closed_form(g, c.dim()).ok())
}

/// Simulation method for [`HierarchicalModel::sample`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMethod {
    /// Level-set sampling by conditional inversion; every nested copula needs a generator.
    Exact,
    /// Batch rejection sampling on every nested node.
    Rejection(ToleranceRule),
    /// Exact where a generator exists, rejection elsewhere.
    Auto(ToleranceRule),
}

impl Default for SampleMethod {
    fn default() -> Self {
        SampleMethod::Auto(ToleranceRule::default())
    }
}

/// Log-likelihood with the number of rows whose density hit the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    root: Node,
    n_vars: usize,
    qmc: QmcOptions,
    max_attempts: u64,
}

impl HierarchicalModel {
    /// Validates `root` as a model over variables `0..n_vars`.
    pub fn new(root: Node, n_vars: usize) -> Result<Self> {
        validate_model(&root, n_vars)?;
        Ok(HierarchicalModel {
            root,
            n_vars,
            qmc: QmcOptions::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        })
    }

    /// Builds a model, first attaching empirical Kendall functions of size `mc` to nodes without
    /// a closed form.
    pub fn with_empirical_kendall<R: Rng + ?Sized>(
        mut root: Node,
        n_vars: usize,
        mc: usize,
        qmc: &QmcOptions,
        rng: &mut R,
    ) -> Result<Self> {
        attach_missing_kendall(&mut root, true, mc, qmc, rng)?;
        let mut m = Self::new(root, n_vars)?;
        m.qmc = *qmc;
        Ok(m)
    }

    pub fn set_qmc(&mut self, qmc: QmcOptions) {
        self.qmc = qmc;
    }

    pub fn qmc(&self) -> &QmcOptions {
        &self.qmc
    }

    pub fn set_max_attempts(&mut self, n: u64) {
        self.max_attempts = n;
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Number of levels, counting the root.
    pub fn levels(&self) -> usize {
        self.root.height()
    }

    /// Total number of copula parameters.
    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.root
            .for_each("", &mut |node, _, _| n += node.copula.n_params());
        n
    }

    /// Visits every node with its path and a root flag.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Node, &str, bool)) {
        self.root.for_each("", f);
    }

    /// Whether every nested copula admits exact level-set sampling.
    pub fn all_archimedean(&self) -> bool {
        let mut ok = true;
        self.root.for_each("", &mut |node, _, root| {
            if !root && node.width() > 1 && !node.copula.has_generator() {
                ok = false;
            }
        });
        ok
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_vars {
            return Err(Error::DimensionMismatch {
                expected: self.n_vars,
                got: row.len(),
            });
        }
        Ok(())
    }

    /// V-values of the root's children for one row.
    pub fn pit_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_row(row)?;
        let clamped: Vec<f64> = row.iter().map(|&x| clamp_unit(x)).collect();
        let mut v = Vec::new();
        match &self.root.inputs {
            Inputs::Children(_) => self.root.input_values(&clamped, &self.qmc, &mut v)?,
            Inputs::Columns(c) => v.extend(c.iter().map(|&j| clamped[j])),
        }
        Ok(v)
    }

    /// ln c_K(u) for one row.
    pub fn log_density(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        let mut x = Vec::new();
        let v = self.root.log_density(row, &self.qmc, &mut x)?;
        if v.is_nan() {
            return Err(Error::NonFinite("model density"));
        }
        Ok(v)
    }

    pub fn density(&self, row: &[f64]) -> Result<f64> {
        self.log_density(row).map(f64::exp)
    }

    /// Σ ln c_K over rows, with each density floored at [`DENSITY_FLOOR`].
    pub fn loglik(&self, u: &DataMatrix) -> Result<LogLik> {
        let floor = DENSITY_FLOOR.ln();
        let mut value = 0.0;
        let mut clamped = 0;
        for row in u.rows() {
            let l = self.log_density(row)?;
            if l < floor {
                clamped += 1;
                value += floor;
            } else {
                value += l;
            }
        }
        Ok(LogLik { value, clamped })
    }

    /// `n` draws from the model.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        method: SampleMethod,
        rng: &mut R,
    ) -> Result<DataMatrix> {
        if method == SampleMethod::Exact && !self.all_archimedean() {
            return Err(Error::Unsupported(
                "exact sampling needs Archimedean or independence clusters; use rejection".into(),
            ));
        }
        let root = &self.root;
        let mut top = DataMatrix::zeros(n, root.width());
        let mut buf = vec![0.0; root.width()];
        for i in 0..n {
            root.copula.sample_into(rng, &mut buf)?;
            top.row_mut(i).copy_from_slice(&buf);
        }
        self.fill_from_root_values(&top, method, rng)
    }

    /// Completes samples given the root copula's draws (one column per root input), as in the
    /// second half of Algorithm 1.
    pub fn sample_with_root_values<R: Rng + ?Sized>(
        &self,
        v: &DataMatrix,
        method: SampleMethod,
        rng: &mut R,
    ) -> Result<DataMatrix> {
        if v.ncols() != self.root.width() {
            return Err(Error::DimensionMismatch {
                expected: self.root.width(),
                got: v.ncols(),
            });
        }
        self.fill_from_root_values(v, method, rng)
    }

    fn fill_from_root_values<R: Rng + ?Sized>(
        &self,
        v: &DataMatrix,
        method: SampleMethod,
        rng: &mut R,
    ) -> Result<DataMatrix> {
        let mut out = DataMatrix::zeros(v.nrows(), self.n_vars);
        self.distribute(&self.root, v, method, rng, &mut out)?;
        Ok(out)
    }

    /// Writes the node's input values `x` (rows) into the output, recursing into children.
    fn distribute<R: Rng + ?Sized>(
        &self,
        node: &Node,
        x: &DataMatrix,
        method: SampleMethod,
        rng: &mut R,
        out: &mut DataMatrix,
    ) -> Result<()> {
        match &node.inputs {
            Inputs::Columns(c) => {
                for i in 0..x.nrows() {
                    for (a, &j) in c.iter().enumerate() {
                        out.set(i, j, x.get(i, a));
                    }
                }
            }
            Inputs::Children(ch) => {
                for (a, child) in ch.iter().enumerate() {
                    let vals = x.column(a);
                    let inner = self.child_inputs(child, &vals, method, rng)?;
                    self.distribute(child, &inner, method, rng, out)?;
                }
            }
        }
        Ok(())
    }

    /// Inputs of `node` whose V-values are `v`: z = K⁻¹(v), then a draw on {C = z}.
    fn child_inputs<R: Rng + ?Sized>(
        &self,
        node: &Node,
        v: &[f64],
        method: SampleMethod,
        rng: &mut R,
    ) -> Result<DataMatrix> {
        let d = node.width();
        if d == 1 && node.is_leaf() {
            return DataMatrix::from_vec(v.len(), 1, v.to_vec());
        }
        let k = node.kendall_ref()?;
        let z: Vec<f64> = v
            .iter()
            .map(|&p| k.inverse(clamp_unit(p)).map(clamp_unit))
            .collect::<Result<_>>()?;
        let exact = match method {
            SampleMethod::Exact => true,
            SampleMethod::Rejection(_) => false,
            SampleMethod::Auto(_) => node.copula.has_generator(),
        };
        if exact {
            let g = node.copula.generator().ok_or_else(|| {
                Error::Unsupported(format!(
                    "node {} has no generator for exact sampling",
                    node.name
                ))
            })?;
            let mut m = DataMatrix::zeros(z.len(), d);
            for (i, &zi) in z.iter().enumerate() {
                let s = levelset::sample_levelset_conditional(&g, d, zi, rng)?;
                m.row_mut(i).copy_from_slice(&s.u);
            }
            return Ok(m);
        }
        let rule = match method {
            SampleMethod::Rejection(r) | SampleMethod::Auto(r) => r,
            SampleMethod::Exact => unreachable!(),
        };
        rejection_batch(&node.copula, &z, rule, self.max_attempts, &self.qmc, rng)
    }

    /// Monte Carlo estimate and standard error of the bivariate density of variables `k` and
    /// `l`, which must sit in different clusters under a common parent.
    pub fn cross_cluster_margin_pdf<R: Rng + ?Sized>(
        &self,
        k: usize,
        l: usize,
        uk: f64,
        ul: f64,
        mc: usize,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        let (parent, ci, pk) = self.locate(k)?;
        let (parent2, cj, pl) = self.locate(l)?;
        if ci == cj && core::ptr::eq(parent, parent2) {
            return Err(Error::Unsupported(format!(
                "variables {k} and {l} share a cluster; use the cluster copula margin"
            )));
        }
        if !core::ptr::eq(parent, parent2) {
            return Err(Error::Unsupported(format!(
                "variables {k} and {l} are not in sibling clusters"
            )));
        }
        let pair = bivariate_margin(&parent.copula, ci, cj)?;
        let kids = parent.children();
        let (a, b) = (&kids[ci], &kids[cj]);
        if matches!(pair, CopulaSpec::Independence(_)) {
            return Ok((1.0, 0.0));
        }
        if a.width() == 1 && b.width() == 1 {
            return Ok((pair.pdf(&[clamp_unit(uk), clamp_unit(ul)])?, 0.0));
        }
        let mc = mc.max(2);
        let wa = cluster_given(a, pk, uk, mc, rng)?;
        let wb = cluster_given(b, pl, ul, mc, rng)?;
        let mut vals = Vec::with_capacity(mc);
        for i in 0..mc {
            let va = leaf_pit(a, wa.row(i), &self.qmc)?;
            let vb = leaf_pit(b, wb.row(i), &self.qmc)?;
            vals.push(pair.pdf(&[va, vb])?);
        }
        let mean = crate::stats::mean(&vals);
        let se = crate::stats::std_dev(&vals) / (mc as f64).sqrt();
        Ok((mean, se))
    }

    /// (parent node, index of the leaf among its children, position inside the leaf).
    fn locate(&self, var: usize) -> Result<(&Node, usize, usize)> {
        fn go(node: &Node, var: usize) -> Option<(&Node, usize, usize)> {
            for (i, c) in node.children().iter().enumerate() {
                match &c.inputs {
                    Inputs::Columns(cols) => {
                        if let Some(p) = cols.iter().position(|&x| x == var) {
                            return Some((node, i, p));
                        }
                    }
                    Inputs::Children(_) => {
                        if let Some(r) = go(c, var) {
                            return Some(r);
                        }
                    }
                }
            }
            None
        }
        go(&self.root, var).ok_or(Error::DimensionMismatch {
            expected: self.n_vars,
            got: var + 1,
        })
    }
}

fn cluster_given<R: Rng + ?Sized>(
    leaf: &Node,
    pos: usize,
    u: f64,
    n: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    if leaf.width() == 1 {
        return DataMatrix::from_vec(n, 1, vec![clamp_unit(u); n]);
    }
    leaf.copula.sample_given(pos, u, n, rng)
}

fn leaf_pit(leaf: &Node, w: &[f64], qmc: &QmcOptions) -> Result<f64> {
    if w.len() == 1 {
        return Ok(w[0]);
    }
    let z = leaf.copula.cdf_with_error(w, qmc)?.0;
    Ok(clamp_unit(leaf.kendall_ref()?.cdf(z)))
}

/// The bivariate margin of `c` on coordinates `i`, `j`.
pub fn bivariate_margin(c: &CopulaSpec, i: usize, j: usize) -> Result<CopulaSpec> {
    Ok(match c {
        CopulaSpec::Independence(_) => CopulaSpec::Independence(2),
        CopulaSpec::Archimedean(g, _) => CopulaSpec::archimedean(*g, 2)?,
        CopulaSpec::Gaussian(r) => CopulaSpec::gaussian(r.submatrix(&[i, j])?),
        CopulaSpec::StudentT(r, nu) => CopulaSpec::student_t(r.submatrix(&[i, j])?, *nu)?,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key(u64, usize);

fn key(z: f64, j: usize) -> Key {
    // z is positive, so the bit pattern orders like the value
    Key(z.to_bits(), j)
}

/// Algorithm 5 for one node: draws from `c` are assigned to the pending target level nearest
/// to their own C-value, provided they fall inside that target's band.
pub fn rejection_batch<R: Rng + ?Sized>(
    c: &CopulaSpec,
    z: &[f64],
    rule: ToleranceRule,
    max_attempts: u64,
    qmc: &QmcOptions,
    rng: &mut R,
) -> Result<DataMatrix> {
    let d = c.dim();
    let mut out = DataMatrix::zeros(z.len(), d);
    let mut pending: BTreeSet<Key> = z.iter().enumerate().map(|(j, &zj)| key(zj, j)).collect();
    let mut u = vec![0.0; d];
    let mut since = 0u64;
    while !pending.is_empty() {
        if since >= max_attempts {
            return Err(Error::AttemptsExhausted {
                attempts: max_attempts,
            });
        }
        since += 1;
        c.sample_into(rng, &mut u)?;
        let cz = c.cdf_with_error(&u, qmc)?.0;
        let probe = key(cz, 0);
        let below = pending.range(..probe).next_back().copied();
        let above = pending.range(probe..).next().copied();
        let nearest = match (below, above) {
            (Some(b), Some(a)) => {
                let db = cz - z[b.1];
                let da = z[a.1] - cz;
                if db <= da {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!(),
        };
        let target = z[nearest.1];
        if rule.accepts(cz, target) {
            out.row_mut(nearest.1).copy_from_slice(&u);
            pending.remove(&nearest);
            since = 0;
        }
    }
    Ok(out)
}

fn attach_missing_kendall<R: Rng + ?Sized>(
    node: &mut Node,
    root: bool,
    mc: usize,
    qmc: &QmcOptions,
    rng: &mut R,
) -> Result<()> {
    if let Inputs::Children(ch) = &mut node.inputs {
        for c in ch.iter_mut() {
            attach_missing_kendall(c, false, mc, qmc, rng)?;
        }
    }
    if !root && node.kendall.is_none() {
        node.kendall = Some(empirical_kendall_build_with(&node.copula, mc, qmc, rng)?);
    }
    Ok(())
}

/// Checks the structural invariants of a model over `n_vars` variables, reporting every
/// violation found.
pub fn validate_model(root: &Node, n_vars: usize) -> Result<()> {
    let mut errors = Vec::new();
    let mut owners: Vec<Vec<String>> = vec![Vec::new(); n_vars];
    root.for_each("", &mut |node, path, is_root| {
        let width = node.width();
        if width == 0 {
            errors.push(StructureError::Empty { path: path.into() });
            return;
        }
        if node.copula.dim() != width {
            errors.push(StructureError::Dimension {
                path: path.into(),
                copula_dim: node.copula.dim(),
                inputs: width,
            });
        }
        if let Inputs::Columns(cols) = &node.inputs {
            for &v in cols {
                if v >= n_vars {
                    errors.push(StructureError::OutOfRange {
                        path: path.into(),
                        variable: v,
                        n_vars,
                    });
                } else {
                    owners[v].push(path.into());
                }
            }
        }
        if is_root {
            return;
        }
        match &node.kendall {
            None => {
                if !(width == 1 && node.is_leaf()) {
                    errors.push(StructureError::MissingKendall { path: path.into() });
                }
            }
            Some(k) => {
                if k.dim() != node.copula.dim() {
                    errors.push(StructureError::KendallMismatch {
                        path: path.into(),
                        reason: format!(
                            "Kendall function of dimension {} on a {}-dimensional copula",
                            k.dim(),
                            node.copula.dim()
                        ),
                    });
                } else if let (Some(kg), Some(cg)) = (k.generator(), node.copula.generator()) {
                    if k.dim() > 1 && kg != cg {
                        errors.push(StructureError::KendallMismatch {
                            path: path.into(),
                            reason: "closed-form Kendall function has a different generator".into(),
                        });
                    }
                }
            }
        }
    });
    for (v, o) in owners.iter().enumerate() {
        match o.len() {
            0 => errors.push(StructureError::Gap { variable: v }),
            1 => {}
            _ => errors.push(StructureError::Overlap {
                variable: v,
                paths: o.clone(),
            }),
        }
    }
    let mut widths = Vec::new();
    level_widths(root, &mut widths);
    for level in 1..widths.len() {
        if widths[level] > widths[level - 1] {
            errors.push(StructureError::WidthOrder {
                level: level + 1,
                width: widths[level],
                previous: widths[level - 1],
            });
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Structure(errors))
    }
}

/// Number of nodes per height above the leaves (index 0 holds the clusters).
fn level_widths(node: &Node, widths: &mut Vec<usize>) {
    let h = node.height() - 1;
    if widths.len() <= h {
        widths.resize(h + 1, 0);
    }
    widths[h] += 1;
    for c in node.children() {
        level_widths(c, widths);
    }
}

/// The V-matrix of the root's inputs, one row per data row.
pub fn nesting_pit(m: &HierarchicalModel, u: &DataMatrix) -> Result<DataMatrix> {
    let mut out = DataMatrix::zeros(u.nrows(), m.root().width());
    for (i, row) in u.rows().enumerate() {
        out.row_mut(i).copy_from_slice(&m.pit_row(row)?);
    }
    Ok(out)
}

pub fn model_density(m: &HierarchicalModel, row: &[f64]) -> Result<f64> {
    m.density(row)
}

pub fn model_loglik(m: &HierarchicalModel, u: &DataMatrix) -> Result<LogLik> {
    m.loglik(u)
}

pub fn model_sample<R: Rng + ?Sized>(
    m: &HierarchicalModel,
    n: usize,
    method: SampleMethod,
    rng: &mut R,
) -> Result<DataMatrix> {
    m.sample(n, method, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::CorrelationMatrix;
    use crate::generators::ArchimedeanGenerator;
    use crate::rng::{open01, stream};
    use crate::stats::{kendall_tau, ks_one_sample, ks_two_sample};

    fn arch(g: ArchimedeanGenerator, d: usize) -> CopulaSpec {
        CopulaSpec::archimedean(g, d).unwrap()
    }

    fn four_dim(nest: CopulaSpec) -> HierarchicalModel {
        let c = ArchimedeanGenerator::clayton(2.0).unwrap();
        let root = Node::internal(
            "root",
            vec![
                Node::leaf("a", vec![0, 1], arch(c, 2)),
                Node::leaf("b", vec![2, 3], arch(c, 2)),
            ],
            nest,
        );
        HierarchicalModel::new(root, 4).unwrap()
    }

    fn structure_errors(r: Result<HierarchicalModel>) -> Vec<StructureError> {
        match r {
            Err(Error::Structure(e)) => e,
            other => panic!("expected structure errors, got {other:?}"),
        }
    }

    #[test]
    fn validation() {
        let ind = |d| CopulaSpec::independence(d);
        let ok = Node::internal(
            "root",
            vec![
                Node::leaf("a", vec![0, 1], ind(2)),
                Node::leaf("b", vec![2, 3], ind(2)),
            ],
            ind(2),
        );
        assert!(HierarchicalModel::new(ok, 4).is_ok());

        let overlap = Node::internal(
            "root",
            vec![
                Node::leaf("a", vec![0, 1], ind(2)),
                Node::leaf("b", vec![1, 2], ind(2)),
            ],
            ind(2),
        );
        let e = structure_errors(HierarchicalModel::new(overlap, 3));
        assert!(e
            .iter()
            .any(|x| matches!(x, StructureError::Overlap { variable: 1, .. })));

        let dim = Node::internal(
            "root",
            vec![Node::leaf("a", vec![0, 1], ind(3)), Node::singleton("b", 2)],
            ind(2),
        );
        let e = structure_errors(HierarchicalModel::new(dim, 3));
        assert!(e
            .iter()
            .any(|x| matches!(x, StructureError::Dimension { path, .. } if path == "root/a")));

        let gap = Node::internal(
            "root",
            vec![Node::singleton("a", 0), Node::singleton("b", 2)],
            ind(2),
        );
        let e = structure_errors(HierarchicalModel::new(gap, 3));
        assert_eq!(e, vec![StructureError::Gap { variable: 1 }]);

        let gauss = CopulaSpec::gaussian(CorrelationMatrix::bivariate(0.3).unwrap());
        let missing = Node::internal(
            "root",
            vec![Node::leaf("a", vec![0, 1], gauss), Node::singleton("b", 2)],
            ind(2),
        );
        let e = structure_errors(HierarchicalModel::new(missing, 3));
        assert!(matches!(&e[0], StructureError::MissingKendall { path } if path == "root/a"));
    }

    #[test]
    fn pit_examples() {
        let m = four_dim(CopulaSpec::independence(2));
        let v = m.pit_row(&[0.277_350_098_112_614_6; 4]).unwrap();
        assert!((v[0] - 0.296).abs() < 1e-12);

        let root = Node::internal(
            "root",
            vec![
                Node::singleton("s", 0),
                Node::leaf("p", vec![1, 2], CopulaSpec::independence(2)),
            ],
            CopulaSpec::independence(2),
        );
        let m = HierarchicalModel::new(root, 3).unwrap();
        let u = DataMatrix::from_rows(&[vec![0.3, 0.5, 0.5], vec![0.9, 0.5, 0.5]]).unwrap();
        let v = nesting_pit(&m, &u).unwrap();
        assert_eq!(v.column(0), vec![0.3, 0.9]);
        assert!((v.get(0, 1) - (0.25 - 0.25 * 0.25f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn density_factorizes() {
        let u = [0.3, 0.4, 0.6, 0.7];
        let c = arch(ArchimedeanGenerator::clayton(2.0).unwrap(), 2);
        let ind = four_dim(CopulaSpec::independence(2));
        let want = c.pdf(&u[..2]).unwrap() * c.pdf(&u[2..]).unwrap();
        assert!((ind.density(&u).unwrap() - want).abs() < 1e-12 * want);

        let nest = arch(ArchimedeanGenerator::frank(5.0).unwrap(), 2);
        let m = four_dim(nest.clone());
        let v = m.pit_row(&u).unwrap();
        let want = want * nest.pdf(&v).unwrap();
        assert!((m.density(&u).unwrap() - want).abs() < 1e-12 * want);

        let all = Node::internal(
            "root",
            vec![
                Node::leaf("a", vec![0, 1], CopulaSpec::independence(2)),
                Node::leaf("b", vec![2, 3], CopulaSpec::independence(2)),
            ],
            CopulaSpec::independence(2),
        );
        let all = HierarchicalModel::new(all, 4).unwrap();
        assert_eq!(all.density(&u).unwrap(), 1.0);
        let data = DataMatrix::from_rows(&[u.to_vec(), vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        assert_eq!(
            all.loglik(&data).unwrap(),
            LogLik {
                value: 0.0,
                clamped: 0
            }
        );
        let one = DataMatrix::from_rows(&[u.to_vec()]).unwrap();
        assert_eq!(m.loglik(&one).unwrap().value, m.log_density(&u).unwrap());
    }

    #[test]
    fn three_level_density_and_pit() {
        let g = ArchimedeanGenerator::gumbel(3.0).unwrap();
        let c = ArchimedeanGenerator::clayton(1.0).unwrap();
        let mid = Node::internal(
            "mid",
            vec![
                Node::leaf("a", vec![0, 1], arch(g, 2)),
                Node::leaf("b", vec![2, 3], arch(g, 2)),
            ],
            arch(c, 2),
        );
        let root = Node::internal(
            "root",
            vec![mid, Node::leaf("c", vec![4, 5], arch(g, 2))],
            arch(ArchimedeanGenerator::gumbel(1.5).unwrap(), 2),
        );
        let m = HierarchicalModel::new(root, 6).unwrap();
        assert_eq!(m.levels(), 3);
        let x = m
            .sample(5000, SampleMethod::Exact, &mut stream(3, 1, 0))
            .unwrap();
        let v = nesting_pit(&m, &x).unwrap();
        for j in 0..2 {
            assert!(ks_one_sample(&v.column(j), |t| t).p_value > 0.001);
        }
        assert!((kendall_tau(&v.column(0), &v.column(1)) - 1.0 / 3.0).abs() < 0.03);
        assert!(
            (kendall_tau(&x.column(0), &x.column(2)) - kendall_tau(&x.column(1), &x.column(3)))
                .abs()
                < 0.05
        );
        assert!(m.loglik(&x).unwrap().value > 0.0);
    }

    #[test]
    fn exact_sampling_recovers_tau() {
        let m = four_dim(arch(ArchimedeanGenerator::gumbel(2.0).unwrap(), 2));
        let x = m
            .sample(10_000, SampleMethod::Exact, &mut stream(11, 0, 0))
            .unwrap();
        assert!((kendall_tau(&x.column(0), &x.column(1)) - 0.5).abs() < 0.02);
        assert!((kendall_tau(&x.column(2), &x.column(3)) - 0.5).abs() < 0.02);
        let v = nesting_pit(&m, &x).unwrap();
        assert!((kendall_tau(&v.column(0), &v.column(1)) - 0.5).abs() < 0.02);
        for j in 0..2 {
            assert!(ks_one_sample(&v.column(j), |t| t).p_value > 0.001);
        }

        let ind = Node::internal(
            "root",
            vec![
                Node::leaf("a", vec![0, 1], CopulaSpec::independence(2)),
                Node::leaf("b", vec![2, 3], CopulaSpec::independence(2)),
            ],
            CopulaSpec::independence(2),
        );
        let ind = HierarchicalModel::new(ind, 4).unwrap();
        let y = ind
            .sample(10_000, SampleMethod::Exact, &mut stream(11, 0, 1))
            .unwrap();
        for a in 0..4 {
            for b in 0..a {
                assert!(kendall_tau(&y.column(a), &y.column(b)).abs() < 0.02);
            }
        }
        let mut r = stream(8, 8, 9);
        let noise =
            DataMatrix::from_vec(1000, 4, (0..4000).map(|_| open01(&mut r)).collect()).unwrap();
        let fitted = m.loglik(&x.slice_rows(0, 1000)).unwrap().value;
        assert!(fitted > m.loglik(&noise).unwrap().value);
    }

    #[test]
    fn rejection_agrees_with_exact() {
        let m = four_dim(arch(ArchimedeanGenerator::gumbel(2.0).unwrap(), 2));
        let a = m
            .sample(10_000, SampleMethod::Exact, &mut stream(12, 0, 0))
            .unwrap();
        let rule = ToleranceRule::Relative(0.005);
        let b = m
            .sample(10_000, SampleMethod::Rejection(rule), &mut stream(12, 0, 1))
            .unwrap();
        for j in 0..4 {
            let p = ks_two_sample(&a.column(j), &b.column(j)).p_value;
            assert!(p > 0.01, "column {j}: {p}");
        }
        let tau = |x: &DataMatrix| kendall_tau(&x.column(0), &x.column(1));
        assert!((tau(&a) - tau(&b)).abs() < 0.03);
    }

    #[test]
    fn rejection_batch_respects_bands() {
        let c = arch(ArchimedeanGenerator::clayton(2.0).unwrap(), 3);
        let z = [0.05, 0.2, 0.2, 0.5, 0.8];
        let rule = ToleranceRule::Relative(0.01);
        let out = rejection_batch(
            &c,
            &z,
            rule,
            1_000_000,
            &QmcOptions::default(),
            &mut stream(2, 0, 0),
        )
        .unwrap();
        for (i, &zi) in z.iter().enumerate() {
            let got = c.cdf(out.row(i)).unwrap();
            assert!((got - zi).abs() < 0.01 * zi);
        }
        let tiny = ToleranceRule::Absolute(1e-300);
        assert!(rejection_batch(
            &c,
            &z,
            tiny,
            100,
            &QmcOptions::default(),
            &mut stream(2, 0, 1)
        )
        .is_err());
    }

    #[test]
    fn comonotone_root_gives_equal_ranks() {
        let m = four_dim(CopulaSpec::independence(2));
        let mut r = stream(21, 0, 0);
        let col: Vec<f64> = (0..500).map(|_| open01(&mut r)).collect();
        let v = DataMatrix::from_columns(&[col.clone(), col]).unwrap();
        let x = m
            .sample_with_root_values(&v, SampleMethod::Exact, &mut r)
            .unwrap();
        let p = nesting_pit(&m, &x).unwrap();
        for i in 0..p.nrows() {
            assert!((p.get(i, 0) - p.get(i, 1)).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_needs_generators() {
        let gauss = CopulaSpec::gaussian(CorrelationMatrix::bivariate(0.5).unwrap());
        let root = Node::internal(
            "root",
            vec![Node::leaf("a", vec![0, 1], gauss), Node::singleton("b", 2)],
            CopulaSpec::independence(2),
        );
        let mut r = stream(1, 1, 1);
        let m = HierarchicalModel::with_empirical_kendall(
            root,
            3,
            2000,
            &QmcOptions::default(),
            &mut r,
        )
        .unwrap();
        assert!(matches!(
            m.sample(10, SampleMethod::Exact, &mut r),
            Err(Error::Unsupported(_))
        ));
        let x = m.sample(2000, SampleMethod::default(), &mut r).unwrap();
        let tau = kendall_tau(&x.column(0), &x.column(1));
        assert!(
            (tau - crate::copulas::elliptical_tau(0.5)).abs() < 0.05,
            "{tau}"
        );
    }

    #[test]
    fn cross_cluster_margins() {
        let m = four_dim(CopulaSpec::independence(2));
        let mut r = stream(30, 0, 0);
        assert_eq!(
            m.cross_cluster_margin_pdf(0, 2, 0.4, 0.6, 100, &mut r)
                .unwrap(),
            (1.0, 0.0)
        );
        assert!(m
            .cross_cluster_margin_pdf(0, 1, 0.4, 0.6, 100, &mut r)
            .is_err());

        let gauss = CopulaSpec::gaussian(CorrelationMatrix::bivariate(0.6).unwrap());
        let root = Node::internal(
            "root",
            vec![Node::singleton("a", 0), Node::singleton("b", 1)],
            gauss.clone(),
        );
        let m = HierarchicalModel::new(root, 2).unwrap();
        let (v, se) = m
            .cross_cluster_margin_pdf(0, 1, 0.3, 0.8, 50, &mut r)
            .unwrap();
        assert!((v - gauss.pdf(&[0.3, 0.8]).unwrap()).abs() < 1e-12 && se == 0.0);
    }
}
