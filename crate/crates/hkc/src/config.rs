//! Declarative model trees in TOML.
//!
//! ```toml
//! seed = 7
//! kendall_mc_size = 100000
//! columns = ["a", "b", "c", "d"]
//!
//! [epsilon]
//! mode = "relative"
//! value = 0.01
//!
//! [[node]]
//! name = "root"
//! family = "gumbel"
//! theta = 2.0
//! children = ["left", "right"]
//!
//! [[node]]
//! name = "left"
//! family = "clayton"
//! tau = 0.5
//! columns = ["a", "b"]
//! ```
//!
//! Parameters are optional; a node carries `theta` or `tau` (Archimedean), `rho`, `tau` or a full
//! `corr` matrix (elliptical) and `nu` (Student-t).

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use hkcopula::copulas::{elliptical_rho, CopulaFamily, CopulaSpec, CorrelationMatrix, QmcOptions};
use hkcopula::estimation::Skeleton;
use hkcopula::generators::ArchimedeanGenerator;
use hkcopula::hierarchical::{HierarchicalModel, Node};
use hkcopula::kendall::DEFAULT_MC;
use hkcopula::levelset::ToleranceRule;
use hkcopula::rng::stream;
use serde::Deserialize;
use toml::Spanned;

use crate::error::{CliError, Result};

/// QMC budget for elliptical CDFs in CLI-built models.
pub const CLI_QMC: QmcOptions = QmcOptions {
    points: 2_000,
    shifts: 5,
    seed: 0,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    kendall_mc_size: Option<usize>,
    epsilon: Option<RawEpsilon>,
    columns: Option<Vec<String>>,
    #[serde(default)]
    node: Vec<Spanned<RawNode>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpsilon {
    mode: String,
    value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    family: String,
    theta: Option<f64>,
    tau: Option<f64>,
    rho: Option<f64>,
    corr: Option<Vec<Vec<f64>>>,
    nu: Option<f64>,
    children: Option<Vec<String>>,
    columns: Option<Vec<String>>,
}

/// Optional fixed parameters of a node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    pub theta: Option<f64>,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub corr: Option<Vec<Vec<f64>>>,
    pub nu: Option<f64>,
}

impl Params {
    fn is_empty(&self) -> bool {
        *self == Params::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeclInputs {
    /// Variable indices into [`ModelConfig::variables`].
    Columns(Vec<usize>),
    Children(Vec<NodeDecl>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecl {
    pub name: String,
    pub family: CopulaFamily,
    pub params: Params,
    pub inputs: DeclInputs,
    pub line: usize,
}

impl NodeDecl {
    pub fn width(&self) -> usize {
        match &self.inputs {
            DeclInputs::Columns(c) => c.len(),
            DeclInputs::Children(c) => c.len(),
        }
    }

    /// The copula given by the fixed parameters, if they are complete.
    pub fn copula(&self) -> std::result::Result<Option<CopulaSpec>, String> {
        let d = self.width();
        let p = &self.params;
        if d == 1 {
            return Ok(Some(CopulaSpec::independence(1)));
        }
        let err = |e: hkcopula::Error| e.to_string();
        Ok(match self.family {
            CopulaFamily::Independence => Some(CopulaSpec::independence(d)),
            CopulaFamily::Clayton | CopulaFamily::Gumbel | CopulaFamily::Frank => {
                let fam = self.family.archimedean().expect("archimedean family");
                let g = match (p.theta, p.tau) {
                    (Some(_), Some(_)) => return Err("give either theta or tau, not both".into()),
                    (Some(t), None) => ArchimedeanGenerator::new(fam, t).map_err(err)?,
                    (None, Some(t)) => ArchimedeanGenerator::from_tau(fam, t).map_err(err)?,
                    (None, None) => return Ok(None),
                };
                Some(CopulaSpec::archimedean(g, d).map_err(err)?)
            }
            CopulaFamily::Gaussian | CopulaFamily::StudentT => {
                let corr = match (p.rho, p.tau, &p.corr) {
                    (None, None, None) => None,
                    (Some(r), None, None) => {
                        Some(CorrelationMatrix::equicorrelation(d, r).map_err(err)?)
                    }
                    (None, Some(t), None) => Some(
                        CorrelationMatrix::equicorrelation(d, elliptical_rho(t)).map_err(err)?,
                    ),
                    (None, None, Some(rows)) => {
                        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                            return Err(format!("corr must be a {d}x{d} matrix"));
                        }
                        Some(CorrelationMatrix::new(d, rows.concat()).map_err(err)?)
                    }
                    _ => return Err("give exactly one of rho, tau and corr".into()),
                };
                match (self.family, corr, p.nu) {
                    (CopulaFamily::Gaussian, Some(r), None) => Some(CopulaSpec::gaussian(r)),
                    (CopulaFamily::Gaussian, _, Some(_)) => {
                        return Err("nu applies to student_t only".into())
                    }
                    (CopulaFamily::StudentT, Some(r), Some(nu)) => {
                        Some(CopulaSpec::student_t(r, nu).map_err(err)?)
                    }
                    (_, None, None) => None,
                    _ => return Err("student_t needs both a correlation and nu".into()),
                }
            }
        })
    }
}

/// A validated model configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub seed: u64,
    pub kendall_mc_size: usize,
    pub epsilon: ToleranceRule,
    /// Variable names in model order.
    pub variables: Vec<String>,
    pub root: NodeDecl,
    pub path: PathBuf,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

impl ModelConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&src, path)
    }

    pub fn parse(src: &str, path: &Path) -> Result<Self> {
        let fail = |line: Option<usize>, message: String| CliError::Config {
            path: path.to_path_buf(),
            message: match line {
                Some(l) => format!("line {l}: {message}"),
                None => message,
            },
        };
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_of(src, s.start));
            fail(line, e.message().to_string())
        })?;
        let epsilon = match raw.epsilon {
            None => ToleranceRule::default(),
            Some(e) => parse_rule(&e.mode, e.value).map_err(|m| fail(None, m))?,
        };
        if raw.node.is_empty() {
            return Err(fail(None, "no [[node]] entries".into()));
        }

        let mut by_name: HashMap<&str, usize> = HashMap::new();
        let mut lines = Vec::with_capacity(raw.node.len());
        for (i, n) in raw.node.iter().enumerate() {
            let line = line_of(src, n.span().start);
            lines.push(line);
            let n = n.get_ref();
            if n.name.is_empty() {
                return Err(fail(Some(line), "empty node name".into()));
            }
            if by_name.insert(&n.name, i).is_some() {
                return Err(fail(
                    Some(line),
                    format!("duplicate node name `{}`", n.name),
                ));
            }
            match (&n.children, &n.columns) {
                (Some(c), None) if !c.is_empty() => {}
                (None, Some(c)) if !c.is_empty() => {}
                _ => {
                    return Err(fail(
                        Some(line),
                        format!(
                            "node `{}` needs a non-empty `children` or `columns` list, not both",
                            n.name
                        ),
                    ))
                }
            }
        }

        let mut parent: Vec<Option<usize>> = vec![None; raw.node.len()];
        for (i, n) in raw.node.iter().enumerate() {
            for c in n.get_ref().children.iter().flatten() {
                let j = *by_name
                    .get(c.as_str())
                    .ok_or_else(|| fail(Some(lines[i]), format!("unknown child node `{c}`")))?;
                if let Some(p) = parent[j] {
                    return Err(fail(
                        Some(lines[i]),
                        format!(
                            "node `{c}` already has parent `{}`",
                            raw.node[p].get_ref().name
                        ),
                    ));
                }
                parent[j] = Some(i);
            }
        }
        let roots: Vec<usize> = (0..raw.node.len())
            .filter(|&i| parent[i].is_none())
            .collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(fail(None, "no root node: the node graph is cyclic".into())),
            many => {
                let names: Vec<&str> = many
                    .iter()
                    .map(|&i| raw.node[i].get_ref().name.as_str())
                    .collect();
                return Err(fail(
                    None,
                    format!("several root nodes: {}", names.join(", ")),
                ));
            }
        };

        let mut variables: Vec<String> = raw.columns.clone().unwrap_or_default();
        let declared = raw.columns.is_some();
        {
            let mut seen = HashSet::new();
            for v in &variables {
                if !seen.insert(v.as_str()) {
                    return Err(fail(None, format!("column `{v}` listed twice")));
                }
            }
        }
        let mut used = HashSet::new();
        let mut visiting = vec![false; raw.node.len()];
        let tree = build_decl(
            root,
            &raw.node,
            &lines,
            &by_name,
            &mut visiting,
            &mut variables,
            declared,
            &mut used,
            &fail,
        )?;
        if used.len() != variables.len() {
            let missing: Vec<&str> = variables
                .iter()
                .filter(|v| !used.contains(v.as_str()))
                .map(String::as_str)
                .collect();
            return Err(fail(
                None,
                format!("columns not used by any node: {}", missing.join(", ")),
            ));
        }
        Ok(ModelConfig {
            seed: raw.seed.unwrap_or(0),
            kendall_mc_size: raw.kendall_mc_size.unwrap_or(DEFAULT_MC),
            epsilon,
            variables,
            root: tree,
            path: path.to_path_buf(),
        })
    }

    fn error(&self, line: usize, message: String) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            message: format!("line {line}: {message}"),
        }
    }

    /// Positions of the model variables in a data header.
    pub fn bind(&self, header: &[String]) -> Result<Vec<usize>> {
        self.variables
            .iter()
            .map(|v| {
                header
                    .iter()
                    .position(|h| h == v)
                    .ok_or_else(|| CliError::Config {
                        path: self.path.clone(),
                        message: format!("column `{v}` not found in the data header"),
                    })
            })
            .collect()
    }

    /// The estimation skeleton; complete parameter sets are kept fixed unless `free`.
    pub fn skeleton(&self, free: bool) -> Result<Skeleton> {
        self.skeleton_of(&self.root, free)
    }

    fn skeleton_of(&self, n: &NodeDecl, free: bool) -> Result<Skeleton> {
        let family = if n.width() == 1 {
            CopulaFamily::Independence
        } else {
            n.family
        };
        let mut s = match &n.inputs {
            DeclInputs::Columns(c) => Skeleton::leaf(&n.name, family, c.clone()),
            DeclInputs::Children(ch) => Skeleton::internal(
                &n.name,
                family,
                ch.iter()
                    .map(|c| self.skeleton_of(c, free))
                    .collect::<Result<_>>()?,
            ),
        };
        if !free && (n.width() > 1 && !n.params.is_empty() || family == CopulaFamily::Independence)
        {
            let c = n
                .copula()
                .map_err(|m| self.error(n.line, format!("node `{}`: {m}", n.name)))?;
            match c {
                Some(c) => s = s.with_fixed(c),
                None if family == CopulaFamily::Independence => {}
                None => {
                    return Err(
                        self.error(n.line, format!("node `{}`: incomplete parameters", n.name))
                    )
                }
            }
        }
        Ok(s)
    }

    /// The fully parameterized model; Kendall functions without closed form are simulated with
    /// stream (seed, 2, 0).
    pub fn model(&self) -> Result<HierarchicalModel> {
        let root = self.node_of(&self.root)?;
        let mut rng = stream(self.seed, 2, 0);
        Ok(HierarchicalModel::with_empirical_kendall(
            root,
            self.variables.len(),
            self.kendall_mc_size,
            &CLI_QMC,
            &mut rng,
        )?)
    }

    fn node_of(&self, n: &NodeDecl) -> Result<Node> {
        let c = n
            .copula()
            .map_err(|m| self.error(n.line, format!("node `{}`: {m}", n.name)))?
            .ok_or_else(|| {
                self.error(
                    n.line,
                    format!("node `{}` has no parameters; fit the model first", n.name),
                )
            })?;
        Ok(match &n.inputs {
            DeclInputs::Columns(cols) => Node::leaf(&n.name, cols.clone(), c),
            DeclInputs::Children(ch) => Node::internal(
                &n.name,
                ch.iter().map(|c| self.node_of(c)).collect::<Result<_>>()?,
                c,
            ),
        })
    }
}

pub fn parse_rule(mode: &str, value: f64) -> std::result::Result<ToleranceRule, String> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(format!("epsilon must be positive, got {value}"));
    }
    match mode {
        "abs" | "absolute" => Ok(ToleranceRule::Absolute(value)),
        "rel" | "relative" => Ok(ToleranceRule::Relative(value)),
        other => Err(format!(
            "unknown epsilon mode `{other}` (expected absolute or relative)"
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn build_decl(
    i: usize,
    nodes: &[Spanned<RawNode>],
    lines: &[usize],
    by_name: &HashMap<&str, usize>,
    visiting: &mut [bool],
    variables: &mut Vec<String>,
    declared: bool,
    used: &mut HashSet<String>,
    fail: &dyn Fn(Option<usize>, String) -> CliError,
) -> Result<NodeDecl> {
    let raw = nodes[i].get_ref();
    let line = lines[i];
    if visiting[i] {
        return Err(fail(
            Some(line),
            format!("cycle through node `{}`", raw.name),
        ));
    }
    visiting[i] = true;
    let family = CopulaFamily::parse(&raw.family).map_err(|e| fail(Some(line), e.to_string()))?;
    let inputs = if let Some(cols) = &raw.columns {
        let mut idx = Vec::with_capacity(cols.len());
        for c in cols {
            if !used.insert(c.clone()) {
                return Err(fail(
                    Some(line),
                    format!("column `{c}` is used by more than one node"),
                ));
            }
            let j = match variables.iter().position(|v| v == c) {
                Some(j) => j,
                None if declared => {
                    return Err(fail(
                        Some(line),
                        format!("column `{c}` is not in the columns list"),
                    ))
                }
                None => {
                    variables.push(c.clone());
                    variables.len() - 1
                }
            };
            idx.push(j);
        }
        DeclInputs::Columns(idx)
    } else {
        let mut ch = Vec::new();
        for c in raw.children.iter().flatten() {
            ch.push(build_decl(
                by_name[c.as_str()],
                nodes,
                lines,
                by_name,
                visiting,
                variables,
                declared,
                used,
                fail,
            )?);
        }
        DeclInputs::Children(ch)
    };
    visiting[i] = false;
    let decl = NodeDecl {
        name: raw.name.clone(),
        family,
        params: Params {
            theta: raw.theta,
            tau: raw.tau,
            rho: raw.rho,
            corr: raw.corr.clone(),
            nu: raw.nu,
        },
        inputs,
        line,
    };
    decl.copula()
        .map_err(|m| fail(Some(line), format!("node `{}`: {m}", decl.name)))?;
    Ok(decl)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CLUSTERS: &str = r#"
seed = 11

[[node]]
name = "root"
family = "gumbel"
theta = 2.0
children = ["left", "right"]

[[node]]
name = "left"
family = "clayton"
tau = 0.5
columns = ["a", "b"]

[[node]]
name = "right"
family = "frank"
columns = ["c", "d"]
"#;

    fn parse(src: &str) -> Result<ModelConfig> {
        ModelConfig::parse(src, Path::new("model.toml"))
    }

    #[test]
    fn parses_tree_in_dfs_order() {
        let c = parse(TWO_CLUSTERS).unwrap();
        assert_eq!(c.variables, ["a", "b", "c", "d"]);
        assert_eq!(c.seed, 11);
        assert_eq!(c.root.width(), 2);
        assert_eq!(c.epsilon, ToleranceRule::Relative(0.01));
        let s = c.skeleton(false).unwrap();
        assert!(s.fixed.is_some());
        assert!(c.model().is_err());
        let s = c.skeleton(true).unwrap();
        assert!(s.fixed.is_none());
    }

    #[test]
    fn full_model_builds() {
        let src = TWO_CLUSTERS.replace("family = \"frank\"", "family = \"frank\"\ntheta = 5.0");
        let m = parse(&src).unwrap().model().unwrap();
        assert_eq!(m.n_vars(), 4);
        let g = m.root().children()[0].copula.generator().unwrap();
        assert!((g.theta() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_lines() {
        let dup = TWO_CLUSTERS.replace("name = \"right\"", "name = \"left\"");
        let e = parse(&dup).unwrap_err().to_string();
        assert!(e.contains("line 16") && e.contains("duplicate"), "{e}");

        let cyc = TWO_CLUSTERS.replace("columns = [\"a\", \"b\"]", "children = [\"root\"]");
        assert!(parse(&cyc).is_err());

        let bad = TWO_CLUSTERS.replace("tau = 0.5", "tau = 1.5");
        let e = parse(&bad).unwrap_err().to_string();
        assert!(e.contains("line 10"), "{e}");

        let typo = TWO_CLUSTERS.replace("theta = 2.0", "thetta = 2.0");
        let e = parse(&typo).unwrap_err();
        assert!(e.to_string().contains("line"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn bind_names_missing_column() {
        let c = parse(TWO_CLUSTERS).unwrap();
        let h: Vec<String> = ["d", "c", "b", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(c.bind(&h).unwrap(), [3, 2, 1, 0]);
        let e = c.bind(&h[1..]).unwrap_err().to_string();
        assert!(e.contains("`d`"), "{e}");
    }

    #[test]
    fn elliptical_parameters() {
        let src = r#"
[[node]]
name = "root"
family = "student_t"
corr = [[1.0, 0.3, 0.2], [0.3, 1.0, 0.1], [0.2, 0.1, 1.0]]
nu = 5.0
columns = ["x", "y", "z"]
"#;
        let m = parse(src).unwrap().model().unwrap();
        assert_eq!(m.root().copula.n_params(), 4);
        let half = src.replace("nu = 5.0\n", "");
        assert!(parse(&half).is_err());
    }
}
