//! Versioned JSON reports for fits and backtests.

use std::path::Path;

use hkcopula::backtest::{BacktestReport, LrTest};
use hkcopula::copulas::{CopulaFamily, CopulaSpec, CorrelationMatrix};
use hkcopula::estimation::FitReport;
use hkcopula::generators::ArchimedeanGenerator;
use hkcopula::hierarchical::{HierarchicalModel, Inputs, Node};
use hkcopula::rng::stream;
use serde::{Deserialize, Serialize};

use crate::config::CLI_QMC;
use crate::error::{CliError, Result};

pub const FORMAT_TAG: &str = "hkc-report/1";
pub const BACKTEST_TAG: &str = "hkc-backtest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDoc {
    pub format: String,
    pub method: String,
    pub seed: u64,
    pub kendall_mc_size: usize,
    pub n_obs: usize,
    pub variables: Vec<String>,
    pub loglik: LoglikDoc,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub model: NodeDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikDoc {
    pub two_step: f64,
    pub two_step_clamped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointDoc>,
    /// The log-likelihood of the reported model.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDoc {
    pub start: f64,
    pub value: f64,
    pub clamped: usize,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub name: String,
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub kendall: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<NodeDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<NodeDoc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub method: String,
    pub loglik: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl NodeDoc {
    fn from_node(node: &Node, path: &str, fit: Option<&FitReport>, vars: &[String]) -> Self {
        let path = if path.is_empty() {
            node.name.clone()
        } else {
            format!("{path}/{}", node.name)
        };
        let nf = fit.and_then(|f| f.nodes.iter().find(|n| n.path == path));
        let (theta, tau, corr, nu) = match &node.copula {
            CopulaSpec::Independence(_) => (None, None, None, None),
            CopulaSpec::Archimedean(g, _) => (Some(g.theta()), Some(g.tau()), None, None),
            CopulaSpec::Gaussian(r) => (None, None, Some(rows(r)), None),
            CopulaSpec::StudentT(r, nu) => (None, None, Some(rows(r)), Some(*nu)),
        };
        let kendall = match (&nf, &node.kendall) {
            (Some(nf), _) => nf.kendall.clone(),
            (None, Some(k)) => k.provenance(),
            (None, None) => "none".into(),
        };
        let (columns, children) = match &node.inputs {
            Inputs::Columns(c) => (Some(c.iter().map(|&j| vars[j].clone()).collect()), None),
            Inputs::Children(ch) => (
                None,
                Some(
                    ch.iter()
                        .map(|c| NodeDoc::from_node(c, &path, fit, vars))
                        .collect(),
                ),
            ),
        };
        NodeDoc {
            name: node.name.clone(),
            family: node.copula.family().name().into(),
            theta,
            tau,
            corr,
            nu,
            kendall,
            diagnostics: nf.map(|n| NodeDiagnostics {
                method: n.method.into(),
                loglik: n.loglik,
                evaluations: n.evaluations,
                iterations: n.iterations,
                converged: n.converged,
            }),
            columns,
            children,
        }
    }

    fn to_node(&self, vars: &[String]) -> std::result::Result<Node, String> {
        let family = CopulaFamily::parse(&self.family).map_err(|e| e.to_string())?;
        let (width, inputs) = match (&self.columns, &self.children) {
            (Some(c), None) => {
                let idx = c
                    .iter()
                    .map(|name| {
                        vars.iter()
                            .position(|v| v == name)
                            .ok_or_else(|| format!("unknown variable `{name}`"))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                (idx.len(), Inputs::Columns(idx))
            }
            (None, Some(ch)) => (
                ch.len(),
                Inputs::Children(
                    ch.iter()
                        .map(|c| c.to_node(vars))
                        .collect::<std::result::Result<_, _>>()?,
                ),
            ),
            _ => return Err(format!("node `{}` needs columns or children", self.name)),
        };
        let err = |e: hkcopula::Error| format!("node `{}`: {e}", self.name);
        let missing = |what: &str| format!("node `{}`: missing {what}", self.name);
        let copula = match family {
            CopulaFamily::Independence => CopulaSpec::independence(width),
            CopulaFamily::Clayton | CopulaFamily::Gumbel | CopulaFamily::Frank => {
                let g = ArchimedeanGenerator::new(
                    family.archimedean().expect("archimedean family"),
                    self.theta.ok_or_else(|| missing("theta"))?,
                )
                .map_err(err)?;
                CopulaSpec::archimedean(g, width).map_err(err)?
            }
            CopulaFamily::Gaussian | CopulaFamily::StudentT => {
                let r = self.corr.as_ref().ok_or_else(|| missing("corr"))?;
                let r = CorrelationMatrix::new(width, r.concat()).map_err(err)?;
                if family == CopulaFamily::Gaussian {
                    CopulaSpec::gaussian(r)
                } else {
                    CopulaSpec::student_t(r, self.nu.ok_or_else(|| missing("nu"))?).map_err(err)?
                }
            }
        };
        Ok(match inputs {
            Inputs::Columns(c) => Node::leaf(&self.name, c, copula),
            Inputs::Children(ch) => Node::internal(&self.name, ch, copula),
        })
    }
}

fn rows(r: &CorrelationMatrix) -> Vec<Vec<f64>> {
    r.values().chunks(r.dim()).map(<[f64]>::to_vec).collect()
}

impl FitDoc {
    pub fn from_fit(
        fit: &FitReport,
        method: &str,
        variables: &[String],
        seed: u64,
        kendall_mc_size: usize,
    ) -> Self {
        FitDoc {
            format: FORMAT_TAG.into(),
            method: method.into(),
            seed,
            kendall_mc_size,
            n_obs: fit.n_obs,
            variables: variables.to_vec(),
            loglik: LoglikDoc {
                two_step: fit.two_step.value,
                two_step_clamped: fit.two_step.clamped,
                joint: fit.joint.as_ref().map(|j| JointDoc {
                    start: j.start.value,
                    value: j.loglik.value,
                    clamped: j.loglik.clamped,
                    evaluations: j.evaluations,
                    iterations: j.iterations,
                    converged: j.converged,
                }),
                value: fit.loglik(),
            },
            n_params: fit.n_params(),
            aic: fit.aic(),
            bic: fit.bic(),
            converged: fit.converged(),
            model: NodeDoc::from_node(fit.model.root(), "", Some(fit), variables),
        }
    }

    /// The reported model. Kendall functions without a closed form are re-simulated from the
    /// report seed on stream (seed, 2, 0).
    pub fn model(&self) -> std::result::Result<HierarchicalModel, String> {
        let root = self.model.to_node(&self.variables)?;
        let mut rng = stream(self.seed, 2, 0);
        HierarchicalModel::with_empirical_kendall(
            root,
            self.variables.len(),
            self.kendall_mc_size,
            &CLI_QMC,
            &mut rng,
        )
        .map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&src, path)
    }

    pub fn parse(src: &str, path: &Path) -> Result<Self> {
        let doc: FitDoc = serde_json::from_str(src).map_err(|e| CliError::Data {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.format != FORMAT_TAG {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                message: format!("unsupported report format `{}`", doc.format),
            });
        }
        Ok(doc)
    }
}

/// Rounds a p-value to four decimals.
pub fn round4(p: f64) -> f64 {
    (p * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDoc {
    pub lr: f64,
    pub p: f64,
}

impl From<&LrTest> for TestDoc {
    fn from(t: &LrTest) -> Self {
        TestDoc {
            lr: t.lr,
            p: round4(t.p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDoc {
    pub level: f64,
    pub days: usize,
    pub exceedances: usize,
    pub expected: f64,
    pub uc: TestDoc,
    pub ind: Option<TestDoc>,
    pub cc: Option<TestDoc>,
    pub degenerate: bool,
    pub hits: Vec<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forecasts: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub realized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestDoc {
    pub format: String,
    pub window: usize,
    pub horizon: usize,
    pub levels: Vec<LevelDoc>,
}

impl BacktestDoc {
    pub fn new(reports: &[BacktestReport]) -> Self {
        let first = reports.first();
        BacktestDoc {
            format: BACKTEST_TAG.into(),
            window: first.map_or(0, |r| r.window),
            horizon: first.map_or(0, |r| r.horizon),
            levels: reports
                .iter()
                .map(|r| LevelDoc {
                    level: r.level,
                    days: r.hits.len(),
                    exceedances: r.n_exceed,
                    expected: (1.0 - r.level) * r.hits.len() as f64,
                    uc: (&r.uc).into(),
                    ind: r.ind.as_ref().map(Into::into),
                    cc: r.cc.as_ref().map(Into::into),
                    degenerate: r.degenerate(),
                    hits: r.hits.iter().map(|&h| h as u8).collect(),
                    forecasts: r.forecasts.clone(),
                    realized: r.realized.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Table text with p-values to two decimals.
    pub fn summary(&self) -> String {
        let p2 = |t: &Option<TestDoc>| {
            t.as_ref()
                .map_or("n/a".to_string(), |t| format!("{:.2}", t.p))
        };
        let mut out = String::from("level  days  exceed  expected  UC    IND   CC\n");
        for l in &self.levels {
            out.push_str(&format!(
                "{:<5}  {:<4}  {:<6}  {:<8.1}  {:.2}  {:<4}  {}\n",
                l.level,
                l.days,
                l.exceedances,
                l.expected,
                l.uc.p,
                p2(&l.ind),
                p2(&l.cc)
            ));
        }
        out
    }
}
