use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hkc::config::{parse_rule, ModelConfig};
use hkc::csvio::{read_table, write_atomic, write_table};
use hkc::error::{CliError, Result};
use hkc::parallel::{run_study, sample_chunked};
use hkc::report::{BacktestDoc, FitDoc};
use hkcopula::backtest::{rolling_backtest, BacktestReport, MarginKind, RollingOptions};
use hkcopula::copulas::CopulaFamily;
use hkcopula::estimation::{
    fit_joint_mle, fit_two_step, pseudo_observations, FitOptions, KendallMode, StudyConfig,
};
use hkcopula::generators::{ArchimedeanGenerator, Family};
use hkcopula::hierarchical::{HierarchicalModel, SampleMethod};
use hkcopula::kendall::KendallFunction;
use hkcopula::levelset::ToleranceRule;
use hkcopula::DataMatrix;

#[derive(Parser)]
#[command(name = "hkc", version, about = "Hierarchical Kendall copulas")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Monte Carlo size of empirical Kendall functions.
    #[arg(long, global = true)]
    kendall_mc: Option<usize>,
    /// Rejection-sampling tolerance.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, value_enum)]
    epsilon_mode: Option<EpsMode>,
    /// Attempt cap of rejection sampling.
    #[arg(long, global = true)]
    max_attempts: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EpsMode {
    Abs,
    Rel,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FitMethod {
    TwoStep,
    Mle,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMethod {
    Exact,
    Rejection,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum Margins {
    Empirical,
    Normal,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model skeleton to data.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "two-step")]
        method: FitMethod,
        #[arg(long)]
        out: PathBuf,
        /// Estimate every node, ignoring parameters given in the config.
        #[arg(long)]
        free: bool,
        /// Allow joint MLE with nested elliptical nodes, keeping them at their two-step values.
        #[arg(long)]
        force_frozen: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw from a fitted report or a fully parameterized config.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "auto")]
        method: SimMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the model density at one point.
    Density {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated coordinates in model variable order.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<f64>,
    },
    /// Tabulate closed-form Kendall functions.
    Kendall {
        #[arg(long)]
        family: String,
        #[arg(long, conflicts_with = "tau")]
        theta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Dimension; repeat for several curves.
        #[arg(long, required = true)]
        dim: Vec<usize>,
        /// Number of grid intervals on [0, 1].
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rolling VaR backtest, or coverage tests of a given hit series.
    Backtest {
        #[arg(long, required_unless_present = "hits")]
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "hits")]
        model: Option<PathBuf>,
        /// Single-column 0/1 exceedance series to test instead of running a forecast.
        #[arg(long, conflicts_with_all = ["data", "model"])]
        hits: Option<PathBuf>,
        /// VaR confidence level; repeatable.
        #[arg(long, default_values_t = [0.95, 0.99])]
        level: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        window: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 25)]
        refit_every: usize,
        #[arg(long, default_value_t = 10_000)]
        mc: usize,
        #[arg(long, value_enum, default_value = "empirical")]
        margins: Margins,
        /// Portfolio weights (default: equal).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulation study of the nesting-parameter estimators.
    Study {
        #[arg(long, default_value_t = 100)]
        replications: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [250, 500, 1000])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.7])]
        tau0: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = ["clayton".to_string(), "gumbel".to_string(), "frank".to_string()])]
        nesting: Vec<String>,
        #[arg(long, default_value_t = 2012)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    match cli.command {
        Command::Fit {
            data,
            model,
            method,
            out,
            free,
            force_frozen,
            seed,
        } => {
            let cfg = ModelConfig::load(&model)?;
            let u = load_uniforms(&data, &cfg)?;
            let skel = cfg.skeleton(free)?;
            let mc = g.kendall_mc.unwrap_or(cfg.kendall_mc_size);
            let seed = seed.unwrap_or(cfg.seed);
            let opts = FitOptions {
                kendall: KendallMode::Auto(mc),
                seed,
                ..FitOptions::default()
            };
            let mut fit = fit_two_step(&skel, &u, &opts)?;
            let name = match method {
                FitMethod::TwoStep => "two-step",
                FitMethod::Mle => {
                    fit = fit_joint_mle(&fit, &u, &opts, force_frozen)?;
                    "mle"
                }
            };
            let doc = FitDoc::from_fit(&fit, name, &cfg.variables, seed, mc);
            write_atomic(&out, doc.to_json().as_bytes())?;
            println!(
                "loglik {:.4}  params {}  aic {:.4}  bic {:.4}",
                doc.loglik.value, doc.n_params, doc.aic, doc.bic
            );
            if !doc.converged {
                eprintln!(
                    "warning: optimizer did not converge; report written to {}",
                    out.display()
                );
                return Ok(3);
            }
        }
        Command::Simulate {
            model,
            n,
            seed,
            method,
            out,
        } => {
            let loaded = load_model(&model, g)?;
            let rule = loaded.epsilon;
            let method = match method {
                SimMethod::Exact => SampleMethod::Exact,
                SimMethod::Rejection => SampleMethod::Rejection(rule),
                SimMethod::Auto => SampleMethod::Auto(rule),
            };
            if method == SampleMethod::Exact && !loaded.model.all_archimedean() {
                return Err(CliError::Input(
                    "exact sampling needs Archimedean or independence clusters; use --method rejection".into(),
                ));
            }
            let u = sample_chunked(&loaded.model, n, method, seed.unwrap_or(loaded.seed))?;
            write_table(&out, &loaded.variables, &u)?;
        }
        Command::Density { model, point } => {
            let loaded = load_model(&model, g)?;
            if point.len() != loaded.model.n_vars() {
                return Err(CliError::Input(format!(
                    "--point has {} coordinates, the model has {} variables",
                    point.len(),
                    loaded.model.n_vars()
                )));
            }
            if point.iter().any(|u| !(0.0..=1.0).contains(u)) {
                return Err(CliError::Input(
                    "--point coordinates must lie in [0, 1]".into(),
                ));
            }
            println!("{}", loaded.model.density(&point)?);
        }
        Command::Kendall {
            family,
            theta,
            tau,
            dim,
            grid,
            out,
        } => {
            let fam = CopulaFamily::parse(&family)?;
            let fam = fam.archimedean().ok_or_else(|| {
                CliError::Input(format!("{family} has no closed-form Kendall function"))
            })?;
            let gen = match (fam, theta, tau) {
                (Family::Independence, _, _) => ArchimedeanGenerator::independence(),
                (_, Some(t), _) => ArchimedeanGenerator::new(fam, t)?,
                (_, None, Some(t)) => ArchimedeanGenerator::from_tau(fam, t)?,
                _ => return Err(CliError::Input("give --theta or --tau".into())),
            };
            if grid == 0 {
                return Err(CliError::Input("--grid must be positive".into()));
            }
            let ks = dim
                .iter()
                .map(|&d| KendallFunction::closed_form(gen, d))
                .collect::<hkcopula::Result<Vec<_>>>()?;
            let mut header = vec!["t".to_string()];
            header.extend(dim.iter().map(|d| format!("K_d{d}")));
            let rows: Vec<Vec<f64>> = (0..=grid)
                .map(|i| {
                    let t = i as f64 / grid as f64;
                    let mut r = vec![t];
                    r.extend(ks.iter().map(|k| k.cdf(t)));
                    r
                })
                .collect();
            let table = DataMatrix::from_rows(&rows)?;
            match out {
                Some(p) => write_table(&p, &header, &table)?,
                None => print!("{}", hkc::csvio::format_table(&header, &table)),
            }
        }
        Command::Backtest {
            data,
            model,
            hits,
            level,
            window,
            horizon,
            refit_every,
            mc,
            margins,
            weights,
            out,
        } => {
            if level.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
                return Err(CliError::Input("--level must lie in (0, 1)".into()));
            }
            let reports = match hits {
                Some(path) => {
                    let t = read_table(&path)?;
                    if t.data.ncols() != 1 {
                        return Err(CliError::Input(format!(
                            "{}: expected one hit column",
                            path.display()
                        )));
                    }
                    let h = t.data.column(0);
                    if h.iter().any(|&x| x != 0.0 && x != 1.0) {
                        return Err(CliError::Input(format!(
                            "{}: hits must be 0 or 1",
                            path.display()
                        )));
                    }
                    let h: Vec<bool> = h.iter().map(|&x| x == 1.0).collect();
                    level
                        .iter()
                        .map(|&l| BacktestReport::from_hits(h.clone(), l, 0))
                        .collect::<Vec<_>>()
                }
                None => {
                    let (data, model) = (
                        data.expect("clap requires data"),
                        model.expect("clap requires model"),
                    );
                    let cfg = ModelConfig::load(&model)?;
                    let t = read_table(&data)?;
                    let cols = cfg.bind(&t.header)?;
                    let returns = t.data.select_columns(&cols);
                    let n = returns.ncols();
                    let weights = weights.unwrap_or_else(|| vec![1.0 / n as f64; n]);
                    if returns.nrows() < window + horizon {
                        return Err(CliError::Input(format!(
                            "{} rows cannot cover window {window} plus horizon {horizon}",
                            returns.nrows()
                        )));
                    }
                    let opts = RollingOptions {
                        window,
                        horizon,
                        refit_every,
                        mc,
                        levels: level,
                        margins: match margins {
                            Margins::Empirical => MarginKind::Empirical,
                            Margins::Normal => MarginKind::Normal,
                        },
                        fit: FitOptions {
                            kendall: KendallMode::Auto(g.kendall_mc.unwrap_or(cfg.kendall_mc_size)),
                            seed: cfg.seed,
                            ..FitOptions::default()
                        },
                        seed: cfg.seed,
                    };
                    rolling_backtest(&returns, &cfg.skeleton(true)?, &weights, &opts)?
                }
            };
            let doc = BacktestDoc::new(&reports);
            write_atomic(&out, doc.to_json().as_bytes())?;
            print!("{}", doc.summary());
        }
        Command::Study {
            replications,
            sizes,
            tau0,
            nesting,
            seed,
            out,
        } => {
            let nesting = nesting
                .iter()
                .map(|f| {
                    CopulaFamily::parse(f)?.archimedean().ok_or_else(|| {
                        hkcopula::Error::Parameter(format!("{f} is not Archimedean"))
                    })
                })
                .collect::<hkcopula::Result<Vec<_>>>()?;
            let cfg = StudyConfig {
                nesting,
                tau0,
                sizes,
                replications,
                seed,
                ..StudyConfig::default()
            };
            let cells = run_study(&cfg);
            let mut text = String::from("nesting,tau0,n,method,mse,bias,sd,successes,failures\n");
            for c in &cells {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    c.design.nesting.name(),
                    c.design.tau0,
                    c.design.n,
                    c.method.name(),
                    c.mse,
                    c.bias,
                    c.sd,
                    c.successes,
                    c.failures
                ));
            }
            write_atomic(&out, text.as_bytes())?;
        }
    }
    Ok(0)
}

struct LoadedModel {
    model: HierarchicalModel,
    variables: Vec<String>,
    seed: u64,
    epsilon: ToleranceRule,
}

/// A fit report (JSON) or a fully parameterized config (TOML), with global overrides applied.
fn load_model(path: &Path, g: &Global) -> Result<LoadedModel> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut epsilon = ToleranceRule::default();
    let (mut model, variables, seed) = if src.trim_start().starts_with('{') {
        let mut doc = FitDoc::parse(&src, path)?;
        if let Some(m) = g.kendall_mc {
            doc.kendall_mc_size = m;
        }
        let m = doc.model().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        (m, doc.variables, doc.seed)
    } else {
        let mut cfg = ModelConfig::parse(&src, path)?;
        if let Some(m) = g.kendall_mc {
            cfg.kendall_mc_size = m;
        }
        epsilon = cfg.epsilon;
        (cfg.model()?, cfg.variables, cfg.seed)
    };
    if g.epsilon.is_some() || g.epsilon_mode.is_some() {
        let (mode, value) = match epsilon {
            ToleranceRule::Absolute(v) => ("abs", v),
            ToleranceRule::Relative(v) => ("rel", v),
        };
        let mode = match g.epsilon_mode {
            Some(EpsMode::Abs) => "abs",
            Some(EpsMode::Rel) => "rel",
            None => mode,
        };
        epsilon = parse_rule(mode, g.epsilon.unwrap_or(value)).map_err(CliError::Input)?;
    }
    if let Some(n) = g.max_attempts {
        model.set_max_attempts(n);
    }
    Ok(LoadedModel {
        model,
        variables,
        seed,
        epsilon,
    })
}

/// Pseudo-observations of the config's columns.
fn load_uniforms(path: &Path, cfg: &ModelConfig) -> Result<DataMatrix> {
    let t = read_table(path)?;
    let cols = cfg.bind(&t.header)?;
    if t.data.nrows() < 2 {
        return Err(CliError::Data {
            path: path.to_path_buf(),
            line: t.data.nrows() + 1,
            message: "need at least two observations".into(),
        });
    }
    Ok(pseudo_observations(&t.data.select_columns(&cols))?)
}
