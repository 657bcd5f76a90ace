mod render;

use std::io::Write;
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use robusthedge_core::arbitrage::{check_na, check_no_redundant};
use robusthedge_core::discretization::{convergence_experiment, level_market};
use robusthedge_core::document::{document_of, grid_setup, market_from_doc, parse_document};
use robusthedge_core::pricing::{duality_gap_report, hat_price, sub_hedge_price, super_hedge_price, tilde_price, Side};
use robusthedge_core::stopping::{extract_optimal_stop, snell, Mode};
use robusthedge_core::{parse_rational, validate_reasonable, Arithmetic, Config, CoreError, Market, Rational};

use render::Fmt;

#[derive(Parser)]
#[command(name = "robusthedge", version, about = "Robust sub- and super-hedging prices of American options")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, global = true, value_enum, default_value_t = Arith::F64)]
    arith: Arith,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Zero band for float comparisons.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Slack allowed when replaying float certificates.
    #[arg(long, global = true)]
    cert_tol: Option<f64>,
    /// Bound on |h|, overriding the automatic one.
    #[arg(long, global = true)]
    n_bound: Option<String>,
    /// Cell budget of the sub-hedging search.
    #[arg(long, global = true)]
    max_cells: Option<usize>,
    #[arg(long, global = true)]
    max_stopping_times: Option<u64>,
    #[arg(long, global = true)]
    max_lp_vars: Option<usize>,
    #[arg(long, global = true)]
    path_budget: Option<usize>,
    #[arg(long, global = true, env = "ROBUSTHEDGE_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arith {
    Exact,
    F64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Sub,
    Super,
    Hat,
    Tilde,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Na,
    Redundancy,
    Reasonable,
    Gap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sides {
    Sub,
    Super,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SupSup,
    SupInf,
    InfSup,
}

#[derive(Subcommand)]
enum Command {
    /// Price the American payoff of a market document.
    Price {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = SideArg::Super)]
        side: SideArg,
    },
    /// Structural and no-arbitrage checks.
    Check {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = What::Na)]
        what: What,
    },
    /// Price a grid document over a range of levels and fit the error slope.
    Converge {
        file: PathBuf,
        /// Levels as `a..b` (inclusive).
        #[arg(long, value_parser = parse_range)]
        n_range: RangeInclusive<u32>,
        #[arg(long, value_enum, default_value_t = Sides::Both)]
        side: Sides,
    },
    /// Emit the level-n market of a grid document as a tree document.
    Discretize {
        file: PathBuf,
        #[arg(long)]
        n: u32,
    },
    /// Optimal stopping region for a fixed static position h.
    Stopping {
        file: PathBuf,
        /// Comma-separated option positions.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        h: Vec<String>,
        #[arg(long, value_enum, default_value_t = ModeArg::SupSup)]
        mode: ModeArg,
    },
}

fn parse_range(s: &str) -> Result<RangeInclusive<u32>, String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a: u32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok(a..=b)
}

/// Exit 1: input errors. Exit 2: the market itself is invalid.
enum Failure {
    Input(String),
    Market(String, Option<Value>),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Arbitrage(_) | CoreError::EmptyPolytope(_) | CoreError::Node { .. } => {
                Failure::Market(e.to_string(), None)
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn config(run: &RunArgs) -> Result<Config, Failure> {
    let mut cfg = Config::default();
    if let Some(x) = run.tol {
        cfg.tol = x;
    }
    if let Some(x) = run.cert_tol {
        cfg.cert_tol = x;
    }
    if let Some(s) = &run.n_bound {
        cfg.n_bound = Some(rational(s)?);
    }
    if let Some(x) = run.max_cells {
        cfg.max_cells = x;
    }
    if let Some(x) = run.max_stopping_times {
        cfg.max_stopping_times = x;
    }
    if let Some(x) = run.max_lp_vars {
        cfg.max_lp_vars = x;
    }
    if let Some(x) = run.path_budget {
        cfg.path_budget = x;
    }
    if let Some(x) = run.seed {
        cfg.seed = x;
    }
    cfg.threads = run.threads;
    Ok(cfg)
}

fn rational(s: &str) -> Result<Rational, Failure> {
    parse_rational(s.trim()).map_err(|e| Failure::Input(format!("'{s}': {e}")))
}

fn read(file: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(file).map_err(|e| Failure::Input(format!("{}: {e}", file.display())))
}

fn load(file: &PathBuf) -> Result<Market, Failure> {
    let doc = parse_document(&read(file)?)?;
    Ok(market_from_doc(&doc)?)
}

fn run(cli: &Cli) -> Result<(String, bool), Failure> {
    let cfg = config(&cli.run)?;
    let arith = match cli.run.arith {
        Arith::Exact => Arithmetic::Exact,
        Arith::F64 => Arithmetic::Float,
    };
    let fmt = Fmt { exact: arith == Arithmetic::Exact };
    let format = cli.run.format;
    match &cli.command {
        Command::Price { file, side } => {
            let m = load(file)?;
            let side = match side {
                SideArg::Sub => Side::Sub,
                SideArg::Super => Side::Super,
                SideArg::Hat => Side::Hat,
                SideArg::Tilde => Side::Tilde,
            };
            if side != Side::Hat {
                let na = check_na(&m, &cfg)?;
                if !na.holds {
                    return Err(Failure::Market("no-arbitrage fails".into(), Some(render::na(&m, &na, fmt))));
                }
            }
            let report = match side {
                Side::Sub => sub_hedge_price(&m, &cfg, arith)?,
                Side::Super => super_hedge_price(&m, &cfg, arith)?,
                Side::Hat => hat_price(&m, &cfg, arith)?,
                Side::Tilde => tilde_price(&m, &cfg, arith)?,
            };
            Ok((render::emit(&render::price(&m, &report, fmt), format), true))
        }
        Command::Check { file, what } => {
            let m = load(file)?;
            let (v, ok) = match what {
                What::Na => {
                    let na = check_na(&m, &cfg)?;
                    (render::na(&m, &na, fmt), na.holds)
                }
                What::Redundancy => {
                    let r = check_no_redundant(&m, &cfg)?;
                    (render::redundancy(&m, &r, fmt), r.holds)
                }
                What::Reasonable => {
                    let (ok, bad) = validate_reasonable(&m.tree);
                    let nodes: Vec<&str> = bad.iter().map(|&v| m.tree.nodes[v].label.as_str()).collect();
                    (json!({ "check": "reasonable", "holds": ok, "violations": nodes }), ok)
                }
                What::Gap => {
                    let g = duality_gap_report(&m, &cfg, arith)?;
                    (render::gap(&m, &g, fmt), true)
                }
            };
            Ok((render::emit(&v, format), ok))
        }
        Command::Converge { file, n_range, side } => {
            if n_range.start() == n_range.end() {
                return Err(Failure::Input("need >= 2 levels".into()));
            }
            let doc = parse_document(&read(file)?)?;
            let mut setup = grid_setup(&doc)?;
            setup.sub = matches!(side, Sides::Sub | Sides::Both);
            setup.sup = matches!(side, Sides::Super | Sides::Both);
            let table = convergence_experiment(&setup, n_range.clone(), &cfg, arith)?;
            let succeeded = table.rows.iter().filter(|r| r.error.is_none()).count();
            let out = match format {
                Format::Csv => table.to_csv()?,
                Format::Json => serde_json::to_string_pretty(&table).map_err(|e| Failure::Input(e.to_string()))?,
                Format::Text => render::table_text(&table),
            };
            Ok((out, succeeded >= 2))
        }
        Command::Discretize { file, n } => {
            let doc = parse_document(&read(file)?)?;
            let setup = grid_setup(&doc)?;
            let (m, _) = level_market(&setup, *n, &cfg)?;
            let out = serde_json::to_string_pretty(&document_of(&m)).map_err(|e| Failure::Input(e.to_string()))?;
            Ok((out, true))
        }
        Command::Stopping { file, h, mode } => {
            let m = load(file)?;
            if h.len() != m.num_options() && !(h.is_empty() && m.num_options() == 0) {
                return Err(Failure::Input(format!("{} positions given for {} options", h.len(), m.num_options())));
            }
            let w: Vec<Rational> = h.iter().map(|s| rational(s).map(|x| -x)).collect::<Result<_, _>>()?;
            let mode = match mode {
                ModeArg::SupSup => Mode::SupSup,
                ModeArg::SupInf => Mode::SupInf,
                ModeArg::InfSup => Mode::InfSup,
            };
            let v = if fmt.exact {
                let env = snell(&m.numeric::<Rational>(), &m.payoff.values, mode, &w, 0.0)?;
                let tau = extract_optimal_stop(&env, &m.tree, 0.0);
                render::stopping(&m, env.root(), &tau, fmt)
            } else {
                let phi: Vec<f64> = m.payoff.values.iter().map(render::to_f64).collect();
                let wf: Vec<f64> = w.iter().map(render::to_f64).collect();
                let env = snell(&m.numeric::<f64>(), &phi, mode, &wf, cfg.tol)?;
                let tau = extract_optimal_stop(&env, &m.tree, cfg.tol);
                render::stopping(&m, &render::from_f64(*env.root()), &tau, fmt)
            };
            Ok((render::emit(&v, format), true))
        }
    }
}

fn print_out(text: &str) {
    // a closed pipe downstream is not an error of ours
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.run.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok((out, ok)) => {
            print_out(&out);
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Market(msg, detail)) => {
            if let Some(d) = detail {
                print_out(&render::emit(&d, cli.run.format));
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
