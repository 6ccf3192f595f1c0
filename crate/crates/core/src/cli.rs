//! The `graphdiff` command line.
//!
//! Exit codes: 0 success, 1 invalid graph, 2 unreadable input or bad
//! arguments, 3 a check ran but its criterion failed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use crate::chain::{build_q, mass_rate, Variant};
use crate::config::GraphConfig;
use crate::error::{Error, Result};
use crate::evolution::{kappa_sweep, Discretization, InitialData, Method};
use crate::fv::{duality_refinement, Conditions, SmoothGraphFunction, TraceOrder};
use crate::graph::MetricGraph;
use crate::grid::EdgeGrid;
use crate::resolvent::{
    averaging_limit_check, resolvent_apply, resolvent_image_series, Polynomial, Source,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Ties allowed when checking that sweep errors do not grow with κ.
const SWEEP_SLACK: f64 = 1e-12;
const DEFECT_RATIO: f64 = 0.75;
const IMAGE_AGREEMENT: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "graphdiff",
    version,
    about = "Fast diffusion on metric graphs with membrane vertices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Disc {
    Fv,
    Fem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Expm,
    Cn,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a graph file and report whether it is conservative.
    Validate {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Print both limit generators and the mass-loss rates as CSV.
    LimitQ {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the diffusion with its chain limit over a range of speeds.
    Sweep {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0, 1000.0, 10000.0])]
        kappa: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0, 2.0])]
        t: Vec<f64>,
        /// Target cell width.
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, value_enum, default_value_t = Disc::Fv)]
        disc: Disc,
        #[arg(long, default_value_t = 1)]
        trace_order: u8,
        /// `indicator:<edge id>`, `const:<value>` or `ramp`.
        #[arg(long, default_value = "indicator:0")]
        init: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Expm)]
        method: MethodArg,
        /// Lump the element mass matrix.
        #[arg(long)]
        lumped: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Averaging limit of the Neumann resolvent and its image-series check.
    ResolventCheck {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3, 1e-4])]
        lambda: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refinement study of the discrete duality defect.
    DualityCheck {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0.025)]
        h: f64,
        /// Trace order of the finite-volume side (default 2).
        #[arg(long)]
        trace_order: Option<u8>,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 4)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an assembled generator as coordinate triplets.
    Export {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, value_enum, default_value_t = Disc::Fv)]
        disc: Disc,
        #[arg(long, default_value_t = 1)]
        trace_order: u8,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidGraph(_) | Error::UnknownEdge(_) => EXIT_INVALID,
        Error::Parse(_) | Error::Io(_) | Error::InvalidArgument(_) => EXIT_INPUT,
        _ => EXIT_CHECK_FAILED,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Reports go to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load(path: &Path) -> Result<MetricGraph> {
    GraphConfig::load(path)?.graph()
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(e.to_string())),
    }
}

fn parse_init(arg: &str, graph: &MetricGraph) -> Result<InitialData> {
    let bad = || Error::InvalidArgument(format!("cannot read initial data '{arg}'"));
    match arg.split_once(':') {
        Some(("indicator", edge)) => {
            let index = graph
                .edge_index(edge)
                .or_else(|| edge.parse().ok())
                .filter(|&i| i < graph.num_edges())
                .ok_or_else(bad)?;
            Ok(InitialData::Indicator(index))
        }
        Some(("const", c)) => Ok(InitialData::Constant(c.parse().map_err(|_| bad())?)),
        None if arg == "ramp" => Ok(InitialData::Ramp),
        _ => Err(bad()),
    }
}

fn positive_list(name: &str, values: &[f64], allow_zero: bool) -> Result<()> {
    let ok = !values.is_empty()
        && values
            .iter()
            .all(|v| v.is_finite() && (*v > 0.0 || allow_zero && *v == 0.0));
    crate::error::ensure(ok, || {
        format!("--{name} needs a nonempty list of positive numbers")
    })
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate { graph } => {
            let config = GraphConfig::load(&graph)?;
            let report = match config.build() {
                Ok(g) => g.validate(),
                Err(report) => report,
            };
            emit(&format!("{report}\n"), None, stdout)?;
            Ok(if report.is_valid() {
                EXIT_OK
            } else {
                EXIT_INVALID
            })
        }
        Command::LimitQ { graph, out } => {
            let g = load(&graph)?;
            emit(&limit_q_csv(&g)?, out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Sweep {
            graph,
            kappa,
            t,
            h,
            disc,
            trace_order,
            init,
            method,
            lumped,
            out,
        } => {
            let g = load(&graph)?;
            positive_list("kappa", &kappa, false)?;
            positive_list("t", &t, true)?;
            let grid = EdgeGrid::uniform(&g, h)?;
            let discretization = match disc {
                Disc::Fv => Discretization::Fv(TraceOrder::from_order(trace_order)?),
                Disc::Fem => Discretization::Fem { lumped },
            };
            let method = match method {
                MethodArg::Expm => Method::Expm,
                MethodArg::Cn => Method::CrankNicolson,
            };
            let phi0 = parse_init(&init, &g)?;
            let result = kappa_sweep(&g, &grid, &kappa, &t, &phi0, discretization, method)?;
            emit(&result.to_csv(), out.as_deref(), stdout)?;
            Ok(if result.is_monotone(false, SWEEP_SLACK) {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::ResolventCheck { lambda, out } => {
            positive_list("lambda", &lambda, false)?;
            let source = Source::polynomial(0.0, 1.0, Polynomial::new(vec![0.0, 1.0]))?;
            let table = averaging_limit_check(&source, &lambda)?;
            let xs: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
            let mut csv = String::from("lambda,distance,image_series_diff\n");
            let mut agree = true;
            for row in &table.rows {
                let closed = resolvent_apply(0.0, 1.0, row.lambda, &source, &xs)?;
                let series = resolvent_image_series(0.0, 1.0, row.lambda, &source, &xs, 1e-13)?;
                let diff = closed
                    .iter()
                    .zip(&series.values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                // relative: ψ grows like 1/λ
                agree &=
                    diff <= IMAGE_AGREEMENT * closed.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let _ = writeln!(
                    csv,
                    "{:.16e},{:.16e},{:.16e}",
                    row.lambda, row.distance, diff
                );
            }
            emit(&csv, out.as_deref(), stdout)?;
            Ok(if table.is_nonincreasing(0.0) && agree {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::DualityCheck {
            graph,
            kappa,
            h,
            trace_order,
            levels,
            seeds,
            out,
        } => {
            let g = load(&graph)?;
            positive_list("kappa", &[kappa], false)?;
            crate::error::ensure(levels >= 2, || "--levels must be at least 2".into())?;
            let order = TraceOrder::from_order(trace_order.unwrap_or(2))?;
            let grid = EdgeGrid::uniform(&g, h)?;
            let mut csv = String::from("seed,level,h,defect,ratio\n");
            let mut pass = true;
            for seed in 0..seeds {
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                let f = SmoothGraphFunction::random(&g, &mut rng).enforce(
                    &g,
                    kappa,
                    Conditions::Primal,
                )?;
                let phi = SmoothGraphFunction::random(&g, &mut rng).enforce(
                    &g,
                    kappa,
                    Conditions::Dual,
                )?;
                let rows = duality_refinement(&g, &grid, kappa, order, &f, &phi, levels)?;
                for (level, row) in rows.iter().enumerate() {
                    let ratio = if level == 0 {
                        f64::NAN
                    } else {
                        row.defect / rows[level - 1].defect
                    };
                    pass &= level == 0 || ratio <= DEFECT_RATIO;
                    let ratio = if level == 0 {
                        String::new()
                    } else {
                        format!("{ratio:.16e}")
                    };
                    let _ = writeln!(
                        csv,
                        "{seed},{level},{:.16e},{:.16e},{ratio}",
                        row.h, row.defect
                    );
                }
            }
            emit(&csv, out.as_deref(), stdout)?;
            Ok(if pass { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Export {
            graph,
            kappa,
            h,
            disc,
            trace_order,
            out,
        } => {
            let g = load(&graph)?;
            let grid = EdgeGrid::uniform(&g, h)?;
            let gen = match disc {
                Disc::Fv => Discretization::Fv(TraceOrder::from_order(trace_order)?),
                Disc::Fem => Discretization::Fem { lumped: false },
            }
            .assemble(&g, &grid, kappa)?;
            let mut buf = Vec::new();
            gen.write_triplets(&mut buf)
                .map_err(|e| Error::Io(e.to_string()))?;
            emit(&String::from_utf8_lossy(&buf), out.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
    }
}

/// Both generators row by row, a row of flags marking where they differ,
/// and the mass-loss rate of each edge.
pub fn limit_q_csv(graph: &MetricGraph) -> Result<String> {
    let dual = build_q(graph, Variant::Dual)?;
    let primal = build_q(graph, Variant::Primal)?;
    let rates = mass_rate(&dual, &graph.lengths())?;
    let ids: Vec<&str> = graph.edges.iter().map(|e| e.id.as_str()).collect();
    let mut csv = format!("block,row,{}\n", ids.join(","));
    let n = graph.num_edges();
    for (name, q) in [("dual", &dual.q), ("primal", &primal.q)] {
        for i in 0..n {
            let cells: Vec<String> = (0..n).map(|j| format!("{:.16e}", q[(i, j)])).collect();
            let _ = writeln!(csv, "{name},{},{}", ids[i], cells.join(","));
        }
    }
    for (i, id) in ids.iter().enumerate() {
        let flags: Vec<&str> = (0..n)
            .map(|j| {
                if dual.q[(i, j)] != primal.q[(i, j)] {
                    "*"
                } else {
                    ""
                }
            })
            .collect();
        let _ = writeln!(csv, "differs,{},{}", id, flags.join(","));
    }
    let cells: Vec<String> = rates.iter().map(|r| format!("{r:.16e}")).collect();
    let _ = writeln!(csv, "mass_rate,,{}", cells.join(","));
    Ok(csv)
}
