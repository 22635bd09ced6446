//! Command-line interface.
//!
//! Machine-readable output goes to stdout or `--out`; logs go to stderr.
//! Exit codes: 0 success, 1 verification failure, 2 usage or parameter
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytic::{self, Method};
use crate::empirical::EstimatorConfig;
use crate::error::{LabError, Result};
use crate::harness::{self, FigureId, FigureOptions, Mode, SweepGrid, SweepReport};
use crate::model::{sample_dataset, GenParams};

/// Seed used when neither `--seed` nor `SUPPRESSOR_LAB_SEED` is given.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

pub const SEED_ENV: &str = "SUPPRESSOR_LAB_SEED";

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed {s:?}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "suppressor-lab", version, about = "Attribution methods on a two-feature suppressor model")]
struct Cli {
    /// Random seed (decimal or 0x-prefixed hex).
    #[arg(long, global = true, env = SEED_ENV, value_parser = parse_seed, default_value = "0xC0FFEE")]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Noise correlation in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    c: f64,
    /// Noise variance of feature 1.
    #[arg(long)]
    s1sq: f64,
    /// Noise variance of feature 2.
    #[arg(long)]
    s2sq: f64,
    /// Signal leakage into feature 2.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    epsilon: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<GenParams> {
        GenParams::from_variances(self.c, self.s1sq, self.s2sq, self.epsilon)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GridPreset {
    /// c in {-0.8, -0.4, 0, 0.4, 0.8}, s1sq in {0.1, 0.5, 0.8, 1}, s2sq in {0.1, 0.5, 0.9}.
    Default,
    /// The default grid restricted to c = 0.
    Uncorrelated,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a labeled dataset as `x1,x2,y` CSV.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one method in closed form and print JSON.
    Eval {
        #[arg(long)]
        method: Method,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        x1: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x2: Option<f64>,
        /// Integrated-gradients baseline as `x1,x2`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 0.0])]
        baseline: Vec<f64>,
    },
    /// Compare every method with its empirical estimator over a grid.
    Sweep {
        #[arg(long, value_enum, default_value = "default")]
        grid: GridPreset,
        /// Override the correlation axis (comma-separated).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        c_values: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        s1sq_values: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        s2sq_values: Option<Vec<f64>>,
        /// Ten times fewer samples with tolerances widened by sqrt(10).
        #[arg(long)]
        quick: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the long-format table behind a figure.
    Figure {
        /// fig2, fig3, fig4, fig5, figA6 or figA7.
        #[arg(long)]
        id: FigureId,
        /// s1sq values of the curve family (fig3, figA6, figA7).
        #[arg(long, value_delimiter = ',')]
        s1sq_family: Option<Vec<f64>>,
        /// Sampled points per setting for scatter layers.
        #[arg(long, default_value_t = 500)]
        n_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite and print a per-criterion table.
    Verify {
        #[arg(long)]
        quick: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Serialize)]
struct EvalOutput {
    method: Method,
    params: GenParams,
    e1: f64,
    e2: f64,
    #[serde(flatten)]
    attribution: analytic::Attribution,
}

#[derive(Serialize)]
struct FlatSweepRow<'a> {
    grid_index: usize,
    c: f64,
    s1sq: f64,
    s2sq: f64,
    epsilon: f64,
    method: &'a str,
    feature: usize,
    x1: Option<f64>,
    x2: Option<f64>,
    analytic_value: Option<f64>,
    empirical_value: Option<f64>,
    std_error: Option<f64>,
    tolerance: Option<f64>,
    pass: bool,
    error: Option<&'a str>,
}

fn write_sweep_csv(report: &SweepReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &report.rows {
        w.serialize(FlatSweepRow {
            grid_index: r.grid_index,
            c: r.params.c,
            s1sq: r.params.s1sq,
            s2sq: r.params.s2sq,
            epsilon: r.params.epsilon,
            method: r.method.id(),
            feature: r.feature,
            x1: r.instance.map(|x| x[0]),
            x2: r.instance.map(|x| x[1]),
            analytic_value: r.analytic_value,
            empirical_value: r.empirical_value,
            std_error: r.std_error,
            tolerance: r.tolerance,
            pass: r.pass,
            error: r.error.as_deref(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    let seed = cli.seed;
    match cli.command {
        Command::Sample { model, n, out } => {
            let data = sample_dataset(&model.params()?, n, seed)?;
            data.write_csv(output(out.as_ref())?)?;
            log::info!("wrote {n} records");
        }
        Command::Eval {
            method,
            model,
            x1,
            x2,
            baseline,
        } => {
            let params = model.params()?;
            let instance = match (x1, x2) {
                (Some(a), Some(b)) => Some([a, b]),
                (None, None) => None,
                _ => {
                    return Err(LabError::ParameterDomain("--x1 and --x2 must be given together".into()));
                }
            };
            let [b1, b2] = baseline[..] else {
                return Err(LabError::ParameterDomain(format!(
                    "--baseline needs two comma-separated values (got {})",
                    baseline.len()
                )));
            };
            let attr = analytic::evaluate(method, &params, instance, [b1, b2])?;
            let mut out = output(None)?;
            serde_json::to_writer_pretty(
                &mut out,
                &EvalOutput {
                    method,
                    params,
                    e1: attr.e1(),
                    e2: attr.e2(),
                    attribution: attr,
                },
            )?;
            writeln!(out)?;
        }
        Command::Sweep {
            grid,
            c_values,
            s1sq_values,
            s2sq_values,
            quick,
            format,
            out,
        } => {
            let mut g = SweepGrid::default();
            if let GridPreset::Uncorrelated = grid {
                g.c_values = vec![0.0];
            }
            if let Some(v) = c_values {
                g.c_values = v;
            }
            if let Some(v) = s1sq_values {
                g.s1sq_values = v;
            }
            if let Some(v) = s2sq_values {
                g.s2sq_values = v;
            }
            let cfg = if quick { EstimatorConfig::quick() } else { EstimatorConfig::default() }.with_seed(seed);
            let start = Instant::now();
            let report = harness::run_sweep(&g, &cfg)?;
            log::info!(
                "sweep: {} rows, {} passed, {:.1} s",
                report.rows.len(),
                report.meta.n_passed,
                start.elapsed().as_secs_f64()
            );
            let mut w = output(out.as_ref())?;
            match format {
                Format::Json => writeln!(w, "{}", report.to_json()?)?,
                Format::Csv => write_sweep_csv(&report, &mut w)?,
            }
            w.flush()?;
        }
        Command::Figure {
            id,
            s1sq_family,
            n_points,
            out,
        } => {
            let mut opts = FigureOptions {
                seed,
                n_points,
                ..Default::default()
            };
            if let Some(f) = s1sq_family {
                opts.s1sq_family = f;
            }
            let data = harness::emit_figure_data(id, &opts)?;
            let mut w = output(out.as_ref())?;
            data.write_csv(&mut w)?;
            w.flush()?;
            log::info!("{id}: {} rows", data.len());
        }
        Command::Verify { quick, json } => {
            let mode = if quick { Mode::Quick } else { Mode::Full };
            let start = Instant::now();
            let report = harness::run_acceptance(seed, mode);
            log::info!("verify finished in {:.1} s", start.elapsed().as_secs_f64());
            let mut w = output(None)?;
            write!(w, "{}", report.render_table())?;
            w.flush()?;
            if let Some(path) = json {
                let mut f = output(Some(&path))?;
                writeln!(f, "{}", report.to_json()?)?;
                f.flush()?;
            }
            return Ok(if report.all_passed() { 0 } else { 1 });
        }
    }
    Ok(0)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_accept_hex_and_decimal() {
        assert_eq!(parse_seed("0xC0FFEE").unwrap(), DEFAULT_SEED);
        assert_eq!(parse_seed("12").unwrap(), 12);
        assert!(parse_seed("zz").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["suppressor-lab", "bogus"]), 2);
        assert_eq!(
            main_with_args(["suppressor-lab", "eval", "--method", "nope", "--c", "0", "--s1sq", "1", "--s2sq", "1"]),
            2
        );
    }

    #[test]
    fn domain_errors_exit_two() {
        assert_eq!(
            main_with_args(["suppressor-lab", "eval", "--method", "pfi", "--c", "1.5", "--s1sq", "0.8", "--s2sq", "0.5"]),
            2
        );
    }
}
