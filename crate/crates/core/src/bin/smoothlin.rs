// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use smoothlin::examples::{ExampleParams, Variant};
use smoothlin::report::{self, Phases, RunConfig, RunReport};

#[derive(Parser)]
#[command(name = "smoothlin", version, about = "Conjugacies of coupled nonautonomous difference systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the summability and contraction conditions.
    Check(Opts),
    /// Equivariance and inverse residuals of the conjugacies.
    Conjugate(Opts),
    /// Analytic Jacobians against finite differences.
    Derivatives(Opts),
    /// All phases.
    Report(Opts),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct Opts {
    /// Built-in system (remm, ex1, ex2, end_cfg, emo) or a JSON parameter file.
    #[arg(long)]
    system: Option<String>,
    /// JSON run configuration; other flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma_scale: Option<f64>,
    /// Constant coupling size of the emo system.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    theta_ratio: Option<f64>,
    #[arg(long)]
    rotation_angle: Option<f64>,
    #[arg(long)]
    dim_half: Option<usize>,
    #[arg(long)]
    with_driver: Option<bool>,
    #[arg(long)]
    remm_shift: Option<u32>,
    /// Initial half-width of the summation window.
    #[arg(long)]
    window: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    n_min: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    n_max: Option<i64>,
    #[arg(long)]
    series_tol: Option<f64>,
    #[arg(long)]
    fp_tol: Option<f64>,
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Steps of the equivariance check.
    #[arg(long)]
    steps: Option<usize>,
    /// Probe grid points per axis.
    #[arg(long)]
    grid_count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Run the conjugacy phases even if the hypotheses fail.
    #[arg(long)]
    force: bool,
}

impl Opts {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = &self.system {
            cfg.system = match s.parse::<Variant>() {
                Ok(v) => ExampleParams::new(v),
                Err(_) => {
                    let text = std::fs::read_to_string(s)
                        .with_context(|| format!("{s:?} is neither a built-in system nor a readable file"))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {s}"))?
                }
            };
        }
        let p = &mut cfg.system;
        set(&mut p.lambda, self.lambda);
        set(&mut p.gamma_scale, self.gamma_scale);
        set(&mut p.c, self.c);
        set(&mut p.theta_ratio, self.theta_ratio);
        set(&mut p.rotation_angle, self.rotation_angle);
        set(&mut p.dim_half, self.dim_half);
        set(&mut p.with_driver, self.with_driver);
        set(&mut p.remm_shift, self.remm_shift);
        set(&mut cfg.window_halfwidth, self.window);
        if cfg.window_cap < cfg.window_halfwidth {
            cfg.window_cap = cfg.window_halfwidth;
        }
        set(&mut cfg.n_range.0, self.n_min);
        set(&mut cfg.n_range.1, self.n_max);
        set(&mut cfg.series_tol, self.series_tol);
        set(&mut cfg.fp_tol, self.fp_tol);
        set(&mut cfg.fd_step, self.fd_step);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.steps, self.steps);
        set(&mut cfg.probe_grid.count, self.grid_count);
        cfg.force |= self.force;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn emit(rep: &RunReport, opts: &Opts) -> anyhow::Result<()> {
    let body = match opts.format {
        Format::Json => rep.to_json()?,
        Format::Csv => rep.to_csv()?,
    };
    match &opts.out {
        Some(path) => {
            std::fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))?;
            rep.write_tables_beside(path)?;
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (opts, phases) = match &cli.command {
        Command::Check(o) => (o, Phases::Check),
        Command::Conjugate(o) => (o, Phases::Conjugate),
        Command::Derivatives(o) => (o, Phases::Derivatives),
        Command::Report(o) => (o, Phases::All),
    };
    let result = (|| -> anyhow::Result<RunReport> {
        let cfg = opts.config()?;
        let pool = report::thread_pool_from_env()?;
        let rep = match pool {
            Some(pool) => pool.install(|| report::run(&cfg, phases))?,
            None => report::run(&cfg, phases)?,
        };
        Ok(rep)
    })();
    let rep = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emit(&rep, opts) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    for f in &rep.verdict.failures {
        eprintln!("fail: {f}");
    }
    if rep.verdict.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
