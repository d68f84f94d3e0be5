use std::error::Error as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use eigshape::cli_io::experiment::{build_schedule, run_diagnostics};
use eigshape::cli_io::sweep::{expand, parse_variation, run_sweep, worker_count};
use eigshape::cli_io::{parse_config, read_coeff, read_field, run_experiment, ExperimentConfig};
use eigshape::eigensolver::lambda1;
use eigshape::mesh::DomainMask;
use eigshape::{Error, Result};

#[derive(Parser)]
#[command(
    name = "eigshape",
    version,
    about = "Eigenvalue shape optimization with rough coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline for one config file.
    Run { config: PathBuf },
    /// First Dirichlet eigenvalue on the set where a mask field exceeds 1/2.
    Eigen {
        mask: PathBuf,
        coeff: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Write the eigenfunction to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regularity diagnostics for a stored field.
    Diagnose {
        field: PathBuf,
        coeff: PathBuf,
        /// Config supplying penalty and diagnostics parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Support threshold; defaults to the final smearing width of the config schedule.
        #[arg(long)]
        threshold: Option<f64>,
        /// Directory for the per-point CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cartesian product of variations of a template config.
    Sweep {
        template: PathBuf,
        /// `section.key=v1,v2,...`; may be repeated.
        #[arg(long = "vary", required = true)]
        vary: Vec<String>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct EigenOutput {
    lambda1: f64,
    residual: f64,
    iterations: usize,
    mask_measure: f64,
}

#[derive(Serialize)]
struct SweepLine {
    run_id: String,
    ok: bool,
    lambda1: Option<f64>,
    error: Option<String>,
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config).map_err(|e| e.in_stage("config"))?;
            let out = run_experiment(&cfg)?;
            eprintln!(
                "report written to {}",
                out.dir.join("report.json").display()
            );
            print_json(&out.report)?;
        }
        Command::Eigen {
            mask,
            coeff,
            tol,
            out,
        } => {
            let field = read_field(&mask).map_err(|e| e.in_stage("read"))?;
            let a = read_coeff(&coeff, field.mesh()).map_err(|e| e.in_stage("read"))?;
            let m = DomainMask::from_field(&field, 0.5);
            let eig = lambda1(&m, &a, tol).map_err(|e| e.in_stage("eigen"))?;
            if let Some(path) = out {
                eigshape::cli_io::write_field(&eig.eigenfunction, &path)
                    .map_err(|e| e.in_stage("persist"))?;
            }
            print_json(&EigenOutput {
                lambda1: eig.lambda1,
                residual: eig.residual,
                iterations: eig.iterations,
                mask_measure: m.measure(),
            })?;
        }
        Command::Diagnose {
            field,
            coeff,
            config,
            threshold,
            out,
        } => {
            let cfg = match config {
                Some(p) => load_config(&p).map_err(|e| e.in_stage("config"))?,
                None => ExperimentConfig::default(),
            };
            let u = read_field(&field).map_err(|e| e.in_stage("read"))?;
            let a = read_coeff(&coeff, u.mesh()).map_err(|e| e.in_stage("read"))?;
            let mut p = build_schedule(&cfg, &u).final_penalty();
            if let Some(t) = threshold {
                p.smear_s = t;
                p.validate().map_err(|e| e.in_stage("config"))?;
            }
            if let Some(dir) = &out {
                fs::create_dir_all(dir)?;
            }
            let (summary, _, _) = run_diagnostics(&u, &a, &p, &cfg.diagnostics, out.as_deref())
                .map_err(|e| e.in_stage("diagnostics"))?;
            print_json(&summary)?;
        }
        Command::Sweep { template, vary } => {
            let cfg = load_config(&template).map_err(|e| e.in_stage("config"))?;
            let variations = vary
                .iter()
                .map(|v| parse_variation(v))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_stage("config"))?;
            let configs = expand(&cfg, &variations).map_err(|e| e.in_stage("config"))?;
            let results = run_sweep(&configs, worker_count())?;
            let mut all_ok = true;
            for (c, r) in configs.iter().zip(results) {
                let line = match r {
                    Ok(rep) => SweepLine {
                        run_id: c.output.run_id.clone(),
                        ok: true,
                        lambda1: Some(rep.lambda1),
                        error: None,
                    },
                    Err(e) => {
                        all_ok = false;
                        eprintln!("{}: {}", c.output.run_id, describe(&e));
                        SweepLine {
                            run_id: c.output.run_id.clone(),
                            ok: false,
                            lambda1: None,
                            error: Some(describe(&e)),
                        }
                    }
                };
                println!("{}", serde_json::to_string(&line)?);
            }
            return Ok(all_ok);
        }
    }
    Ok(true)
}

fn describe(e: &Error) -> String {
    let mut text = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        if !text.contains(&s.to_string()) {
            text.push_str(": ");
            text.push_str(&s.to_string());
        }
        source = s.source();
    }
    text
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
