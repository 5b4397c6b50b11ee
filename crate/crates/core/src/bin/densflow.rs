use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use densflow::Error;
use densflow::config::{Config, FieldFormat};
use densflow::diagnostics::verify_lemmas;
use densflow::driver::{Simulation, refinement_study};
use densflow::grid::build_topology;

#[derive(Parser)]
#[command(name = "densflow", version, about = "Variable-density incompressible flow on a uniform grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme and write the estimate ledger and field snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_parser = parse_length)]
        h: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long, value_parser = parse_format)]
        format: Option<FieldFormat>,
    },
    /// Check the discrete calculus identities on random fields.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `diagnostics.trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Defaults to `diagnostics.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run at several mesh sizes and compare against the finest.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated mesh sizes, e.g. `1/8,1/12,1/16`.
        #[arg(long, value_delimiter = ',', value_parser = parse_length)]
        resolutions: Option<Vec<f64>>,
    },
}

/// A decimal or a fraction `p/q`.
fn parse_length(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|e| format!("{e}"))?;
            let q: f64 = q.trim().parse().map_err(|e| format!("{e}"))?;
            p / q
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive length, got {s}"))
    }
}

fn parse_format(s: &str) -> Result<FieldFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_for(e: &Error) -> ExitCode {
    if e.is_contract_violation() { ExitCode::from(2) } else { ExitCode::from(1) }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run {
            config,
            out_dir,
            h,
            alpha,
            t_final,
            format,
        } => {
            let run = || -> Result<ExitCode, Error> {
                let mut cfg = Config::load(&config)?;
                cfg.scheme.h = h.unwrap_or(cfg.scheme.h);
                cfg.scheme.alpha = alpha.unwrap_or(cfg.scheme.alpha);
                cfg.scheme.t_final = t_final.unwrap_or(cfg.scheme.t_final);
                cfg.output.format = format.unwrap_or(cfg.output.format);
                if let Some(d) = out_dir {
                    cfg.output.dir = d;
                }
                let sim = Simulation::from_config(&cfg)?;
                eprintln!(
                    "h = {}, tau = {:e}, {} steps, |Omega_h| = {}, |padded| = {}",
                    sim.params.h,
                    sim.params.tau,
                    sim.params.steps,
                    sim.topo.omega.len(),
                    sim.topo.tilde.len()
                );
                match sim.run() {
                    Ok(out) => {
                        let last = out.ledger.rows.last();
                        println!(
                            "completed {} steps; final kinetic {:e}; ledger in {}",
                            out.ledger.rows.len(),
                            last.map_or(0.0, |r| r.kinetic),
                            cfg.output.dir.display()
                        );
                        Ok(ExitCode::SUCCESS)
                    }
                    Err(f) => {
                        eprintln!("densflow: run aborted at {f}");
                        if f.ledger.is_some() {
                            eprintln!("ledger flushed to {}", cfg.output.dir.display());
                        }
                        Ok(exit_for(&f.error))
                    }
                }
            };
            report(run())
        }
        Command::Verify { config, trials, seed } => {
            let verify = || -> Result<ExitCode, Error> {
                let cfg = Config::load(&config)?;
                let h = cfg.diagnostics.lemma_h.unwrap_or(cfg.scheme.h);
                let topo = build_topology(&cfg.domain_spec(), h)?;
                let trials = trials.unwrap_or(cfg.diagnostics.trials);
                let rep = verify_lemmas(&topo, trials, seed.unwrap_or(cfg.diagnostics.seed))?;
                println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
                Ok(ExitCode::SUCCESS)
            };
            report(verify())
        }
        Command::Study { config, resolutions } => {
            let study = || -> Result<ExitCode, Error> {
                let cfg = Config::load(&config)?;
                let hs = resolutions.unwrap_or_else(|| cfg.diagnostics.resolutions.clone());
                let rep = refinement_study(&cfg, &hs)?;
                let table = rep.table();
                print!("{table}");
                let dir = &cfg.output.dir;
                std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                let path = dir.join("study.csv");
                std::fs::write(&path, &table).map_err(|e| io_error(&path, e))?;
                let path = dir.join("study.json");
                let json = serde_json::to_string_pretty(&rep).expect("report serializes");
                std::fs::write(&path, json).map_err(|e| io_error(&path, e))?;
                Ok(ExitCode::SUCCESS)
            };
            report(study())
        }
    }
}

fn io_error(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn report(r: Result<ExitCode, Error>) -> ExitCode {
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("densflow: {e}");
            if let Error::LemmaViolation { reproduction, .. } = &e {
                eprintln!("{reproduction}");
            }
            exit_for(&e)
        }
    }
}
