use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use etpoisson::comm::DelayModel;
use etpoisson::convergence::RestartRule;
use etpoisson::event::EventParams;
use etpoisson::grid::{max_nan, ProblemInstance};
use etpoisson::problems::{bubble_instance, manufactured_instance, read_instance, write_instance, BubbleSpec};
use etpoisson::runner::direct::direct_solve;
use etpoisson::runner::sweep::{sweep_experiment, write_csv, SweepSpec};
use etpoisson::runner::{mean_subtracted, run, run_traced, Backend, PolicyKind, RunConfig};

#[derive(Parser)]
#[command(version, about = "Event-triggered asynchronous SOR pressure solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the run report as JSON.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Directory for comm.jsonl, convergence.jsonl and thresholds.csv.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Leave the solution field out of the report.
        #[arg(long)]
        no_solution: bool,
    },
    /// Run an h x d grid of event-triggered runs against the asynchronous
    /// baseline and write a CSV table.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
        h_list: Vec<f64>,
        /// A decay of 0 stands for the asynchronous baseline row.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.8,0.9")]
        d_list: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Solve, then compare against a dense direct solve.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Manufactured,
    Bubble,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Sync,
    Async,
    Event,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Virtual,
    Threads,
}

#[derive(Clone, Copy, ValueEnum)]
enum RestartArg {
    /// Recompute the local residual whenever new boundary values arrive.
    Recheck,
    /// Restart when a fresh boundary norm differs from the ghost norm by at
    /// least --restart-threshold.
    NormChange,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "manufactured")]
    problem: ProblemArg,
    /// Read the instance from a JSON file instead of generating it.
    #[arg(long, conflicts_with = "problem")]
    instance: Option<PathBuf>,
    /// Write the instance used to a JSON file.
    #[arg(long)]
    save_instance: Option<PathBuf>,
    /// Grid size as NXxNY.
    #[arg(long, default_value = "64x32", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Seed for the bubble velocity field.
    #[arg(long, default_value_t = 1)]
    instance_seed: u64,
    /// Time step used to build the bubble right-hand side.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 4)]
    pes: usize,
    #[arg(long, value_enum, default_value = "async")]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1.5)]
    omega: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = EventParams::default().horizon)]
    horizon: f64,
    #[arg(long, default_value_t = EventParams::default().decay)]
    decay: f64,
    #[arg(long, default_value_t = EventParams::default().warmup)]
    warmup: u64,
    #[arg(long, default_value_t = EventParams::default().history)]
    history: usize,
    #[arg(long, default_value_t = RunConfig::default().window)]
    window: u32,
    #[arg(long, value_enum, default_value = "recheck")]
    restart: RestartArg,
    #[arg(long, default_value_t = 0.0)]
    restart_threshold: f64,
    #[arg(long, value_enum, default_value = "virtual")]
    backend: BackendArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slow a PE down, as PE:FACTOR. Repeatable.
    #[arg(long, value_parser = parse_slow)]
    slow: Vec<(usize, u64)>,
    /// Random compute and latency delays instead of unit compute and
    /// instant delivery.
    #[arg(long)]
    jitter: bool,
    /// Microseconds of sleep per unit of delay in the threaded backend.
    #[arg(long)]
    tick_us: Option<u64>,
    #[arg(long, default_value_t = RunConfig::default().step_limit)]
    step_limit: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNY, got {s:?}"))?;
    let nx = a.trim().parse().map_err(|e| format!("bad NX {a:?}: {e}"))?;
    let ny = b.trim().parse().map_err(|e| format!("bad NY {b:?}: {e}"))?;
    Ok((nx, ny))
}

fn parse_slow(s: &str) -> Result<(usize, u64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected PE:FACTOR, got {s:?}"))?;
    let pe = a.parse().map_err(|e| format!("bad PE {a:?}: {e}"))?;
    let factor: u64 = b.parse().map_err(|e| format!("bad factor {b:?}: {e}"))?;
    if factor == 0 {
        return Err("slow-down factor must be at least 1".into());
    }
    Ok((pe, factor))
}

impl RunArgs {
    fn instance(&self) -> Result<ProblemInstance> {
        let inst = match &self.instance {
            Some(path) => {
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                read_instance(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?
            }
            None => {
                let (nx, ny) = self.grid;
                match self.problem {
                    ProblemArg::Manufactured => manufactured_instance(nx, ny)?,
                    ProblemArg::Bubble => {
                        let spec = BubbleSpec::default_for(1.0, ny as f64 / nx as f64);
                        bubble_instance(nx, ny, &spec, self.dt, self.instance_seed)?
                    }
                }
            }
        };
        if let Some(path) = &self.save_instance {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_instance(&inst, &mut w)?;
            w.flush()?;
        }
        Ok(inst)
    }

    fn config(&self) -> Result<RunConfig> {
        let policy = match self.policy {
            PolicyArg::Sync => PolicyKind::Synchronous,
            PolicyArg::Async => PolicyKind::Asynchronous,
            PolicyArg::Event => PolicyKind::EventTriggered(EventParams {
                horizon: self.horizon,
                decay: self.decay,
                warmup: self.warmup,
                history: self.history,
            }),
        };
        let mut delays = if self.jitter {
            DelayModel::jittered()
        } else {
            DelayModel::zero_latency()
        };
        for &(pe, factor) in &self.slow {
            if pe >= self.pes {
                bail!("--slow names PE {pe} but there are only {} PEs", self.pes);
            }
            delays = delays.with_slow(pe, factor);
        }
        if let Some(t) = self.tick_us {
            delays.tick_us = t;
        }
        Ok(RunConfig {
            n_pes: self.pes,
            policy,
            backend: match self.backend {
                BackendArg::Virtual => Backend::Virtual,
                BackendArg::Threads => Backend::Threads,
            },
            omega: self.omega,
            tol: self.tol,
            window: self.window,
            restart: match self.restart {
                RestartArg::Recheck => RestartRule::ResidualRecheck,
                RestartArg::NormChange => RestartRule::NormChange {
                    threshold: self.restart_threshold,
                },
            },
            delays,
            seed: self.seed,
            step_limit: self.step_limit,
        })
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    policy: &'static str,
    converged: bool,
    final_relative_residual: f64,
    max_error: f64,
    tolerance: f64,
    passed: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve {
            run: args,
            trace_dir,
            no_solution,
        } => {
            let inst = args.instance()?;
            let config = args.config()?;
            let (mut report, trace) = run_traced(&inst, &config, trace_dir.is_some())?;
            if let Some(dir) = trace_dir {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                trace.write_comm(BufWriter::new(File::create(dir.join("comm.jsonl"))?))?;
                trace.write_convergence(BufWriter::new(File::create(dir.join("convergence.jsonl"))?))?;
                trace.write_thresholds(BufWriter::new(File::create(dir.join("thresholds.csv"))?))?;
            }
            if no_solution {
                report.solution.clear();
            }
            if !report.passed() {
                eprintln!(
                    "run did not pass: final relative residual {:.3e}, outcome {:?}",
                    report.final_relative_residual, report.outcome
                );
            }
            write_json(args.out.as_deref(), &report)?;
        }
        Command::Sweep {
            run: args,
            h_list,
            d_list,
            repeats,
        } => {
            let inst = args.instance()?;
            let config = args.config()?;
            let spec = SweepSpec {
                h_list,
                d_list,
                repeats,
            };
            let rows = sweep_experiment(&inst, &config, &spec).map_err(anyhow::Error::msg)?;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("h={} d={} seed={}: {}", r.h, r.d, r.seed, r.error.as_deref().unwrap_or(""));
            }
            let mut w = output(args.out.as_deref())?;
            write_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Command::Oracle { run: args } => {
            let inst = args.instance()?;
            let config = args.config()?;
            let reference = mean_subtracted(&direct_solve(&inst)?);
            let report = run(&inst, &config)?;
            let max_error = reference
                .iter()
                .zip(report.mean_subtracted_solution())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, max_nan);
            let tolerance = 100.0 * config.tol;
            write_json(
                args.out.as_deref(),
                &OracleReport {
                    policy: config.policy.name(),
                    converged: report.converged(),
                    final_relative_residual: report.final_relative_residual,
                    max_error,
                    tolerance,
                    passed: report.passed() && max_error <= tolerance,
                },
            )?;
        }
    }
    Ok(())
}
