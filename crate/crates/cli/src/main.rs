use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hysterelax::config::RunConfig;
use hysterelax::driver::{self, LoopConfig, Prepared};
use hysterelax::io::{to_json_string, write_csv, write_json};
use hysterelax::preisach::PreisachOperator;
use hysterelax::Error;

#[derive(Parser)]
#[command(name = "hysterelax", version, about = "Degenerate diffusion with Preisach hysteresis")]
struct Cli {
    /// Worker threads (overrides HYSTERELAX_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to output.dir from the config).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Audit, backward step, time loop, monitors and output files.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run the operator self-test first and fail if it does not pass.
        #[arg(long)]
        check_assembly: bool,
    },
    /// Rerun with tau / 2^k and compare probe trajectories.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Scalar input–output trace of the Preisach operator.
    Loops {
        #[command(flatten)]
        common: Common,
        /// Comma-separated turning inputs, e.g. 0,1,-1,1.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        sequence: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compatibility audit, tau0, sup bound and convexifier summary as JSON.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        check_assembly: bool,
    },
    /// Convexifier diagnostics for the configured density as JSON.
    CheckConvexify {
        #[arg(long)]
        config: PathBuf,
        /// Interval half-width; defaults to the loops sequence range.
        #[arg(long)]
        u_max: Option<f64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Config(_) | Error::InvalidDensity(_) | Error::Grid(_) => 1,
        Error::Incompatible { .. } | Error::TimeStepTooLarge { .. } => 2,
        _ => 3,
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("HYSTERELAX_THREADS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("HYSTERELAX_THREADS must be a positive integer, got {s:?}"))),
        _ => Ok(None),
    }
}

#[cfg(feature = "parallel")]
fn init_threads(n: Option<usize>) -> Result<usize, Error> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(rayon::current_num_threads())
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_: Option<usize>) -> Result<usize, Error> {
    Ok(1)
}

#[derive(Serialize)]
struct Timing {
    wall_time_s: f64,
    threads: usize,
}

fn out_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

fn cmd_run(common: &Common, check_assembly: bool, threads: usize) -> Result<(), Error> {
    let start = Instant::now();
    let cfg = RunConfig::load(&common.config)?;
    let dir = out_dir(&cfg, &common.out_dir);
    std::fs::create_dir_all(&dir)?;
    let p = Prepared::new(&cfg)?;
    if check_assembly {
        let rep = p.op.check_assembly(&p.grid);
        write_json(&dir.join("assembly.json"), &rep)?;
        if !rep.passed {
            return Err(Error::Singular("operator self-test failed, see assembly.json".into()));
        }
    }
    write_json(&dir.join("compatibility.json"), &p.compat)?;
    if let Some(e) = p.incompatibility() {
        for v in &p.compat.violations {
            eprintln!(
                "violation node={} x={} y={} kind={:?} T={:e} r_min={:e} r0={:e}",
                v.node, v.x, v.y, v.kind, v.t, v.r_min, v.r0
            );
        }
        eprintln!("minimal feasible L = {}", p.compat.minimal_l);
        return Err(e);
    }
    let out = driver::execute_prepared(p)?;
    driver::write_run_outputs(&out, &dir)?;
    write_json(
        &dir.join("timing.json"),
        &Timing {
            wall_time_s: start.elapsed().as_secs_f64(),
            threads,
        },
    )?;
    println!(
        "steps={} tau={:e} tau0={:e} Ubar={:e} sup|u|={:e} -> {}",
        out.summary.steps,
        out.summary.tau,
        out.summary.tau0,
        out.summary.ubar,
        out.summary.sup_u_max,
        dir.display()
    );
    Ok(())
}

fn cmd_refine(common: &Common, levels: usize) -> Result<(), Error> {
    let cfg = RunConfig::load(&common.config)?;
    let dir = out_dir(&cfg, &common.out_dir);
    std::fs::create_dir_all(&dir)?;
    let rep = driver::refine(&cfg, levels)?;
    write_json(&dir.join("refine.json"), &rep)?;
    println!("level  tau  energy  dissipation  grad_max  h2  increments");
    for l in &rep.levels {
        println!(
            "{}  {:e}  {:e}  {:e}  {:e}  {:e}  {:?}",
            l.level, l.tau, l.energy_sum, l.dissipation_sum, l.grad_max, l.h2_sum, l.increment_sums
        );
    }
    for (k, d) in rep.diffs.iter().enumerate() {
        println!("diff {k}->{}: {d:?}", k + 1);
    }
    Ok(())
}

fn cmd_loops(common: &Common, sequence: &Option<Vec<f64>>, samples: Option<usize>) -> Result<(), Error> {
    let mut cfg = LoopConfig::load(&common.config)?;
    if let Some(s) = sequence {
        cfg.loops.sequence = s.clone();
    }
    if let Some(n) = samples {
        cfg.loops.samples = n;
    }
    let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    let op = PreisachOperator::new(cfg.density.build()?);
    let tr = driver::loops(&op, &cfg.loops.sequence, cfg.loops.samples)?;
    write_csv(
        &dir.join("loops.csv"),
        &["u", "G"],
        tr.u.iter().zip(&tr.g).map(|(u, g)| vec![*u, *g]),
    )?;
    #[derive(Serialize)]
    struct LoopSummary {
        points: usize,
        closed_from: Option<usize>,
        closed: bool,
        signed_area: f64,
    }
    let s = LoopSummary {
        points: tr.u.len(),
        closed_from: tr.closed_from,
        closed: tr.closed,
        signed_area: tr.signed_area,
    };
    write_json(&dir.join("loops.json"), &s)?;
    print!("{}", to_json_string(&s)?);
    Ok(())
}

fn cmd_check(config: &Path, check_assembly: bool) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    let rep = driver::check(&cfg, check_assembly)?;
    print!("{}", to_json_string(&rep)?);
    Ok(())
}

fn cmd_check_convexify(config: &Path, u_max: Option<f64>) -> Result<(), Error> {
    let cfg = LoopConfig::load(config)?;
    let u = u_max
        .or(cfg.loops.u_max)
        .unwrap_or_else(|| cfg.loops.sequence.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if !(u > 0.0) {
        return Err(Error::Config("u_max must be positive".into()));
    }
    let op = PreisachOperator::new(cfg.density.build()?);
    let rep = driver::convexifier_summary(&op, u)?
        .ok_or_else(|| Error::Convexify("density has no decay function".into()))?;
    print!("{}", to_json_string(&rep)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors share the parse-failure code
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = thread_count(cli.threads).and_then(init_threads).and_then(|threads| match &cli.cmd {
        Cmd::Run { common, check_assembly } => cmd_run(common, *check_assembly, threads),
        Cmd::Refine { common, levels } => cmd_refine(common, *levels),
        Cmd::Loops {
            common,
            sequence,
            samples,
        } => cmd_loops(common, sequence, *samples),
        Cmd::Check { config, check_assembly } => cmd_check(config, *check_assembly),
        Cmd::CheckConvexify { config, u_max } => cmd_check_convexify(config, *u_max),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
