use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slowdrift::controller::{fixed_point, k_star, PhiMap};
use slowdrift::gap_bounds::FunctionParams;
use slowdrift::harness::config::{parse_seeds, PsiConfig, RunConfig, TaskConfig};
use slowdrift::harness::exit_code;
use slowdrift::harness::plot::emit_plotdata;
use slowdrift::harness::run::{build_task, load_data, run_to_dir};
use slowdrift::harness::validate::{validate_bounds, write_report, ValidateConfig};
use slowdrift::{Error, Result};

#[derive(Parser)]
#[command(name = "slowdrift", version, about = "Adaptive sample budgets for slowly drifting stochastic optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed list: "0..20", "7" or "1,4,9". Overrides the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic experiment.
    Run(RunArgs),
    /// Replay a CSV dataset period by period.
    Replay(RunArgs),
    /// Write plot tables for a finished run directory.
    Plotdata {
        #[arg(long)]
        out: PathBuf,
        /// Tasks to draw ROC tables for (classification runs).
        #[arg(long, value_delimiter = ',')]
        roc_n: Option<Vec<usize>>,
    },
    /// Monte Carlo dominance check of every bound kind.
    ValidateBounds {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Fixed point of the mean-gap map at the known-drift budget.
    FixedPoint {
        #[arg(long)]
        config: PathBuf,
        /// Budget to analyse; defaults to K* for the configured target.
        #[arg(long)]
        k: Option<u64>,
    },
}

fn load_run(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(args: &RunArgs, replay: bool) -> Result<()> {
    let cfg = load_run(args)?;
    let is_csv = matches!(cfg.task, TaskConfig::Csv { .. });
    if replay != is_csv {
        return Err(Error::Config(if replay {
            "replay needs a csv task".into()
        } else {
            "use the replay subcommand for csv tasks".into()
        }));
    }
    let summary = run_to_dir(&cfg, &args.out, args.workers)?;
    println!("wrote {} seeds to {}", summary.outcomes.len(), summary.dir.display());
    Ok(())
}

fn fixed_point_cmd(config: &Path, k: Option<u64>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = cfg.seeds[0];
    let data = load_data(&cfg)?;
    let (task, analytic) = build_task(&cfg, seed, data.as_ref())?;
    let set = cfg.set.build(task.model().dim())?;
    let diam_sq = set.diam_sq();
    let p = match cfg.psi {
        PsiConfig::Analytic {} => FunctionParams { diam_sq, ..analytic.expect("checked by validation") },
        PsiConfig::Fixed { m, big_m, a, b, c_g } => FunctionParams { m, big_m, a, b, c_g, diam_sq },
        PsiConfig::Estimated { .. } => return Err(Error::Config("fixed-point needs known constants (analytic or fixed psi)".into())),
    };
    let rho = cfg
        .policy
        .rho
        .or(task.declared_rho())
        .ok_or_else(|| Error::Config("fixed-point needs policy.rho or a declared drift".into()))?;
    let bound = cfg.step.bound(cfg.bound.kind, p, cfg.epsilon)?;
    let k = match k {
        Some(k) => k,
        None => k_star(cfg.epsilon, rho, &bound, p.m, cfg.k_max)?,
    };
    let map = PhiMap::from_bound(&bound, k, p.m, rho)?;
    let fp = fixed_point(&map, 1e-10, cfg.epsilon)?;
    println!("k,alpha,beta,v_bar,phi_prime,iterations,degenerate");
    println!("{k},{},{},{},{},{},{}", map.alpha, map.beta, fp.v, fp.derivative, fp.iterations, fp.degenerate);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => run(&a, false),
        Command::Replay(a) => run(&a, true),
        Command::Plotdata { out, roc_n } => {
            for f in emit_plotdata(&out, roc_n.as_deref())? {
                println!("{}", out.join(f).display());
            }
            Ok(())
        }
        Command::ValidateBounds { config, out, workers } => {
            let cfg = match config {
                Some(p) => ValidateConfig::load(&p)?,
                None => ValidateConfig::default(),
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            let rows = pool.install(|| validate_bounds(&cfg))?;
            std::fs::create_dir_all(&out)?;
            write_report(&out.join("dominance.csv"), &rows)?;
            let nominal: Vec<_> = rows.iter().filter(|r| r.arm == "nominal").collect();
            let control: Vec<_> = rows.iter().filter(|r| r.arm != "nominal").collect();
            println!(
                "nominal: {}/{} dominated; halved-m control: {}/{} violations",
                nominal.iter().filter(|r| r.pass).count(),
                nominal.len(),
                control.iter().filter(|r| !r.pass).count(),
                control.len()
            );
            Ok(())
        }
        Command::FixedPoint { config, k } => fixed_point_cmd(&config, k),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
