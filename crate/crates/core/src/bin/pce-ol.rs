use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pce_ol::bench::config::RunConfig;
use pce_ol::bench::exit_code;
use pce_ol::bench::model_io::SavedModel;
use pce_ol::bench::pipeline::{
    index_sets, run_fit, uq_for_model, write_outcome, write_uq_errors, UQ_ERRORS_FILE, UQ_SUMMARY_FILE,
};
use pce_ol::bench::suite::{render_table, run_benchmark, write_benchmark, SuiteConfig};
use pce_ol::pde_suite::ProblemId;
use pce_ol::{Error, Result};

#[derive(Parser)]
#[command(name = "pce-ol", version, about = "Polynomial chaos operator learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory (overrides `out` in the configuration)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `seed` in the configuration)
    #[arg(long)]
    seed: Option<u64>,
    /// Full-resolution 2D heat reference solver and Monte Carlo
    #[arg(long)]
    expensive: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate data, fit a surrogate, evaluate it and run UQ
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Predictive mean/std of a saved model against Monte Carlo
    Uq {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Every problem in both modes, one table row each
    Benchmark {
        /// Suite configuration (default: all problems, data_driven and pc2)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to these problems
        #[arg(long = "problem")]
        problems: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the metadata of a model file
    Inspect { model: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn setup_threads(common: &Common) -> Result<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_run_config(path: &Path, common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    cfg.expensive |= common.expensive;
    Ok(cfg)
}

fn out_dir(common: &Common, configured: Option<&Path>, default: String) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| configured.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("runs").join(default))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Fit { config, common } => {
            setup_threads(&common)?;
            let cfg = load_run_config(&config, &common)?;
            let run = cfg.resolve()?;
            let dir = out_dir(&common, cfg.out.as_deref(), format!("{}_{}", cfg.problem, cfg.mode));
            let outcome = run_fit(&run, None)?;
            write_outcome(&outcome, &run.problem, &dir)?;
            let r = &outcome.report;
            println!("problem {} mode {}", r.problem, r.mode);
            println!("test MSE {:.6e} over {} samples", r.mse, r.n_test);
            if let Some(u) = &r.uq {
                println!("UQ mean MAE {:.6e} std MAE {:.6e} ({} MCS samples)", u.mean_mae, u.std_mae, u.mcs_samples);
            }
            println!("fit {:.2} s, wrote {}", r.timings.fit, dir.display());
            Ok(0)
        }
        Command::Uq { model, config, common } => {
            setup_threads(&common)?;
            let cfg = load_run_config(&config, &common)?;
            let mut run = cfg.resolve()?;
            run.uq_enabled = true;
            let saved = SavedModel::load(&model)?;
            let (set_a, set_b) = index_sets(&run)?;
            saved.check_compatible(run.problem.id, &set_a, &set_b)?;
            let dir = out_dir(&common, cfg.out.as_deref(), format!("{}_{}_uq", cfg.problem, saved.mode));
            let uq = uq_for_model(&saved, &run, None)?;
            let axes = run.problem.axis_names();
            uq.summary.write_csv(&dir.join(UQ_SUMMARY_FILE), &axes)?;
            write_uq_errors(&uq, &axes, &dir.join(UQ_ERRORS_FILE))?;
            let json = serde_json::to_vec_pretty(&uq.errors).map_err(|e| Error::Config(e.to_string()))?;
            pce_ol::bench::write_atomic(&dir.join("uq.json"), &json)?;
            println!(
                "UQ mean MAE {:.6e} std MAE {:.6e} ({} MCS samples), wrote {}",
                uq.errors.mean_mae,
                uq.errors.std_mae,
                uq.errors.mcs_samples,
                dir.display()
            );
            Ok(0)
        }
        Command::Benchmark {
            config,
            problems,
            common,
        } => {
            setup_threads(&common)?;
            let mut suite = match &config {
                Some(p) => SuiteConfig::load(p)?,
                None => SuiteConfig::default(),
            };
            if !problems.is_empty() {
                suite.problems = problems.iter().map(|p| p.parse::<ProblemId>()).collect::<Result<_>>()?;
            }
            if common.seed.is_some() {
                suite.seed = common.seed;
            }
            suite.expensive |= common.expensive;
            let dir = out_dir(&common, suite.out.as_deref(), "benchmark".into());
            suite.out = Some(dir.clone());
            let rows = run_benchmark(&suite, |row| {
                let status = row.failure.as_deref().unwrap_or("ok");
                let mse = row.mse.map_or_else(|| "-".into(), |m| format!("{m:.3e}"));
                eprintln!("{} {}: MSE {mse} [{status}]", row.problem, row.mode);
            })?;
            write_benchmark(&rows, &dir)?;
            print!("{}", render_table(&rows));
            Ok(if rows.iter().all(|r| r.passed()) { 0 } else { 3 })
        }
        Command::Inspect { model } => {
            let m = SavedModel::load(&model)?;
            let c = &m.coefficients;
            let hex = |h: [u8; 32]| h.iter().map(|b| format!("{b:02x}")).collect::<String>();
            println!("problem        {}", m.problem);
            println!("mode           {}", m.mode);
            println!("written by     pce-ol {}", m.crate_version);
            println!("convention     {}", c.convention());
            println!("Q x P          {} x {}", c.q(), c.p());
            let ta = c.set_a.truncation();
            println!(
                "set_A          dim {} degree {} {}",
                c.set_a.dim(),
                ta.total_degree,
                ta.hyperbolic_q.map_or("total-degree".into(), |q| format!("hyperbolic q = {q}"))
            );
            println!("set_B          dim {} degree {}", c.set_b.dim(), c.set_b.truncation().total_degree);
            println!("domain lower   {:?}", c.domain_map.lower());
            println!("domain upper   {:?}", c.domain_map.upper());
            for (i, k) in m.kl.iter().enumerate() {
                println!(
                    "KL field {i}     {} modes, sigma {}, ell {}, captured {:.4}",
                    k.modes(),
                    k.kernel().sigma,
                    k.kernel().ell,
                    k.captured_fraction()
                );
            }
            println!("set_A sha256   {}", hex(m.set_a_hash()));
            println!("set_B sha256   {}", hex(m.set_b_hash()));
            Ok(0)
        }
    }
}
