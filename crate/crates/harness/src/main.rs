use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ope_core::envs::{generate_log, make_synthetic_env, read_log_jsonl, write_log_jsonl, SyntheticSpec};
use ope_core::estimators::{adaipw_estimate, a2ipw_estimate, dm_estimate, VarianceForm};
use ope_core::ingest::parse_libsvm;
use ope_core::nuisance::{sequential_nuisance, NuisanceMethod};
use ope_core::policies::ConstantPolicy;
use ope_core::Method;

use ope_harness::acceptance::{run_suite, AcceptanceOptions, SUITES};
use ope_harness::config::{BehaviorConfig, ExperimentConfig};
use ope_harness::experiment::{make_behavior, run_experiment};

#[derive(Parser)]
#[command(name = "ope", version, about = "Off-policy evaluation from adaptively collected bandit logs")]
struct Cli {
    /// Base seed; overrides the config file.
    #[arg(long, global = true, env = "OPE_SEED")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replication experiment from a JSON config.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short = 'R', long)]
        replications: Option<usize>,
        #[arg(short = 'T', long)]
        t: Option<usize>,
        #[arg(short = 'N', long)]
        n: Option<usize>,
        /// Comma-separated estimator names, e.g. `A2IPW,FA3IPW`.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<Method>>,
        #[arg(long)]
        split_r: Option<f64>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        refit_every: Option<usize>,
        #[arg(long)]
        squared_sum: bool,
        /// Record failing replications instead of aborting.
        #[arg(long)]
        allow_failures: bool,
        /// Fit the evaluation classifier on each replication's logged rows.
        #[arg(long)]
        paper_faithful: bool,
        /// Output file; the format follows the extension (.csv or .json).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run an acceptance suite (`all` runs every suite).
    Accept {
        suite: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Print the verdicts as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Parse a LIBSVM file.
    Parse {
        file: PathBuf,
        #[arg(long)]
        stats: bool,
    },
    /// Simulate a log from a synthetic environment and write it as JSON lines.
    Simulate {
        /// Synthetic environment spec (JSON).
        #[arg(long)]
        env: PathBuf,
        #[arg(short = 'T', long)]
        t: usize,
        /// Behavior: random-walk, linucb or uniform.
        #[arg(long, default_value = "random-walk")]
        behavior: String,
        #[arg(long, default_value_t = 0.7)]
        w: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Quick DM/AdaIPW/A2IPW estimates on a JSON-lines log under a constant
    /// evaluation policy.
    Estimate {
        log: PathBuf,
        /// Comma-separated action probabilities.
        #[arg(long, value_delimiter = ',')]
        policy: Vec<f64>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run {
            config,
            replications,
            t,
            n,
            estimators,
            split_r,
            burn_in,
            epsilon,
            refit_every,
            squared_sum,
            allow_failures,
            paper_faithful,
            output,
            format,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.base_seed = s;
            }
            macro_rules! set {
                ($($field:ident <- $v:expr),*) => {$(if let Some(v) = $v { cfg.$field = v; })*};
            }
            set!(replications <- replications, t <- t, n <- n, estimators <- estimators, split_r <- split_r,
                 epsilon <- epsilon, refit_every <- refit_every);
            if burn_in.is_some() {
                cfg.burn_in = burn_in;
            }
            if squared_sum {
                cfg.variance_form = VarianceForm::SquaredSum;
            }
            cfg.allow_failures |= allow_failures;
            cfg.paper_faithful |= paper_faithful;
            if output.is_some() {
                cfg.output = output;
            }
            let table = run_experiment(&cfg)?;
            if let Some(path) = &cfg.output {
                let file = BufWriter::new(File::create(path).with_context(|| path.display().to_string())?);
                if path.extension().is_some_and(|e| e == "json") {
                    let mut f = file;
                    f.write_all(table.to_json()?.as_bytes())?;
                } else {
                    table.write_csv(file)?;
                }
                eprintln!("wrote {}", path.display());
            }
            match format {
                Format::Csv => print!("{}", table.to_csv_string()),
                Format::Json => println!("{}", table.to_json()?),
                Format::Text => print!("{}", table.render()),
            }
        }
        Command::Accept { suite, data_dir, json } => {
            let mut opts = AcceptanceOptions::default();
            if let Some(d) = data_dir {
                opts.data_dir = d;
            }
            if let Some(s) = cli.seed {
                opts.seed = s;
            }
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut all_passed = true;
            for name in names {
                let r = run_suite(name, &opts)?;
                all_passed &= r.passed;
                if json {
                    println!("{}", serde_json::to_string(&r)?);
                } else {
                    println!("{}", r.line());
                }
            }
            if !all_passed {
                std::process::exit(1);
            }
        }
        Command::Parse { file, stats } => {
            let f = File::open(&file).with_context(|| file.display().to_string())?;
            let ds = parse_libsvm(BufReader::new(f))?;
            println!("{}: {} rows, {} features, {} classes", file.display(), ds.len(), ds.n_features, ds.n_classes);
            if stats {
                let labels = ds.labels();
                for (c, l) in ds.label_map.iter().enumerate() {
                    let count = labels.iter().filter(|&&x| x == c).count();
                    println!("  label {l}: {count} rows");
                }
                let nnz: usize = ds.rows.iter().map(|r| r.features.len()).sum();
                println!("  mean nonzeros per row: {:.2}", nnz as f64 / ds.len().max(1) as f64);
            }
        }
        Command::Simulate {
            env,
            t,
            behavior,
            w,
            output,
        } => {
            let text = std::fs::read_to_string(&env).with_context(|| env.display().to_string())?;
            let spec: SyntheticSpec = serde_json::from_str(&text)?;
            let e = make_synthetic_env(spec)?;
            let bcfg = match behavior.as_str() {
                "random-walk" => BehaviorConfig::RandomWalk { w, step_sd: 0.05 },
                "linucb" => BehaviorConfig::Linucb {
                    w,
                    alpha: 1.0,
                    lambda: 1.0,
                },
                "uniform" => BehaviorConfig::Uniform,
                other => bail!("unknown behavior {other:?}; use random-walk, linucb or uniform"),
            };
            use ope_core::envs::BanditEnvironment;
            let seed = cli.seed.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b = make_behavior(&bcfg, e.num_actions(), e.dim(), seed ^ 0x5eed)?;
            let log = generate_log(&e, b.as_mut(), t, &mut rng)?;
            match output {
                Some(p) => write_log_jsonl(&log, BufWriter::new(File::create(&p)?))?,
                None => write_log_jsonl(&log, std::io::stdout().lock())?,
            }
        }
        Command::Estimate { log, policy } => {
            let f = File::open(&log).with_context(|| log.display().to_string())?;
            let log = read_log_jsonl(BufReader::new(f))?;
            let pi_e = Arc::new(ConstantPolicy::new(policy)?);
            let nuis = sequential_nuisance(&log, NuisanceMethod::default(), 10, 1.0)?;
            for r in [
                dm_estimate(&log, pi_e.as_ref(), &nuis)?,
                adaipw_estimate(&log, pi_e.as_ref())?,
                a2ipw_estimate(&log, pi_e.as_ref(), &nuis)?,
            ] {
                println!("{:<8} {:.6}", r.method.name(), r.theta_hat);
            }
        }
    }
    Ok(())
}
