use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use genlasso::analysis::{
    check_lep, check_srec, check_two_sided, estimate_gmw, gmw_solver_config, LepParams,
};
use genlasso::harness::{mix_seed, run_sweep, write_csv, Experiment, ExperimentSpec};
use genlasso::observation::{mu_monte_carlo, psi_estimate, Nonlinearity, DEFAULT_MOMENT_GRID};
use genlasso::sensing::gaussian_matrix;
use genlasso::{rng_from_seed, Error};
use serde_json::json;

#[derive(Parser)]
#[command(name = "genlasso", version, about = "Generalized Lasso recovery under generative priors")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl SpecArgs {
    fn load(&self) -> Result<ExperimentSpec, Error> {
        let mut spec = ExperimentSpec::load(&self.spec)?;
        if let Some(seed) = self.seed {
            spec.master_seed = seed;
        }
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs a single trial and prints its error report.
    Recover {
        #[command(flatten)]
        spec: SpecArgs,
        /// Number of measurements (defaults to the first in the spec).
        #[arg(long)]
        m: Option<usize>,
        /// Corruption level (defaults to the first in the spec).
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Runs every cell of the spec and writes one CSV row per trial.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Samples pairs from the range and counts S-REC violations.
    CheckSrec {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
    },
    /// Samples pairs from the range and counts upper-bound violations.
    CheckTwoSided {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
    },
    /// Empirical local embedding constant of the spec's nonlinearity.
    CheckLep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Norm window centre (defaults to the link's mu).
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 1_000)]
        pairs: usize,
        /// Constant above which a pair counts as a violation.
        #[arg(long)]
        constant: Option<f64>,
        /// Draw the link's randomness independently for the two points.
        #[arg(long)]
        independent: bool,
    },
    /// Monte-Carlo Gaussian mean width of the generator's range.
    EstimateGmw {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 200)]
        draws: usize,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
    },
    /// Prints mu and psi for a nonlinearity.
    EstimateParams {
        /// e.g. `linear`, `sign:p=0.1`, `probit:sigma=1`, `midriser:delta=0.5`.
        #[arg(long)]
        nonlinearity: String,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn opt(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, |x| json!(x))
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    match cli.command {
        Command::Recover { spec, m, tau, trial } => {
            let spec = spec.load()?;
            let experiment = Experiment::new(&spec)?;
            let m = m.unwrap_or(spec.sensing.m[0]);
            let tau = tau.unwrap_or(spec.sensing.tau[0]);
            let r = experiment.run_trial(m, tau, trial);
            let out = json!({
                "m": r.m,
                "tau": r.tau,
                "seed": r.seed,
                "status": r.status,
                "err_scaled": opt(r.err_scaled),
                "err_cos": opt(r.err_cos),
                "err_cov": opt(r.err_cov),
                "mu_used": opt(r.mu_used),
                "psi_used": opt(r.psi_used),
                "residual": opt(r.residual),
                "restart_best": r.restart_best,
                "membership": r.membership,
            });
            println!("{out}");
            if !r.is_ok() {
                return Err(Error::InvalidParameter(r.status));
            }
        }
        Command::Sweep { spec, out, format: Format::Csv } => {
            let spec = spec.load()?;
            let outcome = run_sweep(&spec)?;
            let mut file = BufWriter::new(File::create(&out)?);
            write_csv(&outcome.records, &mut file)?;
            file.flush()?;
            println!("{}", serde_json::to_string(&outcome.summary)?);
        }
        Command::CheckSrec { spec, m, gamma, delta, pairs } => {
            let spec = spec.load()?;
            let model = spec.generator.build()?;
            let mut rng = rng_from_seed(mix_seed(&[spec.master_seed, 0x7372]));
            let a = gaussian_matrix(m, model.ambient_dim(), &mut rng);
            println!("{}", check_srec(&a, &model, gamma, delta, pairs, &mut rng)?.to_record());
        }
        Command::CheckTwoSided { spec, m, alpha, delta, pairs } => {
            let spec = spec.load()?;
            let model = spec.generator.build()?;
            let mut rng = rng_from_seed(mix_seed(&[spec.master_seed, 0x7372]));
            let a = gaussian_matrix(m, model.ambient_dim(), &mut rng);
            println!("{}", check_two_sided(&a, &model, alpha, delta, pairs, &mut rng)?.to_record());
        }
        Command::CheckLep {
            spec,
            m,
            delta,
            beta,
            mu,
            eta,
            pairs,
            constant,
            independent,
        } => {
            let spec = spec.load()?;
            let experiment = Experiment::new(&spec)?;
            let mut rng = rng_from_seed(mix_seed(&[spec.master_seed, 0x6c65]));
            let a = gaussian_matrix(m, experiment.model.ambient_dim(), &mut rng);
            let params = LepParams {
                mu: mu.unwrap_or(experiment.mu0),
                eta,
                delta,
                beta,
                pairs,
                shared_randomness: !independent,
                constant,
            };
            let report = check_lep(&experiment.link, &a, &experiment.model, &params, &mut rng)?;
            println!("{}", report.to_record());
        }
        Command::EstimateGmw { spec, draws, restarts } => {
            let spec = spec.load()?;
            let model = spec.generator.build()?;
            let cfg = genlasso::solvers::SolverConfig {
                restarts,
                ..gmw_solver_config(spec.master_seed)
            };
            println!("{}", serde_json::to_string(&estimate_gmw(&model, draws, &cfg)?)?);
        }
        Command::EstimateParams { nonlinearity, samples, seed } => {
            let f: Nonlinearity = nonlinearity.parse()?;
            let mut rng = rng_from_seed(seed);
            let mu = mu_monte_carlo(&f, samples, &mut rng)?;
            let psi = psi_estimate(&f, samples, &DEFAULT_MOMENT_GRID, &mut rng)?;
            let out = json!({
                "nonlinearity": f.to_string(),
                "mu": mu.value,
                "mu_stderr": mu.stderr,
                "mu_closed_form": opt(f.mu_closed_form()),
                "psi": psi.value,
                "psi_stderr": psi.stderr,
                "psi_closed_form": opt(f.psi_closed_form()),
                "samples": samples,
            });
            println!("{out}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
