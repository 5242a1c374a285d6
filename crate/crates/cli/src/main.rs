//! Command-line front end for the Monte Carlo harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hrf_core::harness::{run_experiment_to_dir, ConfigOverrides, ExperimentSpec, ListOrString};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "hrf", version, about = "Monte Carlo AoA experiments with fused DL echo and UL bands")]
struct Cli {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: Option<u8>,
    /// Number of users K.
    #[arg(long)]
    users: Option<usize>,
    /// Number of antennas N.
    #[arg(long)]
    antennas: Option<usize>,
    /// Target directions in degrees, e.g. "0,30,60".
    #[arg(long, allow_hyphen_values = true)]
    targets: Option<String>,
    /// SNR grid in dB: "lo:step:hi", a comma list or a single value.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// Monte Carlo trials per SNR point.
    #[arg(long)]
    trials: Option<usize>,
    /// Subset of fml,fml-prior,fused,naive.
    #[arg(long)]
    algos: Option<String>,
    /// Add the trial-averaged CRB column.
    #[arg(long)]
    crb: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write averaged spectra at the first SNR of the grid.
    #[arg(long)]
    dump_spectra: bool,
    /// Write averaged iteration traces at the first SNR of the grid.
    #[arg(long)]
    dump_trace: bool,
    /// Coarse search step in degrees.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Convergence threshold in radians.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Include the DL echo covariance in the naive MUSIC average.
    #[arg(long)]
    naive_include_dl: Option<bool>,
}

impl Cli {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            scenario: self.scenario,
            users: self.users,
            antennas: self.antennas,
            targets: self.targets.clone().map(ListOrString::Text),
            snr: self.snr.clone().map(ListOrString::Text),
            trials: self.trials,
            algos: self.algos.clone().map(ListOrString::Text),
            crb: self.crb.then_some(true),
            seed: self.seed,
            out: self.out.clone(),
            dump_spectra: self.dump_spectra.then_some(true),
            dump_trace: self.dump_trace.then_some(true),
            grid_step: self.grid_step,
            eps: self.eps,
            max_iters: self.max_iters,
            naive_include_dl: self.naive_include_dl,
        }
    }

    fn resolve(&self) -> hrf_core::Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::default();
        if let Some(path) = &self.config {
            ConfigOverrides::from_file(path)?.apply(&mut spec)?;
        }
        self.overrides().apply(&mut spec)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let spec = match cli.resolve() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("hrf: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run_experiment_to_dir(&spec) {
        Ok(table) => {
            log::info!("{} rows written to {}", table.rows.len(), spec.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hrf: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
