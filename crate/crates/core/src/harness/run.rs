use std::path::Path;

use rayon::prelude::*;

use crate::array::{ArrayGeometry, CMatrix};
use crate::crb::{crb_targets, CrbInputs};
use crate::error::Result;
use crate::estimators::{
    fml_estimate, fused_subspace_estimate, naive_music, EstimateResult, Flag, FmlOptions, FusedOptions, SearchGrid,
};
use crate::scene::{band_rng, make_scenario_with_targets, synthesize_band, BandConfig, BandData, SceneConfig};

use super::table::{MseRow, MseTable};
use super::{dump, squared_error, Algorithm, ExperimentSpec};

/// Everything shared by the trials of one SNR point.
pub(crate) struct Setup {
    pub geometry: ArrayGeometry,
    pub grid: SearchGrid,
    pub scene: SceneConfig,
    pub bands: Vec<BandConfig>,
}

impl Setup {
    pub(crate) fn new(spec: &ExperimentSpec, snr_db: f64) -> Result<Self> {
        let grid = spec.search_grid()?;
        let geometry = *grid.geometry();
        let (scene, bands) =
            make_scenario_with_targets(spec.scenario_kind()?, spec.users, spec.antennas, spec.target_angles()?, snr_db)?;
        Ok(Self { geometry, grid, scene, bands })
    }

    pub(crate) fn synthesize(&self, seed: u64, snr_index: usize, trial: usize) -> Result<Vec<BandData>> {
        self.bands
            .iter()
            .map(|b| {
                let mut rng = band_rng(seed, snr_index, trial, b.band_index);
                synthesize_band(&self.scene, b, &self.geometry, &mut rng)
            })
            .collect()
    }

    pub(crate) fn truth(&self) -> Vec<f64> {
        self.scene.target_angles.iter().map(|a| a.radians()).collect()
    }
}

pub(crate) fn covariances(bands: &[BandData]) -> Vec<CMatrix> {
    bands.iter().map(|b| b.covariance.clone()).collect()
}

pub(crate) fn estimate(
    algo: Algorithm,
    spec: &ExperimentSpec,
    setup: &Setup,
    covs: &[CMatrix],
) -> Result<EstimateResult> {
    let q = setup.scene.num_targets();
    let vis = &setup.scene.visibility;
    match algo {
        Algorithm::Fml | Algorithm::FmlPrior => {
            let user_prior = (algo == Algorithm::FmlPrior)
                .then(|| setup.scene.user_angles.iter().map(|a| a.radians()).collect());
            let opts = FmlOptions { eps: spec.eps, max_iters: spec.max_iters, user_prior };
            fml_estimate(covs, q, vis, &setup.grid, &opts)
        }
        Algorithm::Fused => {
            let opts = FusedOptions { eps: spec.eps, max_iters: spec.max_iters, record_spectra: false };
            Ok(fused_subspace_estimate(covs, q, vis, &setup.grid, &opts)?.result)
        }
        Algorithm::Naive => {
            let sources = q + setup.scene.num_users();
            naive_music(covs, q, sources, &setup.grid, spec.naive_include_dl)
        }
    }
}

/// Outcome of one algorithm on one trial.
enum Outcome {
    Done { squared_error: f64, converged: bool },
    Failed,
}

struct TrialRecord {
    outcomes: Vec<Outcome>,
    crb: Option<f64>,
}

fn run_trial(spec: &ExperimentSpec, setup: &Setup, snr_index: usize, trial: usize) -> Result<TrialRecord> {
    let bands = setup.synthesize(spec.master_seed, snr_index, trial)?;
    let covs = covariances(&bands);
    let truth = setup.truth();
    let outcomes = spec
        .algorithms
        .iter()
        .map(|&algo| match estimate(algo, spec, setup, &covs) {
            Ok(est) => match squared_error(&est.target_radians(), &truth) {
                Ok(se) => Outcome::Done { squared_error: se, converged: !est.has_flag(Flag::NonConvergence) },
                Err(_) => Outcome::Failed,
            },
            Err(e) => {
                log::warn!("{algo} failed on snr index {snr_index}, trial {trial}: {e}");
                Outcome::Failed
            }
        })
        .collect();
    let crb = if spec.include_crb {
        CrbInputs::from_bands(setup.geometry, &setup.scene, &bands)
            .and_then(|inputs| crb_targets(&inputs))
            .map(|c| c.mean_variance())
            .map_err(|e| log::warn!("bound unavailable on snr index {snr_index}, trial {trial}: {e}"))
            .ok()
    } else {
        None
    };
    Ok(TrialRecord { outcomes, crb })
}

/// Runs every selected algorithm on identical data for each (SNR, trial) pair.
///
/// Trials run in parallel; records are merged in trial order so the table is
/// independent of the thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MseTable> {
    spec.validate()?;
    let q = spec.targets_deg.len() as f64;
    let mut table = MseTable::default();
    for (snr_index, &snr_db) in spec.snr_grid_db.iter().enumerate() {
        let setup = Setup::new(spec, snr_db)?;
        let records: Vec<TrialRecord> = (0..spec.trials)
            .into_par_iter()
            .map(|trial| run_trial(spec, &setup, snr_index, trial))
            .collect::<Result<_>>()?;

        let crb = spec.include_crb.then(|| {
            let vals: Vec<f64> = records.iter().filter_map(|r| r.crb).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        });
        let crb = crb.flatten();

        for (i, algo) in spec.algorithms.iter().enumerate() {
            let mut total = 0.0;
            let mut used = 0;
            let mut failures = 0;
            for r in &records {
                match r.outcomes[i] {
                    Outcome::Done { squared_error, converged } => {
                        total += squared_error;
                        used += 1;
                        if !converged {
                            failures += 1;
                        }
                    }
                    Outcome::Failed => failures += 1,
                }
            }
            let mse_rad2 = if used > 0 { total / (q * used as f64) } else { f64::NAN };
            table.rows.push(MseRow {
                algorithm: algo.name().to_owned(),
                snr_db,
                mse_rad2,
                crb_rad2: crb,
                trials_used: used,
                failures,
            });
        }
        log::info!("snr {snr_db} dB done");
    }
    Ok(table)
}

/// Writes `results.csv` and `spec.json` into `dir`.
pub fn write_outputs(spec: &ExperimentSpec, table: &MseTable, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    table.save(&dir.join("results.csv"))?;
    let json = serde_json::to_string_pretty(spec)?;
    std::fs::write(dir.join("spec.json"), json + "\n")?;
    Ok(())
}

/// Runs the experiment and writes every requested output into `spec.output_dir`.
/// Spectra and traces are taken at the first SNR of the grid.
pub fn run_experiment_to_dir(spec: &ExperimentSpec) -> Result<MseTable> {
    let table = run_experiment(spec)?;
    let dir = &spec.output_dir;
    write_outputs(spec, &table, dir)?;
    let snr = spec.snr_grid_db[0];
    if spec.dump_spectra {
        dump::dump_spectra(spec, snr, spec.master_seed, dir)?;
    }
    if spec.dump_trace {
        dump::dump_iteration_trace(spec, snr, spec.master_seed, dir)?;
    }
    Ok(table)
}
