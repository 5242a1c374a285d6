use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::CMatrix;
use crate::error::{Error, Result};
use crate::estimators::music::naive_noise_subspace;
use crate::estimators::{fused_subspace_estimate, music_spectrum, EstimateResult, FusedOptions};

use super::run::{covariances, estimate, Setup};
use super::{Algorithm, ExperimentSpec};

/// RNG stream index reserved for dumps so they never share noise with the sweep.
const DUMP_SNR_INDEX: usize = 0xFFFF;

/// Trial-averaged spectra on the search grid, in dB relative to each peak.
///
/// Averaging is done on the dB values (a geometric mean): the peaks of
/// `g_k^{-1}` and `h^{-1}` are near-singular, so a linear mean is dominated by
/// the one trial whose peak lands closest to a grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectraDump {
    pub theta_deg: Vec<f64>,
    pub music_db: Vec<f64>,
    pub h_db: Vec<f64>,
    /// One spectrum per user, band order.
    pub g_db: Vec<Vec<f64>>,
    pub trials_used: usize,
}

/// Mean of the accumulated dB values, shifted so the peak sits at 0 dB.
fn normalized_mean(acc: &[f64], count: usize) -> Vec<f64> {
    let mean: Vec<f64> = acc.iter().map(|v| v / count as f64).collect();
    let peak = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mean.iter().map(|v| v - peak).collect()
}

fn to_db(v: f64) -> f64 {
    10.0 * v.max(1e-300).log10()
}

fn add_into(acc: &mut [f64], values: impl Iterator<Item = f64>) {
    for (a, v) in acc.iter_mut().zip(values) {
        *a += v;
    }
}

struct TrialSpectra {
    music: Vec<f64>,
    h: Vec<f64>,
    g: Vec<Vec<f64>>,
}

fn trial_spectra(spec: &ExperimentSpec, setup: &Setup, covs: &[CMatrix]) -> Result<TrialSpectra> {
    let q = setup.scene.num_targets();
    let n = setup.geometry.n();
    let un = naive_noise_subspace(covs, q, q + setup.scene.num_users(), n, spec.naive_include_dl)?;
    let music = music_spectrum(&un, &setup.grid).into_iter().map(|(_, v)| v).collect();
    let opts = FusedOptions { eps: spec.eps, max_iters: spec.max_iters, record_spectra: true };
    let out = fused_subspace_estimate(covs, q, &setup.scene.visibility, &setup.grid, &opts)?;
    let last = out.spectra.last().ok_or(Error::DegenerateProjection)?;
    Ok(TrialSpectra {
        music,
        h: last.h.sampled.iter().map(|&(_, v)| v).collect(),
        g: last.g.iter().map(|g| g.sampled.iter().map(|&(_, v)| v).collect()).collect(),
    })
}

/// Averages the naive MUSIC spectrum and the final-iteration `h^{-1}` and
/// `g_k^{-1}` spectra over `spec.trials` trials at `snr_db`.
pub fn spectra(spec: &ExperimentSpec, snr_db: f64, seed: u64) -> Result<SpectraDump> {
    spec.validate()?;
    if !spec.algorithms.contains(&Algorithm::Fused) {
        return Err(Error::Config("spectra dumps need the fused algorithm selected".into()));
    }
    let setup = Setup::new(spec, snr_db)?;
    let per_trial: Vec<Option<TrialSpectra>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let bands = setup.synthesize(seed, DUMP_SNR_INDEX, trial)?;
            Ok(trial_spectra(spec, &setup, &covariances(&bands))
                .map_err(|e| log::warn!("spectra trial {trial} skipped: {e}"))
                .ok())
        })
        .collect::<Result<_>>()?;

    let m = setup.grid.thetas().len();
    let k = setup.scene.num_users();
    let mut music = vec![0.0; m];
    let mut h = vec![0.0; m];
    let mut g = vec![vec![0.0; m]; k];
    let mut used = 0;
    for t in per_trial.into_iter().flatten() {
        add_into(&mut music, t.music.into_iter().map(to_db));
        add_into(&mut h, t.h.into_iter().map(to_db));
        for (acc, gk) in g.iter_mut().zip(t.g) {
            add_into(acc, gk.into_iter().map(to_db));
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllPointsDegenerate);
    }
    Ok(SpectraDump {
        theta_deg: setup.grid.thetas().iter().map(|t| t.to_degrees()).collect(),
        music_db: normalized_mean(&music, used),
        h_db: normalized_mean(&h, used),
        g_db: g.iter().map(|gk| normalized_mean(gk, used)).collect(),
        trials_used: used,
    })
}

fn write_spectrum(path: &Path, theta_deg: &[f64], value_db: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["theta_deg", "value_db"])?;
    for (t, v) in theta_deg.iter().zip(value_db) {
        wtr.write_record([t.to_string(), v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `music_spectrum.csv`, `h_spectrum.csv` and `g_spectrum_<k>.csv`
/// (k = 1..K) into `dir`.
pub fn dump_spectra(spec: &ExperimentSpec, snr_db: f64, seed: u64, dir: &Path) -> Result<SpectraDump> {
    let d = spectra(spec, snr_db, seed)?;
    std::fs::create_dir_all(dir)?;
    write_spectrum(&dir.join("music_spectrum.csv"), &d.theta_deg, &d.music_db)?;
    write_spectrum(&dir.join("h_spectrum.csv"), &d.theta_deg, &d.h_db)?;
    for (k, gk) in d.g_db.iter().enumerate() {
        write_spectrum(&dir.join(format!("g_spectrum_{}.csv", k + 1)), &d.theta_deg, gk)?;
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub algorithm: String,
    /// 1-based.
    pub iteration: usize,
    /// Targets first (`0..q`), then users (`q..q+K`).
    pub angle_index: usize,
    pub estimate_deg: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TraceDump {
    pub rows: Vec<TraceRow>,
}

impl TraceDump {
    /// Averaged estimate of one angle over iterations `1..=max_iters`.
    pub fn series(&self, algorithm: &str, angle_index: usize) -> Vec<f64> {
        let mut rows: Vec<&TraceRow> =
            self.rows.iter().filter(|r| r.algorithm == algorithm && r.angle_index == angle_index).collect();
        rows.sort_by_key(|r| r.iteration);
        rows.into_iter().map(|r| r.estimate_deg).collect()
    }
}

/// Estimates after each iteration, padded with the final value up to `len`.
fn padded_trace(est: &EstimateResult, len: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let j = i.min(est.target_trace.len().saturating_sub(1));
        let mut row = est.target_trace[j].clone();
        if let Some(u) = est.user_trace.get(j) {
            row.extend(u);
        }
        out.push(row);
    }
    out
}

/// Per-iteration estimates averaged over `spec.trials` trials for each
/// iterative algorithm in `spec.algorithms`.
pub fn iteration_trace(spec: &ExperimentSpec, snr_db: f64, seed: u64) -> Result<TraceDump> {
    spec.validate()?;
    let setup = Setup::new(spec, snr_db)?;
    let algos: Vec<Algorithm> = spec.algorithms.iter().copied().filter(|&a| a != Algorithm::Naive).collect();
    let len = spec.max_iters;
    let per_trial: Vec<Vec<Option<Vec<Vec<f64>>>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let bands = setup.synthesize(seed, DUMP_SNR_INDEX, trial)?;
            let covs = covariances(&bands);
            Ok(algos
                .iter()
                .map(|&algo| {
                    estimate(algo, spec, &setup, &covs)
                        .map(|est| padded_trace(&est, len))
                        .map_err(|e| log::warn!("trace trial {trial} skipped for {algo}: {e}"))
                        .ok()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let width = setup.scene.num_targets() + setup.scene.num_users();
    let mut dump = TraceDump::default();
    for (i, algo) in algos.iter().enumerate() {
        let mut acc = vec![vec![0.0; width]; len];
        let mut used = 0;
        for trace in per_trial.iter().filter_map(|t| t[i].as_ref()) {
            for (a, row) in acc.iter_mut().zip(trace) {
                add_into(a, row.iter().copied());
            }
            used += 1;
        }
        if used == 0 {
            continue;
        }
        for (it, row) in acc.iter().enumerate() {
            for (idx, v) in row.iter().enumerate() {
                dump.rows.push(TraceRow {
                    algorithm: algo.name().to_owned(),
                    iteration: it + 1,
                    angle_index: idx,
                    estimate_deg: (v / used as f64).to_degrees(),
                });
            }
        }
    }
    Ok(dump)
}

/// Writes `trace.csv` into `dir`.
pub fn dump_iteration_trace(spec: &ExperimentSpec, snr_db: f64, seed: u64, dir: &Path) -> Result<TraceDump> {
    let d = iteration_trace(spec, snr_db, seed)?;
    std::fs::create_dir_all(dir)?;
    let mut wtr = csv::Writer::from_path(dir.join("trace.csv"))?;
    for r in &d.rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(d)
}
