//! Monte Carlo experiment runner: scenario sweeps, MSE tables, spectra and
//! iteration-trace dumps.

mod config;
mod dump;
mod run;
mod table;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::array::{Angle, ArrayGeometry};
use crate::error::{Error, Result};
use crate::estimators::{GridSpec, SearchGrid};
use crate::scene::{Scenario, DEFAULT_TARGETS_DEG};

pub use config::{ConfigOverrides, ListOrString};
pub use dump::{dump_iteration_trace, dump_spectra, iteration_trace, spectra, SpectraDump, TraceDump, TraceRow};
pub use run::{run_experiment, run_experiment_to_dir, write_outputs};
pub use table::{MseRow, MseTable, RESULTS_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Fml,
    /// Fused ML with the user directions known.
    FmlPrior,
    Fused,
    Naive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Fml, Algorithm::FmlPrior, Algorithm::Fused, Algorithm::Naive];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fml => "fml",
            Algorithm::FmlPrior => "fml-prior",
            Algorithm::Fused => "fused",
            Algorithm::Naive => "naive",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?} (expected fml, fml-prior, fused or naive)")))
    }
}

/// Comma-separated algorithm list.
pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

/// Comma-separated list of degrees.
pub fn parse_degrees(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {t:?}"))))
        .collect()
}

/// `lo:step:hi` (inclusive), a comma list, or a single value.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, step, hi] => {
            let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad SNR range {s:?}")));
            let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
            if !(step > 0.0) || hi < lo {
                return Err(Error::Config(format!("bad SNR range {s:?}")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| lo + i as f64 * step).collect())
        }
        [_] => parse_degrees(s),
        _ => Err(Error::Config(format!("bad SNR range {s:?}"))),
    }
}

/// Resolved configuration of one experiment. Angles are in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: u8,
    pub users: usize,
    pub antennas: usize,
    pub targets_deg: Vec<f64>,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub include_crb: bool,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub grid_step_deg: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub naive_include_dl: bool,
    pub dump_spectra: bool,
    pub dump_trace: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: 1,
            users: 2,
            antennas: 5,
            targets_deg: DEFAULT_TARGETS_DEG.to_vec(),
            snr_grid_db: (0..=15).map(|i| -20.0 + 2.0 * i as f64).collect(),
            trials: 200,
            algorithms: Algorithm::ALL.to_vec(),
            include_crb: false,
            master_seed: 0,
            output_dir: PathBuf::from("results"),
            grid_step_deg: 0.5,
            eps: 1e-6,
            max_iters: 30,
            naive_include_dl: true,
            dump_spectra: false,
            dump_trace: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        Scenario::try_from(self.scenario)?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR values must be finite".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.targets_deg.is_empty() {
            return Err(Error::Config("no targets".into()));
        }
        if !(self.eps > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("eps must be positive and max_iters at least 1".into()));
        }
        self.grid_spec().validate()?;
        // builds angles, rejects out-of-range and duplicate targets
        self.target_angles()?;
        crate::scene::band_configs(self.scenario_kind()?, self.users)?;
        ArrayGeometry::half_wavelength(self.antennas)?;
        let d = self.targets_deg.len() + usize::from(self.users > 0);
        if d >= self.antennas {
            return Err(Error::TooFewAntennas { signal_dim: d, antennas: self.antennas });
        }
        Ok(())
    }

    pub fn scenario_kind(&self) -> Result<Scenario> {
        Scenario::try_from(self.scenario)
    }

    /// Targets in ascending order, which is also their index order.
    pub fn target_angles(&self) -> Result<Vec<Angle>> {
        let mut deg = self.targets_deg.clone();
        deg.sort_by(f64::total_cmp);
        if let Some(w) = deg.windows(2).find(|w| (w[1] - w[0]).to_radians().abs() < crate::array::DUPLICATE_ANGLE_TOL) {
            return Err(Error::DuplicateAngle(w[0].to_radians(), w[1].to_radians()));
        }
        deg.into_iter().map(Angle::from_degrees).collect()
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::with_step_deg(self.grid_step_deg)
    }

    pub fn search_grid(&self) -> Result<SearchGrid> {
        SearchGrid::new(ArrayGeometry::half_wavelength(self.antennas)?, self.grid_spec())
    }
}

/// Mean squared error over trials and targets, radians squared.
///
/// Both lists are sorted before pairing, so the order of the estimates within
/// a trial does not matter.
pub fn mse(estimates: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    let q = truth.len();
    if q == 0 || estimates.is_empty() {
        return Err(Error::LengthMismatch { expected: q.max(1), got: 0 });
    }
    let mut t = truth.to_vec();
    t.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for e in estimates {
        total += squared_error(e, &t)?;
    }
    Ok(total / (q * estimates.len()) as f64)
}

/// `sum_p (est_p - truth_p)^2` after sorting; `truth` must already be ascending.
pub(crate) fn squared_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: estimate.len() });
    }
    let mut e = estimate.to_vec();
    e.sort_by(f64::total_cmp);
    Ok(e.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum())
}
