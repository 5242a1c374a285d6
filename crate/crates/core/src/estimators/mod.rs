//! Angle estimators: fused maximum likelihood by alternating projection,
//! the project-then-fuse subspace estimator and the naive MUSIC baseline.

pub mod fml;
pub mod grid;
pub mod music;
pub mod subspace;

use serde::{Deserialize, Serialize};

use crate::array::Angle;

pub use fml::{fml_estimate, fml_initialize, fml_phase1_user_update, fml_phase2_target_update, FmlOptions};
pub use grid::{GridSpec, Peak, Sampled, SearchGrid};
pub use music::{music_spectrum, naive_music};
pub use subspace::{fused_subspace_estimate, g_spectrum, h_spectrum, FusedOptions, FusedOutput};

/// Non-fatal conditions raised while estimating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    NonConvergence,
    InsufficientPeaks,
    DegenerateGap,
    FlatSpectrum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    /// Ascending.
    pub target_angles: Vec<Angle>,
    /// Band order.
    pub user_angles: Vec<Angle>,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Target estimates (radians, ascending) after each iteration.
    pub target_trace: Vec<Vec<f64>>,
    /// User estimates (radians) after each iteration.
    pub user_trace: Vec<Vec<f64>>,
    pub flags: Vec<Flag>,
}

impl EstimateResult {
    pub fn target_radians(&self) -> Vec<f64> {
        self.target_angles.iter().map(|a| a.radians()).collect()
    }

    pub fn user_radians(&self) -> Vec<f64> {
        self.user_angles.iter().map(|a| a.radians()).collect()
    }

    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    pub(crate) fn flag(&mut self, flag: Flag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }
}

/// Search outputs always lie on the grid, which sits inside the field of view.
pub(crate) fn to_angles(thetas: &[f64]) -> Vec<Angle> {
    thetas
        .iter()
        .map(|&t| Angle::new(t).expect("grid points lie inside the field of view"))
        .collect()
}

pub(crate) fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub(crate) fn l2_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
