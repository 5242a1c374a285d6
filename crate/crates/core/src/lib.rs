//! Angle-of-arrival estimation for a monostatic base station that fuses its
//! downlink radar echo with uplink bands carrying one user each.

pub mod array;
pub mod crb;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod scene;

pub use array::{
    evd_split, manifold, orth_projector, projector, steering_vector, Angle, ArrayGeometry, CMatrix, CVector, Manifold,
    SubspacePair, C64,
};
pub use crb::{crb_special, crb_targets, manifold_derivative, CrbInputs, CrbMode, CrbResult};
pub use error::{Error, Result};
pub use estimators::{
    fml_estimate, fused_subspace_estimate, naive_music, EstimateResult, Flag, FmlOptions, FusedOptions, GridSpec,
    SearchGrid,
};
pub use harness::{mse, run_experiment, Algorithm, ExperimentSpec, MseRow, MseTable};
pub use scene::{make_scenario, synthesize_band, BandConfig, BandData, Scenario, SceneConfig};
