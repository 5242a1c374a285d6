//! Conditional (deterministic-signal) Cramér-Rao bound on the target angles
//! when the DL echo and every UL band are fused.
//!
//! Per band `k` with manifold `A_k` (user column first on UL bands) and
//! derivative `D_k`, `H_k = D_k^H (I - P_k) D_k` where `P_k` projects onto
//! `span(A_k)`. Each snapshot contributes `Re{diag(x)^* H_k diag(x)}`, which
//! the selection `S_k` scatters onto the global target indices. The bound is
//! `sigma^2 / 2` times the inverse of the summed information.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::array::{orth_span_projector, Angle, ArrayGeometry, CMatrix, CVector};
use crate::error::{Error, Result};
use crate::scene::{BandData, SceneConfig};

pub fn manifold_derivative(geometry: &ArrayGeometry, theta: Angle) -> CVector {
    geometry.steer_derivative(theta.radians())
}

#[derive(Debug, Clone)]
pub struct CrbInputs {
    pub geometry: ArrayGeometry,
    pub scene: SceneConfig,
    /// Realized source symbols `X_k`, `d_k x T_k`, rows ordered like `scene.band_angles(k)`.
    pub sources: Vec<CMatrix>,
}

impl CrbInputs {
    pub fn new(geometry: ArrayGeometry, scene: SceneConfig, sources: Vec<CMatrix>) -> Result<Self> {
        if sources.len() != scene.visibility.len() {
            return Err(Error::LengthMismatch { expected: scene.visibility.len(), got: sources.len() });
        }
        for (k, x) in sources.iter().enumerate() {
            let d = scene.band_angles(k).len();
            if x.nrows() != d {
                return Err(Error::Dimension(format!("band {k} sources have {} rows, expected {d}", x.nrows())));
            }
        }
        Ok(Self { geometry, scene, sources })
    }

    pub fn from_bands(geometry: ArrayGeometry, scene: &SceneConfig, bands: &[BandData]) -> Result<Self> {
        Self::new(geometry, scene.clone(), bands.iter().map(|b| b.sources.0.clone()).collect())
    }

    pub fn num_bands(&self) -> usize {
        self.sources.len()
    }

    /// Band manifold `A_k` at the true angles.
    pub fn manifold(&self, k: usize) -> CMatrix {
        self.geometry.steer_matrix(&self.scene.band_angles(k))
    }

    /// Columnwise derivative `D_k`.
    pub fn derivative(&self, k: usize) -> CMatrix {
        let angles = self.scene.band_angles(k);
        let mut d = CMatrix::zeros(self.geometry.n(), angles.len());
        for (j, &t) in angles.iter().enumerate() {
            d.set_column(j, &self.geometry.steer_derivative(t));
        }
        d
    }

    /// `S_k`: `q x d_k`, mapping band columns onto target indices. The user
    /// column of an UL band maps nowhere.
    pub fn selection(&self, k: usize) -> DMatrix<f64> {
        let vis = &self.scene.visibility[k];
        let offset = usize::from(k > 0);
        let mut s = DMatrix::zeros(self.scene.num_targets(), vis.len() + offset);
        for (j, &m) in vis.iter().enumerate() {
            s[(m, j + offset)] = 1.0;
        }
        s
    }

    /// `sum_l S_k F_{k,l} S_k^T` for one band.
    pub fn band_information(&self, k: usize) -> DMatrix<f64> {
        let a = self.manifold(k);
        let d = self.derivative(k);
        let h = d.adjoint() * orth_span_projector(&a) * &d;
        let x = &self.sources[k];
        // sum over snapshots of x_i^* x_j
        let corr = x.conjugate() * x.transpose();
        let f = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| (h[(i, j)] * corr[(i, j)]).re);
        let s = self.selection(k);
        &s * f * s.transpose()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrbResult {
    pub matrix: DMatrix<f64>,
    /// Diagonal of `matrix`, radians squared.
    pub per_target_variance: Vec<f64>,
}

impl CrbResult {
    pub fn mean_variance(&self) -> f64 {
        self.per_target_variance.iter().sum::<f64>() / self.per_target_variance.len() as f64
    }
}

fn bound_from_information(info: DMatrix<f64>, noise_power: f64) -> Result<CrbResult> {
    let q = info.nrows();
    let sym = (&info + info.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min < 1e-12 * max {
        return Err(Error::Unidentifiable);
    }
    let chol = sym.cholesky().ok_or(Error::Unidentifiable)?;
    let inv = chol.solve(&DMatrix::identity(q, q));
    let mut matrix = (&inv + inv.transpose()) * (0.5 * noise_power / 2.0);
    // exact symmetry
    for i in 0..q {
        for j in 0..i {
            matrix[(i, j)] = matrix[(j, i)];
        }
    }
    let per_target_variance = (0..q).map(|i| matrix[(i, i)]).collect();
    Ok(CrbResult { matrix, per_target_variance })
}

fn crb_over_bands(inputs: &CrbInputs, bands: &[usize]) -> Result<CrbResult> {
    let q = inputs.scene.num_targets();
    let mut info = DMatrix::zeros(q, q);
    for &k in bands {
        info += inputs.band_information(k);
    }
    bound_from_information(info, inputs.scene.noise_power)
}

/// Hybrid bound over the DL echo and every UL band.
pub fn crb_targets(inputs: &CrbInputs) -> Result<CrbResult> {
    let bands: Vec<usize> = (0..inputs.num_bands()).collect();
    crb_over_bands(inputs, &bands)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrbMode {
    /// DL echo only.
    Monostatic,
    /// First UL band only.
    Bistatic,
}

pub fn crb_special(mode: CrbMode, inputs: &CrbInputs) -> Result<CrbResult> {
    match mode {
        CrbMode::Monostatic => crb_over_bands(inputs, &[0]),
        CrbMode::Bistatic => {
            if inputs.num_bands() < 2 {
                return Err(Error::Config("bistatic bound needs at least one UL band".into()));
            }
            crb_over_bands(inputs, &[1])
        }
    }
}
