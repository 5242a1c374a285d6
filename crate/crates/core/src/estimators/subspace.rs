//! Project-then-fuse subspace estimation.
//!
//! Phase 1 nulls the DL target span with `P0` and reads each user direction
//! off the dominant singular vector of `P0 R_k`. Phase 2 nulls each user with
//! `Q_k`, extracts the target subspace of `Q_k R_k`, and fuses every band into
//! one spectrum `h` whose first term is the DL MUSIC cost.
//!
//! Both spectra measure the fitting residual inside the subspace left by the
//! nulling projector. Measured in the full space the residual keeps the
//! component along the nulled directions, which moves the spectral peaks away
//! from the true angles even without noise.

use serde::Serialize;

use crate::array::{
    evd_split, frobenius, orth_span_projector, pinv, quad_form, top_left_singular, CMatrix, CVector, PINV_RTOL,
};
use crate::error::{Error, Result};

use super::fml::{check_visibility, GUARD_RTOL};
use super::grid::SearchGrid;
use super::{l2_change, sorted, to_angles, EstimateResult, Flag};

/// Below this `|v^H P0 v|` the projected singular vector is considered nulled.
pub const PROJECTION_GUARD: f64 = 1e-10;
/// Spectrum values are reported as `1 / max(cost, COST_FLOOR)`.
const COST_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone)]
pub struct FusedOptions {
    pub eps: f64,
    pub max_iters: usize,
    /// Keep the sampled g and h spectra of every iteration.
    pub record_spectra: bool,
}

impl Default for FusedOptions {
    fn default() -> Self {
        Self { eps: 1e-6, max_iters: 30, record_spectra: false }
    }
}

/// `I - a a^H / ||a||^2` for the user direction `theta`.
pub fn user_nulling_projector(grid: &SearchGrid, theta: f64) -> CMatrix {
    let a = grid.geometry().steer(theta);
    let n = a.len();
    CMatrix::identity(n, n) - (&a * a.adjoint()).unscale(a.norm_squared())
}

/// Normalized residual of fitting `a(theta)` with the dominant vector `v` of
/// `P0 R_k`, measured inside the range of `P0`.
struct UserCost {
    fit: CMatrix,
    p0: CMatrix,
    guard: f64,
}

impl UserCost {
    fn new(v: &CVector, p0: &CMatrix) -> Result<Self> {
        let c = quad_form(p0, v);
        if c.abs() < PROJECTION_GUARD {
            return Err(Error::DegenerateProjection);
        }
        // v (v^H P0 v)^{-1} v^H P0
        let fit = (v * (v.adjoint() * p0)).unscale(c);
        Ok(Self { fit, p0: p0.clone(), guard: GUARD_RTOL * p0.nrows() as f64 })
    }

    fn eval(&self, a: &CVector) -> Option<f64> {
        let den = quad_form(&self.p0, a);
        if den < self.guard {
            return None;
        }
        let resid = &self.fit * a - a;
        Some((&self.p0 * resid).norm_squared() / den)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UserSpectrum {
    pub theta: f64,
    /// `g^{-1}` at the refined peak.
    pub peak: f64,
    /// `(theta, g^{-1}(theta))` on the grid; guarded points carry 1.
    pub sampled: Vec<(f64, f64)>,
    pub degenerate_gap: bool,
}

/// User spectrum `g_k^{-1}` of one UL band and its refined maximizer.
pub fn g_spectrum(r: &CMatrix, p0: &CMatrix, grid: &SearchGrid) -> Result<UserSpectrum> {
    let projected = p0 * r;
    let sb = top_left_singular(&projected, 1)?;
    // P0 removes everything: the dominant vector is arbitrary
    if sb.singular_values.first().is_none_or(|&s| s <= PINV_RTOL * frobenius(r)) {
        return Err(Error::DegenerateProjection);
    }
    let v: CVector = sb.basis.column(0).into_owned();
    let cost = UserCost::new(&v, p0)?;
    let objective = |a: &CVector| cost.eval(a).map(|g| -g);
    let sampled = grid.sample(objective);
    let peak = grid.argmax_sampled(&objective, &sampled)?;
    let spectrum = sampled
        .thetas
        .iter()
        .zip(&sampled.values)
        .map(|(&t, v)| (t, v.map_or(1.0, |neg_g| 1.0 / (-neg_g).max(COST_FLOOR))))
        .collect();
    Ok(UserSpectrum {
        theta: peak.theta,
        peak: 1.0 / (-peak.value).max(COST_FLOOR),
        sampled: spectrum,
        degenerate_gap: sb.degenerate_gap,
    })
}

/// Per-band pieces of the fused target spectrum.
#[derive(Debug, Clone)]
pub struct BandSubspace {
    /// Dominant `|Phi_k|` left singular vectors of `Q_k R_k`.
    pub basis: CMatrix,
    pub nulling: CMatrix,
}

struct TargetCost {
    un0: CMatrix,
    // (V (Q V)^+ Q, Q)
    terms: Vec<(CMatrix, CMatrix)>,
}

impl TargetCost {
    fn new(un0: &CMatrix, bands: &[BandSubspace]) -> Self {
        let terms = bands
            .iter()
            .map(|b| {
                let qv = &b.nulling * &b.basis;
                (&b.basis * pinv(&qv) * &b.nulling, b.nulling.clone())
            })
            .collect();
        Self { un0: un0.clone(), terms }
    }

    fn eval(&self, a: &CVector) -> f64 {
        let music = (self.un0.adjoint() * a).norm_squared();
        self.terms.iter().fold(music, |acc, (fit, q)| acc + (q * (fit * a - a)).norm_squared())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetSpectrum {
    /// Ascending.
    pub thetas: Vec<f64>,
    /// `(theta, h^{-1}(theta))` on the grid.
    pub sampled: Vec<(f64, f64)>,
    /// Fewer than `q` local maxima were found; the list was padded from the grid.
    pub insufficient: bool,
}

/// Fused target spectrum `h^{-1}` and its `q` strongest refined peaks.
pub fn h_spectrum(un0: &CMatrix, bands: &[BandSubspace], grid: &SearchGrid, q: usize) -> TargetSpectrum {
    let cost = TargetCost::new(un0, bands);
    let objective = |a: &CVector| Some(-cost.eval(a));
    let sampled = grid.sample(objective);
    let (peaks, short) = grid.peaks_sampled(&objective, &sampled, q);
    let mut thetas: Vec<f64> = peaks.iter().map(|p| p.theta).collect();
    if short {
        thetas.extend(grid.fill_from_grid(&sampled, &thetas, q - thetas.len()));
    }
    let spectrum = sampled
        .thetas
        .iter()
        .zip(&sampled.values)
        .map(|(&t, v)| (t, 1.0 / (-v.expect("h is never guarded")).max(COST_FLOOR)))
        .collect();
    TargetSpectrum { thetas: sorted(thetas), sampled: spectrum, insufficient: short }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationSpectra {
    pub g: Vec<UserSpectrum>,
    pub h: TargetSpectrum,
}

#[derive(Debug, Clone)]
pub struct FusedOutput {
    pub result: EstimateResult,
    /// One entry per iteration when `record_spectra` is set.
    pub spectra: Vec<IterationSpectra>,
}

pub fn fused_subspace_estimate(
    covariances: &[CMatrix],
    q: usize,
    visibility: &[Vec<usize>],
    grid: &SearchGrid,
    opts: &FusedOptions,
) -> Result<FusedOutput> {
    let geo = grid.geometry();
    let n = geo.n();
    check_visibility(covariances, q, visibility, n)?;
    let k_users = covariances.len() - 1;

    let dl = evd_split(&covariances[0], visibility[0].len())?;
    let un0 = dl.noise_basis;
    let mut p0: CMatrix = &un0 * un0.adjoint();

    let mut result = EstimateResult {
        target_angles: Vec::new(),
        user_angles: Vec::new(),
        iterations: 0,
        objective_trace: Vec::new(),
        converged: false,
        target_trace: Vec::new(),
        user_trace: Vec::new(),
        flags: Vec::new(),
    };
    let mut spectra = Vec::new();
    let mut targets = vec![0.0; q];
    let mut users = vec![0.0; k_users];

    for p in 1..=opts.max_iters.max(1) {
        let prev_targets = targets.clone();
        let prev_users = users.clone();

        let mut g_log = Vec::new();
        let mut bands = Vec::with_capacity(k_users);
        for k in 1..=k_users {
            let gs = g_spectrum(&covariances[k], &p0, grid)?;
            if gs.degenerate_gap {
                result.flag(Flag::DegenerateGap);
            }
            users[k - 1] = gs.theta;
            let nulling = user_nulling_projector(grid, gs.theta);
            let d = visibility[k].len();
            if d > 0 {
                let s = &nulling * &covariances[k];
                let sb = top_left_singular(&s, d)?;
                if sb.degenerate_gap {
                    result.flag(Flag::DegenerateGap);
                }
                bands.push(BandSubspace { basis: sb.basis, nulling });
            }
            if opts.record_spectra {
                g_log.push(gs);
            }
        }

        let hs = h_spectrum(&un0, &bands, grid, q);
        if hs.insufficient {
            result.flag(Flag::InsufficientPeaks);
        }
        targets.clone_from(&hs.thetas);
        let dl_targets: Vec<f64> = visibility[0].iter().map(|&m| targets[m]).collect();
        p0 = orth_span_projector(&geo.steer_matrix(&dl_targets));

        result.iterations = p;
        result.target_trace.push(targets.clone());
        result.user_trace.push(users.clone());
        if opts.record_spectra {
            spectra.push(IterationSpectra { g: g_log, h: hs });
        }
        if p > 1 && l2_change(&targets, &prev_targets) + l2_change(&users, &prev_users) < opts.eps {
            result.converged = true;
            break;
        }
    }

    if !result.converged {
        result.flag(Flag::NonConvergence);
    }
    result.target_angles = to_angles(&targets);
    result.user_angles = to_angles(&users);
    Ok(FusedOutput { result, spectra })
}

/// `Q a` is zero for the nulled user direction.
#[doc(hidden)]
pub fn nulling_residual(grid: &SearchGrid, theta: f64) -> f64 {
    let q = user_nulling_projector(grid, theta);
    (q * grid.geometry().steer(theta)).norm()
}
