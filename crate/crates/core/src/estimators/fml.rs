//! Fused maximum likelihood by alternating projection.
//!
//! Every update is a 1-D maximization of projected Rayleigh ratios
//! `a^H P R P a / a^H P a`, where `P` is the orthogonal projector that removes
//! the columns held fixed. Users are updated band by band (each search only
//! reads its own band), then targets one at a time with the ratio summed over
//! every band that sees the target.

use crate::array::{orth_span_projector, quad_form, span_projector, CMatrix, CVector};
use crate::error::{Error, Result};

use super::grid::{Peak, SearchGrid};
use super::{l2_change, sorted, to_angles, EstimateResult, Flag};

/// Grid points with `a^H P a < GUARD_RTOL * N` are excluded from the search.
pub const GUARD_RTOL: f64 = 1e-9;
const MAX_INIT_SWEEPS: usize = 20;

#[derive(Debug, Clone)]
pub struct FmlOptions {
    pub eps: f64,
    pub max_iters: usize,
    /// Known user directions (radians, band order). Skips the user update.
    pub user_prior: Option<Vec<f64>>,
}

impl Default for FmlOptions {
    fn default() -> Self {
        Self { eps: 1e-6, max_iters: 30, user_prior: None }
    }
}

/// `a^H P R P a / a^H P a` with `P` the projector orthogonal to `fixed`.
pub(crate) struct ProjectedRatio {
    r: CMatrix,
    p: CMatrix,
    guard: f64,
}

impl ProjectedRatio {
    pub(crate) fn new(r: &CMatrix, fixed: &CMatrix) -> Self {
        let p = orth_span_projector(fixed);
        let guard = GUARD_RTOL * r.nrows() as f64;
        Self { r: r.clone(), p, guard }
    }

    #[inline]
    pub(crate) fn eval(&self, a: &CVector) -> Option<f64> {
        // through b = P a: ||b||^2 is accurate even where P nearly nulls a
        let b = &self.p * a;
        let d = b.norm_squared();
        (d >= self.guard).then(|| quad_form(&self.r, &b) / d)
    }
}

/// `trace(P_A R)`.
pub(crate) fn captured_power(r: &CMatrix, a: &CMatrix) -> f64 {
    (span_projector(a) * r).trace().re
}

fn without(thetas: &[f64], skip: usize) -> Vec<f64> {
    thetas.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &t)| t).collect()
}

/// Single-band alternating projection maximizing `trace(P_{A(theta)} R)`.
/// Returns the ascending estimates and the criterion after each sweep.
pub(crate) fn alternating_projection(r: &CMatrix, d: usize, grid: &SearchGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let geo = grid.geometry();
    let n = geo.n();
    if d >= n {
        return Err(Error::RankOverflow { columns: d, antennas: n });
    }
    let mut thetas: Vec<f64> = Vec::with_capacity(d);
    for _ in 0..d {
        let ratio = ProjectedRatio::new(r, &geo.steer_matrix(&thetas));
        thetas.push(grid.argmax(|a| ratio.eval(a))?.theta);
    }
    let mut trace = vec![captured_power(r, &geo.steer_matrix(&thetas))];
    if d > 1 {
        for _ in 0..MAX_INIT_SWEEPS {
            let before = thetas.clone();
            for i in 0..d {
                let ratio = ProjectedRatio::new(r, &geo.steer_matrix(&without(&thetas, i)));
                let cand = grid.argmax(|a| ratio.eval(a))?;
                let current = ratio.eval(&geo.steer(thetas[i])).unwrap_or(f64::NEG_INFINITY);
                if cand.value > current {
                    thetas[i] = cand.theta;
                }
            }
            trace.push(captured_power(r, &geo.steer_matrix(&thetas)));
            if thetas.iter().zip(&before).all(|(a, b)| (a - b).abs() < grid.spec().refine_tol) {
                break;
            }
        }
    }
    Ok((sorted(thetas), trace))
}

/// Per-band initial target estimates, each band fitted with `dims[k]` sources
/// and users ignored. Estimates are ascending.
pub fn fml_initialize(covariances: &[CMatrix], dims: &[usize], grid: &SearchGrid) -> Result<Vec<Vec<f64>>> {
    if covariances.len() != dims.len() {
        return Err(Error::LengthMismatch { expected: covariances.len(), got: dims.len() });
    }
    covariances
        .iter()
        .zip(dims)
        .map(|(r, &d)| alternating_projection(r, d, grid).map(|(t, _)| t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserUpdate {
    pub theta: f64,
    pub value: f64,
    /// The ratio barely varies over the grid (e.g. a white covariance).
    pub flat: bool,
}

/// User direction of one UL band given that band's current target estimates.
pub fn fml_phase1_user_update(r: &CMatrix, band_targets: &[f64], grid: &SearchGrid) -> Result<UserUpdate> {
    let ratio = ProjectedRatio::new(r, &grid.geometry().steer_matrix(band_targets));
    let objective = |a: &CVector| ratio.eval(a);
    let sampled = grid.sample(objective);
    let peak = grid.argmax_sampled(&objective, &sampled)?;
    let vals = sampled.values.iter().flatten();
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let flat = hi - lo <= 1e-9 * hi.abs().max(f64::MIN_POSITIVE);
    Ok(UserUpdate { theta: peak.theta, value: peak.value, flat })
}

/// Columns held fixed in band `k` while target `m` moves: the user (UL bands)
/// and every other visible target.
fn fixed_columns(band: usize, m: usize, band_targets: &[f64], visible: &[usize], users: &[f64]) -> Vec<f64> {
    let mut cols = Vec::with_capacity(band_targets.len() + 1);
    if band > 0 {
        cols.push(users[band - 1]);
    }
    cols.extend(visible.iter().zip(band_targets).filter(|(&idx, _)| idx != m).map(|(_, &t)| t));
    cols
}

struct FusedRatio {
    terms: Vec<ProjectedRatio>,
}

impl FusedRatio {
    fn eval(&self, a: &CVector) -> Option<f64> {
        self.terms.iter().try_fold(0.0, |acc, t| t.eval(a).map(|v| acc + v))
    }
}

fn fused_ratio(
    covariances: &[CMatrix],
    band_targets: &[Vec<f64>],
    users: &[f64],
    m: usize,
    visibility: &[Vec<usize>],
    grid: &SearchGrid,
) -> Result<FusedRatio> {
    let geo = grid.geometry();
    let terms: Vec<ProjectedRatio> = (0..covariances.len())
        .filter(|&k| visibility[k].contains(&m))
        .map(|k| {
            let cols = fixed_columns(k, m, &band_targets[k], &visibility[k], users);
            ProjectedRatio::new(&covariances[k], &geo.steer_matrix(&cols))
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::TargetInvisibleEverywhere(m));
    }
    Ok(FusedRatio { terms })
}

/// New direction for target `m`. `band_targets[k]` is aligned with
/// `visibility[k]`; `users` are the current user estimates in band order.
pub fn fml_phase2_target_update(
    covariances: &[CMatrix],
    band_targets: &[Vec<f64>],
    users: &[f64],
    m: usize,
    visibility: &[Vec<usize>],
    grid: &SearchGrid,
) -> Result<Peak> {
    let fused = fused_ratio(covariances, band_targets, users, m, visibility, grid)?;
    grid.argmax(|a| fused.eval(a))
}

/// `sum_k trace(P_{A_k} R_k)` with `A_k = [a(user_k), A(targets_k)]`.
pub(crate) fn fml_surrogate(
    covariances: &[CMatrix],
    band_targets: &[Vec<f64>],
    users: &[f64],
    grid: &SearchGrid,
) -> f64 {
    let geo = grid.geometry();
    covariances
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mut cols = Vec::new();
            if k > 0 {
                cols.push(users[k - 1]);
            }
            cols.extend(&band_targets[k]);
            captured_power(r, &geo.steer_matrix(&cols))
        })
        .sum()
}

pub(crate) fn check_visibility(covariances: &[CMatrix], q: usize, visibility: &[Vec<usize>], n: usize) -> Result<()> {
    if covariances.is_empty() {
        return Err(Error::Dimension("no covariances supplied".into()));
    }
    if visibility.len() != covariances.len() {
        return Err(Error::LengthMismatch { expected: covariances.len(), got: visibility.len() });
    }
    if covariances.iter().any(|r| r.shape() != (n, n)) {
        return Err(Error::Dimension("covariance shape does not match the array".into()));
    }
    if visibility[0].is_empty() {
        return Err(Error::Config("band 0 must see at least one target".into()));
    }
    for (k, vis) in visibility.iter().enumerate() {
        if vis.iter().any(|&m| m >= q) {
            return Err(Error::Config(format!("band {k} references a target index >= {q}")));
        }
        if vis.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("band {k} visibility must be strictly ascending")));
        }
        let d = vis.len() + usize::from(k > 0);
        if d >= n {
            return Err(Error::TooFewAntennas { signal_dim: d, antennas: n });
        }
    }
    if let Some(m) = (0..q).find(|m| !visibility.iter().any(|v| v.contains(m))) {
        return Err(Error::TargetInvisibleEverywhere(m));
    }
    Ok(())
}

/// Fused ML estimate of `q` target directions (and the K user directions).
///
/// Target indices are assumed to be in ascending-angle order, which is how the
/// per-band initial estimates are labelled.
pub fn fml_estimate(
    covariances: &[CMatrix],
    q: usize,
    visibility: &[Vec<usize>],
    grid: &SearchGrid,
    opts: &FmlOptions,
) -> Result<EstimateResult> {
    let geo = grid.geometry();
    check_visibility(covariances, q, visibility, geo.n())?;
    let k_users = covariances.len() - 1;
    if let Some(prior) = &opts.user_prior {
        if prior.len() != k_users {
            return Err(Error::LengthMismatch { expected: k_users, got: prior.len() });
        }
    }

    let dims: Vec<usize> = visibility.iter().map(Vec::len).collect();
    let mut band_targets = fml_initialize(covariances, &dims, grid)?;
    let mut users = opts.user_prior.clone().unwrap_or_else(|| vec![0.0; k_users]);
    let mut common = vec![0.0; q];

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

    for p in 1..=opts.max_iters.max(1) {
        let prev_common = common.clone();
        let prev_users = users.clone();

        if opts.user_prior.is_none() {
            for k in 1..=k_users {
                let update = fml_phase1_user_update(&covariances[k], &band_targets[k], grid)?;
                if update.flat {
                    result.flag(Flag::FlatSpectrum);
                }
                let keep_current = p > 1 && {
                    let ratio = ProjectedRatio::new(&covariances[k], &geo.steer_matrix(&band_targets[k]));
                    ratio.eval(&geo.steer(users[k - 1])).is_some_and(|v| v >= update.value)
                };
                if !keep_current {
                    users[k - 1] = update.theta;
                }
            }
        }

        for m in 0..q {
            let fused = fused_ratio(covariances, &band_targets, &users, m, visibility, grid)?;
            let cand = grid.argmax(|a| fused.eval(a))?;
            let keep_current = p > 1 && fused.eval(&geo.steer(common[m])).is_some_and(|v| v >= cand.value);
            if !keep_current {
                common[m] = cand.theta;
            }
            for (k, vis) in visibility.iter().enumerate() {
                if let Some(j) = vis.iter().position(|&idx| idx == m) {
                    band_targets[k][j] = common[m];
                }
            }
        }

        result.iterations = p;
        result.objective_trace.push(fml_surrogate(covariances, &band_targets, &users, grid));
        result.target_trace.push(sorted(common.clone()));
        result.user_trace.push(users.clone());
        if p > 1 && l2_change(&common, &prev_common) + l2_change(&users, &prev_users) < opts.eps {
            result.converged = true;
            break;
        }
    }

    if !result.converged {
        result.flag(Flag::NonConvergence);
    }
    result.target_angles = to_angles(&sorted(common));
    result.user_angles = if k_users > 0 { to_angles(&users) } else { Vec::new() };
    Ok(result)
}
