use crate::array::{evd_split, CMatrix, CVector};
use crate::error::{Error, Result};

use super::grid::{Sampled, SearchGrid};
use super::{sorted, to_angles, EstimateResult, Flag};

/// `||U_N^H a||^2`, the reciprocal of the MUSIC pseudo-spectrum.
#[inline]
pub fn music_cost(noise_basis: &CMatrix, a: &CVector) -> f64 {
    (noise_basis.adjoint() * a).norm_squared()
}

/// MUSIC pseudo-spectrum `1 / ||a^H U_N||^2` on the grid.
pub fn music_spectrum(noise_basis: &CMatrix, grid: &SearchGrid) -> Vec<(f64, f64)> {
    grid.thetas()
        .iter()
        .map(|&t| (t, 1.0 / music_cost(noise_basis, &grid.geometry().steer(t))))
        .collect()
}

/// `q` strongest refined MUSIC peaks, ascending, padded from the grid if the
/// spectrum has fewer local maxima.
pub(crate) fn music_peaks(noise_basis: &CMatrix, grid: &SearchGrid, q: usize) -> (Vec<f64>, bool) {
    let objective = |a: &CVector| Some(-music_cost(noise_basis, a));
    let sampled: Sampled = grid.sample(objective);
    let (peaks, short) = grid.peaks_sampled(&objective, &sampled, q);
    let mut thetas: Vec<f64> = peaks.iter().map(|p| p.theta).collect();
    if short {
        let fill = grid.fill_from_grid(&sampled, &thetas, q - thetas.len());
        thetas.extend(fill);
    }
    (sorted(thetas), short)
}

/// Noise subspace of the averaged covariance used by the naive baseline.
pub fn naive_noise_subspace(
    covariances: &[CMatrix],
    num_targets: usize,
    num_sources: usize,
    n: usize,
    include_dl: bool,
) -> Result<CMatrix> {
    let used: Vec<&CMatrix> = if include_dl || covariances.len() == 1 {
        covariances.iter().collect()
    } else {
        covariances[1..].iter().collect()
    };
    if used.is_empty() {
        return Err(Error::Dimension("no covariances supplied".into()));
    }
    if used.iter().any(|r| r.shape() != (n, n)) {
        return Err(Error::Dimension("covariance shape does not match the array".into()));
    }
    if num_targets == 0 || num_targets >= n {
        return Err(Error::TooFewAntennas { signal_dim: num_targets, antennas: n });
    }
    let mut avg = CMatrix::zeros(n, n);
    for r in &used {
        avg += *r;
    }
    avg.unscale_mut(used.len() as f64);
    if avg.trace().re <= 0.0 {
        return Err(Error::DegenerateCovariance);
    }
    // The union of directions needs a noise subspace; otherwise fall back to
    // classical MUSIC on the target count.
    let signal_dim = if num_sources < n { num_sources.max(num_targets) } else { num_targets };
    Ok(evd_split(&avg, signal_dim)?.noise_basis)
}

/// Averages the band covariances and runs classical MUSIC on the result.
///
/// `num_sources` is the number of distinct directions in the union scene and
/// sets the signal subspace dimension when it is below `N`; otherwise the
/// dimension is the target count `q`. The `q` highest peaks are reported as
/// targets regardless of whether they belong to users.
pub fn naive_music(
    covariances: &[CMatrix],
    num_targets: usize,
    num_sources: usize,
    grid: &SearchGrid,
    include_dl: bool,
) -> Result<EstimateResult> {
    let noise_basis = naive_noise_subspace(covariances, num_targets, num_sources, grid.geometry().n(), include_dl)?;
    let (targets, short) = music_peaks(&noise_basis, grid, num_targets);
    let mut out = EstimateResult {
        target_angles: to_angles(&targets),
        user_angles: Vec::new(),
        iterations: 1,
        objective_trace: Vec::new(),
        converged: true,
        target_trace: vec![targets],
        user_trace: vec![Vec::new()],
        flags: Vec::new(),
    };
    if short {
        out.flag(Flag::InsufficientPeaks);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ArrayGeometry;
    use crate::estimators::GridSpec;

    fn noiseless_cov(geo: &ArrayGeometry, thetas: &[f64]) -> CMatrix {
        let a = geo.steer_matrix(thetas);
        let n = geo.n();
        &a * a.adjoint() + CMatrix::identity(n, n).scale(1e-12)
    }

    fn grid(n: usize) -> SearchGrid {
        SearchGrid::new(ArrayGeometry::half_wavelength(n).unwrap(), GridSpec::default()).unwrap()
    }

    #[test]
    fn single_source_peak() {
        let g = grid(8);
        let r = noiseless_cov(g.geometry(), &[10f64.to_radians()]);
        let split = evd_split(&r, 1).unwrap();
        let (p, short) = music_peaks(&split.noise_basis, &g, 1);
        assert!(!short);
        assert!((p[0] - 10f64.to_radians()).abs() < 1e-5);
        let spec = music_spectrum(&split.noise_basis, &g);
        let best = spec.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((best.0 - 10f64.to_radians()).abs() <= g.spec().coarse_step);
    }

    #[test]
    fn two_symmetric_sources() {
        let g = grid(8);
        let t = 30f64.to_radians();
        let r = noiseless_cov(g.geometry(), &[-t, t]);
        let split = evd_split(&r, 2).unwrap();
        let (p, _) = music_peaks(&split.noise_basis, &g, 2);
        assert!((p[0] + t).abs() < 1e-5 && (p[1] - t).abs() < 1e-5);
    }

    #[test]
    fn full_noise_space_bounds_spectrum() {
        let g = grid(5);
        let un = CMatrix::identity(5, 5);
        for (_, v) in music_spectrum(&un, &g) {
            assert!(v <= 1.0 / 5.0 + 1e-12);
        }
    }

    #[test]
    fn naive_reduces_to_music_without_users() {
        let g = grid(6);
        let r = noiseless_cov(g.geometry(), &[0.2]);
        let est = naive_music(&[r], 1, 1, &g, true).unwrap();
        assert!((est.target_angles[0].radians() - 0.2).abs() < 1e-5);
    }

    #[test]
    fn naive_with_users_sees_every_direction() {
        // q = 3 targets and K = 2 users on N = 5: the averaged covariance has
        // five directions, so the split falls back to q = 3 and the user
        // energy leaks into the noise subspace. The estimates are biased.
        let g = grid(5);
        let geo = *g.geometry();
        let targets = [0.0, 30f64.to_radians(), 60f64.to_radians()];
        let users = [(-10f64).to_radians(), (-70f64).to_radians()];
        let r0 = noiseless_cov(&geo, &targets);
        let mut covs = vec![r0];
        for u in users {
            let mut all = vec![u];
            all.extend(targets);
            covs.push(noiseless_cov(&geo, &all));
        }
        let est = naive_music(&covs, 3, 5, &g, true).unwrap();
        assert_eq!(est.target_angles.len(), 3);
        let errs: f64 = est.target_radians().iter().zip(targets).map(|(a, b)| (a - b).abs()).sum();
        assert!(errs > 1e-3, "naive MUSIC should not be exact here, error {errs}");
    }

    #[test]
    fn zero_covariance_is_degenerate() {
        let g = grid(4);
        let z = CMatrix::zeros(4, 4);
        assert!(matches!(naive_music(&[z.clone(), z], 1, 2, &g, true), Err(Error::DegenerateCovariance)));
        let r = noiseless_cov(g.geometry(), &[0.1]);
        assert!(matches!(naive_music(&[r], 4, 4, &g, true), Err(Error::TooFewAntennas { .. })));
    }
}
