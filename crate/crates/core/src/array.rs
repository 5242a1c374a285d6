//! Uniform linear array primitives: steering vectors, manifolds, projectors
//! and eigen/singular subspace extraction.
//!
//! Phase convention: element `n` of the steering vector toward `theta` is
//! `exp(+j * 2*pi * spacing * n * sin(theta))`, with `spacing` in wavelengths.
//! Every estimator and the CRB derivative use this same convention.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Angles closer than this are considered identical when building a manifold.
pub const DUPLICATE_ANGLE_TOL: f64 = 1e-12;
/// Singular values below `PINV_RTOL * sigma_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-12;
/// Gram-matrix condition number above which `projector` refuses to work.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
/// Relative singular-value gap under which a dominant subspace is not unique.
pub const DEGENERATE_GAP_RTOL: f64 = 1e-8;

/// Direction of arrival in radians, strictly inside the ULA field of view.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Result<Self> {
        if radians.is_finite() && radians.abs() < FRAC_PI_2 {
            Ok(Angle(radians))
        } else {
            Err(Error::InvalidAngle(radians))
        }
    }

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Self::new(degrees.to_radians())
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Angle::new(v)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Uniform linear array: `num_antennas` elements spaced `spacing` wavelengths apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_antennas: usize,
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, spacing: f64) -> Result<Self> {
        if num_antennas < 2 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 2 antennas, got {num_antennas}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidGeometry(format!("spacing must be positive, got {spacing}")));
        }
        Ok(Self { num_antennas, spacing })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, 0.5)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.num_antennas
    }

    /// Steering vector at an arbitrary radian value. No field-of-view check;
    /// search routines call this at grid and refinement points.
    pub fn steer(&self, theta: f64) -> CVector {
        let phase = 2.0 * PI * self.spacing * theta.sin();
        CVector::from_fn(self.num_antennas, |n, _| C64::from_polar(1.0, phase * n as f64))
    }

    /// Columnwise derivative of `steer` with respect to the angle.
    pub fn steer_derivative(&self, theta: f64) -> CVector {
        let phase = 2.0 * PI * self.spacing * theta.sin();
        let dphase = 2.0 * PI * self.spacing * theta.cos();
        CVector::from_fn(self.num_antennas, |n, _| {
            let nf = n as f64;
            C64::new(0.0, dphase * nf) * C64::from_polar(1.0, phase * nf)
        })
    }

    /// Steering matrix without any validation of the angle set.
    pub fn steer_matrix(&self, thetas: &[f64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.num_antennas, thetas.len());
        for (j, &t) in thetas.iter().enumerate() {
            m.set_column(j, &self.steer(t));
        }
        m
    }
}

pub fn steering_vector(geometry: &ArrayGeometry, theta: Angle) -> CVector {
    geometry.steer(theta.radians())
}

/// Matrix of steering vectors together with the angles that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    matrix: CMatrix,
    angles: Vec<Angle>,
}

impl Manifold {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn angles(&self) -> &[Angle] {
        &self.angles
    }

    pub fn num_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

pub fn manifold(geometry: &ArrayGeometry, angles: &[Angle]) -> Result<Manifold> {
    if angles.len() > geometry.n() {
        return Err(Error::RankOverflow { columns: angles.len(), antennas: geometry.n() });
    }
    for (i, a) in angles.iter().enumerate() {
        for b in &angles[i + 1..] {
            if (a.radians() - b.radians()).abs() < DUPLICATE_ANGLE_TOL {
                return Err(Error::DuplicateAngle(a.radians(), b.radians()));
            }
        }
    }
    let thetas: Vec<f64> = angles.iter().map(|a| a.radians()).collect();
    Ok(Manifold { matrix: geometry.steer_matrix(&thetas), angles: angles.to_vec() })
}

/// Orthogonal projector onto the column span of `m`, via the pseudo-inverse.
pub fn projector(m: &Manifold) -> Result<CMatrix> {
    let n = m.num_antennas();
    if m.is_empty() {
        return Ok(CMatrix::zeros(n, n));
    }
    let sv = thin_svd(&m.matrix).s;
    let smax = sv[0];
    let smin = sv[sv.len() - 1];
    let cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if cond > MAX_GRAM_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    Ok(span_projector(&m.matrix))
}

/// `I - projector(m)`.
pub fn orth_projector(m: &Manifold) -> Result<CMatrix> {
    let p = projector(m)?;
    Ok(CMatrix::identity(p.nrows(), p.ncols()) - p)
}

/// Projector onto the span of `a` computed as `U_r U_r^H`, with rank decided by
/// `PINV_RTOL`. Never fails; rank-deficient input simply yields a lower-rank
/// projector. Estimators use this when intermediate estimates may collide.
pub fn span_projector(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    if a.ncols() == 0 {
        return CMatrix::zeros(n, n);
    }
    let ThinSvd { u, s, .. } = thin_svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return CMatrix::zeros(n, n);
    }
    let rank = s.iter().take_while(|&&x| x > PINV_RTOL * smax).count();
    let ur = u.columns(0, rank);
    &ur * ur.adjoint()
}

pub fn orth_span_projector(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    CMatrix::identity(n, n) - span_projector(a)
}

/// Moore-Penrose pseudo-inverse with relative tolerance `PINV_RTOL`.
pub fn pinv(a: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.ncols(), a.nrows());
    if a.is_empty() {
        return out;
    }
    let svd = thin_svd(a);
    let eps = (PINV_RTOL * svd.s[0]).max(f64::MIN_POSITIVE);
    for (i, &s) in svd.s.iter().enumerate() {
        if s > eps {
            out += svd.v.column(i) * svd.u.column(i).adjoint() / C64::from(s);
        }
    }
    out
}

/// Signal/noise eigen-split of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    pub signal_basis: CMatrix,
    pub noise_basis: CMatrix,
    pub signal_eigenvalues: Vec<f64>,
    pub noise_eigenvalues: Vec<f64>,
}

impl SubspacePair {
    /// Eigenvalues in nonincreasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.signal_eigenvalues.iter().chain(&self.noise_eigenvalues).copied().collect()
    }

    /// Number of eigenvalues before the first ratio `lambda_i / lambda_{i+1}`
    /// exceeding `ratio`. Diagnostic only.
    pub fn count_by_jump(&self, ratio: f64) -> usize {
        let ev = self.eigenvalues();
        for i in 0..ev.len().saturating_sub(1) {
            let next = ev[i + 1].max(f64::MIN_POSITIVE);
            if ev[i] / next > ratio {
                return i + 1;
            }
        }
        0
    }
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(R + R^H) / 2`.
pub fn hermitian_part(r: &CMatrix) -> CMatrix {
    (r + r.adjoint()).scale(0.5)
}

pub fn evd_split(r: &CMatrix, signal_dim: usize) -> Result<SubspacePair> {
    let n = r.nrows();
    if r.ncols() != n {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", n, r.ncols())));
    }
    if signal_dim >= n {
        return Err(Error::TooFewAntennas { signal_dim, antennas: n });
    }
    let scale = frobenius(r);
    let asym = frobenius(&(r - r.adjoint()));
    if asym > 1e-8 * scale {
        return Err(Error::NotHermitian(if scale > 0.0 { asym / scale } else { asym }));
    }
    let eig = SymmetricEigen::new(hermitian_part(r));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let basis = CMatrix::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])]);
    Ok(SubspacePair {
        signal_basis: basis.columns(0, signal_dim).into_owned(),
        noise_basis: basis.columns(signal_dim, n - signal_dim).into_owned(),
        signal_eigenvalues: vals[..signal_dim].to_vec(),
        noise_eigenvalues: vals[signal_dim..].to_vec(),
    })
}

/// Dominant left singular directions of a matrix.
#[derive(Debug, Clone)]
pub struct SingularBasis {
    pub basis: CMatrix,
    pub singular_values: Vec<f64>,
    /// Set when `sigma_r / sigma_{r+1} < 1 + DEGENERATE_GAP_RTOL`.
    pub degenerate_gap: bool,
}

/// Thin SVD, singular values descending.
struct ThinSvd {
    u: CMatrix,
    s: Vec<f64>,
    v: CMatrix,
}

/// SVD through the Hermitian eigenproblem of `[[0, M], [M^H, 0]]`, whose
/// eigenpairs are `(+-s_i, [u_i; +-v_i] / sqrt 2)`. nalgebra's complex
/// bidiagonal SVD returns wrong factors for some rank-deficient matrices
/// (`P0 R` is always one), its Hermitian eigensolver does not.
///
/// Left vectors of zero singular values are completed to an orthonormal basis;
/// right vectors of zero singular values are left at zero.
fn thin_svd(a: &CMatrix) -> ThinSvd {
    let (m, n) = a.shape();
    let p = m.min(n);
    let mut j = CMatrix::zeros(m + n, m + n);
    j.view_mut((0, m), (m, n)).copy_from(a);
    j.view_mut((m, 0), (n, m)).copy_from(&a.adjoint());
    let eig = SymmetricEigen::new(j);
    let mut order: Vec<usize> = (0..m + n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let s: Vec<f64> = order[..p].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let tol = PINV_RTOL * s.first().copied().unwrap_or(0.0);
    let rank = s.iter().take_while(|&&x| x > tol).count();
    let mut u = CMatrix::zeros(m, p);
    let mut v = CMatrix::zeros(n, p);
    for (c, &i) in order[..rank].iter().enumerate() {
        let w = eig.eigenvectors.column(i);
        u.set_column(c, &w.rows(0, m).normalize());
        v.set_column(c, &w.rows(m, n).normalize());
    }
    if rank < p {
        let ur = u.columns(0, rank);
        let complement = CMatrix::identity(m, m) - &ur * ur.adjoint();
        let e = SymmetricEigen::new(hermitian_part(&complement));
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&x, &y| e.eigenvalues[y].total_cmp(&e.eigenvalues[x]));
        for (c, &i) in (rank..p).zip(&idx) {
            u.set_column(c, &e.eigenvectors.column(i));
        }
    }
    ThinSvd { u, s, v }
}

pub fn top_left_singular(m: &CMatrix, r: usize) -> Result<SingularBasis> {
    let n = m.nrows();
    if r == 0 || r > n {
        return Err(Error::Dimension(format!("requested {r} singular vectors of a {n}-row matrix")));
    }
    let ThinSvd { u, s, .. } = thin_svd(m);
    if u.ncols() < r {
        return Err(Error::Dimension(format!("matrix has only {} singular vectors", u.ncols())));
    }
    let degenerate_gap = match (s.get(r - 1), s.get(r)) {
        (Some(&a), Some(&b)) => a < (1.0 + DEGENERATE_GAP_RTOL) * b,
        _ => false,
    };
    Ok(SingularBasis { basis: u.columns(0, r).into_owned(), singular_values: s, degenerate_gap })
}

/// `Re(a^H M a)`.
#[inline]
pub fn quad_form(m: &CMatrix, a: &CVector) -> f64 {
    a.dotc(&(m * a)).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geo(n: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(n).unwrap()
    }

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d).unwrap()
    }

    #[test]
    fn angle_rejects_endfire() {
        assert!(Angle::new(FRAC_PI_2).is_err());
        assert!(Angle::new(-2.0).is_err());
        assert!(Angle::new(f64::NAN).is_err());
        assert!(Angle::new(1.5).is_ok());
    }

    #[test]
    fn geometry_validation() {
        assert!(ArrayGeometry::new(1, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let a = steering_vector(&geo(4), deg(0.0));
        for z in a.iter() {
            assert_relative_eq!(z.re, 1.0);
            assert_relative_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn endfire_limit_alternates() {
        let a = geo(2).steer(FRAC_PI_2);
        assert_relative_eq!(a[1].re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(a[1].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_norm_is_n() {
        let a = geo(5).steer(0.3);
        assert_relative_eq!(a.norm_squared(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn manifold_errors() {
        let g = geo(4);
        assert!(matches!(manifold(&g, &[deg(0.0), deg(0.0)]), Err(Error::DuplicateAngle(..))));
        let g3 = geo(3);
        let angles = [Angle::new(0.0).unwrap(), Angle::new(0.2).unwrap(), Angle::new(-0.2).unwrap(), Angle::new(0.4).unwrap()];
        assert!(matches!(manifold(&g3, &angles), Err(Error::RankOverflow { .. })));
        let m = manifold(&g, &[deg(0.0)]).unwrap();
        assert_eq!(m.matrix().shape(), (4, 1));
        assert!(m.matrix().iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn projector_single_broadside_column() {
        let m = manifold(&geo(2), &[deg(0.0)]).unwrap();
        let p = projector(&m).unwrap();
        let q = orth_projector(&m).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_relative_eq!(p[(i, j)].re, 0.5, epsilon = 1e-12);
            let sign = if i == j { 0.5 } else { -0.5 };
            assert_relative_eq!(q[(i, j)].re, sign, epsilon = 1e-12);
        }
    }

    #[test]
    fn full_rank_projector_is_identity() {
        let g = geo(3);
        let m = manifold(&g, &[deg(-40.0), deg(5.0), deg(50.0)]).unwrap();
        let p = projector(&m).unwrap();
        assert!(frobenius(&(p - CMatrix::identity(3, 3))) < 1e-10);
    }

    #[test]
    fn empty_manifold_conventions() {
        let m = manifold(&geo(4), &[]).unwrap();
        assert!(frobenius(&projector(&m).unwrap()) == 0.0);
        assert!(frobenius(&(orth_projector(&m).unwrap() - CMatrix::identity(4, 4))) == 0.0);
    }

    #[test]
    fn projector_trace_equals_rank() {
        let m = manifold(&geo(5), &[Angle::new(-0.3).unwrap(), Angle::new(0.7).unwrap()]).unwrap();
        let p = projector(&m).unwrap();
        assert_relative_eq!(p.trace().re, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn nearly_colinear_manifold_is_ill_conditioned() {
        let m = manifold(&geo(4), &[Angle::new(0.1).unwrap(), Angle::new(0.1 + 1e-9).unwrap()]).unwrap();
        assert!(matches!(projector(&m), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn evd_of_scaled_identity() {
        let r = CMatrix::identity(4, 4).scale(2.5);
        let sp = evd_split(&r, 0).unwrap();
        assert_eq!(sp.noise_basis.ncols(), 4);
        for v in sp.noise_eigenvalues {
            assert_relative_eq!(v, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn evd_rank_one_plus_identity() {
        let g = geo(6);
        let a = g.steer(0.4);
        let r = &a * a.adjoint() + CMatrix::identity(6, 6).scale(0.3);
        let sp = evd_split(&r, 1).unwrap();
        assert_relative_eq!(sp.signal_eigenvalues[0], 6.3, epsilon = 1e-10);
        assert_eq!(sp.count_by_jump(10.0), 1);
    }

    #[test]
    fn evd_rejects_non_hermitian() {
        let mut r = CMatrix::identity(3, 3);
        r[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(evd_split(&r, 1), Err(Error::NotHermitian(_))));
        assert!(matches!(evd_split(&CMatrix::identity(3, 3), 3), Err(Error::TooFewAntennas { .. })));
    }

    #[test]
    fn top_singular_of_rank_one() {
        let g = geo(5);
        let a = g.steer(-0.2);
        let sb = top_left_singular(&(&a * a.adjoint()), 1).unwrap();
        let u = sb.basis.column(0);
        assert_relative_eq!(u.dotc(&a).norm(), a.norm(), epsilon = 1e-10);
        assert!(!sb.degenerate_gap);
    }

    #[test]
    fn identity_has_degenerate_gap() {
        let sb = top_left_singular(&CMatrix::identity(4, 4), 1).unwrap();
        assert!(sb.degenerate_gap);
        assert!(top_left_singular(&CMatrix::identity(4, 4), 0).is_err());
    }

    #[test]
    fn thin_svd_of_projected_rank_one() {
        // nalgebra's own SVD recomposes this one with a relative error near 0.25
        let g = geo(7);
        let (u, t) = ((-7.838649145904352f64).to_radians(), 55.391108033760496f64.to_radians());
        let a = g.steer_matrix(&[u, t]);
        let m = orth_span_projector(&g.steer_matrix(&[t])) * (&a * a.adjoint());
        let svd = thin_svd(&m);
        let s = CMatrix::from_diagonal(&DVector::from_iterator(7, svd.s.iter().map(|&x| C64::from(x))));
        assert!(frobenius(&(&svd.u * s * svd.v.adjoint() - &m)) < 1e-12 * frobenius(&m));
        assert!(frobenius(&(svd.u.adjoint() * &svd.u - CMatrix::identity(7, 7))) < 1e-12);
        assert_eq!(svd.s.iter().filter(|&&x| x > 1e-9).count(), 1);
    }

    #[test]
    fn pinv_of_column() {
        let a = geo(4).steer(0.25);
        let m = CMatrix::from_column_slice(4, 1, a.as_slice());
        let p = pinv(&m);
        assert_relative_eq!((p * &m)[(0, 0)].re, 1.0, epsilon = 1e-12);
    }
}
