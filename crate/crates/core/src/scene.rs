//! Per-band snapshot synthesis for the downlink echo (band 0) and the K uplink
//! user bands, plus sample covariances and the two resource-allocation scenarios.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{hermitian_part, Angle, ArrayGeometry, CMatrix, CVector, C64};
use crate::error::{Error, Result};

/// OFDM numerology carried alongside a scene. The spatial snapshot model does
/// not consume these values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmNumerology {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub symbol_s: f64,
    pub cyclic_prefix_s: f64,
}

impl Default for OfdmNumerology {
    fn default() -> Self {
        let spacing = 240e3;
        let symbol = 1.0 / spacing;
        Self { carrier_hz: 24e9, subcarrier_spacing_hz: spacing, symbol_s: symbol, cyclic_prefix_s: symbol / 4.0 }
    }
}

/// Ground truth for one trial: target and user directions, per-band target
/// visibility and the power levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub target_angles: Vec<Angle>,
    pub user_angles: Vec<Angle>,
    /// `visibility[k]` lists the (0-based) targets seen in band `k`; band 0 is the DL echo.
    pub visibility: Vec<Vec<usize>>,
    /// White noise power per antenna.
    pub noise_power: f64,
    /// Power of every visible path, per antenna.
    pub path_power: f64,
    #[serde(default)]
    pub numerology: OfdmNumerology,
}

impl SceneConfig {
    /// Unit path power and noise power set from the per-path SNR; every target
    /// visible in every band.
    pub fn with_snr(target_angles: Vec<Angle>, user_angles: Vec<Angle>, snr_db: f64) -> Result<Self> {
        let visibility = vec![(0..target_angles.len()).collect(); user_angles.len() + 1];
        let scene = Self {
            target_angles,
            user_angles,
            visibility,
            noise_power: 10f64.powf(-snr_db / 10.0),
            path_power: 1.0,
            numerology: OfdmNumerology::default(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn noiseless(target_angles: Vec<Angle>, user_angles: Vec<Angle>) -> Result<Self> {
        let mut s = Self::with_snr(target_angles, user_angles, 0.0)?;
        s.noise_power = 0.0;
        Ok(s)
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.path_power / self.noise_power).log10()
    }

    pub fn num_targets(&self) -> usize {
        self.target_angles.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_angles.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.num_targets();
        if q == 0 {
            return Err(Error::Config("scene needs at least one target".into()));
        }
        if self.visibility.len() != self.num_users() + 1 {
            return Err(Error::Config(format!(
                "visibility has {} bands, expected {}",
                self.visibility.len(),
                self.num_users() + 1
            )));
        }
        if self.visibility[0].is_empty() {
            return Err(Error::Config("band 0 must see at least one target".into()));
        }
        if self.visibility.iter().flatten().any(|&m| m >= q) {
            return Err(Error::Config("visibility index out of range".into()));
        }
        if !(self.noise_power >= 0.0 && self.path_power > 0.0) {
            return Err(Error::Config("noise power must be >= 0 and path power > 0".into()));
        }
        for k in 0..self.visibility.len() {
            let angles = self.band_angles(k);
            for (i, a) in angles.iter().enumerate() {
                if angles[i + 1..].iter().any(|b| (a - b).abs() < crate::array::DUPLICATE_ANGLE_TOL) {
                    return Err(Error::DuplicateAngle(*a, *a));
                }
            }
        }
        Ok(())
    }

    /// Path directions in band `k`: the user first (UL bands), then visible targets.
    pub fn band_angles(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.visibility[k].len() + 1);
        if k > 0 {
            out.push(self.user_angles[k - 1].radians());
        }
        out.extend(self.visibility[k].iter().map(|&m| self.target_angles[m].radians()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandConfig {
    pub band_index: usize,
    pub num_symbols: usize,
    pub num_subcarriers: usize,
}

impl BandConfig {
    pub fn snapshots(&self) -> usize {
        self.num_symbols * self.num_subcarriers
    }
}

/// Source symbols of one band; row 0 of an UL band is the user direct path.
#[derive(Debug, Clone)]
pub struct SourceMatrix(pub CMatrix);

#[derive(Debug, Clone)]
pub struct BandData {
    pub snapshots: CMatrix,
    pub covariance: CMatrix,
    pub sources: SourceMatrix,
    pub config: BandConfig,
}

pub fn qpsk_stream<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<C64> {
    (0..count)
        .map(|_| {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            C64::new(re, im)
        })
        .collect()
}

/// Circular complex Gaussian vector with the given per-entry variance.
fn complex_noise<R: Rng + ?Sized>(len: usize, variance: f64, rng: &mut R) -> CVector {
    let s = (variance / 2.0).sqrt();
    CVector::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

pub fn sample_covariance(y: &CMatrix) -> CMatrix {
    let t = y.ncols().max(1) as f64;
    hermitian_part(&(y * y.adjoint()).unscale(t))
}

/// Noise-free model covariance `A diag(p) A^H + sigma^2 I` of band `k`.
pub fn model_covariance(scene: &SceneConfig, k: usize, geometry: &ArrayGeometry) -> CMatrix {
    let a = geometry.steer_matrix(&scene.band_angles(k));
    let n = geometry.n();
    (&a * a.adjoint()).scale(scene.path_power) + CMatrix::identity(n, n).scale(scene.noise_power)
}

pub fn synthesize_band<R: Rng + ?Sized>(
    scene: &SceneConfig,
    band: &BandConfig,
    geometry: &ArrayGeometry,
    rng: &mut R,
) -> Result<BandData> {
    let k = band.band_index;
    if k > scene.num_users() {
        return Err(Error::Config(format!("band {k} does not exist in a scene with {} users", scene.num_users())));
    }
    let angles = scene.band_angles(k);
    let n = geometry.n();
    if angles.len() > n {
        return Err(Error::RankOverflow { columns: angles.len(), antennas: n });
    }
    let t = band.snapshots();
    let a = geometry.steer_matrix(&angles);
    let amp = scene.path_power.sqrt();
    let mut x = CMatrix::zeros(angles.len(), t);
    for row in 0..angles.len() {
        for (col, s) in qpsk_stream(t, rng).into_iter().enumerate() {
            x[(row, col)] = s * amp;
        }
    }
    let mut y = &a * &x;
    if scene.noise_power > 0.0 {
        for mut col in y.column_iter_mut() {
            col += complex_noise(n, scene.noise_power, rng);
        }
    }
    let covariance = sample_covariance(&y);
    Ok(BandData { snapshots: y, covariance, sources: SourceMatrix(x), config: *band })
}

/// Independent deterministic stream for one (SNR point, trial, band) cell.
pub fn band_rng(master_seed: u64, snr_index: usize, trial: usize, band: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let stream = ((snr_index as u64) << 40) | ((trial as u64 & 0xFFFF_FFFF) << 8) | (band as u64 & 0xFF);
    rng.set_stream(stream);
    rng
}

pub const DEFAULT_TARGETS_DEG: [f64; 3] = [0.0, 30.0, 60.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Constant time-frequency product `L_k |C_k| = 512` on every band, DL included.
    One,
    /// 32 symbols on 32 subcarriers per user.
    Two,
}

impl TryFrom<u8> for Scenario {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Scenario::One),
            2 => Ok(Scenario::Two),
            other => Err(Error::Config(format!("scenario must be 1 or 2, got {other}"))),
        }
    }
}

/// Equidistant user directions from -10 deg down to -70 deg.
pub fn default_user_angles(k: usize) -> Vec<Angle> {
    (0..k)
        .map(|i| {
            let deg = if k == 1 { -10.0 } else { -10.0 - i as f64 * 60.0 / (k - 1) as f64 };
            Angle::from_degrees(deg).expect("within field of view")
        })
        .collect()
}

pub fn band_configs(which: Scenario, k: usize) -> Result<Vec<BandConfig>> {
    let mut bands = Vec::with_capacity(k + 1);
    match which {
        Scenario::One => {
            if k > 0 && 32 % k != 0 {
                return Err(Error::InvalidDivisor(k));
            }
            // The DL echo gets the same time-frequency product as every user band.
            let kk = k.max(1);
            bands.push(BandConfig { band_index: 0, num_symbols: 16 * kk, num_subcarriers: 32 / kk });
            for i in 1..=k {
                bands.push(BandConfig { band_index: i, num_symbols: 16 * k, num_subcarriers: 32 / k });
            }
        }
        Scenario::Two => {
            for i in 0..=k {
                bands.push(BandConfig { band_index: i, num_symbols: 32, num_subcarriers: 32 });
            }
        }
    }
    Ok(bands)
}

pub fn make_scenario_with_targets(
    which: Scenario,
    k: usize,
    n: usize,
    targets: Vec<Angle>,
    snr_db: f64,
) -> Result<(SceneConfig, Vec<BandConfig>)> {
    let bands = band_configs(which, k)?;
    let scene = SceneConfig::with_snr(targets, default_user_angles(k), snr_db)?;
    if scene.num_targets() + usize::from(k > 0) > n {
        return Err(Error::RankOverflow { columns: scene.num_targets() + 1, antennas: n });
    }
    Ok((scene, bands))
}

pub fn make_scenario(which: Scenario, k: usize, n: usize, q: usize, snr_db: f64) -> Result<(SceneConfig, Vec<BandConfig>)> {
    if q == 0 || q > DEFAULT_TARGETS_DEG.len() {
        return Err(Error::Config(format!("default target set supports 1..=3 targets, got {q}")));
    }
    let targets = DEFAULT_TARGETS_DEG[..q].iter().map(|&d| Angle::from_degrees(d)).collect::<Result<_>>()?;
    make_scenario_with_targets(which, k, n, targets, snr_db)
}
