//! Property checks shared by the proptest suites and the acceptance run.
#![allow(dead_code)]

use hrf_core::array::{orth_span_projector, top_left_singular};
use hrf_core::crb::{crb_targets, CrbInputs};
use hrf_core::estimators::fml::fml_phase1_user_update;
use hrf_core::estimators::subspace::user_nulling_projector;
use hrf_core::estimators::{fml_estimate, FmlOptions};
use hrf_core::harness::{run_experiment, Algorithm, ExperimentSpec};
use hrf_core::scene::{band_configs, band_rng, synthesize_band, BandData, Scenario, SceneConfig};
use hrf_core::{
    evd_split, manifold, orth_projector, projector, steering_vector, Angle, ArrayGeometry, CMatrix, GridSpec,
    SearchGrid,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub type Check = std::result::Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn rad(deg: f64) -> f64 {
    deg.to_radians()
}

pub fn angles(deg: &[f64]) -> Vec<Angle> {
    deg.iter().map(|&d| Angle::from_degrees(d).unwrap()).collect()
}

/// True if every pair is at least `min_deg` apart.
pub fn separated(deg: &[f64], min_deg: f64) -> bool {
    let mut s = deg.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[1] - w[0] >= min_deg)
}

/// Interior local maxima (3-point test, as in the peak search) standing at
/// least `prominence_db` above the highest saddle that connects them to a
/// higher point or to the edge of the grid.
pub fn dominant_peaks(theta_deg: &[f64], value_db: &[f64], prominence_db: f64) -> Vec<f64> {
    let n = value_db.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let v = value_db[i];
        if !(v > value_db[i - 1] && v >= value_db[i + 1]) {
            continue;
        }
        // lowest point on each side before reaching something higher
        let side = |range: &mut dyn Iterator<Item = usize>| {
            let mut low = v;
            for j in range {
                if value_db[j] > v {
                    return Some(low);
                }
                low = low.min(value_db[j]);
            }
            None
        };
        let saddles: Vec<f64> = [side(&mut (0..i).rev()), side(&mut (i + 1..n))].into_iter().flatten().collect();
        let prominence = match saddles.iter().copied().reduce(f64::max) {
            Some(saddle) => v - saddle,
            None => f64::INFINITY,
        };
        if prominence >= prominence_db {
            out.push(theta_deg[i]);
        }
    }
    out
}

pub fn synth(scene: &SceneConfig, which: Scenario, n: usize, seed: u64) -> Vec<BandData> {
    let geo = ArrayGeometry::half_wavelength(n).unwrap();
    band_configs(which, scene.num_users())
        .unwrap()
        .iter()
        .map(|b| synthesize_band(scene, b, &geo, &mut band_rng(seed, 0, 0, b.band_index)).unwrap())
        .collect()
}

pub fn covs(bands: &[BandData]) -> Vec<CMatrix> {
    bands.iter().map(|b| b.covariance.clone()).collect()
}

pub fn steering_norm(n: usize, theta_deg: f64) -> Check {
    let g = ArrayGeometry::half_wavelength(n).unwrap();
    let a = steering_vector(&g, Angle::from_degrees(theta_deg).unwrap());
    ensure!((a.norm_squared() - n as f64).abs() <= 1e-12 * n as f64, "norm^2 {} != {n}", a.norm_squared());
    for z in a.iter() {
        ensure!((z.norm() - 1.0).abs() < 1e-14, "entry modulus {}", z.norm());
    }
    Ok(())
}

pub fn projector_properties(n: usize, deg: &[f64]) -> Check {
    if !separated(deg, 2.0) || deg.len() >= n {
        return Ok(());
    }
    let g = ArrayGeometry::half_wavelength(n).unwrap();
    let m = manifold(&g, &angles(deg)).map_err(|e| e.to_string())?;
    let p = projector(&m).map_err(|e| e.to_string())?;
    let o = orth_projector(&m).map_err(|e| e.to_string())?;
    let eye = CMatrix::identity(n, n);
    ensure!((&p + &o - &eye).norm() < 1e-10, "P + P_perp != I");
    for (name, x) in [("P", &p), ("P_perp", &o)] {
        ensure!((x - x.adjoint()).norm() < 1e-10, "{name} not Hermitian");
        ensure!((x * x - x).norm() < 1e-10, "{name} not idempotent");
    }
    ensure!((&o * m.matrix()).norm() < 1e-10, "P_perp does not annihilate the manifold");
    Ok(())
}

/// Random Hermitian PSD matrix of rank `rank` plus a noise floor.
pub fn random_covariance(n: usize, rank: usize, seed: u64) -> CMatrix {
    use rand::Rng;
    let mut rng = band_rng(seed, 1, 2, 3);
    let b = CMatrix::from_fn(n, rank, |_, _| hrf_core::C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    &b * b.adjoint() + CMatrix::identity(n, n).scale(1e-3)
}

pub fn evd_properties(n: usize, d: usize, seed: u64) -> Check {
    let d = d.min(n - 1);
    let r = random_covariance(n, d.max(1), seed);
    let s = evd_split(&r, d).map_err(|e| e.to_string())?;
    ensure!((s.signal_basis.adjoint() * &s.noise_basis).norm() < 1e-10, "signal and noise bases not orthogonal");
    let tr = r.trace().re;
    let sum: f64 = s.eigenvalues().iter().sum();
    ensure!((sum - tr).abs() <= 1e-9 * tr.abs(), "eigenvalues sum {sum} vs trace {tr}");
    let ev = s.eigenvalues();
    ensure!(ev.windows(2).all(|w| w[0] >= w[1]), "eigenvalues not sorted");
    Ok(())
}

/// Dominant left singular vector of `P0_perp R_k` for a noiseless band spans
/// `P0_perp a(user)`.
pub fn svd_recovers_user(n: usize, user_deg: f64, target_deg: &[f64]) -> Check {
    let mut all = target_deg.to_vec();
    all.push(user_deg);
    if !separated(&all, 3.0) || all.len() >= n {
        return Ok(());
    }
    let g = ArrayGeometry::half_wavelength(n).unwrap();
    let targets: Vec<f64> = target_deg.iter().map(|&d| rad(d)).collect();
    let a = g.steer_matrix(&{
        let mut v = vec![rad(user_deg)];
        v.extend(&targets);
        v
    });
    let r = &a * a.adjoint();
    let p0 = orth_span_projector(&g.steer_matrix(&targets));
    let sb = top_left_singular(&(&p0 * r), 1).map_err(|e| e.to_string())?;
    let want = &p0 * g.steer(rad(user_deg));
    let v = sb.basis.column(0);
    // sine of the principal angle
    let along = &v * (v.adjoint() * &want);
    let angle = (&want - along).norm() / want.norm();
    ensure!(angle < 1e-8, "principal angle {angle:e} rad");
    Ok(())
}

pub fn deflation(n: usize, theta_deg: f64) -> Check {
    let grid = SearchGrid::new(ArrayGeometry::half_wavelength(n).unwrap(), GridSpec::default()).unwrap();
    let q = user_nulling_projector(&grid, rad(theta_deg));
    let a = grid.geometry().steer(rad(theta_deg));
    ensure!((&q * a).norm() < 1e-10, "Q a(user) != 0");
    ensure!((&q * &q - &q).norm() < 1e-10, "Q not idempotent");
    ensure!((q.trace().re - (n - 1) as f64).abs() < 1e-10, "Q is not a rank-1 deflation");
    Ok(())
}

fn small_scene(target_deg: &[f64], user_deg: &[f64], snr_db: f64) -> SceneConfig {
    SceneConfig::with_snr(angles(target_deg), angles(user_deg), snr_db).unwrap()
}

/// Surrogate objective of the fused ML iteration never decreases.
pub fn fml_monotone(seed: u64, snr_db: f64, target_deg: &[f64], user_deg: &[f64]) -> Check {
    let mut all = target_deg.to_vec();
    all.extend(user_deg);
    if !separated(&all, 2.0) {
        return Ok(());
    }
    let scene = small_scene(target_deg, user_deg, snr_db);
    let n = 6;
    let c = covs(&synth(&scene, Scenario::Two, n, seed));
    let spec = GridSpec { refine_tol: 1e-7, ..GridSpec::default() };
    let grid = SearchGrid::new(ArrayGeometry::half_wavelength(n).unwrap(), spec).unwrap();
    let est = fml_estimate(&c, target_deg.len(), &scene.visibility, &grid, &FmlOptions::default())
        .map_err(|e| e.to_string())?;
    for w in est.objective_trace.windows(2) {
        ensure!(w[1] >= w[0] - 1e-8 * w[0].abs(), "objective decreased {} -> {}", w[0], w[1]);
    }
    Ok(())
}

/// Updating the users in any band order gives bit-identical results.
pub fn phase1_order_invariance(seed: u64, order_seed: u64) -> Check {
    let target_deg = [0.0, 30.0];
    let user_deg = [-10.0, -30.0, -50.0, -70.0];
    let scene = small_scene(&target_deg, &user_deg, 5.0);
    let n = 5;
    let c = covs(&synth(&scene, Scenario::Two, n, seed));
    let grid = SearchGrid::new(ArrayGeometry::half_wavelength(n).unwrap(), GridSpec::default()).unwrap();
    let band_targets = vec![rad(1.0), rad(29.0)];
    let mut order: Vec<usize> = (1..=user_deg.len()).collect();
    // deterministic shuffle
    let mut s = order_seed;
    for i in (1..order.len()).rev() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        order.swap(i, (s >> 33) as usize % (i + 1));
    }
    let forward: Vec<f64> = (1..=user_deg.len())
        .map(|k| fml_phase1_user_update(&c[k], &band_targets, &grid).unwrap().theta)
        .collect();
    let mut permuted = vec![0.0; user_deg.len()];
    for &k in &order {
        permuted[k - 1] = fml_phase1_user_update(&c[k], &band_targets, &grid).unwrap().theta;
    }
    ensure!(
        forward.iter().zip(&permuted).all(|(a, b)| a.to_bits() == b.to_bits()),
        "order {order:?} changed the user estimates"
    );
    Ok(())
}

fn crb_inputs(seed: u64, noise_scale: f64) -> CrbInputs {
    let mut scene = small_scene(&[0.0, 30.0], &[-20.0, -60.0], 5.0);
    scene.noise_power *= noise_scale;
    let n = 6;
    let bands = synth(&scene, Scenario::Two, n, seed);
    CrbInputs::from_bands(ArrayGeometry::half_wavelength(n).unwrap(), &scene, &bands).unwrap()
}

pub fn crb_noise_linearity(seed: u64, c: f64) -> Check {
    let base = crb_inputs(seed, 1.0);
    let mut scaled = base.clone();
    scaled.scene.noise_power *= c;
    let b0 = crb_targets(&base).map_err(|e| e.to_string())?;
    let b1 = crb_targets(&scaled).map_err(|e| e.to_string())?;
    let diff = (&b1.matrix - b0.matrix.scale(c)).norm();
    ensure!(diff <= 1e-12 * b1.matrix.norm(), "CRB(c s2) != c CRB(s2), diff {diff:e}");
    ensure!((&b1.matrix - b1.matrix.transpose()).norm() < 1e-12 * b1.matrix.norm(), "CRB not symmetric");
    Ok(())
}

pub fn fisher_additivity(seed: u64) -> Check {
    let inputs = crb_inputs(seed, 1.0);
    let full = crb_targets(&inputs).map_err(|e| e.to_string())?;
    let mut info = inputs.band_information(0);
    for k in 1..inputs.num_bands() {
        info += inputs.band_information(k);
    }
    let inv = info.try_inverse().ok_or("summed information singular")?;
    let expect = inv.scale(inputs.scene.noise_power / 2.0);
    ensure!((&expect - &full.matrix).norm() <= 1e-9 * full.matrix.norm(), "bound is not the inverse of summed information");
    // dropping an UL band never lowers the bound
    for drop in 1..inputs.num_bands() {
        let mut reduced = inputs.clone();
        reduced.scene.visibility.remove(drop);
        reduced.scene.user_angles.remove(drop - 1);
        reduced.sources.remove(drop);
        let r = crb_targets(&reduced).map_err(|e| e.to_string())?;
        for (a, b) in r.per_target_variance.iter().zip(&full.per_target_variance) {
            ensure!(*a >= b * (1.0 - 1e-12), "removing band {drop} decreased the bound");
        }
    }
    Ok(())
}

pub fn derivative_fd(n: usize, theta_deg: f64) -> Check {
    let g = ArrayGeometry::half_wavelength(n).unwrap();
    let t = rad(theta_deg);
    let h = 1e-6;
    let fd = (g.steer(t + h) - g.steer(t - h)).unscale(2.0 * h);
    let d = hrf_core::manifold_derivative(&g, Angle::new(t).unwrap());
    let err = (&fd - &d).norm();
    ensure!(err <= 1e-6 * d.norm().max(1.0), "central difference mismatch {err:e}");
    Ok(())
}

fn csv_bytes(spec: &ExperimentSpec, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let table = pool.install(|| run_experiment(spec).unwrap());
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    buf
}

pub fn harness_determinism(seed: u64) -> Check {
    let spec = ExperimentSpec {
        scenario: 2,
        users: 1,
        antennas: 5,
        targets_deg: vec![0.0],
        snr_grid_db: vec![0.0, 10.0],
        trials: 6,
        algorithms: Algorithm::ALL.to_vec(),
        include_crb: true,
        master_seed: seed,
        max_iters: 10,
        ..Default::default()
    };
    ensure!(csv_bytes(&spec, 1) == csv_bytes(&spec, 4), "results differ between 1 and 4 threads");
    Ok(())
}

fn run<S: Strategy>(runner: &mut TestRunner, name: &str, strategy: S, check: impl Fn(S::Value) -> Check, out: &mut Vec<String>)
where
    S::Value: std::fmt::Debug,
{
    if let Err(e) = runner.run(&strategy, |v| check(v).map_err(TestCaseError::fail)) {
        out.push(format!("{name}: {e}"));
    }
}

/// Runs every property with a fixed RNG; returns the failures.
pub fn run_property_battery(cases: u32) -> Vec<String> {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(cfg.clone(), TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let few = Config { cases: (cases / 8).max(2), ..cfg };
    let mut slow = TestRunner::new_with_rng(few, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let mut out = Vec::new();
    let angle = -89.0..89.0f64;
    run(&mut runner, "steering norm", (2usize..16, angle.clone()), |(n, t)| steering_norm(n, t), &mut out);
    run(
        &mut runner,
        "projectors",
        (4usize..12, prop::collection::vec(-80.0..80.0f64, 1..4)),
        |(n, d)| projector_properties(n, &d),
        &mut out,
    );
    run(&mut runner, "evd", (3usize..10, 0usize..5, any::<u64>()), |(n, d, s)| evd_properties(n, d, s), &mut out);
    run(
        &mut runner,
        "svd user recovery",
        (5usize..10, -80.0..-5.0f64, prop::collection::vec(0.0..80.0f64, 1..3)),
        |(n, u, t)| svd_recovers_user(n, u, &t),
        &mut out,
    );
    run(&mut runner, "Q deflation", (2usize..12, angle.clone()), |(n, t)| deflation(n, t), &mut out);
    run(&mut runner, "D finite difference", (2usize..16, -85.0..85.0f64), |(n, t)| derivative_fd(n, t), &mut out);
    run(&mut runner, "CRB noise linearity", (any::<u64>(), 0.01..100.0f64), |(s, c)| crb_noise_linearity(s, c), &mut out);
    run(&mut runner, "Fisher additivity", any::<u64>(), fisher_additivity, &mut out);
    run(&mut runner, "phase-1 order", (any::<u64>(), any::<u64>()), |(s, o)| phase1_order_invariance(s, o), &mut out);
    run(
        &mut slow,
        "FML monotonicity",
        (any::<u64>(), -5.0..20.0f64, prop::collection::vec(-20.0..70.0f64, 1..3), -80.0..-30.0f64),
        |(s, snr, t, u)| fml_monotone(s, snr, &t, &[u]),
        &mut out,
    );
    run(&mut slow, "harness determinism", any::<u64>(), harness_determinism, &mut out);
    out
}
