//! Coarse-grid search with golden-section refinement, shared by every 1-D
//! angle search in the estimators.

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, CVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub coarse_step: f64,
    pub refine_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: (-89.5f64).to_radians(),
            hi: 89.5f64.to_radians(),
            coarse_step: 0.5f64.to_radians(),
            refine_tol: 1e-5,
        }
    }
}

impl GridSpec {
    pub fn with_step_deg(step_deg: f64) -> Self {
        Self { coarse_step: step_deg.to_radians(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fov = std::f64::consts::FRAC_PI_2;
        if !(self.lo > -fov && self.hi < fov && self.lo < self.hi) {
            return Err(Error::Config(format!("grid bounds [{}, {}] invalid", self.lo, self.hi)));
        }
        if !(self.coarse_step > self.refine_tol && self.refine_tol > 0.0) {
            return Err(Error::Config("grid needs coarse_step > refine_tol > 0".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.coarse_step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.lo + i as f64 * self.coarse_step).collect()
    }
}

/// Located maximum of a search objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub theta: f64,
    pub value: f64,
}

/// Objective sampled on the coarse grid; `None` marks guarded points.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub thetas: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

/// Grid points with their steering vectors precomputed.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    geometry: ArrayGeometry,
    spec: GridSpec,
    thetas: Vec<f64>,
    steering: Vec<CVector>,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

impl SearchGrid {
    pub fn new(geometry: ArrayGeometry, spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let thetas = spec.points();
        let steering = thetas.iter().map(|&t| geometry.steer(t)).collect();
        Ok(Self { geometry, spec, thetas, steering })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn sample<F>(&self, f: F) -> Sampled
    where
        F: Fn(&CVector) -> Option<f64>,
    {
        let values = self.steering.iter().map(|a| f(a).filter(|v| v.is_finite())).collect();
        Sampled { thetas: self.thetas.clone(), values }
    }

    fn eval<F>(&self, f: &F, theta: f64) -> f64
    where
        F: Fn(&CVector) -> Option<f64>,
    {
        f(&self.geometry.steer(theta)).filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY)
    }

    /// Golden-section maximization on `[center - step, center + step]`,
    /// clipped to the grid bounds. Never returns a point worse than `center`.
    pub fn refine<F>(&self, f: &F, center: f64, center_value: f64) -> Peak
    where
        F: Fn(&CVector) -> Option<f64>,
    {
        let mut a = (center - self.spec.coarse_step).max(self.spec.lo);
        let mut b = (center + self.spec.coarse_step).min(self.spec.hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = self.eval(f, c);
        let mut fd = self.eval(f, d);
        let mut best = Peak { theta: center, value: center_value };
        while b - a > self.spec.refine_tol {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = self.eval(f, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = self.eval(f, d);
            }
        }
        let mid = 0.5 * (a + b);
        let fm = self.eval(f, mid);
        for (t, v) in [(c, fc), (d, fd), (mid, fm)] {
            if v > best.value {
                best = Peak { theta: t, value: v };
            }
        }
        // parabolic step through the last three points
        let mut pts = [(c, fc), (mid, fm), (d, fd)];
        pts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let [(x0, y0), (x1, y1), (x2, y2)] = pts;
        let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
        if den.is_finite() && den != 0.0 && [y0, y1, y2].iter().all(|v| v.is_finite()) {
            let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
            let x = x1 - 0.5 * num / den;
            if x > a - self.spec.refine_tol && x < b + self.spec.refine_tol {
                let x = x.clamp(self.spec.lo, self.spec.hi);
                let v = self.eval(f, x);
                if v > best.value {
                    best = Peak { theta: x, value: v };
                }
            }
        }
        best
    }

    /// Global maximizer over the grid, refined.
    pub fn argmax<F>(&self, f: F) -> Result<Peak>
    where
        F: Fn(&CVector) -> Option<f64>,
    {
        let sampled = self.sample(&f);
        self.argmax_sampled(&f, &sampled)
    }

    pub fn argmax_sampled<F>(&self, f: &F, sampled: &Sampled) -> Result<Peak>
    where
        F: Fn(&CVector) -> Option<f64>,
    {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in sampled.values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
        }
        let (i, v) = best.ok_or(Error::AllPointsDegenerate)?;
        Ok(self.refine(f, self.thetas[i], v))
    }

    /// Up to `count` highest local maxima (3-point test), refined, sorted by
    /// height with ties going to the smaller angle. The flag is set when fewer
    /// than `count` local maxima exist.
    pub fn peaks_sampled<F>(&self, f: &F, sampled: &Sampled, count: usize) -> (Vec<Peak>, bool)
    where
        F: Fn(&CVector) -> Option<f64>,
    {
        let v = &sampled.values;
        let mut local: Vec<usize> = (1..v.len().saturating_sub(1))
            .filter(|&i| match (v[i - 1], v[i], v[i + 1]) {
                (l, Some(c), r) => l.is_none_or(|l| c > l) && r.is_none_or(|r| c >= r),
                _ => false,
            })
            .collect();
        local.sort_by(|&i, &j| v[j].unwrap().total_cmp(&v[i].unwrap()).then(i.cmp(&j)));
        let mut peaks: Vec<Peak> = local
            .into_iter()
            .take(count)
            .map(|i| self.refine(f, self.thetas[i], v[i].unwrap()))
            .collect();
        peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.theta.total_cmp(&b.theta)));
        let short = peaks.len() < count;
        (peaks, short)
    }

    pub fn peaks<F>(&self, f: F, count: usize) -> (Vec<Peak>, bool)
    where
        F: Fn(&CVector) -> Option<f64>,
    {
        let sampled = self.sample(&f);
        self.peaks_sampled(&f, &sampled, count)
    }

    /// Highest sampled points at least two grid steps away from every angle in
    /// `taken`. Used to pad a peak list that came up short.
    pub fn fill_from_grid(&self, sampled: &Sampled, taken: &[f64], count: usize) -> Vec<f64> {
        let mut order: Vec<usize> = (0..sampled.values.len()).filter(|&i| sampled.values[i].is_some()).collect();
        order.sort_by(|&i, &j| sampled.values[j].unwrap().total_cmp(&sampled.values[i].unwrap()));
        let mut out: Vec<f64> = Vec::new();
        for i in order {
            if out.len() == count {
                break;
            }
            let t = self.thetas[i];
            if taken.iter().chain(out.iter()).all(|&s| (s - t).abs() >= 2.0 * self.spec.coarse_step - 1e-12) {
                out.push(t);
            }
        }
        out
    }
}
