//! Seeded synthetic CSI-like data.
//!
//! Every cell `(i, j)` of a sample taken at position `p` is
//! `Σ_k a_k · cos(ω_k · p̂ + φ_k(i, j)) + noise`, where `p̂` is the position
//! scaled to the unit box and each phase field `φ_k` varies smoothly over the
//! antenna/subcarrier grid. Unlabeled and labeled samples share one map.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Extent of the default sampling box in meters.
pub const DEFAULT_AREA: [f64; 3] = [646.0, 943.0, 41.0];

const STREAM_MAP: u64 = 0;
const STREAM_UNLABELED: u64 = 1;
const STREAM_LABELED: u64 = 2;

fn default_components() -> usize {
    8
}

fn default_cycles() -> [f64; 2] {
    [0.3, 1.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_unlabeled: usize,
    pub n_labeled: usize,
    pub h: usize,
    pub w: usize,
    /// Side lengths of the sampling box; positions lie in `[0, area_m]`.
    pub area: [f64; 3],
    pub noise_std: f64,
    pub seed: u64,
    /// Number of cosine components in the feature map.
    #[serde(default = "default_components")]
    pub components: usize,
    /// Range of each component's spatial frequency along an axis, in cycles
    /// across the sampling box.
    #[serde(default = "default_cycles")]
    pub cycles: [f64; 2],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_unlabeled: 2000,
            n_labeled: 200,
            h: 16,
            w: 32,
            area: DEFAULT_AREA,
            noise_std: 0.05,
            seed: 0,
            components: default_components(),
            cycles: default_cycles(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h < 4 || self.w < 4 {
            return Err(Error::config(format!("synthetic extents must be >= 4, got {}x{}", self.h, self.w)));
        }
        if self.n_unlabeled == 0 || self.n_labeled == 0 {
            return Err(Error::config(format!(
                "synthetic sample counts must be >= 1 (n_unlabeled = {}, n_labeled = {})",
                self.n_unlabeled, self.n_labeled
            )));
        }
        if self.area.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::config(format!("area ranges must be positive, got {:?}", self.area)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(self.cycles[0] > 0.0 && self.cycles[0] < self.cycles[1] && self.cycles[1].is_finite()) {
            return Err(Error::config(format!("cycles must be an increasing positive range, got {:?}", self.cycles)));
        }
        if self.components == 0 {
            return Err(Error::config("at least one feature component is required"));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Component {
    amplitude: f64,
    omega: [f64; 3],
    /// Phase per grid cell, row-major `h × w`.
    phase: Vec<f64>,
}

/// The deterministic position → feature map drawn from a config's seed.
pub struct SyntheticMap {
    h: usize,
    w: usize,
    area: [f64; 3],
    components: Vec<Component>,
}

impl SyntheticMap {
    pub fn new(cfg: &SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.seed, STREAM_MAP);
        let k = cfg.components;
        let norm = (2.0 / k as f64).sqrt();
        let components = (0..k)
            .map(|_| {
                let amplitude = norm * rng.random_range(0.5..1.5);
                let omega = std::array::from_fn(|_| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * TAU * rng.random_range(cfg.cycles[0]..cfg.cycles[1])
                });
                // plane wave over the grid plus a gentle ripple
                let tilt = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let ripple_freq = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                let ripple_amp = rng.random_range(0.0..1.0);
                let offset = rng.random_range(0.0..TAU);
                let ripple_phase = rng.random_range(0.0..TAU);
                let mut phase = Vec::with_capacity(cfg.h * cfg.w);
                for i in 0..cfg.h {
                    for j in 0..cfg.w {
                        let u = i as f64 / cfg.h as f64;
                        let v = j as f64 / cfg.w as f64;
                        let plane = TAU * (tilt[0] * u + tilt[1] * v);
                        let ripple = ripple_amp * (TAU * (ripple_freq[0] * u + ripple_freq[1] * v) + ripple_phase).sin();
                        phase.push(offset + plane + ripple);
                    }
                }
                Component { amplitude, omega, phase }
            })
            .collect();
        Ok(SyntheticMap { h: cfg.h, w: cfg.w, area: cfg.area, components })
    }

    /// Noise-free features at a position, row-major `h × w`.
    pub fn features_at(&self, p: [f64; 3]) -> Vec<f64> {
        let pn: [f64; 3] = std::array::from_fn(|a| p[a] / self.area[a]);
        let mut out = vec![0.0; self.h * self.w];
        for c in &self.components {
            let arg = c.omega[0] * pn[0] + c.omega[1] * pn[1] + c.omega[2] * pn[2];
            for (o, &phi) in out.iter_mut().zip(&c.phase) {
                *o += c.amplitude * (arg + phi).cos();
            }
        }
        out
    }

    fn sample(&self, n: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let noise = Normal::new(0.0, noise_std).map_err(|e| Error::config(e.to_string()))?;
        let mut features = Vec::with_capacity(n * self.h * self.w);
        let mut positions = Vec::with_capacity(n * 3);
        for _ in 0..n {
            let p: [f64; 3] = std::array::from_fn(|a| rng.random_range(0.0..self.area[a]));
            positions.extend(p.iter().map(|&v| v as f32));
            for v in self.features_at(p) {
                let e = if noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
                features.push((v + e) as f32);
            }
        }
        Ok((
            Tensor::new(vec![n, self.h, self.w], features)?,
            Tensor::new(vec![n, 3], positions)?,
        ))
    }
}

/// Draws unlabeled and labeled datasets from one seeded map.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(UnlabeledDataset, LabeledDataset)> {
    let map = SyntheticMap::new(cfg)?;
    let (unlabeled, _) = map.sample(cfg.n_unlabeled, cfg.noise_std, &mut stream_rng(cfg.seed, STREAM_UNLABELED))?;
    let (features, positions) = map.sample(cfg.n_labeled, cfg.noise_std, &mut stream_rng(cfg.seed, STREAM_LABELED))?;
    Ok((UnlabeledDataset::new(unlabeled)?, LabeledDataset::new(features, positions)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn small() -> SyntheticConfig {
        SyntheticConfig { n_unlabeled: 50, n_labeled: 20, ..SyntheticConfig::default() }
    }

    #[test]
    fn deterministic_given_seed() {
        let (u1, l1) = generate_synthetic(&small()).unwrap();
        let (u2, l2) = generate_synthetic(&small()).unwrap();
        assert_eq!(u1.features(), u2.features());
        assert_eq!(l1.features(), l2.features());
        assert_eq!(l1.positions(), l2.positions());
        let other = SyntheticConfig { seed: 1, ..small() };
        assert_ne!(generate_synthetic(&other).unwrap().0.features(), u1.features());
    }

    #[test]
    fn noise_free_map_is_a_function_of_position() {
        let map = SyntheticMap::new(&small()).unwrap();
        let p = [100.0, 200.0, 10.0];
        assert_eq!(map.features_at(p), map.features_at(p));
        let far = map.features_at([600.0, 900.0, 40.0]);
        let d: f64 = map.features_at(p).iter().zip(&far).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(d > 0.0);
    }

    #[test]
    fn positions_inside_area() {
        let (_, l) = generate_synthetic(&small()).unwrap();
        for row in l.positions().data().chunks(3) {
            for (v, r) in row.iter().zip(DEFAULT_AREA) {
                assert!(*v >= 0.0 && (*v as f64) <= r);
            }
        }
    }

    #[test]
    fn neighbouring_subcarriers_are_correlated() {
        let cfg = SyntheticConfig { n_unlabeled: 400, ..small() };
        let (u, _) = generate_synthetic(&cfg).unwrap();
        let f = u.features();
        let (n, h, w) = (f.dim(0), f.dim(1), f.dim(2));
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..h {
            for j in 0..w - 1 {
                let a: Vec<f64> = (0..n).map(|s| f.data()[(s * h + i) * w + j] as f64).collect();
                let b: Vec<f64> = (0..n).map(|s| f.data()[(s * h + i) * w + j + 1] as f64).collect();
                total += pearson(&a, &b);
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!(mean > 0.5, "mean neighbour correlation {mean}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            SyntheticConfig { n_labeled: 0, ..small() },
            SyntheticConfig { h: 3, ..small() },
            SyntheticConfig { area: [1.0, 0.0, 1.0], ..small() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        }
    }
}
