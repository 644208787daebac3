//! Seeded synthetic scenes and initializers.
//!
//! Every generator is a pure function of its seed. Randomness comes from
//! `ChaCha8Rng` (portable across platforms), with one stream per purpose so
//! that, e.g., changing the noise level leaves the scene layout untouched:
//!
//! | stream | use                                  |
//! |--------|--------------------------------------|
//! | 0      | scene layout (components, mixing)    |
//! | 1      | observation noise                    |
//! | 2      | initial values of the factors        |

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

const STREAM_LAYOUT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_INIT: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn add_noise(y: &mut Array2<f64>, sigma_per_row: &[f64], rng: &mut ChaCha8Rng) {
    for (mut row, &sigma) in y.axis_iter_mut(Axis(0)).zip(sigma_per_row) {
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("noise level is finite");
            row.iter_mut().for_each(|v| *v += normal.sample(rng));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfSceneConfig {
    pub components: usize,
    pub samples: usize,
    pub observations: usize,
    pub noise_sigma: f64,
}

impl Default for NmfSceneConfig {
    fn default() -> Self {
        Self {
            components: 3,
            samples: 50,
            observations: 100,
            noise_sigma: 0.02,
        }
    }
}

/// Non-negative mixtures of sinusoidal components observed with Gaussian
/// noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfScene {
    /// K x N components.
    pub s_true: Array2<f64>,
    /// C x K mixing weights.
    pub a_true: Array2<f64>,
    /// C x N observations.
    pub y: Array2<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Default scene: K = 3 components of length 50 observed 100 times with
/// noise sigma 0.02.
pub fn make_nmf_scene(seed: u64) -> NmfScene {
    make_nmf_scene_with(seed, &NmfSceneConfig::default())
}

/// Component `k` is `max(0, a_k + b_k sin(2 pi f_k n / N + phase_k))` with
/// offset `a_k` in [0.5, 0.8), amplitude `b_k` in [0.2, 0.5), `f_k` in
/// `[k + 1, k + 1.5)` cycles and a uniform phase. Mixing weights are
/// uniform on [0, 1).
pub fn make_nmf_scene_with(seed: u64, cfg: &NmfSceneConfig) -> NmfScene {
    let (k, n, c) = (cfg.components, cfg.samples, cfg.observations);
    let mut layout = rng(seed, STREAM_LAYOUT);

    let mut s_true = Array2::zeros((k, n));
    for (i, mut row) in s_true.axis_iter_mut(Axis(0)).enumerate() {
        let offset = layout.random_range(0.5..0.8);
        let amplitude = layout.random_range(0.2..0.5);
        let freq = (i + 1) as f64 + layout.random_range(0.0..0.5);
        let phase = layout.random_range(0.0..2.0 * PI);
        for (j, v) in row.iter_mut().enumerate() {
            let arg = 2.0 * PI * freq * j as f64 / n as f64 + phase;
            *v = (offset + amplitude * arg.sin()).max(0.0);
        }
    }
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let a_true = Array2::from_shape_simple_fn((c, k), || unit.sample(&mut layout));

    let mut y = a_true.dot(&s_true);
    add_noise(&mut y, &vec![cfg.noise_sigma; c], &mut rng(seed, STREAM_NOISE));

    NmfScene {
        s_true,
        a_true,
        y,
        noise_sigma: cfg.noise_sigma,
        seed,
    }
}

/// `U(0, 1)` initial values for `A` and `S`.
pub fn init_nmf(seed: u64, shape_a: (usize, usize), shape_s: (usize, usize)) -> (Array2<f64>, Array2<f64>) {
    let mut r = rng(seed, STREAM_INIT);
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let a = Array2::from_shape_simple_fn(shape_a, || unit.sample(&mut r));
    let s = Array2::from_shape_simple_fn(shape_s, || unit.sample(&mut r));
    (a, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AstroSceneConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub sources: usize,
    pub min_size: f64,
    pub max_size: f64,
    /// Geometric mean of the per-band noise levels.
    pub base_noise: f64,
    /// Ratio between the largest and smallest per-band noise level.
    pub noise_spread: f64,
    /// Flux per unit squared size, `F_k = flux_scale * size_k^2`.
    pub flux_scale: f64,
}

impl Default for AstroSceneConfig {
    /// With `flux_scale = 2 pi` every source peaks near its SED value (mean
    /// 0.2 per band), so the base noise of 0.01 gives a peak SNR near 20.
    fn default() -> Self {
        Self {
            height: 30,
            width: 30,
            bands: 5,
            sources: 7,
            min_size: 1.0,
            max_size: 10.0,
            base_noise: 0.01,
            noise_spread: 2.0,
            flux_scale: 2.0 * PI,
        }
    }
}

impl AstroSceneConfig {
    pub fn flux_for_size(&self, size: f64) -> f64 {
        self.flux_scale * size * size
    }
}

/// Circular Gaussian sources observed in several bands.
#[derive(Debug, Clone, PartialEq)]
pub struct AstroScene {
    /// C x N band images, each flattened row-major from `image_shape`.
    pub y: Array2<f64>,
    /// K x N unit-flux source profiles (truncated at the frame edge).
    pub s_true: Array2<f64>,
    /// C x K per-band fluxes, `F_k * SED_k`.
    pub a_true: Array2<f64>,
    /// Per-band noise levels.
    pub sigma: Vec<f64>,
    /// `(row, col)` centers in pixel coordinates.
    pub centers: Vec<(f64, f64)>,
    pub sizes: Vec<f64>,
    pub fluxes: Vec<f64>,
    /// K x C spectral energy distributions, each summing to one.
    pub seds: Array2<f64>,
    pub image_shape: (usize, usize),
    pub seed: u64,
}

impl AstroScene {
    pub fn bands(&self) -> usize {
        self.y.nrows()
    }

    pub fn sources(&self) -> usize {
        self.s_true.nrows()
    }
}

/// Circular Gaussian of unit total mass integrated over each pixel square,
/// flattened row-major. Mass falling outside the frame is lost.
pub fn gaussian_profile(shape: (usize, usize), center: (f64, f64), size: f64) -> Vec<f64> {
    let (h, w) = shape;
    let rows = pixel_masses(h, center.0, size);
    let cols = pixel_masses(w, center.1, size);
    rows.iter().flat_map(|r| cols.iter().map(move |c| r * c)).collect()
}

/// Mass of a 1-d unit Gaussian in each of the intervals `[i - 0.5, i + 0.5)`.
fn pixel_masses(len: usize, center: f64, size: f64) -> Vec<f64> {
    let cdf = |x: f64| 0.5 * libm::erf((x - center) / (size * std::f64::consts::SQRT_2));
    (0..len).map(|i| cdf(i as f64 + 0.5) - cdf(i as f64 - 0.5)).collect()
}

pub fn make_astro_scene(seed: u64) -> AstroScene {
    make_astro_scene_with(seed, &AstroSceneConfig::default())
}

/// Sizes are log-uniform in `[min_size, max_size]`, centers uniform inside
/// the frame, SEDs uniform in [0.1, 1) per band and normalized. Noise levels
/// are log-spaced across the bands over `noise_spread` around `base_noise`.
pub fn make_astro_scene_with(seed: u64, cfg: &AstroSceneConfig) -> AstroScene {
    let (h, w) = (cfg.height, cfg.width);
    let (c, k) = (cfg.bands, cfg.sources);
    let mut layout = rng(seed, STREAM_LAYOUT);

    let mut centers = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k);
    let mut fluxes = Vec::with_capacity(k);
    let mut seds = Array2::zeros((k, c));
    let mut s_true = Array2::zeros((k, h * w));
    let (log_min, log_max) = (cfg.min_size.ln(), cfg.max_size.ln());
    for src in 0..k {
        let size = layout.random_range(log_min..=log_max).exp();
        let center = (
            layout.random_range(0.0..=(h - 1) as f64),
            layout.random_range(0.0..=(w - 1) as f64),
        );
        let mut sed = seds.row_mut(src);
        sed.iter_mut().for_each(|v| *v = layout.random_range(0.1..1.0));
        let total = sed.sum();
        sed.mapv_inplace(|v| v / total);

        let profile = gaussian_profile((h, w), center, size);
        s_true.row_mut(src).assign(&ndarray::Array1::from(profile));
        centers.push(center);
        sizes.push(size);
        fluxes.push(cfg.flux_for_size(size));
    }

    let a_true = Array2::from_shape_fn((c, k), |(l, src)| fluxes[src] * seds[[src, l]]);
    let sigma: Vec<f64> = (0..c)
        .map(|l| {
            let frac = if c > 1 { l as f64 / (c - 1) as f64 } else { 0.5 };
            cfg.base_noise * cfg.noise_spread.powf(frac - 0.5)
        })
        .collect();

    let mut y = a_true.dot(&s_true);
    add_noise(&mut y, &sigma, &mut rng(seed, STREAM_NOISE));

    AstroScene {
        y,
        s_true,
        a_true,
        sigma,
        centers,
        sizes,
        fluxes,
        seds,
        image_shape: (h, w),
        seed,
    }
}

/// Warm start for the multi-band problem together with the perturbed source
/// parameters it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct AstroInit {
    pub a0: Array2<f64>,
    pub s0: Array2<f64>,
    pub centers: Vec<(f64, f64)>,
    pub sizes: Vec<f64>,
}

/// Perturbs every source center by up to `size/4` per axis and its size by
/// up to 50%, models it as a unit-sum Gaussian, and reads its per-band
/// amplitudes off the noisy images at the pixel nearest the assumed center:
/// `A0_lk = max(0, Y_l(pixel)) / S0_k(pixel)`.
pub fn init_astro(scene: &AstroScene, seed: u64) -> AstroInit {
    let (h, w) = scene.image_shape;
    let (c, k) = (scene.bands(), scene.sources());
    let mut r = rng(seed, STREAM_INIT);

    let mut s0 = Array2::zeros((k, h * w));
    let mut a0 = Array2::zeros((c, k));
    let mut centers = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k);
    for src in 0..k {
        let true_size = scene.sizes[src];
        let shift = true_size / 4.0;
        let (cy, cx) = scene.centers[src];
        let center = (
            cy + r.random_range(-shift..=shift),
            cx + r.random_range(-shift..=shift),
        );
        let size = true_size * r.random_range(0.5..=1.5);

        let mut profile = gaussian_profile((h, w), center, size);
        let total: f64 = profile.iter().sum();
        profile.iter_mut().for_each(|v| *v /= total);

        let pi = (center.0.round().clamp(0.0, (h - 1) as f64)) as usize;
        let pj = (center.1.round().clamp(0.0, (w - 1) as f64)) as usize;
        let pix = pi * w + pj;
        for l in 0..c {
            a0[[l, src]] = scene.y[[l, pix]].max(0.0) / profile[pix];
        }
        s0.row_mut(src).assign(&ndarray::Array1::from(profile));
        centers.push(center);
        sizes.push(size);
    }
    AstroInit { a0, s0, centers, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmf_scene_shapes() {
        let s = make_nmf_scene(1);
        assert_eq!(s.s_true.dim(), (3, 50));
        assert_eq!(s.a_true.dim(), (100, 3));
        assert_eq!(s.y.dim(), (100, 50));
        assert!(s.s_true.iter().all(|v| *v >= 0.0));
        assert!(s.a_true.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn noiseless_nmf_scene_is_exact() {
        let cfg = NmfSceneConfig {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let s = make_nmf_scene_with(3, &cfg);
        assert_eq!(s.y, s.a_true.dot(&s.s_true));
    }

    #[test]
    fn nmf_scene_is_deterministic() {
        assert_eq!(make_nmf_scene(42), make_nmf_scene(42));
        assert_ne!(make_nmf_scene(42).y, make_nmf_scene(43).y);
    }

    #[test]
    fn nmf_noise_level() {
        let s = make_nmf_scene(5);
        let resid = &s.y - &s.a_true.dot(&s.s_true);
        let n = resid.len() as f64;
        let mean = resid.sum() / n;
        let std = (resid.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0)).sqrt();
        assert!((std / 0.02 - 1.0).abs() < 0.05, "std {std}");
    }

    #[test]
    fn init_nmf_is_unit_uniform_and_seeded() {
        let (a, s) = init_nmf(9, (100, 3), (3, 50));
        assert_eq!(a.dim(), (100, 3));
        assert_eq!(s.dim(), (3, 50));
        assert!(a.iter().chain(s.iter()).all(|v| (0.0..1.0).contains(v)));
        assert_eq!(init_nmf(9, (100, 3), (3, 50)), (a.clone(), s));
        assert_ne!(init_nmf(10, (100, 3), (3, 50)).0, a);
    }

    #[test]
    fn astro_scene_layout() {
        let s = make_astro_scene(7);
        assert_eq!(s.y.dim(), (5, 900));
        assert_eq!(s.s_true.dim(), (7, 900));
        assert_eq!(s.a_true.dim(), (5, 7));
        assert_eq!(s.image_shape, (30, 30));
        assert!(s.sizes.iter().all(|&x| (1.0..=10.0).contains(&x)));
        assert!(s.s_true.iter().all(|v| *v >= 0.0));
        assert!(s.sigma.iter().all(|v| *v > 0.0));
        let spread = s.sigma.iter().cloned().fold(0.0, f64::max) / s.sigma.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((spread - 2.0).abs() < 1e-12);
        assert_eq!(make_astro_scene(7), s);
    }

    #[test]
    fn flux_scales_with_size_squared() {
        let cfg = AstroSceneConfig::default();
        assert!((cfg.flux_for_size(4.0) / cfg.flux_for_size(2.0) - 4.0).abs() < 1e-12);
        let s = make_astro_scene(11);
        for (f, sz) in s.fluxes.iter().zip(&s.sizes) {
            assert!((f / (sz * sz) - cfg.flux_scale).abs() < 1e-12);
        }
    }

    #[test]
    fn astro_init_perturbations_stay_in_bounds() {
        let scene = make_astro_scene(3);
        let init = init_astro(&scene, 4);
        for k in 0..scene.sources() {
            let (dy, dx) = (
                init.centers[k].0 - scene.centers[k].0,
                init.centers[k].1 - scene.centers[k].1,
            );
            assert!(dy.abs() <= scene.sizes[k] / 4.0 + 1e-12);
            assert!(dx.abs() <= scene.sizes[k] / 4.0 + 1e-12);
            let ratio = init.sizes[k] / scene.sizes[k];
            assert!((0.5..=1.5).contains(&ratio));
            assert!((init.s0.row(k).sum() - 1.0).abs() < 1e-12);
        }
        assert!(init.a0.iter().all(|v| *v >= 0.0 && v.is_finite()));
        assert_eq!(init_astro(&scene, 4), init);
    }
}
