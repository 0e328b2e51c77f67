//! Synthetic acquisitions: phantom, smooth coil maps, correlated noise.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::acquisition::{build_covariance, AcquisitionModel};
use crate::error::{Error, Result};
use crate::image::{ComplexImage, MultiCoilData, NoiseCovariance, SensitivityMaps};
use crate::linalg;

/// Stream offset for the map-perturbation draws, kept clear of position streams.
const PERTURBATION_STREAM: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    SheppLogan,
    Checker,
    Flat,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::SheppLogan => "shepp-logan",
            PhantomKind::Checker => "checker",
            PhantomKind::Flat => "flat",
        }
    }
}

impl FromStr for PhantomKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shepp-logan" => Ok(PhantomKind::SheppLogan),
            "checker" => Ok(PhantomKind::Checker),
            "flat" => Ok(PhantomKind::Flat),
            _ => Err(format!("unknown phantom '{s}' (expected shepp-logan, checker or flat)")),
        }
    }
}

/// Which Ψ the simulator draws noise from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceModel {
    /// Sensitivity-overlap model built by [`build_covariance`].
    Overlap,
    /// σ²·I, for diagnostic runs.
    Identity,
}

impl CovarianceModel {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceModel::Overlap => "overlap",
            CovarianceModel::Identity => "identity",
        }
    }
}

impl FromStr for CovarianceModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "overlap" => Ok(CovarianceModel::Overlap),
            "identity" => Ok(CovarianceModel::Identity),
            _ => Err(format!("unknown covariance '{s}' (expected overlap or identity)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub phantom: PhantomKind,
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    pub reduction: usize,
    pub sigma_n: f64,
    /// Spatial decay length of each coil profile, in pixels.
    pub coil_scale: f64,
    pub seed: u64,
    /// Amplitude in radians of the smooth phase applied to the phantom.
    pub phantom_phase: f64,
    pub covariance: CovarianceModel,
    /// Relative amplitude of the smooth error put on the maps handed to reconstruction.
    pub map_error: f64,
    /// Wavelet depth the image must support.
    pub levels: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomKind::SheppLogan,
            height: 64,
            width: 64,
            coils: 8,
            reduction: 4,
            sigma_n: 4.0,
            coil_scale: 32.0,
            seed: 1,
            phantom_phase: 0.6,
            covariance: CovarianceModel::Overlap,
            map_error: 0.0,
            levels: 3,
        }
    }
}

const KEYS: &[&str] = &[
    "phantom",
    "height",
    "width",
    "coils",
    "reduction",
    "sigma_n",
    "coil_scale",
    "seed",
    "phantom_phase",
    "covariance",
    "map_error",
    "levels",
];

fn cfg_err(line: Option<usize>, field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        field: field.to_string(),
        msg: msg.into(),
    }
}

impl SimulationConfig {
    /// Parses `key = value` lines; `#` starts a comment. Missing keys keep
    /// their defaults, unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = Some(idx + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(cfg_err(lineno, line, "expected key = value"));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(cfg_err(lineno, key, "unknown key"));
            };
            if seen.contains(&known) {
                return Err(cfg_err(lineno, key, "given more than once"));
            }
            seen.push(known);
            cfg.set(key, value).map_err(|msg| cfg_err(lineno, key, msg))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}'"))
        }
        match key {
            "phantom" => self.phantom = value.parse()?,
            "height" => self.height = num(value)?,
            "width" => self.width = num(value)?,
            "coils" => self.coils = num(value)?,
            "reduction" => self.reduction = num(value)?,
            "sigma_n" => self.sigma_n = num(value)?,
            "coil_scale" => self.coil_scale = num(value)?,
            "seed" => self.seed = num(value)?,
            "phantom_phase" => self.phantom_phase = num(value)?,
            "covariance" => self.covariance = value.parse()?,
            "map_error" => self.map_error = num(value)?,
            "levels" => self.levels = num(value)?,
            _ => unreachable!("key list and setter disagree"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let e = |field: &str, msg: String| Err(cfg_err(None, field, msg));
        if self.height == 0 {
            return e("height", "must be positive".into());
        }
        if self.width == 0 {
            return e("width", "must be positive".into());
        }
        if self.reduction == 0 {
            return e("reduction", "must be at least 1".into());
        }
        if self.height % self.reduction != 0 {
            return e(
                "reduction",
                format!("R = {} does not divide height {}", self.reduction, self.height),
            );
        }
        if self.coils < self.reduction {
            return e(
                "coils",
                format!("L = {} is smaller than R = {}", self.coils, self.reduction),
            );
        }
        let block = 1usize.checked_shl(self.levels as u32).unwrap_or(0);
        if self.levels == 0 || block == 0 {
            return e("levels", format!("{} is not a usable depth", self.levels));
        }
        if self.height % block != 0 || self.width % block != 0 {
            return e(
                "levels",
                format!(
                    "{}x{} is not divisible by 2^{}",
                    self.height, self.width, self.levels
                ),
            );
        }
        if !(self.sigma_n >= 0.0) || !self.sigma_n.is_finite() {
            return e("sigma_n", format!("{} must be finite and >= 0", self.sigma_n));
        }
        if !(self.coil_scale > 0.0) || !self.coil_scale.is_finite() {
            return e("coil_scale", format!("{} must be positive", self.coil_scale));
        }
        if !self.phantom_phase.is_finite() {
            return e("phantom_phase", "must be finite".into());
        }
        if !(self.map_error >= 0.0) || !self.map_error.is_finite() {
            return e("map_error", format!("{} must be finite and >= 0", self.map_error));
        }
        Ok(())
    }
}

impl fmt::Display for SimulationConfig {
    /// Canonical text form; parses back to the same config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "phantom = {}", self.phantom.name())?;
        writeln!(f, "height = {}", self.height)?;
        writeln!(f, "width = {}", self.width)?;
        writeln!(f, "coils = {}", self.coils)?;
        writeln!(f, "reduction = {}", self.reduction)?;
        writeln!(f, "sigma_n = {:?}", self.sigma_n)?;
        writeln!(f, "coil_scale = {:?}", self.coil_scale)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "phantom_phase = {:?}", self.phantom_phase)?;
        writeln!(f, "covariance = {}", self.covariance.name())?;
        writeln!(f, "map_error = {:?}", self.map_error)?;
        writeln!(f, "levels = {}", self.levels)
    }
}

/// Normalized coordinates in [-1, 1] at pixel centers.
fn unit_coords(y: usize, x: usize, h: usize, w: usize) -> (f64, f64) {
    let u = (2.0 * x as f64 + 1.0) / w as f64 - 1.0;
    let v = 1.0 - (2.0 * y as f64 + 1.0) / h as f64;
    (u, v)
}

// intensity, semi-axes a (x) and b (y), center, rotation in degrees
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Real-valued magnitude phantom in [0, 255].
pub fn phantom_magnitude(kind: PhantomKind, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    match kind {
        PhantomKind::SheppLogan => {
            for y in 0..h {
                for x in 0..w {
                    let (u, v) = unit_coords(y, x, h, w);
                    let mut val = 0.0;
                    for &(a, ax, by, x0, y0, deg) in &SHEPP_LOGAN {
                        let (s, c) = deg.to_radians().sin_cos();
                        let (du, dv) = (u - x0, v - y0);
                        let (pu, pv) = (du * c + dv * s, -du * s + dv * c);
                        if (pu / ax).powi(2) + (pv / by).powi(2) <= 1.0 {
                            val += a;
                        }
                    }
                    out[y * w + x] = 255.0 * val.clamp(0.0, 1.0);
                }
            }
        }
        PhantomKind::Checker => {
            let bh = (h / 8).max(1);
            let bw = (w / 8).max(1);
            for y in 0..h {
                for x in 0..w {
                    out[y * w + x] = if (y / bh + x / bw) % 2 == 0 { 200.0 } else { 60.0 };
                }
            }
        }
        PhantomKind::Flat => out.iter_mut().for_each(|v| *v = 128.0),
    }
    out
}

/// Phantom with a smooth low-order phase of the given amplitude.
pub fn phantom(kind: PhantomKind, h: usize, w: usize, phase: f64) -> ComplexImage {
    let mag = phantom_magnitude(kind, h, w);
    ComplexImage::from_fn(h, w, |y, x| {
        let (u, v) = unit_coords(y, x, h, w);
        let phi = phase * (0.8 * u - 0.6 * v + 0.4 * u * v);
        Complex64::from_polar(mag[y * w + x], phi)
    })
}

/// `L` smooth complex coil profiles placed around the FOV. Each is a
/// first-order complex polynomial with a linear phase ramp, damped by a
/// Gaussian decay of length `scale` pixels from the coil center.
pub fn coil_maps(coils: usize, h: usize, w: usize, scale: f64) -> SensitivityMaps {
    let radius = 0.5 * h.max(w) as f64 * 1.1;
    let (cy, cx) = (0.5 * h as f64, 0.5 * w as f64);
    let maps = (0..coils)
        .map(|l| {
            let ang = 2.0 * std::f64::consts::PI * (l as f64 + 0.5) / coils as f64;
            let (sa, ca) = ang.sin_cos();
            let (py, px) = (cy - radius * sa, cx + radius * ca);
            let a = Complex64::from_polar(0.15, ang);
            let b = Complex64::from_polar(0.1, -0.5 * ang);
            ComplexImage::from_fn(h, w, |y, x| {
                let (u, v) = unit_coords(y, x, h, w);
                let dy = y as f64 + 0.5 - py;
                let dx = x as f64 + 0.5 - px;
                let decay = (-(dy * dy + dx * dx) / (2.0 * scale * scale)).exp();
                let poly = Complex64::new(1.0, 0.0) + a * u + b * v;
                let phase = ang + 0.5 * std::f64::consts::PI * (ca * u + sa * v);
                poly * Complex64::from_polar(decay, phase)
            })
        })
        .collect();
    SensitivityMaps::new(maps).expect("maps share the FOV")
}

/// Multiplies each map by `1 + ε·q_ℓ` with `q_ℓ` a random first-order
/// complex polynomial drawn from `seed`.
pub fn perturb_maps(maps: &SensitivityMaps, epsilon: f64, seed: u64) -> SensitivityMaps {
    if epsilon == 0.0 {
        return maps.clone();
    }
    let (h, w) = maps.dims();
    let out = maps
        .maps()
        .iter()
        .enumerate()
        .map(|(l, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(PERTURBATION_STREAM + l as u64);
            let mut draw = || {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            };
            let (c0, c1, c2) = (draw(), draw(), draw());
            ComplexImage::from_fn(h, w, |y, x| {
                let (u, v) = unit_coords(y, x, h, w);
                m.get(y, x) * (Complex64::new(1.0, 0.0) + (c0 + c1 * u + c2 * v) * epsilon)
            })
        })
        .collect();
    SensitivityMaps::new(out).expect("dims unchanged")
}

/// Draws circular complex Gaussian vectors with covariance Ψ, one
/// independent RNG stream per reduced-grid position.
#[derive(Clone, Debug)]
pub struct NoiseGenerator {
    size: usize,
    /// Lower factor A with A·Aᴴ = Ψ/2.
    factor: Vec<Complex64>,
}

impl NoiseGenerator {
    pub fn new(psi: &NoiseCovariance) -> Result<Self> {
        let n = psi.size();
        let half: Vec<Complex64> = psi.matrix().iter().map(|z| z * 0.5).collect();
        let factor = linalg::cholesky(&half, n)
            .ok_or_else(|| Error::Numerical("noise covariance has no Cholesky factor".into()))?;
        Ok(Self { size: n, factor })
    }

    /// n = A(x + iy) with x, y independent standard normal L-vectors.
    pub fn sample(&self, seed: u64, position: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(position);
        let z: Vec<Complex64> = (0..self.size)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im)
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); self.size];
        linalg::matvec(&self.factor, self.size, self.size, &z, &mut out);
        out
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub reference: ComplexImage,
    /// Maps used to generate the data.
    pub true_maps: SensitivityMaps,
    /// Maps handed to reconstruction (equal to `true_maps` unless `map_error > 0`).
    pub maps: SensitivityMaps,
    pub covariance: NoiseCovariance,
    pub data: MultiCoilData,
}

impl Simulation {
    /// Acquisition model as seen by the reconstruction.
    pub fn model(&self) -> Result<AcquisitionModel> {
        AcquisitionModel::new(self.maps.clone(), self.covariance.clone(), self.data.reduction())
    }
}

/// Noise covariance for the config. With σ_n = 0 no noise is drawn; the
/// returned Ψ then carries the unit-σ correlation shape so it stays
/// invertible for weighting.
pub fn covariance_for(cfg: &SimulationConfig, maps: &SensitivityMaps) -> Result<NoiseCovariance> {
    let sigma = if cfg.sigma_n > 0.0 { cfg.sigma_n } else { 1.0 };
    match cfg.covariance {
        CovarianceModel::Overlap => build_covariance(maps, sigma),
        CovarianceModel::Identity => NoiseCovariance::scaled_identity(maps.coil_count(), sigma),
    }
}

/// Deterministic synthetic acquisition.
pub fn simulate(cfg: &SimulationConfig) -> Result<Simulation> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let reference = phantom(cfg.phantom, h, w, cfg.phantom_phase);
    let true_maps = coil_maps(cfg.coils, h, w, cfg.coil_scale);
    let covariance = covariance_for(cfg, &true_maps)?;
    let truth = AcquisitionModel::new(true_maps.clone(), covariance.clone(), cfg.reduction)?;
    let clean = truth.forward(&reference)?;
    let data = if cfg.sigma_n > 0.0 {
        let gen = NoiseGenerator::new(&covariance)?;
        let mut coils = clean.into_coils();
        for p in 0..truth.positions() {
            let n = gen.sample(cfg.seed, p as u64);
            for (c, v) in coils.iter_mut().zip(n) {
                c.data_mut()[p] += v;
            }
        }
        MultiCoilData::new(cfg.reduction, h, coils)?
    } else {
        clean
    };
    let maps = perturb_maps(&true_maps, cfg.map_error, cfg.seed);
    Ok(Simulation {
        reference,
        true_maps,
        maps,
        covariance,
        data,
    })
}
