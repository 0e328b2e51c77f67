//! Wavelet-domain priors: Generalized Gauss-Laplace (GGL) on detail
//! coefficients, Gaussian on the approximation, their maximum-likelihood
//! fits and the associated proximity operators.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::special::{ln_erfcx, mills_moment};
use crate::wavelet::{dwt2, Orientation, Subband, WaveletBasis, WaveletCoefficients};

/// GGL weights for the real and imaginary channels of one detail subband.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubbandParams {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub beta_re: f64,
    pub beta_im: f64,
}

impl SubbandParams {
    pub fn validate(&self) -> Result<()> {
        let ok_a = |a: f64| a >= 0.0 && a.is_finite();
        let ok_b = |b: f64| b > 0.0 && b.is_finite();
        if !ok_a(self.alpha_re) || !ok_a(self.alpha_im) || !ok_b(self.beta_re) || !ok_b(self.beta_im) {
            return Err(Error::InvalidParameter(format!(
                "subband parameters need alpha >= 0 and beta > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Gaussian model of the approximation band, per channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu_re: f64,
    pub mu_im: f64,
    pub sigma_re: f64,
    pub sigma_im: f64,
}

/// Full prior: one [`SubbandParams`] per (level, orientation) plus the
/// approximation Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    levels: usize,
    /// `details[j-1][o]` in [`Orientation::ALL`] order.
    details: Vec<[SubbandParams; 3]>,
    approx: GaussianParams,
}

fn orientation_index(o: Orientation) -> usize {
    match o {
        Orientation::Horizontal => 0,
        Orientation::Vertical => 1,
        Orientation::Diagonal => 2,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperFile {
    levels: usize,
    approximation: GaussianParams,
    detail: Vec<DetailRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetailRecord {
    level: usize,
    orientation: String,
    #[serde(flatten)]
    params: SubbandParams,
}

impl Hyperparameters {
    pub fn new(levels: usize, details: Vec<[SubbandParams; 3]>, approx: GaussianParams) -> Result<Self> {
        if levels == 0 || details.len() != levels {
            return Err(Error::InvalidParameter(format!(
                "expected {levels} levels of detail parameters, got {}",
                details.len()
            )));
        }
        for p in details.iter().flatten() {
            p.validate()?;
        }
        let ok = |s: f64| s > 0.0 && s.is_finite();
        if !ok(approx.sigma_re) || !ok(approx.sigma_im) || !approx.mu_re.is_finite() || !approx.mu_im.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "approximation parameters need finite mu and sigma > 0, got {approx:?}"
            )));
        }
        Ok(Self { levels, details, approx })
    }

    /// Same parameters in every subband.
    pub fn uniform(levels: usize, detail: SubbandParams, approx: GaussianParams) -> Result<Self> {
        Self::new(levels, vec![[detail; 3]; levels], approx)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn detail(&self, level: usize, orientation: Orientation) -> &SubbandParams {
        &self.details[level - 1][orientation_index(orientation)]
    }

    pub fn detail_mut(&mut self, level: usize, orientation: Orientation) -> &mut SubbandParams {
        &mut self.details[level - 1][orientation_index(orientation)]
    }

    /// Number of detail entries, `3·levels`.
    pub fn detail_count(&self) -> usize {
        3 * self.details.len()
    }

    pub fn approximation(&self) -> &GaussianParams {
        &self.approx
    }

    /// Strong-convexity modulus ϑ₁ = min{(2σ_Re²)⁻¹, (2σ_Im²)⁻¹, all β}.
    pub fn strong_convexity(&self) -> f64 {
        let a = &self.approx;
        self.details
            .iter()
            .flatten()
            .flat_map(|p| [p.beta_re, p.beta_im])
            .fold(
                (2.0 * a.sigma_re * a.sigma_re)
                    .recip()
                    .min((2.0 * a.sigma_im * a.sigma_im).recip()),
                f64::min,
            )
    }

    /// ϑ₀ = (K_a/2)(μ_Re²/σ_Re² + μ_Im²/σ_Im²) for an approximation band of
    /// `approx_len` coefficients.
    pub fn offset(&self, approx_len: usize) -> f64 {
        let a = &self.approx;
        0.5 * approx_len as f64
            * (a.mu_re * a.mu_re / (a.sigma_re * a.sigma_re) + a.mu_im * a.mu_im / (a.sigma_im * a.sigma_im))
    }

    pub fn check_layout(&self, zeta: &WaveletCoefficients) -> Result<()> {
        if zeta.levels() != self.levels {
            return Err(Error::Dimension(format!(
                "coefficients have {} levels, hyperparameters {}",
                zeta.levels(),
                self.levels
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let detail = (1..=self.levels)
            .flat_map(|j| {
                Orientation::ALL.iter().map(move |&o| (j, o))
            })
            .map(|(j, o)| DetailRecord {
                level: j,
                orientation: o.short().to_string(),
                params: *self.detail(j, o),
            })
            .collect();
        let file = HyperFile {
            levels: self.levels,
            approximation: self.approx,
            detail,
        };
        toml::to_string(&file).expect("plain records serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: HyperFile =
            toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("hyperparameter file: {e}")))?;
        let mut slots: Vec<[Option<SubbandParams>; 3]> = vec![[None; 3]; file.levels];
        for rec in file.detail {
            let o = match rec.orientation.as_str() {
                "h" => Orientation::Horizontal,
                "v" => Orientation::Vertical,
                "d" => Orientation::Diagonal,
                other => {
                    return Err(Error::InvalidParameter(format!("unknown orientation '{other}'")));
                }
            };
            if rec.level == 0 || rec.level > file.levels {
                return Err(Error::InvalidParameter(format!(
                    "detail level {} outside 1..={}",
                    rec.level, file.levels
                )));
            }
            let slot = &mut slots[rec.level - 1][orientation_index(o)];
            if slot.is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate entry for {}{}",
                    o.short(),
                    rec.level
                )));
            }
            *slot = Some(rec.params);
        }
        let mut details = Vec::with_capacity(file.levels);
        for (j, row) in slots.into_iter().enumerate() {
            let mut out = [SubbandParams { alpha_re: 0.0, alpha_im: 0.0, beta_re: 1.0, beta_im: 1.0 }; 3];
            for (k, v) in row.into_iter().enumerate() {
                out[k] = v.ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "missing entry for {}{}",
                        Orientation::ALL[k].short(),
                        j + 1
                    ))
                })?;
            }
            details.push(out);
        }
        Self::new(file.levels, details, file.approximation)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

fn check_ggl(alpha: f64, beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("GGL needs beta > 0, got {beta}")));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("GGL needs alpha >= 0, got {alpha}")));
    }
    Ok(())
}

/// Log-normalizer term `½ln(β/2π) − α²/(2β) − ln erfc(α/√(2β))`.
fn ggl_log_norm(alpha: f64, beta: f64) -> f64 {
    let z = alpha / (2.0 * beta).sqrt();
    0.5 * (beta / (2.0 * std::f64::consts::PI)).ln() - ln_erfcx(z)
}

/// GGL density `√(β/2π)·exp(−(α|ξ| + βξ²/2 + α²/(2β))) / erfc(α/√(2β))`.
pub fn ggl_pdf(xi: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(ggl_log_pdf(xi, alpha, beta)?.exp())
}

pub fn ggl_log_pdf(xi: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_ggl(alpha, beta)?;
    Ok(ggl_log_norm(alpha, beta) - alpha * xi.abs() - 0.5 * beta * xi * xi)
}

/// Σ log ggl_pdf over the samples.
pub fn ggl_log_likelihood(samples: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    check_ggl(alpha, beta)?;
    Ok(Stats::of(samples).log_likelihood(alpha, beta))
}

/// Sufficient statistics n, Σ|ξ|, Σξ².
#[derive(Clone, Copy, Debug)]
struct Stats {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Stats {
    fn of(samples: &[f64]) -> Self {
        let (s1, s2) = samples.iter().fold((0.0, 0.0), |(a, b), &x| (a + x.abs(), b + x * x));
        Self {
            n: samples.len() as f64,
            s1,
            s2,
        }
    }

    fn log_likelihood(&self, alpha: f64, beta: f64) -> f64 {
        self.n * ggl_log_norm(alpha, beta) - alpha * self.s1 - 0.5 * beta * self.s2
    }

    /// ∂ℓ/∂β at fixed α: `(n·E_β[ξ²] − Σξ²)/2` with the model second
    /// moment `E_β[ξ²] = (1 − 2z(m(z) − z))/β`, `z = α/√(2β)`.
    fn beta_slope(&self, alpha: f64, beta: f64) -> f64 {
        let z = alpha / (2.0 * beta).sqrt();
        0.5 * (self.n * mills_moment(z) / beta - self.s2)
    }

    /// Smallest β considered. When the data are heavier-tailed than a
    /// Laplace law the likelihood increases all the way to β → 0; the
    /// floor keeps β > 0 at a negligible likelihood cost.
    fn beta_floor(&self) -> f64 {
        1e-9 * self.n / self.s2
    }

    /// β maximizing the likelihood at fixed α. ℓ is concave in β, so its
    /// slope is decreasing: Newton steps on ln β (derivative by central
    /// difference), kept inside a sign-change bracket.
    fn best_beta(&self, alpha: f64) -> f64 {
        let start = self.n / self.s2;
        let floor = self.beta_floor();
        if self.beta_slope(alpha, floor) <= 0.0 {
            return floor;
        }
        let slope = |t: f64| self.beta_slope(alpha, t.exp());
        let (mut lo, mut hi) = (floor.ln(), start.ln());
        while slope(hi) > 0.0 {
            lo = hi;
            hi += 2.0;
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let s = slope(t);
            if s > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let h = 1e-6;
            let ds = (slope(t + h) - slope(t - h)) / (2.0 * h);
            let newton = t - s / ds;
            let next = if ds < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - t).abs() <= 1e-12 || hi - lo <= 1e-12 {
                return next.exp();
            }
            t = next;
        }
        t.exp()
    }
}

/// Maximum-likelihood GGL parameters and the attained log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GglFit {
    pub alpha: f64,
    pub beta: f64,
    pub log_likelihood: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// ML fit of (α, β): golden-section search over α ∈ [0, 10/std] on the
/// profile likelihood, with β optimized for each α.
pub fn fit_ggl(samples: &[f64]) -> Result<GglFit> {
    if samples.len() < 10 {
        return Err(Error::Degenerate(format!(
            "need at least 10 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if !(std > 0.0) {
        return Err(Error::Degenerate("all samples are equal".into()));
    }
    let stats = Stats::of(samples);
    let profile = |alpha: f64| {
        let beta = stats.best_beta(alpha);
        (beta, stats.log_likelihood(alpha, beta))
    };

    let alpha_hi = 10.0 / std;
    let (mut a, mut b) = (0.0, alpha_hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = profile(c).1;
    let mut fd = profile(d).1;
    while b - a > 1e-8 * alpha_hi {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = profile(c).1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = profile(d).1;
        }
    }
    let mid = 0.5 * (a + b);
    let best = [0.0, mid, alpha_hi]
        .into_iter()
        .map(|al| {
            let (be, ll) = profile(al);
            GglFit {
                alpha: al,
                beta: be,
                log_likelihood: ll,
            }
        })
        .fold(None::<GglFit>, |acc, f| match acc {
            Some(g) if g.log_likelihood >= f.log_likelihood => Some(g),
            _ => Some(f),
        })
        .expect("three candidates");
    if !best.log_likelihood.is_finite() {
        return Err(Error::Numerical("GGL likelihood is not finite".into()));
    }
    Ok(best)
}

/// Sample mean and ML (biased) standard deviation, σ floored at 1e-12.
pub fn fit_gaussian(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples".into()));
    }
    let n = samples.len() as f64;
    let mu = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    Ok((mu, var.sqrt().max(1e-12)))
}

/// Decomposes `reference` and fits the GGL per detail subband and channel,
/// and a Gaussian per channel on the approximation band.
pub fn estimate_hyperparameters(
    reference: &ComplexImage,
    basis: &WaveletBasis,
    levels: usize,
) -> Result<Hyperparameters> {
    let zeta = dwt2(reference, basis, levels)?;
    fit_hyperparameters(&zeta)
}

/// As [`estimate_hyperparameters`] but from coefficients already computed.
pub fn fit_hyperparameters(zeta: &WaveletCoefficients) -> Result<Hyperparameters> {
    let levels = zeta.levels();
    let jobs: Vec<(usize, Orientation, bool)> = (1..=levels)
        .flat_map(|j| Orientation::ALL.into_iter().flat_map(move |o| [(j, o, false), (j, o, true)]))
        .collect();
    let fits = jobs
        .par_iter()
        .map(|&(level, orientation, imag)| {
            let values = zeta.subband_values(Subband::Detail { level, orientation });
            let channel: Vec<f64> = values.iter().map(|z| if imag { z.im } else { z.re }).collect();
            fit_ggl(&channel).map_err(|e| {
                Error::Degenerate(format!(
                    "{} channel of subband {}: {e}",
                    if imag { "imaginary" } else { "real" },
                    Subband::Detail { level, orientation }
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut details = Vec::with_capacity(levels);
    for j in 0..levels {
        let mut row = [SubbandParams { alpha_re: 0.0, alpha_im: 0.0, beta_re: 1.0, beta_im: 1.0 }; 3];
        for (k, slot) in row.iter_mut().enumerate() {
            let re = fits[(j * 3 + k) * 2];
            let im = fits[(j * 3 + k) * 2 + 1];
            *slot = SubbandParams {
                alpha_re: re.alpha,
                alpha_im: im.alpha,
                beta_re: re.beta,
                beta_im: im.beta,
            };
        }
        details.push(row);
    }
    let approx = zeta.subband_values(Subband::Approximation);
    let (mu_re, sigma_re) = fit_gaussian(&approx.iter().map(|z| z.re).collect::<Vec<_>>())?;
    let (mu_im, sigma_im) = fit_gaussian(&approx.iter().map(|z| z.im).collect::<Vec<_>>())?;
    Hyperparameters::new(
        levels,
        details,
        GaussianParams {
            mu_re,
            mu_im,
            sigma_re,
            sigma_im,
        },
    )
}

/// prox of γ(α|·−μ| + (β/2)(·−μ)²):
/// `sign(ξ−μ)/(γβ+1)·max(|ξ−μ| − γα, 0) + μ`.
#[inline]
pub fn prox_scalar(xi: f64, alpha: f64, beta: f64, mu: f64, gamma: f64) -> f64 {
    let t = xi - mu;
    let shrunk = (t.abs() - gamma * alpha).max(0.0);
    t.signum() * shrunk / (gamma * beta + 1.0) + mu
}

/// Channelwise prox of a separable real/imaginary GGL penalty centered at μ.
#[inline]
pub fn prox_complex(xi: Complex64, p: &SubbandParams, mu: Complex64, gamma: f64) -> Complex64 {
    Complex64::new(
        prox_scalar(xi.re, p.alpha_re, p.beta_re, mu.re, gamma),
        prox_scalar(xi.im, p.alpha_im, p.beta_im, mu.im, gamma),
    )
}

/// prox of γ𝒥_P, applied coefficientwise: Gaussian prox on the
/// approximation band, GGL prox centered at 0 on every detail subband.
pub fn prox_penalty(zeta: &WaveletCoefficients, h: &Hyperparameters, gamma: f64) -> Result<WaveletCoefficients> {
    h.check_layout(zeta)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("prox step must be positive, got {gamma}")));
    }
    let mut out = zeta.clone();
    let width = zeta.width();
    for block in zeta.blocks() {
        let (params, mu) = subband_prox_params(h, block.subband);
        let data = out.data_mut();
        for y in block.rows.clone() {
            for v in &mut data[y * width + block.cols.start..y * width + block.cols.end] {
                *v = prox_complex(*v, &params, mu, gamma);
            }
        }
    }
    Ok(out)
}

/// The approximation Gaussian expressed as a GGL with α = 0, β = 1/σ².
fn subband_prox_params(h: &Hyperparameters, subband: Subband) -> (SubbandParams, Complex64) {
    match subband {
        Subband::Approximation => {
            let a = h.approximation();
            (
                SubbandParams {
                    alpha_re: 0.0,
                    alpha_im: 0.0,
                    beta_re: 1.0 / (a.sigma_re * a.sigma_re),
                    beta_im: 1.0 / (a.sigma_im * a.sigma_im),
                },
                Complex64::new(a.mu_re, a.mu_im),
            )
        }
        Subband::Detail { level, orientation } => (*h.detail(level, orientation), Complex64::new(0.0, 0.0)),
    }
}

/// 𝒥_P(ζ): Σ_a (Re−μ_Re)²/(2σ_Re²) + (Im−μ_Im)²/(2σ_Im²) plus
/// Σ_detail α_Re|Re| + β_Re/2·Re² + α_Im|Im| + β_Im/2·Im².
pub fn penalty(zeta: &WaveletCoefficients, h: &Hyperparameters) -> Result<f64> {
    h.check_layout(zeta)?;
    let width = zeta.width();
    let data = zeta.data();
    let mut total = 0.0;
    for block in zeta.blocks() {
        let (p, mu) = subband_prox_params(h, block.subband);
        let mut sum = 0.0;
        for y in block.rows.clone() {
            for z in &data[y * width + block.cols.start..y * width + block.cols.end] {
                let (r, i) = (z.re - mu.re, z.im - mu.im);
                sum += p.alpha_re * r.abs() + 0.5 * p.beta_re * r * r + p.alpha_im * i.abs() + 0.5 * p.beta_im * i * i;
            }
        }
        total += sum;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{idwt2, WaveletKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn params(a: f64, b: f64) -> SubbandParams {
        SubbandParams {
            alpha_re: a,
            alpha_im: a,
            beta_re: b,
            beta_im: b,
        }
    }

    fn gauss(mu: f64, sigma: f64) -> GaussianParams {
        GaussianParams {
            mu_re: mu,
            mu_im: mu,
            sigma_re: sigma,
            sigma_im: sigma,
        }
    }

    #[test]
    fn pdf_values() {
        let v = ggl_pdf(0.0, 0.0, 1.0).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(ggl_pdf(1.0, 1.0, 0.0).is_err());
        assert!(ggl_pdf(1.0, -1.0, 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (x, a, b) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..4.0), rng.random_range(0.01..4.0));
            assert_eq!(ggl_pdf(x, a, b).unwrap(), ggl_pdf(-x, a, b).unwrap());
        }
    }

    /// Composite Gauss-Legendre on [−50, 50], intervals refined near 0 where the kink sits.
    fn integrate(f: impl Fn(f64) -> f64) -> f64 {
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let mut total = 0.0;
        let pieces = 20_000;
        let h = 100.0 / pieces as f64;
        for k in 0..pieces {
            let (a, b) = (-50.0 + k as f64 * h, -50.0 + (k + 1) as f64 * h);
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            total += nodes.iter().map(|(x, w)| w * f(c + r * x)).sum::<f64>() * r;
        }
        total
    }

    #[test]
    fn pdf_normalizes() {
        for (a, b) in [(1.3, 0.7), (0.0, 2.0), (25.0, 0.5)] {
            let z = integrate(|x| ggl_pdf(x, a, b).unwrap());
            assert!((z - 1.0).abs() < 1e-8, "({a}, {b}) integrates to {z}");
        }
    }

    #[test]
    fn fit_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let f = fit_ggl(&xs).unwrap();
        assert!(f.alpha < 0.05 && (f.beta - 1.0).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn fit_laplace_beats_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let f = fit_ggl(&xs).unwrap();
        let s2: f64 = xs.iter().map(|x| x * x).sum();
        let gauss_ll = ggl_log_likelihood(&xs, 0.0, xs.len() as f64 / s2).unwrap();
        assert!(f.log_likelihood >= gauss_ll);
        assert!((f.log_likelihood - ggl_log_likelihood(&xs, f.alpha, f.beta).unwrap()).abs() < 1e-6 * gauss_ll.abs());
        assert!(f.alpha > 0.5, "{f:?}");
    }

    #[test]
    fn fit_is_a_local_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..5000)
            .map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.random_range(-0.5..0.5);
                g * 0.5 - u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let f = fit_ggl(&xs).unwrap();
        let ll = |a: f64, b: f64| ggl_log_likelihood(&xs, a, b).unwrap();
        for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3), (1e-3, 1e-3)] {
            assert!(ll(f.alpha * (1.0 + da), f.beta * (1.0 + db)) <= f.log_likelihood + 1e-6 * f.log_likelihood.abs());
        }
    }

    #[test]
    fn beta_slope_matches_differences() {
        let s = Stats { n: 100.0, s1: 70.0, s2: 90.0 };
        for (a, b) in [(0.0, 1.0), (1.5, 0.8), (4.0, 0.05), (4.0, 1e-6)] {
            let d1 = s.beta_slope(a, b);
            let h = 1e-3 * b;
            let fd1 = (s.log_likelihood(a, b + h) - s.log_likelihood(a, b - h)) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-5 * (1.0 + fd1.abs()), "{d1} vs {fd1}");
        }
    }

    #[test]
    fn heavy_tails_hit_the_beta_floor() {
        // mostly zeros with rare large values: heavier than any Laplace
        let xs: Vec<f64> = (0..1000).map(|i| if i % 50 == 0 { 100.0 } else { 0.01 * ((i % 7) as f64 - 3.0) }).collect();
        let f = fit_ggl(&xs).unwrap();
        let s = Stats::of(&xs);
        assert_eq!(f.beta, s.beta_floor());
        assert!(f.alpha > 0.0);
    }

    #[test]
    fn fit_scaling_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                let g: f64 = rng.sample(StandardNormal);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln() + 0.3 * g
            })
            .collect();
        let c = 3.7;
        let f1 = fit_ggl(&xs).unwrap();
        let f2 = fit_ggl(&xs.iter().map(|x| c * x).collect::<Vec<_>>()).unwrap();
        assert!((f2.alpha * c / f1.alpha - 1.0).abs() < 1e-4, "{f1:?} {f2:?}");
        assert!((f2.beta * c * c / f1.beta - 1.0).abs() < 1e-4, "{f1:?} {f2:?}");
    }

    #[test]
    fn fit_rejects_degenerate() {
        assert!(matches!(fit_ggl(&[2.0; 50]), Err(Error::Degenerate(_))));
        assert!(fit_ggl(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gaussian_fits() {
        assert_eq!(fit_gaussian(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 1e-12));
        assert_eq!(fit_gaussian(&[0.0, 2.0]).unwrap(), (1.0, 1.0));
        assert!(fit_gaussian(&[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Normal::new(3.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let (mu, s) = fit_gaussian(&xs).unwrap();
        assert!((mu - 3.0).abs() < 0.05 && (s - 2.0).abs() < 0.05);
    }

    fn test_image(h: usize, w: usize) -> ComplexImage {
        crate::simulate::phantom(crate::simulate::PhantomKind::SheppLogan, h, w, 0.6)
    }

    #[test]
    fn hyperparameter_estimation() {
        let basis = WaveletBasis::new(WaveletKind::Sym8);
        assert!(estimate_hyperparameters(&ComplexImage::zeros(16, 16), &basis, 2).is_err());
        let img = test_image(64, 64);
        let h = estimate_hyperparameters(&img, &basis, 3).unwrap();
        assert_eq!(h.detail_count(), 9);
        // refit after a clean synthesis/analysis round trip
        let back = idwt2(&dwt2(&img, &basis, 3).unwrap(), &basis).unwrap();
        let h2 = estimate_hyperparameters(&back, &basis, 3).unwrap();
        for j in 1..=3 {
            for o in Orientation::ALL {
                let (a, b) = (h.detail(j, o), h2.detail(j, o));
                for (x, y) in [(a.beta_re, b.beta_re), (a.beta_im, b.beta_im)] {
                    assert!((x - y).abs() <= 0.05 * x, "{j} {o:?}: {x} vs {y}");
                }
                // α near zero is only resolved on the scale √β
                for (x, y, beta) in [(a.alpha_re, b.alpha_re, a.beta_re), (a.alpha_im, b.alpha_im, a.beta_im)] {
                    assert!((x - y).abs() <= 0.05 * x + 1e-6 * beta.sqrt(), "{j} {o:?}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn toml_round_trip() {
        let img = test_image(32, 32);
        let h = estimate_hyperparameters(&img, &WaveletBasis::new(WaveletKind::Haar), 2).unwrap();
        let back = Hyperparameters::from_toml(&h.to_toml()).unwrap();
        assert_eq!(back, h);
        let broken = h.to_toml().replacen("orientation = \"h\"", "orientation = \"q\"", 1);
        assert!(Hyperparameters::from_toml(&broken).is_err());
        let extra = format!("{}\nbogus = 1\n", h.to_toml());
        assert!(Hyperparameters::from_toml(&extra).is_err());
    }

    #[test]
    fn prox_scalar_examples() {
        assert_eq!(prox_scalar(3.0, 1.0, 1.0, 0.0, 1.0), 1.0);
        assert_eq!(prox_scalar(0.5, 1.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(prox_scalar(-0.7, 0.0, 0.0, 0.2, 1.3), -0.7);
        assert_eq!(prox_scalar(2.0, 1.0, 1.0, 2.0, 1.0), 2.0);
    }

    #[test]
    fn prox_complex_examples() {
        let p = params(1.0, 1.0);
        let zero = Complex64::new(0.0, 0.0);
        assert_eq!(prox_complex(Complex64::new(3.0, 0.5), &p, zero, 1.0), Complex64::new(1.0, 0.0));
        let xi = Complex64::new(0.3, -2.0);
        assert_eq!(prox_complex(xi, &p, xi, 0.8), xi);
        assert_eq!(prox_complex(Complex64::new(0.0, 4.0), &params(0.5, 2.0), zero, 1.0).re, 0.0);
    }

    fn random_coeffs(rng: &mut impl Rng, h: usize, w: usize, levels: usize) -> WaveletCoefficients {
        let img = ComplexImage::from_fn(h, w, |_, _| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
        dwt2(&img, &WaveletBasis::new(WaveletKind::Haar), levels).unwrap()
    }

    #[test]
    fn prox_penalty_cases() {
        let h = Hyperparameters::uniform(1, params(0.7, 1.2), gauss(0.0, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = random_coeffs(&mut rng, 8, 8, 1);
        let out = prox_penalty(&z, &h, 1e-12).unwrap();
        assert!(out.distance(&z) < 1e-8);

        let zero = WaveletCoefficients::zeros(4, 4, 1).unwrap();
        assert_eq!(prox_penalty(&zero, &h, 1.0).unwrap(), zero);

        let mut single = zero.clone();
        let xi = Complex64::new(2.5, -1.5);
        single.set(3, 2, xi); // bottom-right block: diagonal, level 1
        let out = prox_penalty(&single, &h, 0.9).unwrap();
        let expect = prox_complex(xi, h.detail(1, Orientation::Diagonal), Complex64::new(0.0, 0.0), 0.9);
        for y in 0..4 {
            for x in 0..4 {
                let v = if (y, x) == (3, 2) { expect } else { Complex64::new(0.0, 0.0) };
                assert_eq!(out.get(y, x), v);
            }
        }
        let h2 = Hyperparameters::uniform(2, params(0.7, 1.2), gauss(0.0, 2.0)).unwrap();
        assert!(prox_penalty(&zero, &h2, 1.0).is_err());
    }

    #[test]
    fn approximation_prox_pulls_toward_mean() {
        let h = Hyperparameters::uniform(1, params(0.0, 1.0), gauss(5.0, 0.5)).unwrap();
        let z = WaveletCoefficients::zeros(2, 2, 1).unwrap();
        let out = prox_penalty(&z, &h, 1.0).unwrap();
        // (0 + γβμ)/(1 + γβ) with β = 4
        assert!((out.get(0, 0) - Complex64::new(4.0, 4.0)).norm() < 1e-14);
    }

    #[test]
    fn penalty_hand_value() {
        let h = Hyperparameters::uniform(1, params(1.0, 1.0), gauss(0.0, 1.0)).unwrap();
        let mut z = WaveletCoefficients::zeros(2, 2, 1).unwrap();
        z.set(0, 1, Complex64::new(1.0, 1.0));
        assert!((penalty(&z, &h).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(penalty(&WaveletCoefficients::zeros(2, 2, 1).unwrap(), &h).unwrap(), 0.0);
    }

    #[test]
    fn convexity_constants() {
        let mut h = Hyperparameters::uniform(2, params(1.0, 3.0), GaussianParams { mu_re: 2.0, mu_im: -1.0, sigma_re: 0.5, sigma_im: 1.0 }).unwrap();
        assert_eq!(h.strong_convexity(), 0.5);
        h.detail_mut(2, Orientation::Vertical).beta_im = 0.1;
        assert_eq!(h.strong_convexity(), 0.1);
        assert!((h.offset(4) - 2.0 * (16.0 + 1.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prox_optimality_inclusion(xi in -20.0..20.0f64, a in 0.0..5.0f64, b in 0.0..5.0f64, mu in -5.0..5.0f64, g in 0.01..5.0f64) {
            let y = prox_scalar(xi, a, b, mu, g);
            if y != mu {
                let res = g * (a * (y - mu).signum() + b * (y - mu)) + (y - xi);
                prop_assert!(res.abs() < 1e-10 * (1.0 + xi.abs()));
            } else {
                prop_assert!((xi - mu).abs() <= g * a + 1e-12);
            }
        }

        #[test]
        fn prox_penalty_nonexpansive(seed in 0u64..1000, gamma in 0.01..3.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = Hyperparameters::uniform(2, params(rng.random_range(0.0..2.0), rng.random_range(0.01..2.0)), gauss(rng.random_range(-1.0..1.0), rng.random_range(0.1..3.0))).unwrap();
            let (z1, z2) = (random_coeffs(&mut rng, 8, 8, 2), random_coeffs(&mut rng, 8, 8, 2));
            let (p1, p2) = (prox_penalty(&z1, &h, gamma).unwrap(), prox_penalty(&z2, &h, gamma).unwrap());
            prop_assert!(p1.distance(&p2) <= z1.distance(&z2) * (1.0 + 1e-12));
        }

        #[test]
        fn penalty_strongly_convex(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut h = Hyperparameters::uniform(2, params(0.5, 1.0), GaussianParams { mu_re: 1.0, mu_im: -0.5, sigma_re: 0.8, sigma_im: 1.5 }).unwrap();
            for j in 1..=2 {
                for o in Orientation::ALL {
                    *h.detail_mut(j, o) = SubbandParams { alpha_re: rng.random_range(0.0..2.0), alpha_im: rng.random_range(0.0..2.0), beta_re: rng.random_range(0.05..2.0), beta_im: rng.random_range(0.05..2.0) };
                }
            }
            let (z1, z2) = (random_coeffs(&mut rng, 8, 8, 2), random_coeffs(&mut rng, 8, 8, 2));
            let mid = z1.lerp(0.5, &z2);
            let lhs = penalty(&mid, &h).unwrap();
            let rhs = 0.5 * penalty(&z1, &h).unwrap() + 0.5 * penalty(&z2, &h).unwrap() - h.strong_convexity() / 8.0 * z1.distance(&z2).powi(2);
            prop_assert!(lhs <= rhs + 1e-9 * rhs.abs());
            prop_assert!(penalty(&z1, &h).unwrap() >= -h.offset(z1.subband_values(Subband::Approximation).len()));
        }
    }
}
