//! Image quality and convergence diagnostics.

use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::solvers::ConvergenceTrace;
use crate::wavelet::{Orientation, Subband, WaveletCoefficients};

/// 20·log₁₀(‖ref‖/‖ref − est‖); `f64::INFINITY` when the two coincide.
pub fn snr_db(reference: &ComplexImage, estimate: &ComplexImage) -> Result<f64> {
    reference.check_same_dims(estimate, "SNR")?;
    let signal = reference.norm();
    if signal == 0.0 {
        return Err(Error::InvalidParameter("SNR needs a nonzero reference".into()));
    }
    let err = reference.distance(estimate);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (signal / err).log10())
}

/// Pearson correlation, `None` if either channel has zero variance or
/// fewer than two samples are given.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Real/imaginary correlation of a coefficient set, per subband.
#[derive(Clone, Debug, PartialEq)]
pub struct ReImCorrelation {
    pub approximation: Option<f64>,
    /// Orientations pooled, index j−1 for level j.
    pub pooled: Vec<Option<f64>>,
    /// Per level, in `Orientation::ALL` order.
    pub detail: Vec<[Option<f64>; 3]>,
}

fn channels(zeta: &WaveletCoefficients, bands: &[Subband]) -> (Vec<f64>, Vec<f64>) {
    let mut re = Vec::new();
    let mut im = Vec::new();
    for &sb in bands {
        for z in zeta.subband_values(sb) {
            re.push(z.re);
            im.push(z.im);
        }
    }
    (re, im)
}

pub fn reim_correlation(zeta: &WaveletCoefficients) -> ReImCorrelation {
    let corr = |bands: &[Subband]| {
        let (re, im) = channels(zeta, bands);
        pearson(&re, &im)
    };
    let mut pooled = Vec::new();
    let mut detail = Vec::new();
    for level in 1..=zeta.levels() {
        let bands: Vec<Subband> = Orientation::ALL
            .iter()
            .map(|&orientation| Subband::Detail { level, orientation })
            .collect();
        pooled.push(corr(&bands));
        detail.push([corr(&bands[0..1]), corr(&bands[1..2]), corr(&bands[2..3])]);
    }
    ReImCorrelation {
        approximation: corr(&[Subband::Approximation]),
        pooled,
        detail,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateCheck {
    pub pass: bool,
    /// Smallest bound/distance ratio over n ≥ 2; infinite when every
    /// distance vanishes.
    pub margin: f64,
    /// Contraction factor 1 − λγϑ₁/(1 + γϑ₁).
    pub rate: f64,
}

/// Checks ‖ζ⁽ⁿ⁾ − ζ̂‖ ≤ q^{n−1}‖ζ⁽¹⁾ − ζ̂‖(1 + 10⁻⁶) with
/// q = 1 − λγϑ₁/(1 + γϑ₁) on a list of distances indexed from n = 1.
pub fn rate_bound_distances(dist: &[f64], gamma: f64, lambda: f64, modulus: f64) -> Result<RateCheck> {
    if dist.is_empty() {
        return Err(Error::InvalidParameter("rate check needs at least one distance".into()));
    }
    if !(gamma > 0.0 && lambda > 0.0 && modulus >= 0.0) {
        return Err(Error::InvalidParameter("rate check needs gamma, lambda > 0 and modulus >= 0".into()));
    }
    let gt = gamma * modulus;
    let rate = 1.0 - lambda * gt / (1.0 + gt);
    let first = dist[0];
    let mut margin = f64::INFINITY;
    let mut pass = true;
    for (k, &d) in dist.iter().enumerate().skip(1) {
        let bound = rate.powi(k as i32) * first * (1.0 + 1e-6);
        if d > bound {
            pass = false;
        }
        if d > 0.0 {
            margin = margin.min(bound / d);
        }
    }
    Ok(RateCheck { pass, margin, rate })
}

/// [`rate_bound_distances`] on the distances recorded in a trace.
pub fn rate_bound(trace: &ConvergenceTrace, gamma: f64, lambda: f64, modulus: f64) -> Result<RateCheck> {
    let dist = trace
        .records
        .iter()
        .map(|r| r.dist_to_ref)
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::InvalidParameter("trace has no distances to a reference iterate".into()))?;
    rate_bound_distances(&dist, gamma, lambda, modulus)
}
