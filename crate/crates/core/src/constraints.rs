//! Artifact-region detection by grey-level morphology and the per-pixel
//! box constraints built from it.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::io::{read_container, write_container, Container, Dtype};
use crate::wavelet::{dwt2, idwt2, WaveletBasis, WaveletCoefficients};

/// Running max/min along one axis with a window of `2r+1` and replicated
/// borders. Separable passes give the square structuring element exactly.
fn filter_1d(src: &[f64], h: usize, w: usize, r: usize, along_x: bool, take_max: bool) -> Vec<f64> {
    let pick = |a: f64, b: f64| if take_max { a.max(b) } else { a.min(b) };
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = src[y * w + x];
            for k in 1..=r {
                let (a, b) = if along_x {
                    (src[y * w + x.saturating_sub(k)], src[y * w + (x + k).min(w - 1)])
                } else {
                    (src[y.saturating_sub(k) * w + x], src[(y + k).min(h - 1) * w + x])
                };
                acc = pick(acc, pick(a, b));
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub fn dilate(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    filter_1d(&filter_1d(src, h, w, r, true, true), h, w, r, false, true)
}

pub fn erode(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    filter_1d(&filter_1d(src, h, w, r, true, false), h, w, r, false, false)
}

/// Erosion then dilation; never above the input.
pub fn opening(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    dilate(&erode(src, h, w, r), h, w, r)
}

/// Dilation then erosion; never below the input.
pub fn closing(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    erode(&dilate(src, h, w, r), h, w, r)
}

/// Dilation minus erosion with a `(2r+1)²` square.
pub fn morph_gradient(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let d = dilate(src, h, w, r);
    let e = erode(src, h, w, r);
    d.iter().zip(&e).map(|(a, b)| a - b).collect()
}

/// Pixels whose morphological gradient of `|image|` is positive and at or
/// above the `quantile` of the positive gradient values (lower empirical
/// quantile, so `quantile = 0` selects every positive pixel).
pub fn detect_artifacts(image: &ComplexImage, se_radius: usize, quantile: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&quantile) {
        return Err(Error::InvalidParameter(format!("quantile {quantile} is outside [0, 1)")));
    }
    if se_radius == 0 {
        return Err(Error::InvalidParameter("structuring element radius must be >= 1".into()));
    }
    let (h, w) = image.dims();
    let grad = morph_gradient(&image.magnitude(), h, w, se_radius);
    let mut positive: Vec<f64> = grad.iter().copied().filter(|&g| g > 0.0).collect();
    if positive.is_empty() {
        return Ok(vec![false; h * w]);
    }
    positive.sort_by(f64::total_cmp);
    let idx = (quantile * (positive.len() - 1) as f64).floor() as usize;
    let threshold = positive[idx];
    Ok(grad.iter().map(|&g| g > 0.0 && g >= threshold).collect())
}

/// Per-pixel intervals on the real and imaginary parts. Unconstrained
/// pixels carry (−∞, +∞) in both channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    height: usize,
    width: usize,
    re_min: Vec<f64>,
    re_max: Vec<f64>,
    im_min: Vec<f64>,
    im_max: Vec<f64>,
    mask: Vec<bool>,
}

impl ConstraintSet {
    pub fn new(
        height: usize,
        width: usize,
        re: (Vec<f64>, Vec<f64>),
        im: (Vec<f64>, Vec<f64>),
        mask: Vec<bool>,
    ) -> Result<Self> {
        let n = height * width;
        if [re.0.len(), re.1.len(), im.0.len(), im.1.len(), mask.len()].iter().any(|&l| l != n) {
            return Err(Error::Dimension(format!("constraint planes must hold {n} values")));
        }
        for i in 0..n {
            let ok = |lo: f64, hi: f64| !lo.is_nan() && !hi.is_nan() && lo <= hi;
            if !ok(re.0[i], re.1[i]) || !ok(im.0[i], im.1[i]) {
                return Err(Error::EmptyConstraint {
                    y: i / width,
                    x: i % width,
                });
            }
            let free = re.0[i] == f64::NEG_INFINITY
                && re.1[i] == f64::INFINITY
                && im.0[i] == f64::NEG_INFINITY
                && im.1[i] == f64::INFINITY;
            if !mask[i] && !free {
                return Err(Error::InvalidParameter(format!(
                    "pixel ({}, {}) is bounded but not marked active",
                    i / width,
                    i % width
                )));
            }
        }
        Ok(Self {
            height,
            width,
            re_min: re.0,
            re_max: re.1,
            im_min: im.0,
            im_max: im.1,
            mask,
        })
    }

    pub fn unbounded(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            re_min: vec![f64::NEG_INFINITY; n],
            re_max: vec![f64::INFINITY; n],
            im_min: vec![f64::NEG_INFINITY; n],
            im_max: vec![f64::INFINITY; n],
            mask: vec![false; n],
        }
    }

    /// Singleton set holding exactly `image`.
    pub fn fixed(image: &ComplexImage) -> Self {
        let (re, im) = (image.real_part(), image.imag_part());
        Self {
            height: image.height(),
            width: image.width(),
            re_min: re.clone(),
            re_max: re,
            im_min: im.clone(),
            im_max: im,
            mask: vec![true; image.len()],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// (lower, upper) for the real channel at linear index `i`.
    pub fn re_bounds(&self, i: usize) -> (f64, f64) {
        (self.re_min[i], self.re_max[i])
    }

    pub fn im_bounds(&self, i: usize) -> (f64, f64) {
        (self.im_min[i], self.im_max[i])
    }

    fn check(&self, image: &ComplexImage) -> Result<()> {
        if image.dims() != self.dims() {
            return Err(Error::Dimension(format!(
                "image is {}x{}, constraints {}x{}",
                image.height(),
                image.width(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    /// Largest distance of any channel to its interval.
    pub fn max_violation(&self, image: &ComplexImage) -> Result<f64> {
        self.check(image)?;
        let mut worst = 0.0f64;
        for (i, z) in image.data().iter().enumerate() {
            let v = (self.re_min[i] - z.re)
                .max(z.re - self.re_max[i])
                .max(self.im_min[i] - z.im)
                .max(z.im - self.im_max[i]);
            worst = worst.max(v);
        }
        Ok(worst)
    }

    /// P_C: channelwise clamp.
    pub fn project(&self, image: &ComplexImage) -> Result<ComplexImage> {
        self.check(image)?;
        let data = image
            .data()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                if !self.mask[i] {
                    return *z;
                }
                Complex64::new(
                    z.re.clamp(self.re_min[i], self.re_max[i]),
                    z.im.clamp(self.im_min[i], self.im_max[i]),
                )
            })
            .collect();
        ComplexImage::new(self.height, self.width, data)
    }

    /// P_C* = T ∘ P_C ∘ T*, the projection onto the coefficient-domain set
    /// (valid because the transform is orthonormal).
    pub fn project_coeffs(&self, zeta: &WaveletCoefficients, basis: &WaveletBasis) -> Result<WaveletCoefficients> {
        if self.active_count() == 0 {
            return Ok(zeta.clone());
        }
        let rho = idwt2(zeta, basis)?;
        dwt2(&self.project(&rho)?, basis, zeta.levels())
    }

    /// Four bound planes (stored as real parts) and a 0/1 mask plane in
    /// double precision; infinite bounds become ±f64::MAX, flagged in the header.
    pub fn write(&self, header: &Path) -> Result<()> {
        let enc = |v: &[f64]| {
            let data = v
                .iter()
                .map(|&b| {
                    let b = if b.is_infinite() { f64::MAX.copysign(b) } else { b };
                    Complex64::new(b, 0.0)
                })
                .collect();
            ComplexImage::new(self.height, self.width, data)
        };
        let mask = ComplexImage::new(
            self.height,
            self.width,
            self.mask.iter().map(|&m| Complex64::new(if m { 1.0 } else { 0.0 }, 0.0)).collect(),
        )?;
        let c = Container {
            planes: vec![enc(&self.re_min)?, enc(&self.re_max)?, enc(&self.im_min)?, enc(&self.im_max)?, mask],
            meta: BTreeMap::new(),
        }
        .with_meta("kind", "constraints")
        .with_meta("infinite_bound", "max-finite");
        write_container(header, &c, Dtype::Complex128)
    }

    pub fn read(header: &Path) -> Result<Self> {
        let c = read_container(header)?;
        if c.planes.len() != 5 {
            return Err(Error::Format {
                path: header.to_path_buf(),
                msg: format!("constraint file needs 5 planes, found {}", c.planes.len()),
            });
        }
        let infinite_flag = c.meta.get("infinite_bound").map(String::as_str) == Some("max-finite");
        let dec = |p: &ComplexImage| -> Vec<f64> {
            p.real_part()
                .into_iter()
                .map(|b| if infinite_flag && b.abs() == f64::MAX { f64::INFINITY.copysign(b) } else { b })
                .collect()
        };
        let (h, w) = c.planes[0].dims();
        Self::new(
            h,
            w,
            (dec(&c.planes[0]), dec(&c.planes[1])),
            (dec(&c.planes[2]), dec(&c.planes[3])),
            c.planes[4].real_part().iter().map(|&m| m != 0.0).collect(),
        )
    }
}

/// On masked pixels, per channel: lower bound = opening, upper bound =
/// closing of that channel of `sense_image`. Elsewhere unconstrained.
pub fn build_bounds(sense_image: &ComplexImage, mask: &[bool], se_radius: usize) -> Result<ConstraintSet> {
    let (h, w) = sense_image.dims();
    if mask.len() != h * w {
        return Err(Error::Dimension(format!("mask has {} entries for a {h}x{w} image", mask.len())));
    }
    let mut set = ConstraintSet::unbounded(h, w);
    if !mask.iter().any(|&m| m) {
        return Ok(set);
    }
    let (re, im) = (sense_image.real_part(), sense_image.imag_part());
    let (re_lo, re_hi) = (opening(&re, h, w, se_radius), closing(&re, h, w, se_radius));
    let (im_lo, im_hi) = (opening(&im, h, w, se_radius), closing(&im, h, w, se_radius));
    for i in 0..h * w {
        if mask[i] {
            set.re_min[i] = re_lo[i];
            set.re_max[i] = re_hi[i];
            set.im_min[i] = im_lo[i];
            set.im_max[i] = im_hi[i];
            set.mask[i] = true;
        }
    }
    Ok(set)
}
