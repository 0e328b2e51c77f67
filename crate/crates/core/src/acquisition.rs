//! SENSE forward model `d(r) = S(r)ρ(r) + n(r)` over the reduced grid.
//!
//! A reduced position `r = (y, x)` with `y < Y/R` stacks the `R` full-FOV
//! pixels `(y + j·Δy, x)`, `Δy = Y/R`, that fold onto it.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, MultiCoilData, NoiseCovariance, SensitivityMaps};
use crate::linalg;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Ψ(ℓ₁,ℓ₂) = σ²·Σ s_ℓ₁ s*_ℓ₂ / sqrt(Σ|s_ℓ₁|² · Σ|s_ℓ₂|²), sums over the full FOV.
pub fn build_covariance(maps: &SensitivityMaps, sigma_n: f64) -> Result<NoiseCovariance> {
    if !(sigma_n > 0.0) || !sigma_n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise deviation must be positive, got {sigma_n}"
        )));
    }
    let l = maps.coil_count();
    let energy: Vec<f64> = maps.maps().iter().map(ComplexImage::norm_sqr).collect();
    if let Some(idx) = energy.iter().position(|&e| e == 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sensitivity map {idx} is identically zero"
        )));
    }
    let s2 = sigma_n * sigma_n;
    let mut m = vec![ZERO; l * l];
    for a in 0..l {
        m[a * l + a] = Complex64::new(s2, 0.0);
        for b in a + 1..l {
            let cross: Complex64 = maps.map(a).inner(maps.map(b));
            // sqrt of the reciprocal keeps exact cases such as 1/√2 correctly rounded
            let v = cross * (s2 * (energy[a] * energy[b]).recip().sqrt());
            m[a * l + b] = v;
            m[b * l + a] = v.conj();
        }
    }
    NoiseCovariance::new(l, m, sigma_n)
}

/// Precomputed per-position operators of the SENSE model.
#[derive(Clone, Debug)]
pub struct AcquisitionModel {
    maps: SensitivityMaps,
    noise: NoiseCovariance,
    reduction: usize,
    height: usize,
    width: usize,
    coils: usize,
    psi_inv: Vec<Complex64>,
    /// S(r), L×R per position.
    sens: Vec<Complex64>,
    /// S(r)ᴴΨ⁻¹, R×L per position.
    adjoint: Vec<Complex64>,
    /// S(r)ᴴΨ⁻¹S(r), R×R per position.
    gram: Vec<Complex64>,
}

impl AcquisitionModel {
    pub fn new(maps: SensitivityMaps, noise: NoiseCovariance, reduction: usize) -> Result<Self> {
        let (height, width) = maps.dims();
        let coils = maps.coil_count();
        if reduction == 0 {
            return Err(Error::InvalidParameter("reduction factor must be >= 1".into()));
        }
        if coils < reduction {
            return Err(Error::InvalidParameter(format!(
                "L = {coils} coils cannot resolve R = {reduction}"
            )));
        }
        if height % reduction != 0 {
            return Err(Error::Dimension(format!(
                "height {height} is not divisible by R = {reduction}"
            )));
        }
        if noise.size() != coils {
            return Err(Error::Dimension(format!(
                "covariance is {0}x{0} but there are {coils} coils",
                noise.size()
            )));
        }
        let psi_inv = linalg::hpd_inverse(noise.matrix(), coils)
            .ok_or_else(|| Error::Numerical("noise covariance is not invertible".into()))?;

        let r = reduction;
        let dy = height / r;
        let positions = dy * width;
        let mut sens = vec![ZERO; positions * coils * r];
        let mut adjoint = vec![ZERO; positions * r * coils];
        let mut gram = vec![ZERO; positions * r * r];
        for p in 0..positions {
            let (y, x) = (p / width, p % width);
            let s = &mut sens[p * coils * r..(p + 1) * coils * r];
            for l in 0..coils {
                for j in 0..r {
                    s[l * r + j] = maps.map(l).get(y + j * dy, x);
                }
            }
            let a = &mut adjoint[p * r * coils..(p + 1) * r * coils];
            for j in 0..r {
                for l in 0..coils {
                    let mut acc = ZERO;
                    for k in 0..coils {
                        acc += s[k * r + j].conj() * psi_inv[k * coils + l];
                    }
                    a[j * coils + l] = acc;
                }
            }
            let g = &mut gram[p * r * r..(p + 1) * r * r];
            for i in 0..r {
                for j in i..r {
                    let mut acc = ZERO;
                    for l in 0..coils {
                        acc += a[i * coils + l] * s[l * r + j];
                    }
                    if i == j {
                        g[i * r + i] = Complex64::new(acc.re, 0.0);
                    } else {
                        g[i * r + j] = acc;
                        g[j * r + i] = acc.conj();
                    }
                }
            }
        }
        Ok(Self {
            maps,
            noise,
            reduction,
            height,
            width,
            coils,
            psi_inv,
            sens,
            adjoint,
            gram,
        })
    }

    pub fn maps(&self) -> &SensitivityMaps {
        &self.maps
    }

    pub fn noise(&self) -> &NoiseCovariance {
        &self.noise
    }

    pub fn reduction(&self) -> usize {
        self.reduction
    }

    pub fn coil_count(&self) -> usize {
        self.coils
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn reduced_height(&self) -> usize {
        self.height / self.reduction
    }

    pub fn positions(&self) -> usize {
        self.reduced_height() * self.width
    }

    pub fn psi_inv(&self) -> &[Complex64] {
        &self.psi_inv
    }

    /// S(r) for reduced position index `p = y·X + x`, row-major L×R.
    pub fn sensitivity_matrix(&self, p: usize) -> &[Complex64] {
        let n = self.coils * self.reduction;
        &self.sens[p * n..(p + 1) * n]
    }

    /// S(r)ᴴΨ⁻¹, row-major R×L.
    pub fn weighted_adjoint(&self, p: usize) -> &[Complex64] {
        let n = self.coils * self.reduction;
        &self.adjoint[p * n..(p + 1) * n]
    }

    /// S(r)ᴴΨ⁻¹S(r), row-major R×R.
    pub fn gram(&self, p: usize) -> &[Complex64] {
        let n = self.reduction * self.reduction;
        &self.gram[p * n..(p + 1) * n]
    }

    /// Full-FOV linear index of stacked entry `j` at reduced position `p`.
    #[inline]
    pub fn full_index(&self, p: usize, j: usize) -> usize {
        let (y, x) = (p / self.width, p % self.width);
        (y + j * self.reduced_height()) * self.width + x
    }

    pub fn check_image(&self, rho: &ComplexImage) -> Result<()> {
        if rho.dims() != (self.height, self.width) {
            return Err(Error::Dimension(format!(
                "image is {}x{}, model FOV is {}x{}",
                rho.height(),
                rho.width(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    pub fn check_data(&self, d: &MultiCoilData) -> Result<()> {
        if d.reduction() != self.reduction
            || d.coil_count() != self.coils
            || d.full_height() != self.height
            || d.width() != self.width
        {
            return Err(Error::Dimension(format!(
                "coil data (L={}, R={}, {}x{}) does not match model (L={}, R={}, {}x{})",
                d.coil_count(),
                d.reduction(),
                d.full_height(),
                d.width(),
                self.coils,
                self.reduction,
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    /// ρ(r) stacked as in the aliasing model.
    #[inline]
    pub fn gather(&self, rho: &[Complex64], p: usize, out: &mut [Complex64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.reduction) {
            *o = rho[self.full_index(p, j)];
        }
    }

    /// d(r) across coils.
    #[inline]
    pub fn gather_data(&self, d: &MultiCoilData, p: usize, out: &mut [Complex64]) {
        for (l, o) in out.iter_mut().enumerate().take(self.coils) {
            *o = d.coil(l).data()[p];
        }
    }

    /// Noiseless acquisition `d(r) = S(r)ρ(r)`.
    pub fn forward(&self, rho: &ComplexImage) -> Result<MultiCoilData> {
        self.check_image(rho)?;
        let (r, l) = (self.reduction, self.coils);
        let dy = self.reduced_height();
        let mut coils = vec![vec![ZERO; dy * self.width]; l];
        let mut stacked = vec![ZERO; r];
        let mut out = vec![ZERO; l];
        for p in 0..self.positions() {
            self.gather(rho.data(), p, &mut stacked);
            linalg::matvec(self.sensitivity_matrix(p), l, r, &stacked, &mut out);
            for (c, v) in coils.iter_mut().zip(&out) {
                c[p] = *v;
            }
        }
        let coils = coils
            .into_iter()
            .map(|c| ComplexImage::new(dy, self.width, c))
            .collect::<Result<Vec<_>>>()?;
        MultiCoilData::new(r, self.height, coils)
    }

    /// θ = max_r λ_max(S(r)ᴴΨ⁻¹S(r)).
    pub fn spectral_bound(&self) -> Result<f64> {
        let r = self.reduction;
        let theta = (0..self.positions())
            .map(|p| linalg::hermitian_lambda_max(self.gram(p), r))
            .fold(0.0, f64::max);
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Numerical(format!(
                "spectral bound is {theta}; sensitivities are all zero"
            )));
        }
        Ok(theta)
    }

    /// S(r)ᴴΨ⁻¹d(r) for every position, flattened positions × R.
    pub fn normal_rhs(&self, d: &MultiCoilData) -> Result<Vec<Complex64>> {
        self.check_data(d)?;
        let (r, l) = (self.reduction, self.coils);
        let mut rhs = vec![ZERO; self.positions() * r];
        let mut dv = vec![ZERO; l];
        for p in 0..self.positions() {
            self.gather_data(d, p, &mut dv);
            linalg::matvec(self.weighted_adjoint(p), r, l, &dv, &mut rhs[p * r..(p + 1) * r]);
        }
        Ok(rhs)
    }

    /// Scatters per-position stacked vectors back to a full-FOV image.
    pub fn scatter(&self, stacked: &[Complex64]) -> ComplexImage {
        let r = self.reduction;
        let mut out = vec![ZERO; self.height * self.width];
        for p in 0..self.positions() {
            for j in 0..r {
                out[self.full_index(p, j)] = stacked[p * r + j];
            }
        }
        ComplexImage::new(self.height, self.width, out).expect("model dims are valid")
    }
}

/// The data-fidelity term 𝒥_L for a fixed acquisition, with S(r)ᴴΨ⁻¹d(r)
/// cached so repeated gradient evaluations are cheap.
pub struct DataFidelity<'a> {
    model: &'a AcquisitionModel,
    data: &'a MultiCoilData,
    rhs: Vec<Complex64>,
}

impl<'a> DataFidelity<'a> {
    pub fn new(model: &'a AcquisitionModel, data: &'a MultiCoilData) -> Result<Self> {
        let rhs = model.normal_rhs(data)?;
        Ok(Self { model, data, rhs })
    }

    pub fn model(&self) -> &AcquisitionModel {
        self.model
    }

    pub fn data(&self) -> &MultiCoilData {
        self.data
    }

    /// 𝒥_L(ρ) = Σ_r ‖d(r) − S(r)ρ(r)‖²_{Ψ⁻¹}.
    pub fn value(&self, rho: &ComplexImage) -> Result<f64> {
        let m = self.model;
        m.check_image(rho)?;
        let (r, l) = (m.reduction, m.coils);
        let mut stacked = vec![ZERO; r];
        let mut resid = vec![ZERO; l];
        let mut w = vec![ZERO; l];
        let mut total = 0.0;
        for p in 0..m.positions() {
            m.gather(rho.data(), p, &mut stacked);
            linalg::matvec(m.sensitivity_matrix(p), l, r, &stacked, &mut resid);
            for (k, v) in resid.iter_mut().enumerate() {
                *v = self.data.coil(k).data()[p] - *v;
            }
            linalg::matvec(&m.psi_inv, l, l, &resid, &mut w);
            let q: f64 = resid.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
            total += q;
        }
        Ok(total)
    }

    /// u(r) = 2·S(r)ᴴΨ⁻¹(S(r)ρ(r) − d(r)) = 2(G(r)ρ(r) − S(r)ᴴΨ⁻¹d(r)).
    pub fn gradient(&self, rho: &ComplexImage) -> Result<ComplexImage> {
        let m = self.model;
        m.check_image(rho)?;
        let r = m.reduction;
        let mut out = vec![ZERO; m.height * m.width];
        let mut stacked = vec![ZERO; r];
        let mut g = vec![ZERO; r];
        for p in 0..m.positions() {
            m.gather(rho.data(), p, &mut stacked);
            linalg::matvec(m.gram(p), r, r, &stacked, &mut g);
            for j in 0..r {
                out[m.full_index(p, j)] = (g[j] - self.rhs[p * r + j]) * 2.0;
            }
        }
        ComplexImage::new(m.height, m.width, out)
    }
}

/// Gradient of 𝒥_L at ρ.
pub fn gradient_jl(rho: &ComplexImage, d: &MultiCoilData, model: &AcquisitionModel) -> Result<ComplexImage> {
    DataFidelity::new(model, d)?.gradient(rho)
}

/// 𝒥_L at ρ.
pub fn data_misfit(rho: &ComplexImage, d: &MultiCoilData, model: &AcquisitionModel) -> Result<f64> {
    DataFidelity::new(model, d)?.value(rho)
}
