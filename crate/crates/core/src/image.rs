//! Complex image container and the multi-coil data types built on it.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A Y×X complex field stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width} image needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, Complex64::new(0.0, 0.0))
    }

    pub fn filled(height: usize, width: usize, value: Complex64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds an image by evaluating `f(y, x)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_real(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            height,
            width,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: Complex64) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.im).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.map(|z| z * factor)
    }

    pub fn check_same_dims(&self, other: &ComplexImage, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Euclidean distance `‖self − other‖`.
    pub fn distance(&self, other: &ComplexImage) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &ComplexImage) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Real inner product `Re⟨self, other⟩ = Σ Re(conj(self)·other)`.
    pub fn inner_re(&self, other: &ComplexImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    /// Complex inner product `⟨self, other⟩ = Σ self·conj(other)`.
    pub fn inner(&self, other: &ComplexImage) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn add(&self, other: &ComplexImage) -> Self {
        debug_assert_eq!(self.dims(), other.dims());
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexImage) -> Self {
        debug_assert_eq!(self.dims(), other.dims());
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Per-coil reduced-FOV images `d_ℓ`, each of size (Y/R)×X.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCoilData {
    reduction: usize,
    full_height: usize,
    coils: Vec<ComplexImage>,
}

impl MultiCoilData {
    pub fn new(reduction: usize, full_height: usize, coils: Vec<ComplexImage>) -> Result<Self> {
        if reduction == 0 {
            return Err(Error::InvalidParameter("reduction factor must be >= 1".into()));
        }
        if coils.len() < reduction {
            return Err(Error::InvalidParameter(format!(
                "need at least R = {reduction} coils, got {}",
                coils.len()
            )));
        }
        if full_height % reduction != 0 {
            return Err(Error::Dimension(format!(
                "height {full_height} is not divisible by R = {reduction}"
            )));
        }
        let expected = (full_height / reduction, coils[0].width());
        for (l, c) in coils.iter().enumerate() {
            if c.dims() != expected {
                return Err(Error::Dimension(format!(
                    "coil {l} has dims {:?}, expected {:?}",
                    c.dims(),
                    expected
                )));
            }
        }
        Ok(Self {
            reduction,
            full_height,
            coils,
        })
    }

    pub fn reduction(&self) -> usize {
        self.reduction
    }

    pub fn coil_count(&self) -> usize {
        self.coils.len()
    }

    pub fn full_height(&self) -> usize {
        self.full_height
    }

    pub fn reduced_height(&self) -> usize {
        self.full_height / self.reduction
    }

    pub fn width(&self) -> usize {
        self.coils[0].width()
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn coil(&self, l: usize) -> &ComplexImage {
        &self.coils[l]
    }

    pub fn into_coils(self) -> Vec<ComplexImage> {
        self.coils
    }
}

/// Full-FOV coil sensitivity profiles `s_ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMaps {
    maps: Vec<ComplexImage>,
}

impl SensitivityMaps {
    pub fn new(maps: Vec<ComplexImage>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidParameter("at least one sensitivity map is required".into()))?;
        let dims = first.dims();
        for (l, m) in maps.iter().enumerate() {
            if m.dims() != dims {
                return Err(Error::Dimension(format!(
                    "sensitivity map {l} has dims {:?}, expected {:?}",
                    m.dims(),
                    dims
                )));
            }
        }
        Ok(Self { maps })
    }

    pub fn coil_count(&self) -> usize {
        self.maps.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }

    pub fn maps(&self) -> &[ComplexImage] {
        &self.maps
    }

    pub fn map(&self, l: usize) -> &ComplexImage {
        &self.maps[l]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            maps: self.maps.iter().map(|m| m.scale(Complex64::new(c, 0.0))).collect(),
        }
    }

    pub fn into_maps(self) -> Vec<ComplexImage> {
        self.maps
    }
}

/// Between-coil noise covariance Ψ (Hermitian positive definite, row-major L×L).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseCovariance {
    size: usize,
    matrix: Vec<Complex64>,
    sigma_n: f64,
}

impl NoiseCovariance {
    pub fn new(size: usize, matrix: Vec<Complex64>, sigma_n: f64) -> Result<Self> {
        if size == 0 || matrix.len() != size * size {
            return Err(Error::Dimension(format!(
                "covariance of size {size} needs {} entries, got {}",
                size * size,
                matrix.len()
            )));
        }
        let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..size {
            for j in 0..size {
                let a = matrix[i * size + j];
                let b = matrix[j * size + i].conj();
                if (a - b).norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::InvalidParameter(format!(
                        "covariance is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        if crate::linalg::cholesky(&matrix, size).is_none() {
            return Err(Error::InvalidParameter(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(Self {
            size,
            matrix,
            sigma_n,
        })
    }

    /// `σ² I` of size L.
    pub fn scaled_identity(size: usize, sigma_n: f64) -> Result<Self> {
        let mut m = vec![Complex64::new(0.0, 0.0); size * size];
        for i in 0..size {
            m[i * size + i] = Complex64::new(sigma_n * sigma_n, 0.0);
        }
        Self::new(size, m, sigma_n)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[i * self.size + j]
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_row_slice(self.size, self.size, &self.matrix)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.size,
            self.matrix.iter().map(|z| z * c).collect(),
            self.sigma_n * c.sqrt(),
        )
    }
}
