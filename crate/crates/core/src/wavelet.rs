//! Separable orthonormal 2D dyadic wavelet transform with periodic boundaries.
//!
//! Coefficients are kept in the usual Mallat packing inside a Y×X array: the
//! approximation block of the coarsest level sits in the top-left corner and
//! the detail blocks of level `j` (1 = finest) occupy the three quadrants of
//! the `(Y/2^(j-1))×(X/2^(j-1))` square next to it.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::ComplexImage;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

// 8-tap filters (4 vanishing moments), from spectral factorization.
const DB8_LOWPASS: [f64; 8] = [
    -0.010597401785069032,
    0.032883011666885200,
    0.030841381835560764,
    -0.18703481171909308,
    -0.027983769416859854,
    0.63088076792985891,
    0.71484657055291565,
    0.23037781330889650,
];

const SYM8_LOWPASS: [f64; 8] = [
    -0.075765714789502213,
    -0.029635527646002492,
    0.49761866763277499,
    0.80373875180513208,
    0.29785779560530605,
    -0.099219543576633533,
    -0.012603967262031304,
    0.032223100604051468,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Haar,
    Db8,
    Sym8,
}

impl WaveletKind {
    pub const ALL: [WaveletKind; 3] = [WaveletKind::Haar, WaveletKind::Db8, WaveletKind::Sym8];

    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Haar => "haar",
            WaveletKind::Db8 => "db8",
            WaveletKind::Sym8 => "sym8",
        }
    }
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(WaveletKind::Haar),
            "db8" => Ok(WaveletKind::Db8),
            "sym8" => Ok(WaveletKind::Sym8),
            _ => Err(Error::InvalidParameter(format!(
                "unknown wavelet {s:?} (expected haar, db8 or sym8)"
            ))),
        }
    }
}

/// An orthonormal two-channel filter bank.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletBasis {
    kind: WaveletKind,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl WaveletBasis {
    pub fn new(kind: WaveletKind) -> Self {
        let lowpass = match kind {
            WaveletKind::Haar => vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            WaveletKind::Db8 => DB8_LOWPASS.to_vec(),
            WaveletKind::Sym8 => SYM8_LOWPASS.to_vec(),
        };
        Self::from_lowpass(kind, lowpass).expect("embedded filter taps are orthonormal")
    }

    /// Builds the bank from low-pass taps; the high-pass follows from the
    /// quadrature-mirror relation `g[k] = (-1)^k h[N-1-k]`.
    pub fn from_lowpass(kind: WaveletKind, lowpass: Vec<f64>) -> Result<Self> {
        let n = lowpass.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "filter length must be even and >= 2, got {n}"
            )));
        }
        let highpass = (0..n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s * lowpass[n - 1 - k]
            })
            .collect();
        let basis = Self {
            kind,
            lowpass,
            highpass,
        };
        let err = basis.orthonormality_error();
        if err > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "{kind} taps are not orthonormal (error {err:e})"
            )));
        }
        Ok(basis)
    }

    /// Largest deviation of `Σ h[k]h[k+2m]` from `δ_m`.
    pub fn orthonormality_error(&self) -> f64 {
        let h = &self.lowpass;
        let n = h.len();
        let mut worst: f64 = 0.0;
        for m in 0..n / 2 {
            let s: f64 = (0..n - 2 * m).map(|k| h[k] * h[k + 2 * m]).sum();
            let target = if m == 0 { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
        worst
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    /// Periodic analysis of `input` into `lo` and `hi` halves.
    fn analyze(&self, input: &[Complex64], lo: &mut [Complex64], hi: &mut [Complex64]) {
        let n = input.len();
        let taps = self.lowpass.len();
        for i in 0..n / 2 {
            let mut a = Complex64::new(0.0, 0.0);
            let mut d = Complex64::new(0.0, 0.0);
            for k in 0..taps {
                let x = input[(2 * i + k) % n];
                a += x * self.lowpass[k];
                d += x * self.highpass[k];
            }
            lo[i] = a;
            hi[i] = d;
        }
    }

    /// Adjoint of [`analyze`](Self::analyze); `out` is overwritten.
    fn synthesize(&self, lo: &[Complex64], hi: &[Complex64], out: &mut [Complex64]) {
        let n = out.len();
        let taps = self.lowpass.len();
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for i in 0..n / 2 {
            for k in 0..taps {
                out[(2 * i + k) % n] += lo[i] * self.lowpass[k] + hi[i] * self.highpass[k];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    /// High-pass along y, low-pass along x (horizontal edges).
    Horizontal,
    /// Low-pass along y, high-pass along x (vertical edges).
    Vertical,
    Diagonal,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [
        Orientation::Horizontal,
        Orientation::Vertical,
        Orientation::Diagonal,
    ];

    pub fn short(self) -> &'static str {
        match self {
            Orientation::Horizontal => "h",
            Orientation::Vertical => "v",
            Orientation::Diagonal => "d",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subband {
    Approximation,
    Detail { level: usize, orientation: Orientation },
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subband::Approximation => f.write_str("approx"),
            Subband::Detail { level, orientation } => write!(f, "{}{}", orientation.short(), level),
        }
    }
}

/// A rectangular block of the packed coefficient array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub subband: Subband,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Coefficient field ζ in Mallat packing.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoefficients {
    height: usize,
    width: usize,
    levels: usize,
    data: Vec<Complex64>,
}

fn check_levels(height: usize, width: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidParameter("j_max must be >= 1".into()));
    }
    if levels >= usize::BITS as usize {
        return Err(Error::InvalidParameter(format!("j_max = {levels} is too large")));
    }
    let m = 1usize << levels;
    if height % m != 0 || width % m != 0 {
        return Err(Error::Dimension(format!(
            "{height}x{width} is not divisible by 2^{levels} = {m}"
        )));
    }
    Ok(())
}

impl WaveletCoefficients {
    pub fn from_raw(height: usize, width: usize, levels: usize, data: Vec<Complex64>) -> Result<Self> {
        check_levels(height, width, levels)?;
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "coefficient field needs {} entries, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            levels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, levels: usize) -> Result<Self> {
        Self::from_raw(height, width, levels, vec![Complex64::new(0.0, 0.0); height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: Complex64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_layout(&self, other: &WaveletCoefficients) -> bool {
        self.height == other.height && self.width == other.width && self.levels == other.levels
    }

    pub fn check_layout(&self, other: &WaveletCoefficients) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Dimension(format!(
                "coefficient layouts differ: {}x{} j_max={} vs {}x{} j_max={}",
                self.height, self.width, self.levels, other.height, other.width, other.levels
            )));
        }
        Ok(())
    }

    /// All subband blocks: approximation first, then details from the
    /// coarsest level down to level 1.
    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::with_capacity(1 + 3 * self.levels);
        let (ah, aw) = (self.height >> self.levels, self.width >> self.levels);
        out.push(Block {
            subband: Subband::Approximation,
            rows: 0..ah,
            cols: 0..aw,
        });
        for level in (1..=self.levels).rev() {
            let (h, w) = (self.height >> level, self.width >> level);
            for orientation in Orientation::ALL {
                let (rows, cols) = match orientation {
                    Orientation::Horizontal => (h..2 * h, 0..w),
                    Orientation::Vertical => (0..h, w..2 * w),
                    Orientation::Diagonal => (h..2 * h, w..2 * w),
                };
                out.push(Block {
                    subband: Subband::Detail { level, orientation },
                    rows,
                    cols,
                });
            }
        }
        out
    }

    pub fn block(&self, subband: Subband) -> Option<Block> {
        self.blocks().into_iter().find(|b| b.subband == subband)
    }

    /// Coefficients of one block, row-major.
    pub fn block_values(&self, block: &Block) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(block.len());
        for y in block.rows.clone() {
            v.extend_from_slice(&self.data[y * self.width + block.cols.start..y * self.width + block.cols.end]);
        }
        v
    }

    pub fn subband_values(&self, subband: Subband) -> Vec<Complex64> {
        self.block(subband)
            .map(|b| self.block_values(&b))
            .unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn distance(&self, other: &WaveletCoefficients) -> f64 {
        debug_assert!(self.same_layout(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &WaveletCoefficients) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            data: self.data.iter().map(|&z| f(z)).collect(),
            ..*self
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &WaveletCoefficients) -> Self {
        debug_assert!(self.same_layout(other));
        Self {
            data: self.data.iter().zip(&other.data).map(|(x, y)| x + y * a).collect(),
            ..*self
        }
    }

    /// `(1-t)·self + t·other`.
    pub fn lerp(&self, t: f64, other: &WaveletCoefficients) -> Self {
        debug_assert!(self.same_layout(other));
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| x + (y - x) * t)
                .collect(),
            ..*self
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }
}

/// Forward transform T: ρ ↦ (⟨ρ, e_k⟩)_k.
pub fn dwt2(image: &ComplexImage, basis: &WaveletBasis, levels: usize) -> Result<WaveletCoefficients> {
    let (height, width) = image.dims();
    check_levels(height, width, levels)?;
    let mut buf = image.data().to_vec();
    let mut line = vec![Complex64::new(0.0, 0.0); height.max(width)];
    let mut lo = vec![Complex64::new(0.0, 0.0); height.max(width) / 2];
    let mut hi = lo.clone();
    let (mut h, mut w) = (height, width);
    for _ in 0..levels {
        for y in 0..h {
            let row = &mut buf[y * width..y * width + w];
            line[..w].copy_from_slice(row);
            basis.analyze(&line[..w], &mut lo[..w / 2], &mut hi[..w / 2]);
            row[..w / 2].copy_from_slice(&lo[..w / 2]);
            row[w / 2..].copy_from_slice(&hi[..w / 2]);
        }
        for x in 0..w {
            for y in 0..h {
                line[y] = buf[y * width + x];
            }
            basis.analyze(&line[..h], &mut lo[..h / 2], &mut hi[..h / 2]);
            for y in 0..h / 2 {
                buf[y * width + x] = lo[y];
                buf[(y + h / 2) * width + x] = hi[y];
            }
        }
        h /= 2;
        w /= 2;
    }
    WaveletCoefficients::from_raw(height, width, levels, buf)
}

/// Adjoint T*, which is the inverse for an orthonormal basis.
pub fn idwt2(coeffs: &WaveletCoefficients, basis: &WaveletBasis) -> Result<ComplexImage> {
    let (height, width, levels) = (coeffs.height, coeffs.width, coeffs.levels);
    check_levels(height, width, levels)?;
    let mut buf = coeffs.data.clone();
    let mut line = vec![Complex64::new(0.0, 0.0); height.max(width)];
    let mut lo = vec![Complex64::new(0.0, 0.0); height.max(width) / 2];
    let mut hi = lo.clone();
    for level in (1..=levels).rev() {
        let (h, w) = (height >> (level - 1), width >> (level - 1));
        for x in 0..w {
            for y in 0..h / 2 {
                lo[y] = buf[y * width + x];
                hi[y] = buf[(y + h / 2) * width + x];
            }
            basis.synthesize(&lo[..h / 2], &hi[..h / 2], &mut line[..h]);
            for y in 0..h {
                buf[y * width + x] = line[y];
            }
        }
        for y in 0..h {
            let row = &mut buf[y * width..y * width + w];
            lo[..w / 2].copy_from_slice(&row[..w / 2]);
            hi[..w / 2].copy_from_slice(&row[w / 2..]);
            basis.synthesize(&lo[..w / 2], &hi[..w / 2], &mut line[..w]);
            row.copy_from_slice(&line[..w]);
        }
    }
    ComplexImage::new(height, width, buf)
}
