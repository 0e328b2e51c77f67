//! PSNS1 header/data container and PGM magnitude export.
//!
//! A container is a pair of files. The header is plain text:
//!
//! ```text
//! PSNS1
//! height = 64
//! width = 64
//! planes = 1
//! dtype = complex64
//! data = image.raw
//! meta.reduction = 4
//! ```
//!
//! `data` names the raw file relative to the header's directory. The raw file
//! holds `planes` images back to back, each row-major, as interleaved
//! little-endian (re, im) pairs: 32-bit floats for `complex64`, 64-bit floats
//! for `complex128`. Keys prefixed with `meta.` are free-form annotations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, MultiCoilData, NoiseCovariance, SensitivityMaps};

pub const MAGIC: &str = "PSNS1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    Complex64,
    Complex128,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::Complex64 => "complex64",
            Dtype::Complex128 => "complex128",
        }
    }

    fn bytes_per_sample(self) -> usize {
        match self {
            Dtype::Complex64 => 8,
            Dtype::Complex128 => 16,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "complex64" => Some(Dtype::Complex64),
            "complex128" => Some(Dtype::Complex128),
            _ => None,
        }
    }
}

/// Planes plus free-form metadata, as stored in one header/data pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub planes: Vec<ComplexImage>,
    pub meta: BTreeMap<String, String>,
}

impl Container {
    pub fn single(image: ComplexImage) -> Self {
        Self {
            planes: vec![image],
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta_value<T: std::str::FromStr>(&self, path: &Path, key: &str) -> Result<T> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| Error::format(path, format!("missing meta.{key}")))?;
        raw.parse()
            .map_err(|_| Error::format(path, format!("meta.{key} has bad value {raw:?}")))
    }
}

/// Data-file path for a header path: same stem, `.raw` extension.
pub fn data_path_for(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

pub fn write_container(header: &Path, container: &Container, dtype: Dtype) -> Result<()> {
    let first = container
        .planes
        .first()
        .ok_or_else(|| Error::format(header, "container needs at least one plane"))?;
    let (h, w) = first.dims();
    for p in &container.planes {
        if p.dims() != (h, w) {
            return Err(Error::Dimension(format!(
                "all planes must be {h}x{w}, found {:?}",
                p.dims()
            )));
        }
    }
    let data_path = data_path_for(header);
    let data_name = data_path
        .file_name()
        .ok_or_else(|| Error::format(header, "header path has no file name"))?
        .to_string_lossy()
        .into_owned();

    let mut text = format!(
        "{MAGIC}\nheight = {h}\nwidth = {w}\nplanes = {}\ndtype = {}\ndata = {data_name}\n",
        container.planes.len(),
        dtype.name()
    );
    for (k, v) in &container.meta {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::format(header, format!("unencodable meta entry {k:?}")));
        }
        text.push_str(&format!("meta.{k} = {v}\n"));
    }

    let mut bytes = Vec::with_capacity(container.planes.len() * h * w * dtype.bytes_per_sample());
    for p in &container.planes {
        for z in p.data() {
            match dtype {
                Dtype::Complex64 => {
                    bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
                    bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
                }
                Dtype::Complex128 => {
                    bytes.extend_from_slice(&z.re.to_le_bytes());
                    bytes.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
    }
    fs::write(&data_path, &bytes).map_err(|e| Error::io(&data_path, e))?;
    fs::write(header, text).map_err(|e| Error::io(header, e))?;
    Ok(())
}

struct Header {
    height: usize,
    width: usize,
    planes: usize,
    dtype: Dtype,
    data: PathBuf,
    meta: BTreeMap<String, String>,
}

fn parse_header(path: &Path, text: &str) -> Result<Header> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some(MAGIC) => {}
        other => {
            return Err(Error::format(
                path,
                format!("bad magic string {:?}, expected {MAGIC}", other.unwrap_or("")),
            ))
        }
    }
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    let mut meta = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key = value", i + 2)))?;
        let (k, v) = (k.trim(), v.trim());
        if let Some(mk) = k.strip_prefix("meta.") {
            meta.insert(mk.to_string(), v.to_string());
        } else if fields.insert(k, v).is_some() {
            return Err(Error::format(path, format!("duplicate key {k}")));
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::format(path, format!("missing field {k}")))
    };
    let parse_dim = |k: &str| -> Result<usize> {
        let v = get(k)?;
        v.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::format(path, format!("{k} must be a positive integer, got {v:?}")))
    };
    let height = parse_dim("height")?;
    let width = parse_dim("width")?;
    let planes = match fields.get("planes") {
        Some(_) => parse_dim("planes")?,
        None => 1,
    };
    let dtype_s = get("dtype")?;
    let dtype = Dtype::parse(dtype_s)
        .ok_or_else(|| Error::format(path, format!("unsupported dtype {dtype_s:?}")))?;
    let data_name = get("data")?;
    let data = path
        .parent()
        .map(|p| p.join(data_name))
        .unwrap_or_else(|| PathBuf::from(data_name));
    for k in fields.keys() {
        if !matches!(*k, "height" | "width" | "planes" | "dtype" | "data") {
            return Err(Error::format(path, format!("unknown field {k}")));
        }
    }
    Ok(Header {
        height,
        width,
        planes,
        dtype,
        data,
        meta,
    })
}

pub fn read_container(header: &Path) -> Result<Container> {
    let text = fs::read_to_string(header).map_err(|e| Error::io(header, e))?;
    let hdr = parse_header(header, &text)?;
    let bytes = fs::read(&hdr.data).map_err(|e| Error::io(&hdr.data, e))?;
    let n = hdr.height * hdr.width;
    let expected = (hdr.planes * n * hdr.dtype.bytes_per_sample()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::ByteCount {
            path: hdr.data,
            expected,
            found: bytes.len() as u64,
        });
    }
    let samples: Vec<Complex64> = match hdr.dtype {
        Dtype::Complex64 => bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect(),
        Dtype::Complex128 => bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[0..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..16].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect(),
    };
    let planes = samples
        .chunks_exact(n)
        .map(|c| ComplexImage::new(hdr.height, hdr.width, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Container {
        planes,
        meta: hdr.meta,
    })
}

pub fn write_image(header: &Path, image: &ComplexImage) -> Result<()> {
    write_container(header, &Container::single(image.clone()), Dtype::Complex64)
}

pub fn write_image_with(header: &Path, image: &ComplexImage, dtype: Dtype) -> Result<()> {
    write_container(header, &Container::single(image.clone()), dtype)
}

pub fn read_image(header: &Path) -> Result<ComplexImage> {
    let mut c = read_container(header)?;
    if c.planes.len() != 1 {
        return Err(Error::format(
            header,
            format!("expected a single plane, found {}", c.planes.len()),
        ));
    }
    Ok(c.planes.pop().unwrap())
}

pub fn write_maps(header: &Path, maps: &SensitivityMaps) -> Result<()> {
    let c = Container {
        planes: maps.maps().to_vec(),
        meta: BTreeMap::new(),
    }
    .with_meta("kind", "sensitivity");
    write_container(header, &c, Dtype::Complex64)
}

pub fn read_maps(header: &Path) -> Result<SensitivityMaps> {
    SensitivityMaps::new(read_container(header)?.planes)
}

pub fn write_coil_data(header: &Path, data: &MultiCoilData) -> Result<()> {
    let c = Container {
        planes: data.coils().to_vec(),
        meta: BTreeMap::new(),
    }
    .with_meta("kind", "coil-data")
    .with_meta("reduction", data.reduction())
    .with_meta("full_height", data.full_height());
    write_container(header, &c, Dtype::Complex64)
}

pub fn read_coil_data(header: &Path) -> Result<MultiCoilData> {
    let c = read_container(header)?;
    let reduction: usize = c.meta_value(header, "reduction")?;
    let full_height: usize = c.meta_value(header, "full_height")?;
    MultiCoilData::new(reduction, full_height, c.planes)
}

/// Ψ is stored as one L×L plane in double precision so its inverse is not
/// perturbed by single-precision rounding.
pub fn write_covariance(header: &Path, psi: &NoiseCovariance) -> Result<()> {
    let plane = ComplexImage::new(psi.size(), psi.size(), psi.matrix().to_vec())?;
    let c = Container::single(plane)
        .with_meta("kind", "noise-covariance")
        .with_meta("sigma_n", format!("{:e}", psi.sigma_n()));
    write_container(header, &c, Dtype::Complex128)
}

pub fn read_covariance(header: &Path) -> Result<NoiseCovariance> {
    let mut c = read_container(header)?;
    let sigma_n: f64 = c.meta_value(header, "sigma_n")?;
    let plane = c.planes.pop().unwrap();
    if plane.height() != plane.width() {
        return Err(Error::format(header, "covariance plane must be square"));
    }
    NoiseCovariance::new(plane.height(), plane.into_data(), sigma_n)
}

/// Normalized 8-bit magnitude values, `round(255·|ρ|/max|ρ|)`; all-zero maps to 0.
pub fn magnitude_bytes(image: &ComplexImage) -> Vec<u8> {
    let mag = image.magnitude();
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0; mag.len()];
    }
    // f64::round rounds half away from zero
    mag.iter()
        .map(|&m| (255.0 * m / max).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Writes |ρ| as a binary PGM (P5).
pub fn export_magnitude(image: &ComplexImage, path: &Path) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(magnitude_bytes(image));
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
