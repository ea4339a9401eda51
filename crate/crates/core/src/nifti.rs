//! Minimal single-file NIfTI-1 (`.nii`) reader and writer.
//!
//! Only 3D images are handled. Geometry is taken from `pixdim[1..=3]`;
//! orientation fields are written as identity and ignored on read.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Mask3D, SourceDtype, Volume3D};

pub const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

impl SourceDtype {
    fn code(self) -> i16 {
        match self {
            SourceDtype::Uint8 => DT_UINT8,
            SourceDtype::Int16 => DT_INT16,
            SourceDtype::Int32 => DT_INT32,
            SourceDtype::Float32 => DT_FLOAT32,
            SourceDtype::Float64 => DT_FLOAT64,
        }
    }

    fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            DT_UINT8 => SourceDtype::Uint8,
            DT_INT16 => SourceDtype::Int16,
            DT_INT32 => SourceDtype::Int32,
            DT_FLOAT32 => SourceDtype::Float32,
            DT_FLOAT64 => SourceDtype::Float64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    fn byte_width(self) -> usize {
        match self {
            SourceDtype::Uint8 => 1,
            SourceDtype::Int16 => 2,
            SourceDtype::Int32 | SourceDtype::Float32 => 4,
            SourceDtype::Float64 => 8,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Cursor<'_> {
    fn take<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[at..at + N]);
        b
    }

    fn i16(&self, at: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.take(at)),
            Endian::Big => i16::from_be_bytes(self.take(at)),
        }
    }

    fn i32(&self, at: usize) -> i32 {
        match self.endian {
            Endian::Little => i32::from_le_bytes(self.take(at)),
            Endian::Big => i32::from_be_bytes(self.take(at)),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.take(at)),
            Endian::Big => f32::from_be_bytes(self.take(at)),
        }
    }

    fn f64(&self, at: usize) -> f64 {
        match self.endian {
            Endian::Little => f64::from_le_bytes(self.take(at)),
            Endian::Big => f64::from_be_bytes(self.take(at)),
        }
    }

    fn u8(&self, at: usize) -> u8 {
        self.bytes[at]
    }
}

/// Decoded header fields the pipeline consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub endian: Endian,
    pub dims: [usize; 3],
    pub datatype: SourceDtype,
    pub bitpix: i16,
    pub pixdim: [f64; 3],
    pub vox_offset: usize,
    pub scl_slope: f64,
    pub scl_inter: f64,
}

pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::MalformedHeader(format!(
            "file holds {} bytes, header needs {HEADER_SIZE}",
            bytes.len()
        )));
    }
    let size_le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let size_be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let endian = if size_le == HEADER_SIZE as i32 {
        Endian::Little
    } else if size_be == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::MalformedHeader(format!(
            "sizeof_hdr is {size_le} (little) / {size_be} (big), expected 348"
        )));
    };
    if &bytes[344..348] != MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}, expected \"n+1\\0\"",
            &bytes[344..348]
        )));
    }
    let c = Cursor { bytes, endian };
    let ndim = c.i16(40);
    if ndim != 3 {
        return Err(Error::DimensionMismatch(format!("dim[0] = {ndim}, expected 3")));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let v = c.i16(42 + 2 * a);
        if v <= 0 {
            return Err(Error::MalformedHeader(format!("dim[{}] = {v}", a + 1)));
        }
        *d = v as usize;
    }
    let datatype = SourceDtype::from_code(c.i16(70))?;
    let bitpix = c.i16(72);
    if bitpix as usize != datatype.byte_width() * 8 {
        return Err(Error::MalformedHeader(format!(
            "bitpix {bitpix} inconsistent with datatype {datatype:?}"
        )));
    }
    let mut pixdim = [0f64; 3];
    for (a, p) in pixdim.iter_mut().enumerate() {
        let v = c.f32(80 + 4 * a) as f64;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::MalformedHeader(format!("pixdim[{}] = {v}", a + 1)));
        }
        *p = v;
    }
    let vox_offset = c.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::MalformedHeader(format!("vox_offset = {vox_offset}")));
    }
    Ok(NiftiHeader {
        endian,
        dims,
        datatype,
        bitpix,
        pixdim,
        vox_offset: vox_offset as usize,
        scl_slope: c.f32(112) as f64,
        scl_inter: c.f32(116) as f64,
    })
}

/// Decodes a complete `.nii` byte buffer.
pub fn decode(bytes: &[u8]) -> Result<Volume3D> {
    let h = parse_header(bytes)?;
    let n = h.dims[0] * h.dims[1] * h.dims[2];
    let width = h.datatype.byte_width();
    let expected = h.vox_offset + n * width;
    if bytes.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            found: bytes.len(),
        });
    }
    let c = Cursor {
        bytes,
        endian: h.endian,
    };
    let (slope, inter) = if h.scl_slope != 0.0 && h.scl_slope.is_finite() {
        (h.scl_slope, if h.scl_inter.is_finite() { h.scl_inter } else { 0.0 })
    } else {
        (1.0, 0.0)
    };
    let data = (0..n)
        .map(|i| {
            let at = h.vox_offset + i * width;
            let raw = match h.datatype {
                SourceDtype::Uint8 => c.u8(at) as f64,
                SourceDtype::Int16 => c.i16(at) as f64,
                SourceDtype::Int32 => c.i32(at) as f64,
                SourceDtype::Float32 => c.f32(at) as f64,
                SourceDtype::Float64 => c.f64(at),
            };
            slope * raw + inter
        })
        .collect();
    Ok(Volume3D::new(h.dims, h.pixdim, data)?.with_dtype(h.datatype))
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Options for encoding a volume.
#[derive(Debug, Clone, Copy)]
pub struct WriteOptions {
    pub dtype: SourceDtype,
    pub endian: Endian,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            dtype: SourceDtype::Float32,
            endian: Endian::Little,
            scl_slope: 1.0,
            scl_inter: 0.0,
        }
    }
}

struct Writer {
    buf: Vec<u8>,
    endian: Endian,
}

impl Writer {
    fn put(&mut self, at: usize, le: &[u8], be: &[u8]) {
        let b = match self.endian {
            Endian::Little => le,
            Endian::Big => be,
        };
        self.buf[at..at + b.len()].copy_from_slice(b);
    }

    fn i16(&mut self, at: usize, v: i16) {
        self.put(at, &v.to_le_bytes(), &v.to_be_bytes());
    }

    fn i32(&mut self, at: usize, v: i32) {
        self.put(at, &v.to_le_bytes(), &v.to_be_bytes());
    }

    fn f32(&mut self, at: usize, v: f32) {
        self.put(at, &v.to_le_bytes(), &v.to_be_bytes());
    }

    fn push_value(&mut self, dtype: SourceDtype, v: f64) {
        let (le, be): (Vec<u8>, Vec<u8>) = match dtype {
            SourceDtype::Uint8 => {
                let x = v.round().clamp(0.0, 255.0) as u8;
                (vec![x], vec![x])
            }
            SourceDtype::Int16 => {
                let x = v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                (x.to_le_bytes().to_vec(), x.to_be_bytes().to_vec())
            }
            SourceDtype::Int32 => {
                let x = v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32;
                (x.to_le_bytes().to_vec(), x.to_be_bytes().to_vec())
            }
            SourceDtype::Float32 => {
                let x = v as f32;
                (x.to_le_bytes().to_vec(), x.to_be_bytes().to_vec())
            }
            SourceDtype::Float64 => (v.to_le_bytes().to_vec(), v.to_be_bytes().to_vec()),
        };
        match self.endian {
            Endian::Little => self.buf.extend_from_slice(&le),
            Endian::Big => self.buf.extend_from_slice(&be),
        }
    }
}

/// Encodes stored values `(v - scl_inter) / scl_slope` so that reading the
/// file back reproduces `values` (up to the storage type's precision).
pub fn encode(
    dims: [usize; 3],
    spacing: [f64; 3],
    values: &[f64],
    opts: WriteOptions,
) -> Result<Vec<u8>> {
    if dims.iter().any(|&d| d == 0 || d > i16::MAX as usize) {
        return Err(Error::DimensionMismatch(format!("cannot encode dims {dims:?}")));
    }
    if values.len() != dims[0] * dims[1] * dims[2] {
        return Err(Error::DimensionMismatch(format!(
            "{} values for dims {dims:?}",
            values.len()
        )));
    }
    if opts.scl_slope == 0.0 {
        return Err(Error::InvalidParameter("scl_slope must be nonzero when writing".into()));
    }
    let mut w = Writer {
        buf: vec![0u8; DATA_OFFSET],
        endian: opts.endian,
    };
    w.i32(0, HEADER_SIZE as i32);
    w.buf[38] = b'r';
    w.i16(40, 3);
    for a in 0..3 {
        w.i16(42 + 2 * a, dims[a] as i16);
    }
    for a in 3..7 {
        w.i16(42 + 2 * a, 1);
    }
    w.i16(70, opts.dtype.code());
    w.i16(72, (opts.dtype.byte_width() * 8) as i16);
    w.f32(76, 1.0);
    for a in 0..3 {
        w.f32(80 + 4 * a, spacing[a] as f32);
    }
    w.f32(108, DATA_OFFSET as f32);
    w.f32(112, opts.scl_slope);
    w.f32(116, opts.scl_inter);
    // xyzt_units: mm
    w.buf[123] = 2;
    // sform_code: scanner, identity scaling by pixdim
    w.i16(254, 1);
    w.f32(280, spacing[0] as f32);
    w.f32(296 + 4, spacing[1] as f32);
    w.f32(312 + 8, spacing[2] as f32);
    w.buf[344..348].copy_from_slice(MAGIC);
    w.buf.reserve(values.len() * opts.dtype.byte_width());
    let slope = opts.scl_slope as f64;
    let inter = opts.scl_inter as f64;
    for &v in values {
        w.push_value(opts.dtype, (v - inter) / slope);
    }
    Ok(w.buf)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_volume_nifti(volume: &Volume3D, path: impl AsRef<Path>, opts: WriteOptions) -> Result<()> {
    let bytes = encode(volume.dims(), volume.spacing(), volume.data(), opts)?;
    write_bytes(path.as_ref(), &bytes)
}

/// Writes a mask as a uint8 NIfTI-1 file holding 0/1.
pub fn write_mask_nifti(mask: &Mask3D, path: impl AsRef<Path>) -> Result<()> {
    let values: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let opts = WriteOptions {
        dtype: SourceDtype::Uint8,
        ..WriteOptions::default()
    };
    let bytes = encode(mask.dims(), mask.spacing(), &values, opts)?;
    write_bytes(path.as_ref(), &bytes)
}

/// Reads a NIfTI file and thresholds it at 0.5.
pub fn read_mask_nifti(path: impl AsRef<Path>) -> Result<Mask3D> {
    let v = read_nifti(path)?;
    Mask3D::new(
        v.dims(),
        v.spacing(),
        v.data().iter().map(|&x| x > 0.5).collect(),
    )
}
