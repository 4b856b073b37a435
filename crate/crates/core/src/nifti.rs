//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reading and writing.
//!
//! Headers are normalised to little-endian on read and preserved in a
//! [`NiftiSidecar`] so that untouched fields survive a read/write cycle.
//! Output is always little-endian with `vox_offset = 352` and no extensions.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, BigEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::geometry::AffineTransform;
use crate::volume::{DataKind, Grid, Volume};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const DESCRIP: usize = 148;
    pub const AUX_FILE: usize = 228;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

/// Byte offsets of 2- and 4-byte numeric header fields, used to byte-swap
/// big-endian headers into the canonical little-endian layout.
const FIELDS_I16: &[(usize, usize)] = &[(36, 1), (40, 8), (68, 4), (120, 1), (252, 2)];
const FIELDS_32: &[(usize, usize)] = &[(0, 1), (32, 1), (56, 3), (76, 8), (108, 3), (124, 4), (140, 2), (256, 18)];

/// Fields of the source header that the pipeline carries through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiSidecar {
    /// Original 348-byte header, normalised to little-endian.
    pub raw_header: Vec<u8>,
    pub datatype_code: i16,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    /// Affine decoded from the source header, if any.
    pub source_affine: Option<AffineTransform>,
    pub warnings: Vec<String>,
}

impl NiftiSidecar {
    /// A fresh header for a volume that did not come from a file.
    pub fn new(kind: DataKind) -> Self {
        let mut raw = vec![0u8; HEADER_SIZE];
        LittleEndian::write_i32(&mut raw[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
        LittleEndian::write_f32(&mut raw[offsets::PIXDIM..], 1.0);
        raw[123] = 2; // xyzt_units: mm
        raw[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(MAGIC);
        NiftiSidecar {
            raw_header: raw,
            datatype_code: datatype_code(kind),
            scl_slope: 1.0,
            scl_inter: 0.0,
            qform_code: 0,
            sform_code: 0,
            source_affine: None,
            warnings: Vec::new(),
        }
    }

    /// Same header with a different storage datatype and identity scaling.
    pub fn with_kind(&self, kind: DataKind) -> Self {
        let mut s = self.clone();
        s.datatype_code = datatype_code(kind);
        s.scl_slope = 1.0;
        s.scl_inter = 0.0;
        s
    }

    pub fn kind(&self) -> Result<DataKind> {
        kind_from_code(self.datatype_code)
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let (s, i) = (self.scl_slope as f64, self.scl_inter as f64);
        if s == 0.0 || !s.is_finite() || (s == 1.0 && i == 0.0) {
            None
        } else {
            Some((s, if i.is_finite() { i } else { 0.0 }))
        }
    }
}

pub fn datatype_code(kind: DataKind) -> i16 {
    match kind {
        DataKind::U8 => 2,
        DataKind::I16 => 4,
        DataKind::I32 => 8,
        DataKind::F32 => 16,
        DataKind::F64 => 64,
    }
}

pub fn kind_from_code(code: i16) -> Result<DataKind> {
    Ok(match code {
        2 => DataKind::U8,
        4 => DataKind::I16,
        8 => DataKind::I32,
        16 => DataKind::F32,
        64 => DataKind::F64,
        other => return Err(Error::UnsupportedDatatype(other)),
    })
}

fn bytes_per_voxel(kind: DataKind) -> usize {
    match kind {
        DataKind::U8 => 1,
        DataKind::I16 => 2,
        DataKind::I32 | DataKind::F32 => 4,
        DataKind::F64 => 8,
    }
}

pub fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<(Volume, NiftiSidecar)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_nifti(&bytes)
}

/// Decodes a NIfTI-1 file image held in memory (gzip detected by magic).
pub fn decode_nifti(bytes: &[u8]) -> Result<(Volume, NiftiSidecar)> {
    if is_gzip(bytes) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::CorruptFile(format!("gzip stream: {e}")))?;
        return decode_plain(&out);
    }
    decode_plain(bytes)
}

fn decode_plain(bytes: &[u8]) -> Result<(Volume, NiftiSidecar)> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::NotNifti(format!("{} bytes is shorter than a header", bytes.len())));
    }
    if &bytes[offsets::MAGIC..offsets::MAGIC + 4] != MAGIC {
        return Err(Error::NotNifti(format!(
            "magic {:?}",
            String::from_utf8_lossy(&bytes[offsets::MAGIC..offsets::MAGIC + 4])
        )));
    }
    let mut raw = bytes[..HEADER_SIZE].to_vec();
    let big_endian = if LittleEndian::read_i32(&raw) == HEADER_SIZE as i32 {
        false
    } else if BigEndian::read_i32(&raw) == HEADER_SIZE as i32 {
        true
    } else {
        return Err(Error::NotNifti("sizeof_hdr is not 348".into()));
    };
    if big_endian {
        swap_header(&mut raw);
    }
    let h = &raw;
    let rd16 = |off: usize| LittleEndian::read_i16(&h[off..]);
    let rdf = |off: usize| LittleEndian::read_f32(&h[off..]);

    let dim: Vec<i16> = (0..8).map(|i| rd16(offsets::DIM + 2 * i)).collect();
    let mut ndim = dim[0] as i32;
    if !(1..=7).contains(&ndim) {
        return Err(Error::UnsupportedDims(format!("dim[0] = {ndim}")));
    }
    while ndim > 3 && dim[ndim as usize] == 1 {
        ndim -= 1;
    }
    if ndim != 3 {
        return Err(Error::UnsupportedDims(format!(
            "{ndim}-dimensional image (dims {:?})",
            &dim[1..=dim[0] as usize]
        )));
    }
    if dim[1..=3].iter().any(|&d| d < 1) {
        return Err(Error::UnsupportedDims(format!("non-positive extent in {:?}", &dim[1..=3])));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let datatype_code = rd16(offsets::DATATYPE);
    let kind = kind_from_code(datatype_code)?;

    let vox_offset = rdf(offsets::VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::CorruptFile(format!("vox_offset {vox_offset}")));
    }
    let start = vox_offset as usize;
    let n: usize = dims.iter().product();
    let bpv = bytes_per_voxel(kind);
    let end = start + n * bpv;
    if bytes.len() < end {
        return Err(Error::CorruptFile(format!(
            "voxel block needs {} bytes after offset {start}, file has {}",
            n * bpv,
            bytes.len().saturating_sub(start)
        )));
    }

    let mut sidecar = NiftiSidecar {
        datatype_code,
        scl_slope: rdf(offsets::SCL_SLOPE),
        scl_inter: rdf(offsets::SCL_INTER),
        qform_code: rd16(offsets::QFORM_CODE),
        sform_code: rd16(offsets::SFORM_CODE),
        source_affine: None,
        warnings: Vec::new(),
        raw_header: Vec::new(),
    };

    let pixdim: Vec<f64> = (0..8).map(|i| rdf(offsets::PIXDIM + 4 * i) as f64).collect();
    let mut warnings = Vec::new();
    let affine = header_affine(h, &pixdim, &sidecar, &mut warnings)?;
    sidecar.warnings = warnings;
    sidecar.source_affine = Some(affine);

    let payload = &bytes[start..end];
    let mut data = decode_voxels(payload, kind, big_endian);
    if let Some((slope, inter)) = sidecar.scaling() {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }

    sidecar.raw_header = raw;
    let grid = Grid::new(dims, affine).map_err(|e| Error::CorruptFile(format!("geometry: {e}")))?;
    let volume = Volume::new(grid, kind, data)?;
    Ok((volume, sidecar))
}

fn decode_voxels(payload: &[u8], kind: DataKind, big_endian: bool) -> Vec<f64> {
    macro_rules! decode {
        ($bo:ty) => {
            match kind {
                DataKind::U8 => payload.iter().map(|&b| b as f64).collect(),
                DataKind::I16 => payload.chunks_exact(2).map(|c| <$bo>::read_i16(c) as f64).collect(),
                DataKind::I32 => payload.chunks_exact(4).map(|c| <$bo>::read_i32(c) as f64).collect(),
                DataKind::F32 => payload.chunks_exact(4).map(|c| <$bo>::read_f32(c) as f64).collect(),
                DataKind::F64 => payload.chunks_exact(8).map(|c| <$bo>::read_f64(c)).collect(),
            }
        };
    }
    if big_endian {
        decode!(BigEndian)
    } else {
        decode!(LittleEndian)
    }
}

fn swap_header(raw: &mut [u8]) {
    for &(off, count) in FIELDS_I16 {
        for k in 0..count {
            raw[off + 2 * k..off + 2 * k + 2].reverse();
        }
    }
    for &(off, count) in FIELDS_32 {
        for k in 0..count {
            raw[off + 4 * k..off + 4 * k + 4].reverse();
        }
    }
}

fn sform_affine(h: &[u8]) -> AffineTransform {
    let mut rows = [[0.0; 4]; 3];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = LittleEndian::read_f32(&h[offsets::SROW_X + 16 * r + 4 * c..]) as f64;
        }
    }
    AffineTransform::from_rows(rows)
}

fn qform_affine(h: &[u8], pixdim: &[f64]) -> AffineTransform {
    let q = |i: usize| LittleEndian::read_f32(&h[offsets::QUATERN_B + 4 * i..]) as f64;
    let (mut b, mut c, mut d) = (q(0), q(1), q(2));
    let offset = [0, 1, 2].map(|i| LittleEndian::read_f32(&h[offsets::QOFFSET_X + 4 * i..]) as f64);
    let mut a = 1.0 - (b * b + c * c + d * d);
    if a < 1e-7 {
        let norm = (b * b + c * c + d * d).sqrt();
        a = 0.0;
        b /= norm;
        c /= norm;
        d /= norm;
    } else {
        a = a.sqrt();
    }
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
    let sp = [positive_or_one(pixdim[1]), positive_or_one(pixdim[2]), qfac * positive_or_one(pixdim[3])];
    let mut lin = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            lin[i][j] = r[i][j] * sp[j];
        }
    }
    AffineTransform::from_linear(lin, offset)
}

fn positive_or_one(v: f64) -> f64 {
    if v.is_finite() && v != 0.0 {
        v.abs()
    } else {
        1.0
    }
}

fn header_affine(
    h: &[u8],
    pixdim: &[f64],
    sidecar: &NiftiSidecar,
    warnings: &mut Vec<String>,
) -> Result<AffineTransform> {
    let sform = (sidecar.sform_code > 0).then(|| sform_affine(h));
    let qform = (sidecar.qform_code > 0).then(|| qform_affine(h, pixdim));
    match (sform, qform) {
        (Some(s), Some(q)) => {
            let diff = s.max_abs_diff(&q);
            if diff > 1e-3 {
                warnings.push(format!("sform and qform disagree (max entry difference {diff:.3e}); using sform"));
            }
            Ok(s)
        }
        (Some(s), None) => Ok(s),
        (None, Some(q)) => Ok(q),
        (None, None) => Ok(AffineTransform::scaling([
            positive_or_one(pixdim[1]),
            positive_or_one(pixdim[2]),
            positive_or_one(pixdim[3]),
        ])),
    }
}

/// Quaternion parameters `(b, c, d, qfac)` for the rotation closest to the
/// linear block of `t` after column normalisation.
fn quaternion_of(t: &AffineTransform) -> (f64, f64, f64, f64) {
    let mut cols = [t.column(0), t.column(1), t.column(2)];
    // Gram-Schmidt
    for j in 0..3 {
        for k in 0..j {
            let dot: f64 = (0..3).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..3 {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let n = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut cols[j] {
            *v /= n;
        }
    }
    let r = |i: usize, j: usize| cols[j][i];
    let det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) - r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0))
        + r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
    let qfac = if det < 0.0 {
        for v in &mut cols[2] {
            *v = -*v;
        }
        -1.0
    } else {
        1.0
    };
    let r = |i: usize, j: usize| cols[j][i];
    let (r11, r12, r13) = (r(0, 0), r(0, 1), r(0, 2));
    let (r21, r22, r23) = (r(1, 0), r(1, 1), r(1, 2));
    let (r31, r32, r33) = (r(2, 0), r(2, 1), r(2, 2));
    let trace = r11 + r22 + r33 + 1.0;
    let (mut a, mut b, mut c, mut d);
    if trace > 0.5 {
        a = 0.5 * trace.sqrt();
        b = 0.25 * (r32 - r23) / a;
        c = 0.25 * (r13 - r31) / a;
        d = 0.25 * (r21 - r12) / a;
    } else {
        let xd = 1.0 + r11 - (r22 + r33);
        let yd = 1.0 + r22 - (r11 + r33);
        let zd = 1.0 + r33 - (r11 + r22);
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r12 + r21) / b;
            d = 0.25 * (r13 + r31) / b;
            a = 0.25 * (r32 - r23) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r12 + r21) / c;
            d = 0.25 * (r23 + r32) / c;
            a = 0.25 * (r13 - r31) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r13 + r31) / d;
            c = 0.25 * (r23 + r32) / d;
            a = 0.25 * (r21 - r12) / d;
        }
        if a < 0.0 {
            b = -b;
            c = -c;
            d = -d;
            a = -a;
        }
    }
    let _ = a;
    (b, c, d, qfac)
}

/// Writes `volume` with the storage datatype and scaling recorded in `sidecar`.
/// A `.gz` extension selects gzip compression.
pub fn write_nifti(volume: &Volume, sidecar: &NiftiSidecar, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(volume, sidecar)?;
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let out = if gz {
        let mut enc = GzEncoder::new(Vec::with_capacity(bytes.len() / 4), Compression::default());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Encodes an uncompressed NIfTI-1 file image.
pub fn encode_nifti(volume: &Volume, sidecar: &NiftiSidecar) -> Result<Vec<u8>> {
    volume.grid.validate()?;
    let kind = sidecar.kind()?;
    let mut h = if sidecar.raw_header.len() == HEADER_SIZE {
        sidecar.raw_header.clone()
    } else {
        NiftiSidecar::new(kind).raw_header
    };
    let dims = volume.dims();
    LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for i in 0..3 {
        dim[i + 1] = i16::try_from(dims[i])
            .map_err(|_| Error::UnsupportedDims(format!("extent {} exceeds NIfTI-1 limit", dims[i])))?;
    }
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[offsets::DIM + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut h[offsets::DATATYPE..], sidecar.datatype_code);
    LittleEndian::write_i16(&mut h[offsets::BITPIX..], (bytes_per_voxel(kind) * 8) as i16);
    LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], sidecar.scl_slope);
    LittleEndian::write_f32(&mut h[offsets::SCL_INTER..], sidecar.scl_inter);
    h[offsets::DESCRIP..offsets::DESCRIP + 80].fill(0);
    h[offsets::AUX_FILE..offsets::AUX_FILE + 24].fill(0);
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(MAGIC);

    let affine = volume.voxel_to_world();
    let unchanged = sidecar.source_affine.as_ref() == Some(affine) && (sidecar.sform_code > 0 || sidecar.qform_code > 0);
    if !unchanged {
        let sform_code = if sidecar.sform_code > 0 { sidecar.sform_code } else { 1 };
        let qform_code = if sidecar.qform_code > 0 { sidecar.qform_code } else { sform_code };
        LittleEndian::write_i16(&mut h[offsets::SFORM_CODE..], sform_code);
        LittleEndian::write_i16(&mut h[offsets::QFORM_CODE..], qform_code);
        let m = affine.matrix();
        for r in 0..3 {
            for c in 0..4 {
                LittleEndian::write_f32(&mut h[offsets::SROW_X + 16 * r + 4 * c..], m[r][c] as f32);
            }
        }
        let (b, c, d, qfac) = quaternion_of(affine);
        for (i, q) in [b, c, d].iter().enumerate() {
            LittleEndian::write_f32(&mut h[offsets::QUATERN_B + 4 * i..], *q as f32);
        }
        let t = affine.translation_part();
        for (i, v) in t.iter().enumerate() {
            LittleEndian::write_f32(&mut h[offsets::QOFFSET_X + 4 * i..], *v as f32);
        }
        LittleEndian::write_f32(&mut h[offsets::PIXDIM..], qfac as f32);
    }
    let sp = volume.spacing();
    for i in 0..3 {
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 4 * (i + 1)..], sp[i] as f32);
    }

    let mut out = h;
    out.resize(VOX_OFFSET, 0);
    out.reserve(volume.data.len() * bytes_per_voxel(kind));
    encode_voxels(&volume.data, kind, sidecar.scaling(), &mut out)?;
    Ok(out)
}

fn encode_voxels(data: &[f64], kind: DataKind, scaling: Option<(f64, f64)>, out: &mut Vec<u8>) -> Result<()> {
    let overflow = |value: f64| Error::DatatypeOverflow {
        value,
        kind: kind.name(),
    };
    let mut buf = [0u8; 8];
    for &v in data {
        let raw = match scaling {
            Some((slope, inter)) => (v - inter) / slope,
            None => v,
        };
        match kind {
            DataKind::F64 => {
                LittleEndian::write_f64(&mut buf, raw);
                out.extend_from_slice(&buf[..8]);
            }
            DataKind::F32 => {
                let f = raw as f32;
                if raw.is_finite() && !f.is_finite() {
                    return Err(overflow(v));
                }
                LittleEndian::write_f32(&mut buf, f);
                out.extend_from_slice(&buf[..4]);
            }
            _ => {
                let (lo, hi) = kind.integer_range().unwrap();
                let r = raw.round_ties_even();
                if !r.is_finite() || r < lo || r > hi {
                    return Err(overflow(v));
                }
                match kind {
                    DataKind::U8 => out.push(r as u8),
                    DataKind::I16 => {
                        LittleEndian::write_i16(&mut buf, r as i16);
                        out.extend_from_slice(&buf[..2]);
                    }
                    _ => {
                        LittleEndian::write_i32(&mut buf, r as i32);
                        out.extend_from_slice(&buf[..4]);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Reads a volume, discarding the header sidecar.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    read_nifti(path).map(|(v, _)| v)
}

/// Writes a volume with a fresh header for its own datatype.
pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(volume, &NiftiSidecar::new(volume.kind), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled header following the NIfTI-1 field layout, independent
    /// of the encoder.
    fn handmade(dims: [i16; 3], datatype: i16, bitpix: i16, slope: f32, inter: f32, payload: &[u8]) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        let dim = [3i16, dims[0], dims[1], dims[2], 1, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        h[70..72].copy_from_slice(&datatype.to_le_bytes());
        h[72..74].copy_from_slice(&bitpix.to_le_bytes());
        for (i, p) in [1.0f32, 1.0, 1.0, 1.0].iter().enumerate() {
            h[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
        }
        h[108..112].copy_from_slice(&352f32.to_le_bytes());
        h[112..116].copy_from_slice(&slope.to_le_bytes());
        h[116..120].copy_from_slice(&inter.to_le_bytes());
        h[254..256].copy_from_slice(&1i16.to_le_bytes());
        let srows = [[1f32, 0., 0., 0.], [0., 1., 0., 0.], [0., 0., 1., 0.]];
        for (r, row) in srows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                h[280 + 16 * r + 4 * c..284 + 16 * r + 4 * c].copy_from_slice(&v.to_le_bytes());
            }
        }
        h[344..348].copy_from_slice(b"n+1\0");
        h.extend_from_slice(payload);
        h
    }

    fn f32_fixture() -> Vec<u8> {
        let payload: Vec<u8> = (0..8).flat_map(|i| (i as f32 * 1.5).to_le_bytes()).collect();
        handmade([2, 2, 2], 16, 32, 1.0, 0.0, &payload)
    }

    #[test]
    fn minimal_identity_file() {
        let (v, side) = decode_nifti(&f32_fixture()).unwrap();
        assert_eq!(v.dims(), [2, 2, 2]);
        assert_eq!(v.spacing(), [1.0; 3]);
        assert_eq!(*v.voxel_to_world(), AffineTransform::identity());
        assert_eq!(v.kind, DataKind::F32);
        assert_eq!(v.data, (0..8).map(|i| i as f64 * 1.5).collect::<Vec<_>>());
        assert_eq!(side.datatype_code, 16);
        assert!(side.warnings.is_empty());
    }

    #[test]
    fn gzip_is_transparent() {
        let plain = f32_fixture();
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&plain).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(decode_nifti(&gz).unwrap().0, decode_nifti(&plain).unwrap().0);
    }

    #[test]
    fn scaled_i16_is_descaled() {
        let payload: Vec<u8> = (0..8).flat_map(|_| 3i16.to_le_bytes()).collect();
        let (v, _) = decode_nifti(&handmade([2, 2, 2], 4, 16, 2.0, 1.0, &payload)).unwrap();
        assert!(v.data.iter().all(|&x| x == 3.0 * 2.0 + 1.0));
    }

    #[test]
    fn zero_slope_means_raw() {
        let payload: Vec<u8> = (0..8).flat_map(|_| 3i16.to_le_bytes()).collect();
        let (v, _) = decode_nifti(&handmade([2, 2, 2], 4, 16, 0.0, 5.0, &payload)).unwrap();
        assert!(v.data.iter().all(|&x| x == 3.0));
    }

    #[test]
    fn error_paths() {
        let mut bad = f32_fixture();
        bad[344] = b'x';
        assert!(matches!(decode_nifti(&bad), Err(Error::NotNifti(_))));

        let mut dt = f32_fixture();
        dt[70..72].copy_from_slice(&512i16.to_le_bytes());
        assert!(matches!(decode_nifti(&dt), Err(Error::UnsupportedDatatype(512))));

        let short = &f32_fixture()[..352 + 20];
        assert!(matches!(decode_nifti(short), Err(Error::CorruptFile(_))));

        let mut two_d = f32_fixture();
        two_d[40..42].copy_from_slice(&2i16.to_le_bytes());
        assert!(matches!(decode_nifti(&two_d), Err(Error::UnsupportedDims(_))));

        let mut four_d = f32_fixture();
        four_d[40..42].copy_from_slice(&4i16.to_le_bytes());
        four_d[48..50].copy_from_slice(&2i16.to_le_bytes());
        assert!(matches!(decode_nifti(&four_d), Err(Error::UnsupportedDims(_))));
    }

    #[test]
    fn singleton_fourth_dim_is_squeezed() {
        let mut f = f32_fixture();
        f[40..42].copy_from_slice(&4i16.to_le_bytes());
        let (v, _) = decode_nifti(&f).unwrap();
        assert_eq!(v.dims(), [2, 2, 2]);
    }

    #[test]
    fn big_endian_header_decodes() {
        let le = f32_fixture();
        let mut be = le.clone();
        swap_header(&mut be[..HEADER_SIZE]);
        for chunk in be[352..].chunks_exact_mut(4) {
            chunk.reverse();
        }
        assert_eq!(decode_nifti(&be).unwrap().0, decode_nifti(&le).unwrap().0);
    }

    #[test]
    fn overflow_is_reported() {
        let g = Grid::centered([2, 2, 2], [1.0; 3]);
        let mut v = Volume::filled(g, DataKind::I16, 0.0);
        v.data[3] = 70000.0;
        let err = encode_nifti(&v, &NiftiSidecar::new(DataKind::I16)).unwrap_err();
        assert!(matches!(err, Error::DatatypeOverflow { kind: "i16", .. }));
    }

    #[test]
    fn descrip_and_aux_are_scrubbed() {
        let mut f = f32_fixture();
        f[148..153].copy_from_slice(b"Smith");
        f[228..231].copy_from_slice(b"aux");
        let (v, side) = decode_nifti(&f).unwrap();
        let out = encode_nifti(&v, &side).unwrap();
        assert!(out[148..228].iter().all(|&b| b == 0));
        assert!(out[228..252].iter().all(|&b| b == 0));
    }

    #[test]
    fn qform_only_header() {
        // 90 degrees about z: quaternion (a, b, c, d) = (cos 45, 0, 0, sin 45)
        let mut f = f32_fixture();
        f[254..256].copy_from_slice(&0i16.to_le_bytes());
        f[252..254].copy_from_slice(&1i16.to_le_bytes());
        let d = std::f32::consts::FRAC_1_SQRT_2;
        f[264..268].copy_from_slice(&d.to_le_bytes());
        f[268..272].copy_from_slice(&10f32.to_le_bytes());
        f[80..84].copy_from_slice(&2f32.to_le_bytes());
        let (v, side) = decode_nifti(&f).unwrap();
        let m = v.voxel_to_world().matrix();
        assert!((m[0][1] + 1.0).abs() < 1e-6 && (m[1][0] - 2.0).abs() < 1e-6);
        assert_eq!(m[0][3], 10.0);
        assert!((v.spacing()[0] - 2.0).abs() < 1e-6);

        // re-encoding a changed affine regenerates an equivalent qform
        let mut moved = v.clone();
        moved.grid.voxel_to_world = AffineTransform::translation([1.0, 0.0, 0.0]).compose(v.voxel_to_world());
        let bytes = encode_nifti(&moved, &side).unwrap();
        let mut h = bytes[..HEADER_SIZE].to_vec();
        h[254..256].copy_from_slice(&0i16.to_le_bytes());
        let pixdim: Vec<f64> = (0..8).map(|i| LittleEndian::read_f32(&h[76 + 4 * i..]) as f64).collect();
        let q = qform_affine(&h, &pixdim);
        assert!(q.max_abs_diff(moved.voxel_to_world()) < 1e-5);
    }

    #[test]
    fn sform_qform_disagreement_warns() {
        let mut f = f32_fixture();
        f[252..254].copy_from_slice(&1i16.to_le_bytes());
        f[268..272].copy_from_slice(&50f32.to_le_bytes());
        let (v, side) = decode_nifti(&f).unwrap();
        assert_eq!(*v.voxel_to_world(), AffineTransform::identity());
        assert_eq!(side.warnings.len(), 1);
    }
}
