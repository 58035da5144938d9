//! Binary artifacts, atomic file writes and content hashing.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "HAVOKSVD" or "HAVOKMDL"
//! version    u32       currently 1
//! header     fixed per magic (see below)
//! matrices   repeated: rows u64, cols u64, rows*cols f64 in row-major order
//! ```
//!
//! `HAVOKSVD` header: delay u64, start i64 (ns since epoch), dt f64; matrices
//! U (q×k), S (1×k), V (p×k), full spectrum (1×m).
//! `HAVOKMDL` header: dt f64, residual f64; matrices A ((r−1)×(r−1)), B ((r−1)×1).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{SampleClock, SvdFactors};
use crate::havok::HavokModel;
use crate::timeseries_io::Timestamp;

pub const SVD_MAGIC: &[u8; 8] = b"HAVOKSVD";
pub const MODEL_MAGIC: &[u8; 8] = b"HAVOKMDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("bad magic: expected {expected}")]
    BadMagic { expected: String },
    #[error("unsupported artifact version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn put_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64, ArtifactError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64, ArtifactError> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn get_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>, ArtifactError> {
    let rows = get_u64(r)? as usize;
    let cols = get_u64(r)? as usize;
    let len = rows
        .checked_mul(cols)
        .filter(|&l| l < (1 << 34))
        .ok_or_else(|| ArtifactError::Malformed(format!("implausible dims {rows}x{cols}")))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(get_f64(r)?);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(), ArtifactError> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(ArtifactError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    match u32::from_le_bytes(v) {
        FORMAT_VERSION => Ok(()),
        other => Err(ArtifactError::UnsupportedVersion(other)),
    }
}

fn row(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

pub fn write_svd<W: Write>(mut w: W, f: &SvdFactors) -> Result<(), ArtifactError> {
    w.write_all(SVD_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(f.delay as u64).to_le_bytes())?;
    w.write_all(&f.clock.start.nanos().to_le_bytes())?;
    w.write_all(&f.clock.dt.to_le_bytes())?;
    put_matrix(&mut w, &f.u)?;
    put_matrix(&mut w, &row(&f.s))?;
    put_matrix(&mut w, &f.v)?;
    put_matrix(&mut w, &row(&f.full_spectrum))?;
    Ok(())
}

pub fn read_svd<R: Read>(mut r: R) -> Result<SvdFactors, ArtifactError> {
    check_header(&mut r, SVD_MAGIC)?;
    let delay = get_u64(&mut r)? as usize;
    let start = Timestamp::from_nanos(get_u64(&mut r)? as i64);
    let dt = get_f64(&mut r)?;
    let u = get_matrix(&mut r)?;
    let s = get_matrix(&mut r)?;
    let v = get_matrix(&mut r)?;
    let full = get_matrix(&mut r)?;
    if s.ncols() != u.ncols() || v.ncols() != u.ncols() {
        return Err(ArtifactError::Malformed("factor ranks disagree".into()));
    }
    Ok(SvdFactors {
        u,
        s: s.iter().copied().collect(),
        v,
        full_spectrum: full.iter().copied().collect(),
        delay,
        clock: SampleClock::new(start, dt),
    })
}

pub fn write_model<W: Write>(mut w: W, m: &HavokModel) -> Result<(), ArtifactError> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&m.dt.to_le_bytes())?;
    w.write_all(&m.residual.to_le_bytes())?;
    put_matrix(&mut w, &m.a)?;
    put_matrix(&mut w, &DMatrix::from_column_slice(m.b.len(), 1, m.b.as_slice()))?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<HavokModel, ArtifactError> {
    check_header(&mut r, MODEL_MAGIC)?;
    let dt = get_f64(&mut r)?;
    let residual = get_f64(&mut r)?;
    let a = get_matrix(&mut r)?;
    let b = get_matrix(&mut r)?;
    if a.nrows() != a.ncols() || b.nrows() != a.nrows() || b.ncols() != 1 {
        return Err(ArtifactError::Malformed(
            "A must be square and B a matching column".into(),
        ));
    }
    Ok(HavokModel {
        a,
        b: DVector::from_column_slice(b.as_slice()),
        dt,
        residual,
    })
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_hankel, svd_hankel};

    #[test]
    fn svd_round_trip() {
        let s: Vec<f64> = (0..50).map(|k| (k as f64 * 0.2).sin()).collect();
        let h = build_hankel(&s, 6, 2)
            .unwrap()
            .with_clock(SampleClock::new(Timestamp::from_nanos(-5), 0.25));
        let f = svd_hankel(&h).unwrap();
        let mut buf = Vec::new();
        write_svd(&mut buf, &f).unwrap();
        assert_eq!(&buf[..8], SVD_MAGIC);
        let g = read_svd(buf.as_slice()).unwrap();
        assert_eq!(f.u, g.u);
        assert_eq!(f.v, g.v);
        assert_eq!(f.s, g.s);
        assert_eq!(f.full_spectrum, g.full_spectrum);
        assert_eq!((f.delay, f.clock), (g.delay, g.clock));
    }

    #[test]
    fn model_round_trip_and_layout() {
        let m = HavokModel {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            b: DVector::from_vec(vec![5.0, 6.0]),
            dt: 0.5,
            residual: 1e-3,
        };
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        // magic + version + dt + residual, then A dims and its first row-major entries
        assert_eq!(u64::from_le_bytes(buf[28..36].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[44..52].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(buf[52..60].try_into().unwrap()), 2.0);
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
        assert!(matches!(read_svd(buf.as_slice()), Err(ArtifactError::BadMagic { .. })));
        assert!(read_model(&buf[..30]).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
