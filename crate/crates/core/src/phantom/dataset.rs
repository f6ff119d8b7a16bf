//! On-disk dataset layout.
//!
//! A dataset directory holds `manifest.toml` plus two binary blobs per slice:
//! the fully sampled k-space (`slice_NNNN.ksp`) and the coil maps
//! (`slice_NNNN.csm`, stored with one frame). Every blob starts with a
//! 32-byte little-endian header:
//!
//! | bytes  | field            |
//! |--------|------------------|
//! | 0..4   | magic `UPCM`     |
//! | 4..8   | version (u32)    |
//! | 8..12  | n_coils (u32)    |
//! | 12..16 | frames (u32)     |
//! | 16..20 | height (u32)     |
//! | 20..24 | width (u32)      |
//! | 24..32 | reserved, zero   |
//!
//! followed by `f32` interleaved real/imaginary samples ordered
//! `[coil][frame][row][col]`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kspace::{ifft2c, reduce_coils, CoilSensitivity, ImageSeq, KSpace};

pub const MAGIC: &[u8; 4] = b"UPCM";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
pub const MANIFEST_FILE: &str = "manifest.toml";

/// One phantom slice: fully sampled k-space and its coil maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSlice {
    pub id: usize,
    pub contrast: usize,
    pub kspace: KSpace,
    pub csm: CoilSensitivity,
}

impl PhantomSlice {
    /// Coil-combined image of the fully sampled data.
    pub fn ground_truth(&self) -> Result<ImageSeq> {
        reduce_coils(&ifft2c(self.kspace.data())?, &self.csm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRecord {
    pub file: String,
    pub offset: u64,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub id: usize,
    pub contrast: usize,
    /// `[n_coils, frames, height, width]`
    pub shape: [usize; 4],
    pub kspace: BlobRecord,
    pub csm: BlobRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub normalization: String,
    #[serde(default)]
    pub slices: Vec<SliceRecord>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub slices: Vec<PhantomSlice>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

/// Encode a complex array as a blob with header.
pub fn encode_blob(data: &Array4<Complex64>) -> Vec<u8> {
    let (nc, nt, h, w) = data.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 8);
    out.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, nc as u32, nt as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[0u8; 8]);
    for z in data.iter() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

/// Decode a blob; `record` names it in error messages.
pub fn decode_blob(bytes: &[u8], record: &str) -> Result<Array4<Complex64>> {
    let fail = |reason: String| Error::Record {
        record: record.to_string(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("blob of {} bytes is shorter than its header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FORMAT_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let dims = [word(1), word(2), word(3), word(4)].map(|d| d as usize);
    let n: usize = dims.iter().product();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * 8 {
        return Err(fail(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            n * 8
        )));
    }
    let vals: Vec<Complex64> = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), vals).map_err(|e| fail(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_blob(dir: &Path, file: &str, data: &Array4<Complex64>) -> Result<BlobRecord> {
    let bytes = encode_blob(data);
    let path = dir.join(file);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(BlobRecord {
        file: file.to_string(),
        offset: HEADER_LEN as u64,
        bytes: (bytes.len() - HEADER_LEN) as u64,
        sha256: sha256_hex(&bytes),
    })
}

fn read_blob(dir: &Path, rec: &BlobRecord, record: &str) -> Result<Array4<Complex64>> {
    let path = dir.join(&rec.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if sha256_hex(&bytes) != rec.sha256 {
        return Err(Error::Record {
            record: record.to_string(),
            reason: format!("checksum mismatch in {}", rec.file),
        });
    }
    decode_blob(&bytes, record)
}

/// Write slices plus manifest into `dir` (created if missing).
pub fn write_dataset(slices: &[PhantomSlice], dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(slices.len());
    for s in slices {
        let (nc, nt, h, w) = s.kspace.data().dim();
        let kspace = write_blob(dir, &format!("slice_{:04}.ksp", s.id), s.kspace.data())?;
        let csm4 = s.csm.data().clone().insert_axis(ndarray::Axis(1));
        let csm = write_blob(dir, &format!("slice_{:04}.csm", s.id), &csm4)?;
        records.push(SliceRecord {
            id: s.id,
            contrast: s.contrast,
            shape: [nc, nt, h, w],
            kspace,
            csm,
        });
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        normalization: "raw phantom units; normalize per slice before use".into(),
        slices: records,
    };
    let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Parse {
        path: dir.join(MANIFEST_FILE),
        reason: e.to_string(),
    })?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Parse {
            path,
            reason: format!("unsupported manifest version {}", manifest.version),
        });
    }
    Ok(manifest)
}

/// Read and verify every slice listed in `dir/manifest.toml`.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut slices = Vec::with_capacity(manifest.slices.len());
    for rec in &manifest.slices {
        let name = format!("slice {}", rec.id);
        let k = read_blob(dir, &rec.kspace, &name)?;
        let [nc, nt, h, w] = rec.shape;
        if k.dim() != (nc, nt, h, w) {
            return Err(Error::Record {
                record: name,
                reason: format!("k-space shape {:?} disagrees with manifest {:?}", k.dim(), rec.shape),
            });
        }
        let c = read_blob(dir, &rec.csm, &name)?;
        if c.dim() != (nc, 1, h, w) {
            return Err(Error::Record {
                record: name,
                reason: format!("coil map shape {:?} disagrees with manifest", c.dim()),
            });
        }
        let maps: Array3<Complex64> = c.index_axis_move(ndarray::Axis(1), 0);
        let csm = CoilSensitivity::from_maps(maps).map_err(|e| Error::Record {
            record: name.clone(),
            reason: e.to_string(),
        })?;
        slices.push(PhantomSlice {
            id: rec.id,
            contrast: rec.contrast,
            kspace: KSpace::new(k)?,
            csm,
        });
    }
    Ok(Dataset { manifest, slices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::generator::{make_cine_phantom, simulate_acquisition, PhantomParams};
    use crate::kspace::SamplingMask;

    fn slice(id: usize) -> PhantomSlice {
        let p = PhantomParams { frames: 4, height: 16, width: 16, n_coils: 2, seed: id as u64, ..Default::default() };
        let (x, s) = make_cine_phantom(&p).unwrap();
        let acq = simulate_acquisition(&x, &s, &SamplingMask::full(4, 16, 16)).unwrap();
        // round through f32 so the comparison after reading is exact
        let k = acq.full.data().mapv(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64));
        let c = s.data().mapv(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64));
        PhantomSlice { id, contrast: 0, kspace: KSpace::new(k).unwrap(), csm: CoilSensitivity::from_maps(c).unwrap() }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let slices = vec![slice(0), slice(1)];
        let m = write_dataset(&slices, dir.path()).unwrap();
        assert_eq!(m.slices.len(), 2);
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.slices, slices);
        assert_eq!(back.manifest, m);
    }

    #[test]
    fn header_layout() {
        let s = slice(0);
        let b = encode_blob(s.kspace.data());
        assert_eq!(&b[0..4], b"UPCM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 16);
        assert_eq!(u32::from_le_bytes(b[20..24].try_into().unwrap()), 16);
        assert_eq!(&b[24..32], &[0u8; 8]);
        assert_eq!(b.len(), 32 + 2 * 4 * 16 * 16 * 8);
        let first = s.kspace.data()[[0, 0, 0, 0]];
        assert_eq!(f32::from_le_bytes(b[32..36].try_into().unwrap()), first.re as f32);
        assert_eq!(f32::from_le_bytes(b[36..40].try_into().unwrap()), first.im as f32);
    }

    #[test]
    fn truncated_blob_names_the_slice() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&[slice(0), slice(7)], dir.path()).unwrap();
        let p = dir.path().join("slice_0007.ksp");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::Record { record, reason }) => {
                assert_eq!(record, "slice 7");
                assert!(reason.contains("checksum"));
            }
            other => panic!("expected a record error, got {other:?}"),
        }
    }

    #[test]
    fn single_byte_corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&[slice(3)], dir.path()).unwrap();
        let p = dir.path().join("slice_0003.csm");
        let mut bytes = fs::read(&p).unwrap();
        bytes[100] ^= 0x01;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Record { .. })));
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let mut b = encode_blob(slice(0).kspace.data());
        b[0] = b'X';
        assert!(decode_blob(&b, "x").is_err());
        let mut b = encode_blob(slice(0).kspace.data());
        b[4] = 9;
        let err = decode_blob(&b, "slice 0").unwrap_err().to_string();
        assert!(err.contains("slice 0") && err.contains("version"));
    }
}
