//! Reconstruction directories and greyscale image files.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use upcmr::phantom::dataset::{decode_blob, encode_blob, read_manifest, MANIFEST_FILE};
use upcmr::phantom::read_dataset;

use crate::error::CliError;

pub const RECON_FILE: &str = "recon.toml";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconSlice {
    pub id: usize,
    pub file: String,
    /// Normalization factor divided out before reconstruction.
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconManifest {
    pub method: String,
    pub trajectory: String,
    pub accel: usize,
    pub seed: u64,
    pub csm: String,
    pub slices: Vec<ReconSlice>,
}

/// Magnitude sequences keyed by slice id, with a label for the table.
pub struct ImageSet {
    pub method: String,
    pub trajectory: String,
    pub accel: Option<usize>,
    pub images: Vec<(usize, Array3<f64>)>,
}

pub fn is_recon_dir(dir: &Path) -> bool {
    dir.join(RECON_FILE).is_file()
}

pub fn is_dataset_dir(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).is_file()
}

/// Write one complex image sequence `[T,H,W]` as a blob.
pub fn write_image(dir: &Path, name: &str, img: &Array3<Complex64>) -> Result<(), CliError> {
    let path = dir.join(name);
    let bytes = encode_blob(&img.clone().insert_axis(Axis(0)));
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}

pub fn read_recon_manifest(dir: &Path) -> Result<ReconManifest, CliError> {
    let path = dir.join(RECON_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_recon_manifest(dir: &Path, m: &ReconManifest) -> Result<(), CliError> {
    let path = dir.join(RECON_FILE);
    let text = toml::to_string_pretty(m).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn read_recon(dir: &Path) -> Result<ImageSet, CliError> {
    let m = read_recon_manifest(dir)?;
    let mut images = Vec::with_capacity(m.slices.len());
    for s in &m.slices {
        let path = dir.join(&s.file);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let data = decode_blob(&bytes, &s.file)?;
        if data.dim().0 != 1 {
            return Err(CliError::Data(format!("{}: expected a single image sequence", path.display())));
        }
        images.push((s.id, data.index_axis(Axis(0), 0).mapv(|z| z.norm())));
    }
    Ok(ImageSet {
        method: m.method,
        trajectory: m.trajectory,
        accel: Some(m.accel),
        images,
    })
}

/// Fully sampled coil-combined magnitudes of a dataset.
pub fn read_reference(dir: &Path) -> Result<ImageSet, CliError> {
    read_manifest(dir)?;
    let ds = read_dataset(dir)?;
    let mut images = Vec::with_capacity(ds.len());
    for s in &ds.slices {
        images.push((s.id, s.ground_truth()?.magnitude()));
    }
    Ok(ImageSet {
        method: "reference".into(),
        trajectory: "-".into(),
        accel: None,
        images,
    })
}

/// A dataset or a reconstruction directory.
pub fn read_any(dir: &Path) -> Result<ImageSet, CliError> {
    if is_recon_dir(dir) {
        read_recon(dir)
    } else if is_dataset_dir(dir) {
        read_reference(dir)
    } else {
        Err(CliError::Data(format!(
            "{}: neither a dataset ({MANIFEST_FILE}) nor a reconstruction ({RECON_FILE})",
            dir.display()
        )))
    }
}

/// `dir` itself if it is a reconstruction, else its reconstruction
/// subdirectories in name order.
pub fn recon_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if is_recon_dir(dir) {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_recon_dir(p))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(format!("{}: no reconstructions found", dir.display())));
    }
    Ok(dirs)
}

/// 8-bit binary PGM, scaled so `peak` maps to 255.
pub fn pgm_bytes(img: &Array2<f64>, peak: f64) -> Vec<u8> {
    let (h, w) = img.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let k = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    out.extend(img.iter().map(|&v| (v * k).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn write_pgm(path: &Path, img: &Array2<f64>, peak: f64) -> Result<(), CliError> {
    fs::write(path, pgm_bytes(img, peak)).map_err(|e| CliError::io(path, e))
}

pub fn peak(img: &Array3<f64>) -> f64 {
    img.iter().copied().fold(0.0, f64::max)
}
