use std::fmt::Write as _;
use std::fs;

use upcmr::classical::evaluate;
use upcmr::training::{MeanStd, MetricStats};

use crate::error::CliError;
use crate::images::{read_any, read_recon, recon_dirs, ImageSet};
use crate::EvaluateArgs;

pub struct Row {
    pub method: String,
    pub trajectory: String,
    pub accel: Option<usize>,
    pub slices: usize,
    pub stats: MetricStats,
}

pub fn score(rec: &ImageSet, gnd: &ImageSet, crop: upcmr::classical::CropSpec) -> Result<Row, CliError> {
    let mut ms = Vec::with_capacity(rec.images.len());
    for (id, img) in &rec.images {
        let Some((_, reference)) = gnd.images.iter().find(|(g, _)| g == id) else {
            return Err(CliError::Data(format!("slice {id} has no reference image")));
        };
        ms.push(evaluate(img, reference, crop)?);
    }
    if ms.is_empty() {
        return Err(CliError::Data("reconstruction has no slices".into()));
    }
    Ok(Row {
        method: rec.method.clone(),
        trajectory: rec.trajectory.clone(),
        accel: rec.accel,
        slices: ms.len(),
        stats: MetricStats::of(&ms),
    })
}

fn pm(m: &MeanStd, digits: usize) -> String {
    format!("{:.digits$} ± {:.digits$}", m.mean, m.std)
}

pub fn render_table(rows: &[Row]) -> String {
    let mut s = format!(
        "{:<8} {:<14} {:>4} {:>6}  {:>16}  {:>16}  {:>20}\n",
        "method", "trajectory", "R", "slices", "PSNR (dB)", "SSIM", "NMSE"
    );
    for r in rows {
        let accel = r.accel.map_or("-".to_string(), |a| a.to_string());
        let _ = writeln!(
            s,
            "{:<8} {:<14} {:>4} {:>6}  {:>16}  {:>16}  {:>20}",
            r.method,
            r.trajectory,
            accel,
            r.slices,
            pm(&r.stats.psnr, 2),
            pm(&r.stats.ssim, 4),
            format!("{:.3e} ± {:.1e}", r.stats.nmse.mean, r.stats.nmse.std),
        );
    }
    s
}

pub fn render_csv(rows: &[Row]) -> String {
    let mut s = String::from("method,trajectory,accel,slices,psnr_mean,psnr_std,ssim_mean,ssim_std,nmse_mean,nmse_std\n");
    for r in rows {
        let accel = r.accel.map_or(String::new(), |a| a.to_string());
        let st = &r.stats;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.trajectory,
            accel,
            r.slices,
            st.psnr.mean,
            st.psnr.std,
            st.ssim.mean,
            st.ssim.std,
            st.nmse.mean,
            st.nmse.std
        );
    }
    s
}

pub fn run(a: &EvaluateArgs) -> Result<(), CliError> {
    let gnd = read_any(&a.gnd)?;
    let mut rows = Vec::new();
    for dir in recon_dirs(&a.rec)? {
        let rec = read_recon(&dir)?;
        rows.push(score(&rec, &gnd, a.crop)?);
    }
    print!("{}", render_table(&rows));
    if let Some(path) = &a.csv {
        fs::write(path, render_csv(&rows)).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
