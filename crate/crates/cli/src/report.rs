use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, Axis};
use upcmr::classical::zero_filled;
use upcmr::kspace::{AccelFactor, Trajectory, ACCEL_FACTORS};
use upcmr::model::Upcmr;
use upcmr::phantom::read_dataset;
use upcmr::training::{prepare_sample, read_metric_log, reconstruct, CsmSource, EpochRecord, ValidationTable};

use crate::error::CliError;
use crate::images::write_pgm;
use crate::ReportArgs;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const MONTAGE_ACCEL: usize = 8;

fn label(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Training loss against global epoch, one line per log.
pub fn loss_curve_svg(runs: &[(String, Vec<EpochRecord>)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let x_max = runs
        .iter()
        .flat_map(|(_, r)| r.iter().map(|e| e.global_epoch as f64))
        .fold(1.0, f64::max);
    let ys = runs.iter().flat_map(|(_, r)| r.iter().map(|e| e.loss_total));
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if y_hi > y_lo { y_hi - y_lo } else { 1.0 };
    let px = |x: f64| pad + (x / x_max) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - ((y - y_lo) / span) * (h - 2.0 * pad);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{lx}\" text-anchor=\"middle\">epoch</text>\n\
         <text x=\"12\" y=\"{cy}\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">training loss</text>\n\
         <text x=\"{pad}\" y=\"{lx}\">0</text><text x=\"{r}\" y=\"{lx}\" text-anchor=\"end\">{x_max}</text>\n\
         <text x=\"{yl}\" y=\"{b}\" text-anchor=\"end\">{y_lo:.3}</text>\n\
         <text x=\"{yl}\" y=\"{pad}\" text-anchor=\"end\">{y_hi:.3}</text>\n",
        b = h - pad,
        r = w - pad,
        cx = w / 2.0,
        cy = h / 2.0,
        lx = h - pad + 20.0,
        yl = pad - 4.0,
    );
    for (i, (name, recs)) in runs.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = recs
            .iter()
            .map(|e| format!("{:.1},{:.1}", px(e.global_epoch as f64), py(e.loss_total)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{ly}\" fill=\"{colour}\" text-anchor=\"end\">{}</text>",
            w - pad,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Trajectory × acceleration grid of mean PSNR, colour-coded.
pub fn heatmap_svg(title: &str, table: &ValidationTable) -> String {
    let (cw, ch, left, top) = (70.0, 40.0, 110.0, 50.0);
    let w = left + cw * ACCEL_FACTORS.len() as f64 + 20.0;
    let h = top + ch * 3.0 + 20.0;
    let values: Vec<f64> = table.cells.iter().map(|c| c.method.psnr.mean).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{left}\" y=\"18\">{} : PSNR (dB)</text>\n",
        escape(title)
    );
    for (j, r) in ACCEL_FACTORS.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">R={r}</text>",
            left + cw * (j as f64 + 0.5),
            top - 8.0
        );
    }
    for (i, t) in Trajectory::ALL.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t}</text>", left - 8.0, y + ch / 2.0 + 4.0);
        for (j, &r) in ACCEL_FACTORS.iter().enumerate() {
            let Some(cell) = table.cell(*t, r) else { continue };
            let v = cell.method.psnr.mean;
            let f = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let x = left + cw * j as f64;
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{}\" stroke=\"white\"/>\n\
                 <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{v:.1}</text>",
                ramp(f),
                x + cw / 2.0,
                y + ch / 2.0 + 4.0,
                if f > 0.5 { "black" } else { "white" },
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Dark blue to yellow.
fn ramp(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(40.0, 250.0), lerp(30.0, 230.0), lerp(110.0, 40.0))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Middle frame of the first slice: reference, zero filling and, with a
/// checkpoint, the model; one row per trajectory.
fn montage(data: &Path, ckpt: Option<&Path>, seed: u64) -> Result<Array2<f64>, CliError> {
    let ds = read_dataset(data)?;
    let slice = ds
        .slices
        .first()
        .ok_or_else(|| CliError::Data(format!("{}: dataset has no slices", data.display())))?;
    let model = ckpt.map(Upcmr::load).transpose()?.map(|(m, _)| m);
    let accel = AccelFactor::new(MONTAGE_ACCEL)?;
    let (_, t, h, w) = slice.kspace.data().dim();
    let cols = if model.is_some() { 3 } else { 2 };
    let mut out = Array2::zeros((3 * h, cols * w));
    let mid = t / 2;
    for (i, &traj) in Trajectory::ALL.iter().enumerate() {
        let s = prepare_sample(slice, traj, accel, seed, CsmSource::Reference)?;
        let mut panels = vec![s.gnd.magnitude(), zero_filled(&s.y, &s.csm, &s.mask)?.magnitude()];
        if let Some(m) = &model {
            panels.push(reconstruct(m, &s)?.magnitude());
        }
        for (j, p) in panels.iter().enumerate() {
            out.slice_mut(s![i * h..(i + 1) * h, j * w..(j + 1) * w])
                .assign(&p.index_axis(Axis(0), mid));
        }
    }
    Ok(out)
}

pub fn run(a: &ReportArgs) -> Result<(), CliError> {
    let mut runs = Vec::with_capacity(a.logs.len());
    for path in &a.logs {
        let recs = read_metric_log(path)?;
        if recs.is_empty() {
            return Err(CliError::Data(format!("{}: no records", path.display())));
        }
        runs.push((label(path), recs));
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let write = |name: &str, text: String| {
        let p = a.out.join(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    };
    write("loss_curves.svg", loss_curve_svg(&runs))?;
    let mut written = vec!["loss_curves.svg".to_string()];
    for (name, recs) in &runs {
        if let Some(table) = recs.iter().rev().find_map(|r| r.validation.as_ref()) {
            let file = format!("psnr_heatmap_{name}.svg");
            write(&file, heatmap_svg(name, table))?;
            written.push(file);
        }
    }
    if let Some(data) = &a.data {
        let img = montage(data, a.ckpt.as_deref(), a.seed)?;
        let top = img.iter().copied().fold(0.0, f64::max);
        write_pgm(&a.out.join("montage.pgm"), &img, top)?;
        written.push("montage.pgm".into());
    }
    println!("wrote {} in {}", written.join(", "), a.out.display());
    Ok(())
}
