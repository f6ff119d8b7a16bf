use std::fs;

use log::info;
use ndarray::Axis;
use upcmr::classical::{cg_sense, grappa_uniform, zero_filled, CgOptions, GrappaKernel};
use upcmr::kspace::{ImageSeq, Trajectory};
use upcmr::model::Upcmr;
use upcmr::phantom::read_dataset;
use upcmr::training::{prepare_sample, reconstruct, Sample};

use crate::error::CliError;
use crate::images::{peak, write_image, write_pgm, write_recon_manifest, ReconManifest, ReconSlice};
use crate::{Method, ReconArgs};

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Upcmr => "upcmr",
        Method::Zf => "zf",
        Method::Sense => "sense",
        Method::Grappa => "grappa",
    }
}

pub fn run(a: &ReconArgs) -> Result<(), CliError> {
    if a.method == Method::Grappa && a.trajectory != Trajectory::Uniform {
        return Err(CliError::Usage(
            "GRAPPA supports only the uniform trajectory (regular comb with calibration lines)".into(),
        ));
    }
    let model = match (a.method, &a.ckpt) {
        (Method::Upcmr, Some(dir)) => {
            let (model, meta) = Upcmr::load(dir)?;
            info!(
                "loaded {} cascades from {} (stage {}, epoch {})",
                model.config.n_cascades,
                dir.display(),
                meta.stage,
                meta.epoch
            );
            Some(model)
        }
        (Method::Upcmr, None) => return Err(CliError::Usage("--method upcmr needs --ckpt".into())),
        _ => None,
    };
    let ds = read_dataset(&a.data)?;
    if ds.is_empty() {
        return Err(CliError::Data(format!("{}: dataset has no slices", a.data.display())));
    }
    let pgm_dir = a.out.join("pgm");
    fs::create_dir_all(&pgm_dir).map_err(|e| CliError::io(&pgm_dir, e))?;

    let mut slices = Vec::with_capacity(ds.len());
    for (i, slice) in ds.slices.iter().enumerate() {
        let sample = prepare_sample(slice, a.trajectory, a.accel, a.seed.wrapping_add(i as u64), a.csm.into())?;
        let img = run_method(a, model.as_ref(), &sample)?;
        let raw = img.into_data().mapv(|z| z * sample.scale);
        if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CliError::Numerical(format!("slice {}: non-finite reconstruction", slice.id)));
        }
        let file = format!("slice_{:04}.img", slice.id);
        write_image(&a.out, &file, &raw)?;
        let mag = raw.mapv(|z| z.norm());
        let top = peak(&mag);
        for (t, frame) in mag.axis_iter(Axis(0)).enumerate() {
            write_pgm(&pgm_dir.join(format!("slice_{:04}_f{t:02}.pgm", slice.id)), &frame.to_owned(), top)?;
        }
        slices.push(ReconSlice {
            id: slice.id,
            file,
            scale: sample.scale,
        });
    }
    let manifest = ReconManifest {
        method: method_name(a.method).into(),
        trajectory: a.trajectory.name().into(),
        accel: a.accel.value(),
        seed: a.seed,
        csm: format!("{:?}", a.csm).to_lowercase(),
        slices,
    };
    write_recon_manifest(&a.out, &manifest)?;
    println!(
        "reconstructed {} slices ({} {}/R={}) into {}",
        manifest.slices.len(),
        manifest.method,
        manifest.trajectory,
        manifest.accel,
        a.out.display()
    );
    Ok(())
}

fn run_method(a: &ReconArgs, model: Option<&Upcmr>, s: &Sample) -> Result<ImageSeq, CliError> {
    Ok(match a.method {
        Method::Upcmr => reconstruct(model.expect("checked above"), s)?,
        Method::Zf => zero_filled(&s.y, &s.csm, &s.mask)?,
        Method::Sense => {
            let opts = CgOptions {
                max_iters: a.iters,
                ..Default::default()
            };
            cg_sense(&s.y, &s.csm, &s.mask, opts)?.image
        }
        Method::Grappa => {
            grappa_uniform(&s.y, s.mask.data(), s.mask.acs, a.accel.value(), GrappaKernel::default())?.image
        }
    })
}
