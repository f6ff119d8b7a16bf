use upcmr::phantom::{generate_slices, write_dataset, PhantomParams};

use crate::error::CliError;
use crate::GenDataArgs;

pub fn run(a: &GenDataArgs) -> Result<(), CliError> {
    if a.slices == 0 {
        return Err(CliError::Usage("--slices must be at least 1".into()));
    }
    let template = PhantomParams {
        frames: a.frames,
        height: a.size.0,
        width: a.size.1,
        n_coils: a.coils,
        ..Default::default()
    };
    template.validate()?;
    let slices = generate_slices(&template, a.slices, a.seed)?;
    let manifest = write_dataset(&slices, &a.out)?;
    println!("wrote {} records to {}", manifest.slices.len(), a.out.display());
    Ok(())
}
