use std::path::Path;

use voxnet::phantom::{generate, oracle_classify, write_dataset};
use voxnet::stats::roc_auc;

use crate::config::PhantomFile;
use crate::error::{CliResult, Context};
use crate::io::prepare_out_dir;

pub fn run(spec_path: &Path, out: &Path, seed: Option<u64>, force: bool) -> CliResult<()> {
    let mut spec = PhantomFile::load(spec_path)?.resolve();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate().context(spec_path.display())?;
    prepare_out_dir(out, force)?;
    let subjects = generate(&spec)?;
    let manifest = write_dataset(out, &subjects).context(out.display())?;
    let oracle = roc_auc(&oracle_classify(&subjects, &spec)?)?.auc;
    let count = |l: usize| subjects.iter().filter(|s| s.label == Some(l)).count();
    println!("manifest = {}", manifest.display());
    println!("class_0 = {}", count(0));
    println!("class_1 = {}", count(1));
    println!("oracle_auc = {oracle}");
    Ok(())
}
