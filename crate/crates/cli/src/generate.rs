//! `cbf generate`: build the train/holdout pilot datasets for a scenario.

use crate::artifacts::{write_manifest, Manifest, HOLDOUT_FILE, TRAIN_FILE};
use crate::config::ScenarioConfig;
use crate::CliError;
use cbf_core::dataset;
use std::path::{Path, PathBuf};

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    /// Scenario: a JSON config path or `builtin:los` / `builtin:nlos`.
    #[arg(long)]
    pub config: String,
    /// Output directory for `train.cbf`, `holdout.cbf` and `manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of training locations.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Overrides the number of held-out locations.
    #[arg(long)]
    pub n_holdout: Option<usize>,
}

pub fn run(args: &GenerateArgs) -> Result<(), CliError> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = args.n_holdout {
        cfg.n_holdout = n;
    }
    cfg.validate()?;
    let manifest = generate_into(&cfg, &args.out)?;
    eprintln!(
        "generated {} train + {} holdout samples (scene {}) in {}",
        manifest.n_train,
        manifest.n_holdout,
        manifest.scene_hash,
        args.out.display()
    );
    Ok(())
}

/// Generates both splits into `out` and returns the written manifest.
/// Train and holdout locations are drawn in one pass without replacement,
/// so the splits are disjoint; the split point is deterministic.
pub fn generate_into(cfg: &ScenarioConfig, out: &Path) -> Result<Manifest, CliError> {
    let gen = cfg.generation_config()?;
    let mut train = dataset::generate(&gen)?;
    let holdout = train.split_off(cfg.n_train);
    std::fs::create_dir_all(out)?;
    dataset::save(&train, &out.join(TRAIN_FILE))?;
    dataset::save(&holdout, &out.join(HOLDOUT_FILE))?;
    let manifest = Manifest {
        config: cfg.clone(),
        train_file: TRAIN_FILE.into(),
        holdout_file: HOLDOUT_FILE.into(),
        n_train: train.samples.len(),
        n_holdout: holdout.samples.len(),
        scene_hash: train.meta.scene_hash.clone(),
    };
    write_manifest(out, &manifest)?;
    Ok(manifest)
}
