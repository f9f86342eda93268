//! On-disk layout of experiment artifacts.
//!
//! A *data directory* (from `generate`) holds `train.cbf`, `holdout.cbf`
//! and `manifest.json`. A *model directory* (from `train`) holds one
//! `model_bs<i>.cbfm` checkpoint and `history_bs<i>.csv` per base station
//! plus `models.json` with the input scalings.

use crate::config::ScenarioConfig;
use crate::CliError;
use cbf_core::dataset::{self, Dataset};
use cbf_core::learning::{BsModel, EpochStats, FitOutcome, NormalizationSpec};
use cbf_core::mlp::{load_model, save_model};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const TRAIN_FILE: &str = "train.cbf";
pub const HOLDOUT_FILE: &str = "holdout.cbf";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODELS_FILE: &str = "models.json";

/// Written next to the datasets by `generate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ScenarioConfig,
    pub train_file: String,
    pub holdout_file: String,
    pub n_train: usize,
    pub n_holdout: usize,
    pub scene_hash: String,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("bad manifest {}: {e}", path.display())))?;
    Ok(manifest)
}

/// Loads the manifest and both splits of a data directory.
pub fn load_data_dir(dir: &Path) -> Result<(Manifest, Dataset, Dataset), CliError> {
    let manifest = read_manifest(dir)?;
    let train = dataset::load(&dir.join(&manifest.train_file))?;
    let holdout = dataset::load(&dir.join(&manifest.holdout_file))?;
    Ok((manifest, train, holdout))
}

/// Index of the checkpoints in a model directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n_bs: usize,
    /// Beam candidates the models were trained to report accuracy for.
    pub n_b: usize,
    /// Input scaling per base station, in index order.
    pub norms: Vec<NormalizationSpec>,
    pub epochs: usize,
}

fn model_file(bs: usize) -> String {
    format!("model_bs{bs}.cbfm")
}

fn history_file(bs: usize) -> String {
    format!("history_bs{bs}.csv")
}

/// Saves checkpoints, per-station training histories and the bundle index.
pub fn save_bundle(
    dir: &Path,
    outcomes: &[FitOutcome],
    n_b: usize,
    epochs: usize,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for outcome in outcomes {
        let bs = outcome.bs_model.bs_index;
        save_model(&outcome.bs_model.model, &dir.join(model_file(bs)))?;
        write_history_csv(&dir.join(history_file(bs)), &outcome.history)?;
    }
    let meta = BundleMeta {
        n_bs: outcomes.len(),
        n_b,
        norms: outcomes.iter().map(|o| o.bs_model.norm).collect(),
        epochs,
    };
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(dir.join(MODELS_FILE), text + "\n")?;
    Ok(())
}

/// Loads every per-station model of a bundle.
pub fn load_bundle(dir: &Path) -> Result<(Vec<BsModel>, BundleMeta), CliError> {
    let path = dir.join(MODELS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let meta: BundleMeta = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("bad bundle index {}: {e}", path.display())))?;
    if meta.norms.len() != meta.n_bs {
        return Err(CliError::Data(format!(
            "bundle index lists {} scalings for {} stations",
            meta.norms.len(),
            meta.n_bs
        )));
    }
    let mut models = Vec::with_capacity(meta.n_bs);
    for bs in 0..meta.n_bs {
        let model = load_model(&dir.join(model_file(bs)))?;
        models.push(BsModel {
            bs_index: bs,
            model,
            norm: meta.norms[bs],
        });
    }
    Ok((models, meta))
}

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss", "top1_acc", "top_nb_acc"])?;
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_loss.to_string(),
            e.top1_acc.to_string(),
            e.top_nb_acc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
