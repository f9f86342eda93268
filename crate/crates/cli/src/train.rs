//! `cbf train`: fit one beam predictor per base station.

use crate::artifacts::{load_data_dir, save_bundle};
use crate::config::parse_input_norm;
use crate::CliError;
use cbf_core::dataset::{perturb_phase, to_rssi, Sample};
use cbf_core::learning::{fit_bs, FitOutcome, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Data directory produced by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints and histories (default: the data
    /// directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden layer widths, comma separated (e.g. `256,256,128`).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Input scaling: per-dataset, per-sample, per-base-station or
    /// per-element.
    #[arg(long)]
    pub input_norm: Option<String>,
    /// Train on raw rates instead of per-sample-normalised ones.
    #[arg(long)]
    pub no_output_norm: bool,
    /// Beam candidates refined by measurement (also the reported top-n
    /// accuracy).
    #[arg(long)]
    pub n_b: Option<usize>,
    /// Strip pilot phases: train on received magnitudes only.
    #[arg(long)]
    pub rssi: bool,
    /// Rotate each station's pilots by a random phase per sample
    /// (unsynchronised uplink collection).
    #[arg(long)]
    pub perturb_phase: bool,
}

/// Per-station lines of the JSON training summary.
#[derive(Debug, Serialize)]
struct StationSummary {
    bs_index: usize,
    final_train_loss: f64,
    final_val_loss: f64,
    top1_acc: f64,
    top_nb_acc: f64,
    excluded_train: usize,
    excluded_val: usize,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    stations: Vec<StationSummary>,
    mean_top1_acc: f64,
    mean_top_nb_acc: f64,
    epochs: usize,
    n_b: usize,
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let (manifest, train_ds, holdout_ds) = load_data_dir(&args.data)?;
    let mut tc = manifest.config.train_config();
    if let Some(seed) = args.seed {
        tc.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        tc.epochs = epochs;
    }
    if let Some(hidden) = &args.hidden {
        tc.hidden = hidden.clone();
    }
    if let Some(dropout) = args.dropout {
        if !(0.0..1.0).contains(&dropout) {
            return Err(CliError::Config("dropout must be in [0, 1)".into()));
        }
        tc.dropout = dropout;
    }
    if let Some(name) = &args.input_norm {
        tc.input_norm = parse_input_norm(name)?;
    }
    if args.no_output_norm {
        tc.output_norm = false;
    }
    if let Some(n_b) = args.n_b {
        tc.n_b = n_b;
    }

    let mut train_samples = train_ds.samples;
    let mut val_samples = holdout_ds.samples;
    apply_transforms(&mut train_samples, args.rssi, args.perturb_phase, tc.seed);
    apply_transforms(&mut val_samples, args.rssi, args.perturb_phase, tc.seed + 1);

    let n_bs = train_ds.meta.n_bs as usize;
    let outcomes = train_models(&train_samples, &val_samples, n_bs, &tc)?;
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    save_bundle(&out, &outcomes, tc.n_b, tc.epochs)?;
    let summary = summarize(&outcomes, &tc);
    std::fs::write(
        out.join("train_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    for s in &summary.stations {
        eprintln!(
            "bs {}: top1 {:.3} top{} {:.3} (val loss {:.5}, {} excluded)",
            s.bs_index, s.top1_acc, tc.n_b, s.top_nb_acc, s.final_val_loss, s.excluded_train
        );
    }
    eprintln!(
        "mean top1 {:.3}, mean top{} {:.3}",
        summary.mean_top1_acc, tc.n_b, summary.mean_top_nb_acc
    );
    Ok(())
}

/// Trains every station's predictor (in parallel; each fit is internally
/// deterministic, so the run is reproducible regardless of scheduling).
pub fn train_models(
    train: &[Sample],
    val: &[Sample],
    n_bs: usize,
    tc: &TrainConfig,
) -> Result<Vec<FitOutcome>, CliError> {
    (0..n_bs)
        .into_par_iter()
        .map(|bs| fit_bs(train, val, bs, tc).map_err(CliError::from))
        .collect()
}

/// Optionally strips phases (RSSI) and/or applies a per-sample random
/// station phase rotation. Both transforms are deterministic in the seed.
pub fn apply_transforms(samples: &mut [Sample], rssi: bool, perturb: bool, seed: u64) {
    if perturb {
        for (i, s) in samples.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            *s = perturb_phase(s, &mut rng);
        }
    }
    if rssi {
        for s in samples.iter_mut() {
            *s = to_rssi(s);
        }
    }
}

fn summarize(outcomes: &[FitOutcome], tc: &TrainConfig) -> TrainSummary {
    let stations: Vec<StationSummary> = outcomes
        .iter()
        .map(|o| {
            let last = o.history.last();
            StationSummary {
                bs_index: o.bs_model.bs_index,
                final_train_loss: last.map_or(f64::NAN, |e| e.train_loss),
                final_val_loss: last.map_or(f64::NAN, |e| e.val_loss),
                top1_acc: last.map_or(f64::NAN, |e| e.top1_acc),
                top_nb_acc: last.map_or(f64::NAN, |e| e.top_nb_acc),
                excluded_train: o.excluded_train,
                excluded_val: o.excluded_val,
            }
        })
        .collect();
    let n = stations.len().max(1) as f64;
    TrainSummary {
        mean_top1_acc: stations.iter().map(|s| s.top1_acc).sum::<f64>() / n,
        mean_top_nb_acc: stations.iter().map(|s| s.top_nb_acc).sum::<f64>() / n,
        epochs: tc.epochs,
        n_b: tc.n_b,
        stations,
    }
}
