//! `cbf ablate`: targeted studies of individual design choices.
//!
//! * `normalization` — every input-scaling strategy with per-sample output
//!   normalisation on and off, reporting overall and shadowed-location
//!   accuracy.
//! * `sync` — synchronised pilots vs per-station random phases vs
//!   magnitude-only (RSSI) inputs.
//! * `adaptability` — a staged timeline alternating between the clear and
//!   blocked scenes, warm-starting the models at each hand-off.

use crate::config::{input_norm_name, ScenarioConfig};
use crate::generate::generate_into;
use crate::train::{apply_transforms, train_models};
use crate::{artifacts, CliError};
use cbf_core::dataset::Sample;
use cbf_core::geometry::{occluded, Scene};
use cbf_core::learning::{
    argmax, feature_matrix, fit_bs_warm, predict_top, BsModel, InputNormStrategy,
};
use clap::ValueEnum;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    Normalization,
    Sync,
    Adaptability,
}

#[derive(Debug, clap::Args)]
pub struct AblateArgs {
    /// Scenario: a JSON config path or `builtin:los` / `builtin:nlos`.
    /// The adaptability study alternates between `builtin:los` and
    /// `builtin:nlos` regardless.
    #[arg(long)]
    pub config: String,
    #[arg(long, value_enum)]
    pub which: Ablation,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the training epochs per run.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &AblateArgs) -> Result<(), CliError> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.model.epochs = epochs;
    }
    cfg.validate()?;
    match args.which {
        Ablation::Normalization => normalization_study(&cfg, &args.out),
        Ablation::Sync => sync_study(&cfg, &args.out),
        Ablation::Adaptability => adaptability_study(&cfg, &args.out),
    }
}

/// Accuracy of a set of per-station models, split into all pairs, pairs
/// whose direct path is blocked, and clear pairs. A (sample, station) pair
/// counts when the station has a usable rate vector there.
pub struct AccuracyBreakdown {
    pub top1: f64,
    pub top_nb: f64,
    pub shadowed_top1: f64,
    pub clear_top1: f64,
    pub shadowed_pairs: usize,
}

pub fn accuracy_breakdown(
    models: &[BsModel],
    samples: &[Sample],
    scene: &Scene,
    n_b: usize,
) -> Result<AccuracyBreakdown, CliError> {
    let mut hits = 0usize;
    let mut nb_hits = 0usize;
    let mut pairs = 0usize;
    let mut shadowed_hits = 0usize;
    let mut shadowed_pairs = 0usize;
    let mut clear_hits = 0usize;
    for model in models {
        let bs = model.bs_index;
        let kept: Vec<&Sample> = samples
            .iter()
            .filter(|s| s.beam_rates[bs].iter().any(|&r| r > 0.0))
            .collect();
        if kept.is_empty() {
            continue;
        }
        let features = feature_matrix(&kept, &model.norm).map_err(CliError::from)?;
        let pred = model.model.forward(&features.view());
        for (row, sample) in kept.iter().enumerate() {
            let truth = argmax(&sample.beam_rates[bs]).unwrap_or(0);
            let ranked = predict_top(pred.row(row).as_slice().unwrap(), n_b.max(1));
            let top1 = ranked[0] == truth;
            pairs += 1;
            hits += top1 as usize;
            nb_hits += ranked.contains(&truth) as usize;
            let blocked = occluded(scene.bs_positions[bs], sample.user_pos, &scene.blockers);
            if blocked {
                shadowed_pairs += 1;
                shadowed_hits += top1 as usize;
            } else {
                clear_hits += top1 as usize;
            }
        }
    }
    let frac = |num: usize, den: usize| num as f64 / den.max(1) as f64;
    Ok(AccuracyBreakdown {
        top1: frac(hits, pairs),
        top_nb: frac(nb_hits, pairs),
        shadowed_top1: frac(shadowed_hits, shadowed_pairs),
        clear_top1: frac(clear_hits, pairs - shadowed_pairs),
        shadowed_pairs,
    })
}

fn normalization_study(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let data_dir = out.join("data");
    generate_into(cfg, &data_dir)?;
    let (manifest, train_ds, holdout_ds) = artifacts::load_data_dir(&data_dir)?;
    let scene = manifest.config.resolve_scene()?;
    let n_bs = train_ds.meta.n_bs as usize;

    let mut w = csv::Writer::from_path(out.join("normalization.csv"))?;
    w.write_record([
        "input_norm",
        "output_norm",
        "top1_acc",
        "top_nb_acc",
        "shadowed_top1",
        "clear_top1",
        "shadowed_pairs",
    ])?;
    for strategy in [
        InputNormStrategy::PerDataset,
        InputNormStrategy::PerSample,
        InputNormStrategy::PerBaseStation,
        InputNormStrategy::PerElement,
    ] {
        for output_norm in [true, false] {
            let mut tc = cfg.train_config();
            tc.input_norm = strategy;
            tc.output_norm = output_norm;
            let outcomes = train_models(&train_ds.samples, &holdout_ds.samples, n_bs, &tc)?;
            let models: Vec<_> = outcomes.into_iter().map(|o| o.bs_model).collect();
            let b = accuracy_breakdown(&models, &holdout_ds.samples, &scene, tc.n_b)?;
            w.write_record([
                input_norm_name(strategy).to_string(),
                (output_norm as u8).to_string(),
                b.top1.to_string(),
                b.top_nb.to_string(),
                b.shadowed_top1.to_string(),
                b.clear_top1.to_string(),
                b.shadowed_pairs.to_string(),
            ])?;
            eprintln!(
                "{} / output_norm={}: top1 {:.3} (shadowed {:.3}, clear {:.3})",
                input_norm_name(strategy),
                output_norm,
                b.top1,
                b.shadowed_top1,
                b.clear_top1
            );
        }
    }
    w.flush()?;
    Ok(())
}

fn sync_study(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let data_dir = out.join("data");
    generate_into(cfg, &data_dir)?;
    let (manifest, train_ds, holdout_ds) = artifacts::load_data_dir(&data_dir)?;
    let scene = manifest.config.resolve_scene()?;
    let n_bs = train_ds.meta.n_bs as usize;
    let tc = cfg.train_config();

    let mut w = csv::Writer::from_path(out.join("sync.csv"))?;
    w.write_record(["variant", "top1_acc", "top_nb_acc"])?;
    for (variant, rssi, perturb) in [
        ("synchronised", false, false),
        ("random-phase", false, true),
        ("rssi", true, false),
    ] {
        let mut train = train_ds.samples.clone();
        let mut holdout = holdout_ds.samples.clone();
        apply_transforms(&mut train, rssi, perturb, tc.seed);
        apply_transforms(&mut holdout, rssi, perturb, tc.seed + 1);
        let outcomes = train_models(&train, &holdout, n_bs, &tc)?;
        let models: Vec<_> = outcomes.into_iter().map(|o| o.bs_model).collect();
        let b = accuracy_breakdown(&models, &holdout, &scene, tc.n_b)?;
        w.write_record([
            variant.to_string(),
            b.top1.to_string(),
            b.top_nb.to_string(),
        ])?;
        eprintln!("{variant}: top1 {:.3} top{} {:.3}", b.top1, tc.n_b, b.top_nb);
    }
    w.flush()?;
    Ok(())
}

fn adaptability_study(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let mut los_cfg = ScenarioConfig::desk_los();
    let mut nlos_cfg = ScenarioConfig::desk_nlos();
    // Carry the tuning (sizes, model, seed) from the given config; only the
    // scene alternates.
    for c in [&mut los_cfg, &mut nlos_cfg] {
        c.grid = cfg.grid.clone();
        c.n_train = cfg.n_train;
        c.n_holdout = cfg.n_holdout;
        c.seed = cfg.seed;
        c.model = cfg.model.clone();
        c.n_b = cfg.n_b;
        c.k_dl = cfg.k_dl;
        c.array = cfg.array.clone();
        c.ofdm = cfg.ofdm.clone();
        c.oversampling = cfg.oversampling;
        c.max_bounces = cfg.max_bounces;
        c.max_paths = cfg.max_paths;
    }
    let los_dir = out.join("los");
    let nlos_dir = out.join("nlos");
    generate_into(&los_cfg, &los_dir)?;
    generate_into(&nlos_cfg, &nlos_dir)?;
    let (_, los_train, los_holdout) = artifacts::load_data_dir(&los_dir)?;
    let (_, nlos_train, nlos_holdout) = artifacts::load_data_dir(&nlos_dir)?;
    let los_scene = los_cfg.resolve_scene()?;
    let nlos_scene = nlos_cfg.resolve_scene()?;
    let n_bs = los_train.meta.n_bs as usize;

    let mut w = csv::Writer::from_path(out.join("adaptability.csv"))?;
    w.write_record([
        "stage",
        "trained_on",
        "epochs_total",
        "top1_los",
        "top1_nlos",
    ])?;
    let stages = [
        ("los", &los_train),
        ("nlos", &nlos_train),
        ("los", &los_train),
        ("nlos", &nlos_train),
    ];
    let mut models: Option<Vec<BsModel>> = None;
    let mut epochs_total = 0usize;
    for (stage, (name, train_ds)) in stages.iter().enumerate() {
        let mut tc = cfg.train_config();
        // Distinct shuffle/dropout streams per stage.
        tc.seed = cfg.seed.wrapping_add(stage as u64);
        let val = if *name == "los" {
            &los_holdout.samples
        } else {
            &nlos_holdout.samples
        };
        let outcomes: Vec<_> = match models.take() {
            None => train_models(&train_ds.samples, val, n_bs, &tc)?,
            Some(prev) => prev
                .into_par_iter()
                .map(|m| {
                    fit_bs_warm(&train_ds.samples, val, &tc, m).map_err(CliError::from)
                })
                .collect::<Result<_, _>>()?,
        };
        epochs_total += tc.epochs;
        let next: Vec<_> = outcomes.into_iter().map(|o| o.bs_model).collect();
        let los_acc = accuracy_breakdown(&next, &los_holdout.samples, &los_scene, tc.n_b)?;
        let nlos_acc = accuracy_breakdown(&next, &nlos_holdout.samples, &nlos_scene, tc.n_b)?;
        w.write_record([
            stage.to_string(),
            name.to_string(),
            epochs_total.to_string(),
            los_acc.top1.to_string(),
            nlos_acc.top1.to_string(),
        ])?;
        eprintln!(
            "stage {stage} ({name}, {epochs_total} epochs): top1 los {:.3} nlos {:.3}",
            los_acc.top1, nlos_acc.top1
        );
        models = Some(next);
    }
    w.flush()?;
    Ok(())
}
