//! `cbf sweep`: run the full generate/train/evaluate pipeline across one
//! experiment axis and collect the headline numbers in `sweep.csv`.

use crate::config::ScenarioConfig;
use crate::evaluate::{evaluate_dataset, EvalParams, SpeedSummary};
use crate::generate::generate_into;
use crate::train::train_models;
use crate::{artifacts, CliError};
use clap::ValueEnum;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    /// Training set size (locations).
    DatasetSize,
    /// User speed in mph (models are trained once; only timing changes).
    Speed,
    /// Horizontal antenna count per station.
    Antennas,
    /// Uplink pilot power in dBm.
    Power,
}

impl SweepAxis {
    fn slug(self) -> &'static str {
        match self {
            SweepAxis::DatasetSize => "dataset_size",
            SweepAxis::Speed => "speed",
            SweepAxis::Antennas => "antennas",
            SweepAxis::Power => "power",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Scenario: a JSON config path or `builtin:los` / `builtin:nlos`.
    #[arg(long)]
    pub config: String,
    /// Output directory; one subdirectory per axis point plus `sweep.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Overrides the training epochs (sweeps often use fewer).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &SweepArgs) -> Result<(), CliError> {
    let mut base = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        base.model.epochs = epochs;
    }
    base.validate()?;
    if args.values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }

    let rows = if args.axis == SweepAxis::Speed {
        // One dataset and one set of models serve every speed.
        let summaries = run_point(&base, &args.out.join("base"), &args.values)?;
        summaries
            .into_iter()
            .map(|s| (s.speed_mph, s))
            .collect::<Vec<_>>()
    } else {
        let mut rows = Vec::with_capacity(args.values.len());
        for &value in &args.values {
            let cfg = apply_axis(&base, args.axis, value)?;
            let dir = args
                .out
                .join(format!("{}_{}", args.axis.slug(), slug_value(value)));
            let summaries = run_point(&cfg, &dir, &[cfg.speed_mph])?;
            rows.push((value, summaries.into_iter().next().expect("one speed")));
        }
        rows
    };

    std::fs::create_dir_all(&args.out)?;
    write_sweep_csv(&args.out.join("sweep.csv"), args.axis, &rows)?;
    for (value, s) in &rows {
        eprintln!(
            "{} = {}: top1 {:.3}, eff baseline {:.3}, eff refined {:.3}",
            args.axis.slug(),
            value,
            s.top1_acc,
            s.mean_eff_baseline,
            s.mean_eff_refined
        );
    }
    Ok(())
}

/// Generate, train and evaluate one configuration; returns one summary per
/// requested speed.
fn run_point(
    cfg: &ScenarioConfig,
    dir: &Path,
    speeds: &[f64],
) -> Result<Vec<SpeedSummary>, CliError> {
    generate_into(cfg, dir)?;
    let (_, train_ds, holdout_ds) = artifacts::load_data_dir(dir)?;
    let tc = cfg.train_config();
    let outcomes = train_models(&train_ds.samples, &holdout_ds.samples, train_ds.meta.n_bs as usize, &tc)?;
    artifacts::save_bundle(dir, &outcomes, tc.n_b, tc.epochs)?;
    let models: Vec<_> = outcomes.into_iter().map(|o| o.bs_model).collect();
    let params = EvalParams {
        speeds_mph: speeds.to_vec(),
        pilot_time: cfg.pilot_time(),
        n_b: cfg.n_b,
        joint_budget: cfg.joint_budget,
    };
    let report = evaluate_dataset(&holdout_ds, &models, &params)?;
    crate::evaluate::write_results_csv(&dir.join("results.csv"), &report)?;
    crate::evaluate::write_summary_csv(&dir.join("summary.csv"), &report)?;
    Ok(report.speeds)
}

fn apply_axis(base: &ScenarioConfig, axis: SweepAxis, value: f64) -> Result<ScenarioConfig, CliError> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::DatasetSize => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::Config(format!(
                    "dataset-size values must be positive integers, got {value}"
                )));
            }
            cfg.n_train = value as usize;
        }
        SweepAxis::Speed => cfg.speed_mph = value,
        SweepAxis::Antennas => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::Config(format!(
                    "antenna counts must be positive integers, got {value}"
                )));
            }
            cfg.array.m_y = value as usize;
        }
        SweepAxis::Power => cfg.uplink_power_dbm = value,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// File-system-safe rendering of an axis value (`-10.5` -> `m10p5`).
fn slug_value(value: f64) -> String {
    let mut s = format!("{value}");
    s = s.replace('-', "m").replace('.', "p");
    s
}

fn write_sweep_csv(
    path: &Path,
    axis: SweepAxis,
    rows: &[(f64, SpeedSummary)],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "axis",
        "value",
        "top1_acc",
        "top_nb_acc",
        "mean_eff_baseline",
        "mean_eff_refined",
        "mean_eff_oracle",
        "mean_rate_genie",
        "overhead_baseline",
        "overhead_refined",
    ])?;
    for (value, s) in rows {
        w.write_record([
            axis.slug().to_string(),
            value.to_string(),
            s.top1_acc.to_string(),
            s.top_nb_acc.to_string(),
            s.mean_eff_baseline.to_string(),
            s.mean_eff_refined.to_string(),
            s.mean_eff_oracle.to_string(),
            s.mean_rate_genie.to_string(),
            s.overhead_baseline.to_string(),
            s.overhead_refined.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
