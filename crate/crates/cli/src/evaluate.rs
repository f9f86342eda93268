//! `cbf evaluate`: run trained predictors over a dataset split and account
//! for rates, beam accuracy and training overhead.
//!
//! Four selection policies are compared on every sample:
//! * `baseline` — exhaustive sweep: each station's measured-best beam,
//!   paid for with `N_tr` pilots;
//! * `top1` — the predictor's first choice, paid for with 2 pilots;
//! * `refined` — the measured-best among the predictor's top `n_b`
//!   candidates, paid for with `n_b + 1` pilots;
//! * `genie` — the joint search over beam tuples when it fits the budget
//!   (otherwise the disjoint baseline stands in), at zero overhead.

use crate::artifacts::{load_bundle, read_manifest, HOLDOUT_FILE, TRAIN_FILE};
use crate::CliError;
use cbf_core::beamforming::{
    beam_coherence_time, coordinated_rate, effective_rate, joint_exhaustive, mph_to_mps,
    overhead_fraction, BeamformingError,
};
use cbf_core::dataset::{self, location_channels, Dataset, GenerationConfig, Sample};
use cbf_core::geometry::occluded;
use cbf_core::learning::{argmax, predict_top, refine_candidates, BsModel};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Data directory produced by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Which split to evaluate: `holdout` or `train`.
    #[arg(long, default_value = "holdout")]
    pub split: String,
    /// Model directory (default: the data directory).
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Output directory for `results.csv` / `summary.csv` (default: the
    /// model directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// User speeds in mph, comma separated; one summary row per speed.
    #[arg(long, value_delimiter = ',')]
    pub speed_mph: Option<Vec<f64>>,
    /// Overrides the candidate count used for refinement.
    #[arg(long)]
    pub n_b: Option<usize>,
    /// Overrides the manifest's pilot duration (microseconds).
    #[arg(long)]
    pub pilot_time_us: Option<f64>,
    /// Overrides the largest joint search evaluated exactly.
    #[arg(long)]
    pub joint_budget: Option<f64>,
}

/// Evaluation knobs independent of the dataset.
#[derive(Debug, Clone)]
pub struct EvalParams {
    pub speeds_mph: Vec<f64>,
    pub pilot_time: f64,
    pub n_b: usize,
    pub joint_budget: f64,
}

/// Everything measured for one sample (rates are raw, before overhead).
#[derive(Debug, Clone)]
pub struct SampleEval {
    pub index: usize,
    pub pos: [f64; 3],
    pub tag: String,
    /// Any station's direct path is blocked at this location.
    pub shadowed: bool,
    /// Stations with a usable (non-zero) rate vector here.
    pub usable_bs: usize,
    pub top1_hits: usize,
    pub top_nb_hits: usize,
    pub rate_baseline: f64,
    pub rate_top1: f64,
    pub rate_refined: f64,
    pub rate_genie: f64,
    /// The genie rate came from the exact joint search.
    pub genie_exact: bool,
}

/// Aggregates at one user speed.
#[derive(Debug, Clone)]
pub struct SpeedSummary {
    pub speed_mph: f64,
    pub n_samples: usize,
    pub top1_acc: f64,
    pub top_nb_acc: f64,
    pub overhead_baseline: f64,
    pub overhead_refined: f64,
    pub mean_rate_baseline: f64,
    pub mean_rate_top1: f64,
    pub mean_rate_refined: f64,
    pub mean_rate_genie: f64,
    pub mean_eff_baseline: f64,
    pub mean_eff_top1: f64,
    pub mean_eff_refined: f64,
    /// Exhaustive-quality beams at prediction-phase overhead: the rate a
    /// perfect predictor would earn.
    pub mean_eff_oracle: f64,
    pub genie_exact_fraction: f64,
}

#[derive(Debug)]
pub struct EvalReport {
    pub rows: Vec<SampleEval>,
    pub speeds: Vec<SpeedSummary>,
    pub n_tr: usize,
    pub n_b: usize,
}

pub fn run(args: &EvaluateArgs) -> Result<(), CliError> {
    let manifest = read_manifest(&args.data)?;
    let split_file = match args.split.as_str() {
        "holdout" => HOLDOUT_FILE,
        "train" => TRAIN_FILE,
        other => {
            return Err(CliError::Config(format!(
                "unknown split '{other}' (expected holdout or train)"
            )))
        }
    };
    let ds = dataset::load(&args.data.join(split_file))?;
    let models_dir = args.models.clone().unwrap_or_else(|| args.data.clone());
    let (models, meta) = load_bundle(&models_dir)?;
    let params = EvalParams {
        speeds_mph: args
            .speed_mph
            .clone()
            .unwrap_or_else(|| vec![manifest.config.speed_mph]),
        pilot_time: args
            .pilot_time_us
            .map(|us| us * 1e-6)
            .unwrap_or_else(|| manifest.config.pilot_time()),
        n_b: args.n_b.unwrap_or(meta.n_b),
        joint_budget: args.joint_budget.unwrap_or(manifest.config.joint_budget),
    };
    let report = evaluate_dataset(&ds, &models, &params)?;
    let out = args.out.clone().unwrap_or(models_dir);
    std::fs::create_dir_all(&out)?;
    write_results_csv(&out.join("results.csv"), &report)?;
    write_summary_csv(&out.join("summary.csv"), &report)?;
    for s in &report.speeds {
        eprintln!(
            "{} mph: top1 {:.3} top{} {:.3} | eff rate: baseline {:.3} refined {:.3} (genie {:.3})",
            s.speed_mph,
            s.top1_acc,
            report.n_b,
            s.top_nb_acc,
            s.mean_eff_baseline,
            s.mean_eff_refined,
            s.mean_rate_genie
        );
    }
    Ok(())
}

/// Evaluates every sample of a dataset against the trained predictors.
pub fn evaluate_dataset(
    ds: &Dataset,
    models: &[BsModel],
    params: &EvalParams,
) -> Result<EvalReport, CliError> {
    let gen: GenerationConfig = ds.meta.generation_config()?;
    let n_bs = gen.scene.bs_positions.len();
    if models.len() != n_bs {
        return Err(CliError::Data(format!(
            "{} models for a {n_bs}-station scene",
            models.len()
        )));
    }
    let cb = gen.codebook();
    let n_tr = cb.len();
    let rows: Vec<SampleEval> = ds
        .samples
        .par_iter()
        .enumerate()
        .map(|(index, sample)| evaluate_sample(index, sample, &gen, &cb, models, params))
        .collect::<Result<_, CliError>>()?;
    for row in &rows {
        for (name, r) in [
            ("baseline", row.rate_baseline),
            ("top1", row.rate_top1),
            ("refined", row.rate_refined),
            ("genie", row.rate_genie),
        ] {
            if !r.is_finite() {
                return Err(CliError::Numeric(format!(
                    "non-finite {name} rate at sample {}",
                    row.index
                )));
            }
        }
    }
    let speeds = params
        .speeds_mph
        .iter()
        .map(|&mph| summarize_speed(&rows, mph, params, n_tr))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(EvalReport {
        rows,
        speeds,
        n_tr,
        n_b: params.n_b,
    })
}

fn evaluate_sample(
    index: usize,
    sample: &Sample,
    gen: &GenerationConfig,
    cb: &cbf_core::codebook::Codebook,
    models: &[BsModel],
    params: &EvalParams,
) -> Result<SampleEval, CliError> {
    let channels = location_channels(
        &gen.scene,
        &gen.array,
        &gen.ofdm,
        gen.pulse,
        gen.max_bounces,
        gen.max_paths,
        sample.user_pos,
    )?;
    let n_bs = channels.len();
    let mut baseline_beams = Vec::with_capacity(n_bs);
    let mut top1_beams = Vec::with_capacity(n_bs);
    let mut refined_beams = Vec::with_capacity(n_bs);
    let mut usable_bs = 0;
    let mut top1_hits = 0;
    let mut top_nb_hits = 0;
    for (bs, model) in models.iter().enumerate() {
        let rates = &sample.beam_rates[bs];
        let truth = argmax(rates).unwrap_or(0);
        baseline_beams.push(truth);
        let scores = model.predict(sample)?;
        let ranked = predict_top(&scores, params.n_b.max(1));
        top1_beams.push(ranked[0]);
        refined_beams.push(refine_candidates(&scores, rates, params.n_b));
        if rates.iter().any(|&r| r > 0.0) {
            usable_bs += 1;
            if ranked[0] == truth {
                top1_hits += 1;
            }
            if ranked.contains(&truth) {
                top_nb_hits += 1;
            }
        }
    }

    let rate_of = |beams: &[usize]| {
        let views: Vec<_> = beams.iter().map(|&p| cb.codewords.row(p)).collect();
        coordinated_rate(&channels, &views, &gen.ofdm)
    };
    let rate_baseline = rate_of(&baseline_beams);
    let rate_top1 = rate_of(&top1_beams);
    let rate_refined = rate_of(&refined_beams);
    let (rate_genie, genie_exact) = match joint_exhaustive(&channels, cb, &gen.ofdm, params.joint_budget)
    {
        Ok(joint) => (joint.rate, true),
        Err(BeamformingError::BudgetExceeded { .. }) => (rate_baseline, false),
        Err(other) => return Err(other.into()),
    };

    let shadowed = (0..n_bs)
        .any(|bs| occluded(gen.scene.bs_positions[bs], sample.user_pos, &gen.scene.blockers));

    Ok(SampleEval {
        index,
        pos: [sample.user_pos.x, sample.user_pos.y, sample.user_pos.z],
        tag: sample.scenario_tag.clone(),
        shadowed,
        usable_bs,
        top1_hits,
        top_nb_hits,
        rate_baseline,
        rate_top1,
        rate_refined,
        rate_genie,
        genie_exact,
    })
}

fn summarize_speed(
    rows: &[SampleEval],
    speed_mph: f64,
    params: &EvalParams,
    n_tr: usize,
) -> Result<SpeedSummary, CliError> {
    let t_b = beam_coherence_time(mph_to_mps(speed_mph))?;
    let t_baseline = n_tr as f64 * params.pilot_time;
    let t_refined = (params.n_b + 1) as f64 * params.pilot_time;
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&SampleEval) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
    let usable: usize = rows.iter().map(|r| r.usable_bs).sum();
    let acc = |hits: &dyn Fn(&SampleEval) -> usize| {
        rows.iter().map(|r| hits(r)).sum::<usize>() as f64 / usable.max(1) as f64
    };
    Ok(SpeedSummary {
        speed_mph,
        n_samples: rows.len(),
        top1_acc: acc(&|r| r.top1_hits),
        top_nb_acc: acc(&|r| r.top_nb_hits),
        overhead_baseline: overhead_fraction(t_baseline, t_b),
        overhead_refined: overhead_fraction(t_refined, t_b),
        mean_rate_baseline: mean(&|r| r.rate_baseline),
        mean_rate_top1: mean(&|r| r.rate_top1),
        mean_rate_refined: mean(&|r| r.rate_refined),
        mean_rate_genie: mean(&|r| r.rate_genie),
        mean_eff_baseline: mean(&|r| effective_rate(r.rate_baseline, t_baseline, t_b)),
        mean_eff_top1: mean(&|r| effective_rate(r.rate_top1, t_refined, t_b)),
        mean_eff_refined: mean(&|r| effective_rate(r.rate_refined, t_refined, t_b)),
        mean_eff_oracle: mean(&|r| effective_rate(r.rate_baseline, t_refined, t_b)),
        genie_exact_fraction: mean(&|r| if r.genie_exact { 1.0 } else { 0.0 }),
    })
}

pub fn write_results_csv(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "index",
        "x",
        "y",
        "z",
        "tag",
        "shadowed",
        "usable_bs",
        "top1_hits",
        "top_nb_hits",
        "rate_baseline",
        "rate_top1",
        "rate_refined",
        "rate_genie",
        "genie_exact",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.index.to_string(),
            r.pos[0].to_string(),
            r.pos[1].to_string(),
            r.pos[2].to_string(),
            r.tag.clone(),
            (r.shadowed as u8).to_string(),
            r.usable_bs.to_string(),
            r.top1_hits.to_string(),
            r.top_nb_hits.to_string(),
            r.rate_baseline.to_string(),
            r.rate_top1.to_string(),
            r.rate_refined.to_string(),
            r.rate_genie.to_string(),
            (r.genie_exact as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "speed_mph",
        "n_samples",
        "n_tr",
        "n_b",
        "top1_acc",
        "top_nb_acc",
        "overhead_baseline",
        "overhead_refined",
        "mean_rate_baseline",
        "mean_rate_top1",
        "mean_rate_refined",
        "mean_rate_genie",
        "mean_eff_baseline",
        "mean_eff_top1",
        "mean_eff_refined",
        "mean_eff_oracle",
        "genie_exact_fraction",
    ])?;
    for s in &report.speeds {
        w.write_record([
            s.speed_mph.to_string(),
            s.n_samples.to_string(),
            report.n_tr.to_string(),
            report.n_b.to_string(),
            s.top1_acc.to_string(),
            s.top_nb_acc.to_string(),
            s.overhead_baseline.to_string(),
            s.overhead_refined.to_string(),
            s.mean_rate_baseline.to_string(),
            s.mean_rate_top1.to_string(),
            s.mean_rate_refined.to_string(),
            s.mean_rate_genie.to_string(),
            s.mean_eff_baseline.to_string(),
            s.mean_eff_top1.to_string(),
            s.mean_eff_refined.to_string(),
            s.mean_eff_oracle.to_string(),
            s.genie_exact_fraction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
