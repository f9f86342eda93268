//! Supervised beam prediction on top of the dataset and network modules.
//!
//! Each base station gets its own regression network. The input to every
//! network is the full set of omnidirectional uplink pilots observed across
//! all base stations (interleaved real/imaginary parts, `2 * N * K_DL`
//! values, or `N * K_DL` magnitudes for RSSI-only data); the target is that
//! base station's per-beam achievable-rate vector. At prediction time each
//! network proposes its top `n_b` beam candidates, the candidates are
//! refined against measured rates, and the winners feed the coordinated
//! downlink transmission.

use crate::dataset::Sample;
use crate::mlp::{sum_squared_error, Adam, MlpModel};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("dataset has no usable samples")]
    EmptyDataset,
    #[error("all pilot observations are zero; cannot normalise inputs")]
    AllZeroInputs,
    #[error("sample {index} has all-zero rates; cannot normalise outputs")]
    AllZeroRates { index: usize },
    #[error("feature width mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
}

/// How pilot features are scaled before they enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputNormStrategy {
    /// Divide everything by the largest pilot magnitude in the training
    /// set (the scale is remembered for later predictions).
    PerDataset,
    /// Divide each sample by its own largest pilot magnitude.
    PerSample,
    /// Divide each base station's block of a sample by that block's
    /// largest magnitude.
    PerBaseStation,
    /// Divide each complex entry by its own magnitude (phase-only
    /// features; zero entries stay zero).
    PerElement,
}

/// A fitted input scaling: the strategy plus the dataset-wide scale
/// (only meaningful for [`InputNormStrategy::PerDataset`]).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub strategy: InputNormStrategy,
    pub delta_norm: f64,
}

/// Width of the feature vector produced by [`feature_matrix`].
pub fn feature_width(n_bs: usize, k_dl: usize, rssi: bool) -> usize {
    if rssi {
        n_bs * k_dl
    } else {
        2 * n_bs * k_dl
    }
}

fn sample_width(sample: &Sample) -> usize {
    let k_dl = sample.omni_rx.first().map_or(0, Vec::len);
    feature_width(sample.omni_rx.len(), k_dl, sample.rssi)
}

/// Largest pilot magnitude in a set of samples.
fn max_magnitude<'a>(samples: impl Iterator<Item = &'a Sample>) -> f64 {
    samples
        .flat_map(|s| s.omni_rx.iter().flatten())
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Computes the scaling spec from training samples. For the per-dataset
/// strategy this measures the global maximum magnitude and fails if it is
/// zero; the other strategies need no dataset statistic.
pub fn fit_feature_spec(
    samples: &[&Sample],
    strategy: InputNormStrategy,
) -> Result<NormalizationSpec, LearningError> {
    if samples.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    let delta_norm = match strategy {
        InputNormStrategy::PerDataset => {
            let delta = max_magnitude(samples.iter().copied());
            if delta <= 0.0 {
                return Err(LearningError::AllZeroInputs);
            }
            delta
        }
        _ => 1.0,
    };
    Ok(NormalizationSpec {
        strategy,
        delta_norm,
    })
}

/// Builds the feature matrix (one row per sample) under a fitted scaling.
/// Complex pilots become interleaved `(re, im)` pairs; RSSI samples
/// contribute magnitudes only. Scales that would be zero fall back to 1 so
/// degenerate blocks pass through unscaled.
pub fn feature_matrix(
    samples: &[&Sample],
    spec: &NormalizationSpec,
) -> Result<Array2<f64>, LearningError> {
    if samples.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    let width = sample_width(samples[0]);
    let mut m = Array2::zeros((samples.len(), width));
    for (row, sample) in samples.iter().enumerate() {
        if sample_width(sample) != width {
            return Err(LearningError::DimensionMismatch {
                expected: width,
                found: sample_width(sample),
            });
        }
        let sample_scale = match spec.strategy {
            InputNormStrategy::PerDataset => spec.delta_norm,
            InputNormStrategy::PerSample => nonzero(max_magnitude(std::iter::once(*sample))),
            _ => 1.0,
        };
        let mut col = 0;
        for bs_rx in &sample.omni_rx {
            let block_scale = match spec.strategy {
                InputNormStrategy::PerBaseStation => {
                    nonzero(bs_rx.iter().map(|z| z.norm()).fold(0.0, f64::max))
                }
                _ => sample_scale,
            };
            for z in bs_rx {
                let scale = match spec.strategy {
                    InputNormStrategy::PerElement => nonzero(z.norm()),
                    _ => block_scale,
                };
                if sample.rssi {
                    m[[row, col]] = z.norm() / scale;
                    col += 1;
                } else {
                    m[[row, col]] = z.re / scale;
                    m[[row, col + 1]] = z.im / scale;
                    col += 2;
                }
            }
        }
    }
    Ok(m)
}

fn nonzero(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

/// Builds the target matrix for one base station: each row is that
/// station's per-beam rate vector, optionally divided by the row's own
/// maximum. The per-sample scaling makes every location — including
/// low-gain shadowed ones — contribute a comparably-sized regression
/// target, so the network learns relative beam quality rather than
/// absolute gain.
pub fn target_matrix(
    samples: &[&Sample],
    bs_index: usize,
    output_norm: bool,
) -> Result<Array2<f64>, LearningError> {
    if samples.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    let n_tr = samples[0].beam_rates[bs_index].len();
    let mut t = Array2::zeros((samples.len(), n_tr));
    for (row, sample) in samples.iter().enumerate() {
        let scale = if output_norm {
            let max = sample.beam_rates[bs_index]
                .iter()
                .copied()
                .fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(LearningError::AllZeroRates { index: row });
            }
            max
        } else {
            1.0
        };
        for (col, &r) in sample.beam_rates[bs_index].iter().enumerate() {
            t[[row, col]] = r / scale;
        }
    }
    Ok(t)
}

/// Index of the strictly largest entry; ties keep the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Indices of the `n` largest entries in descending order; ties resolve to
/// the lowest index first.
pub fn predict_top(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Candidate refinement: take the top `n_b` predicted beams, then pick the
/// one whose *measured* rate is largest (ties keep the earliest
/// candidate). Returns the chosen beam index.
pub fn refine_candidates(predicted: &[f64], measured: &[f64], n_b: usize) -> usize {
    let candidates = predict_top(predicted, n_b.max(1));
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if measured[c] > measured[best] {
            best = c;
        }
    }
    best
}

/// Operating phase of the deployed system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Keep running exhaustive beam training (collecting labels).
    Learning,
    /// Trust the predictor and spend pilots only on refinement.
    Prediction,
}

/// Picks the phase that yields the higher effective rate; the exhaustive
/// phase wins ties so the system keeps collecting labels until prediction
/// is strictly better.
pub fn phase_switch(r_eff_prediction: f64, r_eff_exhaustive: f64) -> (Phase, f64) {
    if r_eff_prediction > r_eff_exhaustive {
        (Phase::Prediction, r_eff_prediction)
    } else {
        (Phase::Learning, r_eff_exhaustive)
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden layer widths (the input/output widths come from the data).
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability of dropping a hidden unit during training.
    pub dropout: f64,
    pub input_norm: InputNormStrategy,
    /// Divide each sample's target rates by its maximum rate.
    pub output_norm: bool,
    /// Number of beam candidates the deployed system refines over (also
    /// reported as top-`n_b` accuracy during training).
    pub n_b: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![256, 256, 128],
            epochs: 120,
            batch_size: 100,
            learning_rate: 1e-3,
            dropout: 0.5,
            input_norm: InputNormStrategy::PerDataset,
            output_norm: true,
            n_b: 4,
            seed: 0,
        }
    }
}

/// Per-epoch training diagnostics (losses are mean squared error per
/// sample; accuracies are measured on the validation set).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub top1_acc: f64,
    pub top_nb_acc: f64,
}

/// A trained per-base-station predictor with its input scaling.
#[derive(Debug, Clone)]
pub struct BsModel {
    pub bs_index: usize,
    pub model: MlpModel,
    pub norm: NormalizationSpec,
}

impl BsModel {
    /// Predicted per-beam scores for one sample.
    pub fn predict(&self, sample: &Sample) -> Result<Vec<f64>, LearningError> {
        let features = feature_matrix(&[sample], &self.norm)?;
        let expected = self.model.input_width();
        if features.ncols() != expected {
            return Err(LearningError::DimensionMismatch {
                expected,
                found: features.ncols(),
            });
        }
        Ok(self.model.forward(&features.view()).row(0).to_vec())
    }
}

/// Everything produced by one training run.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub bs_model: BsModel,
    pub history: Vec<EpochStats>,
    /// Training samples dropped because every beam rate was zero.
    pub excluded_train: usize,
    /// Validation samples dropped for the same reason.
    pub excluded_val: usize,
}

/// True when the station has at least one non-zero beam rate for the
/// sample, i.e. the sample carries a usable label for that station.
fn usable(sample: &Sample, bs_index: usize) -> bool {
    sample.beam_rates[bs_index].iter().any(|&r| r > 0.0)
}

/// Trains one base station's predictor from scratch. Samples where this
/// station's rates are all zero (fully blocked locations) carry no usable
/// label and are excluded and counted. Deterministic for a fixed config
/// seed: shuffling and dropout draw from a stream derived from `seed` and
/// `bs_index`.
pub fn fit_bs(
    train: &[Sample],
    val: &[Sample],
    bs_index: usize,
    config: &TrainConfig,
) -> Result<FitOutcome, LearningError> {
    fit_with_start(train, val, bs_index, config, None)
}

/// Continues training an existing predictor on new data (keeping its input
/// scaling), as when the deployment environment changes and the model
/// adapts instead of restarting.
pub fn fit_bs_warm(
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    start: BsModel,
) -> Result<FitOutcome, LearningError> {
    let bs_index = start.bs_index;
    fit_with_start(train, val, bs_index, config, Some(start))
}

fn fit_with_start(
    train: &[Sample],
    val: &[Sample],
    bs_index: usize,
    config: &TrainConfig,
    start: Option<BsModel>,
) -> Result<FitOutcome, LearningError> {
    let kept_train: Vec<&Sample> = train.iter().filter(|s| usable(s, bs_index)).collect();
    let kept_val: Vec<&Sample> = val.iter().filter(|s| usable(s, bs_index)).collect();
    let excluded_train = train.len() - kept_train.len();
    let excluded_val = val.len() - kept_val.len();
    if kept_train.is_empty() {
        return Err(LearningError::EmptyDataset);
    }

    let norm = match &start {
        Some(s) => s.norm,
        None => fit_feature_spec(&kept_train, config.input_norm)?,
    };
    let x_train = feature_matrix(&kept_train, &norm)?;
    let y_train = target_matrix(&kept_train, bs_index, config.output_norm)?;
    let (x_val, y_val) = if kept_val.is_empty() {
        (None, None)
    } else {
        (
            Some(feature_matrix(&kept_val, &norm)?),
            Some(target_matrix(&kept_val, bs_index, config.output_norm)?),
        )
    };

    let n_tr = y_train.ncols();
    let mut dims = vec![x_train.ncols()];
    dims.extend_from_slice(&config.hidden);
    dims.push(n_tr);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(bs_index as u64 + 1);
    let mut model = match start {
        Some(s) => {
            if s.model.input_width() != x_train.ncols() {
                return Err(LearningError::DimensionMismatch {
                    expected: s.model.input_width(),
                    found: x_train.ncols(),
                });
            }
            if s.model.output_width() != n_tr {
                return Err(LearningError::DimensionMismatch {
                    expected: s.model.output_width(),
                    found: n_tr,
                });
            }
            let mut m = s.model;
            m.dropout = config.dropout;
            m
        }
        None => MlpModel::new(&dims, config.dropout, config.seed ^ bs_index as u64),
    };
    let mut adam = Adam::new(&model, config.learning_rate, 0.9, 0.999);

    let n = kept_train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let xb = x_train.select(Axis(0), batch);
            let yb = y_train.select(Axis(0), batch);
            let cache = model.forward_train(&xb.view(), &mut rng);
            epoch_loss += sum_squared_error(&cache.output, &yb.view());
            let mut grads = model.backward_from_cache(&cache, &yb.view());
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut model, &grads);
        }
        let train_loss = epoch_loss / n as f64;
        if !train_loss.is_finite() {
            return Err(LearningError::Diverged { epoch });
        }

        let (val_loss, top1_acc, top_nb_acc) = match (&x_val, &y_val) {
            (Some(xv), Some(yv)) => {
                let pred = model.forward(&xv.view());
                let loss = sum_squared_error(&pred, &yv.view()) / kept_val.len() as f64;
                let (t1, tn) =
                    prediction_accuracy(&pred, &kept_val, bs_index, config.n_b);
                (loss, t1, tn)
            }
            _ => (f64::NAN, f64::NAN, f64::NAN),
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            top1_acc,
            top_nb_acc,
        });
    }

    Ok(FitOutcome {
        bs_model: BsModel {
            bs_index,
            model,
            norm,
        },
        history,
        excluded_train,
        excluded_val,
    })
}

/// Fraction of samples whose measured best beam is (a) the top prediction
/// and (b) within the top `n_b` predictions.
fn prediction_accuracy(
    pred: &Array2<f64>,
    samples: &[&Sample],
    bs_index: usize,
    n_b: usize,
) -> (f64, f64) {
    let mut top1 = 0usize;
    let mut top_nb = 0usize;
    for (row, sample) in samples.iter().enumerate() {
        let truth = argmax(&sample.beam_rates[bs_index]).unwrap_or(0);
        let scores = pred.row(row);
        let ranked = predict_top(scores.as_slice().unwrap(), n_b.max(1));
        if ranked[0] == truth {
            top1 += 1;
        }
        if ranked.contains(&truth) {
            top_nb += 1;
        }
    }
    let n = samples.len() as f64;
    (top1 as f64 / n, top_nb as f64 / n)
}

/// Measures top-1 / top-`n_b` accuracy of a trained predictor on a sample
/// set (samples where this station's rates are all zero are skipped).
/// Returns `(top1, top_nb, evaluated_count)`.
pub fn accuracy(
    bs_model: &BsModel,
    samples: &[Sample],
    n_b: usize,
) -> Result<(f64, f64, usize), LearningError> {
    let kept: Vec<&Sample> = samples
        .iter()
        .filter(|s| usable(s, bs_model.bs_index))
        .collect();
    if kept.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    let features = feature_matrix(&kept, &bs_model.norm)?;
    let pred = bs_model.model.forward(&features.view());
    let (t1, tn) = prediction_accuracy(&pred, &kept, bs_model.bs_index, n_b);
    Ok((t1, tn, kept.len()))
}

/// Runs every station's predictor on one sample and refines each against
/// the sample's measured rates: returns the chosen beam per station.
pub fn select_beams(
    models: &[BsModel],
    sample: &Sample,
    n_b: usize,
) -> Result<Vec<usize>, LearningError> {
    models
        .iter()
        .map(|m| {
            let scores = m.predict(sample)?;
            Ok(refine_candidates(
                &scores,
                &sample.beam_rates[m.bs_index],
                n_b,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;
    use crate::geometry::Vec3;

    fn sample_with(rx: Vec<Vec<Complex64>>, rates: Vec<Vec<f64>>) -> Sample {
        Sample {
            user_pos: Vec3::new(0.0, 0.0, 0.0),
            omni_rx: rx,
            beam_rates: rates,
            scenario_tag: "test".into(),
            rssi: false,
        }
    }

    // 1. Feature layout: interleaved re/im per base station, in order;
    //    RSSI samples contribute magnitudes only at half the width.
    #[test]
    fn feature_layout() {
        let s = sample_with(
            vec![
                vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)],
                vec![Complex64::new(0.0, -1.0), Complex64::new(3.0, 4.0)],
            ],
            vec![vec![1.0], vec![1.0]],
        );
        let spec = NormalizationSpec {
            strategy: InputNormStrategy::PerDataset,
            delta_norm: 1.0,
        };
        let m = feature_matrix(&[&s], &spec).unwrap();
        assert_eq!(m.ncols(), feature_width(2, 2, false));
        assert_eq!(
            m.row(0).to_vec(),
            vec![1.0, 2.0, -0.5, 0.25, 0.0, -1.0, 3.0, 4.0]
        );

        let r = crate::dataset::to_rssi(&s);
        let m = feature_matrix(&[&r], &spec).unwrap();
        assert_eq!(m.ncols(), feature_width(2, 2, true));
        let row = m.row(0).to_vec();
        assert!((row[0] - 5.0f64.sqrt()).abs() < 1e-12);
        assert!((row[3] - 5.0).abs() < 1e-12);
    }

    // 2. Each scaling strategy pins its own notion of maximum to one.
    #[test]
    fn normalization_strategies() {
        let a = sample_with(
            vec![
                vec![Complex64::new(3.0, 4.0), Complex64::new(1.0, 0.0)],
                vec![Complex64::new(0.0, 2.0), Complex64::new(0.5, 0.0)],
            ],
            vec![vec![1.0], vec![1.0]],
        );
        let b = sample_with(
            vec![
                vec![Complex64::new(10.0, 0.0), Complex64::new(0.0, 0.0)],
                vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, 0.0)],
            ],
            vec![vec![1.0], vec![1.0]],
        );
        let samples = [&a, &b];

        let spec = fit_feature_spec(&samples, InputNormStrategy::PerDataset).unwrap();
        assert_eq!(spec.delta_norm, 10.0);
        let m = feature_matrix(&samples, &spec).unwrap();
        let global_max = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!((global_max - 1.0).abs() < 1e-12, "dataset max scales to 1");

        let spec = fit_feature_spec(&samples, InputNormStrategy::PerSample).unwrap();
        let m = feature_matrix(&samples, &spec).unwrap();
        // Sample a's max magnitude is 5 (3+4i) -> that entry becomes (0.6, 0.8).
        assert!((m[[0, 0]] - 0.6).abs() < 1e-12);
        assert!((m[[0, 1]] - 0.8).abs() < 1e-12);
        assert!((m[[1, 0]] - 1.0).abs() < 1e-12);

        let spec = fit_feature_spec(&samples, InputNormStrategy::PerBaseStation).unwrap();
        let m = feature_matrix(&samples, &spec).unwrap();
        // Station 1 of sample a has max magnitude 2 -> (0, 2i) becomes (0, 1).
        assert!((m[[0, 5]] - 1.0).abs() < 1e-12);

        let spec = fit_feature_spec(&samples, InputNormStrategy::PerElement).unwrap();
        let m = feature_matrix(&samples, &spec).unwrap();
        for row in 0..2 {
            for c in (0..8).step_by(2) {
                let mag = (m[[row, c]].powi(2) + m[[row, c + 1]].powi(2)).sqrt();
                assert!(
                    mag < 1e-12 || (mag - 1.0).abs() < 1e-12,
                    "per-element magnitudes are 0 or 1, got {mag}"
                );
            }
        }
    }

    // 3. A dataset whose pilots are all exactly zero cannot fix a scale.
    #[test]
    fn all_zero_inputs_rejected() {
        let z = sample_with(
            vec![vec![Complex64::new(0.0, 0.0)]],
            vec![vec![1.0]],
        );
        let err = fit_feature_spec(&[&z], InputNormStrategy::PerDataset).unwrap_err();
        assert!(matches!(err, LearningError::AllZeroInputs));
    }

    // 4. Output normalisation divides each station's rate vector by its
    //    own per-sample maximum and preserves the best beam, so a weak
    //    (shadowed) station still produces a full-scale target.
    #[test]
    fn output_normalization() {
        let s = sample_with(
            vec![vec![Complex64::new(1.0, 0.0)]],
            vec![vec![2.0, 8.0, 4.0], vec![0.01, 0.005, 0.0025]],
        );
        let t = target_matrix(&[&s], 0, true).unwrap();
        assert_eq!(t.row(0).to_vec(), vec![0.25, 1.0, 0.5]);
        let t = target_matrix(&[&s], 1, true).unwrap();
        assert_eq!(t.row(0).to_vec(), vec![1.0, 0.5, 0.25]);
        assert_eq!(argmax(&t.row(0).to_vec()), Some(0));
        let raw = target_matrix(&[&s], 0, false).unwrap();
        assert_eq!(raw.row(0).to_vec(), vec![2.0, 8.0, 4.0]);

        let zero = sample_with(
            vec![vec![Complex64::new(1.0, 0.0)]],
            vec![vec![0.0, 0.0]],
        );
        assert!(matches!(
            target_matrix(&[&zero], 0, true),
            Err(LearningError::AllZeroRates { index: 0 })
        ));
    }

    // 5. Ranking helpers: descending order, ties to the lowest index.
    #[test]
    fn ranking_and_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(predict_top(&[1.0, 3.0, 3.0, 2.0], 3), vec![1, 2, 3]);
        assert_eq!(predict_top(&[5.0, 5.0, 5.0], 2), vec![0, 1]);
        // Refinement: predictor ranks beam 2 first, but beam 0 (also a
        // candidate) measures better.
        assert_eq!(
            refine_candidates(&[0.9, 0.1, 1.0, 0.8], &[2.0, 9.0, 1.0, 1.5], 2),
            0
        );
        // With a larger candidate set the measured best (beam 1) enters.
        assert_eq!(
            refine_candidates(&[0.9, 0.1, 1.0, 0.8], &[2.0, 9.0, 1.0, 1.5], 4),
            1
        );
    }

    // 6. Phase switching maximises effective rate; exhaustive wins ties.
    #[test]
    fn phase_switching() {
        assert_eq!(phase_switch(2.0, 1.0), (Phase::Prediction, 2.0));
        assert_eq!(phase_switch(1.0, 2.0), (Phase::Learning, 2.0));
        assert_eq!(phase_switch(2.0, 2.0), (Phase::Learning, 2.0));
    }

    /// Synthetic learnable problem: the best beam index is a linear
    /// function of a clean two-dimensional pilot pattern.
    fn synthetic_dataset(n: usize, n_tr: usize, seed: u64) -> Vec<Sample> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let beam = rng.gen_range(0..n_tr);
                let phase = 2.0 * std::f64::consts::PI * beam as f64 / n_tr as f64;
                let rx = vec![vec![
                    Complex64::from_polar(1.0, phase),
                    Complex64::from_polar(1.0, 2.0 * phase),
                ]];
                let rates: Vec<f64> = (0..n_tr)
                    .map(|p| if p == beam { 1.0 } else { 0.1 })
                    .collect();
                sample_with(rx, vec![rates])
            })
            .collect()
    }

    // 7. Training learns a clean synthetic mapping well above chance and
    //    reports sensible history.
    #[test]
    fn fit_learns_synthetic_mapping() {
        let train = synthetic_dataset(400, 8, 1);
        let val = synthetic_dataset(100, 8, 2);
        let config = TrainConfig {
            hidden: vec![32, 32],
            epochs: 60,
            batch_size: 50,
            dropout: 0.0,
            n_b: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let out = fit_bs(&train, &val, 0, &config).unwrap();
        assert_eq!(out.history.len(), 60);
        let last = out.history.last().unwrap();
        assert!(
            last.top1_acc > 0.9,
            "synthetic mapping should be learnable, got {}",
            last.top1_acc
        );
        assert!(last.top_nb_acc >= last.top1_acc);
        assert!(last.train_loss < out.history[0].train_loss);
        let (t1, tn, n) = accuracy(&out.bs_model, &val, 3).unwrap();
        assert_eq!(n, 100);
        assert!((t1 - last.top1_acc).abs() < 1e-12);
        assert!(tn >= t1);
    }

    // 8. Identical configuration and data produce identical weights and
    //    history (training is fully deterministic).
    #[test]
    fn fit_is_deterministic() {
        let train = synthetic_dataset(120, 4, 3);
        let val = synthetic_dataset(30, 4, 4);
        let config = TrainConfig {
            hidden: vec![16],
            epochs: 10,
            batch_size: 32,
            dropout: 0.3,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = fit_bs(&train, &val, 0, &config).unwrap();
        let b = fit_bs(&train, &val, 0, &config).unwrap();
        assert_eq!(a.bs_model.model, b.bs_model.model);
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.train_loss, y.train_loss);
            assert_eq!(x.val_loss, y.val_loss);
        }
    }

    // 9. Fully blocked samples (all-zero rates) are excluded and counted,
    //    and training still proceeds on the rest.
    #[test]
    fn zero_rate_samples_excluded() {
        let mut train = synthetic_dataset(60, 4, 6);
        for s in train.iter_mut().take(7) {
            s.beam_rates = vec![vec![0.0; 4]];
        }
        let config = TrainConfig {
            hidden: vec![8],
            epochs: 2,
            batch_size: 16,
            dropout: 0.0,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = fit_bs(&train, &[], 0, &config).unwrap();
        assert_eq!(out.excluded_train, 7);
        assert_eq!(out.excluded_val, 0);
        assert!(out.history.last().unwrap().val_loss.is_nan());
    }

    // 10. Warm starting picks up from the trained weights (better initial
    //     loss than a fresh model) and keeps the original input scaling.
    #[test]
    fn warm_start_continues_training() {
        let train = synthetic_dataset(200, 6, 11);
        let val = synthetic_dataset(50, 6, 12);
        let config = TrainConfig {
            hidden: vec![24],
            epochs: 30,
            batch_size: 50,
            dropout: 0.0,
            seed: 4,
            ..TrainConfig::default()
        };
        let first = fit_bs(&train, &val, 0, &config).unwrap();
        let fresh_initial = first.history[0].train_loss;
        let resumed = fit_bs_warm(&train, &val, &config, first.bs_model.clone()).unwrap();
        assert!(
            resumed.history[0].train_loss < fresh_initial,
            "warm start should begin below the fresh model's first-epoch loss"
        );
        assert_eq!(
            resumed.bs_model.norm.delta_norm,
            first.bs_model.norm.delta_norm
        );

        let narrow = synthetic_dataset(20, 4, 13);
        assert!(matches!(
            fit_bs_warm(&narrow, &[], &config, first.bs_model),
            Err(LearningError::DimensionMismatch { .. })
        ));
    }

    // 11. Beam selection runs every station's predictor and refines each
    //     choice against the sample's measured rates.
    #[test]
    fn select_beams_refines_with_measurements() {
        let train = synthetic_dataset(200, 8, 7);
        let config = TrainConfig {
            hidden: vec![24],
            epochs: 40,
            batch_size: 50,
            dropout: 0.0,
            n_b: 8,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = fit_bs(&train, &[], 0, &config).unwrap();
        let probe = &synthetic_dataset(10, 8, 8)[0];
        // With the full candidate set, refinement must land on the true
        // best beam regardless of prediction quality.
        let beams = select_beams(std::slice::from_ref(&out.bs_model), probe, 8).unwrap();
        assert_eq!(beams[0], argmax(&probe.beam_rates[0]).unwrap());
    }
}
