//! Beam quality metrics, beam search and the cloud baseband combiner.
//!
//! For a set of coordinating base stations, each applying one analog
//! codeword `f_n` from its codebook, the achievable rate with the optimal
//! per-subcarrier baseband vector is the closed form
//!
//! `R = (1/K) sum_k log2(1 + SNR * sum_n |h_{k,n}^T f_n|^2)`
//!
//! because maximum ratio transmission (MRT) over the effective per-BS
//! channels is optimal for a single user. This module provides:
//!
//! * per-beam single-BS rates (the quantities a beam sweep measures),
//! * disjoint per-BS beam selection and joint exhaustive search,
//! * the MRT baseband combiner and the generic rate under any baseband,
//! * beam coherence time and training-overhead discounted effective rates.

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{FreqChannel, OfdmConfig};
use crate::codebook::Codebook;

#[derive(Debug, Error, PartialEq)]
pub enum BeamformingError {
    #[error("joint search space {combinations:.3e} exceeds the budget {budget:.3e}")]
    BudgetExceeded { combinations: f64, budget: f64 },
    #[error("speed must be positive, got {0} m/s")]
    NonPositiveSpeed(f64),
}

/// Achievable rate of every codebook beam at one BS:
/// `R_p = (1/K) sum_k log2(1 + SNR |h_k^T g_p|^2)`, in bit/s/Hz.
pub fn per_beam_rates(fc: &FreqChannel, cb: &Codebook, ofdm: &OfdmConfig) -> Vec<f64> {
    let k = fc.k_subcarriers();
    let snr = ofdm.snr_linear();
    // gains[[k, p]] = h_k^T g_p for all subcarriers and beams at once.
    let gains = fc.h.dot(&cb.codewords.t());
    let scale = 1.0 / k as f64;
    (0..cb.len())
        .map(|p| {
            gains
                .column(p)
                .iter()
                .map(|g| (1.0 + snr * g.norm_sqr()).log2())
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// Index of the largest rate; ties break to the lowest index.
pub fn baseline_select(rates: &[f64]) -> usize {
    assert!(!rates.is_empty(), "cannot select from an empty rate list");
    let mut best = 0;
    for (i, r) in rates.iter().enumerate().skip(1) {
        if *r > rates[best] {
            best = i;
        }
    }
    best
}

/// Effective scalar channel per subcarrier and BS once the analog beams are
/// fixed: `e[[k, n]] = h_{k,n}^T f_n`.
pub fn effective_channel(channels: &[FreqChannel], beams: &[ArrayView1<Complex64>]) -> Array2<Complex64> {
    assert_eq!(
        channels.len(),
        beams.len(),
        "one beam per coordinating BS required"
    );
    assert!(!channels.is_empty());
    let k = channels[0].k_subcarriers();
    let n = channels.len();
    let mut eff = Array2::zeros((k, n));
    for (col, (fc, beam)) in channels.iter().zip(beams).enumerate() {
        assert_eq!(fc.k_subcarriers(), k, "subcarrier counts must agree");
        assert_eq!(fc.elements(), beam.len(), "beam length must match panel");
        for kk in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for mm in 0..beam.len() {
                acc += fc.h[[kk, mm]] * beam[mm];
            }
            eff[[kk, col]] = acc;
        }
    }
    eff
}

/// Per-subcarrier baseband combiner, one unit-norm `N`-vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandPrecoder {
    /// `weights[[k, n]]` multiplies BS `n`'s effective channel at
    /// subcarrier `k`.
    pub weights: Array2<Complex64>,
    /// Subcarriers whose effective channel vanished entirely; their weight
    /// fell back to the first standard basis vector.
    pub degenerate_subcarriers: usize,
}

/// Maximum ratio transmission over the effective channels: the conjugate
/// direction, normalised per subcarrier. A vanishing effective channel
/// (fully shadowed user) falls back to `e_1` and is counted as degenerate.
pub fn mrt_baseband(effective: &Array2<Complex64>) -> BasebandPrecoder {
    let (k, n) = effective.dim();
    let mut weights = Array2::zeros((k, n));
    let mut degenerate = 0;
    for kk in 0..k {
        let norm: f64 = effective
            .row(kk)
            .iter()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for nn in 0..n {
                weights[[kk, nn]] = effective[[kk, nn]].conj() / norm;
            }
        } else {
            weights[[kk, 0]] = Complex64::new(1.0, 0.0);
            degenerate += 1;
        }
    }
    BasebandPrecoder {
        weights,
        degenerate_subcarriers: degenerate,
    }
}

/// Rate under an arbitrary per-subcarrier baseband vector:
/// `(1/K) sum_k log2(1 + SNR |sum_n e_{k,n} w_{k,n}|^2)`.
pub fn rate_with_baseband(
    effective: &Array2<Complex64>,
    precoder: &BasebandPrecoder,
    ofdm: &OfdmConfig,
) -> f64 {
    let (k, n) = effective.dim();
    assert_eq!(precoder.weights.dim(), (k, n));
    let snr = ofdm.snr_linear();
    let mut acc = 0.0;
    for kk in 0..k {
        let combined: Complex64 = (0..n)
            .map(|nn| effective[[kk, nn]] * precoder.weights[[kk, nn]])
            .sum();
        acc += (1.0 + snr * combined.norm_sqr()).log2();
    }
    acc / k as f64
}

/// Closed-form coordinated rate with MRT baseband:
/// `(1/K) sum_k log2(1 + SNR sum_n |h_{k,n}^T f_n|^2)`.
pub fn coordinated_rate(
    channels: &[FreqChannel],
    beams: &[ArrayView1<Complex64>],
    ofdm: &OfdmConfig,
) -> f64 {
    let eff = effective_channel(channels, beams);
    coordinated_rate_from_effective(&eff, ofdm)
}

pub fn coordinated_rate_from_effective(effective: &Array2<Complex64>, ofdm: &OfdmConfig) -> f64 {
    let (k, _) = effective.dim();
    let snr = ofdm.snr_linear();
    let mut acc = 0.0;
    for kk in 0..k {
        let power: f64 = effective.row(kk).iter().map(|e| e.norm_sqr()).sum();
        acc += (1.0 + snr * power).log2();
    }
    acc / k as f64
}

/// Result of the joint exhaustive search over beam combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSearch {
    /// One codeword index per BS.
    pub beams: Vec<usize>,
    /// Coordinated rate of that combination.
    pub rate: f64,
}

/// Exhaustive search over all `n_tr^N` beam tuples for the combination
/// maximising the coordinated rate. Refuses tuples spaces larger than
/// `budget` (the caller then falls back to disjoint selection as a lower
/// bound). Ties break to the lexicographically smallest tuple.
pub fn joint_exhaustive(
    channels: &[FreqChannel],
    cb: &Codebook,
    ofdm: &OfdmConfig,
    budget: f64,
) -> Result<JointSearch, BeamformingError> {
    let n = channels.len();
    assert!(n > 0);
    let n_tr = cb.len();
    let combinations = (n_tr as f64).powi(n as i32);
    if combinations > budget {
        return Err(BeamformingError::BudgetExceeded {
            combinations,
            budget,
        });
    }
    let k = channels[0].k_subcarriers();
    let snr = ofdm.snr_linear();
    // Precompute |h_{k,n}^T g_p|^2 for every BS and beam.
    let gains: Vec<Array2<f64>> = channels
        .iter()
        .map(|fc| {
            let g = fc.h.dot(&cb.codewords.t());
            g.mapv(|c| c.norm_sqr())
        })
        .collect();

    let mut beams = vec![0usize; n];
    let mut best: Option<JointSearch> = None;
    loop {
        let mut acc = 0.0;
        for kk in 0..k {
            let power: f64 = (0..n).map(|nn| gains[nn][[kk, beams[nn]]]).sum();
            acc += (1.0 + snr * power).log2();
        }
        let rate = acc / k as f64;
        // Strict improvement keeps the lexicographically first maximiser.
        if best.as_ref().map_or(true, |b| rate > b.rate) {
            best = Some(JointSearch {
                beams: beams.clone(),
                rate,
            });
        }
        // Odometer increment in lexicographic order (last index fastest).
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one combination evaluated"));
            }
            pos -= 1;
            beams[pos] += 1;
            if beams[pos] < n_tr {
                break;
            }
            beams[pos] = 0;
        }
    }
}

/// Beam coherence time in seconds for a user moving at `speed_mps`,
/// anchored at 23 ms for 13.41 m/s (30 mph): `T_B = 0.023 * 13.41 / v`.
pub fn beam_coherence_time(speed_mps: f64) -> Result<f64, BeamformingError> {
    if !(speed_mps > 0.0) {
        return Err(BeamformingError::NonPositiveSpeed(speed_mps));
    }
    Ok(0.023 * 13.41 / speed_mps)
}

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * 0.44704
}

/// Fraction of each beam coherence block consumed by training.
pub fn overhead_fraction(t_train: f64, t_coherence: f64) -> f64 {
    t_train / t_coherence
}

/// Rate after discounting the training overhead:
/// `max(0, 1 - t_train / T_B) * rate`. Training longer than the coherence
/// block clamps to zero.
pub fn effective_rate(rate: f64, t_train: f64, t_coherence: f64) -> f64 {
    (1.0 - t_train / t_coherence).max(0.0) * rate
}

/// Training-time bookkeeping for one mobility scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    /// Duration of one beam training pilot, seconds.
    pub pilot_time: f64,
    /// Beam coherence time at the scenario speed, seconds.
    pub beam_coherence_time: f64,
}

impl TimingModel {
    pub fn new(pilot_time: f64, speed_mps: f64) -> Result<Self, BeamformingError> {
        Ok(Self {
            pilot_time,
            beam_coherence_time: beam_coherence_time(speed_mps)?,
        })
    }

    /// Exhaustive sweep: one pilot per codebook beam.
    pub fn baseline_training_time(&self, n_tr: usize) -> f64 {
        n_tr as f64 * self.pilot_time
    }

    /// Learned selection: one omni pilot plus one refinement pilot per
    /// candidate beam.
    pub fn learned_training_time(&self, n_candidates: usize) -> f64 {
        (n_candidates + 1) as f64 * self.pilot_time
    }

    pub fn effective(&self, rate: f64, t_train: f64) -> f64 {
        effective_rate(rate, t_train, self.beam_coherence_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{thermal_noise_power, ArrayGeometry};
    use crate::codebook::beamsteering_codebook;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ofdm(k: usize) -> OfdmConfig {
        OfdmConfig {
            k_subcarriers: k,
            cp_length: k,
            sample_period: 1e-9,
            tx_power: 1.0,
            noise_power: thermal_noise_power(1e9, 5.0),
        }
    }

    fn random_channel(rng: &mut ChaCha8Rng, k: usize, m: usize) -> FreqChannel {
        let mut h = Array2::zeros((k, m));
        for c in h.iter_mut() {
            *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        FreqChannel { h }
    }

    fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Array1<Complex64> {
        let mut v: Array1<Complex64> = Array1::zeros(n);
        for c in v.iter_mut() {
            *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.mapv_into(|c| c / norm)
    }

    // 1. A zero channel yields zero rate on every beam.
    #[test]
    fn zero_channel_zero_rates() {
        let geom = ArrayGeometry::new(4, 2);
        let cb = beamsteering_codebook(&geom, 1, 1);
        let fc = FreqChannel::zero(32, geom.elements());
        let rates = per_beam_rates(&fc, &cb, &ofdm(32));
        assert!(rates.iter().all(|&r| r == 0.0));
    }

    // 2. A single-path channel steered at a grid angle is won by that
    //    beam, and the winning rate matches log2(1 + SNR * M / rho) for a
    //    frequency-flat channel.
    #[test]
    fn steered_channel_rate_closed_form() {
        let geom = ArrayGeometry::new(8, 2);
        let cb = beamsteering_codebook(&geom, 2, 2);
        let cfg = ofdm(64);
        let (az, el) = cb.angle_grid[37];
        let rho = 1e9;
        let m = geom.elements() as f64;
        let amp = (m / rho).sqrt();
        let a = crate::channel::array_response(&geom, az, el);
        let mut h = Array2::zeros((64, geom.elements()));
        for kk in 0..64 {
            for mm in 0..geom.elements() {
                h[[kk, mm]] = a[mm] * amp;
            }
        }
        let fc = FreqChannel { h };
        let rates = per_beam_rates(&fc, &cb, &cfg);
        assert_eq!(baseline_select(&rates), 37);
        let expect = (1.0 + cfg.snr_linear() * m / rho).log2();
        assert!((rates[37] - expect).abs() < expect * 1e-12);
    }

    // 3. Ties break to the lowest index.
    #[test]
    fn baseline_select_tie_break() {
        assert_eq!(baseline_select(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(baseline_select(&[0.0, 0.0]), 0);
        assert_eq!(baseline_select(&[5.0]), 0);
    }

    // 4. MRT weights are unit norm per subcarrier; an all-zero subcarrier
    //    falls back to e_1 and is counted.
    #[test]
    fn mrt_unit_norm_and_degenerate_fallback() {
        let mut eff = Array2::zeros((4, 3));
        eff[[0, 0]] = Complex64::new(1.0, 1.0);
        eff[[0, 2]] = Complex64::new(0.0, -2.0);
        eff[[2, 1]] = Complex64::new(0.5, 0.0);
        // Rows 1 and 3 are zero.
        let pre = mrt_baseband(&eff);
        assert_eq!(pre.degenerate_subcarriers, 2);
        for kk in 0..4 {
            let norm: f64 = pre
                .weights
                .row(kk)
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "row {kk} norm {norm}");
        }
        assert_eq!(pre.weights[[1, 0]], Complex64::new(1.0, 0.0));
    }

    // 5. MRT is optimal: its rate matches the closed form exactly and beats
    //    hundreds of random unit-norm baseband choices.
    #[test]
    fn mrt_beats_random_baseband() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = ofdm(16);
        for _ in 0..10 {
            let eff = {
                let mut e = Array2::zeros((16, 4));
                for c in e.iter_mut() {
                    *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
                e
            };
            let mrt = mrt_baseband(&eff);
            let mrt_rate = rate_with_baseband(&eff, &mrt, &cfg);
            let closed = coordinated_rate_from_effective(&eff, &cfg);
            assert!(
                (mrt_rate - closed).abs() <= closed.abs() * 1e-12,
                "MRT must achieve the closed form: {mrt_rate} vs {closed}"
            );
            for _ in 0..200 {
                let mut w = Array2::zeros(eff.dim());
                for kk in 0..16 {
                    let row = random_unit(&mut rng, 4);
                    for nn in 0..4 {
                        w[[kk, nn]] = row[nn];
                    }
                }
                let rate = rate_with_baseband(
                    &eff,
                    &BasebandPrecoder {
                        weights: w,
                        degenerate_subcarriers: 0,
                    },
                    &cfg,
                );
                assert!(rate <= mrt_rate + 1e-12, "random baseband beat MRT");
            }
        }
    }

    // 6. The coordinated closed form agrees whether computed from channels
    //    and beams or from the effective channel.
    #[test]
    fn coordinated_rate_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = ArrayGeometry::new(4, 2);
        let cb = beamsteering_codebook(&geom, 1, 1);
        let cfg = ofdm(32);
        let channels: Vec<_> = (0..3).map(|_| random_channel(&mut rng, 32, 8)).collect();
        let beams: Vec<_> = (0..3).map(|n| cb.codewords.row(n)).collect();
        let direct = coordinated_rate(&channels, &beams, &cfg);
        let eff = effective_channel(&channels, &beams);
        let via_eff = coordinated_rate_from_effective(&eff, &cfg);
        assert!((direct - via_eff).abs() < 1e-12);
        // And MRT achieves it end to end.
        let mrt = mrt_baseband(&eff);
        assert!((rate_with_baseband(&eff, &mrt, &cfg) - direct).abs() < direct * 1e-12);
    }

    // 7. Joint exhaustive search refuses oversized search spaces and reduces
    //    to per-BS disjoint selection for single-path frequency-flat
    //    channels.
    #[test]
    fn joint_search_budget_and_separability() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let geom = ArrayGeometry::new(4, 1);
        let cb = beamsteering_codebook(&geom, 2, 1); // 8 beams
        let cfg = ofdm(16);
        let channels: Vec<_> = (0..2).map(|_| random_channel(&mut rng, 16, 4)).collect();
        assert!(matches!(
            joint_exhaustive(&channels, &cb, &cfg, 10.0),
            Err(BeamformingError::BudgetExceeded { .. })
        ));

        // Single-path flat channels: joint = disjoint.
        for trial in 0..10 {
            let channels: Vec<FreqChannel> = (0..2)
                .map(|_| {
                    let az = rng.gen_range(-1.5..1.5);
                    let el = rng.gen_range(-0.5..0.5);
                    let a = crate::channel::array_response(&geom, az, el);
                    let gain = Complex64::new(rng.gen_range(0.1..2.0), rng.gen_range(-1.0..1.0));
                    let mut h = Array2::zeros((16, 4));
                    for kk in 0..16 {
                        for mm in 0..4 {
                            h[[kk, mm]] = a[mm] * gain;
                        }
                    }
                    FreqChannel { h }
                })
                .collect();
            let joint = joint_exhaustive(&channels, &cb, &cfg, 1e7).unwrap();
            let disjoint: Vec<usize> = channels
                .iter()
                .map(|fc| baseline_select(&per_beam_rates(fc, &cb, &cfg)))
                .collect();
            assert_eq!(joint.beams, disjoint, "trial {trial}");
        }
    }

    // 8. Coherence time anchors: 13.41 m/s -> 23 ms, doubling the speed
    //    halves the window; non-positive speeds are rejected.
    #[test]
    fn coherence_time_anchors() {
        assert!((beam_coherence_time(13.41).unwrap() - 0.023).abs() < 1e-15);
        assert!((beam_coherence_time(26.82).unwrap() - 0.0115).abs() < 1e-15);
        assert!((beam_coherence_time(6.705).unwrap() - 0.046).abs() < 1e-15);
        assert!(matches!(
            beam_coherence_time(0.0),
            Err(BeamformingError::NonPositiveSpeed(_))
        ));
        assert!(matches!(
            beam_coherence_time(-3.0),
            Err(BeamformingError::NonPositiveSpeed(_))
        ));
        // 30 mph in SI units.
        assert!((mph_to_mps(30.0) - 13.4112).abs() < 1e-12);
    }

    // 9. Effective rate discounts overhead linearly and clamps at zero when
    //    training swallows the whole coherence block.
    #[test]
    fn effective_rate_discount_and_clamp() {
        let t_b = 0.023;
        let sweep = 1024.0 * 10e-6;
        let frac = overhead_fraction(sweep, t_b);
        assert!((frac - 0.44522).abs() < 1e-4);
        let r = effective_rate(2.0, sweep, t_b);
        assert!((r - 2.0 * (1.0 - frac)).abs() < 1e-12);
        assert_eq!(effective_rate(2.0, 0.05, t_b), 0.0, "clamped at zero");
        let tm = TimingModel::new(10e-6, 13.41).unwrap();
        assert!((tm.baseline_training_time(1024) - sweep).abs() < 1e-18);
        assert!((tm.learned_training_time(4) - 5e-5).abs() < 1e-18);
    }

    // 10. Rates grow with SNR (more transmit power, same channel).
    #[test]
    fn rate_monotone_in_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = ArrayGeometry::new(4, 2);
        let cb = beamsteering_codebook(&geom, 1, 1);
        let fc = random_channel(&mut rng, 32, 8);
        let low = ofdm(32);
        let mut high = low;
        high.tx_power *= 10.0;
        let r_low = per_beam_rates(&fc, &cb, &low);
        let r_high = per_beam_rates(&fc, &cb, &high);
        for (l, h) in r_low.iter().zip(&r_high) {
            assert!(h > l);
        }
    }
}
