//! Training data generation: uplink omni signatures paired with per-beam
//! downlink rates, sampled over a street-level candidate grid.
//!
//! For every sampled user location the pipeline traces rays from each BS,
//! builds the wideband channel, computes the noiseless achievable rate of
//! every codebook beam (the regression targets) and the received uplink
//! pilot on the first antenna of each BS over the first `K_DL` subcarriers
//! (the model inputs):
//!
//! `r_k = sqrt(P_ul / K) * h_k[0] + v_k`,  `v_k ~ CN(0, sigma_ul^2)`.
//!
//! Generation is deterministic and thread-schedule independent: location
//! selection uses stream 0 of a counter-based RNG seeded with the dataset
//! seed, and sample `i` draws its noise from stream `i + 1`, so parallel and
//! serial runs produce identical datasets.
//!
//! Datasets serialise to a little-endian binary format (magic `CBF1`): a
//! header with the layout and a config snapshot, then fixed-width records
//! of IEEE-754 doubles, each protected by a CRC32.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::beamforming::per_beam_rates;
use crate::channel::{
    delay_channel_aligned, freq_channel, ArrayGeometry, ChannelError, FreqChannel, OfdmConfig,
    Pulse,
};
use crate::codebook::{beamsteering_codebook, Codebook};
use crate::geometry::{trace, Scene, Vec3};

const MAGIC: &[u8; 4] = b"CBF1";
const FORMAT_VERSION: u32 = 1;

/// Rectangular candidate grid at a fixed antenna height. Points sit at
/// `min + i * resolution` per axis, `i in [0, extent / resolution)`, so a
/// 20 m x 30 m area at 0.5 m spacing yields 40 x 60 = 2400 candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: f64,
    /// User antenna height in metres.
    pub height: f64,
}

impl GridSpec {
    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.resolution).round().max(0.0) as usize
    }

    pub fn ny(&self) -> usize {
        ((self.y_max - self.y_min) / self.resolution).round().max(0.0) as usize
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All candidate points in row-major (y-outer) order.
    pub fn points(&self) -> Vec<Vec3> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut pts = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                pts.push(Vec3::new(
                    self.x_min + ix as f64 * self.resolution,
                    self.y_min + iy as f64 * self.resolution,
                    self.height,
                ));
            }
        }
        pts
    }
}

/// One training example: where the user stood, what every BS heard on its
/// omni pattern, and how good every beam of every BS would have been.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub user_pos: Vec3,
    /// Received uplink pilot per BS over the first `K_DL` subcarriers.
    pub omni_rx: Vec<Vec<Complex64>>,
    /// Noiseless achievable rate of every codebook beam per BS.
    pub beam_rates: Vec<Vec<f64>>,
    /// Scenario label (e.g. `"los"` or `"nlos-bus"`).
    pub scenario_tag: String,
    /// True when `omni_rx` holds magnitude-only (RSSI) signatures.
    pub rssi: bool,
}

impl Sample {
    /// True when no BS delivers any positive beam rate (fully shadowed).
    pub fn all_rates_zero(&self) -> bool {
        self.beam_rates
            .iter()
            .all(|r| r.iter().all(|&x| x == 0.0))
    }
}

/// Everything needed to (re)generate a dataset. The snapshot is embedded in
/// the dataset header so downstream stages can rebuild channels per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub scene: Scene,
    pub grid: GridSpec,
    pub array: ArrayGeometry,
    pub ofdm: OfdmConfig,
    /// Codebook oversampling `(n_os_y, n_os_z)`.
    pub oversampling: (usize, usize),
    /// Number of downlink subcarriers fed to the model.
    pub k_dl: usize,
    /// Uplink pilot power in watts.
    pub uplink_power: f64,
    /// Uplink noise power per received pilot subcarrier in watts. `None`
    /// selects the physical default `ofdm.noise_power / K`: the OFDM
    /// demodulator confines each subcarrier to 1/K of the band, so only
    /// that fraction of the full-band receiver noise lands on it.
    pub uplink_noise: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub scenario_tag: String,
    pub max_bounces: usize,
    pub max_paths: usize,
    /// When set, beam-quality targets are estimated from noisy beam-sweep
    /// pilots instead of the noiseless channel.
    pub noisy_rates: bool,
    pub pulse: Pulse,
}

impl GenerationConfig {
    pub fn uplink_noise_power(&self) -> f64 {
        self.uplink_noise
            .unwrap_or(self.ofdm.noise_power / self.ofdm.k_subcarriers as f64)
    }

    pub fn codebook(&self) -> Codebook {
        beamsteering_codebook(&self.array, self.oversampling.0, self.oversampling.1)
    }

    pub fn n_bs(&self) -> usize {
        self.scene.bs_positions.len()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        self.scene.validate().map_err(DatasetError::Scene)?;
        self.ofdm.validate().map_err(DatasetError::Channel)?;
        if self.grid.is_empty() {
            return Err(DatasetError::EmptyGrid);
        }
        if self.n_samples > self.grid.len() {
            return Err(DatasetError::NotEnoughGridPoints {
                requested: self.n_samples,
                available: self.grid.len(),
            });
        }
        if self.k_dl == 0 || self.k_dl > self.ofdm.k_subcarriers {
            return Err(DatasetError::BadDownlinkCount {
                k_dl: self.k_dl,
                k: self.ofdm.k_subcarriers,
            });
        }
        Ok(())
    }
}

/// Dataset layout and provenance, persisted in the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub n_bs: usize,
    pub k_dl: usize,
    pub n_tr: usize,
    pub k_subcarriers: usize,
    pub seed: u64,
    /// SHA-256 (truncated hex) of the scene JSON.
    pub scene_hash: String,
    /// Full [`GenerationConfig`] snapshot as JSON.
    pub config_json: String,
}

impl DatasetMeta {
    pub fn generation_config(&self) -> Result<GenerationConfig, DatasetError> {
        Ok(serde_json::from_str(&self.config_json)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits off the tail of the sample list into its own dataset (same
    /// meta), e.g. for a held-out evaluation set.
    pub fn split_off(&mut self, at: usize) -> Dataset {
        let tail = self.samples.split_off(at);
        Dataset {
            meta: self.meta.clone(),
            samples: tail,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("candidate grid is empty")]
    EmptyGrid,
    #[error("requested {requested} samples but the grid has only {available} points")]
    NotEnoughGridPoints { requested: usize, available: usize },
    #[error("k_dl = {k_dl} must be in 1..={k}")]
    BadDownlinkCount { k_dl: usize, k: usize },
    #[error(transparent)]
    Scene(crate::geometry::SceneError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("not a dataset file (bad magic or version {found})")]
    FormatVersionMismatch { found: u32 },
    #[error("record {index} is corrupt (bad checksum or truncated)")]
    CorruptRecord { index: usize },
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset header json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Short content hash of a scene, for provenance checks across stages.
pub fn scene_hash(scene: &Scene) -> String {
    let mut hasher = Sha256::new();
    hasher.update(scene.to_json().as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Received uplink pilot on the omni pattern over the first `k_dl`
/// subcarriers: `sqrt(pilot_power / K) * h_k[0] + CN(0, noise_power)`.
pub fn omni_receive(
    fc: &FreqChannel,
    pilot_power: f64,
    noise_power: f64,
    k_dl: usize,
    rng: &mut impl Rng,
) -> Vec<Complex64> {
    assert!(k_dl <= fc.k_subcarriers());
    let amp = (pilot_power / fc.k_subcarriers() as f64).sqrt();
    let sigma = (noise_power / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite noise std");
    (0..k_dl)
        .map(|kk| {
            let noise = Complex64::new(normal.sample(rng), normal.sample(rng));
            fc.h[[kk, 0]] * amp + noise
        })
        .collect()
}

/// Wideband channels from every BS to one user location, with the receive
/// FFT window aligned to each BS's first arriving path. A fully shadowed
/// BS yields a zero channel.
pub fn location_channels(
    scene: &Scene,
    array: &ArrayGeometry,
    ofdm: &OfdmConfig,
    pulse: Pulse,
    max_bounces: usize,
    max_paths: usize,
    user: Vec3,
) -> Result<Vec<FreqChannel>, ChannelError> {
    (0..scene.bs_positions.len())
        .map(|bs| {
            let rays = trace(scene, bs, user, max_bounces, max_paths);
            let dc = delay_channel_aligned(&rays, array, ofdm, pulse)?;
            Ok(freq_channel(&dc, ofdm.k_subcarriers))
        })
        .collect()
}

/// Generates a dataset by sampling `n_samples` distinct grid locations
/// (uniformly, without replacement) and building the full (signature,
/// beam-rate) pair at each. Deterministic for a fixed config and seed.
pub fn generate(cfg: &GenerationConfig) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let points = cfg.grid.points();
    let cb = cfg.codebook();

    // Stream 0: location selection.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let chosen = rand::seq::index::sample(&mut rng, points.len(), cfg.n_samples);

    let indexed: Vec<(usize, usize)> = chosen.iter().enumerate().collect();
    let samples: Result<Vec<Sample>, DatasetError> = indexed
        .into_par_iter()
        .map(|(i, point_idx)| {
            // Stream i + 1: all noise draws for sample i.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            build_sample(cfg, &cb, points[point_idx], &mut rng)
        })
        .collect();
    let samples = samples?;

    let meta = DatasetMeta {
        n_bs: cfg.n_bs(),
        k_dl: cfg.k_dl,
        n_tr: cb.len(),
        k_subcarriers: cfg.ofdm.k_subcarriers,
        seed: cfg.seed,
        scene_hash: scene_hash(&cfg.scene),
        config_json: serde_json::to_string(cfg)?,
    };
    Ok(Dataset { meta, samples })
}

fn build_sample(
    cfg: &GenerationConfig,
    cb: &Codebook,
    user: Vec3,
    rng: &mut ChaCha8Rng,
) -> Result<Sample, DatasetError> {
    let channels = location_channels(
        &cfg.scene,
        &cfg.array,
        &cfg.ofdm,
        cfg.pulse,
        cfg.max_bounces,
        cfg.max_paths,
        user,
    )?;
    let uplink_noise = cfg.uplink_noise_power();
    let mut omni_rx = Vec::with_capacity(channels.len());
    let mut beam_rates = Vec::with_capacity(channels.len());
    for fc in &channels {
        omni_rx.push(omni_receive(
            fc,
            cfg.uplink_power,
            uplink_noise,
            cfg.k_dl,
            rng,
        ));
    }
    for fc in &channels {
        let rates = if cfg.noisy_rates {
            noisy_beam_rates(fc, cb, &cfg.ofdm, cfg.uplink_power, uplink_noise, rng)
        } else {
            per_beam_rates(fc, cb, &cfg.ofdm)
        };
        beam_rates.push(rates);
    }
    Ok(Sample {
        user_pos: user,
        omni_rx,
        beam_rates,
        scenario_tag: cfg.scenario_tag.clone(),
        rssi: false,
    })
}

/// Beam rates estimated from a noisy beam sweep: each per-subcarrier beam
/// gain is observed through a pilot of power `pilot_power / K`, so the gain
/// estimate carries additive noise of variance `noise_power * K /
/// pilot_power`.
fn noisy_beam_rates(
    fc: &FreqChannel,
    cb: &Codebook,
    ofdm: &OfdmConfig,
    pilot_power: f64,
    noise_power: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let k = fc.k_subcarriers();
    let snr = ofdm.snr_linear();
    let gains = fc.h.dot(&cb.codewords.t());
    let est_sigma = (noise_power * k as f64 / pilot_power / 2.0).sqrt();
    let normal = Normal::new(0.0, est_sigma).expect("finite noise std");
    let scale = 1.0 / k as f64;
    (0..cb.len())
        .map(|p| {
            gains
                .column(p)
                .iter()
                .map(|g| {
                    let noisy = g + Complex64::new(normal.sample(rng), normal.sample(rng));
                    (1.0 + snr * noisy.norm_sqr()).log2()
                })
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// Applies an independent uniform phase offset per BS to the received
/// signatures, modelling un-synchronised BS local oscillators. Rates are
/// unaffected (downlink beams are trained per BS).
pub fn perturb_phase(sample: &Sample, rng: &mut impl Rng) -> Sample {
    let mut out = sample.clone();
    for bs_rx in &mut out.omni_rx {
        let delta = rng.gen_range(0.0..std::f64::consts::TAU);
        let rot = Complex64::from_polar(1.0, delta);
        for r in bs_rx.iter_mut() {
            *r *= rot;
        }
    }
    out
}

/// Replaces each received signature entry by its magnitude (RSSI-only
/// inputs). Idempotent; downstream feature width halves.
pub fn to_rssi(sample: &Sample) -> Sample {
    let mut out = sample.clone();
    for bs_rx in &mut out.omni_rx {
        for r in bs_rx.iter_mut() {
            *r = Complex64::new(r.norm(), 0.0);
        }
    }
    out.rssi = true;
    out
}

// --- binary serialisation ---------------------------------------------------

#[derive(Serialize, Deserialize)]
struct HeaderJson {
    scene_hash: String,
    n_samples: u64,
    tags: Vec<String>,
    /// [`GenerationConfig`] snapshot, kept as the original JSON string so
    /// round trips are byte-stable.
    config: String,
}

fn record_width(meta: &DatasetMeta) -> usize {
    // tag_idx + flags + crc (u32 each) + 3 position doubles + complex rx +
    // rates.
    4 + 4 + 4 + 8 * (3 + 2 * meta.n_bs * meta.k_dl + meta.n_bs * meta.n_tr)
}

/// Writes the dataset in the versioned binary format. Byte-identical for
/// identical datasets.
pub fn save(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut tags: Vec<String> = Vec::new();
    for s in &dataset.samples {
        if !tags.contains(&s.scenario_tag) {
            tags.push(s.scenario_tag.clone());
        }
    }
    let header = HeaderJson {
        scene_hash: dataset.meta.scene_hash.clone(),
        n_samples: dataset.samples.len() as u64,
        tags: tags.clone(),
        config: dataset.meta.config_json.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;

    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [
        dataset.meta.n_bs as u32,
        dataset.meta.k_dl as u32,
        dataset.meta.n_tr as u32,
        dataset.meta.k_subcarriers as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&dataset.meta.seed.to_le_bytes())?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;

    let mut buf = Vec::with_capacity(record_width(&dataset.meta));
    for s in &dataset.samples {
        buf.clear();
        let tag_idx = tags.iter().position(|t| *t == s.scenario_tag).unwrap() as u32;
        buf.extend_from_slice(&tag_idx.to_le_bytes());
        let flags: u32 = if s.rssi { 1 } else { 0 };
        buf.extend_from_slice(&flags.to_le_bytes());
        for v in [s.user_pos.x, s.user_pos.y, s.user_pos.z] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for bs_rx in &s.omni_rx {
            for c in bs_rx {
                buf.extend_from_slice(&c.re.to_le_bytes());
                buf.extend_from_slice(&c.im.to_le_bytes());
            }
        }
        for bs_rates in &s.beam_rates {
            for r in bs_rates {
                buf.extend_from_slice(&r.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_corrupt(
    r: &mut impl Read,
    buf: &mut [u8],
    index: usize,
) -> Result<(), DatasetError> {
    r.read_exact(buf)
        .map_err(|_| DatasetError::CorruptRecord { index })
}

/// Loads a dataset written by [`save`], verifying the magic, version and
/// per-record checksums.
pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if magic != *MAGIC || version != FORMAT_VERSION {
        return Err(DatasetError::FormatVersionMismatch { found: version });
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        r.read_exact(&mut u32buf)?;
        *d = u32::from_le_bytes(u32buf) as usize;
    }
    let [n_bs, k_dl, n_tr, k_subcarriers] = dims;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let seed = u64::from_le_bytes(u64buf);
    r.read_exact(&mut u32buf)?;
    let json_len = u32::from_le_bytes(u32buf) as usize;
    let mut json_bytes = vec![0u8; json_len];
    r.read_exact(&mut json_bytes)?;
    let header: HeaderJson = serde_json::from_slice(&json_bytes)?;

    let meta = DatasetMeta {
        n_bs,
        k_dl,
        n_tr,
        k_subcarriers,
        seed,
        scene_hash: header.scene_hash,
        config_json: header.config,
    };

    let width = record_width(&meta);
    let mut samples = Vec::with_capacity(header.n_samples as usize);
    let mut buf = vec![0u8; width];
    for index in 0..header.n_samples as usize {
        read_exact_or_corrupt(&mut r, &mut buf, index)?;
        let body = &buf[..width - 4];
        let stored_crc = u32::from_le_bytes(buf[width - 4..].try_into().unwrap());
        if crc32fast::hash(body) != stored_crc {
            return Err(DatasetError::CorruptRecord { index });
        }
        let mut off = 0usize;
        let take_u32 = |off: &mut usize| {
            let v = u32::from_le_bytes(body[*off..*off + 4].try_into().unwrap());
            *off += 4;
            v
        };
        let tag_idx = take_u32(&mut off) as usize;
        let flags = take_u32(&mut off);
        let take_f64 = |off: &mut usize| {
            let v = f64::from_le_bytes(body[*off..*off + 8].try_into().unwrap());
            *off += 8;
            v
        };
        let user_pos = Vec3::new(take_f64(&mut off), take_f64(&mut off), take_f64(&mut off));
        let mut omni_rx = Vec::with_capacity(n_bs);
        for _ in 0..n_bs {
            let mut bs_rx = Vec::with_capacity(k_dl);
            for _ in 0..k_dl {
                let re = take_f64(&mut off);
                let im = take_f64(&mut off);
                bs_rx.push(Complex64::new(re, im));
            }
            omni_rx.push(bs_rx);
        }
        let mut beam_rates = Vec::with_capacity(n_bs);
        for _ in 0..n_bs {
            let mut bs_rates = Vec::with_capacity(n_tr);
            for _ in 0..n_tr {
                bs_rates.push(take_f64(&mut off));
            }
            beam_rates.push(bs_rates);
        }
        let scenario_tag = header
            .tags
            .get(tag_idx)
            .ok_or(DatasetError::CorruptRecord { index })?
            .clone();
        samples.push(Sample {
            user_pos,
            omni_rx,
            beam_rates,
            scenario_tag,
            rssi: flags & 1 != 0,
        });
    }
    // Trailing garbage means the file does not match its own header.
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DatasetError::CorruptRecord {
            index: header.n_samples as usize,
        });
    }
    Ok(Dataset { meta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::thermal_noise_power;
    use crate::geometry::occluded;
    use ndarray::Array2;

    fn small_config() -> GenerationConfig {
        GenerationConfig {
            scene: Scene::street_canyon(),
            grid: GridSpec {
                x_min: -2.0,
                x_max: 2.0,
                y_min: -2.0,
                y_max: 2.0,
                resolution: 1.0,
                height: 2.0,
            },
            array: ArrayGeometry::new(4, 2),
            ofdm: OfdmConfig {
                // CP must cover the street's delay spread (~220 ns worst case).
                k_subcarriers: 256,
                cp_length: 256,
                sample_period: 1e-9,
                tx_power: 1.0,
                noise_power: thermal_noise_power(1e9, 5.0),
            },
            oversampling: (1, 1),
            k_dl: 8,
            uplink_power: 1e-3,
            uplink_noise: None,
            n_samples: 10,
            seed: 77,
            scenario_tag: "los".into(),
            max_bounces: 1,
            max_paths: 8,
            noisy_rates: false,
            pulse: Pulse::DeltaNearest,
        }
    }

    // 1. Grid cardinality: the desk grid has 2400 candidates, the full
    //    street grid 240k.
    #[test]
    fn grid_point_counts() {
        let desk = GridSpec {
            x_min: -10.0,
            x_max: 10.0,
            y_min: -15.0,
            y_max: 15.0,
            resolution: 0.5,
            height: 2.0,
        };
        assert_eq!(desk.len(), 2400);
        assert_eq!(desk.points().len(), 2400);
        let full = GridSpec {
            x_min: -20.0,
            x_max: 20.0,
            y_min: -30.0,
            y_max: 30.0,
            resolution: 0.1,
            height: 2.0,
        };
        assert_eq!(full.len(), 240_000);
    }

    // 2. Noise-free pilot reception returns exactly the scaled first-antenna
    //    channel.
    #[test]
    fn omni_receive_noise_free() {
        let mut h = Array2::zeros((16, 4));
        for kk in 0..16 {
            h[[kk, 0]] = Complex64::new(kk as f64, -1.0);
            h[[kk, 1]] = Complex64::new(9.0, 9.0); // other antennas ignored
        }
        let fc = FreqChannel { h };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rx = omni_receive(&fc, 4.0, 0.0, 5, &mut rng);
        let amp = (4.0f64 / 16.0).sqrt();
        for (kk, r) in rx.iter().enumerate() {
            let expect = Complex64::new(kk as f64, -1.0) * amp;
            assert_eq!(*r, expect);
        }
    }

    // 3. Pilot noise has the configured per-subcarrier variance (Monte
    //    Carlo, zero channel).
    #[test]
    fn omni_receive_noise_variance() {
        let fc = FreqChannel::zero(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let sigma2 = 0.37;
        let mut acc = 0.0;
        let draws = 20_000;
        for _ in 0..draws {
            for r in omni_receive(&fc, 1.0, sigma2, 4, &mut rng) {
                acc += r.norm_sqr();
            }
        }
        let empirical = acc / (draws * 4) as f64;
        assert!(
            (empirical - sigma2).abs() < 0.05 * sigma2,
            "empirical variance {empirical} vs {sigma2}"
        );
    }

    // 4. Generation is deterministic: identical configs give identical
    //    datasets (bit-for-bit), regardless of rayon scheduling.
    #[test]
    fn generate_is_deterministic() {
        let cfg = small_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        // A different seed moves the noise and the location choice.
        let mut cfg2 = cfg.clone();
        cfg2.seed = 78;
        let c = generate(&cfg2).unwrap();
        assert_ne!(a, c);
    }

    // 5. Shape checks and tag propagation.
    #[test]
    fn generated_sample_shapes() {
        let cfg = small_config();
        let ds = generate(&cfg).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.meta.n_bs, 4);
        assert_eq!(ds.meta.n_tr, 8);
        for s in &ds.samples {
            assert_eq!(s.omni_rx.len(), 4);
            assert_eq!(s.beam_rates.len(), 4);
            assert!(s.omni_rx.iter().all(|r| r.len() == cfg.k_dl));
            assert!(s.beam_rates.iter().all(|r| r.len() == 8));
            assert_eq!(s.scenario_tag, "los");
            assert!(s.beam_rates.iter().flatten().all(|r| r.is_finite() && *r >= 0.0));
        }
    }

    // 6. Config validation: oversampled grids, empty grids, bad K_DL.
    #[test]
    fn generate_validation_errors() {
        let mut cfg = small_config();
        cfg.n_samples = 10_000;
        assert!(matches!(
            generate(&cfg),
            Err(DatasetError::NotEnoughGridPoints { .. })
        ));
        let mut cfg = small_config();
        cfg.grid.x_max = cfg.grid.x_min;
        assert!(matches!(generate(&cfg), Err(DatasetError::EmptyGrid)));
        let mut cfg = small_config();
        cfg.k_dl = 1000;
        assert!(matches!(
            generate(&cfg),
            Err(DatasetError::BadDownlinkCount { .. })
        ));
    }

    // 7. In the bus scene, a location shadowed from BS 2 gets zero rates
    //    from it (no rays at one bounce) while keeping service from others.
    #[test]
    fn bus_shadow_zeroes_blocked_bs() {
        let scene = Scene::street_canyon_with_bus();
        let user = Vec3::new(0.0, 0.0, 2.0);
        let bs2 = scene.bs_positions[2];
        assert!(occluded(bs2, user, &scene.blockers), "chosen point is shadowed");
        let mut cfg = small_config();
        cfg.scene = scene;
        cfg.scenario_tag = "nlos-bus".into();
        // Shrink the grid to guarantee the shadowed point is sampled.
        cfg.grid = GridSpec {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            resolution: 1.0,
            height: 2.0,
        };
        cfg.n_samples = 1;
        cfg.max_bounces = 0; // LOS only: shadowing must zero the channel
        let ds = generate(&cfg).unwrap();
        let s = &ds.samples[0];
        assert!(s.beam_rates[2].iter().all(|&r| r == 0.0));
        assert!(s.beam_rates[0].iter().any(|&r| r > 0.0));
    }

    // 8. Save/load round trip is lossless and byte-stable.
    #[test]
    fn save_load_round_trip() {
        let cfg = small_config();
        let ds = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.cbf");
        save(&ds, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(ds, loaded);
        // Re-saving the loaded dataset reproduces identical bytes.
        let path2 = dir.path().join("data2.cbf");
        save(&loaded, &path2).unwrap();
        let b1 = std::fs::read(&path).unwrap();
        let b2 = std::fs::read(&path2).unwrap();
        assert_eq!(b1, b2);
    }

    // 9. Corruption detection: wrong magic, flipped payload byte, truncation.
    #[test]
    fn load_detects_corruption() {
        let cfg = small_config();
        let ds = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.cbf");
        save(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        let p = dir.path().join("bad_magic.cbf");
        std::fs::write(&p, &bad_magic).unwrap();
        assert!(matches!(
            load(&p),
            Err(DatasetError::FormatVersionMismatch { .. })
        ));

        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 10] ^= 0xff;
        let p = dir.path().join("flipped.cbf");
        std::fs::write(&p, &flipped).unwrap();
        assert!(matches!(load(&p), Err(DatasetError::CorruptRecord { .. })));

        let truncated = &bytes[..bytes.len() - 7];
        let p = dir.path().join("truncated.cbf");
        std::fs::write(&p, truncated).unwrap();
        assert!(matches!(load(&p), Err(DatasetError::CorruptRecord { .. })));
    }

    // 10. Phase perturbation keeps magnitudes and rates; RSSI conversion is
    //     idempotent and non-negative.
    #[test]
    fn phase_and_rssi_transforms() {
        let cfg = small_config();
        let ds = generate(&cfg).unwrap();
        let s = &ds.samples[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = perturb_phase(s, &mut rng);
        assert_eq!(p.beam_rates, s.beam_rates);
        for (a, b) in p.omni_rx.iter().flatten().zip(s.omni_rx.iter().flatten()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
        assert_ne!(p.omni_rx, s.omni_rx, "phases actually moved");

        let r1 = to_rssi(s);
        let r2 = to_rssi(&r1);
        assert_eq!(r1, r2, "idempotent");
        assert!(r1.rssi);
        assert!(r1
            .omni_rx
            .iter()
            .flatten()
            .all(|c| c.re >= 0.0 && c.im == 0.0));
    }

    // 11. Noisy-rate mode is deterministic under the seed and differs from
    //     the noiseless targets.
    #[test]
    fn noisy_rates_deterministic() {
        let mut cfg = small_config();
        cfg.noisy_rates = true;
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let mut clean = small_config();
        clean.noisy_rates = false;
        let c = generate(&clean).unwrap();
        assert_ne!(a.samples[0].beam_rates, c.samples[0].beam_rates);
    }

    // 12. The config snapshot embedded in the header can rebuild the
    //     generating configuration.
    #[test]
    fn meta_snapshot_round_trips() {
        let cfg = small_config();
        let ds = generate(&cfg).unwrap();
        let back = ds.meta.generation_config().unwrap();
        assert_eq!(cfg, back);
        assert_eq!(ds.meta.scene_hash, scene_hash(&cfg.scene));
    }
}
