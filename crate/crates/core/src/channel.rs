//! Uniform planar array (UPA) responses and wideband OFDM channel
//! construction from traced rays.
//!
//! Each base station carries an `m_y x m_z` UPA in the y-z plane of its
//! local (broadside) frame with a single RF chain behind it. A traced
//! [`RayPath`](crate::geometry::RayPath) set is first turned into a tapped
//! delay-domain channel, one `M`-vector per sample-spaced tap inside the
//! cyclic prefix:
//!
//! `h_d = sum_l sqrt(M / rho_l) * alpha_l * p(d T_s - tau_l) * a(az_l, el_l)`
//!
//! where `p` is the pulse shape, `rho_l` the free-space pathloss of the
//! path and `a` the unit-norm array response. A `K`-point DFT over the tap
//! axis then yields the per-subcarrier frequency channel
//! `h_k = sum_d h_d e^{-j 2 pi k d / K}`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RayPath;

/// Antenna panel layout: `m_y` columns along the horizontal axis of the
/// array face, `m_z` rows along the vertical, element pitch in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub m_y: usize,
    pub m_z: usize,
    /// Element spacing in carrier wavelengths (0.5 = half wavelength).
    pub spacing: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spaced panel.
    pub fn new(m_y: usize, m_z: usize) -> Self {
        Self {
            m_y,
            m_z,
            spacing: 0.5,
        }
    }

    /// Total element count `M`.
    pub fn elements(&self) -> usize {
        self.m_y * self.m_z
    }
}

/// OFDM numerology and link power budget. `noise_power` is the noise power
/// per received subcarrier in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub k_subcarriers: usize,
    /// Cyclic prefix length in samples; also the delay-tap buffer depth `D`.
    pub cp_length: usize,
    /// Sample period in seconds (`1 / bandwidth`).
    pub sample_period: f64,
    /// Total downlink transmit power in watts.
    pub tx_power: f64,
    /// Receiver noise power per subcarrier in watts.
    pub noise_power: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("path delay {delay:.3e}s exceeds the cyclic prefix span {max:.3e}s")]
    DelayOverflow { delay: f64, max: f64 },
    #[error("cyclic prefix length {cp} exceeds the subcarrier count {k}")]
    CyclicPrefixTooLong { cp: usize, k: usize },
    #[error("OFDM config field {field} must be positive")]
    NonPositive { field: &'static str },
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.k_subcarriers == 0 {
            return Err(ChannelError::NonPositive {
                field: "k_subcarriers",
            });
        }
        if self.cp_length > self.k_subcarriers {
            return Err(ChannelError::CyclicPrefixTooLong {
                cp: self.cp_length,
                k: self.k_subcarriers,
            });
        }
        for (field, v) in [
            ("sample_period", self.sample_period),
            ("tx_power", self.tx_power),
            ("noise_power", self.noise_power),
        ] {
            if !(v > 0.0) {
                return Err(ChannelError::NonPositive { field });
            }
        }
        Ok(())
    }

    /// Downlink SNR before beamforming gain: total power split evenly over
    /// subcarriers against the per-subcarrier noise, `P / (K sigma^2)`.
    pub fn snr_linear(&self) -> f64 {
        self.tx_power / (self.k_subcarriers as f64 * self.noise_power)
    }
}

/// Thermal noise power in watts over `bandwidth_hz` with the given receiver
/// noise figure: `-174 dBm/Hz + 10 log10(B) + NF`.
pub fn thermal_noise_power(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    dbm_to_watts(-174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Transmit pulse shape evaluated at the receive matched-filter output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pulse {
    /// Ideal sampling: a path contributes only to its nearest tap
    /// (`|t| < T_s / 2`).
    DeltaNearest,
    /// Raised-cosine pulse with the given roll-off in [0, 1]; 0 degenerates
    /// to the ideal sinc.
    RaisedCosine { rolloff: f64 },
}

impl Pulse {
    /// Pulse amplitude at time `t` for sample period `t_s`.
    pub fn eval(&self, t: f64, t_s: f64) -> f64 {
        match *self {
            Pulse::DeltaNearest => {
                if t.abs() < 0.5 * t_s {
                    1.0
                } else {
                    0.0
                }
            }
            Pulse::RaisedCosine { rolloff } => raised_cosine(t / t_s, rolloff),
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Raised-cosine pulse in normalised time `x = t / T_s`, with the removable
/// singularity at `|x| = 1 / (2 beta)` filled by its limit.
fn raised_cosine(x: f64, beta: f64) -> f64 {
    if beta > 0.0 {
        let edge = 1.0 / (2.0 * beta);
        if (x.abs() - edge).abs() < 1e-12 {
            return std::f64::consts::FRAC_PI_4 * sinc(edge);
        }
    }
    let q = 2.0 * beta * x;
    sinc(x) * (std::f64::consts::PI * beta * x).cos() / (1.0 - q * q)
}

/// Tapped delay-domain MIMO channel: `taps[[d, m]]` is the tap-`d`
/// coefficient seen at antenna `m`. `D = cp_length` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayChannel {
    pub taps: Array2<Complex64>,
}

/// Per-subcarrier frequency-domain channel: `h[[k, m]]` for subcarrier `k`,
/// antenna `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannel {
    pub h: Array2<Complex64>,
}

impl FreqChannel {
    pub fn k_subcarriers(&self) -> usize {
        self.h.nrows()
    }

    pub fn elements(&self) -> usize {
        self.h.ncols()
    }

    /// A zero channel (fully shadowed location).
    pub fn zero(k_subcarriers: usize, elements: usize) -> Self {
        Self {
            h: Array2::zeros((k_subcarriers, elements)),
        }
    }
}

/// Array response of the panel for a plane wave from `(azimuth, elevation)`
/// in the face frame. Entry `(i_y, i_z)` (flattened as `i_z * m_y + i_y`)
/// carries phase `2 pi spacing (i_y cos(el) sin(az) + i_z sin(el))`; the
/// vector has unit norm, so every entry has modulus `1/sqrt(M)`.
pub fn array_response(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> Array1<Complex64> {
    let m = geom.elements();
    let scale = 1.0 / (m as f64).sqrt();
    let u = elevation.cos() * azimuth.sin();
    let v = elevation.sin();
    let mut a = Array1::zeros(m);
    for iz in 0..geom.m_z {
        for iy in 0..geom.m_y {
            let phase =
                2.0 * std::f64::consts::PI * geom.spacing * (iy as f64 * u + iz as f64 * v);
            a[iz * geom.m_y + iy] = Complex64::from_polar(scale, phase);
        }
    }
    a
}

/// Builds the tapped delay channel from traced rays with delays taken as
/// absolute propagation delays. Fails with [`ChannelError::DelayOverflow`]
/// when a path falls outside the cyclic prefix span `(D - 1) T_s`.
pub fn delay_channel(
    rays: &[RayPath],
    geom: &ArrayGeometry,
    ofdm: &OfdmConfig,
    pulse: Pulse,
) -> Result<DelayChannel, ChannelError> {
    build_delay_channel(rays, geom, ofdm, pulse, 0.0)
}

/// Like [`delay_channel`] but with the receiver FFT window aligned to the
/// first arriving path: all delays are re-referenced to the earliest one, so
/// the tap buffer only has to cover the delay *spread*. Per-subcarrier
/// magnitudes (and therefore rates) are unaffected by this common shift.
pub fn delay_channel_aligned(
    rays: &[RayPath],
    geom: &ArrayGeometry,
    ofdm: &OfdmConfig,
    pulse: Pulse,
) -> Result<DelayChannel, ChannelError> {
    let first = rays
        .iter()
        .map(|r| r.delay)
        .fold(f64::INFINITY, f64::min);
    let offset = if first.is_finite() { first } else { 0.0 };
    build_delay_channel(rays, geom, ofdm, pulse, offset)
}

fn build_delay_channel(
    rays: &[RayPath],
    geom: &ArrayGeometry,
    ofdm: &OfdmConfig,
    pulse: Pulse,
    delay_offset: f64,
) -> Result<DelayChannel, ChannelError> {
    let d_taps = ofdm.cp_length;
    let t_s = ofdm.sample_period;
    let max_delay = (d_taps.saturating_sub(1)) as f64 * t_s;
    let m = geom.elements();
    let mut taps = Array2::<Complex64>::zeros((d_taps, m));
    for ray in rays {
        let tau = ray.delay - delay_offset;
        if tau > max_delay {
            return Err(ChannelError::DelayOverflow {
                delay: tau,
                max: max_delay,
            });
        }
        // Per-path amplitude sqrt(M / rho): the pathloss normalisation keeps
        // the array response unit-norm while each antenna sees the physical
        // amplitude alpha / sqrt(rho).
        let amp = (m as f64 / ray.pathloss).sqrt();
        let g = ray.complex_gain * amp;
        let a = array_response(geom, ray.aoa_azimuth, ray.aoa_elevation);
        for d in 0..d_taps {
            let w = pulse.eval(d as f64 * t_s - tau, t_s);
            if w != 0.0 {
                let gw = g * w;
                for mm in 0..m {
                    taps[[d, mm]] += gw * a[mm];
                }
            }
        }
    }
    Ok(DelayChannel { taps })
}

/// `K`-point DFT of the tap axis: `h_k = sum_d h_d e^{-j 2 pi k d / K}`,
/// computed with an FFT per antenna element.
pub fn freq_channel(dc: &DelayChannel, k_subcarriers: usize) -> FreqChannel {
    let d = dc.taps.nrows();
    let m = dc.taps.ncols();
    assert!(
        d <= k_subcarriers,
        "tap count {d} must not exceed the subcarrier count {k_subcarriers}"
    );
    let fft = FftPlanner::new().plan_fft_forward(k_subcarriers);
    let mut h = Array2::zeros((k_subcarriers, m));
    let mut buf = vec![Complex64::new(0.0, 0.0); k_subcarriers];
    for col in 0..m {
        buf.fill(Complex64::new(0.0, 0.0));
        for (dd, slot) in buf.iter_mut().enumerate().take(d) {
            *slot = dc.taps[[dd, col]];
        }
        fft.process(&mut buf);
        for (kk, value) in buf.iter().enumerate() {
            h[[kk, col]] = *value;
        }
    }
    FreqChannel { h }
}
