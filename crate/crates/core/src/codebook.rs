//! Beamsteering codebooks for analog phase-shifter beamforming.
//!
//! The codebook quantises the array's field of view on a grid that is
//! uniform in directional cosines: `sin(azimuth)` for the horizontal axis
//! and `sin(elevation)` for the vertical, with `m * n_os` points per axis
//! (`n_os` = oversampling factor). Each codeword is the conjugated array
//! response at a grid angle, so applying it steers a constant-modulus,
//! unit-norm beam at that direction — realisable with phase shifters only.
//!
//! Codeword `p` for elevation index `j` and azimuth index `i` sits at
//! `p = j * p_y + i` (elevation-major ordering).

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::channel::{array_response, ArrayGeometry};

/// A beamsteering codebook: one unit-norm, constant-modulus codeword per
/// quantised direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// Codewords, one row per beam (`n_tr x M`).
    pub codewords: Array2<Complex64>,
    /// Steering direction `(azimuth, elevation)` in radians per codeword.
    pub angle_grid: Vec<(f64, f64)>,
    /// Oversampling factors `(n_os_y, n_os_z)` used to build the grid.
    pub oversampling: (usize, usize),
    /// Panel layout the codebook was built for.
    pub geom: ArrayGeometry,
}

impl Codebook {
    /// Number of codewords (training beams).
    pub fn len(&self) -> usize {
        self.codewords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.nrows() == 0
    }

    /// Grid extent per axis: `(p_y, p_z)` azimuth/elevation point counts.
    pub fn grid_shape(&self) -> (usize, usize) {
        (
            self.geom.m_y * self.oversampling.0,
            self.geom.m_z * self.oversampling.1,
        )
    }
}

/// Builds the beamsteering codebook for `geom` with the given per-axis
/// oversampling factors. The grid places `p = m * n_os` points per axis at
/// directional cosines `-1 + (2 i + 1) / p`, i.e. uniformly spaced with a
/// half-step offset that avoids the degenerate endfire directions.
pub fn beamsteering_codebook(geom: &ArrayGeometry, n_os_y: usize, n_os_z: usize) -> Codebook {
    assert!(n_os_y > 0 && n_os_z > 0, "oversampling must be positive");
    let p_y = geom.m_y * n_os_y;
    let p_z = geom.m_z * n_os_z;
    let n_tr = p_y * p_z;
    let m = geom.elements();
    let mut codewords = Array2::zeros((n_tr, m));
    let mut angle_grid = Vec::with_capacity(n_tr);
    for j in 0..p_z {
        let sin_el = -1.0 + (2 * j + 1) as f64 / p_z as f64;
        let el = sin_el.asin();
        for i in 0..p_y {
            let sin_az = -1.0 + (2 * i + 1) as f64 / p_y as f64;
            let az = sin_az.asin();
            let a = array_response(geom, az, el);
            let p = j * p_y + i;
            for (mm, value) in a.iter().enumerate() {
                codewords[[p, mm]] = value.conj();
            }
            angle_grid.push((az, el));
        }
    }
    Codebook {
        codewords,
        angle_grid,
        oversampling: (n_os_y, n_os_z),
        geom: *geom,
    }
}

/// The omni probing pattern: all power on the first antenna element. Used
/// during uplink pilot collection so that every BS sees the user with a
/// direction-independent (single-antenna) gain.
pub fn omni_pattern(elements: usize) -> Array1<Complex64> {
    let mut g = Array1::zeros(elements);
    g[0] = Complex64::new(1.0, 0.0);
    g
}
