//! Frequency-domain shearing windows.
//!
//! The plane of (normalized) frequencies is parameterized by a pseudo-polar
//! slope coordinate `p in [0, 4)`. In the horizontal cone (`|xi_v| <= |xi_u|`)
//! `p = 1 + xi_v / xi_u`, in the vertical cone `p = 3 - xi_u / xi_v`. Equal
//! steps of `p` are equal shears, so each direction's support is a pair of
//! trapezoids symmetric about the origin. Neighboring windows overlap through
//! a Meyer transition, which makes the squared windows sum to one.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::fft::signed_frequency;

pub const SUPPORTED_DIRECTIONS: [usize; 5] = [2, 4, 8, 16, 32];

/// Fraction of a direction segment taken by each Meyer transition (per side).
const TRANSITION: f64 = 0.25;

/// One real, nonnegative window per direction, row-major over DFT bins.
#[derive(Debug, Clone)]
pub struct ShearWindows {
    width: usize,
    height: usize,
    windows: Vec<Vec<f64>>,
}

impl ShearWindows {
    pub fn num_directions(&self) -> usize {
        self.windows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Window for direction index `d` (zero-based).
    pub fn window(&self, d: usize) -> &[f64] {
        &self.windows[d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.windows.iter().map(Vec::as_slice)
    }
}

pub fn shear_filter_bank(num_directions: usize, width: usize, height: usize) -> Result<ShearWindows> {
    if !SUPPORTED_DIRECTIONS.contains(&num_directions) {
        return Err(Error::config(format!(
            "direction count must be one of {SUPPORTED_DIRECTIONS:?}, got {num_directions}"
        )));
    }
    if width < 16 || height < 16 {
        return Err(Error::config(format!(
            "shear windows need at least 16x16 bins, got {width}x{height}"
        )));
    }

    let mut windows = vec![vec![0.0; width * height]; num_directions];
    let uniform = (1.0 / num_directions as f64).sqrt();
    let mut reps = Vec::with_capacity(4);
    let mut energy = vec![0.0; num_directions];

    for ky in 0..height {
        let v = signed_frequency(ky, height);
        let v_reps: &[i64] = if 2 * v.unsigned_abs() as usize == height { &[v, -v] } else { &[v] };
        for kx in 0..width {
            let u = signed_frequency(kx, width);
            let idx = ky * width + kx;
            if u == 0 && v == 0 {
                for w in windows.iter_mut() {
                    w[idx] = uniform;
                }
                continue;
            }
            // A Nyquist bin is its own mirror; averaging the squared windows
            // over both signed readings keeps W(k) = W(-k) and the tiling exact.
            let u_reps: &[i64] = if 2 * u.unsigned_abs() as usize == width { &[u, -u] } else { &[u] };
            reps.clear();
            for &uu in u_reps {
                for &vv in v_reps {
                    reps.push(pseudo_angle(uu as f64 / width as f64, vv as f64 / height as f64));
                }
            }
            energy.iter_mut().for_each(|e| *e = 0.0);
            for &p in &reps {
                for (d, e) in energy.iter_mut().enumerate() {
                    *e += direction_weight(p, d, num_directions).powi(2);
                }
            }
            let n = reps.len() as f64;
            for (w, e) in windows.iter_mut().zip(&energy) {
                w[idx] = (e / n).sqrt();
            }
        }
    }

    Ok(ShearWindows {
        width,
        height,
        windows,
    })
}

/// Slope coordinate in `[0, 4)`; invariant under `(xi_u, xi_v) -> (-xi_u, -xi_v)`.
fn pseudo_angle(xi_u: f64, xi_v: f64) -> f64 {
    let p = if xi_v.abs() <= xi_u.abs() {
        1.0 + xi_v / xi_u
    } else {
        3.0 - xi_u / xi_v
    };
    p.rem_euclid(4.0)
}

fn direction_weight(p: f64, d: usize, num_directions: usize) -> f64 {
    let seg = 4.0 / num_directions as f64;
    let center = (d as f64 + 0.5) * seg;
    let mut q = (p - center).rem_euclid(4.0);
    if q > 2.0 {
        q -= 4.0;
    }
    let half = 0.5 * seg;
    let eps = TRANSITION * seg;
    let q = q.abs();
    if q <= half - eps {
        1.0
    } else if q >= half + eps {
        0.0
    } else {
        let t = (q - (half - eps)) / (2.0 * eps);
        (FRAC_PI_2 * meyer(t)).cos()
    }
}

/// Meyer auxiliary polynomial: 0 at 0, 1 at 1, and `meyer(1 - t) = 1 - meyer(t)`.
fn meyer(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
}
