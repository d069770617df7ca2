//! Maximally-flat half-band filters for the nonsubsampled pyramid.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Zero-phase analysis pair. Taps are centered: index `taps.len() / 2` is n = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidFilters {
    length: usize,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl PyramidFilters {
    /// Nominal length the pair was designed from (the flatness degree is `length / 2`).
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    pub fn lowpass_response(&self, omega: f64) -> f64 {
        zero_phase_response(&self.lowpass, omega)
    }

    pub fn highpass_response(&self, omega: f64) -> f64 {
        zero_phase_response(&self.highpass, omega)
    }
}

/// Frequency response of a symmetric, centered tap vector (purely real).
pub(crate) fn zero_phase_response(taps: &[f64], omega: f64) -> f64 {
    let center = (taps.len() / 2) as i64;
    taps.iter()
        .enumerate()
        .map(|(i, &h)| h * ((i as i64 - center) as f64 * omega).cos())
        .sum()
}

/// Designs the maximally-flat half-band lowpass of flatness degree `K = length / 2`,
///
/// `H(w) = cos^2K(w/2) * sum_{j<K} C(K-1+j, j) sin^2j(w/2)`,
///
/// and its complement `1 - H`. Both responses lie in `[0, 1]` and sum to one,
/// so the pyramid reconstructs with identity synthesis filters.
pub fn design_pyramid_filters(length: usize) -> Result<PyramidFilters> {
    if length % 2 != 0 || !(2..=32).contains(&length) {
        return Err(Error::config(format!(
            "pyramid filter length must be even and within 2..=32, got {length}"
        )));
    }
    let degree = length / 2;
    // H is a cosine polynomial of order 2K - 1; sampling it on a grid finer
    // than 4K points and projecting onto cos(n w) recovers the taps exactly
    // while avoiding the cancellation of expanding the binomial sum.
    let order = 2 * degree - 1;
    let grid = 8 * (order + 1);
    let samples: Vec<f64> = (0..grid)
        .map(|k| maxflat_response(degree, 2.0 * PI * k as f64 / grid as f64))
        .collect();
    let mut lowpass = vec![0.0; 2 * order + 1];
    for n in 0..=order {
        let tap = samples
            .iter()
            .enumerate()
            .map(|(k, &h)| h * (2.0 * PI * (n * k) as f64 / grid as f64).cos())
            .sum::<f64>()
            / grid as f64;
        lowpass[order + n] = tap;
        lowpass[order - n] = tap;
    }
    let center = lowpass.len() / 2;
    let highpass = lowpass
        .iter()
        .enumerate()
        .map(|(i, &h)| if i == center { 1.0 - h } else { -h })
        .collect();

    Ok(PyramidFilters {
        length,
        lowpass,
        highpass,
    })
}

/// Closed-form maximally-flat half-band response of flatness degree `degree`.
fn maxflat_response(degree: usize, omega: f64) -> f64 {
    let c = (0.5 * omega).cos().powi(2);
    let s = (0.5 * omega).sin().powi(2);
    let tail: f64 = (0..degree)
        .map(|j| binomial(degree - 1 + j, j) * s.powi(j as i32))
        .sum();
    c.powi(degree as i32) * tail
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
