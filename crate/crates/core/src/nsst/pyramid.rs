//! À-trous nonsubsampled Laplacian pyramid with circular boundaries.

use std::f64::consts::PI;

use super::filters::PyramidFilters;
use super::ChannelPlane;
use crate::error::{Error, Result};
use crate::fft::Fft2d;

/// Output of [`nonsubsampled_pyramid`]. `details[0]` is the finest level
/// (unupsampled filter); level `j` (zero-based) used the filter upsampled by `2^j`.
#[derive(Debug, Clone)]
pub struct LaplacianPyramid {
    pub lowpass: ChannelPlane,
    pub details: Vec<ChannelPlane>,
}

impl LaplacianPyramid {
    /// Synthesis with identity filters: lowpass plus every detail plane.
    pub fn reconstruct(&self) -> ChannelPlane {
        let mut values = self.lowpass.values().to_vec();
        for d in &self.details {
            for (acc, &v) in values.iter_mut().zip(d.values()) {
                *acc += v;
            }
        }
        ChannelPlane::from_raw(self.lowpass.width(), self.lowpass.height(), values)
    }
}

/// Separable 2-D lowpass response at pyramid level `level` (zero-based),
/// sampled on the DFT grid of a `width x height` plane.
pub(crate) fn level_lowpass_response(
    filters: &PyramidFilters,
    level: usize,
    width: usize,
    height: usize,
) -> Vec<f64> {
    let up = (1usize << level) as f64;
    let along = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|k| filters.lowpass_response(up * 2.0 * PI * k as f64 / n as f64))
            .collect()
    };
    let hx = along(width);
    let hy = along(height);
    let mut out = Vec::with_capacity(width * height);
    for &y in &hy {
        out.extend(hx.iter().map(|&x| x * y));
    }
    out
}

/// Splits `plane` into a lowpass residual and `scales` bandpass planes.
///
/// Level `j` applies the separable lowpass upsampled by `2^j` to the previous
/// approximation and keeps the difference as its detail plane. Filtering is
/// circular convolution, carried out as a product on the DFT grid.
pub fn nonsubsampled_pyramid(
    plane: &ChannelPlane,
    scales: usize,
    filters: &PyramidFilters,
) -> Result<LaplacianPyramid> {
    if scales == 0 {
        return Err(Error::config("pyramid needs at least one scale"));
    }
    let (w, h) = (plane.width(), plane.height());
    let fft = Fft2d::new(w, h);
    let mut approx = fft.forward_real(plane.values());
    let mut details = Vec::with_capacity(scales);
    for level in 0..scales {
        let lo = level_lowpass_response(filters, level, w, h);
        let detail: Vec<_> = approx.iter().zip(&lo).map(|(a, &l)| a * (1.0 - l)).collect();
        details.push(ChannelPlane::from_raw(w, h, fft.inverse_real(detail)));
        for (a, &l) in approx.iter_mut().zip(&lo) {
            *a *= l;
        }
    }
    Ok(LaplacianPyramid {
        lowpass: ChannelPlane::from_raw(w, h, fft.inverse_real(approx)),
        details,
    })
}
