//! Forward non-subsampled shearlet transform.
//!
//! A channel is split by the nonsubsampled Laplacian pyramid into bandpass
//! planes; each bandpass plane is then cut into directional subbands by the
//! shearing windows of its scale. Every subband keeps the input resolution.
//!
//! Scales in [`NsstConfig`] and [`SubbandPyramid`] are numbered coarse to fine
//! (scale 1 is the coarsest bandpass). Inside the pyramid, level 0 is the
//! finest, so scale `s` is pyramid level `S - s`.

mod export;
mod filters;
mod pyramid;
mod shear;

use std::fmt;

use rustfft::num_complex::Complex64;

pub use export::write_subband_archive;
pub use filters::{design_pyramid_filters, PyramidFilters};
pub use pyramid::{nonsubsampled_pyramid, LaplacianPyramid};
pub use shear::{shear_filter_bank, ShearWindows, SUPPORTED_DIRECTIONS};

use crate::error::{Error, Result};
use crate::fft::Fft2d;

pub const MIN_PLANE_SIDE: usize = 16;

/// One image channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ChannelPlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width < MIN_PLANE_SIDE || height < MIN_PLANE_SIDE {
            return Err(Error::shape(format!(
                "plane must be at least {MIN_PLANE_SIDE}x{MIN_PLANE_SIDE}, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::shape(format!(
                "plane {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("plane contains non-finite values".into()));
        }
        Ok(Self::from_raw(width, height, values))
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        ChannelPlane {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Circular shift: output(x, y) = input(x - dx, y - dy).
    pub fn shifted(&self, dx: i64, dy: i64) -> ChannelPlane {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = vec![0.0; self.values.len()];
        for y in 0..h {
            let sy = (y - dy).rem_euclid(h);
            for x in 0..w {
                let sx = (x - dx).rem_euclid(w);
                out[(y * w + x) as usize] = self.values[(sy * w + sx) as usize];
            }
        }
        ChannelPlane::from_raw(self.width, self.height, out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NsstConfig {
    directions_per_scale: Vec<usize>,
    pyramid_filter_length: usize,
}

impl NsstConfig {
    /// `directions_per_scale` is ordered coarse to fine; its length is the scale count.
    pub fn new(directions_per_scale: Vec<usize>, pyramid_filter_length: usize) -> Result<Self> {
        if directions_per_scale.is_empty() {
            return Err(Error::config("at least one scale is required"));
        }
        if let Some(bad) = directions_per_scale
            .iter()
            .find(|d| !SUPPORTED_DIRECTIONS.contains(d))
        {
            return Err(Error::config(format!(
                "direction count {bad} not in {SUPPORTED_DIRECTIONS:?}"
            )));
        }
        design_pyramid_filters(pyramid_filter_length)?;
        Ok(NsstConfig {
            directions_per_scale,
            pyramid_filter_length,
        })
    }

    /// Like [`NsstConfig::new`] but also checks a separately declared scale count.
    pub fn with_scales(
        scales: usize,
        directions_per_scale: Vec<usize>,
        pyramid_filter_length: usize,
    ) -> Result<Self> {
        if scales != directions_per_scale.len() {
            return Err(Error::config(format!(
                "{scales} scales declared but {} direction counts given",
                directions_per_scale.len()
            )));
        }
        Self::new(directions_per_scale, pyramid_filter_length)
    }

    pub fn scales(&self) -> usize {
        self.directions_per_scale.len()
    }

    pub fn directions_per_scale(&self) -> &[usize] {
        &self.directions_per_scale
    }

    /// Direction count at 1-based `scale`.
    pub fn directions(&self, scale: usize) -> usize {
        self.directions_per_scale[scale - 1]
    }

    pub fn pyramid_filter_length(&self) -> usize {
        self.pyramid_filter_length
    }

    pub fn band_count(&self) -> usize {
        self.directions_per_scale.iter().sum()
    }

    pub fn has_uniform_directions(&self) -> bool {
        self.directions_per_scale
            .windows(2)
            .all(|w| w[0] == w[1])
    }
}

impl Default for NsstConfig {
    fn default() -> Self {
        NsstConfig {
            directions_per_scale: vec![4, 8, 16],
            pyramid_filter_length: 8,
        }
    }
}

impl fmt::Display for NsstConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dirs: Vec<String> = self.directions_per_scale.iter().map(|d| d.to_string()).collect();
        write!(
            f,
            "scales={} dirs={} filter={}",
            self.scales(),
            dirs.join(","),
            self.pyramid_filter_length
        )
    }
}

#[derive(Debug, Clone)]
pub struct SubbandPyramid {
    config: NsstConfig,
    lowpass: ChannelPlane,
    bands: Vec<Vec<ChannelPlane>>,
}

impl SubbandPyramid {
    pub fn config(&self) -> &NsstConfig {
        &self.config
    }

    pub fn lowpass(&self) -> &ChannelPlane {
        &self.lowpass
    }

    /// Directional band at 1-based `(scale, direction)`.
    pub fn band(&self, scale: usize, direction: usize) -> &ChannelPlane {
        &self.bands[scale - 1][direction - 1]
    }

    /// All directional bands ordered by (scale, direction).
    pub fn bands(&self) -> impl Iterator<Item = ((usize, usize), &ChannelPlane)> {
        self.bands.iter().enumerate().flat_map(|(s, row)| {
            row.iter()
                .enumerate()
                .map(move |(d, plane)| ((s + 1, d + 1), plane))
        })
    }

    pub fn band_count(&self) -> usize {
        self.bands.iter().map(Vec::len).sum()
    }

    pub fn into_bands(self) -> Vec<Vec<ChannelPlane>> {
        self.bands
    }
}

/// Decomposer with filter responses and windows precomputed for one plane size.
/// Immutable after construction, so one instance can serve many threads.
pub struct Nsst {
    config: NsstConfig,
    width: usize,
    height: usize,
    fft: Fft2d,
    /// Lowpass response per pyramid level (level 0 finest).
    level_lowpass: Vec<Vec<f64>>,
    /// Shear windows per scale (index 0 = scale 1, coarsest).
    windows: Vec<ShearWindows>,
}

impl Nsst {
    pub fn new(config: &NsstConfig, width: usize, height: usize) -> Result<Self> {
        let scales = config.scales();
        if scales >= usize::BITS as usize || width < (1 << scales) || height < (1 << scales) {
            return Err(Error::Decomposition(format!(
                "{width}x{height} plane is too small for {scales} scales"
            )));
        }
        let filters = design_pyramid_filters(config.pyramid_filter_length())?;
        let level_lowpass = (0..scales)
            .map(|level| pyramid::level_lowpass_response(&filters, level, width, height))
            .collect();
        let windows = config
            .directions_per_scale()
            .iter()
            .map(|&d| shear_filter_bank(d, width, height))
            .collect::<Result<Vec<_>>>()?;
        Ok(Nsst {
            config: config.clone(),
            width,
            height,
            fft: Fft2d::new(width, height),
            level_lowpass,
            windows,
        })
    }

    pub fn config(&self) -> &NsstConfig {
        &self.config
    }

    pub fn decompose(&self, plane: &ChannelPlane) -> Result<SubbandPyramid> {
        if plane.width() != self.width || plane.height() != self.height {
            return Err(Error::shape(format!(
                "decomposer built for {}x{}, got {}x{}",
                self.width,
                self.height,
                plane.width(),
                plane.height()
            )));
        }
        let scales = self.config.scales();
        let mut approx = self.fft.forward_real(plane.values());
        let mut details: Vec<Vec<Complex64>> = Vec::with_capacity(scales);
        for lo in &self.level_lowpass {
            details.push(approx.iter().zip(lo).map(|(a, &l)| a * (1.0 - l)).collect());
            for (a, &l) in approx.iter_mut().zip(lo) {
                *a *= l;
            }
        }

        let mut bands = Vec::with_capacity(scales);
        for (scale_idx, windows) in self.windows.iter().enumerate() {
            let detail = &details[scales - 1 - scale_idx];
            let row = windows
                .iter()
                .map(|win| {
                    let spectrum = detail.iter().zip(win).map(|(c, &w)| c * w).collect();
                    ChannelPlane::from_raw(self.width, self.height, self.fft.inverse_real(spectrum))
                })
                .collect();
            bands.push(row);
        }

        Ok(SubbandPyramid {
            config: self.config.clone(),
            lowpass: ChannelPlane::from_raw(self.width, self.height, self.fft.inverse_real(approx)),
            bands,
        })
    }
}

/// One-shot decomposition; prefer [`Nsst`] when transforming many planes of one size.
pub fn nsst_decompose(plane: &ChannelPlane, config: &NsstConfig) -> Result<SubbandPyramid> {
    Nsst::new(config, plane.width(), plane.height())?.decompose(plane)
}
