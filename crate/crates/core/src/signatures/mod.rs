//! Per-image retrieval signatures: fitted marginals for every directional
//! subband of the three color channels plus one correlation matrix per
//! dependency group of the chosen scheme.

mod chi;
mod neighbors;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

pub use chi::{
    chi_plot, dependence_stats, histogram, kendall_tau_b, pearson, ChiPlot, ChiPoint, DependenceStats,
    CHI_BAND_95, MIN_CHI_SAMPLES,
};
pub use neighbors::{
    build_neighbor_matrix, mutual_information, neighbor_column, select_intra_scale_neighbor,
    NeighborWindow, MI_BINS, MIN_MI_SAMPLES, NEIGHBOR_OFFSETS,
};

use crate::copula::{gaussian_score, shrunk_correlation, CopulaGroup, MIN_SIGMA_ROWS};
use crate::error::{Error, Result};
use crate::marginals::{fit_marginal, Family, FitFlags, GgParams, MarginalModel, TlsParams, TLS_NU_RANGE};
use crate::nsst::{ChannelPlane, Nsst, NsstConfig};

/// Color channels per image, in (R, G, B) order.
pub const CHANNELS: usize = 3;

/// One directional subband: 0-based channel, 1-based scale (coarse to fine)
/// and 1-based direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubbandId {
    pub channel: u8,
    pub scale: u8,
    pub direction: u8,
}

impl SubbandId {
    pub const fn new(channel: u8, scale: u8, direction: u8) -> Self {
        SubbandId {
            channel,
            scale,
            direction,
        }
    }
}

impl fmt::Display for SubbandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}_s{}_d{}", self.channel, self.scale, self.direction)
    }
}

impl FromStr for SubbandId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("subband id `{s}` is not of the form c<k>_s<k>_d<k>"));
        let mut parts = s.split('_');
        let mut field = |prefix: char| -> Result<u8> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(prefix))
                .and_then(|p| p.parse().ok())
                .ok_or_else(bad)
        };
        let id = SubbandId::new(field('c')?, field('s')?, field('d')?);
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(id)
    }
}

/// All directional subbands of `config`, ordered by (channel, scale, direction).
pub fn subband_ids(config: &NsstConfig) -> Vec<SubbandId> {
    let mut ids = Vec::with_capacity(CHANNELS * config.band_count());
    for c in 0..CHANNELS {
        for (s, &dirs) in config.directions_per_scale().iter().enumerate() {
            for d in 0..dirs {
                ids.push(SubbandId::new(c as u8, (s + 1) as u8, (d + 1) as u8));
            }
        }
    }
    ids
}

/// Position of `id` in [`subband_ids`] order.
pub fn subband_index(config: &NsstConfig, id: SubbandId) -> Option<usize> {
    let dirs = config.directions_per_scale();
    let (c, s, d) = (id.channel as usize, id.scale as usize, id.direction as usize);
    if c >= CHANNELS || s == 0 || s > dirs.len() || d == 0 || d > dirs[s - 1] {
        return None;
    }
    Some(c * config.band_count() + dirs[..s - 1].iter().sum::<usize>() + d - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// One group holding every subband.
    Scheme1,
    /// One group per scale.
    Scheme2,
    /// One group per direction index; needs the same direction count at every scale.
    Scheme3,
    /// One group per color channel.
    Scheme4,
    /// One bivariate group per subband: the subband and its most informative 3x3 neighbor.
    IntraScale,
    /// No copula; marginals only.
    Independent,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Scheme1,
        Scheme::Scheme2,
        Scheme::Scheme3,
        Scheme::Scheme4,
        Scheme::IntraScale,
        Scheme::Independent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Scheme1 => "scheme1",
            Scheme::Scheme2 => "scheme2",
            Scheme::Scheme3 => "scheme3",
            Scheme::Scheme4 => "scheme4",
            Scheme::IntraScale => "intra",
            Scheme::Independent => "independent",
        }
    }

    pub fn validate(self, config: &NsstConfig) -> Result<()> {
        if self == Scheme::Scheme3 && !config.has_uniform_directions() {
            return Err(Error::config(format!(
                "scheme3 groups by direction index and needs the same direction count at every scale, got {:?}",
                config.directions_per_scale()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scheme1" => Ok(Scheme::Scheme1),
            "scheme2" => Ok(Scheme::Scheme2),
            "scheme3" => Ok(Scheme::Scheme3),
            "scheme4" => Ok(Scheme::Scheme4),
            "intra" | "intra-scale" | "intrascale" => Ok(Scheme::IntraScale),
            "independent" => Ok(Scheme::Independent),
            other => Err(Error::config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Member lists of the dependency groups of `scheme`. Intra-scale groups list
/// the subband twice; the second member stands for its shifted neighbor.
pub fn scheme_groups(scheme: Scheme, config: &NsstConfig) -> Result<Vec<Vec<SubbandId>>> {
    scheme.validate(config)?;
    let ids = subband_ids(config);
    let groups = match scheme {
        Scheme::Scheme1 => vec![ids],
        Scheme::Scheme2 => (1..=config.scales())
            .map(|s| ids.iter().copied().filter(|id| id.scale as usize == s).collect())
            .collect(),
        Scheme::Scheme3 => (1..=config.directions(1))
            .map(|d| ids.iter().copied().filter(|id| id.direction as usize == d).collect())
            .collect(),
        Scheme::Scheme4 => (0..CHANNELS)
            .map(|c| ids.iter().copied().filter(|id| id.channel as usize == c).collect())
            .collect(),
        Scheme::IntraScale => ids.iter().map(|&id| vec![id, id]).collect(),
        Scheme::Independent => Vec::new(),
    };
    Ok(groups)
}

/// Three equally sized channel planes in (R, G, B) order.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    channels: [ChannelPlane; CHANNELS],
}

impl ColorImage {
    pub fn new(r: ChannelPlane, g: ChannelPlane, b: ChannelPlane) -> Result<Self> {
        let dims = |p: &ChannelPlane| (p.width(), p.height());
        if dims(&r) != dims(&g) || dims(&r) != dims(&b) {
            return Err(Error::shape("color channels differ in size"));
        }
        Ok(ColorImage { channels: [r, g, b] })
    }

    /// Replicates one plane into all three channels.
    pub fn from_gray(plane: ChannelPlane) -> Self {
        ColorImage {
            channels: [plane.clone(), plane.clone(), plane],
        }
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn channel(&self, c: usize) -> &ChannelPlane {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[ChannelPlane; CHANNELS] {
        &self.channels
    }
}

/// Fitted model of one image under one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub patch_id: String,
    pub scheme: Scheme,
    pub family: Family,
    pub config: NsstConfig,
    /// Row stride used when estimating the correlation matrices.
    pub stride: usize,
    /// One model per subband, in [`subband_ids`] order.
    pub marginals: Vec<MarginalModel>,
    pub fit_flags: Vec<FitFlags>,
    pub groups: Vec<CopulaGroup>,
}

impl Signature {
    /// Checks marginal count, families and the group layout against the scheme.
    pub fn validate(&self) -> Result<()> {
        let m = CHANNELS * self.config.band_count();
        if self.marginals.len() != m || self.fit_flags.len() != m {
            return Err(Error::shape(format!(
                "signature `{}` has {} marginals and {} flags, expected {m}",
                self.patch_id,
                self.marginals.len(),
                self.fit_flags.len()
            )));
        }
        if let Some(bad) = self.marginals.iter().find(|mm| mm.family() != self.family) {
            return Err(Error::shape(format!(
                "signature `{}` mixes {} and {} marginals",
                self.patch_id,
                self.family,
                bad.family()
            )));
        }
        let expected = scheme_groups(self.scheme, &self.config)?;
        if expected.len() != self.groups.len()
            || expected.iter().zip(&self.groups).any(|(e, g)| *e != g.members)
        {
            return Err(Error::shape(format!(
                "signature `{}` groups do not match {}",
                self.patch_id, self.scheme
            )));
        }
        for g in &self.groups {
            if (self.scheme == Scheme::IntraScale) != g.neighbor.is_some() {
                return Err(Error::shape("neighbor offsets belong to intra-scale groups only"));
            }
        }
        Ok(())
    }

    pub fn num_subbands(&self) -> usize {
        self.marginals.len()
    }

    pub fn clamped_fits(&self) -> usize {
        self.fit_flags.iter().filter(|f| f.clamped).count()
    }

    pub fn fallback_fits(&self) -> usize {
        self.fit_flags.iter().filter(|f| f.fallback).count()
    }

    /// Errors unless both signatures share scheme, family, configuration and group membership.
    pub fn check_compatible(&self, other: &Signature) -> Result<()> {
        let mismatch = if self.scheme != other.scheme {
            Some(format!("scheme {} vs {}", self.scheme, other.scheme))
        } else if self.family != other.family {
            Some(format!("marginal family {} vs {}", self.family, other.family))
        } else if self.config != other.config {
            Some(format!("transform {} vs {}", self.config, other.config))
        } else if self.marginals.len() != other.marginals.len()
            || self.groups.len() != other.groups.len()
            || self.groups.iter().zip(&other.groups).any(|(a, b)| a.members != b.members)
        {
            Some("group layout differs".to_string())
        } else {
            None
        };
        match mismatch {
            Some(m) => Err(Error::Incompatible(format!(
                "`{}` and `{}`: {m}",
                self.patch_id, other.patch_id
            ))),
            None => Ok(()),
        }
    }
}

/// Reusable extraction settings for images of one size.
pub struct Extractor {
    nsst: Nsst,
    family: Family,
    stride: usize,
    width: usize,
    height: usize,
}

impl Extractor {
    pub fn new(config: &NsstConfig, family: Family, width: usize, height: usize) -> Result<Self> {
        Ok(Extractor {
            nsst: Nsst::new(config, width, height)?,
            family,
            stride: 1,
            width,
            height,
        })
    }

    /// Uses every `stride`-th coefficient (in row-major order) for correlation estimates.
    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 || (self.width * self.height).div_ceil(stride) < MIN_SIGMA_ROWS {
            return Err(Error::config(format!(
                "stride {stride} leaves fewer than {MIN_SIGMA_ROWS} rows for {}x{} images",
                self.width, self.height
            )));
        }
        self.stride = stride;
        Ok(self)
    }

    pub fn config(&self) -> &NsstConfig {
        self.nsst.config()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Decomposes and fits every subband once; signatures for any scheme follow from the result.
    pub fn model(&self, image: &ColorImage) -> Result<ImageModel> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::shape(format!(
                "extractor built for {}x{} images, got {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )));
        }
        let mut planes = Vec::with_capacity(CHANNELS * self.config().band_count());
        for c in image.channels() {
            planes.extend(self.nsst.decompose(c)?.into_bands().into_iter().flatten());
        }
        let fitted: Vec<Fitted> = planes
            .into_par_iter()
            .map(|plane| fit_subband(plane, self.family, self.stride))
            .collect::<Result<_>>()?;
        Ok(ImageModel {
            config: self.config().clone(),
            family: self.family,
            stride: self.stride,
            fitted,
        })
    }

    pub fn extract(&self, image: &ColorImage, scheme: Scheme, patch_id: &str) -> Result<Signature> {
        scheme.validate(self.config())?;
        self.model(image)?.signature(scheme, patch_id)
    }
}

/// Subband fitted to its marginal, with Gaussian scores on the strided rows.
#[derive(Debug, Clone)]
struct Fitted {
    /// Centered coefficients.
    plane: ChannelPlane,
    model: MarginalModel,
    flags: FitFlags,
    scores: Vec<f64>,
}

fn fallback_model(values: &[f64], family: Family) -> Result<MarginalModel> {
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64)
        .sqrt()
        .max(1e-12);
    Ok(match family {
        Family::Gg => MarginalModel::Gg(GgParams::new(rms * std::f64::consts::SQRT_2, 2.0, 0.0)?),
        Family::Tls => MarginalModel::Tls(TlsParams::new(0.0, rms, TLS_NU_RANGE.1)?),
    })
}

fn fit_subband(plane: ChannelPlane, family: Family, stride: usize) -> Result<Fitted> {
    let (w, h) = (plane.width(), plane.height());
    let mut values = plane.into_values();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let (model, flags) = match fit_marginal(&values, family) {
        // The data are centered, so the GG location is zero by construction.
        Ok((MarginalModel::Gg(p), flags)) => (MarginalModel::Gg(GgParams::new(p.alpha, p.beta, 0.0)?), flags),
        Ok(fit) => fit,
        Err(Error::DegenerateSample(reason)) => {
            log::warn!("degenerate subband ({reason}); using a fallback {family} model");
            let flags = FitFlags {
                clamped: true,
                fallback: true,
            };
            (fallback_model(&values, family)?, flags)
        }
        Err(e) => return Err(e),
    };
    let scores = values.iter().step_by(stride).map(|&x| gaussian_score(x, &model)).collect();
    Ok(Fitted {
        plane: ChannelPlane::from_raw(w, h, values),
        model,
        flags,
        scores,
    })
}

/// Marginal fits and Gaussian scores of every subband of one image.
#[derive(Debug, Clone)]
pub struct ImageModel {
    config: NsstConfig,
    family: Family,
    stride: usize,
    fitted: Vec<Fitted>,
}

impl ImageModel {
    pub fn marginals(&self) -> Vec<MarginalModel> {
        self.fitted.iter().map(|f| f.model).collect()
    }

    /// Centered coefficients of subband `id`.
    pub fn subband(&self, id: SubbandId) -> Option<&ChannelPlane> {
        subband_index(&self.config, id).map(|i| &self.fitted[i].plane)
    }

    pub fn signature(&self, scheme: Scheme, patch_id: &str) -> Result<Signature> {
        let member_groups = scheme_groups(scheme, &self.config)?;
        let groups = member_groups
            .into_par_iter()
            .map(|members| self.fit_group(scheme, members))
            .collect::<Result<Vec<_>>>()?;
        Ok(Signature {
            patch_id: patch_id.to_string(),
            scheme,
            family: self.family,
            config: self.config.clone(),
            stride: self.stride,
            marginals: self.marginals(),
            fit_flags: self.fitted.iter().map(|f| f.flags).collect(),
            groups,
        })
    }

    fn fit_group(&self, scheme: Scheme, members: Vec<SubbandId>) -> Result<CopulaGroup> {
        let index = |id| subband_index(&self.config, id).expect("scheme groups use valid ids");
        if scheme == Scheme::IntraScale {
            let f = &self.fitted[index(members[0])];
            let offset = select_intra_scale_neighbor(&f.plane)?;
            let shifted: Vec<f64> = neighbor_column(&f.plane, offset)
                .into_iter()
                .step_by(self.stride)
                .map(|x| gaussian_score(x, &f.model))
                .collect();
            let sigma = shrunk_correlation(&[&f.scores, &shifted], true)?;
            return CopulaGroup::new(members, Some(offset), sigma);
        }
        let cols: Vec<&[f64]> = members.iter().map(|&id| self.fitted[index(id)].scores.as_slice()).collect();
        let sigma = shrunk_correlation(&cols, true)?;
        CopulaGroup::new(members, None, sigma)
    }
}

/// One-shot extraction with unit stride.
pub fn extract_signature(
    image: &ColorImage,
    scheme: Scheme,
    family: Family,
    config: &NsstConfig,
) -> Result<Signature> {
    scheme.validate(config)?;
    Extractor::new(config, family, image.width(), image.height())?.extract(image, scheme, "")
}
