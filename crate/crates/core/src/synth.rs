//! Seeded synthetic color texture corpus: one 512x512 image per class, made
//! by filtering white noise with a random anisotropic spectrum and mixing
//! three such fields into color channels.
//!
//! Classes come in families of four: each class perturbs every parameter of
//! its family prototype by a small random amount.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::fft::{signed_frequency, Fft2d};
use crate::store::SOURCE_SIZE;

/// Random texture parameters of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecipe {
    /// Preferred orientation of each source field, radians.
    pub orientation: [f64; 3],
    /// Angular concentration; 0 is isotropic.
    pub anisotropy: f64,
    /// Peak radial frequency, cycles per pixel.
    pub peak: f64,
    /// Radial bandwidth, cycles per pixel.
    pub bandwidth: f64,
    /// Exponent of the pointwise `sign(x)|x|^p` map applied to each field.
    pub sparsity: f64,
    /// Rows map source fields to (R, G, B).
    pub mixing: [[f64; 3]; 3],
    pub mean: [f64; 3],
    pub contrast: f64,
}

impl ClassRecipe {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let base = rng.random_range(0.0..PI);
        let spread = rng.random_range(0.0..0.6);
        let mut mixing = [[0.0; 3]; 3];
        for row in mixing.iter_mut() {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
        }
        ClassRecipe {
            orientation: [base, base + spread, base - spread],
            anisotropy: rng.random_range(0.0..4.0),
            peak: rng.random_range(0.02..0.25),
            bandwidth: rng.random_range(0.02..0.12),
            sparsity: rng.random_range(1.0..2.5),
            mixing,
            mean: [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)],
            contrast: rng.random_range(0.08..0.16),
        }
    }

    fn spectrum(&self, orientation: f64, fx: f64, fy: f64) -> f64 {
        let r = (fx * fx + fy * fy).sqrt();
        if r == 0.0 {
            return 0.0;
        }
        let phi = fy.atan2(fx);
        let radial = (-0.5 * ((r - self.peak) / self.bandwidth).powi(2)).exp();
        let angular = (self.anisotropy * ((2.0 * (phi - orientation)).cos() - 1.0)).exp();
        radial * angular + 0.02 / (1.0 + (r / 0.05).powi(2))
    }

    /// Renders a `size`x`size` image from white noise drawn from `rng`.
    pub fn render<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> RgbImage {
        let fft = Fft2d::new(size, size);
        let fields: Vec<Vec<f64>> = self
            .orientation
            .iter()
            .map(|&theta| {
                let noise: Vec<f64> = (0..size * size).map(|_| StandardNormal.sample(rng)).collect();
                let mut spec = fft.forward_real(&noise);
                for y in 0..size {
                    let fy = signed_frequency(y, size) as f64 / size as f64;
                    for x in 0..size {
                        let fx = signed_frequency(x, size) as f64 / size as f64;
                        spec[y * size + x] *= Complex64::new(self.spectrum(theta, fx, fy).sqrt(), 0.0);
                    }
                }
                let mut field = fft.inverse_real(spec);
                standardize(&mut field);
                for v in field.iter_mut() {
                    *v = v.signum() * v.abs().powf(self.sparsity);
                }
                standardize(&mut field);
                field
            })
            .collect();
        let mut img = RgbImage::new(size as u32, size as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let row = &self.mixing[c];
                let norm = (row.iter().map(|m| m * m).sum::<f64>()).sqrt().max(1e-9);
                let mix: f64 = (0..3).map(|j| row[j] * fields[j][i]).sum::<f64>() / norm;
                let v = (self.mean[c] + self.contrast * mix).clamp(0.0, 1.0);
                rgb[c] = (v * 255.0).round() as u8;
            }
            *px = Rgb(rgb);
        }
        img
    }
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-300);
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

/// Classes sharing one prototype recipe.
pub const FAMILY_SIZE: usize = 4;

impl ClassRecipe {
    /// A nearby variant of `self`.
    pub fn perturbed<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut n = |sd: f64| -> f64 { sd * Distribution::<f64>::sample(&StandardNormal, rng) };
        let turn = n(0.15);
        let mut out = self.clone();
        for o in out.orientation.iter_mut() {
            *o += turn;
        }
        out.anisotropy = (out.anisotropy + n(0.3)).max(0.0);
        out.peak *= n(0.1).exp();
        out.bandwidth *= n(0.1).exp();
        out.sparsity = (out.sparsity + n(0.1)).max(0.8);
        for row in out.mixing.iter_mut() {
            for v in row.iter_mut() {
                *v += n(0.3);
            }
        }
        for m in out.mean.iter_mut() {
            *m = (*m + n(0.03)).clamp(0.2, 0.8);
        }
        out.contrast *= n(0.05).exp();
        out
    }
}

/// Recipe and image of class `k` of the corpus seeded with `seed`.
pub fn synth_class(seed: u64, k: usize) -> (ClassRecipe, RgbImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * (k / FAMILY_SIZE) as u64);
    let prototype = ClassRecipe::random(&mut rng);
    rng.set_stream(2 * k as u64 + 1);
    let recipe = prototype.perturbed(&mut rng);
    let img = recipe.render(SOURCE_SIZE, &mut rng);
    (recipe, img)
}

/// Writes `classes` images named `synth_NNN.png` into `dir`.
pub fn write_synth_corpus(dir: &Path, classes: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    (0..classes)
        .map(|k| {
            let path = dir.join(format!("synth_{k:03}.png"));
            let (_, img) = synth_class(seed, k);
            img.save(&path).map_err(|e| crate::Error::Ingest {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            Ok(path)
        })
        .collect()
}
