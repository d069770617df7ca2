//! Dataset scanning, patch cutting and the manifest sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GenericImageView};
use log::warn;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nsst::ChannelPlane;
use crate::signatures::ColorImage;

/// Side of the square region cut from every source image.
pub const SOURCE_SIZE: usize = 512;
/// Side of one patch.
pub const PATCH_SIZE: usize = 128;
pub const PATCHES_PER_SOURCE: usize = (SOURCE_SIZE / PATCH_SIZE) * (SOURCE_SIZE / PATCH_SIZE);

const EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

/// One 128x128 patch of a source image.
#[derive(Debug, Clone)]
pub struct PatchRecord {
    pub source: PathBuf,
    /// Source file stem; doubles as the class label.
    pub class_id: String,
    /// Row-major block index, 0..16.
    pub patch_index: usize,
    pub image: ColorImage,
}

impl PatchRecord {
    pub fn id(&self) -> String {
        patch_id(&self.class_id, self.patch_index)
    }
}

pub fn patch_id(stem: &str, patch_index: usize) -> String {
    format!("{stem}_p{patch_index:02}")
}

/// Class label of a patch id (`<stem>_pNN`), or the whole id if it has no
/// patch suffix.
pub fn class_of(patch_id: &str) -> &str {
    match patch_id.rsplit_once("_p") {
        Some((stem, n)) if n.len() == 2 && n.bytes().all(|b| b.is_ascii_digit()) => stem,
        _ => patch_id,
    }
}

/// A decodable source file found by [`scan_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceImage {
    pub path: PathBuf,
    pub stem: String,
    pub width: usize,
    pub height: usize,
}

impl SourceImage {
    /// Decodes the file and cuts its top-left 512x512 region into 16 patches.
    pub fn patches(&self) -> Result<Vec<PatchRecord>> {
        let image = load_color_image(&self.path)?;
        split_patches(&image, &self.path, &self.stem)
    }
}

/// One `manifest.tsv` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub stem: String,
    pub width: usize,
    pub height: usize,
    pub patches: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// SHA-256 over the names and byte sizes of every candidate file.
    pub digest: [u8; 32],
}

impl Manifest {
    pub fn patch_count(&self) -> usize {
        self.entries.iter().map(|e| e.patches).sum()
    }

    pub fn digest_hex(&self) -> String {
        hex(&self.digest)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("stem\twidth\theight\tpatches\n");
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.stem, e.width, e.height, e.patches);
        }
        out
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Result of scanning a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetScan {
    pub sources: Vec<SourceImage>,
    pub manifest: Manifest,
}

impl DatasetScan {
    /// Decodes every source. Sources that fail to decode are skipped with a warning.
    pub fn load_patches(&self) -> Vec<PatchRecord> {
        let mut out = Vec::with_capacity(self.sources.len() * PATCHES_PER_SOURCE);
        for s in &self.sources {
            match s.patches() {
                Ok(p) => out.extend(p),
                Err(e) => warn!("skipping {}: {e}", s.path.display()),
            }
        }
        out
    }
}

fn candidate_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let supported = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if supported && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Digest of the names and sizes of the candidate image files in `dir`.
pub fn dataset_digest(dir: &Path) -> Result<[u8; 32]> {
    let mut hasher = Sha256::new();
    for path in candidate_files(dir)? {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let size = fs::metadata(&path)?.len();
        hasher.update(format!("{name}\t{size}\n").as_bytes());
    }
    Ok(hasher.finalize().into())
}

/// Lists the usable sources of `dir`, sorted by stem. Files that cannot be
/// read, are smaller than 512x512 or repeat a stem are skipped with a warning.
pub fn scan_dataset(dir: &Path) -> Result<DatasetScan> {
    if !dir.is_dir() {
        return Err(Error::Ingest {
            path: dir.to_path_buf(),
            reason: "not a directory".into(),
        });
    }
    let mut sources: Vec<SourceImage> = Vec::new();
    for path in candidate_files(dir)? {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let dims = image::ImageReader::open(&path)
            .and_then(|r| r.with_guessed_format())
            .map_err(|e| e.to_string())
            .and_then(|r| r.into_dimensions().map_err(|e| e.to_string()));
        let (w, h) = match dims {
            Ok((w, h)) => (w as usize, h as usize),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        if w < SOURCE_SIZE || h < SOURCE_SIZE {
            warn!("skipping {}: {w}x{h} is smaller than {SOURCE_SIZE}x{SOURCE_SIZE}", path.display());
            continue;
        }
        if sources.iter().any(|s| s.stem == stem) {
            warn!("skipping {}: stem `{stem}` already ingested", path.display());
            continue;
        }
        sources.push(SourceImage {
            path,
            stem,
            width: w,
            height: h,
        });
    }
    sources.sort_by(|a, b| a.stem.cmp(&b.stem));
    if sources.is_empty() {
        warn!("no usable images in {}", dir.display());
    }
    let entries = sources
        .iter()
        .map(|s| ManifestEntry {
            stem: s.stem.clone(),
            width: s.width,
            height: s.height,
            patches: PATCHES_PER_SOURCE,
        })
        .collect();
    Ok(DatasetScan {
        sources,
        manifest: Manifest {
            entries,
            digest: dataset_digest(dir)?,
        },
    })
}

/// Every patch of every usable source in `dir`, sorted by (stem, patch index).
pub fn ingest_dataset(dir: &Path) -> Result<Vec<PatchRecord>> {
    Ok(scan_dataset(dir)?.load_patches())
}

/// Decodes an image file into [0, 1] color planes. Grayscale images are
/// replicated into all three channels with a warning.
pub fn load_color_image(path: &Path) -> Result<ColorImage> {
    let ingest_err = |reason: String| Error::Ingest {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::ImageReader::open(path)
        .map_err(|e| ingest_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| ingest_err(e.to_string()))?
        .decode()
        .map_err(|e| ingest_err(e.to_string()))?;
    if !img.color().has_color() {
        warn!("{} is grayscale; replicating it into three channels", path.display());
    }
    to_color_image(&img).map_err(|e| ingest_err(e.to_string()))
}

fn to_color_image(img: &DynamicImage) -> Result<ColorImage> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    let deep = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    if deep {
        for (i, px) in img.to_rgb16().pixels().enumerate() {
            for c in 0..3 {
                planes[c][i] = f64::from(px.0[c]) / 65535.0;
            }
        }
    } else {
        for (i, px) in img.to_rgb8().pixels().enumerate() {
            for c in 0..3 {
                planes[c][i] = f64::from(px.0[c]) / 255.0;
            }
        }
    }
    let [r, g, b] = planes;
    ColorImage::new(
        ChannelPlane::new(w, h, r)?,
        ChannelPlane::new(w, h, g)?,
        ChannelPlane::new(w, h, b)?,
    )
}

/// Cuts the top-left 512x512 region of `image` into 16 row-major patches.
pub fn split_patches(image: &ColorImage, source: &Path, stem: &str) -> Result<Vec<PatchRecord>> {
    if image.width() < SOURCE_SIZE || image.height() < SOURCE_SIZE {
        return Err(Error::Ingest {
            path: source.to_path_buf(),
            reason: format!(
                "{}x{} is smaller than {SOURCE_SIZE}x{SOURCE_SIZE}",
                image.width(),
                image.height()
            ),
        });
    }
    let per_row = SOURCE_SIZE / PATCH_SIZE;
    (0..PATCHES_PER_SOURCE)
        .map(|k| {
            let (by, bx) = (k / per_row, k % per_row);
            let cut = |c: usize| {
                crop(image.channel(c), bx * PATCH_SIZE, by * PATCH_SIZE, PATCH_SIZE, PATCH_SIZE)
            };
            Ok(PatchRecord {
                source: source.to_path_buf(),
                class_id: stem.to_string(),
                patch_index: k,
                image: ColorImage::new(cut(0)?, cut(1)?, cut(2)?)?,
            })
        })
        .collect()
}

/// The `w`x`h` block of `plane` whose top-left corner is (`x0`, `y0`).
pub fn crop(plane: &ChannelPlane, x0: usize, y0: usize, w: usize, h: usize) -> Result<ChannelPlane> {
    if x0 + w > plane.width() || y0 + h > plane.height() {
        return Err(Error::shape(format!(
            "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
            plane.width(),
            plane.height()
        )));
    }
    let src = plane.values();
    let mut out = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        out.extend_from_slice(&src[y * plane.width() + x0..y * plane.width() + x0 + w]);
    }
    ChannelPlane::new(w, h, out)
}
