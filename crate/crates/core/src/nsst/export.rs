//! Debug export of subbands as raw little-endian f64 planes.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::SubbandPyramid;
use crate::error::Result;

/// Writes `c{channel}_s{scale}_d{direction}.f64` for every directional band of
/// every channel pyramid, plus `manifest.txt` with dimensions and config.
pub fn write_subband_archive(dir: &Path, channels: &[SubbandPyramid]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    if let Some(first) = channels.first() {
        let lp = first.lowpass();
        manifest.push_str(&format!("width\t{}\n", lp.width()));
        manifest.push_str(&format!("height\t{}\n", lp.height()));
        manifest.push_str(&format!("channels\t{}\n", channels.len()));
        manifest.push_str(&format!("scales\t{}\n", first.config().scales()));
        let dirs: Vec<String> = first
            .config()
            .directions_per_scale()
            .iter()
            .map(|d| d.to_string())
            .collect();
        manifest.push_str(&format!("directions\t{}\n", dirs.join(",")));
        manifest.push_str(&format!("filter_length\t{}\n", first.config().pyramid_filter_length()));
    }
    for (c, pyramid) in channels.iter().enumerate() {
        for ((s, d), band) in pyramid.bands() {
            let name = format!("c{c}_s{s}_d{d}.f64");
            let mut bytes = Vec::with_capacity(band.values().len() * 8);
            for v in band.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(dir.join(&name), bytes)?;
            manifest.push_str(&format!("band\t{name}\n"));
        }
    }
    let mut f = fs::File::create(dir.join("manifest.txt"))?;
    f.write_all(manifest.as_bytes())?;
    Ok(())
}
