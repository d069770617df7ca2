//! Little-endian binary container for retrieval indexes.
//!
//! ```text
//! magic "NSSTIDX1" | version u32
//! scheme u8 | family u8 | reserved u16 | stride u32 | filter length u32
//! scales u32 | directions u32 per scale | dataset digest [u8; 32] | entry count u64
//! per entry:
//!   id length u16 | id bytes (UTF-8)
//!   per subband: tag u8 | 3 x f64
//!   per group: [dy i8 | dx i8, intra-scale only] | lower triangle of sigma, row by row
//! ```
//!
//! The low nibble of a marginal tag is the family; bit 6 marks a clamped fit
//! and bit 7 a fallback fit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{Index, IndexHeader};
use crate::copula::CopulaGroup;
use crate::error::{Error, Result};
use crate::marginals::{Family, FitFlags, MarginalModel};
use crate::nsst::NsstConfig;
use crate::signatures::{scheme_groups, Scheme, Signature, CHANNELS};

pub const MAGIC: &[u8; 8] = b"NSSTIDX1";
pub const FORMAT_VERSION: u32 = 1;

const TAG_CLAMPED: u8 = 0x40;
const TAG_FALLBACK: u8 = 0x80;

fn family_code(f: Family) -> u8 {
    match f {
        Family::Gg => 0,
        Family::Tls => 1,
    }
}

fn family_from_code(c: u8) -> Option<Family> {
    match c {
        0 => Some(Family::Gg),
        1 => Some(Family::Tls),
        _ => None,
    }
}

fn scheme_code(s: Scheme) -> u8 {
    Scheme::ALL.iter().position(|&x| x == s).expect("scheme listed in ALL") as u8
}

/// Bytes one entry occupies.
pub fn entry_size(sig: &Signature) -> usize {
    let groups: usize = sig
        .groups
        .iter()
        .map(|g| g.dim() * (g.dim() + 1) / 2 * 8 + if g.neighbor.is_some() { 2 } else { 0 })
        .sum();
    2 + sig.patch_id.len() + sig.marginals.len() * (1 + 24) + groups
}

pub fn encode_index(index: &Index) -> Result<Vec<u8>> {
    let h = &index.header;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(scheme_code(h.scheme));
    out.push(family_code(h.family));
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(h.stride as u32).to_le_bytes());
    out.extend_from_slice(&(h.config.pyramid_filter_length() as u32).to_le_bytes());
    out.extend_from_slice(&(h.config.scales() as u32).to_le_bytes());
    for &d in h.config.directions_per_scale() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&h.manifest_digest);
    out.extend_from_slice(&(index.entries.len() as u64).to_le_bytes());
    for sig in &index.entries {
        let id = sig.patch_id.as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| Error::Format(format!("patch id `{}` too long", sig.patch_id)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id);
        for (m, f) in sig.marginals.iter().zip(&sig.fit_flags) {
            let mut tag = family_code(m.family());
            if f.clamped {
                tag |= TAG_CLAMPED;
            }
            if f.fallback {
                tag |= TAG_FALLBACK;
            }
            out.push(tag);
            for v in m.to_array() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for g in &sig.groups {
            if let Some((dy, dx)) = g.neighbor {
                out.push(dy as u8);
                out.push(dx as u8);
            }
            for i in 0..g.dim() {
                for j in 0..=i {
                    out.extend_from_slice(&g.sigma[(i, j)].to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corruption {
                offset: self.pos as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn corrupt(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Corruption {
            offset: offset as u64,
            reason: reason.into(),
        }
    }
}

pub fn decode_index(buf: &[u8]) -> Result<Index> {
    let mut r = Reader { buf, pos: 0 };
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not an index file (bad magic)".into()));
    }
    r.pos = MAGIC.len();
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported index version {version}")));
    }
    let at = r.pos;
    let scheme = *Scheme::ALL
        .get(r.u8("scheme")? as usize)
        .ok_or_else(|| r.corrupt(at, "unknown scheme code"))?;
    let at = r.pos;
    let family = family_from_code(r.u8("family")?).ok_or_else(|| r.corrupt(at, "unknown family code"))?;
    r.u16("reserved")?;
    let at = r.pos;
    let stride = r.u32("stride")? as usize;
    if stride == 0 {
        return Err(r.corrupt(at, "zero stride"));
    }
    let filter_len = r.u32("filter length")? as usize;
    let at = r.pos;
    let scales = r.u32("scale count")? as usize;
    if scales == 0 || scales > 16 {
        return Err(r.corrupt(at, format!("implausible scale count {scales}")));
    }
    let dirs = (0..scales)
        .map(|_| r.u32("directions").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let config = NsstConfig::new(dirs, filter_len).map_err(|e| r.corrupt(at, e.to_string()))?;
    let groups = scheme_groups(scheme, &config).map_err(|e| r.corrupt(at, e.to_string()))?;
    let manifest_digest: [u8; 32] = r.take(32, "dataset digest")?.try_into().unwrap();
    let count = r.u64("entry count")?;
    let m = CHANNELS * config.band_count();

    let mut entries = Vec::new();
    for _ in 0..count {
        let start = r.pos;
        let len = r.u16("patch id length")? as usize;
        let at = r.pos;
        let patch_id = std::str::from_utf8(r.take(len, "patch id")?)
            .map_err(|_| r.corrupt(at, "patch id is not UTF-8"))?
            .to_string();
        let mut marginals = Vec::with_capacity(m);
        let mut fit_flags = Vec::with_capacity(m);
        for _ in 0..m {
            let at = r.pos;
            let tag = r.u8("marginal tag")?;
            if family_from_code(tag & 0x0f) != Some(family) || tag & 0x30 != 0 {
                return Err(r.corrupt(at, format!("bad marginal tag {tag:#04x}")));
            }
            let v = [r.f64("parameter")?, r.f64("parameter")?, r.f64("parameter")?];
            marginals.push(MarginalModel::from_array(family, v).map_err(|e| r.corrupt(at, e.to_string()))?);
            fit_flags.push(FitFlags {
                clamped: tag & TAG_CLAMPED != 0,
                fallback: tag & TAG_FALLBACK != 0,
            });
        }
        let mut sig_groups = Vec::with_capacity(groups.len());
        for members in &groups {
            let at = r.pos;
            let neighbor = if scheme == Scheme::IntraScale {
                Some((r.u8("neighbor offset")? as i8, r.u8("neighbor offset")? as i8))
            } else {
                None
            };
            let d = members.len();
            let mut sigma = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..=i {
                    let v = r.f64("correlation")?;
                    sigma[(i, j)] = v;
                    sigma[(j, i)] = v;
                }
            }
            sig_groups.push(CopulaGroup::new(members.clone(), neighbor, sigma).map_err(|e| r.corrupt(at, e.to_string()))?);
        }
        let sig = Signature {
            patch_id,
            scheme,
            family,
            config: config.clone(),
            stride,
            marginals,
            fit_flags,
            groups: sig_groups,
        };
        sig.validate().map_err(|e| r.corrupt(start, e.to_string()))?;
        entries.push(sig);
    }
    if r.pos != buf.len() {
        return Err(r.corrupt(r.pos, "trailing bytes after the last entry"));
    }
    let header = IndexHeader {
        scheme,
        family,
        config,
        stride,
        manifest_digest,
    };
    Index::new(header, entries).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `index` to `path` through a temporary sibling file.
pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    let bytes = encode_index(index)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<Index> {
    decode_index(&fs::read(path)?)
}
