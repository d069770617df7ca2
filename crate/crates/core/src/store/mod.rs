//! Dataset ingestion, the persistent signature index and index queries.

mod format;
mod ingest;

use std::path::Path;

use rayon::prelude::*;

pub use format::{decode_index, encode_index, entry_size, load_index, save_index, FORMAT_VERSION, MAGIC};
pub use ingest::{
    class_of, crop, dataset_digest, ingest_dataset, load_color_image, patch_id, scan_dataset, split_patches,
    DatasetScan, Manifest, ManifestEntry, PatchRecord, SourceImage, PATCHES_PER_SOURCE, PATCH_SIZE, SOURCE_SIZE,
};

use crate::divergence::{PreparedSignature, TlsBackend};
use crate::error::{Error, Result};
use crate::marginals::Family;
use crate::nsst::NsstConfig;
use crate::signatures::{Scheme, Signature};

/// Settings shared by every entry of an index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexHeader {
    pub scheme: Scheme,
    pub family: Family,
    pub config: NsstConfig,
    pub stride: usize,
    pub manifest_digest: [u8; 32],
}

impl IndexHeader {
    /// Errors unless `sig` was extracted with this header's settings.
    pub fn check(&self, sig: &Signature) -> Result<()> {
        let mismatch = if sig.scheme != self.scheme {
            Some(format!("scheme {} vs index {}", sig.scheme, self.scheme))
        } else if sig.family != self.family {
            Some(format!("marginal family {} vs index {}", sig.family, self.family))
        } else if sig.config != self.config {
            Some(format!("transform {} vs index {}", sig.config, self.config))
        } else {
            None
        };
        match mismatch {
            Some(m) => Err(Error::Incompatible(format!("`{}`: {m}", sig.patch_id))),
            None => Ok(()),
        }
    }
}

/// Signatures of a dataset, sorted by patch id.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub header: IndexHeader,
    pub entries: Vec<Signature>,
}

impl Index {
    /// Sorts `entries` by id and checks them against `header`.
    pub fn new(header: IndexHeader, mut entries: Vec<Signature>) -> Result<Self> {
        entries.sort_by(|a, b| a.patch_id.cmp(&b.patch_id));
        for e in &entries {
            header.check(e)?;
            e.validate()?;
            if e.stride != header.stride {
                return Err(Error::Incompatible(format!(
                    "`{}` uses stride {}, index {}",
                    e.patch_id, e.stride, header.stride
                )));
            }
        }
        if let Some(w) = entries.windows(2).find(|w| w[0].patch_id == w[1].patch_id) {
            return Err(Error::Format(format!("duplicate patch id `{}`", w[0].patch_id)));
        }
        Ok(Index { header, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, patch_id: &str) -> Option<&Signature> {
        self.entries
            .binary_search_by(|e| e.patch_id.as_str().cmp(patch_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Errors if the candidate files of `dir` differ from those the index was built from.
    pub fn verify_dataset(&self, dir: &Path) -> Result<()> {
        let digest = dataset_digest(dir)?;
        if digest != self.header.manifest_digest {
            return Err(Error::DatasetChanged(format!(
                "{} has digest {}, index expects {}",
                dir.display(),
                ingest::hex(&digest),
                ingest::hex(&self.header.manifest_digest)
            )));
        }
        Ok(())
    }
}

/// One ranked result.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub patch_id: String,
    pub jd: f64,
}

/// Index with every entry prepared for repeated divergence evaluation.
#[derive(Debug, Clone)]
pub struct PreparedIndex {
    header: IndexHeader,
    entries: Vec<PreparedSignature>,
}

impl PreparedIndex {
    pub fn new(index: Index) -> Result<Self> {
        let entries = index
            .entries
            .into_par_iter()
            .map(PreparedSignature::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedIndex {
            header: index.header,
            entries,
        })
    }

    pub fn header(&self) -> &IndexHeader {
        &self.header
    }

    pub fn entries(&self) -> &[PreparedSignature] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Jeffery divergence between `q` and every entry, in entry order.
    pub fn scan(&self, q: &PreparedSignature, parallel: bool) -> Result<Vec<f64>> {
        self.header.check(q.signature())?;
        let jd = |e: &PreparedSignature| q.jeffery(e, TlsBackend::Closed);
        if parallel {
            self.entries.par_iter().map(jd).collect()
        } else {
            self.entries.iter().map(jd).collect()
        }
    }

    /// The `top_k` entries closest to `q` by Jeffery divergence; ties go to
    /// the smaller patch id.
    pub fn query(&self, q: &PreparedSignature, top_k: usize, parallel: bool) -> Result<Vec<Match>> {
        let jd = self.scan(q, parallel)?;
        Ok(rank(&self.entries, &jd, top_k))
    }
}

fn rank(entries: &[PreparedSignature], jd: &[f64], top_k: usize) -> Vec<Match> {
    // Entries are sorted by id, so a stable sort on the divergence alone
    // breaks ties by id.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| jd[a].total_cmp(&jd[b]));
    order
        .into_iter()
        .take(top_k)
        .map(|i| Match {
            patch_id: entries[i].signature().patch_id.clone(),
            jd: jd[i],
        })
        .collect()
}

/// Ranks the entries of `index` against `q`.
pub fn query_index(index: &PreparedIndex, q: &Signature, top_k: usize) -> Result<Vec<Match>> {
    index.header.check(q)?;
    index.query(&PreparedSignature::new(q.clone())?, top_k, true)
}
