//! Index building over patch sets and average-retrieval-rate evaluation.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;

use crate::divergence::TlsBackend;
use crate::error::{Error, Result};
use crate::marginals::Family;
use crate::nsst::NsstConfig;
use crate::signatures::{Extractor, Scheme};
use crate::store::{class_of, DatasetScan, Index, IndexHeader, PatchRecord, PreparedIndex, PATCH_SIZE};

/// Relevant patches per class under the 16-patch protocol.
pub const DEFAULT_NR: usize = 16;

/// Extraction settings for building indexes.
#[derive(Debug, Clone)]
pub struct BuildSettings {
    pub config: NsstConfig,
    pub family: Family,
    pub stride: usize,
}

impl BuildSettings {
    pub fn new(config: NsstConfig, family: Family) -> Self {
        BuildSettings {
            config,
            family,
            stride: 1,
        }
    }
}

/// Indexes built from one pass of feature extraction.
#[derive(Debug, Clone)]
pub struct BuiltIndexes {
    /// One index per requested scheme, in request order.
    pub indexes: Vec<Index>,
    /// Wall-clock feature extraction time over all schemes.
    pub extraction: Duration,
    pub patches: usize,
}

/// Extracts signatures of `records` under every scheme in `schemes`. The
/// marginal fits of each patch are computed once and shared by all schemes.
pub fn build_indexes(
    records: &[PatchRecord],
    schemes: &[Scheme],
    settings: &BuildSettings,
    manifest_digest: [u8; 32],
) -> Result<BuiltIndexes> {
    if schemes.is_empty() {
        return Err(Error::config("no schemes requested"));
    }
    for s in schemes {
        s.validate(&settings.config)?;
    }
    let extractor =
        Extractor::new(&settings.config, settings.family, PATCH_SIZE, PATCH_SIZE)?.with_stride(settings.stride)?;
    let start = Instant::now();
    let per_patch = records
        .par_iter()
        .map(|r| {
            if (r.image.width(), r.image.height()) != (PATCH_SIZE, PATCH_SIZE) {
                return Err(Error::shape(format!("patch {} is not {PATCH_SIZE}x{PATCH_SIZE}", r.id())));
            }
            let model = extractor.model(&r.image)?;
            let id = r.id();
            schemes.iter().map(|&s| model.signature(s, &id)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let extraction = start.elapsed();

    let mut columns: Vec<Vec<_>> = schemes.iter().map(|_| Vec::with_capacity(records.len())).collect();
    for sigs in per_patch {
        for (col, sig) in columns.iter_mut().zip(sigs) {
            col.push(sig);
        }
    }
    let indexes = schemes
        .iter()
        .zip(columns)
        .map(|(&scheme, entries)| {
            let header = IndexHeader {
                scheme,
                family: settings.family,
                config: settings.config.clone(),
                stride: settings.stride,
                manifest_digest,
            };
            Index::new(header, entries)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BuiltIndexes {
        indexes,
        extraction,
        patches: records.len(),
    })
}

/// [`build_indexes`] over a scanned dataset, decoding one source at a time.
pub fn build_dataset_indexes(scan: &DatasetScan, schemes: &[Scheme], settings: &BuildSettings) -> Result<BuiltIndexes> {
    let mut parts: Vec<BuiltIndexes> = Vec::new();
    for (k, source) in scan.sources.iter().enumerate() {
        let records = match source.patches() {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping {}: {e}", source.path.display());
                continue;
            }
        };
        parts.push(build_indexes(&records, schemes, settings, scan.manifest.digest)?);
        info!("extracted {}/{} sources", k + 1, scan.sources.len());
    }
    let extraction = parts.iter().map(|p| p.extraction).sum();
    let patches = parts.iter().map(|p| p.patches).sum();
    let indexes = schemes
        .iter()
        .enumerate()
        .map(|(i, &scheme)| {
            let entries = parts.iter_mut().flat_map(|p| std::mem::take(&mut p.indexes[i].entries)).collect();
            let header = IndexHeader {
                scheme,
                family: settings.family,
                config: settings.config.clone(),
                stride: settings.stride,
                manifest_digest: scan.manifest.digest,
            };
            Index::new(header, entries)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BuiltIndexes {
        indexes,
        extraction,
        patches,
    })
}

/// Retrieval outcome of one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryOutcome {
    pub patch_id: String,
    pub class_id: String,
    /// Patches of the query's class among the top `nr` results.
    pub relevant: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRate {
    pub class_id: String,
    pub queries: usize,
    pub arr: f64,
}

/// Average retrieval rate of an index queried with each of its own entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub nr: usize,
    pub queries: Vec<QueryOutcome>,
    pub arr: f64,
    pub per_class: Vec<ClassRate>,
}

impl EvalReport {
    /// Builds the report from per-query counts. ARR is the total relevant
    /// count over `queries * nr`.
    pub fn from_outcomes(nr: usize, queries: Vec<QueryOutcome>) -> Self {
        let rate = |qs: &[&QueryOutcome]| {
            if qs.is_empty() {
                0.0
            } else {
                qs.iter().map(|q| q.relevant).sum::<usize>() as f64 / (qs.len() * nr) as f64
            }
        };
        let all: Vec<&QueryOutcome> = queries.iter().collect();
        let arr = rate(&all);
        let mut classes: Vec<&str> = queries.iter().map(|q| q.class_id.as_str()).collect();
        classes.sort_unstable();
        classes.dedup();
        let per_class = classes
            .into_iter()
            .map(|c| {
                let qs: Vec<&QueryOutcome> = queries.iter().filter(|q| q.class_id == c).collect();
                ClassRate {
                    class_id: c.to_string(),
                    queries: qs.len(),
                    arr: rate(&qs),
                }
            })
            .collect();
        EvalReport {
            nr,
            queries,
            arr,
            per_class,
        }
    }

    /// Per-query rows, per-class rows and a closing summary line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("query\tclass\trelevant\trate\n");
        for q in &self.queries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                q.patch_id,
                q.class_id,
                q.relevant,
                q.relevant as f64 / self.nr as f64
            );
        }
        out.push_str("\nclass\tqueries\tarr\n");
        for c in &self.per_class {
            let _ = writeln!(out, "{}\t{}\t{:.6}", c.class_id, c.queries, c.arr);
        }
        let _ = writeln!(out, "\nARR\t{:.6}\tqueries={}\tnr={}", self.arr, self.queries.len(), self.nr);
        out
    }
}

/// Queries every entry of `index` against the whole index, counting the
/// query itself among its results.
pub fn evaluate(index: &PreparedIndex, nr: usize) -> Result<EvalReport> {
    if nr == 0 {
        return Err(Error::config("nr must be positive"));
    }
    let n = index.len();
    let entries = index.entries();
    // Jeffery divergence is exactly symmetric, so each pair is computed once.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| entries[i].jeffery(&entries[j], TlsBackend::Closed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let jd = |i: usize, j: usize| if i <= j { upper[i][j - i] } else { upper[j][i - j] };

    let queries = (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| jd(i, a).total_cmp(&jd(i, b)));
            let id = &entries[i].signature().patch_id;
            let class = class_of(id);
            let relevant = order
                .iter()
                .take(nr)
                .filter(|&&j| class_of(&entries[j].signature().patch_id) == class)
                .count();
            QueryOutcome {
                patch_id: id.clone(),
                class_id: class.to_string(),
                relevant,
            }
        })
        .collect();
    Ok(EvalReport::from_outcomes(nr, queries))
}

/// Timing of an evaluation run.
#[derive(Debug, Clone, Copy)]
pub struct EvalTiming {
    pub matching: Duration,
    pub queries: usize,
}

/// [`evaluate`] with wall-clock timing of the similarity-matching stage.
pub fn evaluate_timed(index: &PreparedIndex, nr: usize) -> Result<(EvalReport, EvalTiming)> {
    let start = Instant::now();
    let report = evaluate(index, nr)?;
    Ok((
        report,
        EvalTiming {
            matching: start.elapsed(),
            queries: index.len(),
        },
    ))
}
