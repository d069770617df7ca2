use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn, LevelFilter};

use nsstret::divergence::{kld_gaussian_copula, kld_gg, kld_marginal_numeric, kld_tls_closed, kld_tls_numeric};
use nsstret::eval::{build_dataset_indexes, build_indexes, evaluate_timed, BuildSettings, DEFAULT_NR};
use nsstret::marginals::{kurtosis, Family, GgParams, MarginalModel, TlsParams};
use nsstret::nsst::{write_subband_archive, Nsst, NsstConfig};
use nsstret::signatures::{
    chi_plot, histogram, neighbor_column, select_intra_scale_neighbor, ColorImage, Extractor, Scheme, SubbandId,
};
use nsstret::store::{
    load_color_image, load_index, patch_id, query_index, save_index, scan_dataset, split_patches, PreparedIndex,
    PATCH_SIZE,
};
use nsstret::synth::write_synth_corpus;

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Incompatible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Incompatible(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Incompatible(m) => f.write_str(m),
        }
    }
}

impl From<nsstret::Error> for CliError {
    fn from(e: nsstret::Error) -> Self {
        match e {
            nsstret::Error::Config(_) => CliError::Usage(e.to_string()),
            nsstret::Error::Incompatible(_) => CliError::Incompatible(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "nsstret", version, about = "Color texture retrieval with shearlet-domain copula signatures")]
pub struct Cli {
    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

impl Cli {
    pub fn log_level(&self) -> LevelFilter {
        if self.quiet {
            return LevelFilter::Error;
        }
        match self.verbose {
            0 => LevelFilter::Info,
            1 => LevelFilter::Debug,
            _ => LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract signatures of every patch of a dataset and write an index.
    Index(IndexArgs),
    /// Rank the entries of an index against one query image.
    Query(QueryArgs),
    /// Query every indexed patch and report the average retrieval rate.
    Evaluate(EvaluateArgs),
    /// Build and evaluate one index per scheme and print a timing/ARR table.
    CompareSchemes(CompareArgs),
    /// Write subband histograms and a chi-plot for a pair of subbands.
    Diagnose(DiagnoseArgs),
    /// Write a seeded synthetic texture corpus.
    Synth(SynthArgs),
    /// Write the subbands of an image to a raw archive.
    Decompose(DecomposeArgs),
    /// Closed-form versus numeric divergence checks.
    #[command(hide = true)]
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct TransformArgs {
    /// Number of scales.
    #[arg(long, default_value_t = 3)]
    scales: usize,
    /// Directions per scale, coarse to fine.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16])]
    dirs: Vec<usize>,
    /// Pyramid filter length.
    #[arg(long, default_value_t = 8)]
    filter_len: usize,
}

impl TransformArgs {
    fn config(&self) -> CliResult<NsstConfig> {
        if self.dirs.len() != self.scales {
            return Err(CliError::Usage(format!(
                "--dirs lists {} direction counts but --scales is {}",
                self.dirs.len(),
                self.scales
            )));
        }
        NsstConfig::with_scales(self.scales, self.dirs.clone(), self.filter_len).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Args)]
struct JobsArg {
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl JobsArg {
    fn apply(&self) -> CliResult {
        if let Some(n) = self.jobs {
            if n == 0 {
                return Err(CliError::Usage("--jobs must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: nsstret::Error| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: nsstret::Error| e.to_string())
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// Dataset directory of PNG/PPM images.
    #[arg(long)]
    db: PathBuf,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Scheme,
    #[arg(long, value_parser = parse_family, default_value = "gg")]
    marginal: Family,
    #[command(flatten)]
    transform: TransformArgs,
    #[arg(long)]
    out: PathBuf,
    /// Row stride for correlation estimation.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 16)]
    top: usize,
    /// Patch 0..15 of a 512x512 image; without it the image must be 128x128.
    #[arg(long)]
    patch: Option<usize>,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    index: PathBuf,
    /// Relevant patches per class.
    #[arg(long, default_value_t = DEFAULT_NR)]
    nr: usize,
    /// Write the per-query report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Check the index against this dataset directory first.
    #[arg(long)]
    db: Option<PathBuf>,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, value_parser = parse_family, default_value = "gg")]
    marginal: Family,
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme, required = true)]
    schemes: Vec<Scheme>,
    #[command(flatten)]
    transform: TransformArgs,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = DEFAULT_NR)]
    nr: usize,
    #[command(flatten)]
    jobs: JobsArg,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    image: PathBuf,
    /// Two subband ids `cC_sS_dD,cC_sS_dD`, or `auto` for the finest first
    /// band of channel 0 against its most informative spatial neighbor.
    #[arg(long, default_value = "auto")]
    pair: String,
    /// Patch 0..15 of a 512x512 image; without it the whole image is used.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long, value_parser = parse_family, default_value = "gg")]
    marginal: Family,
    #[command(flatten)]
    transform: TransformArgs,
    #[arg(long, default_value_t = 64)]
    bins: usize,
    /// Output directory for `histogram.csv`, `chi.csv` and `chi_stats.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    classes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(subcommand)]
    which: Oracle,
}

#[derive(Debug, Subcommand)]
enum Oracle {
    /// GG divergence between (alpha, beta) pairs.
    Gg {
        #[arg(long, value_delimiter = ',', required = true)]
        db: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
    },
    /// TLS divergence between (mu, sigma, nu) triples.
    Tls {
        #[arg(long, value_delimiter = ',', required = true)]
        db: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
    },
    /// Gaussian divergence of the identity against a 2x2 correlation `rho`.
    Copula {
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
    },
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Query(a) => cmd_query(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::CompareSchemes(a) => cmd_compare(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Oracle(a) => cmd_oracle(a),
    }
}

fn manifest_path(index: &Path) -> PathBuf {
    let mut p = index.as_os_str().to_owned();
    p.push(".manifest.tsv");
    PathBuf::from(p)
}

fn cmd_index(a: IndexArgs) -> CliResult {
    a.jobs.apply()?;
    let config = a.transform.config()?;
    a.scheme.validate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut settings = BuildSettings::new(config, a.marginal);
    settings.stride = a.stride;
    let scan = scan_dataset(&a.db)?;
    info!("{} source images, {} patches", scan.sources.len(), scan.manifest.patch_count());
    let built = build_dataset_indexes(&scan, &[a.scheme], &settings)?;
    let index = &built.indexes[0];
    if index.len() != scan.manifest.patch_count() {
        warn!(
            "index holds {} entries but the manifest lists {} patches",
            index.len(),
            scan.manifest.patch_count()
        );
    }
    save_index(index, &a.out)?;
    fs::write(manifest_path(&a.out), scan.manifest.to_tsv())?;
    let secs = built.extraction.as_secs_f64();
    info!(
        "wrote {} entries to {}; feature extraction {:.3} s total, {:.3} s per image",
        index.len(),
        a.out.display(),
        secs,
        secs / built.patches.max(1) as f64
    );
    Ok(())
}

/// The query patch of `path`: one of the 16 patches of a 512x512 image, or
/// the whole image when it is already patch sized.
fn query_patch(path: &Path, patch: Option<usize>) -> CliResult<(String, ColorImage)> {
    let image = load_color_image(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match patch {
        Some(p) if p < 16 => {
            let mut patches = split_patches(&image, path, &stem)?;
            Ok((patch_id(&stem, p), patches.swap_remove(p).image))
        }
        Some(p) => Err(CliError::Usage(format!("--patch must be in 0..16, got {p}"))),
        None if image.width() == PATCH_SIZE && image.height() == PATCH_SIZE => Ok((stem, image)),
        None => Err(CliError::Usage(format!(
            "{} is {}x{}; pass --patch for 512x512 images or use a {PATCH_SIZE}x{PATCH_SIZE} image",
            path.display(),
            image.width(),
            image.height()
        ))),
    }
}

fn cmd_query(a: QueryArgs) -> CliResult {
    a.jobs.apply()?;
    let index = load_index(&a.index)?;
    let (id, image) = query_patch(&a.image, a.patch)?;
    let h = index.header.clone();
    let extractor = Extractor::new(&h.config, h.family, image.width(), image.height())?.with_stride(h.stride)?;
    let sig = extractor.extract(&image, h.scheme, &id)?;
    let prepared = PreparedIndex::new(index)?;
    let start = Instant::now();
    let ranked = query_index(&prepared, &sig, a.top)?;
    info!("matched against {} entries in {:.3} s", prepared.len(), start.elapsed().as_secs_f64());
    for (rank, m) in ranked.iter().enumerate() {
        println!("{}\t{}\t{:e}", rank + 1, m.patch_id, m.jd);
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    a.jobs.apply()?;
    if a.nr == 0 {
        return Err(CliError::Usage("--nr must be positive".into()));
    }
    let index = load_index(&a.index)?;
    if let Some(db) = &a.db {
        index.verify_dataset(db)?;
    }
    let prepared = PreparedIndex::new(index)?;
    let (report, timing) = evaluate_timed(&prepared, a.nr)?;
    if let Some(path) = &a.report {
        fs::write(path, report.to_tsv())?;
    }
    let secs = timing.matching.as_secs_f64();
    info!(
        "similarity matching {:.3} s total, {:.6} s per query",
        secs,
        secs / timing.queries.max(1) as f64
    );
    println!("ARR\t{:.6}\tqueries={}\tnr={}", report.arr, report.queries.len(), report.nr);
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> CliResult {
    a.jobs.apply()?;
    if a.schemes.is_empty() {
        return Err(CliError::Usage("--schemes must list at least one scheme".into()));
    }
    let config = a.transform.config()?;
    for s in &a.schemes {
        s.validate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut settings = BuildSettings::new(config, a.marginal);
    settings.stride = a.stride;
    let scan = scan_dataset(&a.db)?;
    let records = scan.load_patches();
    println!("scheme\tfe_total_s\tfe_per_image_s\tsm_total_s\tsm_per_query_s\ttotal_s\tarr");
    for &scheme in &a.schemes {
        let built = build_indexes(&records, &[scheme], &settings, scan.manifest.digest)?;
        let index = built.indexes.into_iter().next().expect("one scheme requested");
        let prepared = PreparedIndex::new(index)?;
        let (report, timing) = evaluate_timed(&prepared, a.nr)?;
        let fe = built.extraction.as_secs_f64();
        let sm = timing.matching.as_secs_f64();
        println!(
            "{scheme}\t{fe:.3}\t{:.3}\t{sm:.3}\t{:.6}\t{:.3}\t{:.6}",
            fe / built.patches.max(1) as f64,
            sm / timing.queries.max(1) as f64,
            fe + sm,
            report.arr
        );
    }
    Ok(())
}

fn parse_pair(s: &str) -> CliResult<Option<(SubbandId, SubbandId)>> {
    if s == "auto" {
        return Ok(None);
    }
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("--pair expects two subband ids or `auto`, got `{s}`")))?;
    let parse = |t: &str| t.trim().parse::<SubbandId>().map_err(|e| CliError::Usage(e.to_string()));
    Ok(Some((parse(a)?, parse(b)?)))
}

fn cmd_diagnose(a: DiagnoseArgs) -> CliResult {
    let config = a.transform.config()?;
    let pair = parse_pair(&a.pair)?;
    let image = match a.patch {
        Some(_) => query_patch(&a.image, a.patch)?.1,
        None => load_color_image(&a.image)?,
    };
    let model = Extractor::new(&config, a.marginal, image.width(), image.height())?.model(&image)?;
    let band = |id: SubbandId| {
        model
            .subband(id)
            .ok_or_else(|| CliError::Usage(format!("subband {id} does not exist under {config}")))
    };
    let (first, second, label_b, ys) = match pair {
        Some((ia, ib)) => {
            let pb = band(ib)?;
            (ia, ib.to_string(), ib.to_string(), pb.values().to_vec())
        }
        None => {
            let ia = SubbandId::new(0, config.scales() as u8, 1);
            let plane = band(ia)?;
            let offset = select_intra_scale_neighbor(plane)?;
            let label = format!("{ia}@{},{}", offset.0, offset.1);
            (ia, label.clone(), label, neighbor_column(plane, offset))
        }
    };
    let xs = band(first)?.values().to_vec();
    fs::create_dir_all(&a.out)?;

    let mut hist = String::from("subband,center,count,kurtosis\n");
    let mut series: Vec<(String, &[f64])> = vec![(first.to_string(), &xs)];
    if pair.is_some() {
        series.push((second.clone(), &ys));
    }
    for (label, values) in series {
        let k = kurtosis(values)?;
        info!("{label}: kurtosis {k:.3}");
        for (center, count) in histogram(values, a.bins)? {
            hist.push_str(&format!("{label},{center:e},{count},{k:.6}\n"));
        }
    }
    fs::write(a.out.join("histogram.csv"), hist)?;

    let plot = chi_plot(&xs, &ys)?;
    let mut chi = String::from("lambda,chi,plotted\n");
    for p in &plot.points {
        chi.push_str(&format!("{:e},{:e},{}\n", p.lambda, p.chi, u8::from(p.plotted)));
    }
    fs::write(a.out.join("chi.csv"), chi)?;
    let s = plot.stats;
    fs::write(
        a.out.join("chi_stats.csv"),
        format!(
            "x,y,pearson,spearman,kendall,band,inside_band\n{first},{label_b},{:.9},{:.9},{:.9},{:.6},{:.6}\n",
            s.pearson,
            s.spearman,
            s.kendall,
            plot.band,
            plot.fraction_inside_band()
        ),
    )?;
    info!(
        "{first} vs {label_b}: pearson {:.4}, spearman {:.4}, kendall {:.4}",
        s.pearson, s.spearman, s.kendall
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    if a.classes == 0 {
        return Err(CliError::Usage("--classes must be positive".into()));
    }
    let paths = write_synth_corpus(&a.out, a.classes, a.seed)?;
    info!("wrote {} images to {}", paths.len(), a.out.display());
    Ok(())
}

fn cmd_decompose(a: DecomposeArgs) -> CliResult {
    let config = a.transform.config()?;
    let image = load_color_image(&a.image)?;
    let nsst = Nsst::new(&config, image.width(), image.height())?;
    let pyramids = image
        .channels()
        .iter()
        .map(|c| nsst.decompose(c))
        .collect::<Result<Vec<_>, _>>()?;
    write_subband_archive(&a.out, &pyramids)?;
    info!("wrote {} subbands to {}", 3 * config.band_count(), a.out.display());
    Ok(())
}

fn arity(db: &[f64], q: &[f64], n: usize) -> CliResult {
    if db.len() != n || q.len() != n {
        return Err(CliError::Usage(format!("--db and --q take {n} comma-separated values")));
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> CliResult {
    match a.which {
        Oracle::Gg { db, q } => {
            arity(&db, &q, 2)?;
            let (x, y) = (GgParams::new(db[0], db[1], 0.0)?, GgParams::new(q[0], q[1], 0.0)?);
            let closed = kld_gg(&x, &y)?;
            let numeric = kld_marginal_numeric(&MarginalModel::Gg(x), &MarginalModel::Gg(y))?;
            println!("closed\t{closed:.12e}\nnumeric\t{numeric:.12e}");
        }
        Oracle::Tls { db, q } => {
            arity(&db, &q, 3)?;
            let (x, y) = (TlsParams::new(db[0], db[1], db[2])?, TlsParams::new(q[0], q[1], q[2])?);
            println!("closed\t{:.12e}\nnumeric\t{:.12e}", kld_tls_closed(&x, &y), kld_tls_numeric(&x, &y)?);
        }
        Oracle::Copula { rho } => {
            let q = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let v = kld_gaussian_copula(&nalgebra::DMatrix::identity(2, 2), &q)?;
            println!("closed\t{v:.12e}");
        }
    }
    Ok(())
}
