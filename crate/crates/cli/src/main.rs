//! `georel`: train probabilistic spatial-relation models from annotated
//! observation tuples and apply them to locate unknown points of interest.
//!
//! The pipeline is split into inspectable stages: `features` extracts
//! per-relation distance/orientation files, `augment` adds KDE-generated
//! semi-synthetic rows, `train` fits a mixture per relation, and
//! `compare`/`sweep`/`heatmap`/`infer` consume the trained models. All
//! randomness flows from an explicit `--seed`, so every command is
//! bit-reproducible.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use georel::data_io::{
    export_grid, read_features_file, read_model, read_observations_file, write_features_file,
    write_model, FeatureRecord, GridFormat, ObservationRecord, Provenance, TrainingMetadata,
};
use georel::geo::{extract_feature, project, CartesianPoint, GeoPoint, ProjectionConfig};
use georel::gmm::{log_likelihood, CovarianceMode, EmConfig};
use georel::greedy::{fit_greedy, GreedyConfig};
use georel::grid::{infer_location, relation_heatmap, sweep_components, GridSpec, Observation};
use georel::kde::{rule_of_thumb_bandwidth, KdeModel};
use georel::{kl_symmetric, SpatialFeature};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "georel",
    version,
    about = "Quantify spatial relations and locate unknown points"
)]
struct Cli {
    /// Worker threads for internal parallelism (0 = available parallelism).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-relation feature files from an observation CSV.
    Features(FeaturesArgs),
    /// Generate semi-synthetic feature rows from a KDE fit.
    Augment(AugmentArgs),
    /// Train a mixture model on a feature file.
    Train(TrainArgs),
    /// Symmetric KL divergence between two trained models.
    Compare(CompareArgs),
    /// Repeat training under increasing component caps and report statistics.
    Sweep(SweepArgs),
    /// Export the positional-probability grid of one model around a known point.
    Heatmap(HeatmapArgs),
    /// Fuse several observations into one location estimate.
    Infer(InferArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjectionArg {
    /// Equirectangular with the cos(ref_lat) meridian correction.
    Corrected,
    /// Plain degrees-to-km, no meridian correction.
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovarianceArg {
    Diagonal,
    Full,
}

impl From<CovarianceArg> for CovarianceMode {
    fn from(v: CovarianceArg) -> Self {
        match v {
            CovarianceArg::Diagonal => CovarianceMode::Diagonal,
            CovarianceArg::Full => CovarianceMode::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Pgm,
}

impl From<FormatArg> for GridFormat {
    fn from(v: FormatArg) -> Self {
        match v {
            FormatArg::Csv => GridFormat::Csv,
            FormatArg::Pgm => GridFormat::Pgm,
        }
    }
}

#[derive(Args)]
struct FeaturesArgs {
    /// Observation CSV (header: known_id,known_lon,known_lat,relation,unknown_id,unknown_lon,unknown_lat).
    #[arg(long)]
    observations: PathBuf,
    /// Directory for the per-relation feature files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Only extract this relation (case-insensitive).
    #[arg(long)]
    relation: Option<String>,
    /// Longitude-to-km convention.
    #[arg(long, value_enum, default_value_t = ProjectionArg::Corrected)]
    projection: ProjectionArg,
    /// Reference latitude for the corrected projection [default: mean known-POI latitude].
    #[arg(long, allow_negative_numbers = true)]
    ref_lat: Option<f64>,
}

#[derive(Args)]
struct AugmentArgs {
    /// Feature CSV to fit the KDE on (synthetic rows in the input are ignored).
    #[arg(long)]
    features: PathBuf,
    /// Output feature CSV: observed rows plus the generated ones.
    #[arg(long)]
    out: PathBuf,
    /// Number of semi-synthetic rows to generate.
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bandwidth substituted for a dimension whose sample variance is zero.
    #[arg(long)]
    bandwidth_floor: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSV (observed and/or synthetic rows).
    #[arg(long)]
    features: PathBuf,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Relation label stored in the model [default: feature file stem].
    #[arg(long)]
    relation: Option<String>,
    /// Trace sidecar path [default: <out>.trace.csv].
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    greedy: GreedyArgs,
}

#[derive(Args)]
struct GreedyArgs {
    #[arg(long, value_enum, default_value_t = CovarianceArg::Diagonal)]
    covariance_mode: CovarianceArg,
    #[arg(long, default_value_t = 10)]
    max_components: usize,
    #[arg(long, default_value_t = 2)]
    candidates_per_component: usize,
    #[arg(long, default_value_t = 20)]
    partial_em_iterations: usize,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    ll_tolerance: f64,
    #[arg(long, default_value_t = 1e-6)]
    variance_floor: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl GreedyArgs {
    fn to_config(&self) -> GreedyConfig {
        GreedyConfig {
            max_components: self.max_components,
            candidates_per_component: self.candidates_per_component,
            partial_em_iterations: self.partial_em_iterations,
            covariance_mode: self.covariance_mode.into(),
            em: EmConfig {
                max_iterations: self.max_iterations,
                ll_tolerance: self.ll_tolerance,
                variance_floor: self.variance_floor,
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model_a: PathBuf,
    #[arg(long)]
    model_b: PathBuf,
    /// Monte Carlo samples per direction.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    features: PathBuf,
    /// Component caps: comma-separated integers or A-B ranges, e.g. "1-10" or "1,2,5".
    #[arg(long, default_value = "1-10")]
    caps: String,
    /// Greedy runs per cap (with derived seeds).
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Monte Carlo samples per KL direction.
    #[arg(long, default_value_t = 10_000)]
    kl_samples: usize,
    /// Output CSV [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    greedy: GreedyArgs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    lon_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lon_max: f64,
    #[arg(long, default_value_t = 51.0, allow_negative_numbers = true)]
    lat_min: f64,
    #[arg(long, default_value_t = 52.0, allow_negative_numbers = true)]
    lat_max: f64,
    #[arg(long, default_value_t = 50)]
    nx: usize,
    #[arg(long, default_value_t = 50)]
    ny: usize,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Corrected)]
    projection: ProjectionArg,
    /// Reference latitude for the corrected projection [default: bounding-box center].
    #[arg(long, allow_negative_numbers = true)]
    ref_lat: Option<f64>,
}

impl GridArgs {
    fn to_spec(&self) -> Result<GridSpec> {
        let projection = match self.projection {
            ProjectionArg::Raw => ProjectionConfig::raw_degrees(),
            ProjectionArg::Corrected => ProjectionConfig::corrected(
                self.ref_lat.unwrap_or(0.5 * (self.lat_min + self.lat_max)),
            )?,
        };
        Ok(GridSpec::new(
            self.lon_min,
            self.lon_max,
            self.lat_min,
            self.lat_max,
            self.nx,
            self.ny,
            projection,
        )?)
    }
}

#[derive(Args)]
struct HeatmapArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Output grid file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Known-POI longitude [default: bounding-box center].
    #[arg(long, requires = "known_lat", allow_negative_numbers = true)]
    known_lon: Option<f64>,
    /// Known-POI latitude [default: bounding-box center].
    #[arg(long, requires = "known_lon", allow_negative_numbers = true)]
    known_lat: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct InferArgs {
    /// Manifest CSV (header: known_id,known_lon,known_lat,model); model paths
    /// resolve relative to the manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Output grid file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Highest-probability cells to print.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[command(flatten)]
    grid: GridArgs,
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // One pool per process; a failure here only means it was built
        // already.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Features(args) => cmd_features(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Train(args) => cmd_train(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Infer(args) => cmd_infer(args),
    }
}

fn cmd_features(args: FeaturesArgs) -> Result<()> {
    let records = read_observations_file(&args.observations)?;
    let filter = args.relation.as_ref().map(|r| r.to_lowercase());
    let selected: Vec<&ObservationRecord> = records
        .iter()
        .filter(|r| filter.as_ref().is_none_or(|f| &r.relation == f))
        .collect();
    if let Some(f) = &filter {
        if selected.is_empty() {
            bail!(
                "no records with relation `{f}` in {}",
                args.observations.display()
            );
        }
    }

    let trainable: Vec<&ObservationRecord> = selected
        .iter()
        .copied()
        .filter(|r| r.unknown.is_some())
        .collect();
    if trainable.is_empty() {
        bail!(
            "no training records (with unknown coordinates) in {}",
            args.observations.display()
        );
    }
    let cfg = match args.projection {
        ProjectionArg::Raw => ProjectionConfig::raw_degrees(),
        ProjectionArg::Corrected => {
            let ref_lat = args.ref_lat.unwrap_or_else(|| {
                trainable.iter().map(|r| r.known.lat).sum::<f64>() / trainable.len() as f64
            });
            ProjectionConfig::corrected(ref_lat)?
        }
    };

    let mut groups: BTreeMap<String, Vec<FeatureRecord>> = BTreeMap::new();
    let mut skipped_coincident: BTreeMap<String, usize> = BTreeMap::new();
    let mut skipped_missing: BTreeMap<String, usize> = BTreeMap::new();
    for record in &selected {
        let Some(unknown) = record.unknown else {
            *skipped_missing.entry(record.relation.clone()).or_default() += 1;
            continue;
        };
        // Anchoring the projection at the known POI makes the feature a pure
        // function of the pair.
        let unknown_c = project(unknown, record.known, &cfg)?;
        match extract_feature(CartesianPoint::new(0.0, 0.0), unknown_c) {
            Ok(feature) => groups
                .entry(record.relation.clone())
                .or_default()
                .push(FeatureRecord {
                    feature,
                    provenance: Provenance::Observed,
                }),
            Err(georel::Error::DegeneratePair { .. }) => {
                eprintln!(
                    "warning: skipped coincident pair {} -> {} (relation {})",
                    record.known_id, record.unknown_id, record.relation
                );
                *skipped_coincident
                    .entry(record.relation.clone())
                    .or_default() += 1;
            }
            Err(other) => return Err(other.into()),
        }
    }

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    for (relation, rows) in &groups {
        let path = args
            .out_dir
            .join(format!("{}.features.csv", sanitize(relation)));
        write_features_file(&path, rows, false)?;
        println!(
            "relation={relation} written={} skipped_coincident={} skipped_missing_unknown={} file={}",
            rows.len(),
            skipped_coincident.get(relation).copied().unwrap_or(0),
            skipped_missing.get(relation).copied().unwrap_or(0),
            path.display()
        );
    }
    Ok(())
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let rows = read_features_file(&args.features)?;
    let observed: Vec<FeatureRecord> = rows
        .into_iter()
        .filter(|r| r.provenance == Provenance::Observed)
        .collect();
    if observed.len() < 2 {
        bail!(
            "{} has {} observed rows; the density fit needs at least 2",
            args.features.display(),
            observed.len()
        );
    }
    let features: Vec<SpatialFeature> = observed.iter().map(|r| r.feature).collect();
    let (h1, h2) = bandwidth_or_floor(&features, args.bandwidth_floor)?;
    let model = KdeModel::with_bandwidth(features, h1, h2)?;
    let synthetic = model.sample(args.count, args.seed)?;

    let mut out = observed.clone();
    out.extend(synthetic.into_iter().map(|feature| FeatureRecord {
        feature,
        provenance: Provenance::Synthetic,
    }));
    write_features_file(&args.out, &out, true)?;
    println!(
        "observed={} synthetic={} h1={h1} h2={h2} file={}",
        observed.len(),
        args.count,
        args.out.display()
    );
    Ok(())
}

fn bandwidth_or_floor(features: &[SpatialFeature], floor: Option<f64>) -> Result<(f64, f64)> {
    match rule_of_thumb_bandwidth(features) {
        Ok(h) => Ok(h),
        Err(georel::Error::DegenerateData(msg)) => {
            let Some(floor) = floor else {
                bail!("{msg}; pass --bandwidth-floor to substitute a minimum bandwidth");
            };
            if !floor.is_finite() || floor <= 0.0 {
                bail!("--bandwidth-floor must be > 0, got {floor}");
            }
            let n = features.len();
            let factor = (1.0 / n as f64).powf(1.0 / 6.0);
            let h = |values: Vec<f64>| {
                let mean = values.iter().sum::<f64>() / n as f64;
                let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
                let std = (ss / (n - 1) as f64).sqrt();
                if std > 0.0 {
                    std * factor
                } else {
                    floor
                }
            };
            Ok((
                h(features.iter().map(|f| f.distance()).collect()),
                h(features.iter().map(|f| f.orientation()).collect()),
            ))
        }
        Err(other) => Err(other.into()),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let rows = read_features_file(&args.features)?;
    let data: Vec<SpatialFeature> = rows.iter().map(|r| r.feature).collect();
    let relation = match &args.relation {
        Some(r) => r.to_lowercase(),
        None => relation_from_path(&args.features),
    };
    let cfg = args.greedy.to_config();
    let (model, trace) = fit_greedy(&data, &cfg)?;
    let model = model.with_relation_label(relation.clone());
    let ll = log_likelihood(&model, &data)?;

    let metadata = TrainingMetadata {
        sample_count: data.len(),
        config: cfg,
    };
    write_model(&model, &trace, &metadata, &args.out)?;

    let trace_path = args
        .trace_out
        .unwrap_or_else(|| sibling_with_suffix(&args.out, ".trace.csv"));
    let file =
        File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "step,components,log_likelihood,accepted")?;
    for (i, step) in trace.steps.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{}",
            step.component_count, step.log_likelihood, step.accepted
        )?;
    }
    w.flush()?;

    println!(
        "relation={relation} components={} log_likelihood={ll} model={} trace={}",
        model.components().len(),
        args.out.display(),
        trace_path.display()
    );
    Ok(())
}

fn relation_from_path(path: &Path) -> String {
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.split('.').next().unwrap_or("relation").to_lowercase()
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    name.push_str(suffix);
    path.with_file_name(name)
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let a = read_model(&args.model_a)?;
    let b = read_model(&args.model_b)?;
    let est = kl_symmetric(&a, &b, args.samples, args.seed)?;
    println!(
        "symmetric_kl_nats={} std_error={} samples={}",
        est.value, est.std_error, est.sample_count
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let rows = read_features_file(&args.features)?;
    let data: Vec<SpatialFeature> = rows.iter().map(|r| r.feature).collect();
    let caps = parse_caps(&args.caps)?;
    let cfg = args.greedy.to_config();
    let report = sweep_components(&data, &caps, args.repetitions, &cfg, args.kl_samples)?;

    let mut body = String::from(
        "max_components,mean_log_likelihood,std_log_likelihood,mean_kl_vs_baseline,std_kl_vs_baseline\n",
    );
    for row in &report {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            row.max_components,
            row.mean_log_likelihood,
            row.std_log_likelihood,
            row.mean_kl_vs_baseline,
            row.std_kl_vs_baseline
        ));
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, &body).with_context(|| format!("writing {}", path.display()))?;
            println!("rows={} file={}", report.len(), path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

/// Parses "1-10" / "1,2,5" / mixtures of both into a cap list.
fn parse_caps(spec: &str) -> Result<Vec<usize>> {
    let mut caps = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad_cap(part))?;
                let hi: usize = hi.trim().parse().map_err(|_| bad_cap(part))?;
                if lo == 0 || hi < lo {
                    return Err(bad_cap(part));
                }
                caps.extend(lo..=hi);
            }
            None => {
                let v: usize = part.parse().map_err(|_| bad_cap(part))?;
                if v == 0 {
                    return Err(bad_cap(part));
                }
                caps.push(v);
            }
        }
    }
    if caps.is_empty() {
        bail!("--caps `{spec}` names no component caps");
    }
    Ok(caps)
}

fn bad_cap(part: &str) -> anyhow::Error {
    anyhow!("--caps entry `{part}` is not a positive integer or A-B range")
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let spec = args.grid.to_spec()?;
    let known = match (args.known_lon, args.known_lat) {
        (Some(lon), Some(lat)) => GeoPoint::new(lon, lat)?,
        _ => spec.center(),
    };
    let grid = relation_heatmap(&model, &spec, known)?;
    export_grid(&grid, &args.out, args.format.into())?;
    println!(
        "file={} format={} nx={} ny={}",
        args.out.display(),
        match args.format {
            FormatArg::Csv => "csv",
            FormatArg::Pgm => "pgm",
        },
        spec.nx,
        spec.ny
    );
    Ok(())
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let observations = read_manifest(&args.manifest)?;
    if observations.is_empty() {
        bail!(
            "manifest {} contains no observations",
            args.manifest.display()
        );
    }
    let spec = args.grid.to_spec()?;
    let grid = infer_location(&observations, &spec)?;
    export_grid(&grid, &args.out, args.format.into())?;
    for (rank, (center, p)) in grid.top_cells(args.top_k).iter().enumerate() {
        println!(
            "rank={} lon={} lat={} probability={}",
            rank + 1,
            center.lon,
            center.lat,
            p
        );
    }
    println!("file={}", args.out.display());
    Ok(())
}

const MANIFEST_HEADER: &str = "known_id,known_lon,known_lat,model";

fn read_manifest(path: &Path) -> Result<Vec<Observation>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut observations = Vec::new();
    let mut header_seen = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.with_context(|| format!("{}:{line_no}", path.display()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != MANIFEST_HEADER {
                bail!(
                    "{}:{line_no}: manifest header must be `{MANIFEST_HEADER}`",
                    path.display()
                );
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            bail!(
                "{}:{line_no}: expected 4 comma-separated fields, found {}",
                path.display(),
                fields.len()
            );
        }
        let lon: f64 = fields[1].parse().map_err(|_| {
            anyhow!(
                "{}:{line_no}: `{}` is not a number",
                path.display(),
                fields[1]
            )
        })?;
        let lat: f64 = fields[2].parse().map_err(|_| {
            anyhow!(
                "{}:{line_no}: `{}` is not a number",
                path.display(),
                fields[2]
            )
        })?;
        let model_path = base.join(fields[3]);
        let relation_model = read_model(&model_path)
            .with_context(|| format!("{}:{line_no}: model `{}`", path.display(), fields[3]))?;
        observations.push(Observation {
            known: GeoPoint::new(lon, lat)?,
            relation_model,
        });
    }
    if !header_seen {
        bail!("{}: manifest is empty", path.display());
    }
    Ok(observations)
}
