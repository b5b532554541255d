//! File formats: observation tuples, feature sets, trained models, and grid
//! exports.
//!
//! Observation and feature files are plain UTF-8 CSV with a mandatory header
//! and `#` comment lines, simple enough to produce from a spreadsheet. Model
//! files are a single self-describing JSON document with an explicit format
//! version; parameters round-trip losslessly because floats are written in
//! shortest round-trip decimal form. All numeric text uses `.` as the
//! decimal separator regardless of locale.

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, SpatialFeature};
use crate::gmm::{CovarianceMode, GaussianComponent, GmmModel, SymMat2};
use crate::greedy::{GreedyConfig, GreedyTrace};
use crate::grid::{GridSpec, ProbabilityGrid};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const OBSERVATION_HEADER: &str =
    "known_id,known_lon,known_lat,relation,unknown_id,unknown_lon,unknown_lat";
pub const FEATURE_HEADER: &str = "distance_km,orientation_deg";
pub const MODEL_FORMAT_VERSION: u64 = 1;

/// One annotated report: a known POI, a relation label, and an unknown POI
/// whose coordinates are present in training data and absent in inference
/// data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub known_id: String,
    pub known: GeoPoint,
    /// Lower-cased relation label.
    pub relation: String,
    pub unknown_id: String,
    pub unknown: Option<GeoPoint>,
}

/// Whether a feature row came from an annotated observation or from KDE
/// augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Synthetic,
}

impl Provenance {
    fn as_str(&self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRecord {
    pub feature: SpatialFeature,
    pub provenance: Provenance,
}

// ---------------------------------------------------------------------------
// Observation files
// ---------------------------------------------------------------------------

pub fn read_observations_file(path: impl AsRef<Path>) -> Result<Vec<ObservationRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_observations(BufReader::new(file))
}

/// Parses observation tuples. Every non-comment, non-blank line either
/// yields a record or a located error; nothing is skipped silently.
pub fn read_observations(reader: impl BufRead) -> Result<Vec<ObservationRecord>> {
    let mut records = Vec::new();
    let mut header_seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, format!("unreadable line: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            check_header(line_no, trimmed, OBSERVATION_HEADER)?;
            header_seen = true;
            continue;
        }
        records.push(parse_observation(line_no, trimmed)?);
    }
    if !header_seen {
        return Err(Error::parse(
            1,
            format!("missing header line `{OBSERVATION_HEADER}`"),
        ));
    }
    Ok(records)
}

fn check_header(line_no: usize, line: &str, expected: &str) -> Result<()> {
    let got: Vec<&str> = line.split(',').map(str::trim).collect();
    let want: Vec<&str> = expected.split(',').collect();
    for (i, g) in got.iter().enumerate() {
        match want.get(i) {
            Some(w) if g == w => {}
            Some(w) => {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "unknown header field `{g}` in column {} (expected `{w}`)",
                        i + 1
                    ),
                ))
            }
            None => {
                return Err(Error::parse(
                    line_no,
                    format!("unknown header field `{g}` in column {}", i + 1),
                ))
            }
        }
    }
    if got.len() < want.len() {
        return Err(Error::parse(
            line_no,
            format!(
                "header has {} fields, expected {}: `{expected}`",
                got.len(),
                want.len()
            ),
        ));
    }
    Ok(())
}

fn parse_observation(line_no: usize, line: &str) -> Result<ObservationRecord> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(Error::parse(
            line_no,
            format!("expected 7 comma-separated fields, found {}", fields.len()),
        ));
    }
    let known = GeoPoint::new(
        parse_f64(line_no, "known_lon", fields[1])?,
        parse_f64(line_no, "known_lat", fields[2])?,
    )
    .map_err(|e| Error::parse(line_no, format!("known POI: {e}")))?;
    let relation = fields[3].to_lowercase();
    if relation.is_empty() {
        return Err(Error::parse(line_no, "empty relation label in column 4"));
    }
    let unknown = match (fields[5], fields[6]) {
        ("", "") => None,
        (lon, lat) if !lon.is_empty() && !lat.is_empty() => Some(
            GeoPoint::new(
                parse_f64(line_no, "unknown_lon", lon)?,
                parse_f64(line_no, "unknown_lat", lat)?,
            )
            .map_err(|e| Error::parse(line_no, format!("unknown POI: {e}")))?,
        ),
        _ => {
            return Err(Error::parse(
                line_no,
                "unknown_lon and unknown_lat must both be present or both be empty",
            ))
        }
    };
    Ok(ObservationRecord {
        known_id: fields[0].to_string(),
        known,
        relation,
        unknown_id: fields[4].to_string(),
        unknown,
    })
}

fn parse_f64(line_no: usize, column: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| {
        Error::parse(
            line_no,
            format!("column `{column}`: `{raw}` is not a number"),
        )
    })
}

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

pub fn write_features_file(
    path: impl AsRef<Path>,
    rows: &[FeatureRecord],
    include_provenance: bool,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_features(&mut w, rows, include_provenance).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_features(
    w: &mut impl Write,
    rows: &[FeatureRecord],
    include_provenance: bool,
) -> std::io::Result<()> {
    if include_provenance {
        writeln!(w, "{FEATURE_HEADER},provenance")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{}",
                r.feature.distance(),
                r.feature.orientation(),
                r.provenance.as_str()
            )?;
        }
    } else {
        writeln!(w, "{FEATURE_HEADER}")?;
        for r in rows {
            writeln!(w, "{},{}", r.feature.distance(), r.feature.orientation())?;
        }
    }
    Ok(())
}

pub fn read_features_file(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(BufReader::new(file))
}

/// Reads feature rows; the provenance column is optional and defaults to
/// `observed`.
pub fn read_features(reader: impl BufRead) -> Result<Vec<FeatureRecord>> {
    let mut rows = Vec::new();
    let mut with_provenance = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, format!("unreadable line: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if with_provenance.is_none() {
            let has_prov = trimmed.split(',').count() == 3;
            let expected = if has_prov {
                format!("{FEATURE_HEADER},provenance")
            } else {
                FEATURE_HEADER.to_string()
            };
            check_header(line_no, trimmed, &expected)?;
            with_provenance = Some(has_prov);
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let want = if with_provenance == Some(true) { 3 } else { 2 };
        if fields.len() != want {
            return Err(Error::parse(
                line_no,
                format!("expected {want} fields, found {}", fields.len()),
            ));
        }
        let feature = SpatialFeature::new(
            parse_f64(line_no, "distance_km", fields[0])?,
            parse_f64(line_no, "orientation_deg", fields[1])?,
        )
        .map_err(|e| Error::parse(line_no, e.to_string()))?;
        let provenance =
            if with_provenance == Some(true) {
                match fields[2] {
                    "observed" => Provenance::Observed,
                    "synthetic" => Provenance::Synthetic,
                    other => return Err(Error::parse(
                        line_no,
                        format!(
                            "column `provenance`: `{other}` is neither `observed` nor `synthetic`"
                        ),
                    )),
                }
            } else {
                Provenance::Observed
            };
        rows.push(FeatureRecord {
            feature,
            provenance,
        });
    }
    if with_provenance.is_none() {
        return Err(Error::parse(
            1,
            format!("missing header line `{FEATURE_HEADER}`"),
        ));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// Provenance block persisted alongside trained parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// Rows of the training set (observed plus synthetic).
    pub sample_count: usize,
    /// Echo of the full training configuration, including the seed.
    pub config: GreedyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ComponentRecord {
    weight: f64,
    mean: [f64; 2],
    /// Full 2x2 matrix even in diagonal mode, for format uniformity.
    cov: [[f64; 2]; 2],
}

/// On-disk layout of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub relation_label: String,
    pub covariance_mode: CovarianceMode,
    components: Vec<ComponentRecord>,
    pub metadata: TrainingMetadata,
    pub trace: GreedyTrace,
}

impl ModelFile {
    pub fn from_parts(model: &GmmModel, trace: &GreedyTrace, metadata: &TrainingMetadata) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            relation_label: model.relation_label().to_string(),
            covariance_mode: model.covariance_mode(),
            components: model
                .components()
                .iter()
                .map(|c| ComponentRecord {
                    weight: c.weight,
                    mean: c.mean,
                    cov: c.cov.as_rows(),
                })
                .collect(),
            metadata: metadata.clone(),
            trace: trace.clone(),
        }
    }

    pub fn into_model(&self) -> Result<GmmModel> {
        let comps = self
            .components
            .iter()
            .map(|r| {
                Ok(GaussianComponent {
                    weight: r.weight,
                    mean: r.mean,
                    cov: SymMat2::from_rows(r.cov)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GmmModel::new(comps, self.covariance_mode, self.relation_label.clone())
    }
}

pub fn write_model(
    model: &GmmModel,
    trace: &GreedyTrace,
    metadata: &TrainingMetadata,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let doc = ModelFile::from_parts(model, trace, metadata);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &doc)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    read_model_file(path)?.into_model()
}

/// The version gate runs on the raw document before full decoding, so an
/// unknown version is reported as such even when the rest of the schema
/// happens to match.
fn parse_model(text: &str) -> Result<ModelFile> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(e.line(), format!("malformed model file: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::parse(1, "model file lacks a numeric `format_version`"))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::parse(0, format!("malformed model file: {e}")))
}

// ---------------------------------------------------------------------------
// Grid exports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Pgm,
}

pub fn export_grid(
    grid: &ProbabilityGrid,
    path: impl AsRef<Path>,
    format: GridFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        GridFormat::Csv => write_grid_csv(&mut w, grid).map_err(|e| Error::io(path, e))?,
        GridFormat::Pgm => write_grid_pgm(&mut w, grid).map_err(|e| Error::io(path, e))?,
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// CSV rows run north to south: row 0 of the file is the northernmost grid
/// row. The header comment carries the bounding box, dimensions, and
/// projection, so the file re-parses into an equivalent grid.
pub fn write_grid_csv(w: &mut impl Write, grid: &ProbabilityGrid) -> std::io::Result<()> {
    let s = grid.spec();
    let (mode, ref_lat) = match s.projection.mode {
        crate::geo::ProjectionMode::EquirectangularCorrected => ("corrected", s.projection.ref_lat),
        crate::geo::ProjectionMode::RawDegrees => ("raw", 0.0),
    };
    writeln!(
        w,
        "# lon_min={} lon_max={} lat_min={} lat_max={} nx={} ny={} mode={mode} ref_lat={ref_lat}",
        s.lon_min, s.lon_max, s.lat_min, s.lat_max, s.nx, s.ny
    )?;
    for row in (0..s.ny).rev() {
        let mut line = String::new();
        for col in 0..s.nx {
            if col > 0 {
                line.push(',');
            }
            line.push_str(&grid.value(col, row).to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_grid_csv_file(path: impl AsRef<Path>) -> Result<ProbabilityGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_grid_csv(BufReader::new(file))
}

pub fn read_grid_csv(reader: impl BufRead) -> Result<ProbabilityGrid> {
    let mut spec: Option<GridSpec> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, format!("unreadable line: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if spec.is_none() {
                spec = Some(parse_grid_header(line_no, trimmed)?);
            }
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|f| parse_f64(line_no, "value", f.trim()))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let spec = spec.ok_or_else(|| Error::parse(1, "missing `#` grid header line"))?;
    if rows.len() != spec.ny || rows.iter().any(|r| r.len() != spec.nx) {
        return Err(Error::parse(
            1,
            format!(
                "grid body does not match header dims {}x{}: found {} rows",
                spec.nx,
                spec.ny,
                rows.len()
            ),
        ));
    }
    // File rows are north-first; storage is south-first.
    let mut values = Vec::with_capacity(spec.cell_count());
    for row in rows.into_iter().rev() {
        values.extend(row);
    }
    ProbabilityGrid::from_normalized(spec, values)
}

fn parse_grid_header(line_no: usize, line: &str) -> Result<GridSpec> {
    let mut lon_min = None;
    let mut lon_max = None;
    let mut lat_min = None;
    let mut lat_max = None;
    let mut nx = None;
    let mut ny = None;
    let mut mode = None;
    let mut ref_lat = None;
    for token in line.trim_start_matches('#').split_whitespace() {
        let (key, raw) = token.split_once('=').ok_or_else(|| {
            Error::parse(line_no, format!("grid header token `{token}` lacks `=`"))
        })?;
        match key {
            "lon_min" => lon_min = Some(parse_f64(line_no, key, raw)?),
            "lon_max" => lon_max = Some(parse_f64(line_no, key, raw)?),
            "lat_min" => lat_min = Some(parse_f64(line_no, key, raw)?),
            "lat_max" => lat_max = Some(parse_f64(line_no, key, raw)?),
            "nx" => nx = Some(parse_usize(line_no, key, raw)?),
            "ny" => ny = Some(parse_usize(line_no, key, raw)?),
            "mode" => mode = Some(raw.to_string()),
            "ref_lat" => ref_lat = Some(parse_f64(line_no, key, raw)?),
            other => {
                return Err(Error::parse(
                    line_no,
                    format!("unknown grid header key `{other}`"),
                ))
            }
        }
    }
    let missing = |what: &str| Error::parse(line_no, format!("grid header lacks `{what}`"));
    let projection = match mode.as_deref() {
        Some("corrected") => {
            crate::geo::ProjectionConfig::corrected(ref_lat.ok_or_else(|| missing("ref_lat"))?)?
        }
        Some("raw") => crate::geo::ProjectionConfig::raw_degrees(),
        Some(other) => {
            return Err(Error::parse(
                line_no,
                format!("grid header mode `{other}` is neither `corrected` nor `raw`"),
            ))
        }
        None => return Err(missing("mode")),
    };
    GridSpec::new(
        lon_min.ok_or_else(|| missing("lon_min"))?,
        lon_max.ok_or_else(|| missing("lon_max"))?,
        lat_min.ok_or_else(|| missing("lat_min"))?,
        lat_max.ok_or_else(|| missing("lat_max"))?,
        nx.ok_or_else(|| missing("nx"))?,
        ny.ok_or_else(|| missing("ny"))?,
        projection,
    )
}

fn parse_usize(line_no: usize, column: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>().map_err(|_| {
        Error::parse(
            line_no,
            format!("column `{column}`: `{raw}` is not a non-negative integer"),
        )
    })
}

/// ASCII P2 PGM, 16-bit: cell values rescaled linearly so the maximum cell
/// maps to 65535. Pixel rows run north to south like the CSV export.
pub fn write_grid_pgm(w: &mut impl Write, grid: &ProbabilityGrid) -> std::io::Result<()> {
    let s = grid.spec();
    let max = grid.values().iter().cloned().fold(0.0f64, f64::max);
    writeln!(w, "P2")?;
    writeln!(w, "{} {}", s.nx, s.ny)?;
    writeln!(w, "65535")?;
    let mut line = String::new();
    for row in (0..s.ny).rev() {
        for col in 0..s.nx {
            let pixel = ((grid.value(col, row) / max) * 65535.0).round() as u32;
            let token = pixel.to_string();
            // Classic PGM readers cap lines at 70 characters.
            if !line.is_empty() && line.len() + 1 + token.len() > 70 {
                writeln!(w, "{line}")?;
                line.clear();
            }
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&token);
        }
    }
    if !line.is_empty() {
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::ProjectionConfig;
    use std::io::Cursor;

    fn obs_text(body: &str) -> String {
        format!("{OBSERVATION_HEADER}\n{body}")
    }

    #[test]
    fn observations_parse_and_normalize_labels() {
        let text = obs_text(
            "# big ben is north of the palace\n\
             palace,-0.1246,51.4994,North,bigben,-0.1163,51.5007\n\
             soho,-0.1337,51.5137,near,covent,,\n\
             soho,-0.1337,51.5137,Near,covent,-0.1226,51.5117\n",
        );
        let records = read_observations(Cursor::new(text)).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].relation, "north");
        assert_eq!(records[1].relation, "near");
        assert_eq!(records[2].relation, "near");
        assert!(records[1].unknown.is_none());
        assert_eq!(records[0].unknown.unwrap().lat, 51.5007);
    }

    #[test]
    fn observation_errors_carry_line_numbers() {
        let text = obs_text("palace,-0.12,51.49,north,ben\n");
        let err = read_observations(Cursor::new(text)).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("7"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }

        let text = obs_text("palace,-0.12,51.49,north,ben,0.5,\n");
        assert!(matches!(
            read_observations(Cursor::new(text)),
            Err(Error::Parse { line: 2, .. })
        ));

        let text = obs_text("palace,-0.12,91.0,north,ben,,\n");
        assert!(matches!(
            read_observations(Cursor::new(text)),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn observation_header_is_checked() {
        let err = read_observations(Cursor::new(
            "known_id,known_lon,known_lat,relation,unknown_id,unknown_lon,altitude\nx,0,0,r,y,,\n",
        ))
        .unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("altitude"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_observations(Cursor::new("")).is_err());
    }

    #[test]
    fn feature_files_round_trip_with_and_without_provenance() {
        let rows = vec![
            FeatureRecord {
                feature: SpatialFeature::new(1.25, 90.5).unwrap(),
                provenance: Provenance::Observed,
            },
            FeatureRecord {
                feature: SpatialFeature::new(0.0, 359.999).unwrap(),
                provenance: Provenance::Synthetic,
            },
        ];
        for include in [false, true] {
            let mut buf = Vec::new();
            write_features(&mut buf, &rows, include).unwrap();
            let back = read_features(Cursor::new(buf)).unwrap();
            assert_eq!(back.len(), 2);
            assert_eq!(back[0].feature, rows[0].feature);
            assert_eq!(back[1].feature, rows[1].feature);
            if include {
                assert_eq!(back[1].provenance, Provenance::Synthetic);
            } else {
                assert_eq!(back[1].provenance, Provenance::Observed);
            }
        }
    }

    #[test]
    fn feature_rows_outside_domain_are_rejected() {
        let text = format!("{FEATURE_HEADER}\n-1.0,90.0\n");
        assert!(matches!(
            read_features(Cursor::new(text)),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = format!("{FEATURE_HEADER}\n1.0,360.0\n");
        assert!(read_features(Cursor::new(text)).is_err());
    }

    fn sample_model() -> GmmModel {
        GmmModel::new(
            vec![
                GaussianComponent {
                    weight: 0.375,
                    mean: [1.0e-7, 359.123456789],
                    cov: SymMat2::new(2.5, 0.125, 30.0),
                },
                GaussianComponent {
                    weight: 0.625,
                    mean: [17.25, 42.0],
                    cov: SymMat2::new(0.1, -0.01, 8.0),
                },
            ],
            CovarianceMode::Full,
            "nextto",
        )
        .unwrap()
    }

    #[test]
    fn model_files_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = sample_model();
        let trace = GreedyTrace {
            steps: vec![crate::greedy::GreedyStep {
                component_count: 1,
                log_likelihood: -1234.5678,
                accepted: true,
            }],
        };
        let meta = TrainingMetadata {
            sample_count: 321,
            config: GreedyConfig::default(),
        };
        write_model(&model, &trace, &meta, &path).unwrap();
        let doc = read_model_file(&path).unwrap();
        assert_eq!(doc.metadata, meta);
        assert_eq!(doc.trace, trace);
        let back = doc.into_model().unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn unsupported_model_version_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = sample_model();
        write_model(
            &model,
            &GreedyTrace::default(),
            &TrainingMetadata::default(),
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_model(&path),
            Err(Error::UnsupportedVersion { found: 99, .. })
        ));
    }

    #[test]
    fn truncated_model_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_model(
            &sample_model(),
            &GreedyTrace::default(),
            &TrainingMetadata::default(),
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(read_model(&path), Err(Error::Parse { .. })));
    }

    fn uniform_grid(nx: usize, ny: usize) -> ProbabilityGrid {
        let spec = GridSpec::new(
            -1.0,
            1.0,
            51.0,
            52.0,
            nx,
            ny,
            ProjectionConfig::corrected(51.5).unwrap(),
        )
        .unwrap();
        let cells = spec.cell_count();
        ProbabilityGrid::from_masses(spec, vec![1.0; cells]).unwrap()
    }

    #[test]
    fn grid_csv_round_trips() {
        let grid = uniform_grid(2, 2);
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.matches("0.25").count(), 4);
        let back = read_grid_csv(Cursor::new(buf)).unwrap();
        assert_eq!(back.spec(), grid.spec());
        for (a, b) in back.values().iter().zip(grid.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!((back.sum() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn constant_grid_pgm_is_all_white() {
        let grid = uniform_grid(2, 2);
        let mut buf = Vec::new();
        write_grid_pgm(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("2 2"));
        assert_eq!(lines.next(), Some("65535"));
        let pixels: Vec<&str> = lines.flat_map(|l| l.split_whitespace()).collect();
        assert_eq!(pixels, vec!["65535"; 4]);
    }

    #[test]
    fn pgm_lines_stay_short() {
        let grid = uniform_grid(50, 50);
        let mut buf = Vec::new();
        write_grid_pgm(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.len() <= 70));
    }

    #[test]
    fn io_failures_surface_the_path() {
        let grid = uniform_grid(2, 2);
        let err = export_grid(&grid, "/nonexistent-dir/grid.csv", GridFormat::Csv).unwrap_err();
        match err {
            Error::Io { path, .. } => {
                assert_eq!(path, std::path::PathBuf::from("/nonexistent-dir/grid.csv"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
