//! File formats.
//!
//! Input documents (scans, amplitude tracks, synthesis specs) are JSON
//! objects carrying `"version": "v1"` and a `"kind"` tag. Scan powers are
//! stored in dBm, with `null` for an empty bin. Reports are comma-separated
//! tables with a mandatory header row.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{Ecdf, FadingFamily, FadingFit, FadingModel, FamilyKind};
use crate::model::{
    db_to_linear, linear_to_db, AmplitudeTrack, Azimuth, CarrierConfig, Environment, Orientation, Pdp, TrackGeometry,
    TrackScan, DEFAULT_CARRIER_GHZ, DEFAULT_DELAY_BIN_NS, DEFAULT_NUM_POSITIONS, DEFAULT_SPACING_WAVELENGTHS,
};
use crate::pdp::{position_power, voltage_amplitude, PipelineConfig, TrackMode};
use crate::spatial::{damped_cos, AutocorrSeries, DampedCosParams};
use crate::synth::{MultipathSpec, SynthSpec, Tap};

pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanHeader {
    pub carrier_ghz: f64,
    pub spacing_wavelengths: f64,
    pub num_positions: usize,
    pub environment: Environment,
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub position_index: usize,
    pub azimuth_deg: i64,
    #[serde(default = "default_delay_bin")]
    pub delay_step_ns: f64,
    pub powers_dbm: Vec<Option<f64>>,
    /// Per-record override of the header noise floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanDoc {
    pub version: String,
    pub header: ScanHeader,
    pub records: Vec<ScanRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDoc {
    pub version: String,
    pub spacing_wavelengths: f64,
    #[serde(default)]
    pub label: String,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryDoc {
    #[serde(default = "default_carrier")]
    pub carrier_ghz: f64,
    #[serde(default = "default_num_positions")]
    pub num_positions: usize,
    #[serde(default = "default_spacing")]
    pub spacing_wavelengths: f64,
    #[serde(default = "default_orientation")]
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpecDoc {
    pub version: String,
    #[serde(flatten)]
    pub geometry: GeometryDoc,
    pub marginal: FadingFamily,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDoc {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpecDoc {
    pub version: String,
    #[serde(flatten)]
    pub geometry: GeometryDoc,
    pub environment: Environment,
    #[serde(default = "default_delay_bin")]
    pub delay_bin_ns: f64,
    pub num_bins: usize,
    pub noise_floor_dbm: f64,
    pub taps: Vec<Tap>,
    /// Azimuth in whole degrees (as a string key) to the taps seen from it.
    pub visibility: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub correlation: Option<CorrelationDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Document {
    Scan(ScanDoc),
    Track(TrackDoc),
    TrackSpec(TrackSpecDoc),
    ScanSpec(ScanSpecDoc),
}

fn default_delay_bin() -> f64 {
    DEFAULT_DELAY_BIN_NS
}
fn default_carrier() -> f64 {
    DEFAULT_CARRIER_GHZ
}
fn default_num_positions() -> usize {
    DEFAULT_NUM_POSITIONS
}
fn default_spacing() -> f64 {
    DEFAULT_SPACING_WAVELENGTHS
}
fn default_orientation() -> Orientation {
    Orientation::OrthogonalToTr
}

impl GeometryDoc {
    pub fn carrier(&self) -> Result<CarrierConfig> {
        CarrierConfig::new(self.carrier_ghz)
    }

    pub fn geometry(&self) -> Result<TrackGeometry> {
        TrackGeometry::new(self.num_positions, self.spacing_wavelengths, self.orientation)
    }
}

impl TrackSpecDoc {
    pub fn to_spec(&self, seed: u64) -> Result<SynthSpec> {
        self.marginal.validate()?;
        Ok(SynthSpec {
            geometry: self.geometry.geometry()?,
            marginal: self.marginal,
            a: self.a,
            b: self.b,
            seed,
        })
    }
}

impl ScanSpecDoc {
    pub fn to_spec(&self, seed: u64) -> Result<MultipathSpec> {
        let visibility = self
            .visibility
            .iter()
            .map(|(key, taps)| {
                key.trim()
                    .parse::<i64>()
                    .map(|deg| (Azimuth::new(deg), taps.clone()))
                    .map_err(|_| Error::InvalidAzimuthSet(format!("visibility key {key:?} is not a whole degree")))
            })
            .collect::<Result<_>>()?;
        let spec = MultipathSpec {
            environment: self.environment,
            delay_bin_ns: self.delay_bin_ns,
            num_bins: self.num_bins,
            taps: self.taps.clone(),
            visibility,
            noise_floor_dbm: self.noise_floor_dbm,
            correlation: self.correlation.map(|c| (c.a, c.b)),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    fs::write(path, contents).map_err(io_err)
}

pub fn parse_document(text: &str, path: &str) -> Result<Document> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let version = match &doc {
        Document::Scan(d) => &d.version,
        Document::Track(d) => &d.version,
        Document::TrackSpec(d) => &d.version,
        Document::ScanSpec(d) => &d.version,
    };
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.to_string(),
            message: format!("unsupported version {version:?}, expected {FORMAT_VERSION:?}"),
        });
    }
    Ok(doc)
}

pub fn load_document(path: &Path) -> Result<Document> {
    parse_document(&read_text(path)?, &path.display().to_string())
}

fn to_json(doc: &Document) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(doc).expect("documents contain only finite numbers");
    out.push(b'\n');
    out
}

pub fn scan_to_doc(scan: &TrackScan) -> ScanDoc {
    let geometry = scan.geometry();
    let header = ScanHeader {
        carrier_ghz: scan.carrier().carrier_ghz(),
        spacing_wavelengths: geometry.spacing_wavelengths(),
        num_positions: geometry.num_positions(),
        environment: scan.environment(),
        orientation: geometry.orientation(),
        noise_floor_dbm: scan.noise_floor_dbm(),
    };
    let records = scan
        .records()
        .map(|(position, azimuth, pdp)| ScanRecord {
            position_index: position,
            azimuth_deg: azimuth.degrees() as i64,
            delay_step_ns: pdp.delay_bin_ns(),
            powers_dbm: pdp
                .powers_mw()
                .iter()
                .map(|&p| (p > 0.0).then(|| linear_to_db(p)))
                .collect(),
            noise_floor_dbm: pdp.noise_floor_dbm().filter(|&nf| Some(nf) != scan.noise_floor_dbm()),
        })
        .collect();
    ScanDoc {
        version: FORMAT_VERSION.to_string(),
        header,
        records,
    }
}

pub fn scan_from_doc(doc: &ScanDoc, path: &str) -> Result<TrackScan> {
    let h = &doc.header;
    let carrier = CarrierConfig::new(h.carrier_ghz)?;
    let geometry = TrackGeometry::new(h.num_positions, h.spacing_wavelengths, h.orientation)?;
    let mut records = Vec::with_capacity(doc.records.len());
    for (i, r) in doc.records.iter().enumerate() {
        if r.powers_dbm.is_empty() {
            return Err(Error::Format {
                path: path.to_string(),
                message: format!("record {i}: powers_dbm is empty"),
            });
        }
        if let Some(bad) = r.powers_dbm.iter().flatten().find(|p| !p.is_finite()) {
            return Err(Error::Format {
                path: path.to_string(),
                message: format!("record {i}: non-finite power {bad}"),
            });
        }
        let powers = r.powers_dbm.iter().map(|p| p.map_or(0.0, db_to_linear)).collect();
        let pdp = Pdp::new(r.delay_step_ns, powers, r.noise_floor_dbm.or(h.noise_floor_dbm)).map_err(|e| Error::Format {
            path: path.to_string(),
            message: format!("record {i}: {e}"),
        })?;
        records.push((r.position_index, Azimuth::new(r.azimuth_deg), pdp));
    }
    TrackScan::new(carrier, geometry, h.environment, h.noise_floor_dbm, records)
}

pub fn save_scan(path: &Path, scan: &TrackScan) -> Result<()> {
    write_text(path, &to_json(&Document::Scan(scan_to_doc(scan))))
}

pub fn load_scan(path: &Path) -> Result<TrackScan> {
    let name = path.display().to_string();
    match load_document(path)? {
        Document::Scan(doc) => scan_from_doc(&doc, &name),
        _ => Err(Error::Format {
            path: name,
            message: "expected a scan document".into(),
        }),
    }
}

pub fn track_to_doc(track: &AmplitudeTrack) -> TrackDoc {
    TrackDoc {
        version: FORMAT_VERSION.to_string(),
        spacing_wavelengths: track.spacing_wavelengths(),
        label: track.label().to_string(),
        amplitudes: track.amplitudes().to_vec(),
    }
}

pub fn track_from_doc(doc: &TrackDoc) -> Result<AmplitudeTrack> {
    AmplitudeTrack::new(doc.amplitudes.clone(), doc.spacing_wavelengths, doc.label.clone())
}

pub fn save_track(path: &Path, track: &AmplitudeTrack) -> Result<()> {
    write_text(path, &to_json(&Document::Track(track_to_doc(track))))
}

pub fn scan_bytes(scan: &TrackScan) -> Vec<u8> {
    to_json(&Document::Scan(scan_to_doc(scan)))
}

pub fn track_bytes(track: &AmplitudeTrack) -> Vec<u8> {
    to_json(&Document::Track(track_to_doc(track)))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub const FADING_COLUMNS: [&str; 14] = [
    "r_db",
    "ecdf",
    "cdf_ricean",
    "cdf_lognormal_db",
    "cdf_rayleigh",
    "ricean_k_db",
    "lognormal_sigma_db",
    "mse_ricean",
    "mse_lognormal_db",
    "mse_rayleigh",
    "ks_ricean",
    "ks_lognormal_db",
    "ks_rayleigh",
    "best_family",
];

/// Fading report: one row per distinct level with the eCDF and every fitted
/// model CDF; fitted parameters and fit measures repeat on each row.
/// `fits` must be ranked best first, as returned by `select_best_family`.
pub fn write_fading_report<W: Write>(out: W, samples_db: &[f64], fits: &[FadingFit]) -> Result<()> {
    let ecdf = Ecdf::new(samples_db)?;
    let by_kind = |kind: FamilyKind| fits.iter().find(|f| f.family.kind() == kind);
    let models: Vec<Option<FadingModel>> = FamilyKind::ALL
        .iter()
        .map(|&k| by_kind(k).map(|f| FadingModel::new(f.family)).transpose())
        .collect::<Result<_>>()?;
    let k_db = by_kind(FamilyKind::Ricean).and_then(|f| match f.family {
        FadingFamily::Ricean { k_db } => Some(k_db),
        _ => None,
    });
    let sigma_db = by_kind(FamilyKind::LogNormalDb).and_then(|f| match f.family {
        FadingFamily::LogNormalDb { sigma_db } => Some(sigma_db),
        _ => None,
    });
    let best = fits.first().map(|f| f.family.kind().name()).unwrap_or_default();

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(FADING_COLUMNS)?;
    for (r, p) in ecdf.steps() {
        let mut row = vec![num(r), num(p)];
        row.extend(models.iter().map(|m| opt_num(m.as_ref().map(|m| m.cdf(r)))));
        row.push(opt_num(k_db));
        row.push(opt_num(sigma_db));
        row.extend(FamilyKind::ALL.iter().map(|&k| opt_num(by_kind(k).map(|f| f.fit_error))));
        row.extend(FamilyKind::ALL.iter().map(|&k| opt_num(by_kind(k).map(|f| f.ks_stat))));
        row.push(best.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<report>".into(),
        source,
    })?;
    Ok(())
}

pub const AUTOCORR_COLUMNS: [&str; 10] = [
    "lag_wavelengths",
    "lag_cm",
    "rho_empirical",
    "rho_model",
    "a",
    "b",
    "T",
    "d",
    "d_empirical",
    "extrapolated",
];

/// Autocorrelation report: empirical and fitted coefficient per lag, with the
/// fitted parameters repeated on each row. `T` and `d_empirical` are empty
/// when undefined.
pub fn write_autocorr_report<W: Write>(
    out: W,
    series: &AutocorrSeries,
    params: &DampedCosParams,
    d_empirical: Option<f64>,
    carrier: &CarrierConfig,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(AUTOCORR_COLUMNS)?;
    for (&lag, &rho) in series.lags().iter().zip(series.rho()) {
        w.write_record([
            num(lag),
            num(carrier.wavelengths_to_cm(lag)),
            num(rho),
            num(damped_cos(params.a, params.b, lag)),
            num(params.a),
            num(params.b),
            opt_num(params.period),
            num(params.decorrelation),
            opt_num(d_empirical),
            params.extrapolated.to_string(),
        ])?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<report>".into(),
        source,
    })?;
    Ok(())
}

/// Per-position power and amplitude table: omni first, then one power and
/// amplitude column pair per azimuth. Missing records leave empty cells.
pub fn write_process_table<W: Write>(out: W, scan: &TrackScan, config: &PipelineConfig) -> Result<()> {
    let azimuths = scan.azimuths();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec![
        "position".to_string(),
        "x_wavelengths".to_string(),
        "x_cm".to_string(),
        "omni_power_mw".to_string(),
        "omni_amplitude".to_string(),
    ];
    for az in &azimuths {
        header.push(format!("az{}_power_mw", az.degrees()));
        header.push(format!("az{}_amplitude", az.degrees()));
    }
    w.write_record(&header)?;
    let geometry = scan.geometry();
    for position in 0..geometry.num_positions() {
        let x = position as f64 * geometry.spacing_wavelengths();
        let mut row = vec![position.to_string(), num(x), num(scan.carrier().wavelengths_to_cm(x))];
        let omni = match position_power(scan, position, TrackMode::Omni, config) {
            Ok(p) => Some(p),
            Err(Error::NoRecordsAtPosition(_)) => None,
            Err(e) => return Err(e),
        };
        row.push(opt_num(omni));
        row.push(opt_num(omni.map(voltage_amplitude).transpose()?));
        for &az in &azimuths {
            let p = match scan.get(position, az) {
                Some(_) => Some(position_power(scan, position, TrackMode::Directional(az), config)?),
                None => None,
            };
            row.push(opt_num(p));
            row.push(opt_num(p.map(voltage_amplitude).transpose()?));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<table>".into(),
        source,
    })?;
    Ok(())
}
