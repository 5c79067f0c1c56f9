//! Domain types shared across the pipeline.
//!
//! Distances are carried in wavelengths; [`CarrierConfig`] converts them to
//! centimetres for presentation. Powers are linear milliwatts internally and
//! voltage amplitudes are in √mW.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light expressed in cm·GHz, so that λ[cm] = C / f[GHz].
pub const SPEED_OF_LIGHT_CM_GHZ: f64 = 29.979_245_8;

/// Carrier frequency used by the measurement campaign.
pub const DEFAULT_CARRIER_GHZ: f64 = 73.5;

/// Delay bin width matching a 500 Mcps chip rate.
pub const DEFAULT_DELAY_BIN_NS: f64 = 2.0;

pub const DEFAULT_NUM_POSITIONS: usize = 175;
pub const DEFAULT_SPACING_WAVELENGTHS: f64 = 0.5;

/// Azimuth pointing angles on one track are at most six values 60° apart.
pub const MAX_AZIMUTHS: usize = 6;
pub const AZIMUTH_STEP_DEG: u16 = 60;

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierConfig {
    carrier_ghz: f64,
}

impl CarrierConfig {
    pub fn new(carrier_ghz: f64) -> Result<Self> {
        if !(carrier_ghz.is_finite() && carrier_ghz > 0.0) {
            return Err(Error::InvalidParameter {
                name: "carrier frequency (GHz)",
                value: carrier_ghz,
            });
        }
        Ok(Self { carrier_ghz })
    }

    pub fn from_wavelength_cm(wavelength_cm: f64) -> Result<Self> {
        if !(wavelength_cm.is_finite() && wavelength_cm > 0.0) {
            return Err(Error::InvalidParameter {
                name: "wavelength (cm)",
                value: wavelength_cm,
            });
        }
        Self::new(SPEED_OF_LIGHT_CM_GHZ / wavelength_cm)
    }

    pub fn carrier_ghz(&self) -> f64 {
        self.carrier_ghz
    }

    pub fn wavelength_cm(&self) -> f64 {
        SPEED_OF_LIGHT_CM_GHZ / self.carrier_ghz
    }

    pub fn wavelengths_to_cm(&self, wavelengths: f64) -> f64 {
        wavelengths * self.wavelength_cm()
    }
}

impl Default for CarrierConfig {
    fn default() -> Self {
        Self {
            carrier_ghz: DEFAULT_CARRIER_GHZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Track runs orthogonal to the direct TX-RX line.
    OrthogonalToTr,
    /// Track runs parallel to the direct TX-RX line.
    ParallelToTr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Los,
    Nlos,
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Environment::Los => f.write_str("LOS"),
            Environment::Nlos => f.write_str("NLOS"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackGeometry {
    num_positions: usize,
    spacing_wavelengths: f64,
    orientation: Orientation,
}

impl TrackGeometry {
    pub fn new(num_positions: usize, spacing_wavelengths: f64, orientation: Orientation) -> Result<Self> {
        if num_positions < 2 {
            return Err(Error::InvalidParameter {
                name: "number of track positions",
                value: num_positions as f64,
            });
        }
        if !(spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0) {
            return Err(Error::InvalidParameter {
                name: "track spacing (wavelengths)",
                value: spacing_wavelengths,
            });
        }
        Ok(Self {
            num_positions,
            spacing_wavelengths,
            orientation,
        })
    }

    pub fn num_positions(&self) -> usize {
        self.num_positions
    }

    pub fn spacing_wavelengths(&self) -> f64 {
        self.spacing_wavelengths
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Distance between the first and the last position.
    pub fn span_wavelengths(&self) -> f64 {
        (self.num_positions - 1) as f64 * self.spacing_wavelengths
    }
}

impl Default for TrackGeometry {
    fn default() -> Self {
        Self {
            num_positions: DEFAULT_NUM_POSITIONS,
            spacing_wavelengths: DEFAULT_SPACING_WAVELENGTHS,
            orientation: Orientation::OrthogonalToTr,
        }
    }
}

/// Receiver azimuth pointing angle in whole degrees, normalized to [0, 360).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Azimuth(u16);

impl Azimuth {
    pub fn new(degrees: i64) -> Self {
        Azimuth(degrees.rem_euclid(360) as u16)
    }

    pub fn degrees(self) -> u16 {
        self.0
    }
}

impl fmt::Display for Azimuth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} deg", self.0)
    }
}

/// One power delay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdp {
    delay_bin_ns: f64,
    powers_mw: Vec<f64>,
    noise_floor_dbm: Option<f64>,
}

impl Pdp {
    pub fn new(delay_bin_ns: f64, powers_mw: Vec<f64>, noise_floor_dbm: Option<f64>) -> Result<Self> {
        if !(delay_bin_ns.is_finite() && delay_bin_ns > 0.0) {
            return Err(Error::InvalidParameter {
                name: "delay bin width (ns)",
                value: delay_bin_ns,
            });
        }
        if powers_mw.is_empty() {
            return Err(Error::EmptyInput("pdp powers"));
        }
        if let Some((index, &value)) = powers_mw
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::InvalidPower { index, value });
        }
        if let Some(nf) = noise_floor_dbm {
            if !nf.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "noise floor (dBm)",
                    value: nf,
                });
            }
        }
        Ok(Self {
            delay_bin_ns,
            powers_mw,
            noise_floor_dbm,
        })
    }

    pub fn delay_bin_ns(&self) -> f64 {
        self.delay_bin_ns
    }

    pub fn powers_mw(&self) -> &[f64] {
        &self.powers_mw
    }

    pub fn noise_floor_dbm(&self) -> Option<f64> {
        self.noise_floor_dbm
    }

    pub fn len(&self) -> usize {
        self.powers_mw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers_mw.is_empty()
    }

    pub fn with_noise_floor(mut self, noise_floor_dbm: f64) -> Self {
        self.noise_floor_dbm = Some(noise_floor_dbm);
        self
    }

    /// Index and power of the strongest bin (first one on ties).
    pub fn peak(&self) -> (usize, f64) {
        self.powers_mw
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best })
    }
}

/// All PDPs recorded along one track, keyed by position and azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackScan {
    carrier: CarrierConfig,
    geometry: TrackGeometry,
    environment: Environment,
    noise_floor_dbm: Option<f64>,
    records: BTreeMap<(usize, Azimuth), Pdp>,
}

impl TrackScan {
    pub fn new(
        carrier: CarrierConfig,
        geometry: TrackGeometry,
        environment: Environment,
        noise_floor_dbm: Option<f64>,
        records: impl IntoIterator<Item = (usize, Azimuth, Pdp)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (position, azimuth, pdp) in records {
            if position >= geometry.num_positions() {
                return Err(Error::PositionOutOfRange {
                    position,
                    num_positions: geometry.num_positions(),
                });
            }
            if map.insert((position, azimuth), pdp).is_some() {
                return Err(Error::DuplicateRecord { position, azimuth });
            }
        }
        let azimuths: BTreeSet<Azimuth> = map.keys().map(|&(_, az)| az).collect();
        validate_azimuths(&azimuths)?;
        Ok(Self {
            carrier,
            geometry,
            environment,
            noise_floor_dbm,
            records: map,
        })
    }

    pub fn carrier(&self) -> CarrierConfig {
        self.carrier
    }

    pub fn geometry(&self) -> TrackGeometry {
        self.geometry
    }

    pub fn environment(&self) -> Environment {
        self.environment
    }

    pub fn noise_floor_dbm(&self) -> Option<f64> {
        self.noise_floor_dbm
    }

    pub fn get(&self, position: usize, azimuth: Azimuth) -> Option<&Pdp> {
        self.records.get(&(position, azimuth))
    }

    pub fn records(&self) -> impl Iterator<Item = (usize, Azimuth, &Pdp)> {
        self.records.iter().map(|(&(p, az), pdp)| (p, az, pdp))
    }

    pub fn records_at(&self, position: usize) -> impl Iterator<Item = (Azimuth, &Pdp)> {
        self.records
            .range((position, Azimuth(0))..=(position, Azimuth(u16::MAX)))
            .map(|(&(_, az), pdp)| (az, pdp))
    }

    /// Distinct azimuths present anywhere on the track, ascending.
    pub fn azimuths(&self) -> Vec<Azimuth> {
        let set: BTreeSet<Azimuth> = self.records.keys().map(|&(_, az)| az).collect();
        set.into_iter().collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn validate_azimuths(azimuths: &BTreeSet<Azimuth>) -> Result<()> {
    if azimuths.len() > MAX_AZIMUTHS {
        return Err(Error::InvalidAzimuthSet(format!(
            "{} distinct angles, at most {MAX_AZIMUTHS} allowed",
            azimuths.len()
        )));
    }
    if let Some(first) = azimuths.iter().next() {
        for az in azimuths {
            if (az.0 + 360 - first.0) % AZIMUTH_STEP_DEG != 0 {
                return Err(Error::InvalidAzimuthSet(format!(
                    "{az} is not a multiple of {AZIMUTH_STEP_DEG} deg away from {first}"
                )));
            }
        }
    }
    Ok(())
}

/// Received voltage amplitudes along the track positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrack {
    amplitudes: Vec<f64>,
    spacing_wavelengths: f64,
    label: String,
}

impl AmplitudeTrack {
    pub fn new(amplitudes: Vec<f64>, spacing_wavelengths: f64, label: impl Into<String>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::EmptyInput("amplitude track"));
        }
        if let Some((index, &value)) = amplitudes
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a > 0.0))
        {
            return Err(Error::NonPositiveAmplitude { index, value });
        }
        if !(spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0) {
            return Err(Error::InvalidParameter {
                name: "track spacing (wavelengths)",
                value: spacing_wavelengths,
            });
        }
        Ok(Self {
            amplitudes,
            spacing_wavelengths,
            label: label.into(),
        })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn spacing_wavelengths(&self) -> f64 {
        self.spacing_wavelengths
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

/// Signal level of each position relative to the linear mean amplitude, in dB:
/// `20·log10(A_i / mean(A))`.
pub fn amplitude_rel_db(track: &AmplitudeTrack) -> Vec<f64> {
    rel_db(track.amplitudes())
}

pub(crate) fn rel_db(amplitudes: &[f64]) -> Vec<f64> {
    let mean = amplitudes.iter().sum::<f64>() / amplitudes.len() as f64;
    amplitudes.iter().map(|a| 20.0 * (a / mean).log10()).collect()
}
