//! PDP cleaning, power integration and omnidirectional synthesis.

use crate::error::{Error, Result};
use crate::model::{db_to_linear, linear_to_db, AmplitudeTrack, Azimuth, Pdp, TrackScan};

/// Double threshold applied to each PDP: a bin is kept only when it is within
/// `peak_down_db` of the strongest bin and at least `noise_up_db` above the
/// noise floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    peak_down_db: f64,
    noise_up_db: f64,
}

impl ThresholdPolicy {
    pub fn new(peak_down_db: f64, noise_up_db: f64) -> Result<Self> {
        if !(peak_down_db.is_finite() && peak_down_db > 0.0) {
            return Err(Error::InvalidParameter {
                name: "peak-down threshold (dB)",
                value: peak_down_db,
            });
        }
        if !(noise_up_db.is_finite() && noise_up_db >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "noise-up threshold (dB)",
                value: noise_up_db,
            });
        }
        Ok(Self {
            peak_down_db,
            noise_up_db,
        })
    }

    pub fn peak_down_db(&self) -> f64 {
        self.peak_down_db
    }

    pub fn noise_up_db(&self) -> f64 {
        self.noise_up_db
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            peak_down_db: 20.0,
            noise_up_db: 5.0,
        }
    }
}

/// Settings for turning raw directional PDPs into received powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub threshold: ThresholdPolicy,
    /// Fraction of trailing delay bins used to estimate a missing noise floor.
    pub noise_tail_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdPolicy::default(),
            noise_tail_fraction: 0.1,
        }
    }
}

/// Which received power an amplitude track is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackMode {
    Omni,
    Directional(Azimuth),
}

/// Mean power (dBm) of the trailing `tail_fraction` of the delay bins.
pub fn estimate_noise_floor(pdp: &Pdp, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(Error::InvalidParameter {
            name: "noise tail fraction",
            value: tail_fraction,
        });
    }
    let n = (pdp.len() as f64 * tail_fraction).floor() as usize;
    if n == 0 {
        return Err(Error::TailWindowEmpty(tail_fraction));
    }
    let tail = &pdp.powers_mw()[pdp.len() - n..];
    Ok(linear_to_db(tail.iter().sum::<f64>() / n as f64))
}

/// Noise floor carried by the PDP, or estimated from its tail when absent.
pub fn resolve_noise_floor(pdp: &Pdp, tail_fraction: f64) -> Result<f64> {
    match pdp.noise_floor_dbm() {
        Some(nf) => Ok(nf),
        None => estimate_noise_floor(pdp, tail_fraction),
    }
}

/// Zeroes every bin below `max(peak - peak_down, noise_floor + noise_up)`.
///
/// The cutoff is capped at the peak so the strongest bin always survives.
/// Zeroed bins stay in place to keep delay alignment.
pub fn apply_double_threshold(pdp: &Pdp, policy: ThresholdPolicy) -> Result<Pdp> {
    let noise_floor = pdp.noise_floor_dbm().ok_or(Error::NoiseFloorUnknown)?;
    let (_, peak) = pdp.peak();
    if peak <= 0.0 {
        return Err(Error::AllZeroPdp);
    }
    let cutoff_dbm = (linear_to_db(peak) - policy.peak_down_db).max(noise_floor + policy.noise_up_db);
    let cutoff = db_to_linear(cutoff_dbm).min(peak);
    let powers = pdp
        .powers_mw()
        .iter()
        .map(|&p| if p >= cutoff { p } else { 0.0 })
        .collect();
    Pdp::new(pdp.delay_bin_ns(), powers, Some(noise_floor))
}

/// Linear sum of the bin powers (mW).
pub fn integrate_power(pdp: &Pdp) -> f64 {
    pdp.powers_mw().iter().sum()
}

pub fn voltage_amplitude(power_mw: f64) -> Result<f64> {
    if !(power_mw >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "received power (mW)",
            value: power_mw,
        });
    }
    Ok(power_mw.sqrt())
}

/// Thresholded, integrated power of one directional PDP.
pub fn directional_power(pdp: &Pdp, config: &PipelineConfig) -> Result<f64> {
    let noise_floor = resolve_noise_floor(pdp, config.noise_tail_fraction)?;
    let cleaned = apply_double_threshold(&pdp.clone().with_noise_floor(noise_floor), config.threshold)?;
    Ok(integrate_power(&cleaned))
}

/// Omnidirectional power at one position: the sum of the directional powers
/// over the azimuths recorded there. Missing azimuths contribute nothing.
pub fn synthesize_omni(scan: &TrackScan, position: usize, config: &PipelineConfig) -> Result<f64> {
    let mut any = false;
    let mut total = 0.0;
    for (_, pdp) in scan.records_at(position) {
        any = true;
        total += directional_power(pdp, config)?;
    }
    if !any {
        return Err(Error::NoRecordsAtPosition(position));
    }
    Ok(total)
}

/// Received power at one position for the given mode.
pub fn position_power(scan: &TrackScan, position: usize, mode: TrackMode, config: &PipelineConfig) -> Result<f64> {
    match mode {
        TrackMode::Omni => synthesize_omni(scan, position, config),
        TrackMode::Directional(az) => match scan.get(position, az) {
            Some(pdp) => directional_power(pdp, config),
            None => Err(Error::MissingRecord { position, azimuth: az }),
        },
    }
}

pub fn scan_to_amplitude_track(scan: &TrackScan, mode: TrackMode, config: &PipelineConfig) -> Result<AmplitudeTrack> {
    if let TrackMode::Directional(az) = mode {
        if !scan.azimuths().contains(&az) {
            return Err(Error::NoSignal(az));
        }
    }
    let n = scan.geometry().num_positions();
    let mut amplitudes = Vec::with_capacity(n);
    for position in 0..n {
        let power = position_power(scan, position, mode, config)?;
        if power <= 0.0 {
            return Err(match mode {
                TrackMode::Directional(az) => Error::NoSignal(az),
                TrackMode::Omni => Error::ZeroPower(position),
            });
        }
        amplitudes.push(voltage_amplitude(power)?);
    }
    let label = match mode {
        TrackMode::Omni => format!("{} omni", scan.environment()),
        TrackMode::Directional(az) => format!("{} az {}", scan.environment(), az.degrees()),
    };
    AmplitudeTrack::new(amplitudes, scan.geometry().spacing_wavelengths(), label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CarrierConfig, Environment, Orientation, TrackGeometry};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dbm_pdp(dbm: &[f64], noise: f64) -> Pdp {
        Pdp::new(2.0, dbm.iter().map(|&d| db_to_linear(d)).collect(), Some(noise)).unwrap()
    }

    #[test]
    fn noise_floor_examples() {
        let flat = Pdp::new(2.0, vec![1e-9; 20], None).unwrap();
        assert_abs_diff_eq!(estimate_noise_floor(&flat, 0.25).unwrap(), -90.0, epsilon = 1e-9);

        let tail = Pdp::new(2.0, vec![1.0, 1.0, 1e-9, 1e-9], None).unwrap();
        assert_abs_diff_eq!(estimate_noise_floor(&tail, 0.5).unwrap(), -90.0, epsilon = 1e-9);

        let mixed = Pdp::new(2.0, vec![1.0, 1.0, 1e-9, 1e-7], None).unwrap();
        assert_abs_diff_eq!(estimate_noise_floor(&mixed, 0.5).unwrap(), -72.97, epsilon = 0.01);

        assert!(matches!(estimate_noise_floor(&flat, 0.01), Err(Error::TailWindowEmpty(_))));
        assert!(estimate_noise_floor(&flat, 0.6).is_err());
    }

    #[test]
    fn measured_floor_bypasses_estimate() {
        let pdp = Pdp::new(2.0, vec![1.0, 1e-9, 1e-9, 1e-9], Some(-50.0)).unwrap();
        assert_eq!(resolve_noise_floor(&pdp, 0.5).unwrap(), -50.0);
    }

    #[test]
    fn double_threshold_peak_limited() {
        let pdp = dbm_pdp(&[0.0, -19.0, -21.0], -30.0);
        let out = apply_double_threshold(&pdp, ThresholdPolicy::default()).unwrap();
        assert_eq!(out.powers_mw()[0], 1.0);
        assert!(out.powers_mw()[1] > 0.0);
        assert_eq!(out.powers_mw()[2], 0.0);
    }

    #[test]
    fn double_threshold_noise_limited() {
        let pdp = dbm_pdp(&[0.0, -4.9, -5.1, -19.0], -10.0);
        let out = apply_double_threshold(&pdp, ThresholdPolicy::default()).unwrap();
        let kept: Vec<bool> = out.powers_mw().iter().map(|&p| p > 0.0).collect();
        assert_eq!(kept, vec![true, true, false, false]);
    }

    #[test]
    fn double_threshold_edge_cases() {
        let single = dbm_pdp(&[-40.0], -100.0);
        assert_eq!(apply_double_threshold(&single, ThresholdPolicy::default()).unwrap().powers_mw(), single.powers_mw());

        let zero = Pdp::new(2.0, vec![0.0; 3], Some(-90.0)).unwrap();
        assert!(matches!(apply_double_threshold(&zero, ThresholdPolicy::default()), Err(Error::AllZeroPdp)));

        let unknown = Pdp::new(2.0, vec![1.0], None).unwrap();
        assert!(matches!(apply_double_threshold(&unknown, ThresholdPolicy::default()), Err(Error::NoiseFloorUnknown)));

        // noise floor above the peak still leaves the peak bin
        let buried = dbm_pdp(&[-60.0, -70.0], -58.0);
        let out = apply_double_threshold(&buried, ThresholdPolicy::default()).unwrap();
        assert_eq!(out.powers_mw()[0], db_to_linear(-60.0));
        assert_eq!(out.powers_mw()[1], 0.0);
    }

    #[test]
    fn integration_and_amplitude() {
        assert_eq!(integrate_power(&Pdp::new(2.0, vec![1.0, 2.0, 3.0], None).unwrap()), 6.0);
        assert_eq!(integrate_power(&Pdp::new(2.0, vec![0.0; 4], None).unwrap()), 0.0);
        assert_eq!(voltage_amplitude(4.0).unwrap(), 2.0);
        assert_eq!(voltage_amplitude(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(voltage_amplitude(6.0).unwrap(), 2.4495, epsilon = 1e-4);
        assert!(voltage_amplitude(-1.0).is_err());
    }

    fn scan_with(records: Vec<(usize, i64, f64)>, positions: usize) -> TrackScan {
        let geom = TrackGeometry::new(positions, 0.5, Orientation::OrthogonalToTr).unwrap();
        TrackScan::new(
            CarrierConfig::default(),
            geom,
            Environment::Nlos,
            Some(-100.0),
            records
                .into_iter()
                .map(|(p, az, mw)| (p, Azimuth::new(az), Pdp::new(2.0, vec![mw], Some(-100.0)).unwrap())),
        )
        .unwrap()
    }

    #[test]
    fn omni_sums_available_angles() {
        let cfg = PipelineConfig::default();
        let six = scan_with((0..6).map(|k| (0, 30 + 60 * k, 2.5)).collect(), 2);
        assert_abs_diff_eq!(synthesize_omni(&six, 0, &cfg).unwrap(), 15.0, epsilon = 1e-12);

        let five = scan_with(
            [30, 90, 150, 210, 330].iter().zip(1..=5).map(|(&az, p)| (0, az, p as f64)).collect(),
            2,
        );
        assert_abs_diff_eq!(synthesize_omni(&five, 0, &cfg).unwrap(), 15.0, epsilon = 1e-12);

        let one = scan_with(vec![(0, 30, 3.0)], 2);
        assert_abs_diff_eq!(synthesize_omni(&one, 0, &cfg).unwrap(), 3.0);
        assert!(matches!(synthesize_omni(&one, 1, &cfg), Err(Error::NoRecordsAtPosition(1))));
    }

    #[test]
    fn track_extraction() {
        let cfg = PipelineConfig::default();
        let dir = scan_with((0..4).map(|p| (p, 30, 4.0)).collect(), 4);
        let track = scan_to_amplitude_track(&dir, TrackMode::Directional(Azimuth::new(30)), &cfg).unwrap();
        assert!(track.amplitudes().iter().all(|&a| a == 2.0));
        assert_eq!(track.spacing_wavelengths(), 0.5);

        let omni = scan_with((0..3).flat_map(|p| (0..6).map(move |k| (p, 30 + 60 * k, 1.0))).collect(), 3);
        let track = scan_to_amplitude_track(&omni, TrackMode::Omni, &cfg).unwrap();
        assert!(track.amplitudes().iter().all(|&a| (a - 6f64.sqrt()).abs() < 1e-12));

        let nlos = scan_with(
            (0..3).flat_map(|p| [30, 90, 150, 210, 330].into_iter().map(move |az| (p, az, 1.0))).collect(),
            3,
        );
        let err = scan_to_amplitude_track(&nlos, TrackMode::Directional(Azimuth::new(270)), &cfg).unwrap_err();
        assert!(matches!(err, Error::NoSignal(az) if az.degrees() == 270));
        assert!(err.to_string().contains("no signal"));

        let gap = scan_with(vec![(0, 30, 1.0), (2, 30, 1.0)], 3);
        assert!(matches!(
            scan_to_amplitude_track(&gap, TrackMode::Directional(Azimuth::new(30)), &cfg),
            Err(Error::MissingRecord { position: 1, .. })
        ));
        assert!(matches!(
            scan_to_amplitude_track(&gap, TrackMode::Omni, &cfg),
            Err(Error::NoRecordsAtPosition(1))
        ));
    }

    fn random_pdp() -> impl Strategy<Value = Pdp> {
        (prop::collection::vec(-110.0f64..0.0, 1..64), -110.0f64..-40.0)
            .prop_map(|(dbm, noise)| dbm_pdp(&dbm, noise))
    }

    proptest! {
        #[test]
        fn threshold_idempotent(pdp in random_pdp()) {
            let policy = ThresholdPolicy::default();
            let once = apply_double_threshold(&pdp, policy).unwrap();
            let twice = apply_double_threshold(&once, policy).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn threshold_keeps_exactly_bins_above_cutoff(pdp in random_pdp()) {
            let policy = ThresholdPolicy::default();
            let out = apply_double_threshold(&pdp, policy).unwrap();
            let (peak_idx, peak) = pdp.peak();
            let peak_cut = db_to_linear(linear_to_db(peak) - 20.0);
            let noise_cut = db_to_linear(pdp.noise_floor_dbm().unwrap() + 5.0);
            prop_assert!(out.powers_mw()[peak_idx] == peak);
            for (i, (&before, &after)) in pdp.powers_mw().iter().zip(out.powers_mw()).enumerate() {
                if after > 0.0 {
                    prop_assert_eq!(after, before);
                    prop_assert!(i == peak_idx || (before >= peak_cut * (1.0 - 1e-12) && before >= noise_cut * (1.0 - 1e-12)));
                } else {
                    prop_assert!(before < peak_cut.max(noise_cut) * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn tightening_never_increases_power(pdp in random_pdp(), down in 1.0f64..30.0, extra in 0.0f64..20.0, up in 0.0f64..10.0, up_extra in 0.0f64..10.0) {
            let loose = ThresholdPolicy::new(down + extra, up).unwrap();
            let tight = ThresholdPolicy::new(down, up).unwrap();
            let tighter_noise = ThresholdPolicy::new(down, up + up_extra).unwrap();
            let p_loose = integrate_power(&apply_double_threshold(&pdp, loose).unwrap());
            let p_tight = integrate_power(&apply_double_threshold(&pdp, tight).unwrap());
            let p_noise = integrate_power(&apply_double_threshold(&pdp, tighter_noise).unwrap());
            prop_assert!(p_tight <= p_loose);
            prop_assert!(p_noise <= p_tight);
        }
    }
}
