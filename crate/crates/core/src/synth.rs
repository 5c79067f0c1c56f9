//! Synthetic data: spatially correlated amplitude tracks and multipath track
//! scans.
//!
//! Tracks use a Gaussian copula. A stationary Gaussian process with the
//! damped-cosine kernel is drawn along the track, and each variate is mapped
//! through `Φ` and the inverse CDF of the requested marginal. The map is
//! monotone, so spatial ranks are kept exactly while the correlation of the
//! amplitudes is distorted only to second order for shallow fading.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{FadingFamily, FadingModel};
use crate::model::{db_to_linear, AmplitudeTrack, Azimuth, CarrierConfig, Environment, Pdp, TrackGeometry, TrackScan};
use crate::spatial::damped_cos;

/// Largest diagonal jitter tried before a matrix is declared invalid.
pub const MAX_JITTER: f64 = 1e-6;
const FIRST_JITTER: f64 = 1e-12;

/// Splits a base seed into a per-task seed: SplitMix64 finalizer applied to
/// `seed ^ index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = (seed ^ index).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `M[i][j] = cos(a·|i-j|·s)·exp(-b·|i-j|·s)`.
pub fn correlation_matrix(n: usize, spacing: f64, a: f64, b: f64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "matrix size",
            value: 0.0,
        });
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::InvalidParameter {
            name: "decay rate b",
            value: b,
        });
    }
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "oscillation rate a",
            value: a,
        });
    }
    let row: Vec<f64> = (0..n).map(|k| damped_cos(a, b, k as f64 * spacing)).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)]))
}

/// Lower Cholesky factor of a correlation matrix and the jitter it took.
#[derive(Debug, Clone)]
pub struct GaussianField {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl GaussianField {
    /// Factorizes `matrix`, adding diagonal jitter from 0 up to
    /// [`MAX_JITTER`] (×10 per attempt) until the factorization succeeds.
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Degenerate("correlation matrix is not square"));
        }
        let mut jitter = 0.0;
        loop {
            let mut m = matrix.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(Self { lower: chol.unpack(), jitter });
            }
            jitter = if jitter == 0.0 { FIRST_JITTER } else { jitter * 10.0 };
            if jitter > MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::NotPositiveDefinite { max_jitter: MAX_JITTER });
            }
        }
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.lower.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.nrows() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let white = DVector::from_fn(self.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.lower * white).iter().copied().collect()
    }
}

/// Standard-normal variates with the given correlation, reproducible from `seed`.
pub fn sample_correlated_gaussian(matrix: &DMatrix<f64>, seed: u64) -> Result<Vec<f64>> {
    let field = GaussianField::new(matrix)?;
    Ok(field.sample(&mut rng_from_seed(seed)))
}

/// Target statistics of a synthetic amplitude track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub geometry: TrackGeometry,
    pub marginal: FadingFamily,
    /// Oscillation rate of the autocorrelation, rad/λ.
    pub a: f64,
    /// Decay rate of the autocorrelation, 1/λ.
    pub b: f64,
    pub seed: u64,
}

/// Reusable generator for many tracks sharing one spec (seed excluded).
#[derive(Debug, Clone)]
pub struct TrackSynthesizer {
    spec: SynthSpec,
    field: GaussianField,
    model: FadingModel,
}

impl TrackSynthesizer {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        let model = FadingModel::new(spec.marginal)?;
        let matrix = correlation_matrix(
            spec.geometry.num_positions(),
            spec.geometry.spacing_wavelengths(),
            spec.a,
            spec.b,
        )?;
        Ok(Self {
            spec: *spec,
            field: GaussianField::new(&matrix)?,
            model,
        })
    }

    pub fn model(&self) -> &FadingModel {
        &self.model
    }

    /// Correlated Gaussian track for `seed`, before the marginal transform.
    pub fn gaussian(&self, seed: u64) -> Vec<f64> {
        self.field.sample(&mut rng_from_seed(seed))
    }

    /// Amplitudes `10^(r/20)` where `r` is the copula-transformed level.
    pub fn transform(&self, gaussian: &[f64]) -> Vec<f64> {
        gaussian
            .iter()
            .map(|&z| 10f64.powf(self.model.quantile_from_gaussian(z) / 20.0))
            .collect()
    }

    pub fn generate(&self, seed: u64) -> Result<AmplitudeTrack> {
        let amps = self.transform(&self.gaussian(seed));
        AmplitudeTrack::new(
            amps,
            self.spec.geometry.spacing_wavelengths(),
            format!("synthetic {:?} a={} b={} seed={seed}", self.spec.marginal, self.spec.a, self.spec.b),
        )
    }
}

pub fn generate_track(spec: &SynthSpec) -> Result<AmplitudeTrack> {
    TrackSynthesizer::new(spec)?.generate(spec.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_ns: f64,
    pub mean_power_mw: f64,
    /// Per-position fluctuation of the tap power; `None` keeps it fixed.
    #[serde(default)]
    pub fading: Option<FadingFamily>,
}

/// Tapped multipath channel observed from each azimuth along a track.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathSpec {
    pub environment: Environment,
    pub delay_bin_ns: f64,
    pub num_bins: usize,
    pub taps: Vec<Tap>,
    /// Taps seen from each azimuth; azimuths absent here have no signal.
    pub visibility: BTreeMap<Azimuth, Vec<usize>>,
    pub noise_floor_dbm: f64,
    /// Damped-cosine (a, b) shared by every tap's fading along the track;
    /// `None` draws each position independently.
    pub correlation: Option<(f64, f64)>,
    pub seed: u64,
}

impl MultipathSpec {
    fn tap_bin(&self, tap: &Tap) -> usize {
        (tap.delay_ns / self.delay_bin_ns).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay_bin_ns.is_finite() && self.delay_bin_ns > 0.0) {
            return Err(Error::InvalidParameter {
                name: "delay bin width (ns)",
                value: self.delay_bin_ns,
            });
        }
        if self.taps.is_empty() {
            return Err(Error::EmptyInput("multipath taps"));
        }
        for (i, tap) in self.taps.iter().enumerate() {
            if !(tap.delay_ns.is_finite() && tap.delay_ns >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "tap delay (ns)",
                    value: tap.delay_ns,
                });
            }
            if i > 0 && tap.delay_ns <= self.taps[i - 1].delay_ns {
                return Err(Error::InvalidParameter {
                    name: "tap delay (must strictly increase)",
                    value: tap.delay_ns,
                });
            }
            if !(tap.mean_power_mw.is_finite() && tap.mean_power_mw > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "tap mean power (mW)",
                    value: tap.mean_power_mw,
                });
            }
            if let Some(f) = tap.fading {
                f.validate()?;
            }
            if self.tap_bin(tap) >= self.num_bins {
                return Err(Error::InvalidParameter {
                    name: "tap delay beyond last bin (ns)",
                    value: tap.delay_ns,
                });
            }
        }
        for (az, taps) in &self.visibility {
            if let Some(&bad) = taps.iter().find(|&&t| t >= self.taps.len()) {
                return Err(Error::InvalidAzimuthSet(format!("{az} references tap {bad}")));
            }
        }
        if !self.noise_floor_dbm.is_finite() {
            return Err(Error::InvalidParameter {
                name: "noise floor (dBm)",
                value: self.noise_floor_dbm,
            });
        }
        if let Some((a, b)) = self.correlation {
            if !(a.is_finite() && a >= 0.0 && b.is_finite() && b > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "tap correlation (a, b)",
                    value: if b > 0.0 { a } else { b },
                });
            }
        }
        Ok(())
    }
}

/// Unit-mean power gains of one tap along the track.
fn tap_gains(family: FadingFamily, geometry: TrackGeometry, correlation: Option<(f64, f64)>, seed: u64) -> Result<Vec<f64>> {
    let n = geometry.num_positions();
    let (model, gaussian) = match correlation {
        Some((a, b)) => {
            let synth = TrackSynthesizer::new(&SynthSpec {
                geometry,
                marginal: family,
                a,
                b,
                seed,
            })?;
            let z = synth.gaussian(seed);
            (synth.model, z)
        }
        None => {
            let mut rng = rng_from_seed(seed);
            let z = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (FadingModel::new(family)?, z)
        }
    };
    let norm = model.mean_square_rel_amplitude();
    Ok(gaussian
        .iter()
        .map(|&z| 10f64.powf(model.quantile_from_gaussian(z) / 10.0) / norm)
        .collect())
}

/// Emits one PDP per position for every visible azimuth: tap bins carry the
/// faded tap powers, all other bins exponentially distributed noise around
/// the noise floor.
pub fn generate_scan(spec: &MultipathSpec, geometry: TrackGeometry, carrier: CarrierConfig) -> Result<TrackScan> {
    spec.validate()?;
    let n = geometry.num_positions();
    let noise_mw = db_to_linear(spec.noise_floor_dbm);
    let stride = spec.taps.len() as u64 + 1;
    let mut records = Vec::with_capacity(n * spec.visibility.len());

    for (angle_index, (&azimuth, visible)) in spec.visibility.iter().enumerate() {
        let base = angle_index as u64 * stride;
        let mut tap_bins: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for &t in visible {
            let tap = &spec.taps[t];
            let gains = match tap.fading {
                Some(family) => tap_gains(family, geometry, spec.correlation, derive_seed(spec.seed, base + t as u64))?,
                None => vec![1.0; n],
            };
            let powers = tap_bins.entry(spec.tap_bin(tap)).or_insert_with(|| vec![0.0; n]);
            for (p, g) in powers.iter_mut().zip(gains) {
                *p += tap.mean_power_mw * g;
            }
        }
        let mut noise_rng = rng_from_seed(derive_seed(spec.seed, base + spec.taps.len() as u64));
        for position in 0..n {
            let powers: Vec<f64> = (0..spec.num_bins)
                .map(|bin| {
                    let noise = noise_mw * noise_rng.sample::<f64, _>(Exp1);
                    match tap_bins.get(&bin) {
                        Some(tap) => tap[position],
                        None => noise,
                    }
                })
                .collect();
            let pdp = Pdp::new(spec.delay_bin_ns, powers, Some(spec.noise_floor_dbm))?;
            records.push((position, azimuth, pdp));
        }
    }
    TrackScan::new(carrier, geometry, spec.environment, Some(spec.noise_floor_dbm), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::{estimate_k_dominant, Ecdf};
    use crate::model::Orientation;
    use crate::pdp::{apply_double_threshold, scan_to_amplitude_track, PipelineConfig, ThresholdPolicy, TrackMode};
    use crate::spatial::{autocorrelation, AutocorrOptions};
    use approx::assert_abs_diff_eq;

    #[test]
    fn matrix_examples() {
        let one = correlation_matrix(1, 0.5, 0.3, 0.2).unwrap();
        assert_eq!(one, DMatrix::from_element(1, 1, 1.0));

        let two = correlation_matrix(2, 0.5, 0.0, 0.26).unwrap();
        assert_abs_diff_eq!(two[(0, 1)], 0.8781, epsilon = 1e-4);
        assert_eq!(two[(0, 1)], two[(1, 0)]);
        assert_eq!(two[(1, 1)], 1.0);
        assert!(correlation_matrix(3, 0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn measured_kernels_factorize_with_small_jitter() {
        for &(a, b) in &[(0.45, 0.10), (0.0, 0.26), (0.0, 0.005), (0.5, 0.005), (0.5, 0.195), (0.0, 1.49), (0.25, 0.04)] {
            let m = correlation_matrix(175, 0.5, a, b).unwrap();
            let f = GaussianField::new(&m).unwrap();
            assert!(f.jitter() <= 1e-8, "a={a} b={b} jitter={}", f.jitter());
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GaussianField::new(&m), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn correlated_pair_statistics() {
        let m = correlation_matrix(2, 0.5, 0.0, 0.26).unwrap();
        let field = GaussianField::new(&m).unwrap();
        let mut rng = rng_from_seed(9);
        let n = 100_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let v = field.sample(&mut rng);
            sxy += v[0] * v[1];
            sxx += v[0] * v[0];
            syy += v[1] * v[1];
        }
        assert_abs_diff_eq!(sxy / (sxx * syy).sqrt(), 0.878, epsilon = 0.01);
    }

    #[test]
    fn identity_gives_white_noise() {
        let m = DMatrix::<f64>::identity(100, 100);
        let field = GaussianField::new(&m).unwrap();
        let mut rng = rng_from_seed(1);
        let (mut s01, mut s00) = (0.0, 0.0);
        for _ in 0..10_000 {
            let v = field.sample(&mut rng);
            s01 += v.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
            s00 += v.iter().map(|x| x * x).sum::<f64>();
        }
        assert_abs_diff_eq!(s01 / s00, 0.0, epsilon = 0.02);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let m = correlation_matrix(50, 0.5, 0.45, 0.1).unwrap();
        assert_eq!(sample_correlated_gaussian(&m, 7).unwrap(), sample_correlated_gaussian(&m, 7).unwrap());
        assert_ne!(sample_correlated_gaussian(&m, 7).unwrap(), sample_correlated_gaussian(&m, 8).unwrap());
    }

    #[test]
    fn derive_seed_spreads() {
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(0, 1) ^ 1);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }

    fn ranks(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        idx
    }

    #[test]
    fn copula_preserves_ranks() {
        for marginal in [
            FadingFamily::Ricean { k_db: 10.0 },
            FadingFamily::LogNormalDb { sigma_db: 0.65 },
            FadingFamily::Rayleigh,
        ] {
            let spec = SynthSpec {
                geometry: TrackGeometry::default(),
                marginal,
                a: 0.45,
                b: 0.1,
                seed: 3,
            };
            let synth = TrackSynthesizer::new(&spec).unwrap();
            let z = synth.gaussian(3);
            let amps = synth.transform(&z);
            assert_eq!(ranks(&z), ranks(&amps), "{marginal:?}");
            assert_eq!(generate_track(&spec).unwrap().amplitudes(), amps.as_slice());
        }
    }

    #[test]
    fn marginal_matches_requested_family() {
        for marginal in [
            FadingFamily::Ricean { k_db: 10.0 },
            FadingFamily::LogNormalDb { sigma_db: 0.65 },
            FadingFamily::Rayleigh,
        ] {
            let model = FadingModel::new(marginal).unwrap();
            let mut rng = rng_from_seed(21);
            let levels: Vec<f64> = (0..100_000)
                .map(|_| model.quantile_from_gaussian(rng.sample(StandardNormal)))
                .collect();
            let ks = Ecdf::new(&levels).unwrap().ks_distance(|r| model.cdf(r));
            assert!(ks <= 0.01, "{marginal:?} ks {ks}");
        }
    }

    #[test]
    fn fast_decay_gives_nearly_independent_samples() {
        let spec = SynthSpec {
            geometry: TrackGeometry::default(),
            marginal: FadingFamily::LogNormalDb { sigma_db: 0.65 },
            a: 0.0,
            b: 5.0,
            seed: 0,
        };
        let synth = TrackSynthesizer::new(&spec).unwrap();
        let mut lag1: Vec<f64> = (0..101)
            .map(|s| {
                let track = synth.generate(s).unwrap();
                autocorrelation(&track, &AutocorrOptions::default()).unwrap().rho()[1]
            })
            .collect();
        lag1.sort_by(f64::total_cmp);
        assert!(lag1[50] <= 0.15, "median lag-1 rho {}", lag1[50]);
    }

    fn six_angles(taps: Vec<usize>) -> BTreeMap<Azimuth, Vec<usize>> {
        (0..6).map(|k| (Azimuth::new(30 + 60 * k), taps.clone())).collect()
    }

    #[test]
    fn static_tap_gives_constant_omni_track() {
        let spec = MultipathSpec {
            environment: Environment::Los,
            delay_bin_ns: 2.0,
            num_bins: 64,
            taps: vec![Tap {
                delay_ns: 10.0,
                mean_power_mw: 1e-5,
                fading: None,
            }],
            visibility: six_angles(vec![0]),
            noise_floor_dbm: -100.0,
            correlation: None,
            seed: 1,
        };
        let scan = generate_scan(&spec, TrackGeometry::default(), CarrierConfig::default()).unwrap();
        let track = scan_to_amplitude_track(&scan, TrackMode::Omni, &PipelineConfig::default()).unwrap();
        assert!(track.amplitudes().iter().all(|&a| a == track.amplitudes()[0]));
        assert!(matches!(autocorrelation(&track, &AutocorrOptions::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn dominant_tap_ratio_survives_generation() {
        let taps = vec![
            Tap { delay_ns: 0.0, mean_power_mw: 10.0, fading: None },
            Tap { delay_ns: 10.0, mean_power_mw: 0.5, fading: None },
            Tap { delay_ns: 20.0, mean_power_mw: 0.3, fading: None },
            Tap { delay_ns: 30.0, mean_power_mw: 0.2, fading: None },
        ];
        let spec = MultipathSpec {
            environment: Environment::Los,
            delay_bin_ns: 2.0,
            num_bins: 32,
            taps,
            visibility: six_angles(vec![0, 1, 2, 3]),
            noise_floor_dbm: -90.0,
            correlation: None,
            seed: 5,
        };
        let geom = TrackGeometry::new(3, 0.5, Orientation::OrthogonalToTr).unwrap();
        let scan = generate_scan(&spec, geom, CarrierConfig::default()).unwrap();
        let pdp = scan.get(0, Azimuth::new(30)).unwrap();
        let cleaned = apply_double_threshold(pdp, ThresholdPolicy::default()).unwrap();
        let paths: Vec<f64> = cleaned.powers_mw().iter().copied().filter(|&p| p > 0.0).collect();
        assert_eq!(paths.len(), 4);
        assert_abs_diff_eq!(estimate_k_dominant(&paths).unwrap(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn invisible_angle_has_no_records() {
        let mut visibility = six_angles(vec![0]);
        visibility.remove(&Azimuth::new(270));
        let spec = MultipathSpec {
            environment: Environment::Nlos,
            delay_bin_ns: 2.0,
            num_bins: 16,
            taps: vec![Tap {
                delay_ns: 4.0,
                mean_power_mw: 1e-6,
                fading: Some(FadingFamily::LogNormalDb { sigma_db: 1.0 }),
            }],
            visibility,
            noise_floor_dbm: -110.0,
            correlation: Some((0.0, 0.26)),
            seed: 2,
        };
        let scan = generate_scan(&spec, TrackGeometry::default(), CarrierConfig::default()).unwrap();
        assert_eq!(scan.azimuths().len(), 5);
        assert!(scan.get(0, Azimuth::new(270)).is_none());
        let err = scan_to_amplitude_track(&scan, TrackMode::Directional(Azimuth::new(270)), &PipelineConfig::default());
        assert!(matches!(err, Err(Error::NoSignal(_))));
        let again = generate_scan(&spec, TrackGeometry::default(), CarrierConfig::default()).unwrap();
        assert_eq!(scan, again);
    }

    #[test]
    fn spec_validation() {
        let mut spec = MultipathSpec {
            environment: Environment::Los,
            delay_bin_ns: 2.0,
            num_bins: 4,
            taps: vec![
                Tap { delay_ns: 0.0, mean_power_mw: 1.0, fading: None },
                Tap { delay_ns: 0.0, mean_power_mw: 1.0, fading: None },
            ],
            visibility: six_angles(vec![0]),
            noise_floor_dbm: -90.0,
            correlation: None,
            seed: 0,
        };
        assert!(spec.validate().is_err());
        spec.taps[1].delay_ns = 20.0;
        assert!(spec.validate().is_err());
        spec.num_bins = 16;
        assert!(spec.validate().is_ok());
        spec.visibility.insert(Azimuth::new(30), vec![5]);
        assert!(spec.validate().is_err());
    }
}
