//! Spatial autocorrelation of amplitude tracks and the damped-cosine model
//! `rho(dx) = cos(a·dx)·exp(-b·dx)`.

use crate::error::{Error, Result};
use crate::model::{AmplitudeTrack, CarrierConfig};
use crate::optim::golden_section;

pub const DEFAULT_MAX_LAG_WAVELENGTHS: f64 = 30.0;
pub const DEFAULT_MIN_PAIRS: usize = 100;
pub const MIN_FIT_LAGS: usize = 5;

/// How the per-lag means in the correlation coefficient are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanMode {
    /// Mean of the leading window and mean of the trailing window, separately.
    #[default]
    Windowed,
    /// One mean over the whole track, for sensitivity checks.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutocorrOptions {
    /// Largest lag in wavelengths; `None` picks the 30λ default, shortened
    /// until every lag keeps `min_pairs` overlapping pairs.
    pub max_lag: Option<f64>,
    pub min_pairs: usize,
    pub mean_mode: MeanMode,
}

impl Default for AutocorrOptions {
    fn default() -> Self {
        Self {
            max_lag: None,
            min_pairs: DEFAULT_MIN_PAIRS,
            mean_mode: MeanMode::Windowed,
        }
    }
}

/// Correlation coefficients at uniform lags starting from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrSeries {
    lags: Vec<f64>,
    rho: Vec<f64>,
}

impl AutocorrSeries {
    /// Validates `rho[0] == 1`, `|rho| <= 1` and strictly increasing lags.
    pub fn new(lags: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if lags.is_empty() || lags.len() != rho.len() {
            return Err(Error::Degenerate("autocorrelation series with mismatched or empty columns"));
        }
        if lags[0] != 0.0 || rho[0] != 1.0 {
            return Err(Error::Degenerate("autocorrelation series must start with rho(0) = 1"));
        }
        if lags.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Degenerate("autocorrelation lags must be strictly increasing"));
        }
        if rho.iter().any(|r| !(r.abs() <= 1.0 + 1e-9)) {
            return Err(Error::Degenerate("correlation coefficient outside [-1, 1]"));
        }
        Ok(Self { lags, rho })
    }

    /// Samples the model at `lags`.
    pub fn from_model(a: f64, b: f64, lags: Vec<f64>) -> Result<Self> {
        let rho = lags.iter().map(|&dx| damped_cos(a, b, dx)).collect();
        Self::new(lags, rho)
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn max_lag(&self) -> f64 {
        *self.lags.last().expect("non-empty series")
    }
}

/// Uniform lags `0, step, ..., <= max_lag`.
pub fn uniform_lags(step: f64, max_lag: f64) -> Vec<f64> {
    let m = (max_lag / step + 1e-9).floor() as usize;
    (0..=m).map(|i| i as f64 * step).collect()
}

/// Spatial autocorrelation coefficient at every integer sample lag up to the
/// requested maximum. Sums run over the `n - m` overlapping positions.
pub fn autocorrelation(track: &AmplitudeTrack, options: &AutocorrOptions) -> Result<AutocorrSeries> {
    let amps = track.amplitudes();
    let n = amps.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let spacing = track.spacing_wavelengths();
    // largest sample lag keeping min_pairs overlapping pairs
    let pair_limit = n.saturating_sub(options.min_pairs.max(1));
    let max_m = match options.max_lag {
        Some(max_lag) => {
            if !(max_lag.is_finite() && max_lag >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "max lag (wavelengths)",
                    value: max_lag,
                });
            }
            let m = (max_lag / spacing + 1e-9).floor() as usize;
            if m > pair_limit || n < options.min_pairs {
                return Err(Error::InsufficientPairs {
                    max_lag,
                    min_pairs: options.min_pairs,
                });
            }
            m
        }
        None => {
            if n < options.min_pairs {
                return Err(Error::InsufficientPairs {
                    max_lag: 0.0,
                    min_pairs: options.min_pairs,
                });
            }
            let m = (DEFAULT_MAX_LAG_WAVELENGTHS / spacing + 1e-9).floor() as usize;
            m.min(pair_limit)
        }
    };

    let global_mean = amps.iter().sum::<f64>() / n as f64;
    let mut lags = Vec::with_capacity(max_m + 1);
    let mut rho = Vec::with_capacity(max_m + 1);
    for m in 0..=max_m {
        let len = n - m;
        let lead = &amps[..len];
        let trail = &amps[m..];
        let (mu_lead, mu_trail) = match options.mean_mode {
            MeanMode::Windowed => (
                lead.iter().sum::<f64>() / len as f64,
                trail.iter().sum::<f64>() / len as f64,
            ),
            MeanMode::Global => (global_mean, global_mean),
        };
        let (mut cross, mut var_lead, mut var_trail) = (0.0, 0.0, 0.0);
        for (x, y) in lead.iter().zip(trail) {
            let dx = x - mu_lead;
            let dy = y - mu_trail;
            cross += dx * dy;
            var_lead += dx * dx;
            var_trail += dy * dy;
        }
        if var_lead <= 0.0 || var_trail <= 0.0 {
            return Err(Error::Degenerate("constant amplitude track (zero variance window)"));
        }
        lags.push(m as f64 * spacing);
        rho.push(if m == 0 {
            1.0
        } else {
            (cross / (var_lead * var_trail).sqrt()).clamp(-1.0, 1.0)
        });
    }
    AutocorrSeries::new(lags, rho)
}

pub fn damped_cos(a: f64, b: f64, dx: f64) -> f64 {
    (a * dx).cos() * (-b * dx).exp()
}

/// Fitted damped-cosine parameters with the derived period and decorrelation
/// distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedCosParams {
    /// Oscillation rate, rad/λ.
    pub a: f64,
    /// Decay rate, 1/λ.
    pub b: f64,
    /// Oscillation period `2π/a` in wavelengths; `None` when `a == 0`.
    pub period: Option<f64>,
    /// Decorrelation distance `1/b` in wavelengths.
    pub decorrelation: f64,
    /// The decorrelation distance lies beyond the largest fitted lag.
    pub extrapolated: bool,
    /// Mean squared error of the fit.
    pub mse: f64,
}

impl DampedCosParams {
    pub fn from_ab(a: f64, b: f64, max_lag: f64, mse: f64) -> Self {
        let decorrelation = 1.0 / b;
        Self {
            a,
            b,
            period: (a > 0.0).then(|| 2.0 * std::f64::consts::PI / a),
            decorrelation,
            extrapolated: decorrelation > max_lag,
            mse,
        }
    }
}

const A_GRID_STEP: f64 = 0.01;
const A_GRID_MAX: f64 = 1.5;
const B_GRID_MIN: f64 = 0.001;
const B_GRID_STEP: f64 = 0.005;
const B_GRID_MAX: f64 = 2.0;
const REFINE_TOL: f64 = 1e-9;
const REFINE_SWEEPS: usize = 500;

fn model_mse(lags: &[f64], rho: &[f64], a: f64, b: f64) -> f64 {
    lags.iter()
        .zip(rho)
        .map(|(&dx, &r)| (damped_cos(a, b, dx) - r).powi(2))
        .sum::<f64>()
        / lags.len() as f64
}

/// Equal-weight least-squares fit of the damped cosine to a series.
///
/// A coarse (a, b) grid is scanned in ascending order (ties keep the smaller
/// a, then the smaller b), then a and b are refined alternately by
/// golden-section search until neither moves. With `force_a_zero` only b is
/// fitted.
pub fn fit_damped_cos(series: &AutocorrSeries, force_a_zero: bool) -> Result<DampedCosParams> {
    if series.len() < MIN_FIT_LAGS {
        return Err(Error::TooFewLags {
            needed: MIN_FIT_LAGS,
            got: series.len(),
        });
    }
    let lags = series.lags();
    let rho = series.rho();

    let a_grid: Vec<f64> = if force_a_zero {
        vec![0.0]
    } else {
        let steps = (A_GRID_MAX / A_GRID_STEP).round() as usize;
        (0..=steps).map(|i| i as f64 * A_GRID_STEP).collect()
    };
    let b_steps = ((B_GRID_MAX - B_GRID_MIN) / B_GRID_STEP).floor() as usize;
    let b_grid: Vec<f64> = (0..=b_steps).map(|i| B_GRID_MIN + i as f64 * B_GRID_STEP).collect();

    let decay: Vec<Vec<f64>> = b_grid
        .iter()
        .map(|&b| lags.iter().map(|&dx| (-b * dx).exp()).collect())
        .collect();
    let mut osc = vec![0.0; lags.len()];
    let (mut best_a, mut best_b, mut best) = (0.0, B_GRID_MIN, f64::INFINITY);
    for &a in &a_grid {
        for (o, &dx) in osc.iter_mut().zip(lags) {
            *o = (a * dx).cos();
        }
        for (&b, env) in b_grid.iter().zip(&decay) {
            let sse: f64 = osc
                .iter()
                .zip(env)
                .zip(rho)
                .map(|((o, e), r)| (o * e - r).powi(2))
                .sum();
            if sse < best {
                best = sse;
                best_a = a;
                best_b = b;
            }
        }
    }
    let mut best_mse = best / lags.len() as f64;

    let (mut a, mut b) = (best_a, best_b);
    for _ in 0..REFINE_SWEEPS {
        let (prev_a, prev_b) = (a, b);
        if !force_a_zero {
            let (na, err) = golden_section(
                |x| model_mse(lags, rho, x, b),
                (a - A_GRID_STEP).max(0.0),
                a + A_GRID_STEP,
                REFINE_TOL,
            );
            if err < best_mse {
                a = na;
                best_mse = err;
            }
        }
        let (nb, err) = golden_section(
            |x| model_mse(lags, rho, a, x),
            (b - B_GRID_STEP).max(REFINE_TOL),
            b + B_GRID_STEP,
            REFINE_TOL,
        );
        if err < best_mse {
            b = nb;
            best_mse = err;
        }
        if (a - prev_a).abs() <= REFINE_TOL && (b - prev_b).abs() <= REFINE_TOL {
            break;
        }
    }
    Ok(DampedCosParams::from_ab(a, b, series.max_lag(), best_mse))
}

/// First lag at which rho falls to 1/e, linearly interpolated between the
/// bracketing samples; `None` when it never does.
pub fn decorrelation_empirical(series: &AutocorrSeries) -> Option<f64> {
    let threshold = (-1f64).exp();
    let (lags, rho) = (series.lags(), series.rho());
    if rho[0] <= threshold {
        return Some(lags[0]);
    }
    (1..rho.len()).find(|&i| rho[i] <= threshold).map(|i| {
        let (x0, x1, r0, r1) = (lags[i - 1], lags[i], rho[i - 1], rho[i]);
        x0 + (x1 - x0) * (r0 - threshold) / (r0 - r1)
    })
}

pub fn wavelengths_to_cm(wavelengths: f64, carrier: &CarrierConfig) -> f64 {
    carrier.wavelengths_to_cm(wavelengths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn track(amps: Vec<f64>) -> AmplitudeTrack {
        AmplitudeTrack::new(amps, 0.5, "test").unwrap()
    }

    #[test]
    fn alternating_track() {
        let amps: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.1 } else { 0.9 }).collect();
        let opts = AutocorrOptions {
            max_lag: Some(1.0),
            min_pairs: 5,
            ..Default::default()
        };
        let s = autocorrelation(&track(amps), &opts).unwrap();
        assert_eq!(s.lags(), &[0.0, 0.5, 1.0]);
        assert_eq!(s.rho()[0], 1.0);
        assert_abs_diff_eq!(s.rho()[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.rho()[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_track_is_degenerate() {
        let opts = AutocorrOptions {
            min_pairs: 2,
            ..Default::default()
        };
        assert!(matches!(autocorrelation(&track(vec![2.0; 20]), &opts), Err(Error::Degenerate(_))));
    }

    #[test]
    fn default_max_lag_respects_pairs() {
        let amps: Vec<f64> = (0..175).map(|i| 1.0 + 0.1 * (i as f64 * 0.7).sin()).collect();
        let s = autocorrelation(&track(amps.clone()), &AutocorrOptions::default()).unwrap();
        assert_eq!(s.len(), 61);
        assert_abs_diff_eq!(s.max_lag(), 30.0);

        let short: Vec<f64> = amps[..120].to_vec();
        let s = autocorrelation(&track(short.clone()), &AutocorrOptions::default()).unwrap();
        assert_eq!(s.len(), 21);

        let too_far = AutocorrOptions {
            max_lag: Some(30.0),
            ..Default::default()
        };
        assert!(matches!(autocorrelation(&track(short), &too_far), Err(Error::InsufficientPairs { .. })));
    }

    #[test]
    fn damped_cos_examples() {
        assert_eq!(damped_cos(0.45, 0.1, 0.0), 1.0);
        assert_abs_diff_eq!(damped_cos(0.45, 0.10, 14.0), 0.2466, epsilon = 1e-3);
        assert_abs_diff_eq!(damped_cos(0.0, 0.26, 3.846), (-1f64).exp(), epsilon = 1e-4);
    }

    #[test]
    fn fit_recovers_noiseless_models() {
        let lags = uniform_lags(0.5, 30.0);
        let s = AutocorrSeries::from_model(0.45, 0.10, lags.clone()).unwrap();
        let p = fit_damped_cos(&s, false).unwrap();
        assert_abs_diff_eq!(p.a, 0.45, epsilon = 0.01);
        assert_abs_diff_eq!(p.b, 0.10, epsilon = 0.005);
        assert!(p.mse <= 1e-6);
        assert_abs_diff_eq!(p.period.unwrap(), 2.0 * std::f64::consts::PI / p.a);

        let s = AutocorrSeries::from_model(0.0, 0.26, lags.clone()).unwrap();
        let p = fit_damped_cos(&s, true).unwrap();
        assert_eq!(p.a, 0.0);
        assert!(p.period.is_none());
        assert_abs_diff_eq!(p.b, 0.26, epsilon = 0.005);
        assert_abs_diff_eq!(p.decorrelation, 3.85, epsilon = 0.1);
        assert!(!p.extrapolated);

        let s = AutocorrSeries::from_model(0.005, 0.005, lags).unwrap();
        let p = fit_damped_cos(&s, false).unwrap();
        assert_abs_diff_eq!(p.b, 0.005, epsilon = 1e-4);
        assert!(p.extrapolated);
        assert!((p.decorrelation - 200.0).abs() < 5.0, "d = {}", p.decorrelation);
    }

    #[test]
    fn fit_is_deterministic() {
        let lags = uniform_lags(0.5, 30.0);
        let rho: Vec<f64> = lags
            .iter()
            .enumerate()
            .map(|(i, &dx)| if i == 0 { 1.0 } else { damped_cos(0.3, 0.2, dx) + 0.05 * (i as f64 * 1.7).sin() })
            .collect();
        let s = AutocorrSeries::new(lags, rho).unwrap();
        let p1 = fit_damped_cos(&s, false).unwrap();
        let p2 = fit_damped_cos(&s, false).unwrap();
        assert_eq!(p1.a.to_bits(), p2.a.to_bits());
        assert_eq!(p1.b.to_bits(), p2.b.to_bits());
    }

    #[test]
    fn fit_needs_five_lags() {
        let s = AutocorrSeries::from_model(0.0, 0.3, uniform_lags(0.5, 1.5)).unwrap();
        assert!(matches!(fit_damped_cos(&s, true), Err(Error::TooFewLags { .. })));
    }

    #[test]
    fn empirical_decorrelation() {
        let s = AutocorrSeries::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.5, 0.2]).unwrap();
        let d = decorrelation_empirical(&s).unwrap();
        assert_abs_diff_eq!(d, 0.5 + 0.5 * (0.5 - (-1f64).exp()) / 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.720, epsilon = 1e-3);

        let high = AutocorrSeries::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.95, 0.9]).unwrap();
        assert!(decorrelation_empirical(&high).is_none());

        let exp = AutocorrSeries::from_model(0.0, 0.26, uniform_lags(0.5, 30.0)).unwrap();
        assert_abs_diff_eq!(decorrelation_empirical(&exp).unwrap(), 1.0 / 0.26, epsilon = 0.25);
    }

    #[test]
    fn lag_conversion() {
        let c = CarrierConfig::default();
        assert_abs_diff_eq!(wavelengths_to_cm(10.0, &c), 4.078, epsilon = 1e-3);
        assert_abs_diff_eq!(wavelengths_to_cm(3.85, &c), 1.570, epsilon = 1e-3);
        assert_eq!(wavelengths_to_cm(0.0, &c), 0.0);
    }

    #[test]
    fn series_validation() {
        assert!(AutocorrSeries::new(vec![0.0, 1.0], vec![0.9, 0.5]).is_err());
        assert!(AutocorrSeries::new(vec![0.0, 0.0], vec![1.0, 0.5]).is_err());
        assert!(AutocorrSeries::new(vec![0.0, 1.0], vec![1.0, 1.5]).is_err());
    }
}
