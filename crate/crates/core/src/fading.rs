//! Marginal fading distributions of dB-about-mean amplitudes.
//!
//! Every family is expressed through the distribution of
//! `r = 20·log10(A / E[A])`, the signal level relative to the mean amplitude,
//! so the empirical side (levels relative to the track's linear mean) and the
//! model side line up without a free scale parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::special::{bessel_i0e, gauss_legendre, normal_cdf, normal_quantile};

/// Number of samples below which no family is fitted.
pub const MIN_FIT_SAMPLES: usize = 30;

/// Points on the uniform level grid used for the mean-squared CDF error.
pub const FIT_GRID_POINTS: usize = 256;

pub const K_GRID_MIN_DB: f64 = -5.0;
pub const K_GRID_MAX_DB: f64 = 30.0;
pub const K_GRID_STEP_DB: f64 = 0.5;
pub const K_REFINE_TOL_DB: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FadingFamily {
    Ricean { k_db: f64 },
    /// Zero-mean Gaussian in the dB domain.
    LogNormalDb { sigma_db: f64 },
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FamilyKind {
    Ricean,
    LogNormalDb,
    Rayleigh,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 3] = [FamilyKind::Ricean, FamilyKind::LogNormalDb, FamilyKind::Rayleigh];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Ricean => "ricean",
            FamilyKind::LogNormalDb => "lognormal_db",
            FamilyKind::Rayleigh => "rayleigh",
        }
    }
}

impl FadingFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            FadingFamily::Ricean { .. } => FamilyKind::Ricean,
            FadingFamily::LogNormalDb { .. } => FamilyKind::LogNormalDb,
            FadingFamily::Rayleigh => FamilyKind::Rayleigh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FadingFamily::Ricean { k_db } if !k_db.is_finite() => Err(Error::InvalidParameter {
                name: "Ricean K-factor (dB)",
                value: k_db,
            }),
            FadingFamily::LogNormalDb { sigma_db } if !(sigma_db.is_finite() && sigma_db > 0.0) => {
                Err(Error::InvalidParameter {
                    name: "log-normal sigma (dB)",
                    value: sigma_db,
                })
            }
            _ => Ok(()),
        }
    }
}

/// Fitted marginal plus goodness-of-fit measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingFit {
    pub family: FadingFamily,
    /// Mean squared difference between empirical and model CDF on a uniform
    /// grid spanning the samples.
    pub fit_error: f64,
    /// Kolmogorov-Smirnov distance between empirical and model CDF.
    pub ks_stat: f64,
    pub sample_count: usize,
}

/// Empirical CDF: right-continuous, `F(x) = #{samples <= x} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("ecdf samples"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Degenerate("NaN sample"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Distinct sample values with the cumulative probability at each step.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = p,
                _ => out.push((x, p)),
            }
        }
        out
    }

    /// Sup-norm distance to a continuous CDF, checked on both sides of each step.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max)
    }
}

/// Dominant-path K-factor: strongest path power over the sum of the others, in dB.
///
/// Returns `+inf` when all residual paths carry zero power.
pub fn estimate_k_dominant(path_powers: &[f64]) -> Result<f64> {
    if path_powers.len() < 2 {
        return Err(Error::TooFewPaths(path_powers.len()));
    }
    if let Some((index, &value)) = path_powers
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
    {
        return Err(Error::InvalidPower { index, value });
    }
    let max = path_powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::AllZeroPdp);
    }
    let residual: f64 = path_powers.iter().sum::<f64>() - max;
    if residual <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max / residual).log10())
}

/// Tabulated Ricean amplitude distribution with unit mean power.
///
/// The amplitude density is integrated on equal cells with an 8-point
/// Gauss-Legendre rule; the cell count doubles until the mean amplitude and
/// total mass stop changing.
#[derive(Debug, Clone)]
struct RiceTable {
    nu: f64,
    sigma: f64,
    lo: f64,
    width: f64,
    /// CDF at the left edge of each cell, plus the total mass at the end.
    cum: Vec<f64>,
    mean: f64,
}

const RICE_SPAN_SIGMAS: f64 = 13.0;
const RICE_MEAN_RTOL: f64 = 1e-12;

impl RiceTable {
    fn new(k_db: f64) -> Self {
        let k = 10f64.powf(k_db / 10.0);
        let nu = (k / (k + 1.0)).sqrt();
        let sigma = (0.5 / (k + 1.0)).sqrt();
        let lo = (nu - RICE_SPAN_SIGMAS * sigma).max(0.0);
        let hi = nu + RICE_SPAN_SIGMAS * sigma;

        let mut cells = 32;
        let mut prev = Self::tabulate(nu, sigma, lo, hi, cells);
        loop {
            cells *= 2;
            let next = Self::tabulate(nu, sigma, lo, hi, cells);
            let converged = (next.mean - prev.mean).abs() <= RICE_MEAN_RTOL * next.mean
                && (next.cum[cells] - prev.cum[cells / 2]).abs() <= RICE_MEAN_RTOL;
            prev = next;
            if converged || cells >= 1 << 14 {
                return prev;
            }
        }
    }

    fn tabulate(nu: f64, sigma: f64, lo: f64, hi: f64, cells: usize) -> Self {
        let width = (hi - lo) / cells as f64;
        let mut table = Self {
            nu,
            sigma,
            lo,
            width,
            cum: Vec::with_capacity(cells + 1),
            mean: 0.0,
        };
        let mut acc = 0.0;
        let mut mean = 0.0;
        table.cum.push(0.0);
        for i in 0..cells {
            let a = lo + i as f64 * width;
            let b = a + width;
            acc += gauss_legendre(|x| table.pdf(x), a, b);
            mean += gauss_legendre(|x| x * table.pdf(x), a, b);
            table.cum.push(acc);
        }
        table.mean = mean;
        table
    }

    fn pdf(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let d = x - self.nu;
        x / s2 * (-(d * d) / (2.0 * s2)).exp() * bessel_i0e(x * self.nu / s2)
    }

    fn cells(&self) -> usize {
        self.cum.len() - 1
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        let t = (x - self.lo) / self.width;
        if t >= self.cells() as f64 {
            return 1.0;
        }
        let i = t as usize;
        let a = self.lo + i as f64 * self.width;
        (self.cum[i] + gauss_legendre(|y| self.pdf(y), a, x)).min(1.0)
    }

    fn quantile(&self, u: f64) -> f64 {
        let n = self.cells();
        // first cell whose right edge reaches u
        let i = self.cum[1..].partition_point(|&c| c < u).min(n - 1);
        let mut a = self.lo + i as f64 * self.width;
        let mut b = a + self.width;
        let mut x = 0.5 * (a + b);
        for _ in 0..100 {
            let g = self.cdf(x) - u;
            if g > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let p = self.pdf(x);
            let mut next = if p > 0.0 { x - g / p } else { 0.5 * (a + b) };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - x).abs() <= 1e-15 * x.max(1e-300) || b - a <= 1e-15 * b {
                return next;
            }
            x = next;
        }
        x
    }
}

/// A fading family prepared for repeated CDF and quantile evaluation.
#[derive(Debug, Clone)]
pub struct FadingModel {
    family: FadingFamily,
    inner: ModelInner,
}

#[derive(Debug, Clone)]
enum ModelInner {
    Ricean(RiceTable),
    LogNormal { sigma_db: f64 },
    Rayleigh,
}

impl FadingModel {
    pub fn new(family: FadingFamily) -> Result<Self> {
        family.validate()?;
        let inner = match family {
            FadingFamily::Ricean { k_db } => ModelInner::Ricean(RiceTable::new(k_db)),
            FadingFamily::LogNormalDb { sigma_db } => ModelInner::LogNormal { sigma_db },
            FadingFamily::Rayleigh => ModelInner::Rayleigh,
        };
        Ok(Self { family, inner })
    }

    pub fn family(&self) -> FadingFamily {
        self.family
    }

    /// `P(20·log10(A / E[A]) <= r_db)`.
    pub fn cdf(&self, r_db: f64) -> f64 {
        if r_db == f64::NEG_INFINITY {
            return 0.0;
        }
        if r_db == f64::INFINITY {
            return 1.0;
        }
        match &self.inner {
            ModelInner::Ricean(t) => t.cdf(t.mean * 10f64.powf(r_db / 20.0)),
            ModelInner::LogNormal { sigma_db } => normal_cdf(r_db / sigma_db),
            ModelInner::Rayleigh => -(-std::f64::consts::FRAC_PI_4 * 10f64.powf(r_db / 10.0)).exp_m1(),
        }
    }

    /// Level `r` (dB about the mean) with `cdf(r) = u`, for `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.inner {
            ModelInner::Ricean(t) => 20.0 * (t.quantile(u) / t.mean).log10(),
            ModelInner::LogNormal { sigma_db } => sigma_db * normal_quantile(u),
            ModelInner::Rayleigh => {
                10.0 * (-(-u).ln_1p() / std::f64::consts::FRAC_PI_4).log10()
            }
        }
    }

    /// Level whose CDF equals `Φ(z)`, the Gaussian-copula transform of a
    /// standard normal variate. Non-decreasing in `z`.
    pub fn quantile_from_gaussian(&self, z: f64) -> f64 {
        const U_MIN: f64 = 1e-300;
        match &self.inner {
            ModelInner::LogNormal { sigma_db } => sigma_db * z,
            ModelInner::Rayleigh => {
                // -ln(1 - u), from whichever tail keeps precision
                let e = if z < 0.0 {
                    -(-normal_cdf(z)).ln_1p()
                } else {
                    -normal_cdf(-z).max(U_MIN).ln()
                };
                10.0 * (e.max(U_MIN) / std::f64::consts::FRAC_PI_4).log10()
            }
            ModelInner::Ricean(_) => self.quantile(normal_cdf(z).clamp(U_MIN, 1.0 - f64::EPSILON)),
        }
    }

    /// Mean amplitude of the unit-power Ricean amplitude; `None` for the
    /// other families.
    pub fn ricean_mean_amplitude(&self) -> Option<f64> {
        match &self.inner {
            ModelInner::Ricean(t) => Some(t.mean),
            _ => None,
        }
    }

    /// `E[(A / E[A])^2]`, used to convert mean-normalized amplitudes into
    /// unit-mean power gains.
    pub fn mean_square_rel_amplitude(&self) -> f64 {
        match &self.inner {
            ModelInner::Ricean(t) => 1.0 / (t.mean * t.mean),
            ModelInner::LogNormal { sigma_db } => {
                let s = sigma_db * std::f64::consts::LN_10 / 10.0;
                (0.5 * s * s).exp()
            }
            ModelInner::Rayleigh => 4.0 / std::f64::consts::PI,
        }
    }
}

/// One-off CDF evaluation; prefer [`FadingModel`] for repeated use.
pub fn model_cdf(family: FadingFamily, r_db: f64) -> Result<f64> {
    Ok(FadingModel::new(family)?.cdf(r_db))
}

/// Samples prepared for fitting: the eCDF and its values on the error grid.
struct FitData {
    ecdf: Ecdf,
    grid: Vec<f64>,
    target: Vec<f64>,
}

impl FitData {
    fn new(samples: &[f64]) -> Result<Self> {
        if samples.len() < MIN_FIT_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: MIN_FIT_SAMPLES,
                got: samples.len(),
            });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate("non-finite fading sample"));
        }
        let ecdf = Ecdf::new(samples)?;
        let (min, max) = (ecdf.sorted[0], ecdf.sorted[ecdf.len() - 1]);
        if max <= min {
            return Err(Error::Degenerate("zero-variance fading samples"));
        }
        let step = (max - min) / (FIT_GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..FIT_GRID_POINTS).map(|i| min + i as f64 * step).collect();
        let target = grid.iter().map(|&r| ecdf.eval(r)).collect();
        Ok(Self { ecdf, grid, target })
    }

    fn mse(&self, model: &FadingModel) -> f64 {
        self.grid
            .iter()
            .zip(&self.target)
            .map(|(&r, &e)| (e - model.cdf(r)).powi(2))
            .sum::<f64>()
            / self.grid.len() as f64
    }

    fn finish(&self, model: &FadingModel) -> FadingFit {
        FadingFit {
            family: model.family(),
            fit_error: self.mse(model),
            ks_stat: self.ecdf.ks_distance(|r| model.cdf(r)),
            sample_count: self.ecdf.len(),
        }
    }
}

fn sample_std(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn ricean_mse(data: &FitData, k_db: f64) -> f64 {
    let model = FadingModel::new(FadingFamily::Ricean { k_db }).expect("finite K");
    data.mse(&model)
}

fn fit_prepared(data: &FitData, kind: FamilyKind) -> Result<FadingFit> {
    let family = match kind {
        FamilyKind::LogNormalDb => FadingFamily::LogNormalDb {
            sigma_db: sample_std(data.ecdf.sorted()),
        },
        FamilyKind::Rayleigh => FadingFamily::Rayleigh,
        FamilyKind::Ricean => {
            let steps = ((K_GRID_MAX_DB - K_GRID_MIN_DB) / K_GRID_STEP_DB).round() as usize;
            let (mut best_k, mut best_err) = (K_GRID_MIN_DB, f64::INFINITY);
            for i in 0..=steps {
                let k = K_GRID_MIN_DB + i as f64 * K_GRID_STEP_DB;
                let err = ricean_mse(data, k);
                if err < best_err {
                    best_k = k;
                    best_err = err;
                }
            }
            let lo = (best_k - K_GRID_STEP_DB).max(K_GRID_MIN_DB);
            let hi = (best_k + K_GRID_STEP_DB).min(K_GRID_MAX_DB);
            let (k, err) = golden_section(|k| ricean_mse(data, k), lo, hi, K_REFINE_TOL_DB);
            FadingFamily::Ricean {
                k_db: if err <= best_err { k } else { best_k },
            }
        }
    };
    Ok(data.finish(&FadingModel::new(family)?))
}

/// Fits one family to dB-about-mean samples.
///
/// Log-normal uses the sample standard deviation of the dB values; Ricean
/// minimizes the mean squared CDF error over K (grid then golden-section);
/// Rayleigh has no free parameter.
pub fn fit_family(samples: &[f64], kind: FamilyKind) -> Result<FadingFit> {
    fit_prepared(&FitData::new(samples)?, kind)
}

/// Fits all three families and orders them by ascending KS distance. Ties keep
/// the Ricean, log-normal, Rayleigh order.
pub fn select_best_family(samples: &[f64]) -> Result<Vec<FadingFit>> {
    let data = FitData::new(samples)?;
    let mut fits = FamilyKind::ALL
        .iter()
        .map(|&kind| fit_prepared(&data, kind))
        .collect::<Result<Vec<_>>>()?;
    fits.sort_by(|a, b| a.ks_stat.total_cmp(&b.ks_stat));
    Ok(fits)
}
