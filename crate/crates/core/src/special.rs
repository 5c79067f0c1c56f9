//! Numerical helpers: scaled Bessel I0, Gaussian CDF/quantile and a fixed
//! Gauss-Legendre rule.

use statrs::function::erf;

/// Abscissae and weights of the 8-point Gauss-Legendre rule on [-1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Integrates `f` over `[lo, hi]` with one 8-point Gauss-Legendre panel.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    half * GL8.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Exponentially scaled modified Bessel function `exp(-z) I0(z)` for `z >= 0`.
pub fn bessel_i0e(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z <= 30.0 {
        // power series, all terms positive
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-z).exp()
    } else {
        // large-argument asymptotic series, truncated at its smallest term
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k: f64 = 1.0;
        loop {
            let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * k * z);
            if next < 1e-17 * sum || next > term {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * std::f64::consts::PI * z).sqrt()
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`] on (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // one Newton step polishes the inverse to full precision
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        x - (normal_cdf(x) - p) / density
    } else {
        x
    }
}
