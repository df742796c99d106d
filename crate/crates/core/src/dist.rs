//! Scalar distributions used by the sampler.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::special::ln_norm_interval;

/// Draw from `N(mean, sd²)` truncated to `(lo, hi)`. Either bound may be infinite.
///
/// Uses Robert's (1995) mixture of normal, uniform and translated-exponential
/// rejection samplers on the standardized interval, so it stays efficient far
/// in the tails.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(sd > 0.0 && lo < hi);
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    mean + sd * standard_truncated(rng, a, b)
}

fn standard_truncated<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return -standard_truncated(rng, -b, -a);
    }
    if a <= 0.0 {
        // interval straddles zero
        if b - a > (2.0 * std::f64::consts::PI).sqrt() {
            loop {
                let z: f64 = rng.sample(StandardNormal);
                if z > a && z < b {
                    return z;
                }
            }
        }
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>().ln() <= -0.5 * z * z {
                return z;
            }
        }
    }
    // 0 < a < b
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp_cutoff = a + 2.0 * (0.5f64).exp().sqrt() / (a + (a * a + 4.0).sqrt())
        * ((a * a - a * (a * a + 4.0).sqrt()) / 4.0).exp();
    if b < exp_cutoff {
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>().ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    if a < 0.5 {
        // plenty of mass near a: plain rejection is fine
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a && z < b {
                return z;
            }
        }
    }
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / alpha;
        if z >= b {
            continue;
        }
        if rng.random::<f64>().ln() <= -0.5 * (z - alpha) * (z - alpha) {
            return z;
        }
    }
}

/// `ln P(lo < X < hi)` for `X ~ N(mean, sd²)`.
pub fn ln_normal_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    ln_norm_interval((lo - mean) / sd, (hi - mean) / sd)
}

/// Log Hastings correction `ln q(current | proposed) - ln q(proposed | current)`
/// for a truncated-normal random walk with fixed `sd` on `(lo, hi)`.
pub fn truncated_walk_correction(current: f64, proposed: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    ln_normal_mass(current, sd, lo, hi) - ln_normal_mass(proposed, sd, lo, hi)
}

/// Inverse-gamma draw with density `∝ x^{-shape-1} exp(-rate/x)`.
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0);
    let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    rate / g
}

/// Gamma draw with the given shape and rate.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive shape and rate").sample(rng)
}

/// Draw `σ` from the half-t distribution with `xi` degrees of freedom and scale `a_scale`.
pub fn half_t<R: Rng + ?Sized>(rng: &mut R, xi: f64, a_scale: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let chi2 = 2.0 * Gamma::new(0.5 * xi, 1.0).expect("positive df").sample(rng);
    a_scale * (z / (chi2 / xi).sqrt()).abs()
}
