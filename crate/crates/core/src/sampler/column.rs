//! Basis-column updates.
//!
//! The full conditional of column `w` restricted to the unit sphere of the
//! null space of the other columns is `π(w) ∝ exp(-½ wᵀQw + wᵀb)`. A draw
//! `y ~ N(Q⁻¹b, Q⁻¹)` projected and normalized has direction density
//! `∝ J(wᵀQw, wᵀb)` relative to `π`, where
//! `J(a, b) = ∫₀^∞ r^{p} exp(-a r²/2 + b r) dr` and `p = n* - 1`.
//! Using that draw as an independence proposal with the ratio of `π/J`
//! values gives an exact sampler.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::linalg::{project_out, JitteredCholesky};
use crate::model::ColumnUpdate;
use crate::special::ln_norm_interval;
use crate::stiefel::standard_normal_vector;

const SIMPSON_INTERVALS: usize = 800;

/// `ln ∫₀^∞ r^p exp(-a r²/2 + b r) dr` for `a > 0`.
pub fn ln_radial_integral(a: f64, b: f64, p: usize) -> f64 {
    debug_assert!(a > 0.0);
    if p == 0 {
        let sa = a.sqrt();
        return 0.5 * (2.0 * std::f64::consts::PI / a).ln() + b * b / (2.0 * a)
            + ln_norm_interval(f64::NEG_INFINITY, b / sa);
    }
    let pf = p as f64;
    let disc = (b * b + 4.0 * a * pf).sqrt();
    // mode of the log-integrand, in the form that avoids cancellation
    let r0 = if b >= 0.0 { (b + disc) / (2.0 * a) } else { 2.0 * pf / (disc - b) };
    let f = |r: f64| pf * r.ln() - 0.5 * a * r * r + b * r;
    let s = 1.0 / (pf / (r0 * r0) + a).sqrt();
    let lo = (r0 - 12.0 * s).max(0.0);
    let hi = r0 + 20.0 * s;
    let h = (hi - lo) / SIMPSON_INTERVALS as f64;
    let peak = f(r0);
    let g = |r: f64| if r <= 0.0 { 0.0 } else { (f(r) - peak).exp() };
    let mut sum = g(lo) + g(hi);
    for j in 1..SIMPSON_INTERVALS {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * g(lo + j as f64 * h);
    }
    peak + (sum * h / 3.0).ln()
}

/// Everything needed to update one column: precision `Q` (ambient `n × n`,
/// restricted to the null space of `others`), linear term `b` (already in
/// that null space), and `p = n* - 1`.
pub struct ColumnConditional<'a> {
    pub precision: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub others: &'a DMatrix<f64>,
    pub p: usize,
}

/// Result of one column update.
pub struct ColumnDraw {
    pub column: DVector<f64>,
    pub accepted: bool,
}

impl ColumnConditional<'_> {
    fn log_target(&self, w: &DVector<f64>) -> (f64, f64) {
        let a = w.dot(&(&self.precision * w));
        let b = w.dot(&self.linear);
        (a, b)
    }

    /// One update starting from the unit vector `current`.
    pub fn sample<R: Rng + ?Sized>(&self, current: &DVector<f64>, mode: ColumnUpdate, rng: &mut R) -> Result<ColumnDraw> {
        let chol = JitteredCholesky::new(&self.precision, false, "column conditional precision")?;
        let mean = chol.factor.solve(&self.linear);
        let xi = standard_normal_vector(mean.len(), rng);
        // Q = L Lᵀ, so Lᵀ e = ξ gives e ~ N(0, Q⁻¹)
        let noise = chol
            .factor
            .l_dirty()
            .lower_triangle()
            .tr_solve_lower_triangular(&xi)
            .expect("Cholesky factor has a positive diagonal");
        let y = mean + noise;
        let x = project_out(self.others, &project_out(self.others, &y));
        let norm = x.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Ok(ColumnDraw { column: current.clone(), accepted: false });
        }
        let proposal = x / norm;
        if mode == ColumnUpdate::Normalized {
            return Ok(ColumnDraw { column: proposal, accepted: true });
        }
        let (a1, b1) = self.log_target(&proposal);
        let (a0, b0) = self.log_target(current);
        let log_ratio = (-0.5 * a1 + b1 - ln_radial_integral(a1, b1, self.p))
            - (-0.5 * a0 + b0 - ln_radial_integral(a0, b0, self.p));
        let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        Ok(ColumnDraw { column: if accepted { proposal } else { current.clone() }, accepted })
    }
}
