//! Posterior summaries and the scoring rules used by the simulation studies.
//!
//! Coverage and RMSE for `U` and `V` are computed per column and then averaged
//! with equal column weights. Fitted columns beyond the true rank are scored
//! against zero; true columns beyond the fitted rank are ignored. Before
//! scoring, each fitted column pair `(u_i, v_i)` is sign-aligned to the truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::csvd::TruncatedSvd;
use crate::error::{Error, Result};
use crate::model::SvdModelState;
use crate::sampler::PosteriorChain;
use crate::simulation::SyntheticTruth;

/// Element-wise moments and equal-tailed interval over retained draws.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub mean: DMatrix<f64>,
    pub sd: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

impl CellSummary {
    fn empty(rows: usize, cols: usize) -> Self {
        let z = DMatrix::zeros(rows, cols);
        Self { mean: z.clone(), sd: z.clone(), lower: z.clone(), upper: z }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mean.shape()
    }

    /// Whether each cell's interval contains `reference`.
    pub fn covers(&self, reference: &DMatrix<f64>) -> DMatrix<bool> {
        DMatrix::from_fn(self.mean.nrows(), self.mean.ncols(), |r, c| {
            self.lower[(r, c)] <= reference[(r, c)] && reference[(r, c)] <= self.upper[(r, c)]
        })
    }

    fn negate_column(&mut self, j: usize) {
        self.mean.column_mut(j).neg_mut();
        let lo = self.lower.column(j).into_owned();
        self.lower.set_column(j, &-self.upper.column(j));
        self.upper.set_column(j, &-lo);
    }

    fn negate_row(&mut self, i: usize) {
        self.mean.row_mut(i).neg_mut();
        let lo = self.lower.row(i).into_owned();
        self.lower.set_row(i, &-self.upper.row(i));
        self.upper.set_row(i, &-lo);
    }

    fn select_columns(&self, order: &[usize]) -> Self {
        Self {
            mean: self.mean.select_columns(order),
            sd: self.sd.select_columns(order),
            lower: self.lower.select_columns(order),
            upper: self.upper.select_columns(order),
        }
    }

    fn select_rows(&self, order: &[usize]) -> Self {
        Self {
            mean: self.mean.select_rows(order),
            sd: self.sd.select_rows(order),
            lower: self.lower.select_rows(order),
            upper: self.upper.select_rows(order),
        }
    }
}

/// Posterior summary of a chain. Scalars and per-column quantities are
/// stored as single-column matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub level: f64,
    pub draws: usize,
    pub u: CellSummary,
    pub v: CellSummary,
    pub y: CellSummary,
    /// PCA loadings `A = D Vᵀ` (`k × m`).
    pub a: CellSummary,
    pub d: CellSummary,
    pub sigma2: CellSummary,
    pub sigma2_u: CellSummary,
    pub sigma2_v: CellSummary,
    pub rho_u: CellSummary,
    pub rho_v: CellSummary,
    pub beta: CellSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    U,
    V,
    Y,
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman and Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Summarize `rows × cols` cells, filling one row of every draw at a time so
/// that memory stays at `cols × draws`.
fn summarize_rows<S>(
    draws: &[S],
    rows: usize,
    cols: usize,
    level: f64,
    fill_row: impl Fn(&S, usize, &mut [f64]),
) -> CellSummary {
    let mut out = CellSummary::empty(rows, cols);
    let nd = draws.len();
    let (pl, pu) = (0.5 * (1.0 - level), 0.5 * (1.0 + level));
    let mut buf = vec![0.0; cols * nd];
    let mut row = vec![0.0; cols];
    let mut cell = vec![0.0; nd];
    for r in 0..rows {
        for (s, draw) in draws.iter().enumerate() {
            fill_row(draw, r, &mut row);
            for c in 0..cols {
                buf[c * nd + s] = row[c];
            }
        }
        for c in 0..cols {
            cell.copy_from_slice(&buf[c * nd..(c + 1) * nd]);
            let mean = cell.iter().sum::<f64>() / nd as f64;
            let var = if nd > 1 {
                cell.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nd - 1) as f64
            } else {
                0.0
            };
            cell.sort_by(f64::total_cmp);
            out.mean[(r, c)] = mean;
            out.sd[(r, c)] = var.sqrt();
            out.lower[(r, c)] = quantile_sorted(&cell, pl);
            out.upper[(r, c)] = quantile_sorted(&cell, pu);
        }
    }
    out
}

fn summarize_vector(draws: &[&SvdModelState], level: f64, get: impl Fn(&SvdModelState) -> &[f64]) -> CellSummary {
    let len = get(draws[0]).len();
    summarize_rows(draws, len, 1, level, |s, r, out| out[0] = get(s)[r])
}

/// Flip draws so that column pairs agree in sign with the first draw. Only
/// used for chains run without in-sampler alignment.
fn align_draws(states: &[SvdModelState]) -> Vec<SvdModelState> {
    let reference = &states[0];
    states
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for i in 0..s.k() {
                let dot = s.u.column(i).dot(&reference.u.column(i)) + s.v.column(i).dot(&reference.v.column(i));
                if dot < 0.0 {
                    s.u.column_mut(i).neg_mut();
                    s.v.column_mut(i).neg_mut();
                }
            }
            s
        })
        .collect()
}

/// Element-wise summaries with equal-tailed `level` intervals.
pub fn summarize(chain: &PosteriorChain, level: f64) -> Result<PosteriorSummary> {
    if chain.is_empty() {
        return Err(Error::input("cannot summarize an empty chain"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::input(format!("credible level must lie in (0, 1), got {level}")));
    }
    let realigned;
    let states: &[SvdModelState] = if chain.config.align_signs {
        &chain.states
    } else {
        realigned = align_draws(&chain.states);
        &realigned
    };
    let refs: Vec<&SvdModelState> = states.iter().collect();
    let first = refs[0];
    let (n, k) = first.u.shape();
    let m = first.v.nrows();

    let u = summarize_rows(&refs, n, k, level, |s, r, out| {
        out.iter_mut().zip(s.u.row(r).iter()).for_each(|(o, v)| *o = *v)
    });
    let v = summarize_rows(&refs, m, k, level, |s, r, out| {
        out.iter_mut().zip(s.v.row(r).iter()).for_each(|(o, v)| *o = *v)
    });
    let y = summarize_rows(&refs, n, m, level, |s, r, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = (0..k).map(|i| s.u[(r, i)] * s.d[i] * s.v[(c, i)]).sum();
        }
    });
    let a = summarize_rows(&refs, k, m, level, |s, r, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = s.d[r] * s.v[(c, r)];
        }
    });
    Ok(PosteriorSummary {
        level,
        draws: refs.len(),
        u,
        v,
        y,
        a,
        d: summarize_vector(&refs, level, |s| &s.d),
        sigma2: summarize_rows(&refs, 1, 1, level, |s, _, out| out[0] = s.sigma2),
        sigma2_u: summarize_vector(&refs, level, |s| &s.sigma2_u),
        sigma2_v: summarize_vector(&refs, level, |s| &s.sigma2_v),
        rho_u: summarize_vector(&refs, level, |s| &s.rho_u),
        rho_v: summarize_vector(&refs, level, |s| &s.rho_v),
        beta: summarize_vector(&refs, level, |s| &s.beta),
    })
}

/// How fitted columns are paired with true columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Column `i` with column `i`.
    #[default]
    Index,
    /// Repeatedly pair the fitted and true columns with the largest
    /// `|cos u| + |cos v|` among those still unpaired.
    Greedy,
}

fn abs_cos(a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>) -> f64 {
    let den = a.norm() * b.norm();
    if den == 0.0 {
        0.0
    } else {
        (a.dot(&b) / den).abs()
    }
}

/// Fitted column index for each position; positions below `min(k, k*)` are
/// matched to true columns of the same position.
fn matching_order(u_est: &DMatrix<f64>, v_est: &DMatrix<f64>, u_true: &DMatrix<f64>, v_true: &DMatrix<f64>, how: Matching) -> Vec<usize> {
    let k = u_est.ncols();
    if how == Matching::Index {
        return (0..k).collect();
    }
    let kt = u_true.ncols();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * kt);
    for i in 0..k {
        for j in 0..kt {
            let s = abs_cos(u_est.column(i), u_true.column(j)) + abs_cos(v_est.column(i), v_true.column(j));
            pairs.push((s, i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut fitted_for = vec![None; kt];
    let mut used = vec![false; k];
    for (_, i, j) in pairs {
        if !used[i] && fitted_for[j].is_none() {
            used[i] = true;
            fitted_for[j] = Some(i);
        }
    }
    let mut order: Vec<usize> = fitted_for.into_iter().flatten().collect();
    order.extend((0..k).filter(|i| !used[*i]));
    if order.iter().enumerate().any(|(p, &i)| p != i) {
        log::info!("greedy matching reordered fitted columns as {order:?}");
    }
    order
}

/// True column `j` as an `len`-vector, or zeros past the true rank.
fn truth_column(truth: &DMatrix<f64>, j: usize) -> nalgebra::DVector<f64> {
    if j < truth.ncols() {
        truth.column(j).into_owned()
    } else {
        nalgebra::DVector::zeros(truth.nrows())
    }
}

impl PosteriorSummary {
    pub fn k(&self) -> usize {
        self.u.mean.ncols()
    }

    /// Reorder and sign-flip columns so that column `i` estimates true column `i`.
    pub fn aligned_to(&self, u_true: &DMatrix<f64>, v_true: &DMatrix<f64>, how: Matching) -> Self {
        let order = matching_order(&self.u.mean, &self.v.mean, u_true, v_true, how);
        let mut out = self.clone();
        out.u = self.u.select_columns(&order);
        out.v = self.v.select_columns(&order);
        out.a = self.a.select_rows(&order);
        out.d = self.d.select_rows(&order);
        out.sigma2_u = self.sigma2_u.select_rows(&order);
        out.sigma2_v = self.sigma2_v.select_rows(&order);
        if self.rho_u.shape().0 == order.len() && order.len() > 1 {
            out.rho_u = self.rho_u.select_rows(&order);
        }
        if self.rho_v.shape().0 == order.len() && order.len() > 1 {
            out.rho_v = self.rho_v.select_rows(&order);
        }
        for i in 0..out.k().min(u_true.ncols()) {
            let dot = out.u.mean.column(i).dot(&u_true.column(i)) + out.v.mean.column(i).dot(&v_true.column(i));
            if dot < 0.0 {
                out.u.negate_column(i);
                out.v.negate_column(i);
                out.a.negate_row(i);
            }
        }
        out
    }
}

fn basis_parts<'a>(summary: &'a PosteriorSummary, truth: &'a SyntheticTruth, target: Target) -> (&'a CellSummary, &'a DMatrix<f64>) {
    match target {
        Target::U => (&summary.u, &truth.u),
        Target::V => (&summary.v, &truth.v),
        Target::Y => unreachable!("Y is scored cell-wise"),
    }
}

/// Per-column interval coverage of the (sign-aligned) truth. For `Y` a
/// single cell-wise rate is returned.
pub fn column_coverage(summary: &PosteriorSummary, truth: &SyntheticTruth, target: Target) -> Vec<f64> {
    let s = summary.aligned_to(&truth.u, &truth.v, Matching::Index);
    if target == Target::Y {
        let covered = s.y.covers(&truth.signal());
        return vec![covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64];
    }
    let (cells, t) = basis_parts(&s, truth, target);
    (0..cells.mean.ncols())
        .map(|j| {
            let tc = truth_column(t, j);
            let hit = (0..tc.len())
                .filter(|&r| cells.lower[(r, j)] <= tc[r] && tc[r] <= cells.upper[(r, j)])
                .count();
            hit as f64 / tc.len() as f64
        })
        .collect()
}

/// Fraction of true values inside their intervals, averaged over columns.
pub fn coverage_rate(summary: &PosteriorSummary, truth: &SyntheticTruth, target: Target) -> f64 {
    let c = column_coverage(summary, truth, target);
    c.iter().sum::<f64>() / c.len() as f64
}

fn rms(a: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in a {
        s += v * v;
        n += 1;
    }
    (s / n as f64).sqrt()
}

/// Per-column RMSE of point estimates after joint sign alignment. True
/// columns past the true rank are zero.
pub fn point_column_rmse(u_est: &DMatrix<f64>, v_est: &DMatrix<f64>, truth: &SyntheticTruth, target: Target) -> Vec<f64> {
    let est = if target == Target::U { u_est } else { v_est };
    let t = if target == Target::U { &truth.u } else { &truth.v };
    (0..est.ncols())
        .map(|j| {
            let tc = truth_column(t, j);
            let flip = j < truth.k()
                && u_est.column(j).dot(&truth.u.column(j)) + v_est.column(j).dot(&truth.v.column(j)) < 0.0;
            let sign = if flip { -1.0 } else { 1.0 };
            rms(est.column(j).iter().zip(tc.iter()).map(|(e, t)| sign * e - t))
        })
        .collect()
}

/// Per-column RMSE of the posterior mean (single value for `Y`).
pub fn column_rmse(summary: &PosteriorSummary, truth: &SyntheticTruth, target: Target) -> Vec<f64> {
    if target == Target::Y {
        let t = truth.signal();
        return vec![rms(summary.y.mean.iter().zip(t.iter()).map(|(e, t)| e - t))];
    }
    point_column_rmse(&summary.u.mean, &summary.v.mean, truth, target)
}

pub fn rmse(summary: &PosteriorSummary, truth: &SyntheticTruth, target: Target) -> f64 {
    let c = column_rmse(summary, truth, target);
    c.iter().sum::<f64>() / c.len() as f64
}

/// RMSE of a classical SVD under the same scoring rules.
pub fn svd_rmse(svd: &TruncatedSvd, truth: &SyntheticTruth, target: Target) -> f64 {
    if target == Target::Y {
        let t = truth.signal();
        return rms(svd.reconstruct().iter().zip(t.iter()).map(|(e, t)| e - t));
    }
    let c = point_column_rmse(&svd.u, &svd.v, truth, target);
    c.iter().sum::<f64>() / c.len() as f64
}

/// Column-wise `variable / grouped`.
pub fn rmse_ratio(variable: &[f64], grouped: &[f64]) -> Vec<f64> {
    variable.iter().zip(grouped).map(|(v, g)| v / g).collect()
}

/// Cells where the interval excludes `reference`, after flipping each
/// reference column to agree in sign with the posterior mean.
pub fn significance_mask(cells: &CellSummary, reference: &DMatrix<f64>) -> DMatrix<bool> {
    let mut r = reference.clone();
    for j in 0..r.ncols().min(cells.mean.ncols()) {
        if r.column(j).dot(&cells.mean.column(j)) < 0.0 {
            r.column_mut(j).neg_mut();
        }
    }
    cells.covers(&r).map(|c| !c)
}
