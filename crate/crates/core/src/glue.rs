//! Mean-field manifold capacity and effective geometry from anchor points.
//!
//! Each draw samples a dichotomy `y` and a probe `t`, projects `t` onto the
//! cone spanned by the signed points, and records one anchor per manifold
//! (the dual-weighted average of its signed points). Capacity and the
//! geometric measures are averages of per-draw quadratic forms.
//!
//! Centers are averages of the unsigned anchors `y_i s_i`; the per-draw
//! axis of manifold `i` is `s_i − y_i s⁰_i`, expressed in the signed frame
//! of that draw.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{self, NnlsSystem, RowSystem, SignedGramSystem};
use crate::error::{Error, Result};
use crate::linalg::{cosine, pinv, pinv_quadratic_form, PINV_RCOND};
use crate::model::{gaussian_vector, Dichotomy, ManifoldEnsemble};
use crate::rng::RngStream;
use crate::stats::{jackknife_se, mean_se, MeanSe};

pub const DEFAULT_DRAWS: usize = 200;
/// Ensembles with at most this many points precompute the full point Gram.
pub const GRAM_LIMIT: usize = 4096;
/// Axis norms below this fraction of the largest center norm count as zero.
const DEGENERATE_AXIS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMode {
    /// Plain cosine averages.
    #[default]
    Signed,
    /// Averages of absolute cosines.
    Absolute,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlueOptions {
    pub n_draws: usize,
    pub tol: f64,
    pub alignment: AlignmentMode,
}

impl Default for GlueOptions {
    fn default() -> Self {
        GlueOptions { n_draws: DEFAULT_DRAWS, tol: cone::DEFAULT_TOL, alignment: AlignmentMode::Signed }
    }
}

/// One (dichotomy, probe) sample and its anchor points.
#[derive(Clone, Debug)]
pub struct AnchorDraw {
    pub dichotomy: Dichotomy,
    pub probe: Array1<f64>,
    /// P×N; row i is the signed anchor of manifold i, zero when inactive.
    pub anchors: Array2<f64>,
    pub dual_mass: Array1<f64>,
    pub active: Vec<bool>,
    /// ‖proj_cone t‖² computed from the duals.
    pub cone_proj_sq: f64,
}

/// Reusable per-ensemble state for drawing anchors.
pub struct AnchorSampler<'a> {
    ensemble: &'a ManifoldEnsemble,
    owner: Vec<usize>,
    gram: Option<Array2<f64>>,
    tol: f64,
}

impl<'a> AnchorSampler<'a> {
    pub fn new(ensemble: &'a ManifoldEnsemble, tol: f64) -> Self {
        let pts = ensemble.points();
        let gram = (ensemble.n_points() <= GRAM_LIMIT).then(|| pts.dot(&pts.t()));
        AnchorSampler { ensemble, owner: ensemble.row_owner(), gram, tol }
    }

    /// Draws `y` then `t` from `stream` and solves the cone projection.
    pub fn draw(&self, stream: &RngStream) -> Result<AnchorDraw> {
        let mut rng = stream.rng();
        let y = Dichotomy::from_rng(self.ensemble.n_manifolds(), &mut rng);
        let t = gaussian_vector(self.ensemble.ambient_dim(), &mut rng);
        self.solve(y, t)
    }

    /// Anchors for a given dichotomy and probe.
    pub fn solve(&self, y: Dichotomy, t: Array1<f64>) -> Result<AnchorDraw> {
        let e = self.ensemble;
        let (p, n) = (e.n_manifolds(), e.ambient_dim());
        if y.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: y.len() });
        }
        if t.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: t.len() });
        }
        let signs: Vec<f64> = self.owner.iter().map(|&i| y.sign(i)).collect();
        let sol = match &self.gram {
            Some(g) => {
                let rhs = e.points().dot(&t);
                let sys = SignedGramSystem::new(g.view(), signs, rhs.as_slice().unwrap(), t.dot(&t).sqrt());
                cone::solve_nnls(&sys, self.tol)?
            }
            None => {
                let signed = e.signed_points(&y);
                let sys = RowSystem::new(signed.view(), t.view());
                cone::solve_nnls(&sys as &dyn NnlsSystem, self.tol)?
            }
        };
        let mut anchors = Array2::zeros((p, n));
        let mut mass = Array1::zeros(p);
        let mut support = sol.passive.clone();
        support.sort_unstable();
        for &k in &support {
            let i = self.owner[k];
            mass[i] += sol.lambda[k];
            anchors.row_mut(i).scaled_add(sol.lambda[k], &e.point(k));
        }
        let mut active = vec![false; p];
        let mut proj = Array1::<f64>::zeros(n);
        for i in 0..p {
            if mass[i] > 0.0 {
                active[i] = true;
                let scale = y.sign(i) / mass[i];
                let mut row = anchors.row_mut(i);
                row *= scale;
                proj.scaled_add(mass[i], &row);
            }
        }
        let cone_proj_sq = proj.dot(&proj);
        Ok(AnchorDraw { dichotomy: y, probe: t, anchors, dual_mass: mass, active, cone_proj_sq })
    }
}

pub fn sample_anchor_draw(ensemble: &ManifoldEnsemble, stream: &RngStream) -> Result<AnchorDraw> {
    AnchorSampler::new(ensemble, cone::DEFAULT_TOL).draw(stream)
}

/// Draw `k` uses `stream.substream(k)`; results come back in draw order.
pub fn collect_draws(ensemble: &ManifoldEnsemble, n_draws: usize, stream: &RngStream, tol: f64) -> Result<Vec<AnchorDraw>> {
    let sampler = AnchorSampler::new(ensemble, tol);
    (0..n_draws as u64)
        .into_par_iter()
        .map(|k| sampler.draw(&stream.substream(k)).map_err(|e| e.in_draw(k)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub alpha: f64,
    pub std_err: f64,
    pub n_draws: usize,
}

fn active_indices(d: &AnchorDraw) -> Vec<usize> {
    (0..d.active.len()).filter(|&i| d.active[i]).collect()
}

fn rows_matrix(rows: &[ArrayView1<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

fn gram_of(m: &DMatrix<f64>) -> DMatrix<f64> {
    m * m.transpose()
}

/// Per-draw `vᵀ(SSᵀ)†v / P` with `v = S t` over the active anchors.
fn capacity_term(d: &AnchorDraw) -> f64 {
    let p = d.active.len();
    let idx = active_indices(d);
    if idx.is_empty() {
        return 0.0;
    }
    let rows: Vec<ArrayView1<f64>> = idx.iter().map(|&i| d.anchors.row(i)).collect();
    let s = rows_matrix(&rows, d.probe.len());
    let t = DVector::from_iterator(d.probe.len(), d.probe.iter().copied());
    let v = &s * &t;
    pinv_quadratic_form(&gram_of(&s), &v, PINV_RCOND) / p as f64
}

fn capacity_from_terms(q: &[f64]) -> Result<CapacityEstimate> {
    let s = mean_se(q);
    if !(s.mean > 0.0) {
        return Err(Error::Degenerate("no draw has an active manifold".into()));
    }
    Ok(CapacityEstimate { alpha: 1.0 / s.mean, std_err: s.std_err / (s.mean * s.mean), n_draws: q.len() })
}

pub fn capacity_from_draws(draws: &[AnchorDraw]) -> Result<CapacityEstimate> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("n_draws must be at least 1".into()));
    }
    let q: Vec<f64> = draws.par_iter().map(capacity_term).collect();
    capacity_from_terms(&q)
}

pub fn estimate_capacity(ensemble: &ManifoldEnsemble, n_draws: usize, stream: &RngStream) -> Result<CapacityEstimate> {
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be at least 1".into()));
    }
    capacity_from_draws(&collect_draws(ensemble, n_draws, stream, cone::DEFAULT_TOL)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlueReport {
    pub capacity: Estimate,
    pub dimension: Estimate,
    pub radius: Estimate,
    pub center_align: Estimate,
    pub axis_align: Estimate,
    pub center_axis_align: Estimate,
    pub n_draws: usize,
    /// All axis parts vanish (point manifolds); dimension and radius are 0.
    pub degenerate: bool,
    /// Manifolds never active in any draw; left out of every average.
    pub excluded: Vec<usize>,
}

/// (1 + R⁻²) / D.
pub fn capacity_from_geometry(dimension: f64, radius: f64) -> Result<f64> {
    if !(dimension > 0.0) || !(radius > 0.0) {
        return Err(Error::Domain(format!("need D > 0 and R > 0, got D = {dimension}, R = {radius}")));
    }
    Ok((1.0 + radius.powi(-2)) / dimension)
}

struct DrawTerms {
    capacity: f64,
    dimension: f64,
    ratio: Option<f64>,
    axis: Option<f64>,
    center_axis: Option<f64>,
    max_axis_norm: f64,
}

fn fold(mode: AlignmentMode, c: f64) -> f64 {
    match mode {
        AlignmentMode::Signed => c,
        AlignmentMode::Absolute => c.abs(),
    }
}

fn mean_opt(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| crate::stats::mean(xs))
}

fn draw_terms(d: &AnchorDraw, centers: &Array2<f64>, mode: AlignmentMode) -> DrawTerms {
    let p = d.active.len();
    let n = d.probe.len();
    let idx = active_indices(d);
    let y = d.dichotomy.signs();
    let capacity = capacity_term(d);
    if idx.is_empty() {
        return DrawTerms { capacity, dimension: 0.0, ratio: None, axis: None, center_axis: None, max_axis_norm: 0.0 };
    }
    let a = idx.len();
    let signed_centers: Vec<Array1<f64>> = idx.iter().map(|&i| &centers.row(i) * y[i]).collect();
    let axes: Vec<Array1<f64>> = idx
        .iter()
        .zip(&signed_centers)
        .map(|(&i, c)| &d.anchors.row(i) - c)
        .collect();
    let max_axis_norm = axes.iter().map(|v| v.dot(v).sqrt()).fold(0.0, f64::max);

    let s1 = DMatrix::from_fn(a, n, |i, j| axes[i][j]);
    let s0 = DMatrix::from_fn(a, n, |i, j| signed_centers[i][j]);
    let t = DVector::from_iterator(n, d.probe.iter().copied());
    let t1 = &s1 * &t;
    let g1 = gram_of(&s1);
    let g0 = gram_of(&s0);
    let dimension = pinv_quadratic_form(&g1, &t1, PINV_RCOND) / p as f64;
    let num = pinv_quadratic_form(&(&g1 + &g0), &t1, PINV_RCOND);
    let woodbury = &g1 + &g1 * pinv(&g0, PINV_RCOND) * &g1;
    let den = pinv_quadratic_form(&woodbury, &t1, PINV_RCOND);
    let ratio = (den > 0.0 && num.is_finite()).then(|| num / den);

    let mut axis = Vec::new();
    let mut center_axis = Vec::new();
    for i in 0..a {
        for j in 0..a {
            if i == j {
                continue;
            }
            if let Some(c) = cosine(axes[i].as_slice().unwrap(), axes[j].as_slice().unwrap()) {
                axis.push(fold(mode, c));
            }
            if let Some(c) = cosine(signed_centers[i].as_slice().unwrap(), axes[j].as_slice().unwrap()) {
                center_axis.push(fold(mode, c));
            }
        }
    }
    DrawTerms { capacity, dimension, ratio, axis: mean_opt(&axis), center_axis: mean_opt(&center_axis), max_axis_norm }
}

fn center_alignment(centers: &Array2<f64>, valid: &[usize], mode: AlignmentMode) -> f64 {
    let mut acc = Vec::new();
    for &i in valid {
        for &j in valid {
            if i != j {
                if let Some(c) = cosine(centers.row(i).as_slice().unwrap(), centers.row(j).as_slice().unwrap()) {
                    acc.push(fold(mode, c));
                }
            }
        }
    }
    mean_opt(&acc).unwrap_or(0.0)
}

fn estimate(s: MeanSe) -> Estimate {
    Estimate { value: s.mean, std_err: s.std_err }
}

fn optional_estimate(xs: Vec<Option<f64>>) -> Estimate {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    if v.is_empty() {
        Estimate { value: 0.0, std_err: 0.0 }
    } else {
        estimate(mean_se(&v))
    }
}

/// All GLUE statistics from a set of draws.
pub fn geometry_from_draws(draws: &[AnchorDraw], mode: AlignmentMode) -> Result<GlueReport> {
    if draws.len() < 2 {
        return Err(Error::InvalidArgument("geometry needs at least 2 draws".into()));
    }
    let (p, n) = draws[0].anchors.dim();
    let mut sums = Array2::<f64>::zeros((p, n));
    let mut counts = vec![0usize; p];
    for d in draws {
        for i in 0..p {
            if d.active[i] {
                sums.row_mut(i).scaled_add(d.dichotomy.sign(i), &d.anchors.row(i));
                counts[i] += 1;
            }
        }
    }
    let excluded: Vec<usize> = (0..p).filter(|&i| counts[i] == 0).collect();
    for &i in &excluded {
        log::warn!("manifold {i} is inactive in every draw and is excluded from the averages");
    }
    let valid: Vec<usize> = (0..p).filter(|&i| counts[i] > 0).collect();
    let mut centers = sums.clone();
    for &i in &valid {
        let mut r = centers.row_mut(i);
        r /= counts[i] as f64;
    }

    let terms: Vec<DrawTerms> = draws.par_iter().map(|d| draw_terms(d, &centers, mode)).collect();
    let q: Vec<f64> = terms.iter().map(|t| t.capacity).collect();
    let cap = capacity_from_terms(&q)?;

    let max_center = valid.iter().map(|&i| centers.row(i).dot(&centers.row(i)).sqrt()).fold(0.0, f64::max);
    let max_axis = terms.iter().map(|t| t.max_axis_norm).fold(0.0, f64::max);
    let degenerate = max_axis <= DEGENERATE_AXIS * max_center.max(f64::MIN_POSITIVE);

    let (dimension, radius) = if degenerate {
        (Estimate { value: 0.0, std_err: 0.0 }, Estimate { value: 0.0, std_err: 0.0 })
    } else {
        let dim = estimate(mean_se(&terms.iter().map(|t| t.dimension).collect::<Vec<_>>()));
        let ratios: Vec<f64> = terms.iter().filter_map(|t| t.ratio).collect();
        let r = if ratios.is_empty() {
            Estimate { value: 0.0, std_err: 0.0 }
        } else {
            let s = mean_se(&ratios);
            let v = s.mean.max(0.0).sqrt();
            Estimate { value: v, std_err: if v > 0.0 { s.std_err / (2.0 * v) } else { 0.0 } }
        };
        (dim, r)
    };

    let rho_c = center_alignment(&centers, &valid, mode);
    let rho_c_se = center_alignment_jackknife(draws, &sums, &counts, &valid, mode);
    let axis = optional_estimate(terms.iter().map(|t| t.axis).collect());
    let center_axis = optional_estimate(terms.iter().map(|t| t.center_axis).collect());

    Ok(GlueReport {
        capacity: Estimate { value: cap.alpha, std_err: cap.std_err },
        dimension,
        radius,
        center_align: Estimate { value: rho_c, std_err: rho_c_se },
        axis_align: axis,
        center_axis_align: center_axis,
        n_draws: draws.len(),
        degenerate,
        excluded,
    })
}

/// Jackknife over draws of the center alignment, using Gram identities so
/// each leave-one-out costs O(P²) after one P×P product per draw.
fn center_alignment_jackknife(
    draws: &[AnchorDraw],
    sums: &Array2<f64>,
    counts: &[usize],
    valid: &[usize],
    mode: AlignmentMode,
) -> f64 {
    let ss = sums.dot(&sums.t());
    let loo: Vec<f64> = draws
        .par_iter()
        .map(|d| {
            let p = counts.len();
            let mut u = d.anchors.clone();
            for i in 0..p {
                let mut r = u.row_mut(i);
                r *= if d.active[i] { d.dichotomy.sign(i) } else { 0.0 };
            }
            let us = u.dot(&sums.t());
            let uu = u.dot(&u.t());
            let cnt: Vec<f64> = (0..p).map(|i| (counts[i] - d.active[i] as usize) as f64).collect();
            let inner = |i: usize, j: usize| (ss[[i, j]] - us[[i, j]] - us[[j, i]] + uu[[i, j]]) / (cnt[i] * cnt[j]);
            let mut acc = Vec::new();
            for &i in valid {
                for &j in valid {
                    if i == j || cnt[i] == 0.0 || cnt[j] == 0.0 {
                        continue;
                    }
                    let (nii, njj) = (inner(i, i), inner(j, j));
                    if nii > 0.0 && njj > 0.0 {
                        let c = (inner(i, j) / (nii * njj).sqrt()).clamp(-1.0, 1.0);
                        acc.push(fold(mode, c));
                    }
                }
            }
            mean_opt(&acc).unwrap_or(0.0)
        })
        .collect();
    jackknife_se(loo.len(), |k| loo[k])
}

pub fn estimate_geometry(ensemble: &ManifoldEnsemble, opts: &GlueOptions, stream: &RngStream) -> Result<GlueReport> {
    if opts.n_draws < 2 {
        return Err(Error::InvalidArgument("geometry needs at least 2 draws".into()));
    }
    let draws = collect_draws(ensemble, opts.n_draws, stream, opts.tol)?;
    geometry_from_draws(&draws, opts.alignment)
}
