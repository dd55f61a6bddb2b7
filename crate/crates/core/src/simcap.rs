//! Simulated capacity: separability of randomly projected, randomly labeled
//! manifolds, located by bisection over the projection dimension.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{strictly_separable, SEPARABILITY_TOL};
use crate::error::{Error, Result};
use crate::model::{gaussian_matrix, Dichotomy, ManifoldEnsemble};
use crate::rng::RngStream;

pub const DEFAULT_TRIALS: usize = 1000;
/// Number of geometrically spaced dimensions used by the sum form.
pub const SUM_FORM_GRID: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    #[default]
    BinarySearch,
    SumForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbEntry {
    pub n: usize,
    pub p_hat: f64,
    pub trials: usize,
}

/// Measured separability probabilities, sorted by dimension.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbCurve {
    pub entries: Vec<ProbEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimCapacityReport {
    pub alpha_sim: f64,
    pub critical_dim: usize,
    pub curve: ProbCurve,
    pub method: SimMethod,
}

/// One trial: project to `n` dims (identity when `n` equals the ambient
/// dimension), draw a dichotomy, test strict separability.
pub fn separability_trial(ensemble: &ManifoldEnsemble, n: usize, stream: &RngStream) -> Result<bool> {
    let big_n = ensemble.ambient_dim();
    let mut rng = stream.rng();
    let projected: Array2<f64> = if n == big_n {
        ensemble.points().clone()
    } else {
        let pi = gaussian_matrix(n, big_n, 1.0 / (n as f64).sqrt(), &mut rng);
        ensemble.points().dot(&pi.t())
    };
    let y = Dichotomy::from_rng(ensemble.n_manifolds(), &mut rng);
    let mut g = projected;
    for (row, &i) in g.rows_mut().into_iter().zip(ensemble.row_owner().iter()) {
        let mut row = row;
        row *= y.sign(i);
    }
    Ok(strictly_separable(g.view(), SEPARABILITY_TOL)?.is_separable())
}

/// Fraction of `m` trials that are separable at dimension `n`. Trial `k`
/// uses `stream.substream(k)`.
pub fn est_prob(ensemble: &ManifoldEnsemble, n: usize, m: usize, stream: &RngStream) -> Result<f64> {
    if n == 0 || n > ensemble.ambient_dim() {
        return Err(Error::InvalidArgument(format!("projection dimension {n} outside 1..={}", ensemble.ambient_dim())));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let hits: Vec<bool> = (0..m as u64)
        .into_par_iter()
        .map(|k| separability_trial(ensemble, n, &stream.substream(k)))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / m as f64)
}

/// Binomial standard errors by which `p̂_N` may fall short of ½ before the
/// ensemble counts as unseparable at full dimension.
pub const TOP_CHECK_Z: f64 = 2.0;

/// Allowed shortfall of `p̂_N` below ½ for `m` trials.
pub fn top_check_slack(m: usize) -> f64 {
    TOP_CHECK_Z * (0.25 / m.max(1) as f64).sqrt()
}

/// Bisection over `1..=n_max` for the smallest `n` with `prob(n) ≥ ½`,
/// assuming `prob` is nondecreasing. Returns `n*` and every evaluation.
///
/// Fails when `prob(n_max) < ½ − slack`. Between that and ½ the search
/// still runs and ends at `n_max`.
pub fn find_critical_dim_with<F>(n_max: usize, slack: f64, mut prob: F) -> Result<(usize, Vec<(usize, f64)>)>
where
    F: FnMut(usize) -> Result<f64>,
{
    if n_max == 0 {
        return Err(Error::InvalidArgument("ambient dimension must be positive".into()));
    }
    let mut seen = Vec::new();
    let top = prob(n_max)?;
    seen.push((n_max, top));
    if top < 0.5 - slack {
        return Err(Error::Unseparable { dim: n_max, p_hat: top });
    }
    let (mut lo, mut hi) = (0usize, n_max);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let p = prob(mid)?;
        seen.push((mid, p));
        if p >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, seen))
}

/// Dimension `n` is measured with `stream.substream(n)`, so repeated
/// evaluations of one `n` agree.
struct Evaluator<'a> {
    ensemble: &'a ManifoldEnsemble,
    m: usize,
    stream: RngStream,
    cache: BTreeMap<usize, f64>,
}

impl Evaluator<'_> {
    fn prob(&mut self, n: usize) -> Result<f64> {
        if let Some(&p) = self.cache.get(&n) {
            return Ok(p);
        }
        let p = est_prob(self.ensemble, n, self.m, &self.stream.substream(n as u64))?;
        self.cache.insert(n, p);
        Ok(p)
    }

    fn curve(&self) -> ProbCurve {
        ProbCurve {
            entries: self.cache.iter().map(|(&n, &p_hat)| ProbEntry { n, p_hat, trials: self.m }).collect(),
        }
    }
}

pub fn find_critical_dim(ensemble: &ManifoldEnsemble, m: usize, stream: &RngStream) -> Result<usize> {
    let mut ev = Evaluator { ensemble, m, stream: *stream, cache: BTreeMap::new() };
    Ok(find_critical_dim_with(ensemble.ambient_dim(), top_check_slack(m), |n| ev.prob(n))?.0)
}

/// About `count` distinct integers spaced geometrically over `1..=n_max`.
pub fn geometric_grid(n_max: usize, count: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..count)
        .map(|i| {
            let f = if count > 1 { i as f64 / (count - 1) as f64 } else { 1.0 };
            ((n_max as f64).powf(f)).round().clamp(1.0, n_max as f64) as usize
        })
        .collect();
    g.sort_unstable();
    g.dedup();
    g
}

/// Σ_{n=1..n_max} (1 − p(n)) with p interpolated linearly in log n between
/// measured points and held constant beyond them.
pub fn deficit_sum(curve: &ProbCurve, n_max: usize) -> f64 {
    let e = &curve.entries;
    let interp = |n: usize| -> f64 {
        let x = (n as f64).ln();
        match e.iter().position(|en| en.n >= n) {
            None => e.last().map_or(0.0, |l| l.p_hat),
            Some(0) => e[0].p_hat,
            Some(j) if e[j].n == n => e[j].p_hat,
            Some(j) => {
                let (a, b) = (&e[j - 1], &e[j]);
                let (xa, xb) = ((a.n as f64).ln(), (b.n as f64).ln());
                a.p_hat + (b.p_hat - a.p_hat) * (x - xa) / (xb - xa)
            }
        }
    };
    (1..=n_max).map(|n| 1.0 - interp(n)).sum()
}

pub fn simulated_capacity(
    ensemble: &ManifoldEnsemble,
    m: usize,
    stream: &RngStream,
    method: SimMethod,
) -> Result<SimCapacityReport> {
    let n_max = ensemble.ambient_dim();
    let p = ensemble.n_manifolds() as f64;
    let mut ev = Evaluator { ensemble, m, stream: *stream, cache: BTreeMap::new() };
    let (critical_dim, _) = find_critical_dim_with(n_max, top_check_slack(m), |n| ev.prob(n))?;
    let alpha_sim = match method {
        SimMethod::BinarySearch => p / critical_dim as f64,
        SimMethod::SumForm => {
            for n in geometric_grid(n_max, SUM_FORM_GRID) {
                ev.prob(n)?;
            }
            let s = deficit_sum(&ev.curve(), n_max);
            if !(s > 0.0) {
                return Err(Error::Degenerate("separable at every dimension; the sum form diverges".into()));
            }
            p / s
        }
    };
    Ok(SimCapacityReport { alpha_sim, critical_dim, curve: ev.curve(), method })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_oracle() {
        let (n, _) = find_critical_dim_with(100, 0.0, |n| Ok(if n >= 7 { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(n, 7);
        let (n, _) = find_critical_dim_with(7, 0.0, |n| Ok(if n >= 7 { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(n, 7);
        let (n, _) = find_critical_dim_with(1, 0.0, |_| Ok(1.0)).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn threshold_is_inclusive() {
        let (n, _) = find_critical_dim_with(64, 0.0, |n| Ok(if n >= 20 { 0.5 } else { 0.49 })).unwrap();
        assert_eq!(n, 20);
    }

    #[test]
    fn unseparable_top_errors() {
        let r = find_critical_dim_with(10, top_check_slack(1000), |_| Ok(0.2));
        assert!(matches!(r, Err(Error::Unseparable { dim: 10, .. })));
    }

    #[test]
    fn top_within_sampling_error_ends_at_n_max() {
        let slack = top_check_slack(1000);
        assert!((slack - 2.0 * (0.25f64 / 1000.0).sqrt()).abs() < 1e-15);
        let (n, _) = find_critical_dim_with(60, slack, |n| Ok(if n == 60 { 0.494 } else { 0.3 })).unwrap();
        assert_eq!(n, 60);
        assert!(find_critical_dim_with(60, slack, |_| Ok(0.5 - slack - 1e-9)).is_err());
    }

    #[test]
    fn grid_is_sorted_and_bounded() {
        let g = geometric_grid(500, 24);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 500);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.len() >= 20);
    }

    #[test]
    fn deficit_sum_of_step_curve() {
        let curve = ProbCurve {
            entries: (1..=10).map(|n| ProbEntry { n, p_hat: if n >= 4 { 1.0 } else { 0.0 }, trials: 1 }).collect(),
        };
        assert_eq!(deficit_sum(&curve, 10), 3.0);
    }
}
