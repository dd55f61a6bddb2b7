//! Nonnegative least squares, cone projection and strict separability.
//!
//! The NNLS solver is a Lawson–Hanson active-set method on the Gram form.
//! The passive-set Cholesky factor is grown by one column per pivot,
//! downdated with Givens rotations on removal, and rebuilt every
//! [`REFACTOR_EVERY`] pivots.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Relative threshold on ‖Gᵀμ‖ below which a hull contains the origin.
pub const SEPARABILITY_TOL: f64 = 1e-10;
pub const REFACTOR_EVERY: usize = 50;
const DEPENDENCE_TOL: f64 = 1e-12;

/// Gram-form access to min_{λ≥0} ‖b − Σ_k λ_k a_k‖².
pub trait NnlsSystem {
    fn n_atoms(&self) -> usize;
    /// ⟨a_i, a_j⟩
    fn gram(&self, i: usize, j: usize) -> f64;
    /// ⟨a_i, b⟩
    fn rhs(&self, i: usize) -> f64;
    /// Fills `out[k] = ⟨a_k, b − Σ_{j∈support} λ_j a_j⟩`.
    fn gradient(&self, lambda: &[f64], support: &[usize], out: &mut [f64]);
    /// Reference magnitude ‖b‖·max_k ‖a_k‖ for relative tolerances.
    fn scale(&self) -> f64;
}

/// Atoms given explicitly as rows of a K×N matrix.
pub struct RowSystem<'a> {
    a: ArrayView2<'a, f64>,
    b: ArrayView1<'a, f64>,
    c: Array1<f64>,
    scale: f64,
}

impl<'a> RowSystem<'a> {
    pub fn new(a: ArrayView2<'a, f64>, b: ArrayView1<'a, f64>) -> Self {
        let c = a.dot(&b);
        let max_norm = a.rows().into_iter().map(|r| r.dot(&r)).fold(0.0, f64::max).sqrt();
        let scale = b.dot(&b).sqrt() * max_norm;
        RowSystem { a, b, c, scale }
    }
}

impl NnlsSystem for RowSystem<'_> {
    fn n_atoms(&self) -> usize {
        self.a.nrows()
    }
    fn gram(&self, i: usize, j: usize) -> f64 {
        self.a.row(i).dot(&self.a.row(j))
    }
    fn rhs(&self, i: usize) -> f64 {
        self.c[i]
    }
    fn gradient(&self, lambda: &[f64], support: &[usize], out: &mut [f64]) {
        let mut r = self.b.to_owned();
        for &j in support {
            r.scaled_add(-lambda[j], &self.a.row(j));
        }
        let w = self.a.dot(&r);
        out.copy_from_slice(w.as_slice().unwrap());
    }
    fn scale(&self) -> f64 {
        self.scale
    }
}

/// Atoms `s_k · p_k` described by a precomputed Gram of the `p_k`, per-atom
/// signs `s_k ∈ {±1}` and unsigned right-hand sides `⟨p_k, b⟩`.
pub struct SignedGramSystem<'a> {
    gram: ArrayView2<'a, f64>,
    signs: Vec<f64>,
    c: Vec<f64>,
    scale: f64,
}

impl<'a> SignedGramSystem<'a> {
    pub fn new(gram: ArrayView2<'a, f64>, signs: Vec<f64>, unsigned_rhs: &[f64], b_norm: f64) -> Self {
        let c = signs.iter().zip(unsigned_rhs).map(|(s, v)| s * v).collect();
        let max_norm = gram.diag().iter().copied().fold(0.0, f64::max).sqrt();
        SignedGramSystem { gram, signs, c, scale: b_norm * max_norm }
    }
}

impl NnlsSystem for SignedGramSystem<'_> {
    fn n_atoms(&self) -> usize {
        self.signs.len()
    }
    fn gram(&self, i: usize, j: usize) -> f64 {
        self.signs[i] * self.signs[j] * self.gram[[i, j]]
    }
    fn rhs(&self, i: usize) -> f64 {
        self.c[i]
    }
    fn gradient(&self, lambda: &[f64], support: &[usize], out: &mut [f64]) {
        out.copy_from_slice(&self.c);
        for &j in support {
            let coef = lambda[j] * self.signs[j];
            if coef == 0.0 {
                continue;
            }
            let row = self.gram.row(j);
            for ((o, g), s) in out.iter_mut().zip(row.iter()).zip(&self.signs) {
                *o -= coef * s * g;
            }
        }
    }
    fn scale(&self) -> f64 {
        self.scale
    }
}

/// Upper-triangular Cholesky factor of the passive Gram, stored by columns.
struct PassiveFactor {
    cols: Vec<Vec<f64>>,
    idx: Vec<usize>,
}

impl PassiveFactor {
    fn new() -> Self {
        PassiveFactor { cols: Vec::new(), idx: Vec::new() }
    }

    fn len(&self) -> usize {
        self.idx.len()
    }

    /// Appends atom `j`; returns false (leaving the factor unchanged) if it
    /// is numerically dependent on the current passive atoms.
    fn try_push<S: NnlsSystem + ?Sized>(&mut self, sys: &S, j: usize) -> bool {
        let p = self.len();
        let mut col = Vec::with_capacity(p + 1);
        for i in 0..p {
            let mut v = sys.gram(self.idx[i], j);
            for (l, &cl) in col.iter().enumerate() {
                v -= self.cols[i][l] * cl;
            }
            col.push(v / self.cols[i][i]);
        }
        let gjj = sys.gram(j, j);
        let d2 = gjj - col.iter().map(|x| x * x).sum::<f64>();
        if !(d2 > DEPENDENCE_TOL * gjj) {
            return false;
        }
        col.push(d2.sqrt());
        self.cols.push(col);
        self.idx.push(j);
        true
    }

    /// Removes the atom at position `pos` and restores triangularity.
    fn remove(&mut self, pos: usize) {
        self.cols.remove(pos);
        self.idx.remove(pos);
        for k in pos..self.cols.len() {
            let (a, b) = (self.cols[k][k], self.cols[k][k + 1]);
            let r = a.hypot(b);
            let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
            self.cols[k][k] = r;
            self.cols[k].pop();
            for col in self.cols.iter_mut().skip(k + 1) {
                let (x, y) = (col[k], col[k + 1]);
                col[k] = c * x + s * y;
                col[k + 1] = -s * x + c * y;
            }
        }
    }

    /// Solves RᵀR z = rhs.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let p = self.len();
        let mut y = vec![0.0; p];
        for i in 0..p {
            let mut v = rhs[i];
            for (l, yl) in y.iter().enumerate().take(i) {
                v -= self.cols[i][l] * yl;
            }
            y[i] = v / self.cols[i][i];
        }
        let mut z = vec![0.0; p];
        for i in (0..p).rev() {
            let mut v = y[i];
            for l in i + 1..p {
                v -= self.cols[l][i] * z[l];
            }
            z[i] = v / self.cols[i][i];
        }
        z
    }

    /// Rebuilds the factor from scratch; returns atoms dropped as dependent.
    fn refactor<S: NnlsSystem + ?Sized>(&mut self, sys: &S) -> Vec<usize> {
        let idx = std::mem::take(&mut self.idx);
        self.cols.clear();
        idx.into_iter().filter(|&j| !self.try_push(sys, j)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub lambda: Vec<f64>,
    /// Atoms with positive weight, in the order they entered.
    pub passive: Vec<usize>,
    pub iterations: usize,
    /// max over atoms of the KKT violation, relative to the system scale.
    pub kkt_residual: f64,
}

/// Lawson–Hanson active-set NNLS. `tol` is relative to [`NnlsSystem::scale`];
/// the iteration cap is 50·K.
pub fn solve_nnls<S: NnlsSystem + ?Sized>(sys: &S, tol: f64) -> Result<NnlsSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let k = sys.n_atoms();
    let cap = 50 * k.max(1);
    let mut lambda = vec![0.0; k];
    let scale = sys.scale();
    if k == 0 || scale == 0.0 {
        return Ok(NnlsSolution { lambda, passive: vec![], iterations: 0, kkt_residual: 0.0 });
    }
    let thresh = tol * scale;
    let mut passive = vec![false; k];
    let mut rejected = vec![false; k];
    let mut factor = PassiveFactor::new();
    let mut w = vec![0.0; k];
    sys.gradient(&lambda, &[], &mut w);
    let mut iterations = 0;
    let mut pivots = 0;

    loop {
        let mut best: Option<usize> = None;
        for j in 0..k {
            if !passive[j] && !rejected[j] && w[j] > thresh && best.is_none_or(|b| w[j] > w[b]) {
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        iterations += 1;
        if iterations > cap {
            return Err(Error::NoConvergence { iterations, residual: w[j] / scale });
        }
        if !factor.try_push(sys, j) {
            rejected[j] = true;
            continue;
        }
        passive[j] = true;
        pivots += 1;
        if pivots >= REFACTOR_EVERY {
            for d in factor.refactor(sys) {
                passive[d] = false;
                lambda[d] = 0.0;
                rejected[d] = true;
            }
            pivots = 0;
        }

        let mut first = true;
        while factor.len() > 0 {
            let rhs: Vec<f64> = factor.idx.iter().map(|&i| sys.rhs(i)).collect();
            let z = factor.solve(&rhs);
            if z.iter().all(|&v| v > 0.0) {
                for (pos, &i) in factor.idx.iter().enumerate() {
                    lambda[i] = z[pos];
                }
                break;
            }
            iterations += 1;
            if iterations > cap {
                return Err(Error::NoConvergence { iterations, residual: f64::NAN });
            }
            let mut alpha = f64::INFINITY;
            let mut arg = 0;
            for (pos, &i) in factor.idx.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let a = lambda[i] / (lambda[i] - z[pos]);
                    if a < alpha {
                        alpha = a;
                        arg = pos;
                    }
                }
            }
            for (pos, &i) in factor.idx.iter().enumerate() {
                lambda[i] += alpha * (z[pos] - lambda[i]);
            }
            lambda[factor.idx[arg]] = 0.0;
            let drop: Vec<usize> = (0..factor.len()).filter(|&pos| lambda[factor.idx[pos]] <= 0.0).collect();
            for &pos in drop.iter().rev() {
                let i = factor.idx[pos];
                lambda[i] = 0.0;
                passive[i] = false;
                factor.remove(pos);
                pivots += 1;
                if first && i == j && alpha == 0.0 {
                    rejected[j] = true;
                }
            }
            first = false;
        }
        if passive[j] {
            rejected.iter_mut().for_each(|r| *r = false);
        }
        sys.gradient(&lambda, &factor.idx, &mut w);
    }

    let kkt = (0..k)
        .map(|i| if passive[i] { w[i].abs() } else { w[i].max(0.0) })
        .fold(0.0, f64::max)
        / scale;
    Ok(NnlsSolution { lambda, passive: factor.idx.clone(), iterations, kkt_residual: kkt })
}

/// λ* = argmin_{λ≥0} ‖b − Aᵀλ‖² for a K×N matrix `a`.
pub fn nnls(a: ArrayView2<f64>, b: ArrayView1<f64>, tol: f64) -> Result<Array1<f64>> {
    if a.ncols() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), found: b.len() });
    }
    let sys = RowSystem::new(a, b);
    Ok(Array1::from(solve_nnls(&sys, tol)?.lambda))
}

/// Projection of a probe onto the cone generated by signed points.
#[derive(Clone, Debug)]
pub struct ConeProjectionProblem {
    pub probe: Array1<f64>,
    pub signed_points: Array2<f64>,
    pub row_owner: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ConeProjectionSolution {
    /// Minimizer of ½‖x‖² − tᵀx subject to Gx ≤ 0.
    pub x_star: Array1<f64>,
    pub dual: Array1<f64>,
    /// Projection of t onto cone(rows of G); equals t − x_star.
    pub cone_proj: Array1<f64>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

pub fn project_to_polar_cone(problem: &ConeProjectionProblem, tol: f64) -> Result<ConeProjectionSolution> {
    let g = &problem.signed_points;
    let t = &problem.probe;
    if g.ncols() != t.len() {
        return Err(Error::DimensionMismatch { expected: g.ncols(), found: t.len() });
    }
    if !problem.row_owner.is_empty() && problem.row_owner.len() != g.nrows() {
        return Err(Error::DimensionMismatch { expected: g.nrows(), found: problem.row_owner.len() });
    }
    if let Some(r) = g.rows().into_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
        return Err(Error::Degenerate(format!("row {r} of the signed point matrix is zero")));
    }
    let sys = RowSystem::new(g.view(), t.view());
    let sol = solve_nnls(&sys, tol)?;
    let dual = Array1::from(sol.lambda);
    let cone_proj = g.t().dot(&dual);
    let x_star = t - &cone_proj;
    let mut active_set: Vec<usize> = (0..dual.len()).filter(|&k| dual[k] > 0.0).collect();
    active_set.sort_unstable();
    Ok(ConeProjectionSolution { x_star, dual, cone_proj, active_set, iterations: sol.iterations })
}

/// Outcome of a strict-separability test.
#[derive(Clone, Debug)]
pub enum Separability {
    /// `G θ > 0` componentwise.
    Separable { witness: Array1<f64> },
    /// Convex weights μ with ‖Gᵀμ‖ = `residual`.
    NotSeparable { mu: Array1<f64>, residual: f64 },
}

impl Separability {
    pub fn is_separable(&self) -> bool {
        matches!(self, Separability::Separable { .. })
    }
}

/// Tests whether some θ has `G θ > 0`, i.e. whether 0 lies outside conv(rows).
///
/// Solves the least-distance problem min ‖θ‖ s.t. Gθ ≥ 1 through its NNLS dual
/// on the augmented atoms (g_k, 1). `tol` is relative to the largest row norm.
pub fn strictly_separable(g: ArrayView2<f64>, tol: f64) -> Result<Separability> {
    let (k, n) = g.dim();
    if k == 0 {
        return Err(Error::Empty("no rows".into()));
    }
    let mut e = Array2::<f64>::ones((k, n + 1));
    e.slice_mut(ndarray::s![.., ..n]).assign(&g);
    let mut f = Array1::<f64>::zeros(n + 1);
    f[n] = 1.0;
    let sys = RowSystem::new(e.view(), f.view());
    let sol = solve_nnls(&sys, DEFAULT_TOL.min(tol.max(1e-14) * 100.0))?;
    let u = Array1::from(sol.lambda);
    let gu = g.t().dot(&u);
    let total = u.sum();
    let rn = 1.0 - total;
    let max_row = g.map_axis(Axis(1), |r| r.dot(&r).sqrt()).fold(0.0, |a: f64, &b| a.max(b));
    if rn > 0.0 {
        let theta = &gu / rn;
        let margin = g.dot(&theta).fold(f64::INFINITY, |a: f64, &b| a.min(b));
        let tnorm = theta.dot(&theta).sqrt();
        if margin > tol * max_row * tnorm {
            return Ok(Separability::Separable { witness: theta });
        }
    }
    if total > 0.0 {
        let mu = &u / total;
        let r = g.t().dot(&mu);
        let residual = r.dot(&r).sqrt();
        Ok(Separability::NotSeparable { mu, residual })
    } else {
        Ok(Separability::NotSeparable { mu: Array1::from_elem(k, 1.0 / k as f64), residual: f64::NAN })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gaussian_matrix;
    use crate::rng::RngStream;
    use ndarray::array;

    fn objective(a: &Array2<f64>, b: &Array1<f64>, l: &Array1<f64>) -> f64 {
        let r = b - &a.t().dot(l);
        r.dot(&r)
    }

    /// Exhaustive oracle: best unconstrained least squares over every support
    /// whose solution is nonnegative.
    fn brute_force_nnls(a: &Array2<f64>, b: &Array1<f64>) -> f64 {
        let k = a.nrows();
        let mut best = b.dot(b);
        for mask in 1u32..(1 << k) {
            let sel: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
            let sub = a.select(Axis(0), &sel);
            let m = nalgebra::DMatrix::from_fn(sel.len(), sel.len(), |i, j| sub.row(i).dot(&sub.row(j)));
            let rhs = nalgebra::DVector::from_iterator(sel.len(), sel.iter().map(|&i| a.row(i).dot(b)));
            let Some(ch) = m.cholesky() else { continue };
            let z = ch.solve(&rhs);
            if z.iter().all(|&v| v >= 0.0) {
                let mut l = Array1::zeros(k);
                for (p, &i) in sel.iter().enumerate() {
                    l[i] = z[p];
                }
                best = best.min(objective(a, b, &l));
            }
        }
        best
    }

    #[test]
    fn clamp_at_zero() {
        let a = Array2::eye(2);
        let l = nnls(a.view(), array![1.0, -1.0].view(), DEFAULT_TOL).unwrap();
        assert_eq!(l, array![1.0, 0.0]);
    }

    #[test]
    fn feasible_target_zero_residual() {
        let mut rng = RngStream::new(1, 0).rng();
        let a = gaussian_matrix(4, 9, 1.0, &mut rng);
        let l0 = array![0.5, 0.0, 2.0, 1.0];
        let b = a.t().dot(&l0);
        let l = nnls(a.view(), b.view(), DEFAULT_TOL).unwrap();
        assert!(objective(&a, &b, &l).sqrt() <= 1e-8);
    }

    #[test]
    fn random_3x5_matches_enumeration() {
        let mut rng = RngStream::new(2, 0).rng();
        for _ in 0..50 {
            let a = gaussian_matrix(3, 5, 1.0, &mut rng);
            let b = gaussian_matrix(1, 5, 1.0, &mut rng).row(0).to_owned();
            let l = nnls(a.view(), b.view(), DEFAULT_TOL).unwrap();
            assert!(l.iter().all(|&v| v >= 0.0));
            assert!((objective(&a, &b, &l) - brute_force_nnls(&a, &b)).abs() <= 1e-10);
        }
    }

    #[test]
    fn duplicated_rows_and_wide_systems() {
        let mut rng = RngStream::new(3, 0).rng();
        let base = gaussian_matrix(6, 4, 1.0, &mut rng);
        let a = ndarray::concatenate![Axis(0), base, base];
        let b = gaussian_matrix(1, 4, 1.0, &mut rng).row(0).to_owned();
        let l = nnls(a.view(), b.view(), DEFAULT_TOL).unwrap();
        assert!((objective(&a, &b, &l) - brute_force_nnls(&base, &b)).abs() <= 1e-10);
    }

    #[test]
    fn downdate_keeps_factor_consistent() {
        let mut rng = RngStream::new(4, 0).rng();
        let a = gaussian_matrix(6, 8, 1.0, &mut rng);
        let b = Array1::zeros(8);
        let sys = RowSystem::new(a.view(), b.view());
        let mut f = PassiveFactor::new();
        for j in 0..6 {
            assert!(f.try_push(&sys, j));
        }
        f.remove(2);
        f.remove(0);
        let p = f.len();
        for i in 0..p {
            for j in 0..p {
                let rtr: f64 = (0..=i.min(j)).map(|l| f.cols[i][l] * f.cols[j][l]).sum();
                assert!((rtr - sys.gram(f.idx[i], f.idx[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn signed_gram_matches_rows() {
        let mut rng = RngStream::new(5, 0).rng();
        let p = gaussian_matrix(7, 5, 1.0, &mut rng);
        let t = gaussian_matrix(1, 5, 1.0, &mut rng).row(0).to_owned();
        let signs = vec![1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        let mut g = p.clone();
        for (mut r, s) in g.rows_mut().into_iter().zip(&signs) {
            r *= *s;
        }
        let gram = p.dot(&p.t());
        let rhs: Vec<f64> = p.dot(&t).to_vec();
        let sys = SignedGramSystem::new(gram.view(), signs, &rhs, t.dot(&t).sqrt());
        let l1 = solve_nnls(&sys, DEFAULT_TOL).unwrap().lambda;
        let l2 = nnls(g.view(), t.view(), DEFAULT_TOL).unwrap();
        for (x, y) in l1.iter().zip(l2.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    fn problem(t: Array1<f64>, g: Array2<f64>) -> ConeProjectionProblem {
        let k = g.nrows();
        ConeProjectionProblem { probe: t, signed_points: g, row_owner: vec![0; k] }
    }

    #[test]
    fn probe_inside_cone() {
        let s = project_to_polar_cone(&problem(array![1.0, 0.0], array![[1.0, 0.0]]), DEFAULT_TOL).unwrap();
        assert_eq!(s.cone_proj, array![1.0, 0.0]);
        assert_eq!(s.x_star, array![0.0, 0.0]);
        assert_eq!(s.dual, array![1.0]);
    }

    #[test]
    fn probe_inside_polar_cone() {
        let s = project_to_polar_cone(&problem(array![-1.0, 0.0], array![[1.0, 0.0]]), DEFAULT_TOL).unwrap();
        assert_eq!(s.cone_proj, array![0.0, 0.0]);
        assert_eq!(s.x_star, array![-1.0, 0.0]);
        assert_eq!(s.dual, array![0.0]);
    }

    #[test]
    fn diagonal_probe() {
        // Independent check: minimizing ½‖x‖² − tᵀx over x₁ ≤ 0 separates per
        // coordinate, giving x = (min(t₁, 0), t₂).
        let s = project_to_polar_cone(&problem(array![1.0, 1.0], array![[1.0, 0.0]]), DEFAULT_TOL).unwrap();
        assert_eq!(s.cone_proj, array![1.0, 0.0]);
        assert_eq!(s.x_star, array![0.0, 1.0]);
        assert!((s.cone_proj.dot(&s.cone_proj) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_row_rejected() {
        let r = project_to_polar_cone(&problem(array![1.0, 1.0], array![[1.0, 0.0], [0.0, 0.0]]), DEFAULT_TOL);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn orthant_is_separable() {
        match strictly_separable(array![[1.0, 0.0], [0.0, 1.0]].view(), SEPARABILITY_TOL).unwrap() {
            Separability::Separable { witness } => {
                assert!((witness[0] - 1.0).abs() < 1e-12 && (witness[1] - 1.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn opposite_rows_not_separable() {
        match strictly_separable(array![[1.0, 0.0], [-1.0, 0.0]].view(), SEPARABILITY_TOL).unwrap() {
            Separability::NotSeparable { mu, residual } => {
                assert!((mu[0] - 0.5).abs() < 1e-12 && (mu[1] - 0.5).abs() < 1e-12);
                assert!(residual < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn origin_on_hull_edge_not_separable() {
        let g = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];
        assert!(!strictly_separable(g.view(), SEPARABILITY_TOL).unwrap().is_separable());
    }

    #[test]
    fn few_gaussian_rows_always_separable() {
        let mut rng = RngStream::new(6, 0).rng();
        for k in 1..=20 {
            let g = gaussian_matrix(k, 20, 1.0, &mut rng);
            let s = strictly_separable(g.view(), SEPARABILITY_TOL).unwrap();
            let Separability::Separable { witness } = s else { panic!("k={k}") };
            assert!(g.dot(&witness).iter().all(|&m| m > 0.0));
        }
    }
}
