//! Gaussian quadrature rules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and weights for expectations under N(0, 1); weights sum to 1.
#[derive(Clone, Debug)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orthonormal probabilists' Hermite values ψ_0..ψ_n at x.
fn hermite_orthonormal(n: usize, x: f64) -> Vec<f64> {
    let mut psi = vec![0.0; n + 1];
    psi[0] = 1.0;
    if n > 0 {
        psi[1] = x;
    }
    for k in 1..n {
        psi[k + 1] = (x * psi[k] - (k as f64).sqrt() * psi[k - 1]) / ((k + 1) as f64).sqrt();
    }
    psi
}

impl NormalRule {
    /// Gauss–Hermite rule (Golub–Welsch, Newton-polished nodes,
    /// Christoffel weights).
    pub fn hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("quadrature order must be positive".into()));
        }
        let jac = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);
        let mut weights = Vec::with_capacity(order);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let psi = hermite_orthonormal(order, *x);
                let step = psi[order] / ((order as f64).sqrt() * psi[order - 1]);
                if step.is_finite() {
                    *x -= step;
                }
            }
            // Far tail nodes overflow the sum and get weight 0, as they should.
            let psi = hermite_orthonormal(order - 1, *x);
            weights.push(1.0 / psi.iter().map(|p| p * p).sum::<f64>());
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        // Symmetrize to remove round-off asymmetry.
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Ok(NormalRule { nodes, weights })
    }

    /// Composite Gauss–Legendre rule on [−12, 12] with a panel edge at 0,
    /// for integrands with a kink at the origin; `order / 4` nodes per panel.
    pub fn panels(order: usize) -> Result<Self> {
        const HALF_WIDTH: f64 = 12.0;
        const PANELS: usize = 16;
        let per = (order / 4).max(16);
        let (gx, gw) = gauss_legendre(per)?;
        let h = 2.0 * HALF_WIDTH / PANELS as f64;
        let mut nodes = Vec::with_capacity(per * PANELS);
        let mut weights = Vec::with_capacity(per * PANELS);
        for p in 0..PANELS {
            let a = -HALF_WIDTH + p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                let t = a + 0.5 * h * (x + 1.0);
                nodes.push(t);
                weights.push(0.5 * h * w * (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt());
            }
        }
        Ok(NormalRule { nodes, weights })
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::InvalidArgument("quadrature order must be positive".into()));
    }
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        return Ok((vec![0.0], vec![2.0]));
    }
    Ok((nodes, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let r = NormalRule::hermite(64).unwrap();
        assert!((r.expect(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!(r.expect(|x| x).abs() < 1e-14);
        assert!((r.expect(|x| x * x) - 1.0).abs() < 1e-13);
        assert!((r.expect(|x| x.powi(4)) - 3.0).abs() < 1e-12);
        assert!((r.expect(|x| x.powi(6)) - 15.0).abs() < 1e-11);
    }

    #[test]
    fn hermite_smooth_function() {
        // E[cos G] = e^{-1/2}
        let r = NormalRule::hermite(128).unwrap();
        assert!((r.expect(f64::cos) - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10).unwrap();
        let int = |f: &dyn Fn(f64) -> f64| x.iter().zip(&w).map(|(&a, &b)| b * f(a)).sum::<f64>();
        assert!((int(&|_| 1.0) - 2.0).abs() < 1e-14);
        assert!((int(&|t| t.powi(18)) - 2.0 / 19.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1).unwrap();
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn panels_handle_kinks() {
        let r = NormalRule::panels(128).unwrap();
        assert!((r.expect(|x| x.max(0.0)) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
        assert!((r.expect(|x| x.abs().powi(3)) - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }
}
