//! Expectations under the limiting spectrum of W₀W₀ᵀ.
//!
//! W₀ is N×d with i.i.d. N(0, 1/N) entries and ψ₁ = N/d. The spectral law
//! is Y/ψ₁ with Y Marchenko–Pastur of ratio ψ₁ and unit variance, plus an
//! atom at 0 of mass 1 − 1/ψ₁ when ψ₁ > 1.

use super::quadrature::gauss_legendre;
use crate::error::{Error, Result};

pub const DEFAULT_MP_ORDER: usize = 256;

/// E[g(X)] for X distributed as the spectrum above.
pub fn mp_expectation(g: impl Fn(f64) -> f64, psi1: f64, order: usize) -> Result<f64> {
    if !(psi1 > 0.0) || !psi1.is_finite() {
        return Err(Error::InvalidArgument(format!("psi1 must be positive, got {psi1}")));
    }
    let lam = psi1;
    let s = lam.sqrt();
    let a = (1.0 - s) * (1.0 - s);
    let h = 2.0 * s;
    let (x, w) = gauss_legendre(order)?;
    // y = a + 2h cos²(θ/2) over θ ∈ (0, π); density × Jacobian becomes
    // h² sin²θ / (2π λ y), written without cancellation near y = 0.
    let mut cont = 0.0;
    for (&u, &wu) in x.iter().zip(&w) {
        let theta = 0.5 * std::f64::consts::PI * (u + 1.0);
        let (sh, ch) = (0.5 * theta).sin_cos();
        let y = a + 2.0 * h * ch * ch;
        let sin2 = 4.0 * sh * sh * ch * ch;
        let dens = h * h * sin2 / (2.0 * std::f64::consts::PI * lam * y);
        cont += 0.5 * std::f64::consts::PI * wu * dens * g(y / psi1);
    }
    let atom = (1.0 - 1.0 / psi1).max(0.0);
    let val = cont + if atom > 0.0 { atom * g(0.0) } else { 0.0 };
    if !val.is_finite() {
        return Err(Error::Numerical("Marchenko-Pastur expectation is not finite".into()));
    }
    Ok(val)
}
