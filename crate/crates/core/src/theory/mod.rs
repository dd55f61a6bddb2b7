//! Closed-form capacity and accuracy for a two-layer network after one
//! gradient step, in the proportional limit.

pub mod cover;
pub mod mp;
pub mod one_step;
pub mod quadrature;

use serde::{Deserialize, Serialize};


pub use cover::cover_prob;
pub use mp::mp_expectation;
pub use quadrature::NormalRule;

use crate::activation::Activation;
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 256;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// E_Z[(a − Z)₊²] = (1 + a²)Φ(a) + aφ(a).
pub fn hinge_sq(a: f64) -> f64 {
    (1.0 + a * a) * normal_cdf(a) + a * normal_pdf(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationMoments {
    /// E[G σ(G)]
    pub gamma1: f64,
    /// E[σ(G)²] − γ₁²
    pub gamma2_sq: f64,
    /// Residual variance of the Gaussian-equivalent features, taken as γ₂².
    pub gamma_star_sq: f64,
}

/// Moments by quadrature; kinked activations use a panel rule split at 0.
pub fn activation_moments(act: Activation, order: usize) -> Result<ActivationMoments> {
    let rule = if act.has_kink() { NormalRule::panels(order)? } else { NormalRule::hermite(order)? };
    let mut bad = false;
    let mut f = |x: f64| {
        let v = act.eval(x);
        bad |= !v.is_finite();
        v
    };
    let gamma1 = rule.expect(|x| x * f(x));
    let second = rule.expect(|x| f(x).powi(2));
    if bad {
        return Err(Error::Numerical("activation is not finite on quadrature nodes".into()));
    }
    let gamma2_sq = (second - gamma1 * gamma1).max(0.0);
    Ok(ActivationMoments { gamma1, gamma2_sq, gamma_star_sq: gamma2_sq })
}

/// Teacher link F: R → [0, 1], the probability of label +1 given ⟨β*, x⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LabelFunction {
    /// 1 / (1 + e^{−slope·x})
    Logistic { slope: f64 },
    Constant { value: f64 },
    /// Gaussian smoothing of `base`: E_{G'}[base(√(1−τ²)x + τG')].
    Smoothed { base: Box<LabelFunction>, tau: f64, order: usize },
}

impl Default for LabelFunction {
    fn default() -> Self {
        LabelFunction::Logistic { slope: 4.0 }
    }
}

impl LabelFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            LabelFunction::Logistic { slope } => 1.0 / (1.0 + (-slope * x).exp()),
            LabelFunction::Constant { value } => *value,
            LabelFunction::Smoothed { base, tau, order } => {
                let rule = hermite_cached(*order);
                let c = (1.0 - tau * tau).max(0.0).sqrt();
                rule.expect(|g| base.eval(c * x + tau * g))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LabelFunction::Logistic { slope } if !slope.is_finite() => {
                Err(Error::InvalidArgument("logistic slope must be finite".into()))
            }
            LabelFunction::Constant { value } if !(0.0..=1.0).contains(value) => {
                Err(Error::InvalidArgument("constant label probability must lie in [0, 1]".into()))
            }
            LabelFunction::Smoothed { base, tau, .. } => {
                if !(0.0..=1.0).contains(tau) {
                    return Err(Error::InvalidArgument("tau must lie in [0, 1]".into()));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }
}

fn hermite_cached(order: usize) -> std::sync::Arc<NormalRule> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NormalRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(order)
        .or_insert_with(|| Arc::new(NormalRule::hermite(order.max(1)).expect("positive order")))
        .clone()
}

/// f_τ(x) = E_{G'}[F(√(1−τ²)x + τG')].
pub fn effective_label_fn(f: &LabelFunction, tau: f64) -> Result<LabelFunction> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(LabelFunction::Smoothed { base: Box::new(f.clone()), tau, order: DEFAULT_ORDER })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussEquivParams {
    pub psi1: f64,
    pub psi2: f64,
    pub eta: f64,
    pub gamma1: f64,
    pub gamma2_sq: f64,
    pub gamma_star_sq: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub tau0_sq: f64,
    pub tau_delta_sq: f64,
    pub tau: f64,
}

/// (θ₁, θ₂, θ₃, θ₄).
pub fn theta_params(
    moments: &ActivationMoments,
    psi1: f64,
    psi2: f64,
    f: &LabelFunction,
    rule: &NormalRule,
) -> Result<(f64, f64, f64, f64)> {
    if !(psi2 > 0.0) || !psi2.is_finite() {
        return Err(Error::InvalidArgument(format!("psi2 must be positive, got {psi2}")));
    }
    let (g1s, g2s) = (moments.gamma1.powi(2), moments.gamma2_sq);
    if g2s == 0.0 && psi1 > 1.0 {
        return Err(Error::Domain("theta1 diverges: zero nonlinear variance with an atom at 0".into()));
    }
    let theta1 = mp::mp_expectation(|x| g1s / (g1s * x + g2s), psi1, mp::DEFAULT_MP_ORDER)?;
    let theta2 = psi1 * mp::mp_expectation(|x| g1s * x / (g1s * x + g2s), psi1, mp::DEFAULT_MP_ORDER)?;
    let theta3 = rule.expect(|g| g * (2.0 * f.eval(g) - 1.0));
    let theta4 = 1.0 / psi2 + theta3 * theta3;
    Ok((theta1, theta2, theta3, theta4))
}

/// (τ₀², τ_Δ², τ).
pub fn tau_of(eta: f64, theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> Result<(f64, f64, f64)> {
    let tau0_sq = 1.0 - theta2;
    let e2 = eta * eta;
    let tau_delta_sq = e2 * theta1 * (1.0 - theta2).powi(2) * theta3 * theta3 / (1.0 + e2 * theta1 * (1.0 - theta2) * theta4);
    let t2 = tau0_sq - tau_delta_sq;
    if t2 < -1e-12 {
        return Err(Error::Numerical(format!("tau² = {t2} is negative")));
    }
    Ok((tau0_sq, tau_delta_sq, t2.max(0.0).sqrt()))
}

pub fn gauss_equiv_params(
    psi1: f64,
    psi2: f64,
    eta: f64,
    f: &LabelFunction,
    act: Activation,
    order: usize,
) -> Result<GaussEquivParams> {
    let moments = activation_moments(act, order)?;
    let rule = NormalRule::hermite(order)?;
    let (theta1, theta2, theta3, theta4) = theta_params(&moments, psi1, psi2, f, &rule)?;
    let (tau0_sq, tau_delta_sq, tau) = tau_of(eta, theta1, theta2, theta3, theta4)?;
    Ok(GaussEquivParams {
        psi1,
        psi2,
        eta,
        gamma1: moments.gamma1,
        gamma2_sq: moments.gamma2_sq,
        gamma_star_sq: moments.gamma_star_sq,
        theta1,
        theta2,
        theta3,
        theta4,
        tau0_sq,
        tau_delta_sq,
        tau,
    })
}

/// Golden-section minimization of a convex function over R, widening the
/// bracket [−L, L] until the minimizer is interior.
fn minimize_convex(f: impl Fn(f64) -> f64, xtol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut half = 1.0;
    while half <= 1e6 {
        let (mut a, mut b) = (-half, half);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > xtol {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = f(d);
            }
        }
        let x = 0.5 * (a + b);
        if x.abs() < 0.9 * half {
            return Ok((x, f(x)));
        }
        half *= 8.0;
    }
    Err(Error::Numerical("minimizer bracket failure".into()))
}

/// Storage capacity of post-step features: the reciprocal of
/// min_c E[(−cYG − Z)₊²] with Y ~ f_τ(G).
pub fn capacity_from_params(params: &GaussEquivParams, f: &LabelFunction, order: usize) -> Result<f64> {
    let rule = NormalRule::hermite(order)?;
    let ft = effective_label_fn(f, params.tau)?;
    let probs: Vec<f64> = rule.nodes.iter().map(|&g| ft.eval(g)).collect();
    let objective = |c: f64| -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .zip(&probs)
            .map(|((&g, &w), &p)| w * (p * hinge_sq(-c * g) + (1.0 - p) * hinge_sq(c * g)))
            .sum()
    };
    let (_, v) = minimize_convex(objective, 1e-8)?;
    Ok(1.0 / v)
}

pub fn capacity_theory(psi1: f64, psi2: f64, eta: f64, f: &LabelFunction, act: Activation) -> Result<f64> {
    let p = gauss_equiv_params(psi1, psi2, eta, f, act, DEFAULT_ORDER)?;
    capacity_from_params(&p, f, DEFAULT_ORDER)
}

/// Test accuracy E[Φ(κ Y G)] with κ = ηγ₁²θ₃ / √(η²γ₁⁴/ψ₂ + γ₁² + γ*²).
pub fn accuracy_from_params(params: &GaussEquivParams, f: &LabelFunction, order: usize) -> Result<f64> {
    let rule = NormalRule::hermite(order)?;
    let g1s = params.gamma1 * params.gamma1;
    let denom = (params.eta.powi(2) * g1s * g1s / params.psi2 + g1s + params.gamma_star_sq).sqrt();
    if !(denom > 0.0) {
        return Err(Error::Domain("accuracy denominator vanishes".into()));
    }
    let kappa = params.eta * g1s * params.theta3 / denom;
    Ok(rule.expect(|g| {
        let p = f.eval(g);
        p * normal_cdf(kappa * g) + (1.0 - p) * normal_cdf(-kappa * g)
    }))
}

pub fn accuracy_theory(psi1: f64, psi2: f64, eta: f64, f: &LabelFunction, act: Activation) -> Result<f64> {
    let p = gauss_equiv_params(psi1, psi2, eta, f, act, DEFAULT_ORDER)?;
    accuracy_from_params(&p, f, DEFAULT_ORDER)
}
