//! Finite-size check: one full-batch gradient step on the first layer of a
//! random two-layer network, then test accuracy and features.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabelFunction;
use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::model::{build_ensemble, gaussian_matrix, gaussian_vector, ManifoldEnsemble};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepConfig {
    /// Input dimension.
    pub d: usize,
    /// Width ratio N/d.
    pub psi1: f64,
    /// Sample ratio P/d.
    pub psi2: f64,
    pub eta: f64,
    pub label: LabelFunction,
    pub activation: Activation,
    /// Fresh samples for accuracy and feature extraction.
    pub n_test: usize,
}

impl Default for OneStepConfig {
    fn default() -> Self {
        OneStepConfig {
            d: 400,
            psi1: 1.0,
            psi2: 1.0,
            eta: 1.0,
            label: LabelFunction::default(),
            activation: Activation::Relu,
            n_test: 4000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OneStepResult {
    pub accuracy: f64,
    /// Post-step features σ(W₁x) of the test samples, one row each.
    pub features: Array2<f64>,
    /// ⟨β*, x⟩ for each test sample.
    pub teacher_proj: Vec<f64>,
    pub labels: Vec<f64>,
    /// ‖W₁ − W₀‖_F / ‖W₀‖_F
    pub weight_change: f64,
}

impl OneStepResult {
    /// Test features grouped by label (−1 first).
    pub fn feature_ensemble(&self) -> Result<ManifoldEnsemble> {
        let items = self
            .labels
            .iter()
            .zip(self.features.rows())
            .map(|(&y, r)| (if y > 0.0 { 1i64 } else { -1 }, r.to_vec()))
            .collect();
        build_ensemble(items)
    }

    /// Probability of label +1 for every test sample under `f`.
    pub fn label_probs(&self, f: &LabelFunction) -> Vec<f64> {
        self.teacher_proj.iter().map(|&g| f.eval(g)).collect()
    }
}

fn ratio_count(d: usize, psi: f64, what: &str) -> Result<usize> {
    let v = (d as f64 * psi).round();
    if !(v >= 1.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{what} = d·psi rounds to {v}")));
    }
    Ok(v as usize)
}

fn sample_labels<R: Rng>(proj: &Array1<f64>, f: &LabelFunction, rng: &mut R) -> Vec<f64> {
    proj.iter().map(|&g| if rng.random::<f64>() < f.eval(g) { 1.0 } else { -1.0 }).collect()
}

pub fn one_step_experiment(cfg: &OneStepConfig, stream: &RngStream) -> Result<OneStepResult> {
    cfg.label.validate()?;
    if cfg.d == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidArgument("d and n_test must be positive".into()));
    }
    let n = ratio_count(cfg.d, cfg.psi1, "N")?;
    let p = ratio_count(cfg.d, cfg.psi2, "P")?;
    let act = cfg.activation;
    let mut rng = stream.rng();
    let sd = 1.0 / (n as f64).sqrt();
    let w0 = gaussian_matrix(n, cfg.d, sd, &mut rng);
    let a = gaussian_vector(n, &mut rng) * sd;
    let beta = {
        let b = gaussian_vector(cfg.d, &mut rng);
        &b / b.dot(&b).sqrt()
    };

    let x = gaussian_matrix(p, cfg.d, 1.0, &mut rng);
    let y = sample_labels(&x.dot(&beta), &cfg.label, &mut rng);
    let pre = x.dot(&w0.t());
    let out = pre.mapv(|v| act.eval(v)).dot(&a);
    let mut b = pre.mapv(|v| act.deriv(v));
    for (k, mut row) in b.axis_iter_mut(Axis(0)).enumerate() {
        let r = y[k] - out[k];
        row *= r;
        row *= &a;
    }
    let grad = b.t().dot(&x) / p as f64;
    let w1 = &w0 + &(grad * cfg.eta);
    let dw = &w1 - &w0;
    let weight_change = (dw.iter().map(|v| v * v).sum::<f64>() / w0.iter().map(|v| v * v).sum::<f64>()).sqrt();

    let xt = gaussian_matrix(cfg.n_test, cfg.d, 1.0, &mut rng);
    let teacher = xt.dot(&beta);
    let yt = sample_labels(&teacher, &cfg.label, &mut rng);
    let features = xt.dot(&w1.t()).mapv(|v| act.eval(v));
    let scores = features.dot(&a);
    let correct: f64 = scores
        .iter()
        .zip(&yt)
        .map(|(&s, &l)| {
            let m = s * l;
            if m > 0.0 {
                1.0
            } else if m == 0.0 {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    Ok(OneStepResult {
        accuracy: correct / cfg.n_test as f64,
        features,
        teacher_proj: teacher.to_vec(),
        labels: yt,
        weight_change,
    })
}
