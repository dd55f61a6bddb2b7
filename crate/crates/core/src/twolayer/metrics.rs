//! Representation and kernel metrics for two-layer networks.

use ndarray::{Array2, ArrayView2};

use super::TwoLayerNet;
use crate::error::{Error, Result};

/// ‖W_t − W₀‖_F / ‖W₀‖_F
pub fn weight_change(w_t: ArrayView2<f64>, w_0: ArrayView2<f64>) -> f64 {
    let num: f64 = w_t.iter().zip(w_0.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = w_0.iter().map(|v| v * v).sum();
    (num / den).sqrt()
}

/// Fraction of (sample, unit) pairs with positive hidden activation.
pub fn activation_stability(net: &TwoLayerNet, x: ArrayView2<f64>) -> Result<f64> {
    let h = net.hidden(x)?;
    Ok(h.iter().filter(|&&v| v > 0.0).count() as f64 / h.len() as f64)
}

/// Empirical NTK averaged over readouts; the readout block is weighted by `c`.
pub fn ntk_gram(net: &TwoLayerNet, x: ArrayView2<f64>, c: f64) -> Array2<f64> {
    let pre = x.dot(&net.w.t());
    let s = pre.mapv(|v| net.activation.eval(v));
    let ds = pre.mapv(|v| net.activation.deriv(v));
    let k = net.readouts.nrows();
    let n = net.w.nrows() as f64;
    let xx = x.dot(&x.t());
    let mut theta = Array2::<f64>::zeros((x.nrows(), x.nrows()));
    for a in net.readouts.rows() {
        let mut u = ds.clone();
        u *= &a;
        theta += &(u.dot(&u.t()) * &xx);
    }
    if c != 0.0 {
        theta += &(s.dot(&s.t()) * (c * k as f64));
    }
    theta * (net.alpha * net.alpha / n / k as f64)
}

fn centered(k: ArrayView2<f64>) -> Array2<f64> {
    let n = k.nrows() as f64;
    let row = k.sum_axis(ndarray::Axis(1)) / n;
    let col = k.sum_axis(ndarray::Axis(0)) / n;
    let all = k.sum() / (n * n);
    Array2::from_shape_fn(k.dim(), |(i, j)| k[[i, j]] - row[i] - col[j] + all)
}

/// Tr(K₁ L K₂ L) / (n − 1)² with L the centering matrix.
pub fn hsic(k1: ArrayView2<f64>, k2: ArrayView2<f64>) -> f64 {
    let n = k1.nrows() as f64;
    let (a, b) = (centered(k1), centered(k2));
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / ((n - 1.0) * (n - 1.0))
}

/// Centered kernel alignment.
pub fn cka(k1: ArrayView2<f64>, k2: ArrayView2<f64>) -> Result<f64> {
    if k1.dim() != k2.dim() || k1.nrows() != k1.ncols() || k1.nrows() < 2 {
        return Err(Error::InvalidArgument("CKA needs two square matrices of equal size ≥ 2".into()));
    }
    let den = (hsic(k1, k1) * hsic(k2, k2)).sqrt();
    if !(den > 0.0) {
        return Err(Error::Degenerate("kernel with zero centered norm".into()));
    }
    Ok((hsic(k1, k2) / den).clamp(0.0, 1.0))
}

fn frob(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// ⟨A, B⟩_F / (‖A‖_F ‖B‖_F)
pub fn frobenius_cosine(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let den = frob(a) * frob(b);
    if !(den > 0.0) {
        return Err(Error::Degenerate("zero-norm Gram matrix".into()));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / den)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlignmentMetrics {
    pub ntk_change: f64,
    pub kernel_alignment: f64,
    pub rep_similarity: f64,
    pub cka_rep_label: f64,
    pub cka_ntk_label: f64,
}

/// Kernel and representation metrics at one checkpoint against initialization.
/// `label_gram` is Y Yᵀ for the same samples.
pub fn alignment_metrics(
    ntk_t: ArrayView2<f64>,
    ntk_0: ArrayView2<f64>,
    rep_gram_t: ArrayView2<f64>,
    rep_gram_0: ArrayView2<f64>,
    label_gram: ArrayView2<f64>,
) -> Result<AlignmentMetrics> {
    let n0 = frob(ntk_0);
    if !(n0 > 0.0) {
        return Err(Error::Degenerate("zero-norm reference NTK".into()));
    }
    let diff: f64 = ntk_t.iter().zip(ntk_0.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(AlignmentMetrics {
        ntk_change: diff / n0,
        kernel_alignment: frobenius_cosine(ntk_t, ntk_0)?,
        rep_similarity: frobenius_cosine(rep_gram_t, rep_gram_0)?,
        cka_rep_label: cka(rep_gram_t, label_gram)?,
        cka_ntk_label: cka(ntk_t, label_gram)?,
    })
}
