//! Two-layer network testbed: full-batch training with checkpointed
//! kernel, representation and manifold-geometry metrics.
//!
//! Output of readout j: `f_j(x) = (α/√N) a_jᵀ σ(W x)`. The loss carries an
//! `α⁻²` factor and the base learning rate is multiplied by `√N`, so the
//! lazy/rich knob is `η̄ = η/α`.

pub mod metrics;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::glue::{estimate_geometry, GlueOptions, GlueReport};
use crate::model::{gaussian_matrix, ManifoldEnsemble};
use crate::rng::RngStream;

pub use metrics::{
    activation_stability, alignment_metrics, cka, frobenius_cosine, hsic, ntk_gram, weight_change, AlignmentMetrics,
};

/// Stream id for checkpoint GLUE probes; shared by every checkpoint of a run.
pub const GLUE_STREAM: u64 = 0x6c75;
pub const DEFAULT_CHECKPOINTS: usize = 50;
pub const CHECKPOINT_GLUE_DRAWS: usize = 100;
pub const FINAL_GLUE_DRAWS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerNet {
    /// N×d
    pub w: Array2<f64>,
    /// K×N, one readout per row.
    pub readouts: Array2<f64>,
    pub alpha: f64,
    pub activation: Activation,
    pub w0: Array2<f64>,
    pub readouts0: Array2<f64>,
}

impl TwoLayerNet {
    pub fn new(w: Array2<f64>, readouts: Array2<f64>, alpha: f64, activation: Activation) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if w.is_empty() || readouts.is_empty() {
            return Err(Error::Empty("network weights".into()));
        }
        if readouts.ncols() != w.nrows() {
            return Err(Error::DimensionMismatch { expected: w.nrows(), found: readouts.ncols() });
        }
        if w.iter().chain(readouts.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite initial weights".into()));
        }
        Ok(TwoLayerNet { w0: w.clone(), readouts0: readouts.clone(), w, readouts, alpha, activation })
    }

    /// W and readouts with i.i.d. N(0, 1/N) entries.
    pub fn init(d: usize, n: usize, k: usize, alpha: f64, activation: Activation, stream: &RngStream) -> Result<Self> {
        if d == 0 || n == 0 || k == 0 {
            return Err(Error::Empty("network dimensions".into()));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let w = gaussian_matrix(n, d, scale, &mut stream.substream(0).rng());
        let a = gaussian_matrix(k, n, scale, &mut stream.substream(1).rng());
        Self::new(w, a, alpha, activation)
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_readouts(&self) -> usize {
        self.readouts.nrows()
    }

    /// The same architecture at its initial weights.
    pub fn at_init(&self) -> TwoLayerNet {
        TwoLayerNet { w: self.w0.clone(), readouts: self.readouts0.clone(), ..self.clone() }
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: x.ncols() });
        }
        Ok(())
    }

    /// Hidden features σ(W x), B×N.
    pub fn hidden(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(x.dot(&self.w.t()).mapv(|v| self.activation.eval(v)))
    }

    /// Outputs, B×K.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.hidden(x)?.dot(&self.readouts.t()) * self.output_scale())
    }

    fn output_scale(&self) -> f64 {
        self.alpha / (self.width() as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Labels ±1.
    #[default]
    Mse,
    /// Labels in {0, 1}; outputs are logits.
    Bce,
}

impl Loss {
    fn value(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::Mse => 0.5 * (y - f) * (y - f),
            Loss::Bce => softplus(f) - y * f,
        }
    }

    /// Negative derivative of the per-sample loss in f.
    fn residual(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::Mse => y - f,
            Loss::Bce => y - sigmoid(f),
        }
    }

    fn correct(self, y: f64, f: f64) -> bool {
        match self {
            Loss::Mse => (f > 0.0 && y > 0.0) || (f < 0.0 && y < 0.0),
            Loss::Bce => (f > 0.0) == (y > 0.5),
        }
    }

    fn check_labels(self, y: ArrayView2<f64>) -> Result<()> {
        let ok = match self {
            Loss::Mse => y.iter().all(|&v| v == 1.0 || v == -1.0),
            Loss::Bce => y.iter().all(|&v| v == 0.0 || v == 1.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("labels do not match the {self:?} convention")))
        }
    }

    /// Converts labels to ±1.
    fn signed(self, y: f64) -> f64 {
        match self {
            Loss::Mse => y,
            Loss::Bce => 2.0 * y - 1.0,
        }
    }
}

fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

fn softplus(f: f64) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    /// c: readouts move with learning rate c·η.
    pub readout_lr_factor: f64,
    pub loss: Loss,
    pub epochs: usize,
    pub checkpoint_epochs: Vec<usize>,
    pub glue_draws: usize,
    pub final_glue_draws: usize,
    /// Skip the GLUE analysis at checkpoints.
    pub skip_glue: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(eta: f64, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            eta,
            readout_lr_factor: 0.0,
            loss: Loss::Mse,
            epochs,
            checkpoint_epochs: log_checkpoints(epochs, DEFAULT_CHECKPOINTS),
            glue_draws: CHECKPOINT_GLUE_DRAWS,
            final_glue_draws: FINAL_GLUE_DRAWS,
            skip_glue: false,
            seed,
        }
    }

    /// η̄ = η/α.
    pub fn effective_lr(&self, alpha: f64) -> f64 {
        self.eta / alpha
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be non-negative, got {}", self.eta)));
        }
        if !(self.readout_lr_factor >= 0.0) || !self.readout_lr_factor.is_finite() {
            return Err(Error::InvalidArgument("readout_lr_factor must be non-negative".into()));
        }
        if self.checkpoint_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("checkpoint epochs must be strictly increasing".into()));
        }
        if self.checkpoint_epochs.last().is_some_and(|&e| e > self.epochs) {
            return Err(Error::InvalidArgument("checkpoint beyond the last epoch".into()));
        }
        if !self.skip_glue && (self.glue_draws < 2 || self.final_glue_draws < 2) {
            return Err(Error::InvalidArgument("GLUE needs at least 2 draws".into()));
        }
        Ok(())
    }
}

/// Epoch 0 plus `n` log-uniform epochs in [1, epochs], rounded and deduplicated.
pub fn log_checkpoints(epochs: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0];
    if epochs > 0 && n > 0 {
        let top = (epochs as f64).ln();
        for i in 0..n {
            let t = if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
            out.push(((top * t).exp().round() as usize).clamp(1, epochs));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Inputs with per-readout labels and the manifold each row belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    /// n×d
    pub x: Array2<f64>,
    /// n×K
    pub y: Array2<f64>,
    pub owner: Vec<usize>,
    pub n_manifolds: usize,
}

impl LabeledSet {
    /// `labels` is P×K; every point of manifold i gets row i.
    pub fn from_ensemble(ens: &ManifoldEnsemble, labels: ArrayView2<f64>) -> Result<Self> {
        if labels.nrows() != ens.n_manifolds() {
            return Err(Error::DimensionMismatch { expected: ens.n_manifolds(), found: labels.nrows() });
        }
        let owner = ens.row_owner();
        let y = labels.select(Axis(0), &owner);
        Ok(LabeledSet { x: ens.points().clone(), y, owner, n_manifolds: ens.n_manifolds() })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// Rows of `features` grouped by manifold.
    pub fn group(&self, features: &Array2<f64>) -> Result<ManifoldEnsemble> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.n_manifolds];
        for (k, &i) in self.owner.iter().enumerate() {
            rows[i].push(k);
        }
        ManifoldEnsemble::from_clouds(rows.iter().map(|r| features.select(Axis(0), r)).collect())
    }
}

/// Mean per-sample, per-readout loss, without the α⁻² factor.
pub fn loss_value(net: &TwoLayerNet, x: ArrayView2<f64>, y: ArrayView2<f64>, loss: Loss) -> Result<f64> {
    let f = net.forward(x)?;
    check_labels_shape(&f, y)?;
    Ok(f.iter().zip(y.iter()).map(|(&f, &y)| loss.value(y, f)).sum::<f64>() / f.len() as f64)
}

/// Fraction of (sample, readout) pairs classified correctly.
pub fn accuracy(net: &TwoLayerNet, x: ArrayView2<f64>, y: ArrayView2<f64>, loss: Loss) -> Result<f64> {
    let f = net.forward(x)?;
    check_labels_shape(&f, y)?;
    Ok(f.iter().zip(y.iter()).filter(|(&f, &y)| loss.correct(y, f)).count() as f64 / f.len() as f64)
}

fn check_labels_shape(f: &Array2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if f.dim() != y.dim() {
        return Err(Error::InvalidArgument(format!("labels have shape {:?}, outputs {:?}", y.dim(), f.dim())));
    }
    Ok(())
}

/// One full-batch step: `W += η√N G`, `a_j += c η√N g_j`, with
/// `G = α⁻² (1/B)(1/K) Σ_{μ,j} r_{μj} ∂f_j(x_μ)/∂W` and r the loss residual.
/// Returns the loss before the step.
pub fn grad_step(net: &mut TwoLayerNet, x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &TrainConfig) -> Result<f64> {
    net.check_input(x)?;
    let b = x.nrows();
    let k = net.n_readouts();
    let scale = net.output_scale();
    let pre = x.dot(&net.w.t());
    let s = pre.mapv(|v| net.activation.eval(v));
    let f = s.dot(&net.readouts.t()) * scale;
    check_labels_shape(&f, y)?;

    let mut r = Array2::<f64>::zeros(f.dim());
    let mut loss = 0.0;
    for ((rv, &fv), &yv) in r.iter_mut().zip(f.iter()).zip(y.iter()) {
        *rv = cfg.loss.residual(yv, fv);
        loss += cfg.loss.value(yv, fv);
    }
    loss /= f.len() as f64;

    // Common prefactor α⁻² · (α/√N) / (B K).
    let pref = scale / (net.alpha * net.alpha * (b * k) as f64);
    let lr = cfg.eta * (net.width() as f64).sqrt();

    let mut back = r.dot(&net.readouts);
    back.zip_mut_with(&pre, |v, &p| *v *= net.activation.deriv(p));
    let g_w = back.t().dot(&x) * pref;
    if g_w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite hidden-weight gradient".into()));
    }
    if cfg.readout_lr_factor != 0.0 {
        let g_a = r.t().dot(&s) * pref;
        if g_a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite readout gradient".into()));
        }
        net.readouts.scaled_add(cfg.readout_lr_factor * lr, &g_a);
    }
    net.w.scaled_add(lr, &g_w);
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub loss: f64,
    pub weight_change: f64,
    pub activation_stability: f64,
    pub alignment: AlignmentMetrics,
    pub glue: Option<GlueReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub eta_bar: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// Epoch at which the loss stopped being finite; the trace ends before it.
    pub diverged_at: Option<usize>,
}

impl MetricTrace {
    pub fn first(&self) -> Option<&Checkpoint> {
        self.checkpoints.first()
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// Capacity at the last checkpoint minus capacity at the first.
    pub fn capacity_gain(&self) -> Option<f64> {
        let a = self.first()?.glue.as_ref()?.capacity.value;
        let b = self.last()?.glue.as_ref()?.capacity.value;
        Some(b - a)
    }
}

struct Reference {
    ntk: Array2<f64>,
    rep_gram: Array2<f64>,
    label_gram: Array2<f64>,
}

/// Full-batch gradient descent with metrics at `cfg.checkpoint_epochs`.
/// Divergence ends the run early and is reported through `diverged_at`.
pub fn train(net: &mut TwoLayerNet, train_set: &LabeledSet, test_set: &LabeledSet, cfg: &TrainConfig) -> Result<MetricTrace> {
    cfg.validate()?;
    for set in [train_set, test_set] {
        if set.is_empty() {
            return Err(Error::Empty("training or test set".into()));
        }
        net.check_input(set.x.view())?;
        cfg.loss.check_labels(set.y.view())?;
        check_labels_shape(&Array2::zeros((set.len(), net.n_readouts())), set.y.view())?;
    }
    let init = net.at_init();
    let rep0 = init.hidden(test_set.x.view())?;
    let ys = test_set.y.mapv(|v| cfg.loss.signed(v));
    let reference = Reference {
        ntk: ntk_gram(&init, test_set.x.view(), cfg.readout_lr_factor),
        rep_gram: rep0.dot(&rep0.t()),
        label_gram: ys.dot(&ys.t()),
    };
    let glue_stream = RngStream::new(cfg.seed, GLUE_STREAM);
    let last_ckpt = cfg.checkpoint_epochs.last().copied();

    let mut trace = MetricTrace { eta_bar: cfg.effective_lr(net.alpha), checkpoints: Vec::new(), diverged_at: None };
    let mut next = cfg.checkpoint_epochs.iter().peekable();
    for epoch in 0..=cfg.epochs {
        if next.peek() == Some(&&epoch) {
            next.next();
            let draws = if Some(epoch) == last_ckpt { cfg.final_glue_draws } else { cfg.glue_draws };
            let ck = checkpoint(net, epoch, train_set, test_set, cfg, &reference, &glue_stream, draws)?;
            if !ck.loss.is_finite() {
                trace.diverged_at = Some(epoch);
                return Ok(trace);
            }
            trace.checkpoints.push(ck);
        }
        if epoch == cfg.epochs || next.peek().is_none() {
            break;
        }
        match grad_step(net, train_set.x.view(), train_set.y.view(), cfg) {
            Ok(l) if l.is_finite() => {}
            Ok(_) | Err(Error::Numerical(_)) => {
                log::warn!("training diverged at epoch {epoch}");
                trace.diverged_at = Some(epoch);
                return Ok(trace);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn checkpoint(
    net: &TwoLayerNet,
    epoch: usize,
    train_set: &LabeledSet,
    test_set: &LabeledSet,
    cfg: &TrainConfig,
    reference: &Reference,
    glue_stream: &RngStream,
    draws: usize,
) -> Result<Checkpoint> {
    let loss = loss_value(net, train_set.x.view(), train_set.y.view(), cfg.loss)?;
    if !loss.is_finite() || net.w.iter().any(|v| !v.is_finite()) {
        return Ok(Checkpoint {
            epoch,
            train_acc: f64::NAN,
            test_acc: f64::NAN,
            loss: f64::INFINITY,
            weight_change: f64::NAN,
            activation_stability: f64::NAN,
            alignment: AlignmentMetrics {
                ntk_change: f64::NAN,
                kernel_alignment: f64::NAN,
                rep_similarity: f64::NAN,
                cka_rep_label: f64::NAN,
                cka_ntk_label: f64::NAN,
            },
            glue: None,
        });
    }
    let rep = net.hidden(test_set.x.view())?;
    let ntk = ntk_gram(net, test_set.x.view(), cfg.readout_lr_factor);
    let alignment = alignment_metrics(
        ntk.view(),
        reference.ntk.view(),
        rep.dot(&rep.t()).view(),
        reference.rep_gram.view(),
        reference.label_gram.view(),
    )?;
    let glue = if cfg.skip_glue {
        None
    } else {
        let opts = GlueOptions { n_draws: draws, ..GlueOptions::default() };
        Some(estimate_geometry(&test_set.group(&rep)?, &opts, glue_stream)?)
    };
    Ok(Checkpoint {
        epoch,
        train_acc: accuracy(net, train_set.x.view(), train_set.y.view(), cfg.loss)?,
        test_acc: accuracy(net, test_set.x.view(), test_set.y.view(), cfg.loss)?,
        loss,
        weight_change: weight_change(net.w.view(), net.w0.view()),
        activation_stability: activation_stability(net, test_set.x.view())?,
        alignment,
        glue,
    })
}
