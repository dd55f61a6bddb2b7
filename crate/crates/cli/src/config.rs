//! Experiment configuration: one TOML file per run, validated before use.

use std::path::{Path, PathBuf};

use gluekit::activation::Activation;
use gluekit::glue::AlignmentMode;
use gluekit::simcap::SimMethod;
use gluekit::synth::{CorrelationSpec, SphericalSpec};
use gluekit::theory::LabelFunction;
use gluekit::twolayer::Loss;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Format;
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Glue,
    Simcap,
    SynthSweep,
    TheoryCurve,
    CoverCheck,
    Train2l,
    OneStep,
}

impl Kind {
    pub const ALL: [Kind; 7] =
        [Kind::Glue, Kind::Simcap, Kind::SynthSweep, Kind::TheoryCurve, Kind::CoverCheck, Kind::Train2l, Kind::OneStep];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Glue => "glue",
            Kind::Simcap => "simcap",
            Kind::SynthSweep => "synth-sweep",
            Kind::TheoryCurve => "theory-curve",
            Kind::CoverCheck => "cover-check",
            Kind::Train2l => "train2l",
            Kind::OneStep => "one-step",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on worker threads; `GLUEKIT_THREADS` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Report directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glue: Option<GlueParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simcap: Option<SimcapParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_sweep: Option<SynthSweepParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_curve: Option<TheoryCurveParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover_check: Option<CoverCheckParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train2l: Option<Train2lParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_step: Option<OneStepParams>,
}

/// Activations on disk or a synthetic spherical ensemble; exactly one is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<FileSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spherical: Option<SphericalSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub activations: PathBuf,
    pub labels: PathBuf,
    /// Inferred from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SphericalSource {
    pub p: usize,
    pub m: usize,
    pub d_intrinsic: usize,
    pub radius: f64,
    pub ambient: usize,
    pub noise_eps: f64,
    pub rho_center: f64,
    pub rho_axis: f64,
    pub psi_center_axis: f64,
}

impl Default for SphericalSource {
    fn default() -> Self {
        SphericalSource {
            p: 20,
            m: 50,
            d_intrinsic: 4,
            radius: 0.5,
            ambient: 500,
            noise_eps: gluekit::synth::DEFAULT_NOISE_EPS,
            rho_center: 0.0,
            rho_axis: 0.0,
            psi_center_axis: 0.0,
        }
    }
}

impl SphericalSource {
    pub fn spec(&self) -> SphericalSpec {
        SphericalSpec {
            p: self.p,
            m: self.m,
            d_intrinsic: self.d_intrinsic,
            radius: self.radius,
            ambient: self.ambient,
            noise_eps: self.noise_eps,
        }
    }

    pub fn correlations(&self) -> CorrelationSpec {
        CorrelationSpec { rho_center: self.rho_center, rho_axis: self.rho_axis, psi_center_axis: self.psi_center_axis }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GlueParams {
    pub data: DataSource,
    pub n_draws: usize,
    pub alignment: AlignmentMode,
}

impl Default for GlueParams {
    fn default() -> Self {
        GlueParams {
            data: DataSource { file: None, spherical: Some(SphericalSource::default()) },
            n_draws: gluekit::glue::DEFAULT_DRAWS,
            alignment: AlignmentMode::Signed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimcapParams {
    pub data: DataSource,
    pub trials: usize,
    pub method: SimMethod,
}

impl Default for SimcapParams {
    fn default() -> Self {
        SimcapParams {
            data: DataSource { file: None, spherical: Some(SphericalSource::default()) },
            trials: 200,
            method: SimMethod::BinarySearch,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Dimension,
    Radius,
    RhoCenter,
    RhoAxis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthSweepParams {
    pub base: SphericalSource,
    pub vary: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: usize,
    pub n_draws: usize,
    pub alignment: AlignmentMode,
}

impl Default for SynthSweepParams {
    fn default() -> Self {
        SynthSweepParams {
            base: SphericalSource { p: 2, m: 200, d_intrinsic: 4, radius: 1.0, ambient: 1000, ..Default::default() },
            vary: SweepAxis::Dimension,
            values: (2..=10).map(f64::from).collect(),
            seeds: 5,
            n_draws: gluekit::glue::DEFAULT_DRAWS,
            alignment: AlignmentMode::Signed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TheoryCurveParams {
    pub psi1: f64,
    pub psi2: f64,
    pub etas: Vec<f64>,
    pub activation: Activation,
    pub label: LabelFunction,
}

impl Default for TheoryCurveParams {
    fn default() -> Self {
        TheoryCurveParams {
            psi1: 1.0,
            psi2: 1.0,
            etas: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            activation: Activation::Relu,
            label: LabelFunction::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CoverCheckParams {
    /// Ambient dimension of the random points.
    pub n: usize,
    pub p_values: Vec<usize>,
    pub trials: usize,
    /// Number of points whose simulated capacity is reported; 0 skips it.
    pub capacity_points: usize,
}

impl Default for CoverCheckParams {
    fn default() -> Self {
        CoverCheckParams { n: 60, p_values: vec![60, 90, 108, 120, 132, 150], trials: 1000, capacity_points: 120 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainData {
    /// Gaussian clouds around random centers.
    Gaussian,
    /// Spherical manifolds of intrinsic dimension `d-intrinsic`.
    Spherical,
}

/// Which of η and α stays fixed while η̄ = η/α varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hold {
    Eta,
    Alpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Train2lParams {
    pub data: TrainData,
    pub p: usize,
    pub m: usize,
    pub radius: f64,
    pub d_intrinsic: usize,
    pub input_dim: usize,
    pub width: usize,
    pub readouts: usize,
    pub activation: Activation,
    pub loss: Loss,
    pub hold: Hold,
    pub eta: f64,
    pub alpha: f64,
    pub eta_bars: Vec<f64>,
    pub readout_lr_factor: f64,
    pub epochs: usize,
    pub checkpoints: usize,
    pub replicates: usize,
    pub glue_draws: usize,
    pub final_glue_draws: usize,
    pub skip_glue: bool,
}

impl Default for Train2lParams {
    fn default() -> Self {
        Train2lParams {
            data: TrainData::Gaussian,
            p: 20,
            m: 15,
            radius: 0.5,
            d_intrinsic: 8,
            input_dim: 200,
            width: 300,
            readouts: 1,
            activation: Activation::Relu,
            loss: Loss::Mse,
            hold: Hold::Eta,
            eta: 1000.0,
            alpha: 1.0,
            eta_bars: vec![1.0, 16.0, 128.0],
            readout_lr_factor: 0.0,
            epochs: 10_000,
            checkpoints: 8,
            replicates: 8,
            glue_draws: gluekit::twolayer::CHECKPOINT_GLUE_DRAWS,
            final_glue_draws: gluekit::twolayer::FINAL_GLUE_DRAWS,
            skip_glue: false,
        }
    }
}

impl Train2lParams {
    /// (η, α) for a given η̄.
    pub fn eta_alpha(&self, eta_bar: f64) -> (f64, f64) {
        match self.hold {
            Hold::Eta => (self.eta, self.eta / eta_bar),
            Hold::Alpha => (eta_bar * self.alpha, self.alpha),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OneStepParams {
    pub d: usize,
    pub psi1: f64,
    pub psi2: f64,
    pub etas: Vec<f64>,
    pub replicates: usize,
    pub n_test: usize,
    pub activation: Activation,
    pub label: LabelFunction,
    /// GLUE draws on the post-step test features; 0 skips the estimate.
    pub glue_draws: usize,
}

impl Default for OneStepParams {
    fn default() -> Self {
        OneStepParams {
            d: 400,
            psi1: 1.0,
            psi2: 1.0,
            etas: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            replicates: 20,
            n_test: 4000,
            activation: Activation::Relu,
            label: LabelFunction::default(),
            glue_draws: 0,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        return Err(cfg_err(format!("{name} must be positive")));
    }
    Ok(())
}

fn finite_positive(name: &str, v: f64) -> CliResult<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(cfg_err(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn nonempty<T>(name: &str, v: &[T]) -> CliResult<()> {
    if v.is_empty() {
        return Err(cfg_err(format!("{name} must not be empty")));
    }
    Ok(())
}

impl DataSource {
    pub fn validate(&self) -> CliResult<()> {
        match (&self.file, &self.spherical) {
            (Some(_), None) => Ok(()),
            (None, Some(s)) => {
                s.spec().validate().map_err(|e| cfg_err(format!("data.spherical: {e}")))?;
                s.correlations().validate().map_err(|e| cfg_err(format!("data.spherical: {e}")))
            }
            _ => Err(cfg_err("data needs exactly one of [data.file] and [data.spherical]")),
        }
    }
}

impl ExperimentConfig {
    /// Config with only `kind` set; the parameter block takes its defaults.
    pub fn for_kind(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            seed: 0,
            threads: None,
            output: None,
            glue: None,
            simcap: None,
            synth_sweep: None,
            theory_curve: None,
            cover_check: None,
            train2l: None,
            one_step: None,
        }
    }

    fn blocks(&self) -> [(Kind, bool); 7] {
        [
            (Kind::Glue, self.glue.is_some()),
            (Kind::Simcap, self.simcap.is_some()),
            (Kind::SynthSweep, self.synth_sweep.is_some()),
            (Kind::TheoryCurve, self.theory_curve.is_some()),
            (Kind::CoverCheck, self.cover_check.is_some()),
            (Kind::Train2l, self.train2l.is_some()),
            (Kind::OneStep, self.one_step.is_some()),
        ]
    }

    /// Fills in the block for `kind` and checks every value.
    pub fn resolve(mut self) -> CliResult<Self> {
        if let Some((k, _)) = self.blocks().into_iter().find(|&(k, present)| present && k != self.kind) {
            return Err(cfg_err(format!("block [{}] does not belong to kind {}", k.name(), self.kind.name())));
        }
        if self.threads == Some(0) {
            return Err(cfg_err("threads must be positive"));
        }
        match self.kind {
            Kind::Glue => {
                let p = self.glue.get_or_insert_with(Default::default);
                p.data.validate()?;
                positive("glue.n-draws", p.n_draws)?;
            }
            Kind::Simcap => {
                let p = self.simcap.get_or_insert_with(Default::default);
                p.data.validate()?;
                positive("simcap.trials", p.trials)?;
            }
            Kind::SynthSweep => {
                let p = self.synth_sweep.get_or_insert_with(Default::default);
                nonempty("synth-sweep.values", &p.values)?;
                positive("synth-sweep.seeds", p.seeds)?;
                positive("synth-sweep.n-draws", p.n_draws)?;
                for &v in &p.values {
                    let mut s = p.base.clone();
                    crate::experiments::apply_axis(&mut s, p.vary, v)?;
                    DataSource { file: None, spherical: Some(s) }
                        .validate()
                        .map_err(|e| cfg_err(format!("synth-sweep value {v}: {e}")))?;
                }
            }
            Kind::TheoryCurve => {
                let p = self.theory_curve.get_or_insert_with(Default::default);
                finite_positive("theory-curve.psi1", p.psi1)?;
                finite_positive("theory-curve.psi2", p.psi2)?;
                nonempty("theory-curve.etas", &p.etas)?;
                p.label.validate().map_err(|e| cfg_err(format!("theory-curve.label: {e}")))?;
            }
            Kind::CoverCheck => {
                let p = self.cover_check.get_or_insert_with(Default::default);
                positive("cover-check.n", p.n)?;
                positive("cover-check.trials", p.trials)?;
                nonempty("cover-check.p-values", &p.p_values)?;
                if p.p_values.contains(&0) {
                    return Err(cfg_err("cover-check.p-values must be positive"));
                }
            }
            Kind::Train2l => {
                let p = self.train2l.get_or_insert_with(Default::default);
                for (name, v) in [
                    ("p", p.p),
                    ("m", p.m),
                    ("input-dim", p.input_dim),
                    ("width", p.width),
                    ("readouts", p.readouts),
                    ("epochs", p.epochs),
                    ("replicates", p.replicates),
                ] {
                    positive(&format!("train2l.{name}"), v)?;
                }
                if p.data == TrainData::Spherical {
                    positive("train2l.d-intrinsic", p.d_intrinsic)?;
                }
                finite_positive("train2l.radius", p.radius)?;
                finite_positive("train2l.eta", p.eta)?;
                finite_positive("train2l.alpha", p.alpha)?;
                nonempty("train2l.eta-bars", &p.eta_bars)?;
                for &e in &p.eta_bars {
                    finite_positive("train2l.eta-bars entry", e)?;
                }
                if !(p.readout_lr_factor >= 0.0 && p.readout_lr_factor.is_finite()) {
                    return Err(cfg_err("train2l.readout-lr-factor must be nonnegative"));
                }
                if !p.skip_glue && (p.glue_draws == 0 || p.final_glue_draws == 0) {
                    return Err(cfg_err("train2l glue draws must be positive unless skip-glue is set"));
                }
            }
            Kind::OneStep => {
                let p = self.one_step.get_or_insert_with(Default::default);
                positive("one-step.d", p.d)?;
                positive("one-step.replicates", p.replicates)?;
                positive("one-step.n-test", p.n_test)?;
                finite_positive("one-step.psi1", p.psi1)?;
                finite_positive("one-step.psi2", p.psi2)?;
                nonempty("one-step.etas", &p.etas)?;
                p.label.validate().map_err(|e| cfg_err(format!("one-step.label: {e}")))?;
            }
        }
        Ok(self)
    }

    /// The config as hashed and recorded: everything except `output`.
    pub fn canonical_json(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.output = None;
        serde_json::to_value(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("json serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub const PRESETS: [(&str, &str); 6] = [
    ("fig3a", include_str!("../presets/fig3a.toml")),
    ("fig4a", include_str!("../presets/fig4a.toml")),
    ("fig4b", include_str!("../presets/fig4b.toml")),
    ("cover", include_str!("../presets/cover.toml")),
    ("glue-validation", include_str!("../presets/glue-validation.toml")),
    ("numerical-check", include_str!("../presets/numerical-check.toml")),
];

pub fn preset(name: &str) -> CliResult<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        cfg_err(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })
}

fn parse_table(text: &str, origin: &str) -> CliResult<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| cfg_err(format!("{origin}: {e}")))
}

/// Parses `v` as a TOML value, falling back to a bare string.
fn parse_value(v: &str) -> toml::Value {
    format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

/// Applies `dotted.key=value`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, value) =
        assignment.split_once('=').ok_or_else(|| cfg_err(format!("--set expects key=value, got {assignment:?}")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(format!("bad key {key:?}")));
    }
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        let entry = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| cfg_err(format!("{key}: {p} is not a table")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

/// Reads the config from a file or a preset (or defaults for `kind`),
/// applies overrides, and validates. A `kind` given here must match.
pub fn load_config(
    path: Option<&Path>,
    preset_name: Option<&str>,
    overrides: &[String],
    kind: Option<Kind>,
) -> CliResult<ExperimentConfig> {
    let mut table = match (path, preset_name) {
        (Some(_), Some(_)) => return Err(cfg_err("give either a config file or --preset, not both")),
        (Some(p), None) => {
            let text = std::fs::read_to_string(p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?;
            parse_table(&text, &p.display().to_string())?
        }
        (None, Some(n)) => parse_table(preset(n)?, &format!("preset {n}"))?,
        (None, None) => {
            let k = kind.ok_or_else(|| cfg_err("no config file, preset or kind given"))?;
            let mut t = toml::Table::new();
            t.insert("kind".into(), toml::Value::String(k.name().into()));
            t
        }
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
    if let Some(k) = kind {
        if cfg.kind != k {
            return Err(cfg_err(format!("config kind {} does not match command {}", cfg.kind.name(), k.name())));
        }
    }
    cfg.resolve()
}
