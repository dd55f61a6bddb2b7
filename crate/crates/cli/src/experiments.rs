//! Dispatch from a resolved config to the library, producing a report bundle.

use gluekit::glue::{capacity_from_geometry, estimate_capacity, estimate_geometry, GlueOptions, GlueReport};
use gluekit::model::gaussian_matrix;
use gluekit::simcap::{est_prob, simulated_capacity};
use gluekit::stats::{mean_se, spearman};
use gluekit::synth::{apply_correlations, assign_labels, gen_isotropic_gaussian, gen_isotropic_spherical, SphericalSpec};
use gluekit::theory::one_step::{one_step_experiment, OneStepConfig};
use gluekit::theory::{accuracy_theory, capacity_theory, cover_prob};
use gluekit::twolayer::{log_checkpoints, train, LabeledSet, Loss, MetricTrace, TrainConfig, TwoLayerNet};
use gluekit::{ManifoldEnsemble, RngStream};
use ndarray::Array2;
use rayon::prelude::*;

use crate::config::*;
use crate::data::{load_activations, Format};
use crate::error::{CliError, CliResult, Context};
use crate::report::{Metadata, ReportBundle, Table};

pub const THREADS_ENV: &str = "GLUEKIT_THREADS";

/// Worker count: `GLUEKIT_THREADS`, else the config field, else all cores.
pub fn thread_count(cfg: &ExperimentConfig) -> CliResult<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        };
    }
    Ok(cfg.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<ReportBundle> {
    let threads = thread_count(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    let metadata = Metadata {
        kind: cfg.kind.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        config: cfg.canonical_json(),
    };
    let mut bundle = ReportBundle::new(metadata);
    let missing = || CliError::Config(format!("missing [{}] block; resolve the config first", cfg.kind.name()));
    pool.install(|| match cfg.kind {
        Kind::Glue => run_glue(cfg.glue.as_ref().ok_or_else(missing)?, cfg.seed, &mut bundle),
        Kind::Simcap => run_simcap(cfg.simcap.as_ref().ok_or_else(missing)?, cfg.seed, &mut bundle),
        Kind::SynthSweep => run_synth_sweep(cfg.synth_sweep.as_ref().ok_or_else(missing)?, cfg.seed, &mut bundle),
        Kind::TheoryCurve => run_theory_curve(cfg.theory_curve.as_ref().ok_or_else(missing)?, &mut bundle),
        Kind::CoverCheck => run_cover_check(cfg.cover_check.as_ref().ok_or_else(missing)?, cfg.seed, &mut bundle),
        Kind::Train2l => run_train2l(cfg.train2l.as_ref().ok_or_else(missing)?, cfg.seed, &mut bundle),
        Kind::OneStep => run_one_step(cfg.one_step.as_ref().ok_or_else(missing)?, cfg.seed, &mut bundle),
    })?;
    Ok(bundle)
}

fn load_source(src: &DataSource, seed: u64) -> CliResult<ManifoldEnsemble> {
    match (&src.file, &src.spherical) {
        (Some(f), _) => {
            let format = f.format.unwrap_or_else(|| Format::from_path(&f.activations));
            load_activations(&f.activations, format, &f.labels)
        }
        (None, Some(s)) => Ok(apply_correlations(&s.spec(), &s.correlations(), &RngStream::new(seed, 1))
            .ctx("generating spherical manifolds")?
            .0),
        (None, None) => Err(CliError::Config("no data source".into())),
    }
}

const GEOMETRY_COLUMNS: [(&str, &str); 13] = [
    ("capacity", "mean-field capacity alpha_M (manifolds per dimension)"),
    ("capacity_se", "standard error of alpha_M"),
    ("dimension", "effective dimension D_M"),
    ("dimension_se", "standard error of D_M"),
    ("radius", "effective radius R_M (relative to center norm)"),
    ("radius_se", "standard error of R_M"),
    ("center_align", "center alignment rho^c_M (cosine)"),
    ("center_align_se", "standard error of rho^c_M"),
    ("axis_align", "axis alignment rho^a_M (cosine)"),
    ("axis_align_se", "standard error of rho^a_M"),
    ("center_axis_align", "center-axis alignment psi_M (cosine)"),
    ("center_axis_align_se", "standard error of psi_M"),
    ("approx_capacity", "(1 + R_M^-2) / D_M; nan when undefined"),
];

fn geometry_row(g: &GlueReport) -> Vec<f64> {
    let approx = capacity_from_geometry(g.dimension.value, g.radius.value).unwrap_or(f64::NAN);
    let mut row = Vec::with_capacity(GEOMETRY_COLUMNS.len());
    for e in [g.capacity, g.dimension, g.radius, g.center_align, g.axis_align, g.center_axis_align] {
        row.push(e.value);
        row.push(e.std_err);
    }
    row.push(approx);
    row
}

fn with_columns(name: &str, lead: &[(&str, &str)], tail: &[(&str, &str)]) -> Table {
    let cols: Vec<(&str, &str)> = lead.iter().chain(tail).copied().collect();
    Table::new(name, &cols)
}

fn run_glue(p: &GlueParams, seed: u64, out: &mut ReportBundle) -> CliResult<()> {
    let ens = load_source(&p.data, seed)?;
    let opts = GlueOptions { n_draws: p.n_draws, alignment: p.alignment, ..Default::default() };
    let g = estimate_geometry(&ens, &opts, &RngStream::new(seed, 2)).ctx("estimating GLUE geometry")?;
    let lead = [
        ("n_manifolds", "number of manifolds P"),
        ("ambient_dim", "ambient dimension N"),
        ("n_points", "total number of points"),
        ("n_draws", "number of (dichotomy, probe) draws"),
        ("excluded", "manifolds never active in any draw"),
    ];
    let mut t = with_columns("glue", &lead, &GEOMETRY_COLUMNS);
    let mut row = vec![
        ens.n_manifolds() as f64,
        ens.ambient_dim() as f64,
        ens.n_points() as f64,
        g.n_draws as f64,
        g.excluded.len() as f64,
    ];
    row.extend(geometry_row(&g));
    t.push(row);
    out.summary.push(format!(
        "alpha_M = {:.4} ± {:.4}, D_M = {:.4}, R_M = {:.4}",
        g.capacity.value, g.capacity.std_err, g.dimension.value, g.radius.value
    ));
    if g.degenerate {
        out.summary.push("all axis parts vanish; dimension and radius are reported as 0".into());
    }
    out.tables.push(t);
    Ok(())
}

fn binomial_se(p: f64, m: usize) -> f64 {
    (p * (1.0 - p) / m as f64).sqrt()
}

fn run_simcap(p: &SimcapParams, seed: u64, out: &mut ReportBundle) -> CliResult<()> {
    let ens = load_source(&p.data, seed)?;
    let rep = simulated_capacity(&ens, p.trials, &RngStream::new(seed, 3), p.method).ctx("simulated capacity")?;
    let mut t = Table::new(
        "simcap",
        &[
            ("n_manifolds", "number of manifolds P"),
            ("ambient_dim", "ambient dimension N"),
            ("alpha_sim", "simulated capacity P / n*"),
            ("critical_dim", "smallest projection dimension with p_hat >= 1/2"),
            ("trials", "dichotomies per dimension"),
        ],
    );
    t.push(vec![
        ens.n_manifolds() as f64,
        ens.ambient_dim() as f64,
        rep.alpha_sim,
        rep.critical_dim as f64,
        p.trials as f64,
    ]);
    let mut curve = Table::new(
        "separability",
        &[
            ("n", "projection dimension"),
            ("p_hat", "fraction of separable trials"),
            ("p_hat_se", "binomial standard error of p_hat"),
        ],
    );
    for e in &rep.curve.entries {
        curve.push(vec![e.n as f64, e.p_hat, binomial_se(e.p_hat, e.trials)]);
    }
    out.summary.push(format!("alpha_sim = {:.4} (n* = {})", rep.alpha_sim, rep.critical_dim));
    out.tables.push(t);
    out.plots.push(curve);
    Ok(())
}

pub fn apply_axis(s: &mut SphericalSource, axis: SweepAxis, v: f64) -> CliResult<()> {
    match axis {
        SweepAxis::Dimension => {
            if !(v >= 1.0 && v.fract() == 0.0) {
                return Err(CliError::Config(format!("dimension sweep value {v} is not a positive integer")));
            }
            s.d_intrinsic = v as usize;
        }
        SweepAxis::Radius => s.radius = v,
        SweepAxis::RhoCenter => s.rho_center = v,
        SweepAxis::RhoAxis => s.rho_axis = v,
    }
    Ok(())
}

fn run_synth_sweep(p: &SynthSweepParams, seed: u64, out: &mut ReportBundle) -> CliResult<()> {
    let jobs: Vec<(usize, usize)> = (0..p.values.len()).flat_map(|i| (0..p.seeds).map(move |s| (i, s))).collect();
    let opts = GlueOptions { n_draws: p.n_draws, alignment: p.alignment, ..Default::default() };
    let rows: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let v = p.values[i];
            let mut src = p.base.clone();
            apply_axis(&mut src, p.vary, v)?;
            let ctx = format!("sweep value {v}, seed {s}");
            let (ens, _) = apply_correlations(&src.spec(), &src.correlations(), &RngStream::new(seed, 1).substream(s as u64))
                .ctx(&ctx)?;
            let g = estimate_geometry(&ens, &opts, &RngStream::new(seed, 2).substream(s as u64)).ctx(&ctx)?;
            let mut row = vec![v, s as f64];
            row.extend(geometry_row(&g));
            Ok(row)
        })
        .collect::<CliResult<_>>()?;
    let mut raw = with_columns("sweep", &[("value", "ground-truth value of the swept parameter"), ("seed", "replicate")], &GEOMETRY_COLUMNS);
    for r in rows {
        raw.push(r);
    }

    let measures = ["capacity", "dimension", "radius", "center_align", "axis_align", "center_axis_align", "approx_capacity"];
    let mut cols: Vec<(String, String)> = vec![("value".into(), "ground-truth value of the swept parameter".into())];
    for m in measures {
        cols.push((m.to_string(), format!("seed mean of {m}")));
        cols.push((format!("{m}_se"), format!("standard error over seeds of {m}")));
    }
    let col_refs: Vec<(&str, &str)> = cols.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut plot = Table::new("sweep", &col_refs);
    let columns: Vec<Vec<f64>> = measures.iter().map(|m| raw.column(m).expect("declared")).collect();
    for (i, &v) in p.values.iter().enumerate() {
        let idx: Vec<usize> = (0..raw.rows.len()).filter(|&k| k / p.seeds == i).collect();
        let mut row = vec![v];
        for c in &columns {
            let s = mean_se(&idx.iter().map(|&k| c[k]).collect::<Vec<_>>());
            row.push(s.mean);
            row.push(s.std_err);
        }
        plot.push(row);
    }
    let xs = plot.column("value").expect("declared");
    for m in measures {
        let ys = plot.column(m).expect("declared");
        out.summary.push(format!("spearman({m}, {:?}) = {:.3}", p.vary, spearman(&xs, &ys)));
    }
    out.tables.push(raw);
    out.plots.push(plot);
    Ok(())
}

fn run_theory_curve(p: &TheoryCurveParams, out: &mut ReportBundle) -> CliResult<()> {
    let rows: Vec<Vec<f64>> = p
        .etas
        .par_iter()
        .map(|&eta| {
            let ctx = format!("theory at eta {eta}");
            let cap = capacity_theory(p.psi1, p.psi2, eta, &p.label, p.activation).ctx(&ctx)?;
            let acc = accuracy_theory(p.psi1, p.psi2, eta, &p.label, p.activation).ctx(&ctx)?;
            Ok(vec![eta, cap, acc])
        })
        .collect::<CliResult<_>>()?;
    let mut t = Table::new(
        "theory",
        &[
            ("eta", "one-step learning rate"),
            ("capacity", "asymptotic capacity of post-step features"),
            ("accuracy", "asymptotic test accuracy after the step"),
        ],
    );
    for r in rows {
        t.push(r);
    }
    out.summary.push(format!("{} learning rates evaluated at psi1 = {}, psi2 = {}", p.etas.len(), p.psi1, p.psi2));
    out.plots.push(t.clone());
    out.tables.push(t);
    Ok(())
}

/// `p` labeled points in general position: single-point manifolds.
fn random_points(p: usize, n: usize, stream: &RngStream) -> CliResult<ManifoldEnsemble> {
    let x = gaussian_matrix(p, n, 1.0, &mut stream.rng());
    ManifoldEnsemble::from_clouds(x.rows().into_iter().map(|r| r.to_owned().insert_axis(ndarray::Axis(0))).collect())
        .ctx("building point ensemble")
}

fn run_cover_check(p: &CoverCheckParams, seed: u64, out: &mut ReportBundle) -> CliResult<()> {
    let rows: Vec<Vec<f64>> = p
        .p_values
        .iter()
        .enumerate()
        .map(|(i, &np)| {
            let ens = random_points(np, p.n, &RngStream::new(seed, 1).substream(i as u64))?;
            let ph = est_prob(&ens, p.n, p.trials, &RngStream::new(seed, 2).substream(i as u64))
                .ctx(&format!("separability at P = {np}"))?;
            let c = cover_prob(p.n as u64, np as u64);
            Ok(vec![np as f64, p.n as f64, np as f64 / p.n as f64, ph, binomial_se(ph, p.trials), c, ph - c])
        })
        .collect::<CliResult<_>>()?;
    let mut t = Table::new(
        "cover",
        &[
            ("p", "number of random points"),
            ("n", "ambient dimension"),
            ("load", "P / N"),
            ("p_hat", "fraction of separable random dichotomies"),
            ("p_hat_se", "binomial standard error of p_hat"),
            ("cover_prob", "closed-form separability probability"),
            ("deviation", "p_hat - cover_prob"),
        ],
    );
    for r in rows {
        t.push(r);
    }
    let worst = t.column("deviation").expect("declared").iter().fold(0.0f64, |a, d| a.max(d.abs()));
    out.summary.push(format!("max |p_hat - cover_prob| = {worst:.4} over {} loads", p.p_values.len()));
    if p.capacity_points > 0 {
        let ens = random_points(p.capacity_points, p.n, &RngStream::new(seed, 3))?;
        let rep = simulated_capacity(&ens, p.trials, &RngStream::new(seed, 4), Default::default())
            .ctx("simulated capacity of random points")?;
        let mut c = Table::new(
            "capacity",
            &[
                ("p", "number of random points"),
                ("n", "ambient dimension"),
                ("alpha_sim", "simulated capacity P / n*"),
                ("critical_dim", "smallest dimension with p_hat >= 1/2"),
            ],
        );
        c.push(vec![p.capacity_points as f64, p.n as f64, rep.alpha_sim, rep.critical_dim as f64]);
        out.summary.push(format!("alpha_sim of {} points = {:.4}", p.capacity_points, rep.alpha_sim));
        out.tables.push(c);
    }
    out.plots.push(t.clone());
    out.tables.push(t);
    Ok(())
}

struct RunOutcome {
    eta_bar: f64,
    replicate: usize,
    eta: f64,
    alpha: f64,
    trace: MetricTrace,
}

fn train_one(p: &Train2lParams, seed: u64, eta_bar: f64, r: usize) -> CliResult<RunOutcome> {
    let (eta, alpha) = p.eta_alpha(eta_bar);
    let ctx = format!("train2l eta_bar {eta_bar}, replicate {r}");
    let rs = |id: u64| RngStream::new(seed, id).substream(r as u64);
    let (tr, te) = match p.data {
        TrainData::Gaussian => gen_isotropic_gaussian(p.p, p.m, p.radius, p.input_dim, &rs(1)),
        TrainData::Spherical => gen_isotropic_spherical(
            &SphericalSpec {
                p: p.p,
                m: p.m,
                d_intrinsic: p.d_intrinsic,
                radius: p.radius,
                ambient: p.input_dim,
                noise_eps: gluekit::synth::DEFAULT_NOISE_EPS,
            },
            &rs(1),
        ),
    }
    .ctx(&ctx)?;
    let signs = assign_labels(p.p * p.readouts, &rs(2));
    let labels = Array2::from_shape_vec((p.p, p.readouts), signs).expect("P×K labels").mapv(|y| match p.loss {
        Loss::Mse => y,
        Loss::Bce => (y + 1.0) / 2.0,
    });
    let trs = LabeledSet::from_ensemble(&tr, labels.view()).ctx(&ctx)?;
    let tes = LabeledSet::from_ensemble(&te, labels.view()).ctx(&ctx)?;
    let mut net = TwoLayerNet::init(p.input_dim, p.width, p.readouts, alpha, p.activation, &rs(3)).ctx(&ctx)?;
    let mut cfg = TrainConfig::new(eta, p.epochs, seed.wrapping_mul(1 << 20).wrapping_add(r as u64));
    cfg.readout_lr_factor = p.readout_lr_factor;
    cfg.loss = p.loss;
    cfg.checkpoint_epochs = log_checkpoints(p.epochs, p.checkpoints);
    cfg.glue_draws = p.glue_draws;
    cfg.final_glue_draws = p.final_glue_draws;
    cfg.skip_glue = p.skip_glue;
    let trace = train(&mut net, &trs, &tes, &cfg).ctx(&ctx)?;
    Ok(RunOutcome { eta_bar, replicate: r, eta, alpha, trace })
}

fn run_train2l(p: &Train2lParams, seed: u64, out: &mut ReportBundle) -> CliResult<()> {
    let jobs: Vec<(f64, usize)> = p.eta_bars.iter().flat_map(|&e| (0..p.replicates).map(move |r| (e, r))).collect();
    let runs: Vec<RunOutcome> = jobs.par_iter().map(|&(e, r)| train_one(p, seed, e, r)).collect::<CliResult<_>>()?;

    let mut trace = with_columns(
        "trace",
        &[
            ("eta_bar", "normalized effective learning rate eta / alpha"),
            ("replicate", "replicate index"),
            ("epoch", "full-batch gradient steps taken"),
            ("train_acc", "training accuracy"),
            ("test_acc", "test accuracy"),
            ("loss", "training loss"),
            ("weight_change", "||W_t - W_0||_F / ||W_0||_F"),
            ("activation_stability", "fraction of positive hidden pre-activations on training data"),
            ("ntk_change", "||K_t - K_0||_F / ||K_0||_F for the NTK Gram"),
            ("kernel_alignment", "Frobenius cosine of NTK Gram with its initial value"),
            ("rep_similarity", "Frobenius cosine of representation Gram with its initial value"),
            ("cka_rep_label", "CKA of representation Gram and label Gram"),
            ("cka_ntk_label", "CKA of NTK Gram and label Gram"),
        ],
        &GEOMETRY_COLUMNS,
    );
    let mut summary = Table::new(
        "runs",
        &[
            ("eta_bar", "normalized effective learning rate eta / alpha"),
            ("replicate", "replicate index"),
            ("eta", "learning rate"),
            ("alpha", "output scale"),
            ("capacity_init", "alpha_M at initialization"),
            ("capacity_final", "alpha_M at the last checkpoint"),
            ("capacity_gain", "capacity_final - capacity_init"),
            ("train_acc", "final training accuracy"),
            ("test_acc", "final test accuracy"),
            ("weight_change", "final ||W_t - W_0||_F / ||W_0||_F"),
            ("diverged_at", "epoch of divergence; nan if training stayed finite"),
        ],
    );
    let nan_geometry = vec![f64::NAN; GEOMETRY_COLUMNS.len()];
    let mut diverged = 0;
    for run in &runs {
        for c in &run.trace.checkpoints {
            let a = &c.alignment;
            let mut row = vec![
                run.eta_bar,
                run.replicate as f64,
                c.epoch as f64,
                c.train_acc,
                c.test_acc,
                c.loss,
                c.weight_change,
                c.activation_stability,
                a.ntk_change,
                a.kernel_alignment,
                a.rep_similarity,
                a.cka_rep_label,
                a.cka_ntk_label,
            ];
            row.extend(c.glue.as_ref().map_or_else(|| nan_geometry.clone(), geometry_row));
            trace.push(row);
        }
        let cap = |c: Option<&gluekit::twolayer::Checkpoint>| {
            c.and_then(|c| c.glue.as_ref()).map_or(f64::NAN, |g| g.capacity.value)
        };
        let last = run.trace.last();
        diverged += run.trace.diverged_at.is_some() as usize;
        summary.push(vec![
            run.eta_bar,
            run.replicate as f64,
            run.eta,
            run.alpha,
            cap(run.trace.first()),
            cap(last),
            run.trace.capacity_gain().unwrap_or(f64::NAN),
            last.map_or(f64::NAN, |c| c.train_acc),
            last.map_or(f64::NAN, |c| c.test_acc),
            last.map_or(f64::NAN, |c| c.weight_change),
            run.trace.diverged_at.map_or(f64::NAN, |e| e as f64),
        ]);
    }

    let final_cols = ["capacity_gain", "train_acc", "test_acc", "weight_change"];
    let mut cols: Vec<(String, String)> = vec![("eta_bar".into(), "normalized effective learning rate".into())];
    for m in final_cols {
        cols.push((m.into(), format!("replicate mean of final {m}")));
        cols.push((format!("{m}_se"), format!("standard error of final {m}")));
    }
    let refs: Vec<(&str, &str)> = cols.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut gain = Table::new("capacity_gain", &refs);
    let per_run: Vec<Vec<f64>> = final_cols.iter().map(|m| summary.column(m).expect("declared")).collect();
    for &e in &p.eta_bars {
        let idx: Vec<usize> = (0..runs.len()).filter(|&k| runs[k].eta_bar == e).collect();
        let mut row = vec![e];
        for (j, c) in per_run.iter().enumerate() {
            let s = mean_se(&idx.iter().map(|&k| c[k]).collect::<Vec<_>>());
            row.push(s.mean);
            row.push(s.std_err);
            if j == 0 {
                out.summary.push(format!("eta_bar {e}: capacity gain {:.4} ± {:.4}", s.mean, s.std_err));
            }
        }
        gain.push(row);
    }

    let mut geometry = Table::new(
        "geometry",
        &[
            ("eta_bar", "normalized effective learning rate"),
            ("epoch", "checkpoint epoch"),
            ("radius", "replicate mean of R_M"),
            ("dimension", "replicate mean of D_M"),
            ("capacity", "replicate mean of alpha_M"),
            ("approx_capacity", "(1 + R^-2) / D at the mean radius and dimension"),
        ],
    );
    if !p.skip_glue {
        let (ec, epc, rc, dc, cc) = (
            trace.column("eta_bar").unwrap(),
            trace.column("epoch").unwrap(),
            trace.column("radius").unwrap(),
            trace.column("dimension").unwrap(),
            trace.column("capacity").unwrap(),
        );
        let mut keys: Vec<(f64, f64)> = Vec::new();
        for k in 0..ec.len() {
            if !keys.contains(&(ec[k], epc[k])) {
                keys.push((ec[k], epc[k]));
            }
        }
        for (e, ep) in keys {
            let idx: Vec<usize> = (0..ec.len()).filter(|&k| ec[k] == e && epc[k] == ep).collect();
            let avg = |c: &[f64]| gluekit::stats::mean(&idx.iter().map(|&k| c[k]).collect::<Vec<_>>());
            let (r, d) = (avg(&rc), avg(&dc));
            geometry.push(vec![e, ep, r, d, avg(&cc), capacity_from_geometry(d, r).unwrap_or(f64::NAN)]);
        }
    }
    if diverged > 0 {
        out.summary.push(format!("{diverged} of {} runs diverged; their traces stop early", runs.len()));
    }
    out.tables.push(trace);
    out.tables.push(summary);
    out.plots.push(gain);
    if !p.skip_glue {
        out.plots.push(geometry);
    }
    Ok(())
}

fn run_one_step(p: &OneStepParams, seed: u64, out: &mut ReportBundle) -> CliResult<()> {
    let jobs: Vec<(usize, usize)> = (0..p.etas.len()).flat_map(|i| (0..p.replicates).map(move |r| (i, r))).collect();
    let results: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let eta = p.etas[i];
            let ctx = format!("one-step eta {eta}, replicate {r}");
            let cfg = OneStepConfig {
                d: p.d,
                psi1: p.psi1,
                psi2: p.psi2,
                eta,
                label: p.label.clone(),
                activation: p.activation,
                n_test: p.n_test,
            };
            let res = one_step_experiment(&cfg, &RngStream::new(seed, 1).substream(r as u64)).ctx(&ctx)?;
            let cap = if p.glue_draws > 0 {
                let ens = res.feature_ensemble().ctx(&ctx)?;
                estimate_capacity(&ens, p.glue_draws, &RngStream::new(seed, 2).substream(r as u64)).ctx(&ctx)?.alpha
            } else {
                f64::NAN
            };
            Ok((res.accuracy, res.weight_change, cap))
        })
        .collect::<CliResult<_>>()?;
    let mut reps = Table::new(
        "replicates",
        &[
            ("eta", "one-step learning rate"),
            ("replicate", "replicate index"),
            ("accuracy", "test accuracy after the step"),
            ("weight_change", "||W_1 - W_0||_F / ||W_0||_F"),
            ("capacity", "alpha_M of post-step test features; nan when not estimated"),
        ],
    );
    for (&(i, r), &(acc, wc, cap)) in jobs.iter().zip(&results) {
        reps.push(vec![p.etas[i], r as f64, acc, wc, cap]);
    }
    let mut t = Table::new(
        "one_step",
        &[
            ("eta", "one-step learning rate"),
            ("accuracy", "replicate mean of test accuracy"),
            ("accuracy_se", "standard error of test accuracy"),
            ("accuracy_theory", "asymptotic test accuracy"),
            ("capacity_theory", "asymptotic capacity"),
            ("capacity", "replicate mean of alpha_M of features; nan when not estimated"),
            ("capacity_se", "standard error of alpha_M"),
            ("weight_change", "replicate mean of relative weight change"),
        ],
    );
    let (acc, wc, cap) = (reps.column("accuracy").unwrap(), reps.column("weight_change").unwrap(), reps.column("capacity").unwrap());
    for (i, &eta) in p.etas.iter().enumerate() {
        let idx: Vec<usize> = (0..jobs.len()).filter(|&k| jobs[k].0 == i).collect();
        let pick = |c: &[f64]| idx.iter().map(|&k| c[k]).collect::<Vec<_>>();
        let ctx = format!("theory at eta {eta}");
        let at = accuracy_theory(p.psi1, p.psi2, eta, &p.label, p.activation).ctx(&ctx)?;
        let ct = capacity_theory(p.psi1, p.psi2, eta, &p.label, p.activation).ctx(&ctx)?;
        let (a, c) = (mean_se(&pick(&acc)), mean_se(&pick(&cap)));
        t.push(vec![eta, a.mean, a.std_err, at, ct, c.mean, c.std_err, gluekit::stats::mean(&pick(&wc))]);
        out.summary.push(format!("eta {eta}: accuracy {:.4} ± {:.4}, theory {at:.4}", a.mean, a.std_err));
    }
    out.plots.push(t.clone());
    out.tables.push(t);
    out.tables.push(reps);
    Ok(())
}
