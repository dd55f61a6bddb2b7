use std::fs;
use std::path::Path;
use std::process::Command;

use gluekit_cli::config::{load_config, Kind};
use gluekit_cli::data::{write_labels, write_matrix};
use gluekit_cli::report::{Metadata, ReportBundle};
use gluekit_cli::{emit_reports, load_activations, run_experiment, CliError, Format};
use ndarray::Array2;
use sha2::{Digest, Sha256};

fn cfg(kind: Kind, sets: &[&str]) -> gluekit_cli::ExperimentConfig {
    let mut o: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    o.push("threads=1".into());
    load_config(None, None, &o, Some(kind)).unwrap()
}

fn matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    // Deterministic values with full mantissas.
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let k = (i * cols + j) as f64 + seed as f64 * 0.37;
        (k * 0.618_033_988_749_894_9).sin() * 3.7 + 1e-9 * k
    })
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn csv_and_npy_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let x = matrix(12, 5, 1);
    let labels: Vec<i64> = (0..12).map(|i| i % 3).collect();
    write_labels(&dir.path().join("y.txt"), &labels).unwrap();
    for (file, fmt) in [("x.csv", Format::Csv), ("x.npy", Format::Npy)] {
        let p = dir.path().join(file);
        write_matrix(&p, fmt, &x).unwrap();
        let ens = load_activations(&p, fmt, &dir.path().join("y.txt")).unwrap();
        assert_eq!((ens.n_manifolds(), ens.ambient_dim(), ens.n_points()), (3, 5, 12));
        for (i, row) in ens.flatten() {
            let orig = (0..12).find(|&k| labels[k] == i as i64 && x.row(k).to_vec() == row);
            assert!(orig.is_some(), "{file}: row not found");
        }
        let mut back: Vec<u64> = ens.points().iter().map(|v| v.to_bits()).collect();
        let mut want: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        back.sort_unstable();
        want.sort_unstable();
        assert_eq!(back, want, "{file}");
    }
}

#[test]
fn fixture_groups_into_ten_manifolds() {
    let dir = tempfile::tempdir().unwrap();
    let x = matrix(100, 512, 2);
    let labels: Vec<i64> = (0..100).map(|i| (i * 7) % 10).collect();
    let (xp, yp) = (dir.path().join("acts.npy"), dir.path().join("labels.txt"));
    write_matrix(&xp, Format::Npy, &x).unwrap();
    write_labels(&yp, &labels).unwrap();
    let ens = load_activations(&xp, Format::Npy, &yp).unwrap();
    assert_eq!(ens.n_manifolds(), 10);
    assert_eq!(ens.ambient_dim(), 512);
    assert!((0..10).all(|i| ens.manifold_size(i) == 10));
}

#[test]
fn bad_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_labels(&d.join("y3.txt"), &[0, 1, 0]).unwrap();
    write_labels(&d.join("y2.txt"), &[0, 1]).unwrap();
    fs::write(d.join("nan.csv"), "1,2\n3,nan\n0,0\n").unwrap();
    fs::write(d.join("ok.csv"), "1,2\n3,4\n0,1\n").unwrap();
    fs::write(d.join("y_bad.txt"), "0\none\n1\n").unwrap();
    let mut fortran = b"\x93NUMPY\x01\x00".to_vec();
    let header = "{'descr': '<f8', 'fortran_order': True, 'shape': (3, 2), }\n";
    fortran.extend((header.len() as u16).to_le_bytes());
    fortran.extend(header.as_bytes());
    fortran.extend([0u8; 48]);
    fs::write(d.join("f.npy"), fortran).unwrap();

    let cases = [
        ("nan.csv", Format::Csv, "y3.txt", "non-finite"),
        ("ok.csv", Format::Csv, "y2.txt", "2 labels for 3"),
        ("ok.csv", Format::Csv, "y_bad.txt", "not an integer"),
        ("f.npy", Format::Npy, "y3.txt", "fortran_order"),
        ("missing.csv", Format::Csv, "y3.txt", "missing.csv"),
    ];
    for (x, fmt, y, needle) in cases {
        let e = load_activations(&d.join(x), fmt, &d.join(y)).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{x}");
        assert!(e.to_string().contains(needle), "{x}: {e}");
    }
}

#[test]
fn cover_check_emits_curve_with_closed_form() {
    let c = cfg(Kind::CoverCheck, &["cover-check.n=10", "cover-check.p-values=[5, 20, 30]", "cover-check.trials=200", "cover-check.capacity-points=20"]);
    let b = run_experiment(&c).unwrap();
    let t = b.table("cover").unwrap();
    assert_eq!(t.column("p").unwrap(), vec![5.0, 20.0, 30.0]);
    let (ph, cp) = (t.column("p_hat").unwrap(), t.column("cover_prob").unwrap());
    assert_eq!(ph[0], 1.0);
    assert_eq!(cp[0], 1.0);
    assert!((cp[1] - 0.5).abs() < 1e-12);
    for k in 0..3 {
        assert!((ph[k] - cp[k]).abs() < 0.12, "load {k}: {} vs {}", ph[k], cp[k]);
    }
    assert!(b.plot("cover").is_some());
    let alpha = b.table("capacity").unwrap().column("alpha_sim").unwrap()[0];
    assert!((1.5..=2.9).contains(&alpha), "{alpha}");
}

#[test]
fn synth_sweep_reports_geometry_columns() {
    let c = cfg(
        Kind::SynthSweep,
        &["synth-sweep.values=[2.0, 6.0]", "synth-sweep.seeds=2", "synth-sweep.n-draws=30", "synth-sweep.base.m=40", "synth-sweep.base.ambient=200"],
    );
    let b = run_experiment(&c).unwrap();
    let raw = b.table("sweep").unwrap();
    assert_eq!(raw.rows.len(), 4);
    let plot = b.plot("sweep").unwrap();
    for col in ["dimension", "radius", "capacity"] {
        assert!(plot.column(col).is_some(), "{col}");
    }
    let d = plot.column("dimension").unwrap();
    let a = plot.column("capacity").unwrap();
    assert!(d[1] > d[0] && a[1] < a[0], "D_M {d:?}, alpha_M {a:?}");
}

#[test]
fn same_config_gives_identical_files_and_reemit_is_idempotent() {
    let c = cfg(Kind::Glue, &["glue.n-draws=20", "glue.data.spherical.p=6", "glue.data.spherical.m=10", "glue.data.spherical.ambient=60"]);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_reports(&run_experiment(&c).unwrap(), d1.path()).unwrap();
    let bundle = run_experiment(&c).unwrap();
    emit_reports(&bundle, d2.path()).unwrap();
    let first = read_dir_bytes(d1.path());
    assert_eq!(first, read_dir_bytes(d2.path()));
    emit_reports(&bundle, d1.path()).unwrap();
    assert_eq!(first, read_dir_bytes(d1.path()));
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["glue.csv", "metadata.json", "summary.txt"]);
}

#[test]
fn sidecar_matches_tables_and_hash_is_recomputable() {
    let c = cfg(Kind::TheoryCurve, &["theory-curve.etas=[0.0, 1.0]"]);
    let b = run_experiment(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&b, dir.path()).unwrap();
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("metadata.json")).unwrap()).unwrap();
    let text = serde_json::to_string(&meta["config"]).unwrap();
    assert_eq!(meta["config_hash"].as_str().unwrap(), hex::encode(Sha256::digest(text.as_bytes())));
    assert_eq!(meta["config_hash"].as_str().unwrap(), c.hash());
    for entry in meta["tables"].as_array().unwrap().iter().chain(meta["plots"].as_array().unwrap()) {
        let csv = fs::read_to_string(dir.path().join(entry["file"].as_str().unwrap())).unwrap();
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let declared: Vec<&str> = entry["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
        assert_eq!(header, declared);
        assert!(entry["columns"].as_array().unwrap().iter().all(|c| !c["description"].as_str().unwrap().is_empty()));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len() as u64, entry["rows"].as_u64().unwrap());
        assert!(rows.iter().all(|r| r.split(',').count() == header.len()));
    }
    let cap = b.table("theory").unwrap().column("capacity").unwrap();
    assert!(cap[0].is_finite() && cap[1] > cap[0], "{cap:?}");
    let flat = cfg(Kind::TheoryCurve, &["theory-curve.etas=[1.0]", "theory-curve.label={ kind = \"constant\", value = 0.5 }"]);
    let c = run_experiment(&flat).unwrap().table("theory").unwrap().column("capacity").unwrap()[0];
    assert!((c - 2.0).abs() < 1e-6, "{c}");
}

#[test]
fn empty_bundle_writes_summary_only() {
    let meta = Metadata {
        kind: "glue".into(),
        config_hash: "0".repeat(64),
        seed: 0,
        code_version: "test".into(),
        threads: 1,
        config: serde_json::Value::Null,
    };
    let dir = tempfile::tempdir().unwrap();
    let written = emit_reports(&ReportBundle::new(meta), dir.path()).unwrap();
    assert_eq!(written, vec![dir.path().join("summary.txt")]);
    assert_eq!(read_dir_bytes(dir.path()).len(), 1);
}

#[test]
fn parallel_statistics_match_serial() {
    let sets = ["synth-sweep.values=[3.0, 5.0]", "synth-sweep.seeds=3", "synth-sweep.n-draws=20", "synth-sweep.base.m=30", "synth-sweep.base.ambient=150"];
    let serial = run_experiment(&cfg(Kind::SynthSweep, &sets)).unwrap();
    let mut c = cfg(Kind::SynthSweep, &sets);
    c.threads = Some(4);
    let parallel = run_experiment(&c).unwrap();
    let (a, b) = (serial.table("sweep").unwrap(), parallel.table("sweep").unwrap());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()) || (x.is_nan() && y.is_nan()));
        }
    }
}

#[test]
fn small_training_and_one_step_runs() {
    let c = cfg(
        Kind::Train2l,
        &[
            "train2l.p=4",
            "train2l.m=5",
            "train2l.input-dim=12",
            "train2l.width=16",
            "train2l.readouts=2",
            "train2l.epochs=30",
            "train2l.checkpoints=3",
            "train2l.replicates=2",
            "train2l.eta=1.0",
            "train2l.eta-bars=[1.0, 4.0]",
            "train2l.glue-draws=10",
            "train2l.final-glue-draws=10",
        ],
    );
    let b = run_experiment(&c).unwrap();
    let runs = b.table("runs").unwrap();
    assert_eq!(runs.rows.len(), 4);
    assert_eq!(runs.column("alpha").unwrap(), vec![1.0, 1.0, 0.25, 0.25]);
    assert!(runs.column("capacity_gain").unwrap().iter().all(|g| g.is_finite()));
    let trace = b.table("trace").unwrap();
    assert_eq!(trace.column("epoch").unwrap().iter().filter(|&&e| e == 0.0).count(), 4);
    assert!(b.plot("capacity_gain").is_some() && b.plot("geometry").is_some());

    let bce = cfg(
        Kind::Train2l,
        &["train2l.loss=bce", "train2l.skip-glue=true", "train2l.p=4", "train2l.m=3", "train2l.input-dim=8", "train2l.width=8", "train2l.epochs=5", "train2l.replicates=1"],
    );
    let b = run_experiment(&bce).unwrap();
    assert!(b.plot("geometry").is_none());
    assert!(b.table("runs").unwrap().column("capacity_gain").unwrap()[0].is_nan());

    let o = cfg(Kind::OneStep, &["one-step.d=40", "one-step.replicates=2", "one-step.n-test=200", "one-step.etas=[0.0, 2.0]", "one-step.glue-draws=5"]);
    let b = run_experiment(&o).unwrap();
    let t = b.table("one_step").unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.column("capacity").unwrap().iter().all(|c| c.is_finite() && *c > 0.0));
    assert_eq!(b.table("replicates").unwrap().rows.len(), 4);
}

#[test]
fn file_sources_feed_glue_and_simcap() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<i64> = (0..30).map(|i| i % 3).collect();
    let mut x = matrix(30, 40, 3) * 0.05;
    for (k, mut r) in x.rows_mut().into_iter().enumerate() {
        r[labels[k] as usize] += 1.0;
    }
    let (xp, yp) = (dir.path().join("x.csv"), dir.path().join("y.txt"));
    write_matrix(&xp, Format::Csv, &x).unwrap();
    write_labels(&yp, &labels).unwrap();
    let file = |k: &str| {
        vec![
            format!("{k}.data.file.activations={:?}", xp.display().to_string()),
            format!("{k}.data.file.labels={:?}", yp.display().to_string()),
        ]
    };
    let mut g = file("glue");
    g.push("glue.n-draws=10".into());
    let c = load_config(None, None, &g, Some(Kind::Glue)).unwrap();
    let b = run_experiment(&c).unwrap();
    assert_eq!(b.table("glue").unwrap().column("n_manifolds").unwrap(), vec![3.0]);
    let mut s = file("simcap");
    s.push("simcap.trials=20".into());
    let c = load_config(None, None, &s, Some(Kind::Simcap)).unwrap();
    let b = run_experiment(&c).unwrap();
    let alpha = b.table("simcap").unwrap().column("alpha_sim").unwrap()[0];
    assert!(alpha > 0.0 && alpha <= 3.0);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gluekit"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let ok = bin()
        .args(["theory-curve", "--set", "theory-curve.etas=[1.0]", "--out"])
        .arg(&out)
        .env("GLUEKIT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("plot_theory.csv").exists());

    let bad_key = bin().args(["cover-check", "--set", "cover-check.bogus=1"]).output().unwrap();
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_threads = bin().args(["theory-curve", "--out"]).arg(&out).env("GLUEKIT_THREADS", "zero").output().unwrap();
    assert_eq!(bad_threads.status.code(), Some(2));
    let wrong_kind = bin().args(["glue", "--preset", "cover"]).output().unwrap();
    assert_eq!(wrong_kind.status.code(), Some(2));

    let missing = bin()
        .args(["glue", "--set", "glue.data.file.activations=\"/nonexistent/a.csv\"", "--set", "glue.data.file.labels=\"/nonexistent/b.txt\"", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));

    // Zero activations leave the cone problem without a direction.
    fs::write(dir.path().join("same.csv"), "0,0\n0,0\n").unwrap();
    fs::write(dir.path().join("same.txt"), "0\n1\n").unwrap();
    let deg = bin()
        .args(["glue", "--set"])
        .arg(format!("glue.data.file.activations={:?}", dir.path().join("same.csv").display().to_string()))
        .arg("--set")
        .arg(format!("glue.data.file.labels={:?}", dir.path().join("same.txt").display().to_string()))
        .args(["--set", "glue.n-draws=4", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(deg.status.code(), Some(4), "{}", String::from_utf8_lossy(&deg.stderr));

    let list = bin().arg("presets").output().unwrap();
    let names = String::from_utf8(list.stdout).unwrap();
    for p in ["fig3a", "fig4a", "fig4b", "cover", "glue-validation", "numerical-check"] {
        assert!(names.lines().any(|l| l == p), "{p}");
    }
}

#[test]
fn thread_env_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(threads);
        let o = bin()
            .args(["cover-check", "--set", "cover-check.n=8", "--set", "cover-check.p-values=[8, 16]", "--set", "cover-check.trials=50", "--set", "cover-check.capacity-points=0", "--out"])
            .arg(&out)
            .env("GLUEKIT_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        fs::read(out.join("cover.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn config_error_for_conflicting_sources() {
    let e = load_config(Some(Path::new("x.toml")), Some("cover"), &[], None).unwrap_err();
    assert!(matches!(e, CliError::Config(_)));
}
