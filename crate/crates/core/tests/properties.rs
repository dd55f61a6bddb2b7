use gluekit::cone::{nnls, project_to_polar_cone, strictly_separable, ConeProjectionProblem, DEFAULT_TOL, SEPARABILITY_TOL};
use gluekit::glue::{estimate_capacity, estimate_geometry, GlueOptions};
use gluekit::model::build_ensemble;
use gluekit::stats::spearman;
use gluekit::theory::cover::cover_prob;
use gluekit::twolayer::cka;
use gluekit::{ManifoldEnsemble, RngStream};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn vector(n: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(Array1::from)
}

fn system() -> impl Strategy<Value = (Array2<f64>, Array1<f64>)> {
    (1usize..10, 1usize..10).prop_flat_map(|(k, n)| (matrix(k, n), vector(n)))
}

fn nonzero_rows(g: &Array2<f64>) -> bool {
    g.rows().into_iter().all(|r| r.dot(&r) > 1e-6)
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nnls_satisfies_kkt((a, b) in system()) {
        let lam = nnls(a.view(), b.view(), DEFAULT_TOL).unwrap();
        let grad = a.dot(&(&b - &a.t().dot(&lam)));
        let scale = 1e-6 * (1.0 + norm(&b)) * a.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(1.0, f64::max);
        for k in 0..lam.len() {
            prop_assert!(lam[k] >= 0.0);
            prop_assert!(grad[k] <= scale);
            if lam[k] > 0.0 {
                prop_assert!(grad[k].abs() <= scale);
            }
        }
    }

    #[test]
    fn polar_projection_certificates((g, t) in system()) {
        prop_assume!(nonzero_rows(&g));
        let sol = project_to_polar_cone(
            &ConeProjectionProblem { probe: t.clone(), signed_points: g.clone(), row_owner: vec![] },
            DEFAULT_TOL,
        )
        .unwrap();
        let tol = 1e-6 * (1.0 + norm(&t));
        prop_assert!(norm(&(&t - &(&sol.x_star + &sol.cone_proj))) <= tol);
        prop_assert!(sol.x_star.dot(&sol.cone_proj).abs() <= tol * (1.0 + norm(&t)));
        let gx = g.dot(&sol.x_star);
        for k in 0..gx.len() {
            let rn = g.row(k).dot(&g.row(k)).sqrt();
            prop_assert!(gx[k] <= tol * rn);
            prop_assert!((sol.dual[k] * gx[k]).abs() <= tol * (1.0 + norm(&t)));
        }
        let lam = nnls(g.view(), t.view(), DEFAULT_TOL).unwrap();
        prop_assert!(norm(&(&sol.x_star - &(&t - &g.t().dot(&lam)))) <= tol);
    }

    #[test]
    fn row_scaling_keeps_projection((g, t) in system(), scales in prop::collection::vec(0.1f64..10.0, 10)) {
        prop_assume!(nonzero_rows(&g));
        let mut h = g.clone();
        for (k, mut r) in h.rows_mut().into_iter().enumerate() {
            r *= scales[k];
        }
        let solve = |m: &Array2<f64>| {
            project_to_polar_cone(
                &ConeProjectionProblem { probe: t.clone(), signed_points: m.clone(), row_owner: vec![] },
                DEFAULT_TOL,
            )
            .unwrap()
        };
        let (a, b) = (solve(&g), solve(&h));
        prop_assert!(norm(&(&a.cone_proj - &b.cone_proj)) <= 1e-6 * (1.0 + norm(&t)));
    }

    #[test]
    fn removing_rows_keeps_separability((g, _) in system(), keep in prop::collection::vec(any::<bool>(), 10)) {
        prop_assume!(nonzero_rows(&g));
        let rows: Vec<usize> = (0..g.nrows()).filter(|&k| keep[k]).collect();
        prop_assume!(!rows.is_empty());
        if strictly_separable(g.view(), SEPARABILITY_TOL).unwrap().is_separable() {
            let sub = g.select(Axis(0), &rows);
            prop_assert!(strictly_separable(sub.view(), SEPARABILITY_TOL).unwrap().is_separable());
        }
    }

    #[test]
    fn cover_prob_is_a_monotone_probability(n in 1u64..80, p in 1u64..200) {
        let v = cover_prob(n, p);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(cover_prob(n, p + 1) <= v + 1e-15);
        prop_assert!(cover_prob(n + 1, p) >= v - 1e-15);
        if p <= n {
            prop_assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn grouping_then_flattening_is_identity(labels in prop::collection::vec(0u8..5, 1..30), seed in 0u64..1000) {
        let mut rng = RngStream::new(seed, 0).rng();
        let rows: Vec<(u8, Vec<f64>)> = labels
            .iter()
            .map(|&l| (l, gluekit::model::gaussian_vector(3, &mut rng).to_vec()))
            .collect();
        let ens = build_ensemble(rows.clone()).unwrap();
        let mut back: Vec<(String, Vec<u64>)> = ens
            .flatten()
            .into_iter()
            .map(|(i, v)| (ens.label_names()[i].clone(), v.iter().map(|x| x.to_bits()).collect()))
            .collect();
        let mut orig: Vec<(String, Vec<u64>)> =
            rows.iter().map(|(l, v)| (l.to_string(), v.iter().map(|x| x.to_bits()).collect())).collect();
        back.sort();
        orig.sort();
        prop_assert_eq!(back, orig);
    }

    #[test]
    fn cka_is_bounded_and_symmetric(a in matrix(6, 4), b in matrix(6, 3)) {
        let (ka, kb) = (a.dot(&a.t()), b.dot(&b.t()));
        if let (Ok(x), Ok(y)) = (cka(ka.view(), kb.view()), cka(kb.view(), ka.view())) {
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn spearman_is_bounded(x in prop::collection::vec(-5.0f64..5.0, 3..20), seed in 0u64..100) {
        let mut rng = RngStream::new(seed, 0).rng();
        let y: Vec<f64> = gluekit::model::gaussian_vector(x.len(), &mut rng).to_vec();
        let s = spearman(&x, &y);
        prop_assert!(s.is_nan() || (-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
    }
}

fn small_ensemble(seed: u64, p: usize, m: usize, n: usize) -> ManifoldEnsemble {
    let mut rng = RngStream::new(seed, 0).rng();
    ManifoldEnsemble::from_clouds(
        (0..p)
            .map(|_| {
                let c = gluekit::model::gaussian_matrix(1, n, 1.0, &mut rng);
                &gluekit::model::gaussian_matrix(m, n, 0.4, &mut rng) + &c
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn capacity_positive_and_finite(seed in 0u64..10_000, p in 2usize..6, m in 1usize..5) {
        let ens = small_ensemble(seed, p, m, 12);
        let est = estimate_capacity(&ens, 20, &RngStream::new(seed, 1)).unwrap();
        prop_assert!(est.alpha.is_finite() && est.alpha > 0.0);
    }

    #[test]
    fn uniform_scaling_keeps_geometry(seed in 0u64..10_000, c in 0.2f64..5.0) {
        let ens = small_ensemble(seed, 4, 4, 15);
        let scaled = ens.with_points(ens.points() * c).unwrap();
        let opts = GlueOptions { n_draws: 16, ..Default::default() };
        let a = estimate_geometry(&ens, &opts, &RngStream::new(seed, 2)).unwrap();
        let b = estimate_geometry(&scaled, &opts, &RngStream::new(seed, 2)).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-7 * (1.0 + x.abs());
        prop_assert!(close(a.center_align.value, b.center_align.value));
        prop_assert!(close(a.axis_align.value, b.axis_align.value));
        prop_assert!(close(a.center_axis_align.value, b.center_axis_align.value));
        prop_assert!(close(a.dimension.value, b.dimension.value));
    }
}
