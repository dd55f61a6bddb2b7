use gluekit::model::build_ensemble;
use gluekit::stats::mean;
use gluekit::synth::{
    apply_correlations, assign_labels, gen_isotropic_gaussian, gen_isotropic_spherical, CorrelationSpec,
    SphericalSpec,
};
use gluekit::RngStream;
use ndarray::{Array1, Axis};

fn spec(p: usize, m: usize, d: usize, r: f64, n: usize, eps: f64) -> SphericalSpec {
    SphericalSpec { p, m, d_intrinsic: d, radius: r, ambient: n, noise_eps: eps }
}

/// Centers recovered from an ensemble whose points collapse onto them.
fn centers(corr: &CorrelationSpec, p: usize, n: usize, seed: u64) -> Vec<Array1<f64>> {
    let (train, _) = apply_correlations(&spec(p, 1, 1, 1e-12, n, 0.0), corr, &RngStream::new(seed, 0)).unwrap();
    (0..p).map(|i| train.manifold(i).row(0).to_owned()).collect()
}

#[test]
fn center_cosines_are_small() {
    let c = centers(&CorrelationSpec::default(), 20, 1000, 1);
    for i in 0..20 {
        for j in 0..i {
            let cos = c[i].dot(&c[j]) / (c[i].dot(&c[i]) * c[j].dot(&c[j])).sqrt();
            assert!(cos.abs() <= 0.15, "cos({i},{j}) = {cos}");
        }
    }
}

#[test]
fn manifold_mean_obeys_clt_bound() {
    let (r, d, m, eps) = (1.5, 4, 200, 1e-2);
    let s = spec(3, m, d, r, 300, eps);
    let (train, _) = gen_isotropic_spherical(&s, &RngStream::new(2, 0)).unwrap();
    let cs = centers(&CorrelationSpec::default(), 3, 300, 2);
    // Centers are the first draw of each manifold stream, so the collapsed
    // copy from the same seed shares them.
    let bound = r * 3.0 / ((m * d) as f64).sqrt() * (d as f64).sqrt() + eps * 3.0 / (m as f64).sqrt();
    for i in 0..3 {
        let mu = train.manifold(i).mean_axis(Axis(0)).unwrap();
        let dev = &mu - &cs[i];
        assert!(dev.dot(&dev).sqrt() <= bound, "manifold {i}");
    }
}

#[test]
fn center_correlation_matches_ar1() {
    let (p, n, reps, rho) = (5, 40, 200, 0.6);
    let corr = CorrelationSpec { rho_center: rho, ..Default::default() };
    let mut cross = vec![vec![0.0; p]; p];
    for seed in 0..reps {
        let c = centers(&corr, p, n, 1000 + seed);
        for i in 0..p {
            for j in 0..p {
                cross[i][j] += c[i].dot(&c[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..p {
            let emp = cross[i][j] / (cross[i][i] * cross[j][j]).sqrt();
            let want = rho.powi((i as i32 - j as i32).abs());
            assert!((emp - want).abs() <= 0.1, "({i},{j}): {emp} vs {want}");
        }
    }
}

#[test]
fn center_scaling_has_target_cv() {
    let corr = CorrelationSpec { psi_center_axis: 0.5, ..Default::default() };
    let norms: Vec<f64> = (0..400)
        .map(|seed| {
            let c = &centers(&corr, 1, 500, 5000 + seed)[0];
            c.dot(c).sqrt()
        })
        .collect();
    let mu = mean(&norms);
    let sd = (norms.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (norms.len() - 1) as f64).sqrt();
    let cv = sd / mu;
    assert!((cv - 0.5).abs() <= 0.1, "cv = {cv}");
}

#[test]
fn gaussian_cloud_radius_concentrates() {
    let r = 0.7;
    let (train, _) = gen_isotropic_gaussian(3, 50, r, 1000, &RngStream::new(3, 0)).unwrap();
    let (flat, _) = gen_isotropic_gaussian(3, 1, 0.0, 1000, &RngStream::new(3, 0)).unwrap();
    for i in 0..3 {
        let c = flat.manifold(i).row(0).to_owned();
        let dists: Vec<f64> = train.manifold(i).rows().into_iter().map(|x| (&x - &c).dot(&(&x - &c)).sqrt()).collect();
        let m = mean(&dists);
        assert!((m / r - 1.0).abs() <= 0.1, "mean distance {m}");
    }
}

#[test]
fn generated_ensembles_pass_validation() {
    let s = spec(4, 6, 2, 1.0, 10, 1e-2);
    let corr = CorrelationSpec { rho_center: 0.3, rho_axis: 0.5, psi_center_axis: 0.2 };
    let (train, test) = apply_correlations(&s, &corr, &RngStream::new(4, 0)).unwrap();
    for e in [train, test] {
        let rebuilt = build_ensemble(e.flatten()).unwrap();
        assert_eq!(rebuilt.points(), e.points());
    }
}

#[test]
fn labels_are_balanced_and_deterministic() {
    let y = assign_labels(10_000, &RngStream::new(5, 0));
    assert!(y.iter().all(|&v| v == 1.0 || v == -1.0));
    // Four standard deviations of the mean of 10⁴ fair signs.
    assert!(mean(&y).abs() <= 0.04);
    assert_eq!(y, assign_labels(10_000, &RngStream::new(5, 0)));
    assert_ne!(y, assign_labels(10_000, &RngStream::new(5, 1)));
}
