//! Synthetic manifold ensembles with known geometry.
//!
//! Manifold `i` draws everything from `stream.substream(i)`: center, axes,
//! coordinates, then training noise. Test noise and the center scale factor
//! come from its own children 1 and 2, so optional knobs never shift the
//! other draws.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gaussian_matrix, gaussian_vector, ManifoldEnsemble};
use crate::rng::RngStream;

pub const DEFAULT_NOISE_EPS: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalSpec {
    /// Number of manifolds.
    pub p: usize,
    /// Points per manifold.
    pub m: usize,
    /// Intrinsic dimension.
    pub d_intrinsic: usize,
    pub radius: f64,
    /// Ambient dimension.
    pub ambient: usize,
    pub noise_eps: f64,
}

impl SphericalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 || self.ambient == 0 || self.d_intrinsic == 0 {
            return Err(Error::InvalidArgument("P, M, D and d must be positive".into()));
        }
        if self.d_intrinsic > self.ambient {
            return Err(Error::InvalidArgument(format!(
                "intrinsic dimension {} exceeds ambient dimension {}",
                self.d_intrinsic, self.ambient
            )));
        }
        if !(self.radius > 0.0) || !(self.noise_eps >= 0.0) {
            return Err(Error::InvalidArgument("need R > 0 and noise_eps >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub rho_center: f64,
    pub rho_axis: f64,
    pub psi_center_axis: f64,
}

impl CorrelationSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| (0.0..1.0).contains(&r);
        if !ok(self.rho_center) || !ok(self.rho_axis) || !(self.psi_center_axis >= 0.0) {
            return Err(Error::InvalidArgument("need rho in [0, 1) and psi >= 0".into()));
        }
        Ok(())
    }
}

/// Lower Cholesky factor of (ρ^|i−j|).
pub fn ar1_cholesky(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    let c = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    c.cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::Numerical(format!("correlation matrix with rho = {rho} is not positive definite")))
}

fn mix_rows(rows: &mut [Array1<f64>], l: &DMatrix<f64>) {
    let mixed: Vec<Array1<f64>> = (0..rows.len())
        .map(|i| {
            let mut acc = Array1::zeros(rows[0].len());
            for (j, r) in rows.iter().enumerate().take(i + 1) {
                acc.scaled_add(l[(i, j)], r);
            }
            acc
        })
        .collect();
    rows.clone_from_slice(&mixed);
}

struct RawManifold {
    center: Array1<f64>,
    axes: Vec<Array1<f64>>,
    coords: Array2<f64>,
    train_noise: Array2<f64>,
    test_noise: Array2<f64>,
    q: f64,
}

fn draw_raw(spec: &SphericalSpec, stream: &RngStream, i: usize) -> RawManifold {
    let base = stream.substream(i as u64);
    let mut rng = base.rng();
    let sd = 1.0 / (spec.ambient as f64).sqrt();
    let center = gaussian_vector(spec.ambient, &mut rng) * sd;
    let axes = (0..spec.d_intrinsic).map(|_| gaussian_vector(spec.ambient, &mut rng) * sd).collect();
    let coords = gaussian_matrix(spec.m, spec.d_intrinsic, 1.0, &mut rng);
    let train_noise = gaussian_matrix(spec.m, spec.ambient, sd, &mut rng);
    let test_noise = gaussian_matrix(spec.m, spec.ambient, sd, &mut base.substream(1).rng());
    let q = base.substream(2).rng().sample::<f64, _>(StandardNormal);
    RawManifold { center, axes, coords, train_noise, test_noise, q }
}

/// Spherical manifolds with correlated centers and axes.
pub fn apply_correlations(
    spec: &SphericalSpec,
    corr: &CorrelationSpec,
    stream: &RngStream,
) -> Result<(ManifoldEnsemble, ManifoldEnsemble)> {
    spec.validate()?;
    corr.validate()?;
    let mut raw: Vec<RawManifold> = (0..spec.p).map(|i| draw_raw(spec, stream, i)).collect();
    if corr.rho_center != 0.0 {
        let l = ar1_cholesky(spec.p, corr.rho_center)?;
        let mut centers: Vec<Array1<f64>> = raw.iter().map(|r| r.center.clone()).collect();
        mix_rows(&mut centers, &l);
        for (r, c) in raw.iter_mut().zip(centers) {
            r.center = c;
        }
    }
    if corr.rho_axis != 0.0 {
        let l = ar1_cholesky(spec.p, corr.rho_axis)?;
        for j in 0..spec.d_intrinsic {
            let mut axes: Vec<Array1<f64>> = raw.iter().map(|r| r.axes[j].clone()).collect();
            mix_rows(&mut axes, &l);
            for (r, a) in raw.iter_mut().zip(axes) {
                r.axes[j] = a;
            }
        }
    }
    if corr.psi_center_axis != 0.0 {
        for r in raw.iter_mut() {
            r.center *= 1.0 + corr.psi_center_axis * r.q;
        }
    }
    let mut train = Vec::with_capacity(spec.p);
    let mut test = Vec::with_capacity(spec.p);
    for r in &raw {
        let mut clean = Array2::zeros((spec.m, spec.ambient));
        for k in 0..spec.m {
            let mut v = Array1::<f64>::zeros(spec.ambient);
            for (j, a) in r.axes.iter().enumerate() {
                v.scaled_add(r.coords[[k, j]], a);
            }
            let nv = v.dot(&v).sqrt();
            if nv > 0.0 {
                v /= nv;
            }
            let mut row = clean.row_mut(k);
            row.assign(&r.center);
            row.scaled_add(spec.radius, &v);
        }
        train.push(&clean + &(&r.train_noise * spec.noise_eps));
        test.push(&clean + &(&r.test_noise * spec.noise_eps));
    }
    Ok((ManifoldEnsemble::from_clouds(train)?, ManifoldEnsemble::from_clouds(test)?))
}

/// Uncorrelated spherical manifolds.
pub fn gen_isotropic_spherical(spec: &SphericalSpec, stream: &RngStream) -> Result<(ManifoldEnsemble, ManifoldEnsemble)> {
    apply_correlations(spec, &CorrelationSpec::default(), stream)
}

/// Gaussian clouds `u₀ + R v` with `u₀, v ~ N(0, I/d)`; the test set redraws `v`.
pub fn gen_isotropic_gaussian(
    p: usize,
    m: usize,
    radius: f64,
    d: usize,
    stream: &RngStream,
) -> Result<(ManifoldEnsemble, ManifoldEnsemble)> {
    if p == 0 || m == 0 || d == 0 {
        return Err(Error::InvalidArgument("P, M and d must be positive".into()));
    }
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument("radius must be nonnegative".into()));
    }
    let sd = 1.0 / (d as f64).sqrt();
    let mut train = Vec::with_capacity(p);
    let mut test = Vec::with_capacity(p);
    for i in 0..p {
        let base = stream.substream(i as u64);
        let mut rng = base.rng();
        let center = gaussian_vector(d, &mut rng) * sd;
        let cloud = |noise: Array2<f64>| {
            let mut x = noise * radius;
            x += &center;
            x
        };
        train.push(cloud(gaussian_matrix(m, d, sd, &mut rng)));
        test.push(cloud(gaussian_matrix(m, d, sd, &mut base.substream(1).rng())));
    }
    Ok((ManifoldEnsemble::from_clouds(train)?, ManifoldEnsemble::from_clouds(test)?))
}

/// I.i.d. uniform ±1 labels.
pub fn assign_labels(p: usize, stream: &RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SphericalSpec {
        SphericalSpec { p: 4, m: 10, d_intrinsic: 3, radius: 0.7, ambient: 50, noise_eps: 0.0 }
    }

    #[test]
    fn rejects_intrinsic_above_ambient() {
        let s = SphericalSpec { d_intrinsic: 60, ..spec() };
        assert!(gen_isotropic_spherical(&s, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn prescaled_points_have_unit_norm() {
        let s = spec();
        let stream = RngStream::new(1, 0);
        let (train, _) = gen_isotropic_spherical(&s, &stream).unwrap();
        for i in 0..s.p {
            let c = draw_raw(&s, &stream, i).center;
            for x in train.manifold(i).rows() {
                let dev = &x - &c;
                assert!((dev.dot(&dev).sqrt() / s.radius - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn train_and_test_differ_only_by_noise() {
        let s = SphericalSpec { noise_eps: 0.01, ..spec() };
        let stream = RngStream::new(2, 0);
        let (a, b) = gen_isotropic_spherical(&s, &stream).unwrap();
        let (a0, b0) = gen_isotropic_spherical(&SphericalSpec { noise_eps: 0.0, ..s }, &stream).unwrap();
        assert_eq!(a0, b0);
        let diff = (a.points() - b.points()).mapv(f64::abs).fold(0.0, |x: f64, &y| x.max(y));
        assert!(diff > 0.0 && diff < 0.01);
    }

    #[test]
    fn zero_correlation_is_bit_identical() {
        let s = spec();
        let stream = RngStream::new(3, 9);
        let iso = gen_isotropic_spherical(&s, &stream).unwrap();
        let cor = apply_correlations(&s, &CorrelationSpec { rho_center: 0.0, rho_axis: 0.0, psi_center_axis: 0.0 }, &stream).unwrap();
        assert_eq!(iso, cor);
    }

    #[test]
    fn radius_scales_deviation_linearly() {
        let stream = RngStream::new(4, 0);
        let (a, _) = gen_isotropic_spherical(&spec(), &stream).unwrap();
        let (b, _) = gen_isotropic_spherical(&SphericalSpec { radius: 1.4, ..spec() }, &stream).unwrap();
        for i in 0..4 {
            let c = draw_raw(&spec(), &stream, i).center;
            for (x, y) in a.manifold(i).rows().into_iter().zip(b.manifold(i).rows()) {
                let (dx, dy) = (&x - &c, &y - &c);
                for (u, v) in dx.iter().zip(dy.iter()) {
                    assert!((2.0 * u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gaussian_zero_radius_collapses() {
        let (e, _) = gen_isotropic_gaussian(3, 5, 0.0, 20, &RngStream::new(5, 0)).unwrap();
        for i in 0..3 {
            let m = e.manifold(i);
            for r in m.rows() {
                assert_eq!(r, m.row(0));
            }
        }
    }

    #[test]
    fn gaussian_determinism() {
        let a = gen_isotropic_gaussian(3, 5, 1.0, 20, &RngStream::new(6, 0)).unwrap();
        let b = gen_isotropic_gaussian(3, 5, 1.0, 20, &RngStream::new(6, 0)).unwrap();
        let c = gen_isotropic_gaussian(3, 5, 1.0, 20, &RngStream::new(6, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn ar1_factor_reconstructs() {
        let l = ar1_cholesky(5, 0.6).unwrap();
        let c = &l * l.transpose();
        for i in 0..5 {
            for j in 0..5 {
                assert!((c[(i, j)] - 0.6f64.powi((i as i32 - j as i32).abs())).abs() < 1e-12);
            }
        }
    }
}
