//! Manifolds, ensembles and dichotomies.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One labeled point cloud; rows are points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloudManifold {
    pub label_id: usize,
    pub points: Array2<f64>,
}

impl PointCloudManifold {
    pub fn new(label_id: usize, points: Array2<f64>) -> Result<Self> {
        check_matrix(&points.view())?;
        Ok(PointCloudManifold { label_id, points })
    }
}

fn check_matrix(points: &ArrayView2<f64>) -> Result<()> {
    if points.nrows() == 0 || points.ncols() == 0 {
        return Err(Error::Empty("manifold needs at least one point and one dimension".into()));
    }
    for ((row, col), v) in points.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// P manifolds in a shared ambient space, stored as one stacked K×N matrix.
///
/// Manifold `i` owns rows `offsets[i]..offsets[i + 1]`. Manifold indices are
/// dense `0..P`; `label_names` keeps the original labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldEnsemble {
    points: Array2<f64>,
    offsets: Vec<usize>,
    label_names: Vec<String>,
}

impl ManifoldEnsemble {
    /// Build from manifolds with unique label ids; manifolds are ordered by ascending id.
    pub fn from_manifolds(mut manifolds: Vec<PointCloudManifold>) -> Result<Self> {
        if manifolds.is_empty() {
            return Err(Error::Empty("ensemble needs at least one manifold".into()));
        }
        manifolds.sort_by_key(|m| m.label_id);
        for w in manifolds.windows(2) {
            if w[0].label_id == w[1].label_id {
                return Err(Error::InvalidArgument(format!("duplicate label {}", w[0].label_id)));
            }
        }
        let names = manifolds.iter().map(|m| m.label_id.to_string()).collect();
        Self::from_clouds_named(manifolds.into_iter().map(|m| m.points).collect(), names)
    }

    /// Build from clouds whose manifold index is their position.
    pub fn from_clouds(clouds: Vec<Array2<f64>>) -> Result<Self> {
        let names = (0..clouds.len()).map(|i| i.to_string()).collect();
        Self::from_clouds_named(clouds, names)
    }

    fn from_clouds_named(clouds: Vec<Array2<f64>>, label_names: Vec<String>) -> Result<Self> {
        if clouds.is_empty() {
            return Err(Error::Empty("ensemble needs at least one manifold".into()));
        }
        let n = clouds[0].ncols();
        let mut offsets = vec![0];
        for c in &clouds {
            check_matrix(&c.view())?;
            if c.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: c.ncols() });
            }
            offsets.push(offsets.last().unwrap() + c.nrows());
        }
        let mut points = Array2::zeros((*offsets.last().unwrap(), n));
        for (i, c) in clouds.iter().enumerate() {
            points.slice_mut(s![offsets[i]..offsets[i + 1], ..]).assign(c);
        }
        Ok(ManifoldEnsemble { points, offsets, label_names })
    }

    /// Same manifold structure with replaced points (e.g. after a projection).
    pub fn with_points(&self, points: Array2<f64>) -> Result<Self> {
        if points.nrows() != self.points.nrows() {
            return Err(Error::DimensionMismatch { expected: self.points.nrows(), found: points.nrows() });
        }
        check_matrix(&points.view())?;
        Ok(ManifoldEnsemble { points, offsets: self.offsets.clone(), label_names: self.label_names.clone() })
    }

    pub fn n_manifolds(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn manifold_size(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn manifold(&self, i: usize) -> ArrayView2<'_, f64> {
        self.points.slice(s![self.offsets[i]..self.offsets[i + 1], ..])
    }

    pub fn point(&self, k: usize) -> ArrayView1<'_, f64> {
        self.points.row(k)
    }

    /// Stacked K×N point matrix.
    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Manifold index of every stacked row.
    pub fn row_owner(&self) -> Vec<usize> {
        let mut owner = Vec::with_capacity(self.n_points());
        for i in 0..self.n_manifolds() {
            owner.extend(std::iter::repeat_n(i, self.manifold_size(i)));
        }
        owner
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn manifolds(&self) -> Vec<PointCloudManifold> {
        (0..self.n_manifolds())
            .map(|i| PointCloudManifold { label_id: i, points: self.manifold(i).to_owned() })
            .collect()
    }

    /// Inverse of [`build_ensemble`]: (dense label, vector) pairs in storage order.
    pub fn flatten(&self) -> Vec<(usize, Vec<f64>)> {
        let owner = self.row_owner();
        self.points.rows().into_iter().zip(owner).map(|(r, i)| (i, r.to_vec())).collect()
    }

    /// Signed copy of the stacked points: row k multiplied by `y[owner(k)]`.
    pub fn signed_points(&self, y: &Dichotomy) -> Array2<f64> {
        let mut g = self.points.clone();
        for i in 0..self.n_manifolds() {
            let mut block = g.slice_mut(s![self.offsets[i]..self.offsets[i + 1], ..]);
            block *= y.sign(i);
        }
        g
    }
}

/// Group labeled vectors into manifolds, ordered by ascending label.
pub fn build_ensemble<L: Ord + ToString>(labeled_vectors: Vec<(L, Vec<f64>)>) -> Result<ManifoldEnsemble> {
    let Some(first) = labeled_vectors.first() else {
        return Err(Error::Empty("no vectors".into()));
    };
    let n = first.1.len();
    if n == 0 {
        return Err(Error::Empty("zero-dimensional vectors".into()));
    }
    let mut groups: BTreeMap<L, Vec<Vec<f64>>> = BTreeMap::new();
    for (row, (label, v)) in labeled_vectors.into_iter().enumerate() {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
        if let Some(col) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        groups.entry(label).or_default().push(v);
    }
    let mut names = Vec::with_capacity(groups.len());
    let mut clouds = Vec::with_capacity(groups.len());
    for (label, rows) in groups {
        names.push(label.to_string());
        let m = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        clouds.push(Array2::from_shape_vec((m, n), flat).expect("shape checked"));
    }
    ManifoldEnsemble::from_clouds_named(clouds, names)
}

/// A ±1 labeling of the manifolds.
#[derive(Clone, Debug, PartialEq)]
pub struct Dichotomy {
    signs: Vec<f64>,
}

impl Dichotomy {
    pub fn new(signs: Vec<f64>) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::Empty("dichotomy".into()));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidArgument("dichotomy signs must be +1 or -1".into()));
        }
        Ok(Dichotomy { signs })
    }

    pub fn from_rng<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        let signs = (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Dichotomy { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn sign(&self, i: usize) -> f64 {
        self.signs[i]
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }
}

pub fn sample_dichotomy(p: usize, stream: &RngStream) -> Dichotomy {
    Dichotomy::from_rng(p, &mut stream.rng())
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Matrix with i.i.d. N(0, scale²) entries, filled row by row.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn sample_gaussian_probe(n: usize, stream: &RngStream) -> Array1<f64> {
    gaussian_vector(n, &mut stream.rng())
}
