//! Spectral clustering, k-means and silhouette.

mod kmeans;

pub use kmeans::{kmeans, silhouette_score, ClusterLabels, KMeansResult};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eig_with, EigenMethod, SymmetricEigen};

/// Row-per-patient spectral coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub points: Array2<f64>,
}

impl Embedding {
    pub fn k(&self) -> usize {
        self.points.ncols()
    }
}

/// `L = I - D^{-1/2} S D^{-1/2}`, built from the upper triangle and
/// mirrored so that `L` is exactly symmetric.
pub fn normalized_laplacian(s: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch(format!("similarity is {}x{}", n, s.ncols())));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((s[[i, j]] - s[[j, i]]).abs());
        }
    }
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("similarity entries must be finite and non-negative"));
    }
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = s.row(i).sum();
        if !(d > 0.0) {
            return Err(Error::invalid(format!("row {} has zero degree", i)));
        }
        r.push(1.0 / d.sqrt());
    }
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = if i == j { 1.0 } else { 0.0 } - s[[i, j]] * r[i] * r[j];
            l[[i, j]] = v;
            l[[j, i]] = v;
        }
    }
    Ok(l)
}

/// Eigendecomposition of a similarity's normalized Laplacian, reusable
/// across cluster counts.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigen: SymmetricEigen,
}

impl SpectralDecomposition {
    pub fn new(s: ArrayView2<f64>, method: EigenMethod) -> Result<Self> {
        let l = normalized_laplacian(s)?;
        Ok(SpectralDecomposition {
            eigen: symmetric_eig_with(&l, method)?,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    /// Eigenvectors of the `k` smallest eigenvalues, each row scaled to
    /// unit length (zero rows stay zero).
    pub fn embed(&self, k: usize) -> Result<Embedding> {
        let n = self.eigen.values.len();
        if k < 2 || k >= n {
            return Err(Error::invalid(format!("embedding dimension must lie in [2, {}), got {}", n, k)));
        }
        let mut points = self.eigen.vectors.slice(ndarray::s![.., 0..k]).to_owned();
        for mut row in points.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        Ok(Embedding { points })
    }

    /// Columns of the embedding before row normalization.
    pub fn raw_vectors(&self, k: usize) -> ArrayView2<'_, f64> {
        self.eigen.vectors.slice(ndarray::s![.., 0..k])
    }

    pub fn cluster(&self, k: usize, seed: u64) -> Result<ClusterLabels> {
        let e = self.embed(k)?;
        Ok(kmeans(e.points.view(), k, seed)?.labels)
    }
}

pub fn spectral_embed(s: ArrayView2<f64>, k: usize) -> Result<Embedding> {
    SpectralDecomposition::new(s, EigenMethod::default())?.embed(k)
}

pub fn spectral_cluster(s: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusterLabels> {
    SpectralDecomposition::new(s, EigenMethod::default())?.cluster(k, seed)
}

/// Options for the spectral step of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpectralOptions {
    #[serde(default)]
    pub eigen: EigenMethod,
}
