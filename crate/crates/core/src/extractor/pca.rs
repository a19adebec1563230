use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Top-`D` principal directions of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    /// `D x d`, row-major, rows orthonormal.
    pub components: Vec<f64>,
    pub mean: Vec<f64>,
    /// Covariance eigenvalue for each component, descending.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub(crate) fn from_parts(input_dim: usize, components: Vec<f64>, mean: Vec<f64>, explained_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != input_dim || components.len() != explained_variance.len() * input_dim {
            return Err(Error::Format("PCA arrays have inconsistent shapes".into()));
        }
        Ok(Self {
            input_dim,
            components,
            mean,
            explained_variance,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// `z = C (x - mean)`.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.components.chunks_exact(self.input_dim)) {
            *o = row
                .iter()
                .zip(x)
                .zip(&self.mean)
                .map(|((c, x), m)| c * (x - m))
                .sum();
        }
    }

    /// `mean + C^T z`.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (row, &zi) in self.components.chunks_exact(self.input_dim).zip(z) {
            for (x, c) in x.iter_mut().zip(row) {
                *x += c * zi;
            }
        }
        x
    }
}

/// Eigendecomposition of the sample covariance (`n - 1` denominator).
///
/// Component signs are fixed so the largest-magnitude coordinate of each
/// direction is positive.
pub fn fit_pca<R: AsRef<[f64]>>(data: &[R], embedding_dim: usize) -> Result<PcaModel> {
    let n = data.len();
    let d = data
        .first()
        .map(|r| r.as_ref().len())
        .ok_or_else(|| Error::config("cannot fit PCA on an empty dataset"))?;
    if embedding_dim == 0 || embedding_dim > d {
        return Err(Error::config(format!(
            "PCA needs 1 <= D <= d = {d}, got D = {embedding_dim}"
        )));
    }
    if n < embedding_dim {
        return Err(Error::config(format!(
            "PCA with D = {embedding_dim} needs at least {embedding_dim} samples, got {n}"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in data {
        let row = row.as_ref();
        if row.len() != d {
            return Err(Error::config("PCA rows have inconsistent dimensions"));
        }
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in data {
        let c: Vec<f64> = row.as_ref().iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(embedding_dim * d);
    let mut explained_variance = Vec::with_capacity(embedding_dim);
    for &k in order.iter().take(embedding_dim) {
        let col = eig.eigenvectors.column(k);
        let pivot = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|v| sign * v));
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaModel {
        input_dim: d,
        components,
        mean,
        explained_variance,
    })
}
