//! Dimensionality reduction ahead of clustering.

use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{ClusteringError, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerMethod {
    None,
    Pca,
    /// Reduced vectors computed elsewhere, read from `external_path`.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMetric {
    Cosine,
    Euclidean,
}

/// `n_neighbors` and `min_dist` are kept for external reducers that use them;
/// PCA ignores both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducerParams {
    pub method: ReducerMethod,
    pub n_components: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub metric: EmbeddingMetric,
    pub external_path: Option<PathBuf>,
}

impl Default for ReducerParams {
    fn default() -> Self {
        Self {
            method: ReducerMethod::Pca,
            n_components: 5,
            n_neighbors: 5,
            min_dist: 0.09,
            metric: EmbeddingMetric::Cosine,
            external_path: None,
        }
    }
}

impl ReducerParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_components < 2 {
            return Err(format!("n_components must be at least 2, got {}", self.n_components));
        }
        if self.method == ReducerMethod::External && self.external_path.is_none() {
            return Err("reducer method \"external\" needs external_path".into());
        }
        Ok(())
    }
}

/// Principal axes of the rows, largest variance first.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One unit-length axis per component. Each axis is oriented so that its
    /// largest-magnitude entry is positive (lowest index on ties).
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn fit(m: &EmbeddingMatrix, n_components: usize) -> Result<Self, ClusteringError> {
        let (n, d) = (m.len(), m.dim());
        if n_components >= d {
            return Err(ClusteringError::Reduce(format!(
                "n_components {n_components} must be below the embedding dimension {d}"
            )));
        }
        if n < n_components {
            return Err(ClusteringError::Reduce(format!("{n} rows cannot span {n_components} components")));
        }
        let mut mean = vec![0.0; d];
        for row in m.rows() {
            for (acc, x) in mean.iter_mut().zip(row) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= n as f64);

        let mut cov = DMatrix::<f64>::zeros(d, d);
        for row in m.rows() {
            let c: Vec<f64> = row.iter().zip(&mean).map(|(x, mu)| x - mu).collect();
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
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = Vec::with_capacity(n_components);
        let mut explained_variance = Vec::with_capacity(n_components);
        for &k in order.iter().take(n_components) {
            let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            orient(&mut axis);
            components.push(axis);
            explained_variance.push(eig.eigenvalues[k].max(0.0));
        }
        Ok(Self { mean, components, explained_variance })
    }

    pub fn transform(&self, m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
        m.rows()
            .map(|row| {
                self.components
                    .iter()
                    .map(|axis| row.iter().zip(&self.mean).zip(axis).map(|((x, mu), a)| (x - mu) * a).sum())
                    .collect()
            })
            .collect()
    }
}

fn orient(axis: &mut [f64]) {
    let mut best = 0;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Reduces embedding rows as configured. `none` returns the rows unchanged.
pub fn reduce(m: &EmbeddingMatrix, p: &ReducerParams) -> Result<Vec<Vec<f64>>, ClusteringError> {
    p.validate().map_err(ClusteringError::Config)?;
    match p.method {
        ReducerMethod::None => Ok(m.rows().map(<[f64]>::to_vec).collect()),
        ReducerMethod::Pca => Ok(PcaModel::fit(m, p.n_components)?.transform(m)),
        ReducerMethod::External => {
            let path = p.external_path.as_ref().expect("validated");
            let ext = EmbeddingMatrix::read_binary(path)?;
            if ext.len() != m.len() {
                return Err(ClusteringError::Reduce(format!(
                    "{} holds {} rows but there are {} records",
                    path.display(),
                    ext.len(),
                    m.len()
                )));
            }
            if ext.dim() != p.n_components {
                return Err(ClusteringError::Reduce(format!(
                    "{} has dimension {} but n_components is {}",
                    path.display(),
                    ext.dim(),
                    p.n_components
                )));
            }
            Ok(ext.rows().map(<[f64]>::to_vec).collect())
        }
    }
}
