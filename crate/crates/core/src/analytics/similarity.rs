use serde::{Deserialize, Serialize};

use super::{AnalyticsError, MotifMatrix};

/// Symmetric cosine similarity between novels, indexed like `ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub ids: Vec<String>,
    pub sim: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub a: String,
    pub b: String,
    pub similarity: f64,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// All unordered pairs, most similar first. Ties are ordered by the id
    /// pair, compared lexicographically.
    pub fn ranked_pairs(&self) -> Vec<RankedPair> {
        let n = self.ids.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push(RankedPair { a: self.ids[i].clone(), b: self.ids[j].clone(), similarity: self.sim[i][j] });
            }
        }
        pairs.sort_by(|x, y| y.similarity.total_cmp(&x.similarity).then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b))));
        pairs
    }
}

fn dot(a: &[u64], b: &[u64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn similarity_matrix(matrix: &MotifMatrix) -> Result<SimilarityMatrix, AnalyticsError> {
    let norms: Vec<f64> = matrix.counts.iter().map(|r| dot(r, r).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&x| x == 0.0) {
        return Err(AnalyticsError::ZeroRow(matrix.novels[i].id.clone()));
    }
    let n = matrix.counts.len();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        sim[i][i] = 1.0;
        for j in i + 1..n {
            let s = (dot(&matrix.counts[i], &matrix.counts[j]) / (norms[i] * norms[j])).clamp(0.0, 1.0);
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    Ok(SimilarityMatrix { ids: matrix.novels.iter().map(|m| m.id.clone()).collect(), sim })
}
