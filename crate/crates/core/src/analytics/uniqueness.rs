use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, MotifMatrix};

/// Lift of each motif in each novel: the motif's share of the novel's
/// clustered records divided by its share of the whole corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessTable {
    /// `lift[novel][motif]`; `None` where the motif never occurs in the
    /// corpus or the novel has no clustered records.
    pub lift: Vec<Vec<Option<f64>>>,
    counts: Vec<Vec<u64>>,
    col_sums: Vec<u64>,
    cluster_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueMotif {
    pub motif: usize,
    pub cluster_id: usize,
    pub lift: f64,
    pub count: u64,
}

pub fn uniqueness_scores(matrix: &MotifMatrix) -> Result<UniquenessTable, AnalyticsError> {
    let grand = matrix.grand_total();
    if grand == 0 {
        return Err(AnalyticsError::EmptyMatrix);
    }
    let rows = matrix.row_sums();
    let cols = matrix.col_sums();
    let lift = matrix
        .counts
        .iter()
        .zip(&rows)
        .map(|(row, &r)| {
            row.iter()
                .zip(&cols)
                .map(|(&x, &s)| {
                    (r > 0 && s > 0).then(|| (x as u128 * grand as u128) as f64 / (r as u128 * s as u128) as f64)
                })
                .collect()
        })
        .collect();
    Ok(UniquenessTable {
        lift,
        counts: matrix.counts.clone(),
        col_sums: cols,
        cluster_ids: matrix.motifs.iter().map(|m| m.cluster_id).collect(),
    })
}

impl UniquenessTable {
    /// Within one novel, lift a > lift b exactly when x_a·S_b > x_b·S_a, so
    /// ranking uses integer cross products and is immune to rounding.
    fn compare(&self, novel: usize, a: usize, b: usize) -> Ordering {
        let (xa, xb) = (self.counts[novel][a] as u128, self.counts[novel][b] as u128);
        let (sa, sb) = (self.col_sums[a] as u128, self.col_sums[b] as u128);
        (xb * sa).cmp(&(xa * sb)).then(xb.cmp(&xa)).then(self.cluster_ids[a].cmp(&self.cluster_ids[b]))
    }

    /// The `k` motifs with the highest lift in `novel`; ties go to the larger
    /// count, then the lower cluster id.
    pub fn top_k(&self, novel: usize, k: usize) -> Vec<UniqueMotif> {
        let mut cols: Vec<usize> = (0..self.col_sums.len()).filter(|&m| self.lift[novel][m].is_some()).collect();
        cols.sort_by(|&a, &b| self.compare(novel, a, b));
        cols.into_iter()
            .take(k)
            .map(|m| UniqueMotif {
                motif: m,
                cluster_id: self.cluster_ids[m],
                lift: self.lift[novel][m].expect("filtered"),
                count: self.counts[novel][m],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::matrix;
    use super::*;
    use crate::corpus::Period;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(rows: Vec<Vec<u64>>) -> UniquenessTable {
        uniqueness_scores(&matrix(rows, &[Period::Imperial])).unwrap()
    }

    #[test]
    fn proportional_motif_has_unit_lift() {
        // motif 0 takes 20% of every novel
        let t = table(vec![vec![2, 8], vec![10, 40], vec![7, 28]]);
        for n in 0..3 {
            assert_eq!(t.lift[n][0], Some(1.0));
        }
    }

    #[test]
    fn worked_example() {
        // novel: 5 of 50 records; motif: 20 of 1000 overall
        let t = table(vec![vec![5, 45, 0], vec![15, 0, 935]]);
        assert_eq!(t.lift[0][0], Some(5.0));
    }

    #[test]
    fn motif_unique_to_one_novel_ranks_first() {
        let t = table(vec![vec![3, 10, 10], vec![0, 10, 10], vec![0, 10, 10]]);
        assert_eq!(t.top_k(0, 1)[0].motif, 0);
    }

    #[test]
    fn ties_prefer_larger_count_then_lower_id() {
        // motifs 0 and 1 have equal lift in novel 0; motif 1 has the larger count
        let t = table(vec![vec![1, 2, 5], vec![1, 2, 0]]);
        let top: Vec<usize> = t.top_k(0, 3).iter().map(|u| u.motif).collect();
        assert_eq!(top, vec![2, 1, 0]);
        let t = table(vec![vec![1, 1], vec![1, 1]]);
        let top: Vec<usize> = t.top_k(0, 2).iter().map(|u| u.motif).collect();
        assert_eq!(top, vec![0, 1]);
    }

    #[test]
    fn k_larger_than_motif_count() {
        assert_eq!(table(vec![vec![1, 1]]).top_k(0, 5).len(), 2);
    }

    proptest! {
        #[test]
        fn scaling_a_row_keeps_its_ranking(seed in 0u64..5_000, c in 2u64..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<u64>> = (0..5).map(|_| (0..25).map(|_| rng.gen_range(0..6)).collect()).collect();
            prop_assume!(rows[1].iter().any(|&x| x > 0));
            let base = table(rows.clone());
            let mut scaled = rows;
            scaled[1].iter_mut().for_each(|x| *x *= c);
            let after = table(scaled);
            let order = |t: &UniquenessTable| t.top_k(1, 25).into_iter().map(|u| u.motif).collect::<Vec<_>>();
            prop_assert_eq!(order(&base), order(&after));
        }
    }
}
