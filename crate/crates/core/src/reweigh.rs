//! Reweighing: one weight per (protected value, label) cell so that the two
//! become independent under the weighted empirical distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::EncodedMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights {
    pub row_ids: Vec<usize>,
    pub weights: Vec<f64>,
    /// `cell_weights[privileged][favorable]`.
    pub cell_weights: [[f64; 2]; 2],
    /// `cell_counts[privileged][favorable]`.
    pub cell_counts: [[usize; 2]; 2],
}

impl SampleWeights {
    /// Unit weights, for training without reweighing.
    pub fn uniform(train: &EncodedMatrix) -> Self {
        let mut cell_counts = [[0usize; 2]; 2];
        for m in &train.meta {
            cell_counts[m.privileged as usize][m.favorable as usize] += 1;
        }
        SampleWeights {
            row_ids: train.meta.iter().map(|m| m.row_id).collect(),
            weights: vec![1.0; train.len()],
            cell_weights: [[1.0; 2]; 2],
            cell_counts,
        }
    }

    /// Compensated (Neumaier) sum of the weights.
    pub fn total(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut c = 0.0;
        for &w in &self.weights {
            let t = sum + w;
            if sum.abs() >= w.abs() {
                c += (sum - t) + w;
            } else {
                c += (w - t) + sum;
            }
            sum = t;
        }
        sum + c
    }
}

/// `w(a, y) = N_a · N_y / (N · N_{a,y})` from the counts of `cells`
/// (indexed `[privileged][favorable]`).
pub fn cell_weights(cells: [[usize; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    for (a, row) in cells.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if c == 0 {
                return Err(Error::EmptyCell {
                    cell: format!(
                        "{}, {}",
                        if a == 1 { "privileged" } else { "unprivileged" },
                        if y == 1 { "favorable" } else { "unfavorable" }
                    ),
                });
            }
        }
    }
    let n: usize = cells.iter().flatten().sum();
    let n_a = [cells[0][0] + cells[0][1], cells[1][0] + cells[1][1]];
    let n_y = [cells[0][0] + cells[1][0], cells[0][1] + cells[1][1]];
    let mut w = [[0.0; 2]; 2];
    for a in 0..2 {
        for y in 0..2 {
            w[a][y] = (n_a[a] as f64 * n_y[y] as f64) / (n as f64 * cells[a][y] as f64);
        }
    }
    Ok(w)
}

pub fn compute_weights(train: &EncodedMatrix) -> Result<SampleWeights> {
    let mut cell_counts = [[0usize; 2]; 2];
    for m in &train.meta {
        cell_counts[m.privileged as usize][m.favorable as usize] += 1;
    }
    let cw = cell_weights(cell_counts)?;
    Ok(SampleWeights {
        row_ids: train.meta.iter().map(|m| m.row_id).collect(),
        weights: train
            .meta
            .iter()
            .map(|m| cw[m.privileged as usize][m.favorable as usize])
            .collect(),
        cell_weights: cw,
        cell_counts,
    })
}
