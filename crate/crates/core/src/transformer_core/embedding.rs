use super::{interaction_coords, Col};
use crate::error::{Error, Result};

/// A `5 × ℓ` token matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    cols: Vec<Col>,
}

impl EmbeddingMatrix {
    /// Positional encoding only: zero data rows, interaction rows, constant row.
    pub fn positional(ell: usize) -> Self {
        let cols = (1..=ell)
            .map(|t| {
                let (c, s) = interaction_coords(t, ell);
                [0.0, 0.0, c, s, 1.0]
            })
            .collect();
        Self { cols }
    }

    /// Wraps raw columns without checking the positional invariants.
    pub fn from_columns(cols: Vec<Col>) -> Self {
        Self { cols }
    }

    pub fn ell(&self) -> usize {
        self.cols.len()
    }

    /// Entry at `row` (1..=5), token `t` (1..=ℓ).
    pub fn get(&self, row: usize, t: usize) -> f64 {
        self.cols[t - 1][row - 1]
    }

    pub fn set(&mut self, row: usize, t: usize, value: f64) {
        self.cols[t - 1][row - 1] = value;
    }

    /// Column of token `t` (1-based).
    pub fn column(&self, t: usize) -> &Col {
        &self.cols[t - 1]
    }

    pub fn columns(&self) -> &[Col] {
        &self.cols
    }

    /// Row `row` (1-based) as a vector over tokens.
    pub fn row(&self, row: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[row - 1]).collect()
    }

    /// True when rows 3–5 hold exactly the positional values.
    pub fn is_admissible(&self) -> bool {
        let ell = self.ell();
        self.cols.iter().enumerate().all(|(j, col)| {
            let (c, s) = interaction_coords(j + 1, ell);
            col[2] == c && col[3] == s && col[4] == 1.0
        })
    }

    /// Largest absolute entry over the two data rows.
    pub fn max_data_abs(&self) -> f64 {
        self.cols
            .iter()
            .fold(0.0_f64, |m, c| m.max(c[0].abs()).max(c[1].abs()))
    }

    /// Largest absolute entry of the whole matrix.
    pub fn max_abs(&self) -> f64 {
        self.cols
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.cols.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Shape check against another matrix.
    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.ell() != other.ell() {
            return Err(Error::Dimension(format!(
                "token counts differ: {} vs {}",
                self.ell(),
                other.ell()
            )));
        }
        Ok(())
    }
}

/// `PE + E(x)`: places `x` in row 1, columns `1..=D`.
pub fn embed_input(x: &[f64], ell: usize) -> Result<EmbeddingMatrix> {
    if ell < x.len() {
        return Err(Error::TokenBudget {
            needed: x.len(),
            available: ell,
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("input component {} is not finite", i + 1)));
    }
    let mut h = EmbeddingMatrix::positional(ell);
    for (j, &v) in x.iter().enumerate() {
        h.cols[j][0] = v;
    }
    Ok(h)
}
