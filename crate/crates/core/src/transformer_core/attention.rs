use serde::{Deserialize, Serialize};

use super::{matvec, relu, score, Col, EmbeddingMatrix, Mat5, D_EMBED, ZERO5};

/// ReLU attention head `A(H) = V·H·σ((K·H)ᵀ·Q·H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHead {
    #[serde(rename = "Q")]
    pub q: Mat5,
    #[serde(rename = "K")]
    pub k: Mat5,
    #[serde(rename = "V")]
    pub v: Mat5,
}

impl AttentionHead {
    pub fn zero() -> Self {
        Self {
            q: ZERO5,
            k: ZERO5,
            v: ZERO5,
        }
    }

    /// Dense evaluation: column `t` is `Σ_j σ(⟨K h_j, Q h_t⟩) V h_j`.
    pub fn apply(&self, h: &EmbeddingMatrix) -> Vec<Col> {
        let cols = h.columns();
        let qs: Vec<Col> = cols.iter().map(|c| matvec(&self.q, c)).collect();
        let ks: Vec<Col> = cols.iter().map(|c| matvec(&self.k, c)).collect();
        let vs: Vec<Col> = cols.iter().map(|c| matvec(&self.v, c)).collect();
        qs.iter()
            .map(|qt| {
                let mut out = [0.0; D_EMBED];
                for (kj, vj) in ks.iter().zip(vs.iter()) {
                    let w = relu(score(kj, qt));
                    if w != 0.0 {
                        for r in 0..D_EMBED {
                            out[r] += w * vj[r];
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Largest absolute weight.
    pub fn max_abs_weight(&self) -> f64 {
        [&self.q, &self.k, &self.v]
            .iter()
            .flat_map(|m| m.iter().flat_map(|r| r.iter()))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer_core::embed_input;

    #[test]
    fn zero_head_is_zero() {
        let h = embed_input(&[0.3, -0.2], 4).unwrap();
        let out = AttentionHead::zero().apply(&h);
        assert!(out.iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn hand_computed_single_head() {
        // Q reads row 1, K reads the constant row, V copies row 1.
        let mut head = AttentionHead::zero();
        head.q[0][0] = 1.0;
        head.k[0][4] = 1.0;
        head.v[0][0] = 1.0;
        let h = embed_input(&[2.0, -1.0, 3.0], 3).unwrap();
        let out = head.apply(&h);
        // Score (j, t) = x_t, so column t = relu(x_t) * Σ_j x_j = relu(x_t) * 4.
        assert_eq!(out[0][0], 8.0);
        assert_eq!(out[1][0], 0.0);
        assert_eq!(out[2][0], 12.0);
    }
}
