use serde::{Deserialize, Serialize};

use super::{AttentionHead, EmbeddingMatrix, FeedForward, D_EMBED};
use crate::error::Result;

/// Residual block `B(H) = FFN(MHA(H) + H) + MHA(H) + H`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformerBlock {
    pub heads: Vec<AttentionHead>,
    pub ffn: FeedForward,
}

impl TransformerBlock {
    pub fn new(heads: Vec<AttentionHead>, ffn: FeedForward) -> Self {
        Self { heads, ffn }
    }

    /// Block with no heads and a zero feed-forward part.
    pub fn identity() -> Self {
        Self::default()
    }

    /// `MHA(H)`, the sum of the head outputs in head order.
    pub fn multi_head(&self, h: &EmbeddingMatrix) -> EmbeddingMatrix {
        let mut acc = vec![[0.0; D_EMBED]; h.ell()];
        for head in &self.heads {
            for (a, o) in acc.iter_mut().zip(head.apply(h)) {
                for r in 0..D_EMBED {
                    a[r] += o[r];
                }
            }
        }
        EmbeddingMatrix::from_columns(acc)
    }

    /// Dense reference evaluation of the block formula.
    pub fn forward(&self, h: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.ffn.validate()?;
        let mha = self.multi_head(h);
        let cols = mha
            .columns()
            .iter()
            .zip(h.columns())
            .map(|(m, x)| {
                let mut y = [0.0; D_EMBED];
                for r in 0..D_EMBED {
                    y[r] = m[r] + x[r];
                }
                let f = self.ffn.apply(&y);
                let mut out = [0.0; D_EMBED];
                for r in 0..D_EMBED {
                    out[r] = f[r] + y[r];
                }
                out
            })
            .collect();
        Ok(EmbeddingMatrix::from_columns(cols))
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.heads
            .iter()
            .map(AttentionHead::max_abs_weight)
            .fold(self.ffn.max_abs_weight(), f64::max)
    }
}
