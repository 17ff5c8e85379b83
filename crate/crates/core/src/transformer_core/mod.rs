//! Framework-free ReLU-attention transformer runtime.
//!
//! Tokens are columns of a `5 × ℓ` embedding matrix. Rows 1–2 carry data,
//! rows 3–4 carry the interaction coordinates `(cos(tπ/2ℓ), sin(tπ/2ℓ))` and
//! row 5 is the constant 1. Token and row indices in the public API are
//! 1-based, matching the usual mathematical notation.

mod attention;
mod block;
mod embedding;
mod exec;
mod ffn;
mod network;

pub use attention::AttentionHead;
pub use block::TransformerBlock;
pub use embedding::{embed_input, EmbeddingMatrix};
pub use ffn::{FeedForward, Layer};
pub use network::TransformerNetwork;

use std::f64::consts::FRAC_PI_2;

/// Embedding dimension of every network in this crate.
pub const D_EMBED: usize = 5;

/// Row-major `5 × 5` matrix.
pub type Mat5 = [[f64; D_EMBED]; D_EMBED];

/// One token column.
pub type Col = [f64; D_EMBED];

/// The all-zero `5 × 5` matrix.
pub const ZERO5: Mat5 = [[0.0; D_EMBED]; D_EMBED];

/// ReLU that propagates NaN so overflow detection sees it.
#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
    }
}

/// Angle `tπ/(2ℓ)` of token `t` (1-based).
#[inline]
pub fn interaction_angle(t: usize, ell: usize) -> f64 {
    t as f64 * FRAC_PI_2 / ell as f64
}

/// Interaction coordinates `I_t = (cos(tπ/2ℓ), sin(tπ/2ℓ))`.
///
/// Every component that needs the stored values of rows 3–4 goes through this
/// function so that constructions can rely on bitwise-identical values.
#[inline]
pub fn interaction_coords(t: usize, ell: usize) -> (f64, f64) {
    let th = interaction_angle(t, ell);
    (th.cos(), th.sin())
}

/// `m · h`, accumulated left to right over columns.
///
/// The accumulation order is part of the runtime contract: the interaction
/// heads are built so that their positional rows cancel to exactly zero under
/// this order.
#[inline]
pub fn matvec(m: &Mat5, h: &Col) -> Col {
    let mut out = [0.0; D_EMBED];
    for (o, row) in out.iter_mut().zip(m.iter()) {
        let mut acc = 0.0;
        for c in 0..D_EMBED {
            acc += row[c] * h[c];
        }
        *o = acc;
    }
    out
}

/// Single row of [`matvec`].
#[inline]
pub fn row_dot(row: &[f64; D_EMBED], h: &Col) -> f64 {
    let mut acc = 0.0;
    for c in 0..D_EMBED {
        acc += row[c] * h[c];
    }
    acc
}

/// Attention score `⟨k, q⟩`, accumulated left to right.
#[inline]
pub fn score(k: &Col, q: &Col) -> f64 {
    let mut acc = 0.0;
    for c in 0..D_EMBED {
        acc += k[c] * q[c];
    }
    acc
}
