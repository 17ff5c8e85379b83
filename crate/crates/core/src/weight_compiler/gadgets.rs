//! Single-block building blocks: the interaction head and the gating and
//! decrementing feed-forward networks.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::transformer_core::{interaction_coords, AttentionHead, FeedForward, Layer, D_EMBED, ZERO5};

/// Two data rows of a query or key matrix.
pub type DataKernel = [[f64; D_EMBED]; 2];

/// Side of a gating threshold that is kept intact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateSide {
    /// Keep tokens `1..=k`, zero the rest.
    Before,
    /// Keep tokens `k..=ℓ`, zero the rest.
    After,
}

fn kernel_abs_max(k: &DataKernel) -> f64 {
    k.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Weight `C'` on the positional rows of an interaction head.
///
/// Off-peak positional scores are at most `−C'(1 − cos(π/2ℓ)) = −2·C_dom`,
/// while every data score is below `C_dom = 2(25μ²M² + 1)` in magnitude.
pub fn interaction_weight(mu: f64, emb_bound: f64, ell: usize) -> f64 {
    let m = emb_bound.max(1.0);
    let c_dom = 2.0 * (25.0 * mu * mu * m * m + 1.0);
    let half = FRAC_PI_2 / (2.0 * ell as f64);
    // 1 − cos(π/2ℓ) without cancellation.
    let gap = 2.0 * half.sin().powi(2);
    2.0 * c_dom / gap
}

/// Positional row peaked at token `t`: its value at `t` is exactly zero and
/// every other token gets a large negative value.
fn peaked_row(t: usize, ell: usize, weight: f64) -> [f64; D_EMBED] {
    let (c, s) = interaction_coords(t, ell);
    let (a, b) = (weight * c, weight * s);
    // Same operation order as `matvec` on the column of token `t`.
    let at_peak = a * c + b * s;
    [0.0, 0.0, a, b, -at_peak]
}

fn check_token(t: usize, ell: usize, what: &str) -> Result<()> {
    if t == 0 || t > ell {
        return Err(Error::Index(format!("{what} = {t} outside 1..={ell}")));
    }
    Ok(())
}

/// Attention head whose only non-zero output is
/// `σ(⟨Qdata·h_{t1}, Kdata·h_{t2}⟩)·e_i` at column `t1`.
///
/// `emb_bound` bounds every data entry of the embedding the head is applied
/// to. Selectivity is exact: all other scores are negative by a wide margin,
/// so the ReLU returns literal zeros.
pub fn build_interaction_head(
    t1: usize,
    t2: usize,
    i: usize,
    qdata: &DataKernel,
    kdata: &DataKernel,
    ell: usize,
    emb_bound: f64,
) -> Result<AttentionHead> {
    check_token(t1, ell, "t1")?;
    check_token(t2, ell, "t2")?;
    if i == 0 || i > D_EMBED {
        return Err(Error::Index(format!("output row {i} outside 1..=5")));
    }
    if !emb_bound.is_finite() || emb_bound < 0.0 {
        return Err(Error::Contract("embedding bound must be finite and non-negative".into()));
    }
    let mu = kernel_abs_max(qdata).max(kernel_abs_max(kdata));
    if !mu.is_finite() {
        return Err(Error::Contract("data kernels must be finite".into()));
    }
    let w = interaction_weight(mu, emb_bound, ell);
    let mut q = ZERO5;
    let mut k = ZERO5;
    q[0] = qdata[0];
    q[1] = qdata[1];
    k[0] = kdata[0];
    k[1] = kdata[1];
    q[2] = peaked_row(t1, ell, w);
    q[3] = [0.0, 0.0, 0.0, 0.0, 1.0];
    k[2] = [0.0, 0.0, 0.0, 0.0, 1.0];
    k[3] = peaked_row(t2, ell, w);
    let mut v = ZERO5;
    v[i - 1][4] = 1.0;
    Ok(AttentionHead { q, k, v })
}

/// Linear separator between tokens `k` and `k + 1` (`0 ≤ k ≤ ℓ`).
///
/// Returns `(w3, w4, m)` such that `u_t = w3·cos θ_t + w4·sin θ_t` satisfies
/// `u_t ≤ −m` for `t ≤ k` and `u_t ≥ m` for `t > k`.
fn separator(k: usize, ell: usize) -> (f64, f64, f64) {
    let step = FRAC_PI_2 / ell as f64;
    let psi = (k as f64 + 0.5) * step;
    // u_t = sin(θ_t − ψ); monotone since |θ_t − ψ| ≤ π/2.
    (-psi.sin(), psi.cos(), (0.5 * step).sin())
}

fn check_rows(r1: usize, r2: usize) -> Result<()> {
    if r1 == 0 || r1 > r2 || r2 > D_EMBED - 3 {
        return Err(Error::Contract(format!(
            "row range {r1}..={r2} must lie within the data rows 1..=2"
        )));
    }
    Ok(())
}

/// Two-layer network mapping `h_t` to itself on the kept side of `k` and to
/// `h_t` with rows `r1..=r2` zeroed on the other side.
///
/// `bound` must dominate `|h_t|` on rows 1–2. The zeroed side is exact; the
/// kept side is reproduced up to rounding of order `ε·ℓ·bound`.
pub fn build_gating_ffn(r1: usize, r2: usize, k: usize, side: GateSide, ell: usize, bound: f64) -> Result<FeedForward> {
    check_rows(r1, r2)?;
    check_token(k, ell, "k")?;
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(Error::Contract("gating bound must be finite and non-negative".into()));
    }
    let (sep, sign) = match side {
        GateSide::Before => (k, 1.0),
        GateSide::After => (k - 1, -1.0),
    };
    let (w3, w4, m) = separator(sep, ell);
    let lambda = 2.0 * bound + 2.0;
    // v = (sign·u/m + 1)/2: ≤ 0 on the kept side, ≥ 1 on the other.
    let vc = [0.0, 0.0, sign * w3 / (2.0 * m), sign * w4 / (2.0 * m), 0.5];
    let shift: Vec<f64> = vc.iter().map(|&c| -lambda * c).collect();

    let gated = |r: usize| r >= r1 && r <= r2;
    let mut l1_w: Vec<Vec<f64>> = Vec::new();
    let mut l1_b: Vec<f64> = Vec::new();
    let mut out_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    // Unit 0 is σ(B − Λv), shared by the gated rows.
    let shared = 0;
    let mut row = vec![0.0; D_EMBED];
    row[2] = shift[2];
    row[3] = shift[3];
    l1_w.push(row);
    l1_b.push(bound + shift[4]);
    for r in 1..=2 {
        let unit = l1_w.len();
        let mut row = vec![0.0; D_EMBED];
        row[r - 1] = 1.0;
        if gated(r) {
            // σ(h + B − Λv) − σ(B − Λv).
            row[2] = shift[2];
            row[3] = shift[3];
            l1_w.push(row);
            l1_b.push(bound + shift[4]);
            out_rows.push((vec![(unit, 1.0), (shared, -1.0)], 0.0));
        } else {
            // σ(h + B) − B.
            l1_w.push(row);
            l1_b.push(bound);
            out_rows.push((vec![(unit, 1.0)], -bound));
        }
    }
    for r in 3..=4 {
        let unit = l1_w.len();
        let mut row = vec![0.0; D_EMBED];
        row[r - 1] = 1.0;
        l1_w.push(row);
        l1_b.push(0.0);
        out_rows.push((vec![(unit, 1.0)], 0.0));
    }
    out_rows.push((vec![], 1.0));
    let n = l1_w.len();
    let mut l2_w = vec![vec![0.0; n]; D_EMBED];
    let mut l2_b = vec![0.0; D_EMBED];
    for (r, (terms, b)) in out_rows.into_iter().enumerate() {
        for (u, c) in terms {
            l2_w[r][u] = c;
        }
        l2_b[r] = b;
    }
    FeedForward::new(vec![Layer::new(l1_w, l1_b), Layer::new(l2_w, l2_b)])
}

/// Six-layer network whose residual subtracts `amount` from rows `r1..=r2`
/// of tokens `first..=last` and leaves every other entry untouched.
///
/// Token bounds may be `0` and `ℓ + 1`; an empty window yields a network whose
/// output is zero everywhere. The gate is computed exactly as 0 or 1, so the
/// residual update is a single rounded subtraction.
pub(crate) fn decrement_window(r1: usize, r2: usize, first: usize, last: usize, amount: f64, ell: usize) -> Result<FeedForward> {
    check_rows(r1, r2)?;
    if first == 0 || last > ell {
        return Err(Error::Index(format!("decrement window {first}..={last} outside 1..={ell}")));
    }
    if !amount.is_finite() {
        return Err(Error::Contract("decrement amount must be finite".into()));
    }
    let (a3, a4, m1) = separator(first - 1, ell);
    let (b3, b4, m2) = separator(last, ell);
    // p1 = 1/2 − u1/m1 (≥ 3/2 before the window), p2 = 1/2 + u2/m2 (≥ 3/2 after it).
    let l1 = Layer::new(
        vec![
            vec![0.0, 0.0, -a3 / m1, -a4 / m1, 0.0],
            vec![0.0, 0.0, b3 / m2, b4 / m2, 0.0],
        ],
        vec![0.5, 0.5],
    );
    // q_i = 1 − σ(p_i): exactly 1 inside, ≤ −1/2 outside.
    let l2 = Layer::new(vec![vec![-1.0, 0.0], vec![0.0, -1.0]], vec![1.0, 1.0]);
    // w = σ(q1) + σ(q2) − 1 ∈ {−1, 0, 1}.
    let l3 = Layer::new(vec![vec![1.0, 1.0]], vec![-1.0]);
    let l4 = Layer::new(vec![vec![1.0]], vec![0.0]);
    let l5 = Layer::new(vec![vec![1.0]], vec![0.0]);
    let mut w6 = vec![vec![0.0]; D_EMBED];
    for row in w6.iter_mut().take(r2).skip(r1 - 1) {
        row[0] = -amount;
    }
    let l6 = Layer::new(w6, vec![0.0; D_EMBED]);
    FeedForward::new(vec![l1, l2, l3, l4, l5, l6])
}

/// Decrementing network for the tokens strictly between `k1` and `k2`.
pub fn build_decrement_ffn(r1: usize, r2: usize, k1: usize, k2: usize, amount: f64, ell: usize) -> Result<FeedForward> {
    check_token(k1, ell, "k1")?;
    check_token(k2, ell, "k2")?;
    if k2 <= k1 + 1 {
        // Empty window: any first > last works; keep it inside the budget.
        return decrement_window(r1, r2, k1.max(1), k1.max(1) - 1, amount, ell);
    }
    decrement_window(r1, r2, k1 + 1, k2 - 1, amount, ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer_core::{embed_input, EmbeddingMatrix, TransformerBlock};

    fn constant_row_kernels(m: f64) -> (DataKernel, DataKernel) {
        let mut q = [[0.0; 5]; 2];
        let mut k = [[0.0; 5]; 2];
        q[0][4] = 1.0;
        k[0][0] = 1.0;
        k[0][4] = m;
        (q, k)
    }

    #[test]
    fn interaction_head_examples() {
        let (q, k) = constant_row_kernels(1.0);
        let head = build_interaction_head(2, 1, 1, &q, &k, 4, 1.0).unwrap();
        for (x, want) in [(0.3, 1.3), (-0.4, 0.6)] {
            let h = embed_input(&[x], 4).unwrap();
            let out = head.apply(&h);
            assert_eq!(out[1], [want, 0.0, 0.0, 0.0, 0.0]);
            for t in [0, 2, 3] {
                assert_eq!(out[t], [0.0; 5]);
            }
        }
    }

    #[test]
    fn zero_kernels_give_zero_head_output() {
        let z = [[0.0; 5]; 2];
        let head = build_interaction_head(3, 3, 2, &z, &z, 6, 2.0).unwrap();
        let h = embed_input(&[1.0, -2.0, 0.5], 6).unwrap();
        assert!(head.apply(&h).iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn interaction_head_rejects_bad_indices() {
        let z = [[0.0; 5]; 2];
        assert!(matches!(build_interaction_head(0, 1, 1, &z, &z, 4, 1.0), Err(Error::Index(_))));
        assert!(matches!(build_interaction_head(1, 5, 1, &z, &z, 4, 1.0), Err(Error::Index(_))));
        assert!(matches!(build_interaction_head(1, 1, 6, &z, &z, 4, 1.0), Err(Error::Index(_))));
    }

    fn with_rows(ell: usize, row1: &[f64], row2: &[f64]) -> EmbeddingMatrix {
        let mut h = EmbeddingMatrix::positional(ell);
        for t in 1..=ell {
            h.set(1, t, row1[t - 1]);
            h.set(2, t, row2[t - 1]);
        }
        h
    }

    #[test]
    fn decrement_example() {
        let f = build_decrement_ffn(1, 1, 1, 5, 2.0, 5).unwrap();
        let h = with_rows(5, &[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]);
        let out = TransformerBlock::new(vec![], f).forward(&h).unwrap();
        assert_eq!(out.row(1), vec![1.0, 0.0, 1.0, 2.0, 5.0]);
        assert!(out.is_admissible());
    }

    #[test]
    fn decrement_shape_and_empty_window() {
        let f = build_decrement_ffn(1, 2, 3, 4, 7.0, 6).unwrap();
        assert_eq!(f.depth(), 6);
        assert_eq!(f.width(), 5);
        let h = with_rows(6, &[1.0; 6], &[2.0; 6]);
        assert_eq!(TransformerBlock::new(vec![], f).forward(&h).unwrap(), h);
    }

    #[test]
    fn gating_example() {
        let f = build_gating_ffn(1, 1, 1, GateSide::Before, 3, 10.0).unwrap();
        assert_eq!(f.depth(), 2);
        assert_eq!(f.width(), 5);
        let h = with_rows(3, &[0.7, -3.0, 9.5], &[1.5, -2.0, 0.25]);
        let cols = h.columns();
        let g: Vec<_> = cols.iter().map(|c| f.apply(c)).collect();
        for r in 0..5 {
            assert!((g[0][r] - cols[0][r]).abs() < 1e-12);
        }
        for t in 1..3 {
            assert_eq!(g[t][0], 0.0);
            assert!((g[t][1] - cols[t][1]).abs() < 1e-12);
            assert_eq!(&g[t][2..], &cols[t][2..]);
        }
    }

    #[test]
    fn gating_rejects_interaction_rows() {
        assert!(matches!(build_gating_ffn(1, 3, 1, GateSide::After, 4, 1.0), Err(Error::Contract(_))));
        assert!(matches!(build_decrement_ffn(3, 3, 1, 3, 1.0, 4), Err(Error::Contract(_))));
    }
}
