//! Sparse execution engine.
//!
//! The engine returns exactly what the dense block formula returns. It avoids
//! the `ℓ²` score matrix only for heads whose off-target scores are provably
//! non-positive:
//!
//! * a head is *routed* when its weights have the interaction shape (score of
//!   the form `data(t, j) + α(t) + β(j)` with `α`, `β` peaked at single tokens);
//! * before each block, a certificate built from the current bound on the data
//!   rows checks that every score other than `(t1, t2)` is negative with margin
//!   for rounding, so σ zeroes it exactly;
//! * feed-forward parts that ignore the data rows are tabulated once per token;
//! * for the remaining feed-forward parts each token gets a data bound below
//!   which every first-layer unit is provably inactive, so the token is left
//!   unchanged without evaluating the network.
//!
//! Other heads are evaluated row by row: a row whose largest possible score
//! is negative with rounding margin is zero and skipped, and every other row
//! is computed by the dense formula. Anything else is evaluated densely.

use super::{
    matvec, relu, row_dot, score, AttentionHead, Col, EmbeddingMatrix, FeedForward,
    TransformerBlock, D_EMBED,
};
use crate::error::{Error, Result};

const ROUNDING_GUARD: f64 = 32.0 * f64::EPSILON;

#[derive(Debug, Clone)]
struct Routed {
    t1: usize,
    t2: usize,
    qa: [f64; 2],
    qb: [f64; 2],
    ka: [f64; 2],
    kb: [f64; 2],
    alpha_max: f64,
    alpha_second: Option<f64>,
    beta_max: f64,
    beta_second: Option<f64>,
    scale: f64,
    /// Largest data bound known to pass [`Routed::certified`].
    limit: f64,
    /// Positional score is exactly zero at `(t1, t2)` so only the data rows
    /// contribute to the score.
    fast: bool,
    /// `V = e_i e_5ᵀ`.
    unit_v: Option<usize>,
}

impl Routed {
    fn certified(&self, data_bound: f64) -> bool {
        let mut dmax = 0.0;
        for r in 0..2 {
            dmax += (self.qa[r] * data_bound + self.qb[r]) * (self.ka[r] * data_bound + self.kb[r]);
        }
        if !dmax.is_finite() {
            return false;
        }
        let slack = ROUNDING_GUARD * (self.scale + 2.0 * dmax);
        let off_query = self
            .alpha_second
            .map_or(true, |a2| dmax + a2 + self.beta_max + slack < 0.0);
        let off_key = self
            .beta_second
            .map_or(true, |b2| dmax + self.alpha_max + b2 + slack < 0.0);
        off_query && off_key
    }

    fn certified_limit(&self) -> f64 {
        if !self.certified(0.0) {
            return -1.0;
        }
        let mut hi = 1.0;
        while self.certified(hi) {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.certified(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

fn unit_value_row(v: &super::Mat5) -> Option<usize> {
    let mut hit = None;
    for (r, row) in v.iter().enumerate() {
        if row == &[0.0, 0.0, 0.0, 0.0, 1.0] {
            if hit.is_some() {
                return None;
            }
            hit = Some(r);
        } else if row.iter().any(|&x| x != 0.0) {
            return None;
        }
    }
    hit
}

#[derive(Debug, Clone)]
enum HeadPlan {
    Routed(Routed),
    Dense,
}

#[derive(Debug, Clone)]
enum FfnPlan {
    Zero,
    Positional(Vec<(usize, Col)>),
    /// `(limit, token)` sorted by limit; tokens whose limit is at least the
    /// current data bound are untouched.
    Gated(Vec<(f64, usize)>),
    General,
}

/// Output of the layers after the first when every first-layer unit is off.
fn inactive_output(ffn: &FeedForward) -> Col {
    let mut z: Vec<f64> = vec![0.0; ffn.layers[0].out_dim()];
    for layer in &ffn.layers[1..] {
        z = layer
            .w
            .iter()
            .zip(&layer.b)
            .map(|(row, &b)| {
                let mut acc = 0.0;
                for (w, x) in row.iter().zip(&z) {
                    acc += w * relu(*x);
                }
                acc + b
            })
            .collect();
    }
    let mut out = [0.0; D_EMBED];
    out.copy_from_slice(&z);
    out
}

/// Per-token data bounds below which the first layer is entirely inactive.
fn gate_limits(ffn: &FeedForward, pos: &[Col]) -> Option<Vec<(f64, usize)>> {
    if ffn.layers.len() < 2 || inactive_output(ffn).iter().any(|&v| v != 0.0) {
        return None;
    }
    let first = &ffn.layers[0];
    let units: Vec<(f64, f64, &[f64], f64)> = first
        .w
        .iter()
        .zip(&first.b)
        .map(|(row, &b)| {
            let a = row[0].abs() + row[1].abs();
            let s = row[2].abs() + row[3].abs() + row[4].abs() + b.abs();
            (a, s, &row[2..], b)
        })
        .collect();
    if units.iter().any(|u| !(u.0.is_finite() && u.1.is_finite())) {
        return None;
    }
    let mut out: Vec<(f64, usize)> = pos
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let mut lim = f64::INFINITY;
            for &(a, s, wp, b) in &units {
                let c = wp[0] * p[2] + wp[1] * p[3] + wp[2] * p[4] + b;
                let room = -c - ROUNDING_GUARD * s;
                let l = if a == 0.0 {
                    if room > 0.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    }
                } else if room > 0.0 {
                    room / (a * (1.0 + ROUNDING_GUARD))
                } else {
                    f64::NEG_INFINITY
                };
                lim = lim.min(l);
            }
            (lim, t)
        })
        .collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    Some(out)
}

#[derive(Debug, Clone)]
struct BlockPlan {
    heads: Vec<HeadPlan>,
    ffn: FfnPlan,
}

/// Precomputed execution data for one network shape.
#[derive(Debug, Clone)]
pub(crate) struct ExecPlan {
    pos: Vec<Col>,
    blocks: Vec<BlockPlan>,
}

fn is_unit_constant_row(row: &[f64; D_EMBED]) -> bool {
    row == &[0.0, 0.0, 0.0, 0.0, 1.0]
}

/// Peak of `t ↦ row · (·, ·, cos θ_t, sin θ_t, 1)` with its runner-up value.
fn positional_peak(row: &[f64; D_EMBED], pos: &[Col]) -> Option<(usize, f64, Option<f64>)> {
    if row[0] != 0.0 || row[1] != 0.0 {
        return None;
    }
    let ell = pos.len();
    let radius = row[2].hypot(row[3]);
    if radius == 0.0 || !radius.is_finite() {
        return None;
    }
    let phi = row[3].atan2(row[2]);
    let q = std::f64::consts::FRAC_PI_4;
    if !(-q..=3.0 * q).contains(&phi) {
        return None;
    }
    let guess = (phi * 2.0 * ell as f64 / std::f64::consts::PI).round();
    let t = guess.clamp(1.0, ell as f64) as usize - 1;
    let at = |j: usize| row_dot(row, &pos[j]);
    let best = at(t);
    let mut second: Option<f64> = None;
    if t > 0 {
        second = Some(at(t - 1));
    }
    if t + 1 < ell {
        let v = at(t + 1);
        second = Some(second.map_or(v, |s| s.max(v)));
    }
    if let Some(s) = second {
        if s >= best {
            return None;
        }
    }
    Some((t, best, second))
}

fn route_of(head: &AttentionHead, pos: &[Col]) -> Option<Routed> {
    let (q, k) = (&head.q, &head.k);
    if !is_unit_constant_row(&q[3]) || !is_unit_constant_row(&k[2]) {
        return None;
    }
    if q[4].iter().any(|&v| v != 0.0) && k[4].iter().any(|&v| v != 0.0) {
        return None;
    }
    let (t1, alpha_max, alpha_second) = positional_peak(&q[2], pos)?;
    let (t2, beta_max, beta_second) = positional_peak(&k[3], pos)?;
    let mut qa = [0.0; 2];
    let mut qb = [0.0; 2];
    let mut ka = [0.0; 2];
    let mut kb = [0.0; 2];
    for r in 0..2 {
        qa[r] = q[r][0].abs() + q[r][1].abs();
        qb[r] = q[r][2].abs() + q[r][3].abs() + q[r][4].abs();
        ka[r] = k[r][0].abs() + k[r][1].abs();
        kb[r] = k[r][2].abs() + k[r][3].abs() + k[r][4].abs();
    }
    let weights: f64 = [q, k]
        .iter()
        .flat_map(|m| m.iter().flat_map(|r| r.iter()))
        .fold(0.0, |a, v| a + v.abs());
    if !weights.is_finite() {
        return None;
    }
    let fast = alpha_max == 0.0
        && beta_max == 0.0
        && q[4].iter().all(|&v| v == 0.0)
        && k[4].iter().all(|&v| v == 0.0);
    let mut r = Routed {
        t1,
        t2,
        qa,
        qb,
        ka,
        kb,
        alpha_max,
        alpha_second,
        beta_max,
        beta_second,
        scale: 3.0 * weights + 1.0,
        limit: 0.0,
        fast,
        unit_v: unit_value_row(&head.v),
    };
    r.limit = r.certified_limit();
    Some(r)
}

impl ExecPlan {
    pub(crate) fn build(blocks: &[TransformerBlock], ell: usize) -> Self {
        let pos = EmbeddingMatrix::positional(ell).columns().to_vec();
        let plans = blocks
            .iter()
            .map(|b| {
                let heads = b
                    .heads
                    .iter()
                    .map(|h| route_of(h, &pos).map_or(HeadPlan::Dense, HeadPlan::Routed))
                    .collect();
                let ffn = if b.ffn.is_zero() {
                    FfnPlan::Zero
                } else if b.ffn.reads_positional_rows_only() {
                    let table = pos
                        .iter()
                        .enumerate()
                        .filter_map(|(t, c)| {
                            let f = b.ffn.apply(c);
                            f.iter().any(|&v| v != 0.0).then_some((t, f))
                        })
                        .collect();
                    FfnPlan::Positional(table)
                } else {
                    gate_limits(&b.ffn, &pos).map_or(FfnPlan::General, FfnPlan::Gated)
                };
                BlockPlan { heads, ffn }
            })
            .collect();
        Self { pos, blocks: plans }
    }

    /// Fraction of heads that are routed (diagnostics).
    pub(crate) fn routed_fraction(&self) -> f64 {
        let (mut r, mut n) = (0usize, 0usize);
        for b in &self.blocks {
            for h in &b.heads {
                n += 1;
                if matches!(h, HeadPlan::Routed(_)) {
                    r += 1;
                }
            }
        }
        if n == 0 {
            1.0
        } else {
            r as f64 / n as f64
        }
    }
}

/// Reusable buffers for repeated forward passes through one network.
pub(crate) struct Workspace {
    h: Vec<Col>,
    mha: Vec<Col>,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl Workspace {
    pub(crate) fn new(ell: usize) -> Self {
        Self {
            h: vec![[0.0; D_EMBED]; ell],
            mha: vec![[0.0; D_EMBED]; ell],
            touched: Vec::new(),
            mark: vec![false; ell],
        }
    }

    pub(crate) fn hidden(&self) -> &[Col] {
        &self.h
    }

    fn touch(&mut self, t: usize) {
        if !self.mark[t] {
            self.mark[t] = true;
            self.touched.push(t);
        }
    }
}

pub(crate) fn run(
    plan: &ExecPlan,
    blocks: &[TransformerBlock],
    x: &[f64],
    ws: &mut Workspace,
) -> Result<()> {
    let ell = plan.pos.len();
    if ell < x.len() {
        return Err(Error::TokenBudget {
            needed: x.len(),
            available: ell,
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("input component {} is not finite", i + 1)));
    }
    ws.h.copy_from_slice(&plan.pos);
    for (j, &v) in x.iter().enumerate() {
        ws.h[j][0] = v;
    }
    let mut admissible = true;
    let mut bound = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for (b, (block, bp)) in blocks.iter().zip(&plan.blocks).enumerate() {
        if admissible {
            let ok = run_sparse_block(plan, block, bp, ws, bound, &mut admissible, &mut bound);
            if !ok {
                return Err(Error::NumericOverflow { block: b + 1 });
            }
        } else {
            let h = EmbeddingMatrix::from_columns(std::mem::take(&mut ws.h));
            let out = block.forward(&h)?;
            ws.h = out.columns().to_vec();
            if !out.all_finite() {
                return Err(Error::NumericOverflow { block: b + 1 });
            }
            admissible = out.is_admissible();
            bound = out.max_data_abs();
        }
    }
    Ok(())
}

/// Returns false when a non-finite value appears.
fn run_sparse_block(
    plan: &ExecPlan,
    block: &TransformerBlock,
    bp: &BlockPlan,
    ws: &mut Workspace,
    data_bound: f64,
    admissible: &mut bool,
    bound: &mut f64,
) -> bool {
    for (head, hp) in block.heads.iter().zip(&bp.heads) {
        match hp {
            HeadPlan::Routed(r) if data_bound <= r.limit && r.fast => {
                let (ht, hs) = (&ws.h[r.t1], &ws.h[r.t2]);
                // The positional rows contribute exact zeros at (t1, t2).
                let mut sc = 0.0;
                sc += row_dot(&head.k[0], hs) * row_dot(&head.q[0], ht);
                sc += row_dot(&head.k[1], hs) * row_dot(&head.q[1], ht);
                sc += 0.0;
                let w = relu(sc);
                if w != 0.0 {
                    let t = r.t1;
                    match r.unit_v {
                        Some(i) => ws.mha[t][i] += w,
                        None => {
                            let vh = matvec(&head.v, &ws.h[r.t2]);
                            for c in 0..D_EMBED {
                                ws.mha[t][c] += w * vh[c];
                            }
                        }
                    }
                    ws.touch(t);
                }
            }
            HeadPlan::Routed(r) if data_bound <= r.limit => {
                let qh = matvec(&head.q, &ws.h[r.t1]);
                let kh = matvec(&head.k, &ws.h[r.t2]);
                let w = relu(score(&kh, &qh));
                if w != 0.0 {
                    let vh = matvec(&head.v, &ws.h[r.t2]);
                    let t = r.t1;
                    for c in 0..D_EMBED {
                        ws.mha[t][c] += w * vh[c];
                    }
                    ws.touch(t);
                }
            }
            _ => {
                for (t, o) in apply_row_certified(head, &ws.h) {
                    if o.iter().any(|&v| v != 0.0) {
                        for c in 0..D_EMBED {
                            ws.mha[t][c] += o[c];
                        }
                        ws.touch(t);
                    }
                }
            }
        }
    }
    let n_mha = ws.touched.len();
    for i in 0..n_mha {
        let t = ws.touched[i];
        for c in 0..D_EMBED {
            ws.h[t][c] += ws.mha[t][c];
            ws.mha[t][c] = 0.0;
        }
    }
    let mut data_bound_after = data_bound;
    for &t in &ws.touched {
        let h = &ws.h[t];
        data_bound_after = data_bound_after.max(h[0].abs()).max(h[1].abs());
    }
    let pos_intact = ws.touched.iter().all(|&t| {
        let (h, p) = (&ws.h[t], &plan.pos[t]);
        h[2] == p[2] && h[3] == p[3] && h[4] == p[4]
    });
    match (&bp.ffn, pos_intact) {
        (FfnPlan::Zero, _) => {}
        (FfnPlan::Positional(table), true) => {
            for &(t, f) in table {
                for c in 0..D_EMBED {
                    ws.h[t][c] = f[c] + ws.h[t][c];
                }
                ws.touch(t);
            }
        }
        (FfnPlan::Gated(limits), true) => {
            for &(lim, t) in limits {
                if lim > data_bound_after {
                    break;
                }
                let f = block.ffn.apply(&ws.h[t]);
                for c in 0..D_EMBED {
                    ws.h[t][c] = f[c] + ws.h[t][c];
                }
                ws.touch(t);
            }
        }
        _ => apply_ffn_everywhere(&block.ffn, ws),
    }
    let mut ok = true;
    for &t in &ws.touched {
        let col = &ws.h[t];
        if col.iter().any(|v| !v.is_finite()) {
            ok = false;
        }
        let p = &plan.pos[t];
        if col[2] != p[2] || col[3] != p[3] || col[4] != p[4] {
            *admissible = false;
        }
        *bound = bound.max(col[0].abs()).max(col[1].abs());
    }
    for &t in &ws.touched {
        ws.mark[t] = false;
    }
    ws.touched.clear();
    ok
}

/// Rows of the dense head output that are not provably zero.
///
/// Row `t` is skipped when `Σ_r max_j q_{t,r} k_{j,r}` is negative with
/// margin for the rounding of every score; the remaining rows are computed
/// exactly as [`AttentionHead::apply`] computes them.
fn apply_row_certified(head: &AttentionHead, h: &[Col]) -> Vec<(usize, Col)> {
    let qs: Vec<Col> = h.iter().map(|c| matvec(&head.q, c)).collect();
    let ks: Vec<Col> = h.iter().map(|c| matvec(&head.k, c)).collect();
    let mut kmax = [f64::NEG_INFINITY; D_EMBED];
    let mut kmin = [f64::INFINITY; D_EMBED];
    let mut kabs = [0.0_f64; D_EMBED];
    for k in &ks {
        for r in 0..D_EMBED {
            kmax[r] = kmax[r].max(k[r]);
            kmin[r] = kmin[r].min(k[r]);
            kabs[r] = kabs[r].max(k[r].abs());
        }
    }
    let mut vs: Option<Vec<Col>> = None;
    let mut out = Vec::new();
    for (t, qt) in qs.iter().enumerate() {
        let mut upper = 0.0;
        let mut mag = 0.0;
        for r in 0..D_EMBED {
            let q = qt[r];
            if q > 0.0 {
                upper += q * kmax[r];
            } else if q < 0.0 {
                upper += q * kmin[r];
            }
            mag += q.abs() * kabs[r];
        }
        if upper + ROUNDING_GUARD * mag < 0.0 {
            continue;
        }
        let vs = vs.get_or_insert_with(|| h.iter().map(|c| matvec(&head.v, c)).collect());
        let mut o = [0.0; D_EMBED];
        for (kj, vj) in ks.iter().zip(vs.iter()) {
            let w = relu(score(kj, qt));
            if w != 0.0 {
                for r in 0..D_EMBED {
                    o[r] += w * vj[r];
                }
            }
        }
        out.push((t, o));
    }
    out
}

fn apply_ffn_everywhere(ffn: &FeedForward, ws: &mut Workspace) {
    for t in 0..ws.h.len() {
        let f = ffn.apply(&ws.h[t]);
        for c in 0..D_EMBED {
            ws.h[t][c] = f[c] + ws.h[t][c];
        }
        ws.touch(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight_compiler::{build_interaction_head, DataKernel};
    use rand::{Rng, SeedableRng};

    fn check(head: &AttentionHead, h: &[Col]) -> usize {
        let dense = head.apply(&EmbeddingMatrix::from_columns(h.to_vec()));
        let rows = apply_row_certified(head, h);
        let mut next = rows.iter().peekable();
        for (t, d) in dense.iter().enumerate() {
            match next.peek() {
                Some((rt, o)) if *rt == t => {
                    assert_eq!(o.map(f64::to_bits), d.map(f64::to_bits));
                    next.next();
                }
                _ => assert!(d.iter().all(|&v| v == 0.0), "row {t} skipped but nonzero"),
            }
        }
        rows.len()
    }

    #[test]
    fn row_certificate_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ell = 12;
        let mut skipped = 0;
        for _ in 0..200 {
            let mut head = AttentionHead::zero();
            for m in [&mut head.q, &mut head.k, &mut head.v] {
                for row in m.iter_mut() {
                    for v in row.iter_mut() {
                        if rng.random::<f64>() < 0.4 {
                            *v = rng.random_range(-2.0..2.0);
                        }
                    }
                }
            }
            let x: Vec<f64> = (0..ell).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = crate::transformer_core::embed_input(&x, ell).unwrap();
            skipped += ell - check(&head, h.columns());
        }
        assert!(skipped > 0);
    }

    #[test]
    fn interaction_head_keeps_one_row_at_large_data() {
        let ell = 20;
        let q: DataKernel = [[1.0, 0.0, 0.0, 0.0, 0.0], [0.0; D_EMBED]];
        let k: DataKernel = [[0.0, 0.0, 0.0, 0.0, 1.0], [0.0; D_EMBED]];
        let head = build_interaction_head(4, 9, 1, &q, &k, ell, 1e3).unwrap();
        let x: Vec<f64> = (0..ell).map(|i| 0.5 - i as f64 * 0.05).collect();
        let h = crate::transformer_core::embed_input(&x, ell).unwrap();
        assert_eq!(check(&head, h.columns()), 1);
    }
}
