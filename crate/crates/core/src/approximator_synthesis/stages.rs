//! Builder passes shared by the synthesized networks.
//!
//! All centers are laid out stage-major: the scratch columns of one stage
//! are contiguous across centers and every stage uses one bound for all
//! centers, so each block's decrements coalesce into a few token runs.

use crate::error::Result;
use crate::oracle_partition::PartitionAtlas;
use crate::weight_compiler::{ProgramBuilder, TokenSlot};

/// Column range `[first, last]` written by a stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StageSlots {
    pub name: String,
    pub first_block: usize,
    pub blocks: usize,
    pub first_column: usize,
    pub last_column: usize,
}

pub(crate) struct StageTracker {
    pub slots: Vec<StageSlots>,
    col: usize,
}

impl StageTracker {
    pub fn new(b: &ProgramBuilder) -> Self {
        Self {
            slots: Vec::new(),
            col: b.columns_used(),
        }
    }

    pub fn close(&mut self, name: &str, b: &ProgramBuilder, first_block: usize) {
        let end = b.columns_used();
        self.slots.push(StageSlots {
            name: name.into(),
            first_block,
            blocks: b.depth() - first_block,
            first_column: self.col + 1,
            last_column: end,
        });
        self.col = end;
    }
}

/// Number of blocks of the bump stage: `d + 8`.
pub fn eta_tilde_depth(d: usize) -> usize {
    d + 8
}

/// Columns the bump stage allocates per center: `(d + 1)D + d + 7`.
pub fn eta_tilde_columns(d: usize, dim: usize) -> usize {
    (d + 1) * dim + d + 7
}

/// Schedules `η̃_i(x)` for the given centers over blocks `0..d + 8` and
/// returns one row-1 output slot per center, in order.
///
/// Inputs are the `D` coordinates of `x ∈ [0,1]^D` in row 1 of columns
/// `1..=D`.
pub(crate) fn eta_tilde_stage(b: &mut ProgramBuilder, atlas: &PartitionAtlas, centers: &[usize]) -> Result<Vec<TokenSlot>> {
    let m = atlas.manifold();
    let dim = m.ambient_dim();
    let d = m.intrinsic_dim();
    let k = centers.len();
    let x = b.inputs();
    let hd = atlas.h() * atlas.delta();
    let cs: Vec<_> = centers.iter().map(|&i| &atlas.net().centers[i]).collect();
    let tau_min = cs.iter().map(|c| c.reach).fold(f64::INFINITY, f64::min);
    let pt_min = atlas.p() * tau_min;

    // B1: y_j = x_j − z_j in row 2.
    let r = b.alloc_row(k * dim, 2);
    for (c, ctr) in cs.iter().enumerate() {
        for j in 0..dim {
            b.add_const(0, x[j], -ctr.z[j], r[c * dim + j], 2.0)?;
        }
    }
    // B2..B(d+1): w_{kj} = P_{jk}·y_j.
    let w = b.alloc(k * d * dim);
    for t in 0..d {
        for (c, ctr) in cs.iter().enumerate() {
            for j in 0..dim {
                let slot = w[(c * d + t) * dim + j];
                b.affine_read(1 + t, r[c * dim + j], ctr.basis[(j, t)], slot, 1.0)?;
            }
        }
    }
    b.ensure_blocks(d + 1);
    // B(d+2): s_k = Σ_j w_{kj} = (Pᵀy)_k in row 2.
    let s = b.alloc_row(k * d, 2);
    for c in 0..k {
        for t in 0..d {
            let base = (c * d + t) * dim;
            b.sum(d + 1, &w[base..base + dim], s[c * d + t], 1.0)?;
        }
    }
    // B(d+3): squares in place, row 2 → row 1.
    for sl in s.iter().chain(r.iter()) {
        b.bilinear(d + 2, TokenSlot::new(sl.index, 1), 2, *sl, 0.0)?;
    }
    let row1 = |v: &[TokenSlot]| -> Vec<TokenSlot> { v.iter().map(|t| TokenSlot::new(t.index, 1)).collect() };
    let (s1, r1) = (row1(&s), row1(&r));
    // B(d+4): ‖Pᵀy‖² and ‖y‖².
    let u = b.alloc(k);
    let v = b.alloc(k);
    for c in 0..k {
        b.sum(d + 3, &s1[c * d..(c + 1) * d], u[c], dim as f64)?;
        b.sum(d + 3, &r1[c * dim..(c + 1) * dim], v[c], 1.0)?;
    }
    // B(d+5): scale both branches.
    let ma = dim as f64 / (hd * hd);
    let mb = dim as f64 / (pt_min * pt_min);
    let a = b.alloc(k);
    let bb = b.alloc(k);
    for (c, ctr) in cs.iter().enumerate() {
        let pt = atlas.p() * ctr.reach;
        b.affine_read(d + 4, u[c], -1.0 / (hd * hd), a[c], ma)?;
        b.affine_read(d + 4, v[c], -1.0 / (pt * pt), bb[c], mb)?;
    }
    // B(d+6): sum; B(d+7): add 1; B(d+8): ReLU.
    let tsum = b.alloc(k);
    for c in 0..k {
        b.sum(d + 5, &[a[c], bb[c]], tsum[c], ma.max(mb))?;
    }
    let e = b.alloc(k);
    for c in 0..k {
        b.add_const(d + 6, tsum[c], 1.0, e[c], ma + mb + 1.0)?;
    }
    let out = b.alloc(k);
    for c in 0..k {
        b.affine_read(d + 7, e[c], 1.0, out[c], 0.0)?;
    }
    b.ensure_blocks(eta_tilde_depth(d));
    Ok(out)
}

/// `dst_i = x_i·y` for every `i` in three blocks from `at`.
pub(crate) fn scale_all(b: &mut ProgramBuilder, at: usize, xs: &[TokenSlot], y: TokenSlot, m: f64) -> Result<Vec<TokenSlot>> {
    let dst = b.alloc(xs.len());
    for (&x, &o) in xs.iter().zip(&dst) {
        b.product(at, x, y, o, m)?;
    }
    Ok(dst)
}
