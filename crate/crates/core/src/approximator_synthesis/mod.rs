//! Transformers that compute the bump functions, the normalized partition
//! and the regressor `Σ g(z_i) η_i(x)` built on a partition atlas.
//!
//! Block layout of the regressor:
//!
//! | stage      | blocks   |
//! |------------|----------|
//! | bumps      | `d + 8`  |
//! | division   | `3s + 5` |
//! | normalize  | `3`      |
//! | weights    | `1`      |
//! | output     | `1`      |

mod plan;
mod stages;

pub use plan::{
    budget_with_headroom, plan_from_epsilon, regressor_depth, regressor_max_heads, DivisionPlan, DivisionRange,
    PlanInputs, Predicted, SynthesisPlan,
};
pub use stages::{eta_tilde_columns, eta_tilde_depth, StageSlots};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold_geometry::sample_tube;
use crate::oracle_partition::{PartitionAtlas, TargetFunction};
use crate::transformer_core::TransformerNetwork;
use crate::weight_compiler::{division_stage, CompiledProgram, DivisionSeries, ProgramBuilder, TokenSlot};
use stages::{eta_tilde_stage, scale_all, StageTracker};

/// Knobs of the synthesis that are not fixed by the plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Token budget; `None` allocates the layout plus 10% headroom.
    pub ell: Option<usize>,
    /// Tube samples used to measure `‖η̃‖₁`.
    pub bound_samples: usize,
    /// Relative widening of the measured `‖η̃‖₁` range.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            ell: None,
            bound_samples: 2000,
            margin: 0.2,
            seed: 0,
        }
    }
}

/// `[(1 − margin)·min, (1 + margin)·max]` of `‖η̃‖₁` over tube samples.
pub fn measured_division_range(atlas: &PartitionAtlas, samples: usize, seed: u64, margin: f64) -> Result<DivisionRange> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_tube(atlas.manifold(), atlas.q(), samples, &mut rng);
    let (lo, hi) = atlas.eta_tilde_l1_bounds(pts.iter().map(|t| t.x.as_slice()))?;
    if !(lo > 0.0) {
        return Err(Error::Domain("a tube sample has ‖η̃‖₁ = 0; the atlas is too sparse".into()));
    }
    Ok(DivisionRange {
        c1: (1.0 - margin) * lo,
        c2: (1.0 + margin) * hi,
    })
}

fn resolve_budget(b: &ProgramBuilder, ell: Option<usize>) -> Result<usize> {
    let need = b.columns_used();
    match ell {
        Some(l) if l < need => Err(Error::TokenBudget { needed: need, available: l }),
        Some(l) => Ok(l),
        None => Ok(need),
    }
}

/// Network whose token `out` holds `η̃_i(x)` for `x ∈ [0,1]^D` (0-based `i`);
/// `d + 8` blocks.
pub fn synthesize_eta_tilde(atlas: &PartitionAtlas, i: usize, ell: Option<usize>) -> Result<CompiledProgram> {
    if i >= atlas.len() {
        return Err(Error::Index(format!("center {i} of {}", atlas.len())));
    }
    let mut b = ProgramBuilder::new(atlas.manifold().ambient_dim(), 1.0);
    let out = eta_tilde_stage(&mut b, atlas, &[i])?;
    let ell = resolve_budget(&b, ell)?;
    b.finish(ell, "eta_tilde", out, 0.0)
}

fn series_for(range: DivisionRange, eps_div: f64) -> Result<(DivisionPlan, DivisionSeries)> {
    let dp = DivisionPlan::for_range(range, eps_div)?;
    let series = DivisionSeries::new(dp.c1, dp.c2, Some(dp.c), dp.r)?;
    Ok((dp, series))
}

/// Schedules bumps, division and normalization; returns the `T^i` slots.
fn eta_vector_stages(
    b: &mut ProgramBuilder,
    atlas: &PartitionAtlas,
    series: &DivisionSeries,
    dp: &DivisionPlan,
    tr: &mut StageTracker,
) -> Result<Vec<TokenSlot>> {
    let d = atlas.manifold().intrinsic_dim();
    let all: Vec<usize> = (0..atlas.len()).collect();
    let bumps = eta_tilde_stage(b, atlas, &all)?;
    tr.close("bumps", b, 0);
    let at = eta_tilde_depth(d);
    let inv = division_stage(b, at, &bumps, 1.0, series)?;
    tr.close("division", b, at);
    let at = b.depth();
    let inv_max = series.c * (series.r as f64 + 1.0);
    let out = scale_all(b, at, &bumps, inv, 1.0 + 2.0 * inv_max)?;
    b.ensure_blocks(at + 3);
    tr.close("normalize", b, at);
    debug_assert_eq!(dp.stages, crate::weight_compiler::stages_for(series.r));
    Ok(out)
}

/// Network with `K` outputs `T^i(x) ≈ η_i(x)`, relative error `≤ ε_div`
/// whenever `‖η̃(x)‖₁ ∈ [c1, c2]`.
pub fn synthesize_eta_vector(
    atlas: &PartitionAtlas,
    eps_div: f64,
    range: DivisionRange,
    ell: Option<usize>,
) -> Result<CompiledProgram> {
    if !(eps_div > 0.0 && eps_div < 1.0) {
        return Err(Error::Contract(format!("ε_div = {eps_div} must lie in (0, 1)")));
    }
    let (dp, series) = series_for(range, eps_div)?;
    let mut b = ProgramBuilder::new(atlas.manifold().ambient_dim(), 1.0);
    let mut tr = StageTracker::new(&b);
    let out = eta_vector_stages(&mut b, atlas, &series, &dp, &mut tr)?;
    let ell = resolve_budget(&b, ell)?;
    b.finish(ell, "eta_vector", out, dp.relative_error)
}

/// Per-stage counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageAudit {
    #[serde(flatten)]
    pub slots: StageSlots,
    pub max_heads: usize,
    pub total_heads: usize,
}

/// Theorem-level orders evaluated at the plan's parameters, without
/// constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Orders {
    /// `d + ln ln(1/ε)`.
    pub depth: f64,
    /// `D·δ^{−d}`.
    pub heads: f64,
    /// `D·δ^{−d}`.
    pub tokens: f64,
    /// `D²·δ^{−2d−8}·(1 − q)^{−2d−8}`.
    pub kappa: f64,
}

/// Construction audit of a synthesized regressor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub stages: Vec<StageAudit>,
    #[serde(rename = "K")]
    pub centers: usize,
    #[serde(rename = "L_T")]
    pub depth: usize,
    #[serde(rename = "m_T")]
    pub max_heads: usize,
    pub total_heads: usize,
    pub ell: usize,
    pub columns_used: usize,
    pub kappa_obs: f64,
    #[serde(rename = "M")]
    pub bound: f64,
    pub ffn_depth: usize,
    pub ffn_width: usize,
    pub predicted: Predicted,
    pub orders: Orders,
    /// `κ_obs / orders.kappa`.
    pub kappa_constant: f64,
}

fn audit(net: &TransformerNetwork, plan: &SynthesisPlan, k: usize, slots: Vec<StageSlots>, bound: f64, cols: usize) -> Audit {
    let stages = slots
        .into_iter()
        .map(|s| {
            let blocks = &net.blocks()[s.first_block..s.first_block + s.blocks];
            StageAudit {
                max_heads: blocks.iter().map(|b| b.heads.len()).max().unwrap_or(0),
                total_heads: blocks.iter().map(|b| b.heads.len()).sum(),
                slots: s,
            }
        })
        .collect();
    let i = &plan.inputs;
    let (d, dim) = (i.d as f64, i.ambient_dim as f64);
    let spread = dim * plan.delta.powf(-d);
    let orders = Orders {
        depth: d + (1.0 / plan.epsilon).ln().max(1.0).ln().max(0.0),
        heads: spread,
        tokens: spread,
        kappa: dim * dim * plan.delta.powf(-2.0 * d - 8.0) * (1.0 - i.q).powf(-2.0 * d - 8.0),
    };
    let kappa_obs = net.weight_bound_observed();
    Audit {
        stages,
        centers: k,
        depth: net.depth(),
        max_heads: net.max_heads(),
        total_heads: net.total_heads(),
        ell: net.ell(),
        columns_used: cols,
        kappa_obs,
        bound,
        ffn_depth: net.ffn_depth(),
        ffn_width: net.ffn_width(),
        predicted: plan.predicted,
        orders,
        kappa_constant: kappa_obs / orders.kappa,
    }
}

/// Synthesized regressor with its plan and audit.
#[derive(Debug, Clone)]
pub struct Regressor {
    pub network: TransformerNetwork,
    pub plan: SynthesisPlan,
    pub audit: Audit,
}

/// Network `T` with `‖T − f‖_∞ ≤ ε` on the tube, built on `atlas`.
///
/// The atlas separation must not exceed the `δ` the plan derives from `ε`;
/// [`atlas_for_epsilon`] builds a matching one.
pub fn synthesize_regressor(
    atlas: &PartitionAtlas,
    target: &TargetFunction,
    epsilon: f64,
    opts: &SynthesisOptions,
) -> Result<Regressor> {
    let inputs = PlanInputs::new(atlas.manifold(), target, atlas.q());
    let plan = plan_from_epsilon(&inputs, epsilon)?;
    if atlas.delta() > plan.delta * (1.0 + 1e-12) {
        return Err(Error::Contract(format!(
            "atlas δ = {} exceeds the δ = {} required for ε = {epsilon}",
            atlas.delta(),
            plan.delta
        )));
    }
    let range = measured_division_range(atlas, opts.bound_samples, opts.seed, opts.margin)?;
    let plan = plan.with_division(range)?;
    let (dp, series) = series_for(range, plan.eps_div)?;
    let mut b = ProgramBuilder::new(atlas.manifold().ambient_dim(), 1.0);
    let mut tr = StageTracker::new(&b);
    let t = eta_vector_stages(&mut b, atlas, &series, &dp, &mut tr)?;
    let gs: Vec<f64> = atlas
        .net()
        .centers
        .iter()
        .map(|c| target.g_canonical(&nalgebra::DVector::from_column_slice(&c.canonical)))
        .collect();
    let gmax = gs.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    let mg = (2.0 * gmax).max(1.0);
    let at = b.depth();
    let weighted = b.alloc(t.len());
    for ((&src, &g), &dst) in t.iter().zip(&gs).zip(&weighted) {
        b.affine_read(at, src, g, dst, mg)?;
    }
    tr.close("weights", &b, at);
    let cols = b.columns_used() + 1;
    let ell = match opts.ell {
        Some(l) if l < cols => return Err(Error::TokenBudget { needed: cols, available: l }),
        Some(l) => l,
        None => budget_with_headroom(b.columns_used()),
    };
    b.skip(ell - cols);
    let out = b.alloc(1)[0];
    debug_assert_eq!(out.index, ell);
    b.sum(at + 1, &weighted, out, mg)?;
    tr.close("output", &b, at + 1);
    let slots = tr.slots;
    let prog = b.finish(ell, "regressor", vec![out], epsilon)?;
    let bound = prog.bound();
    let network = prog.into_network();
    let audit = audit(&network, &plan, atlas.len(), slots, bound, cols);
    Ok(Regressor { network, plan, audit })
}

/// Atlas at the separation the plan assigns to `ε`.
pub fn atlas_for_epsilon(
    manifold: &crate::manifold_geometry::Manifold,
    target: &TargetFunction,
    q: f64,
    epsilon: f64,
) -> Result<PartitionAtlas> {
    let plan = plan_from_epsilon(&PlanInputs::new(manifold, target, q), epsilon)?;
    PartitionAtlas::build(manifold, q, plan.delta)
}

/// `max |T(x) − f(x)|` over `xs`.
pub fn sup_error(net: &TransformerNetwork, atlas: &PartitionAtlas, target: &TargetFunction, xs: &[Vec<f64>]) -> Result<f64> {
    let out = net.forward_batch(xs)?;
    let mut worst: f64 = 0.0;
    for (x, t) in xs.iter().zip(out) {
        worst = worst.max((t - target.f(atlas.manifold(), x)?).abs());
    }
    Ok(worst)
}
