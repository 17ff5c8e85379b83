use serde::{Deserialize, Serialize};

use super::stages::{eta_tilde_columns, eta_tilde_depth};
use crate::error::{Error, Result};
use crate::manifold_geometry::Manifold;
use crate::oracle_partition::TargetFunction;
use crate::weight_compiler::{division_order, interaction_weight, stages_for};

/// Geometry and target data a plan depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub d: usize,
    #[serde(rename = "D")]
    pub ambient_dim: usize,
    pub q: f64,
    pub reach: f64,
    pub volume: f64,
    pub alpha: f64,
    pub holder_constant: f64,
    pub sup_bound: f64,
}

impl PlanInputs {
    pub fn new(m: &Manifold, target: &TargetFunction, q: f64) -> Self {
        Self {
            d: m.intrinsic_dim(),
            ambient_dim: m.ambient_dim(),
            q,
            reach: m.reach(),
            volume: m.volume(),
            alpha: target.alpha,
            holder_constant: target.holder_constant,
            sup_bound: target.sup_bound,
        }
    }
}

/// Range `[c1, c2]` of `‖η̃‖₁` handed to the division stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionRange {
    pub c1: f64,
    pub c2: f64,
}

/// Division constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionPlan {
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
    pub r: usize,
    /// `s` with `2^{s−1} < r ≤ 2^s`.
    pub stages: u32,
    /// Guaranteed relative error `q0^{r+1}`.
    pub relative_error: f64,
}

impl DivisionPlan {
    /// Smallest `r` giving relative error `≤ eps_div`; also meets
    /// `q0^{r+1}/c1 ≤ eps_div`.
    pub fn for_range(range: DivisionRange, eps_div: f64) -> Result<Self> {
        let DivisionRange { c1, c2 } = range;
        if !(c1 > 0.0) {
            return Err(Error::Domain(format!(
                "‖η̃‖₁ lower bound {c1} is not positive; the atlas does not cover the sampled region"
            )));
        }
        let c2 = if c2 > c1 { c2 } else { c1 * (1.0 + 1e-9) };
        let r = division_order(c1, c2, eps_div, c1.min(1.0))?.max(1);
        let q0 = (c2 - c1) / (c2 + c1);
        Ok(Self {
            c1,
            c2,
            c: 2.0 / (c1 + c2),
            r,
            stages: stages_for(r),
            relative_error: q0.powi(r as i32 + 1),
        })
    }
}

/// Predicted sizes of the synthesized regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicted {
    #[serde(rename = "K")]
    pub centers: f64,
    pub ell: usize,
    #[serde(rename = "L_T")]
    pub depth: usize,
    #[serde(rename = "m_T")]
    pub max_heads: usize,
    pub kappa: f64,
    #[serde(rename = "M")]
    pub bound: f64,
}

/// Parameter choices for a target accuracy `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub epsilon: f64,
    pub inputs: PlanInputs,
    pub delta: f64,
    /// Division tolerance `δ^α`.
    pub eps_div: f64,
    pub division: DivisionPlan,
    pub predicted: Predicted,
    pub warnings: Vec<String>,
}

/// Volume of the unit `d`-ball.
fn unit_ball_volume(d: usize) -> f64 {
    let (mut v, mut k) = if d % 2 == 0 { (1.0, 0) } else { (2.0, 1) };
    while k < d {
        k += 2;
        v *= 2.0 * std::f64::consts::PI / k as f64;
    }
    v
}

/// Columns of the division stage for `s` power stages.
pub(crate) fn division_columns(s: u32) -> usize {
    (1usize << s) + 4
}

/// Layout size before the output column: inputs, bumps, division, products
/// and the `g` scaling.
pub(crate) fn regressor_columns(k: usize, d: usize, dim: usize, s: u32) -> usize {
    dim + k * eta_tilde_columns(d, dim) + division_columns(s) + 2 * k
}

/// `L_T = (d + 8) + (3s + 5) + 3 + 2`.
pub fn regressor_depth(d: usize, s: u32) -> usize {
    eta_tilde_depth(d) + 3 * s as usize + 5 + 3 + 2
}

/// Largest per-block head count for `K` centers.
pub fn regressor_max_heads(k: usize, d: usize, dim: usize) -> usize {
    k * (d * dim).max(d + dim)
}

/// Token budget with 10% headroom; the output sits in the last column.
pub fn budget_with_headroom(columns: usize) -> usize {
    ((columns + 1) as f64 * 1.1).ceil() as usize
}

/// Chooses `δ`, the division tolerance and the predicted sizes for `ε`.
///
/// The division range is predicted from the envelope `[1 − q, d^{d/2}(1−q)^{−2d}]`
/// widened by 20% and replaced by measured bounds at synthesis time.
pub fn plan_from_epsilon(inputs: &PlanInputs, epsilon: f64) -> Result<SynthesisPlan> {
    let PlanInputs {
        d,
        q,
        reach,
        alpha,
        holder_constant: l,
        ..
    } = *inputs;
    let cap = 1f64.min((0.5 * reach).powf(alpha));
    if !(epsilon > 0.0 && epsilon < cap) {
        return Err(Error::Contract(format!(
            "ε = {epsilon} must lie in (0, min(1, (τ/2)^α)) = (0, {cap:.6})"
        )));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Contract(format!("q = {q} must lie in [0, 1)")));
    }
    let factor = 1.0 + l * (72.0 / (1.0 - q).powi(2)).powf(alpha);
    let delta = (epsilon / factor).powf(1.0 / alpha);
    if !(delta < 0.5 * reach) {
        return Err(Error::Contract(format!("δ = {delta} must be below τ/2 = {}", 0.5 * reach)));
    }
    let eps_div = delta.powf(alpha);
    let (lo, hi) = (1.0 - q, (d as f64).powf(0.5 * d as f64) * (1.0 - q).powf(-2.0 * d as f64));
    let division = DivisionPlan::for_range(
        DivisionRange {
            c1: 0.8 * lo,
            c2: 1.2 * hi.max(2.0 * lo),
        },
        eps_div,
    )?;
    let mut plan = SynthesisPlan {
        epsilon,
        inputs: *inputs,
        delta,
        eps_div,
        division,
        predicted: predict(inputs, delta, &division, None),
        warnings: Vec::new(),
    };
    plan.refresh_warnings();
    Ok(plan)
}

fn predict(inputs: &PlanInputs, delta: f64, div: &DivisionPlan, k: Option<usize>) -> Predicted {
    let (d, dim) = (inputs.d, inputs.ambient_dim);
    let kf = k.map_or_else(
        // Between the packing and covering counts of a greedy net.
        || inputs.volume / (unit_ball_volume(d) * delta.powi(d as i32)) * 2f64.powf(0.5 * d as f64),
        |k| k as f64,
    );
    let kk = kf.ceil() as usize;
    let ell = budget_with_headroom(regressor_columns(kk, d, dim, div.stages));
    let p = 0.5 * (1.0 + inputs.q);
    let h = 6.0 / (1.0 - inputs.q / p);
    let bound = dim as f64 / (h * delta).powi(2) + dim as f64 / (p * inputs.reach).powi(2) + 1.0;
    let bound = bound.max(div.c * (div.r as f64 + 1.0));
    Predicted {
        centers: kf,
        ell,
        depth: regressor_depth(d, div.stages),
        max_heads: regressor_max_heads(kk, d, dim),
        kappa: interaction_weight(bound, bound, ell),
        bound,
    }
}

impl SynthesisPlan {
    /// Replaces the predicted division range by a measured one.
    pub fn with_division(&self, range: DivisionRange) -> Result<Self> {
        let mut p = self.clone();
        p.division = DivisionPlan::for_range(range, self.eps_div)?;
        p.predicted = predict(&self.inputs, self.delta, &p.division, None);
        p.refresh_warnings();
        Ok(p)
    }

    fn refresh_warnings(&mut self) {
        self.warnings.clear();
        let series = division_columns(self.division.stages) as f64;
        let chunk = self.predicted.centers * self.inputs.ambient_dim as f64;
        if series > chunk {
            self.warnings.push(format!(
                "division chunk ({series} columns) exceeds the K·D chunk ({chunk:.0}); ln(1/ε) dominates δ^(−d)"
            ));
        }
    }

    /// Bound `|f − f̂| ≤ L(72δ/(1 − q)²)^α` on the oracle error.
    pub fn oracle_error_bound(&self) -> f64 {
        let i = &self.inputs;
        i.holder_constant * (72.0 * self.delta / (1.0 - i.q).powi(2)).powf(i.alpha)
    }
}
