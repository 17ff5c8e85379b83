use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture class `T(L_T, m_T, d_embed, ℓ, L_FFN, w_FFN, R, κ)` on inputs
/// in `R^D` with `‖x‖_∞ ≤ M`, and the covering radius `δ_cover`.
///
/// `R` bounds the class but does not enter the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringBoundParams {
    #[serde(rename = "L_T")]
    pub depth: usize,
    #[serde(rename = "m_T")]
    pub heads: usize,
    pub d_embed: usize,
    pub ell: usize,
    #[serde(rename = "L_FFN")]
    pub ffn_depth: usize,
    #[serde(rename = "w_FFN")]
    pub ffn_width: usize,
    #[serde(rename = "D")]
    pub input_dim: usize,
    #[serde(rename = "R")]
    pub output_bound: f64,
    pub kappa: f64,
    #[serde(rename = "M")]
    pub input_bound: f64,
    pub delta_cover: f64,
}

impl CoveringBoundParams {
    fn validate(&self) -> Result<()> {
        let ints = [
            ("L_T", self.depth),
            ("m_T", self.heads),
            ("d_embed", self.d_embed),
            ("ell", self.ell),
            ("L_FFN", self.ffn_depth),
            ("w_FFN", self.ffn_width),
            ("D", self.input_dim),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(Error::Domain(format!("{name} must be positive")));
            }
        }
        let reals = [
            ("R", self.output_bound),
            ("kappa", self.kappa),
            ("M", self.input_bound),
            ("delta_cover", self.delta_cover),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `4 d_embed² w_FFN² D (m_T + L_FFN) L_T`.
    pub fn exponent(&self) -> f64 {
        let (de, w) = (self.d_embed as f64, self.ffn_width as f64);
        4.0 * de * de * w * w * self.input_dim as f64 * (self.heads + self.ffn_depth) as f64 * self.depth as f64
    }
}

/// `ln N(δ, T, ‖·‖_∞)` from
/// `(2^{L_T+1} L_FFN M^{3L_T} d_embed^{18L_T²} w_FFN^{18L_T² L_FFN}
///   κ^{6L_T² L_FFN} m_T^{L_T²} ℓ^{L_T²} / δ)^{4 d_embed² w_FFN² D (m_T+L_FFN) L_T}`,
/// evaluated in log space.
pub fn covering_bound(p: &CoveringBoundParams) -> Result<f64> {
    p.validate()?;
    let lt = p.depth as f64;
    let lt2 = lt * lt;
    let lf = p.ffn_depth as f64;
    let base = (lt + 1.0) * std::f64::consts::LN_2
        + lf.ln()
        + 3.0 * lt * p.input_bound.ln()
        + 18.0 * lt2 * (p.d_embed as f64).ln()
        + 18.0 * lt2 * lf * (p.ffn_width as f64).ln()
        + 6.0 * lt2 * lf * p.kappa.ln()
        + lt2 * (p.heads as f64).ln()
        + lt2 * (p.ell as f64).ln()
        - p.delta_cover.ln();
    Ok(p.exponent() * base)
}

/// The same bound from the literal product and power; `None` when an
/// intermediate overflows or underflows.
pub fn covering_bound_direct(p: &CoveringBoundParams) -> Result<Option<f64>> {
    p.validate()?;
    let lt = p.depth as f64;
    let lt2 = lt * lt;
    let lf = p.ffn_depth as f64;
    let inner = 2f64.powf(lt + 1.0)
        * lf
        * p.input_bound.powf(3.0 * lt)
        * (p.d_embed as f64).powf(18.0 * lt2)
        * (p.ffn_width as f64).powf(18.0 * lt2 * lf)
        * p.kappa.powf(6.0 * lt2 * lf)
        * (p.heads as f64).powf(lt2)
        * (p.ell as f64).powf(lt2)
        / p.delta_cover;
    let n = inner.powf(p.exponent());
    Ok((n.is_finite() && n > 0.0 && n.is_normal()).then(|| n.ln()))
}
