use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{at_point, loglog_fit, point_rng, sorted_order, RateSweepResult, TargetSpec, SLOPE_TOLERANCE};
use crate::approximator_synthesis::{plan_from_epsilon, synthesize_regressor, sup_error, PlanInputs, SynthesisOptions};
use crate::error::{Error, Result};
use crate::manifold_geometry::{sample_tube, Manifold, ManifoldConfig};
use crate::oracle_partition::{PartitionAtlas, TargetFunction, TargetKind};

/// Values swept by [`approximation_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxAxis {
    Epsilon(Vec<f64>),
    Delta(Vec<f64>),
}

fn default_test_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxSweepConfig {
    pub manifold: ManifoldConfig,
    pub target: TargetSpec,
    pub axis: ApproxAxis,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

/// One synthesized network of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub delta: f64,
    pub sup_err: f64,
    #[serde(rename = "L_T")]
    pub depth: usize,
    #[serde(rename = "m_T")]
    pub max_heads: usize,
    pub ell: usize,
    pub kappa_obs: f64,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub centers: usize,
    /// Sup error of the oracle `f̂` on the same samples.
    pub oracle_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxSweep {
    /// Sup error against `δ`, expected slope `α`.
    pub result: RateSweepResult,
    /// Rows sorted by `δ`.
    pub rows: Vec<ApproxRow>,
    /// `ln m_T` against `ln ε`, expected slope `−d/α`.
    pub heads_fit: Option<super::LogLogFit>,
    /// `ln ℓ` against `ln ε`, expected slope `−d/α`.
    pub tokens_fit: Option<super::LogLogFit>,
    /// `max L_T − min L_T`.
    pub depth_growth: usize,
}

impl ApproxSweep {
    /// Every row meets its own `ε`.
    pub fn within_epsilon(&self) -> bool {
        self.rows.iter().all(|r| r.sup_err <= r.epsilon)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `ε` whose planned separation is `δ`.
fn epsilon_for_delta(inputs: &PlanInputs, delta: f64) -> f64 {
    let a = inputs.alpha;
    let loc = 72.0 / (1.0 - inputs.q).powi(2);
    delta.powf(a) * (1.0 + inputs.holder_constant * loc.powf(a))
}

/// Synthesizes one regressor per sweep value and measures its sup error on
/// fresh tube samples.
pub fn approximation_sweep(cfg: &ApproxSweepConfig) -> Result<ApproxSweep> {
    let m = Manifold::from_config(&cfg.manifold)?;
    let target = cfg.target.build(&m)?;
    let q = cfg.manifold.q;
    let inputs = PlanInputs::new(&m, &target, q);
    let tau = m.reach();
    let count = match &cfg.axis {
        ApproxAxis::Epsilon(v) | ApproxAxis::Delta(v) => v.len(),
    };
    if count < 4 {
        return Err(Error::Contract(format!("a rate sweep needs at least 4 values, got {count}")));
    }
    let points: Vec<(f64, f64)> = match &cfg.axis {
        ApproxAxis::Epsilon(es) => {
            let mut v = Vec::with_capacity(es.len());
            for &e in es {
                v.push((e, at_point(e, plan_from_epsilon(&inputs, e))?.delta));
            }
            v
        }
        ApproxAxis::Delta(ds) => {
            let mut v = Vec::with_capacity(ds.len());
            for &d in ds {
                if !(d > 0.0 && d < tau / 2.0) {
                    let msg = format!("δ must lie in (0, τ/2) = (0, {})", tau / 2.0);
                    return at_point(d, Err(Error::Contract(msg)));
                }
                v.push((epsilon_for_delta(&inputs, d), d));
            }
            v
        }
    };
    let mut rows = Vec::with_capacity(points.len());
    for (i, &(eps, delta)) in points.iter().enumerate() {
        rows.push(at_point(delta, sweep_point(&m, &target, q, eps, delta, cfg, i))?);
    }
    let order = sorted_order(&rows.iter().map(|r| r.delta).collect::<Vec<_>>());
    let rows: Vec<ApproxRow> = order.into_iter().map(|i| rows[i].clone()).collect();
    let deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.sup_err).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let mut warnings = Vec::new();
    let fit = if target.kind == TargetKind::Constant {
        warnings.push("constant target: errors sit at the division floor, slope test skipped".into());
        None
    } else if errors.iter().any(|&e| !(e > 0.0)) {
        warnings.push("zero error at some δ, slope test skipped".into());
        None
    } else {
        Some(loglog_fit(&deltas, &errors)?)
    };
    let heads: Vec<f64> = rows.iter().map(|r| r.max_heads as f64).collect();
    let tokens: Vec<f64> = rows.iter().map(|r| r.ell as f64).collect();
    let depth_growth = rows.iter().map(|r| r.depth).max().unwrap_or(0) - rows.iter().map(|r| r.depth).min().unwrap_or(0);
    Ok(ApproxSweep {
        result: RateSweepResult {
            axis: "delta".into(),
            axis_values: deltas,
            errors,
            fit,
            expected_slope: target.alpha,
            tolerance: SLOPE_TOLERANCE,
            warnings,
            config: serde_json::to_value(cfg)?,
        },
        heads_fit: loglog_fit(&eps, &heads).ok(),
        tokens_fit: loglog_fit(&eps, &tokens).ok(),
        rows,
        depth_growth,
    })
}

fn sweep_point(
    m: &Manifold,
    target: &TargetFunction,
    q: f64,
    eps: f64,
    delta: f64,
    cfg: &ApproxSweepConfig,
    i: usize,
) -> Result<ApproxRow> {
    let atlas = PartitionAtlas::build(m, q, delta)?;
    let opts = SynthesisOptions {
        seed: cfg.seed.wrapping_add(i as u64),
        ..SynthesisOptions::default()
    };
    let reg = synthesize_regressor(&atlas, target, eps, &opts)?;
    let mut rng = point_rng(cfg.seed, i);
    let xs: Vec<Vec<f64>> = sample_tube(m, q, cfg.test_samples, &mut rng).into_iter().map(|t| t.x).collect();
    let sup_err = sup_error(&reg.network, &atlas, target, &xs)?;
    let mut oracle_err: f64 = 0.0;
    for x in &xs {
        oracle_err = oracle_err.max((atlas.oracle_f_hat(target, x)? - target.f(m, x)?).abs());
    }
    Ok(ApproxRow {
        delta,
        sup_err,
        depth: reg.audit.depth,
        max_heads: reg.audit.max_heads,
        ell: reg.audit.ell,
        kappa_obs: reg.audit.kappa_obs,
        epsilon: eps,
        centers: atlas.len(),
        oracle_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold_geometry::{FrameKind, ManifoldKind, PlacementOverrides};

    fn circle_cfg(kind: TargetKind, axis: ApproxAxis) -> ApproxSweepConfig {
        ApproxSweepConfig {
            manifold: ManifoldConfig {
                kind: ManifoldKind::Circle,
                d: 1,
                ambient_dim: 3,
                q: 0.0,
                seed: 0,
                placement: PlacementOverrides {
                    frame: Some(FrameKind::Identity),
                    ..Default::default()
                },
            },
            target: TargetSpec {
                kind,
                alpha: 1.0,
                amplitude: 0.01,
                seed: 0,
            },
            axis,
            test_samples: 500,
            seed: 3,
        }
    }

    #[test]
    fn too_few_points_is_a_contract_error() {
        let cfg = circle_cfg(TargetKind::AbsPower, ApproxAxis::Epsilon(vec![0.1, 0.2, 0.3]));
        assert!(matches!(approximation_sweep(&cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn failure_names_the_offending_value() {
        let cfg = circle_cfg(TargetKind::AbsPower, ApproxAxis::Delta(vec![0.1, 0.05, 5.0, 0.02]));
        match approximation_sweep(&cfg) {
            Err(Error::SweepPoint { value, .. }) => assert_eq!(value, 5.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_target_skips_slope() {
        let cfg = circle_cfg(TargetKind::Constant, ApproxAxis::Epsilon(vec![0.19, 0.17, 0.15, 0.13]));
        let s = approximation_sweep(&cfg).unwrap();
        assert!(s.result.fit.is_none());
        assert!(s.within_epsilon());
        for r in &s.rows {
            assert!(r.sup_err < 1e-3);
        }
    }

    #[test]
    fn delta_axis_inverts_the_plan() {
        let m = Manifold::from_config(&circle_cfg(TargetKind::AbsPower, ApproxAxis::Delta(vec![])).manifold).unwrap();
        let t = TargetFunction::new(&m, TargetKind::AbsPower, 1.0, 0.3, 0).unwrap();
        let inputs = PlanInputs::new(&m, &t, 0.2);
        let eps = epsilon_for_delta(&inputs, 0.001);
        let plan = plan_from_epsilon(&inputs, eps).unwrap();
        assert!((plan.delta - 0.001).abs() < 1e-15);
    }
}
