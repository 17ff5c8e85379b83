use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{point_rng, sorted_order, spearman};
use crate::error::{Error, Result};
use crate::manifold_geometry::{sample_tube, Manifold, ManifoldConfig};

/// Levina–Bickel estimate with inverse averaging over points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    pub dimension: f64,
    /// Neighbor pairs at distance zero that were left out.
    pub skipped_pairs: usize,
    /// Points with fewer than two usable neighbors.
    pub skipped_points: usize,
    pub warnings: Vec<String>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `m̂ = [ (1/N) Σ_x m̂_k(x)^{−1} ]^{−1}` with
/// `m̂_k(x)^{−1} = (1/(k−2)) Σ_{j<k} ln(T_k(x)/T_j(x))`.
///
/// Neighbors at distance zero drop out of the inner sum, which is then
/// normalized by one less than the number of remaining terms.
pub fn estimate_intrinsic_dim(points: &[Vec<f64>], k: usize) -> Result<IdEstimate> {
    if k < 3 {
        return Err(Error::Contract(format!("k = {k} must be at least 3")));
    }
    if points.len() <= k {
        return Err(Error::Contract(format!("need more than k = {k} points, got {}", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("points have different lengths".into()));
    }
    let n = points.len();
    let mut inv_sum = 0.0;
    let mut used = 0usize;
    let mut skipped_pairs = 0usize;
    let mut skipped_points = 0usize;
    let mut d2 = vec![0.0; n - 1];
    for (i, p) in points.iter().enumerate() {
        let mut w = 0;
        for (j, other) in points.iter().enumerate() {
            if j != i {
                d2[w] = sq_dist(p, other);
                w += 1;
            }
        }
        d2.select_nth_unstable_by(k - 1, f64::total_cmp);
        let near = &mut d2[..k];
        near.sort_by(f64::total_cmp);
        let tk = near[k - 1].sqrt();
        if !(tk > 0.0) {
            skipped_pairs += k;
            skipped_points += 1;
            continue;
        }
        let mut acc = 0.0;
        let mut terms = 0usize;
        for &t2 in &near[..k - 1] {
            if t2 > 0.0 {
                acc += (tk / t2.sqrt()).ln();
                terms += 1;
            } else {
                skipped_pairs += 1;
            }
        }
        if terms < 2 {
            skipped_points += 1;
            continue;
        }
        inv_sum += acc / (terms - 1) as f64;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Domain("every point has fewer than two distinct neighbors".into()));
    }
    let mut warnings = Vec::new();
    if skipped_pairs > 0 {
        warnings.push(format!("{skipped_pairs} neighbor pairs at distance zero were skipped"));
    }
    let mean_inv = inv_sum / used as f64;
    Ok(IdEstimate {
        dimension: 1.0 / mean_inv,
        skipped_pairs,
        skipped_points,
        warnings,
    })
}

fn default_k() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdSweepConfig {
    pub manifold: ManifoldConfig,
    pub sigmas: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdRow {
    pub sigma: f64,
    pub id_est: f64,
    pub id_clean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdSweep {
    /// Rows sorted by `σ`.
    pub rows: Vec<IdRow>,
    /// Spearman correlation of the estimate with `σ`.
    pub spearman: f64,
    pub warnings: Vec<String>,
    pub config: serde_json::Value,
}

impl IdSweep {
    pub fn nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].id_est >= w[0].id_est)
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

/// Estimates the dimension of one clean sample of `M` after adding isotropic
/// Gaussian noise of each `σ`.
pub fn noise_id_sweep(cfg: &IdSweepConfig) -> Result<IdSweep> {
    if cfg.sigmas.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(Error::Contract("noise levels must be finite and nonnegative".into()));
    }
    if cfg.sigmas.len() < 2 {
        return Err(Error::Contract("the sweep needs at least two noise levels".into()));
    }
    let m = Manifold::from_config(&cfg.manifold)?;
    let mut rng = point_rng(cfg.seed, 0);
    let clean: Vec<Vec<f64>> = sample_tube(&m, 0.0, cfg.n, &mut rng).into_iter().map(|t| t.x).collect();
    let base = estimate_intrinsic_dim(&clean, cfg.k)?;
    let mut warnings = base.warnings.clone();
    let mut rows = Vec::with_capacity(cfg.sigmas.len());
    for (i, &sigma) in cfg.sigmas.iter().enumerate() {
        let est = if sigma == 0.0 {
            base.clone()
        } else {
            let mut nrng = point_rng(cfg.seed, i + 1);
            let noisy: Vec<Vec<f64>> = clean
                .iter()
                .map(|x| {
                    x.iter()
                        .map(|v| {
                            let z: f64 = StandardNormal.sample(&mut nrng);
                            v + sigma * z
                        })
                        .collect()
                })
                .collect();
            estimate_intrinsic_dim(&noisy, cfg.k)?
        };
        warnings.extend(est.warnings.iter().map(|w| format!("σ = {sigma}: {w}")));
        rows.push(IdRow {
            sigma,
            id_est: est.dimension,
            id_clean: base.dimension,
        });
    }
    let order = sorted_order(&rows.iter().map(|r| r.sigma).collect::<Vec<_>>());
    let rows: Vec<IdRow> = order.into_iter().map(|i| rows[i].clone()).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.id_est).collect();
    Ok(IdSweep {
        spearman: spearman(&s, &e)?,
        rows,
        warnings,
        config: serde_json::to_value(cfg)?,
    })
}
