//! Empirical checks of the approximation and estimation rates, the covering
//! number bound and the intrinsic-dimension experiment.
//!
//! Every sweep point owns a generator derived from the sweep seed and its
//! position in the input list, so results do not depend on evaluation order.
//! Points are sorted by axis value before fitting.

mod approx;
mod covering;
mod gen;
mod id;

pub use approx::{approximation_sweep, ApproxAxis, ApproxRow, ApproxSweep, ApproxSweepConfig};
pub use covering::{covering_bound, covering_bound_direct, CoveringBoundParams};
pub use gen::{generalization_sweep, FeatureSource, GenRow, GenSweep, GenSweepConfig, LabelSource};
pub use id::{estimate_intrinsic_dim, noise_id_sweep, IdEstimate, IdRow, IdSweep, IdSweepConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::manifold_geometry::Manifold;
use crate::oracle_partition::{TargetFunction, TargetKind};

/// Slope tolerance used by every rate check.
pub const SLOPE_TOLERANCE: f64 = 0.3;

/// Target description as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    #[serde(default)]
    pub kind: TargetKind,
    pub alpha: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

impl TargetSpec {
    pub fn build(&self, m: &Manifold) -> Result<TargetFunction> {
        TargetFunction::new(m, self.kind, self.alpha, self.amplitude, self.seed)
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub half_width: f64,
}

impl LogLogFit {
    /// True when the slope lies within `tol` of `expected`.
    pub fn within(&self, expected: f64, tol: f64) -> bool {
        (self.slope - expected).abs() <= tol
    }
}

/// Fits `ln y = a + b ln x`; at least 4 positive points are required.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension("x and y must have equal length".into()));
    }
    if xs.len() < 4 {
        return Err(Error::Contract(format!("a slope fit needs at least 4 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(LogLogFit {
        slope,
        intercept,
        half_width: t * se,
    })
}

/// Ranks with ties sharing their average rank (1-based).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `NaN` if either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Dimension("Spearman correlation needs two equal series of length ≥ 2".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    Ok(cov / (va * vb).sqrt())
}

/// Outcome of one rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweepResult {
    /// `"delta"` or `"n"`.
    pub axis: String,
    pub axis_values: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when the slope test is skipped.
    pub fit: Option<LogLogFit>,
    pub expected_slope: f64,
    pub tolerance: f64,
    pub warnings: Vec<String>,
    pub config: serde_json::Value,
}

impl RateSweepResult {
    /// `Some(pass)` when a slope was fitted.
    pub fn passes(&self) -> Option<bool> {
        self.fit.map(|f| f.within(self.expected_slope, self.tolerance))
    }

    /// One-line human summary, e.g. `slope 0.98±0.30 (expected 1.00) PASS`.
    pub fn summary(&self) -> String {
        match self.fit {
            Some(f) => format!(
                "slope {:.2}±{:.2} (expected {:.2}, fit CI ±{:.2}) {}",
                f.slope,
                self.tolerance,
                self.expected_slope,
                f.half_width,
                if self.passes() == Some(true) { "PASS" } else { "FAIL" }
            ),
            None => "slope test skipped".to_string(),
        }
    }
}

/// Generator of the `i`-th point of a sweep seeded with `seed`.
pub(crate) fn point_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

/// Wraps a failure with the sweep value that caused it.
pub(crate) fn at_point<T>(value: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::SweepPoint {
        value,
        source: Box::new(e),
    })
}

/// Order of `xs` after sorting by `key`.
pub(crate) fn sorted_order(key: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let xs = [0.1, 0.2, 0.4, 0.8, 1.6];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.75)).collect();
        let f = loglog_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.75).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.half_width < 1e-9);
    }

    #[test]
    fn fit_needs_four_points() {
        assert!(loglog_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn half_width_matches_t_table() {
        // Residuals ±0.1 in log space and 5 points: t_{0.975,3} = 3.182446.
        let lx = [0.0f64, 1.0, 2.0, 3.0, 4.0];
        let ly = [0.1, -0.1, 0.1, -0.1, 0.1];
        let xs: Vec<f64> = lx.iter().map(|v| v.exp()).collect();
        let ys: Vec<f64> = ly.iter().map(|v: &f64| v.exp()).collect();
        let f = loglog_fit(&xs, &ys).unwrap();
        let slope: f64 = 0.0;
        let intercept = 0.02;
        let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let want = 3.182446305284263 * (ssr / 3.0 / 10.0).sqrt();
        assert!((f.slope - slope).abs() < 1e-12);
        assert!((f.half_width - want).abs() < 1e-9);
    }

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // Ties: ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
        let r = spearman(&[1.0, 2.0, 2.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn point_generators_differ() {
        use rand::Rng;
        let a: u64 = point_rng(5, 0).random();
        let b: u64 = point_rng(5, 1).random();
        let c: u64 = point_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
