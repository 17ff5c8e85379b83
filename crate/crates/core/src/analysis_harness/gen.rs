//! Surrogate empirical risk minimization: only the `K` output coefficients
//! are fitted, by least squares over the synthesized partition features.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{at_point, loglog_fit, point_rng, sorted_order, RateSweepResult, TargetSpec, SLOPE_TOLERANCE};
use crate::approximator_synthesis::{measured_division_range, synthesize_eta_vector};
use crate::error::{Error, Result};
use crate::manifold_geometry::{sample_tube, Manifold, ManifoldConfig};
use crate::oracle_partition::{PartitionAtlas, TargetFunction};

/// Where the partition features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Outputs `Tⁱ` of the synthesized partition network.
    #[default]
    Network,
    /// The analytic `η_i`.
    Analytic,
}

/// Training labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// `f(x_j)`.
    #[default]
    Target,
    /// The oracle `f̂(x_j)`.
    Oracle,
}

fn default_delta_constant() -> f64 {
    1.5
}

fn default_eps_div() -> f64 {
    1e-3
}

fn default_test_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSweepConfig {
    pub manifold: ManifoldConfig,
    pub target: TargetSpec,
    pub n: Vec<usize>,
    /// `δ = c·τ·n^{−1/(2α+d)}`.
    #[serde(default = "default_delta_constant")]
    pub delta_constant: f64,
    /// Relative error of the partition network.
    #[serde(default = "default_eps_div")]
    pub eps_div: f64,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default)]
    pub features: FeatureSource,
    #[serde(default)]
    pub labels: LabelSource,
    /// Standard deviation of Gaussian label noise; no rate is claimed when set.
    #[serde(default)]
    pub label_noise: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRow {
    pub n: usize,
    /// Mean squared error on the test set.
    pub l2_err: f64,
    pub delta: f64,
    #[serde(rename = "K")]
    pub centers: usize,
    pub ridge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSweep {
    /// Test error against `n`, expected slope `−2α/(2α+d)`.
    pub result: RateSweepResult,
    /// Rows sorted by `n`.
    pub rows: Vec<GenRow>,
    /// Sup of `|f − f̂|` bound used for the label coupling.
    pub oracle_gap_bound: f64,
}

impl GenSweep {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

const RIDGE: f64 = 1e-8;

/// Least-squares coefficients; falls back to a ridge of `1e−8` when the
/// normal matrix is numerically singular.
fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, bool) {
    let ata = a.transpose() * a;
    let aty = a.transpose() * y;
    let eig = ata.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(l, h), &v| (l.min(v), h.max(v)));
    let singular = !(lo > 1e-12 * hi);
    let k = ata.nrows();
    let m = if singular { ata + DMatrix::identity(k, k) * RIDGE } else { ata };
    let sol = match m.clone().cholesky() {
        Some(c) => c.solve(&aty),
        None => (m + DMatrix::identity(k, k) * RIDGE)
            .cholesky()
            .map(|c| c.solve(&aty))
            .unwrap_or_else(|| DVector::zeros(k)),
    };
    (sol, singular)
}

struct Features<'a> {
    atlas: &'a PartitionAtlas,
    net: Option<crate::weight_compiler::CompiledProgram>,
}

impl Features<'_> {
    fn matrix(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let k = self.atlas.len();
        let rows: Vec<Vec<f64>> = match &self.net {
            Some(p) => p.eval_batch(xs)?,
            None => xs.iter().map(|x| self.atlas.eta(x)).collect::<Result<_>>()?,
        };
        Ok(DMatrix::from_fn(xs.len(), k, |j, i| rows[j][i]))
    }
}

/// Fits the output coefficients on `n` samples per sweep value and reports
/// the mean squared error on a fresh test set.
pub fn generalization_sweep(cfg: &GenSweepConfig) -> Result<GenSweep> {
    if cfg.n.len() < 4 {
        return Err(Error::Contract(format!("a rate sweep needs at least 4 values, got {}", cfg.n.len())));
    }
    let (lo, hi) = cfg.n.iter().fold((usize::MAX, 0), |(l, h), &n| (l.min(n), h.max(n)));
    if lo == 0 || (hi as f64 / lo as f64).log10() < 1.5 {
        return Err(Error::Contract("sample sizes must be positive and span at least 1.5 decades".into()));
    }
    let m = Manifold::from_config(&cfg.manifold)?;
    let target = cfg.target.build(&m)?;
    let d = m.intrinsic_dim() as f64;
    let alpha = target.alpha;
    let mut rows = Vec::with_capacity(cfg.n.len());
    let mut warnings = Vec::new();
    let mut gap: f64 = 0.0;
    for (i, &n) in cfg.n.iter().enumerate() {
        let (row, g) = at_point(n as f64, sweep_point(&m, &target, cfg, i, n, d))?;
        if row.ridge {
            warnings.push(format!("n = {n}: feature matrix is rank deficient, ridge {RIDGE:e} applied"));
        }
        gap = gap.max(g);
        rows.push(row);
    }
    let order = sorted_order(&rows.iter().map(|r| r.n as f64).collect::<Vec<_>>());
    let rows: Vec<GenRow> = order.into_iter().map(|i| rows[i].clone()).collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.l2_err).collect();
    let fit = if errs.iter().all(|&e| e > 0.0) {
        Some(loglog_fit(&ns, &errs)?)
    } else {
        warnings.push("zero test error, slope test skipped".into());
        None
    };
    if cfg.label_noise.is_some() {
        warnings.push("label noise is set; no rate is claimed".into());
    }
    Ok(GenSweep {
        result: RateSweepResult {
            axis: "n".into(),
            axis_values: ns,
            errors: errs,
            fit,
            expected_slope: -2.0 * alpha / (2.0 * alpha + d),
            tolerance: SLOPE_TOLERANCE,
            warnings,
            config: serde_json::to_value(cfg)?,
        },
        rows,
        oracle_gap_bound: gap,
    })
}

fn sweep_point(
    m: &Manifold,
    target: &TargetFunction,
    cfg: &GenSweepConfig,
    i: usize,
    n: usize,
    d: f64,
) -> Result<(GenRow, f64)> {
    let q = cfg.manifold.q;
    let tau = m.reach();
    let delta = cfg.delta_constant * tau * (n as f64).powf(-1.0 / (2.0 * target.alpha + d));
    let atlas = PartitionAtlas::build(m, q, delta)?;
    let net = match cfg.features {
        FeatureSource::Network => {
            let range = measured_division_range(&atlas, 2000, cfg.seed.wrapping_add(i as u64), 0.2)?;
            Some(synthesize_eta_vector(&atlas, cfg.eps_div, range, None)?)
        }
        FeatureSource::Analytic => None,
    };
    let feats = Features { atlas: &atlas, net };
    let mut rng = point_rng(cfg.seed, i);
    let train: Vec<Vec<f64>> = sample_tube(m, q, n, &mut rng).into_iter().map(|t| t.x).collect();
    let test: Vec<Vec<f64>> = sample_tube(m, q, cfg.test_samples, &mut rng).into_iter().map(|t| t.x).collect();
    let mut labels = Vec::with_capacity(n);
    for x in &train {
        labels.push(match cfg.labels {
            LabelSource::Target => target.f(m, x)?,
            LabelSource::Oracle => atlas.oracle_f_hat(target, x)?,
        });
    }
    if let Some(s) = cfg.label_noise {
        let noise = Normal::new(0.0, s).map_err(|e| Error::Contract(format!("label noise: {e}")))?;
        let mut nrng = point_rng(cfg.seed ^ 0x6e01_5e00, i);
        for y in &mut labels {
            *y += noise.sample(&mut nrng);
        }
    }
    let a = feats.matrix(&train)?;
    let (coef, ridge) = least_squares(&a, &DVector::from_vec(labels));
    let b = feats.matrix(&test)?;
    let pred = &b * &coef;
    let mut sse = 0.0;
    for (x, p) in test.iter().zip(pred.iter()) {
        sse += (p - target.f(m, x)?).powi(2);
    }
    let row = GenRow {
        n,
        l2_err: sse / test.len() as f64,
        delta,
        centers: atlas.len(),
        ridge,
    };
    let gap = target.holder_constant * atlas.localization_bound().powf(target.alpha);
    Ok((row, gap))
}
