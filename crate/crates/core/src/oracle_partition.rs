//! Oracle partition of unity on a tube around a manifold.
//!
//! For a `δ`-net `{z_i}` with local reaches `τ_i` and tangent bases `P_i`,
//!
//! `η̃_i(x) = σ(1 − (‖x − z_i‖/(pτ_i))² − (‖P_iᵀ(x − z_i)‖/(hδ))²)`,
//!
//! with `p = (1 + q)/2` and `h = 6/(1 − q/p)`. Normalizing gives `η_i`, and
//! `f̂ = Σ g(z_i) η_i` is the reference the synthesized transformers are
//! compared against.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold_geometry::{build_delta_net, DeltaNet, Manifold, Shape};

/// Net plus the bump parameters.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionAtlas {
    manifold: Manifold,
    net: DeltaNet,
    q: f64,
    p: f64,
    h: f64,
    delta: f64,
}

impl PartitionAtlas {
    pub fn new(manifold: &Manifold, net: DeltaNet, q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Contract(format!("q = {q} must lie in [0, 1)")));
        }
        if net.is_empty() {
            return Err(Error::Contract("the net is empty".into()));
        }
        let p = 0.5 * (1.0 + q);
        let h = 6.0 / (1.0 - q / p);
        Ok(Self {
            manifold: manifold.clone(),
            delta: net.delta,
            net,
            q,
            p,
            h,
        })
    }

    /// Builds the `δ`-net and the atlas in one step.
    pub fn build(manifold: &Manifold, q: f64, delta: f64) -> Result<Self> {
        Self::new(manifold, build_delta_net(manifold, delta)?, q)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn net(&self) -> &DeltaNet {
        &self.net
    }

    pub fn len(&self) -> usize {
        self.net.len()
    }

    pub fn is_empty(&self) -> bool {
        self.net.is_empty()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.manifold.ambient_dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.manifold.ambient_dim()
            )));
        }
        Ok(())
    }

    /// Argument of `σ` in `η̃_i(x)` (0-based `i`).
    pub fn eta_tilde_argument(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let c = self
            .net
            .centers
            .get(i)
            .ok_or_else(|| Error::Index(format!("center {i} of {}", self.len())))?;
        let y: Vec<f64> = x.iter().zip(&c.z).map(|(a, b)| a - b).collect();
        let full: f64 = y.iter().map(|v| v * v).sum();
        let mut tang = 0.0;
        for k in 0..c.basis.ncols() {
            let mut s = 0.0;
            for (j, v) in y.iter().enumerate() {
                s += c.basis[(j, k)] * v;
            }
            tang += s * s;
        }
        let pt = self.p * c.reach;
        let hd = self.h * self.delta;
        Ok(1.0 - full / (pt * pt) - tang / (hd * hd))
    }

    /// `η̃_i(x)`.
    pub fn eta_tilde(&self, i: usize, x: &[f64]) -> Result<f64> {
        Ok(self.eta_tilde_argument(i, x)?.max(0.0))
    }

    /// All `η̃_i(x)`.
    pub fn eta_tilde_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| self.eta_tilde(i, x)).collect()
    }

    /// `η(x) = η̃(x)/‖η̃(x)‖₁`.
    pub fn eta(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut e = self.eta_tilde_all(x)?;
        let s: f64 = e.iter().sum();
        if !(s > 0.0) {
            return Err(Error::OutsideSupport);
        }
        for v in &mut e {
            *v /= s;
        }
        Ok(e)
    }

    /// `f̂(x) = Σ g(z_i) η_i(x)`.
    pub fn oracle_f_hat(&self, target: &TargetFunction, x: &[f64]) -> Result<f64> {
        let e = self.eta(x)?;
        let mut acc = 0.0;
        for (c, w) in self.net.centers.iter().zip(&e) {
            if *w != 0.0 {
                acc += target.g_canonical(&DVector::from_column_slice(&c.canonical)) * w;
            }
        }
        Ok(acc)
    }

    /// `max {d_M(π(x), z_i) : η_i(x) > 0}`.
    pub fn localization_radius(&self, x: &[f64]) -> Result<f64> {
        let e = self.eta(x)?;
        let base = self
            .manifold
            .project_canonical(&self.manifold.to_canonical(x)?)?;
        let mut r: f64 = 0.0;
        for (c, w) in self.net.centers.iter().zip(&e) {
            if *w > 0.0 {
                let z = DVector::from_column_slice(&c.canonical);
                r = r.max(self.manifold.geodesic_canonical(&base, &z));
            }
        }
        Ok(r)
    }

    /// Proven localization bound `72δ/(1 − q)²`.
    pub fn localization_bound(&self) -> f64 {
        72.0 * self.delta / (1.0 - self.q).powi(2)
    }

    /// Empirical `(min, max)` of `‖η̃(x)‖₁` over `samples`.
    pub fn eta_tilde_l1_bounds<'a, I>(&self, samples: I) -> Result<(f64, f64)>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in samples {
            let s: f64 = self.eta_tilde_all(x)?.iter().sum();
            lo = lo.min(s);
            hi = hi.max(s);
        }
        Ok((lo, hi))
    }

    /// Theoretical envelope `(1 − q, d^{d/2}(1 − q)^{−2d})`, up to constants.
    pub fn l1_envelope(&self) -> (f64, f64) {
        let d = self.manifold.intrinsic_dim() as f64;
        (1.0 - self.q, d.powf(0.5 * d) * (1.0 - self.q).powf(-2.0 * d))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    /// One row per sample: `x_1..x_D, f, f_hat, eta_l1`.
    pub fn write_samples_csv(&self, target: &TargetFunction, samples: &[Vec<f64>], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let dim = self.manifold.ambient_dim();
        let mut header: Vec<String> = (1..=dim).map(|k| format!("x_{k}")).collect();
        header.extend(["f", "f_hat", "eta_l1"].map(String::from));
        w.write_record(&header)?;
        for x in samples {
            let l1: f64 = self.eta_tilde_all(x)?.iter().sum();
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            rec.push(format!("{:.17e}", target.f(&self.manifold, x)?));
            rec.push(format!("{:.17e}", self.oracle_f_hat(target, x)?));
            rec.push(format!("{l1:.17e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shape of the target function on the manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `A·|w/s|^α` with `w` the first canonical coordinate and `s` its range.
    #[default]
    AbsPower,
    /// `A·sin(π w/(2s))`; Lipschitz, so only `α = 1`.
    Sine,
    /// `A` everywhere.
    Constant,
    /// `A·Σ_{k<24} b^{−kα} cos(π b^k w/s + 2.4k)` with `b = √2`; rough at
    /// every scale appearing in the sweeps, so it behaves like a worst case
    /// of the Hölder class.
    Lacunary,
}

const LACUNARY_LEVELS: i32 = 24;

fn lacunary_terms(alpha: f64) -> impl Iterator<Item = (f64, f64, f64)> {
    let b = std::f64::consts::SQRT_2;
    (0..LACUNARY_LEVELS).map(move |k| (b.powf(-(k as f64) * alpha), b.powi(k), 2.4 * k as f64))
}

/// `g: M → R` together with its Hölder data; `f = g ∘ π_M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetFunction {
    pub kind: TargetKind,
    pub alpha: f64,
    pub amplitude: f64,
    /// Normalizer `s` of the first canonical coordinate.
    pub scale: f64,
    /// Hölder constant `L` (with respect to `d_M^α`).
    pub holder_constant: f64,
    /// Sup bound `R`.
    pub sup_bound: f64,
}

fn first_axis_extent(shape: &Shape) -> f64 {
    match *shape {
        Shape::Circle { radius } | Shape::Sphere { radius, .. } => radius,
        Shape::Torus { major, minor } => major + minor,
        Shape::Affine { side, .. } => 0.5 * side,
    }
}

impl TargetFunction {
    /// Target with `L` estimated by dense pairwise search and inflated 5%.
    pub fn new(m: &Manifold, kind: TargetKind, alpha: f64, amplitude: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Contract(format!("α = {alpha} must lie in (0, 1]")));
        }
        if kind == TargetKind::Sine && alpha != 1.0 {
            return Err(Error::Contract("the sine target is Lipschitz; use α = 1".into()));
        }
        let mut t = Self {
            kind,
            alpha,
            amplitude,
            scale: first_axis_extent(m.shape()),
            holder_constant: 0.0,
            sup_bound: amplitude.abs(),
        };
        if kind == TargetKind::Lacunary {
            // Each term is bounded by 2^{1−α}(π/s)^α d^α since |Δw| ≤ d/s.
            t.sup_bound = amplitude.abs() * lacunary_terms(alpha).map(|(c, _, _)| c).sum::<f64>();
            t.holder_constant = amplitude.abs()
                * LACUNARY_LEVELS as f64
                * 2f64.powf(1.0 - alpha)
                * (std::f64::consts::PI / t.scale).powf(alpha);
        } else {
            t.holder_constant = 1.05 * t.estimate_holder_constant(m, seed);
        }
        Ok(t)
    }

    /// `g` at a canonical point.
    pub fn g_canonical(&self, y: &DVector<f64>) -> f64 {
        let w = y[0] / self.scale;
        match self.kind {
            TargetKind::AbsPower => self.amplitude * w.abs().powf(self.alpha),
            TargetKind::Sine => self.amplitude * (std::f64::consts::FRAC_PI_2 * w).sin(),
            TargetKind::Constant => self.amplitude,
            TargetKind::Lacunary => {
                let arg = std::f64::consts::PI * w;
                self.amplitude * lacunary_terms(self.alpha).map(|(c, f, ph)| c * (f * arg + ph).cos()).sum::<f64>()
            }
        }
    }

    /// `g(v)` for `v` on the manifold.
    pub fn g(&self, m: &Manifold, v: &[f64]) -> Result<f64> {
        Ok(self.g_canonical(&m.canonical_on_manifold(v)?))
    }

    /// `f(x) = g(π_M(x))`.
    pub fn f(&self, m: &Manifold, x: &[f64]) -> Result<f64> {
        Ok(self.g_canonical(&m.project_canonical(&m.to_canonical(x)?)?))
    }

    /// Largest `|g(v) − g(v')|/d^α` over random and nearby pairs.
    ///
    /// Far pairs on the torus use the chord in place of the geodesic, which
    /// can only enlarge the estimate.
    fn estimate_holder_constant(&self, m: &Manifold, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_401d);
        let pts: Vec<DVector<f64>> = (0..300).map(|_| m.sample_canonical(&mut rng)).collect();
        let torus = matches!(m.shape(), Shape::Torus { .. });
        let mut best: f64 = 0.0;
        let mut consider = |a: &DVector<f64>, b: &DVector<f64>, dist: f64| {
            if dist > 1e-12 {
                let dg = (self.g_canonical(a) - self.g_canonical(b)).abs();
                best = best.max(dg / dist.powf(self.alpha));
            }
        };
        for i in 0..pts.len() {
            for j in 0..i {
                let d = if torus {
                    (&pts[i] - &pts[j]).norm()
                } else {
                    m.geodesic_canonical(&pts[i], &pts[j])
                };
                consider(&pts[i], &pts[j], d);
            }
        }
        let reach = m.reach();
        for k in 0..3000 {
            let a = m.sample_canonical(&mut rng);
            let t = m.tangent_canonical(&a);
            let step = reach * 10f64.powf(-1.0 - 3.0 * (k % 4) as f64 / 3.0);
            let dir = DVector::from_fn(t.ncols(), |_, _| rng.random::<f64>() - 0.5);
            let moved = &a + &t * dir * step;
            let Ok(b) = m.project_canonical(&moved) else { continue };
            let d = m.geodesic_canonical(&a, &b);
            consider(&a, &b, d);
        }
        best
    }
}
