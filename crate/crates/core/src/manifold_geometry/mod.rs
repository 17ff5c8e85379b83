//! Canonical manifolds placed isometrically in `[0,1]^D`.
//!
//! Each manifold lives in canonical coordinates `y ∈ R^n` (`n = 2` for the
//! circle, `d + 1` for the sphere, `3` for the torus, `d` for the affine
//! patch) and is placed by `x = c + U·y` with `U` a `D × n` orthonormal frame.
//! All queries have closed forms except torus geodesics, which are shot
//! numerically.

mod net;
mod sample;
mod torus;

pub use net::{build_delta_net, Center, DeltaNet};
pub use sample::{sample_tube, TubePoint};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "this point lies on the manifold".
pub const ON_MANIFOLD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Circle,
    Sphere,
    Torus,
    #[serde(alias = "affine_subspace")]
    Affine,
}

/// Orthonormal frame used for placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// First `n` coordinate axes.
    Identity,
    /// Seeded Gaussian matrix orthonormalized by QR.
    #[default]
    Random,
    /// Discrete Fourier columns; every row has norm `√(n/D)`, which allows
    /// the largest manifold inside the cube.
    Balanced,
}

/// Optional overrides of the automatic placement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementOverrides {
    #[serde(default)]
    pub frame: Option<FrameKind>,
    /// Radius (circle, sphere), major radius (torus) or side (affine).
    #[serde(default)]
    pub scale: Option<f64>,
    /// Minor over major radius for the torus.
    #[serde(default)]
    pub torus_ratio: Option<f64>,
    /// Common value of every center coordinate.
    #[serde(default)]
    pub center: Option<f64>,
}

/// Manifold configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub kind: ManifoldKind,
    pub d: usize,
    #[serde(rename = "D")]
    pub ambient_dim: usize,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub placement: PlacementOverrides,
}

/// Canonical shape and its size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Circle { radius: f64 },
    Sphere { dim: usize, radius: f64 },
    Torus { major: f64, minor: f64 },
    Affine { dim: usize, side: f64 },
}

impl Shape {
    pub fn kind(&self) -> ManifoldKind {
        match self {
            Shape::Circle { .. } => ManifoldKind::Circle,
            Shape::Sphere { .. } => ManifoldKind::Sphere,
            Shape::Torus { .. } => ManifoldKind::Torus,
            Shape::Affine { .. } => ManifoldKind::Affine,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match *self {
            Shape::Circle { .. } => 1,
            Shape::Sphere { dim, .. } | Shape::Affine { dim, .. } => dim,
            Shape::Torus { .. } => 2,
        }
    }

    /// Dimension `n` of the canonical coordinates.
    pub fn canonical_dim(&self) -> usize {
        match *self {
            Shape::Circle { .. } => 2,
            Shape::Sphere { dim, .. } => dim + 1,
            Shape::Torus { .. } => 3,
            Shape::Affine { dim, .. } => dim,
        }
    }

    /// Largest `‖y‖` over the manifold.
    fn extent(&self) -> f64 {
        match *self {
            Shape::Circle { radius } | Shape::Sphere { radius, .. } => radius,
            Shape::Torus { major, minor } => major + minor,
            Shape::Affine { dim, side } => 0.5 * side * (dim as f64).sqrt(),
        }
    }

    /// Largest local reach.
    fn max_local_reach(&self) -> f64 {
        match *self {
            Shape::Torus { minor, .. } => minor,
            _ => self.reach(),
        }
    }

    /// Global reach `τ_M`.
    ///
    /// The affine patch is flat; its reach is capped at the side length so
    /// that tubes stay bounded.
    pub fn reach(&self) -> f64 {
        match *self {
            Shape::Circle { radius } | Shape::Sphere { radius, .. } => radius,
            Shape::Torus { major, minor } => minor.min(major - minor),
            Shape::Affine { side, .. } => side,
        }
    }

    /// Riemannian volume.
    pub fn volume(&self) -> f64 {
        match *self {
            Shape::Circle { radius } => 2.0 * PI * radius,
            Shape::Sphere { dim, radius } => unit_sphere_area(dim) * radius.powi(dim as i32),
            Shape::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            Shape::Affine { dim, side } => side.powi(dim as i32),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match *self {
            Shape::Circle { radius } => Shape::Circle { radius: radius * s },
            Shape::Sphere { dim, radius } => Shape::Sphere { dim, radius: radius * s },
            Shape::Torus { major, minor } => Shape::Torus {
                major: major * s,
                minor: minor * s,
            },
            Shape::Affine { dim, side } => Shape::Affine { dim, side: side * s },
        }
    }
}

/// Area of the unit sphere `S^d ⊂ R^{d+1}`.
pub fn unit_sphere_area(d: usize) -> f64 {
    // A_0 = 2, A_1 = 2π, A_d = 2π·A_{d−2}/(d − 1).
    let (mut a, mut k) = if d % 2 == 0 { (2.0, 0) } else { (2.0 * PI, 1) };
    while k < d {
        k += 2;
        a *= 2.0 * PI / (k - 1) as f64;
    }
    a
}

/// A canonical manifold placed in `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    shape: Shape,
    center: DVector<f64>,
    frame: DMatrix<f64>,
}

fn balanced_frame(d: usize, n: usize) -> Result<DMatrix<f64>> {
    let pairs = n / 2;
    if d <= 2 * pairs {
        return Err(Error::Dimension(format!(
            "balanced frame for {n} canonical coordinates needs D > {}",
            2 * pairs
        )));
    }
    let mut u = DMatrix::zeros(d, n);
    let amp = (2.0 / d as f64).sqrt();
    for j in 0..n {
        for k in 0..d {
            u[(k, j)] = if n % 2 == 1 && j == n - 1 {
                1.0 / (d as f64).sqrt()
            } else {
                let f = (j / 2 + 1) as f64;
                let arg = 2.0 * PI * f * k as f64 / d as f64;
                if j % 2 == 0 {
                    amp * arg.cos()
                } else {
                    amp * arg.sin()
                }
            };
        }
    }
    Ok(u)
}

fn random_frame(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
    g.qr().q()
}

impl Manifold {
    /// Places `shape` with an explicit center and frame.
    pub fn new(shape: Shape, center: Vec<f64>, frame: DMatrix<f64>) -> Result<Self> {
        let n = shape.canonical_dim();
        let d = center.len();
        if frame.nrows() != d || frame.ncols() != n {
            return Err(Error::Dimension(format!("frame must be {d}×{n}")));
        }
        let gram = frame.transpose() * &frame;
        if (gram - DMatrix::identity(n, n)).amax() > 1e-12 {
            return Err(Error::Contract("placement frame must have orthonormal columns".into()));
        }
        validate_shape(&shape)?;
        Ok(Self {
            shape,
            center: DVector::from_vec(center),
            frame,
        })
    }

    /// Builds the manifold described by a configuration file.
    ///
    /// Without a `scale` override the manifold is made as large as possible
    /// (up to a 2% margin) subject to `M(q) ⊆ [0,1]^D`.
    pub fn from_config(cfg: &ManifoldConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.q) {
            return Err(Error::Contract(format!("q = {} must lie in [0, 1)", cfg.q)));
        }
        let unit = match cfg.kind {
            ManifoldKind::Circle => {
                if cfg.d != 1 {
                    return Err(Error::Dimension("a circle has d = 1".into()));
                }
                Shape::Circle { radius: 1.0 }
            }
            ManifoldKind::Sphere => Shape::Sphere {
                dim: cfg.d,
                radius: 1.0,
            },
            ManifoldKind::Torus => {
                if cfg.d != 2 {
                    return Err(Error::Dimension("a torus has d = 2".into()));
                }
                let ratio = cfg.placement.torus_ratio.unwrap_or(0.4);
                Shape::Torus { major: 1.0, minor: ratio }
            }
            ManifoldKind::Affine => Shape::Affine { dim: cfg.d, side: 1.0 },
        };
        validate_shape(&unit)?;
        let n = unit.canonical_dim();
        let dim = cfg.ambient_dim;
        if dim < n {
            return Err(Error::Dimension(format!("ambient dimension {dim} is below {n}")));
        }
        let frame = match cfg.placement.frame.unwrap_or_default() {
            FrameKind::Identity => DMatrix::identity(dim, n),
            FrameKind::Random => random_frame(dim, n, cfg.seed),
            FrameKind::Balanced => balanced_frame(dim, n)?,
        };
        let c = cfg.placement.center.unwrap_or(0.5);
        let row_max = (0..dim).map(|k| frame.row(k).norm()).fold(0.0, f64::max);
        let reach_room = c.min(1.0 - c);
        let fit = reach_room / (row_max * unit.extent() + cfg.q * unit.max_local_reach());
        let s = match cfg.placement.scale {
            Some(s) => {
                if s > fit {
                    return Err(Error::Infeasible(format!(
                        "scale {s} does not keep M(q) inside the unit cube (max {fit:.6})"
                    )));
                }
                s
            }
            None => 0.98 * fit,
        };
        Self::new(unit.scaled(s), vec![c; dim], frame)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn kind(&self) -> ManifoldKind {
        self.shape.kind()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.shape.intrinsic_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.center.len()
    }

    pub fn reach(&self) -> f64 {
        self.shape.reach()
    }

    pub fn volume(&self) -> f64 {
        self.shape.volume()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// `c + U·y`.
    pub fn to_ambient(&self, y: &DVector<f64>) -> Vec<f64> {
        (&self.center + &self.frame * y).as_slice().to_vec()
    }

    /// `Uᵀ(x − c)`.
    pub fn to_canonical(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.ambient_dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.ambient_dim()
            )));
        }
        let diff = DVector::from_column_slice(x) - &self.center;
        Ok(self.frame.tr_mul(&diff))
    }

    /// Nearest point on the manifold, in canonical coordinates.
    pub fn project_canonical(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self.shape {
            Shape::Circle { radius } | Shape::Sphere { radius, .. } => {
                let r = y.norm();
                if r == 0.0 {
                    return Err(Error::NonUniqueProjection);
                }
                Ok(y * (radius / r))
            }
            Shape::Torus { major, minor } => {
                let rxy = y[0].hypot(y[1]);
                if rxy == 0.0 {
                    return Err(Error::NonUniqueProjection);
                }
                let core = DVector::from_vec(vec![major * y[0] / rxy, major * y[1] / rxy, 0.0]);
                let w = y - &core;
                let wn = w.norm();
                if wn == 0.0 {
                    return Err(Error::NonUniqueProjection);
                }
                Ok(core + w * (minor / wn))
            }
            Shape::Affine { side, .. } => Ok(y.map(|v| v.clamp(-0.5 * side, 0.5 * side))),
        }
    }

    /// `π_M(x)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.to_canonical(x)?;
        Ok(self.to_ambient(&self.project_canonical(&y)?))
    }

    /// Canonical coordinates of `v`, checking that `v` lies on the manifold.
    pub fn canonical_on_manifold(&self, v: &[f64]) -> Result<DVector<f64>> {
        let y = self.to_canonical(v)?;
        let p = self.project_canonical(&y).map_err(|_| Error::Domain("point is not on the manifold".into()))?;
        let back = self.to_ambient(&p);
        let off: f64 = back.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if off > ON_MANIFOLD_TOL * self.shape.extent().max(1.0) {
            return Err(Error::Domain(format!("point is {off:.3e} away from the manifold")));
        }
        Ok(p)
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        self.canonical_on_manifold(v).is_ok()
    }

    /// Local reach `τ_M(v)`; constant except on the torus, where it is
    /// `min(b, a + b·cos φ)`.
    pub fn local_reach_canonical(&self, y: &DVector<f64>) -> f64 {
        match self.shape {
            Shape::Torus { minor, .. } => minor.min(y[0].hypot(y[1])),
            _ => self.shape.reach(),
        }
    }

    pub fn local_reach(&self, v: &[f64]) -> Result<f64> {
        Ok(self.local_reach_canonical(&self.canonical_on_manifold(v)?))
    }

    /// Orthonormal tangent basis at a canonical point (`n × d`).
    pub fn tangent_canonical(&self, y: &DVector<f64>) -> DMatrix<f64> {
        match self.shape {
            Shape::Circle { radius } => DMatrix::from_column_slice(2, 1, &[-y[1] / radius, y[0] / radius]),
            Shape::Sphere { dim, radius } => {
                let nrm = y / radius;
                // Complete the normal with coordinate axes, least aligned first.
                let mut order: Vec<usize> = (0..=dim).collect();
                order.sort_by(|&a, &b| nrm[a].abs().total_cmp(&nrm[b].abs()));
                let mut basis: Vec<DVector<f64>> = vec![nrm];
                for &k in &order {
                    if basis.len() == dim + 1 {
                        break;
                    }
                    let mut e = DVector::zeros(dim + 1);
                    e[k] = 1.0;
                    for b in &basis {
                        let c = b.dot(&e);
                        e -= b * c;
                    }
                    for b in &basis {
                        let c = b.dot(&e);
                        e -= b * c;
                    }
                    let n = e.norm();
                    if n > 1e-6 {
                        basis.push(e / n);
                    }
                }
                DMatrix::from_columns(&basis[1..])
            }
            Shape::Torus { .. } => {
                let th = y[1].atan2(y[0]);
                let (rxy, z) = (y[0].hypot(y[1]), y[2]);
                let Shape::Torus { major, .. } = self.shape else { unreachable!() };
                let ph = z.atan2(rxy - major);
                let (st, ct) = th.sin_cos();
                let (sp, cp) = ph.sin_cos();
                DMatrix::from_column_slice(3, 2, &[-st, ct, 0.0, -sp * ct, -sp * st, cp])
            }
            Shape::Affine { dim, .. } => DMatrix::identity(dim, dim),
        }
    }

    /// `P(v)`: `D × d` matrix with orthonormal columns spanning `T_v M`.
    pub fn tangent_basis(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.canonical_on_manifold(v)?;
        Ok(&self.frame * self.tangent_canonical(&y))
    }

    /// Geodesic distance between canonical points on the manifold.
    pub fn geodesic_canonical(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self.shape {
            Shape::Circle { radius } | Shape::Sphere { radius, .. } => {
                let (ua, ub) = (a / radius, b / radius);
                // Stable for small and antipodal separations.
                radius * 2.0 * (&ua - &ub).norm().atan2((&ua + &ub).norm())
            }
            Shape::Torus { major, minor } => torus::geodesic(major, minor, a, b),
            Shape::Affine { .. } => (a - b).norm(),
        }
    }

    /// `d_M(v1, v2)`.
    pub fn geodesic_distance(&self, v1: &[f64], v2: &[f64]) -> Result<f64> {
        let a = self.canonical_on_manifold(v1)?;
        let b = self.canonical_on_manifold(v2)?;
        Ok(self.geodesic_canonical(&a, &b))
    }

    /// First canonical coordinate of the projection of `x`.
    pub fn first_intrinsic_coordinate(&self, x: &[f64]) -> Result<f64> {
        let y = self.project_canonical(&self.to_canonical(x)?)?;
        Ok(y[0])
    }

    /// Uniform sample on the manifold (Riemannian volume measure), canonical.
    pub fn sample_canonical<R: rand::Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self.shape {
            Shape::Circle { radius } => {
                let th = rng.random::<f64>() * 2.0 * PI;
                DVector::from_vec(vec![radius * th.cos(), radius * th.sin()])
            }
            Shape::Sphere { dim, radius } => loop {
                let g = DVector::from_fn(dim + 1, |_, _| StandardNormal.sample(rng));
                let n: f64 = g.norm();
                if n > 1e-12 {
                    break g * (radius / n);
                }
            },
            Shape::Torus { major, minor } => {
                let th = rng.random::<f64>() * 2.0 * PI;
                // Density of φ is proportional to a + b cos φ.
                let ph = loop {
                    let ph = rng.random::<f64>() * 2.0 * PI;
                    if rng.random::<f64>() * (major + minor) <= major + minor * ph.cos() {
                        break ph;
                    }
                };
                torus::point(major, minor, th, ph)
            }
            Shape::Affine { dim, side } => DVector::from_fn(dim, |_, _| (rng.random::<f64>() - 0.5) * side),
        }
    }

    /// Points covering the manifold with geodesic spacing at most `spacing`,
    /// in a deterministic sweep order.
    pub fn parameter_grid(&self, spacing: f64) -> Result<Vec<DVector<f64>>> {
        if !(spacing > 0.0) {
            return Err(Error::Contract("grid spacing must be positive".into()));
        }
        let cap = 20_000_000usize;
        let mut pts = Vec::new();
        match self.shape {
            Shape::Circle { radius } => {
                let n = (2.0 * PI * radius / spacing).ceil().max(3.0) as usize;
                for k in 0..n {
                    let th = 2.0 * PI * k as f64 / n as f64;
                    pts.push(DVector::from_vec(vec![radius * th.cos(), radius * th.sin()]));
                }
            }
            Shape::Sphere { dim: 2, radius } => {
                let rings = (PI * radius / spacing).ceil().max(2.0) as usize;
                for j in 0..=rings {
                    let ph = PI * j as f64 / rings as f64;
                    let m = ((2.0 * PI * radius * ph.sin() / spacing).ceil() as usize).max(1);
                    for k in 0..m {
                        let th = 2.0 * PI * k as f64 / m as f64;
                        pts.push(DVector::from_vec(vec![
                            radius * ph.sin() * th.cos(),
                            radius * ph.sin() * th.sin(),
                            radius * ph.cos(),
                        ]));
                    }
                }
            }
            Shape::Sphere { dim, .. } => {
                return Err(Error::Infeasible(format!("parameter grids on S^{dim} are limited to dim ≤ 2")));
            }
            Shape::Torus { major, minor } => {
                let nt = (2.0 * PI * (major + minor) / spacing).ceil().max(3.0) as usize;
                let np = (2.0 * PI * minor / spacing).ceil().max(3.0) as usize;
                if nt * np > cap {
                    return Err(Error::Infeasible("torus grid too fine".into()));
                }
                for i in 0..nt {
                    for j in 0..np {
                        let th = 2.0 * PI * i as f64 / nt as f64;
                        let ph = 2.0 * PI * j as f64 / np as f64;
                        pts.push(torus::point(major, minor, th, ph));
                    }
                }
            }
            Shape::Affine { dim, side } => {
                let per = (side / spacing).ceil() as usize + 1;
                let total = per.checked_pow(dim as u32).filter(|&t| t <= cap);
                let Some(total) = total else {
                    return Err(Error::Infeasible("affine grid too fine".into()));
                };
                for idx in 0..total {
                    let mut rem = idx;
                    let mut y = DVector::zeros(dim);
                    for k in (0..dim).rev() {
                        let i = rem % per;
                        rem /= per;
                        y[k] = -0.5 * side + side * i as f64 / (per - 1) as f64;
                    }
                    pts.push(y);
                }
            }
        }
        Ok(pts)
    }
}

impl Serialize for Manifold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            shape: &'a Shape,
            reach: f64,
            volume: f64,
            center: &'a [f64],
            frame: Vec<Vec<f64>>,
        }
        Repr {
            shape: &self.shape,
            reach: self.reach(),
            volume: self.volume(),
            center: self.center.as_slice(),
            frame: (0..self.frame.nrows())
                .map(|r| self.frame.row(r).iter().copied().collect())
                .collect(),
        }
        .serialize(s)
    }
}

fn validate_shape(s: &Shape) -> Result<()> {
    let ok = match *s {
        Shape::Circle { radius } => radius > 0.0,
        Shape::Sphere { dim, radius } => dim >= 1 && radius > 0.0,
        Shape::Torus { major, minor } => minor > 0.0 && major > minor,
        Shape::Affine { dim, side } => dim >= 1 && side > 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!("invalid shape parameters {s:?}")))
    }
}
