use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Manifold, Shape};
use crate::error::{Error, Result};

/// One net point with its local data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Center {
    /// Ambient coordinates `z_i`.
    pub z: Vec<f64>,
    /// Canonical coordinates of `z_i`.
    pub canonical: Vec<f64>,
    /// Local reach `τ_i`.
    pub reach: f64,
    /// Tangent basis `P_i` (`D × d`, column-major in serialized form).
    #[serde(serialize_with = "ser_matrix")]
    pub basis: DMatrix<f64>,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    rows.serialize(s)
}

/// Maximal `δ`-separated subset of a fine grid on the manifold, built by a
/// greedy sweep.
///
/// Every grid point lies within geodesic distance `δ` of a center and distinct
/// centers are more than `δ` apart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaNet {
    pub delta: f64,
    pub grid_spacing: f64,
    pub centers: Vec<Center>,
}

struct CellIndex {
    cell: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl CellIndex {
    fn key(&self, y: &DVector<f64>) -> Vec<i64> {
        y.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    fn insert(&mut self, y: &DVector<f64>, id: usize) {
        let k = self.key(y);
        self.map.entry(k).or_default().push(id);
    }

    fn neighbours(&self, y: &DVector<f64>, f: &mut dyn FnMut(usize) -> bool) -> bool {
        let base = self.key(y);
        let n = base.len();
        let total = 3usize.pow(n as u32);
        let mut key = base.clone();
        for code in 0..total {
            let mut c = code;
            for k in 0..n {
                key[k] = base[k] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(ids) = self.map.get(&key) {
                for &id in ids {
                    if f(id) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Whether two canonical points are within geodesic distance `delta`.
fn within(m: &Manifold, a: &DVector<f64>, b: &DVector<f64>, delta: f64) -> bool {
    let chord = (a - b).norm();
    if chord > delta {
        return false;
    }
    if let Shape::Torus { .. } = m.shape {
        let tau = m.reach();
        // d_M ≤ 2τ·asin(‖a−b‖/2τ) whenever ‖a−b‖ < 2τ.
        let upper = 2.0 * tau * (chord / (2.0 * tau)).min(1.0).asin();
        if upper <= delta {
            return true;
        }
    }
    m.geodesic_canonical(a, b) <= delta
}

/// Greedy `δ`-net over a grid of spacing `δ/10`.
///
/// Requires `0 < δ < τ_M/2`.
pub fn build_delta_net(m: &Manifold, delta: f64) -> Result<DeltaNet> {
    let tau = m.reach();
    if !(delta > 0.0 && delta < 0.5 * tau) {
        return Err(Error::Contract(format!("δ = {delta} must lie in (0, τ/2) with τ = {tau}")));
    }
    let spacing = delta / 10.0;
    let grid = m.parameter_grid(spacing)?;
    let mut index = CellIndex {
        cell: delta,
        map: HashMap::new(),
    };
    let mut chosen: Vec<DVector<f64>> = Vec::new();
    for g in grid {
        let covered = index.neighbours(&g, &mut |id| within(m, &g, &chosen[id], delta));
        if !covered {
            index.insert(&g, chosen.len());
            chosen.push(g);
        }
    }
    let centers = chosen
        .into_iter()
        .map(|y| Center {
            z: m.to_ambient(&y),
            reach: m.local_reach_canonical(&y),
            basis: m.frame() * m.tangent_canonical(&y),
            canonical: y.as_slice().to_vec(),
        })
        .collect();
    Ok(DeltaNet {
        delta,
        grid_spacing: spacing,
        centers,
    })
}

impl DeltaNet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Upper bound `3^d · Vol(M) · d^{d/2} · δ^{−d}` on the net size.
    pub fn size_bound(m: &Manifold, delta: f64) -> f64 {
        let d = m.intrinsic_dim() as f64;
        3f64.powf(d) * m.volume() * d.powf(0.5 * d) * delta.powf(-d)
    }

    /// Largest geodesic distance from a probe point (canonical) to the net.
    pub fn covering_radius(&self, m: &Manifold, probes: &[DVector<f64>]) -> f64 {
        let cs: Vec<DVector<f64>> = self.centers.iter().map(|c| DVector::from_column_slice(&c.canonical)).collect();
        probes
            .iter()
            .map(|p| {
                let mut best = f64::INFINITY;
                for c in &cs {
                    if (p - c).norm() < best {
                        best = best.min(m.geodesic_canonical(p, c));
                    }
                }
                best
            })
            .fold(0.0, f64::max)
    }

    /// Smallest pairwise geodesic distance between centers.
    pub fn min_separation(&self, m: &Manifold) -> f64 {
        let cs: Vec<DVector<f64>> = self.centers.iter().map(|c| DVector::from_column_slice(&c.canonical)).collect();
        let mut best = f64::INFINITY;
        for i in 0..cs.len() {
            for j in 0..i {
                if (&cs[i] - &cs[j]).norm() < best {
                    best = best.min(m.geodesic_canonical(&cs[i], &cs[j]));
                }
            }
        }
        best
    }

    /// Writes one row per center: `index, z_1..z_D, tau, P_11..P_Dd`
    /// (row-major).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let (dim, d) = self
            .centers
            .first()
            .map_or((0, 0), |c| (c.basis.nrows(), c.basis.ncols()));
        let mut header = vec!["index".to_string()];
        header.extend((1..=dim).map(|k| format!("z_{k}")));
        header.push("tau".into());
        for r in 1..=dim {
            for c in 1..=d {
                header.push(format!("P_{r}_{c}"));
            }
        }
        w.write_record(&header)?;
        for (i, c) in self.centers.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(c.z.iter().map(|v| format!("{v:.17e}")));
            rec.push(format!("{:.17e}", c.reach));
            for r in 0..dim {
                for k in 0..d {
                    rec.push(format!("{:.17e}", c.basis[(r, k)]));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
