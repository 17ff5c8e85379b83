use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::Manifold;

/// A point of the tube `M(q)` with its decomposition `x = base + offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubePoint {
    pub x: Vec<f64>,
    pub base: Vec<f64>,
    pub offset: Vec<f64>,
    /// `‖offset‖ / τ(base)`, strictly below `q`.
    pub offset_ratio: f64,
}

/// Draws `n` points of `M(q)`: a base point uniform on the manifold and a
/// normal offset uniform in the ball of radius `q·τ(base)`.
pub fn sample_tube<R: Rng>(m: &Manifold, q: f64, n: usize, rng: &mut R) -> Vec<TubePoint> {
    let dim = m.ambient_dim();
    let d = m.intrinsic_dim();
    let codim = dim - d;
    (0..n)
        .map(|_| {
            let y = m.sample_canonical(rng);
            let base = m.to_ambient(&y);
            let tau = m.local_reach_canonical(&y);
            let mut offset = vec![0.0; dim];
            let mut ratio = 0.0;
            if q > 0.0 && codim > 0 {
                let p = m.frame() * m.tangent_canonical(&y);
                let dir = loop {
                    let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
                    let nrm = &g - &p * p.tr_mul(&g);
                    let len = nrm.norm();
                    if len > 1e-9 {
                        break nrm / len;
                    }
                };
                let u: f64 = rng.random();
                ratio = q * u.powf(1.0 / codim as f64);
                for k in 0..dim {
                    offset[k] = ratio * tau * dir[k];
                }
            }
            let x = base.iter().zip(&offset).map(|(a, b)| a + b).collect();
            TubePoint {
                x,
                base,
                offset,
                offset_ratio: ratio,
            }
        })
        .collect()
}
