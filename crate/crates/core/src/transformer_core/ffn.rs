use serde::{Deserialize, Serialize};

use super::{relu, Col, D_EMBED};
use crate::error::{Error, Result};

/// Affine layer `z ↦ W z + b`, `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn new(w: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        Self { w, b }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: vec![vec![0.0; in_dim]; out_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.len()
    }

    pub fn in_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, &b)| {
                let mut acc = 0.0;
                for (w, x) in row.iter().zip(z) {
                    acc += w * x;
                }
                acc + b
            })
            .collect()
    }
}

/// Tokenwise feed-forward network with ReLU between layers.
///
/// An empty layer list is the zero map, so the enclosing residual block
/// passes its input through unchanged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeedForward {
    pub layers: Vec<Layer>,
}

impl FeedForward {
    pub fn zero() -> Self {
        Self { layers: Vec::new() }
    }

    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let f = Self { layers };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let mut dim = D_EMBED;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim() != dim || layer.b.len() != layer.out_dim() {
                return Err(Error::Dimension(format!("feed-forward layer {} has inconsistent shape", i + 1)));
            }
            if layer.w.iter().any(|r| r.len() != dim) {
                return Err(Error::Dimension(format!("feed-forward layer {} is ragged", i + 1)));
            }
            dim = layer.out_dim();
        }
        if !self.layers.is_empty() && dim != D_EMBED {
            return Err(Error::Dimension("feed-forward output must have 5 rows".into()));
        }
        Ok(())
    }

    /// Number of affine layers `L_FFN`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Largest layer dimension `w_FFN`, counting the 5-dimensional ends.
    pub fn width(&self) -> usize {
        if self.layers.is_empty() {
            return 0;
        }
        self.layers.iter().map(Layer::out_dim).max().unwrap_or(0).max(D_EMBED)
    }

    pub fn is_zero(&self) -> bool {
        self.layers.is_empty()
    }

    /// Evaluates the network on one token.
    pub fn apply(&self, y: &Col) -> Col {
        let mut out = [0.0; D_EMBED];
        if self.layers.is_empty() {
            return out;
        }
        let mut z = self.layers[0].apply(y);
        for layer in &self.layers[1..] {
            let a: Vec<f64> = z.iter().map(|&v| relu(v)).collect();
            z = layer.apply(&a);
        }
        out.copy_from_slice(&z);
        out
    }

    /// True when the first layer ignores the two data rows.
    pub fn reads_positional_rows_only(&self) -> bool {
        match self.layers.first() {
            None => true,
            Some(l) => l.w.iter().all(|r| r[0] == 0.0 && r[1] == 0.0),
        }
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().flatten().chain(l.b.iter()))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Sum of two networks of equal depth, realised by stacking hidden units.
    pub fn parallel_sum(&self, other: &Self) -> Result<Self> {
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        if self.depth() != other.depth() {
            return Err(Error::Dimension("cannot stack feed-forward networks of different depth".into()));
        }
        let n = self.depth();
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (&self.layers[i], &other.layers[i]);
            let layer = if n == 1 {
                let w = a.w.iter().zip(&b.w).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect()).collect();
                let bias = a.b.iter().zip(&b.b).map(|(x, y)| x + y).collect();
                Layer::new(w, bias)
            } else if i == 0 {
                let mut w = a.w.clone();
                w.extend(b.w.iter().cloned());
                let mut bias = a.b.clone();
                bias.extend(b.b.iter().copied());
                Layer::new(w, bias)
            } else if i + 1 == n {
                let w = a
                    .w
                    .iter()
                    .zip(&b.w)
                    .map(|(ra, rb)| ra.iter().chain(rb.iter()).copied().collect())
                    .collect();
                let bias = a.b.iter().zip(&b.b).map(|(x, y)| x + y).collect();
                Layer::new(w, bias)
            } else {
                let (ai, bi) = (a.in_dim(), b.in_dim());
                let mut w = Vec::with_capacity(a.out_dim() + b.out_dim());
                for r in &a.w {
                    let mut row = r.clone();
                    row.extend(std::iter::repeat(0.0).take(bi));
                    w.push(row);
                }
                for r in &b.w {
                    let mut row = vec![0.0; ai];
                    row.extend(r.iter().copied());
                    w.push(row);
                }
                let mut bias = a.b.clone();
                bias.extend(b.b.iter().copied());
                Layer::new(w, bias)
            };
            layers.push(layer);
        }
        Self::new(layers)
    }
}
