use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::exec::{self, ExecPlan, Workspace};
use super::{embed_input, EmbeddingMatrix, TransformerBlock, D_EMBED};
use crate::error::{Error, Result};

/// `T(x) = DE ∘ B_L ∘ ⋯ ∘ B_1 (PE + E(x))`.
///
/// The decoder reads row 1 of column ℓ and clamps it to `[−R, R]`.
pub struct TransformerNetwork {
    input_dim: usize,
    ell: usize,
    blocks: Vec<TransformerBlock>,
    output_bound: f64,
    plan: OnceLock<ExecPlan>,
}

impl Clone for TransformerNetwork {
    fn clone(&self) -> Self {
        Self::new(self.input_dim, self.ell, self.blocks.clone(), self.output_bound)
            .expect("cloning a valid network")
    }
}

impl std::fmt::Debug for TransformerNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformerNetwork")
            .field("input_dim", &self.input_dim)
            .field("ell", &self.ell)
            .field("blocks", &self.blocks.len())
            .field("output_bound", &self.output_bound)
            .finish()
    }
}

impl PartialEq for TransformerNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim
            && self.ell == other.ell
            && self.output_bound == other.output_bound
            && self.blocks == other.blocks
    }
}

impl TransformerNetwork {
    pub fn new(input_dim: usize, ell: usize, blocks: Vec<TransformerBlock>, output_bound: f64) -> Result<Self> {
        if ell < input_dim || ell == 0 {
            return Err(Error::TokenBudget {
                needed: input_dim.max(1),
                available: ell,
            });
        }
        if !(output_bound > 0.0) {
            return Err(Error::Contract("output bound R must be positive".into()));
        }
        for b in &blocks {
            b.ffn.validate()?;
        }
        Ok(Self {
            input_dim,
            ell,
            blocks,
            output_bound,
            plan: OnceLock::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn blocks(&self) -> &[TransformerBlock] {
        &self.blocks
    }

    pub fn output_bound(&self) -> f64 {
        self.output_bound
    }

    /// Number of blocks `L_T`.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Largest head count over blocks `m_T`.
    pub fn max_heads(&self) -> usize {
        self.blocks.iter().map(|b| b.heads.len()).max().unwrap_or(0)
    }

    /// Total number of heads over all blocks.
    pub fn total_heads(&self) -> usize {
        self.blocks.iter().map(|b| b.heads.len()).sum()
    }

    pub fn ffn_depth(&self) -> usize {
        self.blocks.iter().map(|b| b.ffn.depth()).max().unwrap_or(0)
    }

    pub fn ffn_width(&self) -> usize {
        self.blocks.iter().map(|b| b.ffn.width()).max().unwrap_or(0)
    }

    /// Observed weight magnitude `κ_obs`.
    pub fn weight_bound_observed(&self) -> f64 {
        self.blocks.iter().map(TransformerBlock::max_abs_weight).fold(0.0, f64::max)
    }

    fn plan(&self) -> &ExecPlan {
        self.plan.get_or_init(|| ExecPlan::build(&self.blocks, self.ell))
    }

    /// Share of heads eligible for sparse evaluation.
    pub fn routed_fraction(&self) -> f64 {
        self.plan().routed_fraction()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "expected input of length {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Final embedding matrix, computed by the sparse engine.
    pub fn forward_hidden(&self, x: &[f64]) -> Result<EmbeddingMatrix> {
        let mut ev = self.evaluator();
        ev.run(x)?;
        Ok(EmbeddingMatrix::from_columns(ev.ws.hidden().to_vec()))
    }

    /// Final embedding matrix by direct evaluation of every block formula.
    pub fn forward_hidden_dense(&self, x: &[f64]) -> Result<EmbeddingMatrix> {
        self.check_input(x)?;
        let mut h = embed_input(x, self.ell)?;
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.forward(&h)?;
            if !h.all_finite() {
                return Err(Error::NumericOverflow { block: i + 1 });
            }
        }
        Ok(h)
    }

    fn decode(&self, h11: f64) -> f64 {
        h11.clamp(-self.output_bound, self.output_bound)
    }

    /// `T(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let mut ev = self.evaluator();
        ev.forward(x)
    }

    /// `T(x)` through the dense reference path.
    pub fn forward_dense(&self, x: &[f64]) -> Result<f64> {
        let h = self.forward_hidden_dense(x)?;
        Ok(self.decode(h.get(1, self.ell)))
    }

    /// Reads `slots` (1-based `(row, token)`) after running each input,
    /// spreading the inputs over the available cores. Output order follows
    /// input order.
    pub fn read_batch(&self, xs: &[Vec<f64>], slots: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
        self.plan();
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(xs.len().max(1));
        let chunk = xs.len().div_ceil(threads.max(1)).max(1);
        let parts: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|sc| {
            let handles: Vec<_> = xs
                .chunks(chunk)
                .map(|part| {
                    sc.spawn(move || {
                        let mut ev = self.evaluator();
                        part.iter().map(|x| ev.read(x, slots)).collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
        });
        let mut out = Vec::with_capacity(xs.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// `T(x)` for every input, in parallel.
    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let raw = self.read_batch(xs, &[(1, self.ell)])?;
        Ok(raw.into_iter().map(|v| self.decode(v[0])).collect())
    }

    /// Reusable evaluator for many inputs.
    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            net: self,
            ws: Workspace::new(self.ell),
        }
    }
}

/// Holds scratch buffers so repeated forward passes do not reallocate.
pub struct Evaluator<'a> {
    net: &'a TransformerNetwork,
    ws: Workspace,
}

impl Evaluator<'_> {
    fn run(&mut self, x: &[f64]) -> Result<()> {
        self.net.check_input(x)?;
        exec::run(self.net.plan(), &self.net.blocks, x, &mut self.ws)
    }

    /// Runs the network and returns the decoded output.
    pub fn forward(&mut self, x: &[f64]) -> Result<f64> {
        self.run(x)?;
        let v = self.ws.hidden()[self.net.ell - 1][0];
        Ok(self.net.decode(v))
    }

    /// Runs the network and reads the given `(row, token)` entries (1-based).
    pub fn read(&mut self, x: &[f64], slots: &[(usize, usize)]) -> Result<Vec<f64>> {
        self.run(x)?;
        let h = self.ws.hidden();
        slots
            .iter()
            .map(|&(row, t)| {
                if row == 0 || row > D_EMBED || t == 0 || t > h.len() {
                    Err(Error::Index(format!("slot (row {row}, token {t})")))
                } else {
                    Ok(h[t - 1][row - 1])
                }
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    d_embed: usize,
    ell: usize,
    input_dim: usize,
    blocks: Vec<TransformerBlock>,
    #[serde(rename = "R")]
    r: f64,
}

impl Serialize for TransformerNetwork {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkRepr {
            d_embed: D_EMBED,
            ell: self.ell,
            input_dim: self.input_dim,
            blocks: self.blocks.clone(),
            r: self.output_bound,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransformerNetwork {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = NetworkRepr::deserialize(d)?;
        if repr.d_embed != D_EMBED {
            return Err(serde::de::Error::custom("only d_embed = 5 is supported"));
        }
        TransformerNetwork::new(repr.input_dim, repr.ell, repr.blocks, repr.r).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer_core::{AttentionHead, FeedForward};

    #[test]
    fn empty_network_reads_zero() {
        let net = TransformerNetwork::new(2, 3, vec![], 1.0).unwrap();
        assert_eq!(net.forward(&[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(net.forward_dense(&[0.3, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn decoder_clamps() {
        // A head that writes 2 into row 1 of every column.
        let mut head = AttentionHead::zero();
        head.q[0][4] = 1.0;
        head.k[0][4] = 1.0;
        head.v[0][4] = 1.0;
        let block = TransformerBlock::new(vec![head], FeedForward::zero());
        let net = TransformerNetwork::new(1, 2, vec![block], 1.0).unwrap();
        assert_eq!(net.forward_dense(&[0.0]).unwrap(), 1.0);
        assert_eq!(net.forward(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn overflow_reports_block() {
        let mut head = AttentionHead::zero();
        head.q[0][0] = 1.0;
        head.k[0][0] = 1.0;
        head.v[0][0] = 1e300;
        let b = TransformerBlock::new(vec![head], FeedForward::zero());
        let net = TransformerNetwork::new(1, 1, vec![TransformerBlock::identity(), b], 1.0).unwrap();
        assert!(matches!(net.forward_dense(&[1e10]), Err(Error::NumericOverflow { block: 2 })));
        assert!(matches!(net.forward(&[1e10]), Err(Error::NumericOverflow { block: 2 })));
    }

    #[test]
    fn kappa_is_max_abs_weight() {
        let mut head = AttentionHead::zero();
        head.k[2][3] = -7.5;
        let net = TransformerNetwork::new(1, 1, vec![TransformerBlock::new(vec![head], FeedForward::zero())], 1.0)
            .unwrap();
        assert_eq!(net.weight_bound_observed(), 7.5);
    }
}
