//! Symbolic program construction.
//!
//! Programs are assembled from head and decrement requests that refer to
//! token indices only. Positional weights depend on the final `ℓ`, so the
//! weights are materialized once the whole program is known; this also lets
//! compositions relocate and re-materialize their constituents.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::gadgets::{build_interaction_head, decrement_window, DataKernel};
use crate::error::{Error, Result};
use crate::transformer_core::{FeedForward, TransformerBlock, TransformerNetwork, D_EMBED};

/// Address of one scalar in the embedding matrix (1-based token and row).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenSlot {
    pub index: usize,
    pub row: usize,
}

impl TokenSlot {
    pub fn new(index: usize, row: usize) -> Self {
        Self { index, row }
    }

    /// Slot in the first data row.
    pub fn row1(index: usize) -> Self {
        Self { index, row: 1 }
    }
}

/// Request for one interaction head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub t1: usize,
    pub t2: usize,
    pub out_row: usize,
    pub qdata: DataKernel,
    pub kdata: DataKernel,
}

/// Heads and decrements of one block before materialization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockSpec {
    pub heads: Vec<HeadSpec>,
    /// Amount subtracted from each `(row, token)` after attention.
    decrements: BTreeMap<(usize, usize), f64>,
}

/// Maximal contiguous range of tokens sharing one row and one amount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecrementRun {
    pub row: usize,
    pub first: usize,
    pub last: usize,
    pub amount: f64,
}

impl BlockSpec {
    pub fn decrement_runs(&self) -> Vec<DecrementRun> {
        let mut runs: Vec<DecrementRun> = Vec::new();
        for (&(row, t), &amount) in &self.decrements {
            if amount == 0.0 {
                continue;
            }
            match runs.last_mut() {
                Some(r) if r.row == row && r.last + 1 == t && r.amount.to_bits() == amount.to_bits() => r.last = t,
                _ => runs.push(DecrementRun {
                    row,
                    first: t,
                    last: t,
                    amount,
                }),
            }
        }
        runs
    }

    fn materialize(&self, ell: usize, bound: f64) -> Result<TransformerBlock> {
        let heads = self
            .heads
            .iter()
            .map(|h| build_interaction_head(h.t1, h.t2, h.out_row, &h.qdata, &h.kdata, ell, bound))
            .collect::<Result<Vec<_>>>()?;
        let mut runs = self.decrement_runs();
        let mut ffn = FeedForward::zero();
        while let Some(r) = runs.pop() {
            // Fold a row-1 run and an identical row-2 run into one network.
            let twin = runs
                .iter()
                .position(|o| o.row != r.row && o.first == r.first && o.last == r.last && o.amount == r.amount);
            let (r1, r2) = match twin {
                Some(i) => {
                    runs.remove(i);
                    (1, 2)
                }
                None => (r.row, r.row),
            };
            ffn = ffn.parallel_sum(&decrement_window(r1, r2, r.first, r.last, r.amount, ell)?)?;
        }
        Ok(TransformerBlock::new(heads, ffn))
    }

    fn shifted(&self, input_dim: usize, offset: usize) -> Self {
        let mv = |t: usize| if t > input_dim { t + offset } else { t };
        Self {
            heads: self
                .heads
                .iter()
                .map(|h| HeadSpec {
                    t1: mv(h.t1),
                    t2: mv(h.t2),
                    ..h.clone()
                })
                .collect(),
            decrements: self.decrements.iter().map(|(&(r, t), &a)| ((r, mv(t)), a)).collect(),
        }
    }
}

/// Symbolic form of a whole program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramSpec {
    pub input_dim: usize,
    pub blocks: Vec<BlockSpec>,
    /// Bound on every data entry of every intermediate embedding.
    pub bound: f64,
    /// Highest column the program touches.
    pub columns_used: usize,
}

impl ProgramSpec {
    pub fn materialize(&self, ell: usize) -> Result<TransformerNetwork> {
        if ell < self.columns_used {
            return Err(Error::TokenBudget {
                needed: self.columns_used,
                available: ell,
            });
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.materialize(ell, self.bound))
            .collect::<Result<Vec<_>>>()?;
        TransformerNetwork::new(self.input_dim, ell, blocks, self.bound.max(1.0))
    }

    /// Columns that receive a write.
    pub fn written_columns(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        for b in &self.blocks {
            s.extend(b.heads.iter().map(|h| h.t1));
            s.extend(b.decrements.keys().map(|&(_, t)| t));
        }
        s
    }

    fn shifted(&self, offset: usize) -> Self {
        Self {
            input_dim: self.input_dim,
            blocks: self.blocks.iter().map(|b| b.shifted(self.input_dim, offset)).collect(),
            bound: self.bound,
            columns_used: if self.columns_used > self.input_dim {
                self.columns_used + offset
            } else {
                self.columns_used
            },
        }
    }

    pub(crate) fn merge(specs: &[&ProgramSpec]) -> Result<Self> {
        let input_dim = specs.first().map_or(0, |s| s.input_dim);
        if specs.iter().any(|s| s.input_dim != input_dim) {
            return Err(Error::Dimension("composed programs must share the input dimension".into()));
        }
        let depth = specs.iter().map(|s| s.blocks.len()).max().unwrap_or(0);
        let mut blocks = vec![BlockSpec::default(); depth];
        for s in specs {
            for (dst, src) in blocks.iter_mut().zip(&s.blocks) {
                dst.heads.extend(src.heads.iter().cloned());
                for (&k, &a) in &src.decrements {
                    *dst.decrements.entry(k).or_insert(0.0) += a;
                }
            }
        }
        Ok(Self {
            input_dim,
            blocks,
            bound: specs.iter().map(|s| s.bound).fold(0.0, f64::max),
            columns_used: specs.iter().map(|s| s.columns_used).max().unwrap_or(input_dim),
        })
    }
}

/// Metadata describing what a compiled program computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub op: String,
    pub slots: ContractSlots,
    #[serde(rename = "bound_M")]
    pub bound_m: f64,
    /// Mathematical tolerance of the construction (0 for exact operations).
    pub claimed_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSlots {
    pub inputs: Vec<TokenSlot>,
    pub outputs: Vec<TokenSlot>,
}

/// Materialized program together with its symbolic form and contract.
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    spec: ProgramSpec,
    network: TransformerNetwork,
    contract: Contract,
}

impl CompiledProgram {
    pub(crate) fn from_spec(spec: ProgramSpec, ell: usize, contract: Contract) -> Result<Self> {
        let network = spec.materialize(ell)?;
        Ok(Self {
            spec,
            network,
            contract,
        })
    }

    pub fn network(&self) -> &TransformerNetwork {
        &self.network
    }

    pub fn into_network(self) -> TransformerNetwork {
        self.network
    }

    pub fn spec(&self) -> &ProgramSpec {
        &self.spec
    }

    pub fn contract(&self) -> &Contract {
        &self.contract
    }

    pub fn inputs(&self) -> &[TokenSlot] {
        &self.contract.slots.inputs
    }

    pub fn outputs(&self) -> &[TokenSlot] {
        &self.contract.slots.outputs
    }

    pub fn bound(&self) -> f64 {
        self.contract.bound_m
    }

    pub fn ell(&self) -> usize {
        self.network.ell()
    }

    /// Number of blocks `L_T`.
    pub fn depth(&self) -> usize {
        self.network.depth()
    }

    pub fn head_count_per_block(&self) -> Vec<usize> {
        self.network.blocks().iter().map(|b| b.heads.len()).collect()
    }

    pub fn written_columns(&self) -> BTreeSet<usize> {
        self.spec.written_columns()
    }

    /// Values of the output slots for input `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let slots: Vec<(usize, usize)> = self.outputs().iter().map(|s| (s.row, s.index)).collect();
        self.network.evaluator().read(x, &slots)
    }

    /// Output slots for every input, evaluated in parallel.
    pub fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let slots: Vec<(usize, usize)> = self.outputs().iter().map(|s| (s.row, s.index)).collect();
        self.network.read_batch(xs, &slots)
    }

    /// Same program with every non-input column moved right by `offset`.
    pub fn relocated(&self, offset: usize) -> Result<Self> {
        let d = self.spec.input_dim;
        let mv = |s: &TokenSlot| {
            if s.index > d {
                TokenSlot::new(s.index + offset, s.row)
            } else {
                *s
            }
        };
        let mut contract = self.contract.clone();
        contract.slots.outputs = contract.slots.outputs.iter().map(mv).collect();
        Self::from_spec(self.spec.shifted(offset), self.ell() + offset, contract)
    }
}

#[derive(Serialize)]
struct ProgramRepr<'a> {
    #[serde(flatten)]
    network: &'a TransformerNetwork,
    contract: &'a Contract,
}

impl Serialize for CompiledProgram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProgramRepr {
            network: &self.network,
            contract: &self.contract,
        }
        .serialize(s)
    }
}

/// A program read back from JSON: weights plus contract.
#[derive(Debug, Clone, Deserialize)]
pub struct ProgramFile {
    #[serde(flatten)]
    pub network: TransformerNetwork,
    pub contract: Contract,
}

fn unit(row: usize) -> [f64; D_EMBED] {
    let mut v = [0.0; D_EMBED];
    v[row - 1] = 1.0;
    v
}

fn constant(c: f64) -> [f64; D_EMBED] {
    [0.0, 0.0, 0.0, 0.0, c]
}

const ZERO_ROW: [f64; D_EMBED] = [0.0; D_EMBED];

/// Linear bump allocator plus block schedule.
///
/// Operations are scheduled at an explicit block index `at` so independent
/// operations can share blocks. Every operation records the magnitude bound
/// it relies on; the largest one sizes the positional weights of all heads.
#[derive(Debug, Clone)]
pub struct ProgramBuilder {
    input_dim: usize,
    next: usize,
    blocks: Vec<BlockSpec>,
    bound: f64,
}

impl ProgramBuilder {
    /// Builder whose inputs occupy row 1 of columns `1..=input_dim`, each
    /// bounded by `input_bound` in magnitude.
    pub fn new(input_dim: usize, input_bound: f64) -> Self {
        Self {
            input_dim,
            next: input_dim + 1,
            blocks: Vec::new(),
            bound: input_bound.abs(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> Vec<TokenSlot> {
        (1..=self.input_dim).map(TokenSlot::row1).collect()
    }

    /// Number of scheduled blocks.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Columns allocated so far, inputs included.
    pub fn columns_used(&self) -> usize {
        self.next - 1
    }

    /// Allocates `n` fresh columns and returns their row-`row` slots.
    pub fn alloc_row(&mut self, n: usize, row: usize) -> Vec<TokenSlot> {
        let out = (self.next..self.next + n).map(|t| TokenSlot::new(t, row)).collect();
        self.next += n;
        out
    }

    pub fn alloc(&mut self, n: usize) -> Vec<TokenSlot> {
        self.alloc_row(n, 1)
    }

    /// Leaves `n` columns unused.
    pub fn skip(&mut self, n: usize) {
        self.next += n;
    }

    pub fn note_bound(&mut self, b: f64) {
        self.bound = self.bound.max(b.abs());
    }

    /// Appends an empty block if `at` is past the end.
    pub fn ensure_blocks(&mut self, n: usize) {
        while self.blocks.len() < n {
            self.blocks.push(BlockSpec::default());
        }
    }

    fn check_slot(&self, s: TokenSlot) -> Result<()> {
        if s.index == 0 || s.index >= self.next || s.row == 0 || s.row > 2 {
            return Err(Error::Index(format!("slot (token {}, row {}) is not allocated", s.index, s.row)));
        }
        Ok(())
    }

    /// Raw head request writing into `dst` at block `at`.
    pub fn head(&mut self, at: usize, dst: TokenSlot, src: usize, qdata: DataKernel, kdata: DataKernel) -> Result<()> {
        self.check_slot(dst)?;
        self.check_slot(TokenSlot::row1(src))?;
        if dst.index <= self.input_dim {
            return Err(Error::Allocation(format!("input column {} is read-only", dst.index)));
        }
        self.ensure_blocks(at + 1);
        self.blocks[at].heads.push(HeadSpec {
            t1: dst.index,
            t2: src,
            out_row: dst.row,
            qdata,
            kdata,
        });
        Ok(())
    }

    /// Subtracts `amount` from `dst` after the attention of block `at`.
    pub fn decrement(&mut self, at: usize, dst: TokenSlot, amount: f64) -> Result<()> {
        self.check_slot(dst)?;
        if amount != 0.0 {
            self.ensure_blocks(at + 1);
            *self.blocks[at].decrements.entry((dst.row, dst.index)).or_insert(0.0) += amount;
        }
        Ok(())
    }

    /// `dst += w·src`, valid when `|w·src| ≤ m`; `m = 0` computes `σ(w·src)`.
    pub fn affine_read(&mut self, at: usize, src: TokenSlot, w: f64, dst: TokenSlot, m: f64) -> Result<()> {
        self.check_slot(src)?;
        self.head(at, dst, src.index, [constant(w), constant(1.0)], [unit(src.row), constant(m)])?;
        self.decrement(at, dst, m)?;
        self.note_bound(m);
        Ok(())
    }

    /// `dst += src + c`, valid when `|src| + |c| ≤ m`.
    pub fn add_const(&mut self, at: usize, src: TokenSlot, c: f64, dst: TokenSlot, m: f64) -> Result<()> {
        self.check_slot(src)?;
        let mut k2 = unit(src.row);
        k2[4] = c + m;
        self.head(at, dst, src.index, [ZERO_ROW, constant(1.0)], [ZERO_ROW, k2])?;
        self.decrement(at, dst, m)?;
        self.note_bound(m);
        Ok(())
    }

    /// `dst += h[dst.index, q_row]·src`, valid when that product is `≥ −offset`.
    pub fn bilinear(&mut self, at: usize, dst: TokenSlot, q_row: usize, src: TokenSlot, offset: f64) -> Result<()> {
        self.check_slot(src)?;
        self.check_slot(TokenSlot::new(dst.index, q_row))?;
        self.head(
            at,
            dst,
            src.index,
            [unit(q_row), constant(1.0)],
            [unit(src.row), constant(offset)],
        )?;
        self.decrement(at, dst, offset)?;
        self.note_bound(offset);
        Ok(())
    }

    /// `dst += Σ w_j·src_j` in one block (`|w_j·src_j| ≤ m` for every `j`).
    pub fn weighted_sum(&mut self, at: usize, srcs: &[TokenSlot], w: &[f64], dst: TokenSlot, m: f64) -> Result<()> {
        if srcs.len() != w.len() {
            return Err(Error::Dimension("one weight per summand is required".into()));
        }
        for (&s, &wj) in srcs.iter().zip(w) {
            self.affine_read(at, s, wj, dst, m)?;
        }
        self.note_bound(m * srcs.len() as f64);
        Ok(())
    }

    /// `dst += Σ src_j` in one block.
    pub fn sum(&mut self, at: usize, srcs: &[TokenSlot], dst: TokenSlot, m: f64) -> Result<()> {
        self.weighted_sum(at, srcs, &vec![1.0; srcs.len()], dst, m)
    }

    /// Writes `src²` into the fresh slot `dst` using blocks `at..at+3`.
    pub fn square(&mut self, at: usize, src: TokenSlot, dst: TokenSlot, m: f64) -> Result<()> {
        self.affine_read(at, src, 1.0, dst, m)?;
        self.bilinear(at + 1, dst, dst.row, src, 0.0)?;
        self.affine_read(at + 2, src, -1.0, dst, m)?;
        self.note_bound(m + m * m);
        Ok(())
    }

    /// Writes `x·y` into the fresh slot `dst` using blocks `at..at+3`.
    ///
    /// Valid when `|xy| + |x| + |y| ≤ m`.
    pub fn product(&mut self, at: usize, x: TokenSlot, y: TokenSlot, dst: TokenSlot, m: f64) -> Result<()> {
        self.affine_read(at, x, 1.0, dst, m)?;
        self.bilinear(at + 1, dst, dst.row, y, m)?;
        self.affine_read(at + 2, x, -1.0, dst, m)?;
        Ok(())
    }

    /// Powers `1..=2^s` of each source using `3s` blocks starting at `at`.
    ///
    /// `powers[p − 1][i]` holds `src_i^p`; stage `k` allocates `2^{k−1}` new
    /// powers per source, power-major, so that with sources in columns
    /// `1..=D` power `p` of source `i` lands in column `(p−1)D + i`.
    pub fn powers(&mut self, at: usize, srcs: &[TokenSlot], s: u32, m: f64) -> Result<Vec<Vec<TokenSlot>>> {
        let mut pw: Vec<Vec<TokenSlot>> = vec![srcs.to_vec()];
        for k in 1..=s {
            let half = 1usize << (k - 1);
            let base = at + 3 * (k as usize - 1);
            let mut fresh = Vec::with_capacity(half);
            for _ in 0..half {
                fresh.push(self.alloc(srcs.len()));
            }
            let top = pw[half - 1].clone();
            for (j, dsts) in fresh.iter().enumerate() {
                for (i, &dst) in dsts.iter().enumerate() {
                    let low = pw[j][i];
                    self.affine_read(base, low, 1.0, dst, m)?;
                    self.bilinear(base + 1, dst, dst.row, top[i], m)?;
                    self.affine_read(base + 2, low, -1.0, dst, m)?;
                }
            }
            pw.extend(fresh);
        }
        Ok(pw)
    }

    /// Freezes the schedule.
    pub fn into_spec(self) -> ProgramSpec {
        ProgramSpec {
            input_dim: self.input_dim,
            blocks: self.blocks,
            bound: self.bound,
            columns_used: self.next - 1,
        }
    }

    /// Materializes the program at budget `ell`.
    pub fn finish(self, ell: usize, op: &str, outputs: Vec<TokenSlot>, claimed_tolerance: f64) -> Result<CompiledProgram> {
        let inputs = self.inputs();
        let spec = self.into_spec();
        let contract = Contract {
            op: op.to_string(),
            slots: ContractSlots { inputs, outputs },
            bound_m: spec.bound,
            claimed_tolerance,
        };
        CompiledProgram::from_spec(spec, ell, contract)
    }
}
