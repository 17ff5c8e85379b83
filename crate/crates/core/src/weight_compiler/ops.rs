//! Arithmetic programs: one function per operation, each with the block and
//! head counts of its construction.

use super::builder::{CompiledProgram, ProgramBuilder, TokenSlot};
use crate::error::{Error, Result};

fn check_budget(needed: usize, ell: usize) -> Result<()> {
    if ell < needed {
        return Err(Error::TokenBudget { needed, available: ell });
    }
    Ok(())
}

fn check_bound(m: f64) -> Result<()> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Contract("bound M must be finite and non-negative".into()));
    }
    Ok(())
}

/// Smallest `s` with `r ≤ 2^s`.
pub fn stages_for(r: usize) -> u32 {
    r.max(1).next_power_of_two().trailing_zeros()
}

/// Column `D + 1` receives `x¹ + ⋯ + x^D`; one block of `D` heads.
pub fn compile_sum_tokens(d: usize, ell: usize, m: f64) -> Result<CompiledProgram> {
    check_bound(m)?;
    check_budget(d + 1, ell)?;
    let mut b = ProgramBuilder::new(d, m);
    let dst = b.alloc(1)[0];
    let srcs = b.inputs();
    b.sum(0, &srcs, dst, m)?;
    b.ensure_blocks(1);
    b.finish(ell, "sum_tokens", vec![dst], 0.0)
}

/// Columns `D+1..=2D` receive `x + c`; one block of `D` heads.
pub fn compile_const_add(c: &[f64], ell: usize, m: f64) -> Result<CompiledProgram> {
    check_bound(m)?;
    let d = c.len();
    check_budget(2 * d, ell)?;
    let mut b = ProgramBuilder::new(d, m);
    let dst = b.alloc(d);
    for (i, (&ci, &o)) in c.iter().zip(&dst).enumerate() {
        b.add_const(0, b.inputs()[i], ci, o, m)?;
    }
    b.ensure_blocks(1);
    b.finish(ell, "const_add", dst, 0.0)
}

/// Columns `D+1..=2D` receive `c ⊙ x`; one block of `D` heads.
pub fn compile_const_mul(c: &[f64], ell: usize, m: f64) -> Result<CompiledProgram> {
    check_bound(m)?;
    let d = c.len();
    check_budget(2 * d, ell)?;
    let mut b = ProgramBuilder::new(d, m);
    let dst = b.alloc(d);
    for (i, (&ci, &o)) in c.iter().zip(&dst).enumerate() {
        b.affine_read(0, b.inputs()[i], ci, o, m)?;
    }
    b.ensure_blocks(1);
    b.finish(ell, "const_mul", dst, 0.0)
}

/// Columns `D+1..=2D` receive `x ⊙ x`; three blocks of `D` heads.
pub fn compile_square(d: usize, ell: usize, m: f64) -> Result<CompiledProgram> {
    check_bound(m)?;
    check_budget(2 * d, ell)?;
    let mut b = ProgramBuilder::new(d, m);
    let dst = b.alloc(d);
    for (x, &o) in b.inputs().into_iter().zip(&dst) {
        b.square(0, x, o, m)?;
    }
    b.ensure_blocks(3);
    b.finish(ell, "square", dst, 0.0)
}

/// With `x` in columns `1..=D` and `y` in `D+1..=2D`, columns `2D+1..=3D`
/// receive `x ⊙ y`; three blocks of `D` heads.
pub fn compile_product(d: usize, ell: usize, m: f64) -> Result<CompiledProgram> {
    check_bound(m)?;
    check_budget(3 * d, ell)?;
    let mut b = ProgramBuilder::new(2 * d, m);
    let dst = b.alloc(d);
    let inp = b.inputs();
    for i in 0..d {
        b.product(0, inp[i], inp[d + i], dst[i], m)?;
    }
    b.ensure_blocks(3);
    b.finish(ell, "product", dst, 0.0)
}

/// Componentwise `r`-th power in `3s` blocks, `2^{s−1} < r ≤ 2^s`.
///
/// All powers up to `2^s` are formed; stage `k` uses `2^{k−1}·D` heads per
/// block. `m` must bound `|ab| + |a| + |b|` for every pair of powers
/// multiplied, e.g. `m = 3` when `|x| ≤ 1`.
pub fn compile_rth_power(r: usize, d: usize, ell: usize, m: f64) -> Result<CompiledProgram> {
    if r < 2 {
        return Err(Error::Contract("r-th power needs r ≥ 2; use const_mul or square".into()));
    }
    check_bound(m)?;
    let s = stages_for(r);
    check_budget((1usize << s) * d, ell)?;
    let mut b = ProgramBuilder::new(d, m);
    let pw = b.powers(0, &b.inputs(), s, m)?;
    b.ensure_blocks(3 * s as usize);
    let out = pw[r - 1].clone();
    b.finish(ell, "rth_power", out, 0.0)
}

/// Output token holds `Σ_{i=1}^r x^i` for scalar `x`; `3s + 1` blocks.
pub fn compile_power_series(r: usize, ell: usize, m: f64) -> Result<CompiledProgram> {
    if r == 0 {
        return Err(Error::Contract("power series needs r ≥ 1".into()));
    }
    check_bound(m)?;
    let s = stages_for(r);
    check_budget((1usize << s) + 1, ell)?;
    let mut b = ProgramBuilder::new(1, m);
    let pw = b.powers(0, &b.inputs(), s, m)?;
    let at = 3 * s as usize;
    let dst = b.alloc(1)[0];
    let terms: Vec<_> = pw[..r].iter().map(|p| p[0]).collect();
    b.sum(at, &terms, dst, m)?;
    b.ensure_blocks(at + 1);
    b.finish(ell, "power_series", vec![dst], 0.0)
}

/// Parameters of the truncated geometric series for `1/x` on `[c1, c2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionSeries {
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
    pub r: usize,
}

impl DivisionSeries {
    /// Checks `0 < c1 < c2` and `|1 − cx| < 1` on the range; `c` defaults to
    /// the midpoint inverse `2/(c1 + c2)`.
    pub fn new(c1: f64, c2: f64, c: Option<f64>, r: usize) -> Result<Self> {
        if !(c1 > 0.0 && c2 > c1 && c2.is_finite()) {
            return Err(Error::Contract(format!("division range [{c1}, {c2}] must satisfy 0 < c1 < c2")));
        }
        let c = c.unwrap_or(2.0 / (c1 + c2));
        let s = Self { c1, c2, c, r };
        if !(s.ratio() < 1.0) {
            return Err(Error::Contract(format!("|1 − c·x| must stay below 1 on [{c1}, {c2}] for c = {c}")));
        }
        Ok(s)
    }

    /// `q0 = max |1 − c·x|` over the range.
    pub fn ratio(&self) -> f64 {
        (1.0 - self.c * self.c1).abs().max((1.0 - self.c * self.c2).abs())
    }

    /// Worst-case truncation error `q0^{r+1}/c1`.
    pub fn tolerance(&self) -> f64 {
        self.ratio().powi(self.r as i32 + 1) / self.c1
    }

    /// Mathematical output `c·Σ_{i=0}^r (1 − cx)^i`.
    pub fn value(&self, x: f64) -> f64 {
        let q = 1.0 - self.c * x;
        let mut acc = 0.0;
        let mut p = 1.0;
        for _ in 0..=self.r {
            acc += p;
            p *= q;
        }
        self.c * acc
    }
}

/// Smallest `r` with `q0^{r+1}/scale ≤ eps`, where `q0 = (c2 − c1)/(c2 + c1)`.
pub fn division_order(c1: f64, c2: f64, eps: f64, scale: f64) -> Result<usize> {
    if !(eps > 0.0 && c1 > 0.0 && c2 > c1 && scale > 0.0) {
        return Err(Error::Contract("division order needs eps > 0 and 0 < c1 < c2".into()));
    }
    let q0 = (c2 - c1) / (c2 + c1);
    let mut r = 0usize;
    let mut p = q0;
    while p / scale > eps {
        r += 1;
        p *= q0;
        if r > 1 << 20 {
            return Err(Error::Infeasible("division order does not converge".into()));
        }
    }
    Ok(r)
}

/// Values of each stage of the division program, all bounded in magnitude
/// by the returned constant.
fn division_bound(p: &DivisionSeries) -> f64 {
    let r = p.r as f64;
    [p.c2, p.c * p.c2 + 1.0, 3.0, r + 1.0, p.c * (r + 1.0)]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Schedules the division series on `x = Σ srcs` over blocks
/// `at..at + 3s + 5` and returns the output slot.
///
/// Each source must be bounded by `src_bound` in magnitude.
pub fn division_stage(
    b: &mut ProgramBuilder,
    at: usize,
    srcs: &[TokenSlot],
    src_bound: f64,
    p: &DivisionSeries,
) -> Result<TokenSlot> {
    if p.r == 0 {
        return Err(Error::Contract("division needs r ≥ 1".into()));
    }
    let s = stages_for(p.r);
    let neg = b.alloc(1)[0];
    b.weighted_sum(at, srcs, &vec![-p.c; srcs.len()], neg, p.c * src_bound)?;
    let q = b.alloc(1)[0];
    b.add_const(at + 1, neg, 1.0, q, p.c * p.c2 + 1.0)?;
    let pw = b.powers(at + 2, &[q], s, 3.0)?;
    let next = at + 2 + 3 * s as usize;
    let sum = b.alloc(1)[0];
    let terms: Vec<_> = pw[..p.r].iter().map(|v| v[0]).collect();
    b.sum(next, &terms, sum, 1.0)?;
    let plus = b.alloc(1)[0];
    b.add_const(next + 1, sum, 1.0, plus, p.r as f64 + 1.0)?;
    let out = b.alloc(1)[0];
    b.affine_read(next + 2, plus, p.c, out, p.c * (p.r as f64 + 1.0))?;
    b.note_bound(division_bound(p));
    b.ensure_blocks(next + 3);
    Ok(out)
}

/// Output token holds `c·Σ_{i=0}^r (1 − cx)^i`; `3s + 5` blocks.
///
/// `r ≥ 1`. The contract's claimed tolerance is `q0^{r+1}/c1`.
pub fn compile_division(p: DivisionSeries, ell: usize) -> Result<CompiledProgram> {
    let mut b = ProgramBuilder::new(1, p.c2);
    let x = b.inputs()[0];
    let out = division_stage(&mut b, 0, &[x], p.c2, &p)?;
    check_budget(b.columns_used(), ell)?;
    b.finish(ell, "division", vec![out], p.tolerance())
}
