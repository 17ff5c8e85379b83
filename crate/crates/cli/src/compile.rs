//! `mtf compile`: one arithmetic program plus a brute-force self-test.

use clap::{Args, ValueEnum};
use mtf_core::weight_compiler::{
    compile_const_add, compile_const_mul, compile_division, compile_power_series, compile_product, compile_rth_power,
    compile_square, compile_sum_tokens, stages_for, CompiledProgram, DivisionSeries,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{write_json, CliError, Ctx};

/// Outputs count as exact when `|got − want| ≤ EXACT_TOL·max(|want|, 1)`.
pub const EXACT_TOL: f64 = 1e-9;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    /// Sum of D input tokens.
    Sum,
    /// x + c componentwise.
    Add,
    /// c·x componentwise.
    Mul,
    /// x² componentwise.
    Square,
    /// x·y componentwise over 2D inputs.
    Product,
    /// x^r componentwise.
    Power,
    /// x + x² + ⋯ + x^r for scalar x.
    Series,
    /// Truncated geometric series for 1/x on [c1, c2].
    Div,
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::Sum => "sum",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Square => "square",
            Op::Product => "product",
            Op::Power => "power",
            Op::Series => "series",
            Op::Div => "div",
        }
    }
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    #[arg(value_enum)]
    pub op: Op,
    /// Number of operands D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Bound M on |x| for the random operands [default: 1].
    #[arg(long)]
    pub bound: Option<f64>,
    /// Token budget ℓ [default: the smallest that fits].
    #[arg(long)]
    pub ell: Option<usize>,
    /// Constants of add and mul, one per operand.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub consts: Vec<f64>,
    /// Exponent of power and series, or the division order.
    #[arg(long)]
    pub r: Option<usize>,
    /// Division range.
    #[arg(long, num_args = 2, value_names = ["C1", "C2"])]
    pub range: Option<Vec<f64>>,
    /// Division tolerance; chooses the smallest sufficient order.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Division scale c [default: 2/(c1 + c2)].
    #[arg(long)]
    pub c: Option<f64>,
    /// Random inputs in the self-test [default: 100].
    #[arg(long)]
    pub samples: Option<usize>,
}

fn hundred() -> usize {
    100
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompileConfig {
    dim: Option<usize>,
    #[serde(default = "one")]
    bound: f64,
    ell: Option<usize>,
    #[serde(default)]
    consts: Vec<f64>,
    r: Option<usize>,
    range: Option<[f64; 2]>,
    tol: Option<f64>,
    c: Option<f64>,
    #[serde(default = "hundred")]
    samples: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SelfTest {
    samples: usize,
    passed: usize,
    max_abs_error: f64,
    /// `"exact"` or `"series"`.
    criterion: &'static str,
}

#[derive(Debug, Serialize)]
struct CompileReport<'a> {
    op: Op,
    config: &'a CompileConfig,
    input_dim: usize,
    ell: usize,
    depth: usize,
    heads_per_block: Vec<usize>,
    claimed_tolerance: f64,
    division: Option<DivisionReport>,
    self_test: SelfTest,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct DivisionReport {
    c1: f64,
    c2: f64,
    c: f64,
    r: usize,
    q0: f64,
}

fn need<T>(v: Option<T>, flag: &str, op: Op) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("compile {} requires --{flag}", op.name())))
}

/// Bound on `|ab| + |a| + |b|` over the products formed by the power ladder.
fn power_bound(b: f64, s: u32) -> f64 {
    if b <= 1.0 {
        b * b + 2.0 * b
    } else {
        let s = s.max(1);
        b.powi(1 << s) + 2.0 * b.powi(1 << (s - 1))
    }
}

/// Smallest order `r ≥ 1` whose series tolerance is at most `tol`.
fn order_for(c1: f64, c2: f64, c: Option<f64>, tol: f64) -> Result<usize, CliError> {
    if !(tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let mut r = 1;
    loop {
        let s = DivisionSeries::new(c1, c2, c, r)?;
        if s.tolerance() <= tol {
            return Ok(r);
        }
        if r >= 1 << 16 {
            return Err(CliError::Core(mtf_core::Error::Infeasible(format!(
                "no division order up to {r} reaches tolerance {tol}"
            ))));
        }
        r += 1;
    }
}

struct Case {
    program: CompiledProgram,
    arity: usize,
    lo: f64,
    hi: f64,
    division: Option<DivisionSeries>,
    oracle: Box<dyn Fn(&[f64]) -> Vec<f64>>,
}

/// Compiles at `ell`, or at the smallest budget the op reports when unset.
fn at_budget(ell: Option<usize>, f: impl Fn(usize) -> mtf_core::Result<CompiledProgram>) -> Result<CompiledProgram, CliError> {
    match ell {
        Some(l) => Ok(f(l)?),
        None => match f(1) {
            Err(mtf_core::Error::TokenBudget { needed, .. }) => Ok(f(needed)?),
            other => Ok(other?),
        },
    }
}

fn build(op: Op, cfg: &CompileConfig) -> Result<Case, CliError> {
    let b = cfg.bound;
    if !(b >= 0.0 && b.is_finite()) {
        return Err(CliError::Usage("--bound must be finite and non-negative".into()));
    }
    let consts = || {
        if cfg.consts.is_empty() {
            Err(CliError::Usage(format!("compile {} requires --consts", op.name())))
        } else {
            Ok(cfg.consts.clone())
        }
    };
    let case = |program, arity, oracle: Box<dyn Fn(&[f64]) -> Vec<f64>>| Case {
        program,
        arity,
        lo: -b,
        hi: b,
        division: None,
        oracle,
    };
    Ok(match op {
        Op::Sum => {
            let d = need(cfg.dim, "dim", op)?;
            let p = at_budget(cfg.ell, |l| compile_sum_tokens(d, l, b))?;
            case(p, d, Box::new(|x: &[f64]| vec![x.iter().sum()]))
        }
        Op::Add => {
            let c = consts()?;
            let m = b + c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let p = at_budget(cfg.ell, |l| compile_const_add(&c, l, m))?;
            case(p, c.len(), Box::new(move |x: &[f64]| x.iter().zip(&c).map(|(a, k)| a + k).collect()))
        }
        Op::Mul => {
            let c = consts()?;
            let m = b * c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let p = at_budget(cfg.ell, |l| compile_const_mul(&c, l, m))?;
            case(p, c.len(), Box::new(move |x: &[f64]| x.iter().zip(&c).map(|(a, k)| a * k).collect()))
        }
        Op::Square => {
            let d = need(cfg.dim, "dim", op)?;
            let p = at_budget(cfg.ell, |l| compile_square(d, l, b))?;
            case(p, d, Box::new(|x: &[f64]| x.iter().map(|v| v * v).collect()))
        }
        Op::Product => {
            let d = need(cfg.dim, "dim", op)?;
            let p = at_budget(cfg.ell, |l| compile_product(d, l, b * b + 2.0 * b))?;
            case(p, 2 * d, Box::new(move |x: &[f64]| (0..d).map(|i| x[i] * x[d + i]).collect()))
        }
        Op::Power => {
            let d = need(cfg.dim, "dim", op)?;
            let r = need(cfg.r, "r", op)?;
            let m = power_bound(b, stages_for(r));
            let p = at_budget(cfg.ell, |l| compile_rth_power(r, d, l, m))?;
            case(p, d, Box::new(move |x: &[f64]| x.iter().map(|v| v.powi(r as i32)).collect()))
        }
        Op::Series => {
            let r = need(cfg.r, "r", op)?;
            let m = power_bound(b, stages_for(r));
            let p = at_budget(cfg.ell, |l| compile_power_series(r, l, m))?;
            case(p, 1, Box::new(move |x: &[f64]| vec![(1..=r).map(|i| x[0].powi(i as i32)).sum()]))
        }
        Op::Div => {
            let [c1, c2] = need(cfg.range, "range", op)?;
            let r = match (cfg.r, cfg.tol) {
                (Some(r), _) => r,
                (None, Some(t)) => order_for(c1, c2, cfg.c, t)?,
                (None, None) => return Err(CliError::Usage("compile div requires --tol or --r".into())),
            };
            let s = DivisionSeries::new(c1, c2, cfg.c, r)?;
            let p = at_budget(cfg.ell, |l| compile_division(s, l))?;
            Case {
                program: p,
                arity: 1,
                lo: c1,
                hi: c2,
                division: Some(s),
                oracle: Box::new(|x: &[f64]| vec![1.0 / x[0]]),
            }
        }
    })
}

pub fn run(ctx: &mut Ctx, args: &CompileArgs) -> Result<(), CliError> {
    let l = &mut ctx.layers;
    l.put("dim", args.dim);
    l.put("bound", args.bound);
    l.put("ell", args.ell);
    l.put_list("consts", &args.consts);
    l.put("r", args.r);
    l.put("range", args.range.clone());
    l.put("tol", args.tol);
    l.put("c", args.c);
    l.put("samples", args.samples);
    let cfg: CompileConfig = std::mem::take(l).finish("compile")?;
    let op = args.op;
    let case = build(op, &cfg)?;
    let p = &case.program;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs: Vec<Vec<f64>> = (0..cfg.samples)
        .map(|_| (0..case.arity).map(|_| rng.random_range(case.lo..=case.hi)).collect())
        .collect();
    let got = p.eval_batch(&xs)?;
    let mut passed = 0;
    let mut max_abs: f64 = 0.0;
    for (x, g) in xs.iter().zip(&got) {
        let want = (case.oracle)(x);
        let mut ok = g.len() == want.len();
        for (gi, wi) in g.iter().zip(&want) {
            let err = (gi - wi).abs();
            max_abs = max_abs.max(err);
            let mut allowed = EXACT_TOL * wi.abs().max(1.0);
            if let Some(s) = &case.division {
                allowed += (1.0 - s.c * x[0]).abs().powi(s.r as i32 + 1) / x[0];
            }
            ok &= err <= allowed;
        }
        passed += usize::from(ok);
    }

    let division = case.division.map(|s| DivisionReport {
        c1: s.c1,
        c2: s.c2,
        c: s.c,
        r: s.r,
        q0: s.ratio(),
    });
    let report = CompileReport {
        op,
        config: &cfg,
        input_dim: p.network().input_dim(),
        ell: p.ell(),
        depth: p.depth(),
        heads_per_block: p.head_count_per_block(),
        claimed_tolerance: p.contract().claimed_tolerance,
        division,
        self_test: SelfTest {
            samples: cfg.samples,
            passed,
            max_abs_error: max_abs,
            criterion: if division.is_some() { "series" } else { "exact" },
        },
    };
    let net_path = ctx.out.join(format!("{}.json", op.name()));
    let report_path = ctx.out.join(format!("{}_selftest.json", op.name()));
    write_json(&net_path, p)?;
    write_json(&report_path, &report)?;

    println!(
        "compiled {}: D = {}, ℓ = {}, L_T = {}, heads per block {:?}",
        op.name(),
        report.input_dim,
        report.ell,
        report.depth,
        report.heads_per_block
    );
    if let Some(d) = division {
        println!(
            "r = {} chosen on [{}, {}] with c = {} (q0 = {:.6}, tolerance q0^(r+1)/c1 = {:.3e})",
            d.r, d.c1, d.c2, d.c, d.q0, report.claimed_tolerance
        );
    }
    println!("wrote {}", net_path.display());
    let verdict = if division.is_some() { "within tolerance" } else { "exact" };
    println!("{passed}/{} {verdict} (max |error| {max_abs:.3e})", cfg.samples);
    if passed != cfg.samples {
        return Err(CliError::Verification(format!(
            "{} of {} self-test inputs disagree with the oracle",
            cfg.samples - passed,
            cfg.samples
        )));
    }
    Ok(())
}
