//! `mtf synthesize`, `mtf eval` and `mtf audit`.

use std::path::{Path, PathBuf};

use clap::Args;
use mtf_core::analysis_harness::TargetSpec;
use mtf_core::approximator_synthesis::{
    atlas_for_epsilon, regressor_depth, synthesize_regressor, sup_error, Audit, SynthesisOptions, SynthesisPlan,
};
use mtf_core::manifold_geometry::{sample_tube, Manifold, ManifoldConfig};
use mtf_core::weight_compiler::{Contract, ProgramFile};
use mtf_core::TransformerNetwork;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::flags::{ManifoldFlags, TargetFlags};
use crate::{write_json, CliError, Ctx};

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub manifold: ManifoldFlags,
    #[command(flatten)]
    pub target: TargetFlags,
    /// Accuracy ε of the regressor.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Tube samples used to measure the sup error [default: 10000].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Tube samples used to bound ‖η̃‖₁ [default: 2000].
    #[arg(long)]
    pub bound_samples: Option<usize>,
    /// Token budget ℓ [default: layout plus 10%].
    #[arg(long)]
    pub ell: Option<usize>,
}

fn ten_thousand() -> usize {
    10_000
}

fn two_thousand() -> usize {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesizeConfig {
    pub manifold: ManifoldConfig,
    pub target: TargetSpec,
    pub epsilon: f64,
    #[serde(default = "ten_thousand")]
    pub test_samples: usize,
    #[serde(default = "two_thousand")]
    pub bound_samples: usize,
    #[serde(default)]
    pub ell: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct SynthesisReport<'a> {
    config: &'a SynthesizeConfig,
    centers: usize,
    plan: &'a SynthesisPlan,
    audit: &'a Audit,
    sup_error: f64,
    within_epsilon: bool,
}

pub fn synthesize(ctx: &mut Ctx, args: &SynthesizeArgs) -> Result<(), CliError> {
    args.manifold.apply(ctx)?;
    let l = &mut ctx.layers;
    args.target.apply(l);
    l.put("epsilon", args.epsilon);
    l.put("test_samples", args.samples);
    l.put("bound_samples", args.bound_samples);
    l.put("ell", args.ell);
    let cfg: SynthesizeConfig = std::mem::take(l).finish("synthesize")?;

    let m = Manifold::from_config(&cfg.manifold)?;
    let target = cfg.target.build(&m)?;
    let q = cfg.manifold.q;
    let atlas = atlas_for_epsilon(&m, &target, q, cfg.epsilon)?;
    let opts = SynthesisOptions {
        ell: cfg.ell,
        bound_samples: cfg.bound_samples,
        seed: cfg.seed,
        ..SynthesisOptions::default()
    };
    let reg = synthesize_regressor(&atlas, &target, cfg.epsilon, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let xs: Vec<Vec<f64>> = sample_tube(&m, q, cfg.test_samples, &mut rng).into_iter().map(|t| t.x).collect();
    let err = sup_error(&reg.network, &atlas, &target, &xs)?;
    let ok = err <= cfg.epsilon;

    let report = SynthesisReport {
        config: &cfg,
        centers: atlas.len(),
        plan: &reg.plan,
        audit: &reg.audit,
        sup_error: err,
        within_epsilon: ok,
    };
    let net_path = ctx.out.join("network.json");
    write_json(&net_path, &reg.network)?;
    write_json(&ctx.out.join("audit.json"), &report)?;

    let a = &reg.audit;
    let d = m.intrinsic_dim();
    let s = reg.plan.division.stages;
    println!("K = {} centers at δ = {:.6}", atlas.len(), reg.plan.delta);
    println!(
        "L_T = {} = (d + 8) + {} blocks of division, weighting and output sum (s = {s}, r = {}; formula {})",
        a.depth,
        a.depth - (d + 8),
        reg.plan.division.r,
        regressor_depth(d, s)
    );
    println!("m_T = {}, total heads = {}, ℓ = {}, κ_obs = {:.3e}", a.max_heads, a.total_heads, a.ell, a.kappa_obs);
    println!(
        "orders: L_T ~ {:.2}, m_T ~ {:.3e}, ℓ ~ {:.3e}, κ ~ {:.3e}",
        a.orders.depth, a.orders.heads, a.orders.tokens, a.orders.kappa
    );
    println!("wrote {}", net_path.display());
    println!(
        "sup |T − f| = {err:.4e} over {} tube samples, ε = {} {}",
        cfg.test_samples,
        cfg.epsilon,
        if ok { "PASS" } else { "FAIL" }
    );
    if !ok {
        return Err(CliError::Verification(format!("sup error {err} exceeds ε = {}", cfg.epsilon)));
    }
    Ok(())
}

/// Network file, possibly carrying a compiled-program contract.
struct Loaded {
    network: TransformerNetwork,
    contract: Option<Contract>,
}

fn load_network(path: &Path) -> Result<Loaded, CliError> {
    let v = crate::config::read_json(path)?;
    let bad = |e: serde_json::Error| CliError::Usage(format!("{}: not a network file: {e}", path.display()));
    if v.get("contract").is_some() {
        let p: ProgramFile = serde_json::from_value(v).map_err(bad)?;
        Ok(Loaded {
            network: p.network,
            contract: Some(p.contract),
        })
    } else {
        Ok(Loaded {
            network: serde_json::from_value(v).map_err(bad)?,
            contract: None,
        })
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Network or compiled-program JSON.
    #[arg(long, value_name = "FILE")]
    pub network: PathBuf,
    /// One input point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "inputs")]
    pub x: Vec<f64>,
    /// CSV file with one input point per row and no header; results go to
    /// `eval.csv` in the output directory.
    #[arg(long, value_name = "FILE")]
    pub inputs: Option<PathBuf>,
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let row: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        pts.push(row.map_err(|e| CliError::Usage(format!("{} row {}: {e}", path.display(), i + 1)))?);
    }
    Ok(pts)
}

pub fn eval(ctx: &mut Ctx, args: &EvalArgs) -> Result<(), CliError> {
    let net = load_network(&args.network)?;
    let (xs, to_file) = match &args.inputs {
        Some(p) => (read_points(p)?, true),
        None if !args.x.is_empty() => (vec![args.x.clone()], false),
        None => return Err(CliError::Usage("eval requires --x or --inputs".into())),
    };
    let outputs: Vec<Vec<f64>> = match &net.contract {
        Some(c) => {
            let slots: Vec<(usize, usize)> = c.slots.outputs.iter().map(|s| (s.row, s.index)).collect();
            net.network.read_batch(&xs, &slots)?
        }
        None => net.network.forward_batch(&xs)?.into_iter().map(|v| vec![v]).collect(),
    };
    if to_file {
        let path = ctx.out.join("eval.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Core(e.into()))?;
        for o in &outputs {
            w.write_record(o.iter().map(|v| format!("{v:?}"))).map_err(|e| CliError::Core(e.into()))?;
        }
        w.flush().map_err(|e| CliError::Write(path.clone(), e))?;
        println!("evaluated {} inputs, wrote {}", xs.len(), path.display());
    } else {
        let line: Vec<String> = outputs[0].iter().map(|v| format!("{v:?}")).collect();
        println!("{}", line.join(","));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Network or compiled-program JSON.
    #[arg(long, value_name = "FILE")]
    pub network: PathBuf,
}

/// Architecture counts of a stored network.
#[derive(Debug, Serialize)]
struct NetworkAudit {
    op: Option<String>,
    input_dim: usize,
    ell: usize,
    #[serde(rename = "L_T")]
    depth: usize,
    #[serde(rename = "m_T")]
    max_heads: usize,
    total_heads: usize,
    heads_per_block: Vec<usize>,
    ffn_depth: usize,
    ffn_width: usize,
    kappa_obs: f64,
    output_bound: f64,
    routed_fraction: f64,
}

pub fn audit(ctx: &mut Ctx, args: &AuditArgs) -> Result<(), CliError> {
    let net = load_network(&args.network)?;
    let n = &net.network;
    let a = NetworkAudit {
        op: net.contract.as_ref().map(|c| c.op.clone()),
        input_dim: n.input_dim(),
        ell: n.ell(),
        depth: n.depth(),
        max_heads: n.max_heads(),
        total_heads: n.total_heads(),
        heads_per_block: n.blocks().iter().map(|b| b.heads.len()).collect(),
        ffn_depth: n.ffn_depth(),
        ffn_width: n.ffn_width(),
        kappa_obs: n.weight_bound_observed(),
        output_bound: n.output_bound(),
        routed_fraction: n.routed_fraction(),
    };
    let path = ctx.out.join("network_audit.json");
    write_json(&path, &a)?;
    println!(
        "L_T = {}, m_T = {}, total heads = {}, ℓ = {}, D = {}",
        a.depth, a.max_heads, a.total_heads, a.ell, a.input_dim
    );
    println!("FFN depth {} width {}, κ_obs = {:.3e}, R = {}", a.ffn_depth, a.ffn_width, a.kappa_obs, a.output_bound);
    println!("wrote {}", path.display());
    Ok(())
}
