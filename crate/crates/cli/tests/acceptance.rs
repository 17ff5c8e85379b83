//! End-to-end acceptance checks. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero when any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mtf_core::analysis_harness::{
    approximation_sweep, covering_bound, covering_bound_direct, generalization_sweep, noise_id_sweep, ApproxAxis,
    ApproxSweepConfig, CoveringBoundParams, FeatureSource, GenSweepConfig, IdSweepConfig, LabelSource, TargetSpec,
    SLOPE_TOLERANCE,
};
use mtf_core::approximator_synthesis::{measured_division_range, synthesize_eta_tilde, synthesize_eta_vector};
use mtf_core::manifold_geometry::{
    sample_tube, DeltaNet, FrameKind, Manifold, ManifoldConfig, ManifoldKind, PlacementOverrides,
};
use mtf_core::oracle_partition::{PartitionAtlas, TargetKind};
use mtf_core::weight_compiler::{
    build_interaction_head, compile_const_add, compile_const_mul, compile_division, compile_product,
    compile_rth_power, compile_square, compile_sum_tokens, CompiledProgram, DataKernel, DivisionSeries,
};
use mtf_core::{EmbeddingMatrix, Error, D_EMBED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

/// Declared exactness of compiled arithmetic.
const EXACT: f64 = 1e-9;

fn exact(got: f64, want: f64) -> bool {
    (got - want).abs() <= EXACT * want.abs().max(1.0)
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: mtf_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within_time(t0: Instant, limit: Duration) -> Result<(), String> {
    let el = t0.elapsed();
    ensure(el <= limit, || format!("took {:.1} s, limit {} s", el.as_secs_f64(), limit.as_secs()))
}

/// Compiles at the smallest admissible token budget.
fn at_budget(f: impl Fn(usize) -> mtf_core::Result<CompiledProgram>) -> Result<CompiledProgram, String> {
    match f(1) {
        Err(Error::TokenBudget { needed, .. }) => core(f(needed)),
        r => core(r),
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, b: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-b..=b)).collect()
}

fn manifold_cfg(kind: ManifoldKind, d: usize, dim: usize, q: f64, placement: PlacementOverrides) -> ManifoldConfig {
    ManifoldConfig {
        kind,
        d,
        ambient_dim: dim,
        q,
        seed: 1,
        placement,
    }
}

fn balanced(scale: Option<f64>) -> PlacementOverrides {
    PlacementOverrides {
        frame: Some(FrameKind::Balanced),
        scale,
        ..PlacementOverrides::default()
    }
}

type Oracle = Box<dyn Fn(&[f64]) -> Vec<f64>>;

fn arithmetic_exactness() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = 8;
    let consts = uniform(&mut rng, d, 2.0);
    let cmax = consts.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let mut cases: Vec<(String, CompiledProgram, usize, Oracle)> = Vec::new();
    cases.push((
        "sum".into(),
        at_budget(|l| compile_sum_tokens(d, l, 1.0))?,
        d,
        Box::new(|x| vec![x.iter().sum()]),
    ));
    let c = consts.clone();
    cases.push((
        "const_add".into(),
        at_budget(|l| compile_const_add(&consts, l, 1.0 + cmax))?,
        d,
        Box::new(move |x| x.iter().zip(&c).map(|(a, b)| a + b).collect()),
    ));
    let c = consts.clone();
    cases.push((
        "const_mul".into(),
        at_budget(|l| compile_const_mul(&consts, l, cmax))?,
        d,
        Box::new(move |x| x.iter().zip(&c).map(|(a, b)| a * b).collect()),
    ));
    cases.push((
        "square".into(),
        at_budget(|l| compile_square(d, l, 1.0))?,
        d,
        Box::new(|x| x.iter().map(|a| a * a).collect()),
    ));
    cases.push((
        "product".into(),
        at_budget(|l| compile_product(d / 2, l, 3.0))?,
        d,
        Box::new(|x| (0..x.len() / 2).map(|i| x[i] * x[x.len() / 2 + i]).collect()),
    ));
    for r in [2usize, 4, 8, 13] {
        cases.push((
            format!("power{r}"),
            at_budget(|l| compile_rth_power(r, d, l, 3.0))?,
            d,
            Box::new(move |x| x.iter().map(|a| a.powi(r as i32)).collect()),
        ));
    }
    let mut worst: Vec<String> = Vec::new();
    for (name, prog, dim, oracle) in &cases {
        let xs: Vec<Vec<f64>> = (0..1000).map(|_| uniform(&mut rng, *dim, 1.0)).collect();
        let got = core(prog.eval_batch(&xs))?;
        let mut max = 0.0_f64;
        for (x, g) in xs.iter().zip(&got) {
            let w = oracle(x);
            ensure(g.len() == w.len(), || format!("{name}: {} outputs, expected {}", g.len(), w.len()))?;
            for (a, b) in g.iter().zip(&w) {
                ensure(exact(*a, *b), || format!("{name} at {x:?}: {a} vs {b}"))?;
                max = max.max(rel_err(*a, *b));
            }
        }
        worst.push(format!("{name} {max:.1e}"));
    }
    within_time(t0, Duration::from_secs(60))?;
    Ok(format!("1000 operands each, max error {}", worst.join(", ")))
}

fn division_contract() -> Check {
    let t0 = Instant::now();
    let c = 0.8;
    let xs = [0.5, 0.8, 1.0, 1.5, 2.0];
    let rs = [4usize, 8, 16, 32];
    let mut errs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &r in &rs {
        let series = core(DivisionSeries::new(0.5, 2.0, Some(c), r))?;
        let prog = at_budget(|l| compile_division(series, l))?;
        for (j, &x) in xs.iter().enumerate() {
            let out = core(prog.eval(&[x]))?[0];
            let err = (out - 1.0 / x).abs();
            let bound = (1.0 - c * x).abs().powi(r as i32 + 1) / x;
            // The series itself, summed in floating point, is the bound's
            // attainable floor.
            let floor = EXACT * (1.0 / x).max(1.0);
            ensure(err <= bound + floor, || format!("r = {r}, x = {x}: error {err:e} above {bound:e}"))?;
            ensure(exact(out, series.value(x)), || format!("r = {r}, x = {x}: {out} vs series {}", series.value(x)))?;
            errs.entry(j).or_default().push(err);
        }
    }
    let mut shown = Vec::new();
    for (j, e) in &errs {
        let x = xs[*j];
        for w in e.windows(2) {
            // Strict decrease is required while the error is above rounding.
            let above = w[0] > EXACT * (1.0 / x).max(1.0);
            ensure(!above || w[1] < w[0], || format!("x = {x}: error does not shrink in r: {e:?}"))?;
        }
        shown.push(format!("x={x}: {:.1e}", e.last().copied().unwrap_or(0.0)));
    }
    within_time(t0, Duration::from_secs(60))?;
    Ok(format!("c = 0.8, r ∈ {{4, 8, 16, 32}}; error at r = 32 {}", shown.join(", ")))
}

fn random_kernel(rng: &mut ChaCha8Rng) -> DataKernel {
    let mut k = [[0.0; D_EMBED]; 2];
    for row in &mut k {
        for v in row.iter_mut() {
            if rng.random_bool(0.6) {
                *v = rng.random_range(-1.0..=1.0);
            }
        }
    }
    k
}

fn kernel_dot(k: &[f64; D_EMBED], col: &[f64; D_EMBED]) -> f64 {
    k.iter().zip(col).map(|(a, b)| a * b).sum()
}

fn interaction_selectivity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0_f64;
    let mut active = 0;
    for n in 0..500 {
        let ell = rng.random_range(2..=24);
        let t1 = rng.random_range(1..=ell);
        let t2 = rng.random_range(1..=ell);
        let i = rng.random_range(1..=D_EMBED);
        let bound = rng.random_range(0.1..=20.0);
        let (q, k) = (random_kernel(&mut rng), random_kernel(&mut rng));
        let head = core(build_interaction_head(t1, t2, i, &q, &k, ell, bound))?;
        let mut h = EmbeddingMatrix::positional(ell);
        for t in 1..=ell {
            h.set(1, t, rng.random_range(-bound..=bound));
            h.set(2, t, rng.random_range(-bound..=bound));
        }
        let out = head.apply(&h);
        let (a, b) = (h.column(t1), h.column(t2));
        let want = (kernel_dot(&q[0], a) * kernel_dot(&k[0], b) + kernel_dot(&q[1], a) * kernel_dot(&k[1], b)).max(0.0);
        if want > 0.0 {
            active += 1;
        }
        for (t, col) in out.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                if t + 1 == t1 && r + 1 == i {
                    let e = (v - want).abs() / want.abs().max(1.0);
                    worst = worst.max(e);
                    ensure(e <= 1e-12, || format!("head {n}: target entry {v} vs {want}"))?;
                } else {
                    ensure(v == 0.0, || format!("head {n}: entry (row {}, token {}) = {v}", r + 1, t + 1))?;
                }
            }
        }
    }
    Ok(format!("500 heads ({active} with a positive score), off-target entries exactly zero, target error {worst:.1e}"))
}

fn eta_tilde_representation() -> Check {
    let cases = [
        ("circle D=3", manifold_cfg(ManifoldKind::Circle, 1, 3, 0.0, PlacementOverrides::default())),
        ("circle D=10", manifold_cfg(ManifoldKind::Circle, 1, 10, 0.0, PlacementOverrides::default())),
        ("sphere D=10", manifold_cfg(ManifoldKind::Sphere, 2, 10, 0.0, PlacementOverrides::default())),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut parts = Vec::new();
    for (name, cfg) in cases {
        let m = core(Manifold::from_config(&cfg))?;
        let atlas = core(PartitionAtlas::build(&m, 0.0, 0.2 * m.reach()))?;
        let k = atlas.len();
        let dim = m.ambient_dim();
        let cube: Vec<Vec<f64>> = (0..10_000).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let tube: Vec<Vec<f64>> = sample_tube(&m, 0.0, 2000, &mut rng).into_iter().map(|t| t.x).collect();
        let mut worst = 0.0_f64;
        let mut positive = 0;
        for i in [0, k / 2, k - 1] {
            let prog = core(synthesize_eta_tilde(&atlas, i, None))?;
            ensure(prog.depth() == cfg.d + 8, || format!("{name}: {} blocks, expected {}", prog.depth(), cfg.d + 8))?;
            for xs in [&cube, &tube] {
                let got = core(prog.eval_batch(xs))?;
                for (x, g) in xs.iter().zip(&got) {
                    let want = core(atlas.eta_tilde(i, x))?;
                    let e = (g[0] - want).abs();
                    ensure(e <= 1e-9, || format!("{name}, center {i}: {} vs {want}", g[0]))?;
                    worst = worst.max(e);
                    positive += usize::from(want > 0.0);
                }
            }
        }
        parts.push(format!("{name} K={k} error {worst:.1e} ({positive} positive)"));
    }
    Ok(format!("d + 8 blocks; 10^4 cube points plus 2000 tube points per center: {}", parts.join(", ")))
}

fn relative_error_contract() -> Check {
    let cases = [
        ("circle D=3 q=0.3", manifold_cfg(ManifoldKind::Circle, 1, 3, 0.3, PlacementOverrides::default()), 0.15),
        ("sphere D=10 q=0", manifold_cfg(ManifoldKind::Sphere, 2, 10, 0.0, PlacementOverrides::default()), 0.3),
    ];
    let mut parts = Vec::new();
    for (name, cfg, frac) in cases {
        let m = core(Manifold::from_config(&cfg))?;
        let atlas = core(PartitionAtlas::build(&m, cfg.q, frac * m.reach()))?;
        let range = core(measured_division_range(&atlas, 2000, 1, 0.2))?;
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let xs: Vec<Vec<f64>> = sample_tube(&m, cfg.q, 10_000, &mut rng).into_iter().map(|t| t.x).collect();
        for eps in [1e-2, 1e-3] {
            let prog = core(synthesize_eta_vector(&atlas, eps, range, None))?;
            let got = core(prog.eval_batch(&xs))?;
            let mut worst_rel = 0.0_f64;
            let mut worst_sum = 0.0_f64;
            for (x, t) in xs.iter().zip(&got) {
                let eta = core(atlas.eta(x))?;
                let mut sum = 0.0;
                for (ti, ei) in t.iter().zip(&eta) {
                    let e = (ti - ei).abs();
                    ensure(e <= eps * ei, || format!("{name}, ε_div = {eps}: |T − η| = {e:e} with η = {ei:e}"))?;
                    if *ei > 0.0 {
                        worst_rel = worst_rel.max(e / ei);
                    }
                    sum += e;
                }
                ensure(sum <= eps, || format!("{name}, ε_div = {eps}: Σ|T − η| = {sum:e}"))?;
                worst_sum = worst_sum.max(sum);
            }
            parts.push(format!("{name} K={} ε_div={eps}: rel {worst_rel:.1e}, sum {worst_sum:.1e}", atlas.len()));
        }
    }
    Ok(format!("10^4 tube samples; {}", parts.join("; ")))
}

fn end_to_end() -> Check {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    for q in [0.0, 0.3] {
        let cfg = ApproxSweepConfig {
            manifold: manifold_cfg(ManifoldKind::Circle, 1, 8, q, balanced(Some(0.61))),
            target: TargetSpec {
                kind: TargetKind::AbsPower,
                alpha: 1.0,
                amplitude: 0.2,
                seed: 0,
            },
            // Contains 0.3, 0.15 and 0.075; a fit needs at least four points.
            axis: ApproxAxis::Epsilon(vec![0.3, 0.2, 0.15, 0.1, 0.075]),
            test_samples: 2000,
            seed: 1,
        };
        let s = core(approximation_sweep(&cfg))?;
        ensure(s.within_epsilon(), || format!("q = {q}: sup error above ε in {:?}", s.rows))?;
        ensure(s.result.passes() == Some(true), || format!("q = {q}: error vs δ {}", s.result.summary()))?;
        for (what, fit) in [("m_T", s.heads_fit), ("ℓ", s.tokens_fit)] {
            let f = fit.ok_or_else(|| format!("q = {q}: {what} not fitted"))?;
            ensure(f.within(-1.0, SLOPE_TOLERANCE), || format!("q = {q}: {what} slope {}", f.slope))?;
        }
        ensure(s.depth_growth <= 3, || format!("q = {q}: L_T grows by {}", s.depth_growth))?;
        let fit = s.result.fit.expect("fitted");
        parts.push(format!(
            "q={q}: error slope {:.2}, m_T slope {:.2}, ℓ slope {:.2}, L_T growth {}",
            fit.slope,
            s.heads_fit.expect("fitted").slope,
            s.tokens_fit.expect("fitted").slope,
            s.depth_growth
        ));
    }
    within_time(t0, Duration::from_secs(600))?;
    Ok(parts.join("; "))
}

fn generalization_rate() -> Check {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    for (kind, d) in [(ManifoldKind::Circle, 1), (ManifoldKind::Sphere, 2)] {
        let cfg = GenSweepConfig {
            manifold: manifold_cfg(kind, d, 8, 0.0, balanced(None)),
            target: TargetSpec {
                kind: TargetKind::Lacunary,
                alpha: 1.0,
                amplitude: 1.0,
                seed: 0,
            },
            n: vec![200, 500, 1500, 4000, 10_000],
            delta_constant: 1.5,
            eps_div: 1e-3,
            test_samples: 10_000,
            features: FeatureSource::Network,
            labels: LabelSource::Target,
            label_noise: None,
            seed: 5,
        };
        let s = core(generalization_sweep(&cfg))?;
        ensure(s.result.passes() == Some(true), || format!("d = {d}: {}", s.result.summary()))?;
        parts.push(format!("d={d}: {}", s.result.summary()));
    }
    within_time(t0, Duration::from_secs(600))?;
    Ok(parts.join("; "))
}

fn net_cardinality() -> Check {
    let aff = |d: usize, dim: usize| manifold_cfg(ManifoldKind::Affine, d, dim, 0.0, PlacementOverrides::default());
    let all_q: &[f64] = &[0.0, 0.3, 0.6];
    let all_frac: &[f64] = &[0.3, 0.15, 0.08];
    // Torus geodesics are solved by shooting, and a tube point meets a few
    // hundred bumps, so the torus gets fewer probes.
    let cases: Vec<(&str, ManifoldConfig, &[f64], &[f64], usize)> = vec![
        ("circle", manifold_cfg(ManifoldKind::Circle, 1, 3, 0.0, PlacementOverrides::default()), all_q, all_frac, 500),
        ("circle", manifold_cfg(ManifoldKind::Circle, 1, 8, 0.0, balanced(None)), all_q, all_frac, 500),
        ("sphere", manifold_cfg(ManifoldKind::Sphere, 2, 10, 0.0, PlacementOverrides::default()), all_q, all_frac, 500),
        ("torus", manifold_cfg(ManifoldKind::Torus, 2, 3, 0.0, PlacementOverrides::default()), &[0.0, 0.3], &[0.3, 0.15], 15),
        ("affine", aff(1, 4), all_q, all_frac, 500),
        ("affine", aff(2, 5), all_q, all_frac, 500),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut nets = 0;
    let mut probes = 0;
    let mut worst_k = 0.0_f64;
    let mut worst_loc = 0.0_f64;
    for (name, base, qs, fracs, samples) in cases {
        for &q in qs {
            let cfg = ManifoldConfig { q, ..base.clone() };
            let m = core(Manifold::from_config(&cfg))?;
            let scale = m.reach().min(1.0);
            for &frac in fracs {
                let delta = frac * scale;
                let atlas = core(PartitionAtlas::build(&m, q, delta))?;
                let bound = DeltaNet::size_bound(&m, delta);
                let k = atlas.len() as f64;
                ensure(k <= bound, || format!("{name} δ = {delta}: K = {k} above {bound}"))?;
                worst_k = worst_k.max(k / bound);
                let loc = atlas.localization_bound();
                for t in sample_tube(&m, q, samples, &mut rng) {
                    let r = core(atlas.localization_radius(&t.x))?;
                    ensure(r <= loc, || format!("{name} q = {q} δ = {delta}: radius {r} above {loc}"))?;
                    worst_loc = worst_loc.max(r / loc);
                    probes += 1;
                }
                nets += 1;
            }
        }
    }
    Ok(format!("{nets} nets, {probes} tube probes, max K/bound {worst_k:.3}, max radius/bound {worst_loc:.3}"))
}

fn covering_params(rng: &mut ChaCha8Rng, small: bool) -> CoveringBoundParams {
    let n = |rng: &mut ChaCha8Rng, hi: usize| rng.random_range(1..=hi);
    if small {
        CoveringBoundParams {
            depth: n(rng, 2),
            heads: n(rng, 2),
            d_embed: n(rng, 2),
            ell: n(rng, 4),
            ffn_depth: n(rng, 2),
            ffn_width: n(rng, 2),
            input_dim: n(rng, 2),
            output_bound: 1.0,
            kappa: rng.random_range(0.5..=2.0),
            input_bound: rng.random_range(0.5..=1.5),
            delta_cover: rng.random_range(0.05..=1.0),
        }
    } else {
        CoveringBoundParams {
            depth: n(rng, 30),
            heads: n(rng, 500),
            d_embed: 5,
            ell: n(rng, 20_000),
            ffn_depth: n(rng, 8),
            ffn_width: n(rng, 12),
            input_dim: n(rng, 10),
            output_bound: rng.random_range(0.5..=10.0),
            kappa: rng.random_range(1.0..=1e30),
            input_bound: rng.random_range(1.0..=2.0),
            delta_cover: rng.random_range(1e-6..=1.0),
        }
    }
}

fn covering_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut sets = 0;
    let mut drawn = 0;
    let mut worst = 0.0_f64;
    while sets < 20 {
        drawn += 1;
        ensure(drawn < 10_000, || "no representable small parameter sets".into())?;
        let p = covering_params(&mut rng, true);
        let Some(direct) = core(covering_bound_direct(&p))? else { continue };
        let log = core(covering_bound(&p))?;
        let e = (log - direct).abs() / direct.abs().max(f64::MIN_POSITIVE);
        ensure(e <= 1e-9, || format!("{p:?}: log {log} vs direct {direct}"))?;
        worst = worst.max(e);
        sets += 1;
    }
    let mut steps = 0;
    for _ in 0..200 {
        let p = covering_params(&mut rng, false);
        let b = core(covering_bound(&p))?;
        let grown = [
            CoveringBoundParams { kappa: p.kappa * rng.random_range(1.0..=10.0), ..p },
            CoveringBoundParams { ell: p.ell + rng.random_range(1..=100), ..p },
            CoveringBoundParams { heads: p.heads + rng.random_range(1..=10), ..p },
        ];
        for (what, g) in ["κ", "ℓ", "m_T"].iter().zip(grown) {
            let bg = core(covering_bound(&g))?;
            ensure(bg >= b, || format!("bound decreases in {what}: {b} → {bg} at {p:?}"))?;
            steps += 1;
        }
    }
    Ok(format!("20 sets ({drawn} drawn), max relative gap {worst:.1e}; {steps} monotone steps in κ, ℓ, m_T"))
}

fn intrinsic_dimension() -> Check {
    let t0 = Instant::now();
    let cfg = IdSweepConfig {
        manifold: manifold_cfg(ManifoldKind::Sphere, 2, 50, 0.0, PlacementOverrides::default()),
        sigmas: vec![0.0, 0.01, 0.05, 0.1, 0.3],
        n: 5000,
        k: 30,
        seed: 2,
    };
    let s = core(noise_id_sweep(&cfg))?;
    let est: Vec<String> = s.rows.iter().map(|r| format!("{:.2}", r.id_est)).collect();
    let clean = s.rows[0].id_clean;
    ensure((clean - 2.0).abs() <= 0.5, || format!("σ = 0 estimate {clean}"))?;
    ensure(s.nondecreasing(), || format!("estimates {est:?} decrease"))?;
    ensure(s.spearman > 0.8, || format!("Spearman ρ = {}", s.spearman))?;
    within_time(t0, Duration::from_secs(120))?;
    Ok(format!("estimates [{}], ρ = {:.3}", est.join(", "), s.spearman))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).expect("output directory") {
        let p = e.expect("entry").path();
        if p.is_file() {
            files.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
        }
    }
    files
}

fn cli_determinism() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = work.path().join("out");
    let inputs = work.path().join("in.csv");
    fs::write(&inputs, "0.1,0.2,0.3\n-1,0,1\n0.5,-0.5,0.25\n").map_err(|e| e.to_string())?;
    let net = out.join("network.json");
    let square = out.join("square.json");
    let circle = ["--kind", "circle", "--d", "1", "--ambient", "3", "--frame", "identity", "--scale", "0.4"];
    let runs: Vec<Vec<String>> = vec![
        vec!["compile", "square", "--dim", "3"],
        vec!["compile", "div", "--range", "0.5", "2", "--tol", "1e-6"],
        vec!["compile", "power", "--dim", "2", "--r", "13"],
        [&["synthesize"][..], &circle, &["--alpha", "1", "--amplitude", "0.002", "--epsilon", "0.19", "--samples", "500"]]
            .concat(),
        vec!["audit", "--network", net.to_str().unwrap()],
        vec!["eval", "--network", square.to_str().unwrap(), "--inputs", inputs.to_str().unwrap()],
        [
            &["sweep", "approx"][..],
            &circle,
            &["--target", "constant", "--alpha", "1", "--amplitude", "0.01", "--epsilons", "0.19,0.17,0.15,0.13"],
            &["--samples", "300"],
        ]
        .concat(),
        [
            &["sweep", "gen"][..],
            &circle,
            &["--target", "abs_power", "--alpha", "1", "--n", "200,500,1500,4000,8000", "--samples", "1000"],
            &["--features", "analytic"],
        ]
        .concat(),
        vec!["sweep", "id", "--kind", "sphere", "--d", "2", "--ambient", "10", "--sigmas", "0,0.05,0.3", "--n", "600"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let run_all = || -> Result<(Vec<i32>, BTreeMap<String, Vec<u8>>), String> {
        if out.exists() {
            fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
        }
        let mut codes = Vec::new();
        for args in &runs {
            let o = Command::new(env!("CARGO_BIN_EXE_mtf"))
                .args(["--seed", "7", "--out"])
                .arg(&out)
                .args(args)
                .output()
                .map_err(|e| e.to_string())?;
            codes.push(o.status.code().unwrap_or(-1));
        }
        Ok((codes, snapshot(&out)))
    };
    let (ca, a) = run_all()?;
    let (cb, b) = run_all()?;
    ensure(ca == cb, || format!("exit codes differ: {ca:?} vs {cb:?}"))?;
    ensure(ca.iter().all(|&c| c == 0 || c == 4), || format!("unexpected exit codes {ca:?}"))?;
    ensure(a.keys().eq(b.keys()), || "artifact sets differ".into())?;
    for (name, bytes) in &a {
        ensure(&b[name] == bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} commands, {} JSON/CSV artifacts byte-identical across two runs", runs.len(), a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("arithmetic exactness", arithmetic_exactness),
        ("division contract", division_contract),
        ("interaction selectivity", interaction_selectivity),
        ("bump representation", eta_tilde_representation),
        ("partition relative error", relative_error_contract),
        ("end-to-end approximation", end_to_end),
        ("generalization rate", generalization_rate),
        ("net cardinality and localization", net_cardinality),
        ("covering bound", covering_consistency),
        ("intrinsic dimension", intrinsic_dimension),
        ("CLI determinism", cli_determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let n = k + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let r = check();
        let secs = t0.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
