//! Fixtures shared by the forward-pass benchmarks.

use mtf_core::analysis_harness::TargetSpec;
use mtf_core::approximator_synthesis::{atlas_for_epsilon, synthesize_regressor, Regressor, SynthesisOptions};
use mtf_core::manifold_geometry::{sample_tube, Manifold, ManifoldConfig};
use mtf_core::oracle_partition::TargetKind;
use mtf_core::weight_compiler::{compile_square, CompiledProgram};
use mtf_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Squaring program on `d` inputs bounded by 1.
pub fn square_program(d: usize) -> CompiledProgram {
    match compile_square(d, 1, 1.0) {
        Err(Error::TokenBudget { needed, .. }) => compile_square(d, needed, 1.0).expect("square compiles"),
        r => r.expect("square compiles"),
    }
}

/// Circle of radius 0.4 in R^3 with its tube parameter.
pub fn small_circle() -> (Manifold, f64) {
    let cfg: ManifoldConfig = serde_json::from_value(serde_json::json!({
        "kind": "circle", "d": 1, "D": 3, "placement": { "frame": "identity", "scale": 0.4 }
    }))
    .expect("valid manifold config");
    let m = Manifold::from_config(&cfg).expect("manifold builds");
    (m, cfg.q)
}

/// Regressor of a small Hölder target on [`small_circle`] and tube inputs for it.
pub fn small_regressor(n_inputs: usize) -> (Regressor, Vec<Vec<f64>>) {
    let (m, q) = small_circle();
    let spec = TargetSpec {
        kind: TargetKind::AbsPower,
        alpha: 1.0,
        amplitude: 0.002,
        seed: 0,
    };
    let target = spec.build(&m).expect("target builds");
    let eps = 0.19;
    let atlas = atlas_for_epsilon(&m, &target, q, eps).expect("atlas builds");
    let reg = synthesize_regressor(&atlas, &target, eps, &SynthesisOptions::default()).expect("regressor builds");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xs = sample_tube(&m, q, n_inputs, &mut rng).into_iter().map(|t| t.x).collect();
    (reg, xs)
}
