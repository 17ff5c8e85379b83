use std::sync::OnceLock;

use mtf_core::analysis_harness::{covering_bound, CoveringBoundParams};
use mtf_core::manifold_geometry::{sample_tube, Manifold, ManifoldConfig, ManifoldKind, PlacementOverrides};
use mtf_core::oracle_partition::PartitionAtlas;
use mtf_core::weight_compiler::{build_interaction_head, compile_product, compile_rth_power, CompiledProgram};
use mtf_core::{EmbeddingMatrix, D_EMBED};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn manifold(kind: ManifoldKind, d: usize, dim: usize, q: f64) -> Manifold {
    Manifold::from_config(&ManifoldConfig {
        kind,
        d,
        ambient_dim: dim,
        q,
        seed: 3,
        placement: PlacementOverrides::default(),
    })
    .unwrap()
}

fn shapes() -> &'static [Manifold] {
    static S: OnceLock<Vec<Manifold>> = OnceLock::new();
    S.get_or_init(|| {
        vec![
            manifold(ManifoldKind::Circle, 1, 4, 0.0),
            manifold(ManifoldKind::Sphere, 2, 6, 0.0),
            manifold(ManifoldKind::Sphere, 3, 5, 0.0),
            manifold(ManifoldKind::Torus, 2, 4, 0.0),
            manifold(ManifoldKind::Affine, 2, 5, 0.0),
        ]
    })
}

fn atlases() -> &'static [PartitionAtlas] {
    static A: OnceLock<Vec<PartitionAtlas>> = OnceLock::new();
    A.get_or_init(|| {
        [(ManifoldKind::Circle, 1, 3, 0.3), (ManifoldKind::Sphere, 2, 6, 0.2), (ManifoldKind::Torus, 2, 3, 0.0)]
            .into_iter()
            .map(|(k, d, dim, q)| {
                let m = manifold(k, d, dim, q);
                let delta = 0.3 * m.reach();
                PartitionAtlas::build(&m, q, delta).unwrap()
            })
            .collect()
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn at_budget(f: impl Fn(usize) -> mtf_core::Result<CompiledProgram>) -> CompiledProgram {
    match f(1) {
        Err(mtf_core::Error::TokenBudget { needed, .. }) => f(needed).unwrap(),
        r => r.unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent(which in 0usize..5, x in prop::collection::vec(0.0f64..1.0, 6)) {
        let m = &shapes()[which];
        let x = &x[..m.ambient_dim()];
        if let Ok(p) = m.project(x) {
            let pp = m.project(&p).unwrap();
            prop_assert!(dist(&p, &pp) <= 1e-12, "{p:?} vs {pp:?}");
            prop_assert!(m.contains(&p));
        }
    }

    #[test]
    fn geodesic_dominates_chord(which in 0usize..5, seed in any::<u64>()) {
        let m = &shapes()[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = m.to_ambient(&m.sample_canonical(&mut rng));
        let b = m.to_ambient(&m.sample_canonical(&mut rng));
        let g = m.geodesic_distance(&a, &b).unwrap();
        let c = dist(&a, &b);
        prop_assert!(g >= c * (1.0 - 1e-12) - 1e-15, "geodesic {g} below chord {c}");
        prop_assert!(m.geodesic_distance(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn partition_of_unity_on_tube(which in 0usize..3, seed in any::<u64>()) {
        let atlas = &atlases()[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in sample_tube(atlas.manifold(), atlas.q(), 4, &mut rng) {
            let eta = atlas.eta(&t.x).unwrap();
            prop_assert!(eta.iter().all(|&e| e >= 0.0));
            let s: f64 = eta.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12, "Σ η = {s}");
            prop_assert!(atlas.localization_radius(&t.x).unwrap() <= atlas.localization_bound());
        }
    }

    #[test]
    fn interaction_head_touches_one_entry(
        ell in 2usize..20,
        t1f in 0.0f64..1.0,
        t2f in 0.0f64..1.0,
        i in 1usize..=D_EMBED,
        bound in 0.1f64..50.0,
        q in prop::array::uniform2(prop::array::uniform5(-1.0f64..1.0)),
        k in prop::array::uniform2(prop::array::uniform5(-1.0f64..1.0)),
        data in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let t1 = 1 + (t1f * ell as f64) as usize % ell;
        let t2 = 1 + (t2f * ell as f64) as usize % ell;
        let head = build_interaction_head(t1, t2, i, &q, &k, ell, bound).unwrap();
        let mut h = EmbeddingMatrix::positional(ell);
        for t in 1..=ell {
            h.set(1, t, bound * data[2 * t - 2]);
            h.set(2, t, bound * data[2 * t - 1]);
        }
        let dot = |w: &[f64; D_EMBED], c: &[f64; D_EMBED]| w.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        let (a, b) = (h.column(t1), h.column(t2));
        let want = (dot(&q[0], a) * dot(&k[0], b) + dot(&q[1], a) * dot(&k[1], b)).max(0.0);
        for (t, col) in head.apply(&h).iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                if t + 1 == t1 && r + 1 == i {
                    prop_assert!((v - want).abs() <= 1e-12 * want.max(1.0), "{v} vs {want}");
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn compiled_product_is_exact(x in prop::collection::vec(-1.0f64..=1.0, 6)) {
        static P: OnceLock<CompiledProgram> = OnceLock::new();
        let p = P.get_or_init(|| at_budget(|l| compile_product(3, l, 3.0)));
        let got = p.eval(&x).unwrap();
        for i in 0..3 {
            let w = x[i] * x[3 + i];
            prop_assert!((got[i] - w).abs() <= 1e-9 * w.abs().max(1.0));
        }
    }

    #[test]
    fn compiled_powers_are_exact(r in 2usize..=16, x in prop::collection::vec(-1.0f64..=1.0, 2)) {
        let p = at_budget(|l| compile_rth_power(r, 2, l, 3.0));
        let got = p.eval(&x).unwrap();
        for (g, xi) in got.iter().zip(&x) {
            let w = xi.powi(r as i32);
            prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn covering_bound_grows_with_class(
        depth in 1usize..20,
        heads in 1usize..200,
        ell in 1usize..5000,
        kappa in 1.0f64..1e20,
        delta in 1e-6f64..1.0,
        grow in 1.0f64..10.0,
    ) {
        let p = CoveringBoundParams {
            depth,
            heads,
            d_embed: 5,
            ell,
            ffn_depth: 4,
            ffn_width: 5,
            input_dim: 3,
            output_bound: 1.0,
            kappa,
            input_bound: 1.0,
            delta_cover: delta,
        };
        let b = covering_bound(&p).unwrap();
        let grown = [
            CoveringBoundParams { kappa: kappa * grow, ..p },
            CoveringBoundParams { heads: heads + 1, ..p },
            CoveringBoundParams { ell: ell + 1, ..p },
            CoveringBoundParams { depth: depth + 1, ..p },
            CoveringBoundParams { delta_cover: delta / grow, ..p },
        ];
        for g in &grown {
            let bg = covering_bound(g).unwrap();
            prop_assert!(bg >= b, "{:?}: {} < {}", g, bg, b);
        }
    }
}
