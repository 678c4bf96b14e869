use mlp_core::model::jacobian_fd;
use mlp_core::paths::EulerGrid;
use mlp_core::problems::{builtin, BUILTIN_KEYS};
use mlp_core::{
    estimate, CostCounters, Estimate, Matrix, MlpConfig, Sign, StreamKey, TimeSampler, Vector,
};
use proptest::prelude::*;

fn sign(b: bool) -> Sign {
    if b {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

proptest! {
    #[test]
    fn child_keys_are_injective(
        seed in any::<u64>(),
        a in (-8i64..8, 0u64..64, any::<bool>()),
        b in (-8i64..8, 0u64..64, any::<bool>()),
    ) {
        let root = StreamKey::root(seed);
        let ka = root.child(a.0, a.1, sign(a.2));
        let kb = root.child(b.0, b.1, sign(b.2));
        prop_assert_eq!(ka.id() == kb.id(), a == b);
    }

    #[test]
    fn density_is_symmetric_on_dyadics(alpha in 0.5f64..0.99, k in 1u64..(1 << 20)) {
        let s = TimeSampler::new(alpha).unwrap();
        let z = k as f64 / (1u64 << 20) as f64;
        prop_assert_eq!(s.density(z).unwrap(), s.density(1.0 - z).unwrap());
    }

    #[test]
    fn euler_grid_covers_the_interval(t in 0.0f64..0.9, frac in 0.0f64..1.0, n in 1u32..200) {
        let horizon = 1.0;
        let s = t + (horizon - t) * frac;
        let grid = EulerGrid::new(t, s, horizon, n).unwrap();
        let steps: Vec<f64> = grid.steps().collect();
        prop_assert_eq!(steps.len() as u32, grid.step_count());
        prop_assert!(grid.last_dt < grid.step);
        prop_assert!(steps.iter().all(|&dt| dt > 0.0));
        let total: f64 = steps.iter().sum();
        prop_assert!((total - (s - t)).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_are_exact_on_linear_maps(
        entries in prop::collection::vec(-3.0f64..3.0, 6),
        x in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let a = Matrix::from_row_slice(2, 3, &entries);
        let a2 = a.clone();
        let j = jacobian_fd(move |v: &Vector| &a2 * v, &Vector::from_vec(x), 1e-3).unwrap();
        prop_assert!((j - a).amax() < 1e-9);
    }

    #[test]
    fn depth_zero_is_always_zero(
        key_index in 0usize..4,
        d in 1usize..6,
        t in 0.0f64..0.25,
        m in 1u32..6,
        seed in any::<u64>(),
    ) {
        let key = BUILTIN_KEYS[key_index];
        let p = builtin(key, d).unwrap();
        let x = Vector::from_element(d, 1.0);
        let cfg = if p.is_exactly_simulable() { MlpConfig::new(0, m) } else { MlpConfig::new(0, m).with_euler(4) };
        let e = estimate(&p, t, &x, &cfg, &StreamKey::root(seed), &CostCounters::new()).unwrap();
        prop_assert_eq!(e, Estimate::zero(d));
    }
}
