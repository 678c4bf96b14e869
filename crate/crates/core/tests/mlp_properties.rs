use std::collections::HashMap;

use mlp_core::mlp::{TraceEvent, Tracer};
use mlp_core::problems::builtin;
use mlp_core::{
    closed_form_linear, cost_recursion, estimate, estimate_traced, rmse_study, sample_runs,
    CostCounters, Estimate, Matrix, MlpConfig, PdeProblem, Reference, StreamKey, Vector,
};

fn linear3() -> PdeProblem {
    builtin("linear-gaussian", 3).unwrap()
}

fn component_stats(runs: &[Estimate]) -> Vec<(f64, f64)> {
    let n = runs.len() as f64;
    let d = runs[0].dim();
    (0..=d)
        .map(|j| {
            let col: Vec<f64> = runs.iter().map(|r| r.to_vec()[j]).collect();
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, (var / n).sqrt())
        })
        .collect()
}

#[test]
fn depth_one_is_unbiased_for_linear_terminal() {
    let p = linear3();
    let runs = sample_runs(
        &p,
        0.0,
        &Vector::zeros(3),
        &MlpConfig::new(1, 4),
        10_000,
        11,
        &CostCounters::new(),
    )
    .unwrap();
    let expected = [0.0, 1.0, 2.0, 3.0];
    for (j, (m, se)) in component_stats(&runs).into_iter().enumerate() {
        assert!(
            (m - expected[j]).abs() < 3.0 * se,
            "component {j}: {m} ± {se}"
        );
    }
}

#[test]
fn depth_one_rmse_follows_monte_carlo_rate() {
    let p = linear3();
    let configs: Vec<MlpConfig> = [2, 8, 32].iter().map(|&m| MlpConfig::new(1, m)).collect();
    let rows = rmse_study(
        &p,
        0.0,
        &Vector::zeros(3),
        &configs,
        2000,
        12,
        &Reference::Exact,
    )
    .unwrap();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.config.branching as f64).ln(), r.value_rmse.ln()))
        .collect();
    let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
    assert!((slope + 0.5).abs() < 0.15, "slope {slope}");
}

#[test]
fn coupled_depth_and_branching_reduce_error() {
    let p = linear3();
    let configs: Vec<MlpConfig> = (1..=3).map(|n| MlpConfig::new(n, n)).collect();
    let rows = rmse_study(
        &p,
        0.0,
        &Vector::zeros(3),
        &configs,
        500,
        13,
        &Reference::Exact,
    )
    .unwrap();
    for w in rows.windows(2) {
        assert!(w[1].value_rmse < w[0].value_rmse);
        assert!(w[1].grad_rmse < w[0].grad_rmse);
    }
}

#[test]
fn constant_terminal_has_zero_error() {
    let p = PdeProblem::builder(2, 1.0)
        .constant_coefficients(Vector::zeros(2), Matrix::identity(2, 2))
        .zero_nonlinearity()
        .terminal(|_| 3.5)
        .exact_solution(|_, _| 3.5, |_, _| Vector::zeros(2))
        .build()
        .unwrap();
    let configs = [
        MlpConfig::new(1, 3),
        MlpConfig::new(2, 2),
        MlpConfig::new(3, 2).with_euler(3),
    ];
    for row in rmse_study(
        &p,
        0.1,
        &Vector::from_element(2, 0.4),
        &configs,
        50,
        14,
        &Reference::Exact,
    )
    .unwrap()
    {
        assert_eq!(row.value_rmse, 0.0);
        assert_eq!(row.grad_rmse, 0.0);
    }
}

#[test]
fn traced_recursion_reuses_sample_points_and_counts_samples() {
    let p = builtin("manufactured-gradient", 2).unwrap();
    let tracer = Tracer::new();
    let (n, m) = (3u32, 2u64);
    let x = Vector::from_vec(vec![0.5, 0.5]);
    estimate_traced(
        &p,
        0.0,
        &x,
        &MlpConfig::new(n, m as u32),
        &StreamKey::root(15),
        &CostCounters::new(),
        &tracer,
    )
    .unwrap();
    let events = tracer.events();

    let mut entered: HashMap<u128, (u32, f64, Vector)> = HashMap::new();
    for e in &events {
        if let TraceEvent::Enter { node, depth, t, x } = e {
            assert!(
                entered.insert(*node, (*depth, *t, x.clone())).is_none(),
                "stream reused"
            );
        }
    }
    let mut terminals: HashMap<u128, u64> = HashMap::new();
    let mut samples: HashMap<(u128, u32), u64> = HashMap::new();
    for e in &events {
        match e {
            TraceEvent::Terminal { node, .. } => *terminals.entry(*node).or_default() += 1,
            TraceEvent::Sample {
                node,
                level,
                r,
                x,
                plus,
                minus,
                ..
            } => {
                *samples.entry((*node, *level)).or_default() += 1;
                let (plus_depth, plus_t, plus_x) = &entered[plus];
                assert_eq!(*plus_depth, *level);
                assert_eq!(plus_t.to_bits(), r.to_bits());
                assert_eq!(plus_x, x);
                match minus {
                    Some(id) => {
                        let (minus_depth, minus_t, minus_x) = &entered[id];
                        assert_eq!(*minus_depth + 1, *level);
                        assert_eq!(minus_t.to_bits(), r.to_bits());
                        assert_eq!(minus_x, x);
                    }
                    None => assert_eq!(*level, 0),
                }
            }
            TraceEvent::Enter { .. } => {}
        }
    }
    for (node, (depth, _, _)) in &entered {
        if *depth == 0 {
            continue;
        }
        assert_eq!(terminals[node], m.pow(*depth));
        for l in 0..*depth {
            assert_eq!(samples[&(*node, l)], m.pow(depth - l));
        }
    }
}

fn quantised_problem(shift: f64) -> PdeProblem {
    // every value of g is a multiple of 2^-20 well inside the exact range, so g + 17 is exact
    PdeProblem::builder(2, 1.0)
        .constant_coefficients(Vector::from_vec(vec![0.1, 0.0]), Matrix::identity(2, 2))
        .nonlinearity(|_, _, _, w| (w[0] - 0.5 * w[1]).sin())
        .terminal(move |x| ((x[0] + 2.0 * x[1]) * 1_048_576.0).round() / 1_048_576.0 + shift)
        .build()
        .unwrap()
}

#[test]
fn shifting_the_terminal_condition_shifts_only_the_value() {
    let base = quantised_problem(0.0);
    let shifted = quantised_problem(17.0);
    let x = Vector::from_vec(vec![0.25, -0.5]);
    for (cfg, seed) in [
        (MlpConfig::new(2, 3), 16),
        (MlpConfig::new(3, 2).with_euler(4), 17),
    ] {
        let key = StreamKey::root(seed);
        let a = estimate(&base, 0.0, &x, &cfg, &key, &CostCounters::new()).unwrap();
        let b = estimate(&shifted, 0.0, &x, &cfg, &key, &CostCounters::new()).unwrap();
        for (ga, gb) in a.gradient.iter().zip(b.gradient.iter()) {
            assert_eq!(ga.to_bits(), gb.to_bits());
        }
        let ulp = f64::EPSILON * 32.0;
        assert!(
            (b.value - a.value - 17.0).abs() <= 4.0 * ulp,
            "{} vs {}",
            a.value,
            b.value
        );
    }
}

#[test]
fn shifting_a_smooth_terminal_condition() {
    let make = |c: f64| {
        PdeProblem::builder(2, 1.0)
            .constant_coefficients(Vector::zeros(2), Matrix::identity(2, 2))
            .nonlinearity(|_, _, _, w| 0.5 * w.norm())
            .terminal(move |x| x[0].sin() + x[1] * x[1] * 0.3 + c)
            .build()
            .unwrap()
    };
    let (base, shifted) = (make(0.0), make(17.0));
    let x = Vector::from_vec(vec![0.3, 0.7]);
    let key = StreamKey::root(18);
    let cfg = MlpConfig::new(3, 3);
    let a = estimate(&base, 0.0, &x, &cfg, &key, &CostCounters::new()).unwrap();
    let b = estimate(&shifted, 0.0, &x, &cfg, &key, &CostCounters::new()).unwrap();
    assert!((b.value - a.value - 17.0).abs() < 1e-9);
    assert!((&b.gradient - &a.gradient).amax() < 1e-9 * (1.0 + a.gradient.amax()));
    let c = base.with_terminal_shift(17.0);
    let e = estimate(&c, 0.0, &x, &cfg, &key, &CostCounters::new()).unwrap();
    assert!((e.value - a.value - 17.0).abs() < 1e-9);
}

/// `v_n(t, x) = a_n(τ)Σx + b_n(τ)` for the manufactured problem, `τ = T - t`.
fn manufactured_picard(n: u32, tau: f64, d: f64, sum_x: f64) -> (f64, f64) {
    let e = 1.0 - (-tau).exp();
    let (a, b) = match n {
        1 => (1.0, -d * e),
        2 => (1.0 - tau, 2.0 * d * tau - 2.0 * d * e),
        3 => (
            1.0 - tau + tau * tau / 2.0,
            d * (3.0 * tau - 1.5 * tau * tau - 3.0 * e),
        ),
        _ => unreachable!(),
    };
    (a * sum_x + b, a)
}

#[test]
fn expectation_of_each_level_is_the_picard_iterate() {
    // f is affine in (v, w), so E[U_n] = Φ(E[U_{n-1}]) = v_n exactly
    let p = builtin("manufactured-gradient", 2).unwrap();
    let x = Vector::from_vec(vec![0.5, 0.5]);
    let t = 0.7;
    for n in 1..=3 {
        let runs = sample_runs(
            &p,
            t,
            &x,
            &MlpConfig::new(n, n),
            4000,
            19 + n as u64,
            &CostCounters::new(),
        )
        .unwrap();
        let (value, slope) = manufactured_picard(n, 1.0 - t, 2.0, 1.0);
        let expected = [value, slope, slope];
        // 3.5σ keeps the family-wise level near 1% over nine comparisons
        for (j, (m, se)) in component_stats(&runs).into_iter().enumerate() {
            assert!(
                (m - expected[j]).abs() < 3.5 * se,
                "n {n} component {j}: {m} ± {se} vs {}",
                expected[j]
            );
        }
    }
}

#[test]
fn euler_scheme_on_geometric_motion_matches_closed_form() {
    let p = builtin("gbm-linear-g", 2).unwrap();
    let x = Vector::from_vec(vec![1.0, 1.2]);
    let exact = closed_form_linear(&p, 0.0, &x).unwrap();
    let runs = sample_runs(
        &p,
        0.0,
        &x,
        &MlpConfig::new(1, 8).with_euler(16),
        4000,
        23,
        &CostCounters::new(),
    )
    .unwrap();
    for (j, (m, se)) in component_stats(&runs).into_iter().enumerate() {
        assert!(
            (m - exact.to_vec()[j]).abs() < 3.0 * se,
            "component {j}: {m} ± {se}"
        );
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = builtin("manufactured-gradient", 2).unwrap();
    let x = Vector::from_vec(vec![0.5, -0.5]);
    let cfg = MlpConfig::new(3, 3);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let one = estimate(
                &p,
                0.0,
                &x,
                &cfg,
                &StreamKey::root(24),
                &CostCounters::new(),
            )
            .unwrap();
            let many = sample_runs(&p, 0.0, &x, &cfg, 16, 24, &CostCounters::new()).unwrap();
            (one, many)
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn measured_cost_stays_below_recursion() {
    let p = builtin("manufactured-gradient", 2).unwrap();
    let counters = CostCounters::new();
    let cfg = MlpConfig::new(2, 2).with_euler(4);
    estimate(
        &p,
        0.0,
        &Vector::zeros(2),
        &cfg,
        &StreamKey::root(25),
        &counters,
    )
    .unwrap();
    let report = counters.snapshot();
    // one step costs a drift and a diffusion evaluation plus d normals
    let step = 2.0 + 2.0;
    assert!((report.total() as f64) <= cost_recursion(2, 2, step, 1.0, 1.0));
    assert_eq!(report.evals_mu, report.evals_sigma);
}
