//! Multilevel Picard estimators of the pair `(u, ∇u)`.
//!
//! With `U_0 = 0` and, for `n ≥ 1`,
//!
//! ```text
//! U_n(t,x) = (g(x), 0) + M^{-n} Σ_i [g(X^{(0,-i)}_T) - g(x)] (1, V^{(0,-i)}_T)
//!          + Σ_{l<n} (T-t) M^{-(n-l)} Σ_i ϱ(ξ)^{-1} [f(R, X_R, U_l) - 1{l≥1} f(R, X_R, U_{l-1})] (1, V_R),
//! ```
//!
//! where `R = t + (T - t)ξ` and every `(ξ, X, V)` sample and every recursive
//! copy draws from its own [`StreamKey`]. Paths are sampled exactly when no
//! Euler step count is configured.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cost::{CostCounters, CostReport};
use crate::error::{Error, Result};
use crate::model::{PdeProblem, Vector};
use crate::paths::simulate_with;
use crate::sampler::{Sign, StreamKey, TimeSampler};

/// Default hard cap on counted operations per estimate.
pub const DEFAULT_COST_CAP: u64 = 1_000_000_000;

/// Value and gradient estimate at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub gradient: Vector,
}

impl Estimate {
    pub fn zero(dim: usize) -> Self {
        Self {
            value: 0.0,
            gradient: Vector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    /// `(value, gradient)` flattened into `ℝ^{d+1}`.
    pub fn to_vec(&self) -> Vec<f64> {
        std::iter::once(self.value)
            .chain(self.gradient.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    pub depth: u32,
    pub branching: u32,
    /// `None` selects the exact-path scheme.
    pub euler_steps: Option<u32>,
    pub alpha: f64,
    pub cost_cap: u64,
}

impl MlpConfig {
    pub fn new(depth: u32, branching: u32) -> Self {
        Self {
            depth,
            branching,
            euler_steps: None,
            alpha: 0.5,
            cost_cap: DEFAULT_COST_CAP,
        }
    }

    pub fn with_euler(mut self, steps: u32) -> Self {
        self.euler_steps = Some(steps);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_cost_cap(mut self, cap: u64) -> Self {
        self.cost_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.branching == 0 {
            return Err(Error::InvalidConfig(
                "branching M must be at least 1".into(),
            ));
        }
        if self.euler_steps == Some(0) {
            return Err(Error::InvalidConfig(
                "Euler step count N must be at least 1".into(),
            ));
        }
        if self.depth > 0 && (self.branching as f64).powi(self.depth as i32) > u32::MAX as f64 {
            return Err(Error::InvalidConfig(
                "M^n exceeds the supported sample count".into(),
            ));
        }
        TimeSampler::new(self.alpha)?;
        Ok(())
    }
}

/// Record of the recursion tree, for instrumented runs.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    /// A recursive estimator was entered.
    Enter {
        node: u128,
        depth: u32,
        t: f64,
        x: Vector,
    },
    /// A level-`l` outer sample of `node` and the recursive copies it fed.
    Sample {
        node: u128,
        level: u32,
        replicate: u64,
        r: f64,
        x: Vector,
        plus: u128,
        minus: Option<u128>,
    },
    /// A terminal sample of `node`.
    Terminal { node: u128, replicate: u64 },
}

#[derive(Debug, Default)]
pub struct Tracer {
    events: Mutex<Vec<TraceEvent>>,
}

impl Tracer {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, event: TraceEvent) {
        self.events.lock().expect("tracer poisoned").push(event);
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.events.lock().expect("tracer poisoned").clone()
    }
}

struct Engine<'a> {
    problem: &'a PdeProblem,
    config: MlpConfig,
    sampler: TimeSampler,
    counters: &'a CostCounters,
    tracer: Option<&'a Tracer>,
}

impl Engine<'_> {
    fn check_budget(&self) -> Result<()> {
        if self.counters.total() > self.config.cost_cap {
            return Err(Error::RecursionBudgetExceeded {
                limit: self.config.cost_cap,
            });
        }
        Ok(())
    }

    /// Sums contributions in index order whether or not they were computed in parallel.
    fn collect<F>(&self, count: u64, parallel: bool, term: F) -> Result<(f64, Vector)>
    where
        F: Fn(u64) -> Result<(f64, Vector)> + Sync + Send,
    {
        let d = self.problem.dim();
        let parts: Vec<(f64, Vector)> = if parallel {
            (1..=count)
                .into_par_iter()
                .map(&term)
                .collect::<Result<_>>()?
        } else {
            (1..=count).map(&term).collect::<Result<_>>()?
        };
        let mut value = 0.0;
        let mut gradient = Vector::zeros(d);
        for (v, g) in parts {
            value += v;
            gradient += g;
        }
        Ok((value, gradient))
    }

    fn run(&self, n: u32, t: f64, x: &Vector, key: &StreamKey, parallel: bool) -> Result<Estimate> {
        let d = self.problem.dim();
        if let Some(tr) = self.tracer {
            tr.record(TraceEvent::Enter {
                node: key.id(),
                depth: n,
                t,
                x: x.clone(),
            });
        }
        if n == 0 {
            return Ok(Estimate::zero(d));
        }
        self.check_budget()?;
        let horizon = self.problem.horizon();
        let m = self.config.branching as u64;
        let steps = self.config.euler_steps;

        let g_x = self.problem.terminal_at(x)?;
        self.counters.add_g(1);

        let terminal_count = m.pow(n);
        let (t_val, t_grad) = self.collect(terminal_count, parallel, |i| {
            let mut rng = key.sample(0, -(i as i64)).rng();
            let path = simulate_with(self.problem, t, x, horizon, steps, &mut rng, self.counters)?;
            let bracket = self.problem.terminal_at(&path.x_end)? - g_x;
            self.counters.add_g(1);
            if let Some(tr) = self.tracer {
                tr.record(TraceEvent::Terminal {
                    node: key.id(),
                    replicate: i,
                });
            }
            Ok((bracket, path.v_end * bracket))
        })?;
        let scale = 1.0 / terminal_count as f64;
        let mut value = g_x + t_val * scale;
        let mut gradient = t_grad * scale;

        for l in 0..n {
            let count = m.pow(n - l);
            let (l_val, l_grad) = self.collect(count, parallel, |i| {
                self.check_budget()?;
                let mut rng = key.sample(l as i64, i as i64).rng();
                let (r, xi) = self.sampler.sample_time_with_xi(t, horizon, &mut rng)?;
                self.counters.add_scalars(1);
                let path = simulate_with(self.problem, t, x, r, steps, &mut rng, self.counters)?;
                let x_r = &path.x_end;

                let plus_key = key.child(l as i64, i, Sign::Plus);
                let upper = self.run(l, r, x_r, &plus_key, false)?;
                let mut diff =
                    self.problem
                        .nonlinearity_at(r, x_r, upper.value, &upper.gradient)?;
                self.counters.add_f(1);
                let mut minus_id = None;
                if l >= 1 {
                    let minus_key = key.child(-(l as i64), i, Sign::Minus);
                    minus_id = Some(minus_key.id());
                    let lower = self.run(l - 1, r, x_r, &minus_key, false)?;
                    diff -= self
                        .problem
                        .nonlinearity_at(r, x_r, lower.value, &lower.gradient)?;
                    self.counters.add_f(1);
                }
                if let Some(tr) = self.tracer {
                    tr.record(TraceEvent::Sample {
                        node: key.id(),
                        level: l,
                        replicate: i,
                        r,
                        x: x_r.clone(),
                        plus: plus_key.id(),
                        minus: minus_id,
                    });
                }
                let weighted = self.sampler.weight_at(xi) * diff;
                Ok((weighted, &path.v_end * weighted))
            })?;
            let factor = (horizon - t) / count as f64;
            value += l_val * factor;
            gradient += l_grad * factor;
        }

        let est = Estimate { value, gradient };
        if !est.is_finite() {
            return Err(Error::NonFiniteCoefficient("estimate"));
        }
        Ok(est)
    }
}

fn prepare(problem: &PdeProblem, t: f64, x: &Vector, config: &MlpConfig) -> Result<()> {
    config.validate()?;
    problem.check_point(x)?;
    if !(t >= 0.0 && t < problem.horizon()) {
        return Err(Error::DegenerateInterval {
            start: t,
            end: problem.horizon(),
        });
    }
    if config.euler_steps.is_none() && !problem.is_exactly_simulable() {
        return Err(Error::NotExactlySimulable);
    }
    Ok(())
}

/// One realisation of `U_{n,M}(t, x)` (or its Euler variant).
///
/// Top-level replicates run on the current rayon pool; the result does not
/// depend on the number of workers.
pub fn estimate(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    config: &MlpConfig,
    stream: &StreamKey,
    counters: &CostCounters,
) -> Result<Estimate> {
    estimate_inner(problem, t, x, config, stream, counters, None, true)
}

/// Sequential [`estimate`] that records the recursion tree into `tracer`.
pub fn estimate_traced(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    config: &MlpConfig,
    stream: &StreamKey,
    counters: &CostCounters,
    tracer: &Tracer,
) -> Result<Estimate> {
    estimate_inner(problem, t, x, config, stream, counters, Some(tracer), false)
}

#[allow(clippy::too_many_arguments)]
fn estimate_inner(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    config: &MlpConfig,
    stream: &StreamKey,
    counters: &CostCounters,
    tracer: Option<&Tracer>,
    parallel: bool,
) -> Result<Estimate> {
    prepare(problem, t, x, config)?;
    let local = CostCounters::new();
    let engine = Engine {
        problem,
        config: *config,
        sampler: TimeSampler::new(config.alpha)?,
        counters: &local,
        tracer,
    };
    let out = engine.run(config.depth, t, x, stream, parallel);
    counters.absorb(&local.snapshot());
    out
}

/// `runs` independent top-level realisations, run `r` drawing from
/// `StreamKey::root(seed).run(r)`.
///
/// The cost cap applies to each run separately; `counters` receives the sum.
pub fn sample_runs(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    config: &MlpConfig,
    runs: usize,
    seed: u64,
    counters: &CostCounters,
) -> Result<Vec<Estimate>> {
    prepare(problem, t, x, config)?;
    let root = StreamKey::root(seed);
    let sampler = TimeSampler::new(config.alpha)?;
    (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let local = CostCounters::new();
            let engine = Engine {
                problem,
                config: *config,
                sampler,
                counters: &local,
                tracer: None,
            };
            let out = engine.run(config.depth, t, x, &root.run(r), false);
            counters.absorb(&local.snapshot());
            out
        })
        .collect()
}

/// What the RMSE of a study is measured against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// The problem's exact solution.
    Exact,
    /// A fixed reference estimate, e.g. from the Picard oracle.
    Fixed(Estimate),
    /// The empirical mean of the runs themselves (RMSE becomes the spread).
    SampleMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub config: MlpConfig,
    pub runs: usize,
    pub value_mean: f64,
    pub gradient_mean: Vector,
    pub value_rmse: f64,
    pub grad_rmse: f64,
    /// Jackknife standard error of `value_rmse`.
    pub stderr_value: f64,
    /// Jackknife standard error of `grad_rmse`.
    pub stderr_grad: f64,
    pub wall_time: Duration,
    pub counters: CostReport,
}

/// Root mean square of `errors` and its leave-one-out jackknife standard error.
pub fn rmse_with_jackknife(squared_errors: &[f64]) -> (f64, f64) {
    let n = squared_errors.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let total: f64 = squared_errors.iter().sum();
    let rmse = (total / n as f64).sqrt();
    if n == 1 {
        return (rmse, f64::NAN);
    }
    let leave_out: Vec<f64> = squared_errors
        .iter()
        .map(|e| ((total - e).max(0.0) / (n - 1) as f64).sqrt())
        .collect();
    let mean = leave_out.iter().sum::<f64>() / n as f64;
    let var = leave_out
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        * (n - 1) as f64
        / n as f64;
    (rmse, var.sqrt())
}

fn reference_at(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    reference: &Reference,
    runs: &[Estimate],
) -> Result<Estimate> {
    match reference {
        Reference::Exact => {
            let exact = problem.exact_solution().ok_or(Error::MissingReference)?;
            Ok(Estimate {
                value: (exact.value)(t, x),
                gradient: (exact.gradient)(t, x),
            })
        }
        Reference::Fixed(e) => Ok(e.clone()),
        Reference::SampleMean => {
            let n = runs.len().max(1) as f64;
            let mut mean = Estimate::zero(problem.dim());
            for r in runs {
                mean.value += r.value;
                mean.gradient += &r.gradient;
            }
            mean.value /= n;
            mean.gradient /= n;
            Ok(mean)
        }
    }
}

/// Summarises `runs` against `reference`.
pub fn summarize(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    config: &MlpConfig,
    runs: &[Estimate],
    reference: &Reference,
    wall_time: Duration,
    counters: CostReport,
) -> Result<StudyRow> {
    let target = reference_at(problem, t, x, reference, runs)?;
    let n = runs.len().max(1) as f64;
    let value_mean = runs.iter().map(|r| r.value).sum::<f64>() / n;
    let mut gradient_mean = Vector::zeros(problem.dim());
    for r in runs {
        gradient_mean += &r.gradient;
    }
    gradient_mean /= n;
    let value_sq: Vec<f64> = runs
        .iter()
        .map(|r| (r.value - target.value).powi(2))
        .collect();
    let grad_sq: Vec<f64> = runs
        .iter()
        .map(|r| (&r.gradient - &target.gradient).norm_squared())
        .collect();
    let (value_rmse, stderr_value) = rmse_with_jackknife(&value_sq);
    let (grad_rmse, stderr_grad) = rmse_with_jackknife(&grad_sq);
    Ok(StudyRow {
        config: *config,
        runs: runs.len(),
        value_mean,
        gradient_mean,
        value_rmse,
        grad_rmse,
        stderr_value,
        stderr_grad,
        wall_time,
        counters,
    })
}

/// RMSE of each configuration over `runs` independent realisations.
pub fn rmse_study(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    configs: &[MlpConfig],
    runs: usize,
    seed: u64,
    reference: &Reference,
) -> Result<Vec<StudyRow>> {
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    if matches!(reference, Reference::Exact) && problem.exact_solution().is_none() {
        return Err(Error::MissingReference);
    }
    configs
        .iter()
        .map(|config| {
            let counters = CostCounters::new();
            let start = Instant::now();
            let samples = sample_runs(problem, t, x, config, runs, seed, &counters)?;
            let wall = start.elapsed();
            summarize(
                problem,
                t,
                x,
                config,
                &samples,
                reference,
                wall,
                counters.snapshot(),
            )
        })
        .collect()
}
