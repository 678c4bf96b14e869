//! Reference solutions: closed forms for linear problems and a brute-force
//! nested Monte Carlo Picard iteration `v_k = Φ(v_{k-1})`, `v_0 = 0`, with
//!
//! ```text
//! Φ(v)(t,x) = E[g(X_T)(1, V_T)] + ∫_t^T E[f(s, X_s, v(s, X_s))(1, V_s)] ds.
//! ```
//!
//! The time integral is a Gauss rule with nodes strictly inside `(t, T)`.
//! `s ↦ E[f(s, X_s, v)(1, V_s)]` is smooth up to `s = t` for smooth data,
//! so Gauss–Legendre converges geometrically. The `ϱ`-weighted rule, with
//! the integrand re-weighted by `ϱ^{-1}`, only converges algebraically
//! since `ϱ^{-1}` vanishes like a square root at both ends.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::cost::CostCounters;
use crate::error::{Error, Result};
use crate::mlp::Estimate;
use crate::model::{CoefficientForm, PdeProblem, TerminalForm, Vector};
use crate::paths::simulate_with;
use crate::sampler::{gauss_legendre_rule, Namespace, StreamKey, TimeSampler};

/// Quadrature for the time integral of one Picard step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeRule {
    #[default]
    GaussLegendre,
    /// Gauss rule for the weight `ϱ`, integrand multiplied by `ϱ^{-1}`.
    RhoWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub iterations: u32,
    /// Samples for the outermost expectation.
    pub outer_samples: u32,
    /// Samples for each nested evaluation of `v_{k-1}`.
    pub inner_samples: u32,
    pub quadrature_nodes: u32,
    pub time_rule: TimeRule,
    /// Euler steps for problems without exact simulation.
    pub euler_steps: u32,
    pub alpha: f64,
    /// Cap on the number of simulated paths.
    pub path_budget: u64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            outer_samples: 1000,
            inner_samples: 8,
            quadrature_nodes: 4,
            time_rule: TimeRule::GaussLegendre,
            euler_steps: 16,
            alpha: 0.5,
            path_budget: 2_000_000_000,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.outer_samples == 0 || self.inner_samples == 0 {
            return Err(Error::InvalidConfig(
                "Picard iterations and sample counts must be positive".into(),
            ));
        }
        if self.quadrature_nodes == 0 || self.euler_steps == 0 {
            return Err(Error::InvalidConfig(
                "quadrature nodes and Euler steps must be positive".into(),
            ));
        }
        if self.iterations > 4 {
            return Err(Error::InvalidConfig(
                "the nested Picard oracle supports at most 4 iterations".into(),
            ));
        }
        TimeSampler::new(self.alpha)?;
        Ok(())
    }
}

/// Gauss quadrature for `∫₀¹ h(z) ϱ(z) dz`: nodes in `(0, 1)` and weights
/// summing to one.
///
/// Golub–Welsch on the Jacobi matrix of the Gegenbauer weight
/// `(1 - y²)^{-α}` on `[-1, 1]`, mapped by `z = (1 + y)/2`.
pub fn rho_quadrature(alpha: f64, nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    TimeSampler::new(alpha)?;
    if nodes == 0 {
        return Err(Error::InvalidConfig(
            "quadrature needs at least one node".into(),
        ));
    }
    let lambda = -alpha;
    let mut jacobi = DMatrix::<f64>::zeros(nodes, nodes);
    for k in 1..nodes {
        let kf = k as f64;
        // monic recurrence coefficient β_k for weight (1 - y²)^λ
        let beta = if k == 1 {
            1.0 / (3.0 + 2.0 * lambda)
        } else {
            kf * (kf + 2.0 * lambda)
                / ((2.0 * kf + 2.0 * lambda + 1.0) * (2.0 * kf + 2.0 * lambda - 1.0))
        };
        jacobi[(k, k - 1)] = beta.sqrt();
        jacobi[(k - 1, k)] = beta.sqrt();
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..nodes)
        .map(|i| {
            let y = eig.eigenvalues[i];
            let w = eig.eigenvectors[(0, i)].powi(2);
            ((1.0 + y) / 2.0, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Nodes in `(0, 1)` and weights for `∫₀¹ h(z) dz`.
pub fn time_rule(config: &PicardConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = config.quadrature_nodes as usize;
    match config.time_rule {
        TimeRule::GaussLegendre => {
            if n == 0 {
                return Err(Error::InvalidConfig(
                    "quadrature needs at least one node".into(),
                ));
            }
            let (y, w) = gauss_legendre_rule(n);
            Ok((
                y.iter().map(|y| (1.0 + y) / 2.0).collect(),
                w.iter().map(|w| w / 2.0).collect(),
            ))
        }
        TimeRule::RhoWeighted => {
            let sampler = TimeSampler::new(config.alpha)?;
            let (z, w) = rho_quadrature(config.alpha, n)?;
            let w = z
                .iter()
                .zip(&w)
                .map(|(&z, &w)| w * sampler.weight_at(z))
                .collect();
            Ok((z, w))
        }
    }
}

/// Reference estimate together with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEstimate {
    pub estimate: Estimate,
    /// Standard error of each component, from the outer samples.
    pub std_error: Estimate,
}

struct Picard<'a> {
    problem: &'a PdeProblem,
    config: PicardConfig,
    nodes: Vec<f64>,
    /// Quadrature weights including any `ϱ^{-1}` factor; they sum to one
    /// on constants.
    weights: Vec<f64>,
    counters: CostCounters,
    paths: AtomicU64,
}

impl Picard<'_> {
    fn steps(&self) -> Option<u32> {
        (!self.problem.is_exactly_simulable()).then_some(self.config.euler_steps)
    }

    fn charge(&self, n: u64) -> Result<()> {
        let used = self.paths.fetch_add(n, Ordering::Relaxed) + n;
        if used > self.config.path_budget {
            return Err(Error::BudgetExceeded {
                limit: self.config.path_budget,
            });
        }
        Ok(())
    }

    /// One sample of `g(X_T)(1, V_T) + (T-t) Σ_j w_j f(s_j, X_{s_j}, v_{k-1})(1, V_{s_j})`.
    fn sample(&self, k: u32, t: f64, x: &Vector, key: &StreamKey) -> Result<Vec<f64>> {
        let horizon = self.problem.horizon();
        let d = self.problem.dim();
        self.charge(1 + self.nodes.len() as u64)?;
        let mut rng = key.rng();
        let path = simulate_with(
            self.problem,
            t,
            x,
            horizon,
            self.steps(),
            &mut rng,
            &self.counters,
        )?;
        let g = self.problem.terminal_at(&path.x_end)?;
        let mut out = vec![0.0; d + 1];
        out[0] = g;
        for i in 0..d {
            out[i + 1] = g * path.v_end[i];
        }
        if self.problem.has_zero_nonlinearity() {
            return Ok(out);
        }
        for (j, (&z, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let s = t + (horizon - t) * z;
            let mut node_rng = key.sample(k as i64, j as i64).rng();
            let p = simulate_with(
                self.problem,
                t,
                x,
                s,
                self.steps(),
                &mut node_rng,
                &self.counters,
            )?;
            let inner = self.value(
                k - 1,
                s,
                &p.x_end,
                &key.sample(k as i64, -(j as i64) - 1),
                false,
            )?;
            let f = self
                .problem
                .nonlinearity_at(s, &p.x_end, inner.value, &inner.gradient)?;
            let c = (horizon - t) * w * f;
            out[0] += c;
            for i in 0..d {
                out[i + 1] += c * p.v_end[i];
            }
        }
        Ok(out)
    }

    fn samples(
        &self,
        k: u32,
        t: f64,
        x: &Vector,
        key: &StreamKey,
        count: u32,
        parallel: bool,
    ) -> Result<Vec<Vec<f64>>> {
        if parallel {
            (0..count as u64)
                .into_par_iter()
                .map(|r| self.sample(k, t, x, &key.run(r)))
                .collect()
        } else {
            (0..count as u64)
                .map(|r| self.sample(k, t, x, &key.run(r)))
                .collect()
        }
    }

    fn value(&self, k: u32, t: f64, x: &Vector, key: &StreamKey, top: bool) -> Result<Estimate> {
        let d = self.problem.dim();
        if k == 0 {
            return Ok(Estimate::zero(d));
        }
        let count = if top {
            self.config.outer_samples
        } else {
            self.config.inner_samples
        };
        let samples = self.samples(k, t, x, key, count, top)?;
        Ok(mean(&samples, d).0)
    }
}

fn mean(samples: &[Vec<f64>], d: usize) -> (Estimate, Estimate) {
    let n = samples.len() as f64;
    let mut m = vec![0.0; d + 1];
    for s in samples {
        for (a, b) in m.iter_mut().zip(s) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; d + 1];
    for s in samples {
        for i in 0..=d {
            var[i] += (s[i] - m[i]).powi(2);
        }
    }
    let se: Vec<f64> = var
        .iter()
        .map(|v| {
            if n > 1.0 {
                (v / (n - 1.0) / n).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let to_est = |v: &[f64]| Estimate {
        value: v[0],
        gradient: Vector::from_column_slice(&v[1..]),
    };
    (to_est(&m), to_est(&se))
}

/// Nested Monte Carlo approximation of the Picard iterate `v_K(t, x)`.
///
/// Randomness is drawn from the oracle namespace of `seed`, disjoint from
/// every estimator stream. Cost grows like `(inner·nodes)^{K-1}`.
pub fn picard_reference(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    config: &PicardConfig,
    seed: u64,
) -> Result<ReferenceEstimate> {
    config.validate()?;
    problem.check_point(x)?;
    if problem.dim() > 3 {
        return Err(Error::InvalidConfig(
            "the nested Picard oracle is limited to d ≤ 3".into(),
        ));
    }
    if !(t >= 0.0 && t < problem.horizon()) {
        return Err(Error::DegenerateInterval {
            start: t,
            end: problem.horizon(),
        });
    }
    let (nodes, weights) = time_rule(config)?;
    let oracle = Picard {
        problem,
        config: *config,
        nodes,
        weights,
        counters: CostCounters::new(),
        paths: AtomicU64::new(0),
    };
    let key = StreamKey::in_namespace(seed, Namespace::Oracle);
    let samples = oracle.samples(config.iterations, t, x, &key, config.outer_samples, true)?;
    let (estimate, std_error) = mean(&samples, problem.dim());
    Ok(ReferenceEstimate {
        estimate,
        std_error,
    })
}

/// `(E[g(X_T)], ∇ₓE[g(X_T)])` in closed form for `f ≡ 0`, Gaussian or
/// geometric `X`, and affine or exponential-affine `g`.
pub fn closed_form_linear(problem: &PdeProblem, t: f64, x: &Vector) -> Result<Estimate> {
    problem.check_point(x)?;
    if !problem.has_zero_nonlinearity() {
        return Err(Error::UnsupportedTerminal);
    }
    let tau = problem.horizon() - t;
    match (problem.coefficients(), problem.terminal_form()) {
        (CoefficientForm::Constant { drift, .. }, TerminalForm::Affine { slope, intercept }) => {
            let mean = x + drift * tau;
            Ok(Estimate {
                value: slope.dot(&mean) + intercept,
                gradient: slope.clone(),
            })
        }
        (CoefficientForm::Constant { drift, diffusion }, TerminalForm::ExpAffine { slope }) => {
            let mean = x + drift * tau;
            let st = diffusion.transpose() * slope;
            let value = (slope.dot(&mean) + 0.5 * st.norm_squared() * tau).exp();
            Ok(Estimate {
                value,
                gradient: slope * value,
            })
        }
        (CoefficientForm::Geometric { rate, .. }, TerminalForm::Affine { slope, intercept }) => {
            let growth = (rate * tau).exp();
            Ok(Estimate {
                value: slope.dot(x) * growth + intercept,
                gradient: slope * growth,
            })
        }
        _ => Err(Error::UnsupportedTerminal),
    }
}
