//! Simulation of the state `X`, the derivative flow `D = ∂X/∂x` and the
//! Bismut–Elworthy–Li weight
//!
//! ```text
//! V_s = (s - t)^{-1} ∫_t^s (σ(X_r)^{-1} D_r)ᵀ dW_r
//! ```
//!
//! along one Brownian path, either with the Euler–Maruyama scheme or, for
//! constant coefficients, exactly.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cost::CostCounters;
use crate::error::{Error, Result};
use crate::model::{CoefficientForm, Matrix, PdeProblem, Vector};
use crate::sampler::StreamKey;

/// Joint state of one trajectory at the query time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub x_end: Vector,
    /// Column `k` is `∂X_s/∂x_k`.
    pub d_end: Matrix,
    pub v_end: Vector,
    /// Brownian increment `W_s - W_t` that drove the path.
    pub w_end: Vector,
}

impl PathState {
    fn initial(x: &Vector) -> Self {
        let d = x.len();
        Self {
            x_end: x.clone(),
            d_end: Matrix::identity(d, d),
            v_end: Vector::zeros(d),
            w_end: Vector::zeros(d),
        }
    }
}

/// Step layout of the Euler grid `t + k(T - t)/N` truncated at `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerGrid {
    pub t: f64,
    pub s: f64,
    pub step: f64,
    pub n_steps_full: u32,
    pub last_dt: f64,
}

impl EulerGrid {
    pub fn new(t: f64, s: f64, horizon: f64, n_steps: u32) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidConfig(
                "Euler step count must be at least 1".into(),
            ));
        }
        if !(t < horizon) || !(t <= s) || !(s <= horizon) {
            return Err(Error::DegenerateInterval { start: t, end: s });
        }
        let step = (horizon - t) / n_steps as f64;
        if s == horizon {
            return Ok(Self {
                t,
                s,
                step,
                n_steps_full: n_steps,
                last_dt: 0.0,
            });
        }
        // κ_N(s) = t + ⌊N(s - t)/(T - t)⌋ (T - t)/N
        let mut k = (((s - t) * n_steps as f64 / (horizon - t)).floor() as u32).min(n_steps - 1);
        if t + k as f64 * step > s {
            k = k.saturating_sub(1);
        }
        while k + 1 < n_steps && t + (k + 1) as f64 * step <= s {
            k += 1;
        }
        let last_dt = (s - (t + k as f64 * step)).max(0.0);
        Ok(Self {
            t,
            s,
            step,
            n_steps_full: k,
            last_dt,
        })
    }

    /// Step lengths in order; the partial last step is omitted when empty.
    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        let full = std::iter::repeat_n(self.step, self.n_steps_full as usize);
        full.chain((self.last_dt > 0.0).then_some(self.last_dt))
    }

    pub fn step_count(&self) -> u32 {
        self.n_steps_full + u32::from(self.last_dt > 0.0)
    }
}

/// LU inverse with partial pivoting.
///
/// Fails with [`Error::SingularDiffusion`] when a pivot falls below
/// `1e-12·‖A‖_max`.
pub fn invert(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCoefficient("matrix to invert"));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = 1e-12 * scale;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (pivot_row, pivot) =
            (col..n)
                .map(|r| (r, lu[(r, col)].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if !(pivot > threshold) {
            return Err(Error::SingularDiffusion { pivot, threshold });
        }
        if pivot_row != col {
            lu.swap_rows(pivot_row, col);
            perm.swap(pivot_row, col);
        }
        let diag = lu[(col, col)];
        for r in col + 1..n {
            let factor = lu[(r, col)] / diag;
            lu[(r, col)] = factor;
            for c in col + 1..n {
                lu[(r, c)] -= factor * lu[(col, c)];
            }
        }
    }
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        // solve L U x = P e_j
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut v = if perm[i] == j { 1.0 } else { 0.0 };
            for k in 0..i {
                v -= lu[(i, k)] * x[k];
            }
            x[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..n {
                v -= lu[(i, k)] * x[k];
            }
            x[i] = v / lu[(i, i)];
        }
        for i in 0..n {
            inv[(i, j)] = x[i];
        }
    }
    Ok(inv)
}

fn normals<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn check_interval(problem: &PdeProblem, t: f64, s: f64) -> Result<()> {
    let horizon = problem.horizon();
    if !(t >= 0.0) || !(t < horizon) || !(s >= t) || !(s <= horizon) {
        return Err(Error::DegenerateInterval { start: t, end: s });
    }
    Ok(())
}

/// Euler–Maruyama simulation of `(X, D, V)` from `(t, x)` to `s` on the grid
/// with `n_steps` steps of length `(T - t)/N`, drawing from `stream`.
pub fn simulate_euler(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    s: f64,
    n_steps: u32,
    stream: &StreamKey,
    counters: &CostCounters,
) -> Result<PathState> {
    simulate_euler_with(problem, t, x, s, n_steps, &mut stream.rng(), counters)
}

/// [`simulate_euler`] drawing from a caller-supplied generator.
///
/// Every update in a step uses the same increment `ΔW` and the pre-step
/// `(X, D)`; the V accumulator is divided by `s - t` once at the end.
pub fn simulate_euler_with<R: Rng + ?Sized>(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    s: f64,
    n_steps: u32,
    rng: &mut R,
    counters: &CostCounters,
) -> Result<PathState> {
    problem.check_point(x)?;
    check_interval(problem, t, s)?;
    let grid = EulerGrid::new(t, s, problem.horizon(), n_steps)?;
    if s == t {
        return Ok(PathState::initial(x));
    }
    let d = problem.dim();
    let constant = matches!(problem.coefficients(), CoefficientForm::Constant { .. });
    let mut state = PathState::initial(x);
    let mut v_acc = Vector::zeros(d);
    for dt in grid.steps() {
        let dw = normals(rng, d) * dt.sqrt();
        counters.add_step(d as u64);

        let mu = problem.drift_at(&state.x_end)?;
        let sigma = problem.diffusion_at(&state.x_end)?;
        let sigma_inv = invert(&sigma)?;

        v_acc += (&sigma_inv * &state.d_end).transpose() * &dw;

        if !constant {
            let jac_mu = problem.drift_jacobian_at(&state.x_end)?;
            let jac_sigma = problem.diffusion_jacobians_at(&state.x_end)?;
            let mut increment = &jac_mu * &state.d_end * dt;
            for (j, js) in jac_sigma.iter().enumerate() {
                increment += js * &state.d_end * dw[j];
            }
            state.d_end += increment;
        }

        state.x_end += mu * dt + &sigma * &dw;
        state.w_end += &dw;
    }
    state.v_end = v_acc / (s - t);
    if state
        .x_end
        .iter()
        .chain(state.d_end.iter())
        .chain(state.v_end.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteCoefficient("Euler path"));
    }
    Ok(state)
}

/// Exact draw of `(X_s, V_s)` for constant coefficients:
/// `X = x + μ(s - t) + σΔW`, `D = I`, `V = σ^{-ᵀ}ΔW / (s - t)`.
pub fn simulate_exact(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    s: f64,
    stream: &StreamKey,
    counters: &CostCounters,
) -> Result<PathState> {
    simulate_exact_with(problem, t, x, s, &mut stream.rng(), counters)
}

pub fn simulate_exact_with<R: Rng + ?Sized>(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    s: f64,
    rng: &mut R,
    counters: &CostCounters,
) -> Result<PathState> {
    if !problem.is_exactly_simulable() {
        return Err(Error::NotExactlySimulable);
    }
    problem.check_point(x)?;
    check_interval(problem, t, s)?;
    if s == t {
        return Ok(PathState::initial(x));
    }
    let d = problem.dim();
    let dt = s - t;
    let dw = normals(rng, d) * dt.sqrt();
    counters.add_step(d as u64);
    let mu = problem.drift_at(x)?;
    let sigma = problem.diffusion_at(x)?;
    let sigma_inv = invert(&sigma)?;
    let v_end = (sigma_inv.transpose() * &dw) / dt;
    let mut x_end = x.clone();
    x_end += mu * dt + &sigma * &dw;
    Ok(PathState {
        x_end,
        d_end: Matrix::identity(d, d),
        v_end,
        w_end: dw,
    })
}

/// Dispatches to [`simulate_exact_with`] when `euler_steps` is `None`.
pub fn simulate_with<R: Rng + ?Sized>(
    problem: &PdeProblem,
    t: f64,
    x: &Vector,
    s: f64,
    euler_steps: Option<u32>,
    rng: &mut R,
    counters: &CostCounters,
) -> Result<PathState> {
    match euler_steps {
        Some(n) => simulate_euler_with(problem, t, x, s, n, rng, counters),
        None => simulate_exact_with(problem, t, x, s, rng, counters),
    }
}
