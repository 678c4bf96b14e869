//! PDE problem definitions and sampling-based checks of the standing
//! assumptions (Lipschitz coefficients, strong ellipticity).
//!
//! A [`PdeProblem`] bundles the dimension `d`, horizon `T`, drift `μ`,
//! diffusion `σ`, nonlinearity `f(t, x, v, w)` and terminal condition `g`
//! of the semilinear PDE
//!
//! ```text
//! ∂t u + ⟨∇u, μ⟩ + ½ Tr(σσᵀ Hess u) + f(t, x, u, ∇u) = 0,   u(T, ·) = g.
//! ```
//!
//! Problems are immutable after construction and every coefficient closure
//! must be callable concurrently.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::paths::invert;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub type VectorField = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type MatrixListField = Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>;
pub type Nonlinearity = Arc<dyn Fn(f64, &Vector, f64, &Vector) -> f64 + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type SpaceTimeScalar = Arc<dyn Fn(f64, &Vector) -> f64 + Send + Sync>;
pub type SpaceTimeVector = Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>;

/// Known shape of `(μ, σ)`, used by exact simulation and closed forms.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientForm {
    General,
    /// `μ ≡ drift`, `σ ≡ diffusion`; paths can be sampled exactly.
    Constant {
        drift: Vector,
        diffusion: Matrix,
    },
    /// Componentwise geometric Brownian motion `μ(x) = r·x`, `σ(x) = s·diag(x)`.
    Geometric {
        rate: f64,
        volatility: f64,
    },
}

/// Known shape of `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalForm {
    Opaque,
    /// `g(x) = ⟨slope, x⟩ + intercept`.
    Affine {
        slope: Vector,
        intercept: f64,
    },
    /// `g(x) = exp(⟨slope, x⟩)`.
    ExpAffine {
        slope: Vector,
    },
}

/// Exact `(u*, ∇u*)` used for benchmarking.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: SpaceTimeScalar,
    pub gradient: SpaceTimeVector,
}

#[derive(Clone)]
pub struct PdeProblem {
    dim: usize,
    horizon: f64,
    drift: VectorField,
    diffusion: MatrixField,
    drift_jacobian: Option<MatrixField>,
    diffusion_jacobians: Option<MatrixListField>,
    nonlinearity: Nonlinearity,
    terminal: ScalarField,
    lipschitz: f64,
    growth_exponent: f64,
    ellipticity: f64,
    exact_solution: Option<ExactSolution>,
    coefficients: CoefficientForm,
    terminal_form: TerminalForm,
    zero_nonlinearity: bool,
}

impl std::fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeProblem")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("coefficients", &self.coefficients)
            .field("terminal_form", &self.terminal_form)
            .field("zero_nonlinearity", &self.zero_nonlinearity)
            .field("ellipticity", &self.ellipticity)
            .finish_non_exhaustive()
    }
}

fn check_vector(v: Vector, what: &'static str) -> Result<Vector> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFiniteCoefficient(what))
    }
}

fn check_matrix(m: Matrix, what: &'static str) -> Result<Matrix> {
    if m.iter().all(|e| e.is_finite()) {
        Ok(m)
    } else {
        Err(Error::NonFiniteCoefficient(what))
    }
}

fn check_scalar(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteCoefficient(what))
    }
}

impl PdeProblem {
    pub fn builder(dim: usize, horizon: f64) -> ProblemBuilder {
        ProblemBuilder::new(dim, horizon)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn growth_exponent(&self) -> f64 {
        self.growth_exponent
    }

    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    pub fn coefficients(&self) -> &CoefficientForm {
        &self.coefficients
    }

    pub fn terminal_form(&self) -> &TerminalForm {
        &self.terminal_form
    }

    pub fn has_zero_nonlinearity(&self) -> bool {
        self.zero_nonlinearity
    }

    pub fn exact_solution(&self) -> Option<&ExactSolution> {
        self.exact_solution.as_ref()
    }

    pub fn is_exactly_simulable(&self) -> bool {
        matches!(self.coefficients, CoefficientForm::Constant { .. })
    }

    pub fn has_analytic_jacobians(&self) -> (bool, bool) {
        (
            self.drift_jacobian.is_some(),
            self.diffusion_jacobians.is_some(),
        )
    }

    pub(crate) fn check_point(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn drift_at(&self, x: &Vector) -> Result<Vector> {
        check_vector((self.drift)(x), "drift")
    }

    pub fn diffusion_at(&self, x: &Vector) -> Result<Matrix> {
        check_matrix((self.diffusion)(x), "diffusion")
    }

    pub fn nonlinearity_at(&self, t: f64, x: &Vector, v: f64, w: &Vector) -> Result<f64> {
        if self.zero_nonlinearity {
            return Ok(0.0);
        }
        check_scalar((self.nonlinearity)(t, x, v, w), "nonlinearity")
    }

    pub fn terminal_at(&self, x: &Vector) -> Result<f64> {
        check_scalar((self.terminal)(x), "terminal condition")
    }

    /// `∇μ(x)`, analytic when supplied, central differences otherwise.
    pub fn drift_jacobian_at(&self, x: &Vector) -> Result<Matrix> {
        match &self.drift_jacobian {
            Some(j) => check_matrix(j(x), "drift jacobian"),
            None => jacobian_fd(|y| (self.drift)(y), x, default_step(x)),
        }
    }

    /// `(∇σ¹(x), …, ∇σᵈ(x))` where `σʲ` is the `j`-th column of `σ`.
    pub fn diffusion_jacobians_at(&self, x: &Vector) -> Result<Vec<Matrix>> {
        match &self.diffusion_jacobians {
            Some(j) => {
                let mats = j(x);
                if mats.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: mats.len(),
                    });
                }
                mats.into_iter()
                    .map(|m| check_matrix(m, "diffusion jacobian"))
                    .collect()
            }
            None => diffusion_jacobians_fd(&*self.diffusion, x, default_step(x)),
        }
    }

    /// Finite-difference versions, regardless of whether analytic ones exist.
    pub fn drift_jacobian_fd(&self, x: &Vector) -> Result<Matrix> {
        jacobian_fd(|y| (self.drift)(y), x, default_step(x))
    }

    pub fn diffusion_jacobians_fd(&self, x: &Vector) -> Result<Vec<Matrix>> {
        diffusion_jacobians_fd(&*self.diffusion, x, default_step(x))
    }

    /// Same problem with terminal condition `g + shift`.
    pub fn with_terminal_shift(&self, shift: f64) -> PdeProblem {
        let mut p = self.clone();
        let g = self.terminal.clone();
        p.terminal = Arc::new(move |x| g(x) + shift);
        p.terminal_form = match &self.terminal_form {
            TerminalForm::Affine { slope, intercept } => TerminalForm::Affine {
                slope: slope.clone(),
                intercept: intercept + shift,
            },
            _ => TerminalForm::Opaque,
        };
        if let Some(exact) = &self.exact_solution {
            let u = exact.value.clone();
            p.exact_solution = Some(ExactSolution {
                value: Arc::new(move |t, x| u(t, x) + shift),
                gradient: exact.gradient.clone(),
            });
        }
        p
    }
}

/// Default central-difference step `ε^{1/3}·max(1, ‖x‖)`.
pub fn default_step(x: &Vector) -> f64 {
    f64::EPSILON.cbrt() * x.norm().max(1.0)
}

/// Central-difference Jacobian of `func: ℝᵈ → ℝᵐ`, column `k` being
/// `(func(x + h e_k) − func(x − h e_k)) / 2h`.
pub fn jacobian_fd<F>(func: F, x: &Vector, h: f64) -> Result<Matrix>
where
    F: Fn(&Vector) -> Vector,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::DomainError {
            value: h,
            domain: "h > 0",
        });
    }
    let d = x.len();
    let mut jac: Option<Matrix> = None;
    let mut y = x.clone();
    for k in 0..d {
        y[k] = x[k] + h;
        let plus = check_vector(func(&y), "finite-difference evaluation")?;
        y[k] = x[k] - h;
        let minus = check_vector(func(&y), "finite-difference evaluation")?;
        y[k] = x[k];
        let j = jac.get_or_insert_with(|| Matrix::zeros(plus.len(), d));
        let col = (plus - minus) / (2.0 * h);
        j.set_column(k, &col);
    }
    Ok(jac.unwrap_or_else(|| Matrix::zeros(0, 0)))
}

fn diffusion_jacobians_fd(
    diffusion: &(dyn Fn(&Vector) -> Matrix + Send + Sync),
    x: &Vector,
    h: f64,
) -> Result<Vec<Matrix>> {
    let d = x.len();
    let mut out = vec![Matrix::zeros(d, d); d];
    let mut y = x.clone();
    for k in 0..d {
        y[k] = x[k] + h;
        let plus = check_matrix(diffusion(&y), "finite-difference evaluation")?;
        y[k] = x[k] - h;
        let minus = check_matrix(diffusion(&y), "finite-difference evaluation")?;
        y[k] = x[k];
        for (j, jac) in out.iter_mut().enumerate() {
            for i in 0..d {
                jac[(i, k)] = (plus[(i, j)] - minus[(i, j)]) / (2.0 * h);
            }
        }
    }
    Ok(out)
}

pub struct ProblemBuilder {
    dim: usize,
    horizon: f64,
    drift: Option<VectorField>,
    diffusion: Option<MatrixField>,
    drift_jacobian: Option<MatrixField>,
    diffusion_jacobians: Option<MatrixListField>,
    nonlinearity: Option<Nonlinearity>,
    terminal: Option<ScalarField>,
    lipschitz: f64,
    growth_exponent: f64,
    ellipticity: f64,
    exact_solution: Option<ExactSolution>,
    coefficients: CoefficientForm,
    terminal_form: TerminalForm,
    zero_nonlinearity: bool,
}

impl ProblemBuilder {
    fn new(dim: usize, horizon: f64) -> Self {
        Self {
            dim,
            horizon,
            drift: None,
            diffusion: None,
            drift_jacobian: None,
            diffusion_jacobians: None,
            nonlinearity: None,
            terminal: None,
            lipschitz: 1.0,
            growth_exponent: 0.0,
            ellipticity: 1.0,
            exact_solution: None,
            coefficients: CoefficientForm::General,
            terminal_form: TerminalForm::Opaque,
            zero_nonlinearity: false,
        }
    }

    pub fn drift(mut self, f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self.coefficients = CoefficientForm::General;
        self
    }

    pub fn diffusion(mut self, f: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(f));
        self.coefficients = CoefficientForm::General;
        self
    }

    pub fn drift_jacobian(mut self, f: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.drift_jacobian = Some(Arc::new(f));
        self
    }

    pub fn diffusion_jacobians(
        mut self,
        f: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion_jacobians = Some(Arc::new(f));
        self
    }

    /// Constant `μ`, `σ`; enables exact path simulation.
    pub fn constant_coefficients(mut self, drift: Vector, diffusion: Matrix) -> Self {
        let d = self.dim;
        let (mu, sigma) = (drift.clone(), diffusion.clone());
        self.drift = Some(Arc::new(move |_| mu.clone()));
        self.diffusion = Some(Arc::new(move |_| sigma.clone()));
        self.drift_jacobian = Some(Arc::new(move |_| Matrix::zeros(d, d)));
        self.diffusion_jacobians = Some(Arc::new(move |_| vec![Matrix::zeros(d, d); d]));
        self.coefficients = CoefficientForm::Constant { drift, diffusion };
        self
    }

    /// Componentwise geometric Brownian motion `dX_k = r X_k dt + s X_k dW_k`.
    pub fn geometric(mut self, rate: f64, volatility: f64) -> Self {
        let d = self.dim;
        self.drift = Some(Arc::new(move |x| x * rate));
        self.diffusion = Some(Arc::new(move |x| Matrix::from_diagonal(&(x * volatility))));
        self.drift_jacobian = Some(Arc::new(move |_| Matrix::identity(d, d) * rate));
        self.diffusion_jacobians = Some(Arc::new(move |_| {
            (0..d)
                .map(|j| {
                    let mut m = Matrix::zeros(d, d);
                    m[(j, j)] = volatility;
                    m
                })
                .collect()
        }));
        self.coefficients = CoefficientForm::Geometric { rate, volatility };
        self
    }

    pub fn nonlinearity(
        mut self,
        f: impl Fn(f64, &Vector, f64, &Vector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.nonlinearity = Some(Arc::new(f));
        self.zero_nonlinearity = false;
        self
    }

    pub fn zero_nonlinearity(mut self) -> Self {
        self.nonlinearity = Some(Arc::new(|_, _, _, _| 0.0));
        self.zero_nonlinearity = true;
        self
    }

    pub fn terminal(mut self, g: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Some(Arc::new(g));
        self.terminal_form = TerminalForm::Opaque;
        self
    }

    pub fn affine_terminal(mut self, slope: Vector, intercept: f64) -> Self {
        let a = slope.clone();
        self.terminal = Some(Arc::new(move |x| a.dot(x) + intercept));
        self.terminal_form = TerminalForm::Affine { slope, intercept };
        self
    }

    pub fn exp_affine_terminal(mut self, slope: Vector) -> Self {
        let a = slope.clone();
        self.terminal = Some(Arc::new(move |x| a.dot(x).exp()));
        self.terminal_form = TerminalForm::ExpAffine { slope };
        self
    }

    pub fn lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn growth_exponent(mut self, p: f64) -> Self {
        self.growth_exponent = p;
        self
    }

    pub fn ellipticity(mut self, eps: f64) -> Self {
        self.ellipticity = eps;
        self
    }

    pub fn exact_solution(
        mut self,
        value: impl Fn(f64, &Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(f64, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.exact_solution = Some(ExactSolution {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        });
        self
    }

    pub fn build(self) -> Result<PdeProblem> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.ellipticity > 0.0 && self.ellipticity <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ellipticity constant must lie in (0, 1], got {}",
                self.ellipticity
            )));
        }
        if !(self.lipschitz >= 0.0) || !(self.growth_exponent >= 0.0) {
            return Err(Error::InvalidConfig(
                "Lipschitz constant and growth exponent must be nonnegative".into(),
            ));
        }
        if let CoefficientForm::Constant { drift, diffusion } = &self.coefficients {
            if drift.len() != self.dim || diffusion.shape() != (self.dim, self.dim) {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: drift.len(),
                });
            }
        }
        let missing = |what: &str| Error::InvalidConfig(format!("problem is missing its {what}"));
        Ok(PdeProblem {
            dim: self.dim,
            horizon: self.horizon,
            drift: self.drift.ok_or_else(|| missing("drift"))?,
            diffusion: self.diffusion.ok_or_else(|| missing("diffusion"))?,
            drift_jacobian: self.drift_jacobian,
            diffusion_jacobians: self.diffusion_jacobians,
            nonlinearity: self.nonlinearity.ok_or_else(|| missing("nonlinearity"))?,
            terminal: self.terminal.ok_or_else(|| missing("terminal condition"))?,
            lipschitz: self.lipschitz,
            growth_exponent: self.growth_exponent,
            ellipticity: self.ellipticity,
            exact_solution: self.exact_solution,
            coefficients: self.coefficients,
            terminal_form: self.terminal_form,
            zero_nonlinearity: self.zero_nonlinearity,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub point: Vector,
    /// `min_y yᵀσσᵀy − ε‖y‖²` over the supplied directions.
    pub ellipticity_margin: f64,
    /// Relative Frobenius residual between analytic and finite-difference `∇μ`.
    pub drift_jacobian_residual: Option<f64>,
    /// Largest relative residual over the `∇σʲ`.
    pub diffusion_jacobian_residual: Option<f64>,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub probes: Vec<ProbeReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.probes
            .iter()
            .all(|p| p.finite && p.ellipticity_margin >= 0.0)
    }

    pub fn min_margin(&self) -> f64 {
        self.probes
            .iter()
            .map(|p| p.ellipticity_margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether every analytic Jacobian agrees with finite differences to `tol`.
    pub fn jacobians_consistent(&self, tol: f64) -> bool {
        self.probes.iter().all(|p| {
            p.drift_jacobian_residual.is_none_or(|r| r <= tol)
                && p.diffusion_jacobian_residual.is_none_or(|r| r <= tol)
        })
    }
}

fn relative_residual(analytic: &Matrix, fd: &Matrix) -> f64 {
    (analytic - fd).norm() / analytic.norm().max(1.0)
}

/// Checks ellipticity, invertibility and finiteness of the coefficients at
/// the given probe points, plus the analytic Jacobians against central
/// differences.
pub fn validate(
    problem: &PdeProblem,
    probe_points: &[Vector],
    unit_dirs: &[Vector],
) -> Result<ValidationReport> {
    if probe_points.is_empty() {
        return Err(Error::InvalidConfig(
            "validation needs at least one probe point".into(),
        ));
    }
    if unit_dirs.is_empty() {
        return Err(Error::InvalidConfig(
            "validation needs at least one direction".into(),
        ));
    }
    for y in unit_dirs {
        problem.check_point(y)?;
        if (y.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::DomainError {
                value: y.norm(),
                domain: "unit direction norm",
            });
        }
    }
    let eps = problem.ellipticity();
    let mut probes = Vec::with_capacity(probe_points.len());
    for x in probe_points {
        problem.check_point(x)?;
        let mu = problem.drift_at(x)?;
        let sigma = problem.diffusion_at(x)?;
        invert(&sigma)?;
        let g = problem.terminal_at(x)?;
        let finite = mu.iter().all(|v| v.is_finite()) && g.is_finite();

        let a = &sigma * sigma.transpose();
        let margin = unit_dirs
            .iter()
            .map(|y| (y.transpose() * &a * y)[(0, 0)] - eps * y.norm_squared())
            .fold(f64::INFINITY, f64::min);

        let (has_mu_jac, has_sigma_jac) = problem.has_analytic_jacobians();
        let drift_res = if has_mu_jac {
            Some(relative_residual(
                &problem.drift_jacobian_at(x)?,
                &problem.drift_jacobian_fd(x)?,
            ))
        } else {
            None
        };
        let diffusion_res = if has_sigma_jac {
            let analytic = problem.diffusion_jacobians_at(x)?;
            let fd = problem.diffusion_jacobians_fd(x)?;
            Some(
                analytic
                    .iter()
                    .zip(&fd)
                    .map(|(a, f)| relative_residual(a, f))
                    .fold(0.0, f64::max),
            )
        } else {
            None
        };
        probes.push(ProbeReport {
            point: x.clone(),
            ellipticity_margin: margin,
            drift_jacobian_residual: drift_res,
            diffusion_jacobian_residual: diffusion_res,
            finite,
        });
    }
    Ok(ValidationReport { probes })
}

/// Quasi-uniform points on the unit sphere of ℝ³ (golden-angle spiral).
pub fn fibonacci_sphere(count: usize) -> Vec<Vector> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
        })
        .collect()
}

/// Coordinate axes, plus 64 quasi-uniform sphere directions when `d ≤ 8`.
pub fn default_directions(dim: usize) -> Vec<Vector> {
    let mut dirs: Vec<Vector> = (0..dim)
        .map(|k| {
            let mut e = Vector::zeros(dim);
            e[k] = 1.0;
            e
        })
        .collect();
    if dim > 8 || dim == 1 {
        return dirs;
    }
    match dim {
        2 => dirs.extend((0..64).map(|i| {
            let a = std::f64::consts::PI * i as f64 / 64.0;
            Vector::from_vec(vec![a.cos(), a.sin()])
        })),
        3 => dirs.extend(fibonacci_sphere(64)),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1c7_0000 + dim as u64);
            dirs.extend((0..64).map(|_| {
                let g = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let n = g.norm();
                g / n
            }));
        }
    }
    dirs
}

/// Deterministic probe points in `[-2, 2]^d` (the origin first).
pub fn default_probe_points(dim: usize, count: usize) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e0b_e000 + dim as u64);
    let mut pts = vec![Vector::zeros(dim)];
    pts.extend(
        (1..count)
            .map(|_| Vector::from_fn(dim, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0))),
    );
    pts
}
