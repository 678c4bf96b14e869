//! Built-in problems selectable by name.

use crate::error::{Error, Result};
use crate::model::{Matrix, PdeProblem, Vector};

pub const BUILTIN_KEYS: [&str; 4] = [
    "linear-gaussian",
    "gbm-linear-g",
    "manufactured-gradient",
    "heat-allen-cahn-type",
];

/// Builds the named problem in dimension `dim`.
///
/// * `linear-gaussian`: `μ = 0`, `σ = I`, `f = 0`, `g(x) = Σ k·x_k`, `T = 1`.
/// * `gbm-linear-g`: componentwise GBM with `r = 0.05`, `s = 0.2`, `f = 0`,
///   `g(x) = mean(x)`, `T = 1`.
/// * `manufactured-gradient`: `μ = 0`, `σ = I`, `g(x) = Σ x_k`, `T = 1` and
///   `f(t, x, v, w) = Σ w_k − v − d·e^{t−T}`, solved by `u(t, x) = e^{t−T} Σ x_k`.
/// * `heat-allen-cahn-type`: `μ = 0`, `σ = √2·I`, `f = v − v³`,
///   `g(x) = 1 / (2 + 0.4‖x‖²)`, `T = 0.3`. No closed form.
pub fn builtin(key: &str, dim: usize) -> Result<PdeProblem> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be at least 1".into()));
    }
    let d = dim as f64;
    let eye = Matrix::identity(dim, dim);
    match key {
        "linear-gaussian" => {
            let a = Vector::from_fn(dim, |k, _| (k + 1) as f64);
            let (av, ag) = (a.clone(), a.clone());
            PdeProblem::builder(dim, 1.0)
                .constant_coefficients(Vector::zeros(dim), eye)
                .zero_nonlinearity()
                .affine_terminal(a, 0.0)
                .lipschitz(0.0)
                .growth_exponent(1.0)
                .exact_solution(move |_, x| av.dot(x), move |_, _| ag.clone())
                .build()
        }
        "gbm-linear-g" => {
            let (rate, vol) = (0.05, 0.2);
            let a = Vector::from_element(dim, 1.0 / d);
            let (av, ag) = (a.clone(), a.clone());
            PdeProblem::builder(dim, 1.0)
                .geometric(rate, vol)
                .zero_nonlinearity()
                .affine_terminal(a, 0.0)
                .lipschitz(0.0)
                .growth_exponent(1.0)
                .ellipticity(0.01)
                .exact_solution(
                    move |t, x| (rate * (1.0 - t)).exp() * av.dot(x),
                    move |t, _| &ag * (rate * (1.0 - t)).exp(),
                )
                .build()
        }
        "manufactured-gradient" => PdeProblem::builder(dim, 1.0)
            .constant_coefficients(Vector::zeros(dim), eye)
            .nonlinearity(move |t, _, v, w| w.sum() - v - d * (t - 1.0).exp())
            .affine_terminal(Vector::from_element(dim, 1.0), 0.0)
            .lipschitz((d + 1.0).sqrt())
            .growth_exponent(1.0)
            .exact_solution(
                |t, x| (t - 1.0).exp() * x.sum(),
                move |t, _| Vector::from_element(dim, (t - 1.0).exp()),
            )
            .build(),
        "heat-allen-cahn-type" => PdeProblem::builder(dim, 0.3)
            .constant_coefficients(Vector::zeros(dim), eye * std::f64::consts::SQRT_2)
            .nonlinearity(|_, _, v, _| v - v * v * v)
            .terminal(|x| 1.0 / (2.0 + 0.4 * x.norm_squared()))
            .build(),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Natural evaluation point: ones for the geometric problem, whose
/// diffusion degenerates at the origin, and zeros otherwise.
pub fn default_point(key: &str, dim: usize) -> Vector {
    match key {
        "gbm-linear-g" => Vector::from_element(dim, 1.0),
        _ => Vector::zeros(dim),
    }
}
