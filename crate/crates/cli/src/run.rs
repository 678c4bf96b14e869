//! Executes a sweep and produces one [`Row`] per cell.

use mlp_core::mlp::summarize;
use mlp_core::problems::builtin;
use mlp_core::{
    cost_recursion, picard_reference, sample_runs, unit_path_cost, CostCounters, MlpConfig,
    Reference,
};
use serde::Serialize;
use std::time::Instant;

use crate::config::{Cell, ReferenceKind, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub problem: String,
    pub d: usize,
    pub t: f64,
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "N")]
    pub euler_steps: u32,
    pub alpha: f64,
    pub runs: usize,
    pub value_mean: f64,
    pub value_rmse: f64,
    pub grad_rmse: f64,
    pub stderr_value: f64,
    pub stderr_grad: f64,
    pub wall_ms: f64,
    pub evals_g: u64,
    pub evals_f: u64,
    pub evals_mu: u64,
    pub evals_sigma: u64,
    pub scalars_drawn: u64,
    pub cc1_bound: f64,
    pub seed: u64,
}

impl Cell {
    pub fn mlp_config(&self) -> MlpConfig {
        let cfg = MlpConfig::new(self.n, self.m).with_alpha(self.alpha);
        if self.euler_steps == 0 {
            cfg
        } else {
            cfg.with_euler(self.euler_steps)
        }
    }

    /// Upper bound on the counted cost of one realisation.
    ///
    /// A path costs `unit_path_cost` and each time sample adds one drawn
    /// scalar, so the per-step unit is that total spread over `M^M` steps.
    /// Each sample point evaluates `f` at most twice.
    pub fn cost_bound(&self, dim: usize) -> f64 {
        let steps = (self.euler_steps > 0).then_some(self.euler_steps);
        let per_path = unit_path_cost(steps, dim) + 1.0;
        let m = self.m as f64;
        cost_recursion(self.n, self.m, per_path / m.powf(m), 1.0, 2.0)
    }
}

pub fn run(config: &RunConfig) -> Result<Vec<Row>, CliError> {
    config.validate()?;
    let problem =
        builtin(&config.problem, config.d).map_err(|e| CliError::Config(e.to_string()))?;
    let x = config.point();
    let reference = match config.reference {
        ReferenceKind::Exact => {
            if problem.exact_solution().is_none() {
                return Err(CliError::Config(format!(
                    "problem {} has no exact solution",
                    config.problem
                )));
            }
            Reference::Exact
        }
        ReferenceKind::Picard => {
            let r = picard_reference(&problem, config.t, &x, &config.picard(), config.seed)
                .map_err(CliError::Reference)?;
            Reference::Fixed(r.estimate)
        }
        ReferenceKind::None => Reference::SampleMean,
    };

    let mut rows = Vec::new();
    for cell in config.cells() {
        let wrap = |source| CliError::Cell {
            cell: cell.to_string(),
            source,
        };
        let mlp = cell.mlp_config();
        let counters = CostCounters::new();
        let start = Instant::now();
        let samples = sample_runs(
            &problem,
            config.t,
            &x,
            &mlp,
            config.runs,
            config.seed,
            &counters,
        )
        .map_err(wrap)?;
        let wall = start.elapsed();
        let study = summarize(
            &problem,
            config.t,
            &x,
            &mlp,
            &samples,
            &reference,
            wall,
            counters.snapshot(),
        )
        .map_err(wrap)?;
        let c = study.counters;
        rows.push(Row {
            problem: config.problem.clone(),
            d: config.d,
            t: config.t,
            n: cell.n,
            m: cell.m,
            euler_steps: cell.euler_steps,
            alpha: cell.alpha,
            runs: config.runs,
            value_mean: study.value_mean,
            value_rmse: study.value_rmse,
            grad_rmse: study.grad_rmse,
            stderr_value: study.stderr_value,
            stderr_grad: study.stderr_grad,
            wall_ms: wall.as_secs_f64() * 1e3,
            evals_g: c.evals_g,
            evals_f: c.evals_f,
            evals_mu: c.evals_mu,
            evals_sigma: c.evals_sigma,
            scalars_drawn: c.scalars_drawn,
            cc1_bound: cell.cost_bound(config.d),
            seed: config.seed,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_rows_are_zero() {
        let cfg = RunConfig {
            n: vec![0],
            d: 2,
            runs: 5,
            ..RunConfig::default()
        };
        let rows = run(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.value_mean, 0.0);
        assert_eq!(
            r.evals_g + r.evals_f + r.evals_mu + r.evals_sigma + r.scalars_drawn,
            0
        );
        assert_eq!(r.cc1_bound, 0.0);
    }

    #[test]
    fn counted_cost_respects_the_bound() {
        let cfg = RunConfig {
            problem: "manufactured-gradient".into(),
            d: 2,
            n: vec![1, 2, 3],
            m: vec![2, 3],
            euler_steps: vec![0, 3],
            runs: 4,
            ..RunConfig::default()
        };
        for r in run(&cfg).unwrap() {
            let total =
                (r.evals_g + r.evals_f + r.evals_mu + r.evals_sigma + r.scalars_drawn) as f64;
            assert!(total <= r.cc1_bound * r.runs as f64, "{r:?}");
        }
    }

    #[test]
    fn missing_exact_solution_is_reported() {
        let cfg = RunConfig {
            problem: "heat-allen-cahn-type".into(),
            d: 2,
            ..RunConfig::default()
        };
        assert!(matches!(run(&cfg), Err(CliError::Config(_))));
    }

    #[test]
    fn failing_cells_are_named() {
        let cfg = RunConfig {
            problem: "gbm-linear-g".into(),
            d: 2,
            n: vec![2],
            m: vec![2],
            ..RunConfig::default()
        };
        match run(&cfg) {
            Err(CliError::Cell { cell, .. }) => assert!(cell.contains("N=0"), "{cell}"),
            other => panic!("{other:?}"),
        }
    }
}
