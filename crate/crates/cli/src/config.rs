//! Run configuration: a flat TOML document whose list-valued keys are
//! swept as a Cartesian product.

use std::path::Path;

use mlp_core::oracle::TimeRule;
use mlp_core::problems::{builtin, default_point};
use mlp_core::{PicardConfig, Vector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedPoint {
    Zeros,
    Ones,
}

/// Evaluation point: `"zeros"`, `"ones"` or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Named(NamedPoint),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    #[default]
    Exact,
    Picard,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default)]
    pub t: f64,
    /// Missing means zeros, or ones for problems whose diffusion degenerates at the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<PointSpec>,
    #[serde(default = "default_depths")]
    pub n: Vec<u32>,
    #[serde(rename = "M", default = "default_branching")]
    pub m: Vec<u32>,
    /// Use `M = n` for every depth instead of sweeping `M`.
    #[serde(default)]
    pub m_equals_n: bool,
    /// Euler step counts; `0` selects exact path simulation.
    #[serde(rename = "N", default = "default_steps")]
    pub euler_steps: Vec<u32>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default = "default_output")]
    pub out: String,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default = "default_picard_iterations")]
    pub picard_iterations: u32,
    #[serde(default = "default_picard_outer")]
    pub picard_outer_samples: u32,
    #[serde(default = "default_picard_inner")]
    pub picard_inner_samples: u32,
    #[serde(default = "default_picard_nodes")]
    pub picard_quadrature_nodes: u32,
    #[serde(default = "default_picard_steps")]
    pub picard_euler_steps: u32,
}

fn default_dim() -> usize {
    1
}
fn default_depths() -> Vec<u32> {
    vec![1]
}
fn default_branching() -> Vec<u32> {
    vec![2]
}
fn default_steps() -> Vec<u32> {
    vec![0]
}
fn default_alpha() -> Vec<f64> {
    vec![0.5]
}
fn default_runs() -> usize {
    10
}
fn default_output() -> String {
    "-".into()
}
fn default_picard_iterations() -> u32 {
    PicardConfig::default().iterations
}
fn default_picard_outer() -> u32 {
    PicardConfig::default().outer_samples
}
fn default_picard_inner() -> u32 {
    PicardConfig::default().inner_samples
}
fn default_picard_nodes() -> u32 {
    PicardConfig::default().quadrature_nodes
}
fn default_picard_steps() -> u32 {
    PicardConfig::default().euler_steps
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "linear-gaussian".into(),
            d: default_dim(),
            t: 0.0,
            x: None,
            n: default_depths(),
            m: default_branching(),
            m_equals_n: false,
            euler_steps: default_steps(),
            alpha: default_alpha(),
            runs: default_runs(),
            seed: 0,
            reference: ReferenceKind::Exact,
            out: default_output(),
            format: OutputFormat::Csv,
            picard_iterations: default_picard_iterations(),
            picard_outer_samples: default_picard_outer(),
            picard_inner_samples: default_picard_inner(),
            picard_quadrature_nodes: default_picard_nodes(),
            picard_euler_steps: default_picard_steps(),
        }
    }
}

/// One cell of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: u32,
    pub m: u32,
    pub euler_steps: u32,
    pub alpha: f64,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "n={} M={} N={} alpha={}",
            self.n, self.m, self.euler_steps, self.alpha
        )
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n.is_empty() || self.euler_steps.is_empty() || self.alpha.is_empty() {
            return bad("sweep lists n, N and alpha must be nonempty".into());
        }
        if self.m.is_empty() && !self.m_equals_n {
            return bad("sweep list M must be nonempty".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        let problem =
            builtin(&self.problem, self.d).map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.t >= 0.0 && self.t < problem.horizon()) {
            return bad(format!(
                "t = {} must lie in [0, {})",
                self.t,
                problem.horizon()
            ));
        }
        if let Some(PointSpec::Explicit(v)) = &self.x {
            if v.len() != self.d {
                return bad(format!("x has {} entries but d = {}", v.len(), self.d));
            }
        }
        Ok(())
    }

    pub fn point(&self) -> Vector {
        match &self.x {
            None => default_point(&self.problem, self.d),
            Some(PointSpec::Named(NamedPoint::Zeros)) => Vector::zeros(self.d),
            Some(PointSpec::Named(NamedPoint::Ones)) => Vector::from_element(self.d, 1.0),
            Some(PointSpec::Explicit(v)) => Vector::from_column_slice(v),
        }
    }

    /// Cells in output order: `n` outermost, then `M`, `N`, `alpha`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            let ms = if self.m_equals_n {
                vec![n.max(1)]
            } else {
                self.m.clone()
            };
            for &m in &ms {
                for &euler_steps in &self.euler_steps {
                    for &alpha in &self.alpha {
                        out.push(Cell {
                            n,
                            m,
                            euler_steps,
                            alpha,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn picard(&self) -> PicardConfig {
        PicardConfig {
            iterations: self.picard_iterations,
            outer_samples: self.picard_outer_samples,
            inner_samples: self.picard_inner_samples,
            quadrature_nodes: self.picard_quadrature_nodes,
            euler_steps: self.picard_euler_steps,
            time_rule: TimeRule::GaussLegendre,
            ..PicardConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_document() {
        let cfg = RunConfig::from_toml(
            r#"
            problem = "manufactured-gradient"
            d = 2
            t = 0.0
            x = [0.5, 0.5]
            n = [1, 2, 3]
            m_equals_n = true
            N = [0]
            alpha = [0.5, 0.75]
            runs = 200
            seed = 42
            reference = "exact"
            out = "rows.csv"
            format = "csv"
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.point(), Vector::from_vec(vec![0.5, 0.5]));
        let cells = cfg.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(
            cells[0],
            Cell {
                n: 1,
                m: 1,
                euler_steps: 0,
                alpha: 0.5
            }
        );
        assert_eq!(
            cells[5],
            Cell {
                n: 3,
                m: 3,
                euler_steps: 0,
                alpha: 0.75
            }
        );
    }

    #[test]
    fn named_points_and_defaults() {
        let cfg = RunConfig::from_toml("problem = \"gbm-linear-g\"\nd = 3\n").unwrap();
        assert_eq!(cfg.point(), Vector::from_element(3, 1.0));
        let cfg =
            RunConfig::from_toml("problem = \"linear-gaussian\"\nd = 2\nx = \"ones\"\n").unwrap();
        assert_eq!(cfg.point(), Vector::from_element(2, 1.0));
        let cfg = RunConfig::from_toml("problem = \"linear-gaussian\"\nd = 2\n").unwrap();
        assert_eq!(cfg.point(), Vector::zeros(2));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(RunConfig::from_toml("problem = 3").is_err());
        assert!(RunConfig::from_toml("problem = \"linear-gaussian\"\nbogus = 1\n").is_err());
        let with = |extra: &str| {
            RunConfig::from_toml(&format!("problem = \"linear-gaussian\"\nd = 2\n{extra}")).unwrap()
        };
        assert!(with("n = []").validate().is_err());
        assert!(with("runs = 0").validate().is_err());
        assert!(with("t = 1.0").validate().is_err());
        assert!(with("x = [1.0]").validate().is_err());
        let unknown = RunConfig {
            problem: "nope".into(),
            ..RunConfig::default()
        };
        assert!(unknown.validate().is_err());
    }

    #[test]
    fn cartesian_order() {
        let cfg = RunConfig {
            n: vec![1, 2],
            m: vec![3, 4],
            euler_steps: vec![0, 8],
            ..RunConfig::default()
        };
        let cells: Vec<(u32, u32, u32)> = cfg
            .cells()
            .iter()
            .map(|c| (c.n, c.m, c.euler_steps))
            .collect();
        assert_eq!(
            cells,
            vec![
                (1, 3, 0),
                (1, 3, 8),
                (1, 4, 0),
                (1, 4, 8),
                (2, 3, 0),
                (2, 3, 8),
                (2, 4, 0),
                (2, 4, 8)
            ]
        );
    }
}
