use std::io::Write;

use crate::config::OutputFormat;
use crate::error::CliError;
use crate::run::Row;

pub const CSV_HEADER: &str = "problem,d,t,n,M,N,alpha,runs,value_mean,value_rmse,grad_rmse,stderr_value,stderr_grad,wall_ms,evals_g,evals_f,evals_mu,evals_sigma,scalars_drawn,cc1_bound,seed";

fn csv_line(r: &Row) -> String {
    format!(
        "{},{},{:.16e},{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{},{},{:.16e},{}",
        r.problem,
        r.d,
        r.t,
        r.n,
        r.m,
        r.euler_steps,
        r.alpha,
        r.runs,
        r.value_mean,
        r.value_rmse,
        r.grad_rmse,
        r.stderr_value,
        r.stderr_grad,
        r.wall_ms,
        r.evals_g,
        r.evals_f,
        r.evals_mu,
        r.evals_sigma,
        r.scalars_drawn,
        r.cc1_bound,
        r.seed
    )
}

pub fn render(rows: &[Row], format: OutputFormat) -> Result<String, CliError> {
    match format {
        OutputFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in rows {
                out.push_str(&csv_line(r));
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(rows).map_err(|e| CliError::Encode(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Writes to `target`, where `-` means standard output.
pub fn emit(text: &str, target: &str) -> Result<(), CliError> {
    if target == "-" {
        std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io("stdout".into(), e))
    } else {
        std::fs::write(target, text).map_err(|e| CliError::Io(target.into(), e))
    }
}
