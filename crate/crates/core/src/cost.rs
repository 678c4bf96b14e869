//! Operation counters and the analytic cost recursion of the MLP scheme.

use std::sync::atomic::{AtomicU64, Ordering};

/// Shared operation counters.
///
/// Increments are relaxed; read totals only after the run has finished.
#[derive(Debug, Default)]
pub struct CostCounters {
    evals_g: AtomicU64,
    evals_f: AtomicU64,
    evals_mu: AtomicU64,
    evals_sigma: AtomicU64,
    scalars_drawn: AtomicU64,
}

impl CostCounters {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add_g(&self, n: u64) {
        self.evals_g.fetch_add(n, Ordering::Relaxed);
    }

    #[inline]
    pub fn add_f(&self, n: u64) {
        self.evals_f.fetch_add(n, Ordering::Relaxed);
    }

    /// One Euler step (or one exact draw): one `μ` and one `σ` evaluation
    /// plus `scalars` random numbers.
    #[inline]
    pub fn add_step(&self, scalars: u64) {
        self.evals_mu.fetch_add(1, Ordering::Relaxed);
        self.evals_sigma.fetch_add(1, Ordering::Relaxed);
        self.scalars_drawn.fetch_add(scalars, Ordering::Relaxed);
    }

    #[inline]
    pub fn add_scalars(&self, n: u64) {
        self.scalars_drawn.fetch_add(n, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.snapshot().total()
    }

    /// Adds a finished report.
    pub fn absorb(&self, report: &CostReport) {
        self.evals_g.fetch_add(report.evals_g, Ordering::Relaxed);
        self.evals_f.fetch_add(report.evals_f, Ordering::Relaxed);
        self.evals_mu.fetch_add(report.evals_mu, Ordering::Relaxed);
        self.evals_sigma
            .fetch_add(report.evals_sigma, Ordering::Relaxed);
        self.scalars_drawn
            .fetch_add(report.scalars_drawn, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CostReport {
        CostReport {
            evals_g: self.evals_g.load(Ordering::Relaxed),
            evals_f: self.evals_f.load(Ordering::Relaxed),
            evals_mu: self.evals_mu.load(Ordering::Relaxed),
            evals_sigma: self.evals_sigma.load(Ordering::Relaxed),
            scalars_drawn: self.scalars_drawn.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostReport {
    pub evals_g: u64,
    pub evals_f: u64,
    pub evals_mu: u64,
    pub evals_sigma: u64,
    pub scalars_drawn: u64,
}

impl CostReport {
    pub fn total(&self) -> u64 {
        self.evals_g + self.evals_f + self.evals_mu + self.evals_sigma + self.scalars_drawn
    }
}

impl std::ops::Add for CostReport {
    type Output = CostReport;

    fn add(self, o: CostReport) -> CostReport {
        CostReport {
            evals_g: self.evals_g + o.evals_g,
            evals_f: self.evals_f + o.evals_f,
            evals_mu: self.evals_mu + o.evals_mu,
            evals_sigma: self.evals_sigma + o.evals_sigma,
            scalars_drawn: self.scalars_drawn + o.scalars_drawn,
        }
    }
}

/// Per-path unit cost `e` under the "one μ-eval, one σ-eval and `d`
/// scalars per step" model: `N(d + 2)` for Euler paths, `d + 2` for exact draws.
pub fn unit_path_cost(euler_steps: Option<u32>, dim: usize) -> f64 {
    euler_steps.unwrap_or(1) as f64 * (dim as f64 + 2.0)
}

/// Cost recursion evaluated as an equality:
///
/// ```text
/// C_{n,M} = M^n (M^M e + g) 1{n ≥ 1}
///         + Σ_{l=0}^{n-1} M^{n-l} (M^M e + f + C_{l,M} + C_{l-1,M}),
/// ```
///
/// with `C_{0,M} = C_{-1,M} = 0`. Saturates to `+∞` on overflow.
pub fn cost_recursion(n: u32, m: u32, e: f64, g: f64, f: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mf = m as f64;
    let path = mf.powf(mf) * e;
    // c[k] = C_{k-1}; c[0] = C_{-1} = 0
    let mut c = vec![0.0f64; n as usize + 2];
    for k in 1..=n {
        let mut total = mf.powi(k as i32) * (path + g);
        for l in 0..k {
            let below = c[l as usize + 1] + c[l as usize];
            total += mf.powi((k - l) as i32) * (path + f + below);
        }
        c[k as usize + 1] = total;
    }
    c[n as usize + 1]
}

/// A positive quantity stored as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub ln: f64,
}

impl LogValue {
    /// `None` when the value does not fit in an `f64`.
    pub fn value(&self) -> Option<f64> {
        let v = self.ln.exp();
        v.is_finite().then_some(v)
    }

    pub fn overflows(&self) -> bool {
        self.value().is_none()
    }
}

/// `12 (3e + g + f) · 12^{5n³} · n^{8n³}`, in log space.
pub fn cost_bound_sum(n: u32, e: f64, g: f64, f: f64) -> LogValue {
    let n3 = (n as f64).powi(3);
    let ln = (12.0 * (3.0 * e + g + f)).ln() + 5.0 * n3 * 12f64.ln() + 8.0 * n3 * (n as f64).ln();
    LogValue { ln }
}

/// `ln Σ_{k=1}^{n+1} C_{k³,k}` with the given unit costs.
pub fn ln_coupled_cost_sum(n: u32, e: f64, g: f64, f: f64) -> f64 {
    let terms: Vec<f64> = (1..=n + 1)
        .map(|k| cost_recursion(k * k * k, k, e, g, f))
        .collect();
    terms.iter().sum::<f64>().ln()
}
