use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxIter,
    /// `p^T A p <= 0` or a non-finite curvature: the operator is not SPD.
    Breakdown,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::MaxIter => "max_iter",
            Termination::Breakdown => "breakdown",
        }
    }
}

/// Convergence record of one CG solve.
///
/// `residual_history[j]` is `||b - A x_j||_2` in the original, unpreconditioned
/// variables, so `residual_history.len() == iterations + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub wall_time: Duration,
    pub termination: Termination,
    /// Offending curvature `p^T A p` when `termination == Breakdown`.
    pub breakdown_curvature: Option<f64>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Tolerance
    }
}

/// Writes `solve_id,iteration,residual_norm` rows for one solve.
pub fn write_residual_csv(
    w: &mut impl Write,
    solve_id: &str,
    report: &SolveReport,
) -> std::io::Result<()> {
    for (j, r) in report.residual_history.iter().enumerate() {
        writeln!(w, "{solve_id},{j},{r:e}")?;
    }
    Ok(())
}

/// Extreme eigenvalue estimates of an SPD operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub kappa: f64,
    pub iterations: usize,
    /// False when the Lanczos recurrence broke down before `iters` steps
    /// without spanning the whole space.
    pub complete: bool,
}

impl ConditionEstimate {
    pub fn new(lambda_max: f64, lambda_min: f64, iterations: usize, complete: bool) -> Self {
        let kappa = if lambda_min > 0.0 { (lambda_max / lambda_min).max(1.0) } else { f64::INFINITY };
        Self { lambda_max, lambda_min, kappa, iterations, complete }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_match_history() {
        let rep = SolveReport {
            iterations: 2,
            residual_history: vec![1.0, 0.5, 0.25],
            final_residual: 0.25,
            wall_time: Duration::ZERO,
            termination: Termination::MaxIter,
            breakdown_curvature: None,
        };
        let mut buf = Vec::new();
        write_residual_csv(&mut buf, "s0", &rep).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("s0,0,1e0"));
    }

    #[test]
    fn kappa_at_least_one() {
        let c = ConditionEstimate::new(1.0, 1.0 + 1e-15, 3, true);
        assert_eq!(c.kappa, 1.0);
    }
}
