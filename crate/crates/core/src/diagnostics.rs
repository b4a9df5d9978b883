//! Convergence instrumentation: residual traces, log-residual linear-rate
//! estimation, and posterior-vs-problem fixture validation.

use crate::error::{Error, Result};
use crate::problem::BridgeProblem;
use crate::tensor::{signed_marginal, DenseTensor};

/// One trace row. `residual_inf`/`residual_l2` are the mode's constrained
/// residual norms measured immediately before that mode's own update (the
/// post-update value is zero up to roundoff, by exact block maximization);
/// `dual_value` is measured immediately after the update, so the column is
/// non-decreasing row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub sweep: usize,
    pub mode: usize,
    pub residual_inf: f64,
    pub residual_l2: f64,
    pub dual_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    /// CSV with header `sweep,mode,residual_inf,residual_l2,dual_value`.
    /// Floats are written as shortest exact decimal (round-trips bit-exact).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,mode,residual_inf,residual_l2,dual_value\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.sweep, row.mode, row.residual_inf, row.residual_l2, row.dual_value
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Document("empty trace CSV".into()))?;
        if header.trim() != "sweep,mode,residual_inf,residual_l2,dual_value" {
            return Err(Error::Document(format!(
                "unexpected trace CSV header: {header:?}"
            )));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Document(format!(
                    "trace CSV line {}: expected 5 fields, found {}",
                    n + 2,
                    fields.len()
                )));
            }
            let parse_f = |s: &str, what: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Document(format!("trace CSV line {}: bad {what} {s:?}", n + 2))
                })
            };
            let parse_u = |s: &str, what: &str| {
                s.trim().parse::<usize>().map_err(|_| {
                    Error::Document(format!("trace CSV line {}: bad {what} {s:?}", n + 2))
                })
            };
            rows.push(TraceRow {
                sweep: parse_u(fields[0], "sweep")?,
                mode: parse_u(fields[1], "mode")?,
                residual_inf: parse_f(fields[2], "residual_inf")?,
                residual_l2: parse_f(fields[3], "residual_l2")?,
                dual_value: parse_f(fields[4], "dual_value")?,
            });
        }
        Ok(Self { rows })
    }
}

/// Per-mode residual vectors: signed marginal minus target, with
/// unconstrained indices masked to zero.
pub fn residuals(posterior: &DenseTensor, problem: &BridgeProblem) -> Result<Vec<Vec<f64>>> {
    if posterior.shape() != problem.shape() {
        return Err(Error::Shape(format!(
            "posterior shape {:?} does not match problem shape {:?}",
            posterior.shape(),
            problem.shape()
        )));
    }
    let mut out = Vec::with_capacity(problem.order());
    for mode in 0..problem.order() {
        let mut v = signed_marginal(posterior, &problem.templates[mode], mode)?;
        for (t, r) in v.iter_mut().enumerate() {
            if problem.is_constrained(mode, t) {
                *r -= problem.marginals[mode][t];
            } else {
                *r = 0.0;
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Which residual norm a rate fit reads from the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualNorm {
    Inf,
    L2,
}

/// Least-squares line through (sweep, log residual) after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// Per-sweep change of the log residual; negative means decay.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub burn_in: usize,
}

/// A fit, or `Undefined` when a residual in the window is not positive
/// (already converged to roundoff; there is no rate left to measure).
#[derive(Debug, Clone, PartialEq)]
pub enum RateOutcome {
    Fit(RateEstimate),
    Undefined,
}

pub fn estimate_rate(
    trace: &ConvergenceTrace,
    mode: usize,
    burn_in: usize,
    norm: ResidualNorm,
) -> Result<RateOutcome> {
    let points: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.mode == mode && r.sweep >= burn_in)
        .map(|r| {
            let res = match norm {
                ResidualNorm::Inf => r.residual_inf,
                ResidualNorm::L2 => r.residual_l2,
            };
            (r.sweep as f64, res)
        })
        .collect();
    let total_rows = trace.rows.iter().filter(|r| r.mode == mode).count();
    if points.len() < 3 {
        return Err(Error::TraceTooShort {
            mode,
            need: burn_in + 3,
            found: total_rows,
        });
    }
    if points.iter().any(|&(_, res)| res <= 0.0) {
        return Ok(RateOutcome::Undefined);
    }

    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, res) in &points {
        let y = res.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let var_x = sxx - sx * sx / n;
    let var_y = syy - sy * sy / n;
    let cov = sxy - sx * sy / n;
    let slope = cov / var_x;
    let intercept = (sy - slope * sx) / n;
    let r_squared = if var_y == 0.0 {
        1.0 // constant log residual is fit exactly by the zero-slope line
    } else {
        (cov * cov / (var_x * var_y)).min(1.0)
    };
    Ok(RateOutcome::Fit(RateEstimate {
        slope,
        intercept,
        r_squared,
        burn_in,
    }))
}

/// Per-mode, per-index check of a posterior against a problem's marginals.
#[derive(Debug, Clone)]
pub struct FixtureReport {
    pub tolerance: f64,
    /// One entry per constrained index of each mode.
    pub checks: Vec<IndexCheck>,
}

#[derive(Debug, Clone)]
pub struct IndexCheck {
    pub mode: usize,
    pub index: usize,
    pub residual: f64,
    pub pass: bool,
}

impl FixtureReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self, mode: usize) -> Vec<usize> {
        self.checks
            .iter()
            .filter(|c| c.mode == mode && !c.pass)
            .map(|c| c.index)
            .collect()
    }

    pub fn max_residual(&self, mode: usize) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.mode == mode)
            .map(|c| c.residual.abs())
            .fold(0.0, f64::max)
    }
}

pub fn validate_fixture(
    posterior: &DenseTensor,
    problem: &BridgeProblem,
    tolerance: f64,
) -> Result<FixtureReport> {
    let res = residuals(posterior, problem)?;
    let mut checks = Vec::new();
    for (mode, vec) in res.iter().enumerate() {
        for (index, &r) in vec.iter().enumerate() {
            if problem.is_constrained(mode, index) {
                checks.push(IndexCheck {
                    mode,
                    index,
                    residual: r,
                    pass: r.abs() <= tolerance,
                });
            }
        }
    }
    Ok(FixtureReport { tolerance, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::{eco_problem, eco_reference_posterior, synthetic_4x4, synthetic_problem};

    #[test]
    fn synthetic_reference_posterior_fits_to_its_precision() {
        let fx = synthetic_4x4();
        let problem = synthetic_problem();
        let res = residuals(&fx.reference_posterior, &problem).unwrap();
        let max = res
            .iter()
            .flatten()
            .fold(0.0f64, |acc, r| acc.max(r.abs()));
        assert!(max <= 1e-3, "max residual {max}");
        assert!(validate_fixture(&fx.reference_posterior, &problem, 1e-3)
            .unwrap()
            .pass());
    }

    #[test]
    fn zero_posterior_zero_marginals() {
        let mut problem = synthetic_problem();
        problem.marginals = vec![vec![0.0; 4], vec![0.0; 4]];
        let zero = DenseTensor::zeros(vec![4, 4]).unwrap();
        let res = residuals(&zero, &problem).unwrap();
        assert!(res.iter().flatten().all(|&r| r == 0.0));
        assert!(validate_fixture(&zero, &problem, 1e-30).unwrap().pass());
    }

    #[test]
    fn eco_reference_posterior_fails_exactly_on_first_three_columns() {
        let problem = eco_problem();
        let posterior = eco_reference_posterior();
        let report = validate_fixture(&posterior, &problem, 1e-3).unwrap();
        assert!(!report.pass());
        assert!(report.failing(0).is_empty(), "all row constraints hold");
        assert_eq!(report.failing(1), vec![0, 1, 2]);
    }

    #[test]
    fn geometric_trace_has_exact_slope() {
        let rows = (0..20)
            .map(|s| TraceRow {
                sweep: s,
                mode: 0,
                residual_inf: 10f64.powi(-(s as i32)),
                residual_l2: 10f64.powi(-(s as i32)),
                dual_value: 0.0,
            })
            .collect();
        let trace = ConvergenceTrace { rows };
        let RateOutcome::Fit(fit) = estimate_rate(&trace, 0, 0, ResidualNorm::Inf).unwrap()
        else {
            panic!()
        };
        assert!((fit.slope + 10f64.ln()).abs() <= 1e-12);
        assert!((fit.r_squared - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn constant_trace_has_zero_slope() {
        let rows = (0..10)
            .map(|s| TraceRow {
                sweep: s,
                mode: 1,
                residual_inf: 0.25,
                residual_l2: 0.25,
                dual_value: 0.0,
            })
            .collect();
        let trace = ConvergenceTrace { rows };
        let RateOutcome::Fit(fit) = estimate_rate(&trace, 1, 0, ResidualNorm::Inf).unwrap()
        else {
            panic!()
        };
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn zero_residual_in_window_is_undefined() {
        let rows = (0..10)
            .map(|s| TraceRow {
                sweep: s,
                mode: 0,
                residual_inf: if s < 5 { 0.1 } else { 0.0 },
                residual_l2: 0.0,
                dual_value: 0.0,
            })
            .collect();
        let trace = ConvergenceTrace { rows };
        assert_eq!(
            estimate_rate(&trace, 0, 0, ResidualNorm::Inf).unwrap(),
            RateOutcome::Undefined
        );
    }

    #[test]
    fn rate_is_invariant_to_uniform_rescaling_up_to_intercept() {
        let mk = |scale: f64| ConvergenceTrace {
            rows: (0..15)
                .map(|s| TraceRow {
                    sweep: s,
                    mode: 0,
                    residual_inf: scale * 0.5f64.powi(s as i32),
                    residual_l2: scale * 0.5f64.powi(s as i32),
                    dual_value: 0.0,
                })
                .collect(),
        };
        let RateOutcome::Fit(a) = estimate_rate(&mk(1.0), 0, 2, ResidualNorm::Inf).unwrap()
        else {
            panic!()
        };
        let RateOutcome::Fit(b) = estimate_rate(&mk(37.0), 0, 2, ResidualNorm::Inf).unwrap()
        else {
            panic!()
        };
        assert!((a.slope - b.slope).abs() <= 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let trace = ConvergenceTrace {
            rows: vec![
                TraceRow {
                    sweep: 0,
                    mode: 0,
                    residual_inf: 0.125,
                    residual_l2: 3.5e-13,
                    dual_value: -12.0 / std::f64::consts::E,
                },
                TraceRow {
                    sweep: 0,
                    mode: 1,
                    residual_inf: 1e-300,
                    residual_l2: 0.1 + 0.2,
                    dual_value: -4.0,
                },
            ],
        };
        let parsed = ConvergenceTrace::from_csv(&trace.to_csv()).unwrap();
        assert_eq!(parsed, trace);
    }
}
