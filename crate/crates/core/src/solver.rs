//! Cyclic block coordinate ascent on the dual of the entropic projection.
//!
//! Each active prior entry is multiplied by the fixed kernel factor `1/e` and
//! by one scaling factor per mode, raised to that entry's template sign. A
//! mode update solves, per index, the scalar equation `a*x - b/x = c` exactly,
//! so the updated mode's constrained marginals hold exactly after its own
//! update; convergence is reached when a full sweep leaves every constrained
//! residual within tolerance.

use crate::diagnostics::{residuals, ConvergenceTrace, TraceRow};
use crate::error::{Error, Result};
use crate::problem::{validate, BridgeProblem};
use crate::tensor::{signed_marginal, DenseTensor, SignTemplate};

/// Fixed multiplier applied to the active prior to form the scaling kernel.
pub(crate) const KERNEL_SCALE: f64 = 1.0 / std::f64::consts::E;

/// One positive scaling vector per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState {
    pub factors: Vec<Vec<f64>>,
}

impl ScalingState {
    pub fn ones(shape: &[usize]) -> Self {
        Self {
            factors: shape.iter().map(|&n| vec![1.0; n]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct BridgeSolution {
    pub status: SolveStatus,
    pub posterior: DenseTensor,
    pub state: ScalingState,
    /// Full sweeps performed.
    pub iterations_used: usize,
    /// Per-mode residual vectors at termination (unconstrained indices zero).
    pub final_residuals: Vec<Vec<f64>>,
    pub trace: Option<ConvergenceTrace>,
}

impl BridgeSolution {
    pub fn max_residual(&self) -> f64 {
        self.final_residuals
            .iter()
            .flatten()
            .fold(0.0f64, |acc, r| acc.max(r.abs()))
    }
}

/// The unique positive root of `a*x - b/x = c` for `a, b >= 0`, not both zero
/// unless `c = 0` (which returns 1 by convention: an index with no active
/// support keeps its neutral factor).
pub fn solve_scaling_root(a: f64, b: f64, c: f64) -> Result<f64> {
    let err = || Error::RootDomain {
        a,
        b,
        c,
        location: None,
    };
    if !(a >= 0.0) || !(b >= 0.0) || !c.is_finite() {
        return Err(err());
    }
    if a > 0.0 {
        if b == 0.0 {
            return if c > 0.0 { Ok(c / a) } else { Err(err()) };
        }
        let s = (c * c + 4.0 * a * b).sqrt();
        // rationalize the cancelling branch: (c + s)/(2a) == 2b/(s - c)
        Ok(if c >= 0.0 { (c + s) / (2.0 * a) } else { 2.0 * b / (s - c) })
    } else if b > 0.0 {
        if c < 0.0 {
            Ok(b / -c)
        } else {
            Err(err())
        }
    } else if c == 0.0 {
        Ok(1.0)
    } else {
        Err(err())
    }
}

/// Precomputed view of the active support.
struct ActiveEntry {
    coords: Vec<usize>,
    signs: Vec<i8>,
    kernel: f64,
}

struct Context<'a> {
    problem: &'a BridgeProblem,
    entries: Vec<ActiveEntry>,
}

impl<'a> Context<'a> {
    fn build(problem: &'a BridgeProblem) -> Self {
        let entries = problem
            .prior
            .indexed_iter()
            .enumerate()
            .filter(|(flat, _)| problem.is_active(*flat))
            .map(|(flat, (coords, v))| ActiveEntry {
                signs: problem
                    .templates
                    .iter()
                    .map(|t| t.signs()[flat])
                    .collect(),
                coords,
                kernel: v * KERNEL_SCALE,
            })
            .collect();
        Self { problem, entries }
    }

    /// Entry weight with every mode's factor applied except `skip`.
    fn weight_excluding(&self, entry: &ActiveEntry, state: &ScalingState, skip: usize) -> f64 {
        let mut w = entry.kernel;
        for (m, (&i, &sg)) in entry.coords.iter().zip(&entry.signs).enumerate() {
            if m == skip {
                continue;
            }
            let f = state.factors[m][i];
            w *= if sg > 0 { f } else { 1.0 / f };
        }
        w
    }

    fn posterior(&self, state: &ScalingState) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(self.problem.shape().to_vec())?;
        for entry in &self.entries {
            let mut w = entry.kernel;
            for (m, (&i, &sg)) in entry.coords.iter().zip(&entry.signs).enumerate() {
                let f = state.factors[m][i];
                w *= if sg > 0 { f } else { 1.0 / f };
            }
            out.set(&entry.coords, w)?;
        }
        Ok(out)
    }

    /// Exact block maximization over `mode`'s constrained factors. Returns
    /// false when a factor left the overflow guard window.
    fn update_mode(&self, state: &mut ScalingState, mode: usize) -> Result<bool> {
        let dim = self.problem.shape()[mode];
        let mut acc = vec![(0.0f64, 0.0f64); dim];
        for entry in &self.entries {
            let w = self.weight_excluding(entry, state, mode);
            let t = entry.coords[mode];
            if entry.signs[mode] > 0 {
                acc[t].0 += w;
            } else {
                acc[t].1 += w;
            }
        }
        let guard = self.problem.options.overflow_guard;
        for t in 0..dim {
            if !self.problem.is_constrained(mode, t) {
                continue; // virtual index: factor stays at 1
            }
            let (a, b) = acc[t];
            let c = self.problem.marginals[mode][t];
            if a == 0.0 && b == 0.0 {
                if c != 0.0 {
                    return Err(Error::InfeasibleStructure(format!(
                        "mode {mode} index {t} has no active support but marginal {c}"
                    )));
                }
                state.factors[mode][t] = 1.0;
                continue;
            }
            let x = solve_scaling_root(a, b, c).map_err(|e| match e {
                Error::RootDomain { a, b, c, .. } => Error::RootDomain {
                    a,
                    b,
                    c,
                    location: Some((mode, t)),
                },
                other => other,
            })?;
            if !x.is_finite() || x > guard || x < 1.0 / guard {
                state.factors[mode][t] = x;
                return Ok(false);
            }
            state.factors[mode][t] = x;
        }
        Ok(true)
    }

    /// Constrained residual norms of one mode under the current state.
    fn mode_residual_norms(&self, state: &ScalingState, mode: usize) -> (f64, f64) {
        let dim = self.problem.shape()[mode];
        let mut res = vec![0.0f64; dim];
        for entry in &self.entries {
            let w = self.weight_excluding(entry, state, mode);
            let t = entry.coords[mode];
            let f = state.factors[mode][t];
            let signed = if entry.signs[mode] > 0 { w * f } else { -w / f };
            res[t] += signed;
        }
        let mut inf = 0.0f64;
        let mut l2 = 0.0f64;
        for t in 0..dim {
            if !self.problem.is_constrained(mode, t) {
                continue;
            }
            let r = res[t] - self.problem.marginals[mode][t];
            inf = inf.max(r.abs());
            l2 += r * r;
        }
        (inf, l2.sqrt())
    }

    /// Dual objective: -sum(P) - sum over constrained indices of mu * c,
    /// with mu = -ln(factor).
    fn dual(&self, state: &ScalingState) -> f64 {
        let mut mass = 0.0;
        for entry in &self.entries {
            let mut w = entry.kernel;
            for (m, (&i, &sg)) in entry.coords.iter().zip(&entry.signs).enumerate() {
                let f = state.factors[m][i];
                w *= if sg > 0 { f } else { 1.0 / f };
            }
            mass += w;
        }
        let mut lin = 0.0;
        for (mode, factors) in state.factors.iter().enumerate() {
            for (t, &f) in factors.iter().enumerate() {
                if self.problem.is_constrained(mode, t) {
                    lin += -f.ln() * self.problem.marginals[mode][t];
                }
            }
        }
        -mass - lin
    }
}

/// Posterior implied by a scaling state: zero off the active support,
/// kernel times the signed factor product on it.
pub fn reconstruct_posterior(problem: &BridgeProblem, state: &ScalingState) -> Result<DenseTensor> {
    check_state(problem, state)?;
    Context::build(problem).posterior(state)
}

/// Dual objective value of a scaling state.
pub fn dual_objective(problem: &BridgeProblem, state: &ScalingState) -> Result<f64> {
    check_state(problem, state)?;
    Ok(Context::build(problem).dual(state))
}

fn check_state(problem: &BridgeProblem, state: &ScalingState) -> Result<()> {
    if state.factors.len() != problem.order()
        || state
            .factors
            .iter()
            .zip(problem.shape())
            .any(|(f, &n)| f.len() != n)
    {
        return Err(Error::Shape(
            "scaling state does not match the problem shape".into(),
        ));
    }
    if state.factors.iter().flatten().any(|&f| !(f > 0.0)) {
        return Err(Error::InvalidProblem(
            "scaling factors must be positive".into(),
        ));
    }
    Ok(())
}

/// One exact block update of `mode`, returning the new state.
pub fn mode_update(problem: &BridgeProblem, state: &ScalingState, mode: usize) -> Result<ScalingState> {
    check_state(problem, state)?;
    if mode >= problem.order() {
        return Err(Error::Mode {
            mode,
            order: problem.order(),
        });
    }
    let ctx = Context::build(problem);
    let mut next = state.clone();
    ctx.update_mode(&mut next, mode)?;
    Ok(next)
}

/// Run cyclic sweeps until every constrained residual is within tolerance.
pub fn solve_generalized(problem: &BridgeProblem) -> Result<BridgeSolution> {
    let report = validate(problem);
    if !report.is_valid() {
        return Err(Error::InvalidProblem(report.violations.join("; ")));
    }
    let ctx = Context::build(problem);
    let mut state = ScalingState::ones(problem.shape());
    let mut trace = problem.options.record_trace.then(ConvergenceTrace::default);
    let order = problem.order();
    let tol = problem.options.tolerance;

    let finish = |status, state: ScalingState, sweeps, trace| -> Result<BridgeSolution> {
        let posterior = ctx.posterior(&state)?;
        let final_residuals = residuals(&posterior, problem)?;
        Ok(BridgeSolution {
            status,
            posterior,
            state,
            iterations_used: sweeps,
            final_residuals,
            trace,
        })
    };

    for sweep in 0..problem.options.max_iterations {
        for mode in 0..order {
            let pre = trace
                .as_ref()
                .map(|_| ctx.mode_residual_norms(&state, mode));
            let in_guard = ctx.update_mode(&mut state, mode)?;
            if let (Some(trace), Some((inf, l2))) = (trace.as_mut(), pre) {
                trace.rows.push(TraceRow {
                    sweep,
                    mode,
                    residual_inf: inf,
                    residual_l2: l2,
                    dual_value: ctx.dual(&state),
                });
            }
            if !in_guard {
                return finish(SolveStatus::Diverged, state, sweep + 1, trace);
            }
        }
        let worst = (0..order)
            .map(|m| ctx.mode_residual_norms(&state, m).0)
            .fold(0.0f64, f64::max);
        if worst <= tol {
            return finish(SolveStatus::Converged, state, sweep + 1, trace);
        }
    }
    finish(
        SolveStatus::MaxIterations,
        state,
        problem.options.max_iterations,
        trace,
    )
}

/// Plain two-marginal scaling for a nonnegative matrix prior and positive row
/// and column targets; the all-positive special case of [`solve_generalized`].
pub fn classical_sinkhorn(
    prior: &DenseTensor,
    row_marginal: &[f64],
    col_marginal: &[f64],
    options: &crate::problem::SolveOptions,
) -> Result<BridgeSolution> {
    if prior.order() != 2 {
        return Err(Error::Shape(format!(
            "classical scaling needs an order-2 prior, got order {}",
            prior.order()
        )));
    }
    let (n, m) = (prior.shape()[0], prior.shape()[1]);
    if row_marginal.len() != n || col_marginal.len() != m {
        return Err(Error::Shape(format!(
            "marginal lengths ({}, {}) do not match prior shape ({n}, {m})",
            row_marginal.len(),
            col_marginal.len()
        )));
    }
    if row_marginal.iter().chain(col_marginal).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidProblem(
            "classical scaling needs strictly positive marginals".into(),
        ));
    }
    if prior.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidProblem("prior must be nonnegative".into()));
    }
    for i in 0..n {
        if (0..m).all(|j| prior.get(&[i, j]).unwrap() == 0.0) {
            return Err(Error::InfeasibleStructure(format!(
                "prior row {i} is identically zero but its marginal is positive"
            )));
        }
    }
    for j in 0..m {
        if (0..n).all(|i| prior.get(&[i, j]).unwrap() == 0.0) {
            return Err(Error::InfeasibleStructure(format!(
                "prior column {j} is identically zero but its marginal is positive"
            )));
        }
    }

    let guard = options.overflow_guard;
    let mut u = vec![1.0f64; n];
    let mut v = vec![1.0f64; m];
    let posterior_of = |u: &[f64], v: &[f64]| -> DenseTensor {
        let values = prior
            .indexed_iter()
            .map(|(idx, q)| q * u[idx[0]] * v[idx[1]])
            .collect();
        DenseTensor::new(vec![n, m], values).unwrap()
    };
    let residuals_of = |p: &DenseTensor| -> Vec<Vec<f64>> {
        let s = SignTemplate::all_positive(vec![n, m]).unwrap();
        let mut rows = signed_marginal(p, &s, 0).unwrap();
        let mut cols = signed_marginal(p, &s, 1).unwrap();
        for (r, t) in rows.iter_mut().zip(row_marginal) {
            *r -= t;
        }
        for (r, t) in cols.iter_mut().zip(col_marginal) {
            *r -= t;
        }
        vec![rows, cols]
    };
    let finish = |status, u: Vec<f64>, v: Vec<f64>, sweeps| {
        let posterior = posterior_of(&u, &v);
        let final_residuals = residuals_of(&posterior);
        BridgeSolution {
            status,
            posterior,
            state: ScalingState {
                factors: vec![u, v],
            },
            iterations_used: sweeps,
            final_residuals,
            trace: None,
        }
    };

    for sweep in 0..options.max_iterations {
        for i in 0..n {
            let s: f64 = (0..m).map(|j| prior.get(&[i, j]).unwrap() * v[j]).sum();
            u[i] = row_marginal[i] / s;
            if !u[i].is_finite() || u[i] > guard || u[i] < 1.0 / guard {
                return Ok(finish(SolveStatus::Diverged, u, v, sweep + 1));
            }
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| prior.get(&[i, j]).unwrap() * u[i]).sum();
            v[j] = col_marginal[j] / s;
            if !v[j].is_finite() || v[j] > guard || v[j] < 1.0 / guard {
                return Ok(finish(SolveStatus::Diverged, u, v, sweep + 1));
            }
        }
        let p = posterior_of(&u, &v);
        let worst = residuals_of(&p)
            .iter()
            .flatten()
            .fold(0.0f64, |acc, r| acc.max(r.abs()));
        if worst <= options.tolerance {
            return Ok(finish(SolveStatus::Converged, u, v, sweep + 1));
        }
    }
    Ok(finish(
        SolveStatus::MaxIterations,
        u,
        v,
        options.max_iterations,
    ))
}

/// Relative entropy sum P ln(P/Q) over the prior's support; zero posterior
/// entries contribute zero, posterior mass off the prior support is an error.
pub fn kl_objective(posterior: &DenseTensor, prior: &DenseTensor) -> Result<f64> {
    if posterior.shape() != prior.shape() {
        return Err(Error::Shape(format!(
            "posterior shape {:?} vs prior shape {:?}",
            posterior.shape(),
            prior.shape()
        )));
    }
    let mut total = 0.0;
    for ((idx, p), &q) in posterior.indexed_iter().zip(prior.values()) {
        if p == 0.0 {
            continue;
        }
        if q <= 0.0 || p < 0.0 {
            return Err(Error::AbsoluteContinuity { idx });
        }
        total += p * (p / q).ln();
    }
    Ok(total)
}
