//! Slow, independent cross-check: dense full-gradient ascent on the same dual
//! the production solver maximizes coordinate-wise, plus a from-scratch
//! marginal enumerator. Desk-scale instances only.

use crate::diagnostics::residuals;
use crate::error::{Error, Result};
use crate::problem::{validate, BridgeProblem};
use crate::solver::{BridgeSolution, ScalingState, SolveStatus, KERNEL_SCALE};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Line-search steps smaller than this abort the run.
    pub step_tolerance: f64,
    /// Terminate when the gradient max-abs falls below this.
    pub gradient_tolerance: f64,
    pub max_steps: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            step_tolerance: 1e-14,
            gradient_tolerance: 1e-8,
            max_steps: 200_000,
        }
    }
}

const MAX_TOTAL_DIM: usize = 64;

/// Per-mode residual (and multiplier) vectors.
type Multipliers = Vec<Vec<f64>>;

/// Flat view of the active support plus the (mode, index) -> slot map for a
/// single concatenated multiplier vector.
struct Dense {
    shape: Vec<usize>,
    offsets: Vec<usize>,
    constrained: Vec<bool>,
    targets: Vec<f64>,
    /// Per active entry: kernel value, then per mode the multiplier slot and
    /// the template sign.
    entries: Vec<(f64, Vec<(usize, f64)>)>,
}

impl Dense {
    fn build(problem: &BridgeProblem) -> Self {
        let shape = problem.shape().to_vec();
        let mut offsets = Vec::with_capacity(shape.len());
        let mut total = 0usize;
        for &n in &shape {
            offsets.push(total);
            total += n;
        }
        let mut constrained = vec![false; total];
        let mut targets = vec![0.0; total];
        for (l, &n) in shape.iter().enumerate() {
            for t in 0..n {
                if problem.is_constrained(l, t) {
                    constrained[offsets[l] + t] = true;
                    targets[offsets[l] + t] = problem.marginals[l][t];
                }
            }
        }
        let entries = problem
            .prior
            .indexed_iter()
            .enumerate()
            .filter(|(flat, _)| problem.is_active(*flat))
            .map(|(flat, (idx, q))| {
                let slots = idx
                    .iter()
                    .enumerate()
                    .map(|(l, &i)| {
                        (offsets[l] + i, problem.templates[l].signs()[flat] as f64)
                    })
                    .collect();
                (q * KERNEL_SCALE, slots)
            })
            .collect();
        Self {
            shape,
            offsets,
            constrained,
            targets,
            entries,
        }
    }

    fn mass_into(&self, mu: &[f64], weights: Option<&mut Vec<f64>>) -> f64 {
        let mut mass = 0.0;
        let mut weights = weights;
        if let Some(w) = weights.as_deref_mut() {
            w.clear();
        }
        for (kernel, slots) in &self.entries {
            let mut exponent = 0.0;
            for &(slot, sign) in slots {
                exponent -= sign * mu[slot];
            }
            let w = kernel * exponent.exp();
            mass += w;
            if let Some(buf) = weights.as_deref_mut() {
                buf.push(w);
            }
        }
        mass
    }

    fn dual(&self, mu: &[f64]) -> f64 {
        let mut h = -self.mass_into(mu, None);
        for (slot, &m) in mu.iter().enumerate() {
            if self.constrained[slot] {
                h -= m * self.targets[slot];
            }
        }
        h
    }

    /// Gradient of the dual: the constrained residual at every slot.
    fn gradient(&self, mu: &[f64], weights: &mut Vec<f64>, out: &mut [f64]) {
        self.mass_into(mu, Some(weights));
        out.fill(0.0);
        for ((_, slots), &w) in self.entries.iter().zip(weights.iter()) {
            for &(slot, sign) in slots {
                out[slot] += sign * w;
            }
        }
        for (slot, g) in out.iter_mut().enumerate() {
            if self.constrained[slot] {
                *g -= self.targets[slot];
            } else {
                *g = 0.0;
            }
        }
    }

    fn split(&self, flat: &[f64]) -> Multipliers {
        self.shape
            .iter()
            .zip(&self.offsets)
            .map(|(&n, &o)| flat[o..o + n].to_vec())
            .collect()
    }
}

/// Full-gradient ascent with backtracking (halving) line search from zero
/// multipliers; the initial step of each search is a Barzilai-Borwein
/// estimate, safeguarded by the Armijo test. Shares no update code with the
/// production sweep.
pub fn oracle_solve(problem: &BridgeProblem, options: &OracleOptions) -> Result<BridgeSolution> {
    let report = validate(problem);
    if !report.is_valid() {
        return Err(Error::InvalidProblem(report.violations.join("; ")));
    }
    if !(options.step_tolerance > 0.0)
        || !(options.gradient_tolerance > 0.0)
        || options.max_steps == 0
    {
        return Err(Error::InvalidProblem(
            "oracle options must all be positive".into(),
        ));
    }
    let total: usize = problem.shape().iter().sum();
    if total > MAX_TOTAL_DIM {
        return Err(Error::InvalidProblem(format!(
            "oracle is desk-scale only: total index count {total} exceeds {MAX_TOTAL_DIM}"
        )));
    }

    let dense = Dense::build(problem);
    let mut mu = vec![0.0f64; total];
    let mut g = vec![0.0f64; total];
    let mut scratch = Vec::with_capacity(dense.entries.len());
    let mut h = dense.dual(&mu);
    let mut gradient_inf = f64::INFINITY;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (mu, g) of last step
    // nonmonotone (Grippo-style) reference window; plain Armijo stalls in the
    // float-flat neighborhood of ill-conditioned optima
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::new();

    for step in 0..options.max_steps {
        dense.gradient(&mu, &mut scratch, &mut g);
        gradient_inf = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gradient_inf <= options.gradient_tolerance {
            return Ok(finish(problem, &dense, &mu, step));
        }
        let g_sq: f64 = g.iter().map(|v| v * v).sum();
        let mut s = match &prev {
            Some((mu0, g0)) => {
                // BB1 step: <dmu, dmu> / <dmu, -(g - g0)>
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..total {
                    let dm = mu[i] - mu0[i];
                    num += dm * dm;
                    den += dm * (g0[i] - g[i]);
                }
                if den > 0.0 && num > 0.0 {
                    (num / den).clamp(options.step_tolerance, 1e8)
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let h_ref = recent.iter().copied().fold(h, f64::min);
        loop {
            let trial: Vec<f64> = mu.iter().zip(&g).map(|(m, gv)| m + s * gv).collect();
            let h_trial = dense.dual(&trial);
            if h_trial >= h_ref + 1e-4 * s * g_sq {
                prev = Some((std::mem::replace(&mut mu, trial), g.clone()));
                h = h_trial;
                recent.push_back(h);
                if recent.len() > 10 {
                    recent.pop_front();
                }
                break;
            }
            s *= 0.5;
            if s < options.step_tolerance {
                return Err(Error::OracleFailed {
                    steps: step,
                    gradient_inf,
                });
            }
        }
    }
    Err(Error::OracleFailed {
        steps: options.max_steps,
        gradient_inf,
    })
}

fn finish(problem: &BridgeProblem, dense: &Dense, mu: &[f64], steps: usize) -> BridgeSolution {
    let mut posterior = DenseTensor::zeros(problem.shape().to_vec()).unwrap();
    for (flat, (idx, q)) in problem.prior.indexed_iter().enumerate() {
        if !problem.is_active(flat) {
            continue;
        }
        let mut exponent = 0.0;
        for (l, &i) in idx.iter().enumerate() {
            exponent -= problem.templates[l].signs()[flat] as f64 * mu[dense.offsets[l] + i];
        }
        posterior.values_mut()[flat] = q * KERNEL_SCALE * exponent.exp();
    }
    let final_residuals = residuals(&posterior, problem).expect("shapes agree by construction");
    let factors = dense
        .split(mu)
        .into_iter()
        .map(|row| row.into_iter().map(|m| (-m).exp()).collect())
        .collect();
    BridgeSolution {
        status: SolveStatus::Converged,
        posterior,
        state: ScalingState { factors },
        iterations_used: steps,
        final_residuals,
        trace: None,
    }
}

/// Per-mode residual vectors by naive full enumeration with its own index
/// arithmetic (no shared marginalization code); unconstrained indices zero.
pub fn brute_force_marginal_check(
    posterior: &DenseTensor,
    problem: &BridgeProblem,
) -> Result<Multipliers> {
    if posterior.shape() != problem.shape() {
        return Err(Error::Shape(format!(
            "posterior shape {:?} vs problem shape {:?}",
            posterior.shape(),
            problem.shape()
        )));
    }
    let shape = problem.shape();
    let order = shape.len();
    let mut out: Multipliers = shape.iter().map(|&n| vec![0.0; n]).collect();
    let mut idx = vec![0usize; order];
    loop {
        // recompute the flat offset from scratch each visit
        let mut flat = 0usize;
        for (l, &i) in idx.iter().enumerate() {
            flat = flat * shape[l] + i;
        }
        let v = posterior.values()[flat];
        for (l, &i) in idx.iter().enumerate() {
            let sg = problem.templates[l].signs()[flat];
            if sg != 0 {
                out[l][i] += sg as f64 * v;
            }
        }
        // manual odometer, most-significant first
        let mut l = order;
        loop {
            if l == 0 {
                for (mode, row) in out.iter_mut().enumerate() {
                    for (t, r) in row.iter_mut().enumerate() {
                        if problem.is_constrained(mode, t) {
                            *r -= problem.marginals[mode][t];
                        } else {
                            *r = 0.0;
                        }
                    }
                }
                return Ok(out);
            }
            l -= 1;
            idx[l] += 1;
            if idx[l] < shape[l] {
                break;
            }
            idx[l] = 0;
        }
    }
}
