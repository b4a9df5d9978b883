//! The solvable instance: prior, per-mode sign templates, marginal data and
//! solve options, together with structural validation, sign partitioning and
//! feasible random instance generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{signed_marginal, DenseTensor, SignTemplate};

/// Solve options. `tolerance` is the max-abs constrained marginal residual at
/// termination; `max_iterations` counts full sweeps over the modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Any scaling factor leaving [1/overflow_guard, overflow_guard] flips the
    /// run to `Diverged`.
    pub overflow_guard: f64,
    pub record_trace: bool,
    /// Per-mode index values whose marginal constraint is dropped (virtual
    /// nodes). Empty means every index of every mode is constrained.
    pub unconstrained: Vec<Vec<usize>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
            overflow_guard: 1e150,
            record_trace: false,
            unconstrained: Vec::new(),
        }
    }
}

/// A full problem instance.
#[derive(Debug, Clone)]
pub struct BridgeProblem {
    pub prior: DenseTensor,
    pub templates: Vec<SignTemplate>,
    pub marginals: Vec<Vec<f64>>,
    pub options: SolveOptions,
}

impl BridgeProblem {
    pub fn order(&self) -> usize {
        self.prior.order()
    }

    pub fn shape(&self) -> &[usize] {
        self.prior.shape()
    }

    /// True when `index` of `mode` carries a marginal constraint.
    pub fn is_constrained(&self, mode: usize, index: usize) -> bool {
        self.options
            .unconstrained
            .get(mode)
            .map_or(true, |list| !list.contains(&index))
    }

    /// An entry is active when its prior is positive and every template is
    /// nonzero there; active entries are the posterior's support.
    pub fn is_active(&self, flat: usize) -> bool {
        self.prior.values()[flat] > 0.0 && self.templates.iter().all(|t| t.signs()[flat] != 0)
    }
}

/// Outcome of structural validation. An empty report means structurally
/// well-formed; it is not a feasibility certificate.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the structural invariants of a problem. All problems are reportable;
/// feasibility itself is not decided here.
pub fn validate(problem: &BridgeProblem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let shape = problem.prior.shape();
    let order = problem.prior.order();

    if problem.templates.len() != order {
        report.violations.push(format!(
            "expected {} templates (one per mode), found {}",
            order,
            problem.templates.len()
        ));
    }
    for (l, t) in problem.templates.iter().enumerate() {
        if t.shape() != shape {
            report.violations.push(format!(
                "template {} has shape {:?}, prior has {:?}",
                l,
                t.shape(),
                shape
            ));
        }
    }
    if problem.marginals.len() != order {
        report.violations.push(format!(
            "expected {} marginal vectors, found {}",
            order,
            problem.marginals.len()
        ));
    }
    for (l, m) in problem.marginals.iter().enumerate() {
        if l < order && m.len() != shape[l] {
            report.violations.push(format!(
                "marginal {} has length {}, mode dimension is {}",
                l,
                m.len(),
                shape[l]
            ));
        }
    }
    if !problem.options.unconstrained.is_empty() && problem.options.unconstrained.len() != order {
        report.violations.push(format!(
            "unconstrained index lists cover {} modes, order is {}",
            problem.options.unconstrained.len(),
            order
        ));
    }
    for (l, list) in problem.options.unconstrained.iter().enumerate() {
        for &t in list {
            if l < order && t >= shape[l] {
                report
                    .violations
                    .push(format!("unconstrained index {} out of range in mode {}", t, l));
            }
        }
    }
    if !(problem.options.tolerance > 0.0) {
        report.violations.push("tolerance must be > 0".into());
    }
    if problem.options.max_iterations == 0 {
        report.violations.push("max_iterations must be >= 1".into());
    }
    if !(problem.options.overflow_guard > 1.0) {
        report.violations.push("overflow_guard must be > 1".into());
    }
    if !report.is_valid() {
        return report; // shapes are off; entry-level checks would be noise
    }

    for (idx, v) in problem.prior.indexed_iter() {
        if v < 0.0 {
            report
                .violations
                .push(format!("prior entry at {:?} is negative ({})", idx, v));
        } else if v > 0.0 {
            let nonzero = problem
                .templates
                .iter()
                .filter(|t| t.get(&idx).unwrap() != 0)
                .count();
            if nonzero != 0 && nonzero != order {
                report.violations.push(format!(
                    "partially active entry at {:?}: {} of {} template signs are nonzero",
                    idx, nonzero, order
                ));
            }
        }
    }

    // Per constrained index: the scalar update a*x - b/x = c needs a positive
    // root, so the marginal's sign is pinned wherever the template support is
    // one-sided.
    for mode in 0..order {
        for t in 0..shape[mode] {
            if !problem.is_constrained(mode, t) {
                continue;
            }
            let (mut has_pos, mut has_neg) = (false, false);
            for (idx, v) in problem.prior.indexed_iter() {
                if v > 0.0 && idx[mode] == t && problem.templates.iter().all(|s| s.get(&idx).unwrap() != 0) {
                    match problem.templates[mode].get(&idx).unwrap() {
                        1 => has_pos = true,
                        -1 => has_neg = true,
                        _ => {}
                    }
                }
            }
            let c = problem.marginals[mode][t];
            match (has_pos, has_neg) {
                (true, true) => {}
                (true, false) if c <= 0.0 => report.violations.push(format!(
                    "mode {} index {}: template support is all-positive but marginal is {}",
                    mode, t, c
                )),
                (false, true) if c >= 0.0 => report.violations.push(format!(
                    "mode {} index {}: template support is all-negative but marginal is {}",
                    mode, t, c
                )),
                (false, false) if c != 0.0 => report.violations.push(format!(
                    "mode {} index {}: no active support but marginal is {}",
                    mode, t, c
                )),
                _ => {}
            }
        }
    }

    report
}

/// Sign partition of the prior by the templates' sign pattern.
#[derive(Debug, Clone)]
pub enum SignPartition {
    /// Order 2: the four indicator-masked matrices, supported where
    /// (X, Y) signs are (+,+), (+,-), (-,+), (-,-).
    Matrix {
        q_pp: DenseTensor,
        q_pm: DenseTensor,
        q_mp: DenseTensor,
        q_mm: DenseTensor,
    },
    /// Order >= 3: per-mode positive/negative masks over the active support.
    Modes(Vec<ModeMasks>),
}

/// Boolean masks (flat, row-major) for one mode's +1 and -1 active entries.
#[derive(Debug, Clone)]
pub struct ModeMasks {
    pub positive: Vec<bool>,
    pub negative: Vec<bool>,
}

/// Partition the prior by template signs over the active support.
pub fn partition(prior: &DenseTensor, templates: &[SignTemplate]) -> Result<SignPartition> {
    if templates.iter().any(|t| t.shape() != prior.shape()) {
        return Err(Error::Shape(
            "templates must share the prior's shape".into(),
        ));
    }
    if templates.len() != prior.order() {
        return Err(Error::Shape(format!(
            "expected {} templates, found {}",
            prior.order(),
            templates.len()
        )));
    }
    let active: Vec<bool> = (0..prior.len())
        .map(|f| prior.values()[f] > 0.0 && templates.iter().all(|t| t.signs()[f] != 0))
        .collect();

    if prior.order() == 2 {
        let mut parts = vec![vec![0.0; prior.len()]; 4];
        for f in 0..prior.len() {
            if !active[f] {
                continue;
            }
            let x = templates[0].signs()[f];
            let y = templates[1].signs()[f];
            let which = match (x > 0, y > 0) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            parts[which][f] = prior.values()[f];
        }
        let shape = prior.shape().to_vec();
        let mut it = parts.into_iter();
        Ok(SignPartition::Matrix {
            q_pp: DenseTensor::new(shape.clone(), it.next().unwrap())?,
            q_pm: DenseTensor::new(shape.clone(), it.next().unwrap())?,
            q_mp: DenseTensor::new(shape.clone(), it.next().unwrap())?,
            q_mm: DenseTensor::new(shape, it.next().unwrap())?,
        })
    } else {
        let masks = templates
            .iter()
            .map(|t| ModeMasks {
                positive: (0..prior.len())
                    .map(|f| active[f] && t.signs()[f] > 0)
                    .collect(),
                negative: (0..prior.len())
                    .map(|f| active[f] && t.signs()[f] < 0)
                    .collect(),
            })
            .collect();
        Ok(SignPartition::Modes(masks))
    }
}

/// A generated problem together with the hidden posterior that witnesses its
/// feasibility.
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub problem: BridgeProblem,
    pub witness: DenseTensor,
}

/// Draw a random instance that is feasible by construction: a hidden positive
/// posterior is sampled on a random support, templates are drawn on the same
/// support, and the marginals are the witness's signed marginals.
pub fn generate_feasible(
    shape: &[usize],
    density: f64,
    negative_fraction: &[f64],
    seed: u64,
) -> Result<GeneratedProblem> {
    if shape.is_empty() {
        return Err(Error::Shape("shape must be nonempty".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidProblem(format!(
            "density must be in (0, 1], got {density}"
        )));
    }
    if negative_fraction.len() != shape.len() {
        return Err(Error::InvalidProblem(format!(
            "need one negative fraction per mode ({}), got {}",
            shape.len(),
            negative_fraction.len()
        )));
    }
    if negative_fraction.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::InvalidProblem(
            "negative fractions must lie in [0, 1]".into(),
        ));
    }

    const MAX_ATTEMPTS: usize = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = shape.len();
    let len: usize = shape.iter().product();

    for _ in 0..MAX_ATTEMPTS {
        let support: Vec<bool> = (0..len).map(|_| rng.gen::<f64>() < density).collect();
        if support.iter().all(|&s| !s) {
            continue;
        }
        let mut witness = DenseTensor::zeros(shape.to_vec())?;
        let mut prior = DenseTensor::zeros(shape.to_vec())?;
        let mut templates: Vec<SignTemplate> = (0..order)
            .map(|_| SignTemplate::zeros(shape.to_vec()))
            .collect::<Result<_>>()?;
        for f in 0..len {
            if !support[f] {
                continue;
            }
            let p0: f64 = rng.gen_range(0.1..1.0);
            witness.values_mut()[f] = p0;
            // perturbed positive prior on the same support
            prior.values_mut()[f] = p0 * rng.gen_range(0.5..1.5);
            for (l, t) in templates.iter_mut().enumerate() {
                let sign = if rng.gen::<f64>() < negative_fraction[l] {
                    -1
                } else {
                    1
                };
                t.signs_mut()[f] = sign;
            }
        }
        let marginals: Vec<Vec<f64>> = (0..order)
            .map(|l| signed_marginal(&witness, &templates[l], l))
            .collect::<Result<_>>()?;
        let problem = BridgeProblem {
            prior,
            templates,
            marginals,
            options: SolveOptions::default(),
        };
        if validate(&problem).is_valid() {
            return Ok(GeneratedProblem { problem, witness });
        }
        // a signed sum can land exactly on a pinned boundary; redraw
    }
    Err(Error::Generation {
        attempts: MAX_ATTEMPTS,
    })
}
