//! JSON document schemas for problems, solutions and hypergraphs, plus the
//! nested-array <-> tensor conversions they rely on.
//!
//! A problem file carries its prior either as dense nested arrays (with the
//! `templates` field alongside) or as a sparse entry list whose entries carry
//! per-mode signs inline; exactly one of the two must be present.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hypergraph::{Hyperedge, Hypergraph};
use crate::problem::{BridgeProblem, SolveOptions};
use crate::solver::{BridgeSolution, SolveStatus};
use crate::tensor::{dense_from_sparse, sparse_from_dense, DenseTensor, SignTemplate, SparseEntry};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub format_version: String,
    pub order: usize,
    pub shape: Vec<usize>,
    /// Dense nested arrays; mutually exclusive with `entries`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Value>,
    /// Sparse entry list carrying per-mode signs; mutually exclusive with
    /// `prior` + `templates`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<SparseEntryDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<Vec<Value>>,
    pub marginals: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unconstrained: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionsDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseEntryDoc {
    pub idx: Vec<usize>,
    pub prior_value: f64,
    pub signs: Vec<i8>,
}

/// Optional overrides of the solver defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overflow_guard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_trace: Option<bool>,
}

impl OptionsDocument {
    pub fn apply(&self, base: &mut SolveOptions) {
        if let Some(t) = self.tolerance {
            base.tolerance = t;
        }
        if let Some(m) = self.max_iterations {
            base.max_iterations = m;
        }
        if let Some(g) = self.overflow_guard {
            base.overflow_guard = g;
        }
        if let Some(r) = self.record_trace {
            base.record_trace = r;
        }
    }
}

/// Which prior encoding a document uses (preserved into the solution).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Dense,
    Sparse,
}

impl ProblemDocument {
    pub fn encoding(&self) -> Result<Encoding> {
        match (&self.prior, &self.entries) {
            (Some(_), None) => Ok(Encoding::Dense),
            (None, Some(_)) => Ok(Encoding::Sparse),
            (Some(_), Some(_)) => Err(Error::Document(
                "field `prior` and field `entries` are mutually exclusive".into(),
            )),
            (None, None) => Err(Error::Document(
                "one of field `prior` or field `entries` is required".into(),
            )),
        }
    }

    pub fn into_problem(&self) -> Result<BridgeProblem> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Document(format!(
                "unsupported format_version {:?} (expected {:?})",
                self.format_version, FORMAT_VERSION
            )));
        }
        if self.shape.len() != self.order {
            return Err(Error::Document(format!(
                "field `shape` has {} modes, field `order` says {}",
                self.shape.len(),
                self.order
            )));
        }
        let (prior, templates) = match self.encoding()? {
            Encoding::Dense => {
                let prior = tensor_from_nested(self.prior.as_ref().unwrap(), &self.shape)
                    .map_err(|e| Error::Document(format!("field `prior`: {e}")))?;
                let nested = self.templates.as_ref().ok_or_else(|| {
                    Error::Document("dense field `prior` requires field `templates`".into())
                })?;
                if nested.len() != self.order {
                    return Err(Error::Document(format!(
                        "field `templates` has {} arrays, order is {}",
                        nested.len(),
                        self.order
                    )));
                }
                let templates = nested
                    .iter()
                    .enumerate()
                    .map(|(l, v)| {
                        template_from_nested(v, &self.shape)
                            .map_err(|e| Error::Document(format!("field `templates[{l}]`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (prior, templates)
            }
            Encoding::Sparse => {
                if self.templates.is_some() {
                    return Err(Error::Document(
                        "field `templates` is redundant with field `entries` (signs are inline)"
                            .into(),
                    ));
                }
                let entries: Vec<SparseEntry> = self
                    .entries
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|e| SparseEntry {
                        idx: e.idx.clone(),
                        prior_value: e.prior_value,
                        signs: e.signs.clone(),
                    })
                    .collect();
                dense_from_sparse(&self.shape, &entries)
                    .map_err(|e| Error::Document(format!("field `entries`: {e}")))?
            }
        };
        let mut options = SolveOptions {
            unconstrained: self.unconstrained.clone(),
            ..SolveOptions::default()
        };
        if let Some(over) = &self.options {
            over.apply(&mut options);
        }
        Ok(BridgeProblem {
            prior,
            templates,
            marginals: self.marginals.clone(),
            options,
        })
    }

    pub fn from_problem(problem: &BridgeProblem, encoding: Encoding) -> Self {
        let (prior, entries, templates) = match encoding {
            Encoding::Dense => (
                Some(tensor_to_nested(&problem.prior)),
                None,
                Some(
                    problem
                        .templates
                        .iter()
                        .map(template_to_nested)
                        .collect(),
                ),
            ),
            Encoding::Sparse => (
                None,
                Some(
                    sparse_from_dense(&problem.prior, &problem.templates)
                        .into_iter()
                        .map(|e| SparseEntryDoc {
                            idx: e.idx,
                            prior_value: e.prior_value,
                            signs: e.signs,
                        })
                        .collect(),
                ),
                None,
            ),
        };
        let defaults = SolveOptions::default();
        let o = &problem.options;
        let options = (o.tolerance != defaults.tolerance
            || o.max_iterations != defaults.max_iterations
            || o.overflow_guard != defaults.overflow_guard
            || o.record_trace != defaults.record_trace)
            .then(|| OptionsDocument {
                tolerance: (o.tolerance != defaults.tolerance).then_some(o.tolerance),
                max_iterations: (o.max_iterations != defaults.max_iterations)
                    .then_some(o.max_iterations),
                overflow_guard: (o.overflow_guard != defaults.overflow_guard)
                    .then_some(o.overflow_guard),
                record_trace: o.record_trace.then_some(true),
            });
        Self {
            format_version: FORMAT_VERSION.to_string(),
            order: problem.order(),
            shape: problem.shape().to_vec(),
            prior,
            entries,
            templates,
            marginals: problem.marginals.clone(),
            unconstrained: problem.options.unconstrained.clone(),
            options,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDocument {
    /// "converged" | "max_iterations" | "diverged".
    pub status: String,
    /// Dense nested arrays, or a sparse `[{idx, value}]` list matching the
    /// input encoding.
    pub posterior: Value,
    pub factors: Vec<Vec<f64>>,
    pub iterations_used: usize,
    pub final_residuals: Vec<Vec<f64>>,
    /// Path of the trace CSV when one was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

pub fn status_string(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "max_iterations",
        SolveStatus::Diverged => "diverged",
    }
}

impl SolutionDocument {
    pub fn from_solution(
        solution: &BridgeSolution,
        encoding: Encoding,
        trace: Option<String>,
    ) -> Self {
        let posterior = match encoding {
            Encoding::Dense => tensor_to_nested(&solution.posterior),
            Encoding::Sparse => Value::Array(
                solution
                    .posterior
                    .indexed_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|(idx, v)| {
                        serde_json::json!({
                            "idx": idx,
                            "value": v,
                        })
                    })
                    .collect(),
            ),
        };
        Self {
            status: status_string(solution.status).to_string(),
            posterior,
            factors: solution.state.factors.clone(),
            iterations_used: solution.iterations_used,
            final_residuals: solution.final_residuals.clone(),
            trace,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperedgeDocument {
    pub nodes: Vec<usize>,
    pub sign: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypergraphDocument {
    pub node_count: usize,
    pub hyperedges: Vec<HyperedgeDocument>,
    /// Present on uniformization output: the appended padding node ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub virtual_nodes: Option<Vec<usize>>,
}

impl HypergraphDocument {
    pub fn into_hypergraph(&self) -> Result<Hypergraph> {
        let h = Hypergraph {
            node_count: self.node_count,
            hyperedges: self
                .hyperedges
                .iter()
                .map(|e| Hyperedge {
                    nodes: e.nodes.clone(),
                    sign: e.sign,
                })
                .collect(),
        };
        h.validate()?;
        Ok(h)
    }

    pub fn from_hypergraph(h: &Hypergraph, virtual_nodes: Option<Vec<usize>>) -> Self {
        Self {
            node_count: h.node_count,
            hyperedges: h
                .hyperedges
                .iter()
                .map(|e| HyperedgeDocument {
                    nodes: e.nodes.clone(),
                    sign: e.sign,
                })
                .collect(),
            virtual_nodes,
        }
    }
}

fn flatten_nested(value: &Value, shape: &[usize], out: &mut Vec<f64>) -> Result<()> {
    match shape.split_first() {
        None => match value.as_f64() {
            Some(v) => {
                out.push(v);
                Ok(())
            }
            None => Err(Error::Document(format!(
                "expected a number, found {value}"
            ))),
        },
        Some((&n, rest)) => {
            let arr = value.as_array().ok_or_else(|| {
                Error::Document(format!("expected an array of length {n}, found {value}"))
            })?;
            if arr.len() != n {
                return Err(Error::Document(format!(
                    "expected an array of length {n}, found length {}",
                    arr.len()
                )));
            }
            for item in arr {
                flatten_nested(item, rest, out)?;
            }
            Ok(())
        }
    }
}

pub fn tensor_from_nested(value: &Value, shape: &[usize]) -> Result<DenseTensor> {
    let mut values = Vec::with_capacity(shape.iter().product());
    flatten_nested(value, shape, &mut values)?;
    DenseTensor::new(shape.to_vec(), values)
}

pub fn template_from_nested(value: &Value, shape: &[usize]) -> Result<SignTemplate> {
    let mut values = Vec::with_capacity(shape.iter().product());
    flatten_nested(value, shape, &mut values)?;
    let signs = values
        .iter()
        .map(|&v| {
            if v == -1.0 || v == 0.0 || v == 1.0 {
                Ok(v as i8)
            } else {
                Err(Error::SignDomain { value: v as i64 })
            }
        })
        .collect::<Result<Vec<i8>>>()?;
    SignTemplate::new(shape.to_vec(), signs)
}

fn nest(values: &[f64], shape: &[usize]) -> Value {
    match shape.split_first() {
        None => serde_json::json!(values[0]),
        Some((&n, rest)) => {
            let chunk = values.len() / n;
            Value::Array(
                (0..n)
                    .map(|i| nest(&values[i * chunk..(i + 1) * chunk], rest))
                    .collect(),
            )
        }
    }
}

pub fn tensor_to_nested(t: &DenseTensor) -> Value {
    nest(t.values(), t.shape())
}

pub fn template_to_nested(t: &SignTemplate) -> Value {
    let values: Vec<f64> = t.signs().iter().map(|&s| s as f64).collect();
    nest(&values, t.shape())
}

/// Read a posterior from any of the accepted forms: a full SolutionDocument,
/// a bare `{"posterior": ...}` object, or bare nested arrays; the payload may
/// be dense nested arrays or a sparse `[{idx, value}]` list.
pub fn parse_posterior(text: &str, shape: &[usize]) -> Result<DenseTensor> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Document(format!("invalid JSON: {e}")))?;
    let payload = match &value {
        Value::Object(map) => map
            .get("posterior")
            .ok_or_else(|| Error::Document("object has no `posterior` field".into()))?,
        _ => &value,
    };
    if let Value::Array(items) = payload {
        if items.first().map_or(false, |v| v.is_object()) {
            let mut tensor = DenseTensor::zeros(shape.to_vec())?;
            for item in items {
                let idx: Vec<usize> = item
                    .get("idx")
                    .and_then(|v| serde_json::from_value(v.clone()).ok())
                    .ok_or_else(|| Error::Document("sparse entry lacks `idx`".into()))?;
                let v = item
                    .get("value")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Document("sparse entry lacks `value`".into()))?;
                tensor.set(&idx, v)?;
            }
            return Ok(tensor);
        }
    }
    tensor_from_nested(payload, shape)
}
