//! Signed hypergraphs: validation, uniformization by shared virtual nodes,
//! symmetric adjacency tensors, and conversion into solvable problems.

use crate::error::{Error, Result};
use crate::problem::{validate, BridgeProblem, SolveOptions};
use crate::tensor::{DenseTensor, SignTemplate};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyperedge {
    pub nodes: Vec<usize>,
    /// +1 or -1.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    pub node_count: usize,
    pub hyperedges: Vec<Hyperedge>,
}

impl Hypergraph {
    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::Hypergraph("node_count must be >= 1".into()));
        }
        let mut seen_sets = std::collections::HashSet::new();
        for (e, edge) in self.hyperedges.iter().enumerate() {
            if edge.sign != 1 && edge.sign != -1 {
                return Err(Error::Hypergraph(format!(
                    "hyperedge {e} has sign {}, expected -1 or +1",
                    edge.sign
                )));
            }
            if edge.nodes.len() < 2 {
                return Err(Error::Hypergraph(format!(
                    "hyperedge {e} has {} nodes, need at least 2",
                    edge.nodes.len()
                )));
            }
            let mut sorted = edge.nodes.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Hypergraph(format!(
                    "hyperedge {e} repeats a node: {:?}",
                    edge.nodes
                )));
            }
            if let Some(&bad) = edge.nodes.iter().find(|&&n| n >= self.node_count) {
                return Err(Error::Hypergraph(format!(
                    "hyperedge {e} references node {bad}, node_count is {}",
                    self.node_count
                )));
            }
            if !seen_sets.insert(sorted) {
                return Err(Error::Hypergraph(format!(
                    "duplicate hyperedge (as a node set): {:?}",
                    edge.nodes
                )));
            }
        }
        Ok(())
    }

    /// The common cardinality if uniform, else None. Empty graphs count as
    /// uniform of any k; they report None.
    pub fn uniform_cardinality(&self) -> Option<usize> {
        let mut it = self.hyperedges.iter().map(|e| e.nodes.len());
        let first = it.next()?;
        it.all(|k| k == first).then_some(first)
    }
}

#[derive(Debug, Clone)]
pub struct UniformizationResult {
    pub hypergraph: Hypergraph,
    /// Ids of the appended padding nodes (empty when already uniform).
    pub virtual_node_ids: Vec<usize>,
    /// For each original hyperedge, the node list of its padded counterpart.
    pub edge_map: Vec<Vec<usize>>,
}

/// Pad every hyperedge to the maximum cardinality using a shared pool of
/// virtual nodes sized by the largest deficiency; a hyperedge missing `d`
/// nodes takes the `d` lowest pool ids.
pub fn uniformize(h: &Hypergraph) -> Result<UniformizationResult> {
    h.validate()?;
    let k_max = h
        .hyperedges
        .iter()
        .map(|e| e.nodes.len())
        .max()
        .unwrap_or(0);
    let d_max = h
        .hyperedges
        .iter()
        .map(|e| k_max - e.nodes.len())
        .max()
        .unwrap_or(0);
    let virtual_node_ids: Vec<usize> = (h.node_count..h.node_count + d_max).collect();
    let mut padded = Vec::with_capacity(h.hyperedges.len());
    let mut edge_map = Vec::with_capacity(h.hyperedges.len());
    for edge in &h.hyperedges {
        let d = k_max - edge.nodes.len();
        let mut nodes = edge.nodes.clone();
        nodes.extend_from_slice(&virtual_node_ids[..d]);
        edge_map.push(nodes.clone());
        padded.push(Hyperedge {
            nodes,
            sign: edge.sign,
        });
    }
    Ok(UniformizationResult {
        hypergraph: Hypergraph {
            node_count: h.node_count + d_max,
            hyperedges: padded,
        },
        virtual_node_ids,
        edge_map,
    })
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    // Heap's algorithm
    let mut out = Vec::new();
    let mut a = items.to_vec();
    let n = a.len();
    let mut c = vec![0usize; n];
    out.push(a.clone());
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// The symmetric order-`k` sign tensor of a `k`-uniform hypergraph: each
/// hyperedge's sign at every permutation of its node tuple, zero elsewhere.
pub fn adjacency_tensor(h: &Hypergraph, k: usize) -> Result<SignTemplate> {
    h.validate()?;
    if k < 2 {
        return Err(Error::Hypergraph(format!(
            "adjacency order must be >= 2, got {k}"
        )));
    }
    for (e, edge) in h.hyperedges.iter().enumerate() {
        if edge.nodes.len() != k {
            return Err(Error::Uniformity {
                expected: k,
                edge: e,
                found: edge.nodes.len(),
            });
        }
    }
    let mut template = SignTemplate::zeros(vec![h.node_count; k])?;
    for edge in &h.hyperedges {
        for perm in permutations(&edge.nodes) {
            template.set(&perm, edge.sign)?;
        }
    }
    Ok(template)
}

/// How the prior over the adjacency support is chosen.
#[derive(Debug, Clone)]
pub enum PriorRule {
    /// Prior = |adjacency|: 1 on every hyperedge permutation, 0 elsewhere.
    UnsignedTemplate,
    /// Caller-supplied prior; must match the uniformized shape.
    Custom(DenseTensor),
}

/// Handling of virtual nodes' missing nodal data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VirtualPolicy {
    /// Drop the marginal constraint at virtual indices (default choice).
    Unconstrained,
    /// Keep virtual indices constrained, pinned to the given small value.
    Pinned(f64),
}

/// Build an order-`k_max` problem from a (possibly non-uniform) signed
/// hypergraph: uniformize, take the symmetric adjacency as every mode's
/// template, extend the per-mode nodal marginals over the virtual nodes
/// per `policy`.
pub fn problem_from_hypergraph(
    h: &Hypergraph,
    marginals: &[Vec<f64>],
    prior_rule: PriorRule,
    templates: Option<Vec<SignTemplate>>,
    policy: VirtualPolicy,
) -> Result<BridgeProblem> {
    let uni = uniformize(h)?;
    let k = uni.hypergraph.uniform_cardinality().ok_or_else(|| {
        Error::Hypergraph("cannot build a problem from an empty hypergraph".into())
    })?;
    let n = uni.hypergraph.node_count;
    if marginals.len() != k {
        return Err(Error::Shape(format!(
            "expected {k} marginal vectors (one per mode), found {}",
            marginals.len()
        )));
    }
    for (l, m) in marginals.iter().enumerate() {
        if m.len() != h.node_count {
            return Err(Error::Shape(format!(
                "marginal {l} has length {}, original node count is {}",
                m.len(),
                h.node_count
            )));
        }
    }

    let adjacency = adjacency_tensor(&uni.hypergraph, k)?;
    let shape = vec![n; k];
    let templates = match templates {
        Some(ts) => {
            if ts.len() != k || ts.iter().any(|t| t.shape() != shape.as_slice()) {
                return Err(Error::Shape(format!(
                    "custom templates must be {k} tensors of shape {shape:?}"
                )));
            }
            ts
        }
        None => vec![adjacency.clone(); k],
    };
    let prior = match prior_rule {
        PriorRule::UnsignedTemplate => {
            let values = adjacency.signs().iter().map(|&s| s.unsigned_abs() as f64).collect();
            DenseTensor::new(shape.clone(), values)?
        }
        PriorRule::Custom(p) => {
            if p.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "custom prior has shape {:?}, uniformized shape is {shape:?}",
                    p.shape()
                )));
            }
            p
        }
    };

    let mut full_marginals: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut unconstrained: Vec<Vec<usize>> = Vec::with_capacity(k);
    for m in marginals {
        let mut v = m.clone();
        match policy {
            VirtualPolicy::Unconstrained => {
                v.resize(n, 0.0);
                unconstrained.push(uni.virtual_node_ids.clone());
            }
            VirtualPolicy::Pinned(eps) => {
                v.resize(n, eps);
                unconstrained.push(Vec::new());
            }
        }
        full_marginals.push(v);
    }
    if unconstrained.iter().all(|l| l.is_empty()) {
        unconstrained.clear();
    }

    let problem = BridgeProblem {
        prior,
        templates,
        marginals: full_marginals,
        options: SolveOptions {
            unconstrained,
            ..SolveOptions::default()
        },
    };
    let report = validate(&problem);
    if !report.is_valid() {
        return Err(Error::InvalidProblem(report.violations.join("; ")));
    }
    Ok(problem)
}
