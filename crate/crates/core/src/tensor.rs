//! Dense and coordinate-sparse order-k array storage with mode-wise signed
//! marginalization. Everything else in the crate computes on these.
//!
//! Storage is row-major dense; indices are zero-based throughout. The sparse
//! encoding carries per-mode signs inline so one entry list describes both the
//! prior and all k sign templates.

use crate::error::{Error, Result};

/// Order-k, dimension-`shape[l]` real array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::Shape(format!(
                "value buffer has length {}, shape {:?} needs {}",
                values.len(),
                shape,
                len
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            values: vec![0.0; len],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.values[flat_index(&self.shape, idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let flat = flat_index(&self.shape, idx)?;
        self.values[flat] = value;
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Iterate over (multi-index, value) pairs in row-major order.
    pub fn indexed_iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        IndexIter::new(&self.shape).map(move |(idx, flat)| (idx, self.values[flat]))
    }
}

/// A mode-indexed {-1, 0, +1} pattern over the same index set as a prior;
/// weights each entry's contribution to one directional marginal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignTemplate {
    shape: Vec<usize>,
    signs: Vec<i8>,
}

impl SignTemplate {
    pub fn new(shape: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        if signs.len() != len {
            return Err(Error::Shape(format!(
                "sign buffer has length {}, shape {:?} needs {}",
                signs.len(),
                shape,
                len
            )));
        }
        if let Some(&bad) = signs.iter().find(|s| ![-1, 0, 1].contains(*s)) {
            return Err(Error::SignDomain { value: bad as i64 });
        }
        Ok(Self { shape, signs })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            signs: vec![0; len],
        })
    }

    pub fn all_positive(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape,
            signs: vec![1; len],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn get(&self, idx: &[usize]) -> Result<i8> {
        Ok(self.signs[flat_index(&self.shape, idx)?])
    }

    /// Internal mutable access; callers uphold the {-1, 0, +1} domain.
    pub(crate) fn signs_mut(&mut self) -> &mut [i8] {
        &mut self.signs
    }

    pub fn set(&mut self, idx: &[usize], sign: i8) -> Result<()> {
        if ![-1, 0, 1].contains(&sign) {
            return Err(Error::SignDomain { value: sign as i64 });
        }
        let flat = flat_index(&self.shape, idx)?;
        self.signs[flat] = sign;
        Ok(())
    }
}

/// One nonzero position of a sparsely encoded (prior, templates) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEntry {
    pub idx: Vec<usize>,
    pub prior_value: f64,
    /// One sign per mode.
    pub signs: Vec<i8>,
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor order must be at least 1".into()));
    }
    if shape.iter().any(|&n| n == 0) {
        return Err(Error::Shape(format!(
            "every shape entry must be >= 1, got {:?}",
            shape
        )));
    }
    Ok(())
}

pub(crate) fn flat_index(shape: &[usize], idx: &[usize]) -> Result<usize> {
    if idx.len() != shape.len() {
        return Err(Error::Shape(format!(
            "index {:?} has {} coordinates, tensor order is {}",
            idx,
            idx.len(),
            shape.len()
        )));
    }
    let mut flat = 0usize;
    for (l, (&i, &n)) in idx.iter().zip(shape).enumerate() {
        if i >= n {
            return Err(Error::Shape(format!(
                "index {:?} out of bounds in mode {} (dimension {})",
                idx, l, n
            )));
        }
        flat = flat * n + i;
    }
    Ok(flat)
}

/// Row-major iterator over all multi-indices of a shape, yielding the
/// multi-index together with its flat offset.
pub(crate) struct IndexIter<'a> {
    shape: &'a [usize],
    current: Vec<usize>,
    flat: usize,
    done: bool,
}

impl<'a> IndexIter<'a> {
    pub fn new(shape: &'a [usize]) -> Self {
        Self {
            shape,
            current: vec![0; shape.len()],
            flat: 0,
            done: shape.iter().any(|&n| n == 0),
        }
    }
}

impl Iterator for IndexIter<'_> {
    type Item = (Vec<usize>, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = (self.current.clone(), self.flat);
        self.flat += 1;
        // odometer increment
        let mut l = self.shape.len();
        loop {
            if l == 0 {
                self.done = true;
                break;
            }
            l -= 1;
            self.current[l] += 1;
            if self.current[l] < self.shape[l] {
                break;
            }
            self.current[l] = 0;
        }
        Some(item)
    }
}

fn check_same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("shapes {:?} and {:?} differ", a, b)));
    }
    Ok(())
}

/// Signed mode-`mode` marginal: v[t] = sum over all entries whose mode-th
/// index equals t of sign * value.
pub fn signed_marginal(t: &DenseTensor, s: &SignTemplate, mode: usize) -> Result<Vec<f64>> {
    check_same_shape(t.shape(), s.shape())?;
    let order = t.order();
    if mode >= order {
        return Err(Error::Mode { mode, order });
    }
    let mut out = vec![0.0; t.shape()[mode]];
    // stride of `mode` in the row-major layout
    let stride: usize = t.shape()[mode + 1..].iter().product();
    let dim = t.shape()[mode];
    for (flat, (&v, &sg)) in t.values.iter().zip(&s.signs).enumerate() {
        if sg != 0 {
            let coord = (flat / stride) % dim;
            out[coord] += sg as f64 * v;
        }
    }
    Ok(out)
}

/// Entrywise product of two same-shape tensors.
pub fn elementwise_product(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    check_same_shape(a.shape(), b.shape())?;
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .collect();
    DenseTensor::new(a.shape.clone(), values)
}

/// Expand a sparse (prior, per-mode signs) entry list into the dense prior and
/// the k sign templates.
pub fn dense_from_sparse(
    shape: &[usize],
    entries: &[SparseEntry],
) -> Result<(DenseTensor, Vec<SignTemplate>)> {
    check_shape(shape)?;
    let order = shape.len();
    let mut prior = DenseTensor::zeros(shape.to_vec())?;
    let mut templates: Vec<SignTemplate> = (0..order)
        .map(|_| SignTemplate::zeros(shape.to_vec()))
        .collect::<Result<_>>()?;
    let mut seen = std::collections::HashSet::new();
    for entry in entries {
        let flat = flat_index(shape, &entry.idx)?;
        if !seen.insert(flat) {
            return Err(Error::DuplicateEntry {
                idx: entry.idx.clone(),
            });
        }
        if entry.signs.len() != order {
            return Err(Error::Shape(format!(
                "sparse entry at {:?} has {} signs, order is {}",
                entry.idx,
                entry.signs.len(),
                order
            )));
        }
        if entry.prior_value < 0.0 {
            return Err(Error::InvalidProblem(format!(
                "sparse entry at {:?} has negative prior value {}",
                entry.idx, entry.prior_value
            )));
        }
        prior.values[flat] = entry.prior_value;
        for (l, &sg) in entry.signs.iter().enumerate() {
            templates[l].set(&entry.idx, sg)?;
        }
    }
    Ok((prior, templates))
}

/// Re-extract the canonical sparse form (entries with prior > 0, in row-major
/// index order). Inverse of [`dense_from_sparse`] on canonical inputs.
pub fn sparse_from_dense(prior: &DenseTensor, templates: &[SignTemplate]) -> Vec<SparseEntry> {
    prior
        .indexed_iter()
        .filter(|(_, v)| *v != 0.0)
        .map(|(idx, v)| SparseEntry {
            signs: templates
                .iter()
                .map(|t| t.get(&idx).expect("template shares prior shape"))
                .collect(),
            idx,
            prior_value: v,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::synthetic_4x4;

    fn mat(rows: &[&[f64]]) -> DenseTensor {
        let shape = vec![rows.len(), rows[0].len()];
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DenseTensor::new(shape, values).unwrap()
    }

    #[test]
    fn signed_marginal_recovers_the_synthetic_reference_marginals() {
        let fx = synthetic_4x4();
        let rows = signed_marginal(&fx.reference_posterior, &fx.templates[0], 0).unwrap();
        for (got, want) in rows.iter().zip([0.2, 0.3, 0.1, 0.4]) {
            assert!((got - want).abs() <= 2e-4, "row marginal {got} vs {want}");
        }
        let cols = signed_marginal(&fx.reference_posterior, &fx.templates[1], 1).unwrap();
        for (got, want) in cols.iter().zip([0.1, 0.1, 0.4, 0.4]) {
            assert!((got - want).abs() <= 2e-4, "col marginal {got} vs {want}");
        }
    }

    #[test]
    fn signed_marginal_of_zero_tensor_is_zero() {
        let t = DenseTensor::zeros(vec![3, 4, 2]).unwrap();
        let s = SignTemplate::all_positive(vec![3, 4, 2]).unwrap();
        for mode in 0..3 {
            assert!(signed_marginal(&t, &s, mode)
                .unwrap()
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unsigned_column_sums() {
        let t = mat(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let s = SignTemplate::all_positive(vec![2, 2]).unwrap();
        assert_eq!(signed_marginal(&t, &s, 1).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn signed_marginal_rejects_bad_mode_and_shape() {
        let t = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = SignTemplate::all_positive(vec![2, 2]).unwrap();
        assert!(matches!(
            signed_marginal(&t, &s, 2),
            Err(Error::Mode { mode: 2, order: 2 })
        ));
        let s3 = SignTemplate::all_positive(vec![3, 3]).unwrap();
        assert!(matches!(signed_marginal(&t, &s3, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_product_examples() {
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let mask = mat(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(
            elementwise_product(&a, &mask).unwrap().values(),
            &[1.0, 0.0, 0.0, 4.0]
        );
        let ones = mat(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(elementwise_product(&a, &ones).unwrap(), a);
        let d = mat(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let e = mat(&[&[0.5, 1.0], &[1.0, 0.5]]);
        assert_eq!(
            elementwise_product(&d, &e).unwrap().values(),
            &[1.0, 0.0, 0.0, 1.5]
        );
    }

    #[test]
    fn sparse_single_entry_expansion() {
        let entries = vec![SparseEntry {
            idx: vec![0, 1],
            prior_value: 1.0,
            signs: vec![1, -1],
        }];
        let (prior, templates) = dense_from_sparse(&[2, 2], &entries).unwrap();
        assert_eq!(prior.values(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(templates[0].signs(), &[0, 1, 0, 0]);
        assert_eq!(templates[1].signs(), &[0, -1, 0, 0]);
    }

    #[test]
    fn sparse_empty_and_duplicates() {
        let (prior, templates) = dense_from_sparse(&[2, 3], &[]).unwrap();
        assert!(prior.values().iter().all(|&v| v == 0.0));
        assert!(templates.iter().all(|t| t.signs().iter().all(|&s| s == 0)));

        let dup = vec![
            SparseEntry {
                idx: vec![1, 1],
                prior_value: 1.0,
                signs: vec![1, 1],
            },
            SparseEntry {
                idx: vec![1, 1],
                prior_value: 2.0,
                signs: vec![1, 1],
            },
        ];
        assert!(matches!(
            dense_from_sparse(&[2, 2], &dup),
            Err(Error::DuplicateEntry { .. })
        ));
    }

    #[test]
    fn synthetic_fixture_sparse_round_trip() {
        let fx = synthetic_4x4();
        let entries = sparse_from_dense(&fx.prior, &fx.templates);
        assert_eq!(entries.len(), 12);
        let (prior, templates) = dense_from_sparse(&[4, 4], &entries).unwrap();
        assert_eq!(prior, fx.prior);
        assert_eq!(templates, fx.templates);
    }

    #[test]
    fn template_rejects_out_of_domain_signs() {
        assert!(matches!(
            SignTemplate::new(vec![2, 2], vec![0, 2, 0, 0]),
            Err(Error::SignDomain { value: 2 })
        ));
    }
}
