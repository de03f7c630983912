//! Shared data types: multi-class node functions and label priors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;

/// An `n x L` real array holding one node function per class.
///
/// Stored column-major so that each class function is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassState {
    n: usize,
    classes: usize,
    data: Vec<f64>,
}

impl MultiClassState {
    pub fn zeros(n: usize, classes: usize) -> Self {
        Self {
            n,
            classes,
            data: vec![0.0; n * classes],
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * columns.len());
        for c in columns {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            n,
            classes: columns.len(),
            data,
        })
    }

    /// Builds a state from node-major rows `rows[x][l]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        let mut s = Self::zeros(rows.len(), classes);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != classes {
                return Err(Error::DimensionMismatch {
                    expected: classes,
                    got: row.len(),
                });
            }
            for (l, &v) in row.iter().enumerate() {
                s.set(x, l, v);
            }
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn column(&self, l: usize) -> &[f64] {
        &self.data[l * self.n..(l + 1) * self.n]
    }

    pub fn column_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[l * self.n..(l + 1) * self.n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1)).take(self.classes)
    }

    pub fn get(&self, x: usize, l: usize) -> f64 {
        self.data[l * self.n + x]
    }

    pub fn set(&mut self, x: usize, l: usize, v: f64) {
        self.data[l * self.n + x] = v;
    }

    /// The values of all classes at node `x`.
    pub fn row(&self, x: usize) -> Vec<f64> {
        (0..self.classes).map(|l| self.get(x, l)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Joint (Frobenius) l2 norm.
    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn distance(&self, other: &Self) -> f64 {
        crate::linalg::dist2(&self.data, &other.data)
    }
}

/// Partial ground truth: which nodes are labeled, and with which class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPrior {
    classes: usize,
    labels: Vec<Option<usize>>,
}

impl LabelPrior {
    /// `assignments` are `(node, class)` pairs over `n` nodes. Every class
    /// needs at least one labeled node and no node may carry two classes.
    pub fn new(n: usize, classes: usize, assignments: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidPrior("class count must be positive".into()));
        }
        let mut labels = vec![None; n];
        for (x, l) in assignments {
            if x >= n {
                return Err(Error::BadIndex { index: x, n });
            }
            if l >= classes {
                return Err(Error::InvalidPrior(format!(
                    "class {l} out of range for {classes} classes"
                )));
            }
            match labels[x] {
                Some(prev) if prev != l => {
                    return Err(Error::InvalidPrior(format!(
                        "node {x} labeled with both {prev} and {l}"
                    )));
                }
                _ => labels[x] = Some(l),
            }
        }
        let mut seen = vec![false; classes];
        labels.iter().flatten().for_each(|&l| seen[l] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPrior(format!("class {missing} has no labeled node")));
        }
        Ok(Self { classes, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn class_of(&self, x: usize) -> Option<usize> {
        self.labels[x]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// `(node, class)` pairs in node order.
    pub fn assignments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().enumerate().filter_map(|(x, l)| l.map(|l| (x, l)))
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn labeled_mask(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_and_row_layout() {
        let s = MultiClassState::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(s.column(0), &[1.0, 3.0, 5.0]);
        assert_eq!(s.column(1), &[2.0, 4.0, 6.0]);
        assert_eq!(s.row(1), vec![3.0, 4.0]);
        assert_eq!(s.columns().count(), 2);
    }

    #[test]
    fn prior_validation() {
        assert!(LabelPrior::new(3, 2, [(0, 0), (2, 1)]).is_ok());
        assert!(matches!(LabelPrior::new(3, 2, [(0, 0)]), Err(Error::InvalidPrior(_))));
        assert!(matches!(
            LabelPrior::new(3, 2, [(0, 0), (0, 1), (1, 1)]),
            Err(Error::InvalidPrior(_))
        ));
        assert!(matches!(
            LabelPrior::new(3, 2, [(0, 0), (5, 1)]),
            Err(Error::BadIndex { .. })
        ));
        assert!(matches!(
            LabelPrior::new(3, 2, [(0, 0), (1, 2)]),
            Err(Error::InvalidPrior(_))
        ));
    }

    #[test]
    fn prior_accessors() {
        let p = LabelPrior::new(4, 2, [(3, 1), (0, 0)]).unwrap();
        assert_eq!(p.assignments().collect::<Vec<_>>(), vec![(0, 0), (3, 1)]);
        assert_eq!(p.labeled_mask(), vec![true, false, false, true]);
        assert_eq!(p.labeled_count(), 2);
    }
}
