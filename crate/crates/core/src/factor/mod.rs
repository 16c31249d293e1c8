//! Algorithm families driven by control trees.
//!
//! Every factorization works in place on a [`MatrixView`](crate::views::MatrixView),
//! walks it with [`partition_steps`](crate::views::partition_steps), issues
//! its level-3 work to the engine with the node's kernel configuration and
//! `ways`, and hands the diagonal block to the node's child.

mod cholesky;
mod lu;
mod ltlt;
mod qr;

use thiserror::Error;

use crate::control::{validate, ControlNode, Problem, Violation};
use crate::engine::{EngineError, KernelConfig};
use crate::scalar::Scalar;

pub use cholesky::{cholesky, Uplo};
pub use ltlt::{ltlt_pivoted, ltlt_unit_lower, pfaffian, TridiagSkew};
pub use lu::{apply_pivots, lu_partial, lu_solve, Direction};
pub use qr::{apply_q, form_q, qr_householder, Reflectors};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is not positive definite: non-positive pivot at index {index}")]
    NotPositiveDefinite { index: usize },
    #[error("exactly zero pivot in column {column}; factorization completed with U[{column},{column}] = 0")]
    Singular { column: usize, pivots: PivotVector },
    #[error("cannot solve: U[{index},{index}] is zero")]
    SingularSolve { index: usize },
    #[error("matrix is not skew-symmetric: max |x + x^T| = {deviation:e}")]
    NotSkew { deviation: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid control tree: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTree(Vec<Violation>),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// LAPACK-style row interchanges: at step `k`, row `k` was swapped with
/// row `piv[k]`, and `k <= piv[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PivotVector(Vec<usize>);

impl PivotVector {
    /// Checks `k <= piv[k] < n`.
    pub fn new(piv: Vec<usize>, n: usize) -> Option<Self> {
        piv.iter()
            .enumerate()
            .all(|(k, &p)| k <= p && p < n)
            .then_some(Self(piv))
    }

    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Determinant of the permutation, +1 or -1.
    pub fn sign(&self) -> i32 {
        let swaps = self.0.iter().enumerate().filter(|(k, &p)| *k != p).count();
        if swaps % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub(crate) fn push(&mut self, p: usize) {
        self.0.push(p);
    }
}

pub(crate) fn check_tree(tree: &ControlNode, problem: Problem) -> Result<(), FactorError> {
    validate(tree, &problem).map_err(FactorError::InvalidTree)
}

pub(crate) fn root_config<T: Scalar>() -> KernelConfig {
    KernelConfig::default_for(T::DTYPE)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivot_vector_invariants() {
        assert!(PivotVector::new(vec![1, 1], 2).is_some());
        assert!(PivotVector::new(vec![1, 0], 2).is_none());
        assert!(PivotVector::new(vec![2], 2).is_none());
        assert_eq!(PivotVector::new(vec![1, 1], 2).unwrap().sign(), -1);
        assert_eq!(PivotVector::identity(4).sign(), 1);
    }
}
