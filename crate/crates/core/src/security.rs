//! Operators having every safe vector as an eigenvector.
//!
//! `E η ∥ η` is linear in `E` once written as `(1 − η̂η̂†) E η = 0`; the
//! solution space always contains the identity, and the check is that it
//! contains nothing else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{c, identity, max_abs, nullspace, rank, CMatrix, CVector};
use crate::retrodiction::{tensor_strategy, Strategy};

/// Bound on `d^{2n}` for the block check (operator space `d^{4n}`).
pub const MAX_LEMMA_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct CommutantReport {
    pub constraint_rank: usize,
    pub solution_dim: usize,
    /// A solution of unit Frobenius norm; the first basis vector of the solution space.
    pub witness: CMatrix,
    pub tol: f64,
}

impl CommutantReport {
    /// `‖W − (tr W / m) 1‖_max / ‖W‖_max`
    pub fn identity_defect(&self) -> f64 {
        let m = self.witness.nrows();
        let scalar = self.witness.trace() / c(m as f64, 0.0);
        let scale = max_abs(&self.witness);
        if scale == 0.0 {
            return f64::INFINITY;
        }
        max_abs(&(&self.witness - identity(m) * scalar)) / scale
    }
}

/// Report file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub dim: usize,
    pub n: usize,
    pub solution_dim: usize,
    pub constraint_rank: usize,
    pub tol: f64,
    pub identity_defect: f64,
}

impl LemmaReport {
    pub fn new(dim: usize, n: usize, r: &CommutantReport) -> Self {
        LemmaReport {
            dim,
            n,
            solution_dim: r.solution_dim,
            constraint_rank: r.constraint_rank,
            tol: r.tol,
            identity_defect: r.identity_defect(),
        }
    }
}

/// Stacked `(1 − η̂η̂†) ⊗ ηᵀ` blocks acting on row-major `vec(E)`.
pub fn constraint_matrix(vectors: &[CVector]) -> Result<CMatrix> {
    let m = vectors
        .first()
        .map(CVector::len)
        .ok_or_else(|| Error::InvalidInput("no safe vectors".into()))?;
    if vectors.iter().any(|v| v.len() != m) {
        return Err(Error::DimensionMismatch("safe vectors of different lengths".into()));
    }
    let mut a = CMatrix::zeros(vectors.len() * m, m * m);
    for (x, eta) in vectors.iter().enumerate() {
        let norm = eta.norm();
        if norm == 0.0 {
            return Err(Error::InvalidInput(format!("safe vector {x} is zero")));
        }
        let unit = eta / c(norm, 0.0);
        let p = identity(m) - &unit * unit.adjoint();
        for q in 0..m {
            for r in 0..m {
                let pqr = p[(q, r)];
                if pqr == c(0.0, 0.0) {
                    continue;
                }
                for s in 0..m {
                    a[(x * m + q, r * m + s)] = pqr * eta[s];
                }
            }
        }
    }
    Ok(a)
}

/// Solution space of the eigenvector constraints, without the spanning check.
pub fn commutant(vectors: &[CVector], tol: f64) -> Result<CommutantReport> {
    let a = constraint_matrix(vectors)?;
    let m = vectors[0].len();
    let ns = nullspace(&a, tol);
    let witness = match ns.basis.first() {
        Some(v) => CMatrix::from_fn(m, m, |r, s| v[r * m + s]),
        None => CMatrix::zeros(m, m),
    };
    Ok(CommutantReport {
        constraint_rank: m * m - ns.dimension,
        solution_dim: ns.dimension,
        witness,
        tol,
    })
}

/// Requires the safe vectors to span the space.
pub fn eigenvector_constraint_dim(vectors: &[CVector], tol: f64) -> Result<CommutantReport> {
    let m = vectors
        .first()
        .map(CVector::len)
        .ok_or_else(|| Error::InvalidInput("no safe vectors".into()))?;
    let stacked = CMatrix::from_fn(m, vectors.len(), |r, x| vectors[x][r]);
    let span = rank(&stacked, tol);
    if span != m {
        return Err(Error::Precondition(format!(
            "safe vectors span {span} of {m} dimensions"
        )));
    }
    commutant(vectors, tol)
}

/// The same check over the safe product vectors of an `n`-block.
pub fn lemma2_check(strategy: &Strategy, n: usize, tol: f64) -> Result<CommutantReport> {
    let single = strategy.dim() * strategy.dim();
    match single.checked_pow(n as u32) {
        Some(total) if total <= MAX_LEMMA_DIM => {}
        _ => {
            return Err(Error::ResourceGuard(format!(
                "d^(2n) = {single}^{n} exceeds {MAX_LEMMA_DIM}"
            )))
        }
    }
    let product = tensor_strategy(strategy, n)?;
    let vectors: Vec<CVector> = (0..product.num_outcomes())
        .map(|idx| product.vector(&product.outcome_tuple(idx)))
        .collect();
    eigenvector_constraint_dim(&vectors, tol)
}
