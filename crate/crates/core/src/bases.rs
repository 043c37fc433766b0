//! Orthonormal basis sets: generation of complete MUBs in prime dimension
//! and validation of arbitrary sets against the conditions a successful
//! Mean King strategy needs (non-degeneracy and a classical model).
//!
//! Basis and vector indices are 0-based here and in files.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{pairs_to_vec, vec_to_pairs, Pair};
use crate::lp::lp_feasible;
use crate::qmath::{c, hermitian_coords, outer, real_rank, CMatrix, CVector};

/// Largest dimension accepted by validation.
pub const MAX_VALIDATION_DIM: usize = 16;

/// Variable cap for the classical-model LP.
pub const MAX_CLASSICAL_MODEL_VARS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub label: usize,
    pub vectors: Vec<CVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSetFile", into = "BasisSetFile")]
pub struct BasisSet {
    dim: usize,
    bases: Vec<Basis>,
}

/// On-disk layout: `{ "dim": d, "bases": [[[ [re, im], .. ], ..], ..] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisSetFile {
    pub dim: usize,
    pub bases: Vec<Vec<Vec<Pair>>>,
}

impl TryFrom<BasisSetFile> for BasisSet {
    type Error = Error;

    fn try_from(f: BasisSetFile) -> Result<Self> {
        let bases = f
            .bases
            .iter()
            .map(|b| b.iter().map(|v| pairs_to_vec(v)).collect())
            .collect();
        BasisSet::new(f.dim, bases)
    }
}

impl From<BasisSet> for BasisSetFile {
    fn from(bs: BasisSet) -> Self {
        BasisSetFile {
            dim: bs.dim,
            bases: bs
                .bases
                .iter()
                .map(|b| b.vectors.iter().map(vec_to_pairs).collect())
                .collect(),
        }
    }
}

impl BasisSet {
    /// Checks shapes only; use [`validate`] for the physics.
    pub fn new(dim: usize, bases: Vec<Vec<CVector>>) -> Result<Self> {
        if dim == 0 || dim > MAX_VALIDATION_DIM {
            return Err(Error::InvalidInput(format!(
                "dimension {dim} outside 1..={MAX_VALIDATION_DIM}"
            )));
        }
        if bases.is_empty() {
            return Err(Error::InvalidInput("basis set needs at least one basis".into()));
        }
        for (b, basis) in bases.iter().enumerate() {
            if basis.len() != dim || basis.iter().any(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch(format!(
                    "basis {b} must hold {dim} vectors of length {dim}"
                )));
            }
        }
        Ok(Self {
            dim,
            bases: bases
                .into_iter()
                .enumerate()
                .map(|(label, vectors)| Basis { label, vectors })
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of bases `k`.
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn bases(&self) -> &[Basis] {
        &self.bases
    }

    pub fn vector(&self, b: usize, i: usize) -> Result<&CVector> {
        self.bases
            .get(b)
            .and_then(|basis| basis.vectors.get(i))
            .ok_or_else(|| {
                Error::IndexOutOfRange(format!(
                    "basis {b}, vector {i} (k = {}, d = {})",
                    self.len(),
                    self.dim
                ))
            })
    }

    /// Applies `u` to every vector.
    pub fn rotated(&self, u: &CMatrix) -> Self {
        Self {
            dim: self.dim,
            bases: self
                .bases
                .iter()
                .map(|b| Basis {
                    label: b.label,
                    vectors: b.vectors.iter().map(|v| u * v).collect(),
                })
                .collect(),
        }
    }
}

fn is_supported_prime(d: usize) -> bool {
    matches!(d, 2 | 3 | 5 | 7)
}

/// Complete set of `d + 1` mutually unbiased bases.
///
/// Basis 0 is computational. For odd prime `d`, basis `a + 1` has vectors
/// `|ψ_{a,i}⟩ = d^{-1/2} Σ_s ω^{a s² + i s} |s⟩`, `ω = e^{2πi/d}`. For `d = 2`
/// the bases are the eigenbases of Z, X and Y.
pub fn gen_mub(d: usize) -> Result<BasisSet> {
    if !is_supported_prime(d) {
        return Err(Error::UnsupportedDimension(d));
    }
    let computational: Vec<CVector> = (0..d).map(|i| crate::qmath::basis_vector(d, i)).collect();
    let mut bases = vec![computational];
    if d == 2 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        bases.push(vec![
            CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]),
            CVector::from_vec(vec![c(s, 0.0), c(-s, 0.0)]),
        ]);
        bases.push(vec![
            CVector::from_vec(vec![c(s, 0.0), c(0.0, s)]),
            CVector::from_vec(vec![c(s, 0.0), c(0.0, -s)]),
        ]);
    } else {
        let norm = 1.0 / (d as f64).sqrt();
        for a in 0..d {
            let basis = (0..d)
                .map(|i| {
                    CVector::from_fn(d, |s, _| {
                        let phase = ((a * s * s + i * s) % d) as f64;
                        let theta = 2.0 * PI * phase / d as f64;
                        c(norm * theta.cos(), norm * theta.sin())
                    })
                })
                .collect();
            bases.push(basis);
        }
    }
    BasisSet::new(d, bases)
}

/// `max_b ‖G_b − 1‖_max` over the Gram matrices of the bases.
pub fn check_orthonormal(bs: &BasisSet, tol: f64) -> (bool, f64) {
    let worst = bs
        .bases()
        .iter()
        .map(|basis| {
            let mut w: f64 = 0.0;
            for (i, vi) in basis.vectors.iter().enumerate() {
                for (j, vj) in basis.vectors.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    w = w.max((vi.dotc(vj) - c(target, 0.0)).norm());
                }
            }
            w
        })
        .fold(0.0, f64::max);
    (worst <= tol, worst)
}

/// Largest deviation of a cross-basis squared overlap from `1/d`.
pub fn check_unbiased(bs: &BasisSet, tol: f64) -> (bool, f64) {
    let target = 1.0 / bs.dim() as f64;
    let mut worst: f64 = 0.0;
    for (a, ba) in bs.bases().iter().enumerate() {
        for bb in &bs.bases()[a + 1..] {
            for u in &ba.vectors {
                for v in &bb.vectors {
                    worst = worst.max((u.dotc(v).norm_sqr() - target).abs());
                }
            }
        }
    }
    (worst <= tol, worst)
}

/// Real-linear rank of the `k·d` projectors onto basis vectors, compared
/// against `k(d − 1) + 1`.
pub fn check_nondegenerate(bs: &BasisSet, tol: f64) -> (bool, usize) {
    let d = bs.dim();
    let k = bs.len();
    let rows: Vec<Vec<f64>> = bs
        .bases()
        .iter()
        .flat_map(|b| b.vectors.iter().map(|v| hermitian_coords(&outer(v))))
        .collect();
    let m = DMatrix::from_fn(rows.len(), d * d, |r, col| rows[r][col]);
    let rank = real_rank(&m, tol);
    (rank == k * (d - 1) + 1, rank)
}

/// Joint distribution `p_ab(i, j) = |⟨Φ_b(i)|Φ_a(j)⟩|² / d`; row index `i`
/// runs over basis `b`, column index `j` over basis `a`.
pub fn pairwise_joint(bs: &BasisSet, a: usize, b: usize) -> Result<DMatrix<f64>> {
    if a >= bs.len() || b >= bs.len() {
        return Err(Error::IndexOutOfRange(format!(
            "basis pair ({a}, {b}) with k = {}",
            bs.len()
        )));
    }
    if a == b {
        return Err(Error::Precondition("pairwise_joint needs two distinct bases".into()));
    }
    let d = bs.dim();
    let inv_d = 1.0 / d as f64;
    Ok(DMatrix::from_fn(d, d, |i, j| {
        inv_d * bs.bases()[b].vectors[i].dotc(&bs.bases()[a].vectors[j]).norm_sqr()
    }))
}

/// Mixed-radix index of `(j_1, .., j_k)` with the first basis slowest.
pub fn model_index(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &j| acc * d + j)
}

pub fn model_digits(mut index: usize, d: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    for slot in out.iter_mut().rev() {
        *slot = index % d;
        index /= d;
    }
    out
}

/// Largest deviation between the pairwise marginals of `model` and
/// [`pairwise_joint`], including the total-mass condition.
pub fn classical_model_violation(bs: &BasisSet, model: &DVector<f64>) -> Result<f64> {
    let d = bs.dim();
    let k = bs.len();
    let nvars = d.checked_pow(k as u32).unwrap_or(usize::MAX);
    if model.len() != nvars {
        return Err(Error::DimensionMismatch(format!(
            "model has {} entries, expected {nvars}",
            model.len()
        )));
    }
    let mut worst = (model.sum() - 1.0).abs();
    worst = worst.max(-model.min().min(0.0));
    for a in 0..k {
        for b in (a + 1)..k {
            let joint = pairwise_joint(bs, a, b)?;
            let mut marg = DMatrix::<f64>::zeros(d, d);
            for idx in 0..nvars {
                let digits = model_digits(idx, d, k);
                marg[(digits[b], digits[a])] += model[idx];
            }
            worst = worst.max((marg - joint).amax());
        }
    }
    Ok(worst)
}

/// Solves the classical-model LP: nonnegative `q(j_1..j_k)` summing to one
/// with every pairwise marginal equal to [`pairwise_joint`].
pub fn classical_model_lp(bs: &BasisSet) -> Result<(bool, Option<DVector<f64>>)> {
    let d = bs.dim();
    let k = bs.len();
    let nvars = d
        .checked_pow(k as u32)
        .filter(|&n| n <= MAX_CLASSICAL_MODEL_VARS)
        .ok_or_else(|| {
            Error::ResourceGuard(format!(
                "classical-model LP over {d}^{k} variables exceeds {MAX_CLASSICAL_MODEL_VARS}"
            ))
        })?;
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| ((a + 1)..k).map(move |b| (a, b)))
        .collect();
    let nrows = 1 + pairs.len() * d * d;
    let mut a_eq = DMatrix::<f64>::zeros(nrows, nvars);
    let mut b_eq = DVector::<f64>::zeros(nrows);
    for col in 0..nvars {
        a_eq[(0, col)] = 1.0;
    }
    b_eq[0] = 1.0;
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let joint = pairwise_joint(bs, a, b)?;
        let base = 1 + p * d * d;
        for i in 0..d {
            for j in 0..d {
                b_eq[base + i * d + j] = joint[(i, j)];
            }
        }
        for col in 0..nvars {
            let digits = model_digits(col, d, k);
            a_eq[(base + digits[b] * d + digits[a], col)] = 1.0;
        }
    }
    lp_feasible(&a_eq, &b_eq, &DVector::zeros(nvars))
}

/// Whether the set admits a classical model, with a witness when it does.
///
/// The uniform distribution is tried first (it is the model for any
/// unbiased set); the LP runs only when it does not fit.
pub fn check_classical_model(bs: &BasisSet, tol: f64) -> Result<(bool, Option<DVector<f64>>)> {
    let d = bs.dim();
    let k = bs.len();
    if let Some(nvars) = d.checked_pow(k as u32).filter(|&n| n <= 50_000_000) {
        let (unbiased, _) = check_unbiased(bs, tol);
        if unbiased {
            let uniform = DVector::from_element(nvars, 1.0 / nvars as f64);
            if nvars <= MAX_CLASSICAL_MODEL_VARS {
                if classical_model_violation(bs, &uniform)? <= tol {
                    return Ok((true, Some(uniform)));
                }
            } else {
                // Every pairwise marginal of the uniform model is 1/d², which
                // is exactly the joint of an unbiased pair.
                return Ok((true, Some(uniform)));
            }
        }
    }
    let (ok, model) = classical_model_lp(bs)?;
    match model {
        Some(m) if classical_model_violation(bs, &m)? <= tol.max(crate::lp::FEAS_TOL) => {
            Ok((ok, Some(m)))
        }
        _ => Ok((false, None)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub orthonormal: bool,
    pub unbiased: bool,
    pub nondegenerate: bool,
    pub span_rank: usize,
    pub classical_model: bool,
    /// Worst orthonormality defect `max ‖G − 1‖_max`.
    pub worst_violation: f64,
}

impl ValidationReport {
    /// Conditions for a successful retrodiction strategy. Unbiasedness is
    /// informational only.
    pub fn passes(&self) -> bool {
        self.orthonormal && self.nondegenerate && self.classical_model
    }
}

pub fn validate(bs: &BasisSet, tol: f64) -> Result<ValidationReport> {
    let (orthonormal, worst_violation) = check_orthonormal(bs, tol);
    let (unbiased, _) = check_unbiased(bs, tol);
    let (nondegenerate, span_rank) = check_nondegenerate(bs, tol);
    let classical_model = if orthonormal {
        check_classical_model(bs, tol)?.0
    } else {
        false
    };
    Ok(ValidationReport {
        orthonormal,
        unbiased,
        nondegenerate,
        span_rank,
        classical_model,
        worst_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{identity, max_abs};

    #[test]
    fn d2_bases_are_pauli_eigenbases() {
        // Oracle: eigenvectors of Z, X and XZ (∝ Y) satisfy A v = λ v.
        let bs = gen_mub(2).unwrap();
        let x = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let z = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let y_like = &x * &z;
        for (basis, op) in bs.bases().iter().zip([z.clone(), x.clone(), y_like]) {
            for v in &basis.vectors {
                let w = &op * v;
                let lambda = v.dotc(&w);
                assert!((w - v * lambda).norm() < 1e-14);
                assert!((lambda.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn d2_overlaps_are_one_half() {
        let bs = gen_mub(2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let o = bs.vector(0, i).unwrap().dotc(bs.vector(1, j).unwrap()).norm_sqr();
                assert!((o - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn d3_has_four_unbiased_bases() {
        let bs = gen_mub(3).unwrap();
        assert_eq!(bs.len(), 4);
        let (ok, worst) = check_unbiased(&bs, 1e-12);
        assert!(ok, "worst {worst}");
    }

    #[test]
    fn unsupported_dimensions() {
        for d in [0, 1, 4, 6, 8, 9, 11] {
            assert!(matches!(gen_mub(d), Err(Error::UnsupportedDimension(_))));
        }
    }

    #[test]
    fn orthonormality_checks() {
        let bs = gen_mub(2).unwrap();
        let (ok, worst) = check_orthonormal(&bs, 1e-12);
        assert!(ok && worst < 1e-12);

        let v = bs.vector(0, 0).unwrap().clone();
        let dup = BasisSet::new(2, vec![vec![v.clone(), v]]).unwrap();
        assert!(!check_orthonormal(&dup, 1e-9).0);

        let scaled = BasisSet::new(
            2,
            vec![bs.bases()[1].vectors.iter().map(|v| v * c(0.9, 0.0)).collect()],
        )
        .unwrap();
        let (ok, worst) = check_orthonormal(&scaled, 1e-9);
        assert!(!ok);
        assert!((worst - 0.19).abs() < 1e-12);
    }

    #[test]
    fn nondegeneracy_ranks() {
        let (ok, rank) = check_nondegenerate(&gen_mub(2).unwrap(), 1e-9);
        assert!(ok);
        assert_eq!(rank, 4);

        let bs3 = gen_mub(3).unwrap();
        let single = BasisSet::new(3, vec![bs3.bases()[2].vectors.clone()]).unwrap();
        assert_eq!(check_nondegenerate(&single, 1e-9), (true, 3));

        let twice = BasisSet::new(
            3,
            vec![bs3.bases()[2].vectors.clone(), bs3.bases()[2].vectors.clone()],
        )
        .unwrap();
        assert_eq!(check_nondegenerate(&twice, 1e-9), (false, 3));
    }

    #[test]
    fn pairwise_joint_of_mubs_is_uniform() {
        let bs = gen_mub(2).unwrap();
        let j = pairwise_joint(&bs, 0, 1).unwrap();
        assert!(j.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!(matches!(pairwise_joint(&bs, 1, 1), Err(Error::Precondition(_))));
        assert!(matches!(pairwise_joint(&bs, 0, 3), Err(Error::IndexOutOfRange(_))));

        let bs3 = gen_mub(3).unwrap();
        let j = pairwise_joint(&bs3, 1, 3).unwrap();
        assert!(j.iter().all(|&p| (p - 1.0 / 9.0).abs() < 1e-12));
    }

    #[test]
    fn joint_marginals_are_uniform() {
        for d in [2, 3, 5] {
            let bs = gen_mub(d).unwrap();
            for a in 0..bs.len() {
                for b in 0..bs.len() {
                    if a == b {
                        continue;
                    }
                    let j = pairwise_joint(&bs, a, b).unwrap();
                    for r in 0..d {
                        assert!((j.row(r).sum() - 1.0 / d as f64).abs() < 1e-12);
                        assert!((j.column(r).sum() - 1.0 / d as f64).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn classical_model_lp_is_feasible_for_small_mubs() {
        for d in [2, 3] {
            let bs = gen_mub(d).unwrap();
            let (ok, model) = classical_model_lp(&bs).unwrap();
            assert!(ok);
            let model = model.unwrap();
            assert!(classical_model_violation(&bs, &model).unwrap() < 1e-9);
        }
    }

    #[test]
    fn classical_model_single_basis_is_uniform() {
        let bs = BasisSet::new(3, vec![gen_mub(3).unwrap().bases()[0].vectors.clone()]).unwrap();
        let (ok, model) = check_classical_model(&bs, 1e-9).unwrap();
        assert!(ok);
        let model = model.unwrap();
        assert!(model.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn perfectly_correlated_pair_needs_the_lp() {
        // Two copies of one basis: joint is diagonal, the uniform guess fails
        // but the LP finds the correlated model.
        let bs2 = gen_mub(2).unwrap();
        let v = bs2.bases()[1].vectors.clone();
        let bs = BasisSet::new(2, vec![v.clone(), v]).unwrap();
        let (ok, model) = check_classical_model(&bs, 1e-9).unwrap();
        assert!(ok);
        let m = model.unwrap();
        assert!((m[model_index(&[0, 0], 2)] - 0.5).abs() < 1e-9);
        assert!((m[model_index(&[1, 1], 2)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn validation_of_generated_sets() {
        for d in [2, 3, 5] {
            let r = validate(&gen_mub(d).unwrap(), 1e-9).unwrap();
            assert!(r.passes() && r.unbiased, "{r:?}");
            assert_eq!(r.span_rank, d * d);
        }
    }

    #[test]
    fn nondegeneracy_is_invariant_under_rotation_and_relabeling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for d in [2, 3] {
            let bs = gen_mub(d).unwrap();
            for _ in 0..5 {
                let g = CMatrix::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                let u = g.qr().q();
                assert!(max_abs(&(u.adjoint() * &u - identity(d))) < 1e-12);
                let rotated = bs.rotated(&u);
                assert_eq!(check_nondegenerate(&rotated, 1e-9), (true, d * d));

                let relabeled: Vec<Vec<CVector>> = rotated
                    .bases()
                    .iter()
                    .map(|b| b.vectors.iter().rev().cloned().collect())
                    .collect();
                let relabeled = BasisSet::new(d, relabeled).unwrap();
                assert_eq!(check_nondegenerate(&relabeled, 1e-9), (true, d * d));
            }
        }
    }

    #[test]
    fn json_roundtrip_and_shape_errors() {
        let bs = gen_mub(3).unwrap();
        let text = serde_json::to_string(&bs).unwrap();
        let back: BasisSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, bs);
        let bad = r#"{"dim": 2, "bases": [[[[1.0, 0.0], [0.0, 0.0]]]]}"#;
        assert!(serde_json::from_str::<BasisSet>(bad).is_err());
    }
}
