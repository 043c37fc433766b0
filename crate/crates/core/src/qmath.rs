//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Vectors and matrices are plain `nalgebra` dynamic types over `Complex64`.
//! Composite systems are laid out row-major: in `A ⊗ B` the index of `A`
//! is the slow one, which is also the convention of [`tensor`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Default absolute tolerance for equality checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative singular-value cutoff used by [`lstsq`].
pub const LSTSQ_RCOND: f64 = 1e-10;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Subsystem dimensions of a composite space, slowest factor first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeDims(Vec<usize>);

impl CompositeDims {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() || factor_dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "factor dimensions must be positive, got {factor_dims:?}"
            )));
        }
        Ok(Self(factor_dims))
    }

    pub fn factors(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides: stride of factor `j` is the product of all later factors.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for j in (0..self.0.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * self.0[j + 1];
        }
        strides
    }

    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.0.len()];
        for j in (0..self.0.len()).rev() {
            out[j] = index % self.0[j];
            index /= self.0[j];
        }
        out
    }
}

/// Kronecker product; `a` carries the slow index.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn tensor_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// Tensor product of a sequence of vectors, first vector slowest.
pub fn tensor_vecs<'a>(factors: impl IntoIterator<Item = &'a CVector>) -> CVector {
    factors
        .into_iter()
        .fold(CVector::from_element(1, ONE), |acc, v| tensor_vec(&acc, v))
}

pub fn tensor_mats<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    factors
        .into_iter()
        .fold(CMatrix::from_element(1, 1, ONE), |acc, m| tensor(&acc, m))
}

/// |v⟩⟨v|
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Reduced operator on the factors listed in `keep`.
pub fn partial_trace(rho: &CMatrix, dims: &CompositeDims, keep: &[usize]) -> Result<CMatrix> {
    let total = dims.total();
    if rho.nrows() != total || rho.ncols() != total {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{}, composite dims {:?} need {total}",
            rho.nrows(),
            rho.ncols(),
            dims.factors()
        )));
    }
    let nfac = dims.factors().len();
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&k| k >= nfac) {
        return Err(Error::IndexOutOfRange(format!(
            "factor {bad} of {nfac}"
        )));
    }
    let traced: Vec<usize> = (0..nfac).filter(|j| !keep.contains(j)).collect();
    let strides = dims.strides();

    let offsets = |factors: &[usize]| -> Vec<usize> {
        let mut out = vec![0usize];
        for &f in factors {
            let mut next = Vec::with_capacity(out.len() * dims.factors()[f]);
            for &base in &out {
                for digit in 0..dims.factors()[f] {
                    next.push(base + digit * strides[f]);
                }
            }
            out = next;
        }
        out
    };
    let kept_off = offsets(&keep);
    let traced_off = offsets(&traced);

    let mut out = CMatrix::zeros(kept_off.len(), kept_off.len());
    for (r, &kr) in kept_off.iter().enumerate() {
        for (s, &ks) in kept_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += rho[(kr + t, ks + t)];
            }
            out[(r, s)] = acc;
        }
    }
    Ok(out)
}

/// Reorders tensor factors of a vector: factor `perm[p]` of the input
/// becomes factor `p` of the output.
pub fn permute_factors(v: &CVector, dims: &CompositeDims, perm: &[usize]) -> Result<CVector> {
    let nfac = dims.factors().len();
    let mut seen = vec![false; nfac];
    if perm.len() != nfac || perm.iter().any(|&p| p >= nfac || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidInput(format!("{perm:?} is not a permutation of {nfac} factors")));
    }
    if v.len() != dims.total() {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} vs composite dims {:?}",
            v.len(),
            dims.factors()
        )));
    }
    let new_dims = CompositeDims(perm.iter().map(|&p| dims.factors()[p]).collect());
    let new_strides = new_dims.strides();
    let mut out = CVector::zeros(v.len());
    for (idx, val) in v.iter().enumerate() {
        let digits = dims.digits(idx);
        let new_idx: usize = perm
            .iter()
            .zip(&new_strides)
            .map(|(&p, &s)| digits[p] * s)
            .sum();
        out[new_idx] = *val;
    }
    Ok(out)
}

/// Nullspace of a matrix from its singular value decomposition.
#[derive(Debug, Clone)]
pub struct Nullspace {
    pub dimension: usize,
    pub basis: Vec<CVector>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
}

/// Right-singular subspace belonging to singular values `<= tol * sigma_max`.
pub fn nullspace(a: &CMatrix, tol: f64) -> Nullspace {
    let (rows, cols) = a.shape();
    // Thin SVD only yields min(rows, cols) right vectors; pad to get all of them.
    let padded = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = tol * sigma_max;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

    let basis: Vec<CVector> = order
        .iter()
        .filter(|&&k| sigma_max == 0.0 || svd.singular_values[k] <= cut)
        .map(|&k| v_t.row(k).adjoint())
        .collect();
    Nullspace {
        dimension: basis.len(),
        basis,
        singular_values,
    }
}

/// Number of singular values above `tol * sigma_max`.
pub fn rank(a: &CMatrix, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * sigma_max).count()
}

pub fn real_rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * sigma_max).count()
}

/// Minimum-norm least-squares solution of `a x = b` and the residual `‖a x − b‖₂`.
pub fn lstsq(a: &CMatrix, b: &CVector) -> Result<(CVector, f64)> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, right-hand side has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut x = CVector::zeros(a.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= LSTSQ_RCOND * sigma_max || s == 0.0 {
            continue;
        }
        let coeff = u.column(k).dotc(b) / s;
        x += v_t.row(k).adjoint() * coeff;
    }
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigenvalues of the hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    hermitian_part(m).symmetric_eigenvalues().iter().cloned().collect()
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// ½‖ρ − σ‖₁ for hermitian arguments.
pub fn trace_distance(rho: &CMatrix, sigma: &CMatrix) -> f64 {
    0.5 * hermitian_eigenvalues(&(rho - sigma))
        .iter()
        .map(|l| l.abs())
        .sum::<f64>()
}

/// Real coordinates of a hermitian `n×n` matrix: the diagonal followed by
/// `√2·Re` and `√2·Im` of the strict upper triangle. The map is an isometry
/// from the Hilbert–Schmidt inner product onto `R^{n²}`.
pub fn hermitian_coords(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(m[(i, i)].re);
    }
    let s2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(s2 * m[(i, j)].re);
            out.push(s2 * m[(i, j)].im);
        }
    }
    out
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn basis_vector(n: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[k] = ONE;
    v
}

pub fn column(v: &CVector) -> CMatrix {
    CMatrix::from_column_slice(v.len(), 1, v.as_slice())
}
