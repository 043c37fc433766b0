//! Alice's side of the Mean King game: the maximally entangled state, the
//! conditional states she holds after Bob's measurement, safe vectors for
//! every guessing function, and the POVM weights that turn them into a
//! maximal strategy.
//!
//! Vectors on `H ⊗ H` put Alice's kept half first. Guessing functions and
//! outcomes are 0-based in code and files; [`GuessingFunction`]'s `Display`
//! prints the 1-based form used in reports.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bases::BasisSet;
use crate::error::{Error, Result};
use crate::io::{pairs_to_vec, vec_to_pairs, Pair};
use crate::lp::{LinearProgram, LpStatus, Objective};
use crate::qmath::{
    c, hermitian_coords, identity, lstsq, max_abs, outer, tensor, tensor_vecs, CMatrix, CVector,
    ONE, ZERO,
};

/// Residual above which a safe-vector solve is rejected.
pub const SAFE_RESIDUAL_TOL: f64 = 1e-8;
/// Weights at or below this are treated as zero when deciding maximality.
pub const MAXIMAL_WEIGHT_FLOOR: f64 = 1e-9;
/// Operator residual allowed for `Σ p(x) |η_x⟩⟨η_x| = 1`.
pub const COMPLETENESS_TOL: f64 = 1e-8;
/// Dimension bound for `(H ⊗ H)^{⊗n}`.
pub const MAX_PRODUCT_DIM: usize = 4096;

/// One outcome per basis: Alice announces `x(b)` once `b` is public.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GuessingFunction(Vec<usize>);

impl GuessingFunction {
    pub fn new(values: Vec<usize>, d: usize) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|&&v| v >= d) {
            return Err(Error::IndexOutOfRange(format!(
                "guessing function value {bad} with d = {d}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    /// Guess for basis `b`.
    pub fn guess(&self, b: usize) -> usize {
        self.0[b]
    }

    /// Position in [`GuessingFunction::all`] (basis 0 is the slowest digit).
    pub fn index(&self, d: usize) -> usize {
        self.0.iter().fold(0, |acc, &v| acc * d + v)
    }

    pub fn from_index(mut index: usize, d: usize, k: usize) -> Self {
        let mut values = vec![0; k];
        for slot in values.iter_mut().rev() {
            *slot = index % d;
            index /= d;
        }
        Self(values)
    }

    /// All `d^k` guessing functions in index order.
    pub fn all(d: usize, k: usize) -> impl Iterator<Item = GuessingFunction> {
        let count = d.pow(k as u32);
        (0..count).map(move |idx| Self::from_index(idx, d, k))
    }

    fn with(&self, b: usize, value: usize) -> Self {
        let mut v = self.0.clone();
        v[b] = value;
        Self(v)
    }
}

impl fmt::Display for GuessingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (n, v) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, ")")
    }
}

/// `d^{-1/2} Σ_i |i⟩ ⊗ |i⟩`
pub fn omega(d: usize) -> CVector {
    let amp = c(1.0 / (d as f64).sqrt(), 0.0);
    CVector::from_fn(d * d, |idx, _| if idx / d == idx % d { amp } else { ZERO })
}

/// Alice's unnormalized conditional state `(1 ⊗ |Φ_b(i)⟩⟨Φ_b(i)|) Ω`.
pub fn phi_hat(bs: &BasisSet, b: usize, i: usize) -> Result<CVector> {
    let d = bs.dim();
    let proj = outer(bs.vector(b, i)?);
    Ok(tensor(&identity(d), &proj) * omega(d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeVector {
    pub x: GuessingFunction,
    pub eta: CVector,
    pub residual: f64,
}

/// Rows `Φ̂_b(i)ᵀ`, ordered by `(b, i)`. With `y = conj(η)` the safe-vector
/// condition `⟨η|Φ̂_b(i)⟩ = δ_{x(b),i}` reads `A y = δ`.
pub fn safe_vector_system(bs: &BasisSet) -> Result<CMatrix> {
    let d = bs.dim();
    let k = bs.len();
    let mut a = CMatrix::zeros(k * d, d * d);
    for b in 0..k {
        for i in 0..d {
            let ph = phi_hat(bs, b, i)?;
            a.row_mut(b * d + i).copy_from(&ph.transpose());
        }
    }
    Ok(a)
}

fn delta_rhs(x: &GuessingFunction, d: usize) -> CVector {
    CVector::from_fn(x.values().len() * d, |r, _| {
        if x.guess(r / d) == r % d {
            ONE
        } else {
            ZERO
        }
    })
}

fn solve_with_system(system: &CMatrix, x: &GuessingFunction, d: usize) -> Result<SafeVector> {
    let (y, residual) = lstsq(system, &delta_rhs(x, d))?;
    if residual >= SAFE_RESIDUAL_TOL {
        return Err(Error::ResidualTooLarge {
            x: x.to_string(),
            residual,
        });
    }
    Ok(SafeVector {
        x: x.clone(),
        eta: y.map(|z| z.conj()),
        residual,
    })
}

/// Minimum-norm safe vector for `x`.
pub fn solve_safe_vector(bs: &BasisSet, x: &GuessingFunction) -> Result<SafeVector> {
    if x.values().len() != bs.len() {
        return Err(Error::DimensionMismatch(format!(
            "guessing function has {} entries for {} bases",
            x.values().len(),
            bs.len()
        )));
    }
    GuessingFunction::new(x.values().to_vec(), bs.dim())?;
    solve_with_system(&safe_vector_system(bs)?, x, bs.dim())
}

/// Safe vectors for every guessing function, in index order.
pub fn solve_all_safe_vectors(bs: &BasisSet) -> Result<Vec<SafeVector>> {
    let system = safe_vector_system(bs)?;
    GuessingFunction::all(bs.dim(), bs.len())
        .map(|x| solve_with_system(&system, &x, bs.dim()))
        .collect()
}

/// `max_{b,i} |⟨η_x|Φ̂_b(i)⟩ − δ_{x(b),i}|`
pub fn safe_condition_error(bs: &BasisSet, sv: &SafeVector) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for b in 0..bs.len() {
        for i in 0..bs.dim() {
            let target = if sv.x.guess(b) == i { 1.0 } else { 0.0 };
            let overlap = sv.eta.dotc(&phi_hat(bs, b, i)?);
            worst = worst.max((overlap - c(target, 0.0)).norm());
        }
    }
    Ok(worst)
}

/// Guessing functions `(u, v, w)` with `η_x = η_u + η_v − η_w`.
///
/// `u` and `w` take `j1` on basis `b1`; `v` and `w` take `j2` on basis `b2`;
/// all three agree with `x` elsewhere.
pub fn decomposition_triple(
    x: &GuessingFunction,
    b1: usize,
    b2: usize,
    j1: usize,
    j2: usize,
) -> Result<(GuessingFunction, GuessingFunction, GuessingFunction)> {
    let k = x.values().len();
    if b1 >= k || b2 >= k {
        return Err(Error::IndexOutOfRange(format!("bases ({b1}, {b2}) with k = {k}")));
    }
    if b1 == b2 {
        return Err(Error::Precondition("the two bases must differ".into()));
    }
    if j1 == x.guess(b1) || j2 == x.guess(b2) {
        return Err(Error::Precondition(
            "replacement outcomes must differ from x on their bases".into(),
        ));
    }
    let u = x.with(b1, j1);
    let v = x.with(b2, j2);
    let w = u.with(b2, j2);
    Ok((u, v, w))
}

/// Weight LP: nonnegative weights with `Σ p(x) |η_x⟩⟨η_x| = 1`,
/// maximizing the smallest weight.
pub fn solve_povm_weights(safe_vectors: &[SafeVector]) -> Result<Vec<f64>> {
    let Some(first) = safe_vectors.first() else {
        return Err(Error::InvalidInput("no safe vectors".into()));
    };
    let dim = first.eta.len();
    let coords: Vec<Vec<f64>> = safe_vectors
        .iter()
        .map(|sv| hermitian_coords(&outer(&sv.eta)))
        .collect();
    let rows = dim * dim;
    let a_eq = DMatrix::from_fn(rows, coords.len(), |r, col| coords[col][r]);
    let b_eq = DVector::from_vec(hermitian_coords(&identity(dim)));
    let n = safe_vectors.len();
    let sol = LinearProgram {
        a_eq,
        b_eq,
        lower_bounds: DVector::zeros(n),
        objective: Objective::MaximizeMin((0..n).collect()),
    }
    .solve()?;
    match (sol.status, sol.point, sol.objective) {
        (LpStatus::Infeasible, _, _) | (_, None, _) => Err(Error::Infeasible),
        (_, Some(p), Some(min_weight)) => {
            if min_weight <= MAXIMAL_WEIGHT_FLOOR {
                Err(Error::NotMaximal { min_weight })
            } else {
                Ok(p.iter().cloned().collect())
            }
        }
        (_, Some(_), None) => unreachable!("MaximizeMin always reports its objective"),
    }
}

/// `‖Σ p(x) |η_x⟩⟨η_x| − 1‖_max`
pub fn completeness_residual(safe_vectors: &[SafeVector], weights: &[f64]) -> f64 {
    let dim = safe_vectors.first().map_or(0, |sv| sv.eta.len());
    let mut acc = CMatrix::zeros(dim, dim);
    for (sv, &p) in safe_vectors.iter().zip(weights) {
        acc += outer(&sv.eta) * c(p, 0.0);
    }
    max_abs(&(acc - identity(dim)))
}

/// Alice's maximal strategy: Ω plus the POVM `{p(x) |η_x⟩⟨η_x|}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    basis_set: BasisSet,
    omega: CVector,
    safe_vectors: Vec<SafeVector>,
    weights: Vec<f64>,
}

impl Strategy {
    pub fn build(bs: &BasisSet) -> Result<Self> {
        let safe_vectors = solve_all_safe_vectors(bs)?;
        let weights = solve_povm_weights(&safe_vectors)?;
        Self::from_parts(bs.clone(), safe_vectors, weights)
    }

    pub fn from_parts(
        basis_set: BasisSet,
        safe_vectors: Vec<SafeVector>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let d = basis_set.dim();
        let k = basis_set.len();
        let count = d.pow(k as u32);
        if safe_vectors.len() != count || weights.len() != count {
            return Err(Error::DimensionMismatch(format!(
                "expected {count} safe vectors and weights, got {} and {}",
                safe_vectors.len(),
                weights.len()
            )));
        }
        for (idx, sv) in safe_vectors.iter().enumerate() {
            if sv.x.values().len() != k || sv.x.index(d) != idx || sv.eta.len() != d * d {
                return Err(Error::InvalidInput(format!(
                    "safe vector {idx} has the wrong guessing function or length"
                )));
            }
        }
        if weights.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::InvalidInput("POVM weights must be nonnegative".into()));
        }
        let residual = completeness_residual(&safe_vectors, &weights);
        if residual >= COMPLETENESS_TOL {
            return Err(Error::Precondition(format!(
                "POVM completeness residual {residual:.3e}"
            )));
        }
        Ok(Self {
            omega: omega(d),
            basis_set,
            safe_vectors,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis_set.dim()
    }

    pub fn basis_set(&self) -> &BasisSet {
        &self.basis_set
    }

    pub fn omega(&self) -> &CVector {
        &self.omega
    }

    pub fn safe_vectors(&self) -> &[SafeVector] {
        &self.safe_vectors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_outcomes(&self) -> usize {
        self.safe_vectors.len()
    }

    pub fn is_maximal(&self) -> bool {
        self.weights.iter().all(|&p| p > MAXIMAL_WEIGHT_FLOOR)
    }

    /// Alice's announcement for POVM outcome `x_index` once basis `b` is public.
    pub fn guess(&self, x_index: usize, b: usize) -> usize {
        self.safe_vectors[x_index].x.guess(b)
    }

    pub fn completeness_residual(&self) -> f64 {
        completeness_residual(&self.safe_vectors, &self.weights)
    }

    /// Outcome distribution `p(x) ⟨η_x|ρ|η_x⟩` for a density matrix on `H ⊗ H`.
    pub fn outcome_distribution(&self, rho: &CMatrix) -> Vec<f64> {
        self.safe_vectors
            .iter()
            .zip(&self.weights)
            .map(|(sv, &p)| p * sv.eta.dotc(&(rho * &sv.eta)).re)
            .collect()
    }

    /// Outcome distribution for the pure (possibly unnormalized) state `psi`.
    pub fn outcome_distribution_pure(&self, psi: &CVector) -> Vec<f64> {
        self.safe_vectors
            .iter()
            .zip(&self.weights)
            .map(|(sv, &p)| p * sv.eta.dotc(psi).norm_sqr())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SafeVectorRecord {
    pub x: Vec<usize>,
    pub eta: Vec<Pair>,
    pub p: f64,
    pub residual: f64,
}

/// Strategy file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyFile {
    pub basis_set: BasisSet,
    pub omega: Vec<Pair>,
    pub safe_vectors: Vec<SafeVectorRecord>,
}

impl From<&Strategy> for StrategyFile {
    fn from(s: &Strategy) -> Self {
        StrategyFile {
            basis_set: s.basis_set.clone(),
            omega: vec_to_pairs(&s.omega),
            safe_vectors: s
                .safe_vectors
                .iter()
                .zip(&s.weights)
                .map(|(sv, &p)| SafeVectorRecord {
                    x: sv.x.values().to_vec(),
                    eta: vec_to_pairs(&sv.eta),
                    p,
                    residual: sv.residual,
                })
                .collect(),
        }
    }
}

impl TryFrom<StrategyFile> for Strategy {
    type Error = Error;

    fn try_from(f: StrategyFile) -> Result<Self> {
        let d = f.basis_set.dim();
        let om = pairs_to_vec(&f.omega);
        if om.len() != d * d || (om - omega(d)).norm() > 1e-12 {
            return Err(Error::InvalidInput(
                "strategy omega must be the standard maximally entangled state".into(),
            ));
        }
        let mut safe_vectors = Vec::with_capacity(f.safe_vectors.len());
        let mut weights = Vec::with_capacity(f.safe_vectors.len());
        for rec in f.safe_vectors {
            safe_vectors.push(SafeVector {
                x: GuessingFunction::new(rec.x, d)?,
                eta: pairs_to_vec(&rec.eta),
                residual: rec.residual,
            });
            weights.push(rec.p);
        }
        Strategy::from_parts(f.basis_set, safe_vectors, weights)
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StrategyFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let f = StrategyFile::deserialize(deserializer)?;
        Strategy::try_from(f).map_err(serde::de::Error::custom)
    }
}

/// `n`-fold execution of a single-round strategy. Product vectors and
/// weights are produced on demand; factors are ordered `(A₁B₁)(A₂B₂)…`.
#[derive(Debug, Clone)]
pub struct ProductStrategy {
    base: Strategy,
    n: usize,
}

pub fn tensor_strategy(s: &Strategy, n: usize) -> Result<ProductStrategy> {
    if n == 0 {
        return Err(Error::InvalidInput("block length must be at least 1".into()));
    }
    let single = s.dim() * s.dim();
    match single.checked_pow(n as u32) {
        Some(total) if total <= MAX_PRODUCT_DIM => Ok(ProductStrategy {
            base: s.clone(),
            n,
        }),
        _ => Err(Error::ResourceGuard(format!(
            "d^(2n) = {single}^{n} exceeds {MAX_PRODUCT_DIM}"
        ))),
    }
}

impl ProductStrategy {
    pub fn base(&self) -> &Strategy {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of `(H ⊗ H)^{⊗n}`.
    pub fn dim(&self) -> usize {
        (self.base.dim() * self.base.dim()).pow(self.n as u32)
    }

    pub fn num_outcomes(&self) -> usize {
        self.base.num_outcomes().pow(self.n as u32)
    }

    /// Per-round outcome indices of product outcome `index` (round 0 slowest).
    pub fn outcome_tuple(&self, mut index: usize) -> Vec<usize> {
        let m = self.base.num_outcomes();
        let mut out = vec![0; self.n];
        for slot in out.iter_mut().rev() {
            *slot = index % m;
            index /= m;
        }
        out
    }

    /// `η_x⃗ = ⊗_l η_{x_l}`
    pub fn vector(&self, xs: &[usize]) -> CVector {
        tensor_vecs(xs.iter().map(|&x| &self.base.safe_vectors[x].eta))
    }

    pub fn weight(&self, xs: &[usize]) -> f64 {
        xs.iter().map(|&x| self.base.weights[x]).product()
    }

    /// `⊗_l Φ̂_{b_l}(i_l)`
    pub fn phi_hat(&self, bs: &[usize], is: &[usize]) -> Result<CVector> {
        if bs.len() != self.n || is.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "need {} bases and outcomes",
                self.n
            )));
        }
        let factors = bs
            .iter()
            .zip(is)
            .map(|(&b, &i)| phi_hat(&self.base.basis_set, b, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(tensor_vecs(factors.iter()))
    }

    /// Whether every round's guess matches: `Π δ_{x_l(b_l), i_l}`.
    pub fn correct(&self, xs: &[usize], bs: &[usize], is: &[usize]) -> bool {
        xs.iter()
            .zip(bs.iter().zip(is))
            .all(|(&x, (&b, &i))| self.base.guess(x, b) == i)
    }
}
