//! Eve's coherent attack on one block of `n` protocol instances.
//!
//! Eve supplies the whole source state `Ψ ∈ A ⊗ B ⊗ E` (which also covers
//! any attack on the outgoing leg) and applies a channel with Kraus
//! operators `V_l` to the returning system together with her ancilla,
//! keeping the Kraus label `l`. Blocks are treated as one large game: `A`
//! and `B` are `D = d^n` dimensional and grouped as `A₁…A_n`, `B₁…B_n`.
//!
//! All states conditioned on Bob's `(b⃗, i⃗)` are normalized, with the
//! outcome probability reported separately.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bases::BasisSet;
use crate::error::{Error, Result};
use crate::io::{mat_to_rows, pairs_to_vec, rows_to_mat, vec_to_pairs, Pair};
use crate::qmath::{
    c, identity, max_abs, min_eigenvalue, outer, permute_factors, tensor, tensor_mats,
    tensor_vec, tensor_vecs, trace_distance, CMatrix, CVector, CompositeDims, ZERO,
};
use crate::retrodiction::{omega, tensor_strategy, ProductStrategy, Strategy};

/// Bound on `d^{2n} · d_E`.
pub const MAX_ATTACK_DIM: usize = 4096;
/// Bound on the number of product POVM outcomes enumerated exactly.
pub const MAX_ENUMERATED_OUTCOMES: usize = 4096;
/// Outcomes below this probability are treated as impossible.
pub const ZERO_PROB: f64 = 1e-12;
const MODEL_TOL: f64 = 1e-9;

/// `X_d^m Z_d^l` with `X|j⟩ = |j+1⟩` and `Z|j⟩ = e^{2πij/d}|j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylOperator {
    pub d: usize,
    pub m: usize,
    pub l: usize,
    pub matrix: CMatrix,
}

pub fn weyl(d: usize, m: usize, l: usize) -> Result<WeylOperator> {
    if d == 0 || m >= d || l >= d {
        return Err(Error::IndexOutOfRange(format!("weyl({d}, {m}, {l})")));
    }
    let mut matrix = CMatrix::zeros(d, d);
    for j in 0..d {
        let theta = 2.0 * PI * ((l * j) % d) as f64 / d as f64;
        matrix[((j + m) % d, j)] = c(theta.cos(), theta.sin());
    }
    Ok(WeylOperator { d, m, l, matrix })
}

/// `⊗_j X^{m_j} Z^{l_j}` for the Weyl index `w` of an `n`-qudit block;
/// `w` enumerates `(m₁, l₁, m₂, l₂, …)` with the first qudit slowest.
pub fn block_weyl(d: usize, n: usize, mut w: usize) -> CMatrix {
    let mut pairs = vec![(0, 0); n];
    for slot in pairs.iter_mut().rev() {
        let l = w % d;
        w /= d;
        let m = w % d;
        w /= d;
        *slot = (m, l);
    }
    let factors: Vec<CMatrix> = pairs
        .into_iter()
        .map(|(m, l)| weyl(d, m, l).expect("indices reduced mod d").matrix)
        .collect();
    tensor_mats(factors.iter())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackModel {
    d: usize,
    n: usize,
    d_e: usize,
    psi_abe: CVector,
    kraus: Vec<CMatrix>,
}

impl AttackModel {
    pub fn new(d: usize, n: usize, d_e: usize, psi_abe: CVector, kraus: Vec<CMatrix>) -> Result<Self> {
        if d < 2 || n == 0 || d_e == 0 {
            return Err(Error::InvalidAttack(format!("d = {d}, n = {n}, d_E = {d_e}")));
        }
        let block = d
            .checked_pow(n as u32)
            .ok_or_else(|| Error::ResourceGuard("block dimension overflow".into()))?;
        let total = block * block * d_e;
        if total > MAX_ATTACK_DIM {
            return Err(Error::ResourceGuard(format!(
                "d^(2n) d_E = {total} exceeds {MAX_ATTACK_DIM}"
            )));
        }
        if psi_abe.len() != total {
            return Err(Error::InvalidAttack(format!(
                "psi_abe has {} entries, expected {total}",
                psi_abe.len()
            )));
        }
        if (psi_abe.norm() - 1.0).abs() > MODEL_TOL {
            return Err(Error::InvalidAttack(format!(
                "psi_abe has norm {}",
                psi_abe.norm()
            )));
        }
        let be = block * d_e;
        if kraus.is_empty() || kraus.iter().any(|k| k.shape() != (be, be)) {
            return Err(Error::InvalidAttack(format!(
                "need at least one {be}x{be} Kraus operator"
            )));
        }
        let mut sum = CMatrix::zeros(be, be);
        for k in &kraus {
            sum += k.adjoint() * k;
        }
        let defect = max_abs(&(sum - identity(be)));
        if defect >= MODEL_TOL {
            return Err(Error::InvalidAttack(format!(
                "Kraus operators are not trace preserving (defect {defect:.3e})"
            )));
        }
        Ok(Self {
            d,
            n,
            d_e,
            psi_abe,
            kraus,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn psi_abe(&self) -> &CVector {
        &self.psi_abe
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// `D = d^n`
    pub fn block_dim(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    /// No attack: `Ω ⊗ e₀` with a one-dimensional ancilla and the identity channel.
    pub fn identity(d: usize, n: usize) -> Result<Self> {
        let dim = d.pow(n as u32);
        Self::new(d, n, 1, omega(dim), vec![identity(dim)])
    }

    /// Eve measures every returning qudit in basis `b_star` with
    /// probability `strength` and forwards the eigenstate she found.
    pub fn intercept_resend(bs: &BasisSet, b_star: usize, strength: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::InvalidAttack(format!("strength {strength} outside [0, 1]")));
        }
        let d = bs.dim();
        let dim = d.pow(n as u32);
        let projectors: Vec<CMatrix> = (0..d)
            .map(|j| bs.vector(b_star, j).map(outer))
            .collect::<Result<_>>()?;
        let mut kraus = Vec::with_capacity(dim + 1);
        if strength < 1.0 {
            kraus.push(identity(dim) * c((1.0 - strength).sqrt(), 0.0));
        }
        for j in 0..dim {
            let digits = block_digits(j, d, n);
            let op = tensor_mats(digits.iter().map(|&jj| &projectors[jj]));
            kraus.push(op * c(strength.sqrt(), 0.0));
        }
        Self::new(d, n, 1, omega(dim), kraus)
    }

    /// Source emits `cos ε Ω + sin ε (1 ⊗ X₁) Ω`; Eve holds nothing.
    pub fn source_replace(d: usize, n: usize, eps: f64) -> Result<Self> {
        let dim = d.pow(n as u32);
        let om = omega(dim);
        // X on the first returning qudit only.
        let shift = tensor(&weyl(d, 1, 0)?.matrix, &identity(dim / d));
        let shifted = tensor(&identity(dim), &shift) * &om;
        let psi = om * c(eps.cos(), 0.0) + shifted * c(eps.sin(), 0.0);
        Self::new(d, n, 1, psi, vec![identity(dim)])
    }

    /// Eve entangles a qubit with Bob's outgoing half: it is rotated by
    /// `theta` whenever Bob's block is not in `|0…0⟩`.
    pub fn probe_entangle(d: usize, n: usize, theta: f64) -> Result<Self> {
        let dim = d.pow(n as u32);
        let inv = 1.0 / (dim as f64).sqrt();
        let mut psi = CVector::zeros(dim * dim * 2);
        for j in 0..dim {
            let (e0, e1) = if j == 0 { (1.0, 0.0) } else { (theta.cos(), theta.sin()) };
            let base = (j * dim + j) * 2;
            psi[base] = c(inv * e0, 0.0);
            psi[base + 1] = c(inv * e1, 0.0);
        }
        Self::new(d, n, 2, psi, vec![identity(dim * 2)])
    }

    /// Eve keeps Bob's half of Ω and sends him a fresh `|0…0⟩`.
    pub fn swap_out(d: usize, n: usize) -> Result<Self> {
        let dim = d.pow(n as u32);
        let inv = 1.0 / (dim as f64).sqrt();
        let mut psi = CVector::zeros(dim * dim * dim);
        for j in 0..dim {
            // |j⟩_A |0⟩_B |j⟩_E
            psi[j * dim * dim + j] = c(inv, 0.0);
        }
        Self::new(d, n, dim, psi, vec![identity(dim * dim)])
    }

    /// `Ω ⊗ e` followed by `1_B ⊗ K_l`: every `E_{lk}` is a multiple of the identity.
    pub fn scalar_form(d: usize, n: usize, e: &CVector, kraus_on_e: &[CMatrix]) -> Result<Self> {
        let dim = d.pow(n as u32);
        let d_e = e.len();
        let psi = tensor_vec(&omega(dim), e);
        let kraus = kraus_on_e.iter().map(|k| tensor(&identity(dim), k)).collect();
        Self::new(d, n, d_e, psi, kraus)
    }

    /// Scalar-form attack with a random ancilla state and random Kraus operators on E.
    pub fn random_scalar_form<R: Rng + ?Sized>(
        rng: &mut R,
        d: usize,
        n: usize,
        d_e: usize,
        num_kraus: usize,
    ) -> Result<Self> {
        let e = random_unit_vector(rng, d_e);
        let kraus = random_kraus(rng, d_e, num_kraus);
        Self::scalar_form(d, n, &e, &kraus)
    }

    /// Uniformly scattered source state and random Kraus operators.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        d: usize,
        n: usize,
        d_e: usize,
        num_kraus: usize,
    ) -> Result<Self> {
        let dim = d.pow(n as u32);
        let psi = random_unit_vector(rng, dim * dim * d_e);
        let kraus = random_kraus(rng, dim * d_e, num_kraus);
        Self::new(d, n, d_e, psi, kraus)
    }
}

/// Projection of an attack onto scalar form: the source becomes `Ω ⊗ e`
/// with `e` the Ω-component of `Ψ`, each `V_l` becomes `1_B ⊗ tr_B(V_l)/D`,
/// and one extra Kraus operator restores trace preservation.
pub fn scalar_projection(am: &AttackModel) -> Result<AttackModel> {
    let dim = am.block_dim();
    let d_e = am.d_e;
    let dec = decompose_source(&am.psi_abe, am.d, am.n, d_e)?;
    let mut e = CVector::from_vec(dec.coefficients[0].clone());
    if e.norm() < 1e-12 {
        e = crate::qmath::basis_vector(d_e, 0);
    }
    let e = &e / c(e.norm(), 0.0);
    let mut kraus_e: Vec<CMatrix> = am
        .kraus
        .iter()
        .map(|v| {
            CMatrix::from_fn(d_e, d_e, |k, beta| {
                (0..dim).map(|g| v[(g * d_e + k, g * d_e + beta)]).sum::<num_complex::Complex64>()
                    / c(dim as f64, 0.0)
            })
        })
        .collect();
    let mut used = CMatrix::zeros(d_e, d_e);
    for k in &kraus_e {
        used += k.adjoint() * k;
    }
    let rest = crate::qmath::hermitian_part(&(identity(d_e) - used)).symmetric_eigen();
    let sqrt_rest = &rest.eigenvectors
        * CMatrix::from_diagonal(&rest.eigenvalues.map(|l| c(l.max(0.0).sqrt(), 0.0)))
        * rest.eigenvectors.adjoint();
    if max_abs(&sqrt_rest) > 0.0 {
        kraus_e.push(sqrt_rest);
    }
    AttackModel::scalar_form(am.d, am.n, &e, &kraus_e)
}

fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    let v = CVector::from_fn(len, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let norm = v.norm();
    v / c(norm, 0.0)
}

/// Blocks of a random isometry `C^m → C^{m·count}`.
pub fn random_kraus<R: Rng + ?Sized>(rng: &mut R, m: usize, count: usize) -> Vec<CMatrix> {
    let g = CMatrix::from_fn(m * count, m, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let q = g.qr().q();
    (0..count).map(|l| q.rows(l * m, m).into_owned()).collect()
}

fn block_digits(mut index: usize, d: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = index % d;
        index /= d;
    }
    out
}

/// Attack file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackFile {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "d_E")]
    pub d_e: usize,
    pub psi_abe: Vec<Pair>,
    pub kraus: Vec<Vec<Vec<Pair>>>,
}

impl From<&AttackModel> for AttackFile {
    fn from(am: &AttackModel) -> Self {
        AttackFile {
            d: am.d,
            n: am.n,
            d_e: am.d_e,
            psi_abe: vec_to_pairs(&am.psi_abe),
            kraus: am.kraus.iter().map(mat_to_rows).collect(),
        }
    }
}

impl TryFrom<AttackFile> for AttackModel {
    type Error = Error;

    fn try_from(f: AttackFile) -> Result<Self> {
        let kraus = f.kraus.iter().map(|k| rows_to_mat(k)).collect::<Result<_>>()?;
        AttackModel::new(f.d, f.n, f.d_e, pairs_to_vec(&f.psi_abe), kraus)
    }
}

/// Coefficients `p_{w,β}` of `Ψ` in the basis `(1 ⊗ U_w) Ω ⊗ e_β`.
#[derive(Debug, Clone)]
pub struct SourceDecomposition {
    pub d: usize,
    pub n: usize,
    pub d_e: usize,
    /// Indexed `[w][β]`, `w` as in [`block_weyl`].
    pub coefficients: Vec<Vec<num_complex::Complex64>>,
}

impl SourceDecomposition {
    fn block_dim(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    /// `Û_β = Σ_w p_{w,β} U_w`
    pub fn u_hat(&self, beta: usize) -> CMatrix {
        let dim = self.block_dim();
        let mut acc = CMatrix::zeros(dim, dim);
        for (w, row) in self.coefficients.iter().enumerate() {
            if row[beta] != ZERO {
                acc += block_weyl(self.d, self.n, w) * row[beta];
            }
        }
        acc
    }

    pub fn reconstruct(&self) -> CVector {
        let dim = self.block_dim();
        let om = omega(dim);
        let mut psi = CVector::zeros(dim * dim * self.d_e);
        for beta in 0..self.d_e {
            let ab = tensor(&identity(dim), &self.u_hat(beta)) * &om;
            psi += tensor_vec(&ab, &crate::qmath::basis_vector(self.d_e, beta));
        }
        psi
    }

    pub fn total_weight(&self) -> f64 {
        self.coefficients
            .iter()
            .flat_map(|row| row.iter())
            .map(|z| z.norm_sqr())
            .sum()
    }
}

pub fn decompose_source(psi: &CVector, d: usize, n: usize, d_e: usize) -> Result<SourceDecomposition> {
    let dim = d.pow(n as u32);
    if psi.len() != dim * dim * d_e {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} for d = {d}, n = {n}, d_E = {d_e}",
            psi.len()
        )));
    }
    let inv = 1.0 / (dim as f64).sqrt();
    let coefficients = (0..dim * dim)
        .map(|w| {
            let u = block_weyl(d, n, w);
            (0..d_e)
                .map(|beta| {
                    // ((1 ⊗ U)Ω)[a, b] = U[b, a] / √D
                    let mut acc = ZERO;
                    for a in 0..dim {
                        for b in 0..dim {
                            let entry = u[(b, a)];
                            if entry != ZERO {
                                acc += entry.conj() * inv * psi[(a * dim + b) * d_e + beta];
                            }
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(SourceDecomposition {
        d,
        n,
        d_e,
        coefficients,
    })
}

fn check_outcome(am: &AttackModel, bs: &BasisSet, bases: &[usize], outcomes: &[usize]) -> Result<()> {
    if bs.dim() != am.d {
        return Err(Error::DimensionMismatch(format!(
            "basis set dimension {} vs attack dimension {}",
            bs.dim(),
            am.d
        )));
    }
    if bases.len() != am.n || outcomes.len() != am.n {
        return Err(Error::DimensionMismatch(format!(
            "need {} bases and outcomes, got {} and {}",
            am.n,
            bases.len(),
            outcomes.len()
        )));
    }
    for (&b, &i) in bases.iter().zip(outcomes) {
        bs.vector(b, i)?;
    }
    Ok(())
}

/// `⊗_l Φ_{b_l}(i_l)` on Bob's block.
pub fn bob_eigenstate(bs: &BasisSet, bases: &[usize], outcomes: &[usize]) -> Result<CVector> {
    let factors = bases
        .iter()
        .zip(outcomes)
        .map(|(&b, &i)| bs.vector(b, i).cloned())
        .collect::<Result<Vec<_>>>()?;
    Ok(tensor_vecs(factors.iter()))
}

/// `(1 ⊗ |Φ⟩⟨Φ|) Ω_D` on the grouped `A ⊗ B` block.
pub fn phi_hat_block(bs: &BasisSet, bases: &[usize], outcomes: &[usize]) -> Result<CVector> {
    let phi = bob_eigenstate(bs, bases, outcomes)?;
    let dim = phi.len();
    Ok(tensor(&identity(dim), &outer(&phi)) * omega(dim))
}

/// Bob's projection applied directly to `Ψ`. Returns the normalized
/// post-measurement state (Bob's factor is the eigenstate he sends back)
/// and the outcome probability.
pub fn bob_projected_state(
    am: &AttackModel,
    bs: &BasisSet,
    bases: &[usize],
    outcomes: &[usize],
) -> Result<(CVector, f64)> {
    check_outcome(am, bs, bases, outcomes)?;
    let proj = outer(&bob_eigenstate(bs, bases, outcomes)?);
    let dim = am.block_dim();
    let d_e = am.d_e;
    // Apply 1_A ⊗ P ⊗ 1_E by contracting the B index.
    let mut out = CVector::zeros(am.psi_abe.len());
    for a in 0..dim {
        for b in 0..dim {
            for e in 0..d_e {
                let mut acc = ZERO;
                for b2 in 0..dim {
                    acc += proj[(b, b2)] * am.psi_abe[(a * dim + b2) * d_e + e];
                }
                out[(a * dim + b) * d_e + e] = acc;
            }
        }
    }
    normalize_outcome(out)
}

/// Same state through `Σ_β (Û_βᵀ ⊗ 1 ⊗ 1) Φ̂ ⊗ e_β`.
pub fn bob_projected_state_weyl_form(
    am: &AttackModel,
    bs: &BasisSet,
    bases: &[usize],
    outcomes: &[usize],
) -> Result<(CVector, f64)> {
    check_outcome(am, bs, bases, outcomes)?;
    let dec = decompose_source(&am.psi_abe, am.d, am.n, am.d_e)?;
    let ph = phi_hat_block(bs, bases, outcomes)?;
    let dim = am.block_dim();
    let mut out = CVector::zeros(am.psi_abe.len());
    for beta in 0..am.d_e {
        let ab = tensor(&dec.u_hat(beta).transpose(), &identity(dim)) * &ph;
        out += tensor_vec(&ab, &crate::qmath::basis_vector(am.d_e, beta));
    }
    normalize_outcome(out)
}

fn normalize_outcome(v: CVector) -> Result<(CVector, f64)> {
    let prob = v.norm_squared();
    if prob <= ZERO_PROB {
        return Err(Error::ZeroProbability);
    }
    Ok((v / c(prob.sqrt(), 0.0), prob))
}

/// Probabilities of Bob's block outcomes `i⃗` (index order) for bases `b⃗`.
pub fn bob_outcome_probabilities(am: &AttackModel, bs: &BasisSet, bases: &[usize]) -> Result<Vec<f64>> {
    let dim = am.block_dim();
    (0..dim)
        .map(|idx| {
            let outcomes = block_digits(idx, am.d, am.n);
            match bob_projected_state(am, bs, bases, &outcomes) {
                Ok((_, p)) => Ok(p),
                Err(Error::ZeroProbability) => Ok(0.0),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Unnormalized branches `(1_A ⊗ V_l)|s⟩`.
fn feedback_branches(am: &AttackModel, state: &CVector) -> Result<Vec<CVector>> {
    let dim = am.block_dim();
    let be = dim * am.d_e;
    if state.len() != dim * be {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} for A ⊗ B ⊗ E of dimension {}",
            state.len(),
            dim * be
        )));
    }
    // Rows of S are indexed by A, columns by B ⊗ E; (1 ⊗ V) s ↔ S Vᵀ.
    let s = CMatrix::from_fn(dim, be, |a, j| state[a * be + j]);
    Ok(am
        .kraus
        .iter()
        .map(|v| {
            let out = &s * v.transpose();
            CVector::from_fn(dim * be, |idx, _| out[(idx / be, idx % be)])
        })
        .collect())
}

/// `Σ_l (1_A ⊗ V_l) |s⟩⟨s| (1_A ⊗ V_l)†` on `A ⊗ B ⊗ E`.
pub fn apply_feedback(am: &AttackModel, state: &CVector) -> Result<CMatrix> {
    let n = state.len();
    let mut rho = CMatrix::zeros(n, n);
    for branch in feedback_branches(am, state)? {
        rho += outer(&branch);
    }
    Ok(rho)
}

/// Alice's normalized state on `A ⊗ B` before her measurement, from the
/// channel applied to Bob's post-measurement state.
pub fn alice_state(am: &AttackModel, bs: &BasisSet, bases: &[usize], outcomes: &[usize]) -> Result<CMatrix> {
    let (state, _) = bob_projected_state(am, bs, bases, outcomes)?;
    let ab = am.block_dim() * am.block_dim();
    let mut rho = CMatrix::zeros(ab, ab);
    for branch in feedback_branches(am, &state)? {
        let m = CMatrix::from_fn(ab, am.d_e, |r, k| branch[r * am.d_e + k]);
        rho += &m * m.adjoint();
    }
    Ok(rho)
}

/// `E_{lk} = Σ_β Û_βᵀ ⊗ W_{lkβ}` with `W_{lkβ}[γ, ν] = V_l[(γ, k), (ν, β)]`;
/// indexed `[l][k]`.
pub fn build_e_operators(am: &AttackModel) -> Result<Vec<Vec<CMatrix>>> {
    let dec = decompose_source(&am.psi_abe, am.d, am.n, am.d_e)?;
    let dim = am.block_dim();
    let d_e = am.d_e;
    let u_t: Vec<CMatrix> = (0..d_e).map(|beta| dec.u_hat(beta).transpose()).collect();
    Ok(am
        .kraus
        .iter()
        .map(|v| {
            (0..d_e)
                .map(|k| {
                    let mut e = CMatrix::zeros(dim * dim, dim * dim);
                    for (beta, ut) in u_t.iter().enumerate() {
                        let w = CMatrix::from_fn(dim, dim, |g, nu| v[(g * d_e + k, nu * d_e + beta)]);
                        e += tensor(ut, &w);
                    }
                    e
                })
                .collect()
        })
        .collect())
}

/// `Σ_{lk} E_{lk} |Φ̂⟩⟨Φ̂| E_{lk}†`, normalized.
pub fn alice_state_from_e_operators(
    e_ops: &[Vec<CMatrix>],
    bs: &BasisSet,
    bases: &[usize],
    outcomes: &[usize],
) -> Result<CMatrix> {
    let ph = phi_hat_block(bs, bases, outcomes)?;
    let dim = ph.len();
    let mut rho = CMatrix::zeros(dim, dim);
    for row in e_ops {
        for e in row {
            rho += outer(&(e * &ph));
        }
    }
    let tr = rho.trace().re;
    if tr <= ZERO_PROB {
        return Err(Error::ZeroProbability);
    }
    Ok(rho / c(tr, 0.0))
}

/// Largest `‖E − (tr E / D²) 1‖_max` over the operators: zero exactly for scalar-form attacks.
pub fn scalar_defect(e_ops: &[Vec<CMatrix>]) -> f64 {
    e_ops
        .iter()
        .flatten()
        .map(|e| {
            let n = e.nrows();
            let scalar = e.trace() / c(n as f64, 0.0);
            max_abs(&(e - identity(n) * scalar))
        })
        .fold(0.0, f64::max)
}

/// Safe product vectors reordered to the grouped `A ⊗ B` layout the attack uses.
#[derive(Debug, Clone)]
pub struct GroupedProductStrategy {
    product: ProductStrategy,
    vectors: Vec<CVector>,
    weights: Vec<f64>,
}

impl GroupedProductStrategy {
    pub fn new(strategy: &Strategy, n: usize) -> Result<Self> {
        let product = tensor_strategy(strategy, n)?;
        let count = product.num_outcomes();
        if count > MAX_ENUMERATED_OUTCOMES {
            return Err(Error::ResourceGuard(format!(
                "{count} product outcomes exceed {MAX_ENUMERATED_OUTCOMES}"
            )));
        }
        let d = strategy.dim();
        let dims = CompositeDims::new(vec![d; 2 * n])?;
        // (A₁B₁)(A₂B₂)… → A₁…A_n B₁…B_n
        let perm: Vec<usize> = (0..n).map(|l| 2 * l).chain((0..n).map(|l| 2 * l + 1)).collect();
        let mut vectors = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for idx in 0..count {
            let xs = product.outcome_tuple(idx);
            vectors.push(permute_factors(&product.vector(&xs), &dims, &perm)?);
            weights.push(product.weight(&xs));
        }
        Ok(Self {
            product,
            vectors,
            weights,
        })
    }

    pub fn product(&self) -> &ProductStrategy {
        &self.product
    }

    pub fn num_outcomes(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector(&self, idx: usize) -> &CVector {
        &self.vectors[idx]
    }

    /// `p(x⃗) ⟨η_x⃗|ρ|η_x⃗⟩` for every product outcome.
    pub fn outcome_distribution(&self, rho: &CMatrix) -> Vec<f64> {
        self.vectors
            .iter()
            .zip(&self.weights)
            .map(|(eta, &p)| p * eta.dotc(&(rho * eta)).re)
            .collect()
    }

    pub fn correct(&self, idx: usize, bases: &[usize], outcomes: &[usize]) -> bool {
        self.product
            .correct(&self.product.outcome_tuple(idx), bases, outcomes)
    }
}

fn check_strategy(strategy: &Strategy, am: &AttackModel) -> Result<()> {
    if strategy.dim() != am.d {
        return Err(Error::DimensionMismatch(format!(
            "strategy dimension {} vs attack dimension {}",
            strategy.dim(),
            am.d
        )));
    }
    Ok(())
}

/// `p(η_x⃗, b⃗, i⃗) = p(x⃗) ⟨η_x⃗|ρ^A_{b⃗,i⃗}|η_x⃗⟩` for the product outcome `xs`
/// (indices into the single-round strategy).
pub fn guess_probability(
    strategy: &Strategy,
    am: &AttackModel,
    xs: &[usize],
    bases: &[usize],
    outcomes: &[usize],
) -> Result<f64> {
    check_strategy(strategy, am)?;
    let product = tensor_strategy(strategy, am.n)?;
    if xs.len() != am.n || xs.iter().any(|&x| x >= strategy.num_outcomes()) {
        return Err(Error::IndexOutOfRange(format!("product outcome {xs:?}")));
    }
    let rho = alice_state(am, strategy.basis_set(), bases, outcomes)?;
    let d = am.d;
    let dims = CompositeDims::new(vec![d; 2 * am.n])?;
    let perm: Vec<usize> = (0..am.n).map(|l| 2 * l).chain((0..am.n).map(|l| 2 * l + 1)).collect();
    let eta = permute_factors(&product.vector(xs), &dims, &perm)?;
    Ok(product.weight(xs) * eta.dotc(&(&rho * &eta)).re)
}

/// Probability that Alice guesses every digit of the block correctly.
pub fn correct_guess_probability(
    strategy: &Strategy,
    am: &AttackModel,
    bases: &[usize],
    outcomes: &[usize],
) -> Result<f64> {
    check_strategy(strategy, am)?;
    let grouped = GroupedProductStrategy::new(strategy, am.n)?;
    let rho = alice_state(am, strategy.basis_set(), bases, outcomes)?;
    Ok(grouped
        .outcome_distribution(&rho)
        .iter()
        .enumerate()
        .filter(|(idx, _)| grouped.correct(*idx, bases, outcomes))
        .map(|(_, q)| q)
        .sum())
}

/// Block outcomes `(b⃗, i⃗)` in enumeration order.
pub fn block_outcomes(d: usize, k: usize, n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let nb = k.pow(n as u32);
    let ni = d.pow(n as u32);
    let mut out = Vec::with_capacity(nb * ni);
    for bi in 0..nb {
        let bases = block_digits(bi, k, n);
        for ii in 0..ni {
            out.push((bases.clone(), block_digits(ii, d, n)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    /// Bob's bases, 1-based.
    pub b: Vec<usize>,
    /// Bob's outcomes, 1-based.
    pub i: Vec<usize>,
    pub probability: f64,
    pub guess_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub parameter: f64,
    pub detection_probability: f64,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub detection_probability: f64,
    pub leakage: f64,
    pub per_outcome_guess_error: Vec<OutcomeRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<CurvePoint>>,
}

/// Exact per-outcome error table: `(b⃗, i⃗, Prob[i⃗ | b⃗], Prob[x⃗(b⃗) ≠ i⃗])`.
pub fn guess_error_table(strategy: &Strategy, am: &AttackModel) -> Result<Vec<OutcomeRow>> {
    check_strategy(strategy, am)?;
    let bs = strategy.basis_set();
    let grouped = GroupedProductStrategy::new(strategy, am.n)?;
    let mut rows = Vec::new();
    for (bases, outcomes) in block_outcomes(am.d, bs.len(), am.n) {
        let (prob, error) = match alice_state(am, bs, &bases, &outcomes) {
            Ok(rho) => {
                let (_, prob) = bob_projected_state(am, bs, &bases, &outcomes)?;
                let error: f64 = grouped
                    .outcome_distribution(&rho)
                    .iter()
                    .enumerate()
                    .filter(|(idx, _)| !grouped.correct(*idx, &bases, &outcomes))
                    .map(|(_, q)| q)
                    .sum();
                (prob, error.max(0.0))
            }
            Err(Error::ZeroProbability) => (0.0, 0.0),
            Err(e) => return Err(e),
        };
        rows.push(OutcomeRow {
            b: bases.iter().map(|b| b + 1).collect(),
            i: outcomes.iter().map(|i| i + 1).collect(),
            probability: prob,
            guess_error: error,
        });
    }
    Ok(rows)
}

/// Average over uniform `b⃗` and Born-rule `i⃗` of the block error probability.
pub fn detection_probability(strategy: &Strategy, am: &AttackModel) -> Result<f64> {
    let rows = guess_error_table(strategy, am)?;
    Ok(detection_from_table(&rows, strategy.basis_set().len(), am.n))
}

fn detection_from_table(rows: &[OutcomeRow], k: usize, n: usize) -> f64 {
    let nb = k.pow(n as u32) as f64;
    rows.iter().map(|r| r.probability * r.guess_error).sum::<f64>() / nb
}

/// Eve's state on `E ⊗ L` (ancilla, then Kraus label) after the return
/// transmission, conditioned on Bob's outcome.
pub fn eve_final_state(am: &AttackModel, bs: &BasisSet, bases: &[usize], outcomes: &[usize]) -> Result<CMatrix> {
    let (state, _) = bob_projected_state(am, bs, bases, outcomes)?;
    let ab = am.block_dim() * am.block_dim();
    let d_e = am.d_e;
    let labels = am.kraus.len();
    let mut rho = CMatrix::zeros(d_e * labels, d_e * labels);
    for (l, branch) in feedback_branches(am, &state)?.iter().enumerate() {
        let m = CMatrix::from_fn(ab, d_e, |r, k| branch[r * d_e + k]);
        let block = (m.adjoint() * &m).transpose();
        let label = outer(&crate::qmath::basis_vector(labels, l));
        rho += tensor(&block, &label);
    }
    Ok(rho)
}

/// Worst-case trace distance between Eve's conditional final states over
/// all pairs of possible outcomes.
pub fn leakage(am: &AttackModel, bs: &BasisSet) -> Result<f64> {
    let mut states = Vec::new();
    for (bases, outcomes) in block_outcomes(am.d, bs.len(), am.n) {
        match eve_final_state(am, bs, &bases, &outcomes) {
            Ok(rho) => states.push(rho),
            Err(Error::ZeroProbability) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut worst: f64 = 0.0;
    for (a, ra) in states.iter().enumerate() {
        for rb in &states[a + 1..] {
            worst = worst.max(trace_distance(ra, rb));
        }
    }
    Ok(worst)
}

pub fn evaluate(strategy: &Strategy, am: &AttackModel) -> Result<AttackReport> {
    let rows = guess_error_table(strategy, am)?;
    Ok(AttackReport {
        detection_probability: detection_from_table(&rows, strategy.basis_set().len(), am.n),
        leakage: leakage(am, strategy.basis_set())?,
        per_outcome_guess_error: rows,
        curve: None,
    })
}

/// Smallest eigenvalue over every conditional Alice state; PSD sanity check.
pub fn min_alice_eigenvalue(am: &AttackModel, bs: &BasisSet) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for (bases, outcomes) in block_outcomes(am.d, bs.len(), am.n) {
        match alice_state(am, bs, &bases, &outcomes) {
            Ok(rho) => worst = worst.min(min_eigenvalue(&rho)),
            Err(Error::ZeroProbability) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(worst)
}

/// Attacks addressable by name, e.g. `intercept-resend:b=1,p=0.5`.
/// Basis labels are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum CannedAttack {
    None,
    Identity,
    InterceptResend { basis: usize, strength: f64 },
    SourceReplace { eps: f64 },
    Probe { theta: f64 },
    Swap,
}

impl CannedAttack {
    /// Builds the model for one block of `n` instances; `None` means no attack.
    pub fn build(&self, bs: &BasisSet, n: usize) -> Result<Option<AttackModel>> {
        let d = bs.dim();
        Ok(match *self {
            CannedAttack::None => None,
            CannedAttack::Identity => Some(AttackModel::identity(d, n)?),
            CannedAttack::InterceptResend { basis, strength } => {
                if basis >= bs.len() {
                    return Err(Error::IndexOutOfRange(format!(
                        "intercept basis {} of {}",
                        basis + 1,
                        bs.len()
                    )));
                }
                Some(AttackModel::intercept_resend(bs, basis, strength, n)?)
            }
            CannedAttack::SourceReplace { eps } => Some(AttackModel::source_replace(d, n, eps)?),
            CannedAttack::Probe { theta } => Some(AttackModel::probe_entangle(d, n, theta)?),
            CannedAttack::Swap => Some(AttackModel::swap_out(d, n)?),
        })
    }

    /// Strength parameter scaled by `t ∈ [0, 1]`, for (detection, leakage) sweeps.
    pub fn scaled(&self, t: f64) -> Option<(f64, CannedAttack)> {
        match *self {
            CannedAttack::InterceptResend { basis, strength } => Some((
                t * strength,
                CannedAttack::InterceptResend {
                    basis,
                    strength: t * strength,
                },
            )),
            CannedAttack::SourceReplace { eps } => {
                Some((t * eps, CannedAttack::SourceReplace { eps: t * eps }))
            }
            CannedAttack::Probe { theta } => {
                Some((t * theta, CannedAttack::Probe { theta: t * theta }))
            }
            _ => None,
        }
    }
}

impl fmt::Display for CannedAttack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CannedAttack::None => write!(f, "none"),
            CannedAttack::Identity => write!(f, "identity"),
            CannedAttack::InterceptResend { basis, strength } => {
                write!(f, "intercept-resend:b={},p={strength}", basis + 1)
            }
            CannedAttack::SourceReplace { eps } => write!(f, "source-replace:eps={eps}"),
            CannedAttack::Probe { theta } => write!(f, "probe:theta={theta}"),
            CannedAttack::Swap => write!(f, "swap"),
        }
    }
}

impl FromStr for CannedAttack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = Vec::new();
        for item in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("attack parameter `{item}` needs key=value")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| -> Result<Option<f64>> {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| {
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("attack parameter {key}={v}")))
                })
                .transpose()
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match kv.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::InvalidInput(format!("unknown attack parameter `{k}` for {name}"))),
                None => Ok(()),
            }
        };
        match name {
            "none" => {
                allow(&[])?;
                Ok(CannedAttack::None)
            }
            "identity" => {
                allow(&[])?;
                Ok(CannedAttack::Identity)
            }
            "intercept-resend" => {
                allow(&["b", "p"])?;
                let b = get("b")?.unwrap_or(1.0);
                if b < 1.0 || b.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!("basis label b={b} must be a positive integer")));
                }
                Ok(CannedAttack::InterceptResend {
                    basis: b as usize - 1,
                    strength: get("p")?.unwrap_or(1.0),
                })
            }
            "source-replace" => {
                allow(&["eps"])?;
                Ok(CannedAttack::SourceReplace {
                    eps: get("eps")?.unwrap_or(0.3),
                })
            }
            "probe" => {
                allow(&["theta"])?;
                Ok(CannedAttack::Probe {
                    theta: get("theta")?.unwrap_or(PI / 4.0),
                })
            }
            "swap" => {
                allow(&[])?;
                Ok(CannedAttack::Swap)
            }
            other => Err(Error::InvalidInput(format!("unknown attack `{other}`"))),
        }
    }
}

/// Evaluates `attack` at `points` evenly spaced strengths from 0 to its own.
pub fn sweep(strategy: &Strategy, attack: &CannedAttack, n: usize, points: usize) -> Result<Vec<CurvePoint>> {
    if points < 2 {
        return Err(Error::InvalidInput("a sweep needs at least two points".into()));
    }
    let mut curve = Vec::with_capacity(points);
    for p in 0..points {
        let t = p as f64 / (points - 1) as f64;
        let Some((parameter, scaled)) = attack.scaled(t) else {
            return Err(Error::InvalidInput(format!("attack {attack} has no strength parameter")));
        };
        let am = scaled
            .build(strategy.basis_set(), n)?
            .expect("parametrized attacks are never `none`");
        curve.push(CurvePoint {
            parameter,
            detection_probability: detection_probability(strategy, &am)?,
            leakage: leakage(&am, strategy.basis_set())?,
        });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::gen_mub;
    use crate::qmath::{basis_vector, ONE};
    use crate::retrodiction::phi_hat;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn weyl_examples() {
        assert_eq!(weyl(2, 0, 0).unwrap().matrix, identity(2));
        let xz = weyl(2, 1, 1).unwrap().matrix;
        let expected = CMatrix::from_row_slice(2, 2, &[ZERO, -ONE, ONE, ZERO]);
        assert!(max_abs(&(xz - expected)) < 1e-15);
        assert!(weyl(3, 3, 0).is_err());
    }

    #[test]
    fn weyl_powers_and_unitarity() {
        for d in [2, 3, 5] {
            let x = weyl(d, 1, 0).unwrap().matrix;
            let z = weyl(d, 0, 1).unwrap().matrix;
            let mut xp = identity(d);
            let mut zp = identity(d);
            for _ in 0..d {
                xp = &xp * &x;
                zp = &zp * &z;
            }
            assert!(max_abs(&(xp - identity(d))) < 1e-12);
            assert!(max_abs(&(zp - identity(d))) < 1e-12);
            for m in 0..d {
                for l in 0..d {
                    let u = weyl(d, m, l).unwrap().matrix;
                    assert!(max_abs(&(u.adjoint() * &u - identity(d))) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn weyl_generates_bell_basis() {
        for d in [2, 3] {
            let om = omega(d);
            let states: Vec<CVector> = (0..d * d)
                .map(|w| tensor(&identity(d), &block_weyl(d, 1, w)) * &om)
                .collect();
            for (a, sa) in states.iter().enumerate() {
                for (b, sb) in states.iter().enumerate() {
                    let target = if a == b { ONE } else { ZERO };
                    assert!((sa.dotc(sb) - target).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn decompose_ideal_and_shifted_sources() {
        let d = 2;
        let ideal = tensor_vec(&omega(d), &basis_vector(1, 0));
        let dec = decompose_source(&ideal, d, 1, 1).unwrap();
        assert!((dec.coefficients[0][0] - ONE).norm() < 1e-14);
        assert!((dec.total_weight() - 1.0).abs() < 1e-14);

        // w = (m, l) = (1, 1) is index 3.
        let shifted = tensor(&identity(d), &weyl(d, 1, 1).unwrap().matrix) * omega(d);
        let psi = tensor_vec(&shifted, &basis_vector(2, 0));
        let dec = decompose_source(&psi, d, 1, 2).unwrap();
        for (w, row) in dec.coefficients.iter().enumerate() {
            for (beta, z) in row.iter().enumerate() {
                let target = if (w, beta) == (3, 0) { 1.0 } else { 0.0 };
                assert!((z.norm() - target).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn decompose_random_source_reconstructs() {
        let mut r = rng(5);
        for (d, n, d_e) in [(2, 1, 3), (3, 1, 2), (2, 2, 2)] {
            let am = AttackModel::random(&mut r, d, n, d_e, 2).unwrap();
            let dec = decompose_source(am.psi_abe(), d, n, d_e).unwrap();
            assert!((dec.reconstruct() - am.psi_abe()).norm() < 1e-10);
            assert!((dec.total_weight() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ideal_source_reproduces_conditional_states() {
        let bs = gen_mub(2).unwrap();
        let am = AttackModel::identity(2, 1).unwrap();
        for b in 0..3 {
            let mut total = 0.0;
            for i in 0..2 {
                let (state, prob) = bob_projected_state(&am, &bs, &[b], &[i]).unwrap();
                assert!((prob - 0.5).abs() < 1e-14);
                total += prob;
                let expected = phi_hat(&bs, b, i).unwrap() * c(2f64.sqrt(), 0.0);
                assert!((state - expected).norm() < 1e-14);

                let rho = alice_state(&am, &bs, &[b], &[i]).unwrap();
                let ph = phi_hat(&bs, b, i).unwrap();
                assert!(max_abs(&(rho - outer(&ph) * c(2.0, 0.0))) < 1e-14);
            }
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_routes_agree_on_random_sources() {
        let mut r = rng(9);
        for (d, n, d_e) in [(2, 1, 2), (3, 1, 2), (2, 2, 1)] {
            let bs = gen_mub(d).unwrap();
            let am = AttackModel::random(&mut r, d, n, d_e, 1).unwrap();
            for (bases, outcomes) in block_outcomes(d, d + 1, n) {
                let (s1, p1) = bob_projected_state(&am, &bs, &bases, &outcomes).unwrap();
                let (s2, p2) = bob_projected_state_weyl_form(&am, &bs, &bases, &outcomes).unwrap();
                assert!((p1 - p2).abs() < 1e-10);
                assert!((s1 - s2).norm() < 1e-10);
            }
            for b in 0..=d {
                let probs = bob_outcome_probabilities(&am, &bs, &vec![b; n]).unwrap();
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feedback_preserves_trace_and_identity_is_trivial() {
        let mut r = rng(21);
        let am = AttackModel::random(&mut r, 2, 1, 2, 3).unwrap();
        for _ in 0..10 {
            let s = random_unit_vector(&mut r, 8);
            let rho = apply_feedback(&am, &s).unwrap();
            assert!((rho.trace() - ONE).norm() < 1e-12);
        }
        let id = AttackModel::identity(2, 1).unwrap();
        let s = random_unit_vector(&mut r, 4);
        assert!(max_abs(&(apply_feedback(&id, &s).unwrap() - outer(&s))) < 1e-15);
    }

    #[test]
    fn depolarizing_return_channel_randomizes_bob() {
        // Kraus {U_w / d}: fully depolarizing on B.
        let d = 2;
        let kraus: Vec<CMatrix> = (0..d * d).map(|w| block_weyl(d, 1, w) * c(0.5, 0.0)).collect();
        let am = AttackModel::new(d, 1, 1, omega(d), kraus).unwrap();
        let mut r = rng(4);
        let s = random_unit_vector(&mut r, 4);
        let rho = apply_feedback(&am, &s).unwrap();
        let dims = CompositeDims::new(vec![2, 2]).unwrap();
        let b = crate::qmath::partial_trace(&rho, &dims, &[1]).unwrap();
        assert!(max_abs(&(b - identity(2) * c(0.5, 0.0))) < 1e-12);
    }

    #[test]
    fn kraus_completeness_is_enforced() {
        let bad = vec![identity(2) * c(0.9, 0.0)];
        assert!(matches!(
            AttackModel::new(2, 1, 1, omega(2), bad),
            Err(Error::InvalidAttack(_))
        ));
        let unnormalized = omega(2) * c(2.0, 0.0);
        assert!(AttackModel::new(2, 1, 1, unnormalized, vec![identity(2)]).is_err());
        assert!(matches!(
            AttackModel::identity(2, 7),
            Err(Error::ResourceGuard(_))
        ));
    }

    #[test]
    fn e_operators_of_trivial_and_scalar_attacks() {
        let e = build_e_operators(&AttackModel::identity(2, 1).unwrap()).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].len(), 1);
        assert!(max_abs(&(&e[0][0] - identity(4))) < 1e-14);

        let mut r = rng(17);
        let am = AttackModel::random_scalar_form(&mut r, 2, 1, 3, 2).unwrap();
        assert!(scalar_defect(&build_e_operators(&am).unwrap()) < 1e-9);
    }

    #[test]
    fn e_operator_form_matches_channel() {
        let mut r = rng(33);
        let bs = gen_mub(2).unwrap();
        for _ in 0..5 {
            let am = AttackModel::random(&mut r, 2, 1, 2, 2).unwrap();
            let e = build_e_operators(&am).unwrap();
            for (bases, outcomes) in block_outcomes(2, 3, 1) {
                let direct = alice_state(&am, &bs, &bases, &outcomes).unwrap();
                let via_e = alice_state_from_e_operators(&e, &bs, &bases, &outcomes).unwrap();
                assert!(max_abs(&(direct - via_e)) < 1e-9);
            }
        }
    }

    #[test]
    fn eve_states_without_attack_and_with_intercept() {
        let bs = gen_mub(2).unwrap();
        let id = AttackModel::identity(2, 1).unwrap();
        for (bases, outcomes) in block_outcomes(2, 3, 1) {
            let rho = eve_final_state(&id, &bs, &bases, &outcomes).unwrap();
            assert!(max_abs(&(rho - outer(&basis_vector(1, 0)))) < 1e-14);
        }
        assert!(leakage(&id, &bs).unwrap() < 1e-14);

        let ir = AttackModel::intercept_resend(&bs, 0, 1.0, 1).unwrap();
        let r0 = eve_final_state(&ir, &bs, &[0], &[0]).unwrap();
        let r1 = eve_final_state(&ir, &bs, &[0], &[1]).unwrap();
        assert!(trace_distance(&r0, &r1) > 0.1);
    }

    #[test]
    fn canned_attack_parsing() {
        assert_eq!("none".parse::<CannedAttack>().unwrap(), CannedAttack::None);
        assert_eq!(
            "intercept-resend:b=2".parse::<CannedAttack>().unwrap(),
            CannedAttack::InterceptResend { basis: 1, strength: 1.0 }
        );
        assert_eq!(
            "probe:theta=0.5".parse::<CannedAttack>().unwrap(),
            CannedAttack::Probe { theta: 0.5 }
        );
        assert!("intercept-resend:b=0".parse::<CannedAttack>().is_err());
        assert!("probe:eps=1".parse::<CannedAttack>().is_err());
        assert!("teleport".parse::<CannedAttack>().is_err());
        let a = CannedAttack::InterceptResend { basis: 2, strength: 0.5 };
        assert_eq!(a.to_string().parse::<CannedAttack>().unwrap(), a);
    }

    #[test]
    fn attack_file_roundtrip() {
        let bs = gen_mub(2).unwrap();
        let am = AttackModel::intercept_resend(&bs, 1, 0.5, 1).unwrap();
        let text = serde_json::to_string(&AttackFile::from(&am)).unwrap();
        assert!(text.contains("\"d_E\""));
        let back = AttackModel::try_from(serde_json::from_str::<AttackFile>(&text).unwrap()).unwrap();
        assert_eq!(back, am);
    }

    fn mub_strategy(d: usize) -> Strategy {
        Strategy::build(&gen_mub(d).unwrap()).unwrap()
    }

    #[test]
    fn no_attack_is_undetected_and_silent() {
        for (d, n) in [(2, 1), (3, 1), (2, 2)] {
            let s = mub_strategy(d);
            let am = AttackModel::identity(d, n).unwrap();
            assert!(detection_probability(&s, &am).unwrap().abs() < 1e-12);
            assert!(leakage(&am, s.basis_set()).unwrap() < 1e-12);
        }
    }

    #[test]
    fn guess_probability_without_attack_is_the_delta() {
        let s = mub_strategy(2);
        let am = AttackModel::identity(2, 1).unwrap();
        for (bases, outcomes) in block_outcomes(2, 3, 1) {
            let mut right = 0.0;
            let mut wrong = 0.0;
            for x in 0..s.num_outcomes() {
                let p = guess_probability(&s, &am, &[x], &bases, &outcomes).unwrap();
                if s.guess(x, bases[0]) == outcomes[0] {
                    right += p;
                } else {
                    wrong += p.abs();
                }
            }
            assert!((right - 1.0).abs() < 1e-12);
            assert!(wrong < 1e-12);
            assert!((correct_guess_probability(&s, &am, &bases, &outcomes).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_form_attacks_are_invisible_and_learn_nothing() {
        let mut r = rng(101);
        let s = mub_strategy(2);
        for d_e in [1, 2, 3] {
            let am = AttackModel::random_scalar_form(&mut r, 2, 1, d_e, 2).unwrap();
            assert!(detection_probability(&s, &am).unwrap() < 1e-10);
            assert!(leakage(&am, s.basis_set()).unwrap() < 1e-8);
        }
    }

    #[test]
    fn scalar_projection_of_random_attacks() {
        let mut r = rng(102);
        let s = mub_strategy(2);
        for _ in 0..5 {
            let am = AttackModel::random(&mut r, 2, 1, 2, 2).unwrap();
            let proj = scalar_projection(&am).unwrap();
            assert!(scalar_defect(&build_e_operators(&proj).unwrap()) < 1e-9);
            assert!(detection_probability(&s, &proj).unwrap() < 1e-10);
            assert!(leakage(&proj, s.basis_set()).unwrap() < 1e-8);
            // The unprojected attack is generically visible.
            assert!(detection_probability(&s, &am).unwrap() > 1e-4);
        }
    }

    #[test]
    fn detectable_attacks_leak_and_are_detected() {
        let s = mub_strategy(2);
        let bs = s.basis_set();
        for am in [
            AttackModel::intercept_resend(bs, 0, 1.0, 1).unwrap(),
            AttackModel::probe_entangle(2, 1, PI / 4.0).unwrap(),
        ] {
            let det = detection_probability(&s, &am).unwrap();
            let leak = leakage(&am, bs).unwrap();
            assert!(det > 0.01, "detection {det}");
            assert!(leak > 0.01, "leakage {leak}");
            assert!(min_alice_eigenvalue(&am, bs).unwrap() > -1e-10);
        }
    }

    #[test]
    fn swapped_out_source_is_detected_without_leaking() {
        // Bob measures a fresh |0⟩ that Eve knows but is uncorrelated with her ancilla.
        let s = mub_strategy(2);
        let am = AttackModel::swap_out(2, 1).unwrap();
        assert!(detection_probability(&s, &am).unwrap() > 0.1);
        assert!(leakage(&am, s.basis_set()).unwrap() < 1e-12);
    }

    #[test]
    fn source_replacement_is_detected() {
        let s = mub_strategy(3);
        let am = AttackModel::source_replace(3, 1, 0.3).unwrap();
        assert!(detection_probability(&s, &am).unwrap() > 0.01);
    }

    #[test]
    fn independent_instances_compound() {
        // Intercepting both instances of a block independently: a block is
        // correct only if both instances are.
        let s = mub_strategy(2);
        let bs = s.basis_set();
        let q = detection_probability(&s, &AttackModel::intercept_resend(bs, 1, 1.0, 1).unwrap()).unwrap();
        let q2 = detection_probability(&s, &AttackModel::intercept_resend(bs, 1, 1.0, 2).unwrap()).unwrap();
        assert!((q2 - (1.0 - (1.0 - q) * (1.0 - q))).abs() < 1e-10);
    }

    #[test]
    fn partial_intercept_interpolates() {
        let s = mub_strategy(2);
        let bs = s.basis_set();
        let full = detection_probability(&s, &AttackModel::intercept_resend(bs, 0, 1.0, 1).unwrap()).unwrap();
        let half = detection_probability(&s, &AttackModel::intercept_resend(bs, 0, 0.5, 1).unwrap()).unwrap();
        assert!((half - 0.5 * full).abs() < 1e-12);
    }

    #[test]
    fn sweep_starts_clean() {
        let s = mub_strategy(2);
        let curve = sweep(&s, &CannedAttack::Probe { theta: PI / 2.0 }, 1, 5).unwrap();
        assert_eq!(curve.len(), 5);
        assert!(curve[0].detection_probability < 1e-12 && curve[0].leakage < 1e-12);
        for w in curve.windows(2) {
            assert!(w[1].detection_probability >= w[0].detection_probability - 1e-12);
        }
        assert!(sweep(&s, &CannedAttack::Swap, 1, 3).is_err());
    }
}
