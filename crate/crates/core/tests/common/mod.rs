//! Brute-force oracles that avoid the attack module's code paths.
#![allow(dead_code)]

use meanking::bases::BasisSet;
use meanking::qmath::{c, trace_distance, CMatrix, CVector};
use meanking::retrodiction::Strategy;

/// Alice's normalized state after Eve measures the returning qudit in
/// basis `b_star` and resends: `Σ_j w_j |φ̄⟩⟨φ̄| ⊗ |χ_j⟩⟨χ_j|` with
/// `w_j = |⟨χ_j|φ⟩|²`, `φ = Φ_b(i)`, `χ_j = Φ_{b★}(j)`.
pub fn intercept_alice_state(bs: &BasisSet, b_star: usize, b: usize, i: usize) -> CMatrix {
    let d = bs.dim();
    let phi = bs.vector(b, i).unwrap();
    let mut rho = CMatrix::zeros(d * d, d * d);
    for j in 0..d {
        let chi = bs.vector(b_star, j).unwrap();
        let w = chi.dotc(phi).norm_sqr();
        for a in 0..d {
            for g in 0..d {
                for a2 in 0..d {
                    for g2 in 0..d {
                        rho[(a * d + g, a2 * d + g2)] +=
                            phi[a].conj() * chi[g] * phi[a2] * chi[g2].conj() * w;
                    }
                }
            }
        }
    }
    rho
}

/// Eve's label distribution for intercept-resend at outcome `(b, i)`.
pub fn intercept_eve_weights(bs: &BasisSet, b_star: usize, b: usize, i: usize) -> Vec<f64> {
    let phi = bs.vector(b, i).unwrap();
    (0..bs.dim())
        .map(|j| bs.vector(b_star, j).unwrap().dotc(phi).norm_sqr())
        .collect()
}

pub fn intercept_leakage(bs: &BasisSet, b_star: usize) -> f64 {
    let d = bs.dim();
    let mut all = Vec::new();
    for b in 0..bs.len() {
        for i in 0..d {
            all.push(intercept_eve_weights(bs, b_star, b, i));
        }
    }
    let mut worst: f64 = 0.0;
    for (n, p) in all.iter().enumerate() {
        for q in &all[n + 1..] {
            let tv: f64 = p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
            worst = worst.max(tv);
        }
    }
    worst
}

/// Projected tripartite state of the probe attack as `out[a][g][e]`, by
/// explicit loops over `Ψ = d^{-1/2} Σ_j |j⟩|j⟩|e(j)⟩`.
pub fn probe_projected(d: usize, theta: f64, bs: &BasisSet, b: usize, i: usize) -> (Vec<Vec<[num_complex::Complex64; 2]>>, f64) {
    let inv = 1.0 / (d as f64).sqrt();
    let e_of = |j: usize| if j == 0 { [1.0, 0.0] } else { [theta.cos(), theta.sin()] };
    let phi = bs.vector(b, i).unwrap();
    let zero = c(0.0, 0.0);
    let mut out = vec![vec![[zero; 2]; d]; d];
    for (a, row) in out.iter_mut().enumerate() {
        for (g, cell) in row.iter_mut().enumerate() {
            for (e, slot) in cell.iter_mut().enumerate() {
                // Σ_j P[g, j] ψ[a, j, e], only j = a contributes.
                let p_ga = phi[g] * phi[a].conj();
                *slot = p_ga * c(inv * e_of(a)[e], 0.0);
            }
        }
    }
    let prob = out
        .iter()
        .flatten()
        .flat_map(|cell| cell.iter())
        .map(|z| z.norm_sqr())
        .sum();
    (out, prob)
}

pub fn probe_alice_state(d: usize, theta: f64, bs: &BasisSet, b: usize, i: usize) -> (CMatrix, f64) {
    let (out, prob) = probe_projected(d, theta, bs, b, i);
    let mut rho = CMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for g in 0..d {
            for a2 in 0..d {
                for g2 in 0..d {
                    for (x, y) in out[a][g].iter().zip(&out[a2][g2]) {
                        rho[(a * d + g, a2 * d + g2)] += x * y.conj();
                    }
                }
            }
        }
    }
    (rho / c(prob, 0.0), prob)
}

pub fn probe_eve_state(d: usize, theta: f64, bs: &BasisSet, b: usize, i: usize) -> CMatrix {
    let (out, prob) = probe_projected(d, theta, bs, b, i);
    let mut rho = CMatrix::zeros(2, 2);
    for e in 0..2 {
        for e2 in 0..2 {
            for row in &out {
                for cell in row {
                    rho[(e, e2)] += cell[e] * cell[e2].conj();
                }
            }
        }
    }
    rho / c(prob, 0.0)
}

pub fn probe_leakage(d: usize, theta: f64, bs: &BasisSet) -> f64 {
    let mut states = Vec::new();
    for b in 0..bs.len() {
        for i in 0..d {
            states.push(probe_eve_state(d, theta, bs, b, i));
        }
    }
    let mut worst: f64 = 0.0;
    for (n, r) in states.iter().enumerate() {
        for s in &states[n + 1..] {
            worst = worst.max(trace_distance(r, s));
        }
    }
    worst
}

/// `Σ_x p(x) ⟨η_x|ρ|η_x⟩ [x(b) ≠ i]` by direct summation.
pub fn guess_error(strategy: &Strategy, rho: &CMatrix, b: usize, i: usize) -> f64 {
    strategy
        .safe_vectors()
        .iter()
        .zip(strategy.weights())
        .filter(|(sv, _)| sv.x.guess(b) != i)
        .map(|(sv, &p)| {
            let eta: &CVector = &sv.eta;
            let mut acc = c(0.0, 0.0);
            for r in 0..eta.len() {
                for s in 0..eta.len() {
                    acc += eta[r].conj() * rho[(r, s)] * eta[s];
                }
            }
            p * acc.re
        })
        .sum()
}

/// Average of `prob(i | b) · error(b, i)` over uniform `b`.
pub fn detection_oracle<F>(strategy: &Strategy, mut state: F) -> f64
where
    F: FnMut(usize, usize) -> (CMatrix, f64),
{
    let bs = strategy.basis_set();
    let mut total = 0.0;
    for b in 0..bs.len() {
        for i in 0..bs.dim() {
            let (rho, prob) = state(b, i);
            total += prob * guess_error(strategy, &rho, b, i);
        }
    }
    total / bs.len() as f64
}

pub fn intercept_detection_oracle(strategy: &Strategy, b_star: usize) -> f64 {
    let bs = strategy.basis_set().clone();
    let d = bs.dim() as f64;
    detection_oracle(strategy, |b, i| (intercept_alice_state(&bs, b_star, b, i), 1.0 / d))
}

pub fn probe_detection_oracle(strategy: &Strategy, theta: f64) -> f64 {
    let bs = strategy.basis_set().clone();
    let d = bs.dim();
    detection_oracle(strategy, |b, i| probe_alice_state(d, theta, &bs, b, i))
}
