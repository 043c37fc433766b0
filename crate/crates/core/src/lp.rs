//! Small dense linear programs in equality + lower-bound form.
//!
//! Problems here have at most a few hundred variables, so a two-phase
//! tableau simplex with Bland's pivoting rule is plenty. Equality rows are
//! first compressed onto an orthonormal basis of their row space, which
//! removes redundant constraints and detects inconsistent right-hand sides
//! before any pivoting happens.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-11;
const ROW_RCOND: f64 = 1e-11;
/// Constraint satisfaction promised to callers.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Any feasible point.
    Feasibility,
    /// Maximize `min_{j in subset} p_j`. All variables in the subset must
    /// share the same lower bound.
    MaximizeMin(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    /// Objective unbounded; a feasible point is still returned.
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub point: Option<DVector<f64>>,
    /// For `MaximizeMin`, the attained minimum over the subset.
    pub objective: Option<f64>,
}

impl LpSolution {
    pub fn is_feasible(&self) -> bool {
        self.point.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lower_bounds: DVector<f64>,
    pub objective: Objective,
}

/// Feasibility of `A_eq p = b_eq, p >= lower_bounds`.
pub fn lp_feasible(
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    lower_bounds: &DVector<f64>,
) -> Result<(bool, Option<DVector<f64>>)> {
    let sol = LinearProgram {
        a_eq: a_eq.clone(),
        b_eq: b_eq.clone(),
        lower_bounds: lower_bounds.clone(),
        objective: Objective::Feasibility,
    }
    .solve()?;
    Ok((sol.is_feasible(), sol.point))
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution> {
        let (m, n) = self.a_eq.shape();
        if self.b_eq.len() != m || self.lower_bounds.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "A_eq is {m}x{n}, b_eq has {}, lower_bounds has {}",
                self.b_eq.len(),
                self.lower_bounds.len()
            )));
        }

        // Shift to y >= 0 and, for MaximizeMin, split the subset variables
        // into a common floor t >= 0 plus individual slacks.
        let subset = match &self.objective {
            Objective::Feasibility => Vec::new(),
            Objective::MaximizeMin(s) => {
                if s.is_empty() || s.iter().any(|&j| j >= n) {
                    return Err(Error::InvalidInput("bad MaximizeMin subset".into()));
                }
                let floor = self.lower_bounds[s[0]];
                if s.iter().any(|&j| self.lower_bounds[j] != floor) {
                    return Err(Error::InvalidInput(
                        "MaximizeMin subset must share one lower bound".into(),
                    ));
                }
                s.clone()
            }
        };
        let has_floor = !subset.is_empty();
        let cols = n + usize::from(has_floor);
        let mut a = DMatrix::<f64>::zeros(m, cols);
        a.view_mut((0, 0), (m, n)).copy_from(&self.a_eq);
        if has_floor {
            for &j in &subset {
                for i in 0..m {
                    a[(i, n)] += self.a_eq[(i, j)];
                }
            }
        }
        let b = &self.b_eq - &self.a_eq * &self.lower_bounds;
        let mut cost = DVector::<f64>::zeros(cols);
        if has_floor {
            cost[n] = -1.0;
        }

        let Some((a_red, b_red)) = compress_rows(&a, &b) else {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                point: None,
                objective: None,
            });
        };

        let (status, y) = match simplex(&a_red, &b_red, &cost) {
            SimplexOutcome::Infeasible => {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    point: None,
                    objective: None,
                })
            }
            SimplexOutcome::Optimal(y) => (LpStatus::Optimal, y),
            SimplexOutcome::Unbounded(y) => (LpStatus::Unbounded, y),
        };

        let mut p = &self.lower_bounds + y.rows(0, n);
        let mut objective = None;
        if has_floor {
            let t = y[n];
            for &j in &subset {
                p[j] += t;
            }
            objective = Some(subset.iter().map(|&j| p[j]).fold(f64::INFINITY, f64::min));
        }
        Ok(LpSolution {
            status,
            point: Some(p),
            objective,
        })
    }
}

/// Projects `A y = b` onto the row space of `A`. Returns `None` when `b`
/// has a component outside it (no solution at all, sign constraints aside).
fn compress_rows(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let (m, n) = a.shape();
    if m == 0 {
        return Some((DMatrix::zeros(0, n), DVector::zeros(0)));
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| sigma_max > 0.0 && svd.singular_values[k] > ROW_RCOND * sigma_max)
        .collect();
    let ur = DMatrix::from_fn(m, keep.len(), |i, k| u[(i, keep[k])]);
    let b_proj = &ur * (ur.transpose() * b);
    let scale = b.amax().max(1.0);
    if (b - &b_proj).amax() > FEAS_TOL * scale {
        return None;
    }
    // Rows of U_rᵀ A are orthogonal; normalize them to unit scale.
    let mut a_red = ur.transpose() * a;
    let mut b_red = ur.transpose() * b;
    for (r, &k) in keep.iter().enumerate() {
        let s = svd.singular_values[k];
        a_red.row_mut(r).scale_mut(1.0 / s);
        b_red[r] /= s;
    }
    Some((a_red, b_red))
}

enum SimplexOutcome {
    Optimal(DVector<f64>),
    Unbounded(DVector<f64>),
    Infeasible,
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..w {
            self.data[pr * w + c] *= inv;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f == 0.0 {
                continue;
            }
            for (c, pv) in pivot_row.iter().enumerate() {
                self.data[r * w + c] -= f * pv;
            }
            self.data[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Bland's rule on the objective row (stored at index `rows`).
    /// `allowed` bounds the entering column range.
    fn run(&mut self, allowed: usize) -> bool {
        let max_iter = 50_000;
        for _ in 0..max_iter {
            let obj = self.rows;
            let Some(enter) = (0..allowed).find(|&c| self.at(obj, c) < -COST_EPS) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, enter);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r).max(0.0) / a;
                    match best {
                        None => best = Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-12
                                || (ratio <= bratio + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                best = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, enter),
                None => return false,
            }
        }
        // Bland's rule cannot cycle, so this only triggers on numerical trouble.
        true
    }
}

/// Minimizes `cost · y` subject to `a y = b`, `y >= 0`.
fn simplex(a: &DMatrix<f64>, b: &DVector<f64>, cost: &DVector<f64>) -> SimplexOutcome {
    let (m, n) = a.shape();
    let width = n + m + 1;
    let mut t = Tableau {
        rows: m,
        width,
        data: vec![0.0; (m + 1) * width],
        basis: (n..n + m).collect(),
    };
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..n {
            t.data[r * width + c] = sign * a[(r, c)];
        }
        t.data[r * width + n + r] = 1.0;
        t.data[r * width + width - 1] = sign * b[r];
    }
    // Phase 1: minimize the sum of artificials.
    for c in 0..width {
        if (n..n + m).contains(&c) {
            continue;
        }
        let s: f64 = (0..m).map(|r| t.data[r * width + c]).sum();
        t.data[m * width + c] = -s;
    }
    t.run(n + m);
    let phase1 = -t.at(m, width - 1);
    let scale = b.amax().max(1.0);
    if phase1 > 1e-9 * scale {
        return SimplexOutcome::Infeasible;
    }

    // Drive remaining artificials out of the basis.
    let mut dead_rows = Vec::new();
    for r in 0..m {
        if t.basis[r] >= n {
            let candidate = (0..n)
                .filter(|&c| t.at(r, c).abs() > PIVOT_EPS)
                .max_by(|&x, &y| t.at(r, x).abs().total_cmp(&t.at(r, y).abs()));
            match candidate {
                Some(c) => t.pivot(r, c),
                None => dead_rows.push(r),
            }
        }
    }

    // Phase 2 objective row.
    for c in 0..width {
        t.data[m * width + c] = 0.0;
    }
    for c in 0..n {
        let mut d = cost[c];
        for r in 0..m {
            if t.basis[r] < n {
                d -= cost[t.basis[r]] * t.at(r, c);
            }
        }
        t.data[m * width + c] = d;
    }
    // Rows whose artificial stayed basic are redundant: zero them so they never pivot.
    for &r in &dead_rows {
        for c in 0..n {
            t.data[r * width + c] = 0.0;
        }
    }
    let bounded = t.run(n);

    let mut y = DVector::<f64>::zeros(n);
    for r in 0..m {
        if t.basis[r] < n {
            y[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let y = polish(a, b, &t.basis, n, y);
    if bounded {
        SimplexOutcome::Optimal(y)
    } else {
        SimplexOutcome::Unbounded(y)
    }
}

/// Re-solves the basic system directly to shed accumulated pivoting error.
fn polish(a: &DMatrix<f64>, b: &DVector<f64>, basis: &[usize], n: usize, y: DVector<f64>) -> DVector<f64> {
    let basic: Vec<usize> = basis.iter().cloned().filter(|&j| j < n).collect();
    if basic.is_empty() {
        return y;
    }
    let ab = DMatrix::from_fn(a.nrows(), basic.len(), |i, k| a[(i, basic[k])]);
    let Ok(sol) = ab.svd(true, true).solve(b, 1e-13) else {
        return y;
    };
    let mut refined = DVector::<f64>::zeros(n);
    for (k, &j) in basic.iter().enumerate() {
        refined[j] = sol[k];
    }
    if refined.iter().any(|&v| v < -1e-10) {
        return y;
    }
    refined.apply(|v| *v = v.max(0.0));
    let before = (a * &y - b).amax();
    let after = (a * &refined - b).amax();
    if after <= before {
        refined
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn single_variable_equal_one() {
        let (ok, p) = lp_feasible(&DMatrix::from_element(1, 1, 1.0), &dv(&[1.0]), &dv(&[0.0])).unwrap();
        assert!(ok);
        assert!((p.unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_variable_negative_is_infeasible() {
        let (ok, p) = lp_feasible(&DMatrix::from_element(1, 1, 1.0), &dv(&[-1.0]), &dv(&[0.0])).unwrap();
        assert!(!ok);
        assert!(p.is_none());
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let (ok, _) = lp_feasible(&a, &dv(&[1.0, 3.0]), &dv(&[0.0, 0.0])).unwrap();
        assert!(!ok);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 1.0, -1.0, 0.0]);
        let b = dv(&[1.0, 2.0, 0.0]);
        let (ok, p) = lp_feasible(&a, &b, &dv(&[0.0, 0.0, 0.0])).unwrap();
        assert!(ok);
        let p = p.unwrap();
        assert!((&a * &p - &b).amax() < FEAS_TOL);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn lower_bounds_are_respected() {
        // x + y = 3 with x >= 1, y >= 1.5
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let lb = dv(&[1.0, 1.5]);
        let (ok, p) = lp_feasible(&a, &dv(&[3.0]), &lb).unwrap();
        assert!(ok);
        let p = p.unwrap();
        assert!(p[0] >= 1.0 - 1e-12 && p[1] >= 1.5 - 1e-12);
        assert!((p[0] + p[1] - 3.0).abs() < 1e-12);
        let (ok, _) = lp_feasible(&a, &dv(&[2.0]), &lb).unwrap();
        assert!(!ok);
    }

    #[test]
    fn maximize_min_spreads_mass() {
        // x0 + x1 + x2 = 3, x2 - x0 = 1 -> best min is x0 = x1 = 2/3... check:
        // x0 = a, x2 = a + 1, x1 = 3 - 2a - 1 = 2 - 2a; min(a, 2 - 2a) max at a = 2/3.
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, -1.0, 0.0, 1.0]);
        let lp = LinearProgram {
            a_eq: a.clone(),
            b_eq: dv(&[3.0, 1.0]),
            lower_bounds: dv(&[0.0, 0.0, 0.0]),
            objective: Objective::MaximizeMin(vec![0, 1, 2]),
        };
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective.unwrap() - 2.0 / 3.0).abs() < 1e-10);
        let p = sol.point.unwrap();
        assert!((&a * &p - dv(&[3.0, 1.0])).amax() < FEAS_TOL);
    }

    #[test]
    fn maximize_min_can_hit_zero() {
        // x0 + x1 = 1 and x1 = 1 forces x0 = 0.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let sol = LinearProgram {
            a_eq: a,
            b_eq: dv(&[1.0, 1.0]),
            lower_bounds: dv(&[0.0, 0.0]),
            objective: Objective::MaximizeMin(vec![0, 1]),
        }
        .solve()
        .unwrap();
        assert!(sol.objective.unwrap().abs() < 1e-12);
    }

    #[test]
    fn unbounded_objective_still_returns_point() {
        // x0 - x1 = 0 leaves the common floor unbounded.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let sol = LinearProgram {
            a_eq: a,
            b_eq: dv(&[0.0]),
            lower_bounds: dv(&[0.0, 0.0]),
            objective: Objective::MaximizeMin(vec![0, 1]),
        }
        .solve()
        .unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
        assert!(sol.point.is_some());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(lp_feasible(&DMatrix::zeros(2, 2), &dv(&[1.0]), &dv(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn random_feasible_systems_are_solved() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = rng.random_range(1..6);
            let n = rng.random_range(m..12);
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
            let b = &a * &x0;
            let (ok, p) = lp_feasible(&a, &b, &DVector::zeros(n)).unwrap();
            assert!(ok);
            let p = p.unwrap();
            assert!((&a * &p - &b).amax() < FEAS_TOL);
            assert!(p.iter().all(|&v| v >= -FEAS_TOL));
        }
    }
}
