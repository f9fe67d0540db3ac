//! Exact dense solver for small strictly convex QPs of the form
//!
//! ```text
//!     minimize    |u - u_ref|^2
//!     subject to  a_i' u <= b_i          (i = 0..R)
//!                 lower <= u <= upper    (optional, per component)
//! ```
//!
//! The objective is `|u - u_ref|^2` (not halved); its gradient is
//! `2 (u - u_ref)`, so the multiplier of a single active row is
//! `lambda = 2 (a' u_ref - b) / |a|^2`. Stationarity reads
//! `2 (u* - u_ref) + sum_i lambda_i a_i = 0`.
//!
//! The solver searches working sets in order of increasing cardinality:
//! for each candidate active set the equality-constrained projection is
//! solved in closed form and accepted once it is primal feasible with
//! non-negative multipliers. For a feasible problem the optimizer's KKT
//! support is a linearly independent subset, so the search always
//! terminates with the exact minimizer; if no working set qualifies the
//! problem is infeasible and a Farkas certificate is searched for the
//! reported rows. Row counts above [`MAX_ROWS`] are rejected up front
//! since the search is combinatorial.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Combinatorial-blowup guard on the number of inequality rows
/// (explicit rows plus expanded finite bounds).
pub const MAX_ROWS: usize = 32;

/// Min-norm projection problem.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub u_ref: DVector<f64>,
    /// Inequality rows `(a, b)` encoding `a' u <= b`.
    pub rows: Vec<(DVector<f64>, f64)>,
    /// Optional per-component bounds; non-finite entries mean unbounded.
    pub lower: Option<DVector<f64>>,
    pub upper: Option<DVector<f64>>,
}

impl QpProblem {
    pub fn new(u_ref: DVector<f64>, rows: Vec<(DVector<f64>, f64)>) -> Self {
        Self {
            u_ref,
            rows,
            lower: None,
            upper: None,
        }
    }

    /// Explicit rows followed by bound rows (finite lower bounds in
    /// component order, then finite upper bounds). Row indices reported
    /// in solutions refer to this expanded list.
    pub fn expanded_rows(&self) -> Vec<(DVector<f64>, f64)> {
        let m = self.u_ref.len();
        let mut rows = self.rows.clone();
        if let Some(lo) = &self.lower {
            for i in 0..m {
                if lo[i].is_finite() {
                    let mut a = DVector::zeros(m);
                    a[i] = -1.0;
                    rows.push((a, -lo[i]));
                }
            }
        }
        if let Some(up) = &self.upper {
            for i in 0..m {
                if up[i].is_finite() {
                    let mut a = DVector::zeros(m);
                    a[i] = 1.0;
                    rows.push((a, up[i]));
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

/// Solver output. For `Infeasible`, `u_star` echoes `u_ref`,
/// `active_rows` names a mutually infeasible subset when a Farkas
/// certificate was found (all candidate rows otherwise) and
/// `multipliers` carries the certificate weights.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    pub active_rows: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub status: QpStatus,
}

struct NormalizedRow {
    index: usize,
    a: DVector<f64>,
    b: f64,
    norm: f64,
}

/// Exact minimizer of a [`QpProblem`] by working-set search.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    let m = p.u_ref.len();
    let rows = p.expanded_rows();
    if rows.len() > MAX_ROWS {
        return Err(Error::TooManyRows {
            rows: rows.len(),
            max: MAX_ROWS,
        });
    }

    // Degenerate rows (a = 0) are the limit of the constraint: b >= 0 is
    // vacuous, b < 0 is an immediate Farkas certificate.
    let mut candidates: Vec<NormalizedRow> = Vec::with_capacity(rows.len());
    for (index, (a, b)) in rows.iter().enumerate() {
        let norm = a.norm();
        if !norm.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite {
                what: "QP row",
                step: index,
            });
        }
        if norm == 0.0 {
            if *b < 0.0 {
                return Ok(QpSolution {
                    u_star: p.u_ref.clone(),
                    active_rows: vec![index],
                    multipliers: vec![1.0],
                    status: QpStatus::Infeasible,
                });
            }
            continue;
        }
        candidates.push(NormalizedRow {
            index,
            a: a / norm,
            b: b / norm,
            norm,
        });
    }

    let feas_tol = 1e-9 * (1.0 + p.u_ref.norm());
    let feasible =
        |u: &DVector<f64>| candidates.iter().all(|r| r.a.dot(u) - r.b <= feas_tol);

    // Working set of size zero: the reference itself.
    if feasible(&p.u_ref) {
        return Ok(QpSolution {
            u_star: p.u_ref.clone(),
            active_rows: Vec::new(),
            multipliers: Vec::new(),
            status: QpStatus::Optimal,
        });
    }

    // Fast path: iterative add/drop working-set search. It accepts under
    // the same conditions as the exhaustive search below, so a returned
    // solution is the exact minimizer; on stalls (degenerate geometry) it
    // bails out and the enumeration decides.
    if let Some(solution) = iterate_working_set(&candidates, &p.u_ref, m, feas_tol) {
        return Ok(solution);
    }

    let max_k = m.min(candidates.len());
    for k in 1..=max_k {
        let mut combo = Combinations::new(candidates.len(), k);
        while let Some(subset) = combo.next() {
            let Some((u, y)) = solve_working_set(&candidates, subset, &p.u_ref) else {
                continue; // linearly dependent working set
            };
            if y.iter().any(|v| *v < -feas_tol) {
                continue;
            }
            if !feasible(&u) {
                continue;
            }
            return Ok(certified_solution(&candidates, subset, u, &y));
        }
    }

    // No working set qualifies, so the feasible set is empty (the search
    // provably visits the optimizer's support whenever one exists). Try
    // to name a small conflicting subset via a Farkas certificate:
    // lambda >= 0 with sum lambda_i a_i = 0 and sum lambda_i b_i < 0.
    let (cert_rows, cert_weights) = farkas_certificate(&candidates, m).unwrap_or_else(|| {
        (
            candidates.iter().map(|r| r.index).collect(),
            vec![0.0; candidates.len()],
        )
    });
    Ok(QpSolution {
        u_star: p.u_ref.clone(),
        active_rows: cert_rows,
        multipliers: cert_weights,
        status: QpStatus::Infeasible,
    })
}

/// Equality-constrained projection onto the rows of `subset`:
/// `u = u_ref - A' (A A')^{-1} (A u_ref - b)`. Returns the point and the
/// (halved, normalized) multipliers `y`, or `None` when the working set
/// is linearly dependent.
fn solve_working_set(
    candidates: &[NormalizedRow],
    subset: &[usize],
    u_ref: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = u_ref.len();
    let k = subset.len();
    let mut a_mat = DMatrix::zeros(k, m);
    let mut resid = DVector::zeros(k);
    for (r, &ci) in subset.iter().enumerate() {
        a_mat.row_mut(r).copy_from(&candidates[ci].a.transpose());
        resid[r] = candidates[ci].a.dot(u_ref) - candidates[ci].b;
    }
    let gram = &a_mat * a_mat.transpose();
    let chol = Cholesky::new(gram.clone())?;
    let mut y = chol.solve(&resid);
    // One step of iterative refinement keeps feasibility checks
    // meaningful for poorly conditioned working sets.
    y += chol.solve(&(&resid - &gram * &y));
    let u = u_ref - a_mat.transpose() * &y;
    Some((u, y))
}

fn certified_solution(
    candidates: &[NormalizedRow],
    subset: &[usize],
    u: DVector<f64>,
    y: &DVector<f64>,
) -> QpSolution {
    let active_rows: Vec<usize> = subset.iter().map(|&ci| candidates[ci].index).collect();
    let multipliers: Vec<f64> = subset
        .iter()
        .zip(y.iter())
        .map(|(&ci, yi)| (2.0 * yi / candidates[ci].norm).max(0.0))
        .collect();
    QpSolution {
        u_star: u,
        active_rows,
        multipliers,
        status: QpStatus::Optimal,
    }
}

/// Add/drop iteration over working sets: add the most violated row, drop
/// the most negative multiplier. Converges in a handful of iterations on
/// the non-degenerate problems that dominate simulation; anything else
/// falls back to enumeration by returning `None`.
fn iterate_working_set(
    candidates: &[NormalizedRow],
    u_ref: &DVector<f64>,
    m: usize,
    feas_tol: f64,
) -> Option<QpSolution> {
    let start = (0..candidates.len()).max_by(|&i, &j| {
        let vi = candidates[i].a.dot(u_ref) - candidates[i].b;
        let vj = candidates[j].a.dot(u_ref) - candidates[j].b;
        vi.partial_cmp(&vj).expect("finite rows")
    })?;
    let mut working: Vec<usize> = vec![start];

    for _ in 0..(16 + 8 * candidates.len()) {
        let (u, y) = solve_working_set(candidates, &working, u_ref)?;

        // Drop phase: most negative multiplier leaves the working set.
        let mut drop: Option<(usize, f64)> = None;
        for (pos, &yi) in y.iter().enumerate() {
            if yi < -feas_tol && drop.is_none_or(|(_, worst)| yi < worst) {
                drop = Some((pos, yi));
            }
        }
        if let Some((pos, _)) = drop {
            working.remove(pos);
            if working.is_empty() {
                return None;
            }
            continue;
        }

        // Add phase: most violated row joins; none violated means done.
        let mut add: Option<(usize, f64)> = None;
        for (i, r) in candidates.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let v = r.a.dot(&u) - r.b;
            if v > feas_tol && add.is_none_or(|(_, worst)| v > worst) {
                add = Some((i, v));
            }
        }
        match add {
            None => return Some(certified_solution(candidates, &working, u, &y)),
            Some((j, _)) => {
                if working.len() == m {
                    return None;
                }
                working.push(j);
            }
        }
    }
    None
}

/// Searches small row subsets for Farkas weights proving infeasibility.
/// Support size is capped to keep the search cheap; the infeasibility
/// verdict itself never depends on finding a certificate here.
fn farkas_certificate(
    candidates: &[NormalizedRow],
    m: usize,
) -> Option<(Vec<usize>, Vec<f64>)> {
    const FARKAS_SUPPORT_CAP: usize = 6;
    let max_k = (m + 1).min(candidates.len()).min(FARKAS_SUPPORT_CAP);
    let mut target = DVector::zeros(m + 1);
    target[m] = -1.0;
    for k in 2..=max_k {
        let mut combo = Combinations::new(candidates.len(), k);
        while let Some(subset) = combo.next() {
            // Columns are [a_i; b_i]; solve for lambda with b'lambda = -1.
            let mut mat = DMatrix::zeros(m + 1, k);
            for (c, &ci) in subset.iter().enumerate() {
                mat.view_mut((0, c), (m, 1)).copy_from(&candidates[ci].a);
                mat[(m, c)] = candidates[ci].b;
            }
            let svd = mat.clone().svd(true, true);
            let Ok(lambda) = svd.solve(&target, 1e-12) else {
                continue;
            };
            if lambda.iter().any(|v| *v < -1e-9) {
                continue;
            }
            if ((&mat * &lambda) - &target).norm() > 1e-7 {
                continue;
            }
            let rows = subset.iter().map(|&ci| candidates[ci].index).collect();
            let weights = subset
                .iter()
                .zip(lambda.iter())
                .map(|(&ci, l)| l.max(0.0) / candidates[ci].norm)
                .collect();
            return Some((rows, weights));
        }
    }
    None
}

/// Checks stationarity, primal/dual feasibility and complementary
/// slackness of a claimed optimal solution, all at absolute tolerance
/// `tol`. Returns `false` for non-optimal statuses.
pub fn verify_kkt(p: &QpProblem, s: &QpSolution, tol: f64) -> bool {
    if s.status != QpStatus::Optimal {
        return false;
    }
    let rows = p.expanded_rows();
    if s.active_rows.len() != s.multipliers.len() {
        return false;
    }

    // Stationarity: 2 (u* - u_ref) + sum lambda_i a_i = 0.
    let mut resid = (&s.u_star - &p.u_ref) * 2.0;
    for (&i, &lambda) in s.active_rows.iter().zip(&s.multipliers) {
        resid += &rows[i].0 * lambda;
    }
    if resid.norm() > tol {
        return false;
    }

    // Primal feasibility over every row.
    if rows.iter().any(|(a, b)| a.dot(&s.u_star) - b > tol) {
        return false;
    }

    // Dual feasibility and complementary slackness on the active set;
    // inactive rows carry an implicit zero multiplier.
    for (&i, &lambda) in s.active_rows.iter().zip(&s.multipliers) {
        if lambda < -tol {
            return false;
        }
        let slack = rows[i].0.dot(&s.u_star) - rows[i].1;
        if (lambda * slack).abs() > tol {
            return false;
        }
    }
    true
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    k: usize,
    idx: Vec<usize>,
    started: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            idx: (0..k).collect(),
            started: false,
        }
    }

    fn next(&mut self) -> Option<&[usize]> {
        if self.k > self.n {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.idx);
        }
        // Advance the rightmost index that still has room.
        let mut i = self.k;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if self.idx[i] < self.n - (self.k - i) {
                self.idx[i] += 1;
                for j in i + 1..self.k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(&self.idx);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn no_rows_returns_u_ref_exactly() {
        let p = QpProblem::new(dv(&[0.3, -0.7, 2.0]), vec![]);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.u_star, p.u_ref);
        assert!(s.active_rows.is_empty());
        assert!(verify_kkt(&p, &s, 1e-12));
    }

    #[test]
    fn single_row_projection_matches_closed_form() {
        let p = QpProblem::new(dv(&[1.0, 0.0]), vec![(dv(&[1.0, 0.0]), 0.5)]);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.u_star[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(s.u_star[1], 0.0, epsilon = 1e-14);
        assert_eq!(s.active_rows, vec![0]);
        // lambda = 2 (a'u_ref - b) / |a|^2 = 2 * 0.5 / 1 = 1.
        assert_relative_eq!(s.multipliers[0], 1.0, epsilon = 1e-14);
        assert!(verify_kkt(&p, &s, 1e-8));
    }

    #[test]
    fn two_separable_rows_project_to_origin() {
        let p = QpProblem::new(
            dv(&[1.0, 1.0]),
            vec![(dv(&[1.0, 0.0]), 0.0), (dv(&[0.0, 1.0]), 0.0)],
        );
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.u_star.norm() < 1e-14);
        assert!(verify_kkt(&p, &s, 1e-8));
    }

    #[test]
    fn opposing_halfspaces_are_infeasible() {
        // u <= -1 and u >= 1.
        let p = QpProblem::new(
            dv(&[0.0, 0.0]),
            vec![(dv(&[1.0, 0.0]), -1.0), (dv(&[-1.0, 0.0]), -1.0)],
        );
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_eq!(s.active_rows, vec![0, 1]);
        // Certificate: equal weights cancel the normals with b'lambda < 0.
        assert!(s.multipliers.iter().all(|l| *l > 0.0));
    }

    #[test]
    fn zero_row_with_negative_bound_is_infeasible() {
        let p = QpProblem::new(dv(&[0.0]), vec![(dv(&[0.0]), -1.0)]);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_eq!(s.active_rows, vec![0]);
    }

    #[test]
    fn zero_row_with_nonnegative_bound_is_dropped() {
        let p = QpProblem::new(
            dv(&[2.0, 1.0]),
            vec![(dv(&[0.0, 0.0]), 0.0), (dv(&[1.0, 0.0]), 1.0)],
        );
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.u_star[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.u_star[1], 1.0, epsilon = 1e-14);
        assert_eq!(s.active_rows, vec![1]);
    }

    #[test]
    fn box_bounds_clamp_the_reference() {
        let p = QpProblem {
            u_ref: dv(&[2.0, 0.3]),
            rows: vec![],
            lower: Some(dv(&[-1.0, -1.0])),
            upper: Some(dv(&[1.0, 1.0])),
        };
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.u_star[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.u_star[1], 0.3, epsilon = 1e-14);
        // Expanded indices: lower bounds 0,1 then upper bounds 2,3.
        assert_eq!(s.active_rows, vec![2]);
        assert_relative_eq!(s.multipliers[0], 2.0, epsilon = 1e-12);
        assert!(verify_kkt(&p, &s, 1e-8));
    }

    #[test]
    fn kkt_rejects_perturbed_solution() {
        let p = QpProblem::new(dv(&[1.0, 0.0]), vec![(dv(&[1.0, 0.0]), 0.5)]);
        let mut s = solve_qp(&p).unwrap();
        // Feasible move off the constraint breaks complementary slackness.
        s.u_star[0] -= 1e-3;
        assert!(!verify_kkt(&p, &s, 1e-8));
    }

    #[test]
    fn row_count_guard() {
        let rows: Vec<_> = (0..MAX_ROWS + 1)
            .map(|i| (dv(&[1.0, i as f64]), 1.0))
            .collect();
        let p = QpProblem::new(dv(&[0.0, 0.0]), rows);
        assert!(matches!(solve_qp(&p), Err(Error::TooManyRows { .. })));
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        let mut c = Combinations::new(4, 2);
        let mut seen = Vec::new();
        while let Some(s) = c.next() {
            seen.push(s.to_vec());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

        #[test]
        fn row_scaling_leaves_minimizer_unchanged(
            scale in 0.1..10.0f64,
            bx in -1.0..1.0f64,
        ) {
            let base = QpProblem::new(
                dv(&[1.0, 1.0]),
                vec![(dv(&[1.0, 0.4]), bx), (dv(&[-0.3, 1.0]), 0.2)],
            );
            let scaled = QpProblem::new(
                base.u_ref.clone(),
                vec![
                    (&base.rows[0].0 * scale, base.rows[0].1 * scale),
                    (base.rows[1].0.clone(), base.rows[1].1),
                ],
            );
            let s0 = solve_qp(&base).unwrap();
            let s1 = solve_qp(&scaled).unwrap();
            prop_assert_eq!(s0.status, s1.status);
            if s0.status == QpStatus::Optimal {
                prop_assert!((s0.u_star - s1.u_star).norm() < 1e-9);
            }
        }

        #[test]
        fn no_feasible_point_beats_the_minimizer(
            ux in -2.0..2.0f64, uy in -2.0..2.0f64,
            px in -2.0..2.0f64, py in -2.0..2.0f64,
        ) {
            let p = QpProblem::new(
                dv(&[ux, uy]),
                vec![(dv(&[1.0, 0.2]), 0.3), (dv(&[-0.5, 1.0]), 0.1)],
            );
            let s = solve_qp(&p).unwrap();
            prop_assert_eq!(s.status, QpStatus::Optimal);
            prop_assert!(verify_kkt(&p, &s, 1e-8));
            let probe = dv(&[px, py]);
            let feasible = p.rows.iter().all(|(a, b)| a.dot(&probe) <= *b);
            if feasible {
                prop_assert!(
                    (&probe - &p.u_ref).norm() >= (&s.u_star - &p.u_ref).norm() - 1e-10
                );
            }
        }
    }
}
