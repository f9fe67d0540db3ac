//! Shared oracles for the acceptance suite. Everything here is an
//! independent computation path: nothing calls into the solver or the
//! derivative code it is used to check.

use nalgebra::DVector;

/// Outcome of the dual projected-gradient oracle.
pub struct PgdOutcome {
    pub u: DVector<f64>,
    /// True when the iterate is primal feasible and the iteration has
    /// settled; comparisons are only meaningful then.
    pub certified: bool,
}

/// Projected gradient ascent on the dual of
/// `min |u - u_ref|^2  s.t.  a_i' u <= b_i`:
/// `u(lambda) = u_ref - A' lambda / 2`, `lambda <- max(0, lambda + step (A u - b))`.
pub fn projected_gradient_qp(
    u_ref: &DVector<f64>,
    rows: &[(DVector<f64>, f64)],
    iters: usize,
    step: f64,
) -> PgdOutcome {
    let mut lambda = vec![0.0f64; rows.len()];
    let mut last_change = f64::INFINITY;
    for _ in 0..iters {
        let mut u = u_ref.clone();
        for (i, (a, _)) in rows.iter().enumerate() {
            u -= a * (lambda[i] / 2.0);
        }
        last_change = 0.0;
        for (i, (a, b)) in rows.iter().enumerate() {
            let grad = a.dot(&u) - b;
            let next = (lambda[i] + step * grad).max(0.0);
            last_change = last_change.max((next - lambda[i]).abs());
            lambda[i] = next;
        }
    }
    // Recompute the primal point for the final multipliers.
    let mut u = u_ref.clone();
    for (i, (a, _)) in rows.iter().enumerate() {
        u -= a * (lambda[i] / 2.0);
    }
    let feasible = rows.iter().all(|(a, b)| a.dot(&u) - b <= 1e-6);
    PgdOutcome {
        u,
        certified: feasible && last_change < 1e-9,
    }
}

/// `|actual - expected| <= tol * max(1, |expected|)`, elementwise over
/// iterators of matching length.
pub fn within_relative<'a>(
    actual: impl IntoIterator<Item = &'a f64>,
    expected: impl IntoIterator<Item = &'a f64>,
    tol: f64,
) -> bool {
    actual
        .into_iter()
        .zip(expected)
        .all(|(a, e)| (a - e).abs() <= tol * e.abs().max(1.0))
}
