//! Min-norm QP safety filter.
//!
//! For every almost-active leaf `i` of the barrier tree the filter adds
//! one linear-in-`u` row derived from the reciprocal barrier `B_i = 1/h_i`:
//!
//! ```text
//!     grad B_i' (f(x) + g(x) u) + tr[sigma' hess B_i sigma] / 2 <= alpha3(h_i(x))
//! ```
//!
//! and projects the reference control onto the resulting polytope.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::barrier::{reciprocal_barrier, AlmostActiveSet, BarrierTree, BARRIER_FLOOR};
use crate::dynamics::SdeModel;
use crate::error::{Error, Result};
use crate::qp::{solve_qp, QpProblem, QpSolution, QpStatus};

/// Class-K function: strictly increasing with value zero at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassK {
    Identity,
    Linear { gain: f64 },
    Power { exponent: f64, gain: f64 },
}

impl ClassK {
    pub fn identity() -> Self {
        ClassK::Identity
    }

    pub fn linear(gain: f64) -> Result<Self> {
        if gain <= 0.0 {
            return Err(Error::NonPositive {
                name: "class-K gain",
                value: gain,
            });
        }
        Ok(ClassK::Linear { gain })
    }

    pub fn power(exponent: f64, gain: f64) -> Result<Self> {
        if exponent <= 0.0 {
            return Err(Error::NonPositive {
                name: "class-K exponent",
                value: exponent,
            });
        }
        if gain <= 0.0 {
            return Err(Error::NonPositive {
                name: "class-K gain",
                value: gain,
            });
        }
        Ok(ClassK::Power { exponent, gain })
    }

    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "class-K functions are defined on r >= 0");
        match *self {
            ClassK::Identity => r,
            ClassK::Linear { gain } => gain * r,
            ClassK::Power { exponent, gain } => gain * r.powf(exponent),
        }
    }
}

/// One inequality `a' u <= b` tied to the barrier leaf it came from.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub a: DVector<f64>,
    pub b: f64,
    pub leaf_index: usize,
}

/// Builds the filter row for one leaf:
/// `a = g(x)' grad B`, `b = alpha3(h) - grad B' f(x) - tr[sigma' hess B sigma] / 2`.
pub fn constraint_row(
    model: &SdeModel,
    tree: &BarrierTree,
    leaf_index: usize,
    x: &DVector<f64>,
    alpha3: &ClassK,
) -> Result<ConstraintRow> {
    let h = tree.leaf_value(leaf_index, x)?;
    if h < BARRIER_FLOOR {
        return Err(Error::BarrierFloor {
            leaf: tree.leaf_label(leaf_index),
            h,
        });
    }
    let grad_h = tree.leaf_gradient(leaf_index, x)?;
    let hess_h = tree.leaf_hessian(leaf_index, x)?;
    let (_, grad_b, hess_b) = reciprocal_barrier(h, &grad_h, &hess_h)?;

    let g = model.input_matrix(x);
    let f = model.drift(x);
    let sigma = model.diffusion(x);

    let a = g.transpose() * &grad_b;
    let mut trace = 0.0;
    for col in sigma.column_iter() {
        trace += (&hess_b * col).dot(&col);
    }
    let b = alpha3.eval(h) - grad_b.dot(&f) - 0.5 * trace;

    if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "constraint row",
            step: leaf_index,
        });
    }
    Ok(ConstraintRow { a, b, leaf_index })
}

/// Outcome of one filtering step.
#[derive(Debug, Clone)]
pub struct FilterStep {
    /// The safe control (the minimizer, or the reference when every row
    /// is already satisfied).
    pub control: DVector<f64>,
    pub rows: Vec<ConstraintRow>,
    pub almost_active: AlmostActiveSet,
    pub solution: QpSolution,
    /// Slack actually used, when the filter runs in slack mode.
    pub slack: Option<f64>,
    /// Wall-clock duration of the QP solve.
    pub qp_time: Duration,
}

/// Safety filter bound to a model, a barrier tree and filter parameters.
///
/// Stateless per call: it may be shared read-only across concurrent
/// trials.
#[derive(Debug, Clone)]
pub struct SafetyFilter {
    model: SdeModel,
    tree: Arc<BarrierTree>,
    epsilon: f64,
    alpha3: ClassK,
    bounds: Option<(DVector<f64>, DVector<f64>)>,
    slack_penalty: Option<f64>,
}

impl SafetyFilter {
    pub fn new(model: SdeModel, tree: Arc<BarrierTree>, epsilon: f64, alpha3: ClassK) -> Self {
        Self {
            model,
            tree,
            epsilon,
            alpha3,
            bounds: None,
            slack_penalty: None,
        }
    }

    /// Box bounds on the control input.
    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.bounds = Some((lower, upper));
        self
    }

    /// Enables the slack fallback: one shared non-negative slack on every
    /// barrier row, with quadratic penalty `weight` on the slack. Box
    /// bounds stay hard.
    pub fn with_slack_penalty(mut self, weight: f64) -> Self {
        self.slack_penalty = Some(weight);
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tree(&self) -> &BarrierTree {
        &self.tree
    }

    /// Filtered control only; see [`SafetyFilter::filter_control_detailed`].
    pub fn filter_control(&self, x: &DVector<f64>, u_ref: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.filter_control_detailed(x, u_ref)?.control)
    }

    /// Builds one row per almost-active leaf and solves the projection.
    pub fn filter_control_detailed(
        &self,
        x: &DVector<f64>,
        u_ref: &DVector<f64>,
    ) -> Result<FilterStep> {
        let m = self.model.input_dim();
        if u_ref.len() != m {
            return Err(Error::DimensionMismatch {
                context: "filter reference control",
                expected: m,
                actual: u_ref.len(),
            });
        }
        let h = self.tree.eval(x)?;
        if h < BARRIER_FLOOR {
            return Err(Error::BarrierFloor {
                leaf: "composed barrier h(x)".into(),
                h,
            });
        }

        let almost_active = self.tree.almost_active(x, self.epsilon)?;
        let rows: Vec<ConstraintRow> = almost_active
            .near
            .iter()
            .map(|&leaf| constraint_row(&self.model, &self.tree, leaf, x, &self.alpha3))
            .collect::<Result<_>>()?;

        let problem = self.assemble(u_ref, &rows);
        let start = Instant::now();
        let solution = solve_qp(&problem)?;
        let qp_time = start.elapsed();

        if solution.status == QpStatus::Infeasible {
            let mut conflicting: Vec<usize> = solution
                .active_rows
                .iter()
                .filter(|&&i| i < rows.len())
                .map(|&i| rows[i].leaf_index)
                .collect();
            if conflicting.is_empty() {
                conflicting = solution.active_rows.clone();
            }
            return Err(Error::InfeasibleQp { rows: conflicting });
        }

        let (control, slack) = match self.slack_penalty {
            None => (solution.u_star.clone(), None),
            Some(weight) => {
                let control = solution.u_star.rows(0, m).into_owned();
                let slack = solution.u_star[m] / weight.sqrt();
                (control, Some(slack))
            }
        };

        Ok(FilterStep {
            control,
            rows,
            almost_active,
            solution,
            slack,
            qp_time,
        })
    }

    /// Maps barrier rows (plus bounds, plus the optional slack variable)
    /// onto a plain projection problem. In slack mode the slack `s` is
    /// rescaled to `s_tilde = sqrt(weight) s` so the augmented objective
    /// `|u - u_ref|^2 + weight s^2` keeps an identity Hessian.
    fn assemble(&self, u_ref: &DVector<f64>, rows: &[ConstraintRow]) -> QpProblem {
        let m = u_ref.len();
        match self.slack_penalty {
            None => {
                let mut p = QpProblem::new(
                    u_ref.clone(),
                    rows.iter().map(|r| (r.a.clone(), r.b)).collect(),
                );
                if let Some((lo, up)) = &self.bounds {
                    p.lower = Some(lo.clone());
                    p.upper = Some(up.clone());
                }
                p
            }
            Some(weight) => {
                let scale = weight.sqrt();
                let mut aug_ref = DVector::zeros(m + 1);
                aug_ref.rows_mut(0, m).copy_from(u_ref);
                // Rows are normalized so the shared slack relaxes each one
                // by Euclidean violation distance; reciprocal-barrier rows
                // otherwise dwarf the slack coupling numerically.
                let aug_rows = rows
                    .iter()
                    .map(|r| {
                        let norm = r.a.norm().max(f64::MIN_POSITIVE);
                        let mut a = DVector::zeros(m + 1);
                        a.rows_mut(0, m).copy_from(&(&r.a / norm));
                        a[m] = -1.0 / scale;
                        (a, r.b / norm)
                    })
                    .collect();
                let mut lower = DVector::from_element(m + 1, f64::NEG_INFINITY);
                let mut upper = DVector::from_element(m + 1, f64::INFINITY);
                if let Some((lo, up)) = &self.bounds {
                    lower.rows_mut(0, m).copy_from(lo);
                    upper.rows_mut(0, m).copy_from(up);
                }
                lower[m] = 0.0;
                QpProblem {
                    u_ref: aug_ref,
                    rows: aug_rows,
                    lower: Some(lower),
                    upper: Some(upper),
                }
            }
        }
    }
}
