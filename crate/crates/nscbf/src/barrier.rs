//! Non-smooth safety functions as min/max trees over smooth barrier leaves.
//!
//! A [`BarrierTree`] composes smooth pieces `h_i` through nested `min`
//! (conjunction) and `max` (disjunction) nodes; the composed value
//! `h(x) >= 0` holds exactly when the encoded Boolean safety
//! specification does. Each leaf supplies its own gradient and Hessian,
//! and [`reciprocal_barrier`] maps a smooth piece to the reciprocal form
//! `B = 1/h` used by the constraint construction.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};

/// Gradients are rejected when the distance to the singular point of the
/// norm falls below this; the singularity lies strictly inside the unsafe
/// region, so hitting the floor means the state is far out of spec.
pub const DISTANCE_FLOOR: f64 = 1e-9;

/// Reciprocal transform floor: `h` below this means the state is at or
/// through the safe-set boundary of the smooth piece.
pub const BARRIER_FLOOR: f64 = 1e-9;

/// A twice continuously differentiable barrier piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothBarrier {
    /// `h = |x - center| - radius`: safe outside the disk.
    KeepOutDisk { center: Vector2<f64>, radius: f64 },
    /// `h = radius - |x - center|`: safe inside the disk.
    KeepInDisk { center: Vector2<f64>, radius: f64 },
    /// `h = |x_i - x_j| - min_distance` on a joint state split into
    /// `per_agent_dim`-sized blocks.
    PairwiseSeparation {
        agent_i: usize,
        agent_j: usize,
        min_distance: f64,
        per_agent_dim: usize,
    },
}

impl std::fmt::Display for SmoothBarrier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SmoothBarrier::KeepOutDisk { center, radius } => write!(
                f,
                "keep_out_disk(center=[{}, {}], r={})",
                center.x, center.y, radius
            ),
            SmoothBarrier::KeepInDisk { center, radius } => write!(
                f,
                "keep_in_disk(center=[{}, {}], r={})",
                center.x, center.y, radius
            ),
            SmoothBarrier::PairwiseSeparation {
                agent_i,
                agent_j,
                min_distance,
                ..
            } => write!(
                f,
                "pairwise_separation(agents {agent_i},{agent_j}, min_distance={min_distance})"
            ),
        }
    }
}

impl SmoothBarrier {
    /// Smallest state dimension on which this piece is defined.
    pub fn min_state_dim(&self) -> usize {
        match self {
            SmoothBarrier::KeepOutDisk { .. } | SmoothBarrier::KeepInDisk { .. } => 2,
            SmoothBarrier::PairwiseSeparation {
                agent_i,
                agent_j,
                per_agent_dim,
                ..
            } => per_agent_dim * (agent_i.max(agent_j) + 1),
        }
    }

    fn offset_difference(&self, x: &DVector<f64>) -> (usize, usize, DVector<f64>) {
        match *self {
            SmoothBarrier::KeepOutDisk { center, .. }
            | SmoothBarrier::KeepInDisk { center, .. } => {
                (0, 0, DVector::from_vec(vec![x[0] - center.x, x[1] - center.y]))
            }
            SmoothBarrier::PairwiseSeparation {
                agent_i,
                agent_j,
                per_agent_dim,
                ..
            } => {
                let oi = agent_i * per_agent_dim;
                let oj = agent_j * per_agent_dim;
                let d = x.rows(oi, per_agent_dim) - x.rows(oj, per_agent_dim);
                (oi, oj, d)
            }
        }
    }

    /// Barrier value; total over all states of sufficient dimension.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let (_, _, d) = self.offset_difference(x);
        match *self {
            SmoothBarrier::KeepOutDisk { radius, .. } => d.norm() - radius,
            SmoothBarrier::KeepInDisk { radius, .. } => radius - d.norm(),
            SmoothBarrier::PairwiseSeparation { min_distance, .. } => d.norm() - min_distance,
        }
    }

    /// Gradient with respect to the full state vector.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (oi, oj, d) = self.offset_difference(x);
        let dist = d.norm();
        if dist < DISTANCE_FLOOR {
            return Err(Error::SingularGradient {
                leaf: self.to_string(),
                distance: dist,
            });
        }
        let unit = d / dist;
        let mut grad = DVector::zeros(x.len());
        match self {
            SmoothBarrier::KeepOutDisk { .. } => grad.rows_mut(0, 2).copy_from(&unit),
            SmoothBarrier::KeepInDisk { .. } => grad.rows_mut(0, 2).copy_from(&(-&unit)),
            SmoothBarrier::PairwiseSeparation { per_agent_dim, .. } => {
                grad.rows_mut(oi, *per_agent_dim).copy_from(&unit);
                grad.rows_mut(oj, *per_agent_dim).copy_from(&(-&unit));
            }
        }
        Ok(grad)
    }

    /// Hessian with respect to the full state vector.
    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (oi, oj, d) = self.offset_difference(x);
        let dist = d.norm();
        if dist < DISTANCE_FLOOR {
            return Err(Error::SingularGradient {
                leaf: self.to_string(),
                distance: dist,
            });
        }
        let unit = &d / dist;
        // Curvature of the distance function: (I - u u^T) / |d|.
        let k = d.len();
        let proj = (DMatrix::identity(k, k) - &unit * unit.transpose()) / dist;
        let mut hess = DMatrix::zeros(x.len(), x.len());
        match self {
            SmoothBarrier::KeepOutDisk { .. } => {
                hess.view_mut((0, 0), (2, 2)).copy_from(&proj);
            }
            SmoothBarrier::KeepInDisk { .. } => {
                hess.view_mut((0, 0), (2, 2)).copy_from(&(-&proj));
            }
            SmoothBarrier::PairwiseSeparation { per_agent_dim, .. } => {
                let p = *per_agent_dim;
                hess.view_mut((oi, oi), (p, p)).copy_from(&proj);
                hess.view_mut((oj, oj), (p, p)).copy_from(&proj);
                hess.view_mut((oi, oj), (p, p)).copy_from(&(-&proj));
                hess.view_mut((oj, oi), (p, p)).copy_from(&(-&proj));
            }
        }
        Ok(hess)
    }
}

/// Node of a min/max composition.
#[derive(Debug, Clone)]
pub enum BarrierNode {
    Leaf { index: usize, barrier: SmoothBarrier },
    Min(Vec<BarrierNode>),
    Max(Vec<BarrierNode>),
}

impl BarrierNode {
    pub fn leaf(index: usize, barrier: SmoothBarrier) -> Self {
        BarrierNode::Leaf { index, barrier }
    }

    fn collect_leaves(&self, out: &mut Vec<(usize, SmoothBarrier)>) -> Result<()> {
        match self {
            BarrierNode::Leaf { index, barrier } => out.push((*index, *barrier)),
            BarrierNode::Min(children) | BarrierNode::Max(children) => {
                if children.is_empty() {
                    return Err(Error::InvalidTree("min/max node with no children".into()));
                }
                for c in children {
                    c.collect_leaves(out)?;
                }
            }
        }
        Ok(())
    }

    /// Value together with the selected leaf. Ties resolve to the lowest
    /// leaf index so that selection is deterministic on partition
    /// boundaries.
    fn eval_with_leaf(&self, x: &DVector<f64>) -> (f64, usize) {
        match self {
            BarrierNode::Leaf { index, barrier } => (barrier.value(x), *index),
            BarrierNode::Min(children) => children
                .iter()
                .map(|c| c.eval_with_leaf(x))
                .min_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite values"))
                .expect("non-empty node"),
            BarrierNode::Max(children) => children
                .iter()
                .map(|c| c.eval_with_leaf(x))
                .max_by(|a, b| {
                    (a.0, std::cmp::Reverse(a.1))
                        .partial_cmp(&(b.0, std::cmp::Reverse(b.1)))
                        .expect("finite values")
                })
                .expect("non-empty node"),
        }
    }
}

/// Validated min/max tree over smooth barrier leaves.
#[derive(Debug, Clone)]
pub struct BarrierTree {
    root: BarrierNode,
    leaves: Vec<SmoothBarrier>,
    state_dim: usize,
}

/// Leaves whose value is within `epsilon` of the composed value `h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmostActiveSet {
    /// Leaf selected by the tree at `x`.
    pub active: usize,
    /// All leaves within `epsilon` of `h(x)`, in ascending index order;
    /// always contains `active`.
    pub near: Vec<usize>,
    pub epsilon: f64,
}

impl BarrierTree {
    /// Builds a tree, checking that leaf indices are dense `0..N-1` and
    /// that every leaf agrees on the state dimension.
    pub fn new(root: BarrierNode) -> Result<Self> {
        let mut indexed = Vec::new();
        root.collect_leaves(&mut indexed)?;
        indexed.sort_by_key(|(i, _)| *i);
        for (expected, (index, _)) in indexed.iter().enumerate() {
            if *index != expected {
                return Err(Error::InvalidTree(format!(
                    "leaf indices must be dense 0..{}, found {}",
                    indexed.len(),
                    index
                )));
            }
        }
        let leaves: Vec<SmoothBarrier> = indexed.into_iter().map(|(_, b)| b).collect();
        let state_dim = leaves
            .iter()
            .map(SmoothBarrier::min_state_dim)
            .max()
            .expect("at least one leaf");
        // Disk leaves read the whole state, so they only compose with
        // other 2-dimensional leaves.
        for (i, leaf) in leaves.iter().enumerate() {
            if matches!(
                leaf,
                SmoothBarrier::KeepOutDisk { .. } | SmoothBarrier::KeepInDisk { .. }
            ) && state_dim != 2
            {
                return Err(Error::InvalidTree(format!(
                    "leaf {i} is a planar disk but the tree state dimension is {state_dim}"
                )));
            }
        }
        Ok(Self {
            root,
            leaves,
            state_dim,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn leaf(&self, index: usize) -> &SmoothBarrier {
        &self.leaves[index]
    }

    /// Diagnostic label for a leaf, used in error values.
    pub fn leaf_label(&self, index: usize) -> String {
        format!("leaf {index} ({})", self.leaves[index])
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.state_dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context: "barrier tree state",
                expected: self.state_dim,
                actual: x.len(),
            })
        }
    }

    /// Composed barrier value `h(x)`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.root.eval_with_leaf(x).0)
    }

    /// Index of the leaf selected by argmin/argmax descent.
    pub fn active_leaf(&self, x: &DVector<f64>) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.root.eval_with_leaf(x).1)
    }

    /// Values of all leaves at `x`, indexed by leaf.
    pub fn leaf_values(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.leaves.iter().map(|b| b.value(x)).collect())
    }

    pub fn leaf_value(&self, index: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.leaves[index].value(x))
    }

    pub fn leaf_gradient(&self, index: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        self.leaves[index].gradient(x).map_err(|e| match e {
            Error::SingularGradient { distance, .. } => Error::SingularGradient {
                leaf: self.leaf_label(index),
                distance,
            },
            other => other,
        })
    }

    pub fn leaf_hessian(&self, index: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        self.leaves[index].hessian(x).map_err(|e| match e {
            Error::SingularGradient { distance, .. } => Error::SingularGradient {
                leaf: self.leaf_label(index),
                distance,
            },
            other => other,
        })
    }

    /// Almost-active set: every leaf within `epsilon` of the composed
    /// value, by value proximity alone. This over-approximates adjacency
    /// of the underlying partitions; extra members only add constraints.
    pub fn almost_active(&self, x: &DVector<f64>, epsilon: f64) -> Result<AlmostActiveSet> {
        if epsilon < 0.0 {
            return Err(Error::NonPositive {
                name: "epsilon (must be >= 0)",
                value: epsilon,
            });
        }
        self.check_dim(x)?;
        let (h, active) = self.root.eval_with_leaf(x);
        let near: Vec<usize> = self
            .leaves
            .iter()
            .enumerate()
            .filter(|(_, b)| (b.value(x) - h).abs() <= epsilon)
            .map(|(i, _)| i)
            .collect();
        debug_assert!(near.contains(&active));
        Ok(AlmostActiveSet {
            active,
            near,
            epsilon,
        })
    }
}

/// Reciprocal transform `B = 1/h` with its derivatives:
/// `grad B = -grad h / h^2`, `hess B = 2 grad h grad h^T / h^3 - hess h / h^2`.
pub fn reciprocal_barrier(
    h: f64,
    grad_h: &DVector<f64>,
    hess_h: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    if h < BARRIER_FLOOR {
        return Err(Error::BarrierFloor {
            leaf: "reciprocal transform".into(),
            h,
        });
    }
    let b = 1.0 / h;
    let grad_b = -grad_h / (h * h);
    let hess_b = grad_h * grad_h.transpose() * (2.0 / (h * h * h)) - hess_h / (h * h);
    Ok((b, grad_b, hess_b))
}
