//! The two benchmark scenarios: a single agent under a Boolean
//! obstacle/coverage specification, and a multi-agent antipodal swap on
//! the unit circle.

use std::sync::Arc;

use nalgebra::{DVector, Vector2};

use crate::barrier::{BarrierNode, BarrierTree, SmoothBarrier};
use crate::dynamics::{joint_model, single_integrator, SdeModel};
use crate::error::{Error, Result};

/// Goal position of the single-agent scenario.
pub const GOAL: [f64; 2] = [1.8, 1.0];
/// Obstacle disk (keep out).
pub const OBSTACLE_CENTER: [f64; 2] = [1.2, 0.4];
pub const OBSTACLE_RADIUS: f64 = 0.6;
/// Network coverage disks (stay inside at least one).
pub const COVERAGE1_CENTER: [f64; 2] = [0.0, -0.2];
pub const COVERAGE1_RADIUS: f64 = 1.1;
pub const COVERAGE2_CENTER: [f64; 2] = [0.5, 1.8];
pub const COVERAGE2_RADIUS: f64 = 1.4;

/// Default noise level of both scenarios.
pub const DEFAULT_SIGMA: f64 = 0.025;

/// Time-and-state feedback reference controller.
pub type ReferenceController = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A ready-to-simulate benchmark: dynamics, safety tree, reference
/// controller, initial condition and per-agent goals.
#[derive(Clone)]
pub struct Scenario {
    pub model: SdeModel,
    pub tree: Arc<BarrierTree>,
    pub reference: ReferenceController,
    pub x0: DVector<f64>,
    pub horizon: f64,
    pub goals: Vec<DVector<f64>>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("state_dim", &self.model.state_dim())
            .field("leaves", &self.tree.leaf_count())
            .field("horizon", &self.horizon)
            .finish()
    }
}

/// `u(t, x) = gain (goal - x)`, block-wise on joint states.
pub fn proportional_controller(goal: DVector<f64>, gain: f64) -> ReferenceController {
    Arc::new(move |_t, x| (&goal - x) * gain)
}

/// Parameters of the single-agent scenario. The geometry is fixed; the
/// noise level, start, gain and horizon are configurable.
#[derive(Debug, Clone)]
pub struct SingleAgentParams {
    pub sigma: f64,
    pub x0: Vector2<f64>,
    pub kp: f64,
    pub horizon: f64,
}

impl Default for SingleAgentParams {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            x0: Vector2::new(-0.5, 0.0),
            kp: 1.0,
            horizon: 10.0,
        }
    }
}

/// Single agent steering towards [`GOAL`] under the Boolean specification
/// "outside the obstacle AND inside at least one coverage disk":
/// `h = min(out, max(in1, in2))`.
pub fn single_agent_boolean() -> Scenario {
    single_agent_boolean_with(&SingleAgentParams::default()).expect("default parameters are valid")
}

pub fn single_agent_boolean_with(params: &SingleAgentParams) -> Result<Scenario> {
    let model = single_integrator(params.sigma)?;
    if params.kp <= 0.0 {
        return Err(Error::NonPositive {
            name: "kp",
            value: params.kp,
        });
    }
    let tree = Arc::new(BarrierTree::new(BarrierNode::Min(vec![
        BarrierNode::leaf(
            0,
            SmoothBarrier::KeepOutDisk {
                center: Vector2::from(OBSTACLE_CENTER),
                radius: OBSTACLE_RADIUS,
            },
        ),
        BarrierNode::Max(vec![
            BarrierNode::leaf(
                1,
                SmoothBarrier::KeepInDisk {
                    center: Vector2::from(COVERAGE1_CENTER),
                    radius: COVERAGE1_RADIUS,
                },
            ),
            BarrierNode::leaf(
                2,
                SmoothBarrier::KeepInDisk {
                    center: Vector2::from(COVERAGE2_CENTER),
                    radius: COVERAGE2_RADIUS,
                },
            ),
        ]),
    ]))?);

    let x0 = DVector::from_vec(vec![params.x0.x, params.x0.y]);
    let h0 = tree.eval(&x0)?;
    if h0 <= 0.0 {
        return Err(Error::UnsafeStart { h: h0 });
    }
    let goal = DVector::from_vec(GOAL.to_vec());
    Ok(Scenario {
        model,
        tree,
        reference: proportional_controller(goal.clone(), params.kp),
        x0,
        horizon: params.horizon,
        goals: vec![goal],
    })
}

/// Parameters of the swap scenario.
#[derive(Debug, Clone)]
pub struct SwapParams {
    pub n_agents: usize,
    pub collision_radius: f64,
    pub sigma: f64,
    pub kp: f64,
    pub horizon: f64,
}

impl Default for SwapParams {
    fn default() -> Self {
        Self {
            n_agents: 6,
            collision_radius: 0.1,
            sigma: DEFAULT_SIGMA,
            // Gain 2 settles each agent well inside the goal tolerance by
            // the end of the horizon despite the persistent noise; see
            // the README notes on scenario defaults.
            kp: 2.0,
            horizon: 10.0,
        }
    }
}

/// `n_agents` integrators spread over the unit circle, each steering to
/// the antipode of its start while keeping every pairwise distance above
/// `2 * collision_radius`: `h = min over i < j of (|x_i - x_j| - 2r)`.
pub fn multi_agent_swap(n_agents: usize, collision_radius: f64) -> Result<Scenario> {
    multi_agent_swap_with(&SwapParams {
        n_agents,
        collision_radius,
        ..SwapParams::default()
    })
}

pub fn multi_agent_swap_with(params: &SwapParams) -> Result<Scenario> {
    let n = params.n_agents;
    if n < 2 {
        return Err(Error::NonPositive {
            name: "n_agents (must be >= 2)",
            value: n as f64,
        });
    }
    if params.collision_radius <= 0.0 {
        return Err(Error::NonPositive {
            name: "collision_radius",
            value: params.collision_radius,
        });
    }
    if params.kp <= 0.0 {
        return Err(Error::NonPositive {
            name: "kp",
            value: params.kp,
        });
    }

    let agents: Vec<SdeModel> = (0..n)
        .map(|_| single_integrator(params.sigma))
        .collect::<Result<_>>()?;
    let model = joint_model(&agents)?;

    let starts: Vec<Vector2<f64>> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Vector2::new(theta.cos(), theta.sin())
        })
        .collect();

    // Reject initial collisions before building anything else.
    let required = 2.0 * params.collision_radius;
    for i in 0..n {
        for j in i + 1..n {
            let d = (starts[i] - starts[j]).norm();
            if d <= required {
                return Err(Error::InitialCollision {
                    i,
                    j,
                    distance: d,
                    required,
                });
            }
        }
    }

    let mut leaves = Vec::new();
    let mut index = 0;
    for i in 0..n {
        for j in i + 1..n {
            leaves.push(BarrierNode::leaf(
                index,
                SmoothBarrier::PairwiseSeparation {
                    agent_i: i,
                    agent_j: j,
                    min_distance: required,
                    per_agent_dim: 2,
                },
            ));
            index += 1;
        }
    }
    let tree = Arc::new(BarrierTree::new(BarrierNode::Min(leaves))?);

    let mut x0 = DVector::zeros(2 * n);
    let mut joint_goal = DVector::zeros(2 * n);
    let mut goals = Vec::with_capacity(n);
    for (k, s) in starts.iter().enumerate() {
        x0.rows_mut(2 * k, 2).copy_from(s);
        let g = -s;
        joint_goal.rows_mut(2 * k, 2).copy_from(&g);
        goals.push(DVector::from_vec(vec![g.x, g.y]));
    }

    let h0 = tree.eval(&x0)?;
    debug_assert!(h0 > 0.0);

    Ok(Scenario {
        model,
        tree,
        reference: proportional_controller(joint_goal, params.kp),
        x0,
        horizon: params.horizon,
        goals,
    })
}
