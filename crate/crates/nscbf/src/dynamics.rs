//! Control-affine Ito SDE models and fixed-step closed-loop simulation.
//!
//! Models are `dx = (f(x) + g(x) u) dt + sigma(x) dbeta` with an
//! `n`-dimensional state, `m`-dimensional input and `l`-dimensional
//! Brownian motion. Integration is explicit Euler-Maruyama under a
//! zero-order-hold controller, with the noise stream fully determined
//! by a seed so that every trajectory is reproducible.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Control-affine Ito SDE: drift `f`, input matrix `g`, diffusion `sigma`.
///
/// The diffusion is expected to evaluate to a diagonal matrix with strictly
/// positive diagonal (non-degenerate additive noise); this is checked in
/// debug builds at every integration step.
#[derive(Clone)]
pub struct SdeModel {
    state_dim: usize,
    input_dim: usize,
    noise_dim: usize,
    drift: VectorField,
    input_matrix: MatrixField,
    diffusion: MatrixField,
}

impl SdeModel {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        noise_dim: usize,
        drift: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        input_matrix: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        diffusion: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            state_dim,
            input_dim,
            noise_dim,
            drift: Arc::new(drift),
            input_matrix: Arc::new(input_matrix),
            diffusion: Arc::new(diffusion),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Evaluate the drift `f(x)`.
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    /// Evaluate the input matrix `g(x)` (`n x m`).
    pub fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.input_matrix)(x)
    }

    /// Evaluate the diffusion `sigma(x)` (`n x l`).
    pub fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.diffusion)(x)
    }
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("noise_dim", &self.noise_dim)
            .finish()
    }
}

/// Planar single integrator `dx = u dt + sigma I dbeta` with `n = m = l = 2`.
pub fn single_integrator(sigma: f64) -> Result<SdeModel> {
    if sigma <= 0.0 {
        return Err(Error::NonPositive {
            name: "sigma",
            value: sigma,
        });
    }
    Ok(SdeModel::new(
        2,
        2,
        2,
        |_x| DVector::zeros(2),
        |_x| DMatrix::identity(2, 2),
        move |_x| DMatrix::identity(2, 2) * sigma,
    ))
}

/// Block-diagonal stacking of several models into one joint model.
///
/// The joint state is the concatenation of the per-model states; drift,
/// input matrix and diffusion are evaluated per block.
pub fn joint_model(models: &[SdeModel]) -> Result<SdeModel> {
    if models.is_empty() {
        return Err(Error::EmptyModelList);
    }
    let models: Vec<SdeModel> = models.to_vec();
    let n: usize = models.iter().map(|m| m.state_dim()).sum();
    let m: usize = models.iter().map(|m| m.input_dim()).sum();
    let l: usize = models.iter().map(|m| m.noise_dim()).sum();

    let drift = {
        let models = models.clone();
        move |x: &DVector<f64>| {
            let mut out = DVector::zeros(n);
            let mut off = 0;
            for model in &models {
                let ni = model.state_dim();
                let xi = x.rows(off, ni).into_owned();
                out.rows_mut(off, ni).copy_from(&model.drift(&xi));
                off += ni;
            }
            out
        }
    };
    let input_matrix = {
        let models = models.clone();
        move |x: &DVector<f64>| {
            let mut out = DMatrix::zeros(n, m);
            let (mut row, mut col) = (0, 0);
            for model in &models {
                let (ni, mi) = (model.state_dim(), model.input_dim());
                let xi = x.rows(row, ni).into_owned();
                out.view_mut((row, col), (ni, mi))
                    .copy_from(&model.input_matrix(&xi));
                row += ni;
                col += mi;
            }
            out
        }
    };
    let diffusion = {
        let models = models.clone();
        move |x: &DVector<f64>| {
            let mut out = DMatrix::zeros(n, l);
            let (mut row, mut col) = (0, 0);
            for model in &models {
                let (ni, li) = (model.state_dim(), model.noise_dim());
                let xi = x.rows(row, ni).into_owned();
                out.view_mut((row, col), (ni, li))
                    .copy_from(&model.diffusion(&xi));
                row += ni;
                col += li;
            }
            out
        }
    };

    Ok(SdeModel::new(n, m, l, drift, input_matrix, diffusion))
}

/// One Euler-Maruyama step: `x + (f(x) + g(x) u) dt + sigma(x) sqrt(dt) w`.
///
/// `noise` holds standard-normal draws; passing zeros reduces the step to
/// explicit Euler on the drift.
pub fn euler_maruyama_step(
    model: &SdeModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    if dt <= 0.0 {
        return Err(Error::NonPositive {
            name: "dt",
            value: dt,
        });
    }
    check_dim("euler_maruyama_step state", model.state_dim(), x.len())?;
    check_dim("euler_maruyama_step input", model.input_dim(), u.len())?;
    check_dim("euler_maruyama_step noise", model.noise_dim(), noise.len())?;

    let drift = model.drift(x) + model.input_matrix(x) * u;
    let sigma = model.diffusion(x);
    debug_assert!(is_diagonal(&sigma), "diffusion must be diagonal");
    Ok(x + drift * dt + sigma * noise * dt.sqrt())
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Source of per-step standard-normal increments.
pub trait NoiseSource {
    fn fill_standard_normal(&mut self, out: &mut DVector<f64>);
}

/// Seeded ChaCha stream of standard normals. Distinct `(seed, stream)`
/// pairs yield independent sequences, which makes per-trial streams
/// order-independent across a batch.
pub struct SeededGaussian {
    rng: ChaCha8Rng,
}

impl SeededGaussian {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }
}

impl NoiseSource for SeededGaussian {
    fn fill_standard_normal(&mut self, out: &mut DVector<f64>) {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Forces every noise draw to zero; the simulation degenerates to
/// deterministic explicit Euler.
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill_standard_normal(&mut self, out: &mut DVector<f64>) {
        out.fill(0.0);
    }
}

/// Per-state observation supplied by an attached barrier tree.
#[derive(Debug, Clone)]
pub struct StepObservation {
    /// Composed barrier value `h(x)`.
    pub h: f64,
    /// Leaf selected by the tree at this state.
    pub active_leaf: usize,
    /// Almost-active leaf set (always contains `active_leaf`).
    pub near_leaves: Vec<usize>,
}

/// Hook evaluated once per sampled state to populate `h_values`,
/// `active_leaves` and `exit_events` of a [`Trajectory`].
pub type Observer<'a> = &'a (dyn Fn(&DVector<f64>) -> Result<StepObservation> + Sync);

/// Crossing from one smooth piece of the barrier to another.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitEvent {
    pub time: f64,
    pub from_leaf: usize,
    pub to_leaf: usize,
}

/// A sampled closed-loop path. `controls` is one element shorter than
/// `states`; `h_values`/`active_leaves` are empty unless an observer was
/// attached.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub h_values: Vec<f64>,
    pub active_leaves: Vec<Vec<usize>>,
    pub exit_events: Vec<ExitEvent>,
}

impl Trajectory {
    /// Number of sampled states.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least x0")
    }

    /// Minimum recorded barrier value, if an observer was attached.
    pub fn min_h(&self) -> Option<f64> {
        self.h_values.iter().copied().reduce(f64::min)
    }
}

/// Number of Euler-Maruyama steps for a horizon/step pair.
///
/// Matches `ceil(horizon / dt)` with a small slack so that exact multiples
/// (e.g. 0.01 / 0.001) do not round up through floating-point division.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Closed-loop simulation with a seeded Gaussian noise stream.
pub fn simulate(
    model: &SdeModel,
    controller: impl FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    simulate_with(
        model,
        controller,
        x0,
        horizon,
        dt,
        &mut SeededGaussian::new(seed),
        None,
    )
}

/// Closed-loop simulation with an explicit noise source and optional
/// barrier observer.
pub fn simulate_with(
    model: &SdeModel,
    mut controller: impl FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    noise: &mut dyn NoiseSource,
    observer: Option<Observer<'_>>,
) -> Result<Trajectory> {
    if dt <= 0.0 {
        return Err(Error::NonPositive {
            name: "dt",
            value: dt,
        });
    }
    if horizon <= dt {
        return Err(Error::NonPositive {
            name: "horizon - dt",
            value: horizon - dt,
        });
    }
    check_dim("simulate x0", model.state_dim(), x0.len())?;

    let steps = step_count(horizon, dt);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps),
        h_values: Vec::new(),
        active_leaves: Vec::new(),
        exit_events: Vec::new(),
    };

    let mut x = x0.clone();
    let mut noise_buf = DVector::zeros(model.noise_dim());
    let mut last_active: Option<usize> = None;

    let observe = |x: &DVector<f64>,
                       t: f64,
                       traj: &mut Trajectory,
                       last_active: &mut Option<usize>|
     -> Result<()> {
        if let Some(obs_fn) = observer {
            let obs = obs_fn(x)?;
            traj.h_values.push(obs.h);
            if let Some(prev) = *last_active {
                if prev != obs.active_leaf {
                    traj.exit_events.push(ExitEvent {
                        time: t,
                        from_leaf: prev,
                        to_leaf: obs.active_leaf,
                    });
                }
            }
            *last_active = Some(obs.active_leaf);
            traj.active_leaves.push(obs.near_leaves);
        }
        Ok(())
    };

    traj.times.push(0.0);
    traj.states.push(x.clone());
    observe(&x, 0.0, &mut traj, &mut last_active)?;

    for k in 0..steps {
        let t = k as f64 * dt;
        let u = controller(t, &x).map_err(|e| Error::ControllerFailure {
            step: k,
            source: Box::new(e),
        })?;
        check_dim("simulate control", model.input_dim(), u.len())?;

        noise.fill_standard_normal(&mut noise_buf);
        x = euler_maruyama_step(model, &x, &u, dt, &noise_buf)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "state",
                step: k + 1,
            });
        }

        let t_next = (k + 1) as f64 * dt;
        traj.controls.push(u);
        traj.times.push(t_next);
        traj.states.push(x.clone());
        observe(&x, t_next, &mut traj, &mut last_active)?;
    }

    Ok(traj)
}
