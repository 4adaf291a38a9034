//! Parameter gradients of a trajectory loss by the discrete adjoint method.
//!
//! For backward Euler, `y_i = y_{i−1} + h(y_i, t_i) Δt_i`, the adjoint march
//! from `λ_N = 0` is
//!
//! ```text
//! λ̂_i = λ_i + ∂L/∂y_i
//! (I − j_i Δt_i)ᵀ μ_i = λ̂_i,     j_i = ∂h/∂y at (y_i, t_i)
//! g  += μ_iᵀ ∂h/∂p(y_i, t_i) Δt_i
//! λ_{i−1} = μ_i
//! ```
//!
//! which is the exact gradient of the discrete scheme. A chunk of steps
//! `hi, hi−1, …, lo` couples into a lower block-bidiagonal system in
//! `Δλ_k = μ_{hi−k} − λ_hi`:
//!
//! ```text
//! (I − j Δt)ᵀ_k Δλ_k − Δλ_{k−1} = ∂L/∂y_{hi−k} + (j Δt)ᵀ_k λ_hi
//! ```
//!
//! which is solved with the same block solvers as the forward pass.
//!
//! For forward Euler, `y_i = y_{i−1} + h(y_{i−1}, t_{i−1}) Δt_i`, the march is
//! explicit:
//!
//! ```text
//! λ̂_i = λ_i + ∂L/∂y_i
//! g  += λ̂_iᵀ ∂h/∂p(y_{i−1}, t_{i−1}) Δt_i
//! λ_{i−1} = λ̂_i + j_{i−1}ᵀ λ̂_i Δt_i
//! ```

use std::ops::RangeInclusive;

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::integrate::{
    integrate_backward_euler, integrate_forward_euler, NewtonSettings, TimeGrid, Trajectory,
};
use crate::linalg::{BatchedChunkVector, BlockBidiagonalSystem, LinearSolver};
use crate::model::{jacobian_state, parameter_vjp, JacobianStrategy, OdeModel};

/// Largest parameter count [`gradient_fd_oracle`] accepts.
pub const FD_ORACLE_PARAM_LIMIT: usize = 500;

/// Relative parameter step of the finite-difference oracle.
pub const FD_ORACLE_REL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    BackwardEuler,
    ForwardEuler,
}

/// A scalar loss over the stored states, shape `(n_time + 1, n_batch, n_size)`.
pub trait LossSpec {
    /// Loss value and `∂L/∂y` shaped like `states`.
    fn evaluate(&self, states: ArrayView3<f64>) -> (f64, Array3<f64>);
}

/// Frobenius norm of every state after the initial one.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrobeniusLoss;

impl LossSpec for FrobeniusLoss {
    fn evaluate(&self, states: ArrayView3<f64>) -> (f64, Array3<f64>) {
        let observed = states.slice(s![1.., .., ..]);
        let value = observed.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut grad = Array3::zeros(states.dim());
        if value > 0.0 {
            grad.slice_mut(s![1.., .., ..]).assign(&(&observed / value));
        }
        (value, grad)
    }
}

/// `L = Σ w ⊙ y` with fixed weights shaped like the states.
#[derive(Debug, Clone)]
pub struct LinearLoss {
    pub weights: Array3<f64>,
}

impl LinearLoss {
    /// Sum of every component of the final state.
    pub fn final_state(n_time: usize, n_batch: usize, n_size: usize) -> Self {
        let mut weights = Array3::zeros((n_time + 1, n_batch, n_size));
        weights.slice_mut(s![n_time, .., ..]).fill(1.0);
        Self { weights }
    }
}

impl LossSpec for LinearLoss {
    fn evaluate(&self, states: ArrayView3<f64>) -> (f64, Array3<f64>) {
        assert_eq!(
            states.dim(),
            self.weights.dim(),
            "loss weights do not match the trajectory"
        );
        ((&states * &self.weights).sum(), self.weights.clone())
    }
}

/// Frobenius loss of a trajectory and its state gradient.
pub fn loss_frobenius(traj: &Trajectory) -> (f64, Array3<f64>) {
    FrobeniusLoss.evaluate(traj.states.view())
}

/// Running adjoint variable and gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    /// Shape `(n_batch, n_size)`.
    pub lambda: Array2<f64>,
    pub grad: Array1<f64>,
}

impl AdjointState {
    pub fn new(n_batch: usize, n_size: usize, n_param: usize) -> Self {
        Self {
            lambda: Array2::zeros((n_batch, n_size)),
            grad: Array1::zeros(n_param),
        }
    }
}

/// Loss value, gradient and the forward trajectory it was computed on.
#[derive(Debug, Clone)]
pub struct GradientResult {
    pub loss: f64,
    pub grad: Array1<f64>,
    pub trajectory: Trajectory,
}

fn transposed_system(j: &Array4<f64>, dts: &ArrayView2<f64>) -> Result<BlockBidiagonalSystem> {
    let (m, n_batch, n, _) = j.dim();
    let mut diag = Array4::zeros((m, n_batch, n, n));
    for k in 0..m {
        for b in 0..n_batch {
            let dt = dts[[k, b]];
            let jb = j.slice(s![k, b, .., ..]);
            let mut d = diag.slice_mut(s![k, b, .., ..]);
            d.assign(&(&jb.t() * -dt));
            for i in 0..n {
                d[[i, i]] += 1.0;
            }
        }
    }
    let mut off = Array4::zeros((m - 1, n_batch, n, n));
    for i in 0..n {
        off.slice_mut(s![.., .., i, i]).fill(-1.0);
    }
    BlockBidiagonalSystem::new(diag, off)
}

/// `out[b] = jᵀ[b] v[b] · dt[b]` for one step.
fn jt_times(j: ArrayView3<f64>, v: ArrayView2<f64>, dt: ArrayView1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(v.dim());
    for b in 0..v.nrows() {
        let r = j.slice(s![b, .., ..]).t().dot(&v.row(b)) * dt[b];
        out.row_mut(b).assign(&r);
    }
    out
}

fn check_step_shapes<M: OdeModel>(
    model: &M,
    lambda: &ArrayView2<f64>,
    dl_dy: &ArrayView2<f64>,
    y: &ArrayView2<f64>,
) -> Result<()> {
    let shape = (y.nrows(), model.n_size());
    if y.dim() != shape || lambda.dim() != shape || dl_dy.dim() != shape {
        return Err(Error::ShapeMismatch(format!(
            "adjoint step shapes disagree: state {:?}, lambda {:?}, loss gradient {:?}",
            y.dim(),
            lambda.dim(),
            dl_dy.dim()
        )));
    }
    Ok(())
}

/// One adjoint step `i → i−1`. Returns `λ_{i−1}` and the gradient increment.
///
/// `y_prev`, `y_i` have shape `(n_batch, n_size)`; `t_prev`, `t_i` have
/// length `n_batch`.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_step_sequential<M: OdeModel>(
    model: &M,
    scheme: Scheme,
    y_prev: ArrayView2<f64>,
    y_i: ArrayView2<f64>,
    t_prev: ArrayView1<f64>,
    t_i: ArrayView1<f64>,
    lambda_i: ArrayView2<f64>,
    dl_dy_i: ArrayView2<f64>,
    solver: LinearSolver,
    strategy: JacobianStrategy,
) -> Result<(Array2<f64>, Array1<f64>)> {
    check_step_shapes(model, &lambda_i, &dl_dy_i, &y_i)?;
    check_step_shapes(model, &lambda_i, &dl_dy_i, &y_prev)?;
    let dt = (&t_i - &t_prev).insert_axis(Axis(0));
    let lambda_hat = &lambda_i + &dl_dy_i;
    match scheme {
        Scheme::BackwardEuler => {
            let y = y_i.insert_axis(Axis(0));
            let t = t_i.insert_axis(Axis(0));
            let j = jacobian_state(model, t, y, strategy)?;
            let system = transposed_system(&j, &dt.view())?;
            let mu = solver.solve(
                &system,
                &BatchedChunkVector::from(lambda_hat.insert_axis(Axis(0))),
            )?;
            let w = mu.data() * &dt.view().insert_axis(Axis(2));
            let g = parameter_vjp(model, t, y, w.view())?;
            Ok((mu.into_inner().index_axis_move(Axis(0), 0), g))
        }
        Scheme::ForwardEuler => {
            let y = y_prev.insert_axis(Axis(0));
            let t = t_prev.insert_axis(Axis(0));
            let w = (&lambda_hat * &dt.row(0).insert_axis(Axis(1))).insert_axis(Axis(0));
            let g = parameter_vjp(model, t, y, w.view())?;
            let j = jacobian_state(model, t, y, strategy)?;
            let lambda_prev =
                &lambda_hat + &jt_times(j.index_axis(Axis(0), 0), lambda_hat.view(), dt.row(0));
            Ok((lambda_prev, g))
        }
    }
}

fn check_range(traj: &Trajectory, range: &RangeInclusive<usize>) -> Result<()> {
    if range.is_empty() || *range.start() == 0 || *range.end() > traj.grid.n_time() {
        return Err(Error::InvalidArgument(format!(
            "adjoint chunk {range:?} must lie within 1..={}",
            traj.grid.n_time()
        )));
    }
    Ok(())
}

/// Backward Euler adjoint over the steps `range` (state indices, processed
/// from the end), given `λ` after the chunk and the full `∂L/∂y`.
///
/// Returns `Δλ_k = μ_{hi−k} − λ_end` for `k = 0..len` and the gradient
/// increment. `λ` before the chunk is `λ_end + Δλ_{len−1}`. All Jacobians
/// and parameter products of the chunk are single batched calls.
pub fn adjoint_chunk_solve<M: OdeModel>(
    model: &M,
    traj: &Trajectory,
    range: RangeInclusive<usize>,
    lambda_end: ArrayView2<f64>,
    dl_dy: ArrayView3<f64>,
    solver: LinearSolver,
    strategy: JacobianStrategy,
) -> Result<(BatchedChunkVector, Array1<f64>)> {
    check_range(traj, &range)?;
    if dl_dy.dim() != traj.states.dim() {
        return Err(Error::ShapeMismatch(format!(
            "loss gradient has shape {:?}, trajectory {:?}",
            dl_dy.dim(),
            traj.states.dim()
        )));
    }
    let (lo, hi) = (*range.start(), *range.end());
    let rev = s![lo..=hi;-1, .., ..];
    let rev2 = s![lo..=hi;-1, ..];
    let y = traj.states.slice(rev);
    let t = traj.grid.times();
    let t = t.slice(rev2);
    let dt_all = traj.grid.dt();
    let dts = dt_all.slice(s![lo - 1..=hi - 1;-1, ..]);

    let j = jacobian_state(model, t, y, strategy)?;
    let system = transposed_system(&j, &dts)?;
    let mut rhs = dl_dy.slice(rev).to_owned();
    for k in 0..hi - lo + 1 {
        let jt = jt_times(j.index_axis(Axis(0), k), lambda_end, dts.row(k));
        let mut row = rhs.index_axis_mut(Axis(0), k);
        row += &jt;
    }
    let delta = solver.solve(&system, &BatchedChunkVector::from(rhs))?;
    let mut w = delta.data() + &lambda_end;
    w *= &dts.insert_axis(Axis(2));
    let g = parameter_vjp(model, t, y, w.view())?;
    Ok((delta, g))
}

/// Forward Euler adjoint over `range`, with one batched Jacobian and one
/// batched parameter product per chunk. Returns `λ` before the chunk.
fn forward_euler_chunk<M: OdeModel>(
    model: &M,
    traj: &Trajectory,
    range: RangeInclusive<usize>,
    lambda_end: ArrayView2<f64>,
    dl_dy: ArrayView3<f64>,
    strategy: JacobianStrategy,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let (lo, hi) = (*range.start(), *range.end());
    let y = traj.states.slice(s![lo - 1..=hi - 1;-1, .., ..]);
    let t = traj.grid.times();
    let t = t.slice(s![lo - 1..=hi - 1;-1, ..]);
    let dt_all = traj.grid.dt();
    let dts = dt_all.slice(s![lo - 1..=hi - 1;-1, ..]);
    let j = jacobian_state(model, t, y, strategy)?;
    let mut w = Array3::zeros(y.dim());
    let mut lambda = lambda_end.to_owned();
    for k in 0..hi - lo + 1 {
        let lambda_hat = &lambda + &dl_dy.index_axis(Axis(0), hi - k);
        w.index_axis_mut(Axis(0), k)
            .assign(&(&lambda_hat * &dts.row(k).insert_axis(Axis(1))));
        lambda = &lambda_hat + &jt_times(j.index_axis(Axis(0), k), lambda_hat.view(), dts.row(k));
    }
    let g = parameter_vjp(model, t, y, w.view())?;
    Ok((lambda, g))
}

/// Backward adjoint pass over a completed forward trajectory, `n_chunk`
/// steps at a time. Only one chunk of adjoint values is alive at once.
pub fn adjoint_backward<M: OdeModel>(
    model: &M,
    traj: &Trajectory,
    dl_dy: ArrayView3<f64>,
    n_chunk: usize,
    scheme: Scheme,
    solver: LinearSolver,
    strategy: JacobianStrategy,
) -> Result<Array1<f64>> {
    let n_time = traj.grid.n_time();
    if n_chunk == 0 || n_chunk > n_time {
        return Err(Error::InvalidArgument(format!(
            "n_chunk must be in 1..={n_time}, got {n_chunk}"
        )));
    }
    if dl_dy.dim() != traj.states.dim() {
        return Err(Error::ShapeMismatch(format!(
            "loss gradient has shape {:?}, trajectory {:?}",
            dl_dy.dim(),
            traj.states.dim()
        )));
    }
    let (_, n_batch, n) = traj.states.dim();
    let mut state = AdjointState::new(n_batch, n, model.params().len());
    let mut hi = n_time;
    while hi >= 1 {
        let lo = hi.saturating_sub(n_chunk - 1).max(1);
        match scheme {
            Scheme::BackwardEuler => {
                let (delta, g) = adjoint_chunk_solve(
                    model,
                    traj,
                    lo..=hi,
                    state.lambda.view(),
                    dl_dy,
                    solver,
                    strategy,
                )?;
                state.lambda += &delta.data().index_axis(Axis(0), hi - lo);
                state.grad += &g;
            }
            Scheme::ForwardEuler => {
                let (lambda, g) = forward_euler_chunk(
                    model,
                    traj,
                    lo..=hi,
                    state.lambda.view(),
                    dl_dy,
                    strategy,
                )?;
                state.lambda = lambda;
                state.grad += &g;
            }
        }
        hi = lo - 1;
    }
    if !state.grad.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteOutput {
            what: "gradient",
            time_index: None,
        });
    }
    Ok(state.grad)
}

#[allow(clippy::too_many_arguments)]
fn integrate<M: OdeModel>(
    model: &M,
    y0: ArrayView2<f64>,
    grid: &TimeGrid,
    n_chunk: usize,
    scheme: Scheme,
    settings: &NewtonSettings,
    solver: LinearSolver,
    strategy: JacobianStrategy,
) -> Result<Trajectory> {
    match scheme {
        Scheme::BackwardEuler => {
            integrate_backward_euler(model, y0, grid, n_chunk, settings, solver, strategy)
        }
        Scheme::ForwardEuler => integrate_forward_euler(model, y0, grid, n_chunk),
    }
}

/// Forward integration, loss, and adjoint gradient `dL/dp`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_adjoint<M: OdeModel, L: LossSpec + ?Sized>(
    model: &M,
    y0: ArrayView2<f64>,
    grid: &TimeGrid,
    n_chunk: usize,
    loss: &L,
    scheme: Scheme,
    settings: &NewtonSettings,
    solver: LinearSolver,
    strategy: JacobianStrategy,
) -> Result<GradientResult> {
    let trajectory = integrate(model, y0, grid, n_chunk, scheme, settings, solver, strategy)?;
    let (value, dl_dy) = loss.evaluate(trajectory.states.view());
    let grad = adjoint_backward(
        model,
        &trajectory,
        dl_dy.view(),
        n_chunk,
        scheme,
        solver,
        strategy,
    )?;
    Ok(GradientResult {
        loss: value,
        grad,
        trajectory,
    })
}

/// Fourth-order central finite differences of the loss over every
/// parameter, each forward run stepping sequentially.
///
/// With `h = 1e-3·|p_q|` (`1e-3` when `p_q = 0`),
///
/// ```text
/// dL/dp_q ≈ (8(L(p+h) − L(p−h)) − (L(p+2h) − L(p−2h))) / 12h
/// ```
///
/// The step scales with the parameter, so tiny physical constants keep
/// their sign, and the stencil's `O(h⁴)` truncation allows a step large
/// enough that round-off in `L` stays far below the gradient.
pub fn gradient_fd_oracle<M: OdeModel + Clone, L: LossSpec + ?Sized>(
    model: &M,
    y0: ArrayView2<f64>,
    grid: &TimeGrid,
    loss: &L,
    scheme: Scheme,
    settings: &NewtonSettings,
) -> Result<Array1<f64>> {
    let n_param = model.params().len();
    if n_param > FD_ORACLE_PARAM_LIMIT {
        return Err(Error::SizeGuard {
            what: "finite-difference gradient oracle",
            size: n_param,
            limit: FD_ORACLE_PARAM_LIMIT,
        });
    }
    let mut work = model.clone();
    let mut grad = Array1::zeros(n_param);
    let eval = |m: &M| -> Result<f64> {
        let traj = integrate(
            m,
            y0,
            grid,
            1,
            scheme,
            settings,
            LinearSolver::Thomas,
            JacobianStrategy::ForwardAd,
        )?;
        Ok(loss.evaluate(traj.states.view()).0)
    };
    for q in 0..n_param {
        let base = model.params()[q];
        let step = if base == 0.0 {
            FD_ORACLE_REL_STEP
        } else {
            FD_ORACLE_REL_STEP * base.abs()
        };
        let mut at = |k: f64| -> Result<f64> {
            work.params_mut()[q] = base + k * step;
            eval(&work)
        };
        let (up2, up1, down1, down2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
        work.params_mut()[q] = base;
        grad[q] = (8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * step);
    }
    Ok(grad)
}
