//! Chunked backward and forward Euler time integration.
//!
//! Backward Euler groups `n_chunk` consecutive steps into one nonlinear
//! system in the increments `Δy_k = y_{i+k} − y_i`:
//!
//! ```text
//! R_k = Δy_k − Δy_{k−1} − h(y_i + Δy_k, t_{i+k}) Δt_{i+k},   Δy_0 ≡ 0
//! ```
//!
//! whose Jacobian is lower block-bidiagonal with diagonal blocks
//! `I − j_{i+k} Δt_{i+k}` and sub-diagonal blocks `−I`. Newton's method on
//! this system evaluates the model once per iteration for the whole chunk
//! and batch, and solves the linear update with any [`LinearSolver`].

use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::linalg::{BatchedChunkVector, BlockBidiagonalSystem, LinearSolver};
use crate::model::{jacobian_state, rate, rate_unchecked, JacobianStrategy, OdeModel};

/// Observation times, shape `(n_time + 1, n_batch)`, strictly increasing
/// along the time axis. Row 0 is the initial time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Array2<f64>,
}

impl TimeGrid {
    pub fn new(times: Array2<f64>) -> Result<Self> {
        let (rows, n_batch) = times.dim();
        if rows < 2 || n_batch == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs at least 2 times and 1 series, got shape {:?}",
                times.dim()
            )));
        }
        if !times.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument(
                "time grid contains non-finite values".into(),
            ));
        }
        for b in 0..n_batch {
            for i in 1..rows {
                if times[[i, b]] <= times[[i - 1, b]] {
                    return Err(Error::InvalidArgument(format!(
                        "time grid is not strictly increasing at step {i} of series {b}"
                    )));
                }
            }
        }
        Ok(Self { times })
    }

    /// `n_time` equal steps over `[0, t_max]`, identical for every series.
    pub fn uniform(t_max: f64, n_time: usize, n_batch: usize) -> Result<Self> {
        if n_time == 0 {
            return Err(Error::InvalidArgument("n_time must be at least 1".into()));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_max must be positive, got {t_max}"
            )));
        }
        let times = Array2::from_shape_fn((n_time + 1, n_batch), |(i, _)| {
            t_max * i as f64 / n_time as f64
        });
        Self::new(times)
    }

    pub fn n_time(&self) -> usize {
        self.times.nrows() - 1
    }

    pub fn n_batch(&self) -> usize {
        self.times.ncols()
    }

    pub fn times(&self) -> ArrayView2<'_, f64> {
        self.times.view()
    }

    /// Step sizes, shape `(n_time, n_batch)`; row `i` is `t_{i+1} − t_i`.
    pub fn dt(&self) -> Array2<f64> {
        let n = self.n_time();
        &self.times.slice(s![1.., ..]) - &self.times.slice(s![..n, ..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub tol_a: f64,
    pub tol_r: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol_a: 1e-8,
            tol_r: 1e-6,
            max_iter: 100,
        }
    }
}

impl NewtonSettings {
    pub fn new(tol_a: f64, tol_r: f64, max_iter: usize) -> Result<Self> {
        if !(tol_a > 0.0 && tol_r > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument(
                "Newton tolerances must be positive and max_iter at least 1".into(),
            ));
        }
        Ok(Self {
            tol_a,
            tol_r,
            max_iter,
        })
    }

    fn converged(&self, norm: f64, initial: f64) -> bool {
        initial == 0.0 || norm <= self.tol_a || norm / initial <= self.tol_r
    }
}

/// Deterministic work tallies. Every model call counts once, however many
/// `(chunk, batch)` points it covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkCounters {
    pub newton_iterations: usize,
    pub rate_evals: usize,
    pub jacobian_evals: usize,
    pub linear_solves: usize,
    pub chunks: usize,
}

impl std::ops::AddAssign for WorkCounters {
    fn add_assign(&mut self, o: Self) {
        self.newton_iterations += o.newton_iterations;
        self.rate_evals += o.rate_evals;
        self.jacobian_evals += o.jacobian_evals;
        self.linear_solves += o.linear_solves;
        self.chunks += o.chunks;
    }
}

/// Integrated states, shape `(n_time + 1, n_batch, n_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Array3<f64>,
    pub grid: TimeGrid,
    pub work: WorkCounters,
}

impl Trajectory {
    pub fn n_size(&self) -> usize {
        self.states.dim().2
    }
}

fn check_chunk<M: OdeModel>(
    model: &M,
    y_start: &ArrayView2<f64>,
    dy: &ArrayView3<f64>,
    times: &ArrayView2<f64>,
    dts: &ArrayView2<f64>,
) -> Result<()> {
    let (n_chunk, n_batch, n) = dy.dim();
    if y_start.dim() != (n_batch, n)
        || times.dim() != (n_chunk, n_batch)
        || dts.dim() != (n_chunk, n_batch)
    {
        return Err(Error::ShapeMismatch(format!(
            "chunk shapes disagree: y_start {:?}, increments {:?}, times {:?}, steps {:?}",
            y_start.dim(),
            dy.dim(),
            times.dim(),
            dts.dim()
        )));
    }
    if n != model.n_size() {
        return Err(Error::ShapeMismatch(format!(
            "state has {n} components, model expects {}",
            model.n_size()
        )));
    }
    Ok(())
}

fn absolute_states(y_start: &ArrayView2<f64>, dy: &ArrayView3<f64>) -> Array3<f64> {
    let mut y = dy.to_owned();
    y += y_start;
    y
}

fn residual_from_rates(
    dy: &ArrayView3<f64>,
    h: &Array3<f64>,
    dts: &ArrayView2<f64>,
) -> Array3<f64> {
    let (n_chunk, n_batch, _) = dy.dim();
    let mut r = dy.to_owned();
    for k in (1..n_chunk).rev() {
        let (mut cur, prev) = r.multi_slice_mut((s![k, .., ..], s![k - 1, .., ..]));
        cur -= &prev;
    }
    for k in 0..n_chunk {
        for b in 0..n_batch {
            let dt = dts[[k, b]];
            r.slice_mut(s![k, b, ..])
                .scaled_add(-dt, &h.slice(s![k, b, ..]));
        }
    }
    r
}

/// Chunk residual `R_k = Δy_k − Δy_{k−1} − h(y_start + Δy_k, t_k) Δt_k`.
///
/// `y_start` has shape `(n_batch, n_size)`; `chunk_times` and `chunk_dts`
/// have shape `(n_chunk, n_batch)` and refer to the end of each step.
pub fn chunk_residual<M: OdeModel>(
    model: &M,
    y_start: ArrayView2<f64>,
    dy: &BatchedChunkVector,
    chunk_times: ArrayView2<f64>,
    chunk_dts: ArrayView2<f64>,
) -> Result<BatchedChunkVector> {
    let dyv = dy.view();
    check_chunk(model, &y_start, &dyv, &chunk_times, &chunk_dts)?;
    let y = absolute_states(&y_start, &dyv);
    let h = rate(model, chunk_times, y.view())?;
    Ok(residual_from_rates(&dyv, &h, &chunk_dts).into())
}

fn system_from_jacobian(
    mut j: Array4<f64>,
    dts: &ArrayView2<f64>,
) -> Result<BlockBidiagonalSystem> {
    let (n_chunk, n_batch, n, _) = j.dim();
    for k in 0..n_chunk {
        for b in 0..n_batch {
            let dt = dts[[k, b]];
            let mut block = j.slice_mut(s![k, b, .., ..]);
            block.mapv_inplace(|v| -dt * v);
            for i in 0..n {
                block[[i, i]] += 1.0;
            }
        }
    }
    let mut off = Array4::zeros((n_chunk - 1, n_batch, n, n));
    for i in 0..n {
        off.slice_mut(s![.., .., i, i]).fill(-1.0);
    }
    BlockBidiagonalSystem::new(j, off)
}

/// Newton matrix of the chunk residual: diagonal blocks `I − j_k Δt_k`
/// evaluated at `y_start + Δy_k`, sub-diagonal blocks `−I`.
pub fn chunk_jacobian<M: OdeModel>(
    model: &M,
    y_start: ArrayView2<f64>,
    dy: &BatchedChunkVector,
    chunk_times: ArrayView2<f64>,
    chunk_dts: ArrayView2<f64>,
    strategy: JacobianStrategy,
) -> Result<BlockBidiagonalSystem> {
    let dyv = dy.view();
    check_chunk(model, &y_start, &dyv, &chunk_times, &chunk_dts)?;
    let y = absolute_states(&y_start, &dyv);
    let j = jacobian_state(model, chunk_times, y.view(), strategy)?;
    system_from_jacobian(j, &chunk_dts)
}

fn batch_norms(r: &Array3<f64>) -> Vec<f64> {
    r.axis_iter(Axis(1))
        .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

fn with_time_index(e: Error, index: usize) -> Error {
    match e {
        Error::NonFiniteOutput {
            what,
            time_index: None,
        } => Error::NonFiniteOutput {
            what,
            time_index: Some(index),
        },
        other => other,
    }
}

/// Solves one chunk by Newton's method from `Δy = 0`.
///
/// Converged when every batch entry satisfies `‖r‖ ≤ tol_a` or
/// `‖r‖/‖r₀‖ ≤ tol_r`, norms taken over the whole chunk. Returns the
/// increments and the number of Newton updates applied.
pub fn newton_solve_chunk<M: OdeModel>(
    model: &M,
    y_start: ArrayView2<f64>,
    chunk_times: ArrayView2<f64>,
    chunk_dts: ArrayView2<f64>,
    settings: &NewtonSettings,
    solver: LinearSolver,
    strategy: JacobianStrategy,
) -> Result<(BatchedChunkVector, usize)> {
    let mut work = WorkCounters::default();
    let dy = newton_chunk(
        model,
        y_start,
        chunk_times,
        chunk_dts,
        settings,
        solver,
        strategy,
        0,
        &mut work,
    )?;
    Ok((dy.into(), work.newton_iterations))
}

#[allow(clippy::too_many_arguments)]
fn newton_chunk<M: OdeModel>(
    model: &M,
    y_start: ArrayView2<f64>,
    times: ArrayView2<f64>,
    dts: ArrayView2<f64>,
    settings: &NewtonSettings,
    solver: LinearSolver,
    strategy: JacobianStrategy,
    first_index: usize,
    work: &mut WorkCounters,
) -> Result<Array3<f64>> {
    let (n_chunk, n_batch) = times.dim();
    let n = model.n_size();
    let mut dy = Array3::zeros((n_chunk, n_batch, n));
    check_chunk(model, &y_start, &dy.view(), &times, &dts)?;

    let evaluate =
        |dy: &Array3<f64>, work: &mut WorkCounters| -> Result<(Array3<f64>, Array3<f64>)> {
            let y = absolute_states(&y_start, &dy.view());
            let h = rate_unchecked(model, times, y.view())?;
            work.rate_evals += 1;
            let r = residual_from_rates(&dy.view(), &h, &dts);
            Ok((y, r))
        };

    let (mut y, mut r) = evaluate(&dy, work)?;
    let initial = batch_norms(&r);
    let mut iterations = 0;
    loop {
        let norms = batch_norms(&r);
        let failing = (0..n_batch)
            .filter(|&b| !norms[b].is_finite() || !settings.converged(norms[b], initial[b]))
            .max_by(|&a, &b| {
                norms[a]
                    .partial_cmp(&norms[b])
                    .unwrap_or(std::cmp::Ordering::Greater)
            });
        let Some(worst) = failing else {
            return Ok(dy);
        };
        if iterations == settings.max_iter || !norms[worst].is_finite() {
            return Err(Error::NewtonDivergence {
                time_index: first_index,
                batch: worst,
                residual: norms[worst],
                initial_residual: initial[worst],
                iterations,
            });
        }
        let j = jacobian_state(model, times, y.view(), strategy)
            .map_err(|e| with_time_index(e, first_index))?;
        work.jacobian_evals += 1;
        let system = system_from_jacobian(j, &dts)?;
        let delta = solver.solve(&system, &BatchedChunkVector::from(r))?;
        work.linear_solves += 1;
        dy -= delta.data();
        iterations += 1;
        work.newton_iterations += 1;
        (y, r) = evaluate(&dy, work)?;
    }
}

fn check_initial<M: OdeModel>(
    model: &M,
    y0: &ArrayView2<f64>,
    grid: &TimeGrid,
    n_chunk: usize,
) -> Result<()> {
    if y0.dim() != (grid.n_batch(), model.n_size()) {
        return Err(Error::ShapeMismatch(format!(
            "initial state has shape {:?}, expected {:?}",
            y0.dim(),
            (grid.n_batch(), model.n_size())
        )));
    }
    if n_chunk == 0 || n_chunk > grid.n_time() {
        return Err(Error::InvalidArgument(format!(
            "n_chunk must be in 1..={}, got {n_chunk}",
            grid.n_time()
        )));
    }
    Ok(())
}

/// Backward Euler over the whole grid, `n_chunk` steps at a time. A final
/// shorter chunk covers any remainder.
pub fn integrate_backward_euler<M: OdeModel>(
    model: &M,
    y0: ArrayView2<f64>,
    grid: &TimeGrid,
    n_chunk: usize,
    settings: &NewtonSettings,
    solver: LinearSolver,
    strategy: JacobianStrategy,
) -> Result<Trajectory> {
    check_initial(model, &y0, grid, n_chunk)?;
    let n_time = grid.n_time();
    let (n_batch, n) = y0.dim();
    let times = grid.times();
    let dt = grid.dt();
    let mut states = Array3::zeros((n_time + 1, n_batch, n));
    states.slice_mut(s![0, .., ..]).assign(&y0);
    let mut work = WorkCounters::default();

    let mut i = 0;
    while i < n_time {
        let k = n_chunk.min(n_time - i);
        let dy = {
            let y_start = states.slice(s![i, .., ..]);
            newton_chunk(
                model,
                y_start,
                times.slice(s![i + 1..i + 1 + k, ..]),
                dt.slice(s![i..i + k, ..]),
                settings,
                solver,
                strategy,
                i + 1,
                &mut work,
            )?
        };
        let (done, mut rest) = states.view_mut().split_at(Axis(0), i + 1);
        let y_start = done.slice(s![i, .., ..]);
        let mut block = rest.slice_mut(s![..k, .., ..]);
        block.assign(&dy);
        block += &y_start;
        work.chunks += 1;
        i += k;
    }
    Ok(Trajectory {
        states,
        grid: grid.clone(),
        work,
    })
}

/// Forward Euler, `y_{i+1} = y_i + h(y_i, t_i) Δt_{i+1}`.
///
/// The explicit recurrence leaves nothing to couple inside a chunk, so the
/// result is bitwise identical for every `n_chunk`; the chunking only shows
/// up in the work counters.
pub fn integrate_forward_euler<M: OdeModel>(
    model: &M,
    y0: ArrayView2<f64>,
    grid: &TimeGrid,
    n_chunk: usize,
) -> Result<Trajectory> {
    check_initial(model, &y0, grid, n_chunk)?;
    let n_time = grid.n_time();
    let (n_batch, n) = y0.dim();
    let times = grid.times();
    let dt = grid.dt();
    let mut states = Array3::zeros((n_time + 1, n_batch, n));
    states.slice_mut(s![0, .., ..]).assign(&y0);
    let mut work = WorkCounters::default();

    for i in 0..n_time {
        if i % n_chunk == 0 {
            work.chunks += 1;
        }
        let y = states.slice(s![i..i + 1, .., ..]);
        let h = rate(model, times.slice(s![i..i + 1, ..]), y).map_err(|e| with_time_index(e, i))?;
        work.rate_evals += 1;
        let mut next = states.slice(s![i, .., ..]).to_owned();
        for b in 0..n_batch {
            next.slice_mut(s![b, ..])
                .scaled_add(dt[[i, b]], &h.slice(s![0, b, ..]));
        }
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteOutput {
                what: "state",
                time_index: Some(i + 1),
            });
        }
        states.slice_mut(s![i + 1, .., ..]).assign(&next);
    }
    Ok(Trajectory {
        states,
        grid: grid.clone(),
        work,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::simple::{ConstantRate, LinearSystem, ScalarDecay};
    use crate::models::{build_chaboche, build_mass_damper_spring};

    fn scalar_y0(v: f64) -> Array2<f64> {
        Array2::from_elem((1, 1), v)
    }

    fn be<M: OdeModel>(m: &M, y0: &Array2<f64>, grid: &TimeGrid, n_chunk: usize) -> Trajectory {
        integrate_backward_euler(
            m,
            y0.view(),
            grid,
            n_chunk,
            &NewtonSettings::default(),
            LinearSolver::Thomas,
            JacobianStrategy::Analytic,
        )
        .unwrap()
    }

    fn max_abs_diff(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(array![[0.0], [0.0]]).is_err());
        assert!(TimeGrid::new(array![[0.0], [-1.0]]).is_err());
        assert!(TimeGrid::new(array![[0.0]]).is_err());
        assert!(TimeGrid::uniform(1.0, 0, 1).is_err());
        assert!(TimeGrid::uniform(0.0, 4, 1).is_err());
        let g = TimeGrid::uniform(2.0, 4, 3).unwrap();
        assert_eq!(g.n_time(), 4);
        assert_eq!(g.times()[[4, 2]], 2.0);
        assert!(g.dt().iter().all(|&d| d == 0.5));
    }

    #[test]
    fn residual_zero_for_stationary_system() {
        let m = LinearSystem::new(Array2::zeros((2, 2)));
        let dy = BatchedChunkVector::zeros(3, 2, 2);
        let t = Array2::ones((3, 2));
        let r = chunk_residual(&m, Array2::ones((2, 2)).view(), &dy, t.view(), t.view()).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn residual_vanishes_at_backward_euler_step() {
        let m = ScalarDecay::new(1.0);
        let dy = BatchedChunkVector::from(Array3::from_elem((1, 1, 1), -1.0 / 3.0));
        let t = Array2::from_elem((1, 1), 0.5);
        let r = chunk_residual(&m, scalar_y0(1.0).view(), &dy, t.view(), t.view()).unwrap();
        assert!(r.max_abs() < 1e-16);
    }

    #[test]
    fn residual_matches_stepwise_assembly() {
        let m = build_mass_damper_spring(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y_start = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1e-3..1e-3));
        let dy = Array3::from_shape_fn((5, 3, 4), |_| rng.gen_range(-1e-3..1e-3));
        let times =
            Array2::from_shape_fn((5, 3), |(k, b)| 0.01 * (k + 1) as f64 + 0.001 * b as f64);
        let dts = Array2::from_elem((5, 3), 0.01);
        let r = chunk_residual(
            &m,
            y_start.view(),
            &dy.clone().into(),
            times.view(),
            dts.view(),
        )
        .unwrap();
        for k in 0..5 {
            for b in 0..3 {
                let y: Vec<f64> = (0..4).map(|i| y_start[[b, i]] + dy[[k, b, i]]).collect();
                let mut h = vec![0.0; 4];
                m.rate_at(times[[k, b]], b, &y, m.params(), &mut h);
                for i in 0..4 {
                    let prev = if k > 0 { dy[[k - 1, b, i]] } else { 0.0 };
                    let expected = dy[[k, b, i]] - prev - h[i] * dts[[k, b]];
                    assert!(
                        (r.data()[[k, b, i]] - expected).abs() <= 1e-12 * (1.0 + expected.abs())
                    );
                }
            }
        }
    }

    #[test]
    fn jacobian_structure() {
        let zero = LinearSystem::new(Array2::zeros((2, 2)));
        let dy = BatchedChunkVector::zeros(3, 1, 2);
        let t = Array2::ones((3, 1));
        let sys = chunk_jacobian(
            &zero,
            Array2::zeros((1, 2)).view(),
            &dy,
            t.view(),
            t.view(),
            JacobianStrategy::Analytic,
        )
        .unwrap();
        assert_eq!(sys, BlockBidiagonalSystem::identity(3, 1, 2, -1.0).unwrap());

        let decay = ScalarDecay::new(1.0);
        let dy = BatchedChunkVector::zeros(2, 1, 1);
        let dt = Array2::from_elem((2, 1), 0.5);
        let sys = chunk_jacobian(
            &decay,
            scalar_y0(1.0).view(),
            &dy,
            dt.view(),
            dt.view(),
            JacobianStrategy::Analytic,
        )
        .unwrap();
        assert!(sys.diag().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn jacobian_directional_derivative() {
        let m = build_chaboche(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y_start = array![[4.0, 0.5, 0.1, -0.2], [-3.5, 0.2, 0.0, 0.3]];
        let dy = Array3::from_shape_fn((4, 2, 4), |_| rng.gen_range(-0.05..0.05));
        let v = Array3::from_shape_fn((4, 2, 4), |_| rng.gen_range(-1.0..1.0));
        let times = Array2::from_shape_fn((4, 2), |(k, _)| 0.1 * (k + 1) as f64);
        let dts = Array2::from_elem((4, 2), 0.1);
        let sys = chunk_jacobian(
            &m,
            y_start.view(),
            &dy.clone().into(),
            times.view(),
            dts.view(),
            JacobianStrategy::Analytic,
        )
        .unwrap();
        let mv = sys.matvec(&v.clone().into()).unwrap();
        let eps = 1e-6;
        let res = |x: Array3<f64>| {
            chunk_residual(&m, y_start.view(), &x.into(), times.view(), dts.view()).unwrap()
        };
        let rp = res(&dy + &(&v * eps));
        let rm = res(&dy - &(&v * eps));
        let fd = (rp.data() - rm.data()) / (2.0 * eps);
        let scale = 1.0 + mv.max_abs();
        assert!(max_abs_diff(&fd, mv.data()) <= 1e-5 * scale);
    }

    #[test]
    fn newton_is_exact_on_linear_systems() {
        let m = LinearSystem::random(3, 4);
        let y_start = Array2::from_shape_fn((2, 3), |(b, i)| 1.0 + b as f64 - 0.5 * i as f64);
        let times = Array2::from_shape_fn((6, 2), |(k, _)| 0.1 * (k + 1) as f64);
        let dts = Array2::from_elem((6, 2), 0.1);
        let settings = NewtonSettings::new(1e-14, 1e-14, 10).unwrap();
        let (dy, iters) = newton_solve_chunk(
            &m,
            y_start.view(),
            times.view(),
            dts.view(),
            &settings,
            LinearSolver::Pcr,
            JacobianStrategy::Analytic,
        )
        .unwrap();
        assert_eq!(iters, 1);
        let r = chunk_residual(&m, y_start.view(), &dy, times.view(), dts.view()).unwrap();
        assert!(r.max_abs() <= 1e-12);
    }

    #[test]
    fn newton_zero_iterations_for_stationary_system() {
        let m = ConstantRate::new(0.0);
        let t = Array2::from_elem((3, 1), 0.1);
        let (dy, iters) = newton_solve_chunk(
            &m,
            scalar_y0(2.0).view(),
            t.view(),
            t.view(),
            &NewtonSettings::default(),
            LinearSolver::Thomas,
            JacobianStrategy::Analytic,
        )
        .unwrap();
        assert_eq!(iters, 0);
        assert_eq!(dy.max_abs(), 0.0);
    }

    #[test]
    fn newton_divergence_is_reported() {
        let m = build_chaboche(1, 1).unwrap();
        let t = Array2::from_elem((4, 1), 0.5);
        let settings = NewtonSettings::new(1e-300, 1e-300, 2).unwrap();
        let err = newton_solve_chunk(
            &m,
            array![[30.0, 0.0, 0.0]].view(),
            t.view(),
            t.view(),
            &settings,
            LinearSolver::Thomas,
            JacobianStrategy::Analytic,
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::NewtonDivergence {
                    batch: 0,
                    iterations: 2,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn single_backward_step() {
        let traj = be(
            &ScalarDecay::new(1.0),
            &scalar_y0(1.0),
            &TimeGrid::uniform(1.0, 1, 1).unwrap(),
            1,
        );
        assert!((traj.states[[1, 0, 0]] - 0.5).abs() <= 1e-14);
    }

    #[test]
    fn stiff_decay_is_stable() {
        let grid = TimeGrid::uniform(20.0, 20, 1).unwrap();
        // a tiny absolute tolerance keeps Newton stepping once |y| drops below 1e-14
        let tight = NewtonSettings::new(1e-300, 1e-6, 100).unwrap();
        let traj = integrate_backward_euler(
            &ScalarDecay::new(1e6),
            scalar_y0(1.0).view(),
            &grid,
            1,
            &tight,
            LinearSolver::Thomas,
            JacobianStrategy::Analytic,
        )
        .unwrap();
        assert!((traj.states[[1, 0, 0]] - 1.0 / (1.0 + 1e6)).abs() < 1e-14);
        for i in 1..=20 {
            assert!(traj.states[[i, 0, 0]].abs() < traj.states[[i - 1, 0, 0]].abs());
        }
        let chunked = be(&ScalarDecay::new(1e6), &scalar_y0(1.0), &grid, 5);
        assert!(chunked
            .states
            .slice(s![1.., .., ..])
            .iter()
            .all(|v| v.abs() <= 1.01e-6));
    }

    #[test]
    fn partial_final_chunk_and_counters() {
        let m = LinearSystem::random(2, 1);
        let y0 = array![[1.0, -1.0]];
        let grid = TimeGrid::uniform(1.0, 10, 1).unwrap();
        let a = be(&m, &y0, &grid, 1);
        let b = be(&m, &y0, &grid, 4);
        assert_eq!(b.work.chunks, 3);
        assert_eq!(b.work.linear_solves, b.work.newton_iterations);
        assert_eq!(b.work.jacobian_evals, b.work.newton_iterations);
        assert_eq!(b.work.rate_evals, b.work.newton_iterations + b.work.chunks);
        assert!(max_abs_diff(&a.states, &b.states) <= 1e-12);
        assert!(integrate_forward_euler(&m, y0.view(), &grid, 11).is_err());
    }

    #[test]
    fn chunked_chaboche_matches_sequential() {
        let m = build_chaboche(2, 3).unwrap();
        let y0 = Array2::zeros((3, 4));
        let grid = TimeGrid::uniform(10.0, 60, 3).unwrap();
        let seq = be(&m, &y0, &grid, 1);
        for n_chunk in [10, 7, 60] {
            let chunked = be(&m, &y0, &grid, n_chunk);
            assert!(
                max_abs_diff(&seq.states, &chunked.states) <= 1e-6,
                "n_chunk {n_chunk}"
            );
        }
    }

    #[test]
    fn forward_euler_examples() {
        let grid = TimeGrid::uniform(3.0, 3, 1).unwrap();
        let traj = integrate_forward_euler(&ScalarDecay::new(1.0), scalar_y0(1.0).view(), &grid, 1)
            .unwrap();
        assert_eq!(traj.states[[1, 0, 0]], 0.0);
        let traj =
            integrate_forward_euler(&ConstantRate::new(0.25), scalar_y0(1.0).view(), &grid, 2)
                .unwrap();
        for i in 0..=3 {
            assert_eq!(traj.states[[i, 0, 0]], 1.0 + 0.25 * i as f64);
        }
        assert_eq!(traj.work.chunks, 2);
    }

    #[test]
    fn forward_euler_blows_up_on_stiff_decay() {
        let grid = TimeGrid::uniform(60.0, 60, 1).unwrap();
        let err = integrate_forward_euler(&ScalarDecay::new(1e6), scalar_y0(1.0).view(), &grid, 1)
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteOutput { time_index: Some(i), .. } if i <= 60));
    }

    #[test]
    fn forward_euler_is_chunk_invariant_bitwise() {
        let m = build_mass_damper_spring(2, 2).unwrap();
        let y0 = Array2::zeros((2, 4));
        let grid = TimeGrid::uniform(1e-3, 16, 2).unwrap();
        let a = integrate_forward_euler(&m, y0.view(), &grid, 1).unwrap();
        for n_chunk in [3, 16] {
            assert_eq!(
                a.states,
                integrate_forward_euler(&m, y0.view(), &grid, n_chunk)
                    .unwrap()
                    .states
            );
        }
    }

    #[test]
    fn first_order_convergence() {
        let m = ScalarDecay::new(1.0);
        let exact = (-1.0f64).exp();
        let errors = |forward: bool| -> Array1<f64> {
            [16, 32, 64, 128]
                .iter()
                .map(|&n| {
                    let grid = TimeGrid::uniform(1.0, n, 1).unwrap();
                    let t = if forward {
                        integrate_forward_euler(&m, scalar_y0(1.0).view(), &grid, 1).unwrap()
                    } else {
                        be(&m, &scalar_y0(1.0), &grid, 8)
                    };
                    (t.states[[n, 0, 0]] - exact).abs()
                })
                .collect()
        };
        for forward in [false, true] {
            let e = errors(forward);
            for w in e.as_slice().unwrap().windows(2) {
                let ratio = w[0] / w[1];
                assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
            }
        }
    }
}
