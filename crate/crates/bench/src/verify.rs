//! Property suites runnable from the command line.

use std::fmt;

use chunked_ode::adjoint::{gradient_adjoint, gradient_fd_oracle, FrobeniusLoss, Scheme};
use chunked_ode::integrate::{
    integrate_backward_euler, integrate_forward_euler, NewtonSettings, TimeGrid,
};
use chunked_ode::linalg::{
    power_of_two_partitions, solve_dense_oracle, solve_pcr_with_stats, BatchedChunkVector,
    BlockBidiagonalSystem, LinearSolver,
};
use chunked_ode::model::{jacobian_state, JacobianStrategy, OdeModel};
use chunked_ode::models::simple::ScalarDecay;
use chunked_ode::models::{BundledModel, Problem};
use clap::ValueEnum;
use ndarray::{array, s, Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Failures listed in full; the rest are only counted.
pub const MAX_REPORTED_FAILURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Solvers,
    Jacobians,
    Gradients,
    Convergence,
    All,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: usize,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, context: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(context());
        }
    }

    fn check_result<T>(
        &mut self,
        r: chunked_ode::Result<T>,
        context: impl FnOnce() -> String,
    ) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.check(false, || format!("{}: {e}", context()));
                None
            }
        }
    }

    fn merge(&mut self, other: VerifyReport) {
        self.checks += other.checks;
        self.failures.extend(other.failures);
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} checks, {} failed", self.checks, self.failures.len())?;
        for msg in self.failures.iter().take(MAX_REPORTED_FAILURES) {
            writeln!(f, "  FAIL {msg}")?;
        }
        if self.failures.len() > MAX_REPORTED_FAILURES {
            writeln!(
                f,
                "  ... {} more",
                self.failures.len() - MAX_REPORTED_FAILURES
            )?;
        }
        Ok(())
    }
}

pub fn verify(suite: Suite) -> VerifyReport {
    match suite {
        Suite::Solvers => verify_solvers(),
        Suite::Jacobians => verify_jacobians(),
        Suite::Gradients => verify_gradients(),
        Suite::Convergence => verify_convergence(),
        Suite::All => {
            let mut r = VerifyReport::default();
            for s in [
                Suite::Solvers,
                Suite::Jacobians,
                Suite::Gradients,
                Suite::Convergence,
            ] {
                r.merge(verify(s));
            }
            r
        }
    }
}

/// Random block-bidiagonal system with diagonally dominant blocks, and a
/// random right-hand side.
pub fn random_block_system(
    n_chunk: usize,
    n_batch: usize,
    n_size: usize,
    seed: u64,
) -> (BlockBidiagonalSystem, BatchedChunkVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diag = Array4::from_shape_fn((n_chunk, n_batch, n_size, n_size), |_| {
        rng.gen_range(-1.0..1.0)
    });
    for i in 0..n_size {
        diag.slice_mut(s![.., .., i, i])
            .mapv_inplace(|v| v + 2.0 * n_size as f64 + 1.0);
    }
    let offdiag = Array4::from_shape_fn((n_chunk - 1, n_batch, n_size, n_size), |_| {
        rng.gen_range(-1.0..1.0)
    });
    let rhs = Array3::from_shape_fn((n_chunk, n_batch, n_size), |_| rng.gen_range(-1.0..1.0));
    let system = BlockBidiagonalSystem::new(diag, offdiag).expect("shapes are consistent");
    (system, rhs.into())
}

/// `max |a − b| / max |b|`.
pub fn relative_difference(a: &BatchedChunkVector, b: &BatchedChunkVector) -> f64 {
    let diff = (a.data() - b.data())
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    diff / b.max_abs().max(f64::MIN_POSITIVE)
}

fn verify_solvers() -> VerifyReport {
    let mut r = VerifyReport::default();
    for n_chunk in 1..=33 {
        for (n_batch, n_size) in [(1, 1), (3, 5), (2, 3)] {
            let seed = (n_chunk * 100 + n_batch * 10 + n_size) as u64;
            let (sys, rhs) = random_block_system(n_chunk, n_batch, n_size, seed);
            let Some(dense) = r.check_result(solve_dense_oracle(&sys, &rhs), || {
                format!("dense n_chunk={n_chunk}")
            }) else {
                continue;
            };
            for solver in [
                LinearSolver::Thomas,
                LinearSolver::Pcr,
                LinearSolver::Hybrid { n_switch: 1 },
                LinearSolver::Hybrid { n_switch: 3 },
            ] {
                if let Some(x) = r.check_result(solver.solve(&sys, &rhs), || {
                    format!("{solver:?} n_chunk={n_chunk}")
                }) {
                    let d = relative_difference(&x, &dense);
                    r.check(d <= 1e-9, || format!("{solver:?} n_chunk={n_chunk} n_batch={n_batch} n_size={n_size}: relative difference {d:e}"));
                }
            }
        }
        let (sys, rhs) = random_block_system(n_chunk, 1, 2, n_chunk as u64);
        if let Some((_, stats)) = r.check_result(solve_pcr_with_stats(&sys, &rhs), || {
            format!("pcr n_chunk={n_chunk}")
        }) {
            let expected: usize = power_of_two_partitions(n_chunk)
                .iter()
                .map(|p| p.trailing_zeros() as usize)
                .sum();
            r.check(stats.sweeps == expected, || {
                format!(
                    "pcr n_chunk={n_chunk}: {} sweeps, expected {expected}",
                    stats.sweeps
                )
            });
        }
    }
    r
}

/// Random states away from the non-smooth parts of each model.
///
/// Chaboche samples keep the overstress at least 0.1 away from the yield
/// surface and `s = σ − ΣX` away from zero.
pub fn smooth_states(problem: Problem, n_unit: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.n_size(n_unit);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let y: Vec<f64> = match problem {
            Problem::Mds => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            Problem::Neuron => (0..n)
                .map(|k| {
                    if k % 4 == 0 {
                        rng.gen_range(-1.0..1.0)
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect(),
            Problem::Node => (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            Problem::Chaboche => {
                let mut y = vec![rng.gen_range(-8.0..8.0), rng.gen_range(0.0..3.0)];
                y.extend((2..n).map(|_| rng.gen_range(-1.0..1.0)));
                let s_val = y[0] - y[2..].iter().sum::<f64>();
                if s_val.abs() < 0.1 || (s_val.abs() - y[1] - 1.0).abs() < 0.1 {
                    continue;
                }
                y
            }
        };
        out.push(y);
    }
    out
}

fn block_inf_norm(j: ndarray::ArrayView2<f64>) -> f64 {
    j.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest `‖J_s − J_analytic‖∞ / (1 + ‖J_analytic‖∞)` over the given
/// states, for forward AD and finite differences.
pub fn jacobian_discrepancy(
    model: &BundledModel,
    states: &[Vec<f64>],
    t: f64,
) -> chunked_ode::Result<(f64, f64)> {
    let n_batch = model.n_batch().unwrap_or(1);
    let n = model.n_size();
    let ys = Array3::from_shape_fn((states.len(), n_batch, n), |(i, _, k)| states[i][k]);
    let ts = Array2::from_elem((states.len(), n_batch), t);
    let a = jacobian_state(model, ts.view(), ys.view(), JacobianStrategy::Analytic)?;
    let d = jacobian_state(model, ts.view(), ys.view(), JacobianStrategy::ForwardAd)?;
    let f = jacobian_state(
        model,
        ts.view(),
        ys.view(),
        JacobianStrategy::FiniteDifference,
    )?;
    let (mut worst_ad, mut worst_fd) = (0.0_f64, 0.0_f64);
    for i in 0..states.len() {
        for b in 0..n_batch {
            let ja = a.slice(s![i, b, .., ..]);
            let scale = 1.0 + block_inf_norm(ja);
            worst_ad =
                worst_ad.max(block_inf_norm((&d.slice(s![i, b, .., ..]) - &ja).view()) / scale);
            worst_fd =
                worst_fd.max(block_inf_norm((&f.slice(s![i, b, .., ..]) - &ja).view()) / scale);
        }
    }
    Ok((worst_ad, worst_fd))
}

fn verify_jacobians() -> VerifyReport {
    let mut r = VerifyReport::default();
    for problem in Problem::ALL {
        for n_unit in [1, 3] {
            let Some(model) =
                r.check_result(problem.build(n_unit, 2, 7), || format!("build {problem}"))
            else {
                continue;
            };
            let states = smooth_states(problem, n_unit, 20, 31 + n_unit as u64);
            for t in [0.0, 0.3, 0.77] {
                if let Some((ad, fd)) = r
                    .check_result(jacobian_discrepancy(&model, &states, t), || {
                        format!("{problem} jacobian")
                    })
                {
                    r.check(ad <= 1e-12, || {
                        format!("{problem} n_unit={n_unit} t={t}: forward AD differs by {ad:e}")
                    });
                    r.check(fd <= 1e-5, || {
                        format!(
                            "{problem} n_unit={n_unit} t={t}: finite differences differ by {fd:e}"
                        )
                    });
                }
            }
        }
    }
    r
}

/// Newton settings that converge to round-off, so that gradients compare
/// derivatives of the same discrete solution.
pub fn tight_newton() -> NewtonSettings {
    NewtonSettings::new(1e-13, 1e-13, 100).expect("valid settings")
}

/// `|a − f| ≤ 1e-4·(1 + |f|)`, and `|a − f| ≤ 1e-4·|f|` wherever `|f| > 1e-8`.
pub fn gradients_agree(adjoint: f64, fd: f64) -> bool {
    let err = (adjoint - fd).abs();
    err <= 1e-4 * (1.0 + fd.abs()) && (fd.abs() <= 1e-8 || err <= 1e-4 * fd.abs())
}

fn verify_gradients() -> VerifyReport {
    let mut r = VerifyReport::default();
    for problem in Problem::ALL {
        let Some(model) = r.check_result(problem.build(2, 3, 7), || format!("build {problem}"))
        else {
            continue;
        };
        let Some(grid) =
            r.check_result(TimeGrid::uniform(problem.t_max(), 32, 3), || "grid".into())
        else {
            continue;
        };
        let y0 = Array2::zeros((3, model.n_size()));
        for scheme in [Scheme::BackwardEuler, Scheme::ForwardEuler] {
            let adj = gradient_adjoint(
                &model,
                y0.view(),
                &grid,
                8,
                &FrobeniusLoss,
                scheme,
                &tight_newton(),
                LinearSolver::Pcr,
                JacobianStrategy::Analytic,
            );
            let fd = gradient_fd_oracle(
                &model,
                y0.view(),
                &grid,
                &FrobeniusLoss,
                scheme,
                &tight_newton(),
            );
            let (Some(adj), Some(fd)) = (
                r.check_result(adj, || format!("{problem} {scheme:?} adjoint")),
                r.check_result(fd, || format!("{problem} {scheme:?} finite differences")),
            ) else {
                continue;
            };
            for (q, (a, f)) in adj.grad.iter().zip(&fd).enumerate() {
                r.check(gradients_agree(*a, *f), || {
                    format!(
                        "{problem} {scheme:?} parameter {q}: adjoint {a}, finite differences {f}"
                    )
                });
            }
        }
    }
    r
}

/// Error of the final state against `e^{−T}` for `ẏ = −y` on `n` steps.
pub fn exponential_error(scheme: Scheme, n: usize) -> chunked_ode::Result<f64> {
    let model = ScalarDecay::new(1.0);
    let grid = TimeGrid::uniform(1.0, n, 1)?;
    let y0 = array![[1.0]];
    let traj = match scheme {
        Scheme::BackwardEuler => integrate_backward_euler(
            &model,
            y0.view(),
            &grid,
            n,
            &tight_newton(),
            LinearSolver::Thomas,
            JacobianStrategy::Analytic,
        )?,
        Scheme::ForwardEuler => integrate_forward_euler(&model, y0.view(), &grid, n)?,
    };
    Ok((traj.states[[n, 0, 0]] - (-1.0_f64).exp()).abs())
}

fn verify_convergence() -> VerifyReport {
    let mut r = VerifyReport::default();
    for (p, y0, dt) in [(1.0, 1.0, 1.0), (0.3, 2.0, 0.5), (40.0, -1.5, 0.01)] {
        let model = ScalarDecay::new(p);
        let y1 = TimeGrid::uniform(dt, 1, 1).and_then(|g| {
            integrate_backward_euler(
                &model,
                array![[y0]].view(),
                &g,
                1,
                &tight_newton(),
                LinearSolver::Thomas,
                JacobianStrategy::Analytic,
            )
        });
        if let Some(t) = r.check_result(y1, || format!("scalar decay p={p}")) {
            let exact: f64 = y0 / (1.0 + p * dt);
            let got = t.states[[1, 0, 0]];
            r.check((got - exact).abs() <= 1e-14 * exact.abs(), || {
                format!("scalar decay p={p}: {got} vs {exact}")
            });
        }
    }
    for scheme in [Scheme::BackwardEuler, Scheme::ForwardEuler] {
        for n in [32, 64, 128] {
            let errs = (
                exponential_error(scheme, n),
                exponential_error(scheme, 2 * n),
            );
            if let (Some(e1), Some(e2)) = (
                r.check_result(errs.0, || format!("{scheme:?}")),
                r.check_result(errs.1, || format!("{scheme:?}")),
            ) {
                let ratio = e1 / e2;
                r.check((1.8..=2.2).contains(&ratio), || {
                    format!("{scheme:?} n={n}: error ratio {ratio}")
                });
            }
        }
    }
    let stiff = ScalarDecay::new(1e6);
    let y0 = array![[1.0]];
    let stiff_run = |n_step: usize, settings: &NewtonSettings| {
        TimeGrid::uniform(n_step as f64, n_step, 1)
            .and_then(|g| {
                integrate_backward_euler(
                    &stiff,
                    y0.view(),
                    &g,
                    1,
                    settings,
                    LinearSolver::Thomas,
                    JacobianStrategy::Analytic,
                )
            })
            .map(|t| t.states.slice(s![.., 0, 0]).to_vec())
    };
    if let Some(y) = r.check_result(stiff_run(60, &NewtonSettings::default()), || {
        "stiff backward Euler".into()
    }) {
        let bounded =
            y.iter().all(|v| v.is_finite()) && y.windows(2).all(|w| w[1].abs() <= w[0].abs());
        r.check(bounded && y[60].abs() <= 1e-12, || {
            format!("stiff backward Euler did not decay: {:?}", &y[..4])
        });
    }
    let exact_newton = NewtonSettings::new(1e-300, 1e-6, 100).expect("valid settings");
    if let Some(y) = r.check_result(stiff_run(20, &exact_newton), || {
        "stiff backward Euler".into()
    }) {
        r.check(y.windows(2).all(|w| w[1].abs() < w[0].abs()), || {
            "stiff backward Euler is not strictly decreasing".into()
        });
    }
    let fe = TimeGrid::uniform(60.0, 60, 1)
        .and_then(|g| integrate_forward_euler(&stiff, y0.view(), &g, 1));
    r.check(
        matches!(fe, Err(chunked_ode::Error::NonFiniteOutput { time_index: Some(i), .. }) if i <= 60),
        || "stiff forward Euler stayed finite for 60 steps".into(),
    );
    for problem in Problem::ALL {
        let Some(model) = r.check_result(problem.build(3, 3, 7), || format!("build {problem}"))
        else {
            continue;
        };
        let Some(grid) =
            r.check_result(TimeGrid::uniform(problem.t_max(), 64, 3), || "grid".into())
        else {
            continue;
        };
        let y0 = Array2::zeros((3, model.n_size()));
        let mut reference = None;
        for n_chunk in [1, 2, 4, 8, 16, 64] {
            let t = integrate_backward_euler(
                &model,
                y0.view(),
                &grid,
                n_chunk,
                &NewtonSettings::default(),
                LinearSolver::Thomas,
                JacobianStrategy::Analytic,
            );
            let Some(t) = r.check_result(t, || format!("{problem} n_chunk={n_chunk}")) else {
                continue;
            };
            match &reference {
                None => reference = Some(t.states),
                Some(base) => {
                    let d = (&t.states - base)
                        .iter()
                        .fold(0.0_f64, |m, v| m.max(v.abs()));
                    r.check(d <= 1e-6, || {
                        format!("{problem} n_chunk={n_chunk}: differs from sequential by {d:e}")
                    });
                }
            }
        }
    }
    r
}
