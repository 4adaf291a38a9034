use chunked_ode::adjoint::{gradient_adjoint, FrobeniusLoss, Scheme};
use chunked_ode::integrate::{integrate_backward_euler, NewtonSettings, TimeGrid};
use chunked_ode::linalg::LinearSolver;
use chunked_ode::model::{JacobianStrategy, OdeModel};
use chunked_ode::models::Problem;
use ndarray::Array2;

const N_TIME: usize = 64;
const CHUNKS: [usize; 6] = [1, 2, 4, 8, 16, 64];

/// Trajectories use the default Newton tolerances. Gradients are compared
/// with Newton converged to round-off, so that every chunk size
/// differentiates the same discrete solution.
#[test]
fn trajectories_and_gradients_do_not_depend_on_chunk_size() {
    let tight = NewtonSettings::new(1e-13, 1e-13, 100).unwrap();
    for problem in Problem::ALL {
        let model = problem.build(3, 3, 7).unwrap();
        let grid = TimeGrid::uniform(problem.t_max(), N_TIME, 3).unwrap();
        let y0 = Array2::zeros((3, model.n_size()));
        let trajectories: Vec<_> = CHUNKS
            .iter()
            .map(|&n_chunk| {
                integrate_backward_euler(
                    &model,
                    y0.view(),
                    &grid,
                    n_chunk,
                    &NewtonSettings::default(),
                    LinearSolver::Thomas,
                    JacobianStrategy::Analytic,
                )
                .unwrap()
                .states
            })
            .collect();
        let grads: Vec<_> = CHUNKS
            .iter()
            .map(|&n_chunk| {
                gradient_adjoint(
                    &model,
                    y0.view(),
                    &grid,
                    n_chunk,
                    &FrobeniusLoss,
                    Scheme::BackwardEuler,
                    &tight,
                    LinearSolver::Thomas,
                    JacobianStrategy::Analytic,
                )
                .unwrap()
                .grad
            })
            .collect();
        for i in 0..CHUNKS.len() {
            for j in i + 1..CHUNKS.len() {
                let traj = (&trajectories[i] - &trajectories[j])
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()));
                assert!(
                    traj <= 1e-6,
                    "{problem}: chunks {} vs {}: {traj:e}",
                    CHUNKS[i],
                    CHUNKS[j]
                );
                for (ga, gb) in grads[i].iter().zip(&grads[j]) {
                    assert!(
                        (ga - gb).abs() <= 1e-8 * ga.abs().max(gb.abs()),
                        "{problem}: gradient {ga} vs {gb}"
                    );
                }
            }
        }
    }
}

#[test]
fn solvers_give_the_same_trajectory() {
    let model = Problem::Chaboche.build(3, 3, 7).unwrap();
    let grid = TimeGrid::uniform(10.0, 48, 3).unwrap();
    let y0 = Array2::zeros((3, 5));
    let settings = NewtonSettings::default();
    let reference = integrate_backward_euler(
        &model,
        y0.view(),
        &grid,
        12,
        &settings,
        LinearSolver::Thomas,
        JacobianStrategy::Analytic,
    )
    .unwrap();
    for solver in [LinearSolver::Pcr, LinearSolver::Hybrid { n_switch: 2 }] {
        let t = integrate_backward_euler(
            &model,
            y0.view(),
            &grid,
            12,
            &settings,
            solver,
            JacobianStrategy::Analytic,
        )
        .unwrap();
        let diff = (&t.states - &reference.states)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(diff <= 1e-9, "{solver:?}: {diff:e}");
        assert_eq!(t.work.newton_iterations, reference.work.newton_iterations);
    }
}
