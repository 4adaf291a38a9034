use chunked_ode::integrate::{integrate_backward_euler, NewtonSettings, TimeGrid};
use chunked_ode::linalg::LinearSolver;
use chunked_ode::model::{JacobianStrategy, OdeModel};
use chunked_ode::models::Problem;
use ndarray::{s, Array2};

#[test]
fn default_tables_give_finite_bounded_trajectories() {
    for problem in Problem::ALL {
        let n_unit = 3;
        let model = problem.build(n_unit, 4, 7).unwrap();
        let grid = TimeGrid::uniform(problem.t_max(), 200, 4).unwrap();
        let y0 = Array2::zeros((4, model.n_size()));
        let traj = integrate_backward_euler(
            &model,
            y0.view(),
            &grid,
            10,
            &NewtonSettings::default(),
            LinearSolver::Thomas,
            JacobianStrategy::Analytic,
        )
        .unwrap();
        assert!(traj.states.iter().all(|v| v.is_finite()), "{problem}");
        match problem {
            Problem::Mds => {
                let d = traj.states.slice(s![.., .., ..n_unit]);
                let peak = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                assert!(peak <= 1e3, "displacement peak {peak}");
                assert!(peak > 0.0);
            }
            Problem::Chaboche => {
                // K relaxes monotonically from 0 towards K_inf = 10
                let k = traj.states.slice(s![.., .., 1]);
                assert!(k.iter().all(|&v| (0.0..=10.0).contains(&v)));
                for b in 0..4 {
                    let col = k.column(b);
                    assert!(col.iter().zip(col.iter().skip(1)).all(|(a, c)| c >= a));
                }
            }
            _ => {}
        }
    }
}
