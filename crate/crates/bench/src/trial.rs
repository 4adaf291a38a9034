//! Single timed trials and their CSV rows.

use std::fmt;
use std::time::Instant;

use chunked_ode::adjoint::Scheme;
use chunked_ode::adjoint::{adjoint_backward, gradient_fd_oracle, loss_frobenius};
use chunked_ode::integrate::{
    integrate_backward_euler, integrate_forward_euler, NewtonSettings, TimeGrid, Trajectory,
    WorkCounters,
};
use chunked_ode::model::OdeModel;
use chunked_ode::models::BundledModel;
use ndarray::Array2;

use crate::config::{Gradient, TrialConfig};
use crate::error::Result;

/// Column names of every results CSV, in order.
pub const CSV_HEADER: [&str; 21] = [
    "problem",
    "n_unit",
    "n_size",
    "n_batch",
    "n_time",
    "n_chunk",
    "jacobian",
    "gradient",
    "solver",
    "integration",
    "repeat",
    "forward_s",
    "backward_s",
    "total_s",
    "loss",
    "grad_norm",
    "newton_iterations",
    "rate_evals",
    "jacobian_evals",
    "linear_solves",
    "status",
];

/// Columns holding wall times.
pub const TIMING_COLUMNS: [&str; 3] = ["forward_s", "backward_s", "total_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repeat {
    Index(usize),
    Mean,
}

impl fmt::Display for Repeat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Repeat::Index(i) => write!(f, "{i}"),
            Repeat::Mean => f.write_str("mean"),
        }
    }
}

/// Measured outcome of one repeat, or the mean over all repeats.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub config: TrialConfig,
    pub repeat: Repeat,
    pub forward_seconds: f64,
    pub backward_seconds: f64,
    pub total_seconds: f64,
    /// Frobenius loss of the trajectory.
    pub loss_value: f64,
    /// Euclidean norm of `dL/dp`; NaN without a gradient phase.
    pub grad_norm: f64,
    /// Work of the forward pass.
    pub work: WorkCounters,
    /// `ok`, or a description of the failure.
    pub status: String,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// A row for a trial that could not run at all.
    pub fn failed(config: &TrialConfig, status: String) -> Self {
        Self {
            config: config.clone(),
            repeat: Repeat::Mean,
            forward_seconds: f64::NAN,
            backward_seconds: f64::NAN,
            total_seconds: f64::NAN,
            loss_value: f64::NAN,
            grad_norm: f64::NAN,
            work: WorkCounters::default(),
            status,
        }
    }

    /// Values in [`CSV_HEADER`] order. Floats use the shortest text that
    /// parses back to the same value.
    pub fn csv_row(&self) -> Vec<String> {
        let c = &self.config;
        let w = &self.work;
        vec![
            c.problem.to_string(),
            c.n_unit.to_string(),
            c.n_size().to_string(),
            c.n_batch.to_string(),
            c.n_time.to_string(),
            c.n_chunk.to_string(),
            c.jacobian.to_string(),
            c.gradient.to_string(),
            c.solver.to_string(),
            c.integration.to_string(),
            self.repeat.to_string(),
            format!("{:?}", self.forward_seconds),
            format!("{:?}", self.backward_seconds),
            format!("{:?}", self.total_seconds),
            format!("{:?}", self.loss_value),
            format!("{:?}", self.grad_norm),
            w.newton_iterations.to_string(),
            w.rate_evals.to_string(),
            w.jacobian_evals.to_string(),
            w.linear_solves.to_string(),
            self.status.clone(),
        ]
    }
}

struct Measurement {
    forward_seconds: f64,
    backward_seconds: f64,
    loss: f64,
    grad_norm: f64,
    work: WorkCounters,
}

/// The model, grid and zero initial state described by `config`.
pub fn setup(config: &TrialConfig) -> Result<(BundledModel, TimeGrid, Array2<f64>)> {
    config.validate()?;
    let model = config
        .problem
        .build(config.n_unit, config.n_batch, config.seed)?;
    let grid = TimeGrid::uniform(config.t_max(), config.n_time, config.n_batch)?;
    let y0 = Array2::zeros((config.n_batch, model.n_size()));
    Ok((model, grid, y0))
}

/// Forward integration under the configured scheme.
pub fn integrate(
    config: &TrialConfig,
    model: &BundledModel,
    grid: &TimeGrid,
    y0: &Array2<f64>,
) -> chunked_ode::Result<Trajectory> {
    match config.scheme() {
        Scheme::BackwardEuler => integrate_backward_euler(
            model,
            y0.view(),
            grid,
            config.n_chunk,
            &NewtonSettings::default(),
            config.linear_solver(),
            config.strategy(),
        ),
        Scheme::ForwardEuler => integrate_forward_euler(model, y0.view(), grid, config.n_chunk),
    }
}

fn measure(
    config: &TrialConfig,
    model: &BundledModel,
    grid: &TimeGrid,
    y0: &Array2<f64>,
) -> chunked_ode::Result<Measurement> {
    let start = Instant::now();
    let traj = integrate(config, model, grid, y0)?;
    let (loss, dl_dy) = loss_frobenius(&traj);
    let forward_seconds = start.elapsed().as_secs_f64();
    if !loss.is_finite() {
        return Err(chunked_ode::Error::NonFiniteOutput {
            what: "loss",
            time_index: None,
        });
    }

    let start = Instant::now();
    let grad = match config.gradient {
        Gradient::None => None,
        Gradient::Adjoint => Some(adjoint_backward(
            model,
            &traj,
            dl_dy.view(),
            config.n_chunk,
            config.scheme(),
            config.linear_solver(),
            config.strategy(),
        )?),
        Gradient::FdOracle => Some(gradient_fd_oracle(
            model,
            y0.view(),
            grid,
            &chunked_ode::adjoint::FrobeniusLoss,
            config.scheme(),
            &NewtonSettings::default(),
        )?),
    };
    let backward_seconds = if grad.is_some() {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let grad_norm = grad.map_or(f64::NAN, |g| g.dot(&g).sqrt());
    Ok(Measurement {
        forward_seconds,
        backward_seconds,
        loss,
        grad_norm,
        work: traj.work,
    })
}

/// Runs one unmeasured warm-up and `config.repeats` measured repeats.
///
/// Returns one row per repeat followed by the `mean` row. Numerical
/// failures end up in `status`; only an invalid configuration is an error.
pub fn run_trial(config: &TrialConfig) -> Result<Vec<TrialRecord>> {
    let (model, grid, y0) = setup(config)?;
    let _ = measure(config, &model, &grid, &y0);

    let mut rows = Vec::with_capacity(config.repeats + 1);
    for i in 0..config.repeats {
        let row = match measure(config, &model, &grid, &y0) {
            Ok(m) => TrialRecord {
                config: config.clone(),
                repeat: Repeat::Index(i),
                forward_seconds: m.forward_seconds,
                backward_seconds: m.backward_seconds,
                total_seconds: m.forward_seconds + m.backward_seconds,
                loss_value: m.loss,
                grad_norm: m.grad_norm,
                work: m.work,
                status: "ok".into(),
            },
            Err(e) => TrialRecord {
                repeat: Repeat::Index(i),
                ..TrialRecord::failed(config, format!("error: {e}"))
            },
        };
        rows.push(row);
    }
    rows.push(mean_row(config, &rows));
    Ok(rows)
}

fn mean_row(config: &TrialConfig, rows: &[TrialRecord]) -> TrialRecord {
    let ok: Vec<_> = rows.iter().filter(|r| r.is_ok()).collect();
    let Some(last) = ok.last() else {
        return TrialRecord::failed(config, rows[0].status.clone());
    };
    let mean = |f: fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64;
    let status = rows
        .iter()
        .find(|r| !r.is_ok())
        .map_or_else(|| "ok".to_string(), |r| r.status.clone());
    TrialRecord {
        config: config.clone(),
        repeat: Repeat::Mean,
        forward_seconds: mean(|r| r.forward_seconds),
        backward_seconds: mean(|r| r.backward_seconds),
        total_seconds: mean(|r| r.total_seconds),
        loss_value: last.loss_value,
        grad_norm: last.grad_norm,
        work: last.work,
        status,
    }
}

/// Writes the header and `rows` as CSV.
pub fn write_records<W: std::io::Write>(out: W, rows: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}
