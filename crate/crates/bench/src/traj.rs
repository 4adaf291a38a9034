//! Long-format trajectory dumps.

use std::io::Write;

use chunked_ode::integrate::Trajectory;

use crate::config::TrialConfig;
use crate::error::Result;
use crate::trial::{integrate, setup};

pub const TRAJECTORY_HEADER: [&str; 4] = ["time", "batch", "component", "value"];

/// Integrates `config` once, without timing or gradients.
pub fn trajectory(config: &TrialConfig) -> Result<Trajectory> {
    let (model, grid, y0) = setup(config)?;
    Ok(integrate(config, &model, &grid, &y0)?)
}

/// Writes every stored state as `time,batch,component,value` rows, time
/// index slowest and component fastest.
pub fn dump_trajectory<W: Write>(config: &TrialConfig, out: W) -> Result<()> {
    let traj = trajectory(config)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    let times = traj.grid.times();
    for ((i, b, k), v) in traj.states.indexed_iter() {
        w.write_record([
            format!("{:?}", times[[i, b]]),
            b.to_string(),
            k.to_string(),
            format!("{v:?}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
