//! The four benchmark systems plus a handful of small reference models.
//!
//! Every bundled model starts from the zero state and ships an analytic
//! state Jacobian. Forcing data that varies across the batch (periods,
//! amplitudes, strain-rate amplitudes) is fixed at construction and is not
//! part of the differentiable parameter vector.

use std::fmt;
use std::str::FromStr;

use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::model::{OdeModel, ParamSegment};

mod chaboche;
mod mds;
mod neural_ode;
mod neuron;
pub mod simple;

pub use chaboche::{build_chaboche, Chaboche, ChabocheParams};
pub use mds::{build_mass_damper_spring, MassDamperSpring, MdsParams};
pub use neural_ode::{build_neural_ode, NeuralOde, NeuralOdeParams, DEFAULT_SEED};
pub use neuron::{build_neuron, Neuron, NeuronParams};

/// Inclusive, evenly spaced range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinspaceSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl LinspaceSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.n)
    }
}

/// `n` equally spaced values from `lo` to `hi`, both endpoints included
/// exactly. `n = 1` yields `[lo]`; `n = 0` yields an empty vector.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
            v[n - 1] = hi;
            v
        }
    }
}

#[inline]
pub(crate) fn sine_forcing(amplitude: f64, period: f64, t: f64) -> f64 {
    amplitude * (2.0 * std::f64::consts::PI * t / period).sin()
}

pub(crate) fn require_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite"
        )))
    }
}

pub(crate) fn require_len(name: &str, values: &[f64], len: usize) -> Result<()> {
    if values.len() == len {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} has length {}, expected {len}",
            values.len()
        )))
    }
}

pub(crate) fn require_units(n_unit: usize, n_batch: usize) -> Result<()> {
    if n_unit == 0 || n_batch == 0 {
        return Err(Error::InvalidArgument(
            "n_unit and n_batch must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Which benchmark system to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    Mds,
    Neuron,
    Chaboche,
    Node,
}

impl Problem {
    pub const ALL: [Problem; 4] = [
        Problem::Mds,
        Problem::Neuron,
        Problem::Chaboche,
        Problem::Node,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Mds => "mds",
            Problem::Neuron => "neuron",
            Problem::Chaboche => "chaboche",
            Problem::Node => "node",
        }
    }

    /// Default end time of the integration window.
    pub fn t_max(self) -> f64 {
        match self {
            Problem::Mds | Problem::Node => 1.0,
            Problem::Neuron | Problem::Chaboche => 10.0,
        }
    }

    pub fn n_size(self, n_unit: usize) -> usize {
        match self {
            Problem::Mds => 2 * n_unit,
            Problem::Neuron => 4 * n_unit,
            Problem::Chaboche => 2 + n_unit,
            Problem::Node => n_unit,
        }
    }

    /// Builds the model with its default parameter tables. `seed` only
    /// affects the neural ODE weights.
    pub fn build(self, n_unit: usize, n_batch: usize, seed: u64) -> Result<BundledModel> {
        Ok(match self {
            Problem::Mds => BundledModel::Mds(build_mass_damper_spring(n_unit, n_batch)?),
            Problem::Neuron => BundledModel::Neuron(build_neuron(n_unit, n_batch)?),
            Problem::Chaboche => BundledModel::Chaboche(build_chaboche(n_unit, n_batch)?),
            Problem::Node => BundledModel::Node(build_neural_ode(n_unit, n_batch, seed)?),
        })
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown problem '{s}'")))
    }
}

/// Any of the four benchmark systems behind one type.
#[derive(Debug, Clone)]
pub enum BundledModel {
    Mds(MassDamperSpring),
    Neuron(Neuron),
    Chaboche(Chaboche),
    Node(NeuralOde),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            BundledModel::Mds($m) => $body,
            BundledModel::Neuron($m) => $body,
            BundledModel::Chaboche($m) => $body,
            BundledModel::Node($m) => $body,
        }
    };
}

impl BundledModel {
    pub fn problem(&self) -> Problem {
        match self {
            BundledModel::Mds(_) => Problem::Mds,
            BundledModel::Neuron(_) => Problem::Neuron,
            BundledModel::Chaboche(_) => Problem::Chaboche,
            BundledModel::Node(_) => Problem::Node,
        }
    }
}

impl OdeModel for BundledModel {
    fn n_size(&self) -> usize {
        dispatch!(self, m => m.n_size())
    }
    fn n_batch(&self) -> Option<usize> {
        dispatch!(self, m => m.n_batch())
    }
    fn params(&self) -> &[f64] {
        dispatch!(self, m => m.params())
    }
    fn params_mut(&mut self) -> &mut [f64] {
        dispatch!(self, m => m.params_mut())
    }
    fn param_segments(&self) -> Vec<ParamSegment> {
        dispatch!(self, m => m.param_segments())
    }
    fn rate_at<S: Scalar>(&self, t: f64, batch: usize, y: &[S], p: &[S], out: &mut [S]) {
        dispatch!(self, m => m.rate_at(t, batch, y, p, out))
    }
    fn has_analytic_jacobian(&self) -> bool {
        dispatch!(self, m => m.has_analytic_jacobian())
    }
    fn jacobian_at(&self, t: f64, batch: usize, y: &[f64], jac: &mut [f64]) {
        dispatch!(self, m => m.jacobian_at(t, batch, y, jac))
    }
    fn has_analytic_param_vjp(&self) -> bool {
        dispatch!(self, m => m.has_analytic_param_vjp())
    }
    fn param_vjp_at(&self, t: f64, batch: usize, y: &[f64], w: &[f64], grad: &mut [f64]) {
        dispatch!(self, m => m.param_vjp_at(t, batch, y, w, grad))
    }
}

#[cfg(test)]
pub(crate) mod check {
    use ndarray::{Array2, Array3};

    use crate::model::{jacobian_state, JacobianStrategy, OdeModel};

    fn inf_norm(m: &[f64], n: usize) -> f64 {
        m.chunks_exact(n)
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Checks analytic vs forward-AD (1e-12) and vs finite differences (1e-5)
    /// at the given `(t, batch, y)` points.
    pub(crate) fn assert_jacobians_agree<M: OdeModel>(
        model: &M,
        points: &[(f64, usize, Vec<f64>)],
    ) {
        let n = model.n_size();
        let n_batch = model.n_batch().unwrap_or(1);
        for (t, b, y) in points {
            let mut ys = Array3::zeros((1, n_batch, n));
            for (i, v) in y.iter().enumerate() {
                ys[[0, *b, i]] = *v;
            }
            let ts = Array2::from_elem((1, n_batch), *t);
            let get = |s| jacobian_state(model, ts.view(), ys.view(), s).unwrap();
            let a = get(JacobianStrategy::Analytic);
            let d = get(JacobianStrategy::ForwardAd);
            let f = get(JacobianStrategy::FiniteDifference);
            let slice = |j: &ndarray::Array4<f64>| {
                j.slice(ndarray::s![0, *b, .., ..])
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            };
            let (a, d, f) = (slice(&a), slice(&d), slice(&f));
            let scale = 1.0 + inf_norm(&a, n);
            let diff = |x: &[f64]| {
                let e: Vec<f64> = x.iter().zip(&a).map(|(u, v)| u - v).collect();
                inf_norm(&e, n)
            };
            assert!(
                diff(&d) <= 1e-12 * scale,
                "forward AD vs analytic at {y:?}: {}",
                diff(&d)
            );
            assert!(
                diff(&f) <= 1e-5 * scale,
                "finite difference vs analytic at {y:?}: {}",
                diff(&f)
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_examples() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.5, 2.5, 5), vec![2.5; 5]);
        assert_eq!(linspace(4.0, 9.0, 1), vec![4.0]);
        let t = LinspaceSpec::new(1e-2, 1.0, 7).values();
        assert_eq!(t[0], 1e-2);
        assert_eq!(t[6], 1.0);
        for w in t.windows(3) {
            assert!(((w[2] - w[1]) - (w[1] - w[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn problem_names_round_trip() {
        for p in Problem::ALL {
            assert_eq!(p.name().parse::<Problem>().unwrap(), p);
        }
        assert!("spring".parse::<Problem>().is_err());
    }

    #[test]
    fn bundled_sizes() {
        for p in Problem::ALL {
            let m = p.build(3, 2, 7).unwrap();
            assert_eq!(m.n_size(), p.n_size(3));
            assert_eq!(m.n_batch(), Some(2));
            assert_eq!(m.problem(), p);
            let total: usize = m.param_segments().iter().map(|s| s.len).sum();
            assert_eq!(total, m.params().len());
        }
    }

    #[test]
    fn zero_units_rejected() {
        for p in Problem::ALL {
            assert!(p.build(0, 2, 7).is_err());
            assert!(p.build(2, 0, 7).is_err());
        }
    }
}
