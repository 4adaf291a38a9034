//! Trial configuration and its textual names.

use std::fmt;

use chunked_ode::adjoint::Scheme;
use chunked_ode::linalg::LinearSolver;
use chunked_ode::model::JacobianStrategy;
use chunked_ode::models::Problem;
use clap::ValueEnum;

use crate::error::{BenchError, Result};

/// How the state Jacobian is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Jacobian {
    Analytic,
    ForwardAd,
    FiniteDifference,
}

/// Which gradient, if any, follows the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Gradient {
    Adjoint,
    FdOracle,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Solver {
    Thomas,
    Pcr,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Integration {
    Backward,
    Forward,
}

macro_rules! value_enum_text {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
            }
        }

        impl std::str::FromStr for $t {
            type Err = BenchError;

            fn from_str(s: &str) -> Result<Self> {
                <$t as ValueEnum>::from_str(s, false).map_err(|_| {
                    let names: Vec<_> = <$t>::value_variants().iter().map(|v| v.to_string()).collect();
                    BenchError::Usage(format!("'{s}' is not one of {}", names.join(", ")))
                })
            }
        }
    )*};
}

value_enum_text!(Jacobian, Gradient, Solver, Integration);

impl From<Jacobian> for JacobianStrategy {
    fn from(j: Jacobian) -> Self {
        match j {
            Jacobian::Analytic => JacobianStrategy::Analytic,
            Jacobian::ForwardAd => JacobianStrategy::ForwardAd,
            Jacobian::FiniteDifference => JacobianStrategy::FiniteDifference,
        }
    }
}

impl From<Integration> for Scheme {
    fn from(i: Integration) -> Self {
        match i {
            Integration::Backward => Scheme::BackwardEuler,
            Integration::Forward => Scheme::ForwardEuler,
        }
    }
}

/// One point of a timing study.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub problem: Problem,
    pub n_unit: usize,
    pub n_batch: usize,
    pub n_time: usize,
    pub n_chunk: usize,
    pub jacobian: Jacobian,
    pub gradient: Gradient,
    pub solver: Solver,
    /// Reduction sweeps before switching to Thomas; read only by `hybrid`.
    pub n_switch: usize,
    pub integration: Integration,
    pub repeats: usize,
    pub seed: u64,
    /// End time; the problem's default when `None`.
    pub t_max: Option<f64>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Mds,
            n_unit: 2,
            n_batch: 3,
            n_time: 32,
            n_chunk: 8,
            jacobian: Jacobian::Analytic,
            gradient: Gradient::Adjoint,
            solver: Solver::Thomas,
            n_switch: 2,
            integration: Integration::Backward,
            repeats: 3,
            seed: 7,
            t_max: None,
        }
    }
}

/// Keys accepted by [`TrialConfig::set`], in CSV column order where they
/// appear there.
pub const CONFIG_KEYS: [&str; 13] = [
    "problem",
    "n_unit",
    "n_batch",
    "n_time",
    "n_chunk",
    "jacobian",
    "gradient",
    "solver",
    "n_switch",
    "integration",
    "repeats",
    "seed",
    "t_max",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| BenchError::Usage(format!("{key}: cannot parse '{value}'")))
}

impl TrialConfig {
    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => {
                self.problem = value
                    .parse()
                    .map_err(|e: chunked_ode::Error| BenchError::Usage(e.to_string()))?
            }
            "n_unit" => self.n_unit = parse_num(key, value)?,
            "n_batch" => self.n_batch = parse_num(key, value)?,
            "n_time" => self.n_time = parse_num(key, value)?,
            "n_chunk" => self.n_chunk = parse_num(key, value)?,
            "jacobian" => self.jacobian = value.parse()?,
            "gradient" => self.gradient = value.parse()?,
            "solver" => self.solver = value.parse()?,
            "n_switch" => self.n_switch = parse_num(key, value)?,
            "integration" => self.integration = value.parse()?,
            "repeats" => self.repeats = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "t_max" => self.t_max = Some(parse_num(key, value)?),
            _ => return Err(BenchError::Usage(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(BenchError::Usage(msg));
        if self.n_unit == 0 || self.n_batch == 0 || self.n_time == 0 {
            return fail("n_unit, n_batch and n_time must be at least 1".into());
        }
        if self.n_chunk == 0 || self.n_chunk > self.n_time {
            return fail(format!(
                "n_chunk must be in 1..={}, got {}",
                self.n_time, self.n_chunk
            ));
        }
        if self.repeats == 0 {
            return fail("repeats must be at least 1".into());
        }
        if let Some(t) = self.t_max {
            if !(t.is_finite() && t > 0.0) {
                return fail(format!("t_max must be positive and finite, got {t}"));
            }
        }
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        self.t_max.unwrap_or_else(|| self.problem.t_max())
    }

    pub fn n_size(&self) -> usize {
        self.problem.n_size(self.n_unit)
    }

    pub fn linear_solver(&self) -> LinearSolver {
        match self.solver {
            Solver::Thomas => LinearSolver::Thomas,
            Solver::Pcr => LinearSolver::Pcr,
            Solver::Hybrid => LinearSolver::Hybrid {
                n_switch: self.n_switch,
            },
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.integration.into()
    }

    pub fn strategy(&self) -> JacobianStrategy {
        self.jacobian.into()
    }
}
