use super::{linspace, require_len, require_positive, require_units, sine_forcing};
use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::model::{OdeModel, ParamSegment};

/// Names of the per-unit parameter rows, in storage order.
pub const NEURON_PARAM_NAMES: [&str; 14] = [
    "C", "g_Na", "E_Na", "g_K", "E_K", "g_L", "E_L", "m_inf", "tau_m", "h_inf", "tau_h", "n_inf",
    "tau_n", "g_C",
];

const C: usize = 0;
const G_NA: usize = 1;
const E_NA: usize = 2;
const G_K: usize = 3;
const E_K: usize = 4;
const G_L: usize = 5;
const E_L: usize = 6;
const M_INF: usize = 7;
const TAU_M: usize = 8;
const H_INF: usize = 9;
const TAU_H: usize = 10;
const N_INF: usize = 11;
const TAU_N: usize = 12;
const G_C: usize = 13;

/// Parameter table for the coupled neuron model.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronParams {
    /// One per-unit row for each entry of [`NEURON_PARAM_NAMES`].
    pub rows: [Vec<f64>; 14],
    /// Current amplitude, one per batch entry.
    pub i_a: Vec<f64>,
    /// Current period, one per unit.
    pub period: Vec<f64>,
    pub t_max: f64,
}

impl NeuronParams {
    pub fn table(n_unit: usize, n_batch: usize) -> Self {
        let unit = || linspace(1e-1, 1.0, n_unit);
        let mut rows: [Vec<f64>; 14] = std::array::from_fn(|_| unit());
        rows[TAU_M] = linspace(0.5, 5.0, n_unit);
        rows[TAU_H] = linspace(1.5, 15.0, n_unit);
        rows[TAU_N] = linspace(1.0, 10.0, n_unit);
        rows[G_C] = linspace(1e-3, 1e-2, n_unit);
        Self {
            rows,
            i_a: linspace(1e-1, 1.0, n_batch),
            period: linspace(0.5, 2.0, n_unit),
            t_max: 10.0,
        }
    }

    /// Replaces the per-unit periods with a single shared value.
    pub fn with_scalar_period(mut self, period: f64) -> Self {
        self.period = vec![period; self.period.len()];
        self
    }
}

/// Weakly coupled conductance-based neurons driven by an oscillating current.
///
/// Per unit the state is `[V, m, h, n]`, interleaved unit by unit:
///
/// ```text
/// V̇_i = (−g_Na m³h (V − E_Na) − g_K n⁴ (V − E_K) − g_L (V − E_L)
///         + I_i(t) + g_C Σ_j (V_i − V_j)) / C
/// ṁ_i = (m_∞ − m)/τ_m,   ḣ_i = (h_∞ − h)/τ_h,   ṅ_i = (n_∞ − n)/τ_n
/// ```
///
/// with `I_i(t) = I_a sin(2πt/T_i)`, `I_a` per batch entry and `T_i` per unit.
#[derive(Debug, Clone)]
pub struct Neuron {
    n_unit: usize,
    p: Vec<f64>,
    i_a: Vec<f64>,
    period: Vec<f64>,
}

pub fn build_neuron(n_unit: usize, n_batch: usize) -> Result<Neuron> {
    require_units(n_unit, n_batch)?;
    Neuron::new(&NeuronParams::table(n_unit, n_batch))
}

impl Neuron {
    pub fn new(params: &NeuronParams) -> Result<Self> {
        let n_unit = params.rows[0].len();
        require_units(n_unit, params.i_a.len())?;
        for (name, row) in NEURON_PARAM_NAMES.iter().zip(&params.rows) {
            require_len(name, row, n_unit)?;
            require_positive(name, row)?;
        }
        require_len("T", &params.period, n_unit)?;
        require_positive("T", &params.period)?;
        if !params.i_a.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("I_a must be finite".into()));
        }
        Ok(Self {
            n_unit,
            p: params.rows.concat(),
            i_a: params.i_a.clone(),
            period: params.period.clone(),
        })
    }

    pub fn n_unit(&self) -> usize {
        self.n_unit
    }

    #[inline]
    fn row<'a, S>(&self, p: &'a [S], r: usize) -> &'a [S] {
        &p[r * self.n_unit..(r + 1) * self.n_unit]
    }
}

impl OdeModel for Neuron {
    fn n_size(&self) -> usize {
        4 * self.n_unit
    }

    fn n_batch(&self) -> Option<usize> {
        Some(self.i_a.len())
    }

    fn params(&self) -> &[f64] {
        &self.p
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    fn param_segments(&self) -> Vec<ParamSegment> {
        NEURON_PARAM_NAMES
            .iter()
            .enumerate()
            .map(|(r, name)| ParamSegment::new(*name, r * self.n_unit, self.n_unit))
            .collect()
    }

    fn rate_at<S: Scalar>(&self, t: f64, batch: usize, y: &[S], p: &[S], out: &mut [S]) {
        let n = self.n_unit;
        let mut v_sum = S::from_f64(0.0);
        for i in 0..n {
            v_sum += y[4 * i];
        }
        let nf = n as f64;
        for i in 0..n {
            let r = |row: usize| self.row(p, row)[i];
            let (v, m, h, nn) = (y[4 * i], y[4 * i + 1], y[4 * i + 2], y[4 * i + 3]);
            let current = sine_forcing(self.i_a[batch], self.period[i], t);
            let coupling = r(G_C) * (v * nf - v_sum);
            let ionic = -(r(G_NA) * m.powi(3) * h * (v - r(E_NA)))
                - r(G_K) * nn.powi(4) * (v - r(E_K))
                - r(G_L) * (v - r(E_L));
            out[4 * i] = (ionic + current + coupling) / r(C);
            out[4 * i + 1] = (r(M_INF) - m) / r(TAU_M);
            out[4 * i + 2] = (r(H_INF) - h) / r(TAU_H);
            out[4 * i + 3] = (r(N_INF) - nn) / r(TAU_N);
        }
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn jacobian_at(&self, _t: f64, _batch: usize, y: &[f64], jac: &mut [f64]) {
        let n = self.n_unit;
        let ns = 4 * n;
        let p = &self.p;
        jac.fill(0.0);
        for i in 0..n {
            let r = |row: usize| self.row(p, row)[i];
            let (v, m, h, nn) = (y[4 * i], y[4 * i + 1], y[4 * i + 2], y[4 * i + 3]);
            let inv_c = 1.0 / r(C);
            let row = 4 * i * ns;
            let gc = r(G_C) * inv_c;
            for j in 0..n {
                jac[row + 4 * j] = -gc;
            }
            jac[row + 4 * i] = (-r(G_NA) * m.powi(3) * h - r(G_K) * nn.powi(4) - r(G_L)) * inv_c
                + gc * (n as f64 - 1.0);
            jac[row + 4 * i + 1] = -3.0 * r(G_NA) * m * m * h * (v - r(E_NA)) * inv_c;
            jac[row + 4 * i + 2] = -r(G_NA) * m.powi(3) * (v - r(E_NA)) * inv_c;
            jac[row + 4 * i + 3] = -4.0 * r(G_K) * nn.powi(3) * (v - r(E_K)) * inv_c;
            jac[(4 * i + 1) * ns + 4 * i + 1] = -1.0 / r(TAU_M);
            jac[(4 * i + 2) * ns + 4 * i + 2] = -1.0 / r(TAU_H);
            jac[(4 * i + 3) * ns + 4 * i + 3] = -1.0 / r(TAU_N);
        }
    }
}
