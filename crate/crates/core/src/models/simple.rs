//! Small models with closed-form behavior, used as test oracles.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::Scalar;
use crate::model::OdeModel;

/// `ẏ = −p·y`, scalar state.
#[derive(Debug, Clone)]
pub struct ScalarDecay {
    p: [f64; 1],
}

impl ScalarDecay {
    pub fn new(p: f64) -> Self {
        Self { p: [p] }
    }
}

impl OdeModel for ScalarDecay {
    fn n_size(&self) -> usize {
        1
    }
    fn params(&self) -> &[f64] {
        &self.p
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }
    fn rate_at<S: Scalar>(&self, _t: f64, _batch: usize, y: &[S], p: &[S], out: &mut [S]) {
        out[0] = -(p[0] * y[0]);
    }
    fn has_analytic_jacobian(&self) -> bool {
        true
    }
    fn jacobian_at(&self, _t: f64, _batch: usize, _y: &[f64], jac: &mut [f64]) {
        jac[0] = -self.p[0];
    }
    fn has_analytic_param_vjp(&self) -> bool {
        true
    }
    fn param_vjp_at(&self, _t: f64, _batch: usize, y: &[f64], w: &[f64], grad: &mut [f64]) {
        grad[0] -= w[0] * y[0];
    }
}

/// `ẏ = c`, scalar state; `∂h/∂c = 1`.
#[derive(Debug, Clone)]
pub struct ConstantRate {
    c: [f64; 1],
}

impl ConstantRate {
    pub fn new(c: f64) -> Self {
        Self { c: [c] }
    }
}

impl OdeModel for ConstantRate {
    fn n_size(&self) -> usize {
        1
    }
    fn params(&self) -> &[f64] {
        &self.c
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }
    fn rate_at<S: Scalar>(&self, _t: f64, _batch: usize, _y: &[S], p: &[S], out: &mut [S]) {
        out[0] = p[0];
    }
    fn has_analytic_jacobian(&self) -> bool {
        true
    }
    fn jacobian_at(&self, _t: f64, _batch: usize, _y: &[f64], jac: &mut [f64]) {
        jac[0] = 0.0;
    }
    fn has_analytic_param_vjp(&self) -> bool {
        true
    }
    fn param_vjp_at(&self, _t: f64, _batch: usize, _y: &[f64], w: &[f64], grad: &mut [f64]) {
        grad[0] += w[0];
    }
}

/// `ẏ = −y + sin t`, carrying one parameter that never enters the rate.
#[derive(Debug, Clone)]
pub struct ZeroSensitivity {
    p: [f64; 1],
}

impl ZeroSensitivity {
    pub fn new(p: f64) -> Self {
        Self { p: [p] }
    }
}

impl OdeModel for ZeroSensitivity {
    fn n_size(&self) -> usize {
        1
    }
    fn params(&self) -> &[f64] {
        &self.p
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }
    fn rate_at<S: Scalar>(&self, t: f64, _batch: usize, y: &[S], _p: &[S], out: &mut [S]) {
        out[0] = -y[0] + t.sin();
    }
    fn has_analytic_jacobian(&self) -> bool {
        true
    }
    fn jacobian_at(&self, _t: f64, _batch: usize, _y: &[f64], jac: &mut [f64]) {
        jac[0] = -1.0;
    }
}

/// `ẏ = A·y` with the entries of `A` (row-major) as parameters.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    n: usize,
    a: Vec<f64>,
}

impl LinearSystem {
    pub fn new(a: Array2<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "matrix must be square");
        let n = a.nrows();
        Self {
            n,
            a: a.iter().copied().collect(),
        }
    }

    /// A random matrix with a strongly negative diagonal, so the system decays.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, n), |(i, j)| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if i == j {
                v - (n as f64 + 1.0)
            } else {
                v
            }
        });
        Self::new(a)
    }

    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.a.clone()).expect("square")
    }
}

impl OdeModel for LinearSystem {
    fn n_size(&self) -> usize {
        self.n
    }
    fn params(&self) -> &[f64] {
        &self.a
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }
    fn rate_at<S: Scalar>(&self, _t: f64, _batch: usize, y: &[S], p: &[S], out: &mut [S]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = S::from_f64(0.0);
            for j in 0..n {
                acc += p[i * n + j] * y[j];
            }
            *o = acc;
        }
    }
    fn has_analytic_jacobian(&self) -> bool {
        true
    }
    fn jacobian_at(&self, _t: f64, _batch: usize, _y: &[f64], jac: &mut [f64]) {
        jac.copy_from_slice(&self.a);
    }
    fn has_analytic_param_vjp(&self) -> bool {
        true
    }
    fn param_vjp_at(&self, _t: f64, _batch: usize, y: &[f64], w: &[f64], grad: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                grad[i * n + j] += w[i] * y[j];
            }
        }
    }
}
