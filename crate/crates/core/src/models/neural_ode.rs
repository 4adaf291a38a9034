use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{linspace, require_len, require_positive, require_units, sine_forcing};
use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::model::{OdeModel, ParamSegment};

/// Default seed for the frozen network weights.
pub const DEFAULT_SEED: u64 = 7;

/// Weights (row-major, `out × in`), biases and forcing data of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralOdeParams {
    pub n_unit: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    pub f_a: f64,
    /// Forcing period, one per batch entry.
    pub period: Vec<f64>,
    pub t_max: f64,
}

impl NeuralOdeParams {
    /// Weights and biases drawn in the order `W1, b1, W2, b2, W3, b3` from
    /// `U[−r, r]` with `r = √(1/(n_unit+1))`, using ChaCha8 seeded with `seed`.
    pub fn random(n_unit: usize, n_batch: usize, seed: u64) -> Self {
        let h = n_unit + 1;
        let r = (1.0 / h as f64).sqrt();
        let dist = Uniform::new_inclusive(-r, r);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw =
            |len: usize| -> Vec<f64> { (0..len).map(|_| dist.sample(&mut rng)).collect() };
        let w1 = draw(h * h);
        let b1 = draw(h);
        let w2 = draw(h * h);
        let b2 = draw(h);
        let w3 = draw(n_unit * h);
        let b3 = draw(n_unit);
        Self {
            n_unit,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            f_a: 1.0,
            period: linspace(1e-2, 1.0, n_batch),
            t_max: 1.0,
        }
    }
}

/// `ẏ = tanh(L₃(tanh(L₂(tanh(L₁([y; f(t)]))))))` with `f(t) = f_a sin(2πt/T)`.
///
/// The hidden width is `n_unit + 1`. Parameters are `[W1, b1, W2, b2, W3, b3]`.
#[derive(Debug, Clone)]
pub struct NeuralOde {
    n_unit: usize,
    p: Vec<f64>,
    f_a: f64,
    period: Vec<f64>,
}

pub fn build_neural_ode(n_unit: usize, n_batch: usize, seed: u64) -> Result<NeuralOde> {
    require_units(n_unit, n_batch)?;
    NeuralOde::new(&NeuralOdeParams::random(n_unit, n_batch, seed))
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

impl Offsets {
    fn new(n: usize) -> Self {
        let h = n + 1;
        let w1 = 0;
        let b1 = w1 + h * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + n * h;
        Self {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + n,
        }
    }
}

/// `out = W x + b`, then `tanh` in place.
fn layer<S: Scalar>(w: &[S], b: &[S], x: &[S], out: &mut [S]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = b[r];
        for (wv, xv) in w[r * cols..(r + 1) * cols].iter().zip(x) {
            acc += *wv * *xv;
        }
        *o = acc.tanh();
    }
}

impl NeuralOde {
    pub fn new(params: &NeuralOdeParams) -> Result<Self> {
        let n = params.n_unit;
        require_units(n, params.period.len())?;
        let h = n + 1;
        require_len("W1", &params.w1, h * h)?;
        require_len("b1", &params.b1, h)?;
        require_len("W2", &params.w2, h * h)?;
        require_len("b2", &params.b2, h)?;
        require_len("W3", &params.w3, n * h)?;
        require_len("b3", &params.b3, n)?;
        require_positive("T", &params.period)?;
        let p = [
            params.w1.as_slice(),
            &params.b1,
            &params.w2,
            &params.b2,
            &params.w3,
            &params.b3,
        ]
        .concat();
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "network weights must be finite".into(),
            ));
        }
        Ok(Self {
            n_unit: n,
            p,
            f_a: params.f_a,
            period: params.period.clone(),
        })
    }

    pub fn n_unit(&self) -> usize {
        self.n_unit
    }

    /// Input vector `[y; f(t)]` and the three layer activations.
    fn forward(&self, t: f64, batch: usize, y: &[f64]) -> [Vec<f64>; 4] {
        let (n, h) = (self.n_unit, self.n_unit + 1);
        let o = Offsets::new(n);
        let p = &self.p;
        let mut x0 = y.to_vec();
        x0.push(sine_forcing(self.f_a, self.period[batch], t));
        let mut a1 = vec![0.0; h];
        let mut a2 = vec![0.0; h];
        let mut a3 = vec![0.0; n];
        layer(&p[o.w1..o.b1], &p[o.b1..o.w2], &x0, &mut a1);
        layer(&p[o.w2..o.b2], &p[o.b2..o.w3], &a1, &mut a2);
        layer(&p[o.w3..o.b3], &p[o.b3..o.end], &a2, &mut a3);
        [x0, a1, a2, a3]
    }
}

impl OdeModel for NeuralOde {
    fn n_size(&self) -> usize {
        self.n_unit
    }

    fn n_batch(&self) -> Option<usize> {
        Some(self.period.len())
    }

    fn params(&self) -> &[f64] {
        &self.p
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    fn param_segments(&self) -> Vec<ParamSegment> {
        let o = Offsets::new(self.n_unit);
        vec![
            ParamSegment::new("W1", o.w1, o.b1 - o.w1),
            ParamSegment::new("b1", o.b1, o.w2 - o.b1),
            ParamSegment::new("W2", o.w2, o.b2 - o.w2),
            ParamSegment::new("b2", o.b2, o.w3 - o.b2),
            ParamSegment::new("W3", o.w3, o.b3 - o.w3),
            ParamSegment::new("b3", o.b3, o.end - o.b3),
        ]
    }

    fn rate_at<S: Scalar>(&self, t: f64, batch: usize, y: &[S], p: &[S], out: &mut [S]) {
        let (n, h) = (self.n_unit, self.n_unit + 1);
        let o = Offsets::new(n);
        let zero = S::from_f64(0.0);
        let mut x0 = Vec::with_capacity(h);
        x0.extend_from_slice(y);
        x0.push(S::from_f64(sine_forcing(self.f_a, self.period[batch], t)));
        let mut a1 = vec![zero; h];
        let mut a2 = vec![zero; h];
        layer(&p[o.w1..o.b1], &p[o.b1..o.w2], &x0, &mut a1);
        layer(&p[o.w2..o.b2], &p[o.b2..o.w3], &a1, &mut a2);
        layer(&p[o.w3..o.b3], &p[o.b3..o.end], &a2, out);
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn jacobian_at(&self, t: f64, batch: usize, y: &[f64], jac: &mut [f64]) {
        let (n, h) = (self.n_unit, self.n_unit + 1);
        let o = Offsets::new(n);
        let p = &self.p;
        let [_, a1, a2, a3] = self.forward(t, batch, y);
        // G1 = D1 W1[:, :n]  (h × n)
        let mut g1 = vec![0.0; h * n];
        for r in 0..h {
            let d = 1.0 - a1[r] * a1[r];
            for c in 0..n {
                g1[r * n + c] = d * p[o.w1 + r * h + c];
            }
        }
        // G2 = D2 W2 G1  (h × n)
        let mut g2 = vec![0.0; h * n];
        for r in 0..h {
            let d = 1.0 - a2[r] * a2[r];
            for k in 0..h {
                let w = d * p[o.w2 + r * h + k];
                for c in 0..n {
                    g2[r * n + c] += w * g1[k * n + c];
                }
            }
        }
        // J = D3 W3 G2  (n × n)
        jac.fill(0.0);
        for r in 0..n {
            let d = 1.0 - a3[r] * a3[r];
            for k in 0..h {
                let w = d * p[o.w3 + r * h + k];
                for c in 0..n {
                    jac[r * n + c] += w * g2[k * n + c];
                }
            }
        }
    }

    fn has_analytic_param_vjp(&self) -> bool {
        true
    }

    fn param_vjp_at(&self, t: f64, batch: usize, y: &[f64], w: &[f64], grad: &mut [f64]) {
        let (n, h) = (self.n_unit, self.n_unit + 1);
        let o = Offsets::new(n);
        let p = &self.p;
        let [x0, a1, a2, a3] = self.forward(t, batch, y);

        let d3: Vec<f64> = (0..n).map(|r| w[r] * (1.0 - a3[r] * a3[r])).collect();
        let mut d2 = vec![0.0; h];
        for r in 0..n {
            grad[o.b3 + r] += d3[r];
            for k in 0..h {
                grad[o.w3 + r * h + k] += d3[r] * a2[k];
                d2[k] += p[o.w3 + r * h + k] * d3[r];
            }
        }
        for (k, d) in d2.iter_mut().enumerate() {
            *d *= 1.0 - a2[k] * a2[k];
        }
        let mut d1 = vec![0.0; h];
        for r in 0..h {
            grad[o.b2 + r] += d2[r];
            for k in 0..h {
                grad[o.w2 + r * h + k] += d2[r] * a1[k];
                d1[k] += p[o.w2 + r * h + k] * d2[r];
            }
        }
        for (k, d) in d1.iter_mut().enumerate() {
            *d *= 1.0 - a1[k] * a1[k];
        }
        for r in 0..h {
            grad[o.b1 + r] += d1[r];
            for k in 0..h {
                grad[o.w1 + r * h + k] += d1[r] * x0[k];
            }
        }
    }
}
