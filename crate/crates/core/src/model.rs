//! The ODE abstraction `ẏ = h(y, t; p)` and its batched evaluation.
//!
//! Models are evaluated on two batch axes at once: a chunk of time steps and
//! a batch of independent series. The per-point right-hand side is written
//! once, generically over [`Scalar`], which gives forward-mode AD for free.

use ndarray::{Array1, Array3, Array4, ArrayView2, ArrayView3};

use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};

/// Relative step for central finite differences: `δ = ε (1 + |x|)`.
pub const FD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JacobianStrategy {
    Analytic,
    ForwardAd,
    FiniteDifference,
}

/// A named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSegment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl ParamSegment {
    pub fn new(name: impl Into<String>, offset: usize, len: usize) -> Self {
        Self {
            name: name.into(),
            offset,
            len,
        }
    }
}

/// An ODE system evaluated point-wise at `(t, batch index, y)`.
///
/// `batch` selects per-series data such as forcing amplitudes or periods.
/// State Jacobians are row-major `n_size × n_size` with `jac[i·n + j] = ∂h_i/∂y_j`.
pub trait OdeModel: Sync {
    fn n_size(&self) -> usize;

    /// Number of series the model carries per-batch data for, if any.
    fn n_batch(&self) -> Option<usize> {
        None
    }

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn param_segments(&self) -> Vec<ParamSegment> {
        vec![ParamSegment::new("p", 0, self.params().len())]
    }

    /// Writes `h(y, t; p)` into `out`.
    fn rate_at<S: Scalar>(&self, t: f64, batch: usize, y: &[S], p: &[S], out: &mut [S]);

    fn has_analytic_jacobian(&self) -> bool {
        false
    }

    /// Writes `∂h/∂y` at the model's own parameters.
    fn jacobian_at(&self, _t: f64, _batch: usize, _y: &[f64], _jac: &mut [f64]) {
        unreachable!("model does not provide an analytic jacobian")
    }

    fn has_analytic_param_vjp(&self) -> bool {
        false
    }

    /// Adds `wᵀ ∂h/∂p` into `grad`.
    fn param_vjp_at(&self, _t: f64, _batch: usize, _y: &[f64], _w: &[f64], _grad: &mut [f64]) {
        unreachable!("model does not provide an analytic parameter vjp")
    }
}

fn check_shapes<M: OdeModel>(model: &M, t: &ArrayView2<f64>, y: &ArrayView3<f64>) -> Result<()> {
    let (n_chunk, n_batch, n_size) = y.dim();
    if n_size != model.n_size() {
        return Err(Error::ShapeMismatch(format!(
            "state has {n_size} components, model expects {}",
            model.n_size()
        )));
    }
    if t.dim() != (n_chunk, n_batch) {
        return Err(Error::ShapeMismatch(format!(
            "times have shape {:?}, states imply {:?}",
            t.dim(),
            (n_chunk, n_batch)
        )));
    }
    if let Some(nb) = model.n_batch() {
        if nb != n_batch {
            return Err(Error::ShapeMismatch(format!(
                "model carries data for {nb} series, got {n_batch}"
            )));
        }
    }
    Ok(())
}

fn all_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> bool {
    values.all(|v| v.is_finite())
}

/// Evaluates `h` at every `(chunk, batch)` point.
pub fn rate<M: OdeModel>(model: &M, t: ArrayView2<f64>, y: ArrayView3<f64>) -> Result<Array3<f64>> {
    let out = rate_unchecked(model, t, y)?;
    if !all_finite(out.iter()) {
        return Err(Error::NonFiniteOutput {
            what: "rate",
            time_index: None,
        });
    }
    Ok(out)
}

/// [`rate`] without the finiteness check on the output.
pub(crate) fn rate_unchecked<M: OdeModel>(
    model: &M,
    t: ArrayView2<f64>,
    y: ArrayView3<f64>,
) -> Result<Array3<f64>> {
    check_shapes(model, &t, &y)?;
    let (n_chunk, n_batch, n) = y.dim();
    let y = y.as_standard_layout();
    let ys = y.as_slice().expect("standard layout");
    let mut out = Array3::zeros((n_chunk, n_batch, n));
    let os = out.as_slice_mut().expect("standard layout");
    let p = model.params();
    for (idx, (yp, op)) in ys.chunks_exact(n).zip(os.chunks_exact_mut(n)).enumerate() {
        let (c, b) = (idx / n_batch, idx % n_batch);
        model.rate_at(t[[c, b]], b, yp, p, op);
    }
    Ok(out)
}

/// Evaluates `∂h/∂y` at every `(chunk, batch)` point.
pub fn jacobian_state<M: OdeModel>(
    model: &M,
    t: ArrayView2<f64>,
    y: ArrayView3<f64>,
    strategy: JacobianStrategy,
) -> Result<Array4<f64>> {
    check_shapes(model, &t, &y)?;
    if strategy == JacobianStrategy::Analytic && !model.has_analytic_jacobian() {
        return Err(Error::StrategyUnavailable(strategy));
    }
    let (n_chunk, n_batch, n) = y.dim();
    let y = y.as_standard_layout();
    let ys = y.as_slice().expect("standard layout");
    let mut jac = Array4::zeros((n_chunk, n_batch, n, n));
    let js = jac.as_slice_mut().expect("standard layout");
    let p = model.params();

    match strategy {
        JacobianStrategy::Analytic => {
            for (idx, (yp, jp)) in ys
                .chunks_exact(n)
                .zip(js.chunks_exact_mut(n * n))
                .enumerate()
            {
                let (c, b) = (idx / n_batch, idx % n_batch);
                model.jacobian_at(t[[c, b]], b, yp, jp);
            }
        }
        JacobianStrategy::ForwardAd => {
            let pd: Vec<Dual> = p.iter().map(|&v| Dual::constant(v)).collect();
            let mut yd = vec![Dual::default(); n];
            let mut out = vec![Dual::default(); n];
            for (idx, (yp, jp)) in ys
                .chunks_exact(n)
                .zip(js.chunks_exact_mut(n * n))
                .enumerate()
            {
                let (c, b) = (idx / n_batch, idx % n_batch);
                for (d, &v) in yd.iter_mut().zip(yp) {
                    *d = Dual::constant(v);
                }
                for col in 0..n {
                    yd[col].dot = 1.0;
                    model.rate_at(t[[c, b]], b, &yd, &pd, &mut out);
                    yd[col].dot = 0.0;
                    for row in 0..n {
                        jp[row * n + col] = out[row].dot;
                    }
                }
            }
        }
        JacobianStrategy::FiniteDifference => {
            let mut yw = vec![0.0; n];
            let mut fp = vec![0.0; n];
            let mut fm = vec![0.0; n];
            for (idx, (yp, jp)) in ys
                .chunks_exact(n)
                .zip(js.chunks_exact_mut(n * n))
                .enumerate()
            {
                let (c, b) = (idx / n_batch, idx % n_batch);
                let tc = t[[c, b]];
                yw.copy_from_slice(yp);
                for col in 0..n {
                    let delta = FD_EPS * (1.0 + yp[col].abs());
                    yw[col] = yp[col] + delta;
                    model.rate_at(tc, b, &yw, p, &mut fp);
                    yw[col] = yp[col] - delta;
                    model.rate_at(tc, b, &yw, p, &mut fm);
                    yw[col] = yp[col];
                    for row in 0..n {
                        jp[row * n + col] = (fp[row] - fm[row]) / (2.0 * delta);
                    }
                }
            }
        }
    }
    if !all_finite(jac.iter()) {
        return Err(Error::NonFiniteOutput {
            what: "jacobian",
            time_index: None,
        });
    }
    Ok(jac)
}

/// `Σ_{chunk, batch} wᵀ ∂h/∂p`, a vector shaped like the parameters.
///
/// Uses the model's analytic product when it has one, otherwise dual numbers
/// seeded one parameter at a time.
pub fn parameter_vjp<M: OdeModel>(
    model: &M,
    t: ArrayView2<f64>,
    y: ArrayView3<f64>,
    w: ArrayView3<f64>,
) -> Result<Array1<f64>> {
    check_shapes(model, &t, &y)?;
    if w.dim() != y.dim() {
        return Err(Error::ShapeMismatch(format!(
            "weights have shape {:?}, states {:?}",
            w.dim(),
            y.dim()
        )));
    }
    let (_, n_batch, n) = y.dim();
    let y = y.as_standard_layout();
    let w = w.as_standard_layout();
    let ys = y.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");
    let p = model.params();
    let mut grad = Array1::zeros(p.len());
    let gs = grad.as_slice_mut().expect("contiguous");

    if model.has_analytic_param_vjp() {
        for (idx, (yp, wp)) in ys.chunks_exact(n).zip(ws.chunks_exact(n)).enumerate() {
            let (c, b) = (idx / n_batch, idx % n_batch);
            model.param_vjp_at(t[[c, b]], b, yp, wp, gs);
        }
    } else {
        let mut pd: Vec<Dual> = p.iter().map(|&v| Dual::constant(v)).collect();
        let mut yd = vec![Dual::default(); n];
        let mut out = vec![Dual::default(); n];
        for (idx, (yp, wp)) in ys.chunks_exact(n).zip(ws.chunks_exact(n)).enumerate() {
            if wp.iter().all(|&v| v == 0.0) {
                continue;
            }
            let (c, b) = (idx / n_batch, idx % n_batch);
            for (d, &v) in yd.iter_mut().zip(yp) {
                *d = Dual::constant(v);
            }
            for q in 0..p.len() {
                pd[q].dot = 1.0;
                model.rate_at(t[[c, b]], b, &yd, &pd, &mut out);
                pd[q].dot = 0.0;
                gs[q] += out.iter().zip(wp).map(|(o, &wi)| o.dot * wi).sum::<f64>();
            }
        }
    }
    if !all_finite(grad.iter()) {
        return Err(Error::NonFiniteOutput {
            what: "parameter vjp",
            time_index: None,
        });
    }
    Ok(grad)
}
