use super::{linspace, require_len, require_positive, require_units, sine_forcing};
use crate::dual::Scalar;
use crate::error::Result;
use crate::model::{OdeModel, ParamSegment};

/// Parameter table for the mass-damper-spring chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsParams {
    pub k: Vec<f64>,
    pub c: Vec<f64>,
    pub m: Vec<f64>,
    pub f_a: f64,
    /// Forcing period, one per batch entry.
    pub period: Vec<f64>,
    pub t_max: f64,
}

impl MdsParams {
    pub fn table(n_unit: usize, n_batch: usize) -> Self {
        Self {
            k: linspace(1e-2, 1.0, n_unit),
            c: linspace(1e-6, 1e-4, n_unit),
            m: linspace(1e-7, 1e-5, n_unit),
            f_a: 1.0,
            period: linspace(1e-2, 1.0, n_batch),
            t_max: 1.0,
        }
    }
}

/// A serial chain of `n_unit` mass-damper-spring units.
///
/// State layout is `[d_1..d_n, v_1..v_n]`. With `a_i = K_i/M_i` and
/// `b_i = C_i/M_i`,
///
/// ```text
/// ḋ_i = v_i
/// v̇_i = −a_i (d_i − d_{i−1}) + a_{i+1} (d_{i+1} − d_i)
///       −b_i (v_i − v_{i−1}) + b_{i+1} (v_{i+1} − v_i) + f_i(t)
/// ```
///
/// where `d_0 = v_0 = 0` anchors the first unit, terms with index `n + 1`
/// are absent, and only unit 1 is driven: `f_1 = f_a sin(2πt/T)`.
/// The coupling operators are symmetric positive definite, so the free
/// response is a damped oscillation.
///
/// Parameters: `[K_1..K_n, C_1..C_n, M_1..M_n]`.
#[derive(Debug, Clone)]
pub struct MassDamperSpring {
    n_unit: usize,
    p: Vec<f64>,
    f_a: f64,
    period: Vec<f64>,
}

pub fn build_mass_damper_spring(n_unit: usize, n_batch: usize) -> Result<MassDamperSpring> {
    require_units(n_unit, n_batch)?;
    MassDamperSpring::new(&MdsParams::table(n_unit, n_batch))
}

impl MassDamperSpring {
    pub fn new(params: &MdsParams) -> Result<Self> {
        let n_unit = params.k.len();
        require_units(n_unit, params.period.len())?;
        require_len("C", &params.c, n_unit)?;
        require_len("M", &params.m, n_unit)?;
        require_positive("K", &params.k)?;
        require_positive("C", &params.c)?;
        require_positive("M", &params.m)?;
        require_positive("T", &params.period)?;
        let p = [params.k.as_slice(), &params.c, &params.m].concat();
        Ok(Self {
            n_unit,
            p,
            f_a: params.f_a,
            period: params.period.clone(),
        })
    }

    pub fn n_unit(&self) -> usize {
        self.n_unit
    }

    fn forcing(&self, t: f64, batch: usize) -> f64 {
        sine_forcing(self.f_a, self.period[batch], t)
    }
}

impl OdeModel for MassDamperSpring {
    fn n_size(&self) -> usize {
        2 * self.n_unit
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
        let n = self.n_unit;
        vec![
            ParamSegment::new("K", 0, n),
            ParamSegment::new("C", n, n),
            ParamSegment::new("M", 2 * n, n),
        ]
    }

    fn rate_at<S: Scalar>(&self, t: f64, batch: usize, y: &[S], p: &[S], out: &mut [S]) {
        let n = self.n_unit;
        let (d, v) = y.split_at(n);
        let (k, rest) = p.split_at(n);
        let (c, m) = rest.split_at(n);
        let zero = S::from_f64(0.0);
        let (dv_out, vv_out) = out.split_at_mut(n);
        dv_out.copy_from_slice(v);
        for i in 0..n {
            let a_i = k[i] / m[i];
            let b_i = c[i] / m[i];
            let (d_prev, v_prev) = if i > 0 {
                (d[i - 1], v[i - 1])
            } else {
                (zero, zero)
            };
            let mut acc = -(a_i * (d[i] - d_prev)) - b_i * (v[i] - v_prev);
            if i + 1 < n {
                let a_next = k[i + 1] / m[i + 1];
                let b_next = c[i + 1] / m[i + 1];
                acc += a_next * (d[i + 1] - d[i]) + b_next * (v[i + 1] - v[i]);
            }
            if i == 0 {
                acc = acc + self.forcing(t, batch);
            }
            vv_out[i] = acc;
        }
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn jacobian_at(&self, _t: f64, _batch: usize, _y: &[f64], jac: &mut [f64]) {
        let n = self.n_unit;
        let ns = 2 * n;
        let (k, rest) = self.p.split_at(n);
        let (c, m) = rest.split_at(n);
        jac.fill(0.0);
        for i in 0..n {
            jac[i * ns + n + i] = 1.0;
            let row = (n + i) * ns;
            let a_i = k[i] / m[i];
            let b_i = c[i] / m[i];
            jac[row + i] -= a_i;
            jac[row + n + i] -= b_i;
            if i > 0 {
                jac[row + i - 1] += a_i;
                jac[row + n + i - 1] += b_i;
            }
            if i + 1 < n {
                let a_next = k[i + 1] / m[i + 1];
                let b_next = c[i + 1] / m[i + 1];
                jac[row + i] -= a_next;
                jac[row + i + 1] += a_next;
                jac[row + n + i] -= b_next;
                jac[row + n + i + 1] += b_next;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::check::assert_jacobians_agree;

    #[test]
    fn equilibrium_at_rest() {
        let m = build_mass_damper_spring(4, 3).unwrap();
        let mut out = vec![1.0; 8];
        for b in 0..3 {
            m.rate_at(0.0, b, &[0.0; 8], m.params(), &mut out);
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn kinematic_row() {
        let m = build_mass_damper_spring(1, 1).unwrap();
        let mut out = vec![0.0; 2];
        m.rate_at(0.3, 0, &[0.7, -1.25], m.params(), &mut out);
        assert_eq!(out[0], -1.25);
        let mut jac = vec![0.0; 4];
        m.jacobian_at(0.3, 0, &[0.7, -1.25], &mut jac);
        assert_eq!(&jac[..2], &[0.0, 1.0]);
    }

    #[test]
    fn forcing_only_on_first_unit() {
        let m = build_mass_damper_spring(3, 2).unwrap();
        let mut out = vec![0.0; 6];
        // T = 1 for the last batch entry: sin(2π·0.25) = 1
        m.rate_at(0.25, 1, &[0.0; 6], m.params(), &mut out);
        assert!((out[3] - 1.0).abs() < 1e-15);
        assert_eq!(out[4], 0.0);
        assert_eq!(out[5], 0.0);
    }

    #[test]
    fn stiffness_operator_is_symmetric() {
        let m = build_mass_damper_spring(5, 1).unwrap();
        let mut jac = vec![0.0; 100];
        m.jacobian_at(0.0, 0, &[0.0; 10], &mut jac);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(jac[(5 + i) * 10 + j], jac[(5 + j) * 10 + i]);
                assert!(jac[(5 + i) * 10 + i] < 0.0);
            }
        }
    }

    #[test]
    fn parameter_table() {
        let p = MdsParams::table(3, 4);
        assert_eq!(p.k, vec![1e-2, 0.505, 1.0]);
        assert_eq!(p.m[0], 1e-7);
        assert_eq!(p.m[2], 1e-5);
        assert_eq!(p.period[0], 1e-2);
        assert_eq!(p.period[3], 1.0);
    }

    #[test]
    fn rejects_nonpositive() {
        let mut p = MdsParams::table(2, 1);
        p.m[1] = 0.0;
        assert!(MassDamperSpring::new(&p).is_err());
    }

    #[test]
    fn jacobian_agreement() {
        let m = build_mass_damper_spring(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<_> = (0..20)
            .map(|_| {
                let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (rng.gen_range(0.0..1.0), rng.gen_range(0..2), y)
            })
            .collect();
        assert_jacobians_agree(&m, &points);
    }
}
