use super::{linspace, require_len, require_positive, require_units, sine_forcing};
use crate::dual::{sign0, Scalar};
use crate::error::{Error, Result};
use crate::model::{OdeModel, ParamSegment};

/// Parameter table for the Chaboche viscoplastic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChabocheParams {
    pub e: f64,
    pub n: f64,
    pub eta: f64,
    pub sigma0: f64,
    pub k_inf: f64,
    pub tau: f64,
    /// Backstress moduli, one per unit.
    pub c: Vec<f64>,
    /// Backstress recovery coefficients, one per unit.
    pub gamma: Vec<f64>,
    /// Strain-rate amplitude, one per batch entry.
    pub strain_rate_amplitude: Vec<f64>,
    pub period: f64,
    pub t_max: f64,
}

impl ChabocheParams {
    pub fn table(n_unit: usize, n_batch: usize) -> Self {
        Self {
            e: 10.0,
            n: 5.0,
            eta: 2.0,
            sigma0: 1.0,
            k_inf: 10.0,
            tau: 1.0,
            c: linspace(0.1, 1.0, n_unit),
            gamma: linspace(0.1, 0.5, n_unit),
            strain_rate_amplitude: linspace(1e-1, 1.0, n_batch),
            period: 1.0,
            t_max: 10.0,
        }
    }
}

const E: usize = 0;
const N: usize = 1;
const ETA: usize = 2;
const SIGMA0: usize = 3;
const K_INF: usize = 4;
const TAU: usize = 5;
const SCALARS: usize = 6;

/// Chaboche viscoplasticity with isotropic hardening `K` and `n_unit`
/// kinematic backstresses `X_i`.
///
/// State is `[σ, K, X_1..X_n]`. With `s = σ − Σ X_i`,
///
/// ```text
/// ε̇_p = ⟨(|s| − K − σ₀)/η⟩ⁿ sign(s)
/// σ̇   = E (ε̇(t) − ε̇_p)
/// K̇   = τ (K_∞ − K)
/// Ẋ_i = (2/3) C_i ε̇_p − γ_i X_i |ε̇_p|
/// ```
///
/// and `ε̇(t) = ε̇_a sin(2πt/T)`. `sign(0) = 0`, and the Macaulay power has a
/// zero derivative wherever its argument is not positive.
///
/// Parameters: `[E, n, η, σ₀, K_∞, τ, C_1..C_n, γ_1..γ_n]`.
#[derive(Debug, Clone)]
pub struct Chaboche {
    n_unit: usize,
    p: Vec<f64>,
    strain_rate_amplitude: Vec<f64>,
    period: f64,
}

pub fn build_chaboche(n_unit: usize, n_batch: usize) -> Result<Chaboche> {
    require_units(n_unit, n_batch)?;
    Chaboche::new(&ChabocheParams::table(n_unit, n_batch))
}

impl Chaboche {
    pub fn new(params: &ChabocheParams) -> Result<Self> {
        let n_unit = params.c.len();
        require_units(n_unit, params.strain_rate_amplitude.len())?;
        require_len("gamma", &params.gamma, n_unit)?;
        let scalars = [
            params.e,
            params.n,
            params.eta,
            params.sigma0,
            params.k_inf,
            params.tau,
        ];
        require_positive("scalar parameters", &scalars)?;
        require_positive("C", &params.c)?;
        require_positive("gamma", &params.gamma)?;
        require_positive("T", &[params.period])?;
        if !params.strain_rate_amplitude.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "strain rate amplitude must be finite".into(),
            ));
        }
        Ok(Self {
            n_unit,
            p: [scalars.as_slice(), &params.c, &params.gamma].concat(),
            strain_rate_amplitude: params.strain_rate_amplitude.clone(),
            period: params.period,
        })
    }

    pub fn n_unit(&self) -> usize {
        self.n_unit
    }

    fn strain_rate(&self, t: f64, batch: usize) -> f64 {
        sine_forcing(self.strain_rate_amplitude[batch], self.period, t)
    }
}

impl OdeModel for Chaboche {
    fn n_size(&self) -> usize {
        2 + self.n_unit
    }

    fn n_batch(&self) -> Option<usize> {
        Some(self.strain_rate_amplitude.len())
    }

    fn params(&self) -> &[f64] {
        &self.p
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    fn param_segments(&self) -> Vec<ParamSegment> {
        let n = self.n_unit;
        let mut segs: Vec<_> = ["E", "n", "eta", "sigma0", "K_inf", "tau"]
            .iter()
            .enumerate()
            .map(|(i, name)| ParamSegment::new(*name, i, 1))
            .collect();
        segs.push(ParamSegment::new("C", SCALARS, n));
        segs.push(ParamSegment::new("gamma", SCALARS + n, n));
        segs
    }

    fn rate_at<S: Scalar>(&self, t: f64, batch: usize, y: &[S], p: &[S], out: &mut [S]) {
        let n = self.n_unit;
        let (sigma, k) = (y[0], y[1]);
        let x = &y[2..];
        let c = &p[SCALARS..SCALARS + n];
        let gamma = &p[SCALARS + n..SCALARS + 2 * n];
        let mut s = sigma;
        for xi in x {
            s -= *xi;
        }
        let phi = ((s.abs() - k - p[SIGMA0]) / p[ETA]).macaulay_pow(p[N]);
        let sgn = s.sign();
        let eps_p = phi * sgn;
        let eps_p_abs = phi * sgn.abs();
        out[0] = p[E] * (-eps_p + self.strain_rate(t, batch));
        out[1] = p[TAU] * (p[K_INF] - k);
        for i in 0..n {
            out[2 + i] = c[i] * eps_p * (2.0 / 3.0) - gamma[i] * x[i] * eps_p_abs;
        }
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn jacobian_at(&self, _t: f64, _batch: usize, y: &[f64], jac: &mut [f64]) {
        let n = self.n_unit;
        let ns = n + 2;
        let p = &self.p;
        let (sigma, k) = (y[0], y[1]);
        let x = &y[2..];
        let s = sigma - x.iter().sum::<f64>();
        let z = (s.abs() - k - p[SIGMA0]) / p[ETA];
        let (phi, dphi) = if z > 0.0 {
            (z.powf(p[N]), p[N] * z.powf(p[N] - 1.0) / p[ETA])
        } else {
            (0.0, 0.0)
        };
        let sgn = sign0(s);
        let eps_p_abs = phi * sgn.abs();
        // ε̇_p and |ε̇_p| as functions of s and K
        let dep_ds = dphi * sgn * sgn;
        let dep_dk = -dphi * sgn;
        let dabs_ds = dphi * sgn;
        let dabs_dk = -dphi * sgn.abs();

        jac.fill(0.0);
        jac[0] = -p[E] * dep_ds;
        jac[1] = -p[E] * dep_dk;
        for j in 0..n {
            jac[2 + j] = p[E] * dep_ds;
        }
        jac[ns + 1] = -p[TAU];
        for i in 0..n {
            let (ci, gi) = (p[SCALARS + i], p[SCALARS + n + i]);
            let row = (2 + i) * ns;
            let d_ds = 2.0 / 3.0 * ci * dep_ds - gi * x[i] * dabs_ds;
            jac[row] = d_ds;
            jac[row + 1] = 2.0 / 3.0 * ci * dep_dk - gi * x[i] * dabs_dk;
            for j in 0..n {
                jac[row + 2 + j] = -d_ds;
            }
            jac[row + 2 + i] -= gi * eps_p_abs;
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
    fn elastic_regime() {
        let m = build_chaboche(3, 2).unwrap();
        let mut out = vec![0.0; 5];
        m.rate_at(0.25, 1, &[0.0; 5], m.params(), &mut out);
        assert!((out[0] - 10.0 * 1.0).abs() < 1e-14);
        assert_eq!(out[1], 10.0);
        assert!(out[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_isotropic_hardening() {
        let m = build_chaboche(2, 1).unwrap();
        let mut out = vec![0.0; 4];
        m.rate_at(0.1, 0, &[3.0, 10.0, 0.2, -0.1], m.params(), &mut out);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn plastic_flow_direction() {
        let m = build_chaboche(1, 1).unwrap();
        let mut out = vec![0.0; 3];
        // s = 5, K = 0: z = (5 − 1)/2 = 2, ε̇_p = 32
        m.rate_at(0.0, 0, &[5.0, 0.0, 0.0], m.params(), &mut out);
        assert!((out[0] + 320.0).abs() < 1e-12);
        assert!((out[2] - 2.0 / 3.0 * 0.1 * 32.0).abs() < 1e-12);
        m.rate_at(0.0, 0, &[-5.0, 0.0, 0.0], m.params(), &mut out);
        assert!((out[0] - 320.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_table() {
        let p = ChabocheParams::table(3, 4);
        assert_eq!(p.c, vec![0.1, 0.55, 1.0]);
        for (g, e) in p.gamma.iter().zip([0.1, 0.3, 0.5]) {
            assert!((g - e).abs() < 1e-15);
        }
        assert_eq!(p.strain_rate_amplitude[0], 0.1);
        assert_eq!(p.strain_rate_amplitude[3], 1.0);
    }

    #[test]
    fn jacobian_agreement_plastic_and_elastic() {
        let m = build_chaboche(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut points = Vec::new();
        while points.len() < 20 {
            let y: Vec<f64> = vec![
                rng.gen_range(-8.0..8.0),
                rng.gen_range(0.0..3.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let s: f64 = y[0] - y[2..].iter().sum::<f64>();
            let z = s.abs() - y[1] - 1.0;
            // stay away from the yield surface, where the rate is not smooth
            if z.abs() > 0.1 {
                points.push((rng.gen_range(0.0..10.0), rng.gen_range(0..2), y));
            }
        }
        assert!(points
            .iter()
            .any(|(_, _, y)| (y[0] - y[2..].iter().sum::<f64>()).abs() - y[1] - 1.0 > 0.1));
        assert_jacobians_agree(&m, &points);
    }
}
