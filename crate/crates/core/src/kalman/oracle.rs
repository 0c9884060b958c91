//! Independent check of the continuous filter against a discrete Kalman
//! filter run on the exact Gaussian discretization.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, SMatrix, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{marginal_decomposition, KalmanError, LinearSystem3};
use crate::simulate::stream;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub rms: f64,
    pub dt: f64,
    pub pass: bool,
}

fn drift(sys: &LinearSystem3) -> Result<Matrix3<f64>, KalmanError> {
    let k =
        sys.constants().ok_or_else(|| KalmanError::Precondition("the oracle needs constant coefficients".into()))?;
    Ok(Matrix3::from_row_slice(&k))
}

/// Transition matrix and noise covariance over one step, by Van Loan's block exponential.
fn transition(a: &Matrix3<f64>, dt: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-a * dt));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(a.transpose() * dt));
    let e = m.exp();
    let f = e.fixed_view::<3, 3>(3, 3).transpose();
    let q = f * e.fixed_view::<3, 3>(0, 3);
    (f, (q + q.transpose()) * 0.5)
}

/// One path of the system on `0, dt, ..., horizon` drawn from its exact
/// Gaussian transition, started at zero.
pub fn simulate_exact(sys: &LinearSystem3, horizon: f64, dt: f64, seed: u64) -> Result<Vec<[f64; 3]>, KalmanError> {
    let a = drift(sys)?;
    let steps = super::grid(horizon, dt)?.len() - 1;
    let (f, q) = transition(&a, dt);
    let l = q.cholesky().ok_or(KalmanError::Singular { step: 0 })?.l();
    let mut rng = stream(seed, 0, 0);
    let mut x = Vector3::zeros();
    let mut path = Vec::with_capacity(steps + 1);
    path.push([0.0; 3]);
    for _ in 0..steps {
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        x = f * x + l * z;
        path.push([x[0], x[1], x[2]]);
    }
    Ok(path)
}

/// Discrete Kalman estimate of `X3` from noiseless grid observations of `(X1, X2)`.
fn discrete_filter(a: &Matrix3<f64>, dt: f64, path: &[[f64; 3]]) -> Result<Vec<f64>, KalmanError> {
    let (f, q) = transition(a, dt);
    let h = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let mut x = Vector3::zeros();
    let mut p = Matrix3::zeros();
    let mut out = Vec::with_capacity(path.len());
    out.push(0.0);
    for (step, obs) in path.iter().enumerate().skip(1) {
        let xp = f * x;
        let pp = f * p * f.transpose() + q;
        let s: Matrix2<f64> = h * pp * h.transpose();
        let s_inv = s.try_inverse().ok_or(KalmanError::Singular { step })?;
        let k = pp * h.transpose() * s_inv;
        let y = Vector2::new(obs[0], obs[1]);
        x = xp + k * (y - h * xp);
        let pn = (Matrix3::identity() - k * h) * pp;
        p = (pn + pn.transpose()) * 0.5;
        out.push(x[2]);
    }
    Ok(out)
}

/// Simulates one exact path and compares the Euler-discretized continuous
/// filter with the discrete Kalman filter; passes when `rms < 10 dt`.
pub fn kalman_oracle_check(sys: &LinearSystem3, horizon: f64, dt: f64, seed: u64) -> Result<OracleReport, KalmanError> {
    let a = drift(sys)?;
    let path = simulate_exact(sys, horizon, dt, seed)?;
    let reference = discrete_filter(&a, dt, &path)?;
    let decomposition = marginal_decomposition(sys, horizon, dt)?;
    let x1: Vec<f64> = path.iter().map(|p| p[0]).collect();
    let x2: Vec<f64> = path.iter().map(|p| p[1]).collect();
    let xhat = decomposition.filter(&x1, &x2);
    let sq: f64 = xhat.iter().zip(&reference).map(|(u, v)| (u - v) * (u - v)).sum();
    let rms = (sq / xhat.len() as f64).sqrt();
    Ok(OracleReport { rms, dt, pass: rms < 10.0 * dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_loan_scalar_case() {
        // Decoupled components: F = e^{a dt}, Q = (e^{2 a dt} - 1) / (2 a).
        let a = Matrix3::from_diagonal(&Vector3::new(-1.0, 0.5, -2.0));
        let dt = 0.1;
        let (f, q) = transition(&a, dt);
        for (i, ai) in [-1.0f64, 0.5, -2.0].into_iter().enumerate() {
            assert!((f[(i, i)] - (ai * dt).exp()).abs() < 1e-14);
            assert!((q[(i, i)] - ((2.0 * ai * dt).exp() - 1.0) / (2.0 * ai)).abs() < 1e-14);
        }
        assert!(q[(0, 1)].abs() < 1e-16);
    }

    #[test]
    fn uncoupled_latent_filters_agree() {
        let sys = LinearSystem3::from_constants([0.2, 0.1, 0.0, -0.1, -0.3, 0.0, 0.4, 0.4, -1.0]);
        let r = kalman_oracle_check(&sys, 1.0, 1e-2, 1).unwrap();
        assert!(r.pass);
        // Without coupling both filters integrate the same drift; only discretization differs.
        assert!(r.rms < 1e-2);
    }

    #[test]
    fn generic_system_passes_and_converges() {
        let sys = LinearSystem3::from_constants([-0.5, 0.3, 0.8, 0.2, -0.4, 0.6, 0.1, -0.2, -0.3]);
        let coarse = kalman_oracle_check(&sys, 5.0, 2e-3, 11).unwrap();
        let fine = kalman_oracle_check(&sys, 5.0, 1e-3, 11).unwrap();
        assert!(coarse.pass && fine.pass, "{coarse:?} {fine:?}");
        assert!(fine.rms < coarse.rms);
    }

    #[test]
    fn time_varying_systems_are_rejected() {
        let mut sys = LinearSystem3::from_constants([0.0; 9]);
        sys.b[0] = super::super::Coefficient::time_varying(|t| t);
        assert!(matches!(kalman_oracle_check(&sys, 1.0, 0.1, 0), Err(KalmanError::Precondition(_))));
    }
}
