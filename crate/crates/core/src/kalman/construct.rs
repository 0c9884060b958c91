//! Time-varying systems in which `X2` loses its direct influence on `X1`
//! after marginalizing `X3`.

use std::sync::Arc;

use serde::Serialize;

use super::{riccati_solve, Coefficient, KalmanError, LinearSystem3, RiccatiSolution};

/// How `b3` is chosen once `b1 = -R c1 c2` is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum B3Rule {
    /// `b3 = R (b2 c2 + c2' + c2 - c2 c3) + R^2 c2^3`.
    Printed,
    /// `b3 = R (b2 c2 + c2' + c2 c3) + c2 - R^2 c1^2 c2`, which makes
    /// `b1 X2 + c1 X3_hat` evolve as a function of itself and `X1`.
    Closure,
}

#[derive(Clone, Debug)]
pub struct UnfaithfulConstruction {
    pub system: LinearSystem3,
    pub riccati: RiccatiSolution,
    pub rule: B3Rule,
    /// Max over the grid of `|b1 + R c1 c2|`, the `dX2` coefficient of `b1 X2 + c1 X3_hat`.
    pub dx2_coefficient_max: f64,
    /// Max over the grid of `|c1 K2 - b1 K3|`, where `K2` and `K3` are the
    /// `X2` and `X3_hat` drift coefficients of `d(b1 X2 + c1 X3_hat)`. Zero
    /// when the combination closes on itself.
    pub closure_residual: f64,
    /// Whether `closure_residual` is within `1e-6`.
    pub closes: bool,
    /// `c1` or `c2` vanishes on the whole grid, making `b1` identically zero.
    pub degenerate: bool,
}

/// Cubic Hermite interpolant of a grid solution with known slopes.
struct Hermite {
    dt: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Hermite {
    fn eval(&self, t: f64) -> (f64, f64) {
        let last = self.values.len() - 1;
        let pos = (t / self.dt).clamp(0.0, last as f64);
        let n = (pos.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return (self.values[0], self.slopes[0]);
        }
        let u = pos - n as f64;
        let (p0, p1) = (self.values[n], self.values[n + 1]);
        let (m0, m1) = (self.slopes[n] * self.dt, self.slopes[n + 1] * self.dt);
        let (u2, u3) = (u * u, u * u * u);
        let value =
            (2.0 * u3 - 3.0 * u2 + 1.0) * p0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * p1 + (u3 - u2) * m1;
        let slope = ((6.0 * u2 - 6.0 * u) * p0
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (-6.0 * u2 + 6.0 * u) * p1
            + (3.0 * u2 - 2.0 * u) * m1)
            / self.dt;
        (value, slope)
    }
}

/// Solves the Riccati equation for the given `c1, c2, c3`, then sets
/// `b1 = -R c1 c2` and `b3` by `rule`. The `a` coefficients are zero. Between
/// grid points `R` is the cubic Hermite interpolant of the RK4 solution.
pub fn construct_unfaithful(
    c1: Coefficient,
    c2: Coefficient,
    c3: Coefficient,
    b2: Coefficient,
    horizon: f64,
    dt: f64,
    rule: B3Rule,
) -> Result<UnfaithfulConstruction, KalmanError> {
    let zero = || Coefficient::Const(0.0);
    let probe = LinearSystem3 {
        a: [zero(), zero(), zero()],
        b: [zero(), b2.clone(), zero()],
        c: [c1.clone(), c2.clone(), c3.clone()],
    };
    let riccati = riccati_solve(&probe, horizon, dt)?;
    let slopes = riccati.time_grid.iter().zip(&riccati.r).map(|(&t, &r)| probe.riccati_rhs(t, r)).collect();
    let r = Arc::new(Hermite { dt, values: riccati.r.clone(), slopes });

    let b1 = {
        let (r, c1, c2) = (r.clone(), c1.clone(), c2.clone());
        let (rd, c1d, c2d) = (r.clone(), c1.clone(), c2.clone());
        Coefficient::with_derivative(
            move |t| -r.eval(t).0 * c1.at(t) * c2.at(t),
            move |t| {
                let (rv, rs) = rd.eval(t);
                let (u, v) = (c1d.at(t), c2d.at(t));
                -(rs * u * v + rv * c1d.derivative_at(t) * v + rv * u * c2d.derivative_at(t))
            },
        )
    };
    let b3 = {
        let (r, c1, c2, c3, b2) = (r.clone(), c1.clone(), c2.clone(), c3.clone(), b2.clone());
        Coefficient::time_varying(move |t| {
            let rv = r.eval(t).0;
            let (u, v, w, b) = (c1.at(t), c2.at(t), c3.at(t), b2.at(t));
            let v_dot = c2.derivative_at(t);
            match rule {
                B3Rule::Printed => rv * (b * v + v_dot + v - v * w) + rv * rv * v * v * v,
                B3Rule::Closure => rv * (b * v + v_dot + v * w) + v - rv * rv * u * u * v,
            }
        })
    };
    let system = LinearSystem3 { a: [zero(), zero(), zero()], b: [b1, b2, b3], c: [c1, c2, c3] };

    let mut dx2_coefficient_max = 0.0f64;
    let mut closure_residual = 0.0f64;
    let mut degenerate = true;
    for (&t, &rv) in riccati.time_grid.iter().zip(&riccati.r) {
        let [[_, b1, c1], [_, b2, c2], [_, b3, c3]] = system.drift_matrix(t);
        degenerate &= c1 * c2 == 0.0;
        dx2_coefficient_max = dx2_coefficient_max.max((b1 + rv * c1 * c2).abs());
        let k2 = system.b[0].derivative_at(t) + c1 * (b3 - rv * (b1 * c1 + b2 * c2));
        let k3 = system.c[0].derivative_at(t) + c1 * (c3 - rv * (c1 * c1 + c2 * c2));
        closure_residual = closure_residual.max((c1 * k2 - b1 * k3).abs());
    }
    Ok(UnfaithfulConstruction {
        system,
        riccati,
        rule,
        dx2_coefficient_max,
        closure_residual,
        closes: closure_residual <= 1e-6,
        degenerate,
    })
}
