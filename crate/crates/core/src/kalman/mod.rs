//! Three-component linear diffusion with unit noise, marginalized over its
//! third component by the Kalman-Bucy filter.
//!
//! The system is
//!
//! ```text
//! dX1 = (a1 X1 + b1 X2 + c1 X3) dt + dW1
//! dX2 = (a2 X1 + b2 X2 + c2 X3) dt + dW2
//! dX3 = (a3 X1 + b3 X2 + c3 X3) dt + dW3
//! ```
//!
//! started at zero. Given the history of `(X1, X2)`, the conditional variance
//! `R` of `X3` solves `R' = 2 c3 R + 1 - R^2 (c1^2 + c2^2)` from `R(0) = 0`.

mod construct;
mod oracle;

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use construct::{construct_unfaithful, B3Rule, UnfaithfulConstruction};
pub use oracle::{kalman_oracle_check, simulate_exact, OracleReport};

#[derive(Debug, Error, PartialEq)]
pub enum KalmanError {
    #[error("invalid grid: dt = {dt}, horizon = {horizon}")]
    InvalidGrid { dt: f64, horizon: f64 },
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("singular observation covariance at step {step}")]
    Singular { step: usize },
}

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A coefficient that is either constant or a smooth function of time.
#[derive(Clone)]
pub enum Coefficient {
    Const(f64),
    TimeVarying { value: TimeFn, derivative: Option<TimeFn> },
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(v) => write!(f, "Const({v})"),
            Coefficient::TimeVarying { derivative, .. } => {
                write!(f, "TimeVarying {{ derivative: {} }}", derivative.is_some())
            }
        }
    }
}

impl From<f64> for Coefficient {
    fn from(v: f64) -> Self {
        Coefficient::Const(v)
    }
}

impl Coefficient {
    pub fn time_varying(value: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::TimeVarying { value: Arc::new(value), derivative: None }
    }

    pub fn with_derivative(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Coefficient::TimeVarying { value: Arc::new(value), derivative: Some(Arc::new(derivative)) }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Coefficient::Const(v) => *v,
            Coefficient::TimeVarying { value, .. } => value(t),
        }
    }

    /// Time derivative; central differences when none was supplied.
    pub fn derivative_at(&self, t: f64) -> f64 {
        match self {
            Coefficient::Const(_) => 0.0,
            Coefficient::TimeVarying { derivative: Some(d), .. } => d(t),
            Coefficient::TimeVarying { value, derivative: None } => {
                let h = 1e-6 * t.abs().max(1.0);
                (value(t + h) - value(t - h)) / (2.0 * h)
            }
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Coefficient::Const(v) => Some(*v),
            Coefficient::TimeVarying { .. } => None,
        }
    }
}

/// Coefficients indexed by row: `a[i]`, `b[i]`, `c[i]` multiply `X1`, `X2`,
/// `X3` in the drift of component `i + 1`.
#[derive(Clone, Debug)]
pub struct LinearSystem3 {
    pub a: [Coefficient; 3],
    pub b: [Coefficient; 3],
    pub c: [Coefficient; 3],
}

impl LinearSystem3 {
    /// Builds a constant system from `a1,b1,c1,a2,b2,c2,a3,b3,c3`.
    pub fn from_constants(v: [f64; 9]) -> Self {
        let k = Coefficient::Const;
        LinearSystem3 { a: [k(v[0]), k(v[3]), k(v[6])], b: [k(v[1]), k(v[4]), k(v[7])], c: [k(v[2]), k(v[5]), k(v[8])] }
    }

    pub fn constants(&self) -> Option<[f64; 9]> {
        let mut out = [0.0; 9];
        for i in 0..3 {
            out[3 * i] = self.a[i].constant()?;
            out[3 * i + 1] = self.b[i].constant()?;
            out[3 * i + 2] = self.c[i].constant()?;
        }
        Some(out)
    }

    pub fn is_constant(&self) -> bool {
        self.constants().is_some()
    }

    /// Drift matrix at `t`, row `i` holding `(a_i, b_i, c_i)`.
    pub fn drift_matrix(&self, t: f64) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            *row = [self.a[i].at(t), self.b[i].at(t), self.c[i].at(t)];
        }
        m
    }

    /// The same system with `X1` and `X2` relabeled.
    pub fn swapped(&self) -> Self {
        let (a, b, c) = (&self.a, &self.b, &self.c);
        LinearSystem3 {
            a: [b[1].clone(), b[0].clone(), b[2].clone()],
            b: [a[1].clone(), a[0].clone(), a[2].clone()],
            c: [c[1].clone(), c[0].clone(), c[2].clone()],
        }
    }

    fn riccati_rhs(&self, t: f64, r: f64) -> f64 {
        let (c1, c2, c3) = (self.c[0].at(t), self.c[1].at(t), self.c[2].at(t));
        2.0 * c3 * r + 1.0 - r * r * (c1 * c1 + c2 * c2)
    }
}

fn grid(horizon: f64, dt: f64) -> Result<Vec<f64>, KalmanError> {
    if !(dt > 0.0 && horizon > 0.0 && dt.is_finite() && horizon.is_finite()) || horizon / dt > 1e8 {
        return Err(KalmanError::InvalidGrid { dt, horizon });
    }
    let n = (horizon / dt).round() as usize;
    Ok((0..=n).map(|i| i as f64 * dt).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub time_grid: Vec<f64>,
    pub r: Vec<f64>,
    /// Positive root of the steady-state quadratic, set once `|R'|` falls
    /// below `1e-10` on the grid (constant coefficients only).
    pub steady_state: Option<f64>,
    /// Constant coefficients with `c1 = c2 = 0` and `c3 >= 0`: `R` grows without bound.
    pub unbounded: bool,
}

/// Integrates the Riccati equation by RK4 on `0, dt, ..., horizon`.
pub fn riccati_solve(sys: &LinearSystem3, horizon: f64, dt: f64) -> Result<RiccatiSolution, KalmanError> {
    let time_grid = grid(horizon, dt)?;
    let mut r = Vec::with_capacity(time_grid.len());
    r.push(0.0);
    let mut settled = false;
    for (n, &t) in time_grid[..time_grid.len() - 1].iter().enumerate() {
        let x = r[n];
        let k1 = sys.riccati_rhs(t, x);
        settled |= k1.abs() < 1e-10;
        let k2 = sys.riccati_rhs(t + dt / 2.0, x + dt / 2.0 * k1);
        let k3 = sys.riccati_rhs(t + dt / 2.0, x + dt / 2.0 * k2);
        let k4 = sys.riccati_rhs(t + dt, x + dt * k3);
        let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return Err(KalmanError::NonFinite { step: n + 1 });
        }
        r.push(next);
    }
    let last = *time_grid.last().unwrap();
    settled |= sys.riccati_rhs(last, *r.last().unwrap()).abs() < 1e-10;

    let (mut steady_state, mut unbounded) = (None, false);
    if let Some(k) = sys.constants() {
        let (c1, c2, c3) = (k[2], k[5], k[8]);
        let s = c1 * c1 + c2 * c2;
        let root = if s > 0.0 {
            Some((c3 + (c3 * c3 + s).sqrt()) / s)
        } else if c3 < 0.0 {
            Some(-1.0 / (2.0 * c3))
        } else {
            None
        };
        unbounded = root.is_none();
        if settled {
            steady_state = root;
        }
    }
    Ok(RiccatiSolution { time_grid, r, steady_state, unbounded })
}

/// Filter for `X3` given `(X1, X2)` together with the marginal drifts of the
/// observed pair, tabulated on the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalDecomposition {
    pub time_grid: Vec<f64>,
    pub r: Vec<f64>,
    /// Drift coefficients of the filter on `(X1, X2, X3_hat)`.
    pub filter_drift: Vec<[f64; 3]>,
    /// Gains `(R c1, R c2)` on the increments of `X1` and `X2`.
    pub gains: Vec<[f64; 2]>,
    /// Marginal drift coefficients of `X1` and `X2` on `(X1, X2, X3_hat)`.
    pub marginal_drift: Vec<[[f64; 3]; 2]>,
}

pub fn marginal_decomposition(
    sys: &LinearSystem3,
    horizon: f64,
    dt: f64,
) -> Result<MarginalDecomposition, KalmanError> {
    let ric = riccati_solve(sys, horizon, dt)?;
    Ok(decompose(sys, ric))
}

pub(crate) fn decompose(sys: &LinearSystem3, ric: RiccatiSolution) -> MarginalDecomposition {
    let mut filter_drift = Vec::with_capacity(ric.r.len());
    let mut gains = Vec::with_capacity(ric.r.len());
    let mut marginal_drift = Vec::with_capacity(ric.r.len());
    for (&t, &r) in ric.time_grid.iter().zip(&ric.r) {
        let m = sys.drift_matrix(t);
        let [[a1, b1, c1], [a2, b2, c2], [a3, b3, c3]] = m;
        filter_drift.push([a3 - r * (a1 * c1 + a2 * c2), b3 - r * (b1 * c1 + b2 * c2), c3 - r * (c1 * c1 + c2 * c2)]);
        gains.push([r * c1, r * c2]);
        marginal_drift.push([m[0], m[1]]);
    }
    MarginalDecomposition { time_grid: ric.time_grid, r: ric.r, filter_drift, gains, marginal_drift }
}

impl MarginalDecomposition {
    pub fn dt(&self) -> f64 {
        self.time_grid.get(1).copied().unwrap_or(0.0)
    }

    /// Runs the filter along observed grid paths, Euler in time with the
    /// observed increments entering through the gains.
    pub fn filter(&self, x1: &[f64], x2: &[f64]) -> Vec<f64> {
        let dt = self.dt();
        let n = self.time_grid.len().min(x1.len()).min(x2.len());
        let mut xhat = Vec::with_capacity(n);
        xhat.push(0.0);
        for i in 0..n - 1 {
            let [f1, f2, f3] = self.filter_drift[i];
            let [g1, g2] = self.gains[i];
            let x = xhat[i];
            xhat.push(
                x + (f1 * x1[i] + f2 * x2[i] + f3 * x) * dt + g1 * (x1[i + 1] - x1[i]) + g2 * (x2[i + 1] - x2[i]),
            );
        }
        xhat
    }

    /// Marginal drift of observed component `i` (0 or 1) at grid `step`.
    pub fn drift_of(&self, i: usize, step: usize, x1: f64, x2: f64, x3_hat: f64) -> f64 {
        let [a, b, c] = self.marginal_drift[step][i];
        a * x1 + b * x2 + c * x3_hat
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FaithfulnessVerdict {
    /// `None` when the question is moot.
    pub faithful: Option<bool>,
    pub margin: f64,
    pub tol: f64,
    pub detail: String,
}

/// Whether `X2` keeps a direct influence on `X1` after marginalizing `X3`.
///
/// The `dX2` coefficient of `b1 X2 + c1 X3_hat` is `b1 + R c1 c2`. The
/// influence is lost only if it vanishes at every time, so the margin is its
/// largest absolute value on the grid. Isolated zero crossings are reported in
/// the detail text.
pub fn faithfulness_verdict(
    sys: &LinearSystem3,
    horizon: f64,
    dt: f64,
    tol: Option<f64>,
) -> Result<FaithfulnessVerdict, KalmanError> {
    faithfulness_verdict_directed(sys, 0, horizon, dt, tol)
}

/// As [`faithfulness_verdict`] with the roles of the observed pair chosen by
/// `target`: `0` asks about `X2` acting on `X1`, `1` about `X1` acting on `X2`.
pub fn faithfulness_verdict_directed(
    sys: &LinearSystem3,
    target: usize,
    horizon: f64,
    dt: f64,
    tol: Option<f64>,
) -> Result<FaithfulnessVerdict, KalmanError> {
    if target > 1 {
        return Err(KalmanError::Precondition(format!("target must be 0 or 1, got {target}")));
    }
    let ric = riccati_solve(sys, horizon, dt)?;
    let source = 1 - target;
    let (tn, sn) = (target + 1, source + 1);
    let cross = |t: f64| if target == 0 { sys.b[0].at(t) } else { sys.a[1].at(t) };

    let mut margin = 0.0f64;
    let mut max_cross = 0.0f64;
    let mut any_cc = false;
    let mut crossing: Option<f64> = None;
    let mut previous: Option<f64> = None;
    for (&t, &r) in ric.time_grid.iter().zip(&ric.r) {
        let b = cross(t);
        let cc = sys.c[target].at(t) * sys.c[source].at(t);
        let coefficient = b + r * cc;
        margin = margin.max(coefficient.abs());
        max_cross = max_cross.max(b.abs());
        any_cc |= cc != 0.0;
        if let Some(p) = previous {
            if crossing.is_none() && p * coefficient < 0.0 {
                crossing = Some(t);
            }
        }
        previous = Some(coefficient);
    }
    let tol = tol.unwrap_or(1e-6 * (1.0 + max_cross));
    let kind = if sys.is_constant() { "constant" } else { "time-varying" };

    if max_cross == 0.0 {
        return Ok(FaithfulnessVerdict {
            faithful: None,
            margin,
            tol,
            detail: format!("moot: X{sn} has no direct influence on X{tn} in the full system, so none can be lost"),
        });
    }
    let faithful = margin > tol;
    let mut detail = if !any_cc {
        format!(
            "c{tn} c{sn} = 0: the filter gain cannot cancel the X{sn} coefficient, so X{sn} keeps its direct influence on X{tn}"
        )
    } else if faithful {
        format!("X{sn} coefficient + R c{tn} c{sn} is not identically zero: X{sn} keeps its direct influence on X{tn}")
    } else {
        format!(
            "X{sn} coefficient + R c{tn} c{sn} vanishes on the whole grid: the dX{sn} term cancels in the marginal of X{tn}"
        )
    };
    if let (true, Some(t)) = (faithful, crossing) {
        detail.push_str(&format!("; it crosses zero near t = {t}"));
    }
    detail.push_str(&format!(" ({kind} coefficients)"));
    Ok(FaithfulnessVerdict { faithful: Some(faithful), margin, tol, detail })
}

/// Writes `t,R` rows.
pub fn write_riccati_csv(sol: &RiccatiSolution, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t,R")?;
    for (t, r) in sol.time_grid.iter().zip(&sol.r) {
        writeln!(w, "{t:.16e},{r:.16e}")?;
    }
    Ok(())
}

/// Writes the filter and marginal drift coefficients per grid point.
pub fn write_decomposition_csv(d: &MarginalDecomposition, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "t,R,filter_x1,filter_x2,filter_x3hat,gain_x1,gain_x2,x1_a,x1_b,x1_c,x2_a,x2_b,x2_c")?;
    for i in 0..d.time_grid.len() {
        write!(w, "{:.16e},{:.16e}", d.time_grid[i], d.r[i])?;
        for v in d.filter_drift[i].iter().chain(&d.gains[i]).chain(d.marginal_drift[i].iter().flatten()) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
