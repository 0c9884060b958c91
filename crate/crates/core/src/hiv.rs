//! HIV example models: descriptive two-slope viral load models, the
//! mechanistic CD4/virus ODE system with an event hazard, and fixture graphs.
//!
//! Numeric defaults are illustrative. They give a CD4 steady state near 1000
//! without infection and viral decay under treatment; they are not estimates.

use nalgebra::{Matrix6, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Cmp, Expr};
use crate::influence::InfluenceGraph;
use crate::model::{
    AttributeCorrelation, AttributeDecl, AttributeValue, ComponentSpec, InitialValue, InputSchedule, SystemSpec,
};
use crate::simulate::{observe_values, ObservationRecord, SimError, TrajectoryBundle};

#[derive(Debug, Error)]
pub enum HivError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("random-effect correlation matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("bundle lacks component `{0}`")]
    MissingComponent(String),
    #[error("log scale needs a positive viral load, got {value} in replicate {replicate} at step {step}")]
    NonPositiveLoad { replicate: usize, step: usize, value: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Two-slope linear mixed model for one marker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoSlopeParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sd_a0: f64,
    pub sd_a1: f64,
    pub sd_a2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub t_star: f64,
    pub sigma_w: f64,
    pub error_sd: f64,
    pub eta_det: f64,
}

impl Default for TwoSlopeParams {
    fn default() -> Self {
        TwoSlopeParams {
            beta0: 4.5,
            beta1: -1.5,
            beta2: -0.1,
            sd_a0: 0.5,
            sd_a1: 0.3,
            sd_a2: 0.05,
            gamma1: -0.5,
            gamma2: 0.0,
            t_star: 1.0,
            sigma_w: 0.2,
            error_sd: 0.3,
            eta_det: 1.7,
        }
    }
}

impl TwoSlopeParams {
    pub fn check(&self) -> Result<(), HivError> {
        let sds = [self.sd_a0, self.sd_a1, self.sd_a2, self.sigma_w, self.error_sd];
        if sds.iter().any(|s| !(*s >= 0.0)) {
            return Err(HivError::InvalidParams("standard deviations must be >= 0".into()));
        }
        if !(self.t_star > 0.0) {
            return Err(HivError::InvalidParams(format!("tStar must be > 0, got {}", self.t_star)));
        }
        Ok(())
    }
}

fn attr(name: &str, value: AttributeValue) -> AttributeDecl {
    AttributeDecl { name: name.to_string(), value }
}

fn two_slope_drift(b1: &str, b2: &str, t_star: &str, treatment: Option<(&str, &str, &str)>) -> Expr {
    let slope = |b: &str, g: Option<&str>, a: &str| match g {
        Some(g) => Expr::add(Expr::attr(b), Expr::mul(Expr::attr(g), Expr::attr(a))),
        None => Expr::attr(b),
    };
    let (g1, g2, a) = match treatment {
        Some((g1, g2, a)) => (Some(g1), Some(g2), a),
        None => (None, None, ""),
    };
    Expr::add(
        Expr::mul(slope(b1, g1, a), Expr::ind(Expr::Time, Cmp::Le, Expr::attr(t_star))),
        Expr::mul(slope(b2, g2, a), Expr::ind(Expr::Time, Cmp::Gt, Expr::attr(t_star))),
    )
}

/// Viral load `V` with random intercept and slopes, slope change at `tStar`
/// and treatment indicator `A` shifting both slopes.
pub fn build_two_slope(p: &TwoSlopeParams, treatment: bool) -> Result<SystemSpec, HivError> {
    p.check()?;
    let mut s = SystemSpec::new("two_slope");
    s.attributes = vec![
        attr("beta0p", AttributeValue::Gaussian { mean: p.beta0, sd: p.sd_a0 }),
        attr("beta1p", AttributeValue::Gaussian { mean: p.beta1, sd: p.sd_a1 }),
        attr("beta2p", AttributeValue::Gaussian { mean: p.beta2, sd: p.sd_a2 }),
        attr("A", AttributeValue::Fixed(if treatment { 1.0 } else { 0.0 })),
        attr("gamma1", AttributeValue::Fixed(p.gamma1)),
        attr("gamma2", AttributeValue::Fixed(p.gamma2)),
        attr("tStar", AttributeValue::Fixed(p.t_star)),
    ];
    s.components.push(ComponentSpec::diffusion(
        "V",
        two_slope_drift("beta1p", "beta2p", "tStar", Some(("gamma1", "gamma2", "A"))),
        Expr::c(p.sigma_w),
        InitialValue::Attr("beta0p".into()),
    ));
    Ok(s)
}

/// Order of the random effects in the bivariate correlation matrix.
pub const BIVARIATE_EFFECTS: [&str; 6] = ["V_b0", "V_b1", "V_b2", "Tbar_b0", "Tbar_b1", "Tbar_b2"];

/// Joint two-slope models for viral load `V` and CD4 `Tbar`, linked only
/// through correlated random effects ordered as [`BIVARIATE_EFFECTS`].
#[allow(clippy::needless_range_loop)]
pub fn build_bivariate_descriptive(
    viral: &TwoSlopeParams,
    cd4: &TwoSlopeParams,
    effect_corr: &[[f64; 6]; 6],
) -> Result<SystemSpec, HivError> {
    viral.check()?;
    cd4.check()?;
    for i in 0..6 {
        if effect_corr[i][i] != 1.0 {
            return Err(HivError::InvalidParams(format!("correlation diagonal entry {i} is not 1")));
        }
        for j in 0..6 {
            let r = effect_corr[i][j];
            if r != effect_corr[j][i] || !(-1.0..=1.0).contains(&r) {
                return Err(HivError::InvalidParams(format!("correlation entry ({i}, {j}) = {r} is invalid")));
            }
        }
    }
    let m = Matrix6::from_fn(|i, j| effect_corr[i][j]);
    let smallest = SymmetricEigen::new(m).eigenvalues.min();
    if smallest < -1e-10 {
        return Err(HivError::NotPositiveSemidefinite(smallest));
    }

    let mut s = SystemSpec::new("bivariate_descriptive");
    for (prefix, comp, p) in [("V", "V", viral), ("Tbar", "Tbar", cd4)] {
        let name = |suffix: &str| format!("{prefix}_{suffix}");
        s.attributes.extend([
            attr(&name("b0"), AttributeValue::Gaussian { mean: p.beta0, sd: p.sd_a0 }),
            attr(&name("b1"), AttributeValue::Gaussian { mean: p.beta1, sd: p.sd_a1 }),
            attr(&name("b2"), AttributeValue::Gaussian { mean: p.beta2, sd: p.sd_a2 }),
            attr(&name("tStar"), AttributeValue::Fixed(p.t_star)),
        ]);
        s.components.push(ComponentSpec::diffusion(
            comp,
            two_slope_drift(&name("b1"), &name("b2"), &name("tStar"), None),
            Expr::c(p.sigma_w),
            InitialValue::Attr(name("b0")),
        ));
    }
    for i in 0..6 {
        for j in i + 1..6 {
            if effect_corr[i][j] != 0.0 {
                s.correlations.push(AttributeCorrelation {
                    first: BIVARIATE_EFFECTS[i].into(),
                    second: BIVARIATE_EFFECTS[j].into(),
                    rho: effect_corr[i][j],
                });
            }
        }
    }
    Ok(s)
}

/// Parameters of the mechanistic model. `hazard_base`, `beta_q`, `beta_t`,
/// `beta_z` and `z` belong to the event hazard; the `*0` fields are initial values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MechanisticParams {
    pub lambda: f64,
    pub rho: f64,
    pub alpha: f64,
    pub mu_q: f64,
    pub mu_t: f64,
    pub mu_tstar: f64,
    pub mu_v: f64,
    pub gamma_inf: f64,
    pub eta_rt: f64,
    pub omega: f64,
    pub pi_prod: f64,
    pub hazard_base: f64,
    pub beta_q: f64,
    pub beta_t: f64,
    pub beta_z: f64,
    pub z: f64,
    pub q0: f64,
    pub t0: f64,
    pub tstar0: f64,
    pub vi0: f64,
    pub vni0: f64,
}

impl Default for MechanisticParams {
    fn default() -> Self {
        MechanisticParams {
            lambda: 25.0,
            rho: 0.01,
            alpha: 0.05,
            mu_q: 0.005,
            mu_t: 0.05,
            mu_tstar: 0.5,
            mu_v: 3.0,
            gamma_inf: 1e-3,
            eta_rt: 0.9,
            omega: 0.1,
            pi_prod: 200.0,
            hazard_base: 0.05,
            beta_q: -0.002,
            beta_t: -0.002,
            beta_z: 0.5,
            z: 0.0,
            q0: 500.0,
            t0: 450.0,
            tstar0: 0.0,
            vi0: 1.0,
            vni0: 0.0,
        }
    }
}

impl MechanisticParams {
    pub fn check(&self) -> Result<(), HivError> {
        let nonneg = [
            ("lambda", self.lambda),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("muQ", self.mu_q),
            ("muT", self.mu_t),
            ("muTstar", self.mu_tstar),
            ("muV", self.mu_v),
            ("gammaInf", self.gamma_inf),
            ("piProd", self.pi_prod),
            ("hazardBase", self.hazard_base),
        ];
        if let Some((name, v)) = nonneg.iter().find(|(_, v)| !(*v >= 0.0)) {
            return Err(HivError::InvalidParams(format!("{name} must be >= 0, got {v}")));
        }
        for (name, v) in [("etaRT", self.eta_rt), ("omega", self.omega)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(HivError::InvalidParams(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Uninfected steady state `(Q, T)`: `lambda + rho T = (alpha + muQ) Q`
    /// and `alpha Q = (rho + muT) T`.
    pub fn uninfected_steady_state(&self) -> (f64, f64) {
        let q = self.lambda / (self.alpha + self.mu_q - self.rho * self.alpha / (self.rho + self.mu_t));
        (q, self.alpha * q / (self.rho + self.mu_t))
    }
}

/// ODE system for quiescent `Q` and activated `T` CD4 cells, infected cells
/// `Tstar`, infectious `V_I` and non-infectious `V_NI` virus, with a
/// reverse-transcriptase treatment input `IRT` and a single event `D`.
/// Without a start time the treatment is never given.
pub fn build_mechanistic(p: &MechanisticParams, treatment_start: Option<f64>) -> Result<SystemSpec, HivError> {
    p.check()?;
    let a = Expr::attr;
    let c = Expr::comp;
    let mut s = SystemSpec::new("hiv_mechanistic");
    s.attributes = [
        ("lambda", p.lambda),
        ("rho", p.rho),
        ("alpha", p.alpha),
        ("muQ", p.mu_q),
        ("muT", p.mu_t),
        ("muTstar", p.mu_tstar),
        ("muV", p.mu_v),
        ("gammaInf", p.gamma_inf),
        ("etaRT", p.eta_rt),
        ("omega", p.omega),
        ("piProd", p.pi_prod),
        ("hazardBase", p.hazard_base),
        ("betaQ", p.beta_q),
        ("betaT", p.beta_t),
        ("betaZ", p.beta_z),
        ("Z", p.z),
    ]
    .into_iter()
    .map(|(n, v)| attr(n, AttributeValue::Fixed(v)))
    .collect();
    let breakpoints = match treatment_start {
        None => vec![(0.0, 0.0)],
        Some(t0) if t0 <= 0.0 => vec![(0.0, 1.0)],
        Some(t0) => vec![(0.0, 0.0), (t0, 1.0)],
    };
    s.inputs.push(InputSchedule { name: "IRT".into(), breakpoints });

    let infection = Expr::product([
        Expr::sub(Expr::c(1.0), Expr::mul(a("etaRT"), Expr::ind(Expr::input("IRT"), Cmp::Eq, Expr::c(1.0)))),
        a("gammaInf"),
        c("T"),
        c("V_I"),
    ]);
    let release = |share: Expr| Expr::product([share, a("muTstar"), a("piProd"), c("Tstar")]);
    let dq = Expr::sub(
        Expr::sub(Expr::add(a("lambda"), Expr::mul(a("rho"), c("T"))), Expr::mul(a("alpha"), c("Q"))),
        Expr::mul(a("muQ"), c("Q")),
    );
    let dt = Expr::sub(
        Expr::sub(Expr::sub(Expr::mul(a("alpha"), c("Q")), infection.clone()), Expr::mul(a("rho"), c("T"))),
        Expr::mul(a("muT"), c("T")),
    );
    let dtstar = Expr::sub(infection, Expr::mul(a("muTstar"), c("Tstar")));
    let dvi = Expr::sub(release(a("omega")), Expr::mul(a("muV"), c("V_I")));
    let dvni = Expr::sub(release(Expr::sub(Expr::c(1.0), a("omega"))), Expr::mul(a("muV"), c("V_NI")));
    let hazard = Expr::product([
        Expr::ind(c("D"), Cmp::Eq, Expr::c(0.0)),
        a("hazardBase"),
        Expr::exp(Expr::sum([
            Expr::mul(a("betaQ"), c("Q")),
            Expr::mul(a("betaT"), c("T")),
            Expr::mul(a("betaZ"), a("Z")),
        ])),
    ]);
    s.components = vec![
        ComponentSpec::ode("Q", dq, InitialValue::Fixed(p.q0)),
        ComponentSpec::ode("T", dt, InitialValue::Fixed(p.t0)),
        ComponentSpec::ode("Tstar", dtstar, InitialValue::Fixed(p.tstar0)),
        ComponentSpec::ode("V_I", dvi, InitialValue::Fixed(p.vi0)),
        ComponentSpec::ode("V_NI", dvni, InitialValue::Fixed(p.vni0)),
        ComponentSpec::counting("D", hazard),
    ];
    Ok(s)
}

/// Edges of the mechanistic model's influence graph.
pub const MECHANISTIC_EDGES: [(&str, &str); 11] = [
    ("T", "Q"),
    ("Q", "T"),
    ("V_I", "T"),
    ("IRT", "T"),
    ("T", "Tstar"),
    ("V_I", "Tstar"),
    ("IRT", "Tstar"),
    ("Tstar", "V_I"),
    ("Tstar", "V_NI"),
    ("Q", "D"),
    ("T", "D"),
];

/// Marker channels per replicate and grid point: viral load `VL = V_I + V_NI`
/// (optionally log10) and `CD4 = Q + T + Tstar`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedMarkers {
    pub log10_viral_load: bool,
    pub viral_load: Vec<Vec<f64>>,
    pub cd4: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    ViralLoad,
    Cd4,
}

impl Marker {
    pub fn name(self) -> &'static str {
        match self {
            Marker::ViralLoad => "VL",
            Marker::Cd4 => "CD4",
        }
    }
}

pub fn observed_markers(bundle: &TrajectoryBundle, log10_viral_load: bool) -> Result<ObservedMarkers, HivError> {
    let idx = |name: &str| bundle.component_index(name).ok_or_else(|| HivError::MissingComponent(name.into()));
    let (vi, vni) = (idx("V_I")?, idx("V_NI")?);
    let (q, t, ts) = (idx("Q")?, idx("T")?, idx("Tstar")?);
    let steps = bundle.time_grid.len();
    let mut viral_load = Vec::with_capacity(bundle.replicates.len());
    let mut cd4 = Vec::with_capacity(bundle.replicates.len());
    for r in 0..bundle.replicates.len() {
        let mut vl = Vec::with_capacity(steps);
        for step in 0..steps {
            let v = bundle.value(r, step, vi) + bundle.value(r, step, vni);
            if log10_viral_load {
                if !(v > 0.0) {
                    return Err(HivError::NonPositiveLoad { replicate: r, step, value: v });
                }
                vl.push(v.log10());
            } else {
                vl.push(v);
            }
        }
        viral_load.push(vl);
        cd4.push((0..steps).map(|s| bundle.value(r, s, q) + bundle.value(r, s, t) + bundle.value(r, s, ts)).collect());
    }
    Ok(ObservedMarkers { log10_viral_load, viral_load, cd4 })
}

impl ObservedMarkers {
    /// Noisy, possibly censored observations of one marker channel.
    pub fn observe(
        &self,
        bundle: &TrajectoryBundle,
        marker: Marker,
        times: &[f64],
        error_sd: f64,
        detection_limit: Option<f64>,
        seed: u64,
    ) -> Result<Vec<Vec<ObservationRecord>>, HivError> {
        let (values, offset) = match marker {
            Marker::ViralLoad => (&self.viral_load, 0),
            Marker::Cd4 => (&self.cd4, 1),
        };
        let channel_id = (bundle.components.len() + offset) as u64;
        Ok(observe_values(values, bundle, channel_id, marker.name(), times, error_sd, detection_limit, seed)?)
    }
}

/// Infection `I`, CD4 level `T`, AIDS `A` and death `D` as a chain.
pub fn influence_chain_demo() -> InfluenceGraph {
    InfluenceGraph::from_edges(["I", "T", "A", "D"], &[("I", "T"), ("T", "A"), ("A", "D")]).expect("fixed graph")
}

/// The mechanistic graph extended by measurement processes `VL` and `CD4`
/// that feed back into treatment through the physician. The edges into and
/// out of the measurement nodes are listed in `informational`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackGraph {
    pub graph: InfluenceGraph,
    pub informational: Vec<(String, String)>,
}

impl FeedbackGraph {
    pub fn is_informational(&self, from: &str, to: &str) -> bool {
        self.informational.iter().any(|(j, k)| j == from && k == to)
    }

    /// DOT with informational edges dotted and labeled.
    pub fn to_dot(&self, name: &str) -> String {
        self.graph.to_dot_with(name, |j, k| {
            self.is_informational(j, k).then(|| "style=dotted, label=\"informational\"".to_string())
        })
    }
}

pub fn doctor_feedback_graph() -> FeedbackGraph {
    let informational =
        [("V_I", "VL"), ("V_NI", "VL"), ("Q", "CD4"), ("T", "CD4"), ("Tstar", "CD4"), ("VL", "IRT"), ("CD4", "IRT")];
    let mut edges: Vec<(&str, &str)> = MECHANISTIC_EDGES.to_vec();
    edges.extend(informational);
    let graph = InfluenceGraph::from_edges(["Q", "T", "Tstar", "V_I", "V_NI", "D", "IRT", "VL", "CD4"], &edges)
        .expect("fixed graph");
    FeedbackGraph { graph, informational: informational.iter().map(|(j, k)| (j.to_string(), k.to_string())).collect() }
}
