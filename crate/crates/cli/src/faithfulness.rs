use clap::ValueEnum;
use dynograph_core::kalman::{
    construct_unfaithful, faithfulness_verdict, faithfulness_verdict_directed, riccati_solve, write_decomposition_csv,
    write_riccati_csv, B3Rule, Coefficient, FaithfulnessVerdict, KalmanError, LinearSystem3, MarginalDecomposition,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const COEFFICIENT_NAMES: [&str; 9] = ["a1", "b1", "c1", "a2", "b2", "c2", "a3", "b3", "c3"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum B3RuleArg {
    Printed,
    Closure,
}

impl From<B3RuleArg> for B3Rule {
    fn from(r: B3RuleArg) -> Self {
        match r {
            B3RuleArg::Printed => B3Rule::Printed,
            B3RuleArg::Closure => B3Rule::Closure,
        }
    }
}

/// Nine comma-separated numbers in the order `a1,b1,c1,a2,b2,c2,a3,b3,c3`.
pub fn parse_coeff_list(raw: &str) -> CliResult<[f64; 9]> {
    let values: Vec<f64> = raw
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::validation(format!("bad coefficient `{v}`"))))
        .collect::<Result<_, _>>()?;
    finite9(&values)
}

/// A JSON array of nine numbers, or an object keyed `a1` ... `c3`.
pub fn parse_coeff_json(text: &str) -> CliResult<[f64; 9]> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("coefficient file: {e}")))?;
    let number = |v: &serde_json::Value, what: &str| {
        v.as_f64().ok_or_else(|| CliError::validation(format!("coefficient {what} is not a number")))
    };
    let values: Vec<f64> = match &value {
        serde_json::Value::Array(items) => {
            items.iter().enumerate().map(|(i, v)| number(v, &format!("#{}", i + 1))).collect::<Result<_, _>>()?
        }
        serde_json::Value::Object(map) => {
            if let Some(extra) = map.keys().find(|k| !COEFFICIENT_NAMES.contains(&k.as_str())) {
                return Err(CliError::validation(format!("unknown coefficient `{extra}`")));
            }
            COEFFICIENT_NAMES
                .iter()
                .map(|k| {
                    map.get(*k)
                        .ok_or_else(|| CliError::validation(format!("coefficient `{k}` is missing")))
                        .and_then(|v| number(v, k))
                })
                .collect::<Result<_, _>>()?
        }
        _ => return Err(CliError::validation("coefficient file must hold an array or an object")),
    };
    finite9(&values)
}

fn finite9(values: &[f64]) -> CliResult<[f64; 9]> {
    let arr: [f64; 9] = values
        .try_into()
        .map_err(|_| CliError::validation(format!("expected 9 coefficients, got {}", values.len())))?;
    if let Some(i) = arr.iter().position(|v| !v.is_finite()) {
        return Err(CliError::validation(format!("coefficient {} is not finite", COEFFICIENT_NAMES[i])));
    }
    Ok(arr)
}

#[derive(Debug, Serialize)]
pub struct ConstructionReport {
    pub rule: B3Rule,
    /// Inputs taken from the coefficient list; the rest are replaced.
    pub used: [&'static str; 4],
    pub dx2_coefficient_max: f64,
    pub closure_residual: f64,
    pub closes: bool,
    pub degenerate: bool,
}

/// Constant values, or `null` for coefficients the construction made time-varying.
#[derive(Debug, PartialEq, Serialize)]
pub struct Coefficients {
    pub a1: Option<f64>,
    pub b1: Option<f64>,
    pub c1: Option<f64>,
    pub a2: Option<f64>,
    pub b2: Option<f64>,
    pub c2: Option<f64>,
    pub a3: Option<f64>,
    pub b3: Option<f64>,
    pub c3: Option<f64>,
}

impl Coefficients {
    fn of(sys: &LinearSystem3) -> Self {
        let [a, b, c] = [&sys.a, &sys.b, &sys.c].map(|row| row.each_ref().map(Coefficient::constant));
        Coefficients { a1: a[0], b1: b[0], c1: c[0], a2: a[1], b2: b[1], c2: c[1], a3: a[2], b3: b[2], c3: c[2] }
    }
}

#[derive(Debug, Serialize)]
pub struct RiccatiSummary {
    pub final_value: f64,
    pub steady_state: Option<f64>,
    pub unbounded: bool,
}

#[derive(Debug, Serialize)]
pub struct FaithfulnessReport {
    pub coefficients: Coefficients,
    pub horizon: f64,
    pub dt: f64,
    /// Does `X2` keep its direct influence on `X1` once `X3` is marginalized.
    pub x2_on_x1: FaithfulnessVerdict,
    /// Does `X1` keep its direct influence on `X2`.
    pub x1_on_x2: FaithfulnessVerdict,
    pub riccati: RiccatiSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub construction: Option<ConstructionReport>,
}

pub struct FaithfulnessArgs {
    pub coefficients: [f64; 9],
    pub horizon: f64,
    pub dt: f64,
    pub tol: Option<f64>,
    pub construct: Option<B3RuleArg>,
}

pub struct FaithfulnessRun {
    pub report: FaithfulnessReport,
    pub system: LinearSystem3,
    pub trace: Vec<u8>,
}

fn numeric(e: KalmanError) -> CliError {
    match e {
        KalmanError::InvalidGrid { .. } | KalmanError::Precondition(_) => CliError::usage(e.to_string()),
        _ => CliError::runtime(e.to_string()),
    }
}

pub fn run(args: &FaithfulnessArgs) -> CliResult<FaithfulnessRun> {
    let k = args.coefficients;
    let (system, construction) = match args.construct {
        None => (LinearSystem3::from_constants(k), None),
        Some(rule) => {
            let c = Coefficient::Const;
            let u = construct_unfaithful(c(k[2]), c(k[5]), c(k[8]), c(k[4]), args.horizon, args.dt, rule.into())
                .map_err(numeric)?;
            let report = ConstructionReport {
                rule: u.rule,
                used: ["b2", "c1", "c2", "c3"],
                dx2_coefficient_max: u.dx2_coefficient_max,
                closure_residual: u.closure_residual,
                closes: u.closes,
                degenerate: u.degenerate,
            };
            (u.system, Some(report))
        }
    };
    let ric = riccati_solve(&system, args.horizon, args.dt).map_err(numeric)?;
    let x2_on_x1 = faithfulness_verdict(&system, args.horizon, args.dt, args.tol).map_err(numeric)?;
    let x1_on_x2 = faithfulness_verdict_directed(&system, 1, args.horizon, args.dt, args.tol).map_err(numeric)?;

    let mut trace = Vec::new();
    if construction.is_some() {
        trace.extend_from_slice(b"t,R,b1,b3\n");
        for (t, r) in ric.time_grid.iter().zip(&ric.r) {
            let (b1, b3) = (system.b[0].at(*t), system.b[2].at(*t));
            trace.extend_from_slice(format!("{t:.16e},{r:.16e},{b1:.16e},{b3:.16e}\n").as_bytes());
        }
    } else {
        write_riccati_csv(&ric, &mut trace).expect("writing to memory");
    }

    let coefficients = Coefficients::of(&system);
    let riccati = RiccatiSummary {
        final_value: *ric.r.last().expect("grid is non-empty"),
        steady_state: ric.steady_state,
        unbounded: ric.unbounded,
    };
    let report = FaithfulnessReport {
        coefficients,
        horizon: args.horizon,
        dt: args.dt,
        x2_on_x1,
        x1_on_x2,
        riccati,
        construction,
    };
    Ok(FaithfulnessRun { report, system, trace })
}

pub fn decomposition_csv(d: &MarginalDecomposition) -> Vec<u8> {
    let mut buf = Vec::new();
    write_decomposition_csv(d, &mut buf).expect("writing to memory");
    buf
}

pub fn report_json(report: &FaithfulnessReport) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text.into_bytes()
}
