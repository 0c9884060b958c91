//! Monte Carlo simulation of system specs, the noisy censored observation
//! scheme, and empirical moment checks.

mod engine;
mod rng;

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::influence::{derive_graph, InfluenceError};
use crate::model::{ComponentKind, ValidationReport};
use crate::SystemSpec;

pub use engine::{simulate, Replicate, SimConfig, SimWarnings, TrajectoryBundle, COARSE_INTENSITY_STEP};
pub use rng::{component_channel, stream, ATTRIBUTE_CHANNEL};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("spec is not valid ({} violations)", .0.violations.len())]
    InvalidSpec(ValidationReport),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite state in replicate {replicate} at step {step}, component `{component}`")]
    NonFinite { replicate: usize, step: usize, component: String },
    #[error("evaluation failed in replicate {replicate} at step {step}, component `{component}`: {source}")]
    Eval { replicate: usize, step: usize, component: String, source: EvalError },
    #[error(transparent)]
    Compile(#[from] EvalError),
    #[error("attribute correlation matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("time {time} is outside [0, {horizon}]")]
    TimeOutOfRange { time: f64, horizon: f64 },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("need at least 2 replicates, got {0}")]
    InsufficientReplicates(usize),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservationRecord {
    pub replicate: usize,
    pub channel: String,
    pub time: f64,
    pub detected: bool,
    pub value: Option<f64>,
    pub error_sd: f64,
    pub detection_limit: Option<f64>,
}

/// Observes `channel` at `times` in every replicate with additive Gaussian
/// error of standard deviation `error_sd`. With a detection limit, a record is
/// detected only if the noisy value exceeds it, and only detected records
/// carry a value.
pub fn observe(
    bundle: &TrajectoryBundle,
    channel: &str,
    times: &[f64],
    error_sd: f64,
    detection_limit: Option<f64>,
    seed: u64,
) -> Result<Vec<Vec<ObservationRecord>>, SimError> {
    let c = bundle.component_index(channel).ok_or_else(|| SimError::UnknownChannel(channel.to_string()))?;
    let values: Vec<Vec<f64>> = (0..bundle.replicates.len()).map(|r| bundle.path(r, c).collect()).collect();
    observe_values(&values, bundle, c as u64, channel, times, error_sd, detection_limit, seed)
}

/// Like [`observe`], over an arbitrary per-replicate series on the bundle's grid.
#[allow(clippy::too_many_arguments)]
pub(crate) fn observe_values(
    values: &[Vec<f64>],
    bundle: &TrajectoryBundle,
    channel_id: u64,
    channel: &str,
    times: &[f64],
    error_sd: f64,
    detection_limit: Option<f64>,
    seed: u64,
) -> Result<Vec<Vec<ObservationRecord>>, SimError> {
    if !(error_sd >= 0.0) {
        return Err(SimError::Precondition(format!("error sd must be >= 0, got {error_sd}")));
    }
    let steps = times.iter().map(|&t| bundle.step_at_or_before(t)).collect::<Result<Vec<_>, _>>()?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(r, series)| {
            let mut rng = stream(seed, r as u64, component_channel(channel_id as usize));
            times
                .iter()
                .zip(&steps)
                .map(|(&time, &step)| {
                    let z: f64 = rng.sample(StandardNormal);
                    let raw = series[step] + error_sd * z;
                    let detected = detection_limit.is_none_or(|eta| raw > eta);
                    ObservationRecord {
                        replicate: r,
                        channel: channel.to_string(),
                        time,
                        detected,
                        value: detected.then_some(raw),
                        error_sd,
                        detection_limit,
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub components: Vec<String>,
    pub mean: Vec<f64>,
    /// Unbiased sample covariance, row-major.
    pub covariance: Vec<Vec<f64>>,
    /// Standard error of each mean.
    pub mean_se: Vec<f64>,
    /// Standard error of each covariance entry.
    pub covariance_se: Vec<Vec<f64>>,
}

/// Cross-replicate moments of `components` at the grid point at or before `time`.
pub fn empirical_moments(bundle: &TrajectoryBundle, components: &[&str], time: f64) -> Result<Moments, SimError> {
    let idx = components
        .iter()
        .map(|c| bundle.component_index(c).ok_or_else(|| SimError::UnknownChannel(c.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let step = bundle.step_at_or_before(time)?;
    let samples: Vec<Vec<f64>> =
        idx.iter().map(|&c| (0..bundle.replicates.len()).map(|r| bundle.value(r, step, c)).collect()).collect();
    let mut m = moments_of(&samples)?;
    m.components = components.iter().map(|c| c.to_string()).collect();
    Ok(m)
}

/// Moments of column samples `samples[i][r]`.
pub fn moments_of(samples: &[Vec<f64>]) -> Result<Moments, SimError> {
    let n = samples.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(SimError::InsufficientReplicates(n));
    }
    let nf = n as f64;
    let mean: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / nf).collect();
    let d = samples.len();
    let mut covariance = vec![vec![0.0; d]; d];
    let mut covariance_se = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = (0..n).map(|r| (samples[i][r] - mean[i]) * (samples[j][r] - mean[j])).collect();
            let c = prods.iter().sum::<f64>() / (nf - 1.0);
            let m2 = prods.iter().sum::<f64>() / nf;
            let m22 = prods.iter().map(|p| p * p).sum::<f64>() / nf;
            covariance[i][j] = c;
            covariance_se[i][j] = ((m22 - m2 * m2).max(0.0) / nf).sqrt();
        }
    }
    let mean_se = (0..d).map(|i| (covariance[i][i] / nf).sqrt()).collect();
    Ok(Moments { components: Vec::new(), mean, covariance, mean_se, covariance_se })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceCheck {
    pub corr: f64,
    /// Large-sample standard error of the correlation, `(1 - r^2) / sqrt(n - 1)`.
    pub se: f64,
    /// Whether the graph predicts independence of the two components.
    pub predicted_independent: bool,
    /// Whether `|corr| > 3 se`.
    pub correlation_detected: bool,
    /// False only when independence is predicted but a correlation is detected.
    pub consistent: bool,
}

/// Monte Carlo check that dynamically independent diffusions are uncorrelated
/// at `time`. The spec must have no random attributes.
pub fn lemma4_mc_check(
    spec: &SystemSpec,
    j: &str,
    k: &str,
    cfg: &SimConfig,
    time: f64,
) -> Result<IndependenceCheck, SimError> {
    if spec.has_random_attributes() {
        return Err(SimError::Precondition("random attributes make the components dependent; fix them first".into()));
    }
    for name in [j, k] {
        match spec.component(name) {
            Some(c) if c.kind == ComponentKind::Diffusion => {}
            Some(_) => return Err(SimError::Precondition(format!("`{name}` is not a diffusion component"))),
            None => return Err(SimError::UnknownChannel(name.to_string())),
        }
    }
    let graph = derive_graph(spec)?;
    let predicted_independent = graph.dynamical_independence(j, k)?.holds;
    let bundle = simulate(spec, cfg)?;
    let m = empirical_moments(&bundle, &[j, k], time)?;
    let denom = (m.covariance[0][0] * m.covariance[1][1]).sqrt();
    let corr = if denom > 0.0 { m.covariance[0][1] / denom } else { 0.0 };
    let n = bundle.replicates.len() as f64;
    let se = (1.0 - corr * corr) / (n - 1.0).sqrt();
    let correlation_detected = corr.abs() > 3.0 * se;
    Ok(IndependenceCheck {
        corr,
        se,
        predicted_independent,
        correlation_detected,
        consistent: !(predicted_independent && correlation_detected),
    })
}

/// Writes `replicate,time,<components...>` rows.
pub fn write_trajectories_csv(bundle: &TrajectoryBundle, mut w: impl Write) -> io::Result<()> {
    write!(w, "replicate,time")?;
    for c in &bundle.components {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    let n = bundle.components.len();
    for (r, rep) in bundle.replicates.iter().enumerate() {
        for (step, t) in bundle.time_grid.iter().enumerate() {
            write!(w, "{r},{t:.16e}")?;
            for v in &rep.states[step * n..(step + 1) * n] {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Writes `replicate,channel,time,detected,value` rows; undetected values are empty.
pub fn write_observations_csv(records: &[Vec<ObservationRecord>], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "replicate,channel,time,detected,value")?;
    for rec in records.iter().flatten() {
        write!(w, "{},{},{:.16e},{},", rec.replicate, rec.channel, rec.time, u8::from(rec.detected))?;
        if let Some(v) = rec.value {
            write!(w, "{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
