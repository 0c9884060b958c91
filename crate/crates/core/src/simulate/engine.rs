use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::rng::{component_channel, stream, ATTRIBUTE_CHANNEL};
use super::SimError;
use crate::expr::{CompiledExpr, Env};
use crate::model::{validate, ComponentKind, InitialValue, SystemSpec};

/// Intensity times step above which counting simulation is flagged as coarse.
pub const COARSE_INTENSITY_STEP: f64 = 0.1;
const MAX_STEPS: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub replicates: usize,
    pub master_seed: u64,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, replicates: usize, master_seed: u64) -> Self {
        SimConfig { dt, horizon, replicates, master_seed }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Validates the grid and the replicate count.
    pub fn check(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SimError::InvalidConfig(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.horizon / self.dt > MAX_STEPS {
            return Err(SimError::InvalidConfig(format!(
                "horizon / dt = {} exceeds the 1e8 step limit",
                self.horizon / self.dt
            )));
        }
        if self.replicates == 0 {
            return Err(SimError::InvalidConfig("at least one replicate is required".into()));
        }
        Ok(())
    }
}

/// Per-run warning counters, summed over replicates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimWarnings {
    /// Steps at which a negative intensity was clamped to zero.
    pub negative_intensity: u64,
    /// Steps at which intensity * dt exceeded [`COARSE_INTENSITY_STEP`].
    pub coarse_intensity: u64,
}

impl SimWarnings {
    fn merge(&mut self, other: SimWarnings) {
        self.negative_intensity += other.negative_intensity;
        self.coarse_intensity += other.coarse_intensity;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replicate {
    /// Realized attribute values, in declaration order.
    pub attributes: Vec<f64>,
    /// Row-major `(steps + 1) x components` state matrix.
    pub states: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBundle {
    pub components: Vec<String>,
    pub kinds: Vec<ComponentKind>,
    pub attribute_names: Vec<String>,
    pub dt: f64,
    pub time_grid: Vec<f64>,
    pub replicates: Vec<Replicate>,
    pub warnings: SimWarnings,
}

impl TrajectoryBundle {
    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c == name)
    }

    pub fn horizon(&self) -> f64 {
        *self.time_grid.last().unwrap_or(&0.0)
    }

    pub fn value(&self, replicate: usize, step: usize, component: usize) -> f64 {
        self.replicates[replicate].states[step * self.components.len() + component]
    }

    pub fn path(&self, replicate: usize, component: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.components.len();
        self.replicates[replicate].states.iter().skip(component).step_by(n).copied()
    }

    /// Grid index of the last grid point at or before `time`.
    pub fn step_at_or_before(&self, time: f64) -> Result<usize, SimError> {
        let horizon = self.horizon();
        let slack = 1e-9 * self.dt;
        if !(time >= -slack && time <= horizon + slack) {
            return Err(SimError::TimeOutOfRange { time, horizon });
        }
        let idx = ((time + slack) / self.dt).floor() as usize;
        Ok(idx.min(self.time_grid.len() - 1))
    }
}

/// Joint Gaussian sampler for the random attributes of a spec.
struct AttributeSampler {
    means: Vec<f64>,
    /// Indices of attributes drawn randomly.
    random: Vec<usize>,
    /// Lower factor `L` with `L L^T` the covariance of the random block.
    factor: DMatrix<f64>,
}

impl AttributeSampler {
    fn new(spec: &SystemSpec) -> Result<Self, SimError> {
        let means: Vec<f64> = spec.attributes.iter().map(|a| a.value.mean()).collect();
        let random: Vec<usize> =
            spec.attributes.iter().enumerate().filter(|(_, a)| a.value.is_random()).map(|(i, _)| i).collect();
        let sds: Vec<f64> = random.iter().map(|&i| spec.attributes[i].value.sd()).collect();
        let n = random.len();
        let mut cov = DMatrix::from_diagonal(&DVector::from_iterator(n, sds.iter().map(|s| s * s)));
        for c in &spec.correlations {
            let pos = |name: &str| random.iter().position(|&i| spec.attributes[i].name == name);
            if let (Some(p), Some(q)) = (pos(&c.first), pos(&c.second)) {
                if p != q {
                    cov[(p, q)] = c.rho * sds[p] * sds[q];
                    cov[(q, p)] = cov[(p, q)];
                }
            }
        }
        let factor = match cov.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let eig = cov.symmetric_eigen();
                let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
                    return Err(SimError::NotPositiveSemidefinite);
                }
                let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        };
        Ok(AttributeSampler { means, random, factor })
    }

    fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut values = self.means.clone();
        let z = DVector::from_iterator(self.random.len(), (0..self.random.len()).map(|_| rng.sample(StandardNormal)));
        let x = &self.factor * z;
        for (k, &i) in self.random.iter().enumerate() {
            values[i] += x[k];
        }
        values
    }
}

struct Compiled {
    kinds: Vec<ComponentKind>,
    drifts: Vec<CompiledExpr>,
    sigmas: Vec<Option<CompiledExpr>>,
    ode: Vec<usize>,
}

fn eval_at(e: &CompiledExpr, env: &Env<'_>, replicate: usize, step: usize, component: &str) -> Result<f64, SimError> {
    e.eval(env).map_err(|source| SimError::Eval { replicate, step, component: component.to_string(), source })
}

/// Simulates every replicate of `spec` on the grid `0, dt, ..., horizon`.
///
/// Each step snapshots the left-limit state, then advances diffusions by an
/// Euler-Maruyama step, counting components by a Bernoulli draw with
/// probability `min(intensity * dt, 1)`, and deterministic components jointly
/// by one RK4 step with the other components held at their left limits.
/// Replicates run on the current rayon pool; output does not depend on it.
pub fn simulate(spec: &SystemSpec, cfg: &SimConfig) -> Result<TrajectoryBundle, SimError> {
    let report = validate(spec);
    if !report.is_empty() {
        return Err(SimError::InvalidSpec(report));
    }
    cfg.check()?;

    let symbols = spec.symbols();
    let compiled = Compiled {
        kinds: spec.components.iter().map(|c| c.kind).collect(),
        drifts: spec.components.iter().map(|c| c.drift.compile(&symbols)).collect::<Result<_, _>>()?,
        sigmas: spec
            .components
            .iter()
            .map(|c| c.sigma.as_ref().map(|s| s.compile(&symbols)).transpose())
            .collect::<Result<_, _>>()?,
        ode: spec
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ComponentKind::DeterministicOde)
            .map(|(i, _)| i)
            .collect(),
    };
    let sampler = AttributeSampler::new(spec)?;
    let steps = cfg.steps();

    let results: Vec<Result<(Replicate, SimWarnings), SimError>> =
        (0..cfg.replicates).into_par_iter().map(|r| run_replicate(spec, cfg, &compiled, &sampler, steps, r)).collect();

    let mut replicates = Vec::with_capacity(cfg.replicates);
    let mut warnings = SimWarnings::default();
    for result in results {
        let (rep, w) = result?;
        warnings.merge(w);
        replicates.push(rep);
    }
    Ok(TrajectoryBundle {
        components: spec.components.iter().map(|c| c.name.clone()).collect(),
        kinds: compiled.kinds,
        attribute_names: spec.attributes.iter().map(|a| a.name.clone()).collect(),
        dt: cfg.dt,
        time_grid: (0..=steps).map(|n| n as f64 * cfg.dt).collect(),
        replicates,
        warnings,
    })
}

fn run_replicate(
    spec: &SystemSpec,
    cfg: &SimConfig,
    compiled: &Compiled,
    sampler: &AttributeSampler,
    steps: usize,
    r: usize,
) -> Result<(Replicate, SimWarnings), SimError> {
    let n = spec.components.len();
    let attributes = sampler.draw(&mut stream(cfg.master_seed, r as u64, ATTRIBUTE_CHANNEL));
    let mut rngs: Vec<_> = (0..n).map(|c| stream(cfg.master_seed, r as u64, component_channel(c))).collect();

    let mut state: Vec<f64> = spec
        .components
        .iter()
        .map(|c| match &c.init {
            InitialValue::Fixed(v) => *v,
            InitialValue::Attr(a) => attributes[spec.attributes.iter().position(|d| &d.name == a).expect("validated")],
        })
        .collect();
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend_from_slice(&state);
    let mut warnings = SimWarnings::default();

    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let mut left = vec![0.0; n];
    let mut inputs = vec![0.0; spec.inputs.len()];
    let mut stage = vec![0.0; n];
    let m = compiled.ode.len();
    let mut k = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];

    for step in 0..steps {
        let t = step as f64 * dt;
        left.copy_from_slice(&state);
        for (v, input) in inputs.iter_mut().zip(&spec.inputs) {
            *v = input.left_limit(t);
        }
        let env = Env { time: t, states: &left, attributes: &attributes, inputs: &inputs };

        for c in 0..n {
            let name = &spec.components[c].name;
            match compiled.kinds[c] {
                ComponentKind::Diffusion => {
                    let z: f64 = rngs[c].sample(StandardNormal);
                    let drift = eval_at(&compiled.drifts[c], &env, r, step, name)?;
                    let sigma = match &compiled.sigmas[c] {
                        Some(s) => eval_at(s, &env, r, step, name)?,
                        None => 0.0,
                    };
                    state[c] = left[c] + drift * dt + sigma * sqrt_dt * z;
                }
                ComponentKind::Counting => {
                    let u: f64 = rngs[c].random();
                    let mut intensity = eval_at(&compiled.drifts[c], &env, r, step, name)?;
                    if intensity < 0.0 {
                        warnings.negative_intensity += 1;
                        intensity = 0.0;
                    }
                    let p = intensity * dt;
                    if p > COARSE_INTENSITY_STEP {
                        warnings.coarse_intensity += 1;
                    }
                    if u < p.min(1.0) {
                        state[c] = left[c] + 1.0;
                    }
                }
                ComponentKind::DeterministicOde => {}
            }
        }

        if m > 0 {
            // RK4 over the deterministic block; other components stay at their left limits.
            let offsets = [0.0, 0.5, 0.5, 1.0];
            for s in 0..4 {
                stage.copy_from_slice(&left);
                if s > 0 {
                    for (i, &c) in compiled.ode.iter().enumerate() {
                        stage[c] = left[c] + offsets[s] * dt * k[s - 1][i];
                    }
                }
                let env = Env { time: t + offsets[s] * dt, states: &stage, attributes: &attributes, inputs: &inputs };
                for (i, &c) in compiled.ode.iter().enumerate() {
                    k[s][i] = eval_at(&compiled.drifts[c], &env, r, step, &spec.components[c].name)?;
                }
            }
            for (i, &c) in compiled.ode.iter().enumerate() {
                state[c] = left[c] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
        }

        if let Some(c) = state.iter().position(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                replicate: r,
                step: step + 1,
                component: spec.components[c].name.clone(),
            });
        }
        states.extend_from_slice(&state);
    }
    Ok((Replicate { attributes, states }, warnings))
}
