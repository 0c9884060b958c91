//! Numeric cross-check of syntactic dependence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::InfluenceError;
use crate::expr::Env;
use crate::model::{dependencies, validate, ComponentKind, SystemSpec};

const PROBE_SEED: u64 = 0x005e_ed0f_d1f7;
const RELATIVE_TOL: f64 = 1e-12;

/// Evaluates the drift of `k` at `probes` random state points with `j`
/// (a component or an input) shifted by `+perturbation` and `-perturbation`.
/// Returns true iff some pair of evaluations differs beyond a relative 1e-12.
pub fn numeric_dependence_probe(
    spec: &SystemSpec,
    j: &str,
    k: &str,
    probes: usize,
    perturbation: f64,
) -> Result<bool, InfluenceError> {
    let report = validate(spec);
    if !report.is_empty() {
        return Err(InfluenceError::InvalidSpec(report));
    }
    let target = spec.component(k).ok_or_else(|| InfluenceError::UnknownNode(k.into()))?;
    let perturbed_state = spec.component_index(j);
    let perturbed_input = spec.inputs.iter().position(|i| i.name == j);
    if perturbed_state.is_none() && perturbed_input.is_none() {
        return Err(InfluenceError::UnknownNode(j.into()));
    }

    let drift = target.drift.compile(&spec.symbols())?;
    let attributes: Vec<f64> = spec.attributes.iter().map(|a| a.value.mean()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);

    for _ in 0..probes {
        let states: Vec<f64> = spec
            .components
            .iter()
            .map(|c| match c.kind {
                ComponentKind::Counting => rng.random_range(0..3) as f64,
                _ => rng.random_range(-2.0..2.0),
            })
            .collect();
        let inputs: Vec<f64> = spec.inputs.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let time = rng.random_range(0.0..1.0);

        let eval_shifted = |delta: f64| {
            let (mut s, mut u) = (states.clone(), inputs.clone());
            if let Some(i) = perturbed_state {
                s[i] += delta;
            } else if let Some(i) = perturbed_input {
                u[i] += delta;
            }
            drift.eval(&Env { time, states: &s, attributes: &attributes, inputs: &u })
        };
        let up = eval_shifted(perturbation)?;
        let down = eval_shifted(-perturbation)?;
        let diff = (up - down).abs();
        if diff > 0.0 && diff > RELATIVE_TOL * up.abs().max(down.abs()) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Pairs where a component appears in a drift but the drift does not vary
/// with it numerically (for example `X1 - X1`).
pub fn dependence_warnings(spec: &SystemSpec, probes: usize, perturbation: f64) -> Result<Vec<String>, InfluenceError> {
    let mut warnings = Vec::new();
    for comp in &spec.components {
        for dep in dependencies(spec, &comp.name)? {
            if !numeric_dependence_probe(spec, &dep, &comp.name, probes, perturbation)? {
                warnings.push(format!("drift of {} mentions {dep} but does not vary with it numerically", comp.name));
            }
        }
    }
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{AttributeDecl, AttributeValue, ComponentSpec, InitialValue};

    fn spec_with_drift(drift: Expr) -> SystemSpec {
        let mut spec = SystemSpec::new("p");
        spec.attributes.push(AttributeDecl { name: "rho".into(), value: AttributeValue::Fixed(0.3) });
        spec.components.push(ComponentSpec::ode("X1", Expr::c(0.0), InitialValue::Fixed(0.0)));
        spec.components.push(ComponentSpec::ode("X2", drift, InitialValue::Fixed(0.0)));
        spec
    }

    #[test]
    fn cancelling_drift_is_flagged() {
        let spec = spec_with_drift(Expr::sub(Expr::comp("X1"), Expr::comp("X1")));
        assert!(!numeric_dependence_probe(&spec, "X1", "X2", 50, 0.1).unwrap());
        assert!(dependencies(&spec, "X2").unwrap().contains("X1"));
        assert_eq!(dependence_warnings(&spec, 50, 0.1).unwrap().len(), 1);
    }

    #[test]
    fn linear_drift_depends() {
        let spec = spec_with_drift(Expr::mul(Expr::attr("rho"), Expr::comp("X1")));
        assert!(numeric_dependence_probe(&spec, "X1", "X2", 10, 0.1).unwrap());
        assert!(dependence_warnings(&spec, 10, 0.1).unwrap().is_empty());
    }

    #[test]
    fn constant_drift_does_not_depend() {
        let spec = spec_with_drift(Expr::c(4.0));
        assert!(!numeric_dependence_probe(&spec, "X1", "X2", 10, 0.1).unwrap());
    }
}
