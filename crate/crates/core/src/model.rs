//! Declared dynamical systems: attributes, components and exogenous inputs.
//!
//! A [`SystemSpec`] is the couple (attributes, state process). Each component
//! carries its own driving noise, so orthogonality of the martingale parts
//! holds structurally; [`validate`] checks the remaining regularity rules.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, SymbolTable};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttributeValue {
    Fixed(f64),
    Gaussian { mean: f64, sd: f64 },
}

impl AttributeValue {
    pub fn mean(&self) -> f64 {
        match *self {
            AttributeValue::Fixed(v) => v,
            AttributeValue::Gaussian { mean, .. } => mean,
        }
    }

    /// Standard deviation; zero for fixed values.
    pub fn sd(&self) -> f64 {
        match *self {
            AttributeValue::Fixed(_) => 0.0,
            AttributeValue::Gaussian { sd, .. } => sd,
        }
    }

    pub fn is_random(&self) -> bool {
        self.sd() > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeDecl {
    pub name: String,
    pub value: AttributeValue,
}

/// Correlation between two Gaussian attributes, drawn jointly per replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeCorrelation {
    pub first: String,
    pub second: String,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Diffusion,
    Counting,
    DeterministicOde,
}

impl ComponentKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ComponentKind::Diffusion => "diffusion",
            ComponentKind::Counting => "counting",
            ComponentKind::DeterministicOde => "ode",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialValue {
    Fixed(f64),
    Attr(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSpec {
    pub name: String,
    pub kind: ComponentKind,
    /// Drift for continuous components, intensity for counting ones.
    pub drift: Expr,
    /// Diffusion coefficient; only meaningful for `Diffusion`.
    pub sigma: Option<Expr>,
    pub init: InitialValue,
}

impl ComponentSpec {
    pub fn diffusion(name: &str, drift: Expr, sigma: Expr, init: InitialValue) -> Self {
        ComponentSpec { name: name.into(), kind: ComponentKind::Diffusion, drift, sigma: Some(sigma), init }
    }

    pub fn ode(name: &str, drift: Expr, init: InitialValue) -> Self {
        ComponentSpec { name: name.into(), kind: ComponentKind::DeterministicOde, drift, sigma: None, init }
    }

    pub fn counting(name: &str, intensity: Expr) -> Self {
        ComponentSpec {
            name: name.into(),
            kind: ComponentKind::Counting,
            drift: intensity,
            sigma: None,
            init: InitialValue::Fixed(0.0),
        }
    }
}

/// Piecewise-constant exogenous schedule. `breakpoints` are `(time, value)`
/// with strictly increasing times; the value is 0 before the first one.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSchedule {
    pub name: String,
    pub breakpoints: Vec<(f64, f64)>,
}

impl InputSchedule {
    /// Value of the schedule at the left limit `t-`. At `t = 0` there is no
    /// history, so the value at 0 itself is returned.
    pub fn left_limit(&self, t: f64) -> f64 {
        let mut value = 0.0;
        for &(bp, v) in &self.breakpoints {
            if bp < t || (t <= 0.0 && bp <= t) {
                value = v;
            } else {
                break;
            }
        }
        value
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub attributes: Vec<AttributeDecl>,
    pub correlations: Vec<AttributeCorrelation>,
    pub components: Vec<ComponentSpec>,
    pub inputs: Vec<InputSchedule>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("component `{0}` is not a deterministic ODE")]
    NotDeterministic(String),
    #[error("drift of `{0}` references time; canonical form requires a time-homogeneous system")]
    TimeInhomogeneous(String),
}

impl SystemSpec {
    pub fn new(name: &str) -> Self {
        SystemSpec { name: name.into(), ..Default::default() }
    }

    pub fn component(&self, name: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&InputSchedule> {
        self.inputs.iter().find(|i| i.name == name)
    }

    pub fn symbols(&self) -> SymbolTable {
        SymbolTable {
            components: self.components.iter().enumerate().map(|(i, c)| (c.name.clone(), i)).collect(),
            attributes: self.attributes.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect(),
            inputs: self.inputs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect(),
        }
    }

    pub fn has_random_attributes(&self) -> bool {
        self.attributes.iter().any(|a| a.value.is_random())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    /// Orthogonal martingales. Holds by construction: every component owns
    /// an independent noise source, so no violation of this rule is emitted.
    A1,
    /// Counting process, or continuous with a deterministic bracket.
    A2,
    #[serde(rename = "NAME")]
    Name,
    #[serde(rename = "INIT")]
    Init,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::A1 => "A1",
            Rule::A2 => "A2",
            Rule::Name => "NAME",
            Rule::Init => "INIT",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    /// Offending component, or the declaration name for NAME rules.
    pub component: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: violation[{}] {}", self.component, self.rule, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn with_rule(&self, rule: Rule) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.rule == rule)
    }
}

/// Checks the structural rules of the model class. Violations are data.
pub fn validate(spec: &SystemSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |component: &str, rule: Rule, message: String| {
        violations.push(Violation { component: component.to_string(), rule, message });
    };

    let mut seen: HashSet<&str> = HashSet::new();
    let names = spec
        .attributes
        .iter()
        .map(|a| a.name.as_str())
        .chain(spec.inputs.iter().map(|i| i.name.as_str()))
        .chain(spec.components.iter().map(|c| c.name.as_str()));
    for name in names {
        if name == "t" {
            push(name, Rule::Name, "`t` is reserved for time".into());
        }
        if !seen.insert(name) {
            push(name, Rule::Name, format!("`{name}` is declared more than once"));
        }
    }

    for attr in &spec.attributes {
        if let AttributeValue::Gaussian { sd, .. } = attr.value {
            if !(sd >= 0.0) {
                push(&attr.name, Rule::Name, format!("attribute `{}` has negative sd", attr.name));
            }
        }
    }
    for corr in &spec.correlations {
        for side in [&corr.first, &corr.second] {
            if spec.attribute(side).is_none() {
                push(side, Rule::Name, format!("correlation references undeclared attribute `{side}`"));
            }
        }
        if !(-1.0..=1.0).contains(&corr.rho) {
            push(&corr.first, Rule::Name, format!("correlation {} outside [-1, 1]", corr.rho));
        }
    }
    for input in &spec.inputs {
        if input.breakpoints.windows(2).any(|w| w[0].0 >= w[1].0) {
            push(&input.name, Rule::Name, "input breakpoints must be strictly increasing".into());
        }
    }

    for comp in &spec.components {
        let c = comp.name.as_str();
        check_refs(spec, c, "drift", &comp.drift, &mut push);

        match comp.kind {
            ComponentKind::Diffusion => match &comp.sigma {
                None => push(c, Rule::A2, "diffusion component has no diffusion coefficient".into()),
                Some(sigma) => {
                    check_refs(spec, c, "sigma", sigma, &mut push);
                    if !sigma.is_deterministic_in_time() {
                        push(
                            c,
                            Rule::A2,
                            format!("diffusion coefficient `{sigma}` depends on the state; the bracket must be deterministic"),
                        );
                    }
                }
            },
            ComponentKind::Counting | ComponentKind::DeterministicOde => {
                if comp.sigma.is_some() {
                    push(
                        c,
                        Rule::A2,
                        format!("{} component must not carry a diffusion coefficient", comp.kind.keyword()),
                    );
                }
            }
        }

        match (&comp.kind, &comp.init) {
            (ComponentKind::Counting, InitialValue::Fixed(v)) if *v != 0.0 => {
                push(c, Rule::Init, format!("counting process must start at 0, got {v}"))
            }
            (ComponentKind::Counting, InitialValue::Attr(a)) => {
                push(c, Rule::Init, format!("counting process must start at 0, not at attribute `{a}`"))
            }
            (_, InitialValue::Attr(a)) if spec.attribute(a).is_none() => {
                push(c, Rule::Init, format!("initial value references undeclared attribute `{a}`"))
            }
            (_, InitialValue::Fixed(v)) if !v.is_finite() => push(c, Rule::Init, "initial value is not finite".into()),
            _ => {}
        }
    }

    ValidationReport { violations }
}

fn check_refs(spec: &SystemSpec, comp: &str, what: &str, e: &Expr, push: &mut impl FnMut(&str, Rule, String)) {
    for n in e.component_refs() {
        if spec.component(n).is_none() {
            push(comp, Rule::Name, format!("{what} references undeclared component `{n}`"));
        }
    }
    for n in e.attribute_refs() {
        if spec.attribute(n).is_none() {
            push(comp, Rule::Name, format!("{what} references undeclared attribute `{n}`"));
        }
    }
    for n in e.input_refs() {
        if spec.input(n).is_none() {
            push(comp, Rule::Name, format!("{what} references undeclared input `{n}`"));
        }
    }
}

/// Components appearing in the drift of `component`, excluding itself.
pub fn dependencies(spec: &SystemSpec, component: &str) -> Result<BTreeSet<String>, ModelError> {
    let comp = spec.component(component).ok_or_else(|| ModelError::UnknownComponent(component.into()))?;
    Ok(comp.drift.component_refs().into_iter().filter(|n| *n != component).map(str::to_string).collect())
}

/// Rewrites a time-homogeneous ODE system as the diffusion obtained by adding
/// unit-bracket orthogonal martingales to every equation.
pub fn canonicalize_deterministic(spec: &SystemSpec) -> Result<SystemSpec, ModelError> {
    let mut out = spec.clone();
    for comp in &mut out.components {
        if comp.kind != ComponentKind::DeterministicOde {
            return Err(ModelError::NotDeterministic(comp.name.clone()));
        }
        if comp.drift.references_time() {
            return Err(ModelError::TimeInhomogeneous(comp.name.clone()));
        }
        comp.kind = ComponentKind::Diffusion;
        comp.sigma = Some(Expr::Const(1.0));
    }
    Ok(out)
}

#[derive(Serialize)]
struct CanonicalAttr<'a> {
    name: &'a str,
    kind: &'static str,
    mean: f64,
    sd: f64,
}

#[derive(Serialize)]
struct CanonicalComponent<'a> {
    name: &'a str,
    kind: ComponentKind,
    drift: String,
    sigma: Option<String>,
    init: String,
}

#[derive(Serialize)]
struct CanonicalSpec<'a> {
    name: &'a str,
    attributes: Vec<CanonicalAttr<'a>>,
    correlations: Vec<(&'a str, &'a str, f64)>,
    inputs: BTreeMap<&'a str, &'a [(f64, f64)]>,
    components: Vec<CanonicalComponent<'a>>,
}

/// Canonical JSON with a fixed key order and prefix s-expressions.
pub fn to_canonical_json(spec: &SystemSpec) -> String {
    let canonical = CanonicalSpec {
        name: &spec.name,
        attributes: spec
            .attributes
            .iter()
            .map(|a| CanonicalAttr {
                name: &a.name,
                kind: match a.value {
                    AttributeValue::Fixed(_) => "fixed",
                    AttributeValue::Gaussian { .. } => "normal",
                },
                mean: a.value.mean(),
                sd: a.value.sd(),
            })
            .collect(),
        correlations: spec.correlations.iter().map(|c| (c.first.as_str(), c.second.as_str(), c.rho)).collect(),
        inputs: spec.inputs.iter().map(|i| (i.name.as_str(), i.breakpoints.as_slice())).collect(),
        components: spec
            .components
            .iter()
            .map(|c| CanonicalComponent {
                name: &c.name,
                kind: c.kind,
                drift: c.drift.to_sexpr(),
                sigma: c.sigma.as_ref().map(Expr::to_sexpr),
                init: match &c.init {
                    InitialValue::Fixed(v) => format!("{v:?}"),
                    InitialValue::Attr(a) => format!("(attr {a})"),
                },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&canonical).expect("canonical spec serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn remark1(sigma2: Expr) -> SystemSpec {
        SystemSpec {
            name: "remark1".into(),
            attributes: vec![AttributeDecl { name: "a".into(), value: AttributeValue::Fixed(1.0) }],
            components: vec![
                ComponentSpec::diffusion("X1", Expr::attr("a"), Expr::c(1.0), InitialValue::Fixed(0.0)),
                ComponentSpec::diffusion("X2", Expr::comp("X1"), sigma2, InitialValue::Fixed(0.0)),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn state_dependent_bracket_is_rejected_with_a2() {
        let report = validate(&remark1(Expr::exp(Expr::comp("X1"))));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::A2);
        assert_eq!(report.violations[0].component, "X2");
    }

    #[test]
    fn constant_bracket_passes() {
        assert!(validate(&remark1(Expr::c(1.0))).is_empty());
    }

    #[test]
    fn empty_system_is_valid() {
        assert!(validate(&SystemSpec::new("empty")).is_empty());
    }

    #[test]
    fn time_dependent_sigma_is_allowed() {
        assert!(validate(&remark1(Expr::add(Expr::c(1.0), Expr::Time))).is_empty());
    }

    #[test]
    fn counting_init_and_duplicate_names() {
        let mut spec = remark1(Expr::c(1.0));
        let mut n = ComponentSpec::counting("N", Expr::c(1.0));
        n.init = InitialValue::Fixed(2.0);
        spec.components.push(n);
        spec.components.push(ComponentSpec::ode("X1", Expr::c(0.0), InitialValue::Fixed(0.0)));
        let report = validate(&spec);
        assert_eq!(report.with_rule(Rule::Init).count(), 1);
        assert_eq!(report.with_rule(Rule::Name).count(), 1);
    }

    #[test]
    fn sigma_on_ode_is_a2() {
        let mut spec = SystemSpec::new("s");
        let mut c = ComponentSpec::ode("X", Expr::c(0.0), InitialValue::Fixed(0.0));
        c.sigma = Some(Expr::c(1.0));
        spec.components.push(c);
        assert_eq!(validate(&spec).with_rule(Rule::A2).count(), 1);
    }

    #[test]
    fn dependencies_exclude_self_and_attributes() {
        let mut spec = SystemSpec::new("s");
        spec.attributes.push(AttributeDecl { name: "rho".into(), value: AttributeValue::Fixed(0.1) });
        spec.components.push(ComponentSpec::ode(
            "Q",
            Expr::sub(Expr::mul(Expr::attr("rho"), Expr::comp("T")), Expr::comp("Q")),
            InitialValue::Fixed(0.0),
        ));
        spec.components.push(ComponentSpec::ode("T", Expr::c(1.0), InitialValue::Fixed(0.0)));
        let deps = dependencies(&spec, "Q").unwrap();
        assert_eq!(deps.into_iter().collect::<Vec<_>>(), vec!["T".to_string()]);
        assert!(dependencies(&spec, "T").unwrap().is_empty());
        assert_eq!(dependencies(&spec, "Z"), Err(ModelError::UnknownComponent("Z".into())));
    }

    #[test]
    fn canonical_form_of_ode_pair() {
        let mut spec = SystemSpec::new("ode");
        spec.attributes.push(AttributeDecl { name: "a".into(), value: AttributeValue::Fixed(2.0) });
        spec.components.push(ComponentSpec::ode("X1", Expr::attr("a"), InitialValue::Fixed(0.0)));
        spec.components.push(ComponentSpec::ode("X2", Expr::comp("X1"), InitialValue::Fixed(0.0)));
        let canon = canonicalize_deterministic(&spec).unwrap();
        for c in &canon.components {
            assert_eq!(c.kind, ComponentKind::Diffusion);
            assert_eq!(c.sigma, Some(Expr::Const(1.0)));
        }
        assert_eq!(canon.components[1].drift, Expr::comp("X1"));
        assert!(validate(&canon).is_empty());
    }

    #[test]
    fn canonical_form_rejects_time() {
        let mut spec = SystemSpec::new("ode");
        spec.attributes.push(AttributeDecl { name: "a".into(), value: AttributeValue::Fixed(2.0) });
        spec.components.push(ComponentSpec::ode(
            "X2",
            Expr::mul(Expr::attr("a"), Expr::Time),
            InitialValue::Fixed(0.0),
        ));
        assert_eq!(canonicalize_deterministic(&spec), Err(ModelError::TimeInhomogeneous("X2".into())));
    }

    #[test]
    fn canonical_form_of_zero_drift() {
        let mut spec = SystemSpec::new("ode");
        spec.components.push(ComponentSpec::ode("X", Expr::c(0.0), InitialValue::Fixed(0.0)));
        let canon = canonicalize_deterministic(&spec).unwrap();
        assert_eq!(canon.components[0].sigma, Some(Expr::c(1.0)));
        assert_eq!(canon.components[0].drift, Expr::c(0.0));
    }

    #[test]
    fn input_left_limit() {
        let s = InputSchedule { name: "I".into(), breakpoints: vec![(0.0, 0.0), (5.0, 1.0)] };
        assert_eq!(s.left_limit(0.0), 0.0);
        assert_eq!(s.left_limit(5.0), 0.0);
        assert_eq!(s.left_limit(5.001), 1.0);
        let s = InputSchedule { name: "I".into(), breakpoints: vec![(0.0, 1.0)] };
        assert_eq!(s.left_limit(0.0), 1.0);
    }

    #[test]
    fn canonical_json_is_stable() {
        let spec = remark1(Expr::c(1.0));
        let a = to_canonical_json(&spec);
        assert_eq!(a, to_canonical_json(&spec.clone()));
        assert!(a.contains("\"drift\": \"(comp X1)\""));
    }
}
