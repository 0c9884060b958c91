use dynograph_core::hiv::{build_mechanistic, build_two_slope, MechanisticParams, TwoSlopeParams};
use dynograph_core::model::{AttributeDecl, AttributeValue, ComponentKind, ComponentSpec, InitialValue};
use dynograph_core::{parse_model, print_model, validate, Cmp, Expr, SystemSpec};
use proptest::prelude::*;

const COMPONENTS: [&str; 3] = ["X", "Y", "Z2"];
const ATTRIBUTES: [&str; 2] = ["a", "b_1"];

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-1e3f64..1e3).prop_map(Expr::Const),
        Just(Expr::Time),
        prop::sample::select(COMPONENTS.to_vec()).prop_map(Expr::comp),
        prop::sample::select(ATTRIBUTES.to_vec()).prop_map(Expr::attr),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 3, |inner| {
        let cmp = prop::sample::select(vec![Cmp::Lt, Cmp::Le, Cmp::Eq, Cmp::Ge, Cmp::Gt]);
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            inner.clone().prop_map(Expr::neg),
            inner.clone().prop_map(Expr::exp),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::min(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::max(a, b)),
            (inner.clone(), cmp, inner).prop_map(|(a, c, b)| Expr::ind(a, c, b)),
        ]
    })
}

fn spec_with(drifts: Vec<Expr>, kinds: Vec<ComponentKind>) -> SystemSpec {
    let mut s = SystemSpec::new("prop");
    s.attributes = vec![
        AttributeDecl { name: "a".into(), value: AttributeValue::Fixed(0.5) },
        AttributeDecl { name: "b_1".into(), value: AttributeValue::Gaussian { mean: -1.0, sd: 2.0 } },
    ];
    for ((name, drift), kind) in COMPONENTS.iter().zip(drifts).zip(kinds) {
        s.components.push(match kind {
            ComponentKind::Diffusion => {
                ComponentSpec::diffusion(name, drift, Expr::c(0.3), InitialValue::Attr("a".into()))
            }
            ComponentKind::Counting => ComponentSpec::counting(name, drift),
            ComponentKind::DeterministicOde => ComponentSpec::ode(name, drift, InitialValue::Fixed(1.5)),
        });
    }
    s
}

fn kind() -> impl Strategy<Value = ComponentKind> {
    prop::sample::select(vec![ComponentKind::Diffusion, ComponentKind::Counting, ComponentKind::DeterministicOde])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn printed_models_parse_back(drifts in prop::collection::vec(expr(), 3), kinds in prop::collection::vec(kind(), 3)) {
        let spec = spec_with(drifts, kinds);
        let text = print_model(&spec);
        let parsed = parse_model(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(&parsed, &spec);
        prop_assert_eq!(print_model(&parsed), text);
    }
}

#[test]
fn mechanistic_fixture_matches_builder() {
    let parsed = parse_model(&fixture("hiv_mechanistic.dym")).unwrap();
    let built = build_mechanistic(&MechanisticParams::default(), Some(20.0)).unwrap();
    assert_eq!(parsed, built);
}

#[test]
fn two_slope_fixture_matches_builder() {
    let parsed = parse_model(&fixture("two_slope.dym")).unwrap();
    assert_eq!(parsed, build_two_slope(&TwoSlopeParams::default(), true).unwrap());
}

#[test]
fn shipped_fixtures_parse() {
    for name in ["ou", "poisson", "collider", "chain", "remark1", "remark1_fixed", "bivariate"] {
        let spec = parse_model(&fixture(&format!("{name}.dym"))).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        let report = validate(&spec);
        assert_eq!(report.is_empty(), name != "remark1", "{name}: {report:?}");
    }
}
