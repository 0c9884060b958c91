use dynograph_core::hiv::{
    build_bivariate_descriptive, build_mechanistic, build_two_slope, observed_markers, Marker, MechanisticParams,
    TwoSlopeParams,
};
use dynograph_core::model::{ComponentSpec, InitialValue};
use dynograph_core::simulate::{
    empirical_moments, lemma4_mc_check, moments_of, observe, simulate, SimConfig, TrajectoryBundle,
};
use dynograph_core::{parse_model, Expr, SystemSpec};
use statrs::distribution::{ContinuousCDF, Normal};

fn fixture(name: &str) -> SystemSpec {
    let text = std::fs::read_to_string(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap();
    parse_model(&text).unwrap()
}

fn within(value: f64, target: f64, se: f64, what: &str) {
    assert!((value - target).abs() <= 3.0 * se, "{what}: {value} vs {target} (se {se})");
}

fn constant_state(m: f64) -> SystemSpec {
    let mut s = SystemSpec::new("constant");
    s.components.push(ComponentSpec::ode("M", Expr::c(0.0), InitialValue::Fixed(m)));
    s
}

/// Fraction of detected records and its binomial standard error.
fn detected_fraction(
    bundle: &TrajectoryBundle,
    records: &[Vec<dynograph_core::simulate::ObservationRecord>],
) -> (f64, f64) {
    let n = records.iter().map(Vec::len).sum::<usize>() as f64;
    assert_eq!(records.len(), bundle.replicates.len());
    let hits = records.iter().flatten().filter(|r| r.detected).count() as f64;
    let p = hits / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

#[test]
fn ou_moments_match_closed_form() {
    let b = simulate(&fixture("ou.dym"), &SimConfig::new(1e-3, 1.0, 10_000, 2024)).unwrap();
    let m = empirical_moments(&b, &["X"], 1.0).unwrap();
    within(m.mean[0], 0.0, m.mean_se[0], "mean");
    within(m.covariance[0][0], (1.0 - (-2.0f64).exp()) / 2.0, m.covariance_se[0][0], "variance");
}

#[test]
fn halving_the_step_keeps_ou_moments() {
    let spec = fixture("ou.dym");
    let coarse =
        empirical_moments(&simulate(&spec, &SimConfig::new(0.02, 1.0, 10_000, 5)).unwrap(), &["X"], 1.0).unwrap();
    let fine =
        empirical_moments(&simulate(&spec, &SimConfig::new(0.01, 1.0, 10_000, 5)).unwrap(), &["X"], 1.0).unwrap();
    // Independent estimates: compare against the standard error of the difference.
    let se_mean = coarse.mean_se[0].hypot(fine.mean_se[0]);
    let se_var = coarse.covariance_se[0][0].hypot(fine.covariance_se[0][0]);
    within(coarse.mean[0], fine.mean[0], se_mean, "mean");
    within(coarse.covariance[0][0], fine.covariance[0][0], se_var, "variance");
}

#[test]
fn poisson_mean_count() {
    let b = simulate(&fixture("poisson.dym"), &SimConfig::new(1e-3, 5.0, 10_000, 77)).unwrap();
    let m = empirical_moments(&b, &["N"], 5.0).unwrap();
    within(m.mean[0], 10.0, m.mean_se[0], "count");
    for r in 0..100 {
        assert!(b.path(r, 0).all(|v| v.fract() == 0.0));
    }
}

#[test]
fn simultaneous_jumps_are_rare() {
    let (l1, l2, dt) = (2.0, 3.0, 0.01);
    let mut s = SystemSpec::new("two_counts");
    s.components.push(ComponentSpec::counting("N1", Expr::c(l1)));
    s.components.push(ComponentSpec::counting("N2", Expr::c(l2)));
    let b = simulate(&s, &SimConfig::new(dt, 100.0, 100, 3)).unwrap();
    let mut both = 0usize;
    for r in 0..100 {
        let a: Vec<f64> = b.path(r, 0).collect();
        let c: Vec<f64> = b.path(r, 1).collect();
        both += (1..a.len()).filter(|&i| a[i] > a[i - 1] && c[i] > c[i - 1]).count();
    }
    let rate = both as f64 / (100.0 * 100.0);
    assert!(rate < 5.0 * l1 * l2 * dt, "rate {rate}");
}

#[test]
fn independent_noises_are_uncorrelated() {
    let mut s = SystemSpec::new("pair");
    for n in ["U", "W"] {
        s.components.push(ComponentSpec::diffusion(n, Expr::c(0.5), Expr::c(1.0), InitialValue::Fixed(0.0)));
    }
    let b = simulate(&s, &SimConfig::new(0.01, 1.0, 10_000, 8)).unwrap();
    let m = empirical_moments(&b, &["U", "W"], 1.0).unwrap();
    within(m.covariance[0][1], 0.0, m.covariance_se[0][1], "covariance");
    within(m.mean[0], 0.5, m.mean_se[0], "mean");
}

#[test]
fn censoring_matches_gaussian_tail() {
    let (m, s, eta) = (1.0, 0.5, 1.2);
    let b = simulate(&constant_state(m), &SimConfig::new(1.0, 1.0, 10_000, 0)).unwrap();
    let obs = observe(&b, "M", &[1.0], s, Some(eta), 99).unwrap();
    let (p, se) = detected_fraction(&b, &obs);
    let expected = 1.0 - Normal::new(0.0, 1.0).unwrap().cdf((eta - m) / s);
    within(p, expected, se, "detected fraction");
    assert!(obs.iter().flatten().all(|o| o.detected == o.value.is_some()));
    assert!(obs.iter().flatten().filter_map(|o| o.value).all(|v| v > eta));
}

#[test]
fn log_scale_censoring_on_markers() {
    // Constant viral load 100 (log10 = 2) with no dynamics.
    let p = MechanisticParams {
        lambda: 0.0,
        rho: 0.0,
        alpha: 0.0,
        mu_q: 0.0,
        mu_t: 0.0,
        mu_tstar: 0.0,
        mu_v: 0.0,
        gamma_inf: 0.0,
        hazard_base: 0.0,
        q0: 300.0,
        t0: 200.0,
        tstar0: 0.0,
        vi0: 60.0,
        vni0: 40.0,
        ..Default::default()
    };
    let b = simulate(&build_mechanistic(&p, None).unwrap(), &SimConfig::new(0.5, 1.0, 10_000, 1)).unwrap();
    let markers = observed_markers(&b, true).unwrap();
    assert!(markers.viral_load.iter().flatten().all(|v| (v - 2.0).abs() < 1e-12));
    assert!(markers.cd4.iter().flatten().all(|v| *v == 500.0));
    let (s, eta) = (0.4, 2.3);
    let obs = markers.observe(&b, Marker::ViralLoad, &[1.0], s, Some(eta), 5).unwrap();
    let (frac, se) = detected_fraction(&b, &obs);
    let expected = 1.0 - Normal::new(0.0, 1.0).unwrap().cdf((eta - 2.0) / s);
    within(frac, expected, se, "log-scale detected fraction");
    assert!(obs.iter().flatten().all(|o| o.channel == "VL"));
}

#[test]
fn two_slope_variance_decomposition() {
    let p = TwoSlopeParams {
        sd_a0: 0.5,
        sd_a1: 0.3,
        sd_a2: 0.2,
        sigma_w: 0.2,
        error_sd: 0.3,
        t_star: 1.0,
        ..Default::default()
    };
    let b = simulate(&build_two_slope(&p, true).unwrap(), &SimConfig::new(1e-3, 3.0, 10_000, 11)).unwrap();
    let times = [0.5, 1.5, 2.5];
    let obs = observe(&b, "V", &times, p.error_sd, None, 12).unwrap();
    for (i, &t) in times.iter().enumerate() {
        let ys: Vec<f64> = obs.iter().map(|rec| rec[i].value.unwrap()).collect();
        let m = moments_of(&[ys]).unwrap();
        let after = (t - p.t_star).max(0.0);
        let expected = p.sd_a0.powi(2)
            + t.min(p.t_star).powi(2) * p.sd_a1.powi(2)
            + after.powi(2) * p.sd_a2.powi(2)
            + p.sigma_w.powi(2) * t
            + p.error_sd.powi(2);
        within(m.covariance[0][0], expected, m.covariance_se[0][0], &format!("Var(Y) at {t}"));
        let mean = p.beta0 + (p.beta1 + p.gamma1) * t.min(p.t_star) + (p.beta2 + p.gamma2) * after;
        within(m.mean[0], mean, m.mean_se[0], &format!("E(Y) at {t}"));
    }
}

#[test]
fn collider_parents_stay_uncorrelated() {
    let cfg = SimConfig::new(0.01, 1.0, 10_000, 21);
    let r = lemma4_mc_check(&fixture("collider.dym"), "A", "B", &cfg, 1.0).unwrap();
    assert!(r.predicted_independent);
    assert!(r.corr.abs() <= 3.0 * r.se, "{r:?}");
    assert!(r.consistent);
    let child = lemma4_mc_check(&fixture("collider.dym"), "A", "C", &cfg, 1.0).unwrap();
    assert!(!child.predicted_independent && child.correlation_detected && child.consistent);
}

#[test]
fn chain_correlation_matches_analytic_value() {
    let cfg = SimConfig::new(1e-3, 1.0, 10_000, 22);
    let r = lemma4_mc_check(&fixture("chain.dym"), "A", "B", &cfg, 1.0).unwrap();
    // Cov(A1, B1) = 1/2, Var A1 = 1, Var B1 = 1/3 + 1.
    let expected = 0.5 / (1.0f64 * (4.0 / 3.0)).sqrt();
    within(r.corr, expected, r.se, "corr");
    assert!(r.correlation_detected && !r.predicted_independent);
}

#[test]
fn bivariate_slopes_follow_their_correlation() {
    let viral = TwoSlopeParams::default();
    let cd4 = TwoSlopeParams { beta0: 350.0, beta1: 60.0, beta2: 10.0, sd_a0: 80.0, sd_a1: 20.0, sd_a2: 5.0, ..viral };
    let mut corr = [[0.0; 6]; 6];
    for (i, row) in corr.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    corr[1][4] = -0.6;
    corr[4][1] = -0.6;
    let spec = build_bivariate_descriptive(&viral, &cd4, &corr).unwrap();
    let b = simulate(&spec, &SimConfig::new(0.1, 1.0, 5_000, 4)).unwrap();
    let idx = |n: &str| b.attribute_names.iter().position(|a| a == n).unwrap();
    let (v1, t1) = (idx("V_b1"), idx("Tbar_b1"));
    let draws = |i: usize| b.replicates.iter().map(|r| r.attributes[i]).collect::<Vec<_>>();
    let m = moments_of(&[draws(v1), draws(t1)]).unwrap();
    let r = m.covariance[0][1] / (m.covariance[0][0] * m.covariance[1][1]).sqrt();
    within(r, -0.6, (1.0 - 0.36) / (5_000f64 - 1.0).sqrt(), "slope correlation");

    // Slope estimates from the simulated paths inherit the sign.
    let slope = |rep: usize, comp: usize| b.value(rep, 10, comp) - b.value(rep, 0, comp);
    let vs: Vec<f64> = (0..5_000).map(|r| slope(r, 0)).collect();
    let ts: Vec<f64> = (0..5_000).map(|r| slope(r, 1)).collect();
    let m = moments_of(&[vs, ts]).unwrap();
    assert!(m.covariance[0][1] + 3.0 * m.covariance_se[0][1] < 0.0);
}

#[test]
fn uncorrelated_bivariate_is_independent() {
    let p = TwoSlopeParams { sd_a0: 0.0, sd_a1: 0.0, sd_a2: 0.0, ..Default::default() };
    let mut corr = [[0.0; 6]; 6];
    for (i, row) in corr.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let spec = build_bivariate_descriptive(&p, &p, &corr).unwrap();
    let r = lemma4_mc_check(&spec, "V", "Tbar", &SimConfig::new(0.01, 2.0, 5_000, 6), 2.0).unwrap();
    assert!(r.predicted_independent && r.consistent, "{r:?}");
}

#[test]
fn uninfected_mechanistic_model_settles() {
    let p = MechanisticParams { gamma_inf: 0.0, hazard_base: 0.0, ..Default::default() };
    let b = simulate(&build_mechanistic(&p, None).unwrap(), &SimConfig::new(0.1, 500.0, 1, 0)).unwrap();
    let scale = [p.q0, p.t0, p.tstar0, p.vi0, p.vni0].into_iter().fold(0.0, f64::max);
    for c in 0..5 {
        assert!(b.path(0, c).all(|v| v.abs() < 10.0 * scale));
    }
    let last = b.time_grid.len() - 1;
    let (q, t) = p.uninfected_steady_state();
    // Solve the 2x2 steady-state system directly as a cross-check.
    let det = (p.alpha + p.mu_q) * (p.rho + p.mu_t) - p.rho * p.alpha;
    let (q2, t2) = (p.lambda * (p.rho + p.mu_t) / det, p.lambda * p.alpha / det);
    assert!((q - q2).abs() < 1e-9 && (t - t2).abs() < 1e-9);
    assert!((b.value(0, last, 0) - q2).abs() < 1e-3);
    assert!((b.value(0, last, 1) - t2).abs() < 1e-3);
    for c in 2..5 {
        let path: Vec<f64> = b.path(0, c).collect();
        assert!(path.windows(2).skip(1).all(|w| w[1] <= w[0]), "component {c} not decaying");
        assert!(path[last] < 1e-6);
    }
}

#[test]
fn full_efficacy_treatment_removes_infection() {
    let none = MechanisticParams { gamma_inf: 0.0, ..Default::default() };
    let full = MechanisticParams { eta_rt: 1.0, ..Default::default() };
    let cfg = SimConfig::new(0.1, 50.0, 2, 9);
    let a = simulate(&build_mechanistic(&none, None).unwrap(), &cfg).unwrap();
    let b = simulate(&build_mechanistic(&full, Some(0.0)).unwrap(), &cfg).unwrap();
    for (x, y) in a.replicates.iter().zip(&b.replicates) {
        assert_eq!(x.states, y.states);
    }
}

#[test]
fn untreated_infection_spreads_and_treatment_controls_it() {
    let p = MechanisticParams { hazard_base: 0.0, ..Default::default() };
    let cfg = SimConfig::new(0.01, 60.0, 1, 0);
    let untreated = simulate(&build_mechanistic(&p, None).unwrap(), &cfg).unwrap();
    let treated = simulate(&build_mechanistic(&p, Some(20.0)).unwrap(), &cfg).unwrap();
    let vl = |b: &TrajectoryBundle, step: usize| b.value(0, step, 3) + b.value(0, step, 4);
    assert!(vl(&untreated, 2000) > 1.0);
    assert!(vl(&treated, 6000) < vl(&treated, 2000));
}
