use proptest::prelude::*;
use skinflow::averaging::*;
use skinflow::ModelParams;

fn params() -> impl Strategy<Value = ModelParams> {
    (0.05..2.0f64, 0.005..0.5f64, 0.5..20.0f64).prop_flat_map(|(a, b, e)| {
        let gc = -a * a / (8.0 * b);
        (gc * 0.999..1.0f64).prop_map(move |g| ModelParams::new(g, a, b, e).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn branch_amplitudes_are_drift_roots(p in params()) {
        let t = branch_amplitudes(&p);
        for r in [t.a_in, t.a_out].into_iter().flatten() {
            // relative to the size of the individual terms of h(r)
            let scale = r * (p.gamma.abs() + 0.25 * p.a * r * r + 0.125 * p.b * r.powi(4));
            prop_assert!(avg_drift(&p, r).abs() <= 1e-12 * scale.max(1.0), "r {}", r);
        }
        if let (Some(i), Some(o)) = (t.a_in, t.a_out) {
            prop_assert!(i < o);
            prop_assert!(avg_drift_derivative(&p, i) > 0.0);
            prop_assert!(avg_drift_derivative(&p, o) < 0.0);
        }
    }

    #[test]
    fn drift_slope_at_origin_is_gamma(p in params()) {
        prop_assert_eq!(avg_drift_derivative(&p, 0.0), p.gamma);
    }

    #[test]
    fn fold_is_degenerate(a in 0.05..2.0f64, b in 0.005..0.5f64) {
        let p = ModelParams::new(-a * a / (8.0 * b), a, b, 8.0).unwrap();
        prop_assert_eq!(gamma_c_theory(&p), p.gamma);
        let r = (a / b).sqrt();
        let scale = r * (p.gamma.abs() + 0.25 * a * r * r + 0.125 * b * r.powi(4));
        prop_assert!(avg_drift(&p, r).abs() <= 1e-12 * scale);
        prop_assert!(avg_drift_derivative(&p, r).abs() <= 1e-12 * scale / r);
        prop_assert_eq!(branch_amplitudes(&p).regime, Regime::FoldPoint);
    }

    #[test]
    fn exact_radial_rate_averages_to_drift(p in params(), r in 0.01..8.0f64) {
        // uniform θ-grid averages converge to the drift as the grid refines
        let grid_avg = |n: usize| (0..n).map(|k| exact_radial_rate(&p, r, std::f64::consts::TAU * k as f64 / n as f64)).sum::<f64>() / n as f64;
        let target = avg_drift(&p, r);
        let scale = r * (p.gamma.abs() + p.a * r * r + p.b * r.powi(4));
        let coarse = (grid_avg(3) - target).abs();
        let fine = (grid_avg(64) - target).abs();
        prop_assert!(fine <= 1e-12 * scale.max(1.0));
        prop_assert!(fine <= coarse + 1e-12 * scale.max(1.0));
        let q = phase_average(|th| exact_radial_rate(&p, r, th)).unwrap();
        prop_assert!((q - target).abs() <= 1e-12 * scale.max(1.0));
    }
}

#[test]
fn elementary_averages() {
    let cases: [(fn(f64) -> f64, f64); 3] = [
        (|t| t.sin().powi(2), 0.5),
        (|t| t.cos().powi(2) * t.sin().powi(2), 0.125),
        (|t| t.cos().powi(4) * t.sin().powi(2), 0.0625),
    ];
    for (f, want) in cases {
        assert!((phase_average(f).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn regimes_at_reference_parameters() {
    let reg = |g: f64| branch_amplitudes(&ModelParams::reference(g)).regime;
    assert_eq!(gamma_c_theory(&ModelParams::reference(0.0)), -1.0);
    assert_eq!(reg(-1.5), Regime::SkinOnly);
    assert_eq!(reg(-1.0), Regime::FoldPoint);
    assert_eq!(reg(-0.5), Regime::Coexistence);
    assert_eq!(reg(0.0), Regime::HopfPoint);
    assert_eq!(reg(0.3), Regime::ExtendedOnly);
    let t = branch_amplitudes(&ModelParams::reference(-0.5));
    // A² = 16(1 ∓ √0.5)
    assert!((t.a_in.unwrap() - (16.0 * (1.0 - 0.5f64.sqrt())).sqrt()).abs() < 1e-13);
    assert!((t.a_out.unwrap() - (16.0 * (1.0 + 0.5f64.sqrt())).sqrt()).abs() < 1e-13);
}

#[test]
fn inner_amplitude_follows_hopf_scaling() {
    let p = ModelParams::reference(-0.001);
    let a_in = branch_amplitudes(&p).a_in.unwrap();
    let ratio = a_in * a_in * p.a / (4.0 * 0.001);
    assert!((0.98..=1.02).contains(&ratio), "{ratio}");
    assert!((hopf_amplitude_scaling(&p, -0.001) - (0.008f64).sqrt()).abs() < 1e-15);
}
