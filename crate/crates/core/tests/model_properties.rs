use proptest::prelude::*;
use skinflow::model::*;
use skinflow::{integrate, IntegratorConfig, ModelParams, PhaseState};

fn params() -> impl Strategy<Value = ModelParams> {
    (-3.0..1.0f64, 0.05..2.0f64, 0.005..0.5f64, 0.5..20.0f64).prop_map(|(g, a, b, e)| ModelParams::new(g, a, b, e).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn origin_is_the_only_fixed_point(p in params(), psi in -10.0..10.0f64, v in -10.0..10.0f64) {
        prop_assume!(psi != 0.0 || v != 0.0);
        let d = flow_rhs(&p, PhaseState::new(psi, v));
        prop_assert!(d.psi != 0.0 || d.v != 0.0);
    }

    #[test]
    fn eigenvalue_trace_and_determinant(p in params()) {
        let s = origin_eigenvalues(&p);
        let tr = s.lambda_plus + s.lambda_minus;
        let det = s.lambda_plus * s.lambda_minus;
        prop_assert!((tr.re - 2.0 * p.gamma).abs() <= 1e-12 * (2.0 * p.gamma).abs().max(1.0));
        prop_assert!(tr.im.abs() <= 1e-12);
        prop_assert!((det.re - 2.0 * p.energy).abs() <= 1e-12 * 2.0 * p.energy);
        prop_assert!(det.im.abs() <= 1e-12 * 2.0 * p.energy);
        if p.gamma * p.gamma < 2.0 * p.energy {
            prop_assert_eq!(s.lambda_plus.re, p.gamma);
            prop_assert_eq!(s.lambda_plus.conj(), s.lambda_minus);
        }
        // sign(Re λ) = sign(γ)
        prop_assert!(s.lambda_plus.re * p.gamma >= 0.0 && s.lambda_minus.re * p.gamma >= 0.0);
    }

    #[test]
    fn rate_matches_directional_derivative(p in params(), psi in -3.0..3.0f64, v in -8.0..8.0f64) {
        let s0 = PhaseState::new(psi, v);
        let f = flow_rhs(&p, s0);
        let h = 1e-4;
        let shifted = |e: f64| lyapunov_value(&p, PhaseState::new(psi + e * f.psi, v + e * f.v));
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let rate = lyapunov_rate(&p, s0);
        let scale = (f.v * v).abs() + 2.0 * p.energy * (psi * f.psi).abs() + 1.0;
        prop_assert!((fd - rate).abs() <= 1e-8 * scale, "fd {} rate {}", fd, rate);
    }

    #[test]
    fn strongly_lossy_drift_is_negative(a in 0.05..2.0f64, b in 0.005..0.5f64, extra in 1e-6..2.0f64) {
        let gamma = -a * a / (4.0 * b) - extra;
        let p = ModelParams::new(gamma, a, b, 8.0).unwrap();
        for k in -60..=40 {
            let z = 10f64.powf(k as f64 / 10.0);
            prop_assert!(nonreciprocity(&p, z) < 0.0);
        }
        prop_assert!(nonreciprocity(&p, 0.0) < 0.0);
    }

    #[test]
    fn lienard_primitive_is_odd(p in params(), psi in -5.0..5.0f64) {
        let f = lienard_primitive(&p, psi);
        prop_assert!((f + lienard_primitive(&p, -psi)).abs() <= 1e-12 * f.abs().max(1.0));
    }
}

#[test]
fn hermitian_limit_conserves_lyapunov() {
    let p = ModelParams::linear(0.0, 8.0).unwrap();
    let s0 = PhaseState::new(0.3, 1.7);
    let v0 = lyapunov_value(&p, s0);
    let t = integrate(&p, s0, (0.0, 100.0 * p.harmonic_period()), &IntegratorConfig::default(), &[]).unwrap();
    for s in &t.states {
        assert!((lyapunov_value(&p, *s) - v0).abs() <= 1e-8 * v0);
    }
}

#[test]
fn flow_examples() {
    let h = ModelParams::linear(0.0, 8.0).unwrap();
    assert_eq!(flow_rhs(&h, PhaseState::new(1.0, 0.0)), PhaseState::new(0.0, -16.0));
    let p = ModelParams::reference(-0.5);
    assert_eq!(flow_rhs(&p, PhaseState::ORIGIN), PhaseState::ORIGIN);
    let d = flow_rhs(&p, PhaseState::new(0.0, 8.69756));
    assert_eq!(d, PhaseState::new(8.69756, -8.69756));
    assert_eq!(origin_jacobian(&ModelParams::reference(-1.2)), [[0.0, 1.0], [-16.0, -2.4]]);
}
