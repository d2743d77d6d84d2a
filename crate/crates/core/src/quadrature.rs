//! Adaptive quadrature rules used by the IPR, the basin measure and the phase averages.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = r * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate_gk<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: usize = 4000;
    let (i0, e0) = gk15(&f, a, b);
    let mut parts = vec![(a, b, i0, e0)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure { lo: a, hi: b });
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::QuadratureFailure { lo: a, hi: b });
        }
        let (il, el) = gk15(&f, lo, mid);
        let (ir, er) = gk15(&f, mid, hi);
        parts.push((lo, mid, il, el));
        parts.push((mid, hi, ir, er));
    }
}

// Gauss-Lobatto nodes on [-1, 1]
const L5_X: f64 = 0.654653670707977143798292456246858; // sqrt(3/7)
const L5_W: [f64; 3] = [0.1, 49.0 / 90.0, 32.0 / 45.0];
const L7_X1: f64 = 0.830223896278566929872032213967465;
const L7_X2: f64 = 0.468848793470714213803771881908767;
const L7_W: [f64; 4] = [
    1.0 / 21.0,
    0.276826047361565948010700406290034, // (124 - 7√15) / 350
    0.431745381209862623417871022281205, // (124 + 7√15) / 350
    256.0 / 525.0,
];

/// Gauss-Lobatto integration of a vector integrand, adaptive per interval.
///
/// Each interval compares the 7-point rule with the 5-point rule and is bisected
/// while any component differs by more than `rel_tol` of its magnitude.
pub fn integrate_lobatto<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64, rel_tol: f64) -> [f64; N] {
    let fa = f(a);
    let fb = f(b);
    lobatto_rec(f, a, b, fa, fb, rel_tol, 0)
}

fn lobatto_rec<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: &F,
    a: f64,
    b: f64,
    fa: [f64; N],
    fb: [f64; N],
    rel_tol: f64,
    depth: u32,
) -> [f64; N] {
    const MAX_DEPTH: u32 = 16;
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let f5m = f(c - r * L5_X);
    let f5p = f(c + r * L5_X);
    let f71m = f(c - r * L7_X1);
    let f71p = f(c + r * L7_X1);
    let f72m = f(c - r * L7_X2);
    let f72p = f(c + r * L7_X2);
    let mut i7 = [0.0; N];
    let mut ok = true;
    for d in 0..N {
        let ends = fa[d] + fb[d];
        let i5 = r * (L5_W[0] * ends + L5_W[1] * (f5m[d] + f5p[d]) + L5_W[2] * fc[d]);
        i7[d] = r * (L7_W[0] * ends + L7_W[1] * (f71m[d] + f71p[d]) + L7_W[2] * (f72m[d] + f72p[d]) + L7_W[3] * fc[d]);
        if (i7[d] - i5).abs() > rel_tol * i7[d].abs() && (i7[d] - i5).abs() > f64::MIN_POSITIVE {
            ok = false;
        }
    }
    if ok || depth >= MAX_DEPTH {
        return i7;
    }
    let left = lobatto_rec(f, a, c, fa, fc, rel_tol, depth + 1);
    let right = lobatto_rec(f, c, b, fc, fb, rel_tol, depth + 1);
    let mut out = [0.0; N];
    for d in 0..N {
        out[d] = left[d] + right[d];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kronrod_polynomial_and_transcendental() {
        let v = integrate_gk(|x| x * x, 0.0, 3.0, 1e-14, 1e-14).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate_gk(|x| 1.0 / (1.0 + x * x), -10.0, 10.0, 1e-12, 1e-14).unwrap();
        assert!((v - 2.0 * 10f64.atan()).abs() < 1e-11);
        let v = integrate_gk(|x| x.sin().powi(2), 0.0, 2.0 * PI, 1e-14, 1e-14).unwrap();
        assert!((v - PI).abs() < 1e-12);
    }

    #[test]
    fn lobatto_rules_are_exact_for_low_degree() {
        let [v] = integrate_lobatto(&|x: f64| [x.powi(9)], 0.0, 1.0, 1e-12);
        assert!((v - 0.1).abs() < 1e-14);
        let [a, b] = integrate_lobatto(&|x: f64| [x.exp(), (-x).exp()], 0.0, 2.0, 1e-10);
        assert!((a - (2f64.exp() - 1.0)).abs() < 1e-9);
        assert!((b - (1.0 - (-2f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn lobatto_weights_sum_to_two() {
        let s5 = 2.0 * L5_W[0] + 2.0 * L5_W[1] + L5_W[2];
        let s7 = 2.0 * L7_W[0] + 2.0 * L7_W[1] + 2.0 * L7_W[2] + L7_W[3];
        assert!((s5 - 2.0).abs() < 1e-15);
        assert!((s7 - 2.0).abs() < 1e-15);
        assert!((L7_X1 * L7_X1 - (5.0 / 11.0 + 2.0 / 11.0 * (5.0f64 / 3.0).sqrt())).abs() < 1e-15);
        assert!((L7_X2 * L7_X2 - (5.0 / 11.0 - 2.0 / 11.0 * (5.0f64 / 3.0).sqrt())).abs() < 1e-15);
    }
}
