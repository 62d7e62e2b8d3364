//! Kouyoumjian–Pathak wedge diffraction coefficients for a perfectly
//! conducting wedge.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

const FRESNEL_EPS: f64 = 1e-16;
const FRESNEL_MAXIT: usize = 200;
const FRESNEL_XMIN: f64 = 1.5;

/// Complement of the Fresnel integrals, `(1/2 − C(x)) + i (1/2 − S(x))`,
/// for `x ≥ 0`, with `C(x) = ∫₀ˣ cos(πt²/2) dt`. Evaluated without the
/// cancellation a direct subtraction would suffer for large `x`.
pub fn fresnel_tail(x: f64) -> Complex64 {
    let x = x.abs();
    if x <= FRESNEL_XMIN {
        let (c, s) = fresnel_series(x);
        return Complex64::new(0.5 - c, 0.5 - s);
    }
    // Lentz continued fraction for the complementary error function form
    let pix2 = PI * x * x;
    let one = Complex64::new(1.0, 0.0);
    let mut b = Complex64::new(1.0, -pix2);
    let mut cc = Complex64::new(1e300, 0.0);
    let mut d = one / b;
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..=FRESNEL_MAXIT {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += Complex64::new(4.0, 0.0);
        d = one / (d * a + b);
        cc = b + a / cc;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < FRESNEL_EPS {
            break;
        }
    }
    let h = Complex64::new(x, -x) * h;
    Complex64::new(0.5, 0.5) * Complex64::from_polar(1.0, 0.5 * pix2) * h
}

/// Fresnel integrals `(C(x), S(x))`.
pub fn fresnel(x: f64) -> (f64, f64) {
    let t = fresnel_tail(x);
    let (c, s) = (0.5 - t.re, 0.5 - t.im);
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

fn fresnel_series(x: f64) -> (f64, f64) {
    if x < 1e-150 {
        return (x, 0.0);
    }
    let fact = FRAC_PI_2 * x * x;
    let (mut sum, mut sums, mut sumc) = (0.0, 0.0, x);
    let mut sign = 1.0;
    let mut odd = true;
    let mut term = x;
    let mut n = 3.0;
    for k in 1..=FRESNEL_MAXIT {
        term *= fact / k as f64;
        sum += sign * term / n;
        let test = sum.abs() * FRESNEL_EPS;
        if odd {
            sign = -sign;
            sums = sum;
            sum = sumc;
        } else {
            sumc = sum;
            sum = sums;
        }
        if term < test {
            break;
        }
        odd = !odd;
        n += 2.0;
    }
    (sumc, sums)
}

/// Transition function `F(X) = 2j√X e^{jX} ∫_{√X}^∞ e^{−jτ²} dτ`, `X ≥ 0`.
pub fn transition(x: f64) -> Complex64 {
    if !(x > 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    let v = x.sqrt();
    let z = v * (2.0 / PI).sqrt();
    let tail = (PI / 2.0).sqrt() * fresnel_tail(z).conj();
    Complex64::new(0.0, 2.0 * v) * Complex64::from_polar(1.0, x) * tail
}

/// One `cot(·) F(kL a(·))` term, parameterised by its distance `eps` from
/// the shadow or reflection boundary it controls. `eps < 0` is the side
/// without the GO ray. Exactly on the boundary the limit from the side
/// `tie` is used: shadow tests count grazing rays as blocked while
/// reflection points on a facet's rim still reflect.
fn boundary_term(eps: f64, n: f64, kl: f64, tie: f64) -> Complex64 {
    if eps == 0.0 {
        return Complex64::from_polar(n * (2.0 * PI * kl).sqrt(), FRAC_PI_4) * tie;
    }
    let a = 2.0 * (eps / 2.0).sin().powi(2);
    transition(kl * a) / (eps / (2.0 * n)).tan()
}

/// `cot((π + β)/2n) F(kL a⁺(β))`.
fn term_plus(beta: f64, n: f64, kl: f64, tie: f64) -> Complex64 {
    let nn = ((beta + PI) / (2.0 * PI * n)).round();
    boundary_term(PI + beta - 2.0 * PI * n * nn, n, kl, tie)
}

/// `cot((π − β)/2n) F(kL a⁻(β))`.
fn term_minus(beta: f64, n: f64, kl: f64, tie: f64) -> Complex64 {
    let nn = ((beta - PI) / (2.0 * PI * n)).round();
    boundary_term(PI - beta + 2.0 * PI * n * nn, n, kl, tie)
}

/// Soft and hard coefficients `(D_s, D_h)` for wedge parameter `n`,
/// incidence and observation azimuths measured from face A, edge angle
/// `beta0`, distance parameter `l` and wavenumber `k`.
pub fn utd_coeffs(n: f64, phi_inc: f64, phi_out: f64, beta0: f64, l: f64, k: f64) -> (Complex64, Complex64) {
    let kl = k * l;
    let pre = -Complex64::from_polar(1.0, -FRAC_PI_4) / (2.0 * n * (2.0 * PI * k).sqrt() * beta0.sin());
    let diff = phi_out - phi_inc;
    let sum = phi_out + phi_inc;
    let inc = term_plus(diff, n, kl, -1.0) + term_minus(diff, n, kl, -1.0);
    let refl = term_plus(sum, n, kl, 1.0) + term_minus(sum, n, kl, 1.0);
    (pre * (inc - refl), pre * (inc + refl))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `∫_v^∞ e^{−jτ²} dτ` by composite Simpson on `[v, v + 60]` after the
    /// substitution `τ = v + u`, plus two terms of the asymptotic tail.
    fn tail_integral(v: f64) -> Complex64 {
        let upper = v + 60.0;
        let m = 400_000;
        let h = (upper - v) / m as f64;
        let f = |t: f64| Complex64::from_polar(1.0, -t * t);
        let mut acc = f(v) + f(upper);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(v + i as f64 * h) * w;
        }
        acc * (h / 3.0) + f(upper) / Complex64::new(0.0, 2.0 * upper) + f(upper) / (4.0 * upper.powi(3))
    }

    #[test]
    fn fresnel_reference_values() {
        // C(1), S(1) and the limits at infinity
        let (c, s) = fresnel(1.0);
        assert!((c - 0.779_893_400_376_823).abs() < 1e-12);
        assert!((s - 0.438_259_147_390_354_8).abs() < 1e-12);
        let (c, s) = fresnel(50.0);
        assert!((c - 0.5).abs() < 0.01 && (s - 0.5).abs() < 0.01);
        // both branches agree near the switch-over
        let a = fresnel_tail(FRESNEL_XMIN);
        let b = fresnel_tail(FRESNEL_XMIN + 1e-12);
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn transition_matches_quadrature() {
        for x in [0.01, 0.3, 1.0, 2.5, 7.0, 20.0] {
            let v: f64 = f64::sqrt(x);
            let want = Complex64::new(0.0, 2.0 * v) * Complex64::from_polar(1.0, x) * tail_integral(v);
            let got = transition(x);
            assert!((got - want).norm() < 1e-6, "X={x}: {got} vs {want}");
        }
        assert_eq!(transition(0.0), Complex64::new(0.0, 0.0));
        assert!((transition(1e4) - 1.0).norm() < 1e-3);
        // small argument: F ≈ [√(πX) − 2X e^{jπ/4} − (2/3)X² e^{−jπ/4}] e^{j(π/4 + X)}
        let x = 1e-6;
        let small = (Complex64::new((PI * x).sqrt(), 0.0)
            - Complex64::from_polar(2.0 * x, FRAC_PI_4)
            - Complex64::from_polar(2.0 / 3.0 * x * x, -FRAC_PI_4))
            * Complex64::from_polar(1.0, FRAC_PI_4 + x);
        assert!((transition(x) - small).norm() < 1e-6 * small.norm());
    }

    /// Keller's non-uniform coefficient.
    fn gtd(n: f64, phi_inc: f64, phi_out: f64, beta0: f64, k: f64) -> (Complex64, Complex64) {
        let pre = Complex64::from_polar(1.0, -FRAC_PI_4) * (PI / n).sin()
            / (n * (2.0 * PI * k).sqrt() * beta0.sin());
        let c = (PI / n).cos();
        let a = 1.0 / (c - ((phi_out - phi_inc) / n).cos());
        let b = 1.0 / (c - ((phi_out + phi_inc) / n).cos());
        (pre * (a - b), pre * (a + b))
    }

    #[test]
    fn large_kl_reduces_to_keller() {
        let k = 2.0 * PI * 28e9 / 299_792_458.0;
        for (n, pi, po, b0) in [
            (2.0, 0.5, 2.5, 1.2),
            (1.5, 0.7, 4.4, 0.9),
            (1.75, 2.2, 4.8, 1.55),
            (1.5, 1.0, 1.3, 2.0),
        ] {
            let (ds, dh) = utd_coeffs(n, pi, po, b0, 500.0, k);
            let (gs, gh) = gtd(n, pi, po, b0, k);
            assert!((ds - gs).norm() < 1e-3 * gs.norm(), "{ds} {gs}");
            assert!((dh - gh).norm() < 1e-3 * gh.norm(), "{dh} {gh}");
        }
    }

    #[test]
    fn finite_on_boundaries() {
        let k = 100.0;
        let n = 2.0;
        let phi_inc = 0.8;
        for phi in [PI + phi_inc, PI - phi_inc, PI + phi_inc + 1e-9, PI - phi_inc - 1e-12] {
            let (ds, dh) = utd_coeffs(n, phi_inc, phi, 1.1, 3.0, k);
            assert!(ds.is_finite() && dh.is_finite());
            assert!(ds.norm() < 1.0 && dh.norm() < 1.0);
        }
        // single boundary term tends to n√(2πkL) e^{jπ/4} sgn(ε)
        let kl = 300.0;
        for eps in [1e-6, -1e-6] {
            let want = Complex64::from_polar(n * (2.0 * PI * kl).sqrt(), FRAC_PI_4) * f64::signum(eps);
            let got = boundary_term(eps, n, kl, 1.0);
            assert!((got - want).norm() < 1e-3 * want.norm());
        }
        // on the boundary itself: the shadow-side limit
        for tie in [-1.0, 1.0] {
            let lim = boundary_term(tie * 1e-9, n, kl, 1.0);
            assert!((boundary_term(0.0, n, kl, tie) - lim).norm() < 1e-6 * lim.norm());
        }
    }
}
