//! Special functions used by the coherence and phase-matching models.

use std::f64::consts::{FRAC_PI_4, PI};

/// Unnormalized sinc, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Bessel function of the first kind, order one.
///
/// For moderate arguments the integral `J1(x) = (1/2pi) * int_0^{2pi} cos(t - x sin t) dt`
/// is evaluated with the trapezoid rule, which converges geometrically for a
/// periodic analytic integrand once the node count exceeds `|x|` by a margin.
/// Large arguments use the Hankel asymptotic expansion.
pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x <= 25.0 {
        let n = (1.5 * x).ceil() as usize + 48;
        let h = 2.0 * PI / n as f64;
        let sum: f64 = (0..n)
            .map(|j| {
                let t = h * j as f64;
                (t - x * t.sin()).cos()
            })
            .sum();
        sum / n as f64
    } else {
        hankel_j1(x)
    }
}

fn hankel_j1(x: f64) -> f64 {
    // P1, Q1 asymptotic series with mu = 4 * 1^2.
    let mu = 4.0;
    let z = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let m = (2 * k - 1) as f64;
        term *= (mu - m * m) / (k as f64 * z);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        // odd k feed Q, even k feed P, with alternating signs
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - 3.0 * FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `|2 J1(nu) / nu|`, the far-field degree of coherence of a uniform
/// incoherent disc source. Uses a Taylor expansion below `nu = 1e-4`.
pub fn airy_coherence(nu: f64) -> f64 {
    let nu = nu.abs();
    if nu < 1e-4 {
        let n2 = nu * nu;
        (1.0 - n2 / 8.0 + n2 * n2 / 192.0 - n2 * n2 * n2 / 9216.0).abs()
    } else {
        (2.0 * bessel_j1(nu) / nu).abs()
    }
}

/// First positive zero of J1.
pub const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_j1_values() {
        // Abramowitz & Stegun table 9.1
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j1(10.0) - 0.043_472_746_168_861_44).abs() < 1e-13);
        assert!(bessel_j1(J1_FIRST_ZERO).abs() < 1e-13);
    }

    #[test]
    fn asymptotic_branch_is_continuous() {
        let below = bessel_j1(25.0);
        let above = hankel_j1(25.0);
        assert!((below - above).abs() < 1e-12, "{below} vs {above}");
        // J1(50) from A&S
        assert!((bessel_j1(50.0) - (-0.097_511_828_125_175_3)).abs() < 1e-12);
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(PI).abs() < 1e-15);
        assert!((sinc(1.0) - 0.841_470_984_807_896_5).abs() < 1e-15);
    }

    #[test]
    fn taylor_branch_matches_direct() {
        let nu = 1.2e-4;
        let direct = 2.0 * bessel_j1(nu) / nu;
        assert!((airy_coherence(0.99e-4) - direct).abs() < 1e-8);
        assert_eq!(airy_coherence(0.0), 1.0);
    }
}
