//! Gaussian Schell-model pump: coherence parameterization, the double-slit
//! characterization formulas and the momentum-space cross-spectral density.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::special::airy_coherence;

/// Ratio `l_c / w0` used to stand in for a fully coherent pump.
pub const COHERENT_LC_FACTOR: f64 = 1.0e3;

/// Root of J1 as used in the correlation-length formula (four significant figures).
pub const CORRELATION_ZERO: f64 = 3.832;

/// GSM pump at the crystal plane. Lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpParams {
    /// Vacuum wavelength.
    pub lambda_p: f64,
    /// Beam size parameter; the near-field intensity falls as `exp(-x^2 / (2 w0^2))`.
    pub w0: f64,
    /// Transverse correlation length.
    pub l_c: f64,
}

impl PumpParams {
    pub fn new(lambda_p: f64, w0: f64, l_c: f64) -> Result<Self> {
        let p = Self { lambda_p, w0, l_c };
        p.validate()?;
        Ok(p)
    }

    /// Pump with a prescribed degree of coherence `0 < a < 1`.
    pub fn from_coherence(lambda_p: f64, w0: f64, a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter {
                name: "A",
                reason: format!("degree of coherence must lie in (0, 1), got {a}"),
            });
        }
        Self::new(lambda_p, w0, 2.0 * w0 * a / (1.0 - a * a).sqrt())
    }

    /// Numerically coherent pump, `l_c = COHERENT_LC_FACTOR * w0`.
    pub fn coherent(lambda_p: f64, w0: f64) -> Result<Self> {
        Self::new(lambda_p, w0, COHERENT_LC_FACTOR * w0)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("lambda_p", self.lambda_p)?;
        require_positive("w0", self.w0)?;
        require_positive("l_c", self.l_c)
    }

    pub fn k_p(&self) -> f64 {
        2.0 * PI / self.lambda_p
    }

    /// Degenerate signal/idler wavenumber `k_p / 2`.
    pub fn k_s(&self) -> f64 {
        0.5 * self.k_p()
    }

    pub fn degree_of_coherence(&self) -> f64 {
        coherence_from(self).map(|c| c.a).unwrap_or(f64::NAN)
    }
}

/// Effective coherence width and degree of spatial coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceParams {
    pub delta: f64,
    pub a: f64,
}

/// `1/delta^2 = 1/l_c^2 + 1/(4 w0^2)`, `A = delta / (2 w0)`.
pub fn coherence_from(pump: &PumpParams) -> Result<CoherenceParams> {
    pump.validate()?;
    let inv = 1.0 / (pump.l_c * pump.l_c) + 1.0 / (4.0 * pump.w0 * pump.w0);
    let delta = 1.0 / inv.sqrt();
    Ok(CoherenceParams { delta, a: delta / (2.0 * pump.w0) })
}

/// Gaussian exponents of the pump cross-spectral density in transverse
/// momentum (rad/m):
/// `<E(q) E*(q')> = A_c exp(-b1 |q|^2 - b1 |q'|^2 + 2 b2 q.q')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GsmCsdCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a_c: f64,
}

impl GsmCsdCoefficients {
    /// `b1 - b2`; the diagonal is `A_c exp(-2 (b1 - b2) |q|^2)`.
    pub fn diagonal_width(&self) -> f64 {
        self.b1 - self.b2
    }

    /// Standard deviation of the diagonal angular spectrum per axis.
    pub fn diagonal_sigma(&self) -> f64 {
        0.5 / self.diagonal_width().sqrt()
    }

    /// CSD for 2-D transverse wavevectors.
    pub fn eval(&self, q: [f64; 2], qp: [f64; 2]) -> f64 {
        let qq = q[0] * q[0] + q[1] * q[1];
        let pp = qp[0] * qp[0] + qp[1] * qp[1];
        let qp_dot = q[0] * qp[0] + q[1] * qp[1];
        self.a_c * (-self.b1 * qq - self.b1 * pp + 2.0 * self.b2 * qp_dot).exp()
    }

    pub fn diagonal(&self, q: [f64; 2]) -> f64 {
        self.a_c * (-2.0 * self.diagonal_width() * (q[0] * q[0] + q[1] * q[1])).exp()
    }
}

/// Momentum-basis CSD coefficients of the GSM pump.
///
/// `b0 = 1 + (l_c / 2 w0)^2`, `b1 = (l_c^2 + 2 w0^2) / (4 b0)`,
/// `b2 = w0^2 / (2 b0)`, `A_c = (w0 / 2 pi)^2`. With these, `b1 + b2 = w0^2`
/// for every `l_c` (the beam size does not move with coherence) and
/// `b1 - b2 = w0^2 A^2`.
pub fn csd_coefficients(pump: &PumpParams) -> Result<GsmCsdCoefficients> {
    pump.validate()?;
    let (w, l) = (pump.w0, pump.l_c);
    let b0 = 1.0 + (l / (2.0 * w)).powi(2);
    let b1 = (l * l + 2.0 * w * w) / (4.0 * b0);
    let b2 = w * w / (2.0 * b0);
    let a_c = (w / (2.0 * PI)).powi(2);
    Ok(GsmCsdCoefficients { b0, b1, b2, a_c })
}

/// Geometry of the double-slit measurement behind the rotating diffuser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationSetup {
    /// Beam radius on the diffuser.
    pub a_s: f64,
    /// Focal length of the collimating lens.
    pub f: f64,
    /// Separation of the two probed points.
    pub d12: f64,
    /// Demagnification of the telescope in front of the crystal.
    pub demag: f64,
}

impl CharacterizationSetup {
    pub fn validate(&self) -> Result<()> {
        require_positive("a_s", self.a_s)?;
        require_positive("f", self.f)?;
        crate::error::require_non_negative("d12", self.d12)?;
        require_positive("demag", self.demag)
    }
}

/// `|2 J1(nu) / nu|` for `nu >= 0`.
pub fn bessel_visibility(nu: f64) -> f64 {
    airy_coherence(nu)
}

/// Fringe visibility behind a uniformly illuminated incoherent disc:
/// `nu = k_p d12 a_s / f`.
pub fn pump_visibility(setup: &CharacterizationSetup, lambda_p: f64) -> Result<f64> {
    setup.validate()?;
    require_positive("lambda_p", lambda_p)?;
    let k_p = 2.0 * PI / lambda_p;
    Ok(bessel_visibility(k_p * setup.d12 * setup.a_s / setup.f))
}

/// Transverse correlation length `3.832 f / (k_p a_s)` behind the collimating lens.
pub fn correlation_length(a_s: f64, f: f64, lambda_p: f64) -> Result<f64> {
    require_positive("a_s", a_s)?;
    require_positive("f", f)?;
    require_positive("lambda_p", lambda_p)?;
    let k_p = 2.0 * PI / lambda_p;
    Ok(CORRELATION_ZERO * f / (k_p * a_s))
}

/// Image the beam through a telescope with demagnification `demag`; both
/// the size and the correlation length shrink by the same factor.
pub fn propagate_to_crystal(l_c_at_l2: f64, w_at_l2: f64, demag: f64, lambda_p: f64) -> Result<PumpParams> {
    require_positive("demag", demag)?;
    PumpParams::new(lambda_p, w_at_l2 / demag, l_c_at_l2 / demag)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MM: f64 = 1e-3;

    #[test]
    fn coherence_examples() {
        let p = PumpParams::new(405e-9, MM, 1e6).unwrap();
        assert!(1.0 - coherence_from(&p).unwrap().a < 1e-6);

        let p = PumpParams::new(405e-9, MM, 2.0 * MM).unwrap();
        let c = coherence_from(&p).unwrap();
        assert!((c.delta - MM * 2f64.sqrt()).abs() < 1e-15);
        assert!((c.a - 0.5f64.sqrt()).abs() < 1e-12);

        let p = PumpParams::new(405e-9, MM, 1e-6).unwrap();
        let a = coherence_from(&p).unwrap().a;
        assert!((a - 5.0e-4).abs() / 5.0e-4 < 1e-6);
    }

    #[test]
    fn coherence_identity_holds() {
        for &l in &[1e-6, 3e-4, 1e-3, 0.1] {
            let p = PumpParams::new(405e-9, 0.5 * MM, l).unwrap();
            let c = coherence_from(&p).unwrap();
            let lhs = 1.0 / (c.delta * c.delta);
            let rhs = 1.0 / (l * l) + 1.0 / (4.0 * p.w0 * p.w0);
            assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn from_coherence_round_trips() {
        for &a in &[0.05, 0.3, 0.7, 0.99] {
            let p = PumpParams::from_coherence(405e-9, 0.5 * MM, a).unwrap();
            assert!((p.degree_of_coherence() - a).abs() < 1e-12);
        }
        assert!(PumpParams::from_coherence(405e-9, MM, 1.0).is_err());
        assert!(PumpParams::from_coherence(405e-9, MM, 0.0).is_err());
    }

    #[test]
    fn rejects_non_positive() {
        assert!(PumpParams::new(0.0, MM, MM).is_err());
        assert!(PumpParams::new(405e-9, -MM, MM).is_err());
        assert!(PumpParams::new(405e-9, MM, f64::NAN).is_err());
        assert!(correlation_length(0.0, 0.15, 405e-9).is_err());
        assert!(propagate_to_crystal(MM, MM, 0.0, 405e-9).is_err());
    }

    #[test]
    fn csd_limits() {
        let w = 0.5 * MM;
        let near = csd_coefficients(&PumpParams::new(405e-9, w, 100.0 * w).unwrap()).unwrap();
        assert!((near.b1 - w * w).abs() < 0.03 * w * w);
        assert!(near.b2.abs() < 0.03 * w * w);

        let inc = csd_coefficients(&PumpParams::new(405e-9, w, 1e-12).unwrap()).unwrap();
        assert!((inc.b0 - 1.0).abs() < 1e-12);
        assert!((inc.b1 - w * w / 2.0).abs() < 1e-12 * w * w);
        assert!((inc.b2 - w * w / 2.0).abs() < 1e-12 * w * w);
    }

    #[test]
    fn csd_sum_and_difference_identities() {
        let w = 0.5 * MM;
        for &a in &[0.1, 0.5, 0.9] {
            let p = PumpParams::from_coherence(405e-9, w, a).unwrap();
            let c = csd_coefficients(&p).unwrap();
            assert!(((c.b1 + c.b2) - w * w).abs() < 1e-12 * w * w);
            assert!((c.diagonal_width() - w * w * a * a).abs() < 1e-12 * w * w);
            assert!(c.b1 > c.b2 && c.b2 > 0.0);
        }
    }

    #[test]
    fn bessel_visibility_examples() {
        assert_eq!(bessel_visibility(0.0), 1.0);
        assert!(bessel_visibility(3.832) < 1e-3);
        assert!((bessel_visibility(1.0) - 0.880_101).abs() < 1e-5);
    }

    #[test]
    fn pump_visibility_examples() {
        let mut s = CharacterizationSetup { a_s: 1e-3, f: 0.15, d12: 0.0, demag: 8.0 };
        assert_eq!(pump_visibility(&s, 405e-9).unwrap(), 1.0);

        // choose d12 so that nu hits the first zero
        let k_p = 2.0 * PI / 405e-9;
        s.a_s = 20e-6;
        s.d12 = 3.832 * s.f / (k_p * s.a_s);
        assert!(pump_visibility(&s, 405e-9).unwrap() < 1e-3);

        s.d12 = 0.5e-3;
        let mut last = 1.0;
        for i in 1..40 {
            s.a_s = 1e-6 * i as f64;
            let nu = k_p * s.d12 * s.a_s / s.f;
            if nu > CORRELATION_ZERO {
                break;
            }
            let v = pump_visibility(&s, 405e-9).unwrap();
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn correlation_length_examples() {
        let l = correlation_length(1.0, 0.150, 405e-9).unwrap();
        assert!((l - 3.70503e-8).abs() / 3.70503e-8 < 5e-6, "{l}");
        let l2 = correlation_length(2.0, 0.150, 405e-9).unwrap();
        assert!((l2 - l / 2.0).abs() < 1e-22);
        let l = correlation_length(37e-6, 0.150, 405e-9).unwrap();
        assert!((l - 1.0014e-3).abs() / 1.0014e-3 < 1e-3, "{l}");
    }

    #[test]
    fn telescope_preserves_coherence() {
        let p1 = propagate_to_crystal(1.3e-3, 2.0e-3, 1.0, 405e-9).unwrap();
        assert_eq!((p1.w0, p1.l_c), (2.0e-3, 1.3e-3));
        let p8 = propagate_to_crystal(1.3e-3, 2.0e-3, 8.0, 405e-9).unwrap();
        assert!((p8.w0 - 2.0e-3 / 8.0).abs() < 1e-18);
        assert!((p8.degree_of_coherence() - p1.degree_of_coherence()).abs() < 1e-12);
    }
}
