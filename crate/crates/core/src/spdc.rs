//! Biphoton kernel: phase matching (exact sinc and its Gaussian stand-in),
//! the non-collinear longitudinal mismatch and the joint momentum rate.

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::pump::{csd_coefficients, GsmCsdCoefficients, PumpParams};
use crate::special::sinc;

/// Width constant of the Gaussian approximation to the sinc phase matching.
pub const DEFAULT_ALPHA: f64 = 0.455;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseMatchingType {
    TypeI,
    TypeII,
}

/// Nonlinear crystal in degenerate, non-collinear operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystalParams {
    /// Crystal length (m).
    pub length: f64,
    pub kind: PhaseMatchingType,
    pub alpha: f64,
    /// Non-collinear half-angle of the emission cone (rad).
    pub theta_nc: f64,
    /// Pump walk-off angle (rad).
    pub rho_p: f64,
    /// Idler walk-off angle (rad); zero for type I.
    pub rho_i: f64,
    /// Type II only: ring centres sit at `(0, +ring_offset)` for the signal
    /// and `(0, -ring_offset)` for the idler (rad/m).
    pub ring_offset: f64,
}

impl CrystalParams {
    pub fn type_i(length: f64, theta_nc: f64, rho_p: f64) -> Self {
        Self {
            length,
            kind: PhaseMatchingType::TypeI,
            alpha: DEFAULT_ALPHA,
            theta_nc,
            rho_p,
            rho_i: 0.0,
            ring_offset: 0.0,
        }
    }

    pub fn type_ii(length: f64, theta_nc: f64, rho_p: f64, rho_i: f64, ring_offset: f64) -> Self {
        Self {
            length,
            kind: PhaseMatchingType::TypeII,
            alpha: DEFAULT_ALPHA,
            theta_nc,
            rho_p,
            rho_i,
            ring_offset,
        }
    }

    /// Collinear crystal with no walk-off.
    pub fn collinear(length: f64) -> Self {
        Self::type_i(length, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("length", self.length)?;
        require_positive("alpha", self.alpha)?;
        require_non_negative("theta_nc", self.theta_nc)?;
        require_non_negative("ring_offset", self.ring_offset)?;
        if !self.rho_p.is_finite() || !self.rho_i.is_finite() {
            return Err(Error::InvalidParameter { name: "rho", reason: "walk-off must be finite".into() });
        }
        if self.kind == PhaseMatchingType::TypeI && (self.rho_i != 0.0 || self.ring_offset != 0.0) {
            return Err(Error::InvalidParameter {
                name: "rho_i",
                reason: "type-I crystals have no idler walk-off or ring offset".into(),
            });
        }
        Ok(())
    }

    /// Ring radius `k_s * theta_nc` for a pump wavenumber `k_p`.
    pub fn ring_radius(&self, k_p: f64) -> f64 {
        0.5 * k_p * self.theta_nc
    }

    /// Ring centres in detector momentum coordinates (signal, idler).
    pub fn ring_centers(&self) -> ([f64; 2], [f64; 2]) {
        match self.kind {
            PhaseMatchingType::TypeI => ([0.0, 0.0], [0.0, 0.0]),
            PhaseMatchingType::TypeII => ([0.0, self.ring_offset], [0.0, -self.ring_offset]),
        }
    }
}

/// Transverse wavevector (rad/m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentumPoint {
    pub qx: f64,
    pub qy: f64,
}

impl MomentumPoint {
    pub const fn new(qx: f64, qy: f64) -> Self {
        Self { qx, qy }
    }

    fn dist2(self, other: Self) -> f64 {
        let dx = self.qx - other.qx;
        let dy = self.qy - other.qy;
        dx * dx + dy * dy
    }
}

/// Collinear mismatch `|q_s - q_i|^2 / (2 k_p)`.
fn collinear_mismatch(q_s: MomentumPoint, q_i: MomentumPoint, k_p: f64) -> f64 {
    q_s.dist2(q_i) / (2.0 * k_p)
}

/// `sinc(dq L / 2)` with `dq = |q_s - q_i|^2 / (2 k_p)`.
pub fn phase_match_sinc(q_s: MomentumPoint, q_i: MomentumPoint, crystal: &CrystalParams, k_p: f64) -> f64 {
    sinc(0.5 * crystal.length * collinear_mismatch(q_s, q_i, k_p))
}

/// `exp(-alpha L |q_s - q_i|^2 / (4 k_p))`.
pub fn phase_match_gaussian(q_s: MomentumPoint, q_i: MomentumPoint, crystal: &CrystalParams, k_p: f64) -> f64 {
    (-crystal.alpha * crystal.length * q_s.dist2(q_i) / (4.0 * k_p)).exp()
}

/// Longitudinal mismatch in the paraxial non-collinear model:
/// `|q_s - q_i|^2 / (2 k_p) - k_p theta^2 / 2 + rho_p (q_sx + q_ix) + rho_i q_ix`.
pub fn noncollinear_mismatch(q_s: MomentumPoint, q_i: MomentumPoint, crystal: &CrystalParams, k_p: f64) -> f64 {
    collinear_mismatch(q_s, q_i, k_p) - 0.5 * k_p * crystal.theta_nc * crystal.theta_nc
        + crystal.rho_p * (q_s.qx + q_i.qx)
        + crystal.rho_i * q_i.qx
}

/// Phase-matching amplitude for the non-collinear mismatch. The Gaussian
/// stand-in `exp(-alpha |x|)` reduces to `phase_match_gaussian` in the
/// collinear limit, where `x = L dk / 2` is non-negative.
pub fn noncollinear_amplitude(q_s: MomentumPoint, q_i: MomentumPoint, crystal: &CrystalParams, k_p: f64, use_sinc: bool) -> f64 {
    let x = 0.5 * crystal.length * noncollinear_mismatch(q_s, q_i, crystal, k_p);
    if use_sinc {
        sinc(x)
    } else {
        (-crystal.alpha * x.abs()).exp()
    }
}

/// Precomputed joint detection rate `CSD_diag(q_s + q_i) |Phi(q_s, q_i)|^2`.
#[derive(Debug, Clone, Copy)]
pub struct BiphotonKernel {
    pub csd: GsmCsdCoefficients,
    pub crystal: CrystalParams,
    pub k_p: f64,
    pub use_sinc: bool,
}

impl BiphotonKernel {
    pub fn new(pump: &PumpParams, crystal: &CrystalParams, use_sinc: bool) -> Result<Self> {
        crystal.validate()?;
        Ok(Self { csd: csd_coefficients(pump)?, crystal: *crystal, k_p: pump.k_p(), use_sinc })
    }

    /// Standard deviation per axis of the pump diagonal in `q_s + q_i`.
    pub fn sum_sigma(&self) -> f64 {
        self.csd.diagonal_sigma()
    }

    #[inline]
    pub fn phase_matching_intensity(&self, q_s: MomentumPoint, q_i: MomentumPoint) -> f64 {
        let phi = noncollinear_amplitude(q_s, q_i, &self.crystal, self.k_p, self.use_sinc);
        phi * phi
    }

    #[inline]
    pub fn rate(&self, q_s: MomentumPoint, q_i: MomentumPoint) -> f64 {
        let sum = [q_s.qx + q_i.qx, q_s.qy + q_i.qy];
        self.csd.diagonal(sum) * self.phase_matching_intensity(q_s, q_i)
    }
}

/// Joint momentum-space detection rate (arbitrary units).
pub fn joint_momentum_rate(
    q_s: MomentumPoint,
    q_i: MomentumPoint,
    pump: &PumpParams,
    crystal: &CrystalParams,
    use_sinc: bool,
) -> Result<f64> {
    Ok(BiphotonKernel::new(pump, crystal, use_sinc)?.rate(q_s, q_i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const K_P: f64 = 2.0 * PI / 405e-9;

    fn crystal() -> CrystalParams {
        CrystalParams::collinear(2e-3)
    }

    /// Wavevector separation that puts the sinc argument at `x`.
    fn separation_for(x: f64, c: &CrystalParams) -> f64 {
        (x * 4.0 * K_P / c.length).sqrt()
    }

    #[test]
    fn sinc_examples() {
        let c = crystal();
        let q = MomentumPoint::new(1e4, -3e3);
        assert_eq!(phase_match_sinc(q, q, &c, K_P), 1.0);
        let d = separation_for(PI, &c);
        let v = phase_match_sinc(MomentumPoint::new(d, 0.0), MomentumPoint::default(), &c, K_P);
        assert!(v.abs() < 1e-12);
        let d = separation_for(1.0, &c);
        let v = phase_match_sinc(MomentumPoint::new(0.0, d), MomentumPoint::default(), &c, K_P);
        assert!((v - 0.841_471).abs() < 1e-6);
    }

    #[test]
    fn gaussian_examples() {
        let c = crystal();
        let q = MomentumPoint::new(2e4, 1e3);
        assert_eq!(phase_match_gaussian(q, q, &c, K_P), 1.0);
        // exponent alpha L d^2 / (4 k_p) = ln 2
        let d = (2f64.ln() * 4.0 * K_P / (c.alpha * c.length)).sqrt();
        let v = phase_match_gaussian(MomentumPoint::new(d, 0.0), MomentumPoint::default(), &c, K_P);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mismatch_reductions() {
        let mut c = crystal();
        assert_eq!(noncollinear_mismatch(MomentumPoint::default(), MomentumPoint::default(), &c, K_P), 0.0);
        c.theta_nc = 0.05;
        let qs = MomentumPoint::new(3e5, 1e5);
        let qi = MomentumPoint::new(-2.9e5, -0.8e5);
        let flip = |q: MomentumPoint| MomentumPoint::new(-q.qx, q.qy);
        let a = noncollinear_mismatch(qs, qi, &c, K_P);
        let b = noncollinear_mismatch(flip(qs), flip(qi), &c, K_P);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));

        c.rho_p = 0.05;
        let a = noncollinear_mismatch(qs, qi, &c, K_P);
        let b = noncollinear_mismatch(flip(qs), flip(qi), &c, K_P);
        assert!(a > b, "walk-off must break x-reflection symmetry");
    }

    #[test]
    fn rate_peaks_on_phase_matched_manifold() {
        let pump = PumpParams::from_coherence(405e-9, 0.5e-3, 0.5).unwrap();
        let mut c = crystal();
        c.theta_nc = 0.05;
        let k = BiphotonKernel::new(&pump, &c, true).unwrap();
        let r = c.ring_radius(K_P);
        let sum = 500.0;
        // along q_s = (s, 0), q_i = (sum - s, 0): scan and compare with the
        // phase-matched point
        let on = k.rate(MomentumPoint::new(r + sum / 2.0, 0.0), MomentumPoint::new(-r + sum / 2.0, 0.0));
        let dk = noncollinear_mismatch(
            MomentumPoint::new(r + sum / 2.0, 0.0),
            MomentumPoint::new(-r + sum / 2.0, 0.0),
            &c,
            K_P,
        );
        assert!(dk.abs() < 1e-6);
        for i in 0..200 {
            let s = r * (0.5 + i as f64 / 200.0);
            let v = k.rate(MomentumPoint::new(s, 0.0), MomentumPoint::new(sum - s, 0.0));
            assert!(v <= on * (1.0 + 1e-12));
        }
    }

    #[test]
    fn type_i_rejects_idler_walkoff() {
        let mut c = CrystalParams::type_i(2e-3, 0.05, 0.0);
        c.rho_i = 0.01;
        assert!(c.validate().is_err());
    }

    /// Second moment of q_s + q_i under the pump diagonal, by 2-D quadrature.
    fn sum_variance(l_c: f64) -> f64 {
        let pump = PumpParams::new(405e-9, 0.5e-3, l_c).unwrap();
        let csd = csd_coefficients(&pump).unwrap();
        let rule = crate::quadrature::GaussLegendre::new(40);
        let span = 4.0 / csd.diagonal_width().sqrt();
        let (mut m0, mut m2) = (0.0, 0.0);
        for (x, wx) in rule.composite(-span, span, 8) {
            for (y, wy) in rule.composite(-span, span, 8) {
                let v = csd.diagonal([x, y]) * wx * wy;
                m0 += v;
                m2 += v * (x * x + y * y);
            }
        }
        m2 / m0
    }

    #[test]
    fn sum_spread_grows_as_coherence_drops() {
        let wide = sum_variance(0.1e-3);
        let narrow = sum_variance(1.0e-3);
        assert!(wide > narrow, "{wide} vs {narrow}");
    }

    proptest! {
        #[test]
        fn rate_is_non_negative(
            qsx in -5e5..5e5f64, qsy in -5e5..5e5f64,
            qix in -5e5..5e5f64, qiy in -5e5..5e5f64,
            a in 0.01..0.99f64, sinc_flag: bool,
        ) {
            let pump = PumpParams::from_coherence(405e-9, 0.5e-3, a).unwrap();
            let c = CrystalParams::type_ii(2e-3, 0.05, 0.07, 0.07, 2e5);
            let k = BiphotonKernel::new(&pump, &c, sinc_flag).unwrap();
            let v = k.rate(MomentumPoint::new(qsx, qsy), MomentumPoint::new(qix, qiy));
            prop_assert!(v >= 0.0 && v.is_finite());
        }

        #[test]
        fn collinear_mismatch_reproduces_sinc(
            qsx in -5e5..5e5f64, qsy in -5e5..5e5f64,
            qix in -5e5..5e5f64, qiy in -5e5..5e5f64,
        ) {
            let c = crystal();
            let qs = MomentumPoint::new(qsx, qsy);
            let qi = MomentumPoint::new(qix, qiy);
            prop_assert_eq!(noncollinear_amplitude(qs, qi, &c, K_P, true), phase_match_sinc(qs, qi, &c, K_P));
            let g = noncollinear_amplitude(qs, qi, &c, K_P, false);
            let h = phase_match_gaussian(qs, qi, &c, K_P);
            prop_assert!((g - h).abs() <= 1e-14 * h.max(1e-300));
        }

        #[test]
        fn gaussian_at_most_one(qsx in -5e5..5e5f64, qix in -5e5..5e5f64) {
            let c = crystal();
            let v = phase_match_gaussian(MomentumPoint::new(qsx, 0.0), MomentumPoint::new(qix, 0.0), &c, K_P);
            prop_assert!(v <= 1.0);
            if qsx != qix { prop_assert!(v < 1.0 || (qsx - qix).abs() < 1.0); }
        }

        #[test]
        fn exchange_symmetry_without_idler_walkoff(
            qsx in -5e5..5e5f64, qsy in -5e5..5e5f64,
            qix in -5e5..5e5f64, qiy in -5e5..5e5f64,
        ) {
            let pump = PumpParams::from_coherence(405e-9, 0.5e-3, 0.4).unwrap();
            let c = CrystalParams::type_ii(2e-3, 0.05, 0.07, 0.0, 2e5);
            let k = BiphotonKernel::new(&pump, &c, true).unwrap();
            let qs = MomentumPoint::new(qsx, qsy);
            let qi = MomentumPoint::new(qix, qiy);
            let a = k.rate(qs, qi);
            let b = k.rate(qi, qs);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn sinc_gaussian_main_lobe_diagnostic() {
        let c = crystal();
        let max_dev = (0..=1000)
            .map(|i| {
                let x = PI * i as f64 / 1000.0;
                let d = separation_for(x, &c);
                let q = MomentumPoint::new(d, 0.0);
                let o = MomentumPoint::default();
                (phase_match_sinc(q, o, &c, K_P) - phase_match_gaussian(q, o, &c, K_P)).abs()
            })
            .fold(0.0, f64::max);
        println!("max |sinc - gaussian| over the main lobe: {max_dev:.4}");
        assert!(max_dev.is_finite());
    }
}
