//! Single-photon double-slit fringes in the 1-D reduction.
//!
//! With Gaussian phase matching every momentum integral is Gaussian, so the
//! signal cross-spectral density at the slit plane is the exponential of a
//! quadratic form in `(x, x')`. The remaining aperture integral is done with
//! per-slit Gauss-Legendre panels and the Fresnel kernel to the detector.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::fit_visibility;
use crate::error::{require_positive, Error, Result};
use crate::pump::{csd_coefficients, PumpParams};
use crate::quadrature::GaussLegendre;
use crate::scan::Scan1D;
use crate::special::sinc;
use crate::spdc::CrystalParams;

pub const DEFAULT_Z: f64 = 0.10;
pub const DEFAULT_Z1: f64 = 0.20;
/// Largest change allowed when the per-slit quadrature order is doubled.
pub const CONVERGENCE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlitGeometry {
    pub a: f64,
    pub d: f64,
    pub z: f64,
    pub z1: f64,
}

impl SlitGeometry {
    pub fn new(a: f64, d: f64, z: f64, z1: f64) -> Result<Self> {
        let s = Self { a, d, z, z1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("a", self.a)?;
        require_positive("z", self.z)?;
        require_positive("z1", self.z1)?;
        if !(self.d > self.a) {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!("slit separation {} must exceed slit width {}", self.d, self.a),
            });
        }
        Ok(())
    }

    /// `[lo, hi]` of the slit at positive x.
    pub fn right_slit(&self) -> (f64, f64) {
        (0.5 * (self.d - self.a), 0.5 * (self.d + self.a))
    }

    pub fn fringe_period(&self, lambda_s: f64) -> f64 {
        lambda_s * self.z1 / self.d
    }

    /// Half width of the single-slit diffraction lobe at the detector.
    pub fn central_lobe(&self, lambda_s: f64) -> f64 {
        lambda_s * self.z1 / self.a
    }
}

/// Double-slit transmission; slit edges count as open.
pub fn slit_transmission(x: f64, slits: &SlitGeometry) -> f64 {
    let (lo, hi) = slits.right_slit();
    let ax = x.abs();
    if ax >= lo && ax <= hi {
        1.0
    } else {
        0.0
    }
}

/// Uniform detector grid centred on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeGrid {
    pub half_width: f64,
    pub samples: usize,
}

impl FringeGrid {
    /// Spans four fringe periods or 1.5 central lobes on each side, whichever is larger.
    pub fn default_for(slits: &SlitGeometry, lambda_s: f64) -> Self {
        let half_width = (4.0 * slits.fringe_period(lambda_s)).max(1.5 * slits.central_lobe(lambda_s));
        Self { half_width, samples: 801 }
    }

    pub fn positions(&self) -> Vec<f64> {
        let step = 2.0 * self.half_width / (self.samples - 1) as f64;
        Scan1D::uniform_axis(-self.half_width, step, self.samples)
    }

    fn validate(&self, slits: &SlitGeometry, lambda_s: f64) -> Result<()> {
        require_positive("grid.half_width", self.half_width)?;
        let period = slits.fringe_period(lambda_s);
        if 2.0 * self.half_width < 6.0 * period * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter {
                name: "grid.half_width",
                reason: format!("grid must span at least 6 fringe periods ({:.4e} m)", 6.0 * period),
            });
        }
        if self.samples < 3 || 2.0 * self.half_width / (self.samples - 1) as f64 > period / 8.0 {
            return Err(Error::InvalidParameter {
                name: "grid.samples",
                reason: "need at least 8 samples per fringe period".into(),
            });
        }
        Ok(())
    }
}

/// How the undetected idler enters the signal marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum IdlerTreatment {
    /// Idler detected in the far field at transverse momentum `q_i` (rad/m);
    /// the signal then inherits the pump's spatial coherence.
    FarFieldMode { q_i: f64 },
    /// Idler traced out over all momenta.
    Traced,
}

impl Default for IdlerTreatment {
    fn default() -> Self {
        IdlerTreatment::FarFieldMode { q_i: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureOrder {
    pub panels: usize,
    pub points: usize,
}

impl Default for QuadratureOrder {
    fn default() -> Self {
        Self { panels: 6, points: 8 }
    }
}

impl QuadratureOrder {
    pub fn doubled(&self) -> Self {
        Self { panels: self.panels, points: 2 * self.points }
    }
}

/// Optics between the slits and the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum Detection {
    /// Detector in the back focal plane of a lens of focal length `z1`.
    #[default]
    FocalPlane,
    /// Free-space Fresnel propagation over `z1`.
    Fresnel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct FringeOptions {
    pub idler: IdlerTreatment,
    pub order: QuadratureOrder,
    pub detection: Detection,
}

/// `W(x, x') = exp(c_xx x^2 + c_xy x x' + c_yy x'^2 + l_x x + l_y x')` up to a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalCsd {
    pub c_xx: Complex64,
    pub c_xy: Complex64,
    pub c_yy: Complex64,
    pub l_x: Complex64,
    pub l_y: Complex64,
}

impl SignalCsd {
    pub fn eval(&self, x: f64, xp: f64) -> Complex64 {
        (self.c_xx * x * x + self.c_xy * x * xp + self.c_yy * xp * xp + self.l_x * x + self.l_y * xp).exp()
    }
}

/// Signal cross-spectral density a distance `z` past the crystal.
///
/// Evaluates `∫ dv exp(-vᵀMv + (iJ + B0)ᵀv)` in closed form, where `v`
/// collects the signal momenta at both arguments (plus the idler momentum
/// when it is traced out).
pub fn signal_csd(pump: &PumpParams, crystal: &CrystalParams, z: f64, idler: IdlerTreatment) -> Result<SignalCsd> {
    crystal.validate()?;
    let csd = csd_coefficients(pump)?;
    let (b1, b2) = (csd.b1, csd.b2);
    let beta = crystal.alpha * crystal.length / (4.0 * pump.k_p());
    let gamma = z / (2.0 * pump.k_s());
    let c = |re: f64, im: f64| Complex64::new(re, im);

    let (m, b0, jx, jxp) = match idler {
        IdlerTreatment::FarFieldMode { q_i } => {
            let m = DMatrix::from_row_slice(2, 2, &[c(b1 + beta, gamma), c(-b2, 0.0), c(-b2, 0.0), c(b1 + beta, -gamma)]);
            let lin = q_i * (-2.0 * b1 + 2.0 * b2 + 2.0 * beta);
            (m, vec![lin, lin], vec![1.0, 0.0], vec![0.0, -1.0])
        }
        IdlerTreatment::Traced => {
            let si = b1 - b2 - beta;
            let m = DMatrix::from_row_slice(
                3,
                3,
                &[
                    c(b1 + beta, gamma),
                    c(-b2, 0.0),
                    c(si, 0.0),
                    c(-b2, 0.0),
                    c(b1 + beta, -gamma),
                    c(si, 0.0),
                    c(si, 0.0),
                    c(si, 0.0),
                    c(2.0 * (b1 - b2 + beta), 0.0),
                ],
            );
            (m, vec![0.0; 3], vec![1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0])
        }
    };
    let n = m.try_inverse().ok_or_else(|| Error::NonConvergence("singular momentum kernel".into()))?;
    let to_c = |v: &[f64]| DVector::from_iterator(v.len(), v.iter().map(|&r| c(r, 0.0)));
    let (jx, jxp, b0) = (to_c(&jx), to_c(&jxp), to_c(&b0));
    let quad = |a: &DVector<Complex64>, b: &DVector<Complex64>| (a.transpose() * &n * b)[(0, 0)];
    let i = Complex64::i();
    Ok(SignalCsd {
        c_xx: -0.25 * quad(&jx, &jx),
        c_xy: -0.5 * quad(&jx, &jxp),
        c_yy: -0.25 * quad(&jxp, &jxp),
        l_x: 0.5 * i * quad(&jx, &b0),
        l_y: 0.5 * i * quad(&jxp, &b0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeMeta {
    pub pump: PumpParams,
    pub crystal: CrystalParams,
    pub slits: SlitGeometry,
    pub grid: FringeGrid,
    pub options: FringeOptions,
    /// Largest sample change under quadrature-order doubling.
    pub convergence_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeProfile {
    pub scan: Scan1D,
    pub meta: FringeMeta,
}

fn slit_nodes(slits: &SlitGeometry, order: QuadratureOrder) -> Vec<(f64, f64)> {
    let (lo, hi) = slits.right_slit();
    let right = GaussLegendre::new(order.points).composite(lo, hi, order.panels);
    let mut nodes: Vec<(f64, f64)> = right.iter().rev().map(|&(x, w)| (-x, w)).collect();
    nodes.extend(right);
    nodes
}

fn raw_profile(csd: &SignalCsd, slits: &SlitGeometry, k_s: f64, xs: &[f64], order: QuadratureOrder, detection: Detection) -> Vec<f64> {
    let nodes = slit_nodes(slits, order);
    let nn = nodes.len();
    let curv = match detection {
        Detection::FocalPlane => 0.0,
        Detection::Fresnel => k_s / (2.0 * slits.z1),
    };
    let mut kernel = vec![Complex64::new(0.0, 0.0); nn * nn];
    for (r, &(x, wx)) in nodes.iter().enumerate() {
        for (c, &(xp, wxp)) in nodes.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, curv * (x * x - xp * xp));
            kernel[r * nn + c] = csd.eval(x, xp) * phase * (wx * wxp);
        }
    }
    let kappa = k_s / slits.z1;
    xs.par_iter()
        .map(|&big_x| {
            let v: Vec<Complex64> = nodes.iter().map(|&(x, _)| Complex64::from_polar(1.0, kappa * big_x * x)).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..nn {
                let row = &kernel[r * nn..(r + 1) * nn];
                let mut s = Complex64::new(0.0, 0.0);
                for (k, vm) in row.iter().zip(&v) {
                    s += k * vm;
                }
                acc += v[r].conj() * s;
            }
            acc.re.max(0.0)
        })
        .collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
    v
}

pub fn fringe_profile(pump: &PumpParams, crystal: &CrystalParams, slits: &SlitGeometry, grid: &FringeGrid) -> Result<FringeProfile> {
    fringe_profile_with(pump, crystal, slits, grid, FringeOptions::default())
}

/// Normalized signal intensity behind the double slit. Fails with
/// [`Error::NonConvergence`] if doubling the per-slit order moves any sample
/// by more than [`CONVERGENCE_TOL`].
pub fn fringe_profile_with(
    pump: &PumpParams,
    crystal: &CrystalParams,
    slits: &SlitGeometry,
    grid: &FringeGrid,
    options: FringeOptions,
) -> Result<FringeProfile> {
    pump.validate()?;
    slits.validate()?;
    let k_s = pump.k_s();
    let lambda_s = 2.0 * PI / k_s;
    grid.validate(slits, lambda_s)?;
    if options.order.panels == 0 || options.order.points == 0 {
        return Err(Error::InvalidParameter { name: "order", reason: "quadrature order must be positive".into() });
    }
    let csd = signal_csd(pump, crystal, slits.z, options.idler)?;
    let xs = grid.positions();
    let base = normalized(raw_profile(&csd, slits, k_s, &xs, options.order, options.detection));
    let fine = normalized(raw_profile(&csd, slits, k_s, &xs, options.order.doubled(), options.detection));
    let delta = base.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if !(delta <= CONVERGENCE_TOL) {
        return Err(Error::NonConvergence(format!(
            "doubling the slit quadrature order changed a sample by {delta:.3e}"
        )));
    }
    Ok(FringeProfile {
        scan: Scan1D::new(xs, base)?,
        meta: FringeMeta { pump: *pump, crystal: *crystal, slits: *slits, grid: *grid, options, convergence_delta: delta },
    })
}

/// Fully coherent, uniformly illuminated double slit in the far field:
/// `sinc^2(pi a x / (lambda z1)) cos^2(pi d x / (lambda z1))`.
pub fn coherent_double_slit(x: f64, slits: &SlitGeometry, lambda_s: f64) -> f64 {
    let u = PI * x / (lambda_s * slits.z1);
    let s = sinc(u * slits.a);
    let c = (u * slits.d).cos();
    s * s * c * c
}

/// Part of a fringe scan used for visibility fits: the central diffraction lobe.
pub fn fit_window(scan: &Scan1D, slits: &SlitGeometry, lambda_s: f64) -> Scan1D {
    let h = slits.central_lobe(lambda_s);
    scan.window(-h, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityPoint {
    pub degree_of_coherence: f64,
    pub l_c: f64,
    pub d: f64,
    pub visibility: f64,
}

/// Fitted visibility for every `(pump, d)` pair, pump-major.
pub fn visibility_curve(
    pumps: &[PumpParams],
    ds: &[f64],
    a: f64,
    z: f64,
    z1: f64,
    crystal: &CrystalParams,
    options: FringeOptions,
) -> Result<Vec<VisibilityPoint>> {
    let mut out = Vec::with_capacity(pumps.len() * ds.len());
    for pump in pumps {
        let lambda_s = 2.0 * PI / pump.k_s();
        for &d in ds {
            let slits = SlitGeometry::new(a, d, z, z1)?;
            let grid = FringeGrid::default_for(&slits, lambda_s);
            let prof = fringe_profile_with(pump, crystal, &slits, &grid, options)?;
            let fit = fit_visibility(&fit_window(&prof.scan, &slits, lambda_s))?;
            out.push(VisibilityPoint {
                degree_of_coherence: pump.degree_of_coherence(),
                l_c: pump.l_c,
                d,
                visibility: fit.visibility,
            });
        }
    }
    Ok(out)
}
