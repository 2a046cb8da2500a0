//! Far-field singles images (rings) and conditional idler distributions.
//!
//! Singles at detector momentum `p` integrate the joint rate over the
//! conjugate photon. Changing variables to the pump momentum
//! `Q = q_s + q_i` puts the Gaussian pump CSD in front, so the integration
//! box is `±6 sigma_Q` about the origin for every pixel.

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{require_positive, Error, Result};
use crate::pump::PumpParams;
use crate::quadrature::{adaptive_2d, AdaptiveOptions, GaussLegendre, Rect};
use crate::scan::{Profile2D, Scan1D};
use crate::spdc::{BiphotonKernel, CrystalParams, MomentumPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Which {
    Signal,
    Idler,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Backend {
    /// Adaptive cubature per pixel with the given relative tolerance.
    Adaptive { rel_tol: f64 },
    /// Stratified Monte Carlo: `strata x strata` cells, `per_stratum` draws each.
    MonteCarlo { strata: usize, per_stratum: usize, seed: u64 },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Adaptive { rel_tol: 1e-7 }
    }
}

/// Square momentum grid centred on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileGrid {
    pub half_extent: f64,
    pub samples: usize,
}

impl ProfileGrid {
    pub fn pitch(&self) -> f64 {
        2.0 * self.half_extent / (self.samples - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ProfileOptions {
    pub backend: Backend,
    pub use_sinc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileMeta {
    pub pump: PumpParams,
    pub crystal: CrystalParams,
    pub which: Which,
    pub grid: ProfileGrid,
    pub options: ProfileOptions,
    /// Divisor applied to reach unit maximum.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinglesProfile {
    pub profile: Profile2D,
    pub meta: ProfileMeta,
}

/// Singles evaluator shared by the image, radial-cut and MC paths.
#[derive(Debug, Clone, Copy)]
pub struct Singles {
    kernel: BiphotonKernel,
    center_s: [f64; 2],
    center_i: [f64; 2],
    sigma_q: f64,
    options: ProfileOptions,
}

struct Estimate {
    value: f64,
    stderr: f64,
}

impl Singles {
    pub fn new(pump: &PumpParams, crystal: &CrystalParams, options: ProfileOptions) -> Result<Self> {
        let kernel = BiphotonKernel::new(pump, crystal, options.use_sinc)?;
        match options.backend {
            Backend::Adaptive { rel_tol } => require_positive("rel_tol", rel_tol)?,
            Backend::MonteCarlo { strata, per_stratum, .. } => {
                if strata == 0 || per_stratum < 2 {
                    return Err(Error::InvalidParameter {
                        name: "backend",
                        reason: "Monte Carlo needs at least one stratum and two draws per stratum".into(),
                    });
                }
            }
        }
        let (center_s, center_i) = crystal.ring_centers();
        Ok(Self { kernel, center_s, center_i, sigma_q: kernel.sum_sigma(), options })
    }

    /// `∫ d²Q CSD(Q) |Φ(q, Q - q)|²` with the detected photon at crystal momentum `q`.
    /// Idler walk-off makes `Φ` asymmetric, so the idler keeps the second slot.
    fn marginal(&self, q: [f64; 2], idler: bool, stream: u64) -> Result<Estimate> {
        let pm = |qx: f64, qy: f64| {
            let a = MomentumPoint::new(q[0], q[1]);
            let b = MomentumPoint::new(qx - q[0], qy - q[1]);
            if idler {
                self.kernel.phase_matching_intensity(b, a)
            } else {
                self.kernel.phase_matching_intensity(a, b)
            }
        };
        let s = self.sigma_q;
        // ∫ CSD_diag = a_c * 2 pi sigma^2
        let total = self.kernel.csd.a_c * 2.0 * std::f64::consts::PI * s * s;
        match self.options.backend {
            Backend::Adaptive { rel_tol } => {
                let f = |x: f64, y: f64| self.kernel.csd.diagonal([x, y]) * pm(x, y);
                let opts = AdaptiveOptions { abs_tol: 1e-10 * total, rel_tol, ..AdaptiveOptions::default() };
                let r = adaptive_2d(f, Rect::centered(0.0, 0.0, 6.0 * s), opts);
                if !r.converged {
                    return Err(Error::NonConvergence(format!(
                        "singles integral at q = ({:.4e}, {:.4e}) stopped at error {:.3e}",
                        q[0], q[1], r.error
                    )));
                }
                Ok(Estimate { value: r.value, stderr: r.error })
            }
            Backend::MonteCarlo { strata, per_stratum, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let normal = Normal::new(0.0, s).expect("positive sigma");
                let m = strata as f64;
                let (mut mean, mut var) = (0.0, 0.0);
                for i in 0..strata {
                    for j in 0..strata {
                        let (mut sum, mut sum2) = (0.0, 0.0);
                        for _ in 0..per_stratum {
                            let u: f64 = (i as f64 + rng.random::<f64>()) / m;
                            let v: f64 = (j as f64 + rng.random::<f64>()) / m;
                            let g = pm(normal.inverse_cdf(u.max(1e-300)), normal.inverse_cdf(v.max(1e-300)));
                            sum += g;
                            sum2 += g * g;
                        }
                        let n = per_stratum as f64;
                        let mu = sum / n;
                        mean += mu;
                        var += ((sum2 - n * mu * mu) / (n - 1.0)).max(0.0) / n;
                    }
                }
                let cells = m * m;
                Ok(Estimate { value: total * mean / cells, stderr: total * var.sqrt() / cells })
            }
        }
    }

    fn estimate(&self, which: Which, p: [f64; 2], stream: u64) -> Result<Estimate> {
        let sig = |s: &Self| s.marginal([p[0] - s.center_s[0], p[1] - s.center_s[1]], false, 2 * stream);
        let idl = |s: &Self| s.marginal([p[0] - s.center_i[0], p[1] - s.center_i[1]], true, 2 * stream + 1);
        match which {
            Which::Signal => sig(self),
            Which::Idler => idl(self),
            Which::Both => {
                let (a, b) = (sig(self)?, idl(self)?);
                Ok(Estimate { value: a.value + b.value, stderr: a.stderr.hypot(b.stderr) })
            }
        }
    }

    /// Unnormalized singles rate at detector momentum `p`.
    pub fn at(&self, which: Which, p: MomentumPoint) -> Result<f64> {
        Ok(self.estimate(which, [p.qx, p.qy], 0)?.value)
    }

    /// Radial profile about `center`, averaged over `n_angles` directions
    /// spread evenly across `direction ± half_angle`. `half_angle = pi` gives the
    /// full azimuthal average.
    pub fn radial_profile(
        &self,
        which: Which,
        center: MomentumPoint,
        direction: f64,
        half_angle: f64,
        n_angles: usize,
        radii: &[f64],
    ) -> Result<Scan1D> {
        let angles: Vec<f64> = (0..n_angles)
            .map(|k| direction + half_angle * (2.0 * (k as f64 + 0.5) / n_angles as f64 - 1.0))
            .collect();
        let values = radii
            .par_iter()
            .map(|&r| {
                let mut acc = 0.0;
                for &a in &angles {
                    let p = [center.qx + r * a.cos(), center.qy + r * a.sin()];
                    acc += self.estimate(which, p, 0)?.value;
                }
                Ok(acc / n_angles as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        Scan1D::new(radii.to_vec(), values)
    }
}

/// Max-normalized singles image over a square momentum grid.
pub fn singles_profile(
    pump: &PumpParams,
    crystal: &CrystalParams,
    which: Which,
    grid: &ProfileGrid,
    options: ProfileOptions,
) -> Result<SinglesProfile> {
    pump.validate()?;
    crystal.validate()?;
    require_positive("grid.half_extent", grid.half_extent)?;
    if grid.samples < 2 {
        return Err(Error::InvalidParameter { name: "grid.samples", reason: "need at least 2 samples per axis".into() });
    }
    let ring = crystal.ring_radius(pump.k_p());
    if grid.half_extent < ring {
        return Err(Error::InvalidParameter {
            name: "grid.half_extent",
            reason: format!("grid must cover the ring radius {ring:.4e} rad/m"),
        });
    }
    let singles = Singles::new(pump, crystal, options)?;
    let n = grid.samples;
    let pitch = grid.pitch();
    let x0 = -grid.half_extent;
    let est: Vec<(f64, f64)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let p = [x0 + pitch * (k % n) as f64, x0 + pitch * (k / n) as f64];
            singles.estimate(which, p, k as u64).map(|e| (e.value, e.stderr))
        })
        .collect::<Result<_>>()?;
    let (data, se): (Vec<f64>, Vec<f64>) = est.into_iter().unzip();
    let mc = matches!(options.backend, Backend::MonteCarlo { .. });
    let mut profile = Profile2D {
        rows: n,
        cols: n,
        x0,
        y0: x0,
        pitch_x: pitch,
        pitch_y: pitch,
        data,
        stderr: mc.then_some(se),
    };
    let norm = profile.max_value();
    profile.normalize_max();
    Ok(SinglesProfile { profile, meta: ProfileMeta { pump: *pump, crystal: *crystal, which, grid: *grid, options, norm } })
}

/// Points where the type-II signal and idler rings cross, `(±sqrt(R² - q_off²), 0)`.
/// For type I the rings coincide and the horizontal ring points are returned.
pub fn overlap_points(pump: &PumpParams, crystal: &CrystalParams) -> Result<[MomentumPoint; 2]> {
    crystal.validate()?;
    let r = crystal.ring_radius(pump.k_p());
    let off = crystal.ring_offset;
    if r <= off {
        return Err(Error::InvalidParameter {
            name: "ring_offset",
            reason: format!("rings of radius {r:.4e} offset by ±{off:.4e} do not intersect"),
        });
    }
    let x = (r * r - off * off).sqrt();
    Ok([MomentumPoint::new(x, 0.0), MomentumPoint::new(-x, 0.0)])
}

/// Conditional idler scan along `p_ix` at fixed `p_iy`, given the signal at
/// detector momentum `p_s`. With `pixel = Some((w, h))` both photons are
/// averaged over `w x h` camera pixels, which is what a coincidence map measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalSpec {
    pub p_s: MomentumPoint,
    pub p_iy: f64,
    pub xs: Vec<f64>,
    pub pixel: Option<(f64, f64)>,
}

/// Joint detection rate in detector coordinates (ring centres applied).
pub fn joint_detector_rate(kernel: &BiphotonKernel, p_s: MomentumPoint, p_i: MomentumPoint) -> f64 {
    let (cs, ci) = kernel.crystal.ring_centers();
    kernel.rate(
        MomentumPoint::new(p_s.qx - cs[0], p_s.qy - cs[1]),
        MomentumPoint::new(p_i.qx - ci[0], p_i.qy - ci[1]),
    )
}

pub fn conditional_scan(pump: &PumpParams, crystal: &CrystalParams, spec: &ConditionalSpec, use_sinc: bool) -> Result<Scan1D> {
    let kernel = BiphotonKernel::new(pump, crystal, use_sinc)?;
    if spec.xs.len() < 2 {
        return Err(Error::InvalidParameter { name: "xs", reason: "need at least two scan points".into() });
    }
    let nodes = |d: f64| -> Vec<(f64, f64)> {
        GaussLegendre::new(4).composite(-0.5 * d, 0.5 * d, 2).into_iter().map(|(x, w)| (x, w / d)).collect()
    };
    let (xoff, yoff) = match spec.pixel {
        None => (vec![(0.0, 1.0)], vec![(0.0, 1.0)]),
        Some((w, h)) => {
            require_positive("pixel width", w)?;
            require_positive("pixel height", h)?;
            (nodes(w), nodes(h))
        }
    };
    let values: Vec<f64> = spec
        .xs
        .par_iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &(sx, wsx) in &xoff {
                for &(sy, wsy) in &yoff {
                    let ps = MomentumPoint::new(spec.p_s.qx + sx, spec.p_s.qy + sy);
                    for &(ix, wix) in &xoff {
                        for &(iy, wiy) in &yoff {
                            let pi = MomentumPoint::new(x + ix, spec.p_iy + iy);
                            acc += wsx * wsy * wix * wiy * joint_detector_rate(&kernel, ps, pi);
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut scan = Scan1D::new(spec.xs.clone(), values)?;
    let area = scan.area();
    if !(area > 0.0) {
        return Err(Error::NonConvergence("conditional scan is identically zero; widen the scan".into()));
    }
    scan.values.iter_mut().for_each(|v| *v /= area);
    Ok(scan)
}
