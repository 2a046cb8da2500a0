//! Least-squares fits used to reduce simulated and synthetic data: fringe
//! visibility, Gaussian peaks with FWHM, and the Bessel visibility law.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{require_positive, Error, Result};
use crate::pump::bessel_visibility;
use crate::scan::{fwhm_interpolated, Scan1D};

/// `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub mean: f64,
    pub sigma: f64,
    pub offset: f64,
    pub fwhm: f64,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityFit {
    /// Fitted fringe amplitude clipped to the physical range `[0, 1]`.
    pub visibility: f64,
    /// Unclipped fitted amplitude.
    pub amplitude: f64,
    pub fringe_period: f64,
    /// Fringe phase referred to `x = 0`.
    pub phase: f64,
    pub residual_rms: f64,
    /// `(max - min) / (max + min)` of the raw samples.
    pub raw_visibility: f64,
}

struct LmOutcome {
    params: Vec<f64>,
    cost: f64,
    converged: bool,
}

/// Levenberg-Marquardt with Marquardt diagonal scaling. `eval` fills the
/// residual vector and the Jacobian for a parameter vector.
fn levenberg_marquardt<F>(p0: Vec<f64>, n_res: usize, max_iter: usize, eval: F) -> LmOutcome
where
    F: Fn(&[f64], &mut DVector<f64>, &mut DMatrix<f64>),
{
    let n = p0.len();
    let mut p = p0;
    let mut r = DVector::zeros(n_res);
    let mut j = DMatrix::zeros(n_res, n);
    eval(&p, &mut r, &mut j);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut trial_r = DVector::zeros(n_res);
    let mut trial_j = DMatrix::zeros(n_res, n);

    for _ in 0..max_iter {
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if cost == 0.0 || g.amax() == 0.0 {
            return LmOutcome { params: p, cost, converged: true };
        }
        loop {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-30);
            }
            let step = match a.lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return LmOutcome { params: p, cost, converged: false };
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            eval(&trial, &mut trial_r, &mut trial_j);
            let trial_cost = trial_r.norm_squared();
            if trial_cost.is_finite() && trial_cost <= cost {
                let small = step
                    .iter()
                    .zip(&p)
                    .all(|(s, v)| s.abs() <= 1e-10 * v.abs().max(1e-10));
                let stalled = cost - trial_cost <= 1e-13 * cost;
                p = trial;
                std::mem::swap(&mut r, &mut trial_r);
                std::mem::swap(&mut j, &mut trial_j);
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                if small || (stalled && lambda <= 1e-2) {
                    return LmOutcome { params: p, cost, converged: true };
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // No downhill step exists at machine precision.
                return LmOutcome { params: p, cost, converged: true };
            }
        }
    }
    LmOutcome { params: p, cost, converged: false }
}

fn check_scan(scan: &Scan1D, min_len: usize) -> Result<()> {
    if scan.len() < min_len {
        return Err(Error::FitFailure(format!("need at least {min_len} samples, got {}", scan.len())));
    }
    if scan.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("scan contains non-finite samples".into()));
    }
    Ok(())
}

/// Fit `I(x) = E(x) [1 + V cos(2 pi x / period + phase)]` with
/// `ln E` a quartic polynomial in `x`.
pub fn fit_visibility(scan: &Scan1D) -> Result<VisibilityFit> {
    check_scan(scan, 8)?;
    let n = scan.len();
    let xmid = 0.5 * (scan.xs[0] + scan.xs[n - 1]);
    let xscale = 0.5 * (scan.xs[n - 1] - scan.xs[0]);
    let t: Vec<f64> = scan.xs.iter().map(|x| (x - xmid) / xscale).collect();
    let y = &scan.values;
    let ymax = scan.max_value();
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    if ymin < 0.0 {
        return Err(Error::FitFailure("intensities must be non-negative".into()));
    }
    let raw_visibility = if ymax + ymin > 0.0 { (ymax - ymin) / (ymax + ymin) } else { 0.0 };
    if ymax <= 0.0 {
        return Ok(VisibilityFit { visibility: 0.0, amplitude: 0.0, fringe_period: f64::NAN, phase: 0.0, residual_rms: 0.0, raw_visibility });
    }
    let mean = y.iter().sum::<f64>() / n as f64;

    // Periodogram over at least two periods up to the sampling limit.
    let dt = 2.0 / (n - 1) as f64;
    let w_lo = 2.0 * PI;
    let w_hi = PI / dt;
    let resid: Vec<f64> = y.iter().map(|v| v / mean - 1.0).collect();
    let power = |w: f64| {
        let (c, s) = t.iter().zip(&resid).fold((0.0, 0.0), |(c, s), (ti, r)| {
            (c + r * (w * ti).cos(), s + r * (w * ti).sin())
        });
        c * c + s * s
    };
    let steps = 4000;
    let mut best = (w_lo, -1.0);
    for k in 0..=steps {
        let w = w_lo + (w_hi - w_lo) * k as f64 / steps as f64;
        let pw = power(w);
        if pw > best.1 {
            best = (w, pw);
        }
    }
    let w0 = best.0;
    let (cc, ss, cs, rc, rs) = t.iter().zip(&resid).fold((0.0, 0.0, 0.0, 0.0, 0.0), |acc, (ti, r)| {
        let (c, s) = ((w0 * ti).cos(), (w0 * ti).sin());
        (acc.0 + c * c, acc.1 + s * s, acc.2 + c * s, acc.3 + r * c, acc.4 + r * s)
    });
    let det = cc * ss - cs * cs;
    let (c0, s0) = if det.abs() > 1e-12 { ((rc * ss - rs * cs) / det, (rs * cc - rc * cs) / det) } else { (0.0, 0.0) };

    // p = [e0..e4, c, s, omega]; ln E is a quartic in t.
    let p0 = vec![mean.ln(), 0.0, 0.0, 0.0, 0.0, c0, s0, w0];
    let eval = |p: &[f64], r: &mut DVector<f64>, j: &mut DMatrix<f64>| {
        for (i, (&ti, &yi)) in t.iter().zip(y).enumerate() {
            let env = (p[0] + ti * (p[1] + ti * (p[2] + ti * (p[3] + ti * p[4])))).exp();
            let (cw, sw) = ((p[7] * ti).cos(), (p[7] * ti).sin());
            let fr = 1.0 + p[5] * cw + p[6] * sw;
            let model = env * fr;
            r[i] = model - yi;
            let mut tk = 1.0;
            for k in 0..5 {
                j[(i, k)] = model * tk;
                tk *= ti;
            }
            j[(i, 5)] = env * cw;
            j[(i, 6)] = env * sw;
            j[(i, 7)] = env * ti * (-p[5] * sw + p[6] * cw);
        }
    };
    let out = levenberg_marquardt(p0, n, 2000, eval);
    if !out.converged {
        return Err(Error::FitFailure("visibility fit did not converge".into()));
    }
    let residual_rms = (out.cost / n as f64).sqrt();
    if residual_rms > 0.2 * ymax {
        return Err(Error::FitFailure(format!("residual rms {residual_rms:.3e} exceeds 20% of the peak")));
    }
    let p = out.params;
    let amplitude = (p[5] * p[5] + p[6] * p[6]).sqrt();
    let visibility = amplitude.clamp(0.0, 1.0);
    let w = p[7].abs();
    let fringe_period = 2.0 * PI * xscale / w;
    let phase_t = (-p[6] * p[7].signum()).atan2(p[5]);
    let phase = (phase_t - w * xmid / xscale).rem_euclid(2.0 * PI);
    Ok(VisibilityFit { visibility, amplitude, fringe_period, phase, residual_rms, raw_visibility })
}

/// Nonlinear least-squares fit of `offset + amplitude exp(-(x - mean)^2 / (2 sigma^2))`.
pub fn fit_gaussian(scan: &Scan1D) -> Result<GaussianFit> {
    check_scan(scan, 5)?;
    let n = scan.len();
    let (xs, ys) = (&scan.xs, &scan.values);
    let (imax, &ymax) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    if ymax - ymin <= 1e-12 * ymax.abs().max(1e-300) {
        return Err(Error::FitFailure("flat scan has no peak".into()));
    }
    if imax == 0 || imax == n - 1 {
        return Err(Error::FitFailure("peak lies on the scan boundary".into()));
    }

    // Moments of the baseline-subtracted samples above half maximum.
    let half = 0.5 * (ymax + ymin);
    let (mut m0, mut m1) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        if *y >= half {
            m0 += y - ymin;
            m1 += (y - ymin) * x;
        }
    }
    let mean0 = m1 / m0;
    let shifted = Scan1D { xs: xs.clone(), values: ys.iter().map(|y| y - ymin).collect(), stderr: None };
    let pitch = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    let sigma0 = fwhm_interpolated(&shifted)
        .map(|f| f / FWHM_PER_SIGMA)
        .unwrap_or(pitch)
        .max(0.5 * pitch);
    let p0 = vec![ymax - ymin, mean0, sigma0, ymin];

    let eval = |p: &[f64], r: &mut DVector<f64>, j: &mut DMatrix<f64>| {
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let u = (x - p[1]) / p[2];
            let g = (-0.5 * u * u).exp();
            r[i] = p[3] + p[0] * g - y;
            j[(i, 0)] = g;
            j[(i, 1)] = p[0] * g * u / p[2];
            j[(i, 2)] = p[0] * g * u * u / p[2];
            j[(i, 3)] = 1.0;
        }
    };
    let out = levenberg_marquardt(p0, n, 1000, eval);
    if !out.converged {
        return Err(Error::FitFailure("Gaussian fit did not converge".into()));
    }
    let p = out.params;
    let sigma = p[2].abs();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::FitFailure("fitted width is degenerate".into()));
    }
    Ok(GaussianFit {
        amplitude: p[0],
        mean: p[1],
        sigma,
        offset: p[3],
        fwhm: FWHM_PER_SIGMA * sigma,
        residual_rms: (out.cost / n as f64).sqrt(),
    })
}

/// Invert the Bessel visibility law for the source radius `a_s` from
/// `(d12, visibility)` measurements with lens focal length `f`.
pub fn fit_bessel_visibility(points: &[(f64, f64)], f: f64, lambda_p: f64) -> Result<f64> {
    require_positive("f", f)?;
    require_positive("lambda_p", lambda_p)?;
    let mut ds: Vec<f64> = points.iter().map(|p| p.0).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    if points.len() < 3 || ds.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "need at least 3 distinct separations, got {}",
            ds.len()
        )));
    }
    let d_max = ds[ds.len() - 1];
    if d_max <= 0.0 {
        return Err(Error::Underdetermined("all separations are zero".into()));
    }
    let k_p = 2.0 * PI / lambda_p;
    let cost = |a: f64| -> f64 {
        points
            .iter()
            .map(|&(d, v)| {
                let r = v - bessel_visibility(k_p * d * a / f);
                r * r
            })
            .sum()
    };
    // nu_max = k d_max a / f spans [1e-2, 30] on a log grid.
    let a_of = |nu: f64| nu * f / (k_p * d_max);
    let grid: Vec<f64> = (0..=800).map(|i| a_of(1e-2 * (3000f64).powf(i as f64 / 800.0))).collect();
    let (ibest, _) = grid
        .iter()
        .map(|&a| cost(a))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let mut lo = grid[ibest.saturating_sub(1)];
    let mut hi = grid[(ibest + 1).min(grid.len() - 1)];
    // golden section
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (cost(c), cost(d));
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-13 * hi.abs() {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = cost(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = cost(d);
        }
    }
    let a = 0.5 * (lo + hi);
    if !a.is_finite() || a <= 0.0 {
        return Err(Error::FitFailure("Bessel-law inversion did not converge".into()));
    }
    Ok(a)
}
