//! Sampled 1-D scans and 2-D intensity maps shared by the simulation and
//! fitting code.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sampled values along one axis, optionally with per-sample standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scan1D {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl Scan1D {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("{} samples for {} positions", values.len(), xs.len()),
            });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter {
                name: "xs",
                reason: "positions must be strictly increasing".into(),
            });
        }
        Ok(Self { xs, values, stderr: None })
    }

    /// Uniform grid `x0 + i * step` for `i in 0..n`.
    pub fn uniform_axis(x0: f64, step: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| x0 + step * i as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Scale so the largest sample is one. Leaves an all-zero scan untouched.
    pub fn normalize_max(&mut self) {
        let m = self.max_value();
        if m > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
            if let Some(se) = &mut self.stderr {
                se.iter_mut().for_each(|v| *v /= m);
            }
        }
    }

    /// Trapezoid-rule area under the samples.
    pub fn area(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Keep only samples with `lo <= x <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> Scan1D {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.xs[i] >= lo && self.xs[i] <= hi).collect();
        Scan1D {
            xs: keep.iter().map(|&i| self.xs[i]).collect(),
            values: keep.iter().map(|&i| self.values[i]).collect(),
            stderr: self.stderr.as_ref().map(|s| keep.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// Row-major 2-D grid of non-negative samples on a uniform lattice.
///
/// Sample `(row, col)` sits at `x = x0 + col * pitch_x`, `y = y0 + row * pitch_y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile2D {
    pub rows: usize,
    pub cols: usize,
    pub x0: f64,
    pub y0: f64,
    pub pitch_x: f64,
    pub pitch_y: f64,
    pub data: Vec<f64>,
    /// Per-sample standard error when the map came from a Monte-Carlo backend.
    pub stderr: Option<Vec<f64>>,
}

impl Profile2D {
    pub fn x(&self, col: usize) -> f64 {
        self.x0 + self.pitch_x * col as f64
    }

    pub fn y(&self, row: usize) -> f64 {
        self.y0 + self.pitch_y * row as f64
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn normalize_max(&mut self) {
        let m = self.max_value();
        if m > 0.0 {
            self.data.iter_mut().for_each(|v| *v /= m);
            if let Some(se) = &mut self.stderr {
                se.iter_mut().for_each(|v| *v /= m);
            }
        }
    }

    /// Quantize to 16-bit grey levels, max-normalized, row-major.
    pub fn to_u16(&self) -> Vec<u16> {
        let m = self.max_value();
        self.data
            .iter()
            .map(|&v| if m > 0.0 { (v / m * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 })
            .collect()
    }

    /// Radial profile about `(cx, cy)` restricted to directions within
    /// `half_angle` of `direction` (radians, measured from +x).
    /// Returns bin centers and mean intensity per bin; empty bins are dropped.
    pub fn sector_radial_profile(
        &self,
        cx: f64,
        cy: f64,
        direction: f64,
        half_angle: f64,
        bin: f64,
    ) -> Scan1D {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let dx = self.x(c) - cx;
                let dy = self.y(r) - cy;
                let ang = dy.atan2(dx) - direction;
                let ang = ang.sin().atan2(ang.cos());
                if ang.abs() > half_angle {
                    continue;
                }
                let k = ((dx * dx + dy * dy).sqrt() / bin).floor() as usize;
                if sums.len() <= k {
                    sums.resize(k + 1, (0.0, 0));
                }
                sums[k].0 += self.at(r, c);
                sums[k].1 += 1;
            }
        }
        let (xs, values) = sums
            .iter()
            .enumerate()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(k, (s, n))| ((k as f64 + 0.5) * bin, s / *n as f64))
            .unzip();
        Scan1D { xs, values, stderr: None }
    }
}

/// Full width at half maximum of the dominant peak, by linear interpolation
/// of the half-maximum crossings on either side.
pub fn fwhm_interpolated(scan: &Scan1D) -> Option<f64> {
    let (imax, &vmax) = scan
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if vmax <= 0.0 {
        return None;
    }
    let half = 0.5 * vmax;
    let xs = &scan.xs;
    let vs = &scan.values;
    let left = (1..=imax).rev().find(|&i| vs[i - 1] < half).map(|i| {
        let t = (half - vs[i - 1]) / (vs[i] - vs[i - 1]);
        xs[i - 1] + t * (xs[i] - xs[i - 1])
    })?;
    let right = (imax..vs.len() - 1).find(|&i| vs[i + 1] < half).map(|i| {
        let t = (vs[i] - half) / (vs[i] - vs[i + 1]);
        xs[i] + t * (xs[i + 1] - xs[i])
    })?;
    Some(right - left)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_axis() {
        assert!(Scan1D::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Scan1D::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn fwhm_of_triangle() {
        let xs = Scan1D::uniform_axis(-2.0, 0.5, 9);
        let values = xs.iter().map(|x: &f64| (2.0 - x.abs()).max(0.0)).collect();
        let s = Scan1D::new(xs, values).unwrap();
        assert!((fwhm_interpolated(&s).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn area_and_window() {
        let s = Scan1D::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.area(), 2.0);
        assert_eq!(s.window(0.5, 2.0).xs, vec![1.0, 2.0]);
    }
}
