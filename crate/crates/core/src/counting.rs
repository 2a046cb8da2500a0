//! Synthetic photon-counting frame stacks and the pixel covariance
//! (coincidence) estimator `C = <n_i n_j> - <n_i><n_j>`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{fit_gaussian, GaussianFit};
use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::pump::PumpParams;
use crate::scan::{Profile2D, Scan1D};
use crate::spdc::{BiphotonKernel, CrystalParams, MomentumPoint};

pub const DEFAULT_N_FRAMES: usize = 20_000;
pub const DEFAULT_EXPOSURE: f64 = 0.020;
const MAGIC: &[u8; 4] = b"GSMF";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameStack {
    pub rows: usize,
    pub cols: usize,
    pub n_frames: usize,
    pub pixel_pitch: f64,
    pub exposure: f64,
    pub seed: u64,
    /// Frame-major, then row-major counts.
    pub counts: Vec<u16>,
}

impl FrameStack {
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn frame(&self, k: usize) -> &[u16] {
        let n = self.pixels();
        &self.counts[k * n..(k + 1) * n]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Same stack with frames reordered by `order` (a permutation of frame indices).
    pub fn permuted(&self, order: &[usize]) -> FrameStack {
        let counts = order.iter().flat_map(|&k| self.frame(k).iter().copied()).collect();
        FrameStack { counts, ..self.clone() }
    }

    /// Binary container: `"GSMF"`, then little-endian `u32` version, rows,
    /// cols, n_frames, `u64` seed, `f64` pixel pitch and exposure, then the
    /// counts as `u16`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [FORMAT_VERSION, self.rows as u32, self.cols as u32, self.n_frames as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.pixel_pitch.to_le_bytes())?;
        w.write_all(&self.exposure.to_le_bytes())?;
        let mut buf = Vec::with_capacity(2 * self.counts.len());
        for c in &self.counts {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<FrameStack> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a frame stack (bad magic)".into()));
        }
        let mut u32s = [0u32; 4];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, rows, cols, n_frames] = u32s;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported frame stack version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let pixel_pitch = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let exposure = f64::from_le_bytes(b8);
        let n = rows as usize * cols as usize * n_frames as usize;
        let mut raw = vec![0u8; 2 * n];
        r.read_exact(&mut raw)?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after frame data".into()));
        }
        let counts = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        Ok(FrameStack {
            rows: rows as usize,
            cols: cols as usize,
            n_frames: n_frames as usize,
            pixel_pitch,
            exposure,
            seed,
            counts,
        })
    }
}

/// Camera behind a collimating lens: position `x` maps to momentum `k_s x / f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorGeometry {
    pub rows: usize,
    pub cols: usize,
    pub pixel_pitch: f64,
    pub focal_length: f64,
    pub k_s: f64,
    /// Vertical on-chip binning: each sensor row is this many pixels tall.
    pub row_binning: usize,
    /// Momentum at the centre of the sensor.
    pub center: MomentumPoint,
}

impl SensorGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.row_binning == 0 {
            return Err(Error::InvalidParameter { name: "sensor", reason: "sensor needs at least one pixel and unit binning".into() });
        }
        require_positive("pixel_pitch", self.pixel_pitch)?;
        require_positive("focal_length", self.focal_length)?;
        require_positive("k_s", self.k_s)
    }

    /// Momentum width of one pixel column.
    pub fn dq(&self) -> f64 {
        self.k_s * self.pixel_pitch / self.focal_length
    }

    /// Momentum height of one (binned) sensor row.
    pub fn dq_row(&self) -> f64 {
        self.dq() * self.row_binning as f64
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> MomentumPoint {
        MomentumPoint::new(
            self.center.qx + (col as f64 - 0.5 * (self.cols - 1) as f64) * self.dq(),
            self.center.qy + (row as f64 - 0.5 * (self.rows - 1) as f64) * self.dq_row(),
        )
    }

    /// Linear pixel index hit by momentum `q`, if on the sensor.
    pub fn pixel_of(&self, q: MomentumPoint) -> Option<usize> {
        let c = ((q.qx - self.center.qx) / self.dq() + 0.5 * self.cols as f64).floor();
        let r = ((q.qy - self.center.qy) / self.dq_row() + 0.5 * self.rows as f64).floor();
        if c >= 0.0 && r >= 0.0 && (c as usize) < self.cols && (r as usize) < self.rows {
            Some(r as usize * self.cols + c as usize)
        } else {
            None
        }
    }
}

/// Source of (signal, idler) pixel pairs; `None` marks a photon that misses the sensor.
pub trait PairSampler: Sync {
    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Option<usize>, Option<usize>);
}

/// Tabulated joint distribution over (signal pixel, idler pixel).
#[derive(Debug, Clone)]
pub struct DiscreteJoint {
    pairs: Vec<(usize, usize)>,
    alias: WeightedAliasIndex<f64>,
}

impl DiscreteJoint {
    pub fn new(entries: &[(usize, usize, f64)]) -> Result<Self> {
        if entries.iter().any(|e| !(e.2 >= 0.0 && e.2.is_finite())) {
            return Err(Error::InvalidParameter { name: "joint", reason: "weights must be finite and non-negative".into() });
        }
        let kept: Vec<&(usize, usize, f64)> = entries.iter().filter(|e| e.2 > 0.0).collect();
        if kept.is_empty() {
            return Err(Error::InvalidParameter { name: "joint", reason: "joint distribution has no mass".into() });
        }
        let alias = WeightedAliasIndex::new(kept.iter().map(|e| e.2).collect())
            .map_err(|e| Error::InvalidParameter { name: "joint", reason: e.to_string() })?;
        Ok(Self { pairs: kept.iter().map(|e| (e.0, e.1)).collect(), alias })
    }

    /// Rows index the signal pixel, columns the idler pixel.
    pub fn from_matrix(joint: &Profile2D) -> Result<Self> {
        let entries: Vec<(usize, usize, f64)> =
            (0..joint.rows).flat_map(|r| (0..joint.cols).map(move |c| (r, c))).map(|(r, c)| (r, c, joint.at(r, c))).collect();
        Self::new(&entries)
    }

    pub fn max_pixel(&self) -> usize {
        self.pairs.iter().map(|p| p.0.max(p.1)).max().unwrap_or(0)
    }
}

impl PairSampler for DiscreteJoint {
    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Option<usize>, Option<usize>) {
        let (s, i) = self.pairs[self.alias.sample(rng)];
        (Some(s), Some(i))
    }
}

/// Exact draws from the continuous biphoton rate (Gaussian phase-matching
/// stand-in), mapped onto a sensor.
///
/// With `Q = q_s + q_i` and `u = q_s - q_i` the mismatch is linear in
/// `|u - u_c|^2` for `u_c = (k_p rho_i / 2, 0)`, and area measure makes that
/// variable uniform. The phase-matching factor therefore becomes a truncated
/// Laplace law in `x = L dk / 2`, and `Q` is accepted with its total weight.
#[derive(Debug, Clone, Copy)]
pub struct ModelJoint {
    kernel: BiphotonKernel,
    sensor: SensorGeometry,
}

impl ModelJoint {
    pub fn new(pump: &PumpParams, crystal: &CrystalParams, sensor: SensorGeometry) -> Result<Self> {
        sensor.validate()?;
        Ok(Self { kernel: BiphotonKernel::new(pump, crystal, false)?, sensor })
    }

    pub fn sensor(&self) -> &SensorGeometry {
        &self.sensor
    }

    /// One pair in detector momentum coordinates.
    pub fn sample_momenta(&self, rng: &mut ChaCha8Rng) -> (MomentumPoint, MomentumPoint) {
        let c = &self.kernel.crystal;
        let k_p = self.kernel.k_p;
        let two_a = 2.0 * c.alpha;
        let half_l = 0.5 * c.length;
        let sigma = self.kernel.sum_sigma();
        let ucx = 0.5 * k_p * c.rho_i;
        loop {
            let qx = sigma * rng.sample::<f64, _>(StandardNormal);
            let qy = sigma * rng.sample::<f64, _>(StandardNormal);
            let offset = 0.5 * k_p * c.theta_nc * c.theta_nc + ucx * ucx / (2.0 * k_p) - (c.rho_p + 0.5 * c.rho_i) * qx;
            let x_min = -half_l * offset;
            // ∫_{x_min}^∞ e^{-2a|x|} dx relative to its untruncated value
            let (w_neg, accept) = if x_min >= 0.0 {
                (0.0, (-two_a * x_min).exp() * 0.5)
            } else {
                let w = 1.0 - (two_a * x_min).exp();
                (w, 0.5 * (1.0 + w))
            };
            if rng.random::<f64>() >= accept {
                continue;
            }
            let e: f64 = rng.sample(Exp1);
            let x = if x_min >= 0.0 {
                x_min + e / two_a
            } else if rng.random::<f64>() * (1.0 + w_neg) < w_neg {
                (1.0 - rng.random::<f64>() * w_neg).ln() / two_a
            } else {
                e / two_a
            };
            let s = (2.0 * k_p * (x / half_l + offset)).max(0.0);
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            let (ux, uy) = (ucx + s.sqrt() * phi.cos(), s.sqrt() * phi.sin());
            let (cs, ci) = c.ring_centers();
            let p_s = MomentumPoint::new(0.5 * (qx + ux) + cs[0], 0.5 * (qy + uy) + cs[1]);
            let p_i = MomentumPoint::new(0.5 * (qx - ux) + ci[0], 0.5 * (qy - uy) + ci[1]);
            return (p_s, p_i);
        }
    }
}

impl PairSampler for ModelJoint {
    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Option<usize>, Option<usize>) {
        let (s, i) = self.sample_momenta(rng);
        (self.sensor.pixel_of(s), self.sensor.pixel_of(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub pairs_per_frame: f64,
    pub dark_probability: f64,
    pub n_frames: usize,
    pub seed: u64,
    pub pixel_pitch: f64,
    pub exposure: f64,
}

/// Draw a Poisson number of pairs per frame plus independent per-pixel dark
/// counts. Frame `k` uses ChaCha8 stream `k` of `seed`, so the stack does not
/// depend on thread scheduling.
pub fn synth_frames<S: PairSampler + ?Sized>(sampler: &S, cfg: &SynthConfig) -> Result<FrameStack> {
    require_non_negative("pairs_per_frame", cfg.pairs_per_frame)?;
    require_non_negative("dark_probability", cfg.dark_probability)?;
    if cfg.dark_probability > 1.0 {
        return Err(Error::InvalidParameter { name: "dark_probability", reason: "must not exceed 1".into() });
    }
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(Error::InvalidParameter { name: "sensor", reason: "frames need at least one pixel".into() });
    }
    let npix = cfg.rows * cfg.cols;
    let poisson = if cfg.pairs_per_frame > 0.0 {
        Some(Poisson::new(cfg.pairs_per_frame).map_err(|e| Error::InvalidParameter { name: "pairs_per_frame", reason: e.to_string() })?)
    } else {
        None
    };
    let frames: Vec<Vec<u16>> = (0..cfg.n_frames)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut frame = vec![0u16; npix];
            let mut bump = |p: Option<usize>| {
                if let Some(p) = p.filter(|&p| p < npix) {
                    frame[p] = frame[p].saturating_add(1);
                }
            };
            let n_pairs = poisson.as_ref().map_or(0, |d| d.sample(&mut rng) as u64);
            for _ in 0..n_pairs {
                let (s, i) = sampler.sample_pair(&mut rng);
                bump(s);
                bump(i);
            }
            add_dark_counts(&mut frame, cfg.dark_probability, &mut rng);
            frame
        })
        .collect();
    Ok(FrameStack {
        rows: cfg.rows,
        cols: cfg.cols,
        n_frames: cfg.n_frames,
        pixel_pitch: cfg.pixel_pitch,
        exposure: cfg.exposure,
        seed: cfg.seed,
        counts: frames.concat(),
    })
}

/// Bernoulli(p) per pixel via geometric gaps between hits.
fn add_dark_counts(frame: &mut [u16], p: f64, rng: &mut ChaCha8Rng) {
    if p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        frame.iter_mut().for_each(|c| *c = c.saturating_add(1));
        return;
    }
    let log_q = (-p).ln_1p();
    let mut idx = 0usize;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / log_q).floor();
        if gap >= (frame.len() - idx) as f64 {
            return;
        }
        idx += gap as usize;
        frame[idx] = frame[idx].saturating_add(1);
        idx += 1;
        if idx >= frame.len() {
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoincidenceResult {
    pub c: f64,
    pub i: usize,
    pub j: usize,
    pub stderr: f64,
}

/// Covariance from integer moment sums and its leave-one-frame-out jackknife.
/// Frames are grouped by their `(n_i, n_j)` pair so the reduction order is
/// fixed by value, not by frame order.
fn covariance_jackknife(pairs: &BTreeMap<(u16, u16), u64>, n: usize) -> (f64, f64) {
    let (mut si, mut sj, mut sij) = (0u64, 0u64, 0u64);
    for (&(a, b), &m) in pairs {
        si += a as u64 * m;
        sj += b as u64 * m;
        sij += a as u64 * b as u64 * m;
    }
    let nf = n as f64;
    let c = sij as f64 / nf - (si as f64 / nf) * (sj as f64 / nf);
    let n1 = nf - 1.0;
    let loo = |a: u16, b: u16| {
        let (a, b) = (a as u64, b as u64);
        (sij - a * b) as f64 / n1 - ((si - a) as f64 / n1) * ((sj - b) as f64 / n1)
    };
    let mean = pairs.iter().map(|(&(a, b), &m)| m as f64 * loo(a, b)).sum::<f64>() / nf;
    let ss: f64 = pairs.iter().map(|(&(a, b), &m)| m as f64 * (loo(a, b) - mean).powi(2)).sum();
    (c, (n1 / nf * ss).sqrt())
}

fn check_pixel(stack: &FrameStack, p: usize) -> Result<()> {
    if p >= stack.pixels() {
        return Err(Error::InvalidParameter { name: "pixel", reason: format!("pixel {p} outside a {}x{} frame", stack.rows, stack.cols) });
    }
    Ok(())
}

pub fn pixel_coincidence(stack: &FrameStack, i: usize, j: usize) -> Result<CoincidenceResult> {
    if stack.n_frames < 2 {
        return Err(Error::InvalidParameter { name: "n_frames", reason: "need at least 2 frames".into() });
    }
    check_pixel(stack, i)?;
    check_pixel(stack, j)?;
    if i == j {
        return Err(Error::InvalidParameter { name: "pixel", reason: "coincidence needs two distinct pixels".into() });
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let mut pairs = BTreeMap::new();
    for k in 0..stack.n_frames {
        let f = stack.frame(k);
        *pairs.entry((f[lo], f[hi])).or_insert(0u64) += 1;
    }
    let (c, stderr) = covariance_jackknife(&pairs, stack.n_frames);
    Ok(CoincidenceResult { c, i, j, stderr })
}

/// `C(s, j)` for every pixel `j` of `row` except `s` itself; `xs` are column indices.
pub fn conditional_map(stack: &FrameStack, s: usize, row: usize) -> Result<Scan1D> {
    check_pixel(stack, s)?;
    if row >= stack.rows {
        return Err(Error::InvalidParameter { name: "row", reason: format!("row {row} outside the frame") });
    }
    let cols: Vec<usize> = (0..stack.cols).filter(|&c| stack.index(row, c) != s).collect();
    let results = cols
        .par_iter()
        .map(|&c| pixel_coincidence(stack, s, stack.index(row, c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scan1D {
        xs: cols.iter().map(|&c| c as f64).collect(),
        values: results.iter().map(|r| r.c).collect(),
        stderr: Some(results.iter().map(|r| r.stderr).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FwhmEstimate {
    pub fit: GaussianFit,
    pub fwhm: f64,
    pub stderr: f64,
}

/// Gaussian FWHM of a conditional map with a leave-one-frame-out jackknife
/// error. `to_x` maps a column index to the abscissa used for the fit.
pub fn conditional_fwhm(stack: &FrameStack, s: usize, row: usize, to_x: impl Fn(usize) -> f64 + Sync) -> Result<FwhmEstimate> {
    check_pixel(stack, s)?;
    if stack.n_frames < 3 {
        return Err(Error::InvalidParameter { name: "n_frames", reason: "jackknife needs at least 3 frames".into() });
    }
    let cols: Vec<usize> = (0..stack.cols).filter(|&c| stack.index(row, c) != s).collect();
    let xs: Vec<f64> = cols.iter().map(|&c| to_x(c)).collect();
    // Group frames by their (n_s, row) content; every statistic is a sum over groups.
    let mut groups: BTreeMap<(u16, Vec<u16>), u64> = BTreeMap::new();
    for k in 0..stack.n_frames {
        let f = stack.frame(k);
        let key = (f[s], cols.iter().map(|&c| f[stack.index(row, c)]).collect());
        *groups.entry(key).or_insert(0) += 1;
    }
    let m = cols.len();
    let (mut ss, mut sj, mut ssj) = (0u64, vec![0u64; m], vec![0u64; m]);
    for ((a, row_counts), &w) in &groups {
        ss += *a as u64 * w;
        for (t, &b) in row_counts.iter().enumerate() {
            sj[t] += b as u64 * w;
            ssj[t] += *a as u64 * b as u64 * w;
        }
    }
    let cov = |n: f64, ss: u64, sj: &[u64], ssj: &[u64]| -> Vec<f64> {
        (0..m).map(|t| ssj[t] as f64 / n - (ss as f64 / n) * (sj[t] as f64 / n)).collect()
    };
    let n = stack.n_frames as f64;
    let full = fit_gaussian(&Scan1D::new(xs.clone(), cov(n, ss, &sj, &ssj))?)?;
    let keys: Vec<(&(u16, Vec<u16>), &u64)> = groups.iter().collect();
    let loo: Vec<(f64, u64)> = keys
        .par_iter()
        .map(|((a, row_counts), &w)| {
            let a = *a as u64;
            let sj_k: Vec<u64> = sj.iter().zip(row_counts).map(|(s, &b)| s - b as u64).collect();
            let ssj_k: Vec<u64> = ssj.iter().zip(row_counts).map(|(s, &b)| s - a * b as u64).collect();
            let fit = fit_gaussian(&Scan1D::new(xs.clone(), cov(n - 1.0, ss - a, &sj_k, &ssj_k))?)?;
            Ok((fit.fwhm, w))
        })
        .collect::<Result<_>>()?;
    let mean = loo.iter().map(|(f, w)| f * *w as f64).sum::<f64>() / n;
    let var = loo.iter().map(|(f, w)| *w as f64 * (f - mean).powi(2)).sum::<f64>() * (n - 1.0) / n;
    Ok(FwhmEstimate { fit: full, fwhm: full.fwhm, stderr: var.sqrt() })
}
