//! One function per experiment; each returns its artifacts without touching disk.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;

use gsm_biphoton::analysis::{fit_gaussian, fit_visibility};
use gsm_biphoton::counting::{
    conditional_fwhm, conditional_map, synth_frames, FrameStack, ModelJoint, SensorGeometry, SynthConfig,
};
use gsm_biphoton::interference::{fit_window, fringe_profile_with, visibility_curve, FringeGrid};
use gsm_biphoton::profiles::{conditional_scan, overlap_points, singles_profile, ConditionalSpec, ProfileGrid, ProfileOptions};
use gsm_biphoton::pump::{bessel_visibility, correlation_length, propagate_to_crystal, PumpParams};
use gsm_biphoton::spdc::CrystalParams;

use crate::config::{Counting, Resolved};
use crate::error::CliError;
use crate::output::{json, pgm, sha256_hex, Artifact, Cell, Csv, FileRecord};
use crate::Experiment;

/// Artifacts plus any input files the run consumed.
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub inputs: Vec<FileRecord>,
}

impl From<Vec<Artifact>> for RunOutput {
    fn from(artifacts: Vec<Artifact>) -> Self {
        RunOutput { artifacts, inputs: Vec::new() }
    }
}

pub fn run(r: &Resolved) -> Result<RunOutput, CliError> {
    let mut out = match r.experiment {
        Experiment::PumpVisibility => pump_visibility(r)?.into(),
        Experiment::PumpInvariance => pump_invariance(r)?.into(),
        Experiment::Fringes => fringes(r)?.into(),
        Experiment::VisibilityCurve => visibility(r)?.into(),
        Experiment::Profile => profile(r)?.into(),
        Experiment::Conditional => conditional(r)?.into(),
        Experiment::FramesSynth => frames_synth(r)?.into(),
        Experiment::Coincidence => coincidence(r)?,
    };
    // Format selection only filters what is written; everything is computed.
    out.artifacts.retain(|a| {
        let csv = a.name.ends_with(".csv");
        let image = a.name.ends_with(".pgm") || (a.name.starts_with("profile_") && a.name.ends_with(".json"));
        (!csv || r.output.csv) && (!image || r.output.images)
    });
    Ok(out)
}

fn crystal(r: &Resolved) -> CrystalParams {
    r.crystal.expect("crystal resolved")
}

fn lambda_s(p: &PumpParams) -> f64 {
    2.0 * PI / p.k_s()
}

fn pump_visibility(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let c = r.characterization.as_ref().expect("characterization resolved");
    let k_p = r.pumps[0].k_p();
    let mut csv = Csv::new(&["d12_m", "a_s_m", "nu", "visibility"]);
    for &d12 in &c.d12 {
        for &a_s in &c.a_s {
            let nu = k_p * d12 * a_s / c.f;
            csv.row(&[Cell::F(d12), Cell::F(a_s), Cell::F(nu), Cell::F(bessel_visibility(nu))]);
        }
    }
    Ok(vec![csv.into_artifact("pump_visibility.csv")])
}

fn pump_invariance(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let c = r.characterization.as_ref().expect("characterization resolved");
    let lp = r.pumps[0].lambda_p;
    let mut csv = Csv::new(&["a_s_m", "l_c_l2_m", "w0_m", "l_c_m", "delta_m", "coherence"]);
    for &a_s in &c.a_s {
        let l2 = correlation_length(a_s, c.f, lp)?;
        let p = propagate_to_crystal(l2, c.w_l2, c.demag, lp)?;
        let delta = gsm_biphoton::pump::coherence_from(&p)?.delta;
        csv.row(&[
            Cell::F(a_s),
            Cell::F(l2),
            Cell::F(p.w0),
            Cell::F(p.l_c),
            Cell::F(delta),
            Cell::F(p.degree_of_coherence()),
        ]);
    }
    Ok(vec![csv.into_artifact("pump_invariance.csv")])
}

fn fringes(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let s = r.slits.as_ref().expect("slits resolved");
    let g = r.grid.as_ref().expect("grid resolved");
    let crystal = crystal(r);
    let mut scan = Csv::new(&["coherence", "l_c_m", "d_m", "x_m", "intensity"]);
    let mut summary = Csv::new(&[
        "coherence",
        "l_c_m",
        "d_m",
        "visibility",
        "raw_visibility",
        "fringe_period_m",
        "convergence_delta",
    ]);
    for pump in &r.pumps {
        let ls = lambda_s(pump);
        for &d in &s.d {
            let slits = s.geometry(d);
            let mut grid = FringeGrid::default_for(&slits, ls);
            grid.samples = g.fringe_samples;
            if let Some(h) = g.fringe_half_width {
                grid.half_width = h;
            }
            let prof = fringe_profile_with(pump, &crystal, &slits, &grid, s.options)?;
            let a = pump.degree_of_coherence();
            for (&x, &v) in prof.scan.xs.iter().zip(&prof.scan.values) {
                scan.row(&[Cell::F(a), Cell::F(pump.l_c), Cell::F(d), Cell::F(x), Cell::F(v)]);
            }
            let fit = fit_visibility(&fit_window(&prof.scan, &slits, ls))?;
            summary.row(&[
                Cell::F(a),
                Cell::F(pump.l_c),
                Cell::F(d),
                Cell::F(fit.visibility),
                Cell::F(fit.raw_visibility),
                Cell::F(fit.fringe_period),
                Cell::F(prof.meta.convergence_delta),
            ]);
        }
    }
    Ok(vec![scan.into_artifact("fringes.csv"), summary.into_artifact("fringes_summary.csv")])
}

fn visibility(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let s = r.slits.as_ref().expect("slits resolved");
    let points = visibility_curve(&r.pumps, &s.d, s.a, s.z, s.z1, &crystal(r), s.options)?;
    let mut csv = Csv::new(&["coherence", "d_m", "visibility"]);
    for p in points {
        csv.row(&[Cell::F(p.degree_of_coherence), Cell::F(p.d), Cell::F(p.visibility)]);
    }
    Ok(vec![csv.into_artifact("visibility_curve.csv")])
}

#[derive(Serialize)]
struct ImageSidecar<'a> {
    image: &'a str,
    width: usize,
    height: usize,
    maxval: u16,
    byte_order: &'static str,
    orientation: &'static str,
    units: &'static str,
    x0: f64,
    y0: f64,
    pitch_x: f64,
    pitch_y: f64,
    coherence: f64,
    meta: &'a gsm_biphoton::profiles::ProfileMeta,
}

fn profile(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let g = r.grid.as_ref().expect("grid resolved");
    let crystal = crystal(r);
    let grid = ProfileGrid { half_extent: g.profile_half_extent, samples: g.profile_samples };
    let options = ProfileOptions { backend: g.profile_backend, use_sinc: r.use_sinc };
    let mut out = Vec::new();
    let mut summary = Csv::new(&["index", "coherence", "l_c_m", "image", "samples", "pitch_rad_per_m", "norm"]);
    for (k, pump) in r.pumps.iter().enumerate() {
        let prof = singles_profile(pump, &crystal, g.profile_which, &grid, options)?;
        let name = format!("profile_{k:02}.pgm");
        let p = &prof.profile;
        let sidecar = ImageSidecar {
            image: &name,
            width: p.cols,
            height: p.rows,
            maxval: 65535,
            byte_order: "big-endian",
            orientation: "first image row is the largest q_y; first column is the smallest q_x",
            units: "rad/m",
            x0: p.x0,
            y0: p.y0,
            pitch_x: p.pitch_x,
            pitch_y: p.pitch_y,
            coherence: pump.degree_of_coherence(),
            meta: &prof.meta,
        };
        out.push(Artifact { name: format!("profile_{k:02}.json"), bytes: json(&sidecar) });
        out.push(Artifact { name: name.clone(), bytes: pgm(p) });
        summary.row(&[
            Cell::U(k as u64),
            Cell::F(pump.degree_of_coherence()),
            Cell::F(pump.l_c),
            Cell::S(name),
            Cell::U(grid.samples as u64),
            Cell::F(grid.pitch()),
            Cell::F(prof.meta.norm),
        ]);
    }
    out.push(summary.into_artifact("profile.csv"));
    Ok(out)
}

fn conditional(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let g = r.grid.as_ref().expect("grid resolved");
    let crystal = crystal(r);
    let mut scan = Csv::new(&["coherence", "l_c_m", "p_ix_rad_per_m", "density_m_per_rad"]);
    let mut summary = Csv::new(&["coherence", "l_c_m", "p_sx_rad_per_m", "fwhm_rad_per_m", "peak_p_ix_rad_per_m"]);
    for pump in &r.pumps {
        let [ps, pi] = overlap_points(pump, &crystal)?;
        let n = g.conditional_samples;
        let h = g.conditional_half_width;
        let xs: Vec<f64> = (0..n).map(|k| pi.qx - h + 2.0 * h * k as f64 / (n - 1) as f64).collect();
        let spec = ConditionalSpec { p_s: ps, p_iy: pi.qy, xs, pixel: None };
        let s = conditional_scan(pump, &crystal, &spec, r.use_sinc)?;
        let fit = fit_gaussian(&s)?;
        let a = pump.degree_of_coherence();
        for (&x, &v) in s.xs.iter().zip(&s.values) {
            scan.row(&[Cell::F(a), Cell::F(pump.l_c), Cell::F(x), Cell::F(v)]);
        }
        summary.row(&[Cell::F(a), Cell::F(pump.l_c), Cell::F(ps.qx), Cell::F(fit.fwhm), Cell::F(fit.mean)]);
    }
    Ok(vec![scan.into_artifact("conditional.csv"), summary.into_artifact("conditional_summary.csv")])
}

/// Signal pixel at the +x ring crossing, and its sensor row/column.
fn signal_pixel(pump: &PumpParams, crystal: &CrystalParams, sensor: &SensorGeometry) -> Result<(usize, usize, usize), CliError> {
    let [ov, _] = overlap_points(pump, crystal)?;
    let s = sensor.pixel_of(ov).ok_or_else(|| {
        CliError::Config(format!("ring crossing at q_x = {:.4e} rad/m falls outside the sensor", ov.qx))
    })?;
    Ok((s, s / sensor.cols, s % sensor.cols))
}

fn sensor_for(c: &Counting, pump: &PumpParams) -> SensorGeometry {
    SensorGeometry { k_s: pump.k_s(), ..c.sensor }
}

pub fn stack_name(k: usize) -> String {
    format!("frames_{k:02}.gsmf")
}

fn frames_synth(r: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let c = r.counting.as_ref().expect("counting resolved");
    let crystal = crystal(r);
    let mut out = Vec::new();
    let mut summary = Csv::new(&["index", "coherence", "l_c_m", "file", "n_frames", "seed", "rows", "cols", "total_counts"]);
    for (k, pump) in r.pumps.iter().enumerate() {
        let sensor = sensor_for(c, pump);
        signal_pixel(pump, &crystal, &sensor)?;
        let seed = r.seed.wrapping_add(k as u64);
        let cfg = SynthConfig {
            rows: sensor.rows,
            cols: sensor.cols,
            pairs_per_frame: c.pairs_per_frame,
            dark_probability: c.dark_probability,
            n_frames: c.n_frames,
            seed,
            pixel_pitch: sensor.pixel_pitch,
            exposure: c.exposure,
        };
        let stack = synth_frames(&ModelJoint::new(pump, &crystal, sensor)?, &cfg)?;
        let mut bytes = Vec::new();
        stack.write_to(&mut bytes)?;
        let total: u64 = stack.counts.iter().map(|&v| v as u64).sum();
        summary.row(&[
            Cell::U(k as u64),
            Cell::F(pump.degree_of_coherence()),
            Cell::F(pump.l_c),
            Cell::S(stack_name(k)),
            Cell::U(c.n_frames as u64),
            Cell::U(seed),
            Cell::U(sensor.rows as u64),
            Cell::U(sensor.cols as u64),
            Cell::U(total),
        ]);
        out.push(Artifact { name: stack_name(k), bytes });
    }
    out.push(summary.into_artifact("frames.csv"));
    Ok(out)
}

fn read_stack(path: &Path) -> Result<(FrameStack, FileRecord), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let stack = FrameStack::read_from(bytes.as_slice())?;
    let rec = FileRecord { file: path.display().to_string(), bytes: bytes.len(), sha256: sha256_hex(&bytes) };
    Ok((stack, rec))
}

fn coincidence(r: &Resolved) -> Result<RunOutput, CliError> {
    let c = r.counting.as_ref().expect("counting resolved");
    let crystal = crystal(r);
    let dir: PathBuf = c.stack_dir.clone().unwrap_or_else(|| r.output.directory.clone());
    let mut map = Csv::new(&["coherence", "column", "p_ix_rad_per_m", "c_counts2", "stderr_counts2"]);
    let mut summary = Csv::new(&[
        "coherence",
        "l_c_m",
        "fwhm_rad_per_m",
        "fwhm_stderr_rad_per_m",
        "direct_fwhm_rad_per_m",
        "z_score",
    ]);
    let mut inputs = Vec::new();
    for (k, pump) in r.pumps.iter().enumerate() {
        let sensor = sensor_for(c, pump);
        let (s, row, col) = signal_pixel(pump, &crystal, &sensor)?;
        let (stack, rec) = read_stack(&dir.join(stack_name(k)))?;
        if stack.rows != sensor.rows || stack.cols != sensor.cols {
            return Err(CliError::Config(format!(
                "{} is {}x{} but the configured sensor is {}x{}",
                rec.file, stack.rows, stack.cols, sensor.rows, sensor.cols
            )));
        }
        inputs.push(rec);
        let to_x = |col: usize| sensor.pixel_center(row, col).qx;
        let cm = conditional_map(&stack, s, row)?;
        let se = cm.stderr.clone().unwrap_or_else(|| vec![f64::NAN; cm.len()]);
        let a = pump.degree_of_coherence();
        for ((&x, &v), &e) in cm.xs.iter().zip(&cm.values).zip(&se) {
            let column = x as usize;
            map.row(&[Cell::F(a), Cell::U(column as u64), Cell::F(to_x(column)), Cell::F(v), Cell::F(e)]);
        }
        let est = conditional_fwhm(&stack, s, row, to_x)?;
        let xs: Vec<f64> = (0..sensor.cols).filter(|&j| j != col).map(to_x).collect();
        let spec = ConditionalSpec {
            p_s: sensor.pixel_center(row, col),
            p_iy: sensor.pixel_center(row, 0).qy,
            xs,
            pixel: Some((sensor.dq(), sensor.dq_row())),
        };
        let direct = fit_gaussian(&conditional_scan(pump, &crystal, &spec, r.use_sinc)?)?.fwhm;
        summary.row(&[
            Cell::F(a),
            Cell::F(pump.l_c),
            Cell::F(est.fwhm),
            Cell::F(est.stderr),
            Cell::F(direct),
            Cell::F((est.fwhm - direct) / est.stderr),
        ]);
    }
    Ok(RunOutput {
        artifacts: vec![map.into_artifact("coincidence.csv"), summary.into_artifact("coincidence_summary.csv")],
        inputs,
    })
}
