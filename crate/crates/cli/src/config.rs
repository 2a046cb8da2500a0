//! TOML experiment configuration and its resolution into library parameters.
//!
//! Every key is optional at parse time; resolution fills defaults and records
//! each one it applied so the run manifest shows the full parameter set.

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gsm_biphoton::counting::SensorGeometry;
use gsm_biphoton::interference::{Detection, FringeOptions, IdlerTreatment, QuadratureOrder, SlitGeometry, DEFAULT_Z, DEFAULT_Z1};
use gsm_biphoton::profiles::{Backend, Which};
use gsm_biphoton::pump::{coherence_from, PumpParams};
use gsm_biphoton::spdc::{CrystalParams, PhaseMatchingType, DEFAULT_ALPHA};

use crate::error::CliError;
use crate::Experiment;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub pump: Option<RawPump>,
    pub characterization: Option<RawCharacterization>,
    pub crystal: Option<RawCrystal>,
    pub slits: Option<RawSlits>,
    pub grid: Option<RawGrid>,
    pub counting: Option<RawCounting>,
    pub output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPump {
    pub lambda_p: Option<f64>,
    pub w0: Option<f64>,
    pub l_c: Option<Vec<f64>>,
    pub coherence: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCharacterization {
    pub f: Option<f64>,
    pub d12: Option<Vec<f64>>,
    pub a_s: Option<Vec<f64>>,
    pub a_s_range: Option<[f64; 2]>,
    pub samples: Option<usize>,
    pub demag: Option<f64>,
    pub w_l2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCrystal {
    pub length: Option<f64>,
    pub kind: Option<String>,
    pub alpha: Option<f64>,
    pub theta_nc: Option<f64>,
    pub rho_p: Option<f64>,
    pub rho_i: Option<f64>,
    pub ring_offset: Option<f64>,
    pub use_sinc: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSlits {
    pub a: Option<f64>,
    pub d: Option<Vec<f64>>,
    pub z: Option<f64>,
    pub z1: Option<f64>,
    pub idler: Option<String>,
    pub detection: Option<String>,
    pub panels: Option<usize>,
    pub points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub fringe_half_width: Option<f64>,
    pub fringe_samples: Option<usize>,
    pub profile_half_extent: Option<f64>,
    pub profile_samples: Option<usize>,
    pub profile_which: Option<String>,
    pub profile_backend: Option<String>,
    pub mc_strata: Option<usize>,
    pub mc_per_stratum: Option<usize>,
    pub conditional_half_width: Option<f64>,
    pub conditional_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCounting {
    pub n_frames: Option<usize>,
    pub pairs_per_frame: Option<f64>,
    pub dark_probability: Option<f64>,
    pub seed: Option<u64>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub row_binning: Option<usize>,
    pub pixel_pitch: Option<f64>,
    pub focal_length: Option<f64>,
    pub exposure: Option<f64>,
    pub stack_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub directory: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Characterization {
    pub f: f64,
    pub d12: Vec<f64>,
    pub a_s: Vec<f64>,
    pub demag: f64,
    pub w_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Slits {
    pub a: f64,
    pub d: Vec<f64>,
    pub z: f64,
    pub z1: f64,
    pub options: FringeOptions,
}

impl Slits {
    pub fn geometry(&self, d: f64) -> SlitGeometry {
        SlitGeometry { a: self.a, d, z: self.z, z1: self.z1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    pub fringe_half_width: Option<f64>,
    pub fringe_samples: usize,
    pub profile_half_extent: f64,
    pub profile_samples: usize,
    pub profile_which: Which,
    pub profile_backend: Backend,
    pub conditional_half_width: f64,
    pub conditional_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Counting {
    pub n_frames: usize,
    pub pairs_per_frame: f64,
    pub dark_probability: f64,
    pub exposure: f64,
    pub sensor: SensorGeometry,
    pub stack_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Output {
    /// Left out of the manifest so identical runs give identical manifests.
    #[serde(skip)]
    pub directory: PathBuf,
    pub csv: bool,
    pub images: bool,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub experiment: Experiment,
    pub seed: u64,
    pub pumps: Vec<PumpParams>,
    pub characterization: Option<Characterization>,
    pub crystal: Option<CrystalParams>,
    pub use_sinc: bool,
    pub slits: Option<Slits>,
    pub grid: Option<Grid>,
    pub counting: Option<Counting>,
    pub output: Output,
    pub defaults_applied: Vec<String>,
}

struct Defaults(Vec<String>);

impl Defaults {
    fn or<T: Debug>(&mut self, key: &str, value: Option<T>, default: T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(format!("{key} = {default:?}"));
            default
        })
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn require<T>(block: Option<T>, name: &str, exp: Experiment) -> Result<T, CliError> {
    block.ok_or_else(|| cfg_err(format!("experiment `{}` needs a [{name}] block", exp.name())))
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!("{key} must be positive and finite, got {v}")))
    }
}

fn non_empty(key: &str, v: Vec<f64>) -> Result<Vec<f64>, CliError> {
    if v.is_empty() {
        return Err(cfg_err(format!("{key} must list at least one value")));
    }
    for &x in &v {
        positive(key, x)?;
    }
    Ok(v)
}

pub fn load(path: &Path) -> Result<(RawConfig, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| cfg_err("config is not valid UTF-8"))?;
    let raw: RawConfig = toml::from_str(text).map_err(|e| cfg_err(format!("config parse error: {e}")))?;
    Ok((raw, bytes))
}

/// `out_override` is the `--out` flag or its environment fallback.
pub fn resolve(
    raw: RawConfig,
    experiment: Experiment,
    out_override: Option<PathBuf>,
    seed_override: Option<u64>,
) -> Result<Resolved, CliError> {
    use Experiment::*;
    let mut d = Defaults(Vec::new());

    let pump_raw = require(raw.pump, "pump", experiment)?;
    let lambda_p = positive("pump.lambda_p", d.or("pump.lambda_p", pump_raw.lambda_p, 405e-9))?;
    let w0 = positive("pump.w0", d.or("pump.w0", pump_raw.w0, 0.5e-3))?;

    let needs_coherence = !matches!(experiment, PumpVisibility | PumpInvariance);
    let pumps = match (pump_raw.l_c, pump_raw.coherence) {
        (Some(_), Some(_)) => return Err(cfg_err("give either pump.l_c or pump.coherence, not both")),
        (Some(l), None) => non_empty("pump.l_c", l)?
            .into_iter()
            .map(|l_c| PumpParams::new(lambda_p, w0, l_c))
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(a)) => {
            let a = non_empty("pump.coherence", a)?;
            if let Some(bad) = a.iter().find(|&&x| x >= 1.0) {
                return Err(cfg_err(format!("pump.coherence values must lie in (0, 1), got {bad}")));
            }
            a.into_iter().map(|a| PumpParams::from_coherence(lambda_p, w0, a)).collect::<Result<Vec<_>, _>>()?
        }
        (None, None) if needs_coherence => {
            return Err(cfg_err("the [pump] block needs a coherence list (`coherence` or `l_c`)"))
        }
        (None, None) => {
            d.0.push("pump.l_c = coherent limit (not used by this experiment)".to_string());
            vec![PumpParams::coherent(lambda_p, w0)?]
        }
    };

    let characterization = if matches!(experiment, PumpVisibility | PumpInvariance) {
        let c = require(raw.characterization, "characterization", experiment)?;
        let f = positive("characterization.f", d.or("characterization.f", c.f, 0.150))?;
        let a_s = match (c.a_s, c.a_s_range) {
            (Some(_), Some(_)) => return Err(cfg_err("give either characterization.a_s or a_s_range, not both")),
            (Some(v), None) => non_empty("characterization.a_s", v)?,
            (None, Some([lo, hi])) => {
                let n = d.or("characterization.samples", c.samples, 101);
                if !(lo > 0.0 && hi > lo) || n < 2 {
                    return Err(cfg_err("characterization.a_s_range needs 0 < lo < hi and samples >= 2"));
                }
                (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
            }
            (None, None) => return Err(cfg_err("[characterization] needs a_s or a_s_range")),
        };
        let d12 = if experiment == PumpVisibility {
            match c.d12 {
                Some(v) if !v.is_empty() && v.iter().all(|&x| x >= 0.0 && x.is_finite()) => v,
                _ => return Err(cfg_err("characterization.d12 must list non-negative separations")),
            }
        } else {
            c.d12.unwrap_or_default()
        };
        let demag = positive("characterization.demag", d.or("characterization.demag", c.demag, 8.0))?;
        let w_l2 = positive("characterization.w_l2", d.or("characterization.w_l2", c.w_l2, w0 * demag))?;
        Some(Characterization { f, d12, a_s, demag, w_l2 })
    } else {
        None
    };

    let needs_crystal = !matches!(experiment, PumpVisibility | PumpInvariance);
    let (crystal, use_sinc) = if needs_crystal {
        let c = require(raw.crystal, "crystal", experiment)?;
        let kind = match d.or("crystal.kind", c.kind, "type-I".to_string()).as_str() {
            "type-I" | "I" => PhaseMatchingType::TypeI,
            "type-II" | "II" => PhaseMatchingType::TypeII,
            other => return Err(cfg_err(format!("crystal.kind must be `type-I` or `type-II`, got `{other}`"))),
        };
        let theta_nc = d.or("crystal.theta_nc", c.theta_nc, 0.05);
        let k_s = std::f64::consts::PI * 2.0 / (2.0 * lambda_p);
        let ring_offset = match kind {
            PhaseMatchingType::TypeI => d.or("crystal.ring_offset", c.ring_offset, 0.0),
            PhaseMatchingType::TypeII => d.or("crystal.ring_offset", c.ring_offset, 0.6 * k_s * theta_nc),
        };
        let crystal = CrystalParams {
            length: d.or("crystal.length", c.length, 2e-3),
            kind,
            alpha: d.or("crystal.alpha", c.alpha, DEFAULT_ALPHA),
            theta_nc,
            rho_p: d.or("crystal.rho_p", c.rho_p, 0.0),
            rho_i: d.or("crystal.rho_i", c.rho_i, 0.0),
            ring_offset,
        };
        crystal.validate()?;
        (Some(crystal), d.or("crystal.use_sinc", c.use_sinc, false))
    } else {
        (None, false)
    };

    let slits = if matches!(experiment, Fringes | VisibilityCurve) {
        let s = require(raw.slits, "slits", experiment)?;
        let a = positive("slits.a", d.or("slits.a", s.a, 0.15e-3))?;
        let ds = non_empty("slits.d", d.or("slits.d", s.d, vec![0.25e-3, 0.5e-3, 0.75e-3]))?;
        let z = d.or("slits.z", s.z, DEFAULT_Z);
        let z1 = d.or("slits.z1", s.z1, DEFAULT_Z1);
        for &dd in &ds {
            SlitGeometry::new(a, dd, z, z1)?;
        }
        let idler = match d.or("slits.idler", s.idler, "far-field".to_string()).as_str() {
            "far-field" => IdlerTreatment::FarFieldMode { q_i: 0.0 },
            "traced" => IdlerTreatment::Traced,
            other => return Err(cfg_err(format!("slits.idler must be `far-field` or `traced`, got `{other}`"))),
        };
        let detection = match d.or("slits.detection", s.detection, "focal-plane".to_string()).as_str() {
            "focal-plane" => Detection::FocalPlane,
            "fresnel" => Detection::Fresnel,
            other => return Err(cfg_err(format!("slits.detection must be `focal-plane` or `fresnel`, got `{other}`"))),
        };
        let def = QuadratureOrder::default();
        let order = QuadratureOrder {
            panels: d.or("slits.panels", s.panels, def.panels),
            points: d.or("slits.points", s.points, def.points),
        };
        if order.panels == 0 || order.points == 0 {
            return Err(cfg_err("slits.panels and slits.points must be positive"));
        }
        Some(Slits { a, d: ds, z, z1, options: FringeOptions { idler, order, detection } })
    } else {
        None
    };

    let seed_cfg = raw.counting.as_ref().and_then(|c| c.seed);
    let seed = match (seed_override, seed_cfg) {
        (Some(s), _) => s,
        (None, Some(s)) => s,
        (None, None) => d.or("seed", None, 1u64),
    };

    let grid = if matches!(experiment, Fringes | VisibilityCurve | Profile | Conditional) {
        let g = raw.grid.unwrap_or_default();
        let crystal = crystal.expect("crystal resolved for these experiments");
        let k_p = pumps[0].k_p();
        let ring = crystal.ring_radius(k_p);
        let reach = ring + crystal.ring_offset;
        let profile_default = if reach > 0.0 { 1.3 * reach } else { 3e5 };
        let sigma_max = pumps
            .iter()
            .map(|p| gsm_biphoton::pump::csd_coefficients(p).map(|c| c.diagonal_sigma()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let backend = match d.or("grid.profile_backend", g.profile_backend, "adaptive".to_string()).as_str() {
            "adaptive" => Backend::Adaptive { rel_tol: 1e-7 },
            "monte-carlo" => Backend::MonteCarlo {
                strata: d.or("grid.mc_strata", g.mc_strata, 16),
                per_stratum: d.or("grid.mc_per_stratum", g.mc_per_stratum, 4),
                seed,
            },
            other => return Err(cfg_err(format!("grid.profile_backend must be `adaptive` or `monte-carlo`, got `{other}`"))),
        };
        let which = match d.or("grid.profile_which", g.profile_which, "both".to_string()).as_str() {
            "signal" => Which::Signal,
            "idler" => Which::Idler,
            "both" => Which::Both,
            other => return Err(cfg_err(format!("grid.profile_which must be signal, idler or both, got `{other}`"))),
        };
        let grid = Grid {
            fringe_half_width: g.fringe_half_width,
            fringe_samples: d.or("grid.fringe_samples", g.fringe_samples, 801),
            profile_half_extent: positive(
                "grid.profile_half_extent",
                d.or("grid.profile_half_extent", g.profile_half_extent, profile_default),
            )?,
            profile_samples: d.or("grid.profile_samples", g.profile_samples, 256),
            profile_which: which,
            profile_backend: backend,
            conditional_half_width: positive(
                "grid.conditional_half_width",
                d.or("grid.conditional_half_width", g.conditional_half_width, 8.0 * sigma_max),
            )?,
            conditional_samples: d.or("grid.conditional_samples", g.conditional_samples, 301),
        };
        if grid.profile_samples < 2 || grid.conditional_samples < 5 || grid.fringe_samples < 3 {
            return Err(cfg_err("grid sample counts are too small"));
        }
        if g.fringe_half_width.is_none() && matches!(experiment, Fringes) {
            d.0.push("grid.fringe_half_width = per-geometry default".to_string());
        }
        if let Some(h) = grid.fringe_half_width {
            positive("grid.fringe_half_width", h)?;
        }
        if experiment == Profile && grid.profile_half_extent < ring {
            return Err(cfg_err(format!("grid.profile_half_extent must cover the ring radius {ring:.4e} rad/m")));
        }
        Some(grid)
    } else {
        None
    };

    let counting = if matches!(experiment, FramesSynth | Coincidence) {
        let c = require(raw.counting, "counting", experiment)?;
        let k_s = pumps[0].k_s();
        let sensor = SensorGeometry {
            rows: d.or("counting.rows", c.rows, 3),
            cols: d.or("counting.cols", c.cols, 101),
            pixel_pitch: positive("counting.pixel_pitch", d.or("counting.pixel_pitch", c.pixel_pitch, 2.0e-4))?,
            focal_length: positive("counting.focal_length", d.or("counting.focal_length", c.focal_length, 0.2))?,
            k_s,
            row_binning: d.or("counting.row_binning", c.row_binning, 8),
            center: Default::default(),
        };
        sensor.validate()?;
        let n_frames = d.or("counting.n_frames", c.n_frames, 2000);
        if n_frames < 3 {
            return Err(cfg_err("counting.n_frames must be at least 3"));
        }
        let pairs_per_frame = d.or("counting.pairs_per_frame", c.pairs_per_frame, 180.0);
        let dark_probability = d.or("counting.dark_probability", c.dark_probability, 1e-3);
        if !(pairs_per_frame >= 0.0 && pairs_per_frame.is_finite()) || !(0.0..=1.0).contains(&dark_probability) {
            return Err(cfg_err("counting rates must be non-negative (dark probability at most 1)"));
        }
        Some(Counting {
            n_frames,
            pairs_per_frame,
            dark_probability,
            exposure: positive("counting.exposure", d.or("counting.exposure", c.exposure, 0.020))?,
            sensor,
            stack_dir: c.stack_dir,
        })
    } else {
        None
    };

    let out_raw = raw.output.unwrap_or_default();
    let directory = match (out_override, out_raw.directory) {
        (Some(p), _) => p,
        (None, Some(p)) => p,
        (None, None) => d.or("output.directory", None, PathBuf::from("out")),
    };
    let formats = d.or("output.formats", out_raw.formats, vec!["csv".to_string(), "pgm".to_string()]);
    if let Some(bad) = formats.iter().find(|f| !matches!(f.as_str(), "csv" | "pgm")) {
        return Err(cfg_err(format!("unknown output format `{bad}` (expected csv or pgm)")));
    }
    let output = Output { directory, csv: formats.iter().any(|f| f == "csv"), images: formats.iter().any(|f| f == "pgm") };

    // Surface coherence for every pump so manifests show it next to l_c.
    for p in &pumps {
        coherence_from(p)?;
    }

    Ok(Resolved {
        experiment,
        seed,
        pumps,
        characterization,
        crystal,
        use_sinc,
        slits,
        grid,
        counting,
        output,
        defaults_applied: d.0,
    })
}
