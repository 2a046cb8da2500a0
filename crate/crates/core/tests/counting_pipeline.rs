use gsm_biphoton::analysis::fit_gaussian;
use gsm_biphoton::counting::{conditional_fwhm, conditional_map, synth_frames, ModelJoint, SensorGeometry, SynthConfig};
use gsm_biphoton::profiles::{conditional_scan, overlap_points, ConditionalSpec};
use gsm_biphoton::pump::PumpParams;
use gsm_biphoton::scan::Scan1D;
use gsm_biphoton::spdc::{CrystalParams, MomentumPoint};

const LP: f64 = 405e-9;
const COLS: usize = 101;

struct Setup {
    pump: PumpParams,
    crystal: CrystalParams,
    sensor: SensorGeometry,
    s: usize,
    row: usize,
    col: usize,
}

fn setup(a: f64) -> Setup {
    let pump = PumpParams::from_coherence(LP, 0.05e-3, a).unwrap();
    let r = 0.5 * pump.k_p() * 0.05;
    let crystal = CrystalParams::type_ii(2e-3, 0.05, 0.0, 0.0, 0.6 * r);
    let f = 0.2;
    let sensor = SensorGeometry {
        rows: 3,
        cols: COLS,
        pixel_pitch: 8000.0 * f / pump.k_s(),
        focal_length: f,
        k_s: pump.k_s(),
        row_binning: 8,
        center: MomentumPoint::default(),
    };
    let [ov, _] = overlap_points(&pump, &crystal).unwrap();
    let s = sensor.pixel_of(ov).unwrap();
    Setup { pump, crystal, sensor, s, row: s / COLS, col: s % COLS }
}

fn stack(st: &Setup, n_frames: usize, seed: u64) -> gsm_biphoton::counting::FrameStack {
    let cfg = SynthConfig {
        rows: st.sensor.rows,
        cols: COLS,
        pairs_per_frame: 180.0,
        dark_probability: 1e-3,
        n_frames,
        seed,
        pixel_pitch: st.sensor.pixel_pitch,
        exposure: 0.02,
    };
    synth_frames(&ModelJoint::new(&st.pump, &st.crystal, st.sensor).unwrap(), &cfg).unwrap()
}

fn direct(st: &Setup) -> Scan1D {
    let xs: Vec<f64> = (0..COLS).filter(|&c| c != st.col).map(|c| st.sensor.pixel_center(st.row, c).qx).collect();
    let spec = ConditionalSpec {
        p_s: st.sensor.pixel_center(st.row, st.col),
        p_iy: st.sensor.pixel_center(st.row, 0).qy,
        xs,
        pixel: Some((st.sensor.dq(), st.sensor.dq_row())),
    };
    conditional_scan(&st.pump, &st.crystal, &spec, false).unwrap()
}

fn unit_sum(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

#[test]
fn c_scan_converges_to_generating_conditional() {
    let st = setup(0.6);
    let target = unit_sum(&direct(&st).values);
    let mut last = f64::INFINITY;
    for n in [2_000, 8_000, 32_000] {
        let c = conditional_map(&stack(&st, n, 5), st.s, st.row).unwrap();
        let got = unit_sum(&c.values);
        let l1: f64 = got.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < last, "n = {n}: L1 {l1} did not drop below {last}");
        last = l1;
    }
}

#[test]
fn c_scan_peaks_at_conjugate_pixel() {
    let st = setup(0.9);
    let c = conditional_map(&stack(&st, 2_000, 8), st.s, st.row).unwrap();
    let d = direct(&st);
    let argmax = |s: &Scan1D| s.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!((c.xs[argmax(&c)] - c.xs[argmax(&d)]).abs() <= 1.0);
}

#[test]
fn counting_fwhm_tracks_direct_model() {
    let mut last = 0.0;
    for a in [0.9, 0.6, 0.4] {
        let st = setup(a);
        let est = conditional_fwhm(&stack(&st, 2_000, 42), st.s, st.row, |c| st.sensor.pixel_center(st.row, c).qx).unwrap();
        let reference = fit_gaussian(&direct(&st)).unwrap().fwhm;
        assert!((est.fwhm - reference).abs() < 3.0 * est.stderr, "A={a}: {} ± {} vs {reference}", est.fwhm, est.stderr);
        assert!(est.fwhm > last);
        last = est.fwhm;
    }
}
