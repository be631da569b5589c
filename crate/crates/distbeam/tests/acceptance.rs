//! Acceptance gate: one test per core claim of the simulator, each
//! printing a single `[PASS]`/`[FAIL]` line (visible with
//! `cargo test --test acceptance -- --nocapture`) and enforcing both
//! its metric threshold and its wall-clock budget. Thresholds are
//! pinned as constants here, not derived at run time.

use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use distbeam::beamformer::{
    coherent_gain, constraint_matrix, lcmp_weights, perturb_array, rx_power_metrics,
    simulate_rx_capture, slot_roles, wavenumber, BeamErrorModel,
};
use distbeam::estimation::{matched_filter, sidelobe_metrics, SidelobeMetrics};
use distbeam::localization::localize_array;
use distbeam::pipeline::{
    beam_error_rng, emit_outputs, run_calibration, run_monte_carlo, stage_rng, MonteCarloReport,
    PAIRS,
};
use distbeam::scenario::{
    builtin_scenario, builtin_scenarios, euclidean_range, GroundTruth, Position2D, ScenarioConfig,
    SimMode,
};
use distbeam::sync::{est_clock_offset, est_prop_delay, est_range, run_exchange, MultipathTap};
use distbeam::waveform::{staggered_tx_patterns, synth, WaveformKind};
use distbeam::SPEED_OF_LIGHT_M_S;

// pinned thresholds
const TIMESTAMP_ALGEBRA_TOL_S: f64 = 1e-15;
const RANGE_RMSE_LIMIT_M: f64 = 0.010;
const COORD_RMSE_LIMIT_M: f64 = 0.010;
const EXACT_LOCALIZATION_TOL_M: f64 = 1e-9;
const CONSTRAINT_RESIDUAL_TOL: f64 = 1e-9;
const POSITION_SIGMA_M: f64 = 5e-3;
const SYNC_SIGMA_S: f64 = 5e-12;
const NULL_DEPTH_FLOOR_DB: f64 = 15.0;
const COHERENT_GAIN_FLOOR: f64 = 0.90;
const OUTLIER_THRESHOLD_M: f64 = 0.5;
const OUTLIER_MIN_RATIO: usize = 10;
const FOCUS_SPREAD_LIMIT_DB: f64 = 1.0;

/// Print the verdict line and enforce it.
fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {criterion:02} {name}: {detail}");
    assert!(pass, "criterion {criterion:02} {name}: {detail}");
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

#[test]
fn criterion_01_zero_noise_timestamp_algebra() {
    let t0 = Instant::now();
    let budget_s = 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC01);
    let mut worst_tau = 0.0f64;
    let mut worst_offset = 0.0f64;
    for _ in 0..1000 {
        let mut cfg = builtin_scenario("calibration").unwrap();
        cfg.mode = SimMode::AbstractError;
        cfg.channel.abstract_timestamp_sigma_s = 0.0;
        cfg.nodes[1].true_position = Position2D::new(0.0, rng.gen_range(0.5..3.0));
        cfg.nodes[2].true_position =
            Position2D::new(rng.gen_range(0.2..2.5), rng.gen_range(-1.0..3.0));
        for node in &mut cfg.nodes {
            node.clock.offset_s = rng.gen_range(-1e-6..1e-6);
            node.clock.drift_ppb = 0.0;
            node.clock.timestamp_jitter_s = 0.0;
            node.hardware_delay_s = 0.0;
        }
        for &pair in &PAIRS {
            let q = run_exchange(&cfg, pair, &mut rng).unwrap();
            let tof = euclidean_range(
                cfg.node(pair.0).true_position,
                cfg.node(pair.1).true_position,
            ) / SPEED_OF_LIGHT_M_S;
            let true_offset =
                cfg.node(pair.0).clock.offset_s - cfg.node(pair.1).clock.offset_s;
            worst_tau = worst_tau.max((est_prop_delay(&q) - tof).abs());
            worst_offset = worst_offset.max((est_clock_offset(&q) - true_offset).abs());
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst_tau < TIMESTAMP_ALGEBRA_TOL_S
        && worst_offset < TIMESTAMP_ALGEBRA_TOL_S
        && elapsed.as_secs_f64() < budget_s;
    report(
        1,
        "zero-noise timestamp algebra",
        pass,
        &format!(
            "1000 random scenarios, worst delay error {worst_tau:.2e} s, \
             worst offset error {worst_offset:.2e} s (tol {TIMESTAMP_ALGEBRA_TOL_S:.0e}), \
             {elapsed:.2?} of {budget_s} s"
        ),
    );
}

/// 200 waveform-level trials at the first bench placement, shared by
/// criteria 02 and 03.
static A1_RUN: OnceLock<(MonteCarloReport, f64)> = OnceLock::new();

fn a1_run() -> &'static (MonteCarloReport, f64) {
    A1_RUN.get_or_init(|| {
        let name = "experiment-a-position-1";
        let cfg = builtin_scenario(name).unwrap();
        assert_eq!(cfg.mode, SimMode::WaveformLevel, "builtin default fidelity");
        let t0 = Instant::now();
        let (report, _) = run_monte_carlo(name, &cfg, 200, None).unwrap();
        (report, t0.elapsed().as_secs_f64())
    })
}

fn rmse_of(report: &MonteCarloReport, quantity: &str) -> f64 {
    report
        .localization
        .iter()
        .find(|q| q.quantity == quantity)
        .unwrap_or_else(|| panic!("stats missing {quantity}"))
        .rmse_m
}

#[test]
fn criterion_02_waveform_ranging_rmse() {
    let budget_s = 120.0;
    let (mc, elapsed_s) = a1_run();
    let rmse = [rmse_of(mc, "d1"), rmse_of(mc, "d2"), rmse_of(mc, "d3")];
    let worst = rmse.iter().cloned().fold(0.0, f64::max);
    let pass = worst <= RANGE_RMSE_LIMIT_M && *elapsed_s < budget_s;
    report(
        2,
        "waveform ranging rmse",
        pass,
        &format!(
            "200 trials at 30 dB: rmse d1 {:.2} mm, d2 {:.2} mm, d3 {:.2} mm \
             (limit {:.0} mm), {elapsed_s:.1} s of {budget_s} s",
            rmse[0] * 1e3,
            rmse[1] * 1e3,
            rmse[2] * 1e3,
            RANGE_RMSE_LIMIT_M * 1e3
        ),
    );
}

#[test]
fn criterion_03_waveform_localization_rmse() {
    let budget_s = 120.0;
    let (mc, elapsed_s) = a1_run();
    let rmse = [rmse_of(mc, "y1"), rmse_of(mc, "x2"), rmse_of(mc, "y2")];
    let worst = rmse.iter().cloned().fold(0.0, f64::max);
    let pass = worst < COORD_RMSE_LIMIT_M && *elapsed_s < budget_s;
    report(
        3,
        "waveform localization rmse",
        pass,
        &format!(
            "200 trials at 30 dB: rmse y1 {:.2} mm, x2 {:.2} mm, y2 {:.2} mm \
             (limit {:.0} mm), {elapsed_s:.1} s of {budget_s} s",
            rmse[0] * 1e3,
            rmse[1] * 1e3,
            rmse[2] * 1e3,
            COORD_RMSE_LIMIT_M * 1e3
        ),
    );
}

#[test]
fn criterion_04_exact_ranges_localize_exactly() {
    let t0 = Instant::now();
    let budget_s = 1.0;
    let mut worst = 0.0f64;
    let all = builtin_scenarios();
    for s in &all {
        let truth = GroundTruth::from_config(&s.config);
        let solved = localize_array(&truth.ranges).unwrap();
        for (got, want) in solved.positions.iter().zip(&truth.node_positions) {
            worst = worst.max(euclidean_range(*got, *want));
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst < EXACT_LOCALIZATION_TOL_M && elapsed.as_secs_f64() < budget_s;
    report(
        4,
        "exact ranges localize exactly",
        pass,
        &format!(
            "{} bench layouts, worst position error {worst:.2e} m \
             (tol {EXACT_LOCALIZATION_TOL_M:.0e}), {elapsed:.2?} of {budget_s} s",
            all.len()
        ),
    );
}

#[test]
fn criterion_05_weights_satisfy_constraints() {
    let t0 = Instant::now();
    let budget_s = 1.0;
    let mut worst = 0.0f64;
    let all = builtin_scenarios();
    for s in &all {
        let cfg = &s.config;
        let nodes: Vec<Position2D> = cfg.nodes.iter().map(|n| n.true_position).collect();
        let rx: Vec<Position2D> = cfg.receivers.iter().map(|r| r.true_position).collect();
        let c = constraint_matrix(&nodes, &rx, wavenumber(cfg.carrier_beam_hz));
        let gains: Vec<Complex64> = cfg
            .objective_gains()
            .into_iter()
            .map(|g| Complex64::new(g, 0.0))
            .collect();
        let w = lcmp_weights(&c, &gains).unwrap();
        for (m, g) in gains.iter().enumerate() {
            let response: Complex64 = (0..3).map(|n| w.w[n] * c.entries[(n, m)]).sum();
            worst = worst.max((response - g).norm());
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst < CONSTRAINT_RESIDUAL_TOL && elapsed.as_secs_f64() < budget_s;
    report(
        5,
        "weights satisfy constraints",
        pass,
        &format!(
            "{} layouts, worst constraint residual {worst:.2e} \
             (tol {CONSTRAINT_RESIDUAL_TOL:.0e}), {elapsed:.2?} of {budget_s} s",
            all.len()
        ),
    );
}

/// One beam-error-model trial's worth of metrics.
struct ErrorModelTrial {
    null_depth_db: Option<f64>,
    null_power_db: Option<f64>,
    focus_power_db: f64,
    gain: f64,
}

/// The geometry/sync error model applied directly to a scenario's true
/// layout: perturbed weights fire at the real positions.
fn error_model_trials(cfg: &ScenarioConfig, n_trials: u64) -> Vec<ErrorModelTrial> {
    let truth = [
        cfg.node(0).true_position,
        cfg.node(1).true_position,
        cfg.node(2).true_position,
    ];
    let rx: Vec<Position2D> = cfg.receivers.iter().map(|r| r.true_position).collect();
    let k = wavenumber(cfg.carrier_beam_hz);
    let gains: Vec<Complex64> = cfg
        .objective_gains()
        .into_iter()
        .map(|g| Complex64::new(g, 0.0))
        .collect();
    let model = BeamErrorModel {
        position_sigma_m: POSITION_SIGMA_M,
        sync_sigma_s: SYNC_SIGMA_S,
    };
    let patterns = staggered_tx_patterns();
    let roles = slot_roles(&patterns).unwrap();
    let slot_s = patterns[0].slot_duration_s();
    (0..n_trials)
        .map(|trial| {
            let mut rng = beam_error_rng(cfg.seed, trial);
            let (est, sync) = perturb_array(&truth, &model, &mut rng);
            let c = constraint_matrix(&est, &rx, k);
            let w = lcmp_weights(&c, &gains).unwrap();
            let captures = simulate_rx_capture(cfg, &w, &patterns, &sync).unwrap();
            let m = rx_power_metrics(&captures, &cfg.objectives(), &roles, slot_s).unwrap();
            ErrorModelTrial {
                null_depth_db: m.null_depth_db,
                null_power_db: m.null_power.map(|p| 10.0 * p.max(1e-30).log10()),
                focus_power_db: 10.0 * m.focus_power.max(1e-30).log10(),
                gain: coherent_gain(&captures[0], &roles, slot_s).unwrap(),
            }
        })
        .collect()
}

#[test]
fn criterion_06_null_depth_under_error_model() {
    let t0 = Instant::now();
    let budget_s = 60.0;
    let mut lines = Vec::new();
    let mut pass = true;
    for i in 1..=4 {
        let name = format!("experiment-b-position-{i}");
        let cfg = builtin_scenario(&name).unwrap();
        let mut depths: Vec<f64> = error_model_trials(&cfg, 200)
            .iter()
            .map(|t| t.null_depth_db.expect("null receiver present"))
            .collect();
        let med = median(&mut depths);
        pass &= med >= NULL_DEPTH_FLOOR_DB;
        lines.push(format!("p{i} {med:.1} dB"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed.as_secs_f64() < budget_s;
    report(
        6,
        "null depth under 5 mm / 5 ps errors",
        pass,
        &format!(
            "median null depth {} (floor {NULL_DEPTH_FLOOR_DB} dB), 200 trials each, \
             {elapsed:.2?} of {budget_s} s",
            lines.join(", ")
        ),
    );
}

#[test]
fn criterion_07_coherent_gain_under_error_model() {
    let t0 = Instant::now();
    let budget_s = 60.0;
    let cfg = builtin_scenario("experiment-a-position-1").unwrap();
    let mut gains: Vec<f64> = error_model_trials(&cfg, 200).iter().map(|t| t.gain).collect();
    let med = median(&mut gains);
    let elapsed = t0.elapsed();
    let pass = med >= COHERENT_GAIN_FLOOR && elapsed.as_secs_f64() < budget_s;
    report(
        7,
        "coherent gain under 5 mm / 5 ps errors",
        pass,
        &format!(
            "median coherent gain {med:.4} over 200 trials (floor {COHERENT_GAIN_FLOOR}), \
             {elapsed:.2?} of {budget_s} s"
        ),
    );
}

#[test]
fn criterion_08_pulse_shape_tradeoff() {
    let t0 = Instant::now();
    let budget_s = 5.0;
    let template = builtin_scenario("calibration").unwrap().sync_waveform;
    let metrics = |kind: WaveformKind| -> SidelobeMetrics {
        let mut spec = template.clone();
        spec.kind = kind;
        let pulse = synth(&spec).unwrap();
        sidelobe_metrics(&matched_filter(&pulse, &pulse).unwrap()).unwrap()
    };
    let tt = metrics(WaveformKind::TwoTone);
    let lfm = metrics(WaveformKind::Lfm);
    let dual = metrics(WaveformKind::DualLfm);
    let elapsed = t0.elapsed();
    let pslr_ordered = tt.pslr_db > dual.pslr_db && dual.pslr_db > lfm.pslr_db;
    let width_ordered = tt.mainlobe_width_s < dual.mainlobe_width_s
        && dual.mainlobe_width_s < lfm.mainlobe_width_s;
    let pass = pslr_ordered && width_ordered && elapsed.as_secs_f64() < budget_s;
    report(
        8,
        "pulse-shape tradeoff ordering",
        pass,
        &format!(
            "pslr two-tone {:.2} > dual {:.2} > lfm {:.2} dB; width two-tone {:.1} < \
             dual {:.1} < lfm {:.1} ns, {elapsed:.2?} of {budget_s} s",
            tt.pslr_db,
            dual.pslr_db,
            lfm.pslr_db,
            tt.mainlobe_width_s * 1e9,
            dual.mainlobe_width_s * 1e9,
            lfm.mainlobe_width_s * 1e9
        ),
    );
}

#[test]
fn criterion_09_multipath_outlier_ratio() {
    let t0 = Instant::now();
    let budget_s = 120.0;
    let outliers = |kind: WaveformKind, stage: u64| -> usize {
        let mut cfg = builtin_scenario("calibration").unwrap();
        cfg.sync_waveform.kind = kind;
        cfg.channel.snr_db = Some(10.0);
        cfg.channel.multipath = vec![MultipathTap {
            excess_delay_s: 25e-9,
            relative_amplitude: 0.6,
        }];
        // calibrate through the same impaired channel, as a bench
        // session would: the echo's common-mode pull on the correlation
        // peak is absorbed into tau_cal, and what remains to count is
        // each waveform's ambiguity behaviour
        let cal = run_calibration("bench", &cfg).unwrap().records[0];
        let true_m = euclidean_range(cfg.node(0).true_position, cfg.node(1).true_position);
        (0..500u64)
            .filter(|&trial| {
                let mut rng = stage_rng(0xAC09, trial, stage);
                match run_exchange(&cfg, (0, 1), &mut rng) {
                    // a lost detection is as gross an error as a wild range
                    Err(_) => true,
                    Ok(q) => (est_range(&q, &cal).unwrap() - true_m).abs() > OUTLIER_THRESHOLD_M,
                }
            })
            .count()
    };
    let tt = outliers(WaveformKind::TwoTone, 1);
    let dual = outliers(WaveformKind::DualLfm, 2);
    let elapsed = t0.elapsed();
    let pass = tt >= OUTLIER_MIN_RATIO * dual
        && tt >= OUTLIER_MIN_RATIO
        && elapsed.as_secs_f64() < budget_s;
    report(
        9,
        "multipath outlier ratio",
        pass,
        &format!(
            "500 exchanges each through a 25 ns / 0.6 tap at 10 dB: two-tone {tt} \
             outliers (>{OUTLIER_THRESHOLD_M} m) vs dual-LFM {dual} \
             (need ≥{OUTLIER_MIN_RATIO}× and ≥{OUTLIER_MIN_RATIO}), \
             {elapsed:.2?} of {budget_s} s"
        ),
    );
}

#[test]
fn criterion_10_focus_consistency_across_placements() {
    let t0 = Instant::now();
    let budget_s = 60.0;
    let mut focus_medians = Vec::new();
    let mut nulls_below = true;
    let mut lines = Vec::new();
    for i in 1..=4 {
        let name = format!("experiment-a-position-{i}");
        let cfg = builtin_scenario(&name).unwrap();
        let trials = error_model_trials(&cfg, 200);
        let mut focus: Vec<f64> = trials.iter().map(|t| t.focus_power_db).collect();
        let mut null: Vec<f64> = trials
            .iter()
            .map(|t| t.null_power_db.expect("null receiver present"))
            .collect();
        let f_med = median(&mut focus);
        let n_med = median(&mut null);
        nulls_below &= n_med < f_med;
        focus_medians.push(f_med);
        lines.push(format!("p{i} focus {f_med:.2} dB null {n_med:.2} dB"));
    }
    let spread = focus_medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - focus_medians.iter().cloned().fold(f64::INFINITY, f64::min);
    let elapsed = t0.elapsed();
    let pass =
        spread < FOCUS_SPREAD_LIMIT_DB && nulls_below && elapsed.as_secs_f64() < budget_s;
    report(
        10,
        "focus consistency across placements",
        pass,
        &format!(
            "{}; focus spread {spread:.2} dB (limit {FOCUS_SPREAD_LIMIT_DB} dB), \
             {elapsed:.2?} of {budget_s} s",
            lines.join("; ")
        ),
    );
}

#[test]
fn criterion_11_byte_identical_reruns() {
    let t0 = Instant::now();
    let budget_s = 10.0;
    let name = "experiment-b-position-1";
    let cfg = builtin_scenario(name).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut manifests = Vec::new();
    for dir in &dirs {
        let (report, exchanges) = run_monte_carlo(name, &cfg, 2, None).unwrap();
        manifests.push(emit_outputs(&cfg, &report, &exchanges, dir.path(), true).unwrap());
    }
    let mut identical = manifests[0].len() == manifests[1].len();
    let mut n_files = 0;
    for (a, b) in manifests[0].iter().zip(&manifests[1]) {
        identical &= a.path == b.path && a.sha256 == b.sha256 && a.bytes == b.bytes;
        let bytes_a = std::fs::read(dirs[0].path().join(&a.path)).unwrap();
        let bytes_b = std::fs::read(dirs[1].path().join(&b.path)).unwrap();
        identical &= bytes_a == bytes_b;
        n_files += 1;
    }
    let elapsed = t0.elapsed();
    let pass = identical && n_files > 0 && elapsed.as_secs_f64() < budget_s;
    report(
        11,
        "byte-identical reruns",
        pass,
        &format!(
            "two independent runs, {n_files} files compared byte-for-byte (IQ dumps \
             included), {elapsed:.2?} of {budget_s} s"
        ),
    );
}
