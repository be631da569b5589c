//! End-to-end orchestration: calibrate on the reference bench, measure,
//! localize, solve weights from the *estimated* geometry, fire the beam
//! at the *true* geometry, and score it — once, across Monte-Carlo
//! trials, or swept along a channel axis. Also owns the on-disk output
//! layout (report, per-exchange log, CSV metrics, optional IQ dumps,
//! digest manifest).
//!
//! Determinism contract: every random draw comes from a counter-based
//! generator keyed by (master seed, trial, stage), so a trial's result
//! is independent of execution order and thread count, and a rerun with
//! the same scenario and seed reproduces every output byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::beamformer::{
    coherent_gain, constraint_matrix, lcmp_weights, normalize_weights, power_map,
    rx_power_metrics, simulate_rx_capture, slot_roles, wavenumber, AmplitudeModel, BeamWeights,
    MapGrid,
};
use crate::error::{Error, Result};
use crate::localization::{
    localization_error, localize_array, ArrayGeometry, LocalizationTrial, QuantityStats, RangeSet,
};
use crate::scenario::{
    builtin_scenario, euclidean_range, GroundTruth, Objective, Position2D, ScenarioConfig, SimMode,
};
use crate::sync::{
    est_clock_offset, est_prop_delay, est_range, run_exchange, CalibrationRecord, TimestampQuad,
};
use crate::waveform::{staggered_tx_patterns, synth, synth_ask_train, write_iq_dump};
use crate::SPEED_OF_LIGHT_M_S;

/// Half-width of the uniform epoch misalignment each non-reference node
/// starts a session with, seconds. Coarse packet-level alignment gets
/// the clocks this close; the exchanges do the rest.
pub const EPOCH_ALIGN_RANGE_S: f64 = 100e-9;

/// Exchanges averaged per pair during calibration.
pub const K_CAL: usize = 3;

/// Exchange pair schedule, and the order ranges are reported in.
pub const PAIRS: [(u32, u32); 3] = [(0, 1), (0, 2), (1, 2)];

// rng stage labels — one independent stream per (trial, stage)
const STAGE_EPOCH_ALIGN: u64 = 1;
const STAGE_CAL_EXCHANGES: u64 = 2;
const STAGE_MEAS_EXCHANGES: u64 = 3;
const STAGE_BEAM_ERRORS: u64 = 4;

/// Generator for one stage of one trial. Streams are indexed, not
/// sequential, so trials can run on any thread in any order and still
/// see identical draws.
pub fn stage_rng(seed: u64, trial: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 40) | trial);
    rng
}

/// Generator for the standalone beam-error model (geometry/sync
/// perturbations injected directly, bypassing the estimation chain).
pub fn beam_error_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    stage_rng(seed, trial, STAGE_BEAM_ERRORS)
}

/// The scenario every calibration session runs against: the reference
/// bench geometry with *this* scenario's clocks, hardware, waveforms and
/// channel. Calibration must see the same imperfections as measurement,
/// just at surveyed positions.
pub fn calibration_companion(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut cal = builtin_scenario("calibration").expect("builtin exists");
    for (slot, node) in cal.nodes.iter_mut().zip(&cfg.nodes) {
        slot.clock = node.clock;
        slot.hardware_delay_s = node.hardware_delay_s;
    }
    cal.sync_waveform = cfg.sync_waveform.clone();
    cal.beam_waveform = cfg.beam_waveform.clone();
    cal.channel = cfg.channel.clone();
    cal.carrier_beam_hz = cfg.carrier_beam_hz;
    cal.seed = cfg.seed;
    cal.mode = cfg.mode;
    cal
}

fn with_epoch_offsets(cfg: &ScenarioConfig, epoch_s: &[f64; 3]) -> ScenarioConfig {
    let mut out = cfg.clone();
    for (node, e) in out.nodes.iter_mut().zip(epoch_s) {
        node.clock.offset_s += e;
    }
    out
}

fn pair_true_range(truth: &GroundTruth, pair: (u32, u32)) -> f64 {
    match pair {
        (0, 1) => truth.ranges.d_01_m,
        (0, 2) => truth.ranges.d_02_m,
        (1, 2) => truth.ranges.d_12_m,
        other => unreachable!("unscheduled pair {other:?}"),
    }
}

// ---------------------------------------------------------------------------
// Per-trial records
// ---------------------------------------------------------------------------

/// One logged two-way exchange and what was read off it.
#[derive(Debug, Clone, Serialize)]
pub struct ExchangeRecord {
    pub trial: u64,
    /// "calibration" or "measurement".
    pub purpose: &'static str,
    pub quad: TimestampQuad,
    pub est_prop_delay_s: f64,
    pub est_clock_offset_s: f64,
    /// Present once a calibration constant was available.
    pub est_range_m: Option<f64>,
}

/// Beam quality read off the simulated receiver captures.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BeamMetricsRecord {
    pub focus_power_db: f64,
    /// Absent when the scenario defines no null receiver.
    pub null_power_db: Option<f64>,
    pub null_depth_db: Option<f64>,
    /// At the first focus receiver.
    pub coherent_gain: f64,
}

/// Everything one pipeline pass produces.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: SimMode,
    pub seed: u64,
    pub trial: u64,
    /// Per-pair constants, [`PAIRS`] order.
    pub calibration: Vec<CalibrationRecord>,
    pub est_ranges: RangeSet,
    /// Estimated − true, ordered (d01, d02, d12), metres.
    pub range_error_m: [f64; 3],
    pub est_geometry: ArrayGeometry,
    /// Euclidean error per node, metres.
    pub position_error_m: [f64; 3],
    /// True-minus-estimated clock offset per node at beam time, node 0
    /// the reference, seconds. This is what misphases the carrier.
    pub sync_residual_s: [f64; 3],
    /// Normalized transmit weights solved from the estimated geometry.
    pub weights: BeamWeights,
    pub beam: BeamMetricsRecord,
}

fn log_exchange(
    exchanges: &mut Vec<ExchangeRecord>,
    trial: u64,
    purpose: &'static str,
    quad: TimestampQuad,
    est_range_m: Option<f64>,
) {
    exchanges.push(ExchangeRecord {
        trial,
        purpose,
        est_prop_delay_s: est_prop_delay(&quad),
        est_clock_offset_s: est_clock_offset(&quad),
        quad,
        est_range_m,
    });
}

fn calibration_session<R: Rng + ?Sized>(
    cal_cfg: &ScenarioConfig,
    rng: &mut R,
    trial: u64,
    exchanges: &mut Vec<ExchangeRecord>,
) -> Result<Vec<CalibrationRecord>> {
    let cal_truth = GroundTruth::from_config(cal_cfg);
    let mut records = Vec::with_capacity(PAIRS.len());
    for &pair in &PAIRS {
        let mut tau_sum = 0.0;
        for _ in 0..K_CAL {
            let quad = run_exchange(cal_cfg, pair, rng)?;
            tau_sum += est_prop_delay(&quad);
            log_exchange(exchanges, trial, "calibration", quad, None);
        }
        records.push(CalibrationRecord {
            pair,
            tau_cal_s: tau_sum / K_CAL as f64 - pair_true_range(&cal_truth, pair) / SPEED_OF_LIGHT_M_S,
        });
    }
    Ok(records)
}

/// Run the full chain once: calibration session on the reference bench,
/// measurement session at the true geometry, localization, weights from
/// the estimated geometry, captures at the true one, metrics.
pub fn run_pipeline(
    scenario_name: &str,
    cfg: &ScenarioConfig,
    trial: u64,
) -> Result<(RunReport, Vec<ExchangeRecord>)> {
    cfg.validate()?;
    let seed = cfg.seed;
    let truth = GroundTruth::from_config(cfg);
    let mut exchanges = Vec::new();

    // each session begins with its own coarse epoch alignment
    let mut epoch_rng = stage_rng(seed, trial, STAGE_EPOCH_ALIGN);
    let draw = |rng: &mut ChaCha8Rng| rng.gen_range(-EPOCH_ALIGN_RANGE_S..=EPOCH_ALIGN_RANGE_S);
    let cal_epoch = [0.0, draw(&mut epoch_rng), draw(&mut epoch_rng)];
    let meas_epoch = [0.0, draw(&mut epoch_rng), draw(&mut epoch_rng)];

    // calibration at the surveyed bench, this scenario's hardware
    let cal_cfg = with_epoch_offsets(&calibration_companion(cfg), &cal_epoch);
    let mut cal_rng = stage_rng(seed, trial, STAGE_CAL_EXCHANGES);
    let calibration = calibration_session(&cal_cfg, &mut cal_rng, trial, &mut exchanges)?;

    // measurement at the true (unknown) geometry
    let meas_cfg = with_epoch_offsets(cfg, &meas_epoch);
    let mut meas_rng = stage_rng(seed, trial, STAGE_MEAS_EXCHANGES);
    let mut ranges = [0.0f64; 3];
    let mut offset_est = [0.0f64; 3]; // estimated offset of node n relative to node 0
    for (i, &pair) in PAIRS.iter().enumerate() {
        let quad = run_exchange(&meas_cfg, pair, &mut meas_rng)?;
        let r = est_range(&quad, &calibration[i])?;
        ranges[i] = r;
        if pair.0 == 0 {
            // est_clock_offset is responder − initiator = node0 − node_n
            offset_est[pair.1 as usize] = -est_clock_offset(&quad);
        }
        log_exchange(&mut exchanges, trial, "measurement", quad, Some(r));
    }
    let est_ranges = RangeSet {
        d_01_m: ranges[0],
        d_02_m: ranges[1],
        d_12_m: ranges[2],
    };
    let est_geometry = localize_array(&est_ranges)?;

    let range_error_m = [
        est_ranges.d_01_m - truth.ranges.d_01_m,
        est_ranges.d_02_m - truth.ranges.d_02_m,
        est_ranges.d_12_m - truth.ranges.d_12_m,
    ];
    let position_error_m = [
        euclidean_range(est_geometry.positions[0], truth.node_positions[0]),
        euclidean_range(est_geometry.positions[1], truth.node_positions[1]),
        euclidean_range(est_geometry.positions[2], truth.node_positions[2]),
    ];

    // what's left of each node's clock error after it corrects by the
    // estimate; epoch draws are part of the truth being estimated
    let rel_true = |n: usize| {
        (cfg.node(n as u32).clock.offset_s + meas_epoch[n])
            - (cfg.node(0).clock.offset_s + meas_epoch[0])
    };
    let sync_residual_s = [
        0.0,
        rel_true(1) - offset_est[1],
        rel_true(2) - offset_est[2],
    ];

    // weights believe the estimate; physics uses the truth
    let k = wavenumber(cfg.carrier_beam_hz);
    let rx_points: Vec<Position2D> = cfg.receivers.iter().map(|r| r.true_position).collect();
    let c = constraint_matrix(&est_geometry.positions, &rx_points, k);
    let gains: Vec<Complex64> = cfg
        .objective_gains()
        .into_iter()
        .map(|g| Complex64::new(g, 0.0))
        .collect();
    let weights = normalize_weights(&lcmp_weights(&c, &gains)?)?;

    let patterns = staggered_tx_patterns();
    let roles = slot_roles(&patterns)?;
    let slot_s = patterns[0].slot_duration_s();
    let captures = simulate_rx_capture(cfg, &weights, &patterns, &sync_residual_s)?;
    let power = rx_power_metrics(&captures, &cfg.objectives(), &roles, slot_s)?;
    let focus_idx = cfg
        .receivers
        .iter()
        .position(|r| r.objective == Objective::Focus)
        .expect("rx_power_metrics established a focus receiver");
    let beam = BeamMetricsRecord {
        focus_power_db: 10.0 * power.focus_power.max(1e-30).log10(),
        null_power_db: power.null_power.map(|p| 10.0 * p.max(1e-30).log10()),
        null_depth_db: power.null_depth_db,
        coherent_gain: coherent_gain(&captures[focus_idx], &roles, slot_s)?,
    };

    Ok((
        RunReport {
            scenario: scenario_name.to_string(),
            mode: cfg.mode,
            seed,
            trial,
            calibration,
            est_ranges,
            range_error_m,
            est_geometry,
            position_error_m,
            sync_residual_s,
            weights,
            beam,
        },
        exchanges,
    ))
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

/// Median and decile spread of one metric across trials.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Percentiles {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

fn percentiles(values: &[f64]) -> Option<Percentiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    Some(Percentiles {
        median: at(0.5),
        p10: at(0.1),
        p90: at(0.9),
    })
}

/// Beam quality across trials.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BeamSummary {
    pub null_depth_db: Option<Percentiles>,
    pub coherent_gain: Percentiles,
    pub focus_power_db: Percentiles,
}

/// Aggregate over trials plus every per-trial report.
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub scenario: String,
    pub mode: SimMode,
    pub seed: u64,
    pub n_trials: u64,
    /// RMSE/bias/std per estimated quantity (d1, d2, d3, y1, x2, y2).
    pub localization: Vec<QuantityStats>,
    pub beam: BeamSummary,
    pub trials: Vec<RunReport>,
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => Err(Error::Validation("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Resource(format!("cannot build a {n}-thread pool: {e}")))?
            .install(f),
    }
}

/// Run `n_trials` independent pipeline passes. Trial outcomes depend
/// only on (seed, trial index), so any `jobs` setting yields identical
/// results; aggregation preserves trial order.
pub fn run_monte_carlo(
    scenario_name: &str,
    cfg: &ScenarioConfig,
    n_trials: u64,
    jobs: Option<usize>,
) -> Result<(MonteCarloReport, Vec<ExchangeRecord>)> {
    if n_trials == 0 {
        return Err(Error::Validation("trial count must be at least 1".into()));
    }
    cfg.validate()?;
    let results: Vec<(RunReport, Vec<ExchangeRecord>)> = in_pool(jobs, || {
        (0..n_trials)
            .into_par_iter()
            .map(|t| run_pipeline(scenario_name, cfg, t))
            .collect()
    })?;

    let truth = GroundTruth::from_config(cfg);
    let trials: Vec<LocalizationTrial> = results
        .iter()
        .map(|(r, _)| LocalizationTrial {
            ranges: r.est_ranges,
            geometry: r.est_geometry.clone(),
        })
        .collect();
    let localization = localization_error(&trials, &truth)?;

    let collect = |f: &dyn Fn(&RunReport) -> Option<f64>| -> Vec<f64> {
        results.iter().filter_map(|(r, _)| f(r)).collect()
    };
    let beam = BeamSummary {
        null_depth_db: percentiles(&collect(&|r| r.beam.null_depth_db)),
        coherent_gain: percentiles(&collect(&|r| Some(r.beam.coherent_gain)))
            .expect("at least one trial"),
        focus_power_db: percentiles(&collect(&|r| Some(r.beam.focus_power_db)))
            .expect("at least one trial"),
    };

    let mut reports = Vec::with_capacity(results.len());
    let mut exchanges = Vec::new();
    for (report, mut ex) in results {
        reports.push(report);
        exchanges.append(&mut ex);
    }
    Ok((
        MonteCarloReport {
            scenario: scenario_name.to_string(),
            mode: cfg.mode,
            seed: cfg.seed,
            n_trials,
            localization,
            beam,
            trials: reports,
        },
        exchanges,
    ))
}

// ---------------------------------------------------------------------------
// Calibration as a stand-alone product
// ---------------------------------------------------------------------------

/// Output of the `calibrate` command: the constants plus a closed-loop
/// check (an extra exchange per pair, ranged with the fresh constants,
/// against the surveyed bench).
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub scenario: String,
    pub mode: SimMode,
    pub seed: u64,
    pub records: Vec<CalibrationRecord>,
    /// Residual range error per pair at the bench, metres.
    pub check_range_error_m: Vec<f64>,
}

/// Derive per-pair calibration constants for a scenario's hardware.
pub fn run_calibration(scenario_name: &str, cfg: &ScenarioConfig) -> Result<CalibrationReport> {
    cfg.validate()?;
    let mut epoch_rng = stage_rng(cfg.seed, 0, STAGE_EPOCH_ALIGN);
    let draw = |rng: &mut ChaCha8Rng| rng.gen_range(-EPOCH_ALIGN_RANGE_S..=EPOCH_ALIGN_RANGE_S);
    let cal_epoch = [0.0, draw(&mut epoch_rng), draw(&mut epoch_rng)];
    let cal_cfg = with_epoch_offsets(&calibration_companion(cfg), &cal_epoch);
    let cal_truth = GroundTruth::from_config(&cal_cfg);

    let mut rng = stage_rng(cfg.seed, 0, STAGE_CAL_EXCHANGES);
    let mut exchanges = Vec::new();
    let records = calibration_session(&cal_cfg, &mut rng, 0, &mut exchanges)?;
    let mut check = Vec::with_capacity(PAIRS.len());
    for (i, &pair) in PAIRS.iter().enumerate() {
        let quad = run_exchange(&cal_cfg, pair, &mut rng)?;
        check.push(est_range(&quad, &records[i])? - pair_true_range(&cal_truth, pair));
    }
    Ok(CalibrationReport {
        scenario: scenario_name.to_string(),
        mode: cfg.mode,
        seed: cfg.seed,
        records,
        check_range_error_m: check,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Channel knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Link SNR, dB (waveform mode).
    SnrDb,
    /// Timestamp error σ, seconds (abstract mode).
    AbstractSigmaS,
}

impl SweepAxis {
    /// Axis name as it appears in CSV headers and CLI values.
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::AbstractSigmaS => "abstract_sigma_s",
        }
    }

    fn apply(self, cfg: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut out = cfg.clone();
        match self {
            SweepAxis::SnrDb => out.channel.snr_db = Some(value),
            SweepAxis::AbstractSigmaS => out.channel.abstract_timestamp_sigma_s = value,
        }
        out
    }
}

/// One sweep point's full Monte-Carlo result.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub report: MonteCarloReport,
    #[serde(skip)]
    pub exchanges: Vec<ExchangeRecord>,
}

/// Monte Carlo at every axis value. Every point reuses the same master
/// seed — common random numbers, so curves show the axis's effect
/// rather than resampling noise.
pub fn run_sweep(
    scenario_name: &str,
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    n_trials: u64,
    jobs: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Validation("sweep needs at least one axis value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let point_cfg = axis.apply(cfg, v);
            point_cfg.channel.validate().map_err(|e| {
                Error::Validation(format!("sweep value {v} for {}: {e}", axis.name()))
            })?;
            let (report, exchanges) = run_monte_carlo(scenario_name, &point_cfg, n_trials, jobs)?;
            Ok(SweepPoint {
                axis_value: v,
                report,
                exchanges,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

/// One file the run produced.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn write_bytes(dir: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(&path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn walk_sorted(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            walk_sorted(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Hash everything under `out_dir` (except the manifest itself) and
/// write `manifest.json`. Always the last file written, so a reader can
/// verify the rest of the run against it.
pub fn write_manifest(out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut files = Vec::new();
    walk_sorted(out_dir, &mut files)?;
    let mut entries = Vec::new();
    for path in files {
        let rel = path
            .strip_prefix(out_dir)
            .expect("walked under out_dir")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if rel == "manifest.json" {
            continue;
        }
        let bytes = fs::read(&path)?;
        entries.push(ManifestEntry {
            sha256: hex(&Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
            path: rel,
        });
    }
    let mut json = serde_json::to_vec_pretty(&entries)?;
    json.push(b'\n');
    write_bytes(out_dir, "manifest.json", &json)?;
    Ok(entries)
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn localization_csv(stats: &[QuantityStats]) -> Vec<u8> {
    let mut s = String::from("quantity,rmse_m,bias_m,std_m,n_trials\n");
    for q in stats {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            q.quantity, q.rmse_m, q.bias_m, q.std_m, q.n_trials
        ));
    }
    s.into_bytes()
}

/// Map extent: a margin around everything in the scene.
const MAP_MARGIN_M: f64 = 0.5;
/// Map resolution, metres.
const MAP_STEP_M: f64 = 0.02;

fn scene_grid(cfg: &ScenarioConfig) -> MapGrid {
    let pts = cfg
        .nodes
        .iter()
        .map(|n| n.true_position)
        .chain(cfg.receivers.iter().map(|r| r.true_position));
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x = (x.0.min(p.x_m), x.1.max(p.x_m));
        y = (y.0.min(p.y_m), y.1.max(p.y_m));
    }
    MapGrid {
        x_min_m: x.0 - MAP_MARGIN_M,
        x_max_m: x.1 + MAP_MARGIN_M,
        y_min_m: y.0 - MAP_MARGIN_M,
        y_max_m: y.1 + MAP_MARGIN_M,
        step_m: MAP_STEP_M,
    }
}

fn power_map_csv(cfg: &ScenarioConfig, weights: &BeamWeights) -> Result<Vec<u8>> {
    let nodes: Vec<Position2D> = cfg.nodes.iter().map(|n| n.true_position).collect();
    let map = power_map(
        &scene_grid(cfg),
        &nodes,
        weights,
        wavenumber(cfg.carrier_beam_hz),
        AmplitudeModel::PhaseOnly,
    )?;
    let mut s = String::from("x_m,y_m,power_db\n");
    for (iy, &y) in map.ys.iter().enumerate() {
        for (ix, &x) in map.xs.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", x, y, map.power_db[iy][ix]));
        }
    }
    Ok(s.into_bytes())
}

fn dump_waveform_set(
    cfg: &ScenarioConfig,
    trial0: &RunReport,
    out_dir: &Path,
) -> Result<()> {
    let dir = out_dir.join("waveforms");
    fs::create_dir_all(&dir)?;
    write_iq_dump(&synth(&cfg.sync_waveform)?, &dir, "sync_reference")?;
    let patterns = staggered_tx_patterns();
    for (n, pattern) in patterns.iter().enumerate() {
        write_iq_dump(
            &synth_ask_train(&cfg.beam_waveform, pattern)?,
            &dir,
            &format!("beam_tx{n}"),
        )?;
    }
    let captures =
        simulate_rx_capture(cfg, &trial0.weights, &patterns, &trial0.sync_residual_s)?;
    for (i, capture) in captures.iter().enumerate() {
        write_iq_dump(capture, &dir, &format!("rx_capture_{i}"))?;
    }
    Ok(())
}

/// Write a Monte-Carlo run to disk: `report.json`, `exchanges.jsonl`
/// (trial-major, calibration before measurement), `localization.csv`,
/// `power_map.csv` (trial-0 weights radiated from the true node
/// positions), optional `waveforms/` IQ dumps (trial 0), and last a
/// `manifest.json` digesting every other file. Reruns with the same
/// scenario and seed reproduce every byte.
pub fn emit_outputs(
    cfg: &ScenarioConfig,
    report: &MonteCarloReport,
    exchanges: &[ExchangeRecord],
    out_dir: &Path,
    dump_waveforms: bool,
) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir)?;
    write_bytes(out_dir, "report.json", &json_pretty(report)?)?;

    let mut jsonl = Vec::new();
    for ex in exchanges {
        serde_json::to_writer(&mut jsonl, ex)?;
        jsonl.push(b'\n');
    }
    write_bytes(out_dir, "exchanges.jsonl", &jsonl)?;
    write_bytes(out_dir, "localization.csv", &localization_csv(&report.localization))?;

    let trial0 = report
        .trials
        .first()
        .ok_or_else(|| Error::Validation("report holds no trials".into()))?;
    write_bytes(out_dir, "power_map.csv", &power_map_csv(cfg, &trial0.weights)?)?;
    if dump_waveforms {
        dump_waveform_set(cfg, trial0, out_dir)?;
    }
    write_manifest(out_dir)
}

/// Write a sweep to disk: one fully emitted run per point under
/// `point_<index>/`, a `sweep_summary.csv` across points, and a root
/// manifest covering everything (the per-point manifests included).
pub fn emit_sweep_outputs(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    points: &[SweepPoint],
    out_dir: &Path,
    dump_waveforms: bool,
) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir)?;
    let mut summary = format!(
        "{},quantity,rmse_m,bias_m,std_m,median_null_depth_db,median_coherent_gain\n",
        axis.name()
    );
    for (i, point) in points.iter().enumerate() {
        let point_cfg = axis.apply(cfg, point.axis_value);
        emit_outputs(
            &point_cfg,
            &point.report,
            &point.exchanges,
            &out_dir.join(format!("point_{i}")),
            dump_waveforms,
        )?;
        let null = point
            .report
            .beam
            .null_depth_db
            .map_or(String::new(), |p| p.median.to_string());
        for q in &point.report.localization {
            summary.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                point.axis_value,
                q.quantity,
                q.rmse_m,
                q.bias_m,
                q.std_m,
                null,
                point.report.beam.coherent_gain.median,
            ));
        }
    }
    write_bytes(out_dir, "sweep_summary.csv", summary.as_bytes())?;
    write_manifest(out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_scenario;

    /// Builtin scenario with every noise source silenced.
    fn noiseless(name: &str, mode: SimMode) -> ScenarioConfig {
        let mut cfg = builtin_scenario(name).unwrap();
        cfg.mode = mode;
        cfg.channel.snr_db = None;
        cfg.channel.abstract_timestamp_sigma_s = 0.0;
        for node in &mut cfg.nodes {
            node.clock.timestamp_jitter_s = 0.0;
        }
        cfg
    }

    #[test]
    fn stage_rng_streams_are_independent_and_stable() {
        let mut a = stage_rng(9, 3, STAGE_CAL_EXCHANGES);
        let mut b = stage_rng(9, 3, STAGE_CAL_EXCHANGES);
        let mut c = stage_rng(9, 4, STAGE_CAL_EXCHANGES);
        let mut d = stage_rng(9, 3, STAGE_MEAS_EXCHANGES);
        let (x, y): (f64, f64) = (a.gen(), b.gen());
        assert_eq!(x, y, "same (seed, trial, stage) must replay");
        assert_ne!(x, c.gen::<f64>(), "trials diverge");
        assert_ne!(x, d.gen::<f64>(), "stages diverge");
    }

    #[test]
    fn companion_swaps_geometry_but_keeps_the_hardware() {
        let mut cfg = builtin_scenario("experiment-a-position-3").unwrap();
        cfg.nodes[1].clock.offset_s = 4.2e-6;
        cfg.nodes[2].hardware_delay_s = 77e-9;
        let cal = calibration_companion(&cfg);
        let bench = builtin_scenario("calibration").unwrap();
        for n in 0..3 {
            assert_eq!(cal.nodes[n].true_position, bench.nodes[n].true_position);
        }
        assert_eq!(cal.nodes[1].clock.offset_s, 4.2e-6);
        assert_eq!(cal.nodes[2].hardware_delay_s, 77e-9);
        assert_eq!(cal.sync_waveform, cfg.sync_waveform);
    }

    #[test]
    fn noiseless_abstract_run_recovers_everything() {
        let cfg = noiseless("experiment-a-position-2", SimMode::AbstractError);
        let (report, exchanges) = run_pipeline("experiment-a-position-2", &cfg, 0).unwrap();
        assert_eq!(exchanges.len(), 3 * K_CAL + 3);
        for e in &report.range_error_m {
            assert!(e.abs() < 1e-6, "range error {e}");
        }
        for e in &report.position_error_m {
            assert!(e.abs() < 1e-6, "position error {e}");
        }
        for r in &report.sync_residual_s {
            assert!(r.abs() < 1e-15, "sync residual {r}");
        }
        assert!(
            report.beam.null_depth_db.unwrap() > 60.0,
            "noiseless null depth {:?}",
            report.beam.null_depth_db
        );
        let peak = report.weights.w.iter().map(|w| w.norm()).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-12, "weights come out normalized");
    }

    #[test]
    fn noisy_waveform_run_stays_on_target() {
        let cfg = builtin_scenario("experiment-a-position-1").unwrap();
        let (report, _) = run_pipeline("experiment-a-position-1", &cfg, 0).unwrap();
        for e in &report.range_error_m {
            assert!(e.abs() < 0.05, "range error {e} m at 30 dB");
        }
        assert!(
            report.beam.null_depth_db.unwrap() > 10.0,
            "null depth {:?}",
            report.beam.null_depth_db
        );
        let g = report.beam.coherent_gain;
        assert!(g > 0.8 && g <= 1.0 + 1e-9, "coherent gain {g}");
    }

    #[test]
    fn reports_replay_byte_for_byte() {
        let cfg = builtin_scenario("experiment-b-position-2").unwrap();
        let (a, ea) = run_pipeline("x", &cfg, 5).unwrap();
        let (b, eb) = run_pipeline("x", &cfg, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&ea).unwrap(),
            serde_json::to_string(&eb).unwrap()
        );
    }

    #[test]
    fn single_trial_monte_carlo_is_the_pipeline() {
        let cfg = noiseless("experiment-b-position-1", SimMode::AbstractError);
        let (mc, mc_ex) = run_monte_carlo("s", &cfg, 1, None).unwrap();
        let (solo, solo_ex) = run_pipeline("s", &cfg, 0).unwrap();
        assert_eq!(
            serde_json::to_string(&mc.trials[0]).unwrap(),
            serde_json::to_string(&solo).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&mc_ex).unwrap(),
            serde_json::to_string(&solo_ex).unwrap()
        );
        assert_eq!(mc.localization[0].n_trials, 1);
    }

    #[test]
    fn thread_count_cannot_change_the_answer() {
        let mut cfg = noiseless("experiment-a-position-4", SimMode::AbstractError);
        cfg.channel.abstract_timestamp_sigma_s = 20e-12;
        let (one, _) = run_monte_carlo("s", &cfg, 4, Some(1)).unwrap();
        let (four, _) = run_monte_carlo("s", &cfg, 4, Some(4)).unwrap();
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&four).unwrap()
        );
        assert!(matches!(
            run_monte_carlo("s", &cfg, 1, Some(0)).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn zero_trials_is_rejected() {
        let cfg = builtin_scenario("calibration").unwrap();
        assert!(matches!(
            run_monte_carlo("s", &cfg, 0, None).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn calibration_report_closes_the_loop() {
        let cfg = noiseless("experiment-a-position-1", SimMode::AbstractError);
        let report = run_calibration("cal", &cfg).unwrap();
        assert_eq!(report.records.len(), 3);
        // builtin hardware delay is 10 ns per node → 10 ns per pair
        for rec in &report.records {
            assert!(
                (rec.tau_cal_s - 10e-9).abs() < 1e-15,
                "pair {:?} tau_cal {}",
                rec.pair,
                rec.tau_cal_s
            );
        }
        for e in &report.check_range_error_m {
            assert!(e.abs() < 1e-9, "closed-loop range error {e}");
        }
    }

    #[test]
    fn sweep_shares_its_seed_across_points() {
        let cfg = noiseless("experiment-b-position-3", SimMode::AbstractError);
        let points = run_sweep(
            "s",
            &cfg,
            SweepAxis::AbstractSigmaS,
            &[0.0, 50e-12],
            2,
            None,
        )
        .unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].report.seed, points[1].report.seed);
        // more timestamp noise cannot improve ranging
        let rmse = |p: &SweepPoint| p.report.localization[0].rmse_m;
        assert!(rmse(&points[0]) <= rmse(&points[1]) + 1e-15);
        assert!(run_sweep("s", &cfg, SweepAxis::SnrDb, &[], 1, None).is_err());
    }

    #[test]
    fn emitted_outputs_are_reproducible_and_self_describing() {
        let cfg = noiseless("experiment-a-position-1", SimMode::AbstractError);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let (report, exchanges) = run_monte_carlo("a1", &cfg, 2, None).unwrap();
        let entries = emit_outputs(&cfg, &report, &exchanges, dir_a.path(), true).unwrap();
        emit_outputs(&cfg, &report, &exchanges, dir_b.path(), true).unwrap();

        let names: Vec<&str> = entries.iter().map(|e| e.path.as_str()).collect();
        for want in [
            "report.json",
            "exchanges.jsonl",
            "localization.csv",
            "power_map.csv",
            "waveforms/sync_reference.iq",
            "waveforms/beam_tx0.iq",
            "waveforms/rx_capture_0.iq",
        ] {
            assert!(names.contains(&want), "manifest missing {want}: {names:?}");
        }
        for entry in &entries {
            let bytes = fs::read(dir_a.path().join(&entry.path)).unwrap();
            assert_eq!(hex(&Sha256::digest(&bytes)), entry.sha256, "{}", entry.path);
            let other = fs::read(dir_b.path().join(&entry.path)).unwrap();
            assert_eq!(bytes, other, "rerun changed {}", entry.path);
        }
        let manifest_a = fs::read(dir_a.path().join("manifest.json")).unwrap();
        let manifest_b = fs::read(dir_b.path().join("manifest.json")).unwrap();
        assert_eq!(manifest_a, manifest_b);

        let csv = fs::read_to_string(dir_a.path().join("localization.csv")).unwrap();
        assert!(csv.starts_with("quantity,rmse_m,bias_m,std_m,n_trials\n"));
        assert_eq!(csv.lines().count(), 7, "header plus six quantities");
        let pm = fs::read_to_string(dir_a.path().join("power_map.csv")).unwrap();
        assert!(pm.starts_with("x_m,y_m,power_db\n"));
    }

    #[test]
    fn sweep_emission_nests_per_point_runs() {
        let cfg = noiseless("experiment-b-position-1", SimMode::AbstractError);
        let dir = tempfile::tempdir().unwrap();
        let points =
            run_sweep("b1", &cfg, SweepAxis::AbstractSigmaS, &[0.0, 10e-12], 1, None).unwrap();
        let entries =
            emit_sweep_outputs(&cfg, SweepAxis::AbstractSigmaS, &points, dir.path(), false)
                .unwrap();
        let names: Vec<&str> = entries.iter().map(|e| e.path.as_str()).collect();
        assert!(names.contains(&"sweep_summary.csv"));
        assert!(names.contains(&"point_0/report.json"));
        assert!(names.contains(&"point_1/manifest.json"));
        let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
        assert!(summary.starts_with("abstract_sigma_s,quantity,"));
        assert_eq!(summary.lines().count(), 1 + 2 * 6);
    }
}
