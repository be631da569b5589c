//! Scenario geometry and configuration: node/receiver layouts, waveform
//! and channel parameters, JSON (de)serialization, and the builtin
//! desk-scale experiment library.
//!
//! All geometry is planar. Scenario files are anchored so that node 0
//! sits at the origin and node 1 on the +y axis — the same frame the
//! range-based localizer reports in — which lets estimated and true
//! coordinates be compared directly.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::RangeSet;
use crate::sync::{ChannelModel, ClockModel};
use crate::waveform::{WaveformKind, WaveformSpec};

/// Point in the plane, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position2D {
    pub x_m: f64,
    pub y_m: f64,
}

impl Position2D {
    pub fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }

    /// Straight-line distance to `other` in metres.
    pub fn distance_to(&self, other: Position2D) -> f64 {
        euclidean_range(*self, other)
    }
}

impl fmt::Display for Position2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}) m", self.x_m, self.y_m)
    }
}

/// Euclidean distance between two planar points, metres.
pub fn euclidean_range(a: Position2D, b: Position2D) -> f64 {
    (a.x_m - b.x_m).hypot(a.y_m - b.y_m)
}

/// What the beamformer should do at a given receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Steer coherent power onto this receiver (unit constraint gain).
    Focus,
    /// Suppress the field at this receiver (zero constraint gain).
    Null,
}

/// One transmitting array element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    /// Stable identifier; the three-node chain requires ids 0, 1, 2.
    pub id: u32,
    /// Ground-truth antenna position (the array never sees this
    /// directly — it must estimate it from ranging).
    pub true_position: Position2D,
    /// Free-running oscillator model for this node.
    pub clock: ClockModel,
    /// Lumped transmit+receive chain latency, seconds. Enters every
    /// timestamp on this node's side of an exchange and is removed by
    /// calibration against a known baseline.
    pub hardware_delay_s: f64,
}

/// One far-side antenna the beam is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSpec {
    pub id: u32,
    pub true_position: Position2D,
    pub objective: Objective,
}

/// Fidelity the timestamp exchanges are simulated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Full sampled-pulse path: synthesis, delay/multipath/AWGN channel,
    /// matched filter, sub-sample peak interpolation.
    WaveformLevel,
    /// Timestamps formed directly from geometry plus Gaussian error.
    AbstractError,
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimMode::WaveformLevel => write!(f, "waveform_level"),
            SimMode::AbstractError => write!(f, "abstract_error"),
        }
    }
}

fn default_mode() -> SimMode {
    SimMode::WaveformLevel
}

/// Complete description of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Array elements; exactly three, ids 0..=2, in the anchor frame
    /// (node 0 at the origin, node 1 on the +y axis, node 2 at x > 0).
    pub nodes: Vec<NodeSpec>,
    /// Beam evaluation points, focus-first by convention.
    pub receivers: Vec<ReceiverSpec>,
    /// Pulse used for two-way timestamp exchanges.
    pub sync_waveform: WaveformSpec,
    /// Pulse train transmitted during the beamforming phase.
    pub beam_waveform: WaveformSpec,
    pub channel: ChannelModel,
    /// Carrier used for beam phase arithmetic, Hz.
    pub carrier_beam_hz: f64,
    /// Master RNG seed; every stochastic draw in a run derives from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: SimMode,
}

/// Position tolerance for the anchor-frame checks, metres.
const ANCHOR_TOL_M: f64 = 1e-9;

impl ScenarioConfig {
    /// Look up a node by id. Panics if validation was skipped and the id
    /// is absent.
    pub fn node(&self, id: u32) -> &NodeSpec {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .expect("scenario validated to contain node ids 0..=2")
    }

    /// Constraint gains implied by receiver objectives, focus → 1,
    /// null → 0, in receiver order.
    pub fn objective_gains(&self) -> Vec<f64> {
        self.receivers
            .iter()
            .map(|r| match r.objective {
                Objective::Focus => 1.0,
                Objective::Null => 0.0,
            })
            .collect()
    }

    /// Receiver objectives in receiver order.
    pub fn objectives(&self) -> Vec<Objective> {
        self.receivers.iter().map(|r| r.objective).collect()
    }

    /// Check every structural invariant a simulation relies on.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != 3 {
            return Err(Error::Validation(format!(
                "scenario must describe exactly 3 nodes, got {}",
                self.nodes.len()
            )));
        }
        for (want, node) in self.nodes.iter().enumerate() {
            if node.id != want as u32 {
                return Err(Error::Validation(format!(
                    "node ids must be 0,1,2 in order; slot {want} has id {}",
                    node.id
                )));
            }
        }
        let n0 = self.node(0).true_position;
        let n1 = self.node(1).true_position;
        let n2 = self.node(2).true_position;
        if n0.x_m.abs() > ANCHOR_TOL_M || n0.y_m.abs() > ANCHOR_TOL_M {
            return Err(Error::Validation(format!(
                "node 0 anchors the frame and must sit at the origin, got ({}, {})",
                n0.x_m, n0.y_m
            )));
        }
        if n1.x_m.abs() > ANCHOR_TOL_M || n1.y_m <= 0.0 {
            return Err(Error::Validation(format!(
                "node 1 must lie on the +y axis, got ({}, {})",
                n1.x_m, n1.y_m
            )));
        }
        if n2.x_m <= 0.0 {
            return Err(Error::Validation(format!(
                "node 2 must have x > 0 to match the ambiguity-resolution convention, got x = {}",
                n2.x_m
            )));
        }
        if self.receivers.is_empty() {
            return Err(Error::Validation(
                "scenario needs at least one receiver".into(),
            ));
        }
        let mut rx_ids = BTreeSet::new();
        for rx in &self.receivers {
            if !rx_ids.insert(rx.id) {
                return Err(Error::Validation(format!(
                    "duplicate receiver id {}",
                    rx.id
                )));
            }
        }
        for node in &self.nodes {
            if !node.hardware_delay_s.is_finite() || node.hardware_delay_s < 0.0 {
                return Err(Error::Validation(format!(
                    "node {} hardware delay must be finite and non-negative",
                    node.id
                )));
            }
            node.clock.validate(node.id)?;
        }
        self.sync_waveform.validate("sync_waveform")?;
        self.beam_waveform.validate("beam_waveform")?;
        if self.sync_waveform.kind == WaveformKind::Ask {
            return Err(Error::Validation(
                "sync_waveform must be a correlation pulse, not an ASK train".into(),
            ));
        }
        self.channel.validate()?;
        if self.carrier_beam_hz <= 0.0 || !self.carrier_beam_hz.is_finite() {
            return Err(Error::Validation(format!(
                "carrier_beam_hz must be positive, got {}",
                self.carrier_beam_hz
            )));
        }
        Ok(())
    }
}

/// A builtin scenario plus the name it is addressed by on the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedScenario {
    pub name: String,
    pub config: ScenarioConfig,
}

/// Parse and validate a scenario from JSON text.
pub fn scenario_from_json(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serialize a scenario to pretty JSON with stable field order.
pub fn scenario_to_json(cfg: &ScenarioConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(cfg)?)
}

/// Load and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    scenario_from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Validation(format!("{}: {}", path.display(), j)),
        other => other,
    })
}

/// Ground-truth quantities derived from a scenario: what the estimators
/// are judged against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub node_positions: [Position2D; 3],
    pub receiver_positions: Vec<Position2D>,
    /// True pairwise node separations.
    pub ranges: RangeSet,
}

impl GroundTruth {
    /// Derive truth from a validated scenario.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let p = [
            cfg.node(0).true_position,
            cfg.node(1).true_position,
            cfg.node(2).true_position,
        ];
        GroundTruth {
            node_positions: p,
            receiver_positions: cfg.receivers.iter().map(|r| r.true_position).collect(),
            ranges: RangeSet {
                d_01_m: euclidean_range(p[0], p[1]),
                d_02_m: euclidean_range(p[0], p[2]),
                d_12_m: euclidean_range(p[1], p[2]),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Builtin desk-scale experiments
// ---------------------------------------------------------------------------

/// Default link SNR for the builtin experiments, dB.
const BUILTIN_SNR_DB: f64 = 30.0;
/// Timestamp-capture jitter of each builtin node clock, seconds.
const BUILTIN_JITTER_S: f64 = 3e-13;
/// Abstract-mode timestamp error sigma, seconds.
const BUILTIN_ABSTRACT_SIGMA_S: f64 = 7e-12;
/// Per-node transmit+receive chain latency, seconds.
const BUILTIN_HARDWARE_DELAY_S: f64 = 10e-9;

fn builtin_node(id: u32, x_m: f64, y_m: f64) -> NodeSpec {
    NodeSpec {
        id,
        true_position: Position2D::new(x_m, y_m),
        clock: ClockModel {
            offset_s: 0.0,
            drift_ppb: 0.0,
            timestamp_jitter_s: BUILTIN_JITTER_S,
        },
        hardware_delay_s: BUILTIN_HARDWARE_DELAY_S,
    }
}

fn desk_experiment(node2: (f64, f64), rx0: (f64, f64), rx1: (f64, f64)) -> ScenarioConfig {
    ScenarioConfig {
        nodes: vec![
            builtin_node(0, 0.0, 0.0),
            builtin_node(1, 0.0, 1.85),
            builtin_node(2, node2.0, node2.1),
        ],
        receivers: vec![
            ReceiverSpec {
                id: 0,
                true_position: Position2D::new(rx0.0, rx0.1),
                objective: Objective::Focus,
            },
            ReceiverSpec {
                id: 1,
                true_position: Position2D::new(rx1.0, rx1.1),
                objective: Objective::Null,
            },
        ],
        sync_waveform: WaveformSpec {
            kind: WaveformKind::DualLfm,
            carrier_hz: 4.8e9,
            bandwidth_hz: 40e6,
            duration_s: 10e-6,
            amplitude: 1.0,
            rise_fall_s: 5e-9,
            sample_rate_hz: 200e6,
            phase_rad: 0.0,
        },
        beam_waveform: WaveformSpec {
            kind: WaveformKind::Ask,
            carrier_hz: 2.1e9,
            bandwidth_hz: 40e6,
            duration_s: 10e-6,
            amplitude: 1.0,
            rise_fall_s: 5e-9,
            sample_rate_hz: 200e6,
            phase_rad: 0.0,
        },
        channel: ChannelModel {
            snr_db: Some(BUILTIN_SNR_DB),
            per_link_snr_db: Default::default(),
            multipath: vec![],
            abstract_timestamp_sigma_s: BUILTIN_ABSTRACT_SIGMA_S,
        },
        carrier_beam_hz: 2.1e9,
        seed: 1,
        mode: SimMode::WaveformLevel,
    }
}

/// All builtin experiments: the calibration layout, four layouts that
/// move node 2 across the desk, and four that move the two receivers.
pub fn builtin_scenarios() -> Vec<NamedScenario> {
    let rx_a = ((0.8, 5.07), (1.3, 5.07));
    let named = [
        ("calibration", (1.53, 1.03), rx_a),
        ("experiment-a-position-1", (1.93, 1.06), rx_a),
        ("experiment-a-position-2", (1.71, 1.09), rx_a),
        ("experiment-a-position-3", (1.49, 1.04), rx_a),
        ("experiment-a-position-4", (1.16, 1.05), rx_a),
        ("experiment-b-position-1", (1.16, 1.05), ((0.8, 5.07), (1.3, 5.07))),
        ("experiment-b-position-2", (1.16, 1.05), ((0.9, 5.07), (1.4, 5.07))),
        ("experiment-b-position-3", (1.16, 1.05), ((1.0, 5.07), (1.5, 5.07))),
        ("experiment-b-position-4", (1.16, 1.05), ((0.1, 5.07), (1.6, 5.07))),
    ];
    named
        .into_iter()
        .map(|(name, n2, (rx0, rx1))| NamedScenario {
            name: name.to_string(),
            config: desk_experiment(n2, rx0, rx1),
        })
        .collect()
}

/// Fetch one builtin by name.
pub fn builtin_scenario(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .map(|s| s.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POS_TOL_M: f64 = 1e-12;

    #[test]
    fn euclidean_range_matches_hand_values() {
        let a = Position2D::new(0.0, 0.0);
        assert_eq!(euclidean_range(a, Position2D::new(3.0, 4.0)), 5.0);
        assert_eq!(euclidean_range(a, a), 0.0);
        // calibration-layout separations, frozen to full precision
        let d02 = euclidean_range(a, Position2D::new(1.53, 1.03));
        let d12 = euclidean_range(Position2D::new(0.0, 1.85), Position2D::new(1.53, 1.03));
        assert!((d02 - 1.8443969204051498).abs() < POS_TOL_M, "d02 = {d02}");
        assert!((d12 - 1.7358859409534948).abs() < POS_TOL_M, "d12 = {d12}");
    }

    #[test]
    fn range_is_symmetric_and_nonnegative() {
        let a = Position2D::new(-1.2, 0.7);
        let b = Position2D::new(4.4, -2.0);
        assert_eq!(euclidean_range(a, b), euclidean_range(b, a));
        assert!(euclidean_range(a, b) > 0.0);
    }

    #[test]
    fn builtins_cover_the_nine_desk_layouts() {
        let all = builtin_scenarios();
        let names: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "calibration",
                "experiment-a-position-1",
                "experiment-a-position-2",
                "experiment-a-position-3",
                "experiment-a-position-4",
                "experiment-b-position-1",
                "experiment-b-position-2",
                "experiment-b-position-3",
                "experiment-b-position-4",
            ]
        );
        for s in &all {
            s.config.validate().expect("builtin must validate");
            assert_eq!(
                s.config.receivers[0].objective,
                Objective::Focus,
                "{}: receivers are listed focus-first",
                s.name
            );
            assert_eq!(s.config.receivers[1].objective, Objective::Null);
        }
    }

    #[test]
    fn builtin_positions_match_the_bench_layout() {
        let a4 = builtin_scenario("experiment-a-position-4").unwrap();
        assert_eq!(a4.node(2).true_position, Position2D::new(1.16, 1.05));
        assert_eq!(a4.receivers[0].true_position, Position2D::new(0.8, 5.07));
        let b3 = builtin_scenario("experiment-b-position-3").unwrap();
        assert_eq!(b3.receivers[0].true_position, Position2D::new(1.0, 5.07));
        assert_eq!(b3.receivers[1].true_position, Position2D::new(1.5, 5.07));
        assert!(builtin_scenario("no-such-layout").is_none());
    }

    #[test]
    fn builtins_round_trip_through_json() {
        for s in builtin_scenarios() {
            let text = scenario_to_json(&s.config).unwrap();
            let back = scenario_from_json(&text).unwrap();
            assert_eq!(back, s.config, "{} must survive serialize→load", s.name);
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value =
            serde_json::from_str(&scenario_to_json(&builtin_scenario("calibration").unwrap()).unwrap())
                .unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("frequencyy".into(), serde_json::json!(1.0));
        let err = scenario_from_json(&v.to_string()).unwrap_err();
        assert!(
            err.to_string().contains("frequencyy"),
            "typo'd key should be named in the error, got: {err}"
        );
    }

    #[test]
    fn seed_and_mode_have_defaults() {
        let mut v: serde_json::Value =
            serde_json::from_str(&scenario_to_json(&builtin_scenario("calibration").unwrap()).unwrap())
                .unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("seed");
        obj.remove("mode");
        let cfg = scenario_from_json(&v.to_string()).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.mode, SimMode::WaveformLevel);
    }

    #[test]
    fn validation_rejects_broken_scenarios() {
        let base = builtin_scenario("calibration").unwrap();

        let mut two_nodes = base.clone();
        two_nodes.nodes.pop();
        assert!(matches!(two_nodes.validate(), Err(Error::Validation(_))));

        let mut off_anchor = base.clone();
        off_anchor.nodes[0].true_position.x_m = 0.3;
        assert!(off_anchor.validate().is_err(), "node 0 must be pinned to origin");

        let mut mirrored = base.clone();
        mirrored.nodes[2].true_position.x_m = -1.53;
        assert!(mirrored.validate().is_err(), "node 2 must sit at x > 0");

        let mut ask_sync = base.clone();
        ask_sync.sync_waveform.kind = WaveformKind::Ask;
        assert!(ask_sync.validate().is_err(), "ASK carries no timing pulse");

        let mut no_rx = base.clone();
        no_rx.receivers.clear();
        assert!(no_rx.validate().is_err());

        let mut dup_rx = base;
        dup_rx.receivers[1].id = dup_rx.receivers[0].id;
        assert!(dup_rx.validate().is_err());
    }

    #[test]
    fn ground_truth_collects_ranges_in_pair_order() {
        let cfg = builtin_scenario("calibration").unwrap();
        let truth = GroundTruth::from_config(&cfg);
        assert_eq!(truth.ranges.d_01_m, 1.85);
        assert!((truth.ranges.d_02_m - 1.8443969204051498).abs() < POS_TOL_M);
        assert!((truth.ranges.d_12_m - 1.7358859409534948).abs() < POS_TOL_M);
        assert_eq!(truth.receiver_positions.len(), 2);
    }

    #[test]
    fn objective_gains_follow_receiver_order() {
        let cfg = builtin_scenario("experiment-b-position-2").unwrap();
        assert_eq!(cfg.objective_gains(), vec![1.0, 0.0]);
    }
}
