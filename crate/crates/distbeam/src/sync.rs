//! Two-way time transfer between free-running node clocks, at either
//! fidelity level, plus the timestamp algebra that turns one exchange
//! into a propagation-delay estimate, a clock-offset estimate, and —
//! after calibration — a range.
//!
//! Exchange roles: the higher-id node *initiates* (transmits first) and
//! the lower-id node *responds*. Hardware chain latency is lumped into
//! each node's receive timestamps; the two-way average then sees the
//! pair mean `(H_i + H_j)/2`, which is exactly what calibration against
//! a known baseline removes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{add_awgn_scaled, estimate_arrival};
use crate::scenario::{euclidean_range, NodeSpec, ScenarioConfig, SimMode};
use crate::waveform::{pulse_value, synth, SampledWaveform};
use crate::SPEED_OF_LIGHT_M_S;

/// Local time the initiator fires its pulse at, seconds on its clock.
pub const FORWARD_TX_LOCAL_S: f64 = 20e-6;
/// Local time the responder fires the reply at, seconds on its clock.
pub const REPLY_TX_LOCAL_S: f64 = 120e-6;
/// How early a capture window opens ahead of the scheduled transmit
/// instant, to absorb coarse clock misalignment and time of flight.
pub const CAPTURE_GUARD_S: f64 = 750e-9;

// ---------------------------------------------------------------------------
// Clocks
// ---------------------------------------------------------------------------

/// Free-running oscillator: `local = global + offset + drift·global`,
/// plus white jitter on every captured timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockModel {
    /// Constant offset from global time, seconds.
    pub offset_s: f64,
    /// Fractional rate error, parts per billion.
    pub drift_ppb: f64,
    /// 1σ of the white error added to each captured timestamp, seconds.
    /// Models quantizer/PLL wobble, not the signal path.
    pub timestamp_jitter_s: f64,
}

impl ClockModel {
    pub(crate) fn validate(&self, node: u32) -> Result<()> {
        for (name, v) in [
            ("offset_s", self.offset_s),
            ("drift_ppb", self.drift_ppb),
            ("timestamp_jitter_s", self.timestamp_jitter_s),
        ] {
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "node {node} clock {name} must be finite, got {v}"
                )));
            }
        }
        if self.timestamp_jitter_s < 0.0 {
            return Err(Error::Validation(format!(
                "node {node} timestamp_jitter_s must be non-negative"
            )));
        }
        if self.drift_ppb.abs() >= 1e6 {
            return Err(Error::Validation(format!(
                "node {node} drift_ppb {} is beyond any plausible oscillator",
                self.drift_ppb
            )));
        }
        Ok(())
    }
}

/// Exact reading of a clock at a global instant (no jitter).
pub fn local_time_exact(clock: &ClockModel, global_s: f64) -> f64 {
    global_s + clock.offset_s + clock.drift_ppb * 1e-9 * global_s
}

/// Jittered timestamp a node would actually record at a global instant.
pub fn local_time<R: Rng + ?Sized>(clock: &ClockModel, global_s: f64, rng: &mut R) -> f64 {
    local_time_exact(clock, global_s) + timestamp_jitter(clock, rng)
}

/// Invert the clock map: global instant at which this clock reads
/// `local_s`.
pub fn global_from_local(clock: &ClockModel, local_s: f64) -> f64 {
    (local_s - clock.offset_s) / (1.0 + clock.drift_ppb * 1e-9)
}

fn timestamp_jitter<R: Rng + ?Sized>(clock: &ClockModel, rng: &mut R) -> f64 {
    if clock.timestamp_jitter_s <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, clock.timestamp_jitter_s)
        .expect("jitter sigma validated finite and non-negative")
        .sample(rng)
}

/// Retune a clock by an estimated offset: the returned clock reads
/// `offset − estimate` so that a perfect estimate zeroes the offset.
/// For a quad's *initiator*, the estimate of its own offset is
/// `−est_clock_offset(quad)`.
pub fn apply_sync_correction(clock: &ClockModel, offset_estimate_s: f64) -> ClockModel {
    ClockModel {
        offset_s: clock.offset_s - offset_estimate_s,
        ..*clock
    }
}

// ---------------------------------------------------------------------------
// Channel
// ---------------------------------------------------------------------------

/// One extra propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultipathTap {
    /// Delay beyond the direct path, seconds (> 0).
    pub excess_delay_s: f64,
    /// Amplitude relative to the direct path, linear.
    pub relative_amplitude: f64,
}

/// Link impairments shared by all exchanges of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    /// Default link SNR, dB; `null` disables noise entirely.
    pub snr_db: Option<f64>,
    /// Per-link overrides keyed `"i-j"` with `i < j`.
    #[serde(default)]
    pub per_link_snr_db: BTreeMap<String, f64>,
    /// Extra propagation paths applied to both legs of every exchange.
    #[serde(default)]
    pub multipath: Vec<MultipathTap>,
    /// 1σ timestamp error in abstract mode, seconds.
    pub abstract_timestamp_sigma_s: f64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() && !(snr.is_infinite() && snr > 0.0) {
                return Err(Error::Validation(format!(
                    "snr_db must be finite or +inf, got {snr}"
                )));
            }
        }
        for (key, snr) in &self.per_link_snr_db {
            let ok = key
                .split_once('-')
                .and_then(|(a, b)| Some((a.parse::<u32>().ok()?, b.parse::<u32>().ok()?)))
                .map(|(a, b)| a < b && b <= 2)
                .unwrap_or(false);
            if !ok {
                return Err(Error::Validation(format!(
                    "per-link SNR key {key:?} must look like \"i-j\" with i < j ≤ 2"
                )));
            }
            if !snr.is_finite() {
                return Err(Error::Validation(format!(
                    "per-link SNR for {key} must be finite, got {snr}"
                )));
            }
        }
        for (i, tap) in self.multipath.iter().enumerate() {
            if tap.excess_delay_s <= 0.0 || !tap.excess_delay_s.is_finite() {
                return Err(Error::Validation(format!(
                    "multipath tap {i}: excess_delay_s must be positive, got {}",
                    tap.excess_delay_s
                )));
            }
            if tap.relative_amplitude < 0.0 || !tap.relative_amplitude.is_finite() {
                return Err(Error::Validation(format!(
                    "multipath tap {i}: relative_amplitude must be non-negative"
                )));
            }
        }
        if self.abstract_timestamp_sigma_s < 0.0 || !self.abstract_timestamp_sigma_s.is_finite() {
            return Err(Error::Validation(
                "abstract_timestamp_sigma_s must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// SNR for the link between nodes `a` and `b`, honoring per-link
    /// overrides; `None` means noiseless.
    pub fn link_snr_db(&self, a: u32, b: u32) -> Option<f64> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.per_link_snr_db
            .get(&format!("{lo}-{hi}"))
            .copied()
            .or(self.snr_db)
    }
}

// ---------------------------------------------------------------------------
// Exchange and its algebra
// ---------------------------------------------------------------------------

/// The four timestamps of one two-way exchange, each on its owner's
/// clock. Field order follows the protocol: the initiator transmits,
/// the responder receives, the responder replies, the initiator
/// receives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampQuad {
    /// (responder, initiator) node ids, responder lower.
    pub pair: (u32, u32),
    pub t_tx_initiator_s: f64,
    pub t_rx_responder_s: f64,
    pub t_tx_responder_s: f64,
    pub t_rx_initiator_s: f64,
}

/// Propagation delay estimated from one exchange: the mean of the two
/// one-way intervals, which cancels any constant clock offset.
pub fn est_prop_delay(q: &TimestampQuad) -> f64 {
    0.5 * ((q.t_rx_responder_s - q.t_tx_initiator_s) + (q.t_rx_initiator_s - q.t_tx_responder_s))
}

/// Clock offset of the *responder* relative to the *initiator*
/// (responder − initiator) estimated from one exchange: half the
/// difference of the one-way intervals, which cancels propagation
/// delay. The initiator aligns itself by applying the negation via
/// [`apply_sync_correction`].
pub fn est_clock_offset(q: &TimestampQuad) -> f64 {
    0.5 * ((q.t_rx_responder_s - q.t_tx_initiator_s) - (q.t_rx_initiator_s - q.t_tx_responder_s))
}

/// Residual delay a pair shows at a surveyed true range — the lumped
/// hardware latency the estimator cannot distinguish from flight time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub pair: (u32, u32),
    /// Seconds of estimated delay that are *not* propagation.
    pub tau_cal_s: f64,
}

/// Derive a pair's calibration constant from an exchange run at a known
/// separation.
pub fn calibrate(q: &TimestampQuad, true_range_m: f64) -> CalibrationRecord {
    CalibrationRecord {
        pair: q.pair,
        tau_cal_s: est_prop_delay(q) - true_range_m / SPEED_OF_LIGHT_M_S,
    }
}

/// Range between a quad's pair after removing their calibrated hardware
/// delay.
pub fn est_range(q: &TimestampQuad, cal: &CalibrationRecord) -> Result<f64> {
    if cal.pair != q.pair {
        return Err(Error::Validation(format!(
            "calibration for pair {:?} applied to an exchange between {:?}",
            cal.pair, q.pair
        )));
    }
    Ok((est_prop_delay(q) - cal.tau_cal_s) * SPEED_OF_LIGHT_M_S)
}

/// Simulate one two-way exchange between `pair.1` (initiator) and
/// `pair.0` (responder) at the scenario's fidelity level.
///
/// In waveform mode each leg synthesizes the sync pulse, propagates it
/// through the direct path plus any multipath taps (each tap rotating
/// the baseband by its carrier phase), captures a guarded window on the
/// receiver's clock, adds link noise, and matched-filters for the
/// arrival. Abstract mode forms the same timestamps directly from
/// geometry plus a Gaussian error (multipath and DAC grid alignment are
/// waveform-level phenomena and are ignored there). Timestamp jitter
/// applies in both modes. Draw order per exchange is fixed: initiator
/// tx-grid alignment, initiator-tx jitter, forward-leg channel
/// randomness, responder-rx jitter, responder tx-grid alignment,
/// responder-tx jitter, reply-leg channel randomness, initiator-rx
/// jitter.
pub fn run_exchange<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    pair: (u32, u32),
    rng: &mut R,
) -> Result<TimestampQuad> {
    if pair.0 >= pair.1 || pair.1 > 2 {
        return Err(Error::Validation(format!(
            "exchange pair must be (lo, hi) with hi ≤ 2, got {pair:?}"
        )));
    }
    let responder = cfg.node(pair.0);
    let initiator = cfg.node(pair.1);
    let tof_s =
        euclidean_range(responder.true_position, initiator.true_position) / SPEED_OF_LIGHT_M_S;

    match cfg.mode {
        SimMode::AbstractError => abstract_exchange(cfg, pair, responder, initiator, tof_s, rng),
        SimMode::WaveformLevel => waveform_exchange(cfg, pair, responder, initiator, tof_s, rng),
    }
}

fn abstract_exchange<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    pair: (u32, u32),
    responder: &NodeSpec,
    initiator: &NodeSpec,
    tof_s: f64,
    rng: &mut R,
) -> Result<TimestampQuad> {
    let sigma = cfg.channel.abstract_timestamp_sigma_s;
    let meas_err = |rng: &mut R| -> f64 {
        if sigma <= 0.0 {
            0.0
        } else {
            Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
        }
    };

    // forward leg: initiator -> responder
    let t_tx_initiator_s = FORWARD_TX_LOCAL_S + timestamp_jitter(&initiator.clock, rng);
    let g_tx = global_from_local(&initiator.clock, FORWARD_TX_LOCAL_S);
    let t_rx_responder_s = local_time(&responder.clock, g_tx + tof_s, rng)
        + responder.hardware_delay_s
        + meas_err(rng);

    // reply leg: responder -> initiator
    let t_tx_responder_s = REPLY_TX_LOCAL_S + timestamp_jitter(&responder.clock, rng);
    let g_reply = global_from_local(&responder.clock, REPLY_TX_LOCAL_S);
    let t_rx_initiator_s = local_time(&initiator.clock, g_reply + tof_s, rng)
        + initiator.hardware_delay_s
        + meas_err(rng);

    Ok(TimestampQuad {
        pair,
        t_tx_initiator_s,
        t_rx_responder_s,
        t_tx_responder_s,
        t_rx_initiator_s,
    })
}

fn waveform_exchange<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    pair: (u32, u32),
    responder: &NodeSpec,
    initiator: &NodeSpec,
    tof_s: f64,
    rng: &mut R,
) -> Result<TimestampQuad> {
    let reference = synth(&cfg.sync_waveform)?;
    let signal_power = reference.mean_power();
    let snr_db = cfg.channel.link_snr_db(pair.0, pair.1);
    // emissions snap to the transmitter's DAC grid: anywhere within one
    // sample period of the nominal schedule. The timestamp records the
    // true emission instant, so the algebra stays unbiased — but each
    // leg's sampling phase decorrelates, which keeps the interpolator's
    // sub-sample bias from stacking across legs and exchanges.
    let sample_period_s = 1.0 / cfg.sync_waveform.sample_rate_hz;

    // forward leg: initiator -> responder
    let tx_grid_fwd_s = rng.gen_range(0.0..sample_period_s);
    let t_tx_initiator_s =
        FORWARD_TX_LOCAL_S + tx_grid_fwd_s + timestamp_jitter(&initiator.clock, rng);
    let t_rx_responder_s = waveform_leg(
        cfg,
        &reference,
        signal_power,
        snr_db,
        initiator,
        responder,
        FORWARD_TX_LOCAL_S,
        tx_grid_fwd_s,
        tof_s,
        pair,
        "forward",
        rng,
    )? + timestamp_jitter(&responder.clock, rng);

    // reply leg: responder -> initiator
    let tx_grid_rep_s = rng.gen_range(0.0..sample_period_s);
    let t_tx_responder_s =
        REPLY_TX_LOCAL_S + tx_grid_rep_s + timestamp_jitter(&responder.clock, rng);
    let t_rx_initiator_s = waveform_leg(
        cfg,
        &reference,
        signal_power,
        snr_db,
        responder,
        initiator,
        REPLY_TX_LOCAL_S,
        tx_grid_rep_s,
        tof_s,
        pair,
        "reply",
        rng,
    )? + timestamp_jitter(&initiator.clock, rng);

    Ok(TimestampQuad {
        pair,
        t_tx_initiator_s,
        t_rx_responder_s,
        t_tx_responder_s,
        t_rx_initiator_s,
    })
}

/// One radio leg at waveform level: returns the matched-filter arrival
/// time on the receiver's clock (jitter not yet applied).
#[allow(clippy::too_many_arguments)]
fn waveform_leg<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    reference: &SampledWaveform,
    signal_power: f64,
    snr_db: Option<f64>,
    tx: &NodeSpec,
    rx: &NodeSpec,
    sched_local_s: f64,
    tx_grid_s: f64,
    tof_s: f64,
    pair: (u32, u32),
    leg: &str,
    rng: &mut R,
) -> Result<f64> {
    let spec = &cfg.sync_waveform;
    let fs = spec.sample_rate_hz;
    let half = spec.duration_s / 2.0;
    let carrier = spec.carrier_hz;

    // leading edge leaves the transmit antenna when the tx clock reads
    // the scheduled instant plus the DAC grid alignment
    let g_edge = global_from_local(&tx.clock, sched_local_s + tx_grid_s);

    // every propagation path: (total delay, complex baseband coefficient)
    let mut paths = vec![(
        tof_s,
        Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * carrier * tof_s),
    )];
    for tap in &cfg.channel.multipath {
        let delay = tof_s + tap.excess_delay_s;
        paths.push((
            delay,
            Complex64::from_polar(
                tap.relative_amplitude,
                -2.0 * std::f64::consts::PI * carrier * delay,
            ),
        ));
    }

    // the receiver opens its window ahead of the *nominally shared*
    // schedule on its own clock; the guard absorbs clock disagreement
    // and flight time
    let window_local = sched_local_s - CAPTURE_GUARD_S;
    let guard_samples = (CAPTURE_GUARD_S * fs).round() as usize;
    let n_capture = reference.samples.len() + 2 * guard_samples;

    let samples: Vec<Complex64> = (0..n_capture)
        .map(|k| {
            let g_sample = global_from_local(&rx.clock, window_local + k as f64 / fs);
            // the receive chain delays the signal before the ADC sees it
            let g_effective = g_sample - rx.hardware_delay_s;
            paths
                .iter()
                .map(|&(delay, coeff)| {
                    coeff * pulse_value(spec, (g_effective - g_edge - delay) - half)
                })
                .sum()
        })
        .collect();
    let mut capture = SampledWaveform {
        samples,
        sample_rate_hz: fs,
        epoch_s: window_local,
    };
    if let Some(snr) = snr_db {
        add_awgn_scaled(&mut capture, signal_power, snr, rng);
    }

    match estimate_arrival(&capture, reference) {
        Ok(est) => Ok(est.arrival_s),
        Err(Error::Detection(msg)) => Err(Error::Detection(format!(
            "exchange {}-{} {leg} leg: {msg}",
            pair.0, pair.1
        ))),
        Err(other) => Err(other),
    }
}
