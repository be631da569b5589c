//! Complex-baseband pulse synthesis: two-tone, LFM, dual-band LFM, CW,
//! and ASK pulse trains, plus raised-cosine edge shaping and raw-IQ
//! file dumps.
//!
//! Correlation pulses are centered: sample `k` sits at
//! `t = k/fs − T/2` and the sampled record carries `epoch_s = −T/2`, so
//! a pulse's leading edge is at its epoch and arrival timestamps later
//! reference that edge. ASK trains start at `t = 0` (`epoch_s = 0`).
//!
//! Every synthesizer is backed by a continuous-time evaluator
//! ([`pulse_value`] / [`ask_value`]), which the channel simulation uses
//! to form received captures at exact fractional delays instead of
//! resampling.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pulse families the synthesizer knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    /// Two CW tones at ±bandwidth/2 about the carrier.
    TwoTone,
    /// Single linear chirp sweeping the full bandwidth.
    Lfm,
    /// Two simultaneous half-band chirps (lower and upper halves of the
    /// band, both sweeping upward), trading a little correlation width
    /// for an unambiguous peak.
    DualLfm,
    /// On-off keying of the carrier by a bit pattern.
    Ask,
    /// Unmodulated carrier.
    Cw,
}

/// Parametric description of one transmit pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSpec {
    pub kind: WaveformKind,
    /// RF carrier, Hz. Baseband synthesis never mixes this in; it drives
    /// the phase arithmetic of whoever consumes the pulse.
    pub carrier_hz: f64,
    /// Total swept/occupied bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Pulse (or full pattern) duration, seconds.
    pub duration_s: f64,
    /// Peak amplitude of a single component, linear.
    pub amplitude: f64,
    /// Raised-cosine rise and fall time applied at each edge, seconds.
    pub rise_fall_s: f64,
    /// Output sampling rate, Sa/s.
    pub sample_rate_hz: f64,
    /// Initial carrier phase, radians.
    #[serde(default)]
    pub phase_rad: f64,
}

/// Hard cap on samples a single synthesis may produce.
const MAX_SYNTH_SAMPLES: f64 = 2e7;

impl WaveformSpec {
    /// Number of samples a synthesis of this spec produces.
    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    /// Validate physical plausibility; `label` names the offending
    /// waveform in error messages.
    pub fn validate(&self, label: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("{label}: {msg}")));
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("duration_s", self.duration_s),
            ("amplitude", self.amplitude),
            ("rise_fall_s", self.rise_fall_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("phase_rad", self.phase_rad),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.carrier_hz <= 0.0 {
            return bad(format!("carrier_hz must be positive, got {}", self.carrier_hz));
        }
        let needs_bandwidth = self.kind != WaveformKind::Cw;
        if needs_bandwidth && self.bandwidth_hz <= 0.0 {
            return bad(format!("bandwidth_hz must be positive, got {}", self.bandwidth_hz));
        }
        if self.bandwidth_hz < 0.0 {
            return bad(format!("bandwidth_hz must be non-negative, got {}", self.bandwidth_hz));
        }
        if self.duration_s <= 0.0 || self.sample_rate_hz <= 0.0 || self.amplitude <= 0.0 {
            return bad("duration_s, sample_rate_hz and amplitude must be positive".into());
        }
        if self.bandwidth_hz > self.sample_rate_hz {
            return bad(format!(
                "bandwidth {} Hz does not fit the complex sampling rate {} Sa/s",
                self.bandwidth_hz, self.sample_rate_hz
            ));
        }
        if self.rise_fall_s < 0.0 || 2.0 * self.rise_fall_s > self.duration_s {
            return bad(format!(
                "rise_fall_s {} must be non-negative and leave room inside duration {}",
                self.rise_fall_s, self.duration_s
            ));
        }
        let n = self.duration_s * self.sample_rate_hz;
        if n < 8.0 {
            return bad(format!("pulse is only {n:.1} samples long; need at least 8"));
        }
        if n > MAX_SYNTH_SAMPLES {
            return Err(Error::Resource(format!(
                "{label}: {n:.0} samples exceeds the synthesis cap of {MAX_SYNTH_SAMPLES:.0}"
            )));
        }
        Ok(())
    }
}

/// On-off keying pattern: bit array plus the data rate it is clocked at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitPattern {
    /// One entry per slot, each 0 or 1.
    pub bits: Vec<u8>,
    /// Slot rate, Sa/s; each bit occupies `1/data_rate_hz` seconds.
    pub data_rate_hz: f64,
}

impl BitPattern {
    pub fn validate(&self) -> Result<()> {
        if self.bits.is_empty() {
            return Err(Error::Validation("bit pattern is empty".into()));
        }
        if let Some(b) = self.bits.iter().find(|b| **b > 1) {
            return Err(Error::Validation(format!(
                "bit pattern entries must be 0 or 1, got {b}"
            )));
        }
        if self.data_rate_hz <= 0.0 || !self.data_rate_hz.is_finite() {
            return Err(Error::Validation(format!(
                "data_rate_hz must be positive, got {}",
                self.data_rate_hz
            )));
        }
        Ok(())
    }

    /// Duration of one slot, seconds.
    pub fn slot_duration_s(&self) -> f64 {
        1.0 / self.data_rate_hz
    }

    /// Duration of the whole pattern, seconds.
    pub fn span_s(&self) -> f64 {
        self.bits.len() as f64 / self.data_rate_hz
    }
}

/// Uniformly sampled complex baseband record.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    /// Time of sample 0 on the owning clock, seconds. Sample `k` is at
    /// `epoch_s + k / sample_rate_hz`.
    pub epoch_s: f64,
}

impl SampledWaveform {
    /// Time of sample `k`, seconds.
    pub fn time_of(&self, k: usize) -> f64 {
        self.epoch_s + k as f64 / self.sample_rate_hz
    }

    /// Record length, seconds.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Average |s|² over the record.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Largest |s| in the record.
    pub fn peak_amplitude(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Continuous-time evaluators
// ---------------------------------------------------------------------------

/// Raised-cosine edge window over `[0, span_s]`: zero at the boundaries,
/// unity once `rise_s` in from either edge.
fn edge_envelope(u: f64, span_s: f64, rise_s: f64) -> f64 {
    if u < 0.0 || u > span_s {
        return 0.0;
    }
    if rise_s <= 0.0 {
        return 1.0;
    }
    if u < rise_s {
        0.5 * (1.0 - (PI * u / rise_s).cos())
    } else if u > span_s - rise_s {
        0.5 * (1.0 - (PI * (span_s - u) / rise_s).cos())
    } else {
        1.0
    }
}

/// Evaluate a correlation pulse (anything but ASK) at time `t` relative
/// to the pulse center; zero outside `[−T/2, T/2]`.
pub fn pulse_value(spec: &WaveformSpec, t: f64) -> Complex64 {
    debug_assert!(
        spec.kind != WaveformKind::Ask,
        "ASK is data-bearing; evaluate it with ask_value"
    );
    let half = spec.duration_s / 2.0;
    let env = edge_envelope(t + half, spec.duration_s, spec.rise_fall_s);
    if env == 0.0 {
        return Complex64::ZERO;
    }
    let df = spec.bandwidth_hz;
    let kernel = match spec.kind {
        WaveformKind::Cw => Complex64::new(1.0, 0.0),
        // tones at ±Δf/2 about the carrier
        WaveformKind::TwoTone => {
            Complex64::from_polar(1.0, -PI * df * t) + Complex64::from_polar(1.0, PI * df * t)
        }
        // instantaneous frequency (Δf/T)·t sweeps −Δf/2 → +Δf/2
        WaveformKind::Lfm => Complex64::from_polar(1.0, PI * df / spec.duration_s * t * t),
        // two half-band chirps, both sweeping up: lower covers
        // [−Δf/2, 0], upper [0, +Δf/2]
        WaveformKind::DualLfm => {
            let quad = 2.0 * PI * df / (4.0 * spec.duration_s) * t * t;
            let split = 2.0 * PI * df / 4.0 * t;
            Complex64::from_polar(1.0, quad - split) + Complex64::from_polar(1.0, quad + split)
        }
        WaveformKind::Ask => Complex64::ZERO,
    };
    spec.amplitude * env * Complex64::from_polar(1.0, spec.phase_rad) * kernel
}

/// Evaluate an ASK train at time `t` past the start of slot 0; zero
/// outside the pattern. Each 1-slot carries a sub-pulse with its own
/// raised-cosine edges.
pub fn ask_value(spec: &WaveformSpec, pattern: &BitPattern, t: f64) -> Complex64 {
    let slot = pattern.slot_duration_s();
    if t < 0.0 || t >= pattern.span_s() {
        return Complex64::ZERO;
    }
    let idx = ((t / slot) as usize).min(pattern.bits.len() - 1);
    if pattern.bits[idx] == 0 {
        return Complex64::ZERO;
    }
    let env = edge_envelope(t - idx as f64 * slot, slot, spec.rise_fall_s);
    spec.amplitude * env * Complex64::from_polar(1.0, spec.phase_rad)
}

// ---------------------------------------------------------------------------
// Synthesizers
// ---------------------------------------------------------------------------

/// Synthesize any correlation pulse per its spec.
pub fn synth(spec: &WaveformSpec) -> Result<SampledWaveform> {
    spec.validate("waveform")?;
    if spec.kind == WaveformKind::Ask {
        return Err(Error::Synthesis(
            "ASK trains are data-bearing; call synth_ask_train with a bit pattern".into(),
        ));
    }
    let n = spec.sample_count();
    let fs = spec.sample_rate_hz;
    let half = spec.duration_s / 2.0;
    let samples = (0..n).map(|k| pulse_value(spec, k as f64 / fs - half)).collect();
    Ok(SampledWaveform {
        samples,
        sample_rate_hz: fs,
        epoch_s: -half,
    })
}

fn synth_kind(spec: &WaveformSpec, want: WaveformKind, name: &str) -> Result<SampledWaveform> {
    if spec.kind != want {
        return Err(Error::Synthesis(format!(
            "{name} asked to synthesize a {:?} spec",
            spec.kind
        )));
    }
    synth(spec)
}

/// Two tones at ±bandwidth/2; beats at the tone spacing.
pub fn synth_two_tone(spec: &WaveformSpec) -> Result<SampledWaveform> {
    synth_kind(spec, WaveformKind::TwoTone, "synth_two_tone")
}

/// Full-band linear chirp.
pub fn synth_lfm(spec: &WaveformSpec) -> Result<SampledWaveform> {
    synth_kind(spec, WaveformKind::Lfm, "synth_lfm")
}

/// Simultaneous lower/upper half-band chirps.
pub fn synth_dual_lfm(spec: &WaveformSpec) -> Result<SampledWaveform> {
    synth_kind(spec, WaveformKind::DualLfm, "synth_dual_lfm")
}

/// On-off-keyed pulse train clocked by `pattern`. The pattern must span
/// exactly the spec's duration.
pub fn synth_ask_train(spec: &WaveformSpec, pattern: &BitPattern) -> Result<SampledWaveform> {
    spec.validate("ask waveform")?;
    pattern.validate()?;
    if spec.kind != WaveformKind::Ask {
        return Err(Error::Synthesis(format!(
            "synth_ask_train asked to synthesize a {:?} spec",
            spec.kind
        )));
    }
    let span = pattern.span_s();
    if (span - spec.duration_s).abs() > 1e-12 {
        return Err(Error::Synthesis(format!(
            "pattern spans {span:.9} s but the pulse duration is {:.9} s",
            spec.duration_s
        )));
    }
    if 2.0 * spec.rise_fall_s > pattern.slot_duration_s() {
        return Err(Error::Synthesis(format!(
            "rise/fall {} s does not fit inside a {} s slot",
            spec.rise_fall_s,
            pattern.slot_duration_s()
        )));
    }
    let n = spec.sample_count();
    let fs = spec.sample_rate_hz;
    let samples = (0..n).map(|k| ask_value(spec, pattern, k as f64 / fs)).collect();
    Ok(SampledWaveform {
        samples,
        sample_rate_hz: fs,
        epoch_s: 0.0,
    })
}

/// Multiply a sampled record by raised-cosine edges over its own span.
pub fn apply_edge_taper(wf: &mut SampledWaveform, rise_fall_s: f64) {
    let span = wf.duration_s();
    let fs = wf.sample_rate_hz;
    for (k, s) in wf.samples.iter_mut().enumerate() {
        *s *= edge_envelope(k as f64 / fs, span, rise_fall_s);
    }
}

// ---------------------------------------------------------------------------
// Standard transmit patterns
// ---------------------------------------------------------------------------

/// Slot schedule the three transmitters key the beam carrier with:
/// 15 slots at 1.5 MSa/s (10 µs per pattern). Odd slots carry the
/// payload — slots 1/3/5 are the three solo transmissions, 7/9/11 the
/// three pairings, and slot 13 is all three nodes together, so one
/// capture exposes every combination needed to measure coherent gain.
/// Even slots stay silent to keep the combinations separable.
pub fn staggered_tx_patterns() -> [BitPattern; 3] {
    const RATE: f64 = 1.5e6;
    let from_slots = |slots: &[usize]| {
        let mut bits = vec![0u8; 15];
        for &s in slots {
            bits[s] = 1;
        }
        BitPattern {
            bits,
            data_rate_hz: RATE,
        }
    };
    [
        from_slots(&[1, 7, 11, 13]),
        from_slots(&[3, 7, 9, 13]),
        from_slots(&[5, 9, 11, 13]),
    ]
}

// ---------------------------------------------------------------------------
// Raw-IQ dumps
// ---------------------------------------------------------------------------

/// Sidecar metadata stored beside a raw IQ dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqSidecar {
    /// Always "f32le-interleaved-iq": little-endian f32 pairs, I then Q.
    pub format: String,
    pub label: String,
    pub sample_rate_hz: f64,
    pub epoch_s: f64,
    pub n_samples: usize,
}

/// Binary layout tag written into every sidecar.
pub const IQ_FORMAT: &str = "f32le-interleaved-iq";

/// Write `<dir>/<stem>.iq` (interleaved little-endian f32 I/Q) plus a
/// `<stem>.json` sidecar; returns both paths.
pub fn write_iq_dump(wf: &SampledWaveform, dir: &Path, stem: &str) -> Result<[PathBuf; 2]> {
    std::fs::create_dir_all(dir)?;
    let iq_path = dir.join(format!("{stem}.iq"));
    let mut bytes = Vec::with_capacity(wf.samples.len() * 8);
    for s in &wf.samples {
        bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(&iq_path)?;
    f.write_all(&bytes)?;
    let sidecar = IqSidecar {
        format: IQ_FORMAT.into(),
        label: stem.into(),
        sample_rate_hz: wf.sample_rate_hz,
        epoch_s: wf.epoch_s,
        n_samples: wf.samples.len(),
    };
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok([iq_path, json_path])
}

/// Read back a dump written by [`write_iq_dump`].
pub fn read_iq_dump(iq_path: &Path) -> Result<SampledWaveform> {
    let sidecar_path = iq_path.with_extension("json");
    let sidecar: IqSidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar_path)?)?;
    if sidecar.format != IQ_FORMAT {
        return Err(Error::Validation(format!(
            "unsupported IQ dump format {:?}",
            sidecar.format
        )));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(iq_path)?.read_to_end(&mut bytes)?;
    if bytes.len() != sidecar.n_samples * 8 {
        return Err(Error::Validation(format!(
            "IQ dump holds {} bytes but the sidecar promises {} samples",
            bytes.len(),
            sidecar.n_samples
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
            Complex64::new(re, im)
        })
        .collect();
    Ok(SampledWaveform {
        samples,
        sample_rate_hz: sidecar.sample_rate_hz,
        epoch_s: sidecar.epoch_s,
    })
}
