//! Arrival-time estimation: FFT matched filtering, quadratic sub-sample
//! peak refinement, AWGN injection, and correlation-shape metrics.
//!
//! Lag convention: a correlation value at lag `l` measures how well the
//! received record matches the reference delayed by `l` samples, so the
//! peak lag plus the capture epoch is the arrival time of the reference
//! pulse's leading edge on the capturing clock.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::waveform::SampledWaveform;

/// A detection must clear the median correlation magnitude by this many
/// dB before an arrival time is reported.
pub const DETECTION_THRESHOLD_DB: f64 = 10.0;

/// Magnitude of a cross-correlation over all full and partial overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub magnitudes: Vec<f64>,
    /// Index holding lag 0 (reference not shifted).
    pub lag0_index: usize,
    pub sample_rate_hz: f64,
}

impl CorrelationSeries {
    /// Convert a (possibly fractional) series index to a lag in seconds.
    pub fn lag_s(&self, index: f64) -> f64 {
        (index - self.lag0_index as f64) / self.sample_rate_hz
    }
}

/// Sub-sample peak location produced by quadratic interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedPeak {
    /// Fractional series index of the interpolated apex.
    pub index: f64,
    /// False when interpolation was impossible (peak on a boundary,
    /// degenerate curvature) and the integer peak was returned as-is.
    pub refined: bool,
}

/// One detected arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalEstimate {
    /// Leading-edge arrival time on the capturing clock, seconds.
    pub arrival_s: f64,
    /// Correlation magnitude at the detected (integer) peak.
    pub peak_magnitude: f64,
    /// Whether sub-sample refinement was applied.
    pub refined: bool,
}

/// Shape summary of a correlation magnitude series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidelobeMetrics {
    /// Peak sidelobe level relative to the main peak, dB (negative).
    pub pslr_db: f64,
    /// −3 dB width of the main lobe, seconds.
    pub mainlobe_width_s: f64,
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// Add complex white Gaussian noise at `snr_db` relative to the record's
/// own mean power. `+∞` leaves the record untouched.
pub fn add_awgn<R: Rng + ?Sized>(wf: &mut SampledWaveform, snr_db: f64, rng: &mut R) {
    let p = wf.mean_power();
    add_awgn_scaled(wf, p, snr_db, rng);
}

/// Add complex AWGN sized against an externally supplied signal power —
/// used when the record is a capture window that is mostly silence and
/// the SNR is defined against the pulse itself.
pub fn add_awgn_scaled<R: Rng + ?Sized>(
    wf: &mut SampledWaveform,
    signal_power: f64,
    snr_db: f64,
    rng: &mut R,
) {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return;
    }
    if signal_power <= 0.0 {
        return;
    }
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let per_component = Normal::new(0.0, (noise_power / 2.0).sqrt())
        .expect("noise sigma is finite and non-negative");
    for s in &mut wf.samples {
        *s += Complex64::new(per_component.sample(rng), per_component.sample(rng));
    }
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// Cross-correlate a received record against a reference pulse via FFT.
/// Output index `i` corresponds to lag `i − lag0_index` samples.
pub fn matched_filter(
    rx: &SampledWaveform,
    reference: &SampledWaveform,
) -> Result<CorrelationSeries> {
    if rx.samples.is_empty() || reference.samples.is_empty() {
        return Err(Error::Validation(
            "matched filter needs non-empty rx and reference records".into(),
        ));
    }
    let rel = (rx.sample_rate_hz - reference.sample_rate_hz).abs() / reference.sample_rate_hz;
    if rel > 1e-12 {
        return Err(Error::Validation(format!(
            "sample-rate mismatch: rx at {} Sa/s, reference at {} Sa/s",
            rx.sample_rate_hz, reference.sample_rate_hz
        )));
    }
    let n_rx = rx.samples.len();
    let n_ref = reference.samples.len();
    let n_out = n_rx + n_ref - 1;
    let size = n_out.next_power_of_two();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);

    let mut a = vec![Complex64::ZERO; size];
    a[..n_rx].copy_from_slice(&rx.samples);
    let mut b = vec![Complex64::ZERO; size];
    b[..n_ref].copy_from_slice(&reference.samples);
    fft.process(&mut a);
    fft.process(&mut b);
    for (x, h) in a.iter_mut().zip(&b) {
        *x *= h.conj();
    }
    ifft.process(&mut a);

    // circular index l mod size holds lag l; unwrap negative lags
    let scale = 1.0 / size as f64;
    let lag0_index = n_ref - 1;
    let magnitudes = (0..n_out)
        .map(|i| {
            let lag = i as isize - lag0_index as isize;
            let idx = lag.rem_euclid(size as isize) as usize;
            a[idx].norm() * scale
        })
        .collect();
    Ok(CorrelationSeries {
        magnitudes,
        lag0_index,
        sample_rate_hz: rx.sample_rate_hz,
    })
}

/// Quadratic (three-point) interpolation of a peak's true apex. The
/// offset is clamped to ±half a sample; a clamped or degenerate fit
/// falls back to the integer peak with `refined = false`.
pub fn qls_refine(magnitudes: &[f64], peak_index: usize) -> RefinedPeak {
    if peak_index == 0 || peak_index + 1 >= magnitudes.len() {
        return RefinedPeak {
            index: peak_index as f64,
            refined: false,
        };
    }
    let y_minus = magnitudes[peak_index - 1];
    let y0 = magnitudes[peak_index];
    let y_plus = magnitudes[peak_index + 1];
    let denom = 2.0 * (2.0 * y0 - y_minus - y_plus);
    if denom <= 0.0 || denom.is_nan() {
        return RefinedPeak {
            index: peak_index as f64,
            refined: false,
        };
    }
    let delta = (y_plus - y_minus) / denom;
    if delta.abs() >= 0.5 {
        return RefinedPeak {
            index: peak_index as f64 + delta.clamp(-0.5, 0.5),
            refined: false,
        };
    }
    RefinedPeak {
        index: peak_index as f64 + delta,
        refined: true,
    }
}

/// Matched-filter a capture against a reference pulse and return the
/// leading-edge arrival time of the strongest detection.
pub fn estimate_arrival(
    rx: &SampledWaveform,
    reference: &SampledWaveform,
) -> Result<ArrivalEstimate> {
    let series = matched_filter(rx, reference)?;
    let (peak_index, &peak) = series
        .magnitudes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("series is non-empty");
    if peak <= 0.0 {
        return Err(Error::Detection("capture is identically zero".into()));
    }
    let med = median(&series.magnitudes);
    let threshold = med * 10f64.powf(DETECTION_THRESHOLD_DB / 20.0);
    if peak < threshold {
        return Err(Error::Detection(format!(
            "correlation peak {peak:.3e} is below {threshold:.3e} \
             (median {med:.3e} + {DETECTION_THRESHOLD_DB} dB)"
        )));
    }
    let refined = qls_refine(&series.magnitudes, peak_index);
    // the reference's own time base puts its center at epoch + T/2;
    // subtracting it pins the estimate to the leading edge
    let ref_center = reference.epoch_s + reference.duration_s() / 2.0;
    let arrival_s = rx.epoch_s + series.lag_s(refined.index) - ref_center;
    Ok(ArrivalEstimate {
        arrival_s,
        peak_magnitude: peak,
        refined: refined.refined,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Peak-sidelobe ratio and −3 dB main-lobe width of a correlation
/// series. The main lobe is delimited by the first troughs on either
/// side of the global peak.
pub fn sidelobe_metrics(series: &CorrelationSeries) -> Result<SidelobeMetrics> {
    let m = &series.magnitudes;
    if m.len() < 5 {
        return Err(Error::Validation(
            "correlation series too short for shape metrics".into(),
        ));
    }
    let peak = m
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    let main = m[peak];
    if main <= 0.0 {
        return Err(Error::Validation("series is identically zero".into()));
    }

    // walk down to the first trough on each side
    let mut left = peak;
    while left > 0 && m[left - 1] < m[left] {
        left -= 1;
    }
    let mut right = peak;
    while right + 1 < m.len() && m[right + 1] < m[right] {
        right += 1;
    }
    let side_left = m[..=left].iter().copied().fold(0.0, f64::max);
    let side_right = m[right..].iter().copied().fold(0.0, f64::max);
    let side = if left == 0 && right == m.len() - 1 {
        0.0
    } else {
        side_left.max(side_right)
    };
    let pslr_db = if side > 0.0 {
        20.0 * (side / main).log10()
    } else {
        f64::NEG_INFINITY
    };

    // −3 dB width by linear interpolation on magnitude
    let target = main * 10f64.powf(-3.0 / 20.0);
    let cross = |dir: isize| -> Option<f64> {
        let mut i = peak as isize;
        loop {
            let j = i + dir;
            if j < 0 || j as usize >= m.len() {
                return None;
            }
            if m[j as usize] < target {
                let a = m[i as usize];
                let b = m[j as usize];
                let frac = (a - target) / (a - b);
                return Some(i as f64 + dir as f64 * frac);
            }
            i = j;
        }
    };
    let (l, r) = match (cross(-1), cross(1)) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(Error::Validation(
                "main lobe never drops 3 dB inside the series".into(),
            ))
        }
    };
    Ok(SidelobeMetrics {
        pslr_db,
        mainlobe_width_s: (r - l) / series.sample_rate_hz,
    })
}
