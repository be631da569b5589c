//! Near-field constrained beamforming: spherical-wave steering, exact
//! focus/null weights, field and power-map prediction, received-capture
//! simulation with per-node sync error, and the coherence metrics read
//! off those captures.
//!
//! Convention: the field a weight vector produces at a point is
//! `Σ_n w_n·a(r_n)·e^{−jkr_n}` (no conjugation), so the constraint
//! system is `wᵀC = gᵀ` and the minimum-norm solution is
//! `w = conj(C (CᴴC)⁻¹ ḡ)`. Weights are solved from the *estimated*
//! array geometry; captures are evaluated at the *true* one — that gap
//! is the whole point of the simulation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{euclidean_range, Objective, Position2D, ScenarioConfig};
use crate::waveform::{ask_value, BitPattern, SampledWaveform, WaveformKind};
use crate::SPEED_OF_LIGHT_M_S;

/// Free-space wavenumber at a carrier, rad/m.
pub fn wavenumber(carrier_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * carrier_hz / SPEED_OF_LIGHT_M_S
}

/// Condition-number ceiling beyond which a constraint system is
/// rejected as degenerate.
pub const MAX_CONSTRAINT_CONDITION: f64 = 1e8;

/// Range floor for the spreading amplitude model, metres.
pub const MIN_SPREADING_RANGE_M: f64 = 0.1;

/// How per-element amplitude decays with range in field predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// Unit amplitude everywhere: phase structure only.
    PhaseOnly,
    /// 1/r spherical spreading, floored at [`MIN_SPREADING_RANGE_M`].
    InverseR,
}

impl AmplitudeModel {
    fn amplitude(self, range_m: f64) -> f64 {
        match self {
            AmplitudeModel::PhaseOnly => 1.0,
            AmplitudeModel::InverseR => 1.0 / range_m.max(MIN_SPREADING_RANGE_M),
        }
    }
}

/// Steering matrix from every node to every constraint point: entry
/// (n, m) is `e^{−jk·r}` for node n and point m. Pure phase — wavefront
/// curvature is captured by using exact per-node ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    /// nodes × constraint points.
    pub entries: DMatrix<Complex64>,
}

impl ConstraintMatrix {
    pub fn n_nodes(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.entries.ncols()
    }
}

/// Build the steering matrix for a node layout and constraint points.
pub fn constraint_matrix(
    nodes: &[Position2D],
    points: &[Position2D],
    k_rad_m: f64,
) -> ConstraintMatrix {
    let entries = DMatrix::from_fn(nodes.len(), points.len(), |n, m| {
        let r = euclidean_range(nodes[n], points[m]);
        Complex64::from_polar(1.0, -k_rad_m * r)
    });
    ConstraintMatrix { entries }
}

/// Transmit weights, one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamWeights {
    pub w: Vec<Complex64>,
}

/// Solve for the minimum-norm weights meeting every constraint exactly:
/// unit response at focus points, zero at nulls.
pub fn lcmp_weights(c: &ConstraintMatrix, gains: &[Complex64]) -> Result<BeamWeights> {
    let (n, m) = (c.n_nodes(), c.n_constraints());
    if gains.len() != m {
        return Err(Error::Validation(format!(
            "{} constraint gains supplied for {m} constraint points",
            gains.len()
        )));
    }
    if m == 0 {
        return Err(Error::Validation("no constraint points".into()));
    }
    if m > n {
        return Err(Error::Degenerate(format!(
            "{m} constraints over-determine {n} nodes"
        )));
    }

    // Gram matrix of the steering columns
    let a = c.entries.adjoint() * &c.entries;

    let sv = a.clone().svd(false, false).singular_values;
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let s_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if cond >= MAX_CONSTRAINT_CONDITION {
        // name the most coherent pair of constraint points — almost
        // always two that (nearly) coincide
        let mut worst = (0usize, 1usize, 0.0f64);
        for i in 0..m {
            for j in (i + 1)..m {
                let coh = a[(i, j)].norm() / (a[(i, i)].norm() * a[(j, j)].norm()).sqrt();
                if coh > worst.2 {
                    worst = (i, j, coh);
                }
            }
        }
        return Err(Error::Degenerate(format!(
            "constraint system condition {cond:.2e} exceeds {MAX_CONSTRAINT_CONDITION:.0e}: \
             constraint points {} and {} are indistinguishable to the array \
             (coherence {:.6})",
            worst.0, worst.1, worst.2
        )));
    }

    let g_conj = DVector::from_iterator(m, gains.iter().map(|g| g.conj()));
    let y = a.lu().solve(&g_conj).ok_or_else(|| {
        Error::Degenerate("constraint Gram matrix is numerically singular".into())
    })?;
    let w_vec = &c.entries * y;
    Ok(BeamWeights {
        w: w_vec.iter().map(|z| z.conj()).collect(),
    })
}

/// Scale weights so the largest magnitude is exactly 1 — what a
/// transmitter with a fixed power ceiling would radiate.
pub fn normalize_weights(weights: &BeamWeights) -> Result<BeamWeights> {
    let peak = weights.w.iter().map(|w| w.norm()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::Degenerate(
            "weights are identically zero; nothing to normalize".into(),
        ));
    }
    Ok(BeamWeights {
        w: weights.w.iter().map(|w| w / peak).collect(),
    })
}

/// Complex field the array produces at a point.
pub fn field_at(
    point: Position2D,
    nodes: &[Position2D],
    weights: &BeamWeights,
    k_rad_m: f64,
    model: AmplitudeModel,
) -> Complex64 {
    nodes
        .iter()
        .zip(&weights.w)
        .map(|(node, w)| {
            let r = euclidean_range(*node, point);
            w * model.amplitude(r) * Complex64::from_polar(1.0, -k_rad_m * r)
        })
        .sum()
}

/// Rectangular evaluation grid, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapGrid {
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub y_min_m: f64,
    pub y_max_m: f64,
    pub step_m: f64,
}

impl MapGrid {
    pub fn validate(&self) -> Result<()> {
        if self.step_m <= 0.0 || !self.step_m.is_finite() {
            return Err(Error::Validation(format!(
                "grid step must be positive, got {}",
                self.step_m
            )));
        }
        if self.x_max_m < self.x_min_m || self.y_max_m < self.y_min_m {
            return Err(Error::Validation("grid extent is inverted".into()));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * step).collect()
    }

    /// Grid x coordinates, ascending.
    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.x_min_m, self.x_max_m, self.step_m)
    }

    /// Grid y coordinates, ascending.
    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min_m, self.y_max_m, self.step_m)
    }
}

/// Evaluation-point cap for one power map.
const MAX_MAP_POINTS: usize = 10_000_000;

/// |field|² in dB over a grid; rows indexed by y, columns by x.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub power_db: Vec<Vec<f64>>,
}

impl PowerMap {
    /// Location and level of the hottest grid cell.
    pub fn peak(&self) -> (f64, f64, f64) {
        let mut best = (self.xs[0], self.ys[0], f64::NEG_INFINITY);
        for (iy, row) in self.power_db.iter().enumerate() {
            for (ix, &p) in row.iter().enumerate() {
                if p > best.2 {
                    best = (self.xs[ix], self.ys[iy], p);
                }
            }
        }
        best
    }
}

/// Evaluate the radiated power over a grid.
pub fn power_map(
    grid: &MapGrid,
    nodes: &[Position2D],
    weights: &BeamWeights,
    k_rad_m: f64,
    model: AmplitudeModel,
) -> Result<PowerMap> {
    grid.validate()?;
    let xs = grid.xs();
    let ys = grid.ys();
    if xs.len().saturating_mul(ys.len()) > MAX_MAP_POINTS {
        return Err(Error::Resource(format!(
            "power map of {}×{} points exceeds the {MAX_MAP_POINTS} cap",
            xs.len(),
            ys.len()
        )));
    }
    let power_db = ys
        .iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| {
                    let f = field_at(Position2D::new(x, y), nodes, weights, k_rad_m, model);
                    10.0 * f.norm_sqr().max(1e-30).log10()
                })
                .collect()
        })
        .collect();
    Ok(PowerMap { xs, ys, power_db })
}

// ---------------------------------------------------------------------------
// Received captures and coherence metrics
// ---------------------------------------------------------------------------

/// Complex envelope each receiver sees while the three nodes key their
/// transmit patterns with `weights` applied. Node `n`'s signal arrives
/// delayed by its true range and its residual sync error
/// `sync_error_s[n]`, which shifts the envelope *and* rotates the beam
/// carrier — the mechanism by which picoseconds of clock error destroy
/// coherence. Element amplitudes are unit (pure phase combining), the
/// same convention the constraint matrix uses.
pub fn simulate_rx_capture(
    cfg: &ScenarioConfig,
    weights: &BeamWeights,
    patterns: &[BitPattern; 3],
    sync_error_s: &[f64; 3],
) -> Result<Vec<SampledWaveform>> {
    let spec = &cfg.beam_waveform;
    if spec.kind != WaveformKind::Ask {
        return Err(Error::Validation(format!(
            "capture simulation keys ASK trains, got {:?}",
            spec.kind
        )));
    }
    if weights.w.len() != 3 {
        return Err(Error::Validation(format!(
            "need one weight per node, got {}",
            weights.w.len()
        )));
    }
    for p in patterns {
        p.validate()?;
        if (p.span_s() - spec.duration_s).abs() > 1e-12 {
            return Err(Error::Validation(
                "every transmit pattern must span the beam pulse duration".into(),
            ));
        }
    }
    let nodes: Vec<Position2D> = (0..3).map(|n| cfg.node(n).true_position).collect();
    let fs = spec.sample_rate_hz;
    let f_beam = cfg.carrier_beam_hz;

    let mut captures = Vec::with_capacity(cfg.receivers.len());
    for rx in &cfg.receivers {
        // per-node arrival delay and carrier rotation
        let node_terms: Vec<(f64, Complex64)> = (0..3)
            .map(|n| {
                let delay = euclidean_range(nodes[n], rx.true_position) / SPEED_OF_LIGHT_M_S
                    + sync_error_s[n];
                let coeff = weights.w[n]
                    * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f_beam * delay);
                (delay, coeff)
            })
            .collect();
        let max_delay = node_terms.iter().map(|t| t.0).fold(0.0, f64::max);
        let n_samples = spec.sample_count() + (max_delay * fs).ceil() as usize + 20;
        let samples = (0..n_samples)
            .map(|s| {
                let t = s as f64 / fs;
                node_terms
                    .iter()
                    .zip(patterns)
                    .map(|(&(delay, coeff), pattern)| {
                        // keying envelope carries no amplitude of its
                        // own beyond the spec; weight sits in coeff
                        coeff * ask_value(spec, pattern, t - delay) / spec.amplitude
                    })
                    .sum()
            })
            .collect();
        captures.push(SampledWaveform {
            samples,
            sample_rate_hz: fs,
            epoch_s: 0.0,
        });
    }
    Ok(captures)
}

/// Which slot of the staggered schedule plays which role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SlotRoles {
    /// Slot where only node n transmits, per node.
    pub solo: [usize; 3],
    /// Slot where all three transmit together.
    pub all_on: usize,
    pub n_slots: usize,
}

/// Derive the solo and all-on slots from a pattern triple.
pub fn slot_roles(patterns: &[BitPattern; 3]) -> Result<SlotRoles> {
    let n_slots = patterns[0].bits.len();
    if patterns.iter().any(|p| p.bits.len() != n_slots) {
        return Err(Error::Validation(
            "transmit patterns must share a slot count".into(),
        ));
    }
    let mut solo = [None; 3];
    let mut all_on = None;
    for slot in 0..n_slots {
        let active: Vec<usize> = (0..3).filter(|&n| patterns[n].bits[slot] == 1).collect();
        match active.as_slice() {
            [n] => {
                if solo[*n].is_none() {
                    solo[*n] = Some(slot);
                }
            }
            [_, _, _] if all_on.is_none() => all_on = Some(slot),
            _ => {}
        }
    }
    let solo = [
        solo[0].ok_or_else(|| missing_role("a solo slot for node 0"))?,
        solo[1].ok_or_else(|| missing_role("a solo slot for node 1"))?,
        solo[2].ok_or_else(|| missing_role("a solo slot for node 2"))?,
    ];
    let all_on = all_on.ok_or_else(|| missing_role("an all-on slot"))?;
    Ok(SlotRoles {
        solo,
        all_on,
        n_slots,
    })
}

fn missing_role(what: &str) -> Error {
    Error::Validation(format!("transmit patterns never produce {what}"))
}

/// Mean |s| over the interior of one slot (central 60%, clear of edge
/// tapers and arrival skew).
pub fn slot_mean_amplitude(
    capture: &SampledWaveform,
    slot_duration_s: f64,
    slot: usize,
) -> f64 {
    let fs = capture.sample_rate_hz;
    let lo = ((slot as f64 + 0.2) * slot_duration_s * fs).ceil() as usize;
    let hi = (((slot as f64 + 0.8) * slot_duration_s * fs).floor() as usize)
        .min(capture.samples.len());
    if lo >= hi {
        return 0.0;
    }
    capture.samples[lo..hi].iter().map(|s| s.norm()).sum::<f64>() / (hi - lo) as f64
}

/// Measured transmit coherence at one receiver: combined-slot amplitude
/// over the sum of the solo-slot amplitudes. 1.0 means the three
/// arrivals add perfectly in phase.
pub fn coherent_gain(
    capture: &SampledWaveform,
    roles: &SlotRoles,
    slot_duration_s: f64,
) -> Result<f64> {
    let combined = slot_mean_amplitude(capture, slot_duration_s, roles.all_on);
    let solo_sum: f64 = roles
        .solo
        .iter()
        .map(|&s| slot_mean_amplitude(capture, slot_duration_s, s))
        .sum();
    if solo_sum <= 0.0 {
        return Err(Error::Detection(
            "solo slots carry no energy; cannot normalize coherent gain".into(),
        ));
    }
    Ok(combined / solo_sum)
}

/// All-on-slot power at the focus and null receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RxPowerMetrics {
    /// Mean power at the first focus receiver, linear.
    pub focus_power: f64,
    /// Mean power at the first null receiver, linear (absent when the
    /// scenario has no null objective).
    pub null_power: Option<f64>,
    /// 10·log10(focus/null), dB.
    pub null_depth_db: Option<f64>,
}

/// Read focus/null power off simulated captures during the all-on slot.
pub fn rx_power_metrics(
    captures: &[SampledWaveform],
    objectives: &[Objective],
    roles: &SlotRoles,
    slot_duration_s: f64,
) -> Result<RxPowerMetrics> {
    if captures.len() != objectives.len() {
        return Err(Error::Validation(format!(
            "{} captures for {} receivers",
            captures.len(),
            objectives.len()
        )));
    }
    let mean_power = |c: &SampledWaveform| {
        let a = slot_mean_amplitude(c, slot_duration_s, roles.all_on);
        a * a
    };
    let focus = captures
        .iter()
        .zip(objectives)
        .find(|(_, o)| **o == Objective::Focus)
        .map(|(c, _)| mean_power(c))
        .ok_or_else(|| Error::Validation("no focus receiver in scenario".into()))?;
    let null = captures
        .iter()
        .zip(objectives)
        .find(|(_, o)| **o == Objective::Null)
        .map(|(c, _)| mean_power(c));
    let null_depth_db = null.map(|n| {
        if n > 0.0 {
            10.0 * (focus / n).log10()
        } else {
            f64::INFINITY
        }
    });
    Ok(RxPowerMetrics {
        focus_power: focus,
        null_power: null,
        null_depth_db,
    })
}

// ---------------------------------------------------------------------------
// Error model
// ---------------------------------------------------------------------------

/// Gaussian perturbation standing in for the full estimation chain:
/// how well must geometry and sync be known for the beam to survive?
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamErrorModel {
    /// 1σ error on each estimated free coordinate, metres.
    pub position_sigma_m: f64,
    /// 1σ residual sync error per non-reference node, seconds.
    pub sync_sigma_s: f64,
}

/// Perturb true geometry the way the estimator's errors would: the
/// anchor convention pins node 0 and node 1's x, so only (y₁, x₂, y₂)
/// receive position error; node 0 is the timing reference, so only
/// nodes 1 and 2 receive sync error. Draw order: y₁, x₂, y₂, δt₁, δt₂.
pub fn perturb_array<R: Rng + ?Sized>(
    truth: &[Position2D; 3],
    model: &BeamErrorModel,
    rng: &mut R,
) -> ([Position2D; 3], [f64; 3]) {
    let pos = Normal::new(0.0, model.position_sigma_m.max(0.0)).expect("finite sigma");
    let clk = Normal::new(0.0, model.sync_sigma_s.max(0.0)).expect("finite sigma");
    let mut draw = |n: &Normal<f64>, sigma: f64| if sigma > 0.0 { n.sample(rng) } else { 0.0 };
    let estimated = [
        truth[0],
        Position2D::new(
            truth[1].x_m,
            truth[1].y_m + draw(&pos, model.position_sigma_m),
        ),
        Position2D::new(
            truth[2].x_m + draw(&pos, model.position_sigma_m),
            truth[2].y_m + draw(&pos, model.position_sigma_m),
        ),
    ];
    let sync = [
        0.0,
        draw(&clk, model.sync_sigma_s),
        draw(&clk, model.sync_sigma_s),
    ];
    (estimated, sync)
}
