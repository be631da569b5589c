//! Planar localization of the three-node array from its measured
//! pairwise ranges, and error statistics against ground truth.
//!
//! The solution is reported in the anchor frame: node 0 at the origin,
//! node 1 up the +y axis at the measured baseline, node 2 placed by
//! lateration with the x > 0 half-plane chosen by convention (a
//! three-node array cannot resolve the mirror ambiguity from ranges
//! alone).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{GroundTruth, Position2D};

/// Pairwise node separations, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSet {
    pub d_01_m: f64,
    pub d_02_m: f64,
    pub d_12_m: f64,
}

impl RangeSet {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in [
            ("d_01_m", self.d_01_m),
            ("d_02_m", self.d_02_m),
            ("d_12_m", self.d_12_m),
        ] {
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::Validation(format!(
                    "range {name} must be positive and finite, got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Coordinate frame the solver reports in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorConvention {
    /// Node 0 at the origin, node 1 on the +y axis, node 2 at x ≥ 0.
    OriginPlusY,
}

/// One laterated position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSolution {
    pub position: Position2D,
    /// True when the ranges were marginally infeasible (x² slightly
    /// negative) and x was clamped to the baseline.
    pub clamped: bool,
}

/// Solved array layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub positions: [Position2D; 3],
    /// Whether the third node's off-axis coordinate was clamped.
    pub clamped: bool,
    pub convention: AnchorConvention,
}

/// Largest squared-coordinate shortfall (m²) that is still treated as
/// round-off and clamped to the baseline instead of erroring: (1 cm)².
const CLAMP_EPS_M2: f64 = 1e-4;

/// Place the off-axis node given the anchor baseline and its two
/// measured ranges. `baseline_m` separates the anchors (origin and
/// (0, baseline)); `to_origin_m` / `to_partner_m` are the node's ranges
/// to them.
pub fn solve_node(baseline_m: f64, to_origin_m: f64, to_partner_m: f64) -> Result<NodeSolution> {
    RangeSet {
        d_01_m: baseline_m,
        d_02_m: to_origin_m,
        d_12_m: to_partner_m,
    }
    .validate()?;
    let y = (baseline_m * baseline_m - to_partner_m * to_partner_m
        + to_origin_m * to_origin_m)
        / (2.0 * baseline_m);
    let x_sq = to_origin_m * to_origin_m - y * y;
    if x_sq >= 0.0 {
        return Ok(NodeSolution {
            position: Position2D::new(x_sq.sqrt(), y),
            clamped: false,
        });
    }
    if x_sq >= -CLAMP_EPS_M2 {
        return Ok(NodeSolution {
            position: Position2D::new(0.0, y),
            clamped: true,
        });
    }
    Err(Error::Geometry(format!(
        "ranges ({baseline_m:.4}, {to_origin_m:.4}, {to_partner_m:.4}) m cannot close a \
         triangle: off-axis component is {x_sq:.3e} m² short"
    )))
}

/// Solve the whole array layout from one range set.
pub fn localize_array(ranges: &RangeSet) -> Result<ArrayGeometry> {
    ranges.validate()?;
    let third = solve_node(ranges.d_01_m, ranges.d_02_m, ranges.d_12_m)?;
    Ok(ArrayGeometry {
        positions: [
            Position2D::new(0.0, 0.0),
            Position2D::new(0.0, ranges.d_01_m),
            third.position,
        ],
        clamped: third.clamped,
        convention: AnchorConvention::OriginPlusY,
    })
}

/// One Monte-Carlo localization outcome: the measured ranges and the
/// layout solved from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationTrial {
    pub ranges: RangeSet,
    pub geometry: ArrayGeometry,
}

impl LocalizationTrial {
    /// Solve a trial directly from measured ranges.
    pub fn from_ranges(ranges: RangeSet) -> Result<Self> {
        Ok(LocalizationTrial {
            geometry: localize_array(&ranges)?,
            ranges,
        })
    }
}

/// Error statistics of one estimated quantity across trials, metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub quantity: String,
    pub rmse_m: f64,
    pub bias_m: f64,
    pub std_m: f64,
    pub n_trials: usize,
}

fn stats(quantity: &str, errors: &[f64]) -> QuantityStats {
    let n = errors.len();
    let bias = errors.iter().sum::<f64>() / n as f64;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let std = if n > 1 {
        (errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    QuantityStats {
        quantity: quantity.to_string(),
        rmse_m: rmse,
        bias_m: bias,
        std_m: std,
        n_trials: n,
    }
}

/// Per-quantity RMSE/bias/std across trials, against ground truth.
/// Quantities, in output order: the three ranges `d1` (node 0–1), `d2`
/// (node 1–2), `d3` (node 0–2), then the free coordinates `y1`, `x2`,
/// `y2`.
pub fn localization_error(
    trials: &[LocalizationTrial],
    truth: &GroundTruth,
) -> Result<Vec<QuantityStats>> {
    if trials.is_empty() {
        return Err(Error::Validation(
            "localization statistics need at least one trial".into(),
        ));
    }
    let pull =
        |f: &dyn Fn(&LocalizationTrial) -> f64| trials.iter().map(f).collect::<Vec<f64>>();
    let d1 = pull(&|t| t.ranges.d_01_m - truth.ranges.d_01_m);
    let d2 = pull(&|t| t.ranges.d_12_m - truth.ranges.d_12_m);
    let d3 = pull(&|t| t.ranges.d_02_m - truth.ranges.d_02_m);
    let y1 = pull(&|t| t.geometry.positions[1].y_m - truth.node_positions[1].y_m);
    let x2 = pull(&|t| t.geometry.positions[2].x_m - truth.node_positions[2].x_m);
    let y2 = pull(&|t| t.geometry.positions[2].y_m - truth.node_positions[2].y_m);
    Ok(vec![
        stats("d1", &d1),
        stats("d2", &d2),
        stats("d3", &d3),
        stats("y1", &y1),
        stats("x2", &x2),
        stats("y2", &y2),
    ])
}
