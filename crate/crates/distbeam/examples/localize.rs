//! Turn three pairwise ranges into node coordinates under the anchor
//! convention (node 0 at the origin, node 1 up the +y axis, node 2 in
//! the x > 0 half-plane), then show how the solver treats measurement
//! sets that geometry cannot quite satisfy.
//!
//! Run with: cargo run --example localize

use distbeam::localization::{localize_array, solve_node, RangeSet};
use distbeam::scenario::{builtin_scenarios, GroundTruth};

fn main() -> anyhow::Result<()> {
    println!("builtin bench layouts recovered from their true ranges:\n");
    for s in builtin_scenarios() {
        let truth = GroundTruth::from_config(&s.config);
        let solved = localize_array(&truth.ranges)?;
        let n2 = solved.positions[2];
        println!(
            "{:26} node1 y {:.3} m   node2 ({:.3}, {:.3}) m",
            s.name, solved.positions[1].y_m, n2.x_m, n2.y_m
        );
    }

    // ranges that *almost* close: d02 a hair shorter than the node's
    // y coordinate, as sub-mm noise routinely produces
    println!("\nnear-degenerate set (node 2 sitting almost on the baseline):");
    let sol = solve_node(2.0, 0.6999, 1.3)?;
    println!(
        "  solved ({:.4}, {:.4}) m, clamped = {} — tiny negative x² snapped to the axis",
        sol.position.x_m, sol.position.y_m, sol.clamped
    );

    // ranges that cannot close at all
    println!("\ngrossly inconsistent set (triangle inequality broken):");
    match localize_array(&RangeSet {
        d_01_m: 2.0,
        d_02_m: 0.5,
        d_12_m: 2.6,
    }) {
        Err(e) => println!("  rejected: {e}"),
        Ok(g) => println!("  unexpectedly solved: {:?}", g.positions),
    }
    Ok(())
}
