//! Solve focus + null weights for a two-receiver placement and paint
//! the resulting near-field power over the bench as ASCII art. The two
//! receivers sit close enough to share a beamwidth — only the exact
//! constraint keeps one hot and the other dark.
//!
//! Run with: cargo run --example beam_null_map

use distbeam::beamformer::{
    constraint_matrix, field_at, lcmp_weights, normalize_weights, power_map, wavenumber,
    AmplitudeModel, MapGrid,
};
use distbeam::scenario::{builtin_scenario, Position2D};
use num_complex::Complex64;

fn main() -> anyhow::Result<()> {
    let cfg = builtin_scenario("experiment-b-position-1").expect("builtin");
    let nodes: Vec<Position2D> = cfg.nodes.iter().map(|n| n.true_position).collect();
    let rx: Vec<Position2D> = cfg.receivers.iter().map(|r| r.true_position).collect();
    let k = wavenumber(cfg.carrier_beam_hz);

    let c = constraint_matrix(&nodes, &rx, k);
    let gains: Vec<Complex64> = cfg
        .objective_gains()
        .into_iter()
        .map(|g| Complex64::new(g, 0.0))
        .collect();
    let w = normalize_weights(&lcmp_weights(&c, &gains)?)?;

    println!("transmit weights (max-normalized):");
    for (n, wn) in w.w.iter().enumerate() {
        println!("  node {n}: |w| {:.4}  phase {:+8.2} deg", wn.norm(), wn.arg().to_degrees());
    }
    let f_focus = field_at(rx[0], &nodes, &w, k, AmplitudeModel::PhaseOnly);
    let f_null = field_at(rx[1], &nodes, &w, k, AmplitudeModel::PhaseOnly);
    println!("\nfield at focus ({:.2}, {:.2}): |E| {:.6}", rx[0].x_m, rx[0].y_m, f_focus.norm());
    println!("field at null  ({:.2}, {:.2}): |E| {:.2e}", rx[1].x_m, rx[1].y_m, f_null.norm());

    // a band around the receiver line, normalized to the focus level
    let grid = MapGrid {
        x_min_m: -0.2,
        x_max_m: 2.4,
        y_min_m: 4.82,
        y_max_m: 5.32,
        step_m: 0.025,
    };
    let map = power_map(&grid, &nodes, &w, k, AmplitudeModel::PhaseOnly)?;
    let focus_db = 10.0 * f_focus.norm_sqr().log10();

    println!("\npower around the receivers, dB relative to the focus");
    println!("(F = focus, N = null; # > -3, + > -10, . > -20, space below)\n");
    let glyph = |rel_db: f64| match rel_db {
        d if d > -3.0 => '#',
        d if d > -10.0 => '+',
        d if d > -20.0 => '.',
        _ => ' ',
    };
    let near = |a: f64, b: f64| (a - b).abs() < grid.step_m / 2.0;
    for (iy, &y) in map.ys.iter().enumerate().rev() {
        let mut row = String::new();
        for (ix, &x) in map.xs.iter().enumerate() {
            let marker = rx.iter().position(|p| near(p.x_m, x) && near(p.y_m, y));
            row.push(match marker {
                Some(0) => 'F',
                Some(_) => 'N',
                None => glyph(map.power_db[iy][ix] - focus_db),
            });
        }
        println!("y {y:5.2} | {row}");
    }
    Ok(())
}
