//! One wireless two-way exchange, narrated: the four timestamps, what
//! the algebra recovers from them, and how a surveyed calibration turns
//! the biased delay estimate into a centimetre-accurate range.
//!
//! Run with: cargo run --example two_way_exchange

use distbeam::scenario::{builtin_scenario, euclidean_range};
use distbeam::sync::{
    apply_sync_correction, calibrate, est_clock_offset, est_prop_delay, est_range, run_exchange,
};
use distbeam::SPEED_OF_LIGHT_M_S;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut cfg = builtin_scenario("calibration").expect("builtin");
    // give the clocks something to find
    cfg.nodes[1].clock.offset_s = 2.4e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let pair = (0, 1); // node 1 initiates, node 0 responds
    let true_m = euclidean_range(
        cfg.node(0).true_position,
        cfg.node(1).true_position,
    );
    let quad = run_exchange(&cfg, pair, &mut rng)?;

    println!("exchange between nodes {} and {} ({true_m:.4} m apart)", pair.1, pair.0);
    println!("  t_tx initiator  {:16.6} us (node {} clock)", quad.t_tx_initiator_s * 1e6, pair.1);
    println!("  t_rx responder  {:16.6} us (node {} clock)", quad.t_rx_responder_s * 1e6, pair.0);
    println!("  t_tx responder  {:16.6} us (node {} clock)", quad.t_tx_responder_s * 1e6, pair.0);
    println!("  t_rx initiator  {:16.6} us (node {} clock)", quad.t_rx_initiator_s * 1e6, pair.1);

    let tau = est_prop_delay(&quad);
    let offset = est_clock_offset(&quad);
    println!("\nhalf-sum  (delay estimate): {:10.3} ns", tau * 1e9);
    println!("half-diff (offset, responder - initiator): {:10.3} ns", offset * 1e9);
    println!(
        "raw range {:.4} m — {:.3} m fat: receive chains add latency the \
         algebra cannot see",
        tau * SPEED_OF_LIGHT_M_S,
        tau * SPEED_OF_LIGHT_M_S - true_m
    );

    // survey the geometry once, absorb that latency into a constant
    let cal = calibrate(&quad, true_m);
    println!("\ncalibration constant for this pair: {:.3} ns", cal.tau_cal_s * 1e9);

    let quad2 = run_exchange(&cfg, pair, &mut rng)?;
    let ranged = est_range(&quad2, &cal)?;
    println!(
        "next exchange, calibrated: {:.4} m (error {:+.2} mm)",
        ranged,
        (ranged - true_m) * 1e3
    );

    // initiator corrects its clock by its own offset estimate
    let own_estimate = -est_clock_offset(&quad2);
    cfg.nodes[1].clock = apply_sync_correction(&cfg.nodes[1].clock, own_estimate);
    let quad3 = run_exchange(&cfg, pair, &mut rng)?;
    println!(
        "after sync correction the apparent offset drops to {:+.3} ps",
        est_clock_offset(&quad3) * 1e12
    );
    Ok(())
}
