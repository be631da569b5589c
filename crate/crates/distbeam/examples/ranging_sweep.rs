//! Ranging accuracy versus link SNR: Monte-Carlo the full
//! calibrate-measure-localize chain at several noise levels with common
//! random numbers, so the curve shows the channel's effect alone.
//!
//! Run with: cargo run --release --example ranging_sweep

use distbeam::pipeline::{run_sweep, SweepAxis};
use distbeam::scenario::builtin_scenario;

fn main() -> anyhow::Result<()> {
    let cfg = builtin_scenario("experiment-a-position-1").expect("builtin");
    let snrs = [10.0, 15.0, 20.0, 25.0, 30.0];
    let trials = 30;

    println!("{trials} trials per point, dual-LFM sync pulses\n");
    println!("{:>8} {:>14} {:>14} {:>14}", "snr (dB)", "d1 rmse (mm)", "y1 rmse (mm)", "x2 rmse (mm)");
    let points = run_sweep(
        "experiment-a-position-1",
        &cfg,
        SweepAxis::SnrDb,
        &snrs,
        trials,
        None,
    )?;
    for p in &points {
        let rmse = |q: &str| {
            p.report
                .localization
                .iter()
                .find(|s| s.quantity == q)
                .map(|s| s.rmse_m * 1e3)
                .unwrap_or(f64::NAN)
        };
        println!(
            "{:>8.0} {:>14.2} {:>14.2} {:>14.2}",
            p.axis_value,
            rmse("d1"),
            rmse("y1"),
            rmse("x2")
        );
    }
    println!("\nmillimetres at 30 dB; the matched filter starts losing the peak below ~10 dB");
    Ok(())
}
