//! Canned experiment protocols, runnable as `sweep --preset <name>`.

use iso_opt::harness::SweepConfig;

/// Returns the named preset, or `None` for an unknown name.
///
/// - `fig3`: iterations-to-convergence on a 5-layer width-32 chain, batch
///   128, 30 learning rates log-spaced in [1e-4, 0.5], beta1 = 0.9,
///   beta2 = 0.99, 3 seeds, runs stop at 1% of the zero baseline.
/// - `fig4`: the same protocol on a 40-layer chain trained for a fixed
///   1000 iterations; runs report the final scaled loss.
pub fn preset(name: &str) -> Option<SweepConfig> {
    match name.trim().to_ascii_lowercase().as_str() {
        "fig3" => Some(SweepConfig::default_protocol()),
        "fig4" => {
            let mut cfg = SweepConfig::default_protocol();
            cfg.depth = 40;
            cfg.max_iters = 1000;
            cfg.stop_on_convergence = false;
            Some(cfg)
        }
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 2] = ["fig3", "fig4"];
