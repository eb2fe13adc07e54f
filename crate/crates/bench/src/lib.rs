//! Fixtures shared by the benchmarks.

pub use hdvar_core::data_gen::{generate_dataset, Dataset, SimulationConfig};

/// One replication of the standard design at the given shape.
pub fn fixture(n: usize, p: usize, alpha: f64, snr: f64) -> Dataset {
    let cfg = SimulationConfig { n, p, alpha, snr, seed: 11, ..SimulationConfig::default() };
    generate_dataset(&cfg, 0).expect("valid fixture config")
}
