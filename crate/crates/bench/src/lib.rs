//! Shared inputs for the criterion benches.

use ounoise::sim::{poisson_grid_for_path, simulate, InitialState, SimConfig};
use ounoise::{NoisyOuParams, TickSeries};

pub fn params() -> NoisyOuParams {
    NoisyOuParams::new(1.0, 10.0, 1e-4, 1e-8).expect("valid")
}

/// Noisy path on a Poisson clock with about `n` observations.
pub fn noisy_path(n: usize) -> TickSeries {
    let grid = poisson_grid_for_path(n, 11, 0).expect("grid");
    let cfg = SimConfig { params: params(), grid, seed: 11, path: 0, init: InitialState::Stationary };
    simulate(&cfg).expect("simulation").observed
}
