//! Shared fixtures for the criterion benches.

use jch_core::dynamics::TimeGrid;
use jch_core::meanfield::MeanFieldParams;
use jch_core::LatticeParams;

/// Five cavities at zero detuning, κβ = 800, just above the first critical
/// coupling.
pub fn lattice() -> LatticeParams {
    LatticeParams::new(5, 3.0, 0.0, 2.0, 800.0)
}

/// Quench setup at κβ = 300 with the default time grid.
pub fn quench() -> (LatticeParams, TimeGrid) {
    let p = lattice().with_beta(300.0);
    let grid = TimeGrid::for_params(&p, jch_core::dynamics::DEFAULT_HORIZON).expect("valid grid");
    (p, grid)
}

/// Superfluid mean-field point, where the iteration does real work.
pub fn superfluid_point() -> MeanFieldParams {
    MeanFieldParams {
        kappa: 0.1,
        mu: 2.2,
        ..MeanFieldParams::default()
    }
}

/// Coupling grid of `n` points on `[0.5, 2.9]`.
pub fn g_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.5 + 2.4 * k as f64 / (n - 1) as f64).collect()
}
