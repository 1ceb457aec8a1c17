//! Observables that witness the ground-state change: the thermal total
//! excitation number and the ground-energy branch with its derivative.
//!
//! Candidate ground levels are limited to the two-exciton truncation, so at
//! large coupling the true lattice ground state (with more excitons) is not
//! represented.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::spectrum::{ground_branch, ground_candidates, LatticeParams, Level};
use crate::statespace::{build_space, StateSpace};
use crate::thermal::gibbs_state;

/// Diagonal excitation-number operator of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationOperator {
    pub values: Vec<u32>,
}

impl ExcitationOperator {
    pub fn new(space: &StateSpace) -> Self {
        Self {
            values: space.states().iter().map(|s| s.total_excitation).collect(),
        }
    }
}

/// `Tr[ρ_Gibbs N̂]`.
pub fn total_excitation(params: &LatticeParams) -> Result<f64> {
    let rho = gibbs_state(params)?;
    let op = ExcitationOperator::new(rho.space());
    Ok(rho
        .populations()
        .iter()
        .zip(&op.values)
        .map(|(p, &n)| p * n as f64)
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundEnergyCurve {
    pub g: Vec<f64>,
    pub energy: Vec<f64>,
    /// Analytic `dE_g/dg` of the active branch.
    pub slope: Vec<f64>,
    pub branch: Vec<Level>,
}

impl GroundEnergyCurve {
    /// Grid indices `k` where the active branch differs between `k-1` and `k`.
    pub fn branch_changes(&self) -> Vec<usize> {
        (1..self.branch.len())
            .filter(|&k| self.branch[k] != self.branch[k - 1])
            .collect()
    }
}

/// Lowest candidate level and its slope along a sorted coupling grid.
pub fn ground_energy(params: &LatticeParams, g_grid: &[f64]) -> Result<GroundEnergyCurve> {
    params.validate()?;
    if g_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("g_grid", "must be sorted ascending"));
    }
    let rows: Vec<(Level, f64, f64)> = g_grid.iter().map(|&g| ground_branch(&params.with_g(g))).collect();
    Ok(GroundEnergyCurve {
        g: g_grid.to_vec(),
        energy: rows.iter().map(|r| r.1).collect(),
        slope: rows.iter().map(|r| r.2).collect(),
        branch: rows.iter().map(|r| r.0).collect(),
    })
}

/// Three smallest candidate energies at each coupling, ascending.
pub fn three_lowest_levels(params: &LatticeParams, g_grid: &[f64]) -> Result<Vec<[f64; 3]>> {
    params.validate()?;
    Ok(g_grid
        .iter()
        .map(|&g| {
            let mut e: Vec<f64> = ground_candidates(&params.with_g(g)).into_iter().map(|c| c.1).collect();
            e.sort_by(f64::total_cmp);
            [e[0], e[1], e[2]]
        })
        .collect())
}

/// Total excitation along a coupling grid, evaluated in parallel.
pub fn excitation_curve(params: &LatticeParams, g_grid: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    build_space(params.n_sites)?;
    g_grid
        .par_iter()
        .map(|&g| total_excitation(&params.with_g(g)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::critical_couplings;
    use approx::assert_abs_diff_eq;

    fn reference() -> LatticeParams {
        LatticeParams::default()
    }

    #[test]
    fn excitation_plateaus() {
        assert!(total_excitation(&reference().with_g(1.0)).unwrap() < 1e-3);
        assert_abs_diff_eq!(total_excitation(&reference().with_g(2.2)).unwrap(), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(total_excitation(&reference().with_g(2.8)).unwrap(), 2.0, epsilon = 1e-3);
    }

    #[test]
    fn excitation_operator_matches_states() {
        let space = build_space(3).unwrap();
        let op = ExcitationOperator::new(&space);
        assert_eq!(op.values[0], 0);
        assert_eq!(op.values.iter().filter(|&&n| n == 1).count(), 6);
        assert_eq!(op.values.len(), space.dim());
    }

    #[test]
    fn vacuum_branch_below_first_crossing() {
        let curve = ground_energy(&reference(), &[0.5, 1.0, 1.9]).unwrap();
        assert!(curve.energy.iter().all(|&e| e == 0.0));
        assert!(curve.slope.iter().all(|&s| s == 0.0));
        assert!(ground_energy(&reference(), &[1.0, 0.5]).is_err());
    }

    #[test]
    fn slope_jumps_at_first_crossing() {
        let gc = critical_couplings(&reference(), (0.0, 10.0)).unwrap()[0].g_c;
        let left = ground_branch(&reference().with_g(gc - 1e-9));
        let right = ground_branch(&reference().with_g(gc + 1e-9));
        assert_eq!(left.0, Level::Vacuum);
        assert_eq!(left.2, 0.0);
        let delta_k = 3.0 - (3.0 + 2.0 * (5.0 * std::f64::consts::PI / 6.0).cos());
        let omega_1 = (delta_k * delta_k + 4.0 * gc * gc).sqrt();
        assert_abs_diff_eq!(right.2, -2.0 * gc / omega_1, epsilon = 1e-8);
    }

    #[test]
    fn slope_matches_finite_differences() {
        let h = 1e-5;
        let grid: Vec<f64> = (0..60).map(|k| 0.5 + 0.04 * k as f64).collect();
        let curve = ground_energy(&reference(), &grid).unwrap();
        let crossings = critical_couplings(&reference(), (0.0, 10.0)).unwrap();
        for (k, &g) in grid.iter().enumerate() {
            if crossings.iter().any(|c| (c.g_c - g).abs() < 0.04) {
                continue;
            }
            let e = |x: f64| ground_branch(&reference().with_g(x)).1;
            let fd = (e(g + h) - e(g - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, curve.slope[k], epsilon = 1e-6);
        }
    }

    #[test]
    fn decoupled_three_levels() {
        let levels = three_lowest_levels(&reference(), &[0.0]).unwrap()[0];
        assert_abs_diff_eq!(levels[0], 0.0);
        assert_abs_diff_eq!(levels[1], 1.2679491924311228, epsilon = 1e-12);
        assert_abs_diff_eq!(levels[2], 2.0, epsilon = 1e-12);
        let gc = critical_couplings(&reference(), (0.0, 10.0)).unwrap()[0].g_c;
        let at = three_lowest_levels(&reference(), &[gc]).unwrap()[0];
        assert!(at[0].abs() < 1e-10 && at[1].abs() < 1e-10);
    }

    #[test]
    fn levels_are_continuous() {
        let jump = |step: f64| {
            let grid: Vec<f64> = (0..).map(|k| 0.5 + step * k as f64).take_while(|&g| g <= 2.9).collect();
            let levels = three_lowest_levels(&reference(), &grid).unwrap();
            levels
                .windows(2)
                .flat_map(|w| (0..3).map(move |i| (w[1][i] - w[0][i]).abs()))
                .fold(0.0, f64::max)
        };
        let coarse = jump(0.01);
        let fine = jump(0.001);
        assert!(fine < 0.2 * coarse, "{coarse} {fine}");
    }
}
