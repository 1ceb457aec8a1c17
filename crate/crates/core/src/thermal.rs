//! Gibbs state of the lattice in the truncated basis.
//!
//! Every block of `e^{-βH}` follows from the dressed doublets of the mode it
//! belongs to. In the two-state basis `{|0,n⟩, |1,n-1⟩}` of mode `i`:
//!
//! ```text
//! x = b_n² e^{-βE_n^+} + a_n² e^{-βE_n^-}
//! y = a_n² e^{-βE_n^+} + b_n² e^{-βE_n^-}
//! z = a_n b_n (e^{-βE_n^+} - e^{-βE_n^-})
//! ```
//!
//! and the pair block of modes `i < j` is the tensor product of the two
//! one-exciton blocks. All Boltzmann factors are taken relative to the lowest
//! level of the truncation, `e^{-β(E - E_min)}`, so nothing overflows at
//! κβ = 800. The common factor `e^{βE_min}` cancels in `ρ = e^{-βH}/Z`; the
//! vacuum then carries weight `e^{βE_min}` instead of 1.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::Result;
use crate::metrics::trace_distance;
use crate::spectrum::{dressed_unchecked, modes_unchecked, DressedLevel, LatticeParams, NormalMode};
use crate::statespace::{
    build_space, partial_trace_atoms, partial_trace_fields, product_and_project, BlockKind, DensityMatrix, StateSpace,
};

/// Unnormalized 2×2 block `[[x, z], [z, y]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockWeights {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlockWeights {
    fn from_level(level: &DressedLevel, beta: f64, shift: f64) -> Self {
        let ep = (-beta * (level.e_plus - shift)).exp();
        let em = (-beta * (level.e_minus - shift)).exp();
        let (a2, b2) = (level.a_n * level.a_n, level.b_n * level.b_n);
        Self {
            x: b2 * ep + a2 * em,
            y: a2 * ep + b2 * em,
            z: level.a_n * level.b_n * (ep - em),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[self.x, self.z, self.z, self.y])
    }

    pub fn trace(&self) -> f64 {
        self.x + self.y
    }
}

/// Unnormalized Gibbs blocks and partition function, all scaled by the
/// common factor `e^{βE_min}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsBlocks {
    /// One-exciton block of each mode.
    pub one: Vec<BlockWeights>,
    /// Two-exciton single-mode block of each mode (empty when truncated to
    /// one exciton).
    pub two: Vec<BlockWeights>,
    /// Pair blocks `M^{(ij)}` for `i < j`, in the tensor order of the basis.
    pub pairs: Vec<((usize, usize), DMatrix<f64>)>,
    /// Weight of the vacuum, `e^{βE_min}`.
    pub vacuum_weight: f64,
    /// Lowest energy of the truncation, `E_min ≤ 0`.
    pub energy_shift: f64,
    /// Scaled partition function `Z e^{βE_min}`.
    pub partition: f64,
}

impl GibbsBlocks {
    /// `ln Z` of the unshifted Boltzmann weights.
    pub fn log_partition(&self, beta: f64) -> f64 {
        self.partition.ln() - beta * self.energy_shift
    }
}

/// Projectors on `φ^+` and `φ^-` in the basis `{|0,n⟩, |1,n-1⟩}`.
fn dressed_projectors(level: &DressedLevel) -> [(DMatrix<f64>, f64); 2] {
    let (a, b) = (level.a_n, level.b_n);
    [
        (
            DMatrix::from_row_slice(2, 2, &[b * b, a * b, a * b, a * a]),
            level.e_plus,
        ),
        (
            DMatrix::from_row_slice(2, 2, &[a * a, -a * b, -a * b, b * b]),
            level.e_minus,
        ),
    ]
}

fn lowest_energy(ones: &[DressedLevel], twos: &[DressedLevel], max_excitation: u32) -> f64 {
    let mut lowest: f64 = 0.0;
    if max_excitation >= 1 {
        lowest = ones.iter().map(|l| l.e_minus).fold(lowest, f64::min);
    }
    if max_excitation >= 2 {
        lowest = twos.iter().map(|l| l.e_minus).fold(lowest, f64::min);
        let mut sorted: Vec<f64> = ones.iter().map(|l| l.e_minus).collect();
        sorted.sort_by(f64::total_cmp);
        if sorted.len() >= 2 {
            lowest = lowest.min(sorted[0] + sorted[1]);
        }
    }
    lowest
}

/// Closed-form blocks of the two-exciton Gibbs state.
pub fn gibbs_blocks(params: &LatticeParams) -> Result<GibbsBlocks> {
    gibbs_blocks_truncated(params, 2)
}

/// Closed-form blocks for a truncation with at most `max_excitation`
/// excitations.
pub fn gibbs_blocks_truncated(params: &LatticeParams, max_excitation: u32) -> Result<GibbsBlocks> {
    params.validate()?;
    let beta = params.beta;
    let modes = modes_unchecked(params);
    let ones: Vec<DressedLevel> = modes.iter().map(|m| dressed_unchecked(params.g, m, 1)).collect();
    let twos: Vec<DressedLevel> = if max_excitation >= 2 {
        modes.iter().map(|m| dressed_unchecked(params.g, m, 2)).collect()
    } else {
        Vec::new()
    };
    let shift = lowest_energy(&ones, &twos, max_excitation);
    let vacuum_weight = (beta * shift).exp();

    let one: Vec<BlockWeights> = if max_excitation >= 1 {
        ones.iter().map(|l| BlockWeights::from_level(l, beta, shift)).collect()
    } else {
        Vec::new()
    };
    let two: Vec<BlockWeights> = twos.iter().map(|l| BlockWeights::from_level(l, beta, shift)).collect();

    let mut pairs = Vec::new();
    if max_excitation >= 2 {
        let projectors: Vec<_> = ones.iter().map(dressed_projectors).collect();
        for i in 0..modes.len() {
            for j in (i + 1)..modes.len() {
                let mut m = DMatrix::<f64>::zeros(4, 4);
                for (pi, ei) in &projectors[i] {
                    for (pj, ej) in &projectors[j] {
                        let w = (-beta * (ei + ej - shift)).exp();
                        if w != 0.0 {
                            m += pi.kronecker(pj) * w;
                        }
                    }
                }
                pairs.push(((i, j), m));
            }
        }
    }

    let partition = vacuum_weight
        + one.iter().map(BlockWeights::trace).sum::<f64>()
        + two.iter().map(BlockWeights::trace).sum::<f64>()
        + pairs.iter().map(|(_, m)| m.trace()).sum::<f64>();

    Ok(GibbsBlocks {
        one,
        two,
        pairs,
        vacuum_weight,
        energy_shift: shift,
        partition,
    })
}

/// Normalized Gibbs state on the two-exciton space.
pub fn gibbs_state(params: &LatticeParams) -> Result<DensityMatrix> {
    params.validate()?;
    let space = build_space(params.n_sites)?;
    gibbs_state_in(params, &space)
}

/// Normalized Gibbs state on an arbitrary truncation of the lattice.
pub fn gibbs_state_in(params: &LatticeParams, space: &Arc<StateSpace>) -> Result<DensityMatrix> {
    let gb = gibbs_blocks_truncated(params, space.max_excitation())?;
    let z = gb.partition;
    let blocks = space
        .blocks()
        .iter()
        .map(|b| match b.kind {
            BlockKind::Vacuum => DMatrix::from_element(1, 1, gb.vacuum_weight / z),
            BlockKind::OneExciton(i) => gb.one[i].matrix() / z,
            BlockKind::TwoExciton(i) => gb.two[i].matrix() / z,
            BlockKind::Pair(i, j) => {
                let pos = gb
                    .pairs
                    .iter()
                    .position(|(key, _)| *key == (i, j))
                    .expect("pair block present in a two-exciton truncation");
                &gb.pairs[pos].1 / z
            }
        })
        .collect();
    DensityMatrix::from_real_blocks(space.clone(), blocks)
}

/// Product of the Gibbs marginals `ρ_S ⊗ ρ_E`, projected on the truncation.
pub fn factorized_state(params: &LatticeParams) -> Result<DensityMatrix> {
    let rho = gibbs_state(params)?;
    factorize(&rho)
}

pub fn factorized_state_in(params: &LatticeParams, space: &Arc<StateSpace>) -> Result<DensityMatrix> {
    factorize(&gibbs_state_in(params, space)?)
}

/// Trace distance between the Gibbs state and the product of its marginals.
pub fn correlation_distance(params: &LatticeParams) -> Result<f64> {
    let rho = gibbs_state(params)?;
    trace_distance(&rho, &factorize(&rho)?)
}

/// [`correlation_distance`] along a coupling grid, evaluated in parallel.
/// Points keep their own result so one failure does not hide the rest.
pub fn correlation_curve(params: &LatticeParams, g_grid: &[f64]) -> Vec<Result<f64>> {
    g_grid
        .par_iter()
        .map(|&g| correlation_distance(&params.with_g(g)))
        .collect()
}

/// Projected product of the two marginals of any state.
pub fn factorize(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let atoms = partial_trace_fields(rho)?;
    let fields = partial_trace_atoms(rho)?;
    product_and_project(&atoms, &fields, rho.space())
}

fn one_exciton_hamiltonian(params: &LatticeParams, mode: &NormalMode, n: u32) -> DMatrix<f64> {
    let n = n as f64;
    let coupling = params.g * n.sqrt();
    DMatrix::from_row_slice(
        2,
        2,
        &[
            n * mode.omega_k,
            coupling,
            coupling,
            params.omega_a() + (n - 1.0) * mode.omega_k,
        ],
    )
}

/// Hamiltonian restricted to one block, in the basis order of the block.
pub fn block_hamiltonian(params: &LatticeParams, modes: &[NormalMode], kind: BlockKind) -> DMatrix<f64> {
    match kind {
        BlockKind::Vacuum => DMatrix::zeros(1, 1),
        BlockKind::OneExciton(i) => one_exciton_hamiltonian(params, &modes[i], 1),
        BlockKind::TwoExciton(i) => one_exciton_hamiltonian(params, &modes[i], 2),
        BlockKind::Pair(i, j) => {
            let eye = DMatrix::<f64>::identity(2, 2);
            one_exciton_hamiltonian(params, &modes[i], 1).kronecker(&eye)
                + eye.kronecker(&one_exciton_hamiltonian(params, &modes[j], 1))
        }
    }
}

/// All Hamiltonian blocks of `space`.
pub fn hamiltonian_blocks(params: &LatticeParams, space: &StateSpace) -> Vec<DMatrix<f64>> {
    let modes = modes_unchecked(params);
    space
        .blocks()
        .iter()
        .map(|b| block_hamiltonian(params, &modes, b.kind))
        .collect()
}

/// `Tr[ρ H]`.
pub fn energy_expectation(params: &LatticeParams, rho: &DensityMatrix) -> f64 {
    hamiltonian_blocks(params, rho.space())
        .iter()
        .zip(rho.blocks())
        .map(|(h, r)| {
            let mut acc = 0.0;
            for a in 0..h.nrows() {
                for b in 0..h.ncols() {
                    acc += h[(a, b)] * r[(b, a)].re;
                }
            }
            acc
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{sym_eig, trace_distance};
    use approx::assert_abs_diff_eq;

    fn small() -> LatticeParams {
        LatticeParams::new(2, 3.0, 0.0, 1.0, 5.0)
    }

    #[test]
    fn decoupled_limit() {
        let p = LatticeParams::new(3, 3.0, 0.5, 1e-12, 2.0);
        let gb = gibbs_blocks(&p).unwrap();
        let modes = modes_unchecked(&p);
        assert_eq!(gb.energy_shift, 0.0);
        for (w, m) in gb.one.iter().zip(&modes) {
            assert!(w.z.abs() < 1e-11);
            assert_abs_diff_eq!(w.x, (-2.0 * m.omega_k).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(w.y, (-2.0 * 3.5f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn partition_and_tensor_structure() {
        let p = LatticeParams::new(4, 3.0, 0.4, 1.3, 3.0);
        let gb = gibbs_blocks(&p).unwrap();
        let mut z = gb.vacuum_weight;
        for w in gb.one.iter().chain(&gb.two) {
            z += w.trace();
            assert!(w.x >= 0.0 && w.y >= 0.0);
            assert!(w.z.abs() <= (w.x * w.y).sqrt() + 1e-12);
        }
        for ((i, j), m) in &gb.pairs {
            z += m.trace();
            let tensor = gb.one[*i].matrix().kronecker(&gb.one[*j].matrix()) / gb.vacuum_weight;
            assert!((m - tensor).amax() < 1e-12);
        }
        assert_abs_diff_eq!(z, gb.partition, epsilon = 1e-10);
    }

    #[test]
    fn blocks_match_matrix_exponential() {
        let p = small();
        let space = build_space(2).unwrap();
        let gb = gibbs_blocks(&p).unwrap();
        let rho = gibbs_state(&p).unwrap();
        let z = gb.partition * (-p.beta * gb.energy_shift).exp();
        for (h, block) in hamiltonian_blocks(&p, &space).iter().zip(rho.blocks()) {
            let expected = (h * -p.beta).exp() / z;
            let got = block.map(|c| c.re);
            assert!((expected - got).amax() < 1e-12);
        }
    }

    #[test]
    fn unit_trace_and_positive() {
        for &(g, beta) in &[(0.5, 1.0), (2.2, 800.0), (2.8, 800.0), (1.9, 300.0)] {
            let rho = gibbs_state(&LatticeParams::default().with_g(g).with_beta(beta)).unwrap();
            assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
            rho.validate().unwrap();
        }
    }

    #[test]
    fn low_temperature_vacuum() {
        let p = LatticeParams::default();
        let rho = gibbs_state(&p).unwrap();
        let vacuum = DensityMatrix::projector(rho.space().clone(), 0).unwrap();
        assert!(
            (rho.to_dense() - vacuum.to_dense())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
                < 1e-8
        );
        let gb = gibbs_blocks(&p).unwrap();
        assert_abs_diff_eq!(gb.partition, 1.0, epsilon = 1e-8);
        let fact = factorized_state(&p).unwrap();
        assert!(trace_distance(&rho, &fact).unwrap() < 1e-8);
    }

    #[test]
    fn commutes_with_hamiltonian() {
        let p = LatticeParams::new(3, 3.0, 1.0, 1.7, 4.0);
        let rho = gibbs_state(&p).unwrap();
        for (h, r) in hamiltonian_blocks(&p, rho.space()).iter().zip(rho.blocks()) {
            let r = r.map(|c| c.re);
            assert!((h * &r - &r * h).amax() < 1e-10);
        }
    }

    #[test]
    fn log_partition_derivative_is_energy() {
        let p = LatticeParams::new(3, 3.0, 0.5, 1.8, 4.0);
        let h = 1e-5;
        let lz = |beta: f64| gibbs_blocks(&p.with_beta(beta)).unwrap().log_partition(beta);
        let fd = (lz(p.beta + h) - lz(p.beta - h)) / (2.0 * h);
        let energy = energy_expectation(&p, &gibbs_state(&p).unwrap());
        assert_abs_diff_eq!(fd, -energy, epsilon = 1e-6);
    }

    #[test]
    fn block_spectra_are_dressed_levels() {
        let p = LatticeParams::new(3, 3.0, 0.8, 1.1, 1.0);
        let modes = modes_unchecked(&p);
        for (i, m) in modes.iter().enumerate() {
            for (n, kind) in [(1, BlockKind::OneExciton(i)), (2, BlockKind::TwoExciton(i))] {
                let eig = sym_eig(&block_hamiltonian(&p, &modes, kind)).unwrap();
                let lvl = dressed_unchecked(p.g, m, n);
                assert_abs_diff_eq!(eig.values[0], lvl.e_minus, epsilon = 1e-12);
                assert_abs_diff_eq!(eig.values[1], lvl.e_plus, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn factorized_marginals_are_truncated_products() {
        let p = LatticeParams::new(5, 3.0, 0.0, 1.0, 800.0);
        let rho = gibbs_state(&p).unwrap();
        let fact = factorized_state(&p).unwrap();
        fact.validate().unwrap();
        for (b, m) in fact.space().blocks().iter().zip(fact.blocks()) {
            for r in 0..b.len {
                for c in 0..b.len {
                    if r != c {
                        assert_eq!(m[(r, c)].norm(), 0.0);
                    }
                }
            }
        }
        let atoms = partial_trace_fields(&rho).unwrap();
        let fields = partial_trace_atoms(&rho).unwrap();
        let space = rho.space();
        let mut pops = vec![0.0; space.dim()];
        for (k, s) in space.states().iter().enumerate() {
            pops[k] = atoms.prob(s.atom_config()) * fields.prob(s.field_config());
        }
        let total: f64 = pops.iter().sum();
        for (got, want) in fact.populations().iter().zip(&pops) {
            assert_abs_diff_eq!(*got, want / total, epsilon = 1e-15);
        }
    }

    #[test]
    fn correlation_curve_keeps_grid_order() {
        let p = small();
        let grid = [0.0, 0.7, 1.4, 2.1];
        let curve = correlation_curve(&p, &grid);
        assert!(curve[0].clone().unwrap() < 1e-13);
        for (&g, d) in grid.iter().zip(&curve) {
            assert_eq!(*d, correlation_distance(&p.with_g(g)));
        }
        assert!(correlation_curve(&p, &[-1.0])[0].is_err());
    }
}
