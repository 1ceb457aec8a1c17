//! Unitary evolution of the factorized Gibbs state and the time-maximum of
//! the atomic trace distance.
//!
//! The Hamiltonian is block diagonal, so `e^{-iHt}` acts on each block
//! through its eigendecomposition `H_b = V Λ Vᵀ`. The initial product state
//! is diagonal, hence the atomic populations at time `t` are finite cosine
//! sums
//!
//! ```text
//! p_k(t) = Σ_{l,m} V_kl V_km C_lm cos((λ_l - λ_m) t),   C = Vᵀ ρ_b(0) V
//! ```
//!
//! which is what the trajectory evaluates; [`evolve`] is the general path.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::metrics::{sym_eig, EigenDecomposition};
use crate::spectrum::LatticeParams;
use crate::statespace::{partial_trace_fields, DensityMatrix, StateSpace};
use crate::thermal::{factorized_state, hamiltonian_blocks};

/// Default horizon `κ t_max`.
pub const DEFAULT_HORIZON: f64 = 200.0;

/// Uniform grid `t_k = k dt`, `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_max: f64,
    pub dt: f64,
    pub count: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return Err(invalid("t_max", format!("must be non-negative, got {t_max}")));
        }
        let count = (t_max / dt + 1e-9).floor() as usize + 1;
        Ok(Self { t_max, dt, count })
    }

    /// Horizon `t_max` with `dt = 0.1 / (largest level spacing within a block)`.
    pub fn for_params(params: &LatticeParams, t_max: f64) -> Result<Self> {
        let gap = max_block_gap(params)?;
        let dt = if gap > 0.0 { 0.1 / gap } else { t_max.max(1.0) };
        Self::new(t_max, dt)
    }

    pub fn halved(&self) -> Self {
        Self::new(self.t_max, 0.5 * self.dt).expect("halving keeps a valid grid")
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|k| k as f64 * self.dt).collect()
    }
}

/// Largest eigenvalue spread of any Hamiltonian block.
pub fn max_block_gap(params: &LatticeParams) -> Result<f64> {
    params.validate()?;
    let space = crate::statespace::build_space(params.n_sites)?;
    let mut gap: f64 = 0.0;
    for h in hamiltonian_blocks(params, &space) {
        let eig = sym_eig(&h)?;
        gap = gap.max(eig.values[eig.values.len() - 1] - eig.values[0]);
    }
    Ok(gap)
}

/// Eigendecompositions of all Hamiltonian blocks of a space.
#[derive(Debug, Clone)]
pub struct Propagator {
    space: Arc<StateSpace>,
    eigs: Vec<EigenDecomposition>,
}

impl Propagator {
    pub fn new(params: &LatticeParams, space: &Arc<StateSpace>) -> Result<Self> {
        params.validate()?;
        let eigs = hamiltonian_blocks(params, space)
            .iter()
            .map(sym_eig)
            .collect::<Result<_>>()?;
        Ok(Self {
            space: space.clone(),
            eigs,
        })
    }

    /// `U(t) ρ U(t)†` blockwise.
    pub fn evolve(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        if !Arc::ptr_eq(rho.space(), &self.space) && **rho.space() != *self.space {
            return Err(crate::error::Error::SpaceMismatch);
        }
        let blocks = rho
            .blocks()
            .iter()
            .zip(&self.eigs)
            .map(|(r, eig)| {
                let v = eig.vectors.map(|x| Complex64::new(x, 0.0));
                let phases = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    eig.values.len(),
                    eig.values.iter().map(|&l| Complex64::from_polar(1.0, -l * t)),
                ));
                let u = &v * phases * v.transpose();
                &u * r * u.adjoint()
            })
            .collect();
        DensityMatrix::from_blocks(self.space.clone(), blocks)
    }
}

/// `ρ(t) = e^{-iHt} ρ₀ e^{iHt}`.
pub fn evolve(rho0: &DensityMatrix, params: &LatticeParams, t: f64) -> Result<DensityMatrix> {
    Propagator::new(params, rho0.space())?.evolve(rho0, t)
}

/// Cosine-sum representation of the atomic populations of an evolving
/// diagonal state.
#[derive(Debug, Clone)]
struct AtomSeries {
    /// Constant part of each atomic population.
    constant: Vec<f64>,
    /// `(atom config, angular frequency, amplitude)`.
    terms: Vec<(usize, f64, f64)>,
    initial: Vec<f64>,
}

impl AtomSeries {
    fn new(space: &StateSpace, eigs: &[EigenDecomposition], rho0: &DensityMatrix) -> Self {
        let n_atoms = space.atom_configs().len();
        let mut constant = vec![0.0; n_atoms];
        let mut initial = vec![0.0; n_atoms];
        let mut terms = Vec::new();
        for ((block, eig), r) in space.blocks().iter().zip(eigs).zip(rho0.blocks()) {
            let v = &eig.vectors;
            let r_re = r.map(|c| c.re);
            let c = v.transpose() * r_re * v;
            let len = block.len;
            for k in 0..len {
                let atom = space.atom_index(block.offset + k);
                initial[atom] += r[(k, k)].re;
                for l in 0..len {
                    constant[atom] += v[(k, l)] * v[(k, l)] * c[(l, l)];
                    for m in (l + 1)..len {
                        let amp = 2.0 * v[(k, l)] * v[(k, m)] * c[(l, m)];
                        if amp != 0.0 {
                            terms.push((atom, eig.values[l] - eig.values[m], amp));
                        }
                    }
                }
            }
        }
        Self {
            constant,
            terms,
            initial,
        }
    }

    fn distance(&self, t: f64) -> f64 {
        let mut p = self.constant.clone();
        for &(atom, w, amp) in &self.terms {
            p[atom] += amp * (w * t).cos();
        }
        let d: f64 = p.iter().zip(&self.initial).map(|(a, b)| (a - b).abs()).sum();
        (0.5 * d).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    /// `D(ρ_S(0), ρ_S(t))` at every grid time.
    pub distances: Vec<f64>,
    /// Largest sampled value.
    pub grid_max: f64,
    /// Maximum after refining the highest sampled peaks between grid points;
    /// never below `grid_max`.
    pub max_distance: f64,
    pub argmax_time: f64,
}

/// Number of sampled peaks refined by golden-section search.
const REFINED_PEAKS: usize = 16;

/// Atomic trace distance between the factorized Gibbs state and its unitary
/// evolution, sampled on `grid`.
pub fn max_trace_distance_trajectory(params: &LatticeParams, grid: &TimeGrid) -> Result<TrajectoryResult> {
    let rho0 = factorized_state(params)?;
    let space = rho0.space().clone();
    let prop = Propagator::new(params, &space)?;
    let series = AtomSeries::new(&space, &prop.eigs, &rho0);

    let times = grid.times();
    let distances: Vec<f64> = times.par_iter().map(|&t| series.distance(t)).collect();

    // earliest time wins ties
    let mut best = 0;
    for (k, &d) in distances.iter().enumerate() {
        if d > distances[best] {
            best = k;
        }
    }
    let grid_max = distances[best];

    let mut peaks: Vec<usize> = (0..distances.len())
        .filter(|&k| {
            let left = k == 0 || distances[k - 1] <= distances[k];
            let right = k + 1 == distances.len() || distances[k + 1] <= distances[k];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| distances[b].total_cmp(&distances[a]).then(a.cmp(&b)));
    peaks.truncate(REFINED_PEAKS);

    let (mut max_distance, mut argmax_time) = (grid_max, times[best]);
    for k in peaks {
        let lo = if k == 0 { 0.0 } else { times[k - 1] };
        let hi = if k + 1 == times.len() { times[k] } else { times[k + 1] };
        let (t, d) = golden_max(|t| series.distance(t), lo, hi);
        if d > max_distance || (d == max_distance && t < argmax_time) {
            max_distance = d;
            argmax_time = t;
        }
    }

    Ok(TrajectoryResult {
        times,
        distances,
        grid_max,
        max_distance,
        argmax_time,
    })
}

/// Maximum of [`max_trace_distance_trajectory`] with the default grid of each
/// coupling, in parallel over the sweep.
pub fn max_distance_sweep(params: &LatticeParams, g_grid: &[f64], t_max: f64) -> Result<Vec<f64>> {
    g_grid
        .par_iter()
        .map(|&g| {
            let p = params.with_g(g);
            let grid = TimeGrid::for_params(&p, t_max)?;
            Ok(max_trace_distance_trajectory(&p, &grid)?.max_distance)
        })
        .collect()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if b - a < 1e-12 * (1.0 + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Atomic trace distance of `ρ(t)` against `ρ(0)` through the general
/// evolution and the generic partial trace. Slow; used as a cross-check.
pub fn atomic_distance_direct(params: &LatticeParams, t: f64) -> Result<f64> {
    let rho0 = factorized_state(params)?;
    let rho_t = evolve(&rho0, params, t)?;
    let (a, b) = (partial_trace_fields(&rho0)?, partial_trace_fields(&rho_t)?);
    Ok(crate::metrics::classical_trace_distance(&a.probs, &b.probs))
}
