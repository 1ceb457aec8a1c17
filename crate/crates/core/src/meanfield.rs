//! Single-site mean-field treatment of the lattice.
//!
//! Decoupling the hopping term around `ψ = ⟨b⟩` leaves one cavity in the
//! grand-canonical Hamiltonian
//!
//! ```text
//! H(ψ) = ω_a σ⁺σ⁻ + ω_f b†b + g(σ⁺b + σ⁻b†) - zκψ(b + b†) + zκψ² - μ(σ⁺σ⁻ + b†b)
//! ```
//!
//! on `atom ⊗ {photon ≤ n_max}`, iterated to self-consistency. The map axes
//! are the scaled hopping `zκ/g` and the scaled chemical potential `(μ-ω)/g`
//! with `ω = ω_f`. For `μ ≥ min(ω_f, ω_a)` the photon number is unbounded and
//! the cutoff check fails.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::metrics::sym_eig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldParams {
    pub omega_f: f64,
    pub omega_a: f64,
    pub g: f64,
    pub kappa: f64,
    pub mu: f64,
    pub z_coord: f64,
    pub n_max: usize,
    pub beta: f64,
    pub psi_init: f64,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MeanFieldParams {
    fn default() -> Self {
        Self {
            omega_f: 3.0,
            omega_a: 3.0,
            g: 1.0,
            kappa: 0.0,
            mu: 2.5,
            z_coord: 2.0,
            n_max: 15,
            beta: 100.0,
            psi_init: 0.1,
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Top photon level population above which the cutoff is too small.
pub const CUTOFF_POPULATION: f64 = 1e-8;

impl MeanFieldParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_f", self.omega_f),
            ("omega_a", self.omega_a),
            ("g", self.g),
            ("kappa", self.kappa),
            ("mu", self.mu),
            ("z_coord", self.z_coord),
            ("beta", self.beta),
            ("psi_init", self.psi_init),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.n_max < 10 {
            return Err(invalid("n_max", format!("must be at least 10, got {}", self.n_max)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if self.kappa < 0.0 || self.g < 0.0 || self.z_coord <= 0.0 {
            return Err(invalid(
                "kappa",
                "hopping, coupling and coordination must be non-negative",
            ));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be positive"));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    fn index(&self, atom: usize, n: usize) -> usize {
        atom * (self.n_max + 1) + n
    }

    /// `H(ψ)` in the basis `|atom, n⟩`, index `atom·(n_max+1) + n`.
    pub fn hamiltonian(&self, psi: f64) -> DMatrix<f64> {
        let d = self.dim();
        let zk = self.z_coord * self.kappa;
        let mut h = DMatrix::zeros(d, d);
        for atom in 0..2 {
            for n in 0..=self.n_max {
                let k = self.index(atom, n);
                h[(k, k)] =
                    self.omega_a * atom as f64 + self.omega_f * n as f64 + zk * psi * psi - self.mu * (atom + n) as f64;
                if n > 0 {
                    let down = self.index(atom, n - 1);
                    let hop = -zk * psi * (n as f64).sqrt();
                    h[(k, down)] = hop;
                    h[(down, k)] = hop;
                }
            }
        }
        for n in 1..=self.n_max {
            let (up, ph) = (self.index(1, n - 1), self.index(0, n));
            let c = self.g * (n as f64).sqrt();
            h[(up, ph)] = c;
            h[(ph, up)] = c;
        }
        h
    }

    /// Normalized `e^{-βH(ψ)}`.
    pub fn gibbs(&self, psi: f64) -> Result<DMatrix<f64>> {
        let eig = sym_eig(&self.hamiltonian(psi))?;
        let e0 = eig.values[0];
        let w: Vec<f64> = eig.values.iter().map(|&e| (-self.beta * (e - e0)).exp()).collect();
        let z: f64 = w.iter().sum();
        let v = &eig.vectors;
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |r, c| {
            (0..d).map(|k| v[(r, k)] * w[k] * v[(c, k)]).sum::<f64>() / z
        }))
    }

    /// `Tr[b ρ]`.
    pub fn expectation_b(&self, rho: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for atom in 0..2 {
            for n in 1..=self.n_max {
                acc += (n as f64).sqrt() * rho[(self.index(atom, n), self.index(atom, n - 1))];
            }
        }
        acc
    }

    /// Population of the highest photon level.
    pub fn top_population(&self, rho: &DMatrix<f64>) -> f64 {
        rho[(self.index(0, self.n_max), self.index(0, self.n_max))]
            + rho[(self.index(1, self.n_max), self.index(1, self.n_max))]
    }

    /// `ψ ↦ Tr[b ρ(ψ)]`.
    pub fn fixed_point_map(&self, psi: f64) -> Result<f64> {
        Ok(self.expectation_b(&self.gibbs(psi)?))
    }

    /// Trace distance between `ρ` and the product of its atom and field marginals.
    pub fn product_distance(&self, rho: &DMatrix<f64>) -> Result<f64> {
        let nf = self.n_max + 1;
        let atom = DMatrix::from_fn(2, 2, |a, b| {
            (0..nf).map(|n| rho[(self.index(a, n), self.index(b, n))]).sum()
        });
        let field = DMatrix::from_fn(nf, nf, |n, m| {
            (0..2).map(|a| rho[(self.index(a, n), self.index(a, m))]).sum()
        });
        let diff = rho - atom.kronecker(&field);
        let sym = (&diff + diff.transpose()) * 0.5;
        Ok((0.5 * sym_eig(&sym)?.values.iter().map(|v| v.abs()).sum::<f64>()).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldResult {
    /// Converged order parameter, `|ψ|` by gauge choice.
    pub psi: f64,
    pub trace_distance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Final `|Tr[bρ(ψ)] - ψ|`.
    pub residual: f64,
    /// Iterations past the burn-in whose residual grew.
    pub monotone_violations: usize,
    pub top_population: f64,
}

const BURN_IN: usize = 10;

/// Damped fixed-point iteration for `ψ`.
pub fn self_consistent_psi(mfp: &MeanFieldParams) -> Result<MeanFieldResult> {
    mfp.validate()?;
    let mut psi = mfp.psi_init;
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut violations = 0;
    while iterations < mfp.max_iter {
        iterations += 1;
        let target = mfp.fixed_point_map(psi)?;
        let r = (target - psi).abs();
        if iterations > BURN_IN && r > residual && r > mfp.tol {
            violations += 1;
        }
        residual = r;
        if r < mfp.tol {
            psi = target;
            converged = true;
            break;
        }
        psi = (1.0 - mfp.damping) * psi + mfp.damping * target;
    }
    // Near the phase boundary the damped map contracts slowly and a small
    // residual still leaves ψ uncertain; Newton steps on T(ψ) - ψ fix that.
    let (polished, r) = newton_polish(mfp, psi)?;
    if r < residual {
        psi = polished;
        residual = r;
        converged |= r < mfp.tol;
    }
    let psi = psi.abs();
    let rho = mfp.gibbs(psi)?;
    let top = mfp.top_population(&rho);
    if top > CUTOFF_POPULATION {
        return Err(Error::Cutoff {
            population: top,
            n_max: mfp.n_max,
        });
    }
    Ok(MeanFieldResult {
        psi,
        trace_distance: mfp.product_distance(&rho)?,
        converged,
        iterations,
        residual,
        monotone_violations: violations,
        top_population: top,
    })
}

fn newton_polish(mfp: &MeanFieldParams, mut psi: f64) -> Result<(f64, f64)> {
    let f = |x: f64| mfp.fixed_point_map(x).map(|t| t - x);
    let mut fx = f(psi)?;
    for _ in 0..8 {
        if fx == 0.0 {
            break;
        }
        let h = 1e-6 * psi.abs().max(1e-3);
        let slope = (f(psi + h)? - f(psi - h)?) / (2.0 * h);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let trial = psi - fx / slope;
        let ft = f(trial)?;
        if !(ft.abs() < fx.abs()) {
            break;
        }
        psi = trial;
        fx = ft;
    }
    Ok((psi, fx.abs()))
}

/// Order parameter above which a point counts as superfluid.
pub const PSI_ONSET: f64 = 1e-6;
/// Change of `D` relative to the zero-hopping value that marks the boundary.
pub const D_ONSET: f64 = 1e-9;

/// Results on the grid `hopping[i] × chemical[j]`, stored at `i·len(chemical) + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldMap {
    /// `zκ/g`.
    pub hopping: Vec<f64>,
    /// `(μ - ω_f)/g`.
    pub chemical: Vec<f64>,
    pub results: Vec<Result<MeanFieldResult>>,
}

impl MeanFieldMap {
    pub fn get(&self, i: usize, j: usize) -> &Result<MeanFieldResult> {
        &self.results[i * self.chemical.len() + j]
    }

    fn column<T>(&self, j: usize, f: impl Fn(&MeanFieldResult) -> T) -> Vec<Option<T>> {
        (0..self.hopping.len())
            .map(|i| self.get(i, j).as_ref().ok().map(&f))
            .collect()
    }

    /// First hopping index with `ψ > PSI_ONSET` at chemical index `j`.
    pub fn psi_onset(&self, j: usize) -> Option<usize> {
        self.column(j, |r| r.psi)
            .iter()
            .position(|p| p.is_some_and(|p| p > PSI_ONSET))
    }

    /// First hopping index where `D` leaves its value at the first hopping
    /// point. With `ψ = 0` the single-site state does not depend on the
    /// hopping, so `D` stays flat through the normal phase.
    pub fn distance_onset(&self, j: usize) -> Option<usize> {
        let d = self.column(j, |r| r.trace_distance);
        let d0 = d.first().copied().flatten()?;
        d.iter().position(|v| v.is_some_and(|v| (v - d0).abs() > D_ONSET))
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.is_err()).count()
    }
}

/// Default hopping axis `zκ/g`: 21 points on `[0, 0.3]`.
pub fn default_hopping_grid() -> Vec<f64> {
    (0..=20).map(|k| 0.015 * k as f64).collect()
}

/// Default chemical-potential axis `(μ-ω_f)/g`: 13 points on `[-1.4, -0.65]`.
/// It spans the vacuum region and the first Mott lobe at `β = 100/g`, and
/// stops short of the corner where 15 photons no longer hold the state.
pub fn default_chemical_grid() -> Vec<f64> {
    (0..=12).map(|k| -1.4 + 0.0625 * k as f64).collect()
}

/// [`self_consistent_psi`] over the `(zκ/g, (μ-ω_f)/g)` grid. Per-point
/// failures are kept in the table.
pub fn meanfield_map(base: &MeanFieldParams, hopping: &[f64], chemical: &[f64]) -> Result<MeanFieldMap> {
    if hopping.is_empty() || chemical.is_empty() {
        return Err(invalid("grid", "mean-field axes must be non-empty"));
    }
    base.validate()?;
    let results = (0..hopping.len() * chemical.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / chemical.len(), k % chemical.len());
            let p = MeanFieldParams {
                kappa: hopping[i] * base.g / base.z_coord,
                mu: base.omega_f + chemical[j] * base.g,
                ..*base
            };
            self_consistent_psi(&p)
        })
        .collect();
    Ok(MeanFieldMap {
        hopping: hopping.to_vec(),
        chemical: chemical.to_vec(),
        results,
    })
}
