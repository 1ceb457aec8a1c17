//! Trace distance and Uhlmann fidelity between block-diagonal states.
//!
//! Both states share the same block layout, so every quantity reduces to a
//! sum over blocks of small dense eigenproblems.

mod eigen;

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

pub use eigen::{herm_eig, herm_eigenvalues, herm_function, sym_eig, EigenDecomposition};

use crate::error::{invalid, Error, Result};
use crate::spectrum::LatticeParams;
use crate::statespace::DensityMatrix;
use crate::thermal::gibbs_state;

/// Eigenvalues below this are a positivity violation rather than round-off.
pub const PSD_CLIP: f64 = 1e-8;

static CLIPPED: AtomicUsize = AtomicUsize::new(0);

/// Number of negative eigenvalues in `(-PSD_CLIP, -1e-12)` that fidelity
/// evaluations have clipped to zero since start-up.
pub fn psd_clip_count() -> usize {
    CLIPPED.load(Ordering::Relaxed)
}

fn clip(lambda: f64) -> Result<f64> {
    if lambda < -PSD_CLIP {
        return Err(Error::NotPositive { eigenvalue: lambda });
    }
    if lambda < -1e-12 {
        CLIPPED.fetch_add(1, Ordering::Relaxed);
    }
    Ok(lambda.max(0.0))
}

fn ensure_same_space(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.same_space(b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch)
    }
}

/// `D(ρ₁, ρ₂) = ½ Σ|d_i|` over the eigenvalues of `ρ₁ - ρ₂`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    ensure_same_space(rho1, rho2)?;
    let mut total = 0.0;
    for (a, b) in rho1.blocks().iter().zip(rho2.blocks()) {
        total += block_trace_norm(&(a - b))?;
    }
    Ok((0.5 * total).clamp(0.0, 1.0))
}

/// `Σ|λ|` of a Hermitian block, with closed forms for the small sizes.
pub(crate) fn block_trace_norm(diff: &DMatrix<Complex64>) -> Result<f64> {
    match diff.nrows() {
        0 => Ok(0.0),
        1 => Ok(diff[(0, 0)].re.abs()),
        _ => Ok(herm_eigenvalues(diff)?.iter().map(|d| d.abs()).sum()),
    }
}

/// Trace distance between two diagonal distributions, `½ Σ|p_i - q_i|`.
pub fn classical_trace_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `F(ρ, σ) = Tr √(σ^{1/2} ρ σ^{1/2})`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    ensure_same_space(rho, sigma)?;
    let mut total = 0.0;
    for (r, s) in rho.blocks().iter().zip(sigma.blocks()) {
        total += block_fidelity(r, s)?;
    }
    Ok(total.clamp(0.0, 1.0))
}

fn block_fidelity(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>) -> Result<f64> {
    if rho.nrows() == 1 {
        let (p, q) = (clip(rho[(0, 0)].re)?, clip(sigma[(0, 0)].re)?);
        return Ok((p * q).sqrt());
    }
    let sigma_eig = herm_eig(sigma)?;
    for &v in &sigma_eig.values {
        clip(v)?;
    }
    let root = herm_function(sigma, |x| x.max(0.0).sqrt())?;
    let inner = &root * rho * &root;
    // symmetrize away the round-off of the triple product
    let inner = (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let mut acc = 0.0;
    for v in herm_eigenvalues(&inner)? {
        acc += clip(v)?.sqrt();
    }
    Ok(acc)
}

/// Fidelity between the Gibbs states at `g` and `g + δg` for every `g` of
/// the grid.
pub fn gibbs_fidelity_scan(params: &LatticeParams, delta_g: f64, g_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(delta_g > 0.0) || !delta_g.is_finite() {
        return Err(invalid("delta_g", format!("must be positive, got {delta_g}")));
    }
    params.validate()?;
    g_grid
        .par_iter()
        .map(|&g| {
            let rho = gibbs_state(&params.with_g(g))?;
            let sigma = gibbs_state(&params.with_g(g + delta_g))?;
            Ok((g, fidelity(&rho, &sigma)?))
        })
        .collect()
}
