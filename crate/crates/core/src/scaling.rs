//! Finite-size scaling of the trace-distance derivative at the first
//! critical coupling.
//!
//! Near the first crossing only the vacuum and the one-exciton blocks carry
//! weight, so the distance between the Gibbs state and its factorized
//! counterpart has a closed form in the block weights `x_i, y_i, z_i`. The
//! product state projected on the one-exciton space has normalizer
//!
//! ```text
//! Z' = (w + Σx)(w + Σy) + (w + Σx)Σx + (w + Σy)Σy
//! ```
//!
//! where `w` is the (shifted) vacuum weight, and the difference of the two
//! states is diagonal except for one 2×2 block per mode.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::spectrum::{first_critical_coupling, LatticeParams};
use crate::thermal::gibbs_blocks_truncated;

/// Ingredients of the one-exciton closed form. Weights share the common
/// factor `e^{βE_min}` of [`crate::thermal::GibbsBlocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct OneExcitonClosedForm {
    pub rho_x: Vec<f64>,
    pub rho_y: Vec<f64>,
    pub rho_z: Vec<f64>,
    pub vacuum_weight: f64,
    /// One-exciton partition function `w + Σ(x_i + y_i)`.
    pub z: f64,
    pub z_prime: f64,
    pub distance: f64,
}

impl OneExcitonClosedForm {
    pub fn new(params: &LatticeParams) -> Result<Self> {
        let gb = gibbs_blocks_truncated(params, 1)?;
        let w = gb.vacuum_weight;
        let sx: f64 = gb.one.iter().map(|b| b.x).sum();
        let sy: f64 = gb.one.iter().map(|b| b.y).sum();
        let z = gb.partition;
        let z_prime = (w + sx) * (w + sy) + (w + sx) * sx + (w + sy) * sy;

        let rho_x: Vec<f64> = gb.one.iter().map(|b| (w + sx) * b.x / z_prime - b.x / z).collect();
        let rho_y: Vec<f64> = gb.one.iter().map(|b| (w + sy) * b.y / z_prime - b.y / z).collect();
        let rho_z: Vec<f64> = gb.one.iter().map(|b| -b.z / z).collect();

        let mut distance = 0.5 * ((w + sx) * (w + sy) / z_prime - w / z).abs();
        for i in 0..rho_x.len() {
            let s = rho_x[i] + rho_y[i];
            let r = ((rho_x[i] - rho_y[i]).powi(2) + 4.0 * rho_z[i] * rho_z[i]).sqrt();
            distance += 0.25 * ((s - r).abs() + (s + r).abs());
        }
        Ok(Self {
            rho_x,
            rho_y,
            rho_z,
            vacuum_weight: w,
            z,
            z_prime,
            distance: distance.clamp(0.0, 1.0),
        })
    }
}

/// Trace distance between the one-exciton Gibbs state and its factorized
/// state, from the closed form.
pub fn one_exciton_distance(params: &LatticeParams) -> Result<f64> {
    Ok(OneExcitonClosedForm::new(params)?.distance)
}

/// Derivative step of the scaling sweep, in units of κ.
pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    /// `(D(g+h) - D(g-h)) / 2h`.
    pub central: f64,
    /// One Richardson level: `(4 D'_{h/2} - D'_h) / 3`.
    pub richardson: f64,
}

/// Coupling derivative of [`one_exciton_distance`] at `params.g`.
pub fn distance_derivative(params: &LatticeParams, step: f64) -> Result<Derivative> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(invalid("step", format!("must be positive, got {step}")));
    }
    if params.g < step {
        return Err(invalid(
            "g",
            format!("{} is closer to 0 than the step {step}", params.g),
        ));
    }
    let d = |g: f64| one_exciton_distance(&params.with_g(g));
    let g = params.g;
    let central = (d(g + step)? - d(g - step)?) / (2.0 * step);
    let half = 0.5 * step;
    let fine = (d(g + half)? - d(g - half)?) / (2.0 * half);
    Ok(Derivative {
        central,
        richardson: (4.0 * fine - central) / 3.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub n_sites: usize,
    /// First critical coupling of this lattice size.
    pub g_c: f64,
    pub derivative: Derivative,
}

/// Derivative at `g_c^(1)(N)` for every `N` of the range, in input order.
pub fn scaling_sweep(omega_f: f64, delta_f: f64, beta: f64, sizes: &[usize]) -> Result<Vec<ScalingPoint>> {
    if sizes.is_empty() {
        return Err(invalid("sizes", "empty lattice-size range"));
    }
    sizes
        .par_iter()
        .map(|&n| scaling_point(omega_f, delta_f, beta, n, DEFAULT_STEP))
        .collect()
}

/// Derivative at `g_c^(1)` for a single lattice size.
pub fn scaling_point(omega_f: f64, delta_f: f64, beta: f64, n_sites: usize, step: f64) -> Result<ScalingPoint> {
    let base = LatticeParams::new(n_sites, omega_f, delta_f, 0.0, beta);
    let gc = first_critical_coupling(&base)?
        .ok_or_else(|| invalid("delta_f", format!("ω_a = {} has no critical coupling", base.omega_a())))?
        .g_c;
    Ok(ScalingPoint {
        n_sites,
        g_c: gc,
        derivative: distance_derivative(&base.with_g(gc), step)?,
    })
}

/// Least-squares fit of `f(N) = A e^{-bN} + C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `√(Σ r² / n)`.
    pub rms_residual: f64,
    /// `max - min` of the fitted values.
    pub data_range: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective `Σ r²` after every accepted step, starting with the initial guess.
    pub cost_history: Vec<f64>,
}

impl ScalingFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.a * (-self.b * n).exp() + self.c
    }

    /// RMS residual as a fraction of the data range (0 for flat data).
    pub fn relative_rms(&self) -> f64 {
        if self.data_range > 0.0 {
            self.rms_residual / self.data_range
        } else {
            0.0
        }
    }
}

const MAX_ITER: usize = 500;
const REL_TOL: f64 = 1e-10;

fn cost(points: &[(f64, f64)], p: &Vector3<f64>) -> f64 {
    points
        .iter()
        .map(|&(n, v)| (p[0] * (-p[1] * n).exp() + p[2] - v).powi(2))
        .sum()
}

fn initial_guess(points: &[(f64, f64)]) -> Vector3<f64> {
    let c0 = points[points.len() - 1].1;
    let a0 = points[0].1 - c0;
    let n0 = points[0].0;
    // log-slope of |v - C0| over the first decade
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(n, v)| n <= n0 + 10.0 && (v - c0) * a0 > 0.0)
        .map(|&(n, v)| (n, (v - c0).abs().ln()))
        .collect();
    let mut b0 = 0.1;
    if logs.len() >= 2 {
        let m = logs.len() as f64;
        let (sx, sy) = logs.iter().fold((0.0, 0.0), |acc, &(x, y)| (acc.0 + x, acc.1 + y));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
        let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
        let slope = -sxy / sxx;
        if slope.is_finite() && slope > 0.0 {
            b0 = slope;
        }
    }
    Vector3::new(a0, b0, c0)
}

/// Levenberg-Marquardt fit of `A e^{-bN} + C`. Input order does not matter.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: points.len(),
        });
    }
    if points.iter().any(|(n, v)| !n.is_finite() || !v.is_finite()) {
        return Err(invalid("points", "non-finite value"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut p = initial_guess(&pts);
    let mut current = cost(&pts, &p);
    let mut history = vec![current];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        if current == 0.0 {
            converged = true;
            break;
        }
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for &(n, v) in &pts {
            let e = (-p[1] * n).exp();
            let r = p[0] * e + p[2] - v;
            let j = Vector3::new(e, -p[0] * n * e, 1.0);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);

        // raise the damping until a step lowers the cost
        let mut accepted = None;
        while lambda < 1e20 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * (jtj[(k, k)] + 1e-12 * scale);
            }
            if let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) {
                let trial = p + step;
                let c = cost(&pts, &trial);
                if c.is_finite() && c <= current {
                    accepted = Some((trial, step, c));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, step, c)) = accepted else {
            // no damped step improves the objective: a stationary point
            converged = true;
            break;
        };
        lambda = (lambda / 10.0).max(1e-15);
        p = trial;
        current = c;
        history.push(c);
        if step.norm() <= REL_TOL * (p.norm() + REL_TOL) {
            converged = true;
            break;
        }
    }

    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
            (lo.min(v), hi.max(v))
        });
    Ok(ScalingFit {
        a: p[0],
        b: p[1],
        c: p[2],
        rms_residual: (current / pts.len() as f64).sqrt(),
        data_range: hi - lo,
        converged,
        iterations,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::trace_distance;
    use crate::statespace::StateSpace;
    use crate::thermal::{factorize, gibbs_state_in};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn generic(params: &LatticeParams) -> f64 {
        let space = Arc::new(StateSpace::truncated(params.n_sites, 1).unwrap());
        let rho = gibbs_state_in(params, &space).unwrap();
        trace_distance(&rho, &factorize(&rho).unwrap()).unwrap()
    }

    #[test]
    fn closed_form_matches_generic_kernel() {
        let p = LatticeParams::new(5, 3.0, 0.0, 1.0, 300.0);
        assert_abs_diff_eq!(one_exciton_distance(&p).unwrap(), generic(&p), epsilon = 1e-12);
        for &(n, g, beta, delta) in &[
            (5, 1.95, 300.0, 0.0),
            (3, 2.2, 20.0, 1.0),
            (8, 0.4, 2.0, -0.5),
            (1, 3.0, 50.0, 0.0),
        ] {
            let p = LatticeParams::new(n, 3.0, delta, g, beta);
            assert_abs_diff_eq!(one_exciton_distance(&p).unwrap(), generic(&p), epsilon = 1e-12);
        }
    }

    #[test]
    fn decoupled_residual() {
        // at g = 0 only the renormalization of the projected product remains
        let p = LatticeParams::new(5, 3.0, 0.0, 0.0, 1.0);
        let d = one_exciton_distance(&p).unwrap();
        assert!(d > 0.0);
        assert_abs_diff_eq!(d, generic(&p), epsilon = 1e-12);
    }

    #[test]
    fn cold_vacuum_phase() {
        let p = LatticeParams::new(5, 3.0, 0.0, 1.0, 800.0);
        assert!(one_exciton_distance(&p).unwrap() < 1e-12);
    }

    #[test]
    fn derivative_flat_in_deep_vacuum() {
        let p = LatticeParams::new(5, 3.0, 0.0, 0.5, 800.0);
        let d = distance_derivative(&p, DEFAULT_STEP).unwrap();
        assert!(d.central.abs() < 1e-12 && d.richardson.abs() < 1e-12);
        assert!(distance_derivative(&p, 0.0).is_err());
    }

    #[test]
    fn richardson_converges_at_critical_point() {
        let base = LatticeParams::new(10, 3.0, 0.0, 0.0, 300.0);
        let gc = first_critical_coupling(&base).unwrap().unwrap().g_c;
        let p = base.with_g(gc);
        let h = distance_derivative(&p, DEFAULT_STEP).unwrap().richardson;
        let h2 = distance_derivative(&p, 0.5 * DEFAULT_STEP).unwrap().richardson;
        assert!((h - h2).abs() < 1e-6, "{h} {h2}");
    }

    #[test]
    fn single_site_critical_coupling() {
        let sweep = scaling_sweep(3.0, 0.0, 300.0, &[1]).unwrap();
        assert_abs_diff_eq!(sweep[0].g_c, 3.0, epsilon = 1e-12);
        assert!(scaling_sweep(3.0, 0.0, 300.0, &[]).is_err());
    }

    #[test]
    fn smaller_detuning_bigger_derivative() {
        let sizes = [2, 5, 20];
        let d0 = scaling_sweep(3.0, 0.0, 300.0, &sizes).unwrap();
        let d5 = scaling_sweep(3.0, 5.0, 300.0, &sizes).unwrap();
        for (a, b) in d0.iter().zip(&d5) {
            assert!(a.derivative.richardson.abs() > b.derivative.richardson.abs());
        }
    }

    fn synthetic(a: f64, b: f64, c: f64) -> Vec<(f64, f64)> {
        (1..=50).map(|n| (n as f64, a * (-b * n as f64).exp() + c)).collect()
    }

    #[test]
    fn recovers_synthetic_parameters() {
        let fit = fit_exponential(&synthetic(1.0, 0.1, 0.5)).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.a, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.b, 0.1, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.c, 0.5, epsilon = 1e-6);
        assert!(fit.relative_rms() < 1e-9);
    }

    #[test]
    fn constant_data() {
        let pts: Vec<(f64, f64)> = (1..=20).map(|n| (n as f64, 0.7)).collect();
        let fit = fit_exponential(&pts).unwrap();
        assert!(fit.a.abs() < 1e-8);
        assert_abs_diff_eq!(fit.c, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn cost_never_increases() {
        let mut pts = synthetic(-2.0, 0.3, 1.0);
        for (k, p) in pts.iter_mut().enumerate() {
            p.1 += 1e-3 * ((k * 7919) % 13) as f64 / 13.0;
        }
        let fit = fit_exponential(&pts).unwrap();
        assert!(fit.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.b > 0.0);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            fit_exponential(&[(1.0, 1.0), (2.0, 0.5), (3.0, 0.2)]),
            Err(Error::TooFewPoints { .. })
        ));
    }
}
