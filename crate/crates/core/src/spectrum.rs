//! Normal modes of the hopping lattice and the dressed Jaynes-Cummings
//! spectrum of each mode.
//!
//! The photon hopping term is diagonalized by the open-chain sine transform,
//! which leaves `N` independent Jaynes-Cummings systems with mode
//! frequencies `ω_k = ω_f + 2κ cos(k/2)`, `k = 2πm/(N+1)`. Each of them has
//! the familiar dressed doublets `E_n^± = nω_k + Δ_k/2 ± Ω_n/2` with
//! `Ω_n = √(Δ_k² + 4g²n)`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Physical parameters of the lattice, in units of the hopping rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    pub n_sites: usize,
    pub omega_f: f64,
    /// Bare detuning `ω_a - ω_f`.
    pub delta_f: f64,
    pub g: f64,
    pub kappa: f64,
    /// Inverse temperature κβ.
    pub beta: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            n_sites: 5,
            omega_f: 3.0,
            delta_f: 0.0,
            g: 1.0,
            kappa: 1.0,
            beta: 800.0,
        }
    }
}

impl LatticeParams {
    pub fn new(n_sites: usize, omega_f: f64, delta_f: f64, g: f64, beta: f64) -> Self {
        Self {
            n_sites,
            omega_f,
            delta_f,
            g,
            kappa: 1.0,
            beta,
        }
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_delta(self, delta_f: f64) -> Self {
        Self { delta_f, ..self }
    }

    pub fn with_sites(self, n_sites: usize) -> Self {
        Self { n_sites, ..self }
    }

    /// Atomic transition frequency `ω_a = ω_f + Δ_f`.
    pub fn omega_a(&self) -> f64 {
        self.omega_f + self.delta_f
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega_f", self.omega_f),
            ("delta_f", self.delta_f),
            ("g", self.g),
            ("kappa", self.kappa),
            ("beta", self.beta),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.n_sites == 0 {
            return Err(invalid("n_sites", "need at least one cavity"));
        }
        if self.kappa <= 0.0 {
            return Err(invalid("kappa", format!("must be positive, got {}", self.kappa)));
        }
        if self.beta <= 0.0 {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if self.omega_f <= 2.0 * self.kappa {
            return Err(invalid(
                "omega_f",
                format!("must exceed 2·kappa = {}, got {}", 2.0 * self.kappa, self.omega_f),
            ));
        }
        if self.g < 0.0 {
            return Err(invalid("g", format!("must be non-negative, got {}", self.g)));
        }
        Ok(())
    }
}

/// One photon normal mode of the open chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalMode {
    /// Mode label `m` in `1..=N`.
    pub m: usize,
    pub k: f64,
    pub omega_k: f64,
    /// `ω_a - ω_k`.
    pub delta_k: f64,
}

/// Normal modes ordered by `m`.
pub fn normal_modes(params: &LatticeParams) -> Result<Vec<NormalMode>> {
    params.validate()?;
    Ok(modes_unchecked(params))
}

pub(crate) fn modes_unchecked(params: &LatticeParams) -> Vec<NormalMode> {
    let n = params.n_sites;
    let omega_a = params.omega_a();
    (1..=n)
        .map(|m| {
            let k = 2.0 * PI * m as f64 / (n as f64 + 1.0);
            let omega_k = params.omega_f + 2.0 * params.kappa * (k / 2.0).cos();
            NormalMode {
                m,
                k,
                omega_k,
                delta_k: omega_a - omega_k,
            }
        })
        .collect()
}

/// Dressed doublet of the `n`-excitation manifold of one mode.
///
/// `|φ_n^+⟩ = a_n |1, n-1⟩ + b_n |0, n⟩` and
/// `|φ_n^-⟩ = -b_n |1, n-1⟩ + a_n |0, n⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedLevel {
    pub n: u32,
    pub mode: NormalMode,
    pub a_n: f64,
    pub b_n: f64,
    /// Generalized Rabi frequency `Ω_n`.
    pub omega_n: f64,
    pub e_plus: f64,
    pub e_minus: f64,
}

impl DressedLevel {
    /// `∂E_n^-/∂g` at fixed detuning.
    pub fn slope_minus(&self, g: f64) -> f64 {
        let n = self.n as f64;
        if self.omega_n > 0.0 {
            -2.0 * g * n / self.omega_n
        } else {
            -n.sqrt()
        }
    }

    pub fn slope_plus(&self, g: f64) -> f64 {
        -self.slope_minus(g)
    }
}

/// Dressed eigen-system of `mode` in the `n`-excitation manifold (`n ≥ 1`).
///
/// The zero-excitation level is the bare vacuum with energy 0 and is not
/// produced here.
pub fn dressed_level(params: &LatticeParams, mode: &NormalMode, n: u32) -> Result<DressedLevel> {
    if n == 0 {
        return Err(invalid("n", "the zero-excitation level is the vacuum with energy 0"));
    }
    Ok(dressed_unchecked(params.g, mode, n))
}

pub(crate) fn dressed_unchecked(g: f64, mode: &NormalMode, n: u32) -> DressedLevel {
    let nf = n as f64;
    let delta = mode.delta_k;
    let coupling = g * nf.sqrt();
    let omega_n = (delta * delta + 4.0 * coupling * coupling).sqrt();
    let (a_n, b_n) = if omega_n == 0.0 {
        (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)
    } else if delta >= 0.0 {
        // a_n b_n = g√n / Ω_n; avoids the cancellation in Ω_n - Δ_k
        let a = ((omega_n + delta) / (2.0 * omega_n)).sqrt();
        (a, coupling / (omega_n * a))
    } else {
        let b = ((omega_n - delta) / (2.0 * omega_n)).sqrt();
        (coupling / (omega_n * b), b)
    };
    let centre = nf * mode.omega_k + delta / 2.0;
    DressedLevel {
        n,
        mode: *mode,
        a_n,
        b_n,
        omega_n,
        e_plus: centre + omega_n / 2.0,
        e_minus: centre - omega_n / 2.0,
    }
}

/// Coupling at which the one-polariton level of a mode crosses zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub mode_m: usize,
    pub g_c: f64,
    /// Ground branches just below and above `g_c`, when known.
    pub transition: Option<(Level, Level)>,
}

/// Closed-form critical couplings `g_c(m) = √(ω_k ω_a)` inside `window`
/// (inclusive), sorted ascending.
pub fn critical_couplings(params: &LatticeParams, window: (f64, f64)) -> Result<Vec<CriticalPoint>> {
    let modes = normal_modes(params)?;
    let omega_a = params.omega_a();
    let mut points: Vec<CriticalPoint> = modes
        .iter()
        .filter_map(|mode| {
            let product = mode.omega_k * omega_a;
            (product > 0.0).then(|| CriticalPoint {
                mode_m: mode.m,
                g_c: product.sqrt(),
                transition: None,
            })
        })
        .filter(|cp| cp.g_c >= window.0 && cp.g_c <= window.1)
        .collect();
    points.sort_by(|a, b| a.g_c.total_cmp(&b.g_c));
    Ok(points)
}

/// First critical coupling, attached to the mode of lowest frequency.
pub fn first_critical_coupling(params: &LatticeParams) -> Result<Option<CriticalPoint>> {
    Ok(critical_couplings(params, (0.0, f64::INFINITY))?.into_iter().next())
}

/// Candidate ground branch of the two-exciton truncation. Mode indices are
/// zero-based positions in [`normal_modes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Vacuum,
    /// Lower polariton `E_n^-` of one mode, `n ∈ {1, 2}`.
    Single {
        mode: usize,
        n: u32,
    },
    /// One lower polariton in each of two distinct modes, `i < j`.
    Pair {
        i: usize,
        j: usize,
    },
}

impl Level {
    pub fn excitations(&self) -> u32 {
        match self {
            Level::Vacuum => 0,
            Level::Single { n, .. } => *n,
            Level::Pair { .. } => 2,
        }
    }

    fn modes(&self) -> Vec<usize> {
        match *self {
            Level::Vacuum => vec![],
            Level::Single { mode, .. } => vec![mode],
            Level::Pair { i, j } => vec![i, j],
        }
    }
}

/// Energy and `∂E/∂g` of every candidate ground branch at `params.g`.
pub fn ground_candidates(params: &LatticeParams) -> Vec<(Level, f64, f64)> {
    let modes = modes_unchecked(params);
    let g = params.g;
    let ones: Vec<DressedLevel> = modes.iter().map(|m| dressed_unchecked(g, m, 1)).collect();
    let n = modes.len();
    let mut out = Vec::with_capacity(1 + 2 * n + n * n.saturating_sub(1) / 2);
    out.push((Level::Vacuum, 0.0, 0.0));
    for (idx, mode) in modes.iter().enumerate() {
        let one = &ones[idx];
        out.push((Level::Single { mode: idx, n: 1 }, one.e_minus, one.slope_minus(g)));
        let two = dressed_unchecked(g, mode, 2);
        out.push((Level::Single { mode: idx, n: 2 }, two.e_minus, two.slope_minus(g)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((
                Level::Pair { i, j },
                ones[i].e_minus + ones[j].e_minus,
                ones[i].slope_minus(g) + ones[j].slope_minus(g),
            ));
        }
    }
    out
}

/// Lowest candidate branch; ties resolve to the earlier candidate.
pub fn ground_branch(params: &LatticeParams) -> (Level, f64, f64) {
    ground_candidates(params)
        .into_iter()
        .fold(None::<(Level, f64, f64)>, |best, cand| match best {
            Some(b) if b.1 <= cand.1 => Some(b),
            _ => Some(cand),
        })
        .expect("vacuum is always a candidate")
}

fn branch_energy(params: &LatticeParams, level: Level) -> f64 {
    let modes = modes_unchecked(params);
    match level {
        Level::Vacuum => 0.0,
        Level::Single { mode, n } => dressed_unchecked(params.g, &modes[mode], n).e_minus,
        Level::Pair { i, j } => {
            dressed_unchecked(params.g, &modes[i], 1).e_minus + dressed_unchecked(params.g, &modes[j], 1).e_minus
        }
    }
}

/// Couplings inside `window` where the ground branch changes, located by
/// bisection on the energy difference of the two branches to `tolerance`.
///
/// Tangential touchings without a sign change are not reported.
pub fn detect_crossings(params: &LatticeParams, window: (f64, f64), tolerance: f64) -> Result<Vec<CriticalPoint>> {
    params.validate()?;
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo || lo < 0.0 {
        return Err(invalid("g_window", format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance", "must be positive"));
    }
    const SAMPLES: usize = 4000;
    let at = |g: f64| params.with_g(g);
    let mut found = Vec::new();
    let mut prev_g = lo;
    let mut prev = ground_branch(&at(lo)).0;
    for step in 1..=SAMPLES {
        let g = lo + (hi - lo) * step as f64 / SAMPLES as f64;
        let cur = ground_branch(&at(g)).0;
        if cur != prev {
            let diff = |x: f64| {
                let p = at(x);
                branch_energy(&p, prev) - branch_energy(&p, cur)
            };
            let (mut a, mut b) = (prev_g, g);
            let fa = diff(a);
            while b - a > tolerance {
                let mid = 0.5 * (a + b);
                let fm = diff(mid);
                if (fm < 0.0) == (fa < 0.0) || fm == 0.0 && fa == 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let entering = cur
                .modes()
                .into_iter()
                .find(|m| !prev.modes().contains(m))
                .or_else(|| cur.modes().first().copied())
                .unwrap_or(0);
            found.push(CriticalPoint {
                mode_m: entering + 1,
                g_c: 0.5 * (a + b),
                transition: Some((prev, cur)),
            });
        }
        prev = cur;
        prev_g = g;
    }
    Ok(found)
}
