//! One runner per experiment. Each turns a validated [`RunConfig`] into a
//! table (one row per grid point, rows in lexicographic grid order) plus the
//! experiment-specific part of the JSON summary.

use jch_core::dynamics::{max_trace_distance_trajectory, TimeGrid};
use jch_core::jumps::{Jump, JumpDetector};
use jch_core::meanfield::{meanfield_map, MeanFieldParams};
use jch_core::metrics::fidelity;
use jch_core::observables::{ground_energy, three_lowest_levels, total_excitation};
use jch_core::scaling::{fit_exponential, scaling_point};
use jch_core::spectrum::{critical_couplings, detect_crossings, first_critical_coupling, ground_branch, Level};
use jch_core::thermal::{correlation_distance, gibbs_state};
use jch_core::{CriticalPoint, Error, LatticeParams};
use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::config::{invalid, ConfigError, Experiment, RunConfig};

/// Rectangular table of numbers with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// A grid point that could not be computed; its row holds NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub results: Json,
    pub failures: Vec<Failure>,
}

/// Whole-run numeric failure.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericError(pub String);

impl From<Error> for NumericError {
    fn from(e: Error) -> Self {
        NumericError(e.to_string())
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    match cfg.experiment {
        Experiment::Spectrum => spectrum(cfg),
        Experiment::PhaseDiagram => phase_diagram(cfg),
        Experiment::Fidelity => fidelity_scan(cfg),
        Experiment::TraceDistance => trace_distance(cfg),
        Experiment::Excitation => excitation(cfg),
        Experiment::Dynamics => dynamics(cfg),
        Experiment::Scaling => scaling(cfg),
        Experiment::Meanfield => meanfield(cfg),
    }
}

fn lattice(cfg: &RunConfig) -> LatticeParams {
    let delta = if cfg.has("delta_f") { cfg.real("delta_f") } else { 0.0 };
    let beta = if cfg.has("beta") { cfg.real("beta") } else { 1.0 };
    let g = if cfg.has("g_min") { cfg.real("g_min") } else { 0.0 };
    LatticeParams::new(cfg.count("n_sites"), cfg.real("omega_f"), delta, g, beta)
}

fn meanfield_params(cfg: &RunConfig) -> MeanFieldParams {
    MeanFieldParams {
        omega_f: cfg.real("omega_f"),
        omega_a: cfg.real("omega_f") + cfg.real("delta_f"),
        g: cfg.real("g"),
        kappa: 0.0,
        mu: cfg.real("omega_f"),
        z_coord: cfg.real("z"),
        n_max: cfg.count("photon_cutoff"),
        beta: cfg.real("beta"),
        psi_init: cfg.real("psi_init"),
        damping: cfg.real("damping"),
        tol: cfg.real("tol"),
        max_iter: cfg.count("max_iter"),
    }
}

/// Config key that feeds a core parameter of the given name.
fn key_for(cfg: &RunConfig, name: &str) -> String {
    let candidates: &[&str] = match name {
        "g" => &["g_min", "g"],
        "delta_f" | "omega_a" => &["delta_f", "deltas", "delta_min"],
        "beta" => &["beta", "betas"],
        "n_sites" => &["n_sites", "n_min"],
        "n_max" => &["photon_cutoff"],
        "z_coord" | "kappa" => &["z", "hop_min"],
        "mu" => &["mu_min"],
        other => return other.to_string(),
    };
    candidates
        .iter()
        .find(|k| cfg.has(k))
        .map_or(name.to_string(), |k| k.to_string())
}

fn core_invalid(cfg: &RunConfig, e: Error) -> ConfigError {
    match e {
        Error::InvalidParameter { name, reason } => {
            let key = key_for(cfg, name);
            if cfg.has(&key) {
                invalid(cfg, &key, reason)
            } else {
                ConfigError {
                    origin: crate::config::Origin::Default,
                    message: format!("{name}: {reason}"),
                }
            }
        }
        other => ConfigError {
            origin: crate::config::Origin::Default,
            message: other.to_string(),
        },
    }
}

fn positive(cfg: &RunConfig, key: &str) -> Result<(), ConfigError> {
    if cfg.real(key) > 0.0 {
        Ok(())
    } else {
        Err(invalid(cfg, key, format!("must be positive, got {}", cfg.real(key))))
    }
}

/// Physical checks beyond the grid shape.
pub(crate) fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    match cfg.experiment {
        Experiment::Meanfield => {
            meanfield_params(cfg).validate().map_err(|e| core_invalid(cfg, e))?;
            positive(cfg, "g")?;
            if cfg.real("hop_min") < 0.0 {
                return Err(invalid(cfg, "hop_min", "hopping must be non-negative"));
            }
            Ok(())
        }
        Experiment::Scaling => {
            positive(cfg, "dg_step")?;
            for &delta in cfg.list("deltas") {
                LatticeParams::new(cfg.count("n_min"), cfg.real("omega_f"), delta, 0.0, cfg.real("beta"))
                    .validate()
                    .map_err(|e| core_invalid(cfg, e))?;
            }
            Ok(())
        }
        _ => {
            let base = lattice(cfg);
            base.validate().map_err(|e| core_invalid(cfg, e))?;
            if cfg.has("betas") {
                for &b in cfg.list("betas") {
                    base.with_beta(b).validate().map_err(|e| core_invalid(cfg, e))?;
                }
            }
            for key in ["delta_g", "t_max"] {
                if cfg.has(key) {
                    positive(cfg, key)?;
                }
            }
            Ok(())
        }
    }
}

fn jump_json(jumps: &[Jump]) -> Json {
    Json::Array(
        jumps
            .iter()
            .map(|j| json!({ "x": j.x, "magnitude": j.magnitude }))
            .collect(),
    )
}

/// Jumps of `y(x)` using only the finite samples, plus the floor used.
fn jumps(x: &[f64], y: &[f64]) -> Json {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(_, v)| v.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    let detector = JumpDetector::default();
    let found = detector.detect(&xs, &ys);
    json!({ "jumps": jump_json(&found), "floor": if ys.len() >= 2 { detector.floor(&ys) } else { 0.0 } })
}

fn critical_json(points: &[CriticalPoint]) -> Json {
    Json::Array(
        points
            .iter()
            .map(|c| {
                let mut v = json!({ "mode_m": c.mode_m, "g_c": c.g_c });
                if let Some((from, to)) = c.transition {
                    v["from"] = level_json(from);
                    v["to"] = level_json(to);
                }
                v
            })
            .collect(),
    )
}

fn level_json(level: Level) -> Json {
    match level {
        Level::Vacuum => json!({ "kind": "vacuum" }),
        Level::Single { mode, n } => json!({ "kind": "single", "mode": mode, "n": n }),
        Level::Pair { i, j } => json!({ "kind": "pair", "modes": [i, j] }),
    }
}

/// Unwraps per-point results, recording failures against their row.
fn collect<T, const K: usize>(
    results: Vec<jch_core::Result<T>>,
    row_offset: usize,
    failures: &mut Vec<Failure>,
    to_row: impl Fn(&T) -> [f64; K],
) -> Vec<[f64; K]> {
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(v) => to_row(&v),
            Err(e) => {
                failures.push(Failure {
                    row: row_offset + i,
                    message: e.to_string(),
                });
                [f64::NAN; K]
            }
        })
        .collect()
}

fn window(grid: &[f64]) -> (f64, f64) {
    (grid[0], grid[grid.len() - 1])
}

fn spectrum(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let p = lattice(cfg);
    let g = cfg.grid("g");
    let levels = three_lowest_levels(&p, &g)?;
    let mut table = Table::new(&["g", "E0", "E1", "E2", "ground_excitations"]);
    for (&gv, l) in g.iter().zip(&levels) {
        let (branch, _, _) = ground_branch(&p.with_g(gv));
        table.push(vec![gv, l[0], l[1], l[2], branch.excitations() as f64]);
    }
    let closed = critical_couplings(&p, window(&g))?;
    let crossings = detect_crossings(&p, window(&g), 1e-12)?;
    Ok(Outcome {
        table,
        results: json!({ "critical_points": critical_json(&closed), "crossings": critical_json(&crossings) }),
        failures: Vec::new(),
    })
}

fn phase_diagram(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let base = lattice(cfg);
    let (deltas, g) = (cfg.grid("delta"), cfg.grid("g"));
    let mut table = Table::new(&["delta_f", "g", "ground_excitations", "ground_energy"]);
    let mut lines = Vec::new();
    for &d in &deltas {
        let p = base.with_delta(d);
        let rows: Vec<Vec<f64>> = g
            .par_iter()
            .map(|&gv| {
                let (branch, energy, _) = ground_branch(&p.with_g(gv));
                vec![d, gv, branch.excitations() as f64, energy]
            })
            .collect();
        rows.into_iter().for_each(|r| table.push(r));
        let gcs: Vec<f64> = critical_couplings(&p, window(&g))?.iter().map(|c| c.g_c).collect();
        let transitions = detect_crossings(&p, window(&g), 1e-12)?;
        lines.push(json!({ "delta_f": d, "g_c": gcs, "ground_transitions": critical_json(&transitions) }));
    }
    Ok(Outcome {
        table,
        results: json!({ "critical_lines": lines }),
        failures: Vec::new(),
    })
}

fn fidelity_scan(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let base = lattice(cfg);
    let g = cfg.grid("g");
    let (betas, dg) = (cfg.list("betas"), cfg.real("delta_g"));
    let point =
        |p: &LatticeParams| -> jch_core::Result<f64> { fidelity(&gibbs_state(p)?, &gibbs_state(&p.with_g(p.g + dg))?) };
    let gc = first_critical_coupling(&base)?.map(|c| c.g_c);

    let mut failures = Vec::new();
    let mut columns = vec!["g".to_string()];
    let mut curves = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for &beta in betas {
        let p = base.with_beta(beta);
        let raw: Vec<_> = g.par_iter().map(|&gv| point(&p.with_g(gv))).collect();
        let mut col_failures = Vec::new();
        let f: Vec<f64> = collect(raw, 0, &mut col_failures, |v| [*v])
            .into_iter()
            .map(|[v]| v)
            .collect();
        failures.extend(col_failures);
        let at_gc = gc.map(|gc| point(&p.with_g(gc)).unwrap_or(f64::NAN));
        let min = g
            .iter()
            .zip(&f)
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(gv, v)| json!({ "g": gv, "fidelity": v }));
        let mut curve = json!({ "beta": beta, "fidelity_at_g_c1": at_gc, "minimum": min });
        curve["jumps"] = jumps(&g, &f)["jumps"].clone();
        curves.push((beta, at_gc, curve));
        columns.push(format!("F_beta_{beta:?}"));
        values.push(f);
    }
    failures.sort_by_key(|f| f.row);

    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    for (i, &gv) in g.iter().enumerate() {
        let mut row = vec![gv];
        row.extend(values.iter().map(|col| col[i]));
        table.push(row);
    }
    let mut sorted: Vec<(f64, Option<f64>)> = curves.iter().map(|(b, f, _)| (*b, *f)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let deepening = sorted
        .windows(2)
        .all(|w| matches!((w[0].1, w[1].1), (Some(a), Some(b)) if b < a));
    Ok(Outcome {
        table,
        results: json!({
            "delta_g": dg,
            "g_c1": gc,
            "curves": curves.into_iter().map(|c| c.2).collect::<Vec<_>>(),
            "dip_deepens_with_beta": deepening,
        }),
        failures,
    })
}

fn trace_distance(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let p = lattice(cfg);
    let g = cfg.grid("g");
    let raw: Vec<_> = g.par_iter().map(|&gv| correlation_distance(&p.with_g(gv))).collect();
    let mut failures = Vec::new();
    let d: Vec<f64> = collect(raw, 0, &mut failures, |v| [*v])
        .into_iter()
        .map(|[v]| v)
        .collect();
    let mut table = Table::new(&["g", "D"]);
    g.iter().zip(&d).for_each(|(gv, dv)| table.push(vec![*gv, *dv]));
    let found = jumps(&g, &d);
    Ok(Outcome {
        table,
        results: json!({
            "critical_points": critical_json(&critical_couplings(&p, window(&g))?),
            "jumps": found["jumps"],
            "jump_floor": found["floor"],
        }),
        failures,
    })
}

fn excitation(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let base = lattice(cfg);
    let (deltas, g) = (cfg.grid("delta"), cfg.grid("g"));
    let mut table = Table::new(&["delta_f", "g", "excitation", "ground_energy", "ground_slope"]);
    let mut failures = Vec::new();
    let mut per_delta = Vec::new();
    for &d in &deltas {
        let p = base.with_delta(d);
        let raw: Vec<_> = g.par_iter().map(|&gv| total_excitation(&p.with_g(gv))).collect();
        let n: Vec<f64> = collect(raw, table.rows.len(), &mut failures, |v| [*v])
            .into_iter()
            .map(|[v]| v)
            .collect();
        let curve = ground_energy(&p, &g)?;
        for i in 0..g.len() {
            table.push(vec![d, g[i], n[i], curve.energy[i], curve.slope[i]]);
        }
        let branch_changes: Vec<f64> = curve
            .branch_changes()
            .iter()
            .map(|&k| 0.5 * (g[k - 1] + g[k]))
            .collect();
        per_delta.push(json!({
            "delta_f": d,
            "critical_points": critical_json(&critical_couplings(&p, window(&g))?),
            "excitation_jumps": jumps(&g, &n)["jumps"],
            "ground_branch_changes": branch_changes,
        }));
    }
    Ok(Outcome {
        table,
        results: json!({ "per_delta": per_delta }),
        failures,
    })
}

fn dynamics(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let p = lattice(cfg);
    let g = cfg.grid("g");
    let t_max = cfg.real("t_max");
    let raw: Vec<_> = g
        .par_iter()
        .map(|&gv| {
            let q = p.with_g(gv);
            let grid = TimeGrid::for_params(&q, t_max)?;
            max_trace_distance_trajectory(&q, &grid).map(|r| (r, grid.dt))
        })
        .collect();
    let mut failures = Vec::new();
    let rows = collect(raw, 0, &mut failures, |(r, dt)| {
        [r.max_distance, r.grid_max, r.argmax_time, *dt]
    });
    let mut table = Table::new(&["g", "max_distance", "grid_max", "argmax_time", "dt"]);
    for (gv, r) in g.iter().zip(&rows) {
        table.push(vec![*gv, r[0], r[1], r[2], r[3]]);
    }
    let maxima: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let found = jumps(&g, &maxima);
    Ok(Outcome {
        table,
        results: json!({
            "t_max": t_max,
            "critical_points": critical_json(&critical_couplings(&p, window(&g))?),
            "jumps": found["jumps"],
            "jump_floor": found["floor"],
        }),
        failures,
    })
}

fn scaling(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let (omega_f, beta, step) = (cfg.real("omega_f"), cfg.real("beta"), cfg.real("dg_step"));
    let sizes: Vec<usize> = (cfg.count("n_min")..=cfg.count("n_max")).collect();
    let mut table = Table::new(&["delta_f", "n_sites", "g_c", "derivative", "central_difference"]);
    let mut failures = Vec::new();
    let mut fits = Vec::new();
    let mut magnitudes: Vec<(f64, Vec<f64>)> = Vec::new();
    for &d in cfg.list("deltas") {
        let raw: Vec<_> = sizes
            .par_iter()
            .map(|&n| scaling_point(omega_f, d, beta, n, step))
            .collect();
        let rows = collect(raw, table.rows.len(), &mut failures, |s| {
            [s.g_c, s.derivative.richardson, s.derivative.central]
        });
        let mut points = Vec::new();
        for (&n, r) in sizes.iter().zip(&rows) {
            table.push(vec![d, n as f64, r[0], r[1], r[2]]);
            if r[1].is_finite() {
                points.push((n as f64, r[1]));
            }
        }
        let fit = match fit_exponential(&points) {
            Ok(f) => json!({
                "delta_f": d,
                "a": f.a,
                "b": f.b,
                "c": f.c,
                "rms_residual": f.rms_residual,
                "data_range": f.data_range,
                "relative_rms": f.relative_rms(),
                "converged": f.converged,
                "iterations": f.iterations,
            }),
            Err(e) => json!({ "delta_f": d, "error": e.to_string() }),
        };
        fits.push(fit);
        magnitudes.push((d, rows.iter().map(|r| r[1].abs()).collect()));
    }
    magnitudes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ordered = (0..sizes.len()).all(|i| magnitudes.windows(2).all(|w| w[1].1[i] < w[0].1[i]));
    let fit_failed = fits.iter().any(|f| f.get("error").is_some());
    if fit_failed {
        // a failed fit has no row of its own; charge it to the last row
        failures.push(Failure {
            row: table.rows.len() - 1,
            message: "exponential fit failed".into(),
        });
    }
    Ok(Outcome {
        table,
        results: json!({ "fits": fits, "magnitude_decreases_with_delta": ordered }),
        failures,
    })
}

fn meanfield(cfg: &RunConfig) -> Result<Outcome, NumericError> {
    let base = meanfield_params(cfg);
    let (hopping, chemical) = (cfg.grid("hop"), cfg.grid("mu"));
    let map = meanfield_map(&base, &hopping, &chemical)?;
    let mut table = Table::new(&[
        "hopping",
        "chemical",
        "psi",
        "trace_distance",
        "converged",
        "iterations",
        "residual",
        "top_population",
    ]);
    let mut failures = Vec::new();
    for (i, &h) in hopping.iter().enumerate() {
        for (j, &c) in chemical.iter().enumerate() {
            let row = match map.get(i, j) {
                Ok(r) => vec![
                    h,
                    c,
                    r.psi,
                    r.trace_distance,
                    f64::from(u8::from(r.converged)),
                    r.iterations as f64,
                    r.residual,
                    r.top_population,
                ],
                Err(e) => {
                    failures.push(Failure {
                        row: table.rows.len(),
                        message: e.to_string(),
                    });
                    let mut row = vec![f64::NAN; 8];
                    row[0] = h;
                    row[1] = c;
                    row
                }
            };
            table.push(row);
        }
    }
    let unconverged = map
        .results
        .iter()
        .filter(|r| r.as_ref().is_ok_and(|r| !r.converged))
        .count();
    let rows: Vec<Json> = chemical
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let (psi, dist) = (map.psi_onset(j), map.distance_onset(j));
            let agree = match (psi, dist) {
                (Some(a), Some(b)) => a.abs_diff(b) <= 1,
                (None, None) => true,
                _ => false,
            };
            json!({
                "chemical": c,
                "psi_onset": psi.map(|k| hopping[k]),
                "distance_onset": dist.map(|k| hopping[k]),
                "boundaries_agree": agree,
            })
        })
        .collect();
    Ok(Outcome {
        table,
        results: json!({
            "psi_threshold": jch_core::meanfield::PSI_ONSET,
            "distance_threshold": jch_core::meanfield::D_ONSET,
            "boundaries": rows,
            "unconverged_points": unconverged,
        }),
        failures,
    })
}
