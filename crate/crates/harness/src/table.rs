//! Regime classification table: layer widths and bulk state of the kinetic
//! solution in each scaling regime at one ε.
//!
//! - Milne width: e-folding distance from the wall of the higher-moment
//!   anisotropy (the intensity with its angular mean and its linear-in-μ part
//!   removed), so that the diffusive bulk flux does not count as a layer.
//! - Thermalization width: e-folding distance of the equilibrium departure.
//! - Bulk equilibrium iff the mid-slab departure is below 10ε.

use crate::config::ExperimentConfig;
use crate::error::{config, Result};
use crate::export::{create_dir, write_csv, write_json, CsvTable};
use crate::run::kinetic_problem;
use radtherm_core::{KineticProblem, KineticState};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

/// `(label, β, γ)` of the five regimes.
pub const REGIMES: [(&str, f64, f64); 5] = [
    ("1.1", -1.0, 0.0),
    ("1.2", -1.0, -1.0),
    ("2", 0.0, -1.0),
    ("3", 1.0, -1.0),
    ("4", 2.0, -1.0),
];

/// Column of the classification grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    /// One layer: Milne and thermalization widths coincide.
    Coincident,
    /// A Milne layer nested inside a thinner-than-slab thermalization layer.
    Nested,
    /// Thermalization on the slab scale: a transition bulk.
    Transition,
    /// No thermalization layer: non-equilibrium bulk.
    NonEquilibrium,
}

impl Column {
    pub fn label(self) -> &'static str {
        match self {
            Self::Coincident => "lM=lT<<L",
            Self::Nested => "lM<<lT<<L",
            Self::Transition => "lM<<lT=L",
            Self::NonEquilibrium => "lM<<L<<lT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub regime: &'static str,
    pub beta: f64,
    pub gamma: f64,
    pub ell_m: f64,
    pub ell_t: f64,
    pub milne_width: f64,
    pub thermal_width: f64,
    pub width_ratio: f64,
    pub wall_departure: f64,
    pub bulk_departure: f64,
    /// Relative drop of the departure from the wall cell to mid-slab.
    pub departure_drop: f64,
    pub bulk_anisotropy: f64,
    pub milne_layer: bool,
    pub thermalization: &'static str,
    pub bulk: &'static str,
    pub column: Column,
    pub column_label: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeTable {
    pub experiment: &'static str,
    pub eps: f64,
    /// Equilibrium threshold on the bulk departure.
    pub equilibrium_threshold: f64,
    /// Width ratio above which the two layers count as one.
    pub coincidence_ratio: f64,
    /// Layer scale `ε ln(1/ε)` bounding a Milne width.
    pub milne_bound: f64,
    pub rows: Vec<TableRow>,
}

/// Per-cell higher-moment anisotropy `Σ_g w_g Σ_d w_d |r| / Σ_g w_g Σ_d w_d ⟨I⟩`,
/// `r = I − ⟨I⟩ − μ J/⟨μ²⟩` with `J` the first angular moment.
pub fn higher_anisotropy(problem: &KineticProblem, state: &KineticState) -> Vec<f64> {
    let quad = problem.quadrature();
    let (w, mus) = (quad.weights(), quad.mus());
    let m2: f64 = w.iter().zip(&mus).map(|(w, m)| w * m * m).sum();
    let fw = problem.frequencies().weights();
    (0..state.cells)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for g in 0..state.groups {
                let col: Vec<f64> = (0..state.directions).map(|d| state.at(i, d, g)).collect();
                let mean = quad.mean(&col);
                let j = w.iter().zip(&mus).zip(&col).map(|((w, m), v)| w * m * v).sum::<f64>() / m2;
                for d in 0..state.directions {
                    num += fw[g] * w[d] * (col[d] - mean - mus[d] * j).abs();
                    den += fw[g] * w[d] * mean;
                }
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

/// First position from the left wall where `|f − f_r|` falls below `|f_0 − f_r|/e`,
/// with `r` the reference index; `x_r` when it never does.
pub fn efold_width(x: &[f64], f: &[f64], r: usize) -> f64 {
    let e0 = (f[0] - f[r]).abs();
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // A profile flat to rounding has no layer.
    if e0 <= 1e-12 * scale || e0 < 1e-300 {
        return 0.0;
    }
    (0..r)
        .find(|&i| (f[i] - f[r]).abs() < e0 / std::f64::consts::E)
        .map_or(x[r], |i| x[i])
}

struct Measured {
    row: TableRow,
    profile: CsvTable,
}

fn measure(cfg: &ExperimentConfig, eps: f64, (label, beta, gamma): (&'static str, f64, f64)) -> Result<Measured> {
    let mut c = cfg.clone();
    c.regime.beta = beta;
    c.regime.gamma = gamma;
    let problem = kinetic_problem(&c, eps)?;
    let state = problem.solve_stationary(&c.solver.options())?;
    let metrics = problem.equilibrium_departure(&state);
    let x = problem.mesh.centers();
    let dep: Vec<f64> = metrics.iter().map(|m| m.departure).collect();
    let h = higher_anisotropy(&problem, &state);
    let mid = x.len() / 2;
    let mut profile = CsvTable::new([
        ("x", "cell centre"),
        ("T", "material temperature"),
        ("departure", "relative distance of I from B(T)"),
        ("anisotropy", "relative distance of I from its angular mean"),
        ("higher_anisotropy", "anisotropy beyond the linear-in-mu part"),
    ]);
    for i in 0..x.len() {
        profile.push(vec![
            x[i].into(),
            state.temperature[i].into(),
            dep[i].into(),
            metrics[i].anisotropy.into(),
            h[i].into(),
        ]);
    }
    let (milne_width, thermal_width) = (efold_width(x, &h, mid), efold_width(x, &dep, mid));
    let ratio = milne_width / thermal_width;
    let drop = (dep[0] - dep[mid]) / dep[0];
    let bulk_eq = dep[mid] < 10.0 * eps;
    let (column, thermalization, bulk) = if bulk_eq {
        if ratio > eps.powf(0.25) {
            (Column::Coincident, "coincident", "equilibrium")
        } else {
            (Column::Nested, "nested", "equilibrium")
        }
    } else if drop > 0.1 {
        (Column::Transition, "bulk", "transition")
    } else {
        (Column::NonEquilibrium, "none", "non_equilibrium")
    };
    let r = &problem.regime;
    Ok(Measured {
        row: TableRow {
            regime: label,
            beta,
            gamma,
            ell_m: r.ell_m(),
            ell_t: r.ell_t(),
            milne_width,
            thermal_width,
            width_ratio: ratio,
            wall_departure: dep[0],
            bulk_departure: dep[mid],
            departure_drop: drop,
            bulk_anisotropy: metrics[mid].anisotropy,
            milne_layer: milne_width < eps * (1.0 / eps).ln(),
            thermalization,
            bulk,
            column,
            column_label: column.label(),
        },
        profile,
    })
}

pub struct TableOutput {
    pub table: RegimeTable,
    pub profiles: Vec<CsvTable>,
}

pub fn run_regime_table(cfg: &ExperimentConfig) -> Result<TableOutput> {
    let eps = cfg.regime.eps[0];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| config(format!("worker pool: {e}")))?;
    let measured: Vec<Result<Measured>> = pool.install(|| REGIMES.par_iter().map(|&r| measure(cfg, eps, r)).collect());
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    for m in measured {
        let m = m?;
        rows.push(m.row);
        profiles.push(m.profile);
    }
    Ok(TableOutput {
        table: RegimeTable {
            experiment: "regime_table",
            eps,
            equilibrium_threshold: 10.0 * eps,
            coincidence_ratio: eps.powf(0.25),
            milne_bound: eps * (1.0 / eps).ln(),
            rows,
        },
        profiles,
    })
}

pub fn regime_csv(table: &RegimeTable) -> CsvTable {
    let mut t = CsvTable::new([
        ("regime", "regime label"),
        ("beta", "absorption exponent"),
        ("gamma", "scattering exponent"),
        ("milne_width", "e-fold width of the higher-moment anisotropy"),
        ("thermal_width", "e-fold width of the equilibrium departure"),
        ("width_ratio", "milne_width / thermal_width"),
        ("bulk_departure", "equilibrium departure at mid-slab"),
        ("bulk_anisotropy", "anisotropy at mid-slab"),
        ("milne_layer", "Milne layer present"),
        ("thermalization", "coincident | nested | bulk | none"),
        ("bulk", "equilibrium | transition | non_equilibrium"),
        ("column", "classification column"),
    ]);
    for r in &table.rows {
        t.push(vec![
            r.regime.into(),
            r.beta.into(),
            r.gamma.into(),
            r.milne_width.into(),
            r.thermal_width.into(),
            r.width_ratio.into(),
            r.bulk_departure.into(),
            r.bulk_anisotropy.into(),
            r.milne_layer.into(),
            r.thermalization.into(),
            r.bulk.into(),
            r.column_label.into(),
        ]);
    }
    t
}

pub fn write_table(dir: &Path, out: &TableOutput) -> Result<()> {
    create_dir(dir)?;
    write_csv(&dir.join("regime_table.csv"), &regime_csv(&out.table))?;
    write_json(&dir.join("regime_table.json"), &out.table)?;
    for (row, profile) in out.table.rows.iter().zip(&out.profiles) {
        write_csv(&dir.join(format!("regime_{}.csv", row.regime)), profile)?;
    }
    Ok(())
}

pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    write_table(&cfg.output, &run_regime_table(cfg)?)
}
