//! ε-convergence study: kinetic solutions against the matched limit problem.

use crate::config::{bulk_window, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::export::{create_dir, write_csv, write_json, CsvTable, Field};
use crate::run::kinetic_problem;
use radtherm_core::boundary_layers::{
    boundary_temperature, incoming_from_source, BoundaryDatum, LayerOptions,
};
use radtherm_core::{DiffusionProblem, DiffusionState, KineticProblem, LayerMaterial};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyEntry {
    pub eps: f64,
    pub window: [f64; 2],
    pub window_cells: usize,
    /// Max of `|T_kinetic − T_limit|` over the bulk window.
    pub linf: f64,
    /// `Σ h |T_kinetic − T_limit|` over the bulk window, divided by its width.
    pub l1: f64,
    pub left: BoundaryDatum<f64>,
    pub right: BoundaryDatum<f64>,
    /// Equilibrium departure and anisotropy of the kinetic solution at mid-slab.
    pub bulk_departure: f64,
    pub bulk_anisotropy: f64,
    pub kinetic_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub experiment: &'static str,
    pub regime: &'static str,
    pub beta: f64,
    pub gamma: f64,
    pub eps: Vec<f64>,
    pub entries: Vec<StudyEntry>,
    /// Least-squares slopes of `ln error` against `ln ε`; only from ≥ 3 entries.
    pub order_linf: Option<f64>,
    pub order_l1: Option<f64>,
    pub partial: bool,
    pub failure: Option<String>,
    pub seed: u64,
}

pub struct StudyOutput {
    pub report: StudyReport,
    /// Per-ε kinetic-against-limit profiles in the order of `report.entries`.
    pub profiles: Vec<CsvTable>,
    /// Per-ε limit solutions with group moments and flux.
    pub limits: Vec<CsvTable>,
    /// Wall-clock seconds per completed ε.
    pub timings: Vec<(f64, f64)>,
    /// The failure that cut the study short.
    pub error: Option<HarnessError>,
}

/// Limit problem on the kinetic mesh with Dirichlet data from the boundary-layer
/// pipeline, and its stationary state.
pub struct LimitSolution {
    pub problem: DiffusionProblem,
    pub state: DiffusionState,
}

impl LimitSolution {
    /// Columns x, T, phi_g per group and the cell-centre flux.
    pub fn table(&self) -> CsvTable {
        let fr = &self.problem.frequencies;
        let ng = fr.len();
        let mut cols = vec![
            ("x".to_string(), "cell centre".to_string()),
            ("T".into(), "limit-problem temperature".into()),
        ];
        cols.extend((0..ng).map(|g| (format!("phi_{g}"), format!("angular mean of I in group {g}"))));
        cols.push(("flux".into(), "total radiative flux in units of eps".into()));
        let mut t = CsvTable::new(cols);
        let faces = self.problem.face_fluxes(&self.state);
        let s = &self.state;
        for (i, &x) in s.positions.iter().enumerate() {
            let mut row: Vec<Field> = vec![x.into(), s.temperature[i].into()];
            row.extend((0..ng).map(|g| {
                let phi = s.phi.as_ref().map_or_else(|| fr.planck(g, s.temperature[i]), |p| p[i * ng + g]);
                Field::from(phi)
            }));
            row.push((0.5 * (faces[i] + faces[i + 1])).into());
            t.push(row);
        }
        t
    }
}

pub fn limit_solution(problem: &KineticProblem, options: &LayerOptions) -> Result<LimitSolution> {
    let class = problem.regime.classify();
    let quad = problem.quadrature();
    let fr = problem.frequencies();
    let datum = |source, p| -> Result<BoundaryDatum<f64>> {
        let incoming = incoming_from_source(source, quad, fr);
        let material = LayerMaterial::frozen(&problem.model, p);
        Ok(boundary_temperature(class, &incoming, &material, &problem.operator, options)?)
    };
    let left = datum(&problem.left, 0.0)?;
    let right = datum(&problem.right, 1.0)?;
    let diff = DiffusionProblem::new(
        class,
        &problem.model,
        &problem.operator,
        problem.mesh.clone(),
        left,
        right,
    )?;
    let state = diff.solve_stationary()?;
    Ok(LimitSolution { problem: diff, state })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fitted_order(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 || pts.len() != points.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn layer_options(cfg: &ExperimentConfig) -> LayerOptions {
    let mut o = LayerOptions::default();
    o.milne.length = cfg.layers.milne_length;
    o.thermal.length = cfg.layers.thermal_length;
    o
}

struct Solved {
    entry: StudyEntry,
    profile: CsvTable,
    limit: CsvTable,
    seconds: f64,
}

fn solve_one(cfg: &ExperimentConfig, eps: f64) -> Result<Solved> {
    let start = Instant::now();
    let problem = kinetic_problem(cfg, eps)?;
    let state = problem.solve_stationary(&cfg.solver.options())?;
    let lim = limit_solution(&problem, &layer_options(cfg))?;
    let limit = &lim.state;
    let (lo, hi) = bulk_window(&problem.regime);
    let metrics = problem.equilibrium_departure(&state);
    let xs = problem.mesh.centers();
    let h = problem.mesh.widths();
    let mut table = CsvTable::new([
        ("x", "cell centre"),
        ("T_kinetic", "kinetic temperature"),
        ("T_limit", "limit-problem temperature"),
        ("error", "T_kinetic - T_limit"),
        ("in_window", "cell lies in the bulk window"),
        ("departure", "kinetic equilibrium departure"),
        ("anisotropy", "kinetic anisotropy"),
    ]);
    let (mut linf, mut l1, mut width, mut cells) = (0.0f64, 0.0, 0.0, 0);
    for i in 0..xs.len() {
        let e = state.temperature[i] - limit.temperature[i];
        let inside = xs[i] >= lo && xs[i] <= hi;
        if inside {
            linf = linf.max(e.abs());
            l1 += h[i] * e.abs();
            width += h[i];
            cells += 1;
        }
        table.push(vec![
            xs[i].into(),
            state.temperature[i].into(),
            limit.temperature[i].into(),
            e.into(),
            inside.into(),
            metrics[i].departure.into(),
            metrics[i].anisotropy.into(),
        ]);
    }
    if cells == 0 {
        return Err(crate::error::config(format!(
            "bulk window [{lo}, {hi}] holds no cell centre at eps = {eps}"
        )));
    }
    let mid = xs.len() / 2;
    let entry = StudyEntry {
        eps,
        window: [lo, hi],
        window_cells: cells,
        linf,
        l1: l1 / width,
        left: lim.problem.left.clone(),
        right: lim.problem.right.clone(),
        bulk_departure: metrics[mid].departure,
        bulk_anisotropy: metrics[mid].anisotropy,
        kinetic_iterations: state.iterations,
    };
    Ok(Solved {
        entry,
        profile: table,
        limit: lim.table(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let eps = cfg.regime.eps.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| crate::error::config(format!("worker pool: {e}")))?;
    let results: Vec<Result<Solved>> =
        pool.install(|| eps.par_iter().map(|&e| solve_one(cfg, e)).collect());
    let class = cfg.regime.regime(eps[0])?.classify();
    let mut report = StudyReport {
        experiment: "convergence_study",
        regime: class.label(),
        beta: cfg.regime.beta,
        gamma: cfg.regime.gamma,
        eps: eps.clone(),
        entries: Vec::new(),
        order_linf: None,
        order_l1: None,
        partial: false,
        failure: None,
        seed: cfg.seed,
    };
    let (mut profiles, mut limits, mut timings, mut error) = (Vec::new(), Vec::new(), Vec::new(), None);
    for (e, r) in eps.iter().zip(results) {
        match r {
            Ok(s) => {
                report.entries.push(s.entry);
                profiles.push(s.profile);
                limits.push(s.limit);
                timings.push((*e, s.seconds));
            }
            Err(err) => {
                report.partial = true;
                report.failure = Some(format!("eps = {e}: {err}"));
                error = Some(err);
                break;
            }
        }
    }
    let pts = |f: fn(&StudyEntry) -> f64| -> Vec<(f64, f64)> {
        report.entries.iter().map(|s| (s.eps, f(s))).collect()
    };
    let orders = (fitted_order(&pts(|s| s.linf)), fitted_order(&pts(|s| s.l1)));
    (report.order_linf, report.order_l1) = orders;
    Ok(StudyOutput {
        report,
        profiles,
        limits,
        timings,
        error,
    })
}

pub fn convergence_table(report: &StudyReport) -> CsvTable {
    let mut t = CsvTable::new([
        ("eps", "scaling parameter"),
        ("linf", "max |T_kinetic - T_limit| on the bulk window"),
        ("l1", "mean |T_kinetic - T_limit| on the bulk window"),
        ("window_lo", "left end of the bulk window"),
        ("window_hi", "right end of the bulk window"),
        ("bulk_departure", "kinetic equilibrium departure at mid-slab"),
        ("bulk_anisotropy", "kinetic anisotropy at mid-slab"),
    ]);
    for s in &report.entries {
        t.push(vec![
            s.eps.into(),
            s.linf.into(),
            s.l1.into(),
            s.window[0].into(),
            s.window[1].into(),
            s.bulk_departure.into(),
            s.bulk_anisotropy.into(),
        ]);
    }
    t
}

pub fn write_study(dir: &Path, out: &StudyOutput) -> Result<()> {
    create_dir(dir)?;
    write_csv(&dir.join("convergence.csv"), &convergence_table(&out.report))?;
    for (k, table) in out.profiles.iter().enumerate() {
        write_csv(&dir.join(format!("profile_{k}.csv")), table)?;
    }
    for (k, table) in out.limits.iter().enumerate() {
        write_csv(&dir.join(format!("limit_{k}.csv")), table)?;
    }
    write_json(&dir.join("study.json"), &out.report)?;
    let timings: Vec<serde_json::Value> = out
        .timings
        .iter()
        .map(|(e, s)| serde_json::json!({ "eps": e, "seconds": s }))
        .collect();
    write_json(&dir.join("timings.json"), &timings)
}

/// Runs the study, writes every file, then surfaces the failure of a partial study.
pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let mut out = run_convergence_study(cfg)?;
    write_study(&cfg.output, &out)?;
    match out.error.take() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
