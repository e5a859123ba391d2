//! Single kinetic run: stationary solve or implicit time stepping.

use crate::config::ExperimentConfig;
use crate::error::{io, Result};
use crate::export::{create_dir, write_csv, write_json, CsvTable};
use radtherm_core::kinetic::{write_snapshot, LightMode};
use radtherm_core::{AngularQuadrature, KineticProblem, KineticState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;

/// Kinetic problem of `cfg` at one `eps`.
pub fn kinetic_problem(cfg: &ExperimentConfig, eps: f64) -> Result<KineticProblem> {
    let quad = AngularQuadrature::slab(cfg.grid.angular_order)?;
    Ok(KineticProblem::new(
        cfg.regime.regime(eps)?,
        cfg.material()?,
        cfg.mesh()?,
        &quad,
        cfg.grid.l_max,
        cfg.boundary.left.clone(),
        cfg.boundary.right.clone(),
    )?)
}

/// Cell-centre flux as the mean of the two face fluxes.
pub fn center_flux(problem: &KineticProblem, state: &KineticState) -> Vec<f64> {
    problem.face_fluxes(state).windows(2).map(|f| 0.5 * (f[0] + f[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub experiment: &'static str,
    pub regime: &'static str,
    pub eps: f64,
    pub beta: f64,
    pub gamma: f64,
    pub light: LightMode<f64>,
    pub ell_m: f64,
    pub ell_t: f64,
    pub cells: usize,
    pub directions: usize,
    pub groups: usize,
    pub steps: usize,
    pub iterations: usize,
    pub time: f64,
    pub total_energy: f64,
    pub max_departure: f64,
    pub max_anisotropy: f64,
    pub seed: u64,
}

pub struct RunReport {
    pub summary: RunSummary,
    pub state: KineticState,
    pub profile: CsvTable,
    /// Per-step diagnostics of time runs.
    pub history: Option<CsvTable>,
}

fn history_table() -> CsvTable {
    CsvTable::new([
        ("step", "time step index"),
        ("time", "elapsed time"),
        ("energy", "total energy C*T + (1/c) * integrated intensity"),
        ("T_min", "smallest cell temperature"),
        ("T_max", "largest cell temperature"),
        ("departure_max", "largest equilibrium departure"),
    ])
}

fn push_history(table: &mut CsvTable, step: usize, problem: &KineticProblem, state: &KineticState) {
    let t = &state.temperature;
    let dep = problem
        .equilibrium_departure(state)
        .iter()
        .fold(0.0f64, |m, c| m.max(c.departure));
    table.push(vec![
        step.into(),
        state.time.into(),
        problem.total_energy(state).into(),
        t.iter().copied().fold(f64::INFINITY, f64::min).into(),
        t.iter().copied().fold(f64::NEG_INFINITY, f64::max).into(),
        dep.into(),
    ]);
}

pub fn single_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let eps = cfg.regime.eps[0];
    let problem = kinetic_problem(cfg, eps)?;
    let light = problem.regime.light;
    let (state, history, steps) = if light == LightMode::Stationary {
        (problem.solve_stationary(&cfg.solver.options())?, None, 0)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let t0 = cfg.time.initial_temperature;
        let amp = cfg.time.perturbation;
        let temps: Vec<f64> = (0..problem.mesh.cell_count())
            .map(|_| t0 * (1.0 + amp * rng.gen_range(-1.0..=1.0)))
            .collect();
        let mut state = problem.equilibrium_state(&temps)?;
        let mut history = history_table();
        push_history(&mut history, 0, &problem, &state);
        for k in 1..=cfg.time.steps {
            state = match light {
                LightMode::Instant => problem.step_time_instant(&state, cfg.time.dt)?,
                _ => problem.step_time_finite(&state, cfg.time.dt)?,
            };
            push_history(&mut history, k, &problem, &state);
        }
        (state, Some(history), cfg.time.steps)
    };
    let metrics = problem.equilibrium_departure(&state);
    let flux = center_flux(&problem, &state);
    let mut profile = CsvTable::new([
        ("x", "cell centre"),
        ("T", "material temperature"),
        ("flux", "net radiative flux"),
        ("departure", "relative distance of I from B(T)"),
        ("anisotropy", "relative distance of I from its angular mean"),
    ]);
    for (i, &x) in problem.mesh.centers().iter().enumerate() {
        profile.push(vec![
            x.into(),
            state.temperature[i].into(),
            flux[i].into(),
            metrics[i].departure.into(),
            metrics[i].anisotropy.into(),
        ]);
    }
    let r = &problem.regime;
    let summary = RunSummary {
        experiment: "single_run",
        regime: r.classify().label(),
        eps,
        beta: r.beta,
        gamma: r.gamma,
        light,
        ell_m: r.ell_m(),
        ell_t: r.ell_t(),
        cells: state.cells,
        directions: state.directions,
        groups: state.groups,
        steps,
        iterations: state.iterations,
        time: state.time,
        total_energy: problem.total_energy(&state),
        max_departure: metrics.iter().fold(0.0, |m, c| m.max(c.departure)),
        max_anisotropy: metrics.iter().fold(0.0, |m, c| m.max(c.anisotropy)),
        seed: cfg.seed,
    };
    Ok(RunReport {
        summary,
        state,
        profile,
        history,
    })
}

pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    create_dir(dir)?;
    write_csv(&dir.join("profile.csv"), &report.profile)?;
    if let Some(h) = &report.history {
        write_csv(&dir.join("history.csv"), h)?;
    }
    let path = dir.join("snapshot.bin");
    let mut bytes = Vec::new();
    write_snapshot(&report.state, &mut bytes).map_err(io(&path))?;
    std::fs::write(&path, bytes).map_err(io(&path))?;
    write_json(&dir.join("run.json"), &report.summary)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    write_run(&cfg.output, &single_run(cfg)?)
}
