//! Initial-layer study: bulk initial layers and the initial-boundary layer.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::export::{create_dir, write_csv, write_json, CsvTable, Field};
use radtherm_core::boundary_layers::incoming_from_source;
use radtherm_core::initial_layers::{
    closed_form_initial_layer, default_tau_max, solve_initial_boundary_layer, solve_initial_layer,
    CornerCase, CornerOptions, InitialLayerVariant, InitialOptions, TemperaturePath,
};
use radtherm_core::kinetic::LightMode;
use radtherm_core::{AngularQuadrature, LayerMaterial, LayerTrajectory, ScatteringOperator};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: InitialLayerVariant,
    pub tau_max: f64,
    pub steps: usize,
    pub final_temperature: f64,
    pub settled: bool,
    pub invariant_drift: Option<f64>,
    /// Max deviation of the integrated end state from the closed form.
    pub closed_form_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerSummary {
    pub case: CornerCase,
    pub length: f64,
    pub steps: usize,
    pub final_wall_temperature: f64,
    pub final_far_temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialReport {
    pub experiment: &'static str,
    pub regime: &'static str,
    pub eps: f64,
    pub light: LightMode<f64>,
    pub initial_temperature: f64,
    pub variants: Vec<VariantSummary>,
    pub corner: Option<CornerSummary>,
}

pub struct InitialOutput {
    pub report: InitialReport,
    pub profiles: Vec<(String, CsvTable)>,
}

fn variant_name(v: InitialLayerVariant) -> &'static str {
    match v {
        InitialLayerVariant::Absorption => "absorption",
        InitialLayerVariant::AbsorptionScattering => "absorption_scattering",
        InitialLayerVariant::Scattering => "scattering",
        InitialLayerVariant::Thermalization => "thermalization",
    }
}

fn trajectory_csv(traj: &LayerTrajectory) -> CsvTable {
    let (nd, ng) = (traj.directions, traj.groups);
    let total: f64 = traj.angular_weights.iter().sum();
    let mut cols = vec![
        ("tau".to_string(), "fast time".to_string()),
        ("T".into(), "material temperature".into()),
        ("anisotropy".into(), "max relative distance of I from its angular mean".into()),
    ];
    cols.extend((0..ng).map(|g| (format!("phi_{g}"), format!("angular mean of I in group {g}"))));
    let mut t = CsvTable::new(cols);
    for (k, &tau) in traj.taus.iter().enumerate() {
        let field = &traj.intensity[k];
        let means: Vec<f64> = (0..ng)
            .map(|g| (0..nd).map(|d| traj.angular_weights[d] * field[d * ng + g]).sum::<f64>() / total)
            .collect();
        let scale = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = (0..nd * ng).fold(0.0f64, |m, j| m.max((field[j] - means[j % ng]).abs()));
        let an = if scale > 0.0 { dev / scale } else { 0.0 };
        let mut row: Vec<Field> = vec![tau.into(), traj.temperature[k].into(), an.into()];
        row.extend(means.into_iter().map(Field::from));
        t.push(row);
    }
    t
}

pub fn run_initial_layer_study(cfg: &ExperimentConfig) -> Result<InitialOutput> {
    let eps = cfg.regime.eps[0];
    let light = cfg.regime.light_mode()?;
    let class = cfg.regime.regime(eps)?.classify();
    let model = cfg.material()?;
    let quad = AngularQuadrature::slab(cfg.grid.angular_order)?;
    let op = ScatteringOperator::new(&model.kernel, &quad, cfg.grid.l_max)?;
    let material = LayerMaterial::frozen(&model, cfg.initial.position);
    let ng = model.groups();
    let t0 = cfg.initial.temperature;
    let i0: Vec<f64> = (0..quad.len())
        .flat_map(|d| (0..ng).map(move |g| (d, g)))
        .map(|(d, g)| cfg.initial.intensity.value(quad.mu(d), &model.frequencies, g))
        .collect();
    let mut variants = Vec::new();
    let mut profiles = Vec::new();
    for variant in InitialLayerVariant::for_regime(class, light)? {
        let tau_max = match cfg.initial.tau_max {
            Some(t) => t,
            None => default_tau_max(variant, &material, &op)?,
        };
        let traj = solve_initial_layer(variant, light, &material, &op, &i0, t0, tau_max, &InitialOptions::default())?;
        let tau_end = *traj.taus.last().unwrap_or(&0.0);
        let history = |tau: f64| traj.temperature_at(tau);
        let path = if variant.evolves_temperature(light) {
            TemperaturePath::History(&history)
        } else {
            TemperaturePath::Frozen(t0)
        };
        let exact = closed_form_initial_layer(variant, &material, &op, &i0, path, tau_end)?;
        let closed_form_error = exact
            .iter()
            .zip(traj.final_intensity())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        profiles.push((format!("trajectory_{}", variant_name(variant)), trajectory_csv(&traj)));
        variants.push(VariantSummary {
            variant,
            tau_max,
            steps: traj.taus.len().saturating_sub(1),
            final_temperature: traj.final_temperature(),
            settled: traj.settled,
            invariant_drift: traj.invariant_drift(),
            closed_form_error,
        });
    }
    let corner = if cfg.initial.corner {
        let incoming = incoming_from_source(&cfg.boundary.left, &quad, &model.frequencies);
        let c = solve_initial_boundary_layer(class, light, &material, &op, &i0, t0, &incoming, &CornerOptions::default())?;
        let (nd, n) = (c.directions, c.positions.len());
        let total: f64 = quad.weights().iter().sum();
        let fw = model.frequencies.weights();
        let energy = |field: &[f64], i: usize| -> f64 {
            (0..nd)
                .flat_map(|d| (0..ng).map(move |g| (d, g)))
                .map(|(d, g)| quad.weights()[d] * fw[g] * field[(i * nd + d) * ng + g])
                .sum::<f64>()
                / total
        };
        let mut t = CsvTable::new([
            ("tau", "fast time"),
            ("T_wall", "temperature of the cell at the wall"),
            ("T_far", "temperature of the last cell"),
            ("phi_wall", "frequency-integrated angular mean at the wall"),
            ("phi_far", "frequency-integrated angular mean in the last cell"),
        ]);
        for (k, &tau) in c.taus.iter().enumerate() {
            t.push(vec![
                tau.into(),
                c.temperature[k][0].into(),
                c.temperature[k][n - 1].into(),
                energy(&c.intensity[k], 0).into(),
                energy(&c.intensity[k], n - 1).into(),
            ]);
        }
        profiles.push(("corner".into(), t));
        let last = c.temperature.last().cloned().unwrap_or_default();
        Some(CornerSummary {
            case: c.case,
            length: c.length,
            steps: c.taus.len().saturating_sub(1),
            final_wall_temperature: last.first().copied().unwrap_or(f64::NAN),
            final_far_temperature: last.last().copied().unwrap_or(f64::NAN),
        })
    } else {
        None
    };
    Ok(InitialOutput {
        report: InitialReport {
            experiment: "initial_layer_study",
            regime: class.label(),
            eps,
            light,
            initial_temperature: t0,
            variants,
            corner,
        },
        profiles,
    })
}

pub fn write_initial(dir: &Path, out: &InitialOutput) -> Result<()> {
    create_dir(dir)?;
    for (stem, table) in &out.profiles {
        write_csv(&dir.join(format!("{stem}.csv")), table)?;
    }
    write_json(&dir.join("init_layers.json"), &out.report)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    write_initial(&cfg.output, &run_initial_layer_study(cfg)?)
}
