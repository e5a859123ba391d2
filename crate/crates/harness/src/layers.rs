//! Boundary-layer study: Milne and thermalization layers at both walls.

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::export::{create_dir, write_csv, write_json, CsvTable, Field};
use crate::table::efold_width;
use radtherm_core::boundary_layers::{
    boundary_temperature, extract_far_field, incoming_from_source, solve_milne, solve_thermalization,
    BoundaryDatum, Certificate, LayerOptions, MilneVariant,
};
use radtherm_core::kinetic::BoundarySource;
use radtherm_core::{AngularQuadrature, LayerMaterial, LayerSolution, ScatteringOperator};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalSummary {
    pub certificate: Certificate,
    pub far_intensity: Vec<f64>,
    pub far_temperature: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WallSummary {
    pub side: &'static str,
    pub source: BoundarySource<f64>,
    pub variant: MilneVariant,
    pub certificate: Certificate,
    pub far_intensity: Vec<f64>,
    pub far_temperature: f64,
    /// e-fold width of the anisotropy profile, in mean free paths.
    pub milne_width: f64,
    pub thermalization: Option<ThermalSummary>,
    pub datum: BoundaryDatum<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub experiment: &'static str,
    pub regime: &'static str,
    pub eps: f64,
    pub kappa_d: f64,
    pub walls: Vec<WallSummary>,
}

pub struct LayerOutput {
    pub report: LayerReport,
    /// `(file stem, table)` of every exported profile.
    pub profiles: Vec<(String, CsvTable)>,
}

fn milne_csv(layer: &LayerSolution) -> CsvTable {
    let ng = layer.groups;
    let mut cols = vec![
        ("y".to_string(), "distance from the wall in mean free paths".to_string()),
        ("anisotropy".into(), "relative distance of I from its angular mean".into()),
        ("T".into(), "layer temperature (nan when not defined)".into()),
    ];
    cols.extend((0..ng).map(|g| (format!("phi_{g}"), format!("angular mean of I in group {g}"))));
    let mut t = CsvTable::new(cols);
    let an = layer.anisotropy_profile();
    for (k, &y) in layer.positions.iter().enumerate() {
        let temp = layer.temperature.as_ref().map_or(f64::NAN, |t| t[k]);
        let mut row: Vec<Field> = vec![y.into(), an[k].into(), temp.into()];
        row.extend(layer.mean[k * ng..(k + 1) * ng].iter().map(|&v| Field::from(v)));
        t.push(row);
    }
    t
}

fn thermal_csv(layer: &LayerSolution) -> CsvTable {
    let ng = layer.groups;
    let mut cols = vec![
        ("eta".to_string(), "distance from the Milne far field".to_string()),
        ("T".into(), "material temperature".into()),
    ];
    cols.extend((0..ng).map(|g| (format!("phi_{g}"), format!("isotropic intensity in group {g}"))));
    let mut t = CsvTable::new(cols);
    let temps = layer.temperature.as_deref().unwrap_or(&[]);
    for (k, &eta) in layer.positions.iter().enumerate() {
        let mut row: Vec<Field> = vec![eta.into(), temps.get(k).copied().unwrap_or(f64::NAN).into()];
        row.extend(layer.mean[k * ng..(k + 1) * ng].iter().map(|&v| Field::from(v)));
        t.push(row);
    }
    t
}

pub fn run_layer_study(cfg: &ExperimentConfig) -> Result<LayerOutput> {
    let eps = cfg.regime.eps[0];
    let class = cfg.regime.regime(eps)?.classify();
    let model = cfg.material()?;
    let quad = AngularQuadrature::slab(cfg.grid.angular_order)?;
    let op = ScatteringOperator::new(&model.kernel, &quad, cfg.grid.l_max)?;
    let mut options = LayerOptions::default();
    options.milne.length = cfg.layers.milne_length;
    options.thermal.length = cfg.layers.thermal_length;
    let variant = MilneVariant::for_regime(class);
    let kappa_d = op.kappa_d()?;
    let mut walls = Vec::new();
    let mut profiles = Vec::new();
    for (side, source, p) in [("left", &cfg.boundary.left, 0.0), ("right", &cfg.boundary.right, 1.0)] {
        let material = LayerMaterial::frozen(&model, p);
        let incoming = incoming_from_source(source, &quad, &model.frequencies);
        let milne = solve_milne(variant, &incoming, &material, &op, &options.milne)?;
        let far = extract_far_field(&milne, &material, options.milne.flatness_tolerance)?;
        let an = milne.anisotropy_profile();
        let milne_width = efold_width(&milne.positions, &an, an.len() - 1);
        profiles.push((format!("milne_{side}"), milne_csv(&milne)));
        let thermalization = if variant == MilneVariant::Scattering && class.is_equilibrium() {
            let th = solve_thermalization(&far.intensity, &material, kappa_d, &options.thermal)?;
            let temps = th.temperature.clone().unwrap_or_default();
            let width = if temps.is_empty() { 0.0 } else { efold_width(&th.positions, &temps, temps.len() - 1) };
            profiles.push((format!("thermalization_{side}"), thermal_csv(&th)));
            Some(ThermalSummary {
                far_temperature: th.far_temperature.unwrap_or(f64::NAN),
                far_intensity: th.far_intensity,
                certificate: th.certificate,
                width,
            })
        } else {
            None
        };
        let datum = boundary_temperature(class, &incoming, &material, &op, &options)?;
        walls.push(WallSummary {
            side,
            source: source.clone(),
            variant,
            certificate: milne.certificate,
            far_intensity: far.intensity,
            far_temperature: far.temperature,
            milne_width,
            thermalization,
            datum,
        });
    }
    Ok(LayerOutput {
        report: LayerReport {
            experiment: "layer_study",
            regime: class.label(),
            eps,
            kappa_d,
            walls,
        },
        profiles,
    })
}

pub fn write_layers(dir: &Path, out: &LayerOutput) -> Result<()> {
    create_dir(dir)?;
    for (stem, table) in &out.profiles {
        write_csv(&dir.join(format!("{stem}.csv")), table)?;
    }
    write_json(&dir.join("layers.json"), &out.report)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    write_layers(&cfg.output, &run_layer_study(cfg)?)
}
