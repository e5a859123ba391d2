//! Experiment configuration: TOML files layered over per-experiment defaults.

use crate::error::{config, Result};
use radtherm_core::kinetic::{BoundarySource, LightMode, SolverOptions, StationaryMethod};
use radtherm_core::planck::{Opacity, OpacityTable};
use radtherm_core::scattering::DEFAULT_L_MAX;
use radtherm_core::{FrequencyGrid, MaterialModel, PhaseFunction, ScalingRegime, SlabMesh};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SingleRun,
    ConvergenceStudy,
    RegimeTable,
    LayerStudy,
    InitialLayerStudy,
}

impl ExperimentKind {
    pub fn subcommand(self) -> &'static str {
        match self {
            Self::SingleRun => "run",
            Self::ConvergenceStudy => "study",
            Self::RegimeTable => "table",
            Self::LayerStudy => "layers",
            Self::InitialLayerStudy => "init-layers",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightKind {
    Stationary,
    Instant,
    Unit,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub eps: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub light: LightKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl RegimeConfig {
    pub fn light_mode(&self) -> Result<LightMode<f64>> {
        match (self.light, self.kappa) {
            (LightKind::Stationary, _) => Ok(LightMode::Stationary),
            (LightKind::Instant, _) => Ok(LightMode::Instant),
            (LightKind::Unit, _) => Ok(LightMode::Unit),
            (LightKind::PowerLaw, Some(kappa)) => Ok(LightMode::PowerLaw { kappa }),
            (LightKind::PowerLaw, None) => Err(config("regime.light = \"power_law\" needs regime.kappa")),
        }
    }

    pub fn regime(&self, eps: f64) -> Result<ScalingRegime> {
        ScalingRegime::new(eps, self.beta, self.gamma, self.light_mode()?)
            .map_err(|e| config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Grey,
    Multigroup,
    PowerWindow,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum KernelConfig {
    // Braces so that stray keys next to the tag are rejected.
    Isotropic {},
    HenyeyGreenstein { g: f64 },
    CutoffForward { c0: f64 },
}

impl KernelConfig {
    pub fn build(&self) -> Result<PhaseFunction> {
        match *self {
            Self::Isotropic {} => Ok(PhaseFunction::Isotropic),
            Self::HenyeyGreenstein { g } => PhaseFunction::henyey_greenstein(g),
            Self::CutoffForward { c0 } => PhaseFunction::cutoff_forward(c0),
        }
        .map_err(|e| config(format!("model.kernel: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    /// Absorption amplitude (the constant value for grey and multigroup presets).
    pub alpha_a: f64,
    pub alpha_s: f64,
    /// Power-law exponents in ν for the `power_window` preset.
    pub exponent_a: f64,
    pub exponent_s: f64,
    pub window: [f64; 2],
    pub groups: usize,
    pub nu_min: f64,
    pub nu_max: f64,
    /// CSV with columns `x, nu, alpha_a, alpha_s`, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    pub kernel: KernelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cells: usize,
    pub angular_order: usize,
    pub l_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Newton,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Residual tolerance of the stationary kinetic solve.
    pub tolerance: f64,
    pub max_newton: usize,
    /// Temperature under-relaxation and outer sweeps of the Picard iteration.
    pub relaxation: f64,
    pub max_outer: usize,
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions<f64> {
        SolverOptions {
            method: match self.method {
                SolverMethod::Newton => StationaryMethod::Newton,
                SolverMethod::Picard => StationaryMethod::Picard {
                    relaxation: self.relaxation,
                    max_outer: self.max_outer,
                },
            },
            tolerance: self.tolerance,
            max_newton: self.max_newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub left: BoundarySource<f64>,
    pub right: BoundarySource<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub steps: usize,
    pub initial_temperature: f64,
    /// Relative amplitude of seeded uniform noise on the initial temperature.
    pub perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    /// Milne truncation in mean free paths before doubling.
    pub milne_length: f64,
    /// Thermalization domain in diffusion lengths before doubling.
    pub thermal_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub temperature: f64,
    /// Initial angular datum, evaluated at every cosine of the quadrature.
    pub intensity: BoundarySource<f64>,
    /// Position whose opacities are frozen into the layer.
    pub position: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    /// Also integrate the initial-boundary layer at the left wall.
    pub corner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub workers: usize,
    pub output: PathBuf,
    pub regime: RegimeConfig,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub boundary: BoundaryConfig,
    pub time: TimeConfig,
    pub layers: LayerConfig,
    pub initial: InitialConfig,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Built-in configuration of each experiment.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let planck = |temperature| BoundarySource::Planckian { temperature };
        let diluted = BoundarySource::Diluted {
            temperature: 2.0,
            dilution: 0.1,
        };
        let mut cfg = Self {
            experiment: kind,
            seed: 0,
            workers: 1,
            output: PathBuf::from("out"),
            regime: RegimeConfig {
                eps: vec![0.1],
                beta: -1.0,
                gamma: 0.0,
                light: LightKind::Stationary,
                kappa: None,
            },
            model: ModelConfig {
                preset: Preset::Grey,
                alpha_a: 1.0,
                alpha_s: 0.0,
                exponent_a: -1.5,
                exponent_s: 0.0,
                window: [0.1, 20.0],
                groups: 8,
                nu_min: 0.1,
                nu_max: 20.0,
                table: None,
                kernel: KernelConfig::Isotropic {},
            },
            grid: GridConfig {
                cells: 200,
                angular_order: 16,
                l_max: DEFAULT_L_MAX,
            },
            solver: SolverConfig {
                method: SolverMethod::Newton,
                tolerance: 1e-9,
                max_newton: 60,
                relaxation: 1.0,
                max_outer: 10_000,
            },
            boundary: BoundaryConfig {
                left: planck(1.0),
                right: planck(2.0),
            },
            time: TimeConfig {
                dt: 0.05,
                steps: 20,
                initial_temperature: 1.0,
                perturbation: 0.0,
            },
            layers: LayerConfig {
                milne_length: 20.0,
                thermal_length: 10.0,
            },
            initial: InitialConfig {
                temperature: 1.0,
                intensity: BoundarySource::Beam {
                    mu0: 0.5,
                    width: 0.3,
                    amplitude: 1.0,
                    temperature: 1.5,
                },
                position: 0.0,
                tau_max: None,
                corner: true,
            },
            base_dir: PathBuf::from("."),
        };
        match kind {
            ExperimentKind::SingleRun => {}
            ExperimentKind::ConvergenceStudy => cfg.regime.eps = vec![0.2, 0.1, 0.05],
            ExperimentKind::RegimeTable => {
                cfg.regime.eps = vec![0.05];
                cfg.model.preset = Preset::Multigroup;
                cfg.model.alpha_s = 1.0;
                cfg.grid.cells = 400;
                cfg.boundary = BoundaryConfig {
                    left: diluted.clone(),
                    right: diluted,
                };
            }
            ExperimentKind::LayerStudy => {
                cfg.regime.eps = vec![0.05];
                cfg.regime.beta = 0.0;
                cfg.regime.gamma = -1.0;
                cfg.model.preset = Preset::Multigroup;
                cfg.model.alpha_s = 1.0;
                cfg.model.kernel = KernelConfig::HenyeyGreenstein { g: 0.5 };
                cfg.boundary.left = diluted;
                cfg.boundary.right = BoundarySource::Beam {
                    mu0: 0.8,
                    width: 0.2,
                    amplitude: 1.0,
                    temperature: 1.5,
                };
            }
            ExperimentKind::InitialLayerStudy => {
                cfg.regime.eps = vec![0.05];
                cfg.regime.beta = 0.0;
                cfg.regime.gamma = -1.0;
                cfg.regime.light = LightKind::Unit;
                cfg.model.preset = Preset::Multigroup;
                cfg.model.alpha_s = 1.0;
                cfg.model.groups = 4;
                cfg.boundary.left = planck(2.0);
            }
        }
        cfg
    }

    /// Defaults of `kind` overlaid with the file at `path`, validated.
    pub fn load(kind: ExperimentKind, path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            let cfg = Self::defaults(kind);
            cfg.validate()?;
            return Ok(cfg);
        };
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(kind, &text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overlays TOML text on the defaults of `kind` without validating.
    pub fn from_toml(kind: ExperimentKind, text: &str) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| config(e.to_string()))?;
        let defaults = Self::defaults(kind);
        let toml::Value::Table(mut base) =
            toml::Value::try_from(&defaults).map_err(|e| config(e.to_string()))?
        else {
            unreachable!("a struct serializes to a table")
        };
        merge(&mut base, file);
        let mut cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| config(e.to_string()))?;
        cfg.base_dir = defaults.base_dir;
        if cfg.experiment != kind {
            return Err(config(format!(
                "config is for experiment {:?} but the subcommand is `{}`",
                cfg.experiment,
                kind.subcommand()
            )));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.experiment;
        if self.workers == 0 {
            return Err(config("workers must be at least 1"));
        }
        if self.grid.cells < 2 || self.grid.angular_order < 2 {
            return Err(config("grid needs at least 2 cells and angular order 2"));
        }
        let eps = &self.regime.eps;
        if eps.is_empty() {
            return Err(config("regime.eps is empty"));
        }
        let light = self.regime.light_mode()?;
        if kind != ExperimentKind::RegimeTable {
            for &e in eps {
                self.regime.regime(e)?;
            }
        } else if !(eps[0] > 0.0 && eps[0] < 1.0) {
            return Err(config("regime.eps must lie in (0, 1)"));
        }
        for (side, src) in [("left", &self.boundary.left), ("right", &self.boundary.right)] {
            src.validate().map_err(|e| config(format!("boundary.{side}: {e}")))?;
        }
        match kind {
            ExperimentKind::ConvergenceStudy => {
                if eps.len() < 3 || eps.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(config("a study needs at least 3 strictly decreasing eps values"));
                }
                if light != LightMode::Stationary {
                    return Err(config("a study compares stationary solutions"));
                }
                for &e in eps {
                    let (lo, hi) = bulk_window(&self.regime.regime(e)?);
                    if !(lo < hi) {
                        return Err(config(format!(
                            "bulk window [{lo}, {hi}] is empty at eps = {e}"
                        )));
                    }
                }
            }
            ExperimentKind::RegimeTable if light != LightMode::Stationary => {
                return Err(config("the regime table compares stationary solutions"));
            }
            ExperimentKind::InitialLayerStudy => {
                if !matches!(light, LightMode::Unit | LightMode::PowerLaw { .. }) {
                    return Err(config("initial layers need light = \"unit\" or \"power_law\""));
                }
                let i = &self.initial;
                if !(i.temperature > 0.0) || !(0.0..=1.0).contains(&i.position) {
                    return Err(config("initial.temperature must be positive and position in [0, 1]"));
                }
                if matches!(i.intensity, BoundarySource::Reflecting) {
                    return Err(config("initial.intensity cannot be reflecting"));
                }
                i.intensity.validate().map_err(|e| config(format!("initial.intensity: {e}")))?;
                if i.tau_max.is_some_and(|t| !(t > 0.0)) {
                    return Err(config("initial.tau_max must be positive"));
                }
            }
            ExperimentKind::SingleRun if light != LightMode::Stationary => {
                let t = &self.time;
                if !(t.dt > 0.0) || t.steps == 0 || !(t.initial_temperature > 0.0) {
                    return Err(config("time runs need dt > 0, steps >= 1 and a positive initial temperature"));
                }
                if !(0.0..1.0).contains(&t.perturbation) {
                    return Err(config("time.perturbation must lie in [0, 1)"));
                }
            }
            _ => {}
        }
        let sv = &self.solver;
        if !(sv.tolerance > 0.0) || sv.max_newton == 0 || !(sv.relaxation > 0.0 && sv.relaxation <= 1.0) || sv.max_outer == 0 {
            return Err(config("solver needs tolerance > 0, max_newton >= 1, relaxation in (0, 1] and max_outer >= 1"));
        }
        if !(self.layers.milne_length > 0.0 && self.layers.thermal_length > 0.0) {
            return Err(config("layer lengths must be positive"));
        }
        let model = self.material()?;
        let mesh = self.mesh()?;
        let mut xs = mesh.centers().to_vec();
        xs.extend([0.0, 1.0]);
        model
            .validate(&xs, 1e8)
            .map_err(|e| config(format!("model: {e}")))?;
        Ok(())
    }

    pub fn mesh(&self) -> Result<SlabMesh> {
        SlabMesh::uniform(self.grid.cells).map_err(|e| config(e.to_string()))
    }

    /// Material model of the configured preset.
    pub fn material(&self) -> Result<MaterialModel> {
        let m = &self.model;
        let kernel = m.kernel.build()?;
        let grid = || {
            FrequencyGrid::multigroup(m.nu_min, m.nu_max, m.groups)
                .map_err(|e| config(format!("model frequency grid: {e}")))
        };
        Ok(match m.preset {
            Preset::Grey => MaterialModel::grey_constant(m.alpha_a, m.alpha_s, kernel),
            Preset::Multigroup => MaterialModel::constant_opacities(m.alpha_a, m.alpha_s, kernel, grid()?),
            Preset::PowerWindow => MaterialModel::power_window(
                m.alpha_a,
                m.exponent_a,
                m.alpha_s,
                m.exponent_s,
                (m.window[0], m.window[1]),
                kernel,
                grid()?,
            ),
            Preset::Table => {
                let rel = m.table.as_ref().ok_or_else(|| config("preset \"table\" needs model.table"))?;
                let table = Arc::new(read_opacity_table(&self.base_dir.join(rel))?);
                MaterialModel {
                    absorption: Opacity::Table(table.clone(), true),
                    scattering: Opacity::Table(table, false),
                    kernel,
                    frequencies: grid()?,
                }
            }
        })
    }
}

/// Reads `x, nu, alpha_a, alpha_s` rows (header row required).
pub fn read_opacity_table(path: &Path) -> Result<OpacityTable<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| config(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != ["x", "nu", "alpha_a", "alpha_s"] {
        return Err(config(format!(
            "{}: expected columns x,nu,alpha_a,alpha_s, found {}",
            path.display(),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.deserialize::<(f64, f64, f64, f64)>().enumerate() {
        rows.push(rec.map_err(|e| config(format!("{} row {}: {e}", path.display(), k + 1)))?);
    }
    OpacityTable::from_rows(&rows).map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Interior window excluding layers: margin `ℓ ln(1/ε)` with `ℓ = ℓ_T`, or
/// `ℓ_M` when the thermalization length is not below the slab width.
pub fn bulk_window(regime: &ScalingRegime) -> (f64, f64) {
    let ell = if regime.ell_t() < 1.0 {
        regime.ell_t()
    } else {
        regime.ell_m()
    };
    let m = ell * (1.0 / regime.eps).ln();
    (m, 1.0 - m)
}

/// Recursive table merge; a table carrying a `kind` tag replaces its default wholesale.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
