//! Half-line boundary layers: the three Milne problems, the thermalization
//! layer, and the far-field limits that become Dirichlet data in the bulk.
//!
//! Milne problems are posed on `y ∈ [0, Y]` with the incoming datum at `y = 0`
//! (inward cosine `μ > 0`) and specular reflection at `y = Y`. The bounded
//! half-space solution carries zero net flux, so the mirror closure is exact for
//! the flux and only truncates the exponentially small tail. `Y` is doubled until
//! the extracted far field stops moving.

use crate::error::{Error, Result};
use crate::grids::{AngularQuadrature, FrequencyGrid, SlabMesh};
use crate::kinetic::{BoundarySource, RegimeClass};
use crate::linalg::Triplets;
use crate::planck::{invert_weighted, weighted_emission, MaterialModel};
use crate::scalar::{max_abs, Real};
use crate::scattering::ScatteringOperator;
use crate::transport::{self, EnergyLaw, FaceCondition, NewtonOptions, TransportProblem};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilneVariant {
    /// Emission/absorption only; scattering is lower order in the layer.
    Absorption,
    AbsorptionScattering,
    /// Scattering only; `α_a` enters the temperature but never the intensity.
    Scattering,
}

impl MilneVariant {
    pub fn for_regime(class: RegimeClass) -> Self {
        match class {
            RegimeClass::EqAbsorption => Self::Absorption,
            RegimeClass::EqCombined => Self::AbsorptionScattering,
            _ => Self::Scattering,
        }
    }
}

/// Opacities frozen at a boundary point.
#[derive(Debug, Clone)]
pub struct LayerMaterial<T> {
    pub frequencies: FrequencyGrid<T>,
    pub alpha_a: Vec<T>,
    pub alpha_s: Vec<T>,
}

impl<T: Real> LayerMaterial<T> {
    pub fn frozen(model: &MaterialModel<T>, p: T) -> Self {
        Self {
            frequencies: model.frequencies.clone(),
            alpha_a: model.alpha_a_groups(p),
            alpha_s: model.alpha_s_groups(p),
        }
    }

    pub fn grey(alpha_a: T, alpha_s: T) -> Self {
        Self {
            frequencies: FrequencyGrid::grey(),
            alpha_a: vec![alpha_a],
            alpha_s: vec![alpha_s],
        }
    }

    pub fn groups(&self) -> usize {
        self.frequencies.len()
    }

    pub(crate) fn absorption_weights(&self) -> Vec<T> {
        self.frequencies
            .weights()
            .iter()
            .zip(&self.alpha_a)
            .map(|(&w, &a)| w * a)
            .collect()
    }

    /// `F⁻¹(Σ_g w_g α_a,g φ_g)` for an isotropic per-group intensity.
    pub fn temperature_of(&self, phi: &[T]) -> Result<T> {
        let wa = self.absorption_weights();
        let xi = wa.iter().zip(phi).fold(T::zero(), |s, (&w, &p)| s + w * p);
        invert_weighted(&self.frequencies, &wa, xi)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let g = self.groups();
        if self.alpha_a.len() != g || self.alpha_s.len() != g {
            return Err(Error::Shape {
                expected: g,
                got: self.alpha_a.len().min(self.alpha_s.len()),
            });
        }
        if self
            .alpha_a
            .iter()
            .chain(&self.alpha_s)
            .any(|&v| !(v >= T::zero() && v.is_finite()))
        {
            return Err(Error::InvalidRange("layer opacities must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MilneOptions {
    /// Initial truncation in mean free paths of the least opaque group.
    pub length: f64,
    /// Largest truncation tried before giving up.
    pub max_length: f64,
    pub first_width: f64,
    pub ratio: f64,
    pub max_width: f64,
    /// Acceptance threshold on the far-field change under doubling.
    pub doubling_tolerance: f64,
    /// Allowed relative variation of the angular mean over the tail quarter.
    pub flatness_tolerance: f64,
    pub newton: NewtonOptions,
}

impl Default for MilneOptions {
    fn default() -> Self {
        Self {
            length: 20.0,
            max_length: 640.0,
            first_width: 0.01,
            ratio: 1.05,
            max_width: 0.25,
            doubling_tolerance: 1e-5,
            flatness_tolerance: 1e-3,
            newton: NewtonOptions {
                tolerance: 1e-11,
                max_iterations: 60,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    Milne(MilneVariant),
    Thermalization,
}

/// Evidence that the truncated layer represents the half-line limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Max relative deviation of the angular mean from its tail average over the last quarter.
    pub tail_flatness: f64,
    /// Anisotropy at the truncation point.
    pub far_anisotropy: f64,
    /// Relative far-field change between the last two truncations (NaN if only one was run).
    pub doubling_change: f64,
    pub lengths: Vec<f64>,
}

/// Profile of a boundary layer on a half-line mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSolution<T> {
    pub kind: LayerKind,
    pub length: T,
    /// Sample points (cell centers for Milne layers, nodes for thermalization).
    pub positions: Vec<T>,
    pub directions: usize,
    pub groups: usize,
    /// `I(k, d, g)` at `(k * directions + d) * groups + g`; one direction for isotropic profiles.
    pub intensity: Vec<T>,
    pub temperature: Option<Vec<T>>,
    /// Angular means `(k * groups + g)`.
    pub mean: Vec<T>,
    pub far_intensity: Vec<T>,
    pub far_temperature: Option<T>,
    pub certificate: Certificate,
}

impl<T: Real> LayerSolution<T> {
    /// `max_{d,g} |I_d − ⟨I⟩| / max_g ⟨I⟩` per sample point.
    pub fn anisotropy_profile(&self) -> Vec<f64> {
        let (nd, ng) = (self.directions, self.groups);
        (0..self.positions.len())
            .map(|k| {
                let m = &self.mean[k * ng..(k + 1) * ng];
                let scale = max_abs(m);
                let mut dev = T::zero();
                for d in 0..nd {
                    for g in 0..ng {
                        dev = dev.max((self.intensity[(k * nd + d) * ng + g] - m[g]).abs());
                    }
                }
                if scale > T::zero() {
                    (dev / scale).as_f64()
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Far-field data handed to the bulk problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarField<T> {
    pub intensity: Vec<T>,
    pub temperature: T,
}

/// Incoming Milne datum `g(μ, ν)` for `μ > 0` (layout `d * G + g`).
pub fn incoming_from_source<T: Real>(
    source: &BoundarySource<T>,
    quad: &AngularQuadrature<T>,
    frequencies: &FrequencyGrid<T>,
) -> Vec<T> {
    match source.face_condition(quad, frequencies, T::one()) {
        FaceCondition::Inflow(v) => v,
        FaceCondition::Reflect => vec![T::zero(); quad.len() * frequencies.len()],
    }
}

pub(crate) fn sigma_for<T: Real>(variant: MilneVariant, m: &LayerMaterial<T>) -> (Vec<T>, Vec<T>) {
    let zero = vec![T::zero(); m.groups()];
    match variant {
        MilneVariant::Absorption => (m.alpha_a.clone(), zero),
        MilneVariant::AbsorptionScattering => (m.alpha_a.clone(), m.alpha_s.clone()),
        MilneVariant::Scattering => (zero, m.alpha_s.clone()),
    }
}

/// Graded half-line mesh of `length` mean free paths of the least opaque group;
/// the first cell resolves the most opaque one.
pub fn layer_mesh<T: Real>(
    variant: MilneVariant,
    material: &LayerMaterial<T>,
    options: &MilneOptions,
    length: f64,
) -> Result<SlabMesh<T>> {
    let (sa, ss) = sigma_for(variant, material);
    let sigma_t: Vec<T> = sa.iter().zip(&ss).map(|(&a, &s)| a + s).collect();
    if sigma_t.iter().any(|&s| !(s > T::zero())) {
        return Err(Error::Precondition(format!(
            "{variant:?} Milne layer needs a positive extinction in every group"
        )));
    }
    let slowest = sigma_t.iter().fold(sigma_t[0], |m, &s| m.min(s));
    let fastest = sigma_t.iter().fold(T::zero(), |m, &s| m.max(s));
    let mfp = T::one() / slowest;
    let first = T::lit(options.first_width) / fastest;
    SlabMesh::graded(
        T::lit(length) * mfp,
        first,
        T::lit(options.ratio),
        (T::lit(options.max_width) * mfp).max(first),
    )
}

/// Solves the Milne problem for `variant` with Y-doubling acceptance.
pub fn solve_milne<T: Real>(
    variant: MilneVariant,
    incoming: &[T],
    material: &LayerMaterial<T>,
    operator: &ScatteringOperator<T>,
    options: &MilneOptions,
) -> Result<LayerSolution<T>> {
    material.validate()?;
    let quad = operator.quadrature();
    let (nd, ng) = (quad.len(), material.groups());
    if incoming.len() != nd * ng {
        return Err(Error::Shape {
            expected: nd * ng,
            got: incoming.len(),
        });
    }
    if incoming.iter().any(|&v| !(v >= T::zero() && v.is_finite())) {
        return Err(Error::Precondition("incoming datum must be finite and nonnegative".into()));
    }
    let (sa, ss) = sigma_for(variant, material);

    let mut length = options.length;
    let mut previous: Option<LayerSolution<T>> = None;
    let mut lengths = Vec::new();
    loop {
        lengths.push(length);
        let mesh = layer_mesh(variant, material, options, length)?;
        let mut sol = solve_truncated(variant, incoming, material, operator, &sa, &ss, &mesh, options)?;
        sol.certificate.lengths = lengths.clone();
        if let Some(prev) = previous {
            let change = far_change(&prev, &sol);
            sol.certificate.doubling_change = change;
            if change < options.doubling_tolerance {
                return Ok(sol);
            }
        }
        if length * 2.0 > options.max_length {
            return Err(Error::Truncation(format!(
                "far field still moving by {:e} at Y = {} (flatness {:e})",
                sol.certificate.doubling_change, length, sol.certificate.tail_flatness
            )));
        }
        previous = Some(sol);
        length *= 2.0;
    }
}

fn far_change<T: Real>(a: &LayerSolution<T>, b: &LayerSolution<T>) -> f64 {
    let scale = max_abs(&b.far_intensity).max(T::lit(1e-300));
    let mut c = T::zero();
    for (x, y) in a.far_intensity.iter().zip(&b.far_intensity) {
        c = c.max((*x - *y).abs() / scale);
    }
    if let (Some(s), Some(t)) = (a.far_temperature, b.far_temperature) {
        c = c.max((s - t).abs() / t);
    }
    c.as_f64()
}

#[allow(clippy::too_many_arguments)]
fn solve_truncated<T: Real>(
    variant: MilneVariant,
    incoming: &[T],
    material: &LayerMaterial<T>,
    operator: &ScatteringOperator<T>,
    sa: &[T],
    ss: &[T],
    mesh: &SlabMesh<T>,
    options: &MilneOptions,
) -> Result<LayerSolution<T>> {
    let quad = operator.quadrature();
    let fr = &material.frequencies;
    let (nd, ng) = (quad.len(), material.groups());
    let length = mesh.length();
    let n = mesh.cell_count();
    let sigma_a: Vec<T> = (0..n).flat_map(|_| sa.iter().copied()).collect();
    let sigma_s: Vec<T> = (0..n).flat_map(|_| ss.iter().copied()).collect();
    let left = FaceCondition::Inflow(incoming.to_vec());
    let right = FaceCondition::Reflect;
    let ones = vec![T::one(); n];
    let start = match variant {
        MilneVariant::Scattering => T::one(),
        _ => {
            let half = half_range_mean(incoming, quad, ng);
            let t = material.temperature_of(&half)?;
            if !(t > T::zero()) {
                return Err(Error::Precondition(
                    "absorbing Milne layer needs positive absorption-weighted incoming energy".into(),
                ));
            }
            t
        }
    };
    let guess = vec![start; n];
    let energy = match variant {
        MilneVariant::Scattering => EnergyLaw::Given(&ones),
        _ => EnergyLaw::Balance {
            capacity: T::zero(),
            scale: T::one(),
            previous: &guess,
        },
    };
    let problem = TransportProblem {
        mesh,
        operator,
        frequencies: fr,
        sigma_a: &sigma_a,
        sigma_s: &sigma_s,
        left: &left,
        right: &right,
        relaxation: T::zero(),
        previous: None,
        energy,
    };
    let sol = transport::solve(&problem, &guess, None, options.newton)?;
    let mut mean = vec![T::zero(); n * ng];
    for i in 0..n {
        for g in 0..ng {
            let field: Vec<T> = (0..nd).map(|d| sol.averages[(i * nd + d) * ng + g]).collect();
            mean[i * ng + g] = quad.mean(&field);
        }
    }
    let temperature = match variant {
        MilneVariant::Scattering => {
            if material.alpha_a.iter().any(|&a| a > T::zero()) {
                Some(
                    (0..n)
                        .map(|i| material.temperature_of(&mean[i * ng..(i + 1) * ng]))
                        .collect::<Result<Vec<T>>>()?,
                )
            } else {
                None
            }
        }
        _ => Some(sol.temperature.clone()),
    };
    let mut layer = LayerSolution {
        kind: LayerKind::Milne(variant),
        length,
        positions: mesh.centers().to_vec(),
        directions: nd,
        groups: ng,
        intensity: sol.averages,
        temperature,
        mean,
        far_intensity: Vec::new(),
        far_temperature: None,
        certificate: Certificate {
            tail_flatness: f64::NAN,
            far_anisotropy: f64::NAN,
            doubling_change: f64::NAN,
            lengths: Vec::new(),
        },
    };
    let (far, flat) = tail_average(&layer, mesh.widths());
    layer.far_intensity = far;
    layer.certificate.tail_flatness = flat;
    layer.certificate.far_anisotropy = *layer.anisotropy_profile().last().unwrap();
    if material.alpha_a.iter().any(|&a| a > T::zero()) {
        layer.far_temperature = Some(material.temperature_of(&layer.far_intensity)?);
    }
    Ok(layer)
}

fn half_range_mean<T: Real>(incoming: &[T], quad: &AngularQuadrature<T>, ng: usize) -> Vec<T> {
    let mut s = vec![T::zero(); ng];
    let mut wsum = T::zero();
    for d in 0..quad.len() {
        if quad.mu(d) > T::zero() {
            wsum += quad.weights()[d];
            for g in 0..ng {
                s[g] += quad.weights()[d] * incoming[d * ng + g];
            }
        }
    }
    s.iter().map(|&v| v / wsum).collect()
}

/// Width-weighted average of the angular mean over the last quarter and its flatness.
fn tail_average<T: Real>(layer: &LayerSolution<T>, widths: &[T]) -> (Vec<T>, f64) {
    let ng = layer.groups;
    let cut = layer.length * T::lit(0.75);
    let tail: Vec<usize> = (0..layer.positions.len())
        .filter(|&k| layer.positions[k] >= cut)
        .collect();
    let mut avg = vec![T::zero(); ng];
    let mut wsum = T::zero();
    for &k in &tail {
        let w = widths.get(k).copied().unwrap_or(T::one());
        wsum += w;
        for g in 0..ng {
            avg[g] += w * layer.mean[k * ng + g];
        }
    }
    for v in &mut avg {
        *v /= wsum;
    }
    let scale = max_abs(&avg).max(T::lit(1e-300));
    let mut flat = T::zero();
    for &k in &tail {
        for g in 0..ng {
            flat = flat.max((layer.mean[k * ng + g] - avg[g]).abs() / scale);
        }
    }
    (avg, flat.as_f64())
}

/// Far-field intensity and temperature of a certified layer.
pub fn extract_far_field<T: Real>(
    layer: &LayerSolution<T>,
    material: &LayerMaterial<T>,
    flatness_tolerance: f64,
) -> Result<FarField<T>> {
    let c = &layer.certificate;
    if !(c.tail_flatness <= flatness_tolerance) {
        return Err(Error::Extraction(format!(
            "tail flatness {:e} exceeds {:e}",
            c.tail_flatness, flatness_tolerance
        )));
    }
    let temperature = material.temperature_of(&layer.far_intensity)?;
    Ok(FarField {
        intensity: layer.far_intensity.clone(),
        temperature,
    })
}

/// Returns the per-group angular mean of `field` (`d * G + g`) if it is isotropic to `tol`.
pub fn isotropic_datum<T: Real>(
    field: &[T],
    quad: &AngularQuadrature<T>,
    groups: usize,
    tol: T,
) -> Result<Vec<T>> {
    if field.len() != quad.len() * groups {
        return Err(Error::Shape {
            expected: quad.len() * groups,
            got: field.len(),
        });
    }
    let mut out = Vec::with_capacity(groups);
    for g in 0..groups {
        let col: Vec<T> = (0..quad.len()).map(|d| field[d * groups + g]).collect();
        let m = quad.mean(&col);
        let dev = col.iter().fold(T::zero(), |a, &v| a.max((v - m).abs()));
        if dev > tol * m.abs().max(T::lit(1e-300)) {
            return Err(Error::Precondition(format!(
                "thermalization datum is anisotropic in group {g} (relative deviation {:e})",
                (dev / m).as_f64()
            )));
        }
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct ThermalOptions {
    /// Domain length in units of the largest group diffusion length `√(κ_d/(α_a α_s))`.
    pub length: f64,
    pub max_length: f64,
    pub first_width: f64,
    pub ratio: f64,
    pub max_width: f64,
    /// Acceptance threshold on the relative far-field change under doubling.
    pub doubling_tolerance: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ThermalOptions {
    fn default() -> Self {
        Self {
            length: 10.0,
            max_length: 640.0,
            first_width: 0.005,
            ratio: 1.05,
            max_width: 0.05,
            doubling_tolerance: 1e-10,
            tolerance: 1e-12,
            max_iterations: 50,
        }
    }
}

/// Thermalization layer `φ_g − k_g φ_g'' = B_g(T)`, `Σ w α_a (B(T) − φ) = 0`,
/// `k_g = κ_d/(α_a,g α_s,g)`, `φ(0) = datum`, `φ'(L) = 0`.
///
/// The coupled relaxation can be slower than any single group's diffusion
/// length, so the domain is doubled until the far field settles.
pub fn solve_thermalization<T: Real>(
    datum: &[T],
    material: &LayerMaterial<T>,
    kappa_d: T,
    options: &ThermalOptions,
) -> Result<LayerSolution<T>> {
    let mut length = options.length;
    let mut previous: Option<LayerSolution<T>> = None;
    let mut lengths = Vec::new();
    loop {
        lengths.push(length);
        let mut sol = thermal_truncated(datum, material, kappa_d, options, length)?;
        sol.certificate.lengths = lengths.clone();
        if let Some(prev) = previous {
            let change = far_change(&prev, &sol);
            sol.certificate.doubling_change = change;
            if change < options.doubling_tolerance {
                return Ok(sol);
            }
        }
        if length * 2.0 > options.max_length {
            return Err(Error::Truncation(format!(
                "thermalization far field still moving by {:e} at length {length}",
                sol.certificate.doubling_change
            )));
        }
        previous = Some(sol);
        length *= 2.0;
    }
}

fn thermal_truncated<T: Real>(
    datum: &[T],
    material: &LayerMaterial<T>,
    kappa_d: T,
    options: &ThermalOptions,
    length: f64,
) -> Result<LayerSolution<T>> {
    material.validate()?;
    let fr = &material.frequencies;
    let ng = material.groups();
    if datum.len() != ng {
        return Err(Error::Shape {
            expected: ng,
            got: datum.len(),
        });
    }
    if datum.iter().any(|&v| !(v >= T::zero() && v.is_finite())) {
        return Err(Error::Precondition("thermalization datum must be nonnegative".into()));
    }
    if !(kappa_d > T::zero()) {
        return Err(Error::Precondition("κ_d must be positive".into()));
    }
    let mut k = Vec::with_capacity(ng);
    for g in 0..ng {
        let (a, s) = (material.alpha_a[g], material.alpha_s[g]);
        if !(a > T::zero() && s > T::zero()) {
            return Err(Error::Precondition(
                "thermalization layer needs positive absorption and scattering in every group".into(),
            ));
        }
        k.push(kappa_d / (a * s));
    }
    let scale_len = k.iter().fold(T::zero(), |m, &v| m.max(v)).sqrt();
    let mesh = SlabMesh::graded(
        T::lit(length) * scale_len,
        T::lit(options.first_width) * scale_len,
        T::lit(options.ratio),
        T::lit(options.max_width) * scale_len,
    )?;
    let nodes = mesh.faces().to_vec();
    let m = nodes.len() - 1;
    let wa = material.absorption_weights();
    let t0 = material.temperature_of(datum)?;
    if !(t0 > T::zero()) {
        return Err(Error::Precondition("thermalization datum carries no absorbable energy".into()));
    }
    let bw = ng + 1;
    // Unknowns at nodes 1..=m: [φ_0 … φ_{G−1}, T].
    let idx = |j: usize, c: usize| (j - 1) * bw + c;
    let mut x = vec![T::zero(); m * bw];
    for j in 1..=m {
        x[idx(j, ng)] = t0;
        for g in 0..ng {
            x[idx(j, g)] = datum[g];
        }
    }
    let energy_scale = weighted_emission(fr, &wa, t0).0.max(T::lit(1e-300));
    let phi_scale = max_abs(datum).max(T::lit(1e-300));
    let phi = |x: &[T], j: usize, g: usize| if j == 0 { datum[g] } else { x[idx(j, g)] };
    let assemble = |x: &[T], jac: Option<&mut Triplets<T>>| -> Vec<T> {
        let mut r = vec![T::zero(); m * bw];
        let mut jac = jac;
        for j in 1..=m {
            let t = x[idx(j, ng)];
            let hl = nodes[j] - nodes[j - 1];
            // Neumann at the last node through a mirrored ghost value.
            let (hr, right) = if j < m { (nodes[j + 1] - nodes[j], j + 1) } else { (hl, j - 1) };
            let cl = T::lit(2.0) / (hl * (hl + hr));
            let cr = T::lit(2.0) / (hr * (hl + hr));
            let mut constraint = T::zero();
            let mut dconstraint = T::zero();
            for g in 0..ng {
                let (b, db) = (fr.planck(g, t), fr.planck_dt(g, t));
                let p = phi(x, j, g);
                let lap = cl * phi(x, j - 1, g) + cr * phi(x, right, g) - (cl + cr) * p;
                let row = idx(j, g);
                r[row] = (p - k[g] * lap - b) / phi_scale;
                constraint += wa[g] * (b - p);
                dconstraint += wa[g] * db;
                if let Some(jac) = jac.as_deref_mut() {
                    jac.push(row, row, (T::one() + k[g] * (cl + cr)) / phi_scale);
                    if j > 1 {
                        jac.push(row, idx(j - 1, g), -k[g] * cl / phi_scale);
                    }
                    jac.push(row, idx(right, g), -k[g] * cr / phi_scale);
                    jac.push(row, idx(j, ng), -db / phi_scale);
                    jac.push(idx(j, ng), row, -wa[g] / energy_scale);
                }
            }
            r[idx(j, ng)] = constraint / energy_scale;
            if let Some(jac) = jac.as_deref_mut() {
                jac.push(idx(j, ng), idx(j, ng), dconstraint / energy_scale);
            }
        }
        r
    };
    let norm = |r: &[T]| max_abs(r);
    let mut r = assemble(&x, None);
    let mut rn = norm(&r);
    let mut history = vec![rn.as_f64()];
    let tol = T::lit(options.tolerance);
    let mut iterations = 0;
    while rn > tol {
        if iterations == options.max_iterations {
            return Err(Error::convergence("thermalization Newton", iterations, history));
        }
        iterations += 1;
        let mut jac = Triplets::new(m * bw);
        assemble(&x, Some(&mut jac));
        let mut band = jac.to_band();
        band.factor()?;
        let mut dx: Vec<T> = r.iter().map(|&v| -v).collect();
        band.solve_in_place(&mut dx);
        let mut lambda = T::one();
        for j in 1..=m {
            let (t, dt) = (x[idx(j, ng)], dx[idx(j, ng)]);
            if dt < T::zero() && t + dt < t * T::lit(0.5) {
                lambda = lambda.min(T::lit(0.5) * t / (-dt));
            }
        }
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<T> = x.iter().zip(&dx).map(|(&a, &b)| a + lambda * b).collect();
            let rt = assemble(&trial, None);
            let nt = norm(&rt);
            if nt.is_finite() && nt < rn {
                x = trial;
                r = rt;
                rn = nt;
                accepted = true;
                break;
            }
            lambda *= T::lit(0.5);
        }
        history.push(rn.as_f64());
        if !accepted {
            if rn <= tol * T::lit(100.0) {
                break;
            }
            return Err(Error::convergence("thermalization Newton (line search)", iterations, history));
        }
    }
    let mut intensity = Vec::with_capacity((m + 1) * ng);
    let mut temperature = vec![t0];
    intensity.extend_from_slice(datum);
    for j in 1..=m {
        for g in 0..ng {
            intensity.push(x[idx(j, g)]);
        }
        temperature.push(x[idx(j, ng)]);
    }
    // The boundary node carries the datum; its temperature follows from the constraint.
    temperature[0] = material.temperature_of(datum)?;
    let far_intensity = intensity[m * ng..].to_vec();
    let far_temperature = temperature[m];
    let length = *nodes.last().unwrap();
    let mut layer = LayerSolution {
        kind: LayerKind::Thermalization,
        length,
        positions: nodes,
        directions: 1,
        groups: ng,
        mean: intensity.clone(),
        intensity,
        temperature: Some(temperature),
        far_intensity: Vec::new(),
        far_temperature: Some(far_temperature),
        certificate: Certificate {
            tail_flatness: f64::NAN,
            far_anisotropy: 0.0,
            doubling_change: f64::NAN,
            lengths: vec![length.as_f64()],
        },
    };
    let widths: Vec<T> = layer.positions.iter().map(|_| T::one()).collect();
    let (_, flat) = tail_average(&layer, &widths);
    layer.certificate.tail_flatness = flat;
    layer.far_intensity = far_intensity;
    Ok(layer)
}

/// Dirichlet datum for the bulk problem at one wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryDatum<T> {
    /// Equilibrium regimes: the wall temperature.
    Temperature { temperature: T },
    /// Non-equilibrium regimes: the isotropic intensity `φ₀(p, ν)` per group.
    Intensity { groups: Vec<T>, temperature: T },
}

impl<T: Real> BoundaryDatum<T> {
    pub fn temperature(&self) -> T {
        match self {
            Self::Temperature { temperature } | Self::Intensity { temperature, .. } => *temperature,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LayerOptions {
    pub milne: MilneOptions,
    pub thermal: ThermalOptions,
}

/// Runs the boundary-layer pipeline appropriate to `class` for the incoming datum.
pub fn boundary_temperature<T: Real>(
    class: RegimeClass,
    incoming: &[T],
    material: &LayerMaterial<T>,
    operator: &ScatteringOperator<T>,
    options: &LayerOptions,
) -> Result<BoundaryDatum<T>> {
    let variant = MilneVariant::for_regime(class);
    let layer = solve_milne(variant, incoming, material, operator, &options.milne)?;
    let far = extract_far_field(&layer, material, options.milne.flatness_tolerance)?;
    match class {
        RegimeClass::EqAbsorption | RegimeClass::EqCombined => Ok(BoundaryDatum::Temperature {
            temperature: far.temperature,
        }),
        RegimeClass::EqScattering => {
            let kappa = operator.kappa_d()?;
            let th = solve_thermalization(&far.intensity, material, kappa, &options.thermal)?;
            Ok(BoundaryDatum::Temperature {
                temperature: th.far_temperature.expect("thermalization has a temperature"),
            })
        }
        RegimeClass::NonEqCritical | RegimeClass::NonEqSupercritical => Ok(BoundaryDatum::Intensity {
            groups: far.intensity,
            temperature: far.temperature,
        }),
    }
}
