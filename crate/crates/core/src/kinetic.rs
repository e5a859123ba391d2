//! Coupled transport and energy balance on the slab `[0, 1]`, stationary and
//! time dependent, in the rescaled form where `ℓ_M = ε`, `ℓ_A = ε^{−β}`,
//! `ℓ_S = ε^{−γ}` and time is measured in units of the heat parameter `τ_h`.

use crate::error::{Error, Result};
use crate::grids::{AngularQuadrature, FrequencyGrid, SlabMesh};
use crate::planck::{invert_weighted, MaterialModel};
use crate::scalar::Real;
use crate::scattering::ScatteringOperator;
use crate::transport::{self, EnergyLaw, FaceCondition, NewtonOptions, TransportProblem};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Speed-of-light treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LightMode<T> {
    Stationary,
    /// `c = ∞`: quasi-static transport, temperature carries the dynamics.
    Instant,
    /// `c = 1`.
    Unit,
    /// `c = ε^{−κ}`.
    PowerLaw { kappa: T },
}

/// Column of the regime classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeClass {
    /// `β = −1 < γ`: absorption dominated, `ℓ_M = ℓ_T = ℓ_A`.
    EqAbsorption,
    /// `β = γ = −1`.
    EqCombined,
    /// `γ = −1 < β < 1`: `ℓ_M ≪ ℓ_T ≪ 1`.
    EqScattering,
    /// `γ = −1`, `β = 1`: `ℓ_T = 1`.
    NonEqCritical,
    /// `γ = −1`, `β > 1`: `ℓ_T ≫ 1`.
    NonEqSupercritical,
}

impl RegimeClass {
    pub fn is_equilibrium(self) -> bool {
        matches!(
            self,
            Self::EqAbsorption | Self::EqCombined | Self::EqScattering
        )
    }

    /// Table label ("1.1", "1.2", "2", "3", "4").
    pub fn label(self) -> &'static str {
        match self {
            Self::EqAbsorption => "1.1",
            Self::EqCombined => "1.2",
            Self::EqScattering => "2",
            Self::NonEqCritical => "3",
            Self::NonEqSupercritical => "4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRegime<T> {
    pub eps: T,
    pub beta: T,
    pub gamma: T,
    pub light: LightMode<T>,
}

impl<T: Real> ScalingRegime<T> {
    pub fn new(eps: T, beta: T, gamma: T, light: LightMode<T>) -> Result<Self> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(Error::Regime(format!("eps must lie in (0, 1), got {}", eps.as_f64())));
        }
        if beta < -T::one() || gamma < -T::one() {
            return Err(Error::Regime("beta and gamma must be >= -1".into()));
        }
        if (beta.min(gamma) + T::one()).abs() > T::lit(1e-12) {
            return Err(Error::Regime(format!(
                "min(beta, gamma) must equal -1 (beta = {}, gamma = {})",
                beta.as_f64(),
                gamma.as_f64()
            )));
        }
        if let LightMode::PowerLaw { kappa } = light {
            if !(kappa > T::zero()) {
                return Err(Error::Regime("power-law light speed needs kappa > 0".into()));
            }
        }
        Ok(Self {
            eps,
            beta,
            gamma,
            light,
        })
    }

    pub fn ell_a(&self) -> T {
        self.eps.powf(-self.beta)
    }

    pub fn ell_s(&self) -> T {
        self.eps.powf(-self.gamma)
    }

    pub fn ell_m(&self) -> T {
        self.ell_a().min(self.ell_s())
    }

    pub fn ell_t(&self) -> T {
        (self.ell_a() * self.ell_m()).sqrt()
    }

    /// `τ_h = ℓ_A / min(ℓ_T², 1)`.
    pub fn tau_h(&self) -> T {
        let lt = self.ell_t();
        self.ell_a() / (lt * lt).min(T::one())
    }

    /// Factor `ε^β` multiplying the absorption coefficient.
    pub fn absorption_scale(&self) -> T {
        self.eps.powf(self.beta)
    }

    /// Factor `ε^γ` multiplying the scattering coefficient.
    pub fn scattering_scale(&self) -> T {
        self.eps.powf(self.gamma)
    }

    /// Finite speed of light, if any.
    pub fn light_speed(&self) -> Option<T> {
        match self.light {
            LightMode::Unit => Some(T::one()),
            LightMode::PowerLaw { kappa } => Some(self.eps.powf(-kappa)),
            _ => None,
        }
    }

    pub fn classify(&self) -> RegimeClass {
        let tol = T::lit(1e-12);
        let minus_one = |v: T| (v + T::one()).abs() <= tol;
        if minus_one(self.beta) && minus_one(self.gamma) {
            RegimeClass::EqCombined
        } else if minus_one(self.beta) {
            RegimeClass::EqAbsorption
        } else if (self.beta - T::one()).abs() <= tol {
            RegimeClass::NonEqCritical
        } else if self.beta > T::one() {
            RegimeClass::NonEqSupercritical
        } else {
            RegimeClass::EqScattering
        }
    }
}

/// Incoming radiation at a face, a function of the inward cosine and frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundarySource<T> {
    Planckian { temperature: T },
    /// `W·B_ν(T)`: Planck spectrum with a dilution factor.
    Diluted { temperature: T, dilution: T },
    /// `amplitude·exp(−((μ_in − μ₀)/width)²)·B_ν(T)` with `μ_in` the inward cosine.
    Beam {
        mu0: T,
        width: T,
        amplitude: T,
        temperature: T,
    },
    Vacuum,
    /// Closed-box fixture: specular reflection of the outgoing intensity.
    Reflecting,
}

impl<T: Real> BoundarySource<T> {
    /// Value for inward cosine `mu_in > 0` in group `g`.
    pub fn value(&self, mu_in: T, frequencies: &FrequencyGrid<T>, g: usize) -> T {
        match self {
            Self::Planckian { temperature } => frequencies.planck(g, *temperature),
            Self::Diluted {
                temperature,
                dilution,
            } => *dilution * frequencies.planck(g, *temperature),
            Self::Beam {
                mu0,
                width,
                amplitude,
                temperature,
            } => {
                let z = (mu_in - *mu0) / *width;
                *amplitude * (-z * z).exp() * frequencies.planck(g, *temperature)
            }
            Self::Vacuum | Self::Reflecting => T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidRange(s.into()));
        match self {
            Self::Planckian { temperature } if !(*temperature > T::zero()) => {
                bad("boundary temperature must be positive")
            }
            Self::Diluted {
                temperature,
                dilution,
            } if !(*temperature > T::zero() && *dilution > T::zero()) => {
                bad("diluted source needs positive temperature and dilution")
            }
            Self::Beam {
                width,
                amplitude,
                temperature,
                ..
            } if !(*width > T::zero() && *amplitude >= T::zero() && *temperature > T::zero()) => {
                bad("beam needs positive width and temperature and nonnegative amplitude")
            }
            _ => Ok(()),
        }
    }

    /// Face condition for a face whose inward normal has sign `inward` (+1 left, −1 right).
    pub fn face_condition(
        &self,
        quad: &AngularQuadrature<T>,
        frequencies: &FrequencyGrid<T>,
        inward: T,
    ) -> FaceCondition<T> {
        if let Self::Reflecting = self {
            return FaceCondition::Reflect;
        }
        let g = frequencies.len();
        let mut v = vec![T::zero(); quad.len() * g];
        for d in 0..quad.len() {
            let mu_in = quad.mu(d) * inward;
            if mu_in > T::zero() {
                for k in 0..g {
                    v[d * g + k] = self.value(mu_in, frequencies, k);
                }
            }
        }
        FaceCondition::Inflow(v)
    }

    /// Temperature whose Planckian has the same absorption-weighted energy as the half-range mean.
    fn effective_temperature(
        &self,
        quad: &AngularQuadrature<T>,
        frequencies: &FrequencyGrid<T>,
        wa: &[T],
    ) -> Option<T> {
        let mut xi = T::zero();
        let mut half = T::zero();
        for d in 0..quad.len() {
            let mu = quad.mu(d);
            if mu > T::zero() {
                half += quad.weights()[d];
                for (g, &w) in wa.iter().enumerate() {
                    xi += quad.weights()[d] * w * self.value(mu, frequencies, g);
                }
            }
        }
        if xi > T::zero() {
            invert_weighted(frequencies, wa, xi / half).ok()
        } else {
            None
        }
    }
}

/// Intensity (cell averages and faces) and temperature on the slab.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState<T> {
    pub cells: usize,
    pub directions: usize,
    pub groups: usize,
    /// Cell averages at `(i * D + d) * G + g`.
    pub intensity: Vec<T>,
    /// Face values at `(f * D + d) * G + g`.
    pub faces: Vec<T>,
    pub temperature: Vec<T>,
    pub time: T,
    pub iterations: usize,
}

impl<T: Real> KineticState<T> {
    pub fn at(&self, i: usize, d: usize, g: usize) -> T {
        self.intensity[(i * self.directions + d) * self.groups + g]
    }

    /// Cell intensities `[d * G + g]` of cell `i`.
    pub fn cell(&self, i: usize) -> &[T] {
        let s = self.directions * self.groups;
        &self.intensity[i * s..(i + 1) * s]
    }
}

/// Per-cell distance from Planck equilibrium and from isotropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMetrics {
    /// `‖I − B(T)‖ / ‖B(T)‖` in the frequency- and angle-weighted L¹ norm.
    pub departure: f64,
    /// `‖I − ⟨I⟩‖ / ‖⟨I⟩‖`.
    pub anisotropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StationaryMethod<T> {
    /// Monolithic Newton on `(I, T)`.
    Newton,
    /// Source iteration with under-relaxed temperature updates.
    Picard { relaxation: T, max_outer: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    pub method: StationaryMethod<T>,
    pub tolerance: f64,
    pub max_newton: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            method: StationaryMethod::Newton,
            tolerance: 1e-9,
            max_newton: 60,
        }
    }
}

/// Slab problem: regime, material, discretization and boundary data.
#[derive(Debug, Clone)]
pub struct KineticProblem<T: Real> {
    pub regime: ScalingRegime<T>,
    pub model: MaterialModel<T>,
    pub mesh: SlabMesh<T>,
    pub operator: ScatteringOperator<T>,
    pub left: BoundarySource<T>,
    pub right: BoundarySource<T>,
    sigma_a: Vec<T>,
    sigma_s: Vec<T>,
    left_face: FaceCondition<T>,
    right_face: FaceCondition<T>,
}

impl<T: Real> KineticProblem<T> {
    pub fn new(
        regime: ScalingRegime<T>,
        model: MaterialModel<T>,
        mesh: SlabMesh<T>,
        quad: &AngularQuadrature<T>,
        l_max: usize,
        left: BoundarySource<T>,
        right: BoundarySource<T>,
    ) -> Result<Self> {
        let operator = ScatteringOperator::new(&model.kernel, quad, l_max)?;
        Self::with_operator(regime, model, mesh, operator, left, right)
    }

    pub fn with_operator(
        regime: ScalingRegime<T>,
        model: MaterialModel<T>,
        mesh: SlabMesh<T>,
        operator: ScatteringOperator<T>,
        left: BoundarySource<T>,
        right: BoundarySource<T>,
    ) -> Result<Self> {
        left.validate()?;
        right.validate()?;
        let g = model.groups();
        let (ka, ks) = (regime.absorption_scale(), regime.scattering_scale());
        let mut sigma_a = Vec::with_capacity(mesh.cell_count() * g);
        let mut sigma_s = Vec::with_capacity(mesh.cell_count() * g);
        for &x in mesh.centers() {
            for k in 0..g {
                let (a, s) = (model.alpha_a(k, x), model.alpha_s(k, x));
                if !(a > T::zero()) || !(s >= T::zero()) {
                    return Err(Error::Precondition(format!(
                        "opacities must satisfy alpha_a > 0, alpha_s >= 0 (x = {}, group {k})",
                        x.as_f64()
                    )));
                }
                sigma_a.push(ka * a);
                sigma_s.push(ks * s);
            }
        }
        let quad = operator.quadrature();
        let left_face = left.face_condition(quad, &model.frequencies, T::one());
        let right_face = right.face_condition(quad, &model.frequencies, -T::one());
        Ok(Self {
            regime,
            model,
            mesh,
            operator,
            left,
            right,
            sigma_a,
            sigma_s,
            left_face,
            right_face,
        })
    }

    pub fn quadrature(&self) -> &AngularQuadrature<T> {
        self.operator.quadrature()
    }

    pub fn frequencies(&self) -> &FrequencyGrid<T> {
        &self.model.frequencies
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.mesh.cell_count(), self.quadrature().len(), self.model.groups())
    }

    /// Planckian state `I = B(T)`, `T = temperature` in every cell.
    pub fn equilibrium_state(&self, temperature: &[T]) -> Result<KineticState<T>> {
        let (n, nd, ng) = self.dims();
        if temperature.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: temperature.len(),
            });
        }
        let fr = self.frequencies();
        let mut intensity = Vec::with_capacity(n * nd * ng);
        for &t in temperature {
            for _ in 0..nd {
                for g in 0..ng {
                    intensity.push(fr.planck(g, t));
                }
            }
        }
        let mut faces = Vec::with_capacity((n + 1) * nd * ng);
        for f in 0..=n {
            let t = temperature[f.min(n - 1)];
            for _ in 0..nd {
                for g in 0..ng {
                    faces.push(fr.planck(g, t));
                }
            }
        }
        Ok(KineticState {
            cells: n,
            directions: nd,
            groups: ng,
            intensity,
            faces,
            temperature: temperature.to_vec(),
            time: T::zero(),
            iterations: 0,
        })
    }

    /// Linear interpolation between the faces' effective temperatures.
    pub fn initial_guess(&self) -> Result<Vec<T>> {
        let wa: Vec<T> = {
            let fr = self.frequencies();
            (0..fr.len())
                .map(|g| fr.weights()[g] * self.model.alpha_a(g, T::lit(0.5)))
                .collect()
        };
        let quad = self.quadrature();
        let fr = self.frequencies();
        let tl = self.left.effective_temperature(quad, fr, &wa);
        let tr = self.right.effective_temperature(quad, fr, &wa);
        let (tl, tr) = match (tl, tr) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, a * T::lit(0.5)),
            (None, Some(b)) => (b * T::lit(0.5), b),
            (None, None) => {
                return Err(Error::Precondition(
                    "no incoming radiation at either face; the stationary temperature vanishes"
                        .into(),
                ))
            }
        };
        Ok(self
            .mesh
            .centers()
            .iter()
            .map(|&x| tl + (tr - tl) * x)
            .collect())
    }

    fn problem<'a>(
        &'a self,
        relaxation: T,
        previous: Option<&'a [T]>,
        energy: EnergyLaw<'a, T>,
    ) -> TransportProblem<'a, T> {
        TransportProblem {
            mesh: &self.mesh,
            operator: &self.operator,
            frequencies: &self.model.frequencies,
            sigma_a: &self.sigma_a,
            sigma_s: &self.sigma_s,
            left: &self.left_face,
            right: &self.right_face,
            relaxation,
            previous,
            energy,
        }
    }

    fn wrap(&self, sol: transport::TransportSolution<T>, time: T) -> KineticState<T> {
        let (n, nd, ng) = self.dims();
        KineticState {
            cells: n,
            directions: nd,
            groups: ng,
            intensity: sol.averages,
            faces: sol.faces,
            temperature: sol.temperature,
            time,
            iterations: sol.iterations,
        }
    }

    /// One exponential upwind sweep at frozen temperature, with the scattering
    /// source lagged from `state`.
    pub fn transport_sweep(&self, state: &KineticState<T>, frozen: &[T]) -> Result<KineticState<T>> {
        let p = self.problem(T::zero(), None, EnergyLaw::Given(frozen));
        let (faces, intensity) = transport::sweep(&p, frozen, &state.intensity, &state.faces)?;
        Ok(KineticState {
            intensity,
            faces,
            temperature: frozen.to_vec(),
            iterations: state.iterations + 1,
            ..state.clone()
        })
    }

    /// Stationary solution of the coupled system.
    pub fn solve_stationary(&self, options: &SolverOptions<T>) -> Result<KineticState<T>> {
        let guess = self.initial_guess()?;
        match options.method {
            StationaryMethod::Newton => {
                let p = self.problem(
                    T::zero(),
                    None,
                    EnergyLaw::Balance {
                        capacity: T::zero(),
                        scale: T::one(),
                        previous: &guess,
                    },
                );
                let sol = transport::solve(
                    &p,
                    &guess,
                    None,
                    NewtonOptions {
                        tolerance: options.tolerance,
                        max_iterations: options.max_newton,
                    },
                )?;
                Ok(self.wrap(sol, T::zero()))
            }
            StationaryMethod::Picard {
                relaxation,
                max_outer,
            } => self.picard(guess, relaxation, max_outer, options.tolerance),
        }
    }

    fn picard(
        &self,
        guess: Vec<T>,
        relaxation: T,
        max_outer: usize,
        tolerance: f64,
    ) -> Result<KineticState<T>> {
        let (n, nd, ng) = self.dims();
        let mut state = self.equilibrium_state(&guess)?;
        let quad = self.quadrature();
        let fr = self.frequencies();
        let tol = T::lit(tolerance);
        let mut history = Vec::new();
        for it in 0..max_outer {
            let next = self.transport_sweep(&state, &state.temperature)?;
            let mut temps = Vec::with_capacity(n);
            for i in 0..n {
                let wa: Vec<T> = (0..ng)
                    .map(|g| fr.weights()[g] * self.sigma_a[i * ng + g])
                    .collect();
                let mut xi = T::zero();
                for (g, &w) in wa.iter().enumerate() {
                    let mut e = T::zero();
                    for d in 0..nd {
                        e += quad.weights()[d] * next.at(i, d, g);
                    }
                    xi += w * e / T::four_pi();
                }
                let t_new = invert_weighted(fr, &wa, xi)?;
                let t_old = state.temperature[i];
                temps.push(t_old + relaxation * (t_new - t_old));
            }
            let dt = transport::relative_change(&temps, &state.temperature);
            let di = transport::relative_change(&next.intensity, &state.intensity);
            history.push(dt.max(di).as_f64());
            state = KineticState {
                temperature: temps,
                iterations: it + 1,
                ..next
            };
            if dt <= tol && di <= tol {
                return Ok(state);
            }
        }
        Err(Error::convergence("stationary source iteration", max_outer, history))
    }

    /// Backward-Euler step of the instant-light system: quasi-static transport
    /// with `∂_t T + τ_h Div(flux) = 0`.
    pub fn step_time_instant(&self, state: &KineticState<T>, dt: T) -> Result<KineticState<T>> {
        if self.regime.light != LightMode::Instant {
            return Err(Error::Dispatch("instant step needs light mode `instant`".into()));
        }
        self.implicit_step(state, dt, T::zero())
    }

    /// Backward-Euler step with finite light speed (`unit` or `power_law`).
    pub fn step_time_finite(&self, state: &KineticState<T>, dt: T) -> Result<KineticState<T>> {
        let c = self.regime.light_speed().ok_or_else(|| {
            Error::Dispatch("finite step needs light mode `unit` or `power_law`".into())
        })?;
        let a = T::one() / (c * self.regime.tau_h() * dt);
        self.implicit_step(state, dt, a)
    }

    fn implicit_step(&self, state: &KineticState<T>, dt: T, relaxation: T) -> Result<KineticState<T>> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidRange("time step must be positive".into()));
        }
        let p = self.problem(
            relaxation,
            Some(&state.intensity),
            EnergyLaw::Balance {
                capacity: T::one() / dt,
                scale: self.regime.tau_h(),
                previous: &state.temperature,
            },
        );
        let sol = transport::solve(
            &p,
            &state.temperature,
            Some(&state.faces),
            NewtonOptions::default(),
        )?;
        Ok(self.wrap(sol, state.time + dt))
    }

    /// `Σ_i Δx_i (T_i + (1/c) Σ_g w_g Σ_d w_d I)`; the radiation term is
    /// dropped when light is instantaneous.
    pub fn total_energy(&self, state: &KineticState<T>) -> T {
        let inv_c = self
            .regime
            .light_speed()
            .map(|c| T::one() / c)
            .unwrap_or(T::zero());
        let (n, nd, ng) = self.dims();
        let w = self.quadrature().weights();
        let fw = self.frequencies().weights();
        let mut total = T::zero();
        for i in 0..n {
            let mut e = T::zero();
            for d in 0..nd {
                for g in 0..ng {
                    e += fw[g] * w[d] * state.at(i, d, g);
                }
            }
            total += self.mesh.widths()[i] * (state.temperature[i] + inv_c * e);
        }
        total
    }

    /// Net radiative flux through every face.
    pub fn face_fluxes(&self, state: &KineticState<T>) -> Vec<T> {
        transport::face_fluxes(&state.faces, &self.operator, self.frequencies())
    }

    pub fn equilibrium_departure(&self, state: &KineticState<T>) -> Vec<CellMetrics> {
        metrics(state, self.quadrature(), self.frequencies())
    }
}

/// Departure from `B(T)` and anisotropy per cell.
pub fn metrics<T: Real>(
    state: &KineticState<T>,
    quad: &AngularQuadrature<T>,
    frequencies: &FrequencyGrid<T>,
) -> Vec<CellMetrics> {
    let w = quad.weights();
    let fw = frequencies.weights();
    let total_w = quad.integrate(&vec![T::one(); quad.len()]);
    (0..state.cells)
        .map(|i| {
            let t = state.temperature[i];
            let (mut dep, mut bnorm, mut aniso, mut mnorm) = (T::zero(), T::zero(), T::zero(), T::zero());
            for g in 0..state.groups {
                let b = frequencies.planck(g, t);
                let mut mean = T::zero();
                for d in 0..state.directions {
                    mean += w[d] * state.at(i, d, g);
                }
                mean /= total_w;
                for d in 0..state.directions {
                    let v = state.at(i, d, g);
                    dep += fw[g] * w[d] * (v - b).abs();
                    bnorm += fw[g] * w[d] * b;
                    aniso += fw[g] * w[d] * (v - mean).abs();
                    mnorm += fw[g] * w[d] * mean.abs();
                }
            }
            let ratio = |a: T, b: T| {
                if b > T::zero() {
                    (a / b).as_f64()
                } else if a == T::zero() {
                    0.0
                } else {
                    f64::INFINITY
                }
            };
            CellMetrics {
                departure: ratio(dep, bnorm),
                anisotropy: ratio(aniso, mnorm),
            }
        })
        .collect()
}

/// Writes the binary snapshot: three little-endian `u64` sizes (cells,
/// directions, groups), the row-major cell-average intensity, then the
/// temperatures, all as little-endian `f64`.
pub fn write_snapshot<T: Real, W: Write>(state: &KineticState<T>, mut out: W) -> std::io::Result<()> {
    for s in [state.cells, state.directions, state.groups] {
        out.write_all(&(s as u64).to_le_bytes())?;
    }
    for v in state.intensity.iter().chain(&state.temperature) {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]; returns `(sizes, intensity, temperature)`.
#[allow(clippy::type_complexity)]
pub fn read_snapshot<R: Read>(mut input: R) -> std::io::Result<([usize; 3], Vec<f64>, Vec<f64>)> {
    let mut b8 = [0u8; 8];
    let mut sizes = [0usize; 3];
    for s in &mut sizes {
        input.read_exact(&mut b8)?;
        *s = u64::from_le_bytes(b8) as usize;
    }
    let mut read = |count: usize| -> std::io::Result<Vec<f64>> {
        (0..count)
            .map(|_| {
                input.read_exact(&mut b8)?;
                Ok(f64::from_le_bytes(b8))
            })
            .collect()
    };
    let intensity = read(sizes[0] * sizes[1] * sizes[2])?;
    let temperature = read(sizes[0])?;
    Ok((sizes, intensity, temperature))
}
