//! Bulk limit problems: the three equilibrium diffusion equations for `T`, the
//! two non-equilibrium systems for `(φ₀, T)`, their time-dependent versions,
//! and the parabolic transition of `φ₀` at frozen temperature.
//!
//! Space is discretized by cell-centred finite volumes on `[0, 1]` with two-point
//! fluxes; face conductances are harmonic means of the cell coefficients and
//! Dirichlet data sit on the boundary faces, half a cell from the first centre.
//! Coefficients are normalized so that the radiative flux of group `g` is
//! `−ε D_g ∂_x u_g`, with `u_g = B_g(T)` in equilibrium and `u_g = φ₀_g` otherwise:
//! - eq_absorption: `D = (4π/3)/α_a`;
//! - eq_combined: `D = Σ_d w_d μ_d (Id − θH)⁻¹(μ)_d / (α_a + α_s)` with `θ = α_s/(α_a + α_s)`;
//! - eq_scattering and both non-equilibrium regimes: `D = D_xx/α_s`, where
//!   `D_xx = Σ_d w_d μ_d (Id − H)⁻¹(μ)_d`.

use crate::boundary_layers::BoundaryDatum;
use crate::error::{Error, Result};
use crate::grids::{FrequencyGrid, SlabMesh};
use crate::kinetic::RegimeClass;
use crate::linalg::Triplets;
use crate::planck::{invert_weighted, weighted_emission, MaterialModel};
use crate::scalar::{max_abs, Real};
use crate::scattering::ScatteringOperator;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Stationary,
    /// `c = ∞` (and power-law light, whose bulk problems coincide).
    InstantLight,
    /// `c = 1`: radiative energy `4π Σ_g w_g φ₀_g` joins the capacity.
    FiniteLight,
}

/// Flux coefficients `D_g(x)` at the sample points, laid out `i * G + g`.
pub fn effective_coefficient<T: Real>(
    class: RegimeClass,
    model: &MaterialModel<T>,
    operator: &ScatteringOperator<T>,
    xs: &[T],
) -> Result<Vec<T>> {
    let ng = model.groups();
    let mus: Vec<T> = operator.quadrature().directions().iter().map(|d| d[0]).collect();
    let weights = operator.quadrature().weights();
    let tensor = match class {
        RegimeClass::EqAbsorption | RegimeClass::EqCombined => None,
        _ => Some(operator.diffusion_tensor()?[(0, 0)]),
    };
    let third = T::four_pi() / T::lit(3.0);
    let mut out = Vec::with_capacity(xs.len() * ng);
    for &x in xs {
        for g in 0..ng {
            let (aa, as_) = (model.alpha_a(g, x), model.alpha_s(g, x));
            let d = match class {
                RegimeClass::EqAbsorption => positive(aa, "absorption")?.recip() * third,
                RegimeClass::EqCombined => {
                    let st = positive(aa + as_, "extinction")?;
                    let phi = operator.combined(as_ / st)?.solve(&mus)?;
                    let proj = weights
                        .iter()
                        .zip(&mus)
                        .zip(&phi)
                        .fold(T::zero(), |s, ((&w, &m), &p)| s + w * m * p);
                    proj / st
                }
                _ => tensor.expect("tensor computed for scattering regimes") / positive(as_, "scattering")?,
            };
            out.push(d);
        }
    }
    Ok(out)
}

fn positive<T: Real>(v: T, what: &str) -> Result<T> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Precondition(format!(
            "{what} coefficient must be positive, got {}",
            v.as_f64()
        )))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiffusionOptions {
    /// Relative residual for the equilibrium Newton solves.
    pub tolerance: f64,
    /// Relative residual for the coupled non-equilibrium solves.
    pub nonequilibrium_tolerance: f64,
    pub max_iterations: usize,
    /// Times a failed time step may be split in two.
    pub max_halvings: usize,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            nonequilibrium_tolerance: 1e-9,
            max_iterations: 100,
            max_halvings: 10,
        }
    }
}

/// Bulk solution on the cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionState<T> {
    pub class: RegimeClass,
    pub positions: Vec<T>,
    pub temperature: Vec<T>,
    /// `φ₀` at `i * G + g`; absent in equilibrium regimes where it is `B(T)`.
    pub phi: Option<Vec<T>>,
    pub coefficients: Vec<T>,
    pub time: T,
    pub iterations: usize,
    pub residual: f64,
}

/// A bulk problem: regime, mesh, frozen opacities and Dirichlet data.
#[derive(Debug, Clone)]
pub struct DiffusionProblem<T: Real> {
    pub class: RegimeClass,
    pub mesh: SlabMesh<T>,
    pub frequencies: FrequencyGrid<T>,
    /// `α_a` at the cell centres, `i * G + g`.
    pub alpha_a: Vec<T>,
    pub coefficients: Vec<T>,
    pub left: BoundaryDatum<T>,
    pub right: BoundaryDatum<T>,
    pub options: DiffusionOptions,
    /// Two-point conductances per face, `f * G + g`.
    conductance: Vec<T>,
}

impl<T: Real> DiffusionProblem<T> {
    pub fn new(
        class: RegimeClass,
        model: &MaterialModel<T>,
        operator: &ScatteringOperator<T>,
        mesh: SlabMesh<T>,
        left: BoundaryDatum<T>,
        right: BoundaryDatum<T>,
    ) -> Result<Self> {
        let xs = mesh.centers().to_vec();
        let coefficients = effective_coefficient(class, model, operator, &xs)?;
        let alpha_a: Vec<T> = xs.iter().flat_map(|&x| model.alpha_a_groups(x)).collect();
        if !class.is_equilibrium() {
            for &a in &alpha_a {
                positive(a, "absorption")?;
            }
        }
        for datum in [&left, &right] {
            if !(datum.temperature() > T::zero()) {
                return Err(Error::Domain("Dirichlet temperatures must be positive".into()));
            }
            if let BoundaryDatum::Intensity { groups, .. } = datum {
                if groups.len() != model.groups() {
                    return Err(Error::Shape {
                        expected: model.groups(),
                        got: groups.len(),
                    });
                }
            }
        }
        let conductance = conductances(&mesh, &coefficients, model.groups());
        Ok(Self {
            class,
            mesh,
            frequencies: model.frequencies.clone(),
            alpha_a,
            coefficients,
            left,
            right,
            options: DiffusionOptions::default(),
            conductance,
        })
    }

    pub fn groups(&self) -> usize {
        self.frequencies.len()
    }

    fn cells(&self) -> usize {
        self.mesh.cell_count()
    }

    /// Dirichlet `φ₀` per group at one wall (`B(T)` for a temperature datum).
    fn wall_phi(&self, datum: &BoundaryDatum<T>) -> Vec<T> {
        match datum {
            BoundaryDatum::Intensity { groups, .. } => groups.clone(),
            BoundaryDatum::Temperature { temperature } => (0..self.groups())
                .map(|g| self.frequencies.planck(g, *temperature))
                .collect(),
        }
    }

    fn absorption_weights(&self, i: usize) -> Vec<T> {
        let ng = self.groups();
        (0..ng)
            .map(|g| self.frequencies.weights()[g] * self.alpha_a[i * ng + g])
            .collect()
    }

    /// State at `t = 0` from a temperature profile; `φ₀ = B(T)` unless given.
    pub fn initial_state(&self, temperature: Vec<T>, phi: Option<Vec<T>>) -> Result<DiffusionState<T>> {
        let (n, ng) = (self.cells(), self.groups());
        if temperature.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: temperature.len(),
            });
        }
        if temperature.iter().any(|&t| !(t > T::zero())) {
            return Err(Error::Domain("initial temperature must be positive".into()));
        }
        let phi = if self.class.is_equilibrium() {
            None
        } else {
            let p = phi.unwrap_or_else(|| {
                temperature
                    .iter()
                    .flat_map(|&t| (0..ng).map(move |g| (g, t)))
                    .map(|(g, t)| self.frequencies.planck(g, t))
                    .collect()
            });
            if p.len() != n * ng {
                return Err(Error::Shape {
                    expected: n * ng,
                    got: p.len(),
                });
            }
            Some(p)
        };
        Ok(DiffusionState {
            class: self.class,
            positions: self.mesh.centers().to_vec(),
            temperature,
            phi,
            coefficients: self.coefficients.clone(),
            time: T::zero(),
            iterations: 0,
            residual: 0.0,
        })
    }

    /// Stationary solution of the regime's bulk problem.
    pub fn solve_stationary(&self) -> Result<DiffusionState<T>> {
        if self.class.is_equilibrium() {
            self.solve_equilibrium_stationary()
        } else {
            self.solve_nonequilibrium_stationary()
        }
    }

    /// `∂_x(Σ_g w_g D_g ∂_x B_g(T)) = 0` with Dirichlet temperatures.
    pub fn solve_equilibrium_stationary(&self) -> Result<DiffusionState<T>> {
        if !self.class.is_equilibrium() {
            return Err(Error::Dispatch(format!(
                "regime {} is not of equilibrium type",
                self.class.label()
            )));
        }
        let n = self.cells();
        let (tl, tr) = (self.left.temperature(), self.right.temperature());
        let guess: Vec<T> = self
            .mesh
            .centers()
            .iter()
            .map(|&x| tl + (tr - tl) * x / self.mesh.length())
            .collect();
        let zero = vec![T::zero(); n];
        let (t, it, res) = self.equilibrium_newton(&guess, &zero, T::zero(), T::zero())?;
        let mut s = self.initial_state(t, None)?;
        s.iterations = it;
        s.residual = res;
        Ok(s)
    }

    /// Regime 3: `4π α_a (φ₀ − B(T)) − ∂_x(D ∂_x φ₀) = 0` with `Σ_g w_g α_a (B_g(T) − φ₀_g) = 0`,
    /// by global Newton. Regime 4: `∂_x(D ∂_x φ₀) = 0` per group, then
    /// `T = F⁻¹(Σ_g w_g α_a φ₀_g)` pointwise.
    pub fn solve_nonequilibrium_stationary(&self) -> Result<DiffusionState<T>> {
        match self.class {
            RegimeClass::NonEqCritical => {
                let s0 = self.equilibrium_guess()?;
                let zero = vec![T::zero(); self.cells()];
                let phi0 = s0.phi.clone().expect("non-equilibrium state carries phi");
                let (t, phi, it, res) = self.critical_newton(&s0.temperature, &phi0, &zero, &phi0, T::zero(), T::zero())?;
                Ok(DiffusionState {
                    temperature: t,
                    phi: Some(phi),
                    iterations: it,
                    residual: res,
                    ..s0
                })
            }
            RegimeClass::NonEqSupercritical => {
                let phi = self.group_solves(None, T::zero(), T::zero(), None)?;
                let t = (0..self.cells())
                    .map(|i| self.pointwise_temperature(i, &phi))
                    .collect::<Result<Vec<T>>>()?;
                let mut s = self.initial_state(t, Some(phi))?;
                s.iterations = 1;
                Ok(s)
            }
            _ => Err(Error::Dispatch(format!(
                "regime {} is not of non-equilibrium type",
                self.class.label()
            ))),
        }
    }

    fn equilibrium_guess(&self) -> Result<DiffusionState<T>> {
        let (tl, tr) = (self.left.temperature(), self.right.temperature());
        let t: Vec<T> = self
            .mesh
            .centers()
            .iter()
            .map(|&x| tl + (tr - tl) * x / self.mesh.length())
            .collect();
        self.initial_state(t, None)
    }

    fn pointwise_temperature(&self, i: usize, phi: &[T]) -> Result<T> {
        let ng = self.groups();
        let wa = self.absorption_weights(i);
        let xi = (0..ng).fold(T::zero(), |s, g| s + wa[g] * phi[i * ng + g]);
        invert_weighted(&self.frequencies, &wa, xi)
    }

    /// One backward-Euler step; a step whose Newton solve fails is split in two
    /// up to `max_halvings` times.
    pub fn step(&self, state: &DiffusionState<T>, dt: T, mode: TimeMode) -> Result<DiffusionState<T>> {
        if mode == TimeMode::Stationary {
            return Err(Error::Dispatch("time step needs a time mode".into()));
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidRange("time step must be positive".into()));
        }
        self.step_split(state, dt, mode, 0)
    }

    fn step_split(&self, state: &DiffusionState<T>, dt: T, mode: TimeMode, depth: usize) -> Result<DiffusionState<T>> {
        match self.step_once(state, dt, mode) {
            Err(e) if e.is_convergence_failure() && depth < self.options.max_halvings => {
                let half = dt * T::lit(0.5);
                let mid = self.step_split(state, half, mode, depth + 1)?;
                self.step_split(&mid, half, mode, depth + 1)
            }
            other => other,
        }
    }

    fn step_once(&self, state: &DiffusionState<T>, dt: T, mode: TimeMode) -> Result<DiffusionState<T>> {
        let finite = if mode == TimeMode::FiniteLight { T::one() } else { T::zero() };
        let inv = T::one() / dt;
        let next = match self.class {
            RegimeClass::EqAbsorption | RegimeClass::EqCombined | RegimeClass::EqScattering => {
                let (t, it, res) = self.equilibrium_newton(&state.temperature, &state.temperature, inv, finite)?;
                DiffusionState {
                    temperature: t,
                    iterations: it,
                    residual: res,
                    ..state.clone()
                }
            }
            RegimeClass::NonEqCritical => {
                let phi_old = state.phi.as_ref().ok_or_else(missing_phi)?;
                let (t, phi, it, res) =
                    self.critical_newton(&state.temperature, phi_old, &state.temperature, phi_old, inv, finite * inv)?;
                DiffusionState {
                    temperature: t,
                    phi: Some(phi),
                    iterations: it,
                    residual: res,
                    ..state.clone()
                }
            }
            RegimeClass::NonEqSupercritical => {
                let phi = self.group_solves(None, T::zero(), T::zero(), None)?;
                let t = (0..self.cells())
                    .map(|i| self.relax_cell(i, &phi, state.temperature[i], dt))
                    .collect::<Result<Vec<T>>>()?;
                DiffusionState {
                    temperature: t,
                    phi: Some(phi),
                    iterations: 1,
                    residual: 0.0,
                    ..state.clone()
                }
            }
        };
        Ok(DiffusionState {
            time: state.time + dt,
            ..next
        })
    }

    /// Backward-Euler step of the transition of `φ₀` at frozen temperature:
    /// `4π ∂_τ φ₀ − ∂_x(D ∂_x φ₀) = 4π a α_a (B(T) − φ₀)`, with `a = 1` when
    /// absorption acts on the transition time scale and `a = 0` otherwise.
    pub fn step_transition(&self, state: &DiffusionState<T>, dt: T, absorbing: bool) -> Result<DiffusionState<T>> {
        if self.class.is_equilibrium() {
            return Err(Error::Dispatch("transition equations exist only for non-equilibrium regimes".into()));
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidRange("time step must be positive".into()));
        }
        let phi_old = state.phi.as_ref().ok_or_else(missing_phi)?;
        let a = if absorbing { T::one() } else { T::zero() };
        let phi = self.group_solves(Some(phi_old), T::one() / dt, a, Some(&state.temperature))?;
        Ok(DiffusionState {
            phi: Some(phi),
            time: state.time + dt,
            iterations: 1,
            residual: 0.0,
            ..state.clone()
        })
    }

    /// Steady transition profile (`τ → ∞` of [`Self::step_transition`]).
    pub fn stationary_transition(&self, temperature: &[T], absorbing: bool) -> Result<Vec<T>> {
        let a = if absorbing { T::one() } else { T::zero() };
        self.group_solves(None, T::zero(), a, Some(temperature))
    }

    /// Total radiative flux `−Σ_g w_g D_g ∂_x u_g` on every face (in units of `ε`).
    pub fn face_fluxes(&self, state: &DiffusionState<T>) -> Vec<T> {
        let (n, ng) = (self.cells(), self.groups());
        let u = self.flux_variable(state);
        let (ul, ur) = (self.wall_u(&self.left), self.wall_u(&self.right));
        (0..=n)
            .map(|f| {
                (0..ng).fold(T::zero(), |s, g| {
                    let lo = if f == 0 { ul[g] } else { u[(f - 1) * ng + g] };
                    let hi = if f == n { ur[g] } else { u[f * ng + g] };
                    s - self.frequencies.weights()[g] * self.conductance[f * ng + g] * (hi - lo)
                })
            })
            .collect()
    }

    fn flux_variable(&self, state: &DiffusionState<T>) -> Vec<T> {
        match &state.phi {
            Some(p) => p.clone(),
            None => state
                .temperature
                .iter()
                .flat_map(|&t| (0..self.groups()).map(move |g| (g, t)))
                .map(|(g, t)| self.frequencies.planck(g, t))
                .collect(),
        }
    }

    fn wall_u(&self, datum: &BoundaryDatum<T>) -> Vec<T> {
        if self.class.is_equilibrium() {
            (0..self.groups())
                .map(|g| self.frequencies.planck(g, datum.temperature()))
                .collect()
        } else {
            self.wall_phi(datum)
        }
    }

    /// Relative residual of the stationary bulk equations at `state`.
    pub fn stationary_residual(&self, state: &DiffusionState<T>) -> f64 {
        let (n, ng) = (self.cells(), self.groups());
        let Some(phi) = &state.phi else {
            let flux = self.face_fluxes(state);
            let scale = max_abs(&flux).max(T::lit(1e-300));
            let r = (0..n).fold(T::zero(), |m, i| m.max((flux[i + 1] - flux[i]).abs()));
            return (r / scale).as_f64();
        };
        let fr = &self.frequencies;
        let h = self.mesh.widths();
        let absorbing = self.class == RegimeClass::NonEqCritical;
        let (mut rt, mut st) = (T::zero(), T::lit(1e-300));
        let (mut rc, mut sc) = (T::zero(), T::lit(1e-300));
        for i in 0..n {
            let t = state.temperature[i];
            let mut defect = T::zero();
            for g in 0..ng {
                let a = self.alpha_a[i * ng + g];
                let (p, b) = (phi[i * ng + g], fr.planck(g, t));
                let cond = self.conductance[i * ng + g] + self.conductance[(i + 1) * ng + g];
                let source = if absorbing { T::four_pi() * h[i] * a * (p - b) } else { T::zero() };
                rt = rt.max((source - self.group_divergence(phi, i, g)).abs());
                st = st.max(cond * p.abs() + source.abs());
                defect += fr.weights()[g] * a * (b - p);
                sc = sc.max(fr.weights()[g] * a * b);
            }
            rc = rc.max(defect.abs());
        }
        (rt / st).max(rc / sc).as_f64()
    }

    fn group_divergence(&self, phi: &[T], i: usize, g: usize) -> T {
        let (n, ng) = (self.cells(), self.groups());
        let (ul, ur) = (self.wall_phi(&self.left), self.wall_phi(&self.right));
        let at = |k: isize| -> T {
            if k < 0 {
                ul[g]
            } else if k as usize >= n {
                ur[g]
            } else {
                phi[k as usize * ng + g]
            }
        };
        let k = i as isize;
        self.conductance[(i + 1) * ng + g] * (at(k + 1) - at(k)) - self.conductance[i * ng + g] * (at(k) - at(k - 1))
    }

    /// Newton on `h_i c_T (E(T_i) − E(T_old,i)) − Σ_g w_g [c ΔB_g]_i = 0` with
    /// `E(T) = T + finite · 4π Σ_g w_g B_g(T)`.
    fn equilibrium_newton(&self, guess: &[T], t_old: &[T], capacity: T, finite: T) -> Result<(Vec<T>, usize, f64)> {
        let (n, ng) = (self.cells(), self.groups());
        let fr = &self.frequencies;
        let w = fr.weights();
        let h = self.mesh.widths();
        let (tl, tr) = (self.left.temperature(), self.right.temperature());
        let four_pi = T::four_pi();
        let energy = |t: T| -> (T, T) {
            let (b, db) = (0..ng).fold((T::zero(), T::zero()), |(s, d), g| {
                (s + w[g] * fr.planck(g, t), d + w[g] * fr.planck_dt(g, t))
            });
            (t + finite * four_pi * b, T::one() + finite * four_pi * db)
        };
        let residual = |t: &[T]| -> (Vec<T>, T) {
            let mut r = vec![T::zero(); n];
            let mut size = T::zero();
            for i in 0..n {
                let left = if i == 0 { tl } else { t[i - 1] };
                let right = if i + 1 == n { tr } else { t[i + 1] };
                let mut v = T::zero();
                let mut mag = T::zero();
                for g in 0..ng {
                    let (bl, bc, br) = (fr.planck(g, left), fr.planck(g, t[i]), fr.planck(g, right));
                    let (cl, cr) = (self.conductance[i * ng + g], self.conductance[(i + 1) * ng + g]);
                    v -= w[g] * (cr * (br - bc) - cl * (bc - bl));
                    mag += w[g] * (cr * (br + bc) + cl * (bc + bl));
                }
                if capacity > T::zero() {
                    let (e, _) = energy(t[i]);
                    let (e0, _) = energy(t_old[i]);
                    v += h[i] * capacity * (e - e0);
                    mag += h[i] * capacity * (e.abs() + e0.abs());
                }
                r[i] = v;
                size = size.max(mag);
            }
            (r, size)
        };
        let tol = T::lit(self.options.tolerance);
        let mut t = guess.to_vec();
        let (mut r, mut size) = residual(&t);
        let mut history = Vec::new();
        for it in 0..self.options.max_iterations {
            let norm = max_abs(&r);
            history.push((norm / size).as_f64());
            if norm <= tol * size {
                return Ok((t, it, (norm / size).as_f64()));
            }
            let mut jac = Triplets::new(n);
            for i in 0..n {
                let mut diag = T::zero();
                for g in 0..ng {
                    let (cl, cr) = (self.conductance[i * ng + g], self.conductance[(i + 1) * ng + g]);
                    diag += w[g] * (cl + cr) * fr.planck_dt(g, t[i]);
                    if i > 0 {
                        jac.push(i, i - 1, -w[g] * cl * fr.planck_dt(g, t[i - 1]));
                    }
                    if i + 1 < n {
                        jac.push(i, i + 1, -w[g] * cr * fr.planck_dt(g, t[i + 1]));
                    }
                }
                if capacity > T::zero() {
                    diag += h[i] * capacity * energy(t[i]).1;
                }
                jac.push(i, i, diag);
            }
            let mut band = jac.to_band();
            band.factor()?;
            let mut delta: Vec<T> = r.iter().map(|&v| -v).collect();
            band.solve_in_place(&mut delta);
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<T> = t.iter().zip(&delta).map(|(&a, &d)| a + lambda * d).collect();
                if trial.iter().all(|&v| v > T::zero() && v.is_finite()) {
                    let (rt, st) = residual(&trial);
                    // Armijo on the max-norm residual.
                    if max_abs(&rt) <= (T::one() - T::lit(1e-4) * lambda) * norm {
                        t = trial;
                        r = rt;
                        size = st;
                        accepted = true;
                        break;
                    }
                }
                lambda *= T::lit(0.5);
            }
            if !accepted {
                return Err(Error::convergence("equilibrium diffusion Newton", it + 1, history));
            }
        }
        Err(Error::convergence(
            "equilibrium diffusion Newton",
            self.options.max_iterations,
            history,
        ))
    }

    /// Newton on the regime-3 system per cell `[φ₀_0 … φ₀_{G−1}, T]`:
    /// transport rows `4π h (α_a (φ − B(T)) + c_φ (φ − φ_old)) − [D ∂φ] = 0` and
    /// energy rows `h (c_T (T − T_old) + 4π Σ_g w_g α_a (B_g(T) − φ_g)) = 0`.
    fn critical_newton(
        &self,
        t_guess: &[T],
        phi_guess: &[T],
        t_old: &[T],
        phi_old: &[T],
        c_t: T,
        c_phi: T,
    ) -> Result<(Vec<T>, Vec<T>, usize, f64)> {
        let (n, ng) = (self.cells(), self.groups());
        let fr = &self.frequencies;
        let w = fr.weights();
        let h = self.mesh.widths();
        let (ul, ur) = (self.wall_phi(&self.left), self.wall_phi(&self.right));
        let four_pi = T::four_pi();
        let stride = ng + 1;
        let pack = |t: &[T], phi: &[T]| -> Vec<T> {
            let mut x = vec![T::zero(); n * stride];
            for i in 0..n {
                x[i * stride..i * stride + ng].copy_from_slice(&phi[i * ng..(i + 1) * ng]);
                x[i * stride + ng] = t[i];
            }
            x
        };
        let residual = |x: &[T]| -> (Vec<T>, T) {
            let mut r = vec![T::zero(); n * stride];
            let mut size = T::zero();
            let phi = |i: isize, g: usize| -> T {
                if i < 0 {
                    ul[g]
                } else if i as usize >= n {
                    ur[g]
                } else {
                    x[i as usize * stride + g]
                }
            };
            for i in 0..n {
                let t = x[i * stride + ng];
                let k = i as isize;
                let mut er = T::zero();
                let mut emag = T::zero();
                for g in 0..ng {
                    let a = self.alpha_a[i * ng + g];
                    let b = fr.planck(g, t);
                    let p = phi(k, g);
                    let (cl, cr) = (self.conductance[i * ng + g], self.conductance[(i + 1) * ng + g]);
                    let div = cr * (phi(k + 1, g) - p) - cl * (p - phi(k - 1, g));
                    let v = four_pi * h[i] * (a * (p - b) + c_phi * (p - phi_old[i * ng + g])) - div;
                    let mag = four_pi * h[i] * (a * (p.abs() + b) + c_phi * (p.abs() + phi_old[i * ng + g].abs()))
                        + cr * (phi(k + 1, g).abs() + p.abs())
                        + cl * (p.abs() + phi(k - 1, g).abs());
                    r[i * stride + g] = v;
                    size = size.max(mag);
                    er += w[g] * a * (b - p);
                    emag += w[g] * a * (b + p.abs());
                }
                r[i * stride + ng] = h[i] * (c_t * (t - t_old[i]) + four_pi * er);
                size = size.max(h[i] * (c_t * (t.abs() + t_old[i].abs()) + four_pi * emag));
            }
            (r, size)
        };
        let tol = T::lit(self.options.nonequilibrium_tolerance);
        let mut x = pack(t_guess, phi_guess);
        let (mut r, mut size) = residual(&x);
        let mut history = Vec::new();
        for it in 0..self.options.max_iterations {
            let norm = max_abs(&r);
            history.push((norm / size).as_f64());
            if norm <= tol * size {
                let t = (0..n).map(|i| x[i * stride + ng]).collect();
                let phi = (0..n).flat_map(|i| x[i * stride..i * stride + ng].to_vec()).collect();
                return Ok((t, phi, it, (norm / size).as_f64()));
            }
            let mut jac = Triplets::new(n * stride);
            for i in 0..n {
                let t = x[i * stride + ng];
                let ti = i * stride + ng;
                let mut dt_row = h[i] * c_t;
                for g in 0..ng {
                    let row = i * stride + g;
                    let a = self.alpha_a[i * ng + g];
                    let db = fr.planck_dt(g, t);
                    let (cl, cr) = (self.conductance[i * ng + g], self.conductance[(i + 1) * ng + g]);
                    jac.push(row, row, four_pi * h[i] * (a + c_phi) + cl + cr);
                    if i > 0 {
                        jac.push(row, row - stride, -cl);
                    }
                    if i + 1 < n {
                        jac.push(row, row + stride, -cr);
                    }
                    jac.push(row, ti, -four_pi * h[i] * a * db);
                    jac.push(ti, row, -h[i] * four_pi * w[g] * a);
                    dt_row += h[i] * four_pi * w[g] * a * db;
                }
                jac.push(ti, ti, dt_row);
            }
            let mut band = jac.to_band();
            band.factor()?;
            let mut delta: Vec<T> = r.iter().map(|&v| -v).collect();
            band.solve_in_place(&mut delta);
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<T> = x.iter().zip(&delta).map(|(&a, &d)| a + lambda * d).collect();
                let temps_ok = (0..n).all(|i| trial[i * stride + ng] > T::zero());
                if temps_ok && trial.iter().all(|v| v.is_finite()) {
                    let (rt, st) = residual(&trial);
                    if max_abs(&rt) <= (T::one() - T::lit(1e-4) * lambda) * norm {
                        x = trial;
                        r = rt;
                        size = st;
                        accepted = true;
                        break;
                    }
                }
                lambda *= T::lit(0.5);
            }
            if !accepted {
                return Err(Error::convergence("non-equilibrium diffusion Newton", it + 1, history));
            }
        }
        Err(Error::convergence(
            "non-equilibrium diffusion Newton",
            self.options.max_iterations,
            history,
        ))
    }

    /// Per-group linear solves of `4π h (c_φ (φ − φ_old) + a α_a (φ − B(T))) − [D ∂φ] = 0`.
    fn group_solves(&self, phi_old: Option<&[T]>, c_phi: T, a: T, temperature: Option<&[T]>) -> Result<Vec<T>> {
        let (n, ng) = (self.cells(), self.groups());
        let h = self.mesh.widths();
        let (ul, ur) = (self.wall_phi(&self.left), self.wall_phi(&self.right));
        let four_pi = T::four_pi();
        let mut out = vec![T::zero(); n * ng];
        for g in 0..ng {
            let mut m = Triplets::new(n);
            let mut rhs = vec![T::zero(); n];
            for i in 0..n {
                let (cl, cr) = (self.conductance[i * ng + g], self.conductance[(i + 1) * ng + g]);
                let absorb = a * self.alpha_a[i * ng + g];
                m.push(i, i, four_pi * h[i] * (c_phi + absorb) + cl + cr);
                if i > 0 {
                    m.push(i, i - 1, -cl);
                } else {
                    rhs[i] += cl * ul[g];
                }
                if i + 1 < n {
                    m.push(i, i + 1, -cr);
                } else {
                    rhs[i] += cr * ur[g];
                }
                if let Some(old) = phi_old {
                    rhs[i] += four_pi * h[i] * c_phi * old[i * ng + g];
                }
                if absorb > T::zero() {
                    let t = temperature.expect("absorbing transition needs a temperature")[i];
                    rhs[i] += four_pi * h[i] * absorb * self.frequencies.planck(g, t);
                }
            }
            let mut band = m.to_band();
            band.factor()?;
            band.solve_in_place(&mut rhs);
            for i in 0..n {
                out[i * ng + g] = rhs[i];
            }
        }
        Ok(out)
    }

    /// Backward Euler for `∂_t T = −4π Σ_g w_g α_a,g (B_g(T) − φ₀_g)` in one cell.
    fn relax_cell(&self, i: usize, phi: &[T], t_old: T, dt: T) -> Result<T> {
        let ng = self.groups();
        let wa = self.absorption_weights(i);
        let four_pi = T::four_pi();
        let absorbed = (0..ng).fold(T::zero(), |s, g| s + wa[g] * phi[i * ng + g]);
        let mut t = t_old;
        let mut history = Vec::new();
        for _ in 0..100 {
            let (e, de) = weighted_emission(&self.frequencies, &wa, t);
            let r = t - t_old + dt * four_pi * (e - absorbed);
            let mut next = t - r / (T::one() + dt * four_pi * de);
            // The residual is increasing and convex in T: halving toward T keeps positivity.
            while !(next > T::zero()) {
                next = (next + t) * T::lit(0.5);
            }
            history.push((next - t).abs().as_f64());
            if (next - t).abs() <= T::eps() * T::lit(8.0) * t {
                return Ok(next);
            }
            t = next;
        }
        Err(Error::convergence("pointwise temperature relaxation", 100, history))
    }
}

fn missing_phi() -> Error {
    Error::Precondition("non-equilibrium state lacks phi".into())
}

fn conductances<T: Real>(mesh: &SlabMesh<T>, d: &[T], ng: usize) -> Vec<T> {
    let h = mesh.widths();
    let n = mesh.cell_count();
    let two = T::lit(2.0);
    let mut c = vec![T::zero(); (n + 1) * ng];
    for g in 0..ng {
        // Series resistances of the half cells on either side of each face.
        let half = |i: usize| h[i] / (two * d[i * ng + g]);
        c[g] = T::one() / half(0);
        c[n * ng + g] = T::one() / half(n - 1);
        for f in 1..n {
            c[f * ng + g] = T::one() / (half(f - 1) + half(f));
        }
    }
    c
}
