//! Initial layers: the fast transients at `t = 0` posed in the stretched time
//! `τ = t/ℓ` at a frozen point, and the initial-boundary layers that live in the
//! corner `t, x → 0` on the half line.
//!
//! Bulk layers are stiff ODE systems in `(φ(n, ν), T)` integrated by the
//! three-stage Radau IIA method. The scheme is stiffly accurate and exact for
//! linear invariants, so `T + Σ_g w_g Σ_d w_d φ` is preserved up to the Newton
//! residual whenever the temperature evolves.

use crate::boundary_layers::{layer_mesh, sigma_for, LayerMaterial, MilneOptions, MilneVariant};
use crate::error::{Error, Result};
use crate::grids::{gauss_legendre, FrequencyGrid};
use crate::kinetic::{LightMode, RegimeClass};
use crate::linalg::dense_solve;
use crate::scalar::{max_abs, Real};
use crate::scattering::ScatteringOperator;
use crate::transport::{self, EnergyLaw, FaceCondition, TransportProblem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLayerVariant {
    /// `∂_τ φ = α_a (B(T) − φ)`.
    Absorption,
    /// Adds `α_s (Hφ − φ)`.
    AbsorptionScattering,
    /// `∂_τ φ = α_s (Hφ − φ)` at constant temperature; relaxes to `⟨I_0⟩`.
    Scattering,
    /// Isotropic `φ` starting at `⟨I_0⟩`, relaxing to `B(T)`.
    Thermalization,
}

impl InitialLayerVariant {
    /// Bulk initial layers of a regime, in the order they occur.
    pub fn for_regime<T>(class: RegimeClass, light: LightMode<T>) -> Result<Vec<Self>> {
        match light {
            LightMode::Stationary => {
                Err(Error::Dispatch("stationary problems have no initial layer".into()))
            }
            LightMode::Instant => Err(Error::Dispatch(
                "with instantaneous light the bulk has no initial layer".into(),
            )),
            LightMode::Unit | LightMode::PowerLaw { .. } => Ok(match class {
                RegimeClass::EqAbsorption => vec![Self::Absorption],
                RegimeClass::EqCombined => vec![Self::AbsorptionScattering],
                RegimeClass::EqScattering => vec![Self::Scattering, Self::Thermalization],
                RegimeClass::NonEqCritical | RegimeClass::NonEqSupercritical => {
                    vec![Self::Scattering]
                }
            }),
        }
    }

    /// Fails unless the variant occurs for this regime and light mode.
    pub fn check<T>(self, class: RegimeClass, light: LightMode<T>) -> Result<()> {
        if Self::for_regime(class, light)?.contains(&self) {
            Ok(())
        } else {
            Err(Error::Dispatch(format!(
                "{self:?} initial layer does not occur in regime {}",
                class.label()
            )))
        }
    }

    /// Whether the temperature moves in the layer: only with unit light speed,
    /// and never in the pure scattering layer.
    pub fn evolves_temperature<T>(self, light: LightMode<T>) -> bool {
        matches!(light, LightMode::Unit) && self != Self::Scattering
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InitialOptions {
    /// Local error per step, relative to `max(1, |y|)`.
    pub tolerance: f64,
    pub first_step: f64,
    pub max_steps: usize,
    /// `|dy/dτ|∞ / max(1, |y|∞)` below which the end state counts as settled.
    pub settle_tolerance: f64,
}

impl Default for InitialOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            first_step: 1e-6,
            max_steps: 200_000,
            settle_tolerance: 1e-9,
        }
    }
}

/// Integrated bulk initial layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrajectory<T> {
    pub variant: InitialLayerVariant,
    pub directions: usize,
    pub groups: usize,
    /// Angular weights of the directions used (a single `4π` node when isotropic).
    pub angular_weights: Vec<T>,
    pub taus: Vec<T>,
    /// `φ` per node, `d * G + g`.
    pub intensity: Vec<Vec<T>>,
    pub temperature: Vec<T>,
    /// `dT/dτ` per node, for Hermite interpolation of the history.
    pub temperature_rate: Vec<T>,
    /// The conserved linear functional per node, when the layer has one.
    pub invariant: Option<Vec<T>>,
    pub settled: bool,
}

impl<T: Real> LayerTrajectory<T> {
    pub fn final_intensity(&self) -> &[T] {
        self.intensity.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_temperature(&self) -> T {
        *self.temperature.last().unwrap_or(&T::zero())
    }

    /// Largest deviation of the invariant from its initial value.
    pub fn invariant_drift(&self) -> Option<f64> {
        let inv = self.invariant.as_ref()?;
        let first = inv[0];
        Some(inv.iter().fold(0.0, |m, &v| f64::max(m, (v - first).abs().as_f64())))
    }

    /// Cubic Hermite interpolant of `T(τ)`; constant beyond the last node.
    pub fn temperature_at(&self, tau: T) -> T {
        let n = self.taus.len();
        if n == 0 {
            return T::zero();
        }
        if tau <= self.taus[0] {
            return self.temperature[0];
        }
        if tau >= self.taus[n - 1] {
            return self.temperature[n - 1];
        }
        let k = self.taus.partition_point(|&t| t <= tau).max(1) - 1;
        let (t0, t1) = (self.taus[k], self.taus[k + 1]);
        let h = t1 - t0;
        let s = (tau - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        h00 * self.temperature[k]
            + h10 * h * self.temperature_rate[k]
            + h01 * self.temperature[k + 1]
            + h11 * h * self.temperature_rate[k + 1]
    }
}

/// Right-hand side of a bulk layer with state `[φ (d * G + g), T]`.
struct Bulk<'a, T: Real> {
    fr: &'a FrequencyGrid<T>,
    nd: usize,
    ng: usize,
    wd: Vec<T>,
    sa: Vec<T>,
    ss: Vec<T>,
    h: Option<&'a DMatrix<T>>,
    evolving: bool,
    frozen: T,
}

impl<T: Real> Bulk<'_, T> {
    fn size(&self) -> usize {
        self.nd * self.ng + 1
    }

    fn temperature(&self, y: &[T]) -> T {
        if self.evolving {
            y[self.nd * self.ng]
        } else {
            self.frozen
        }
    }

    fn rhs(&self, y: &[T]) -> Option<Vec<T>> {
        let (nd, ng) = (self.nd, self.ng);
        let t = self.temperature(y);
        if !(t > T::zero()) {
            return None;
        }
        let mut f = vec![T::zero(); self.size()];
        let mut dt = T::zero();
        for g in 0..ng {
            let b = self.fr.planck(g, t);
            let hphi = self.h.map(|h| {
                let col: Vec<T> = (0..nd).map(|d| y[d * ng + g]).collect();
                h * nalgebra::DVector::from_vec(col)
            });
            for d in 0..nd {
                let phi = y[d * ng + g];
                let mut v = self.sa[g] * (b - phi);
                if let Some(hp) = &hphi {
                    v += self.ss[g] * (hp[d] - phi);
                }
                f[d * ng + g] = v;
                dt -= self.fr.weights()[g] * self.wd[d] * self.sa[g] * (b - phi);
            }
        }
        if self.evolving {
            f[nd * ng] = dt;
        }
        Some(f)
    }

    fn jacobian(&self, y: &[T]) -> DMatrix<T> {
        let (nd, ng) = (self.nd, self.ng);
        let n = self.size();
        let t = self.temperature(y);
        let mut j = DMatrix::zeros(n, n);
        let ti = nd * ng;
        for g in 0..ng {
            let db = self.fr.planck_dt(g, t);
            let fw = self.fr.weights()[g];
            for d in 0..nd {
                let r = d * ng + g;
                j[(r, r)] -= self.sa[g] + self.ss[g];
                if let Some(h) = self.h {
                    for e in 0..nd {
                        j[(r, e * ng + g)] += self.ss[g] * h[(d, e)];
                    }
                }
                if self.evolving {
                    j[(r, ti)] += self.sa[g] * db;
                    j[(ti, r)] += fw * self.wd[d] * self.sa[g];
                    j[(ti, ti)] -= fw * self.wd[d] * self.sa[g] * db;
                }
            }
        }
        if !self.evolving {
            // The frozen temperature slot is inert.
            j[(ti, ti)] = T::zero();
        }
        j
    }

    fn invariant(&self, y: &[T]) -> Option<T> {
        let (nd, ng) = (self.nd, self.ng);
        let radiation = || {
            (0..ng).fold(T::zero(), |s, g| {
                s + self.fr.weights()[g]
                    * (0..nd).fold(T::zero(), |u, d| u + self.wd[d] * y[d * ng + g])
            })
        };
        if self.evolving {
            Some(y[nd * ng] + radiation())
        } else if self.sa.iter().all(|&a| a == T::zero()) {
            Some(radiation())
        } else {
            None
        }
    }
}

/// Radau IIA (order 5) tableau.
struct Radau<T> {
    a: [[T; 3]; 3],
}

impl<T: Real> Radau<T> {
    fn new() -> Self {
        let s6 = T::lit(6.0).sqrt();
        let l = T::lit;
        Self {
            a: [
                [
                    (l(88.0) - l(7.0) * s6) / l(360.0),
                    (l(296.0) - l(169.0) * s6) / l(1800.0),
                    (l(-2.0) + l(3.0) * s6) / l(225.0),
                ],
                [
                    (l(296.0) + l(169.0) * s6) / l(1800.0),
                    (l(88.0) + l(7.0) * s6) / l(360.0),
                    (l(-2.0) - l(3.0) * s6) / l(225.0),
                ],
                [(l(16.0) - s6) / l(36.0), (l(16.0) + s6) / l(36.0), l(1.0) / l(9.0)],
            ],
        }
    }

    /// One step by full Newton on the stage system; `None` if Newton fails.
    fn step(&self, sys: &Bulk<'_, T>, y: &[T], h: T, newton_tol: T) -> Option<Vec<T>> {
        let n = sys.size();
        let mut z = vec![T::zero(); 3 * n];
        for _ in 0..25 {
            let stages: Vec<Vec<T>> = (0..3)
                .map(|i| (0..n).map(|k| y[k] + z[i * n + k]).collect())
                .collect();
            let fs: Vec<Vec<T>> = stages.iter().map(|s| sys.rhs(s)).collect::<Option<_>>()?;
            let js: Vec<DMatrix<T>> = stages.iter().map(|s| sys.jacobian(s)).collect();
            let mut res = vec![T::zero(); 3 * n];
            let mut m = DMatrix::<T>::identity(3 * n, 3 * n);
            for i in 0..3 {
                for k in 0..n {
                    let mut s = z[i * n + k];
                    for j in 0..3 {
                        s -= h * self.a[i][j] * fs[j][k];
                    }
                    res[i * n + k] = -s;
                }
                for j in 0..3 {
                    let c = h * self.a[i][j];
                    for r in 0..n {
                        for q in 0..n {
                            m[(i * n + r, j * n + q)] -= c * js[j][(r, q)];
                        }
                    }
                }
            }
            let dz = dense_solve(m, &res).ok()?;
            for (zi, d) in z.iter_mut().zip(&dz) {
                *zi += *d;
            }
            if !z.iter().all(|v| v.is_finite()) {
                return None;
            }
            if max_abs(&dz) <= newton_tol {
                return Some((0..n).map(|k| y[k] + z[2 * n + k]).collect());
            }
        }
        None
    }
}

fn rates<T: Real>(
    variant: InitialLayerVariant,
    material: &LayerMaterial<T>,
) -> (Vec<T>, Vec<T>) {
    let zero = vec![T::zero(); material.groups()];
    match variant {
        InitialLayerVariant::Absorption | InitialLayerVariant::Thermalization => {
            (material.alpha_a.clone(), zero)
        }
        InitialLayerVariant::AbsorptionScattering => {
            (material.alpha_a.clone(), material.alpha_s.clone())
        }
        InitialLayerVariant::Scattering => (zero, material.alpha_s.clone()),
    }
}

/// Angular layout of a variant and its starting intensity.
fn layout<T: Real>(
    variant: InitialLayerVariant,
    operator: &ScatteringOperator<T>,
    ng: usize,
    i0: &[T],
) -> Result<(usize, Vec<T>, Vec<T>)> {
    let quad = operator.quadrature();
    let nd = quad.len();
    if i0.len() != nd * ng {
        return Err(Error::Shape {
            expected: nd * ng,
            got: i0.len(),
        });
    }
    if variant == InitialLayerVariant::Thermalization {
        let mean = (0..ng)
            .map(|g| {
                let col: Vec<T> = (0..nd).map(|d| i0[d * ng + g]).collect();
                quad.mean(&col)
            })
            .collect();
        Ok((1, vec![T::four_pi()], mean))
    } else {
        Ok((nd, quad.weights().to_vec(), i0.to_vec()))
    }
}

/// `50 / rate`, with the rate the slowest relaxation of the variant:
/// `min α_a` when absorbing, `min α_s · gap` for pure scattering.
pub fn default_tau_max<T: Real>(
    variant: InitialLayerVariant,
    material: &LayerMaterial<T>,
    operator: &ScatteringOperator<T>,
) -> Result<T> {
    let min = |v: &[T]| v.iter().fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |m, &x| m.min(x));
    let rate = match variant {
        InitialLayerVariant::Scattering => {
            min(&material.alpha_s) * T::lit(operator.spectral_diagnostics().gap)
        }
        _ => min(&material.alpha_a),
    };
    if !(rate > T::zero()) || !rate.is_finite() {
        return Err(Error::Precondition(format!(
            "{variant:?} initial layer has no positive relaxation rate"
        )));
    }
    Ok(T::lit(50.0) / rate)
}

/// Integrates a bulk initial layer from `τ = 0` to `tau_max`.
#[allow(clippy::too_many_arguments)]
pub fn solve_initial_layer<T: Real>(
    variant: InitialLayerVariant,
    light: LightMode<T>,
    material: &LayerMaterial<T>,
    operator: &ScatteringOperator<T>,
    i0: &[T],
    t0: T,
    tau_max: T,
    options: &InitialOptions,
) -> Result<LayerTrajectory<T>> {
    if matches!(light, LightMode::Stationary | LightMode::Instant) {
        return Err(Error::Dispatch(
            "bulk initial layers need a finite light speed".into(),
        ));
    }
    material.validate()?;
    if !(t0 > T::zero()) {
        return Err(Error::Domain("initial temperature must be positive".into()));
    }
    if !(tau_max > T::zero()) {
        return Err(Error::InvalidRange("tau_max must be positive".into()));
    }
    let ng = material.groups();
    let (nd, wd, phi0) = layout(variant, operator, ng, i0)?;
    let (sa, ss) = rates(variant, material);
    let h = (variant == InitialLayerVariant::AbsorptionScattering
        || variant == InitialLayerVariant::Scattering)
        .then(|| operator.matrix());
    let sys = Bulk {
        fr: &material.frequencies,
        nd,
        ng,
        wd: wd.clone(),
        sa,
        ss,
        h,
        evolving: variant.evolves_temperature(light),
        frozen: t0,
    };
    let radau = Radau::new();
    let tol = T::lit(options.tolerance);
    let mut y = phi0;
    y.push(t0);
    let mut tau = T::zero();
    let mut step = T::lit(options.first_step).min(tau_max);
    let mut traj = LayerTrajectory {
        variant,
        directions: nd,
        groups: ng,
        angular_weights: wd,
        taus: Vec::new(),
        intensity: Vec::new(),
        temperature: Vec::new(),
        temperature_rate: Vec::new(),
        invariant: sys.invariant(&y).map(|_| Vec::new()),
        settled: false,
    };
    let record = |traj: &mut LayerTrajectory<T>, tau: T, y: &[T]| -> Result<()> {
        let f = sys
            .rhs(y)
            .ok_or_else(|| Error::Integration("temperature left the positive axis".into()))?;
        traj.taus.push(tau);
        traj.intensity.push(y[..nd * ng].to_vec());
        traj.temperature.push(sys.temperature(y));
        traj.temperature_rate.push(f[nd * ng]);
        if let (Some(inv), Some(v)) = (traj.invariant.as_mut(), sys.invariant(y)) {
            inv.push(v);
        }
        Ok(())
    };
    record(&mut traj, tau, &y)?;
    let mut steps = 0;
    while tau < tau_max {
        if steps >= options.max_steps {
            return Err(Error::Integration(format!(
                "step limit {} reached at tau = {:e}",
                options.max_steps,
                tau.as_f64()
            )));
        }
        steps += 1;
        step = step.min(tau_max - tau);
        let scale = T::one().max(max_abs(&y));
        let newton_tol = (tol * T::lit(1e-3)).max(T::eps() * T::lit(16.0)) * scale;
        let half = step * T::lit(0.5);
        let big = radau.step(&sys, &y, step, newton_tol);
        let two = radau
            .step(&sys, &y, half, newton_tol)
            .and_then(|m| radau.step(&sys, &m, half, newton_tol));
        let (big, two) = match (big, two) {
            (Some(b), Some(t)) => (b, t),
            _ => {
                step *= T::lit(0.25);
                if step < T::eps() * (T::one() + tau) {
                    return Err(Error::Integration(format!(
                        "step size underflow at tau = {:e}",
                        tau.as_f64()
                    )));
                }
                continue;
            }
        };
        // Step doubling: the two-half-step error is (big − two)/(2^5 − 1).
        let diff: Vec<T> = big.iter().zip(&two).map(|(&a, &b)| a - b).collect();
        let err = max_abs(&diff) / (T::lit(31.0) * scale);
        let factor = if err > T::zero() {
            (T::lit(0.9) * (tol / err).powf(T::lit(1.0 / 6.0)))
                .min(T::lit(4.0))
                .max(T::lit(0.2))
        } else {
            T::lit(4.0)
        };
        if err <= tol {
            tau += step;
            y = two;
            record(&mut traj, tau, &y)?;
        }
        step *= factor;
    }
    let f = sys.rhs(&y).unwrap_or_default();
    traj.settled =
        max_abs(&f) <= T::lit(options.settle_tolerance) * T::one().max(max_abs(&y));
    Ok(traj)
}

/// Temperature seen by the emission term of a closed form.
pub enum TemperaturePath<'a, T> {
    Frozen(T),
    History(&'a dyn Fn(T) -> T),
}

const SERIES_TERMS: usize = 200;

/// Closed-form value of a bulk initial layer at `tau`, in the layout of
/// [`solve_initial_layer`]:
/// - absorption: `I_0 e^{−α_a τ} + ∫_0^τ α_a e^{−α_a(τ−s)} B(T(s)) ds`;
/// - absorption/scattering: the scattering part becomes the Poisson series
///   `e^{−α_s τ} Σ_n (α_s τ)^n/n! Hⁿ I_0`;
/// - scattering: the semigroup `exp(−α_s τ (Id − H)) I_0`;
/// - thermalization: the absorption form for the isotropic mean.
pub fn closed_form_initial_layer<T: Real>(
    variant: InitialLayerVariant,
    material: &LayerMaterial<T>,
    operator: &ScatteringOperator<T>,
    i0: &[T],
    path: TemperaturePath<'_, T>,
    tau: T,
) -> Result<Vec<T>> {
    material.validate()?;
    if !(tau >= T::zero()) {
        return Err(Error::InvalidRange("tau must be nonnegative".into()));
    }
    let ng = material.groups();
    let (nd, _, phi0) = layout(variant, operator, ng, i0)?;
    let mut out = vec![T::zero(); nd * ng];
    let m = operator.matrix();
    for g in 0..ng {
        let col: Vec<T> = (0..nd).map(|d| phi0[d * ng + g]).collect();
        let (aa, as_) = (material.alpha_a[g], material.alpha_s[g]);
        let transported = match variant {
            InitialLayerVariant::Absorption | InitialLayerVariant::Thermalization => {
                col.iter().map(|&v| v * (-aa * tau).exp()).collect()
            }
            InitialLayerVariant::AbsorptionScattering => poisson_series(m, &col, as_ * tau)?
                .into_iter()
                .map(|v| v * (-aa * tau).exp())
                .collect(),
            InitialLayerVariant::Scattering => {
                let gen = (DMatrix::<T>::identity(nd, nd) - m) * (-as_ * tau);
                let e = gen.exp();
                (e * nalgebra::DVector::from_vec(col)).as_slice().to_vec()
            }
        };
        let emitted = if variant == InitialLayerVariant::Scattering {
            T::zero()
        } else {
            duhamel(&material.frequencies, g, aa, &path, tau)
        };
        for d in 0..nd {
            out[d * ng + g] = transported[d] + emitted;
        }
    }
    Ok(out)
}

/// `Σ_n e^{−λ} λ^n/n! Hⁿ v`; the weights are formed in log space and the
/// remaining Poisson mass bounds the tail because `H` is a Markov matrix.
fn poisson_series<T: Real>(h: &DMatrix<T>, v: &[T], lambda: T) -> Result<Vec<T>> {
    let mut term = nalgebra::DVector::from_column_slice(v);
    let mut sum = nalgebra::DVector::zeros(v.len());
    if lambda == T::zero() {
        return Ok(v.to_vec());
    }
    let ln_l = lambda.ln();
    let mut ln_p = -lambda;
    let mut mass = T::zero();
    for n in 0..SERIES_TERMS {
        if n > 0 {
            ln_p += ln_l - T::of(n).ln();
            term = h * term;
        }
        let p = ln_p.exp();
        mass += p;
        sum += &term * p;
        let tail = (T::one() - mass).max(T::zero());
        if T::of(n) > lambda && tail <= T::eps() * T::lit(4.0) {
            return Ok(sum.as_slice().to_vec());
        }
    }
    Err(Error::Truncation(format!(
        "scattering series did not settle in {SERIES_TERMS} terms (lambda = {:e})",
        lambda.as_f64()
    )))
}

/// `∫_0^τ α e^{−α(τ−s)} B_g(T(s)) ds` by adaptive Gauss–Legendre panels.
fn duhamel<T: Real>(fr: &FrequencyGrid<T>, g: usize, alpha: T, path: &TemperaturePath<'_, T>, tau: T) -> T {
    match path {
        TemperaturePath::Frozen(t) => fr.planck(g, *t) * (T::one() - (-alpha * tau).exp()),
        TemperaturePath::History(f) => {
            if tau == T::zero() || alpha == T::zero() {
                return T::zero();
            }
            let (x, w) = gauss_legendre::<T>(8);
            let kernel = |s: T| alpha * (-alpha * (tau - s)).exp() * fr.planck(g, f(s));
            let panel = |a: T, b: T| {
                let (c, r) = ((a + b) * T::lit(0.5), (b - a) * T::lit(0.5));
                x.iter().zip(&w).fold(T::zero(), |s, (&xi, &wi)| s + wi * r * kernel(c + r * xi))
            };
            adaptive(&panel, T::zero(), tau, panel(T::zero(), tau), T::lit(1e-14), 0)
        }
    }
}

fn adaptive<T: Real>(panel: &dyn Fn(T, T) -> T, a: T, b: T, whole: T, tol: T, depth: usize) -> T {
    let m = (a + b) * T::lit(0.5);
    let (l, r) = (panel(a, m), panel(m, b));
    let split = l + r;
    if depth >= 40 || (split - whole).abs() <= tol * (T::one().max(split.abs())) {
        return split;
    }
    adaptive(panel, a, m, l, tol, depth + 1) + adaptive(panel, m, b, r, tol, depth + 1)
}

/// Closure of the temperature in an initial-boundary layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerCase {
    /// `T ≡ T_0`; the intensity relaxes by time-dependent transport.
    FrozenTemperature,
    /// Unit light, equilibrium regimes: transport coupled to `∂_τ T`.
    CoupledTransport,
    /// Instant light, equilibrium regimes: quasi-static transport coupled to `∂_τ T`.
    QuasiStatic,
    /// Instant light, scattering regimes: the stationary scattering Milne
    /// intensity drives a pointwise temperature ODE.
    DrivenTemperature,
}

impl CornerCase {
    pub fn for_regime<T>(class: RegimeClass, light: LightMode<T>) -> Result<Self> {
        let absorbing = matches!(class, RegimeClass::EqAbsorption | RegimeClass::EqCombined);
        match light {
            LightMode::Stationary => Err(Error::Dispatch(
                "stationary problems have no initial-boundary layer".into(),
            )),
            LightMode::PowerLaw { .. } => Ok(Self::FrozenTemperature),
            LightMode::Unit if absorbing => Ok(Self::CoupledTransport),
            LightMode::Unit => Ok(Self::FrozenTemperature),
            LightMode::Instant if absorbing => Ok(Self::QuasiStatic),
            LightMode::Instant => Ok(Self::DrivenTemperature),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CornerOptions {
    /// Half-line truncation in mean free paths of the least opaque group.
    pub length: f64,
    pub first_step: f64,
    pub growth: f64,
    pub max_step: f64,
    pub tau_max: f64,
    pub mesh: MilneOptions,
}

impl Default for CornerOptions {
    fn default() -> Self {
        Self {
            length: 20.0,
            first_step: 1e-3,
            growth: 1.2,
            max_step: 50.0,
            tau_max: 1e3,
            mesh: MilneOptions::default(),
        }
    }
}

/// Time history of an initial-boundary layer on `[0, Y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerTrajectory<T> {
    pub case: CornerCase,
    pub length: T,
    pub positions: Vec<T>,
    pub directions: usize,
    pub groups: usize,
    pub taus: Vec<T>,
    /// Cell averages per time, `(i * D + d) * G + g`.
    pub intensity: Vec<Vec<T>>,
    pub temperature: Vec<Vec<T>>,
}

/// Integrates the initial-boundary layer of a regime: initial datum `i0`
/// (`d * G + g`, uniform in `y`), temperature `t0`, and inflow `incoming` at `y = 0`.
#[allow(clippy::too_many_arguments)]
pub fn solve_initial_boundary_layer<T: Real>(
    class: RegimeClass,
    light: LightMode<T>,
    material: &LayerMaterial<T>,
    operator: &ScatteringOperator<T>,
    i0: &[T],
    t0: T,
    incoming: &[T],
    options: &CornerOptions,
) -> Result<CornerTrajectory<T>> {
    let case = CornerCase::for_regime(class, light)?;
    material.validate()?;
    if !(t0 > T::zero()) {
        return Err(Error::Domain("initial temperature must be positive".into()));
    }
    let variant = MilneVariant::for_regime(class);
    let mesh = layer_mesh(variant, material, &options.mesh, options.length)?;
    let quad = operator.quadrature();
    let (nd, ng, n) = (quad.len(), material.groups(), mesh.cell_count());
    for v in [i0, incoming] {
        if v.len() != nd * ng {
            return Err(Error::Shape {
                expected: nd * ng,
                got: v.len(),
            });
        }
    }
    let (sa, ss) = sigma_for(variant, material);
    let sigma_a: Vec<T> = (0..n).flat_map(|_| sa.iter().copied()).collect();
    let sigma_s: Vec<T> = (0..n).flat_map(|_| ss.iter().copied()).collect();
    let left = FaceCondition::Inflow(incoming.to_vec());
    let right = FaceCondition::Reflect;
    let newton = options.mesh.newton;
    let mut traj = CornerTrajectory {
        case,
        length: mesh.length(),
        positions: mesh.centers().to_vec(),
        directions: nd,
        groups: ng,
        taus: vec![T::zero()],
        intensity: vec![(0..n).flat_map(|_| i0.iter().copied()).collect()],
        temperature: vec![vec![t0; n]],
    };
    let mut faces: Vec<T> = (0..=n).flat_map(|_| i0.iter().copied()).collect();
    let ones = vec![T::one(); n];
    let base = TransportProblem {
        mesh: &mesh,
        operator,
        frequencies: &material.frequencies,
        sigma_a: &sigma_a,
        sigma_s: &sigma_s,
        left: &left,
        right: &right,
        relaxation: T::zero(),
        previous: None,
        energy: EnergyLaw::Given(&ones),
    };
    let stationary = if case == CornerCase::DrivenTemperature {
        Some(transport::solve(&base, &ones, None, newton)?)
    } else {
        None
    };
    let tau_max = T::lit(options.tau_max);
    let mut tau = T::zero();
    let mut dt = T::lit(options.first_step);
    while tau < tau_max {
        dt = dt.min(tau_max - tau);
        let prev_i = traj.intensity.last().expect("initial state recorded").clone();
        let prev_t = traj.temperature.last().expect("initial state recorded").clone();
        let inv = T::one() / dt;
        let (avg, temps) = match case {
            CornerCase::FrozenTemperature => {
                let sol = transport::solve(
                    &TransportProblem {
                        relaxation: inv,
                        previous: Some(&prev_i),
                        energy: EnergyLaw::Given(&prev_t),
                        ..base
                    },
                    &prev_t,
                    Some(&faces),
                    newton,
                )?;
                faces = sol.faces;
                (sol.averages, prev_t)
            }
            CornerCase::CoupledTransport | CornerCase::QuasiStatic => {
                let relax = if case == CornerCase::CoupledTransport { inv } else { T::zero() };
                let law = EnergyLaw::Balance {
                    capacity: inv,
                    scale: T::one(),
                    previous: &prev_t,
                };
                let sol = transport::solve(
                    &TransportProblem {
                        relaxation: relax,
                        previous: Some(&prev_i),
                        energy: law,
                        ..base
                    },
                    &prev_t,
                    Some(&faces),
                    newton,
                )?;
                faces = sol.faces;
                (sol.averages, sol.temperature)
            }
            CornerCase::DrivenTemperature => {
                let st = stationary.as_ref().expect("stationary intensity computed");
                let temps = (0..n)
                    .map(|i| {
                        let cell = &st.averages[i * nd * ng..(i + 1) * nd * ng];
                        driven_step(material, quad.weights(), cell, prev_t[i], dt)
                    })
                    .collect::<Result<Vec<T>>>()?;
                (st.averages.clone(), temps)
            }
        };
        tau += dt;
        traj.taus.push(tau);
        traj.intensity.push(avg);
        traj.temperature.push(temps);
        dt = (dt * T::lit(options.growth)).min(T::lit(options.max_step));
    }
    Ok(traj)
}

/// Backward-Euler step of `∂_τ T = −Σ_g w_g α_a,g Σ_d w_d (B_g(T) − I_dg)`.
fn driven_step<T: Real>(material: &LayerMaterial<T>, wd: &[T], cell: &[T], t_old: T, dt: T) -> Result<T> {
    let fr = &material.frequencies;
    let ng = material.groups();
    let four_pi: T = wd.iter().fold(T::zero(), |s, &w| s + w);
    let mut absorbed = T::zero();
    for g in 0..ng {
        let e = wd
            .iter()
            .enumerate()
            .fold(T::zero(), |s, (d, &w)| s + w * cell[d * ng + g]);
        absorbed += fr.weights()[g] * material.alpha_a[g] * e;
    }
    let mut t = t_old;
    for _ in 0..100 {
        let (mut emit, mut demit) = (T::zero(), T::zero());
        for g in 0..ng {
            let c = fr.weights()[g] * material.alpha_a[g] * four_pi;
            emit += c * fr.planck(g, t);
            demit += c * fr.planck_dt(g, t);
        }
        let r = t - t_old + dt * (emit - absorbed);
        let step = r / (T::one() + dt * demit);
        // The residual is increasing and convex in T, so halving keeps T positive.
        let mut next = t - step;
        while !(next > T::zero()) {
            next = (next + t) * T::lit(0.5);
        }
        if (next - t).abs() <= T::eps() * T::lit(8.0) * t {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::convergence("pointwise temperature step", 100, vec![]))
}
