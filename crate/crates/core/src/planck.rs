//! Planck distribution in units with `2h/c² = 1`, `h/k = 1`, material
//! opacities, the absorption-weighted emission `F(T, x)` and its inverse.

use crate::error::{Error, Result};
use crate::grids::{AngularQuadrature, FrequencyGrid};
use crate::scalar::Real;
use crate::scattering::PhaseFunction;

/// `σ = π⁴/15`, so that `∫₀^∞ B_ν(T) dν = σT⁴`.
pub fn stefan_sigma<T: Real>() -> T {
    T::PI().powi(4) / T::lit(15.0)
}

const WIEN_LIMIT: f64 = 700.0;
const RAYLEIGH_LIMIT: f64 = 1e-6;

fn check_domain<T: Real>(nu: T, t: T) -> Result<()> {
    if !(nu > T::zero()) || t < T::zero() || !t.is_finite() {
        return Err(Error::Domain(format!(
            "Planck function needs nu > 0 and finite T >= 0 (got nu = {}, T = {})",
            nu.as_f64(),
            t.as_f64()
        )));
    }
    Ok(())
}

/// `B_ν(T) = ν³ / (e^{ν/T} − 1)`.
pub fn planck<T: Real>(nu: T, t: T) -> Result<T> {
    check_domain(nu, t)?;
    Ok(planck_unchecked(nu, t))
}

/// `∂B_ν/∂T`.
pub fn dplanck_dt<T: Real>(nu: T, t: T) -> Result<T> {
    check_domain(nu, t)?;
    Ok(dplanck_dt_unchecked(nu, t))
}

#[inline]
pub(crate) fn planck_unchecked<T: Real>(nu: T, t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    let x = nu / t;
    if x > T::lit(WIEN_LIMIT) {
        nu * nu * nu * (-x).exp()
    } else if x < T::lit(RAYLEIGH_LIMIT) {
        nu * nu * t
    } else {
        nu * nu * nu / x.exp_m1()
    }
}

#[inline]
pub(crate) fn dplanck_dt_unchecked<T: Real>(nu: T, t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    let x = nu / t;
    let scale = nu * nu * nu * nu / (t * t);
    if x > T::lit(WIEN_LIMIT) {
        scale * (-x).exp()
    } else if x < T::lit(RAYLEIGH_LIMIT) {
        nu * nu
    } else {
        // e^x/(e^x−1)² = 1/(4 sinh²(x/2))
        let s = (x * T::lit(0.5)).sinh();
        scale / (T::lit(4.0) * s * s)
    }
}

/// Tabulated opacity pair on an `(x, ν)` lattice, bilinear in `x` and `ln ν`.
#[derive(Debug, Clone)]
pub struct OpacityTable<T> {
    xs: Vec<T>,
    nus: Vec<T>,
    /// Row-major `[x][ν]`.
    absorption: Vec<T>,
    scattering: Vec<T>,
}

impl<T: Real> OpacityTable<T> {
    /// Builds the table from `(x, ν, α_a, α_s)` rows covering a full lattice.
    pub fn from_rows(rows: &[(T, T, T, T)]) -> Result<Self> {
        let mut xs: Vec<T> = rows.iter().map(|r| r.0).collect();
        let mut nus: Vec<T> = rows.iter().map(|r| r.1).collect();
        let sort = |v: &mut Vec<T>| {
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite table entries"));
            v.dedup();
        };
        sort(&mut xs);
        sort(&mut nus);
        if rows.len() != xs.len() * nus.len() {
            return Err(Error::InvalidRange(
                "opacity table rows do not form a complete (x, nu) lattice".into(),
            ));
        }
        if nus[0] <= T::zero() {
            return Err(Error::InvalidRange("table frequencies must be positive".into()));
        }
        let mut absorption = vec![T::zero(); rows.len()];
        let mut scattering = vec![T::zero(); rows.len()];
        let mut seen = vec![false; rows.len()];
        for &(x, nu, a, s) in rows {
            let i = xs.iter().position(|&v| v == x).expect("x present");
            let j = nus.iter().position(|&v| v == nu).expect("nu present");
            let k = i * nus.len() + j;
            if seen[k] {
                return Err(Error::InvalidRange("duplicate opacity table row".into()));
            }
            seen[k] = true;
            absorption[k] = a;
            scattering[k] = s;
        }
        Ok(Self {
            xs,
            nus,
            absorption,
            scattering,
        })
    }

    fn locate(grid: &[T], v: T) -> (usize, T) {
        if grid.len() == 1 || v <= grid[0] {
            return (0, T::zero());
        }
        let last = grid.len() - 1;
        if v >= grid[last] {
            return (last - 1, T::one());
        }
        let i = grid.partition_point(|&g| g <= v) - 1;
        (i, (v - grid[i]) / (grid[i + 1] - grid[i]))
    }

    fn eval(&self, data: &[T], nu: T, x: T) -> T {
        let lognus: Vec<T> = self.nus.iter().map(|n| n.ln()).collect();
        let (i, fx) = Self::locate(&self.xs, x);
        let (j, fn_) = Self::locate(&lognus, nu.ln());
        let nn = self.nus.len();
        let at = |a: usize, b: usize| {
            data[a.min(self.xs.len() - 1) * nn + b.min(nn - 1)]
        };
        let one = T::one();
        (one - fx) * ((one - fn_) * at(i, j) + fn_ * at(i, j + 1))
            + fx * ((one - fn_) * at(i + 1, j) + fn_ * at(i + 1, j + 1))
    }
}

/// A frequency- and position-dependent opacity.
#[derive(Debug, Clone)]
pub enum Opacity<T> {
    Constant(T),
    /// `amplitude · (clamp(ν, ν_lo, ν_hi) / ν_ref)^exponent`.
    PowerWindow {
        amplitude: T,
        exponent: T,
        nu_ref: T,
        nu_lo: T,
        nu_hi: T,
    },
    /// One value per frequency group of the model's grid.
    PerGroup(Vec<T>),
    /// Column of a shared table: `true` selects absorption.
    Table(std::sync::Arc<OpacityTable<T>>, bool),
}

impl<T: Real> Opacity<T> {
    pub fn eval(&self, group: usize, nu: T, x: T) -> T {
        match self {
            Opacity::Constant(v) => *v,
            Opacity::PowerWindow {
                amplitude,
                exponent,
                nu_ref,
                nu_lo,
                nu_hi,
            } => *amplitude * (nu.max(*nu_lo).min(*nu_hi) / *nu_ref).powf(*exponent),
            Opacity::PerGroup(v) => v[group],
            Opacity::Table(t, absorption) => {
                let data = if *absorption {
                    &t.absorption
                } else {
                    &t.scattering
                };
                t.eval(data, nu, x)
            }
        }
    }

    /// Multiplies the opacity by a positive constant.
    pub fn scaled(&self, factor: T) -> Self {
        match self {
            Opacity::Constant(v) => Opacity::Constant(*v * factor),
            Opacity::PowerWindow {
                amplitude,
                exponent,
                nu_ref,
                nu_lo,
                nu_hi,
            } => Opacity::PowerWindow {
                amplitude: *amplitude * factor,
                exponent: *exponent,
                nu_ref: *nu_ref,
                nu_lo: *nu_lo,
                nu_hi: *nu_hi,
            },
            Opacity::PerGroup(v) => Opacity::PerGroup(v.iter().map(|&a| a * factor).collect()),
            Opacity::Table(t, absorption) => {
                let mut t2 = (**t).clone();
                for v in t2.absorption.iter_mut().chain(t2.scattering.iter_mut()) {
                    *v *= factor;
                }
                Opacity::Table(std::sync::Arc::new(t2), *absorption)
            }
        }
    }
}

/// Opacities, scattering kernel and frequency grid of a material.
#[derive(Debug, Clone)]
pub struct MaterialModel<T> {
    pub absorption: Opacity<T>,
    pub scattering: Opacity<T>,
    pub kernel: PhaseFunction<T>,
    pub frequencies: FrequencyGrid<T>,
}

impl<T: Real> MaterialModel<T> {
    pub fn grey_constant(alpha_a: T, alpha_s: T, kernel: PhaseFunction<T>) -> Self {
        Self {
            absorption: Opacity::Constant(alpha_a),
            scattering: Opacity::Constant(alpha_s),
            kernel,
            frequencies: FrequencyGrid::grey(),
        }
    }

    /// Frequency-independent opacities on a resolved frequency grid.
    pub fn constant_opacities(
        alpha_a: T,
        alpha_s: T,
        kernel: PhaseFunction<T>,
        frequencies: FrequencyGrid<T>,
    ) -> Self {
        Self {
            absorption: Opacity::Constant(alpha_a),
            scattering: Opacity::Constant(alpha_s),
            kernel,
            frequencies,
        }
    }

    /// Power laws in ν clamped to a window, on a multigroup grid.
    #[allow(clippy::too_many_arguments)]
    pub fn power_window(
        amplitude_a: T,
        exponent_a: T,
        amplitude_s: T,
        exponent_s: T,
        window: (T, T),
        kernel: PhaseFunction<T>,
        frequencies: FrequencyGrid<T>,
    ) -> Self {
        let mk = |amplitude, exponent| Opacity::PowerWindow {
            amplitude,
            exponent,
            nu_ref: T::one(),
            nu_lo: window.0,
            nu_hi: window.1,
        };
        Self {
            absorption: mk(amplitude_a, exponent_a),
            scattering: mk(amplitude_s, exponent_s),
            kernel,
            frequencies,
        }
    }

    pub fn groups(&self) -> usize {
        self.frequencies.len()
    }

    #[inline]
    pub fn alpha_a(&self, group: usize, x: T) -> T {
        self.absorption
            .eval(group, self.frequencies.nodes()[group], x)
    }

    #[inline]
    pub fn alpha_s(&self, group: usize, x: T) -> T {
        self.scattering
            .eval(group, self.frequencies.nodes()[group], x)
    }

    pub fn alpha_a_groups(&self, x: T) -> Vec<T> {
        (0..self.groups()).map(|g| self.alpha_a(g, x)).collect()
    }

    pub fn alpha_s_groups(&self, x: T) -> Vec<T> {
        (0..self.groups()).map(|g| self.alpha_s(g, x)).collect()
    }

    /// Checks positivity/boundedness of the opacities at the given sample points.
    pub fn validate(&self, xs: &[T], bound: T) -> Result<()> {
        for &x in xs {
            for g in 0..self.groups() {
                let (a, s) = (self.alpha_a(g, x), self.alpha_s(g, x));
                if !(a > T::zero() && a <= bound) || !(s >= T::zero() && s <= bound) {
                    return Err(Error::InvalidRange(format!(
                        "opacities out of range at x = {}, group {g}: alpha_a = {}, alpha_s = {}",
                        x.as_f64(),
                        a.as_f64(),
                        s.as_f64()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same material with both opacities multiplied by the given factors.
    pub fn rescaled(&self, absorption: T, scattering: T) -> Self {
        Self {
            absorption: self.absorption.scaled(absorption),
            scattering: self.scattering.scaled(scattering),
            kernel: self.kernel.clone(),
            frequencies: self.frequencies.clone(),
        }
    }
}

/// `F(T, x) = ∫ α_a(ν, x) B_ν(T) dν` on the model's frequency grid.
pub fn opacity_f<T: Real>(t: T, x: T, model: &MaterialModel<T>) -> Result<T> {
    if t < T::zero() || !t.is_finite() {
        return Err(Error::Domain(format!("F needs T >= 0 (got {})", t.as_f64())));
    }
    Ok(f_and_derivative(t, x, model).0)
}

fn f_and_derivative<T: Real>(t: T, x: T, model: &MaterialModel<T>) -> (T, T) {
    let fr = &model.frequencies;
    let mut f = T::zero();
    let mut df = T::zero();
    for g in 0..fr.len() {
        let wa = fr.weights()[g] * model.alpha_a(g, x);
        f += wa * fr.planck(g, t);
        df += wa * fr.planck_dt(g, t);
    }
    (f, df)
}

/// Same as [`f_and_derivative`] for precomputed group weights `w_g α_a(g)`.
pub(crate) fn weighted_emission<T: Real>(fr: &FrequencyGrid<T>, wa: &[T], t: T) -> (T, T) {
    let mut f = T::zero();
    let mut df = T::zero();
    for (g, &w) in wa.iter().enumerate() {
        f += w * fr.planck(g, t);
        df += w * fr.planck_dt(g, t);
    }
    (f, df)
}

/// Solves `Σ_g wa_g B_g(T) = target` by power-of-two bracketing and safeguarded Newton.
pub(crate) fn invert_weighted<T: Real>(fr: &FrequencyGrid<T>, wa: &[T], target: T) -> Result<T> {
    if target < T::zero() || !target.is_finite() {
        return Err(Error::Domain(format!(
            "cannot invert F at {}",
            target.as_f64()
        )));
    }
    if target == T::zero() {
        return Ok(T::zero());
    }
    if wa.iter().all(|&w| w <= T::zero()) {
        return Err(Error::Precondition(
            "absorption vanishes on every group: temperature undetermined".into(),
        ));
    }
    let f = |t: T| weighted_emission(fr, wa, t);
    let two = T::lit(2.0);
    let (mut lo, mut hi) = (T::one(), T::one());
    let mut trace = Vec::new();
    for _ in 0..2100 {
        let v = f(lo).0;
        trace.push(lo.as_f64());
        if v <= target {
            break;
        }
        hi = lo;
        lo /= two;
    }
    for _ in 0..2100 {
        let v = f(hi).0;
        if v >= target {
            break;
        }
        trace.push(hi.as_f64());
        lo = hi;
        hi *= two;
    }
    let (flo, fhi) = (f(lo).0, f(hi).0);
    if !(flo <= target && fhi >= target) {
        return Err(Error::convergence("F bracketing", trace.len(), trace));
    }
    let mut t = if fhi == target { hi } else { T::lit(0.5) * (lo + hi) };
    let tol = T::eps() * T::lit(8.0);
    for it in 0..200 {
        let (v, dv) = f(t);
        let r = v - target;
        if r.abs() <= tol * target {
            return Ok(t);
        }
        if r > T::zero() {
            hi = t;
        } else {
            lo = t;
        }
        let newton = t - r / dv;
        let next = if dv > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            T::lit(0.5) * (lo + hi)
        };
        if (next - t).abs() <= T::eps() * t || hi - lo <= T::eps() * hi {
            return Ok(next);
        }
        trace.push(r.as_f64());
        t = next;
        if it == 199 {
            break;
        }
    }
    Err(Error::convergence("F inversion", 200, trace))
}

/// `F⁻¹(ξ)`: the temperature whose absorption-weighted emission equals `ξ`.
pub fn invert_f<T: Real>(xi: T, x: T, model: &MaterialModel<T>) -> Result<T> {
    let wa = absorption_weights(model, x);
    invert_weighted(&model.frequencies, &wa, xi)
}

/// `w_g α_a(g, x)` for every group.
pub fn absorption_weights<T: Real>(model: &MaterialModel<T>, x: T) -> Vec<T> {
    let fr = &model.frequencies;
    (0..fr.len())
        .map(|g| fr.weights()[g] * model.alpha_a(g, x))
        .collect()
}

/// `T = F⁻¹(∫ α_a ⟨I⟩ dν)` for a field `I[dir * groups + group]` at position `x`.
pub fn temperature_from_intensity<T: Real>(
    intensity: &[T],
    quad: &AngularQuadrature<T>,
    model: &MaterialModel<T>,
    x: T,
) -> Result<T> {
    let groups = model.groups();
    let expected = quad.len() * groups;
    if intensity.len() != expected {
        return Err(Error::Shape {
            expected,
            got: intensity.len(),
        });
    }
    if intensity.iter().any(|&v| v < T::zero()) {
        return Err(Error::Domain("intensity must be nonnegative".into()));
    }
    let wa = absorption_weights(model, x);
    let mut xi = T::zero();
    for (g, &w) in wa.iter().enumerate() {
        let mut s = T::zero();
        for (d, &wd) in quad.weights().iter().enumerate() {
            s += wd * intensity[d * groups + g];
        }
        xi += w * s / T::four_pi();
    }
    invert_weighted(&model.frequencies, &wa, xi)
}
