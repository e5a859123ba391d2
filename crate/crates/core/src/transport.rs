//! Discrete-ordinates slab transport with the step-characteristic scheme.
//!
//! Unknowns are the face intensities `ψ(f, d, g)` and the cell temperatures.
//! Within a cell the source is constant, so the characteristic solution is
//! exponential and the cell balance `|μ|(ψ_out − ψ_in) = Δx (S − σ_t ψ̄)` holds
//! exactly with the cell average `ψ̄ = c_out ψ_out + c_in ψ_in`. Summed over
//! directions and groups this balance is what makes the energy rows
//! conservative: the discrete flux difference across a cell equals the
//! discrete absorption minus emission, with no truncation term.
//!
//! The coupled system is solved monolithically by Newton's method; it is
//! linear in `ψ` and nonlinear only through `B(T)`. The Jacobian is banded
//! when unknowns are ordered `[X_0, T_0, X_1, T_1, …, T_{N−1}, X_N]`, where
//! `X_f` is the face block of all directions and groups.

use crate::error::{Error, Result};
use crate::grids::{FrequencyGrid, SlabMesh};
use crate::linalg::Triplets;
use crate::scalar::{max_abs, Real};
use crate::scattering::ScatteringOperator;

/// Incoming data at one slab face.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceCondition<T> {
    /// `ψ(d, g)` for every direction and group (`d * G + g`); only the incoming
    /// directions are read.
    Inflow(Vec<T>),
    /// Specular reflection: incoming `ψ_d` equals outgoing `ψ_{mirror(d)}`.
    Reflect,
}

/// Closure of the temperature unknowns.
#[derive(Debug, Clone, Copy)]
pub enum EnergyLaw<'a, T> {
    /// Temperature prescribed per cell.
    Given(&'a [T]),
    /// `c_T (T − T_old) − scale Σ_g w_g σ_a,g (Σ_d w_d ψ̄ − 4π B_g(T)) = 0`.
    Balance {
        capacity: T,
        scale: T,
        previous: &'a [T],
    },
}

/// One implicit transport problem on a slab mesh.
#[derive(Debug, Clone, Copy)]
pub struct TransportProblem<'a, T: Real> {
    pub mesh: &'a SlabMesh<T>,
    pub operator: &'a ScatteringOperator<T>,
    pub frequencies: &'a FrequencyGrid<T>,
    /// Absorption per cell and group (`i * G + g`), already scaled.
    pub sigma_a: &'a [T],
    /// Scattering per cell and group, already scaled.
    pub sigma_s: &'a [T],
    pub left: &'a FaceCondition<T>,
    pub right: &'a FaceCondition<T>,
    /// Backward-Euler relaxation `a = 1/(c τ_h Δt)`; zero when quasi-static.
    pub relaxation: T,
    /// Cell-average intensities of the previous step (needed when `relaxation > 0`).
    pub previous: Option<&'a [T]>,
    pub energy: EnergyLaw<'a, T>,
}

/// Converged transport state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution<T> {
    /// `ψ(f, d, g)` at `(f * D + d) * G + g`.
    pub faces: Vec<T>,
    /// Cell averages at `(i * D + d) * G + g`.
    pub averages: Vec<T>,
    pub temperature: Vec<T>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 60,
        }
    }
}

/// Per-(cell, direction, group) exponential-scheme coefficients.
#[derive(Debug, Clone, Copy)]
struct Cell<T> {
    /// `e^{−τ}`.
    atten: T,
    /// `(1 − e^{−τ})/σ_t`, the source gain along the characteristic.
    gain: T,
    c_out: T,
    c_in: T,
}

fn cell_coefficients<T: Real>(sigma_t: T, dx: T, mu_abs: T) -> Cell<T> {
    let path = dx / mu_abs;
    let tau = sigma_t * path;
    let atten = (-tau).exp();
    // φ1(τ) = (1 − e^{−τ})/τ and the average weight c_out, both with small-τ series.
    let (phi1, c_out) = if tau < T::lit(1e-4) {
        (
            T::one() - tau * T::lit(0.5) + tau * tau / T::lit(6.0),
            T::lit(0.5) + tau / T::lit(12.0),
        )
    } else {
        let one_minus = -(-tau).exp_m1();
        (one_minus / tau, T::one() / one_minus - T::one() / tau)
    };
    Cell {
        atten,
        gain: path * phi1,
        c_out,
        c_in: T::one() - c_out,
    }
}

/// Index arithmetic shared by assembly and post-processing.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    d: usize,
    g: usize,
}

impl Layout {
    fn block(&self) -> usize {
        self.d * self.g + 1
    }
    fn unknowns(&self) -> usize {
        (self.n + 1) * self.block() - 1
    }
    fn psi(&self, f: usize, d: usize, g: usize) -> usize {
        f * self.block() + d * self.g + g
    }
    fn temp(&self, i: usize) -> usize {
        i * self.block() + self.d * self.g
    }
    fn cell(&self, i: usize, d: usize, g: usize) -> usize {
        (i * self.d + d) * self.g + g
    }
}

struct Prepared<'a, T: Real> {
    p: &'a TransportProblem<'a, T>,
    lay: Layout,
    mus: Vec<T>,
    coef: Vec<Cell<T>>,
}

impl<'a, T: Real> Prepared<'a, T> {
    fn new(p: &'a TransportProblem<'a, T>) -> Result<Self> {
        let quad = p.operator.quadrature();
        let lay = Layout {
            n: p.mesh.cell_count(),
            d: quad.len(),
            g: p.frequencies.len(),
        };
        let ng = lay.n * lay.g;
        for (name, v) in [("sigma_a", p.sigma_a), ("sigma_s", p.sigma_s)] {
            if v.len() != ng {
                return Err(Error::Shape {
                    expected: ng,
                    got: v.len(),
                });
            }
            if v.iter().any(|&s| !(s >= T::zero()) || !s.is_finite()) {
                return Err(Error::Domain(format!("{name} must be finite and nonnegative")));
            }
        }
        let mus = quad.mus();
        if mus.iter().any(|m| *m == T::zero()) {
            return Err(Error::InvalidOrder(quad.order()));
        }
        for face in [p.left, p.right] {
            if let FaceCondition::Inflow(v) = face {
                if v.len() != lay.d * lay.g {
                    return Err(Error::Shape {
                        expected: lay.d * lay.g,
                        got: v.len(),
                    });
                }
            }
        }
        if p.relaxation > T::zero() {
            match p.previous {
                Some(prev) if prev.len() == lay.n * lay.d * lay.g => {}
                Some(prev) => {
                    return Err(Error::Shape {
                        expected: lay.n * lay.d * lay.g,
                        got: prev.len(),
                    })
                }
                None => {
                    return Err(Error::Precondition(
                        "time relaxation requires the previous intensity".into(),
                    ))
                }
            }
        }
        match p.energy {
            EnergyLaw::Given(t) | EnergyLaw::Balance { previous: t, .. } if t.len() != lay.n => {
                return Err(Error::Shape {
                    expected: lay.n,
                    got: t.len(),
                })
            }
            EnergyLaw::Balance { capacity, .. }
                if capacity == T::zero() => {
                    for i in 0..lay.n {
                        if (0..lay.g).all(|g| p.sigma_a[i * lay.g + g] == T::zero()) {
                            return Err(Error::Precondition(format!(
                                "cell {i} has no absorption; its temperature is undetermined"
                            )));
                        }
                    }
                }
            _ => {}
        }
        let widths = p.mesh.widths();
        let mut coef = Vec::with_capacity(lay.n * lay.d * lay.g);
        for i in 0..lay.n {
            for &mu in &mus {
                for g in 0..lay.g {
                    let st = p.sigma_a[i * lay.g + g] + p.sigma_s[i * lay.g + g] + p.relaxation;
                    coef.push(cell_coefficients(st, widths[i], mu.abs()));
                }
            }
        }
        Ok(Self { p, lay, mus, coef })
    }

    fn faces_of(&self, i: usize, d: usize) -> (usize, usize) {
        if self.mus[d] > T::zero() {
            (i + 1, i)
        } else {
            (i, i + 1)
        }
    }

    fn average(&self, x: &[T], i: usize, d: usize, g: usize) -> T {
        let c = &self.coef[self.lay.cell(i, d, g)];
        let (fo, fi) = self.faces_of(i, d);
        c.c_out * x[self.lay.psi(fo, d, g)] + c.c_in * x[self.lay.psi(fi, d, g)]
    }

    /// Residual, and optionally the Jacobian, at the packed state `x`.
    fn assemble(&self, x: &[T], jac: Option<&mut Triplets<T>>) -> Vec<T> {
        let lay = self.lay;
        let p = self.p;
        let quad = p.operator.quadrature();
        let w = quad.weights();
        let m = p.operator.matrix();
        let fw = p.frequencies.weights();
        let mut r = vec![T::zero(); lay.unknowns()];
        let mut jac = jac;
        let mut avg = vec![T::zero(); lay.d];
        let mut scat = vec![T::zero(); lay.d];
        for i in 0..lay.n {
            let t = x[lay.temp(i)];
            for g in 0..lay.g {
                let sa = p.sigma_a[i * lay.g + g];
                let ss = p.sigma_s[i * lay.g + g];
                let b = p.frequencies.planck(g, t);
                let db = p.frequencies.planck_dt(g, t);
                for d in 0..lay.d {
                    avg[d] = self.average(x, i, d, g);
                }
                if ss != T::zero() {
                    p.operator.apply_into(&avg, &mut scat);
                }
                for d in 0..lay.d {
                    let c = self.coef[lay.cell(i, d, g)];
                    let (fo, fi) = self.faces_of(i, d);
                    let row = lay.psi(fo, d, g);
                    let mut src = sa * b;
                    if ss != T::zero() {
                        src += ss * scat[d];
                    }
                    if p.relaxation > T::zero() {
                        src += p.relaxation * p.previous.unwrap()[lay.cell(i, d, g)];
                    }
                    r[row] = x[row] - c.atten * x[lay.psi(fi, d, g)] - c.gain * src;
                    if let Some(j) = jac.as_deref_mut() {
                        j.push(row, row, T::one());
                        j.push(row, lay.psi(fi, d, g), -c.atten);
                        j.push(row, lay.temp(i), -c.gain * sa * db);
                        if ss != T::zero() {
                            for e in 0..lay.d {
                                let ce = self.coef[lay.cell(i, e, g)];
                                let (eo, ei) = self.faces_of(i, e);
                                let k = -c.gain * ss * m[(d, e)];
                                j.push(row, lay.psi(eo, e, g), k * ce.c_out);
                                j.push(row, lay.psi(ei, e, g), k * ce.c_in);
                            }
                        }
                    }
                }
            }
            let row = lay.temp(i);
            match p.energy {
                EnergyLaw::Given(given) => {
                    r[row] = t - given[i];
                    if let Some(j) = jac.as_deref_mut() {
                        j.push(row, row, T::one());
                    }
                }
                EnergyLaw::Balance {
                    capacity,
                    scale,
                    previous,
                } => {
                    let mut exchange = T::zero();
                    let mut dexchange = T::zero();
                    for g in 0..lay.g {
                        let sa = p.sigma_a[i * lay.g + g];
                        if sa == T::zero() {
                            continue;
                        }
                        let mut e = T::zero();
                        for d in 0..lay.d {
                            e += w[d] * self.average(x, i, d, g);
                        }
                        let k = fw[g] * sa;
                        exchange += k * (e - T::four_pi() * p.frequencies.planck(g, t));
                        dexchange += k * T::four_pi() * p.frequencies.planck_dt(g, t);
                        if let Some(j) = jac.as_deref_mut() {
                            for d in 0..lay.d {
                                let c = self.coef[lay.cell(i, d, g)];
                                let (fo, fi) = self.faces_of(i, d);
                                j.push(row, lay.psi(fo, d, g), -scale * k * w[d] * c.c_out);
                                j.push(row, lay.psi(fi, d, g), -scale * k * w[d] * c.c_in);
                            }
                        }
                    }
                    r[row] = capacity * (t - previous[i]) - scale * exchange;
                    if let Some(j) = jac.as_deref_mut() {
                        j.push(row, row, capacity + scale * dexchange);
                    }
                }
            }
        }
        // Boundary rows: incoming directions at each face.
        for (f, face, incoming_positive) in [(0, p.left, true), (lay.n, p.right, false)] {
            for d in 0..lay.d {
                if (self.mus[d] > T::zero()) != incoming_positive {
                    continue;
                }
                for g in 0..lay.g {
                    let row = lay.psi(f, d, g);
                    match face {
                        FaceCondition::Inflow(v) => {
                            r[row] = x[row] - v[d * lay.g + g];
                            if let Some(j) = jac.as_deref_mut() {
                                j.push(row, row, T::one());
                            }
                        }
                        FaceCondition::Reflect => {
                            let col = lay.psi(f, quad.mirror(d), g);
                            r[row] = x[row] - x[col];
                            if let Some(j) = jac.as_deref_mut() {
                                j.push(row, row, T::one());
                                j.push(row, col, -T::one());
                            }
                        }
                    }
                }
            }
        }
        r
    }

    /// Residual norm with transport rows relative to the intensity scale and
    /// energy rows relative to the emission scale.
    fn residual_norm(&self, x: &[T], r: &[T]) -> T {
        let lay = self.lay;
        let psi_scale = (0..=lay.n)
            .flat_map(|f| (0..lay.d * lay.g).map(move |k| f * lay.block() + k))
            .fold(T::zero(), |m, k| m.max(x[k].abs()))
            .max(T::lit(1e-300));
        let mut out = T::zero();
        for i in 0..lay.n {
            let t = x[lay.temp(i)];
            let energy_scale = match self.p.energy {
                EnergyLaw::Given(_) => t.abs().max(T::one()),
                EnergyLaw::Balance { capacity, scale, .. } => {
                    let mut s = capacity * t.abs();
                    for g in 0..lay.g {
                        s += scale
                            * self.p.frequencies.weights()[g]
                            * self.p.sigma_a[i * lay.g + g]
                            * T::four_pi()
                            * (self.p.frequencies.planck(g, t) + psi_scale);
                    }
                    s.max(T::lit(1e-300))
                }
            };
            out = out.max(r[lay.temp(i)].abs() / energy_scale);
        }
        for f in 0..=lay.n {
            for k in 0..lay.d * lay.g {
                out = out.max(r[f * lay.block() + k].abs() / psi_scale);
            }
        }
        out
    }

    fn pack(&self, faces: Option<&[T]>, temperature: &[T]) -> Vec<T> {
        let lay = self.lay;
        let mut x = vec![T::zero(); lay.unknowns()];
        if let Some(fv) = faces {
            for f in 0..=lay.n {
                for k in 0..lay.d * lay.g {
                    x[f * lay.block() + k] = fv[f * lay.d * lay.g + k];
                }
            }
        }
        for i in 0..lay.n {
            x[lay.temp(i)] = temperature[i];
        }
        x
    }

    fn unpack(&self, x: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let lay = self.lay;
        let mut faces = Vec::with_capacity((lay.n + 1) * lay.d * lay.g);
        for f in 0..=lay.n {
            faces.extend_from_slice(&x[f * lay.block()..f * lay.block() + lay.d * lay.g]);
        }
        let mut avg = Vec::with_capacity(lay.n * lay.d * lay.g);
        for i in 0..lay.n {
            for d in 0..lay.d {
                for g in 0..lay.g {
                    avg.push(self.average(x, i, d, g));
                }
            }
        }
        let temps = (0..lay.n).map(|i| x[lay.temp(i)]).collect();
        (faces, avg, temps)
    }
}

/// Solves the coupled transport/energy system by damped Newton.
pub fn solve<T: Real>(
    problem: &TransportProblem<'_, T>,
    initial_temperature: &[T],
    initial_faces: Option<&[T]>,
    options: NewtonOptions,
) -> Result<TransportSolution<T>> {
    let prep = Prepared::new(problem)?;
    let lay = prep.lay;
    if initial_temperature.len() != lay.n {
        return Err(Error::Shape {
            expected: lay.n,
            got: initial_temperature.len(),
        });
    }
    if let Some(f) = initial_faces {
        if f.len() != (lay.n + 1) * lay.d * lay.g {
            return Err(Error::Shape {
                expected: (lay.n + 1) * lay.d * lay.g,
                got: f.len(),
            });
        }
    }
    let mut x = prep.pack(initial_faces, initial_temperature);
    if let EnergyLaw::Given(t) = problem.energy {
        for i in 0..lay.n {
            x[lay.temp(i)] = t[i];
        }
    }
    if (0..lay.n).any(|i| !(x[lay.temp(i)] > T::zero())) {
        return Err(Error::Domain("temperatures must be positive".into()));
    }
    let tol = T::lit(options.tolerance);
    let mut history = Vec::new();
    let mut r = prep.assemble(&x, None);
    let mut norm = prep.residual_norm(&x, &r);
    history.push(norm.as_f64());
    for it in 0..options.max_iterations {
        let mut jac = Triplets::new(lay.unknowns());
        prep.assemble(&x, Some(&mut jac));
        let mut band = jac.to_band();
        band.factor()?;
        let mut dx: Vec<T> = r.iter().map(|&v| -v).collect();
        band.solve_in_place(&mut dx);
        // Keep temperatures positive: never remove more than half of any T.
        let mut lambda = T::one();
        for i in 0..lay.n {
            let (t, dt) = (x[lay.temp(i)], dx[lay.temp(i)]);
            if dt < T::zero() && t + dt < t * T::lit(0.5) {
                lambda = lambda.min(T::lit(0.5) * t / (-dt));
            }
        }
        let mut accepted = false;
        let mut trial = x.clone();
        for _ in 0..30 {
            for k in 0..x.len() {
                trial[k] = x[k] + lambda * dx[k];
            }
            let rt = prep.assemble(&trial, None);
            let nt = prep.residual_norm(&trial, &rt);
            if nt.is_finite() && (nt < norm || nt <= tol) {
                x.clone_from(&trial);
                r = rt;
                norm = nt;
                accepted = true;
                break;
            }
            lambda *= T::lit(0.5);
        }
        history.push(norm.as_f64());
        let step = (0..lay.n).fold(T::zero(), |m, i| {
            m.max((lambda * dx[lay.temp(i)]).abs() / x[lay.temp(i)])
        });
        if norm <= tol && (step <= T::lit(1e-10) || norm <= tol * T::lit(1e-3)) {
            let (faces, averages, temperature) = prep.unpack(&x);
            return Ok(TransportSolution {
                faces,
                averages,
                temperature,
                iterations: it + 1,
                residual: norm.as_f64(),
            });
        }
        if !accepted {
            // Stagnation at roundoff: accept if already within tolerance.
            if norm <= tol {
                let (faces, averages, temperature) = prep.unpack(&x);
                return Ok(TransportSolution {
                    faces,
                    averages,
                    temperature,
                    iterations: it + 1,
                    residual: norm.as_f64(),
                });
            }
            return Err(Error::convergence("transport Newton (line search)", it + 1, history));
        }
    }
    Err(Error::convergence(
        "transport Newton",
        options.max_iterations,
        history,
    ))
}

/// One source-iteration sweep with frozen temperature and scattering source
/// lagged from `previous_averages`; reflecting faces read the outgoing
/// intensities of `previous_faces`.
pub fn sweep<T: Real>(
    problem: &TransportProblem<'_, T>,
    temperature: &[T],
    previous_averages: &[T],
    previous_faces: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let prep = Prepared::new(problem)?;
    let lay = prep.lay;
    let p = problem;
    let ndg = lay.d * lay.g;
    if temperature.len() != lay.n
        || previous_averages.len() != lay.n * ndg
        || previous_faces.len() != (lay.n + 1) * ndg
    {
        return Err(Error::Shape {
            expected: lay.n * ndg,
            got: previous_averages.len(),
        });
    }
    let quad = p.operator.quadrature();
    let mut faces = vec![T::zero(); (lay.n + 1) * ndg];
    let mut avg = vec![T::zero(); lay.n * ndg];
    let mut scat_in = vec![T::zero(); lay.d];
    let mut scat = vec![T::zero(); lay.n * ndg];
    for i in 0..lay.n {
        for g in 0..lay.g {
            for d in 0..lay.d {
                scat_in[d] = previous_averages[lay.cell(i, d, g)];
            }
            let mut out = vec![T::zero(); lay.d];
            p.operator.apply_into(&scat_in, &mut out);
            for d in 0..lay.d {
                scat[lay.cell(i, d, g)] = out[d];
            }
        }
    }
    for d in 0..lay.d {
        let forward = prep.mus[d] > T::zero();
        for g in 0..lay.g {
            let (start, face) = if forward { (0, p.left) } else { (lay.n, p.right) };
            let inflow = match face {
                FaceCondition::Inflow(v) => v[d * lay.g + g],
                FaceCondition::Reflect => previous_faces[start * ndg + quad.mirror(d) * lay.g + g],
            };
            faces[start * ndg + d * lay.g + g] = inflow;
            let mut psi = inflow;
            for step in 0..lay.n {
                let i = if forward { step } else { lay.n - 1 - step };
                let k = lay.cell(i, d, g);
                let c = prep.coef[k];
                let b = p.frequencies.planck(g, temperature[i]);
                let mut src = p.sigma_a[i * lay.g + g] * b + p.sigma_s[i * lay.g + g] * scat[k];
                if p.relaxation > T::zero() {
                    src += p.relaxation * p.previous.unwrap()[k];
                }
                let out = c.atten * psi + c.gain * src;
                avg[k] = c.c_out * out + c.c_in * psi;
                let fo = if forward { i + 1 } else { i };
                faces[fo * ndg + d * lay.g + g] = out;
                psi = out;
            }
        }
    }
    Ok((faces, avg))
}

/// Net radiative flux `Σ_g w_g Σ_d w_d μ_d ψ(f, d, g)` through every face.
pub fn face_fluxes<T: Real>(
    faces: &[T],
    operator: &ScatteringOperator<T>,
    frequencies: &FrequencyGrid<T>,
) -> Vec<T> {
    let quad = operator.quadrature();
    let (nd, ng) = (quad.len(), frequencies.len());
    let w = quad.weights();
    let fw = frequencies.weights();
    faces
        .chunks(nd * ng)
        .map(|block| {
            let mut s = T::zero();
            for d in 0..nd {
                for g in 0..ng {
                    s += fw[g] * w[d] * quad.mu(d) * block[d * ng + g];
                }
            }
            s
        })
        .collect()
}

/// `max |x − y| / max |y|` helper for solver diagnostics.
pub(crate) fn relative_change<T: Real>(x: &[T], y: &[T]) -> T {
    let diff: Vec<T> = x.iter().zip(y).map(|(a, b)| *a - *b).collect();
    max_abs(&diff) / max_abs(y).max(T::lit(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_weights_are_consistent_across_the_series_switch() {
        for &tau in &[0.0, 1e-6, 9.9e-5, 1.01e-4, 1e-2, 1.0, 50.0] {
            let c = cell_coefficients::<f64>(tau, 1.0, 1.0);
            assert!((c.c_out + c.c_in - 1.0).abs() < 1e-15);
            // Exact average of the exponential profile with unit source and ψ_in = 0.
            if tau > 0.0 {
                let out = c.gain;
                // The closed form cancels catastrophically for small τ, so use its series there.
                let exact = if tau < 0.1 {
                    let (mut term, mut sum) = (0.5, 0.0);
                    for k in 0..20 {
                        sum += term;
                        term *= -tau / (k as f64 + 3.0);
                    }
                    sum
                } else {
                    1.0 / tau - (1.0 - (-tau).exp()) / (tau * tau)
                };
                assert!((c.c_out * out - exact).abs() < 1e-12, "tau {tau}");
            }
        }
    }
}
