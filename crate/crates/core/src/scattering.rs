//! Rotation-invariant scattering kernels and their discretized operator `H`.
//!
//! The discrete operator acts on nodal values as `(Hφ)_i = Σ_j M_ij φ_j` and is
//! kept stochasticity-exact (`M·1 = 1`) and self-adjoint in the quadrature
//! inner product (`w_i M_ij = w_j M_ji`), which gives it the spectral
//! structure of the continuous operator: eigenvalue 1 on constants and a
//! gap below it.

use crate::error::{Error, Result};
use crate::grids::{gauss_legendre, legendre, legendre_all, AngularQuadrature, QuadratureMode};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use std::collections::VecDeque;
use std::sync::OnceLock;

pub const DEFAULT_L_MAX: usize = 16;

/// Phase function `p(c)` of the cosine `c = n·n′`, normalized by `2π∫p dc = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseFunction<T> {
    Isotropic,
    HenyeyGreenstein { g: T },
    CutoffForward { c0: T },
    /// Piecewise-linear density through `(cosines[k], values[k])`.
    Tabulated { cosines: Vec<T>, values: Vec<T> },
}

impl<T: Real> PhaseFunction<T> {
    pub fn henyey_greenstein(g: T) -> Result<Self> {
        if !(g.abs() < T::one()) {
            return Err(Error::InvalidRange(format!(
                "Henyey-Greenstein asymmetry must satisfy |g| < 1 (got {})",
                g.as_f64()
            )));
        }
        Ok(Self::HenyeyGreenstein { g })
    }

    pub fn cutoff_forward(c0: T) -> Result<Self> {
        if !(c0 > -T::one() && c0 < T::one()) {
            return Err(Error::InvalidRange(format!(
                "cutoff cosine must lie in (-1, 1) (got {})",
                c0.as_f64()
            )));
        }
        Ok(Self::CutoffForward { c0 })
    }

    /// Tabulated density rescaled so that its trapezoid integral is normalized.
    pub fn tabulated(cosines: Vec<T>, values: Vec<T>) -> Result<Self> {
        let raw = Self::tabulated_raw(cosines, values)?;
        let norm = raw.normalization();
        match raw {
            Self::Tabulated { cosines, values } => Ok(Self::Tabulated {
                cosines,
                values: values.into_iter().map(|v| v / norm).collect(),
            }),
            _ => unreachable!(),
        }
    }

    /// Tabulated density taken as given (normalization checked at discretization).
    pub fn tabulated_raw(cosines: Vec<T>, values: Vec<T>) -> Result<Self> {
        let n = cosines.len();
        if n < 2 || values.len() != n {
            return Err(Error::InvalidRange(
                "tabulated kernel needs at least two (cosine, value) pairs".into(),
            ));
        }
        if cosines[0] != -T::one() || cosines[n - 1] != T::one() {
            return Err(Error::InvalidRange(
                "tabulated kernel must span the cosine interval [-1, 1]".into(),
            ));
        }
        if cosines.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidRange(
                "tabulated kernel needs increasing cosines and nonnegative values".into(),
            ));
        }
        let kernel = Self::Tabulated { cosines, values };
        if !(kernel.normalization() > T::zero()) {
            return Err(Error::InvalidRange("tabulated kernel integrates to zero".into()));
        }
        Ok(kernel)
    }

    pub fn eval(&self, c: T) -> T {
        let inv4pi = T::one() / T::four_pi();
        match self {
            Self::Isotropic => inv4pi,
            Self::HenyeyGreenstein { g } => {
                let g = *g;
                let den = T::one() + g * g - T::lit(2.0) * g * c;
                inv4pi * (T::one() - g * g) / (den * den.sqrt())
            }
            Self::CutoffForward { c0 } => {
                if c > *c0 {
                    T::one() / (T::two_pi() * (T::one() - *c0))
                } else {
                    T::zero()
                }
            }
            Self::Tabulated { cosines, values } => {
                let c = c.max(-T::one()).min(T::one());
                let k = cosines.partition_point(|&x| x <= c).clamp(1, cosines.len() - 1);
                let (x0, x1) = (cosines[k - 1], cosines[k]);
                let f = (c - x0) / (x1 - x0);
                values[k - 1] * (T::one() - f) + values[k] * f
            }
        }
    }

    /// `2π ∫_{-1}^{1} p(c) dc` (trapezoid for tabulated densities, exact otherwise).
    pub fn normalization(&self) -> T {
        match self {
            Self::Tabulated { cosines, values } => {
                let mut s = T::zero();
                for k in 1..cosines.len() {
                    s += (cosines[k] - cosines[k - 1]) * (values[k] + values[k - 1]) * T::lit(0.5);
                }
                s * T::two_pi()
            }
            _ => T::one(),
        }
    }

    /// Legendre moments `k_l = 2π ∫ p(c) P_l(c) dc` for `l = 0..=lmax`.
    pub fn moments(&self, lmax: usize) -> Vec<T> {
        match self {
            Self::Isotropic => (0..=lmax)
                .map(|l| if l == 0 { T::one() } else { T::zero() })
                .collect(),
            Self::HenyeyGreenstein { g } => (0..=lmax).map(|l| g.powi(l as i32)).collect(),
            Self::CutoffForward { c0 } => {
                let p = legendre_all(lmax + 1, *c0);
                (0..=lmax)
                    .map(|l| {
                        if l == 0 {
                            T::one()
                        } else {
                            (p[l - 1] - p[l + 1]) / (T::of(2 * l + 1) * (T::one() - *c0))
                        }
                    })
                    .collect()
            }
            Self::Tabulated { cosines, values } => {
                let (x, w) = gauss_legendre::<T>((lmax + 4) / 2 + 2);
                let mut k = vec![T::zero(); lmax + 1];
                for s in 1..cosines.len() {
                    let (a, b) = (cosines[s - 1], cosines[s]);
                    let half = (b - a) * T::lit(0.5);
                    for (&xq, &wq) in x.iter().zip(&w) {
                        let c = a + half * (xq + T::one());
                        let f = (c - a) / (b - a);
                        let pv = values[s - 1] * (T::one() - f) + values[s] * f;
                        let pl = legendre_all(lmax, c);
                        for l in 0..=lmax {
                            k[l] += wq * half * pv * pl[l] * T::two_pi();
                        }
                    }
                }
                k
            }
        }
    }

    /// Largest kernel value between two slab directions with polar cosines
    /// `mu_a`, `mu_b` over all relative azimuths (attained at zero azimuth).
    fn slab_link(&self, mu_a: T, mu_b: T) -> T {
        let s = |m: T| (T::one() - m * m).max(T::zero()).sqrt();
        let c = mu_a * mu_b + s(mu_a) * s(mu_b);
        // Also probe a hair inside the interval: c may sit exactly on a cutoff.
        self.eval(c).max(self.eval(c.min(T::one())))
    }
}

/// Bookkeeping from the construction of a [`ScatteringOperator`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OperatorDiagnostics {
    /// `max_i |Σ_j M_ij − 1|` before renormalization.
    pub row_defect_before: f64,
    /// `max_i |Σ_j M_ij − 1|` after renormalization.
    pub row_defect_after: f64,
    /// Smallest entry of the action matrix.
    pub min_entry: f64,
    /// Sweeps of the symmetric balancing (0 when already stochastic).
    pub balancing_sweeps: usize,
    /// Legendre truncation actually used (slab mode).
    pub effective_l_max: usize,
}

/// Spectral data of the discrete operator.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SpectralDiagnostics {
    pub leading: f64,
    /// Largest-magnitude eigenvalue other than the leading one (signed).
    pub second: f64,
    pub gap: f64,
    /// `max_i |v_i − v̄| / |v̄|` of the leading eigenvector.
    pub flatness: f64,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScatteringOperator<T: Real> {
    quad: AngularQuadrature<T>,
    kernel: Option<PhaseFunction<T>>,
    matrix: DMatrix<T>,
    self_adjoint: bool,
    diagnostics: OperatorDiagnostics,
    spectral: OnceLock<SpectralDiagnostics>,
    deflection_lu: OnceLock<nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<T: Real> ScatteringOperator<T> {
    /// Discretizes `H` on the quadrature: Legendre-moment kernel in slab mode,
    /// nodal kernel values in full-sphere mode.
    pub fn new(kernel: &PhaseFunction<T>, quad: &AngularQuadrature<T>, l_max: usize) -> Result<Self> {
        let norm = kernel.normalization();
        if (norm - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::KernelNormalization {
                integral: norm.as_f64(),
            });
        }
        let n = quad.len();
        let w = quad.weights();
        let (kernel_values, effective_l_max) = match quad.mode() {
            QuadratureMode::SlabPolar => {
                if l_max < 1 {
                    return Err(Error::InvalidRange("l_max must be at least 1 in slab mode".into()));
                }
                // Beyond order−1 the discrete Legendre modes stop being orthogonal.
                let lm = l_max.min(quad.order() - 1);
                let k = kernel.moments(lm);
                let p: Vec<Vec<T>> = (0..n).map(|i| legendre_all(lm, quad.mu(i))).collect();
                let mut h = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut s = T::zero();
                        for l in 0..=lm {
                            s += T::of(2 * l + 1) * k[l] * p[i][l] * p[j][l];
                        }
                        // Azimuthal average h(μ,μ′) = Σ ((2l+1)/2) k_l P_l P_l′ per unit μ′,
                        // converted to per-unit-solid-angle (weights carry 2π).
                        h[(i, j)] = s / T::four_pi();
                    }
                }
                (h, lm)
            }
            QuadratureMode::FullSphere => {
                let d = quad.directions();
                let mut h = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let c = d[i][0] * d[j][0] + d[i][1] * d[j][1] + d[i][2] * d[j][2];
                        h[(i, j)] = kernel.eval(c.max(-T::one()).min(T::one()));
                    }
                }
                (h, 0)
            }
        };
        let mut op = Self::from_symmetric_kernel(quad, kernel_values)?;
        op.kernel = Some(kernel.clone());
        op.diagnostics.effective_l_max = effective_l_max;
        let _ = w;
        Ok(op)
    }

    /// Operator from symmetric kernel values `K_ij` on the nodes; the action is
    /// `M_ij = d_i K_ij d_j w_j` with the balancing factors `d` chosen so that
    /// every row sums to one.
    pub fn from_symmetric_kernel(quad: &AngularQuadrature<T>, kernel: DMatrix<T>) -> Result<Self> {
        let n = quad.len();
        if kernel.nrows() != n || kernel.ncols() != n {
            return Err(Error::Shape {
                expected: n * n,
                got: kernel.len(),
            });
        }
        let w = quad.weights();
        let rows = |d: &[T]| -> Vec<T> {
            (0..n)
                .map(|i| {
                    let mut s = T::zero();
                    for j in 0..n {
                        s += kernel[(i, j)] * w[j] * d[j];
                    }
                    s * d[i]
                })
                .collect()
        };
        let mut d = vec![T::one(); n];
        let defect = |r: &[T]| r.iter().fold(T::zero(), |m, &v| m.max((v - T::one()).abs()));
        let before = defect(&rows(&d));
        let target = T::eps() * T::lit(16.0);
        let mut sweeps = 0;
        if before > target {
            // Symmetric Sinkhorn–Knopp: d ← sqrt(d / (K W d)).
            let mut r = rows(&d);
            while defect(&r) > target {
                if sweeps >= 100_000 {
                    return Err(Error::convergence(
                        "kernel balancing",
                        sweeps,
                        vec![defect(&r).as_f64()],
                    ));
                }
                for i in 0..n {
                    if !(r[i] > T::zero()) {
                        return Err(Error::Precondition(format!(
                            "kernel row {i} has no positive mass on the quadrature"
                        )));
                    }
                    d[i] /= r[i].sqrt();
                }
                r = rows(&d);
                sweeps += 1;
            }
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = d[i] * kernel[(i, j)] * d[j] * w[j];
            }
        }
        // Exact stochasticity up to roundoff of the final rescale.
        for i in 0..n {
            let s: T = (0..n).fold(T::zero(), |s, j| s + m[(i, j)]);
            for j in 0..n {
                m[(i, j)] /= s;
            }
        }
        let after = (0..n)
            .map(|i| ((0..n).fold(T::zero(), |s, j| s + m[(i, j)]) - T::one()).abs())
            .fold(T::zero(), |a, b| a.max(b));
        let min_entry = m.iter().fold(T::max_value().unwrap_or(T::one()), |a, &b| a.min(b));
        Ok(Self {
            quad: quad.clone(),
            kernel: None,
            matrix: m,
            self_adjoint: true,
            diagnostics: OperatorDiagnostics {
                row_defect_before: before.as_f64(),
                row_defect_after: after.as_f64(),
                min_entry: min_entry.as_f64(),
                balancing_sweeps: sweeps,
                effective_l_max: 0,
            },
            spectral: OnceLock::new(),
            deflection_lu: OnceLock::new(),
        })
    }

    /// Operator `(Hφ)(n) = Σ_j K(n, n_j) φ_j w_j` for a kernel that need not be
    /// symmetric or rotation invariant; no renormalization is applied. Used for
    /// fixtures that violate the hypotheses of the spectral theory.
    pub fn from_kernel_fn(
        quad: &AngularQuadrature<T>,
        kernel: impl Fn(&[T; 3], &[T; 3]) -> T,
    ) -> Self {
        let n = quad.len();
        let d = quad.directions();
        let w = quad.weights();
        let m = DMatrix::from_fn(n, n, |i, j| kernel(&d[i], &d[j]) * w[j]);
        let defect = (0..n)
            .map(|i| ((0..n).fold(T::zero(), |s, j| s + m[(i, j)]) - T::one()).abs())
            .fold(T::zero(), |a, b| a.max(b))
            .as_f64();
        let min_entry = m.iter().fold(T::max_value().unwrap_or(T::one()), |a, &b| a.min(b));
        Self {
            quad: quad.clone(),
            kernel: None,
            matrix: m,
            self_adjoint: false,
            diagnostics: OperatorDiagnostics {
                row_defect_before: defect,
                row_defect_after: defect,
                min_entry: min_entry.as_f64(),
                balancing_sweeps: 0,
                effective_l_max: 0,
            },
            spectral: OnceLock::new(),
            deflection_lu: OnceLock::new(),
        }
    }

    pub fn quadrature(&self) -> &AngularQuadrature<T> {
        &self.quad
    }

    pub fn kernel(&self) -> Option<&PhaseFunction<T>> {
        self.kernel.as_ref()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn diagnostics(&self) -> OperatorDiagnostics {
        self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.quad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad.is_empty()
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// `H[φ]` on nodal values.
    pub fn apply(&self, field: &[T]) -> Result<Vec<T>> {
        self.check_len(field.len())?;
        let mut out = vec![T::zero(); field.len()];
        self.apply_into(field, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, field: &[T], out: &mut [T]) {
        let n = self.len();
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..n {
                s += self.matrix[(i, j)] * field[j];
            }
            out[i] = s;
        }
    }

    /// Eigen-decomposition summary; symmetric solver on `W^{1/2} M W^{-1/2}`
    /// for self-adjoint operators, general eigenvalues otherwise.
    pub fn spectral_diagnostics(&self) -> SpectralDiagnostics {
        self.spectral.get_or_init(|| self.compute_spectrum()).clone()
    }

    fn compute_spectrum(&self) -> SpectralDiagnostics {
        let n = self.len();
        let w = self.quad.weights();
        let (mut eig, leading_vec): (Vec<f64>, Vec<f64>) = if self.self_adjoint {
            let sw: Vec<T> = w.iter().map(|x| x.sqrt()).collect();
            let mut s = DMatrix::from_fn(n, n, |i, j| sw[i] * self.matrix[(i, j)] / sw[j]);
            s = (&s + s.transpose()) * T::lit(0.5);
            let se = SymmetricEigen::new(s);
            let imax = (0..n)
                .max_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap())
                .unwrap_or(0);
            let v: Vec<f64> = (0..n)
                .map(|i| (se.eigenvectors[(i, imax)] / sw[i]).as_f64())
                .collect();
            (se.eigenvalues.iter().map(|x| x.as_f64()).collect(), v)
        } else {
            // Bounded Schur sweeps: the unbounded variant can cycle on defective matrices.
            let mut vals: Vec<f64> =
                nalgebra::linalg::Schur::try_new(self.matrix.clone(), T::eps(), 10_000)
                    .map(|s| s.complex_eigenvalues().iter().map(|c| c.re.as_f64()).collect())
                    .unwrap_or_default();
            // Power iteration: the matrix is nonnegative, so the Perron vector dominates.
            let mut v = DVector::from_element(n, T::one());
            for _ in 0..2000 {
                let next = &self.matrix * &v;
                let norm = next.norm();
                if norm == T::zero() {
                    break;
                }
                v = next / norm;
            }
            if vals.is_empty() {
                vals.push((&self.matrix * &v).norm().as_f64());
            }
            (vals, v.iter().map(|x| x.as_f64()).collect())
        };
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let leading = eig.first().copied().unwrap_or(0.0);
        let second = eig
            .iter()
            .skip(1)
            .copied()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap_or(0.0);
        let mean = leading_vec.iter().sum::<f64>() / n as f64;
        let flatness = leading_vec
            .iter()
            .fold(0.0f64, |m, &v| m.max((v - mean).abs()))
            / mean.abs();
        SpectralDiagnostics {
            leading,
            second,
            gap: 1.0 - second.abs(),
            flatness,
            eigenvalues: eig,
        }
    }

    /// Solves `(Id − H)φ = rhs` for mean-zero `rhs`, returning the mean-zero solution.
    pub fn solve_deflection(&self, rhs: &[T]) -> Result<Vec<T>> {
        self.check_len(rhs.len())?;
        let scale = self
            .quad
            .weights()
            .iter()
            .zip(rhs)
            .fold(T::one(), |s, (&w, &r)| s + w * r.abs());
        let mean = self.quad.integrate(rhs);
        if mean.abs() > T::lit(1e-8) * scale {
            return Err(Error::RangeCondition {
                mean: mean.as_f64(),
            });
        }
        let gap = self.spectral_diagnostics().gap;
        if !(gap > 1e-8) {
            return Err(Error::Conditioning { gap });
        }
        let lu = self.deflection_lu.get_or_init(|| {
            // Id − M + 1 ŵᵀ removes the constant null direction without changing
            // the solution on mean-zero data.
            let n = self.len();
            let w = self.quad.weights();
            let total = self.quad.integrate(&vec![T::one(); n]);
            DMatrix::from_fn(n, n, |i, j| {
                let id = if i == j { T::one() } else { T::zero() };
                id - self.matrix[(i, j)] + w[j] / total
            })
            .lu()
        });
        let x = lu
            .solve(&DVector::from_column_slice(rhs))
            .ok_or(Error::Singular(0))?;
        let mut phi: Vec<T> = x.iter().copied().collect();
        let m = self.quad.mean(&phi);
        for v in &mut phi {
            *v -= m;
        }
        Ok(phi)
    }

    /// `D = Σ_i w_i n_i ⊗ (Id − H)⁻¹(n·e_j)`. In slab mode only the axial
    /// component is defined and the isotropic tensor `D_xx·Id` is returned.
    pub fn diffusion_tensor(&self) -> Result<Matrix3<T>> {
        let d = self.quad.directions();
        let w = self.quad.weights();
        let component = |a: usize, phi: &[T]| {
            d.iter()
                .zip(w)
                .zip(phi)
                .fold(T::zero(), |s, ((dir, &wi), &p)| s + wi * dir[a] * p)
        };
        match self.quad.mode() {
            QuadratureMode::SlabPolar => {
                let mu: Vec<T> = self.quad.mus();
                let phi = self.solve_deflection(&mu)?;
                Ok(Matrix3::identity() * component(0, &phi))
            }
            QuadratureMode::FullSphere => {
                let mut out = Matrix3::zeros();
                for j in 0..3 {
                    let rhs: Vec<T> = d.iter().map(|dir| dir[j]).collect();
                    let phi = self.solve_deflection(&rhs)?;
                    for a in 0..3 {
                        out[(a, j)] = component(a, &phi);
                    }
                }
                Ok(out)
            }
        }
    }

    /// `κ_d = ⨍ μ (Id − H)⁻¹(μ) dn`, the axial diffusivity of the thermalization layer.
    pub fn kappa_d(&self) -> Result<T> {
        Ok(self.diffusion_tensor()?[(0, 0)] / T::four_pi())
    }

    /// Shortest chain of nodes from `i` to `j` with strictly positive kernel links.
    pub fn positivity_chain(&self, i: usize, j: usize) -> Result<Vec<usize>> {
        let n = self.len();
        if i >= n || j >= n {
            return Err(Error::Shape { expected: n, got: i.max(j) + 1 });
        }
        let link = |a: usize, b: usize| -> bool {
            match (&self.kernel, self.quad.mode()) {
                (Some(k), QuadratureMode::SlabPolar) => {
                    k.slab_link(self.quad.mu(a), self.quad.mu(b)) > T::zero()
                }
                (Some(k), QuadratureMode::FullSphere) => {
                    let (x, y) = (&self.quad.directions()[a], &self.quad.directions()[b]);
                    let c = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
                    k.eval(c.max(-T::one()).min(T::one())) > T::zero()
                }
                (None, _) => self.matrix[(a, b)] > T::zero(),
            }
        };
        let mut prev = vec![usize::MAX; n];
        let mut queue = VecDeque::from([i]);
        prev[i] = i;
        while let Some(a) = queue.pop_front() {
            if a == j {
                let mut chain = vec![j];
                let mut c = j;
                while c != i {
                    c = prev[c];
                    chain.push(c);
                }
                chain.reverse();
                return Ok(chain);
            }
            for b in 0..n {
                if prev[b] == usize::MAX && link(a, b) {
                    prev[b] = a;
                    queue.push_back(b);
                }
            }
        }
        Err(Error::Connectivity { from: i, to: j })
    }

    /// `A = θH` for `θ = α_s/(α_a+α_s)`.
    pub fn combined(&self, theta: T) -> Result<CombinedOperator<'_, T>> {
        if !(theta >= T::zero() && theta < T::one()) {
            return Err(Error::Contraction {
                theta: theta.as_f64(),
            });
        }
        Ok(CombinedOperator { theta, op: self })
    }
}

/// `A = θH` with `θ < 1`; `(Id − A)⁻¹` exists by contraction.
#[derive(Debug, Clone, Copy)]
pub struct CombinedOperator<'a, T: Real> {
    theta: T,
    op: &'a ScatteringOperator<T>,
}

impl<'a, T: Real> CombinedOperator<'a, T> {
    pub fn theta(&self) -> T {
        self.theta
    }

    /// Fixed point of `φ = θH[φ] + source` by Picard iteration (relative
    /// residual 1e-12).
    pub fn solve(&self, source: &[T]) -> Result<Vec<T>> {
        self.op.check_len(source.len())?;
        let n = source.len();
        let mut phi = source.to_vec();
        let mut tmp = vec![T::zero(); n];
        let tol = T::lit(1e-12);
        let mut history = Vec::new();
        let max_iter = 1_000_000;
        for _ in 0..max_iter {
            self.op.apply_into(&phi, &mut tmp);
            let mut diff = T::zero();
            let mut size = T::zero();
            for i in 0..n {
                let next = source[i] + self.theta * tmp[i];
                diff = diff.max((next - phi[i]).abs());
                size = size.max(next.abs());
                phi[i] = next;
            }
            if diff <= tol * size.max(T::eps()) {
                return Ok(phi);
            }
            if history.len() < 64 {
                history.push(diff.as_f64());
            }
        }
        Err(Error::convergence("combined-operator contraction", max_iter, history))
    }
}

/// Legendre polynomial re-exported for callers building band-limited fields.
pub fn legendre_p<T: Real>(l: usize, x: T) -> T {
    legendre(l, x)
}
