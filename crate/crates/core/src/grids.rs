//! Angular quadratures, frequency grids and one-dimensional meshes.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre<T: Real>(l: usize, x: T) -> T {
    let (mut p0, mut p1) = (T::one(), x);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let kf = T::of(k);
        let p2 = ((kf + kf + T::one()) * x * p1 - kf * p0) / (kf + T::one());
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `P_0(x), …, P_lmax(x)`.
pub fn legendre_all<T: Real>(lmax: usize, x: T) -> Vec<T> {
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(T::one());
    if lmax >= 1 {
        out.push(x);
    }
    for k in 1..lmax {
        let kf = T::of(k);
        let p = ((kf + kf + T::one()) * x * out[k] - kf * out[k - 1]) / (kf + T::one());
        out.push(p);
    }
    out
}

/// Gauss–Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(m: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); m];
    let mut weights = vec![T::zero(); m];
    let mf = T::of(m);
    for i in 0..m.div_ceil(2) {
        // Newton from the Tricomi-type initial guess, in f64 then polished in T.
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut x = T::lit(guess);
        for _ in 0..100 {
            let p = legendre(m, x);
            let pm1 = legendre(m - 1, x);
            let dp = mf * (x * p - pm1) / (x * x - T::one());
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= T::eps() * T::lit(4.0) {
                break;
            }
        }
        let p = legendre(m, x);
        let pm1 = legendre(m - 1, x);
        let dp = mf * (x * p - pm1) / (x * x - T::one());
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[m - 1 - i] = x;
        nodes[i] = -x;
        weights[m - 1 - i] = w;
        weights[i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = T::zero();
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    FullSphere,
    SlabPolar,
}

/// Discrete ordinates on the unit sphere; weights carry solid angle and sum to 4π.
///
/// Slab mode stores one node per polar cosine μ with the 2π azimuthal factor
/// folded into the weight; its representative direction is `(μ, √(1−μ²), 0)`.
/// Full-sphere nodes are ordered μ-major: index `i * n_azimuth + a`.
#[derive(Debug, Clone)]
pub struct AngularQuadrature<T> {
    mode: QuadratureMode,
    order: usize,
    n_azimuth: usize,
    directions: Vec<[T; 3]>,
    weights: Vec<T>,
}

impl<T: Real> AngularQuadrature<T> {
    pub fn new(mode: QuadratureMode, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidOrder(order));
        }
        let (mu, wmu) = gauss_legendre::<T>(order);
        let two_pi = T::two_pi();
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        let n_azimuth = match mode {
            QuadratureMode::SlabPolar => {
                for (&m, &w) in mu.iter().zip(&wmu) {
                    directions.push([m, (T::one() - m * m).max(T::zero()).sqrt(), T::zero()]);
                    weights.push(w * two_pi);
                }
                1
            }
            QuadratureMode::FullSphere => {
                let na = 2 * order;
                let dphi = two_pi / T::of(na);
                for (&m, &w) in mu.iter().zip(&wmu) {
                    let s = (T::one() - m * m).max(T::zero()).sqrt();
                    for a in 0..na {
                        let phi = dphi * (T::of(a) + T::lit(0.5));
                        directions.push([m, s * phi.cos(), s * phi.sin()]);
                        weights.push(w * dphi);
                    }
                }
                na
            }
        };
        Ok(Self {
            mode,
            order,
            n_azimuth,
            directions,
            weights,
        })
    }

    pub fn slab(order: usize) -> Result<Self> {
        Self::new(QuadratureMode::SlabPolar, order)
    }

    pub fn full_sphere(order: usize) -> Result<Self> {
        Self::new(QuadratureMode::FullSphere, order)
    }

    pub fn mode(&self) -> QuadratureMode {
        self.mode
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn directions(&self) -> &[[T; 3]] {
        &self.directions
    }

    /// Cosine with the slab axis `e₁`.
    #[inline]
    pub fn mu(&self, i: usize) -> T {
        self.directions[i][0]
    }

    pub fn mus(&self) -> Vec<T> {
        self.directions.iter().map(|d| d[0]).collect()
    }

    /// Index of the node mirrored through the plane `x = 0` (μ → −μ).
    pub fn mirror(&self, i: usize) -> usize {
        let (im, a) = (i / self.n_azimuth, i % self.n_azimuth);
        (self.order - 1 - im) * self.n_azimuth + a
    }

    /// `Σ w_i f_i`.
    pub fn integrate(&self, f: &[T]) -> T {
        self.weights
            .iter()
            .zip(f)
            .fold(T::zero(), |s, (&w, &v)| s + w * v)
    }

    /// Angular mean `(1/4π) Σ w_i f_i`.
    pub fn mean(&self, f: &[T]) -> T {
        self.integrate(f) / T::four_pi()
    }

    /// Polar-angle index of node `i` (identity in slab mode).
    pub fn polar_index(&self, i: usize) -> usize {
        i / self.n_azimuth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyMode {
    Grey,
    Multigroup,
}

/// Frequency nodes with quadrature weights for `∫₀^∞ dν`.
///
/// Multigroup nodes are the geometric centres of `count` log-spaced bins on
/// `[ν_min, ν_max]` with midpoint weights in `ln ν`; the first weight also
/// carries the Rayleigh–Jeans tail `∫₀^{ν_min}`. In grey mode the single
/// node stands for the frequency-integrated field, so its "Planck value" is
/// `σT⁴` rather than a spectral intensity.
#[derive(Debug, Clone)]
pub struct FrequencyGrid<T> {
    mode: FrequencyMode,
    nodes: Vec<T>,
    weights: Vec<T>,
    bounds: (T, T),
    tail_estimate: T,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn grey() -> Self {
        Self {
            mode: FrequencyMode::Grey,
            nodes: vec![T::one()],
            weights: vec![T::one()],
            bounds: (T::zero(), T::zero()),
            tail_estimate: T::zero(),
        }
    }

    pub fn multigroup(nu_min: T, nu_max: T, count: usize) -> Result<Self> {
        if !(nu_min > T::zero()) || !(nu_max > nu_min) || count == 0 {
            return Err(Error::InvalidRange(format!(
                "need 0 < nu_min < nu_max and count >= 1 (got {}, {}, {count})",
                nu_min.as_f64(),
                nu_max.as_f64()
            )));
        }
        let h = (nu_max / nu_min).ln() / T::of(count);
        let half = T::lit(0.5);
        let nodes: Vec<T> = (0..count)
            .map(|k| nu_min * (h * (T::of(k) + half)).exp())
            .collect();
        let mut weights: Vec<T> = nodes.iter().map(|&nu| h * nu).collect();
        let ratio = nu_min / nodes[0];
        weights[0] += nu_min * ratio * ratio / T::lit(3.0);
        // Residual tail error at T = 1: fourth-order Rayleigh–Jeans remainder
        // below ν_min plus the Wien tail above ν_max.
        let low = nu_min.powi(4) / T::lit(8.0);
        let b = nu_max;
        let high = (b * b * b + T::lit(3.0) * b * b + T::lit(6.0) * b + T::lit(6.0)) * (-b).exp();
        let tail_estimate = (low + high) / crate::planck::stefan_sigma::<T>();
        Ok(Self {
            mode: FrequencyMode::Multigroup,
            nodes,
            weights,
            bounds: (nu_min, nu_max),
            tail_estimate,
        })
    }

    pub fn new(mode: FrequencyMode, nu_min: T, nu_max: T, count: usize) -> Result<Self> {
        match mode {
            FrequencyMode::Grey => Ok(Self::grey()),
            FrequencyMode::Multigroup => Self::multigroup(nu_min, nu_max, count),
        }
    }

    pub fn mode(&self) -> FrequencyMode {
        self.mode
    }

    pub fn is_grey(&self) -> bool {
        self.mode == FrequencyMode::Grey
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bounds(&self) -> (T, T) {
        self.bounds
    }

    /// Estimated relative truncation error of `∫B_ν(1)dν` on this grid.
    pub fn tail_estimate(&self) -> T {
        self.tail_estimate
    }

    /// Planck value carried by group `k`: `B_ν(T)` or `σT⁴` in grey mode.
    #[inline]
    pub fn planck(&self, k: usize, t: T) -> T {
        match self.mode {
            FrequencyMode::Grey => crate::planck::stefan_sigma::<T>() * t.powi(4),
            FrequencyMode::Multigroup => crate::planck::planck_unchecked(self.nodes[k], t),
        }
    }

    /// Temperature derivative of [`Self::planck`].
    #[inline]
    pub fn planck_dt(&self, k: usize, t: T) -> T {
        match self.mode {
            FrequencyMode::Grey => T::lit(4.0) * crate::planck::stefan_sigma::<T>() * t.powi(3),
            FrequencyMode::Multigroup => crate::planck::dplanck_dt_unchecked(self.nodes[k], t),
        }
    }

    /// `Σ_k w_k B_k(T)`, the discrete `∫B_ν(T)dν`.
    pub fn planck_total(&self, t: T) -> T {
        (0..self.len()).fold(T::zero(), |s, k| s + self.weights[k] * self.planck(k, t))
    }

    /// `Σ_k w_k f_k`.
    pub fn integrate(&self, f: &[T]) -> T {
        self.weights
            .iter()
            .zip(f)
            .fold(T::zero(), |s, (&w, &v)| s + w * v)
    }
}

/// Cell partition of an interval starting at 0: `[0, 1]` for the slab, `[0, Y]`
/// for half-line layers.
#[derive(Debug, Clone)]
pub struct SlabMesh<T> {
    faces: Vec<T>,
    centers: Vec<T>,
    widths: Vec<T>,
}

impl<T: Real> SlabMesh<T> {
    /// Uniform partition of `[0, 1]`.
    pub fn uniform(cell_count: usize) -> Result<Self> {
        if cell_count < 2 {
            return Err(Error::InvalidMesh(format!(
                "cell_count must be at least 2 (got {cell_count})"
            )));
        }
        let n = T::of(cell_count);
        let faces = (0..=cell_count).map(|i| T::of(i) / n).collect();
        Self::from_faces(faces)
    }

    /// Geometrically stretched partition of `[0, length]`: widths grow by
    /// `ratio` from `first` until they reach `max_width`.
    pub fn graded(length: T, first: T, ratio: T, max_width: T) -> Result<Self> {
        if !(length > T::zero()) || !(first > T::zero()) || ratio < T::one() || max_width < first {
            return Err(Error::InvalidMesh(
                "graded mesh needs length, first > 0, ratio >= 1, max_width >= first".into(),
            ));
        }
        let mut faces = vec![T::zero()];
        let mut h = first;
        let mut x = T::zero();
        while x + h < length * (T::one() - T::lit(1e-12)) {
            x += h;
            faces.push(x);
            h = (h * ratio).min(max_width);
        }
        // Merge a sliver last cell into its neighbour.
        if faces.len() > 2 && length - x < T::lit(0.5) * h {
            faces.pop();
        }
        faces.push(length);
        Self::from_faces(faces)
    }

    pub fn from_faces(faces: Vec<T>) -> Result<Self> {
        if faces.len() < 3 {
            return Err(Error::InvalidMesh("need at least two cells".into()));
        }
        if faces.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMesh("faces must increase strictly".into()));
        }
        let half = T::lit(0.5);
        let centers = faces.windows(2).map(|w| half * (w[0] + w[1])).collect();
        let widths = faces.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            faces,
            centers,
            widths,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.widths.len()
    }

    pub fn faces(&self) -> &[T] {
        &self.faces
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn widths(&self) -> &[T] {
        &self.widths
    }

    pub fn length(&self) -> T {
        self.faces[self.faces.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for m in [2usize, 3, 5, 8, 16, 33] {
            let (x, w) = gauss_legendre::<f64>(m);
            for d in 0..2 * m {
                let num: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(d as i32)).sum();
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-13, "m={m} d={d}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn full_sphere_second_moment() {
        let q = AngularQuadrature::<f64>::full_sphere(6).unwrap();
        let mut m = [[0.0; 3]; 3];
        for (d, &w) in q.directions().iter().zip(q.weights()) {
            for a in 0..3 {
                for b in 0..3 {
                    m[a][b] += w * d[a] * d[b];
                }
            }
        }
        for (a, row) in m.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                let e = if a == b { 4.0 * PI / 3.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mirror_flips_mu() {
        for q in [
            AngularQuadrature::<f64>::slab(7).unwrap(),
            AngularQuadrature::<f64>::full_sphere(4).unwrap(),
        ] {
            for i in 0..q.len() {
                let j = q.mirror(i);
                assert!((q.mu(i) + q.mu(j)).abs() < 1e-15);
                assert_eq!(q.directions()[i][1], q.directions()[j][1]);
            }
        }
    }

    #[test]
    fn order_one_rejected() {
        assert_eq!(
            AngularQuadrature::<f64>::slab(1).unwrap_err(),
            Error::InvalidOrder(1)
        );
    }

    #[test]
    fn graded_mesh_covers_interval() {
        let m = SlabMesh::<f64>::graded(20.0, 0.02, 1.05, 0.5).unwrap();
        assert_eq!(m.faces()[0], 0.0);
        assert!((m.length() - 20.0).abs() < 1e-14);
        assert!(m.widths().iter().all(|&w| w > 0.0 && w <= 0.75 + 1e-12));
    }
}
