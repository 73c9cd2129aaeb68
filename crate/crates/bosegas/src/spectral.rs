//! Flat product domains of unit volume, their Laplacian spectra, heat traces
//! and heat kernels.
//!
//! Everything factorises over the coordinate axes, so the work is done by
//! one-dimensional theta series. Each series has a spectral form (fast for
//! large times) and a Poisson-dual image form (fast for small times).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Per-axis time at which theta series switch from the image to the
/// spectral representation.
pub const THETA_SWITCH: f64 = 1.0 / (2.0 * PI);

/// Series are truncated once a term drops below this fraction of the sum.
const SERIES_EPS: f64 = 1e-17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Dirichlet,
    Neumann,
}

impl Boundary {
    /// Eigenvalue prefactor on the unit interval: `4π²` for the circle,
    /// `π²` for the interval.
    pub fn scale(self) -> f64 {
        match self {
            Boundary::Periodic => 4.0 * PI * PI,
            Boundary::Dirichlet | Boundary::Neumann => PI * PI,
        }
    }

    fn admits(self, k: i64) -> bool {
        match self {
            Boundary::Periodic => true,
            Boundary::Dirichlet => k >= 1,
            Boundary::Neumann => k >= 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Torus,
    Box,
}

/// A unit-volume torus or box in `d` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub kind: DomainKind,
    pub dim: usize,
    pub bc: Boundary,
}

pub const MAX_DIM: usize = 8;

impl Geometry {
    pub fn torus(dim: usize) -> Self {
        Self { kind: DomainKind::Torus, dim, bc: Boundary::Periodic }
    }

    pub fn dirichlet_box(dim: usize) -> Self {
        Self { kind: DomainKind::Box, dim, bc: Boundary::Dirichlet }
    }

    pub fn neumann_box(dim: usize) -> Self {
        Self { kind: DomainKind::Box, dim, bc: Boundary::Neumann }
    }

    /// Surface measure of the boundary: `2d` for the unit box.
    pub fn boundary_measure(&self) -> f64 {
        match self.kind {
            DomainKind::Torus => 0.0,
            DomainKind::Box => 2.0 * self.dim as f64,
        }
    }

    /// Number of zero eigenvalues of `-Δ`.
    pub fn zero_modes(&self) -> usize {
        match self.bc {
            Boundary::Dirichlet => 0,
            _ => 1,
        }
    }

    /// Lowest eigenvalue `λ₁`.
    pub fn first_eigenvalue(&self) -> f64 {
        match self.bc {
            Boundary::Dirichlet => self.dim as f64 * PI * PI,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.bc) {
            (DomainKind::Torus, _) => write!(f, "torus:{}", self.dim),
            (DomainKind::Box, Boundary::Dirichlet) => write!(f, "box:{}:dirichlet", self.dim),
            (DomainKind::Box, _) => write!(f, "box:{}:neumann", self.dim),
        }
    }
}

impl FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Geometry(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let dim = |p: &str| -> Result<usize> {
            let d: usize = p.parse().map_err(|_| bad())?;
            if (1..=MAX_DIM).contains(&d) {
                Ok(d)
            } else {
                Err(bad())
            }
        };
        match parts.as_slice() {
            ["torus", d] => Ok(Geometry::torus(dim(d)?)),
            ["box", d, "dirichlet"] => Ok(Geometry::dirichlet_box(dim(d)?)),
            ["box", d, "neumann"] => Ok(Geometry::neumann_box(dim(d)?)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Geometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Geometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// theta series

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive and finite, got {t}")))
    }
}

/// `1 + 2 Σ_{n≥1} e^{-c n² t}`, summed directly.
fn lattice_sum_spectral(c: f64, t: f64) -> f64 {
    let mut acc = KahanSum::new();
    acc.add(1.0);
    let mut n = 1.0f64;
    loop {
        let term = 2.0 * (-c * n * n * t).exp();
        acc.add(term);
        if term < SERIES_EPS * acc.value() {
            break;
        }
        n += 1.0;
    }
    acc.value()
}

/// Poisson dual of [`lattice_sum_spectral`]:
/// `(π/(ct))^{1/2} (1 + 2 Σ_{m≥1} e^{-π² m²/(ct)})`.
fn lattice_sum_image(c: f64, t: f64) -> f64 {
    let q = PI * PI / (c * t);
    let mut acc = KahanSum::new();
    acc.add(1.0);
    let mut m = 1.0f64;
    loop {
        let term = 2.0 * (-q * m * m).exp();
        acc.add(term);
        if term < SERIES_EPS * acc.value() {
            break;
        }
        m += 1.0;
    }
    (PI / (c * t)).sqrt() * acc.value()
}

/// Full lattice sum `Σ_{n∈ℤ} e^{-c n² t}` underlying the boundary kind,
/// evaluated by the spectral series.
pub fn lattice_theta_spectral(t: f64, bc: Boundary) -> Result<f64> {
    check_time(t)?;
    Ok(lattice_sum_spectral(bc.scale(), t))
}

/// Full lattice sum evaluated by the image (Poisson-dual) series.
pub fn lattice_theta_image(t: f64, bc: Boundary) -> Result<f64> {
    check_time(t)?;
    Ok(lattice_sum_image(bc.scale(), t))
}

/// One-dimensional theta factor by the spectral series only.
pub fn theta_1d_spectral(t: f64, bc: Boundary) -> Result<f64> {
    check_time(t)?;
    let c = bc.scale();
    Ok(match bc {
        Boundary::Periodic => lattice_sum_spectral(c, t),
        Boundary::Dirichlet | Boundary::Neumann => {
            let mut acc = KahanSum::new();
            let mut n = 1.0f64;
            loop {
                let term = (-c * n * n * t).exp();
                acc.add(term);
                if term <= SERIES_EPS * acc.value() {
                    break;
                }
                n += 1.0;
            }
            if bc == Boundary::Neumann {
                acc.add(1.0);
            }
            acc.value()
        }
    })
}

/// One-dimensional theta factor by the image series only.
pub fn theta_1d_image(t: f64, bc: Boundary) -> Result<f64> {
    check_time(t)?;
    let s = lattice_sum_image(bc.scale(), t);
    Ok(match bc {
        Boundary::Periodic => s,
        Boundary::Dirichlet => 0.5 * (s - 1.0),
        Boundary::Neumann => 0.5 * (s + 1.0),
    })
}

/// One-dimensional heat-trace factor: `Σ_{n∈ℤ} e^{-4π²n²t}` (periodic),
/// `Σ_{n≥1} e^{-π²n²t}` (Dirichlet) or `Σ_{n≥0} e^{-π²n²t}` (Neumann).
pub fn theta_1d(t: f64, bc: Boundary) -> Result<f64> {
    if t > THETA_SWITCH {
        theta_1d_spectral(t, bc)
    } else {
        theta_1d_image(t, bc)
    }
}

/// Relative gap between the spectral and image evaluations of the lattice
/// sum behind `bc` at time `t`.
pub fn duality_gap(t: f64, bc: Boundary) -> Result<f64> {
    let a = lattice_theta_spectral(t, bc)?;
    let b = lattice_theta_image(t, bc)?;
    Ok(crate::numeric::rel_diff(a, b))
}

/// Heat trace `Z(t) = Tr e^{tΔ}` on the unit domain.
pub fn heat_trace(g: &Geometry, t: f64) -> Result<f64> {
    Ok(theta_1d(t, g.bc)?.powi(g.dim as i32))
}

// ---------------------------------------------------------------------------
// spectrum

/// Number of ways to write each `m ≤ m_max` as `|k|²` with admissible `k`.
fn representation_counts(g: &Geometry, m_max: u64) -> Vec<u64> {
    let len = m_max as usize + 1;
    let mut axis = vec![0u64; len];
    let mut k = 0i64;
    while (k * k) as u64 <= m_max {
        let sq = (k * k) as usize;
        let mult = match g.bc {
            Boundary::Periodic if k > 0 => 2,
            Boundary::Dirichlet if k == 0 => 0,
            _ => 1,
        };
        axis[sq] += mult;
        k += 1;
    }
    let squares: Vec<(usize, u64)> =
        axis.iter().enumerate().filter(|(_, &c)| c > 0).map(|(m, &c)| (m, c)).collect();
    let mut counts = axis.clone();
    for _ in 1..g.dim {
        let mut next = vec![0u64; len];
        for (m, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for &(sq, a) in &squares {
                if m + sq >= len {
                    break;
                }
                next[m + sq] += c * a;
            }
        }
        counts = next;
    }
    counts
}

/// Distinct eigenvalues `scale·m` with `m = |k|² ≤ m_max`, returned as
/// `(m, multiplicity)` pairs in ascending order.
pub fn lattice_levels_up_to(g: &Geometry, m_max: u64) -> Vec<(u64, u64)> {
    representation_counts(g, m_max)
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(m, c)| (m as u64, c))
        .collect()
}

/// The `count` smallest distinct eigenvalues of `-Δ` with multiplicities.
pub fn eigenvalues(g: &Geometry, count: usize) -> Result<Vec<(f64, usize)>> {
    if count == 0 {
        return Err(Error::Domain("eigenvalue count must be at least 1".into()));
    }
    let mut m_max = 16u64;
    loop {
        let levels = lattice_levels_up_to(g, m_max);
        if levels.len() >= count {
            let s = g.bc.scale();
            return Ok(levels
                .into_iter()
                .take(count)
                .map(|(m, c)| (s * m as f64, c as usize))
                .collect());
        }
        m_max *= 2;
    }
}

/// A single eigenmode: integer index vector and eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenmode {
    pub index: Vec<i64>,
    pub lambda: f64,
}

impl Eigenmode {
    /// L²-normalised eigenfunction at `x ∈ [0,1]^d`.
    pub fn eval(&self, bc: Boundary, x: &[f64]) -> f64 {
        self.index
            .iter()
            .zip(x)
            .map(|(&n, &xi)| eigenfunction_1d(bc, n, xi))
            .product()
    }
}

/// Per-axis eigenfunction with index `n`.
pub fn eigenfunction_1d(bc: Boundary, n: i64, x: f64) -> f64 {
    let r2 = std::f64::consts::SQRT_2;
    match bc {
        Boundary::Periodic if n == 0 => 1.0,
        Boundary::Periodic if n > 0 => r2 * (2.0 * PI * n as f64 * x).cos(),
        Boundary::Periodic => r2 * (2.0 * PI * (-n) as f64 * x).sin(),
        Boundary::Dirichlet => r2 * (PI * n as f64 * x).sin(),
        Boundary::Neumann if n == 0 => 1.0,
        Boundary::Neumann => r2 * (PI * n as f64 * x).cos(),
    }
}

/// The `count` lowest eigenmodes ordered by eigenvalue, ties broken by
/// lexicographic order of the index vector.
pub fn eigenmodes(g: &Geometry, count: usize) -> Result<Vec<Eigenmode>> {
    if count == 0 {
        return Err(Error::Domain("eigenmode count must be at least 1".into()));
    }
    let mut m_max = 4u64;
    loop {
        let total: u64 = lattice_levels_up_to(g, m_max).iter().map(|x| x.1).sum();
        if total as usize >= count {
            break;
        }
        m_max *= 2;
    }
    let r = (m_max as f64).sqrt().floor() as i64;
    let lo = if g.bc == Boundary::Periodic { -r } else { 0 };
    let mut modes: Vec<(u64, Vec<i64>)> = Vec::new();
    let mut idx = vec![lo; g.dim];
    loop {
        if idx.iter().all(|&k| g.bc.admits(k)) {
            let m: i64 = idx.iter().map(|k| k * k).sum();
            if m as u64 <= m_max {
                modes.push((m as u64, idx.clone()));
            }
        }
        // odometer increment, last axis fastest
        let mut axis = g.dim;
        loop {
            if axis == 0 {
                modes.sort();
                let s = g.bc.scale();
                return Ok(modes
                    .into_iter()
                    .take(count)
                    .map(|(m, index)| Eigenmode { index, lambda: s * m as f64 })
                    .collect());
            }
            axis -= 1;
            if idx[axis] < r {
                idx[axis] += 1;
                break;
            }
            idx[axis] = lo;
        }
    }
}

// ---------------------------------------------------------------------------
// heat kernel

fn gaussian(z: f64, t: f64) -> f64 {
    (-z * z / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// Spectral form of the one-dimensional kernel on `[0, L]`.
pub fn kernel_1d_spectral(bc: Boundary, l: f64, t: f64, x: f64, y: f64) -> f64 {
    let tau = t / (l * l);
    let c = bc.scale();
    let mut acc = KahanSum::new();
    if bc != Boundary::Dirichlet {
        acc.add(1.0);
    }
    let mut n = 1.0f64;
    loop {
        let decay = (-c * n * n * tau).exp();
        let term = match bc {
            Boundary::Periodic => 2.0 * decay * (2.0 * PI * n * (x - y) / l).cos(),
            Boundary::Dirichlet => 2.0 * decay * (PI * n * x / l).sin() * (PI * n * y / l).sin(),
            Boundary::Neumann => 2.0 * decay * (PI * n * x / l).cos() * (PI * n * y / l).cos(),
        };
        acc.add(term);
        if 2.0 * decay < SERIES_EPS * acc.value().abs().max(1e-300) || decay < 1e-300 {
            break;
        }
        n += 1.0;
    }
    acc.value() / l
}

/// Image form of the one-dimensional kernel on `[0, L]`: wrapped Gaussians
/// for the circle, reflected ones for the interval.
pub fn kernel_1d_image(bc: Boundary, l: f64, t: f64, x: f64, y: f64) -> f64 {
    let period = if bc == Boundary::Periodic { l } else { 2.0 * l };
    let reach = (4.0 * t * 42.0).sqrt();
    let m_max = ((reach + 2.0 * l) / period).ceil() as i64 + 1;
    let mut acc = KahanSum::new();
    for m in -m_max..=m_max {
        let shift = m as f64 * period;
        let direct = gaussian(x - y + shift, t);
        match bc {
            Boundary::Periodic => acc.add(direct),
            Boundary::Dirichlet => {
                acc.add(direct);
                acc.add(-gaussian(x + y + shift, t));
            }
            Boundary::Neumann => {
                acc.add(direct);
                acc.add(gaussian(x + y + shift, t));
            }
        }
    }
    acc.value()
}

/// Heat kernel `p_t(x, y)` of `Δ` on the domain scaled to side `L`.
pub fn heat_kernel(g: &Geometry, l: f64, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_time(t)?;
    if x.len() != g.dim || y.len() != g.dim {
        return Err(Error::Domain("point dimension does not match the geometry".into()));
    }
    if x.iter().chain(y).any(|&v| !(0.0..=l).contains(&v)) {
        return Err(Error::Domain(format!("point outside [0, {l}]^{}", g.dim)));
    }
    let spectral = t / (l * l) > THETA_SWITCH;
    Ok(x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            if spectral {
                kernel_1d_spectral(g.bc, l, t, a, b)
            } else {
                kernel_1d_image(g.bc, l, t, a, b)
            }
        })
        .product())
}

// ---------------------------------------------------------------------------
// Minakshisundaram–Pleijel coefficients

/// Coefficients of `t^{-d/2}`, `t^{-(d-1)/2}` and `t^{-(d-2)/2}` in the
/// small-time expansion of `Z(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Analytic coefficients. On the box, `Z(t) = ((4πt)^{-1/2} ∓ 1/2)^d` up to
/// exponentially small terms, so all three follow from the binomial
/// expansion.
pub fn mp_reference(g: &Geometry) -> MpCoefficients {
    let d = g.dim as f64;
    let four_pi = 4.0 * PI;
    let a0 = four_pi.powf(-d / 2.0);
    match g.bc {
        Boundary::Periodic => MpCoefficients { a0, a1: 0.0, a2: 0.0 },
        Boundary::Dirichlet | Boundary::Neumann => {
            let sign = if g.bc == Boundary::Dirichlet { -1.0 } else { 1.0 };
            let a1 = sign * d / (2.0 * four_pi.powf((d - 1.0) / 2.0));
            let a2 = d * (d - 1.0) / 8.0 * four_pi.powf(-(d - 2.0) / 2.0);
            MpCoefficients { a0, a1, a2 }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpFit {
    pub coeffs: MpCoefficients,
    /// Euclidean norm of the weighted residual `t^{d/2}(Z - fit)`.
    pub residual: f64,
    /// Condition number of the column-equilibrated design matrix.
    pub condition: f64,
}

/// Largest acceptable condition number for [`mp_fit`].
pub const MP_CONDITION_LIMIT: f64 = 1e10;

/// Default fitting grid: 24 geometric points in `[1e-5, 1e-3]`.
pub fn default_mp_grid() -> Vec<f64> {
    crate::numeric::geomspace(1e-5, 1e-3, 24)
}

/// Least-squares fit of heat-trace values against the three MP basis
/// functions. Rows are weighted by `t^{d/2}` so the fit is in relative
/// terms.
pub fn mp_fit_values(dim: usize, grid: &[f64], values: &[f64]) -> Result<MpFit> {
    if grid.len() < 4 || grid.len() != values.len() {
        return Err(Error::Domain("mp fit needs at least 4 points and matching values".into()));
    }
    if grid.iter().any(|&t| !(t > 0.0 && t <= 0.5)) {
        return Err(Error::Domain("mp fit grid must lie in (0, 0.5]".into()));
    }
    let n = grid.len();
    let d = dim as f64;
    let mut a = DMatrix::<f64>::zeros(n, 3);
    let mut b = DVector::<f64>::zeros(n);
    for (i, (&t, &z)) in grid.iter().zip(values).enumerate() {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = t.sqrt();
        a[(i, 2)] = t;
        b[i] = t.powf(d / 2.0) * z;
    }
    let norms: Vec<f64> = (0..3).map(|j| a.column(j).norm()).collect();
    for (j, s) in norms.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MP_CONDITION_LIMIT {
        return Err(Error::IllConditioned(condition));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Domain(format!("svd solve failed: {e}")))?;
    let residual = (&a * &x - &b).norm();
    let coeffs = MpCoefficients { a0: x[0] / norms[0], a1: x[1] / norms[1], a2: x[2] / norms[2] };
    Ok(MpFit { coeffs, residual, condition })
}

/// Fit of the exact heat trace of `g` on `grid`.
pub fn mp_fit(g: &Geometry, grid: &[f64]) -> Result<MpFit> {
    let values = grid.iter().map(|&t| heat_trace(g, t)).collect::<Result<Vec<_>>>()?;
    mp_fit_values(g.dim, grid, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rel_diff;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["torus:3", "box:3:dirichlet", "box:4:neumann", "torus:8"] {
            let g: Geometry = s.parse().unwrap();
            assert_eq!(g.to_string(), s);
        }
        for s in ["torus", "torus:0", "torus:9", "box:3", "box:3:robin", "sphere:2"] {
            assert!(s.parse::<Geometry>().is_err(), "{s}");
        }
    }

    #[test]
    fn theta_reference_values() {
        // direct sums written out term by term
        let t = 0.1;
        let dir: f64 = (1..6).map(|n| (-PI * PI * (n * n) as f64 * t).exp()).sum();
        let per = 1.0 + 2.0 * (-4.0 * PI * PI * t).exp() + 2.0 * (-16.0 * PI * PI * t).exp();
        assert!(rel_diff(theta_1d(t, Boundary::Dirichlet).unwrap(), dir) < 1e-13);
        assert!(rel_diff(theta_1d(t, Boundary::Neumann).unwrap(), dir + 1.0) < 1e-13);
        assert!(rel_diff(theta_1d(t, Boundary::Periodic).unwrap(), per) < 1e-12);
        assert!((theta_1d(t, Boundary::Dirichlet).unwrap() - 0.392_144_1).abs() < 2e-6);
        assert!((theta_1d(t, Boundary::Periodic).unwrap() - 1.038_592_8).abs() < 1e-7);
        assert!((theta_1d(1e3, Boundary::Periodic).unwrap() - 1.0).abs() < 1e-300);
    }

    #[test]
    fn theta_rejects_nonpositive_time() {
        assert!(theta_1d(0.0, Boundary::Periodic).is_err());
        assert!(theta_1d(-1.0, Boundary::Dirichlet).is_err());
        assert!(theta_1d(f64::NAN, Boundary::Neumann).is_err());
    }

    #[test]
    fn neumann_is_dirichlet_plus_one() {
        for &t in &[1e-4, 1e-2, 0.1, THETA_SWITCH, 0.5, 3.0] {
            let d = theta_1d(t, Boundary::Dirichlet).unwrap();
            let n = theta_1d(t, Boundary::Neumann).unwrap();
            assert!((n - d - 1.0).abs() < 1e-13 * n);
        }
    }

    #[test]
    fn switch_point_is_continuous() {
        for bc in [Boundary::Periodic, Boundary::Dirichlet, Boundary::Neumann] {
            let a = theta_1d_spectral(THETA_SWITCH, bc).unwrap();
            let b = theta_1d_image(THETA_SWITCH, bc).unwrap();
            assert!(rel_diff(a, b) < 1e-14, "{bc:?}");
        }
    }

    #[test]
    fn heat_trace_examples() {
        let g = Geometry::dirichlet_box(3);
        let z = heat_trace(&g, 0.1).unwrap();
        assert!((z - 0.060_303).abs() < 1e-6);
        assert!((heat_trace(&Geometry::torus(3), 50.0).unwrap() - 1.0).abs() < 1e-15);
        for g in [Geometry::torus(3), Geometry::dirichlet_box(3), Geometry::neumann_box(2)] {
            let t = 1e-7;
            let lead = heat_trace(&g, t).unwrap() * (4.0 * PI * t).powf(g.dim as f64 / 2.0);
            assert!((lead - 1.0).abs() < 5e-3, "{g}");
        }
    }

    #[test]
    fn spectrum_examples() {
        let ev = eigenvalues(&Geometry::torus(3), 3).unwrap();
        assert_eq!(ev[0], (0.0, 1));
        assert!((ev[1].0 - 4.0 * PI * PI).abs() < 1e-12);
        assert_eq!(ev[1].1, 6);
        let ev = eigenvalues(&Geometry::dirichlet_box(3), 2).unwrap();
        assert!((ev[0].0 - 3.0 * PI * PI).abs() < 1e-12);
        assert_eq!(ev[0].1, 1);
        assert_eq!(ev[1].1, 3);
        assert!(eigenvalues(&Geometry::torus(1), 0).is_err());
    }

    #[test]
    fn trace_equals_eigenvalue_sum() {
        for g in [Geometry::torus(2), Geometry::dirichlet_box(3), Geometry::neumann_box(3)] {
            let t = 0.02;
            let levels = lattice_levels_up_to(&g, 4000);
            let s: f64 = levels
                .iter()
                .map(|&(m, c)| c as f64 * (-g.bc.scale() * m as f64 * t).exp())
                .sum();
            assert!(rel_diff(s, heat_trace(&g, t).unwrap()) < 1e-12, "{g}");
        }
    }

    #[test]
    fn eigenmodes_are_ordered_and_normalised() {
        let g = Geometry::torus(2);
        let modes = eigenmodes(&g, 9).unwrap();
        assert_eq!(modes[0].index, vec![0, 0]);
        assert_eq!(modes[1].index, vec![-1, 0]);
        for w in modes.windows(2) {
            assert!(w[0].lambda <= w[1].lambda);
        }
        let (x, w) = crate::special::gauss_legendre(64);
        for g in [Geometry::torus(2), Geometry::dirichlet_box(2), Geometry::neumann_box(2)] {
            for mode in eigenmodes(&g, 6).unwrap() {
                let mut norm = 0.0;
                for (xi, wi) in x.iter().zip(&w) {
                    for (yj, wj) in x.iter().zip(&w) {
                        let p = [0.5 * (xi + 1.0), 0.5 * (yj + 1.0)];
                        norm += 0.25 * wi * wj * mode.eval(g.bc, &p).powi(2);
                    }
                }
                assert!((norm - 1.0).abs() < 1e-12, "{g} {:?}", mode.index);
            }
        }
        let ground = &eigenmodes(&Geometry::dirichlet_box(3), 1).unwrap()[0];
        assert!(ground.eval(Boundary::Dirichlet, &[0.01, 0.5, 0.99]) > 0.0);
    }

    #[test]
    fn kernel_representations_agree() {
        let v1 = kernel_1d_spectral(Boundary::Periodic, 1.0, 0.05, 0.0, 0.0);
        let v2 = kernel_1d_image(Boundary::Periodic, 1.0, 0.05, 0.0, 0.0);
        assert!(rel_diff(v1, v2) < 1e-12);
        for bc in [Boundary::Periodic, Boundary::Dirichlet, Boundary::Neumann] {
            for &(l, t, x, y) in &[(1.0, 0.1, 0.3, 0.7), (5.0, 3.0, 1.0, 4.5), (2.0, 0.3, 0.5, 0.5)] {
                let a = kernel_1d_spectral(bc, l, t, x, y);
                let b = kernel_1d_image(bc, l, t, x, y);
                assert!(rel_diff(a, b) < 1e-12, "{bc:?} {l} {t} {x} {y}: {a} {b}");
            }
        }
    }

    #[test]
    fn kernel_mass() {
        let (x, w) = crate::special::gauss_legendre(64);
        let l = 3.0;
        for bc in [Boundary::Periodic, Boundary::Neumann, Boundary::Dirichlet] {
            for &t in &[0.2, 2.0] {
                let g = Geometry { kind: DomainKind::Box, dim: 1, bc };
                let mass: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| 0.5 * l * wi * heat_kernel(&g, l, t, &[1.0], &[0.5 * l * (xi + 1.0)]).unwrap())
                    .sum();
                if bc == Boundary::Dirichlet {
                    assert!(mass < 1.0 && mass > 0.0);
                } else {
                    assert!((mass - 1.0).abs() < 1e-8, "{bc:?} {t} {mass}");
                }
            }
        }
        let g = Geometry::torus(2);
        assert!(heat_kernel(&g, 2.0, 0.1, &[0.5, 2.5], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mp_reference_values() {
        let t = mp_reference(&Geometry::torus(3));
        assert!((t.a0 - 0.022_448_5).abs() < 1e-6 && t.a1 == 0.0 && t.a2 == 0.0);
        let d = mp_reference(&Geometry::dirichlet_box(3));
        assert!((d.a1 + 3.0 / (8.0 * PI)).abs() < 1e-15);
        assert!((d.a2 - 0.211_571_1).abs() < 1e-7);
        let n = mp_reference(&Geometry::neumann_box(3));
        assert!((n.a1 - 3.0 / (8.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn mp_fit_of_exact_polynomial_has_zero_residual() {
        let grid = default_mp_grid();
        let c = mp_reference(&Geometry::dirichlet_box(3));
        let z: Vec<f64> = grid
            .iter()
            .map(|&t| c.a0 * t.powf(-1.5) + c.a1 / t + c.a2 * t.powf(-0.5))
            .collect();
        let fit = mp_fit_values(3, &grid, &z).unwrap();
        assert!(fit.residual < 1e-13);
        assert!((fit.coeffs.a1 - c.a1).abs() < 1e-10);
    }

    #[test]
    fn mp_fit_rejects_bad_grids() {
        let g = Geometry::torus(3);
        assert!(mp_fit(&g, &[1e-4, 2e-4, 3e-4]).is_err());
        assert!(mp_fit(&g, &[1e-4, 2e-4, 3e-4, 0.9]).is_err());
        let flat = vec![1e-3; 6];
        assert!(matches!(mp_fit(&g, &flat), Err(Error::IllConditioned(_))));
    }
}
