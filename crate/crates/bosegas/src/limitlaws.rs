//! Reference limit laws: the Fredholm law `χ_ζ`, the Dickman density,
//! Poisson–Dirichlet(1) statistics and local CLT profiles.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::sampler::SeedSpec;
use crate::special::{cisi, e1, gauss_legendre, integrate, normal_pdf, EULER_GAMMA};
use crate::spectral::{heat_trace, lattice_levels_up_to, Geometry};

/// Tabulated law on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub law: String,
    /// `"cdf"` or `"density"`.
    pub kind: String,
    pub params: serde_json::Value,
    pub tolerance: f64,
    pub x: Vec<f64>,
    pub value: Vec<f64>,
}

// ---------------------------------------------------------------------------
// χ_ζ

/// Eigenvalues `λ_k` of `-Δ` on the unit domain, grouped by level, plus the
/// variance `Σ λ_k⁻²` carried by the levels that were cut off.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    /// `(m, λ, multiplicity)` with `λ = scale·m`, ascending.
    pub levels: Vec<(u64, f64, f64)>,
    pub tail_variance: f64,
}

/// `Σ_k λ_k⁻² = ∫_0^∞ s Z(s) ds`, evaluated with `s = u²`.
fn total_inverse_square(g: &Geometry) -> Result<f64> {
    let lam1 = g.first_eigenvalue();
    let u_max = (60.0 / lam1).sqrt();
    let mut err = None;
    let v = integrate(
        |u| {
            let s = u * u;
            if s == 0.0 {
                return 0.0;
            }
            match heat_trace(g, s) {
                Ok(z) => 2.0 * u * u * u * z,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        0.0,
        u_max,
        400,
        16,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

impl SpectralMeasure {
    /// Levels `|k|² ≤ m_max`; the remainder is measured exactly from the
    /// heat trace.
    pub fn new(g: &Geometry, m_max: u64) -> Result<Self> {
        if g.zero_modes() > 0 {
            return Err(Error::Domain("the Fredholm law needs λ₁ > 0 (zero mode present)".into()));
        }
        let scale = g.bc.scale();
        let levels: Vec<(u64, f64, f64)> =
            lattice_levels_up_to(g, m_max).into_iter().map(|(m, c)| (m, scale * m as f64, c as f64)).collect();
        let head = crate::numeric::ksum(levels.iter().map(|&(_, l, c)| c / (l * l)));
        let total = total_inverse_square(g)?;
        Ok(Self { levels, tail_variance: (total - head).max(0.0) })
    }

    /// Explicit eigenvalue list with multiplicity one each.
    pub fn from_eigenvalues(lambdas: &[f64], tail_variance: f64) -> Result<Self> {
        if lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Domain("the Fredholm law needs λ₁ > 0".into()));
        }
        let mut ls = lambdas.to_vec();
        ls.sort_by(f64::total_cmp);
        Ok(Self { levels: ls.into_iter().enumerate().map(|(i, l)| (i as u64, l, 1.0)).collect(), tail_variance })
    }

    pub fn head_variance(&self) -> f64 {
        crate::numeric::ksum(self.levels.iter().map(|&(_, l, c)| c / (l * l)))
    }

    pub fn variance(&self) -> f64 {
        self.head_variance() + self.tail_variance
    }
}

/// `log ψ(t) = -Σ_k [log(1 - it/λ_k) + it/λ_k]`, the tail levels entering
/// through their Gaussian limit `-t² Σ λ⁻² / 2`.
pub fn fredholm_log_cf(sm: &SpectralMeasure, t: f64) -> Complex64 {
    let mut re = KahanSum::new();
    let mut im = KahanSum::new();
    for &(_, lam, mult) in &sm.levels {
        let z = Complex64::new(1.0, -t / lam);
        let term = -(z.ln()) - Complex64::new(0.0, t / lam);
        re.add(mult * term.re);
        im.add(mult * term.im);
    }
    re.add(-0.5 * sm.tail_variance * t * t);
    Complex64::new(re.value(), im.value())
}

/// Gil–Pelaez inversion of `ψ`, with `ψ` precomputed on a composite
/// Gauss–Legendre grid over `[0, T]`, `|ψ(T)| < 1e-12`.
#[derive(Debug, Clone)]
pub struct ChiZeta {
    pub variance: f64,
    pub t_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    psi: Vec<Complex64>,
}

pub fn chi_zeta(sm: &SpectralMeasure) -> Result<ChiZeta> {
    let mut t_max = 1.0;
    while fredholm_log_cf(sm, t_max).re > -(1e-12f64).ln().abs() {
        t_max *= 1.5;
        if t_max > 1e5 {
            return Err(Error::Tolerance("characteristic function does not decay within budget".into()));
        }
    }
    let order = 16;
    let panels = (2.0 * t_max).ceil() as usize;
    let (gx, gw) = gauss_legendre(order);
    let h = t_max / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push(c + 0.5 * h * x);
            weights.push(0.5 * h * w);
        }
    }
    let psi = nodes.par_iter().map(|&t| fredholm_log_cf(sm, t).exp()).collect();
    Ok(ChiZeta { variance: sm.variance(), t_max, nodes, weights, psi })
}

impl ChiZeta {
    /// `F(x) = 1/2 - (1/π) ∫_0^∞ Im(e^{-itx} ψ(t)) / t dt`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = KahanSum::new();
        for ((t, w), p) in self.nodes.iter().zip(&self.weights).zip(&self.psi) {
            let v = Complex64::new(0.0, -t * x).exp() * p;
            acc.add(w * v.im / t);
        }
        0.5 - acc.value() / PI
    }

    /// `f(x) = (1/π) ∫_0^∞ Re(e^{-itx} ψ(t)) dt`.
    pub fn pdf(&self, x: f64) -> f64 {
        let mut acc = KahanSum::new();
        for ((t, w), p) in self.nodes.iter().zip(&self.weights).zip(&self.psi) {
            acc.add(w * (Complex64::new(0.0, -t * x).exp() * p).re);
        }
        acc.value() / PI
    }

    pub fn cdf_table(&self, xs: &[f64]) -> DistributionTable {
        DistributionTable {
            law: "chi_zeta".into(),
            kind: "cdf".into(),
            params: serde_json::json!({ "variance": self.variance, "t_max": self.t_max }),
            tolerance: 1e-8,
            x: xs.to_vec(),
            value: xs.par_iter().map(|&x| self.cdf(x)).collect(),
        }
    }
}

/// `Σ_k (Gamma(m_k, 1/λ_k) - m_k/λ_k)` over the low levels plus a centred
/// Gaussian carrying the rest of the variance.
#[derive(Debug, Clone)]
pub struct GammaSum {
    parts: Vec<(Gamma<f64>, f64)>,
    tail: Normal<f64>,
}

impl GammaSum {
    pub fn new(sm: &SpectralMeasure, m_small: u64) -> Result<Self> {
        let mut parts = Vec::new();
        let mut head = KahanSum::new();
        for &(m, lam, mult) in &sm.levels {
            if m > m_small {
                break;
            }
            let g = Gamma::new(mult, 1.0 / lam).map_err(|e| Error::Domain(e.to_string()))?;
            parts.push((g, mult / lam));
            head.add(mult / (lam * lam));
        }
        let tail_var = (sm.variance() - head.value()).max(0.0);
        let tail = Normal::new(0.0, tail_var.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(Self { parts, tail })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut acc = KahanSum::new();
        for (g, mean) in &self.parts {
            acc.add(g.sample(rng) - mean);
        }
        acc.add(self.tail.sample(rng));
        acc.value()
    }

    /// `n` draws split over `streams` independent streams of `seed`.
    pub fn sample_many(&self, n: usize, seed: u64) -> Vec<f64> {
        const CHUNK: usize = 1 << 14;
        let chunks = n.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = SeedSpec::new(seed, c as u64).rng();
                let len = CHUNK.min(n - c * CHUNK);
                (0..len).map(move |_| self.sample(&mut rng)).collect::<Vec<_>>()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Dickman

/// Dickman function on `[0, u_max]`, solved from `u ρ'(u) = -ρ(u - 1)` by a
/// fixed-step method of steps. With a pure delay the RK4 stage reduces to
/// Simpson's rule over the step; half-step delayed values come from cubic
/// Hermite interpolation with derivatives supplied by the equation itself.
#[derive(Debug, Clone)]
pub struct Dickman {
    per_unit: usize,
    u_max: f64,
    rho: Vec<f64>,
}

impl Dickman {
    pub const DEFAULT_STEPS_PER_UNIT: usize = 4096;

    pub fn new(u_max: f64) -> Result<Self> {
        Self::with_resolution(u_max, Self::DEFAULT_STEPS_PER_UNIT)
    }

    pub fn with_resolution(u_max: f64, per_unit: usize) -> Result<Self> {
        if !(u_max >= 2.0 && u_max.is_finite()) || per_unit < 2 {
            return Err(Error::Domain("Dickman table needs u_max >= 2".into()));
        }
        let h = 1.0 / per_unit as f64;
        let n = (u_max * per_unit as f64).ceil() as usize;
        let mut rho = vec![0.0; n + 1];
        for (i, r) in rho.iter_mut().enumerate().take(2 * per_unit + 1) {
            let u = i as f64 * h;
            *r = if i <= per_unit { 1.0 } else { 1.0 - u.ln() };
        }
        let mut d = Self { per_unit, u_max: n as f64 * h, rho };
        for i in 2 * per_unit..n {
            let u = i as f64 * h;
            let a = i - per_unit;
            let f0 = -d.rho[a] / u;
            let f1 = -d.rho[a + 1] / (u + h);
            let mid = d.hermite_mid(a);
            let fm = -mid / (u + 0.5 * h);
            d.rho[i + 1] = d.rho[i] + h / 6.0 * (f0 + 4.0 * fm + f1);
        }
        Ok(d)
    }

    /// `ρ'(v)` from the equation, `v ≥ 1`; the one-sided value at `v = 1`
    /// from above.
    fn deriv(&self, i: usize) -> f64 {
        if i < self.per_unit {
            0.0
        } else {
            -self.rho[i - self.per_unit] / (i as f64 / self.per_unit as f64)
        }
    }

    fn hermite(&self, i: usize, s: f64) -> f64 {
        let h = 1.0 / self.per_unit as f64;
        let (p0, p1) = (self.rho[i], self.rho[i + 1]);
        let m0 = self.deriv(i);
        let m1 = if i + 1 == self.per_unit { 0.0 } else { self.deriv(i + 1) };
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * p0 + (s3 - 2.0 * s2 + s) * h * m0 + (-2.0 * s3 + 3.0 * s2) * p1 + (s3 - s2) * h * m1
    }

    fn hermite_mid(&self, i: usize) -> f64 {
        self.hermite(i, 0.5)
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// `ρ_D(u)`; `1` for `u ≤ 1` including negative `u` is rejected.
    pub fn rho(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("Dickman argument must be >= 0, got {u}")));
        }
        if u > self.u_max {
            return Err(Error::Domain(format!("Dickman argument {u} beyond tabulated range {}", self.u_max)));
        }
        let x = u * self.per_unit as f64;
        let i = (x.floor() as usize).min(self.rho.len() - 2);
        Ok(self.hermite(i, x - i as f64))
    }

    /// `p₁(y) = e^{-γ} ρ_D(y)`.
    pub fn p1(&self, y: f64) -> Result<f64> {
        Ok((-EULER_GAMMA).exp() * self.rho(y)?)
    }

    /// `P(largest PD(1) fraction ≤ x) = ρ_D(1/x)`, zero below the table.
    pub fn pd1_largest_cdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Ok(0.0);
        }
        if x >= 1.0 {
            return Ok(1.0);
        }
        let u = 1.0 / x;
        if u > self.u_max {
            return Ok(0.0);
        }
        self.rho(u)
    }

    pub fn table(&self, ys: &[f64]) -> Result<DistributionTable> {
        Ok(DistributionTable {
            law: "dickman_p1".into(),
            kind: "density".into(),
            params: serde_json::json!({ "steps_per_unit": self.per_unit }),
            tolerance: 1e-10,
            x: ys.to_vec(),
            value: ys.iter().map(|&y| self.p1(y)).collect::<Result<_>>()?,
        })
    }
}

/// Characteristic function of the Dickman law,
/// `exp(∫_0^1 (e^{itx} - 1)/x dx) = exp(Ci(t) - γ - log t + i Si(t))`.
pub fn dickman_cf(t: f64) -> Complex64 {
    if t == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let (ci, si) = cisi(t.abs());
    let z = Complex64::new(ci - EULER_GAMMA - t.abs().ln(), si).exp();
    if t < 0.0 {
        z.conj()
    } else {
        z
    }
}

/// `p₁(x)` by Fourier-cosine inversion of [`dickman_cf`] on `[0, b]`; an
/// independent route to the Dickman density.
pub fn p1_cos_inversion(x: f64, b: f64, terms: usize) -> f64 {
    let mut acc = KahanSum::new();
    for k in 0..terms {
        let u = k as f64 * PI / b;
        let c = dickman_cf(u).re * (u * x).cos();
        acc.add(if k == 0 { 0.5 * c } else { c });
    }
    2.0 / b * acc.value()
}

/// Laplace transform of `p₁` in closed form, `exp(-Ein(s))`.
pub fn dickman_laplace(s: f64) -> f64 {
    (-crate::special::ein(s)).exp()
}

// ---------------------------------------------------------------------------
// Poisson–Dirichlet(1)

/// Golomb–Dickman constant `∫_0^∞ exp(-x - E₁(x)) dx`.
pub fn golomb_dickman() -> f64 {
    integrate(|x| if x == 0.0 { 0.0 } else { (-x - e1(x)).exp() }, 0.0, 60.0, 600, 16)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pd1Reference {
    pub samples: usize,
    /// `E[L_i]` for the three largest fractions.
    pub mean_ranked: [f64; 3],
    /// Mean of the first (unranked) stick.
    pub first_stick_mean: f64,
    /// Empirical CDF of the largest fraction at `cdf_grid`.
    pub cdf_grid: Vec<f64>,
    pub largest_cdf: Vec<f64>,
}

/// Three largest parts of one GEM(1) draw, and the first stick. Breaking
/// stops once the remaining length is below the third largest part.
fn gem_top3<R: Rng + ?Sized>(rng: &mut R) -> ([f64; 3], f64) {
    let mut rest = 1.0;
    let mut top = [0.0f64; 3];
    let mut first = f64::NAN;
    while rest > top[2] {
        let piece = rest * rng.random::<f64>();
        rest -= piece;
        if first.is_nan() {
            first = piece;
        }
        if piece > top[2] {
            top[2] = piece;
            if top[2] > top[1] {
                top.swap(1, 2);
                if top[1] > top[0] {
                    top.swap(0, 1);
                }
            }
        }
    }
    (top, first)
}

/// Stick-breaking Monte Carlo reference for PD(1).
pub fn pd1_reference(samples: usize, seed: u64, bins: usize) -> Pd1Reference {
    const CHUNK: usize = 1 << 16;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<([f64; 4], Vec<u64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = SeedSpec::new(seed, c as u64).rng();
            let len = CHUNK.min(samples - c * CHUNK);
            let mut sums = [0.0f64; 4];
            let mut hist = vec![0u64; bins];
            for _ in 0..len {
                let (top, first) = gem_top3(&mut rng);
                for i in 0..3 {
                    sums[i] += top[i];
                }
                sums[3] += first;
                let b = ((top[0] * bins as f64) as usize).min(bins - 1);
                hist[b] += 1;
            }
            (sums, hist)
        })
        .collect();
    let mut sums = [KahanSum::new(), KahanSum::new(), KahanSum::new(), KahanSum::new()];
    let mut hist = vec![0u64; bins];
    for (s, h) in &parts {
        for i in 0..4 {
            sums[i].add(s[i]);
        }
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    let n = samples as f64;
    let mut cum = 0u64;
    let largest_cdf = hist
        .iter()
        .map(|h| {
            cum += h;
            cum as f64 / n
        })
        .collect();
    Pd1Reference {
        samples,
        mean_ranked: [sums[0].value() / n, sums[1].value() / n, sums[2].value() / n],
        first_stick_mean: sums[3].value() / n,
        cdf_grid: (1..=bins).map(|i| i as f64 / bins as f64).collect(),
        largest_cdf,
    }
}

/// Ranked fractions of one GEM(1) draw, broken until the remainder is
/// below `eps`; the remainder is appended as a final part.
pub fn gem_ranked<R: Rng + ?Sized>(rng: &mut R, eps: f64) -> Vec<f64> {
    let mut rest = 1.0;
    let mut parts = Vec::new();
    while rest > eps {
        let piece = rest * rng.random::<f64>();
        rest -= piece;
        parts.push(piece);
    }
    parts.push(rest);
    parts.sort_by(|a, b| b.total_cmp(a));
    parts
}

// ---------------------------------------------------------------------------
// local profiles

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    GaussianTiltedD3,
    #[serde(rename = "stable_3_2")]
    Stable32,
    GaussianDGe4,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_tilted_d3" => Ok(Self::GaussianTiltedD3),
            "stable_3_2" => Ok(Self::Stable32),
            "gaussian_d_ge4" => Ok(Self::GaussianDGe4),
            _ => Err(Error::Domain(format!("unknown profile kind '{s}'"))),
        }
    }
}

/// A competing variance formula for a Gaussian local limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCandidate {
    pub label: String,
    pub variance: f64,
}

/// Variance candidates `8πβ²r` and `1/(8πβ²r)` for the tilted `d = 3` law
/// at scale `ν = √log L / L²`.
pub fn tilted_d3_candidates(beta: f64, r: f64) -> [VarianceCandidate; 2] {
    let v = 8.0 * PI * beta * beta * r;
    [
        VarianceCandidate { label: "8*pi*beta^2*r".into(), variance: v },
        VarianceCandidate { label: "1/(8*pi*beta^2*r)".into(), variance: 1.0 / v },
    ]
}

/// `c_d = 2` for `d = 4` and `ζ(d/2 - 1)` above.
pub fn high_dim_constant(d: usize) -> Result<f64> {
    match d {
        4 => Ok(2.0),
        d if d >= 5 => Ok(crate::special::zeta(d as f64 / 2.0 - 1.0)),
        _ => Err(Error::Unsupported(format!("high-dimensional constant needs d >= 4, got {d}"))),
    }
}

/// Variance candidates `(4πβ)^{d/2}/c_d` and `c_d (4πβ)^{-d/2}` for
/// `𝒩 / b_L` with `b_L = L^{d/2} log^{1{d=4}/2} L`.
pub fn high_dim_candidates(d: usize, beta: f64) -> Result<[VarianceCandidate; 2]> {
    let c = high_dim_constant(d)?;
    let f = (4.0 * PI * beta).powf(d as f64 / 2.0);
    Ok([
        VarianceCandidate { label: "(4*pi*beta)^(d/2)/c_d".into(), variance: f / c },
        VarianceCandidate { label: "c_d*(4*pi*beta)^(-d/2)".into(), variance: c / f },
    ])
}

/// Index of the candidate closest to `observed` on a log scale.
pub fn closest_candidate(observed: f64, candidates: &[VarianceCandidate]) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if (observed / c.variance).ln().abs() < (observed / candidates[best].variance).ln().abs() {
            best = i;
        }
    }
    best
}

pub fn gaussian_profile(variance: f64, xs: &[f64]) -> DistributionTable {
    DistributionTable {
        law: "gaussian".into(),
        kind: "density".into(),
        params: serde_json::json!({ "variance": variance }),
        tolerance: 1e-15,
        x: xs.to_vec(),
        value: xs.iter().map(|&x| normal_pdf(x, variance)).collect(),
    }
}

/// Density of the law with characteristic function
/// `exp(-c|t|^{3/2}(1 - i·skew·tan(3π/4)·sign t))`.
pub fn stable32_density(c: f64, skew: f64, x: f64) -> f64 {
    let tan = (0.75 * PI).tan();
    let t_max = (40.0 / c).powf(2.0 / 3.0);
    integrate(
        |t| {
            let a = c * t.powf(1.5);
            let phi = Complex64::new(-a, a * skew * tan).exp();
            (Complex64::new(0.0, -t * x).exp() * phi).re
        },
        0.0,
        t_max,
        400,
        16,
    ) / PI
}

/// Profiles for the requested local law. Gaussian kinds emit one density
/// per variance candidate (`param` is `r` for the tilted law and `d` for
/// the high-dimensional one); the stable kind takes `param` as the scale
/// `c`.
pub fn local_profiles(kind: ProfileKind, beta: f64, param: f64, xs: &[f64]) -> Result<Vec<(String, DistributionTable)>> {
    match kind {
        ProfileKind::GaussianTiltedD3 => Ok(tilted_d3_candidates(beta, param)
            .into_iter()
            .map(|c| (c.label, gaussian_profile(c.variance, xs)))
            .collect()),
        ProfileKind::GaussianDGe4 => Ok(high_dim_candidates(param as usize, beta)?
            .into_iter()
            .map(|c| (c.label, gaussian_profile(c.variance, xs)))
            .collect()),
        ProfileKind::Stable32 => {
            let value = xs.iter().map(|&x| stable32_density(param, 1.0, x)).collect();
            Ok(vec![(
                "stable_3_2".into(),
                DistributionTable {
                    law: "stable_3_2".into(),
                    kind: "density".into(),
                    params: serde_json::json!({ "c": param }),
                    tolerance: 1e-8,
                    x: xs.to_vec(),
                    value,
                },
            )])
        }
    }
}

/// `F(s) = Σ_{j ≤ L²} (1 - cos(s j / L²)) t_j / j`, i.e. `-log|CF|` of
/// the particles in loops of length at most `L²` at frequency `s/L²`.
pub fn short_loop_levy_exponent(weights: &[f64], l: f64, s: f64) -> f64 {
    let l2 = l * l;
    let cut = (l2.floor() as usize).min(weights.len());
    crate::numeric::ksum((1..=cut).map(|j| {
        let x = s * j as f64 / l2;
        // 1 - cos x without cancellation
        2.0 * (0.5 * x).sin().powi(2) * weights[j - 1] / j as f64
    }))
}

/// Euler–Maclaurin lattice term of [`short_loop_levy_exponent`] in
/// `d = 3`: `a₀ β^{-3/2} ζ(1/2) s² / (2L)`.
pub fn lattice_correction(a0: f64, beta: f64, l: f64, s: f64) -> f64 {
    a0 * beta.powf(-1.5) * crate::special::zeta(0.5) * s * s / (2.0 * l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableFit {
    pub index: f64,
    pub constant: f64,
    pub offset: f64,
    pub residual: f64,
}

fn fit_fixed_index(s: &[f64], y: &[f64], alpha: f64) -> (f64, f64, f64) {
    let n = s.len() as f64;
    let xs: Vec<f64> = s.iter().map(|v| v.powf(alpha)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(y).map(|(x, v)| (x - mx) * (v - my)).sum();
    let c = sxy / sxx;
    let b = my - c * mx;
    let r: f64 = xs.iter().zip(y).map(|(x, v)| (c * x + b - v).powi(2)).sum();
    (c, b, r)
}

/// Least-squares fit of `y ≈ c s^α + b` over `α ∈ [lo, hi]`: grid scan
/// followed by golden-section refinement.
pub fn fit_stable_index(s: &[f64], y: &[f64], lo: f64, hi: f64) -> Result<StableFit> {
    if s.len() < 4 || s.len() != y.len() {
        return Err(Error::Domain("stable fit needs at least 4 matched points".into()));
    }
    let steps = 1000;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=steps {
        let a = lo + (hi - lo) * i as f64 / steps as f64;
        let r = fit_fixed_index(s, y, a).2;
        if r < best.1 {
            best = (a, r);
        }
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let d = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((best.0 - d).max(lo), (best.0 + d).min(hi));
    for _ in 0..100 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if fit_fixed_index(s, y, x1).2 < fit_fixed_index(s, y, x2).2 {
            b = x2;
        } else {
            a = x1;
        }
    }
    let index = 0.5 * (a + b);
    let (constant, offset, residual) = fit_fixed_index(s, y, index);
    Ok(StableFit { index, constant, offset, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Geometry;
    use proptest::prelude::*;

    #[test]
    fn single_eigenvalue_cf() {
        let lam = 2.5;
        let sm = SpectralMeasure::from_eigenvalues(&[lam], 0.0).unwrap();
        for t in [-3.0, -0.5, 0.7, 4.0] {
            let got = fredholm_log_cf(&sm, t).exp();
            let want = Complex64::new(1.0, -t / lam).inv() * Complex64::new(0.0, -t / lam).exp();
            assert!((got - want).norm() < 1e-14);
        }
        assert_eq!(fredholm_log_cf(&sm, 0.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_mode_rejected() {
        assert!(SpectralMeasure::new(&Geometry::torus(3), 100).is_err());
        assert!(SpectralMeasure::from_eigenvalues(&[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn dirichlet_cube_variance() {
        let g = Geometry::dirichlet_box(3);
        let sm = SpectralMeasure::new(&g, 1 << 12).unwrap();
        // direct lattice sum π⁻⁴ Σ |k|⁻⁴ over the cube k ≤ kmax; the rest
        // lies outside the ball of radius kmax
        let kmax = 200i64;
        let mut acc = KahanSum::new();
        for a in 1..=kmax {
            for b in 1..=kmax {
                for c in 1..=kmax {
                    let m = (a * a + b * b + c * c) as f64;
                    acc.add(1.0 / (m * m));
                }
            }
        }
        let direct = acc.value() / PI.powi(4);
        let rest = 0.5 * PI / ((kmax - 2) as f64 * PI.powi(4));
        let v = sm.variance();
        assert!(v >= direct && v <= direct + rest, "{v} {direct}");
        assert!(sm.tail_variance < 0.05 * sm.variance());
    }

    #[test]
    fn modulus_identity_and_hermitian() {
        let sm = SpectralMeasure::new(&Geometry::dirichlet_box(3), 300).unwrap();
        for t in [0.3, 2.0, 11.0] {
            let l = fredholm_log_cf(&sm, t);
            let m: f64 = sm.levels.iter().map(|&(_, lam, c)| -0.5 * c * (1.0 + (t / lam).powi(2)).ln()).sum::<f64>()
                - 0.5 * sm.tail_variance * t * t;
            assert!((l.re - m).abs() < 1e-12);
            let lm = fredholm_log_cf(&sm, -t);
            assert!((lm - l.conj()).norm() < 1e-12);
            assert!(l.re <= 0.0);
        }
    }

    #[test]
    fn chi_zeta_cdf_is_a_cdf() {
        let sm = SpectralMeasure::new(&Geometry::dirichlet_box(3), 1 << 10).unwrap();
        let chi = chi_zeta(&sm).unwrap();
        let xs: Vec<f64> = (0..=60).map(|i| -0.45 + 0.03 * i as f64).collect();
        let t = chi.cdf_table(&xs);
        assert!(t.value.windows(2).all(|p| p[1] >= p[0] - 1e-10));
        assert!(t.value[0] < 1e-6 && t.value[60] > 1.0 - 1e-6);
        // mean zero and variance from the density
        let m1 = integrate(|x| x * chi.pdf(x), -0.5, 2.0, 60, 16);
        let m2 = integrate(|x| x * x * chi.pdf(x), -0.5, 2.0, 60, 16);
        assert!(m1.abs() < 1e-7);
        assert!((m2 - sm.variance()).abs() < 1e-7);
    }

    #[test]
    fn gamma_law_by_gil_pelaez() {
        // one level of multiplicity k: Gamma(k, 1/λ) - k/λ
        let (lam, k) = (3.0, 30u32);
        let sm = SpectralMeasure { levels: vec![(1, lam, k as f64)], tail_variance: 0.0 };
        let chi = chi_zeta(&sm).unwrap();
        for x in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let y = lam * (x + k as f64 / lam);
            let mut term = 1.0;
            let mut sum = 0.0;
            for i in 0..k {
                if i > 0 {
                    term *= y / i as f64;
                }
                sum += term;
            }
            let exact = 1.0 - (-y).exp() * sum;
            assert!((chi.cdf(x) - exact).abs() < 1e-9, "{x}: {} {exact}", chi.cdf(x));
        }
    }

    #[test]
    fn dickman_values() {
        let d = Dickman::new(12.0).unwrap();
        assert!((d.rho(2.0).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-10);
        assert!((d.rho(3.0).unwrap() - 0.048_608_388_291_131_6).abs() < 1e-10);
        assert!((d.rho(4.0).unwrap() - 0.004_910_925_647_760_83).abs() < 1e-11);
        assert!((d.rho(5.0).unwrap() - 3.547_247_004_560_40e-4).abs() < 1e-12);
        assert!((d.p1(0.5).unwrap() - 0.561_459_483_566_885).abs() < 1e-12);
        assert!(d.rho(12.5).is_err() && d.rho(-1.0).is_err());
        let total = integrate(|u| d.p1(u).unwrap(), 0.0, 12.0, 240, 16);
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dickman_laplace_oracle() {
        let d = Dickman::new(30.0).unwrap();
        for s in [0.5, 1.0, 2.0] {
            let num = integrate(|u| (-s * u).exp() * d.p1(u).unwrap(), 0.0, 30.0, 600, 16);
            assert!((num - dickman_laplace(s)).abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn dickman_cos_oracle() {
        let d = Dickman::new(12.0).unwrap();
        let terms = 1 << 18;
        for x in [0.5, 1.5, 2.5] {
            let v = p1_cos_inversion(x, 40.0, terms);
            assert!((v - d.p1(x).unwrap()).abs() < 1e-4, "{x}: {v}");
        }
    }

    #[test]
    fn golomb_dickman_value() {
        assert!((golomb_dickman() - 0.624_329_988_543_550_9).abs() < 1e-9);
        let d = Dickman::new(40.0).unwrap();
        // E[L₁] = ∫_0^1 (1 - ρ(1/x)) dx
        let m = integrate(|x| 1.0 - d.pd1_largest_cdf(x).unwrap(), 0.0, 1.0, 200, 16);
        assert!((m - golomb_dickman()).abs() < 1e-8);
    }

    #[test]
    fn pd1_monte_carlo() {
        let r = pd1_reference(400_000, 7, 50);
        assert!((r.mean_ranked[0] - golomb_dickman()).abs() < 3e-3);
        assert!((r.first_stick_mean - 0.5).abs() < 3e-3);
        assert!(r.mean_ranked[0] > r.mean_ranked[1] && r.mean_ranked[1] > r.mean_ranked[2]);
        let d = Dickman::new(60.0).unwrap();
        for (x, c) in r.cdf_grid.iter().zip(&r.largest_cdf) {
            assert!((c - d.pd1_largest_cdf(*x).unwrap()).abs() < 4e-3);
        }
    }

    #[test]
    fn profiles() {
        let xs: Vec<f64> = (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect();
        for (_, t) in local_profiles(ProfileKind::GaussianTiltedD3, 1.0, 0.25, &xs).unwrap() {
            let sd = t.params["variance"].as_f64().unwrap().sqrt();
            let total = integrate(|x| normal_pdf(x, sd * sd), -12.0 * sd, 12.0 * sd, 64, 16);
            assert!((total - 1.0).abs() < 1e-10);
        }
        let c = high_dim_candidates(4, 1.0).unwrap();
        assert!((c[0].variance * c[1].variance - 1.0).abs() < 1e-12);
        assert!(high_dim_candidates(3, 1.0).is_err());
        assert_eq!(closest_candidate(0.01, &c), 1);
        let total = integrate(|x| stable32_density(1.0, 1.0, x), -40.0, 40.0, 400, 16);
        assert!((total - 1.0).abs() < 2e-3);
    }

    #[test]
    fn stable_fit_synthetic() {
        let s: Vec<f64> = crate::numeric::geomspace(5.0, 100.0, 24);
        let y: Vec<f64> = s.iter().map(|v| 0.7 * v.powf(1.5) - 2.0).collect();
        let f = fit_stable_index(&s, &y, 1.0, 2.0).unwrap();
        assert!((f.index - 1.5).abs() < 1e-8 && (f.constant - 0.7).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn cf_modulus_bounded(t in -50.0f64..50.0) {
            let sm = SpectralMeasure::new(&Geometry::dirichlet_box(3), 200).unwrap();
            prop_assert!(fredholm_log_cf(&sm, t).re <= 1e-15);
        }

        #[test]
        fn dickman_nonincreasing(u in 0.0f64..11.0, du in 0.0f64..1.0) {
            let d = Dickman::with_resolution(12.0, 512).unwrap();
            prop_assert!(d.rho(u + du).unwrap() <= d.rho(u).unwrap() + 1e-15);
        }

        #[test]
        fn gem_parts_sum_to_one(seed in 0u64..1000) {
            let mut rng = SeedSpec::new(seed, 0).rng();
            let p = gem_ranked(&mut rng, 1e-12);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(p.iter().all(|x| *x > 0.0 && *x < 1.0));
        }
    }
}
