//! Exact law of the particle number `N = Σ_j j·Poi(θ_j)` through the
//! compound-Poisson recursion `n P_n = Σ_j j θ_j P_{n-j}`, and the
//! quantities built on it: partition functions, the size-biased loop
//! removal law, the reduced density matrix and tilt identities.
//!
//! All probabilities are carried as logarithms.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limitlaws::Dickman;
use crate::numeric::{bisect, ksum, log_sum_exp, KahanSum};
use crate::special::EULER_GAMMA;
use crate::spectral::{heat_kernel, heat_trace, Geometry};
use crate::weights::{build_weights, density_and_pressure, ModelParams, WeightTable};

/// Inclusive range of admitted loop lengths; `min > max` is the empty window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub min: usize,
    pub max: usize,
}

impl Window {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    /// All lengths `1..=n`.
    pub fn full(n: usize) -> Self {
        Self { min: 1, max: n }
    }

    pub fn is_empty(&self) -> bool {
        self.min > self.max
    }

    pub fn contains(&self, j: usize) -> bool {
        j >= self.min && j <= self.max
    }

    fn check(&self, w: &WeightTable) -> Result<()> {
        if !self.is_empty() && (self.min == 0 || self.max > w.len()) {
            return Err(Error::Domain(format!(
                "window [{}, {}] not inside [1, {}]",
                self.min,
                self.max,
                w.len()
            )));
        }
        Ok(())
    }
}

/// Log-probabilities `log P(N_window = n)` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfTable {
    pub weights_hash: String,
    pub window: Window,
    pub logp: Vec<f64>,
    /// `1 - Σ_{n ≤ n_max} P_n`.
    pub deficit: f64,
}

impl PmfTable {
    pub fn n_max(&self) -> usize {
        self.logp.len() - 1
    }

    pub fn log_prob(&self, n: usize) -> f64 {
        self.logp.get(n).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.log_prob(n).exp()
    }

    fn finish(weights_hash: String, window: Window, logp: Vec<f64>) -> Self {
        let mass = ksum(logp.iter().map(|x| x.exp()));
        Self { weights_hash, window, logp, deficit: 1.0 - mass }
    }
}

/// `log P_0 = -Σ_{j ∈ window} θ_j`.
fn log_void(w: &WeightTable, window: Window) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    -ksum((window.min..=window.max).map(|j| w.theta(j)))
}

/// Exact pmf by the direct `O(n_max · |window|)` recursion.
///
/// `log P_n` reaches magnitudes of several thousand, where one rounding of
/// the stored value costs `~10⁻¹³` and would accumulate along the recursion.
/// Each `log P_n` is therefore carried as an unevaluated pair `hi + lo` and
/// every step only rounds an increment of order one.
pub fn compound_pmf(w: &WeightTable, window: Window, n_max: usize) -> Result<PmfTable> {
    window.check(w)?;
    let mut hi = vec![f64::NEG_INFINITY; n_max + 1];
    let mut lo = vec![0.0; n_max + 1];
    hi[0] = log_void(w, window);
    if !window.is_empty() {
        let lw: Vec<f64> = (0..=window.max).map(|j| if j == 0 { 0.0 } else { w.weight(j).ln() }).collect();
        let mut terms = Vec::with_capacity(window.max);
        let mut reference = hi[0];
        for n in 1..=n_max {
            if n < window.min {
                continue;
            }
            let top = window.max.min(n);
            terms.clear();
            let mut m = f64::NEG_INFINITY;
            for j in window.min..=top {
                if hi[n - j] == f64::NEG_INFINITY {
                    continue;
                }
                let x = (hi[n - j] - reference) + (lw[j] + lo[n - j]);
                m = m.max(x);
                terms.push(x);
            }
            if m == f64::NEG_INFINITY {
                continue;
            }
            let s: f64 = terms.iter().map(|x| (x - m).exp()).sum();
            let (h, l) = two_sum(reference, m + s.ln() - (n as f64).ln());
            hi[n] = h;
            lo[n] = l;
            reference = h;
        }
    }
    let logp = hi.iter().zip(&lo).map(|(h, l)| h + l).collect();
    Ok(PmfTable::finish(w.hash().to_string(), window, logp))
}

/// Error-free sum: `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Largest relative recursion residual `|n P_n - Σ_j w_j P_{n-j}| / (n P_n)`
/// over all `n ≥ 1` with `P_n > 0`.
pub fn recursion_residual(pmf: &PmfTable, w: &WeightTable) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..=pmf.n_max() {
        let lpn = pmf.logp[n];
        if lpn == f64::NEG_INFINITY {
            continue;
        }
        let mut acc = KahanSum::new();
        for j in pmf.window.min..=pmf.window.max.min(n) {
            acc.add((w.weight(j).ln() + pmf.logp[n - j] - lpn - (n as f64).ln()).exp());
        }
        worst = worst.max((acc.value() - 1.0).abs());
    }
    worst
}

/// Bound on the tilted mass folded back by the FFT wrap-around.
pub const ALIAS_TOLERANCE: f64 = 1e-20;

/// Largest FFT length as a multiple of `n_max + 1`.
const MAX_FFT_FACTOR: usize = 64;

/// The same pmf computed by saddle-point FFTs.
///
/// For a radius `r` the tilted coefficients `a_m = [z^m] exp(F(rz) - F(r))`,
/// with `F(z) = Σ_j θ_j z^j`, form a probability vector whose mean is set
/// by `r`. Two FFTs of length `M ≥ 4 n_max` give all of them, with `M`
/// enlarged until the wrapped-around tail is negligible. Radii are
/// placed so that the tilted means step through `0..n_max` in strides of
/// one standard deviation, and each `P_n` is read off the radius under which
/// it is most probable.
pub fn compound_pmf_fft(w: &WeightTable, window: Window, n_max: usize) -> Result<PmfTable> {
    window.check(w)?;
    let lp0 = log_void(w, window);
    let mut logp = vec![f64::NEG_INFINITY; n_max + 1];
    logp[0] = lp0;
    if window.is_empty() || n_max == 0 || window.min > n_max {
        return Ok(PmfTable::finish(w.hash().to_string(), window, logp));
    }
    let top = window.max.min(n_max);
    let ltheta: Vec<(usize, f64)> = (window.min..=top).map(|j| (j, w.theta(j).ln())).collect();

    let moments = |rho: f64| -> (f64, f64) {
        let mut mean = KahanSum::new();
        let mut second = KahanSum::new();
        for &(j, lt) in &ltheta {
            let c = (lt + j as f64 * rho).exp();
            mean.add(j as f64 * c);
            second.add((j * j) as f64 * c);
        }
        (mean.value(), second.value())
    };
    let log_f = |rho: f64| log_sum_exp(&ltheta.iter().map(|&(j, lt)| lt + j as f64 * rho).collect::<Vec<_>>());
    let solve = |target: f64| bisect(|r| moments(r).0 - target, -60.0, 60.0, 1e-13);

    // Coefficients at m ≥ M wrap onto m - M. The tilted tail is largest at
    // the last radius, so M is doubled until the Chernoff bound
    // P(N ≥ M - n_max) ≤ exp(F(re^s) - F(r) - s(M - n_max)) drops below
    // ALIAS_TOLERANCE there.
    let rho_top = solve(n_max as f64);
    let f_top = log_f(rho_top).exp();
    let log_tail = |m0: f64| {
        (1..=400)
            .map(|k| {
                let s = 1e-3 * 1.03f64.powi(k);
                let f_s = log_f(rho_top + s);
                if f_s > 700.0 {
                    f64::INFINITY
                } else {
                    f_s.exp() - f_top - s * m0
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut m_len = (4 * (n_max + 1)).next_power_of_two().max(64);
    while m_len < MAX_FFT_FACTOR * (n_max + 1) && log_tail((m_len - n_max) as f64) > ALIAS_TOLERANCE.ln() {
        m_len *= 2;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m_len);
    let inv = planner.plan_fft_inverse(m_len);

    let mut best = vec![0.0f64; n_max + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); m_len];
    let mut center = window.min as f64;
    loop {
        let target = center.min(n_max as f64);
        let rho = solve(target);
        let (_, second) = moments(rho);
        for z in buf.iter_mut() {
            *z = Complex64::new(0.0, 0.0);
        }
        let mut f_r = KahanSum::new();
        for &(j, lt) in &ltheta {
            let c = (lt + j as f64 * rho).exp();
            buf[j] = Complex64::new(c, 0.0);
            f_r.add(c);
        }
        let f_r = f_r.value();
        fwd.process(&mut buf);
        for z in buf.iter_mut() {
            *z = (*z - f_r).exp();
        }
        inv.process(&mut buf);
        let scale = 1.0 / m_len as f64;
        for n in 1..=n_max {
            let a = buf[n].re * scale;
            if a > best[n] {
                best[n] = a;
                logp[n] = a.ln() - n as f64 * rho + f_r + lp0;
            }
        }
        if target >= n_max as f64 {
            break;
        }
        // variance of a compound Poisson law: Σ j² θ_j r^j
        let sigma = second.sqrt();
        center = target + sigma.max(1.0);
    }
    // coefficients that only ever appeared as FFT round-off are unresolved
    for n in 1..=n_max {
        if best[n] < 1e-200 {
            logp[n] = f64::NEG_INFINITY;
        }
    }
    Ok(PmfTable::finish(w.hash().to_string(), window, logp))
}

/// Size-biased removal law: entry `j - 1` is
/// `P(J = j) = w_j P_{n-j} / (n P_n)`, the length of the loop containing a
/// uniformly chosen particle given `N = n`.
pub fn removal_distribution(pmf: &PmfTable, w: &WeightTable, n: usize) -> Result<Vec<f64>> {
    let lpn = pmf.log_prob(n);
    if n == 0 || n > pmf.n_max() || lpn == f64::NEG_INFINITY {
        return Err(Error::NullEvent(n));
    }
    let shift = lpn + (n as f64).ln();
    Ok((1..=n)
        .map(|j| {
            if pmf.window.contains(j) {
                (w.weight(j).ln() + pmf.logp[n - j] - shift).exp()
            } else {
                0.0
            }
        })
        .collect())
}

/// `log Z = log P(N = ⌊ρL^d⌋)` with loops up to the canonical cutoff.
pub fn partition_function(params: &ModelParams) -> Result<f64> {
    let n = params.particles();
    let w = build_weights(params, 0.0)?;
    let pmf = compound_pmf(&w, Window::full(w.len()), n)?;
    Ok(pmf.log_prob(n))
}

/// `Σ_{r ∈ window} w_r P_{n-r} / P_n`, the trace of the reduced density
/// matrix in spectral form. Equal to `n` by the recursion.
pub fn rdm_trace(pmf: &PmfTable, w: &WeightTable, n: usize) -> Result<f64> {
    let lpn = pmf.log_prob(n);
    if lpn == f64::NEG_INFINITY {
        return Err(Error::NullEvent(n));
    }
    let top = pmf.window.max.min(n);
    Ok(ksum((pmf.window.min..=top).map(|r| (w.weight(r).ln() + pmf.logp[n - r] - lpn).exp())))
}

/// Reduced density matrix
/// `γ(x, y) = Σ_r e^{βμr} p_{βr}(x, y) P_{n-r} / P_n` on the domain of side
/// `L`.
pub fn gamma_rdm(pmf: &PmfTable, w: &WeightTable, n: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    let params = w
        .params
        .ok_or_else(|| Error::Domain("density matrix needs a geometric weight table".into()))?;
    let lpn = pmf.log_prob(n);
    if lpn == f64::NEG_INFINITY {
        return Err(Error::NullEvent(n));
    }
    let top = pmf.window.max.min(n);
    let mut acc = KahanSum::new();
    for r in pmf.window.min..=top {
        let lr = pmf.logp[n - r] - lpn + w.beta * w.mu * r as f64;
        if lr < -745.0 {
            continue;
        }
        let k = heat_kernel(&params.geometry, params.l, w.beta * r as f64, x, y)?;
        acc.add(k * lr.exp());
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltCheck {
    pub mu: f64,
    pub n: usize,
    /// `log P_μ(n) - [βμn - (p(μ) - p(0)) + log P_0(n)]`.
    pub residual: f64,
    /// `Σ_{j > n} e^{βμj} t_j / j`, loops beyond the table included.
    pub tail_sum: f64,
    /// `tail_sum + log(-βμ n)`.
    pub tail_constant: f64,
    /// `-1` if `tail_constant` is nearer `-γ`, `+1` if nearer `+γ`.
    pub sign: i8,
}

/// `Σ_{j > n} x^j t_j / j` with `x = e^{βμ}`. Terms are summed exactly until
/// `t_j` has collapsed onto its ground-state asymptote `m₀ e^{-λ₁βj/L²}`,
/// and the geometric remainder is closed in logarithmic form.
fn tilted_tail(params: &ModelParams, mu: f64, n: usize) -> Result<f64> {
    let g: Geometry = params.geometry;
    let beta = params.beta;
    let s = beta / (params.l * params.l);
    let m0 = match g.bc {
        crate::spectral::Boundary::Dirichlet => 1.0,
        _ => g.zero_modes() as f64,
    };
    let ground = g.first_eigenvalue() * s;
    // x' = e^{βμ - λ₁β/L²}
    let lx = beta * mu - ground;
    let mut acc = KahanSum::new();
    let mut j = n + 1;
    loop {
        let t = heat_trace(&g, s * j as f64)?;
        let asym = m0 * (-ground * j as f64).exp();
        acc.add((beta * mu * j as f64).exp() * t / j as f64);
        if (t - asym).abs() <= 1e-17 * asym || j > n + 50_000_000 {
            break;
        }
        j += 1;
    }
    // Σ_{k>j} x'^k / k = -log(1 - x') - Σ_{k ≤ j} x'^k / k
    let mut head = KahanSum::new();
    head.add(-(-lx.exp_m1()).ln());
    for k in 1..=j {
        head.add(-(lx * k as f64).exp() / k as f64);
    }
    acc.add(m0 * head.value());
    Ok(acc.value())
}

/// Verify the exponential-tilt identity at `(μ, n)` and evaluate the
/// cut-off tail constant.
pub fn tilt_identity_check(params: &ModelParams, mu: f64, n: usize) -> Result<TiltCheck> {
    let base = build_weights(params, 0.0)?;
    let tilted = base.with_mu(mu)?;
    let window = Window::full(base.len());
    let p0 = compound_pmf(&base, window, n)?;
    let pm = compound_pmf(&tilted, window, n)?;
    let (_, press0) = density_and_pressure(&base);
    let (_, press_mu) = density_and_pressure(&tilted);
    let predicted = params.beta * mu * n as f64 - (press_mu - press0) + p0.log_prob(n);
    let residual = if mu == 0.0 { pm.log_prob(n) - p0.log_prob(n) } else { pm.log_prob(n) - predicted };
    let (tail_sum, tail_constant, sign) = if mu < 0.0 {
        let tail = tilted_tail(params, mu, n)?;
        let c = tail + (-params.beta * mu * n as f64).ln();
        let sign = if (c + EULER_GAMMA).abs() <= (c - EULER_GAMMA).abs() { -1 } else { 1 };
        (tail, c, sign)
    } else {
        (f64::INFINITY, f64::NAN, 0)
    };
    Ok(TiltCheck { mu, n, residual, tail_sum, tail_constant, sign })
}

/// Mesoscopic window `[⌈αL²⌉, ⌊M L² log L⌋]`.
pub fn mesoscopic_window(l: f64, alpha: f64, m: f64) -> Window {
    let l2 = l * l;
    Window::new((alpha * l2).ceil() as usize, (m * l2 * l.ln()).floor() as usize)
}

/// Exact pmf of the mesoscopic particle number up to `n_max`. The weight
/// table is extended as far as the window reaches.
pub fn mesoscopic_pmf(params: &ModelParams, alpha: f64, m: f64, n_max: usize) -> Result<(PmfTable, WeightTable)> {
    let window = mesoscopic_window(params.l, alpha, m);
    if window.is_empty() {
        return Err(Error::Domain("empty mesoscopic window".into()));
    }
    let p = params.with_cutoff(params.cutoff().max(window.max));
    let w = build_weights(&p, 0.0)?;
    Ok((compound_pmf(&w, window, n_max)?, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesoRow {
    pub k: usize,
    pub prob: f64,
    /// `P · αL²`.
    pub scaled_lower: f64,
    /// `P · U` with `U` the upper window edge.
    pub scaled_upper: f64,
    /// `e^{-λ₁kβ/L²} p₁(k/U)`.
    pub reference: f64,
}

/// Compare the mesoscopic pmf against the Dickman profile on `ks`.
pub fn meso_compare(
    pmf: &PmfTable,
    params: &ModelParams,
    alpha: f64,
    dickman: &Dickman,
    ks: impl IntoIterator<Item = usize>,
) -> Result<Vec<MesoRow>> {
    let l2 = params.l * params.l;
    let upper = pmf.window.max as f64;
    let lam1 = params.geometry.first_eigenvalue();
    ks.into_iter()
        .map(|k| {
            let prob = pmf.prob(k);
            let p1 = dickman.p1(k as f64 / upper)?;
            Ok(MesoRow {
                k,
                prob,
                scaled_lower: prob * alpha * l2,
                scaled_upper: prob * upper,
                reference: (-lam1 * k as f64 * params.beta / l2).exp() * p1,
            })
        })
        .collect()
}

/// Brute-force `P(N = n)` by enumerating integer partitions of every
/// `k ≤ n_max`; reference oracle for small cases.
pub fn enumerate_pmf(weights: &[f64], window: Window, n_max: usize) -> Vec<f64> {
    fn rec(rest: usize, max_part: usize, window: Window, theta: &dyn Fn(usize) -> f64, acc: f64, out: &mut f64) {
        if rest == 0 {
            *out += acc;
            return;
        }
        for j in (window.min..=max_part.min(rest).min(window.max)).rev() {
            // choose multiplicity c ≥ 1 of part j, then parts < j
            let mut term = acc;
            let mut c = 1;
            while c * j <= rest {
                term *= theta(j) / c as f64;
                rec(rest - c * j, j - 1, window, theta, term, out);
                c += 1;
            }
        }
    }
    let theta = |j: usize| if j >= 1 && j <= weights.len() { weights[j - 1] / j as f64 } else { 0.0 };
    let void: f64 = if window.is_empty() { 0.0 } else { (window.min..=window.max).map(theta).sum() };
    (0..=n_max)
        .map(|k| {
            let mut s = 0.0;
            if k == 0 {
                s = 1.0;
            } else if !window.is_empty() {
                rec(k, window.max, window, &theta, 1.0, &mut s);
            }
            s * (-void).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rel_diff;
    use crate::spectral::Geometry;
    use proptest::prelude::*;

    #[test]
    fn poisson_special_case() {
        let theta = 2.5;
        let w = WeightTable::from_values(vec![theta]);
        let pmf = compound_pmf(&w, Window::full(1), 20).unwrap();
        let mut lf = 0.0;
        for n in 0..=20usize {
            if n > 0 {
                lf += (n as f64).ln();
            }
            let exact = -theta + n as f64 * theta.ln() - lf;
            assert!((pmf.logp[n] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn two_weight_example() {
        let w = WeightTable::from_values(vec![1.0, 1.0]);
        let pmf = compound_pmf(&w, Window::full(2), 4).unwrap();
        assert!((pmf.prob(2) - 0.223_130_2).abs() < 1e-7);
        assert!(rel_diff(pmf.prob(2), (-1.5f64).exp()) < 1e-14);
        let rd = removal_distribution(&pmf, &w, 2).unwrap();
        assert!((rd[0] - 0.5).abs() < 1e-14 && (rd[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn empty_window_has_no_mass_above_zero() {
        let w = WeightTable::from_values(vec![1.0, 2.0, 3.0]);
        let pmf = compound_pmf(&w, Window::new(3, 2), 5).unwrap();
        assert_eq!(pmf.logp[0], 0.0);
        assert!(pmf.logp[1..].iter().all(|x| *x == f64::NEG_INFINITY));
        assert!(compound_pmf(&w, Window::new(1, 4), 5).is_err());
    }

    #[test]
    fn removal_needs_positive_mass() {
        let w = WeightTable::from_values(vec![0.0, 1.0]);
        let pmf = compound_pmf(&w, Window::full(2), 5).unwrap();
        assert!(matches!(removal_distribution(&pmf, &w, 1), Err(Error::NullEvent(1))));
    }

    #[test]
    fn fft_path_matches_direct_on_a_critical_table() {
        let p = ModelParams::critical(Geometry::torus(3), 1.0, 16.0);
        let w = build_weights(&p, 0.0).unwrap();
        let n = 600;
        let a = compound_pmf(&w, Window::full(w.len()), n).unwrap();
        let b = compound_pmf_fft(&w, Window::full(w.len()), n).unwrap();
        for k in 0..=n {
            assert!(rel_diff(a.prob(k), b.prob(k)) < 1e-10, "{k}: {} {}", a.logp[k], b.logp[k]);
        }
    }

    #[test]
    fn residual_and_normalisation() {
        let p = ModelParams::critical(Geometry::dirichlet_box(3), 1.0, 8.0);
        let w = build_weights(&p, 0.0).unwrap();
        let pmf = compound_pmf(&w, Window::full(w.len()), 400).unwrap();
        assert!(recursion_residual(&pmf, &w) < 1e-12);
        assert!(pmf.deficit >= -1e-12 && pmf.deficit < 1e-6);
        assert!((pmf.logp[0] + (1..=w.len()).map(|j| w.theta(j)).sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn trace_identity_and_symmetry() {
        let p = ModelParams::critical(Geometry::dirichlet_box(3), 1.0, 6.0);
        let n = p.particles();
        let w = build_weights(&p, 0.0).unwrap();
        let pmf = compound_pmf(&w, Window::full(w.len()), n).unwrap();
        let tr = rdm_trace(&pmf, &w, n).unwrap();
        assert!((tr - n as f64).abs() < 1e-10 * n as f64);
        let x = [1.0, 2.0, 3.0];
        let y = [4.0, 2.5, 1.5];
        let a = gamma_rdm(&pmf, &w, n, &x, &y).unwrap();
        let b = gamma_rdm(&pmf, &w, n, &y, &x).unwrap();
        assert!(rel_diff(a, b) < 1e-12);
    }

    #[test]
    fn tilt_identity_small() {
        let p = ModelParams::critical(Geometry::torus(3), 1.0, 6.0);
        let n = p.particles();
        let c = tilt_identity_check(&p, 0.0, n).unwrap();
        assert_eq!(c.residual, 0.0);
        for mu in [-1.0, -0.1, -0.01] {
            let c = tilt_identity_check(&p, mu, n).unwrap();
            assert!(c.residual.abs() < 1e-12, "{mu}: {}", c.residual);
        }
        // the O(1/n) correction to the tail constant needs a larger system
        let p = ModelParams::critical(Geometry::torus(3), 1.0, 32.0);
        let c = tilt_identity_check(&p, -1e-9, p.particles()).unwrap();
        assert_eq!(c.sign, -1);
        assert!((c.tail_constant + EULER_GAMMA).abs() < 1e-3);
    }

    #[test]
    fn mesoscopic_void_probability() {
        let p = ModelParams::critical(Geometry::torus(3), 1.0, 6.0);
        let (pmf, w) = mesoscopic_pmf(&p, 1.0, 1.0, 10).unwrap();
        let win = pmf.window;
        assert_eq!(win, Window::new(36, (36.0 * 6f64.ln()).floor() as usize));
        let s: f64 = (win.min..=win.max).map(|j| w.theta(j)).sum();
        assert!((pmf.logp[0] + s).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn recursion_matches_enumeration(ws in proptest::collection::vec(0.01f64..3.0, 1..10), lo in 1usize..3) {
            let n_max = 10;
            let window = Window::new(lo, ws.len());
            let w = WeightTable::from_values(ws.clone());
            let pmf = compound_pmf(&w, window, n_max).unwrap();
            let brute = enumerate_pmf(&ws, window, n_max);
            for n in 0..=n_max {
                if brute[n] > 0.0 {
                    prop_assert!(rel_diff(pmf.prob(n), brute[n]) < 1e-10);
                } else {
                    prop_assert_eq!(pmf.logp[n], f64::NEG_INFINITY);
                }
            }
        }

        #[test]
        fn removal_law_sums_to_one(ws in proptest::collection::vec(0.05f64..4.0, 2..30), n in 1usize..40) {
            let w = WeightTable::from_values(ws.clone());
            let pmf = compound_pmf(&w, Window::full(ws.len()), n).unwrap();
            let rd = removal_distribution(&pmf, &w, n).unwrap();
            prop_assert!((rd.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
