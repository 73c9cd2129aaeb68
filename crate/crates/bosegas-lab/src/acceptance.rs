//! Acceptance checks. Each criterion collects one or more numeric items
//! with pinned thresholds, plus informational notes that do not affect the
//! verdict.

use std::f64::consts::PI;
use std::time::Instant;

use bosegas::fit::{fit_exponent_log, linear_fit, FitModel};
use bosegas::limitlaws::{
    chi_zeta, closest_candidate, fit_stable_index, fredholm_log_cf, high_dim_candidates, lattice_correction,
    p1_cos_inversion, short_loop_levy_exponent, tilted_d3_candidates, Dickman, GammaSum, SpectralMeasure,
};
use bosegas::numeric::{geomspace, rel_diff, KahanSum};
use bosegas::partition::{
    compound_pmf, compound_pmf_fft, enumerate_pmf, mesoscopic_pmf, partition_function, rdm_trace,
    tilt_identity_check, Window,
};
use bosegas::sampler::{mc_estimate, ConditionedSampler, SeedSpec};
use bosegas::special::zeta;
use bosegas::spectral::{duality_gap, mp_fit, mp_reference, default_mp_grid, theta_1d_image, theta_1d_spectral, Boundary, Geometry};
use bosegas::weights::{build_weights, expected_particles, rescaled_tilt, solve_mu_table, ModelParams, WeightTable};
use bosegas::Result;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{Cell, Table};

pub const GAMMA_TILDE: f64 = 0.577_215_664_9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub label: String,
    pub measured: f64,
    pub threshold: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub title: String,
    pub items: Vec<CheckItem>,
    pub notes: Vec<String>,
    pub runtime_s: f64,
    pub budget_s: f64,
}

impl Criterion {
    fn new(id: u32, title: &str, budget_s: f64) -> Self {
        Self { id, title: title.into(), items: Vec::new(), notes: Vec::new(), runtime_s: 0.0, budget_s }
    }

    fn item(&mut self, label: impl Into<String>, measured: f64, threshold: impl Into<String>, passed: bool) {
        self.items.push(CheckItem { label: label.into(), measured, threshold: threshold.into(), passed });
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn values_pass(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| i.passed && !i.measured.is_nan())
    }

    pub fn passed(&self) -> bool {
        self.values_pass() && self.runtime_s <= self.budget_s
    }

    /// One-line verdict.
    pub fn summary(&self) -> String {
        let items: Vec<String> = self
            .items
            .iter()
            .map(|i| format!("{}={:.6e} [{}] {}", i.label, i.measured, i.threshold, if i.passed { "ok" } else { "FAIL" }))
            .collect();
        let budget = if self.budget_s.is_finite() { format!("{:.0}s", self.budget_s) } else { "unbounded".into() };
        format!(
            "{} criterion {:>2} {}: {} | runtime {:.1}s / {budget}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            items.join("; "),
            self.runtime_s,
        )
    }
}

fn timed(mut c: Criterion, f: impl FnOnce(&mut Criterion) -> Result<()>) -> Criterion {
    let start = Instant::now();
    if let Err(e) = f(&mut c) {
        c.item("error", f64::NAN, e.to_string(), false);
    }
    c.runtime_s = start.elapsed().as_secs_f64();
    c
}

fn ratio_in(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

// ---------------------------------------------------------------------------

pub fn theta_duality() -> Criterion {
    timed(Criterion::new(1, "theta duality", 1.0), |c| {
        let ts = geomspace(1e-3, 10.0, 400);
        let mut worst: f64 = 0.0;
        for bc in [Boundary::Periodic, Boundary::Dirichlet, Boundary::Neumann] {
            for &t in &ts {
                worst = worst.max(duality_gap(t, bc)?);
            }
        }
        c.item("sup_rel_gap", worst, "< 1e-12", worst < 1e-12);
        // the Dirichlet image form (S - 1)/2 loses digits once S is close to 1
        let a = theta_1d_spectral(10.0, Boundary::Dirichlet)?;
        let b = theta_1d_image(10.0, Boundary::Dirichlet)?;
        c.note(format!("gap measured on full lattice sums; dirichlet half-sum gap at t=10 is {:.3e}", rel_diff(a, b)));
        Ok(())
    })
}

pub fn mp_coefficients() -> Criterion {
    timed(Criterion::new(2, "MP coefficients", 5.0), |c| {
        let grid = default_mp_grid();
        let torus = mp_fit(&Geometry::torus(3), &grid)?;
        c.item("torus_a1", torus.coeffs.a1.abs(), "|a1| < 1e-6", torus.coeffs.a1.abs() < 1e-6);
        let g = Geometry::dirichlet_box(3);
        let fit = mp_fit(&g, &grid)?;
        let r = mp_reference(&g);
        c.item("dirichlet_a1", fit.coeffs.a1, format!("{:.5} +- 1e-3", r.a1), (fit.coeffs.a1 - r.a1).abs() < 1e-3);
        c.item("dirichlet_a2", fit.coeffs.a2, format!("{:.5} +- 1e-2", r.a2), (fit.coeffs.a2 - r.a2).abs() < 1e-2);
        Ok(())
    })
}

pub fn pmf_exactness(seed: u64) -> Criterion {
    timed(Criterion::new(3, "pmf exactness", 30.0), |c| {
        let mut rng = SeedSpec::new(seed, 3).rng();
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let len = rng.random_range(1..=12usize);
            let ws: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..3.0)).collect();
            let lo = rng.random_range(1..=len);
            let window = Window::new(lo, len);
            let w = WeightTable::from_values(ws.clone());
            let pmf = compound_pmf(&w, window, 12)?;
            let brute = enumerate_pmf(&ws, window, 12);
            for n in 0..=12 {
                let e = if brute[n] > 0.0 {
                    rel_diff(pmf.prob(n), brute[n])
                } else if pmf.logp[n] == f64::NEG_INFINITY {
                    0.0
                } else {
                    1.0
                };
                worst = worst.max(e);
            }
        }
        c.item("enumeration_rel_err", worst, "< 1e-10", worst < 1e-10);
        let p = ModelParams::critical(Geometry::torus(3), 1.0, 56.0);
        let w = build_weights(&p, 0.0)?;
        let n_max = 10_000;
        let a = compound_pmf(&w, Window::full(w.len()), n_max)?;
        let b = compound_pmf_fft(&w, Window::full(w.len()), n_max)?;
        let mut worst: f64 = 0.0;
        for n in 0..=n_max {
            if a.logp[n] > (1e-280f64).ln() {
                worst = worst.max(rel_diff(a.prob(n), b.prob(n)));
            }
        }
        c.item("fft_vs_direct_rel_err", worst, "< 1e-10 up to n=1e4", worst < 1e-10);
        Ok(())
    })
}

pub fn trace_identity() -> Criterion {
    timed(Criterion::new(4, "trace of gamma", 10.0), |c| {
        let mut worst: f64 = 0.0;
        for g in [Geometry::torus(3), Geometry::dirichlet_box(3)] {
            for l in [8.0, 16.0] {
                let p = ModelParams::critical(g, 1.0, l);
                let n = p.particles();
                let w = build_weights(&p, 0.0)?;
                let pmf = compound_pmf(&w, Window::full(w.len()), n)?;
                let tr = rdm_trace(&pmf, &w, n)?;
                worst = worst.max((tr - n as f64).abs() / n as f64);
            }
        }
        c.item("trace_rel_err", worst, "< 1e-10", worst < 1e-10);
        Ok(())
    })
}

pub fn tilt_identity() -> Criterion {
    timed(Criterion::new(5, "tilt identity", 10.0), |c| {
        let p = ModelParams::critical(Geometry::torus(3), 1.0, 32.0);
        let n = p.particles();
        let mut worst: f64 = 0.0;
        for mu in [-1.0, -0.1, -0.01] {
            worst = worst.max(tilt_identity_check(&p, mu, n)?.residual.abs());
        }
        c.item("log_residual", worst, "< 1e-12", worst < 1e-12);
        let mut seq = Vec::new();
        let mut last = None;
        for k in 4..=10 {
            let chk = tilt_identity_check(&p, -(10f64).powi(-k), n)?;
            seq.push(format!("{:.6}", chk.tail_constant));
            last = Some(chk);
        }
        let chk = last.expect("non-empty sweep");
        let gap = (chk.tail_constant.abs() - GAMMA_TILDE).abs();
        c.item("tail_constant_magnitude_gap", gap, "< 1e-3 at mu=-1e-10", gap < 1e-3);
        c.note(format!(
            "tail sum + log(-beta mu n) for mu=-1e-4..-1e-10: [{}]; matching sign {}",
            seq.join(", "),
            if chk.sign < 0 { "-gamma" } else { "+gamma" }
        ));
        Ok(())
    })
}

/// `log Z` over `ls` for one geometry.
pub fn partition_series(g: Geometry, ls: &[f64]) -> Result<Vec<(f64, f64)>> {
    ls.par_iter().map(|&l| Ok((l, partition_function(&ModelParams::critical(g, 1.0, l))?))).collect()
}

/// `log P(N = n)` linearly interpolated between `n = ⌊ρL^d⌋` and `n + 1` to
/// the non-integer mass `ρL^d`.
pub fn interpolated_log_z(p: &ModelParams) -> Result<f64> {
    let n = p.particles();
    let w = build_weights(p, 0.0)?;
    let pmf = compound_pmf(&w, Window::full(w.len()), n + 1)?;
    let frac = p.mass() - n as f64;
    Ok(pmf.logp[n] + frac * (pmf.logp[n + 1] - pmf.logp[n]))
}

/// Distance to `target` never increases along `xs`.
pub fn approaches(xs: &[f64], target: f64) -> bool {
    xs.windows(2).all(|p| (p[1] - target).abs() <= (p[0] - target).abs())
}

pub const DEFAULT_L_GRID: [f64; 6] = [8.0, 12.0, 16.0, 24.0, 32.0, 48.0];

pub fn partition_exponents() -> Criterion {
    timed(Criterion::new(6, "partition exponents", 180.0), |c| {
        let ls = DEFAULT_L_GRID;
        let torus = partition_series(Geometry::torus(3), &ls)?;
        let z = |s: &[(f64, f64)], l: f64| s.iter().find(|p| p.0 == l).map(|p| p.1).unwrap_or(f64::NAN);
        let slope = (z(&torus, 48.0) - z(&torus, 24.0)) / 2f64.ln();
        c.item("torus_slope_24_48", slope, "in [-3.8, -2.5]", (-3.8..=-2.5).contains(&slope));
        let f = fit_exponent_log(&torus, FitModel::Power)?;
        let approach = approaches(&f.local_slopes.iter().map(|s| s.slope).collect::<Vec<_>>(), -3.0);
        c.item("torus_monotone_to_-3", f64::from(u8::from(approach)), "1", approach);
        c.note(format!("torus local slopes {:?}", f.local_slopes.iter().map(|s| s.slope).collect::<Vec<_>>()));
        let interp: Vec<(f64, f64)> =
            ls.par_iter().map(|&l| Ok((l, interpolated_log_z(&ModelParams::critical(Geometry::torus(3), 1.0, l))?))).collect::<Result<_>>()?;
        let fi = fit_exponent_log(&interp, FitModel::Power)?;
        c.note(format!(
            "torus local slopes with log P interpolated to the mass rho_c L^3: {:?}",
            fi.local_slopes.iter().map(|s| s.slope).collect::<Vec<_>>()
        ));

        let neumann = partition_series(Geometry::neumann_box(3), &ls)?;
        let target = 27.0 / (16.0 * PI);
        let ratios: Vec<f64> = neumann.iter().map(|(l, lz)| -lz / l.ln().powi(3)).collect();
        let r48 = *ratios.last().expect("grid");
        c.item("neumann_ratio_48", r48, "in [0.25, 0.85]", (0.25..=0.85).contains(&r48));
        let mono = approaches(&ratios, target);
        c.item("neumann_monotone_to_27/(16pi)", f64::from(u8::from(mono)), "1", mono);
        c.note(format!("neumann -logZ/log^3 L {ratios:?}"));

        let dir = partition_series(Geometry::dirichlet_box(3), &ls)?;
        let f = fit_exponent_log(&dir, FitModel::Power)?;
        let target = -2.0 - 9.0 * PI / 4.0;
        let last = f.last_slope();
        c.item("dirichlet_slope_32_48", last, format!("{target:.4} +- 30%"), ratio_in(last, target, 0.3));
        let approach = approaches(&f.local_slopes.iter().map(|s| s.slope).collect::<Vec<_>>(), target);
        c.item("dirichlet_monotone", f64::from(u8::from(approach)), "1", approach);
        c.note(format!("dirichlet local slopes {:?}", f.local_slopes.iter().map(|s| s.slope).collect::<Vec<_>>()));
        Ok(())
    })
}

/// Kolmogorov distance between the exact law of `(N - E N)β/L²` and `χ_ζ`.
pub fn clt_distance(p: &ModelParams, chi: &bosegas::limitlaws::ChiZeta) -> Result<f64> {
    let l = p.l;
    let w = build_weights(p, 0.0)?;
    let mean = expected_particles(&w, w.len());
    let scale = p.beta / (l * l);
    let n_max = (mean + 5.0 / scale).ceil() as usize;
    let pmf = compound_pmf(&w, Window::full(w.len()), n_max)?;
    let xs: Vec<f64> = (0..=n_max).map(|n| (n as f64 - mean) * scale).collect();
    let chi_cdf: Vec<f64> = xs.par_iter().map(|&x| chi.cdf(x)).collect();
    let mut cum = KahanSum::new();
    let mut worst: f64 = 0.0;
    for n in 0..=n_max {
        let before = cum.value();
        cum.add(pmf.prob(n));
        worst = worst.max((cum.value() - chi_cdf[n]).abs()).max((before - chi_cdf[n]).abs());
    }
    Ok(worst)
}

pub fn fredholm_clt(seed: u64) -> Criterion {
    timed(Criterion::new(7, "Fredholm CLT", 180.0), |c| {
        let sm = SpectralMeasure::new(&Geometry::dirichlet_box(3), 1 << 14)?;
        let chi = chi_zeta(&sm)?;
        let ls = [12.0, 16.0, 24.0, 32.0];
        let ds: Vec<f64> = ls.iter().map(|&l| clt_distance(&ModelParams::critical(Geometry::dirichlet_box(3), 1.0, l), &chi)).collect::<Result<_>>()?;
        let dec = ds.windows(2).all(|p| p[1] < p[0]);
        c.item("kolmogorov_L32", ds[3], "< 0.1", ds[3] < 0.1);
        c.item("kolmogorov_decreasing", f64::from(u8::from(dec)), "1", dec);
        c.note(format!("kolmogorov distances at L=12,16,24,32: {ds:?}"));
        let gs = GammaSum::new(&sm, 200)?;
        let n = 1_000_000;
        let xs = gs.sample_many(n, seed);
        let mut worst: f64 = 0.0;
        for i in -10..=10 {
            let t = 0.5 * i as f64;
            let psi = fredholm_log_cf(&sm, t).exp();
            let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
            for &x in &xs {
                let (s, co) = (t * x).sin_cos();
                sc += co;
                ss += s;
                sc2 += co * co;
                ss2 += s * s;
            }
            let nf = n as f64;
            let (mc, ms) = (sc / nf, ss / nf);
            let sd_c = ((sc2 / nf - mc * mc) / nf).sqrt();
            let sd_s = ((ss2 / nf - ms * ms) / nf).sqrt();
            if sd_c > 0.0 {
                worst = worst.max((mc - psi.re).abs() / sd_c);
            }
            if sd_s > 0.0 {
                worst = worst.max((ms - psi.im).abs() / sd_s);
            }
        }
        c.item("gamma_sum_cf_max_z", worst, "< 3 sigma on t in [-5,5]", worst < 3.0);
        c.note(format!("variance {:.7e}, tail share {:.3e}", sm.variance(), sm.tail_variance / sm.variance()));
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalCltResult {
    pub l: f64,
    pub mu: f64,
    pub r: f64,
    pub peak_scaled: f64,
    pub candidates: Vec<(String, f64, f64)>,
}

/// Tilted `box:3:neumann` pmf peak against the Gaussian candidates.
pub fn local_clt(p: &ModelParams) -> Result<LocalCltResult> {
    let (l, beta) = (p.l, p.beta);
    let w = build_weights(p, 0.0)?;
    let solve = solve_mu_table(&w, p.mass())?;
    let r = rescaled_tilt(p.geometry.dim, l, solve.mu).unwrap_or(f64::NAN);
    let tilted = w.with_mu(solve.mu)?;
    let n_max = w.len() + (8.0 * l * l) as usize;
    let pmf = compound_pmf(&tilted, Window::full(w.len()), n_max)?;
    let peak = pmf.logp.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
    let peak_scaled = peak * l * l / l.ln().sqrt();
    let candidates = tilted_d3_candidates(beta, r)
        .into_iter()
        .map(|c| {
            let mode = 1.0 / (2.0 * PI * c.variance).sqrt();
            (c.label, c.variance, peak_scaled / mode - 1.0)
        })
        .collect();
    Ok(LocalCltResult { l, mu: solve.mu, r, peak_scaled, candidates })
}

pub fn local_clt_check() -> Criterion {
    timed(Criterion::new(8, "local CLT", 120.0), |c| {
        let res = local_clt(&ModelParams::critical(Geometry::neumann_box(3), 1.0, 32.0))?;
        let within: Vec<&(String, f64, f64)> = res.candidates.iter().filter(|x| x.2.abs() <= 0.15).collect();
        let best = res.candidates.iter().map(|x| x.2.abs()).fold(f64::INFINITY, f64::min);
        c.item("best_peak_mismatch", best, "<= 0.15", best <= 0.15);
        c.item("candidates_within_band", within.len() as f64, "exactly 1", within.len() == 1);
        let closest = res.candidates.iter().min_by(|a, b| a.2.abs().total_cmp(&b.2.abs())).expect("two candidates");
        c.note(format!("r={:.6}, mu={:.6e}, peak*L^2/sqrt(log L)={:.6}, closest variance {}", res.r, res.mu, res.peak_scaled, closest.0));
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MesoResult {
    pub upper: usize,
    pub lower: usize,
    pub max_dev_lower: f64,
    pub max_dev_upper: f64,
}

/// Largest relative deviation of `P(N_mes = k)` times the two candidate
/// normalisations from `p₁(k/U)` over `k ∈ [U/2, U]`.
pub fn meso_deviation(p: &ModelParams, alpha: f64, m: f64, dickman: &Dickman) -> Result<MesoResult> {
    let l = p.l;
    let (pmf, _) = mesoscopic_pmf(p, alpha, m, 0)?;
    let upper = pmf.window.max;
    let (pmf, _) = mesoscopic_pmf(p, alpha, m, upper)?;
    let lam1 = p.geometry.first_eigenvalue();
    let mut dl: f64 = 0.0;
    let mut du: f64 = 0.0;
    for k in upper / 2..=upper {
        let reference = (-lam1 * k as f64 * p.beta / (l * l)).exp() * dickman.p1(k as f64 / upper as f64)?;
        dl = dl.max((pmf.prob(k) * alpha * l * l / reference - 1.0).abs());
        du = du.max((pmf.prob(k) * upper as f64 / reference - 1.0).abs());
    }
    Ok(MesoResult { upper, lower: pmf.window.min, max_dev_lower: dl, max_dev_upper: du })
}

pub const MESO_ALPHA: f64 = 1.0;
pub const MESO_M: f64 = 3.0;

pub fn dickman_meso() -> Criterion {
    timed(Criterion::new(9, "Dickman / mesoscopic", 120.0), |c| {
        let d = Dickman::new(20.0)?;
        let p1 = d.p1(1.0)?;
        let oracle = p1_cos_inversion(1.0, 40.0, 1 << 20);
        c.item("p1(1)", p1, "0.561459 +- 1e-4", (p1 - 0.561_459).abs() < 1e-4);
        c.item("p1(1)_vs_cf_inversion", (p1 - oracle).abs(), "< 1e-4", (p1 - oracle).abs() < 1e-4);
        let m = meso_deviation(&ModelParams::critical(Geometry::torus(3), 1.0, 32.0), MESO_ALPHA, MESO_M, &d)?;
        c.item("meso_P*alphaL^2_max_dev", m.max_dev_lower, "<= 0.10 over k in [U/2, U]", m.max_dev_lower <= 0.1);
        c.note(format!(
            "window [{}, {}]; with the upper edge U as normalisation the max deviation is {:.4}",
            m.lower, m.upper, m.max_dev_upper
        ));
        Ok(())
    })
}

/// Largest loop lengths of conditioned `box:3:dirichlet` draws at `ρ_c`,
/// together with `m_L = -2a₁β⁻¹L² log L` and the exact excess
/// `n - E[N]` of the free soup.
pub fn largest_loop_samples(p: &ModelParams, draws: usize, seed: u64) -> Result<(Vec<f64>, f64, f64)> {
    let l = p.l;
    let n = p.particles();
    let w = build_weights(p, 0.0)?;
    let pmf = compound_pmf(&w, Window::full(w.len()), n)?;
    let sampler = ConditionedSampler::new(&pmf, &w, ConditionedSampler::DEFAULT_TABLE_LIMIT);
    let a1 = mp_reference(&p.geometry).a1;
    let m_l = -2.0 * a1 / p.beta * l * l * l.ln();
    let excess = n as f64 - expected_particles(&w, w.len());
    const CHUNK: usize = 256;
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeedSpec::new(seed, i as u64).rng();
            (0..CHUNK.min(draws - i * CHUNK))
                .map(|_| Ok(sampler.sample(n, &mut rng)?.largest() as f64))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((parts.concat(), m_l, excess))
}

/// Kolmogorov distance of samples to a continuous CDF.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x)?;
        worst = worst.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(worst)
}

pub fn poisson_dirichlet(seed: u64) -> Criterion {
    timed(Criterion::new(10, "Poisson-Dirichlet", 300.0), |c| {
        let n = 5000;
        let w = WeightTable::from_values(vec![1.0; n]);
        let pmf = compound_pmf(&w, Window::full(n), n)?;
        let sampler = ConditionedSampler::new(&pmf, &w, ConditionedSampler::DEFAULT_TABLE_LIMIT);
        let est = mc_estimate(|cfg| cfg.largest() as f64 / n as f64, |r| sampler.sample(n, r), 10_000, seed)?;
        let gap = (est.mean - 0.6243).abs();
        c.item("permutation_mean_largest", est.mean, "0.6243 +- 0.010", gap <= 0.010);
        let d = Dickman::new(200.0)?;
        let mut ks = Vec::new();
        let mut ks_excess = Vec::new();
        for (i, l) in [16.0, 32.0].into_iter().enumerate() {
            let (lens, m_l, excess) = largest_loop_samples(&ModelParams::critical(Geometry::dirichlet_box(3), 1.0, l), 4000, seed.wrapping_add(1 + i as u64))?;
            let mut xs: Vec<f64> = lens.iter().map(|x| x / m_l).collect();
            ks.push(ks_distance(&mut xs, |x| d.pd1_largest_cdf(x))?);
            let mut ys: Vec<f64> = lens.iter().map(|x| x / excess).collect();
            ks_excess.push((l, m_l, excess, ks_distance(&mut ys, |x| d.pd1_largest_cdf(x))?));
        }
        c.item("ks_L32", ks[1], "< 0.15", ks[1] < 0.15);
        c.item("ks_decreasing_16_32", ks[0] - ks[1], "> 0", ks[1] < ks[0]);
        c.note(format!("permutation 99% CI [{:.5}, {:.5}]; KS at L=16: {:.4}", est.lo, est.hi, ks[0]));
        for (l, m_l, excess, k) in ks_excess {
            c.note(format!("L={l}: m_L={m_l:.1}, exact excess n-E[N]={excess:.1}, KS with the excess as scale {k:.4}"));
        }
        Ok(())
    })
}

pub const STABLE_WINDOW: (f64, f64) = (8.0, 128.0);

pub fn stable_fit(l: f64) -> Result<bosegas::limitlaws::StableFit> {
    let p = ModelParams::critical(Geometry::torus(3), 1.0, l).with_cutoff((l * l) as usize);
    let w = build_weights(&p, 0.0)?;
    let a0 = mp_reference(&p.geometry).a0;
    let s = geomspace(STABLE_WINDOW.0, STABLE_WINDOW.1, 24);
    let y: Vec<f64> = s
        .iter()
        .map(|&s| short_loop_levy_exponent(w.untilted(), l, s) - lattice_correction(a0, p.beta, l, s))
        .collect();
    fit_stable_index(&s, &y, 1.0, 2.0)
}

pub fn stable_index() -> Criterion {
    timed(Criterion::new(11, "stable index", 60.0), |c| {
        let fit = stable_fit(32.0)?;
        let a0 = mp_reference(&Geometry::torus(3)).a0;
        c.item("index", fit.index, "1.50 +- 0.05", (fit.index - 1.5).abs() <= 0.05);
        let ratio = fit.constant / a0;
        c.item("constant/a0", ratio, "1 +- 20%", (ratio - 1.0).abs() <= 0.2);
        let gamma_const = (4.0 * PI.sqrt() / 3.0) * (0.5f64).sqrt();
        c.note(format!(
            "continuum constant of sum (1-cos) j^(-5/2) is -Gamma(-3/2)cos(3pi/4) = {gamma_const:.4} times a0"
        ));
        Ok(())
    })
}

pub fn high_dimensions() -> Criterion {
    timed(Criterion::new(12, "higher dimensions", 120.0), |c| {
        let g = Geometry::dirichlet_box(4);
        let ls = [16.0, 20.0, 24.0, 28.0, 32.0];
        let vals: Vec<f64> = ls
            .par_iter()
            .map(|&l| {
                let p = ModelParams::critical(g, 1.0, l).with_cutoff((l * l) as usize);
                let w = build_weights(&p, 0.0)?;
                Ok(expected_particles(&w, (l * l) as usize) - p.rho_c() * l.powi(4))
            })
            .collect::<Result<_>>()?;
        let coef = linear_fit(&ls, &vals, |l| vec![l.powi(3), l * l * l.ln(), l * l, l, 1.0])?;
        let a1 = mp_reference(&g).a1;
        let target = a1 * zeta(1.5);
        c.item("L3_coefficient", coef[0], format!("{target:.6} +- 2%"), ratio_in(coef[0], target, 0.02));

        let l = 32.0;
        let p = ModelParams::critical(g, 1.0, l);
        let n = p.particles();
        let w = build_weights(&p, 0.0)?;
        let pmf = compound_pmf(&w, Window::full(w.len()), n)?;
        let mut m1 = KahanSum::new();
        let mut m2 = KahanSum::new();
        for k in 0..=n {
            let q = pmf.prob(k);
            m1.add(k as f64 * q);
            m2.add((k * k) as f64 * q);
        }
        let var = m2.value() - m1.value().powi(2);
        let b2 = l.powi(4) * l.ln();
        let observed = var / b2;
        let cands = high_dim_candidates(4, 1.0)?;
        let i = closest_candidate(observed, &cands);
        let dist: Vec<f64> = cands.iter().map(|c| (observed / c.variance).ln().abs()).collect();
        let resolved = dist[i] < 0.5 * dist[1 - i];
        c.item("variance_orientation_resolved", observed, format!("closest {}", cands[i].label), resolved);
        c.note(format!(
            "Var(N)/(L^4 log L)={observed:.5e}; candidates {:.5e} ({}) and {:.5e} ({}); mass deficit {:.3e}",
            cands[0].variance, cands[0].label, cands[1].variance, cands[1].label, pmf.deficit
        ));
        Ok(())
    })
}

/// Criteria 1–12.
pub fn run_checks(seed: u64) -> Vec<Criterion> {
    vec![
        theta_duality(),
        mp_coefficients(),
        pmf_exactness(seed),
        trace_identity(),
        tilt_identity(),
        partition_exponents(),
        fredholm_clt(seed),
        local_clt_check(),
        dickman_meso(),
        poisson_dirichlet(seed),
        stable_index(),
        high_dimensions(),
    ]
}

/// `criterion,item,measured,threshold,passed` rows; runtimes are left to
/// the manifest so that the table is reproducible.
pub fn criteria_table(cs: &[Criterion]) -> Table {
    let mut t = Table::new(&["criterion", "item", "measured", "threshold", "passed"]);
    for c in cs {
        for i in &c.items {
            t.push(vec![
                Cell::from(c.id as usize),
                Cell::from(i.label.as_str()),
                Cell::from(i.measured),
                Cell::from(i.threshold.as_str()),
                Cell::from(i.passed),
            ]);
        }
    }
    t
}

/// Determinism criterion from two independently produced CSVs.
pub fn determinism(first: &[u8], second: &[u8]) -> Criterion {
    let mut c = Criterion::new(13, "determinism", f64::INFINITY);
    let same = first == second;
    c.item("byte_identical", f64::from(u8::from(same)), "1", same);
    c
}
