//! One function per subcommand; each turns a resolved configuration into a
//! results table.

use bosegas::cache::Cache;
use bosegas::fit::{fit_exponent_log, FitModel};
use bosegas::limitlaws::{chi_zeta, p1_cos_inversion, Dickman, SpectralMeasure};
use bosegas::numeric::geomspace;
use bosegas::partition::{
    compound_pmf, gamma_rdm, mesoscopic_pmf, partition_function, rdm_trace, recursion_residual, Window,
};
use bosegas::sampler::{sample_spatial_torus, write_paths_csv, ConditionedSampler, SeedSpec};
use bosegas::spectral::{default_mp_grid, heat_trace, mp_fit, mp_reference};
use bosegas::weights::{build_weights, build_weights_cached, solve_mu_table, ModelParams, WeightTable};
use bosegas::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::acceptance::{self, clt_distance, ks_distance, largest_loop_samples, local_clt};
use crate::config::{MuMode, Resolved, WindowSpec};
use crate::output::{Cell, RunOutput, Table};

/// Mesoscopic window used when none is configured.
pub const DEFAULT_MESO_WINDOW: WindowSpec = WindowSpec::Mesoscopic { alpha: acceptance::MESO_ALPHA, m: acceptance::MESO_M };

/// Levels kept explicitly in the spectral measure of `χ_ζ`.
pub const CLT_LEVELS: u64 = 1 << 14;

fn cache_for(cfg: &Resolved) -> Option<Cache> {
    cfg.cache.clone().map(Cache::new).or_else(Cache::from_env)
}

/// Weights at side `l` with the configured chemical potential; the cutoff
/// is raised to the window's upper edge when that lies beyond `⌊ρL^d⌋`.
pub fn weights_for(cfg: &Resolved, l: f64) -> Result<(ModelParams, WeightTable)> {
    let mut p = cfg.params(l);
    if let Some(spec) = cfg.window {
        let top = spec.resolve(l)?.max;
        if top > p.cutoff() {
            p = p.with_cutoff(top);
        }
    }
    let base = match cache_for(cfg) {
        Some(cache) => build_weights_cached(&p, 0.0, &cache)?,
        None => build_weights(&p, 0.0)?,
    };
    let w = match cfg.mu {
        MuMode::None => base,
        MuMode::Explicit(mu) => base.with_mu(mu)?,
        MuMode::Solve => {
            let s = solve_mu_table(&base, p.mass())?;
            base.with_mu(s.mu)?
        }
    };
    Ok((p, w))
}

fn window_for(cfg: &Resolved, l: f64, w: &WeightTable) -> Result<Window> {
    match cfg.window {
        Some(spec) => spec.resolve(l),
        None => Ok(Window::full(w.len())),
    }
}

fn first_l(cfg: &Resolved) -> f64 {
    cfg.l_list[0]
}

/// `t,Z,mp_approx,rel_gap`: heat trace against its three-term small-time
/// expansion.
pub fn trace(cfg: &Resolved, ts: &[f64]) -> Result<RunOutput> {
    let g = cfg.geometry;
    let c = mp_reference(&g);
    let d = g.dim as f64;
    let mut t = Table::new(&["t", "Z", "mp_approx", "rel_gap"]);
    for &s in ts {
        let z = heat_trace(&g, s)?;
        let approx = c.a0 * s.powf(-d / 2.0) + c.a1 * s.powf(-(d - 1.0) / 2.0) + c.a2 * s.powf(-(d - 2.0) / 2.0);
        t.push(vec![s.into(), z.into(), approx.into(), ((z - approx) / z).into()]);
    }
    Ok(RunOutput::new(t))
}

/// `coefficient,fitted,reference,abs_err` for `a₀, a₁, a₂`.
pub fn mpfit(cfg: &Resolved) -> Result<RunOutput> {
    let fit = mp_fit(&cfg.geometry, &default_mp_grid())?;
    let r = mp_reference(&cfg.geometry);
    let mut t = Table::new(&["coefficient", "fitted", "reference", "abs_err"]);
    for (name, a, b) in [("a0", fit.coeffs.a0, r.a0), ("a1", fit.coeffs.a1, r.a1), ("a2", fit.coeffs.a2, r.a2)] {
        t.push(vec![name.into(), a.into(), b.into(), (a - b).abs().into()]);
    }
    let mut out = RunOutput::new(t);
    out.details = json!({ "residual": fit.residual, "condition": fit.condition });
    Ok(out)
}

/// `L,mu,j,t_j,weight,theta` for every loop length.
pub fn weights(cfg: &Resolved) -> Result<RunOutput> {
    let mut t = Table::new(&["L", "mu", "j", "t_j", "weight", "theta"]);
    for &l in &cfg.l_list {
        let (_, w) = weights_for(cfg, l)?;
        for j in 1..=w.len() {
            t.push(vec![l.into(), w.mu.into(), j.into(), w.untilted()[j - 1].into(), w.weight(j).into(), w.theta(j).into()]);
        }
    }
    Ok(RunOutput::new(t))
}

/// `L,n,log_p` for `n` up to `⌊ρL^d⌋` or the window edge; `NA` marks `P = 0`.
pub fn pmf(cfg: &Resolved) -> Result<RunOutput> {
    let runs: Vec<_> = cfg
        .l_list
        .par_iter()
        .map(|&l| {
            let (p, w) = weights_for(cfg, l)?;
            let pmf = compound_pmf(&w, window_for(cfg, l, &w)?, p.cutoff().max(p.particles()))?;
            Ok((l, recursion_residual(&pmf, &w), pmf))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["L", "n", "log_p"]);
    let mut residuals = Vec::new();
    for (l, res, pmf) in runs {
        residuals.push(json!({ "L": l, "recursion_residual": res, "deficit": pmf.deficit }));
        for (n, lp) in pmf.logp.iter().enumerate() {
            t.push(vec![l.into(), n.into(), (*lp).into()]);
        }
    }
    let mut out = RunOutput::new(t);
    out.details = json!({ "checks": residuals });
    Ok(out)
}

/// `L,logZ,local_slope`; the slope is taken against the previous `L` and is
/// `NA` on the first row.
pub fn partition(cfg: &Resolved, model: FitModel) -> Result<RunOutput> {
    let logz: Vec<f64> = cfg
        .l_list
        .par_iter()
        .map(|&l| partition_function(&cfg.params(l)))
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["L", "logZ", "local_slope"]);
    for (i, (&l, &z)) in cfg.l_list.iter().zip(&logz).enumerate() {
        let slope = if i == 0 {
            Cell::Na
        } else {
            Cell::from((z - logz[i - 1]) / (l.ln() - cfg.l_list[i - 1].ln()))
        };
        t.push(vec![l.into(), z.into(), slope]);
    }
    let mut out = RunOutput::new(t);
    let points: Vec<(f64, f64)> = cfg.l_list.iter().copied().zip(logz.iter().copied()).collect();
    if points.len() >= 3 {
        let fit = fit_exponent_log(&points, model)?;
        out.details = json!({
            "model": model,
            "exponent": fit.exponent,
            "intercept": fit.intercept,
            "local_slopes": fit.local_slopes,
            "monotone": fit.monotone,
        });
    }
    Ok(out)
}

/// `L,n,r,gamma`: reduced density matrix from the box centre along the first
/// axis, with the trace identity in the details.
pub fn gamma(cfg: &Resolved, points: usize) -> Result<RunOutput> {
    let mut t = Table::new(&["L", "n", "r", "gamma"]);
    let mut checks = Vec::new();
    for &l in &cfg.l_list {
        let (p, w) = weights_for(cfg, l)?;
        let n = p.particles();
        let pmf = compound_pmf(&w, window_for(cfg, l, &w)?, n)?;
        let trace = rdm_trace(&pmf, &w, n)?;
        checks.push(json!({ "L": l, "n": n, "trace": trace, "rel_err": (trace - n as f64).abs() / n as f64 }));
        let x = vec![0.5 * l; p.geometry.dim];
        let rs: Vec<f64> = (0..points).map(|i| 0.5 * l * i as f64 / (points - 1).max(1) as f64).collect();
        let vals: Vec<f64> = rs
            .par_iter()
            .map(|&r| {
                let mut y = x.clone();
                y[0] += r;
                gamma_rdm(&pmf, &w, n, &x, &y)
            })
            .collect::<Result<_>>()?;
        for (r, v) in rs.iter().zip(vals) {
            t.push(vec![l.into(), n.into(), (*r).into(), v.into()]);
        }
    }
    let mut out = RunOutput::new(t);
    out.details = json!({ "trace_identity": checks });
    Ok(out)
}

/// `L,k,prob,scaled_lower,scaled_upper,reference` across the mesoscopic
/// window.
pub fn meso(cfg: &Resolved) -> Result<RunOutput> {
    let (alpha, m) = match cfg.window.unwrap_or(DEFAULT_MESO_WINDOW) {
        WindowSpec::Mesoscopic { alpha, m } => (alpha, m),
        WindowSpec::Explicit { .. } => {
            return Err(Error::Domain("meso needs a mesoscopic window {alpha, m}".into()));
        }
    };
    let mut t = Table::new(&["L", "k", "prob", "scaled_lower", "scaled_upper", "reference"]);
    let mut summary = Vec::new();
    for &l in &cfg.l_list {
        let p = cfg.params(l);
        let upper = bosegas::partition::mesoscopic_window(l, alpha, m).max;
        let (pmf, _) = mesoscopic_pmf(&p, alpha, m, upper)?;
        let dickman = Dickman::new(m + 2.0)?;
        let rows = bosegas::partition::meso_compare(&pmf, &p, alpha, &dickman, pmf.window.min..=upper)?;
        for r in rows {
            t.push(vec![l.into(), r.k.into(), r.prob.into(), r.scaled_lower.into(), r.scaled_upper.into(), r.reference.into()]);
        }
        let dev = acceptance::meso_deviation(&p, alpha, m, &dickman)?;
        summary.push(json!(dev));
    }
    let mut out = RunOutput::new(t);
    out.choices = json!({ "normalisation": "upper window edge U; alpha*L^2 reported alongside" });
    out.details = json!({ "bulk_deviation": summary });
    Ok(out)
}

/// `L,kolmogorov`: exact law of `(N - EN)β/L²` against `χ_ζ`.
pub fn clt(cfg: &Resolved) -> Result<RunOutput> {
    let sm = SpectralMeasure::new(&cfg.geometry, CLT_LEVELS)?;
    let chi = chi_zeta(&sm)?;
    let mut t = Table::new(&["L", "kolmogorov"]);
    for &l in &cfg.l_list {
        t.push(vec![l.into(), clt_distance(&cfg.params(l), &chi)?.into()]);
    }
    let mut out = RunOutput::new(t);
    out.details = json!({ "variance": sm.variance(), "tail_variance": sm.tail_variance, "levels": CLT_LEVELS });
    Ok(out)
}

/// `L,mu,r,peak_scaled,candidate,variance,mismatch` for the tilted `d = 3`
/// local limit.
pub fn local_clt_cmd(cfg: &Resolved) -> Result<RunOutput> {
    if cfg.geometry.dim != 3 {
        return Err(Error::Unsupported("local-clt compares the d = 3 variance candidates".into()));
    }
    let mut t = Table::new(&["L", "mu", "r", "peak_scaled", "candidate", "variance", "mismatch"]);
    for &l in &cfg.l_list {
        let res = local_clt(&cfg.params(l))?;
        for (label, var, mis) in &res.candidates {
            t.push(vec![
                l.into(),
                res.mu.into(),
                res.r.into(),
                res.peak_scaled.into(),
                label.as_str().into(),
                (*var).into(),
                (*mis).into(),
            ]);
        }
    }
    Ok(RunOutput::new(t))
}

/// `L,samples,m_L,excess,mean_fraction,ks_m_L,ks_excess`: largest loop of
/// conditioned draws against the Poisson–Dirichlet(1) largest part.
pub fn pd(cfg: &Resolved) -> Result<RunOutput> {
    let d = Dickman::new(20.0)?;
    let mut t = Table::new(&["L", "samples", "m_L", "excess", "mean_fraction", "ks_m_L", "ks_excess"]);
    for (i, &l) in cfg.l_list.iter().enumerate() {
        let (lens, m_l, excess) = largest_loop_samples(&cfg.params(l), cfg.samples, cfg.seed.wrapping_add(i as u64))?;
        let ks = |scale: f64| -> Result<f64> {
            if !(scale > 0.0 && scale.is_finite()) {
                return Ok(f64::NAN);
            }
            let mut xs: Vec<f64> = lens.iter().map(|x| x / scale).collect();
            ks_distance(&mut xs, |x| d.pd1_largest_cdf(x))
        };
        let mean = lens.iter().sum::<f64>() / lens.len() as f64 / m_l;
        t.push(vec![l.into(), cfg.samples.into(), m_l.into(), excess.into(), mean.into(), ks(m_l)?.into(), ks(excess)?.into()]);
    }
    Ok(RunOutput::new(t))
}

/// `draw,particles,loops,largest,second,third` for conditioned draws at the
/// first `L`; with `paths_step` the first draw also gets torus paths.
pub fn sample(cfg: &Resolved, paths_step: Option<f64>) -> Result<RunOutput> {
    let l = first_l(cfg);
    let (p, w) = weights_for(cfg, l)?;
    let n = p.particles();
    let pmf = compound_pmf(&w, window_for(cfg, l, &w)?, n)?;
    let sampler = ConditionedSampler::new(&pmf, &w, ConditionedSampler::DEFAULT_TABLE_LIMIT);
    let configs: Vec<_> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| sampler.sample(n, &mut SeedSpec::new(cfg.seed, i as u64).rng()))
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["draw", "particles", "loops", "largest", "second", "third"]);
    for (i, c) in configs.iter().enumerate() {
        t.push(vec![
            i.into(),
            c.total.into(),
            (c.loop_count() as usize).into(),
            c.ranked_length(1).into(),
            c.ranked_length(2).into(),
            c.ranked_length(3).into(),
        ]);
    }
    let mut out = RunOutput::new(t);
    if let (Some(ds), Some(first)) = (paths_step, configs.first()) {
        let spatial = sample_spatial_torus(first, &p, ds, SeedSpec::new(cfg.seed, u64::MAX))?;
        let mut bytes = Vec::new();
        write_paths_csv(&spatial, &mut bytes)?;
        out.extra_files.push(("paths.csv".into(), bytes));
    }
    Ok(out)
}

/// `y,rho,p1,p1_cf_inversion` on a uniform grid.
pub fn dickman(u_max: f64, step: f64) -> Result<RunOutput> {
    if !(step > 0.0 && u_max > 0.0) {
        return Err(Error::Domain("dickman needs positive u_max and step".into()));
    }
    let d = Dickman::new(u_max)?;
    let count = (u_max / step).floor() as usize;
    let ys: Vec<f64> = (0..=count).map(|i| i as f64 * step).collect();
    let inv: Vec<f64> = ys.par_iter().map(|&y| p1_cos_inversion(y, 40.0, 1 << 16)).collect();
    let mut t = Table::new(&["y", "rho", "p1", "p1_cf_inversion"]);
    for (y, c) in ys.iter().zip(inv) {
        t.push(vec![(*y).into(), d.rho(*y)?.into(), d.p1(*y)?.into(), c.into()]);
    }
    Ok(RunOutput::new(t))
}

/// Acceptance suite: every criterion twice, then byte comparison of the two
/// tables. Returns the output and whether all criteria passed.
pub fn suite(name: &str, seed: u64) -> Result<(RunOutput, Vec<acceptance::Criterion>)> {
    if name != "acceptance" {
        return Err(Error::Domain(format!("unknown suite `{name}`; available: acceptance")));
    }
    let first = acceptance::run_checks(seed);
    let second = acceptance::run_checks(seed);
    let a = acceptance::criteria_table(&first).to_csv()?;
    let b = acceptance::criteria_table(&second).to_csv()?;
    let mut all = first;
    all.push(acceptance::determinism(&a, &b));
    let mut out = RunOutput::new(acceptance::criteria_table(&all));
    out.details = json!({
        "criteria": all.iter().map(|c| json!({
            "id": c.id,
            "title": c.title,
            "passed": c.passed(),
            "runtime_s": c.runtime_s,
            "budget_s": c.budget_s,
            "notes": c.notes,
        })).collect::<Vec<_>>(),
    });
    out.choices = json!({
        "meso_normalisation": "literal alpha*L^2 checked; upper window edge U reported",
        "long_loop_mass": "m_L = -2 a1 L^2 log L / beta",
    });
    Ok((out, all))
}

/// Default time grid of the `trace` subcommand.
pub fn default_trace_grid() -> Vec<f64> {
    geomspace(1e-3, 10.0, 25)
}
