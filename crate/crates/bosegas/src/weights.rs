//! Loop weights `t_j = Z(βj/L²)`, exponential tilts and the closed-form
//! asymptotic predictions the exact numerics are compared against.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::Cache;
use crate::error::{Error, Result};
use crate::numeric::{bisect, ksum};
use crate::special::zeta;
use crate::spectral::{heat_trace, mp_reference, Geometry};

/// Particle density: either the critical value or an explicit number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Critical,
    Value(f64),
}

impl Serialize for Density {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Density::Critical => s.serialize_str("critical"),
            Density::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Density {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Density::Value(v)),
            Raw::Str(s) if s == "critical" => Ok(Density::Critical),
            Raw::Str(s) => s
                .parse()
                .map(Density::Value)
                .map_err(|_| serde::de::Error::custom(format!("density must be a number or `critical`, got `{s}`"))),
        }
    }
}

/// Critical density `(4πβ)^{-d/2} ζ(d/2)`; infinite for `d ≤ 2`.
pub fn critical_density(dim: usize, beta: f64) -> f64 {
    if dim <= 2 {
        return f64::INFINITY;
    }
    let d = dim as f64;
    (4.0 * PI * beta).powf(-d / 2.0) * zeta(d / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub geometry: Geometry,
    pub beta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub rho: Density,
    /// Largest loop length `N`; defaults to `⌊ρL^d⌋`.
    pub n_cut: Option<usize>,
}

impl ModelParams {
    /// Critical-density parameters.
    pub fn critical(geometry: Geometry, beta: f64, l: f64) -> Self {
        Self { geometry, beta, l, rho: Density::Critical, n_cut: None }
    }

    pub fn with_cutoff(mut self, n_cut: usize) -> Self {
        self.n_cut = Some(n_cut);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.l >= 1.0 && self.l.is_finite()) {
            return Err(Error::Domain(format!("L must be at least 1, got {}", self.l)));
        }
        if let Density::Value(r) = self.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Domain(format!("rho must be positive, got {r}")));
            }
        }
        if self.rho == Density::Critical && self.geometry.dim <= 2 {
            return Err(Error::Domain("critical density is infinite for d <= 2".into()));
        }
        if self.n_cut == Some(0) || (self.n_cut.is_none() && self.particles() == 0) {
            return Err(Error::Domain("loop-length cutoff must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rho_c(&self) -> f64 {
        critical_density(self.geometry.dim, self.beta)
    }

    pub fn density(&self) -> f64 {
        match self.rho {
            Density::Critical => self.rho_c(),
            Density::Value(r) => r,
        }
    }

    /// Expected particle count `ρL^d` before rounding.
    pub fn mass(&self) -> f64 {
        self.density() * self.l.powi(self.geometry.dim as i32)
    }

    /// Canonical particle number `⌊ρL^d⌋`.
    pub fn particles(&self) -> usize {
        self.mass().floor() as usize
    }

    /// Loop-length cutoff `N`.
    pub fn cutoff(&self) -> usize {
        self.n_cut.unwrap_or_else(|| self.particles())
    }

    /// Parameter record used as the cache key.
    pub fn cache_key(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "weights",
            "geometry": self.geometry.to_string(),
            "beta": self.beta,
            "L": self.l,
            "N": self.cutoff(),
        })
    }
}

/// Loop weights `e^{βμj} t_j` for `j = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub params: Option<ModelParams>,
    pub beta: f64,
    pub mu: f64,
    base: Vec<f64>,
    tilted: Vec<f64>,
    hash: String,
}

impl WeightTable {
    /// Table built from explicit untilted weights (`values[0]` is `t_1`).
    pub fn from_values(values: Vec<f64>) -> Self {
        let hash = crate::cache::params_hash(&serde_json::json!({
            "kind": "explicit",
            "bits": values.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        }));
        Self { params: None, beta: 1.0, mu: 0.0, tilted: values.clone(), base: values, hash }
    }

    fn from_base(params: ModelParams, base: Vec<f64>, mu: f64) -> Self {
        let hash = crate::cache::params_hash(&params.cache_key());
        let mut t = Self { params: Some(params), beta: params.beta, mu: 0.0, tilted: base.clone(), base, hash };
        t.retilt(mu);
        t
    }

    fn retilt(&mut self, mu: f64) {
        self.mu = mu;
        let bm = self.beta * mu;
        self.tilted = self
            .base
            .iter()
            .enumerate()
            .map(|(i, &t)| if mu == 0.0 { t } else { t * (bm * (i + 1) as f64).exp() })
            .collect();
    }

    /// The same loop weights under a different tilt.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        let mut t = self.clone();
        t.retilt(mu);
        Ok(t)
    }

    /// Number of loop lengths `N`.
    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Tilted weight of loop length `j` (1-based), zero beyond `N`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j > self.len() {
            0.0
        } else {
            self.tilted[j - 1]
        }
    }

    /// Tilted weights, `[0]` holding `j = 1`.
    pub fn tilted(&self) -> &[f64] {
        &self.tilted
    }

    /// Untilted weights `t_j`.
    pub fn untilted(&self) -> &[f64] {
        &self.base
    }

    /// Poisson intensity `θ_j = e^{βμj} t_j / j`.
    pub fn theta(&self, j: usize) -> f64 {
        self.weight(j) / j as f64
    }

    /// SHA-256 of the parameter record.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 || mu.is_nan() {
        Err(Error::Domain(format!("chemical potential must be <= 0, got {mu}")))
    } else {
        Ok(())
    }
}

fn compute_base(params: &ModelParams) -> Result<Vec<f64>> {
    let n = params.cutoff();
    let g = params.geometry;
    let scale = params.beta / (params.l * params.l);
    (1..=n).into_par_iter().map(|j| heat_trace(&g, scale * j as f64)).collect()
}

/// Weight table `e^{βμj} Z(βj/L²)` for `j = 1..N`.
pub fn build_weights(params: &ModelParams, mu: f64) -> Result<WeightTable> {
    params.validate()?;
    check_mu(mu)?;
    Ok(WeightTable::from_base(*params, compute_base(params)?, mu))
}

/// As [`build_weights`], reading and filling `cache`.
pub fn build_weights_cached(params: &ModelParams, mu: f64, cache: &Cache) -> Result<WeightTable> {
    params.validate()?;
    check_mu(mu)?;
    let key = params.cache_key();
    let base = match cache.load(&key)? {
        Some(base) if base.len() == params.cutoff() => base,
        _ => {
            let base = compute_base(params)?;
            cache.store(&key, &base)?;
            base
        }
    };
    Ok(WeightTable::from_base(*params, base, mu))
}

/// Campbell mean of the particles in loops of length at most `cutoff`.
pub fn expected_particles(w: &WeightTable, cutoff: usize) -> f64 {
    ksum(w.tilted().iter().take(cutoff).copied())
}

/// `(Σ e^{βμj} t_j, Σ e^{βμj} t_j / j)`: expected particle number and
/// pressure (in units where the volume factor is absorbed).
pub fn density_and_pressure(w: &WeightTable) -> (f64, f64) {
    let rho = ksum(w.tilted().iter().copied());
    let p = ksum(w.tilted().iter().enumerate().map(|(i, &x)| x / (i + 1) as f64));
    (rho, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltSolve {
    pub mu: f64,
    /// Rescaled tilt: `μ = -r² log²L / L²` in `d = 3`,
    /// `μ = -r / (L log^{1{d=4}} L)` in `d ≥ 4`.
    pub r: Option<f64>,
    pub target: f64,
    pub achieved: f64,
}

/// Relative tolerance of [`solve_mu`] in the mean.
pub const MU_TOLERANCE: f64 = 1e-10;

/// Rescaled tilt `r` for chemical potential `μ`.
pub fn rescaled_tilt(dim: usize, l: f64, mu: f64) -> Option<f64> {
    let lg = l.ln();
    match dim {
        3 => Some((-mu).sqrt() * l / lg),
        4 => Some(-mu * l * lg),
        d if d >= 5 => Some(-mu * l),
        _ => None,
    }
}

/// Chemical potential with the given rescaled tilt (inverse of
/// [`rescaled_tilt`]).
pub fn mu_from_rescaled(dim: usize, l: f64, r: f64) -> Option<f64> {
    let lg = l.ln();
    match dim {
        3 => Some(-(r * lg / l).powi(2)),
        4 => Some(-r / (l * lg)),
        d if d >= 5 => Some(-r / l),
        _ => None,
    }
}

/// Solve `E_μ[N] = target` for `μ ≤ 0` on an existing table.
pub fn solve_mu_table(w: &WeightTable, target: f64) -> Result<TiltSolve> {
    let base = w.untilted();
    let top = ksum(base.iter().copied());
    let mean = |mu: f64| ksum(base.iter().enumerate().map(|(i, &t)| t * (w.beta * mu * (i + 1) as f64).exp()));
    if !(target > 0.0) || target > top * (1.0 + MU_TOLERANCE) {
        return Err(Error::Infeasible(format!(
            "target {target} outside (0, {top}] reachable with mu <= 0"
        )));
    }
    let r_of = |mu: f64| w.params.and_then(|p| rescaled_tilt(p.geometry.dim, p.l, mu));
    if (top - target).abs() <= MU_TOLERANCE * target {
        return Ok(TiltSolve { mu: 0.0, r: r_of(0.0), target, achieved: top });
    }
    // μ = -e^s; the mean decreases in s
    let s = bisect(|s| target - mean(-s.exp()), -80.0, 20.0, 1e-14);
    let mu = -s.exp();
    let achieved = mean(mu);
    if (achieved - target).abs() > MU_TOLERANCE * target {
        return Err(Error::Tolerance(format!("mu solve reached {achieved} for target {target}")));
    }
    Ok(TiltSolve { mu, r: r_of(mu), target, achieved })
}

/// Solve `E_μ[N] = target` for the model `params`.
pub fn solve_mu(params: &ModelParams, target: f64) -> Result<TiltSolve> {
    solve_mu_table(&build_weights(params, 0.0)?, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Exponent `κ` in `Z_L = L^{κ + o(1)}`, `d = 3`, `a₁ ≤ 0`.
    PartitionExponentD3,
    /// Coefficient `c` in `Z_L = exp(-c log³L (1 + o(1)))`, `d = 3`, `a₁ > 0`.
    #[serde(rename = "logZ_log3_coeff")]
    LogZLog3Coeff,
    /// Coefficient in `log Z_L ≈ c L^{d-3}` (`a₁ < 0`) or
    /// `-f(d) L^{d-2} / log^{1{d=4}} L` (`a₁ > 0`), `d ≥ 4`.
    PartitionDGe4,
    /// Leading amplitude of the reduced density matrix.
    GammaRate,
    /// Variance of `(N - E N)/b_L`, `d ≥ 4`.
    CltVarianceDGe4,
    /// Total mass `m_L` carried by long loops.
    MesoMass,
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Domain(format!("unknown quantity `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub quantity: Quantity,
    pub value: f64,
    /// Competing value where the source formula is ambiguous.
    pub alternative: Option<f64>,
    pub formula: String,
}

/// Closed-form asymptotic prediction for `quantity`.
pub fn predicted_asymptotics(params: &ModelParams, quantity: Quantity) -> Result<PredictionRecord> {
    let g = params.geometry;
    let d = g.dim;
    let df = d as f64;
    let beta = params.beta;
    let l = params.l;
    let a1 = mp_reference(&g).a1;
    let lam1 = g.first_eigenvalue();
    let open = |what: &str| Err(Error::Unsupported(format!("{what} for {g} is left open")));
    let rec = |value: f64, alternative: Option<f64>, formula: &str| {
        Ok(PredictionRecord { quantity, value, alternative, formula: formula.to_string() })
    };
    match quantity {
        Quantity::PartitionExponentD3 => {
            if d != 3 || a1 > 0.0 {
                return open("a power-law partition exponent");
            }
            let ind = if lam1 == 0.0 { 1.0 } else { 0.0 };
            rec(-2.0 + 2.0 * lam1 * a1 - ind, None, "-2 + 2*lambda1*a1 - 1{lambda1=0}")
        }
        Quantity::LogZLog3Coeff => {
            if d != 3 || a1 <= 0.0 {
                return open("a log-cubed partition law");
            }
            rec(
                32.0 * PI * PI * a1.powi(3),
                Some(128.0 * PI * PI * a1.powi(3) / 3.0),
                "32*pi^2*a1^3 (alternative 128*pi^2*a1^3/3)",
            )
        }
        Quantity::PartitionDGe4 => {
            if d < 4 || a1 == 0.0 {
                return open("the d >= 4 partition law");
            }
            if a1 < 0.0 {
                rec(a1 * lam1 * beta.powf((3.0 - df) / 2.0), None, "a1*lambda1*beta^((3-d)/2), times L^(d-3)")
            } else {
                let zeta_m1 = if d == 4 { 1.0 } else { zeta(df / 2.0 - 1.0) };
                let f = a1 * a1 * (4.0 * PI).powf(df / 2.0) * beta.powf(1.0 - df / 2.0) * (zeta(df / 2.0 - 0.5) - 1.0)
                    / zeta_m1;
                rec(-f, None, "-f(d) = -a1^2 (4 pi)^(d/2) beta^(1-d/2) (zeta(d/2-1/2)-1)/zeta(d/2-1), times L^(d-2)/log^{1{d=4}} L")
            }
        }
        Quantity::GammaRate => match (d, a1.partial_cmp(&0.0)) {
            (3, Some(std::cmp::Ordering::Less)) => {
                rec(-2.0 * a1 / beta, None, "-2*a1/beta, times phi1(x/L) phi1(y/L) log(L)/L")
            }
            (3, Some(std::cmp::Ordering::Equal)) => rec(-1.0, None, "gamma ~ L^-1 (exponent)"),
            (3, _) => rec(-1.0 - PI * a1 / 2.0, None, "exponent -1 - alpha*pi*a1/2 at |x-y| = alpha L, alpha = 1"),
            (_, Some(std::cmp::Ordering::Less)) if d >= 4 => {
                rec(-a1 / beta.powf((df - 1.0) / 2.0), None, "-a1/beta^((d-1)/2), times phi1 phi1 / L")
            }
            (_, Some(std::cmp::Ordering::Greater)) if d >= 4 => {
                let denom = if d == 4 { 4.0 * l.ln() } else { 4.0 * zeta(df / 2.0 - 1.0) };
                rec(
                    (a1 * (4.0 * PI).powf(df / 2.0) / denom).sqrt(),
                    None,
                    "sqrt(a1 (4 pi)^(d/2) / (4 c)) with c = zeta(d/2-1) (d>=5) or log L (d=4); gamma = exp(-rate*alpha*sqrt(L))",
                )
            }
            _ => open("the density-matrix rate"),
        },
        Quantity::CltVarianceDGe4 => {
            if d < 4 {
                return open("the Gaussian d >= 4 CLT");
            }
            let cd = if d == 4 { 2.0 } else { zeta(df / 2.0 - 1.0) };
            let scale = (4.0 * PI * beta).powf(df / 2.0);
            rec(cd / scale, Some(scale / cd), "c_d (4 pi beta)^(-d/2) (alternative (4 pi beta)^(d/2)/c_d)")
        }
        Quantity::MesoMass => {
            if a1 >= 0.0 {
                return open("a macroscopic long-loop mass");
            }
            if d == 3 {
                rec(-2.0 * a1 / beta * l * l * l.ln(), None, "-2*a1*L^2*log(L)/beta")
            } else if d >= 4 {
                rec(-a1 * beta.powf((1.0 - df) / 2.0) * l.powf(df - 1.0), None, "-a1*beta^((1-d)/2)*L^(d-1)")
            } else {
                open("a macroscopic long-loop mass")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rel_diff;

    fn torus(l: f64) -> ModelParams {
        ModelParams::critical(Geometry::torus(3), 1.0, l)
    }

    #[test]
    fn critical_density_value() {
        let rc = critical_density(3, 1.0);
        assert!(rel_diff(rc, (4.0 * PI).powf(-1.5) * 2.612_375_348_685_488) < 1e-14);
        assert!(critical_density(2, 1.0).is_infinite());
    }

    #[test]
    fn density_serde() {
        let c: Density = serde_json::from_str("\"critical\"").unwrap();
        assert_eq!(c, Density::Critical);
        let v: Density = serde_json::from_str("0.5").unwrap();
        assert_eq!(v, Density::Value(0.5));
        assert!(serde_json::from_str::<Density>("\"lots\"").is_err());
    }

    #[test]
    fn first_weight_matches_leading_order() {
        let w = build_weights(&torus(10.0), 0.0).unwrap();
        assert!((w.weight(1) - 22.4485).abs() < 1e-3);
        assert!(rel_diff(w.weight(1), (4.0 * PI * 0.01f64).powf(-1.5)) < 1e-10);
    }

    #[test]
    fn long_loops_see_the_ground_state() {
        let p = torus(4.0).with_cutoff(400);
        let w = build_weights(&p, 0.0).unwrap();
        for j in 20..=400 {
            let x = w.beta * j as f64 / 16.0;
            let t = w.weight(j);
            assert!(t >= 1.0 && t - 1.0 <= 10.0 * (-4.0 * PI * PI * x).exp());
        }
        let p = ModelParams::critical(Geometry::dirichlet_box(3), 1.0, 4.0).with_cutoff(400);
        let w = build_weights(&p, 0.0).unwrap();
        let j = 300;
        let pred = (-3.0 * PI * PI * j as f64 / 16.0).exp();
        assert!(rel_diff(w.weight(j), pred) < 1e-12);
    }

    #[test]
    fn weights_decrease_and_tilts_dominate() {
        let w = build_weights(&torus(6.0), 0.0).unwrap();
        for j in 1..w.len() {
            assert!(w.weight(j + 1) < w.weight(j));
        }
        let wt = w.with_mu(-0.01).unwrap();
        for j in 1..=w.len() {
            assert!(wt.weight(j) < w.weight(j));
        }
        assert!(build_weights(&torus(6.0), 0.1).is_err());
    }

    #[test]
    fn expectation_and_pressure() {
        let w = build_weights(&torus(6.0), 0.0).unwrap();
        assert_eq!(expected_particles(&w, 0), 0.0);
        let (rho, p) = density_and_pressure(&w);
        let direct_p: f64 = (1..=w.len()).map(|j| w.weight(j) / j as f64).sum();
        assert!(rel_diff(p, direct_p) < 1e-13);
        assert!(rel_diff(rho, expected_particles(&w, w.len())) < 1e-15);
        let far = w.with_mu(-50.0).unwrap();
        let (r2, p2) = density_and_pressure(&far);
        assert!(r2 < 1e-15 && p2 < 1e-15);
    }

    #[test]
    fn mu_round_trip() {
        let w = build_weights(&torus(8.0), 0.0).unwrap();
        let mu_star = -0.003;
        let target = expected_particles(&w.with_mu(mu_star).unwrap(), w.len());
        let sol = solve_mu_table(&w, target).unwrap();
        assert!((sol.mu - mu_star).abs() < 1e-8 * mu_star.abs());
        let full = expected_particles(&w, w.len());
        assert_eq!(solve_mu_table(&w, full).unwrap().mu, 0.0);
        assert!(matches!(solve_mu_table(&w, 2.0 * full), Err(Error::Infeasible(_))));
    }

    #[test]
    fn mean_is_monotone_in_mu() {
        let w = build_weights(&torus(6.0), 0.0).unwrap();
        let mut prev = 0.0;
        for k in 0..40 {
            let mu = -10f64.powf(1.0 - k as f64 * 0.2);
            let m = expected_particles(&w.with_mu(mu).unwrap(), w.len());
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn predictions() {
        let t = predicted_asymptotics(&torus(8.0), Quantity::PartitionExponentD3).unwrap();
        assert_eq!(t.value, -3.0);
        let dp = ModelParams::critical(Geometry::dirichlet_box(3), 1.0, 8.0);
        let v = predicted_asymptotics(&dp, Quantity::PartitionExponentD3).unwrap().value;
        assert!((v - (-2.0 - 9.0 * PI / 4.0)).abs() < 1e-12);
        let np = ModelParams::critical(Geometry::neumann_box(3), 1.0, 8.0);
        let v = predicted_asymptotics(&np, Quantity::LogZLog3Coeff).unwrap().value;
        assert!((v - 27.0 / (16.0 * PI)).abs() < 1e-12);
        let m = predicted_asymptotics(&dp, Quantity::MesoMass).unwrap().value;
        assert!((m - 3.0 / (4.0 * PI) * 64.0 * 8f64.ln()).abs() < 1e-10);
        let t4 = ModelParams::critical(Geometry::torus(4), 1.0, 8.0);
        assert!(matches!(
            predicted_asymptotics(&t4, Quantity::PartitionDGe4),
            Err(Error::Unsupported(_))
        ));
        assert_eq!("logZ_log3_coeff".parse::<Quantity>().unwrap(), Quantity::LogZLog3Coeff);
    }

    #[test]
    fn rescaled_tilt_inverts() {
        for d in 3..=6 {
            let mu = mu_from_rescaled(d, 20.0, 1.7).unwrap();
            assert!((rescaled_tilt(d, 20.0, mu).unwrap() - 1.7).abs() < 1e-12);
        }
    }
}
