//! Monte Carlo realisations of the loop soup: free Poisson sampling, exact
//! sampling conditioned on the particle number, spatial paths on the torus
//! and a seeded batched-means estimator.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{removal_distribution, PmfTable};
use crate::spectral::DomainKind;
use crate::weights::{ModelParams, WeightTable};

/// Name of the generator, pinned in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), seed_from_u64 + set_stream";

/// A master seed and a stream index. Distinct streams of one seed are
/// independent ChaCha20 keystreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub seed: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut r = ChaCha20Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }
}

/// Discretised closed path of one loop on the torus of side `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    pub length: usize,
    pub winding: Vec<i64>,
    /// Points in `[0, L)^d`; the last equals the first.
    pub points: Vec<Vec<f64>>,
}

/// Multiset of loop lengths, optionally with spatial paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopConfiguration {
    /// `(length, count)` with ascending lengths and positive counts.
    pub counts: Vec<(usize, u64)>,
    pub total: usize,
    pub paths: Option<Vec<LoopPath>>,
}

impl LoopConfiguration {
    pub fn from_counts(mut counts: Vec<(usize, u64)>) -> Self {
        counts.retain(|c| c.1 > 0);
        counts.sort_unstable();
        let total = counts.iter().map(|&(j, c)| j * c as usize).sum();
        Self { counts, total, paths: None }
    }

    fn from_lengths(mut lengths: Vec<usize>) -> Self {
        lengths.sort_unstable();
        let mut counts: Vec<(usize, u64)> = Vec::new();
        for j in lengths {
            match counts.last_mut() {
                Some((l, c)) if *l == j => *c += 1,
                _ => counts.push((j, 1)),
            }
        }
        Self::from_counts(counts)
    }

    pub fn loop_count(&self) -> u64 {
        self.counts.iter().map(|c| c.1).sum()
    }

    /// Loop lengths in descending order.
    pub fn ranked(&self) -> Vec<usize> {
        self.counts.iter().rev().flat_map(|&(j, c)| std::iter::repeat_n(j, c as usize)).collect()
    }

    pub fn largest(&self) -> usize {
        self.counts.last().map_or(0, |c| c.0)
    }

    /// `i`-th largest length (1-based), zero if there are fewer loops.
    pub fn ranked_length(&self, i: usize) -> usize {
        let mut seen = 0u64;
        for &(j, c) in self.counts.iter().rev() {
            seen += c;
            if seen >= i as u64 {
                return j;
            }
        }
        0
    }

    /// Particles in loops of length at most `m`.
    pub fn particles_le(&self, m: usize) -> usize {
        self.counts.iter().filter(|c| c.0 <= m).map(|&(j, c)| j * c as usize).sum()
    }

    /// Particles in loops of length at least `m`.
    pub fn particles_ge(&self, m: usize) -> usize {
        self.counts.iter().filter(|c| c.0 >= m).map(|&(j, c)| j * c as usize).sum()
    }

    pub fn count_of(&self, j: usize) -> u64 {
        self.counts.binary_search_by_key(&j, |c| c.0).map_or(0, |i| self.counts[i].1)
    }
}

/// Free soup: independent `Poisson(θ_j)` loop counts for `j = 1..N`.
pub fn sample_soup<R: Rng + ?Sized>(w: &WeightTable, rng: &mut R) -> LoopConfiguration {
    let mut counts = Vec::new();
    for j in 1..=w.len() {
        let theta = w.theta(j);
        if theta > 0.0 {
            // Poisson::new only fails for non-positive or non-finite rates
            let c = Poisson::new(theta).expect("finite positive rate").sample(rng) as u64;
            if c > 0 {
                counts.push((j, c));
            }
        }
    }
    LoopConfiguration::from_counts(counts)
}

/// Exact sampler of the soup conditioned on `N = n`, removing one
/// size-biased loop at a time. Cumulative removal laws are tabulated for
/// every level `n ≤ table_limit`; higher levels are computed on the fly.
#[derive(Debug, Clone)]
pub struct ConditionedSampler<'a> {
    pmf: &'a PmfTable,
    weights: &'a WeightTable,
    rows: Vec<Vec<f64>>,
}

impl<'a> ConditionedSampler<'a> {
    pub const DEFAULT_TABLE_LIMIT: usize = 2048;

    pub fn new(pmf: &'a PmfTable, weights: &'a WeightTable, table_limit: usize) -> Self {
        let top = table_limit.min(pmf.n_max());
        let rows = (0..=top)
            .into_par_iter()
            .map(|n| match removal_distribution(pmf, weights, n) {
                Ok(p) => cumulative(&p),
                Err(_) => Vec::new(),
            })
            .collect();
        Self { pmf, weights, rows }
    }

    fn draw_length<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<usize> {
        let u: f64 = rng.random();
        let pick = |cum: &[f64]| -> usize {
            let x = u * cum[cum.len() - 1];
            (cum.partition_point(|c| *c <= x) + 1).min(cum.len())
        };
        match self.rows.get(n) {
            Some(row) if !row.is_empty() => Ok(pick(row)),
            Some(_) => Err(Error::NullEvent(n)),
            None => Ok(pick(&cumulative(&removal_distribution(self.pmf, self.weights, n)?))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LoopConfiguration> {
        if self.pmf.log_prob(n) == f64::NEG_INFINITY {
            return Err(Error::NullEvent(n));
        }
        let mut rest = n;
        let mut lengths = Vec::new();
        while rest > 0 {
            let j = self.draw_length(rest, rng)?;
            lengths.push(j);
            rest -= j;
        }
        Ok(LoopConfiguration::from_lengths(lengths))
    }
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// One exact draw of the conditioned soup.
pub fn sample_conditioned(pmf: &PmfTable, w: &WeightTable, n: usize, seed: SeedSpec) -> Result<LoopConfiguration> {
    ConditionedSampler::new(pmf, w, 0).sample(n, &mut seed.rng())
}

/// Attach torus paths to every loop: uniform base point, winding vector with
/// weight `exp(-|wL|²/(4βj))` per axis, and a Brownian bridge (increment
/// variance `2Δ` per axis) to the wound endpoint.
pub fn sample_spatial_torus(
    config: &LoopConfiguration,
    params: &ModelParams,
    ds: f64,
    seed: SeedSpec,
) -> Result<LoopConfiguration> {
    if params.geometry.kind != DomainKind::Torus {
        return Err(Error::Unsupported("spatial paths are only sampled on the torus".into()));
    }
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(Error::Domain(format!("path step must be positive, got {ds}")));
    }
    let d = params.geometry.dim;
    let l = params.l;
    let mut rng = seed.rng();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut paths = Vec::new();
    for j in config.ranked() {
        let duration = params.beta * j as f64;
        let steps = ((duration / ds).round() as usize).max(1);
        let dt = duration / steps as f64;
        let start: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * l).collect();
        let winding: Vec<i64> = (0..d).map(|_| sample_winding(l, duration, &mut rng)).collect();
        let mut cur = vec![0.0; d];
        let mut points = Vec::with_capacity(steps + 1);
        points.push(start.clone());
        for k in 0..steps - 1 {
            let remaining = duration - k as f64 * dt;
            for a in 0..d {
                let target = winding[a] as f64 * l;
                let mean = cur[a] + (target - cur[a]) * dt / remaining;
                let var = 2.0 * dt * (remaining - dt) / remaining;
                cur[a] = mean + var.sqrt() * std_normal.sample(&mut rng);
            }
            points.push((0..d).map(|a| (start[a] + cur[a]).rem_euclid(l)).collect());
        }
        points.push(start);
        paths.push(LoopPath { length: j, winding, points });
    }
    let mut out = config.clone();
    out.paths = Some(paths);
    Ok(out)
}

/// Winding number with weight `exp(-(wL)²/(4T))`, truncated at six standard
/// deviations.
fn sample_winding<R: Rng + ?Sized>(l: f64, duration: f64, rng: &mut R) -> i64 {
    let sd = (2.0 * duration).sqrt() / l;
    let top = (6.0 * sd).ceil() as i64;
    let weights: Vec<f64> = (-top..=top).map(|w| (-(w as f64 * l).powi(2) / (4.0 * duration)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as i64 - top;
        }
        u -= w;
    }
    0
}

/// `loop_id,step,x1,…,xd,length_j,is_largest` rows for every path.
pub fn write_paths_csv<W: Write>(config: &LoopConfiguration, mut out: W) -> Result<()> {
    let paths = config.paths.as_ref().ok_or_else(|| Error::Domain("configuration has no paths".into()))?;
    let d = paths.first().map_or(0, |p| p.winding.len());
    let mut header = vec!["loop_id".to_string(), "step".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["length_j".to_string(), "is_largest".to_string()]);
    writeln!(out, "{}", header.join(","))?;
    let largest = config.largest();
    for (id, p) in paths.iter().enumerate() {
        let flag = usize::from(id == 0 && p.length == largest);
        for (k, x) in p.points.iter().enumerate() {
            let coords: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{id},{k},{},{},{flag}", coords.join(","), p.length)?;
        }
    }
    Ok(())
}

/// Batched-means estimate with a normal 99% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    pub batches: usize,
}

/// `z` with `P(|Z| ≤ z) = 0.99`.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Mean of `observable` over `n` draws of `sample`, split into batches; each
/// batch draws from its own stream of `seed`, so the result does not depend
/// on thread scheduling.
pub fn mc_estimate<F, S>(observable: F, sample: S, n: usize, seed: u64) -> Result<Estimate>
where
    F: Fn(&LoopConfiguration) -> f64 + Sync,
    S: Fn(&mut ChaCha20Rng) -> Result<LoopConfiguration> + Sync,
{
    if n < 2 {
        return Err(Error::Domain("estimate needs at least 2 samples".into()));
    }
    let batches = n.min(32);
    let sums: Vec<(f64, usize)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = n / batches + usize::from(b < n % batches);
            let mut rng = SeedSpec::new(seed, b as u64).rng();
            let mut acc = 0.0;
            for _ in 0..size {
                acc += observable(&sample(&mut rng)?);
            }
            Ok((acc, size))
        })
        .collect::<Result<_>>()?;
    let means: Vec<f64> = sums.iter().map(|(s, k)| s / *k as f64).collect();
    let mean = sums.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let half_width = Z99 * (var / batches as f64).sqrt();
    Ok(Estimate { mean, half_width, lo: mean - half_width, hi: mean + half_width, samples: n, batches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{compound_pmf, Window};
    use crate::spectral::Geometry;
    use crate::weights::build_weights;
    use std::collections::HashMap;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| SeedSpec::new(42, 3).rng().random()).collect();
        assert!(a.windows(2).all(|p| p[0] == p[1]));
        let mut r1 = SeedSpec::new(42, 0).rng();
        let mut r2 = SeedSpec::new(42, 1).rng();
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
    }

    #[test]
    fn configuration_accessors() {
        let c = LoopConfiguration::from_lengths(vec![3, 1, 3, 7]);
        assert_eq!(c.total, 14);
        assert_eq!(c.ranked(), vec![7, 3, 3, 1]);
        assert_eq!(c.ranked_length(3), 3);
        assert_eq!(c.ranked_length(5), 0);
        assert_eq!(c.particles_le(3), 7);
        assert_eq!(c.particles_ge(3), 13);
        assert_eq!(c.count_of(3), 2);
    }

    #[test]
    fn conditioned_total_and_null_event() {
        let w = WeightTable::from_values(vec![0.0, 1.0, 0.5]);
        let pmf = compound_pmf(&w, Window::full(3), 20).unwrap();
        let s = ConditionedSampler::new(&pmf, &w, 10);
        let mut rng = SeedSpec::new(1, 0).rng();
        for n in [2, 3, 5, 12, 17] {
            for _ in 0..50 {
                let c = s.sample(n, &mut rng).unwrap();
                assert_eq!(c.total, n);
                assert_eq!(c.count_of(1), 0);
            }
        }
        assert!(matches!(s.sample(1, &mut rng), Err(Error::NullEvent(1))));
    }

    #[test]
    fn conditioned_matches_rejection_on_tiny_instance() {
        let w = WeightTable::from_values(vec![1.2, 0.7, 0.9, 0.4]);
        let n = 6;
        let pmf = compound_pmf(&w, Window::full(4), n).unwrap();
        let s = ConditionedSampler::new(&pmf, &w, n);
        let draws = 40_000;
        let mut rng = SeedSpec::new(5, 0).rng();
        let mut exact: HashMap<Vec<usize>, f64> = HashMap::new();
        for _ in 0..draws {
            *exact.entry(s.sample(n, &mut rng).unwrap().ranked()).or_default() += 1.0;
        }
        let mut rej: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut kept = 0;
        let mut rng = SeedSpec::new(5, 1).rng();
        while kept < draws {
            let c = sample_soup(&w, &mut rng);
            if c.total == n {
                *rej.entry(c.ranked()).or_default() += 1.0;
                kept += 1;
            }
        }
        for (k, a) in &exact {
            let b = rej.get(k).copied().unwrap_or(0.0);
            let p = a / draws as f64;
            let sd = (2.0 * p * (1.0 - p) / draws as f64).sqrt();
            assert!((p - b / draws as f64).abs() < 4.0 * sd + 1e-4, "{k:?}");
        }
    }

    #[test]
    fn spatial_paths_close_and_diffuse() {
        let p = ModelParams::critical(Geometry::torus(2), 1.0, 40.0);
        let config = LoopConfiguration::from_lengths(vec![2000, 5]);
        let ds = 0.05;
        let out = sample_spatial_torus(&config, &p, ds, SeedSpec::new(9, 0)).unwrap();
        let paths = out.paths.as_ref().unwrap();
        for path in paths {
            assert_eq!(path.points.first(), path.points.last());
        }
        let long = &paths[0];
        let mut sq = 0.0;
        let mut k = 0.0;
        for w in long.points.windows(2) {
            for a in 0..2 {
                let mut dx = w[1][a] - w[0][a];
                dx -= 40.0 * (dx / 40.0).round();
                sq += dx * dx;
                k += 1.0;
            }
        }
        let var = sq / k;
        let sd = 2.0 * ds * (2.0 / k).sqrt();
        assert!((var - 2.0 * ds).abs() < 4.0 * sd + 2.0 * ds / 40_000.0 * 2.0, "{var}");
        let b = ModelParams::critical(Geometry::dirichlet_box(3), 1.0, 4.0);
        assert!(matches!(sample_spatial_torus(&config, &b, ds, SeedSpec::new(1, 0)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn estimator_basics() {
        let p = ModelParams::critical(Geometry::torus(3), 1.0, 6.0);
        let w = build_weights(&p, 0.0).unwrap();
        let e = mc_estimate(|_| 1.0, |r| Ok(sample_soup(&w, r)), 100, 3).unwrap();
        assert_eq!(e.half_width, 0.0);
        assert_eq!(e.mean, 1.0);
        let m = 10;
        let e = mc_estimate(|c| c.particles_le(m) as f64, |r| Ok(sample_soup(&w, r)), 20_000, 3).unwrap();
        let want = crate::weights::expected_particles(&w, m);
        assert!(e.lo <= want && want <= e.hi, "{e:?} {want}");
        let again = mc_estimate(|c| c.particles_le(m) as f64, |r| Ok(sample_soup(&w, r)), 20_000, 3).unwrap();
        assert_eq!(e, again);
    }
}
