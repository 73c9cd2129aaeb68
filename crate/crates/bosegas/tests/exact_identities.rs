use bosegas::partition::{compound_pmf, compound_pmf_fft, rdm_trace, removal_distribution, Window};
use bosegas::sampler::{ConditionedSampler, SeedSpec};
use bosegas::spectral::Geometry;
use bosegas::weights::{build_weights, ModelParams, WeightTable};
use proptest::prelude::*;

fn weight_vec() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..5.0, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_path_matches_direct(ws in weight_vec(), extra in 0usize..200) {
        let w = WeightTable::from_values(ws);
        let n_max = w.len() + extra;
        let a = compound_pmf(&w, Window::full(w.len()), n_max).unwrap();
        let b = compound_pmf_fft(&w, Window::full(w.len()), n_max).unwrap();
        for n in 0..=n_max {
            let (x, y) = (a.prob(n), b.prob(n));
            if x > 1e-250 {
                prop_assert!((x - y).abs() <= 1e-9 * x, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn trace_identity_holds(ws in weight_vec(), n in 1usize..120) {
        let w = WeightTable::from_values(ws);
        let pmf = compound_pmf(&w, Window::full(w.len()), n).unwrap();
        let tr = rdm_trace(&pmf, &w, n).unwrap();
        prop_assert!((tr - n as f64).abs() <= 1e-10 * n as f64);
    }

    #[test]
    fn removal_law_is_a_distribution(ws in weight_vec(), n in 1usize..120) {
        let w = WeightTable::from_values(ws);
        let pmf = compound_pmf(&w, Window::full(w.len()), n).unwrap();
        let q = removal_distribution(&pmf, &w, n).unwrap();
        let total: f64 = q.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        // entry j - 1 is the length-j probability; lengths beyond the table are impossible
        prop_assert!(q.iter().enumerate().all(|(i, p)| *p >= 0.0 && (*p == 0.0 || i < w.len())));
    }

    #[test]
    fn conditioned_draws_hit_the_target(ws in weight_vec(), n in 1usize..200, seed in any::<u64>()) {
        let w = WeightTable::from_values(ws);
        let pmf = compound_pmf(&w, Window::full(w.len()), n).unwrap();
        let s = ConditionedSampler::new(&pmf, &w, 64);
        let mut rng = SeedSpec::new(seed, 0).rng();
        let c = s.sample(n, &mut rng).unwrap();
        prop_assert_eq!(c.total, n);
        prop_assert!(c.largest() <= w.len());
    }
}

#[test]
fn geometric_weights_agree_across_paths() {
    for g in [Geometry::torus(3), Geometry::dirichlet_box(3), Geometry::neumann_box(3)] {
        let p = ModelParams::critical(g, 1.0, 12.0);
        let w = build_weights(&p, 0.0).unwrap();
        let n = p.particles();
        let a = compound_pmf(&w, Window::full(w.len()), n).unwrap();
        let b = compound_pmf_fft(&w, Window::full(w.len()), n).unwrap();
        let worst = (0..=n).map(|k| ((a.prob(k) - b.prob(k)) / a.prob(k)).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{g}: {worst}");
    }
}
