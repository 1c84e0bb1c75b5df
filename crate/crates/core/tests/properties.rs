use proptest::prelude::*;

use wavekin::cache::{Cache, Lookup};
use wavekin::diagrams::{diagram_count, trees_up_to};
use wavekin::kernels::{exp_difference, z_closed, z_from_tcal, z_infinity, GammaQuad};
use wavekin::lattice::{dot, enumerate_orthogonal, IncidenceMatrix};
use wavekin::model::ModelParams;
use wavekin::stochastic::{circular_gaussian, site_rng};

fn rates() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(1.0f64..8.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn kernel_bounds(g in rates(), tau0 in 0.0f64..12.0, j in 0usize..4) {
        let q = GammaQuad::new(g).unwrap();
        let z = z_closed(tau0, &q, j);
        prop_assert!(z >= 0.0);
        prop_assert!(z <= tau0.min(1.0 / g[j]) * (1.0 + 1e-14));
    }

    #[test]
    fn kernel_time_factor_identity(g in rates(), tau0 in 0.01f64..6.0, j in 0usize..4) {
        let q = GammaQuad::new(g).unwrap();
        let a = z_closed(tau0, &q, j);
        let b = z_from_tcal(tau0, &q, j).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
    }

    #[test]
    fn kernel_long_time_limit(g in rates(), j in 0usize..4) {
        let q = GammaQuad::new(g).unwrap();
        prop_assert!((z_closed(40.0, &q, j) - z_infinity(&q)).abs() <= 1e-14);
    }

    #[test]
    fn exp_difference_is_symmetric(x in 0.0f64..20.0, y in 0.0f64..20.0, t in 0.0f64..5.0) {
        let a = exp_difference(x, y, t);
        let b = exp_difference(y, x, t);
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300) + 1e-300);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn model_json_round_trip(d in 2usize..8, l in 2.0f64..100.0, r in 0.1f64..3.0, b0 in 0.0f64..4.0,
                             sigma in 0.1f64..4.0, eps in 0.001f64..0.5) {
        let p = ModelParams { d, l, r_star: r, b0, sigma, epsilon: eps };
        prop_assume!(p.validate().is_ok());
        prop_assert_eq!(ModelParams::from_json_str(&p.to_json_string()).unwrap(), p);
    }

    #[test]
    fn orthogonal_enumeration_is_orthogonal(m in prop::collection::vec(-3i64..=3, 2..=3), r in 1i64..3) {
        prop_assume!(m.iter().any(|&c| c != 0));
        for v in enumerate_orthogonal(&m, r).unwrap() {
            prop_assert_eq!(dot(&v, &m), 0);
            prop_assert!(v.iter().all(|c| c.abs() <= r));
        }
    }

    #[test]
    fn omegas_are_even_in_the_polyvector(n in 3usize..6, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = IncidenceMatrix::cyclic(n);
        let z: Vec<Vec<i64>> = (0..n).map(|_| (0..2).map(|_| rng.gen_range(-4..=4)).collect()).collect();
        let neg: Vec<Vec<i64>> = z.iter().map(|v| v.iter().map(|c| -c).collect()).collect();
        // each omega is quadratic in z
        prop_assert_eq!(a.omegas(&z), a.omegas(&neg));
    }

    #[test]
    fn cache_round_trip_is_bit_identical(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..64),
                                         m_cut in 0i64..10) {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::new(dir.path());
        c.store("prop", &m_cut, &xs).unwrap();
        let (back, st) = c.load::<i64, Vec<f64>>("prop", &m_cut).unwrap();
        prop_assert_eq!(st, Lookup::Hit);
        let back = back.unwrap();
        prop_assert_eq!(back.len(), xs.len());
        prop_assert!(back.iter().zip(&xs).all(|(a, b)| a.to_bits() == b.to_bits()));
        let (miss, st) = c.load::<i64, Vec<f64>>("prop", &(m_cut + 1)).unwrap();
        prop_assert!(miss.is_none());
        prop_assert_eq!(st, Lookup::Miss);
    }

    #[test]
    fn site_streams_are_reproducible(seed in any::<u64>(), sample in 0u64..1000, site in 0usize..500) {
        let a = circular_gaussian(&mut site_rng(seed, sample, site), 2.0);
        let b = circular_gaussian(&mut site_rng(seed, sample, site), 2.0);
        prop_assert_eq!(a, b);
        let c = circular_gaussian(&mut site_rng(seed, sample, site + 1), 2.0);
        prop_assert_ne!(a, c);
    }
}

#[test]
fn diagram_counts_match_enumeration() {
    let trees = trees_up_to(5);
    for (m, level) in trees.iter().enumerate() {
        assert_eq!(level.len() as u64, diagram_count(m));
        assert!(level.iter().all(|t| t.degree() == m));
    }
}
