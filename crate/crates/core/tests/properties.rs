use derivbound::estimator::ratio_objective;
use derivbound::martingale::{transform_ratio, WalshMartingale};
use derivbound::symbols::{make_symbol, DerivativeFamily, MultiIndex};
use derivbound::torus::{apply_multiplier, lp_norm, TorusField, TorusGrid};
use num_complex::Complex64;
use proptest::prelude::*;

fn field(n: usize, m: usize, vals: &[(f64, f64)]) -> TorusField {
    let grid = TorusGrid::new(n, m, false).unwrap();
    let values = vals.iter().take(grid.len()).map(|&(a, b)| Complex64::new(a, b)).collect();
    TorusField::from_physical(grid, values).unwrap()
}

fn values(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
}

fn cor12(p: f64) -> DerivativeFamily {
    DerivativeFamily::new(
        MultiIndex::new(vec![1, 1]),
        vec![MultiIndex::new(vec![2, 0]), MultiIndex::new(vec![0, 2])],
        p,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_and_round_trip(v in values(64)) {
        let f = field(2, 8, &v);
        let s = f.to_spectral();
        prop_assert!((s.l2_norm_spectral() - f.l2_norm_physical()).abs() <= 1e-12);
        let back = s.to_physical();
        for (a, b) in back.values().iter().zip(f.values()) {
            prop_assert!((a - b).norm() <= 1e-13);
        }
    }

    #[test]
    fn multipliers_are_linear(v in values(64), w in values(64), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let f = field(2, 8, &v);
        let g = field(2, 8, &w);
        let sym = make_symbol(&MultiIndex::new(vec![1, 1])).unwrap();
        let (ca, cb) = (Complex64::new(a, 0.0), Complex64::new(b, 0.0));
        let lhs = apply_multiplier(&f.combine(ca, &g, cb).unwrap(), &sym);
        let rhs = apply_multiplier(&f, &sym).combine(ca, &apply_multiplier(&g, &sym), cb).unwrap();
        let d = lhs.combine(Complex64::new(1.0, 0.0), &rhs, Complex64::new(-1.0, 0.0)).unwrap();
        prop_assert!(d.l2_norm_spectral() <= 1e-12);
    }

    #[test]
    fn symbols_are_homogeneous(b1 in 0u32..4, b2 in 0u32..4, b3 in 0u32..4,
                               x in prop::array::uniform3(-5.0f64..5.0), lam in 0.01f64..100.0) {
        prop_assume!(x.iter().map(|t| t * t).sum::<f64>() > 1e-6);
        let s = make_symbol(&MultiIndex::new(vec![b1, b2, b3])).unwrap();
        let y: Vec<f64> = x.iter().map(|t| t * lam).collect();
        prop_assert!((s.eval(&x) - s.eval(&y)).abs() <= 1e-12);
        prop_assert!(s.eval(&x).abs() <= 1.0 + 1e-15);
    }

    #[test]
    fn ratio_is_translation_invariant(v in values(64), s1 in 0i64..8, s2 in 0i64..8, p in 1.2f64..5.0) {
        let f = field(2, 8, &v);
        let g = f.translated(&[s1, s2]).unwrap();
        let fam = cor12(p);
        let a = ratio_objective(&fam, &f, p, 2).unwrap();
        let b = ratio_objective(&fam, &g, p, 2).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        let na = lp_norm(&f, p, 1).unwrap();
        let nb = lp_norm(&g, p, 1).unwrap();
        prop_assert!((na - nb).abs() <= 1e-12 * na.max(1.0));
    }

    #[test]
    fn norms_are_homogeneous(v in values(64), c in 0.1f64..10.0, p in 1.1f64..6.0) {
        let f = field(2, 8, &v);
        let g = f.scaled(Complex64::new(0.0, c));
        let a = lp_norm(&f, p, 2).unwrap();
        let b = lp_norm(&g, p, 2).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn sign_transform_is_an_involution(r in 1usize..7, seed in 0u64..1000, p in 1.1f64..8.0) {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let tables: Vec<Vec<f64>> = (0..r).map(|l| (0..1usize << l).map(|_| next()).collect()).collect();
        let m = WalshMartingale::new(tables).unwrap();
        let sigma: Vec<i8> = (0..r).map(|l| if (seed >> l) & 1 == 1 { -1 } else { 1 }).collect();
        let twice = m.transformed(&sigma).unwrap().transformed(&sigma).unwrap();
        prop_assert_eq!(twice.tables(), m.tables());
        let ratio = transform_ratio(&m, &sigma, 2.0).unwrap();
        prop_assert!((ratio - 1.0).abs() <= 1e-12);
        let forward = transform_ratio(&m, &sigma, p).unwrap();
        let back = transform_ratio(&m.transformed(&sigma).unwrap(), &sigma, p).unwrap();
        prop_assert!((forward * back - 1.0).abs() <= 1e-12);
    }
}
