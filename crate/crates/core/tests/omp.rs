mod common;

use common::{c, channel, gaussian_matrix, rng, two_path_scene, unit_phasor};
use dtek::channel::{add_awgn, angle_steering, circular_distance};
use dtek::omp::{
    build_dictionary, estimate_omp, kronecker_bytes, omp1d, omp2d, Dictionary, DictionaryKind, SparseSupport,
    StopRule, DEFAULT_MEMORY_CAP,
};
use dtek::spectral::dirichlet;
use dtek::{ChannelMatrix, Error};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn gram(d: &Dictionary) -> Array2<Complex64> {
    d.atoms().t().mapv(|z| z.conj()).dot(d.atoms())
}

/// `H - sum coeff a_p b_q^T` rebuilt from the support.
fn residual(h: &ChannelMatrix, a: &Dictionary, b: &Dictionary, sup: &SparseSupport) -> Array2<Complex64> {
    let mut m = h.entries.clone();
    for e in &sup.entries {
        let ap = a.atoms().column(e.p_theta);
        let bq = b.atoms().column(e.p_tau);
        for ((i, j), v) in m.indexed_iter_mut() {
            *v -= e.coeff * ap[i] * bq[j];
        }
    }
    m
}

fn fro(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn dictionary_examples() {
    let d = build_dictionary(4, 4, DictionaryKind::Angle).unwrap();
    let g = gram(&d);
    for ((i, j), z) in g.indexed_iter() {
        let expect = if i == j { 4.0 } else { 0.0 };
        assert!((z - c(expect, 0.0)).norm() < 1e-12);
    }
    assert_eq!(d.grid(), &[0.0, 0.25, 0.5, 0.75]);

    let d = build_dictionary(64, 200, DictionaryKind::Delay).unwrap();
    assert_eq!(d.atoms().dim(), (64, 200));
    let g = gram(&d);
    assert!((0..200).all(|p| (g[[p, p]] - c(64.0, 0.0)).norm() < 1e-10));
    for p in [0, 17, 199] {
        let col = d.atoms().column(p);
        let expect = angle_steering(p as f64 / 200.0, 64);
        assert!(col.iter().zip(expect.iter()).all(|(x, y)| (x - y).norm() < 1e-12));
    }
    // Coherence against the closed-form Dirichlet magnitude.
    let mut coherence: f64 = 0.0;
    for p in 0..200 {
        for q in 0..200 {
            if p != q {
                let oracle = dirichlet((p as f64 - q as f64) / 200.0, 64).abs() / 64.0;
                assert!((g[[p, q]].norm() / 64.0 - oracle).abs() < 1e-10);
                coherence = coherence.max(oracle);
            }
        }
    }
    assert!((coherence - dirichlet(1.0 / 200.0, 64).abs() / 64.0).abs() < 1e-12);
    assert!(build_dictionary(4, 1, DictionaryKind::Angle).is_err());
}

#[test]
fn single_atom_identity() {
    let (a, b) = (
        build_dictionary(8, 16, DictionaryKind::Angle).unwrap(),
        build_dictionary(6, 12, DictionaryKind::Delay).unwrap(),
    );
    let alpha = c(0.3, -1.1);
    let h = channel(8, 6, &[(alpha, 5.0 / 16.0, 7.0 / 12.0)]);
    for sup in [
        omp2d(&h, &a, &b, StopRule::KnownSparsity { paths: 1 }).unwrap(),
        omp1d(&h, &a, &b, StopRule::KnownSparsity { paths: 1 }).unwrap(),
    ] {
        assert_eq!(sup.len(), 1);
        assert_eq!((sup.entries[0].p_theta, sup.entries[0].p_tau), (5, 7));
        assert!((sup.entries[0].coeff - alpha).norm() < 1e-10);
    }
}

#[test]
fn two_on_grid_paths_recovered_exactly() {
    let (a, b) = (
        build_dictionary(16, 32, DictionaryKind::Angle).unwrap(),
        build_dictionary(16, 32, DictionaryKind::Delay).unwrap(),
    );
    let (g1, g2) = (c(1.0, 0.2), c(-0.4, 0.7));
    let h = channel(16, 16, &[(g1, 3.0 / 32.0, 20.0 / 32.0), (g2, 9.0 / 32.0, 24.0 / 32.0)]);
    let sup = omp2d(&h, &a, &b, StopRule::KnownSparsity { paths: 2 }).unwrap();
    let mut got: Vec<(usize, usize, Complex64)> = sup.entries.iter().map(|e| (e.p_theta, e.p_tau, e.coeff)).collect();
    got.sort_by_key(|x| x.0);
    assert_eq!((got[0].0, got[0].1, got[1].0, got[1].1), (3, 20, 9, 24));
    assert!((got[0].2 - g1).norm() < 1e-9 && (got[1].2 - g2).norm() < 1e-9);
    assert!(*sup.residual_norms.last().unwrap() <= 1e-9 * h.frobenius_norm());
}

#[test]
fn one_and_two_dimensional_omp_agree() {
    let (a, b) = (
        build_dictionary(8, 16, DictionaryKind::Angle).unwrap(),
        build_dictionary(8, 16, DictionaryKind::Delay).unwrap(),
    );
    for seed in 0..20 {
        let mut rng = rng(1000 + seed);
        let q = rng.random_range(1..=3);
        let paths: Vec<_> = (0..q).map(|_| (unit_phasor(&mut rng), rng.random::<f64>(), rng.random::<f64>())).collect();
        let h = add_awgn(&channel(8, 8, &paths), 10.0, seed).unwrap();
        let stop = StopRule::KnownSparsity { paths: q };
        let two = omp2d(&h, &a, &b, stop).unwrap();
        let one = omp1d(&h, &a, &b, stop).unwrap();
        assert_eq!(one.len(), two.len());
        for (x, y) in one.entries.iter().zip(&two.entries) {
            assert_eq!((x.p_theta, x.p_tau), (y.p_theta, y.p_tau), "seed {seed}");
            assert!((x.coeff - y.coeff).norm() < 1e-9);
        }
    }
}

#[test]
fn off_grid_estimates_within_half_a_cell() {
    let est = estimate_omp(&two_path_scene(), 200, 200, StopRule::KnownSparsity { paths: 2 }).unwrap();
    let truth = [(15.25 / 32.0, 10.37 / 32.0), (25.35 / 32.0, 25.43 / 32.0)];
    assert_eq!(est.num_paths(), 2);
    for (t, u) in truth {
        let ok = est.paths.iter().any(|p| {
            circular_distance(p.theta_norm, t) <= 1.0 / 400.0 + 1e-12 && circular_distance(p.tau_norm, u) <= 1.0 / 400.0 + 1e-12
        });
        assert!(ok, "no estimate near ({t}, {u}): {:?}", est.paths);
    }
}

#[test]
fn empty_channel_and_memory_cap() {
    let zero = ChannelMatrix::noiseless(Array2::zeros((8, 8)));
    let est = estimate_omp(&zero, 16, 16, StopRule::ResidualRatio { ratio: 0.1 }).unwrap();
    assert_eq!(est.num_paths(), 0);

    assert_eq!(kronecker_bytes(64, 64, 200, 200), 64 * 64 * 200 * 200 * 16);
    assert!(kronecker_bytes(64, 64, 200, 200) > DEFAULT_MEMORY_CAP);
    let (a, b) = (
        build_dictionary(64, 200, DictionaryKind::Angle).unwrap(),
        build_dictionary(64, 200, DictionaryKind::Delay).unwrap(),
    );
    let h = gaussian_matrix(64, 64, 1);
    let err = omp1d(&h, &a, &b, StopRule::KnownSparsity { paths: 1 }).unwrap_err();
    assert!(matches!(err, Error::MemoryCap { required, cap } if required == kronecker_bytes(64, 64, 200, 200) && cap == DEFAULT_MEMORY_CAP));
}

#[test]
fn dimension_mismatch_and_bad_stop_rules() {
    let a = build_dictionary(8, 16, DictionaryKind::Angle).unwrap();
    let h = gaussian_matrix(8, 6, 0);
    assert!(matches!(omp2d(&h, &a, &a, StopRule::KnownSparsity { paths: 1 }), Err(Error::Dimension(_))));
    let b = build_dictionary(6, 12, DictionaryKind::Delay).unwrap();
    for bad in [
        StopRule::KnownSparsity { paths: 0 },
        StopRule::MaxIters { iters: 0 },
        StopRule::ResidualRatio { ratio: 1.0 },
    ] {
        assert!(omp2d(&h, &a, &b, bad).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residual_monotone_and_orthogonal(seed in any::<u64>(), iters in 1usize..8) {
        let (a, b) = (
            build_dictionary(8, 12, DictionaryKind::Angle).unwrap(),
            build_dictionary(6, 10, DictionaryKind::Delay).unwrap(),
        );
        let h = gaussian_matrix(8, 6, seed);
        let sup = omp2d(&h, &a, &b, StopRule::MaxIters { iters }).unwrap();
        prop_assert_eq!(sup.len(), iters);
        let mut prev = h.frobenius_norm();
        for &r in &sup.residual_norms {
            prop_assert!(r < prev, "residual rose from {} to {}", prev, r);
            prev = r;
        }
        let m = residual(&h, &a, &b, &sup);
        prop_assert!((fro(&m) - prev).abs() < 1e-10);
        // a_p^H M conj(b_q) vanishes on the support.
        for e in &sup.entries {
            let ap = a.atoms().column(e.p_theta);
            let bq = b.atoms().column(e.p_tau);
            let mut corr = c(0.0, 0.0);
            for ((i, j), v) in m.indexed_iter() {
                corr += ap[i].conj() * v * bq[j].conj();
            }
            prop_assert!(corr.norm() < 1e-9, "correlation {}", corr);
        }
        let mut pairs: Vec<_> = sup.entries.iter().map(|e| (e.p_theta, e.p_tau)).collect();
        pairs.sort();
        pairs.dedup();
        prop_assert_eq!(pairs.len(), iters);
    }

    #[test]
    fn residual_ratio_rule_stops_at_target(seed in any::<u64>(), ratio in 0.05..0.9f64) {
        let (a, b) = (
            build_dictionary(6, 12, DictionaryKind::Angle).unwrap(),
            build_dictionary(6, 12, DictionaryKind::Delay).unwrap(),
        );
        let h = gaussian_matrix(6, 6, seed);
        let sup = omp2d(&h, &a, &b, StopRule::ResidualRatio { ratio }).unwrap();
        let last = *sup.residual_norms.last().unwrap();
        prop_assert!(last <= ratio * h.frobenius_norm() || sup.len() == 36);
        if sup.len() > 1 {
            prop_assert!(sup.residual_norms[sup.len() - 2] > ratio * h.frobenius_norm());
        }
    }
}
