use num_complex::Complex64;
use proptest::prelude::*;

use photomesh::decompose::{clip_to_hardware, decompose, decompose_clip_evaluate};
use photomesh::mesh::{achievable_range, mesh_unitary, sample_hardware, square_layout, triangular_layout};
use photomesh::optimize::{initial_guess_redundant, optimize_settings};
use photomesh::unitary::{fidelity, haar_random_unitary};
use photomesh::{LayoutKind, MeshSettings, NodeSetting};

/// `|M_11|^2` of splitter, internal phase, splitter, built from 2x2 matrices.
fn mzi_by_matrices(r1: f64, r2: f64, phi: f64) -> f64 {
    let b = |r: f64| {
        let i = Complex64::i();
        [
            [Complex64::from(r.sqrt()), i * (1.0 - r).sqrt()],
            [i * (1.0 - r).sqrt(), Complex64::from(r.sqrt())],
        ]
    };
    let (b1, b2) = (b(r1), b(r2));
    let p = Complex64::from_polar(1.0, phi);
    // M = B2 diag(p, 1) B1
    let m11 = b2[0][0] * p * b1[0][0] + b2[0][1] * b1[1][0];
    m11.norm_sqr()
}

fn kind() -> impl Strategy<Value = LayoutKind> {
    prop_oneof![Just(LayoutKind::Square), Just(LayoutKind::Triangular)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_settings_give_unitary_meshes(n in 2usize..9, extra in 0usize..3, seed in any::<u64>()) {
        let layout = square_layout(n, extra).unwrap();
        let mut rng = photomesh::seed::rng(seed);
        use rand::Rng;
        let nodes = (0..layout.len())
            .map(|_| NodeSetting::new(rng.random_range(0.0..=1.0), rng.random_range(-7.0..7.0)).unwrap())
            .collect();
        let phases = (0..n).map(|_| rng.random_range(-7.0..7.0)).collect();
        let s = MeshSettings::new(layout, nodes, phases).unwrap();
        prop_assert!(mesh_unitary(&s).unitarity_deviation() < 1e-12);
    }

    #[test]
    fn decomposition_roundtrips(n in 2usize..12, seed in any::<u64>(), k in kind()) {
        let u = haar_random_unitary(n, seed).unwrap();
        let s = decompose(&u, k).unwrap();
        prop_assert!(mesh_unitary(&s).max_abs_diff(&u).unwrap() < 1e-10);
        prop_assert_eq!(s.per_node().len(), n * (n - 1) / 2);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(n in 2usize..10, a in any::<u64>(), b in any::<u64>()) {
        let u = haar_random_unitary(n, a).unwrap();
        let v = haar_random_unitary(n, b).unwrap();
        let f = fidelity(&u, &v).unwrap();
        prop_assert!((f - fidelity(&v, &u).unwrap()).abs() < 1e-14);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((fidelity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn range_contains_every_phase(r1 in 0.01f64..0.99, r2 in 0.01f64..0.99, phi in 0.0f64..std::f64::consts::TAU) {
        let (lo, hi) = achievable_range(r1, r2).unwrap();
        let r = mzi_by_matrices(r1, r2, phi);
        prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
    }

    #[test]
    fn clipping_is_idempotent_and_feasible(n in 2usize..8, seed in any::<u64>(), sigma in 0.0f64..0.15) {
        let u = haar_random_unitary(n, seed).unwrap();
        let s = decompose(&u, LayoutKind::Square).unwrap();
        let hw = sample_hardware(s.layout(), sigma, seed ^ 0x55).unwrap();
        let (c, _) = clip_to_hardware(&s, &hw).unwrap();
        let (cc, again) = clip_to_hardware(&c, &hw).unwrap();
        prop_assert_eq!(again, 0);
        prop_assert_eq!(&c, &cc);
        for (v, h) in c.per_node().iter().zip(hw.nodes()) {
            prop_assert!(h.contains(v.reflectivity));
        }
    }

    #[test]
    fn affected_iff_fidelity_drops(n in 2usize..8, seed in any::<u64>(), sigma in 0.0f64..0.1) {
        let u = haar_random_unitary(n, seed).unwrap();
        let hw = sample_hardware(&triangular_layout(n).unwrap(), sigma, seed).unwrap();
        let ev = decompose_clip_evaluate(&u, LayoutKind::Triangular, &hw).unwrap();
        if !ev.affected {
            prop_assert!((ev.fidelity - 1.0).abs() < 1e-10);
        }
        prop_assert!(ev.fidelity <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn optimizer_never_loses_fidelity(n in 2usize..5, seed in any::<u64>(), sigma in 0.0f64..0.1, extra in 0usize..2) {
        let u = haar_random_unitary(n, seed).unwrap();
        let layout = square_layout(n, extra).unwrap();
        let hw = sample_hardware(&layout, sigma, seed.rotate_left(7)).unwrap();
        let start = initial_guess_redundant(&u, &layout, &hw).unwrap();
        let r = optimize_settings(&u, &layout, &hw, &start, 300, 1e-12).unwrap();
        prop_assert!(r.fidelity_after >= r.fidelity_before);
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for (v, h) in r.settings.per_node().iter().zip(hw.nodes()) {
            prop_assert!(h.contains(v.reflectivity));
        }
    }
}

#[test]
fn balanced_splitters_reach_every_reflectivity() {
    assert_eq!(achievable_range(0.5, 0.5).unwrap(), (0.0, 1.0));
    assert!(mzi_by_matrices(0.5, 0.5, 0.0).abs() < 1e-15);
    assert!((mzi_by_matrices(0.5, 0.5, std::f64::consts::PI) - 1.0).abs() < 1e-15);
}

#[test]
fn haar_element_variance_matches_moment() {
    // E|U_ij|^4 = 2 / (N (N + 1)) for Haar unitaries
    let n = 6;
    let samples = 4000;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for s in 0..samples {
        let u = haar_random_unitary(n, s).unwrap();
        let p = u[(1, 2)].norm_sqr();
        m2 += p;
        m4 += p * p;
    }
    m2 /= samples as f64;
    m4 /= samples as f64;
    let want4 = 2.0 / (n * (n + 1)) as f64;
    assert!((m2 - 1.0 / n as f64).abs() < 0.01, "{m2}");
    assert!((m4 - want4).abs() < 0.1 * want4, "{m4} vs {want4}");
}
