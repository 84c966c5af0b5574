use num_complex::Complex64 as C64;
use randent::entmeas::{
    asymptotic_entropy, asymptotic_purity, entropy_from_sq, purity, random_schmidt_reference,
    schmidt_spectrum, schmidt_sq, vn_entropy, Bipartition,
};
use randent::gatelib::{named_gate, GateName};
use randent::qsim::{haar_state, init_basis_state, RngStream, M2};

const H2: M2 = {
    const R: C64 = C64 { re: std::f64::consts::FRAC_1_SQRT_2, im: 0.0 };
    const NR: C64 = C64 { re: -std::f64::consts::FRAC_1_SQRT_2, im: 0.0 };
    [[R, R], [R, NR]]
};

#[test]
fn bipartition_validates_its_member_set() {
    assert!(Bipartition::new(4, vec![]).is_err());
    assert!(Bipartition::new(4, vec![0, 1, 2, 3]).is_err());
    assert!(Bipartition::new(4, vec![4]).is_err());
    let cut = Bipartition::new(4, vec![2, 0, 2]).unwrap();
    assert_eq!(cut.members(), &[0, 2]);
    assert_eq!(cut.n(), 4);

    assert!(Bipartition::symmetric(5).is_err());
    assert!(Bipartition::symmetric(0).is_err());
    let sym = Bipartition::symmetric(6).unwrap();
    assert_eq!(sym.members(), &[0, 1, 2]);
}

#[test]
fn product_state_is_unentangled_across_every_cut() {
    let s = init_basis_state(5, 0b10110).unwrap();
    for a in [vec![0], vec![1, 3], vec![0, 2, 4]] {
        let cut = Bipartition::new(5, a).unwrap();
        assert!((purity(&s, &cut).unwrap() - 1.0).abs() < 1e-12);
        assert!(vn_entropy(&s, &cut).unwrap().abs() < 1e-10);
        let sq = schmidt_sq(&s, &cut).unwrap();
        assert!((sq[0] - 1.0).abs() < 1e-12);
        for &v in &sq[1..] {
            assert!(v.abs() < 1e-12);
        }
    }
}

#[test]
fn bell_pair_is_maximally_entangled() {
    // H on qubit 1 then cnot(1 -> 0)
    let mut s = init_basis_state(2, 0).unwrap();
    s.apply_one_qubit(1, &H2).unwrap();
    s.apply_two_qubit(1, 0, &named_gate(GateName::Cnot).matrix).unwrap();

    let cut = Bipartition::new(2, vec![0]).unwrap();
    assert!((purity(&s, &cut).unwrap() - 0.5).abs() < 1e-12);
    assert!((vn_entropy(&s, &cut).unwrap() - 1.0).abs() < 1e-12);
    let sq = schmidt_sq(&s, &cut).unwrap();
    assert_eq!(sq.len(), 2);
    assert!((sq[0] - 0.5).abs() < 1e-12 && (sq[1] - 0.5).abs() < 1e-12);
    let mu = schmidt_spectrum(&s, &cut).unwrap().mu;
    assert!((mu[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
}

#[test]
fn ghz_cut_anywhere_gives_one_bit() {
    let mut s = init_basis_state(4, 0).unwrap();
    s.apply_one_qubit(3, &H2).unwrap();
    let cnot = named_gate(GateName::Cnot).matrix;
    for t in (0..3).rev() {
        s.apply_two_qubit(t + 1, t, &cnot).unwrap();
    }
    for a in [vec![0], vec![0, 1], vec![2], vec![1, 2, 3]] {
        let cut = Bipartition::new(4, a.clone()).unwrap();
        assert!((purity(&s, &cut).unwrap() - 0.5).abs() < 1e-12, "{a:?}");
        assert!((vn_entropy(&s, &cut).unwrap() - 1.0).abs() < 1e-12, "{a:?}");
    }
}

#[test]
fn schmidt_data_is_consistent_across_views() {
    let mut rng = RngStream::new(41, 0);
    let s = haar_state(7, &mut rng).unwrap();
    for a in [vec![0], vec![0, 3], vec![1, 2, 5], vec![0, 1, 2, 3, 4, 5]] {
        let cut = Bipartition::new(7, a).unwrap();
        let sq = schmidt_sq(&s, &cut).unwrap();
        let small = cut.members().len().min(7 - cut.members().len());
        assert_eq!(sq.len(), 1 << small);
        // nonincreasing, nonnegative, normalized
        for w in sq.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(sq.iter().all(|&v| v >= 0.0));
        assert!((sq.iter().sum::<f64>() - 1.0).abs() < 1e-10);

        let p = purity(&s, &cut).unwrap();
        let p_from_sq: f64 = sq.iter().map(|v| v * v).sum();
        assert!((p - p_from_sq).abs() < 1e-12);

        let ent = vn_entropy(&s, &cut).unwrap();
        assert!((ent - entropy_from_sq(&sq)).abs() < 1e-12);

        let mu = schmidt_spectrum(&s, &cut).unwrap().mu;
        for (m, v) in mu.iter().zip(&sq) {
            assert!((m * m - v).abs() < 1e-10);
        }
    }
}

#[test]
fn complementary_cuts_share_the_spectrum() {
    let mut rng = RngStream::new(42, 0);
    let s = haar_state(6, &mut rng).unwrap();
    let a = Bipartition::new(6, vec![0, 4]).unwrap();
    let b = Bipartition::new(6, vec![1, 2, 3, 5]).unwrap();
    assert!((purity(&s, &a).unwrap() - purity(&s, &b).unwrap()).abs() < 1e-12);
    assert!((vn_entropy(&s, &a).unwrap() - vn_entropy(&s, &b).unwrap()).abs() < 1e-12);
    let sa = schmidt_sq(&s, &a).unwrap();
    let sb = schmidt_sq(&s, &b).unwrap();
    for (x, y) in sa.iter().zip(&sb) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn cut_and_state_sizes_must_agree() {
    let s = init_basis_state(4, 0).unwrap();
    let cut = Bipartition::new(6, vec![0]).unwrap();
    assert!(purity(&s, &cut).is_err());
    assert!(vn_entropy(&s, &cut).is_err());
    assert!(schmidt_sq(&s, &cut).is_err());
}

#[test]
fn ensemble_purity_closed_form() {
    assert!((asymptotic_purity(2).unwrap() - 0.8).abs() < 1e-15);
    assert!((asymptotic_purity(8).unwrap() - 32.0 / 257.0).abs() < 1e-15);
    assert!(asymptotic_purity(7).is_err());
    assert!(asymptotic_purity(0).is_err());
}

#[test]
fn ensemble_entropy_closed_form() {
    let want = 8.0 - 1.0 / (4.0f64).ln();
    assert!((asymptotic_entropy(16).unwrap() - want).abs() < 1e-12);
    assert!((asymptotic_entropy(16).unwrap() - 7.278652479555).abs() < 1e-9);
    assert!(asymptotic_entropy(3).is_err());
}

#[test]
fn haar_mean_purity_approaches_the_ensemble_value() {
    let mut rng = RngStream::new(314, 0);
    let cut = Bipartition::symmetric(6).unwrap();
    let reps = 200;
    let mut mean = 0.0;
    for _ in 0..reps {
        let s = haar_state(6, &mut rng).unwrap();
        mean += purity(&s, &cut).unwrap();
    }
    mean /= reps as f64;
    let want = asymptotic_purity(6).unwrap();
    assert!((mean - want).abs() < 0.01, "mean {mean} vs {want}");
}

#[test]
fn schmidt_reference_matches_frozen_values() {
    let mu1 = random_schmidt_reference(1, 16).unwrap();
    assert!((mu1 - 0.4557).abs() < 5e-4, "mu1(16) = {mu1}");

    let sum16: f64 = (1..=16)
        .map(|i| random_schmidt_reference(i, 16).unwrap().powi(2))
        .sum();
    assert!((sum16 - 0.9961).abs() < 5e-4, "sum16 = {sum16}");

    let sum64: f64 = (1..=64)
        .map(|i| random_schmidt_reference(i, 64).unwrap().powi(2))
        .sum();
    assert!((sum64 - 0.999606478220497).abs() < 1e-9, "sum64 = {sum64}");
}

#[test]
fn schmidt_reference_is_decreasing_and_bounded() {
    let n_dim = 32;
    let mut prev = f64::INFINITY;
    for i in 1..=n_dim {
        let mu = random_schmidt_reference(i, n_dim).unwrap();
        assert!(mu > 0.0 && mu < prev);
        assert!(mu <= 2.0 / (n_dim as f64).sqrt() + 1e-12);
        prev = mu;
    }
    assert!(random_schmidt_reference(0, n_dim).is_err());
    assert!(random_schmidt_reference(n_dim + 1, n_dim).is_err());
}
