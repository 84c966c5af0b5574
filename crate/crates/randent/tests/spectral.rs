use faer::Mat;
use num_complex::Complex64 as C64;
use randent::gatelib::{named_gate, pauli_conjugation_table, GateName, CLIFFORD_TOL};
use randent::paulichain::{
    chain_operator, lumped_chain, pair_kernel_clifford, pair_kernel_u4, Coupling, LinearChain,
    PairKernel,
};
use randent::spectral::{
    degeneracy_profile, dense_spectrum, eigenpair_residual, gap, group_by_tolerance,
    top_eigenvalues, DEGENERACY_TOL, MAX_TOP_K,
};

fn kernel_for(gate: &str) -> PairKernel {
    match gate {
        "cnot" => pair_kernel_clifford(
            &pauli_conjugation_table(&named_gate(GateName::Cnot), CLIFFORD_TOL).unwrap(),
        ),
        "xy" => pair_kernel_clifford(
            &pauli_conjugation_table(&named_gate(GateName::Xy), CLIFFORD_TOL).unwrap(),
        ),
        "u4" => pair_kernel_u4(),
        other => panic!("no kernel {other}"),
    }
}

// Diagonal stand-in with a known spectrum; entries 0 and 1 hold the two
// unit eigenvalues the chains always carry.
struct DiagChain {
    diag: Vec<f64>,
}

impl LinearChain for DiagChain {
    fn n(&self) -> usize {
        0
    }
    fn coupling(&self) -> Coupling {
        Coupling::Random
    }
    fn dim(&self) -> usize {
        self.diag.len()
    }
    fn apply_to(&self, x: &[f64], y: &mut [f64]) {
        for (k, slot) in y.iter_mut().enumerate() {
            *slot = self.diag[k] * x[k];
        }
    }
    fn dense(&self) -> randent::error::Result<Mat<f64>> {
        let d = self.dim();
        Ok(Mat::from_fn(d, d, |r, c| if r == c { self.diag[r] } else { 0.0 }))
    }
    fn unit_r1(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for (k, &d) in self.diag.iter().enumerate() {
            if d == 1.0 {
                v[k] = 1.0;
            }
        }
        v
    }
    fn mode(&self) -> &'static str {
        "diag"
    }
}

#[test]
fn grouping_averages_runs_within_tolerance() {
    let groups = group_by_tolerance(&[0.9, 0.9 - 5e-9, 0.5, 0.5, 0.3], 1e-8);
    assert_eq!(groups.len(), 3);
    assert!((groups[0].0 - (0.9 - 2.5e-9)).abs() < 1e-12);
    assert_eq!(groups[0].1, 2);
    assert_eq!(groups[1], (0.5, 2));
    assert_eq!(groups[2], (0.3, 1));
    assert!(group_by_tolerance(&[], 1e-8).is_empty());
}

#[test]
fn dense_summary_of_a_known_diagonal() {
    let op = DiagChain {
        diag: vec![1.0, 1.0 - 1e-9, 0.5, 0.3],
    };
    let spec = dense_spectrum(&op).unwrap();
    assert_eq!(spec.unit_multiplicity, 2);
    assert_eq!(spec.raw.len(), 2);
    assert!((spec.raw[0] - 0.5).abs() < 1e-12);
    assert!((gap(&spec).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn extra_unit_eigenvalues_invalidate_the_gap() {
    let op = DiagChain {
        diag: vec![1.0, 1.0, 1.0, 0.5],
    };
    let spec = dense_spectrum(&op).unwrap();
    assert_eq!(spec.unit_multiplicity, 3);
    assert!(spec.gap.is_none());
    assert!(gap(&spec).is_err());

    let op = DiagChain {
        diag: vec![1.0, 0.9, 0.5, 0.3],
    };
    let spec = dense_spectrum(&op).unwrap();
    assert_eq!(spec.unit_multiplicity, 1);
    assert!(gap(&spec).is_err());
}

#[test]
fn super_unit_magnitudes_are_rejected() {
    let op = DiagChain {
        diag: vec![1.2, 1.0, 0.5, 0.3],
    };
    assert!(dense_spectrum(&op).is_err());
}

#[test]
fn identity_gate_chain_has_a_degenerate_unit_space() {
    // the identity gate never moves support patterns, so every pattern
    // class contributes a stationary vector: 2^n units, no usable gap
    let table =
        pauli_conjugation_table(&named_gate(GateName::Identity), CLIFFORD_TOL).unwrap();
    let op = chain_operator(&pair_kernel_clifford(&table), 2, Coupling::Random).unwrap();
    let spec = dense_spectrum(&op).unwrap();
    assert_eq!(spec.unit_multiplicity, 4);
    assert!(gap(&spec).is_err());
}

#[test]
fn iterative_solver_reproduces_a_known_diagonal() {
    let mut diag = vec![1.0, 1.0, 0.9, 0.8, 0.8, 0.7];
    diag.extend(std::iter::repeat(0.45).take(10));
    let op = DiagChain { diag };
    let spec = top_eigenvalues(&op, 4, 1e-10).unwrap();
    assert_eq!(spec.unit_multiplicity, 2);
    assert_eq!(spec.solver, "iterative");
    let want = [0.9, 0.8, 0.8, 0.7];
    for (got, want) in spec.raw.iter().zip(want) {
        assert!((got - want).abs() < 1e-9, "{:?}", spec.raw);
    }
    let profile = degeneracy_profile(&spec, DEGENERACY_TOL);
    assert_eq!(profile[0].1, 1);
    assert_eq!(profile[1].1, 2);
    assert_eq!(profile[2].1, 1);
    assert!((gap(&spec).unwrap() - 0.1).abs() < 1e-9);
}

#[test]
fn solver_input_validation() {
    let op = DiagChain {
        diag: vec![1.0, 1.0, 0.5, 0.4, 0.3],
    };
    assert!(top_eigenvalues(&op, 0, 1e-9).is_err());
    assert!(top_eigenvalues(&op, MAX_TOP_K + 1, 1e-9).is_err());
    assert!(top_eigenvalues(&op, 4, 1e-9).is_err()); // k > dim - 2
    let tiny = DiagChain { diag: vec![1.0, 1.0] };
    assert!(top_eigenvalues(&tiny, 1, 1e-9).is_err());
}

#[test]
fn unit_vector_verification_catches_a_wrong_r1() {
    // diag entry 1 is not 1.0, so the claimed stationary vector fails its
    // residual check inside the solver
    let op = DiagChain {
        diag: vec![1.0, 0.999999, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05],
    };
    struct Lying(DiagChain);
    impl LinearChain for Lying {
        fn n(&self) -> usize {
            0
        }
        fn coupling(&self) -> Coupling {
            Coupling::Random
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn apply_to(&self, x: &[f64], y: &mut [f64]) {
            self.0.apply_to(x, y)
        }
        fn dense(&self) -> randent::error::Result<Mat<f64>> {
            self.0.dense()
        }
        fn unit_r1(&self) -> Vec<f64> {
            let mut v = vec![0.0; self.dim()];
            v[0] = 1.0;
            v[1] = 1.0;
            v
        }
        fn mode(&self) -> &'static str {
            "diag"
        }
    }
    assert!(top_eigenvalues(&Lying(op), 1, 1e-9).is_err());
}

#[test]
fn dense_third_eigenvalues_at_n4_match_frozen_values() {
    let cases = [
        ("cnot", Coupling::Random, 0.729061423645),
        ("cnot", Coupling::NnPbc, 0.786061717535),
        ("cnot", Coupling::NnObc, 0.887739124366),
        ("xy", Coupling::Random, 0.726365711410),
        ("xy", Coupling::NnPbc, 0.752444652518),
        ("xy", Coupling::NnObc, 0.824690787889),
        ("u4", Coupling::Random, 0.753729140269),
        ("u4", Coupling::NnPbc, 0.782842712475),
        ("u4", Coupling::NnObc, 0.855228474983),
    ];
    for (gate, coupling, third) in cases {
        let op = chain_operator(&kernel_for(gate), 4, coupling).unwrap();
        let spec = dense_spectrum(&op).unwrap();
        assert_eq!(spec.unit_multiplicity, 2, "{gate} {coupling:?}");
        assert!(
            (spec.raw[0] - third).abs() < 1e-9,
            "{gate} {coupling:?}: {} vs {third}",
            spec.raw[0]
        );
        assert!((gap(&spec).unwrap() - (1.0 - third)).abs() < 1e-9);
    }
}

#[test]
fn u4_chain_at_n2_is_a_rank_two_projection() {
    let op = chain_operator(&pair_kernel_u4(), 2, Coupling::Random).unwrap();
    let spec = dense_spectrum(&op).unwrap();
    assert_eq!(spec.unit_multiplicity, 2);
    assert_eq!(spec.raw.len(), 14);
    for &m in &spec.raw {
        assert!(m < 1e-10, "unexpected mass {m}");
    }
}

#[test]
fn iterative_agrees_with_dense_on_full_n4_chains() {
    for gate in ["cnot", "xy", "u4"] {
        for coupling in [Coupling::Random, Coupling::NnPbc, Coupling::NnObc] {
            let op = chain_operator(&kernel_for(gate), 4, coupling).unwrap();
            let dense = dense_spectrum(&op).unwrap();
            let iter = top_eigenvalues(&op, 6, 1e-9).unwrap();
            assert_eq!(iter.unit_multiplicity, 2);
            for (a, b) in iter.raw.iter().zip(&dense.raw) {
                assert!((a - b).abs() < 1e-8, "{gate} {coupling:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn lumped_dense_profiles_at_n8_match_frozen_values() {
    let cases: [(&str, &[(f64, usize)]); 3] = [
        ("xy", &[(0.921025646, 1), (0.900875138, 2), (0.872452673, 1)]),
        ("cnot", &[(0.944877780, 1), (0.936126006, 2), (0.907004500, 2)]),
        ("u4", &[(0.934775907, 1), (0.920710678, 2), (0.891421356, 1)]),
    ];
    for (gate, want) in cases {
        let lc = lumped_chain(&kernel_for(gate), 8, Coupling::NnPbc).unwrap();
        let spec = dense_spectrum(&lc).unwrap();
        assert_eq!(spec.unit_multiplicity, 2, "{gate}");
        let profile = degeneracy_profile(&spec, 1e-6);
        for (got, want) in profile.iter().zip(want) {
            assert!(
                (got.0 - want.0).abs() < 1e-8 && got.1 == want.1,
                "{gate}: {profile:?}"
            );
        }
    }
}

#[test]
fn full_xy_random_n6_spectrum_matches_frozen_values() {
    let op = chain_operator(&kernel_for("xy"), 6, Coupling::Random).unwrap();
    let spec = top_eigenvalues(&op, 8, 1e-6).unwrap();
    assert_eq!(spec.unit_multiplicity, 2);
    assert!((gap(&spec).unwrap() - 0.166962332916092).abs() < 1e-7);
    let profile = degeneracy_profile(&spec, 1e-6);
    assert!((profile[0].0 - 0.833038).abs() < 1e-5);
    assert_eq!(profile[0].1, 1);
    assert!((profile[1].0 - 0.736377).abs() < 1e-5);
    assert_eq!(profile[1].1, 1);
    assert!((profile[2].0 - 0.677591).abs() < 1e-5);
    assert_eq!(profile[2].1, 5);
}

#[test]
fn lumped_xy_nnpbc_n12_gap_matches_frozen_value() {
    let lc = lumped_chain(&kernel_for("xy"), 12, Coupling::NnPbc).unwrap();
    let spec = top_eigenvalues(&lc, 1, 1e-9).unwrap();
    assert_eq!(spec.unit_multiplicity, 2);
    assert!(
        (gap(&spec).unwrap() - 0.046666388453).abs() < 1e-8,
        "gap {}",
        gap(&spec).unwrap()
    );
}

#[test]
fn iterative_results_are_deterministic() {
    let op = chain_operator(&kernel_for("cnot"), 4, Coupling::NnObc).unwrap();
    let a = top_eigenvalues(&op, 3, 1e-9).unwrap();
    let b = top_eigenvalues(&op, 3, 1e-9).unwrap();
    assert_eq!(a.raw, b.raw);
    assert_eq!(a.unit_multiplicity, b.unit_multiplicity);
}

#[test]
fn residual_certifies_true_pairs_and_flags_fakes() {
    let op = chain_operator(&pair_kernel_u4(), 3, Coupling::Random).unwrap();
    let ones = op.unit_r1();
    assert!(eigenpair_residual(&op, &ones, None, C64::new(1.0, 0.0)) < 1e-12);
    let mut off = ones.clone();
    off[5] += 0.3;
    assert!(eigenpair_residual(&op, &off, None, C64::new(1.0, 0.0)) > 1e-3);
    assert!(eigenpair_residual(&op, &ones, None, C64::new(0.9, 0.0)) > 1e-2);
}
