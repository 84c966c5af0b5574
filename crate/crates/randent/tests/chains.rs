use faer::linalg::solvers::Eigen;
use num_complex::Complex64 as C64;
use rand::Rng;
use randent::entmeas::asymptotic_purity;
use randent::gatelib::{
    named_gate, pauli_conjugation_table, CanonicalParams, GateName, CLIFFORD_TOL,
};
use randent::paulichain::{
    chain_operator, ergodic_dist, evolve, initial_dist_product_state, lift_lumped_vector, lump,
    lumped_chain, pair_kernel_clifford, pair_kernel_u4, purity_from_dist,
    single_qubit_average_kernel, string_support, Coupling, LinearChain, PairKernel,
    PauliWeightDist, MAX_FULL_N, MAX_LUMPED_N,
};
use randent::qsim::RngStream;
use randent::spectral::eigenpair_residual;

fn clifford_kernel(name: GateName) -> PairKernel {
    let table = pauli_conjugation_table(&named_gate(name), CLIFFORD_TOL).unwrap();
    pair_kernel_clifford(&table)
}

fn canonical_kernel(ax: f64, ay: f64, az: f64) -> PairKernel {
    let g = randent::gatelib::canonical_gate(CanonicalParams::new(ax, ay, az));
    let table = pauli_conjugation_table(&g, CLIFFORD_TOL).unwrap();
    pair_kernel_clifford(&table)
}

fn assert_doubly_stochastic(k: &PairKernel) {
    for out in 0..16 {
        let row: f64 = k.m[out].iter().sum();
        assert!((row - 1.0).abs() < 1e-12, "row {out} sums to {row}");
    }
    for input in 0..16 {
        let col: f64 = (0..16).map(|out| k.m[out][input]).sum();
        assert!((col - 1.0).abs() < 1e-12, "col {input} sums to {col}");
    }
    for out in 0..16 {
        for input in 0..16 {
            assert!(k.m[out][input] >= 0.0);
        }
    }
}

#[test]
fn coupling_pair_inventory() {
    for n in [2usize, 3, 5, 8] {
        let ran = Coupling::Random.pairs(n).unwrap();
        assert_eq!(ran.len(), n * (n - 1));
        let pbc = Coupling::NnPbc.pairs(n).unwrap();
        assert_eq!(pbc.len(), 2 * n);
        assert!(pbc.contains(&(n - 1, 0)) && pbc.contains(&(0, n - 1)));
        let obc = Coupling::NnObc.pairs(n).unwrap();
        assert_eq!(obc.len(), 2 * (n - 1));
        assert!(!obc.contains(&(n - 1, 0)) || n == 2);
        for pairs in [&ran, &obc] {
            let mut seen = std::collections::HashSet::new();
            for &p in pairs.iter() {
                assert!(p.0 != p.1 && p.0 < n && p.1 < n);
                assert!(seen.insert(p), "duplicate pair {p:?}");
            }
        }
    }
    assert!(Coupling::Random.pairs(1).is_err());
    assert_eq!("nnpbc".parse::<Coupling>().unwrap(), Coupling::NnPbc);
    assert_eq!(Coupling::NnObc.label(), "nnobc");
    assert!("ring".parse::<Coupling>().is_err());
}

#[test]
fn single_qubit_average_is_an_idempotent_projection() {
    let r = single_qubit_average_kernel();
    for a in 0..4 {
        let row: f64 = r[a].iter().sum();
        assert!((row - 1.0).abs() < 1e-15);
    }
    // R^2 = R
    for a in 0..4 {
        for b in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += r[a][k] * r[k][b];
            }
            assert!((acc - r[a][b]).abs() < 1e-15);
        }
    }
    assert_eq!(r[0][0], 1.0);
    assert_eq!(r[0][1], 0.0);
    assert!((r[1][2] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn u4_kernel_is_the_uniform_idempotent() {
    let k = pair_kernel_u4();
    assert_doubly_stochastic(&k);
    assert_eq!(k.m[0][0], 1.0);
    for out in 1..16 {
        assert_eq!(k.m[out][0], 0.0);
        assert_eq!(k.m[0][out], 0.0);
        for input in 1..16 {
            assert!((k.m[out][input] - 1.0 / 15.0).abs() < 1e-15);
        }
    }
    // idempotent
    for out in 0..16 {
        for input in 0..16 {
            let mut acc = 0.0;
            for mid in 0..16 {
                acc += k.m[out][mid] * k.m[mid][input];
            }
            assert!((acc - k.m[out][input]).abs() < 1e-14);
        }
    }
}

#[test]
fn clifford_kernels_are_doubly_stochastic() {
    for k in [
        clifford_kernel(GateName::Cnot),
        clifford_kernel(GateName::Xy),
        clifford_kernel(GateName::Swap),
        canonical_kernel(1.0, 0.0, 0.0),
        canonical_kernel(1.0, 1.0, 0.0),
    ] {
        assert_doubly_stochastic(&k);
        // identity string is isolated
        for out in 1..16 {
            assert_eq!(k.m[out][0], 0.0);
        }
        assert_eq!(k.m[0][0], 1.0);
    }
}

#[test]
fn locally_equivalent_gates_can_average_differently() {
    // named cnot and the (1,0,0) canonical point share local invariants but
    // not the averaged pair kernel, so they generate distinct chains
    let a = clifford_kernel(GateName::Cnot);
    let b = canonical_kernel(1.0, 0.0, 0.0);
    let mut diff = 0.0f64;
    for out in 0..16 {
        for input in 0..16 {
            diff = diff.max((a.m[out][input] - b.m[out][input]).abs());
        }
    }
    assert!(diff > 0.1, "kernels too close: {diff}");
}

#[test]
fn lumped_kernel_rows_are_exact() {
    let t = 1.0 / 3.0;
    let (k, rep) = lump(&clifford_kernel(GateName::Cnot));
    let want = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, t, 0.0, 2.0 * t],
        [0.0, 0.0, t, 2.0 * t],
        [0.0, 2.0 / 9.0, 2.0 / 9.0, 5.0 / 9.0],
    ];
    for a in 0..4 {
        for b in 0..4 {
            assert!((k[a][b] - want[a][b]).abs() < 1e-12, "cnot [{a}][{b}]");
        }
    }
    assert_eq!(rep.class_pass, [true, false, false, false]);
    assert!(rep.class_max_deviation[1] > 0.5);
    assert!(rep.tolerance <= 1e-9);

    let (k, rep) = lump(&clifford_kernel(GateName::Xy));
    let want = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, t, 2.0 * t],
        [0.0, t, 0.0, 2.0 * t],
        [0.0, 2.0 / 9.0, 2.0 / 9.0, 5.0 / 9.0],
    ];
    for a in 0..4 {
        for b in 0..4 {
            assert!((k[a][b] - want[a][b]).abs() < 1e-12, "xy [{a}][{b}]");
        }
    }
    assert_eq!(rep.class_pass, [true, false, false, false]);

    let (k, rep) = lump(&pair_kernel_u4());
    for a in 1..4 {
        assert!((k[a][1] - 0.2).abs() < 1e-12);
        assert!((k[a][2] - 0.2).abs() < 1e-12);
        assert!((k[a][3] - 0.6).abs() < 1e-12);
        assert_eq!(k[a][0], 0.0);
    }
    assert_eq!(rep.class_pass, [true, true, true, true]);

    // swap hops the single-site classes and is strictly lumpable
    let (k, rep) = lump(&clifford_kernel(GateName::Swap));
    assert!((k[1][2] - 1.0).abs() < 1e-12);
    assert!((k[2][1] - 1.0).abs() < 1e-12);
    assert!((k[3][3] - 1.0).abs() < 1e-12);
    assert_eq!(rep.class_pass, [true, true, true, true]);
}

#[test]
fn chain_dimensions_and_pair_counts() {
    let k = clifford_kernel(GateName::Cnot);
    for (coupling, count) in [
        (Coupling::Random, 5 * 4),
        (Coupling::NnPbc, 10),
        (Coupling::NnObc, 8),
    ] {
        let op = chain_operator(&k, 5, coupling).unwrap();
        assert_eq!(op.dim(), 1 << 10);
        assert_eq!(op.pair_count(), count);
        assert_eq!(op.n(), 5);
        assert_eq!(op.coupling(), coupling);

        let lc = lumped_chain(&k, 5, coupling).unwrap();
        assert_eq!(lc.dim(), 32);
        assert_eq!(lc.pair_count(), count);
    }
}

#[test]
fn full_chain_apply_matches_its_dense_matrix() {
    let k = clifford_kernel(GateName::Xy);
    let op = chain_operator(&k, 3, Coupling::NnPbc).unwrap();
    let dim = op.dim();
    let m = op.dense().unwrap();
    let mut rng = RngStream::new(7, 0);
    let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut y = vec![0.0; dim];
    op.apply_to(&x, &mut y);
    for r in 0..dim {
        let direct: f64 = (0..dim).map(|c| m[(r, c)] * x[c]).sum();
        assert!((y[r] - direct).abs() < 1e-12);
    }
    // doubly stochastic in plain coordinates
    for r in 0..dim {
        let row: f64 = (0..dim).map(|c| m[(r, c)]).sum();
        let col: f64 = (0..dim).map(|c| m[(c, r)]).sum();
        assert!((row - 1.0).abs() < 1e-10 && (col - 1.0).abs() < 1e-10);
    }
}

#[test]
fn lumped_chain_apply_matches_its_dense_matrix() {
    let k = pair_kernel_u4();
    let lc = lumped_chain(&k, 4, Coupling::NnObc).unwrap();
    let dim = lc.dim();
    let m = lc.dense().unwrap();
    let mut rng = RngStream::new(8, 0);
    let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut y = vec![0.0; dim];
    lc.apply_to(&x, &mut y);
    for r in 0..dim {
        let direct: f64 = (0..dim).map(|c| m[(r, c)] * x[c]).sum();
        assert!((y[r] - direct).abs() < 1e-12);
    }
}

#[test]
fn both_chains_fix_their_stationary_vector() {
    let k = clifford_kernel(GateName::Cnot);
    for coupling in [Coupling::Random, Coupling::NnPbc, Coupling::NnObc] {
        let full = chain_operator(&k, 4, coupling).unwrap();
        let r1 = full.unit_r1();
        let mut y = vec![0.0; full.dim()];
        full.apply_to(&r1, &mut y);
        for (a, b) in y.iter().zip(&r1) {
            assert!((a - b).abs() < 1e-12);
        }

        let lumped = lumped_chain(&k, 4, coupling).unwrap();
        let r1 = lumped.unit_r1();
        let mut y = vec![0.0; lumped.dim()];
        lumped.apply_to(&r1, &mut y);
        for (a, b) in y.iter().zip(&r1) {
            assert!((a - b).abs() < 1e-12);
        }
        // scaled coordinates put sqrt(3)^|s| on pattern s
        assert_eq!(r1[0], 1.0);
        assert!((r1[lumped.dim() - 1] - 9.0).abs() < 1e-12);
    }
}

#[test]
fn apply_preserves_mass_and_never_drains_identity() {
    let k = clifford_kernel(GateName::Xy);
    let op = chain_operator(&k, 4, Coupling::Random).unwrap();
    let mut rng = RngStream::new(9, 0);
    let mut w: Vec<f64> = (0..op.dim()).map(|_| rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    let mut dist = PauliWeightDist { n: 4, weights: w };
    let mut last_id = dist.identity_weight();
    for _ in 0..10 {
        dist = op.apply(&dist).unwrap();
        assert!((dist.total() - 1.0).abs() < 1e-12);
        assert!(dist.weights.iter().all(|&v| v >= -1e-15));
        assert!(dist.identity_weight() >= last_id - 1e-15);
        last_id = dist.identity_weight();
    }
}

#[test]
fn ergodic_dist_is_a_fixed_point() {
    for kernel in [clifford_kernel(GateName::Cnot), pair_kernel_u4()] {
        for coupling in [Coupling::Random, Coupling::NnPbc, Coupling::NnObc] {
            let op = chain_operator(&kernel, 4, coupling).unwrap();
            let e = ergodic_dist(4).unwrap();
            let e2 = op.apply(&e).unwrap();
            for (a, b) in e2.weights.iter().zip(&e.weights) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn product_state_dist_structure() {
    let d = initial_dist_product_state(3).unwrap();
    assert!((d.total() - 1.0).abs() < 1e-15);
    let mut nonzero = 0;
    for (alpha, &w) in d.weights.iter().enumerate() {
        // z-strings only: every digit 0 or 3
        let mut z_string = true;
        let mut a = alpha;
        for _ in 0..3 {
            if a % 4 == 1 || a % 4 == 2 {
                z_string = false;
            }
            a /= 4;
        }
        if w != 0.0 {
            nonzero += 1;
            assert!(z_string, "weight on non-z string {alpha}");
            assert!((w - 0.125).abs() < 1e-15);
        }
    }
    assert_eq!(nonzero, 8);
}

#[test]
fn ergodic_purity_equals_the_ensemble_value() {
    for n in [2usize, 4, 6, 8] {
        let p = purity_from_dist(&ergodic_dist(n).unwrap()).unwrap();
        assert!((p - asymptotic_purity(n).unwrap()).abs() < 1e-12, "n={n}");
    }
    assert!(purity_from_dist(&ergodic_dist(3).unwrap()).is_err());
}

#[test]
fn exact_purity_trace_of_the_clifford_xx_point() {
    let k = canonical_kernel(1.0, 0.0, 0.0);

    let op = chain_operator(&k, 4, Coupling::Random).unwrap();
    let tr = evolve(&op, &initial_dist_product_state(4).unwrap(), 3).unwrap();
    assert_eq!(tr.len(), 4);
    assert_eq!(tr[0], (0, 1.0));
    assert!((tr[1].1 - 2.0 / 3.0).abs() < 1e-12);

    let op = chain_operator(&k, 8, Coupling::Random).unwrap();
    let tr = evolve(&op, &initial_dist_product_state(8).unwrap(), 3).unwrap();
    assert!((tr[1].1 - 5.0 / 7.0).abs() < 1e-9);
    assert!((tr[2].1 - 0.5527210884353747).abs() < 1e-9);
    assert!((tr[3].1 - 0.4492562898175151).abs() < 1e-9);
    for w in tr.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-12);
    }
}

#[test]
fn capacity_limits_are_enforced() {
    let k = pair_kernel_u4();
    assert!(initial_dist_product_state(MAX_FULL_N).is_ok());
    assert!(initial_dist_product_state(MAX_FULL_N + 1).is_err());
    assert!(chain_operator(&k, MAX_FULL_N + 1, Coupling::Random).is_err());
    assert!(lumped_chain(&k, 20, Coupling::Random).is_ok());
    assert!(lumped_chain(&k, MAX_LUMPED_N + 1, Coupling::Random).is_err());
    assert!(ergodic_dist(MAX_FULL_N + 1).is_err());
}

#[test]
fn string_support_marks_active_sites() {
    assert_eq!(string_support(0, 5), 0);
    assert_eq!(string_support(3, 5), 0b1); // z on qubit 0
    assert_eq!(string_support(4, 5), 0b10); // x on qubit 1
    assert_eq!(string_support(0b0101, 5), 0b11); // x on qubits 0 and 1
    let all_z = (0..5).fold(0usize, |acc, k| acc | (3 << (2 * k)));
    assert_eq!(string_support(all_z, 5), 0b11111);
}

#[test]
fn lifting_spreads_patterns_uniformly() {
    // pattern {0, 2} of n = 3 covers the 9 strings with one non-identity
    // Pauli on each of those qubits, at 1/9 of the pattern mass apiece
    let n = 3;
    let mut v = vec![0.0; 1 << n];
    v[0b101] = 1.0;
    let lifted = lift_lumped_vector(n, &v).unwrap();
    assert_eq!(lifted.len(), 64);
    let mut hit = 0;
    for alpha in 0..64 {
        let digits = [alpha % 4, (alpha / 4) % 4, (alpha / 16) % 4];
        let pattern = (digits[0] != 0) as usize
            | (((digits[1] != 0) as usize) << 1)
            | (((digits[2] != 0) as usize) << 2);
        if pattern == 0b101 {
            hit += 1;
            assert!((lifted[alpha] - 1.0 / 9.0).abs() < 1e-15);
        } else {
            assert_eq!(lifted[alpha], 0.0);
        }
    }
    assert_eq!(hit, 9);
    assert!(lift_lumped_vector(n, &v[..4]).is_err());
}

#[test]
fn lifted_lumped_eigenpairs_live_in_the_full_chain() {
    for (kernel, coupling) in [
        (clifford_kernel(GateName::Cnot), Coupling::Random),
        (clifford_kernel(GateName::Xy), Coupling::NnPbc),
        (pair_kernel_u4(), Coupling::NnObc),
    ] {
        let n = 4;
        let lumped = lumped_chain(&kernel, n, coupling).unwrap();
        let full = chain_operator(&kernel, n, coupling).unwrap();
        let d = lumped.dense().unwrap();
        let eig = Eigen::new_from_real(d.as_ref()).unwrap();
        let values: Vec<C64> = eig.S().column_vector().iter().cloned().collect();
        for (idx, &lambda) in values.iter().enumerate() {
            let re: Vec<f64> = (0..lumped.dim()).map(|r| eig.U()[(r, idx)].re).collect();
            let im: Vec<f64> = (0..lumped.dim()).map(|r| eig.U()[(r, idx)].im).collect();
            let pre = lumped.pattern_vector(&re).unwrap();
            let pim = lumped.pattern_vector(&im).unwrap();
            let lre = lift_lumped_vector(n, &pre).unwrap();
            let lim = lift_lumped_vector(n, &pim).unwrap();
            let res = eigenpair_residual(&full, &lre, Some(&lim), lambda);
            assert!(
                res < 1e-8,
                "{} {coupling:?}: lifted pair {idx} (lambda {lambda}) residual {res:.3e}",
                lumped.mode()
            );
        }
    }
}
