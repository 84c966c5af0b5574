//! Markov chains on ensemble-averaged squared Pauli coefficients.
//!
//! For Clifford two-qubit gates, conjugation permutes Pauli strings, and
//! averaging the fresh single-qubit rotations turns the squared-coefficient
//! flow into an exactly stochastic linear map: a 16x16 kernel per qubit pair,
//! averaged over the coupling's pair list. A fresh Haar 4x4 per step gives the
//! same structure with a rank-two kernel. Two state spaces are provided: the
//! full 4^n string chain and the 2^n support-pattern (lumped) chain.
//!
//! Weight convention: p_alpha = tr(rho P_alpha)^2 / 2^n, so weights sum to 1
//! for a pure state and every chain matrix is doubly stochastic. Purity across
//! the symmetric cut then carries a 2^(n/2) prefactor, see `purity_from_dist`.

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::gatelib::PauliConjugationTable;
use crate::Result;

/// Full-chain ceiling: 4^13 weights in 8-byte reals is about half a gigabyte.
pub const MAX_FULL_N: usize = 13;
/// Lumped-chain ceiling.
pub const MAX_LUMPED_N: usize = 26;
/// Largest state-space dimension accepted by the dense assemblers.
pub const DENSE_DIM_CAP: usize = 4096;
/// Within-class weights of the support classes {empty, {i}, {j}, {i,j}}.
pub const LUMP_CLASS_SIZES: [f64; 4] = [1.0, 3.0, 3.0, 9.0];

const LUMP_TOL: f64 = 1e-12;

/// Which qubit pairs the protocol may couple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Coupling {
    /// All n(n-1) ordered pairs.
    Random,
    /// Nearest neighbours on a ring, both orientations: 2n ordered pairs.
    NnPbc,
    /// Nearest neighbours on an open chain, both orientations: 2(n-1) pairs.
    NnObc,
}

impl Coupling {
    /// Ordered pair list; order is fixed (it is part of the RNG contract of
    /// the protocol module).
    pub fn pairs(self, n: usize) -> Result<Vec<(usize, usize)>> {
        if n < 2 {
            return Err(Error::Domain(format!("couplings need n >= 2, got {}", n)));
        }
        let mut out = Vec::new();
        match self {
            Coupling::Random => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            out.push((i, j));
                        }
                    }
                }
            }
            Coupling::NnPbc => {
                // n=2 keeps the duplicated bond; the pair count stays 2n
                for q in 0..n {
                    out.push((q, (q + 1) % n));
                    out.push(((q + 1) % n, q));
                }
            }
            Coupling::NnObc => {
                for q in 0..n - 1 {
                    out.push((q, q + 1));
                    out.push((q + 1, q));
                }
            }
        }
        Ok(out)
    }

    pub fn label(self) -> &'static str {
        match self {
            Coupling::Random => "random",
            Coupling::NnPbc => "nnpbc",
            Coupling::NnObc => "nnobc",
        }
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Coupling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Coupling::Random),
            "nnpbc" => Ok(Coupling::NnPbc),
            "nnobc" => Ok(Coupling::NnObc),
            other => Err(Error::Usage(format!(
                "unknown coupling '{}' (expected random|nnpbc|nnobc)",
                other
            ))),
        }
    }
}

/// Distribution over the 4^n Pauli strings; digit k of the base-4 index is
/// the Pauli on qubit k (0 identity, 1 x, 2 y, 3 z).
#[derive(Clone, Debug)]
pub struct PauliWeightDist {
    pub n: usize,
    pub weights: Vec<f64>,
}

impl PauliWeightDist {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn identity_weight(&self) -> f64 {
        self.weights[0]
    }
}

/// Exact average of squared-coefficient flow over a Haar single-qubit gate:
/// identity is fixed, the three non-identity Paulis mix uniformly.
pub fn single_qubit_average_kernel() -> [[f64; 4]; 4] {
    let t = 1.0 / 3.0;
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, t, t, t],
        [0.0, t, t, t],
        [0.0, t, t, t],
    ]
}

/// 16x16 pair kernel; entry m[out][in] with pair index x = 4*b_i + b_j
/// (digit for qubit i high). Doubly stochastic for every kernel built here.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct PairKernel {
    pub m: [[f64; 16]; 16],
}

/// Kernel of a Clifford gate: route each input string through the gate's
/// conjugation permutation, then mix each site with the single-qubit average.
/// Phases square away.
pub fn pair_kernel_clifford(table: &PauliConjugationTable) -> PairKernel {
    let r = single_qubit_average_kernel();
    let mut m = [[0.0; 16]; 16];
    for input in 0..16 {
        let image = table.perm[input];
        let (bi, bj) = (image / 4, image % 4);
        for ai in 0..4 {
            for aj in 0..4 {
                m[4 * ai + aj][input] = r[ai][bi] * r[aj][bj];
            }
        }
    }
    PairKernel { m }
}

/// Kernel of a fresh Haar 4x4 per step: identity fixed, everything else
/// mixed uniformly over the 15 non-identity pair strings.
pub fn pair_kernel_u4() -> PairKernel {
    let mut m = [[0.0; 16]; 16];
    m[0][0] = 1.0;
    for out in 1..16 {
        for input in 1..16 {
            m[out][input] = 1.0 / 15.0;
        }
    }
    PairKernel { m }
}

// Sparse row view of a kernel: per output index, the nonzero (input, weight)
// entries. The chains apply kernels output-side, so row sparsity is what pays.
fn sparse_rows(kernel: &PairKernel) -> Vec<Vec<(usize, f64)>> {
    (0..16)
        .map(|out| {
            (0..16)
                .filter(|&input| kernel.m[out][input] != 0.0)
                .map(|input| (input, kernel.m[out][input]))
                .collect()
        })
        .collect()
}

/// Matrix-free interface shared by the full and lumped chains.
pub trait LinearChain: Sync {
    fn n(&self) -> usize;
    fn coupling(&self) -> Coupling;
    fn dim(&self) -> usize;
    /// y = M x; deterministic for any thread count.
    fn apply_to(&self, x: &[f64], y: &mut [f64]);
    /// Dense matrix, capped at `DENSE_DIM_CAP`.
    fn dense(&self) -> Result<Mat<f64>>;
    /// The non-trivial right unit eigenvector (the other is e_identity).
    fn unit_r1(&self) -> Vec<f64>;
    fn mode(&self) -> &'static str;
}

/// Full 4^n chain: coupling-averaged embedding of a pair kernel.
pub struct ChainOperator {
    n: usize,
    coupling: Coupling,
    kernel: PairKernel,
    pairs: Vec<(usize, usize)>,
    rows: Vec<Vec<(usize, f64)>>,
}

/// Assemble the full-chain operator. Capacity-limited to n <= 13.
pub fn chain_operator(kernel: &PairKernel, n: usize, coupling: Coupling) -> Result<ChainOperator> {
    if n > MAX_FULL_N {
        return Err(Error::Capacity(format!(
            "full chain limited to n <= {}, got {}",
            MAX_FULL_N, n
        )));
    }
    let pairs = coupling.pairs(n)?;
    Ok(ChainOperator {
        n,
        coupling,
        rows: sparse_rows(kernel),
        kernel: kernel.clone(),
        pairs,
    })
}

impl ChainOperator {
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn kernel(&self) -> &PairKernel {
        &self.kernel
    }

    pub fn apply(&self, dist: &PauliWeightDist) -> Result<PauliWeightDist> {
        if dist.n != self.n || dist.weights.len() != self.dim() {
            return Err(Error::Domain(format!(
                "distribution is for n={} but chain has n={}",
                dist.n, self.n
            )));
        }
        let mut weights = vec![0.0; self.dim()];
        self.apply_to(&dist.weights, &mut weights);
        Ok(PauliWeightDist { n: self.n, weights })
    }
}

impl LinearChain for ChainOperator {
    fn n(&self) -> usize {
        self.n
    }

    fn coupling(&self) -> Coupling {
        self.coupling
    }

    fn dim(&self) -> usize {
        1usize << (2 * self.n)
    }

    fn apply_to(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let inv_l = 1.0 / self.pairs.len() as f64;
        let pairs = &self.pairs;
        let rows = &self.rows;
        let body = |alpha: usize| {
            let mut acc = 0.0;
            for &(i, j) in pairs {
                let di = (alpha >> (2 * i)) & 3;
                let dj = (alpha >> (2 * j)) & 3;
                let rest = alpha & !(3 << (2 * i)) & !(3 << (2 * j));
                for &(input, w) in &rows[4 * di + dj] {
                    let beta = rest | ((input >> 2) << (2 * i)) | ((input & 3) << (2 * j));
                    acc += w * x[beta];
                }
            }
            acc * inv_l
        };
        if self.dim() < 4096 {
            for (alpha, slot) in y.iter_mut().enumerate() {
                *slot = body(alpha);
            }
        } else {
            y.par_chunks_mut(1024).enumerate().for_each(|(ci, chunk)| {
                for (off, slot) in chunk.iter_mut().enumerate() {
                    *slot = body(ci * 1024 + off);
                }
            });
        }
    }

    fn dense(&self) -> Result<Mat<f64>> {
        let dim = self.dim();
        if dim > DENSE_DIM_CAP {
            return Err(Error::Capacity(format!(
                "dense full chain limited to dimension {}, n={} gives {}",
                DENSE_DIM_CAP, self.n, dim
            )));
        }
        let inv_l = 1.0 / self.pairs.len() as f64;
        let mut m = Mat::<f64>::zeros(dim, dim);
        for beta in 0..dim {
            for &(i, j) in &self.pairs {
                let di = (beta >> (2 * i)) & 3;
                let dj = (beta >> (2 * j)) & 3;
                let rest = beta & !(3 << (2 * i)) & !(3 << (2 * j));
                for out in 0..16usize {
                    let w = self.kernel.m[out][4 * di + dj];
                    if w != 0.0 {
                        let alpha = rest | ((out >> 2) << (2 * i)) | ((out & 3) << (2 * j));
                        m[(alpha, beta)] += w * inv_l;
                    }
                }
            }
        }
        Ok(m)
    }

    fn unit_r1(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }

    fn mode(&self) -> &'static str {
        "full"
    }
}

/// Pauli weights of the product state |00...0>: 1/2^n on each string whose
/// digits are all identity or z.
pub fn initial_dist_product_state(n: usize) -> Result<PauliWeightDist> {
    if n == 0 {
        return Err(Error::Domain("n >= 1 required".into()));
    }
    if n > MAX_FULL_N {
        return Err(Error::Capacity(format!(
            "full distributions limited to n <= {}, got {}",
            MAX_FULL_N, n
        )));
    }
    let mut weights = vec![0.0; 1usize << (2 * n)];
    let w = 1.0 / (1usize << n) as f64;
    for mask in 0..(1usize << n) {
        let mut alpha = 0usize;
        for k in 0..n {
            if (mask >> k) & 1 == 1 {
                alpha |= 3 << (2 * k);
            }
        }
        weights[alpha] = w;
    }
    Ok(PauliWeightDist { n, weights })
}

/// Stationary distribution reached from any start with support on identity:
/// 1/2^n on the identity string, the rest uniform.
pub fn ergodic_dist(n: usize) -> Result<PauliWeightDist> {
    if n == 0 {
        return Err(Error::Domain("n >= 1 required".into()));
    }
    if n > MAX_FULL_N {
        return Err(Error::Capacity(format!(
            "full distributions limited to n <= {}, got {}",
            MAX_FULL_N, n
        )));
    }
    let dim = 1usize << (2 * n);
    let p0 = 1.0 / (1usize << n) as f64;
    let rest = (1.0 - p0) / (dim - 1) as f64;
    let mut weights = vec![rest; dim];
    weights[0] = p0;
    Ok(PauliWeightDist { n, weights })
}

/// Purity across the symmetric cut: 2^(n/2) times the mass of strings that
/// are identity on the upper half.
pub fn purity_from_dist(dist: &PauliWeightDist) -> Result<f64> {
    if dist.n % 2 != 0 {
        return Err(Error::Domain(format!(
            "symmetric-cut purity needs even n, got {}",
            dist.n
        )));
    }
    let half_dim = 1usize << dist.n; // 4^(n/2)
    let mass: f64 = dist.weights[..half_dim].iter().sum();
    Ok((1usize << (dist.n / 2)) as f64 * mass)
}

/// Iterate the chain from `dist`, recording symmetric-cut purity at each step.
pub fn evolve(
    op: &ChainOperator,
    dist: &PauliWeightDist,
    t_max: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut p = dist.clone();
    let mut out = Vec::with_capacity(t_max + 1);
    out.push((0, purity_from_dist(&p)?));
    for t in 1..=t_max {
        p = op.apply(&p)?;
        out.push((t, purity_from_dist(&p)?));
    }
    Ok(out)
}

// Support class of a pair index: bit 0 set if qubit i carries a non-identity
// Pauli, bit 1 for qubit j.
fn pair_class(x: usize) -> usize {
    (((x >> 2) != 0) as usize) | ((((x & 3) != 0) as usize) << 1)
}

/// Per-class verdict of the strict (representative-independent) lumpability
/// check. Failure is data, not an error: the aggregated kernel is still exact
/// for within-class-uniform inputs, which the spectral analysis relies on.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct LumpReport {
    pub class_pass: [bool; 4],
    pub class_max_deviation: [f64; 4],
    pub tolerance: f64,
}

/// Aggregate a pair kernel over support classes with weights (1,3,3,9).
/// Returned kernel is row-stochastic with rows indexed by the source class.
pub fn lump(kernel: &PairKernel) -> ([[f64; 4]; 4], LumpReport) {
    let members: Vec<Vec<usize>> = (0..4)
        .map(|c| (0..16).filter(|&x| pair_class(x) == c).collect())
        .collect();
    let mut lumped = [[0.0; 4]; 4];
    for (a, from) in members.iter().enumerate() {
        for (b, to) in members.iter().enumerate() {
            let mut s = 0.0;
            for &input in from {
                for &out in to {
                    s += kernel.m[out][input];
                }
            }
            lumped[a][b] = s / LUMP_CLASS_SIZES[a];
        }
    }
    let mut class_pass = [true; 4];
    let mut class_max_deviation = [0.0f64; 4];
    for (a, from) in members.iter().enumerate() {
        for &input in from {
            for (b, to) in members.iter().enumerate() {
                let row: f64 = to.iter().map(|&out| kernel.m[out][input]).sum();
                let dev = (row - lumped[a][b]).abs();
                class_max_deviation[a] = class_max_deviation[a].max(dev);
            }
        }
        class_pass[a] = class_max_deviation[a] <= LUMP_TOL;
    }
    (
        lumped,
        LumpReport {
            class_pass,
            class_max_deviation,
            tolerance: LUMP_TOL,
        },
    )
}

/// 2^n support-pattern chain built from the lumped 4x4 kernel.
///
/// The operator acts in scaled coordinates x[s] = p[s] / sqrt(3)^|s|, where
/// p[s] is the aggregate weight of pattern s. In these coordinates the chain
/// is the restriction of the full chain to an orthonormal basis of the
/// pattern-uniform subspace, so its 2-norm stays at 1 and its left and right
/// stationary vectors coincide. Plain pattern coordinates hide a diagonal
/// similarity of condition 3^(n/2) that floors iterative residuals near 1e-8
/// by n = 14. Eigenvalues are unchanged either way.
pub struct LumpedChain {
    n: usize,
    coupling: Coupling,
    pairs: Vec<(usize, usize)>,
    /// kernel[from][to] over classes {empty, {i}, {j}, {i,j}}
    kernel: [[f64; 4]; 4],
    /// kernel conjugated by the sqrt(3)^|class| scaling; what apply/dense use
    scaled: [[f64; 4]; 4],
    report: LumpReport,
}

/// Assemble the lumped chain. Capacity-limited to n <= 26.
pub fn lumped_chain(kernel: &PairKernel, n: usize, coupling: Coupling) -> Result<LumpedChain> {
    if n > MAX_LUMPED_N {
        return Err(Error::Capacity(format!(
            "lumped chain limited to n <= {}, got {}",
            MAX_LUMPED_N, n
        )));
    }
    let pairs = coupling.pairs(n)?;
    let (lumped, report) = lump(kernel);
    let gamma = [1.0, 3.0f64.sqrt(), 3.0f64.sqrt(), 3.0];
    let mut scaled = [[0.0; 4]; 4];
    for (a, row) in lumped.iter().enumerate() {
        for (b, &w) in row.iter().enumerate() {
            // T = D^-1 M D elementwise: entry (to=b, from=a) picks up g_a/g_b
            scaled[a][b] = w * gamma[a] / gamma[b];
        }
    }
    Ok(LumpedChain {
        n,
        coupling,
        pairs,
        kernel: lumped,
        scaled,
        report,
    })
}

impl LumpedChain {
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn lumped_kernel(&self) -> &[[f64; 4]; 4] {
        &self.kernel
    }

    pub fn report(&self) -> &LumpReport {
        &self.report
    }

    /// Convert a vector from the operator's scaled coordinates back to plain
    /// support-pattern coordinates, e.g. before `lift_lumped_vector`.
    pub fn pattern_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Domain(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.dim()
            )));
        }
        let root3 = 3.0f64.sqrt();
        Ok(v.iter()
            .enumerate()
            .map(|(s, &x)| x * root3.powi(s.count_ones() as i32))
            .collect())
    }
}

impl LinearChain for LumpedChain {
    fn n(&self) -> usize {
        self.n
    }

    fn coupling(&self) -> Coupling {
        self.coupling
    }

    fn dim(&self) -> usize {
        1usize << self.n
    }

    fn apply_to(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let inv_l = 1.0 / self.pairs.len() as f64;
        let pairs = &self.pairs;
        let kernel = &self.scaled;
        let body = |s: usize| {
            let mut acc = 0.0;
            for &(i, j) in pairs {
                let c_out = ((s >> i) & 1) | (((s >> j) & 1) << 1);
                let rest = s & !(1 << i) & !(1 << j);
                for c_in in 0..4usize {
                    let w = kernel[c_in][c_out];
                    if w != 0.0 {
                        let s_in = rest | ((c_in & 1) << i) | ((c_in >> 1) << j);
                        acc += w * x[s_in];
                    }
                }
            }
            acc * inv_l
        };
        if self.dim() < 4096 {
            for (s, slot) in y.iter_mut().enumerate() {
                *slot = body(s);
            }
        } else {
            y.par_chunks_mut(1024).enumerate().for_each(|(ci, chunk)| {
                for (off, slot) in chunk.iter_mut().enumerate() {
                    *slot = body(ci * 1024 + off);
                }
            });
        }
    }

    fn dense(&self) -> Result<Mat<f64>> {
        let dim = self.dim();
        if dim > DENSE_DIM_CAP {
            return Err(Error::Capacity(format!(
                "dense lumped chain limited to dimension {}, n={} gives {}",
                DENSE_DIM_CAP, self.n, dim
            )));
        }
        let inv_l = 1.0 / self.pairs.len() as f64;
        let mut m = Mat::<f64>::zeros(dim, dim);
        for s_in in 0..dim {
            for &(i, j) in &self.pairs {
                let c_in = ((s_in >> i) & 1) | (((s_in >> j) & 1) << 1);
                let rest = s_in & !(1 << i) & !(1 << j);
                for c_out in 0..4usize {
                    let w = self.scaled[c_in][c_out];
                    if w != 0.0 {
                        let s_out = rest | ((c_out & 1) << i) | ((c_out >> 1) << j);
                        m[(s_out, s_in)] += w * inv_l;
                    }
                }
            }
        }
        Ok(m)
    }

    fn unit_r1(&self) -> Vec<f64> {
        let root3 = 3.0f64.sqrt();
        (0..self.dim())
            .map(|s| root3.powi(s.count_ones() as i32))
            .collect()
    }

    fn mode(&self) -> &'static str {
        "lumped"
    }
}

/// Support pattern of a Pauli string: bit q set iff digit q is non-identity.
pub fn string_support(alpha: usize, n: usize) -> usize {
    let mut s = 0usize;
    for q in 0..n {
        if (alpha >> (2 * q)) & 3 != 0 {
            s |= 1 << q;
        }
    }
    s
}

/// Lift a lumped-chain vector to the full chain by spreading each class value
/// uniformly over its 3^|support| strings. Exact: lifted eigenvectors of the
/// lumped chain are eigenvectors of the full chain with the same eigenvalue.
pub fn lift_lumped_vector(n: usize, v: &[f64]) -> Result<Vec<f64>> {
    if n > MAX_FULL_N {
        return Err(Error::Capacity(format!(
            "lifting limited to n <= {}, got {}",
            MAX_FULL_N, n
        )));
    }
    if v.len() != 1usize << n {
        return Err(Error::Domain(format!(
            "lumped vector has length {}, expected {}",
            v.len(),
            1usize << n
        )));
    }
    let dim = 1usize << (2 * n);
    let mut out = vec![0.0; dim];
    out.par_chunks_mut(4096).enumerate().for_each(|(ci, chunk)| {
        for (off, slot) in chunk.iter_mut().enumerate() {
            let alpha = ci * 4096 + off;
            let s = string_support(alpha, n);
            *slot = v[s] / 3.0f64.powi(s.count_ones() as i32);
        }
    });
    Ok(out)
}
