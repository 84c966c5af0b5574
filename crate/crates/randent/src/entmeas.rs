//! Bipartite entanglement measures of pure states, plus closed-form
//! reference values for Haar random states.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::Error;
use crate::qsim::PureState;
use crate::Result;

/// A bipartition of the n qubits into member set A and its complement B.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bipartition {
    n: usize,
    a: Vec<usize>,
}

impl Bipartition {
    /// Cut with the given member set A; must be a non-empty proper subset.
    pub fn new(n: usize, mut a: Vec<usize>) -> Result<Self> {
        a.sort_unstable();
        a.dedup();
        if a.is_empty() || a.len() >= n {
            return Err(Error::Domain(format!(
                "bipartition needs a non-empty proper subset, got {} of {} qubits",
                a.len(),
                n
            )));
        }
        if *a.last().unwrap() >= n {
            return Err(Error::Domain(format!(
                "bipartition member {} out of range for n={}",
                a.last().unwrap(),
                n
            )));
        }
        Ok(Bipartition { n, a })
    }

    /// The default symmetric cut: first n/2 against last n/2 qubits.
    pub fn symmetric(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::Domain(format!(
                "symmetric cut needs even n >= 2, got {}",
                n
            )));
        }
        Bipartition::new(n, (0..n / 2).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[usize] {
        &self.a
    }
}

/// Schmidt coefficients in nonincreasing order.
#[derive(Clone, Debug)]
pub struct SchmidtSpectrum {
    pub mu: Vec<f64>,
}

// Amplitude matrix of the state across the cut, shaped so its rows run over
// the smaller subsystem. Purity and the Schmidt spectrum only need the Gram
// matrix of this.
fn amplitude_matrix(state: &PureState, cut: &Bipartition) -> Result<Mat<C64>> {
    if cut.n != state.n() {
        return Err(Error::Domain(format!(
            "cut is for n={} but state has n={}",
            cut.n,
            state.n()
        )));
    }
    let n = state.n();
    let b: Vec<usize> = (0..n).filter(|q| !cut.a.contains(q)).collect();
    let (rows, cols) = if cut.a.len() <= b.len() {
        (cut.a.clone(), b)
    } else {
        (b, cut.a.clone())
    };
    let dr = 1usize << rows.len();
    let dc = 1usize << cols.len();
    let mut m = Mat::<C64>::zeros(dr, dc);
    for (z, &amp) in state.amplitudes().iter().enumerate() {
        let mut r = 0usize;
        for (k, &q) in rows.iter().enumerate() {
            r |= ((z >> q) & 1) << k;
        }
        let mut c = 0usize;
        for (k, &q) in cols.iter().enumerate() {
            c |= ((z >> q) & 1) << k;
        }
        m[(r, c)] = amp;
    }
    Ok(m)
}

fn gram(state: &PureState, cut: &Bipartition) -> Result<Mat<C64>> {
    let m = amplitude_matrix(state, cut)?;
    Ok(&m * m.adjoint())
}

/// Squared Schmidt coefficients (reduced-density eigenvalues), sorted
/// nonincreasing, clamped to be nonnegative.
pub fn schmidt_sq(state: &PureState, cut: &Bipartition) -> Result<Vec<f64>> {
    let g = gram(state, cut)?;
    let mut ev = g
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Structural(format!("hermitian eigensolve failed: {:?}", e)))?;
    ev.reverse();
    for v in ev.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(ev)
}

/// Purity tr(rho_A^2) of the reduced state across the cut.
pub fn purity(state: &PureState, cut: &Bipartition) -> Result<f64> {
    let g = gram(state, cut)?;
    let mut s = 0.0;
    for c in 0..g.ncols() {
        for r in 0..g.nrows() {
            s += g[(r, c)].norm_sqr();
        }
    }
    Ok(s)
}

/// Von Neumann entropy of the reduced state, in bits.
pub fn vn_entropy(state: &PureState, cut: &Bipartition) -> Result<f64> {
    let ev = schmidt_sq(state, cut)?;
    Ok(entropy_from_sq(&ev))
}

/// Entropy in bits from squared Schmidt coefficients; zeros contribute 0.
pub fn entropy_from_sq(sq: &[f64]) -> f64 {
    -sq.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.log2())
        .sum::<f64>()
}

/// Schmidt coefficients across the cut, nonincreasing.
pub fn schmidt_spectrum(state: &PureState, cut: &Bipartition) -> Result<SchmidtSpectrum> {
    let mu = schmidt_sq(state, cut)?.into_iter().map(f64::sqrt).collect();
    Ok(SchmidtSpectrum { mu })
}

/// The i-th (1-based) Schmidt coefficient of an N-dimensional random state,
/// from the implicit large-N density: solve
/// (i - 1/2) pi / (2N) = phi - sin(2 phi)/2 on [0, pi/2], then
/// mu_i = 2 cos(phi) / sqrt(N). The half-integer offset is the midpoint rule
/// that makes the squares sum to 1 up to O(1/N).
pub fn random_schmidt_reference(i: usize, n_dim: usize) -> Result<f64> {
    if n_dim == 0 || i == 0 || i > n_dim {
        return Err(Error::Domain(format!(
            "reference rank {} out of range 1..={}",
            i, n_dim
        )));
    }
    let nf = n_dim as f64;
    let target = (i as f64 - 0.5) * std::f64::consts::PI / (2.0 * nf);
    let f = |phi: f64| phi - (2.0 * phi).sin() / 2.0 - target;
    let mut lo = 0.0f64;
    let mut hi = std::f64::consts::FRAC_PI_2;
    // f is monotone increasing on [0, pi/2] and brackets the root
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let phi = 0.5 * (lo + hi);
    Ok(2.0 * phi.cos() / nf.sqrt())
}

/// Exact ensemble purity of an N x N random bipartite pure state,
/// 2N/(N^2+1) with N = 2^(n/2); approaches 2/N for large n.
pub fn asymptotic_purity(n: usize) -> Result<f64> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::Domain(format!("even n >= 2 required, got {}", n)));
    }
    let nf = (1usize << (n / 2)) as f64;
    Ok(2.0 * nf / (nf * nf + 1.0))
}

/// Large-N mean entropy of a random state, n/2 - 1/ln 4 bits.
pub fn asymptotic_entropy(n: usize) -> Result<f64> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::Domain(format!("even n >= 2 required, got {}", n)));
    }
    Ok(n as f64 / 2.0 - 1.0 / (4.0f64).ln())
}
