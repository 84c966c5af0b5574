//! Dense statevector simulation of n qubits: basis states, one- and
//! two-qubit gate application, and Haar-random unitary sampling.
//!
//! Conventions fixed here and inherited by every other module:
//! little-endian qubit order (qubit 0 is the least significant bit of the
//! amplitude index), and for a two-qubit gate acting on (i, j) the qubit i
//! forms the more significant bit of the 4x4 row index. With that choice the
//! textbook CNOT matrix has i as control and j as target.

use num_complex::Complex64 as C64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::Result;

pub type M2 = [[C64; 2]; 2];
pub type M4 = [[C64; 4]; 4];

/// Largest supported register; 2^24 complex doubles is 256 MB.
pub const MAX_QUBITS: usize = 24;

/// Unitarity tolerance for gate inputs.
pub const UNITARY_TOL: f64 = 1e-10;

/// Counter-based deterministic RNG stream. Identical (seed, stream) pairs
/// reproduce identical draw sequences regardless of thread scheduling, which
/// is what makes replica ensembles exactly mergeable.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { rng, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Pure state of an n-qubit register.
#[derive(Clone, Debug)]
pub struct PureState {
    n: usize,
    amps: Vec<C64>,
}

impl PureState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Apply a 2x2 unitary to qubit q.
    pub fn apply_one_qubit(&mut self, q: usize, u: &M2) -> Result<()> {
        if q >= self.n {
            return Err(Error::Domain(format!("qubit {} out of range for n={}", q, self.n)));
        }
        let dev = unitary_deviation2(u);
        if dev > UNITARY_TOL {
            return Err(Error::Validation(format!(
                "2x2 gate is not unitary (deviation {:.3e})",
                dev
            )));
        }
        let s = 1usize << q;
        for base in 0..self.amps.len() {
            if base & s != 0 {
                continue;
            }
            let a0 = self.amps[base];
            let a1 = self.amps[base | s];
            self.amps[base] = u[0][0] * a0 + u[0][1] * a1;
            self.amps[base | s] = u[1][0] * a0 + u[1][1] * a1;
        }
        Ok(())
    }

    /// Apply a 4x4 unitary to the ordered pair (i, j); qubit i is the high
    /// bit of the matrix row index.
    pub fn apply_two_qubit(&mut self, i: usize, j: usize, u: &M4) -> Result<()> {
        if i == j {
            return Err(Error::Domain(format!("pair qubits must differ, got ({}, {})", i, j)));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::Domain(format!(
                "pair ({}, {}) out of range for n={}",
                i, j, self.n
            )));
        }
        let dev = unitary_deviation4(u);
        if dev > UNITARY_TOL {
            return Err(Error::Validation(format!(
                "4x4 gate is not unitary (deviation {:.3e})",
                dev
            )));
        }
        let si = 1usize << i;
        let sj = 1usize << j;
        for base in 0..self.amps.len() {
            if base & (si | sj) != 0 {
                continue;
            }
            let v = [
                self.amps[base],
                self.amps[base | sj],
                self.amps[base | si],
                self.amps[base | si | sj],
            ];
            for (r, &slot) in [base, base | sj, base | si, base | si | sj].iter().enumerate() {
                self.amps[slot] =
                    u[r][0] * v[0] + u[r][1] * v[1] + u[r][2] * v[2] + u[r][3] * v[3];
            }
        }
        Ok(())
    }
}

/// Computational basis state |index> of n qubits.
pub fn init_basis_state(n: usize, index: usize) -> Result<PureState> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Capacity(format!("qubit count {} outside 1..={}", n, MAX_QUBITS)));
    }
    let dim = 1usize << n;
    if index >= dim {
        return Err(Error::Domain(format!("basis index {} out of range for n={}", index, n)));
    }
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    amps[index] = C64::new(1.0, 0.0);
    Ok(PureState { n, amps })
}

/// Haar random pure state: normalized vector of iid complex Gaussians.
pub fn haar_state(n: usize, rng: &mut RngStream) -> Result<PureState> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Capacity(format!("qubit count {} outside 1..={}", n, MAX_QUBITS)));
    }
    let dim = 1usize << n;
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    loop {
        for a in amps.iter_mut() {
            *a = gaussian_c64(rng);
        }
        let nrm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            for a in amps.iter_mut() {
                *a /= nrm;
            }
            return Ok(PureState { n, amps });
        }
    }
}

fn gaussian_c64(rng: &mut RngStream) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

// Ginibre matrix orthonormalized column by column. Two Gram-Schmidt passes
// keep the loss of orthogonality at the roundoff level; normalizing by the
// real positive residual norm is exactly the phase convention that makes the
// QR factor unique and the Q factor Haar distributed.
fn haar_unitary<const K: usize>(rng: &mut RngStream) -> [[C64; K]; K] {
    'redraw: loop {
        let mut cols = [[C64::new(0.0, 0.0); K]; K];
        for col in cols.iter_mut() {
            for entry in col.iter_mut() {
                *entry = gaussian_c64(rng);
            }
        }
        for c in 0..K {
            for _pass in 0..2 {
                for p in 0..c {
                    let mut ov = C64::new(0.0, 0.0);
                    for r in 0..K {
                        ov += cols[p][r].conj() * cols[c][r];
                    }
                    for r in 0..K {
                        let sub = ov * cols[p][r];
                        cols[c][r] -= sub;
                    }
                }
            }
            let nrm = cols[c].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            if nrm < 1e-8 {
                continue 'redraw;
            }
            for r in 0..K {
                cols[c][r] /= nrm;
            }
        }
        let mut m = [[C64::new(0.0, 0.0); K]; K];
        for r in 0..K {
            for c in 0..K {
                m[r][c] = cols[c][r];
            }
        }
        return m;
    }
}

/// CUE(2) sample.
pub fn haar_u2(rng: &mut RngStream) -> M2 {
    haar_unitary::<2>(rng)
}

/// CUE(4) sample.
pub fn haar_u4(rng: &mut RngStream) -> M4 {
    haar_unitary::<4>(rng)
}

/// Max entrywise deviation of U†U from the identity.
pub fn unitary_deviation2(u: &M2) -> f64 {
    unitary_deviation::<2>(u)
}

/// Max entrywise deviation of U†U from the identity.
pub fn unitary_deviation4(u: &M4) -> f64 {
    unitary_deviation::<4>(u)
}

fn unitary_deviation<const K: usize>(u: &[[C64; K]; K]) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..K {
        for c in 0..K {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..K {
                s += u[k][r].conj() * u[k][c];
            }
            if r == c {
                s -= C64::new(1.0, 0.0);
            }
            worst = worst.max(s.norm());
        }
    }
    worst
}
