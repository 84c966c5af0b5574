//! Two-qubit gate construction and classification: the canonical form
//! w(ax, ay, az), named gates, magic-basis local invariants, symmetry
//! reduction into the fundamental parameter range, and extraction of Pauli
//! conjugation tables for gates that preserve the Pauli group.

use num_complex::Complex64 as C64;

use crate::error::Error;
use crate::qsim::{unitary_deviation4, M2, M4};
use crate::Result;

/// Default tolerance for Clifford detection.
pub const CLIFFORD_TOL: f64 = 1e-8;

/// Canonical-form coefficients (ax, ay, az) of a two-qubit gate class.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CanonicalParams {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl CanonicalParams {
    pub fn new(ax: f64, ay: f64, az: f64) -> Self {
        CanonicalParams { ax, ay, az }
    }

    /// True if 1 >= ax >= ay >= az >= 0.
    pub fn in_fundamental_range(&self) -> bool {
        1.0 >= self.ax && self.ax >= self.ay && self.ay >= self.az && self.az >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateName {
    Cnot,
    Xy,
    Dcnot,
    Swap,
    Identity,
}

/// Where a gate matrix came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Named(GateName),
    Canonical(CanonicalParams),
    External,
}

/// A 4x4 two-qubit gate with provenance. Row index convention: qubit i of
/// the acting pair (i, j) is the more significant bit.
#[derive(Clone, Copy, Debug)]
pub struct TwoQubitGate {
    pub matrix: M4,
    pub provenance: Provenance,
}

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// exp(i pi/4 (ax XX + ay YY + az ZZ)).
///
/// The three terms commute and split the 4-dim space into the even parity
/// block {|00>, |11>} and the odd block {|01>, |10>}; on each block the sum
/// is a shifted 2x2 rotation, which gives the closed form below.
pub fn canonical_gate(p: CanonicalParams) -> TwoQubitGate {
    let tz = std::f64::consts::FRAC_PI_4 * p.az;
    let tm = std::f64::consts::FRAC_PI_4 * (p.ax - p.ay);
    let tp = std::f64::consts::FRAC_PI_4 * (p.ax + p.ay);
    let ez = C64::from_polar(1.0, tz);
    let ezc = C64::from_polar(1.0, -tz);
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = ez * tm.cos();
    m[3][3] = m[0][0];
    m[0][3] = I * ez * tm.sin();
    m[3][0] = m[0][3];
    m[1][1] = ezc * tp.cos();
    m[2][2] = m[1][1];
    m[1][2] = I * ezc * tp.sin();
    m[2][1] = m[1][2];
    TwoQubitGate {
        matrix: m,
        provenance: Provenance::Canonical(p),
    }
}

/// Exact matrix of a named gate.
pub fn named_gate(name: GateName) -> TwoQubitGate {
    let mut m = [[ZERO; 4]; 4];
    match name {
        GateName::Identity => {
            for k in 0..4 {
                m[k][k] = ONE;
            }
        }
        GateName::Cnot => {
            m[0][0] = ONE;
            m[1][1] = ONE;
            m[2][3] = ONE;
            m[3][2] = ONE;
        }
        GateName::Xy => {
            m[0][0] = ONE;
            m[1][2] = -I;
            m[2][1] = -I;
            m[3][3] = ONE;
        }
        // product of two opposite-orientation CNOTs; same canonical class
        // as the XY gate
        GateName::Dcnot => {
            m[0][0] = ONE;
            m[3][1] = ONE;
            m[1][2] = ONE;
            m[2][3] = ONE;
        }
        GateName::Swap => {
            m[0][0] = ONE;
            m[2][1] = ONE;
            m[1][2] = ONE;
            m[3][3] = ONE;
        }
    }
    TwoQubitGate {
        matrix: m,
        provenance: Provenance::Named(name),
    }
}

// magic basis columns (unnormalized by the common 1/sqrt(2))
const MAGIC: M4 = [
    [ONE, I, ZERO, ZERO],
    [ZERO, ZERO, I, ONE],
    [ZERO, ZERO, I, C64::new(-1.0, 0.0)],
    [ONE, C64::new(0.0, -1.0), ZERO, ZERO],
];

/// Local invariants (G1, G2) of a two-qubit gate, insensitive to one-qubit
/// factors on either side. Identity gives (1, 3); CNOT gives (0, 1); the XY
/// class gives (0, -1).
pub fn local_invariants(g: &TwoQubitGate) -> Result<(C64, f64)> {
    let dev = unitary_deviation4(&g.matrix);
    if dev > crate::qsim::UNITARY_TOL {
        return Err(Error::Validation(format!(
            "local invariants need a unitary input (deviation {:.3e})",
            dev
        )));
    }
    // U in the magic basis, with the 1/2 from the two basis normalizations
    let ub = mat4_scale(
        &mat4_mul(&mat4_adjoint(&MAGIC), &mat4_mul(&g.matrix, &MAGIC)),
        C64::new(0.5, 0.0),
    );
    let m = mat4_mul(&mat4_transpose(&ub), &ub);
    let tr = mat4_trace(&m);
    let tr_m2 = mat4_trace(&mat4_mul(&m, &m));
    let det = det4(&g.matrix);
    let g1 = tr * tr / (det * 16.0);
    let g2 = (tr * tr - tr_m2) / (det * 4.0);
    Ok((g1, g2.re))
}

/// Generator record for the reduction into the fundamental range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionMove {
    /// Period-2 translation a -> a + 2*steps on one axis, realized by a
    /// Pauli-pair prefactor.
    Shift { axis: Axis, steps: i64 },
    /// Reflection 1+a <-> 1-a on one axis; involves complex conjugation of
    /// the matrix, so it maps a gate to an equally entangling partner rather
    /// than to a matrix-identical one.
    Reflect { axis: Axis },
    /// Exchange of two coefficients by conjugating with a pair of pi/2
    /// single-qubit rotations about the remaining axis.
    Swap { a: Axis, b: Axis },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    pub params: CanonicalParams,
    pub moves: Vec<ReductionMove>,
}

/// Reduce arbitrary canonical coefficients into 1 >= ax >= ay >= az >= 0 by
/// composing symmetry generators; the applied generators are recorded in
/// order.
pub fn reduce_to_fundamental(p: CanonicalParams) -> Reduction {
    const AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
    let mut v = [p.ax, p.ay, p.az];
    let mut moves = Vec::new();
    for (k, axis) in AXES.iter().enumerate() {
        let t = v[k].div_euclid(2.0);
        if t != 0.0 {
            moves.push(ReductionMove::Shift {
                axis: *axis,
                steps: -t as i64,
            });
            v[k] -= 2.0 * t;
        }
        if v[k] > 1.0 {
            moves.push(ReductionMove::Reflect { axis: *axis });
            v[k] = 2.0 - v[k];
        }
    }
    // three-element bubble sort, recording each exchange
    for (a, b) in [(0usize, 1usize), (1, 2), (0, 1)] {
        if v[a] < v[b] {
            v.swap(a, b);
            moves.push(ReductionMove::Swap {
                a: AXES[a],
                b: AXES[b],
            });
        }
    }
    Reduction {
        params: CanonicalParams::new(v[0], v[1], v[2]),
        moves,
    }
}

/// Signed permutation of the 16 two-qubit Pauli products under conjugation
/// by a Clifford gate. Index convention x = bj + 4*bi with digits
/// 0..3 = (1, sx, sy, sz), qubit i the high digit.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliConjugationTable {
    pub perm: [usize; 16],
    pub phase: [C64; 16],
}

/// Conjugate every Pauli product through the gate. Returns the table when
/// each image is a single Pauli product times one of {1, -1, i, -i} within
/// tol, and None otherwise.
pub fn pauli_conjugation_table(g: &TwoQubitGate, tol: f64) -> Option<PauliConjugationTable> {
    let paulis: [M4; 16] = std::array::from_fn(pauli_pair);
    let adj = mat4_adjoint(&g.matrix);
    let mut perm = [0usize; 16];
    let mut phase = [ZERO; 16];
    let mut used = [false; 16];
    for x in 0..16 {
        let img = mat4_mul(&g.matrix, &mat4_mul(&paulis[x], &adj));
        let mut best = (0usize, ZERO);
        let mut off_weight = 0.0f64;
        for y in 0..16 {
            // tr(P_y img) / 4; Pauli products are Hermitian and orthogonal
            let mut ov = ZERO;
            for r in 0..4 {
                for c in 0..4 {
                    ov += paulis[y][r][c] * img[c][r];
                }
            }
            ov /= 4.0;
            if ov.norm() > best.1.norm() {
                off_weight = off_weight.max(best.1.norm());
                best = (y, ov);
            } else {
                off_weight = off_weight.max(ov.norm());
            }
        }
        if off_weight > tol || used[best.0] {
            return None;
        }
        let snapped = snap_phase(best.1, tol)?;
        perm[x] = best.0;
        phase[x] = snapped;
        used[best.0] = true;
    }
    Some(PauliConjugationTable { perm, phase })
}

fn snap_phase(ov: C64, tol: f64) -> Option<C64> {
    let candidates = [ONE, -ONE, I, -I];
    candidates
        .into_iter()
        .find(|c| (ov - c).norm() <= tol)
}

const PAULI1: [M2; 4] = [
    [[ONE, ZERO], [ZERO, ONE]],
    [[ZERO, ONE], [ONE, ZERO]],
    [[ZERO, C64::new(0.0, -1.0)], [I, ZERO]],
    [[ONE, ZERO], [ZERO, C64::new(-1.0, 0.0)]],
];

/// P_{bi} (x) P_{bj} for x = bj + 4*bi, with qubit i on the high bit.
pub fn pauli_pair(x: usize) -> M4 {
    let a = &PAULI1[x / 4];
    let b = &PAULI1[x % 4];
    let mut m = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = a[r / 2][c / 2] * b[r % 2][c % 2];
        }
    }
    m
}

/// Gate specification grammar shared with the command line:
/// `cnot | xy | dcnot | swap | u4 | canonical:ax,ay,az`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateSpec {
    Named(GateName),
    Canonical(CanonicalParams),
    /// A fresh Haar U(4) draw at every protocol step.
    U4Random,
}

impl GateSpec {
    /// The fixed matrix implementing this spec, or None for the per-step
    /// Haar ensemble.
    pub fn fixed_gate(&self) -> Option<TwoQubitGate> {
        match self {
            GateSpec::Named(name) => Some(named_gate(*name)),
            GateSpec::Canonical(p) => Some(canonical_gate(*p)),
            GateSpec::U4Random => None,
        }
    }
}

impl std::str::FromStr for GateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "cnot" => return Ok(GateSpec::Named(GateName::Cnot)),
            "xy" => return Ok(GateSpec::Named(GateName::Xy)),
            "dcnot" => return Ok(GateSpec::Named(GateName::Dcnot)),
            "swap" => return Ok(GateSpec::Named(GateName::Swap)),
            "u4" => return Ok(GateSpec::U4Random),
            _ => {}
        }
        if let Some(rest) = lower.strip_prefix("canonical:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() == 3 {
                let mut vals = [0.0f64; 3];
                for (v, part) in vals.iter_mut().zip(&parts) {
                    *v = part.trim().parse::<f64>().map_err(|_| {
                        Error::Usage(format!("bad canonical coefficient {:?} in gate spec {:?}", part, s))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Usage(format!("non-finite coefficient in gate spec {:?}", s)));
                    }
                }
                return Ok(GateSpec::Canonical(CanonicalParams::new(vals[0], vals[1], vals[2])));
            }
            return Err(Error::Usage(format!(
                "gate spec {:?} needs exactly three comma-separated coefficients",
                s
            )));
        }
        Err(Error::Usage(format!(
            "unknown gate spec {:?}; expected cnot | xy | dcnot | swap | u4 | canonical:ax,ay,az",
            s
        )))
    }
}

impl std::fmt::Display for GateSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GateSpec::Named(GateName::Cnot) => write!(f, "cnot"),
            GateSpec::Named(GateName::Xy) => write!(f, "xy"),
            GateSpec::Named(GateName::Dcnot) => write!(f, "dcnot"),
            GateSpec::Named(GateName::Swap) => write!(f, "swap"),
            GateSpec::Named(GateName::Identity) => write!(f, "canonical:0,0,0"),
            GateSpec::Canonical(p) => write!(f, "canonical:{},{},{}", p.ax, p.ay, p.az),
            GateSpec::U4Random => write!(f, "u4"),
        }
    }
}

// small dense helpers on the fixed 4x4 type

pub fn mat4_mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for k in 0..4 {
            let arl = a[r][k];
            for c in 0..4 {
                out[r][c] += arl * b[k][c];
            }
        }
    }
    out
}

pub fn mat4_adjoint(a: &M4) -> M4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[c][r].conj();
        }
    }
    out
}

pub fn mat4_transpose(a: &M4) -> M4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[c][r];
        }
    }
    out
}

pub fn mat4_conj(a: &M4) -> M4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[r][c].conj();
        }
    }
    out
}

pub fn mat4_scale(a: &M4, s: C64) -> M4 {
    let mut out = *a;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    out
}

pub fn mat4_trace(a: &M4) -> C64 {
    a[0][0] + a[1][1] + a[2][2] + a[3][3]
}

/// Determinant by elimination with partial pivoting.
pub fn det4(a: &M4) -> C64 {
    let mut m = *a;
    let mut det = ONE;
    for col in 0..4 {
        let mut piv = col;
        for r in col + 1..4 {
            if m[r][col].norm() > m[piv][col].norm() {
                piv = r;
            }
        }
        if m[piv][col].norm() == 0.0 {
            return ZERO;
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        let inv = ONE / m[col][col];
        for r in col + 1..4 {
            let f = m[r][col] * inv;
            for c in col..4 {
                let sub = f * m[col][c];
                m[r][c] -= sub;
            }
        }
    }
    det
}

/// Kronecker product of two one-qubit operators into the pair convention
/// used here (first factor on the high bit).
pub fn kron2(a: &M2, b: &M2) -> M4 {
    let mut m = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = a[r / 2][c / 2] * b[r % 2][c % 2];
        }
    }
    m
}
