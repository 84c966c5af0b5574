//! Monte Carlo execution of the random two-qubit protocol over replica
//! ensembles.
//!
//! Each step draws an ordered qubit pair from the coupling, applies the fixed
//! two-qubit gate W, then fresh Haar single-qubit rotations on the two active
//! qubits only (or a single fresh Haar 4x4 for the u4 spec). Replica r uses
//! RNG stream r of the master seed, so traces are reproducible and replica
//! ranges merge exactly: the reduction over replicas is a fixed midpoint tree,
//! independent of thread scheduling.

use rand::Rng;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

use crate::entmeas::{self, Bipartition};
use crate::error::Error;
use crate::gatelib::GateSpec;
use crate::paulichain::Coupling;
use crate::qsim::{haar_u2, haar_u4, init_basis_state, PureState, RngStream, M4};
use crate::Result;

/// Which observables to record at every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MeasureSet {
    pub purity: bool,
    pub entropy: bool,
    pub schmidt: bool,
}

impl MeasureSet {
    pub fn purity_only() -> Self {
        MeasureSet {
            purity: true,
            entropy: false,
            schmidt: false,
        }
    }

    pub fn all() -> Self {
        MeasureSet {
            purity: true,
            entropy: true,
            schmidt: true,
        }
    }

    pub fn any(&self) -> bool {
        self.purity || self.entropy || self.schmidt
    }

    // Entropy and Schmidt need the eigenvalues; bare purity only the Gram
    // Frobenius norm.
    fn needs_spectrum(&self) -> bool {
        self.entropy || self.schmidt
    }
}

impl FromStr for MeasureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut set = MeasureSet {
            purity: false,
            entropy: false,
            schmidt: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "purity" => set.purity = true,
                "entropy" => set.entropy = true,
                "schmidt" => set.schmidt = true,
                other => {
                    return Err(Error::Usage(format!(
                        "unknown measure '{}' (expected purity|entropy|schmidt)",
                        other
                    )))
                }
            }
        }
        if !set.any() {
            return Err(Error::Usage("empty measure set".into()));
        }
        Ok(set)
    }
}

impl fmt::Display for MeasureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.purity {
            parts.push("purity");
        }
        if self.entropy {
            parts.push("entropy");
        }
        if self.schmidt {
            parts.push("schmidt");
        }
        f.write_str(&parts.join(","))
    }
}

/// Full description of one ensemble run.
#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub n: usize,
    pub gate: GateSpec,
    pub coupling: Coupling,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub measures: MeasureSet,
    /// Member qubits of subsystem A; None means the symmetric first-half cut.
    pub cut: Option<Vec<usize>>,
}

/// Replica-averaged traces; one entry per t in 0..=steps.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct EnsembleTrace {
    pub n: usize,
    pub replicas: usize,
    pub steps: usize,
    /// (mean, standard error) per t.
    pub purity: Option<Vec<(f64, f64)>>,
    pub entropy: Option<Vec<(f64, f64)>>,
    /// Mean squared Schmidt coefficients per t, each row sorted descending.
    pub mu2: Option<Vec<Vec<f64>>>,
}

/// Draw an ordered pair uniformly from the coupling's pair set.
pub fn choose_pair(coupling: Coupling, n: usize, rng: &mut impl rand::Rng) -> Result<(usize, usize)> {
    let pairs = coupling.pairs(n)?;
    Ok(pairs[rng.random_range(0..pairs.len())])
}

enum StepGate {
    Fixed(M4),
    HaarPerStep,
}

// One protocol step against a precomputed pair list. Exactly one pair-index
// draw, then either two single-qubit Haar draws (i first) or one Haar 4x4;
// this draw order is part of the reproducibility contract.
fn step_with_pairs(
    state: &mut PureState,
    pairs: &[(usize, usize)],
    gate: &StepGate,
    rng: &mut RngStream,
) -> Result<()> {
    let (i, j) = pairs[rng.random_range(0..pairs.len())];
    match gate {
        StepGate::Fixed(w) => {
            state.apply_two_qubit(i, j, w)?;
            let vi = haar_u2(rng);
            state.apply_one_qubit(i, &vi)?;
            let vj = haar_u2(rng);
            state.apply_one_qubit(j, &vj)?;
        }
        StepGate::HaarPerStep => {
            let u = haar_u4(rng);
            state.apply_two_qubit(i, j, &u)?;
        }
    }
    Ok(())
}

/// Apply one protocol step in place.
pub fn protocol_step(
    state: &mut PureState,
    gate: &GateSpec,
    coupling: Coupling,
    rng: &mut RngStream,
) -> Result<()> {
    let pairs = coupling.pairs(state.n())?;
    let step_gate = match gate.fixed_gate() {
        Some(g) => StepGate::Fixed(g.matrix),
        None => StepGate::HaarPerStep,
    };
    step_with_pairs(state, &pairs, &step_gate, rng)
}

// Per-t sums over a replica range; merged left+right in a fixed tree.
struct Accum {
    count: usize,
    purity_sum: Vec<f64>,
    purity_sq: Vec<f64>,
    entropy_sum: Vec<f64>,
    entropy_sq: Vec<f64>,
    mu2_sum: Vec<Vec<f64>>,
}

impl Accum {
    fn merge(mut self, other: Accum) -> Accum {
        self.count += other.count;
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add(&mut self.purity_sum, &other.purity_sum);
        add(&mut self.purity_sq, &other.purity_sq);
        add(&mut self.entropy_sum, &other.entropy_sum);
        add(&mut self.entropy_sq, &other.entropy_sq);
        for (row, orow) in self.mu2_sum.iter_mut().zip(&other.mu2_sum) {
            for (x, y) in row.iter_mut().zip(orow) {
                *x += y;
            }
        }
        self
    }
}

struct RunPlan<'a> {
    cfg: &'a ProtocolConfig,
    pairs: Vec<(usize, usize)>,
    gate: StepGate,
    cut: Bipartition,
    mu_len: usize,
}

fn run_replica(plan: &RunPlan<'_>, replica: usize) -> Result<Accum> {
    let cfg = plan.cfg;
    let t_len = cfg.steps + 1;
    let mut acc = Accum {
        count: 1,
        purity_sum: vec![0.0; t_len],
        purity_sq: vec![0.0; t_len],
        entropy_sum: vec![0.0; t_len],
        entropy_sq: vec![0.0; t_len],
        mu2_sum: if cfg.measures.schmidt {
            vec![vec![0.0; plan.mu_len]; t_len]
        } else {
            Vec::new()
        },
    };
    let mut rng = RngStream::new(cfg.seed, replica as u64);
    let mut state = init_basis_state(cfg.n, 0)?;
    for t in 0..t_len {
        if t > 0 {
            step_with_pairs(&mut state, &plan.pairs, &plan.gate, &mut rng)?;
        }
        if cfg.measures.needs_spectrum() {
            let sq = entmeas::schmidt_sq(&state, &plan.cut)?;
            let purity: f64 = sq.iter().map(|v| v * v).sum();
            acc.purity_sum[t] += purity;
            acc.purity_sq[t] += purity * purity;
            let ent = entmeas::entropy_from_sq(&sq);
            acc.entropy_sum[t] += ent;
            acc.entropy_sq[t] += ent * ent;
            if cfg.measures.schmidt {
                for (slot, v) in acc.mu2_sum[t].iter_mut().zip(&sq) {
                    *slot += v;
                }
            }
        } else {
            let purity = entmeas::purity(&state, &plan.cut)?;
            acc.purity_sum[t] += purity;
            acc.purity_sq[t] += purity * purity;
        }
    }
    Ok(acc)
}

fn accumulate(plan: &RunPlan<'_>, lo: usize, hi: usize) -> Result<Accum> {
    if hi - lo == 1 {
        return run_replica(plan, lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (left, right) = rayon::join(|| accumulate(plan, lo, mid), || accumulate(plan, mid, hi));
    Ok(left?.merge(right?))
}

/// Run the full replica ensemble described by `cfg`.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<EnsembleTrace> {
    if cfg.replicas == 0 {
        return Err(Error::Validation("at least one replica required".into()));
    }
    if !cfg.measures.any() {
        return Err(Error::Validation("empty measure set".into()));
    }
    let cut = match &cfg.cut {
        Some(members) => Bipartition::new(cfg.n, members.clone())?,
        None => Bipartition::symmetric(cfg.n)?,
    };
    let small = cut.members().len().min(cfg.n - cut.members().len());
    let plan = RunPlan {
        cfg,
        pairs: cfg.coupling.pairs(cfg.n)?,
        gate: match cfg.gate.fixed_gate() {
            Some(g) => StepGate::Fixed(g.matrix),
            None => StepGate::HaarPerStep,
        },
        cut,
        mu_len: 1usize << small,
    };
    let acc = accumulate(&plan, 0, cfg.replicas)?;

    let rf = cfg.replicas as f64;
    let stats = |sum: &[f64], sq: &[f64]| -> Vec<(f64, f64)> {
        sum.iter()
            .zip(sq)
            .map(|(&s, &s2)| {
                let mean = s / rf;
                let se = if cfg.replicas >= 2 {
                    ((s2 - s * s / rf) / (rf * (rf - 1.0))).max(0.0).sqrt()
                } else {
                    0.0
                };
                (mean, se)
            })
            .collect()
    };
    Ok(EnsembleTrace {
        n: cfg.n,
        replicas: cfg.replicas,
        steps: cfg.steps,
        purity: cfg.measures.purity.then(|| stats(&acc.purity_sum, &acc.purity_sq)),
        entropy: cfg
            .measures
            .entropy
            .then(|| stats(&acc.entropy_sum, &acc.entropy_sq)),
        mu2: cfg.measures.schmidt.then(|| {
            acc.mu2_sum
                .iter()
                .map(|row| row.iter().map(|v| v / rf).collect())
                .collect()
        }),
    })
}
