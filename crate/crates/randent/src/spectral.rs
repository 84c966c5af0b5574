//! Eigenvalue extraction, gap, and degeneracy profiling for chain operators.
//!
//! Dense path: full nonsymmetric eigendecomposition, capacity-capped. Iterative
//! path: block Krylov subspace with Rayleigh-Ritz extraction after deflating
//! the two known unit eigenvectors. The operator images of every basis vector
//! are kept, so Ritz residuals are computed from the true operator action, not
//! from a recurrence.

use faer::linalg::solvers::Eigen;
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::paulichain::LinearChain;
use crate::Result;

/// Default residual tolerance of the iterative solver. Eigenvalue accuracy
/// is far better than the residual for these near-normal operators; the
/// dense cross-checks put it near 1e-12 at this setting.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Magnitudes within this of 1 count as unit eigenvalues.
pub const UNIT_BAND: f64 = 1e-7;
/// Default grouping tolerance for degeneracy detection. Chain entries are
/// exact rationals, so true degeneracies are exact to solver precision.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Iterative solver handles at most this many wanted eigenvalues.
pub const MAX_TOP_K: usize = 12;

// Memory budget for the two stored bases of the iterative solver, in bytes.
const SUBSPACE_BYTES: usize = 2_000_000_000;

/// Spectrum summary: non-unit eigenvalue magnitudes (grouped and raw),
/// the gap when defined, and the directly verified unit multiplicity.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    /// (magnitude, multiplicity) pairs, descending, grouped within `DEGENERACY_TOL`.
    pub eigenvalues: Vec<(f64, usize)>,
    /// Ungrouped non-unit magnitudes, descending.
    pub raw: Vec<f64>,
    /// 1 - largest non-unit magnitude; None when nothing non-unit was resolved.
    pub gap: Option<f64>,
    pub unit_multiplicity: usize,
    pub solver: String,
    pub chain: String,
}

/// Group a descending magnitude list into (representative, multiplicity) runs.
pub fn group_by_tolerance(sorted_desc: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut start = 0;
    for idx in 1..=sorted_desc.len() {
        if idx == sorted_desc.len() || sorted_desc[idx - 1] - sorted_desc[idx] > tol {
            let run = &sorted_desc[start..idx];
            out.push((run.iter().sum::<f64>() / run.len() as f64, run.len()));
            start = idx;
        }
    }
    out
}

fn summarize(
    mut mags: Vec<f64>,
    solver: &str,
    chain: &str,
    expect_all: bool,
) -> Result<SpectrumResult> {
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if let Some(&top) = mags.first() {
        if top > 1.0 + 1e-10 {
            return Err(Error::Structural(format!(
                "eigenvalue magnitude {} exceeds 1; chain is not stochastic",
                top
            )));
        }
    }
    let units = mags.iter().take_while(|&&m| m >= 1.0 - UNIT_BAND).count();
    let raw: Vec<f64> = mags[units..].to_vec();
    let unit_multiplicity = units;
    if expect_all && unit_multiplicity < 1 {
        return Err(Error::Structural("no unit eigenvalue found".into()));
    }
    let gap = if unit_multiplicity == 2 {
        raw.first().map(|&m| 1.0 - m)
    } else {
        None
    };
    Ok(SpectrumResult {
        eigenvalues: group_by_tolerance(&raw, DEGENERACY_TOL),
        raw,
        gap,
        unit_multiplicity,
        solver: solver.into(),
        chain: chain.into(),
    })
}

/// All eigenvalues by dense nonsymmetric eigendecomposition.
pub fn dense_spectrum(op: &dyn LinearChain) -> Result<SpectrumResult> {
    let m = op.dense()?;
    let eigs = m
        .eigenvalues()
        .map_err(|e| Error::Structural(format!("dense eigensolve failed: {:?}", e)))?;
    let mags: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    summarize(mags, "dense", op.mode(), true)
}

/// The gap 1 - |largest non-unit eigenvalue|. Requires the verified unit
/// multiplicity to be exactly 2; anything else signals broken ergodicity or
/// an assembly bug.
pub fn gap(spec: &SpectrumResult) -> Result<f64> {
    if spec.unit_multiplicity != 2 {
        return Err(Error::Structural(format!(
            "unit multiplicity {} (expected exactly 2)",
            spec.unit_multiplicity
        )));
    }
    spec.gap
        .ok_or_else(|| Error::Structural("no non-unit eigenvalue resolved".into()))
}

/// Multiplicities of the first three non-unit eigenvalue groups.
pub fn degeneracy_profile(spec: &SpectrumResult, tol: f64) -> Vec<(f64, usize)> {
    let mut groups = group_by_tolerance(&spec.raw, tol);
    groups.truncate(3);
    groups
}

// Project out the two unit eigenvectors. Both chains are represented so that
// the left and right stationary vectors coincide (r1, with r1[0] = 1), so the
// conditions <r1, x> = 0 and x[0] = 0 kill the unit eigenspace from both sides.
fn deflate(x: &mut [f64], r1: &[f64], r1_norm2: f64) {
    let proj: f64 = x.iter().zip(r1).map(|(a, b)| a * b).sum();
    let a = (proj - x[0]) / (r1_norm2 - 1.0);
    let b = x[0] - a;
    for (v, &r) in x.iter_mut().zip(r1) {
        *v -= a * r;
    }
    x[0] -= b;
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Residual ||M v - lambda v|| / ||v|| for a candidate eigenpair given by its
/// real and (optional) imaginary parts. Used to certify spectrum containment
/// of lifted lumped eigenvectors inside the full chain.
pub fn eigenpair_residual(
    op: &dyn LinearChain,
    vec_re: &[f64],
    vec_im: Option<&[f64]>,
    lambda: C64,
) -> f64 {
    let dim = op.dim();
    let zero = vec![0.0; dim];
    let im = vec_im.unwrap_or(&zero);
    let mut m_re = vec![0.0; dim];
    let mut m_im = vec![0.0; dim];
    op.apply_to(vec_re, &mut m_re);
    if vec_im.is_some() {
        op.apply_to(im, &mut m_im);
    }
    let mut res = 0.0;
    let mut nrm = 0.0;
    for idx in 0..dim {
        let dr = m_re[idx] - (lambda.re * vec_re[idx] - lambda.im * im[idx]);
        let di = m_im[idx] - (lambda.re * im[idx] + lambda.im * vec_re[idx]);
        res += dr * dr + di * di;
        nrm += vec_re[idx] * vec_re[idx] + im[idx] * im[idx];
    }
    (res / nrm).sqrt()
}

struct Subspace {
    basis: Vec<Vec<f64>>,  // orthonormal columns, all deflated
    images: Vec<Vec<f64>>, // images[i] = M basis[i]
    t: Vec<Vec<f64>>,      // t[r][c] = basis[r] . images[c]
}

// y -= cols . coefs, chunked over the state dimension
fn subtract_combination(y: &mut [f64], cols: &[Vec<f64>], coefs: &[f64]) {
    y.par_chunks_mut(8192).enumerate().for_each(|(ci, chunk)| {
        let lo = ci * 8192;
        let len = chunk.len();
        for (col, &c) in cols.iter().zip(coefs) {
            if c != 0.0 {
                for (slot, &v) in chunk.iter_mut().zip(&col[lo..lo + len]) {
                    *slot -= c * v;
                }
            }
        }
    });
}

// out = cols . coefs
fn combine_real(cols: &[Vec<f64>], coefs: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    out.par_chunks_mut(8192).enumerate().for_each(|(ci, chunk)| {
        let lo = ci * 8192;
        let len = chunk.len();
        for (col, &c) in cols.iter().zip(coefs) {
            if c != 0.0 {
                for (slot, &v) in chunk.iter_mut().zip(&col[lo..lo + len]) {
                    *slot += c * v;
                }
            }
        }
    });
    out
}

impl Subspace {
    fn len(&self) -> usize {
        self.basis.len()
    }

    // Orthogonalize v against the basis (two classical Gram-Schmidt passes,
    // batched so the projections parallelize) and return its remaining norm.
    fn orthogonalize(&self, v: &mut [f64]) -> f64 {
        for _ in 0..2 {
            let coefs: Vec<f64> = self.basis.par_iter().map(|q| dot(q, v)).collect();
            subtract_combination(v, &self.basis, &coefs);
        }
        norm2(v)
    }

    fn push(&mut self, op: &dyn LinearChain, v: Vec<f64>, r1: &[f64], r1_norm2: f64) {
        let mut w = vec![0.0; v.len()];
        op.apply_to(&v, &mut w);
        deflate(&mut w, r1, r1_norm2);
        let col: Vec<f64> = self.basis.par_iter().map(|q| dot(q, &w)).collect();
        for (r, c) in col.into_iter().enumerate() {
            self.t[r].push(c);
        }
        let mut row: Vec<f64> = self.images.par_iter().map(|wc| dot(&v, wc)).collect();
        row.push(dot(&v, &w));
        self.t.push(row);
        self.basis.push(v);
        self.images.push(w);
    }

    fn projected(&self) -> Mat<f64> {
        let m = self.len();
        Mat::from_fn(m, m, |r, c| self.t[r][c])
    }

    // x = basis . y for a complex coefficient vector
    fn combine(cols: &[Vec<f64>], y: &[C64], dim: usize) -> (Vec<f64>, Vec<f64>) {
        let re_coefs: Vec<f64> = y.iter().map(|z| z.re).collect();
        let im_coefs: Vec<f64> = y.iter().map(|z| z.im).collect();
        (
            combine_real(cols, &re_coefs, dim),
            combine_real(cols, &im_coefs, dim),
        )
    }

    // Compress the span onto the leading `keep` Ritz directions. Images are
    // combined with the same coefficients, so images[j] stays M basis[j]
    // exactly up to roundoff and no operator applications are spent.
    fn restart(&mut self, values: &[C64], vectors: &Mat<C64>, keep: usize) {
        let m = self.len();
        let dim = self.basis[0].len();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut idx = 0;
        while cols.len() < keep && idx < m {
            cols.push((0..m).map(|r| vectors[(r, idx)].re).collect());
            if values[idx].im.abs() > 1e-12 && cols.len() < keep {
                cols.push((0..m).map(|r| vectors[(r, idx)].im).collect());
            }
            idx += 1;
        }
        // orthonormalize the coefficient columns; conjugate-pair partners
        // produce dependent columns, dropped here by the norm test
        let mut q: Vec<Vec<f64>> = Vec::new();
        for mut c in cols {
            for _ in 0..2 {
                for qq in &q {
                    let d = dot(qq, &c);
                    for (slot, &qv) in c.iter_mut().zip(qq) {
                        *slot -= d * qv;
                    }
                }
            }
            let nrm = norm2(&c);
            if nrm > 1e-10 {
                for s in c.iter_mut() {
                    *s /= nrm;
                }
                q.push(c);
            }
        }
        let new_basis: Vec<Vec<f64>> = q
            .par_iter()
            .map(|coef| combine_real(&self.basis, coef, dim))
            .collect();
        let new_images: Vec<Vec<f64>> = q
            .par_iter()
            .map(|coef| combine_real(&self.images, coef, dim))
            .collect();
        let r = q.len();
        self.t = (0..r)
            .into_par_iter()
            .map(|row| {
                (0..r)
                    .map(|c| dot(&new_basis[row], &new_images[c]))
                    .collect()
            })
            .collect();
        self.basis = new_basis;
        self.images = new_images;
    }
}

struct RitzPair {
    theta: C64,
    residual: f64,
    xre: Vec<f64>,
    xim: Vec<f64>,
}

struct RitzOutcome {
    // all Ritz values, magnitude-descending, with matching eigenvector columns
    values: Vec<C64>,
    vectors: Mat<C64>,
    // leading k pairs with assembled vectors and exact subspace residuals
    top: Vec<RitzPair>,
}

// Ritz extraction on the current subspace; residuals use the stored images,
// so they equal the true operator residuals up to roundoff.
fn ritz_analyze(space: &Subspace, k: usize, dim: usize) -> Result<RitzOutcome> {
    let t = space.projected();
    let eig = Eigen::new_from_real(t.as_ref())
        .map_err(|e| Error::Structural(format!("projected eigensolve failed: {:?}", e)))?;
    let m = space.len();
    let mut order: Vec<usize> = (0..m).collect();
    let s = eig.S().column_vector().iter().cloned().collect::<Vec<C64>>();
    order.sort_by(|&a, &b| s[b].norm().partial_cmp(&s[a].norm()).unwrap());
    let values: Vec<C64> = order.iter().map(|&i| s[i]).collect();
    let vectors = Mat::from_fn(m, m, |r, c| eig.U()[(r, order[c])]);
    let mut top = Vec::with_capacity(k.min(m));
    for idx in 0..k.min(m) {
        let theta = values[idx];
        let y: Vec<C64> = (0..m).map(|r| vectors[(r, idx)]).collect();
        let ynorm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let y: Vec<C64> = y.into_iter().map(|z| z / ynorm).collect();
        let (xre, xim) = Subspace::combine(&space.basis, &y, dim);
        let (wre, wim) = Subspace::combine(&space.images, &y, dim);
        let mut res = 0.0;
        for i in 0..dim {
            let dr = wre[i] - (theta.re * xre[i] - theta.im * xim[i]);
            let di = wim[i] - (theta.re * xim[i] + theta.im * xre[i]);
            res += dr * dr + di * di;
        }
        top.push(RitzPair {
            theta,
            residual: res.sqrt(),
            xre,
            xim,
        });
    }
    Ok(RitzOutcome {
        values,
        vectors,
        top,
    })
}

// Restart budget; each cycle applies a polynomial filter of degree
// (max_dim - keep) / block to every retained direction.
const MAX_CYCLES: usize = 60;

/// The k largest-magnitude non-unit eigenvalues to residual `tol`, by
/// thick-restarted block Krylov iteration on the deflated operator. The two
/// unit eigenvectors are verified by direct application before anything else
/// runs; accepted Ritz pairs are re-verified against fresh operator
/// applications so drift in the stored images cannot fake convergence.
pub fn top_eigenvalues(op: &dyn LinearChain, k: usize, tol: f64) -> Result<SpectrumResult> {
    let dim = op.dim();
    if k == 0 || k > MAX_TOP_K {
        return Err(Error::Validation(format!(
            "top-k must be in 1..={}, got {}",
            MAX_TOP_K, k
        )));
    }
    if dim < 3 || k > dim - 2 {
        return Err(Error::Validation(format!(
            "k={} exceeds the deflated dimension {} of the chain",
            k,
            dim.saturating_sub(2)
        )));
    }
    let r1 = op.unit_r1();
    let r1_norm2: f64 = r1.iter().map(|v| v * v).sum();
    verify_units(op, &r1)?;

    let complement = dim - 2;
    let block = (k + 4).clamp(8, 16).min(complement);
    let mem_cap = SUBSPACE_BYTES / (16 * dim);
    if mem_cap < (block + 2).min(complement) {
        return Err(Error::Capacity(format!(
            "state space of dimension {} leaves no room for the iterative subspace",
            dim
        )));
    }
    let max_dim = (24 * k).clamp(160, 360).min(complement).min(mem_cap);
    let keep = (2 * k).max(block + 4).min(max_dim / 3);

    let mut rng = ChaCha8Rng::seed_from_u64(0x52414e44);
    let mut space = Subspace {
        basis: Vec::new(),
        images: Vec::new(),
        t: Vec::new(),
    };
    let fresh = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        deflate(&mut v, &r1, r1_norm2);
        v
    };

    let mut best_residual = f64::INFINITY;
    let mut cycles = 0;
    loop {
        // grow to the cap, checking for convergence every few blocks; new
        // directions are images of vectors one block back, so every chain
        // carries full power-iteration depth
        let mut saturated = false;
        let mut since_check = 0;
        let mut outcome = None;
        while space.len() < max_dim && !saturated {
            let cand = match space.len().checked_sub(block) {
                Some(idx) => space.images[idx].clone(),
                None => fresh(&mut rng),
            };
            let mut dir = next_direction(&space, cand);
            let mut retries = 0;
            while dir.is_none() && retries < 5 {
                dir = next_direction(&space, fresh(&mut rng));
                retries += 1;
            }
            match dir {
                Some(mut v) => {
                    deflate(&mut v, &r1, r1_norm2);
                    space.push(op, v, &r1, r1_norm2);
                }
                None => saturated = true,
            }
            since_check += 1;
            if since_check >= 4 * block && space.len() >= (2 * k).max(keep + block) {
                since_check = 0;
                let state = ritz_analyze(&space, k, dim)?;
                if let Some(result) =
                    try_accept(op, &state, k, tol, &mut best_residual, cycles)?
                {
                    return Ok(result);
                }
                outcome = Some(state);
            }
        }
        let state = match outcome {
            Some(s) if since_check == 0 => s,
            _ => ritz_analyze(&space, k, dim)?,
        };
        if let Some(result) = try_accept(op, &state, k, tol, &mut best_residual, cycles)? {
            return Ok(result);
        }
        cycles += 1;
        if saturated || cycles >= MAX_CYCLES || keep < block {
            return Err(Error::Convergence {
                message: format!(
                    "top-{} eigenvalues did not reach residual {:.1e} after {} restart cycles (subspace {})",
                    k,
                    tol,
                    cycles,
                    space.len()
                ),
                best_residual,
            });
        }
        space.restart(&state.values, &state.vectors, keep);
    }
}

// Convergence test: subspace residuals of all k wanted pairs under tol, then
// certification against fresh operator applications.
fn try_accept(
    op: &dyn LinearChain,
    state: &RitzOutcome,
    k: usize,
    tol: f64,
    best_residual: &mut f64,
    cycle: usize,
) -> Result<Option<SpectrumResult>> {
    if state.top.len() < k {
        return Ok(None);
    }
    let worst = state.top.iter().map(|p| p.residual).fold(0.0f64, f64::max);
    if std::env::var_os("SPECTRAL_DEBUG").is_some() {
        eprintln!(
            "cycle {} worst {:.3e} values {:?}",
            cycle,
            worst,
            state.top.iter().map(|p| p.theta.norm()).collect::<Vec<_>>()
        );
    }
    *best_residual = (*best_residual).min(worst);
    if worst > tol || !accept(op, &state.top, tol, best_residual) {
        return Ok(None);
    }
    let mags: Vec<f64> = state.top.iter().map(|p| p.theta.norm()).collect();
    let mut result = summarize(mags, "iterative", op.mode(), false)?;
    // deflated spectrum: units were verified directly
    if result.unit_multiplicity != 0 {
        return Err(Error::Structural(
            "deflation leaked a unit eigenvalue into the iterative spectrum".into(),
        ));
    }
    result.unit_multiplicity = 2;
    result.gap = result.raw.first().map(|&m| 1.0 - m);
    Ok(Some(result))
}

// Orthonormalize a candidate against the basis, refusing near-dependent
// vectors: normalizing a remainder that lost eight digits to cancellation
// would amplify non-orthogonal roundoff into the basis and poison every
// later Ritz extraction. A final polish pass cleans what the first rounds
// left behind.
// The cutoff must sit well below the residual tolerance: near convergence the
// useful new directions are exactly residual-sized, and dropping them as
// dependent floors the iteration a decade under the cutoff. Stability for such
// tiny remainders comes from re-orthogonalizing until the norm stops shrinking.
fn next_direction(space: &Subspace, cand: Vec<f64>) -> Option<Vec<f64>> {
    let scale = norm2(&cand);
    if !(scale > 1e-300) {
        return None;
    }
    let mut v = cand;
    let nrm = space.orthogonalize(&mut v);
    if nrm < 1e-12 * scale {
        return None;
    }
    for s in v.iter_mut() {
        *s /= nrm;
    }
    for _ in 0..3 {
        let polish = space.orthogonalize(&mut v);
        if !(polish > 1e-300) {
            return None;
        }
        for s in v.iter_mut() {
            *s /= polish;
        }
        if polish >= 0.5 {
            return Some(v);
        }
    }
    None
}

// Certify Ritz pairs with residuals from fresh operator applications.
fn accept(op: &dyn LinearChain, top: &[RitzPair], tol: f64, best: &mut f64) -> bool {
    let mut worst = 0.0f64;
    for p in top {
        let im = if p.theta.im.abs() > 1e-14 {
            Some(p.xim.as_slice())
        } else {
            None
        };
        worst = worst.max(eigenpair_residual(op, &p.xre, im, p.theta));
    }
    *best = best.min(worst);
    worst <= 10.0 * tol.max(1e-13)
}

// Both unit right eigenvectors must be reproduced by direct application;
// anything else means the chain is mis-assembled or not doubly stochastic.
fn verify_units(op: &dyn LinearChain, r1: &[f64]) -> Result<()> {
    let dim = op.dim();
    let mut out = vec![0.0; dim];
    op.apply_to(r1, &mut out);
    let mut dev = 0.0f64;
    for (a, b) in out.iter().zip(r1) {
        dev = dev.max((a - b).abs());
    }
    let scale = r1.iter().cloned().fold(0.0f64, f64::max);
    if dev > 1e-10 * scale {
        return Err(Error::Structural(format!(
            "stationary eigenvector not preserved (deviation {:.3e})",
            dev
        )));
    }
    let mut e0 = vec![0.0; dim];
    e0[0] = 1.0;
    op.apply_to(&e0, &mut out);
    out[0] -= 1.0;
    let dev0 = out.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    if dev0 > 1e-10 {
        return Err(Error::Structural(format!(
            "identity eigenvector not preserved (deviation {:.3e})",
            dev0
        )));
    }
    Ok(())
}
