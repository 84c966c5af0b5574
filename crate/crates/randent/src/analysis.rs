//! Curve fitting, canonical-parameter sweeps, and collapse/convergence
//! diagnostics.
//!
//! Fit conventions: the asymptotic purity is always the exact finite-size
//! value, never a fitted parameter. Exponential fits run on the log of the
//! excess purity; the window drops the early transient and every point whose
//! excess is within five standard errors of the floor.

use rayon::prelude::*;
use serde::Serialize;

use crate::entmeas;
use crate::error::Error;
use crate::gatelib::{CanonicalParams, GateSpec};
use crate::paulichain::Coupling;
use crate::protocol::{run_protocol, EnsembleTrace, MeasureSet, ProtocolConfig};
use crate::Result;

/// One fitted parameter with a delta-method standard error.
#[derive(Clone, Debug, Serialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

/// Result of any fitter; `model` is one of kappa, tau, degenerate,
/// gap-linear, gap-log.
#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    /// Inclusive data window actually used: time steps for trace fits,
    /// system sizes for gap-scaling fits.
    pub window: (usize, usize),
    pub points_used: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }
}

// Log-excess series inside the window, keeping points clear of the noise
// floor: excess > max(5*se, 0).
fn log_excess(
    purity: &[(f64, f64)],
    i_inf: f64,
    window: Option<(usize, usize)>,
    t_lo_default: usize,
) -> (Vec<(f64, f64)>, (usize, usize)) {
    let (lo, hi) = window.unwrap_or((t_lo_default, purity.len().saturating_sub(1)));
    let hi = hi.min(purity.len().saturating_sub(1));
    let mut pts = Vec::new();
    for (t, &(mean, se)) in purity.iter().enumerate().take(hi + 1).skip(lo) {
        let excess = mean - i_inf;
        if excess > 5.0 * se && excess > 0.0 {
            pts.push((t as f64, excess.ln()));
        }
    }
    (pts, (lo, hi))
}

struct Ols {
    slope: f64,
    intercept: f64,
    slope_se: f64,
    intercept_se: f64,
    residual_norm: f64,
}

fn ols(pts: &[(f64, f64)]) -> Ols {
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let xbar = sx / m;
    let ybar = sy / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = ybar - slope * xbar;
    let rss: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let dof = (m - 2.0).max(1.0);
    let sigma2 = rss / dof;
    let slope_se = if sxx > 0.0 { (sigma2 / sxx).sqrt() } else { 0.0 };
    let intercept_se = (sigma2 * (1.0 / m + xbar * xbar / sxx.max(1e-300))).sqrt();
    Ols {
        slope,
        intercept,
        slope_se,
        intercept_se,
        residual_norm: rss.sqrt(),
    }
}

fn trace_purity(trace: &EnsembleTrace) -> Result<&Vec<(f64, f64)>> {
    trace
        .purity
        .as_ref()
        .ok_or_else(|| Error::Validation("trace carries no purity data".into()))
}

/// Decay-rate fit: I(t) - I_inf = C exp(-kappa t / n). Slope of the
/// log-excess regression times -n.
pub fn fit_kappa(
    trace: &EnsembleTrace,
    i_inf: f64,
    window: Option<(usize, usize)>,
) -> Result<FitResult> {
    let purity = trace_purity(trace)?;
    let (pts, win) = log_excess(purity, i_inf, window, 3);
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} usable points for the kappa fit (need 4)",
            pts.len()
        )));
    }
    let fit = ols(&pts);
    let n = trace.n as f64;
    Ok(FitResult {
        model: "kappa".into(),
        params: vec![
            FitParam {
                name: "kappa".into(),
                value: -fit.slope * n,
                std_error: fit.slope_se * n,
            },
            FitParam {
                name: "intercept".into(),
                value: fit.intercept,
                std_error: fit.intercept_se,
            },
        ],
        residual_norm: fit.residual_norm,
        window: win,
        points_used: pts.len(),
    })
}

/// Single-exponential time-constant fit: I(t) - I_inf = C exp(-t / tau).
pub fn fit_tau(
    trace: &EnsembleTrace,
    i_inf: f64,
    window: Option<(usize, usize)>,
) -> Result<FitResult> {
    let purity = trace_purity(trace)?;
    let (pts, win) = log_excess(purity, i_inf, window, 3);
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} usable points for the tau fit (need 4)",
            pts.len()
        )));
    }
    let fit = ols(&pts);
    if fit.slope >= 0.0 {
        return Err(Error::Fit(format!(
            "non-decaying trace (log-excess slope {:.3e})",
            fit.slope
        )));
    }
    let tau = -1.0 / fit.slope;
    Ok(FitResult {
        model: "tau".into(),
        params: vec![
            FitParam {
                name: "tau".into(),
                value: tau,
                std_error: fit.slope_se * tau * tau,
            },
            FitParam {
                name: "intercept".into(),
                value: fit.intercept,
                std_error: fit.intercept_se,
            },
        ],
        residual_norm: fit.residual_norm,
        window: win,
        points_used: pts.len(),
    })
}

/// Two-parameter transient fit at fixed tau:
/// I(t) - I_inf = (1 + a exp(-b t/tau)) / (1 + a) * exp(-t/tau).
/// Levenberg-Marquardt on (ln a, ln b) against the log excess, so a and b
/// stay positive. The window starts at t = 1: the transient is the signal.
pub fn fit_degenerate_decay(trace: &EnsembleTrace, i_inf: f64, tau: f64) -> Result<FitResult> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Validation(format!("tau must be positive, got {}", tau)));
    }
    let purity = trace_purity(trace)?;
    let (pts, win) = log_excess(purity, i_inf, None, 1);
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} usable points for the degenerate-decay fit (need 4)",
            pts.len()
        )));
    }
    // residual r_t = y_t - g(t), g = ln(1 + a E) - ln(1 + a) - t/tau, E = exp(-b t/tau)
    let model = |u: f64, v: f64, t: f64| -> (f64, f64, f64) {
        let a = u.exp();
        let b = v.exp();
        let e = (-b * t / tau).exp();
        let g = (1.0 + a * e).ln() - (1.0 + a).ln() - t / tau;
        let dg_du = a * (e / (1.0 + a * e) - 1.0 / (1.0 + a));
        let dg_dv = -b * (t / tau) * a * e / (1.0 + a * e);
        (g, dg_du, dg_dv)
    };
    let cost = |u: f64, v: f64| -> f64 {
        pts.iter()
            .map(|&(t, y)| {
                let (g, _, _) = model(u, v, t);
                (y - g) * (y - g)
            })
            .sum()
    };
    let mut u = 0.0f64;
    let mut v = 0.0f64;
    let mut lambda = 1e-3;
    let mut current = cost(u, v);
    for _ in 0..500 {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for &(t, y) in &pts {
            let (g, du, dv) = model(u, v, t);
            let r = y - g;
            jtj[0][0] += du * du;
            jtj[0][1] += du * dv;
            jtj[1][1] += dv * dv;
            jtr[0] += du * r;
            jtr[1] += dv * r;
        }
        jtj[1][0] = jtj[0][1];
        let a00 = jtj[0][0] * (1.0 + lambda);
        let a11 = jtj[1][1] * (1.0 + lambda);
        let det = a00 * a11 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step_u = (jtr[0] * a11 - jtj[0][1] * jtr[1]) / det;
        let step_v = (a00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let trial = cost(u + step_u, v + step_v);
        if trial < current {
            u += step_u;
            v += step_v;
            let improvement = current - trial;
            current = trial;
            lambda = (lambda / 3.0).max(1e-12);
            if improvement < 1e-15 && step_u.abs() + step_v.abs() < 1e-10 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                return Err(Error::Fit(format!(
                    "degenerate-decay fit stalled at cost {:.3e}",
                    current
                )));
            }
        }
    }
    // parameter errors from the Gauss-Newton covariance at the optimum
    let mut jtj = [[0.0f64; 2]; 2];
    for &(t, _) in &pts {
        let (_, du, dv) = model(u, v, t);
        jtj[0][0] += du * du;
        jtj[0][1] += du * dv;
        jtj[1][1] += dv * dv;
    }
    let sigma2 = current / (pts.len() as f64 - 2.0).max(1.0);
    let det = (jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[0][1]).max(1e-300);
    let se_u = (sigma2 * jtj[1][1] / det).sqrt();
    let se_v = (sigma2 * jtj[0][0] / det).sqrt();
    let a = u.exp();
    let b = v.exp();
    Ok(FitResult {
        model: "degenerate".into(),
        params: vec![
            FitParam {
                name: "a".into(),
                value: a,
                std_error: a * se_u,
            },
            FitParam {
                name: "b".into(),
                value: b,
                std_error: b * se_v,
            },
            FitParam {
                name: "tau".into(),
                value: tau,
                std_error: 0.0,
            },
        ],
        residual_norm: current.sqrt(),
        window: win,
        points_used: pts.len(),
    })
}

/// Gap-scaling model choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GapModel {
    /// 1/gap = (n + d) / c
    Linear,
    /// 1/gap = e * n * ln(n) + f
    Log,
}

/// Fit inverse gaps against system size.
pub fn fit_gap_scaling(points: &[(usize, f64)], model: GapModel) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} gap points (need 3)",
            points.len()
        )));
    }
    for &(n, gap) in points {
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::Validation(format!("invalid gap {} at n={}", gap, n)));
        }
    }
    let n_lo = points.iter().map(|p| p.0).min().unwrap();
    let n_hi = points.iter().map(|p| p.0).max().unwrap();
    let (xs, name): (Vec<f64>, &str) = match model {
        GapModel::Linear => (points.iter().map(|p| p.0 as f64).collect(), "gap-linear"),
        GapModel::Log => (
            points
                .iter()
                .map(|p| {
                    let nf = p.0 as f64;
                    nf * nf.ln()
                })
                .collect(),
            "gap-log",
        ),
    };
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(points)
        .map(|(&x, &(_, gap))| (x, 1.0 / gap))
        .collect();
    let fit = ols(&pts);
    let params = match model {
        GapModel::Linear => {
            if fit.slope <= 0.0 {
                return Err(Error::Fit("inverse gap does not grow with n".into()));
            }
            let c = 1.0 / fit.slope;
            let d = fit.intercept * c;
            let se_c = fit.slope_se * c * c;
            let rel = ((fit.intercept_se / fit.intercept.abs().max(1e-300)).powi(2)
                + (fit.slope_se / fit.slope).powi(2))
            .sqrt();
            vec![
                FitParam {
                    name: "c".into(),
                    value: c,
                    std_error: se_c,
                },
                FitParam {
                    name: "d".into(),
                    value: d,
                    std_error: d.abs() * rel,
                },
            ]
        }
        GapModel::Log => vec![
            FitParam {
                name: "e".into(),
                value: fit.slope,
                std_error: fit.slope_se,
            },
            FitParam {
                name: "f".into(),
                value: fit.intercept,
                std_error: fit.intercept_se,
            },
        ],
    };
    Ok(FitResult {
        model: name.into(),
        params,
        residual_norm: fit.residual_norm,
        window: (n_lo, n_hi),
        points_used: points.len(),
    })
}

/// One evaluated grid point of a canonical-parameter sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub params: CanonicalParams,
    pub kappa: f64,
    pub kappa_se: f64,
}

/// Kappa landscape over the fundamental domain 1 >= ax >= ay >= az >= 0.
#[derive(Clone, Debug, Serialize)]
pub struct SweepGrid {
    pub n: usize,
    pub coupling: Coupling,
    pub step: f64,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
    pub argmax: usize,
}

/// Enumerate the integer-lattice grid over the fundamental domain.
pub fn sweep_grid_points(step: f64) -> Result<Vec<CanonicalParams>> {
    if !(step.is_finite() && step > 0.0 && step <= 1.0) {
        return Err(Error::Validation(format!("grid step {} out of (0,1]", step)));
    }
    let s = (1.0 / step).round() as usize;
    if s == 0 || ((1.0 / step) - s as f64).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "grid step {} must divide 1 evenly",
            step
        )));
    }
    let mut out = Vec::new();
    for ia in 0..=s {
        for iy in 0..=ia {
            for iz in 0..=iy {
                out.push(CanonicalParams {
                    ax: ia as f64 / s as f64,
                    ay: iy as f64 / s as f64,
                    az: iz as f64 / s as f64,
                });
            }
        }
    }
    Ok(out)
}

/// Run the protocol at every grid point and fit kappa. Each point gets the
/// deterministic seed `seed ^ index`, so points are reproducible in isolation.
pub fn sweep_canonical(
    n: usize,
    coupling: Coupling,
    step: f64,
    steps: usize,
    replicas: usize,
    seed: u64,
) -> Result<SweepGrid> {
    let grid = sweep_grid_points(step)?;
    let i_inf = entmeas::asymptotic_purity(n)?;
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &params)| -> Result<SweepPoint> {
            let cfg = ProtocolConfig {
                n,
                gate: GateSpec::Canonical(params),
                coupling,
                steps,
                replicas,
                seed: seed ^ idx as u64,
                measures: MeasureSet::purity_only(),
                cut: None,
            };
            let trace = run_protocol(&cfg)?;
            let fit = fit_kappa(&trace, i_inf, None)?;
            let kappa = fit.param("kappa").unwrap();
            Ok(SweepPoint {
                params,
                kappa: kappa.value,
                kappa_se: kappa.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let argmax = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.kappa.partial_cmp(&b.1.kappa).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok(SweepGrid {
        n,
        coupling,
        step,
        steps,
        replicas,
        seed,
        points,
        argmax,
    })
}

/// One rescaled entropy curve.
#[derive(Clone, Debug, Serialize)]
pub struct CollapseCurve {
    pub label: String,
    /// (t/tau, S_inf - S(t))
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CollapseResult {
    pub curves: Vec<CollapseCurve>,
    /// Max pairwise sup-distance between interpolated curves on `range`.
    pub max_pairwise_distance: f64,
    pub range: (f64, f64),
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    match points.iter().position(|p| p.0 >= x) {
        Some(0) => points[0].1,
        None => points.last().unwrap().1,
        Some(k) => {
            let (x0, y0) = points[k - 1];
            let (x1, y1) = points[k];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// Rescale entropy traces by their decay times and measure how well they
/// collapse onto one curve.
pub fn entropy_collapse(
    inputs: &[(String, Vec<(f64, f64)>, f64)],
    s_inf: f64,
    range: Option<(f64, f64)>,
) -> Result<CollapseResult> {
    let mut curves = Vec::new();
    for (label, series, tau) in inputs {
        if !(tau.is_finite() && *tau > 0.0) {
            return Err(Error::Validation(format!("tau must be positive, got {}", tau)));
        }
        if series.is_empty() {
            return Err(Error::Validation(format!("empty entropy trace '{}'", label)));
        }
        curves.push(CollapseCurve {
            label: label.clone(),
            points: series
                .iter()
                .map(|&(t, s)| (t / tau, s_inf - s))
                .collect(),
        });
    }
    let lo = curves
        .iter()
        .map(|c| c.points.first().unwrap().0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = curves
        .iter()
        .map(|c| c.points.last().unwrap().0)
        .fold(f64::INFINITY, f64::min);
    let (lo, hi) = match range {
        Some((a, b)) => (a.max(lo), b.min(hi)),
        None => (lo, hi),
    };
    let mut max_dist = 0.0f64;
    if curves.len() > 1 && hi > lo {
        let samples = 201;
        for s in 0..samples {
            let x = lo + (hi - lo) * s as f64 / (samples - 1) as f64;
            let vals: Vec<f64> = curves.iter().map(|c| interpolate(&c.points, x)).collect();
            for a in 0..vals.len() {
                for b in a + 1..vals.len() {
                    max_dist = max_dist.max((vals[a] - vals[b]).abs());
                }
            }
        }
    }
    Ok(CollapseResult {
        curves,
        max_pairwise_distance: max_dist,
        range: (lo, hi),
    })
}

/// Distance of the mean squared Schmidt coefficients from the random-state
/// reference spectrum, per time step.
pub fn schmidt_distance(trace: &EnsembleTrace) -> Result<Vec<(usize, f64)>> {
    let mu2 = trace
        .mu2
        .as_ref()
        .ok_or_else(|| Error::Validation("trace carries no Schmidt data".into()))?;
    if trace.n % 2 != 0 {
        return Err(Error::Domain(format!(
            "Schmidt reference needs even n, got {}",
            trace.n
        )));
    }
    let big_n = 1usize << (trace.n / 2);
    let refs: Vec<f64> = (1..=big_n)
        .map(|i| entmeas::random_schmidt_reference(i, big_n).map(|mu| mu * mu))
        .collect::<Result<Vec<_>>>()?;
    Ok(mu2
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let d = row
                .iter()
                .zip(&refs)
                .map(|(m, r)| (m - r).abs())
                .sum::<f64>();
            (t, d)
        })
        .collect())
}
