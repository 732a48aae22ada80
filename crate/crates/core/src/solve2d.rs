//! Solver for two-parameter estimating-equation systems in (beta, tau2).
//!
//! Both the adjusted and the robust-adjusted profile scores have trivial
//! diverging solutions at infinity, so everything here works inside finite
//! brackets: an outer bisection solves the second equation in tau2 on
//! [0, tau_max], an inner safeguarded Newton solves the first equation in
//! beta, and a damped two-dimensional Newton with the analytic Jacobian
//! polishes the alternation result.

use crate::error::{Error, Result};
use crate::model::SummaryData;
use crate::solve::{refine_root, scan_sign_changes, SolverConfig};

/// A two-equation score system in (beta, tau2).
pub(crate) trait ScoreSystem {
    fn score(&self, beta: f64, tau2: f64) -> (f64, f64);
    fn jacobian(&self, beta: f64, tau2: f64) -> [[f64; 2]; 2];
    /// Sum of absolute summand magnitudes of each equation; used to put the
    /// convergence tolerance on a relative scale.
    fn scales(&self, beta: f64, tau2: f64) -> (f64, f64);
    /// Distinguishes genuine roots from the degenerate plateaus of
    /// redescending losses, where every residual is past the loss window and
    /// the score vanishes identically.
    fn informative_at(&self, _beta: f64, _tau2: f64) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SystemRoot {
    pub beta: f64,
    pub tau2: f64,
    /// Scale-normalized score norm at the root (psi1 only on the boundary).
    pub norm: f64,
    /// True when tau2 was clamped at zero because psi2 < 0 over the bracket.
    pub boundary: bool,
}

pub(crate) struct SolveOutcome {
    pub roots: Vec<SystemRoot>,
    pub iterations: usize,
    pub multiple_tau2_crossings: bool,
}

pub(crate) fn normalized_norm<S: ScoreSystem>(sys: &S, beta: f64, tau2: f64) -> f64 {
    let (p1, p2) = sys.score(beta, tau2);
    let (s1, s2) = sys.scales(beta, tau2);
    (p1.abs() / (1.0 + s1)).max(p2.abs() / (1.0 + s2))
}

/// Method-of-moments overdispersion start value at a given beta.
pub(crate) fn mom_tau2(data: &SummaryData, beta: f64) -> f64 {
    let p = data.len() as f64;
    let mut acc = 0.0;
    for j in 0..data.len() {
        let r = data.gamma_cap_hat()[j] - beta * data.gamma_hat()[j];
        let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
        let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
        acc += r * r - sx2 * beta * beta - sy2;
    }
    (acc / p).max(0.0)
}

/// Upper end of the tau2 bracket: beyond twice the largest squared residual
/// every psi2 summand is negative for the quadratic loss, and the solver
/// doubles further if the robust score is still positive.
fn tau2_upper(data: &SummaryData, beta: f64) -> f64 {
    let mut max_r2: f64 = 0.0;
    let mut max_v0: f64 = 0.0;
    for j in 0..data.len() {
        let r = data.gamma_cap_hat()[j] - beta * data.gamma_hat()[j];
        let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
        let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
        max_r2 = max_r2.max(r * r);
        max_v0 = max_v0.max(sx2 * beta * beta + sy2);
    }
    2.0 * max_r2 + max_v0
}

struct Tau2Solve {
    tau2: f64,
    boundary: bool,
    evals: usize,
    multiple_crossings: bool,
}

/// Solves psi2(beta, .) = 0 on [0, tau_max]; returns the crossing reached
/// first from tau2 = 0 (the scale continuous with the main branch).
fn solve_tau2<S: ScoreSystem>(
    sys: &S,
    data: &SummaryData,
    beta: f64,
    config: &SolverConfig,
) -> Result<Tau2Solve> {
    let psi2 = |t: f64| sys.score(beta, t).1;
    let mut evals = 1;
    if psi2(0.0) <= 0.0 {
        return Ok(Tau2Solve {
            tau2: 0.0,
            boundary: true,
            evals,
            multiple_crossings: false,
        });
    }
    let mut hi = tau2_upper(data, beta);
    let mut expansions = 0;
    while psi2(hi) >= 0.0 {
        evals += 1;
        hi *= 4.0;
        expansions += 1;
        if expansions > 40 {
            return Err(Error::NoFiniteRoot);
        }
    }
    // quadratically spaced scan resolves roots near zero
    let n_scan = 32;
    let grid = |i: usize| hi * (i as f64 / (n_scan - 1) as f64).powi(2);
    let mut crossings = Vec::new();
    let mut prev = (0.0, psi2(0.0));
    for i in 1..n_scan {
        let t = grid(i);
        let ft = psi2(t);
        evals += 1;
        if prev.1 * ft < 0.0 || ft == 0.0 {
            crossings.push((prev.0, t));
        }
        prev = (t, ft);
    }
    let multiple = crossings.len() > 1;
    let (a, b) = crossings.first().copied().unwrap_or((0.0, hi));
    let (_, s2) = sys.scales(beta, mom_tau2(data, beta));
    let tol = 1e-8 * (1.0 + s2);
    let root = refine_root(psi2, a, b, tol, config.max_iter);
    evals += root.iterations;
    Ok(Tau2Solve {
        tau2: root.x.max(0.0),
        boundary: false,
        evals,
        multiple_crossings: multiple,
    })
}

/// Solves psi1(., tau2) = 0 near beta0: Newton first, bracket expansion as a
/// fallback. Returns None when no root is reachable from this start.
fn solve_beta<S: ScoreSystem>(
    sys: &S,
    beta0: f64,
    tau2: f64,
    beta_cap: f64,
    tol_rel: f64,
    config: &SolverConfig,
) -> Option<(f64, usize)> {
    let f = |b: f64| sys.score(b, tau2).0;
    let mut beta = beta0.clamp(-beta_cap, beta_cap);
    let mut evals = 0;
    let tol = |b: f64| tol_rel * (1.0 + sys.scales(b, tau2).0);
    for _ in 0..12 {
        let fx = f(beta);
        evals += 1;
        if fx.abs() <= tol(beta) {
            return Some((beta, evals));
        }
        let d = sys.jacobian(beta, tau2)[0][0];
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = fx / d;
        let next = (beta - step).clamp(-beta_cap, beta_cap);
        if !next.is_finite() || (next - beta).abs() <= f64::EPSILON * (1.0 + beta.abs()) {
            beta = next;
            break;
        }
        beta = next;
    }
    if f(beta).abs() <= tol(beta) {
        return Some((beta, evals));
    }
    // bracket expansion around the current iterate
    let mut h = 0.05 * (1.0 + beta.abs());
    let f0 = f(beta);
    evals += 1;
    for _ in 0..60 {
        let (lo, hi) = (beta - h, beta + h);
        for (a, b, fa) in [(lo, beta, f(lo)), (beta, hi, f(hi))] {
            evals += 1;
            if fa.is_finite() && fa * f0 < 0.0 {
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                let root = refine_root(f, a, b, tol(beta), config.max_iter);
                return Some((root.x, evals + root.iterations));
            }
        }
        h *= 2.0;
        if beta - h < -4.0 * beta_cap && beta + h > 4.0 * beta_cap {
            break;
        }
    }
    // last resort: full grid scan over the cap interval
    let intervals = scan_sign_changes(f, -beta_cap, beta_cap, config.grid_points);
    evals += config.grid_points;
    let mut best: Option<(f64, usize)> = None;
    for (a, b) in intervals {
        let root = refine_root(f, a, b, tol(beta), config.max_iter);
        evals += root.iterations;
        let better = match best {
            None => true,
            Some((bx, _)) => (root.x - beta0).abs() < (bx - beta0).abs(),
        };
        if better {
            best = Some((root.x, evals));
        }
    }
    best
}

/// Damped Newton on the full system; tau2 is projected onto [0, inf).
fn newton_polish<S: ScoreSystem>(
    sys: &S,
    mut beta: f64,
    mut tau2: f64,
    config: &SolverConfig,
) -> (f64, f64, usize) {
    let mut iters = 0;
    for _ in 0..40 {
        iters += 1;
        let (p1, p2) = sys.score(beta, tau2);
        let j = sys.jacobian(beta, tau2);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let db = (-p1 * j[1][1] + p2 * j[0][1]) / det;
        let dt = (-p2 * j[0][0] + p1 * j[1][0]) / det;
        let norm0 = normalized_norm(sys, beta, tau2);
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1e-4 {
            let nb = beta + lambda * db;
            let nt = (tau2 + lambda * dt).max(0.0);
            if normalized_norm(sys, nb, nt) < norm0 {
                beta = nb;
                tau2 = nt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted || normalized_norm(sys, beta, tau2) <= config.score_tol {
            break;
        }
    }
    (beta, tau2, iters)
}

/// Start points beyond the initializer: quantiles of the per-SNP Wald
/// ratios, which cover every basin the data can support.
fn ratio_quantile_starts(data: &SummaryData, n: usize) -> Vec<f64> {
    let mut ratios: Vec<f64> = (0..data.len())
        .filter(|&j| data.gamma_hat()[j] != 0.0)
        .map(|j| data.gamma_cap_hat()[j] / data.gamma_hat()[j])
        .filter(|r| r.is_finite())
        .collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    if ratios.is_empty() || n == 0 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let q = (i as f64 + 0.5) / n as f64;
            ratios[((q * ratios.len() as f64) as usize).min(ratios.len() - 1)]
        })
        .collect()
}

/// Multi-start solve: alternation plus Newton polish from each start, with
/// duplicate roots merged.
pub(crate) fn solve_system<S: ScoreSystem>(
    sys: &S,
    data: &SummaryData,
    init_beta: f64,
    beta_bracket: f64,
    config: &SolverConfig,
) -> SolveOutcome {
    let mut starts = vec![init_beta];
    starts.extend(ratio_quantile_starts(
        data,
        config.n_starts.saturating_sub(1),
    ));

    let mut roots: Vec<SystemRoot> = Vec::new();
    let mut iterations = 0;
    let mut multiple_tau2 = false;

    'starts: for &start in &starts {
        let mut beta = start;
        let mut tau2 = mom_tau2(data, beta);
        let mut boundary = false;
        let coarse_tol = (config.score_tol * 1e4).min(1e-6);

        for _round in 0..30 {
            let ts = match solve_tau2(sys, data, beta, config) {
                Ok(t) => t,
                Err(_) => continue 'starts,
            };
            iterations += ts.evals;
            multiple_tau2 |= ts.multiple_crossings;
            tau2 = ts.tau2;
            boundary = ts.boundary;
            let Some((nb, evals)) = solve_beta(sys, beta, tau2, beta_bracket, 1e-9, config)
            else {
                continue 'starts;
            };
            iterations += evals;
            beta = nb;
            let reached = if boundary {
                let (p1, _) = sys.score(beta, 0.0);
                let (s1, _) = sys.scales(beta, 0.0);
                p1.abs() / (1.0 + s1) <= coarse_tol
            } else {
                normalized_norm(sys, beta, tau2) <= coarse_tol
            };
            if reached {
                break;
            }
        }

        let norm = if boundary {
            // constrained solution: judge on psi1 alone
            let Some((nb, evals)) =
                solve_beta(sys, beta, 0.0, beta_bracket, config.score_tol, config)
            else {
                continue 'starts;
            };
            iterations += evals;
            beta = nb;
            tau2 = 0.0;
            let (p1, p2) = sys.score(beta, 0.0);
            if p2 > 0.0 {
                // the refined beta re-opened overdispersion; finish interior
                let (nb, nt, its) = newton_polish(sys, beta, mom_tau2(data, beta), config);
                iterations += its;
                beta = nb;
                tau2 = nt;
                boundary = false;
                normalized_norm(sys, beta, tau2)
            } else {
                let (s1, _) = sys.scales(beta, 0.0);
                p1.abs() / (1.0 + s1)
            }
        } else {
            let (nb, nt, its) = newton_polish(sys, beta, tau2, config);
            iterations += its;
            beta = nb;
            tau2 = nt;
            normalized_norm(sys, beta, tau2)
        };

        if !norm.is_finite() || norm > config.score_tol {
            continue;
        }
        if !sys.informative_at(beta, tau2) {
            continue;
        }
        let dup = roots.iter().any(|r| {
            (r.beta - beta).abs() <= 1e-6 * (1.0 + r.beta.abs())
                && (r.tau2 - tau2).abs() <= 1e-6 * (1.0 + r.tau2.abs())
        });
        if !dup {
            roots.push(SystemRoot {
                beta,
                tau2,
                norm,
                boundary,
            });
        }
    }

    SolveOutcome {
        roots,
        iterations,
        multiple_tau2_crossings: multiple_tau2,
    }
}
