//! One-dimensional root finding shared by the score solvers.

/// Tolerances and iteration limits for the score solvers.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Iteration cap for each root refinement and for the two-parameter
    /// alternation loop.
    pub max_iter: usize,
    /// Relative score tolerance. One-dimensional solvers stop at
    /// `|psi| <= score_tol * (1 + p)`; the two-parameter solvers use the
    /// same constant against a per-equation magnitude scale.
    pub score_tol: f64,
    /// Number of grid points scanned for sign changes of the profile score.
    pub grid_points: usize,
    /// Number of starting points for the two-parameter multi-start search.
    pub n_starts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 200,
            score_tol: 1e-10,
            grid_points: 512,
            n_starts: 8,
        }
    }
}

/// A refined root of a scalar function.
#[derive(Debug, Clone, Copy)]
pub struct ScalarRoot {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Scans `[lo, hi]` on a uniform grid and returns the sub-intervals whose
/// endpoints have opposite signs (or hit an exact zero).
pub fn scan_sign_changes<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    points: usize,
) -> Vec<(f64, f64)> {
    let n = points.max(2);
    let mut intervals = Vec::new();
    let step = (hi - lo) / (n - 1) as f64;
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..n {
        let x = lo + step * i as f64;
        let fx = f(x);
        if f_prev == 0.0 {
            intervals.push((x_prev, x_prev));
        } else if f_prev.is_finite() && fx.is_finite() && f_prev * fx < 0.0 {
            intervals.push((x_prev, x));
        }
        x_prev = x;
        f_prev = fx;
    }
    if f_prev == 0.0 {
        intervals.push((x_prev, x_prev));
    }
    intervals
}

/// Refines a bracketed root with a secant step safeguarded by bisection.
///
/// Stops when `|f| <= tol_abs` or the bracket collapses to machine
/// resolution. Assumes `f(a)` and `f(b)` have opposite signs (or one is an
/// exact zero).
pub fn refine_root<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol_abs: f64,
    max_iter: usize,
) -> ScalarRoot {
    if a == b {
        let fx = f(a);
        return ScalarRoot { x: a, fx, iterations: 0 };
    }
    let (mut lo, mut hi) = (a, b);
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return ScalarRoot { x: lo, fx: 0.0, iterations: 0 };
    }
    if fhi == 0.0 {
        return ScalarRoot { x: hi, fx: 0.0, iterations: 0 };
    }
    let mut best = if flo.abs() < fhi.abs() {
        ScalarRoot { x: lo, fx: flo, iterations: 0 }
    } else {
        ScalarRoot { x: hi, fx: fhi, iterations: 0 }
    };
    for it in 1..=max_iter {
        // secant proposal, safeguarded to the interior of the bracket
        let mid = 0.5 * (lo + hi);
        let mut x = if (fhi - flo).abs() > f64::MIN_POSITIVE {
            lo - flo * (hi - lo) / (fhi - flo)
        } else {
            mid
        };
        let width = hi - lo;
        if !x.is_finite() || x <= lo + 0.01 * width || x >= hi - 0.01 * width {
            x = mid;
        }
        let fx = f(x);
        if fx.abs() < best.fx.abs() {
            best = ScalarRoot { x, fx, iterations: it };
        }
        if fx == 0.0 || fx.abs() <= tol_abs {
            return ScalarRoot { x, fx, iterations: it };
        }
        if flo * fx < 0.0 {
            hi = x;
            fhi = fx;
        } else {
            lo = x;
            flo = fx;
        }
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * (1.0 + mid.abs()) {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finds_simple_root() {
        let f = |x: f64| x * x - 2.0;
        let intervals = scan_sign_changes(f, 0.0, 3.0, 64);
        assert_eq!(intervals.len(), 1);
        let (a, b) = intervals[0];
        let root = refine_root(f, a, b, 1e-14, 200);
        assert_relative_eq!(root.x, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn scan_finds_multiple_roots() {
        let f = |x: f64| (x - 1.0) * (x + 1.0) * x;
        let intervals = scan_sign_changes(f, -2.0, 2.0, 101);
        assert_eq!(intervals.len(), 3);
    }

    #[test]
    fn refine_handles_exact_zero_endpoint() {
        let f = |x: f64| x;
        let root = refine_root(f, 0.0, 1.0, 1e-12, 50);
        assert_eq!(root.x, 0.0);
    }
}
