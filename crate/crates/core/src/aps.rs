//! Adjusted profile score for the systematic-pleiotropy model: the
//! two-equation system in (beta, tau2), its solver, and the plug-in
//! sandwich covariance.

use crate::error::{Error, Result};
use crate::model::{FitResult, Method, SolverReport, SummaryData};
use crate::ps;
use crate::solve::SolverConfig;
use crate::solve2d::{self, ScoreSystem};

/// The two components of the adjusted profile score.
#[derive(Debug, Clone, Copy)]
pub struct ApsScore {
    pub psi1: f64,
    pub psi2: f64,
}

/// Evaluates the adjusted profile score:
///
/// `psi1 = sum_j (Ghat_j - b*ghat_j)(Ghat_j sx_j^2 b + ghat_j (sy_j^2 + t2)) / v_j^2`
/// `psi2 = sum_j sx_j^2 [(Ghat_j - b*ghat_j)^2 - v_j] / v_j^2`
///
/// with `v_j = sx_j^2 b^2 + sy_j^2 + t2`. Every `psi2` summand has mean zero
/// at the generating parameters, which is what repairs the inconsistency of
/// the naive profile score under overdispersion.
pub fn aps_score(beta: f64, tau2: f64, data: &SummaryData) -> ApsScore {
    let (mut p1, mut p2) = (0.0, 0.0);
    for j in 0..data.len() {
        let g = data.gamma_hat()[j];
        let big_g = data.gamma_cap_hat()[j];
        let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
        let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
        let v = sx2 * beta * beta + sy2 + tau2;
        let r = big_g - beta * g;
        p1 += r * (big_g * sx2 * beta + g * (sy2 + tau2)) / (v * v);
        p2 += sx2 * (r * r - v) / (v * v);
    }
    ApsScore { psi1: p1, psi2: p2 }
}

/// Analytic Jacobian of the APS system:
/// `[[d psi1/d beta, d psi1/d tau2], [d psi2/d beta, d psi2/d tau2]]`.
pub fn aps_jacobian(beta: f64, tau2: f64, data: &SummaryData) -> [[f64; 2]; 2] {
    let mut j11 = 0.0;
    let mut j12 = 0.0;
    let mut j21 = 0.0;
    let mut j22 = 0.0;
    for j in 0..data.len() {
        let g = data.gamma_hat()[j];
        let big_g = data.gamma_cap_hat()[j];
        let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
        let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
        let v = sx2 * beta * beta + sy2 + tau2;
        let r = big_g - beta * g;
        let a = big_g * sx2 * beta + g * (sy2 + tau2);
        j11 += ((-g * a + r * big_g * sx2) * v - 4.0 * r * a * sx2 * beta) / (v * v * v);
        j12 += r * (g * v - 2.0 * a) / (v * v * v);
        j21 += sx2 * (-2.0 * r * g * v + 2.0 * sx2 * beta * v - 4.0 * sx2 * beta * r * r)
            / (v * v * v);
        j22 += sx2 * (v - 2.0 * r * r) / (v * v * v);
    }
    [[j11, j12], [j21, j22]]
}

pub(crate) struct ApsSystem<'a> {
    pub data: &'a SummaryData,
}

impl ScoreSystem for ApsSystem<'_> {
    fn score(&self, beta: f64, tau2: f64) -> (f64, f64) {
        let s = aps_score(beta, tau2, self.data);
        (s.psi1, s.psi2)
    }

    fn jacobian(&self, beta: f64, tau2: f64) -> [[f64; 2]; 2] {
        aps_jacobian(beta, tau2, self.data)
    }

    fn scales(&self, beta: f64, tau2: f64) -> (f64, f64) {
        let data = self.data;
        let (mut s1, mut s2) = (0.0, 0.0);
        for j in 0..data.len() {
            let g = data.gamma_hat()[j];
            let big_g = data.gamma_cap_hat()[j];
            let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
            let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
            let v = sx2 * beta * beta + sy2 + tau2;
            let r = big_g - beta * g;
            s1 += (r * (big_g * sx2 * beta + g * (sy2 + tau2)) / (v * v)).abs();
            s2 += (sx2 * (r * r - v) / (v * v)).abs() + sx2 / v;
        }
        (s1, s2)
    }
}

/// Plug-in estimates of the two information matrices and the
/// resulting sandwich covariance of `(beta_hat, tau2_hat)`.
#[derive(Debug, Clone, Copy)]
pub struct ApsVariance {
    pub v1_tilde_hat: [[f64; 2]; 2],
    pub v2_tilde_hat: [[f64; 2]; 2],
    /// `V2~^-1 V1~ V2~^-T`
    pub cov_hat: [[f64; 2]; 2],
}

impl ApsVariance {
    pub fn beta_se(&self) -> f64 {
        self.cov_hat[0][0].sqrt()
    }

    pub fn tau2_se(&self) -> f64 {
        self.cov_hat[1][1].sqrt()
    }
}

/// Builds the plug-in information matrices, substituting
/// `ghat_j^2 - sx_j^2` for `gamma_j^2` and `Ghat_j^2 - sy_j^2 - tau2_hat`
/// for `Gamma_j^2`.
pub(crate) fn information_matrices(
    beta_hat: f64,
    tau2_hat: f64,
    data: &SummaryData,
) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let mut v1 = [[0.0; 2]; 2];
    let mut v2 = [[0.0; 2]; 2];
    for j in 0..data.len() {
        let g = data.gamma_hat()[j];
        let big_g = data.gamma_cap_hat()[j];
        let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
        let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
        let v = sx2 * beta_hat * beta_hat + sy2 + tau2_hat;
        let w = 1.0 / (v * v);
        let g2 = g * g - sx2;
        let big_g2 = big_g * big_g - sy2 - tau2_hat;
        v1[0][0] += w * ((g2 + sx2) * (sy2 + tau2_hat) + big_g2 * sx2);
        v1[1][1] += w * 2.0 * sx2 * sx2;
        v2[0][0] += w * (g2 * (sy2 + tau2_hat) + big_g2 * sx2);
        v2[0][1] += w * sx2 * beta_hat;
        v2[1][1] += w * sx2;
    }
    (v1, v2)
}

pub(crate) fn sandwich(v1: [[f64; 2]; 2], v2: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = v2[0][0] * v2[1][1] - v2[0][1] * v2[1][0];
    if det == 0.0 || !det.is_finite() {
        return Err(Error::DegenerateVariance(
            "V2~ information matrix is singular".into(),
        ));
    }
    let inv = [
        [v2[1][1] / det, -v2[0][1] / det],
        [-v2[1][0] / det, v2[0][0] / det],
    ];
    // inv * v1 * inv^T
    let mut tmp = [[0.0; 2]; 2];
    for (i, row) in tmp.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = (0..2).map(|l| inv[i][l] * v1[l][k]).sum();
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for (i, row) in cov.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = (0..2).map(|l| tmp[i][l] * inv[k][l]).sum();
        }
    }
    if !crate::stats::positive(cov[0][0]) || !crate::stats::positive(cov[1][1]) {
        return Err(Error::DegenerateVariance(format!(
            "sandwich covariance has nonpositive diagonal ({:.3e}, {:.3e})",
            cov[0][0], cov[1][1]
        )));
    }
    Ok(cov)
}

/// Plug-in covariance of the APS estimator at `(beta_hat, tau2_hat)`.
pub fn aps_variance(beta_hat: f64, tau2_hat: f64, data: &SummaryData) -> Result<ApsVariance> {
    let (v1, v2) = information_matrices(beta_hat, tau2_hat, data);
    let cov = sandwich(v1, v2)?;
    Ok(ApsVariance {
        v1_tilde_hat: v1,
        v2_tilde_hat: v2,
        cov_hat: cov,
    })
}

pub(crate) struct TwoParamFit {
    pub beta: f64,
    pub tau2: f64,
    /// Every distinct root located by multi-start, `(beta, tau2)`.
    pub roots: Vec<(f64, f64)>,
    pub report: SolverReport,
}

/// Initial beta for the two-parameter solvers: the profile-score estimate,
/// or the strongest Wald ratio when even PS cannot be fitted.
pub(crate) fn ps_init(data: &SummaryData, config: &SolverConfig) -> f64 {
    match ps::fit_ps(data, config) {
        Ok(fit) => fit.beta_hat,
        Err(_) => {
            let mut best = (0.0, 0.0);
            for j in 0..data.len() {
                let strength = data.gamma_hat()[j].abs() / data.sigma_x()[j];
                if strength > best.1 {
                    best = (data.gamma_cap_hat()[j] / data.gamma_hat()[j], strength);
                }
            }
            best.0
        }
    }
}

/// Shared fitting front-end for the APS and RAPS systems: multi-start
/// solve from the supplied initializer, then root selection.
pub(crate) fn fit_two_param<S: ScoreSystem>(
    sys: &S,
    data: &SummaryData,
    init_beta: f64,
    config: &SolverConfig,
    method_name: &'static str,
) -> Result<TwoParamFit> {
    if data.len() < 3 {
        return Err(Error::TooFewSnps {
            method: method_name,
            required: 3,
            actual: data.len(),
        });
    }
    let bracket = ps::search_bracket(data);
    let outcome = solve2d::solve_system(sys, data, init_beta, bracket, config);
    if outcome.roots.is_empty() {
        return Err(Error::NoFiniteRoot);
    }

    let mut warnings = Vec::new();
    if outcome.multiple_tau2_crossings {
        warnings.push("psi2 had multiple sign changes in tau2; kept the crossing nearest 0".into());
    }
    // prefer the smallest score norm; among converged ties, the root closest
    // to the consistent initializer
    let tol = config.score_tol;
    let chosen = outcome
        .roots
        .iter()
        .min_by(|a, b| {
            let ca = (a.norm > tol, (a.beta - init_beta).abs());
            let cb = (b.norm > tol, (b.beta - init_beta).abs());
            ca.partial_cmp(&cb).expect("finite norms")
        })
        .copied()
        .expect("nonempty root set");
    if outcome.roots.len() > 1 {
        warnings.push(format!(
            "{} finite roots found by multi-start; selected beta = {:.6}",
            outcome.roots.len(),
            chosen.beta
        ));
    }
    if chosen.boundary {
        warnings.push("tau2 clamped at boundary".into());
        warnings.push("tau2 standard error is unreliable at the boundary".into());
    }

    Ok(TwoParamFit {
        beta: chosen.beta,
        tau2: chosen.tau2,
        roots: outcome.roots.iter().map(|r| (r.beta, r.tau2)).collect(),
        report: SolverReport {
            converged: chosen.norm <= tol,
            iterations: outcome.iterations,
            final_score_norm: chosen.norm,
            n_roots_found: outcome.roots.len(),
            warnings,
        },
    })
}

/// Adjusted-profile-score estimate of `(beta, tau2)` with plug-in
/// standard errors.
pub fn fit_aps(data: &SummaryData, config: &SolverConfig) -> Result<FitResult> {
    let sys = ApsSystem { data };
    let init = ps_init(data, config);
    let fit = fit_two_param(&sys, data, init, config, "APS")?;
    let variance = aps_variance(fit.beta, fit.tau2, data)?;
    Ok(FitResult {
        method: Method::Aps,
        beta_hat: fit.beta,
        beta_se: variance.beta_se(),
        tau2_hat: Some(fit.tau2),
        tau2_se: Some(variance.tau2_se()),
        n_snps: data.len(),
        solver: fit.report,
        convention: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ps::profile_score;
    use approx::assert_relative_eq;

    fn toy() -> SummaryData {
        SummaryData::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![1.0, 0.8, -1.2, 0.5],
            vec![0.2, 0.25, 0.3, 0.15],
            vec![0.52, 0.38, -0.61, 0.23],
            vec![0.2, 0.22, 0.28, 0.18],
        )
        .unwrap()
    }

    #[test]
    fn psi1_at_zero_tau2_equals_profile_score() {
        let d = toy();
        for &beta in &[-0.7, 0.0, 0.4, 1.9] {
            let aps = aps_score(beta, 0.0, &d);
            assert_eq!(aps.psi1, profile_score(beta, &d));
        }
    }

    #[test]
    fn psi2_direct_evaluation() {
        let d = SummaryData::new(
            vec!["a".into()],
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![1.0],
        )
        .unwrap();
        let s = aps_score(1.0, 0.0, &d);
        assert_relative_eq!(s.psi2, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let d = toy();
        let h = 1e-6;
        for &(beta, tau2) in &[(0.3, 0.0), (-0.8, 0.05), (1.4, 0.3)] {
            let j = aps_jacobian(beta, tau2, &d);
            let sp = |b: f64, t: f64| aps_score(b, t, &d);
            let fd11 = (sp(beta + h, tau2).psi1 - sp(beta - h, tau2).psi1) / (2.0 * h);
            let fd12 = (sp(beta, tau2 + h).psi1 - sp(beta, tau2 - h).psi1) / (2.0 * h);
            let fd21 = (sp(beta + h, tau2).psi2 - sp(beta - h, tau2).psi2) / (2.0 * h);
            let fd22 = (sp(beta, tau2 + h).psi2 - sp(beta, tau2 - h).psi2) / (2.0 * h);
            assert_relative_eq!(j[0][0], fd11, max_relative = 1e-5, epsilon = 1e-8);
            assert_relative_eq!(j[0][1], fd12, max_relative = 1e-5, epsilon = 1e-8);
            assert_relative_eq!(j[1][0], fd21, max_relative = 1e-5, epsilon = 1e-8);
            assert_relative_eq!(j[1][1], fd22, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn variance_matrix_structure() {
        let d = toy();
        let v = aps_variance(0.45, 0.01, &d).unwrap();
        assert_eq!(v.v1_tilde_hat[0][1], 0.0);
        assert_eq!(v.v1_tilde_hat[1][0], 0.0);
        assert_eq!(v.v2_tilde_hat[1][0], 0.0);
        assert!(v.beta_se() > 0.0);
        assert!(v.tau2_se() > 0.0);
    }

    #[test]
    fn variance_reduces_to_ps_at_zero_tau2() {
        let d = toy();
        let beta = 0.45;
        let (v1, v2) = information_matrices(beta, 0.0, &d);
        let psv = crate::ps::ps_variance(beta, &d).unwrap();
        assert_relative_eq!(v1[0][0], psv.v1_hat, epsilon = 1e-12);
        assert_relative_eq!(v2[0][0], psv.v2_hat, epsilon = 1e-12);
    }

    #[test]
    fn fit_requires_three_snps() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into()],
            vec![1.0, 0.9],
            vec![0.1, 0.1],
            vec![0.5, 0.45],
            vec![0.1, 0.1],
        )
        .unwrap();
        assert!(matches!(
            fit_aps(&d, &SolverConfig::default()),
            Err(Error::TooFewSnps { .. })
        ));
    }

    #[test]
    fn fit_converges_and_reports_norm() {
        let d = toy();
        let fit = fit_aps(&d, &SolverConfig::default()).unwrap();
        assert!(fit.solver.converged);
        assert!(fit.solver.final_score_norm <= SolverConfig::default().score_tol);
        assert!(fit.tau2_hat.unwrap() >= 0.0);
        let s = aps_score(fit.beta_hat, fit.tau2_hat.unwrap(), &d);
        // boundary fits only zero psi1
        if !fit
            .solver
            .warnings
            .iter()
            .any(|w| w.contains("boundary"))
        {
            assert!(s.psi2.abs() < 1e-6);
        }
        assert!(s.psi1.abs() < 1e-6);
    }
}
