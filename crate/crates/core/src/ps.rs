//! Profile likelihood and profile-score estimation for the no-pleiotropy
//! model, with the plug-in sandwich variance.

use crate::error::{Error, Result};
use crate::model::{FitResult, Method, SolverReport, SummaryData};
use crate::solve::{refine_root, scan_sign_changes, SolverConfig};

/// Profile log-likelihood of the causal effect, up to an additive constant:
/// `l(beta) = -1/2 * sum_j (Ghat_j - beta*ghat_j)^2 / (sx_j^2 beta^2 + sy_j^2)`.
pub fn profile_loglik(beta: f64, data: &SummaryData) -> f64 {
    let mut acc = 0.0;
    for j in 0..data.len() {
        let g = data.gamma_hat()[j];
        let big_g = data.gamma_cap_hat()[j];
        let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
        let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
        let r = big_g - beta * g;
        acc += r * r / (sx2 * beta * beta + sy2);
    }
    -0.5 * acc
}

/// Profile score
/// `psi(beta) = sum_j (Ghat_j - beta*ghat_j)(Ghat_j sx_j^2 beta + ghat_j sy_j^2) / (sx_j^2 beta^2 + sy_j^2)^2`.
///
/// This equals the beta-derivative of [`profile_loglik`]; the estimator
/// solves `psi(beta_hat) = 0`.
pub fn profile_score(beta: f64, data: &SummaryData) -> f64 {
    let mut acc = 0.0;
    for j in 0..data.len() {
        let g = data.gamma_hat()[j];
        let big_g = data.gamma_cap_hat()[j];
        let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
        let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
        let v = sx2 * beta * beta + sy2;
        let r = big_g - beta * g;
        acc += r * (big_g * sx2 * beta + g * sy2) / (v * v);
    }
    acc
}

/// Predicted expectation of the IVW estimator under average instrument
/// strength `kappa`: `beta / (1 + 1/kappa)`.
pub fn ivw_bias_prediction(beta: f64, kappa: f64) -> Result<f64> {
    if !crate::stats::positive(kappa) {
        return Err(Error::NonPositiveKappa(kappa));
    }
    Ok(beta / (1.0 + 1.0 / kappa))
}

/// The Wald-pivot ingredients: plug-in estimates of the score variance
/// `V1` and the negative expected score derivative `V2`, with
/// `se = sqrt(V1_hat) / V2_hat`.
#[derive(Debug, Clone, Copy)]
pub struct PsVariance {
    pub v1_hat: f64,
    pub v2_hat: f64,
    pub se: f64,
}

/// The V1/V2 sums as functions of squared effect sizes; shared by the
/// plug-in estimator and by evaluations at the true effects.
pub fn v_formulas(
    beta: f64,
    gamma_sq: &[f64],
    big_gamma_sq: &[f64],
    sigma_x: &[f64],
    sigma_y: &[f64],
) -> (f64, f64) {
    let (mut v1, mut v2) = (0.0, 0.0);
    for j in 0..gamma_sq.len() {
        let sx2 = sigma_x[j] * sigma_x[j];
        let sy2 = sigma_y[j] * sigma_y[j];
        let v = sx2 * beta * beta + sy2;
        let core = gamma_sq[j] * sy2 + big_gamma_sq[j] * sx2;
        v2 += core / (v * v);
        v1 += (core + sx2 * sy2) / (v * v);
    }
    (v1, v2)
}

/// Plug-in variance at `beta_hat`, substituting `ghat_j^2 - sx_j^2` for
/// `gamma_j^2` and `Ghat_j^2 - sy_j^2` for `Gamma_j^2`.
pub fn ps_variance(beta_hat: f64, data: &SummaryData) -> Result<PsVariance> {
    let gamma_sq: Vec<f64> = data
        .gamma_hat()
        .iter()
        .zip(data.sigma_x())
        .map(|(g, sx)| g * g - sx * sx)
        .collect();
    let big_gamma_sq: Vec<f64> = data
        .gamma_cap_hat()
        .iter()
        .zip(data.sigma_y())
        .map(|(g, sy)| g * g - sy * sy)
        .collect();
    let (v1, v2) = v_formulas(
        beta_hat,
        &gamma_sq,
        &big_gamma_sq,
        data.sigma_x(),
        data.sigma_y(),
    );
    if !crate::stats::positive(v2) {
        return Err(Error::DegenerateVariance(format!(
            "V2_hat = {v2:.6e} <= 0 (weak instruments make the plug-in information estimate unusable)"
        )));
    }
    if !crate::stats::positive(v1) {
        return Err(Error::DegenerateVariance(format!("V1_hat = {v1:.6e} <= 0")));
    }
    Ok(PsVariance {
        v1_hat: v1,
        v2_hat: v2,
        se: v1.sqrt() / v2,
    })
}

/// Search bracket for beta: `[-B, B]` with
/// `B = max(10, 10 * max |Ghat_j / ghat_j|)` over SNPs with F-statistic
/// above 4 (falling back to all SNPs with nonzero `ghat_j`).
pub(crate) fn search_bracket(data: &SummaryData) -> f64 {
    let mut max_ratio: f64 = 0.0;
    let mut any_strong = false;
    for j in 0..data.len() {
        let g = data.gamma_hat()[j];
        if g.abs() / data.sigma_x()[j] > 2.0 {
            any_strong = true;
            max_ratio = max_ratio.max((data.gamma_cap_hat()[j] / g).abs());
        }
    }
    if !any_strong {
        for j in 0..data.len() {
            let g = data.gamma_hat()[j];
            if g != 0.0 {
                max_ratio = max_ratio.max((data.gamma_cap_hat()[j] / g).abs());
            }
        }
    }
    (10.0 * max_ratio).max(10.0)
}

pub(crate) struct PsRoots {
    pub roots: Vec<f64>,
    pub iterations: usize,
}

/// All profile-score roots found by grid scan plus refinement, deduplicated.
pub(crate) fn find_score_roots(data: &SummaryData, config: &SolverConfig) -> PsRoots {
    let b = search_bracket(data);
    let tol = config.score_tol * (1.0 + data.len() as f64);
    let intervals = scan_sign_changes(|x| profile_score(x, data), -b, b, config.grid_points);
    let mut roots: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for (a, c) in intervals {
        let r = refine_root(|x| profile_score(x, data), a, c, tol, config.max_iter);
        iterations += r.iterations;
        let dup = roots
            .iter()
            .any(|&x| (x - r.x).abs() <= 1e-8 * (1.0 + x.abs()));
        if !dup {
            roots.push(r.x);
        }
    }
    PsRoots { roots, iterations }
}

/// Maximum-profile-likelihood estimate of the causal effect with the
/// plug-in sandwich standard error.
///
/// All score roots inside the bracket are located; the one maximizing the
/// profile log-likelihood is returned, with the total root count recorded in
/// the solver report.
pub fn fit_ps(data: &SummaryData, config: &SolverConfig) -> Result<FitResult> {
    let found = find_score_roots(data, config);
    if found.roots.is_empty() {
        return Err(Error::NoFiniteRoot);
    }
    let beta_hat = found
        .roots
        .iter()
        .copied()
        .max_by(|a, b| {
            profile_loglik(*a, data)
                .partial_cmp(&profile_loglik(*b, data))
                .expect("finite log-likelihood")
        })
        .expect("nonempty root set");

    let mut warnings = Vec::new();
    if found.roots.len() > 1 {
        warnings.push(format!(
            "profile score has {} roots; selected the likelihood maximizer",
            found.roots.len()
        ));
    }
    let tol = config.score_tol * (1.0 + data.len() as f64);
    let final_score_norm = profile_score(beta_hat, data).abs();
    let converged = final_score_norm <= tol;
    if !converged {
        warnings.push(format!(
            "score at solution is {final_score_norm:.3e}, above tolerance {tol:.3e}"
        ));
    }

    let variance = ps_variance(beta_hat, data)?;
    Ok(FitResult {
        method: Method::Ps,
        beta_hat,
        beta_se: variance.se,
        tau2_hat: None,
        tau2_se: None,
        n_snps: data.len(),
        solver: SolverReport {
            converged,
            iterations: found.iterations,
            final_score_norm,
            n_roots_found: found.roots.len(),
            warnings,
        },
        convention: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(gamma: f64, big_gamma: f64, sx: f64, sy: f64) -> SummaryData {
        SummaryData::new(
            vec!["rs1".into()],
            vec![gamma],
            vec![sx],
            vec![big_gamma],
            vec![sy],
        )
        .unwrap()
    }

    #[test]
    fn loglik_zero_at_exact_ratio() {
        let d = single(1.0, 0.5, 1.0, 1.0);
        assert_eq!(profile_loglik(0.5, &d), 0.0);
    }

    #[test]
    fn loglik_direct_evaluation_at_zero() {
        let d = single(1.0, 0.5, 1.0, 1.0);
        assert_relative_eq!(profile_loglik(0.0, &d), -0.125, epsilon = 1e-15);
    }

    #[test]
    fn score_zero_at_exact_ratio() {
        let d = single(1.0, 0.5, 1.0, 1.0);
        assert_eq!(profile_score(0.5, &d), 0.0);
    }

    #[test]
    fn score_direct_evaluation_at_zero() {
        let d = single(1.0, 0.5, 1.0, 1.0);
        assert_relative_eq!(profile_score(0.0, &d), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn fit_recovers_wald_ratio_for_single_snp() {
        // strong instrument so the plug-in variance is positive
        let d = single(1.0, 0.5, 0.05, 0.05);
        let fit = fit_ps(&d, &SolverConfig::default()).unwrap();
        assert_relative_eq!(fit.beta_hat, 0.5, epsilon = 1e-9);
        assert!(fit.solver.converged);
    }

    #[test]
    fn weak_single_snp_variance_degenerates() {
        // gamma_hat^2 - sigma_x^2 = 0 and Gamma_hat^2 < sigma_y^2
        let d = single(1.0, 0.5, 1.0, 1.0);
        let err = ps_variance(0.5, &d).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance(_)));
    }

    #[test]
    fn variance_direct_evaluation() {
        let d = single(2.0, 1.0, 1.0, 1.0);
        let v = ps_variance(0.5, &d).unwrap();
        assert_relative_eq!(v.v1_hat, 2.56, epsilon = 1e-12);
        assert_relative_eq!(v.v2_hat, 1.92, epsilon = 1e-12);
        assert_relative_eq!(v.se, 1.6 / 1.92, epsilon = 1e-12);
    }

    #[test]
    fn variance_homogeneity() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 0.8, -1.2],
            vec![0.2, 0.25, 0.3],
            vec![0.52, 0.38, -0.61],
            vec![0.2, 0.22, 0.28],
        )
        .unwrap();
        let c = 3.7;
        let v = ps_variance(0.5, &d).unwrap();
        // beta is a ratio of outcome to exposure effects: scaling both sides
        // jointly leaves the estimate and its se unchanged
        let joint = SummaryData::new(
            d.snp_ids().to_vec(),
            d.gamma_hat().iter().map(|x| c * x).collect(),
            d.sigma_x().iter().map(|x| c * x).collect(),
            d.gamma_cap_hat().iter().map(|x| c * x).collect(),
            d.sigma_y().iter().map(|x| c * x).collect(),
        )
        .unwrap();
        let vj = ps_variance(0.5, &joint).unwrap();
        assert_relative_eq!(vj.se, v.se, epsilon = 1e-10);
        // scaling only the outcome side rescales beta and its se by c
        let outcome_only = SummaryData::new(
            d.snp_ids().to_vec(),
            d.gamma_hat().to_vec(),
            d.sigma_x().to_vec(),
            d.gamma_cap_hat().iter().map(|x| c * x).collect(),
            d.sigma_y().iter().map(|x| c * x).collect(),
        )
        .unwrap();
        let vo = ps_variance(c * 0.5, &outcome_only).unwrap();
        assert_relative_eq!(vo.se, c * v.se, epsilon = 1e-10);
    }

    #[test]
    fn ivw_bias_prediction_values() {
        assert_relative_eq!(
            ivw_bias_prediction(0.4, 33.1).unwrap(),
            0.4 / (1.0 + 1.0 / 33.1),
            epsilon = 1e-15
        );
        // kappa = 9.1 gives roughly -9.9% relative bias
        let b = ivw_bias_prediction(0.4, 9.1).unwrap();
        assert_relative_eq!((b - 0.4) / 0.4, -1.0 / 10.1, epsilon = 1e-12);
        // no bias in the strong-instrument limit
        assert_relative_eq!(ivw_bias_prediction(0.4, 1e18).unwrap(), 0.4, epsilon = 1e-12);
        assert!(ivw_bias_prediction(0.4, 0.0).is_err());
    }

    #[test]
    fn score_matches_loglik_derivative() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into()],
            vec![1.1, -0.7],
            vec![0.3, 0.4],
            vec![0.62, -0.33],
            vec![0.25, 0.35],
        )
        .unwrap();
        let h = 1e-5;
        for &beta in &[-1.3, -0.2, 0.0, 0.4, 2.1] {
            let fd = (profile_loglik(beta + h, &d) - profile_loglik(beta - h, &d)) / (2.0 * h);
            let psi = profile_score(beta, &d);
            assert_relative_eq!(psi, fd, max_relative = 1e-6, epsilon = 1e-8);
        }
    }
}
