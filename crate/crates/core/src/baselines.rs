//! Reference estimators used in the comparison studies: inverse-variance
//! weighting, Egger regression, and the weighted median of Wald ratios.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{FitResult, Method, SolverReport, SummaryData};

/// Inverse-variance-weighted estimate: weighted least squares of the
/// outcome effects on the exposure effects through the origin with weights
/// `1/sy_j^2`. The standard error carries a multiplicative overdispersion
/// scale `max(1, Q/(p-1))`.
pub fn fit_ivw(data: &SummaryData) -> Result<FitResult> {
    let p = data.len();
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for j in 0..p {
        let w = 1.0 / (data.sigma_y()[j] * data.sigma_y()[j]);
        sxy += w * data.gamma_cap_hat()[j] * data.gamma_hat()[j];
        sxx += w * data.gamma_hat()[j] * data.gamma_hat()[j];
    }
    if !crate::stats::positive(sxx) {
        return Err(Error::AllWeightsDegenerate);
    }
    let beta = sxy / sxx;
    let mut q = 0.0;
    for j in 0..p {
        let w = 1.0 / (data.sigma_y()[j] * data.sigma_y()[j]);
        let r = data.gamma_cap_hat()[j] - beta * data.gamma_hat()[j];
        q += w * r * r;
    }
    let scale2 = if p > 1 {
        (q / (p - 1) as f64).max(1.0)
    } else {
        1.0
    };
    let se = (scale2 / sxx).sqrt();
    Ok(FitResult {
        method: Method::Ivw,
        beta_hat: beta,
        beta_se: se,
        tau2_hat: None,
        tau2_se: None,
        n_snps: p,
        solver: SolverReport {
            converged: true,
            iterations: 0,
            final_score_norm: 0.0,
            n_roots_found: 1,
            warnings: Vec::new(),
        },
        convention: Some("IVW with multiplicative overdispersion scale max(1, Q/(p-1))".into()),
    })
}

/// Egger regression result: the slope plays the role of the causal
/// estimate and the intercept absorbs directional pleiotropy.
#[derive(Debug, Clone)]
pub struct EggerFit {
    pub fit: FitResult,
    pub intercept: f64,
    pub intercept_se: f64,
}

fn wls_line(
    x: &[f64],
    y: &[f64],
    w: &[f64],
) -> Result<(f64, f64, f64, f64)> {
    let sw: f64 = w.iter().sum();
    let swx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let swy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let swxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let swxy: f64 = w
        .iter()
        .zip(x)
        .zip(y)
        .map(|((w, x), y)| w * x * y)
        .sum();
    let det = sw * swxx - swx * swx;
    if !crate::stats::positive(det) {
        return Err(Error::DegenerateDesign(
            "weighted design has no slope information (constant regressor)".into(),
        ));
    }
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swxx * swy - swx * swxy) / det;
    // (X'WX)^-1 diagonal: intercept then slope
    let var_intercept = swxx / det;
    let var_slope = sw / det;
    Ok((slope, intercept, var_slope, var_intercept))
}

/// Egger regression: weighted least squares of the outcome effects on the
/// exposure effects with an intercept, weights `1/sy_j^2`, performed after
/// orienting every exposure effect to be non-negative (the conventional
/// presentation; recorded in the solver report). The orientation makes the
/// reported estimate stable under allele recoding, but the underlying
/// regression is coding-dependent — see [`egger_slope_unoriented`].
pub fn fit_egger(data: &SummaryData) -> Result<EggerFit> {
    let p = data.len();
    if p < 3 {
        return Err(Error::TooFewSnps {
            method: "Egger",
            required: 3,
            actual: p,
        });
    }
    let flips: Vec<bool> = data.gamma_hat().iter().map(|&g| g < 0.0).collect();
    let n_flipped = flips.iter().filter(|&&f| f).count();
    let oriented = data.flip_alleles(&flips)?;

    let w: Vec<f64> = oriented
        .sigma_y()
        .iter()
        .map(|s| 1.0 / (s * s))
        .collect();
    let (slope, intercept, var_slope, var_intercept) =
        wls_line(oriented.gamma_hat(), oriented.gamma_cap_hat(), &w)?;

    let mut q = 0.0;
    for ((&x, &y), &wj) in oriented.gamma_hat().iter().zip(oriented.gamma_cap_hat()).zip(&w) {
        let r = y - intercept - slope * x;
        q += wj * r * r;
    }
    let scale2 = (q / (p - 2) as f64).max(1.0);

    let mut warnings = Vec::new();
    if n_flipped > 0 {
        warnings.push(format!(
            "oriented {n_flipped} SNPs to non-negative exposure effects"
        ));
    }
    Ok(EggerFit {
        fit: FitResult {
            method: Method::Egger,
            beta_hat: slope,
            beta_se: (scale2 * var_slope).sqrt(),
            tau2_hat: None,
            tau2_se: None,
            n_snps: p,
            solver: SolverReport {
                converged: true,
                iterations: 0,
                final_score_norm: 0.0,
                n_roots_found: 1,
                warnings,
            },
            convention: Some(
                "Egger WLS with intercept, oriented gamma_hat >= 0, scale max(1, Q/(p-2))".into(),
            ),
        },
        intercept,
        intercept_se: (scale2 * var_intercept).sqrt(),
    })
}

/// The unoriented Egger slope. Exposed to demonstrate that the estimator
/// with an intercept depends on the allele coding: flipping a single SNP
/// changes this value, unlike every origin-through estimator in this crate.
pub fn egger_slope_unoriented(data: &SummaryData) -> Result<f64> {
    let w: Vec<f64> = data.sigma_y().iter().map(|s| 1.0 / (s * s)).collect();
    let (slope, _, _, _) = wls_line(data.gamma_hat(), data.gamma_cap_hat(), &w)?;
    Ok(slope)
}

fn weighted_median(ratios_weights: &mut [(f64, f64)]) -> f64 {
    ratios_weights.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite ratios"));
    let total: f64 = ratios_weights.iter().map(|(_, w)| w).sum();
    let mut cum = 0.0;
    let mut prev_frac = f64::NEG_INFINITY;
    let mut prev_ratio = ratios_weights[0].0;
    for &(ratio, w) in ratios_weights.iter() {
        let frac = (cum + 0.5 * w) / total;
        if frac >= 0.5 {
            if prev_frac.is_finite() && frac > prev_frac {
                return prev_ratio + (ratio - prev_ratio) * (0.5 - prev_frac) / (frac - prev_frac);
            }
            return ratio;
        }
        cum += w;
        prev_frac = frac;
        prev_ratio = ratio;
    }
    ratios_weights.last().expect("nonempty").0
}

fn ratios_and_weights(
    gamma_hat: &[f64],
    sigma_y: &[f64],
    gamma_cap_hat: &[f64],
) -> Vec<(f64, f64)> {
    gamma_hat
        .iter()
        .zip(gamma_cap_hat)
        .zip(sigma_y)
        .filter(|((g, _), _)| **g != 0.0)
        .map(|((&g, &big_g), &sy)| (big_g / g, g * g / (sy * sy)))
        .collect()
}

/// Weighted median of the per-SNP Wald ratios with first-order
/// inverse-variance weights `ghat_j^2 / sy_j^2` and linear interpolation at
/// cumulative weight one half. The standard error comes from a parametric
/// bootstrap (`n_boot` resamples of both effect vectors).
///
/// SNPs with a zero exposure effect have no defined ratio and are dropped
/// with a warning.
pub fn fit_weighted_median(data: &SummaryData, n_boot: usize, seed: u64) -> Result<FitResult> {
    let p = data.len();
    if p < 3 {
        return Err(Error::TooFewSnps {
            method: "weighted median",
            required: 3,
            actual: p,
        });
    }
    let mut rw = ratios_and_weights(data.gamma_hat(), data.sigma_y(), data.gamma_cap_hat());
    let n_dropped = p - rw.len();
    if rw.len() < 3 {
        return Err(Error::ZeroGammaHat(n_dropped));
    }
    let beta = weighted_median(&mut rw);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot = Vec::with_capacity(n_boot);
    let mut g_star = vec![0.0; p];
    let mut big_g_star = vec![0.0; p];
    for _ in 0..n_boot {
        for j in 0..p {
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zy: f64 = StandardNormal.sample(&mut rng);
            g_star[j] = data.gamma_hat()[j] + data.sigma_x()[j] * zx;
            big_g_star[j] = data.gamma_cap_hat()[j] + data.sigma_y()[j] * zy;
        }
        let mut rw_star = ratios_and_weights(&g_star, data.sigma_y(), &big_g_star);
        if rw_star.len() >= 2 {
            boot.push(weighted_median(&mut rw_star));
        }
    }
    let mut warnings = Vec::new();
    let se = if boot.len() >= 2 {
        crate::stats::sample_sd(&boot)
    } else {
        warnings.push("bootstrap disabled; standard error unavailable".into());
        f64::NAN
    };
    if n_dropped > 0 {
        warnings.push(format!(
            "dropped {n_dropped} SNPs with zero exposure effect (undefined Wald ratio)"
        ));
    }
    Ok(FitResult {
        method: Method::WeightedMedian,
        beta_hat: beta,
        beta_se: se,
        tau2_hat: None,
        tau2_se: None,
        n_snps: p,
        solver: SolverReport {
            converged: true,
            iterations: n_boot,
            final_score_norm: 0.0,
            n_roots_found: 1,
            warnings,
        },
        convention: Some(format!(
            "weighted median of Wald ratios, weights gamma_hat^2/sigma_y^2, parametric bootstrap se ({n_boot} resamples)"
        )),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn data(g: Vec<f64>, big_g: Vec<f64>, sx: f64, sy: f64) -> SummaryData {
        let p = g.len();
        SummaryData::new(
            (0..p).map(|i| format!("rs{i}")).collect(),
            g,
            vec![sx; p],
            big_g,
            vec![sy; p],
        )
        .unwrap()
    }

    #[test]
    fn ivw_exact_fit() {
        let d = data(vec![1.0, 1.0], vec![2.0, 2.0], 0.1, 0.1);
        let fit = fit_ivw(&d).unwrap();
        assert_relative_eq!(fit.beta_hat, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn ivw_single_snp_equals_wald_ratio() {
        let d = data(vec![2.0], vec![1.0], 0.1, 0.1);
        let fit = fit_ivw(&d).unwrap();
        assert_relative_eq!(fit.beta_hat, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn ivw_rejects_all_zero_gamma() {
        let d = data(vec![0.0, 0.0], vec![1.0, 1.0], 0.1, 0.1);
        assert!(matches!(fit_ivw(&d), Err(Error::AllWeightsDegenerate)));
    }

    #[test]
    fn egger_recovers_affine_data() {
        // positive gamma_hat so the orientation is the identity
        let d = data(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1.5, 2.5, 3.5, 4.5],
            0.1,
            0.1,
        );
        let e = fit_egger(&d).unwrap();
        assert_relative_eq!(e.fit.beta_hat, 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.intercept, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn egger_rejects_constant_design() {
        let d = data(vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0], 0.1, 0.1);
        assert!(matches!(fit_egger(&d), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn egger_oriented_is_flip_stable_but_raw_is_not() {
        let d = data(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1.4, 2.7, 3.4, 4.8],
            0.1,
            0.1,
        );
        let flipped = d.flip_alleles(&[true, false, false, false]).unwrap();
        let a = fit_egger(&d).unwrap();
        let b = fit_egger(&flipped).unwrap();
        assert_relative_eq!(a.fit.beta_hat, b.fit.beta_hat, epsilon = 1e-12);
        let raw_a = egger_slope_unoriented(&d).unwrap();
        let raw_b = egger_slope_unoriented(&flipped).unwrap();
        assert!((raw_a - raw_b).abs() > 1e-3);
    }

    #[test]
    fn weighted_median_middle_ratio() {
        let d = data(vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0], 0.01, 0.1);
        let fit = fit_weighted_median(&d, 50, 7).unwrap();
        assert_relative_eq!(fit.beta_hat, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_median_identical_ratios_tiny_se() {
        let d = data(
            vec![1.0, 2.0, 4.0],
            vec![0.5, 1.0, 2.0],
            1e-7,
            1e-7,
        );
        let fit = fit_weighted_median(&d, 200, 7).unwrap();
        assert_relative_eq!(fit.beta_hat, 0.5, epsilon = 1e-9);
        assert!(fit.beta_se < 1e-6);
    }

    #[test]
    fn weighted_median_drops_zero_gamma() {
        let d = data(
            vec![1.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 2.0, 3.0],
            0.01,
            0.1,
        );
        let fit = fit_weighted_median(&d, 10, 7).unwrap();
        assert!(fit.solver.warnings[0].contains("dropped 1"));
        let d_all_zero = data(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], 0.01, 0.1);
        assert!(matches!(
            fit_weighted_median(&d_all_zero, 10, 7),
            Err(Error::ZeroGammaHat(3))
        ));
    }
}
