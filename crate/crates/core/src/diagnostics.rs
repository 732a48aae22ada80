//! Instrument-strength statistics, standardized residuals, Q-Q data, and
//! leave-one-out influence estimates.

use rayon::prelude::*;

use crate::aps::fit_aps;
use crate::error::{Error, Result};
use crate::model::{FitResult, Method, SummaryData};
use crate::ps::fit_ps;
use crate::raps::{fit_raps, RobustLoss};
use crate::solve::SolverConfig;
use crate::stats::normal_quantile;

/// Profile-score family selector for refit-based diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreMethod {
    Ps,
    Aps,
    Raps(RobustLoss),
}

impl ScoreMethod {
    fn fit(&self, data: &SummaryData, config: &SolverConfig) -> Result<FitResult> {
        match self {
            ScoreMethod::Ps => fit_ps(data, config),
            ScoreMethod::Aps => fit_aps(data, config),
            ScoreMethod::Raps(loss) => fit_raps(data, loss, config),
        }
    }

    fn min_snps_for_loo(&self) -> usize {
        match self {
            ScoreMethod::Ps => 2,
            ScoreMethod::Aps | ScoreMethod::Raps(_) => 4,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ScoreMethod::Ps => "PS",
            ScoreMethod::Aps => "APS",
            ScoreMethod::Raps(_) => "RAPS",
        }
    }
}

/// Average instrument strength: the mean per-SNP F-statistic minus one.
/// Unbiased for the true strength; may come out negative for pure-noise
/// instruments and is reported as-is.
pub fn kappa_hat(data: &SummaryData) -> f64 {
    let p = data.len() as f64;
    let sum: f64 = data
        .gamma_hat()
        .iter()
        .zip(data.sigma_x())
        .map(|(g, sx)| (g / sx) * (g / sx))
        .sum();
    sum / p - 1.0
}

/// Per-SNP instrument strength `ghat_j^2 / sx_j^2`.
pub fn f_stats(data: &SummaryData) -> Vec<f64> {
    data.gamma_hat()
        .iter()
        .zip(data.sigma_x())
        .map(|(g, sx)| (g / sx) * (g / sx))
        .collect()
}

/// Standardized residuals `t_j = (Ghat_j - beta*ghat_j) / sqrt(beta^2 sx_j^2 + sy_j^2 [+ tau2])`,
/// including the overdispersion term for APS/RAPS fits.
///
/// Defined for the origin-through methods; an Egger fit (intercept model)
/// is a method mismatch.
pub fn standardized_residuals(fit: &FitResult, data: &SummaryData) -> Result<Vec<f64>> {
    if fit.method == Method::Egger {
        return Err(Error::MethodMismatch("Egger".into()));
    }
    let tau2 = match fit.method {
        Method::Aps | Method::Raps => fit
            .tau2_hat
            .ok_or_else(|| Error::MethodMismatch(format!("{:?} without tau2", fit.method)))?,
        _ => 0.0,
    };
    let beta = fit.beta_hat;
    Ok((0..data.len())
        .map(|j| {
            let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
            let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
            let r = data.gamma_cap_hat()[j] - beta * data.gamma_hat()[j];
            r / (beta * beta * sx2 + sy2 + tau2).sqrt()
        })
        .collect())
}

/// Q-Q pairs `(Phi^-1((i - 0.5) / p), sorted residual_i)`.
pub fn qq_data(std_residuals: &[f64]) -> Vec<(f64, f64)> {
    let p = std_residuals.len();
    let mut sorted = std_residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    sorted
        .iter()
        .enumerate()
        .map(|(i, &r)| (normal_quantile((i as f64 + 0.5) / p as f64), r))
        .collect()
}

/// Leave-one-out estimates: refits the chosen method `p` times, each time
/// excluding one SNP. Per-SNP failures are returned in place rather than
/// aborting the whole sweep. Refits run in parallel and are keyed by SNP id,
/// so completion order cannot affect the result.
pub fn leave_one_out(
    method: &ScoreMethod,
    data: &SummaryData,
    config: &SolverConfig,
) -> Result<Vec<(String, Result<f64>)>> {
    let required = method.min_snps_for_loo();
    if data.len() < required {
        return Err(Error::TooFewSnps {
            method: method.name(),
            required,
            actual: data.len(),
        });
    }
    Ok((0..data.len())
        .into_par_iter()
        .map(|j| {
            let reduced = data.without_snp(j);
            let fit = method.fit(&reduced, config).map(|f| f.beta_hat);
            (data.snp_ids()[j].clone(), fit)
        })
        .collect())
}

/// The full diagnostics bundle behind the Q-Q and leave-one-out plots.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub kappa_hat: f64,
    pub f_stats: Vec<f64>,
    pub std_residuals: Vec<f64>,
    /// Sorted by theoretical quantile.
    pub qq_pairs: Vec<(f64, f64)>,
    /// One entry per SNP; NaN marks a failed refit (also listed in warnings).
    pub loo_estimates: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    /// Assembles every diagnostic for a fit. `method` must be the score
    /// method that produced `fit`.
    pub fn compute(
        fit: &FitResult,
        method: &ScoreMethod,
        data: &SummaryData,
        config: &SolverConfig,
    ) -> Result<DiagnosticsReport> {
        let kappa = kappa_hat(data);
        let mut warnings = Vec::new();
        if kappa < 0.0 {
            warnings.push(format!(
                "estimated average instrument strength is negative ({kappa:.3}); instruments may be pure noise"
            ));
        }
        let residuals = standardized_residuals(fit, data)?;
        let qq = qq_data(&residuals);
        let mut loo = Vec::with_capacity(data.len());
        for (id, res) in leave_one_out(method, data, config)? {
            match res {
                Ok(beta) => loo.push((id, beta)),
                Err(e) => {
                    warnings.push(format!("leave-one-out refit failed for {id}: {e}"));
                    loo.push((id, f64::NAN));
                }
            }
        }
        Ok(DiagnosticsReport {
            kappa_hat: kappa,
            f_stats: f_stats(data),
            std_residuals: residuals,
            qq_pairs: qq,
            loo_estimates: loo,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kappa_direct_evaluation() {
        // F-statistics 4 and 9
        let d = SummaryData::new(
            vec!["a".into(), "b".into()],
            vec![2.0, 3.0],
            vec![1.0, 1.0],
            vec![1.0, 1.5],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_relative_eq!(kappa_hat(&d), 5.5, epsilon = 1e-14);
    }

    #[test]
    fn kappa_all_zero_gamma_is_minus_one() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 1.5],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_relative_eq!(kappa_hat(&d), -1.0, epsilon = 1e-14);
    }

    #[test]
    fn kappa_unbiased_for_pure_noise_instruments() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        let p = 40;
        let reps = 2000;
        let mut kappas = Vec::with_capacity(reps);
        for _ in 0..reps {
            // gamma_hat drawn as pure noise at scale sigma_x
            let gamma_hat: Vec<f64> = (0..p)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.01 * z
                })
                .collect();
            let d = SummaryData::new(
                (0..p).map(|j| format!("rs{j}")).collect(),
                gamma_hat,
                vec![0.01; p],
                vec![0.0; p],
                vec![0.01; p],
            )
            .unwrap();
            kappas.push(kappa_hat(&d));
        }
        let mean = kappas.iter().sum::<f64>() / reps as f64;
        let se = crate::stats::sample_sd(&kappas) / (reps as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean kappa {mean} vs 3 se {}", 3.0 * se);
    }

    #[test]
    fn kappa_invariant_under_flips() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into()],
            vec![2.0, -3.0],
            vec![1.0, 1.0],
            vec![1.0, 1.5],
            vec![0.5, 0.5],
        )
        .unwrap();
        let f = d.flip_alleles(&[true, false]).unwrap();
        assert_eq!(kappa_hat(&d), kappa_hat(&f));
    }

    #[test]
    fn residuals_zero_on_exact_fit() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0],
            vec![0.05, 0.05],
            vec![0.5, 1.0],
            vec![0.05, 0.05],
        )
        .unwrap();
        let fit = fit_ps(&d, &SolverConfig::default()).unwrap();
        let t = standardized_residuals(&fit, &d).unwrap();
        for v in t {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn egger_fit_is_method_mismatch() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 2.0, 3.0],
            vec![0.1, 0.1, 0.1],
            vec![1.0, 2.1, 2.9],
            vec![0.1, 0.1, 0.1],
        )
        .unwrap();
        let egger = crate::baselines::fit_egger(&d).unwrap();
        assert!(matches!(
            standardized_residuals(&egger.fit, &d),
            Err(Error::MethodMismatch(_))
        ));
    }

    #[test]
    fn qq_single_zero_residual() {
        let pairs = qq_data(&[0.0]);
        assert_eq!(pairs.len(), 1);
        assert_relative_eq!(pairs[0].0, 0.0, epsilon = 1e-12);
        assert_eq!(pairs[0].1, 0.0);
    }

    #[test]
    fn qq_antisymmetric_for_symmetric_residuals() {
        let pairs = qq_data(&[-2.0, -1.0, 1.0, 2.0]);
        let n = pairs.len();
        for i in 0..n {
            assert_relative_eq!(pairs[i].0, -pairs[n - 1 - i].0, epsilon = 1e-12);
            assert_relative_eq!(pairs[i].1, -pairs[n - 1 - i].1, epsilon = 1e-12);
        }
    }

    #[test]
    fn loo_exact_ratio_pair() {
        let d = SummaryData::new(
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0],
            vec![0.05, 0.05],
            vec![0.5, 1.0],
            vec![0.05, 0.05],
        )
        .unwrap();
        let loo = leave_one_out(&ScoreMethod::Ps, &d, &SolverConfig::default()).unwrap();
        for (_, res) in loo {
            assert_relative_eq!(res.unwrap(), 0.5, epsilon = 1e-8);
        }
    }

    #[test]
    fn loo_is_deterministic() {
        let d = SummaryData::new(
            (0..6).map(|i| format!("rs{i}")).collect(),
            vec![1.0, 0.8, -1.2, 0.5, 0.9, -0.7],
            vec![0.2, 0.25, 0.3, 0.15, 0.2, 0.25],
            vec![0.52, 0.38, -0.61, 0.23, 0.44, -0.31],
            vec![0.2, 0.22, 0.28, 0.18, 0.2, 0.22],
        )
        .unwrap();
        let cfg = SolverConfig::default();
        let a = leave_one_out(&ScoreMethod::Aps, &d, &cfg).unwrap();
        let b = leave_one_out(&ScoreMethod::Aps, &d, &cfg).unwrap();
        for ((id_a, ra), (id_b, rb)) in a.iter().zip(&b) {
            assert_eq!(id_a, id_b);
            assert_eq!(ra.as_ref().unwrap(), rb.as_ref().unwrap());
        }
    }
}
