//! Summary-data representation and shared result types.

use crate::error::{Error, Result};

/// Per-SNP effect estimates and standard errors for exposure and outcome.
///
/// This is the entire observable input of two-sample summary-data MR: for
/// each SNP `j`, the estimated SNP-exposure effect `gamma_hat[j]` with
/// standard error `sigma_x[j]`, and the estimated SNP-outcome effect
/// `gamma_cap_hat[j]` with standard error `sigma_y[j]`. Standard errors are
/// stored as-is (not variances), matching GWAS file conventions; formulas
/// square them on use.
///
/// Immutable after construction; all invariants are checked by [`SummaryData::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryData {
    snp_ids: Vec<String>,
    gamma_hat: Vec<f64>,
    sigma_x: Vec<f64>,
    gamma_cap_hat: Vec<f64>,
    sigma_y: Vec<f64>,
}

impl SummaryData {
    /// Builds and validates a summary dataset.
    pub fn new(
        snp_ids: Vec<String>,
        gamma_hat: Vec<f64>,
        sigma_x: Vec<f64>,
        gamma_cap_hat: Vec<f64>,
        sigma_y: Vec<f64>,
    ) -> Result<Self> {
        let data = SummaryData {
            snp_ids,
            gamma_hat,
            sigma_x,
            gamma_cap_hat,
            sigma_y,
        };
        data.validate()?;
        Ok(data)
    }

    /// Checks all invariants: equal lengths, p >= 1, finite effects,
    /// positive finite standard errors.
    pub fn validate(&self) -> Result<()> {
        let p = self.snp_ids.len();
        if p == 0 {
            return Err(Error::EmptyData);
        }
        for (field, len) in [
            ("gamma_hat", self.gamma_hat.len()),
            ("sigma_x", self.sigma_x.len()),
            ("gamma_cap_hat", self.gamma_cap_hat.len()),
            ("sigma_y", self.sigma_y.len()),
        ] {
            if len != p {
                return Err(Error::LengthMismatch {
                    field,
                    expected: p,
                    found: len,
                });
            }
        }
        for j in 0..p {
            if !self.gamma_hat[j].is_finite() || !self.gamma_cap_hat[j].is_finite() {
                return Err(Error::NonFiniteValue(j));
            }
            if !crate::stats::positive(self.sigma_x[j]) || !crate::stats::positive(self.sigma_y[j]) {
                return Err(Error::NonPositiveStdErr(j));
            }
        }
        Ok(())
    }

    /// Number of SNPs `p`.
    pub fn len(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snp_ids.is_empty()
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    /// SNP-exposure effect estimates.
    pub fn gamma_hat(&self) -> &[f64] {
        &self.gamma_hat
    }

    /// Standard errors of the SNP-exposure effects.
    pub fn sigma_x(&self) -> &[f64] {
        &self.sigma_x
    }

    /// SNP-outcome effect estimates.
    pub fn gamma_cap_hat(&self) -> &[f64] {
        &self.gamma_cap_hat
    }

    /// Standard errors of the SNP-outcome effects.
    pub fn sigma_y(&self) -> &[f64] {
        &self.sigma_y
    }

    /// Recode alleles: for every flipped SNP both effect estimates change
    /// sign, standard errors are untouched.
    pub fn flip_alleles(&self, flips: &[bool]) -> Result<SummaryData> {
        if flips.len() != self.len() {
            return Err(Error::LengthMismatch {
                field: "flips",
                expected: self.len(),
                found: flips.len(),
            });
        }
        let mut out = self.clone();
        for (j, &flip) in flips.iter().enumerate() {
            if flip {
                out.gamma_hat[j] = -out.gamma_hat[j];
                out.gamma_cap_hat[j] = -out.gamma_cap_hat[j];
            }
        }
        Ok(out)
    }

    /// Returns a copy without SNP `j` (used by leave-one-out diagnostics).
    pub fn without_snp(&self, j: usize) -> SummaryData {
        let keep = |v: &[f64]| {
            v.iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, &x)| x)
                .collect()
        };
        SummaryData {
            snp_ids: self
                .snp_ids
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, s)| s.clone())
                .collect(),
            gamma_hat: keep(&self.gamma_hat),
            sigma_x: keep(&self.sigma_x),
            gamma_cap_hat: keep(&self.gamma_cap_hat),
            sigma_y: keep(&self.sigma_y),
        }
    }
}

/// Estimation method attached to a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ps,
    Aps,
    Raps,
    Ivw,
    Egger,
    WeightedMedian,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ps => "PS",
            Method::Aps => "APS",
            Method::Raps => "RAPS",
            Method::Ivw => "IVW",
            Method::Egger => "Egger",
            Method::WeightedMedian => "W.Median",
        }
    }
}

/// Solver metadata attached to every fit.
#[derive(Debug, Clone, Default)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_score_norm: f64,
    pub n_roots_found: usize,
    pub warnings: Vec<String>,
}

/// A fitted causal-effect estimate with its standard error and, for the
/// overdispersed methods, the overdispersion estimate.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: Method,
    pub beta_hat: f64,
    pub beta_se: f64,
    /// Overdispersion estimate; present iff method is APS or RAPS.
    pub tau2_hat: Option<f64>,
    pub tau2_se: Option<f64>,
    pub n_snps: usize,
    pub solver: SolverReport,
    /// Notes the standard-error convention for baseline estimators whose
    /// published implementations differ.
    pub convention: Option<String>,
}

impl FitResult {
    /// Two-sided Wald confidence interval at the given level.
    pub fn wald_ci(&self, level: f64) -> (f64, f64) {
        let z = crate::stats::normal_quantile(0.5 + level / 2.0);
        (self.beta_hat - z * self.beta_se, self.beta_hat + z * self.beta_se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("rs{i}")).collect()
    }

    #[test]
    fn validate_accepts_well_formed_data() {
        let d = SummaryData::new(
            ids(2),
            vec![1.0, -2.0],
            vec![0.1, 0.2],
            vec![0.5, -1.0],
            vec![0.1, 0.1],
        );
        assert!(d.is_ok());
    }

    #[test]
    fn validate_rejects_zero_stderr() {
        let err = SummaryData::new(
            ids(2),
            vec![1.0, -2.0],
            vec![0.1, 0.2],
            vec![0.5, -1.0],
            vec![0.1, 0.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveStdErr(1)));
    }

    #[test]
    fn validate_rejects_length_mismatch() {
        let err = SummaryData::new(
            ids(2),
            vec![1.0, -2.0, 3.0],
            vec![0.1, 0.2],
            vec![0.5, -1.0],
            vec![0.1, 0.1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { field: "gamma_hat", .. }));
    }

    #[test]
    fn validate_rejects_non_finite_effect() {
        let err = SummaryData::new(
            ids(2),
            vec![1.0, f64::NAN],
            vec![0.1, 0.2],
            vec![0.5, -1.0],
            vec![0.1, 0.1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue(1)));
    }

    #[test]
    fn flip_alleles_negates_both_effects() {
        let d = SummaryData::new(
            ids(2),
            vec![1.0, -2.0],
            vec![0.1, 0.2],
            vec![0.5, -1.0],
            vec![0.1, 0.1],
        )
        .unwrap();
        let f = d.flip_alleles(&[false, true]).unwrap();
        assert_eq!(f.gamma_hat(), &[1.0, 2.0]);
        assert_eq!(f.gamma_cap_hat(), &[0.5, 1.0]);
        assert_eq!(f.sigma_x(), d.sigma_x());
        assert_eq!(f.sigma_y(), d.sigma_y());
    }

    #[test]
    fn flip_alleles_identity_and_involution() {
        let d = SummaryData::new(
            ids(3),
            vec![1.0, -2.0, 0.3],
            vec![0.1, 0.2, 0.3],
            vec![0.5, -1.0, 0.2],
            vec![0.1, 0.1, 0.4],
        )
        .unwrap();
        let none = vec![false; 3];
        assert_eq!(d.flip_alleles(&none).unwrap(), d);
        let mask = vec![true, false, true];
        let twice = d
            .flip_alleles(&mask)
            .unwrap()
            .flip_alleles(&mask)
            .unwrap();
        assert_eq!(twice, d);
    }

    #[test]
    fn flip_alleles_rejects_bad_mask() {
        let d = SummaryData::new(ids(1), vec![1.0], vec![0.1], vec![0.5], vec![0.1]).unwrap();
        assert!(d.flip_alleles(&[true, false]).is_err());
    }

    #[test]
    fn flip_commutes_with_validate() {
        // flipping cannot introduce or remove invariant violations
        let d = SummaryData::new(
            ids(2),
            vec![1.0, -2.0],
            vec![0.1, 0.2],
            vec![0.5, -1.0],
            vec![0.1, 0.1],
        )
        .unwrap();
        let f = d.flip_alleles(&[true, true]).unwrap();
        assert!(f.validate().is_ok());
    }
}
