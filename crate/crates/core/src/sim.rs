//! Deterministic generators for the six simulation protocols, the
//! bias/RMSE/coverage metric evaluator, and a parallel Monte Carlo driver.
//!
//! All randomness flows through counter-based streams keyed by
//! `(seed, replicate, component)`, so results are bitwise identical across
//! runs and thread counts, and adding estimators never perturbs the
//! generated data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{fit_egger, fit_ivw, fit_weighted_median};
use crate::error::{Error, Result};
use crate::model::{Method, SummaryData};
use crate::raps::RobustLoss;
use crate::solve::SolverConfig;
use crate::stats::{mean, median, normal_quantile};
use crate::{aps, ps, raps};

/// Stream domains keep profile draws, replicate draws, and bootstrap draws
/// on disjoint counters.
const DOMAIN_PROFILE: u64 = 1;
const DOMAIN_REPLICATE: u64 = 2;

const COMPONENT_ALPHA: u64 = 0;
const COMPONENT_GAMMA_NOISE: u64 = 1;
const COMPONENT_OUTCOME_NOISE: u64 = 2;
const COMPONENT_SELECTION: u64 = 3;
const COMPONENT_BOOTSTRAP: u64 = 4;

fn stream_rng(seed: u64, domain: u64, counter: u64, component: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(counter * 8 + component);
    rng
}

/// A synthetic sigma/gamma profile standing in for unpublished GWAS
/// standard errors: lognormal standard errors on both sides and normal true
/// effects, rescaled so the average instrument strength
/// `(1/p) sum gamma_j^2 / sx_j^2` equals `target_kappa` exactly.
pub fn make_variance_profile(
    p: usize,
    target_kappa: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    // location/scale chosen to mimic per-allele GWAS summary data in
    // standardized trait units, with the outcome study somewhat larger than
    // the exposure study (smaller standard errors)
    let mut rng_x = stream_rng(seed, DOMAIN_PROFILE, 0, 0);
    let mut rng_y = stream_rng(seed, DOMAIN_PROFILE, 0, 1);
    let mut rng_g = stream_rng(seed, DOMAIN_PROFILE, 0, 2);
    let sigma_x: Vec<f64> = (0..p)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng_x);
            (0.004f64.ln() + 0.2 * z).exp()
        })
        .collect();
    let sigma_y: Vec<f64> = (0..p)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng_y);
            (0.0018f64.ln() + 0.2 * z).exp()
        })
        .collect();
    // double-exponential effect sizes give the long tail of real GWAS hit
    // lists: a few dominant instruments among many modest ones
    let raw: Vec<f64> = (0..p).map(|_| sample_laplace(&mut rng_g)).collect();
    let strength: f64 = raw
        .iter()
        .zip(&sigma_x)
        .map(|(g, sx)| (g / sx) * (g / sx))
        .sum::<f64>()
        / p as f64;
    let scale = (target_kappa / strength).sqrt();
    let gamma = raw.iter().map(|g| g * scale).collect();
    (sigma_x, sigma_y, gamma)
}

/// One of the six generative protocols, fully parameterized.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub setup_id: u8,
    pub p: usize,
    pub beta0: f64,
    /// True marginal SNP-exposure effects (drawn once per study).
    pub gamma: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub seed: u64,
}

impl SimSetup {
    pub fn new(
        setup_id: u8,
        beta0: f64,
        gamma: Vec<f64>,
        sigma_x: Vec<f64>,
        sigma_y: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if !(1..=6).contains(&setup_id) {
            return Err(Error::InvalidSetup(format!(
                "setup_id must be 1..=6, got {setup_id}"
            )));
        }
        let p = gamma.len();
        if p == 0 {
            return Err(Error::InvalidSetup("empty effect vector".into()));
        }
        if sigma_x.len() != p || sigma_y.len() != p {
            return Err(Error::InvalidSetup(
                "sigma vectors must match gamma length".into(),
            ));
        }
        if sigma_x.iter().chain(&sigma_y).any(|s| !crate::stats::positive(*s)) {
            return Err(Error::InvalidSetup("standard errors must be positive".into()));
        }
        let mut setup = SimSetup {
            setup_id,
            p,
            beta0,
            gamma,
            sigma_x,
            sigma_y,
            seed,
        };
        if setup_id == 3 {
            // the contaminated instrument is the strongest one: move
            // argmax |gamma_j|/sx_j to the front
            let strongest = (0..p)
                .max_by(|&a, &b| {
                    let sa = setup.gamma[a].abs() / setup.sigma_x[a];
                    let sb = setup.gamma[b].abs() / setup.sigma_x[b];
                    sa.partial_cmp(&sb).expect("finite strengths")
                })
                .expect("p >= 1");
            setup.gamma.swap(0, strongest);
            setup.sigma_x.swap(0, strongest);
            setup.sigma_y.swap(0, strongest);
        }
        Ok(setup)
    }

    /// Builds a setup on a kappa-calibrated synthetic profile.
    pub fn with_profile(
        setup_id: u8,
        p: usize,
        target_kappa: f64,
        beta0: f64,
        seed: u64,
    ) -> Result<Self> {
        if !crate::stats::positive(target_kappa) {
            return Err(Error::NonPositiveKappa(target_kappa));
        }
        let (sigma_x, sigma_y, gamma) = make_variance_profile(p, target_kappa, seed);
        SimSetup::new(setup_id, beta0, gamma, sigma_x, sigma_y, seed)
    }

    /// Overdispersion scale: zero for the clean setup, otherwise twice the
    /// mean outcome standard error.
    pub fn tau0(&self) -> f64 {
        if self.setup_id == 1 {
            0.0
        } else {
            2.0 * mean(&self.sigma_y)
        }
    }
}

/// The latent quantities behind one generated replicate.
#[derive(Debug, Clone)]
pub struct SimTruth {
    /// Realized direct (pleiotropic) effects.
    pub alpha: Vec<f64>,
    /// True SNP-outcome effects `beta0 * gamma_j + alpha_j`.
    pub gamma_outcome: Vec<f64>,
    pub tau0: f64,
}

fn sample_laplace(rng: &mut ChaCha8Rng) -> f64 {
    // inverse CDF of the unit-rate Laplace distribution; the clamp guards
    // the measure-zero endpoint u = -1/2
    let u: f64 = rng.random::<f64>() - 0.5;
    let inner = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -u.signum() * inner.ln()
}

/// Generates one replicate: draws the direct effects per the setup rule,
/// forms the true outcome effects, and adds independent normal measurement
/// noise to both sides.
pub fn generate(setup: &SimSetup, replicate: u64) -> (SummaryData, SimTruth) {
    let p = setup.p;
    let tau0 = setup.tau0();
    let mut alpha = vec![0.0; p];
    match setup.setup_id {
        1 => {}
        2 | 3 | 6 => {
            let mut rng = stream_rng(setup.seed, DOMAIN_REPLICATE, replicate, COMPONENT_ALPHA);
            for a in alpha.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *a = tau0 * z;
            }
            if setup.setup_id == 3 {
                alpha[0] += 5.0 * tau0;
            }
            if setup.setup_id == 6 {
                // 10% of instruments get a mean-5*tau0 direct effect
                let k = ((0.1 * p as f64).round() as usize).max(1);
                let mut rng_sel =
                    stream_rng(setup.seed, DOMAIN_REPLICATE, replicate, COMPONENT_SELECTION);
                let mut indices: Vec<usize> = (0..p).collect();
                for i in 0..k {
                    let j = i + rng_sel.random_range(0..(p - i) as u64) as usize;
                    indices.swap(i, j);
                }
                for &j in &indices[..k] {
                    alpha[j] += 5.0 * tau0;
                }
            }
        }
        4 => {
            let mut rng = stream_rng(setup.seed, DOMAIN_REPLICATE, replicate, COMPONENT_ALPHA);
            for a in alpha.iter_mut() {
                *a = tau0 * sample_laplace(&mut rng);
            }
        }
        5 => {
            let mean_abs_gamma = mean(&setup.gamma.iter().map(|g| g.abs()).collect::<Vec<_>>());
            let mut rng = stream_rng(setup.seed, DOMAIN_REPLICATE, replicate, COMPONENT_ALPHA);
            for (j, a) in alpha.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *a = setup.gamma[j].abs() / mean_abs_gamma * tau0 * z;
            }
        }
        _ => unreachable!("setup_id validated at construction"),
    }

    let gamma_outcome: Vec<f64> = setup
        .gamma
        .iter()
        .zip(&alpha)
        .map(|(g, a)| setup.beta0 * g + a)
        .collect();

    let mut rng_x = stream_rng(setup.seed, DOMAIN_REPLICATE, replicate, COMPONENT_GAMMA_NOISE);
    let mut rng_y = stream_rng(
        setup.seed,
        DOMAIN_REPLICATE,
        replicate,
        COMPONENT_OUTCOME_NOISE,
    );
    let gamma_hat: Vec<f64> = setup
        .gamma
        .iter()
        .zip(&setup.sigma_x)
        .map(|(g, sx)| {
            let z: f64 = StandardNormal.sample(&mut rng_x);
            g + sx * z
        })
        .collect();
    let gamma_cap_hat: Vec<f64> = gamma_outcome
        .iter()
        .zip(&setup.sigma_y)
        .map(|(gg, sy)| {
            let z: f64 = StandardNormal.sample(&mut rng_y);
            gg + sy * z
        })
        .collect();

    let snp_ids = (0..p).map(|j| format!("snp_{j:05}")).collect();
    let data = SummaryData::new(
        snp_ids,
        gamma_hat,
        setup.sigma_x.clone(),
        gamma_cap_hat,
        setup.sigma_y.clone(),
    )
    .expect("generated data satisfies the invariants");
    (
        data,
        SimTruth {
            alpha,
            gamma_outcome,
            tau0,
        },
    )
}

/// Table-style performance metrics for one method, all relative to the true
/// effect and in percent. Bias uses the mean of the estimates while RMSE is
/// the root of the *median* squared error — these follow different
/// conventions on purpose.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub bias_pct: f64,
    pub rmse_pct: f64,
    pub ci_len_pct: f64,
    pub coverage_pct: f64,
    pub n_reps: usize,
    pub n_failed: usize,
}

/// Everything the Monte Carlo driver needs besides the setup itself.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n_reps: usize,
    pub ci_level: f64,
    pub solver: SolverConfig,
    /// Loss used by the RAPS rows.
    pub raps_loss: RobustLoss,
    /// Bootstrap resamples for the weighted-median standard error.
    pub wmedian_boot: usize,
    /// Worker threads; `None` uses all available cores.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_reps: 1000,
            ci_level: 0.95,
            solver: SolverConfig::default(),
            raps_loss: RobustLoss::tukey_default(),
            wmedian_boot: 1000,
            threads: None,
        }
    }
}

fn fit_one(
    method: Method,
    data: &SummaryData,
    setup: &SimSetup,
    replicate: u64,
    config: &StudyConfig,
) -> Result<(f64, f64)> {
    let fit = match method {
        Method::Ps => ps::fit_ps(data, &config.solver)?,
        Method::Aps => aps::fit_aps(data, &config.solver)?,
        Method::Raps => raps::fit_raps(data, &config.raps_loss, &config.solver)?,
        Method::Ivw => fit_ivw(data)?,
        Method::Egger => fit_egger(data)?.fit,
        Method::WeightedMedian => {
            let mut rng = stream_rng(
                setup.seed,
                DOMAIN_REPLICATE,
                replicate,
                COMPONENT_BOOTSTRAP,
            );
            let boot_seed = rng.random::<u64>();
            fit_weighted_median(data, config.wmedian_boot, boot_seed)?
        }
    };
    Ok((fit.beta_hat, fit.beta_se))
}

/// Canonical table order for reporting.
pub const TABLE_METHOD_ORDER: [Method; 6] = [
    Method::Ivw,
    Method::Egger,
    Method::WeightedMedian,
    Method::Ps,
    Method::Aps,
    Method::Raps,
];

/// Point estimates and standard errors of every requested method across all
/// replicates, in replicate order. `fits[m][r]` is `None` when method `m`
/// failed on replicate `r`.
#[derive(Debug, Clone)]
pub struct StudyFits {
    pub methods: Vec<Method>,
    pub fits: Vec<Vec<Option<(f64, f64)>>>,
}

/// Fits every requested method to `n_reps` generated replicates.
///
/// Replicates run in parallel; per-replicate RNG streams and index-ordered
/// collection make the output independent of the thread count.
pub fn run_study_fits(setup: &SimSetup, methods: &[Method], config: &StudyConfig) -> StudyFits {
    let run = || -> Vec<Vec<Option<(f64, f64)>>> {
        (0..config.n_reps as u64)
            .into_par_iter()
            .map(|rep| {
                let (data, _) = generate(setup, rep);
                methods
                    .iter()
                    .map(|&m| fit_one(m, &data, setup, rep, config).ok())
                    .collect()
            })
            .collect()
    };
    let per_rep: Vec<Vec<Option<(f64, f64)>>> = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    };
    // transpose to method-major order
    let fits = (0..methods.len())
        .map(|mi| per_rep.iter().map(|r| r[mi]).collect())
        .collect();
    StudyFits {
        methods: methods.to_vec(),
        fits,
    }
}

/// Collapses one method's per-replicate fits into a metric row. Failed
/// replicates are excluded from every statistic and counted.
pub fn summarize(
    method: Method,
    fits: &[Option<(f64, f64)>],
    beta0: f64,
    ci_level: f64,
) -> MetricRow {
    let z = normal_quantile(0.5 + ci_level / 2.0);
    let ok: Vec<(f64, f64)> = fits.iter().flatten().copied().collect();
    let n_failed = fits.len() - ok.len();
    let betas: Vec<f64> = ok.iter().map(|f| f.0).collect();
    let sq_err: Vec<f64> = betas.iter().map(|b| (b - beta0) * (b - beta0)).collect();
    let ci_lens: Vec<f64> = ok.iter().map(|f| 2.0 * z * f.1).collect();
    let covered = ok
        .iter()
        .filter(|(b, se)| (b - beta0).abs() <= z * se)
        .count();
    let denom = ok.len().max(1) as f64;
    MetricRow {
        method: method.name().to_string(),
        bias_pct: 100.0 * (mean(&betas) - beta0) / beta0,
        rmse_pct: 100.0 * median(&sq_err).sqrt() / beta0,
        ci_len_pct: 100.0 * median(&ci_lens) / beta0,
        coverage_pct: 100.0 * covered as f64 / denom,
        n_reps: ok.len(),
        n_failed,
    }
}

/// Runs the Monte Carlo study: `n_reps` generated replicates, each fitted
/// by every requested method, aggregated into one metric row per method.
pub fn run_study(setup: &SimSetup, methods: &[Method], config: &StudyConfig) -> Vec<MetricRow> {
    let study = run_study_fits(setup, methods, config);
    study
        .methods
        .iter()
        .zip(&study.fits)
        .map(|(&m, fits)| summarize(m, fits, setup.beta0, config.ci_level))
        .collect()
}
