//! Robust adjusted profile score: robust losses, their normal-expectation
//! constants, the robustified estimating equations, solver, and variance.

use std::collections::HashMap;
use std::sync::Mutex;
use std::sync::OnceLock;

use crate::aps::{self, ApsVariance};
use crate::error::{Error, Result};
use crate::model::{FitResult, Method, SummaryData};
use crate::quad::normal_expectation_even;
use crate::solve::SolverConfig;
use crate::solve2d::ScoreSystem;

/// Loss family applied to standardized residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    L2,
    Huber,
    Tukey,
}

/// Default Huber tuning constant (95% efficiency at the normal).
pub const HUBER_DEFAULT_K: f64 = 1.345;
/// Default Tukey biweight tuning constant (95% efficiency at the normal).
pub const TUKEY_DEFAULT_K: f64 = 4.685;

/// A robust loss with its tuning constant. The constant is ignored for L2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustLoss {
    kind: LossKind,
    k: f64,
}

impl RobustLoss {
    pub fn l2() -> Self {
        RobustLoss {
            kind: LossKind::L2,
            k: 1.0,
        }
    }

    pub fn huber(k: f64) -> Result<Self> {
        if !crate::stats::positive(k) {
            return Err(Error::NonPositiveTuningConstant(k));
        }
        Ok(RobustLoss {
            kind: LossKind::Huber,
            k,
        })
    }

    pub fn tukey(k: f64) -> Result<Self> {
        if !crate::stats::positive(k) {
            return Err(Error::NonPositiveTuningConstant(k));
        }
        Ok(RobustLoss {
            kind: LossKind::Tukey,
            k,
        })
    }

    pub fn huber_default() -> Self {
        Self::huber(HUBER_DEFAULT_K).expect("positive default")
    }

    pub fn tukey_default() -> Self {
        Self::tukey(TUKEY_DEFAULT_K).expect("positive default")
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn tuning_constant(&self) -> f64 {
        self.k
    }

    /// `(rho, rho', rho'')` at `r`.
    ///
    /// Huber: `r^2/2` inside `|r| <= k`, `k(|r| - k/2)` outside.
    /// Tukey: `1 - (1 - (r/k)^2)^3` inside, `1` outside (redescending).
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        match self.kind {
            LossKind::L2 => (0.5 * r * r, r, 1.0),
            LossKind::Huber => {
                let k = self.k;
                if r.abs() <= k {
                    (0.5 * r * r, r, 1.0)
                } else {
                    (k * (r.abs() - 0.5 * k), k * r.signum(), 0.0)
                }
            }
            LossKind::Tukey => {
                let k = self.k;
                if r.abs() <= k {
                    let s = r / k;
                    let q = 1.0 - s * s;
                    (
                        1.0 - q * q * q,
                        6.0 * r * q * q / (k * k),
                        6.0 * q * (1.0 - 5.0 * s * s) / (k * k),
                    )
                } else {
                    (1.0, 0.0, 0.0)
                }
            }
        }
    }

    pub fn rho(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn rho_prime(&self, r: f64) -> f64 {
        self.eval(r).1
    }

    pub fn rho_double_prime(&self, r: f64) -> f64 {
        self.eval(r).2
    }

    /// Third derivative; identically zero almost everywhere for L2 and
    /// Huber, the piecewise cubic for Tukey.
    pub fn rho_triple_prime(&self, r: f64) -> f64 {
        match self.kind {
            LossKind::L2 | LossKind::Huber => 0.0,
            LossKind::Tukey => {
                let k = self.k;
                if r.abs() <= k {
                    let s = r / k;
                    24.0 * s * (5.0 * s * s - 3.0) / (k * k * k)
                } else {
                    0.0
                }
            }
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self.kind {
            LossKind::L2 => vec![],
            LossKind::Huber | LossKind::Tukey => vec![self.k],
        }
    }

    fn cache_key(&self) -> (u8, u64) {
        let tag = match self.kind {
            LossKind::L2 => 0u8,
            LossKind::Huber => 1,
            LossKind::Tukey => 2,
        };
        (tag, self.k.to_bits())
    }
}

/// Normal-expectation constants of a loss: `delta = E[R rho'(R)]`,
/// `c1 = E[rho'(R)^2]`, `c2 = Var(R rho'(R)) / 2`, `c3 = E[R^2 rho''(R)]`
/// for standard normal `R`. All four equal 1 for the quadratic loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

fn constants_cache() -> &'static Mutex<HashMap<(u8, u64), LossConstants>> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, u64), LossConstants>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Computes (and memoizes) the normal-expectation constants of a loss.
///
/// L2 is returned in closed form; Huber and Tukey are integrated by the
/// knot-aware adaptive Gaussian quadrature in [`crate::quad`].
pub fn loss_constants(loss: &RobustLoss) -> Result<LossConstants> {
    if loss.kind == LossKind::L2 {
        return Ok(LossConstants {
            delta: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        });
    }
    let key = loss.cache_key();
    if let Some(hit) = constants_cache().lock().expect("cache lock").get(&key) {
        return Ok(*hit);
    }
    let l = *loss;
    let delta = normal_expectation_even(&|r| r * l.rho_prime(r), &l.knots())?;
    let c1 = normal_expectation_even(&|r| l.rho_prime(r).powi(2), &l.knots())?;
    let second_moment = normal_expectation_even(&|r| (r * l.rho_prime(r)).powi(2), &l.knots())?;
    let c2 = 0.5 * (second_moment - delta * delta);
    let c3 = normal_expectation_even(&|r| r * r * l.rho_double_prime(r), &l.knots())?;
    if !crate::stats::positive(delta) {
        return Err(Error::QuadratureNonConvergence(format!(
            "delta = {delta:.3e} <= 0 for {:?}(k = {})",
            loss.kind, loss.k
        )));
    }
    let constants = LossConstants { delta, c1, c2, c3 };
    constants_cache()
        .lock()
        .expect("cache lock")
        .insert(key, constants);
    Ok(constants)
}

/// The two components of the robust adjusted profile score.
#[derive(Debug, Clone, Copy)]
pub struct RapsScore {
    pub psi1: f64,
    pub psi2: f64,
}

#[inline]
fn residual_parts(
    data: &SummaryData,
    j: usize,
    beta: f64,
    tau2: f64,
) -> (f64, f64, f64, f64, f64) {
    let g = data.gamma_hat()[j];
    let big_g = data.gamma_cap_hat()[j];
    let sx2 = data.sigma_x()[j] * data.sigma_x()[j];
    let sy2 = data.sigma_y()[j] * data.sigma_y()[j];
    let v = sx2 * beta * beta + sy2 + tau2;
    let r = big_g - beta * g;
    // t = r / sqrt(v); u = -dt/dbeta = a / v^{3/2}
    let a = big_g * sx2 * beta + g * (sy2 + tau2);
    (r, a, v, sx2, g)
}

pub(crate) struct RapsSystem<'a> {
    pub data: &'a SummaryData,
    pub loss: RobustLoss,
    pub delta: f64,
}

impl RapsSystem<'_> {
    fn new(data: &SummaryData, loss: RobustLoss) -> Result<RapsSystem<'_>> {
        let delta = loss_constants(&loss)?.delta;
        Ok(RapsSystem { data, loss, delta })
    }
}

impl ScoreSystem for RapsSystem<'_> {
    fn score(&self, beta: f64, tau2: f64) -> (f64, f64) {
        let (mut p1, mut p2) = (0.0, 0.0);
        for j in 0..self.data.len() {
            let (r, a, v, sx2, _) = residual_parts(self.data, j, beta, tau2);
            let sqrt_v = v.sqrt();
            let t = r / sqrt_v;
            let u = a / (v * sqrt_v);
            let rp = self.loss.rho_prime(t);
            p1 += rp * u;
            p2 += sx2 * (t * rp - self.delta) / v;
        }
        (p1, p2)
    }

    fn jacobian(&self, beta: f64, tau2: f64) -> [[f64; 2]; 2] {
        let mut j11 = 0.0;
        let mut j12 = 0.0;
        let mut j21 = 0.0;
        let mut j22 = 0.0;
        for j in 0..self.data.len() {
            let (r, a, v, sx2, g) = residual_parts(self.data, j, beta, tau2);
            let big_g = self.data.gamma_cap_hat()[j];
            let sqrt_v = v.sqrt();
            let t = r / sqrt_v;
            let u = a / (v * sqrt_v);
            let (_, rp, rpp) = self.loss.eval(t);
            // dt/dbeta = -u; dt/dtau2 = -t / (2v)
            // du/dbeta = Ghat*sx2 / v^{3/2} - 3 a sx2 beta / v^{5/2}
            // du/dtau2 = g / v^{3/2} - (3/2) a / v^{5/2}
            let du_db = big_g * sx2 / (v * sqrt_v) - 3.0 * a * sx2 * beta / (v * v * sqrt_v);
            let du_dt = g / (v * sqrt_v) - 1.5 * a / (v * v * sqrt_v);
            j11 += -rpp * u * u + rp * du_db;
            j12 += -rpp * t * u / (2.0 * v) + rp * du_dt;
            let gprime = rp + t * rpp; // d(t rho'(t))/dt
            j21 += sx2 * (-gprime * u / v - (t * rp - self.delta) * 2.0 * sx2 * beta / (v * v));
            j22 += sx2 * (-gprime * t / (2.0 * v * v) - (t * rp - self.delta) / (v * v));
        }
        [[j11, j12], [j21, j22]]
    }

    fn scales(&self, beta: f64, tau2: f64) -> (f64, f64) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for j in 0..self.data.len() {
            let (r, a, v, sx2, _) = residual_parts(self.data, j, beta, tau2);
            let sqrt_v = v.sqrt();
            let t = r / sqrt_v;
            let u = a / (v * sqrt_v);
            let rp = self.loss.rho_prime(t);
            s1 += (rp * u).abs();
            s2 += sx2 * ((t * rp).abs() + self.delta) / v;
        }
        (s1, s2)
    }

    fn informative_at(&self, beta: f64, tau2: f64) -> bool {
        // a genuine solution standardizes most residuals to O(1); when the
        // majority sit past the loss window the score carries no information
        // (for Tukey it is identically zero there)
        let k = self.loss.tuning_constant();
        let window = if self.loss.kind() == LossKind::L2 {
            return true;
        } else {
            k
        };
        let inside = (0..self.data.len())
            .filter(|&j| {
                let (r, _, v, _, _) = residual_parts(self.data, j, beta, tau2);
                (r / v.sqrt()).abs() <= window
            })
            .count();
        2 * inside >= self.data.len()
    }
}

/// Evaluates the robust adjusted profile score
/// `psi1 = sum_j rho'(t_j) u_j`,
/// `psi2 = sum_j sx_j^2 [t_j rho'(t_j) - delta] / v_j`,
/// with `t_j` the standardized residual and `u_j = -dt_j/dbeta`.
pub fn raps_score(beta: f64, tau2: f64, data: &SummaryData, loss: &RobustLoss) -> Result<RapsScore> {
    let sys = RapsSystem::new(data, *loss)?;
    let (psi1, psi2) = sys.score(beta, tau2);
    Ok(RapsScore { psi1, psi2 })
}

/// Covariance of the RAPS estimator: the APS plug-in information matrices
/// rescaled by the loss constants
/// (`c1`, `c2` on the score variance; `delta`, `(delta + c3)/2` on the
/// score derivative) and sandwiched.
pub fn raps_variance(
    beta_hat: f64,
    tau2_hat: f64,
    data: &SummaryData,
    loss: &RobustLoss,
) -> Result<ApsVariance> {
    let constants = loss_constants(loss)?;
    let (v1, v2) = aps::information_matrices(beta_hat, tau2_hat, data);
    let v1r = [
        [constants.c1 * v1[0][0], 0.0],
        [0.0, constants.c2 * v1[1][1]],
    ];
    let v2r = [
        [constants.delta * v2[0][0], constants.delta * v2[0][1]],
        [0.0, 0.5 * (constants.delta + constants.c3) * v2[1][1]],
    ];
    let cov = aps::sandwich(v1r, v2r)?;
    Ok(ApsVariance {
        v1_tilde_hat: v1r,
        v2_tilde_hat: v2r,
        cov_hat: cov,
    })
}

/// Robust-adjusted-profile-score estimate of `(beta, tau2)`.
///
/// Initialization is at the APS solution (PS when APS fails); the
/// multi-start alternation mirrors the APS solver with the robust score.
/// When multi-start finds well-separated roots (beta estimates more than
/// ten combined standard errors apart) the ambiguity is surfaced as an
/// error rather than resolved silently.
pub fn fit_raps(data: &SummaryData, loss: &RobustLoss, config: &SolverConfig) -> Result<FitResult> {
    let sys = RapsSystem::new(data, *loss)?;
    // the adjusted-score solution is the consistent initializer; fall back
    // to the profile score when it cannot be fitted
    let init = match aps::fit_aps(data, config) {
        Ok(fit) => fit.beta_hat,
        Err(_) => aps::ps_init(data, config),
    };
    let fit = aps::fit_two_param(&sys, data, init, config, "RAPS")?;
    let mut report = fit.report;

    // check root separation against combined uncertainty
    if fit.roots.len() > 1 {
        let mut betas: Vec<f64> = fit.roots.iter().map(|r| r.0).collect();
        betas.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
        for w in fit.roots.windows(2) {
            let se_a = raps_variance(w[0].0, w[0].1, data, loss)
                .map(|v| v.beta_se())
                .unwrap_or(0.0);
            let se_b = raps_variance(w[1].0, w[1].1, data, loss)
                .map(|v| v.beta_se())
                .unwrap_or(0.0);
            let combined = (se_a * se_a + se_b * se_b).sqrt();
            if (w[0].0 - w[1].0).abs() > 10.0 * combined {
                return Err(Error::MultipleRootsAmbiguous(betas));
            }
        }
    }

    let variance = raps_variance(fit.beta, fit.tau2, data, loss)?;
    report
        .warnings
        .retain(|w| !w.contains("unreliable at the boundary") || fit.tau2 == 0.0);
    Ok(FitResult {
        method: Method::Raps,
        beta_hat: fit.beta,
        beta_se: variance.beta_se(),
        tau2_hat: Some(fit.tau2),
        tau2_se: Some(variance.tau2_se()),
        n_snps: data.len(),
        solver: report,
        convention: None,
    })
}
