//! Bayesian calibration with delayed-rejection adaptive Metropolis (DRAM).
//!
//! The likelihood is Gaussian in the residuals between observed monthly
//! counts and the NSFD-simulated observable, i.e. a sum-of-squares misfit
//! scaled by an error variance `σ²`. Priors are uniform boxes.

use std::io::{self, Write};

use nalgebra::{SMatrix, SVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

use crate::integrators::{fmt_full, SimError};
use crate::model::{Param, Parameters, State};
use crate::observe::{model_observations, Observable, LIKELIHOOD_STEP};
use crate::stats::{mean, quantile_sorted};

pub const N_PARAMS: usize = 7;

type Vec7 = SVector<f64, N_PARAMS>;
type Mat7 = SMatrix<f64, N_PARAMS, N_PARAMS>;

/// Adaptive Metropolis scale `2.38² / d`.
pub const AM_SCALE: f64 = 2.38 * 2.38 / N_PARAMS as f64;

/// Relative diagonal jitter added to adapted proposal covariances.
const COV_JITTER: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("chain is empty after burn-in")]
    EmptyChain,
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
}

/// Uniform prior box, one `[lower, upper]` interval per parameter in [`Param::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorBounds {
    pub lower: [f64; N_PARAMS],
    pub upper: [f64; N_PARAMS],
}

impl PriorBounds {
    /// Reference 2.5% / 97.5% posterior quantiles.
    pub const CREDIBLE_LOWER: [f64; N_PARAMS] = [0.005, 0.015, 0.035, 0.000001, 0.015, 0.010, 0.009];
    pub const CREDIBLE_UPPER: [f64; N_PARAMS] = [0.012, 0.035, 0.090, 0.00001, 0.040, 0.025, 0.025];

    pub fn new(lower: [f64; N_PARAMS], upper: [f64; N_PARAMS]) -> Result<Self, InferenceError> {
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi) {
                return Err(InferenceError::InvalidConfig(format!(
                    "bounds for {} must satisfy 0 <= lower < upper, got [{lo}, {hi}]",
                    Param::ALL[i]
                )));
            }
        }
        Ok(PriorBounds { lower, upper })
    }

    pub fn contains(&self, p: &Parameters) -> bool {
        p.to_array().iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

impl Default for PriorBounds {
    /// The credible interval widened to `[0.5 × lower, 2 × upper]`.
    fn default() -> Self {
        PriorBounds { lower: Self::CREDIBLE_LOWER.map(|x| 0.5 * x), upper: Self::CREDIBLE_UPPER.map(|x| 2.0 * x) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    /// Observation error variance held fixed.
    FixedSigma(f64),
    /// Inverse-gamma prior `IG(shape, scale)` on `σ²`, Gibbs-updated every iteration.
    SampledSigma { shape: f64, scale: f64 },
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel::SampledSigma { shape: 0.5, scale: 0.5 }
    }
}

/// Sum-of-squares misfit between observed counts and the simulated observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Likelihood {
    pub init: State,
    pub times: Vec<f64>,
    pub observed: Vec<f64>,
    pub observable: Observable,
    pub h: f64,
}

impl Likelihood {
    pub fn new(init: State, times: Vec<f64>, observed: Vec<f64>) -> Result<Self, InferenceError> {
        if times.len() != observed.len() {
            return Err(InferenceError::InvalidConfig(format!(
                "{} observation times but {} observations",
                times.len(),
                observed.len()
            )));
        }
        if observed.is_empty() {
            return Err(InferenceError::InvalidConfig("no observations".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
            return Err(InferenceError::InvalidConfig(
                "observation times must be nonnegative and strictly increasing".into(),
            ));
        }
        Ok(Likelihood { init, times, observed, observable: Observable::Prevalence, h: LIKELIHOOD_STEP })
    }

    pub fn with_observable(mut self, observable: Observable) -> Self {
        self.observable = observable;
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn predict(&self, params: &Parameters) -> Result<Vec<f64>, SimError> {
        model_observations(&self.init, params, &self.times, self.observable, self.h)
    }

    pub fn sum_of_squares(&self, params: &Parameters) -> Result<f64, SimError> {
        let predicted = self.predict(params)?;
        Ok(self.observed.iter().zip(&predicted).map(|(o, m)| (o - m).powi(2)).sum())
    }
}

/// `Σ_k (obs_k - V(t_k; params))²` for a prevalence fit at the default step.
pub fn sum_of_squares(
    params: &Parameters,
    init: &State,
    times: &[f64],
    observed: &[f64],
) -> Result<f64, InferenceError> {
    Ok(Likelihood::new(*init, times.to_vec(), observed.to_vec())?.sum_of_squares(params)?)
}

/// Gaussian log-likelihood from a precomputed misfit.
fn gaussian_log_likelihood(sse: f64, sigma2: f64, m: usize) -> f64 {
    -sse / (2.0 * sigma2) - 0.5 * m as f64 * sigma2.ln()
}

/// `-SSE/(2σ²) - (m/2) ln σ²` inside the prior box, `-∞` outside or when the
/// simulation fails.
pub fn log_posterior(params: &Parameters, sigma2: f64, likelihood: &Likelihood, bounds: &PriorBounds) -> f64 {
    if !bounds.contains(params) {
        return f64::NEG_INFINITY;
    }
    match likelihood.sum_of_squares(params) {
        Ok(sse) => gaussian_log_likelihood(sse, sigma2, likelihood.len()),
        Err(_) => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    /// Proposal covariance is re-estimated every `adapt_interval` iterations.
    pub adapt_interval: usize,
    pub adapt: bool,
    /// 1 = plain adaptive Metropolis, 2 = one delayed-rejection retry.
    pub dr_stages: u8,
    /// Second-stage proposal standard deviations are divided by this factor.
    pub dr_scale: f64,
    pub init_params: Parameters,
    pub init_state: State,
    pub obs_times: Vec<f64>,
    pub seed: u64,
    pub error_model: ErrorModel,
    pub observable: Observable,
    pub h: f64,
    /// Initial proposal standard deviations; defaults to 5% of the starting point.
    pub initial_proposal_sd: Option<[f64; N_PARAMS]>,
    /// Keep a log of first-stage accept/reject decisions.
    pub record_decisions: bool,
}

impl FitConfig {
    pub fn new(init_params: Parameters, init_state: State, obs_times: Vec<f64>) -> Self {
        FitConfig {
            iterations: 10_000,
            adapt_interval: 100,
            adapt: true,
            dr_stages: 2,
            dr_scale: 5.0,
            init_params,
            init_state,
            obs_times,
            seed: 0,
            error_model: ErrorModel::default(),
            observable: Observable::Prevalence,
            h: LIKELIHOOD_STEP,
            initial_proposal_sd: None,
            record_decisions: false,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |msg: String| Err(InferenceError::InvalidConfig(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.adapt_interval == 0 {
            return bad("adapt_interval must be at least 1".into());
        }
        if !matches!(self.dr_stages, 1 | 2) {
            return bad(format!("dr_stages must be 1 or 2, got {}", self.dr_stages));
        }
        if !(self.dr_scale.is_finite() && self.dr_scale > 1.0) {
            return bad(format!("dr_scale must exceed 1, got {}", self.dr_scale));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("likelihood step must be positive, got {}", self.h));
        }
        match self.error_model {
            ErrorModel::FixedSigma(s2) if !(s2.is_finite() && s2 > 0.0) => {
                return bad(format!("fixed sigma2 must be positive, got {s2}"));
            }
            ErrorModel::SampledSigma { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                return bad("inverse-gamma shape and scale must be positive".into());
            }
            _ => {}
        }
        if let Some(sd) = self.initial_proposal_sd {
            if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return bad("initial proposal sds must be positive".into());
            }
        }
        Ok(())
    }

    fn initial_sd(&self, bounds: &PriorBounds) -> [f64; N_PARAMS] {
        self.initial_proposal_sd.unwrap_or_else(|| {
            let x = self.init_params.to_array();
            std::array::from_fn(|i| (0.05 * x[i].abs()).max(1e-3 * (bounds.upper[i] - bounds.lower[i])))
        })
    }
}

/// One logged first-stage Metropolis decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub current_log_post: f64,
    pub proposed_log_post: f64,
    pub uniform: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// One row per iteration; row 0 is the starting point.
    pub samples: Vec<[f64; N_PARAMS]>,
    pub log_posteriors: Vec<f64>,
    pub sigma2_samples: Vec<f64>,
    /// Accepted moves, first or second stage.
    pub accept_count: usize,
    /// Moves accepted at the delayed-rejection stage.
    pub dr_accept_count: usize,
    pub proposal_covariance_final: [[f64; N_PARAMS]; N_PARAMS],
    pub decisions: Vec<Decision>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of proposals accepted (the starting row is not a proposal).
    pub fn acceptance_rate(&self) -> f64 {
        if self.samples.len() <= 1 {
            0.0
        } else {
            self.accept_count as f64 / (self.samples.len() - 1) as f64
        }
    }

    /// Acceptance below 1% usually means a mis-scaled starting proposal.
    pub fn low_acceptance(&self) -> bool {
        self.samples.len() > 1 && self.acceptance_rate() < 0.01
    }

    pub fn column(&self, param: Param) -> Vec<f64> {
        self.samples.iter().map(|row| row[param.index()]).collect()
    }

    /// `iter,beta,sigma,gamma,psi,delta,mu,lambda,sigma2,log_post`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"iter,beta,sigma,gamma,psi,delta,mu,lambda,sigma2,log_post\n")?;
        for (i, row) in self.samples.iter().enumerate() {
            write!(w, "{i}")?;
            for x in row {
                write!(w, ",{}", fmt_full(*x))?;
            }
            writeln!(w, ",{},{}", fmt_full(self.sigma2_samples[i]), fmt_full(self.log_posteriors[i]))?;
        }
        Ok(())
    }
}

fn sample_inverse_gamma(rng: &mut ChaCha8Rng, shape: f64, scale: f64) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters").sample(rng);
    1.0 / g
}

fn standard_normal_vec(rng: &mut ChaCha8Rng) -> Vec7 {
    Vec7::from_fn(|_, _| rng.sample(StandardNormal))
}

/// `-½ (a-b)ᵀ C⁻¹ (a-b)` for `C = L Lᵀ`.
fn gaussian_log_kernel(chol_lower: &Mat7, a: &Vec7, b: &Vec7) -> f64 {
    let w = chol_lower.solve_lower_triangular(&(a - b)).expect("cholesky factor has positive diagonal");
    -0.5 * w.norm_squared()
}

fn empirical_covariance(samples: &[[f64; N_PARAMS]]) -> Mat7 {
    let n = samples.len() as f64;
    let mut mu = Vec7::zeros();
    for row in samples {
        mu += Vec7::from_row_slice(row);
    }
    mu /= n;
    let mut cov = Mat7::zeros();
    for row in samples {
        let d = Vec7::from_row_slice(row) - mu;
        cov += d * d.transpose();
    }
    cov / (n - 1.0).max(1.0)
}

struct Point {
    x: Vec7,
    sse: f64,
    log_post: f64,
}

/// Runs a DRAM chain of `cfg.iterations` rows against `observed`.
pub fn run_dram(cfg: &FitConfig, observed: &[f64], bounds: &PriorBounds) -> Result<Chain, InferenceError> {
    cfg.validate()?;
    if observed.is_empty() {
        return Err(InferenceError::InvalidConfig("no observations".into()));
    }
    let likelihood = Likelihood::new(cfg.init_state, cfg.obs_times.clone(), observed.to_vec())?
        .with_observable(cfg.observable)
        .with_step(cfg.h);
    cfg.init_params.validate().map_err(|e| InferenceError::InvalidConfig(e.to_string()))?;
    if !bounds.contains(&cfg.init_params) {
        return Err(InferenceError::InvalidConfig("initial parameters lie outside the prior bounds".into()));
    }
    let m = likelihood.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let to_params = |x: &Vec7| Parameters::from_array(std::array::from_fn(|i| x[i]));
    let evaluate = |x: &Vec7| -> Option<f64> {
        let p = to_params(x);
        if !bounds.contains(&p) {
            return None;
        }
        likelihood.sum_of_squares(&p).ok().filter(|s| s.is_finite())
    };

    let init_x = Vec7::from_row_slice(&cfg.init_params.to_array());
    let init_sse = likelihood.sum_of_squares(&cfg.init_params)?;
    let mut sigma2 = match cfg.error_model {
        ErrorModel::FixedSigma(s2) => s2,
        ErrorModel::SampledSigma { shape, scale } => {
            sample_inverse_gamma(&mut rng, shape + 0.5 * m as f64, scale + 0.5 * init_sse)
        }
    };
    let mut current = Point { x: init_x, sse: init_sse, log_post: gaussian_log_likelihood(init_sse, sigma2, m) };

    let initial_var = cfg.initial_sd(bounds).map(|s| s * s);
    let initial_cov = Mat7::from_diagonal(&Vec7::from_row_slice(&initial_var));
    let jitter = initial_cov * COV_JITTER;
    let mut proposal_cov = initial_cov;
    let mut chol = proposal_cov.cholesky().expect("diagonal covariance is positive definite").l();

    let mut samples = Vec::with_capacity(cfg.iterations);
    let mut log_posteriors = Vec::with_capacity(cfg.iterations);
    let mut sigma2_samples = Vec::with_capacity(cfg.iterations);
    let mut decisions = Vec::new();
    let mut accept_count = 0;
    let mut dr_accept_count = 0;

    samples.push(cfg.init_params.to_array());
    log_posteriors.push(current.log_post);
    sigma2_samples.push(sigma2);

    for iter in 1..cfg.iterations {
        let y1 = current.x + chol * standard_normal_vec(&mut rng);
        let sse1 = evaluate(&y1);
        let lp1 = sse1.map_or(f64::NEG_INFINITY, |s| gaussian_log_likelihood(s, sigma2, m));
        let u: f64 = rng.random();
        let log_alpha1 = (lp1 - current.log_post).min(0.0);
        let accepted = u.ln() < log_alpha1;
        if cfg.record_decisions {
            decisions.push(Decision {
                current_log_post: current.log_post,
                proposed_log_post: lp1,
                uniform: u,
                accepted,
            });
        }

        if accepted {
            current = Point { x: y1, sse: sse1.expect("accepted point is finite"), log_post: lp1 };
            accept_count += 1;
        } else if cfg.dr_stages == 2 {
            let y2 = current.x + (chol / cfg.dr_scale) * standard_normal_vec(&mut rng);
            if let Some(sse2) = evaluate(&y2) {
                let lp2 = gaussian_log_likelihood(sse2, sigma2, m);
                // α1(y2 → y1); a certain first-stage move from y2 leaves no room for the retry
                let alpha1_back = (lp1 - lp2).min(0.0).exp();
                if alpha1_back < 1.0 {
                    let numerator = lp2 + gaussian_log_kernel(&chol, &y1, &y2) + (1.0 - alpha1_back).ln();
                    let denominator =
                        current.log_post + gaussian_log_kernel(&chol, &y1, &current.x) + (-log_alpha1.exp()).ln_1p();
                    let u2: f64 = rng.random();
                    if u2.ln() < numerator - denominator {
                        current = Point { x: y2, sse: sse2, log_post: lp2 };
                        accept_count += 1;
                        dr_accept_count += 1;
                    }
                }
            }
        }

        if let ErrorModel::SampledSigma { shape, scale } = cfg.error_model {
            sigma2 = sample_inverse_gamma(&mut rng, shape + 0.5 * m as f64, scale + 0.5 * current.sse);
            current.log_post = gaussian_log_likelihood(current.sse, sigma2, m);
        }

        samples.push(std::array::from_fn(|i| current.x[i]));
        log_posteriors.push(current.log_post);
        sigma2_samples.push(sigma2);

        if cfg.adapt && iter % cfg.adapt_interval == 0 {
            let candidate = empirical_covariance(&samples) * AM_SCALE + jitter;
            if let Some(c) = candidate.cholesky() {
                proposal_cov = candidate;
                chol = c.l();
            }
        }
    }

    Ok(Chain {
        samples,
        log_posteriors,
        sigma2_samples,
        accept_count,
        dr_accept_count,
        proposal_covariance_final: std::array::from_fn(|i| std::array::from_fn(|j| proposal_cov[(i, j)])),
        decisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub param: Param,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

impl SummaryRow {
    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub rows: [SummaryRow; N_PARAMS],
}

impl PosteriorSummary {
    pub fn get(&self, param: Param) -> &SummaryRow {
        &self.rows[param.index()]
    }

    pub fn means(&self) -> Parameters {
        Parameters::from_array(self.rows.map(|r| r.mean))
    }

    /// `parameter,posterior_mean,q2_5,q97_5`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"parameter,posterior_mean,q2_5,q97_5\n")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.param, fmt_full(r.mean), fmt_full(r.q025), fmt_full(r.q975))?;
        }
        Ok(())
    }
}

fn post_burn_in(chain: &Chain, burn_in_fraction: f64) -> Result<&[[f64; N_PARAMS]], InferenceError> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(InferenceError::InvalidConfig(format!(
            "burn-in fraction must be in [0, 1), got {burn_in_fraction}"
        )));
    }
    let skip = (chain.len() as f64 * burn_in_fraction).floor() as usize;
    let kept = &chain.samples[skip.min(chain.len())..];
    if kept.is_empty() {
        return Err(InferenceError::EmptyChain);
    }
    Ok(kept)
}

/// Posterior means and linear-interpolation 2.5% / 97.5% quantiles.
pub fn summarize(chain: &Chain, burn_in_fraction: f64) -> Result<PosteriorSummary, InferenceError> {
    let kept = post_burn_in(chain, burn_in_fraction)?;
    let rows = Param::ALL.map(|param| {
        let mut col: Vec<f64> = kept.iter().map(|r| r[param.index()]).collect();
        let m = mean(&col);
        col.sort_by(f64::total_cmp);
        SummaryRow { param, mean: m, q025: quantile_sorted(&col, 0.025), q975: quantile_sorted(&col, 0.975) }
    });
    Ok(PosteriorSummary { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveConfig {
    pub n_draws: usize,
    pub burn_in_fraction: f64,
    pub init: State,
    pub times: Vec<f64>,
    pub observable: Observable,
    pub h: f64,
    pub seed: u64,
}

/// Pointwise 2.5% / mean / 97.5% envelope of simulated observables.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveBand {
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
    /// Draws whose simulation failed and were left out.
    pub failed_draws: usize,
}

impl PredictiveBand {
    /// `t,lower,mean,upper`, with an `observed` column when `observed` is given.
    pub fn write_csv<W: Write>(&self, mut w: W, observed: Option<&[f64]>) -> io::Result<()> {
        match observed {
            Some(_) => w.write_all(b"t,lower,mean,upper,observed\n")?,
            None => w.write_all(b"t,lower,mean,upper\n")?,
        }
        for k in 0..self.times.len() {
            write!(
                w,
                "{},{},{},{}",
                fmt_full(self.times[k]),
                fmt_full(self.lower[k]),
                fmt_full(self.mean[k]),
                fmt_full(self.upper[k])
            )?;
            if let Some(obs) = observed {
                write!(w, ",{}", obs.get(k).map_or_else(String::new, |o| fmt_full(*o)))?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Simulates `n_draws` distinct post-burn-in rows and summarises the observable per time.
pub fn posterior_predictive(chain: &Chain, cfg: &PredictiveConfig) -> Result<PredictiveBand, InferenceError> {
    let kept = post_burn_in(chain, cfg.burn_in_fraction)?;
    if cfg.n_draws == 0 || cfg.n_draws > kept.len() {
        return Err(InferenceError::InvalidConfig(format!(
            "n_draws must be in 1..={}, got {}",
            kept.len(),
            cfg.n_draws
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks = index::sample(&mut rng, kept.len(), cfg.n_draws).into_vec();
    picks.sort_unstable();

    let mut runs: Vec<Vec<f64>> = Vec::with_capacity(picks.len());
    let mut failed_draws = 0;
    for i in picks {
        let p = Parameters::from_array(kept[i]);
        match model_observations(&cfg.init, &p, &cfg.times, cfg.observable, cfg.h) {
            Ok(v) => runs.push(v),
            Err(_) => failed_draws += 1,
        }
    }
    if runs.is_empty() {
        return Err(InferenceError::EmptyChain);
    }

    let mut lower = Vec::with_capacity(cfg.times.len());
    let mut center = Vec::with_capacity(cfg.times.len());
    let mut upper = Vec::with_capacity(cfg.times.len());
    for k in 0..cfg.times.len() {
        let mut col: Vec<f64> = runs.iter().map(|r| r[k]).collect();
        center.push(mean(&col));
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, 0.025));
        upper.push(quantile_sorted(&col, 0.975));
    }
    Ok(PredictiveBand { times: cfg.times.clone(), lower, mean: center, upper, failed_draws })
}
