//! Local and global sensitivity analysis.
//!
//! Local: normalized indices `S_p = (∂R0/∂p)(p/R0)`, which for this model
//! have closed forms. Global: Latin hypercube sampling over parameter ranges,
//! time-integrated burdens of `As` and `V`, and partial rank correlation
//! coefficients (PRCC) with Student-t p-values.

use std::fmt;
use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::integrators::{fmt_full, simulate, SimError, StepConfig, Trajectory};
use crate::model::{ModelError, Param, Parameters, State};
use crate::observe::integrate_between;
use crate::stats::{average_ranks, pearson};

pub const N_PARAMS: usize = 7;

/// Number of covariates controlled for in each partial correlation.
pub const CONTROLLED: usize = N_PARAMS - 1;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid range for {param}: [{low}, {high}]")]
    InvalidRange { param: Param, low: f64, high: f64 },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("horizon {horizon} exceeds trajectory end {end}")]
    HorizonExceedsTrajectory { horizon: f64, end: f64 },
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

/// Normalized sensitivity indices of `R0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalIndexSet {
    pub s_beta: f64,
    pub s_psi: f64,
    pub s_gamma: f64,
    pub s_mu: f64,
    pub s_lambda: f64,
    pub s_delta: f64,
}

impl LocalIndexSet {
    /// Rows in the customary reporting order `β, ψ, γ, μ, λ, δ`.
    pub fn rows(&self) -> [(Param, f64); 6] {
        [
            (Param::Beta, self.s_beta),
            (Param::Psi, self.s_psi),
            (Param::Gamma, self.s_gamma),
            (Param::Mu, self.s_mu),
            (Param::Lambda, self.s_lambda),
            (Param::Delta, self.s_delta),
        ]
    }

    /// `parameter,description,nominal_value,sensitivity_index`
    pub fn write_csv<W: Write>(&self, mut w: W, nominal: &Parameters) -> io::Result<()> {
        w.write_all(b"parameter,description,nominal_value,sensitivity_index\n")?;
        for (param, index) in self.rows() {
            writeln!(w, "{},{},{},{}", param, param.description(), fmt_full(nominal.get(param)), fmt_full(index))?;
        }
        Ok(())
    }
}

pub fn local_indices(p: &Parameters) -> Result<LocalIndexSet, SensitivityError> {
    let victim_exit = p.gamma + p.psi;
    if victim_exit == 0.0 {
        return Err(ModelError::DegenerateDenominator("gamma + psi = 0").into());
    }
    let net_loss = p.scammer_net_loss();
    if net_loss == 0.0 {
        return Err(ModelError::DegenerateDenominator("mu + lambda - delta = 0").into());
    }
    Ok(LocalIndexSet {
        s_beta: 1.0,
        s_psi: p.gamma / victim_exit,
        s_gamma: -p.gamma / victim_exit,
        s_mu: -p.mu / net_loss,
        s_lambda: -p.lambda / net_loss,
        s_delta: p.delta / net_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub low: f64,
    pub high: f64,
}

impl ParamRange {
    pub const fn new(low: f64, high: f64) -> Self {
        ParamRange { low, high }
    }
}

/// Sampling ranges of the global analysis, in [`Param::ALL`] order.
pub const DEFAULT_RANGES: [ParamRange; N_PARAMS] = [
    ParamRange::new(0.0, 0.1), // beta
    ParamRange::new(0.0, 0.2), // sigma
    ParamRange::new(0.0, 0.1), // gamma
    ParamRange::new(0.0, 0.1), // psi
    ParamRange::new(0.0, 0.1), // delta
    ParamRange::new(0.0, 0.1), // mu
    ParamRange::new(0.0, 1.0), // lambda
];

/// Latin hypercube design: `matrix[i][j]` is row `i`, parameter `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDesign {
    pub n: usize,
    pub ranges: [ParamRange; N_PARAMS],
    pub seed: u64,
    pub matrix: Vec<[f64; N_PARAMS]>,
}

impl SampleDesign {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.iter().map(|row| row[j]).collect()
    }

    pub fn params(&self, i: usize) -> Parameters {
        Parameters::from_array(self.matrix[i])
    }
}

/// One uniform draw per equal-width stratum in every column, strata shuffled
/// independently per column.
pub fn lhs_sample(n: usize, ranges: &[ParamRange; N_PARAMS], seed: u64) -> Result<SampleDesign, SensitivityError> {
    if n < 2 {
        return Err(SensitivityError::InvalidDesign(format!("need at least 2 samples, got {n}")));
    }
    for (param, r) in Param::ALL.into_iter().zip(ranges) {
        if !(r.low.is_finite() && r.high.is_finite() && r.low < r.high) {
            return Err(SensitivityError::InvalidRange { param, low: r.low, high: r.high });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = vec![[0.0; N_PARAMS]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (j, r) in ranges.iter().enumerate() {
        strata.shuffle(&mut rng);
        let width = (r.high - r.low) / n as f64;
        for (row, &k) in matrix.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            row[j] = (r.low + (k as f64 + u) * width).min(r.high);
        }
    }
    Ok(SampleDesign { n, ranges: *ranges, seed, matrix })
}

/// Time integrals of `As` and `V` (individual-days).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Burden {
    pub as_burden: f64,
    pub v_burden: f64,
}

/// Trapezoid integrals of `As` and `V` over `[0, horizon]`.
pub fn integrate_burden(traj: &Trajectory, horizon: f64) -> Result<Burden, SensitivityError> {
    let end = traj.last_time();
    let spacing = traj.h * traj.stride as f64;
    if traj.is_empty() || horizon > end + 1e-9 * spacing {
        return Err(SensitivityError::HorizonExceedsTrajectory { horizon, end });
    }
    let horizon = horizon.min(end);
    let as_burden = integrate_between(traj, 0.0, horizon, |s| s.a_s)
        .ok_or(SensitivityError::HorizonExceedsTrajectory { horizon, end })?;
    let v_burden = integrate_between(traj, 0.0, horizon, |s| s.v)
        .ok_or(SensitivityError::HorizonExceedsTrajectory { horizon, end })?;
    Ok(Burden { as_burden, v_burden })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputLabel {
    AsBurden,
    VBurden,
}

impl fmt::Display for OutputLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputLabel::AsBurden => "As_burden",
            OutputLabel::VBurden => "V_burden",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrccEntry {
    pub param: Param,
    pub coefficient: f64,
    pub p_value: f64,
}

impl PrccEntry {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE_LEVEL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrccReport {
    pub label: OutputLabel,
    pub entries: [PrccEntry; N_PARAMS],
    pub degrees_of_freedom: usize,
}

impl PrccReport {
    pub fn get(&self, param: Param) -> &PrccEntry {
        &self.entries[param.index()]
    }
}

/// Residual of `y` after least-squares projection onto span of `basis`
/// (columns assumed linearly independent), by modified Gram-Schmidt.
fn residualize(y: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for col in basis {
        let mut q = col.clone();
        for e in &ortho {
            let dot: f64 = q.iter().zip(e).map(|(a, b)| a * b).sum();
            q.iter_mut().zip(e).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = q.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 * col.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE) {
            q.iter_mut().for_each(|a| *a /= norm);
            ortho.push(q);
        }
    }
    let mut r = y.to_vec();
    for e in &ortho {
        let dot: f64 = r.iter().zip(e).map(|(a, b)| a * b).sum();
        r.iter_mut().zip(e).for_each(|(a, b)| *a -= dot * b);
    }
    r
}

fn is_numerically_zero(r: &[f64], reference: &[f64]) -> bool {
    let rn = r.iter().map(|a| a * a).sum::<f64>().sqrt();
    let yn = reference.iter().map(|a| a * a).sum::<f64>().sqrt();
    rn <= 1e-10 * yn.max(f64::MIN_POSITIVE)
}

/// Two-sided p-value for a correlation `r` with `df` degrees of freedom.
pub fn correlation_p_value(r: f64, df: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df as f64 / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Partial rank correlation of each design column with `outputs`,
/// controlling for the remaining six columns.
///
/// A column whose ranks are explained by the others makes the design
/// degenerate. An output whose ranks are fully explained by the other six
/// columns carries no partial association with the column: coefficient 0,
/// p-value 1.
pub fn prcc(design: &[[f64; N_PARAMS]], outputs: &[f64], label: OutputLabel) -> Result<PrccReport, SensitivityError> {
    let n = design.len();
    if outputs.len() != n {
        return Err(SensitivityError::InvalidDesign(format!("{n} design rows but {} outputs", outputs.len())));
    }
    if n < 2 + CONTROLLED + 1 {
        return Err(SensitivityError::InvalidDesign(format!(
            "need at least {} rows for positive degrees of freedom, got {n}",
            2 + CONTROLLED + 1
        )));
    }
    let df = n - 2 - CONTROLLED;
    let ranked: Vec<Vec<f64>> =
        (0..N_PARAMS).map(|j| average_ranks(&design.iter().map(|row| row[j]).collect::<Vec<_>>())).collect();
    let ranked_y = average_ranks(outputs);
    if ranked_y.iter().all(|r| *r == ranked_y[0]) {
        return Err(SensitivityError::DegenerateDesign("output is constant".into()));
    }

    let mut entries = [PrccEntry { param: Param::Beta, coefficient: 0.0, p_value: 1.0 }; N_PARAMS];
    for (j, param) in Param::ALL.into_iter().enumerate() {
        let mut basis = Vec::with_capacity(N_PARAMS);
        basis.push(vec![1.0; n]);
        basis.extend(ranked.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, c)| c.clone()));
        let rx = residualize(&ranked[j], &basis);
        let ry = residualize(&ranked_y, &basis);
        if is_numerically_zero(&rx, &ranked[j]) {
            return Err(SensitivityError::DegenerateDesign(format!("{param} is collinear with the other inputs")));
        }
        if is_numerically_zero(&ry, &ranked_y) {
            entries[j] = PrccEntry { param, coefficient: 0.0, p_value: 1.0 };
            continue;
        }
        let coefficient = pearson(&rx, &ry).clamp(-1.0, 1.0);
        entries[j] = PrccEntry { param, coefficient, p_value: correlation_p_value(coefficient, df) };
    }
    Ok(PrccReport { label, entries, degrees_of_freedom: df })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub n: usize,
    pub ranges: [ParamRange; N_PARAMS],
    pub init: State,
    pub h: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl GlobalConfig {
    pub fn new(n: usize, init: State, seed: u64) -> Self {
        GlobalConfig { n, ranges: DEFAULT_RANGES, init, h: 1.0, horizon: 1520.0, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalReport {
    pub design: SampleDesign,
    /// Burden per design row; `None` where the simulation failed.
    pub burdens: Vec<Option<Burden>>,
    pub as_report: PrccReport,
    pub v_report: PrccReport,
    pub dropped_rows: usize,
}

impl GlobalReport {
    /// `parameter,range_low,range_high,prcc_As,p_As,prcc_V,p_V,significant_As,significant_V`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"parameter,range_low,range_high,prcc_As,p_As,prcc_V,p_V,significant_As,significant_V\n")?;
        for (j, param) in Param::ALL.into_iter().enumerate() {
            let a = &self.as_report.entries[j];
            let v = &self.v_report.entries[j];
            let r = self.design.ranges[j];
            writeln!(
                w,
                "{param},{},{},{},{},{},{},{},{}",
                fmt_full(r.low),
                fmt_full(r.high),
                fmt_full(a.coefficient),
                fmt_full(a.p_value),
                fmt_full(v.coefficient),
                fmt_full(v.p_value),
                a.significant(),
                v.significant()
            )?;
        }
        Ok(())
    }
}

/// LHS design, one NSFD run per row (in parallel), burdens, then PRCC for both outputs.
pub fn global_analysis(cfg: &GlobalConfig) -> Result<GlobalReport, SensitivityError> {
    global_analysis_with_progress(cfg, |_, _| {})
}

/// As [`global_analysis`], calling `progress(done, total)` after each row.
/// Rows finish out of order, so `done` counts completions, not indices.
pub fn global_analysis_with_progress(
    cfg: &GlobalConfig,
    progress: impl Fn(usize, usize) + Sync,
) -> Result<GlobalReport, SensitivityError> {
    cfg.init.validate()?;
    let step = StepConfig::nsfd(cfg.h, cfg.horizon)?;
    let design = lhs_sample(cfg.n, &cfg.ranges, cfg.seed)?;
    let done = AtomicUsize::new(0);

    let burdens: Vec<Option<Burden>> = design
        .matrix
        .par_iter()
        .map(|row| {
            let burden = simulate(&cfg.init, &Parameters::from_array(*row), &step)
                .ok()
                .and_then(|traj| integrate_burden(&traj, cfg.horizon).ok())
                .filter(|b| b.as_burden.is_finite() && b.v_burden.is_finite());
            progress(done.fetch_add(1, AtomicOrdering::Relaxed) + 1, cfg.n);
            burden
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.n);
    let mut as_out = Vec::with_capacity(cfg.n);
    let mut v_out = Vec::with_capacity(cfg.n);
    for (row, b) in design.matrix.iter().zip(&burdens) {
        if let Some(b) = b {
            rows.push(*row);
            as_out.push(b.as_burden);
            v_out.push(b.v_burden);
        }
    }
    let dropped_rows = cfg.n - rows.len();
    let as_report = prcc(&rows, &as_out, OutputLabel::AsBurden)?;
    let v_report = prcc(&rows, &v_out, OutputLabel::VBurden)?;
    Ok(GlobalReport { design, burdens, as_report, v_report, dropped_rows })
}
