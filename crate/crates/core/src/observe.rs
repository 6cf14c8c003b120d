//! Mapping from simulated orbits to monthly observables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::integrators::{simulate, SimError, StepConfig, Trajectory};
use crate::model::{Parameters, State};

/// Days per model month; month `k` of a series starts at `k * MONTH_DAYS`.
pub const MONTH_DAYS: f64 = 30.44;

/// NSFD step used inside likelihood evaluations and synthetic generation.
pub const LIKELIHOOD_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// Victim prevalence `V(t)` at the start of each month.
    #[default]
    Prevalence,
    /// New victims `∫ β S As dt` over the month starting at each observation time.
    Incidence,
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Observable::Prevalence => "prevalence",
            Observable::Incidence => "incidence",
        })
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prevalence" => Ok(Observable::Prevalence),
            "incidence" => Ok(Observable::Incidence),
            other => Err(format!("unknown observable `{other}`")),
        }
    }
}

impl Observable {
    /// Last simulated time needed to observe at `times`.
    pub fn horizon(self, times: &[f64]) -> f64 {
        let last = times.last().copied().unwrap_or(0.0);
        match self {
            Observable::Prevalence => last,
            Observable::Incidence => last + MONTH_DAYS,
        }
    }
}

/// Observation times `0, Δ, 2Δ, ...` for `months` monthly points.
pub fn monthly_times(months: usize) -> Vec<f64> {
    (0..months).map(|k| k as f64 * MONTH_DAYS).collect()
}

/// Integral of `f(state)` over `[t0, t1]` by the trapezoid rule on the stored
/// grid, with linearly interpolated end points.
pub fn integrate_between(traj: &Trajectory, t0: f64, t1: f64, f: impl Fn(&State) -> f64) -> Option<f64> {
    let start = traj.state_at(t0)?;
    let end = traj.state_at(t1)?;
    if t1 <= t0 {
        return Some(0.0);
    }
    let mut acc = 0.0;
    let mut prev_t = t0;
    let mut prev_f = f(&start);
    for (t, st) in traj.times.iter().zip(&traj.states) {
        if *t <= t0 {
            continue;
        }
        if *t >= t1 {
            break;
        }
        let cur = f(st);
        acc += 0.5 * (t - prev_t) * (prev_f + cur);
        prev_t = *t;
        prev_f = cur;
    }
    acc += 0.5 * (t1 - prev_t) * (prev_f + f(&end));
    Some(acc)
}

/// Reads the observable off an existing trajectory.
pub fn observe_trajectory(traj: &Trajectory, times: &[f64], observable: Observable) -> Option<Vec<f64>> {
    let p = traj.params;
    times
        .iter()
        .map(|&t| match observable {
            Observable::Prevalence => traj.state_at(t).map(|s| s.v),
            Observable::Incidence => integrate_between(traj, t, t + MONTH_DAYS, |s| p.beta * s.s * s.a_s),
        })
        .collect()
}

/// Simulates with NSFD at step `h` and returns the observable at `times`.
pub fn model_observations(
    init: &State,
    params: &Parameters,
    times: &[f64],
    observable: Observable,
    h: f64,
) -> Result<Vec<f64>, SimError> {
    let horizon = observable.horizon(times).max(h);
    let traj = simulate(init, params, &StepConfig::nsfd(h, horizon)?)?;
    observe_trajectory(&traj, times, observable)
        .ok_or_else(|| SimError::InvalidConfig("observation time outside the simulated horizon".into()))
}
