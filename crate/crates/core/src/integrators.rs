//! Fixed-step time integration of the scam model.
//!
//! [`Scheme::Nsfd`] is the positivity-preserving nonstandard finite
//! difference scheme; [`Scheme::ReferenceRk`] is classical RK4 on
//! [`model::rhs`](crate::model::rhs), used as a convergence reference.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{rhs, Parameters, State};

/// Maximum number of stored points in a [`Trajectory`].
pub const MAX_STORED_POINTS: usize = 1_000_000;

/// Relative slack on the `N(0) e^{δt}` envelope.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid step configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(#[from] crate::model::ModelError),
    #[error("non-finite state at t = {t} (step {step})")]
    NonFiniteState { step: usize, t: f64 },
    #[error("malformed trajectory csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Nsfd,
    #[serde(rename = "reference")]
    ReferenceRk,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Nsfd => "nsfd",
            Scheme::ReferenceRk => "reference",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nsfd" => Ok(Scheme::Nsfd),
            "reference" | "rk4" => Ok(Scheme::ReferenceRk),
            other => Err(format!("unknown scheme `{other}` (expected nsfd or reference)")),
        }
    }
}

/// Which `As` level feeds the removed-scammer update of the NSFD scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovedUpdate {
    /// `Rs_{k+1} = Rs_k + θ λ As_{k+1}` (compact explicit form).
    #[default]
    Forward,
    /// `Rs_{k+1} = Rs_k + θ λ As_k`.
    Lagged,
}

impl FromStr for RemovedUpdate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(RemovedUpdate::Forward),
            "lagged" => Ok(RemovedUpdate::Lagged),
            other => Err(format!("unknown removed-scammer update `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub h: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub removed_update: RemovedUpdate,
}

impl StepConfig {
    pub fn new(h: f64, t_end: f64, scheme: Scheme) -> Result<Self, SimError> {
        let cfg = StepConfig { h, t_end, scheme, removed_update: RemovedUpdate::Forward };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn nsfd(h: f64, t_end: f64) -> Result<Self, SimError> {
        Self::new(h, t_end, Scheme::Nsfd)
    }

    pub fn reference(h: f64, t_end: f64) -> Result<Self, SimError> {
        Self::new(h, t_end, Scheme::ReferenceRk)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(SimError::InvalidConfig(format!("h must be positive, got {}", self.h)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.h) {
            return Err(SimError::InvalidConfig(format!(
                "t_end must be at least h, got t_end = {} with h = {}",
                self.t_end, self.h
            )));
        }
        Ok(())
    }

    /// Number of steps needed to reach `t_end`, i.e. `⌈t_end / h⌉`.
    pub fn steps(&self) -> usize {
        let ratio = self.t_end / self.h;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

/// Stored orbit of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub scheme: Scheme,
    pub params: Parameters,
    /// Integration step.
    pub h: f64,
    /// Number of integration steps between stored points (1 unless thinned).
    pub stride: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// Linear interpolation of the state at time `t`, or `None` outside the stored range.
    pub fn state_at(&self, t: f64) -> Option<State> {
        let first = *self.times.first()?;
        let last = self.last_time();
        let spacing = self.h * self.stride as f64;
        if t < first || t > last + 1e-9 * spacing {
            return None;
        }
        let pos = (t - first) / spacing;
        let i = (pos.floor() as usize).min(self.len() - 1);
        if i + 1 >= self.len() {
            return Some(self.states[i]);
        }
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        if w == 0.0 {
            return Some(self.states[i]);
        }
        let a = self.states[i].to_array();
        let b = self.states[i + 1].to_array();
        let mut out = [0.0; 5];
        for c in 0..5 {
            out[c] = a[c] + w * (b[c] - a[c]);
        }
        Some(State::from_array(out))
    }

    /// Writes `t,S,V,R,As,Rs` rows with 17 significant digits and LF endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"t,S,V,R,As,Rs\n")?;
        for (t, st) in self.times.iter().zip(&self.states) {
            write!(w, "{}", fmt_full(*t))?;
            for c in st.to_array() {
                write!(w, ",{}", fmt_full(c))?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// Parses the `t,S,V,R,As,Rs` export back into times and states.
pub fn read_trajectory_csv<R: BufRead>(reader: R) -> Result<(Vec<f64>, Vec<State>), SimError> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or_else(|| SimError::Csv { line: 1, reason: "empty input".into() })?;
    if header != "t,S,V,R,As,Rs" {
        return Err(SimError::Csv { line: 1, reason: format!("unexpected header `{header}`") });
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(SimError::Csv { line: lineno, reason: format!("expected 6 fields, got {}", fields.len()) });
        }
        let mut vals = [0.0; 6];
        for (slot, field) in vals.iter_mut().zip(&fields) {
            *slot = field.parse().map_err(|e| SimError::Csv { line: lineno, reason: format!("`{field}`: {e}") })?;
        }
        times.push(vals[0]);
        states.push(State::new(vals[1], vals[2], vals[3], vals[4], vals[5]));
    }
    Ok((times, states))
}

/// Formats a double with 17 significant digits, which round-trips exactly.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Denominator function `θ(h) = (1 - e^{-ρh}) / ρ` with `ρ = σ+μ+γ+λ+ψ`.
///
/// Returns `h` when `ρ = 0`.
pub fn denominator(h: f64, p: &Parameters) -> f64 {
    let rho = p.rate_sum();
    if rho == 0.0 {
        h
    } else {
        -(-rho * h).exp_m1() / rho
    }
}

/// One step of the compact NSFD update with a precomputed `θ(h)`.
pub fn nsfd_step_with(state: &State, p: &Parameters, theta: f64, removed: RemovedUpdate) -> State {
    let State { s, v, r, a_s, r_s } = *state;
    let s_next = (s + theta * p.sigma * r) / (1.0 + theta * p.beta * a_s);
    let v_next = (v + theta * p.beta * s * a_s) / (1.0 + theta * p.gamma + theta * p.psi);
    let r_next = (r + theta * p.gamma * v) / (1.0 + theta * p.sigma);
    let a_next = (a_s * (1.0 + theta * p.delta) + theta * p.psi * v) / (1.0 + theta * (p.mu + p.lambda));
    let removal_source = match removed {
        RemovedUpdate::Forward => a_next,
        RemovedUpdate::Lagged => a_s,
    };
    let rs_next = r_s + theta * p.lambda * removal_source;
    State::new(s_next, v_next, r_next, a_next, rs_next)
}

/// One NSFD step of size `h`.
pub fn nsfd_step(state: &State, p: &Parameters, h: f64) -> State {
    nsfd_step_with(state, p, denominator(h, p), RemovedUpdate::Forward)
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step(state: &State, p: &Parameters, h: f64) -> State {
    let x = state.to_array();
    let shifted = |k: &[f64; 5], scale: f64| {
        let mut y = x;
        for i in 0..5 {
            y[i] += scale * k[i];
        }
        State::from_array(y)
    };
    let k1 = rhs(state, p);
    let k2 = rhs(&shifted(&k1, h / 2.0), p);
    let k3 = rhs(&shifted(&k2, h / 2.0), p);
    let k4 = rhs(&shifted(&k3, h), p);
    let mut out = x;
    for i in 0..5 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    State::from_array(out)
}

/// Integrates from `init` over `[0, ⌈t_end/h⌉·h]`.
pub fn simulate(init: &State, params: &Parameters, cfg: &StepConfig) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    init.validate()?;
    params.validate()?;

    let steps = cfg.steps();
    let stride = (steps + 1).div_ceil(MAX_STORED_POINTS).max(1);
    let stored = steps / stride + 1;
    let mut times = Vec::with_capacity(stored + 1);
    let mut states = Vec::with_capacity(stored + 1);
    times.push(0.0);
    states.push(*init);

    let theta = denominator(cfg.h, params);
    let mut current = *init;
    for k in 1..=steps {
        current = match cfg.scheme {
            Scheme::Nsfd => nsfd_step_with(&current, params, theta, cfg.removed_update),
            Scheme::ReferenceRk => rk4_step(&current, params, cfg.h),
        };
        let t = k as f64 * cfg.h;
        if !current.is_finite() {
            return Err(SimError::NonFiniteState { step: k, t });
        }
        if k % stride == 0 {
            times.push(t);
            states.push(current);
        }
    }
    Ok(Trajectory { times, states, scheme: cfg.scheme, params: *params, h: cfg.h, stride })
}

/// Checks `N(t_k) ≤ N(0) e^{δ t_k} (1 + 1e-9)` at every stored point.
pub fn total_population_bound_check(traj: &Trajectory) -> bool {
    let Some(first) = traj.states.first() else {
        return false;
    };
    let n0 = first.total();
    let delta = traj.params.delta;
    traj.times.iter().zip(&traj.states).all(|(t, st)| st.total() <= n0 * (delta * t).exp() * (1.0 + BOUND_SLACK))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Param;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const MEANS: Parameters = Parameters::POSTERIOR_MEANS;

    #[test]
    fn denominator_examples() {
        let zero = Parameters::from_array([0.3, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0]);
        assert_eq!(denominator(2.0, &zero), 2.0);

        assert_relative_eq!(MEANS.rate_sum(), 0.115831, epsilon = 1e-15);
        let theta = denominator(1.0, &MEANS);
        assert_relative_eq!(theta, (1.0 - (-0.115831f64).exp()) / 0.115831, max_relative = 1e-14);
        assert!((theta - 0.9442).abs() < 1e-4);

        let h = 1e-8;
        let ratio = denominator(h, &MEANS) / h;
        assert!((1.0 - 1e-7..=1.0).contains(&ratio));
    }

    #[test]
    fn denominator_consistency_ladder() {
        let rho = MEANS.rate_sum();
        for k in 1..=8 {
            let h = 10f64.powi(-k);
            let theta = denominator(h, &MEANS);
            assert!(theta > 0.0 && theta <= h);
            assert!((theta / h - 1.0).abs() <= rho * h, "k = {k}");
        }
    }

    #[test]
    fn nsfd_fixed_points() {
        for h in [1e-3, 1.0, 1e3] {
            assert_eq!(nsfd_step(&State::scam_free(1000.0), &MEANS, h), State::scam_free(1000.0));
            assert_eq!(nsfd_step(&State::default(), &MEANS, h), State::default());
        }
    }

    #[test]
    fn nsfd_step_hand_evaluated() {
        let th = (1.0 - (-0.115831f64).exp()) / 0.115831;
        let (b, sg, g, ps, d, m, l) = (0.008425, 0.023868, 0.059366, 0.000004, 0.026109, 0.016590, 0.016003);
        let s1 = (100.0 + th * sg * 5.0) / (1.0 + th * b * 2.0);
        let v1 = (10.0 + th * b * 100.0 * 2.0) / (1.0 + th * g + th * ps);
        let r1 = (5.0 + th * g * 10.0) / (1.0 + th * sg);
        let a1 = (2.0 * (1.0 + th * d) + th * ps * 10.0) / (1.0 + th * (m + l));
        let rs1 = 0.0 + th * l * a1;

        let got = nsfd_step(&State::new(100.0, 10.0, 5.0, 2.0, 0.0), &MEANS, 1.0);
        for (x, y) in got.to_array().iter().zip([s1, v1, r1, a1, rs1]) {
            assert_relative_eq!(*x, y, max_relative = 1e-13);
        }
        let lagged = nsfd_step_with(&State::new(100.0, 10.0, 5.0, 2.0, 0.0), &MEANS, th, RemovedUpdate::Lagged);
        assert_relative_eq!(lagged.r_s, th * l * 2.0, max_relative = 1e-13);
    }

    #[test]
    fn step_config_validation() {
        assert!(StepConfig::nsfd(0.0, 1.0).is_err());
        assert!(StepConfig::nsfd(-1.0, 1.0).is_err());
        assert!(StepConfig::nsfd(2.0, 1.0).is_err());
        assert_eq!(StepConfig::nsfd(0.25, 1520.0).unwrap().steps(), 6080);
        assert_eq!(StepConfig::nsfd(0.3, 1.0).unwrap().steps(), 4);
        assert_eq!(StepConfig::nsfd(0.1, 0.3).unwrap().steps(), 3);
    }

    #[test]
    fn sfe_trajectory_is_constant() {
        for scheme in [Scheme::Nsfd, Scheme::ReferenceRk] {
            let cfg = StepConfig::new(1.0, 50.0, scheme).unwrap();
            let traj = simulate(&State::scam_free(800.0), &MEANS, &cfg).unwrap();
            assert_eq!(traj.len(), 51);
            assert!(traj.states.iter().all(|s| *s == State::scam_free(800.0)));
            assert!(total_population_bound_check(&traj));
        }
    }

    #[test]
    fn scammers_collapse_from_two_hundred() {
        let init = State::new(1000.0, 100.0, 0.0, 200.0, 0.0);
        let traj = simulate(&init, &MEANS, &StepConfig::nsfd(1.0, 600.0).unwrap()).unwrap();
        let last = traj.final_state().unwrap();
        assert!(last.a_s < 200.0);
        // monotone decay once ψV is negligible against the net loss
        assert!(traj.states.windows(2).all(|w| w[1].a_s <= w[0].a_s));
    }

    #[test]
    fn compact_nsfd_is_not_population_conservative() {
        // S loses θβ S₁ As while V gains θβ S As, so N overshoots the
        // continuous-time bound N(0) e^{δt} whenever S drops sharply.
        let init = State::new(1000.0, 100.0, 0.0, 200.0, 0.0);
        let traj = simulate(&init, &MEANS, &StepConfig::nsfd(1.0, 5.0).unwrap()).unwrap();
        assert_relative_eq!(traj.states[1].total(), 2194.5428481657286, max_relative = 1e-12);
        assert!(!total_population_bound_check(&traj));
    }

    #[test]
    fn reference_blows_up_at_huge_step() {
        let init = State::new(1000.0, 100.0, 0.0, 200.0, 0.0);
        let p = MEANS.with(Param::Beta, 0.1);
        let err = simulate(&init, &p, &StepConfig::reference(100.0, 100_000.0).unwrap()).unwrap_err();
        assert!(matches!(err, SimError::NonFiniteState { .. }));
        let ok = simulate(&init, &p, &StepConfig::nsfd(100.0, 100_000.0).unwrap()).unwrap();
        assert!(ok.states.iter().all(State::is_nonnegative));
    }

    #[test]
    fn bound_check_detects_corruption() {
        let init = State::new(1000.0, 100.0, 0.0, 200.0, 0.0);
        let mut traj = simulate(&init, &MEANS, &StepConfig::reference(0.1, 100.0).unwrap()).unwrap();
        assert!(total_population_bound_check(&traj));
        let t = traj.times[40];
        let limit = init.total() * (MEANS.delta * t).exp();
        traj.states[40].s += 2.0 * limit;
        assert!(!total_population_bound_check(&traj));
    }

    #[test]
    fn thinning_keeps_uniform_spacing() {
        let cfg = StepConfig::nsfd(1e-3, 2500.0).unwrap();
        let traj = simulate(&State::new(10.0, 1.0, 0.0, 2.0, 0.0), &MEANS, &cfg).unwrap();
        assert!(traj.len() <= MAX_STORED_POINTS);
        assert_eq!(traj.stride, 3);
        let spacing = traj.times[1] - traj.times[0];
        assert!(traj.times.windows(2).all(|w| ((w[1] - w[0]) - spacing).abs() < 1e-9));
    }

    #[test]
    fn interpolation_between_grid_points() {
        let traj =
            simulate(&State::new(100.0, 10.0, 5.0, 2.0, 0.0), &MEANS, &StepConfig::nsfd(1.0, 10.0).unwrap()).unwrap();
        assert_eq!(traj.state_at(3.0).unwrap(), traj.states[3]);
        let mid = traj.state_at(3.5).unwrap();
        assert_relative_eq!(mid.v, 0.5 * (traj.states[3].v + traj.states[4].v), max_relative = 1e-14);
        assert!(traj.state_at(10.5).is_none());
        assert_eq!(traj.state_at(10.0).unwrap(), traj.states[10]);
    }

    #[test]
    fn csv_export_round_trips() {
        let traj =
            simulate(&State::new(100.0, 10.0, 5.0, 2.0, 0.0), &MEANS, &StepConfig::nsfd(0.1, 3.0).unwrap()).unwrap();
        let text = traj.to_csv_string();
        assert!(text.starts_with("t,S,V,R,As,Rs\n"));
        assert!(!text.contains('\r'));
        let (times, states) = read_trajectory_csv(text.as_bytes()).unwrap();
        assert_eq!(times, traj.times);
        assert_eq!(states, traj.states);
        assert!(read_trajectory_csv("t,S\n".as_bytes()).is_err());
        assert!(read_trajectory_csv("t,S,V,R,As,Rs\n1,2,3\n".as_bytes()).is_err());
    }

    fn valid_params() -> impl Strategy<Value = Parameters> {
        (0.0f64..0.1, 0.0f64..0.2, 0.0f64..0.1, 0.0f64..0.1, 0.0f64..0.1, 0.0f64..0.1, 0.0f64..1.0)
            .prop_map(|(b, s, g, p, d, m, l)| Parameters::from_array([b, s, g, p, d, m, l]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nsfd_preserves_positivity(
            init in proptest::array::uniform5(0.0f64..2000.0),
            p in valid_params(),
            h in prop::sample::select(vec![0.1, 1.0, 10.0, 100.0]),
        ) {
            let init = State::from_array(init);
            let traj = simulate(&init, &p, &StepConfig::nsfd(h, 200.0 * h).unwrap()).unwrap();
            prop_assert!(traj.states.iter().all(State::is_nonnegative));
        }

        #[test]
        fn nsfd_sfe_exact_for_any_step(n in 0.0f64..1e6, p in valid_params(), h in 1e-4f64..1e4) {
            prop_assert_eq!(nsfd_step(&State::scam_free(n), &p, h), State::scam_free(n));
        }
    }
}
