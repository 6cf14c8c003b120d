//! Continuous five-compartment scam-propagation model.
//!
//! The population splits into susceptibles `S`, victims `V`, recovered
//! victims `R`, active scammers `As` and removed scammers `Rs`:
//!
//! ```text
//! dS/dt  = -β S As + σ R
//! dV/dt  =  β S As - (γ + ψ) V
//! dR/dt  =  γ V - σ R
//! dAs/dt =  (δ - μ - λ) As + ψ V
//! dRs/dt =  λ As
//! ```
//!
//! Everything here is a pure function of its inputs. Time stepping lives in
//! [`crate::integrators`].

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default band around `R0 = 1` inside which the scam-free equilibrium is
/// reported as sitting on the threshold.
pub const DEFAULT_THRESHOLD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} is not a finite nonnegative rate")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("state component {name} = {value} is not a finite nonnegative count")]
    InvalidState { name: &'static str, value: f64 },
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(&'static str),
    #[error("next-generation matrix V is singular (det = {0})")]
    SingularV(f64),
    #[error("component {name} must be strictly positive, got {value}")]
    NonPositiveComponent { name: &'static str, value: f64 },
}

/// One of the seven model rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Beta,
    Sigma,
    Gamma,
    Psi,
    Delta,
    Mu,
    Lambda,
}

impl Param {
    /// Canonical ordering used for every per-parameter array and CSV column.
    pub const ALL: [Param; 7] =
        [Param::Beta, Param::Sigma, Param::Gamma, Param::Psi, Param::Delta, Param::Mu, Param::Lambda];

    pub fn name(self) -> &'static str {
        match self {
            Param::Beta => "beta",
            Param::Sigma => "sigma",
            Param::Gamma => "gamma",
            Param::Psi => "psi",
            Param::Delta => "delta",
            Param::Mu => "mu",
            Param::Lambda => "lambda",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Param::Beta => "Susceptibility rate",
            Param::Sigma => "Loss of resistance rate",
            Param::Gamma => "Insusceptibility rate",
            Param::Psi => "Victim defection rate",
            Param::Delta => "Scammer recruitment rate",
            Param::Mu => "Scammer dropout rate",
            Param::Lambda => "Scammer arrest rate",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Param::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown parameter `{s}`"))
    }
}

/// The seven nonnegative transition rates, all per day.
///
/// `beta` is per individual per day; the others are plain per-day rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub psi: f64,
    pub delta: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl Parameters {
    /// Posterior means of the calibrated model, used as nominal values.
    pub const POSTERIOR_MEANS: Parameters = Parameters {
        beta: 0.008425,
        sigma: 0.023868,
        gamma: 0.059366,
        psi: 0.000004,
        delta: 0.026109,
        mu: 0.016590,
        lambda: 0.016003,
    };

    pub fn new(
        beta: f64,
        sigma: f64,
        gamma: f64,
        psi: f64,
        delta: f64,
        mu: f64,
        lambda: f64,
    ) -> Result<Self, ModelError> {
        let p = Parameters { beta, sigma, gamma, psi, delta, mu, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for param in Param::ALL {
            let value = self.get(param);
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParameter { name: param.name(), value });
            }
        }
        Ok(())
    }

    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::Beta => self.beta,
            Param::Sigma => self.sigma,
            Param::Gamma => self.gamma,
            Param::Psi => self.psi,
            Param::Delta => self.delta,
            Param::Mu => self.mu,
            Param::Lambda => self.lambda,
        }
    }

    pub fn set(&mut self, param: Param, value: f64) {
        match param {
            Param::Beta => self.beta = value,
            Param::Sigma => self.sigma = value,
            Param::Gamma => self.gamma = value,
            Param::Psi => self.psi = value,
            Param::Delta => self.delta = value,
            Param::Mu => self.mu = value,
            Param::Lambda => self.lambda = value,
        }
    }

    pub fn with(mut self, param: Param, value: f64) -> Self {
        self.set(param, value);
        self
    }

    pub fn to_array(&self) -> [f64; 7] {
        Param::ALL.map(|p| self.get(p))
    }

    /// Builds parameters from an array in [`Param::ALL`] order, without validation.
    pub fn from_array(values: [f64; 7]) -> Self {
        let mut p = Parameters::POSTERIOR_MEANS;
        for (param, v) in Param::ALL.into_iter().zip(values) {
            p.set(param, v);
        }
        p
    }

    /// Net per-capita loss rate of active scammers, `μ + λ - δ`.
    pub fn scammer_net_loss(&self) -> f64 {
        self.mu + self.lambda - self.delta
    }

    /// `σ + μ + γ + λ + ψ`, the rate sum driving the NSFD denominator.
    pub fn rate_sum(&self) -> f64 {
        self.sigma + self.mu + self.gamma + self.lambda + self.psi
    }
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters::POSTERIOR_MEANS
    }
}

/// Compartment sizes at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub s: f64,
    pub v: f64,
    pub r: f64,
    pub a_s: f64,
    pub r_s: f64,
}

impl State {
    pub const NAMES: [&'static str; 5] = ["S", "V", "R", "As", "Rs"];

    pub const fn new(s: f64, v: f64, r: f64, a_s: f64, r_s: f64) -> Self {
        State { s, v, r, a_s, r_s }
    }

    /// The scam-free equilibrium `(n, 0, 0, 0, 0)`.
    pub const fn scam_free(n: f64) -> Self {
        State::new(n, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.s + self.v + self.r + self.a_s + self.r_s
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.s, self.v, self.r, self.a_s, self.r_s]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        State::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_array().iter().all(|&c| c >= 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in State::NAMES.into_iter().zip(self.to_array()) {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidState { name, value });
            }
        }
        Ok(())
    }
}

/// Right-hand side of the ODE system, in individuals per day.
pub fn rhs(state: &State, p: &Parameters) -> [f64; 5] {
    let infection = p.beta * state.s * state.a_s;
    [
        -infection + p.sigma * state.r,
        infection - p.gamma * state.v - p.psi * state.v,
        p.gamma * state.v - p.sigma * state.r,
        p.delta * state.a_s - p.mu * state.a_s - p.lambda * state.a_s + p.psi * state.v,
        p.lambda * state.a_s,
    ]
}

/// Scam reproduction number `βψN / ((γ+ψ)(μ+λ-δ))`.
///
/// The sign is kept when `μ + λ < δ`; callers decide how to read a negative value.
pub fn reproduction_number(p: &Parameters, n: f64) -> Result<f64, ModelError> {
    let victim_exit = p.gamma + p.psi;
    if victim_exit == 0.0 {
        return Err(ModelError::DegenerateDenominator("gamma + psi = 0"));
    }
    let scammer_loss = p.scammer_net_loss();
    if scammer_loss == 0.0 {
        return Err(ModelError::DegenerateDenominator("mu + lambda - delta = 0"));
    }
    Ok(p.beta * p.psi * n / (victim_exit * scammer_loss))
}

/// New-scam (`F`) and transition (`V`) matrices on the `(V, As)` subsystem
/// together with `K = F V⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextGenMatrices {
    pub f: Matrix2<f64>,
    pub v: Matrix2<f64>,
    pub k: Matrix2<f64>,
    pub spectral_radius: f64,
}

pub fn next_generation_matrix(p: &Parameters, n: f64) -> Result<NextGenMatrices, ModelError> {
    let f = Matrix2::new(0.0, p.beta * n, 0.0, 0.0);
    let v = Matrix2::new(p.gamma + p.psi, 0.0, -p.psi, p.scammer_net_loss());
    let det = v.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(ModelError::SingularV(det));
    }
    let v_inv = Matrix2::new(v[(1, 1)], -v[(0, 1)], -v[(1, 0)], v[(0, 0)]) / det;
    let k = f * v_inv;
    Ok(NextGenMatrices { f, v, k, spectral_radius: spectral_radius_2x2(&k) })
}

/// Largest eigenvalue modulus of a real 2×2 matrix.
fn spectral_radius_2x2(m: &Matrix2<f64>) -> f64 {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        (tr / 2.0 + root).abs().max((tr / 2.0 - root).abs())
    } else {
        // complex pair: |λ|² = det
        det.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    StableSFE,
    UnstableSFE,
    Threshold,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::StableSFE => "StableSFE",
            Classification::UnstableSFE => "UnstableSFE",
            Classification::Threshold => "Threshold",
        })
    }
}

/// Linearisation of the scam-free equilibrium on the `(V, As)` block.
///
/// The remaining three eigenvalues are `-σ` and a double zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub r0: f64,
    pub p1: f64,
    pub p2: f64,
    pub discriminant: f64,
    pub eigenvalue_pair: [f64; 2],
    pub classification: Classification,
}

/// Roots of `ε² - (p1+p2)ε + (p1 p2 - βNψ) = 0` and the resulting verdict.
///
/// When `μ + λ = δ` the reproduction number is infinite (or undefined if
/// `βψN = 0`); the first case is unstable, the second sits on the threshold.
pub fn classify_sfe_stability(p: &Parameters, n: f64, tol: f64) -> StabilityReport {
    let p1 = -(p.gamma + p.psi);
    let p2 = p.delta - p.mu - p.lambda;
    let coupling = p.beta * n * p.psi;
    let discriminant = (p1 - p2).powi(2) + 4.0 * coupling;
    let half_sum = (p1 + p2) / 2.0;
    let half_root = discriminant.max(0.0).sqrt() / 2.0;
    let eigenvalue_pair = [half_sum + half_root, half_sum - half_root];

    let r0 = match reproduction_number(p, n) {
        Ok(r0) => r0,
        Err(_) if p2 == 0.0 && coupling > 0.0 => f64::INFINITY,
        Err(_) => f64::NAN,
    };

    let classification = if r0.is_nan() || (r0 - 1.0).abs() <= tol {
        Classification::Threshold
    } else if r0 < 1.0 && p2 < 0.0 && p1 + p2 < 0.0 {
        Classification::StableSFE
    } else {
        Classification::UnstableSFE
    };

    StabilityReport { r0, p1, p2, discriminant, eigenvalue_pair, classification }
}

/// Linear Lyapunov candidate `a1 V + a2 As` with `a1 = a2 ψ / (γ + ψ)`.
///
/// If `γ + ψ = 0` then `ψ = 0` and the victim weight is taken as zero.
pub fn lyapunov_l(state: &State, p: &Parameters, a2: f64) -> f64 {
    let exit = p.gamma + p.psi;
    let a1 = if exit > 0.0 { a2 * p.psi / exit } else { 0.0 };
    a1 * state.v + a2 * state.a_s
}

/// Volterra-type function `Σ (x/x* - ln(x/x*) - 1)` over the five compartments.
pub fn lyapunov_m(state: &State, reference: &State) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for ((name, x), x_ref) in State::NAMES.into_iter().zip(state.to_array()).zip(reference.to_array()) {
        for value in [x, x_ref] {
            if value.is_nan() || value <= 0.0 {
                return Err(ModelError::NonPositiveComponent { name, value });
            }
        }
        let ratio = x / x_ref;
        total += ratio - ratio.ln() - 1.0;
    }
    Ok(total)
}

/// `R0 - 1`: negative in the scam-free regime, positive in the endemic one.
pub fn see_condition(p: &Parameters, n: f64) -> Result<f64, ModelError> {
    Ok(reproduction_number(p, n)? - 1.0)
}

/// Population size `N*` at which `R0 = 1`.
pub fn threshold_population(p: &Parameters) -> Result<f64, ModelError> {
    let coupling = p.beta * p.psi;
    if coupling == 0.0 {
        return Err(ModelError::DegenerateDenominator("beta * psi = 0"));
    }
    Ok((p.gamma + p.psi) * p.scammer_net_loss() / coupling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const MEANS: Parameters = Parameters::POSTERIOR_MEANS;

    #[test]
    fn rhs_vanishes_at_origin_and_sfe() {
        assert_eq!(rhs(&State::default(), &MEANS), [0.0; 5]);
        assert_eq!(rhs(&State::scam_free(1234.5), &MEANS), [0.0; 5]);
    }

    #[test]
    fn rhs_hand_evaluated() {
        // (100, 10, 5, 2, 0) at the posterior means, term by term.
        let st = State::new(100.0, 10.0, 5.0, 2.0, 0.0);
        let d = rhs(&st, &MEANS);
        let infection = 0.008425 * 100.0 * 2.0; // 1.685
        let expected = [
            -1.685 + 0.023868 * 5.0,
            1.685 - 0.059366 * 10.0 - 0.000004 * 10.0,
            0.059366 * 10.0 - 0.023868 * 5.0,
            (0.026109 - 0.016590 - 0.016003) * 2.0 + 0.000004 * 10.0,
            0.016003 * 2.0,
        ];
        assert_relative_eq!(infection, 1.685, epsilon = 1e-15);
        for (got, want) in d.iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        assert_relative_eq!(d.iter().sum::<f64>(), 0.019038, epsilon = 1e-14);
    }

    #[test]
    fn reproduction_number_examples() {
        let zero_psi = MEANS.with(Param::Psi, 0.0);
        assert_eq!(reproduction_number(&zero_psi, 1000.0).unwrap(), 0.0);
        let zero_beta = MEANS.with(Param::Beta, 0.0);
        assert_eq!(reproduction_number(&zero_beta, 1000.0).unwrap(), 0.0);

        // 0.008425 * 0.000004 * 1000 / (0.059370 * 0.006484)
        let r0 = reproduction_number(&MEANS, 1000.0).unwrap();
        assert_relative_eq!(r0, 3.37e-5 / (0.059370 * 0.006484), max_relative = 1e-9);
        assert!((r0 - 0.0875).abs() < 1e-4);
    }

    #[test]
    fn reproduction_number_degenerate() {
        let p = Parameters::new(0.1, 0.1, 0.0, 0.0, 0.1, 0.1, 0.1).unwrap();
        assert!(matches!(reproduction_number(&p, 10.0), Err(ModelError::DegenerateDenominator(_))));
        let p = Parameters::new(0.1, 0.1, 0.1, 0.1, 0.2, 0.1, 0.1).unwrap();
        assert!(matches!(reproduction_number(&p, 10.0), Err(ModelError::DegenerateDenominator(_))));
        assert!(matches!(next_generation_matrix(&p, 10.0), Err(ModelError::SingularV(_))));
    }

    #[test]
    fn supercritical_recruitment_is_signed_and_unstable() {
        let p = MEANS.with(Param::Delta, 0.05);
        let r0 = reproduction_number(&p, 1000.0).unwrap();
        assert!(r0 < 0.0);
        let report = classify_sfe_stability(&p, 1000.0, DEFAULT_THRESHOLD_TOL);
        assert_eq!(report.classification, Classification::UnstableSFE);
        assert!(report.eigenvalue_pair[0] > 0.0);
    }

    #[test]
    fn next_generation_matrix_structure() {
        let ngm = next_generation_matrix(&MEANS.with(Param::Psi, 0.0), 1000.0).unwrap();
        assert_eq!(ngm.spectral_radius, 0.0);
        assert_eq!(ngm.k[(0, 0)], 0.0);

        let ngm = next_generation_matrix(&MEANS, 1000.0).unwrap();
        assert_eq!(ngm.f[(1, 0)], 0.0);
        assert_eq!(ngm.f[(1, 1)], 0.0);
        assert_eq!(ngm.k[(1, 0)], 0.0);
        assert_eq!(ngm.k[(1, 1)], 0.0);
        // printed closed form of K
        let scale = 1.0 / ((0.059370) * 0.006484);
        assert_relative_eq!(ngm.k[(0, 0)], 0.008425 * 1000.0 * 0.000004 * scale, max_relative = 1e-9);
        assert_relative_eq!(ngm.k[(0, 1)], 0.008425 * 1000.0 * 0.059370 * scale, max_relative = 1e-9);
        let r0 = reproduction_number(&MEANS, 1000.0).unwrap();
        assert_relative_eq!(ngm.spectral_radius, r0, max_relative = 1e-12);
    }

    #[test]
    fn stability_examples() {
        let p = MEANS.with(Param::Psi, 0.0);
        let rep = classify_sfe_stability(&p, 1000.0, DEFAULT_THRESHOLD_TOL);
        let mut roots = rep.eigenvalue_pair;
        roots.sort_by(f64::total_cmp);
        let mut expect = [rep.p1, rep.p2];
        expect.sort_by(f64::total_cmp);
        assert_relative_eq!(roots[0], expect[0], epsilon = 1e-15);
        assert_relative_eq!(roots[1], expect[1], epsilon = 1e-15);
        assert!(roots[1] < 0.0);
        assert_eq!(rep.classification, Classification::StableSFE);

        let rep = classify_sfe_stability(&MEANS, 1000.0, DEFAULT_THRESHOLD_TOL);
        assert!((rep.r0 - 0.0875).abs() < 1e-4);
        assert_eq!(rep.classification, Classification::StableSFE);
        assert_relative_eq!(rep.p1, -0.059370, epsilon = 1e-15);
        assert_relative_eq!(rep.p2, -0.006484, epsilon = 1e-15);

        let n_star = threshold_population(&MEANS).unwrap();
        let rep = classify_sfe_stability(&MEANS, n_star, DEFAULT_THRESHOLD_TOL);
        assert_eq!(rep.classification, Classification::Threshold);
        assert!(see_condition(&MEANS, n_star).unwrap().abs() < 1e-12);

        let rep = classify_sfe_stability(&MEANS, 2.0 * n_star, DEFAULT_THRESHOLD_TOL);
        assert_eq!(rep.classification, Classification::UnstableSFE);
        assert!(rep.eigenvalue_pair[0] > 0.0);
    }

    #[test]
    fn lyapunov_l_examples() {
        assert_eq!(lyapunov_l(&State::new(10.0, 0.0, 3.0, 0.0, 1.0), &MEANS, 1.0), 0.0);
        let p = MEANS.with(Param::Gamma, 0.06).with(Param::Psi, 0.0);
        assert_eq!(lyapunov_l(&State::new(0.0, 10.0, 0.0, 5.0, 0.0), &p, 1.0), 5.0);
        let got = lyapunov_l(&State::new(0.0, 10.0, 0.0, 5.0, 0.0), &MEANS, 2.0);
        assert_relative_eq!(got, 2.0 * (0.000004 / 0.059370) * 10.0 + 10.0, max_relative = 1e-12);
    }

    #[test]
    fn lyapunov_m_examples() {
        let x = State::new(3.0, 1.0, 2.0, 0.5, 7.0);
        assert_eq!(lyapunov_m(&x, &x).unwrap(), 0.0);
        let doubled = State { r: 4.0, ..x };
        assert_relative_eq!(lyapunov_m(&doubled, &x).unwrap(), 2.0 - 2f64.ln() - 1.0, epsilon = 1e-15);
        assert!((lyapunov_m(&doubled, &x).unwrap() - 0.30685).abs() < 1e-5);
        let bad = State { a_s: 0.0, ..x };
        assert!(matches!(lyapunov_m(&bad, &x), Err(ModelError::NonPositiveComponent { name: "As", .. })));
        assert!(lyapunov_m(&x, &bad).is_err());
    }

    #[test]
    fn see_condition_examples() {
        assert_eq!(see_condition(&MEANS.with(Param::Psi, 0.0), 500.0).unwrap(), -1.0);
        let c = see_condition(&MEANS, 1000.0).unwrap();
        assert!((c + 0.9125).abs() < 1e-4);
    }

    #[test]
    fn parameter_validation() {
        assert!(Parameters::new(-0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Parameters::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(State::new(1.0, -1e-12, 0.0, 0.0, 0.0).validate().is_err());
        assert_eq!("lambda".parse::<Param>().unwrap(), Param::Lambda);
        assert!("lamda".parse::<Param>().is_err());
        let arr = MEANS.to_array();
        assert_eq!(Parameters::from_array(arr), MEANS);
    }

    fn params_strategy() -> impl Strategy<Value = Parameters> {
        proptest::array::uniform7(0.0f64..1.0).prop_map(Parameters::from_array)
    }

    fn state_strategy() -> impl Strategy<Value = State> {
        proptest::array::uniform5(0.0f64..1e4).prop_map(State::from_array)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn total_derivative_is_net_recruitment(st in state_strategy(), p in params_strategy()) {
            let d = rhs(&st, &p);
            let sum: f64 = d.iter().sum();
            let expected = (p.delta - p.mu) * st.a_s;
            let scale = d.iter().map(|x| x.abs()).fold(expected.abs(), f64::max).max(1e-300);
            prop_assert!((sum - expected).abs() <= 1e-12 * scale);
        }

        #[test]
        fn sfe_is_fixed_point(n in 0.0f64..1e6, p in params_strategy()) {
            prop_assert_eq!(rhs(&State::scam_free(n), &p), [0.0; 5]);
        }

        #[test]
        fn boundary_flux_points_inward(st in state_strategy(), p in params_strategy(), which in 0usize..5) {
            let mut a = st.to_array();
            a[which] = 0.0;
            let d = rhs(&State::from_array(a), &p);
            prop_assert!(d[which] >= 0.0);
        }

        #[test]
        fn spectral_radius_matches_closed_form(p in params_strategy(), n in 1.0f64..1e5) {
            prop_assume!(p.mu + p.lambda > p.delta && p.gamma + p.psi > 0.0);
            let ngm = next_generation_matrix(&p, n).unwrap();
            let r0 = reproduction_number(&p, n).unwrap();
            prop_assert!((ngm.spectral_radius - r0).abs() <= 1e-10 * r0.abs().max(f64::MIN_POSITIVE));
            prop_assert_eq!(ngm.k[(1, 0)], 0.0);
            prop_assert_eq!(ngm.k[(1, 1)], 0.0);
        }

        #[test]
        fn discriminant_nonnegative(p in params_strategy(), n in 0.0f64..1e5) {
            let rep = classify_sfe_stability(&p, n, DEFAULT_THRESHOLD_TOL);
            prop_assert!(rep.discriminant >= 0.0);
        }

        #[test]
        fn lyapunov_m_positive_off_reference(
            x in proptest::array::uniform5(0.01f64..100.0),
            y in proptest::array::uniform5(0.01f64..100.0),
        ) {
            let m = lyapunov_m(&State::from_array(x), &State::from_array(y)).unwrap();
            if x == y {
                prop_assert_eq!(m, 0.0);
            } else {
                prop_assert!(m > 0.0);
            }
        }
    }
}
