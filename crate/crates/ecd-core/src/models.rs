//! The benchmark systems: Landau–Zener–Majorana sweep, two-qubit Bell preparation and a three-level sweep.

use std::fmt;
use std::str::FromStr;

use crate::algebra::ControlSet;
use crate::cdfield::{cd_exact, ControlSystem, Schedule, DEFAULT_GAP_TOL};
use crate::error::{Error, Result};
use crate::linalg::{pauli, CMatrix, C64};

/// ε (sweep span over gap), τ (duration in inverse gap units), d (three-level splitting).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub tau: f64,
    pub d: f64,
}

impl ModelParams {
    pub fn new(epsilon: f64, tau: f64) -> Self {
        Self { epsilon, tau, d: 0.0 }
    }

    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::OutOfRange { what: "epsilon", value: self.epsilon });
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::OutOfRange { what: "tau", value: self.tau });
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::OutOfRange { what: "d", value: self.d });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Lzm,
    TwoQubit,
    ThreeLevel,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lzm, ModelKind::TwoQubit, ModelKind::ThreeLevel];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Lzm => "lzm",
            ModelKind::TwoQubit => "two_qubit",
            ModelKind::ThreeLevel => "three_level",
        }
    }

    pub fn system(&self, params: &ModelParams) -> Result<ControlSystem> {
        match self {
            ModelKind::Lzm => lzm(params),
            ModelKind::TwoQubit => two_qubit(params),
            ModelKind::ThreeLevel => three_level(params),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model '{s}' (expected lzm|two_qubit|three_level)")))
    }
}

/// Channels (σz, σx) with u_z = ε(s − 1/2)/2 and u_x = 1/2.
pub fn lzm(params: &ModelParams) -> Result<ControlSystem> {
    params.validate()?;
    let eps = params.epsilon;
    let controls = ControlSet::new(vec![pauli::z(), pauli::x()], vec!["sigma_z".into(), "sigma_x".into()])?;
    ControlSystem::new(controls, vec![Schedule::linear(-eps / 4.0, eps / 2.0), Schedule::constant(0.5)], params.tau)
}

/// σ_y coefficient of the LZM counterdiabatic field.
pub fn lzm_fcd(params: &ModelParams) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let (eps, tau) = (params.epsilon, params.tau);
    move |s| {
        let x = eps * (s - 0.5);
        -eps / (2.0 * tau * (x * x + 1.0))
    }
}

/// exp(−πτ / 2ε)
pub fn lz_formula(params: &ModelParams) -> f64 {
    (-std::f64::consts::PI * params.tau / (2.0 * params.epsilon)).exp()
}

pub fn h3() -> CMatrix {
    let (x, y) = (pauli::x(), pauli::y());
    &x.kron(&y) + &y.kron(&x)
}

/// H(s) = ε(1 − s) H₁ + H₂ with H₁ = −(Z₁ + Z₂) and H₂ = −(X₁X₂ + Z₁Z₂).
pub fn two_qubit(params: &ModelParams) -> Result<ControlSystem> {
    params.validate()?;
    let (x, z, id) = (pauli::x(), pauli::z(), pauli::id());
    let h1 = (&z.kron(&id) + &id.kron(&z)).scale_real(-1.0);
    let h2 = (&x.kron(&x) + &z.kron(&z)).scale_real(-1.0);
    let controls = ControlSet::new(vec![h1, h2], vec!["local".into(), "interaction".into()])?;
    let eps = params.epsilon;
    ControlSystem::new(controls, vec![Schedule::linear(eps, -eps), Schedule::constant(1.0)], params.tau)
}

/// H₃ coefficient of the two-qubit counterdiabatic field.
pub fn two_qubit_fcd(params: &ModelParams) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let (eps, tau) = (params.epsilon, params.tau);
    move |s| {
        let b = 2.0 * eps * (1.0 - s);
        eps / (2.0 * tau * (b * b + 1.0))
    }
}

/// Closed-form two-qubit H_CD from the rotation angle θ(s) = ½ arctan[1/(2ε(1 − s))].
pub fn two_qubit_cd_analytic(params: &ModelParams, s: f64) -> Result<CMatrix> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange { what: "s", value: s });
    }
    let eps = params.epsilon;
    let b = 2.0 * eps * (1.0 - s);
    // H₃ acts as twice the rotation generator on the {|00⟩, |11⟩} block.
    let dtheta = 0.5 * (2.0 * eps) / (1.0 + b * b);
    Ok(h3().scale_real(dtheta / (2.0 * params.tau)))
}

pub fn two_qubit_theta(params: &ModelParams, s: f64) -> f64 {
    0.5 * (1.0f64).atan2(2.0 * params.epsilon * (1.0 - s))
}

/// (|01⟩ ± |10⟩)/√2
pub fn two_qubit_decoupled_states() -> [Vec<C64>; 2] {
    let r = 1.0 / 2f64.sqrt();
    let z = C64::new(0.0, 0.0);
    [
        vec![z, C64::new(r, 0.0), C64::new(r, 0.0), z],
        vec![z, C64::new(r, 0.0), C64::new(-r, 0.0), z],
    ]
}

fn elementary_x(n: usize, a: usize, b: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    m[(a, b)] = C64::new(1.0, 0.0);
    m[(b, a)] = C64::new(1.0, 0.0);
    m
}

fn elementary_y(n: usize, a: usize, b: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    m[(a, b)] = C64::new(0.0, -1.0);
    m[(b, a)] = C64::new(0.0, 1.0);
    m
}

/// Three-level controls in the order used by the corrections: sweep, couplings 1–2 and 2–3, splitting.
pub const THREE_LEVEL_SWEEP: usize = 0;
pub const THREE_LEVEL_X12: usize = 1;
pub const THREE_LEVEL_X23: usize = 2;
pub const THREE_LEVEL_SPLIT: usize = 3;

/// H(s) = ε(s − ½) diag(1,0,−1) + X₁₂ + X₂₃ + d diag(1,−2,1).
pub fn three_level(params: &ModelParams) -> Result<ControlSystem> {
    params.validate()?;
    let controls = ControlSet::new(
        vec![
            CMatrix::diag_real(&[1.0, 0.0, -1.0]),
            elementary_x(3, 0, 1),
            elementary_x(3, 1, 2),
            CMatrix::diag_real(&[1.0, -2.0, 1.0]),
        ],
        vec!["sweep".into(), "x12".into(), "x23".into(), "split".into()],
    )?;
    let eps = params.epsilon;
    ControlSystem::new(
        controls,
        vec![
            Schedule::linear(-eps / 2.0, eps),
            Schedule::constant(1.0),
            Schedule::constant(1.0),
            Schedule::constant(params.d),
        ],
        params.tau,
    )
}

/// Y_ab generators (entry (a,b) = −i) used to read off three-level CD components.
pub fn three_level_y(a: usize, b: usize) -> CMatrix {
    elementary_y(3, a, b)
}

/// (f¹², f²³, f¹³) with H_CD = f¹² Y₁₂ + f²³ Y₂₃ + f¹³ Y₁₃.
pub fn three_level_fcd(sys: &ControlSystem, s: f64) -> Result<[f64; 3]> {
    let hcd = cd_exact(sys, s, DEFAULT_GAP_TOL)?;
    let coeff = |a: usize, b: usize| (C64::new(0.0, 1.0) * hcd[(a, b)]).re;
    Ok([coeff(0, 1), coeff(1, 2), coeff(0, 2)])
}
