//! Effective counterdiabatic schedules built from oscillating controls.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::info;

use crate::algebra::ControlSet;
use crate::cdfield::{cd_exact, ControlSystem, DEFAULT_GAP_TOL};
use crate::error::{Error, Result};
use crate::linalg::{commutator, frobenius, hermitian_eig, CMatrix, NormConvention, C64, I};
use crate::models::{three_level_fcd, THREE_LEVEL_SWEEP, THREE_LEVEL_X12, THREE_LEVEL_X23};
use crate::quad::UnitRule;

/// Amplitudes of every term of a schedule at rescaled time s.
pub type AmplitudeFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

const SIGN_CHECK_POINTS: usize = 2001;
const REACH_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// H_E alone.
    Standalone,
    /// H + H_E.
    OnTop,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Standalone => "standalone",
            Mode::OnTop => "ontop",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standalone" => Ok(Mode::Standalone),
            "ontop" => Ok(Mode::OnTop),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}' (expected standalone|ontop)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Wave {
    Sin,
    Cos,
}

/// One harmonic contribution gain·a(s)·wave(jωsτ + phase) to channel `channel`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicTerm {
    pub channel: usize,
    pub harmonic: u32,
    pub wave: Wave,
    /// Index into the schedule's amplitude vector.
    pub amplitude: usize,
    pub gain: f64,
    pub phase: f64,
}

impl HarmonicTerm {
    pub fn new(channel: usize, harmonic: u32, wave: Wave, amplitude: usize) -> Self {
        Self { channel, harmonic, wave, amplitude, gain: 1.0, phase: 0.0 }
    }

    fn oscillation(&self, arg: f64) -> f64 {
        let x = self.harmonic as f64 * arg + self.phase;
        match self.wave {
            Wave::Sin => x.sin(),
            Wave::Cos => x.cos(),
        }
    }
}

/// Oscillating corrections c_k(s) = ω^X Σ terms on the channels of a base system.
#[derive(Clone)]
pub struct ECDSchedule {
    base: ControlSystem,
    omega: f64,
    exponent: f64,
    amplitudes: AmplitudeFn,
    terms: Vec<HarmonicTerm>,
    mode: Mode,
}

impl fmt::Debug for ECDSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ECDSchedule")
            .field("base", &self.base)
            .field("omega", &self.omega)
            .field("exponent", &self.exponent)
            .field("terms", &self.terms)
            .field("mode", &self.mode)
            .finish()
    }
}

impl ECDSchedule {
    pub fn new(
        base: ControlSystem,
        omega: f64,
        exponent: f64,
        amplitudes: AmplitudeFn,
        terms: Vec<HarmonicTerm>,
        mode: Mode,
    ) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::OutOfRange { what: "omega", value: omega });
        }
        let channels = base.controls().len();
        if let Some(t) = terms.iter().find(|t| t.channel >= channels) {
            return Err(Error::InvalidArgument(format!("correction channel {} not in the base control set", t.channel)));
        }
        if let Some(t) = terms.iter().find(|t| t.harmonic == 0) {
            return Err(Error::InvalidArgument(format!("harmonic order must be positive on channel {}", t.channel)));
        }
        Ok(Self { base, omega, exponent, amplitudes, terms, mode })
    }

    pub fn base(&self) -> &ControlSystem {
        &self.base
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn terms(&self) -> &[HarmonicTerm] {
        &self.terms
    }

    pub fn tau(&self) -> f64 {
        self.base.tau()
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    /// floor(ωτ / 2π)
    pub fn n_periods(&self) -> usize {
        n_periods(self.omega, self.tau())
    }

    pub fn max_harmonic(&self) -> u32 {
        self.terms.iter().map(|t| t.harmonic).max().unwrap_or(0)
    }

    /// Oscillation cycles of the fastest harmonic over the run.
    pub fn cycles(&self) -> f64 {
        self.omega * self.tau() * self.max_harmonic() as f64 / (2.0 * PI)
    }

    pub fn amplitudes_at(&self, s: f64) -> Vec<f64> {
        (self.amplitudes)(s)
    }

    /// c_k at rescaled time s for every base channel.
    pub fn correction_coefficients(&self, s: f64) -> Vec<f64> {
        let amps = (self.amplitudes)(s);
        self.coefficients_with(&amps, self.omega * self.tau() * s)
    }

    fn coefficients_with(&self, amps: &[f64], arg: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.base.controls().len()];
        let pre = self.omega.powf(self.exponent);
        for t in &self.terms {
            c[t.channel] += pre * t.gain * amps[t.amplitude] * t.oscillation(arg);
        }
        c
    }

    pub fn correction(&self, s: f64) -> CMatrix {
        self.base.controls().combine(&self.correction_coefficients(s))
    }

    /// Generator applied by the engine: H_E, or H + H_E.
    pub fn hamiltonian(&self, s: f64) -> CMatrix {
        let mut c = self.correction_coefficients(s);
        if self.mode == Mode::OnTop {
            for (ck, uk) in c.iter_mut().zip(self.base.coefficients(s)) {
                *ck += uk;
            }
        }
        self.base.controls().combine(&c)
    }

    /// H_E over one period in physical time t ∈ [0, T] with amplitudes frozen at `s_mid`.
    pub fn frozen_correction(&self, s_mid: f64) -> impl Fn(f64) -> CMatrix + '_ {
        let amps = (self.amplitudes)(s_mid);
        move |t| self.base.controls().combine(&self.coefficients_with(&amps, self.omega * t))
    }

    /// Copy with the gain and phase of every term matching `select` replaced.
    pub fn perturbed(&self, select: impl Fn(&HarmonicTerm) -> bool, gain: f64, phase: f64) -> Self {
        let mut out = self.clone();
        for t in out.terms.iter_mut().filter(|t| select(t)) {
            t.gain = gain;
            t.phase = phase;
        }
        out
    }
}

pub fn n_periods(omega: f64, tau: f64) -> usize {
    (omega * tau / (2.0 * PI)).floor().max(0.0) as usize
}

/// Largest ω' ≤ ω fitting an integer number of periods in the run, with that number.
pub fn snap_omega(omega: f64, tau: f64) -> Result<(f64, usize)> {
    let n = n_periods(omega, tau);
    if n < 1 {
        return Err(Error::BudgetInfeasible(format!(
            "omega = {omega:.6} fits no full period in tau = {tau} (needs omega >= {:.6})",
            2.0 * PI / tau
        )));
    }
    Ok((2.0 * PI * n as f64 / tau, n))
}

fn require_period(omega: f64, tau: f64) -> Result<()> {
    if n_periods(omega, tau) < 1 {
        return Err(Error::OutOfRange { what: "omega (no full period fits)", value: omega });
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// First-order su(2) recipe: sign(f)√|f| cos on `cos_ch`, √|f| sin on `sin_ch`, X = ½.
/// `fcd` is the coefficient along K = (i/2)[H_cos, H_sin].
pub fn synth_su2_first_order(
    base: &ControlSystem,
    fcd: impl Fn(f64) -> f64 + Send + Sync + 'static,
    omega: f64,
    gens: (usize, usize),
    mode: Mode,
) -> Result<ECDSchedule> {
    su2_schedule(base, Arc::new(fcd), omega, gens, mode, false)
}

/// First-order recipe plus −4√|f| sin(2ωt) on the sine channel, cancelling the third Magnus term.
pub fn synth_su2_third_order(
    base: &ControlSystem,
    fcd: impl Fn(f64) -> f64 + Send + Sync + 'static,
    omega: f64,
    gens: (usize, usize),
    mode: Mode,
) -> Result<ECDSchedule> {
    su2_schedule(base, Arc::new(fcd), omega, gens, mode, true)
}

fn su2_schedule(
    base: &ControlSystem,
    fcd: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    omega: f64,
    (cos_ch, sin_ch): (usize, usize),
    mode: Mode,
    third_order: bool,
) -> Result<ECDSchedule> {
    require_period(omega, base.tau())?;
    if cos_ch == sin_ch {
        return Err(Error::InvalidArgument("su(2) recipe needs two distinct channels".into()));
    }
    let amplitudes: AmplitudeFn = Arc::new(move |s| {
        let f = fcd(s);
        let a = f.abs().sqrt();
        vec![a, sign(f) * a]
    });
    let mut terms = vec![HarmonicTerm::new(cos_ch, 1, Wave::Cos, 1), HarmonicTerm::new(sin_ch, 1, Wave::Sin, 0)];
    if third_order {
        terms.push(HarmonicTerm { gain: -4.0, ..HarmonicTerm::new(sin_ch, 2, Wave::Sin, 0) });
    }
    ECDSchedule::new(base.clone(), omega, 0.5, amplitudes, terms, mode)
}

/// Two-qubit recipe: c₁ = −√(|f|ω) cos on H₁ and c₂ = √(|f|ω) sin on H₂ for f > 0,
/// where f is the H₃ coefficient of H_CD and [H₁, H₂] = 2iH₃.
pub fn synth_two_qubit(
    base: &ControlSystem,
    fcd: impl Fn(f64) -> f64 + Send + Sync + 'static,
    omega: f64,
    mode: Mode,
) -> Result<ECDSchedule> {
    if base.dim() != 4 || base.controls().len() != 2 {
        return Err(Error::InvalidArgument("two-qubit recipe needs the two-channel 4-level system".into()));
    }
    su2_schedule(base, Arc::new(move |s| -fcd(s)), omega, (0, 1), mode, false)
}

pub type TripleFn = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

/// Three-level recipe on channels (x12, x23, sweep):
/// c₁ = A cos ωt − B cos 2ωt, c₂ = C sin ωt − D cos 3ωt, c₃ = B sin 2ωt + D sin 3ωt.
pub fn synth_three_level(
    base: &ControlSystem,
    fcd12: impl Fn(f64) -> f64 + Send + Sync + 'static,
    fcd23: impl Fn(f64) -> f64 + Send + Sync + 'static,
    fcd13: impl Fn(f64) -> f64 + Send + Sync + 'static,
    omega: f64,
    mode: Mode,
) -> Result<ECDSchedule> {
    three_level_schedule(base, Arc::new(move |s| [fcd12(s), fcd23(s), fcd13(s)]), omega, mode)
}

/// Three-level recipe with the CD components taken from the exact CD field of `base`.
pub fn synth_three_level_exact(base: &ControlSystem, omega: f64, mode: Mode) -> Result<ECDSchedule> {
    let sys = base.clone();
    three_level_schedule(
        base,
        Arc::new(move |s| three_level_fcd(&sys, s).expect("three-level spectrum is nondegenerate")),
        omega,
        mode,
    )
}

fn three_level_schedule(base: &ControlSystem, f: TripleFn, omega: f64, mode: Mode) -> Result<ECDSchedule> {
    require_period(omega, base.tau())?;
    if base.dim() != 3 || base.controls().len() <= THREE_LEVEL_X23 {
        return Err(Error::InvalidArgument("three-level recipe needs the three-level control set".into()));
    }
    let mut crossings = 0;
    let mut last13 = 0.0;
    for k in 0..SIGN_CHECK_POINTS {
        let s = k as f64 / (SIGN_CHECK_POINTS - 1) as f64;
        let [f12, f23, f13] = f(s);
        if f12 > 0.0 {
            return Err(Error::SignViolation { which: "f12", s, value: f12 });
        }
        if f23 > 0.0 {
            return Err(Error::SignViolation { which: "f23", s, value: f23 });
        }
        if f13 != 0.0 {
            if last13 != 0.0 && sign(f13) != sign(last13) {
                crossings += 1;
            }
            last13 = f13;
        }
    }
    if crossings > 0 {
        info!("f13 changes sign {crossings} time(s); amplitudes follow the interpolated sign");
    }
    // amplitude vector: [A, B, C, D]
    let amplitudes: AmplitudeFn = Arc::new(move |s| {
        let [f12, f23, f13] = f(s);
        vec![
            -sign(f13) * (2.0 * f13.abs()).sqrt(),
            2.0 * f12.abs().sqrt(),
            (2.0 * f13.abs()).sqrt(),
            (6.0 * f23.abs()).sqrt(),
        ]
    });
    let terms = vec![
        HarmonicTerm::new(THREE_LEVEL_X12, 1, Wave::Cos, 0),
        HarmonicTerm { gain: -1.0, ..HarmonicTerm::new(THREE_LEVEL_X12, 2, Wave::Cos, 1) },
        HarmonicTerm::new(THREE_LEVEL_X23, 1, Wave::Sin, 2),
        HarmonicTerm { gain: -1.0, ..HarmonicTerm::new(THREE_LEVEL_X23, 3, Wave::Cos, 3) },
        HarmonicTerm::new(THREE_LEVEL_SWEEP, 2, Wave::Sin, 1),
        HarmonicTerm::new(THREE_LEVEL_SWEEP, 3, Wave::Sin, 3),
    ];
    ECDSchedule::new(base.clone(), omega, 0.5, amplitudes, terms, mode)
}

/// Per-channel, per-harmonic sine/cosine amplitudes sampled at period midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierAnsatz {
    pub omega: f64,
    pub harmonics: usize,
    pub exponent: f64,
    pub s_nodes: Vec<f64>,
    /// `amplitudes[node][channel][harmonic - 1] = (A, B)`, A on sin and B on cos.
    pub amplitudes: Vec<Vec<Vec<(f64, f64)>>>,
}

impl FourierAnsatz {
    /// A single frozen amplitude set, valid for every s.
    pub fn frozen(omega: f64, exponent: f64, amplitudes: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let harmonics = amplitudes.first().map(|c| c.len()).unwrap_or(0);
        if harmonics == 0 || amplitudes.iter().any(|c| c.len() != harmonics) {
            return Err(Error::InvalidArgument("every channel needs the same positive harmonic count".into()));
        }
        if !(omega > 0.0) {
            return Err(Error::OutOfRange { what: "omega", value: omega });
        }
        Ok(Self { omega, harmonics, exponent, s_nodes: vec![0.5], amplitudes: vec![amplitudes] })
    }

    pub fn channels(&self) -> usize {
        self.amplitudes.first().map(|n| n.len()).unwrap_or(0)
    }

    /// Linear interpolation between midpoint samples, held constant outside them.
    pub fn amplitude_at(&self, s: f64, channel: usize, harmonic: usize) -> (f64, f64) {
        let j = harmonic - 1;
        let nodes = &self.s_nodes;
        let at = |k: usize| self.amplitudes[k][channel][j];
        if nodes.len() == 1 || s <= nodes[0] {
            return at(0);
        }
        let last = nodes.len() - 1;
        if s >= nodes[last] {
            return at(last);
        }
        let k = nodes.partition_point(|&x| x <= s) - 1;
        let w = (s - nodes[k]) / (nodes[k + 1] - nodes[k]);
        let (a0, b0) = at(k);
        let (a1, b1) = at(k + 1);
        (a0 + w * (a1 - a0), b0 + w * (b1 - b0))
    }

    /// c_k(t) over one period with amplitudes frozen at s.
    pub fn frozen_coefficients(&self, s: f64, t: f64) -> Vec<f64> {
        let pre = self.omega.powf(self.exponent);
        (0..self.channels())
            .map(|k| {
                (1..=self.harmonics)
                    .map(|j| {
                        let (a, b) = self.amplitude_at(s, k, j);
                        let x = j as f64 * self.omega * t;
                        pre * (a * x.sin() + b * x.cos())
                    })
                    .sum()
            })
            .collect()
    }

    /// Schedule on `base` with ansatz channel k driving base channel `channel_map[k]`.
    pub fn to_schedule(&self, base: &ControlSystem, channel_map: &[usize], mode: Mode) -> Result<ECDSchedule> {
        if channel_map.len() != self.channels() {
            return Err(Error::InvalidArgument("channel map length differs from ansatz channels".into()));
        }
        let mut terms = Vec::new();
        for (k, &ch) in channel_map.iter().enumerate() {
            for j in 1..=self.harmonics {
                let idx = 2 * (k * self.harmonics + j - 1);
                terms.push(HarmonicTerm::new(ch, j as u32, Wave::Sin, idx));
                terms.push(HarmonicTerm::new(ch, j as u32, Wave::Cos, idx + 1));
            }
        }
        let ansatz = Arc::new(self.clone());
        let amplitudes: AmplitudeFn = Arc::new(move |s| {
            let mut out = Vec::with_capacity(2 * ansatz.channels() * ansatz.harmonics);
            for k in 0..ansatz.channels() {
                for j in 1..=ansatz.harmonics {
                    let (a, b) = ansatz.amplitude_at(s, k, j);
                    out.push(a);
                    out.push(b);
                }
            }
            out
        });
        ECDSchedule::new(base.clone(), self.omega, self.exponent, amplitudes, terms, mode)
    }
}

/// ∫ H_CD dt over one period centred at `s_mid`.
#[derive(Clone, Debug)]
pub struct PeriodTarget {
    pub s_mid: f64,
    pub period: f64,
    pub integral: CMatrix,
}

/// Per-period CD integrals for the N_T periods of frequency ω.
pub fn period_targets(sys: &ControlSystem, omega: f64, nodes: usize) -> Result<Vec<PeriodTarget>> {
    let tau = sys.tau();
    let n = n_periods(omega, tau);
    if n < 1 {
        return Err(Error::OutOfRange { what: "omega (no full period fits)", value: omega });
    }
    let period = 2.0 * PI / omega;
    let ds = period / tau;
    let rule = UnitRule::new(nodes);
    (0..n)
        .map(|p| {
            let s0 = p as f64 * ds;
            let mut acc = CMatrix::zeros(sys.dim());
            for (s, w) in rule.on(s0, s0 + ds) {
                acc.add_scaled(w * tau, &cd_exact(sys, s, DEFAULT_GAP_TOL)?);
            }
            Ok(PeriodTarget { s_mid: s0 + 0.5 * ds, period, integral: acc })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ConstraintSolution {
    pub ansatz: FourierAnsatz,
    /// ‖M_E² − M_CD¹‖ per period.
    pub residuals: Vec<f64>,
    /// Channel pairs (cos channel, sin channel) in harmonic order.
    pub pairs: Vec<(usize, usize)>,
}

/// Least-squares matching of the second Magnus term of the ansatz to each period's CD integral.
/// Channel pair (k, l), k < l, takes harmonic number equal to its rank among non-commuting pairs,
/// with the cosine on k and the sine on l.
pub fn solve_constraints_numeric(
    targets: &[PeriodTarget],
    channels: &ControlSet,
    omega: f64,
    harmonics: usize,
) -> Result<ConstraintSolution> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no period targets".into()));
    }
    let mut pairs = Vec::new();
    let mut directions = Vec::new();
    for k in 0..channels.len() {
        for l in (k + 1)..channels.len() {
            let kdir = commutator(channels.matrix(l), channels.matrix(k))?.scale(I * 0.5);
            if frobenius(&kdir, NormConvention::Sqrt) > 1e-12 {
                pairs.push((k, l));
                directions.push(kdir);
            }
        }
    }
    if pairs.len() > harmonics {
        return Err(Error::InvalidArgument(format!(
            "{} non-commuting channel pairs need at least that many harmonics (got {harmonics})",
            pairs.len()
        )));
    }
    let np = pairs.len();
    let gram = CMatrix::from_fn(np.max(1), |a, b| {
        if a < np && b < np {
            C64::new(directions[a].hs_inner(&directions[b]).re, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let eig = hermitian_eig(&gram)?;
    let cutoff = 1e-12 * eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pinv = eig.spectral_map(|e| if e.abs() > cutoff && e != 0.0 { C64::new(1.0 / e, 0.0) } else { C64::new(0.0, 0.0) });

    let mut residuals = Vec::with_capacity(targets.len());
    let mut s_nodes = Vec::with_capacity(targets.len());
    let mut amplitudes = Vec::with_capacity(targets.len());
    for (p, target) in targets.iter().enumerate() {
        let mean = target.integral.scale_real(1.0 / target.period);
        let rhs: Vec<f64> = directions.iter().map(|d| d.hs_inner(&mean).re).collect();
        let coeffs: Vec<f64> = (0..np).map(|a| (0..np).map(|b| pinv[(a, b)].re * rhs[b]).sum()).collect();
        let mut fitted = CMatrix::zeros(channels.dim());
        for (c, d) in coeffs.iter().zip(&directions) {
            fitted.add_scaled(*c, d);
        }
        let leftover = &mean - &fitted;
        let residual = target.period * frobenius(&leftover, NormConvention::Sqrt);
        let scale = target.period * frobenius(&mean, NormConvention::Sqrt);
        if residual > REACH_TOL * scale.max(1.0) {
            return Err(Error::Unreachable { period: p, residual, component: describe_leftover(&leftover) });
        }
        residuals.push(residual);
        s_nodes.push(target.s_mid);
        let mut node = vec![vec![(0.0, 0.0); harmonics]; channels.len()];
        for (a, (&(k, l), &c)) in pairs.iter().zip(&coeffs).enumerate() {
            let j = a + 1;
            let mag = (j as f64 * c.abs()).sqrt();
            node[l][a].0 = mag;
            node[k][a].1 = -sign(c) * mag;
        }
        amplitudes.push(node);
    }
    Ok(ConstraintSolution {
        ansatz: FourierAnsatz { omega, harmonics, exponent: 0.5, s_nodes, amplitudes },
        residuals,
        pairs,
    })
}

fn describe_leftover(m: &CMatrix) -> String {
    let n = m.dim();
    let (mut best, mut at) = (0.0, (0, 0));
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)].norm() > best {
                best = m[(i, j)].norm();
                at = (i, j);
            }
        }
    }
    let z = m[at];
    format!("entry ({}, {}) = {:.3e}{:+.3e}i", at.0, at.1, z.re, z.im)
}
