//! Schrödinger propagation with a fourth-order commutator-free integrator, and run metrics.

use crate::cdfield::{cd_exact, ControlSystem, DEFAULT_GAP_TOL};
use crate::ecd::{n_periods, ECDSchedule};
use crate::error::{Error, Result};
use crate::linalg::{frobenius, hermitian_eig, inner, norm, CMatrix, CVector, NormConvention, C64};

/// Something the engine can integrate as i∂_s ψ = τ H(s) ψ.
pub trait Drive: Sync {
    fn dim(&self) -> usize;
    fn tau(&self) -> f64;
    fn hamiltonian(&self, s: f64) -> CMatrix;
    /// System whose instantaneous ground state defines the infidelity.
    fn reference(&self) -> &ControlSystem;
    /// Cycles of the fastest oscillation over s ∈ [0, 1]; zero for slow drives.
    fn cycles(&self) -> f64 {
        0.0
    }
}

impl Drive for ControlSystem {
    fn dim(&self) -> usize {
        ControlSystem::dim(self)
    }
    fn tau(&self) -> f64 {
        ControlSystem::tau(self)
    }
    fn hamiltonian(&self, s: f64) -> CMatrix {
        self.h_unchecked(s)
    }
    fn reference(&self) -> &ControlSystem {
        self
    }
}

impl Drive for ECDSchedule {
    fn dim(&self) -> usize {
        self.base().dim()
    }
    fn tau(&self) -> f64 {
        ECDSchedule::tau(self)
    }
    fn hamiltonian(&self, s: f64) -> CMatrix {
        ECDSchedule::hamiltonian(self, s)
    }
    fn reference(&self) -> &ControlSystem {
        self.base()
    }
    fn cycles(&self) -> f64 {
        ECDSchedule::cycles(self)
    }
}

/// H + H_CD with the exact counterdiabatic field.
pub struct ExactCd<'a>(pub &'a ControlSystem);

impl Drive for ExactCd<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn tau(&self) -> f64 {
        self.0.tau()
    }
    fn hamiltonian(&self, s: f64) -> CMatrix {
        let h = self.0.h_unchecked(s);
        let cd = cd_exact(self.0, s.clamp(0.0, 1.0), DEFAULT_GAP_TOL).expect("nondegenerate path");
        &h + &cd
    }
    fn reference(&self) -> &ControlSystem {
        self.0
    }
}

/// Integrator settings and the step-halving certificate tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    pub steps_per_period: usize,
    pub min_steps: usize,
    pub cert_tol: f64,
    pub max_refinements: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { steps_per_period: 64, min_steps: 1000, cert_tol: 1e-8, max_refinements: 5 }
    }
}

impl PropagationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 32 {
            return Err(Error::InvalidArgument("steps_per_period must be at least 32".into()));
        }
        if self.min_steps < 1000 {
            return Err(Error::InvalidArgument("min_steps must be at least 1000".into()));
        }
        if !(self.cert_tol > 0.0) {
            return Err(Error::OutOfRange { what: "cert_tol", value: self.cert_tol });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub s_grid: Vec<f64>,
    pub states: Vec<CVector>,
    pub populations: Vec<Vec<f64>>,
    pub infidelity_series: Vec<f64>,
    /// |I(n) − I(2n)| of the final infidelity.
    pub cert_delta: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &CVector {
        self.states.last().expect("nonempty trajectory")
    }

    pub fn final_infidelity(&self) -> f64 {
        *self.infidelity_series.last().expect("nonempty trajectory")
    }

    pub fn certified(&self, tol: f64) -> bool {
        self.cert_delta < tol
    }
}

const C1: f64 = 0.5 - 0.288_675_134_594_812_9;
const C2: f64 = 0.5 + 0.288_675_134_594_812_9;
const A1: f64 = 0.25 + 0.288_675_134_594_812_9;
const A2: f64 = 0.25 - 0.288_675_134_594_812_9;

fn exp_apply(h: &CMatrix, t: f64, psi: &[C64]) -> Result<CVector> {
    let eig = hermitian_eig(h)?;
    let v = &eig.vectors;
    let n = psi.len();
    let coeffs: Vec<C64> = (0..n)
        .map(|k| {
            let c: C64 = (0..n).map(|i| v[(i, k)].conj() * psi[i]).sum();
            c * C64::from_polar(1.0, -eig.values[k] * t)
        })
        .collect();
    Ok((0..n).map(|i| (0..n).map(|k| v[(i, k)] * coeffs[k]).sum()).collect())
}

/// One fourth-order commutator-free step from s to s + h.
fn cf4_step<D: Drive + ?Sized>(drive: &D, s: f64, h: f64, psi: &[C64]) -> Result<CVector> {
    let tau = drive.tau();
    let h1 = drive.hamiltonian(s + C1 * h);
    let h2 = drive.hamiltonian(s + C2 * h);
    let mut first = h1.scale_real(A1);
    first.add_scaled(A2, &h2);
    let mut second = h1.scale_real(A2);
    second.add_scaled(A1, &h2);
    let mid = exp_apply(&first, tau * h, psi)?;
    exp_apply(&second, tau * h, &mid)
}

fn run_fixed<D: Drive + ?Sized>(drive: &D, psi0: &[C64], outputs: &[f64], n: usize) -> Result<Vec<CVector>> {
    let mut states = Vec::with_capacity(outputs.len());
    let mut psi = psi0.to_vec();
    let mut s = 0.0;
    for &target in outputs {
        let span = target - s;
        if span > 0.0 {
            let m = ((span * n as f64).round() as usize).max(1);
            let h = span / m as f64;
            for k in 0..m {
                psi = cf4_step(drive, s + k as f64 * h, h, &psi)?;
            }
        }
        s = target;
        states.push(psi.clone());
    }
    Ok(states)
}

fn base_steps<D: Drive + ?Sized>(drive: &D, opts: &PropagationOptions) -> usize {
    let oscill = (drive.cycles() * opts.steps_per_period as f64).ceil() as usize;
    let probe = 256;
    let max_norm = (0..=probe)
        .map(|k| frobenius(&drive.hamiltonian(k as f64 / probe as f64), NormConvention::Sqrt))
        .fold(0.0, f64::max);
    let stiff = (2.0 * drive.tau() * max_norm).ceil() as usize;
    opts.min_steps.max(oscill).max(stiff)
}

/// Integrates from s = 0 and records the state at every output point, doubling the step count
/// until the final infidelity changes by less than `cert_tol` under halving.
pub fn propagate<D: Drive + ?Sized>(
    drive: &D,
    psi0: &[C64],
    opts: &PropagationOptions,
    outputs: &[f64],
) -> Result<Trajectory> {
    let t = propagate_best_effort(drive, psi0, opts, outputs)?;
    if t.certified(opts.cert_tol) {
        Ok(t)
    } else {
        Err(Error::NonConvergent { what: "propagation", delta: t.cert_delta })
    }
}

/// As [`propagate`], but returns the finest run even when the certificate is not met.
pub fn propagate_best_effort<D: Drive + ?Sized>(
    drive: &D,
    psi0: &[C64],
    opts: &PropagationOptions,
    outputs: &[f64],
) -> Result<Trajectory> {
    opts.validate()?;
    if psi0.len() != drive.dim() {
        return Err(Error::DimensionMismatch { left: drive.dim(), right: psi0.len() });
    }
    if (norm(psi0) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument("initial state must have unit norm".into()));
    }
    if outputs.is_empty() || outputs.windows(2).any(|w| w[1] < w[0]) || outputs[0] < 0.0 || outputs[outputs.len() - 1] > 1.0
    {
        return Err(Error::InvalidArgument("outputs must be a nonempty ascending grid in [0, 1]".into()));
    }
    let s_last = outputs[outputs.len() - 1];
    let reference_final = hermitian_eig(&drive.reference().h_unchecked(s_last))?.vector(0);

    let mut n = base_steps(drive, opts);
    let mut coarse = run_fixed(drive, psi0, outputs, n)?;
    let mut delta = f64::INFINITY;
    for _ in 0..=opts.max_refinements {
        let fine = run_fixed(drive, psi0, outputs, 2 * n)?;
        let i_coarse = infidelity(coarse.last().unwrap(), &reference_final);
        let i_fine = infidelity(fine.last().unwrap(), &reference_final);
        delta = (i_coarse - i_fine).abs();
        n *= 2;
        coarse = fine;
        if delta < opts.cert_tol {
            break;
        }
    }
    build_trajectory(drive, outputs, coarse, delta, n)
}

/// Final state after `steps` uniform integrator steps over s ∈ [0, 1], without certification.
pub fn evolve_fixed<D: Drive + ?Sized>(drive: &D, psi0: &[C64], steps: usize) -> Result<CVector> {
    if psi0.len() != drive.dim() {
        return Err(Error::DimensionMismatch { left: drive.dim(), right: psi0.len() });
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    Ok(run_fixed(drive, psi0, &[1.0], steps)?.pop().expect("one output"))
}

fn build_trajectory<D: Drive + ?Sized>(
    drive: &D,
    outputs: &[f64],
    states: Vec<CVector>,
    cert_delta: f64,
    steps: usize,
) -> Result<Trajectory> {
    let populations = states.iter().map(|psi| psi.iter().map(|z| z.norm_sqr()).collect()).collect();
    let infidelity_series = outputs
        .iter()
        .zip(&states)
        .map(|(&s, psi)| Ok(infidelity(psi, &hermitian_eig(&drive.reference().h_unchecked(s))?.vector(0))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Trajectory { s_grid: outputs.to_vec(), states, populations, infidelity_series, cert_delta, steps })
}

/// Propagation to s = 1 with only the end point recorded.
pub fn final_infidelity<D: Drive + ?Sized>(drive: &D, psi0: &[C64], opts: &PropagationOptions) -> Result<(f64, f64)> {
    let t = propagate(drive, psi0, opts, &[1.0])?;
    Ok((t.final_infidelity(), t.cert_delta))
}

/// 1 − |⟨gs|ψ⟩|², evaluated from the component of ψ orthogonal to gs.
pub fn infidelity(psi: &[C64], gs: &[C64]) -> f64 {
    let ng = norm(gs);
    let g: Vec<C64> = gs.iter().map(|z| z / ng).collect();
    let ov = inner(&g, psi);
    let perp: f64 = psi.iter().zip(&g).map(|(p, gi)| (p - ov * gi).norm_sqr()).sum();
    (perp / norm(psi).powi(2)).clamp(0.0, 1.0)
}

fn sample_grid(cycles: f64, samples: usize) -> usize {
    samples.max(1000).max((32.0 * cycles).ceil() as usize)
}

/// max_s ‖H(s)‖ on a grid with at least `samples` points and 32 per fastest cycle, refined around the maximum.
pub fn strength<D: Drive + ?Sized>(drive: &D, convention: NormConvention, samples: usize) -> f64 {
    let f = |s: f64| frobenius(&drive.hamiltonian(s), convention);
    let n = sample_grid(drive.cycles(), samples);
    let (mut best_s, mut best) = (0.0, f(0.0));
    for k in 1..=n {
        let s = k as f64 / n as f64;
        let v = f(s);
        if v > best {
            best = v;
            best_s = s;
        }
    }
    let mut half = 1.0 / n as f64;
    for _ in 0..3 {
        let lo = (best_s - half).max(0.0);
        let hi = (best_s + half).min(1.0);
        let m = 32;
        for k in 0..=m {
            let s = lo + (hi - lo) * k as f64 / m as f64;
            let v = f(s);
            if v > best {
                best = v;
                best_s = s;
            }
        }
        half = (hi - lo) / m as f64;
    }
    best
}

/// τ ∫₀¹ ‖H(s)‖ ds by the trapezoidal rule on the strength grid.
pub fn integral_norm<D: Drive + ?Sized>(drive: &D, convention: NormConvention, samples: usize) -> f64 {
    let n = sample_grid(drive.cycles(), samples);
    let vals: Vec<f64> = (0..=n).map(|k| frobenius(&drive.hamiltonian(k as f64 / n as f64), convention)).collect();
    let h = 1.0 / n as f64;
    let inner_sum: f64 = vals[1..n].iter().sum();
    drive.tau() * h * (0.5 * (vals[0] + vals[n]) + inner_sum)
}

/// Strength of a Hamiltonian scaled by `factor`.
pub fn scale_strength(value: f64, factor: f64, convention: NormConvention) -> f64 {
    match convention {
        NormConvention::Literal => value * factor * factor,
        NormConvention::Sqrt => value * factor.abs(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetChoice {
    /// Largest admissible ω.
    pub omega_max: f64,
    /// floor(ω_max τ / 2π)
    pub n_periods: usize,
    /// 2π N_T / τ
    pub omega: f64,
    pub strength: f64,
}

/// Largest ω whose correction strength stays within k·S(H), by bisection to relative 1e-6.
/// `template` builds the correction for a given ω; only ω ≥ 2π/τ is explored.
pub fn max_omega_for_budget(
    template: &dyn Fn(f64) -> Result<ECDSchedule>,
    tau: f64,
    base_strength: f64,
    k: f64,
    convention: NormConvention,
    samples: usize,
) -> Result<BudgetChoice> {
    if !(k > 0.0) {
        return Err(Error::BudgetInfeasible(format!("k = {k} admits no correction")));
    }
    let budget = k * base_strength;
    let corr = |omega: f64| -> Result<f64> {
        Ok(strength(&template(omega)?.with_mode(crate::ecd::Mode::Standalone), convention, samples))
    };
    let lo0 = 2.0 * std::f64::consts::PI / tau * (1.0 + 1e-12);
    if corr(lo0)? > budget {
        return Err(Error::BudgetInfeasible(format!(
            "k = {k}: even one period (omega = {lo0:.4}) exceeds the strength budget {budget:.4e}"
        )));
    }
    let (mut lo, mut hi) = (lo0, 2.0 * lo0);
    let mut doublings = 0;
    while corr(hi)? <= budget {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::InvalidArgument("correction strength does not grow with omega".into()));
        }
    }
    while (hi - lo) / lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if corr(mid)? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let n = n_periods(lo, tau);
    let omega = 2.0 * std::f64::consts::PI * n as f64 / tau;
    Ok(BudgetChoice { omega_max: lo, n_periods: n, omega, strength: corr(lo)? })
}

/// Mean over a window of `window` points centred on each sample, clipped at the ends.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Mean of the final `fraction` of a series.
pub fn tail_average(values: &[f64], fraction: f64) -> f64 {
    let n = values.len();
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
    values[n - k..].iter().sum::<f64>() / k as f64
}

/// Least-squares line through (log x, log y): (slope, intercept, R²).
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Uniform grid of n + 1 points on [0, 1].
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::ControlSet;
    use crate::cdfield::Schedule;
    use crate::linalg::{basis_vector, pauli};

    fn constant_sz(tau: f64) -> ControlSystem {
        let controls = ControlSet::unlabeled(vec![pauli::z()]).unwrap();
        ControlSystem::new(controls, vec![Schedule::constant(1.0)], tau).unwrap()
    }

    #[test]
    fn eigenstate_picks_up_phase() {
        let tau = 3.0;
        let sys = constant_sz(tau);
        let grid = uniform_grid(10);
        let t = propagate(&sys, &basis_vector(2, 0), &PropagationOptions::default(), &grid).unwrap();
        for (s, psi) in grid.iter().zip(&t.states) {
            assert!((psi[0] - C64::from_polar(1.0, -tau * s)).norm() < 1e-12);
            assert!(psi[1].norm() < 1e-15);
        }
        assert!(t.populations.iter().all(|p| (p[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn infidelity_examples() {
        let a = basis_vector(2, 0);
        let b = basis_vector(2, 1);
        assert_eq!(infidelity(&a, &a), 0.0);
        assert_eq!(infidelity(&a, &b), 1.0);
        let r = 1.0 / 2f64.sqrt();
        let mix = vec![C64::new(r, 0.0), C64::new(r, 0.0)];
        assert!((infidelity(&mix, &a) - 0.5).abs() < 1e-15);
        let phased: Vec<C64> = mix.iter().map(|z| z * C64::from_polar(1.0, 0.7)).collect();
        assert!((infidelity(&phased, &a) - infidelity(&mix, &a)).abs() < 1e-15);
    }

    #[test]
    fn propagate_checks_arguments() {
        let sys = constant_sz(1.0);
        let o = PropagationOptions::default();
        assert!(propagate(&sys, &[C64::new(1.0, 0.0)], &o, &[1.0]).is_err());
        assert!(propagate(&sys, &[C64::new(2.0, 0.0), C64::new(0.0, 0.0)], &o, &[1.0]).is_err());
        assert!(propagate(&sys, &basis_vector(2, 0), &o, &[0.5, 0.2]).is_err());
        let few = PropagationOptions { steps_per_period: 8, ..o };
        assert!(propagate(&sys, &basis_vector(2, 0), &few, &[1.0]).is_err());
    }

    #[test]
    fn constant_strength_and_integral() {
        let sys = constant_sz(2.5);
        assert_eq!(strength(&sys, NormConvention::Literal, 1000), 2.0);
        assert_eq!(strength(&sys, NormConvention::Literal, 5000), 2.0);
        let i1 = integral_norm(&sys, NormConvention::Sqrt, 1000);
        assert!((i1 - 2.5 * 2f64.sqrt()).abs() < 1e-12);
        let i2 = integral_norm(&sys.with_tau(5.0).unwrap(), NormConvention::Sqrt, 1000);
        assert!((i2 - 2.0 * i1).abs() < 1e-12);
    }

    #[test]
    fn moving_average_and_tail() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[5.0; 7], 20), vec![5.0; 7]);
        assert_eq!(tail_average(&[0.0; 9].iter().chain(&[10.0]).copied().collect::<Vec<_>>(), 0.1), 10.0);
    }

    #[test]
    fn power_law_fit() {
        let xs: Vec<f64> = (1..10).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powi(3)).collect();
        let (slope, icpt, r2) = fit_power_law(&xs, &ys);
        assert!((slope - 3.0).abs() < 1e-12 && (icpt - 3f64.ln()).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_strength() {
        assert_eq!(scale_strength(3.0, 2.0, NormConvention::Literal), 12.0);
        assert_eq!(scale_strength(3.0, 2.0, NormConvention::Sqrt), 6.0);
    }
}
