//! Driven control systems, exact counterdiabatic fields and adiabatic targets.

use std::fmt;
use std::sync::Arc;

use crate::algebra::ControlSet;
use crate::error::{Error, Result};
use crate::linalg::{commutator, frobenius, hermitian_eig, inner, CMatrix, CVector, EigSystem, NormConvention, C64, I};

pub const DEFAULT_GAP_TOL: f64 = 1e-8;
pub const DEFAULT_FD_STEP: f64 = 1e-6;
pub const DEFAULT_TRACKING_STEP: f64 = 1e-3;
const UNCOUPLED_TOL: f64 = 1e-10;
const S_SLACK: f64 = 1e-12;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A control function u(s) with its analytic derivative.
#[derive(Clone)]
pub struct Schedule {
    pub u: ScalarFn,
    pub du: ScalarFn,
}

impl Schedule {
    pub fn new(u: impl Fn(f64) -> f64 + Send + Sync + 'static, du: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { u: Arc::new(u), du: Arc::new(du) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |_| 0.0)
    }

    /// u(s) = a + b s
    pub fn linear(a: f64, b: f64) -> Self {
        Self::new(move |s| a + b * s, move |_| b)
    }
}

/// H(s) = Σ u_k(s) H_k evolved as i∂_s U = τ H(s) U.
#[derive(Clone)]
pub struct ControlSystem {
    controls: ControlSet,
    schedules: Vec<Schedule>,
    tau: f64,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem").field("labels", &self.controls.labels()).field("tau", &self.tau).finish()
    }
}

impl ControlSystem {
    pub fn new(controls: ControlSet, schedules: Vec<Schedule>, tau: f64) -> Result<Self> {
        if schedules.len() != controls.len() {
            return Err(Error::InvalidArgument(format!(
                "{} schedules for {} controls",
                schedules.len(),
                controls.len()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::OutOfRange { what: "tau", value: tau });
        }
        Ok(Self { controls, schedules, tau })
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.controls.dim()
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.controls.clone(), self.schedules.clone(), tau)
    }

    pub fn coefficients(&self, s: f64) -> Vec<f64> {
        self.schedules.iter().map(|sc| (sc.u)(s)).collect()
    }

    pub fn derivative_coefficients(&self, s: f64) -> Vec<f64> {
        self.schedules.iter().map(|sc| (sc.du)(s)).collect()
    }

    /// H(s) without the range check; used for finite differences at the endpoints.
    pub fn h_unchecked(&self, s: f64) -> CMatrix {
        self.controls.combine(&self.coefficients(s))
    }

    pub fn dh_unchecked(&self, s: f64) -> CMatrix {
        self.controls.combine(&self.derivative_coefficients(s))
    }
}

fn check_s(s: f64) -> Result<()> {
    if (-S_SLACK..=1.0 + S_SLACK).contains(&s) {
        Ok(())
    } else {
        Err(Error::OutOfRange { what: "s", value: s })
    }
}

pub fn evaluate_h(sys: &ControlSystem, s: f64) -> Result<CMatrix> {
    check_s(s)?;
    Ok(sys.h_unchecked(s))
}

/// ∂_s H(s)
pub fn evaluate_dh(sys: &ControlSystem, s: f64) -> Result<CMatrix> {
    check_s(s)?;
    Ok(sys.dh_unchecked(s))
}

pub fn instantaneous_eig(sys: &ControlSystem, s: f64) -> Result<EigSystem> {
    hermitian_eig(&evaluate_h(sys, s)?)
}

pub fn ground_state(sys: &ControlSystem, s: f64) -> Result<CVector> {
    Ok(instantaneous_eig(sys, s)?.vector(0))
}

fn check_gap(eig: &EigSystem, s: f64, gap_tol: f64) -> Result<()> {
    let gap = eig.min_gap();
    if gap > gap_tol {
        Ok(())
    } else {
        Err(Error::DegenerateSpectrum { s, gap })
    }
}

fn check_level_gap(eig: &EigSystem, label: usize, s: f64, gap_tol: f64) -> Result<()> {
    let e = eig.values[label];
    let gap = eig
        .values
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != label)
        .map(|(_, v)| (v - e).abs())
        .fold(f64::INFINITY, f64::min);
    if gap > gap_tol {
        Ok(())
    } else {
        Err(Error::DegenerateSpectrum { s, gap })
    }
}

/// Exact counterdiabatic Hamiltonian in physical time,
/// (i/τ) Σ_{m≠n} |m⟩⟨m|∂_s H|n⟩⟨n| / (E_n − E_m).
/// Degenerate pairs are allowed only when ∂_s H does not couple them; they contribute nothing.
pub fn cd_exact(sys: &ControlSystem, s: f64, gap_tol: f64) -> Result<CMatrix> {
    let eig = instantaneous_eig(sys, s)?;
    let dh = sys.dh_unchecked(s);
    let v = &eig.vectors;
    let d = &(&v.dagger() * &dh) * v;
    let n = sys.dim();
    let coupling_tol = UNCOUPLED_TOL * dh.max_abs().max(1.0);
    for a in 0..n {
        for b in (a + 1)..n {
            let gap = (eig.values[b] - eig.values[a]).abs();
            if gap <= gap_tol && d[(a, b)].norm() > coupling_tol {
                return Err(Error::DegenerateSpectrum { s, gap });
            }
        }
    }
    let m = CMatrix::from_fn(n, |a, b| {
        let gap = eig.values[b] - eig.values[a];
        if a == b || gap.abs() <= gap_tol {
            C64::new(0.0, 0.0)
        } else {
            I * d[(a, b)] / (gap * sys.tau())
        }
    });
    Ok((&(v * &m) * &v.dagger()).hermitian_part())
}

/// σ_y coefficient of the CD field for H = u_x σ_x + u_z σ_z (derivatives in the same time units).
pub fn cd_su2_analytic(ux: f64, uz: f64, dux: f64, duz: f64) -> Result<f64> {
    let r2 = ux * ux + uz * uz;
    if r2 == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(-0.5 * (ux * duz - dux * uz) / r2)
}

/// ‖∂_t H − i[H, H_CD] − ∂_t D‖ with ∂_t E_n from central differences of step `fd_step` in s.
pub fn generator_residual(sys: &ControlSystem, s: f64, fd_step: f64) -> Result<f64> {
    let eig = instantaneous_eig(sys, s)?;
    check_gap(&eig, s, DEFAULT_GAP_TOL)?;
    let hcd = cd_exact(sys, s, DEFAULT_GAP_TOL)?;
    let tau = sys.tau();
    let plus = hermitian_eig(&sys.h_unchecked(s + fd_step))?;
    let minus = hermitian_eig(&sys.h_unchecked(s - fd_step))?;
    let n = sys.dim();
    let de: Vec<f64> = (0..n).map(|k| (plus.values[k] - minus.values[k]) / (2.0 * fd_step)).collect();
    let mut d_diag = CMatrix::zeros(n);
    for k in 0..n {
        let vk = eig.vector(k);
        for a in 0..n {
            for b in 0..n {
                d_diag[(a, b)] += vk[a] * vk[b].conj() * de[k];
            }
        }
    }
    let h = sys.h_unchecked(s);
    let comm = commutator(&h, &hcd)?.scale(I * tau);
    let mut r = sys.dh_unchecked(s);
    r = &r - &comm;
    r = &r - &d_diag;
    Ok(frobenius(&r, NormConvention::Sqrt) / tau)
}

/// Instantaneous eigenvector followed continuously from s = 0, with its dynamic phase.
#[derive(Clone, Debug)]
pub struct AdiabaticPath {
    pub s_grid: Vec<f64>,
    pub vectors: Vec<CVector>,
    /// τ ∫_0^s E_label ds'
    pub phases: Vec<f64>,
}

impl AdiabaticPath {
    /// Tracks eigenvector `label` on a uniform grid from 0 to `s_end` with spacing at most `max_step`.
    pub fn track(sys: &ControlSystem, label: usize, s_end: f64, max_step: f64) -> Result<Self> {
        check_s(s_end)?;
        if label >= sys.dim() {
            return Err(Error::InvalidArgument(format!("eigenvector label {label} out of range")));
        }
        let steps = ((s_end / max_step).ceil() as usize).max(1);
        let mut s_grid = Vec::with_capacity(steps + 1);
        let mut vectors: Vec<CVector> = Vec::with_capacity(steps + 1);
        let mut phases = Vec::with_capacity(steps + 1);
        let mut prev_energy = 0.0;
        for k in 0..=steps {
            let s = s_end * k as f64 / steps as f64;
            let eig = instantaneous_eig(sys, s)?;
            check_level_gap(&eig, label, s, DEFAULT_GAP_TOL)?;
            let mut v = eig.vector(label);
            let energy = eig.values[label];
            if let Some(prev) = vectors.last() {
                let ov = inner(prev, &v);
                if ov.norm() < 0.5 {
                    return Err(Error::GaugeTracking { s, overlap: ov.norm() });
                }
                let align = ov.conj() / ov.norm();
                v.iter_mut().for_each(|z| *z *= align);
                let ds = s - s_grid[k - 1];
                phases.push(phases[k - 1] + 0.5 * ds * (energy + prev_energy) * sys.tau());
            } else {
                phases.push(0.0);
            }
            prev_energy = energy;
            s_grid.push(s);
            vectors.push(v);
        }
        Ok(Self { s_grid, vectors, phases })
    }

    pub fn state(&self, k: usize) -> CVector {
        let phase = C64::from_polar(1.0, -self.phases[k]);
        self.vectors[k].iter().map(|z| z * phase).collect()
    }

    pub fn last_state(&self) -> CVector {
        self.state(self.vectors.len() - 1)
    }

    /// Smallest overlap modulus between consecutive tracked eigenvectors.
    pub fn min_consecutive_overlap(&self) -> f64 {
        self.vectors.windows(2).map(|w| inner(&w[0], &w[1]).norm()).fold(1.0, f64::min)
    }
}

/// Adiabatically evolved target of the `label`-th eigenvector at s.
pub fn adiabatic_target(sys: &ControlSystem, s: f64, label: usize) -> Result<CVector> {
    Ok(AdiabaticPath::track(sys, label, s, DEFAULT_TRACKING_STEP)?.last_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;

    fn lzm(eps: f64, tau: f64) -> ControlSystem {
        let controls = ControlSet::new(vec![pauli::z(), pauli::x()], vec!["sz".into(), "sx".into()]).unwrap();
        ControlSystem::new(controls, vec![Schedule::linear(-eps / 4.0, eps / 2.0), Schedule::constant(0.5)], tau)
            .unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let sys = lzm(20.0, 20.0);
        assert!(evaluate_h(&sys, 0.5).unwrap().max_abs_diff(&pauli::x().scale_real(0.5)) < 1e-15);
        for s in [0.0, 0.3, 1.0] {
            assert!(evaluate_dh(&sys, s).unwrap().max_abs_diff(&pauli::z().scale_real(10.0)) < 1e-15);
        }
        assert!(matches!(evaluate_h(&sys, 1.5), Err(Error::OutOfRange { .. })));
        let controls = ControlSet::unlabeled(vec![pauli::x()]).unwrap();
        let zero = ControlSystem::new(controls, vec![Schedule::constant(0.0)], 1.0).unwrap();
        assert_eq!(evaluate_h(&zero, 0.2).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn lzm_cd_at_crossing() {
        let sys = lzm(20.0, 20.0);
        let hcd = cd_exact(&sys, 0.5, DEFAULT_GAP_TOL).unwrap();
        assert!(hcd.max_abs_diff(&pauli::y().scale_real(-0.5)) < 1e-12);
    }

    #[test]
    fn cd_vanishes_for_constant_h() {
        let controls = ControlSet::unlabeled(vec![pauli::x(), pauli::z()]).unwrap();
        let sys = ControlSystem::new(controls, vec![Schedule::constant(0.3), Schedule::constant(-1.0)], 4.0).unwrap();
        assert_eq!(cd_exact(&sys, 0.4, DEFAULT_GAP_TOL).unwrap().max_abs(), 0.0);
        assert!(generator_residual(&sys, 0.4, DEFAULT_FD_STEP).unwrap() < 1e-9);
    }

    #[test]
    fn degenerate_spectrum_is_reported() {
        let controls = ControlSet::unlabeled(vec![pauli::z(), pauli::x()]).unwrap();
        let ramp = || Schedule::linear(-1.0, 2.0);
        let sys = ControlSystem::new(controls, vec![ramp(), ramp()], 1.0).unwrap();
        match cd_exact(&sys, 0.5, DEFAULT_GAP_TOL) {
            Err(Error::DegenerateSpectrum { s, gap }) => assert!(s == 0.5 && gap < 1e-8),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn uncoupled_crossing_contributes_nothing() {
        let controls = ControlSet::unlabeled(vec![pauli::z()]).unwrap();
        let sys = ControlSystem::new(controls, vec![Schedule::linear(-1.0, 2.0)], 1.0).unwrap();
        assert_eq!(cd_exact(&sys, 0.5, DEFAULT_GAP_TOL).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn su2_analytic_examples() {
        assert_eq!(cd_su2_analytic(1.0, 0.0, 0.0, 1.0).unwrap(), -0.5);
        assert!(cd_su2_analytic(0.7, 2.1, -0.2, -0.6).unwrap().abs() < 1e-15);
        assert_eq!(cd_su2_analytic(0.0, 0.0, 1.0, 1.0), Err(Error::ZeroField));
    }

    #[test]
    fn su2_analytic_matches_exact() {
        let (eps, tau) = (20.0, 7.0);
        let sys = lzm(eps, tau);
        for k in 0..=100 {
            let s = k as f64 / 100.0;
            let f = cd_su2_analytic(0.5, eps * (s - 0.5) / 2.0, 0.0, eps / 2.0).unwrap() / tau;
            let hcd = cd_exact(&sys, s, DEFAULT_GAP_TOL).unwrap();
            assert!(hcd.max_abs_diff(&pauli::y().scale_real(f)) < 1e-10, "s = {s}");
        }
    }

    #[test]
    fn generator_identity_on_lzm() {
        let sys = lzm(20.0, 20.0);
        let worst = (0..=100)
            .map(|k| generator_residual(&sys, k as f64 / 100.0, DEFAULT_FD_STEP).unwrap())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "residual {worst}");
    }

    #[test]
    fn adiabatic_target_start_and_swap() {
        let sys = lzm(20.0, 20.0);
        let gs0 = ground_state(&sys, 0.0).unwrap();
        let t0 = adiabatic_target(&sys, 0.0, 0).unwrap();
        assert!(t0.iter().zip(&gs0).all(|(a, b)| (a - b).norm() < 1e-15));
        let t1 = adiabatic_target(&sys, 1.0, 0).unwrap();
        let (p0_start, p0_end) = (gs0[0].norm_sqr(), t1[0].norm_sqr());
        assert!(p0_start > 0.99 && p0_end < 0.01);
        assert!((p0_start - (1.0 - p0_end)).abs() < 1e-12);
        let path = AdiabaticPath::track(&sys, 0, 1.0, DEFAULT_TRACKING_STEP).unwrap();
        assert!(path.min_consecutive_overlap() >= 0.999);
    }
}
