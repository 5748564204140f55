//! Magnus-expansion terms by quadrature and in closed form.

use crate::ecd::FourierAnsatz;
use crate::error::{Error, Result};
use crate::linalg::{commutator, pauli, CMatrix, C64, I};
use crate::quad::UnitRule;

pub const MIN_NODES: usize = 16;
const DOUBLING_TOL: f64 = 1e-8;

/// First three Magnus terms over [t0, t0 + T].
#[derive(Clone, Debug)]
pub struct MagnusTerms {
    pub m1: CMatrix,
    pub m2: CMatrix,
    pub m3: CMatrix,
    pub order: usize,
    pub quadrature_nodes: usize,
}

impl MagnusTerms {
    pub fn sum(&self) -> CMatrix {
        &(&self.m1 + &self.m2) + &self.m3
    }

    fn max_diff(&self, other: &MagnusTerms) -> f64 {
        self.m1.max_abs_diff(&other.m1).max(self.m2.max_abs_diff(&other.m2)).max(self.m3.max_abs_diff(&other.m3))
    }

    fn scale(&self) -> f64 {
        self.m1.max_abs().max(self.m2.max_abs()).max(self.m3.max_abs())
    }
}

fn magnus_fixed(h: &dyn Fn(f64) -> CMatrix, t0: f64, period: f64, order: usize, nodes: usize) -> MagnusTerms {
    let rule = UnitRule::new(nodes);
    let dim = h(t0).dim();
    let mut m1 = CMatrix::zeros(dim);
    let mut m2 = CMatrix::zeros(dim);
    let mut m3 = CMatrix::zeros(dim);
    // ∫_{t0}^{t} H
    let running = |t: f64| {
        let mut acc = CMatrix::zeros(dim);
        for (x, w) in rule.on(t0, t) {
            acc.add_scaled(w, &h(x));
        }
        acc
    };
    for (t1, w1) in rule.on(t0, t0 + period) {
        let h1 = h(t1);
        m1.add_scaled(w1, &h1);
        if order >= 2 {
            let inner = running(t1);
            m2.add_scaled(w1, &commutator(&h1, &inner).expect("square"));
        }
        if order >= 3 {
            for (t2, w2) in rule.on(t0, t1) {
                let h2 = h(t2);
                let j = running(t2);
                let a = commutator(&h1, &commutator(&h2, &j).expect("square")).expect("square");
                let b = commutator(&j, &commutator(&h2, &h1).expect("square")).expect("square");
                m3.add_scaled(w1 * w2, &(&a + &b));
            }
        }
    }
    MagnusTerms {
        m1: m1.scale(-I),
        m2: m2.scale_real(-0.5),
        m3: m3.scale(I / 6.0),
        order,
        quadrature_nodes: nodes,
    }
}

/// Nested Gauss–Legendre evaluation of M1 = −i∫H, M2 = −½∫∫[H₁,H₂] and
/// M3 = (i/6)∫∫∫([H₁,[H₂,H₃]] + [H₃,[H₂,H₁]]), t₁ > t₂ > t₃, certified by node doubling.
pub fn magnus_numeric(
    h: &dyn Fn(f64) -> CMatrix,
    t0: f64,
    period: f64,
    order: usize,
    nodes: usize,
) -> Result<MagnusTerms> {
    if !(period > 0.0) {
        return Err(Error::OutOfRange { what: "T", value: period });
    }
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("Magnus order {order} unsupported (1..=3)")));
    }
    if nodes < MIN_NODES {
        return Err(Error::InvalidArgument(format!("at least {MIN_NODES} quadrature nodes required")));
    }
    let coarse = magnus_fixed(h, t0, period, order, nodes);
    let fine = magnus_fixed(h, t0, period, order, 2 * nodes);
    let delta = coarse.max_diff(&fine);
    if delta > DOUBLING_TOL * fine.scale().max(1.0) {
        return Err(Error::NonConvergent { what: "Magnus quadrature", delta });
    }
    Ok(fine)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    fn index(self) -> usize {
        match self {
            Pauli::X => 0,
            Pauli::Y => 1,
            Pauli::Z => 2,
        }
    }

    fn from_index(k: usize) -> Self {
        [Pauli::X, Pauli::Y, Pauli::Z][k]
    }

    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::X => pauli::x(),
            Pauli::Y => pauli::y(),
            Pauli::Z => pauli::z(),
        }
    }
}

/// Closed-form one-period M2 for a two-channel ansatz with channel 0 on σ_i and channel 1 on σ_j,
/// amplitudes frozen at `s`.
pub fn magnus2_su2_analytic(ansatz: &FourierAnsatz, s: f64, generators: (Pauli, Pauli)) -> Result<CMatrix> {
    let (gi, gj) = generators;
    if gi == gj {
        return Err(Error::InvalidArgument("generators must differ".into()));
    }
    if ansatz.channels() != 2 {
        return Err(Error::InvalidArgument("su(2) ansatz needs exactly two channels".into()));
    }
    let (i, j) = (gi.index(), gj.index());
    let k = 3 - i - j;
    let eps = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };
    let omega = ansatz.omega;
    let prefactor = 2.0 * std::f64::consts::PI / omega.powf(2.0 - 2.0 * ansatz.exponent);
    let mut sum = 0.0;
    for n in 1..=ansatz.harmonics {
        let (ai, bi) = ansatz.amplitude_at(s, 0, n);
        let (aj, bj) = ansatz.amplitude_at(s, 1, n);
        sum += (ai * bj - bi * aj) / n as f64;
    }
    Ok(Pauli::from_index(k).matrix().scale(C64::new(0.0, -eps * prefactor * sum)))
}

fn derivatives(f: &dyn Fn(f64) -> CMatrix, x: f64, h: f64) -> [CMatrix; 3] {
    let (p2, p1, z, m1, m2) = (f(x + 2.0 * h), f(x + h), f(x), f(x - h), f(x - 2.0 * h));
    let mut d1 = CMatrix::zeros(z.dim());
    d1.add_scaled(-1.0, &p2);
    d1.add_scaled(8.0, &p1);
    d1.add_scaled(-8.0, &m1);
    d1.add_scaled(1.0, &m2);
    let d1 = d1.scale_real(1.0 / (12.0 * h));
    let mut d2 = CMatrix::zeros(z.dim());
    d2.add_scaled(-1.0, &p2);
    d2.add_scaled(16.0, &p1);
    d2.add_scaled(-30.0, &z);
    d2.add_scaled(16.0, &m1);
    d2.add_scaled(-1.0, &m2);
    let d2 = d2.scale_real(1.0 / (12.0 * h * h));
    [z, d1, d2.scale_real(0.5)]
}

// ½∫_{-h}^{h}dx∫_{-h}^{x}dy x^k y^n
fn taylor_coefficient(k: i32, n: i32, half: f64) -> f64 {
    let sign = |p: i32| if p % 2 == 0 { 1.0 } else { -1.0 };
    let bracket = (1.0 - sign(k + n)) / (k + n + 2) as f64 + sign(n) * (1.0 - sign(k + 1)) / (k + 1) as f64;
    0.5 * half.powi(k + n + 2) * bracket / (n + 1) as f64
}

/// Midpoint-Taylor evaluation of ½∫₀ᵗdt₁∫₀^{t₁}dt₂[A(t₁),B(t₂)] through power `order` of t.
pub fn omega2_taylor(a: &dyn Fn(f64) -> CMatrix, b: &dyn Fn(f64) -> CMatrix, t: f64, order: usize) -> Result<CMatrix> {
    if order > 4 {
        return Err(Error::InvalidArgument(format!("Taylor order {order} unsupported (at most 4)")));
    }
    let mid = 0.5 * t;
    let step = t / 100.0;
    let ak = derivatives(a, mid, step);
    let bk = derivatives(b, mid, step);
    let mut out = CMatrix::zeros(ak[0].dim());
    for k in 0..3 {
        for n in 0..3 {
            if k + n + 2 > order {
                continue;
            }
            let c = taylor_coefficient(k as i32, n as i32, mid);
            if c != 0.0 {
                out.add_scaled(c, &commutator(&ak[k], &bk[n])?);
            }
        }
    }
    Ok(out)
}

/// Predicted stroboscopic infidelity exponent after matching `m_solved` CD orders.
pub fn infidelity_order(m_solved: u32) -> u32 {
    2 * m_solved + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_hamiltonian() {
        let h = &pauli::x().scale_real(0.3) + &pauli::z();
        let hh = h.clone();
        let m = magnus_numeric(&move |_| hh.clone(), 1.0, 0.7, 3, 16).unwrap();
        assert!(m.m1.max_abs_diff(&h.scale(C64::new(0.0, -0.7))) < 1e-14);
        assert!(m.m2.max_abs() < 1e-14 && m.m3.max_abs() < 1e-14);
    }

    #[test]
    fn unit_harmonic_pair() {
        let omega = 3.0;
        let hf = move |t: f64| &pauli::z().scale_real((omega * t).sin()) + &pauli::x().scale_real((omega * t).cos());
        let m = magnus_numeric(&hf, 0.0, 2.0 * PI / omega, 2, 32).unwrap();
        // c_z = A sin, c_x = B cos with A = B = 1/√ω: M2 = −i(2π/ω²)·ε_zxy·σy
        let expected = pauli::y().scale(C64::new(0.0, -2.0 * PI / (omega * omega)));
        assert!(m.m2.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn argument_checks() {
        let f = |_t: f64| pauli::x();
        assert!(magnus_numeric(&f, 0.0, 0.0, 2, 16).is_err());
        assert!(magnus_numeric(&f, 0.0, 1.0, 4, 16).is_err());
        assert!(magnus_numeric(&f, 0.0, 1.0, 2, 8).is_err());
    }

    #[test]
    fn taylor_coefficients_match_expansion() {
        let t: f64 = 0.3;
        let h = t / 2.0;
        assert!((taylor_coefficient(0, 0, h) - t * t / 4.0).abs() < 1e-15);
        assert!((taylor_coefficient(1, 0, h) - t.powi(3) / 24.0).abs() < 1e-15);
        assert!((taylor_coefficient(0, 1, h) + t.powi(3) / 24.0).abs() < 1e-15);
        assert!((taylor_coefficient(2, 0, h) - t.powi(4) / 48.0).abs() < 1e-15);
        assert!((taylor_coefficient(0, 2, h) - t.powi(4) / 48.0).abs() < 1e-15);
        assert_eq!(taylor_coefficient(1, 1, h), 0.0);
    }

    #[test]
    fn taylor_examples() {
        let a = |_t: f64| pauli::x();
        let b = |_t: f64| pauli::z();
        let t = 0.2;
        let got = omega2_taylor(&a, &b, t, 4).unwrap();
        let expected = commutator(&pauli::x(), &pauli::z()).unwrap().scale_real(t * t / 4.0);
        assert!(got.max_abs_diff(&expected) < 1e-14);
        let same = omega2_taylor(&a, &a, t, 4).unwrap();
        assert_eq!(same.max_abs(), 0.0);
        assert!(omega2_taylor(&a, &b, t, 5).is_err());
    }

    #[test]
    fn taylor_linear_ramp_against_quadrature() {
        let t = 0.01;
        let a = |x: f64| pauli::x().scale_real(x);
        let b = |_x: f64| pauli::z();
        let got = omega2_taylor(&a, &b, t, 3).unwrap();
        let rule = UnitRule::new(16);
        let mut direct = CMatrix::zeros(2);
        for (t1, w1) in rule.on(0.0, t) {
            for (t2, w2) in rule.on(0.0, t1) {
                direct.add_scaled(0.5 * w1 * w2, &commutator(&a(t1), &b(t2)).unwrap());
            }
        }
        assert!(got.max_abs_diff(&direct) <= 1e-6 * direct.max_abs());
    }

    #[test]
    fn infidelity_order_examples() {
        assert_eq!(infidelity_order(0), 1);
        assert_eq!(infidelity_order(1), 3);
        assert_eq!(infidelity_order(2), 5);
    }
}
