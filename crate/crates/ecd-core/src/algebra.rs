//! Dynamical Lie algebras of control sets and Cartan-structure checks.

use log::warn;

use crate::cdfield::{cd_exact, ControlSystem, DEFAULT_GAP_TOL};
use crate::error::{Error, Result};
use crate::linalg::{commutator, frobenius, CMatrix, NormConvention, C64, I};

pub const DEFAULT_CLOSURE_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;

/// Hermitian control matrices H_1..H_M, made traceless on construction.
#[derive(Clone, Debug)]
pub struct ControlSet {
    dim: usize,
    matrices: Vec<CMatrix>,
    labels: Vec<String>,
}

impl ControlSet {
    pub fn new(matrices: Vec<CMatrix>, labels: Vec<String>) -> Result<Self> {
        let first = matrices.first().ok_or_else(|| Error::InvalidArgument("control set is empty".into()))?;
        let dim = first.dim();
        if labels.len() != matrices.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} control matrices",
                labels.len(),
                matrices.len()
            )));
        }
        let mut cleaned = Vec::with_capacity(matrices.len());
        for (m, label) in matrices.into_iter().zip(&labels) {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: m.dim() });
            }
            let deviation = m.hermitian_deviation();
            if deviation > HERMITIAN_TOL * m.max_abs().max(1.0) {
                return Err(Error::NotHermitian { deviation });
            }
            let (t, tr) = m.hermitian_part().traceless();
            if tr.norm() > HERMITIAN_TOL {
                warn!("control '{label}' had trace {:.3e}; removed", tr.re);
            }
            cleaned.push(t);
        }
        Ok(Self { dim, matrices: cleaned, labels })
    }

    /// Convenience constructor with labels `H1..HM`.
    pub fn unlabeled(matrices: Vec<CMatrix>) -> Result<Self> {
        let labels = (1..=matrices.len()).map(|k| format!("H{k}")).collect();
        Self::new(matrices, labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, k: usize) -> &CMatrix {
        &self.matrices[k]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Σ c_k H_k
    pub fn combine(&self, coeffs: &[f64]) -> CMatrix {
        assert_eq!(coeffs.len(), self.len());
        let mut out = CMatrix::zeros(self.dim);
        for (c, m) in coeffs.iter().zip(&self.matrices) {
            if *c != 0.0 {
                out.add_scaled(*c, m);
            }
        }
        out
    }

    pub fn all_real_symmetric(&self) -> bool {
        self.matrices.iter().all(|m| m.data().iter().all(|z| z.im.abs() <= HERMITIAN_TOL))
    }
}

/// Hilbert–Schmidt-orthonormal skew-Hermitian basis with an optional Cartan split.
#[derive(Clone, Debug)]
pub struct AlgebraBasis {
    dim_n: usize,
    basis: Vec<CMatrix>,
    tol: f64,
    pub cartan: Option<(Vec<CMatrix>, Vec<CMatrix>)>,
}

impl AlgebraBasis {
    pub fn empty(dim_n: usize, tol: f64) -> Self {
        Self { dim_n, basis: Vec::new(), tol, cartan: None }
    }

    pub fn from_elements(dim_n: usize, elements: &[CMatrix], tol: f64) -> Self {
        let mut b = Self::empty(dim_n, tol);
        for e in elements {
            b.try_insert(e);
        }
        b
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix_dim(&self) -> usize {
        self.dim_n
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.basis
    }

    /// Component of `x` orthogonal to the real span of the basis.
    pub fn orthogonal_part(&self, x: &CMatrix) -> CMatrix {
        let mut r = x.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.hs_inner(&r).re;
                r.add_scaled(-c, b);
            }
        }
        r
    }

    /// Gram–Schmidt insertion of a skew-Hermitian element; returns whether it was new.
    pub fn try_insert(&mut self, x: &CMatrix) -> bool {
        if self.basis.len() >= self.dim_n * self.dim_n - 1 {
            return false;
        }
        let n0 = frobenius(x, NormConvention::Sqrt);
        if n0 <= self.tol {
            return false;
        }
        let r = self.orthogonal_part(&x.scale_real(1.0 / n0));
        let nr = frobenius(&r, NormConvention::Sqrt);
        if nr <= self.tol {
            return false;
        }
        self.basis.push(r.scale_real(1.0 / nr));
        true
    }

    pub fn orthonormality_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((a.hs_inner(b) - C64::new(target, 0.0)).norm());
            }
        }
        err
    }
}

/// Orthonormal basis of su(N) built from generalized Gell-Mann matrices, as −iλ/√2.
pub fn su_basis(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::new();
    let s = 1.0 / 2f64.sqrt();
    for j in 0..n {
        for k in (j + 1)..n {
            let mut sym = CMatrix::zeros(n);
            sym[(j, k)] = C64::new(1.0, 0.0);
            sym[(k, j)] = C64::new(1.0, 0.0);
            out.push(sym.scale(-I * s));
            let mut anti = CMatrix::zeros(n);
            anti[(j, k)] = C64::new(0.0, -1.0);
            anti[(k, j)] = C64::new(0.0, 1.0);
            out.push(anti.scale(-I * s));
        }
    }
    for l in 1..n {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut d = vec![0.0; n];
        for x in d.iter_mut().take(l) {
            *x = norm;
        }
        d[l] = -(l as f64) * norm;
        out.push(CMatrix::diag_real(&d).scale(-I * s));
    }
    out
}

/// Breadth-first closure of {−iH_k} under commutation.
pub fn lie_closure(set: &ControlSet, tol: f64) -> AlgebraBasis {
    let n = set.dim();
    let mut basis = AlgebraBasis::empty(n, tol);
    let mut frontier: Vec<CMatrix> = Vec::new();
    for h in set.matrices() {
        if basis.try_insert(&h.scale(-I)) {
            frontier.push(basis.basis.last().unwrap().clone());
        }
    }
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for x in &frontier {
            let current = basis.basis.clone();
            for y in &current {
                let c = commutator(x, y).expect("equal dimensions");
                if basis.try_insert(&c) {
                    next.push(basis.basis.last().unwrap().clone());
                }
            }
        }
        frontier = next;
    }
    basis
}

/// Norm of the part of −iX outside the span of `basis`.
pub fn membership_residual(x: &CMatrix, basis: &AlgebraBasis) -> Result<f64> {
    if x.dim() != basis.matrix_dim() {
        return Err(Error::DimensionMismatch { left: x.dim(), right: basis.matrix_dim() });
    }
    Ok(frobenius(&basis.orthogonal_part(&x.scale(-I)), NormConvention::Sqrt))
}

/// Maximum leakage of each Cartan inclusion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartanReport {
    /// [h,h] outside h
    pub hh: f64,
    /// [h,p] outside p
    pub hp: f64,
    /// [p,p] outside h
    pub pp: f64,
}

impl CartanReport {
    pub fn max(&self) -> f64 {
        self.hh.max(self.hp).max(self.pp)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max() < tol
    }
}

pub fn cartan_verify(h_part: &[CMatrix], p_part: &[CMatrix], tol: f64) -> Result<CartanReport> {
    let first = h_part
        .first()
        .or(p_part.first())
        .ok_or_else(|| Error::InvalidArgument("Cartan parts must be nonempty".into()))?;
    if h_part.is_empty() || p_part.is_empty() {
        return Err(Error::InvalidArgument("Cartan parts must be nonempty".into()));
    }
    let n = first.dim();
    let h = AlgebraBasis::from_elements(n, h_part, tol);
    let p = AlgebraBasis::from_elements(n, p_part, tol);
    let leak = |xs: &AlgebraBasis, ys: &AlgebraBasis, target: &AlgebraBasis| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in xs.elements() {
            for y in ys.elements() {
                let c = commutator(x, y)?;
                worst = worst.max(frobenius(&target.orthogonal_part(&c), NormConvention::Sqrt));
            }
        }
        Ok(worst)
    };
    Ok(CartanReport { hh: leak(&h, &h, &h)?, hp: leak(&h, &p, &p)?, pp: leak(&p, &p, &h)? })
}

/// Per-sample outcome of the real-Hamiltonian structure check.
#[derive(Clone, Debug, PartialEq)]
pub struct ImaginaryCdSample {
    pub s: f64,
    /// Largest |Re| entry of H_CD, or `None` if the CD field could not be computed.
    pub real_part: Option<f64>,
    /// Largest normalized |tr(H_CD H_k)| over the controls.
    pub overlap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImaginaryCdReport {
    pub samples: Vec<ImaginaryCdSample>,
}

impl ImaginaryCdReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.samples.iter().all(|x| matches!((x.real_part, x.overlap), (Some(r), Some(o)) if r < tol && o < tol))
    }

    pub fn failed_samples(&self) -> Vec<f64> {
        self.samples.iter().filter(|x| x.real_part.is_none()).map(|x| x.s).collect()
    }
}

/// Checks that H_CD is purely imaginary and orthogonal to every control, for real controls.
pub fn imaginary_cd_check(system: &ControlSystem, s_samples: &[f64]) -> Result<ImaginaryCdReport> {
    if !system.controls().all_real_symmetric() {
        return Err(Error::InvalidArgument("imaginary CD check requires real symmetric controls".into()));
    }
    let samples = s_samples
        .iter()
        .map(|&s| match cd_exact(system, s, DEFAULT_GAP_TOL) {
            Ok(hcd) => {
                let norm_cd = frobenius(&hcd, NormConvention::Sqrt);
                let overlap = system
                    .controls()
                    .matrices()
                    .iter()
                    .map(|h| {
                        let denom = norm_cd * frobenius(h, NormConvention::Sqrt);
                        if denom == 0.0 {
                            0.0
                        } else {
                            h.hs_inner(&hcd).norm() / denom
                        }
                    })
                    .fold(0.0, f64::max);
                ImaginaryCdSample { s, real_part: Some(hcd.max_abs_re()), overlap: Some(overlap) }
            }
            Err(_) => ImaginaryCdSample { s, real_part: None, overlap: None },
        })
        .collect();
    Ok(ImaginaryCdReport { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli;

    fn set(ms: Vec<CMatrix>) -> ControlSet {
        ControlSet::unlabeled(ms).unwrap()
    }

    #[test]
    fn closure_dimensions() {
        assert_eq!(lie_closure(&set(vec![pauli::x()]), DEFAULT_CLOSURE_TOL).dimension(), 1);
        assert_eq!(lie_closure(&set(vec![pauli::x(), pauli::z()]), DEFAULT_CLOSURE_TOL).dimension(), 3);
    }

    #[test]
    fn closure_of_commuting_set_is_abelian() {
        let zi = pauli::z().kron(&pauli::id());
        let iz = pauli::id().kron(&pauli::z());
        assert_eq!(lie_closure(&set(vec![zi, iz]), DEFAULT_CLOSURE_TOL).dimension(), 2);
    }

    #[test]
    fn trace_is_removed() {
        let s = set(vec![CMatrix::diag_real(&[2.0, 0.0])]);
        assert_eq!(s.matrix(0), &pauli::z());
    }

    #[test]
    fn su_basis_is_orthonormal() {
        for n in 2..=4 {
            let b = AlgebraBasis::from_elements(n, &su_basis(n), DEFAULT_CLOSURE_TOL);
            assert_eq!(b.dimension(), n * n - 1);
            assert!(b.orthonormality_error() < 1e-12);
        }
    }

    #[test]
    fn membership_examples() {
        let basis = lie_closure(&set(vec![pauli::x(), pauli::z()]), DEFAULT_CLOSURE_TOL);
        assert!(membership_residual(&pauli::y().scale_real(0.37), &basis).unwrap() < 1e-12);
        let only_z = lie_closure(&set(vec![pauli::z()]), DEFAULT_CLOSURE_TOL);
        let r = membership_residual(&pauli::y(), &only_z).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        let as_element = basis.elements()[1].scale(I);
        assert!(membership_residual(&as_element, &basis).unwrap() < 1e-12);
        assert!(membership_residual(&CMatrix::identity(3), &basis).is_err());
    }

    #[test]
    fn cartan_su2_split() {
        let h = vec![pauli::y().scale(-I)];
        let p = vec![pauli::x().scale(-I), pauli::z().scale(-I)];
        assert!(cartan_verify(&h, &p, DEFAULT_CLOSURE_TOL).unwrap().holds(1e-12));
        let full = su_basis(2);
        let r = cartan_verify(&full, &full, DEFAULT_CLOSURE_TOL).unwrap();
        assert!(r.pp < 1e-12 && r.hh < 1e-12);
    }

    #[test]
    fn cartan_su3_real_imaginary_split() {
        let (h, p): (Vec<CMatrix>, Vec<CMatrix>) = su_basis(3).into_iter().partition(|m| m.max_abs_re() > 0.0);
        assert_eq!((h.len(), p.len()), (3, 5));
        assert!(cartan_verify(&h, &p, DEFAULT_CLOSURE_TOL).unwrap().holds(1e-10));
        let bad = cartan_verify(&p, &h, DEFAULT_CLOSURE_TOL).unwrap();
        assert!(bad.pp > 0.1);
    }

    #[test]
    fn cartan_rejects_empty_parts() {
        assert!(cartan_verify(&[], &su_basis(2), DEFAULT_CLOSURE_TOL).is_err());
    }
}
