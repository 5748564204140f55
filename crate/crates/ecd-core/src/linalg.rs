//! Dense complex matrices for small dimensions.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = Vec<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
const HERMITIAN_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Square complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be at least 1");
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major entries; panics if the length is not a square.
    pub fn from_vec(data: Vec<C64>) -> Self {
        let dim = (data.len() as f64).sqrt().round() as usize;
        assert_eq!(dim * dim, data.len(), "entry count is not a perfect square");
        assert!(dim >= 1);
        Self { dim, data }
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        Self { dim, data: entries.iter().map(|&x| C64::new(x, 0.0)).collect() }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * c).collect() }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * c).collect() }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &CMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * c;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_re(&self) -> f64 {
        self.data.iter().map(|z| z.re.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Hilbert–Schmidt inner product tr(A†B).
    pub fn hs_inner(&self, other: &CMatrix) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        check_dims(self.dim, other.dim)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &CMatrix) -> CMatrix {
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> CVector {
        assert_eq!(v.len(), self.dim);
        let n = self.dim;
        (0..n).map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum()).collect()
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (n, m) = (self.dim, other.dim);
        CMatrix::from_fn(n * m, |i, j| self[(i / m, j / m)] * other[(i % m, j % m)])
    }

    pub fn column(&self, j: usize) -> CVector {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    /// Removes the trace part, returning the traceless matrix and the removed trace.
    pub fn traceless(&self) -> (CMatrix, C64) {
        let tr = self.trace();
        let mut out = self.clone();
        let shift = tr / self.dim as f64;
        for i in 0..self.dim {
            out[(i, i)] -= shift;
        }
        (out, tr)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: a, right: b })
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix addition");
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix subtraction");
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix product");
        self.mul_unchecked(rhs)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl fmt::Display for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            let row: Vec<String> =
                (0..self.dim).map(|j| format!("{:+.6}{:+.6}i", self[(i, j)].re, self[(i, j)].im)).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// AB − BA.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    check_dims(a.dim, b.dim)?;
    Ok(&a.mul_unchecked(b) - &b.mul_unchecked(a))
}

/// Which Frobenius-type norm a strength measurement uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum NormConvention {
    /// tr(AA†), exactly as the strength measure is printed.
    #[default]
    Literal,
    /// sqrt(tr(AA†)), the usual Frobenius norm.
    Sqrt,
}

impl NormConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormConvention::Literal => "literal",
            NormConvention::Sqrt => "sqrt",
        }
    }
}

impl fmt::Display for NormConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(NormConvention::Literal),
            "sqrt" => Ok(NormConvention::Sqrt),
            other => Err(Error::InvalidArgument(format!("unknown norm convention '{other}' (expected literal|sqrt)"))),
        }
    }
}

pub fn frobenius(a: &CMatrix, convention: NormConvention) -> f64 {
    let tr: f64 = a.data.iter().map(|z| z.norm_sqr()).sum();
    match convention {
        NormConvention::Literal => tr,
        NormConvention::Sqrt => tr.sqrt(),
    }
}

/// Ascending eigenvalues with orthonormal eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct EigSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigSystem {
    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// V diag(g(E)) V†
    pub fn spectral_map(&self, g: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.dim();
        let v = &self.vectors;
        let phases: Vec<C64> = self.values.iter().map(|&e| g(e)).collect();
        CMatrix::from_fn(n, |i, j| (0..n).map(|k| v[(i, k)] * phases[k] * v[(j, k)].conj()).sum())
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.spectral_map(|e| C64::new(e, 0.0))
    }

    /// Smallest gap between adjacent eigenvalues; infinite in dimension one.
    pub fn min_gap(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
pub fn hermitian_eig(a: &CMatrix) -> Result<EigSystem> {
    let scale = a.max_abs().max(1.0);
    let deviation = a.hermitian_deviation();
    if !(deviation <= HERMITIAN_TOL * scale) {
        return Err(Error::NotHermitian { deviation });
    }
    let n = a.dim;
    let mut m = a.hermitian_part();
    let mut v = CMatrix::identity(n);
    let total = frobenius(&m, NormConvention::Sqrt);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_mass(&m) <= JACOBI_TOL * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&x, &y| diag[x].total_cmp(&diag[y]).then(x.cmp(&y)));
    let values = order.iter().map(|&k| diag[k]).collect();
    let mut vectors = CMatrix::from_fn(n, |i, j| v[(i, order[j])]);
    for j in 0..n {
        fix_column_gauge(&mut vectors, j);
    }
    Ok(EigSystem { values, vectors })
}

fn off_diagonal_mass(m: &CMatrix) -> f64 {
    let n = m.dim;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

// One complex Jacobi rotation zeroing m[p][q]; m <- G† m G, v <- v G.
fn rotate(m: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let b = m[(p, q)];
    let r = b.norm();
    if r == 0.0 {
        return;
    }
    let phase = b / r;
    let (app, aqq) = (m[(p, p)].re, m[(q, q)].re);
    let theta = 0.5 * (-2.0 * r).atan2(app - aqq);
    let (s, c) = theta.sin_cos();
    // G = diag(1, conj(phase)) * [[c, s], [-s, c]]
    let g_pp = C64::new(c, 0.0);
    let g_pq = C64::new(s, 0.0);
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;
    let n = m.dim;
    for k in 0..n {
        let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = mkp * g_pp + mkq * g_qp;
        m[(k, q)] = mkp * g_pq + mkq * g_qq;
    }
    for k in 0..n {
        let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = g_pp.conj() * mpk + g_qp.conj() * mqk;
        m[(q, k)] = g_pq.conj() * mpk + g_qq.conj() * mqk;
    }
    m[(p, q)] = C64::new(0.0, 0.0);
    m[(q, p)] = C64::new(0.0, 0.0);
    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = vkp * g_pp + vkq * g_qp;
        v[(k, q)] = vkp * g_pq + vkq * g_qq;
    }
}

// Largest-magnitude component made real and positive (first index wins near-ties).
fn fix_column_gauge(v: &mut CMatrix, j: usize) {
    let n = v.dim;
    let max = (0..n).map(|i| v[(i, j)].norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = (0..n).find(|&i| v[(i, j)].norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
    let phase = v[(pivot, j)].conj() / v[(pivot, j)].norm();
    for i in 0..n {
        v[(i, j)] *= phase;
    }
    v[(pivot, j)] = C64::new(v[(pivot, j)].re, 0.0);
}

/// exp(−iHt) via the eigendecomposition of H.
pub fn expm_skew(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = hermitian_eig(h)?;
    Ok(eig.spectral_map(|e| C64::from_polar(1.0, -e * t)))
}

/// ⟨a|b⟩
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalized(v: &[C64]) -> CVector {
    let n = norm(v);
    v.iter().map(|z| z / n).collect()
}

pub fn basis_vector(dim: usize, k: usize) -> CVector {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[k] = C64::new(1.0, 0.0);
    v
}

/// Pauli matrices.
pub mod pauli {
    use super::{CMatrix, C64};

    pub fn x() -> CMatrix {
        CMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn y() -> CMatrix {
        let z = C64::new(0.0, 0.0);
        CMatrix::from_vec(vec![z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z])
    }

    pub fn z() -> CMatrix {
        CMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0])
    }

    pub fn id() -> CMatrix {
        CMatrix::identity(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn commutator_examples() {
        let (x, y, z) = (pauli::x(), pauli::y(), pauli::z());
        assert_eq!(commutator(&x, &x).unwrap().max_abs(), 0.0);
        let xz = commutator(&x, &z).unwrap();
        assert!(xz.max_abs_diff(&y.scale(c(0.0, -2.0))) < 1e-15);
        let xy = commutator(&x, &y).unwrap();
        assert!(xy.max_abs_diff(&z.scale(c(0.0, 2.0))) < 1e-15);
        assert!(matches!(
            commutator(&x, &CMatrix::identity(3)),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn eig_examples() {
        let e = hermitian_eig(&pauli::z()).unwrap();
        assert_eq!(e.values, vec![-1.0, 1.0]);
        let e = hermitian_eig(&pauli::x().scale_real(0.5)).unwrap();
        assert!((e.values[0] + 0.5).abs() < 1e-15 && (e.values[1] - 0.5).abs() < 1e-15);
        let block = CMatrix::from_real(2, &[-1.0, -1.0, -1.0, -1.0]);
        let e = hermitian_eig(&block).unwrap();
        assert!((e.values[0] + 2.0).abs() < 1e-14 && e.values[1].abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = CMatrix::from_real(2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_ties_keep_index_order() {
        let e = hermitian_eig(&CMatrix::identity(3)).unwrap();
        for k in 0..3 {
            assert_eq!(e.vector(k), basis_vector(3, k));
        }
    }

    #[test]
    fn eigenvector_gauge_is_real_positive_on_largest_component() {
        let h = &pauli::y() + &pauli::z().scale_real(0.3);
        let e = hermitian_eig(&h).unwrap();
        for k in 0..2 {
            let v = e.vector(k);
            let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(big.im.abs() < 1e-15 && big.re > 0.0);
        }
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius(&CMatrix::identity(2), NormConvention::Literal), 2.0);
        assert_eq!(frobenius(&(&pauli::x() + &pauli::z()), NormConvention::Literal), 4.0);
        let eps = 20.0;
        let h = &pauli::z().scale_real(-eps / 4.0) + &pauli::x().scale_real(0.5);
        assert!((frobenius(&h, NormConvention::Literal) - 50.5).abs() < 1e-12);
        assert_eq!(frobenius(&CMatrix::identity(2), NormConvention::Sqrt), 2f64.sqrt());
    }

    #[test]
    fn expm_examples() {
        let u = expm_skew(&pauli::z(), PI).unwrap();
        assert!(u.max_abs_diff(&CMatrix::identity(2).scale_real(-1.0)) < 1e-14);
        let u = expm_skew(&pauli::x(), 0.0).unwrap();
        assert!(u.max_abs_diff(&CMatrix::identity(2)) < 1e-15);
        let u = expm_skew(&pauli::x(), PI / 2.0).unwrap();
        assert!(u.max_abs_diff(&pauli::x().scale(c(0.0, -1.0))) < 1e-15);
    }

    #[test]
    fn kron_and_trace() {
        let zz = pauli::z().kron(&pauli::z());
        assert_eq!(zz, CMatrix::diag_real(&[1.0, -1.0, -1.0, 1.0]));
        let (t, tr) = CMatrix::diag_real(&[3.0, 1.0]).traceless();
        assert_eq!(tr, c(4.0, 0.0));
        assert_eq!(t, pauli::z());
    }

    fn hermitian(n: usize) -> impl Strategy<Value = CMatrix> {
        proptest::collection::vec(-2.0f64..2.0, 2 * n * n).prop_map(move |xs| {
            let raw = CMatrix::from_fn(n, |i, j| c(xs[2 * (i * n + j)], xs[2 * (i * n + j) + 1]));
            raw.hermitian_part()
        })
    }

    fn any_hermitian() -> impl Strategy<Value = CMatrix> {
        (1usize..=4).prop_flat_map(hermitian)
    }

    proptest! {
        #[test]
        fn eig_reconstructs(a in any_hermitian()) {
            let e = hermitian_eig(&a).unwrap();
            prop_assert!(e.reconstruct().max_abs_diff(&a) < 1e-10);
            let n = a.dim();
            let gram = &e.vectors.dagger() * &e.vectors;
            prop_assert!(gram.max_abs_diff(&CMatrix::identity(n)) < 1e-12);
            for k in 0..n {
                let v = e.vector(k);
                let r: Vec<C64> = a.matvec(&v).iter().zip(&v).map(|(av, x)| av - x * e.values[k]).collect();
                prop_assert!(norm(&r) < 1e-10);
            }
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn expm_inverse(a in any_hermitian(), t in -3.0f64..3.0) {
            let u = expm_skew(&a, t).unwrap();
            let v = expm_skew(&a, -t).unwrap();
            prop_assert!((&u * &v).max_abs_diff(&CMatrix::identity(a.dim())) < 1e-12);
            prop_assert!((&u * &u.dagger()).max_abs_diff(&CMatrix::identity(a.dim())) < 1e-12);
        }

        #[test]
        fn commutator_antisymmetric(a in hermitian(3), b in hermitian(3)) {
            let ab = commutator(&a, &b).unwrap();
            let ba = commutator(&b, &a).unwrap();
            prop_assert!((&ab + &ba).max_abs() < 1e-14);
        }

        #[test]
        fn frobenius_conventions_agree(a in any_hermitian()) {
            let lit = frobenius(&a, NormConvention::Literal);
            let sq = frobenius(&a, NormConvention::Sqrt);
            prop_assert!((sq * sq - lit).abs() <= 1e-12 * lit.max(1e-300));
        }
    }
}
