//! Dense complex linear algebra and quantum-information primitives.
//!
//! Matrices are `nalgebra` dense matrices of `Complex64`. Bipartite operators
//! act on `C^{d_A} ⊗ C^{d_B}` with the Alice factor most significant, so the
//! basis vector `|i⟩|j⟩` has index `i * d_B + j`.
//!
//! The Hermitian basis produced by [`hermitian_basis`] uses this ordering:
//! `σ_0 = I/√d`, then for each pair `j < k` in lexicographic order the
//! symmetric element `(|j⟩⟨k| + |k⟩⟨j|)/√2` followed by the antisymmetric
//! element `(-i|j⟩⟨k| + i|k⟩⟨j|)/√2`, and finally the diagonal elements
//! `(Σ_{j<l} |j⟩⟨j| - l|l⟩⟨l|)/√(l(l+1))` for `l = 1..d-1`. For `d = 2`
//! this gives `{I, σ_x, σ_y, σ_z}/√2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::TOL;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Which party of a bipartite system an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

/// A validated Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    /// Validates squareness and `max |M - M†| ≤ 1e-10`.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        if let Some(bad) = m.iter().find(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid(format!("non-finite entry {bad}")));
        }
        let dev = hermitian_deviation(&m);
        if dev > TOL.hermitian {
            return Err(Error::Invalid(format!("matrix is not Hermitian (deviation {dev:e})")));
        }
        Ok(Self(symmetrize(&m)))
    }

    /// Takes the Hermitian part `(M + M†)/2` without validation.
    pub fn from_part(m: &CMatrix) -> Self {
        Self(symmetrize(m))
    }

    pub fn from_real(m: &RMatrix) -> Self {
        Self::from_part(&m.map(|x| c(x, 0.0)))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Largest entry of `|M - M†|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `(M + M†)/2`.
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// A bipartite density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
    split: (usize, usize),
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (slack 1e-9).
    pub fn new(mat: CMatrix, split: (usize, usize)) -> Result<Self> {
        let h = Hermitian::new(mat)?;
        let (da, db) = split;
        if da * db != h.dim() || da == 0 || db == 0 {
            return Err(Error::Dimension(format!(
                "split ({da},{db}) does not match dimension {}",
                h.dim()
            )));
        }
        let tr = h.matrix().trace();
        if (tr.re - 1.0).abs() > TOL.density || tr.im.abs() > TOL.density {
            return Err(Error::Invalid(format!("trace {tr} is not 1")));
        }
        let (evals, _) = herm_eig(&h);
        if evals[0] < -TOL.density {
            return Err(Error::Invalid(format!("negative eigenvalue {:e}", evals[0])));
        }
        Ok(Self { mat: h.into_inner(), split })
    }

    /// Normalizes the trace of a positive operator and validates the result.
    pub fn from_unnormalized(mat: CMatrix, split: (usize, usize)) -> Result<Self> {
        let tr = mat.trace().re;
        if tr.abs() < 1e-300 {
            return Err(Error::Invalid("operator has zero trace".into()));
        }
        Self::new(mat.unscale(tr), split)
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = &psi.amps;
        Self { mat: v * v.adjoint(), split: psi.split }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn split(&self) -> (usize, usize) {
        self.split
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// `Re tr(ρ X)`.
    pub fn expect(&self, x: &CMatrix) -> f64 {
        trace_product(&self.mat, x).re
    }

    pub fn hermitian(&self) -> Hermitian {
        Hermitian(self.mat.clone())
    }

    /// Same matrix with Alice and Bob exchanged.
    pub fn swap_parties(&self) -> DensityMatrix {
        let (da, db) = self.split;
        let p = swap_operator(da, db).map(|x| c(x, 0.0));
        DensityMatrix { mat: &p * &self.mat * p.transpose(), split: (db, da) }
    }
}

/// A normalized bipartite pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: CVector,
    split: (usize, usize),
}

impl PureState {
    pub fn new(amps: CVector, split: (usize, usize)) -> Result<Self> {
        let (da, db) = split;
        if da * db != amps.len() || da == 0 || db == 0 {
            return Err(Error::Dimension(format!(
                "split ({da},{db}) does not match length {}",
                amps.len()
            )));
        }
        let n = amps.norm();
        if (n - 1.0).abs() > TOL.norm {
            return Err(Error::Invalid(format!("state norm {n} is not 1")));
        }
        Ok(Self { amps, split })
    }

    pub fn normalized(amps: CVector, split: (usize, usize)) -> Result<Self> {
        let n = amps.norm();
        if n < 1e-300 {
            return Err(Error::Invalid("zero vector".into()));
        }
        Self::new(amps.unscale(n), split)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn split(&self) -> (usize, usize) {
        self.split
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// `|v⟩⟨v|`.
pub fn ketbra(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Standard basis vector `|i⟩` in dimension `d`.
pub fn basis_ket(d: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[i] = ONE;
    v
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Permutation matrix mapping `|i⟩|j⟩` on `(d_A, d_B)` to `|j⟩|i⟩` on `(d_B, d_A)`.
pub fn swap_operator(da: usize, db: usize) -> RMatrix {
    let n = da * db;
    let mut p = RMatrix::zeros(n, n);
    for i in 0..da {
        for j in 0..db {
            p[(j * da + i, i * db + j)] = 1.0;
        }
    }
    p
}

fn check_split(m: &CMatrix, split: (usize, usize)) -> Result<()> {
    let (da, db) = split;
    if !m.is_square() || m.nrows() != da * db {
        return Err(Error::Dimension(format!(
            "{}x{} matrix does not match split ({da},{db})",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Partial trace over `subsystem`; returns the operator on the other party.
pub fn partial_trace(m: &CMatrix, split: (usize, usize), subsystem: Subsystem) -> Result<CMatrix> {
    check_split(m, split)?;
    let (da, db) = split;
    Ok(match subsystem {
        Subsystem::A => CMatrix::from_fn(db, db, |j, l| {
            (0..da).fold(ZERO, |s, i| s + m[(i * db + j, i * db + l)])
        }),
        Subsystem::B => CMatrix::from_fn(da, da, |i, k| {
            (0..db).fold(ZERO, |s, j| s + m[(i * db + j, k * db + j)])
        }),
    })
}

/// Partial transpose on `subsystem`.
pub fn partial_transpose(m: &CMatrix, split: (usize, usize), subsystem: Subsystem) -> Result<CMatrix> {
    check_split(m, split)?;
    let (da, db) = split;
    let n = da * db;
    Ok(CMatrix::from_fn(n, n, |r, col| {
        let (i, j) = (r / db, r % db);
        let (k, l) = (col / db, col % db);
        match subsystem {
            Subsystem::A => m[(k * db + j, i * db + l)],
            Subsystem::B => m[(i * db + l, k * db + j)],
        }
    }))
}

/// Eigen-decomposition of a Hermitian matrix: eigenvalues ascending and the
/// matching orthonormal eigenvectors as columns.
pub fn herm_eig(h: &Hermitian) -> (Vec<f64>, CMatrix) {
    eig_sorted(h.matrix())
}

fn eig_sorted(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vecs = CMatrix::from_fn(n, n, |r, k| se.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

/// Eigenvalues (ascending) of a real symmetric matrix.
pub fn sym_eigenvalues(m: &RMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Singular values of a real matrix in descending order.
pub fn singular_values_real(m: &RMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `Σ|λ_i(H)|`.
pub fn trace_norm(h: &Hermitian) -> f64 {
    herm_eig(h).0.iter().map(|l| l.abs()).sum()
}

/// Projector onto the span of eigenvectors with eigenvalue `> 1e-10`.
pub fn positive_eigenspace_projector(h: &Hermitian) -> Hermitian {
    let (vals, vecs) = herm_eig(h);
    let n = h.dim();
    let mut p = CMatrix::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        if l > TOL.zero_eig {
            let v = vecs.column(k).into_owned();
            p += ketbra(&v);
        }
    }
    Hermitian::from_part(&p)
}

/// Schmidt decomposition `|ψ⟩ = Σ c_i |a_i⟩|b_i⟩`.
#[derive(Debug, Clone)]
pub struct Schmidt {
    /// Strictly positive coefficients in descending order.
    pub coefficients: Vec<f64>,
    /// Columns are the `|a_i⟩`.
    pub basis_a: CMatrix,
    /// Columns are the `|b_i⟩`.
    pub basis_b: CMatrix,
}

impl Schmidt {
    pub fn reconstruct(&self) -> CVector {
        let (da, db) = (self.basis_a.nrows(), self.basis_b.nrows());
        let mut v = CVector::zeros(da * db);
        for (k, &ck) in self.coefficients.iter().enumerate() {
            let a = self.basis_a.column(k);
            let b = self.basis_b.column(k);
            for i in 0..da {
                for j in 0..db {
                    v[i * db + j] += a[i] * b[j] * ck;
                }
            }
        }
        v
    }
}

/// Schmidt decomposition via the SVD of the amplitude matrix.
pub fn schmidt(psi: &PureState) -> Schmidt {
    let (da, db) = psi.split;
    let m = CMatrix::from_fn(da, db, |i, j| psi.amps[i * db + j]);
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| svd.singular_values[k] > 1e-12)
        .collect();
    let coefficients = keep.iter().map(|&k| svd.singular_values[k]).collect();
    let basis_a = CMatrix::from_fn(da, keep.len(), |i, k| u[(i, keep[k])]);
    let basis_b = CMatrix::from_fn(db, keep.len(), |j, k| vt[(keep[k], j)]);
    Schmidt { coefficients, basis_a, basis_b }
}

/// Orthonormal Hermitian basis `σ_0..σ_{d²-1}` (ordering in the module docs).
#[derive(Debug, Clone)]
pub struct HermitianBasis {
    pub d: usize,
    pub elements: Vec<CMatrix>,
}

impl HermitianBasis {
    /// Expansion coefficients `tr(H σ_n)`.
    pub fn coefficients(&self, h: &CMatrix) -> Vec<f64> {
        self.elements.iter().map(|s| trace_product(h, s).re).collect()
    }

    /// `Σ y_n σ_n`.
    pub fn combine(&self, y: &[f64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.d, self.d);
        for (s, &yn) in self.elements.iter().zip(y) {
            m += s.scale(yn);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

pub fn hermitian_basis(d: usize) -> HermitianBasis {
    let mut elements = Vec::with_capacity(d * d);
    elements.push(identity(d).unscale((d as f64).sqrt()));
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in (j + 1)..d {
            let mut s = CMatrix::zeros(d, d);
            s[(j, k)] = c(r, 0.0);
            s[(k, j)] = c(r, 0.0);
            elements.push(s);
            let mut a = CMatrix::zeros(d, d);
            a[(j, k)] = c(0.0, -r);
            a[(k, j)] = c(0.0, r);
            elements.push(a);
        }
    }
    for l in 1..d {
        let norm = ((l * (l + 1)) as f64).sqrt();
        let mut m = CMatrix::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = c(1.0 / norm, 0.0);
        }
        m[(l, l)] = c(-(l as f64) / norm, 0.0);
        elements.push(m);
    }
    HermitianBasis { d, elements }
}

/// Expansion of a two-qudit state in the product Hermitian basis.
#[derive(Debug, Clone)]
pub struct Coherence {
    /// `[r_A]_i = tr(ρ σ_i⊗σ_0)`, `i = 1..d²-1`.
    pub r_a: DVector<f64>,
    /// `[r_B]_j = tr(ρ σ_0⊗σ_j)`.
    pub r_b: DVector<f64>,
    /// `[R']_ij = tr(ρ σ_i⊗σ_j)`, `i, j ≥ 1`.
    pub r: RMatrix,
}

impl Coherence {
    /// Rebuilds `ρ = I/d² + Σ r_A σ_i⊗σ_0 + Σ r_B σ_0⊗σ_j + Σ R' σ_i⊗σ_j`.
    pub fn reconstruct(&self, basis: &HermitianBasis) -> CMatrix {
        let d = basis.d;
        let s = &basis.elements;
        let mut m = identity(d * d).unscale((d * d) as f64);
        for i in 1..d * d {
            m += kron(&s[i], &s[0]).scale(self.r_a[i - 1]);
            m += kron(&s[0], &s[i]).scale(self.r_b[i - 1]);
            for j in 1..d * d {
                m += kron(&s[i], &s[j]).scale(self.r[(i - 1, j - 1)]);
            }
        }
        m
    }
}

/// Full correlation tensor `T_ij = tr(ρ σ^A_i ⊗ σ^B_j)` for `i, j ≥ 0`.
pub fn correlation_tensor(rho: &DensityMatrix) -> RMatrix {
    let (da, db) = rho.split();
    let ba = hermitian_basis(da);
    let bb = hermitian_basis(db);
    RMatrix::from_fn(da * da, db * db, |i, j| {
        bilinear_trace(rho.matrix(), &ba.elements[i], &bb.elements[j], db)
    })
}

/// `Re tr(ρ X⊗Y)` computed without forming the product.
pub fn bilinear_trace(rho: &CMatrix, x: &CMatrix, y: &CMatrix, db: usize) -> f64 {
    let da = x.nrows();
    let mut s = ZERO;
    for i in 0..da {
        for k in 0..da {
            let xki = x[(k, i)];
            if xki == ZERO {
                continue;
            }
            for j in 0..db {
                for l in 0..db {
                    let ylj = y[(l, j)];
                    if ylj != ZERO {
                        s += rho[(i * db + j, k * db + l)] * xki * ylj;
                    }
                }
            }
        }
    }
    s.re
}

pub fn coherence_decomposition(rho: &DensityMatrix) -> Result<Coherence> {
    let (da, db) = rho.split();
    if da != db {
        return Err(Error::Dimension(format!("coherence decomposition needs d_A = d_B, got ({da},{db})")));
    }
    let t = correlation_tensor(rho);
    let n = da * da;
    Ok(Coherence {
        r_a: DVector::from_fn(n - 1, |i, _| t[(i + 1, 0)]),
        r_b: DVector::from_fn(n - 1, |j, _| t[(0, j + 1)]),
        r: RMatrix::from_fn(n - 1, n - 1, |i, j| t[(i + 1, j + 1)]),
    })
}

/// Peres test: minimum eigenvalue of the partial transpose ≥ -1e-9.
pub fn is_ppt(rho: &DensityMatrix) -> bool {
    ppt_min_eigenvalue(rho) >= -TOL.ppt
}

pub fn ppt_min_eigenvalue(rho: &DensityMatrix) -> f64 {
    let pt = partial_transpose(rho.matrix(), rho.split(), Subsystem::B).expect("split is valid");
    min_eigenvalue(&pt)
}

/// Haar-random unitary (QR of a complex Ginibre matrix with phase fix).
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(d, d, rng);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q.clone();
    for k in 0..d {
        let rk = r[(k, k)];
        let ph = if rk.norm() > 0.0 { rk / rk.norm() } else { ONE };
        for i in 0..d {
            u[(i, k)] = q[(i, k)] * ph;
        }
    }
    u
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Random density matrix `G G† / tr(G G†)` with `G` a `n × rank` Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(split: (usize, usize), rank: usize, rng: &mut R) -> DensityMatrix {
    let n = split.0 * split.1;
    let g = ginibre(n, rank.max(1), rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix { mat: symmetrize(&m.unscale(tr)), split }
}

pub fn random_pure<R: Rng + ?Sized>(split: (usize, usize), rng: &mut R) -> PureState {
    let g = ginibre(split.0 * split.1, 1, rng);
    let v = g.column(0).into_owned();
    let n = v.norm();
    PureState { amps: v.unscale(n), split }
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Hermitian {
    Hermitian::from_part(&ginibre(d, d, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn singlet() -> DensityMatrix {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v = CVector::from_vec(vec![ZERO, c(r, 0.0), c(-r, 0.0), ZERO]);
        PureState::new(v, (2, 2)).unwrap().density()
    }

    #[test]
    fn kron_of_paulis() {
        let zz = kron(&pauli_z(), &pauli_z());
        let expect = [1.0, -1.0, -1.0, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { expect[i] } else { 0.0 };
                assert_eq!(zz[(i, j)], c(e, 0.0));
            }
        }
    }

    #[test]
    fn kron_identity_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ginibre(3, 3, &mut rng);
        let k = kron(&identity(2), &m);
        for b in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(k[(3 * b + i, 3 * b + j)], m[(i, j)]);
                    assert_eq!(k[(3 * b + i, 3 * (1 - b) + j)], ZERO);
                }
            }
        }
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b, cc) = (ginibre(2, 2, &mut rng), ginibre(2, 2, &mut rng), ginibre(2, 2, &mut rng));
        let l = kron(&kron(&a, &b), &cc);
        let r = kron(&a, &kron(&b, &cc));
        assert!((l - r).norm() < 1e-12);
    }

    #[test]
    fn singlet_marginal_is_maximally_mixed() {
        let m = partial_trace(singlet().matrix(), (2, 2), Subsystem::A).unwrap();
        assert!((m - identity(2).scale(0.5)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ra = random_density((2, 1), 2, &mut rng);
        let rb = random_density((3, 1), 3, &mut rng);
        let p = kron(ra.matrix(), rb.matrix());
        let m = partial_trace(&p, (2, 3), Subsystem::B).unwrap();
        assert!((m - ra.matrix()).norm() < 1e-12);
        let m = partial_trace(&p, (2, 3), Subsystem::A).unwrap();
        assert!((m - rb.matrix()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_preserves_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = ginibre(6, 6, &mut rng);
        for sub in [Subsystem::A, Subsystem::B] {
            let t = partial_trace(&m, (2, 3), sub).unwrap().trace();
            assert!((t - m.trace()).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_rejects_bad_split() {
        let m = identity(6);
        assert!(partial_trace(&m, (2, 2), Subsystem::A).is_err());
        assert!(partial_transpose(&m, (4, 2), Subsystem::A).is_err());
    }

    #[test]
    fn singlet_partial_transpose_min_eigenvalue() {
        let pt = partial_transpose(singlet().matrix(), (2, 2), Subsystem::A).unwrap();
        assert!((min_eigenvalue(&pt) + 0.5).abs() < 1e-12);
        assert!(!is_ppt(&singlet()));
    }

    #[test]
    fn product_state_is_ppt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ra = random_density((2, 1), 2, &mut rng);
        let rb = random_density((2, 1), 2, &mut rng);
        let rho = DensityMatrix::new(kron(ra.matrix(), rb.matrix()), (2, 2)).unwrap();
        assert!(is_ppt(&rho));
    }

    #[test]
    fn partial_transpose_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = ginibre(6, 6, &mut rng);
        for sub in [Subsystem::A, Subsystem::B] {
            let once = partial_transpose(&m, (3, 2), sub).unwrap();
            let twice = partial_transpose(&once, (3, 2), sub).unwrap();
            assert!((twice - &m).norm() < 1e-14);
        }
    }

    #[test]
    fn eig_of_sigma_x() {
        let (vals, vecs) = herm_eig(&Hermitian::new(pauli_x()).unwrap());
        assert!((vals[0] + 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let v0 = vecs.column(0);
        assert!((v0[0] + v0[1]).norm() < 1e-12);
        let v1 = vecs.column(1);
        assert!((v1[0] - v1[1]).norm() < 1e-12);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_hermitian(8, &mut rng);
        let (vals, vecs) = herm_eig(&h);
        let mut r = CMatrix::zeros(8, 8);
        for k in 0..8 {
            let v = vecs.column(k).into_owned();
            r += ketbra(&v).scale(vals[k]);
            assert!((h.matrix() * &v - v.scale(vals[k])).norm() < 1e-9);
        }
        assert!((r - h.matrix()).norm() < 1e-8);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn non_hermitian_rejected() {
        assert!(Hermitian::new(CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE])).is_err());
    }

    #[test]
    fn singular_values_basic() {
        let m = CMatrix::from_row_slice(2, 2, &[c(3.0, 0.0), ZERO, ZERO, c(-2.0, 0.0)]);
        assert_eq!(singular_values(&m), vec![3.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = haar_unitary(4, &mut rng);
        for s in singular_values(&u) {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = RMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = singular_values_real(&m);
        let mut e: Vec<f64> = sym_eigenvalues(&(m.transpose() * &m)).iter().map(|x| x.sqrt()).collect();
        e.reverse();
        for (a, b) in s.iter().zip(&e) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_norm_cases() {
        assert!((trace_norm(&Hermitian::new(pauli_z()).unwrap()) - 2.0).abs() < 1e-14);
        assert_eq!(trace_norm(&Hermitian::new(CMatrix::zeros(3, 3)).unwrap()), 0.0);
    }

    #[test]
    fn projector_cases() {
        let p = positive_eigenspace_projector(&Hermitian::new(pauli_z()).unwrap());
        let e = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
        assert!((p.matrix() - e).norm() < 1e-12);
        let p = positive_eigenspace_projector(&Hermitian::new(-identity(3)).unwrap());
        assert!(p.matrix().norm() < 1e-14);
    }

    #[test]
    fn projector_attains_subset_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = random_hermitian(4, &mut rng);
        let p = positive_eigenspace_projector(&h);
        let best = trace_product(h.matrix(), p.matrix()).re;
        let (vals, vecs) = herm_eig(&h);
        for mask in 0u32..16 {
            let mut q = CMatrix::zeros(4, 4);
            for k in 0..4 {
                if mask & (1 << k) != 0 {
                    q += ketbra(&vecs.column(k).into_owned());
                }
            }
            assert!(trace_product(h.matrix(), &q).re <= best + 1e-10);
        }
        let pos: f64 = vals.iter().filter(|&&l| l > 0.0).sum();
        assert!((best - pos).abs() < 1e-10);
        assert!((p.matrix() * p.matrix() - p.matrix()).norm() < 1e-8);
    }

    #[test]
    fn schmidt_cases() {
        let s5 = 5f64.sqrt();
        let v = CVector::from_vec(vec![c(2.0 / s5, 0.0), ZERO, ZERO, c(1.0 / s5, 0.0)]);
        let s = schmidt(&PureState::new(v.clone(), (2, 2)).unwrap());
        assert!((s.coefficients[0] - 2.0 / s5).abs() < 1e-12);
        assert!((s.coefficients[1] - 1.0 / s5).abs() < 1e-12);
        assert!((s.reconstruct() - v).norm() < 1e-12);
        let p = CVector::from_vec(vec![ZERO, ONE, ZERO, ZERO]);
        let s = schmidt(&PureState::new(p, (2, 2)).unwrap());
        assert_eq!(s.coefficients.len(), 1);
        assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schmidt_matches_reduced_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = random_pure((3, 3), &mut rng);
        let s = schmidt(&psi);
        let red = partial_trace(psi.density().matrix(), (3, 3), Subsystem::B).unwrap();
        let (mut ev, _) = herm_eig(&Hermitian::from_part(&red));
        ev.reverse();
        for (ci, l) in s.coefficients.iter().zip(&ev) {
            assert!((ci * ci - l).abs() < 1e-10);
        }
        assert!((s.reconstruct() - psi.amplitudes()).norm() < 1e-8);
        let total: f64 = s.coefficients.iter().map(|x| x * x).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn qubit_basis_is_scaled_paulis() {
        let b = hermitian_basis(2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [identity(2), pauli_x(), pauli_y(), pauli_z()];
        for (s, e) in b.elements.iter().zip(&expect) {
            assert!((s - e.scale(r)).norm() < 1e-14);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        for d in 2..=4 {
            let b = hermitian_basis(d);
            assert_eq!(b.len(), d * d);
            for (n, s) in b.elements.iter().enumerate() {
                let t = s.trace();
                let expect = if n == 0 { (d as f64).sqrt() } else { 0.0 };
                assert!((t.re - expect).abs() < 1e-10 && t.im.abs() < 1e-10);
                for (m, q) in b.elements.iter().enumerate() {
                    let g = trace_product(s, q);
                    let e = if n == m { 1.0 } else { 0.0 };
                    assert!((g - c(e, 0.0)).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn basis_expansion_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = hermitian_basis(3);
        let h = random_hermitian(3, &mut rng);
        let y = b.coefficients(h.matrix());
        assert!((b.combine(&y) - h.matrix()).norm() < 1e-9);
    }

    #[test]
    fn coherence_of_singlet_and_mixed() {
        let rho = singlet();
        let co = coherence_decomposition(&rho).unwrap();
        assert!(co.r_a.norm() < 1e-12 && co.r_b.norm() < 1e-12);
        let b = hermitian_basis(2);
        for i in 1..4 {
            for j in 1..4 {
                let direct = rho.expect(&kron(&b.elements[i], &b.elements[j]));
                assert!((co.r[(i - 1, j - 1)] - direct).abs() < 1e-12);
            }
        }
        // Singlet correlations are -δ_ij in the Pauli basis, so -δ_ij/2 here.
        assert!((co.r.clone() + RMatrix::identity(3, 3).scale(0.5)).norm() < 1e-12);
        let mixed = DensityMatrix::new(identity(9).unscale(9.0), (3, 3)).unwrap();
        let co = coherence_decomposition(&mixed).unwrap();
        assert!(co.r.norm() < 1e-12 && co.r_a.norm() < 1e-12);
    }

    #[test]
    fn coherence_reconstructs_random_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = random_density((3, 3), 4, &mut rng);
        let co = coherence_decomposition(&rho).unwrap();
        let back = co.reconstruct(&hermitian_basis(3));
        assert!((back - rho.matrix()).norm() < 1e-9);
    }

    #[test]
    fn swap_parties_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rho = random_density((2, 3), 6, &mut rng);
        let sw = rho.swap_parties();
        assert_eq!(sw.split(), (3, 2));
        let a = partial_trace(rho.matrix(), (2, 3), Subsystem::B).unwrap();
        let a2 = partial_trace(sw.matrix(), (3, 2), Subsystem::A).unwrap();
        assert!((a - a2).norm() < 1e-12);
        assert!((sw.swap_parties().matrix() - rho.matrix()).norm() < 1e-14);
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(identity(4), (2, 2)).is_err());
        assert!(DensityMatrix::new(identity(4).scale(0.25), (2, 3)).is_err());
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), ZERO, ZERO, c(-0.5, 0.0)]);
        assert!(DensityMatrix::new(bad, (2, 1)).is_err());
    }
}
