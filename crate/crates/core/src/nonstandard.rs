//! Closed-form Bell-CH and I22dd values, collective measurements on copies of
//! a state, and local filtering.
//!
//! Pure states are taken in Schmidt form `Σ c_i |ii⟩` with `c` in descending
//! order. For odd `d` the two-dimensional blocks of the measurement operators
//! are padded with the corner element `Ξ_dd = 1`.

use serde::{Deserialize, Serialize};

use crate::bell::MeasurementAssignment;
use crate::error::{Error, Result};
use crate::lb::{horodecki_values, HorodeckiValues};
use crate::qcore::{
    c, identity, kron, ketbra, pauli_x, pauli_z, singular_values, CMatrix, CVector, DensityMatrix, Hermitian,
    PureState,
};
use crate::states::{gisin, werner};

/// Largest total dimension `(d_A d_B)^N` accepted by [`tensor_power`].
pub const MAX_COLLECTIVE_DIM: usize = 1024;

/// Split of `N` copies of a bipartite system, with the site-grouping map
/// `(A₁B₁…A_NB_N) → (A₁…A_N)(B₁…B_N)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectiveSplit {
    pub base: (usize, usize),
    pub copies: usize,
    /// `permutation[g]` is the copy-ordered index of grouped index `g`.
    pub permutation: Vec<usize>,
}

impl CollectiveSplit {
    pub fn new(base: (usize, usize), copies: usize) -> Result<Self> {
        let (da, db) = base;
        if da == 0 || db == 0 || copies == 0 {
            return Err(Error::Range("collective split needs positive dimensions and copies".into()));
        }
        let total = (da * db)
            .checked_pow(copies as u32)
            .filter(|&t| t <= MAX_COLLECTIVE_DIM * MAX_COLLECTIVE_DIM)
            .ok_or_else(|| Error::Range(format!("{copies} copies of {da}x{db} is too large")))?;
        let (na, nb) = (da.pow(copies as u32), db.pow(copies as u32));
        let mut permutation = vec![0; total];
        for ia in 0..na {
            for ib in 0..nb {
                let (mut ra, mut rb, mut site, mut w) = (ia, ib, 0, 1);
                for _ in 0..copies {
                    site += ((ra % da) * db + rb % db) * w;
                    w *= da * db;
                    ra /= da;
                    rb /= db;
                }
                permutation[ia * nb + ib] = site;
            }
        }
        Ok(Self { base, copies, permutation })
    }

    /// `(d_A^N, d_B^N)`.
    pub fn grouped(&self) -> (usize, usize) {
        (self.base.0.pow(self.copies as u32), self.base.1.pow(self.copies as u32))
    }
}

fn kron_power(m: &CMatrix, n: usize) -> CMatrix {
    (1..n).fold(m.clone(), |acc, _| kron(&acc, m))
}

/// `ρ^{⊗N}` with all of Alice's factors first.
pub fn tensor_power(rho: &DensityMatrix, n: usize) -> Result<DensityMatrix> {
    let split = CollectiveSplit::new(rho.split(), n)?;
    let dim = split.permutation.len();
    if dim > MAX_COLLECTIVE_DIM {
        return Err(Error::Range(format!("ρ^⊗{n} has dimension {dim} > {MAX_COLLECTIVE_DIM}")));
    }
    let sites = kron_power(rho.matrix(), n);
    let p = &split.permutation;
    DensityMatrix::new(CMatrix::from_fn(dim, dim, |i, j| sites[(p[i], p[j])]), split.grouped())
}

/// `|ψ⟩^{⊗N}` with all of Alice's factors first.
pub fn tensor_power_pure(psi: &PureState, n: usize) -> Result<PureState> {
    let split = CollectiveSplit::new(psi.split(), n)?;
    let a = psi.amplitudes();
    let sites = (1..n).fold(a.clone(), |acc, _| acc.kronecker(a));
    let v = CVector::from_fn(split.permutation.len(), |i, _| sites[split.permutation[i]]);
    PureState::new(v, split.grouped())
}

/// Schmidt coefficients sorted descending, zero-padded to length `d`, after
/// checking they are finite, nonnegative and normalized.
fn prepare_coefficients(coeffs: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 0 || coeffs.len() > d {
        return Err(Error::Dimension(format!("{} Schmidt coefficients for d = {d}", coeffs.len())));
    }
    if coeffs.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Range("Schmidt coefficients must be finite and nonnegative".into()));
    }
    let norm: f64 = coeffs.iter().map(|x| x * x).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Range(format!("Schmidt coefficients have squared norm {norm}")));
    }
    let mut c = coeffs.to_vec();
    c.sort_by(|a, b| b.total_cmp(a));
    c.resize(d, 0.0);
    Ok(c)
}

fn kappa(a: f64, b: f64) -> f64 {
    let s = a * a + b * b;
    (s * s + 4.0 * a * a * b * b).sqrt()
}

/// Bell-CH value of `Σ c_i |ii⟩` under the pairwise-block measurements of
/// [`pure_ch_measurements`].
pub fn pure_ch_value(coeffs: &[f64], d: usize) -> Result<f64> {
    let c = prepare_coefficients(coeffs, d)?;
    let xi = (d % 2) as f64;
    let blocks: f64 = (0..d / 2).map(|n| kappa(c[2 * n], c[2 * n + 1])).sum();
    Ok(0.5 * blocks + 0.5 * xi * c[d - 1] * c[d - 1] - 0.5)
}

/// Measurements attaining [`pure_ch_value`] for the CH inequality, outcome 0
/// being "+". Alice measures `Z = ⊕σ_z + Ξ` and `X = ⊕σ_x + Ξ`; Bob projects
/// onto the positive eigenvectors of each 2×2 block.
pub fn pure_ch_measurements(coeffs: &[f64], d: usize) -> Result<MeasurementAssignment> {
    let c = prepare_coefficients(coeffs, d)?;
    let odd = d % 2 == 1;
    let block_sum = |blk: &CMatrix| {
        let mut m = CMatrix::zeros(d, d);
        for n in 0..d / 2 {
            m.view_mut((2 * n, 2 * n), (2, 2)).copy_from(blk);
        }
        if odd {
            m[(d - 1, d - 1)] = c_re(1.0);
        }
        m
    };
    let id = identity(d);
    let z = block_sum(&pauli_z());
    let x = block_sum(&pauli_x());
    let plus = |o: &CMatrix| (&id + o).scale(0.5);
    let alice = [plus(&z), plus(&x)];

    let mut bob = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let mut p = CMatrix::zeros(d, d);
        for n in 0..d / 2 {
            let (a, b) = (c[2 * n], c[2 * n + 1]);
            let mut v = CVector::zeros(d);
            if a * b > 0.0 {
                // Unit norm needs η_{n,-} = 1/√(2κ(κ + a² + b²)) on v_{n,+}.
                let k = kappa(a, b);
                let eta = 1.0 / (2.0 * k * (k + a * a + b * b)).sqrt();
                v[2 * n] = c_re(eta * (a * a + b * b + k));
                v[2 * n + 1] = c_re(sign * eta * 2.0 * a * b);
            } else {
                // Block diag(a², 0) or zero: keep the first basis vector.
                v[2 * n] = c_re(1.0);
            }
            p += ketbra(&v);
        }
        if odd {
            p[(d - 1, d - 1)] = c_re(1.0);
        }
        bob.push(p);
    }
    MeasurementAssignment::from_projectors(&alice, &bob)
}

fn c_re(x: f64) -> crate::qcore::C64 {
    c(x, 0.0)
}

/// [`pure_ch_value`] of the maximally entangled state of dimension `d`.
pub fn me_ch_value(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Range("dimension must be positive".into()));
    }
    let df = d as f64;
    Ok(if d % 2 == 0 {
        std::f64::consts::FRAC_1_SQRT_2 - 0.5
    } else {
        (2f64.sqrt() * (df - 1.0) + 1.0) / (2.0 * df) - 0.5
    })
}

/// Schmidt coefficients of `N` copies of `Σ c_i |ii⟩`, descending.
pub fn ncopy_coefficients(coeffs: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Range("number of copies must be positive".into()));
    }
    let total = coeffs.len().checked_pow(n as u32).filter(|&t| t <= 1 << 20);
    if total.is_none() {
        return Err(Error::Range(format!("{n} copies of {} coefficients is too large", coeffs.len())));
    }
    let mut out = vec![1.0];
    for _ in 0..n {
        out = out.iter().flat_map(|x| coeffs.iter().map(move |y| x * y)).collect();
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// CH value of a standard experiment on `N` copies of `Σ c_i |ii⟩`, treating
/// the copies as one `d^N`-dimensional system per party.
pub fn ncopy_pure_ch_value(coeffs: &[f64], n: usize) -> Result<f64> {
    let cn = ncopy_coefficients(coeffs, n)?;
    let d = cn.len();
    pure_ch_value(&cn, d)
}

/// CH value on `N` copies of `cos φ|00⟩ + sin φ|11⟩`, from the weight `p` of
/// the perfectly correlated two-dimensional subspaces.
pub fn ncopy_two_qubit_value(phi: f64, n: usize) -> Result<f64> {
    if !(0.0..=std::f64::consts::FRAC_PI_4 + 1e-12).contains(&phi) {
        return Err(Error::Range(format!("φ = {phi} outside [0, π/4]")));
    }
    if n == 0 {
        return Err(Error::Range("number of copies must be positive".into()));
    }
    let (t2, c2) = (phi.tan().powi(2), phi.cos().powi(2));
    let m_max = n - 1;
    // C(N-1, m) is odd iff the bits of m are a subset of those of N-1.
    let sum: f64 = (0..=m_max).filter(|m| m & !m_max == 0).map(|m| 2.0 * t2.powi(m as i32)).sum();
    let p = 1.0 - 0.5 * c2.powi(m_max as i32) * sum;
    let s2 = (2.0 * phi).sin().powi(2);
    Ok(p * std::f64::consts::FRAC_1_SQRT_2 + 0.5 * (1.0 - p) * (1.0 + s2).sqrt() - 0.5)
}

fn check_i22dd_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Range(format!("I22dd needs d ≥ 2, got {d}")));
    }
    Ok(())
}

/// Best known CGLMP value of the maximally entangled state of dimension `d`
/// under rank-one projective measurements,
/// `4d Σ_k (1 - 2k/(d-1)) (q_k - q_{-(k+1)})` with
/// `q_k = 1/(2d³ sin²[π(k + 1/4)/d])`.
pub fn cglmp_me_value(d: usize) -> Result<f64> {
    check_i22dd_dim(d)?;
    let df = d as f64;
    let q = |k: f64| 1.0 / (2.0 * df.powi(3) * (std::f64::consts::PI * (k + 0.25) / df).sin().powi(2));
    let sum: f64 = (0..d / 2)
        .map(|k| {
            let k = k as f64;
            (1.0 - 2.0 * k / (df - 1.0)) * (q(k) - q(-(k + 1.0)))
        })
        .sum();
    Ok(4.0 * df * sum)
}

/// Best known I22dd value of the maximally entangled state, `(d-1)/(2d) (I_d - 2)`.
pub fn i22dd_me_value(d: usize) -> Result<f64> {
    let df = d as f64;
    Ok((df - 1.0) / (2.0 * df) * (cglmp_me_value(d)? - 2.0))
}

/// `p V_d + (1 - p)(-1 + 1/d)` for the isotropic state of weight `p`.
pub fn i22dd_isotropic_value(d: usize, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("isotropic p = {p} outside [0, 1]")));
    }
    let v = i22dd_me_value(d)?;
    Ok(p * v + (1.0 - p) * (1.0 / d as f64 - 1.0))
}

/// Weight at which [`i22dd_isotropic_value`] crosses zero.
pub fn i22dd_isotropic_threshold(d: usize) -> Result<f64> {
    let v = i22dd_me_value(d)?;
    let w = 1.0 - 1.0 / d as f64;
    Ok(w / (v + w))
}

/// One term `F_A ⊗ F_B` of a separable local filtering map.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    pub f_a: CMatrix,
    pub f_b: CMatrix,
}

impl FilterPair {
    /// Each factor with largest singular value above one is rescaled to one.
    pub fn new(f_a: CMatrix, f_b: CMatrix) -> Result<Self> {
        let fix = |f: CMatrix, who: &str| -> Result<CMatrix> {
            if f.is_empty() || f.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Invalid(format!("{who} filter must be nonempty and finite")));
            }
            let s = singular_values(&f)[0];
            Ok(if s > 1.0 + 1e-9 { f.unscale(s) } else { f })
        };
        Ok(Self { f_a: fix(f_a, "Alice")?, f_b: fix(f_b, "Bob")? })
    }

    pub fn identity(da: usize, db: usize) -> Self {
        Self { f_a: identity(da), f_b: identity(db) }
    }

    /// `diag(√tan θ, 1)` on both qubits.
    pub fn gisin(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4 + 1e-12) {
            return Err(Error::Range(format!("θ = {theta} outside (0, π/4]")));
        }
        let f = CMatrix::from_diagonal(&CVector::from_vec(vec![c_re(theta.tan().sqrt()), c_re(1.0)]));
        Self::new(f.clone(), f)
    }

    /// Projection of both parties onto `span{|0⟩, |1⟩}` as a `2 × d` map.
    pub fn two_dim_projection(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Range(format!("projection onto two dimensions needs d ≥ 2, got {d}")));
        }
        let p = CMatrix::from_fn(2, d, |i, j| c_re(if i == j { 1.0 } else { 0.0 }));
        Self::new(p.clone(), p)
    }

    fn kron(&self) -> CMatrix {
        kron(&self.f_a, &self.f_b)
    }
}

/// `Σ (F_A⊗F_B) ρ (F_A⊗F_B)†`, normalized, and its trace before
/// normalization (the success probability).
pub fn apply_filter(rho: &DensityMatrix, filters: &[FilterPair]) -> Result<(DensityMatrix, f64)> {
    let first = filters.first().ok_or_else(|| Error::Invalid("empty filter list".into()))?;
    let (da, db) = rho.split();
    let out_split = (first.f_a.nrows(), first.f_b.nrows());
    let mut out = CMatrix::zeros(out_split.0 * out_split.1, out_split.0 * out_split.1);
    for f in filters {
        if f.f_a.ncols() != da || f.f_b.ncols() != db || (f.f_a.nrows(), f.f_b.nrows()) != out_split {
            return Err(Error::Dimension(format!(
                "filter {}x{} ⊗ {}x{} does not fit state {da}x{db}",
                f.f_a.nrows(),
                f.f_a.ncols(),
                f.f_b.nrows(),
                f.f_b.ncols()
            )));
        }
        let k = f.kron();
        out += &k * rho.matrix() * k.adjoint();
    }
    let p_suc = out.trace().re;
    if !(p_suc > 1e-14) {
        return Err(Error::Invalid("filter annihilates the state".into()));
    }
    Ok((DensityMatrix::from_unnormalized(out, out_split)?, p_suc))
}

/// Outcome of filtering `ρ_G(p, θ)` with [`FilterPair::gisin`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GisinReport {
    pub p: f64,
    pub theta: f64,
    pub success_probability: f64,
    pub unfiltered: HorodeckiValues,
    pub filtered: HorodeckiValues,
}

pub fn gisin_pipeline(p: f64, theta: f64) -> Result<GisinReport> {
    let rho = gisin(p, theta)?;
    let (filtered_state, success_probability) = apply_filter(&rho, &[FilterPair::gisin(theta)?])?;
    Ok(GisinReport {
        p,
        theta,
        success_probability,
        unfiltered: horodecki_values(&rho)?,
        filtered: horodecki_values(&filtered_state)?,
    })
}

/// The filtered Gisin state in closed form.
pub fn gisin_filtered_closed_form(p: f64, theta: f64) -> Result<(DensityMatrix, f64)> {
    let t = theta.tan();
    let s = (2.0 * theta).sin();
    let p_suc = t * (1.0 - p * (1.0 - s));
    let phi = crate::states::max_entangled(2)?;
    let m = ketbra(phi.amplitudes()).scale(p * s)
        + (ketbra(&crate::qcore::basis_ket(4, 1)) + ketbra(&crate::qcore::basis_ket(4, 2))).scale(0.5 * (1.0 - p));
    Ok((DensityMatrix::new(m.scale(t / p_suc), (2, 2))?, p_suc))
}

/// `(d/(d+2)) 2√2`.
pub fn popescu_chsh_value(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::Range(format!("d = {d} must be at least 2")));
    }
    let df = d as f64;
    Ok(df / (df + 2.0) * 2.0 * std::f64::consts::SQRT_2)
}

/// Outcome of projecting `werner(d, 1 - 1/d)` onto two dimensions per party.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopescuReport {
    pub d: usize,
    pub success_probability: f64,
    /// Weight of the two-qubit Werner state obtained.
    pub p_prime: f64,
    /// CHSH value of the singlet-optimal measurements, `2√(ς₁² + ς₂²)`.
    pub chsh: f64,
    pub filtered: HorodeckiValues,
}

pub fn popescu_pipeline(d: usize) -> Result<PopescuReport> {
    let rho = werner(d, 1.0 - 1.0 / d as f64)?;
    let (out, success_probability) = apply_filter(&rho, &[FilterPair::two_dim_projection(d)?])?;
    let filtered = horodecki_values(&out)?;
    // A two-qubit Werner state has T = -p' I.
    let t = crate::lb::horodecki_t(&out)?;
    Ok(PopescuReport {
        d,
        success_probability,
        p_prime: -t.trace() / 3.0,
        chsh: 2.0 * filtered.m_value.sqrt(),
        filtered,
    })
}

/// `H_θ = I⊗I - cos θ σ_x⊗σ_x - sin θ σ_z⊗σ_z` for `θ ∈ [0, π/4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HThetaWitness {
    pub theta: f64,
    pub matrix: Hermitian,
}

pub fn h_theta(theta: f64) -> Result<HThetaWitness> {
    if !(0.0..=std::f64::consts::FRAC_PI_4 + 1e-12).contains(&theta) {
        return Err(Error::Range(format!("θ = {theta} outside [0, π/4]")));
    }
    let (x, z) = (pauli_x(), pauli_z());
    let m = identity(4) - kron(&x, &x).scale(theta.cos()) - kron(&z, &z).scale(theta.sin());
    Ok(HThetaWitness { theta, matrix: Hermitian::from_part(&m) })
}

/// `tr[ρ (F_A⊗F_B)† H_θ (F_A⊗F_B)]` with `F_A, F_B` mapping into qubits.
/// Negative values certify CHSH violation after the filtering.
pub fn witness_value(rho: &DensityMatrix, f_a: &CMatrix, f_b: &CMatrix, theta: f64) -> Result<f64> {
    let (da, db) = rho.split();
    if f_a.shape() != (2, da) || f_b.shape() != (2, db) {
        return Err(Error::Dimension(format!(
            "filters must be 2x{da} and 2x{db}, got {:?} and {:?}",
            f_a.shape(),
            f_b.shape()
        )));
    }
    let h = h_theta(theta)?;
    let k = kron(f_a, f_b);
    Ok(rho.expect(&(k.adjoint() * h.matrix.matrix() * k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::ch;
    use crate::lb::{assignment_value, optimize_bob_two_outcome};
    use crate::qcore::{ginibre, is_ppt, random_density, random_pure, schmidt};
    use crate::states::{max_entangled, pure_schmidt, singlet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normalized(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn tensor_power_single_copy_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density((2, 3), 6, &mut rng);
        let out = tensor_power(&rho, 1).unwrap();
        assert!((out.matrix() - rho.matrix()).norm() < 1e-14);
        assert_eq!(out.split(), (2, 3));
    }

    #[test]
    fn two_singlets_have_flat_schmidt_spectrum() {
        let psi = tensor_power_pure(&singlet(), 2).unwrap();
        let s = schmidt(&psi);
        assert_eq!(s.coefficients.len(), 4);
        assert!(s.coefficients.iter().all(|x| (x - 0.5).abs() < 1e-12));
        let rho = tensor_power(&singlet().density(), 2).unwrap();
        assert!((rho.matrix() - psi.density().matrix()).norm() < 1e-12);
    }

    #[test]
    fn tensor_power_preserves_trace_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let rho = random_density((2, 2), 3, &mut rng);
            let out = tensor_power(&rho, 2).unwrap();
            assert_eq!(out.split(), (4, 4));
            assert!((out.matrix().trace().re - 1.0).abs() < 1e-12);
            assert!(crate::qcore::min_eigenvalue(out.matrix()) > -1e-12);
        }
    }

    #[test]
    fn grouped_product_state_is_product_across_parties() {
        // |a⟩|b⟩ on each copy regroups to (|a⟩|a'⟩)(|b⟩|b'⟩).
        let psi1 = PureState::new(CVector::from_vec(vec![c_re(0.0), c_re(1.0), c_re(0.0), c_re(0.0)]), (2, 2)).unwrap();
        let out = tensor_power_pure(&psi1, 2).unwrap();
        // Alice |00⟩, Bob |11⟩ → index 0 * 4 + 3.
        assert!((out.amplitudes()[3].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn table_values_for_pure_states() {
        let cases: [(&[f64], f64); 4] = [
            (&[2.0, 1.0], 0.14031),
            (&[1.0, 1.0, 1.0], 0.13807),
            (&[3.0, 2.0, 1.0], 0.16756),
            (&[4.0, 3.0, 2.0, 1.0], 0.18431),
        ];
        for (raw, want) in cases {
            let cf = normalized(raw);
            let v = pure_ch_value(&cf, cf.len()).unwrap();
            assert!((v - want).abs() < 1e-5, "{raw:?}: {v}");
        }
        assert_eq!(pure_ch_value(&[1.0], 1).unwrap(), 0.0);
        let me2 = pure_ch_value(&normalized(&[1.0, 1.0]), 2).unwrap();
        assert!((me2 - (std::f64::consts::FRAC_1_SQRT_2 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn pure_value_rejects_bad_coefficients() {
        assert!(pure_ch_value(&[0.5, 0.5], 2).is_err());
        assert!(pure_ch_value(&[1.0, -0.0001], 2).is_err());
        assert!(pure_ch_value(&[0.6, 0.8], 1).is_err());
    }

    #[test]
    fn measurements_reproduce_closed_form() {
        let cases: [&[f64]; 6] =
            [&[1.0, 1.0], &[2.0, 1.0], &[3.0, 2.0, 1.0], &[1.0, 1.0, 1.0], &[4.0, 3.0, 2.0, 1.0], &[5.0, 4.0, 3.0, 2.0, 1.0]];
        for raw in cases {
            let cf = normalized(raw);
            let d = cf.len();
            let meas = pure_ch_measurements(&cf, d).unwrap();
            let rho = pure_schmidt(&cf).unwrap().density();
            let op = assignment_value(&rho, &ch(), &meas).unwrap();
            let closed = pure_ch_value(&cf, d).unwrap();
            assert!((op - closed).abs() < 1e-9, "{raw:?}: {op} vs {closed}");
        }
    }

    #[test]
    fn two_qubit_me_matches_horodecki() {
        let cf = normalized(&[1.0, 1.0]);
        let rho = pure_schmidt(&cf).unwrap().density();
        let h = horodecki_values(&rho).unwrap();
        let meas = pure_ch_measurements(&cf, 2).unwrap();
        assert!((assignment_value(&rho, &ch(), &meas).unwrap() - h.sqm_ch).abs() < 1e-9);
    }

    #[test]
    fn padded_coefficients_handle_rank_deficiency() {
        // Rank-2 state embedded in d = 3 and d = 4.
        let cf = normalized(&[2.0, 1.0]);
        for d in [3, 4] {
            let v = pure_ch_value(&cf, d).unwrap();
            let mut full = cf.clone();
            full.resize(d, 0.0);
            let rho = pure_schmidt(&full).unwrap().density();
            let op = assignment_value(&rho, &ch(), &pure_ch_measurements(&cf, d).unwrap()).unwrap();
            assert!((op - v).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_value_positive_iff_entangled_and_order_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let d = rng.random_range(1..=6);
            let rank = rng.random_range(1..=d);
            let mut raw: Vec<f64> = (0..rank).map(|_| rng.random_range(0.01..1.0)).collect();
            let cf = normalized(&raw);
            let v = pure_ch_value(&cf, d).unwrap();
            assert_eq!(v > 1e-12, rank > 1, "rank {rank}, value {v}");
            raw.reverse();
            let w = pure_ch_value(&normalized(&raw), d).unwrap();
            assert!((v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_scheme_is_stationary_under_seesaw() {
        for raw in [&[2.0, 1.0][..], &[3.0, 2.0, 1.0], &[1.0, 1.0, 1.0], &[4.0, 3.0, 2.0, 1.0]] {
            let cf = normalized(raw);
            let d = cf.len();
            let rho = pure_schmidt(&cf).unwrap().density();
            let meas = pure_ch_measurements(&cf, d).unwrap();
            let closed = pure_ch_value(&cf, d).unwrap();
            let (_, bob_step) = optimize_bob_two_outcome(&rho, &ch(), &meas.alice).unwrap();
            let (_, alice_step) =
                optimize_bob_two_outcome(&rho.swap_parties(), &ch().swap_parties(), &meas.bob).unwrap();
            assert!(bob_step <= closed + 1e-9 && alice_step <= closed + 1e-9, "{raw:?}");
        }
    }

    #[test]
    fn me_values() {
        assert!((me_ch_value(3).unwrap() - 0.13807).abs() < 1e-5);
        assert!((me_ch_value(9).unwrap() - 0.18409).abs() < 1e-5);
        assert!((me_ch_value(4).unwrap() - (std::f64::consts::FRAC_1_SQRT_2 - 0.5)).abs() < 1e-15);
        for d in 1..8 {
            let cf = vec![1.0 / (d as f64).sqrt(); d];
            assert!((me_ch_value(d).unwrap() - pure_ch_value(&cf, d).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn copies_of_maximally_entangled_qutrits() {
        let me3 = vec![1.0 / 3f64.sqrt(); 3];
        assert!((ncopy_pure_ch_value(&me3, 2).unwrap() - 0.18409).abs() < 1e-5);
        assert!((ncopy_pure_ch_value(&me3, 3).unwrap() - 0.19944).abs() < 1e-5);
        // Cross-check the coefficient product against an explicit Schmidt decomposition.
        let psi = tensor_power_pure(&max_entangled(3).unwrap(), 2).unwrap();
        let s = schmidt(&psi);
        let direct = ncopy_coefficients(&me3, 2).unwrap();
        assert_eq!(s.coefficients.len(), direct.len());
        for (a, b) in s.coefficients.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_qubit_copies() {
        let phi = 0.5f64.atan();
        let v3 = ncopy_two_qubit_value(phi, 3).unwrap();
        assert!((v3 - 0.16169).abs() < 1e-5, "{v3}");
        let one = ncopy_two_qubit_value(phi, 1).unwrap();
        assert!((one - pure_ch_value(&[phi.cos(), phi.sin()], 2).unwrap()).abs() < 1e-12);
        for k in 1..=2 {
            let odd = ncopy_two_qubit_value(phi, 2 * k - 1).unwrap();
            let even = ncopy_two_qubit_value(phi, 2 * k).unwrap();
            assert!((odd - even).abs() < 1e-12);
        }
        // The closed form agrees with the pairwise scheme on the regrouped copies.
        let cf = [phi.cos(), phi.sin()];
        assert!((ncopy_pure_ch_value(&cf, 3).unwrap() - v3).abs() < 1e-9);
    }

    #[test]
    fn two_qubit_copies_monotone() {
        for i in 1..=20 {
            let phi = std::f64::consts::FRAC_PI_4 * i as f64 / 20.0;
            let vals: Vec<f64> = (1..=8).map(|n| ncopy_two_qubit_value(phi, n).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12), "φ = {phi}: {vals:?}");
        }
    }

    #[test]
    fn i22dd_table() {
        for (d, v, p) in [(2, 0.20711, 0.70711), (3, 0.29098, 0.69615), (4, 0.33609, 0.69055)] {
            assert!((i22dd_me_value(d).unwrap() - v).abs() < 1e-5, "d = {d}");
            assert!((i22dd_isotropic_threshold(d).unwrap() - p).abs() < 1e-5, "d = {d}");
            let t = i22dd_isotropic_threshold(d).unwrap();
            assert!(i22dd_isotropic_value(d, t).unwrap().abs() < 1e-12);
        }
        for (d, v, p) in [(5, 0.36422, 0.68716), (8, 0.40793, 0.68203), (10, 0.42291, 0.68032), (100, 0.47856, 0.67413)] {
            assert!((i22dd_me_value(d).unwrap() - v).abs() < 1e-5, "d = {d}");
            assert!((i22dd_isotropic_threshold(d).unwrap() - p).abs() < 1e-5, "d = {d}");
        }
        assert!((cglmp_me_value(4).unwrap() - 2.8962).abs() < 1e-4);
        assert!((i22dd_me_value(1000).unwrap() - 0.48427).abs() < 1e-5);
        let catalan = 0.915_965_594_177_219;
        let limit = 16.0 * catalan / std::f64::consts::PI.powi(2) - 1.0;
        assert!((i22dd_me_value(1000).unwrap() - limit).abs() < 1e-3);
        assert!(i22dd_me_value(1).is_err());
    }

    #[test]
    fn identity_filter_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density((2, 3), 6, &mut rng);
        let (out, p) = apply_filter(&rho, &[FilterPair::identity(2, 3)]).unwrap();
        assert!((out.matrix() - rho.matrix()).norm() < 1e-12);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filter_errors() {
        let rho = crate::states::isotropic(2, 0.5).unwrap();
        let zero = FilterPair { f_a: CMatrix::zeros(2, 2), f_b: identity(2) };
        assert!(apply_filter(&rho, &[zero]).is_err());
        assert!(apply_filter(&rho, &[]).is_err());
        assert!(apply_filter(&rho, &[FilterPair::identity(3, 2)]).is_err());
        let big = FilterPair::new(identity(2).scale(3.0), identity(2)).unwrap();
        assert!((singular_values(&big.f_a)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gisin_filter_matches_closed_form() {
        for (p, theta) in [(0.85, 0.35), (0.6, 0.2), (0.95, 0.7)] {
            let (out, p_suc) = apply_filter(&gisin(p, theta).unwrap(), &[FilterPair::gisin(theta).unwrap()]).unwrap();
            let (closed, p_closed) = gisin_filtered_closed_form(p, theta).unwrap();
            assert!((out.matrix() - closed.matrix()).norm() < 1e-12);
            assert!((p_suc - p_closed).abs() < 1e-12);
        }
    }

    #[test]
    fn gisin_pipeline_reveals_hidden_violation() {
        let th = crate::states::gisin_thresholds(0.35);
        assert!((th.p_l_filtered - 0.78936).abs() < 1e-5);
        assert!((th.p_l - 0.90600).abs() < 1e-5);
        assert!((th.p0 - 0.73759).abs() < 1e-5);
        let r = gisin_pipeline(0.85, 0.35).unwrap();
        assert!(!r.unfiltered.violates && r.filtered.violates);
        let r = gisin_pipeline(0.75, 0.35).unwrap();
        assert!(!r.filtered.violates);
    }

    #[test]
    fn popescu_projection() {
        let r = popescu_pipeline(5).unwrap();
        assert!((r.p_prime - 5.0 / 7.0).abs() < 1e-12);
        assert!((r.success_probability - 14.0 / 125.0).abs() < 1e-12);
        let (out, _) = apply_filter(
            &werner(5, 0.8).unwrap(),
            &[FilterPair::two_dim_projection(5).unwrap()],
        )
        .unwrap();
        assert!((out.matrix() - werner(2, 5.0 / 7.0).unwrap().matrix()).norm() < 1e-12);
        for d in 2..=8 {
            let r = popescu_pipeline(d).unwrap();
            let f = popescu_chsh_value(d).unwrap();
            assert!((r.chsh - f).abs() < 1e-9);
            assert_eq!(f > 2.0, d >= 5);
        }
    }

    #[test]
    fn witness_values() {
        let h = h_theta(0.3).unwrap();
        assert!((h.matrix.matrix().trace().re - 4.0).abs() < 1e-14);
        assert!(h_theta(1.0).is_err());
        let q = std::f64::consts::FRAC_PI_4;
        let id = identity(2);
        let phi = max_entangled(2).unwrap().density();
        assert!((witness_value(&phi, &id, &id, q).unwrap() - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        // The singlet needs a local σ_z σ_x on Bob to align with H_θ.
        let s = singlet().density();
        assert!((witness_value(&s, &id, &id, q).unwrap() - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        let zx = pauli_z() * pauli_x();
        assert!((witness_value(&s, &id, &zx, q).unwrap() - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!(witness_value(&s, &identity(3), &id, q).is_err());
    }

    fn random_separable<R: Rng>(rng: &mut R) -> DensityMatrix {
        let mut m = CMatrix::zeros(4, 4);
        for _ in 0..4 {
            let a = random_pure((2, 1), rng);
            let b = random_pure((2, 1), rng);
            let w: f64 = rng.random_range(0.0..1.0);
            m += kron(&ketbra(a.amplitudes()), &ketbra(b.amplitudes())).scale(w);
        }
        DensityMatrix::from_unnormalized(m, (2, 2)).unwrap()
    }

    #[test]
    fn witness_nonnegative_on_separable_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let id = identity(2);
        for _ in 0..50 {
            let rho = random_separable(&mut rng);
            assert!(is_ppt(&rho));
            for k in 0..=10 {
                let t = std::f64::consts::FRAC_PI_4 * k as f64 / 10.0;
                assert!(witness_value(&rho, &id, &id, t).unwrap() >= -1e-12);
            }
        }
        let mixed = DensityMatrix::new(identity(4).scale(0.25), (2, 2)).unwrap();
        for _ in 0..10 {
            let fa = ginibre(2, 2, &mut rng);
            let fb = ginibre(2, 2, &mut rng);
            assert!(witness_value(&mixed, &fa, &fb, 0.4).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn filtering_separable_states_never_violates() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let rho = random_separable(&mut rng);
            let f = FilterPair::new(ginibre(2, 2, &mut rng), ginibre(2, 2, &mut rng)).unwrap();
            let (out, _) = apply_filter(&rho, &[f]).unwrap();
            assert!(!horodecki_values(&out).unwrap().violates);
        }
    }
}
