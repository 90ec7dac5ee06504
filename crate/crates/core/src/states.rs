//! Named quantum states and their closed-form separability and LHV thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    basis_ket, c, identity, kron, ketbra, pauli_x, pauli_y, pauli_z, CMatrix, CVector, DensityMatrix,
    PureState, ZERO,
};

/// Parameters of every named state family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum NamedState {
    Werner { d: usize, p: f64 },
    Isotropic { d: usize, p: f64 },
    MaxEntangled { d: usize },
    Singlet,
    Ghz { n: usize, alpha: f64 },
    Gisin { p: f64, theta: f64 },
    CollinsGisin { p: f64 },
    HorodeckiH3 { p: f64 },
    ChoiHorodecki { alpha: f64 },
    Dur { n: usize },
    TothAcin { p: f64 },
    PureSchmidt { coefficients: Vec<f64> },
}

/// A constructed state plus notes about unusual parameter choices.
#[derive(Debug, Clone)]
pub struct BuiltState {
    pub rho: DensityMatrix,
    pub flags: Vec<String>,
}

impl NamedState {
    pub fn build(&self) -> Result<BuiltState> {
        let mut flags = Vec::new();
        let rho = match self {
            NamedState::Werner { d, p } => {
                if *p < 0.0 {
                    flags.push(format!("werner weight p = {p} is negative (extended family)"));
                }
                werner(*d, *p)?
            }
            NamedState::Isotropic { d, p } => isotropic(*d, *p)?,
            NamedState::MaxEntangled { d } => max_entangled(*d)?.density(),
            NamedState::Singlet => singlet().density(),
            NamedState::Ghz { n, alpha } => ghz(*n, *alpha)?.density(),
            NamedState::Gisin { p, theta } => {
                let th = gisin_thresholds(*theta);
                if *p <= th.p0 {
                    flags.push(format!("gisin weight p = {p} is at or below p0 = {:.7}", th.p0));
                }
                gisin(*p, *theta)?
            }
            NamedState::CollinsGisin { p } => collins_gisin(*p)?,
            NamedState::HorodeckiH3 { p } => horodecki_h3(*p)?,
            NamedState::ChoiHorodecki { alpha } => choi_horodecki(*alpha)?,
            NamedState::Dur { n } => dur(*n)?,
            NamedState::TothAcin { p } => toth_acin(*p)?,
            NamedState::PureSchmidt { coefficients } => pure_schmidt(coefficients)?.density(),
        };
        Ok(BuiltState { rho, flags })
    }
}

fn check_range(name: &str, x: f64, lo: f64, hi: f64) -> Result<()> {
    if !(x.is_finite() && x >= lo - 1e-12 && x <= hi + 1e-12) {
        return Err(Error::Range(format!("{name} = {x} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Range(format!("local dimension {d} must be at least 2")));
    }
    Ok(())
}

/// Swap operator `F|i⟩|j⟩ = |j⟩|i⟩` on `C^d ⊗ C^d`.
pub fn flip(d: usize) -> CMatrix {
    crate::qcore::swap_operator(d, d).map(|x| c(x, 0.0))
}

/// Projector onto the antisymmetric subspace, `(I - F)/2`.
pub fn antisymmetric_projector(d: usize) -> CMatrix {
    (identity(d * d) - flip(d)).scale(0.5)
}

/// `p · 2Π₋/(d(d-1)) + (1-p) I/d²` for `1 - 2d/(d+1) ≤ p ≤ 1`.
pub fn werner(d: usize, p: f64) -> Result<DensityMatrix> {
    check_dim(d)?;
    let df = d as f64;
    check_range("werner p", p, 1.0 - 2.0 * df / (df + 1.0), 1.0)?;
    let m = antisymmetric_projector(d).scale(2.0 * p / (df * (df - 1.0)))
        + identity(d * d).scale((1.0 - p) / (df * df));
    DensityMatrix::new(m, (d, d))
}

/// `p |Φ_d⁺⟩⟨Φ_d⁺| + (1-p) I/d²` for `0 ≤ p ≤ 1`.
pub fn isotropic(d: usize, p: f64) -> Result<DensityMatrix> {
    check_dim(d)?;
    check_range("isotropic p", p, 0.0, 1.0)?;
    let df = d as f64;
    let phi = max_entangled(d)?;
    let m = ketbra(phi.amplitudes()).scale(p) + identity(d * d).scale((1.0 - p) / (df * df));
    DensityMatrix::new(m, (d, d))
}

/// `Σ_i |ii⟩/√d`.
pub fn max_entangled(d: usize) -> Result<PureState> {
    if d == 0 {
        return Err(Error::Range("dimension must be positive".into()));
    }
    let mut v = CVector::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = c(1.0 / (d as f64).sqrt(), 0.0);
    }
    PureState::new(v, (d, d))
}

/// `(|01⟩ - |10⟩)/√2`.
pub fn singlet() -> PureState {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    PureState::new(CVector::from_vec(vec![ZERO, c(r, 0.0), c(-r, 0.0), ZERO]), (2, 2)).expect("normalized")
}

/// `(|0…0⟩ + e^{iα}|1…1⟩)/√2` on `n ≥ 2` qubits, split as first qubit versus the rest.
pub fn ghz(n: usize, alpha: f64) -> Result<PureState> {
    if n < 2 {
        return Err(Error::Range(format!("GHZ needs n ≥ 2 parties, got {n}")));
    }
    let dim = 1usize << n;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVector::zeros(dim);
    v[0] = c(r, 0.0);
    v[dim - 1] = c(r * alpha.cos(), r * alpha.sin());
    PureState::new(v, (2, dim / 2))
}

/// `p |Φ_θ⟩⟨Φ_θ| + ½(1-p)(|01⟩⟨01| + |10⟩⟨10|)` with `|Φ_θ⟩ = cos θ|00⟩ + sin θ|11⟩`.
pub fn gisin(p: f64, theta: f64) -> Result<DensityMatrix> {
    check_range("gisin p", p, 0.0, 1.0)?;
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4 + 1e-12) {
        return Err(Error::Range(format!("gisin theta = {theta} outside (0, π/4]")));
    }
    let phi = CVector::from_vec(vec![c(theta.cos(), 0.0), ZERO, ZERO, c(theta.sin(), 0.0)]);
    let m = ketbra(&phi).scale(p)
        + (ketbra(&basis_ket(4, 1)) + ketbra(&basis_ket(4, 2))).scale(0.5 * (1.0 - p));
    DensityMatrix::new(m, (2, 2))
}

/// `p |Ψ_{2:1}⟩⟨Ψ_{2:1}| + (1-p)|01⟩⟨01|` with `|Ψ_{2:1}⟩ = (2|00⟩ + |11⟩)/√5`.
pub fn collins_gisin(p: f64) -> Result<DensityMatrix> {
    check_range("collins-gisin p", p, 0.0, 1.0)?;
    let s5 = 5f64.sqrt();
    let psi = CVector::from_vec(vec![c(2.0 / s5, 0.0), ZERO, ZERO, c(1.0 / s5, 0.0)]);
    let m = ketbra(&psi).scale(p) + ketbra(&basis_ket(4, 1)).scale(1.0 - p);
    DensityMatrix::new(m, (2, 2))
}

/// Two-qutrit PPT entangled family
/// `(8p ρ_ent + |Ψ_p⟩⟨Ψ_p|)/(8p + 1)`, `0 ≤ p ≤ 1`.
pub fn horodecki_h3(p: f64) -> Result<DensityMatrix> {
    check_range("horodecki p", p, 0.0, 1.0)?;
    let proj = |i: usize, j: usize| ketbra(&basis_ket(9, 3 * i + j));
    let mut ent = CMatrix::zeros(9, 9);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                ent += proj(i, j).scale(1.0 / 8.0);
            }
        }
    }
    ent -= proj(2, 0).scale(1.0 / 8.0);
    ent += ketbra(max_entangled(3)?.amplitudes()).scale(3.0 / 8.0);
    let mut psi = CVector::zeros(9);
    psi[6] = c(((1.0 + p) / 2.0).sqrt(), 0.0);
    psi[8] = c(((1.0 - p) / 2.0).sqrt(), 0.0);
    let m = (ent.scale(8.0 * p) + ketbra(&psi)).unscale(8.0 * p + 1.0);
    DensityMatrix::new(m, (3, 3))
}

/// `(2/7)|Φ₃⁺⟩⟨Φ₃⁺| + (α/7)σ₊ + ((5-α)/7)σ₋`, `2 ≤ α ≤ 5`.
pub fn choi_horodecki(alpha: f64) -> Result<DensityMatrix> {
    check_range("choi-horodecki alpha", alpha, 2.0, 5.0)?;
    let shifted = |shift: usize| {
        let mut s = CMatrix::zeros(9, 9);
        for j in 0..3 {
            s += ketbra(&basis_ket(9, 3 * j + (j + shift) % 3));
        }
        s.unscale(3.0)
    };
    let m = ketbra(max_entangled(3)?.amplitudes()).scale(2.0 / 7.0)
        + shifted(1).scale(alpha / 7.0)
        + shifted(2).scale((5.0 - alpha) / 7.0);
    DensityMatrix::new(m, (3, 3))
}

/// Dür's `n`-qubit state, split as first qubit versus the rest.
pub fn dur(n: usize) -> Result<DensityMatrix> {
    if n < 2 {
        return Err(Error::Range(format!("Dür state needs n ≥ 2 parties, got {n}")));
    }
    let dim = 1usize << n;
    let mut m = ketbra(ghz(n, 0.0)?.amplitudes());
    for k in 0..n {
        // qubit k (0-indexed from the most significant) flipped relative to |0…0⟩ or |1…1⟩
        let bit = 1usize << (n - 1 - k);
        m += (ketbra(&basis_ket(dim, bit)) + ketbra(&basis_ket(dim, (dim - 1) ^ bit))).scale(0.5);
    }
    DensityMatrix::new(m.unscale((n + 1) as f64), (2, dim / 2))
}

/// Three-qubit `U⊗U⊗U` invariant family, split as qubit A versus qubits BC.
///
/// Built as `I/8 + Σ_k [ I⊗σ_k⊗σ_k/24 - (p/16)(σ_k⊗I⊗σ_k + σ_k⊗σ_k⊗I) ]`.
pub fn toth_acin(p: f64) -> Result<DensityMatrix> {
    check_range("toth-acin p", p, 0.0, 1.0)?;
    let i2 = identity(2);
    let mut m = identity(8).scale(1.0 / 8.0);
    for s in [pauli_x(), pauli_y(), pauli_z()] {
        m += kron(&kron(&i2, &s), &s).scale(1.0 / 24.0);
        m -= (kron(&kron(&s, &i2), &s) + kron(&kron(&s, &s), &i2)).scale(p / 16.0);
    }
    DensityMatrix::new(m, (2, 4))
}

/// `Σ_i c_i |ii⟩` from (possibly unnormalized) nonnegative coefficients.
pub fn pure_schmidt(coefficients: &[f64]) -> Result<PureState> {
    let d = coefficients.len();
    if d == 0 || coefficients.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Range("Schmidt coefficients must be finite and nonnegative".into()));
    }
    let mut v = CVector::zeros(d * d);
    for (i, &x) in coefficients.iter().enumerate() {
        v[i * d + i] = c(x, 0.0);
    }
    PureState::normalized(v, (d, d))
}

/// JSON layout of a bipartite density matrix with row-major `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub d_a: usize,
    pub d_b: usize,
    pub entries: Vec<[f64; 2]>,
}

impl StateFile {
    pub fn from_state(rho: &DensityMatrix) -> Self {
        let (d_a, d_b) = rho.split();
        let n = d_a * d_b;
        let m = rho.matrix();
        let entries = (0..n * n).map(|k| {
            let z = m[(k / n, k % n)];
            [z.re, z.im]
        });
        Self { d_a, d_b, entries: entries.collect() }
    }

    /// Validates the result as a density matrix.
    pub fn to_state(&self) -> Result<DensityMatrix> {
        let n = self.d_a * self.d_b;
        if n == 0 || self.entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} entries for a {}x{} state",
                self.entries.len(),
                self.d_a,
                self.d_b
            )));
        }
        let m = CMatrix::from_fn(n, n, |i, j| {
            let [re, im] = self.entries[i * n + j];
            c(re, im)
        });
        DensityMatrix::new(m, (self.d_a, self.d_b))
    }
}

/// State families with closed-form thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Werner,
    Isotropic,
}

/// Separability and LHV-model thresholds of a one-parameter family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub p_sep: f64,
    pub p_proj_lhv: f64,
    pub p_povm_lhv: f64,
}

pub fn thresholds(family: Family, d: usize) -> Result<Thresholds> {
    check_dim(d)?;
    let df = d as f64;
    let p_sep = 1.0 / (df + 1.0);
    let p_povm_lhv = (3.0 * df - 1.0) / (df * df - 1.0) * (1.0 - 1.0 / df).powi(d as i32);
    let p_proj_lhv = match family {
        Family::Werner => 1.0 - 1.0 / df,
        Family::Isotropic => (2..=d).map(|k| 1.0 / k as f64).sum::<f64>() / (df - 1.0),
    };
    Ok(Thresholds { p_sep, p_proj_lhv, p_povm_lhv })
}

/// Thresholds of the family `gisin(p, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GisinThresholds {
    /// Lower end of the family's parameter range.
    pub p0: f64,
    /// Entangled for `p > pE`.
    pub p_e: f64,
    /// No CHSH violation for `p ≤ pL`.
    pub p_l: f64,
    /// CHSH violation after filtering for `p > pL'`.
    pub p_l_filtered: f64,
}

pub fn gisin_thresholds(theta: f64) -> GisinThresholds {
    let s = (2.0 * theta).sin();
    GisinThresholds {
        p0: 1.0 / (2.0 - s),
        p_e: 1.0 / (1.0 + s),
        p_l: 4.0 / (4.0 + s * s),
        p_l_filtered: 1.0 / (1.0 + (2f64.sqrt() - 1.0) * s),
    }
}
