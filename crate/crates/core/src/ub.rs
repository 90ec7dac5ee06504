//! Lagrange-dual upper bounds on the quantum value of two-outcome Bell
//! inequalities.
//!
//! Every local observable is expanded in the orthonormal Hermitian basis,
//! `O_m = Σ_n y_mn σ_n`, which turns `tr(ρB)` into a real quadratic in the
//! coefficients. The constraint `O² = I` (correlation inequalities) or
//! `O² = O` (two-outcome probability inequalities, `O` the projector onto the
//! first outcome) becomes one real quadratic equality per basis element,
//! `yᵀP_k y = √d δ_k0` or `yᵀP_k y = y_k` with `[P_k]_ij = ½tr(σ_k{σ_i,σ_j})`.
//!
//! The lowest-order relaxation minimizes `γ` such that
//! `γ - f(y) - Σ_k λ_k g_k(y)` is a nonnegative quadratic, i.e. its
//! homogenized matrix is positive semidefinite. Fixing the traces
//! `z_m = tr(O_m)` removes the `y_m0` variables and tightens the bound.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{BellInequality, CorrelationInequality};
use crate::error::{Error, Result};
use crate::qcore::{
    coherence_decomposition, correlation_tensor, hermitian_basis, singular_values_real, sym_eigenvalues,
    CMatrix, DensityMatrix, RMatrix,
};
use crate::sdp::{solve_real, RealSdp, SdpOptions, SdpStatus, SymSparse};

/// Which quadratic constraint the observables obey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// Dichotomic observables, `O² = I`.
    Involution,
    /// Projectors, `O² = O`.
    Projector,
}

/// `tr(ρB)` as a function of the local observables:
/// `constant + Σ lin_a[a]⟨O_a⊗I⟩ + Σ lin_b[b]⟨I⊗O_b⟩ + Σ joint[a][b]⟨O_a⊗O_b⟩`.
#[derive(Debug, Clone)]
pub struct QcqpInstance {
    pub kind: ObservableKind,
    pub d_a: usize,
    pub d_b: usize,
    pub joint: RMatrix,
    pub lin_a: Vec<f64>,
    pub lin_b: Vec<f64>,
    pub constant: f64,
    /// `T_ij = tr(ρ σ_i⊗σ_j)` including the identity index 0.
    pub t: RMatrix,
    /// `R = (Vρ)^{T_A}`, so that `tr(ρ X⊗Y) = vec(X)† R vec(Y)` for Hermitian `X`.
    pub r: CMatrix,
    /// Coherence vectors vanish (to 1e-8).
    pub vanishing_coherence: bool,
}

impl QcqpInstance {
    /// Correlation inequality with observables `O² = I`.
    pub fn correlation(ineq: &CorrelationInequality, rho: &DensityMatrix) -> Result<Self> {
        let (m_a, m_b) = (ineq.m_a(), ineq.m_b());
        let joint = RMatrix::from_fn(m_a, m_b, |i, j| ineq.b[i][j]);
        Self::build(ObservableKind::Involution, joint, ineq.marg_a.clone(), ineq.marg_b.clone(), 0.0, rho)
    }

    /// Two-outcome probability inequality in terms of the first-outcome
    /// projectors, using `O_1 = I - O_0` for the second outcome.
    pub fn probability(ineq: &BellInequality, rho: &DensityMatrix) -> Result<Self> {
        let s = ineq.scenario;
        if s.n_a != 2 || s.n_b != 2 {
            return Err(Error::Invalid("upper bounds need two-outcome inequalities".into()));
        }
        let mut constant = ineq.b00;
        let mut lin_a = vec![0.0; s.m_a];
        let mut lin_b = vec![0.0; s.m_b];
        let mut joint = RMatrix::zeros(s.m_a, s.m_b);
        for a in 0..s.m_a {
            lin_a[a] += ineq.marg_a[a][0] - ineq.marg_a[a][1];
            constant += ineq.marg_a[a][1];
            for b in 0..s.m_b {
                let j = &ineq.joint[a][b];
                joint[(a, b)] = j[0][0] - j[0][1] - j[1][0] + j[1][1];
                lin_a[a] += j[0][1] - j[1][1];
                lin_b[b] += j[1][0] - j[1][1];
                constant += j[1][1];
            }
        }
        for b in 0..s.m_b {
            lin_b[b] += ineq.marg_b[b][0] - ineq.marg_b[b][1];
            constant += ineq.marg_b[b][1];
        }
        Self::build(ObservableKind::Projector, joint, lin_a, lin_b, constant, rho)
    }

    fn build(
        kind: ObservableKind,
        joint: RMatrix,
        lin_a: Vec<f64>,
        lin_b: Vec<f64>,
        constant: f64,
        rho: &DensityMatrix,
    ) -> Result<Self> {
        let (d_a, d_b) = rho.split();
        let t = correlation_tensor(rho);
        let m = rho.matrix();
        let r = CMatrix::from_fn(d_a * d_a, d_b * d_b, |row, col| {
            let (k, i) = (row % d_a, row / d_a);
            let (l, j) = (col % d_b, col / d_b);
            m[(k * d_b + j, i * d_b + l)]
        });
        let vanishing_coherence = (1..d_a * d_a).all(|i| t[(i, 0)].abs() <= 1e-8)
            && (1..d_b * d_b).all(|j| t[(0, j)].abs() <= 1e-8);
        Ok(Self { kind, d_a, d_b, joint, lin_a, lin_b, constant, t, r, vanishing_coherence })
    }

    pub fn m_a(&self) -> usize {
        self.joint.nrows()
    }

    pub fn m_b(&self) -> usize {
        self.joint.ncols()
    }

    pub fn observable_count(&self) -> usize {
        self.m_a() + self.m_b()
    }

    /// Local dimension of observable `m` (Alice's first).
    pub fn dim_of(&self, m: usize) -> usize {
        if m < self.m_a() {
            self.d_a
        } else {
            self.d_b
        }
    }

    /// Objective through the vectorized form `vec(O_a)† R vec(O_b)`.
    pub fn value_vectorized(&self, alice: &[CMatrix], bob: &[CMatrix]) -> Result<f64> {
        self.check_counts(alice.len(), bob.len())?;
        let vec_of = |o: &CMatrix| DVector::from_iterator(o.len(), o.iter().copied());
        let va: Vec<_> = alice.iter().map(vec_of).collect();
        let vb: Vec<_> = bob.iter().map(vec_of).collect();
        let (sa, sb) = ((self.d_b as f64).sqrt(), (self.d_a as f64).sqrt());
        let mut v = self.constant;
        for (a, x) in va.iter().enumerate() {
            for (b, y) in vb.iter().enumerate() {
                v += self.joint[(a, b)] * x.dotc(&(&self.r * y)).re;
            }
        }
        // Single-party terms use the marginals of the correlation tensor.
        let ta = hermitian_basis(self.d_a);
        let tb = hermitian_basis(self.d_b);
        for (a, o) in alice.iter().enumerate() {
            let y = ta.coefficients(o);
            v += self.lin_a[a] * sa * (0..y.len()).map(|n| y[n] * self.t[(n, 0)]).sum::<f64>();
        }
        for (b, o) in bob.iter().enumerate() {
            let y = tb.coefficients(o);
            v += self.lin_b[b] * sb * (0..y.len()).map(|n| y[n] * self.t[(0, n)]).sum::<f64>();
        }
        Ok(v)
    }

    fn check_counts(&self, na: usize, nb: usize) -> Result<()> {
        if na != self.m_a() || nb != self.m_b() {
            return Err(Error::Dimension(format!(
                "{na}+{nb} observables for a {}x{} instance",
                self.m_a(),
                self.m_b()
            )));
        }
        Ok(())
    }

    /// Coefficient vectors `y_m = (tr(O_m σ_n))_n` of the given observables.
    pub fn coefficients(&self, alice: &[CMatrix], bob: &[CMatrix]) -> Result<Vec<f64>> {
        self.check_counts(alice.len(), bob.len())?;
        let ba = hermitian_basis(self.d_a);
        let bb = hermitian_basis(self.d_b);
        let mut x = Vec::new();
        for o in alice {
            x.extend(ba.coefficients(o));
        }
        for o in bob {
            x.extend(bb.coefficients(o));
        }
        Ok(x)
    }

    /// The full quadratic program in the coefficients of all observables.
    pub fn quadratic_program(&self) -> QuadraticProgram {
        let (m_a, m_b) = (self.m_a(), self.m_b());
        let (na, nb) = (self.d_a * self.d_a, self.d_b * self.d_b);
        let offset = |m: usize| if m < m_a { m * na } else { m_a * na + (m - m_a) * nb };
        let n = m_a * na + m_b * nb;
        let mut objective = Quadratic::zeros(n);
        objective.c = self.constant;
        let (sa, sb) = ((self.d_b as f64).sqrt(), (self.d_a as f64).sqrt());
        for a in 0..m_a {
            for i in 0..na {
                objective.q[offset(a) + i] += self.lin_a[a] * sa * self.t[(i, 0)];
            }
            for b in 0..m_b {
                let w = 0.5 * self.joint[(a, b)];
                if w == 0.0 {
                    continue;
                }
                let ob = offset(m_a + b);
                for i in 0..na {
                    for j in 0..nb {
                        let v = w * self.t[(i, j)];
                        objective.qq[(offset(a) + i, ob + j)] += v;
                        objective.qq[(ob + j, offset(a) + i)] += v;
                    }
                }
            }
        }
        for b in 0..m_b {
            for j in 0..nb {
                objective.q[offset(m_a + b) + j] += self.lin_b[b] * sb * self.t[(0, j)];
            }
        }
        let pa = structure_constants(self.d_a);
        let pb = if self.d_b == self.d_a { pa.clone() } else { structure_constants(self.d_b) };
        let mut constraints = Vec::new();
        let mut radius2 = 0.0;
        for m in 0..m_a + m_b {
            let (d, p) = if m < m_a { (self.d_a, &pa) } else { (self.d_b, &pb) };
            let dn = d * d;
            let off = offset(m);
            radius2 += d as f64;
            for (k, pk) in p.iter().enumerate() {
                let mut g = Quadratic::zeros(n);
                for i in 0..dn {
                    for j in 0..dn {
                        g.qq[(off + i, off + j)] = pk[(i, j)];
                    }
                }
                match self.kind {
                    ObservableKind::Involution => {
                        if k == 0 {
                            g.c = -(d as f64).sqrt();
                        }
                    }
                    ObservableKind::Projector => g.q[off + k] = -1.0,
                }
                constraints.push(g);
            }
        }
        QuadraticProgram { objective, constraints, radius2 }
    }

    /// Allowed trace values of observable `m`.
    pub fn trace_grid(&self, m: usize) -> Vec<i64> {
        let d = self.dim_of(m) as i64;
        match self.kind {
            ObservableKind::Involution => (0..=d).map(|k| -d + 2 * k).collect(),
            ObservableKind::Projector => (0..=d).collect(),
        }
    }

    /// Deterministic value of observable `m` with trace `z`, if forced.
    fn forced_value(&self, m: usize, z: i64) -> Option<f64> {
        let d = self.dim_of(m) as i64;
        match self.kind {
            ObservableKind::Involution if z.abs() == d => Some(z.signum() as f64),
            ObservableKind::Projector if z == 0 || z == d => Some((z / d) as f64),
            _ => None,
        }
    }

    /// Exact bound for profiles in which some party keeps at most one
    /// observable that is not a multiple of the identity: such statistics
    /// admit a local model, so the maximum over deterministic outcomes of the
    /// remaining observables applies. `None` when both parties keep two or more.
    pub fn local_profile_value(&self, profile: &TraceProfile) -> Option<f64> {
        let m_a = self.m_a();
        let forced: Vec<Option<f64>> = profile.z.iter().enumerate().map(|(m, &z)| self.forced_value(m, z)).collect();
        let free_a = forced[..m_a].iter().filter(|f| f.is_none()).count();
        let free_b = forced[m_a..].iter().filter(|f| f.is_none()).count();
        if free_a > 1 && free_b > 1 {
            return None;
        }
        let free: Vec<usize> = (0..forced.len()).filter(|&m| forced[m].is_none()).collect();
        let levels = match self.kind {
            ObservableKind::Involution => [-1.0, 1.0],
            ObservableKind::Projector => [0.0, 1.0],
        };
        let mut best = f64::NEG_INFINITY;
        let mut vals: Vec<f64> = forced.iter().map(|f| f.unwrap_or(0.0)).collect();
        for mask in 0..(1usize << free.len()) {
            for (k, &m) in free.iter().enumerate() {
                vals[m] = levels[(mask >> k) & 1];
            }
            let (a, b) = vals.split_at(m_a);
            let mut v = self.constant;
            for i in 0..m_a {
                v += self.lin_a[i] * a[i];
                for j in 0..b.len() {
                    v += self.joint[(i, j)] * a[i] * b[j];
                }
            }
            v += self.lin_b.iter().zip(b).map(|(l, x)| l * x).sum::<f64>();
            best = best.max(v);
        }
        Some(best)
    }

    /// The quadratic program with `tr(O_m) = z_m` substituted. Observables
    /// whose trace forces them to be `±I` or `0` are fixed completely.
    pub fn fixed_trace_program(&self, profile: &TraceProfile) -> Result<QuadraticProgram> {
        profile.validate(self)?;
        let full = self.quadratic_program();
        let mut fixed = Vec::new();
        let mut offset = 0;
        let mut radius2 = 0.0;
        for (m, &z) in profile.z.iter().enumerate() {
            let d = self.dim_of(m);
            let df = d as f64;
            let zf = z as f64;
            fixed.push((offset, zf / df.sqrt()));
            let trivial = match self.kind {
                ObservableKind::Involution => z.unsigned_abs() as usize == d,
                ObservableKind::Projector => z == 0 || z as usize == d,
            };
            if trivial {
                for k in 1..d * d {
                    fixed.push((offset + k, 0.0));
                }
            } else {
                radius2 += match self.kind {
                    ObservableKind::Involution => df - zf * zf / df,
                    ObservableKind::Projector => zf - zf * zf / df,
                };
            }
            offset += d * d;
        }
        let mut qp = full.restrict(&fixed)?;
        qp.radius2 = radius2;
        Ok(qp)
    }
}

/// `[P_k]_ij = Re tr(σ_k σ_i σ_j)` for the orthonormal basis of dimension `d`.
pub fn structure_constants(d: usize) -> Vec<RMatrix> {
    let basis = hermitian_basis(d).elements;
    let n = d * d;
    let support: Vec<Vec<(usize, usize)>> = basis
        .iter()
        .map(|s| {
            let mut v = Vec::new();
            for a in 0..d {
                for b in 0..d {
                    if s[(a, b)].norm() > 0.0 {
                        v.push((a, b));
                    }
                }
            }
            v
        })
        .collect();
    let mut out = vec![RMatrix::zeros(n, n); n];
    for k in 0..n {
        for i in 0..n {
            let ki = &basis[k] * &basis[i];
            for j in i..n {
                // tr(M σ_j) = Σ_ab M_ba σ_j[a,b]
                let v: f64 = support[j].iter().map(|&(a, b)| (ki[(b, a)] * basis[j][(a, b)]).re).sum();
                let v = if v.abs() < 1e-15 { 0.0 } else { v };
                out[k][(i, j)] = v;
                out[k][(j, i)] = v;
            }
        }
    }
    out
}

/// `c + qᵀx + xᵀQx` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub c: f64,
    pub q: DVector<f64>,
    pub qq: RMatrix,
}

impl Quadratic {
    pub fn zeros(n: usize) -> Self {
        Self { c: 0.0, q: DVector::zeros(n), qq: RMatrix::zeros(n, n) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        self.c + self.q.dot(&x) + x.dot(&(&self.qq * &x))
    }

    fn is_zero(&self, tol: f64) -> bool {
        self.q.amax() <= tol && self.qq.amax() <= tol
    }

    /// Homogenized matrix `[[c, qᵀ/2], [q/2, Q]]`.
    pub fn homogenized(&self) -> RMatrix {
        let n = self.q.len();
        let mut m = RMatrix::zeros(n + 1, n + 1);
        m[(0, 0)] = self.c;
        for i in 0..n {
            m[(0, i + 1)] = 0.5 * self.q[i];
            m[(i + 1, 0)] = 0.5 * self.q[i];
            for j in 0..n {
                m[(i + 1, j + 1)] = self.qq[(i, j)];
            }
        }
        m
    }
}

/// Maximize `objective` subject to `constraints[k] = 0`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub objective: Quadratic,
    pub constraints: Vec<Quadratic>,
    /// Upper bound on `|x|²` over the feasible set.
    pub radius2: f64,
}

/// Optimal Lagrange multipliers: `γ - f(x) - Σ λ_k g_k(x) ≥ 0` for all `x`
/// (up to the reported eigenvalue defect).
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub gamma: f64,
    pub multipliers: Vec<f64>,
    /// Smallest eigenvalue of the homogenized certificate matrix.
    pub min_eigenvalue: f64,
}

impl DualCertificate {
    /// `f(x) + Σ λ_k g_k(x)`; never exceeds `γ` when the certificate is exact.
    pub fn lagrangian(&self, qp: &QuadraticProgram, x: &[f64]) -> f64 {
        qp.objective.eval(x) + qp.constraints.iter().zip(&self.multipliers).map(|(g, l)| l * g.eval(x)).sum::<f64>()
    }
}

/// Outcome of one dual SDP.
#[derive(Debug, Clone)]
pub struct DualBound {
    /// `γ` enlarged by the eigenvalue defect so that it is a valid bound.
    pub value: f64,
    pub certificate: Option<DualCertificate>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub gap: f64,
}

impl QuadraticProgram {
    pub fn len(&self) -> usize {
        self.objective.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Substitutes `x_i = v` for each `(i, v)`, dropping constraints that become trivial.
    pub fn restrict(&self, fixed: &[(usize, f64)]) -> Result<Self> {
        let n = self.len();
        let mut x0 = DVector::zeros(n);
        let mut is_fixed = vec![false; n];
        for &(i, v) in fixed {
            x0[i] = v;
            is_fixed[i] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
        let sub = |f: &Quadratic| -> Quadratic {
            let qx = &f.qq * &x0;
            let c = f.c + f.q.dot(&x0) + x0.dot(&qx);
            let q = DVector::from_iterator(free.len(), free.iter().map(|&i| f.q[i] + 2.0 * qx[i]));
            let qq = RMatrix::from_fn(free.len(), free.len(), |a, b| f.qq[(free[a], free[b])]);
            Quadratic { c, q, qq }
        };
        let mut constraints = Vec::new();
        for g in &self.constraints {
            let r = sub(g);
            if r.is_zero(1e-13) {
                if r.c.abs() > 1e-9 {
                    return Err(Error::Invalid("fixed values violate a constraint".into()));
                }
                continue;
            }
            constraints.push(r);
        }
        Ok(Self { objective: sub(&self.objective), constraints, radius2: self.radius2 })
    }

    /// Solves the lowest-order Lagrange dual. An objective without free
    /// variables returns its constant.
    pub fn lagrange_dual(&self, opts: &SdpOptions) -> Result<DualBound> {
        if self.is_empty() || self.objective.is_zero(1e-13) {
            return Ok(DualBound {
                value: self.objective.c,
                certificate: None,
                status: SdpStatus::Optimal,
                iterations: 0,
                gap: 0.0,
            });
        }
        let n = self.len() + 1;
        let mut e00 = RMatrix::zeros(n, n);
        e00[(0, 0)] = -1.0;
        let mut a = vec![SymSparse::from_dense(0, &e00)];
        let mut b = vec![-1.0];
        for g in &self.constraints {
            a.push(SymSparse::from_dense(0, &g.homogenized()));
            b.push(0.0);
        }
        let c0 = -self.objective.homogenized();
        let sdp = RealSdp { blocks: vec![n], c: vec![c0.clone()], a, b };
        let sol = solve_real(&sdp, opts)?;
        if sol.status == SdpStatus::Infeasible {
            return Err(Error::Solver(format!("dual relaxation reported infeasible ({:?})", sol.infeasibility)));
        }
        let gamma = sol.y[0];
        let multipliers = sol.y[1..].to_vec();
        // Rebuild S = γE - f̂ - Σλ ĝ exactly from the multipliers.
        let mut s = c0;
        s[(0, 0)] += gamma;
        for (g, l) in self.constraints.iter().zip(&multipliers) {
            s -= g.homogenized() * *l;
        }
        let min_eig = sym_eigenvalues(&s).into_iter().fold(f64::INFINITY, f64::min);
        let value = gamma + (-min_eig).max(0.0) * (1.0 + self.radius2);
        Ok(DualBound {
            value,
            certificate: Some(DualCertificate { gamma, multipliers, min_eigenvalue: min_eig }),
            status: sol.status,
            iterations: sol.iterations,
            gap: sol.gap,
        })
    }
}

/// Fixed traces `z_m = tr(O_m)`, Alice's observables first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceProfile {
    pub z: Vec<i64>,
}

impl TraceProfile {
    pub fn new(z: Vec<i64>) -> Self {
        Self { z }
    }

    pub fn validate(&self, inst: &QcqpInstance) -> Result<()> {
        if self.z.len() != inst.observable_count() {
            return Err(Error::Dimension(format!(
                "profile has {} entries for {} observables",
                self.z.len(),
                inst.observable_count()
            )));
        }
        for (m, &z) in self.z.iter().enumerate() {
            if !inst.trace_grid(m).contains(&z) {
                return Err(Error::Range(format!("trace {z} is not allowed for observable {m}")));
            }
        }
        Ok(())
    }

    /// Every profile on the grid, in lexicographic order.
    pub fn enumerate(inst: &QcqpInstance) -> Vec<TraceProfile> {
        let grids: Vec<Vec<i64>> = (0..inst.observable_count()).map(|m| inst.trace_grid(m)).collect();
        let mut out = vec![Vec::new()];
        for g in &grids {
            out = out
                .into_iter()
                .flat_map(|p: Vec<i64>| {
                    g.iter().map(move |&z| {
                        let mut q = p.clone();
                        q.push(z);
                        q
                    })
                })
                .collect();
        }
        out.into_iter().map(TraceProfile::new).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UbMode {
    StateIndependent,
    FixedTrace,
    Semianalytic,
}

/// An upper bound on `max tr(ρB)`.
#[derive(Debug, Clone, Serialize)]
pub struct UbResult {
    pub value: f64,
    pub mode: UbMode,
    /// Per-profile values of the profiles actually solved.
    pub profiles: Vec<(TraceProfile, f64)>,
    /// Profile attaining the value, when enumerating.
    pub best_profile: Option<TraceProfile>,
    /// Profiles skipped because a cheaper bound already ruled them out.
    pub pruned: usize,
    pub status: SdpStatus,
    pub iterations: usize,
    pub gap: f64,
}

impl UbResult {
    fn single(mode: UbMode, b: &DualBound) -> Self {
        Self {
            value: b.value,
            mode,
            profiles: Vec::new(),
            best_profile: None,
            pruned: 0,
            status: b.status,
            iterations: b.iterations,
            gap: b.gap,
        }
    }
}

fn ub_options() -> SdpOptions {
    SdpOptions { tol: 1e-9, max_iter: 200, max_dim: 1000 }
}

/// Lowest-order dual without trace information.
pub fn ub_state_independent(inst: &QcqpInstance) -> Result<UbResult> {
    let b = inst.quadratic_program().lagrange_dual(&ub_options())?;
    Ok(UbResult::single(UbMode::StateIndependent, &b))
}

/// Lowest-order dual restricted to observables with the given traces.
pub fn ub_fixed_trace(inst: &QcqpInstance, profile: &TraceProfile) -> Result<UbResult> {
    let b = profile_bound(inst, profile)?;
    let mut r = UbResult::single(UbMode::FixedTrace, &b);
    r.profiles.push((profile.clone(), b.value));
    r.best_profile = Some(profile.clone());
    Ok(r)
}

fn profile_bound(inst: &QcqpInstance, profile: &TraceProfile) -> Result<DualBound> {
    profile.validate(inst)?;
    if let Some(value) = inst.local_profile_value(profile) {
        return Ok(DualBound { value, certificate: None, status: SdpStatus::Optimal, iterations: 0, gap: 0.0 });
    }
    inst.fixed_trace_program(profile)?.lagrange_dual(&ub_options())
}

/// Options for [`ub_enumerate_profiles_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerateOptions {
    /// Skip a profile when the global sign flip maps it onto one already listed.
    pub use_symmetry: bool,
    /// Skip profiles whose cheap bound (the local value, or the closed form for
    /// vanishing-coherence correlation instances) cannot beat the running maximum.
    pub use_closed_form: bool,
    /// Stop as soon as some profile exceeds this level; the value is then a
    /// lower estimate of the full maximum but still proves it exceeds the level.
    pub stop_above: Option<f64>,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { use_symmetry: true, use_closed_form: true, stop_above: None }
    }
}

/// Maximum over all trace profiles of [`ub_fixed_trace`].
pub fn ub_enumerate_profiles(inst: &QcqpInstance) -> Result<UbResult> {
    ub_enumerate_profiles_with(inst, &EnumerateOptions::default())
}

/// Whether `O_m → -O_m` for all `m` leaves the problem invariant.
fn sign_flip_symmetric(inst: &QcqpInstance) -> bool {
    inst.kind == ObservableKind::Involution
        && inst.lin_a.iter().chain(&inst.lin_b).all(|&x| x == 0.0)
}

pub fn ub_enumerate_profiles_with(inst: &QcqpInstance, opts: &EnumerateOptions) -> Result<UbResult> {
    let mut profiles = TraceProfile::enumerate(inst);
    let total = profiles.len();
    if opts.use_symmetry && sign_flip_symmetric(inst) {
        profiles.retain(|p| {
            let neg = TraceProfile::new(p.z.iter().map(|z| -z).collect());
            *p <= neg
        });
    }
    let closed = if opts.use_closed_form { ClosedForm::new(inst) } else { None };
    // Candidates ordered by their cheap bound so pruning bites early.
    let mut cands: Vec<(TraceProfile, f64)> = profiles
        .into_iter()
        .map(|p| {
            let cb = match inst.local_profile_value(&p) {
                Some(v) => v,
                None => closed.as_ref().map_or(f64::INFINITY, |c| c.profile_value(&p.z)),
            };
            (p, cb)
        })
        .collect();
    cands.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));

    let chunk = rayon::current_num_threads().max(1) * 2;
    let mut best: Option<(TraceProfile, f64)> = None;
    let mut solved: Vec<(TraceProfile, f64)> = Vec::new();
    let mut worst = (SdpStatus::Optimal, 0usize, 0.0f64);
    let mut idx = 0;
    while idx < cands.len() {
        let floor = best.as_ref().map(|b| b.1).unwrap_or(f64::NEG_INFINITY);
        let floor = opts.stop_above.map_or(floor, |s| floor.max(s));
        if opts.use_closed_form && cands[idx].1 <= floor {
            break;
        }
        let end = (idx + chunk).min(cands.len());
        let batch: Vec<&TraceProfile> =
            cands[idx..end].iter().filter(|c| !opts.use_closed_form || c.1 > floor).map(|c| &c.0).collect();
        let results: Vec<Result<(TraceProfile, DualBound)>> = batch
            .par_iter()
            .map(|p| {
                Ok(((*p).clone(), profile_bound(inst, p)?))
            })
            .collect();
        for r in results {
            let (p, b) = r?;
            if b.status != SdpStatus::Optimal {
                worst.0 = b.status;
            }
            worst.1 = worst.1.max(b.iterations);
            worst.2 = worst.2.max(b.gap);
            let better = match &best {
                None => true,
                Some((bp, bv)) => b.value > *bv || (b.value == *bv && p < *bp),
            };
            if better {
                best = Some((p.clone(), b.value));
            }
            solved.push((p, b.value));
        }
        idx = end;
        if let (Some(s), Some(b)) = (opts.stop_above, &best) {
            if b.1 > s {
                break;
            }
        }
    }
    let (best_profile, value) = match best {
        Some((p, v)) => (Some(p), v),
        None => {
            // Everything pruned against `stop_above`: the closed form bounds all profiles.
            let v = cands.first().map_or(f64::NEG_INFINITY, |c| c.1);
            (None, v)
        }
    };
    solved.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(UbResult {
        value,
        mode: UbMode::FixedTrace,
        pruned: total - solved.len(),
        profiles: solved,
        best_profile,
        status: worst.0,
        iterations: worst.1,
        gap: worst.2,
    })
}

/// Closed-form bound per profile for correlation instances with vanishing
/// coherence vectors, from the multipliers `λ_mn = δ_n0 λ_party`.
#[derive(Debug, Clone)]
struct ClosedForm {
    d: usize,
    s1: f64,
    b_norm: f64,
    joint: RMatrix,
    lin_a: Vec<f64>,
    lin_b: Vec<f64>,
}

impl ClosedForm {
    fn new(inst: &QcqpInstance) -> Option<Self> {
        if inst.kind != ObservableKind::Involution || !inst.vanishing_coherence || inst.d_a != inst.d_b {
            return None;
        }
        let n = inst.d_a * inst.d_a;
        let rp = inst.t.view((1, 1), (n - 1, n - 1)).into_owned();
        let s1 = singular_values_real(&rp).first().copied().unwrap_or(0.0);
        let b_norm = singular_values_real(&inst.joint).first().copied().unwrap_or(0.0);
        Some(Self { d: inst.d_a, s1, b_norm, joint: inst.joint.clone(), lin_a: inst.lin_a.clone(), lin_b: inst.lin_b.clone() })
    }

    fn profile_value(&self, z: &[i64]) -> f64 {
        let d = self.d as f64;
        let m_a = self.joint.nrows();
        let spread = |zs: &[i64]| zs.iter().map(|&x| d * d - (x * x) as f64).sum::<f64>() / d.powf(1.5);
        let (sa, sb) = (spread(&z[..m_a]), spread(&z[m_a..]));
        let mut v = self.b_norm * self.s1 * (d * sa * sb).sqrt();
        for a in 0..m_a {
            v += self.lin_a[a] * z[a] as f64 / d;
            for b in 0..self.joint.ncols() {
                v += self.joint[(a, b)] * (z[a] * z[m_a + b]) as f64 / (d * d);
            }
        }
        for (b, l) in self.lin_b.iter().enumerate() {
            v += l * z[m_a + b] as f64 / d;
        }
        v
    }
}

/// Closed-form CHSH bound for states with vanishing coherence vectors:
/// the maximum over the trace grid of
/// `2√2 s₁ d √(Π_i (2d² - z²_{2i-1} - z²_{2i}) / 2d²) + Σ b z z / d²`.
pub fn chsh_semianalytic(rho: &DensityMatrix) -> Result<UbResult> {
    let (d_a, d_b) = rho.split();
    if d_a != d_b {
        return Err(Error::Dimension("the closed-form CHSH bound needs equal local dimensions".into()));
    }
    let coh = coherence_decomposition(rho)?;
    if coh.r_a.amax() > 1e-8 || coh.r_b.amax() > 1e-8 {
        return Err(Error::Invalid("the closed-form CHSH bound needs vanishing coherence vectors".into()));
    }
    let s1 = singular_values_real(&coh.r).first().copied().unwrap_or(0.0);
    let (value, z) = chsh_semianalytic_from_s1(s1, d_a);
    Ok(UbResult {
        value,
        mode: UbMode::Semianalytic,
        profiles: Vec::new(),
        best_profile: Some(TraceProfile::new(z)),
        pruned: 0,
        status: SdpStatus::Optimal,
        iterations: 0,
        gap: 0.0,
    })
}

/// The closed-form CHSH bound as a function of the largest singular value of `R′`.
/// Profiles containing an observable `±I` admit a local model and contribute
/// their deterministic maximum instead.
pub fn chsh_semianalytic_from_s1(s1: f64, d: usize) -> (f64, Vec<i64>) {
    let df = d as f64;
    let di = d as i64;
    let b = [[1.0, 1.0], [1.0, -1.0]];
    let chsh_at = |za: [f64; 2], zb: [f64; 2]| -> f64 {
        let mut v = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                v += b[i][j] * za[i] * zb[j];
            }
        }
        v
    };
    let grid: Vec<i64> = (0..=di).map(|k| -di + 2 * k).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for &z1 in &grid {
        for &z2 in &grid {
            let pa = (2.0 * df * df - (z1 * z1 + z2 * z2) as f64) / (2.0 * df * df);
            for &z3 in &grid {
                for &z4 in &grid {
                    let z = [z1, z2, z3, z4];
                    let v = if z.iter().any(|x| x.abs() == di) {
                        let mut local = f64::NEG_INFINITY;
                        for mask in 0..16usize {
                            let o: Vec<f64> = (0..4)
                                .map(|k| {
                                    if z[k].abs() == di {
                                        z[k].signum() as f64
                                    } else if mask >> k & 1 == 0 {
                                        1.0
                                    } else {
                                        -1.0
                                    }
                                })
                                .collect();
                            local = local.max(chsh_at([o[0], o[1]], [o[2], o[3]]));
                        }
                        local
                    } else {
                        let pb = (2.0 * df * df - (z3 * z3 + z4 * z4) as f64) / (2.0 * df * df);
                        let zf = |x: i64| x as f64 / df;
                        2.0 * std::f64::consts::SQRT_2 * s1 * df * (pa * pb).sqrt()
                            + chsh_at([zf(z1), zf(z2)], [zf(z3), zf(z4)])
                    };
                    if v > best.0 {
                        best = (v, z.to_vec());
                    }
                }
            }
        }
    }
    best
}

/// Smallest `p ∈ [lo, hi]` at which `exceeds(p)` becomes true, assuming it is
/// monotone; bisects to width `tol`.
pub fn bisect_threshold(mut lo: f64, mut hi: f64, tol: f64, mut exceeds: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    if lo > hi || tol <= 0.0 {
        return Err(Error::Range(format!("bad bisection bracket [{lo}, {hi}] / {tol}")));
    }
    if exceeds(lo)? {
        return Ok(lo);
    }
    if !exceeds(hi)? {
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if exceeds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Isotropic-state visibility below which the enumerated fixed-trace bound
/// certifies no CHSH violation.
pub fn isotropic_chsh_threshold_ub(d: usize, tol: f64) -> Result<f64> {
    let chsh = crate::bell::chsh();
    bisect_threshold(0.0, 1.0, tol, |p| {
        let rho = crate::states::isotropic(d, p)?;
        let inst = QcqpInstance::correlation(&chsh, &rho)?;
        let level = 2.0 + 1e-9;
        let opts = EnumerateOptions { stop_above: Some(level), ..Default::default() };
        Ok(ub_enumerate_profiles_with(&inst, &opts)?.value > level)
    })
}

/// Isotropic-state visibility below which the closed-form bound certifies no
/// CHSH violation.
pub fn isotropic_chsh_threshold_semianalytic(d: usize, tol: f64) -> Result<f64> {
    let rho = crate::states::isotropic(d, 1.0)?;
    let coh = coherence_decomposition(&rho)?;
    // R′ is linear in p for isotropic states.
    let s1 = singular_values_real(&coh.r).first().copied().unwrap_or(0.0);
    bisect_threshold(0.0, 1.0, tol, |p| Ok(chsh_semianalytic_from_s1(p * s1, d).0 > 2.0 + 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{ch, chsh, i3322, i4422};
    use crate::lb::{seesaw_correlation, SeesawConfig};
    use crate::qcore::{haar_unitary, identity, kron, pauli_x, pauli_z, random_density, random_hermitian};
    use crate::states::{collins_gisin, isotropic, singlet, werner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

    fn random_dichotomic<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
        let u = haar_unitary(d, rng);
        let diag = CMatrix::from_fn(d, d, |i, j| {
            if i != j {
                crate::qcore::c(0.0, 0.0)
            } else if rng.random_bool(0.5) {
                crate::qcore::c(1.0, 0.0)
            } else {
                crate::qcore::c(-1.0, 0.0)
            }
        });
        &u * diag * u.adjoint()
    }

    fn projector_of(o: &CMatrix) -> CMatrix {
        (o + identity(o.nrows())) * crate::qcore::c(0.5, 0.0)
    }

    #[test]
    fn quadratic_forms_match_direct_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for split in [(2, 2), (2, 3), (3, 3)] {
            let rho = random_density(split, 3, &mut rng);
            let inst = QcqpInstance::correlation(&chsh(), &rho).unwrap();
            let alice: Vec<CMatrix> = (0..2).map(|_| random_hermitian(split.0, &mut rng).into_inner()).collect();
            let bob: Vec<CMatrix> = (0..2).map(|_| random_hermitian(split.1, &mut rng).into_inner()).collect();
            let b = chsh().b;
            let mut direct = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    direct += b[i][j] * rho.expect(&kron(&alice[i], &bob[j]));
                }
            }
            let via_vec = inst.value_vectorized(&alice, &bob).unwrap();
            let x = inst.coefficients(&alice, &bob).unwrap();
            let via_coeff = inst.quadratic_program().objective.eval(&x);
            assert!((direct - via_vec).abs() < 1e-9, "{direct} vs {via_vec}");
            assert!((direct - via_coeff).abs() < 1e-9, "{direct} vs {via_coeff}");
        }
    }

    #[test]
    fn probability_form_matches_bell_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rho = random_density((2, 2), 4, &mut rng);
        for ineq in [ch(), i3322()] {
            let inst = QcqpInstance::probability(&ineq, &rho).unwrap();
            let s = ineq.scenario;
            let alice: Vec<CMatrix> = (0..s.m_a).map(|_| projector_of(&random_dichotomic(2, &mut rng))).collect();
            let bob: Vec<CMatrix> = (0..s.m_b).map(|_| projector_of(&random_dichotomic(2, &mut rng))).collect();
            let meas = crate::bell::MeasurementAssignment::from_projectors(&alice, &bob).unwrap();
            let direct = crate::lb::assignment_value(&rho, &ineq, &meas).unwrap();
            let x = inst.coefficients(&alice, &bob).unwrap();
            let via = inst.quadratic_program().objective.eval(&x);
            assert!((direct - via).abs() < 1e-9, "{direct} vs {via}");
        }
    }

    #[test]
    fn singlet_optimal_observables_reach_tsirelson() {
        let rho = singlet().density();
        let inst = QcqpInstance::correlation(&chsh(), &rho).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let (z, x) = (pauli_z(), pauli_x());
        let b1 = (&z + &x) * crate::qcore::c(-r, 0.0);
        let b2 = (&z - &x) * crate::qcore::c(-r, 0.0);
        let v = inst.value_vectorized(&[z.clone(), x.clone()], &[b1, b2]).unwrap();
        assert!((v - TSIRELSON).abs() < 1e-12);
        let id = identity(2);
        let v = inst.value_vectorized(&[id.clone(), id.clone()], &[id.clone(), id]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn state_independent_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for rho in [singlet().density(), random_density((2, 2), 4, &mut rng), isotropic(3, 0.4).unwrap()] {
            let v = ub_state_independent(&QcqpInstance::correlation(&chsh(), &rho).unwrap()).unwrap().value;
            assert!((v - TSIRELSON).abs() < 1e-6, "{v}");
        }
        let rho = random_density((2, 2), 2, &mut rng);
        let cases = [(ch(), 0.2071067), (i3322(), 0.375), (i4422(3).unwrap(), 0.6693461)];
        for (ineq, expected) in cases {
            let v = ub_state_independent(&QcqpInstance::probability(&ineq, &rho).unwrap()).unwrap().value;
            assert!((v - expected).abs() < 1e-6, "{}: {v}", ineq.name);
        }
    }

    #[test]
    fn dual_certificate_dominates_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let rho = random_density((2, 2), 3, &mut rng);
        let inst = QcqpInstance::probability(&ch(), &rho).unwrap();
        let qp = inst.quadratic_program();
        let bound = qp.lagrange_dual(&ub_options()).unwrap();
        let cert = bound.certificate.clone().unwrap();
        for _ in 0..100 {
            let alice: Vec<CMatrix> = (0..2).map(|_| projector_of(&random_dichotomic(2, &mut rng))).collect();
            let bob: Vec<CMatrix> = (0..2).map(|_| projector_of(&random_dichotomic(2, &mut rng))).collect();
            let x = inst.coefficients(&alice, &bob).unwrap();
            let l = cert.lagrangian(&qp, &x);
            assert!((l - qp.objective.eval(&x)).abs() < 1e-9);
            assert!(l <= bound.value + 1e-9);
        }
    }

    #[test]
    fn trivial_profiles_collapse_to_local_values() {
        let rho = singlet().density();
        let inst = QcqpInstance::correlation(&chsh(), &rho).unwrap();
        for z in [[2, 2, 2, 2], [-2, 2, -2, -2], [2, 0, 0, 0], [0, 0, -2, 0]] {
            let r = ub_fixed_trace(&inst, &TraceProfile::new(z.to_vec())).unwrap();
            assert!(r.value <= 2.0 + 1e-12, "{z:?}: {}", r.value);
        }
        assert!(ub_fixed_trace(&inst, &TraceProfile::new(vec![1, 0, 0, 0])).is_err());
    }

    #[test]
    fn degenerate_objective_returns_constant() {
        let rho = isotropic(2, 0.0).unwrap();
        let inst = QcqpInstance::correlation(&chsh(), &rho).unwrap();
        let r = ub_fixed_trace(&inst, &TraceProfile::new(vec![0, 0, 0, 0])).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn enumeration_dominates_each_profile_and_symmetry_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let rho = random_density((2, 2), 2, &mut rng);
        let inst = QcqpInstance::correlation(&chsh(), &rho).unwrap();
        let full = ub_enumerate_profiles_with(
            &inst,
            &EnumerateOptions { use_symmetry: false, use_closed_form: false, stop_above: None },
        )
        .unwrap();
        assert_eq!(full.profiles.len(), 81);
        let pruned = ub_enumerate_profiles(&inst).unwrap();
        assert!((full.value - pruned.value).abs() < 1e-9);
        for (p, v) in &full.profiles {
            assert!(full.value >= *v);
            let single = ub_fixed_trace(&inst, p).unwrap().value;
            assert!((single - v).abs() < 1e-9);
            let neg = TraceProfile::new(p.z.iter().map(|z| -z).collect());
            let mirrored = full.profiles.iter().find(|(q, _)| *q == neg).unwrap().1;
            assert!((mirrored - v).abs() < 1e-6, "{p:?}: {v} vs {mirrored}");
        }
    }

    #[test]
    fn sandwich_on_random_two_qubit_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let cfg = SeesawConfig { restarts: 4, rng_seed: 5, ..Default::default() };
        for _ in 0..30 {
            let rank = rng.random_range(1..=4);
            let rho = random_density((2, 2), rank, &mut rng);
            let inst = QcqpInstance::correlation(&chsh(), &rho).unwrap();
            let ub = ub_enumerate_profiles(&inst).unwrap().value;
            let lb = seesaw_correlation(&rho, &chsh(), &cfg).unwrap().value;
            assert!(lb <= ub + 1e-6, "{lb} > {ub}");
        }
    }

    #[test]
    fn werner_two_qubit_threshold() {
        let t = bisect_threshold(0.0, 1.0, 1e-6, |p| {
            let inst = QcqpInstance::correlation(&chsh(), &werner(2, p)?)?;
            Ok(ub_enumerate_profiles(&inst)?.value > 2.0 + 1e-9)
        })
        .unwrap();
        assert!((t - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3, "{t}");
    }

    #[test]
    fn isotropic_thresholds_from_enumeration() {
        for (d, expected) in [(2, 0.70711), (3, 0.70711), (4, 0.65465)] {
            let t = isotropic_chsh_threshold_ub(d, 1e-6).unwrap();
            assert!((t - expected).abs() < 1e-4, "d={d}: {t}");
        }
    }

    #[test]
    fn semianalytic_thresholds_and_looseness() {
        for (d, expected) in [(2, 0.70711), (3, 0.70711), (4, 0.65465), (5, 0.63246), (10, 0.51450)] {
            let t = isotropic_chsh_threshold_semianalytic(d, 1e-7).unwrap();
            assert!((t - expected).abs() < 1e-4, "d={d}: {t}");
        }
        for (d, p) in [(2, 0.8), (3, 0.75), (3, 0.5)] {
            let rho = isotropic(d, p).unwrap();
            let semi = chsh_semianalytic(&rho).unwrap().value;
            let num = ub_enumerate_profiles(&QcqpInstance::correlation(&chsh(), &rho).unwrap()).unwrap().value;
            assert!(semi >= num - 1e-6, "d={d} p={p}: {semi} < {num}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        assert!(chsh_semianalytic(&random_density((2, 2), 2, &mut rng)).is_err());
    }

    #[test]
    fn i3322_no_violation_certified_inside_bracket() {
        let inst = QcqpInstance::probability(&i3322(), &collins_gisin(0.5).unwrap()).unwrap();
        let r = ub_enumerate_profiles(&inst).unwrap();
        assert!(r.value <= 1e-6, "{}", r.value);
        let outside = QcqpInstance::probability(&i3322(), &collins_gisin(0.85).unwrap()).unwrap();
        assert!(ub_enumerate_profiles(&outside).unwrap().value > 1e-4);
    }

    #[test]
    fn structure_constants_encode_products() {
        let d = 3;
        let basis = hermitian_basis(d);
        let p = structure_constants(d);
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let h = random_hermitian(d, &mut rng).into_inner();
        let y = basis.coefficients(&h);
        let sq = &h * &h;
        for (k, pk) in p.iter().enumerate() {
            let yv = DVector::from_column_slice(&y);
            let lhs = yv.dot(&(pk * &yv));
            let rhs = trace_of(&sq, &basis.elements[k]);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    fn trace_of(a: &CMatrix, b: &CMatrix) -> f64 {
        crate::qcore::trace_product(a, b).re
    }
}
