//! Dense semidefinite programming with a primal-dual interior-point method.
//!
//! The core solver works on real symmetric block-diagonal data in the pair
//!
//! ```text
//! (P)  min ⟨C, X⟩   s.t. ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! (D)  max bᵀy      s.t. Σ y_i A_i + S = C,  S ⪰ 0
//! ```
//!
//! using infeasible-start path following with the HKM search direction and
//! Mehrotra predictor-corrector steps. Constraint matrices are stored by
//! their support so that the Schur complement costs scale with the number of
//! nonzero rows rather than the block size.
//!
//! Complex Hermitian problems ([`SdpStandard`], [`SdpInequality`]) are mapped
//! to real ones with [`real_embedding`] unless all data are real.

use nalgebra::{Cholesky, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, CMatrix, RMatrix};

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    /// Relative tolerance on the duality gap and on both residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest total matrix dimension accepted (after embedding).
    pub max_dim: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, max_dim: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

/// Which side an infeasibility certificate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasibility {
    /// No `X ⪰ 0` satisfies the equality constraints.
    Primal,
    /// The dual has no feasible point (the primal is unbounded or infeasible).
    Dual,
}

/// The restriction of a symmetric matrix to rows/columns `idx` of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPart {
    pub block: usize,
    pub idx: Vec<usize>,
    pub mat: RMatrix,
}

/// A sparse block-diagonal symmetric matrix as a sum of parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymSparse {
    pub parts: Vec<SymPart>,
}

impl SymSparse {
    /// Adds a dense block term, keeping only rows that carry a nonzero.
    pub fn push_dense(&mut self, block: usize, m: &RMatrix) {
        let n = m.nrows();
        let idx: Vec<usize> = (0..n).filter(|&r| (0..n).any(|k| m[(r, k)] != 0.0 || m[(k, r)] != 0.0)).collect();
        if idx.is_empty() {
            return;
        }
        let mat = RMatrix::from_fn(idx.len(), idx.len(), |a, b| 0.5 * (m[(idx[a], idx[b])] + m[(idx[b], idx[a])]));
        self.parts.push(SymPart { block, idx, mat });
    }

    pub fn from_dense(block: usize, m: &RMatrix) -> Self {
        let mut s = Self::default();
        s.push_dense(block, m);
        s
    }

    /// `⟨self, Y⟩` for dense block matrices `Y`.
    pub fn dot(&self, y: &[RMatrix]) -> f64 {
        let mut s = 0.0;
        for p in &self.parts {
            let yb = &y[p.block];
            for (a, &ia) in p.idx.iter().enumerate() {
                for (b, &ib) in p.idx.iter().enumerate() {
                    s += p.mat[(a, b)] * yb[(ia, ib)];
                }
            }
        }
        s
    }

    /// `Y += w · self`.
    pub fn add_to(&self, w: f64, y: &mut [RMatrix]) {
        for p in &self.parts {
            let yb = &mut y[p.block];
            for (a, &ia) in p.idx.iter().enumerate() {
                for (b, &ib) in p.idx.iter().enumerate() {
                    yb[(ia, ib)] += w * p.mat[(a, b)];
                }
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.parts.iter().map(|p| p.mat.norm_squared()).sum::<f64>().sqrt()
    }
}

/// A real block-diagonal SDP in the (P)/(D) pair above.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSdp {
    pub blocks: Vec<usize>,
    pub c: Vec<RMatrix>,
    pub a: Vec<SymSparse>,
    pub b: Vec<f64>,
}

/// Raw solver output for a [`RealSdp`].
#[derive(Debug, Clone)]
pub struct RealSolution {
    pub x: Vec<RMatrix>,
    pub y: Vec<f64>,
    pub s: Vec<RMatrix>,
    /// `⟨C, X⟩`.
    pub primal_objective: f64,
    /// `bᵀy`.
    pub dual_objective: f64,
    pub status: SdpStatus,
    pub infeasibility: Option<Infeasibility>,
    pub iterations: usize,
    /// `|⟨C,X⟩ - bᵀy| / (1 + |⟨C,X⟩| + |bᵀy|)`.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl RealSdp {
    pub fn validate(&self, opts: &SdpOptions) -> Result<()> {
        if self.c.len() != self.blocks.len() {
            return Err(Error::Dimension(format!("{} cost blocks for {} blocks", self.c.len(), self.blocks.len())));
        }
        for (k, (cb, &n)) in self.c.iter().zip(&self.blocks).enumerate() {
            if cb.nrows() != n || cb.ncols() != n {
                return Err(Error::Dimension(format!("cost block {k} is {}x{}, expected {n}", cb.nrows(), cb.ncols())));
            }
        }
        if self.a.len() != self.b.len() {
            return Err(Error::Dimension(format!("{} constraints but {} right-hand sides", self.a.len(), self.b.len())));
        }
        for (i, ai) in self.a.iter().enumerate() {
            for p in &ai.parts {
                if p.block >= self.blocks.len() || p.idx.iter().any(|&r| r >= self.blocks[p.block]) {
                    return Err(Error::Dimension(format!("constraint {i} addresses outside its block")));
                }
                if p.mat.nrows() != p.idx.len() || p.mat.ncols() != p.idx.len() {
                    return Err(Error::Dimension(format!("constraint {i} part shape")));
                }
            }
        }
        let total: usize = self.blocks.iter().sum();
        if total > opts.max_dim {
            return Err(Error::Dimension(format!("total dimension {total} exceeds the cap {}", opts.max_dim)));
        }
        Ok(())
    }

    /// Plain JSON dump for cross-checking with external solvers.
    pub fn to_json(&self) -> serde_json::Value {
        let dense = |m: &RMatrix| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        serde_json::json!({
            "blocks": self.blocks,
            "c": self.c.iter().map(dense).collect::<Vec<_>>(),
            "b": self.b,
            "a": self.a.iter().map(|ai| ai.parts.iter().map(|p| serde_json::json!({
                "block": p.block, "idx": p.idx, "mat": dense(&p.mat)
            })).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

fn inner(a: &[RMatrix], b: &[RMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn fro(a: &[RMatrix]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: RMatrix) -> RMatrix {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Largest `α ≤ 1/τ`-style step keeping `X + αΔX ⪰ 0`, given the Cholesky
/// factor of `X`; `f64::INFINITY` when every step is allowed.
fn max_step(chol: &[Cholesky<f64, nalgebra::Dyn>], dx: &[RMatrix]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (ch, d) in chol.iter().zip(dx) {
        let l = ch.l();
        let n = l.nrows();
        let linv = l.solve_lower_triangular(&RMatrix::identity(n, n)).unwrap_or_else(|| RMatrix::identity(n, n));
        let w = sym(&linv * d * linv.transpose());
        let lmin = SymmetricEigen::new(w).eigenvalues.min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

struct Workspace<'a> {
    p: &'a RealSdp,
    /// For each block, the `(constraint, part)` pairs living in it.
    by_block: Vec<Vec<(usize, usize)>>,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a RealSdp) -> Self {
        let mut by_block = vec![Vec::new(); p.blocks.len()];
        for (i, ai) in p.a.iter().enumerate() {
            for (k, part) in ai.parts.iter().enumerate() {
                by_block[part.block].push((i, k));
            }
        }
        Self { p, by_block }
    }

    fn apply(&self, y: &[RMatrix]) -> DVector<f64> {
        DVector::from_iterator(self.p.a.len(), self.p.a.iter().map(|ai| ai.dot(y)))
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<RMatrix> {
        let mut out: Vec<RMatrix> = self.p.blocks.iter().map(|&n| RMatrix::zeros(n, n)).collect();
        for (ai, &w) in self.p.a.iter().zip(y.iter()) {
            if w != 0.0 {
                ai.add_to(w, &mut out);
            }
        }
        out
    }

    /// `M_ij = ⟨A_i, X A_j S⁻¹⟩`.
    fn schur(&self, x: &[RMatrix], sinv: &[RMatrix]) -> RMatrix {
        let m = self.p.a.len();
        let mut big = RMatrix::zeros(m, m);
        for (blk, members) in self.by_block.iter().enumerate() {
            for &(j, kj) in members {
                let pj = &self.p.a[j].parts[kj];
                let t = x[blk].select_columns(pj.idx.iter()) * &pj.mat;
                let u = t * sinv[blk].select_rows(pj.idx.iter());
                for &(i, ki) in members {
                    if i < j {
                        continue;
                    }
                    let pi = &self.p.a[i].parts[ki];
                    let mut s = 0.0;
                    for (a, &ia) in pi.idx.iter().enumerate() {
                        for (b, &ib) in pi.idx.iter().enumerate() {
                            s += pi.mat[(a, b)] * u[(ia, ib)];
                        }
                    }
                    big[(i, j)] += s;
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                big[(j, i)] = big[(i, j)];
            }
        }
        big
    }
}

fn solve_schur(m: &RMatrix, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        let sol = ch.solve(rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Some(sol);
        }
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut ridge = 1e-14 * scale;
    for _ in 0..12 {
        let mut mr = m.clone();
        for k in 0..mr.nrows() {
            mr[(k, k)] += ridge;
        }
        if let Some(ch) = Cholesky::new(mr) {
            let sol = ch.solve(rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
        ridge *= 100.0;
    }
    m.clone().lu().solve(rhs)
}

/// Solves a real block-diagonal SDP.
pub fn solve_real(p: &RealSdp, opts: &SdpOptions) -> Result<RealSolution> {
    p.validate(opts)?;
    let ws = Workspace::new(p);
    let m = p.a.len();
    let b = DVector::from_column_slice(&p.b);
    let n_total: usize = p.blocks.iter().sum();
    let nf = n_total.max(1) as f64;

    // Scaled-identity starting point.
    let norm_a: Vec<f64> = p.a.iter().map(SymSparse::norm).collect();
    let mut xi: f64 = 10f64.max(nf.sqrt());
    let mut eta: f64 = 10f64.max(nf.sqrt()).max(fro(&p.c));
    for (k, na) in norm_a.iter().enumerate() {
        xi = xi.max(nf.sqrt() * (1.0 + p.b[k].abs()) / (1.0 + na));
        eta = eta.max(*na);
    }
    let mut x: Vec<RMatrix> = p.blocks.iter().map(|&n| RMatrix::identity(n, n) * xi).collect();
    let mut s: Vec<RMatrix> = p.blocks.iter().map(|&n| RMatrix::identity(n, n) * eta).collect();
    let mut y = DVector::zeros(m);

    let norm_b = b.norm();
    let norm_c = fro(&p.c);
    let mut status = SdpStatus::MaxIter;
    let mut infeasibility = None;
    let mut iterations = 0;
    let (mut gap, mut pres, mut dres) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

    for it in 0..=opts.max_iter {
        iterations = it;
        let ax = ws.apply(&x);
        let rp = &b - &ax;
        let aty = ws.adjoint(&y);
        let rd: Vec<RMatrix> = p.c.iter().zip(&aty).zip(&s).map(|((cb, ab), sb)| cb - ab - sb).collect();
        let pobj = inner(&p.c, &x);
        let dobj = b.dot(&y);
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        pres = rp.norm() / (1.0 + norm_b);
        dres = fro(&rd) / (1.0 + norm_c);
        if !(gap.is_finite() && pres.is_finite() && dres.is_finite()) {
            status = SdpStatus::NumericalFailure;
            break;
        }
        if gap <= opts.tol && pres <= opts.tol && dres <= opts.tol {
            status = SdpStatus::Optimal;
            break;
        }
        // Farkas-type certificates: a diverging dual (primal) objective with
        // bounded residual directions.
        if dobj > 0.0 {
            let ratio = fro(&aty.iter().zip(&s).map(|(a, sb)| a + sb).collect::<Vec<_>>()) / dobj;
            if ratio < opts.tol && dobj > 1e6 {
                status = SdpStatus::Infeasible;
                infeasibility = Some(Infeasibility::Primal);
                break;
            }
        }
        if pobj < 0.0 {
            let ratio = ax.norm() / -pobj;
            if ratio < opts.tol && -pobj > 1e6 {
                status = SdpStatus::Infeasible;
                infeasibility = Some(Infeasibility::Dual);
                break;
            }
        }
        if it == opts.max_iter {
            break;
        }

        let chol_x: Vec<_> = x.iter().map(|xb| Cholesky::new(xb.clone())).collect();
        let chol_s: Vec<_> = s.iter().map(|sb| Cholesky::new(sb.clone())).collect();
        if chol_x.iter().chain(&chol_s).any(Option::is_none) {
            status = SdpStatus::NumericalFailure;
            break;
        }
        let chol_x: Vec<_> = chol_x.into_iter().map(Option::unwrap).collect();
        let chol_s: Vec<_> = chol_s.into_iter().map(Option::unwrap).collect();
        let sinv: Vec<RMatrix> = chol_s.iter().map(|ch| sym(ch.inverse())).collect();
        let mu = inner(&x, &s) / nf;

        let schur = ws.schur(&x, &sinv);
        let x_rd_sinv: Vec<RMatrix> = x.iter().zip(&rd).zip(&sinv).map(|((xb, r), si)| xb * r * si).collect();
        let a_xrds = ws.apply(&x_rd_sinv);
        let a_sinv = ws.apply(&sinv);

        let direction = |sigma: f64, corr: Option<&[RMatrix]>| -> Option<(DVector<f64>, Vec<RMatrix>, Vec<RMatrix>)> {
            let mut rhs = &b - &a_sinv * (sigma * mu) + &a_xrds;
            if let Some(cc) = corr {
                rhs += ws.apply(cc);
            }
            let dy = solve_schur(&schur, &rhs)?;
            let atdy = ws.adjoint(&dy);
            let ds: Vec<RMatrix> = rd.iter().zip(&atdy).map(|(r, a)| sym(r - a)).collect();
            let mut dx = Vec::with_capacity(x.len());
            for (k, xb) in x.iter().enumerate() {
                let mut d = &sinv[k] * (sigma * mu) - xb - xb * &ds[k] * &sinv[k];
                if let Some(cc) = corr {
                    d -= &cc[k];
                }
                dx.push(sym(d));
            }
            Some((dy, dx, ds))
        };

        let Some((_, dxa, dsa)) = direction(0.0, None) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let ap = max_step(&chol_x, &dxa).min(1.0);
        let ad = max_step(&chol_s, &dsa).min(1.0);
        let xa: Vec<RMatrix> = x.iter().zip(&dxa).map(|(a, d)| a + d * ap).collect();
        let sa: Vec<RMatrix> = s.iter().zip(&dsa).map(|(a, d)| a + d * ad).collect();
        let mu_aff = inner(&xa, &sa) / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let corr: Vec<RMatrix> = dxa.iter().zip(&dsa).zip(&sinv).map(|((dx, ds), si)| dx * ds * si).collect();

        let Some((dy, dx, ds)) = direction(sigma, Some(&corr)) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let tau = 0.9 + 0.09 * ap.min(ad);
        let ap = (tau * max_step(&chol_x, &dx)).min(1.0);
        let ad = (tau * max_step(&chol_s, &ds)).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            status = SdpStatus::NumericalFailure;
            break;
        }
        for k in 0..x.len() {
            x[k] = sym(&x[k] + &dx[k] * ap);
            s[k] = sym(&s[k] + &ds[k] * ad);
        }
        y += dy * ad;
    }

    Ok(RealSolution {
        primal_objective: inner(&p.c, &x),
        dual_objective: b.dot(&y),
        x,
        y: y.iter().copied().collect(),
        s,
        status,
        infeasibility,
        iterations,
        gap,
        primal_residual: pres,
        dual_residual: dres,
    })
}

/// `[[Re H, -Im H], [Im H, Re H]]`: symmetric when `H` is Hermitian, with the
/// spectrum of `H` doubled in multiplicity.
pub fn real_embedding(h: &CMatrix) -> RMatrix {
    let n = h.nrows();
    let k = h.ncols();
    RMatrix::from_fn(2 * n, 2 * k, |i, j| {
        let z = h[(i % n, j % k)];
        match (i < n, j < k) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`real_embedding`] after projecting onto its range.
pub fn complex_from_embedding(m: &RMatrix) -> CMatrix {
    let n = m.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        c(
            0.5 * (m[(i, j)] + m[(i + n, j + n)]),
            0.5 * (m[(i + n, j)] - m[(i, j + n)]),
        )
    })
}

fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// One block of a block-diagonal Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTerm {
    pub block: usize,
    pub mat: CMatrix,
}

/// `maximize -tr(F₀ Z)` s.t. `tr(F_i Z) = c_i`, `Z ⪰ 0` with `Z` block-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpStandard {
    /// One dense block per diagonal block of `Z`; block sizes are read from here.
    pub f0: Vec<CMatrix>,
    pub fi: Vec<Vec<BlockTerm>>,
    pub c: Vec<f64>,
}

/// `minimize c′ᵀx` s.t. `G₀ + Σ x_i G_i ⪰ 0` (block-diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct SdpInequality {
    pub cost: Vec<f64>,
    pub g0: Vec<CMatrix>,
    pub gi: Vec<Vec<BlockTerm>>,
}

/// Result of [`solve_standard`] or [`solve_inequality`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Primal matrix blocks (`Z` of the standard form, or the dual certificate
    /// of the inequality form).
    pub z: Vec<CMatrix>,
    /// Vector variable (`x` of the inequality form, multipliers of the
    /// standard form).
    pub x: Vec<f64>,
    /// Objective in the problem's own sense.
    pub objective: f64,
    /// Value attained by the primal iterate.
    pub primal_objective: f64,
    /// Value attained by the dual iterate (a bound on the optimum when feasible).
    pub dual_objective: f64,
    pub status: SdpStatus,
    pub infeasibility: Option<Infeasibility>,
    pub gap: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

fn check_hermitian_blocks(sizes: &[usize], terms: &[BlockTerm], what: &str) -> Result<()> {
    for t in terms {
        let n = *sizes
            .get(t.block)
            .ok_or_else(|| Error::Dimension(format!("{what}: block {} does not exist", t.block)))?;
        if t.mat.nrows() != n || t.mat.ncols() != n {
            return Err(Error::Dimension(format!("{what}: block {} has size {}", t.block, t.mat.nrows())));
        }
        if crate::qcore::hermitian_deviation(&t.mat) > 1e-10 {
            return Err(Error::Invalid(format!("{what} is not Hermitian")));
        }
    }
    Ok(())
}

fn lower(m: &CMatrix, embed: bool) -> RMatrix {
    if embed {
        real_embedding(m)
    } else {
        m.map(|z| z.re)
    }
}

/// Solves a problem in standard form.
pub fn solve_standard(p: &SdpStandard, opts: &SdpOptions) -> Result<SdpSolution> {
    let sizes: Vec<usize> = p.f0.iter().map(|m| m.nrows()).collect();
    let f0_terms: Vec<BlockTerm> = p.f0.iter().enumerate().map(|(k, m)| BlockTerm { block: k, mat: m.clone() }).collect();
    check_hermitian_blocks(&sizes, &f0_terms, "F0")?;
    if p.fi.len() != p.c.len() {
        return Err(Error::Dimension(format!("{} constraints but {} constants", p.fi.len(), p.c.len())));
    }
    for (i, f) in p.fi.iter().enumerate() {
        check_hermitian_blocks(&sizes, f, &format!("F{}", i + 1))?;
    }
    let embed = !(p.f0.iter().all(is_real) && p.fi.iter().flatten().all(|t| is_real(&t.mat)));
    let factor = if embed { 2.0 } else { 1.0 };
    let real = RealSdp {
        blocks: sizes.iter().map(|&n| if embed { 2 * n } else { n }).collect(),
        c: p.f0.iter().map(|m| lower(m, embed)).collect(),
        a: p
            .fi
            .iter()
            .map(|terms| {
                let mut s = SymSparse::default();
                for t in terms {
                    s.push_dense(t.block, &lower(&t.mat, embed));
                }
                s
            })
            .collect(),
        b: p.c.iter().map(|v| v * factor).collect(),
    };
    let sol = solve_real(&real, opts)?;
    let z = sol
        .x
        .iter()
        .map(|m| if embed { complex_from_embedding(m) } else { m.map(|v| c(v, 0.0)) })
        .collect();
    Ok(SdpSolution {
        z,
        x: sol.y.clone(),
        objective: -sol.primal_objective / factor,
        primal_objective: -sol.primal_objective / factor,
        dual_objective: -sol.dual_objective / factor,
        status: sol.status,
        infeasibility: sol.infeasibility,
        gap: sol.gap,
        iterations: sol.iterations,
    })
}

/// Solves a problem in inequality form.
pub fn solve_inequality(p: &SdpInequality, opts: &SdpOptions) -> Result<SdpSolution> {
    let sizes: Vec<usize> = p.g0.iter().map(|m| m.nrows()).collect();
    let g0_terms: Vec<BlockTerm> = p.g0.iter().enumerate().map(|(k, m)| BlockTerm { block: k, mat: m.clone() }).collect();
    check_hermitian_blocks(&sizes, &g0_terms, "G0")?;
    if p.gi.len() != p.cost.len() {
        return Err(Error::Dimension(format!("{} matrices but {} costs", p.gi.len(), p.cost.len())));
    }
    for (i, g) in p.gi.iter().enumerate() {
        check_hermitian_blocks(&sizes, g, &format!("G{}", i + 1))?;
    }
    let embed = !(p.g0.iter().all(is_real) && p.gi.iter().flatten().all(|t| is_real(&t.mat)));
    let real = RealSdp {
        blocks: sizes.iter().map(|&n| if embed { 2 * n } else { n }).collect(),
        c: p.g0.iter().map(|m| lower(m, embed)).collect(),
        a: p
            .gi
            .iter()
            .map(|terms| {
                let mut s = SymSparse::default();
                for t in terms {
                    s.push_dense(t.block, &lower(&t.mat, embed));
                }
                s
            })
            .collect(),
        b: p.cost.clone(),
    };
    let sol = solve_real(&real, opts)?;
    // The solver's dual variable is -x.
    let x: Vec<f64> = sol.y.iter().map(|v| -v).collect();
    let z = sol
        .x
        .iter()
        .map(|m| if embed { complex_from_embedding(m) * c(2.0, 0.0) } else { m.map(|v| c(v, 0.0)) })
        .collect();
    Ok(SdpSolution {
        z,
        objective: -sol.dual_objective,
        primal_objective: -sol.dual_objective,
        dual_objective: -sol.primal_objective,
        x,
        status: sol.status,
        infeasibility: sol.infeasibility.map(|f| match f {
            Infeasibility::Primal => Infeasibility::Dual,
            Infeasibility::Dual => Infeasibility::Primal,
        }),
        gap: sol.gap,
        iterations: sol.iterations,
    })
}
