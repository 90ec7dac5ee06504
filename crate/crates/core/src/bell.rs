//! Bell inequalities for probabilities and correlation functions.
//!
//! A [`BellInequality`] stores its coefficients at full size: one entry per
//! outcome of every setting, including the last outcome, which the usual
//! compact tables omit. The left-hand side evaluated on a probability table
//! `p` is
//!
//! ```text
//! b00 + Σ marg_a[sa][oa] p_A(oa|sa) + Σ marg_b[sb][ob] p_B(ob|sb)
//!     + Σ joint[sa][sb][oa][ob] p(oa,ob|sa,sb)
//! ```
//!
//! and the inequality reads `lhs ≤ classical_bound`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{bilinear_trace, c, identity, kron, min_eigenvalue, CMatrix, DensityMatrix, Hermitian};
use crate::tol::TOL;

/// Upper limit on the number of deterministic strategies enumerated.
pub const MAX_STRATEGIES: f64 = 1e8;

/// Numbers of settings and outcomes per party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BellScenario {
    pub m_a: usize,
    pub m_b: usize,
    pub n_a: usize,
    pub n_b: usize,
}

impl BellScenario {
    pub fn new(m_a: usize, m_b: usize, n_a: usize, n_b: usize) -> Result<Self> {
        if m_a == 0 || m_b == 0 || n_a == 0 || n_b == 0 {
            return Err(Error::Invalid(format!("scenario ({m_a},{m_b};{n_a},{n_b}) has a zero count")));
        }
        Ok(Self { m_a, m_b, n_a, n_b })
    }

    pub fn swapped(&self) -> Self {
        Self { m_a: self.m_b, m_b: self.m_a, n_a: self.n_b, n_b: self.n_a }
    }

    /// `n_A^{m_A} · n_B^{m_B}`.
    pub fn strategy_count(&self) -> f64 {
        (self.n_a as f64).powi(self.m_a as i32) * (self.n_b as f64).powi(self.m_b as i32)
    }
}

/// One outcome per setting for each party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

/// Probabilities `p(oa,ob|sa,sb)` with the induced marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub scenario: BellScenario,
    /// `joint[sa][sb][oa][ob]`.
    pub joint: Vec<Vec<Vec<Vec<f64>>>>,
    pub marg_a: Vec<Vec<f64>>,
    pub marg_b: Vec<Vec<f64>>,
}

impl ProbabilityTable {
    /// Probabilities of a deterministic strategy.
    pub fn deterministic(scenario: BellScenario, s: &DeterministicStrategy) -> Self {
        let BellScenario { m_a, m_b, n_a, n_b } = scenario;
        let marg_a = (0..m_a).map(|sa| (0..n_a).map(|o| f64::from(u8::from(s.a[sa] == o))).collect()).collect();
        let marg_b = (0..m_b).map(|sb| (0..n_b).map(|o| f64::from(u8::from(s.b[sb] == o))).collect()).collect();
        let joint = (0..m_a)
            .map(|sa| {
                (0..m_b)
                    .map(|sb| {
                        (0..n_a)
                            .map(|oa| (0..n_b).map(|ob| f64::from(u8::from(s.a[sa] == oa && s.b[sb] == ob))).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { scenario, joint, marg_a, marg_b }
    }

    /// Quantum probabilities `tr(ρ A_{sa}^{oa} ⊗ B_{sb}^{ob})`.
    pub fn quantum(rho: &DensityMatrix, meas: &MeasurementAssignment) -> Result<Self> {
        let (da, db) = rho.split();
        if meas.dims() != (da, db) {
            return Err(Error::Dimension(format!(
                "measurements act on {:?}, state on ({da},{db})",
                meas.dims()
            )));
        }
        let scenario = meas.scenario();
        let ia = identity(da);
        let ib = identity(db);
        let m = rho.matrix();
        let marg_a = meas
            .alice
            .iter()
            .map(|set| set.iter().map(|a| bilinear_trace(m, a.matrix(), &ib, db)).collect())
            .collect();
        let marg_b = meas
            .bob
            .iter()
            .map(|set| set.iter().map(|b| bilinear_trace(m, &ia, b.matrix(), db)).collect())
            .collect();
        let joint = meas
            .alice
            .iter()
            .map(|aset| {
                meas.bob
                    .iter()
                    .map(|bset| {
                        aset.iter()
                            .map(|a| bset.iter().map(|b| bilinear_trace(m, a.matrix(), b.matrix(), db)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { scenario, joint, marg_a, marg_b })
    }

    /// Largest violation of normalization or no-signaling.
    pub fn consistency_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (sa, per_b) in self.joint.iter().enumerate() {
            for (sb, table) in per_b.iter().enumerate() {
                let total: f64 = table.iter().flatten().sum();
                worst = worst.max((total - 1.0).abs());
                for (oa, row) in table.iter().enumerate() {
                    let s: f64 = row.iter().sum();
                    worst = worst.max((s - self.marg_a[sa][oa]).abs());
                }
                for ob in 0..self.scenario.n_b {
                    let s: f64 = table.iter().map(|row| row[ob]).sum();
                    worst = worst.max((s - self.marg_b[sb][ob]).abs());
                }
            }
        }
        worst
    }
}

/// POVMs for every setting of both parties.
#[derive(Debug, Clone)]
pub struct MeasurementAssignment {
    /// `alice[sa][oa]`.
    pub alice: Vec<Vec<Hermitian>>,
    /// `bob[sb][ob]`.
    pub bob: Vec<Vec<Hermitian>>,
}

impl MeasurementAssignment {
    /// Checks positivity and completeness of every POVM.
    pub fn new(alice: Vec<Vec<Hermitian>>, bob: Vec<Vec<Hermitian>>) -> Result<Self> {
        for (name, party) in [("Alice", &alice), ("Bob", &bob)] {
            let first = party
                .first()
                .and_then(|s| s.first())
                .ok_or_else(|| Error::Invalid(format!("{name} has no measurements")))?;
            let d = first.dim();
            let n = party[0].len();
            for (s, povm) in party.iter().enumerate() {
                if povm.len() != n {
                    return Err(Error::Dimension(format!("{name} setting {s} has {} outcomes, expected {n}", povm.len())));
                }
                let mut sum = CMatrix::zeros(d, d);
                for e in povm {
                    if e.dim() != d {
                        return Err(Error::Dimension(format!("{name} setting {s}: element of size {}", e.dim())));
                    }
                    if min_eigenvalue(e.matrix()) < -TOL.density {
                        return Err(Error::Invalid(format!("{name} setting {s}: POVM element is not PSD")));
                    }
                    sum += e.matrix();
                }
                let dev = (sum - identity(d)).iter().map(|z| z.norm()).fold(0.0, f64::max);
                if dev > TOL.povm {
                    return Err(Error::Invalid(format!("{name} setting {s}: elements sum to identity only within {dev:e}")));
                }
            }
        }
        Ok(Self { alice, bob })
    }

    /// Two-outcome measurements `{P, I-P}` from a list of projectors.
    pub fn from_projectors(alice: &[CMatrix], bob: &[CMatrix]) -> Result<Self> {
        let pair = |p: &CMatrix| -> Result<Vec<Hermitian>> {
            let d = p.nrows();
            Ok(vec![Hermitian::new(p.clone())?, Hermitian::new(identity(d) - p)?])
        };
        Self::new(
            alice.iter().map(pair).collect::<Result<_>>()?,
            bob.iter().map(pair).collect::<Result<_>>()?,
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.alice[0][0].dim(), self.bob[0][0].dim())
    }

    pub fn scenario(&self) -> BellScenario {
        BellScenario { m_a: self.alice.len(), m_b: self.bob.len(), n_a: self.alice[0].len(), n_b: self.bob[0].len() }
    }

    pub fn swap_parties(&self) -> Self {
        Self { alice: self.bob.clone(), bob: self.alice.clone() }
    }
}

/// A Bell inequality for probabilities, stored with full-size blocks.
#[derive(Debug, Clone)]
pub struct BellInequality {
    pub name: String,
    pub scenario: BellScenario,
    pub b00: f64,
    /// `marg_a[sa][oa]`.
    pub marg_a: Vec<Vec<f64>>,
    /// `marg_b[sb][ob]`.
    pub marg_b: Vec<Vec<f64>>,
    /// `joint[sa][sb][oa][ob]`.
    pub joint: Vec<Vec<Vec<Vec<f64>>>>,
    bound: OnceLock<f64>,
}

impl PartialEq for BellInequality {
    fn eq(&self, other: &Self) -> bool {
        self.scenario == other.scenario
            && self.b00 == other.b00
            && self.marg_a == other.marg_a
            && self.marg_b == other.marg_b
            && self.joint == other.joint
    }
}

impl BellInequality {
    /// All-zero coefficients for a scenario.
    pub fn zeros(name: &str, scenario: BellScenario) -> Self {
        let BellScenario { m_a, m_b, n_a, n_b } = scenario;
        Self {
            name: name.to_string(),
            scenario,
            b00: 0.0,
            marg_a: vec![vec![0.0; n_a]; m_a],
            marg_b: vec![vec![0.0; n_b]; m_b],
            joint: vec![vec![vec![vec![0.0; n_b]; n_a]; m_b]; m_a],
            bound: OnceLock::new(),
        }
    }

    /// Validates block shapes against the scenario.
    pub fn new(
        name: &str,
        scenario: BellScenario,
        b00: f64,
        marg_a: Vec<Vec<f64>>,
        marg_b: Vec<Vec<f64>>,
        joint: Vec<Vec<Vec<Vec<f64>>>>,
    ) -> Result<Self> {
        let BellScenario { m_a, m_b, n_a, n_b } = scenario;
        let shape_err = |what: &str| Error::Dimension(format!("{what} does not match scenario ({m_a},{m_b};{n_a},{n_b})"));
        if marg_a.len() != m_a || marg_a.iter().any(|v| v.len() != n_a) {
            return Err(shape_err("Alice marginal block"));
        }
        if marg_b.len() != m_b || marg_b.iter().any(|v| v.len() != n_b) {
            return Err(shape_err("Bob marginal block"));
        }
        let joint_ok = joint.len() == m_a
            && joint.iter().all(|r| {
                r.len() == m_b && r.iter().all(|blk| blk.len() == n_a && blk.iter().all(|row| row.len() == n_b))
            });
        if !joint_ok {
            return Err(shape_err("joint block"));
        }
        let all = std::iter::once(b00)
            .chain(marg_a.iter().flatten().copied())
            .chain(marg_b.iter().flatten().copied())
            .chain(joint.iter().flatten().flatten().flatten().copied());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite coefficient".into()));
        }
        Ok(Self { name: name.to_string(), scenario, b00, marg_a, marg_b, joint, bound: OnceLock::new() })
    }

    /// Builds from the compact layout where the last outcome of every setting
    /// is omitted (blocks of size `(n_A-1)×(n_B-1)`).
    pub fn from_reduced(
        name: &str,
        scenario: BellScenario,
        b00: f64,
        marg_a: &[Vec<f64>],
        marg_b: &[Vec<f64>],
        joint: &[Vec<Vec<Vec<f64>>>],
    ) -> Result<Self> {
        let BellScenario { n_a, n_b, .. } = scenario;
        let pad = |v: &[f64], n: usize| -> Result<Vec<f64>> {
            if v.len() + 1 != n && v.len() != n {
                return Err(Error::Dimension(format!("block of length {} for {n} outcomes", v.len())));
            }
            let mut out = v.to_vec();
            out.resize(n, 0.0);
            Ok(out)
        };
        let ma = marg_a.iter().map(|v| pad(v, n_a)).collect::<Result<Vec<_>>>()?;
        let mb = marg_b.iter().map(|v| pad(v, n_b)).collect::<Result<Vec<_>>>()?;
        let mut jt = Vec::with_capacity(joint.len());
        for per_b in joint {
            let mut row = Vec::with_capacity(per_b.len());
            for blk in per_b {
                let mut full = blk.iter().map(|r| pad(r, n_b)).collect::<Result<Vec<_>>>()?;
                if full.len() + 1 == n_a {
                    full.push(vec![0.0; n_b]);
                }
                row.push(full);
            }
            jt.push(row);
        }
        Self::new(name, scenario, b00, ma, mb, jt)
    }

    /// Two-outcome inequality from single numbers per block (the "+" outcome).
    pub fn two_outcome(name: &str, b00: f64, marg_a: &[f64], marg_b: &[f64], joint: &[&[f64]]) -> Result<Self> {
        let scenario = BellScenario::new(marg_a.len(), marg_b.len(), 2, 2)?;
        if joint.len() != marg_a.len() || joint.iter().any(|r| r.len() != marg_b.len()) {
            return Err(Error::Dimension("joint table shape".into()));
        }
        let ma: Vec<Vec<f64>> = marg_a.iter().map(|&x| vec![x]).collect();
        let mb: Vec<Vec<f64>> = marg_b.iter().map(|&x| vec![x]).collect();
        let jt: Vec<Vec<Vec<Vec<f64>>>> =
            joint.iter().map(|r| r.iter().map(|&x| vec![vec![x]]).collect()).collect();
        Self::from_reduced(name, scenario, b00, &ma, &mb, &jt)
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Left-hand side on a probability table.
    pub fn evaluate(&self, p: &ProbabilityTable) -> Result<f64> {
        if p.scenario != self.scenario {
            return Err(Error::Dimension(format!("table {:?} vs inequality {:?}", p.scenario, self.scenario)));
        }
        let mut v = self.b00;
        for (c, q) in self.marg_a.iter().flatten().zip(p.marg_a.iter().flatten()) {
            v += c * q;
        }
        for (c, q) in self.marg_b.iter().flatten().zip(p.marg_b.iter().flatten()) {
            v += c * q;
        }
        for (c, q) in self.joint.iter().flatten().flatten().flatten().zip(p.joint.iter().flatten().flatten().flatten()) {
            v += c * q;
        }
        Ok(v)
    }

    /// Left-hand side for a deterministic strategy.
    pub fn evaluate_strategy(&self, s: &DeterministicStrategy) -> f64 {
        let mut v = self.b00;
        for (sa, &oa) in s.a.iter().enumerate() {
            v += self.marg_a[sa][oa];
        }
        for (sb, &ob) in s.b.iter().enumerate() {
            v += self.marg_b[sb][ob];
            for (sa, &oa) in s.a.iter().enumerate() {
                v += self.joint[sa][sb][oa][ob];
            }
        }
        v
    }

    /// Maximum over deterministic strategies, cached after the first call.
    pub fn classical_bound(&self) -> Result<f64> {
        if let Some(b) = self.bound.get() {
            return Ok(*b);
        }
        let (v, _) = classical_optimum(self)?;
        Ok(*self.bound.get_or_init(|| v))
    }

    /// Alice ↔ Bob.
    pub fn swap_parties(&self) -> Self {
        let s = self.scenario;
        let mut out = Self::zeros(&self.name, s.swapped());
        out.b00 = self.b00;
        out.marg_a = self.marg_b.clone();
        out.marg_b = self.marg_a.clone();
        for sa in 0..s.m_a {
            for sb in 0..s.m_b {
                for oa in 0..s.n_a {
                    for ob in 0..s.n_b {
                        out.joint[sb][sa][ob][oa] = self.joint[sa][sb][oa][ob];
                    }
                }
            }
        }
        out
    }

    /// `self + k · other` on identical scenarios.
    pub fn add_scaled(&self, k: f64, other: &Self) -> Result<Self> {
        if self.scenario != other.scenario {
            return Err(Error::Dimension("scenarios differ".into()));
        }
        let mut out = self.clone();
        out.bound = OnceLock::new();
        out.b00 += k * other.b00;
        for (x, y) in out.marg_a.iter_mut().flatten().zip(other.marg_a.iter().flatten()) {
            *x += k * y;
        }
        for (x, y) in out.marg_b.iter_mut().flatten().zip(other.marg_b.iter().flatten()) {
            *x += k * y;
        }
        for (x, y) in out.joint.iter_mut().flatten().flatten().flatten().zip(other.joint.iter().flatten().flatten().flatten()) {
            *x += k * y;
        }
        Ok(out)
    }

    /// All coefficients multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self::zeros(&self.name, self.scenario).add_scaled(k, self).expect("same scenario")
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.scenario != other.scenario {
            return f64::INFINITY;
        }
        self.add_scaled(-1.0, other)
            .map(|d| {
                std::iter::once(d.b00)
                    .chain(d.marg_a.into_iter().flatten())
                    .chain(d.marg_b.into_iter().flatten())
                    .chain(d.joint.into_iter().flatten().flatten().flatten())
                    .fold(0.0, |m: f64, x| m.max(x.abs()))
            })
            .unwrap_or(f64::INFINITY)
    }

    /// Coefficient matrix in the compact display layout: first row holds
    /// `b00` and Bob's marginals, first column Alice's marginals. With
    /// `reduced`, the last outcome of every setting is dropped.
    pub fn to_matrix(&self, reduced: bool) -> Vec<Vec<f64>> {
        let s = self.scenario;
        let ka = if reduced { s.n_a - 1 } else { s.n_a };
        let kb = if reduced { s.n_b - 1 } else { s.n_b };
        let mut rows = Vec::with_capacity(1 + s.m_a * ka);
        let mut top = vec![self.b00];
        for sb in 0..s.m_b {
            top.extend_from_slice(&self.marg_b[sb][..kb]);
        }
        rows.push(top);
        for sa in 0..s.m_a {
            for oa in 0..ka {
                let mut r = vec![self.marg_a[sa][oa]];
                for sb in 0..s.m_b {
                    r.extend_from_slice(&self.joint[sa][sb][oa][..kb]);
                }
                rows.push(r);
            }
        }
        rows
    }

    pub fn to_file(&self) -> InequalityFile {
        let s = self.scenario;
        let joint = (0..s.m_a)
            .map(|sa| {
                (0..s.n_a)
                    .map(|oa| (0..s.m_b).flat_map(|sb| self.joint[sa][sb][oa].iter().copied()).collect())
                    .collect()
            })
            .collect();
        InequalityFile {
            name: Some(self.name.clone()),
            m_a: s.m_a,
            m_b: s.m_b,
            n_a: s.n_a,
            n_b: s.n_b,
            b00: self.b00,
            marg_a: self.marg_a.clone(),
            marg_b: self.marg_b.clone(),
            joint,
        }
    }
}

/// JSON layout of a [`MeasurementAssignment`]: every POVM element as
/// row-major `[re, im]` entries, indexed `alice[sa][oa]`, `bob[sb][ob]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFile {
    pub d_a: usize,
    pub d_b: usize,
    pub alice: Vec<Vec<Vec<[f64; 2]>>>,
    pub bob: Vec<Vec<Vec<[f64; 2]>>>,
}

impl MeasurementFile {
    pub fn from_assignment(meas: &MeasurementAssignment) -> Self {
        let flatten = |party: &[Vec<Hermitian>]| -> Vec<Vec<Vec<[f64; 2]>>> {
            party
                .iter()
                .map(|povm| {
                    povm.iter()
                        .map(|e| {
                            let m = e.matrix();
                            let n = m.nrows();
                            (0..n * n).map(|k| [m[(k / n, k % n)].re, m[(k / n, k % n)].im]).collect()
                        })
                        .collect()
                })
                .collect()
        };
        let (d_a, d_b) = meas.dims();
        Self { d_a, d_b, alice: flatten(&meas.alice), bob: flatten(&meas.bob) }
    }

    /// Re-validates every POVM.
    pub fn to_assignment(&self) -> Result<MeasurementAssignment> {
        let build = |party: &[Vec<Vec<[f64; 2]>>], d: usize| -> Result<Vec<Vec<Hermitian>>> {
            party
                .iter()
                .map(|povm| {
                    povm.iter()
                        .map(|e| {
                            if e.len() != d * d {
                                return Err(Error::Dimension(format!("POVM element with {} entries, expected {}", e.len(), d * d)));
                            }
                            Hermitian::new(CMatrix::from_fn(d, d, |i, j| c(e[i * d + j][0], e[i * d + j][1])))
                        })
                        .collect()
                })
                .collect()
        };
        MeasurementAssignment::new(build(&self.alice, self.d_a)?, build(&self.bob, self.d_b)?)
    }
}

/// JSON layout of a probability inequality.
///
/// `joint[sa][oa]` is one row of the coefficient matrix: Bob's settings in
/// order, each contributing `n_b` entries. Rows and marginal vectors may omit
/// the last outcome, in which case it is taken to be zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub m_a: usize,
    pub m_b: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub b00: f64,
    pub marg_a: Vec<Vec<f64>>,
    pub marg_b: Vec<Vec<f64>>,
    pub joint: Vec<Vec<Vec<f64>>>,
}

impl InequalityFile {
    pub fn to_inequality(&self) -> Result<BellInequality> {
        let scenario = BellScenario::new(self.m_a, self.m_b, self.n_a, self.n_b)?;
        if self.joint.len() != self.m_a {
            return Err(Error::Dimension(format!("joint has {} Alice settings", self.joint.len())));
        }
        let row_len = self.joint.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let kb = if row_len == self.m_b * self.n_b {
            self.n_b
        } else if self.n_b > 1 && row_len == self.m_b * (self.n_b - 1) {
            self.n_b - 1
        } else {
            return Err(Error::Dimension(format!("joint rows have length {row_len}")));
        };
        let mut joint = Vec::with_capacity(self.m_a);
        for rows in &self.joint {
            if rows.iter().any(|r| r.len() != row_len) {
                return Err(Error::Dimension("ragged joint rows".into()));
            }
            joint.push(
                (0..self.m_b)
                    .map(|sb| rows.iter().map(|r| r[sb * kb..(sb + 1) * kb].to_vec()).collect())
                    .collect(),
            );
        }
        BellInequality::from_reduced(
            self.name.as_deref().unwrap_or("custom"),
            scenario,
            self.b00,
            &self.marg_a,
            &self.marg_b,
            &joint,
        )
    }
}

/// Maximum of the left-hand side over deterministic strategies together with
/// a maximizing strategy (the first one found in lexicographic order).
///
/// The party with fewer strategies is enumerated; the other party's best
/// response is chosen setting by setting.
pub fn classical_optimum(ineq: &BellInequality) -> Result<(f64, DeterministicStrategy)> {
    let s = ineq.scenario;
    let count = s.strategy_count();
    if count > MAX_STRATEGIES {
        return Err(Error::TooLarge(count, MAX_STRATEGIES));
    }
    let alice_count = (s.n_a as f64).powi(s.m_a as i32);
    let bob_count = (s.n_b as f64).powi(s.m_b as i32);
    if bob_count < alice_count {
        let (v, st) = enumerate_alice(&ineq.swap_parties());
        return Ok((v, DeterministicStrategy { a: st.b, b: st.a }));
    }
    Ok(enumerate_alice(ineq))
}

pub fn classical_bound(ineq: &BellInequality) -> Result<f64> {
    ineq.classical_bound()
}

fn decode(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

fn enumerate_alice(ineq: &BellInequality) -> (f64, DeterministicStrategy) {
    let s = ineq.scenario;
    let total = s.n_a.pow(s.m_a as u32);
    let best_for = |idx: usize| -> (f64, usize, Vec<usize>) {
        let a = decode(idx, s.n_a, s.m_a);
        let mut v = ineq.b00;
        for (sa, &oa) in a.iter().enumerate() {
            v += ineq.marg_a[sa][oa];
        }
        let mut b = Vec::with_capacity(s.m_b);
        for sb in 0..s.m_b {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for ob in 0..s.n_b {
                let mut w = ineq.marg_b[sb][ob];
                for (sa, &oa) in a.iter().enumerate() {
                    w += ineq.joint[sa][sb][oa][ob];
                }
                if w > best {
                    best = w;
                    arg = ob;
                }
            }
            v += best;
            b.push(arg);
        }
        (v, idx, b)
    };
    let pick = |x: (f64, usize, Vec<usize>), y: (f64, usize, Vec<usize>)| {
        if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
            y
        } else {
            x
        }
    };
    let init = || (f64::NEG_INFINITY, usize::MAX, Vec::new());
    let (v, idx, b) = if total >= 4096 {
        (0..total).into_par_iter().map(best_for).reduce(init, pick)
    } else {
        (0..total).map(best_for).fold(init(), pick)
    };
    (v, DeterministicStrategy { a: decode(idx, s.n_a, s.m_a), b })
}

/// A relabeling of parties, settings or outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Relabeling {
    SwapParties,
    /// New setting `k` is old setting `perm[k]`.
    PermuteSettings { party: Party, perm: Vec<usize> },
    /// New outcome `k` of `setting` is old outcome `perm[k]`.
    PermuteOutcomes { party: Party, setting: usize, perm: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Alice,
    Bob,
}

fn check_perm(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Invalid(format!("permutation of length {} for {n} labels", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Invalid(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

impl Relabeling {
    pub fn inverse(&self) -> Self {
        match self {
            Relabeling::SwapParties => Relabeling::SwapParties,
            Relabeling::PermuteSettings { party, perm } => {
                Relabeling::PermuteSettings { party: *party, perm: invert(perm) }
            }
            Relabeling::PermuteOutcomes { party, setting, perm } => {
                Relabeling::PermuteOutcomes { party: *party, setting: *setting, perm: invert(perm) }
            }
        }
    }
}

/// Applies a relabeling to the coefficients.
pub fn relabel(ineq: &BellInequality, r: &Relabeling) -> Result<BellInequality> {
    let s = ineq.scenario;
    match r {
        Relabeling::SwapParties => Ok(ineq.swap_parties()),
        Relabeling::PermuteSettings { party: Party::Alice, perm } => {
            check_perm(perm, s.m_a)?;
            let mut out = ineq.clone();
            out.bound = OnceLock::new();
            for (k, &p) in perm.iter().enumerate() {
                out.marg_a[k] = ineq.marg_a[p].clone();
                out.joint[k] = ineq.joint[p].clone();
            }
            Ok(out)
        }
        Relabeling::PermuteSettings { party: Party::Bob, perm } => {
            let t = relabel(&ineq.swap_parties(), &Relabeling::PermuteSettings { party: Party::Alice, perm: perm.clone() })?;
            Ok(t.swap_parties())
        }
        Relabeling::PermuteOutcomes { party: Party::Alice, setting, perm } => {
            if *setting >= s.m_a {
                return Err(Error::Range(format!("Alice setting {setting} of {}", s.m_a)));
            }
            check_perm(perm, s.n_a)?;
            let mut out = ineq.clone();
            out.bound = OnceLock::new();
            for (k, &p) in perm.iter().enumerate() {
                out.marg_a[*setting][k] = ineq.marg_a[*setting][p];
                for sb in 0..s.m_b {
                    out.joint[*setting][sb][k] = ineq.joint[*setting][sb][p].clone();
                }
            }
            Ok(out)
        }
        Relabeling::PermuteOutcomes { party: Party::Bob, setting, perm } => {
            let t = relabel(
                &ineq.swap_parties(),
                &Relabeling::PermuteOutcomes { party: Party::Alice, setting: *setting, perm: perm.clone() },
            )?;
            Ok(t.swap_parties())
        }
    }
}

/// Bell operator `Σ b A⊗B` with identity padding for marginal and constant terms.
pub fn bell_operator(ineq: &BellInequality, meas: &MeasurementAssignment) -> Result<Hermitian> {
    if meas.scenario() != ineq.scenario {
        return Err(Error::Dimension(format!(
            "measurements for {:?}, inequality for {:?}",
            meas.scenario(),
            ineq.scenario
        )));
    }
    let (da, db) = meas.dims();
    let s = ineq.scenario;
    let ia = identity(da);
    let ib = identity(db);
    let mut a_marg = CMatrix::zeros(da, da);
    for sa in 0..s.m_a {
        for oa in 0..s.n_a {
            a_marg += meas.alice[sa][oa].matrix() * c(ineq.marg_a[sa][oa], 0.0);
        }
    }
    let mut b_marg = CMatrix::zeros(db, db);
    for sb in 0..s.m_b {
        for ob in 0..s.n_b {
            b_marg += meas.bob[sb][ob].matrix() * c(ineq.marg_b[sb][ob], 0.0);
        }
    }
    let mut total = identity(da * db) * c(ineq.b00, 0.0) + kron(&a_marg, &ib) + kron(&ia, &b_marg);
    for sa in 0..s.m_a {
        for oa in 0..s.n_a {
            let mut bob_side = CMatrix::zeros(db, db);
            for sb in 0..s.m_b {
                for ob in 0..s.n_b {
                    let w = ineq.joint[sa][sb][oa][ob];
                    if w != 0.0 {
                        bob_side += meas.bob[sb][ob].matrix() * c(w, 0.0);
                    }
                }
            }
            total += kron(meas.alice[sa][oa].matrix(), &bob_side);
        }
    }
    Ok(Hermitian::from_part(&total))
}

/// A two-party inequality in full correlation functions plus optional
/// single-party terms: `Σ b_ij E(A_i,B_j) + Σ a_i E(A_i) + Σ c_j E(B_j) ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationInequality {
    pub name: String,
    /// `b[sa][sb]`.
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub marg_a: Vec<f64>,
    #[serde(default)]
    pub marg_b: Vec<f64>,
    pub bound: f64,
}

impl CorrelationInequality {
    /// Validates the shape and computes the bound by enumeration.
    pub fn new(name: &str, b: Vec<Vec<f64>>, marg_a: Vec<f64>, marg_b: Vec<f64>) -> Result<Self> {
        let m_a = b.len();
        let m_b = b.first().map_or(0, Vec::len);
        if m_a == 0 || m_b == 0 || b.iter().any(|r| r.len() != m_b) {
            return Err(Error::Dimension("correlation matrix must be a non-empty rectangle".into()));
        }
        let marg_a = if marg_a.is_empty() { vec![0.0; m_a] } else { marg_a };
        let marg_b = if marg_b.is_empty() { vec![0.0; m_b] } else { marg_b };
        if marg_a.len() != m_a || marg_b.len() != m_b {
            return Err(Error::Dimension("marginal vector length".into()));
        }
        let mut out = Self { name: name.to_string(), b, marg_a, marg_b, bound: 0.0 };
        out.bound = out.classical_optimum()?.0;
        Ok(out)
    }

    pub fn m_a(&self) -> usize {
        self.b.len()
    }

    pub fn m_b(&self) -> usize {
        self.b[0].len()
    }

    /// Value for local deterministic outcomes `±1`.
    pub fn evaluate_signs(&self, a: &[f64], bs: &[f64]) -> f64 {
        let mut v = 0.0;
        for (i, ai) in a.iter().enumerate() {
            v += self.marg_a[i] * ai;
            for (j, bj) in bs.iter().enumerate() {
                v += self.b[i][j] * ai * bj;
            }
        }
        v + bs.iter().zip(&self.marg_b).map(|(x, y)| x * y).sum::<f64>()
    }

    /// Maximum over `±1` strategies with the signs that attain it.
    pub fn classical_optimum(&self) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (m_a, m_b) = (self.m_a(), self.m_b());
        let count = 2f64.powi((m_a + m_b) as i32);
        if count > MAX_STRATEGIES {
            return Err(Error::TooLarge(count, MAX_STRATEGIES));
        }
        let mut best = (f64::NEG_INFINITY, Vec::new(), Vec::new());
        for mask in 0..(1usize << m_a) {
            let a: Vec<f64> = (0..m_a).map(|i| if mask >> (m_a - 1 - i) & 1 == 0 { 1.0 } else { -1.0 }).collect();
            let mut v: f64 = a.iter().zip(&self.marg_a).map(|(x, y)| x * y).sum();
            let mut bs = Vec::with_capacity(m_b);
            for j in 0..m_b {
                let w: f64 = self.marg_b[j] + (0..m_a).map(|i| self.b[i][j] * a[i]).sum::<f64>();
                bs.push(if w >= 0.0 { 1.0 } else { -1.0 });
                v += w.abs();
            }
            if v > best.0 {
                best = (v, a, bs);
            }
        }
        Ok(best)
    }

    /// Value from ±1-valued two-outcome probabilities, outcome 0 being `+1`.
    pub fn evaluate_probabilities(&self, p: &ProbabilityTable) -> Result<f64> {
        let s = p.scenario;
        if s.n_a != 2 || s.n_b != 2 || s.m_a != self.m_a() || s.m_b != self.m_b() {
            return Err(Error::Dimension("correlation inequalities need matching two-outcome tables".into()));
        }
        let mut v = 0.0;
        for i in 0..s.m_a {
            v += self.marg_a[i] * (p.marg_a[i][0] - p.marg_a[i][1]);
            for j in 0..s.m_b {
                let t = &p.joint[i][j];
                v += self.b[i][j] * (t[0][0] + t[1][1] - t[0][1] - t[1][0]);
            }
        }
        for j in 0..s.m_b {
            v += self.marg_b[j] * (p.marg_b[j][0] - p.marg_b[j][1]);
        }
        Ok(v)
    }

    /// Equivalent probability inequality via `E(A,B) = 1 - 2p_A - 2p_B + 4p_AB`
    /// and `E(A) = 2p_A - 1`, written in the "+" outcome, with the bound moved
    /// to the left: the result has classical bound 0.
    pub fn to_probability(&self) -> Result<BellInequality> {
        let (m_a, m_b) = (self.m_a(), self.m_b());
        let mut b00 = -self.bound;
        let mut ma = vec![0.0; m_a];
        let mut mb = vec![0.0; m_b];
        let mut jt = vec![vec![0.0; m_b]; m_a];
        for i in 0..m_a {
            b00 -= self.marg_a[i];
            ma[i] += 2.0 * self.marg_a[i];
            for j in 0..m_b {
                let w = self.b[i][j];
                b00 += w;
                ma[i] -= 2.0 * w;
                mb[j] -= 2.0 * w;
                jt[i][j] = 4.0 * w;
            }
        }
        for j in 0..m_b {
            b00 -= self.marg_b[j];
            mb[j] += 2.0 * self.marg_b[j];
        }
        let rows: Vec<&[f64]> = jt.iter().map(Vec::as_slice).collect();
        BellInequality::two_outcome(&self.name, b00, &ma, &mb, &rows)
    }
}

/// Correlation operator `Σ b_ij O_i⊗O_j + Σ a_i O_i⊗I + Σ c_j I⊗O_j`.
pub fn correlation_operator(ineq: &CorrelationInequality, alice: &[Hermitian], bob: &[Hermitian]) -> Result<Hermitian> {
    if alice.len() != ineq.m_a() || bob.len() != ineq.m_b() {
        return Err(Error::Dimension(format!(
            "{}x{} observables for a {}x{} inequality",
            alice.len(),
            bob.len(),
            ineq.m_a(),
            ineq.m_b()
        )));
    }
    let da = alice[0].dim();
    let db = bob[0].dim();
    for o in alice.iter().chain(bob) {
        let d = o.dim();
        let sq = o.matrix() * o.matrix() - identity(d);
        if sq.iter().any(|z| z.norm() > TOL.povm) {
            return Err(Error::Invalid("observable does not square to the identity".into()));
        }
    }
    let mut total = CMatrix::zeros(da * db, da * db);
    for (i, a) in alice.iter().enumerate() {
        let mut side = identity(db) * c(ineq.marg_a[i], 0.0);
        for (j, b) in bob.iter().enumerate() {
            side += b.matrix() * c(ineq.b[i][j], 0.0);
        }
        total += kron(a.matrix(), &side);
    }
    let mut bm = CMatrix::zeros(db, db);
    for (j, b) in bob.iter().enumerate() {
        bm += b.matrix() * c(ineq.marg_b[j], 0.0);
    }
    total += kron(&identity(da), &bm);
    Ok(Hermitian::from_part(&total))
}

/// An n-party full-correlation inequality with two settings per party:
/// `Σ_s b_s E(o^1_{s_1} ... o^n_{s_n}) ≤ bound`. Index bit `n-1-j` of `s`
/// is the setting of party `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipartiteCorrelation {
    pub name: String,
    pub parties: usize,
    pub coefficients: Vec<f64>,
    pub bound: f64,
}

impl MultipartiteCorrelation {
    pub fn new(name: &str, parties: usize, coefficients: Vec<f64>) -> Result<Self> {
        if parties == 0 || parties > 12 || coefficients.len() != 1 << parties {
            return Err(Error::Dimension(format!("{} coefficients for {parties} parties", coefficients.len())));
        }
        let mut out = Self { name: name.to_string(), parties, coefficients, bound: 0.0 };
        out.bound = out.classical_bound();
        Ok(out)
    }

    pub fn setting(&self, s: usize, party: usize) -> usize {
        (s >> (self.parties - 1 - party)) & 1
    }

    /// Value for outcomes `o[party][setting] = ±1`.
    pub fn evaluate_signs(&self, o: &[[f64; 2]]) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(s, b)| b * (0..self.parties).map(|j| o[j][self.setting(s, j)]).product::<f64>())
            .sum()
    }

    /// Maximum over all `2^(2n)` deterministic assignments.
    pub fn classical_bound(&self) -> f64 {
        let n = self.parties;
        (0..1usize << (2 * n))
            .map(|mask| {
                let o: Vec<[f64; 2]> = (0..n)
                    .map(|j| {
                        let sign = |bit: usize| if mask >> bit & 1 == 0 { 1.0 } else { -1.0 };
                        [sign(2 * j), sign(2 * j + 1)]
                    })
                    .collect();
                self.evaluate_signs(&o)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ_s b_s ⊗_j O_{j,s_j}` for per-party observable pairs.
    pub fn operator(&self, observables: &[[Hermitian; 2]]) -> Result<Hermitian> {
        if observables.len() != self.parties {
            return Err(Error::Dimension(format!("{} observable pairs for {} parties", observables.len(), self.parties)));
        }
        let dims: Vec<usize> = observables.iter().map(|p| p[0].dim()).collect();
        let total_dim: usize = dims.iter().product();
        let mut total = CMatrix::zeros(total_dim, total_dim);
        for (s, &b) in self.coefficients.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let mut term = CMatrix::identity(1, 1);
            for (j, pair) in observables.iter().enumerate() {
                term = kron(&term, pair[self.setting(s, j)].matrix());
            }
            total += term * c(b, 0.0);
        }
        Ok(Hermitian::from_part(&total))
    }
}

/// CH: `p(A1B1) + p(A1B2) + p(A2B1) - p(A2B2) - p_A(A1) - p_B(B1) ≤ 0`.
pub fn ch() -> BellInequality {
    BellInequality::two_outcome("ch", 0.0, &[-1.0, 0.0], &[-1.0, 0.0], &[&[1.0, 1.0], &[1.0, -1.0]]).expect("static")
}

/// CHSH: `E11 + E12 + E21 - E22 ≤ 2`.
pub fn chsh() -> CorrelationInequality {
    CorrelationInequality::new("chsh", vec![vec![1.0, 1.0], vec![1.0, -1.0]], vec![], vec![]).expect("static")
}

pub fn i3322() -> BellInequality {
    BellInequality::two_outcome(
        "i3322",
        0.0,
        &[-1.0, 0.0, 0.0],
        &[-2.0, -1.0, 0.0],
        &[&[1.0, 1.0, 1.0], &[1.0, 1.0, -1.0], &[1.0, -1.0, 0.0]],
    )
    .expect("static")
}

/// The four printed `(4,4;2,2)` inequalities; `k = 4` is the one labelled A5.
pub fn i4422(k: usize) -> Result<BellInequality> {
    let (name, ma, mb, jt): (&str, [f64; 4], [f64; 4], [[f64; 4]; 4]) = match k {
        1 => (
            "i4422_1",
            [-1.0, 0.0, -1.0, -1.0],
            [0.0, -1.0, -1.0, -1.0],
            [[-1.0, 1.0, 0.0, 2.0], [0.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, 1.0], [-1.0, 1.0, 2.0, -1.0]],
        ),
        2 => (
            "i4422_2",
            [0.0, -1.0, -1.0, 0.0],
            [0.0, 0.0, -1.0, -1.0],
            [[1.0, 1.0, 1.0, 0.0], [1.0, -1.0, 0.0, 1.0], [-1.0, 1.0, 1.0, 1.0], [0.0, -1.0, 1.0, 0.0]],
        ),
        3 => (
            "i4422_3",
            [-1.0, 0.0, 0.0, 0.0],
            [-3.0, -2.0, -1.0, 0.0],
            [[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, -1.0], [1.0, 1.0, -1.0, 0.0], [1.0, -1.0, 0.0, 0.0]],
        ),
        4 => (
            "i4422_4",
            [-2.0, -1.0, -1.0, 0.0],
            [0.0, -1.0, -1.0, -1.0],
            [[-1.0, 1.0, 0.0, 2.0], [0.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, 1.0], [-1.0, 1.0, 2.0, -1.0]],
        ),
        _ => return Err(Error::Range(format!("i4422 variant {k} (expected 1..=4)"))),
    };
    let rows: Vec<&[f64]> = jt.iter().map(|r| r.as_slice()).collect();
    BellInequality::two_outcome(name, 0.0, &ma, &mb, &rows)
}

/// The `I_mm22` family; `m = 2` is CH and `m = 3` is the transpose of I3322.
pub fn imm22(m: usize) -> Result<BellInequality> {
    if m < 2 {
        return Err(Error::Range(format!("imm22 needs m ≥ 2, got {m}")));
    }
    let ma: Vec<f64> = (0..m).map(|i| -((m - 1 - i) as f64)).collect();
    let mut mb = vec![0.0; m];
    mb[0] = -1.0;
    let jt: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == 0 || j < m - i {
                        1.0
                    } else if j == m - i {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let rows: Vec<&[f64]> = jt.iter().map(Vec::as_slice).collect();
    BellInequality::two_outcome(&format!("imm22({m})"), 0.0, &ma, &mb, &rows)
}

/// The `I_22nn` family for `n ≥ 2` outcomes.
pub fn i22nn(n: usize) -> Result<BellInequality> {
    if n < 2 {
        return Err(Error::Range(format!("i22nn needs n ≥ 2, got {n}")));
    }
    let scenario = BellScenario::new(2, 2, n, n)?;
    let mut b = BellInequality::zeros(&format!("i22nn({n})"), scenario);
    for o in 0..n - 1 {
        b.marg_a[0][o] = -1.0;
        b.marg_b[0][o] = -1.0;
    }
    // 1-based: b11 for ob ≤ n-oa, the other blocks for n-oa ≤ ob ≤ n-1.
    for oa in 1..n {
        for ob in 1..n {
            if ob <= n - oa {
                b.joint[0][0][oa - 1][ob - 1] = 1.0;
            }
            if ob >= n - oa {
                b.joint[0][1][oa - 1][ob - 1] = 1.0;
                b.joint[1][0][oa - 1][ob - 1] = 1.0;
                b.joint[1][1][oa - 1][ob - 1] = -1.0;
            }
        }
    }
    Ok(b)
}

/// CGLMP with `n` outcomes in the grouped form, bound 2. `shifted` moves the
/// constant to the left (`b00 = -2`, bound 0).
pub fn cglmp_with(n: usize, shifted: bool) -> Result<BellInequality> {
    let mut b = cglmp_integer(n, shifted)?;
    let k = n as f64 - 1.0;
    b = b.scaled(1.0 / k);
    Ok(b)
}

/// `(n-1)` times CGLMP, which has integer coefficients.
fn cglmp_integer(n: usize, shifted: bool) -> Result<BellInequality> {
    if n < 2 {
        return Err(Error::Range(format!("cglmp needs n ≥ 2, got {n}")));
    }
    let scenario = BellScenario::new(2, 2, n, n)?;
    let mut b = BellInequality::zeros(&format!("cglmp({n})"), scenario);
    if shifted {
        b.b00 = -2.0 * (n as f64 - 1.0);
    }
    let md = |x: isize| x.rem_euclid(n as isize) as usize;
    for k in 0..n / 2 {
        let w = (n - 1 - 2 * k) as f64;
        let k = k as isize;
        for ob in 0..n {
            let o = ob as isize;
            b.joint[0][0][md(o - k)][ob] += w;
            b.joint[0][0][md(o + k + 1)][ob] -= w;
            b.joint[0][1][md(o + k)][ob] += w;
            b.joint[0][1][md(o - k - 1)][ob] -= w;
            b.joint[1][0][md(o + k)][ob] += w;
            b.joint[1][0][md(o - k - 1)][ob] -= w;
            b.joint[1][1][md(o - k - 1)][ob] += w;
            b.joint[1][1][md(o + k)][ob] -= w;
        }
    }
    Ok(b)
}

pub fn cglmp(n: usize) -> Result<BellInequality> {
    cglmp_with(n, false)
}

/// Correlation form of I3322 with single-party terms, bound 4.
pub fn i3322_corr() -> CorrelationInequality {
    CorrelationInequality::new(
        "i3322_corr",
        vec![vec![1.0, 1.0, 1.0], vec![1.0, 1.0, -1.0], vec![1.0, -1.0, 0.0]],
        vec![-1.0, -1.0, 0.0],
        vec![1.0, 1.0, 0.0],
    )
    .expect("static")
}

pub fn as4() -> CorrelationInequality {
    CorrelationInequality::new(
        "as4",
        vec![
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0, -1.0],
            vec![1.0, 1.0, -2.0, 0.0],
            vec![1.0, -1.0, 0.0, 0.0],
        ],
        vec![],
        vec![],
    )
    .expect("static")
}

pub fn d4() -> CorrelationInequality {
    CorrelationInequality::new(
        "d4",
        vec![
            vec![2.0, 1.0, 1.0, 2.0],
            vec![1.0, 1.0, 2.0, -2.0],
            vec![1.0, 2.0, -2.0, -1.0],
            vec![2.0, -2.0, -1.0, -1.0],
        ],
        vec![],
        vec![],
    )
    .expect("static")
}

/// Mermin inequality from `F_n = ½(o^n_1 + o^n_2) F_{n-1} + ½(o^n_1 - o^n_2) F'_{n-1}`
/// with `F_1 = o^1_1`, where `F'` exchanges the two settings of every party.
pub fn mermin(n: usize) -> Result<MultipartiteCorrelation> {
    if !(2..=10).contains(&n) {
        return Err(Error::Range(format!("mermin needs 2 ≤ n ≤ 10, got {n}")));
    }
    let mut f = vec![1.0, 0.0];
    for k in 2..=n {
        let len = f.len();
        let flipped: Vec<f64> = (0..len).map(|s| f[s ^ (len - 1)]).collect();
        let mut next = vec![0.0; 2 * len];
        for s in 0..len {
            next[2 * s] = 0.5 * (f[s] + flipped[s]);
            next[2 * s + 1] = 0.5 * (f[s] - flipped[s]);
        }
        f = next;
        debug_assert_eq!(f.len(), 1 << k);
    }
    MultipartiteCorrelation::new(&format!("mermin({n})"), n, f)
}

/// Any of the named inequality kinds.
#[derive(Debug, Clone)]
pub enum AnyInequality {
    Probability(BellInequality),
    Correlation(CorrelationInequality),
    Multipartite(MultipartiteCorrelation),
}

impl AnyInequality {
    pub fn name(&self) -> &str {
        match self {
            AnyInequality::Probability(b) => &b.name,
            AnyInequality::Correlation(b) => &b.name,
            AnyInequality::Multipartite(b) => &b.name,
        }
    }

    pub fn classical_bound(&self) -> Result<f64> {
        match self {
            AnyInequality::Probability(b) => b.classical_bound(),
            AnyInequality::Correlation(b) => Ok(b.bound),
            AnyInequality::Multipartite(b) => Ok(b.bound),
        }
    }
}

/// Builds a named inequality from a tag such as `chsh`, `i4422_2`,
/// `imm22(5)` or `cglmp(3)`.
pub fn named(tag: &str) -> Result<AnyInequality> {
    let tag = tag.trim().to_ascii_lowercase();
    let (head, arg) = match tag.find('(') {
        Some(i) if tag.ends_with(')') => {
            let a = tag[i + 1..tag.len() - 1]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Invalid(format!("bad argument in {tag}")))?;
            (&tag[..i], Some(a))
        }
        _ => (tag.as_str(), None),
    };
    let need = |a: Option<usize>| a.ok_or_else(|| Error::Invalid(format!("{head} needs an argument, e.g. {head}(3)")));
    use AnyInequality::*;
    Ok(match head {
        "ch" => Probability(ch()),
        "chsh" => Correlation(chsh()),
        "i3322" => Probability(i3322()),
        "i4422_1" => Probability(i4422(1)?),
        "i4422_2" => Probability(i4422(2)?),
        "i4422" | "i4422_3" => Probability(i4422(3)?),
        "i4422_4" | "a5" => Probability(i4422(4)?),
        "imm22" => Probability(imm22(need(arg)?)?),
        "i22nn" => Probability(i22nn(need(arg)?)?),
        "cglmp" => Probability(cglmp(need(arg)?)?),
        "i3322_corr" => Correlation(i3322_corr()),
        "as4" => Correlation(as4()),
        "d4" => Correlation(d4()),
        "mermin" => Multipartite(mermin(need(arg)?)?),
        _ => return Err(Error::Invalid(format!("unknown inequality {tag}"))),
    })
}

/// One coefficient move used to rewrite CGLMP as `I_22nn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientMove {
    /// Rewrite `p(oa=outcome, ob|sa,sb)` as `p_B(ob|sb) - Σ_{oa≠outcome} p(oa,ob|sa,sb)`.
    EliminateAliceOutcome { outcome: usize },
    /// Same on Bob's side, feeding Alice's marginals.
    EliminateBobOutcome { outcome: usize },
    /// Rewrite `p_B(outcome|sb)` as `1 - Σ_{ob≠outcome} p_B(ob|sb)`.
    NormalizeBobMarginal { outcome: usize },
    /// New Bob outcome `k` is old outcome `perm[k]`, on every setting.
    PermuteBobOutcomes { perm: Vec<usize> },
}

/// Applies a move. The result equals the input on every no-signaling,
/// normalized probability table.
pub fn apply_move(ineq: &BellInequality, mv: &CoefficientMove) -> Result<BellInequality> {
    let s = ineq.scenario;
    let mut out = ineq.clone();
    out.bound = OnceLock::new();
    match mv {
        CoefficientMove::EliminateAliceOutcome { outcome } => {
            if *outcome >= s.n_a {
                return Err(Error::Range(format!("Alice outcome {outcome}")));
            }
            for sa in 0..s.m_a {
                for sb in 0..s.m_b {
                    for ob in 0..s.n_b {
                        let v = out.joint[sa][sb][*outcome][ob];
                        for oa in 0..s.n_a {
                            out.joint[sa][sb][oa][ob] -= v;
                        }
                        out.marg_b[sb][ob] += v;
                    }
                }
            }
        }
        CoefficientMove::EliminateBobOutcome { outcome } => {
            if *outcome >= s.n_b {
                return Err(Error::Range(format!("Bob outcome {outcome}")));
            }
            for sa in 0..s.m_a {
                for sb in 0..s.m_b {
                    for oa in 0..s.n_a {
                        let v = out.joint[sa][sb][oa][*outcome];
                        for ob in 0..s.n_b {
                            out.joint[sa][sb][oa][ob] -= v;
                        }
                        out.marg_a[sa][oa] += v;
                    }
                }
            }
        }
        CoefficientMove::NormalizeBobMarginal { outcome } => {
            if *outcome >= s.n_b {
                return Err(Error::Range(format!("Bob outcome {outcome}")));
            }
            for sb in 0..s.m_b {
                let v = out.marg_b[sb][*outcome];
                for x in out.marg_b[sb].iter_mut() {
                    *x -= v;
                }
                out.b00 += v;
            }
        }
        CoefficientMove::PermuteBobOutcomes { perm } => {
            for sb in 0..s.m_b {
                out = relabel(&out, &Relabeling::PermuteOutcomes { party: Party::Bob, setting: sb, perm: perm.clone() })?;
            }
        }
    }
    Ok(out)
}

/// Record of the CGLMP → `I_22nn` rewriting.
#[derive(Debug, Clone)]
pub struct CglmpConversion {
    pub n: usize,
    pub moves: Vec<CoefficientMove>,
    /// `b, b', b'', b''', b''''`, starting from CGLMP with the constant on the left.
    pub stages: Vec<BellInequality>,
    /// `2n/(n-1)`.
    pub scale: f64,
    /// Largest coefficient mismatch between the final stage and `scale · I_22nn`.
    pub residual: f64,
}

/// Rewrites CGLMP(n) into a multiple of `I_22nn(n)` by no-signaling,
/// normalization and a relabeling of Bob's outcomes.
pub fn cglmp_to_i22nn(n: usize) -> Result<CglmpConversion> {
    let last = n.checked_sub(1).filter(|_| n >= 2).ok_or_else(|| Error::Range(format!("n = {n}")))?;
    let perm = cglmp_bob_relabeling(n);
    let moves = vec![
        CoefficientMove::EliminateAliceOutcome { outcome: last },
        CoefficientMove::EliminateBobOutcome { outcome: last },
        CoefficientMove::NormalizeBobMarginal { outcome: last },
        CoefficientMove::PermuteBobOutcomes { perm },
    ];
    // Work on (n-1)·CGLMP so every intermediate coefficient is an integer
    // and the float arithmetic is exact.
    let k = (n - 1) as f64;
    let mut stages = vec![cglmp_integer(n, true)?];
    for mv in &moves {
        let next = apply_move(stages.last().expect("non-empty"), mv)?;
        stages.push(next);
    }
    let target = i22nn(n)?.scaled(2.0 * n as f64);
    let residual = stages.last().expect("non-empty").max_abs_diff(&target) / k;
    let stages = stages.into_iter().map(|b| b.scaled(1.0 / k)).collect();
    Ok(CglmpConversion { n, moves, stages, scale: 2.0 * n as f64 / k, residual })
}

/// Bob's outcome relabeling `ob ↔ n - ob` (1-based, `ob < n`) that maps the
/// eliminated CGLMP form onto `I_22nn`. It is an involution.
pub fn cglmp_bob_relabeling(n: usize) -> Vec<usize> {
    let last = n - 1;
    let mut perm: Vec<usize> = (0..last).map(|k| last - 1 - k).collect();
    perm.push(last);
    perm
}

/// `|tr(ρ B_CGLMP) - (2n/(n-1)) tr(ρ B'_I22nn) - 2|`, where `B'_I22nn` uses
/// the same POVMs with Bob's outcomes relabeled by [`cglmp_bob_relabeling`]
/// (the identity for `n = 2`).
pub fn operator_relation_residual(rho: &DensityMatrix, meas: &MeasurementAssignment) -> Result<f64> {
    let n = meas.scenario().n_a;
    let perm = cglmp_bob_relabeling(n);
    let relabeled = MeasurementAssignment {
        alice: meas.alice.clone(),
        bob: meas.bob.iter().map(|set| perm.iter().map(|&k| set[k].clone()).collect()).collect(),
    };
    let lhs = rho.expect(bell_operator(&cglmp(n)?, meas)?.matrix());
    let rhs = rho.expect(bell_operator(&i22nn(n)?, &relabeled)?.matrix());
    Ok((lhs - 2.0 * n as f64 / (n as f64 - 1.0) * rhs - 2.0).abs())
}
