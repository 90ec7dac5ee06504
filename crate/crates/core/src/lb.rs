//! Lower bounds on the maximal quantum value of a Bell inequality for a fixed
//! state, by alternating exact optimization over each party's measurements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_operator, classical_optimum, BellInequality, CorrelationInequality, MeasurementAssignment};
use crate::error::{Error, Result};
use crate::qcore::{
    c, haar_unitary, herm_eig, hermitian_basis, identity, pauli_x, pauli_y, pauli_z, positive_eigenspace_projector,
    singular_values_real, CMatrix, DensityMatrix, Hermitian, RMatrix,
};
use crate::sdp::{solve_standard, BlockTerm, SdpOptions, SdpStandard, SdpStatus};

/// How the first party's measurements are drawn at each restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InitMode {
    /// Random projective measurements mixed with 10% of the uniform POVM.
    GenericPovm,
    /// Random projective measurements; `ranks` fixes the projector ranks
    /// per outcome, otherwise they are drawn from random compositions of `d`.
    Projective { ranks: Option<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeesawConfig {
    pub convergence_tol: f64,
    pub max_sweeps: usize,
    pub restarts: usize,
    pub rng_seed: u64,
    pub init_mode: InitMode,
    /// Also run once from an optimal deterministic strategy (in addition to
    /// the random restarts).
    #[serde(default = "default_true")]
    pub classical_start: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SeesawConfig {
    fn default() -> Self {
        Self {
            convergence_tol: 1e-9,
            max_sweeps: 200,
            restarts: 20,
            rng_seed: 0,
            init_mode: InitMode::GenericPovm,
            classical_start: true,
        }
    }
}

impl SeesawConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Range(format!("convergence tolerance {} must be positive", self.convergence_tol)));
        }
        if self.restarts == 0 {
            return Err(Error::Range("at least one restart is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LbResult {
    pub value: f64,
    pub measurements: MeasurementAssignment,
    /// Sweeps used by the winning restart.
    pub sweeps: usize,
    /// One value per random restart, followed by the classical start if run.
    pub restart_values: Vec<f64>,
    /// Objective after every half-sweep of the winning restart.
    pub history: Vec<f64>,
    pub best_restart: usize,
}

/// `tr_A[ρ (X ⊗ I)]`.
fn partial_trace_a(rho: &CMatrix, x: &CMatrix, db: usize) -> CMatrix {
    let da = x.nrows();
    let mut out = CMatrix::zeros(db, db);
    for i in 0..da {
        for k in 0..da {
            let xki = x[(k, i)];
            if xki.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..db {
                for l in 0..db {
                    out[(j, l)] += rho[(i * db + j, k * db + l)] * xki;
                }
            }
        }
    }
    out
}

/// Effective operators seen by Bob for fixed Alice measurements: the Bell
/// value equals `constant + Σ tr(ρ_B[sb][ob] B_{sb}^{ob})`.
#[derive(Debug, Clone)]
pub struct ReducedOperators {
    /// `ops[sb][ob]`.
    pub ops: Vec<Vec<Hermitian>>,
    /// `b00 + Σ marg_a tr(ρ A⊗I)`.
    pub constant: f64,
}

impl ReducedOperators {
    pub fn value(&self, bob: &[Vec<Hermitian>]) -> f64 {
        let mut v = self.constant;
        for (ops, povm) in self.ops.iter().zip(bob) {
            for (o, e) in ops.iter().zip(povm) {
                v += crate::qcore::trace_product(o.matrix(), e.matrix()).re;
            }
        }
        v
    }
}

pub fn reduced_operators(rho: &DensityMatrix, ineq: &BellInequality, alice: &[Vec<Hermitian>]) -> Result<ReducedOperators> {
    let s = ineq.scenario;
    let (da, db) = rho.split();
    if alice.len() != s.m_a || alice.iter().any(|p| p.len() != s.n_a || p.iter().any(|e| e.dim() != da)) {
        return Err(Error::Dimension("Alice measurements do not match the inequality and state".into()));
    }
    let m = rho.matrix();
    let rho_b = partial_trace_a(m, &identity(da), db);
    let mut constant = ineq.b00;
    for sa in 0..s.m_a {
        for oa in 0..s.n_a {
            let w = ineq.marg_a[sa][oa];
            if w != 0.0 {
                constant += w * rho.expect(&crate::qcore::kron(alice[sa][oa].matrix(), &identity(db)));
            }
        }
    }
    let pieces: Vec<Vec<CMatrix>> =
        alice.iter().map(|povm| povm.iter().map(|a| partial_trace_a(m, a.matrix(), db)).collect()).collect();
    let mut ops = Vec::with_capacity(s.m_b);
    for sb in 0..s.m_b {
        let mut row = Vec::with_capacity(s.n_b);
        for ob in 0..s.n_b {
            let mut acc = &rho_b * c(ineq.marg_b[sb][ob], 0.0);
            for sa in 0..s.m_a {
                for oa in 0..s.n_a {
                    let w = ineq.joint[sa][sb][oa][ob];
                    if w != 0.0 {
                        acc += &pieces[sa][oa] * c(w, 0.0);
                    }
                }
            }
            row.push(Hermitian::from_part(&acc));
        }
        ops.push(row);
    }
    Ok(ReducedOperators { ops, constant })
}

/// Clips negative eigenvalues and rescales by `S^{-1/2}` so that the elements
/// are PSD and sum exactly to the identity.
pub fn clean_povm(elements: &[CMatrix]) -> Vec<Hermitian> {
    let d = elements[0].nrows();
    let clipped: Vec<CMatrix> = elements
        .iter()
        .map(|e| {
            let (ev, vecs) = herm_eig(&Hermitian::from_part(e));
            let mut out = CMatrix::zeros(d, d);
            for (k, &l) in ev.iter().enumerate() {
                if l > 0.0 {
                    let v = vecs.column(k);
                    out += v * v.adjoint() * c(l, 0.0);
                }
            }
            out
        })
        .collect();
    let sum: CMatrix = clipped.iter().fold(CMatrix::zeros(d, d), |a, b| a + b);
    let (ev, vecs) = herm_eig(&Hermitian::from_part(&sum));
    let mut inv_sqrt = CMatrix::zeros(d, d);
    for (k, &l) in ev.iter().enumerate() {
        let v = vecs.column(k);
        inv_sqrt += v * v.adjoint() * c(1.0 / l.max(1e-300).sqrt(), 0.0);
    }
    clipped.iter().map(|e| Hermitian::from_part(&(&inv_sqrt * e * &inv_sqrt))).collect()
}

/// Best Bob POVMs for one setting by semidefinite programming.
fn best_povm_sdp(ops: &[Hermitian], opts: &SdpOptions) -> Result<Vec<Hermitian>> {
    let d = ops[0].dim();
    let n = ops.len();
    let basis = hermitian_basis(d);
    let fi = basis
        .elements
        .iter()
        .map(|sk| (0..n).map(|o| BlockTerm { block: o, mat: sk.clone() }).collect())
        .collect();
    let mut cvec = vec![0.0; basis.len()];
    cvec[0] = (d as f64).sqrt();
    let p = SdpStandard { f0: ops.iter().map(|o| -o.matrix()).collect(), fi, c: cvec };
    let sol = solve_standard(&p, opts)?;
    if matches!(sol.status, SdpStatus::Infeasible | SdpStatus::NumericalFailure) && sol.gap > 1e-5 {
        return Err(Error::Solver(format!("measurement SDP ended with {:?} (gap {:e})", sol.status, sol.gap)));
    }
    Ok(clean_povm(&sol.z))
}

/// Helstrom measurement for a two-outcome setting.
fn best_povm_two(ops: &[Hermitian]) -> Vec<Hermitian> {
    let d = ops[0].dim();
    let diff = Hermitian::from_part(&(ops[0].matrix() - ops[1].matrix()));
    let plus = positive_eigenspace_projector(&diff);
    let minus = Hermitian::from_part(&(identity(d) - plus.matrix()));
    vec![plus, minus]
}

/// Bob's optimal response by SDP for any number of outcomes.
pub fn optimize_bob_sdp(
    rho: &DensityMatrix,
    ineq: &BellInequality,
    alice: &[Vec<Hermitian>],
) -> Result<(Vec<Vec<Hermitian>>, f64)> {
    let red = reduced_operators(rho, ineq, alice)?;
    let opts = SdpOptions::default();
    let bob = red.ops.iter().map(|ops| best_povm_sdp(ops, &opts)).collect::<Result<Vec<_>>>()?;
    let v = red.value(&bob);
    Ok((bob, v))
}

/// Bob's optimal response for two-outcome settings via the Helstrom projector.
pub fn optimize_bob_two_outcome(
    rho: &DensityMatrix,
    ineq: &BellInequality,
    alice: &[Vec<Hermitian>],
) -> Result<(Vec<Vec<Hermitian>>, f64)> {
    if ineq.scenario.n_b != 2 {
        return Err(Error::Invalid(format!("two-outcome step needs n_B = 2, got {}", ineq.scenario.n_b)));
    }
    let red = reduced_operators(rho, ineq, alice)?;
    let bob: Vec<Vec<Hermitian>> = red.ops.iter().map(|ops| best_povm_two(ops)).collect();
    let v = red.value(&bob);
    Ok((bob, v))
}

fn optimize_bob(rho: &DensityMatrix, ineq: &BellInequality, alice: &[Vec<Hermitian>]) -> Result<(Vec<Vec<Hermitian>>, f64)> {
    if ineq.scenario.n_b == 2 {
        optimize_bob_two_outcome(rho, ineq, alice)
    } else {
        optimize_bob_sdp(rho, ineq, alice)
    }
}

/// Random composition of `d` into `n` parts, uniform over compositions with
/// positive parts when `n ≤ d` (so no outcome starts out impossible) and over
/// nonnegative parts otherwise.
fn random_composition<R: Rng>(d: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if n <= d {
        let mut parts = nonnegative_composition(d - n, n, rng);
        parts.iter_mut().for_each(|p| *p += 1);
        return parts;
    }
    nonnegative_composition(d, n, rng)
}

fn nonnegative_composition<R: Rng>(d: usize, n: usize, rng: &mut R) -> Vec<usize> {
    // Stars and bars: choose n-1 bar positions among d+n-1 slots.
    let slots = d + n - 1;
    let mut bars: Vec<usize> = rand::seq::index::sample(rng, slots, n - 1).into_vec();
    bars.sort_unstable();
    let mut parts = Vec::with_capacity(n);
    let mut prev = 0usize;
    for (k, &b) in bars.iter().enumerate() {
        parts.push(b - prev - if k == 0 { 0 } else { 1 });
        prev = b;
    }
    parts.push(slots - prev - if bars.is_empty() { 0 } else { 1 });
    parts
}

/// One random measurement with `n` outcomes on `C^d`.
pub fn random_measurement<R: Rng>(d: usize, n: usize, mode: &InitMode, rng: &mut R) -> Vec<Hermitian> {
    let ranks = match mode {
        InitMode::Projective { ranks: Some(r) } if r.len() == n && r.iter().sum::<usize>() == d => r.clone(),
        _ => random_composition(d, n, rng),
    };
    let u = haar_unitary(d, rng);
    let mut col = 0;
    let mut out = Vec::with_capacity(n);
    for &r in &ranks {
        let mut p = CMatrix::zeros(d, d);
        for k in col..col + r {
            let v = u.column(k);
            p += v * v.adjoint();
        }
        col += r;
        if matches!(mode, InitMode::GenericPovm) {
            p = p * c(0.9, 0.0) + identity(d) * c(0.1 / n as f64, 0.0);
        }
        out.push(Hermitian::from_part(&p));
    }
    out
}

struct RunOutcome {
    value: f64,
    meas: MeasurementAssignment,
    sweeps: usize,
    history: Vec<f64>,
}

fn random_start(rho: &DensityMatrix, ineq: &BellInequality, cfg: &SeesawConfig, index: usize) -> Vec<Vec<Hermitian>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(index as u64);
    let (da, _) = rho.split();
    let s = ineq.scenario;
    (0..s.m_a).map(|_| random_measurement(da, s.n_a, &cfg.init_mode, &mut rng)).collect()
}

/// Alice's part of an optimal deterministic strategy, as trivial POVMs.
fn classical_start(rho: &DensityMatrix, ineq: &BellInequality) -> Result<Vec<Vec<Hermitian>>> {
    let (_, strategy) = classical_optimum(ineq)?;
    let (da, _) = rho.split();
    let n = ineq.scenario.n_a;
    Ok(strategy
        .a
        .iter()
        .map(|&oa| {
            (0..n)
                .map(|o| Hermitian::from_part(&if o == oa { identity(da) } else { CMatrix::zeros(da, da) }))
                .collect()
        })
        .collect())
}

fn run_from(
    rho: &DensityMatrix,
    ineq: &BellInequality,
    cfg: &SeesawConfig,
    mut alice: Vec<Vec<Hermitian>>,
) -> Result<RunOutcome> {
    let swapped_ineq = ineq.swap_parties();
    let swapped_rho = rho.swap_parties();
    let (mut bob, mut value) = optimize_bob(rho, ineq, &alice)?;
    let mut history = vec![value];
    let mut sweeps = 0;
    for sweep in 1..=cfg.max_sweeps {
        sweeps = sweep;
        let start = value;
        // Alice half-sweep (Bob was optimized first).
        let (new_alice, va) = optimize_bob(&swapped_rho, &swapped_ineq, &bob)?;
        if va >= value {
            alice = new_alice;
            value = va;
        }
        history.push(value);
        let (new_bob, vb) = optimize_bob(rho, ineq, &alice)?;
        if vb >= value {
            bob = new_bob;
            value = vb;
        }
        history.push(value);
        if value - start < cfg.convergence_tol {
            break;
        }
    }
    let meas = MeasurementAssignment { alice, bob };
    Ok(RunOutcome { value, meas, sweeps, history })
}

/// See-saw maximization of `tr(ρ B)` over both parties' measurements.
pub fn seesaw(rho: &DensityMatrix, ineq: &BellInequality, cfg: &SeesawConfig) -> Result<LbResult> {
    cfg.validate()?;
    let s = ineq.scenario;
    if s.n_a < 1 || s.n_b < 1 {
        return Err(Error::Invalid("empty scenario".into()));
    }
    // The extra last run starts from a classical optimum, so the result never
    // falls below the classical bound.
    let with_classical = cfg.classical_start && ineq.scenario.strategy_count() <= crate::bell::MAX_STRATEGIES;
    let total = cfg.restarts + usize::from(with_classical);
    let runs: Vec<Result<RunOutcome>> = (0..total)
        .into_par_iter()
        .map(|r| {
            let alice = if r < cfg.restarts { random_start(rho, ineq, cfg, r) } else { classical_start(rho, ineq)? };
            run_from(rho, ineq, cfg, alice)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let restart_values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let mut best = 0;
    for (k, v) in restart_values.iter().enumerate() {
        if *v > restart_values[best] {
            best = k;
        }
    }
    let win = runs.into_iter().nth(best).expect("at least one restart");
    Ok(LbResult {
        value: win.value,
        measurements: win.meas,
        sweeps: win.sweeps,
        restart_values,
        history: win.history,
        best_restart: best,
    })
}

/// See-saw for a two-party correlation inequality, reported in its own units.
pub fn seesaw_correlation(rho: &DensityMatrix, ineq: &CorrelationInequality, cfg: &SeesawConfig) -> Result<LbResult> {
    let prob = ineq.to_probability()?;
    let mut out = seesaw(rho, &prob, cfg)?;
    out.value += ineq.bound;
    for v in out.restart_values.iter_mut().chain(out.history.iter_mut()) {
        *v += ineq.bound;
    }
    Ok(out)
}

/// Recomputes `tr(ρ B)` from the measurements.
pub fn assignment_value(rho: &DensityMatrix, ineq: &BellInequality, meas: &MeasurementAssignment) -> Result<f64> {
    Ok(rho.expect(bell_operator(ineq, meas)?.matrix()))
}

/// `T_ij = tr(ρ σ_i ⊗ σ_j)` for `i, j ∈ {x, y, z}`.
pub fn horodecki_t(rho: &DensityMatrix) -> Result<RMatrix> {
    if rho.split() != (2, 2) {
        return Err(Error::Dimension(format!("Horodecki criterion needs two qubits, got {:?}", rho.split())));
    }
    let p = [pauli_x(), pauli_y(), pauli_z()];
    Ok(RMatrix::from_fn(3, 3, |i, j| crate::qcore::bilinear_trace(rho.matrix(), &p[i], &p[j], 2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorodeckiValues {
    pub sqm_ch: f64,
    pub sqm_chsh: f64,
    pub violates: bool,
    /// `ς₁² + ς₂²`.
    pub m_value: f64,
}

/// Maximal CH and CHSH values of a two-qubit state.
pub fn horodecki_values(rho: &DensityMatrix) -> Result<HorodeckiValues> {
    let t = horodecki_t(rho)?;
    let sv = singular_values_real(&t);
    let m_value = sv[0] * sv[0] + sv[1] * sv[1];
    let sqm_ch = (0.5 * (m_value.sqrt() - 1.0)).max(0.0);
    Ok(HorodeckiValues { sqm_ch, sqm_chsh: 4.0 * (sqm_ch + 0.5), violates: m_value > 1.0, m_value })
}
