//! Single-agent dynamic logit model: Bellman solution, CCP inversion, payoff
//! recovery at a candidate discount factor and the stacked polynomial system
//! in beta.
//!
//! Actions are indexed `0..K`; the last action `K - 1` is the reference
//! action with payoff normalized to zero. Stacked vectors are action-major:
//! entry `k * J + x` belongs to action `k < K - 1` at state `x`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::{adjugate_expansion, Poly, PolyVec};
use crate::tol;

/// Euler-Mascheroni constant, the mean of the type-I extreme value shock.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Primitives `(u_k, Q_k, beta)` of a single-agent model.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleAgentModel {
    u: Vec<DVector<f64>>,
    q: Vec<DMatrix<f64>>,
    beta: f64,
}

pub(crate) fn validate_transitions(q: &[DMatrix<f64>]) -> Result<usize> {
    let j = q.first().map(|m| m.nrows()).ok_or_else(|| {
        Error::InvalidArgument("a model needs at least one transition matrix".into())
    })?;
    for (k, m) in q.iter().enumerate() {
        let name = format!("Q[{k}]");
        if !m.is_square() {
            return Err(Error::NotSquare {
                name,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() != j {
            return Err(Error::DimensionMismatch {
                what: name,
                expected: j,
                found: m.nrows(),
            });
        }
        for (r, row) in m.row_iter().enumerate() {
            if let Some((c, &v)) = row.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NegativeEntry {
                    name,
                    row: r,
                    col: c,
                    value: v,
                });
            }
            let s = row.sum();
            if (s - 1.0).abs() > tol::STOCHASTIC {
                return Err(Error::NotStochastic { name, row: r, sum: s });
            }
        }
    }
    Ok(j)
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidDiscount(beta))
    }
}

impl SingleAgentModel {
    /// `u[k]` and `q[k]` for every action including the reference action,
    /// whose payoff must be zero.
    pub fn new(u: Vec<DVector<f64>>, q: Vec<DMatrix<f64>>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let j = validate_transitions(&q)?;
        if q.len() < 2 {
            return Err(Error::InvalidArgument("a model needs at least two actions".into()));
        }
        if u.len() != q.len() {
            return Err(Error::DimensionMismatch {
                what: "number of payoff vectors".into(),
                expected: q.len(),
                found: u.len(),
            });
        }
        if let Some(bad) = u.iter().find(|v| v.len() != j) {
            return Err(Error::DimensionMismatch {
                what: "payoff vector length".into(),
                expected: j,
                found: bad.len(),
            });
        }
        Ok(Self { u, q, beta })
    }

    pub fn n_states(&self) -> usize {
        self.q[0].nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.q.len()
    }

    pub fn payoffs(&self) -> &[DVector<f64>] {
        &self.u
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Payoffs of the non-reference actions minus the reference payoff, stacked.
    pub fn stacked_payoff(&self) -> StackedPayoff {
        let last = &self.u[self.u.len() - 1];
        let blocks: Vec<DVector<f64>> = self.u[..self.u.len() - 1].iter().map(|u| u - last).collect();
        StackedPayoff::from_blocks(&blocks)
    }
}

/// Conditional choice probabilities, one vector per action.
#[derive(Clone, Debug, PartialEq)]
pub struct Ccps {
    p: Vec<DVector<f64>>,
}

impl Ccps {
    /// Checks each probability lies in `(0, 1)` and each state sums to one.
    pub fn new(p: Vec<DVector<f64>>) -> Result<Self> {
        let j = p.first().map(|v| v.len()).unwrap_or(0);
        if p.len() < 2 {
            return Err(Error::InvalidArgument("need probabilities for at least two actions".into()));
        }
        if let Some(bad) = p.iter().find(|v| v.len() != j) {
            return Err(Error::DimensionMismatch {
                what: "choice probability vector length".into(),
                expected: j,
                found: bad.len(),
            });
        }
        for x in 0..j {
            let mut s = 0.0;
            for (k, v) in p.iter().enumerate() {
                let val = v[x];
                if !(val > 0.0 && val < 1.0) {
                    return Err(Error::ProbabilityOutOfRange {
                        action: k,
                        state: x,
                        value: val,
                    });
                }
                s += val;
            }
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::ProbabilitiesDoNotSumToOne { state: x, sum: s });
            }
        }
        Ok(Self { p })
    }

    pub fn probabilities(&self) -> &[DVector<f64>] {
        &self.p
    }

    pub fn n_states(&self) -> usize {
        self.p[0].len()
    }

    pub fn n_actions(&self) -> usize {
        self.p.len()
    }

    /// `psi_k = gamma - ln p_k` for every action.
    pub fn psi(&self) -> Vec<DVector<f64>> {
        self.p
            .iter()
            .map(|v| v.map(|x| EULER_GAMMA - x.ln()))
            .collect()
    }
}

/// Stacked `psi_k` from choice probabilities, validating them first.
pub fn psi_from_ccps(p: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    Ok(Ccps::new(p.to_vec())?.psi())
}

/// Stacked payoff differences `U = (u_1, ..., u_{K-1})` relative to the reference action.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedPayoff {
    values: DVector<f64>,
    n_states: usize,
}

impl StackedPayoff {
    pub fn from_blocks(blocks: &[DVector<f64>]) -> Self {
        let n_states = blocks.first().map_or(0, |b| b.len());
        Self {
            values: stack(blocks),
            n_states,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Payoff vector of non-reference action `k`.
    pub fn block(&self, k: usize) -> DVector<f64> {
        self.values.rows(k * self.n_states, self.n_states).into_owned()
    }
}

pub(crate) fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let n: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(n);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.len()).copy_from(b);
        at += b.len();
    }
    out
}

/// Options for value iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: tol::BELLMAN,
            max_iter: tol::MAX_ITER,
        }
    }
}

/// Output of [`solve_bellman`].
#[derive(Clone, Debug)]
pub struct Solution {
    pub ccps: Ccps,
    /// Integrated value function `V`.
    pub value: DVector<f64>,
    /// Choice-specific values `v_k = u_k + beta Q_k V`.
    pub choice_values: Vec<DVector<f64>>,
    pub iterations: usize,
    /// Sup-norm change at every iteration.
    pub residuals: Vec<f64>,
}

pub(crate) fn log_sum_exp(values: &[DVector<f64>], x: usize) -> f64 {
    let m = values.iter().map(|v| v[x]).fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v[x] - m).exp()).sum::<f64>().ln()
}

/// Logit value iteration `V <- gamma + log sum_k exp(u_k + beta Q_k V)`,
/// started from zero and stopped when the sup-norm change is at most `opts.tol`.
pub fn solve_bellman(model: &SingleAgentModel, opts: SolveOptions) -> Result<Solution> {
    solve_logit_dp(&model.u, &model.q, model.beta, opts)
}

pub(crate) fn solve_logit_dp(
    u: &[DVector<f64>],
    q: &[DMatrix<f64>],
    beta: f64,
    opts: SolveOptions,
) -> Result<Solution> {
    let j = q[0].nrows();
    let mut v = DVector::zeros(j);
    let mut residuals = Vec::new();
    let choice = |v: &DVector<f64>| -> Vec<DVector<f64>> {
        u.iter().zip(q).map(|(uk, qk)| uk + qk * v * beta).collect()
    };
    let mut iterations = 0;
    loop {
        let cv = choice(&v);
        let next = DVector::from_fn(j, |x, _| EULER_GAMMA + log_sum_exp(&cv, x));
        let r = (&next - &v).amax();
        residuals.push(r);
        v = next;
        iterations += 1;
        if r <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter || !r.is_finite() {
            let start = residuals.len().saturating_sub(10);
            return Err(Error::NonConvergence {
                what: "value iteration".into(),
                iterations,
                residual: r,
                trace: residuals[start..].to_vec(),
            });
        }
    }
    let cv = choice(&v);
    let p: Vec<DVector<f64>> = (0..cv.len())
        .map(|k| {
            DVector::from_fn(j, |x, _| {
                let lse = log_sum_exp(&cv, x);
                (cv[k][x] - lse).exp()
            })
        })
        .collect();
    Ok(Solution {
        ccps: Ccps { p },
        value: v,
        choice_values: cv,
        iterations,
        residuals,
    })
}

/// Value iteration followed by policy-evaluation steps, which for the logit
/// model are Newton steps on the Bellman operator and drive the residual to
/// rounding level.
pub(crate) fn solve_logit_dp_polished(
    u: &[DVector<f64>],
    q: &[DMatrix<f64>],
    beta: f64,
    opts: SolveOptions,
    steps: usize,
) -> Result<Solution> {
    let mut sol = solve_logit_dp(u, q, beta, opts)?;
    let j = q[0].nrows();
    let id = DMatrix::<f64>::identity(j, j);
    for _ in 0..steps {
        let p = sol.ccps.probabilities();
        let mut qp = DMatrix::zeros(j, j);
        let mut r = DVector::zeros(j);
        for (k, pk) in p.iter().enumerate() {
            for x in 0..j {
                let w = pk[x];
                qp.set_row(x, &(qp.row(x) + q[k].row(x) * w));
                r[x] += w * (u[k][x] + EULER_GAMMA - w.ln());
            }
        }
        let v = (&id - qp * beta)
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Singular("policy evaluation system".into()))?;
        let cv: Vec<DVector<f64>> = u.iter().zip(q).map(|(uk, qk)| uk + qk * &v * beta).collect();
        let p: Vec<DVector<f64>> = (0..cv.len())
            .map(|k| DVector::from_fn(j, |x, _| (cv[k][x] - log_sum_exp(&cv, x)).exp()))
            .collect();
        let v_next = DVector::from_fn(j, |x, _| EULER_GAMMA + log_sum_exp(&cv, x));
        sol.residuals.push((&v_next - &v).amax());
        sol.ccps = Ccps { p };
        sol.value = v_next;
        sol.choice_values = cv;
    }
    Ok(sol)
}

/// Payoffs implied by `psi` and `Q` at a candidate discount factor:
/// `u_k = -psi_k + (I - beta Q_k)(I - beta Q_K)^{-1} psi_K`, with an LU solve.
pub fn recover_payoffs(psi: &[DVector<f64>], q: &[DMatrix<f64>], beta: f64) -> Result<StackedPayoff> {
    check_beta(beta)?;
    let j = validate_transitions(q)?;
    check_psi(psi, q.len(), j)?;
    let kk = q.len() - 1;
    let id = DMatrix::<f64>::identity(j, j);
    let a = &id - &q[kk] * beta;
    let w = a
        .lu()
        .solve(&psi[kk])
        .ok_or_else(|| Error::Singular("I - beta Q_K".into()))?;
    let blocks: Vec<DVector<f64>> = (0..kk)
        .map(|k| -&psi[k] + (&id - &q[k] * beta) * &w)
        .collect();
    Ok(StackedPayoff::from_blocks(&blocks))
}

fn check_psi(psi: &[DVector<f64>], k: usize, j: usize) -> Result<()> {
    if psi.len() != k {
        return Err(Error::DimensionMismatch {
            what: "number of psi vectors".into(),
            expected: k,
            found: psi.len(),
        });
    }
    if let Some(bad) = psi.iter().find(|v| v.len() != j) {
        return Err(Error::DimensionMismatch {
            what: "psi vector length".into(),
            expected: j,
            found: bad.len(),
        });
    }
    Ok(())
}

/// The stacked system `det(beta) U + det(beta) Psi - Q(beta) adj(I - beta Q_K) psi_K = 0`,
/// with `Q(beta)` stacking the blocks `I - beta Q_k`.
///
/// The payoff numerator `G(beta) = -det(beta) Psi + Q(beta) adj(I - beta Q_K) psi_K`
/// satisfies `U(beta) = G(beta) / det(beta)`.
#[derive(Clone, Debug)]
pub struct MasterSystem {
    det: Poly<f64>,
    numerator: PolyVec<f64>,
    numerator_abs: PolyVec<f64>,
    psi_stack: DVector<f64>,
    n_states: usize,
    n_actions: usize,
}

impl MasterSystem {
    /// `psi[k]` for all `K` actions; the last entry is the reference action.
    pub fn new(psi: &[DVector<f64>], q: &[DMatrix<f64>]) -> Result<Self> {
        let j = validate_transitions(q)?;
        check_psi(psi, q.len(), j)?;
        let kk = q.len() - 1;
        if kk == 0 {
            return Err(Error::InvalidArgument("a model needs at least two actions".into()));
        }
        let (adj, det) = adjugate_expansion(&q[kk])?;
        let a = adj.mul_vec(&psi[kk]);
        let a_abs = adj.mul_vec(&psi[kk].abs());
        let width = j + 1;
        let psi_stack = stack(&psi[..kk]);
        let mut g = DMatrix::zeros(kk * j, width);
        let mut g_abs = DMatrix::zeros(kk * j, width);
        for k in 0..kk {
            for d in 0..width {
                let cur = if d < j { a.matrix().column(d).into_owned() } else { DVector::zeros(j) };
                let cur_abs = if d < j { a_abs.matrix().column(d).abs() } else { DVector::zeros(j) };
                let mut col = cur.clone();
                let mut col_abs = cur_abs.clone();
                if d > 0 {
                    let prev = a.matrix().column(d - 1);
                    col -= &q[k] * prev;
                    col_abs += &q[k] * a_abs.matrix().column(d - 1).abs();
                }
                let dd = det.coeff(d);
                for x in 0..j {
                    g[(k * j + x, d)] = col[x] - dd * psi_stack[k * j + x];
                    g_abs[(k * j + x, d)] = col_abs[x] + dd.abs() * psi_stack[k * j + x].abs();
                }
            }
        }
        Ok(Self {
            det,
            numerator: PolyVec::from_matrix(g),
            numerator_abs: PolyVec::from_matrix(g_abs),
            psi_stack,
            n_states: j,
            n_actions: q.len(),
        })
    }

    pub fn from_ccps(ccps: &Ccps, q: &[DMatrix<f64>]) -> Result<Self> {
        Self::new(&ccps.psi(), q)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Length of the stacked payoff vector, `J (K - 1)`.
    pub fn n_payoffs(&self) -> usize {
        self.n_states * (self.n_actions - 1)
    }

    /// `det(I - beta Q_K)`.
    pub fn det(&self) -> &Poly<f64> {
        &self.det
    }

    /// `G(beta)`.
    pub fn numerator(&self) -> &PolyVec<f64> {
        &self.numerator
    }


    pub fn psi_stack(&self) -> &DVector<f64> {
        &self.psi_stack
    }

    /// `det U + det Psi - Q adj psi_K` at `beta`.
    pub fn residual(&self, u: &DVector<f64>, beta: f64) -> Result<DVector<f64>> {
        if u.len() != self.n_payoffs() {
            return Err(Error::DimensionMismatch {
                what: "stacked payoff length".into(),
                expected: self.n_payoffs(),
                found: u.len(),
            });
        }
        Ok(u * self.det.eval(beta) - self.numerator.eval(beta))
    }

    /// `U(beta) = G(beta) / det(beta)`.
    pub fn recovered(&self, beta: f64) -> Result<DVector<f64>> {
        check_beta(beta)?;
        Ok(self.numerator.eval(beta) / self.det.eval(beta))
    }

    /// Row polynomials `det c - R G` for a linear map `R U` against `c`,
    /// with a cancellation-free magnitude per row.
    pub fn row_polys(&self, r: &DMatrix<f64>, c: &DVector<f64>) -> Result<(Vec<Poly<f64>>, Vec<f64>)> {
        if r.ncols() != self.n_payoffs() {
            return Err(Error::DimensionMismatch {
                what: "restriction columns".into(),
                expected: self.n_payoffs(),
                found: r.ncols(),
            });
        }
        if c.len() != r.nrows() {
            return Err(Error::DimensionMismatch {
                what: "restriction right-hand side".into(),
                expected: r.nrows(),
                found: c.len(),
            });
        }
        let rg = self.numerator.left_mul(r);
        let dc = PolyVec::outer(&self.det, c);
        let polys = dc.sub(&rg)?.to_polys();
        let mag = self.numerator_abs.left_mul(&r.abs());
        let det_abs = self.det.coeffs().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scales = (0..r.nrows())
            .map(|i| {
                let g = mag.matrix().row(i).amax();
                g + det_abs * c[i].abs()
            })
            .collect();
        Ok((polys, scales))
    }
}
