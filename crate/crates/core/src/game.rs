//! Dynamic entry-style games: primitives, Markov perfect equilibrium by damped
//! best-response iteration, and firm-specific discount factor identification
//! from the stacked linear system in the payoff tensor.
//!
//! Conventions: actions are `0..K` with `K - 1` the reference action whose
//! payoff is known. An action profile is encoded mixed radix with firm 0
//! fastest; a state is `x = s * K^N + lag_profile`. The profile of rivals
//! `a_{-i}` is encoded the same way over the rivals in increasing firm order.
//! The unknown payoff vector `Pi_i` stacks `pi_i(k, a_{-i}, x)` for `k < K - 1`
//! at column `(k * m_x + x) * K^{N-1} + o`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{common_roots, region, IdentifiedSet, PolySystem};
use crate::model::{solve_logit_dp_polished, MasterSystem, SolveOptions, EULER_GAMMA};
use crate::poly::{Interval, Poly, PolyVec, Sign};
use crate::restrictions::{null_space_rows, numerical_rank, RestrictionKind, RestrictionSet};
use crate::tol::{self, Tolerances};

/// Index arithmetic shared by the model and the restriction builders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameLayout {
    pub n_firms: usize,
    pub n_actions: usize,
    pub m_s: usize,
}

/// A payoff cell left after imposing irrelevance of rivals' lagged actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub k: usize,
    pub s: usize,
    pub own_lag: usize,
    pub others: usize,
}

impl GameLayout {
    /// `K^N`.
    pub fn n_profiles(&self) -> usize {
        self.n_actions.pow(self.n_firms as u32)
    }

    /// `K^{N-1}`.
    pub fn n_others(&self) -> usize {
        self.n_actions.pow(self.n_firms as u32 - 1)
    }

    /// `m_s K^N`.
    pub fn m_x(&self) -> usize {
        self.m_s * self.n_profiles()
    }

    /// `(K - 1) K^{N-1} m_x`.
    pub fn m_pi(&self) -> usize {
        (self.n_actions - 1) * self.n_others() * self.m_x()
    }

    pub fn profile(&self, mut idx: usize) -> Vec<usize> {
        (0..self.n_firms)
            .map(|_| {
                let a = idx % self.n_actions;
                idx /= self.n_actions;
                a
            })
            .collect()
    }

    pub fn profile_index(&self, a: &[usize]) -> usize {
        a.iter().rev().fold(0, |acc, &ai| acc * self.n_actions + ai)
    }

    /// `(s, lag profile)` of a state.
    pub fn state(&self, x: usize) -> (usize, Vec<usize>) {
        (x / self.n_profiles(), self.profile(x % self.n_profiles()))
    }

    pub fn state_index(&self, s: usize, lag: &[usize]) -> usize {
        s * self.n_profiles() + self.profile_index(lag)
    }

    /// Encodes the rivals' part of a full profile.
    pub fn others_index(&self, i: usize, a: &[usize]) -> usize {
        a.iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .rev()
            .fold(0, |acc, (_, &aj)| acc * self.n_actions + aj)
    }

    /// Rivals' actions in increasing firm order.
    pub fn others(&self, mut o: usize) -> Vec<usize> {
        (0..self.n_firms - 1)
            .map(|_| {
                let a = o % self.n_actions;
                o /= self.n_actions;
                a
            })
            .collect()
    }

    /// Full profile from firm `i`'s action and a rivals' index.
    pub fn with_own(&self, i: usize, k: usize, o: usize) -> Vec<usize> {
        let mut rivals = self.others(o).into_iter();
        (0..self.n_firms)
            .map(|j| if j == i { k } else { rivals.next().unwrap_or(0) })
            .collect()
    }

    /// Column of `pi_i(k, a_{-i}, x)` in `Pi_i`.
    pub fn pi_column(&self, k: usize, x: usize, o: usize) -> usize {
        (k * self.m_x() + x) * self.n_others() + o
    }

    /// Cells `(k, s, own lag, rivals)` in that nesting order, rivals fastest.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for k in 0..self.n_actions - 1 {
            for s in 0..self.m_s {
                for own_lag in 0..self.n_actions {
                    for others in 0..self.n_others() {
                        out.push(Cell { k, s, own_lag, others });
                    }
                }
            }
        }
        out
    }

    /// Column of a cell, using the state where every rival's lag is action 0.
    pub fn cell_column(&self, i: usize, c: Cell) -> usize {
        let mut lag = vec![0; self.n_firms];
        lag[i] = c.own_lag;
        self.pi_column(c.k, self.state_index(c.s, &lag), c.others)
    }
}

/// Primitives of an `N`-firm game with a Markov exogenous state and lagged
/// actions in the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameModel {
    pub n_firms: usize,
    pub n_actions: usize,
    pub s_values: Vec<f64>,
    /// Row-major `m_s x m_s` transition of the exogenous state.
    pub s_transition: Vec<Vec<f64>>,
    /// `payoff[i][profile][x]`.
    pub payoff: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<f64>,
    /// The reference action's payoff is known to the analyst.
    pub known_reference_payoff: bool,
}

impl GameModel {
    pub fn layout(&self) -> GameLayout {
        GameLayout {
            n_firms: self.n_firms,
            n_actions: self.n_actions,
            m_s: self.s_values.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_firms == 0 || self.n_actions < 2 {
            return Err(Error::InvalidArgument("need at least one firm and two actions".into()));
        }
        let l = self.layout();
        let m_s = l.m_s;
        if m_s == 0 {
            return Err(Error::InvalidArgument("exogenous state list is empty".into()));
        }
        if self.s_transition.len() != m_s {
            return Err(Error::DimensionMismatch {
                what: "s_transition rows".into(),
                expected: m_s,
                found: self.s_transition.len(),
            });
        }
        for (r, row) in self.s_transition.iter().enumerate() {
            if row.len() != m_s {
                return Err(Error::DimensionMismatch {
                    what: format!("s_transition row {r}"),
                    expected: m_s,
                    found: row.len(),
                });
            }
            if let Some((c, &v)) = row.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NegativeEntry {
                    name: "s_transition".into(),
                    row: r,
                    col: c,
                    value: v,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol::STOCHASTIC {
                return Err(Error::NotStochastic {
                    name: "s_transition".into(),
                    row: r,
                    sum,
                });
            }
        }
        if self.beta.len() != self.n_firms {
            return Err(Error::DimensionMismatch {
                what: "discount factors".into(),
                expected: self.n_firms,
                found: self.beta.len(),
            });
        }
        for &b in &self.beta {
            crate::model::check_beta(b)?;
        }
        if self.payoff.len() != self.n_firms {
            return Err(Error::DimensionMismatch {
                what: "payoff firms".into(),
                expected: self.n_firms,
                found: self.payoff.len(),
            });
        }
        for (i, pi) in self.payoff.iter().enumerate() {
            if pi.len() != l.n_profiles() {
                return Err(Error::DimensionMismatch {
                    what: format!("payoff profiles of firm {i}"),
                    expected: l.n_profiles(),
                    found: pi.len(),
                });
            }
            for row in pi {
                if row.len() != l.m_x() {
                    return Err(Error::DimensionMismatch {
                        what: format!("payoff states of firm {i}"),
                        expected: l.m_x(),
                        found: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("payoff of firm {i} is not finite")));
                }
            }
        }
        Ok(())
    }

    pub fn s_matrix(&self) -> DMatrix<f64> {
        let m = self.s_values.len();
        DMatrix::from_fn(m, m, |r, c| self.s_transition[r][c])
    }

    /// Payoff vector `Pi_i` stacked in the column order of [`GameLayout::pi_column`].
    pub fn pi_vector(&self, i: usize) -> DVector<f64> {
        let l = self.layout();
        let mut v = DVector::zeros(l.m_pi());
        for k in 0..l.n_actions - 1 {
            for x in 0..l.m_x() {
                for o in 0..l.n_others() {
                    let a = l.profile_index(&l.with_own(i, k, o));
                    v[l.pi_column(k, x, o)] = self.payoff[i][a][x];
                }
            }
        }
        v
    }
}

/// Options for the equilibrium solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpeOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub dp: SolveOptions,
}

impl Default for MpeOptions {
    fn default() -> Self {
        Self {
            damping: tol::DAMPING,
            tol: tol::EQUILIBRIUM,
            max_iter: tol::MAX_ITER,
            dp: SolveOptions::default(),
        }
    }
}

mod mat_serde {
    use nalgebra::{DMatrix, DVector};
    use serde::Serializer;

    pub fn mats<S: Serializer>(m: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Vec<f64>>> = m
            .iter()
            .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect();
        s.collect_seq(rows)
    }

    pub fn vecs<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|v| v.iter().copied().collect::<Vec<_>>()))
    }

    pub fn vecs2<S: Serializer>(v: &[Vec<DVector<f64>>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(
            v.iter()
                .map(|f| f.iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()),
        )
    }
}

/// A Markov perfect equilibrium in conditional choice probabilities.
#[derive(Clone, Debug, Serialize)]
pub struct MpeSolution {
    /// Per firm, a `K x m_x` matrix whose columns sum to one.
    #[serde(serialize_with = "mat_serde::mats")]
    pub p: Vec<DMatrix<f64>>,
    /// Sup-norm distance between `p` and the best response to it.
    pub residual: f64,
    pub iterations: usize,
    /// Integrated value per firm at the best response to `p`.
    #[serde(serialize_with = "mat_serde::vecs")]
    pub value: Vec<DVector<f64>>,
    /// Choice-specific values per firm and action.
    #[serde(serialize_with = "mat_serde::vecs2")]
    pub choice_values: Vec<Vec<DVector<f64>>>,
}

impl MpeSolution {
    /// `psi_ik = gamma - ln P_i(k | x)` for every action of firm `i`.
    pub fn psi(&self, i: usize) -> Vec<DVector<f64>> {
        self.p[i]
            .row_iter()
            .map(|r| r.transpose().map(|v| EULER_GAMMA - v.ln()))
            .collect()
    }
}

/// Uniform choice probabilities for every firm.
pub fn uniform_start(model: &GameModel) -> Vec<DMatrix<f64>> {
    let l = model.layout();
    (0..l.n_firms)
        .map(|_| DMatrix::from_element(l.n_actions, l.m_x(), 1.0 / l.n_actions as f64))
        .collect()
}

/// Expected payoffs, transitions and rival profile probabilities firm `i`
/// faces when rivals play `p`.
#[derive(Clone, Debug)]
pub struct ExpectedObjects {
    /// `K x m_x`: `pi*_i(k, x) = sum_o P_{-i}(o | x) pi_i(k, o, x)`.
    pub pi_star: DMatrix<f64>,
    /// One `m_x x m_x` stochastic matrix per own action.
    pub q_star: Vec<DMatrix<f64>>,
    /// `m_x x K^{N-1}`: `P_{-i}(o | x) = prod_{j != i} P_j(o_j | x)`.
    pub p_minus: DMatrix<f64>,
}

fn check_ccps(model: &GameModel, p: &[DMatrix<f64>]) -> Result<()> {
    let l = model.layout();
    if p.len() != l.n_firms {
        return Err(Error::DimensionMismatch {
            what: "firms in choice probabilities".into(),
            expected: l.n_firms,
            found: p.len(),
        });
    }
    for m in p {
        if m.shape() != (l.n_actions, l.m_x()) {
            return Err(Error::DimensionMismatch {
                what: "choice probability matrix rows".into(),
                expected: l.n_actions,
                found: m.nrows(),
            });
        }
        for (x, col) in m.column_iter().enumerate() {
            let s = col.sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::ProbabilitiesDoNotSumToOne { state: x, sum: s });
            }
            if let Some((k, &v)) = col.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::ProbabilityOutOfRange {
                    action: k,
                    state: x,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

pub fn expected_objects(model: &GameModel, p: &[DMatrix<f64>], i: usize) -> Result<ExpectedObjects> {
    check_ccps(model, p)?;
    let l = model.layout();
    if i >= l.n_firms {
        return Err(Error::IndexOutOfRange {
            axis: "firm".into(),
            index: i,
            len: l.n_firms,
        });
    }
    let (m_x, no, k_n) = (l.m_x(), l.n_others(), l.n_actions);
    let p_minus = DMatrix::from_fn(m_x, no, |x, o| {
        l.others(o)
            .iter()
            .zip((0..l.n_firms).filter(|&j| j != i))
            .map(|(&aj, j)| p[j][(aj, x)])
            .product()
    });
    let ts = model.s_matrix();
    let mut pi_star = DMatrix::zeros(k_n, m_x);
    let mut q_star = vec![DMatrix::zeros(m_x, m_x); k_n];
    for k in 0..k_n {
        for x in 0..m_x {
            let (s, _) = l.state(x);
            for o in 0..no {
                let w = p_minus[(x, o)];
                let prof = l.with_own(i, k, o);
                let a = l.profile_index(&prof);
                pi_star[(k, x)] += w * model.payoff[i][a][x];
                for s2 in 0..l.m_s {
                    q_star[k][(x, l.state_index(s2, &prof))] += w * ts[(s, s2)];
                }
            }
        }
    }
    Ok(ExpectedObjects {
        pi_star,
        q_star,
        p_minus,
    })
}

fn best_response(
    model: &GameModel,
    p: &[DMatrix<f64>],
    i: usize,
    dp: SolveOptions,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<DVector<f64>>)> {
    let e = expected_objects(model, p, i)?;
    let u: Vec<DVector<f64>> = e.pi_star.row_iter().map(|r| r.transpose()).collect();
    let sol = solve_logit_dp_polished(&u, &e.q_star, model.beta[i], dp, 2)?;
    let probs = sol.ccps.probabilities();
    let br = DMatrix::from_fn(model.n_actions, probs[0].len(), |k, x| probs[k][x]);
    Ok((br, sol.value, sol.choice_values))
}

/// Damped simultaneous best-response iteration on choice probabilities,
/// `P <- (1 - damping) P + damping BR(P)`, until `max |BR(P) - P| <= opts.tol`.
///
/// Each best response is the single-agent logit problem with expected
/// payoffs and transitions. Starts from `start` or uniform probabilities.
pub fn solve_mpe(model: &GameModel, opts: MpeOptions, start: Option<&[DMatrix<f64>]>) -> Result<MpeSolution> {
    model.validate()?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping {} is outside (0, 1]", opts.damping)));
    }
    let mut p = match start {
        Some(s) => s.to_vec(),
        None => uniform_start(model),
    };
    check_ccps(model, &p)?;
    let mut trace = Vec::new();
    for it in 1..=opts.max_iter {
        let mut br = Vec::with_capacity(model.n_firms);
        let mut value = Vec::with_capacity(model.n_firms);
        let mut cvs = Vec::with_capacity(model.n_firms);
        for i in 0..model.n_firms {
            let (b, v, cv) = best_response(model, &p, i, opts.dp)?;
            br.push(b);
            value.push(v);
            cvs.push(cv);
        }
        let residual = br
            .iter()
            .zip(&p)
            .map(|(b, q)| (b - q).amax())
            .fold(0.0, f64::max);
        trace.push(residual);
        if residual <= opts.tol {
            return Ok(MpeSolution {
                p,
                residual,
                iterations: it,
                value,
                choice_values: cvs,
            });
        }
        for (pi, bi) in p.iter_mut().zip(&br) {
            *pi = &*pi * (1.0 - opts.damping) + bi * opts.damping;
        }
    }
    let start = trace.len().saturating_sub(10);
    Err(Error::NonConvergence {
        what: "best-response iteration".into(),
        iterations: opts.max_iter,
        residual: trace.last().copied().unwrap_or(f64::NAN),
        trace: trace[start..].to_vec(),
    })
}

/// The stacked system `d(beta) Pbar Pi = Y_1(beta)` for one firm together
/// with the irrelevance rows `R2 Pi = 0`.
#[derive(Clone, Debug)]
pub struct GameIdentSystem {
    pub firm: usize,
    pub layout: GameLayout,
    /// `(K - 1) m_x x m_Pi` block-diagonal matrix of rival profile probabilities.
    pub pbar: DMatrix<f64>,
    pub r2: RestrictionSet,
    /// `det(I - beta Q*_K)`.
    pub det: Poly<f64>,
    /// `A*(beta) Psi*`, with the reference entry `psi_K + Pbar pi_K`.
    pub y1: PolyVec<f64>,
    pub psi: Vec<DVector<f64>>,
}

/// Builds firm `i`'s system from equilibrium probabilities.
pub fn build_system(model: &GameModel, mpe: &MpeSolution, i: usize) -> Result<GameIdentSystem> {
    if !model.known_reference_payoff {
        return Err(Error::InvalidArgument(
            "the reference action's payoff must be declared known".into(),
        ));
    }
    let l = model.layout();
    let e = expected_objects(model, &mpe.p, i)?;
    let mut psi = mpe.psi(i);
    let kk = l.n_actions - 1;
    let composite = &psi[kk] + e.pi_star.row(kk).transpose();
    let mut psi_c = psi.clone();
    psi_c[kk] = composite;
    let master = MasterSystem::new(&psi_c, &e.q_star)?;
    let (m_x, no) = (l.m_x(), l.n_others());
    let mut pbar = DMatrix::zeros(kk * m_x, l.m_pi());
    for k in 0..kk {
        for x in 0..m_x {
            for o in 0..no {
                pbar[(k * m_x + x, l.pi_column(k, x, o))] = e.p_minus[(x, o)];
            }
        }
    }
    psi.truncate(l.n_actions);
    Ok(GameIdentSystem {
        firm: i,
        layout: l,
        pbar,
        r2: r2_irrelevance(&l, i),
        det: master.det().clone(),
        y1: master.numerator().clone(),
        psi,
    })
}

impl GameIdentSystem {
    /// `d(beta) Pbar Pi - Y_1(beta)`.
    pub fn residual(&self, pi: &DVector<f64>, beta: f64) -> DVector<f64> {
        &self.pbar * pi * self.det.eval(beta) - self.y1.eval(beta)
    }

    /// Largest coefficient magnitude of the system, for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.y1.matrix().amax().max(self.det.scale())
    }
}

#[derive(Default)]
struct Rows {
    rows: Vec<BTreeMap<usize, f64>>,
}

impl Rows {
    fn push(&mut self, e: &[(usize, f64)]) {
        let mut m = BTreeMap::new();
        for &(j, v) in e {
            *m.entry(j).or_insert(0.0) += v;
        }
        m.retain(|_, v| *v != 0.0);
        if !m.is_empty() {
            self.rows.push(m);
        }
    }

    fn build(self, label: &str, kind: RestrictionKind, p: usize) -> RestrictionSet {
        let mut r = DMatrix::zeros(self.rows.len(), p);
        for (i, row) in self.rows.iter().enumerate() {
            for (&j, &v) in row {
                r[(i, j)] = v;
            }
        }
        let n = r.nrows();
        RestrictionSet {
            label: label.into(),
            kind,
            r,
            c: DVector::zeros(n),
        }
    }
}

/// Payoffs do not depend on rivals' lagged actions: each state is equated
/// with the state where every rival's lag is action 0.
/// `(K - 1)(K^{N-1} - 1) m_x` rows.
pub fn r2_irrelevance(l: &GameLayout, i: usize) -> RestrictionSet {
    let mut rows = Rows::default();
    for k in 0..l.n_actions - 1 {
        for x in 0..l.m_x() {
            let (s, lag) = l.state(x);
            let mut base = vec![0; l.n_firms];
            base[i] = lag[i];
            let xb = l.state_index(s, &base);
            if xb == x {
                continue;
            }
            for o in 0..l.n_others() {
                rows.push(&[(l.pi_column(k, x, o), 1.0), (l.pi_column(k, xb, o), -1.0)]);
            }
        }
    }
    rows.build("irrelevance", RestrictionKind::Equality, l.m_pi())
}

/// Exchangeability: payoffs are invariant to permutations of rivals' actions.
pub fn r3_exchangeability(l: &GameLayout, i: usize) -> RestrictionSet {
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for o in 0..l.n_others() {
        let mut key = l.others(o);
        key.sort_unstable();
        groups.entry(key).or_default().push(o);
    }
    let mut rows = Rows::default();
    for c in l.cells().into_iter().filter(|c| c.others == 0) {
        for members in groups.values() {
            for &o in &members[1..] {
                let a = l.cell_column(i, Cell { others: o, ..c });
                let b = l.cell_column(i, Cell { others: members[0], ..c });
                rows.push(&[(a, 1.0), (b, -1.0)]);
            }
        }
    }
    rows.build("exchangeability", RestrictionKind::Equality, l.m_pi())
}

/// Adjustment costs do not depend on rivals' actions: the payoff difference
/// between own lag `m` and own lag 0 is the same for every rival profile.
pub fn r3_adjustment_cost(l: &GameLayout, i: usize) -> RestrictionSet {
    let mut rows = Rows::default();
    for k in 0..l.n_actions - 1 {
        for s in 0..l.m_s {
            for m in 1..l.n_actions {
                let col = |own_lag, others| l.cell_column(i, Cell { k, s, own_lag, others });
                for o in 1..l.n_others() {
                    rows.push(&[(col(m, o), 1.0), (col(0, o), -1.0), (col(m, 0), -1.0), (col(0, 0), 1.0)]);
                }
            }
        }
    }
    rows.build("adjustment_cost", RestrictionKind::Equality, l.m_pi())
}

/// Payoffs linear in parameters over the cells, `pi = H theta`, with `H`
/// having one row per entry of [`GameLayout::cells`].
pub fn r3_linear(l: &GameLayout, i: usize, h: &DMatrix<f64>) -> Result<RestrictionSet> {
    let cells = l.cells();
    if h.nrows() != cells.len() {
        return Err(Error::DimensionMismatch {
            what: "design matrix rows".into(),
            expected: cells.len(),
            found: h.nrows(),
        });
    }
    let kern = null_space_rows(h)?;
    let mut r = DMatrix::zeros(kern.nrows(), l.m_pi());
    for (ci, &c) in cells.iter().enumerate() {
        r.set_column(l.cell_column(i, c), &kern.column(ci));
    }
    let n = r.nrows();
    RestrictionSet::new("linear_in_parameters", RestrictionKind::Equality, r, DVector::zeros(n))
}

/// Payoffs fall as the firm's own lagged action gets weaker:
/// `pi(own lag m) - pi(own lag m + 1) >= 0`.
pub fn r4_own_lag(l: &GameLayout, i: usize) -> RestrictionSet {
    let mut rows = Rows::default();
    for c in l.cells().into_iter().filter(|c| c.own_lag + 1 < l.n_actions) {
        let a = l.cell_column(i, c);
        let b = l.cell_column(i, Cell { own_lag: c.own_lag + 1, ..c });
        rows.push(&[(a, 1.0), (b, -1.0)]);
    }
    rows.build("monotone_own_lag", RestrictionKind::InequalityGe, l.m_pi())
}

/// Payoffs rise as any rival's action gets weaker:
/// `pi(a_{-i} + e_j) - pi(a_{-i}) >= 0` for each rival `j`.
pub fn r4_rivals(l: &GameLayout, i: usize) -> RestrictionSet {
    let mut rows = Rows::default();
    for c in l.cells() {
        let o = l.others(c.others);
        for j in 0..o.len() {
            if o[j] + 1 < l.n_actions {
                let mut up = o.clone();
                up[j] += 1;
                let ou = up.iter().rev().fold(0, |acc, &a| acc * l.n_actions + a);
                let a = l.cell_column(i, Cell { others: ou, ..c });
                let b = l.cell_column(i, c);
                rows.push(&[(a, 1.0), (b, -1.0)]);
            }
        }
    }
    rows.build("monotone_rivals", RestrictionKind::InequalityGe, l.m_pi())
}

/// Rows chosen greedily by largest residual norm (column-pivoted QR on the
/// transpose), returning at most `count` indices in pivot order.
pub fn pivoted_rows(x: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let mut res: Vec<DVector<f64>> = x.row_iter().map(|r| r.transpose()).collect();
    let mut chosen = Vec::new();
    let scale = res.iter().map(|v| v.norm()).fold(0.0, f64::max);
    while chosen.len() < count {
        let best = (0..res.len())
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| res[a].norm().total_cmp(&res[b].norm()).then(b.cmp(&a)));
        let Some(b) = best else { break };
        let n = res[b].norm();
        if n <= tol::RANK * scale {
            break;
        }
        let q = &res[b] / n;
        chosen.push(b);
        for v in res.iter_mut() {
            let d = q.dot(v);
            *v -= &q * d;
        }
    }
    chosen
}

/// Identifying polynomials `X2 X1^-1 Y1 - Y2` and the rows used to invert.
#[derive(Clone, Debug)]
pub struct GamePolySystem {
    pub system: PolySystem,
    /// Rows of `X = [Pbar; R2; R3]` forming the invertible block.
    pub x1_rows: Vec<usize>,
    /// Ratio of extreme singular values of `X`.
    pub condition: f64,
    /// Number of linearly independent polynomials.
    pub n_independent: usize,
    /// Relative size below which a member is rounding noise: the condition
    /// of `X` times `m_x m_Pi` machine epsilons.
    pub noise_floor: f64,
}

impl GamePolySystem {
    /// `tol` with the zero test raised to the noise floor.
    pub fn tolerances(&self, tol: &Tolerances) -> Tolerances {
        Tolerances {
            uninformative: tol.uninformative.max(self.noise_floor),
            ..*tol
        }
    }
}

struct Stack {
    x: DMatrix<f64>,
    y: PolyVec<f64>,
}

fn stack(sys: &GameIdentSystem, extra: Option<&RestrictionSet>) -> Result<Stack> {
    let p = sys.layout.m_pi();
    let mut blocks: Vec<&DMatrix<f64>> = vec![&sys.pbar, &sys.r2.r];
    let mut y = sys.y1.stack(&PolyVec::zeros(sys.r2.n_rows(), 0));
    if let Some(r3) = extra {
        if r3.kind != RestrictionKind::Equality {
            return Err(Error::InvalidArgument("extra rows must be equalities".into()));
        }
        if r3.n_cols() != p {
            return Err(Error::DimensionMismatch {
                what: "restriction columns".into(),
                expected: p,
                found: r3.n_cols(),
            });
        }
        blocks.push(&r3.r);
        y = y.stack(&PolyVec::outer(&sys.det, &r3.c));
    }
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut x = DMatrix::zeros(n, p);
    let mut at = 0;
    for b in blocks {
        x.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    Ok(Stack { x, y })
}

fn condition(x: &DMatrix<f64>) -> (usize, f64) {
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > tol::RANK * smax).count();
    (rank, smax / sv.min())
}

fn inverse_applied(x1: &DMatrix<f64>, y1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    x1.clone()
        .lu()
        .solve(y1)
        .ok_or_else(|| Error::Singular("selected block X_1".into()))
}

/// Polynomials `X_2 X_1^{-1} Y_1(beta) - Y_2(beta)` after stacking extra
/// equality rows under `[Pbar; R2]`. `x1_rows` overrides the pivoted choice.
pub fn game_poly_system(
    sys: &GameIdentSystem,
    r3: &RestrictionSet,
    x1_rows: Option<&[usize]>,
) -> Result<GamePolySystem> {
    let p = sys.layout.m_pi();
    let st = stack(sys, Some(r3))?;
    let (rank, cond) = condition(&st.x);
    if rank < p {
        return Err(Error::RankDeficient {
            context: "stacked system [Pbar; R2; R3] must have full column rank".into(),
            rank,
            expected: p,
        });
    }
    let rows = match x1_rows {
        Some(r) => r.to_vec(),
        None => pivoted_rows(&st.x, p),
    };
    if rows.len() != p {
        return Err(Error::DimensionMismatch {
            what: "rows of X_1".into(),
            expected: p,
            found: rows.len(),
        });
    }
    let rest: Vec<usize> = (0..st.x.nrows()).filter(|r| !rows.contains(r)).collect();
    let x1 = st.x.select_rows(&rows);
    let x2 = st.x.select_rows(&rest);
    let y1 = st.y.matrix().select_rows(&rows);
    let y2 = st.y.matrix().select_rows(&rest);
    let x1_inv = x1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("selected block X_1".into()))?;
    let z = inverse_applied(&x1, &y1)?;
    let polys_m = &x2 * &z - &y2;
    // rounding bound for the product, so exact cancellations read as zero
    let mag = x2.abs() * (x1_inv.abs() * y1.abs()) + y2.abs();
    let polys: Vec<Poly<f64>> = PolyVec::from_matrix(polys_m.clone()).to_polys();
    let scales: Vec<f64> = mag.row_iter().map(|r| r.amax()).collect();
    let noise_floor = cond * (sys.layout.m_x() * p) as f64 * f64::EPSILON;
    let live: Vec<usize> = (0..polys_m.nrows())
        .filter(|&r| polys_m.row(r).amax() > noise_floor * scales[r])
        .collect();
    let n_independent = if live.is_empty() {
        0
    } else {
        numerical_rank(&polys_m.select_rows(&live))
    };
    Ok(GamePolySystem {
        system: PolySystem {
            label: r3.label.clone(),
            kind: RestrictionKind::Equality,
            sign: Sign::NonPositive,
            polys,
            scales,
        },
        x1_rows: rows,
        condition: cond,
        n_independent,
        noise_floor,
    })
}

/// Common roots in `[0, 1)` of the firm's polynomial system.
pub fn identified_set_game(
    sys: &GameIdentSystem,
    r3: &RestrictionSet,
    tol: &Tolerances,
) -> Result<(IdentifiedSet, GamePolySystem)> {
    let gp = game_poly_system(sys, r3, None)?;
    let tol = gp.tolerances(tol);
    let roots = common_roots(&gp.system, &tol)?;
    let set = IdentifiedSet {
        equality_roots: Some(roots.clone()),
        inequality_intervals: None,
        combined: roots,
        diagnostics: gp.system.diagnostics(&tol),
    };
    Ok((set, gp))
}

fn invertible_block(sys: &GameIdentSystem, r3: Option<&RestrictionSet>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = sys.layout.m_pi();
    let st = stack(sys, r3)?;
    let rows = if st.x.nrows() == p {
        (0..p).collect()
    } else {
        pivoted_rows(&st.x, p)
    };
    if rows.len() != p {
        return Err(Error::RankDeficient {
            context: "no invertible square block in the stacked system".into(),
            rank: rows.len(),
            expected: p,
        });
    }
    Ok((st.x.select_rows(&rows), st.y.matrix().select_rows(&rows)))
}

/// Inequality polynomials `R4 X^{-1} Y(beta) - d(beta) c4`, nonnegative at the truth.
pub fn game_inequality_system(
    sys: &GameIdentSystem,
    r3: Option<&RestrictionSet>,
    r4: &RestrictionSet,
) -> Result<PolySystem> {
    if r4.kind != RestrictionKind::InequalityGe {
        return Err(Error::InvalidArgument("R4 must hold inequalities".into()));
    }
    let (x1, y1) = invertible_block(sys, r3)?;
    let z = inverse_applied(&x1, &y1)?;
    let dc = PolyVec::outer(&sys.det, &r4.c);
    let rz = PolyVec::from_matrix(&r4.r * &z);
    let polys_v = rz.sub(&dc)?;
    let mag = r4.r.abs() * z.abs();
    let scales = (0..r4.n_rows())
        .map(|i| mag.row(i).amax() + sys.det.scale() * r4.c[i].abs())
        .collect();
    Ok(PolySystem {
        label: r4.label.clone(),
        kind: RestrictionKind::InequalityGe,
        sign: Sign::NonNegative,
        polys: polys_v.to_polys(),
        scales,
    })
}

/// Region of `[0, 1)` satisfying the inequality rows.
pub fn inequality_region_game(
    sys: &GameIdentSystem,
    r3: Option<&RestrictionSet>,
    r4: &RestrictionSet,
    tol: &Tolerances,
) -> Result<IdentifiedSet> {
    let ps = game_inequality_system(sys, r3, r4)?;
    let reg: Vec<Interval<f64>> = region(&ps, tol);
    Ok(IdentifiedSet {
        equality_roots: None,
        inequality_intervals: Some(reg),
        combined: Vec::new(),
        diagnostics: ps.diagnostics(tol),
    })
}

/// `Pi = X_1^{-1} Y_1(beta) / d(beta)`.
pub fn recover_game_payoffs(sys: &GameIdentSystem, r3: Option<&RestrictionSet>, beta: f64) -> Result<DVector<f64>> {
    crate::model::check_beta(beta)?;
    let (x1, y1) = invertible_block(sys, r3)?;
    let y = PolyVec::from_matrix(y1).eval(beta) / sys.det.eval(beta);
    x1.lu()
        .solve(&y)
        .ok_or_else(|| Error::Singular("selected block X_1".into()))
}

/// Roots common to every firm's identified set, for a shared discount factor.
pub fn pooled_roots(sets: &[IdentifiedSet], radius: f64) -> Vec<f64> {
    let Some(first) = sets.first() else {
        return Vec::new();
    };
    first
        .combined
        .iter()
        .copied()
        .filter(|r| sets[1..].iter().all(|s| s.combined.iter().any(|q| (q - r).abs() <= radius)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_bellman, SingleAgentModel};

    fn layout() -> GameLayout {
        GameLayout {
            n_firms: 3,
            n_actions: 2,
            m_s: 3,
        }
    }

    #[test]
    fn index_round_trips() {
        let l = layout();
        assert_eq!(l.m_x(), 24);
        assert_eq!(l.m_pi(), 96);
        for x in 0..l.m_x() {
            let (s, lag) = l.state(x);
            assert_eq!(l.state_index(s, &lag), x);
        }
        for i in 0..3 {
            for a in 0..l.n_profiles() {
                let prof = l.profile(a);
                let o = l.others_index(i, &prof);
                assert_eq!(l.with_own(i, prof[i], o), prof);
            }
        }
        assert_eq!(l.cells().len(), 24);
    }

    #[test]
    fn restriction_counts() {
        let l = layout();
        assert_eq!(r2_irrelevance(&l, 0).n_rows(), 72);
        assert_eq!(r3_exchangeability(&l, 0).n_rows(), 6);
        assert_eq!(r3_adjustment_cost(&l, 1).n_rows(), 9);
        assert_eq!(r4_own_lag(&l, 0).n_rows(), 12);
        assert_eq!(r4_rivals(&l, 0).n_rows(), 24);
        let two = GameLayout { n_firms: 2, ..l };
        assert_eq!(r3_exchangeability(&two, 0).n_rows(), 0);
        let g = GameLayout {
            n_firms: 2,
            n_actions: 2,
            m_s: 1,
        };
        assert_eq!(r2_irrelevance(&g, 0).n_rows(), 4);
    }

    fn one_firm() -> GameModel {
        let ts = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let l = GameLayout {
            n_firms: 1,
            n_actions: 2,
            m_s: 2,
        };
        let payoff = vec![(0..l.n_profiles())
            .map(|a| (0..l.m_x()).map(|x| if a == 0 { 0.3 + 0.2 * x as f64 } else { 0.0 }).collect())
            .collect()];
        GameModel {
            n_firms: 1,
            n_actions: 2,
            s_values: vec![1.0, 2.0],
            s_transition: ts,
            payoff,
            beta: vec![0.9],
            known_reference_payoff: true,
        }
    }

    #[test]
    fn single_firm_game_matches_bellman() {
        let g = one_firm();
        let mpe = solve_mpe(&g, MpeOptions::default(), None).unwrap();
        let e = expected_objects(&g, &mpe.p, 0).unwrap();
        let u: Vec<DVector<f64>> = e.pi_star.row_iter().map(|r| r.transpose()).collect();
        let m = SingleAgentModel::new(u, e.q_star.clone(), 0.9).unwrap();
        let sol = solve_bellman(&m, SolveOptions::default()).unwrap();
        for k in 0..2 {
            let d = (mpe.p[0].row(k).transpose() - &sol.ccps.probabilities()[k]).amax();
            assert!(d < 1e-10, "{d}");
        }
    }

    #[test]
    fn pivoted_rows_pick_independent_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        let r = pivoted_rows(&x, 2);
        assert_eq!(r.len(), 2);
        assert!(r.contains(&2));
    }
}
