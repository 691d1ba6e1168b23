//! Linear restrictions `R U = c` or `R U >= c` on stacked payoffs, built from
//! shape assumptions on a factored state grid.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// One named coordinate of the state, with ascending grid values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Cartesian state grid; the first axis varies fastest in the flat state index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    axes: Vec<Axis>,
}

impl StateGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("state grid needs at least one axis".into()));
        }
        for a in &axes {
            if a.values.is_empty() {
                return Err(Error::InvalidArgument(format!("axis `{}` is empty", a.name)));
            }
            if a.values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "axis `{}` values must be strictly ascending",
                    a.name
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn n_states(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no axis named `{name}`")))
    }

    /// Flat state index of a full coordinate tuple.
    pub fn flat(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.axes.len() {
            return Err(Error::DimensionMismatch {
                what: "state coordinate tuple".into(),
                expected: self.axes.len(),
                found: idx.len(),
            });
        }
        let mut flat = 0;
        let mut stride = 1;
        for (a, &i) in self.axes.iter().zip(idx) {
            if i >= a.len() {
                return Err(Error::IndexOutOfRange {
                    axis: a.name.clone(),
                    index: i,
                    len: a.len(),
                });
            }
            flat += i * stride;
            stride *= a.len();
        }
        Ok(flat)
    }

    /// Inverse of [`StateGrid::flat`].
    pub fn unflat(&self, mut x: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = x % a.len();
                x /= a.len();
                i
            })
            .collect()
    }

    /// Grid index of `value` on `axis`, matched to a relative tolerance of 1e-9.
    pub fn find(&self, axis: usize, value: f64) -> Result<usize> {
        let a = &self.axes[axis];
        a.values
            .iter()
            .position(|v| (v - value).abs() <= 1e-9 * v.abs().max(value.abs()).max(1.0))
            .ok_or_else(|| Error::MissingGridPoint {
                axis: a.name.clone(),
                value,
            })
    }

    /// Every coordinate tuple in flat order with the listed axes pinned to 0.
    fn others(&self, pinned: &[usize]) -> Vec<Vec<usize>> {
        (0..self.n_states())
            .map(|x| self.unflat(x))
            .filter(|t| pinned.iter().all(|&p| t[p] == 0))
            .collect()
    }
}

/// Column layout of the stacked payoff vector over a state grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateIndex {
    grid: StateGrid,
    n_actions: usize,
}

impl StateIndex {
    /// `n_actions` counts every action including the reference action.
    pub fn new(grid: StateGrid, n_actions: usize) -> Result<Self> {
        if n_actions < 2 {
            return Err(Error::InvalidArgument("need at least two actions".into()));
        }
        Ok(Self { grid, n_actions })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of stacked payoff entries, `J (K - 1)`.
    pub fn n_columns(&self) -> usize {
        self.grid.n_states() * (self.n_actions - 1)
    }

    fn check_action(&self, k: usize) -> Result<()> {
        if k + 1 >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                axis: "non-reference action".into(),
                index: k,
                len: self.n_actions - 1,
            });
        }
        Ok(())
    }

    /// Column of `u_k` at a coordinate tuple.
    pub fn column(&self, k: usize, idx: &[usize]) -> Result<usize> {
        self.check_action(k)?;
        Ok(k * self.grid.n_states() + self.grid.flat(idx)?)
    }

    /// Column of `u_k` at a flat state.
    pub fn column_flat(&self, k: usize, x: usize) -> Result<usize> {
        self.check_action(k)?;
        let j = self.grid.n_states();
        if x >= j {
            return Err(Error::IndexOutOfRange {
                axis: "state".into(),
                index: x,
                len: j,
            });
        }
        Ok(k * j + x)
    }
}

/// Whether a set constrains `R U = c` or `R U >= c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionKind {
    Equality,
    InequalityGe,
}

/// A block of linear restrictions on the stacked payoff vector.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionSet {
    pub label: String,
    pub kind: RestrictionKind,
    pub r: DMatrix<f64>,
    pub c: DVector<f64>,
}

/// One sparse row of a serialized restriction set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

/// Serialized form of a [`RestrictionSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseRestrictionSet {
    pub label: String,
    pub kind: RestrictionKind,
    pub c: Vec<f64>,
    pub rows: Vec<SparseRow>,
}

/// Numerical rank with singular values cut at `tol::RANK` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol::RANK * smax).count()
}

/// Indices of a maximal set of linearly independent rows, earliest rows first.
pub fn independent_rows(m: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for (i, row) in m.row_iter().enumerate() {
        let mut v = row.transpose();
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        let n = v.norm();
        if n > tol::RANK.sqrt() * norm0 {
            basis.push(v / n);
            keep.push(i);
        }
    }
    keep
}

impl RestrictionSet {
    pub fn new(label: impl Into<String>, kind: RestrictionKind, r: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if r.nrows() != c.len() {
            return Err(Error::DimensionMismatch {
                what: "restriction right-hand side".into(),
                expected: r.nrows(),
                found: c.len(),
            });
        }
        Ok(Self {
            label: label.into(),
            kind,
            r,
            c,
        })
    }

    /// Empty set with `p` columns.
    pub fn empty(label: impl Into<String>, kind: RestrictionKind, p: usize) -> Self {
        Self {
            label: label.into(),
            kind,
            r: DMatrix::zeros(0, p),
            c: DVector::zeros(0),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.r.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.r.ncols()
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.r)
    }

    pub fn is_full_row_rank(&self) -> bool {
        self.rank() == self.n_rows()
    }

    /// `R u - c`.
    pub fn evaluate(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                what: "stacked payoff length".into(),
                expected: self.n_cols(),
                found: u.len(),
            });
        }
        Ok(&self.r * u - &self.c)
    }

    /// Keeps a maximal independent subset of rows (equalities only; for
    /// inequalities every row is informative and all are kept).
    pub fn filtered(&self) -> Self {
        if self.kind == RestrictionKind::InequalityGe {
            return self.clone();
        }
        let aug = {
            let mut m = DMatrix::zeros(self.n_rows(), self.n_cols() + 1);
            m.columns_mut(0, self.n_cols()).copy_from(&self.r);
            m.set_column(self.n_cols(), &self.c);
            m
        };
        let keep = independent_rows(&aug);
        if keep.len() < self.n_rows() {
            log::warn!(
                "restriction set `{}`: dropped {} dependent rows",
                self.label,
                self.n_rows() - keep.len()
            );
        }
        self.select_rows(&keep)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            label: self.label.clone(),
            kind: self.kind,
            r: self.r.select_rows(rows),
            c: self.c.select_rows(rows),
        }
    }

    /// Row concatenation; the composite is rank filtered.
    pub fn concat(label: impl Into<String>, sets: &[&RestrictionSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let p = first.n_cols();
        let kind = first.kind;
        for s in sets {
            if s.n_cols() != p {
                return Err(Error::DimensionMismatch {
                    what: format!("columns of restriction set `{}`", s.label),
                    expected: p,
                    found: s.n_cols(),
                });
            }
            if s.kind != kind {
                return Err(Error::InvalidArgument(
                    "cannot concatenate equality and inequality sets".into(),
                ));
            }
        }
        let n: usize = sets.iter().map(|s| s.n_rows()).sum();
        let mut r = DMatrix::zeros(n, p);
        let mut c = DVector::zeros(n);
        let mut at = 0;
        for s in sets {
            r.rows_mut(at, s.n_rows()).copy_from(&s.r);
            c.rows_mut(at, s.n_rows()).copy_from(&s.c);
            at += s.n_rows();
        }
        Ok(Self::new(label, kind, r, c)?.filtered())
    }

    pub fn to_sparse(&self) -> SparseRestrictionSet {
        let rows = self
            .r
            .row_iter()
            .map(|row| {
                let (cols, vals) = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .unzip();
                SparseRow { cols, vals }
            })
            .collect();
        SparseRestrictionSet {
            label: self.label.clone(),
            kind: self.kind,
            c: self.c.iter().copied().collect(),
            rows,
        }
    }

    /// Dense form of a sparse set with `p` columns; out-of-range columns are errors.
    pub fn from_sparse(s: &SparseRestrictionSet, p: usize) -> Result<Self> {
        if s.rows.len() != s.c.len() {
            return Err(Error::DimensionMismatch {
                what: format!("right-hand side of `{}`", s.label),
                expected: s.rows.len(),
                found: s.c.len(),
            });
        }
        let mut r = DMatrix::zeros(s.rows.len(), p);
        for (i, row) in s.rows.iter().enumerate() {
            if row.cols.len() != row.vals.len() {
                return Err(Error::DimensionMismatch {
                    what: format!("values in row {i} of `{}`", s.label),
                    expected: row.cols.len(),
                    found: row.vals.len(),
                });
            }
            for (&j, &v) in row.cols.iter().zip(&row.vals) {
                if j >= p {
                    return Err(Error::IndexOutOfRange {
                        axis: format!("column of `{}` row {i}", s.label),
                        index: j,
                        len: p,
                    });
                }
                r[(i, j)] += v;
            }
        }
        Self::new(s.label.clone(), s.kind, r, DVector::from_vec(s.c.clone()))
    }
}

#[derive(Default)]
struct Rows {
    rows: Vec<BTreeMap<usize, f64>>,
    c: Vec<f64>,
}

impl Rows {
    fn push(&mut self, entries: &[(usize, f64)], c: f64) {
        let mut m = BTreeMap::new();
        for &(j, v) in entries {
            *m.entry(j).or_insert(0.0) += v;
        }
        self.rows.push(m);
        self.c.push(c);
    }

    fn build(self, label: &str, kind: RestrictionKind, p: usize) -> RestrictionSet {
        let mut r = DMatrix::zeros(self.rows.len(), p);
        for (i, row) in self.rows.iter().enumerate() {
            for (&j, &v) in row {
                r[(i, j)] = v;
            }
        }
        RestrictionSet {
            label: label.into(),
            kind,
            r,
            c: DVector::from_vec(self.c),
        }
    }
}

fn with(t: &[usize], axis: usize, i: usize) -> Vec<usize> {
    let mut t = t.to_vec();
    t[axis] = i;
    t
}

fn ray_indices(idx: &StateIndex, axis: usize, base: f64, lambdas: &[f64]) -> Result<(usize, Vec<usize>)> {
    let g = idx.grid();
    let b = g.find(axis, base)?;
    let pts = lambdas
        .iter()
        .map(|l| g.find(axis, l * base))
        .collect::<Result<Vec<_>>>()?;
    Ok((b, pts))
}

/// Homogeneity of known degree `nu` along a ray: `u_k(l w, z) - l^nu u_k(w, z) = 0`
/// for each multiplier `l` in `lambdas` (the base multiplier 1 excluded) and
/// every value of the other coordinates.
pub fn homogeneity_known_nu(
    idx: &StateIndex,
    k: usize,
    axis: &str,
    base: f64,
    lambdas: &[f64],
    nu: f64,
) -> Result<RestrictionSet> {
    let a = idx.grid().axis_index(axis)?;
    let (b, pts) = ray_indices(idx, a, base, lambdas)?;
    let mut rows = Rows::default();
    for t in idx.grid().others(&[a]) {
        let cb = idx.column(k, &with(&t, a, b))?;
        for (&l, &pi) in lambdas.iter().zip(&pts) {
            let cl = idx.column(k, &with(&t, a, pi))?;
            rows.push(&[(cl, 1.0), (cb, -l.powf(nu))], 0.0);
        }
    }
    Ok(rows.build("homogeneity", RestrictionKind::Equality, idx.n_columns()))
}

/// Log-homogeneity `u_k(l w, z) = u_k(w, z) + nu log l`. With `nu` unknown the
/// degree is eliminated, `(u(l w) - u(w)) / log l - (u(l_2 w) - u(w)) / log l_2 = 0`,
/// which needs at least two multipliers besides 1; with `nu` known each
/// multiplier gives `u(l w) - u(w) = nu log l`.
pub fn log_homogeneity(
    idx: &StateIndex,
    k: usize,
    axis: &str,
    base: f64,
    lambdas: &[f64],
    nu: Option<f64>,
) -> Result<RestrictionSet> {
    let a = idx.grid().axis_index(axis)?;
    if nu.is_none() && lambdas.len() < 2 {
        return Err(Error::InvalidArgument("insufficient ray points".into()));
    }
    if lambdas.iter().any(|&l| l <= 0.0 || l == 1.0) {
        return Err(Error::InvalidArgument("ray multipliers must be positive and differ from 1".into()));
    }
    let (b, pts) = ray_indices(idx, a, base, lambdas)?;
    let mut rows = Rows::default();
    for t in idx.grid().others(&[a]) {
        let cb = idx.column(k, &with(&t, a, b))?;
        let cols = pts
            .iter()
            .map(|&p| idx.column(k, &with(&t, a, p)))
            .collect::<Result<Vec<_>>>()?;
        match nu {
            Some(nu) => {
                for (&l, &cl) in lambdas.iter().zip(&cols) {
                    rows.push(&[(cl, 1.0), (cb, -1.0)], nu * l.ln());
                }
            }
            None => {
                let w2 = 1.0 / lambdas[0].ln();
                for (&l, &cl) in lambdas.iter().zip(&cols).skip(1) {
                    let wl = 1.0 / l.ln();
                    rows.push(&[(cl, wl), (cb, -wl), (cols[0], -w2), (cb, w2)], 0.0);
                }
            }
        }
    }
    Ok(rows.build("log_homogeneity", RestrictionKind::Equality, idx.n_columns()))
}

/// Additive separability with a part homogeneous of degree `nu` in a scalar
/// coordinate: divided differences of `u_k` in `phi(w) = w^nu` are constant
/// along the axis. For `nu = 1` this is the second-difference form
/// `(u(w3) - u(w2)) / (w3 - w2) - (u(w2) - u(w1)) / (w2 - w1) = 0` over
/// consecutive triplets; other degrees need a positive grid.
pub fn additive_homogeneous(idx: &StateIndex, k: usize, axis: &str, nu: f64) -> Result<RestrictionSet> {
    let a = idx.grid().axis_index(axis)?;
    let vals = &idx.grid().axes()[a].values;
    if vals.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "axis `{axis}` needs at least 3 points, has {}",
            vals.len()
        )));
    }
    let phi: Vec<f64> = if nu == 1.0 {
        vals.clone()
    } else {
        if let Some(v) = vals.iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "degree {nu} needs a positive grid, axis `{axis}` has {v}"
            )));
        }
        vals.iter().map(|v| v.powf(nu)).collect()
    };
    let mut rows = Rows::default();
    for t in idx.grid().others(&[a]) {
        for l in 0..vals.len() - 2 {
            let c0 = idx.column(k, &with(&t, a, l))?;
            let c1 = idx.column(k, &with(&t, a, l + 1))?;
            let c2 = idx.column(k, &with(&t, a, l + 2))?;
            let h2 = 1.0 / (phi[l + 2] - phi[l + 1]);
            let h1 = 1.0 / (phi[l + 1] - phi[l]);
            rows.push(&[(c2, h2), (c1, -h2 - h1), (c0, h1)], 0.0);
        }
    }
    Ok(rows.build("additive_homogeneous", RestrictionKind::Equality, idx.n_columns()))
}

/// Zero cross-difference: `u_k(w_j, z_m) - u_k(w_1, z_m) - u_k(w_j, z_1) + u_k(w_1, z_1) = 0`.
///
/// `w_axes` lists the axes that make up `w`; `w_set` and `z_set` hold index
/// tuples on those axes and on the remaining axes (in grid order).
pub fn zero_cross_difference(
    idx: &StateIndex,
    k: usize,
    w_axes: &[&str],
    w_set: &[Vec<usize>],
    z_set: &[Vec<usize>],
) -> Result<RestrictionSet> {
    if w_set.len() < 2 || z_set.len() < 2 {
        return Err(Error::InvalidArgument(
            "zero cross-difference needs at least two w and two z values".into(),
        ));
    }
    let g = idx.grid();
    let wa = w_axes.iter().map(|n| g.axis_index(n)).collect::<Result<Vec<_>>>()?;
    let za: Vec<usize> = (0..g.axes().len()).filter(|i| !wa.contains(i)).collect();
    let full = |w: &[usize], z: &[usize]| -> Result<Vec<usize>> {
        if w.len() != wa.len() || z.len() != za.len() {
            return Err(Error::DimensionMismatch {
                what: "cross-difference cell tuple".into(),
                expected: wa.len() + za.len(),
                found: w.len() + z.len(),
            });
        }
        let mut t = vec![0; g.axes().len()];
        for (&a, &i) in wa.iter().zip(w) {
            t[a] = i;
        }
        for (&a, &i) in za.iter().zip(z) {
            t[a] = i;
        }
        Ok(t)
    };
    let mut rows = Rows::default();
    for w in &w_set[1..] {
        for z in &z_set[1..] {
            let e = [
                (idx.column(k, &full(w, z)?)?, 1.0),
                (idx.column(k, &full(&w_set[0], z)?)?, -1.0),
                (idx.column(k, &full(w, &z_set[0])?)?, -1.0),
                (idx.column(k, &full(&w_set[0], &z_set[0])?)?, 1.0),
            ];
            rows.push(&e, 0.0);
        }
    }
    Ok(rows.build("zero_cross_difference", RestrictionKind::Equality, idx.n_columns()))
}

/// Exclusion `u_k(x_a) = u_l(x_b)`. Passing the reference action as `l`
/// leaves a single `+1` entry because its payoff is zero.
pub fn exclusion(idx: &StateIndex, (k, xa): (usize, usize), (l, xb): (usize, usize)) -> Result<RestrictionSet> {
    if (k, xa) == (l, xb) {
        return Err(Error::InvalidArgument("exclusion needs two distinct action-state pairs".into()));
    }
    let mut e = vec![(idx.column_flat(k, xa)?, 1.0)];
    if l + 1 != idx.n_actions() {
        e.push((idx.column_flat(l, xb)?, -1.0));
    } else if xb >= idx.grid().n_states() {
        return Err(Error::IndexOutOfRange {
            axis: "state".into(),
            index: xb,
            len: idx.grid().n_states(),
        });
    }
    let mut rows = Rows::default();
    rows.push(&e, 0.0);
    Ok(rows.build("exclusion", RestrictionKind::Equality, idx.n_columns()))
}

/// Weak monotonicity along an axis: `u_k(next) - u_k(cur) >= 0`.
pub fn monotonicity(idx: &StateIndex, k: usize, axis: &str) -> Result<RestrictionSet> {
    let a = idx.grid().axis_index(axis)?;
    let n = idx.grid().axes()[a].len();
    let mut rows = Rows::default();
    for t in idx.grid().others(&[a]) {
        for l in 0..n.saturating_sub(1) {
            let c0 = idx.column(k, &with(&t, a, l))?;
            let c1 = idx.column(k, &with(&t, a, l + 1))?;
            rows.push(&[(c1, 1.0), (c0, -1.0)], 0.0);
        }
    }
    Ok(rows.build("monotonicity", RestrictionKind::InequalityGe, idx.n_columns()))
}

/// Concavity along an axis: the divided first difference does not increase,
/// `(u(l+1) - u(l)) / (w_{l+1} - w_l) - (u(l+2) - u(l+1)) / (w_{l+2} - w_{l+1}) >= 0`.
pub fn concavity(idx: &StateIndex, k: usize, axis: &str) -> Result<RestrictionSet> {
    let a = idx.grid().axis_index(axis)?;
    let vals = &idx.grid().axes()[a].values;
    let mut rows = Rows::default();
    for t in idx.grid().others(&[a]) {
        for l in 0..vals.len().saturating_sub(2) {
            let c0 = idx.column(k, &with(&t, a, l))?;
            let c1 = idx.column(k, &with(&t, a, l + 1))?;
            let c2 = idx.column(k, &with(&t, a, l + 2))?;
            let h1 = 1.0 / (vals[l + 1] - vals[l]);
            let h2 = 1.0 / (vals[l + 2] - vals[l + 1]);
            rows.push(&[(c1, h1 + h2), (c0, -h1), (c2, -h2)], 0.0);
        }
    }
    Ok(rows.build("concavity", RestrictionKind::InequalityGe, idx.n_columns()))
}

/// Direction of a cross-difference inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Complements,
    Substitutes,
}

/// Complementarity between two axes, `u(l+1, m+1) - u(l+1, m) - u(l, m+1) + u(l, m) >= 0`,
/// for every value of the remaining axes. Substitutes flip the sign.
pub fn complementarity(
    idx: &StateIndex,
    k: usize,
    w_axis: &str,
    z_axis: &str,
    direction: Interaction,
) -> Result<RestrictionSet> {
    let g = idx.grid();
    let wa = g.axis_index(w_axis)?;
    let za = g.axis_index(z_axis)?;
    if wa == za {
        return Err(Error::InvalidArgument("complementarity needs two distinct axes".into()));
    }
    let s = match direction {
        Interaction::Complements => 1.0,
        Interaction::Substitutes => -1.0,
    };
    let (nw, nz) = (g.axes()[wa].len(), g.axes()[za].len());
    let mut rows = Rows::default();
    for t in g.others(&[wa, za]) {
        for m in 0..nz.saturating_sub(1) {
            for l in 0..nw.saturating_sub(1) {
                let cell = |dl: usize, dm: usize| idx.column(k, &with(&with(&t, wa, l + dl), za, m + dm));
                rows.push(
                    &[(cell(1, 1)?, s), (cell(1, 0)?, -s), (cell(0, 1)?, -s), (cell(0, 0)?, s)],
                    0.0,
                );
            }
        }
    }
    Ok(rows.build("complementarity", RestrictionKind::InequalityGe, idx.n_columns()))
}

/// Orthonormal basis of the left null space of `h`, as rows: `R H = 0`.
///
/// `h` must have full column rank under the `tol::RANK` singular value cutoff.
pub fn null_space_rows(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, d) = h.shape();
    if d > p {
        return Err(Error::RankDeficient {
            context: "design matrix has more columns than rows".into(),
            rank: numerical_rank(h),
            expected: d,
        });
    }
    if d == 0 {
        return Ok(DMatrix::identity(p, p));
    }
    let svd = h.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol::RANK * smax)
        .count();
    if rank < d {
        return Err(Error::RankDeficient {
            context: "design matrix".into(),
            rank,
            expected: d,
        });
    }
    let u = svd.u.expect("left singular vectors requested");
    let proj = DMatrix::identity(p, p) - &u * u.transpose();
    let eig = SymmetricEigen::new(proj);
    let mut cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(l, _)| **l > 0.5)
        .map(|(_, v)| {
            let v = v.into_owned();
            let imax = v.iamax();
            if v[imax] < 0.0 {
                -v
            } else {
                v
            }
        })
        .collect();
    cols.sort_by_key(|v| v.iamax());
    let mut r = DMatrix::zeros(cols.len(), p);
    for (i, v) in cols.iter().enumerate() {
        r.set_row(i, &v.transpose());
    }
    Ok(r)
}

/// Linear-in-parameters payoff `U = H theta`: the rows of `R` span the left
/// null space of `H`, giving `p - d` orthonormal restrictions `R U = 0`.
pub fn linear_in_parameters(h: &DMatrix<f64>) -> Result<RestrictionSet> {
    let r = null_space_rows(h)?;
    let q = r.nrows();
    RestrictionSet::new("linear_in_parameters", RestrictionKind::Equality, r, DVector::zeros(q))
}

/// A restriction `sum_j r_j log U_j = c` with weights summing to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogDiffRestriction {
    pub label: String,
    pub weights: Vec<f64>,
    pub c: f64,
}

impl LogDiffRestriction {
    pub fn new(label: impl Into<String>, weights: Vec<f64>, c: f64) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        let m = weights.iter().fold(0.0_f64, |a, w| a.max(w.abs())).max(1.0);
        if s.abs() > 1e-12 * m {
            return Err(Error::InvalidArgument(format!("log-difference weights sum to {s}, expected 0")));
        }
        Ok(Self {
            label: label.into(),
            weights,
            c,
        })
    }

    /// `sum_j r_j log u_j - c`; `None` when a weighted entry is not positive.
    pub fn evaluate(&self, u: &DVector<f64>) -> Option<f64> {
        let mut acc = -self.c;
        for (j, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                if u[j] <= 0.0 {
                    return None;
                }
                acc += w * u[j].ln();
            }
        }
        Some(acc)
    }
}

/// Which log-difference construction to build along a ray.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum LogDiffForm {
    /// `u = exp(u_w + u_z)` with `u_w` homogeneous of known degree `nu` in `w`:
    /// `(log u(l w) - log u(w)) / (l^nu - 1)` is the same for every `l`.
    ExpHomogeneous { nu: f64 },
    /// `u` homogeneous of unknown degree: `(log u(l w) - log u(w)) / log l`
    /// is the same for every `l`.
    HomogeneousUnknownDegree,
}

/// Log-difference restrictions along a ray from `base` with multipliers
/// `lambdas` (1 excluded), one per extra multiplier and other-coordinate value.
pub fn log_diff_restrictions(
    idx: &StateIndex,
    k: usize,
    axis: &str,
    base: f64,
    lambdas: &[f64],
    form: LogDiffForm,
) -> Result<Vec<LogDiffRestriction>> {
    let a = idx.grid().axis_index(axis)?;
    if lambdas.len() < 2 {
        return Err(Error::InvalidArgument("insufficient ray points".into()));
    }
    let scale = |l: f64| match form {
        LogDiffForm::ExpHomogeneous { nu } => l.powf(nu) - 1.0,
        LogDiffForm::HomogeneousUnknownDegree => l.ln(),
    };
    if lambdas.iter().any(|&l| l <= 0.0 || scale(l) == 0.0) {
        return Err(Error::InvalidArgument("degenerate ray multiplier".into()));
    }
    let (b, pts) = ray_indices(idx, a, base, lambdas)?;
    let p = idx.n_columns();
    let mut out = Vec::new();
    for t in idx.grid().others(&[a]) {
        let cb = idx.column(k, &with(&t, a, b))?;
        let c2 = idx.column(k, &with(&t, a, pts[0]))?;
        let w2 = 1.0 / scale(lambdas[0]);
        for (&l, &pi) in lambdas.iter().zip(&pts).skip(1) {
            let cl = idx.column(k, &with(&t, a, pi))?;
            let wl = 1.0 / scale(l);
            let mut w = vec![0.0; p];
            w[cl] += wl;
            w[cb] -= wl;
            w[c2] -= w2;
            w[cb] += w2;
            out.push(LogDiffRestriction::new("log_difference", w, 0.0)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid2(w: Vec<f64>, z: Vec<f64>) -> StateIndex {
        StateIndex::new(StateGrid::new(vec![Axis::new("w", w), Axis::new("z", z)]).unwrap(), 2).unwrap()
    }

    fn payoff(idx: &StateIndex, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        let g = idx.grid();
        DVector::from_fn(g.n_states(), |x, _| {
            let t = g.unflat(x);
            f(g.axes()[0].values[t[0]], g.axes()[1].values[t[1]])
        })
    }

    #[test]
    fn flat_index_round_trip() {
        let g = StateGrid::new(vec![Axis::new("a", vec![0.0, 1.0, 2.0]), Axis::new("b", vec![0.0, 1.0])]).unwrap();
        for x in 0..6 {
            assert_eq!(g.flat(&g.unflat(x)).unwrap(), x);
        }
        assert_eq!(g.flat(&[1, 1]).unwrap(), 4);
        assert!(matches!(g.flat(&[3, 0]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn known_degree_homogeneity() {
        let idx = grid2(vec![1.0, 2.0], vec![0.5]);
        let rs = homogeneity_known_nu(&idx, 0, "w", 1.0, &[2.0], 1.0).unwrap();
        assert_eq!(rs.n_rows(), 1);
        assert_eq!(rs.r[(0, 1)], 1.0);
        assert_eq!(rs.r[(0, 0)], -2.0);

        let idx = grid2(vec![1.0, 2.0, 4.0], vec![0.5, 1.0, 3.0]);
        let rs = homogeneity_known_nu(&idx, 0, "w", 1.0, &[2.0, 4.0], 2.0).unwrap();
        assert_eq!(rs.n_rows(), 6);
        let u = payoff(&idx, |w, z| z * w * w);
        assert!(rs.evaluate(&u).unwrap().amax() < 1e-12);
        assert!(matches!(
            homogeneity_known_nu(&idx, 0, "w", 1.0, &[3.0], 1.0),
            Err(Error::MissingGridPoint { .. })
        ));
    }

    #[test]
    fn log_homogeneity_rows() {
        let idx = grid2(vec![1.0, 2.0, 4.0], vec![0.5, 3.0]);
        let rs = log_homogeneity(&idx, 0, "w", 1.0, &[2.0, 4.0], None).unwrap();
        assert_eq!(rs.n_rows(), 2);
        let u = payoff(&idx, |w, z| (z * w.powf(1.7)).ln());
        assert!(rs.evaluate(&u).unwrap().amax() < 1e-12);
        let bad = payoff(&idx, |w, z| z * w * w + w.sin());
        assert!(rs.evaluate(&bad).unwrap().amax() > 1e-3);
        assert!(log_homogeneity(&idx, 0, "w", 1.0, &[2.0], None).is_err());
        let known = log_homogeneity(&idx, 0, "w", 1.0, &[2.0, 4.0], Some(1.7)).unwrap();
        assert_eq!(known.n_rows(), 4);
        assert!(known.evaluate(&u).unwrap().amax() < 1e-12);
    }

    #[test]
    fn second_difference_form() {
        let idx = grid2(vec![-1.0, 0.0, 1.5], vec![0.0, 1.0]);
        let rs = additive_homogeneous(&idx, 0, "w", 1.0).unwrap();
        assert_eq!(rs.n_rows(), 2);
        let u = payoff(&idx, |w, z| 1.0 + z.exp() * (0.5 + w));
        assert!(rs.evaluate(&u).unwrap().amax() < 1e-12);
        let bad = payoff(&idx, |w, z| 1.0 + z.exp() * (0.5 + w) + w * w);
        assert!(rs.evaluate(&bad).unwrap().amax() > 0.1);
        let idx2 = grid2(vec![1.0, 2.0], vec![0.0]);
        assert!(additive_homogeneous(&idx2, 0, "w", 1.0).is_err());
    }

    #[test]
    fn cross_difference_rows() {
        let idx = grid2(vec![0.0, 1.0, 2.0], vec![-1.0, 0.5]);
        let w_set = vec![vec![0], vec![1], vec![2]];
        let z_set = vec![vec![0], vec![1]];
        let rs = zero_cross_difference(&idx, 0, &["w"], &w_set, &z_set).unwrap();
        assert_eq!(rs.n_rows(), 2);
        let sep = payoff(&idx, |w, z| w.exp() + z * z);
        assert!(rs.evaluate(&sep).unwrap().amax() < 1e-12);
        let nonsep = payoff(&idx, |w, z| w.exp() * if z >= 0.0 { 1.0 } else { 0.0 });
        assert!(rs.evaluate(&nonsep).unwrap().amax() > 0.1);
    }

    #[test]
    fn exclusion_rows() {
        let idx = StateIndex::new(StateGrid::new(vec![Axis::new("x", vec![0.0, 1.0])]).unwrap(), 3).unwrap();
        assert!(exclusion(&idx, (0, 1), (0, 1)).is_err());
        let rs = exclusion(&idx, (0, 1), (2, 0)).unwrap();
        assert_eq!(rs.r.iter().filter(|v| **v != 0.0).count(), 1);
        let rs = exclusion(&idx, (0, 0), (1, 1)).unwrap();
        assert_eq!(rs.r[(0, 0)], 1.0);
        assert_eq!(rs.r[(0, 3)], -1.0);
    }

    #[test]
    fn shape_inequalities() {
        let idx = grid2(vec![0.0, 1.0, 2.0], vec![-1.0, 0.0, 2.0]);
        let mono = monotonicity(&idx, 0, "z").unwrap();
        assert_eq!(mono.n_rows(), 6);
        let conc = concavity(&idx, 0, "z").unwrap();
        assert_eq!(conc.n_rows(), 3);
        let u = payoff(&idx, |w, z| -z * z + w);
        assert!(conc.evaluate(&u).unwrap().min() >= 0.0);
        let lin = payoff(&idx, |w, z| 2.0 * z + w);
        assert!(conc.evaluate(&lin).unwrap().amax() < 1e-12);
        let convex = payoff(&idx, |_, z| z.exp());
        assert!(conc.evaluate(&convex).unwrap().min() < 0.0);
        assert!(mono.evaluate(&convex).unwrap().min() > 0.0);

        let comp = complementarity(&idx, 0, "w", "z", Interaction::Complements).unwrap();
        assert_eq!(comp.n_rows(), 4);
        let sup = payoff(&idx, |w, z| w * z.exp());
        assert!(comp.evaluate(&sup).unwrap().min() > 0.0);
        let sep = payoff(&idx, |w, z| w * w + z);
        assert!(comp.evaluate(&sep).unwrap().amax() < 1e-12);
        let subs = complementarity(&idx, 0, "w", "z", Interaction::Substitutes).unwrap();
        assert_eq!(subs.r, -comp.r);
    }

    #[test]
    fn null_space_of_design() {
        let h = DMatrix::from_fn(7, 3, |i, j| ((i + 1) as f64).powi(j as i32));
        let rs = linear_in_parameters(&h).unwrap();
        assert_eq!(rs.n_rows(), 4);
        assert!((&rs.r * &h).amax() < 1e-10);
        assert!((&rs.r * rs.r.transpose() - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert_eq!(linear_in_parameters(&DMatrix::identity(4, 4)).unwrap().n_rows(), 0);
        let mut bad = h.clone();
        bad.set_column(2, &(h.column(0) * 2.0));
        assert!(matches!(linear_in_parameters(&bad), Err(Error::RankDeficient { rank: 2, .. })));
    }

    #[test]
    fn log_difference_weights() {
        let idx = grid2(vec![1.0, 2.0, 4.0], vec![0.3]);
        let rs = log_diff_restrictions(&idx, 0, "w", 1.0, &[2.0, 4.0], LogDiffForm::HomogeneousUnknownDegree).unwrap();
        assert_eq!(rs.len(), 1);
        let w = &rs[0].weights;
        assert_relative_eq!(w[2], 1.0 / 4f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(w[1], -1.0 / 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(w[0], -1.0 / 4f64.ln() + 1.0 / 2f64.ln(), epsilon = 1e-15);
        assert!(w.iter().sum::<f64>().abs() < 1e-12);
        let u = payoff(&idx, |w, z| z * w.powf(2.3));
        assert!(rs[0].evaluate(&u).unwrap().abs() < 1e-12);
        assert!(rs[0].evaluate(&DVector::from_element(3, 2.0)).unwrap().abs() < 1e-12);
        assert!(LogDiffRestriction::new("x", vec![1.0, 1.0], 0.0).is_err());

        let e = log_diff_restrictions(&idx, 0, "w", 1.0, &[2.0, 4.0], LogDiffForm::ExpHomogeneous { nu: 1.0 }).unwrap();
        let u = payoff(&idx, |w, z| (0.4 * w + z).exp());
        assert!(e[0].evaluate(&u).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sparse_round_trip_and_concat() {
        let idx = grid2(vec![0.0, 1.0, 2.0], vec![-1.0, 0.0, 2.0]);
        let rs = additive_homogeneous(&idx, 0, "w", 1.0).unwrap();
        let sp = rs.to_sparse();
        let json = serde_json::to_string(&sp).unwrap();
        let back: SparseRestrictionSet = serde_json::from_str(&json).unwrap();
        assert_eq!(RestrictionSet::from_sparse(&back, idx.n_columns()).unwrap(), rs);
        assert!(RestrictionSet::from_sparse(&back, 4).is_err());
        let both = RestrictionSet::concat("both", &[&rs, &rs]).unwrap();
        assert_eq!(both.n_rows(), rs.n_rows());
        assert!(both.is_full_row_rank());
    }
}
