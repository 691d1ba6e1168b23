//! Polynomials in the discount factor, matrix polynomials, the
//! adjugate/determinant expansion of `I - beta Q`, real-root isolation on an
//! interval and sign-region scans.
//!
//! Everything here is generic over the scalar type; the rest of the crate
//! instantiates it at `f64`.

use std::fmt::{Debug, Display};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::Tolerances;

/// Scalar types the polynomial kernel works with.
pub trait Real: RealField + Float + FromPrimitive + Copy + Debug + Display + 'static {}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
fn abs<T: Real>(x: T) -> T {
    Float::abs(x)
}

#[inline]
fn max<T: Real>(a: T, b: T) -> T {
    Float::max(a, b)
}

#[inline]
fn to_f64<T: Real>(x: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// Polynomial with coefficients in ascending powers of beta.
///
/// Trailing exact zeros are trimmed, so the zero polynomial has no coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de> + Real"))]
#[serde(from = "Vec<T>", into = "Vec<T>")]
pub struct Poly<T: Real> {
    coeffs: Vec<T>,
}

impl<T: Real> From<Vec<T>> for Poly<T> {
    fn from(coeffs: Vec<T>) -> Self {
        Self::new(coeffs)
    }
}

impl<T: Real> From<Poly<T>> for Vec<T> {
    fn from(p: Poly<T>) -> Self {
        p.coeffs
    }
}

impl<T: Real> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(|c| *c == T::zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Self::new(vec![c])
    }

    /// `c * beta^degree`.
    pub fn monomial(degree: usize, c: T) -> Self {
        let mut coeffs = vec![T::zero(); degree + 1];
        coeffs[degree] = c;
        Self::new(coeffs)
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[T]) -> Self {
        roots.iter().fold(Self::constant(T::one()), |acc, &r| {
            &acc * &Self::new(vec![-r, T::one()])
        })
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient of `beta^k`, zero past the degree.
    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).copied().unwrap_or_else(T::zero)
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation.
    pub fn eval(&self, beta: T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, &c| acc * beta + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * lit::<T>(k as f64))
                .collect(),
        )
    }

    /// Largest absolute coefficient.
    pub fn scale(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, &c| max(m, abs(c)))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Divided by its largest absolute coefficient; zero stays zero.
    pub fn normalized(&self) -> Self {
        let s = self.scale();
        if s == T::zero() {
            self.clone()
        } else {
            self.scaled(T::one() / s)
        }
    }

    /// True when every coefficient is at most `tol * reference` in magnitude.
    pub fn is_negligible(&self, tol: T, reference: T) -> bool {
        self.coeffs.iter().all(|&c| abs(c) <= tol * reference)
    }

    /// Drops leading coefficients at or below `tol` times the scale.
    pub fn trim_leading(&self, tol: T) -> Self {
        let thr = tol * self.scale();
        let mut c = self.coeffs.clone();
        while c.last().is_some_and(|x| abs(*x) <= thr) {
            c.pop();
        }
        Self::new(c)
    }

    /// Converts the coefficients to another scalar type.
    pub fn cast<U: Real>(&self) -> Poly<U> {
        Poly::new(self.coeffs.iter().map(|&c| lit::<U>(to_f64(c))).collect())
    }
}

impl<T: Real> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl<T: Real> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl<T: Real> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: &Poly<T>) -> Poly<T> {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

impl<T: Real> Neg for &Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        self.scaled(-T::one())
    }
}

/// Matrix polynomial `sum_k C_k beta^k` with square or rectangular coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MatPoly<T: Real> {
    coeffs: Vec<DMatrix<T>>,
}

impl<T: Real> MatPoly<T> {
    /// All coefficient matrices must share one shape.
    pub fn new(coeffs: Vec<DMatrix<T>>) -> Result<Self> {
        if let Some(first) = coeffs.first() {
            let shape = first.shape();
            if let Some(bad) = coeffs.iter().find(|c| c.shape() != shape) {
                return Err(Error::DimensionMismatch {
                    what: "matrix polynomial coefficient rows".into(),
                    expected: shape.0,
                    found: bad.nrows(),
                });
            }
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[DMatrix<T>] {
        &self.coeffs
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs.first().map_or((0, 0), |c| c.shape())
    }

    pub fn eval(&self, beta: T) -> DMatrix<T> {
        let (r, c) = self.shape();
        self.coeffs
            .iter()
            .rev()
            .fold(DMatrix::zeros(r, c), |acc, m| acc * beta + m)
    }

    /// `M(beta) v` as a vector of polynomials.
    pub fn mul_vec(&self, v: &DVector<T>) -> PolyVec<T> {
        let rows = self.shape().0;
        let mut out = DMatrix::zeros(rows, self.coeffs.len().max(1));
        for (k, m) in self.coeffs.iter().enumerate() {
            out.set_column(k, &(m * v));
        }
        PolyVec::from_matrix(out)
    }

    /// `A M(beta)` for a constant matrix `A`.
    pub fn pre_mul(&self, a: &DMatrix<T>) -> MatPoly<T> {
        MatPoly {
            coeffs: self.coeffs.iter().map(|m| a * m).collect(),
        }
    }
}

/// Column of polynomials stored as a coefficient matrix: row `i` holds the
/// ascending coefficients of entry `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVec<T: Real> {
    coeffs: DMatrix<T>,
}

impl<T: Real> PolyVec<T> {
    pub fn from_matrix(coeffs: DMatrix<T>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(len: usize, degree: usize) -> Self {
        Self::from_matrix(DMatrix::zeros(len, degree + 1))
    }

    pub fn from_polys(polys: &[Poly<T>]) -> Self {
        let width = polys.iter().map(|p| p.coeffs.len()).max().unwrap_or(0).max(1);
        let mut m = DMatrix::zeros(polys.len(), width);
        for (i, p) in polys.iter().enumerate() {
            for (k, &c) in p.coeffs.iter().enumerate() {
                m[(i, k)] = c;
            }
        }
        Self::from_matrix(m)
    }

    /// `p(beta) v` for a scalar polynomial and constant vector.
    pub fn outer(p: &Poly<T>, v: &DVector<T>) -> Self {
        let width = p.coeffs.len().max(1);
        let mut m = DMatrix::zeros(v.len(), width);
        for (k, &c) in p.coeffs.iter().enumerate() {
            m.set_column(k, &(v * c));
        }
        Self::from_matrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }

    /// Upper bound on the degree of every entry.
    pub fn degree_bound(&self) -> usize {
        self.coeffs.ncols().saturating_sub(1)
    }

    pub fn get(&self, i: usize) -> Poly<T> {
        Poly::new(self.coeffs.row(i).iter().copied().collect())
    }

    pub fn to_polys(&self) -> Vec<Poly<T>> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn eval(&self, beta: T) -> DVector<T> {
        let mut out = DVector::zeros(self.len());
        for k in (0..self.coeffs.ncols()).rev() {
            out = out * beta + self.coeffs.column(k);
        }
        out
    }

    /// `A v(beta)` for a constant matrix `A`.
    pub fn left_mul(&self, a: &DMatrix<T>) -> Self {
        Self::from_matrix(a * &self.coeffs)
    }

    fn padded(&self, width: usize) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.len(), width);
        m.columns_mut(0, self.coeffs.ncols()).copy_from(&self.coeffs);
        m
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, T::one())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, -T::one())
    }

    fn combine(&self, other: &Self, sign: T) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                what: "polynomial vector length".into(),
                expected: self.len(),
                found: other.len(),
            });
        }
        let w = self.coeffs.ncols().max(other.coeffs.ncols());
        Ok(Self::from_matrix(self.padded(w) + other.padded(w) * sign))
    }

    /// Stacks `self` on top of `other`.
    pub fn stack(&self, other: &Self) -> Self {
        let w = self.coeffs.ncols().max(other.coeffs.ncols());
        let mut m = DMatrix::zeros(self.len() + other.len(), w);
        m.rows_mut(0, self.len()).copy_from(&self.padded(w));
        m.rows_mut(self.len(), other.len()).copy_from(&other.padded(w));
        Self::from_matrix(m)
    }
}

fn check_stochastic<T: Real>(q: &DMatrix<T>, name: &str) -> Result<()> {
    if !q.is_square() {
        return Err(Error::NotSquare {
            name: name.into(),
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    let tol = Float::max(
        crate::tol::STOCHASTIC,
        64.0 * to_f64(<T as Float>::epsilon()) * q.ncols() as f64,
    );
    for (i, row) in q.row_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v < T::zero() {
                return Err(Error::NegativeEntry {
                    name: name.into(),
                    row: i,
                    col: j,
                    value: to_f64(v),
                });
            }
        }
        let s = to_f64(row.sum());
        if (s - 1.0).abs() > tol {
            return Err(Error::NotStochastic {
                name: name.into(),
                row: i,
                sum: s,
            });
        }
    }
    Ok(())
}

/// `adj(I - beta Q)` (degree `J - 1`) and `det(I - beta Q)` (degree `J`) for a
/// row-stochastic `Q`, via the Faddeev-LeVerrier recursion.
pub fn adjugate_expansion<T: Real>(q: &DMatrix<T>) -> Result<(MatPoly<T>, Poly<T>)> {
    check_stochastic(q, "Q")?;
    faddeev_leverrier(q)
}

/// The same expansion for any square matrix, without the stochastic check.
///
/// With `A_0 = I`, `d_0 = 1`, the recursion is `d_j = -tr(Q A_{j-1}) / j`,
/// `A_j = Q A_{j-1} + d_j I`; then `adj(I - beta Q) = sum_j A_j beta^j` and
/// `det(I - beta Q) = sum_j d_j beta^j`.
pub fn faddeev_leverrier<T: Real>(q: &DMatrix<T>) -> Result<(MatPoly<T>, Poly<T>)> {
    if !q.is_square() {
        return Err(Error::NotSquare {
            name: "Q".into(),
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    let n = q.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty transition matrix".into()));
    }
    let id = DMatrix::<T>::identity(n, n);
    let mut adj = Vec::with_capacity(n);
    let mut det = Vec::with_capacity(n + 1);
    let mut a = id.clone();
    det.push(T::one());
    for j in 1..=n {
        let qa = q * &a;
        let d = -qa.trace() / lit::<T>(j as f64);
        det.push(d);
        adj.push(a);
        a = qa + &id * d;
    }
    Ok((MatPoly::new(adj)?, Poly::new(det)))
}

fn newton<T: Real>(p: &Poly<T>, dp: &Poly<T>, x0: T, lo: T, hi: T) -> T {
    let mut x = x0;
    for _ in 0..60 {
        let d = dp.eval(x);
        if d == T::zero() {
            break;
        }
        let step = p.eval(x) / d;
        let next = x - step;
        if !Float::is_finite(next) || next < lo - lit(0.5) || next > hi + lit(0.5) {
            return x0;
        }
        x = next;
        if abs(step) <= <T as Float>::epsilon() * max(T::one(), abs(x)) {
            break;
        }
    }
    x
}

fn bisect<T: Real, F: Fn(T) -> bool>(mut a: T, mut b: T, fa: bool, f: F, width: T) -> T {
    // f(a) == fa, f(b) != fa
    let mut it = 0;
    while abs(b - a) > width && it < 200 {
        let m = (a + b) / lit(2.0);
        if f(m) == fa {
            a = m;
        } else {
            b = m;
        }
        it += 1;
    }
    (a + b) / lit(2.0)
}

fn grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let step = (hi - lo) / lit::<T>(n as f64);
    (0..n).map(|i| lo + step * lit::<T>(i as f64)).collect()
}

fn sign_change_roots<T: Real>(p: &Poly<T>, lo: T, hi: T, n: usize, width: T) -> Vec<T> {
    let xs = grid(lo, hi, n.max(2));
    let vals: Vec<T> = xs.iter().map(|&x| p.eval(x)).collect();
    let mut out = Vec::new();
    for i in 0..xs.len() {
        if vals[i] == T::zero() {
            out.push(xs[i]);
            continue;
        }
        let (xb, vb) = if i + 1 < xs.len() {
            (xs[i + 1], vals[i + 1])
        } else {
            (hi, p.eval(hi))
        };
        if vb != T::zero() && (vals[i] > T::zero()) != (vb > T::zero()) {
            let pos = vals[i] > T::zero();
            out.push(bisect(xs[i], xb, pos, |x| p.eval(x) > T::zero(), width));
        }
    }
    out
}

fn companion_candidates<T: Real>(p: &Poly<T>, tol: &Tolerances) -> Vec<T> {
    let n = match p.degree() {
        Some(n) if n >= 1 => n,
        _ => return Vec::new(),
    };
    let lead = p.coeffs[n];
    let mut c = DMatrix::<T>::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = T::one();
    }
    for i in 0..n {
        c[(i, n - 1)] = -p.coeffs[i] / lead;
    }
    let Some(schur) = c.try_schur(T::default_epsilon(), 10_000 * n) else {
        return Vec::new();
    };
    schur
        .complex_eigenvalues()
        .iter()
        .filter(|z| to_f64(abs(z.im)) <= tol.root_imag * Float::max(1.0, to_f64(abs(z.re))))
        .map(|z| z.re)
        .collect()
}

/// Real roots of `p` in `[lo, hi)`, sorted and deduplicated.
///
/// Candidates come from the companion-matrix eigenvalues, a sign-change scan
/// of `p` and a sign-change scan of `p'` (for even-multiplicity roots). Each
/// candidate is polished by Newton's method and accepted when
/// `|p(r)| / max|coef| <= tol.root_residual`. Roots within `tol.root_cluster`
/// of `hi` are excluded, so a root at an excluded endpoint is never reported
/// through rounding. Errors with [`Error::Uninformative`] when `p` is zero.
pub fn roots_in_interval<T: Real>(p: &Poly<T>, lo: T, hi: T, tol: &Tolerances) -> Result<Vec<T>> {
    if p.is_zero() {
        return Err(Error::Uninformative);
    }
    let q = p.normalized().trim_leading(lit::<T>(64.0) * <T as Float>::epsilon());
    if q.degree().unwrap_or(0) == 0 {
        return Ok(Vec::new());
    }
    let dq = q.derivative();
    let width: T = lit(tol.bisection.min(1e-12));
    let mut cands = companion_candidates(&q, tol);
    cands.extend(sign_change_roots(&q, lo, hi, tol.grid_points, width));
    cands.extend(sign_change_roots(&dq, lo, hi, tol.grid_points, width));

    let cluster: T = lit(tol.root_cluster);
    let resid_tol: T = lit(tol.root_residual);
    let mut accepted: Vec<(T, T)> = Vec::new();
    for c in cands {
        let mut r = newton(&q, &dq, c, lo, hi);
        if abs(q.eval(r)) > abs(q.eval(c)) {
            r = c;
        }
        if r < lo - cluster || r >= hi - cluster {
            continue;
        }
        if r < lo {
            r = lo;
        }
        let res = abs(q.eval(r));
        if res <= resid_tol {
            accepted.push((r, res));
        }
    }
    accepted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<(T, T)> = Vec::new();
    for (r, res) in accepted {
        match out.last_mut() {
            Some(last) if abs(r - last.0) <= cluster => {
                if res < last.1 {
                    *last = (r, res);
                }
            }
            _ => out.push((r, res)),
        }
    }
    Ok(out.into_iter().map(|(r, _)| r).collect())
}

/// Which sign a polynomial must have inside a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    /// `p(beta) >= 0`
    NonNegative,
    /// `p(beta) <= 0`
    NonPositive,
}

/// Closed interval `[lo, hi]`; when `hi` equals the upper end of the scanned
/// domain the interval is open there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn contains(&self, x: T, slack: T) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// The set of `beta` in `[lo, hi)` where every polynomial has the requested
/// sign, as a sorted list of disjoint intervals.
///
/// Each polynomial is normalized by its largest coefficient and a point
/// passes when `s * p(beta) >= -tol.uninformative`. The domain is scanned on
/// `tol.grid_points` equispaced points and every boundary is refined by
/// bisection to `tol.bisection`.
pub fn sign_region<T: Real>(
    polys: &[Poly<T>],
    sign: Sign,
    lo: T,
    hi: T,
    tol: &Tolerances,
) -> Vec<Interval<T>> {
    let normed: Vec<Poly<T>> = polys.iter().map(|p| p.normalized()).collect();
    let s = match sign {
        Sign::NonNegative => T::one(),
        Sign::NonPositive => -T::one(),
    };
    let slack: T = lit(tol.uninformative);
    let ok = |x: T| normed.iter().all(|p| s * p.eval(x) >= -slack);
    let xs = grid(lo, hi, tol.grid_points.max(2));
    let flags: Vec<bool> = xs.iter().map(|&x| ok(x)).collect();
    let width: T = lit(tol.bisection);
    let mut out = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        if !flags[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < xs.len() && flags[i + 1] {
            i += 1;
        }
        let a = if start == 0 {
            lo
        } else {
            bisect(xs[start - 1], xs[start], false, ok, width)
        };
        let b = if i + 1 == xs.len() {
            hi
        } else {
            bisect(xs[i], xs[i + 1], true, ok, width)
        };
        out.push(Interval { lo: a, hi: b });
        i += 1;
    }
    out
}

/// Result of eliminating leading coefficients across a polynomial system.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduced<T: Real> {
    /// Transformed system, same length and row order as the input.
    pub polys: Vec<Poly<T>>,
    /// Smallest degree among the nonzero members, `None` if all vanish.
    pub min_degree: Option<usize>,
}

/// Gauss-Jordan elimination on the coefficient matrix ordered by descending
/// power. The transformed system spans the same space as the input, so it
/// has the same common roots, and its lowest-degree member has degree at
/// most `J - q + 1` for `q` independent members of degree `J`.
pub fn reduce_degree<T: Real>(polys: &[Poly<T>]) -> Reduced<T> {
    let deg = polys.iter().filter_map(|p| p.degree()).max().unwrap_or(0);
    let n = polys.len();
    let w = deg + 1;
    let mut m = DMatrix::<T>::zeros(n, w);
    for (i, p) in polys.iter().enumerate() {
        for (k, &c) in p.coeffs().iter().enumerate() {
            m[(i, deg - k)] = c;
        }
    }
    let scale = m.iter().fold(T::zero(), |a, &c| max(a, abs(c)));
    let thr = lit::<T>(crate::tol::PIVOT) * scale;
    let mut used = vec![false; n];
    for col in 0..w {
        let piv = (0..n)
            .filter(|&r| !used[r])
            .max_by(|&a, &b| {
                abs(m[(a, col)])
                    .partial_cmp(&abs(m[(b, col)]))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            });
        let Some(piv) = piv else { break };
        if abs(m[(piv, col)]) <= thr {
            continue;
        }
        used[piv] = true;
        let pr = m.row(piv).clone_owned();
        for r in 0..n {
            if r == piv {
                continue;
            }
            let f = m[(r, col)] / pr[col];
            if f != T::zero() {
                let new = m.row(r) - pr.clone() * f;
                m.set_row(r, &new);
                m[(r, col)] = T::zero();
            }
        }
    }
    let tiny = lit::<T>(crate::tol::UNINFORMATIVE) * scale;
    let out: Vec<Poly<T>> = (0..n)
        .map(|i| {
            let mut c: Vec<T> = (0..w).map(|k| m[(i, deg - k)]).collect();
            if c.iter().all(|x| abs(*x) <= tiny) {
                c.clear();
            }
            Poly::new(c)
        })
        .collect();
    let min_degree = out.iter().filter_map(|p| p.degree()).min();
    Reduced {
        polys: out,
        min_degree,
    }
}
