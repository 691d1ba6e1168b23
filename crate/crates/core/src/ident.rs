//! Identified sets for the discount factor of a single agent: common roots of
//! equality systems, sign regions of inequality systems, their intersection,
//! log-difference restrictions and the finite dependence specialization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MasterSystem;
use crate::poly::{roots_in_interval, sign_region, Interval, Poly, Sign};
use crate::restrictions::{LogDiffRestriction, RestrictionKind, RestrictionSet};
use crate::tol::{self, Tolerances};

/// A labelled family of polynomials in beta with a magnitude per member.
///
/// For inequality systems `sign` is the sign every member must have.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySystem {
    pub label: String,
    pub kind: RestrictionKind,
    pub sign: Sign,
    pub polys: Vec<Poly<f64>>,
    /// Cancellation-free magnitude of each member, used for the zero test.
    pub scales: Vec<f64>,
}

/// Per-polynomial diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyDiagnostic {
    pub label: String,
    pub row: usize,
    /// Degree after dropping leading coefficients below 1e-10 of the largest.
    pub degree: Option<usize>,
    pub scale: f64,
    pub uninformative: bool,
    /// `|p(1)| / max|coef|`.
    pub value_at_one: f64,
}

impl PolySystem {
    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// True when member `i` is identically zero up to `tol.uninformative` of its scale.
    pub fn is_uninformative(&self, i: usize, tol: &Tolerances) -> bool {
        let s = self.scales[i].max(self.polys[i].scale());
        self.polys[i].is_negligible(tol.uninformative, s)
    }

    /// Indices of the informative members.
    pub fn informative(&self, tol: &Tolerances) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_uninformative(i, tol)).collect()
    }

    pub fn diagnostics(&self, tol: &Tolerances) -> Vec<PolyDiagnostic> {
        self.polys
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let unin = self.is_uninformative(i, tol);
                let m = p.scale();
                PolyDiagnostic {
                    label: self.label.clone(),
                    row: i,
                    degree: if unin { None } else { p.trim_leading(1e-10).degree() },
                    scale: self.scales[i],
                    uninformative: unin,
                    value_at_one: if m > 0.0 { p.eval(1.0).abs() / m } else { 0.0 },
                }
            })
            .collect()
    }
}

/// Identified set for beta on `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedSet {
    /// Common roots of the equality system, if one was imposed.
    pub equality_roots: Option<Vec<f64>>,
    /// Region allowed by the inequality system, if one was imposed; an
    /// interval ending at 1 is open there.
    pub inequality_intervals: Option<Vec<Interval<f64>>>,
    /// Equality roots inside the inequality region.
    pub combined: Vec<f64>,
    pub diagnostics: Vec<PolyDiagnostic>,
}

impl IdentifiedSet {
    fn from_parts(
        roots: Option<Vec<f64>>,
        region: Option<Vec<Interval<f64>>>,
        diagnostics: Vec<PolyDiagnostic>,
    ) -> Self {
        let combined = match (&roots, &region) {
            (Some(r), Some(reg)) => r
                .iter()
                .copied()
                .filter(|b| reg.iter().any(|iv| iv.contains(*b, 1e-8)))
                .collect(),
            (Some(r), None) => r.clone(),
            _ => Vec::new(),
        };
        Self {
            equality_roots: roots,
            inequality_intervals: region,
            combined,
            diagnostics,
        }
    }
}

fn require_kind(rs: &RestrictionSet, kind: RestrictionKind) -> Result<()> {
    if rs.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "restriction set `{}` has kind {:?}, expected {:?}",
            rs.label, rs.kind, kind
        )));
    }
    Ok(())
}

/// Members `det c - R G(beta)` of the stacked system for a restriction set.
///
/// At the true discount factor equality rows vanish; inequality rows
/// (stored as `R U >= c`) are nonpositive.
pub fn restriction_system(master: &MasterSystem, rs: &RestrictionSet) -> Result<PolySystem> {
    let (polys, scales) = master.row_polys(&rs.r, &rs.c)?;
    Ok(PolySystem {
        label: rs.label.clone(),
        kind: rs.kind,
        sign: Sign::NonPositive,
        polys,
        scales,
    })
}

/// Common roots in `[0, 1)` of the informative members.
///
/// Every root of every member is a candidate; a candidate is kept when each
/// member's normalized value there is at most `tol.common_root`.
/// Errors when every member is identically zero.
pub fn common_roots(sys: &PolySystem, tol: &Tolerances) -> Result<Vec<f64>> {
    let live = sys.informative(tol);
    if live.is_empty() {
        return Err(Error::NoIdentifyingContent);
    }
    for i in (0..sys.len()).filter(|i| !live.contains(i)) {
        log::warn!("`{}` row {i} is identically zero and carries no information", sys.label);
    }
    let normed: Vec<Poly<f64>> = live.iter().map(|&i| sys.polys[i].normalized()).collect();
    let mut cands = Vec::new();
    for p in &normed {
        cands.extend(roots_in_interval(p, 0.0, 1.0, tol)?);
    }
    let mut ok: Vec<(f64, f64)> = cands
        .into_iter()
        .filter_map(|r| {
            let worst = normed.iter().map(|p| p.eval(r).abs()).fold(0.0, f64::max);
            (worst <= tol.common_root).then_some((r, worst))
        })
        .collect();
    ok.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (r, w) in ok {
        match out.last_mut() {
            Some(last) if (r - last.0).abs() <= tol.root_cluster.max(1e-6) => {
                if w < last.1 {
                    *last = (r, w);
                }
            }
            _ => out.push((r, w)),
        }
    }
    Ok(out.into_iter().map(|(r, _)| r).collect())
}

/// Region of `[0, 1)` where every informative member has the system's sign.
pub fn region(sys: &PolySystem, tol: &Tolerances) -> Vec<Interval<f64>> {
    let live: Vec<Poly<f64>> = sys.informative(tol).into_iter().map(|i| sys.polys[i].clone()).collect();
    sign_region(&live, sys.sign, 0.0, 1.0, tol)
}

/// Common roots of the equality system built from `rs`.
pub fn equality_identified_set(master: &MasterSystem, rs: &RestrictionSet, tol: &Tolerances) -> Result<IdentifiedSet> {
    require_kind(rs, RestrictionKind::Equality)?;
    let sys = restriction_system(master, rs)?;
    let roots = common_roots(&sys, tol)?;
    Ok(IdentifiedSet::from_parts(Some(roots), None, sys.diagnostics(tol)))
}

/// Region where every inequality residual `det c - R G(beta)` is nonpositive.
pub fn inequality_region(master: &MasterSystem, rs: &RestrictionSet, tol: &Tolerances) -> Result<IdentifiedSet> {
    require_kind(rs, RestrictionKind::InequalityGe)?;
    let sys = restriction_system(master, rs)?;
    let reg = region(&sys, tol);
    Ok(IdentifiedSet::from_parts(None, Some(reg), sys.diagnostics(tol)))
}

/// Intersects an equality result with an inequality result.
pub fn combine(eq: &IdentifiedSet, ineq: &IdentifiedSet) -> IdentifiedSet {
    let mut diagnostics = eq.diagnostics.clone();
    diagnostics.extend(ineq.diagnostics.iter().cloned());
    IdentifiedSet::from_parts(
        Some(eq.equality_roots.clone().unwrap_or_default()),
        ineq.inequality_intervals.clone(),
        diagnostics,
    )
}

/// Roots of a log-difference restriction and the parts of the domain where
/// it is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogDiffSolution {
    pub roots: Vec<f64>,
    /// Grid cells where some weighted payoff combination is nonpositive.
    pub excluded: Vec<Interval<f64>>,
    /// The objective vanishes on the whole defined domain.
    pub uninformative: bool,
}

/// Solves `sum_j r_j log G_j(beta) = c` on `[0, 1)` by a grid sign scan with
/// bisection, where `G(beta) = det(beta) U(beta)`. Because the weights sum to
/// zero the determinant cancels and this is `sum_j r_j log U_j(beta) = c`.
pub fn solve_log_diff(master: &MasterSystem, r: &LogDiffRestriction, tol: &Tolerances) -> Result<LogDiffSolution> {
    if r.weights.len() != master.n_payoffs() {
        return Err(Error::DimensionMismatch {
            what: "log-difference weights".into(),
            expected: master.n_payoffs(),
            found: r.weights.len(),
        });
    }
    let used: Vec<(usize, f64, Poly<f64>)> = r
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(j, &w)| (j, w, master.numerator().get(j)))
        .collect();
    let eval = |b: f64| -> Option<(f64, f64)> {
        let mut f = -r.c;
        let mut mag = r.c.abs();
        for (_, w, g) in &used {
            let v = g.eval(b);
            if v <= 0.0 {
                return None;
            }
            f += w * v.ln();
            mag += (w * v.ln()).abs();
        }
        Some((f, mag))
    };
    let n = tol.grid_points.max(2);
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let vals: Vec<Option<(f64, f64)>> = xs.iter().map(|&b| eval(b)).collect();
    if vals.iter().all(Option::is_none) {
        return Err(Error::EmptyLogDomain);
    }
    let mut excluded = Vec::new();
    let mut i = 0;
    while i < n {
        if vals[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && vals[i + 1].is_none() {
            i += 1;
        }
        excluded.push(Interval {
            lo: xs[start],
            hi: if i + 1 < n { xs[i + 1] } else { 1.0 },
        });
        i += 1;
    }
    let uninformative = vals
        .iter()
        .flatten()
        .all(|(f, m)| f.abs() <= tol::UNINFORMATIVE.max(1e-12) * (1.0 + m));
    if uninformative {
        return Ok(LogDiffSolution {
            roots: Vec::new(),
            excluded,
            uninformative,
        });
    }
    let mut roots = Vec::new();
    for i in 0..n {
        let Some((fa, _)) = vals[i] else { continue };
        if fa == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        let Some(Some((fb, _))) = vals.get(i + 1) else { continue };
        if (fa > 0.0) == (*fb > 0.0) || *fb == 0.0 {
            continue;
        }
        let (mut a, mut b) = (xs[i], xs[i + 1]);
        let pos = fa > 0.0;
        let mut defined = true;
        while b - a > tol.bisection {
            let m = 0.5 * (a + b);
            match eval(m) {
                Some((fm, _)) if (fm > 0.0) == pos => a = m,
                Some(_) => b = m,
                None => {
                    defined = false;
                    break;
                }
            }
        }
        if defined {
            roots.push(0.5 * (a + b));
        }
    }
    Ok(LogDiffSolution {
        roots,
        excluded,
        uninformative,
    })
}

/// An action-state pair `(k, x)`.
pub type ActionState = (usize, usize);

/// Certificate that the listed pairs are `rho`-period dependent through the reference action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDependenceCert {
    pub rho: usize,
    pub pairs: Vec<(ActionState, ActionState)>,
    pub tol: f64,
}

fn check_pair(q: &[DMatrix<f64>], (ka, xa): ActionState, (kb, xb): ActionState) -> Result<()> {
    let kk = q.len() - 1;
    let j = q[0].nrows();
    for (k, x) in [(ka, xa), (kb, xb)] {
        if k >= kk {
            return Err(Error::IndexOutOfRange {
                axis: "non-reference action".into(),
                index: k,
                len: kk,
            });
        }
        if x >= j {
            return Err(Error::IndexOutOfRange {
                axis: "state".into(),
                index: x,
                len: j,
            });
        }
    }
    Ok(())
}

/// Smallest `rho <= rho_max` with
/// `max |[Q_ka(xa) - Q_kb(xb) - Q_K(xa) + Q_K(xb)] Q_K^rho| <= tol::FINITE_DEPENDENCE`
/// for every pair, or `None`.
pub fn check_finite_dependence(
    q: &[DMatrix<f64>],
    pairs: &[(ActionState, ActionState)],
    rho_max: usize,
) -> Result<Option<FiniteDependenceCert>> {
    crate::model::validate_transitions(q)?;
    let kk = q.len() - 1;
    let mut diffs = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        check_pair(q, a, b)?;
        let d = q[a.0].row(a.1) - q[b.0].row(b.1) - q[kk].row(a.1) + q[kk].row(b.1);
        diffs.push(d.into_owned());
    }
    for rho in 1..=rho_max {
        let mut worst: f64 = 0.0;
        for d in diffs.iter_mut() {
            *d = &*d * &q[kk];
            worst = worst.max(d.amax());
        }
        if worst <= tol::FINITE_DEPENDENCE {
            return Ok(Some(FiniteDependenceCert {
                rho,
                pairs: pairs.to_vec(),
                tol: tol::FINITE_DEPENDENCE,
            }));
        }
    }
    Ok(None)
}

/// `g(beta; k, x) = -psi_k(x) - beta Q_k(x) (I + beta Q_K + ... + beta^{rho-1} Q_K^{rho-1}) psi_K`.
///
/// `psi` holds all `K` actions and `k` may be the reference action.
pub fn finite_dependence_g(psi: &[DVector<f64>], q: &[DMatrix<f64>], k: usize, x: usize, rho: usize) -> Result<Poly<f64>> {
    if k >= q.len() || x >= q[0].nrows() || psi.len() != q.len() {
        return Err(Error::InvalidArgument(format!("invalid action-state pair ({k}, {x})")));
    }
    if rho == 0 {
        return Err(Error::InvalidArgument("dependence horizon must be at least 1".into()));
    }
    let kk = q.len() - 1;
    let mut coeffs = vec![-psi[k][x]];
    let mut v = psi[kk].clone();
    for _ in 0..rho {
        coeffs.push(-q[k].row(x).dot(&v.transpose()));
        v = &q[kk] * v;
    }
    Ok(Poly::new(coeffs))
}

/// Degree-`rho` system for restriction rows whose weights sum to zero.
///
/// Row `r U - c` is rewritten as `sum_i r_i (u(e_i) - u(e_0)) - c` against its
/// first nonzero entry `e_0`, and each difference becomes
/// `g(e_i) - g(e_0) - g(K, x_i) + g(K, x_0)`. Every pair must be certified
/// finitely dependent within `rho_max` periods. Equality rows vanish at the
/// truth; inequality rows are nonnegative.
pub fn finite_dependence_system(
    psi: &[DVector<f64>],
    q: &[DMatrix<f64>],
    rs: &RestrictionSet,
    rho_max: usize,
) -> Result<(PolySystem, FiniteDependenceCert)> {
    let j = q[0].nrows();
    let kk = q.len() - 1;
    if rs.n_cols() != j * kk {
        return Err(Error::DimensionMismatch {
            what: "restriction columns".into(),
            expected: j * kk,
            found: rs.n_cols(),
        });
    }
    let mut row_entries = Vec::new();
    let mut pairs = Vec::new();
    for (i, row) in rs.r.row_iter().enumerate() {
        let nz: Vec<(ActionState, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(c, &v)| ((c / j, c % j), v))
            .collect();
        let sum: f64 = nz.iter().map(|e| e.1).sum();
        let mag = nz.iter().fold(0.0_f64, |m, e| m.max(e.1.abs()));
        if sum.abs() > 1e-12 * mag.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "row {i} of `{}` has weights summing to {sum}; finite dependence needs differences",
                rs.label
            )));
        }
        if let Some(&(e0, _)) = nz.first() {
            for &(e, _) in &nz[1..] {
                if !pairs.contains(&(e, e0)) {
                    pairs.push((e, e0));
                }
            }
        }
        row_entries.push(nz);
    }
    let cert = check_finite_dependence(q, &pairs, rho_max)?.ok_or(Error::NotFinitelyDependent(rho_max))?;
    let rho = cert.rho;
    let g = |k: usize, x: usize| finite_dependence_g(psi, q, k, x, rho);
    let mut polys = Vec::new();
    let mut scales = Vec::new();
    for (i, nz) in row_entries.iter().enumerate() {
        let mut h = Poly::constant(-rs.c[i]);
        let mut mag = rs.c[i].abs();
        if let Some(&((k0, x0), _)) = nz.first() {
            let base = &(&g(kk, x0)? - &g(k0, x0)?);
            for &((k, x), w) in &nz[1..] {
                let d = &(&g(k, x)? - &g(kk, x)?) + base;
                mag = mag.max(w.abs() * d.scale());
                h = &h + &d.scaled(w);
            }
        }
        polys.push(h);
        scales.push(mag);
    }
    let sys = PolySystem {
        label: rs.label.clone(),
        kind: rs.kind,
        sign: Sign::NonNegative,
        polys,
        scales,
    };
    Ok((sys, cert))
}

/// Roots of the degree-`rho` equality system.
pub fn finite_equality_set(sys: &PolySystem, tol: &Tolerances) -> Result<IdentifiedSet> {
    let roots = common_roots(sys, tol)?;
    Ok(IdentifiedSet::from_parts(Some(roots), None, sys.diagnostics(tol)))
}

/// Region where every degree-`rho` inequality member is nonnegative.
pub fn finite_inequality_region(sys: &PolySystem, tol: &Tolerances) -> IdentifiedSet {
    IdentifiedSet::from_parts(None, Some(region(sys, tol)), sys.diagnostics(tol))
}
