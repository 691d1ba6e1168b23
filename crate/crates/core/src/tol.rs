//! Default numerical tolerances. Every routine that thresholds takes its
//! value from here unless a caller overrides it through [`Tolerances`].

/// Maximum imaginary part for an eigenvalue to count as a real root candidate.
pub const ROOT_IMAG: f64 = 1e-8;
/// Maximum residual `|p(r)| / max|coef|` for an accepted root.
pub const ROOT_RESIDUAL: f64 = 1e-8;
/// Roots closer than this are merged.
pub const ROOT_CLUSTER: f64 = 1e-7;
/// Number of equispaced points on `[0, 1)` used by sign scans.
pub const GRID_POINTS: usize = 2001;
/// Bisection stopping width for region and root refinement.
pub const BISECTION: f64 = 1e-10;
/// A polynomial whose coefficients are all below this times its scale is identically zero.
pub const UNINFORMATIVE: f64 = 1e-12;
/// A candidate is a common root when every member is below this (normalized).
pub const COMMON_ROOT: f64 = 1e-6;
/// Pivot threshold, relative to the largest coefficient, for degree reduction.
pub const PIVOT: f64 = 1e-10;
/// Row-sum tolerance for stochastic matrices.
pub const STOCHASTIC: f64 = 1e-10;
/// Relative singular value cutoff for numerical rank.
pub const RANK: f64 = 1e-10;
/// Finite dependence certificate threshold.
pub const FINITE_DEPENDENCE: f64 = 1e-10;
/// Sup-norm stopping rule for value iteration.
pub const BELLMAN: f64 = 1e-12;
/// Maximum iterations for fixed-point loops.
pub const MAX_ITER: usize = 100_000;
/// Sup-norm stopping rule for equilibrium iteration. Two orders below the
/// 1e-10 target so that the logit identity at the returned probabilities
/// also holds to 1e-10.
pub const EQUILIBRIUM: f64 = 1e-12;
/// Damping for equilibrium best-response iteration.
pub const DAMPING: f64 = 0.5;

/// Overridable tolerances used by the identification routines.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub root_imag: f64,
    pub root_residual: f64,
    pub root_cluster: f64,
    pub grid_points: usize,
    pub bisection: f64,
    pub uninformative: f64,
    pub common_root: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root_imag: ROOT_IMAG,
            root_residual: ROOT_RESIDUAL,
            root_cluster: ROOT_CLUSTER,
            grid_points: GRID_POINTS,
            bisection: BISECTION,
            uninformative: UNINFORMATIVE,
            common_root: COMMON_ROOT,
        }
    }
}
