//! Reference models: Tauchen discretization, a single-agent entry model with
//! its restriction sets, and a three-firm entry game.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::game::{GameLayout, GameModel};
use crate::model::SingleAgentModel;
use crate::restrictions::{
    additive_homogeneous, complementarity, concavity, linear_in_parameters, monotonicity, zero_cross_difference, Axis,
    Interaction, RestrictionSet, StateGrid, StateIndex,
};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Equispaced grid between the `0.5 / J` and `1 - 0.5 / J` quantiles of the
/// stationary law of `x' = gamma1 x + sigma e`, shifted by `center`, and the
/// midpoint-rule transition matrix.
pub fn tauchen(gamma1: f64, sigma: f64, j: usize, center: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !(gamma1.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("AR coefficient {gamma1} is not stationary")));
    }
    if !(sigma > 0.0) || j == 0 {
        return Err(Error::InvalidArgument("need sigma > 0 and at least one grid point".into()));
    }
    if j == 1 {
        return Ok((vec![center], DMatrix::identity(1, 1)));
    }
    let sd = sigma / (1.0 - gamma1 * gamma1).sqrt();
    let n = std_normal();
    let lo = n.inverse_cdf(0.5 / j as f64) * sd;
    let hi = -lo;
    let grid: Vec<f64> = (0..j)
        .map(|i| center + lo + (hi - lo) * i as f64 / (j - 1) as f64)
        .collect();
    let drift = center * (1.0 - gamma1);
    let t = DMatrix::from_fn(j, j, |r, c| tauchen_row(&grid, drift + gamma1 * grid[r], sigma)[c]);
    Ok((grid, t))
}

/// Probabilities of landing in each grid cell when the next value is normal
/// with the given mean and standard deviation; cell edges are midpoints and
/// the end cells absorb the tails.
pub fn tauchen_row(grid: &[f64], mean: f64, sigma: f64) -> Vec<f64> {
    let n = std_normal();
    let edges: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let cdf = |e: f64| n.cdf((e - mean) / sigma);
    (0..grid.len())
        .map(|i| {
            let upper = edges.get(i).map_or(1.0, |&e| cdf(e));
            let lower = if i == 0 { 0.0 } else { cdf(edges[i - 1]) };
            upper - lower
        })
        .collect()
}

/// Parameters of the entry model. The operating payoff is
/// `theta1 + exp(z) (theta2 + theta3 w) + (1 - y) theta4`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntryModelConfig {
    pub theta: [f64; 4],
    pub beta: f64,
    pub gamma_w: f64,
    /// `(gamma_a, gamma_1)`: `z' = gamma_a y + gamma_1 z + sigma_z e`, where
    /// `y` is the lagged action carried in the current state.
    pub gamma_z: (f64, f64),
    pub sigma_w: f64,
    pub sigma_z: f64,
    pub j_w: usize,
    pub j_z: usize,
}

impl Default for EntryModelConfig {
    fn default() -> Self {
        Self {
            theta: [1.0, 0.5, 1.0, 1.0],
            beta: 0.95,
            gamma_w: 0.5,
            gamma_z: (1.0, 0.5),
            sigma_w: 1.0,
            sigma_z: 1.0,
            j_w: 3,
            j_z: 3,
        }
    }
}

impl EntryModelConfig {
    /// Variant where operating does not shift the demand process.
    pub fn finite_dependence() -> Self {
        Self {
            gamma_z: (0.0, 0.5),
            ..Self::default()
        }
    }
}

/// Restriction sets of the entry model, all on the operate action.
#[derive(Clone, Debug)]
pub struct EntryRestrictions {
    pub homogeneity: RestrictionSet,
    pub zero_cross: RestrictionSet,
    pub monotonicity: RestrictionSet,
    pub concavity: RestrictionSet,
    pub complementarity: RestrictionSet,
    pub linearity: RestrictionSet,
}

impl EntryRestrictions {
    pub const NAMES: [&'static str; 6] = [
        "homogeneity",
        "zero-cross",
        "monotonicity",
        "concavity",
        "complementarity",
        "linearity",
    ];

    pub fn get(&self, name: &str) -> Option<&RestrictionSet> {
        match name {
            "homogeneity" => Some(&self.homogeneity),
            "zero-cross" => Some(&self.zero_cross),
            "monotonicity" => Some(&self.monotonicity),
            "concavity" => Some(&self.concavity),
            "complementarity" => Some(&self.complementarity),
            "linearity" => Some(&self.linearity),
            _ => None,
        }
    }
}

/// The built entry model. Action 0 operates, action 1 (reference) stays out.
/// States are `(w, z, y)` with `w` fastest.
#[derive(Clone, Debug)]
pub struct EntryModel {
    pub config: EntryModelConfig,
    pub model: SingleAgentModel,
    pub index: StateIndex,
    pub restrictions: EntryRestrictions,
    /// Design matrix of the operating payoff in `theta`.
    pub h: DMatrix<f64>,
}

/// Builds the entry model, its transitions and every restriction set.
pub fn build_entry_model(cfg: &EntryModelConfig) -> Result<EntryModel> {
    if cfg.j_w < 3 || cfg.j_z < 3 {
        return Err(Error::InvalidArgument("grids need at least 3 points for the restriction suite".into()));
    }
    let (ga, g1) = cfg.gamma_z;
    let (w_grid, tw) = tauchen(cfg.gamma_w, cfg.sigma_w, cfg.j_w, 0.0)?;
    let center = 0.5 * ga / (1.0 - g1);
    let (z_grid, _) = tauchen(g1, cfg.sigma_z, cfg.j_z, center)?;
    let grid = StateGrid::new(vec![
        Axis::new("w", w_grid.clone()),
        Axis::new("z", z_grid.clone()),
        Axis::new("y", vec![0.0, 1.0]),
    ])?;
    let n = grid.n_states();
    let q: Vec<DMatrix<f64>> = [1.0, 0.0]
        .iter()
        .map(|&op| {
            let mut m = DMatrix::zeros(n, n);
            let target_y = op as usize;
            for x in 0..n {
                let t = grid.unflat(x);
                let tz = tauchen_row(&z_grid, ga * t[2] as f64 + g1 * z_grid[t[1]], cfg.sigma_z);
                for wn in 0..cfg.j_w {
                    for (zn, pz) in tz.iter().enumerate() {
                        let to = grid.flat(&[wn, zn, target_y]).expect("grid index");
                        m[(x, to)] = tw[(t[0], wn)] * pz;
                    }
                }
            }
            m
        })
        .collect();
    let th = cfg.theta;
    let mut h = DMatrix::zeros(n, 4);
    for x in 0..n {
        let t = grid.unflat(x);
        let (w, z, y) = (w_grid[t[0]], z_grid[t[1]], t[2] as f64);
        h[(x, 0)] = 1.0;
        h[(x, 1)] = z.exp();
        h[(x, 2)] = z.exp() * w;
        h[(x, 3)] = 1.0 - y;
    }
    let u1 = &h * DVector::from_column_slice(&th);
    let model = SingleAgentModel::new(vec![u1, DVector::zeros(n)], q, cfg.beta)?;
    let index = StateIndex::new(grid, 2)?;

    let w_set = vec![vec![0], vec![1]];
    let z_set: Vec<Vec<usize>> = (0..cfg.j_z)
        .flat_map(|z| (0..cfg.j_w).map(move |w| vec![w, z]))
        .collect();
    let restrictions = EntryRestrictions {
        homogeneity: additive_homogeneous(&index, 0, "w", 1.0)?,
        zero_cross: zero_cross_difference(&index, 0, &["y"], &w_set, &z_set)?,
        monotonicity: monotonicity(&index, 0, "z")?,
        concavity: concavity(&index, 0, "z")?,
        complementarity: complementarity(&index, 0, "w", "z", Interaction::Complements)?,
        linearity: linear_in_parameters(&h)?,
    };
    Ok(EntryModel {
        config: cfg.clone(),
        model,
        index,
        restrictions,
        h,
    })
}

/// Entry model with `gamma_a = 0`, where operating leaves demand unchanged.
pub fn build_entry_model_fd(cfg: &EntryModelConfig) -> Result<EntryModel> {
    if cfg.gamma_z.0 != 0.0 {
        return Err(Error::InvalidArgument(
            "the finite-dependence variant needs gamma_a = 0".into(),
        ));
    }
    build_entry_model(cfg)
}

/// Parameters of the entry game. Operating pays
/// `theta_rs ln S - theta_rn ln(1 + operating rivals) - theta_fc[i] - theta_ec 1{was out}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntryGameConfig {
    pub theta_rs: f64,
    pub theta_rn: f64,
    pub theta_ec: f64,
    pub theta_fc: Vec<f64>,
    pub beta: Vec<f64>,
    pub s_values: Vec<f64>,
    pub s_transition: Vec<Vec<f64>>,
}

impl Default for EntryGameConfig {
    fn default() -> Self {
        Self {
            theta_rs: 1.0,
            theta_rn: 1.0,
            theta_ec: 1.0,
            theta_fc: vec![1.0, 0.9, 0.8],
            beta: vec![0.8, 0.9, 0.95],
            s_values: vec![2.0, 6.0, 10.0],
            s_transition: vec![vec![0.8, 0.2, 0.0], vec![0.2, 0.6, 0.2], vec![0.0, 0.2, 0.8]],
        }
    }
}

/// Operating payoff of a firm in a reduced cell.
fn operate_payoff(cfg: &EntryGameConfig, i: usize, s: f64, rivals_in: usize, was_out: bool) -> f64 {
    cfg.theta_rs * s.ln() - cfg.theta_rn * (1.0 + rivals_in as f64).ln() - cfg.theta_fc[i]
        - if was_out { cfg.theta_ec } else { 0.0 }
}

/// Builds the game. Action 0 operates, action 1 (reference, payoff 0) stays out.
pub fn build_entry_game(cfg: &EntryGameConfig) -> Result<GameModel> {
    let n = cfg.theta_fc.len();
    if n == 0 || cfg.beta.len() != n {
        return Err(Error::DimensionMismatch {
            what: "per-firm discount factors".into(),
            expected: n,
            found: cfg.beta.len(),
        });
    }
    if cfg.s_values.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::EmptyLogDomain);
    }
    let l = GameLayout {
        n_firms: n,
        n_actions: 2,
        m_s: cfg.s_values.len(),
    };
    let payoff = (0..n)
        .map(|i| {
            (0..l.n_profiles())
                .map(|a| {
                    let prof = l.profile(a);
                    (0..l.m_x())
                        .map(|x| {
                            if prof[i] != 0 {
                                return 0.0;
                            }
                            let (s, lag) = l.state(x);
                            let rivals_in = (0..n).filter(|&j| j != i && prof[j] == 0).count();
                            operate_payoff(cfg, i, cfg.s_values[s], rivals_in, lag[i] == 1)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let g = GameModel {
        n_firms: n,
        n_actions: 2,
        s_values: cfg.s_values.clone(),
        s_transition: cfg.s_transition.clone(),
        payoff,
        beta: cfg.beta.clone(),
        known_reference_payoff: true,
    };
    g.validate()?;
    Ok(g)
}

/// Design matrix over the game's reduced cells: `[ln S, ln(1 + operating rivals), 1, 1{was out}]`.
pub fn entry_game_design(model: &GameModel) -> DMatrix<f64> {
    let l = model.layout();
    let cells = l.cells();
    let mut h = DMatrix::zeros(cells.len(), 4);
    for (r, c) in cells.iter().enumerate() {
        let rivals_in = l.others(c.others).iter().filter(|&&a| a == 0).count();
        h[(r, 0)] = model.s_values[c.s].ln();
        h[(r, 1)] = (1.0 + rivals_in as f64).ln();
        h[(r, 2)] = 1.0;
        h[(r, 3)] = if c.own_lag == 1 { 1.0 } else { 0.0 };
    }
    h
}
