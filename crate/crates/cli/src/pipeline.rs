//! Turns a config and restriction requests into identifying polynomials and a set.

use ddc_ident::game::{
    build_system, game_inequality_system, GameModel, game_poly_system, identified_set_game, inequality_region_game,
    solve_mpe, MpeOptions,
};
use ddc_ident::ident::{
    combine, equality_identified_set, finite_dependence_system, finite_equality_set, finite_inequality_region,
    inequality_region, restriction_system, IdentifiedSet,
};
use ddc_ident::model::{solve_bellman, Ccps, MasterSystem, SingleAgentModel, SolveOptions};
use ddc_ident::restrictions::{RestrictionKind, RestrictionSet, StateGrid, StateIndex};
use ddc_ident::scenarios::{EntryRestrictions, build_entry_game, build_entry_model, build_entry_model_fd, entry_game_design};
use ddc_ident::{BetaPoly, Error as CoreError, Tolerances};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigFile, Mode, ModelDef, SingleDef};
use crate::error::{CliError, Result};
use crate::restrict::{self, Request};

/// Longest finite-dependence horizon searched.
pub const RHO_MAX: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct Numerics {
    pub tolerances: Tolerances,
    pub fixed_point_tol: f64,
    pub damping: f64,
    pub max_iter: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        let mpe = MpeOptions::default();
        Self {
            tolerances: Tolerances::default(),
            fixed_point_tol: mpe.tol,
            damping: mpe.damping,
            max_iter: mpe.max_iter,
        }
    }
}

impl Numerics {
    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.fixed_point_tol,
            max_iter: self.max_iter,
        }
    }

    fn mpe_options(&self) -> MpeOptions {
        MpeOptions {
            damping: self.damping,
            tol: self.fixed_point_tol,
            max_iter: self.max_iter,
            dp: self.solve_options(),
        }
    }
}

pub struct Outcome {
    /// One named polynomial per curve column.
    pub columns: Vec<(String, BetaPoly)>,
    pub set: Option<IdentifiedSet>,
    /// Why no set was produced, when the restrictions carry no information.
    pub note: Option<String>,
    pub details: Value,
}

pub struct SingleData {
    pub index: StateIndex,
    q: Vec<DMatrix<f64>>,
    /// Absent when only the structure was requested.
    ccps: Option<Ccps>,
    pub named: Vec<RestrictionSet>,
    details: Value,
}

impl SingleData {
    fn ccps(&self) -> &Ccps {
        self.ccps.as_ref().expect("choice probabilities were computed")
    }
}

/// State index, transitions and named sets; choice probabilities only when `solve` is set.
pub fn single_data(cfg: &ConfigFile, mode: Mode, num: &Numerics, solve: bool) -> Result<SingleData> {
    match &cfg.model {
        ModelDef::Entry(c) => {
            let e = if mode == Mode::SingleFd { build_entry_model_fd(c)? } else { build_entry_model(c)? };
            let named = EntryRestrictions::NAMES
                .iter()
                .filter_map(|n| {
                    let mut rs = e.restrictions.get(n)?.clone();
                    rs.label = n.to_string();
                    Some(rs)
                })
                .collect();
            let mut details = json!({ "beta_true": c.beta });
            let ccps = if solve {
                let sol = solve_bellman(&e.model, num.solve_options())?;
                details["bellman_iterations"] = json!(sol.iterations);
                Some(sol.ccps)
            } else {
                None
            };
            Ok(SingleData {
                index: e.index.clone(),
                q: e.model.transitions().to_vec(),
                ccps,
                named,
                details,
            })
        }
        ModelDef::Single(s) => custom_single(s, num, solve),
        _ => Err(CliError::Config("single-agent modes need an entry or single model".into())),
    }
}

fn custom_single(s: &SingleDef, num: &Numerics, solve: bool) -> Result<SingleData> {
    let grid = StateGrid::new(s.axes.clone())?;
    let index = StateIndex::new(grid, s.n_actions)?;
    let q: Vec<DMatrix<f64>> = s
        .transitions
        .iter()
        .map(|m| DMatrix::from_row_iterator(m.len(), m.len(), m.iter().flatten().copied()))
        .collect();
    let vecs = |v: &[Vec<f64>]| v.iter().map(|r| DVector::from_vec(r.clone())).collect::<Vec<_>>();
    let (ccps, details) = match (&s.payoffs, &s.ccps, s.beta) {
        (Some(_), None, Some(beta)) if !solve => (None, json!({ "beta_true": beta })),
        (Some(u), None, Some(beta)) => {
            let m = SingleAgentModel::new(vecs(u), q.clone(), beta)?;
            let sol = solve_bellman(&m, num.solve_options())?;
            (Some(sol.ccps), json!({ "bellman_iterations": sol.iterations, "beta_true": beta }))
        }
        (None, Some(p), _) => (Some(Ccps::new(vecs(p))?), json!({ "ccps": "given" })),
        _ => return Err(CliError::Config("give payoffs with beta, or ccps".into())),
    };
    let p = index.n_columns();
    let named = s
        .restrictions
        .iter()
        .map(|r| RestrictionSet::from_sparse(r, p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SingleData {
        index,
        q,
        ccps,
        named,
        details,
    })
}

pub fn resolve_single(reqs: &[Request], data: &SingleData) -> Result<Vec<RestrictionSet>> {
    reqs
        .iter()
        .map(|req| {
            if let Some(rs) = restrict::from_config(req, &data.named) {
                return Ok(rs);
            }
            if let Some(rs) = restrict::generic_single(req, &data.index)? {
                return Ok(rs);
            }
            let names: Vec<String> = data.named.iter().map(|r| r.label.clone()).collect();
            Err(restrict::unknown_single(req, &names))
        })
        .collect()
}

fn split(sets: &[RestrictionSet]) -> (Vec<&RestrictionSet>, Vec<&RestrictionSet>) {
    sets.iter().partition(|s| s.kind == RestrictionKind::Equality)
}

fn joined(sets: &[&RestrictionSet]) -> Result<Option<RestrictionSet>> {
    if sets.is_empty() {
        return Ok(None);
    }
    let label: Vec<&str> = sets.iter().map(|s| s.label.as_str()).collect();
    Ok(Some(RestrictionSet::concat(label.join("+"), sets)?))
}

fn named_polys<'a>(label: &str, polys: &'a [BetaPoly]) -> impl Iterator<Item = (String, BetaPoly)> + 'a {
    let label = label.to_string();
    polys.iter().enumerate().map(move |(i, p)| (format!("{label}[{i}]"), p.clone()))
}

/// Equality failures that mean "no information" rather than a broken run.
fn soften(r: std::result::Result<IdentifiedSet, CoreError>) -> Result<std::result::Result<IdentifiedSet, String>> {
    match r {
        Ok(s) => Ok(Ok(s)),
        Err(e @ (CoreError::NoIdentifyingContent | CoreError::Uninformative)) => Ok(Err(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

fn assemble(
    eq: Option<std::result::Result<IdentifiedSet, String>>,
    ineq: Option<IdentifiedSet>,
) -> (Option<IdentifiedSet>, Option<String>) {
    match (eq, ineq) {
        (Some(Ok(e)), Some(i)) => (Some(combine(&e, &i)), None),
        (Some(Ok(e)), None) => (Some(e), None),
        (Some(Err(note)), i) => (i, Some(note)),
        (None, i) => (i, None),
    }
}

pub fn run(cfg: &ConfigFile, mode: Mode, reqs: &[Request], firm: usize, num: &Numerics) -> Result<Outcome> {
    if reqs.is_empty() {
        return Err(CliError::Usage("at least one restriction is required".into()));
    }
    match mode {
        Mode::Single => run_single(cfg, reqs, num),
        Mode::SingleFd => run_fd(cfg, reqs, num),
        Mode::Game => run_game(cfg, reqs, firm, num),
    }
}

fn run_single(cfg: &ConfigFile, reqs: &[Request], num: &Numerics) -> Result<Outcome> {
    let data = single_data(cfg, Mode::Single, num, true)?;
    let sets = resolve_single(reqs, &data)?;
    let master = MasterSystem::from_ccps(data.ccps(), &data.q)?;
    let tol = &num.tolerances;
    let mut columns = Vec::new();
    for rs in &sets {
        columns.extend(named_polys(&rs.label, &restriction_system(&master, rs)?.polys));
    }
    let (eqs, ineqs) = split(&sets);
    let eq = joined(&eqs)?.map(|rs| soften(equality_identified_set(&master, &rs, tol))).transpose()?;
    let ineq = joined(&ineqs)?.map(|rs| inequality_region(&master, &rs, tol)).transpose()?;
    let (set, note) = assemble(eq, ineq);
    Ok(Outcome {
        columns,
        set,
        note,
        details: data.details,
    })
}

fn run_fd(cfg: &ConfigFile, reqs: &[Request], num: &Numerics) -> Result<Outcome> {
    let data = single_data(cfg, Mode::SingleFd, num, true)?;
    let sets = resolve_single(reqs, &data)?;
    let psi = data.ccps().psi();
    let tol = &num.tolerances;
    let mut columns = Vec::new();
    let mut rho = serde_json::Map::new();
    for rs in &sets {
        let (sys, cert) = finite_dependence_system(&psi, &data.q, rs, RHO_MAX)?;
        rho.insert(rs.label.clone(), json!(cert.rho));
        columns.extend(named_polys(&rs.label, &sys.polys));
    }
    let (eqs, ineqs) = split(&sets);
    let eq = match joined(&eqs)? {
        Some(rs) => {
            let (sys, _) = finite_dependence_system(&psi, &data.q, &rs, RHO_MAX)?;
            Some(soften(finite_equality_set(&sys, tol))?)
        }
        None => None,
    };
    let ineq = match joined(&ineqs)? {
        Some(rs) => {
            let (sys, _) = finite_dependence_system(&psi, &data.q, &rs, RHO_MAX)?;
            Some(finite_inequality_region(&sys, tol))
        }
        None => None,
    };
    let (set, note) = assemble(eq, ineq);
    let mut details = data.details;
    details["rho"] = Value::Object(rho);
    Ok(Outcome {
        columns,
        set,
        note,
        details,
    })
}

/// The game and, when one is known, its design matrix for `linear`.
pub fn game_model(cfg: &ConfigFile) -> Result<(GameModel, Option<DMatrix<f64>>)> {
    let (model, design) = match &cfg.model {
        ModelDef::EntryGame(c) => {
            let m = build_entry_game(c)?;
            let h = entry_game_design(&m);
            (m, Some(h))
        }
        ModelDef::Game(g) => {
            let h = g.design.as_ref().map(|rows| {
                let d = rows.first().map_or(0, |r| r.len());
                DMatrix::from_row_iterator(rows.len(), d, rows.iter().flatten().copied())
            });
            (g.model.clone(), h)
        }
        _ => return Err(CliError::Config("game mode needs an entry-game or game model".into())),
    };
    model.validate()?;
    Ok((model, design))
}

fn run_game(cfg: &ConfigFile, reqs: &[Request], firm: usize, num: &Numerics) -> Result<Outcome> {
    let (model, design) = game_model(cfg)?;
    if firm == 0 || firm > model.n_firms {
        return Err(CliError::Usage(format!("--firm must be in 1..={}", model.n_firms)));
    }
    let i = firm - 1;
    let layout = model.layout();
    let sets = reqs
        .iter()
        .map(|s| restrict::game(s, &layout, i, design.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mpe = solve_mpe(&model, num.mpe_options(), None)?;
    let sys = build_system(&model, &mpe, i)?;
    let tol = &num.tolerances;
    let (eqs, ineqs) = split(&sets);
    let r3 = joined(&eqs)?;
    let mut columns = Vec::new();
    let mut details = json!({
        "firm": firm,
        "beta_true": model.beta[i],
        "mpe_residual": mpe.residual,
        "mpe_iterations": mpe.iterations,
    });
    let eq = match &r3 {
        Some(rs) => {
            let gp = game_poly_system(&sys, rs, None)?;
            columns.extend(named_polys(&rs.label, &gp.system.polys));
            details["condition"] = json!(gp.condition);
            details["noise_floor"] = json!(gp.noise_floor);
            details["independent_polynomials"] = json!(gp.n_independent);
            Some(soften(identified_set_game(&sys, rs, tol).map(|(s, _)| s))?)
        }
        None => None,
    };
    let ineq = match joined(&ineqs)? {
        Some(r4) => {
            let ps = game_inequality_system(&sys, r3.as_ref(), &r4)?;
            columns.extend(named_polys(&r4.label, &ps.polys));
            Some(inequality_region_game(&sys, r3.as_ref(), &r4, tol)?)
        }
        None => None,
    };
    let (set, note) = assemble(eq, ineq);
    Ok(Outcome {
        columns,
        set,
        note,
        details,
    })
}
