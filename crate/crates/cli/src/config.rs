//! Model config files, schema version 1.

use std::path::Path;

use ddc_ident::game::GameModel;
use ddc_ident::restrictions::{Axis, SparseRestrictionSet};
use ddc_ident::scenarios::{build_entry_game, build_entry_model, EntryGameConfig, EntryModelConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Issue, Result};

pub const SCHEMA_VERSION: u32 = 1;
const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    SingleFd,
    Game,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub model: ModelDef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelDef {
    Entry(EntryModelConfig),
    EntryGame(EntryGameConfig),
    Single(SingleDef),
    Game(GameDef),
}

/// A single-agent model given by its primitives or by observed choice probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleDef {
    /// State axes; the first varies fastest in the flat state index.
    pub axes: Vec<Axis>,
    pub n_actions: usize,
    /// One row-major `J x J` matrix per action.
    pub transitions: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoffs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccps: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restrictions: Vec<SparseRestrictionSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDef {
    #[serde(flatten)]
    pub model: GameModel,
    /// Cell-by-parameter design matrix for the `linear` restriction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Vec<Vec<f64>>>,
}

impl ConfigFile {
    pub fn builtin(name: &str) -> Result<Self> {
        let (mode, model) = match name {
            "entry" => (Mode::Single, ModelDef::Entry(EntryModelConfig::default())),
            "entry-fd" => (Mode::SingleFd, ModelDef::Entry(EntryModelConfig::finite_dependence())),
            "entry-game" => (Mode::Game, ModelDef::EntryGame(EntryGameConfig::default())),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown scenario `{other}`; expected entry, entry-fd or entry-game"
                )))
            }
        };
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            mode: Some(mode),
            model,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| CliError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Mode implied by the model type unless the file sets one.
    pub fn resolved_mode(&self) -> Result<Mode> {
        let default = match self.model {
            ModelDef::Entry(_) | ModelDef::Single(_) => Mode::Single,
            ModelDef::EntryGame(_) | ModelDef::Game(_) => Mode::Game,
        };
        let mode = self.mode.unwrap_or(default);
        let game_model = default == Mode::Game;
        if game_model != (mode == Mode::Game) {
            return Err(CliError::Config(format!("mode {mode:?} does not fit this model type")));
        }
        Ok(mode)
    }

    /// Every schema and consistency problem; empty when the config is usable.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        if let Err(e) = self.resolved_mode() {
            out.push(Issue::new("mode", e.to_string()));
        }
        match &self.model {
            ModelDef::Entry(c) => {
                if let Err(e) = build_entry_model(c) {
                    out.push(Issue::new("model", e.to_string()));
                }
            }
            ModelDef::EntryGame(c) => {
                check_stochastic(&c.s_transition, "model.s_transition", &mut out);
                if out.is_empty() {
                    if let Err(e) = build_entry_game(c) {
                        out.push(Issue::new("model", e.to_string()));
                    }
                }
            }
            ModelDef::Single(s) => s.check(&mut out),
            ModelDef::Game(g) => g.check(&mut out),
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(issues))
        }
    }
}

fn check_stochastic(m: &[Vec<f64>], field: &str, out: &mut Vec<Issue>) {
    let n = m.len();
    for (r, row) in m.iter().enumerate() {
        let f = format!("{field}[{r}]");
        if row.len() != n {
            out.push(Issue::new(f, format!("row has {} entries, expected {n}", row.len())));
            continue;
        }
        if let Some((c, v)) = row.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            out.push(Issue::new(format!("{f}[{c}]"), format!("entry {v} is negative or not a number")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            out.push(Issue::new(f, format!("row sums to {s}, expected 1 (not stochastic)")));
        }
    }
}

fn check_beta(beta: f64, field: &str, out: &mut Vec<Issue>) {
    if !(0.0..1.0).contains(&beta) {
        out.push(Issue::new(field, format!("discount factor {beta} is outside [0, 1)")));
    }
}

impl SingleDef {
    pub fn n_states(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// Human-readable name of a payoff column, `u_k` at a grid point.
    pub fn cell_name(&self, col: usize) -> String {
        let j = self.n_states().max(1);
        let (k, mut x) = (col / j, col % j);
        let coords: Vec<String> = self
            .axes
            .iter()
            .map(|a| {
                let i = x % a.len().max(1);
                x /= a.len().max(1);
                format!("{}={}", a.name, a.values.get(i).copied().unwrap_or(f64::NAN))
            })
            .collect();
        format!("action {k}, state {} ({})", col % j, coords.join(", "))
    }

    fn check(&self, out: &mut Vec<Issue>) {
        if self.axes.is_empty() {
            out.push(Issue::new("model.axes", "at least one axis is required"));
        }
        for (a, axis) in self.axes.iter().enumerate() {
            if axis.values.is_empty() {
                out.push(Issue::new(format!("model.axes[{a}]"), format!("axis `{}` has no values", axis.name)));
            } else if axis.values.windows(2).any(|w| !(w[0] < w[1])) {
                out.push(Issue::new(format!("model.axes[{a}]"), format!("axis `{}` values must ascend", axis.name)));
            }
        }
        let j = self.n_states();
        let kk = self.n_actions;
        if kk < 2 {
            out.push(Issue::new("model.n_actions", "at least two actions are required"));
        }
        if self.transitions.len() != kk {
            out.push(Issue::new(
                "model.transitions",
                format!("{} matrices given, expected one per action ({kk})", self.transitions.len()),
            ));
        }
        for (k, q) in self.transitions.iter().enumerate() {
            let f = format!("model.transitions[{k}]");
            if q.len() != j {
                out.push(Issue::new(&f, format!("{} rows, expected {j} states", q.len())));
            } else {
                check_stochastic(q, &f, out);
            }
        }
        match (&self.payoffs, &self.ccps) {
            (Some(_), Some(_)) => out.push(Issue::new("model", "give either payoffs or ccps, not both")),
            (None, None) => out.push(Issue::new("model", "one of payoffs or ccps is required")),
            (Some(u), None) => {
                shape(u, kk, j, "model.payoffs", out);
                match self.beta {
                    Some(b) => check_beta(b, "model.beta", out),
                    None => out.push(Issue::new("model.beta", "required when payoffs are given")),
                }
            }
            (None, Some(p)) => {
                if shape(p, kk, j, "model.ccps", out) {
                    for x in 0..j {
                        let mut s = 0.0;
                        for (k, row) in p.iter().enumerate() {
                            let v = row[x];
                            if !(v > 0.0 && v < 1.0) {
                                out.push(Issue::new(format!("model.ccps[{k}][{x}]"), format!("probability {v} is outside (0, 1)")));
                            }
                            s += v;
                        }
                        if (s - 1.0).abs() > 1e-9 {
                            out.push(Issue::new(format!("model.ccps[..][{x}]"), format!("probabilities sum to {s}, expected 1")));
                        }
                    }
                }
                if let Some(b) = self.beta {
                    check_beta(b, "model.beta", out);
                }
            }
        }
        let p = j * kk.saturating_sub(1);
        for (i, rs) in self.restrictions.iter().enumerate() {
            let f = format!("model.restrictions[{i}]");
            if rs.rows.len() != rs.c.len() {
                out.push(Issue::new(&f, format!("{} rows but {} right-hand sides", rs.rows.len(), rs.c.len())));
            }
            for (r, row) in rs.rows.iter().enumerate() {
                if row.cols.len() != row.vals.len() {
                    out.push(Issue::new(format!("{f}.rows[{r}]"), "cols and vals differ in length"));
                }
                for &c in row.cols.iter().filter(|&&c| c >= p) {
                    out.push(Issue::new(
                        format!("{f}.rows[{r}]"),
                        format!(
                            "column {c} refers to {}, which is not a payoff cell (columns 0..{p} cover actions 0..{} and states 0..{j})",
                            self.cell_name(c),
                            kk.saturating_sub(1),
                        ),
                    ));
                }
            }
        }
    }
}

fn shape(m: &[Vec<f64>], kk: usize, j: usize, field: &str, out: &mut Vec<Issue>) -> bool {
    let before = out.len();
    if m.len() != kk {
        out.push(Issue::new(field, format!("{} vectors given, expected {kk}", m.len())));
    }
    for (k, v) in m.iter().enumerate() {
        if v.len() != j {
            out.push(Issue::new(format!("{field}[{k}]"), format!("{} entries, expected {j} states", v.len())));
        }
    }
    out.len() == before
}

impl GameDef {
    fn check(&self, out: &mut Vec<Issue>) {
        let before = out.len();
        check_stochastic(&self.model.s_transition, "model.s_transition", out);
        for (i, &b) in self.model.beta.iter().enumerate() {
            check_beta(b, &format!("model.beta[{i}]"), out);
        }
        if out.len() == before {
            if let Err(e) = self.model.validate() {
                out.push(Issue::new("model", e.to_string()));
                return;
            }
        }
        if let (Some(h), true) = (&self.design, out.len() == before) {
            let cells = self.model.layout().cells().len();
            if h.len() != cells {
                out.push(Issue::new("model.design", format!("{} rows, expected one per reduced cell ({cells})", h.len())));
            }
            let d = h.first().map_or(0, |r| r.len());
            if h.iter().any(|r| r.len() != d) {
                out.push(Issue::new("model.design", "rows differ in length"));
            }
        }
    }
}
