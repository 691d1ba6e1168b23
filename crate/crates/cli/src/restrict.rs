//! `name(arg=val,...)` restriction requests and their resolution into sets.

use std::collections::BTreeMap;
use std::fmt;

use ddc_ident::game::{r3_adjustment_cost, r3_exchangeability, r3_linear, r4_own_lag, r4_rivals, GameLayout};
use ddc_ident::restrictions::{
    additive_homogeneous, complementarity, concavity, exclusion, monotonicity, Interaction, RestrictionSet,
    StateIndex,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Request {
    pub name: String,
    pub args: BTreeMap<String, String>,
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.args.is_empty() {
            let a: Vec<String> = self.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", a.join(","))?;
        }
        Ok(())
    }
}

fn bad(name: &str, message: impl Into<String>) -> CliError {
    CliError::Restriction {
        name: name.to_string(),
        message: message.into(),
    }
}

/// Splits a comma list at the top level, so commas inside parentheses stay with their request.
pub fn parse_list(s: &str) -> Result<Vec<Request>> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(CliError::Usage(format!("unbalanced parentheses in `{s}`")));
        }
    }
    if depth != 0 {
        return Err(CliError::Usage(format!("unbalanced parentheses in `{s}`")));
    }
    parts.push(&s[start..]);
    parts.into_iter().map(str::trim).filter(|p| !p.is_empty()).map(parse_one).collect()
}

fn parse_one(s: &str) -> Result<Request> {
    let (name, rest) = match s.find('(') {
        Some(i) if s.ends_with(')') => (&s[..i], Some(&s[i + 1..s.len() - 1])),
        Some(_) => return Err(CliError::Usage(format!("malformed restriction `{s}`"))),
        None => (s, None),
    };
    let name = name.trim();
    if name.is_empty() {
        return Err(CliError::Usage(format!("restriction without a name in `{s}`")));
    }
    let mut args = BTreeMap::new();
    for kv in rest.unwrap_or("").split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| bad(name, format!("argument `{kv}` is not key=value")))?;
        if args.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(bad(name, format!("argument `{}` given twice", k.trim())));
        }
    }
    Ok(Request {
        name: name.to_string(),
        args,
    })
}

struct Args<'a> {
    req: &'a Request,
}

impl Args<'_> {
    fn raw(&self, key: &str) -> Result<&str> {
        self.req
            .args
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(&self.req.name, format!("missing argument `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse()
            .map_err(|_| bad(&self.req.name, format!("argument `{key}` has invalid value `{v}`")))
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        if self.req.args.contains_key(key) {
            self.parse(key)
        } else {
            Ok(default)
        }
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.req.args.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(bad(&self.req.name, format!("unknown argument `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Builders that work on any single-agent state grid.
pub fn generic_single(req: &Request, idx: &StateIndex) -> Result<Option<RestrictionSet>> {
    let a = Args { req };
    let rs = match req.name.as_str() {
        "monotonicity" | "concavity" => {
            a.only(&["action", "axis"])?;
            let k = a.parse_or("action", 0)?;
            let axis = a.raw("axis")?;
            if req.name == "monotonicity" {
                monotonicity(idx, k, axis)?
            } else {
                concavity(idx, k, axis)?
            }
        }
        "complementarity" => {
            a.only(&["action", "w", "z", "direction"])?;
            let dir = match a.req.args.get("direction").map(String::as_str) {
                None | Some("complements") => Interaction::Complements,
                Some("substitutes") => Interaction::Substitutes,
                Some(o) => return Err(bad(&req.name, format!("direction `{o}` is not complements or substitutes"))),
            };
            complementarity(idx, a.parse_or("action", 0)?, a.raw("w")?, a.raw("z")?, dir)?
        }
        "additive-homogeneous" => {
            a.only(&["action", "axis", "nu"])?;
            additive_homogeneous(idx, a.parse_or("action", 0)?, a.raw("axis")?, a.parse("nu")?)?
        }
        "exclusion" => {
            a.only(&["action", "state", "other_action", "other_state"])?;
            let cells = [
                (a.parse_or("action", 0)?, a.parse("state")?),
                (a.parse("other_action")?, a.parse("other_state")?),
            ];
            let j = idx.grid().n_states();
            for (k, x) in cells {
                if k >= idx.n_actions() || x >= j {
                    return Err(bad(
                        &req.name,
                        format!(
                            "cell (action {k}, state {x}) does not exist; actions are 0..{} and states 0..{j}",
                            idx.n_actions()
                        ),
                    ));
                }
            }
            exclusion(idx, cells[0], cells[1])?
        }
        _ => return Ok(None),
    };
    Ok(Some(rs))
}

/// Ready-made sets of a scenario or config file, selected by label. A request
/// with arguments goes to the generic builders instead.
pub fn from_config(req: &Request, sets: &[RestrictionSet]) -> Option<RestrictionSet> {
    if !req.args.is_empty() {
        return None;
    }
    sets.iter().find(|s| s.label == req.name).cloned()
}

pub fn game(req: &Request, layout: &GameLayout, firm: usize, design: Option<&DMatrix<f64>>) -> Result<RestrictionSet> {
    Args { req }.only(&[])?;
    let rs = match req.name.as_str() {
        "exchangeability" => r3_exchangeability(layout, firm),
        "adjustment-cost" => r3_adjustment_cost(layout, firm),
        "linear" => {
            let h = design.ok_or_else(|| bad(&req.name, "this model has no design matrix"))?;
            r3_linear(layout, firm, h)?
        }
        "own-lag" => r4_own_lag(layout, firm),
        "rivals" => r4_rivals(layout, firm),
        _ => {
            return Err(bad(
                &req.name,
                "unknown for games; expected exchangeability, adjustment-cost, linear, own-lag or rivals",
            ))
        }
    };
    Ok(rs)
}

pub fn unknown_single(req: &Request, available: &[String]) -> CliError {
    let mut known = available.to_vec();
    for g in GENERIC {
        if !known.iter().any(|k| k == g) {
            known.push(g.to_string());
        }
    }
    bad(&req.name, format!("unknown; expected one of {}", known.join(", ")))
}

const GENERIC: [&str; 5] = ["monotonicity", "concavity", "complementarity", "additive-homogeneous", "exclusion"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_at_top_level_commas() {
        let v = parse_list("homogeneity, monotonicity(action=0,axis=w),linear").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[1].name, "monotonicity");
        assert_eq!(v[1].args["axis"], "w");
        assert_eq!(v[1].to_string(), "monotonicity(action=0,axis=w)");
    }

    #[test]
    fn rejects_malformed_requests() {
        assert!(parse_list("a(b=1").is_err());
        assert!(parse_list("a)b(").is_err());
        assert!(parse_list("a(b)").is_err());
        assert!(parse_list("a(b=1,b=2)").is_err());
        assert!(parse_list("").unwrap().is_empty());
    }
}
