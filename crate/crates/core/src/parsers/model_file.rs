use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use super::{parse_f64, tokens, Tok};
use crate::error::{Error, Result};
use crate::model::{validate_mdp, Choice, Mdp, UtilityFn, UtilityKind};

/// A model file's contents: the MDP plus any inline utility blocks.
#[derive(Debug, Clone)]
pub struct ParsedModel {
    pub mdp: Mdp,
    pub reward: Option<UtilityFn>,
    pub cost: Option<UtilityFn>,
}

pub fn parse_mdp(text: &str) -> Result<Mdp> {
    parse_model(text).map(|p| p.mdp)
}

struct Names {
    what: &'static str,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Names {
    fn new(what: &'static str) -> Self {
        Names { what, names: Vec::new(), index: HashMap::new() }
    }

    fn declare(&mut self, line: usize, t: Tok<'_>) -> Result<()> {
        if self.index.contains_key(t.text) {
            return Err(Error::parse(line, t.col, format!("{} '{}' declared twice", self.what, t.text)));
        }
        self.index.insert(t.text.to_string(), self.names.len());
        self.names.push(t.text.to_string());
        Ok(())
    }

    fn get(&self, line: usize, t: Tok<'_>) -> Result<usize> {
        self.index
            .get(t.text)
            .copied()
            .ok_or_else(|| Error::parse(line, t.col, format!("unknown {} '{}'", self.what, t.text)))
    }
}

type Triple = (usize, usize, usize);

pub fn parse_model(text: &str) -> Result<ParsedModel> {
    let mut states = Names::new("state");
    let mut actions = Names::new("action");
    let mut props = Names::new("proposition");
    let mut initial: Option<usize> = None;
    let mut labels: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut trans: BTreeMap<Triple, f64> = BTreeMap::new();
    let mut rewards: HashMap<(usize, usize), f64> = HashMap::new();
    let mut costs: HashMap<(usize, usize), f64> = HashMap::new();
    let mut seen_states = false;
    let mut seen_actions = false;
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        last_line = ln;
        let toks = tokens(raw);
        let Some(&head) = toks.first() else { continue };
        let args = &toks[1..];
        let need = |n: usize| -> Result<()> {
            if args.len() != n {
                let col = args.get(n).map_or(head.col, |t| t.col);
                return Err(Error::parse(ln, col, format!("'{}' takes {n} arguments", head.text)));
            }
            Ok(())
        };
        match head.text {
            "states" | "actions" | "props" => {
                let (names, seen) = match head.text {
                    "states" => (&mut states, &mut seen_states),
                    "actions" => (&mut actions, &mut seen_actions),
                    _ => (&mut props, &mut true),
                };
                if head.text != "props" && args.is_empty() {
                    return Err(Error::parse(ln, head.col, format!("'{}' needs at least one name", head.text)));
                }
                *seen = true;
                for &t in args {
                    names.declare(ln, t)?;
                }
            }
            "initial" => {
                need(1)?;
                if initial.is_some() {
                    return Err(Error::parse(ln, head.col, "initial state declared twice"));
                }
                initial = Some(states.get(ln, args[0])?);
            }
            "label" => {
                if args.is_empty() {
                    return Err(Error::parse(ln, head.col, "'label' needs a state"));
                }
                let s = states.get(ln, args[0])?;
                let entry = labels.entry(s).or_default();
                for &t in &args[1..] {
                    let p = props.get(ln, t)?;
                    if !entry.contains(&p) {
                        entry.push(p);
                    }
                }
            }
            "trans" => {
                need(4)?;
                let s = states.get(ln, args[0])?;
                let a = actions.get(ln, args[1])?;
                let t = states.get(ln, args[2])?;
                let p = parse_f64(ln, args[3])?;
                if trans.insert((s, a, t), p).is_some() {
                    return Err(Error::parse(ln, head.col, "duplicate transition triple"));
                }
            }
            "reward" | "cost" => {
                need(3)?;
                let s = states.get(ln, args[0])?;
                let a = actions.get(ln, args[1])?;
                let v = parse_f64(ln, args[2])?;
                let table = if head.text == "reward" { &mut rewards } else { &mut costs };
                if table.insert((s, a), v).is_some() {
                    return Err(Error::parse(ln, head.col, format!("duplicate {} entry", head.text)));
                }
            }
            other => {
                return Err(Error::parse(ln, head.col, format!("unknown directive '{other}'")));
            }
        }
    }

    if !seen_states {
        return Err(Error::parse(last_line.max(1), 1, "missing 'states' declaration"));
    }
    if !seen_actions {
        return Err(Error::parse(last_line.max(1), 1, "missing 'actions' declaration"));
    }
    let initial =
        initial.ok_or_else(|| Error::parse(last_line.max(1), 1, "missing 'initial' declaration"))?;

    let n = states.names.len();
    let mut choices: Vec<Vec<Choice>> = vec![Vec::new(); n];
    for (&(s, a, t), &p) in &trans {
        let row = &mut choices[s];
        match row.last_mut() {
            Some(c) if c.action == a => c.succ.push((t, p)),
            _ => row.push(Choice { action: a, succ: vec![(t, p)] }),
        }
    }
    let mut label_vec = vec![Vec::new(); n];
    for (s, mut l) in labels {
        l.sort_unstable();
        label_vec[s] = l;
    }
    let mdp = Mdp {
        state_names: states.names,
        action_names: actions.names,
        prop_names: props.names,
        initial,
        choices,
        labels: label_vec,
    };
    let violations = validate_mdp(&mdp);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    let reward = build_utility(&mdp, UtilityKind::Reward, &rewards)?;
    let cost = build_utility(&mdp, UtilityKind::Cost, &costs)?;
    Ok(ParsedModel { mdp, reward, cost })
}

fn build_utility(
    m: &Mdp,
    kind: UtilityKind,
    table: &HashMap<(usize, usize), f64>,
) -> Result<Option<UtilityFn>> {
    if table.is_empty() {
        return Ok(None);
    }
    let word = if kind == UtilityKind::Reward { "reward" } else { "cost" };
    for &(s, a) in table.keys() {
        if m.choice_index(s, a).is_none() {
            return Err(Error::Param(format!(
                "{word} given for unavailable pair ({}, {})",
                m.state_names[s], m.action_names[a]
            )));
        }
    }
    let mut missing = None;
    let u = UtilityFn::from_fn(m, kind, |s, a| match table.get(&(s, a)) {
        Some(&v) => v,
        None => {
            missing.get_or_insert((s, a));
            0.0
        }
    });
    if let Some((s, a)) = missing {
        return Err(Error::Param(format!(
            "missing {word} for ({}, {})",
            m.state_names[s], m.action_names[a]
        )));
    }
    u.validate(m)?;
    Ok(Some(u))
}

/// Canonical text for a model, optionally with inline utilities.
pub fn write_model(m: &Mdp, reward: Option<&UtilityFn>, cost: Option<&UtilityFn>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "states {}", m.state_names.join(" "));
    let _ = writeln!(out, "actions {}", m.action_names.join(" "));
    if !m.prop_names.is_empty() {
        let _ = writeln!(out, "props {}", m.prop_names.join(" "));
    }
    let _ = writeln!(out, "initial {}", m.state_names[m.initial]);
    for (s, lab) in m.labels.iter().enumerate() {
        if !lab.is_empty() {
            let names: Vec<&str> = lab.iter().map(|&p| m.prop_names[p].as_str()).collect();
            let _ = writeln!(out, "label {} {}", m.state_names[s], names.join(" "));
        }
    }
    for (s, row) in m.choices.iter().enumerate() {
        for c in row {
            let mut succ = c.succ.clone();
            succ.sort_by_key(|e| e.0);
            for (t, p) in succ {
                let _ = writeln!(
                    out,
                    "trans {} {} {} {}",
                    m.state_names[s], m.action_names[c.action], m.state_names[t], p
                );
            }
        }
    }
    for (word, u) in [("reward", reward), ("cost", cost)] {
        let Some(u) = u else { continue };
        for (s, row) in m.choices.iter().enumerate() {
            for (i, c) in row.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{word} {} {} {}",
                    m.state_names[s], m.action_names[c.action], u.values[s][i]
                );
            }
        }
    }
    out
}
