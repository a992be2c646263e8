use std::fmt::Write;

use super::{fmt_prob, parse_f64, tokens};
use crate::error::{Error, Result};
use crate::model::{Mdp, StationaryPolicy};

/// Canonical policy text. Rows are sorted by (state name, action name),
/// zero-probability entries are omitted, and `meta` becomes `#` comments.
pub fn write_policy(m: &Mdp, p: &StationaryPolicy, meta: &[(&str, String)]) -> String {
    let mut out = String::from("# effsynth policy v1\n");
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let mut rows: Vec<(&str, &str, f64)> = Vec::new();
    for (s, row) in m.choices.iter().enumerate() {
        for (i, c) in row.iter().enumerate() {
            let q = p.probs[s][i];
            if q != 0.0 {
                rows.push((&m.state_names[s], &m.action_names[c.action], q));
            }
        }
    }
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for (s, a, q) in rows {
        let _ = writeln!(out, "{s} {a} {}", fmt_prob(q));
    }
    out
}

pub fn parse_policy(text: &str, m: &Mdp) -> Result<StationaryPolicy> {
    let mut probs: Vec<Vec<f64>> = m.choices.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut set: Vec<Vec<bool>> = m.choices.iter().map(|r| vec![false; r.len()]).collect();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let toks = tokens(raw);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 {
            return Err(Error::parse(ln, toks[0].col, "expected 'state action probability'"));
        }
        let s = m.state_index(toks[0].text).ok_or_else(|| {
            Error::PolicyMismatch(format!("line {ln}: unknown state '{}'", toks[0].text))
        })?;
        let ci = m
            .action_index(toks[1].text)
            .and_then(|a| m.choice_index(s, a))
            .ok_or_else(|| {
                Error::PolicyMismatch(format!(
                    "line {ln}: action '{}' not available in state '{}'",
                    toks[1].text, toks[0].text
                ))
            })?;
        if set[s][ci] {
            return Err(Error::parse(ln, toks[0].col, "duplicate (state, action) entry"));
        }
        set[s][ci] = true;
        probs[s][ci] = parse_f64(ln, toks[2])?;
    }
    let p = StationaryPolicy { probs };
    p.validate(m)?;
    Ok(p)
}
