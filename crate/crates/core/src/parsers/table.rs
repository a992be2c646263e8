use std::collections::HashMap;
use std::fmt::Write;

use super::{parse_f64, tokens};
use crate::error::{Error, Result};
use crate::model::{Mdp, UtilityFn, UtilityKind};

/// Reads `state action reward cost` rows; every available pair must appear
/// exactly once.
pub fn parse_utility_table(text: &str, m: &Mdp) -> Result<(UtilityFn, UtilityFn)> {
    let mut rows: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let toks = tokens(raw);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 4 {
            let col = toks.get(4).map_or(toks[0].col, |t| t.col);
            return Err(Error::parse(ln, col, "expected 'state action reward cost'"));
        }
        let s = m
            .state_index(toks[0].text)
            .ok_or_else(|| Error::parse(ln, toks[0].col, format!("unknown state '{}'", toks[0].text)))?;
        let a = m
            .action_index(toks[1].text)
            .ok_or_else(|| Error::parse(ln, toks[1].col, format!("unknown action '{}'", toks[1].text)))?;
        if m.choice_index(s, a).is_none() {
            return Err(Error::parse(
                ln,
                toks[1].col,
                format!("action '{}' unavailable in state '{}'", toks[1].text, toks[0].text),
            ));
        }
        let r = parse_f64(ln, toks[2])?;
        let c = parse_f64(ln, toks[3])?;
        if rows.insert((s, a), (r, c)).is_some() {
            return Err(Error::parse(ln, toks[0].col, "duplicate (state, action) entry"));
        }
    }
    let mut missing = None;
    let mut get = |s: usize, a: usize, pick: fn((f64, f64)) -> f64| match rows.get(&(s, a)) {
        Some(&v) => pick(v),
        None => {
            missing.get_or_insert((s, a));
            f64::NAN
        }
    };
    let reward = UtilityFn::from_fn(m, UtilityKind::Reward, |s, a| get(s, a, |v| v.0));
    let cost = UtilityFn::from_fn(m, UtilityKind::Cost, |s, a| get(s, a, |v| v.1));
    if let Some((s, a)) = missing {
        return Err(Error::Param(format!(
            "utility table has no entry for ({}, {})",
            m.state_names[s], m.action_names[a]
        )));
    }
    reward.validate(m)?;
    cost.validate(m)?;
    Ok((reward, cost))
}

pub fn write_utility_table(m: &Mdp, reward: &UtilityFn, cost: &UtilityFn) -> String {
    let mut out = String::from("# state action reward cost\n");
    for (s, row) in m.choices.iter().enumerate() {
        for (i, c) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                m.state_names[s], m.action_names[c.action], reward.values[s][i], cost.values[s][i]
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parsers::parse_mdp;

    const M: &str = "states s t\nactions a b\ninitial s\ntrans s a t 1\ntrans s b s 1\ntrans t a s 1\n";

    #[test]
    fn round_trip() {
        let m = parse_mdp(M).unwrap();
        let text = "s a 1 2\ns b -0.5 1\n# comment\nt a 3 0.125\n";
        let (r, c) = parse_utility_table(text, &m).unwrap();
        assert_eq!(r.values, vec![vec![1.0, -0.5], vec![3.0]]);
        assert_eq!(c.values, vec![vec![2.0, 1.0], vec![0.125]]);
        let w = write_utility_table(&m, &r, &c);
        assert_eq!(parse_utility_table(&w, &m).unwrap(), (r, c));
    }

    #[test]
    fn missing_entry_is_error() {
        let m = parse_mdp(M).unwrap();
        assert!(matches!(parse_utility_table("s a 1 2\nt a 3 1\n", &m), Err(Error::Param(_))));
    }

    #[test]
    fn zero_cost_is_error() {
        let m = parse_mdp(M).unwrap();
        assert!(parse_utility_table("s a 1 2\ns b 1 0\nt a 3 1\n", &m).is_err());
    }

    #[test]
    fn unavailable_action_is_parse_error() {
        let m = parse_mdp(M).unwrap();
        assert!(matches!(
            parse_utility_table("t b 1 1\n", &m),
            Err(Error::Parse { line: 1, col: 3, .. })
        ));
    }
}
