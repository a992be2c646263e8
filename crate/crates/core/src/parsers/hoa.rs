use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{Dra, RabinPair, Symbol, MAX_AP};

#[derive(Debug, Clone)]
enum Guard {
    True,
    False,
    Ap(usize),
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    fn eval(&self, sym: Symbol) -> bool {
        match self {
            Guard::True => true,
            Guard::False => false,
            Guard::Ap(i) => sym & (1 << i) != 0,
            Guard::Not(g) => !g.eval(sym),
            Guard::And(a, b) => a.eval(sym) && b.eval(sym),
            Guard::Or(a, b) => a.eval(sym) || b.eval(sym),
        }
    }
}

/// Recursive-descent parser over the characters of one guard.
struct GuardParser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: usize,
    base_col: usize,
    n_ap: usize,
    _src: &'a str,
}

impl<'a> GuardParser<'a> {
    fn col(&self) -> usize {
        self.base_col + self.chars.get(self.pos).map_or(self.chars.len(), |c| c.0)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, self.col(), msg)
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.1.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn expr(&mut self) -> Result<Guard> {
        let mut g = self.term()?;
        while self.peek() == Some('|') {
            self.pos += 1;
            g = Guard::Or(Box::new(g), Box::new(self.term()?));
        }
        Ok(g)
    }

    fn term(&mut self) -> Result<Guard> {
        let mut g = self.factor()?;
        while self.peek() == Some('&') {
            self.pos += 1;
            g = Guard::And(Box::new(g), Box::new(self.factor()?));
        }
        Ok(g)
    }

    fn factor(&mut self) -> Result<Guard> {
        match self.peek() {
            Some('!') => {
                self.pos += 1;
                Ok(Guard::Not(Box::new(self.factor()?)))
            }
            Some('(') => {
                self.pos += 1;
                let g = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(g)
            }
            Some('t') => {
                self.pos += 1;
                Ok(Guard::True)
            }
            Some('f') => {
                self.pos += 1;
                Ok(Guard::False)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|c| c.1.is_ascii_digit()) {
                    self.pos += 1;
                }
                let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                let i: usize = s.parse().map_err(|_| self.err("bad proposition index"))?;
                if i >= self.n_ap {
                    self.pos = start;
                    return Err(self.err(format!("proposition index {i} out of range")));
                }
                Ok(Guard::Ap(i))
            }
            _ => Err(self.err("expected a guard")),
        }
    }
}

fn parse_guard(src: &str, line: usize, base_col: usize, n_ap: usize) -> Result<Guard> {
    let mut p = GuardParser {
        chars: src.char_indices().collect(),
        pos: 0,
        line,
        base_col,
        n_ap,
        _src: src,
    };
    let g = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input in guard"));
    }
    Ok(g)
}

fn parse_usize(s: &str, line: usize, col: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::parse(line, col, format!("expected a non-negative integer, found '{s}'")))
}

/// Splits a header value into tokens, keeping quoted strings whole.
fn header_tokens(s: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut j = i + 1;
            let mut text = String::new();
            while j < chars.len() && chars[j].1 != '"' {
                text.push(chars[j].1);
                j += 1;
            }
            out.push((pos, format!("\"{text}\"")));
            i = j + 1;
        } else {
            let mut j = i;
            let mut text = String::new();
            while j < chars.len() && !chars[j].1.is_whitespace() {
                text.push(chars[j].1);
                j += 1;
            }
            out.push((pos, text));
            i = j;
        }
    }
    out
}

/// Rabin acceptance as (fin set, inf set) index pairs.
fn parse_acceptance(cond: &str, line: usize, col: usize) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for disj in cond.split('|') {
        let d = disj.trim().trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<&str> = d.split('&').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::parse(line, col, format!("expected 'Fin(i)&Inf(j)', found '{}'", disj.trim())));
        }
        let mut fin = None;
        let mut inf = None;
        for p in parts {
            let p = p.trim_start_matches('(').trim_end_matches(')').trim();
            let (slot, inner) = if let Some(rest) = p.strip_prefix("Fin(") {
                (&mut fin, rest)
            } else if let Some(rest) = p.strip_prefix("Inf(") {
                (&mut inf, rest)
            } else {
                return Err(Error::parse(line, col, format!("unsupported acceptance atom '{p}'")));
            };
            let idx = parse_usize(inner.trim_end_matches(')').trim(), line, col)?;
            if slot.replace(idx).is_some() {
                return Err(Error::parse(line, col, "pair must have one Fin and one Inf"));
            }
        }
        match (fin, inf) {
            (Some(f), Some(i)) => pairs.push((f, i)),
            _ => return Err(Error::parse(line, col, "pair must have one Fin and one Inf")),
        }
    }
    Ok(pairs)
}

/// Parses the HOA subset with Rabin acceptance and state-based marks.
pub fn parse_dra(text: &str) -> Result<Dra> {
    let mut n_states: Option<usize> = None;
    let mut start: Option<usize> = None;
    let mut ap: Option<Vec<String>> = None;
    let mut acc: Option<(usize, Vec<(usize, usize)>)> = None;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut in_body = false;
    let mut last = 0;

    for (ln, raw) in lines.by_ref() {
        last = ln;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("/*") {
            continue;
        }
        if line == "--BODY--" {
            in_body = true;
            break;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(Error::parse(ln, 1, format!("expected 'Header: value', found '{line}'")));
        };
        let vcol = raw.find(':').unwrap() + 2;
        let toks = header_tokens(value);
        match key.trim() {
            "HOA" => {}
            "States" => {
                let t = toks.first().ok_or_else(|| Error::parse(ln, vcol, "missing state count"))?;
                n_states = Some(parse_usize(&t.1, ln, vcol + t.0)?);
            }
            "Start" => {
                if start.is_some() {
                    return Err(Error::parse(ln, 1, "only one start state is supported"));
                }
                if toks.len() != 1 || toks[0].1.contains('&') {
                    return Err(Error::parse(ln, vcol, "expected a single start state"));
                }
                start = Some(parse_usize(&toks[0].1, ln, vcol + toks[0].0)?);
            }
            "AP" => {
                let t = toks.first().ok_or_else(|| Error::parse(ln, vcol, "missing AP count"))?;
                let k = parse_usize(&t.1, ln, vcol + t.0)?;
                let names: Vec<String> = toks[1..]
                    .iter()
                    .map(|(_, s)| s.trim_matches('"').to_string())
                    .collect();
                if names.len() != k {
                    return Err(Error::parse(ln, vcol, format!("AP declares {k} names, found {}", names.len())));
                }
                if k > MAX_AP {
                    return Err(Error::parse(ln, vcol, format!("at most {MAX_AP} propositions supported")));
                }
                ap = Some(names);
            }
            "Acceptance" => {
                let t = toks.first().ok_or_else(|| Error::parse(ln, vcol, "missing set count"))?;
                let m = parse_usize(&t.1, ln, vcol + t.0)?;
                let cond = value.trim_start().strip_prefix(t.1.as_str()).unwrap_or("").trim();
                let pairs = parse_acceptance(cond, ln, vcol)?;
                if pairs.iter().any(|&(f, i)| f >= m || i >= m) {
                    return Err(Error::parse(ln, vcol, "acceptance set index out of range"));
                }
                acc = Some((m, pairs));
            }
            _ => {}
        }
    }
    if !in_body {
        return Err(Error::parse(last.max(1), 1, "missing '--BODY--'"));
    }
    let n = n_states.ok_or_else(|| Error::parse(last, 1, "missing 'States' header"))?;
    let start = start.ok_or_else(|| Error::parse(last, 1, "missing 'Start' header"))?;
    let ap = ap.unwrap_or_default();
    let (n_sets, acc_pairs) = acc.ok_or_else(|| Error::parse(last, 1, "missing 'Acceptance' header"))?;
    if start >= n {
        return Err(Error::parse(last, 1, "start state out of range"));
    }

    let mut d = Dra::new(ap, n, start);
    let width = d.n_symbols();
    let mut marks: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut declared = vec![false; n];
    let mut cur: Option<usize> = None;
    let mut ended = false;
    for (ln, raw) in lines {
        last = ln;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "--END--" {
            ended = true;
            break;
        }
        let lead = raw.len() - raw.trim_start().len();
        if let Some(rest) = line.strip_prefix("State:") {
            let toks = header_tokens(rest);
            let first = toks.first().ok_or_else(|| Error::parse(ln, lead + 1, "missing state index"))?;
            let q = parse_usize(&first.1, ln, lead + 7 + first.0)?;
            if q >= n {
                return Err(Error::parse(ln, lead + 7 + first.0, format!("state {q} out of range")));
            }
            if declared[q] {
                return Err(Error::parse(ln, lead + 1, format!("state {q} declared twice")));
            }
            declared[q] = true;
            let mut rest_toks = &toks[1..];
            if let Some((_, name)) = rest_toks.first().filter(|t| t.1.starts_with('"')) {
                d.state_names[q] = name.trim_matches('"').to_string();
                rest_toks = &rest_toks[1..];
            }
            let tail: String = rest_toks.iter().map(|t| t.1.as_str()).collect::<Vec<_>>().join(" ");
            let tail = tail.trim();
            if !tail.is_empty() {
                let inner = tail
                    .strip_prefix('{')
                    .and_then(|t| t.strip_suffix('}'))
                    .ok_or_else(|| Error::parse(ln, lead + 1, "expected '{sets}' after state"))?;
                for s in inner.split_whitespace() {
                    let k = parse_usize(s, ln, lead + 1)?;
                    if k >= n_sets {
                        return Err(Error::parse(ln, lead + 1, format!("acceptance set {k} out of range")));
                    }
                    marks[q].push(k);
                }
            }
            cur = Some(q);
            continue;
        }
        let q = cur.ok_or_else(|| Error::parse(ln, lead + 1, "edge before any 'State:'"))?;
        let body = line
            .strip_prefix('[')
            .ok_or_else(|| Error::parse(ln, lead + 1, "expected '[guard] target'"))?;
        let close = body.find(']').ok_or_else(|| Error::parse(ln, lead + 1, "missing ']'"))?;
        let guard = parse_guard(&body[..close], ln, lead + 2, d.ap.len())?;
        let target_txt = body[close + 1..].trim();
        if target_txt.contains('{') {
            return Err(Error::parse(ln, lead + close + 3, "transition-based acceptance is not supported"));
        }
        let tcol = lead + 2 + close + 1 + (body[close + 1..].len() - body[close + 1..].trim_start().len()) + 1;
        if target_txt.split_whitespace().count() != 1 {
            return Err(Error::parse(ln, tcol, "expected a single target state"));
        }
        let t = parse_usize(target_txt, ln, tcol)?;
        if t >= n {
            return Err(Error::parse(ln, tcol, format!("target {t} out of range")));
        }
        for sym in 0..width {
            if guard.eval(sym as Symbol) {
                if d.delta[q][sym].is_some() {
                    return Err(Error::Nondeterminism { state: q, symbol: sym as Symbol });
                }
                d.delta[q][sym] = Some(t);
            }
        }
    }
    if !ended {
        return Err(Error::parse(last, 1, "missing '--END--'"));
    }
    for (q, row) in d.delta.iter().enumerate() {
        if let Some(sym) = row.iter().position(Option::is_none) {
            return Err(Error::Incompleteness { state: q, symbol: sym as Symbol });
        }
    }
    d.pairs = acc_pairs
        .iter()
        .map(|&(fin, inf)| RabinPair {
            bad: (0..n).filter(|&q| marks[q].contains(&fin)).collect(),
            good: (0..n).filter(|&q| marks[q].contains(&inf)).collect(),
        })
        .collect();
    d.validate()?;
    Ok(d)
}

fn minterm(sym: usize, n_ap: usize) -> String {
    (0..n_ap)
        .map(|i| if sym & (1 << i) != 0 { i.to_string() } else { format!("!{i}") })
        .collect::<Vec<_>>()
        .join("&")
}

/// Canonical HOA text: one edge per target, guards as minterm disjunctions.
pub fn write_dra(d: &Dra) -> String {
    let mut out = String::new();
    let n_ap = d.ap.len();
    let _ = writeln!(out, "HOA: v1");
    let _ = writeln!(out, "States: {}", d.n_states());
    let _ = writeln!(out, "Start: {}", d.initial);
    let names: Vec<String> = d.ap.iter().map(|a| format!("\"{a}\"")).collect();
    let _ = writeln!(out, "AP: {}{}{}", n_ap, if n_ap > 0 { " " } else { "" }, names.join(" "));
    let conds: Vec<String> =
        (0..d.pairs.len()).map(|k| format!("(Fin({})&Inf({}))", 2 * k, 2 * k + 1)).collect();
    let _ = writeln!(out, "acc-name: Rabin {}", d.pairs.len());
    let _ = writeln!(out, "Acceptance: {} {}", 2 * d.pairs.len(), conds.join(" | "));
    let _ = writeln!(out, "--BODY--");
    for q in 0..d.n_states() {
        let mut sets = Vec::new();
        for (k, p) in d.pairs.iter().enumerate() {
            if p.bad.contains(&q) {
                sets.push(2 * k);
            }
            if p.good.contains(&q) {
                sets.push(2 * k + 1);
            }
        }
        let marks = if sets.is_empty() {
            String::new()
        } else {
            format!(" {{{}}}", sets.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "))
        };
        let _ = writeln!(out, "State: {} \"{}\"{}", q, d.state_names[q], marks);
        let mut targets: Vec<usize> = d.delta[q].iter().flatten().copied().collect();
        targets.sort_unstable();
        targets.dedup();
        for t in targets {
            let syms: Vec<usize> = (0..d.n_symbols()).filter(|&s| d.delta[q][s] == Some(t)).collect();
            let guard = if syms.len() == d.n_symbols() {
                "t".to_string()
            } else {
                syms.iter().map(|&s| format!("({})", minterm(s, n_ap))).collect::<Vec<_>>().join(" | ")
            };
            let _ = writeln!(out, "[{guard}] {t}");
        }
    }
    let _ = writeln!(out, "--END--");
    out
}
