//! Readers and writers for the text formats: models, Rabin automata
//! (HOA subset), utility tables and policies. Grammars are in
//! `docs/formats.md`.

mod hoa;
mod model_file;
mod policy;
mod table;

pub use hoa::{parse_dra, write_dra};
pub use model_file::{parse_mdp, parse_model, write_model, ParsedModel};
pub use policy::{parse_policy, write_policy};
pub use table::{parse_utility_table, write_utility_table};

use crate::error::{Error, Result};

/// A whitespace-separated token with its 1-based column.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tok<'a> {
    pub col: usize,
    pub text: &'a str,
}

/// Splits a line into tokens, dropping a trailing `#` comment.
pub(crate) fn tokens(line: &str) -> Vec<Tok<'_>> {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in body.char_indices() {
        if ch.is_whitespace() {
            if let Some(st) = start.take() {
                out.push(Tok { col: st + 1, text: &body[st..i] });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push(Tok { col: st + 1, text: &body[st..] });
    }
    out
}

pub(crate) fn parse_f64(line: usize, t: Tok<'_>) -> Result<f64> {
    let ok = !t.text.is_empty()
        && t.text.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    match t.text.parse::<f64>() {
        Ok(v) if ok && v.is_finite() => Ok(v),
        _ => Err(Error::parse(line, t.col, format!("expected a decimal number, found '{}'", t.text))),
    }
}

/// Formats a probability with 12 significant digits.
pub(crate) fn fmt_prob(p: f64) -> String {
    format!("{p:.11e}")
}
