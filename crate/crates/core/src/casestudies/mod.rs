//! Grid-world generators: an item-delivery robot (`case1`) and a factory
//! loop with a permission-gated pickup (`case2`).

pub mod case1;
pub mod case2;

pub use case1::{gen_case1, run_case1, Case1, Case1Params, Case1Report};
pub use case2::{gen_case2, run_case2, Case2, Case2Params, Case2Report};

use crate::error::{Error, Result};

pub type Cell = [usize; 2];

pub(crate) fn check_cell(what: &str, c: Cell, rows: usize, cols: usize) -> Result<()> {
    if c[0] >= rows || c[1] >= cols {
        return Err(Error::Param(format!("{what} {c:?} outside the {rows}x{cols} grid")));
    }
    Ok(())
}

pub(crate) fn manhattan(a: Cell, b: Cell) -> usize {
    a[0].abs_diff(b[0]) + a[1].abs_diff(b[1])
}

/// Parses TOML parameters, reporting failures as parameter errors.
pub fn parse_params<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Param(format!("case-study parameters: {e}")))
}
