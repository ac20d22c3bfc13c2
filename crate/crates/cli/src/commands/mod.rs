use serde_json::Value;

use crate::table::Table;

pub mod bin;
pub mod estimate;
pub mod fisher;
pub mod ising;
pub mod probe;
pub mod sweep;

/// What a subcommand produced.
pub struct Output {
    pub table: Table,
    /// JSON document replacing the generic table layout.
    pub document: Option<Value>,
    /// Solver hit its iteration cap somewhere; the output is partial.
    pub unconverged: bool,
    /// A requested check did not pass.
    pub failed_check: Option<String>,
}

impl From<Table> for Output {
    fn from(table: Table) -> Self {
        Self {
            table,
            document: None,
            unconverged: false,
            failed_check: None,
        }
    }
}
