//! Text format for models: lexer, parser, validator and canonical printer.

mod diagnostic;
mod lexer;
mod parser;
mod printer;
mod validate;

pub use diagnostic::{codes, Diagnostic, Severity};
pub use parser::{parse_expr, parse_model, Item, ModelSource};
pub use printer::{print_expr, print_model};
pub use validate::{validate, BUILTIN_LABELS};

use crate::model::Model;

/// Parses and validates model text.
pub fn load_model(text: &str) -> Result<Model, Vec<Diagnostic>> {
    validate(&parse_model(text)?)
}
