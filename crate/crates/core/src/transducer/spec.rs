use std::collections::BTreeMap;
use std::fmt;

use crate::datamodel::SchemaRef;

/// `key=value` arguments from a `PHIExec builtin <name> ...` header line.
pub type Params = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecMode {
    /// In-process program registered under `name`.
    Builtin { name: String, params: Params },
    /// Subprocess launched from the command template configured for `lang`.
    External { lang: String },
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecMode::Builtin { name, .. } => write!(f, "builtin {name}"),
            ExecMode::External { lang } => write!(f, "external {lang}"),
        }
    }
}

/// Everything the engine needs to run one transducer plan node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransducerSpec {
    pub in_schema: SchemaRef,
    pub out_schema: SchemaRef,
    pub mode: ExecMode,
    /// Raw script text between the `$$` delimiters.
    pub body: String,
}

impl TransducerSpec {
    /// Name used in diagnostics: the builtin name or the language tag.
    pub fn display_name(&self) -> &str {
        match &self.mode {
            ExecMode::Builtin { name, .. } => name,
            ExecMode::External { lang } => lang,
        }
    }
}
