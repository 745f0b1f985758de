use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{Params, TransducerProgram, TransducerSpec};
use crate::error::{Error, Result};

/// A named in-process transducer.
pub trait Builtin: Send + Sync {
    fn name(&self) -> &str;

    /// Validates declared schemas and parameters before execution starts.
    fn check(&self, _spec: &TransducerSpec, _params: &Params) -> Result<()> {
        Ok(())
    }

    /// Creates the program for one instance.
    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>>;
}

/// Builtin backed by a factory closure; handy for ad-hoc programs in tests.
pub struct FnBuiltin<F> {
    name: String,
    factory: F,
}

impl<F> FnBuiltin<F>
where
    F: Fn(&Params) -> Result<Box<dyn TransducerProgram>> + Send + Sync,
{
    pub fn new(name: impl Into<String>, factory: F) -> Self {
        FnBuiltin {
            name: name.into(),
            factory,
        }
    }
}

impl<F> Builtin for FnBuiltin<F>
where
    F: Fn(&Params) -> Result<Box<dyn TransducerProgram>> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn instantiate(&self, params: &Params) -> Result<Box<dyn TransducerProgram>> {
        (self.factory)(params)
    }
}

#[derive(Clone, Default)]
pub struct Registry {
    builtins: BTreeMap<String, Arc<dyn Builtin>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, b: impl Builtin + 'static) -> &mut Self {
        self.builtins
            .insert(b.name().to_ascii_lowercase(), Arc::new(b));
        self
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Builtin>> {
        self.builtins
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| Error::Plan(format!("no builtin transducer named '{name}'")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builtins.keys().map(String::as_str)
    }
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.builtins.keys()).finish()
    }
}
