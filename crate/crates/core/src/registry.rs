//! Name-keyed registries of interchangeable strategies.
//!
//! Every family of swappable algorithms (spectral encodings, kernel resizers,
//! masking modes, scale schedules) is exposed as a trait object and looked up
//! by name, so configs and the CLI can select variants at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{AomError, Result};

type Factory<T> = Arc<dyn Fn() -> Box<T> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Box<T> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| AomError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn create_by_name_and_report_unknown() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register("hello", || Box::new(Hello));
        assert_eq!(reg.create("hello").unwrap().greet(), "hello");
        let err = reg.create("bye").err().unwrap().to_string();
        assert!(err.contains("greeter") && err.contains("hello"), "{err}");
    }
}
