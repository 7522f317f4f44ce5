use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::FockError;

/// Ordered, immutable list of optical mode labels.
///
/// Every matrix and occupation vector in the crate is indexed by the order
/// fixed here. Cloning is cheap; two registries compare equal when they hold
/// the same labels in the same order.
#[derive(Clone)]
pub struct ModeRegistry {
    inner: Arc<Inner>,
}

struct Inner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ModeRegistry {
    pub fn new<I, S>(names: I) -> Result<Self, FockError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(FockError::EmptyRegistry);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(FockError::DuplicateMode(name.clone()));
            }
        }
        Ok(Self { inner: Arc::new(Inner { names, index }) })
    }

    pub fn len(&self) -> usize {
        self.inner.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &[String] {
        &self.inner.names
    }

    pub fn name(&self, mode: usize) -> &str {
        &self.inner.names[mode]
    }

    pub fn index(&self, name: &str) -> Result<usize, FockError> {
        self.inner
            .index
            .get(name)
            .copied()
            .ok_or_else(|| FockError::UnknownMode(name.to_string()))
    }

    pub fn indices(&self, names: &[&str]) -> Result<Vec<usize>, FockError> {
        names.iter().map(|n| self.index(n)).collect()
    }

    /// A new registry with `extra` labels appended after the existing ones.
    pub fn extended<I, S>(&self, extra: I) -> Result<Self, FockError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names = self
            .inner
            .names
            .iter()
            .cloned()
            .chain(extra.into_iter().map(Into::into));
        Self::new(names)
    }

    /// Position of each of our modes inside `target`, matched by label.
    pub fn embedding_into(&self, target: &ModeRegistry) -> Result<Vec<usize>, FockError> {
        self.inner.names.iter().map(|n| target.index(n)).collect()
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<(), FockError> {
        if mode < self.len() {
            Ok(())
        } else {
            Err(FockError::ModeOutOfRange { index: mode, modes: self.len() })
        }
    }
}

impl PartialEq for ModeRegistry {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.names == other.inner.names
    }
}

impl Eq for ModeRegistry {}

impl fmt::Debug for ModeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.inner.names.iter()).finish()
    }
}
