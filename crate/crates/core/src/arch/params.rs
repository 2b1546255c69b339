//! Named parameter storage.

use indexmap::IndexMap;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Insertion-ordered map from parameter name to value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T: Real = f32> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            entries: IndexMap::new(),
        }
    }

    /// Add a new parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidShape(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar elements.
    pub fn total_count(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Record every parameter as a named leaf on `tape`.
    pub fn bind(&self, tape: &Tape<T>, requires_grad: bool) -> Bound {
        Bound {
            vars: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), tape.param(k, v.clone(), requires_grad)))
                .collect(),
        }
    }

    /// Gradients for every parameter, in store order.
    pub fn collect_grads(&self, bound: &Bound, grads: &mut Gradients<T>) -> Result<Vec<Tensor<T>>> {
        self.entries
            .iter()
            .map(|(k, v)| {
                let var = bound.get(k)?;
                Ok(grads.take(var).unwrap_or_else(|| Tensor::zeros(v.shape())))
            })
            .collect()
    }
}

/// Tape handles of a bound [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_unique_and_counted() {
        let mut s = ParameterStore::<f32>::new();
        s.insert("b", Tensor::zeros([1, 2, 3, 3])).unwrap();
        s.insert("a", Tensor::zeros([1, 1, 1, 1])).unwrap();
        assert!(s.insert("a", Tensor::zeros([1, 1, 1, 1])).is_err());
        assert_eq!(s.names().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(s.total_count(), 19);
        assert!(matches!(s.get("c"), Err(Error::MissingParameter(_))));
    }
}
