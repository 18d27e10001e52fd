//! Named parameter collections.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// An ordered map from parameter name to tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params<T = f32> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Self { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Option<Tensor<T>> {
        self.map.insert(name.into(), value)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.map.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.map.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.map.remove(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params { map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> Params<T> {
        Params {
            map: self
                .map
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Copy of every entry with `prefix` prepended to its name.
    pub fn with_prefix(&self, prefix: &str) -> Params<T> {
        Params { map: self.map.iter().map(|(k, v)| (alloc::format!("{prefix}{k}"), v.clone())).collect() }
    }

    pub fn extend(&mut self, other: Params<T>) {
        self.map.extend(other.map);
    }

    /// Places every tensor on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> Bound {
        Bound { map: self.map.iter().map(|(k, v)| (k.clone(), tape.leaf(v.clone(), requires_grad))).collect() }
    }

    /// Checks that this set holds exactly the names and shapes of `schema`.
    pub fn check_schema(&self, schema: &[(String, Vec<usize>)]) -> Result<()> {
        for (name, shape) in schema {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ParamShape { name: name.clone(), expected: shape.clone(), found: t.shape().to_vec() });
            }
        }
        if self.map.len() != schema.len() {
            let extra = self.map.keys().find(|k| !schema.iter().any(|(n, _)| n == *k)).expect("extra name");
            return Err(Error::UnexpectedParam(extra.clone()));
        }
        Ok(())
    }
}

impl<T> FromIterator<(String, Tensor<T>)> for Params<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        Self { map: iter.into_iter().collect() }
    }
}

/// Parameters placed on a tape, looked up by name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    map: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.map.get(name).copied().ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Replaces the binding of `name`, e.g. to route one tensor through a
    /// gradient-tracked leaf while the rest stay constant.
    pub fn rebind(&mut self, name: &str, var: Var) {
        self.map.insert(name.to_string(), var);
    }

    /// Collects the accumulated gradients of every bound leaf.
    pub fn grads<T: Real>(&self, tape: &Tape<T>) -> Params<T> {
        self.map
            .iter()
            .filter_map(|(k, &v)| tape.grad_tensor(v).map(|g| (k.clone(), g)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn schema_check_reports_first_problem() {
        let mut p = Params::<f32>::new();
        p.insert("a", Tensor::zeros(&[2]));
        p.insert("b", Tensor::zeros(&[3]));
        let schema = vec![("a".to_string(), vec![2]), ("b".to_string(), vec![3])];
        p.check_schema(&schema).unwrap();

        let wrong = vec![("a".to_string(), vec![2]), ("b".to_string(), vec![4])];
        assert!(matches!(p.check_schema(&wrong), Err(Error::ParamShape { ref name, .. }) if name == "b"));

        p.insert("c", Tensor::zeros(&[1]));
        assert!(matches!(p.check_schema(&schema), Err(Error::UnexpectedParam(ref n)) if n == "c"));
        p.remove("a");
        assert!(matches!(p.check_schema(&schema), Err(Error::MissingParam(ref n)) if n == "a"));
    }

    #[test]
    fn prefixes_round_trip() {
        let mut p = Params::<f32>::new();
        p.insert("w", Tensor::zeros(&[1]));
        let q = p.with_prefix("gen.");
        assert!(q.contains("gen.w"));
        assert_eq!(q.strip_prefix("gen."), p);
    }
}
