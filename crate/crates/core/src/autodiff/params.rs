use ndarray::{Array4, ArrayD, IxDyn};

use crate::error::{Error, Result};

/// Handle to one array in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of learnable arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Sets every parameter whose name starts with `prefix` to zero.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (n, v) in self.names.iter().zip(self.values.iter_mut()) {
            if n.starts_with(prefix) {
                v.fill(0.0);
            }
        }
    }

    /// Copies values from `other` by name; shapes must agree and every name must exist.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, value) in other.iter() {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Usage(format!("unknown parameter `{name}` in checkpoint")))?;
            if self.values[id.0].shape() != value.shape() {
                return Err(Error::dim(format!(
                    "parameter `{name}`: checkpoint shape {:?} vs model {:?}",
                    value.shape(),
                    self.values[id.0].shape()
                )));
            }
            self.values[id.0].assign(value);
        }
        if let Some(missing) = self.names.iter().find(|n| other.find(n).is_none()) {
            return Err(Error::Usage(format!("checkpoint lacks parameter `{missing}`")));
        }
        Ok(())
    }
}

/// Lifts a parameter to the 4-D tensor layout used on the tape: vectors become
/// per-channel `(1, c, 1, 1)`.
pub(crate) fn to_tensor(v: &ArrayD<f64>) -> Array4<f64> {
    match v.ndim() {
        4 => v.clone().into_dimensionality().expect("4-d"),
        1 => v
            .clone()
            .into_shape_with_order((1, v.len(), 1, 1))
            .expect("vector"),
        0 => Array4::from_elem((1, 1, 1, 1), v[IxDyn(&[])]),
        d => panic!("unsupported parameter rank {d}"),
    }
}
