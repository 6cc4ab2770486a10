use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: ArrayD<T>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamError {
    Duplicate(String),
    Missing(String),
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl std::fmt::Display for ParamError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamError::Duplicate(n) => write!(f, "parameter {n:?} registered twice"),
            ParamError::Missing(n) => write!(f, "parameter {n:?} is missing"),
            ParamError::ShapeMismatch { name, expected, found } => {
                write!(f, "parameter {name:?} has shape {found:?}, expected {expected:?}")
            }
        }
    }
}

impl std::error::Error for ParamError {}

/// Named parameters in canonical (sorted) order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<T>, trainable: bool) -> Result<(), ParamError> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(ParamError::Duplicate(name));
        }
        self.params.insert(name, Param { value, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Option<&ArrayD<T>> {
        self.params.get(name).map(|p| &p.value)
    }

    /// Replaces a value, keeping the shape contract.
    pub fn set(&mut self, name: &str, value: ArrayD<T>) -> Result<(), ParamError> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| ParamError::Missing(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(ParamError::ShapeMismatch {
                name: name.to_string(),
                expected: p.value.shape().to_vec(),
                found: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn num_trainable(&self) -> usize {
        self.params.values().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Element-type conversion, e.g. to run a gradient check in `f64`.
    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.mapv(|v| U::of(v.as_f64())),
                            trainable: p.trainable,
                        },
                    )
                })
                .collect(),
        }
    }
}
