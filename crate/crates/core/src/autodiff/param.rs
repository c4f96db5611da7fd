use std::collections::HashMap;

use crate::linalg::DenseMatrix;

/// Whether a parameter is a weight matrix (subject to L2) or a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.n_rows(), value.n_cols());
        Self {
            name: name.into(),
            kind,
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.values_mut().fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, name-addressable collection of parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on a duplicate name.
    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: DenseMatrix) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter {name}"
        );
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter::new(name, kind, value));
        ParamId(id)
    }

    pub fn weight(&mut self, name: impl Into<String>, value: DenseMatrix) -> ParamId {
        self.add(name, ParamKind::Weight, value)
    }

    pub fn bias(&mut self, name: impl Into<String>, value: DenseMatrix) -> ParamId {
        self.add(name, ParamKind::Bias, value)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn weight_ids(&self) -> Vec<ParamId> {
        self.ids()
            .filter(|&id| self.get(id).kind == ParamKind::Weight)
            .collect()
    }

    /// Copies values (not gradients) from a set with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamSet) {
        assert_eq!(self.len(), other.len());
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.clone_from(&src.value);
        }
    }
}
