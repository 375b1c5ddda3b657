//! Named, trainable parameter storage.
//!
//! Parameters live outside the tape in a [`ParamStore`]; each training step
//! copies their values onto the tape, and `backward` accumulates gradients
//! back into the store. Gradients are additive across backward passes until
//! [`ParamStore::zero_grad`] clears them, which lets a caller accumulate over
//! several graphs before one optimizer step.

use std::fmt;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// One named tensor of trainable (or frozen) values.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    /// `None` until a backward pass touches this parameter.
    pub grad: Option<Vec<f64>>,
    /// Frozen parameters still flow values forward but the optimizer skips
    /// them and backward does not accumulate into them.
    pub trainable: bool,
}

impl Parameter {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Error raised by optimizer steps and store lookups.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamError {
    /// The optimizer was asked to step a trainable parameter whose gradient
    /// was never populated by a backward pass.
    MissingGrad { name: String },
    /// A shape or length disagreed with the stored parameter.
    ShapeMismatch { name: String, expected: usize, got: usize },
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamError::MissingGrad { name } => {
                write!(f, "parameter `{name}` has no gradient; run backward before stepping")
            }
            ParamError::ShapeMismatch { name, expected, got } => {
                write!(f, "parameter `{name}` expects {expected} values, got {got}")
            }
        }
    }
}

impl std::error::Error for ParamError {}

/// Flat collection of parameters in declaration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its id. Declaration order is
    /// significant: checkpoints serialize parameters in this order.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<f64>,
        trainable: bool,
    ) -> ParamId {
        let name = name.into();
        let numel: usize = shape.iter().product();
        assert_eq!(values.len(), numel, "values for `{name}` do not match shape {shape:?}");
        self.params.push(Parameter { name, shape, values, grad: None, trainable });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Parameter)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Looks a parameter up by its unique name.
    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Adds `delta` into the parameter's gradient, allocating it on first
    /// touch. Frozen parameters are ignored.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &[f64]) {
        let p = &mut self.params[id.0];
        if !p.trainable {
            return;
        }
        assert_eq!(delta.len(), p.values.len(), "gradient length mismatch for `{}`", p.name);
        let grad = p.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Drops all gradients (back to the unallocated state).
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Total number of scalar values across all parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_is_additive_and_lazy() {
        let mut store = ParamStore::new();
        let id = store.add("w", vec![2], vec![1.0, 2.0], true);
        assert!(store.get(id).grad.is_none());
        store.accumulate_grad(id, &[0.5, -1.0]);
        store.accumulate_grad(id, &[0.5, -1.0]);
        assert_eq!(store.get(id).grad.as_deref(), Some(&[1.0, -2.0][..]));
        store.zero_grad();
        assert!(store.get(id).grad.is_none());
    }

    #[test]
    fn frozen_params_never_get_grads() {
        let mut store = ParamStore::new();
        let id = store.add("b", vec![1], vec![0.0], false);
        store.accumulate_grad(id, &[3.0]);
        assert!(store.get(id).grad.is_none());
    }

    #[test]
    fn find_by_name() {
        let mut store = ParamStore::new();
        let a = store.add("layer1.weight", vec![1], vec![0.0], true);
        let b = store.add("layer1.bias", vec![1], vec![0.0], true);
        assert_eq!(store.find("layer1.weight"), Some(a));
        assert_eq!(store.find("layer1.bias"), Some(b));
        assert_eq!(store.find("nope"), None);
    }
}
