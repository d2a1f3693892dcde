//! Named views over parameter tensors, used by the optimizer, gradient
//! checks and checkpoints.

use super::layers::Dense;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl<'a> NamedTensor<'a> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: &'a [f64]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}.{}", self.name);
        self
    }
}

/// A fixed, ordered collection of parameter tensors.
pub trait TensorSet {
    fn named_tensors(&self) -> Vec<NamedTensor<'_>>;

    /// Mutable views in the same order as `named_tensors`.
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|t| t.data.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn scale_in_place(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= s;
            }
        }
    }
}

impl TensorSet for Dense {
    fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        vec![
            NamedTensor::new("weight", vec![self.outputs, self.inputs], &self.weight),
            NamedTensor::new("bias", vec![self.outputs], &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}
