use super::tensors::TensorSet;

/// Gradient descent with heavy-ball momentum and L2 weight decay:
/// `v ← μ·v + (g + λ·w)`, `w ← w − η·v`.
#[derive(Debug, Clone)]
pub struct Momentum {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step<T: TensorSet>(&mut self, params: &mut T, grad: &T) {
        let grads = grad.named_tensors();
        let mut tensors = params.tensors_mut();
        if self.velocity.is_empty() {
            self.velocity = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        }
        for ((w, g), v) in tensors.iter_mut().zip(&grads).zip(&mut self.velocity) {
            for ((wi, gi), vi) in w.iter_mut().zip(g.data).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi + self.weight_decay * *wi;
                *wi -= self.learning_rate * *vi;
            }
        }
    }
}
