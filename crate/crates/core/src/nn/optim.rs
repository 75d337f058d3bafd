use crate::error::{Error, Result};

/// Plain SGD with heavy-ball momentum: `v = mu * v + g; p -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Sgd { learning_rate, momentum, velocity: Vec::new() }
    }

    /// Updates each parameter group in place. Groups are matched to their
    /// velocity buffers by position, so callers must keep the order fixed.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameter groups, {} gradient groups",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape(format!("group {i}: {} params, {} grads", p.len(), g.len())));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient group {i}, element {j} = {}", g[j])));
            }
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi;
                *pi -= self.learning_rate * *vi;
            }
        }
        Ok(())
    }
}

/// One momentum-free update, `p -= lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) -> Result<()> {
    let mut opt = Sgd::new(learning_rate, 0.0);
    opt.step(&mut [params], &[grads])
}
