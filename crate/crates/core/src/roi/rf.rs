//! Receptive-field arithmetic. Each layer maps the receptive field `k` of its
//! output onto `alpha * k + beta` pixels of its input.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfKind {
    Conv,
    Pool,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerRfSpec {
    pub kind: RfKind,
    pub alpha: usize,
    pub beta: usize,
}

impl LayerRfSpec {
    /// `k x k` kernel at stride `s`: `s * k + (kernel - s)`.
    pub fn conv(kernel: usize, stride: usize) -> Self {
        LayerRfSpec { kind: RfKind::Conv, alpha: stride, beta: kernel - stride }
    }

    pub fn pool(kernel: usize, stride: usize) -> Self {
        LayerRfSpec { kind: RfKind::Pool, alpha: stride, beta: kernel - stride }
    }

    /// A block (e.g. an inception module) with a known overall relationship.
    pub fn composite(alpha: usize, beta: usize) -> Self {
        LayerRfSpec { kind: RfKind::Composite, alpha, beta }
    }

    pub fn apply(&self, k: usize) -> usize {
        self.alpha * k + self.beta
    }
}

/// Receptive field at the input of every layer for one unit of the top
/// layer, listed in network order (first entry is the whole network's).
pub fn receptive_field(layers: &[LayerRfSpec]) -> Result<Vec<usize>> {
    if layers.is_empty() {
        return Err(Error::Invalid("receptive field of an empty network".into()));
    }
    if let Some(l) = layers.iter().find(|l| l.alpha < 1) {
        return Err(Error::Invalid(format!("layer {l:?} has alpha < 1")));
    }
    let mut sizes = vec![0; layers.len()];
    let mut k = 1;
    for (i, layer) in layers.iter().enumerate().rev() {
        k = layer.apply(k);
        sizes[i] = k;
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_layers() {
        assert_eq!(receptive_field(&[LayerRfSpec::conv(1, 1)]).unwrap(), vec![1]);
        assert_eq!(receptive_field(&[LayerRfSpec::conv(3, 1)]).unwrap(), vec![3]);
        assert_eq!(LayerRfSpec::conv(7, 2).apply(10), 25);
        assert!(receptive_field(&[]).is_err());
    }
}
