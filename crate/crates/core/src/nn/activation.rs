use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero();
        }
    });
    out
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor<f64>, input: &Tensor<f64>) -> Tensor<f64> {
    assert_eq!(grad_out.shape(), input.shape());
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}
