use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stnface_core::gradcheck::{central_difference, relative_error};
use stnface_core::nn::*;
use stnface_core::Tensor;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Direct seven-loop convolution with zero padding.
fn naive_conv(input: &Tensor<f64>, filters: &Tensor<f64>, spec: &ConvSpec) -> Tensor<f64> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding as isize);
    let ho = (h + 2 * spec.padding - k) / s + 1;
    let wo = (w + 2 * spec.padding - k) / s + 1;
    let n = spec.out_channels;
    let mut out = Tensor::zeros(&[n, ho, wo]);
    for o in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * s + ky) as isize - p;
                            let x = (ox * s + kx) as isize - p;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            acc += input.at3(ci, y as usize, x as usize) * filters.data()[((o * c + ci) * k + ky) * k + kx];
                        }
                    }
                }
                out.data_mut()[(o * ho + oy) * wo + ox] = acc;
            }
        }
    }
    out
}

#[test]
fn im2col_conv_matches_nested_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = ConvSpec::new(3, 4, 3, 1, 1).unwrap();
    let input = random(&mut rng, &[3, 8, 8]);
    let filters = random(&mut rng, &spec.filter_shape());
    let cols = im2col(&input, &spec).unwrap();
    assert_eq!(cols.shape(), &[64, 27]);
    let got = conv2d_forward(&input, &filters, &spec).unwrap();
    assert!(got.max_abs_diff(&naive_conv(&input, &filters, &spec)) < 1e-12);
}

#[test]
fn random_small_convolutions_match_in_both_precisions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let c = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=5);
        let s = rng.gen_range(1..=3);
        let p = rng.gen_range(0..k);
        let h = rng.gen_range(k.max(2)..=8);
        let w = rng.gen_range(k.max(2)..=8);
        let spec = ConvSpec::new(c, n, k, s, p).unwrap();
        let input = random(&mut rng, &[c, h, w]);
        let filters = random(&mut rng, &spec.filter_shape());
        let want = naive_conv(&input, &filters, &spec);
        let got = conv2d_forward(&input, &filters, &spec).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-12, "{spec:?} {h}x{w}");
        let got32 = conv2d_forward(&input.cast::<f32>(), &filters.cast::<f32>(), &spec).unwrap();
        assert!(got32.cast::<f64>().max_abs_diff(&want) < 1e-5, "{spec:?} f32");
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (k, s, p) in [(3, 1, 1), (3, 2, 0), (2, 2, 0), (5, 1, 2)] {
        let spec = ConvSpec::new(2, 3, k, s, p).unwrap();
        let input = random(&mut rng, &[2, 5, 5]);
        let filters = random(&mut rng, &spec.filter_shape());
        let out = conv2d_forward(&input, &filters, &spec).unwrap();
        let r = random(&mut rng, out.shape());
        let (gi, gf) = conv2d_backward(&r, &input, &filters, &spec).unwrap();
        let loss = |x: &Tensor<f64>, f: &Tensor<f64>| -> f64 {
            let o = conv2d_forward(x, f, &spec).unwrap();
            o.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let mut xs = input.data().to_vec();
        for i in 0..xs.len() {
            let num = central_difference(&mut xs, i, STEP, |v| {
                loss(&Tensor::from_vec(input.shape(), v.to_vec()).unwrap(), &filters)
            });
            assert!(relative_error(gi.data()[i], num) < TOL, "input {i}: {} vs {num}", gi.data()[i]);
        }
        let mut fs = filters.data().to_vec();
        for i in 0..fs.len() {
            let num = central_difference(&mut fs, i, STEP, |v| {
                loss(&input, &Tensor::from_vec(filters.shape(), v.to_vec()).unwrap())
            });
            assert!(relative_error(gf.data()[i], num) < TOL, "filter {i}");
        }
    }
}

#[test]
fn conv_layer_bias_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let spec = ConvSpec::new(1, 2, 3, 1, 0).unwrap();
    let mut layer = Conv2d::new(spec, &mut rng).unwrap();
    layer.bias = vec![0.3, -0.2];
    let input = random(&mut rng, &[1, 5, 5]);
    let (out, cache) = layer.forward_cached(&input).unwrap();
    let r = random(&mut rng, out.shape());
    let (_, grad) = layer.backward(&cache, &r).unwrap();
    let mut bias = layer.bias.clone();
    for i in 0..2 {
        let num = central_difference(&mut bias, i, STEP, |b| {
            let l = Conv2d { bias: b.to_vec(), ..layer.clone() };
            l.forward(&input).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        });
        assert!(relative_error(grad.bias[i], num) < TOL);
    }
}

#[test]
fn dense_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (n_in, n_out) = (6, 4);
    let w: Vec<f64> = (0..n_in * n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |w: &[f64], b: &[f64], x: &[f64]| -> f64 {
        fully_connected(w, b, x).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let (gx, gw, gb) = fully_connected_backward(&w, &x, &r).unwrap();
    let mut v = x.clone();
    for i in 0..n_in {
        let num = central_difference(&mut v, i, STEP, |v| loss(&w, &b, v));
        assert!(relative_error(gx[i], num) < TOL);
    }
    let mut v = w.clone();
    for i in 0..w.len() {
        let num = central_difference(&mut v, i, STEP, |v| loss(v, &b, &x));
        assert!(relative_error(gw[i], num) < TOL);
    }
    let mut v = b.clone();
    for i in 0..n_out {
        let num = central_difference(&mut v, i, STEP, |v| loss(&w, v, &x));
        assert!(relative_error(gb[i], num) < TOL);
    }
}

#[test]
fn softmax_cross_entropy_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for label in 0..3 {
        let mut z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, g) = softmax_cross_entropy(&z, label).unwrap();
        for i in 0..3 {
            let num = central_difference(&mut z, i, STEP, |v| softmax_cross_entropy(v, label).unwrap().0);
            assert!(relative_error(g[i], num) < TOL);
        }
    }
    let p = softmax(&[0.7; 4]).unwrap();
    assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn mse_matches_finite_differences() {
    let target = [0.2, -0.4, 1.0];
    let mut pred = vec![0.5, 0.1, 0.3];
    let (_, g) = mse(&pred, &target);
    for i in 0..3 {
        let num = central_difference(&mut pred, i, STEP, |v| mse(v, &target).0);
        assert!(relative_error(g[i], num) < TOL);
    }
}

#[test]
fn maxpool_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // distinct values spaced far wider than the step keep the argmax stable
    let mut vals: Vec<f64> = (0..2 * 5 * 6).map(|i| i as f64 * 0.01).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, rng.gen_range(0..=i));
    }
    let input = Tensor::from_vec(&[2, 5, 6], vals).unwrap();
    let pooled = maxpool2x2(&input).unwrap();
    let r = random(&mut rng, pooled.output.shape());
    let g = maxpool_backward(&r, &pooled.argmax, input.shape()).unwrap();
    let mut xs = input.data().to_vec();
    for i in 0..xs.len() {
        let num = central_difference(&mut xs, i, STEP, |v| {
            let t = Tensor::from_vec(&[2, 5, 6], v.to_vec()).unwrap();
            maxpool2x2(&t).unwrap().output.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        });
        assert!((g.data()[i] - num).abs() < TOL, "{i}");
    }
}

#[test]
fn relu_and_concat_gradients() {
    let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
    assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    let mut v = vec![-0.7, 0.4, 1.3, -0.1];
    let g = relu_backward(&Tensor::filled(&[4], 1.0), &Tensor::from_vec(&[4], v.clone()).unwrap());
    for i in 0..4 {
        let num = central_difference(&mut v, i, STEP, |v| v.iter().map(|&a| a.max(0.0)).sum());
        assert!((g.data()[i] - num).abs() < TOL);
    }

    assert_eq!(concat_features(&[1.0, 2.0], &[3.0]), vec![1.0, 2.0, 3.0]);
    assert_eq!(concat_features(&[1.0, 2.0], &[]), vec![1.0, 2.0]);
    let mut ab = vec![0.3, -1.2, 0.8, 2.0, 0.1];
    let (ga, gb) = concat_backward(&[1.0; 5], 2);
    for i in 0..5 {
        let num = central_difference(&mut ab, i, STEP, |v| concat_features(&v[..2], &v[2..]).iter().sum());
        let analytic = if i < 2 { ga[i] } else { gb[i - 2] };
        assert!((analytic - num).abs() < TOL);
    }
    assert_eq!((ga.len(), gb.len()), (2, 3));
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let spec = ConvSpec::new(3, 5, 3, 2, 1).unwrap();
    let input = random(&mut rng, &[3, 17, 13]);
    let filters = random(&mut rng, &spec.filter_shape());
    let a = conv2d_forward(&input, &filters, &spec).unwrap();
    let b = conv2d_forward(&input, &filters, &spec).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
