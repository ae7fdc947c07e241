//! Forward kernels shared by the eager API and the recording tape.

use rand::Rng;

use super::scalar::{gemm_acc, View};
use super::{NumericsError, Scalar, Tensor};

/// Clamp applied to probabilities before taking logarithms in [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn check_conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    dilation: usize,
) -> Result<(usize, usize, usize, usize), NumericsError> {
    if input.rank() != 2 {
        return Err(NumericsError::shape("causal_conv1d", format!("input must be [time, channels], got {:?}", input.shape())));
    }
    if kernel.rank() != 3 {
        return Err(NumericsError::shape("causal_conv1d", format!("kernel must be [taps, in, out], got {:?}", kernel.shape())));
    }
    if dilation == 0 {
        return Err(NumericsError::Parameter("dilation must be at least 1".into()));
    }
    let (time, in_ch) = (input.shape()[0], input.shape()[1]);
    let (taps, k_in, out_ch) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if k_in != in_ch {
        return Err(NumericsError::shape("causal_conv1d", format!("kernel expects {k_in} input channels, input has {in_ch}")));
    }
    if bias.shape() != [out_ch] {
        return Err(NumericsError::shape("causal_conv1d", format!("bias {:?} for {out_ch} output channels", bias.shape())));
    }
    Ok((time, in_ch, taps, out_ch))
}

/// Delay (in frames) applied to tap `j` of a `taps`-wide causal kernel.
pub(crate) fn tap_shift(j: usize, taps: usize, dilation: usize) -> usize {
    dilation * (taps - 1 - j)
}

/// Causal dilated 1-D convolution.
///
/// `output[t] = bias + sum_j input[t - dilation * (taps - 1 - j)] * kernel[j]`,
/// with frames before the start of the input treated as zeros.
pub fn causal_conv1d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>, NumericsError> {
    let (time, in_ch, taps, out_ch) = check_conv_shapes(input, kernel, bias, dilation)?;
    let mut out = Vec::with_capacity(time * out_ch);
    for _ in 0..time {
        out.extend_from_slice(bias.data());
    }
    for j in 0..taps {
        let shift = tap_shift(j, taps, dilation);
        if shift >= time {
            continue;
        }
        let rows = time - shift;
        let x = View::rows(input.data(), 0, rows, in_ch);
        let w = View::rows(kernel.data(), j * in_ch * out_ch, in_ch, out_ch);
        gemm_acc(x, w, &mut out[shift * out_ch..]);
    }
    Tensor::new(vec![time, out_ch], out)
}

/// Affine map along the trailing axis: `input @ weights + bias`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let (in_w, out_w) = check_dense(input, weights, bias)?;
    let rows = input.len() / in_w;
    let mut out = Vec::with_capacity(rows * out_w);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm_acc(View::rows(input.data(), 0, rows, in_w), View::rows(weights.data(), 0, in_w, out_w), &mut out);
    let mut shape = input.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = out_w;
    Tensor::new(shape, out)
}

pub(crate) fn check_dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize), NumericsError> {
    if weights.rank() != 2 {
        return Err(NumericsError::shape("dense", format!("weights must be [in, out], got {:?}", weights.shape())));
    }
    let (in_w, out_w) = (weights.shape()[0], weights.shape()[1]);
    if input.cols() != in_w {
        return Err(NumericsError::shape("dense", format!("input width {} but weights expect {in_w}", input.cols())));
    }
    if bias.shape() != [out_w] {
        return Err(NumericsError::shape("dense", format!("bias {:?} for width {out_w}", bias.shape())));
    }
    Ok((in_w, out_w))
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(sigmoid_scalar)
}

pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Inverted-dropout keep mask: each entry is `0` with probability `p`,
/// otherwise `1 / (1 - p)`.
pub(crate) fn dropout_mask<T: Scalar, R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Vec<T>, NumericsError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NumericsError::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    let keep = T::of(1.0 / (1.0 - p));
    Ok((0..n).map(|_| if p > 0.0 && rng.gen::<f64>() < p { T::zero() } else { keep }).collect())
}

/// Inverted dropout. Eval mode (or `p == 0`) is the identity.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(input: &Tensor<T>, p: f64, mode: Mode, rng: &mut R) -> Result<Tensor<T>, NumericsError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NumericsError::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask::<T, R>(input.len(), p, rng)?;
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Tensor::new(input.shape().to_vec(), data)
}

pub(crate) fn check_binary_targets<T: Scalar>(target: &[T]) -> Result<(), NumericsError> {
    match target.iter().position(|&y| y != T::zero() && y != T::one()) {
        Some(i) => Err(NumericsError::Label(format!("target[{i}] = {} is not 0 or 1", target[i]))),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
pub fn bce_loss<T: Scalar>(prob: &Tensor<T>, target: &Tensor<T>) -> Result<T, NumericsError> {
    if prob.shape() != target.shape() {
        return Err(NumericsError::shape("bce_loss", format!("{:?} vs {:?}", prob.shape(), target.shape())));
    }
    prob.ensure_finite("bce_loss")?;
    check_binary_targets(target.data())?;
    Ok(bce_value(prob.data(), target.data()))
}

pub(crate) fn bce_value<T: Scalar>(prob: &[T], target: &[T]) -> T {
    let eps = T::of(BCE_EPS);
    let total: T = prob
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.max(eps).min(T::one() - eps);
            -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
        })
        .sum();
    total / T::of(prob.len() as f64)
}

/// Mean squared error.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T, NumericsError> {
    if pred.shape() != target.shape() {
        return Err(NumericsError::shape("mse_loss", format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    pred.ensure_finite("mse_loss")?;
    Ok(mse_value(pred.data(), target.data()))
}

pub(crate) fn mse_value<T: Scalar>(pred: &[T], target: &[T]) -> T {
    let total: T = pred.iter().zip(target).map(|(&p, &y)| (p - y) * (p - y)).sum();
    total / T::of(pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t2(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    /// Materializes the left-padded input and loops over taps directly.
    fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, d: usize) -> Tensor<f64> {
        let (time, cin) = (x.shape()[0], x.shape()[1]);
        let (taps, _, cout) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        let pad = d * (taps - 1);
        let mut padded = vec![vec![0.0; cin]; pad];
        for t in 0..time {
            padded.push(x.row(t).to_vec());
        }
        let mut out = vec![vec![0.0; cout]; time];
        for t in 0..time {
            for o in 0..cout {
                let mut acc = b.data()[o];
                for j in 0..taps {
                    for c in 0..cin {
                        acc += padded[t + j * d][c] * k.get(&[j, c, o]);
                    }
                }
                out[t][o] = acc;
            }
        }
        Tensor::from_rows(&out).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_hand_example() {
        let x = t2(&[&[1.0], &[2.0], &[3.0]]);
        let k = Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = causal_conv1d(&x, &k, &b, 1).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 5.0]);
    }

    #[test]
    fn conv_matches_padded_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(time, d) in &[(40usize, 4usize), (3, 4), (17, 1), (1, 2)] {
            let x = random(&[time, 3], &mut rng);
            let k = random(&[5, 3, 4], &mut rng);
            let b = random(&[4], &mut rng);
            let got = causal_conv1d(&x, &k, &b, d).unwrap();
            let want = conv_oracle(&x, &k, &b, d);
            assert!(got.max_abs_diff(&want) < 1e-12, "time {time} dilation {d}");
        }
    }

    #[test]
    fn conv_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[30, 2], &mut rng);
        let k = random(&[3, 2, 2], &mut rng);
        let b = random(&[2], &mut rng);
        let base = causal_conv1d(&x, &k, &b, 2).unwrap();
        let mut bumped = x.clone();
        bumped.data_mut()[20 * 2] += 10.0;
        let out = causal_conv1d(&bumped, &k, &b, 2).unwrap();
        assert_eq!(&base.data()[..20 * 2], &out.data()[..20 * 2]);
        assert_ne!(&base.data()[20 * 2..], &out.data()[20 * 2..]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[4, 3]);
        let k = Tensor::zeros(&[2, 2, 1]);
        let b = Tensor::zeros(&[1]);
        assert!(matches!(causal_conv1d(&x, &k, &b, 1), Err(NumericsError::Shape { .. })));
        let k = Tensor::zeros(&[2, 3, 1]);
        assert!(matches!(causal_conv1d(&x, &k, &b, 0), Err(NumericsError::Parameter(_))));
    }

    #[test]
    fn dense_examples() {
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let y = dense(&x, &Tensor::identity(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
        let x = Tensor::vector(vec![1.0, 1.0]).unwrap();
        let y = dense(&x, &Tensor::identity(2), &Tensor::vector(vec![3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[4.0, 5.0]);
        assert!(dense(&Tensor::<f64>::zeros(&[3]), &Tensor::identity(2), &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn dense_matches_dot_product_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[6, 7], &mut rng);
        let w = random(&[7, 5], &mut rng);
        let b = random(&[5], &mut rng);
        let y = dense(&x, &w, &b).unwrap();
        for r in 0..6 {
            for o in 0..5 {
                let mut acc = b.data()[o];
                for i in 0..7 {
                    acc += x.get(&[r, i]) * w.get(&[i, o]);
                }
                assert!((y.get(&[r, o]) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::vector(vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::vector(vec![-3.0f64, -0.5]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random(&[10, 10], &mut rng);
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 200_000;
        let x = Tensor::<f64>::filled(&[n], 1.0);
        let y = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean = y.sum() / n as f64;
        // each output is 0 or 2 with equal probability: variance 1
        let se = (1.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn bce_examples() {
        let p = Tensor::scalar(0.5f64);
        let one = Tensor::scalar(1.0f64);
        let zero = Tensor::scalar(0.0f64);
        assert!((bce_loss(&p, &one).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        assert!((bce_loss(&Tensor::scalar(0.9), &zero).unwrap() - std::f64::consts::LN_10).abs() < 1e-6);
        assert!(bce_loss(&one, &one).unwrap() < 1e-6);
        assert!(bce_loss(&zero, &zero).unwrap() < 1e-6);
        assert!(matches!(bce_loss(&p, &Tensor::scalar(0.5)), Err(NumericsError::Label(_))));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&Tensor::scalar(12.0f64), &Tensor::scalar(10.0)).unwrap(), 4.0);
        assert_eq!(mse_loss(&Tensor::scalar(3.0f64), &Tensor::scalar(3.0)).unwrap(), 0.0);
        let p = Tensor::vector(vec![1.0f64, 2.0]).unwrap();
        let y = Tensor::vector(vec![3.0f64, 2.0]).unwrap();
        assert_eq!(mse_loss(&p, &y).unwrap(), 2.0);
        assert!(mse_loss(&p, &Tensor::scalar(1.0)).is_err());
    }
}
