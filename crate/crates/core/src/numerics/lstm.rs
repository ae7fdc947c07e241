//! Stacked LSTM built from tape primitives.
//!
//! Gate layout along the `4 * hidden` axis is input, forget, cell, output.

use super::{NumericsError, ParamSet, Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmShape {
    pub input: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// `(w_ih, w_hh, bias)` parameter names for layer `layer` under `prefix`.
pub fn lstm_param_names(prefix: &str, layer: usize) -> [String; 3] {
    [format!("{prefix}.lstm{layer}.w_ih"), format!("{prefix}.lstm{layer}.w_hh"), format!("{prefix}.lstm{layer}.b")]
}

/// One LSTM layer over a `[time, in]` sequence; returns `[time, hidden]`.
pub fn lstm_layer<T: Scalar>(tape: &mut Tape<'_, T>, input: Var, prefix: &str, layer: usize, hidden: usize) -> Result<Var, NumericsError> {
    let [w_ih, w_hh, b] = lstm_param_names(prefix, layer);
    let (w_ih, w_hh, b) = (tape.param(&w_ih)?, tape.param(&w_hh)?, tape.param(&b)?);
    if tape.value(w_hh).shape() != [hidden, 4 * hidden] {
        return Err(NumericsError::shape("lstm", format!("w_hh {:?} for hidden {hidden}", tape.value(w_hh).shape())));
    }
    let time = tape.value(input).rows();
    let projected = tape.dense(input, w_ih, b)?;
    let mut h = tape.constant(Tensor::zeros(&[1, hidden]));
    let mut c = tape.constant(Tensor::zeros(&[1, hidden]));
    let mut outputs = Vec::with_capacity(time);
    for t in 0..time {
        let xt = tape.select_row(projected, t)?;
        let recurrent = tape.matmul(h, w_hh)?;
        let gates = tape.add(xt, recurrent)?;
        let i = tape.slice_cols(gates, 0, hidden)?;
        let f = tape.slice_cols(gates, hidden, 2 * hidden)?;
        let g = tape.slice_cols(gates, 2 * hidden, 3 * hidden)?;
        let o = tape.slice_cols(gates, 3 * hidden, 4 * hidden)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let squashed = tape.tanh(c);
        h = tape.mul(o, squashed)?;
        outputs.push(h);
    }
    tape.stack_rows(&outputs)
}

/// Runs a stacked LSTM eagerly and returns the top layer's hidden sequence.
pub fn lstm_forward<T: Scalar>(
    input: &Tensor<T>,
    shape: LstmShape,
    params: &ParamSet<T>,
    prefix: &str,
) -> Result<Tensor<T>, NumericsError> {
    if input.rank() != 2 || input.cols() != shape.input {
        return Err(NumericsError::shape("lstm_forward", format!("input {:?} for width {}", input.shape(), shape.input)));
    }
    let mut tape = Tape::with_params(params);
    let mut x = tape.constant(input.clone());
    for layer in 0..shape.layers {
        x = lstm_layer(&mut tape, x, prefix, layer, shape.hidden)?;
    }
    Ok(tape.value(x).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{check_gradients, GradCheck};
    use crate::numerics::ops::sigmoid_scalar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_for(shape: LstmShape, rng: Option<&mut ChaCha8Rng>) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        let mut rng = rng;
        for l in 0..shape.layers {
            let input = if l == 0 { shape.input } else { shape.hidden };
            let [a, b, c] = lstm_param_names("m", l);
            let dims = [vec![input, 4 * shape.hidden], vec![shape.hidden, 4 * shape.hidden], vec![4 * shape.hidden]];
            for (name, dims) in [a, b, c].into_iter().zip(dims) {
                let n: usize = dims.iter().product();
                let data = match rng.as_deref_mut() {
                    Some(r) => (0..n).map(|_| r.gen_range(-0.8..0.8)).collect(),
                    None => vec![0.0; n],
                };
                p.insert(name, Tensor::new(dims, data).unwrap()).unwrap();
            }
        }
        p
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let shape = LstmShape { input: 3, hidden: 4, layers: 10 };
        let p = params_for(shape, None);
        let x = Tensor::from_rows(&[[1.0, -2.0, 0.5], [0.3, 0.3, 0.3]]).unwrap();
        let y = lstm_forward(&x, shape, &p, "m").unwrap();
        assert_eq!(y.shape(), &[2, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        let shape = LstmShape { input: 1, hidden: 1, layers: 1 };
        let mut p = ParamSet::new();
        p.insert("m.lstm0.w_ih", Tensor::from_rows(&[[0.5, -0.4, 0.9, 0.2]]).unwrap()).unwrap();
        p.insert("m.lstm0.w_hh", Tensor::from_rows(&[[0.1, 0.1, 0.1, 0.1]]).unwrap()).unwrap();
        p.insert("m.lstm0.b", Tensor::vector(vec![0.0, 1.0, -0.3, 0.1]).unwrap()).unwrap();
        let x = Tensor::from_rows(&[[2.0]]).unwrap();
        let y = lstm_forward(&x, shape, &p, "m").unwrap();
        // h0 = c0 = 0, so the recurrent term vanishes
        let i = sigmoid_scalar(1.0f64);
        let g = (1.8f64 - 0.3).tanh();
        let o = sigmoid_scalar(0.5f64);
        let c = i * g;
        let h = o * c.tanh();
        assert!((y.data()[0] - h).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = LstmShape { input: 2, hidden: 2, layers: 2 };
        let mut p = params_for(shape, Some(&mut rng));
        p.insert("x", Tensor::from_rows(&[[0.4, -0.7], [1.1, 0.2]]).unwrap()).unwrap();
        let report = check_gradients(&p, GradCheck::default(), |tape| {
            let mut h = tape.param("x")?;
            for l in 0..shape.layers {
                h = lstm_layer(tape, h, "m", l, shape.hidden)?;
            }
            let sq = tape.mul(h, h)?;
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}
