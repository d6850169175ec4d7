//! Forward/backward passes and the regularized cross-entropy loss.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Batch, LayerParams, LayerPlan, ModelParams, CONV_KERNEL, CONV_PAD, CONV_STRIDE};

/// Per-layer gradients, shaped like the parameters they belong to.
#[derive(Debug, Clone)]
pub struct Gradients<S: Scalar> {
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> Gradients<S> {
    /// Global L2 norm over every gradient value, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        let mut sum = 0.0f64;
        for layer in &self.layers {
            for &g in layer.weights.iter().chain(layer.bias.iter()) {
                let g = g.as_f64();
                sum += g * g;
            }
        }
        sum.sqrt()
    }
}

/// Runs every layer, returning `[input, act_1, ..., logits]`. Dense layers
/// see their input flattened per sample; outputs are post-activation.
pub(super) fn forward_all<S: Scalar>(
    params: &ModelParams<S>,
    inputs: &Tensor<S>,
) -> Result<Vec<Tensor<S>>> {
    if inputs.shape().len() < 2 || inputs.shape()[1..] != *params.spec.input_shape {
        return Err(Error::Parameter(format!(
            "input shape {:?} does not match model input {:?}",
            inputs.shape().get(1..).unwrap_or(&[]),
            params.spec.input_shape
        )));
    }
    let n = inputs.rows();
    let plans = params.spec.layer_plans();
    let mut activations = Vec::with_capacity(plans.len() + 1);
    activations.push(inputs.clone());
    for (plan, layer) in plans.iter().zip(&params.layers) {
        let out = match plan {
            LayerPlan::Dense {
                fan_in,
                fan_out,
                relu,
            } => dense_forward(
                activations.last().unwrap(),
                layer,
                n,
                *fan_in,
                *fan_out,
                *relu,
            ),
            LayerPlan::Conv { .. } => conv_forward(activations.last().unwrap(), layer, n, plan),
        };
        activations.push(out?);
    }
    Ok(activations)
}

fn dense_forward<S: Scalar>(
    input: &Tensor<S>,
    layer: &LayerParams<S>,
    n: usize,
    fan_in: usize,
    fan_out: usize,
    relu: bool,
) -> Result<Tensor<S>> {
    debug_assert_eq!(input.row_len(), fan_in);
    let mut out = vec![S::zero(); n * fan_out];
    for i in 0..n {
        let row = input.row(i);
        let out_row = &mut out[i * fan_out..(i + 1) * fan_out];
        for (o, out_v) in out_row.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            let weights = &layer.weights[o * fan_in..(o + 1) * fan_in];
            for (w, x) in weights.iter().zip(row) {
                acc += *w * *x;
            }
            *out_v = if relu && acc < S::zero() {
                S::zero()
            } else {
                acc
            };
        }
    }
    Tensor::new(vec![n, fan_out], out)
}

fn conv_forward<S: Scalar>(
    input: &Tensor<S>,
    layer: &LayerParams<S>,
    n: usize,
    plan: &LayerPlan,
) -> Result<Tensor<S>> {
    let &LayerPlan::Conv {
        in_c,
        in_h,
        in_w,
        out_c,
        out_h,
        out_w,
    } = plan
    else {
        unreachable!()
    };
    let mut out = vec![S::zero(); n * out_c * out_h * out_w];
    let in_plane = in_h * in_w;
    let out_plane = out_h * out_w;
    for i in 0..n {
        let sample = input.row(i);
        let out_sample = &mut out[i * out_c * out_plane..(i + 1) * out_c * out_plane];
        for oc in 0..out_c {
            let kernel = &layer.weights[oc * in_c * CONV_KERNEL * CONV_KERNEL
                ..(oc + 1) * in_c * CONV_KERNEL * CONV_KERNEL];
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = layer.bias[oc];
                    for ic in 0..in_c {
                        let plane = &sample[ic * in_plane..(ic + 1) * in_plane];
                        let k = &kernel[ic * CONV_KERNEL * CONV_KERNEL..];
                        for ky in 0..CONV_KERNEL {
                            let iy = (oy * CONV_STRIDE + ky) as isize - CONV_PAD as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            for kx in 0..CONV_KERNEL {
                                let ix = (ox * CONV_STRIDE + kx) as isize - CONV_PAD as isize;
                                if ix < 0 || ix >= in_w as isize {
                                    continue;
                                }
                                acc += k[ky * CONV_KERNEL + kx]
                                    * plane[iy as usize * in_w + ix as usize];
                            }
                        }
                    }
                    // ReLU: every conv layer here is followed by one.
                    out_sample[oc * out_plane + oy * out_w + ox] =
                        if acc < S::zero() { S::zero() } else { acc };
                }
            }
        }
    }
    Tensor::new(vec![n, out_c, out_h, out_w], out)
}

/// Mean cross-entropy with L2 regularization, plus gradients for every
/// parameter. Returns a numerical error when the loss is not finite.
pub fn loss_and_grads<S: Scalar>(
    params: &ModelParams<S>,
    batch: &Batch<S>,
    weight_decay: f64,
) -> Result<(f64, Gradients<S>)> {
    if batch.is_empty() {
        return Err(Error::Parameter(
            "cannot take a step on an empty batch".into(),
        ));
    }
    let k = params.spec.num_classes;
    if let Some(&bad) = batch.labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::Parameter(format!(
            "label {bad} out of range for {k} classes"
        )));
    }

    let activations = forward_all(params, &batch.inputs)?;
    let logits = activations.last().unwrap();
    let n = batch.len();

    // Softmax cross-entropy (mean reduction) and d(loss)/d(logits).
    let mut loss = 0.0f64;
    let mut delta = vec![S::zero(); n * k];
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut sum_exp = 0.0f64;
        for &v in row {
            sum_exp += (v - max).as_f64().exp();
        }
        let log_sum = sum_exp.ln() + max.as_f64();
        let label = batch.labels[i] as usize;
        loss += log_sum - row[label].as_f64();
        let d = &mut delta[i * k..(i + 1) * k];
        for (j, &v) in row.iter().enumerate() {
            let softmax = (v.as_f64() - log_sum).exp();
            let mut g = softmax;
            if j == label {
                g -= 1.0;
            }
            d[j] = S::from_f64_lossy(g / n as f64);
        }
    }
    loss /= n as f64;

    // L2 term over all parameters (biases folded in with their layer).
    if weight_decay != 0.0 {
        let mut sq = 0.0f64;
        for layer in &params.layers {
            for &w in layer.weights.iter().chain(layer.bias.iter()) {
                sq += w.as_f64() * w.as_f64();
            }
        }
        loss += 0.5 * weight_decay * sq;
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss is {loss}")));
    }

    // Backward pass.
    let plans = params.spec.layer_plans();
    let mut grads: Vec<LayerParams<S>> = plans.iter().map(LayerParams::zeros_like).collect();
    let mut upstream = Tensor::new(vec![n, k], delta)?;
    for (idx, plan) in plans.iter().enumerate().rev() {
        let input = &activations[idx];
        let output = &activations[idx + 1];
        upstream = match plan {
            LayerPlan::Dense {
                fan_in,
                fan_out,
                relu,
            } => dense_backward(
                input,
                output,
                &params.layers[idx],
                &mut grads[idx],
                &upstream,
                n,
                *fan_in,
                *fan_out,
                *relu,
            ),
            LayerPlan::Conv { .. } => conv_backward(
                input,
                output,
                &params.layers[idx],
                &mut grads[idx],
                &upstream,
                n,
                plan,
            ),
        }?;
    }

    if weight_decay != 0.0 {
        let wd = S::from_f64_lossy(weight_decay);
        for (grad, layer) in grads.iter_mut().zip(&params.layers) {
            for (g, &w) in grad.weights.iter_mut().zip(&layer.weights) {
                *g += wd * w;
            }
            for (g, &b) in grad.bias.iter_mut().zip(&layer.bias) {
                *g += wd * b;
            }
        }
    }

    Ok((loss, Gradients { layers: grads }))
}

#[allow(clippy::too_many_arguments)]
fn dense_backward<S: Scalar>(
    input: &Tensor<S>,
    output: &Tensor<S>,
    layer: &LayerParams<S>,
    grad: &mut LayerParams<S>,
    upstream: &Tensor<S>,
    n: usize,
    fan_in: usize,
    fan_out: usize,
    relu: bool,
) -> Result<Tensor<S>> {
    let mut downstream = vec![S::zero(); n * fan_in];
    for i in 0..n {
        let x = input.row(i);
        let out_row = output.row(i);
        let up = upstream.row(i);
        let down = &mut downstream[i * fan_in..(i + 1) * fan_in];
        for o in 0..fan_out {
            // ReLU gate: gradient flows only where the activation is positive.
            let dz = if relu && out_row[o] <= S::zero() {
                S::zero()
            } else {
                up[o]
            };
            if dz == S::zero() {
                continue;
            }
            grad.bias[o] += dz;
            let w_row = &layer.weights[o * fan_in..(o + 1) * fan_in];
            let g_row = &mut grad.weights[o * fan_in..(o + 1) * fan_in];
            for j in 0..fan_in {
                g_row[j] += dz * x[j];
                down[j] += dz * w_row[j];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), downstream)
}

fn conv_backward<S: Scalar>(
    input: &Tensor<S>,
    output: &Tensor<S>,
    layer: &LayerParams<S>,
    grad: &mut LayerParams<S>,
    upstream: &Tensor<S>,
    n: usize,
    plan: &LayerPlan,
) -> Result<Tensor<S>> {
    let &LayerPlan::Conv {
        in_c,
        in_h,
        in_w,
        out_c,
        out_h,
        out_w,
    } = plan
    else {
        unreachable!()
    };
    let in_plane = in_h * in_w;
    let out_plane = out_h * out_w;
    let k2 = CONV_KERNEL * CONV_KERNEL;
    let mut downstream = vec![S::zero(); n * in_c * in_plane];
    for i in 0..n {
        let sample = input.row(i);
        let out_sample = output.row(i);
        let up = upstream.row(i);
        let down = &mut downstream[i * in_c * in_plane..(i + 1) * in_c * in_plane];
        for oc in 0..out_c {
            let kernel = &layer.weights[oc * in_c * k2..(oc + 1) * in_c * k2];
            let g_kernel_base = oc * in_c * k2;
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let at = oc * out_plane + oy * out_w + ox;
                    let dz = if out_sample[at] <= S::zero() {
                        S::zero()
                    } else {
                        up[at]
                    };
                    if dz == S::zero() {
                        continue;
                    }
                    grad.bias[oc] += dz;
                    for ic in 0..in_c {
                        for ky in 0..CONV_KERNEL {
                            let iy = (oy * CONV_STRIDE + ky) as isize - CONV_PAD as isize;
                            if iy < 0 || iy >= in_h as isize {
                                continue;
                            }
                            for kx in 0..CONV_KERNEL {
                                let ix = (ox * CONV_STRIDE + kx) as isize - CONV_PAD as isize;
                                if ix < 0 || ix >= in_w as isize {
                                    continue;
                                }
                                let in_at = ic * in_plane + iy as usize * in_w + ix as usize;
                                let k_at = ic * k2 + ky * CONV_KERNEL + kx;
                                grad.weights[g_kernel_base + k_at] += dz * sample[in_at];
                                down[in_at] += dz * kernel[k_at];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input.shape().to_vec(), downstream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Arch, ModelSpec};

    fn small_batch(n: usize, shape: &[usize], k: usize, seed: u64) -> Batch<f64> {
        let mut rng = crate::rng::rng_from_seed(seed);
        use rand::RngExt as _;
        let len: usize = shape.iter().product();
        let data = (0..n * len).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut full = vec![n];
        full.extend_from_slice(shape);
        Batch {
            inputs: Tensor::new(full, data).unwrap(),
            labels: (0..n).map(|i| (i % k) as u32).collect(),
        }
    }

    /// Central finite differences over every parameter of `params`.
    fn fd_grads(params: &ModelParams<f64>, batch: &Batch<f64>, wd: f64, h: f64) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for l in 0..params.layers.len() {
            let count = params.layers[l].weights.len() + params.layers[l].bias.len();
            let mut layer_grads = Vec::with_capacity(count);
            let w = params.layers[l].weights.len();
            for p in 0..count {
                let mut plus = params.clone();
                let mut minus = params.clone();
                if p < w {
                    plus.layers[l].weights[p] += h;
                    minus.layers[l].weights[p] -= h;
                } else {
                    plus.layers[l].bias[p - w] += h;
                    minus.layers[l].bias[p - w] -= h;
                }
                let (lp, _) = loss_and_grads(&plus, batch, wd).unwrap();
                let (lm, _) = loss_and_grads(&minus, batch, wd).unwrap();
                layer_grads.push((lp - lm) / (2.0 * h));
            }
            out.push(layer_grads);
        }
        out
    }

    fn check_against_fd(spec: ModelSpec, shape: &[usize], wd: f64) {
        check_against_fd_step(spec, shape, wd, 1e-3);
    }

    fn check_against_fd_step(spec: ModelSpec, shape: &[usize], wd: f64, h: f64) {
        let params = ModelParams::<f64>::init(spec.clone(), 11).unwrap();
        let batch = small_batch(4, shape, spec.num_classes, 3);
        let (_, analytic) = loss_and_grads(&params, &batch, wd).unwrap();
        let numeric = fd_grads(&params, &batch, wd, h);
        for (l, fd_layer) in numeric.iter().enumerate() {
            let got: Vec<f64> = analytic.layers[l]
                .weights
                .iter()
                .chain(analytic.layers[l].bias.iter())
                .copied()
                .collect();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = got.iter().zip(fd_layer).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(fd_layer).max(1e-12);
            assert!(rel <= 1e-4, "layer {l}: relative error {rel}");
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        check_against_fd(
            ModelSpec {
                arch: Arch::Mlp { hidden: 6 },
                input_shape: vec![1, 3, 3],
                num_classes: 3,
            },
            &[1, 3, 3],
            1e-2,
        );
    }

    #[test]
    fn convnet_gradients_match_finite_differences() {
        check_against_fd_step(
            ModelSpec {
                arch: Arch::Convnet { channels: [2, 3] },
                input_shape: vec![2, 5, 5],
                num_classes: 2,
            },
            &[2, 5, 5],
            1e-3,
            // Smaller step than the MLP check: the many ReLU units of a conv
            // layer make h = 1e-3 kink crossings likely.
            1e-5,
        );
    }

    #[test]
    fn duplicated_batch_has_same_mean_gradient() {
        let spec = ModelSpec {
            arch: Arch::Mlp { hidden: 5 },
            input_shape: vec![1, 2, 2],
            num_classes: 2,
        };
        let params = ModelParams::<f64>::init(spec, 4).unwrap();
        let batch = small_batch(3, &[1, 2, 2], 2, 8);
        let doubled = {
            let indices: Vec<usize> = (0..3).chain(0..3).collect();
            let mut labels = batch.labels.clone();
            labels.extend_from_slice(&batch.labels);
            Batch {
                inputs: batch.inputs.gather_rows(&indices),
                labels,
            }
        };
        let (loss_a, grads_a) = loss_and_grads(&params, &batch, 0.0).unwrap();
        let (loss_b, grads_b) = loss_and_grads(&params, &doubled, 0.0).unwrap();
        assert!((loss_a - loss_b).abs() < 1e-12);
        for (la, lb) in grads_a.layers.iter().zip(&grads_b.layers) {
            for (a, b) in la.weights.iter().zip(&lb.weights) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_loss_is_a_numerical_error() {
        let spec = ModelSpec {
            arch: Arch::Mlp { hidden: 2 },
            input_shape: vec![1, 1, 2],
            num_classes: 2,
        };
        let mut params = ModelParams::<f64>::init(spec, 0).unwrap();
        params.layers[0].weights[0] = f64::INFINITY;
        let batch = small_batch(2, &[1, 1, 2], 2, 1);
        assert!(matches!(
            loss_and_grads(&params, &batch, 0.0),
            Err(Error::Numerical(_))
        ));
    }
}
