//! Two-layer convolutional LSTM with peephole connections, plus a 1x1 sigmoid
//! readout to a single-channel map. The cell follows the classic peephole
//! formulation: input/forget gates peek at the previous cell state, the output
//! gate peeks at the freshly updated one, and all state-to-state maps are
//! same-size 3x3 convolutions with elementwise peephole products.
//!
//! `cell_step_gradients` returns exact analytic gradients of the sum of the
//! produced hidden state with respect to every parameter tensor, which the
//! test suite checks against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::image::SaliencyMap;
use crate::tensor::{conv2d_3x3, sigmoid, Activation, ConvParams, FeatureMap};

/// Hidden/cell tensor pair carried across time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLSTMState {
    pub h: FeatureMap,
    pub c: FeatureMap,
}

impl ConvLSTMState {
    /// All-zero initial state.
    pub fn zeros(hidden: usize, height: usize, width: usize) -> Self {
        ConvLSTMState {
            h: FeatureMap::new(hidden, height, width),
            c: FeatureMap::new(hidden, height, width),
        }
    }
}

/// Every learned tensor of one cell: eight 3x3 convolution banks, three
/// elementwise peephole maps, and four per-channel gate biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLSTMParams {
    in_channels: usize,
    hidden: usize,
    height: usize,
    width: usize,
    w_xi: ConvParams,
    w_hi: ConvParams,
    w_xf: ConvParams,
    w_hf: ConvParams,
    w_xo: ConvParams,
    w_ho: ConvParams,
    w_xc: ConvParams,
    w_hc: ConvParams,
    w_ci: FeatureMap,
    w_cf: FeatureMap,
    w_co: FeatureMap,
    b_i: Vec<f64>,
    b_f: Vec<f64>,
    b_o: Vec<f64>,
    b_c: Vec<f64>,
}

/// Canonical parameter-tensor names, used for snapshots and gradient
/// enumeration.
pub const TENSOR_NAMES: [&str; 15] = [
    "w_xi", "w_hi", "w_ci", "b_i", "w_xf", "w_hf", "w_cf", "b_f", "w_xc", "w_hc", "b_c", "w_xo",
    "w_ho", "w_co", "b_o",
];

impl ConvLSTMParams {
    /// All-zero parameters.
    pub fn zeros(in_channels: usize, hidden: usize, height: usize, width: usize) -> Self {
        ConvLSTMParams {
            in_channels,
            hidden,
            height,
            width,
            w_xi: ConvParams::zeros(in_channels, hidden),
            w_hi: ConvParams::zeros(hidden, hidden),
            w_xf: ConvParams::zeros(in_channels, hidden),
            w_hf: ConvParams::zeros(hidden, hidden),
            w_xo: ConvParams::zeros(in_channels, hidden),
            w_ho: ConvParams::zeros(hidden, hidden),
            w_xc: ConvParams::zeros(in_channels, hidden),
            w_hc: ConvParams::zeros(hidden, hidden),
            w_ci: FeatureMap::new(hidden, height, width),
            w_cf: FeatureMap::new(hidden, height, width),
            w_co: FeatureMap::new(hidden, height, width),
            b_i: vec![0.0; hidden],
            b_f: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
        }
    }

    /// Random initialization: kernels uniform in +-1/sqrt(fan_in), peepholes
    /// and biases uniform in +-0.1.
    pub fn seeded(
        in_channels: usize,
        hidden: usize,
        height: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = ConvLSTMParams::zeros(in_channels, hidden, height, width);
        let fill_kernel = |k: &mut ConvParams, fan_in: usize, rng: &mut dyn rand::RngCore| {
            let a = 1.0 / (fan_in as f64 * 9.0).sqrt();
            for w in k.weights_mut() {
                *w = rng.random_range(-a..a);
            }
        };
        fill_kernel(&mut p.w_xi, in_channels, rng);
        fill_kernel(&mut p.w_hi, hidden, rng);
        fill_kernel(&mut p.w_xf, in_channels, rng);
        fill_kernel(&mut p.w_hf, hidden, rng);
        fill_kernel(&mut p.w_xo, in_channels, rng);
        fill_kernel(&mut p.w_ho, hidden, rng);
        fill_kernel(&mut p.w_xc, in_channels, rng);
        fill_kernel(&mut p.w_hc, hidden, rng);
        for m in [&mut p.w_ci, &mut p.w_cf, &mut p.w_co] {
            for v in m.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        for b in [&mut p.b_i, &mut p.b_f, &mut p.b_o, &mut p.b_c] {
            for v in b.iter_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        p
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Flat view of one named parameter tensor.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        Some(match name {
            "w_xi" => self.w_xi.weights(),
            "w_hi" => self.w_hi.weights(),
            "w_xf" => self.w_xf.weights(),
            "w_hf" => self.w_hf.weights(),
            "w_xo" => self.w_xo.weights(),
            "w_ho" => self.w_ho.weights(),
            "w_xc" => self.w_xc.weights(),
            "w_hc" => self.w_hc.weights(),
            "w_ci" => self.w_ci.data(),
            "w_cf" => self.w_cf.data(),
            "w_co" => self.w_co.data(),
            "b_i" => &self.b_i,
            "b_f" => &self.b_f,
            "b_o" => &self.b_o,
            "b_c" => &self.b_c,
            _ => return None,
        })
    }

    /// Mutable flat view of one named parameter tensor.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        Some(match name {
            "w_xi" => self.w_xi.weights_mut(),
            "w_hi" => self.w_hi.weights_mut(),
            "w_xf" => self.w_xf.weights_mut(),
            "w_hf" => self.w_hf.weights_mut(),
            "w_xo" => self.w_xo.weights_mut(),
            "w_ho" => self.w_ho.weights_mut(),
            "w_xc" => self.w_xc.weights_mut(),
            "w_hc" => self.w_hc.weights_mut(),
            "w_ci" => self.w_ci.data_mut(),
            "w_cf" => self.w_cf.data_mut(),
            "w_co" => self.w_co.data_mut(),
            "b_i" => &mut self.b_i,
            "b_f" => &mut self.b_f,
            "b_o" => &mut self.b_o,
            "b_c" => &mut self.b_c,
            _ => return None,
        })
    }
}

/// Whether dropout masks are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

fn ew2(a: &FeatureMap, b: &FeatureMap, f: impl Fn(f64, f64) -> f64) -> FeatureMap {
    debug_assert!(a.same_shape(b));
    let data = a.data().iter().zip(b.data()).map(|(&u, &v)| f(u, v)).collect();
    FeatureMap::from_vec(a.channels(), a.height(), a.width(), data).expect("same shape")
}

fn add_channel_bias(m: &mut FeatureMap, bias: &[f64]) {
    let plane = m.height() * m.width();
    for (c, &b) in bias.iter().enumerate() {
        let start = c * plane;
        for v in &mut m.data_mut()[start..start + plane] {
            *v += b;
        }
    }
}

fn check_step_shapes(x: &FeatureMap, prev: &ConvLSTMState, p: &ConvLSTMParams) -> Result<()> {
    if x.channels() != p.in_channels || x.height() != p.height || x.width() != p.width {
        return Err(Error::dim(format!(
            "input shape {:?} does not match cell ({}, {}, {})",
            x.shape(),
            p.in_channels,
            p.height,
            p.width
        )));
    }
    let want = (p.hidden, p.height, p.width);
    if prev.h.shape() != want || prev.c.shape() != want {
        return Err(Error::dim(format!(
            "state shapes {:?}/{:?} do not match cell {:?}",
            prev.h.shape(),
            prev.c.shape(),
            want
        )));
    }
    Ok(())
}

struct StepCache {
    i: FeatureMap,
    f: FeatureMap,
    o: FeatureMap,
    g: FeatureMap,
    c_t: FeatureMap,
    tanh_c: FeatureMap,
}

fn cell_step_cached(
    x: &FeatureMap,
    prev: &ConvLSTMState,
    p: &ConvLSTMParams,
) -> Result<(ConvLSTMState, StepCache)> {
    check_step_shapes(x, prev, p)?;

    let pre = |wx: &ConvParams,
                   wh: &ConvParams,
                   peep: Option<(&FeatureMap, &FeatureMap)>,
                   bias: &[f64]|
     -> Result<FeatureMap> {
        let mut a = conv2d_3x3(x, wx, Activation::None)?;
        let hh = conv2d_3x3(&prev.h, wh, Activation::None)?;
        a = ew2(&a, &hh, |u, v| u + v);
        if let Some((w, c)) = peep {
            let pc = ew2(w, c, |u, v| u * v);
            a = ew2(&a, &pc, |u, v| u + v);
        }
        add_channel_bias(&mut a, bias);
        Ok(a)
    };

    let i = pre(&p.w_xi, &p.w_hi, Some((&p.w_ci, &prev.c)), &p.b_i)?.map(sigmoid);
    let f = pre(&p.w_xf, &p.w_hf, Some((&p.w_cf, &prev.c)), &p.b_f)?.map(sigmoid);
    let g = pre(&p.w_xc, &p.w_hc, None, &p.b_c)?.map(f64::tanh);
    let c_t = ew2(&ew2(&f, &prev.c, |u, v| u * v), &ew2(&i, &g, |u, v| u * v), |u, v| {
        u + v
    });
    let o = pre(&p.w_xo, &p.w_ho, Some((&p.w_co, &c_t)), &p.b_o)?.map(sigmoid);
    let tanh_c = c_t.map(f64::tanh);
    let h_t = ew2(&o, &tanh_c, |u, v| u * v);

    Ok((
        ConvLSTMState {
            h: h_t,
            c: c_t.clone(),
        },
        StepCache {
            i,
            f,
            o,
            g,
            c_t,
            tanh_c,
        },
    ))
}

/// Advance the cell one time step.
pub fn cell_step(x: &FeatureMap, prev: &ConvLSTMState, p: &ConvLSTMParams) -> Result<ConvLSTMState> {
    cell_step_cached(x, prev, p).map(|(s, _)| s)
}

/// Gradient of the 3x3 kernel bank for `out = conv(input, K)` given the
/// gradient at `out`.
fn conv_kernel_grad(input: &FeatureMap, g_out: &FeatureMap) -> ConvParams {
    let (h, w) = (input.height(), input.width());
    let mut grads = ConvParams::zeros(input.channels(), g_out.channels());
    for o in 0..g_out.channels() {
        for i in 0..input.channels() {
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let mut acc = 0.0;
                    for y in 0..h as isize {
                        let sy = y + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for xx in 0..w as isize {
                            let sx = xx + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc += g_out.get(o, y as usize, xx as usize)
                                * input.get(i, sy as usize, sx as usize);
                        }
                    }
                    grads.set_weight(o, i, ky, kx, acc);
                }
            }
        }
    }
    grads
}

fn channel_sums(m: &FeatureMap) -> Vec<f64> {
    (0..m.channels()).map(|c| m.channel(c).iter().sum()).collect()
}

/// Advance the cell one step and also return the analytic gradients of
/// `L = sum of every element of the produced hidden state` with respect to all
/// fifteen parameter tensors, packaged in a params-shaped container.
pub fn cell_step_gradients(
    x: &FeatureMap,
    prev: &ConvLSTMState,
    p: &ConvLSTMParams,
) -> Result<(ConvLSTMState, ConvLSTMParams)> {
    let (state, cache) = cell_step_cached(x, prev, p)?;
    let StepCache {
        i,
        f,
        o,
        g,
        c_t,
        tanh_c,
    } = &cache;

    // dL/dH_t is all ones
    let g_o = tanh_c.clone();
    let mut g_c = ew2(o, tanh_c, |ov, tc| ov * (1.0 - tc * tc));
    let g_ao = ew2(&g_o, o, |gv, ov| gv * ov * (1.0 - ov));
    // the output gate peeks at C_t, so its pre-activation feeds back into C_t
    g_c = ew2(&g_c, &ew2(&g_ao, &p.w_co, |u, v| u * v), |u, v| u + v);

    let g_f = ew2(&g_c, &prev.c, |u, v| u * v);
    let g_af = ew2(&g_f, f, |gv, fv| gv * fv * (1.0 - fv));
    let g_i = ew2(&g_c, g, |u, v| u * v);
    let g_ai = ew2(&g_i, i, |gv, iv| gv * iv * (1.0 - iv));
    let g_g = ew2(&g_c, i, |u, v| u * v);
    let g_ac = ew2(&g_g, g, |gv, gg| gv * (1.0 - gg * gg));

    let mut grads = ConvLSTMParams::zeros(p.in_channels, p.hidden, p.height, p.width);
    grads.w_xi = conv_kernel_grad(x, &g_ai);
    grads.w_hi = conv_kernel_grad(&prev.h, &g_ai);
    grads.w_xf = conv_kernel_grad(x, &g_af);
    grads.w_hf = conv_kernel_grad(&prev.h, &g_af);
    grads.w_xo = conv_kernel_grad(x, &g_ao);
    grads.w_ho = conv_kernel_grad(&prev.h, &g_ao);
    grads.w_xc = conv_kernel_grad(x, &g_ac);
    grads.w_hc = conv_kernel_grad(&prev.h, &g_ac);
    grads.w_ci = ew2(&g_ai, &prev.c, |u, v| u * v);
    grads.w_cf = ew2(&g_af, &prev.c, |u, v| u * v);
    grads.w_co = ew2(&g_ao, c_t, |u, v| u * v);
    grads.b_i = channel_sums(&g_ai);
    grads.b_f = channel_sums(&g_af);
    grads.b_o = channel_sums(&g_ao);
    grads.b_c = channel_sums(&g_ac);
    Ok((state, grads))
}

/// Deterministic inverted-dropout mask: each element is 0 with probability
/// `rate`, else `1/(1-rate)`. The mask depends only on `(seed, stream)`, so a
/// fixed stream id yields the same mask regardless of what was drawn before.
pub fn dropout_mask(
    seed: u64,
    stream: u64,
    channels: usize,
    height: usize,
    width: usize,
    rate: f64,
) -> FeatureMap {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = 1.0 / (1.0 - rate);
    let data = (0..channels * height * width)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect();
    FeatureMap::from_vec(channels, height, width, data).expect("positive dims")
}

/// Fixed stream id for the dropout mask applied to layer `layer` (0 or 1) at
/// time step `t` (0-based), so prefixes of a sequence see identical masks.
pub fn dropout_stream(t: usize, layer: usize) -> u64 {
    (t as u64) * 2 + layer as u64
}

/// Run a two-layer stack over a sequence. Dropout is applied to each layer's
/// input in train mode only, as a seeded Bernoulli mask with inverted
/// rescaling; eval mode applies no mask. Returns per-step (layer1, layer2)
/// states.
pub fn stack_forward(
    x_seq: &[FeatureMap],
    p1: &ConvLSTMParams,
    p2: &ConvLSTMParams,
    dropout_rate: f64,
    seed: u64,
    mode: DropoutMode,
) -> Result<Vec<(ConvLSTMState, ConvLSTMState)>> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::config(format!(
            "dropout rate {dropout_rate} outside [0, 1)"
        )));
    }
    if p2.in_channels() != p1.hidden() {
        return Err(Error::config(format!(
            "layer 2 expects {} input channels but layer 1 produces {}",
            p2.in_channels(),
            p1.hidden()
        )));
    }
    let mut s1 = ConvLSTMState::zeros(p1.hidden(), p1.height(), p1.width());
    let mut s2 = ConvLSTMState::zeros(p2.hidden(), p2.height(), p2.width());
    let masked = |x: &FeatureMap, t: usize, layer: usize| -> FeatureMap {
        if mode == DropoutMode::Train && dropout_rate > 0.0 {
            let m = dropout_mask(
                seed,
                dropout_stream(t, layer),
                x.channels(),
                x.height(),
                x.width(),
                dropout_rate,
            );
            ew2(x, &m, |u, v| u * v)
        } else {
            x.clone()
        }
    };
    let mut out = Vec::with_capacity(x_seq.len());
    for (t, x) in x_seq.iter().enumerate() {
        let x1 = masked(x, t, 0);
        s1 = cell_step(&x1, &s1, p1)?;
        let x2 = masked(&s1.h, t, 1);
        s2 = cell_step(&x2, &s2, p2)?;
        out.push((s1.clone(), s2.clone()));
    }
    Ok(out)
}

/// 1x1 projection across channels followed by a sigmoid, yielding a
/// single-channel map in (0,1).
pub fn readout(h: &FeatureMap, weights: &[f64], bias: f64) -> Result<SaliencyMap> {
    if weights.len() != h.channels() {
        return Err(Error::config(format!(
            "readout has {} weights but feature map has {} channels",
            weights.len(),
            h.channels()
        )));
    }
    let mut out = SaliencyMap::new(h.height(), h.width());
    for y in 0..h.height() {
        for x in 0..h.width() {
            let mut acc = bias;
            for (c, &w) in weights.iter().enumerate() {
                acc += w * h.get(c, y, x);
            }
            out.set(y, x, sigmoid(acc));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_map(rng: &mut ChaCha12Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_params_halve_previous_cell() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let p = ConvLSTMParams::zeros(2, 3, 4, 4);
        let x = random_map(&mut rng, 2, 4, 4);
        let prev = ConvLSTMState {
            h: random_map(&mut rng, 3, 4, 4),
            c: random_map(&mut rng, 3, 4, 4),
        };
        let next = cell_step(&x, &prev, &p).unwrap();
        for (idx, &c0) in prev.c.data().iter().enumerate() {
            let want_c = 0.5 * c0;
            assert!((next.c.data()[idx] - want_c).abs() < 1e-15);
            assert!((next.h.data()[idx] - 0.5 * want_c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn all_zero_inputs_stay_zero() {
        let p = ConvLSTMParams::zeros(1, 2, 3, 3);
        let x = FeatureMap::new(1, 3, 3);
        let prev = ConvLSTMState::zeros(2, 3, 3);
        let next = cell_step(&x, &prev, &p).unwrap();
        assert!(next.h.data().iter().all(|&v| v == 0.0));
        assert!(next.c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = ConvLSTMParams::zeros(2, 3, 4, 4);
        let x = FeatureMap::new(3, 4, 4);
        let prev = ConvLSTMState::zeros(3, 4, 4);
        assert!(cell_step(&x, &prev, &p).is_err());
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let (ic, hc, h, w) = (2, 2, 4, 4);
        let x = random_map(&mut rng, ic, h, w);
        let prev = ConvLSTMState {
            h: random_map(&mut rng, hc, h, w),
            c: random_map(&mut rng, hc, h, w),
        };
        let p = ConvLSTMParams::seeded(ic, hc, h, w, &mut rng);
        let (_, grads) = cell_step_gradients(&x, &prev, &p).unwrap();

        let loss = |p: &ConvLSTMParams| -> f64 {
            cell_step(&x, &prev, p).unwrap().h.data().iter().sum()
        };
        let eps = 1e-4;
        for name in TENSOR_NAMES {
            let analytic = grads.tensor(name).unwrap().to_vec();
            let mut fd = vec![0.0; analytic.len()];
            for k in 0..analytic.len() {
                let mut pp = p.clone();
                pp.tensor_mut(name).unwrap()[k] += eps;
                let up = loss(&pp);
                let mut pm = p.clone();
                pm.tensor_mut(name).unwrap()[k] -= eps;
                let down = loss(&pm);
                fd[k] = (up - down) / (2.0 * eps);
            }
            let dot = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
            };
            let norm = |a: &[f64]| a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = dot(&analytic, &fd) / norm(&analytic).max(norm(&fd)).max(1e-12);
            assert!(rel < 1e-4, "{name}: relative error {rel}");
        }
    }

    #[test]
    fn hidden_magnitudes_stay_below_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let p = ConvLSTMParams::seeded(2, 3, 5, 5, &mut rng);
        let mut state = ConvLSTMState::zeros(3, 5, 5);
        for _ in 0..50 {
            let x = random_map(&mut rng, 2, 5, 5);
            let prev_c = state.c.clone();
            state = cell_step(&x, &state, &p).unwrap();
            for &v in state.h.data() {
                assert!(v.abs() < 1.0);
            }
            // cell growth is bounded per step
            for (c_new, c_old) in state.c.data().iter().zip(prev_c.data()) {
                assert!(c_new.abs() <= c_old.abs() + 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn stack_zero_dropout_train_equals_eval() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let p1 = ConvLSTMParams::seeded(2, 3, 4, 4, &mut rng);
        let p2 = ConvLSTMParams::seeded(3, 3, 4, 4, &mut rng);
        let seq: Vec<FeatureMap> = (0..4).map(|_| random_map(&mut rng, 2, 4, 4)).collect();
        let train = stack_forward(&seq, &p1, &p2, 0.0, 9, DropoutMode::Train).unwrap();
        let eval = stack_forward(&seq, &p1, &p2, 0.0, 9, DropoutMode::Eval).unwrap();
        for ((a1, a2), (b1, b2)) in train.iter().zip(&eval) {
            assert_eq!(a1, b1);
            assert_eq!(a2, b2);
        }
    }

    #[test]
    fn stack_same_seed_is_bitwise_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        let p1 = ConvLSTMParams::seeded(2, 3, 4, 4, &mut rng);
        let p2 = ConvLSTMParams::seeded(3, 3, 4, 4, &mut rng);
        let seq: Vec<FeatureMap> = (0..5).map(|_| random_map(&mut rng, 2, 4, 4)).collect();
        let a = stack_forward(&seq, &p1, &p2, 0.2, 77, DropoutMode::Train).unwrap();
        let b = stack_forward(&seq, &p1, &p2, 0.2, 77, DropoutMode::Train).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_keep_fraction_near_rate() {
        let m = dropout_mask(123, 0, 1, 250, 400, 0.2);
        let kept = m.data().iter().filter(|&&v| v != 0.0).count();
        let frac = kept as f64 / m.data().len() as f64;
        assert!((frac - 0.8).abs() < 0.01, "keep fraction {frac}");
        // surviving entries carry the inverted scale
        for &v in m.data() {
            assert!(v == 0.0 || (v - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn stack_rejects_bad_rate_and_mismatched_layers() {
        let p1 = ConvLSTMParams::zeros(2, 3, 4, 4);
        let p2 = ConvLSTMParams::zeros(4, 3, 4, 4);
        let seq = vec![FeatureMap::new(2, 4, 4)];
        assert!(stack_forward(&seq, &p1, &p2, 0.2, 1, DropoutMode::Eval).is_err());
        let p2_ok = ConvLSTMParams::zeros(3, 3, 4, 4);
        assert!(stack_forward(&seq, &p1, &p2_ok, 1.0, 1, DropoutMode::Eval).is_err());
    }

    #[test]
    fn readout_zero_gives_uniform_half() {
        let h = FeatureMap::new(3, 4, 4);
        let s = readout(&h, &[0.0, 0.0, 0.0], 0.0).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn readout_one_hot_selects_channel() {
        let mut rng = ChaCha12Rng::seed_from_u64(46);
        let h = random_map(&mut rng, 3, 4, 4);
        let s = readout(&h, &[0.0, 1.0, 0.0], 0.0).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert!((s.get(y, x) - sigmoid(h.get(1, y, x))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn readout_matches_dot_product_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(47);
        let h = random_map(&mut rng, 4, 5, 5);
        let weights: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = rng.random_range(-1.0..1.0);
        let s = readout(&h, &weights, bias).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let mut acc = bias;
                for c in 0..4 {
                    acc += weights[c] * h.get(c, y, x);
                }
                assert!((s.get(y, x) - sigmoid(acc)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn readout_length_mismatch_errors() {
        let h = FeatureMap::new(3, 4, 4);
        assert!(readout(&h, &[0.0; 2], 0.0).is_err());
    }
}
