//! Minimal dense-tensor substrate: channel-planar feature maps plus the
//! pooling, convolution, resampling, and pointwise operations the rest of the
//! pipeline composes.

use crate::error::{Error, Result};
use crate::image::Frame;

/// Dense rank-3 grid of real values, laid out channel-planar and row-major:
/// index (c, y, x) lives at `c*h*w + y*w + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Per-channel mean vector produced by [`global_avg_pool`].
pub type ChannelVector = Vec<f64>;

impl FeatureMap {
    /// All-zero map.
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        assert!(
            channels > 0 && height > 0 && width > 0,
            "feature map dims must be positive"
        );
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::dim("feature map dims must be positive".to_string()));
        }
        if data.len() != channels * height * width {
            return Err(Error::dim(format!(
                "feature data length {} != {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut m = FeatureMap::new(channels, height, width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    m.set(c, y, x, f(c, y, x));
                }
            }
        }
        m
    }

    /// Single-channel map holding a grayscale frame scaled to [0,1].
    pub fn from_frame(frame: &Frame) -> Self {
        let data = frame.data().iter().map(|&p| p as f64 / 255.0).collect();
        FeatureMap::from_vec(1, frame.height(), frame.width(), data).expect("frame dims valid")
    }

    /// Two-channel map holding a pair of grayscale frames (same dims),
    /// channel 0 = `a`, channel 1 = `b`.
    pub fn from_frame_pair(a: &Frame, b: &Frame) -> Result<Self> {
        if a.height() != b.height() || a.width() != b.width() {
            return Err(Error::dim(format!(
                "frame pair dims {}x{} vs {}x{}",
                a.height(),
                a.width(),
                b.height(),
                b.width()
            )));
        }
        let mut data = Vec::with_capacity(2 * a.height() * a.width());
        data.extend(a.data().iter().map(|&p| p as f64 / 255.0));
        data.extend(b.data().iter().map(|&p| p as f64 / 255.0));
        FeatureMap::from_vec(2, a.height(), a.width(), data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// One channel plane as a slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        let data = self.data.iter().map(|&v| f(v)).collect();
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }
}

/// Weights of a bank of 3x3 convolution kernels with one bias per output
/// channel. Kernel element (o, i, ky, kx) lives at
/// `((o*in + i)*3 + ky)*3 + kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvParams {
    /// All-zero kernels and biases.
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        assert!(
            in_channels > 0 && out_channels > 0,
            "conv channel counts must be positive"
        );
        ConvParams {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn from_parts(
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != out_channels * in_channels * 9 {
            return Err(Error::config(format!(
                "kernel weight length {} != {}x{}x3x3",
                weights.len(),
                out_channels,
                in_channels
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::config(format!(
                "bias length {} != {} output channels",
                bias.len(),
                out_channels
            )));
        }
        Ok(ConvParams {
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    /// Identity bank: center tap 1 on the matching input channel, zero bias.
    /// Requires `in == out`.
    pub fn identity(channels: usize) -> Self {
        let mut p = ConvParams::zeros(channels, channels);
        for c in 0..channels {
            p.set_weight(c, c, 1, 1, 1.0);
        }
        p
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn set_weight(&mut self, o: usize, i: usize, ky: usize, kx: usize, v: f64) {
        self.weights[((o * self.in_channels + i) * 3 + ky) * 3 + kx] = v;
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}

/// Activation applied after the convolution's bias add.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    None,
}

/// Resampling mode for [`resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    /// Nearest-neighbor replication; target dims must be >= source dims.
    NearestUp,
    /// 2x2 mean pooling; source dims must be even and target exactly half.
    AvgDown2,
}

/// Elementwise combination for [`pointwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointwiseOp {
    Mul,
    Add,
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-channel spatial mean: element `c` is the average of channel `c` over
/// all `h*w` positions.
pub fn global_avg_pool(x: &FeatureMap) -> ChannelVector {
    let n = (x.height() * x.width()) as f64;
    (0..x.channels())
        .map(|c| x.channel(c).iter().sum::<f64>() / n)
        .collect()
}

/// 3x3 cross-correlation with zero padding 1 (output spatial dims equal the
/// input's), plus per-channel bias and activation.
pub fn conv2d_3x3(x: &FeatureMap, p: &ConvParams, activation: Activation) -> Result<FeatureMap> {
    if p.in_channels() != x.channels() {
        return Err(Error::config(format!(
            "conv expects {} input channels, feature map has {}",
            p.in_channels(),
            x.channels()
        )));
    }
    let (h, w) = (x.height(), x.width());
    let mut out = FeatureMap::new(p.out_channels(), h, w);
    for o in 0..p.out_channels() {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = p.bias()[o];
                for i in 0..x.channels() {
                    for ky in 0..3usize {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = xx as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            acc += x.get(i, sy as usize, sx as usize) * p.weight(o, i, ky, kx);
                        }
                    }
                }
                let v = match activation {
                    Activation::Sigmoid => sigmoid(acc),
                    Activation::Relu => acc.max(0.0),
                    Activation::None => acc,
                };
                out.set(o, y, xx, v);
            }
        }
    }
    Ok(out)
}

/// Spatial resampling; channel count is preserved.
pub fn resample(
    x: &FeatureMap,
    target_h: usize,
    target_w: usize,
    mode: ResampleMode,
) -> Result<FeatureMap> {
    match mode {
        ResampleMode::NearestUp => {
            if target_h < x.height() || target_w < x.width() {
                return Err(Error::dim(format!(
                    "nearest_up target {}x{} smaller than source {}x{}",
                    target_h,
                    target_w,
                    x.height(),
                    x.width()
                )));
            }
            let mut out = FeatureMap::new(x.channels(), target_h, target_w);
            for c in 0..x.channels() {
                for y in 0..target_h {
                    let sy = y * x.height() / target_h;
                    for xx in 0..target_w {
                        let sx = xx * x.width() / target_w;
                        out.set(c, y, xx, x.get(c, sy, sx));
                    }
                }
            }
            Ok(out)
        }
        ResampleMode::AvgDown2 => {
            if x.height() % 2 != 0 || x.width() % 2 != 0 {
                return Err(Error::dim(format!(
                    "avg_down2 needs even source dims, got {}x{}",
                    x.height(),
                    x.width()
                )));
            }
            if target_h != x.height() / 2 || target_w != x.width() / 2 {
                return Err(Error::dim(format!(
                    "avg_down2 target must be {}x{}, got {}x{}",
                    x.height() / 2,
                    x.width() / 2,
                    target_h,
                    target_w
                )));
            }
            let mut out = FeatureMap::new(x.channels(), target_h, target_w);
            for c in 0..x.channels() {
                for y in 0..target_h {
                    for xx in 0..target_w {
                        let s = x.get(c, 2 * y, 2 * xx)
                            + x.get(c, 2 * y, 2 * xx + 1)
                            + x.get(c, 2 * y + 1, 2 * xx)
                            + x.get(c, 2 * y + 1, 2 * xx + 1);
                        out.set(c, y, xx, s / 4.0);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Elementwise combination of two same-shape maps.
pub fn pointwise(a: &FeatureMap, b: &FeatureMap, op: PointwiseOp) -> Result<FeatureMap> {
    if !a.same_shape(b) {
        return Err(Error::dim(format!(
            "pointwise shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&u, &v)| match op {
            PointwiseOp::Mul => u * v,
            PointwiseOp::Add => u + v,
        })
        .collect();
    FeatureMap::from_vec(a.channels(), a.height(), a.width(), data)
}

/// Stack two maps with identical spatial dims along the channel axis
/// (`a`'s channels first).
pub fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::dim(format!(
            "concat spatial dims {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    FeatureMap::from_vec(a.channels() + b.channels(), a.height(), a.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_map(rng: &mut ChaCha12Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::from_fn(c, h, w, |_, _, _| rng.random_range(-2.0..2.0))
    }

    fn random_params(rng: &mut ChaCha12Rng, ic: usize, oc: usize) -> ConvParams {
        let weights = (0..oc * ic * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = (0..oc).map(|_| rng.random_range(-1.0..1.0)).collect();
        ConvParams::from_parts(ic, oc, weights, bias).unwrap()
    }

    /// Direct four-nested-loop convolution, written independently of the
    /// production routine.
    fn conv_reference(x: &FeatureMap, p: &ConvParams) -> FeatureMap {
        let (h, w) = (x.height(), x.width());
        let mut out = FeatureMap::new(p.out_channels(), h, w);
        for o in 0..p.out_channels() {
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let mut acc = p.bias()[o];
                    for i in 0..p.in_channels() {
                        for ky in -1..=1isize {
                            for kx in -1..=1isize {
                                let (sy, sx) = (y + ky, xx + kx);
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    acc += x.get(i, sy as usize, sx as usize)
                                        * p.weight(o, i, (ky + 1) as usize, (kx + 1) as usize);
                                }
                            }
                        }
                    }
                    out.set(o, y as usize, xx as usize, acc);
                }
            }
        }
        out
    }

    #[test]
    fn pool_constant_channel() {
        let m = FeatureMap::from_fn(1, 3, 5, |_, _, _| 5.0);
        assert_eq!(global_avg_pool(&m), vec![5.0]);
    }

    #[test]
    fn pool_zero_map() {
        let m = FeatureMap::new(3, 4, 4);
        assert_eq!(global_avg_pool(&m), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_hand_summed() {
        let m = FeatureMap::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // (1+2+3+4)/4
        assert_eq!(global_avg_pool(&m), vec![2.5]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = random_map(&mut rng, 2, 4, 5);
        let y = conv2d_3x3(&x, &ConvParams::identity(2), Activation::None).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn conv_zero_kernel_sigmoid_bias() {
        let x = FeatureMap::new(1, 3, 3);
        let mut p = ConvParams::zeros(1, 1);
        p.bias_mut()[0] = 0.7;
        let y = conv2d_3x3(&x, &p, Activation::Sigmoid).unwrap();
        let expect = sigmoid(0.7);
        for &v in y.data() {
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn conv_matches_naive_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..20 {
            let x = random_map(&mut rng, 2, 4, 4);
            let p = random_params(&mut rng, 2, 3);
            let got = conv2d_3x3(&x, &p, Activation::None).unwrap();
            let want = conv_reference(&x, &p);
            for (g, w) in got.data().iter().zip(want.data()) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_channel_mismatch_errors() {
        let x = FeatureMap::new(2, 4, 4);
        let p = ConvParams::zeros(3, 1);
        assert!(conv2d_3x3(&x, &p, Activation::None).is_err());
    }

    #[test]
    fn conv_linear_in_input_without_bias() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let x = random_map(&mut rng, 2, 5, 5);
        let y = random_map(&mut rng, 2, 5, 5);
        let mut p = random_params(&mut rng, 2, 2);
        p.bias_mut().fill(0.0);
        let (alpha, beta) = (0.75, -1.25);
        let mixed = pointwise(
            &x.map(|v| alpha * v),
            &y.map(|v| beta * v),
            PointwiseOp::Add,
        )
        .unwrap();
        let lhs = conv2d_3x3(&mixed, &p, Activation::None).unwrap();
        let cx = conv2d_3x3(&x, &p, Activation::None).unwrap();
        let cy = conv2d_3x3(&y, &p, Activation::None).unwrap();
        for ((l, a), b) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            assert!((l - (alpha * a + beta * b)).abs() < 1e-10);
        }
    }

    #[test]
    fn nearest_up_replicates_single_value() {
        let m = FeatureMap::from_vec(1, 1, 1, vec![3.25]).unwrap();
        let up = resample(&m, 7, 5, ResampleMode::NearestUp).unwrap();
        assert_eq!(up.shape(), (1, 7, 5));
        assert!(up.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn avg_down2_means_blocks() {
        let m = FeatureMap::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = resample(&m, 1, 1, ResampleMode::AvgDown2).unwrap();
        assert_eq!(d.data(), &[2.5]);
    }

    #[test]
    fn up_then_down_of_constant_is_identity() {
        let m = FeatureMap::from_fn(2, 3, 4, |c, _, _| c as f64 + 0.5);
        let up = resample(&m, 6, 8, ResampleMode::NearestUp).unwrap();
        let down = resample(&up, 3, 4, ResampleMode::AvgDown2).unwrap();
        assert_eq!(m, down);
    }

    #[test]
    fn resample_rejects_bad_targets() {
        let m = FeatureMap::new(1, 4, 4);
        assert!(resample(&m, 3, 4, ResampleMode::NearestUp).is_err());
        assert!(resample(&m, 3, 2, ResampleMode::AvgDown2).is_err());
        let odd = FeatureMap::new(1, 3, 4);
        assert!(resample(&odd, 1, 2, ResampleMode::AvgDown2).is_err());
    }

    #[test]
    fn pointwise_identities() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let x = random_map(&mut rng, 2, 3, 3);
        let ones = FeatureMap::from_fn(2, 3, 3, |_, _, _| 1.0);
        let zeros = FeatureMap::new(2, 3, 3);
        assert_eq!(pointwise(&x, &ones, PointwiseOp::Mul).unwrap(), x);
        assert_eq!(pointwise(&x, &zeros, PointwiseOp::Add).unwrap(), x);
    }

    #[test]
    fn pointwise_mul_commutes_bitwise() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let a = random_map(&mut rng, 3, 4, 4);
        let b = random_map(&mut rng, 3, 4, 4);
        let ab = pointwise(&a, &b, PointwiseOp::Mul).unwrap();
        let ba = pointwise(&b, &a, PointwiseOp::Mul).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn pointwise_shape_mismatch_errors() {
        let a = FeatureMap::new(1, 2, 2);
        let b = FeatureMap::new(1, 2, 3);
        assert!(pointwise(&a, &b, PointwiseOp::Add).is_err());
    }

    #[test]
    fn pool_invariant_under_nearest_up_of_constant_channels() {
        let m = FeatureMap::from_fn(3, 2, 2, |c, _, _| (c as f64) * 1.5 - 1.0);
        let up = resample(&m, 6, 6, ResampleMode::NearestUp).unwrap();
        let (a, b) = (global_avg_pool(&m), global_avg_pool(&up));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn ops_preserve_finiteness() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let x = random_map(&mut rng, 2, 4, 4);
        let p = random_params(&mut rng, 2, 2);
        for act in [Activation::Sigmoid, Activation::Relu, Activation::None] {
            assert!(conv2d_3x3(&x, &p, act).unwrap().data().iter().all(|v| v.is_finite()));
        }
        let up = resample(&x, 8, 8, ResampleMode::NearestUp).unwrap();
        assert!(up.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn concat_stacks_channels() {
        let a = FeatureMap::from_fn(2, 2, 2, |c, y, x| (c * 4 + y * 2 + x) as f64);
        let b = FeatureMap::from_fn(1, 2, 2, |_, y, x| 100.0 + (y * 2 + x) as f64);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), (3, 2, 2));
        assert_eq!(c.get(0, 1, 1), 3.0);
        assert_eq!(c.get(2, 0, 1), 101.0);
    }
}
